//! Acceptance suite.  Runs as a plain binary (no libtest harness) so that the one-line
//! verdict of every criterion is always printed, then exits non-zero if any outcome
//! differs from the expected one.
//!
//! Criteria 9 and 10 cannot be met as stated.  They are evaluated exactly as stated, print
//! FAIL, and the suite asserts that they fail for the documented reason (see README).

use std::f64::consts::PI;
use std::time::Instant;

use gns_core::constants::{
    c_gn_dp, compute_constants, compute_constants_with, cross_check_constants, optimizer_gn_terms, ConstantSet,
    SigmaStarRule,
};
use gns_core::family::{
    family_grid, family_members, generate_family, normalized_member, reference_mixture, FamilyDescriptor, FamilyKind,
};
use gns_core::flow::{run, verify_ode_relations, FlowControls};
use gns_core::functionals::{
    ck_bound, ck_variant_bound, gn_deficit, improved_eep_terms, l1_bounds, normalize_to_sigma_star,
};
use gns_core::odemodel::{decay_threshold, gronwall_report, integrate_system, OdeModel};
use gns_core::profiles::{barenblatt, optimal_f, working_radius};
use gns_core::radial::{build_grid, RadialFunction};
use gns_core::{derive_params, derive_params_from_m, GnsError, Mass};
use serde_json::Value;

// Criterion 1
const CLOSED_FORM_REL: f64 = 1e-10;
const ORACLE_REL: f64 = 1e-4;
const BUDGET_1: f64 = 1.0;
// Criterion 2
const RELATION_REL: f64 = 1e-10;
const BUDGET_2: f64 = 1.0;
// Criterion 3
const SATURATION_ABS: f64 = 1e-7;
const SATURATION_NODES: usize = 4000;
const SATURATION_RADIUS: f64 = 1000.0;
const BUDGET_3: f64 = 10.0;
// Criterion 4
const EQUALITY_DEFICIT: f64 = 1e-6;
const LAMBDA_ABS: f64 = 1e-6;
const BUDGET_4: f64 = 5.0;
// Criteria 5 to 7
const FAMILY_TRIALS: usize = 200;
const FAMILY_SEED: u64 = 2024;
const GN_SLACK: f64 = 1e-8;
const CK_SLACK: f64 = 1e-9;
const CK_EQUALITY: f64 = 1e-10;
const EEP_SLACK: f64 = 1e-8;
const EEP_ACTIVE_ENTROPY: f64 = 1e-6;
const BUDGET_5: f64 = 60.0;
const BUDGET_6: f64 = 30.0;
const BUDGET_7: f64 = 30.0;
// Criterion 8
const FLOW_CELLS: usize = 2000;
const FLOW_T_MAX: f64 = 2.0;
const FLOW_SAVE_DT: f64 = 0.01;
const MASS_DRIFT: f64 = 1e-6;
const SIGMA_INCREASE: f64 = 1e-10;
const ENVELOPE_SLACK: f64 = 1e-2;
const ENTROPY_LAW: f64 = 5e-2;
const REMAINDER_FLOOR: f64 = -1e-10;
const BUDGET_8: f64 = 120.0;
// Criterion 9
const CONE_SLACK: f64 = 1e-9;
const ODE_ENVELOPE: f64 = 1e-10;
const GRONWALL_RESIDUAL: f64 = 1e-8;
const BUDGET_9: f64 = 1.0;
// Criterion 10
const CORRUPTED_TARGET: f64 = 0.398;
const CORRUPTED_REL: f64 = 0.05;
const BUDGET_10: f64 = 5.0;

struct Outcome {
    id: u32,
    passed: bool,
    expected: bool,
    summary: String,
    notes: Vec<String>,
}

struct Gate {
    ok: bool,
    notes: Vec<String>,
}

impl Gate {
    fn new() -> Gate {
        Gate { ok: true, notes: Vec::new() }
    }
    fn at_most(&mut self, what: &str, v: f64, tol: f64) {
        let ok = v <= tol;
        self.ok &= ok;
        self.notes.push(format!("{} {what} = {v:.6e} (<= {tol:.1e})", if ok { "ok  " } else { "FAIL" }));
    }
    fn at_least(&mut self, what: &str, v: f64, tol: f64) {
        let ok = v >= tol;
        self.ok &= ok;
        self.notes.push(format!("{} {what} = {v:.6e} (>= {tol:.1e})", if ok { "ok  " } else { "FAIL" }));
    }
    fn note(&mut self, s: String) {
        self.notes.push(format!("     {s}"));
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn fixture() -> Value {
    serde_json::from_str(include_str!("oracles/reference_values.json")).unwrap()
}

fn oracle(d: u32, p: f64, key: &str) -> f64 {
    fixture()[format!("constants d={d} p={p}")][key].as_str().unwrap().parse().unwrap()
}

fn reference() -> ConstantSet {
    compute_constants(&derive_params(2, 2.0, Mass::Reference).unwrap()).unwrap()
}

fn budget(g: &mut Gate, start: Instant, limit: f64) {
    g.at_most("runtime [s]", start.elapsed().as_secs_f64(), limit);
}

fn criterion_1() -> Gate {
    let t = Instant::now();
    let mut g = Gate::new();
    let cs = reference();
    g.at_most("M* vs pi/3", rel(cs.m_star, PI / 3.0), CLOSED_FORM_REL);
    g.at_most("K_M vs pi/6", rel(cs.k_m, PI / 6.0), CLOSED_FORM_REL);
    g.at_most("int B_1^m vs pi/2", rel(cs.int_b1_m, PI / 2.0), CLOSED_FORM_REL);
    g.at_most("kappa_1 vs 2/pi", rel(cs.kappa_1, 2.0 / PI), CLOSED_FORM_REL);
    g.at_most("kappa_2 vs 3/8", rel(cs.kappa_2, 0.375), CLOSED_FORM_REL);
    g.at_most("C_md vs 3/(8 pi)", rel(cs.c_md, 3.0 / (8.0 * PI)), CLOSED_FORM_REL);
    g.at_most("sigma* vs oracle", rel(cs.sigma_star, oracle(2, 2.0, "sigma_star")), ORACLE_REL);
    g.at_most("sigma* vs (8/3)^(4/3)", rel(cs.sigma_star, (8.0f64 / 3.0).powf(4.0 / 3.0)), CLOSED_FORM_REL);
    g.at_most("K_pd vs oracle", rel(cs.k_pd, oracle(2, 2.0, "k_pd")), ORACLE_REL);
    g.at_most("C_GN vs oracle", rel(cs.c_gn, oracle(2, 2.0, "c_gn")), ORACLE_REL);
    g.at_most("C_pd vs oracle", rel(cs.c_pd, oracle(2, 2.0, "c_pd")), ORACLE_REL);
    g.at_most("C_CK vs oracle", rel(cs.c_ck, oracle(2, 2.0, "c_ck")), ORACLE_REL);
    g.at_most("frak_c vs oracle", rel(cs.frak_c, oracle(2, 2.0, "frak_c")), ORACLE_REL);
    budget(&mut g, t, BUDGET_1);
    g
}

fn criterion_2() -> Gate {
    let t = Instant::now();
    let mut g = Gate::new();
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for d in 2..=6u32 {
        let df = d as f64;
        let p_hi = if d == 2 { 6.0 } else { df / (df - 2.0) };
        for i in 0..10 {
            // Chebyshev-like spacing, clustered toward both ends of the range
            let s = 0.5 - 0.5 * (PI * (i as f64 + 0.5) / 10.0).cos();
            let p = 1.0 + s * (p_hi - 1.0);
            let cs = compute_constants(&derive_params(d, p, Mass::Reference).unwrap()).unwrap();
            let gamma = (df + 2.0 - p * (df - 2.0)) / (df - p * (df - 4.0));
            let alpha = df / p + 2.0 - df;
            let beta = df * (p - 1.0) / (2.0 * p);
            let sum = alpha + beta;
            let rhs = sum / (alpha.powf(alpha / sum) * beta.powf(beta / sum));
            worst = worst.max(rel(cs.k_pd * cs.c_gn.powf(2.0 * p * gamma), rhs));
            count += 1;
        }
    }
    assert_eq!(count, 50);
    g.at_most("max rel. residual, 50 pairs", worst, RELATION_REL);
    budget(&mut g, t, BUDGET_2);
    g
}

fn criterion_3() -> Gate {
    let t = Instant::now();
    let mut g = Gate::new();
    for (d, p) in [(2, 2.0), (2, 3.0), (3, 2.0), (4, 2.0)] {
        let terms = optimizer_gn_terms(d, p, SATURATION_NODES, SATURATION_RADIUS).unwrap();
        g.at_most(
            &format!("|quotient - C_GN| d={d} p={p}"),
            (terms.quotient - c_gn_dp(d, p).unwrap()).abs(),
            SATURATION_ABS,
        );
        if (d, p) == (2, 2.0) {
            g.at_most("|grad f|^2 vs 2pi/3", (terms.grad - 2.0 * PI / 3.0).abs(), SATURATION_ABS);
            g.at_most("|f|_3^3 vs pi/2", (terms.lp1 - PI / 2.0).abs(), SATURATION_ABS);
            g.at_most("|f|_4^4 vs pi/3", (terms.l2p - PI / 3.0).abs(), SATURATION_ABS);
        }
    }
    budget(&mut g, t, BUDGET_3);
    g
}

/// Deficit, normalizing factor and the two reference factors for the equality case.
fn equality_case(rule: SigmaStarRule) -> (f64, f64, f64, f64) {
    let params = derive_params(2, 2.0, Mass::Reference).unwrap();
    let cs = compute_constants_with(&params, rule).unwrap();
    let grid = build_grid(2, 4000, working_radius(&params, cs.m_star, 4.0 * cs.sigma_star), 2.0).unwrap();
    let f = optimal_f(&params, cs.m_star, 1.0, &grid).unwrap();
    let (fn_, lambda) = normalize_to_sigma_star(&f, &cs).unwrap();
    let deficit = gn_deficit(&fn_, &cs).unwrap().gn_deficit;
    let minimizer = cross_check_constants(&params).unwrap().oracle_lambda;
    (deficit, lambda, cs.sigma_star.powf(-0.5), minimizer)
}

fn criterion_4_gate(rule: SigmaStarRule) -> Gate {
    let t = Instant::now();
    let mut g = Gate::new();
    let (deficit, lambda, target, minimizer) = equality_case(rule);
    g.at_most("|deficit|", deficit.abs(), EQUALITY_DEFICIT);
    g.at_most("|lambda - sigma*^(-1/2)|", (lambda - target).abs(), LAMBDA_ABS);
    g.at_most("|lambda - dilation minimizer|", (lambda - minimizer).abs(), LAMBDA_ABS);
    g.at_most("|lambda - oracle minimizer|", (lambda - oracle(2, 2.0, "lambda_star")).abs(), LAMBDA_ABS);
    g.note(format!("lambda = {lambda:.10}"));
    budget(&mut g, t, BUDGET_4);
    g
}

fn criterion_4() -> Gate {
    criterion_4_gate(SigmaStarRule::Corrected)
}

fn family() -> (ConstantSet, Vec<RadialFunction>, std::sync::Arc<gns_core::radial::RadialGrid>) {
    let cs = reference();
    let grid = family_grid(&cs.params, 2000, 2.0).unwrap();
    let desc = FamilyDescriptor { kind: FamilyKind::Mixed, trials: FAMILY_TRIALS, seed: FAMILY_SEED };
    let members = generate_family(&desc, &cs.params, &grid).unwrap();
    (cs, members, grid)
}

fn criterion_5() -> Gate {
    let t = Instant::now();
    let mut g = Gate::new();
    let cs = reference();
    let grid = family_grid(&cs.params, 2000, 2.0).unwrap();
    let desc = FamilyDescriptor { kind: FamilyKind::Mixed, trials: FAMILY_TRIALS, seed: FAMILY_SEED };
    let (mut main_gap, mut l1_gap, mut ck) = (f64::INFINITY, f64::INFINITY, f64::INFINITY);
    let mut normalization: f64 = 0.0;
    for member in family_members(&desc, &cs.params) {
        let (f, _) = normalized_member(&member, &cs, &grid).unwrap();
        let rep = gn_deficit(&f, &cs).unwrap();
        normalization = normalization.max((rep.matched.sigma / cs.sigma_star - 1.0).abs());
        let cb = l1_bounds(&f, &cs).unwrap();
        main_gap = main_gap.min(rep.gn_deficit - rep.improvement_bound);
        l1_gap = l1_gap.min(rep.gn_deficit - cb.deficit_lower);
        ck = ck.min(rep.manifold_distance - cb.distance_lower);
    }
    g.at_least("min deficit - C_pd R^2/M^gamma", main_gap, -GN_SLACK);
    g.at_least("min deficit - frak_c M^(gamma-4) L1^4", l1_gap, -GN_SLACK);
    g.at_least("min R - C_CK M^(gamma-2) L1^2", ck, -GN_SLACK);
    // normalization uses closed-form moments; the grid value only reflects quadrature error,
    // which the u'' jump at bump edges keeps near 1e-4
    g.note(format!("max |sigma/sigma* - 1| on the grid after normalization = {normalization:.2e}"));
    assert!(normalization < 1e-3, "normalization error {normalization:.3e}");
    budget(&mut g, t, BUDGET_5);
    g
}

fn criterion_6() -> Gate {
    let t = Instant::now();
    let mut g = Gate::new();
    let (cs, members, grid) = family();
    let (mut main, mut variant) = (f64::INFINITY, f64::INFINITY);
    for u in &members {
        let (a, b) = ck_bound(u, &cs).unwrap();
        let (c, d) = ck_variant_bound(u, &cs).unwrap();
        main = main.min(a - b);
        variant = variant.min(c - d);
    }
    g.at_least("min lhs - rhs", main, -CK_SLACK);
    g.at_least("min lhs - rhs, variant", variant, -CK_SLACK);
    let mut worst: f64 = 0.0;
    for (mass, sigma) in [(1.0, 1.0), (cs.m_star, 3.0), (2.0, 0.4)] {
        let b = barenblatt(&cs.params, mass, sigma, &grid).unwrap();
        let (a1, b1) = ck_bound(&b, &cs).unwrap();
        let (a2, b2) = ck_variant_bound(&b, &cs).unwrap();
        worst = worst.max((a1 - b1).abs()).max((a2 - b2).abs());
    }
    g.at_most("max |lhs - rhs| at Barenblatt", worst, CK_EQUALITY);
    budget(&mut g, t, BUDGET_6);
    g
}

fn criterion_7() -> Gate {
    let t = Instant::now();
    let mut g = Gate::new();
    let (cs, members, _) = family();
    let (mut residual, mut gain) = (f64::INFINITY, f64::INFINITY);
    for u in &members {
        let e = improved_eep_terms(u, &cs).unwrap();
        residual = residual.min(e.residual);
        if e.entropy > EEP_ACTIVE_ENTROPY {
            gain = gain.min(e.improvement);
        }
    }
    g.at_least("min I - 4F - C_md F^2/sigma^a", residual, -EEP_SLACK);
    g.at_least("min improvement term (F > 1e-6)", gain, f64::MIN_POSITIVE);
    budget(&mut g, t, BUDGET_7);
    g
}

fn criterion_8() -> Gate {
    let t = Instant::now();
    let mut g = Gate::new();
    let params = derive_params_from_m(2, 0.75, Mass::Reference).unwrap();
    let cs = compute_constants(&params).unwrap();
    let grid = build_grid(2, FLOW_CELLS, working_radius(&params, params.mass, 4.0), 2.0).unwrap();
    let u0 = reference_mixture(&params).build(&params, &grid).unwrap();
    let int_u0_m = u0.powf(params.m).integrate(0).unwrap();
    let trace = run(&cs, &u0, FLOW_T_MAX, FLOW_SAVE_DT, FlowControls::default()).unwrap();
    assert_eq!(trace.snapshots.len(), 201);
    let rep = verify_ode_relations(&trace, &cs).unwrap();
    let a = params.entropy_sigma_exponent();
    g.at_most("mass drift", trace.mass_drift(), MASS_DRIFT);
    g.at_most("sigma increase", trace.sigma_increase(), SIGMA_INCREASE);
    g.at_most("F(t)/(F(0)e^-4t) - 1", trace.envelope_excess(), ENVELOPE_SLACK);
    g.at_least(
        "sigma_inf^a - lower bound",
        trace.sigma_infinity_estimate(&cs).powf(a) - trace.sigma_infinity_bound(&cs, int_u0_m),
        0.0,
    );
    g.at_most("|dF/dt + I| / max I", rep.entropy_law, ENTROPY_LAW);
    g.at_least("min remainder", trace.min_remainder(), REMAINDER_FLOOR);
    budget(&mut g, t, BUDGET_8);
    g
}

fn criterion_9() -> Gate {
    let t = Instant::now();
    let mut g = Gate::new();
    let params = derive_params_from_m(2, 0.75, Mass::Reference).unwrap();
    let model = OdeModel::new(&compute_constants(&params).unwrap());
    let j0 = 4.0 + 3.0 / (8.0 * PI);
    let traj = integrate_system(&model, 1.0, 1.0, j0, 10.0).unwrap();
    g.at_least("min (j - 4f)", traj.min_cone_gap(), -CONE_SLACK);
    g.at_most("max (f - e^-4t)", traj.envelope_excess(), ODE_ENVELOPE);
    g.at_least("sigma_inf", traj.last().sigma, f64::MIN_POSITIVE);
    match gronwall_report(&traj) {
        Ok(rep) => g.at_most("Gronwall residual", rep.residual_a.max(rep.residual_b), GRONWALL_RESIDUAL),
        Err(e @ GnsError::NotConverged { .. }) => {
            g.ok = false;
            g.note(format!("FAIL gronwall_report: {e}"));
        }
        Err(e) => panic!("unexpected error {e}"),
    }
    let threshold = decay_threshold(&model, 1.0, 1.0).unwrap();
    g.note(format!("j0 = {j0:.9}, decay threshold j0* = {threshold:.9}, final f = {:.6e}", traj.last().f));
    // Documented cause: the prescribed start lies below the decay threshold of the model, so
    // the trajectory leaves the cone j >= 4f and f stalls at a positive value.
    assert!(threshold > j0 + 1e-3, "start no longer below the decay threshold");
    assert!(traj.min_cone_gap() < -1e-3 && traj.last().f > 1e-4);
    budget(&mut g, t, BUDGET_9);
    g
}

fn criterion_10() -> Gate {
    let t = Instant::now();
    let mut g = Gate::new();
    let corrupted = criterion_4_gate(SigmaStarRule::Uncorrected);
    let (deficit, ..) = equality_case(SigmaStarRule::Uncorrected);
    g.at_least("criterion 4 fails under the uncorrected numerator", if corrupted.ok { 0.0 } else { 1.0 }, 1.0);
    g.at_most("|deficit - 0.398| / 0.398", rel(deficit, CORRUPTED_TARGET), CORRUPTED_REL);
    // Documented cause: with both the normalization and K_pd taken from the uncorrected
    // numerator the deficit is 1.3722, far from 0.398.
    assert!(!corrupted.ok && (deficit - 1.3722).abs() < 1e-3, "corrupted deficit {deficit}");
    budget(&mut g, t, BUDGET_10);
    g
}

/// Id, name, body and whether the criterion is expected to pass.
type Row = (u32, &'static str, fn() -> Gate, bool);

fn main() {
    let table: [Row; 10] = [
        (1, "constants reference pack", criterion_1, true),
        (2, "K_pd <-> C_GN relation", criterion_2, true),
        (3, "optimal function saturation", criterion_3, true),
        (4, "equality case", criterion_4, true),
        (5, "GN stability, family sweep", criterion_5, true),
        (6, "Csiszar-Kullback bounds", criterion_6, true),
        (7, "improved entropy production", criterion_7, true),
        (8, "flow run", criterion_8, true),
        (9, "ODE comparison model", criterion_9, false),
        (10, "negative control", criterion_10, false),
    ];
    let mut outcomes = Vec::new();
    for (id, name, f, expected) in table {
        let start = Instant::now();
        let gate = match std::panic::catch_unwind(f) {
            Ok(g) => g,
            Err(_) => Gate { ok: !expected, notes: vec!["FAIL panicked (documented cause no longer holds)".into()] },
        };
        let passed = gate.ok;
        let verdict = if passed { "PASS" } else { "FAIL" };
        let tag = if passed == expected { "" } else { "  <-- UNEXPECTED" };
        let doc = if !expected && !passed { " (documented)" } else { "" };
        outcomes.push(Outcome {
            id,
            passed,
            expected,
            summary: format!(
                "criterion {id:>2} {name:<30} {verdict}{doc} [{:.2}s]{tag}",
                start.elapsed().as_secs_f64()
            ),
            notes: gate.notes,
        });
    }
    for o in &outcomes {
        println!("{}", o.summary);
        for n in &o.notes {
            println!("      {n}");
        }
    }
    let unexpected: Vec<u32> = outcomes.iter().filter(|o| o.passed != o.expected).map(|o| o.id).collect();
    let passed = outcomes.iter().filter(|o| o.passed).count();
    println!("acceptance: {passed}/10 criteria pass; unexpected outcomes: {unexpected:?}");
    if !unexpected.is_empty() {
        std::process::exit(1);
    }
}
