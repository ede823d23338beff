//! The verification suite: ten numbered criteria, each a set of gated checks plus
//! informational measurements, with a runtime budget.

use std::f64::consts::PI;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::constants::{
    c_gn_dp, compute_constants_with, cross_check_constants_with, dilation_optimum, optimizer_gn_terms, ConstantSet,
    QuadratureSettings, SigmaStarRule,
};
use crate::error::{GnsError, Result};
use crate::family::{
    family_grid, family_members, normalized_member, reference_mixture, FamilyDescriptor, FamilyKind, Member,
};
use crate::flow::{run as run_flow, verify_ode_relations, FlowControls};
use crate::functionals::{
    ck_bound, ck_variant_bound, gn_deficit, improved_eep_terms, l1_bounds, normalize_to_sigma_star,
};
use crate::odemodel::{decay_threshold, gronwall_report, integrate_system, OdeModel};
use crate::params::{derive_params, derive_params_from_m, Mass};
use crate::profiles::{barenblatt, optimal_f, working_radius};
use crate::radial::{build_grid, RadialFunction, RadialGrid};

/// High-precision reference values shipped with the crate.
pub const REFERENCE_VALUES: &str = include_str!("../tests/oracles/reference_values.json");

/// Deficit the corrupted normalization is expected to produce at `(d, p) = (2, 2)`.
pub const CORRUPTED_DEFICIT_TARGET: f64 = 0.398;
/// Relative tolerance read into the "approximately" of that target.
pub const CORRUPTED_DEFICIT_REL_TOL: f64 = 0.05;

#[derive(Clone, Copy, Debug)]
pub struct VerifyOptions {
    /// Smaller family sweeps.
    pub quick: bool,
    /// Rule used for every constant set of the suite.
    pub rule: SigmaStarRule,
    /// Members in the family sweeps (criteria 5 to 7).
    pub trials: usize,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions { quick: false, rule: SigmaStarRule::Corrected, trials: 200, seed: 42 }
    }
}

impl VerifyOptions {
    fn members(&self) -> usize {
        if self.quick {
            self.trials.min(30)
        } else {
            self.trials
        }
    }
}

/// One gated comparison.
#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub label: String,
    pub value: f64,
    pub limit: f64,
    /// `value <= limit` when true, `value >= limit` otherwise.
    pub upper: bool,
}

impl Check {
    pub fn at_most(label: impl Into<String>, value: f64, limit: f64) -> Check {
        Check { label: label.into(), value, limit, upper: true }
    }
    pub fn at_least(label: impl Into<String>, value: f64, limit: f64) -> Check {
        Check { label: label.into(), value, limit, upper: false }
    }
    pub fn ok(&self) -> bool {
        if self.upper {
            self.value <= self.limit
        } else {
            self.value >= self.limit
        }
    }
    pub fn describe(&self) -> String {
        format!("{} = {:.6e} ({} {:.1e})", self.label, self.value, if self.upper { "<=" } else { ">=" }, self.limit)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CriterionResult {
    pub id: u32,
    pub name: &'static str,
    pub checks: Vec<Check>,
    /// Measurements reported but not gated.
    pub info: Vec<(String, f64)>,
    pub error: Option<String>,
    pub elapsed: f64,
    pub time_limit: f64,
}

impl CriterionResult {
    fn new(id: u32, name: &'static str, time_limit: f64) -> CriterionResult {
        CriterionResult { id, name, checks: Vec::new(), info: Vec::new(), error: None, elapsed: 0.0, time_limit }
    }

    fn check(&mut self, c: Check) {
        self.checks.push(c);
    }

    fn info(&mut self, label: &str, v: f64) {
        self.info.push((label.to_string(), v));
    }

    pub fn within_time(&self) -> bool {
        self.elapsed <= self.time_limit
    }

    pub fn passed(&self) -> bool {
        self.error.is_none() && !self.checks.is_empty() && self.checks.iter().all(Check::ok) && self.within_time()
    }

    pub fn check_value(&self, label: &str) -> Option<f64> {
        self.checks.iter().find(|c| c.label == label).map(|c| c.value)
    }

    pub fn info_value(&self, label: &str) -> Option<f64> {
        self.info.iter().find(|(l, _)| l == label).map(|(_, v)| *v)
    }

    /// First failing check, or the last check when everything holds.
    pub fn headline(&self) -> Option<&Check> {
        self.checks.iter().find(|c| !c.ok()).or(self.checks.last())
    }

    /// One table row: id, verdict, headline residual, runtime.
    pub fn summary_line(&self) -> String {
        let verdict = if self.passed() { "PASS" } else { "FAIL" };
        let what = match (&self.error, self.headline()) {
            (Some(e), _) => format!("error: {e}"),
            (None, Some(c)) => c.describe(),
            (None, None) => "no checks".into(),
        };
        let time = if self.within_time() { String::new() } else { format!(" over budget {:.0}s", self.time_limit) };
        format!("{:>2}  {:<34} {verdict}  {what}  [{:.2}s{time}]", self.id, self.name, self.elapsed)
    }

    pub fn details(&self) -> Vec<String> {
        let mut out: Vec<String> =
            self.checks.iter().map(|c| format!("{} {}", if c.ok() { "ok  " } else { "FAIL" }, c.describe())).collect();
        out.extend(self.info.iter().map(|(l, v)| format!("info {l} = {v:.9e}")));
        out
    }
}

fn timed<F: FnOnce(&mut CriterionResult) -> Result<()>>(
    id: u32,
    name: &'static str,
    limit: f64,
    body: F,
) -> CriterionResult {
    let mut res = CriterionResult::new(id, name, limit);
    let start = Instant::now();
    if let Err(e) = body(&mut res) {
        res.error = Some(e.to_string());
    }
    res.elapsed = start.elapsed().as_secs_f64();
    res
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn reference_constants(rule: SigmaStarRule) -> Result<ConstantSet> {
    compute_constants_with(&derive_params(2, 2.0, Mass::Reference)?, rule)
}

/// Reference value `key` of the constants at `(d, p)`.
pub fn reference_value(d: u32, p: f64, key: &str) -> Result<f64> {
    let v: serde_json::Value = serde_json::from_str(REFERENCE_VALUES)?;
    v[format!("constants d={d} p={p}")][key]
        .as_str()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| GnsError::Usage(format!("no reference value {key} at d={d} p={p}")))
}

pub fn criterion_1(opts: &VerifyOptions) -> CriterionResult {
    timed(1, "constants reference pack", 1.0, |r| {
        let cs = reference_constants(opts.rule)?;
        let closed = [
            ("M*", cs.m_star, PI / 3.0),
            ("K_M", cs.k_m, PI / 6.0),
            ("int B_1^m", cs.int_b1_m, PI / 2.0),
            ("kappa_1", cs.kappa_1, 2.0 / PI),
            ("kappa_2", cs.kappa_2, 0.375),
            ("C_md", cs.c_md, 3.0 / (8.0 * PI)),
        ];
        for (name, got, want) in closed {
            r.check(Check::at_most(format!("{name} rel. error"), rel(got, want), 1e-10));
        }
        let oracle = [
            ("sigma*", cs.sigma_star, "sigma_star"),
            ("K_pd", cs.k_pd, "k_pd"),
            ("C_GN", cs.c_gn, "c_gn"),
            ("C_pd", cs.c_pd, "c_pd"),
            ("C_CK", cs.c_ck, "c_ck"),
            ("frak_c", cs.frak_c, "frak_c"),
        ];
        for (name, got, key) in oracle {
            r.check(Check::at_most(format!("{name} rel. error"), rel(got, reference_value(2, 2.0, key)?), 1e-4));
            r.info(name, got);
        }
        Ok(())
    })
}

/// The admissible `(d, p)` pairs of criterion 2: ten per dimension, strictly inside the range.
pub fn consistency_pairs() -> Vec<(u32, f64)> {
    let mut out = Vec::new();
    for d in 2..=6u32 {
        for i in 1..=10 {
            let t = i as f64 / 11.0;
            let p = if d == 2 { 1.0 + 8.0 * t } else { 1.0 + t * (d as f64 / (d as f64 - 2.0) - 1.0) };
            out.push((d, p));
        }
    }
    out
}

pub fn criterion_2(opts: &VerifyOptions) -> CriterionResult {
    timed(2, "K_pd <-> C_GN relation", 1.0, |r| {
        let mut worst: f64 = 0.0;
        for (d, p) in consistency_pairs() {
            let params = derive_params(d, p, Mass::Reference)?;
            let cs = compute_constants_with(&params, opts.rule)?;
            let lhs = cs.k_pd * cs.c_gn.powf(2.0 * p * params.gamma);
            worst = worst.max(rel(lhs, dilation_optimum(&params)));
        }
        r.check(Check::at_most("max rel. residual over 50 pairs", worst, 1e-10));
        Ok(())
    })
}

pub const SATURATION_PAIRS: [(u32, f64); 4] = [(2, 2.0), (2, 3.0), (3, 2.0), (4, 2.0)];

pub fn criterion_3(_opts: &VerifyOptions) -> CriterionResult {
    timed(3, "optimal function saturates GN", 10.0, |r| {
        for (d, p) in SATURATION_PAIRS {
            let t = optimizer_gn_terms(d, p, 4000, 1000.0)?;
            let c = c_gn_dp(d, p)?;
            r.check(Check::at_most(format!("|quotient - C_GN| at d={d} p={p}"), (t.quotient - c).abs(), 1e-7));
            if (d, p) == (2, 2.0) {
                r.check(Check::at_most("||grad f||^2 rel. error", rel(t.grad, 2.0 * PI / 3.0), 1e-7));
                r.check(Check::at_most("||f||_3^3 rel. error", rel(t.lp1, PI / 2.0), 1e-7));
                r.check(Check::at_most("||f||_4^4 rel. error", rel(t.l2p, PI / 3.0), 1e-7));
            }
        }
        Ok(())
    })
}

/// Deficit of the sigma*-normalized optimal function and the normalizing factor.
pub struct EqualityCase {
    pub deficit: f64,
    pub lambda: f64,
    pub lambda_target: f64,
    pub lambda_minimizer: f64,
}

pub fn equality_case(rule: SigmaStarRule) -> Result<EqualityCase> {
    let cs = reference_constants(rule)?;
    let params = &cs.params;
    let r_max = working_radius(params, cs.m_star, 4.0 * cs.sigma_star.max(1.0));
    let grid = build_grid(params.d, 4000, r_max, 2.0)?;
    let f = optimal_f(params, cs.m_star, 1.0, &grid)?;
    let (normalized, lambda) = normalize_to_sigma_star(&f, &cs)?;
    let rep = gn_deficit(&normalized, &cs)?;
    let cross = cross_check_constants_with(params, rule, QuadratureSettings::default())?;
    Ok(EqualityCase {
        deficit: rep.gn_deficit,
        lambda,
        lambda_target: cs.sigma_star.powf(-0.5),
        lambda_minimizer: cross.oracle_lambda,
    })
}

fn criterion_4_with(rule: SigmaStarRule) -> CriterionResult {
    timed(4, "equality case", 5.0, |r| {
        let eq = equality_case(rule)?;
        r.check(Check::at_most("|deficit|", eq.deficit.abs(), 1e-6));
        r.check(Check::at_most("|lambda - sigma*^(-1/2)|", (eq.lambda - eq.lambda_target).abs(), 1e-6));
        r.check(Check::at_most("|lambda - dilation minimizer|", (eq.lambda - eq.lambda_minimizer).abs(), 1e-6));
        r.info("deficit", eq.deficit);
        r.info("lambda", eq.lambda);
        r.info("dilation minimizer", eq.lambda_minimizer);
        Ok(())
    })
}

pub fn criterion_4(opts: &VerifyOptions) -> CriterionResult {
    criterion_4_with(opts.rule)
}

/// Family sweep inputs at `(d, p) = (2, 2)`.
fn sweep_inputs(opts: &VerifyOptions) -> Result<(ConstantSet, Arc<RadialGrid>, Vec<Member>)> {
    let cs = reference_constants(opts.rule)?;
    let params = &cs.params;
    let base = family_grid(params, 2000, 2.0)?;
    let r_max = base.r_max().max(working_radius(params, 2.0 * cs.m_star, cs.sigma_star));
    let grid = build_grid(params.d, 2000, r_max, 2.0)?;
    let desc = FamilyDescriptor { kind: FamilyKind::Mixed, trials: opts.members(), seed: opts.seed };
    let members = family_members(&desc, params);
    Ok((cs, grid, members))
}

fn build_all(members: &[Member], cs: &ConstantSet, grid: &Arc<RadialGrid>) -> Result<Vec<RadialFunction>> {
    members.par_iter().map(|m| m.build(&cs.params, grid)).collect()
}

fn min_of(v: impl Iterator<Item = f64>) -> f64 {
    v.fold(f64::INFINITY, f64::min)
}

pub fn criterion_5(opts: &VerifyOptions) -> CriterionResult {
    timed(5, "stability of GN (family sweep)", 60.0, |r| {
        let (cs, grid, members) = sweep_inputs(opts)?;
        let rows: Vec<(f64, f64, f64)> = members
            .par_iter()
            .map(|member| {
                let (f, _) = normalized_member(member, &cs, &grid)?;
                let rep = gn_deficit(&f, &cs)?;
                let cb = l1_bounds(&f, &cs)?;
                Ok((
                    rep.gn_deficit - rep.improvement_bound,
                    rep.gn_deficit - cb.deficit_lower,
                    rep.manifold_distance - cb.distance_lower,
                ))
            })
            .collect::<Result<_>>()?;
        r.check(Check::at_least("min deficit - C_pd R^2/M^gamma", min_of(rows.iter().map(|x| x.0)), -1e-8));
        r.check(Check::at_least("min deficit - frak_c bound", min_of(rows.iter().map(|x| x.1)), -1e-8));
        r.check(Check::at_least("min R - C_CK bound", min_of(rows.iter().map(|x| x.2)), -1e-8));
        r.info("members", rows.len() as f64);
        Ok(())
    })
}

pub fn criterion_6(opts: &VerifyOptions) -> CriterionResult {
    timed(6, "Csiszar-Kullback bounds", 30.0, |r| {
        let (cs, grid, members) = sweep_inputs(opts)?;
        let members = build_all(&members, &cs, &grid)?;
        let rows: Vec<(f64, f64)> = members
            .par_iter()
            .map(|u| {
                let (a, b) = ck_bound(u, &cs)?;
                let (c, d) = ck_variant_bound(u, &cs)?;
                Ok((a - b, c - d))
            })
            .collect::<Result<_>>()?;
        r.check(Check::at_least("min lhs - rhs", min_of(rows.iter().map(|x| x.0)), -1e-9));
        r.check(Check::at_least("min lhs - rhs (variant)", min_of(rows.iter().map(|x| x.1)), -1e-9));
        let params = &cs.params;
        let mut worst: f64 = 0.0;
        for (mass, sigma) in [(cs.m_star, 1.0), (cs.m_star, 2.5), (0.7 * cs.m_star, 0.5), (1.6 * cs.m_star, 3.0)] {
            let b = barenblatt(params, mass, sigma, &grid)?;
            let (a1, b1) = ck_bound(&b, &cs)?;
            let (a2, b2) = ck_variant_bound(&b, &cs)?;
            worst = worst.max((a1 - b1).abs()).max((a2 - b2).abs());
        }
        r.check(Check::at_most("max |lhs - rhs| at Barenblatt inputs", worst, 1e-10));
        Ok(())
    })
}

pub fn criterion_7(opts: &VerifyOptions) -> CriterionResult {
    timed(7, "improved entropy production", 30.0, |r| {
        let (cs, grid, members) = sweep_inputs(opts)?;
        let members = build_all(&members, &cs, &grid)?;
        let terms: Vec<_> = members.par_iter().map(|u| improved_eep_terms(u, &cs)).collect::<Result<_>>()?;
        r.check(Check::at_least("min residual", min_of(terms.iter().map(|t| t.residual)), -1e-8));
        let active = terms.iter().filter(|t| t.entropy > 1e-6);
        let min_gain = min_of(active.map(|t| t.improvement));
        r.check(Check::at_least("min improvement where F > 1e-6", min_gain, f64::MIN_POSITIVE));
        Ok(())
    })
}

pub fn criterion_8(opts: &VerifyOptions) -> CriterionResult {
    timed(8, "flow run", 120.0, |r| {
        let params = derive_params_from_m(2, 0.75, Mass::Reference)?;
        let cs = compute_constants_with(&params, opts.rule)?;
        let grid = build_grid(2, 2000, working_radius(&params, params.mass, 4.0), 2.0)?;
        let u0 = reference_mixture(&params).build(&params, &grid)?;
        let int_u0_m = u0.powf(params.m).integrate(0)?;
        let trace = run_flow(&cs, &u0, 2.0, 0.01, FlowControls::default())?;
        let rel_rep = verify_ode_relations(&trace, &cs)?;
        let a = params.entropy_sigma_exponent();
        let estimate = trace.sigma_infinity_estimate(&cs).powf(a);
        let bound = trace.sigma_infinity_bound(&cs, int_u0_m);
        r.check(Check::at_most("mass drift", trace.mass_drift(), 1e-6));
        r.check(Check::at_most("max relative sigma increase", trace.sigma_increase(), 1e-10));
        r.check(Check::at_most("max F/(F0 e^-4t) - 1", trace.envelope_excess(), 1e-2));
        r.check(Check::at_least("sigma_inf^a estimate - bound", estimate - bound, 0.0));
        r.check(Check::at_most("entropy law residual", rel_rep.entropy_law, 5e-2));
        r.check(Check::at_least("min remainder", trace.min_remainder(), -1e-10));
        r.info("sigma_inf^a estimate", estimate);
        r.info("sigma_inf^a bound", bound);
        r.info("fisher balance residual", rel_rep.fisher_balance);
        r.info("sigma law residual", rel_rep.sigma_law);
        Ok(())
    })
}

pub fn criterion_9(opts: &VerifyOptions) -> CriterionResult {
    timed(9, "ODE comparison model", 1.0, |r| {
        let params = derive_params_from_m(2, 0.75, Mass::Reference)?;
        let cs = compute_constants_with(&params, opts.rule)?;
        let model = OdeModel::new(&cs);
        let j0 = 4.0 + model.improvement_coefficient(1.0);
        let traj = integrate_system(&model, 1.0, 1.0, j0, 10.0)?;
        r.check(Check::at_least("min (j - 4f)", traj.min_cone_gap(), -1e-9));
        r.check(Check::at_most("max (f - e^-4t)", traj.envelope_excess(), 1e-10));
        r.check(Check::at_least("sigma_inf", traj.last().sigma, f64::MIN_POSITIVE));
        let residual = match gronwall_report(&traj) {
            Ok(rep) => rep.residual_a.max(rep.residual_b),
            Err(GnsError::NotConverged { .. }) => f64::INFINITY,
            Err(e) => return Err(e),
        };
        r.check(Check::at_most("Gronwall residual (inf: f does not reach 0)", residual, 1e-8));
        r.info("j0", j0);
        r.info("decay threshold j0*", decay_threshold(&model, 1.0, 1.0)?);
        r.info("f at t_end", traj.last().f);
        Ok(())
    })
}

pub fn criterion_10(_opts: &VerifyOptions) -> CriterionResult {
    timed(10, "negative control (corrupted sigma*)", 5.0, |r| {
        let corrupted = criterion_4_with(SigmaStarRule::Uncorrected);
        if let Some(e) = corrupted.error {
            return Err(GnsError::Solver(format!("corrupted equality case did not run: {e}")));
        }
        let deficit = corrupted.info_value("deficit").unwrap_or(f64::NAN);
        r.check(Check::at_least(
            "equality-case checks failing",
            corrupted.checks.iter().filter(|c| !c.ok()).count() as f64,
            1.0,
        ));
        r.check(Check::at_most(
            "|deficit - 0.398| / 0.398",
            rel(deficit, CORRUPTED_DEFICIT_TARGET),
            CORRUPTED_DEFICIT_REL_TOL,
        ));
        r.info("deficit", deficit);
        Ok(())
    })
}

pub type CriterionFn = fn(&VerifyOptions) -> CriterionResult;

pub const CRITERIA: [CriterionFn; 10] = [
    criterion_1,
    criterion_2,
    criterion_3,
    criterion_4,
    criterion_5,
    criterion_6,
    criterion_7,
    criterion_8,
    criterion_9,
    criterion_10,
];

/// Run every criterion in order.
pub fn run_all(opts: &VerifyOptions) -> Vec<CriterionResult> {
    CRITERIA.iter().map(|c| c(opts)).collect()
}
