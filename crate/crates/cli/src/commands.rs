use std::io::Write;
use std::path::Path;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use gns_core::constants::{
    compute_constants, cross_check_constants_with, endpoint_scan, ConstantSet, QuadratureSettings, SigmaStarRule,
    CONSTANTS_CSV_HEADER,
};
use gns_core::family::{family_grid, family_members, normalized_member, reference_mixture, FamilyDescriptor, Member};
use gns_core::flow::{run, FlowControls};
use gns_core::functionals::{
    ck_bound, ck_variant_bound, gn_deficit, normalize_to_sigma_star, DeficitReport, DEFICIT_CSV_HEADER,
};
use gns_core::io::write_atomic;
use gns_core::odemodel::{gronwall_report, integrate_with, OdeControls, OdeModel};
use gns_core::profiles::working_radius;
use gns_core::radial::{build_grid, profile_from_samples, read_profile_csv, RadialFunction, RadialGrid};
use gns_core::verify::{run_all, VerifyOptions};
use gns_core::{derive_params, derive_params_from_m, GnsError, Mass, Params};
use log::{info, warn};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::{Cli, Command, Format, GridArgs, Output, Problem, Profiles};

pub fn dispatch(cli: Cli) -> Result<ExitCode> {
    let quad_tol = cli.quad_tol;
    if !(quad_tol > 0.0) {
        bail!(GnsError::Usage(format!("quadrature tolerance {quad_tol} must be positive")));
    }
    match cli.command {
        Command::Constants { problem, cells, q, output } => constants(&problem, cells, q, quad_tol, &output),
        Command::Sweep { d, points, p_max, output } => sweep(d, points, p_max, &output),
        Command::Deficit { problem, grid, profiles, output } => deficit(&problem, &grid, &profiles, &output),
        Command::Ck { problem, grid, profiles, output } => ck(&problem, &grid, &profiles, &output),
        Command::Flow { problem, grid, t_max, save_dt, input, output } => {
            flow(&problem, &grid, t_max, save_dt, input.as_deref(), &output)
        }
        Command::Ode { problem, f0, sigma0, j0, t_max, save_dt, output } => {
            ode(&problem, f0, sigma0, j0, t_max, save_dt, &output)
        }
        Command::Verify { quick, trials, seed, details, corrupt_sigma_star } => {
            let rule = if corrupt_sigma_star { SigmaStarRule::Uncorrected } else { SigmaStarRule::Corrected };
            return Ok(verify(VerifyOptions { quick, rule, trials, seed }, details));
        }
    }?;
    Ok(ExitCode::SUCCESS)
}

fn params(problem: &Problem) -> Result<Params> {
    let mass = match problem.mass {
        Some(v) => Mass::Value(v),
        None => Mass::Reference,
    };
    let params = match (problem.p, problem.m) {
        (Some(p), None) => derive_params(problem.d, p, mass)?,
        (None, Some(m)) => derive_params_from_m(problem.d, m, mass)?,
        (None, None) => derive_params(problem.d, 2.0, mass)?,
        (Some(_), Some(_)) => bail!(GnsError::Usage("give either --p or --m, not both".into())),
    };
    info!("d = {}, p = {}, m = {}, M = {}", params.d, params.p, params.m, params.mass);
    Ok(params)
}

/// Write to `--out` atomically, or to stdout.
fn emit(output: &Output, default: Format, body: impl FnOnce(&mut dyn Write, Format) -> Result<()>) -> Result<()> {
    let format = output.format.unwrap_or(default);
    match &output.out {
        Some(path) => {
            let mut failure = None;
            let res = write_atomic(path, |w| {
                body(w, format).map_err(|e| {
                    let msg = format!("{e:#}");
                    failure = Some(e);
                    GnsError::Usage(msg)
                })
            });
            if let Some(e) = failure {
                return Err(e);
            }
            res.with_context(|| format!("writing {}", path.display()))
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            body(&mut lock, format)?;
            lock.flush()?;
            Ok(())
        }
    }
}

fn write_json(w: &mut dyn Write, v: &Value) -> Result<()> {
    serde_json::to_writer_pretty(&mut *w, v)?;
    writeln!(w)?;
    Ok(())
}

fn constants(problem: &Problem, cells: usize, q: f64, tol: f64, output: &Output) -> Result<()> {
    let params = params(problem)?;
    let cs = compute_constants(&params)?;
    let settings = QuadratureSettings { nodes: cells, q, tol };
    let report = cross_check_constants_with(&params, SigmaStarRule::Corrected, settings)?;
    let record = cs.record();
    emit(output, Format::Json, |w, format| match format {
        Format::Json => {
            let mut v = json!({ "d": params.d, "p": params.p, "m": params.m, "mass": params.mass });
            let obj = v.as_object_mut().expect("object");
            if let Value::Object(fields) = serde_json::to_value(&record)? {
                obj.extend(fields);
            }
            obj.insert("consistency".into(), serde_json::to_value(&report)?);
            write_json(w, &v)
        }
        Format::Csv => {
            writeln!(w, "d,p,m,mass,{CONSTANTS_CSV_HEADER}")?;
            writeln!(w, "{},{},{},{},{}", params.d, params.p, params.m, params.mass, record.csv_row())?;
            Ok(())
        }
    })
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn sweep(d: u32, points: usize, p_max: f64, output: &Output) -> Result<()> {
    if d < 2 {
        bail!(GnsError::Usage(format!("dimension d = {d} must be at least 2")));
    }
    let upper = if d == 2 { p_max } else { d as f64 / (d as f64 - 2.0) };
    if !(upper > 1.0) {
        bail!(GnsError::Usage(format!("--p-max {upper} must exceed 1")));
    }
    // both endpoints are included so the scan shows how the constants degenerate there
    let grid: Vec<f64> = (0..=points + 1).map(|k| 1.0 + (upper - 1.0) * k as f64 / (points + 1) as f64).collect();
    let rows = endpoint_scan(d, &grid);
    emit(output, Format::Csv, |w, format| match format {
        Format::Json => write_json(w, &serde_json::to_value(&rows)?),
        Format::Csv => {
            writeln!(w, "p,c_pd,c_ck,k_pd,status")?;
            let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            for r in &rows {
                writeln!(w, "{},{},{},{},{}", r.p, cell(r.c_pd), cell(r.c_ck), cell(r.k_pd), csv_field(&r.status))?;
            }
            Ok(())
        }
    })
}

/// Profiles to evaluate: family members (kept for normalization) or one loaded density.
enum Subjects {
    Family(Vec<Member>),
    Input(RadialFunction),
}

fn subjects(params: &Params, grid: &GridArgs, profiles: &Profiles) -> Result<(Arc<RadialGrid>, Subjects)> {
    if let Some(path) = &profiles.input {
        let (r, u) = read_samples(path)?;
        let r_max = grid.r_max.unwrap_or(r[r.len() - 1]);
        let g = build_grid(params.d, grid.cells, r_max, grid.q)?;
        return Ok((g.clone(), Subjects::Input(profile_from_samples(&r, &u, g)?)));
    }
    let kind = profiles.family.parse()?;
    let desc = FamilyDescriptor { kind, trials: profiles.trials, seed: profiles.seed };
    let g = match grid.r_max {
        Some(r) => build_grid(params.d, grid.cells, r, grid.q)?,
        None => family_grid(params, grid.cells, grid.q)?,
    };
    Ok((g, Subjects::Family(family_members(&desc, params))))
}

fn read_samples(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let file = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let samples =
        read_profile_csv(std::io::BufReader::new(file)).with_context(|| format!("reading {}", path.display()))?;
    if samples.0.len() < 2 {
        bail!(GnsError::Parse { line: 2, msg: "need at least two samples".into() });
    }
    Ok(samples)
}

fn member_label(m: &Member) -> &'static str {
    match m {
        Member::TwoScaleMix { .. } => "two-scale-mix",
        Member::TiltedPower { .. } => "tilted-power",
        Member::CompactBump { .. } => "compact-bump",
    }
}

fn deficit(problem: &Problem, grid: &GridArgs, profiles: &Profiles, output: &Output) -> Result<()> {
    let params = params(problem)?;
    let cs = compute_constants(&params)?;
    let (grid, subjects) = subjects(&params, grid, profiles)?;
    let rows: Vec<(String, Value, DeficitReport)> = match &subjects {
        Subjects::Family(members) => members
            .par_iter()
            .map(|m| {
                let (f, _) = normalized_member(m, &cs, &grid)?;
                Ok((member_label(m).to_string(), serde_json::to_value(m)?, gn_deficit(&f, &cs)?))
            })
            .collect::<Result<_>>()?,
        Subjects::Input(u) => {
            let f = u.powf(1.0 / (2.0 * params.p));
            let (f, _) = normalize_to_sigma_star(&f, &cs)?;
            vec![("input".into(), Value::Null, gn_deficit(&f, &cs)?)]
        }
    };
    let worst = rows.iter().map(|r| r.2.margin()).fold(f64::INFINITY, f64::min);
    info!("{} profiles, min deficit - bound = {worst:e}", rows.len());
    if worst < -1e-8 {
        warn!("deficit below its lower bound by {:e}", -worst);
    }
    emit(output, Format::Csv, |w, format| match format {
        Format::Json => {
            let list: Vec<Value> = rows
                .iter()
                .enumerate()
                .map(|(i, (label, member, rep))| {
                    let mut v = rep.to_json();
                    let obj = v.as_object_mut().expect("object");
                    obj.insert("index".into(), json!(i));
                    obj.insert("family".into(), json!(label));
                    obj.insert("member".into(), member.clone());
                    v
                })
                .collect();
            write_json(w, &Value::Array(list))
        }
        Format::Csv => {
            writeln!(w, "index,family,{DEFICIT_CSV_HEADER}")?;
            for (i, (label, _, rep)) in rows.iter().enumerate() {
                writeln!(w, "{i},{label},{}", rep.csv_row())?;
            }
            Ok(())
        }
    })
}

fn ck(problem: &Problem, grid: &GridArgs, profiles: &Profiles, output: &Output) -> Result<()> {
    let params = params(problem)?;
    let cs = compute_constants(&params)?;
    let (grid, subjects) = subjects(&params, grid, profiles)?;
    let eval = |u: &RadialFunction| -> Result<[f64; 4]> {
        let (a, b) = ck_bound(u, &cs)?;
        let (c, d) = ck_variant_bound(u, &cs)?;
        Ok([a, b, c, d])
    };
    let rows: Vec<(String, [f64; 4])> = match &subjects {
        Subjects::Family(members) => members
            .par_iter()
            .map(|m| Ok((member_label(m).to_string(), eval(&m.build(&params, &grid)?)?)))
            .collect::<Result<_>>()?,
        Subjects::Input(u) => vec![("input".into(), eval(u)?)],
    };
    emit(output, Format::Csv, |w, format| match format {
        Format::Json => {
            let list: Vec<Value> = rows
                .iter()
                .enumerate()
                .map(|(i, (label, v))| {
                    json!({"index": i, "family": label, "lhs": v[0], "rhs": v[1], "variant_lhs": v[2], "variant_rhs": v[3]})
                })
                .collect();
            write_json(w, &Value::Array(list))
        }
        Format::Csv => {
            writeln!(w, "index,family,lhs,rhs,variant_lhs,variant_rhs")?;
            for (i, (label, v)) in rows.iter().enumerate() {
                writeln!(w, "{i},{label},{},{},{},{}", v[0], v[1], v[2], v[3])?;
            }
            Ok(())
        }
    })
}

fn flow(
    problem: &Problem,
    grid: &GridArgs,
    t_max: f64,
    save_dt: f64,
    input: Option<&Path>,
    output: &Output,
) -> Result<()> {
    let params = params(problem)?;
    let cs = compute_constants(&params)?;
    let u0 = match input {
        Some(path) => {
            let (r, u) = read_samples(path)?;
            let r_max = grid.r_max.unwrap_or(r[r.len() - 1]);
            profile_from_samples(&r, &u, build_grid(params.d, grid.cells, r_max, grid.q)?)?
        }
        None => {
            let r_max = grid.r_max.unwrap_or_else(|| working_radius(&params, params.mass, 4.0));
            reference_mixture(&params).build(&params, &build_grid(params.d, grid.cells, r_max, grid.q)?)?
        }
    };
    let trace = run(&cs, &u0, t_max, save_dt, FlowControls::default())?;
    info!("flow: {} saves, mass drift {:e}", trace.snapshots.len(), trace.mass_drift());
    emit(output, Format::Csv, |w, format| match format {
        Format::Json => {
            let mut v = trace.metadata_json();
            v.as_object_mut().expect("object").insert("trace".into(), serde_json::to_value(&trace.snapshots)?);
            write_json(w, &v)
        }
        Format::Csv => Ok(trace.write_csv(w)?),
    })
}

fn ode(
    problem: &Problem,
    f0: f64,
    sigma0: f64,
    j0: Option<f64>,
    t_max: f64,
    save_dt: Option<f64>,
    output: &Output,
) -> Result<()> {
    let params = params(problem)?;
    let cs: ConstantSet = compute_constants(&params)?;
    let model = OdeModel::new(&cs);
    let j0 = j0.unwrap_or_else(|| 4.0 * f0 + model.improvement_coefficient(sigma0) * f0 * f0);
    let ctl = OdeControls { save_dt, ..OdeControls::default() };
    let traj = integrate_with(&model, f0, sigma0, j0, t_max, &ctl)?;
    let report = match gronwall_report(&traj) {
        Ok(r) => Some(r),
        Err(e) => {
            warn!("{e}");
            None
        }
    };
    emit(output, Format::Csv, |w, format| match format {
        Format::Json => write_json(
            w,
            &json!({
                "model": traj.model,
                "reached_zero": traj.reached_zero,
                "min_cone_gap": traj.min_cone_gap(),
                "envelope_excess": traj.envelope_excess(),
                "gronwall": report,
                "states": traj.states,
            }),
        ),
        Format::Csv => Ok(traj.write_csv(w)?),
    })
}

fn verify(opts: VerifyOptions, details: bool) -> ExitCode {
    if opts.rule == SigmaStarRule::Uncorrected {
        warn!("sigma* uses the uncorrected numerator; failures are expected");
    }
    let results = run_all(&opts);
    println!("{:>2}  {:<34} verdict", "id", "criterion");
    for r in &results {
        println!("{}", r.summary_line());
        if details || !r.passed() {
            for line in r.details() {
                println!("      {line}");
            }
        }
    }
    let failed: Vec<String> =
        results.iter().filter(|r| !r.passed()).map(|r| format!("{} ({})", r.id, r.name)).collect();
    if failed.is_empty() {
        println!("all {} criteria pass", results.len());
        ExitCode::SUCCESS
    } else {
        println!("failing criteria: {}", failed.join(", "));
        ExitCode::from(1)
    }
}
