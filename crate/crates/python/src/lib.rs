//! Python bindings: plain functions returning floats, dicts and lists.

use gns_core::constants::{compute_constants, compute_constants_with, ConstantSet, SigmaStarRule};
use gns_core::family::{family_grid, family_members, normalized_member, reference_mixture, FamilyDescriptor};
use gns_core::flow::{run, FlowControls};
use gns_core::functionals::{ck_bound, ck_variant_bound, gn_deficit, improved_eep_terms, normalize_to_sigma_star};
use gns_core::odemodel::{gronwall_report, integrate_with, OdeControls, OdeModel};
use gns_core::profiles::{barenblatt as barenblatt_profile, working_radius};
use gns_core::radial::{build_grid, profile_from_samples, RadialFunction};
use gns_core::verify::{run_all, VerifyOptions};
use gns_core::{derive_params, derive_params_from_m, GnsError, Mass, Params};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use pyo3::IntoPyObjectExt;
use serde_json::{json, Value};

fn err(e: GnsError) -> PyErr {
    match e {
        GnsError::Domain(_) | GnsError::Usage(_) | GnsError::Parse { .. } | GnsError::CriticalCase { .. } => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_bound_py_any(py)?,
        Value::Number(n) => match n.as_i64() {
            Some(i) => i.into_bound_py_any(py)?,
            None => n.as_f64().unwrap_or(f64::NAN).into_bound_py_any(py)?,
        },
        Value::String(s) => s.into_bound_py_any(py)?,
        Value::Array(a) => {
            let list = PyList::empty(py);
            for x in a {
                list.append(to_py(py, x)?)?;
            }
            list.into_any()
        }
        Value::Object(o) => {
            let dict = PyDict::new(py);
            for (k, x) in o {
                dict.set_item(k, to_py(py, x)?)?;
            }
            dict.into_any()
        }
    })
}

fn ser<T: serde::Serialize>(v: &T) -> PyResult<Value> {
    serde_json::to_value(v).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

fn params(d: u32, p: Option<f64>, m: Option<f64>, mass: Option<f64>) -> PyResult<Params> {
    let mass = mass.map_or(Mass::Reference, Mass::Value);
    match (p, m) {
        (Some(_), Some(_)) => Err(PyValueError::new_err("give either p or m, not both")),
        (None, Some(m)) => derive_params_from_m(d, m, mass).map_err(err),
        (p, None) => derive_params(d, p.unwrap_or(2.0), mass).map_err(err),
    }
}

fn constant_set(d: u32, p: Option<f64>, m: Option<f64>, mass: Option<f64>) -> PyResult<ConstantSet> {
    compute_constants(&params(d, p, m, mass)?).map_err(err)
}

fn samples(cs: &ConstantSet, r: Vec<f64>, u: Vec<f64>, cells: usize, q: f64) -> PyResult<RadialFunction> {
    if r.len() != u.len() || r.len() < 2 {
        return Err(PyValueError::new_err("r and u need equal length of at least 2"));
    }
    let grid = build_grid(cs.params.d, cells, r[r.len() - 1], q).map_err(err)?;
    profile_from_samples(&r, &u, grid).map_err(err)
}

/// Constants at `(d, p)` (or `(d, m)`) as a dict.
#[pyfunction]
#[pyo3(signature = (d=2, p=None, m=None, mass=None))]
fn constants<'py>(
    py: Python<'py>,
    d: u32,
    p: Option<f64>,
    m: Option<f64>,
    mass: Option<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    let cs = constant_set(d, p, m, mass)?;
    let mut v = json!({ "d": cs.params.d, "p": cs.params.p, "m": cs.params.m, "mass": cs.params.mass });
    if let (Value::Object(o), Value::Object(rec)) = (&mut v, ser(&cs.record())?) {
        o.extend(rec);
    }
    to_py(py, &v)
}

/// Normalizing scale sigma*; `uncorrected=True` uses the alternative numerator `d+2-p(d-2)`.
#[pyfunction]
#[pyo3(signature = (d=2, p=2.0, uncorrected=false))]
fn sigma_star(d: u32, p: f64, uncorrected: bool) -> PyResult<f64> {
    let rule = if uncorrected { SigmaStarRule::Uncorrected } else { SigmaStarRule::Corrected };
    let pr = derive_params(d, p, Mass::Reference).map_err(err)?;
    Ok(compute_constants_with(&pr, rule).map_err(err)?.sigma_star)
}

/// Barenblatt profile samples `(r, u)` on a clustered grid.
#[pyfunction]
#[pyo3(signature = (d=2, p=None, m=None, mass=None, sigma=1.0, cells=2000, r_max=None, q=2.0))]
#[allow(clippy::too_many_arguments)]
fn barenblatt(
    d: u32,
    p: Option<f64>,
    m: Option<f64>,
    mass: Option<f64>,
    sigma: f64,
    cells: usize,
    r_max: Option<f64>,
    q: f64,
) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let pr = params(d, p, m, None)?;
    let mass = mass.unwrap_or(pr.mass);
    let r_max = r_max.unwrap_or_else(|| working_radius(&pr, mass, sigma));
    let grid = build_grid(d, cells, r_max, q).map_err(err)?;
    let b = barenblatt_profile(&pr, mass, sigma, &grid).map_err(err)?;
    Ok((grid.nodes().to_vec(), b.values().to_vec()))
}

/// Deficit reports over a seeded family (members normalized to sigma*).
#[pyfunction]
#[pyo3(signature = (family="mixed", trials=200, seed=42, d=2, p=None, m=None, cells=2000, q=2.0))]
#[allow(clippy::too_many_arguments)]
fn family_deficits<'py>(
    py: Python<'py>,
    family: &str,
    trials: usize,
    seed: u64,
    d: u32,
    p: Option<f64>,
    m: Option<f64>,
    cells: usize,
    q: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let cs = constant_set(d, p, m, None)?;
    let kind = family.parse().map_err(err)?;
    let rows = py
        .detach(|| -> gns_core::Result<Vec<Value>> {
            let grid = family_grid(&cs.params, cells, q)?;
            let desc = FamilyDescriptor { kind, trials, seed };
            family_members(&desc, &cs.params)
                .iter()
                .map(|member| {
                    let (f, _) = normalized_member(member, &cs, &grid)?;
                    let mut v = gn_deficit(&f, &cs)?.to_json();
                    v.as_object_mut().expect("object").insert("member".into(), serde_json::to_value(member)?);
                    Ok(v)
                })
                .collect()
        })
        .map_err(err)?;
    to_py(py, &Value::Array(rows))
}

/// Deficit of one density profile `u` sampled at radii `r`.
#[pyfunction]
#[pyo3(signature = (r, u, d=2, p=None, m=None, cells=2000, q=2.0))]
#[allow(clippy::too_many_arguments)]
fn deficit<'py>(
    py: Python<'py>,
    r: Vec<f64>,
    u: Vec<f64>,
    d: u32,
    p: Option<f64>,
    m: Option<f64>,
    cells: usize,
    q: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let cs = constant_set(d, p, m, None)?;
    let u = samples(&cs, r, u, cells, q)?;
    let f = u.powf(1.0 / (2.0 * cs.params.p));
    let (f, _) = normalize_to_sigma_star(&f, &cs).map_err(err)?;
    to_py(py, &gn_deficit(&f, &cs).map_err(err)?.to_json())
}

/// Both Csiszar-Kullback bounds `(lhs, rhs, variant_lhs, variant_rhs)` of a density profile.
#[pyfunction]
#[pyo3(signature = (r, u, d=2, p=None, m=None, cells=2000, q=2.0))]
#[allow(clippy::too_many_arguments)]
fn ck(
    r: Vec<f64>,
    u: Vec<f64>,
    d: u32,
    p: Option<f64>,
    m: Option<f64>,
    cells: usize,
    q: f64,
) -> PyResult<(f64, f64, f64, f64)> {
    let cs = constant_set(d, p, m, None)?;
    let u = samples(&cs, r, u, cells, q)?;
    let (a, b) = ck_bound(&u, &cs).map_err(err)?;
    let (c, e) = ck_variant_bound(&u, &cs).map_err(err)?;
    Ok((a, b, c, e))
}

/// Terms of the improved entropy-entropy production inequality for a density profile.
#[pyfunction]
#[pyo3(signature = (r, u, d=2, p=None, m=None, cells=2000, q=2.0))]
#[allow(clippy::too_many_arguments)]
fn eep<'py>(
    py: Python<'py>,
    r: Vec<f64>,
    u: Vec<f64>,
    d: u32,
    p: Option<f64>,
    m: Option<f64>,
    cells: usize,
    q: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let cs = constant_set(d, p, m, None)?;
    let u = samples(&cs, r, u, cells, q)?;
    to_py(py, &ser(&improved_eep_terms(&u, &cs).map_err(err)?)?)
}

/// Flow from the reference mixture: solver metadata plus one dict per save.
#[pyfunction]
#[pyo3(signature = (d=2, p=None, m=None, cells=2000, t_max=2.0, save_dt=0.01, r_max=None, q=2.0))]
#[allow(clippy::too_many_arguments)]
fn flow<'py>(
    py: Python<'py>,
    d: u32,
    p: Option<f64>,
    m: Option<f64>,
    cells: usize,
    t_max: f64,
    save_dt: f64,
    r_max: Option<f64>,
    q: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let cs = constant_set(d, p, m, None)?;
    let trace = py
        .detach(|| {
            let pr = &cs.params;
            let r_max = r_max.unwrap_or_else(|| working_radius(pr, pr.mass, 4.0));
            let grid = build_grid(d, cells, r_max, q)?;
            let u0 = reference_mixture(pr).build(pr, &grid)?;
            run(&cs, &u0, t_max, save_dt, FlowControls::default())
        })
        .map_err(err)?;
    let mut v = trace.metadata_json();
    v.as_object_mut().expect("object").insert("trace".into(), ser(&trace.snapshots)?);
    to_py(py, &v)
}

/// Reduced ODE trajectory with its Gronwall report (None when `f` has not converged).
#[pyfunction]
#[pyo3(signature = (f0=1.0, sigma0=1.0, j0=None, t_max=10.0, save_dt=None, d=2, p=None, m=None))]
#[allow(clippy::too_many_arguments)]
fn ode<'py>(
    py: Python<'py>,
    f0: f64,
    sigma0: f64,
    j0: Option<f64>,
    t_max: f64,
    save_dt: Option<f64>,
    d: u32,
    p: Option<f64>,
    m: Option<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    let cs = constant_set(d, p, m, None)?;
    let model = OdeModel::new(&cs);
    let j0 = j0.unwrap_or_else(|| 4.0 * f0 + model.improvement_coefficient(sigma0) * f0 * f0);
    let ctl = OdeControls { save_dt, ..OdeControls::default() };
    let traj = integrate_with(&model, f0, sigma0, j0, t_max, &ctl).map_err(err)?;
    let report = gronwall_report(&traj).ok();
    let v = json!({
        "reached_zero": traj.reached_zero,
        "min_cone_gap": traj.min_cone_gap(),
        "envelope_excess": traj.envelope_excess(),
        "gronwall": ser(&report)?,
        "states": ser(&traj.states)?,
    });
    to_py(py, &v)
}

/// Run the acceptance suite; one dict per criterion.
#[pyfunction]
#[pyo3(signature = (quick=true, trials=200, seed=42))]
fn verify<'py>(py: Python<'py>, quick: bool, trials: usize, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let opts = VerifyOptions { quick, trials, seed, ..VerifyOptions::default() };
    let results = py.detach(|| run_all(&opts));
    let rows: Vec<Value> = results
        .iter()
        .map(|r| {
            json!({
                "id": r.id,
                "name": r.name,
                "passed": r.passed(),
                "summary": r.summary_line(),
                "details": r.details(),
                "elapsed": r.elapsed,
            })
        })
        .collect();
    to_py(py, &Value::Array(rows))
}

#[pymodule]
fn gnspy(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(constants, m)?)?;
    m.add_function(wrap_pyfunction!(sigma_star, m)?)?;
    m.add_function(wrap_pyfunction!(barenblatt, m)?)?;
    m.add_function(wrap_pyfunction!(family_deficits, m)?)?;
    m.add_function(wrap_pyfunction!(deficit, m)?)?;
    m.add_function(wrap_pyfunction!(ck, m)?)?;
    m.add_function(wrap_pyfunction!(eep, m)?)?;
    m.add_function(wrap_pyfunction!(flow, m)?)?;
    m.add_function(wrap_pyfunction!(ode, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
