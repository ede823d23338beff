//! Barenblatt profiles, optimal GN functions and their scaling transforms.

use std::sync::Arc;

use crate::error::{domain, GnsError, Result};
use crate::params::{log_m_star, Params};
use crate::radial::{MonotoneCubic, RadialFunction, RadialGrid};

/// Mass of the optimal profile `F_p^{2p}`.
pub fn m_star(params: &Params) -> f64 {
    log_m_star(params.d, params.m).expect("admissible params").exp()
}

/// `C_M = (M*/M)^{2(1-m)/(d(m-m_c))}`.
pub fn c_m(params: &Params, mass: f64) -> f64 {
    (m_star(params) / mass).powf(params.mass_exponent())
}

/// Second moment of `B_sigma` beyond `r_max`, relative to `sigma K_M`.
///
/// Uses `B_sigma <= sigma^{-d/2} (r^2/sigma)^{1/(m-1)}`, so it is an upper bound.
pub fn tail_deficit(params: &Params, mass: f64, sigma: f64, r_max: f64) -> f64 {
    let df = params.df();
    let e = params.barenblatt_tail_exponent() + df + 2.0;
    let s_d = crate::special::sphere_area(params.d);
    let amp = sigma.powf(-0.5 * df - 1.0 / (params.m - 1.0));
    let k_m = crate::constants::k_1(params) * mass.powf(params.gamma);
    s_d * amp * r_max.powf(e) / (-e) / (sigma * k_m)
}

/// Radius beyond which the second moment of `B_sigma` is below `tol * sigma K_M`.
pub fn default_radius(params: &Params, mass: f64, sigma: f64, tol: f64) -> f64 {
    let e = params.barenblatt_tail_exponent() + params.df() + 2.0;
    let at_one = tail_deficit(params, mass, sigma, 1.0);
    (tol / at_one).powf(1.0 / e).max(1.0)
}

/// Default grid radius: the tail criterion at `1e-10`, capped at a thousand core widths
/// `sqrt(sigma C_M)` (slowly decaying tails are left to the asymptotic tail correction).
pub fn working_radius(params: &Params, mass: f64, sigma: f64) -> f64 {
    let width = (sigma * c_m(params, mass)).sqrt();
    default_radius(params, mass, sigma, 1e-10).min(1000.0 * width)
}

fn check_scale(mass: f64, sigma: f64) -> Result<()> {
    if !(mass > 0.0 && mass.is_finite()) {
        return domain(format!("mass M = {mass} must be positive"));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return domain(format!("scale sigma = {sigma} must be positive"));
    }
    Ok(())
}

/// Pointwise `B_sigma(r)` for a given `C_M`.
pub fn barenblatt_value(params: &Params, cm: f64, sigma: f64, r: f64) -> f64 {
    sigma.powf(-0.5 * params.df()) * (cm + r * r / sigma).powf(1.0 / (params.m - 1.0))
}

/// `B_sigma(x) = sigma^{-d/2} (C_M + |x|^2/sigma)^{1/(m-1)}` sampled on `grid`.
pub fn barenblatt(params: &Params, mass: f64, sigma: f64, grid: &Arc<RadialGrid>) -> Result<RadialFunction> {
    check_scale(mass, sigma)?;
    check_grid(params, grid)?;
    let deficit = tail_deficit(params, mass, sigma, grid.r_max());
    if deficit > 1e-6 {
        log::warn!(
            "grid radius {} truncates the Barenblatt tail: relative second-moment tail {deficit:.2e}",
            grid.r_max()
        );
    }
    let cm = c_m(params, mass);
    let v = grid.nodes().iter().map(|&r| barenblatt_value(params, cm, sigma, r)).collect();
    RadialFunction::with_tail(grid.clone(), v, params.barenblatt_tail_exponent())
}

/// Optimal function `f = sigma^{-d/(4p)} (C_M + |x|^2/sigma)^{-1/(p-1)}`, so that `f^{2p} = B_sigma`.
pub fn optimal_f(params: &Params, mass: f64, sigma: f64, grid: &Arc<RadialGrid>) -> Result<RadialFunction> {
    check_scale(mass, sigma)?;
    check_grid(params, grid)?;
    let cm = c_m(params, mass);
    let p = params.p;
    let pre = sigma.powf(-params.df() / (4.0 * p));
    let v = grid.nodes().iter().map(|&r| pre * (cm + r * r / sigma).powf(-1.0 / (p - 1.0))).collect();
    RadialFunction::with_tail(grid.clone(), v, -2.0 / (p - 1.0))
}

fn check_grid(params: &Params, grid: &RadialGrid) -> Result<()> {
    if grid.d() != params.d {
        return domain(format!("grid dimension {} differs from d = {}", grid.d(), params.d));
    }
    Ok(())
}

/// `u_lambda(x) = lambda^d u(lambda x)`, resampled on the same grid.
pub fn rescale_mass_preserving(u: &RadialFunction, lambda: f64) -> Result<RadialFunction> {
    resample_scaled(u, lambda, lambda.powi(u.grid().d() as i32))
}

/// `f_lambda(x) = c u(lambda x)` on the same grid, high-order interpolation with a
/// monotone-cubic fallback wherever the high-order value would go negative.
pub fn resample_scaled(u: &RadialFunction, lambda: f64, c: f64) -> Result<RadialFunction> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return domain(format!("scaling factor lambda = {lambda} must be positive"));
    }
    let grid = u.grid().clone();
    if lambda == 1.0 {
        return u.scale(c);
    }
    check_resolution(u, lambda)?;
    let mut fallback: Option<MonotoneCubic> = None;
    let mut v = Vec::with_capacity(grid.n());
    for &r in grid.nodes() {
        let x = lambda * r;
        let mut g = u.eval(x);
        if g < 0.0 && x < grid.r_max() {
            let mc = match &fallback {
                Some(mc) => mc,
                None => fallback.insert(MonotoneCubic::new(grid.nodes().to_vec(), u.values().to_vec())?),
            };
            g = mc.eval(x).max(0.0);
        }
        v.push(c * g.max(0.0));
    }
    RadialFunction::with_tail(grid, v, u.tail_exponent())
}

/// After contraction by `lambda > 1`, the bulk of the profile must still span enough nodes.
fn check_resolution(u: &RadialFunction, lambda: f64) -> Result<()> {
    let vals = u.values();
    let peak = vals.iter().cloned().fold(0.0, f64::max);
    if peak == 0.0 {
        return Ok(());
    }
    let grid = u.grid();
    let half = vals.iter().position(|v| *v < 0.5 * peak).unwrap_or(vals.len() - 1);
    let r_half = grid.nodes()[half] / lambda;
    let covered = grid.nodes().iter().filter(|r| **r <= r_half).count();
    if covered < 8 {
        return Err(GnsError::Resolution(format!(
            "rescaling by lambda = {lambda} leaves {covered} nodes inside the half-height radius"
        )));
    }
    Ok(())
}

/// `lambda u`.
pub fn rescale_homogeneous(u: &RadialFunction, lambda: f64) -> Result<RadialFunction> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return domain(format!("scaling factor lambda = {lambda} must be positive"));
    }
    u.scale(lambda)
}

/// Best-match scale of `lambda B_sigma`: `lambda^{2(1-m)/(d(m-m_c))} sigma`.
pub fn homogeneous_sigma(params: &Params, sigma: f64, lambda: f64) -> f64 {
    lambda.powf(params.mass_exponent()) * sigma
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{derive_params, Mass};
    use crate::radial::build_grid;

    fn setup() -> (Params, Arc<RadialGrid>) {
        let p = derive_params(2, 2.0, Mass::Reference).unwrap();
        (p, build_grid(2, 2000, 100.0, 2.0).unwrap())
    }

    #[test]
    fn reference_barenblatt_values() {
        let (p, g) = setup();
        assert!((c_m(&p, p.mass) - 1.0).abs() < 1e-14);
        let b1 = barenblatt(&p, p.mass, 1.0, &g).unwrap();
        assert!((b1.values()[0] - 1.0).abs() < 1e-14);
        assert!((barenblatt_value(&p, 1.0, 1.0, 1.0) - 1.0 / 16.0).abs() < 1e-16);
        let b4 = barenblatt(&p, p.mass, 4.0, &g).unwrap();
        assert!((b4.values()[0] - 0.25).abs() < 1e-15);
        assert_eq!(b1.tail_exponent(), -8.0);
    }

    #[test]
    fn optimal_function_powers_to_barenblatt() {
        for (d, pp) in [(2, 2.0), (3, 2.0), (4, 1.7)] {
            let p = derive_params(d, pp, Mass::Value(0.8)).unwrap();
            let g = build_grid(d, 500, 50.0, 2.0).unwrap();
            let f = optimal_f(&p, 0.8, 1.7, &g).unwrap();
            let b = barenblatt(&p, 0.8, 1.7, &g).unwrap();
            for (x, y) in f.values().iter().zip(b.values()) {
                assert!((x.powf(2.0 * pp) / y - 1.0).abs() < 1e-12);
            }
        }
        let p = derive_params(3, 2.0, Mass::Reference).unwrap();
        let g = build_grid(3, 100, 10.0, 2.0).unwrap();
        let f = optimal_f(&p, p.mass, 1.0, &g).unwrap();
        assert!((f.values()[0] - 1.0).abs() < 1e-14);
        let f_half = optimal_f(&p, 2.0 * p.mass, 1.0, &g).unwrap();
        assert!((f_half.values()[0] - 1.0 / c_m(&p, 2.0 * p.mass)).abs() < 1e-14);
    }

    #[test]
    fn homogeneous_scale() {
        let (p, _) = setup();
        assert!((homogeneous_sigma(&p, 1.0, 8.0) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn default_radius_meets_tail_criterion() {
        let (p, _) = setup();
        let r = default_radius(&p, p.mass, 2.5, 1e-10);
        assert!((tail_deficit(&p, p.mass, 2.5, r) / 1e-10 - 1.0).abs() < 1e-9);
        assert!(r > 600.0 && r < 700.0);
    }

    #[test]
    fn rejects_bad_scales() {
        let (p, g) = setup();
        assert!(barenblatt(&p, 0.0, 1.0, &g).is_err());
        assert!(barenblatt(&p, 1.0, -1.0, &g).is_err());
        let b = barenblatt(&p, p.mass, 1.0, &g).unwrap();
        assert!(rescale_mass_preserving(&b, 0.0).is_err());
        assert!(matches!(rescale_mass_preserving(&b, 1e5), Err(GnsError::Resolution(_))));
    }
}
