//! Entropy, Fisher information, best matching and the inequality deficits.
//!
//! Every functional is evaluated against the Barenblatt profile with the same mass
//! and second moment as the input.

use serde::Serialize;

use crate::constants::ConstantSet;
use crate::error::{domain, GnsError, Result};
use crate::optimize::golden_section_log;
use crate::profiles::{barenblatt_value, resample_scaled};
use crate::radial::{differentiate, RadialField, RadialFunction};

/// Best-matching Barenblatt scale of a profile.
#[derive(Clone, Debug, Serialize)]
pub struct MatchResult {
    pub sigma: f64,
    pub mass: f64,
    pub second_moment: f64,
    /// `F_sigma[u]` at the matched scale.
    pub entropy: f64,
    /// Relative gap between `sigma` and a direct numerical minimizer of `lambda -> F_lambda[u]`.
    pub argmin_check: f64,
}

/// Deficit of the non-homogeneous GN inequality and its lower bound.
#[derive(Clone, Debug, Serialize)]
pub struct DeficitReport {
    pub grad_term: f64,
    pub lp1_term: f64,
    pub l2p_norm_pow: f64,
    pub gn_deficit: f64,
    pub improvement_bound: f64,
    pub manifold_distance: f64,
    pub matched: MatchResult,
    pub normalized: bool,
}

pub const DEFICIT_CSV_HEADER: &str =
    "grad_term,lp1_term,l2p_norm_pow,gn_deficit,improvement_bound,manifold_distance,sigma,mass,normalized";

#[derive(Serialize)]
struct DeficitRecord {
    grad_term: f64,
    lp1_term: f64,
    l2p_norm_pow: f64,
    gn_deficit: f64,
    improvement_bound: f64,
    manifold_distance: f64,
    sigma: f64,
    mass: f64,
    normalized: bool,
}

impl DeficitReport {
    fn record(&self) -> DeficitRecord {
        DeficitRecord {
            grad_term: self.grad_term,
            lp1_term: self.lp1_term,
            l2p_norm_pow: self.l2p_norm_pow,
            gn_deficit: self.gn_deficit,
            improvement_bound: self.improvement_bound,
            manifold_distance: self.manifold_distance,
            sigma: self.matched.sigma,
            mass: self.matched.mass,
            normalized: self.normalized,
        }
    }

    /// Flat JSON object with the documented keys.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self.record()).expect("plain record")
    }

    pub fn csv_row(&self) -> String {
        let r = self.record();
        format!(
            "{},{},{},{},{},{},{},{},{}",
            r.grad_term,
            r.lp1_term,
            r.l2p_norm_pow,
            r.gn_deficit,
            r.improvement_bound,
            r.manifold_distance,
            r.sigma,
            r.mass,
            r.normalized
        )
    }

    /// Slack of the deficit over its lower bound, scaled as in the contracts.
    pub fn margin(&self) -> f64 {
        self.gn_deficit - self.improvement_bound
    }

    pub fn scale(&self) -> f64 {
        (self.grad_term + self.lp1_term).max(1.0)
    }
}

/// `(int u, int |x|^2 u)`.
pub fn moments(u: &RadialField) -> Result<(f64, f64)> {
    Ok((u.integrate(0)?, u.integrate(2)?))
}

/// Matched scale `sigma = m2 / K_M` together with mass and second moment.
pub fn matched_scale(u: &RadialFunction, cs: &ConstantSet) -> Result<(f64, f64, f64)> {
    let (mass, m2) = moments(u)?;
    if !(mass > 0.0) {
        return domain(format!("profile mass {mass} must be positive"));
    }
    Ok((m2 / cs.k_m_at(mass), mass, m2))
}

fn barenblatt_samples(u: &RadialFunction, cs: &ConstantSet, sigma: f64, mass: f64) -> Vec<f64> {
    let cm = cs.c_m_at(mass);
    u.grid().nodes().iter().map(|&r| barenblatt_value(&cs.params, cm, sigma, r)).collect()
}

/// `F_sigma[u] = 1/(m-1) int [u^m - B^m - m B^{m-1}(u - B)]` with `B` of mass `mass`.
///
/// The integrand is a Bregman divergence and is non-negative pointwise.
pub fn relative_entropy(u: &RadialFunction, cs: &ConstantSet, sigma: f64, mass: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return domain(format!("scale sigma = {sigma} must be positive"));
    }
    if !(mass > 0.0) {
        return domain(format!("mass M = {mass} must be positive"));
    }
    let m = cs.params.m;
    let b = barenblatt_samples(u, cs, sigma, mass);
    let v: Vec<f64> = u
        .values()
        .iter()
        .zip(&b)
        .map(|(x, y)| {
            let ym1 = y.powf(m - 1.0);
            ((x.powf(m) - y * ym1 - m * ym1 * (x - y)) / (m - 1.0)).max(0.0)
        })
        .collect();
    let tb = cs.params.barenblatt_tail_exponent();
    let tu = u.tail_exponent();
    let tail = (m * tu).max(m * tb).max((m - 1.0) * tb + tu);
    RadialField::with_tail(u.grid().clone(), v, tail, crate::radial::Parity::Even)?.integrate(0)
}

/// `1/(m-1) int [u^m - B^m]`, equal to [`relative_entropy`] at the matched scale.
pub fn relative_entropy_reduced(u: &RadialFunction, cs: &ConstantSet, sigma: f64, mass: f64) -> Result<f64> {
    let m = cs.params.m;
    let b = barenblatt_samples(u, cs, sigma, mass);
    let um = u.powf(m).integrate(0)?;
    let bm =
        RadialFunction::with_tail(u.grid().clone(), b, cs.params.barenblatt_tail_exponent())?.powf(m).integrate(0)?;
    Ok((um - bm) / (m - 1.0))
}

/// Matched scale plus an independent golden-section audit that it minimizes `lambda -> F_lambda[u]`.
pub fn best_match_sigma(u: &RadialFunction, cs: &ConstantSet) -> Result<MatchResult> {
    let (sigma, mass, m2) = matched_scale(u, cs)?;
    let entropy = relative_entropy(u, cs, sigma, mass)?;
    let mut failure = None;
    let (lam, _) = golden_section_log(
        |l| match relative_entropy(u, cs, l, mass) {
            Ok(v) => v,
            Err(e) => {
                failure.get_or_insert(e);
                f64::INFINITY
            }
        },
        sigma / 10.0,
        sigma * 10.0,
        1e-10,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(MatchResult { sigma, mass, second_moment: m2, entropy, argmin_check: (lam - sigma).abs() / sigma })
}

/// Index of the first node where `u` is numerically zero, if any.
fn vacuum_check(u: &RadialFunction) -> Result<()> {
    let peak = u.values().iter().cloned().fold(0.0, f64::max);
    let floor = 1e-300 * peak;
    if let Some(i) = u.values().iter().position(|v| *v <= floor) {
        return Err(GnsError::VacuumRegion { r: u.grid().nodes()[i] });
    }
    Ok(())
}

/// Radial drift residual `w(r) = sigma^{d(m-m_c)/2} (u^{m-1})'(r) - 2r`.
pub fn drift_residual(u: &RadialFunction, cs: &ConstantSet, sigma: f64) -> Result<RadialField> {
    vacuum_check(u)?;
    let m = cs.params.m;
    let sk = sigma.powf(cs.params.fisher_sigma_exponent());
    let v = u.powf(m - 1.0);
    let dv = differentiate(&v);
    let w: Vec<f64> = dv.values().iter().zip(u.grid().nodes()).map(|(g, r)| sk * g - 2.0 * r).collect();
    RadialField::with_tail(u.grid().clone(), w, 1.0, crate::radial::Parity::Odd)
}

/// Relative Fisher information
/// `I_sigma[u] = sigma^{-d(m-m_c)/2} m/(1-m) int u w^2` with `w` the drift residual.
///
/// Profiles that vanish at any node are rejected (vacuum region).
pub fn fisher_information(u: &RadialFunction, cs: &ConstantSet, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return domain(format!("scale sigma = {sigma} must be positive"));
    }
    let m = cs.params.m;
    let w = drift_residual(u, cs, sigma)?;
    let integrand: Vec<f64> = u.values().iter().zip(w.values()).map(|(x, w)| x * w * w).collect();
    let tail = u.tail_exponent() + 2.0;
    let body = RadialField::with_tail(u.grid().clone(), integrand, tail, crate::radial::Parity::Even)?;
    Ok(sigma.powf(-cs.params.fisher_sigma_exponent()) * m / (1.0 - m) * body.integrate(0)?)
}

fn check_gn_input(f: &RadialFunction) -> Result<()> {
    if f.values().iter().all(|v| *v == 0.0) {
        return domain("GN deficit needs a profile with positive 2p-norm");
    }
    Ok(())
}

/// Deficit of the non-homogeneous GN inequality, the manifold distance to the
/// matched optimal function and the lower bound `C_pd R^2 / (int f^{2p})^gamma`.
pub fn gn_deficit(f: &RadialFunction, cs: &ConstantSet) -> Result<DeficitReport> {
    check_gn_input(f)?;
    let params = &cs.params;
    let (p, g) = (params.p, params.gamma);
    let df = differentiate(f);
    let grad_term = df.map(|_, v| v * v, 2.0 * df.tail_exponent())?.integrate(0)?;
    let lp1_term = f.powf(p + 1.0).integrate(0)?;
    let u = f.powf(2.0 * p);
    let l2p_norm_pow = u.integrate(0)?;
    if !(l2p_norm_pow > 0.0) {
        return domain("GN deficit needs a profile with positive 2p-norm");
    }
    let gn_deficit = grad_term + lp1_term - cs.k_pd * l2p_norm_pow.powf(g);
    let matched = best_match_sigma(&u, cs)?;
    let manifold_distance = manifold_distance(f, cs, matched.sigma, matched.mass)?;
    let improvement_bound = cs.c_pd * manifold_distance.powi(2) / l2p_norm_pow.powf(g);
    let ratio = matched.second_moment / l2p_norm_pow.powf(g);
    let normalized = ((ratio - cs.normalization_rhs) / cs.normalization_rhs).abs() <= 1e-6;
    Ok(DeficitReport {
        grad_term,
        lp1_term,
        l2p_norm_pow,
        gn_deficit,
        improvement_bound,
        manifold_distance,
        matched,
        normalized,
    })
}

/// `int [g^{1-p}(f^{2p} - g^{2p}) - 2p/(p+1) (f^{p+1} - g^{p+1})]` for the optimal
/// function `g` with the given mass and scale.
pub fn manifold_distance(f: &RadialFunction, cs: &ConstantSet, sigma: f64, mass: f64) -> Result<f64> {
    let params = &cs.params;
    let p = params.p;
    let cm = cs.c_m_at(mass);
    let pre = sigma.powf(-params.df() / (4.0 * p));
    let v: Vec<f64> = f
        .grid()
        .nodes()
        .iter()
        .zip(f.values())
        .map(|(&r, &fv)| {
            let gv = pre * (cm + r * r / sigma).powf(-1.0 / (p - 1.0));
            let t = gv.powf(1.0 - p) * (fv.powf(2.0 * p) - gv.powf(2.0 * p))
                - 2.0 * p / (p + 1.0) * (fv.powf(p + 1.0) - gv.powf(p + 1.0));
            t.max(0.0)
        })
        .collect();
    let tg = -2.0 / (p - 1.0);
    let tail = ((p + 1.0) * f.tail_exponent()).max((p + 1.0) * tg).max((1.0 - p) * tg + 2.0 * p * f.tail_exponent());
    RadialField::with_tail(f.grid().clone(), v, tail, crate::radial::Parity::Even)?.integrate(0)
}

/// Rescale `f` so that the matched scale of `f^{2p}` becomes sigma*; returns the
/// dilation factor `lambda = sqrt(sigma / sigma*)` as well.
pub fn normalize_to_sigma_star(f: &RadialFunction, cs: &ConstantSet) -> Result<(RadialFunction, f64)> {
    check_gn_input(f)?;
    let p = cs.params.p;
    let (sigma, _, _) = matched_scale(&f.powf(2.0 * p), cs)?;
    let lambda = (sigma / cs.sigma_star).sqrt();
    let scaled = resample_scaled(f, lambda, lambda.powf(cs.params.df() / (2.0 * p)))?;
    Ok((scaled, lambda))
}

/// Distances between `u` and its matched Barenblatt `B`.
#[derive(Clone, Debug, Serialize)]
pub struct Distances {
    pub sigma: f64,
    pub mass: f64,
    pub entropy: f64,
    /// `int |u - B|`
    pub l1: f64,
    /// `int |x|^2 |u - B|`
    pub weighted_l1: f64,
    /// `int |u^m - B^m|`
    pub l1_power: f64,
    /// `int B^m`
    pub int_bm: f64,
}

pub fn distances(u: &RadialFunction, cs: &ConstantSet) -> Result<Distances> {
    let (sigma, mass, _) = matched_scale(u, cs)?;
    let entropy = relative_entropy(u, cs, sigma, mass)?;
    let m = cs.params.m;
    let b = barenblatt_samples(u, cs, sigma, mass);
    let tb = cs.params.barenblatt_tail_exponent();
    let slow = u.tail_exponent().max(tb);
    let field = |v: Vec<f64>, t: f64| RadialField::with_tail(u.grid().clone(), v, t, crate::radial::Parity::Even);
    let diff: Vec<f64> = u.values().iter().zip(&b).map(|(x, y)| x - y).collect();
    let pdiff: Vec<f64> = u.values().iter().zip(&b).map(|(x, y)| x.powf(m) - y.powf(m)).collect();
    let grid = u.grid();
    Ok(Distances {
        sigma,
        mass,
        entropy,
        l1: grid.integrate_abs(&diff, slow, 0)?,
        weighted_l1: grid.integrate_abs(&diff, slow, 2)?,
        l1_power: grid.integrate_abs(&pdiff, m * slow, 0)?,
        int_bm: field(b.iter().map(|y| y.powf(m)).collect(), m * tb)?.integrate(0)?,
    })
}

fn check_ck_range(cs: &ConstantSet) -> Result<()> {
    let pr = &cs.params;
    if !(pr.m > pr.m_tilde_1 && pr.m < 1.0) {
        return domain(format!("Csiszar-Kullback bound needs m in ({}, 1), got m = {}", pr.m_tilde_1, pr.m));
    }
    Ok(())
}

/// `(F/sigma^{d(1-m)/2}, m/(8 int B_1^m) (C_M ||u-B||_1 + sigma^{-1} int |x|^2 |u-B|)^2)`.
pub fn ck_bound(u: &RadialFunction, cs: &ConstantSet) -> Result<(f64, f64)> {
    check_ck_range(cs)?;
    let ds = distances(u, cs)?;
    let m = cs.params.m;
    let lhs = ds.entropy / ds.sigma.powf(cs.params.entropy_sigma_exponent());
    let inner = cs.c_m_at(ds.mass) * ds.l1 + ds.weighted_l1 / ds.sigma;
    Ok((lhs, m / (8.0 * cs.int_b1_m_at(ds.mass)) * inner * inner))
}

/// `(F, ||u^m - B^m||_1^2 / (m 2^{2m} ||B^m||_1))`.
pub fn ck_variant_bound(u: &RadialFunction, cs: &ConstantSet) -> Result<(f64, f64)> {
    check_ck_range(cs)?;
    let ds = distances(u, cs)?;
    let m = cs.params.m;
    Ok((ds.entropy, ds.l1_power.powi(2) / (m * 2f64.powf(2.0 * m) * ds.int_bm)))
}

/// Terms of the improved entropy-entropy production inequality.
#[derive(Clone, Debug, Serialize)]
pub struct EepTerms {
    pub sigma: f64,
    pub fisher: f64,
    pub entropy: f64,
    /// `C_md F^2 / sigma^{d(1-m)/2}` at the profile's own mass.
    pub improvement: f64,
    pub residual: f64,
}

pub fn improved_eep_terms(u: &RadialFunction, cs: &ConstantSet) -> Result<EepTerms> {
    let pr = &cs.params;
    if !(pr.m > pr.m_1 && pr.m < 1.0) {
        return domain(format!("improved inequality needs m in ({}, 1), got m = {}", pr.m_1, pr.m));
    }
    let (sigma, mass, _) = matched_scale(u, cs)?;
    let entropy = relative_entropy(u, cs, sigma, mass)?;
    let fisher = fisher_information(u, cs, sigma)?;
    let improvement = cs.c_md_at(mass) * entropy * entropy / sigma.powf(pr.entropy_sigma_exponent());
    Ok(EepTerms { sigma, fisher, entropy, improvement, residual: fisher - 4.0 * entropy - improvement })
}

/// `I - 4F - C_md F^2 / sigma^{d(1-m)/2}` at the matched scale.
pub fn improved_eep_residual(u: &RadialFunction, cs: &ConstantSet) -> Result<f64> {
    Ok(improved_eep_terms(u, cs)?.residual)
}

/// Lower bounds of the deficit and of the manifold distance in terms of `||f^{2p} - g^{2p}||_1`.
#[derive(Clone, Debug, Serialize)]
pub struct L1Bounds {
    pub l1_distance: f64,
    /// `frak_c (int f^{2p})^{gamma-4} ||f^{2p} - g^{2p}||_1^4`
    pub deficit_lower: f64,
    /// `C_CK (int f^{2p})^{gamma-2} ||f^{2p} - g^{2p}||_1^2`
    pub distance_lower: f64,
    /// Same without the mass factor.
    pub distance_lower_unscaled: f64,
}

pub fn l1_bounds(f: &RadialFunction, cs: &ConstantSet) -> Result<L1Bounds> {
    let p = cs.params.p;
    let g = cs.params.gamma;
    let u = f.powf(2.0 * p);
    let ds = distances(&u, cs)?;
    let mass = ds.mass;
    Ok(L1Bounds {
        l1_distance: ds.l1,
        deficit_lower: cs.frak_c * mass.powf(g - 4.0) * ds.l1.powi(4),
        distance_lower: cs.c_ck * mass.powf(g - 2.0) * ds.l1.powi(2),
        distance_lower_unscaled: cs.c_ck * ds.l1.powi(2),
    })
}
