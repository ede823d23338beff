//! Exponents attached to a dimension `d` and a GN exponent `p`.

use serde::Serialize;

use crate::error::{domain, GnsError, Result};
use crate::special::log_gamma;

/// Reference mass for a parameter set: either the mass `M*` of the optimal
/// profile (so that `C_M = 1`) or an explicit positive value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Mass {
    Reference,
    Value(f64),
}

/// Every exponent of the problem, derived from `(d, p)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Params {
    pub d: u32,
    pub p: f64,
    pub m: f64,
    pub gamma: f64,
    pub theta: f64,
    pub m_c: f64,
    pub m_1: f64,
    pub m_tilde_1: f64,
    pub alpha: f64,
    pub beta: f64,
    pub eta: f64,
    pub mass: f64,
}

/// Diffusion exponent `m = (p+1)/(2p)`.
pub fn m_from_p(p: f64) -> f64 {
    (p + 1.0) / (2.0 * p)
}

/// Inverse map `p = 1/(2m-1)`.
pub fn p_from_m(m: f64) -> f64 {
    1.0 / (2.0 * m - 1.0)
}

fn check_range(d: u32, p: f64) -> Result<()> {
    if d < 2 {
        return domain(format!("dimension d = {d} violates d >= 2"));
    }
    if !p.is_finite() || p <= 1.0 {
        return domain(format!("exponent p = {p} violates p > 1"));
    }
    if d >= 3 {
        let crit = d as f64 / (d as f64 - 2.0);
        if (p - crit).abs() <= 1e-12 * crit {
            return Err(GnsError::CriticalCase { d, p });
        }
        if p > crit {
            return domain(format!("exponent p = {p} violates p < d/(d-2) = {crit} for d = {d}"));
        }
    }
    Ok(())
}

/// ln M* = (d/2) ln(pi) + ln Gamma(d(m-m_c)/(2(1-m))) - ln Gamma(1/(1-m)).
pub(crate) fn log_m_star(d: u32, m: f64) -> Result<f64> {
    let df = d as f64;
    let m_c = (df - 2.0) / df;
    let a = df * (m - m_c) / (2.0 * (1.0 - m));
    let b = 1.0 / (1.0 - m);
    Ok(0.5 * df * std::f64::consts::PI.ln() + log_gamma(a)? - log_gamma(b)?)
}

/// Build the parameter set for `(d, p)` and a reference mass.
pub fn derive_params(d: u32, p: f64, mass: Mass) -> Result<Params> {
    check_range(d, p)?;
    let df = d as f64;
    let m = m_from_p(p);
    let mass = match mass {
        Mass::Reference => log_m_star(d, m)?.exp(),
        Mass::Value(v) if v > 0.0 && v.is_finite() => v,
        Mass::Value(v) => return domain(format!("mass M = {v} violates M > 0")),
    };
    let m_c = (df - 2.0) / df;
    let q = df + 2.0 - p * (df - 2.0);
    Ok(Params {
        d,
        p,
        m,
        gamma: q / (df - p * (df - 4.0)),
        theta: (p - 1.0) / p * df / q,
        m_c,
        m_1: (df - 1.0) / df,
        m_tilde_1: df / (df + 2.0),
        alpha: df / p + 2.0 - df,
        beta: df * (p - 1.0) / (2.0 * p),
        eta: 1.0 / (p * q),
        mass,
    })
}

/// Same as [`derive_params`] with the diffusion exponent `m` as input.
pub fn derive_params_from_m(d: u32, m: f64, mass: Mass) -> Result<Params> {
    if !(m > 0.5 && m < 1.0) {
        return domain(format!("diffusion exponent m = {m} violates 1/2 < m < 1"));
    }
    derive_params(d, p_from_m(m), mass)
}

impl Params {
    pub fn df(&self) -> f64 {
        self.d as f64
    }

    /// Same exponents, different reference mass.
    pub fn with_mass(&self, mass: f64) -> Result<Params> {
        derive_params(self.d, self.p, Mass::Value(mass))
    }

    /// d(m - m_c)/2, the power of sigma in front of the Fisher information.
    pub fn fisher_sigma_exponent(&self) -> f64 {
        0.5 * self.df() * (self.m - self.m_c)
    }

    /// d(1 - m)/2, the power of sigma scaling the entropy.
    pub fn entropy_sigma_exponent(&self) -> f64 {
        0.5 * self.df() * (1.0 - self.m)
    }

    /// 2(1-m)/(d(m-m_c)), the exponent in C_M = (M*/M)^{...}.
    pub fn mass_exponent(&self) -> f64 {
        2.0 * (1.0 - self.m) / (self.df() * (self.m - self.m_c))
    }

    /// Decay exponent 2/(m-1) of Barenblatt profiles.
    pub fn barenblatt_tail_exponent(&self) -> f64 {
        2.0 / (self.m - 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn d2_p2() {
        let p = derive_params(2, 2.0, Mass::Reference).unwrap();
        assert_eq!(p.m, 0.75);
        assert!((p.gamma - 2.0 / 3.0).abs() < 1e-15);
        assert!((p.theta - 0.25).abs() < 1e-15);
        assert_eq!((p.m_c, p.m_1, p.alpha, p.beta, p.eta), (0.0, 0.5, 1.0, 0.5, 0.125));
        assert!((p.mass - std::f64::consts::PI / 3.0).abs() < 1e-14);
    }

    #[test]
    fn d3_p2() {
        let p = derive_params(3, 2.0, Mass::Reference).unwrap();
        assert_eq!(p.m, 0.75);
        assert!((p.gamma - 0.6).abs() < 1e-15);
        assert!((p.theta - 0.5).abs() < 1e-15);
    }

    #[test]
    fn critical_and_out_of_range() {
        assert!(matches!(derive_params(3, 3.0, Mass::Reference), Err(GnsError::CriticalCase { d: 3, .. })));
        assert!(matches!(derive_params(3, 3.5, Mass::Reference), Err(GnsError::Domain(_))));
        assert!(matches!(derive_params(1, 2.0, Mass::Reference), Err(GnsError::Domain(_))));
        assert!(matches!(derive_params(2, 1.0, Mass::Reference), Err(GnsError::Domain(_))));
        assert!(matches!(derive_params(2, 2.0, Mass::Value(0.0)), Err(GnsError::Domain(_))));
    }

    #[test]
    fn from_m_matches() {
        let a = derive_params_from_m(2, 0.75, Mass::Value(1.0)).unwrap();
        let b = derive_params(2, 2.0, Mass::Value(1.0)).unwrap();
        assert_eq!(a, b);
        assert!(derive_params_from_m(2, 0.5, Mass::Reference).is_err());
    }
}
