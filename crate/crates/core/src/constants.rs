//! Closed-form constants and their numerical cross-checks.

use serde::{Deserialize, Serialize};

use crate::error::{GnsError, Result};
use crate::optimize::golden_section_log;
use crate::params::{derive_params, log_m_star, Mass, Params};
use crate::profiles::{barenblatt, optimal_f, working_radius};
use crate::radial::{build_grid, differentiate, RadialFunction};
use crate::special::log_gamma;

/// Which formula fixes the normalizing scale sigma*.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum SigmaStarRule {
    /// Solves `m(1-m)/(2m-1)^2 sigma^{d(m-m_c)/2} = d(m-m_1)/(1-m)`.
    #[default]
    Corrected,
    /// Same power with numerator `d+2-p(d-2)`; kept only as a negative control.
    Uncorrected,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConstantSet {
    pub params: Params,
    pub rule: SigmaStarRule,
    pub m_star: f64,
    pub c_1: f64,
    pub k_1: f64,
    pub c_m: f64,
    pub k_m: f64,
    /// `int B_1^m` at the reference mass.
    pub int_b1_m: f64,
    pub sigma_star: f64,
    pub c_gn: f64,
    pub k_pd: f64,
    pub c_pd: f64,
    pub c_ck: f64,
    pub frak_c: f64,
    pub c_md: f64,
    pub kappa_1: f64,
    pub kappa_2: f64,
    pub normalization_rhs: f64,
}

/// The exported subset, with the documented key names and order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantsRecord {
    pub m_star: f64,
    pub c_m: f64,
    pub k_m: f64,
    pub sigma_star: f64,
    pub c_gn: f64,
    pub k_pd: f64,
    pub c_pd: f64,
    pub c_ck: f64,
    pub frak_c: f64,
    pub c_md: f64,
    pub kappa_1: f64,
    pub kappa_2: f64,
    pub normalization_rhs: f64,
}

pub const CONSTANTS_CSV_HEADER: &str =
    "m_star,c_m,k_m,sigma_star,c_gn,k_pd,c_pd,c_ck,frak_c,c_md,kappa_1,kappa_2,normalization_rhs";

impl ConstantsRecord {
    pub fn csv_row(&self) -> String {
        [
            self.m_star,
            self.c_m,
            self.k_m,
            self.sigma_star,
            self.c_gn,
            self.k_pd,
            self.c_pd,
            self.c_ck,
            self.frak_c,
            self.c_md,
            self.kappa_1,
            self.kappa_2,
            self.normalization_rhs,
        ]
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
    }
}

/// `K_1 = d(1-m)/((d+2)m-d) M*^{1-gamma}`, so that `K_M = K_1 M^gamma`.
pub(crate) fn k_1(params: &Params) -> f64 {
    let df = params.df();
    let m = params.m;
    let lm = log_m_star(params.d, m).expect("admissible params");
    df * (1.0 - m) / ((df + 2.0) * m - df) * ((1.0 - params.gamma) * lm).exp()
}

/// sigma* under the chosen rule.
pub fn sigma_star(params: &Params, rule: SigmaStarRule) -> f64 {
    let (d, p) = (params.df(), params.p);
    let numerator = match rule {
        SigmaStarRule::Corrected => d - p * (d - 2.0),
        SigmaStarRule::Uncorrected => d + 2.0 - p * (d - 2.0),
    };
    let base = 4.0 * numerator / ((p - 1.0).powi(2) * (p + 1.0));
    base.powf(4.0 * p / (d - p * (d - 4.0)))
}

/// Optimal constant of the homogeneous GN inequality, evaluated in log form.
pub fn c_gn(params: &Params) -> Result<f64> {
    c_gn_dp(params.d, params.p)
}

fn check_gn_range(d: u32, p: f64) -> Result<()> {
    let crit = if d > 2 { d as f64 / (d as f64 - 2.0) } else { f64::INFINITY };
    if d < 2 || !(p > 1.0 && p <= crit * (1.0 + 1e-12)) {
        return Err(GnsError::Domain(format!("GN constant needs d >= 2 and 1 < p <= d/(d-2), got d = {d}, p = {p}")));
    }
    Ok(())
}

/// [`c_gn`] from `(d, p)` alone.  The closed form stays finite at the Sobolev endpoint
/// `p = d/(d-2)`, which is accepted here even though the rest of the crate rejects it.
pub fn c_gn_dp(d: u32, p: f64) -> Result<f64> {
    check_gn_range(d, p)?;
    let d = d as f64;
    let q = d + 2.0 - p * (d - 2.0);
    let eta = 1.0 / (p * q);
    let s = (p + 1.0) / (p - 1.0);
    let t1 = eta * ((p + 1.0) * (p - 1.0).ln() - (d + 1.0 - p * (d - 1.0)) * (p + 1.0).ln());
    let t2 = (q / (2.0 * (p - 1.0))).ln() / (2.0 * p);
    let t3 =
        (p - 1.0) * eta * (log_gamma(s)? - 0.5 * d * (2.0 * std::f64::consts::PI * d).ln() - log_gamma(s - 0.5 * d)?);
    Ok((t1 + t2 + t3).exp())
}

/// Norms of `F_p = (1+r^2)^{-1/(p-1)}` and its GN quotient.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct GnTerms {
    /// `||grad F_p||_2^2`
    pub grad: f64,
    /// `||F_p||_{p+1}^{p+1}`
    pub lp1: f64,
    /// `||F_p||_{2p}^{2p}`
    pub l2p: f64,
    /// `||F_p||_{2p} / (||grad F_p||_2^theta ||F_p||_{p+1}^{1-theta})`
    pub quotient: f64,
}

/// [`GnTerms`] by quadrature on `n` graded nodes up to `r_max`.
pub fn optimizer_gn_terms(d: u32, p: f64, n: usize, r_max: f64) -> Result<GnTerms> {
    check_gn_range(d, p)?;
    let grid = build_grid(d, n, r_max, 2.0)?;
    let df = d as f64;
    let tau = -2.0 / (p - 1.0);
    let v = grid.nodes().iter().map(|r| (1.0 + r * r).powf(-1.0 / (p - 1.0))).collect();
    let f = RadialFunction::with_tail(grid, v, tau)?;
    let g = differentiate(&f);
    let grad = g.map(|_, v| v * v, 2.0 * g.tail_exponent())?.integrate(0)?;
    let lp1 = f.powf(p + 1.0).integrate(0)?;
    let l2p = f.powf(2.0 * p).integrate(0)?;
    let theta = (p - 1.0) / p * df / (df + 2.0 - p * (df - 2.0));
    let quotient = l2p.powf(1.0 / (2.0 * p)) / (grad.powf(0.5 * theta) * lp1.powf((1.0 - theta) / (p + 1.0)));
    Ok(GnTerms { grad, lp1, l2p, quotient })
}

/// GN quotient of the optimal function `F_p`, see [`optimizer_gn_terms`].
pub fn optimizer_gn_quotient(d: u32, p: f64, n: usize, r_max: f64) -> Result<f64> {
    Ok(optimizer_gn_terms(d, p, n, r_max)?.quotient)
}

/// `(alpha+beta) / (alpha^{alpha/(alpha+beta)} beta^{beta/(alpha+beta)})`, the value of
/// `K_pd (C_GN)^{2p gamma}` obtained by optimizing over dilations.
pub fn dilation_optimum(params: &Params) -> f64 {
    let (a, b) = (params.alpha, params.beta);
    let s = a + b;
    s / (a.powf(a / s) * b.powf(b / s))
}

pub fn compute_constants(params: &Params) -> Result<ConstantSet> {
    compute_constants_with(params, SigmaStarRule::Corrected)
}

pub fn compute_constants_with(params: &Params, rule: SigmaStarRule) -> Result<ConstantSet> {
    let (d, m, p, g) = (params.df(), params.m, params.p, params.gamma);
    let (m_c, m_1) = (params.m_c, params.m_1);
    let lm = log_m_star(params.d, m)?;
    let m_star = lm.exp();
    let c_1 = ((1.0 - g) * lm).exp();
    let k_1 = k_1(params);
    let mass = params.mass;
    let c_m = (m_star / mass).powf(params.mass_exponent());
    let k_m = k_1 * mass.powf(g);
    let denom = (d + 2.0) * m - d;
    let int_b1_m = 2.0 * m / denom * c_1 * mass.powf(g);
    let sigma_star = sigma_star(params, rule);
    let c_gn = c_gn(params)?;
    let k_pd = ((2.0 * m - 1.0) / (1.0 - m)).powi(2) * d * (m - m_c) / denom
        * ((1.0 - g) * lm - d * (m - m_1) * sigma_star.ln()).exp();
    let c_pd = (2.0 * m - 1.0).powi(2) / (8.0 * (1.0 - m).powi(2))
        * denom
        * d
        * d
        * (m - m_c)
        * (m - m_1)
        * ((g - 1.0) * lm).exp()
        / sigma_star;
    let c_ck = (p - 1.0) / (p + 1.0) * (d + 2.0 - p * (d - 2.0)) / (32.0 * p)
        * (d * (p - 1.0) / (4.0 * p) * sigma_star.ln() + (1.0 - g) * lm).exp();
    let kappa_1 = 2.0 * d * (1.0 - m).powi(2) / (m * k_m);
    let kappa_2 = 0.5 * (m - m_c) * (m - m_1) * d * d;
    let c_md = d.powi(3) * (m - m_c) * (m - m_1) * (1.0 - m).powi(2) / (2.0 * m * k_m);
    let normalization_rhs = sigma_star * d * (p - 1.0) / (d + 2.0 - p * (d - 2.0)) * c_1;
    Ok(ConstantSet {
        params: params.clone(),
        rule,
        m_star,
        c_1,
        k_1,
        c_m,
        k_m,
        int_b1_m,
        sigma_star,
        c_gn,
        k_pd,
        c_pd,
        c_ck,
        frak_c: c_pd * c_ck * c_ck,
        c_md,
        kappa_1,
        kappa_2,
        normalization_rhs,
    })
}

impl ConstantSet {
    pub fn record(&self) -> ConstantsRecord {
        ConstantsRecord {
            m_star: self.m_star,
            c_m: self.c_m,
            k_m: self.k_m,
            sigma_star: self.sigma_star,
            c_gn: self.c_gn,
            k_pd: self.k_pd,
            c_pd: self.c_pd,
            c_ck: self.c_ck,
            frak_c: self.frak_c,
            c_md: self.c_md,
            kappa_1: self.kappa_1,
            kappa_2: self.kappa_2,
            normalization_rhs: self.normalization_rhs,
        }
    }

    /// `C_M` at an arbitrary mass.
    pub fn c_m_at(&self, mass: f64) -> f64 {
        (self.m_star / mass).powf(self.params.mass_exponent())
    }

    /// `K_M` at an arbitrary mass.
    pub fn k_m_at(&self, mass: f64) -> f64 {
        self.k_1 * mass.powf(self.params.gamma)
    }

    /// `int B_1^m` at an arbitrary mass.
    pub fn int_b1_m_at(&self, mass: f64) -> f64 {
        let (d, m) = (self.params.df(), self.params.m);
        2.0 * m / ((d + 2.0) * m - d) * self.c_1 * mass.powf(self.params.gamma)
    }

    pub fn kappa_1_at(&self, mass: f64) -> f64 {
        let (d, m) = (self.params.df(), self.params.m);
        2.0 * d * (1.0 - m).powi(2) / (m * self.k_m_at(mass))
    }

    pub fn c_md_at(&self, mass: f64) -> f64 {
        0.5 * self.kappa_1_at(mass) * self.kappa_2
    }

    /// `K_pd` written with `p` only (exponent of sigma* is `d(p-1)/(2p) - 1`).
    pub fn k_pd_p_form(&self) -> f64 {
        let (d, p, g) = (self.params.df(), self.params.p, self.params.gamma);
        4.0 / (p - 1.0).powi(2) * (d - p * (d - 4.0)) / (d + 2.0 - p * (d - 2.0))
            * self.m_star.powf(1.0 - g)
            * self.sigma_star.powf(d * (p - 1.0) / (2.0 * p) - 1.0)
    }

    /// `C_pd` written with `p` only.
    pub fn c_pd_p_form(&self) -> f64 {
        let (d, p, g) = (self.params.df(), self.params.p, self.params.gamma);
        (d - p * (d - 4.0)) * (d - p * (d - 2.0)) * (d + 2.0 - p * (d - 2.0)) / (16.0 * p.powi(3) * (p - 1.0).powi(2))
            * self.m_star.powf(g - 1.0)
            / self.sigma_star
    }
}

/// Quadrature settings for numerical cross-checks.
#[derive(Clone, Copy, Debug)]
pub struct QuadratureSettings {
    pub nodes: usize,
    pub q: f64,
    /// Relative tolerance the refinement estimate must meet.
    pub tol: f64,
}

impl Default for QuadratureSettings {
    fn default() -> Self {
        QuadratureSettings { nodes: 4000, q: 2.0, tol: 1e-9 }
    }
}

/// Residuals of the internal consistency checks; the caller chooses tolerances.
#[derive(Clone, Debug, Serialize)]
pub struct ConsistencyReport {
    /// `K_pd C_GN^{2p gamma}` and the dilation optimum.
    pub relation_lhs: f64,
    pub relation_rhs: f64,
    pub residual_a: f64,
    /// `K_pd` from minimizing over dilations of `F_p`.
    pub oracle_k_pd: f64,
    pub oracle_lambda: f64,
    pub residual_b: f64,
    /// `|oracle_lambda - sigma*^{-1/2}| / sigma*^{-1/2}`.
    pub lambda_residual: f64,
    pub gn_quotient: f64,
    pub residual_c: f64,
    pub k_pd_p_form: f64,
    pub c_pd_p_form: f64,
    pub residual_d: f64,
    pub ipp_lhs: f64,
    pub ipp_rhs: f64,
    pub residual_e: f64,
    /// Closed forms of `M*`, `K_M`, `int B_1^m` against quadrature.
    pub m_star_quadrature: f64,
    pub k_m_quadrature: f64,
    pub int_b1_m_quadrature: f64,
    pub quadrature_residual: f64,
    /// Relative change of the quadratures under grid refinement.
    pub refinement_estimate: f64,
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

struct Quadratures {
    grad: f64,
    lp1: f64,
    l2p: f64,
    mass: f64,
    m2: f64,
    int_um: f64,
}

fn quadratures(params: &Params, cs: &ConstantSet, n: usize, q: f64) -> Result<Quadratures> {
    let r_max = working_radius(params, cs.m_star, 1.0).max(working_radius(params, params.mass, 1.0));
    let grid = build_grid(params.d, n, r_max, q)?;
    let p = params.p;
    let f = optimal_f(params, cs.m_star, 1.0, &grid)?;
    let df = differentiate(&f);
    let grad = df.map(|_, v| v * v, 2.0 * df.tail_exponent())?.integrate(0)?;
    let lp1 = f.powf(p + 1.0).integrate(0)?;
    let l2p = f.powf(2.0 * p).integrate(0)?;
    let b = barenblatt(params, params.mass, 1.0, &grid)?;
    Ok(Quadratures {
        grad,
        lp1,
        l2p,
        mass: b.integrate(0)?,
        m2: b.integrate(2)?,
        int_um: b.powf(params.m).integrate(0)?,
    })
}

pub fn cross_check_constants(params: &Params) -> Result<ConsistencyReport> {
    cross_check_constants_with(params, SigmaStarRule::Corrected, QuadratureSettings::default())
}

pub fn cross_check_constants_with(
    params: &Params,
    rule: SigmaStarRule,
    settings: QuadratureSettings,
) -> Result<ConsistencyReport> {
    let cs = compute_constants_with(params, rule)?;
    let qd = quadratures(params, &cs, settings.nodes, settings.q)?;
    let fine = quadratures(params, &cs, 2 * settings.nodes - 1, settings.q)?;
    let refinement_estimate = [
        rel(qd.grad, fine.grad),
        rel(qd.lp1, fine.lp1),
        rel(qd.l2p, fine.l2p),
        rel(qd.mass, fine.mass),
        rel(qd.m2, fine.m2),
        rel(qd.int_um, fine.int_um),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    if !(refinement_estimate <= settings.tol) {
        return Err(GnsError::Numerical {
            what: "constants cross-check quadrature".into(),
            achieved: refinement_estimate,
            required: settings.tol,
        });
    }

    let (alpha, beta, g, p) = (params.alpha, params.beta, params.gamma, params.p);
    let relation_lhs = cs.k_pd * cs.c_gn.powf(2.0 * p * g);
    let relation_rhs = dilation_optimum(params);

    let (a, b, c) = (qd.grad, qd.lp1, qd.l2p);
    let phi = |l: f64| a * l.powf(alpha) + b * l.powf(-beta);
    let (lambda, phi_min) = golden_section_log(phi, 1e-4, 1e4, 1e-12);
    let oracle_k_pd = phi_min / c.powf(g);
    let lambda_target = cs.sigma_star.powf(-0.5);

    let theta = params.theta;
    let gn_quotient = c.powf(1.0 / (2.0 * p)) / (a.powf(0.5 * theta) * b.powf((1.0 - theta) / (p + 1.0)));

    let (d, m) = (params.df(), params.m);
    let ipp_lhs = d * cs.int_b1_m;
    let ipp_rhs = 2.0 * m / (1.0 - m) * cs.k_m;

    let quadrature_residual =
        rel(qd.mass, params.mass).max(rel(qd.l2p, cs.m_star)).max(rel(qd.m2, cs.k_m)).max(rel(qd.int_um, cs.int_b1_m));

    Ok(ConsistencyReport {
        relation_lhs,
        relation_rhs,
        residual_a: rel(relation_lhs, relation_rhs),
        oracle_k_pd,
        oracle_lambda: lambda,
        residual_b: rel(oracle_k_pd, cs.k_pd),
        lambda_residual: rel(lambda, lambda_target),
        gn_quotient,
        residual_c: rel(gn_quotient, cs.c_gn),
        k_pd_p_form: cs.k_pd_p_form(),
        c_pd_p_form: cs.c_pd_p_form(),
        residual_d: rel(cs.k_pd_p_form(), cs.k_pd).max(rel(cs.c_pd_p_form(), cs.c_pd)),
        ipp_lhs,
        ipp_rhs,
        residual_e: rel(ipp_lhs, ipp_rhs),
        m_star_quadrature: qd.l2p,
        k_m_quadrature: qd.m2,
        int_b1_m_quadrature: qd.int_um,
        quadrature_residual,
        refinement_estimate,
    })
}

/// One row of the endpoint scan.
#[derive(Clone, Debug, Serialize)]
pub struct EndpointRow {
    pub p: f64,
    pub c_pd: Option<f64>,
    pub c_ck: Option<f64>,
    pub k_pd: Option<f64>,
    pub status: String,
}

/// Constants along a grid of exponents; the critical and out-of-range points are flagged.
pub fn endpoint_scan(d: u32, p_grid: &[f64]) -> Vec<EndpointRow> {
    p_grid
        .iter()
        .map(|&p| match derive_params(d, p, Mass::Reference).and_then(|pr| compute_constants(&pr)) {
            Ok(cs) => {
                EndpointRow { p, c_pd: Some(cs.c_pd), c_ck: Some(cs.c_ck), k_pd: Some(cs.k_pd), status: "ok".into() }
            }
            Err(GnsError::CriticalCase { .. }) => {
                EndpointRow { p, c_pd: None, c_ck: None, k_pd: None, status: "critical, skipped".into() }
            }
            Err(e) => EndpointRow { p, c_pd: None, c_ck: None, k_pd: None, status: format!("skipped: {e}") },
        })
        .collect()
}
