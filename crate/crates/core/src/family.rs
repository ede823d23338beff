//! Seeded families of perturbed Barenblatt profiles used by the property sweeps.

use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::constants::ConstantSet;
use crate::error::{GnsError, Result};
use crate::params::Params;
use crate::profiles::{barenblatt, barenblatt_value, c_m, m_star, working_radius};
use crate::radial::{build_grid, RadialFunction, RadialGrid};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyKind {
    /// `c B_{sigma_1} + (1-c) B_{sigma_2}`
    TwoScaleMix,
    /// `B_sigma (1 + eps r^2/(1+r^2))`
    TiltedPower,
    /// `B_sigma` plus a truncated quartic bump.
    CompactBump,
    /// Round-robin over the three families above.
    Mixed,
}

impl FamilyKind {
    pub fn name(self) -> &'static str {
        match self {
            FamilyKind::TwoScaleMix => "two-scale-mix",
            FamilyKind::TiltedPower => "tilted-power",
            FamilyKind::CompactBump => "compact-bump",
            FamilyKind::Mixed => "mixed",
        }
    }
}

impl FromStr for FamilyKind {
    type Err = GnsError;

    fn from_str(s: &str) -> Result<FamilyKind> {
        match s {
            "two-scale-mix" => Ok(FamilyKind::TwoScaleMix),
            "tilted-power" => Ok(FamilyKind::TiltedPower),
            "compact-bump" => Ok(FamilyKind::CompactBump),
            "mixed" => Ok(FamilyKind::Mixed),
            other => Err(GnsError::Usage(format!(
                "unknown family '{other}' (expected two-scale-mix, tilted-power, compact-bump or mixed)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FamilyDescriptor {
    pub kind: FamilyKind,
    pub trials: usize,
    pub seed: u64,
}

/// Parameters of one family member, kept so a member can be rebuilt or reported.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum Member {
    TwoScaleMix {
        c: f64,
        sigma_1: f64,
        sigma_2: f64,
        mass: f64,
    },
    TiltedPower {
        eps: f64,
        sigma: f64,
        mass: f64,
    },
    /// `B_sigma + a (1 - ((r - center)/width)^2)^2_+` with `a` relative to `B_sigma(0)`.
    CompactBump {
        sigma: f64,
        mass: f64,
        amplitude: f64,
        center: f64,
        width: f64,
    },
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.gen_range(lo.ln()..hi.ln())).exp()
}

/// The fixed mixture `B_1/2 + B_4/2` at the reference mass.
pub fn reference_mixture(params: &Params) -> Member {
    Member::TwoScaleMix { c: 0.5, sigma_1: 1.0, sigma_2: 4.0, mass: m_star(params) }
}

fn draw(kind: FamilyKind, index: usize, params: &Params, rng: &mut ChaCha8Rng) -> Member {
    let ms = m_star(params);
    match kind {
        FamilyKind::Mixed => {
            let k = [FamilyKind::TwoScaleMix, FamilyKind::TiltedPower, FamilyKind::CompactBump][index % 3];
            draw(k, index / 3, params, rng)
        }
        FamilyKind::TwoScaleMix if index == 0 => reference_mixture(params),
        FamilyKind::TwoScaleMix => Member::TwoScaleMix {
            c: rng.gen_range(0.1..0.9),
            sigma_1: log_uniform(rng, 0.25, 4.0),
            sigma_2: log_uniform(rng, 0.25, 4.0),
            mass: log_uniform(rng, 0.5 * ms, 2.0 * ms),
        },
        FamilyKind::TiltedPower => Member::TiltedPower {
            eps: rng.gen_range(-0.5..1.0),
            sigma: log_uniform(rng, 0.25, 4.0),
            mass: log_uniform(rng, 0.5 * ms, 2.0 * ms),
        },
        FamilyKind::CompactBump => {
            let sigma = log_uniform(rng, 0.25, 4.0);
            let mass = log_uniform(rng, 0.5 * ms, 2.0 * ms);
            let core = (sigma * c_m(params, mass)).sqrt();
            let width = core * rng.gen_range(0.3..1.5);
            let center = if rng.gen_bool(0.3) { 0.0 } else { width * rng.gen_range(1.0..3.0) };
            Member::CompactBump { sigma, mass, amplitude: rng.gen_range(0.05..0.5), center, width }
        }
    }
}

impl Member {
    /// Sample the member on `grid`.
    pub fn build(&self, params: &Params, grid: &Arc<RadialGrid>) -> Result<RadialFunction> {
        self.build_dilated(params, grid, 1.0)
    }

    /// Sample `lambda^d u(lambda x)` on `grid` from the closed form (no interpolation).
    pub fn build_dilated(&self, params: &Params, grid: &Arc<RadialGrid>, lambda: f64) -> Result<RadialFunction> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(GnsError::Domain(format!("dilation factor lambda = {lambda} must be positive")));
        }
        let (sigma, mass) = self.scale();
        // validates the scale and warns about truncated tails
        barenblatt(params, mass, sigma / (lambda * lambda), grid)?;
        let pre = lambda.powi(params.d as i32);
        let cm = c_m(params, mass);
        let bump_height = barenblatt_value(params, cm, sigma, 0.0);
        let v = grid.nodes().iter().map(|&r| pre * self.eval(params, cm, bump_height, lambda * r)).collect();
        RadialFunction::with_tail(grid.clone(), v, params.barenblatt_tail_exponent())
    }

    /// Mass and second moment.  Barenblatt parts and the polynomial bump are integrated in
    /// closed form, the tilted profile by quadrature on `grid`.
    pub fn moments(&self, params: &Params, grid: &Arc<RadialGrid>) -> Result<(f64, f64)> {
        let k_m = |mass: f64| crate::constants::k_1(params) * mass.powf(params.gamma);
        match *self {
            Member::TwoScaleMix { c, sigma_1, sigma_2, mass } => {
                Ok((mass, (c * sigma_1 + (1.0 - c) * sigma_2) * k_m(mass)))
            }
            Member::TiltedPower { .. } => {
                let u = self.build(params, grid)?;
                Ok((u.integrate(0)?, u.integrate(2)?))
            }
            Member::CompactBump { sigma, mass, amplitude, center, width } => {
                let height = amplitude * barenblatt_value(params, c_m(params, mass), sigma, 0.0);
                let s_d = crate::special::sphere_area(params.d);
                let pw = params.d as i32 - 1;
                let bump = |k: i32| s_d * height * bump_moment(center, width, pw + k);
                Ok((mass + bump(0), sigma * k_m(mass) + bump(2)))
            }
        }
    }

    /// Scale and mass of the underlying Barenblatt (the first one for mixtures).
    fn scale(&self) -> (f64, f64) {
        match *self {
            Member::TwoScaleMix { sigma_1, mass, .. } => (sigma_1, mass),
            Member::TiltedPower { sigma, mass, .. } | Member::CompactBump { sigma, mass, .. } => (sigma, mass),
        }
    }

    fn eval(&self, params: &Params, cm: f64, bump_height: f64, r: f64) -> f64 {
        match *self {
            Member::TwoScaleMix { c, sigma_1, sigma_2, .. } => {
                c * barenblatt_value(params, cm, sigma_1, r) + (1.0 - c) * barenblatt_value(params, cm, sigma_2, r)
            }
            Member::TiltedPower { eps, sigma, .. } => {
                barenblatt_value(params, cm, sigma, r) * (1.0 + eps * r * r / (1.0 + r * r))
            }
            Member::CompactBump { sigma, amplitude, center, width, .. } => {
                let t = (r - center) / width;
                let bump = if t.abs() < 1.0 { amplitude * bump_height * (1.0 - t * t).powi(2) } else { 0.0 };
                barenblatt_value(params, cm, sigma, r) + bump
            }
        }
    }
}

/// `int (1 - ((r-c)/w)^2)^2 r^j dr` over the part of the support with `r >= 0`.
fn bump_moment(center: f64, width: f64, j: i32) -> f64 {
    // r = c + w t, t in [t0, 1]; expand (c + w t)^j (1 - 2t^2 + t^4)
    let t0 = (-center / width).max(-1.0);
    let mono = |n: i32| (1.0 - t0.powi(n + 1)) / (n + 1) as f64;
    let mut total = 0.0;
    let mut binom = 1.0;
    for i in 0..=j {
        if i > 0 {
            binom *= (j - i + 1) as f64 / i as f64;
        }
        let coef = binom * center.powi(j - i) * width.powi(i);
        total += coef * (mono(i) - 2.0 * mono(i + 2) + mono(i + 4));
    }
    total * width
}

/// GN input `f = u^{1/(2p)}` of a member, dilated so that its matched scale is `sigma*`.
/// Returns `f` and the dilation factor.
pub fn normalized_member(member: &Member, cs: &ConstantSet, grid: &Arc<RadialGrid>) -> Result<(RadialFunction, f64)> {
    let params = &cs.params;
    let (mass, m2) = member.moments(params, grid)?;
    let sigma = m2 / cs.k_m_at(mass);
    let lambda = (sigma / cs.sigma_star).sqrt();
    let un = member.build_dilated(params, grid, lambda)?;
    Ok((un.powf(1.0 / (2.0 * params.p)), lambda))
}

/// Member parameters drawn deterministically from the seed.
pub fn family_members(desc: &FamilyDescriptor, params: &Params) -> Vec<Member> {
    let mut rng = ChaCha8Rng::seed_from_u64(desc.seed);
    (0..desc.trials).map(|i| draw(desc.kind, i, params, &mut rng)).collect()
}

/// Sampled family members `u` (densities; GN inputs are `u^{1/(2p)}`).
pub fn generate_family(
    desc: &FamilyDescriptor,
    params: &Params,
    grid: &Arc<RadialGrid>,
) -> Result<Vec<RadialFunction>> {
    family_members(desc, params).iter().map(|m| m.build(params, grid)).collect()
}

/// Grid wide enough for every member scale the families draw.
pub fn family_grid(params: &Params, n: usize, q: f64) -> Result<Arc<RadialGrid>> {
    let ms = m_star(params);
    let r = working_radius(params, 0.5 * ms, 4.0).max(working_radius(params, 2.0 * ms, 4.0));
    build_grid(params.d, n, r, q)
}
