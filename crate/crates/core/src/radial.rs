//! Radial profiles on a graded grid.
//!
//! Nodes follow `r_i = R (i/(n-1))^q`. Integrals are taken in the mapped variable
//! `s = (r/R)^{1/q}`, where the trapezoid rule with Gregory end corrections is
//! close to spectral for smooth radial integrands, plus a power-law tail beyond `R`.
//! Derivatives use Lagrange stencils on the physical nodes, reflected through
//! the origin according to the parity of the function.

use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::Arc;

use crate::error::{domain, GnsError, Result};
use crate::special::sphere_area;

/// Gregory coefficients of the end corrections.
const GREGORY: [f64; 6] = [1.0 / 12.0, 1.0 / 24.0, 19.0 / 720.0, 3.0 / 160.0, 863.0 / 60480.0, 275.0 / 24192.0];

/// Default stencil width of [`differentiate`].
pub const DEFAULT_STENCIL: usize = 7;

#[derive(Clone, Debug)]
pub struct RadialGrid {
    d: u32,
    nodes: Vec<f64>,
    q: f64,
    r_max: f64,
    sphere_factor: f64,
    /// dr/ds times the quadrature weight in s.
    weights: Vec<f64>,
}

/// Build the graded grid `r_i = R (i/(n-1))^q`.
pub fn build_grid(d: u32, n: usize, r_max: f64, q: f64) -> Result<Arc<RadialGrid>> {
    RadialGrid::new(d, n, r_max, q).map(Arc::new)
}

impl RadialGrid {
    pub fn new(d: u32, n: usize, r_max: f64, q: f64) -> Result<RadialGrid> {
        if d < 1 {
            return domain("grid dimension must be positive");
        }
        if n < 3 {
            return domain(format!("grid needs at least 3 nodes, got {n}"));
        }
        if !(r_max > 0.0 && r_max.is_finite()) {
            return domain(format!("grid radius R = {r_max} must be positive and finite"));
        }
        if !(q >= 1.0 && q.is_finite()) {
            return domain(format!("grid stretch q = {q} must be >= 1"));
        }
        let h = 1.0 / (n - 1) as f64;
        let nodes: Vec<f64> = (0..n).map(|i| if i + 1 == n { r_max } else { r_max * (i as f64 * h).powf(q) }).collect();
        let jac: Vec<f64> = (0..n)
            .map(|i| {
                let s = i as f64 * h;
                if s == 0.0 {
                    if q == 1.0 {
                        r_max
                    } else {
                        0.0
                    }
                } else {
                    q * r_max * s.powf(q - 1.0)
                }
            })
            .collect();
        let weights = gregory_weights(n).into_iter().zip(&jac).map(|(w, j)| w * h * j).collect();
        Ok(RadialGrid { d, nodes, q, r_max, sphere_factor: sphere_area(d), weights })
    }

    pub fn d(&self) -> u32 {
        self.d
    }
    pub fn n(&self) -> usize {
        self.nodes.len()
    }
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }
    pub fn q(&self) -> f64 {
        self.q
    }
    pub fn r_max(&self) -> f64 {
        self.r_max
    }
    pub fn sphere_factor(&self) -> f64 {
        self.sphere_factor
    }

    /// Quadrature weights for `int_0^R g(r) dr`.
    pub fn line_weights(&self) -> &[f64] {
        &self.weights
    }

    /// Same grid with `2n - 1` nodes (every other node shared).
    pub fn refined(&self) -> Result<RadialGrid> {
        RadialGrid::new(self.d, 2 * self.n() - 1, self.r_max, self.q)
    }

    /// `S_d int_0^R g r^{k+d-1} dr + tail` for samples `g` with power-law decay `tail_exponent`.
    pub fn integrate(&self, values: &[f64], tail_exponent: f64, k: i32) -> Result<f64> {
        debug_assert_eq!(values.len(), self.n());
        let pw = k + self.d as i32 - 1;
        let body: f64 = values
            .iter()
            .zip(&self.nodes)
            .zip(&self.weights)
            .map(|((g, r), w)| if *w == 0.0 { 0.0 } else { g * w * r.powi(pw) })
            .sum();
        let tail = self.tail(values, tail_exponent, k)?;
        Ok(self.sphere_factor * (body + tail))
    }

    /// `S_d int |g| r^{k+d-1} dr + tail` for signed samples `g`.
    ///
    /// The body is integrated cell by cell in the grid variable `s` with the local cubic
    /// interpolant, split exactly at its sign changes, so kinks of `|g|` cost no order.
    pub fn integrate_abs(&self, values: &[f64], tail_exponent: f64, k: i32) -> Result<f64> {
        let n = values.len();
        debug_assert_eq!(n, self.n());
        let pw = k + self.d as i32 - 1;
        let h = 1.0 / (n - 1) as f64;
        // integrand in s: g r^pw dr/ds
        let gs: Vec<f64> = (0..n)
            .map(|i| {
                let s = i as f64 * h;
                let jac = if s == 0.0 {
                    if self.q == 1.0 {
                        self.r_max
                    } else {
                        0.0
                    }
                } else {
                    self.q * self.r_max * s.powf(self.q - 1.0)
                };
                values[i] * self.nodes[i].powi(pw) * jac
            })
            .collect();
        let mut body = 0.0;
        for i in 0..n - 1 {
            let j = i.saturating_sub(1).min(n.saturating_sub(4));
            let c = cubic_through(&gs[j..(j + 4).min(n)], j as f64 - i as f64);
            body += h * abs_integral_unit(&c);
        }
        let abs: Vec<f64> = values.iter().map(|v| v.abs()).collect();
        Ok(self.sphere_factor * (body + self.tail(&abs, tail_exponent, k)?))
    }

    /// `S_d int_R^inf g r^{k+d-1} dr` from the fitted power-law tail alone.
    pub fn tail_integral(&self, values: &[f64], tail_exponent: f64, k: i32) -> Result<f64> {
        Ok(self.sphere_factor * self.tail(values, tail_exponent, k)?)
    }

    /// Tail beyond `R` for samples decaying like `r^tau (A + B r^{-2})`, with `A, B` fitted by
    /// least squares on `[R/2, R]` (a pure power law matched at `R` when the window is too thin).
    fn tail(&self, values: &[f64], tail_exponent: f64, k: i32) -> Result<f64> {
        let n = values.len();
        let g_end = values[n - 1];
        if g_end == 0.0 || tail_exponent == f64::NEG_INFINITY {
            return Ok(0.0);
        }
        let e = tail_exponent + (k + self.d as i32) as f64;
        if !(e < 0.0) {
            return Err(GnsError::NonIntegrable { tail_exponent, weight: k });
        }
        let r_end = self.r_max;
        let start = self.nodes.partition_point(|r| *r < 0.5 * r_end);
        let (mut sx, mut sy, mut sxx, mut sxy, mut cnt) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (r, v) in self.nodes[start..n].iter().zip(&values[start..n]) {
            let t = r / r_end;
            let x = t.powi(-2);
            let y = v * t.powf(-tail_exponent);
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
            cnt += 1.0;
        }
        let det = cnt * sxx - sx * sx;
        let (a, b) = if cnt >= 4.0 && det > 1e-12 * cnt * sxx {
            ((sxx * sy - sx * sxy) / det, (cnt * sxy - sx * sy) / det)
        } else {
            (g_end, 0.0)
        };
        // in units of R: int_1^inf (a t^tau + b t^{tau-2}) t^{k+d-1} dt
        Ok(r_end.powi(k + self.d as i32) * (a / (-e) + b / (2.0 - e)))
    }

    fn index_below(&self, r: f64) -> usize {
        match self.nodes.binary_search_by(|x| x.partial_cmp(&r).unwrap()) {
            Ok(i) => i.min(self.n() - 2),
            Err(i) => (i.max(1) - 1).min(self.n() - 2),
        }
    }
}

/// Monomial coefficients of the polynomial through `(o + i, y_i)`; at most cubic.
fn cubic_through(y: &[f64], o: f64) -> [f64; 4] {
    let mut c = [0.0; 4];
    for (i, yi) in y.iter().enumerate() {
        // Lagrange basis for node o + i, expanded as a product of linear factors
        let xi = o + i as f64;
        let mut basis = [1.0, 0.0, 0.0, 0.0];
        let mut deg = 0;
        let mut denom = 1.0;
        for j in 0..y.len() {
            if j == i {
                continue;
            }
            let xj = o + j as f64;
            denom *= xi - xj;
            for t in (0..=deg).rev() {
                basis[t + 1] += basis[t];
                basis[t] *= -xj;
            }
            deg += 1;
        }
        for t in 0..4 {
            c[t] += yi * basis[t] / denom;
        }
    }
    c
}

fn cubic_eval(c: &[f64; 4], t: f64) -> f64 {
    ((c[3] * t + c[2]) * t + c[1]) * t + c[0]
}

fn cubic_antiderivative(c: &[f64; 4], t: f64) -> f64 {
    (((c[3] / 4.0 * t + c[2] / 3.0) * t + c[1] / 2.0) * t + c[0]) * t
}

/// `int_0^1 |P(t)| dt` for a cubic `P`.
fn abs_integral_unit(c: &[f64; 4]) -> f64 {
    const SPLIT: usize = 8;
    let mut cuts = vec![0.0];
    let mut prev = cubic_eval(c, 0.0);
    for k in 1..=SPLIT {
        let (mut a, mut b) = ((k - 1) as f64 / SPLIT as f64, k as f64 / SPLIT as f64);
        let next = cubic_eval(c, b);
        if prev * next < 0.0 {
            let fa = prev;
            for _ in 0..60 {
                let mid = 0.5 * (a + b);
                if cubic_eval(c, mid) * fa > 0.0 {
                    a = mid;
                } else {
                    b = mid;
                }
            }
            cuts.push(0.5 * (a + b));
        }
        prev = next;
    }
    cuts.push(1.0);
    cuts.windows(2).map(|w| (cubic_antiderivative(c, w[1]) - cubic_antiderivative(c, w[0])).abs()).sum()
}

/// Composite trapezoid weights with Gregory corrections on a unit-spaced grid.
fn gregory_weights(n: usize) -> Vec<f64> {
    let mut w = vec![1.0; n];
    w[0] = 0.5;
    w[n - 1] = 0.5;
    let order = GREGORY.len().min((n - 1) / 2);
    if n < 16 {
        return w;
    }
    let last = n - 1;
    for (k0, g) in GREGORY.iter().enumerate().take(order) {
        let k = k0 + 1;
        let mut binom = 1.0;
        for j in 0..=k {
            if j > 0 {
                binom *= (k + 1 - j) as f64 / j as f64;
            }
            // -g (-1)^k Delta^k f_0 and -g nabla^k f_n
            let fwd = if (2 * k - j) % 2 == 0 { 1.0 } else { -1.0 };
            let bwd = if j % 2 == 0 { 1.0 } else { -1.0 };
            w[j] -= g * fwd * binom;
            w[last - j] -= g * bwd * binom;
        }
    }
    w
}

/// Symmetry of a radial function under r -> -r, used to reflect stencils at the origin.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    fn sign(self) -> f64 {
        match self {
            Parity::Even => 1.0,
            Parity::Odd => -1.0,
        }
    }
    fn flip(self) -> Parity {
        match self {
            Parity::Even => Parity::Odd,
            Parity::Odd => Parity::Even,
        }
    }
}

/// Signed samples on a grid with a power-law tail model.
#[derive(Clone, Debug)]
pub struct RadialField {
    grid: Arc<RadialGrid>,
    values: Vec<f64>,
    tail_exponent: f64,
    parity: Parity,
}

impl RadialField {
    /// Even field; the tail exponent is fitted on the last decade of nodes.
    pub fn new(grid: Arc<RadialGrid>, values: Vec<f64>) -> Result<RadialField> {
        let tail = fit_tail_exponent(&grid, &values);
        RadialField::with_tail(grid, values, tail, Parity::Even)
    }

    pub fn with_tail(
        grid: Arc<RadialGrid>,
        values: Vec<f64>,
        tail_exponent: f64,
        parity: Parity,
    ) -> Result<RadialField> {
        if values.len() != grid.n() {
            return domain(format!("{} samples for a grid of {} nodes", values.len(), grid.n()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return domain(format!("non-finite sample at r = {}", grid.nodes[i]));
        }
        Ok(RadialField { grid, values, tail_exponent, parity })
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn tail_exponent(&self) -> f64 {
        self.tail_exponent
    }
    pub fn parity(&self) -> Parity {
        self.parity
    }

    /// `int_{R^d} |x|^k g dx`.
    pub fn integrate(&self, k: i32) -> Result<f64> {
        self.grid.integrate(&self.values, self.tail_exponent, k)
    }

    /// Pointwise map with an explicitly supplied tail exponent.
    pub fn map<F: Fn(f64, f64) -> f64>(&self, f: F, tail_exponent: f64) -> Result<RadialField> {
        let v = self.grid.nodes.iter().zip(&self.values).map(|(r, g)| f(*r, *g)).collect();
        RadialField::with_tail(self.grid.clone(), v, tail_exponent, Parity::Even)
    }

    /// Value at an arbitrary radius: degree-7 Lagrange interpolation inside the grid,
    /// the power-law tail beyond it.
    pub fn eval(&self, r: f64) -> f64 {
        let r = r.abs();
        let grid = &self.grid;
        let n = grid.n();
        if r >= grid.r_max {
            let g = self.values[n - 1];
            if g == 0.0 || self.tail_exponent == f64::NEG_INFINITY {
                return 0.0;
            }
            return g * (r / grid.r_max).powf(self.tail_exponent);
        }
        let i = grid.index_below(r);
        let width = 8.min(n);
        let (xs, ys) = self.stencil(i as isize - (width as isize / 2 - 1), width);
        lagrange_eval(&xs, &ys, r)
    }

    /// Nodes and values of a stencil starting at `start`, reflected through the origin
    /// and clamped at the outer end.
    fn stencil(&self, start: isize, width: usize) -> (Vec<f64>, Vec<f64>) {
        let n = self.grid.n() as isize;
        let start = start.min(n - width as isize);
        let sign = self.parity.sign();
        (start..start + width as isize)
            .map(|j| {
                if j < 0 {
                    let k = (-j) as usize;
                    (-self.grid.nodes[k], sign * self.values[k])
                } else {
                    (self.grid.nodes[j as usize], self.values[j as usize])
                }
            })
            .unzip()
    }
}

/// A non-negative radial profile: the carrier of densities `u` and of `f = u^{m-1/2}`.
#[derive(Clone, Debug)]
pub struct RadialFunction(RadialField);

impl std::ops::Deref for RadialFunction {
    type Target = RadialField;
    fn deref(&self) -> &RadialField {
        &self.0
    }
}

impl RadialFunction {
    /// Profile with a fitted tail exponent.
    pub fn new(grid: Arc<RadialGrid>, values: Vec<f64>) -> Result<RadialFunction> {
        let tail = fit_tail_exponent(&grid, &values);
        RadialFunction::with_tail(grid, values, tail)
    }

    pub fn with_tail(grid: Arc<RadialGrid>, values: Vec<f64>, tail_exponent: f64) -> Result<RadialFunction> {
        if let Some(i) = values.iter().position(|v| *v < 0.0) {
            return domain(format!("profile is negative ({}) at r = {}", values[i], grid.nodes[i]));
        }
        RadialField::with_tail(grid, values, tail_exponent, Parity::Even).map(RadialFunction)
    }

    pub fn field(&self) -> &RadialField {
        &self.0
    }

    /// Pointwise `g -> g^a`, with the tail exponent scaled accordingly.
    pub fn powf(&self, a: f64) -> RadialFunction {
        let v = self.values.iter().map(|g| g.powf(a)).collect();
        RadialFunction(RadialField {
            grid: self.grid.clone(),
            values: v,
            tail_exponent: self.tail_exponent * a,
            parity: Parity::Even,
        })
    }

    /// `c * g` for `c >= 0`.
    pub fn scale(&self, c: f64) -> Result<RadialFunction> {
        RadialFunction::with_tail(self.grid.clone(), self.values.iter().map(|g| c * g).collect(), self.tail_exponent)
    }

    /// Non-negative linear combination; the tail follows the slower decay.
    pub fn combine(&self, a: f64, other: &RadialFunction, b: f64) -> Result<RadialFunction> {
        if !Arc::ptr_eq(&self.grid, &other.grid) && self.grid.nodes != other.grid.nodes {
            return domain("profiles live on different grids");
        }
        let v = self.values.iter().zip(&other.values).map(|(x, y)| a * x + b * y).collect();
        RadialFunction::with_tail(self.grid.clone(), v, self.tail_exponent.max(other.tail_exponent))
    }

    /// Resample on `grid` by monotone cubic interpolation of these samples.
    pub fn resample_monotone(&self, grid: Arc<RadialGrid>) -> Result<RadialFunction> {
        let interp = MonotoneCubic::new(self.grid.nodes.clone(), self.values.clone())?;
        let v = grid
            .nodes
            .iter()
            .map(|&r| if r <= self.grid.r_max { interp.eval(r).max(0.0) } else { self.eval(r) })
            .collect();
        RadialFunction::with_tail(grid, v, self.tail_exponent)
    }

    /// Load a `r,u` CSV and resample it onto `grid`.
    pub fn load_csv(path: &Path, grid: Arc<RadialGrid>) -> Result<RadialFunction> {
        let file = std::fs::File::open(path)?;
        let (r, u) = read_profile_csv(std::io::BufReader::new(file))?;
        profile_from_samples(&r, &u, grid)
    }

    /// Write `r,u` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "r,u")?;
        for (r, u) in self.grid.nodes.iter().zip(&self.values) {
            writeln!(w, "{r},{u}")?;
        }
        Ok(())
    }
}

/// Parse a profile CSV with header `r,u` and strictly increasing radii.
pub fn read_profile_csv<R: BufRead>(reader: R) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut lines = reader.lines().enumerate();
    let header = match lines.next() {
        Some((_, l)) => l?,
        None => return Err(GnsError::Parse { line: 1, msg: "empty file".into() }),
    };
    if header.trim() != "r,u" {
        return Err(GnsError::Parse { line: 1, msg: format!("expected header `r,u`, found `{}`", header.trim()) });
    }
    let (mut rs, mut us) = (Vec::new(), Vec::new());
    for (i, line) in lines {
        let line = line?;
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let mut field = |name: &str| -> Result<f64> {
            let raw =
                parts.next().ok_or_else(|| GnsError::Parse { line: line_no, msg: format!("missing column {name}") })?;
            raw.trim()
                .parse::<f64>()
                .map_err(|e| GnsError::Parse { line: line_no, msg: format!("bad {name} value `{}`: {e}", raw.trim()) })
        };
        let r = field("r")?;
        let u = field("u")?;
        if parts.next().is_some() {
            return Err(GnsError::Parse { line: line_no, msg: "too many columns".into() });
        }
        if !(u >= 0.0) || !r.is_finite() || !u.is_finite() {
            return Err(GnsError::Parse { line: line_no, msg: "u must be finite and non-negative".into() });
        }
        if let Some(prev) = rs.last() {
            if r <= *prev {
                return Err(GnsError::Parse { line: line_no, msg: "r must be strictly increasing".into() });
            }
        } else if r < 0.0 {
            return Err(GnsError::Parse { line: line_no, msg: "r must be non-negative".into() });
        }
        rs.push(r);
        us.push(u);
    }
    if rs.len() < 2 {
        return Err(GnsError::Parse { line: rs.len() + 1, msg: "need at least two samples".into() });
    }
    Ok((rs, us))
}

/// Resample scattered `(r, u)` samples onto `grid` (monotone cubic inside, power law outside).
pub fn profile_from_samples(r: &[f64], u: &[f64], grid: Arc<RadialGrid>) -> Result<RadialFunction> {
    let interp = MonotoneCubic::new(r.to_vec(), u.to_vec())?;
    let tail = fit_tail_samples(r, u);
    let (r_last, u_last) = (r[r.len() - 1], u[u.len() - 1]);
    let v = grid
        .nodes
        .iter()
        .map(|&x| {
            if x <= r_last {
                interp.eval(x).max(0.0)
            } else if u_last == 0.0 || tail == f64::NEG_INFINITY {
                0.0
            } else {
                u_last * (x / r_last).powf(tail)
            }
        })
        .collect();
    RadialFunction::new(grid, v)
}

/// Least-squares slope of `ln|g|` against `ln r` over `r in [R/10, R]`.
///
/// Returns `-inf` (no tail) when the samples vanish or change sign there.
pub fn fit_tail_exponent(grid: &RadialGrid, values: &[f64]) -> f64 {
    fit_tail_samples(&grid.nodes, values)
}

fn fit_tail_samples(r: &[f64], g: &[f64]) -> f64 {
    let r_end = r[r.len() - 1];
    let lo = r_end / 10.0;
    let start = r.iter().position(|x| *x >= lo && *x > 0.0).unwrap_or(r.len() - 1);
    let window = &g[start..];
    let sign = window[window.len() - 1].signum();
    if window.len() < 3 || window.iter().any(|v| *v == 0.0 || v.signum() != sign) {
        return f64::NEG_INFINITY;
    }
    let pts: Vec<(f64, f64)> = r[start..].iter().zip(window).map(|(x, v)| (x.ln(), v.abs().ln())).collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return f64::NEG_INFINITY;
    }
    sxy / sxx
}

/// `int |x|^k g dx` for a radial field.
pub fn integrate_radial(g: &RadialField, k: i32) -> Result<f64> {
    g.integrate(k)
}

/// Derivative `g'(r)` with the default stencil width.
pub fn differentiate(g: &RadialField) -> RadialField {
    differentiate_with(g, DEFAULT_STENCIL)
}

/// Derivative with a Lagrange stencil of odd `width` (3 gives the classic
/// second-order scheme). Stencils crossing the origin use reflected nodes, so an
/// even field gets `g'(0) = 0`; the result has the opposite parity.
pub fn differentiate_with(g: &RadialField, width: usize) -> RadialField {
    let grid = &g.grid;
    let n = grid.n();
    let width = width.max(3).min(if n % 2 == 1 { n } else { n - 1 }) | 1;
    let half = (width / 2) as isize;
    let mut out = vec![0.0; n];
    for (i, o) in out.iter_mut().enumerate() {
        if i == 0 && g.parity == Parity::Even {
            continue;
        }
        let (xs, ys) = g.stencil(i as isize - half, width);
        let w = fornberg_first_derivative(grid.nodes[i], &xs);
        *o = w.iter().zip(&ys).map(|(a, b)| a * b).sum();
    }
    let tail = if g.tail_exponent.is_finite() { g.tail_exponent - 1.0 } else { g.tail_exponent };
    RadialField { grid: grid.clone(), values: out, tail_exponent: tail, parity: g.parity.flip() }
}

/// Weights of the first derivative at `x0` over arbitrary distinct nodes (Fornberg 1988).
fn fornberg_first_derivative(x0: f64, xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    // c[j][k]: weight of node j for derivative order k (k = 0, 1)
    let mut c = vec![[0.0f64; 2]; n];
    let mut c1 = 1.0;
    let mut c4 = xs[0] - x0;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(1);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i] - x0;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|w| w[1]).collect()
}

fn lagrange_eval(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let mut acc = 0.0;
    for (j, (xj, yj)) in xs.iter().zip(ys).enumerate() {
        if x == *xj {
            return *yj;
        }
        let mut l = 1.0;
        for (k, xk) in xs.iter().enumerate() {
            if k != j {
                l *= (x - xk) / (xj - xk);
            }
        }
        acc += l * yj;
    }
    acc
}

/// Fritsch-Carlson monotone piecewise cubic Hermite interpolant.
#[derive(Clone, Debug)]
pub struct MonotoneCubic {
    x: Vec<f64>,
    y: Vec<f64>,
    slope: Vec<f64>,
}

impl MonotoneCubic {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<MonotoneCubic> {
        let n = x.len();
        if n < 2 || y.len() != n {
            return domain("monotone interpolation needs at least two (x, y) pairs");
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return domain("interpolation nodes must be strictly increasing");
        }
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
        let mut slope = vec![0.0; n];
        if n == 2 {
            slope = vec![delta[0]; 2];
        } else {
            for i in 1..n - 1 {
                if delta[i - 1] * delta[i] > 0.0 {
                    let w1 = 2.0 * h[i] + h[i - 1];
                    let w2 = h[i] + 2.0 * h[i - 1];
                    slope[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
                }
            }
            slope[0] = end_slope(h[0], h[1], delta[0], delta[1]);
            slope[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
        }
        Ok(MonotoneCubic { x, y, slope })
    }

    pub fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        if t <= self.x[0] {
            return self.y[0];
        }
        if t >= self.x[n - 1] {
            return self.y[n - 1];
        }
        let i = match self.x.binary_search_by(|v| v.partial_cmp(&t).unwrap()) {
            Ok(i) => return self.y[i],
            Err(i) => i - 1,
        };
        let h = self.x[i + 1] - self.x[i];
        let s = (t - self.x[i]) / h;
        let (h00, h10, h01, h11) =
            ((1.0 + 2.0 * s) * (1.0 - s).powi(2), s * (1.0 - s).powi(2), s * s * (3.0 - 2.0 * s), s * s * (s - 1.0));
        h00 * self.y[i] + h10 * h * self.slope[i] + h01 * self.y[i + 1] + h11 * h * self.slope[i + 1]
    }
}

fn end_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if s.signum() != d0.signum() {
        0.0
    } else if d0.signum() != d1.signum() && s.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_nodes() {
        let g = RadialGrid::new(2, 3, 1.0, 1.0).unwrap();
        assert_eq!(g.nodes(), &[0.0, 0.5, 1.0]);
        assert!((g.sphere_factor() - 2.0 * std::f64::consts::PI).abs() < 1e-14);
        let g = RadialGrid::new(2, 2000, 100.0, 2.0).unwrap();
        assert!((g.nodes()[1] - 100.0 / 1999f64.powi(2)).abs() < 1e-18);
        assert_eq!(g.nodes()[1999], 100.0);
    }

    #[test]
    fn invalid_sizes() {
        assert!(RadialGrid::new(2, 2, 1.0, 1.0).is_err());
        assert!(RadialGrid::new(2, 100, -1.0, 1.0).is_err());
        assert!(RadialGrid::new(2, 100, 1.0, 0.5).is_err());
    }

    #[test]
    fn gregory_polynomial_exactness() {
        let n = 41;
        let w = gregory_weights(n);
        let h = 1.0 / (n - 1) as f64;
        for deg in 0..=7 {
            let s: f64 = (0..n).map(|i| w[i] * h * (i as f64 * h).powi(deg)).sum();
            assert!((s - 1.0 / (deg + 1) as f64).abs() < 1e-14, "degree {deg}: {s}");
        }
        assert!(w.iter().all(|x| *x > 0.0));
    }

    #[test]
    fn derivative_of_quadratic_is_exact() {
        let grid = build_grid(3, 200, 10.0, 2.0).unwrap();
        for width in [3, 5, 7] {
            let g = RadialField::new(grid.clone(), grid.nodes().iter().map(|r| r * r + 3.0).collect()).unwrap();
            let dg = differentiate_with(&g, width);
            for (r, v) in grid.nodes().iter().zip(dg.values()) {
                assert!((v - 2.0 * r).abs() < 1e-9 * (1.0 + r), "width {width}, r = {r}: {v}");
            }
        }
    }

    #[test]
    fn derivative_of_constant_vanishes() {
        let grid = build_grid(2, 100, 5.0, 2.0).unwrap();
        let g = RadialField::new(grid.clone(), vec![2.5; 100]).unwrap();
        assert!(differentiate(&g).values().iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn interpolation_reproduces_nodes_and_tail() {
        let grid = build_grid(2, 300, 50.0, 2.0).unwrap();
        let vals: Vec<f64> = grid.nodes().iter().map(|r| (1.0 + r * r).powi(-4)).collect();
        let g = RadialField::with_tail(grid.clone(), vals.clone(), -8.0, Parity::Even).unwrap();
        for (r, v) in grid.nodes().iter().zip(&vals) {
            assert_eq!(g.eval(*r), *v);
        }
        assert!((g.eval(100.0) / (vals[299] * 2f64.powi(-8)) - 1.0).abs() < 1e-14);
        let x = 0.731;
        assert!((g.eval(x) / (1.0 + x * x).powi(-4) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn monotone_cubic_keeps_monotone_data_monotone() {
        let x = vec![0.0, 1.0, 2.0, 3.0, 10.0];
        let y = vec![5.0, 4.9, 1.0, 0.9, 0.0];
        let mc = MonotoneCubic::new(x, y).unwrap();
        let mut prev = f64::INFINITY;
        for i in 0..=1000 {
            let v = mc.eval(i as f64 / 100.0);
            assert!(v <= prev + 1e-15 && v >= 0.0);
            prev = v;
        }
    }

    #[test]
    fn csv_errors_carry_line_numbers() {
        let bad = "r,u\n0,1\n0.5,x\n";
        match read_profile_csv(bad.as_bytes()) {
            Err(GnsError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let unsorted = "r,u\n0,1\n0.5,0.5\n0.4,0.1\n";
        assert!(matches!(read_profile_csv(unsorted.as_bytes()), Err(GnsError::Parse { line: 4, .. })));
        assert!(matches!(read_profile_csv("x,y\n".as_bytes()), Err(GnsError::Parse { line: 1, .. })));
    }

    #[test]
    fn non_integrable_tail() {
        let grid = build_grid(2, 100, 10.0, 2.0).unwrap();
        let g = RadialField::with_tail(grid.clone(), vec![1.0; 100], -3.0, Parity::Even).unwrap();
        assert!(g.integrate(0).is_ok());
        assert!(matches!(g.integrate(2), Err(GnsError::NonIntegrable { .. })));
    }
}
