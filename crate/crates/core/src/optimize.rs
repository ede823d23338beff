//! One-dimensional minimization.

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Golden-section search for a minimizer of a unimodal `f` on `[lo, hi]`.
///
/// Stops once the bracket is narrower than `rel_tol * |x|`.
pub fn golden_section<F: FnMut(f64) -> f64>(f: F, lo: f64, hi: f64, rel_tol: f64) -> (f64, f64) {
    bracket_search(f, lo, hi, |a, b| (b - a) <= rel_tol * (0.5 * (a + b)).abs())
}

/// Golden-section search in log-space, for scale parameters on `[lo, hi]`, `lo > 0`.
/// The returned minimizer is accurate to `rel_tol` relative.
pub fn golden_section_log<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, rel_tol: f64) -> (f64, f64) {
    let (t, v) = bracket_search(|t| f(t.exp()), lo.ln(), hi.ln(), |a, b| (b - a) <= rel_tol);
    (t.exp(), v)
}

fn bracket_search<F, S>(mut f: F, lo: f64, hi: f64, done: S) -> (f64, f64)
where
    F: FnMut(f64) -> f64,
    S: Fn(f64, f64) -> bool,
{
    let (mut a, mut b) = (lo.min(hi), lo.max(hi));
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..500 {
        if done(a, b) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}
