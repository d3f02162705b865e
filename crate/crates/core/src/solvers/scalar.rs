//! Golden-section scalar minimization.

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Minimizes `f` over `[a, b]` by golden-section search.
///
/// For unimodal `f` the returned argmin is within `tol` of the minimizer.
/// In every case the best value sampled (endpoints included) is returned.
pub fn minimize_scalar<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> (f64, f64) {
    let (mut lo, mut hi) = if a <= b { (a, b) } else { (b, a) };
    let mut best = (lo, sanitize(f(lo)));
    let consider = |t: f64, v: f64, best: &mut (f64, f64)| {
        if v < best.1 {
            *best = (t, v);
        }
    };
    let fb = sanitize(f(hi));
    consider(hi, fb, &mut best);
    let tol = tol.max(f64::EPSILON * (1.0 + lo.abs().max(hi.abs())));
    let mut c = hi - INV_PHI * (hi - lo);
    let mut d = lo + INV_PHI * (hi - lo);
    let mut fc = sanitize(f(c));
    let mut fd = sanitize(f(d));
    consider(c, fc, &mut best);
    consider(d, fd, &mut best);
    while hi - lo > tol {
        if fc <= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - INV_PHI * (hi - lo);
            fc = sanitize(f(c));
            consider(c, fc, &mut best);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + INV_PHI * (hi - lo);
            fd = sanitize(f(d));
            consider(d, fd, &mut best);
        }
    }
    let mid = 0.5 * (lo + hi);
    let fm = sanitize(f(mid));
    consider(mid, fm, &mut best);
    best
}

fn sanitize(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}
