//! One-dimensional bounded minimization: grid scan, then golden section.

/// Minimizer of `f` on `[lo, hi]` and its value. The grid has `grid` points
/// (at least 3); the golden-section refinement stops at width `tol`.
pub fn minimize_scalar<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, grid: usize, tol: f64) -> (f64, f64) {
    assert!(lo < hi && grid >= 3);
    let h = (hi - lo) / (grid - 1) as f64;
    let mut best = (lo, f(lo));
    for i in 1..grid {
        let x = lo + h * i as f64;
        let v = f(x);
        if v < best.1 || best.1.is_nan() {
            best = (x, v);
        }
    }
    let (mut a, mut b) = ((best.0 - h).max(lo), (best.0 + h).min(hi));
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    for (x, v) in [(c, fc), (d, fd)] {
        if v < best.1 {
            best = (x, v);
        }
    }
    best
}
