//! One-dimensional minimization on a closed interval.

/// Inverse golden ratio, `(√5 − 1)/2`.
const INV_PHI: f64 = 0.618_033_988_749_894_8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Minimum {
    pub x: f64,
    pub value: f64,
}

/// Golden-section search for the minimizer of a unimodal `f` on `[lo, hi]`.
///
/// Stops once the bracket is narrower than `tol`. The endpoints are compared
/// against the interior estimate so that boundary minimizers are returned
/// exactly; ties resolve to the leftmost candidate.
pub fn golden_section<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, tol: f64) -> Minimum {
    assert!(lo <= hi, "empty bracket [{lo}, {hi}]");
    if hi - lo <= tol {
        let x = 0.5 * (lo + hi);
        return best_of(&f, &[lo, x, hi]);
    }
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while b - a > tol {
        if fc <= fd {
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
    best_of(&f, &[lo, 0.5 * (a + b), hi])
}

fn best_of<F: Fn(f64) -> f64>(f: &F, xs: &[f64]) -> Minimum {
    let mut xs = xs.to_vec();
    xs.sort_by(f64::total_cmp);
    let mut best = Minimum { x: xs[0], value: f(xs[0]) };
    for &x in &xs[1..] {
        let v = f(x);
        if v < best.value {
            best = Minimum { x, value: v };
        }
    }
    best
}

/// Scans `points` equally spaced grid values on `[lo, hi]` and refines the
/// leftmost best grid point by golden-section search on its neighbouring cells.
pub fn grid_then_golden<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, points: usize, tol: f64) -> Minimum {
    assert!(points >= 2);
    let step = (hi - lo) / (points - 1) as f64;
    let mut best_i = 0;
    let mut best_v = f64::INFINITY;
    for i in 0..points {
        let v = f(lo + step * i as f64);
        if v < best_v {
            best_v = v;
            best_i = i;
        }
    }
    let left = lo + step * best_i.saturating_sub(1) as f64;
    let right = (lo + step * (best_i + 1) as f64).min(hi);
    let refined = golden_section(&f, left, right, tol);
    if refined.value <= best_v {
        refined
    } else {
        Minimum { x: lo + step * best_i as f64, value: best_v }
    }
}

/// Sharpens a minimizer of a convex function using its right derivative.
///
/// Function values stop discriminating once `|x − x*|` is near `√ε`; the sign
/// of the derivative keeps resolving down to rounding. Bisects for the
/// leftmost point of `[lo, hi] ∩ [x − width, x + width]` where the right
/// derivative is nonnegative. Returns `None` when that window does not bracket
/// a sign change (or the derivative is not finite), leaving `x` as is.
pub fn polish_with_derivative<D: Fn(f64) -> f64>(
    right_derivative: D,
    x: f64,
    lo: f64,
    hi: f64,
    width: f64,
) -> Option<f64> {
    let mut a = (x - width).max(lo);
    let mut b = (x + width).min(hi);
    let da = right_derivative(a);
    if !da.is_finite() {
        return None;
    }
    if da >= 0.0 {
        return if a == lo { Some(lo) } else { None };
    }
    let db = right_derivative(b);
    if !db.is_finite() {
        return None;
    }
    if db < 0.0 {
        return if b == hi { Some(hi) } else { None };
    }
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        let dm = right_derivative(mid);
        if !dm.is_finite() {
            return None;
        }
        if dm < 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    Some(b)
}
