//! Derivative-free scalar minimisation.

/// 1/φ
const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Golden-section search for the minimum of a unimodal `f` on `[lo, hi]`.
///
/// Stops once the bracket is narrower than `tol`. The returned point is the
/// best of the final bracket's ends and interior probes, so minima sitting on a
/// boundary are returned exactly at that boundary.
pub fn golden_section<F>(f: F, lo: f64, hi: f64, tol: f64) -> f64
where
    F: Fn(f64) -> f64,
{
    assert!(lo <= hi && tol > 0.0);
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
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
    [lo, hi, a, b, c, d]
        .into_iter()
        .filter(|x| *x >= a && *x <= b)
        .map(|x| (x, f(x)))
        .fold((0.5 * (a + b), f(0.5 * (a + b))), |best, cand| {
            if cand.1 < best.1 {
                cand
            } else {
                best
            }
        })
        .0
}
