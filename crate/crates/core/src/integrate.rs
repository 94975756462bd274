//! Adaptive Gauss–Kronrod (7/15) integration with global bisection.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadResult {
    pub value: f64,
    pub abs_error_est: f64,
    pub evaluations: usize,
}

impl QuadResult {
    pub const ZERO: QuadResult = QuadResult { value: 0.0, abs_error_est: 0.0, evaluations: 0 };

    fn add(self, other: QuadResult) -> QuadResult {
        QuadResult {
            value: self.value + other.value,
            abs_error_est: self.abs_error_est + other.abs_error_est,
            evaluations: self.evaluations + other.evaluations,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance { abs: 0.0, rel: 1e-10, max_intervals: 2000 }
    }
}

impl Tolerance {
    pub fn rel(rel: f64) -> Self {
        Tolerance { rel, ..Default::default() }
    }
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] =
    [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

fn kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Segment {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut res_k = fc * WGK[7];
    let mut res_g = fc * WG[3];
    let mut res_abs = res_k.abs();
    let mut fv1 = [0.0; 7];
    let mut fv2 = [0.0; 7];
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        res_k += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * res_k;
    let mut res_asc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let res_asc = res_asc * half.abs();
    let res_abs = res_abs * half.abs();
    let value = res_k * half;
    let mut err = ((res_k - res_g) * half).abs();
    if res_asc != 0.0 && err != 0.0 {
        err = res_asc * (200.0 * err / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * res_abs);
    }
    Segment { a, b, value, err }
}

/// Integrates `f` over the finite interval `[a, b]`.
///
/// Non-finite integrand values are treated as a bug in the caller and
/// propagate into the result.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: Tolerance) -> QuadResult {
    if a == b {
        return QuadResult::ZERO;
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let mut r = refine(&f, kronrod(&f, lo, hi), tol);
    r.value *= sign;
    r
}

/// Bisects the worst segment until the error target is met.
fn refine<F: Fn(f64) -> f64>(f: &F, first: Segment, tol: Tolerance) -> QuadResult {
    let mut segs = vec![first];
    let mut evals = 15;
    loop {
        let total: f64 = segs.iter().map(|s| s.value).sum();
        let err: f64 = segs.iter().map(|s| s.err).sum();
        if err <= tol.abs.max(tol.rel * total.abs()) || segs.len() >= tol.max_intervals {
            return QuadResult { value: total, abs_error_est: err, evaluations: evals };
        }
        let (idx, _) =
            segs.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |acc, (i, s)| if s.err > acc.1 { (i, s.err) } else { acc });
        let worst = segs.swap_remove(idx);
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // interval exhausted at machine resolution
            segs.push(Segment { err: 0.0, ..worst });
            continue;
        }
        segs.push(kronrod(f, worst.a, mid));
        segs.push(kronrod(f, mid, worst.b));
        evals += 30;
    }
}

/// Integrates over consecutive breakpoints and sums the pieces.
pub fn integrate_pieces<F: Fn(f64) -> f64>(f: F, points: &[f64], tol: Tolerance) -> QuadResult {
    points
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| integrate(&f, w[0], w[1], tol))
        .fold(QuadResult::ZERO, QuadResult::add)
}

/// Piecewise integration with an absolute tolerance tied to the size of the
/// integral, found by a coarse first pass. Pieces whose integrand underflows
/// then stop refining immediately instead of chasing a relative target of 0.
pub fn integrate_pieces_auto<F: Fn(f64) -> f64>(f: F, points: &[f64], rel: f64) -> QuadResult {
    auto_parts(&[(&f, points)], rel)
}

/// `integrate_pieces_auto` over two integrands sharing one tolerance scale.
/// Used to integrate the upper half of a range in the distance to its end,
/// which stays exact where the position itself would round.
pub fn integrate_halves<L: Fn(f64) -> f64, R: Fn(f64) -> f64>(
    lower: L,
    lower_points: &[f64],
    upper: R,
    upper_points: &[f64],
    rel: f64,
) -> QuadResult {
    auto_parts(&[(&lower, lower_points), (&upper, upper_points)], rel)
}

type Piece<'a> = (&'a dyn Fn(f64) -> f64, &'a [f64]);

fn auto_parts(parts: &[Piece<'_>], rel: f64) -> QuadResult {
    let first: Vec<(usize, Segment)> = parts
        .iter()
        .enumerate()
        .flat_map(|(k, (f, pts))| pts.windows(2).filter(|w| w[1] > w[0]).map(move |w| (k, kronrod(f, w[0], w[1]))))
        .collect();
    let value: f64 = first.iter().map(|s| s.1.value).sum();
    let err: f64 = first.iter().map(|s| s.1.err).sum();
    if value == 0.0 && err == 0.0 {
        return QuadResult { value, abs_error_est: err, evaluations: 15 * first.len() };
    }
    let scale = value.abs().max(err);
    let tol = Tolerance { abs: rel * scale * 1e-2, rel, max_intervals: 2000 };
    first.into_iter().map(|(k, s)| refine(&parts[k].0, s, tol)).fold(QuadResult::ZERO, QuadResult::add)
}

/// `a, a + w, a + 4w, ...` up to `a + len`.
pub fn geometric_breaks(a: f64, len: f64, first_width: f64) -> Vec<f64> {
    let mut pts = vec![a];
    let mut w = first_width.max(len * 1e-14);
    while w < len {
        pts.push(a + w);
        w *= 4.0;
    }
    pts.push(a + len);
    pts.dedup();
    pts
}

/// Breakpoints for `[a, b]` that refine geometrically towards both ends,
/// so that integrands concentrated at either shoulder are resolved.
pub fn two_sided_breaks(a: f64, b: f64, first_width: f64) -> Vec<f64> {
    if !(b > a) {
        return vec![a, b];
    }
    let mid = 0.5 * (a + b);
    let mut w = first_width.max((b - a) * 1e-14);
    let mut left = vec![a];
    let mut right = vec![b];
    while a + w < mid {
        left.push(a + w);
        right.push(b - w);
        w *= 4.0;
    }
    left.push(mid);
    right.reverse();
    left.extend(right);
    left.dedup();
    left
}

/// Integrates `f` over `[a, ∞)` by the substitution `y = a + t/(1-t)`.
pub fn integrate_to_infinity<F: Fn(f64) -> f64>(f: F, a: f64, tol: Tolerance) -> QuadResult {
    let g = |t: f64| {
        if t >= 1.0 {
            return 0.0;
        }
        let s = 1.0 - t;
        let v = f(a + t / s) / (s * s);
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    integrate_pieces(g, &[0.0, 0.5, 0.9, 0.99, 0.999, 0.9999, 1.0], tol)
}
