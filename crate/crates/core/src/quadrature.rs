//! Deterministic integral oracles built on [`crate::integrate`].
//!
//! Integrands are formed in log space and divided by a natural scale
//! (usually `F̄(x)`), so the ratios that the checkers need stay O(1) even
//! when the tails themselves underflow.

pub use crate::integrate::QuadResult;

use crate::boundary::LittleH;
use crate::dist::{hazard_rate_at, ln_one_minus_exp, Law, TailDistribution};
use crate::error::{domain, Error, Result};
use crate::expint::expint_e1;
use crate::integrate::{geometric_breaks, integrate_halves, integrate_pieces_auto, two_sided_breaks};

const REL: f64 = 1e-10;

fn scaled(r: QuadResult, log_scale: f64) -> QuadResult {
    let s = log_scale.exp();
    QuadResult { value: r.value * s, abs_error_est: r.abs_error_est * s, evaluations: r.evaluations }
}

/// First-piece width near the ends of `[a, b]`, a small fraction of the
/// local hazard scale `1/q`.
fn end_width(f: &dyn TailDistribution, at: f64, a: f64, b: f64) -> f64 {
    let span = b - a;
    let local = hazard_rate_at(f, at).ok().filter(|q| *q > 0.0 && q.is_finite()).map_or(span, |q| 1.0 / q);
    (1e-2 * local).clamp(1e-13 * span.max(1e-300), 0.25 * span)
}

/// `∫_a^b F̄(x-y) F(dy) / F̄(x)`.
fn tail_conv_ratio(f: &dyn TailDistribution, a: f64, b: f64, x: f64) -> QuadResult {
    tail_conv_ratio_off(f, a, b, x, 0.0)
}

/// Same, divided by `exp(off)`.
fn tail_conv_ratio_off(f: &dyn TailDistribution, a: f64, b: f64, x: f64, off: f64) -> QuadResult {
    if !(b > a) {
        return QuadResult::ZERO;
    }
    if f.has_density() {
        let w = end_width(f, a, a, b);
        let pts = two_sided_breaks(a, b, w);
        integrate_pieces_auto(
            |y| {
                let ld = f.log_density(y).unwrap_or(f64::NEG_INFINITY);
                (ld - f.log_tail_ratio_with(x, x - y, y) - off).exp()
            },
            &pts,
            REL,
        )
    } else {
        stieltjes_ratio(f, a, b, x, off)
    }
}

/// Log-uniform partition of `[a, b]` refined towards both ends.
fn two_sided_partition(a: f64, b: f64, first: f64, cells: usize) -> Vec<f64> {
    let half = 0.5 * (b - a);
    let per_side = cells / 2;
    let t_min = (first / half).min(1.0);
    let mut pts = Vec::with_capacity(2 * per_side + 3);
    pts.push(a);
    for k in 0..=per_side {
        let t = t_min.powf(1.0 - k as f64 / per_side as f64);
        pts.push(a + half * t);
    }
    for k in (0..per_side).rev() {
        let t = t_min.powf(1.0 - k as f64 / per_side as f64);
        pts.push(b - half * t);
    }
    pts.push(b);
    pts.dedup();
    pts
}

/// Riemann–Stieltjes fallback for laws without a density: tail differences
/// on a partition, doubled until the sum settles.
fn stieltjes_ratio(f: &dyn TailDistribution, a: f64, b: f64, x: f64, off: f64) -> QuadResult {
    let first = end_width(f, a, a, b);
    let sum = |cells: usize| {
        let pts = two_sided_partition(a, b, first, cells);
        let mut s = 0.0;
        for w in pts.windows(2) {
            let m = 0.5 * (w[0] + w[1]);
            let mass = f.log_tail_diff(w[0], w[1]);
            s += (mass - f.log_tail_ratio_with(x, x - m, m) - off).exp();
        }
        (s, pts.len())
    };
    let mut cells = 10_000;
    let (mut prev, mut evals) = sum(cells);
    loop {
        cells *= 2;
        let (cur, n) = sum(cells);
        evals += 3 * n;
        let change = (cur - prev).abs();
        if change <= 1e-7 * cur.abs() || cells >= 1 << 22 {
            return QuadResult { value: cur, abs_error_est: change, evaluations: evals };
        }
        prev = cur;
    }
}

/// `∫_{h(x)}^{x-h(x)} F̄(x-y) F(dy) / F̄(x)`, zero when `h(x) >= x/2`.
pub fn intermediate_integral_ratio(f: &dyn TailDistribution, h: f64, x: f64) -> Result<QuadResult> {
    if !x.is_finite() || !h.is_finite() {
        return Err(domain("intermediate integral needs finite x and h(x)"));
    }
    if h >= x / 2.0 {
        return Ok(QuadResult::ZERO);
    }
    let a = h.max(f.support_lower());
    Ok(tail_conv_ratio(f, a, x - h, x))
}

/// Natural log of [`intermediate_integral_ratio`] and its relative error,
/// usable when the ratio itself under- or overflows.
pub fn intermediate_integral_log_ratio(f: &dyn TailDistribution, h: f64, x: f64) -> Result<(f64, f64)> {
    if !x.is_finite() || !h.is_finite() {
        return Err(domain("intermediate integral needs finite x and h(x)"));
    }
    if h >= x / 2.0 {
        return Ok((f64::NEG_INFINITY, 0.0));
    }
    let a = h.max(f.support_lower());
    // the integral is of the order of F̄(h)
    let off = f.log_tail(a);
    let r = tail_conv_ratio_off(f, a, x - h, x, off);
    if r.value <= 0.0 {
        return Ok((f64::NEG_INFINITY, 0.0));
    }
    Ok((r.value.ln() + off, r.abs_error_est / r.value))
}

/// `∫_{h(x)}^{x-h(x)} F̄(x-y) F(dy)`.
pub fn intermediate_integral(f: &dyn TailDistribution, h: &LittleH, x: f64) -> Result<QuadResult> {
    let r = intermediate_integral_ratio(f, h.eval(x), x)?;
    Ok(scaled(r, f.log_tail(x)))
}

fn check_positive_support(f: &dyn TailDistribution) -> Result<()> {
    if f.support_lower() < 0.0 {
        return Err(Error::Unsupported(format!("{} is not supported on [0, ∞)", f.label())));
    }
    Ok(())
}

/// `P(X1 + X2 > x) / exp(log_scale)` for independent non-negative summands.
pub fn conv_tail2_scaled(
    f1: &dyn TailDistribution,
    f2: &dyn TailDistribution,
    x: f64,
    log_scale: f64,
) -> Result<QuadResult> {
    check_positive_support(f1)?;
    check_positive_support(f2)?;
    if !x.is_finite() {
        return Err(domain("conv_tail2 needs finite x"));
    }
    let (s1, s2) = (f1.support_lower(), f2.support_lower());
    if x <= s1 + s2 {
        return Ok(scaled(QuadResult { value: 1.0, abs_error_est: 0.0, evaluations: 0 }, -log_scale));
    }
    // integrate against whichever law has a density
    let (f1, f2, s1, s2) = if !f1.has_density() && f2.has_density() { (f2, f1, s2, s1) } else { (f1, f2, s1, s2) };
    let upper = x - s2;
    let first = (f1.log_tail(upper) - log_scale).exp();
    let rest = if f1.has_density() {
        let w = (1e-3 * (upper - s1)).min(1e-3);
        let half = 0.5 * (upper - s1);
        let lower_pts = geometric_breaks(s1, half, w);
        let off = f2.log_tail(x) - log_scale;
        let g = |y: f64, u: f64| {
            let ld = f1.log_density(y).unwrap_or(f64::NEG_INFINITY);
            (ld - f2.log_tail_ratio_with(x, u, y) + off).exp()
        };
        // the first cell by its mass: densities like y^(β-1) with small β
        // defeat the quadrature there
        let m = s1 + 0.5 * (lower_pts[1] - s1);
        let head = (f1.log_tail_diff(s1, lower_pts[1]) - f2.log_tail_ratio_with(x, x - m, m) + off).exp();
        let mut r =
            integrate_halves(|y| g(y, x - y), &lower_pts[1..], |u| g(x - u, u), &geometric_breaks(s2, half, w), REL);
        r.value += head;
        r
    } else {
        let mut r = stieltjes_ratio_pair(f1, f2, s1, upper, x);
        r.value *= (f2.log_tail(x) - log_scale).exp();
        r.abs_error_est *= (f2.log_tail(x) - log_scale).exp();
        r
    };
    Ok(QuadResult {
        value: first + rest.value,
        abs_error_est: rest.abs_error_est + 1e-15 * first,
        evaluations: rest.evaluations + 1,
    })
}

fn stieltjes_ratio_pair(f1: &dyn TailDistribution, f2: &dyn TailDistribution, a: f64, b: f64, x: f64) -> QuadResult {
    let sum = |cells: usize| {
        let pts = two_sided_partition(a, b, 1e-3_f64.min(b - a), cells);
        pts.windows(2)
            .map(|w| {
                let m = 0.5 * (w[0] + w[1]);
                (f1.log_tail_diff(w[0], w[1]) - f2.log_tail_ratio_with(x, x - m, m)).exp()
            })
            .sum::<f64>()
    };
    let mut cells = 10_000;
    let mut prev = sum(cells);
    loop {
        cells *= 2;
        let cur = sum(cells);
        if (cur - prev).abs() <= 1e-7 * cur.abs() || cells >= 1 << 22 {
            return QuadResult { value: cur, abs_error_est: (cur - prev).abs(), evaluations: cells };
        }
        prev = cur;
    }
}

/// `P(X1 + X2 > x)` for independent non-negative `X1 ~ f1`, `X2 ~ f2`.
pub fn conv_tail2(f1: &dyn TailDistribution, f2: &dyn TailDistribution, x: f64) -> Result<QuadResult> {
    conv_tail2_scaled(f1, f2, x, 0.0)
}

/// `sup_{y in [a,b]} F̄(y)/F̄(y+1)` squared.
pub fn density_free_constant(f: &dyn TailDistribution, a: f64, b: f64) -> f64 {
    let n = 2000;
    let mut sup: f64 = 1.0;
    for k in 0..=n {
        let y = if a > 0.0 { a * (b / a).powf(k as f64 / n as f64) } else { a + (b - a) * k as f64 / n as f64 };
        sup = sup.max((-f.log_tail_ratio_with(y + 1.0, y, 1.0)).exp());
    }
    sup * sup
}

/// Both sides of the density-free bound: `(∫_a^b F̄(x-y)F(dy), ∫_a^b F̄(x-y)F̄(y)dy)`.
pub fn density_free_bound_check(f: &dyn TailDistribution, a: f64, b: f64, x: f64) -> Result<(f64, f64)> {
    if a == b {
        return Ok((0.0, 0.0));
    }
    if !(0.0 < a && a < b && b < x) {
        return Err(domain(format!("density-free bound needs 0 < a < b < x, got a={a}, b={b}, x={x}")));
    }
    let lx = f.log_tail(x);
    let lhs = tail_conv_ratio(f, a, b, x).value * lx.exp();
    let w = end_width(f, a, a, b);
    let pts = two_sided_breaks(a, b, w);
    let rhs = integrate_pieces_auto(|y| (f.log_tail(y) - f.log_tail_ratio_with(x, x - y, y)).exp(), &pts, REL);
    Ok((lhs, rhs.value * lx.exp()))
}

/// `∫ f1(y) (F̄2(x-y) - F̄2(x)) dy` over `y <= x`: the probability that
/// neither summand exceeds `x` but their sum does.
pub fn p1_independent(f1: &dyn TailDistribution, f2: &dyn TailDistribution, x: f64) -> QuadResult {
    let s1 = f1.support_lower();
    if x <= s1 || !f1.has_density() {
        return QuadResult::ZERO;
    }
    let l2x = f2.log_tail(x);
    if l2x == f64::NEG_INFINITY {
        return QuadResult::ZERO;
    }
    // scale by the heavier of the two tails at x so that neither a large
    // X_1 nor a large X_2 overflows the integrand
    let scale = l2x.max(f1.log_tail(x));
    let off = l2x - scale;
    let w = (1e-6 * (x - s1)).min(1e-6);
    let half = 0.5 * (x - s1);
    let g = |y: f64, u: f64| {
        let ld = f1.log_density(y).unwrap_or(f64::NEG_INFINITY);
        let r = f2.log_tail_ratio_with(x, u, y);
        (ld + off - r + ln_one_minus_exp(r)).exp()
    };
    let r = integrate_halves(
        |y| g(y, x - y),
        &geometric_breaks(s1, half, w),
        |u| g(x - u, u),
        &geometric_breaks(0.0, half, w),
        1e-9,
    );
    scaled(r, scale)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Example3Integrals {
    /// `∫_0^1 x^{2β} e^{-x^β} dβ`
    pub p1_bound: f64,
    /// `∫_0^1 e^{-2x^β} dβ`
    pub p2: f64,
}

fn beta_breaks(x: f64) -> Vec<f64> {
    two_sided_breaks(0.0, 1.0, 1e-4 / x.ln())
}

/// The two β-integrals of the slowly varying Weibull mixture with unit
/// rate and `β ~ U(0, 1)`.
pub fn example3_beta_integrals(x: f64) -> Result<(f64, f64)> {
    let r = example3_integrals(x)?;
    Ok((r.p1_bound, r.p2))
}

pub fn example3_integrals(x: f64) -> Result<Example3Integrals> {
    if !(x > 1.0) || !x.is_finite() {
        return Err(domain(format!("need finite x > 1, got {x}")));
    }
    let pts = beta_breaks(x);
    let lx = x.ln();
    let p2 = integrate_pieces_auto(|b: f64| (-2.0 * (b * lx).exp()).exp(), &pts, 1e-12).value;
    let p1_bound = integrate_pieces_auto(
        |b: f64| {
            let t = (b * lx).exp();
            (2.0 * b * lx - t).exp()
        },
        &pts,
        1e-12,
    )
    .value;
    Ok(Example3Integrals { p1_bound, p2 })
}

/// `(E1(2) - E1(2x)) / ln x`, the closed form of `p2`.
pub fn example3_p2_closed(x: f64) -> Result<f64> {
    Ok((expint_e1(2.0)? - expint_e1(2.0 * x)?) / x.ln())
}

/// `(2/e - (x+1)e^{-x}) / ln x`, the closed form of `p1_bound`.
pub fn example3_p1_bound_closed(x: f64) -> f64 {
    (2.0 * (-1f64).exp() - (x + 1.0) * (-x).exp()) / x.ln()
}

/// Exact `P(X1 ∨ X2 <= x, X1 + X2 > x)` for the same mixture, by nested
/// quadrature over β and the first summand.
pub fn example3_p1(x: f64) -> Result<QuadResult> {
    if !(x > 1.0) || !x.is_finite() {
        return Err(domain(format!("need finite x > 1, got {x}")));
    }
    let pts = beta_breaks(x);
    Ok(integrate_pieces_auto(
        |b: f64| {
            if b <= 0.0 {
                return 0.0;
            }
            let law = Law::Weibull { gamma: 1.0, beta: b };
            p1_independent(&law, &law, x).value
        },
        &pts,
        1e-7,
    ))
}

/// Unconditional tail of the same mixture: `(E1(1) - E1(x)) / ln x`.
pub fn example3_marginal(x: f64) -> Result<f64> {
    Ok((expint_e1(1.0)? - expint_e1(x)?) / x.ln())
}
