//! Acceptance criteria 1-10. Prints one PASS/FAIL line per criterion and
//! exits nonzero when any fails. Pass criterion numbers as arguments to run
//! a subset.
//!
//! Oracles here are written independently of the library numerics (adaptive
//! Simpson in test code) and frozen where noted.

use std::collections::BTreeMap;
use std::process::{Command, ExitCode};
use std::sync::Arc;
use std::time::Instant;

use bigjump::boundary::{boundary_generator, weak_equiv, weak_equiv_grid, LittleH};
use bigjump::conditions::{check_d3, check_d4, d3_grid};
use bigjump::dist::{Law, TailDistribution};
use bigjump::expint::expint_e1;
use bigjump::models::{
    decomposition_quadrature, from_preset, AdditiveShock, CondIndepModel, MovingAverage, ParetoMixture, PRESETS,
};
use bigjump::quadrature::{conv_tail2_scaled, example3_beta_integrals, example3_marginal, example3_p1};
use bigjump::simulate::{
    big_jump_decomposition_with, kesten_probe, mc_sum_tail, random_sum_tail, DecompositionMethod, Estimator, SumQuery,
    TauKind, TauLaw,
};
use bigjump::verdict::{decade_grid, last_decades, TableRow};
use bigjump_cli::examples::{run_example, Conclusion};
use serde_json::json;

type Outcome = Result<(bool, String), Box<dyn std::error::Error>>;
type Closed = fn(f64) -> f64;
type Criterion = (u32, &'static str, fn() -> Outcome);

// tolerances
const E1_ANCHOR: f64 = 0.21938;
const E1_ANCHOR_TOL: f64 = 5e-6;
const E1_ORACLE_TOL: f64 = 1e-12;
const SUBEXP_BAND: (f64, f64) = (1.9, 2.1);
const CI_MULT: f64 = 3.0;
const ORACLE_CROSS_TOL: f64 = 0.02;
const P1_SMALL: f64 = 0.05;
const REL_5: f64 = 0.05;
const D4_FLOOR: f64 = 0.5;
const SE_MULT: f64 = 3.0;
const SLOPE_SLACK: f64 = 0.1;

// frozen oracle values, reproduced by the test-side quadratures below
const E1_1: f64 = 0.219_383_934_395_520_27;
const E1_2: f64 = 0.048_900_510_708_061_12;
const EX2_ORACLE_RATIO_1E3: f64 = 1.004_875_4;
const FROZEN_TOL: f64 = 1e-6;

const BIG_REPS: u64 = 1_000_000;
// exceedances there are driven by the common shock, which the estimator
// does not condition on
const SHOCK_REPS: u64 = 40_000_000;

/// Adaptive Simpson on `[a, b]` with absolute tolerance `tol`.
fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// `E1(x) = ∫_0^∞ exp(-x e^s) ds`.
fn e1_oracle(x: f64) -> f64 {
    let top = (800.0 / x).ln();
    // split so that each piece is smooth on its own scale
    let pts = [0.0, 0.5, 1.0, 2.0, 3.0, top];
    pts.windows(2).map(|w| simpson(&|s: f64| (-x * s.exp()).exp(), w[0], w[1], 1e-17)).sum()
}

/// `P(ξ1 + ξ2 > t)` for i.i.d. Pareto(α) on `[1, ∞)`.
fn pareto_pair_tail(alpha: f64, t: f64) -> f64 {
    if t <= 2.0 {
        return 1.0;
    }
    // P(ξ1 > t-1) + ∫_1^{t-1} α y^{-α-1} (t-y)^{-α} dy, with y = e^s
    let top = (t - 1.0).ln();
    let g = |s: f64| {
        let y = s.exp();
        alpha * y.powf(-alpha) * (t - y).powf(-alpha)
    };
    let mid = (0.5 * t).ln().clamp(0.0, top);
    let tol = 1e-13 * t.powf(-alpha);
    (t - 1.0).powf(-alpha) + simpson(&g, 0.0, mid, tol) + simpson(&g, mid, top, tol)
}

/// `P(ξ1 + ξ2 + 2η > x)` with `η ~ Pareto(β)` independent of the pair.
fn shock_pair_tail(alpha: f64, beta: f64, x: f64) -> f64 {
    // t = x - 2η; the mass with t <= 2 has G = 1
    let head = ((x - 2.0) / 2.0).powf(-beta);
    let dens = |t: f64| beta / 2.0 * ((x - t) / 2.0).powf(-beta - 1.0);
    let tol = 1e-11 * x.powf(-alpha.min(beta));
    // t in [2, x/2] on a log scale, the rest in log(x - t)
    let lower = simpson(
        &|s: f64| {
            let t = s.exp();
            pareto_pair_tail(alpha, t) * dens(t) * t
        },
        2f64.ln(),
        (0.5 * x).ln(),
        tol,
    );
    let upper = simpson(
        &|s: f64| {
            let u = s.exp();
            let t = x - u;
            pareto_pair_tail(alpha, t) * dens(t) * u
        },
        2f64.ln(),
        (0.5 * x).ln(),
        tol,
    );
    head + lower + upper
}

/// `P(Y1 + Y2 > x)` for i.i.d. Lomax(η), `F̄(y) = (1+y)^-η`.
fn lomax_pair_tail(eta: f64, x: f64) -> f64 {
    // 2 ∫_0^{x/2} f(y) F̄(x-y) dy + F̄(x/2)^2, with y = e^s - 1
    let g = |s: f64| eta * (-eta * s).exp() * (2.0 + x - s.exp()).powf(-eta);
    let top = (0.5 * x).ln_1p();
    let tol = 1e-14 * (1.0 + x).powf(-eta);
    2.0 * simpson(&g, 0.0, top, tol) + (1.0 + 0.5 * x).powf(-2.0 * eta)
}

/// `P(S_2 > x) / (2 F̄_X(x))` for the Pareto mixture with `η ~ U(1, 2)`.
fn pareto_mixture_oracle_ratio(x: f64) -> f64 {
    let num = simpson(&|eta| lomax_pair_tail(eta, x), 1.0, 2.0, 1e-13 / x);
    let l = x.ln_1p();
    let marginal = ((1.0 + x).recip() - (1.0 + x).powi(-2)) / l;
    num / (2.0 * marginal)
}

fn ci_half(r: &TableRow) -> f64 {
    0.5 * (r.hi - r.lo)
}

/// `|ratio - 1|` against `CI_MULT` CI half-widths, in units of the target.
fn within_ci(r: &TableRow) -> bool {
    (r.ratio - 1.0).abs() <= CI_MULT * ci_half(r) / r.target
}

fn criterion_1() -> Outcome {
    let v = expint_e1(1.0)?;
    let oracle = e1_oracle(1.0);
    let anchor = (v - E1_ANCHOR).abs() <= E1_ANCHOR_TOL;
    let full = (v - oracle).abs() <= E1_ORACLE_TOL;
    let frozen = (oracle - E1_1).abs() <= E1_ORACLE_TOL;
    Ok((anchor && full && frozen, format!("E1(1) = {v:.17}, oracle {oracle:.17}, |diff| = {:.1e}", (v - oracle).abs())))
}

fn criterion_2() -> Outcome {
    let xs = weak_equiv_grid();
    let cases: [(&str, Law, Closed); 4] = [
        ("pareto(2) ~ x", Law::pareto(2.0), |x| x),
        ("weibull(0.5) ~ x^0.5", Law::Weibull { gamma: 1.0, beta: 0.5 }, |x| x.powf(0.5)),
        ("log-weibull(2) ~ x ln(x)^-1", Law::LogWeibull { gamma: 1.0, alpha: 2.0 }, |x| x / x.ln()),
        ("lognormal(0,1) ~ x/ln x", Law::LogNormal { mu: 0.0, sigma: 1.0 }, |x| x / x.ln()),
    ];
    let mut ok = true;
    let mut parts = vec![];
    for (name, law, closed) in cases {
        let gen = boundary_generator(Arc::new(law))?;
        let pass = weak_equiv(&|x| gen.eval(x), &closed, &xs);
        ok &= pass;
        parts.push(format!("{name}: {}", if pass { "ok" } else { "no" }));
    }
    Ok((ok, parts.join("; ")))
}

fn criterion_3() -> Outcome {
    let xs = decade_grid(2, 8);
    let idx = last_decades(&xs);
    let laws = [
        ("pareto(1)", Law::pareto(1.0)),
        ("pareto(2)", Law::pareto(2.0)),
        ("weibull(0.5)", Law::Weibull { gamma: 1.0, beta: 0.5 }),
        ("lognormal(0,1)", Law::LogNormal { mu: 0.0, sigma: 1.0 }),
    ];
    let mut ok = true;
    let mut parts = vec![];
    for (name, f) in laws {
        let mut r = vec![];
        for &x in &xs {
            r.push(conv_tail2_scaled(&f, &f, x, f.log_tail(x))?.value);
        }
        let top = *r.last().unwrap();
        let dist: Vec<f64> = idx.iter().map(|&i| (r[i] - 2.0).abs()).collect();
        let monotone = dist.windows(2).all(|w| w[1] <= w[0]);
        let pass = (SUBEXP_BAND.0..=SUBEXP_BAND.1).contains(&top) && monotone;
        ok &= pass;
        parts.push(format!("{name} {top:.7}{}", if monotone { "" } else { " (not monotone)" }));
    }
    Ok((ok, parts.join("; ")))
}

fn criterion_4() -> Outcome {
    let model = ParetoMixture::new(4)?;
    let f = model.reference();
    let gen = model.boundary()?;
    let rep = check_d3(&model.bounding(), f.as_ref(), &gen, &d3_grid())?;
    // the default set is 2^k, k = -6..1, restricted to cH(x) < x/2
    let (usable, _) = gen.usable_multiples(&d3_grid());
    let tested: Vec<f64> = rep.per_multiple.iter().map(|m| m.multiple).collect();
    let all_multiples = !usable.is_empty() && tested == usable;
    let d3 = rep.overall && all_multiples;

    let x = 1e3;
    let oracle = pareto_mixture_oracle_ratio(x);
    let frozen = (oracle - EX2_ORACLE_RATIO_1E3).abs() <= FROZEN_TOL;
    let lib = decomposition_quadrature(&ParetoMixture::new(2)?, x, 1e-9)?.p_sum / (2.0 * f.tail(x));
    let lib_ok = (lib / oracle - 1.0).abs() <= ORACLE_CROSS_TOL;
    let oracle_ok = (oracle - 1.0).abs() <= ORACLE_CROSS_TOL;

    let arc: Arc<dyn CondIndepModel> = Arc::new(model);
    let mut ok = d3 && frozen && lib_ok && oracle_ok;
    let mut parts = vec![format!("d3 {} over multiples {tested:?}", rep.overall)];
    parts.push(format!("2-D oracle {oracle:.7}, library quadrature {lib:.7}"));
    for n in 2..=4 {
        let q = SumQuery::new(arc.clone(), n, vec![x], BIG_REPS, 40 + n as u64);
        let t = mc_sum_tail(&q)?;
        let r = &t.rows[0];
        let mut pass = within_ci(r);
        if n == 2 {
            // the Monte Carlo also brackets the oracle value
            pass &= (r.ratio - oracle).abs() <= CI_MULT * ci_half(r) / r.target;
        }
        ok &= pass;
        parts.push(format!("n={n} ratio {:.4} ± {:.4}", r.ratio, ci_half(r) / r.target));
    }
    Ok((ok, parts.join("; ")))
}

fn criterion_5() -> Outcome {
    let xs = decade_grid(2, 6);
    let mut p1 = vec![];
    for &x in &xs {
        p1.push(example3_p1(x)?.value / example3_marginal(x)?);
    }
    let decreasing = p1.windows(2).all(|w| w[1] < w[0]);
    let top = *p1.last().unwrap();

    let limit = e1_oracle(2.0) / e1_oracle(1.0);
    let frozen = (e1_oracle(2.0) - E1_2).abs() <= E1_ORACLE_TOL;
    let x = 1e6;
    let (_, p2) = example3_beta_integrals(x)?;
    let p2_ratio = p2 / example3_marginal(x)?;
    let p2_ok = (p2_ratio / limit - 1.0).abs() <= REL_5;

    let v = run_example(3, &BTreeMap::from([("a".to_string(), json!(0.0))]), 1, 200_000)?;
    let conclusion_ok = v.conclusion == Conclusion::BigJumpOnly;
    let ok = decreasing && top < P1_SMALL && frozen && p2_ok && conclusion_ok;
    Ok((
        ok,
        format!(
            "P1/F at 1e6 = {top:.4e} ({}), P2/P(X1>x) = {p2_ratio:.5} vs E1(2)/E1(1) = {limit:.5}, conclusion {:?}",
            if decreasing { "decreasing" } else { "not decreasing" },
            v.conclusion
        ),
    ))
}

fn shock_case(alpha: f64, beta: f64, seed: u64) -> Result<(bool, String), Box<dyn std::error::Error>> {
    let model = AdditiveShock::new(alpha, beta, 2)?;
    let f = model.reference();
    let q = SumQuery::new(Arc::new(model), 2, vec![1e3], SHOCK_REPS, seed);
    let t = mc_sum_tail(&q)?;
    let r = t.rows.last().unwrap();
    let fx = f.tail(r.x);
    let measured = r.estimate / fx;
    let oracle = shock_pair_tail(alpha, beta, r.x) / fx;
    let pass = (measured / oracle - 1.0).abs() <= REL_5;
    Ok((
        pass,
        format!(
            "({alpha},{beta}) at {:.0e}: ratio {measured:.4}, oracle {oracle:.4}, limit {:.4}",
            r.x,
            2f64.powf(beta)
        ),
    ))
}

fn criterion_6() -> Outcome {
    let mut parts = vec![];

    let light = AdditiveShock::new(1.0, 2.0, 2)?;
    let rep = check_d3(&light.bounding(), light.reference().as_ref(), &light.boundary()?, &d3_grid())?;
    let f = light.reference();
    let q = SumQuery::new(Arc::new(light), 2, vec![1e3, 1e4], BIG_REPS, 61);
    let t = mc_sum_tail(&q)?;
    let r = t.rows.last().unwrap();
    let ratio = r.estimate / f.tail(r.x);
    let half = ci_half(r) / f.tail(r.x);
    let case_a = rep.overall && (ratio - 2.0).abs() <= CI_MULT * half;
    parts.push(format!("(1,2): d3 {}, ratio at {:.0e} = {ratio:.4} ± {half:.4}", rep.overall, r.x));

    let heavy = AdditiveShock::new(2.0, 1.0, 2)?;
    let rep = check_d3(&heavy.bounding(), heavy.reference().as_ref(), &heavy.boundary()?, &d3_grid())?;
    let d3i_only = !rep.overall && rep.failing == ["d3i"];
    let (oracle_ok, detail) = shock_case(2.0, 1.0, 62)?;
    parts.push(format!("(2,1): failing {:?}, {detail}", rep.failing));

    // limit 2^β differs from Σc = 2 here
    let (extra_ok, detail) = shock_case(3.0, 1.5, 63)?;
    parts.push(detail);
    Ok((case_a && d3i_only && oracle_ok && extra_ok, parts.join("; ")))
}

fn criterion_7() -> Outcome {
    let model = MovingAverage::new(2.0, 1.5, 2)?;
    let f = model.reference();
    let mut worst = 0.0f64;
    let mut exact = true;
    for &x in &decade_grid(1, 6) {
        for k in 0..=80 {
            let w = 10f64.powf(0.1 * k as f64) * 1.5;
            let lhs = model.z_tail_given_w(x, w) / f.tail(x);
            let bound = x.powf(model.beta);
            worst = worst.max(lhs / bound);
            exact &= lhs <= bound * (1.0 + 1e-12);
        }
    }
    let d4 = check_d4(&model, &LittleH::power(1.0, 0.5), 0, 1, &decade_grid(1, 4), 200_000, 71)?;
    let last = d4.table.rows.iter().rev().find(|r| r.reliable).map_or(f64::NAN, |r| r.ratio);
    let d4_ok = last >= D4_FLOOR;

    let q = SumQuery::new(Arc::new(model), 2, vec![1e2, 1e3], BIG_REPS, 72);
    let t = mc_sum_tail(&q)?;
    let mut sum_ok = true;
    let mut parts = vec![format!("max ratio/x^β {worst:.6}"), format!("d4 final {last:.4}")];
    for r in &t.rows {
        let fx = f.tail(r.x);
        let pass = r.estimate <= fx + CI_MULT * ci_half(r);
        sum_ok &= pass;
        parts.push(format!("P(S2>{:.0e})/F = {:.4} ± {:.4}", r.x, r.estimate / fx, ci_half(r) / fx));
    }
    Ok((exact && d4_ok && sum_ok, parts.join("; ")))
}

fn criterion_8() -> Outcome {
    let eps = 0.5;
    let rep = kesten_probe(Arc::new(ParetoMixture::new(10)?), eps, 10, 10.0, &decade_grid(1, 3), 100_000, 81)?;
    let cap = (1.0 + eps).ln() + SLOPE_SLACK;
    let ok = rep.bound_ok && rep.growth_slope <= cap;
    Ok((ok, format!("bound_ok {}, V = {:.3}, slope {:.4} (cap {cap:.4})", rep.bound_ok, rep.v, rep.growth_slope)))
}

fn criterion_9() -> Outcome {
    let tau = TauLaw::new(TauKind::Geometric { p: 0.5 })?;
    let rep =
        random_sum_tail(Arc::new(ParetoMixture::new(10)?), tau, vec![1e3], BIG_REPS, 91, Estimator::CondLastStep)?;
    let r = &rep.table.rows[0];
    Ok((
        within_ci(r),
        format!(
            "ratio {:.4} ± {:.4}, cap {} with bias bound {:.1e}",
            r.ratio,
            ci_half(r) / r.target,
            rep.tau.cap,
            rep.cap_bias
        ),
    ))
}

fn csv_run(threads: &str, out: &std::path::Path) -> Result<Vec<u8>, Box<dyn std::error::Error>> {
    let status = Command::new(env!("CARGO_BIN_EXE_bigjump"))
        .args(["simulate", "--model", "pareto_mixture", "--grid", "10:1000:3", "--seed", "5"])
        .args(["--replications", "50000", "--n", "3", "--csv"])
        .arg(out)
        .env("BIGJUMP_THREADS", threads)
        .status()?;
    if !status.success() {
        return Err(format!("bigjump exited with {status}").into());
    }
    Ok(std::fs::read(out)?)
}

fn criterion_10() -> Outcome {
    let xs = vec![10.0, 100.0];
    let mut parts = vec![];
    let mut agree = true;
    let mut identity = true;
    for name in PRESETS {
        let model = from_preset(name, &BTreeMap::new())?;
        let run = |e: Estimator, seed: u64| {
            mc_sum_tail(&SumQuery::new(model.clone(), 2, xs.clone(), 200_000, seed).with_estimator(e))
        };
        let (plain, cond) = (run(Estimator::Plain, 101)?, run(Estimator::CondLastStep, 102)?);
        for (a, b) in plain.rows.iter().zip(&cond.rows) {
            let z = (a.estimate - b.estimate).abs() / a.se.hypot(b.se);
            if z > SE_MULT {
                agree = false;
                parts.push(format!("{name} at {}: plain {:.4e} vs cond {:.4e}", a.x, a.estimate, b.estimate));
            }
        }
        let method = DecompositionMethod::preferred(model.as_ref());
        let rep = big_jump_decomposition_with(model.clone(), &xs, 20_000, 103, method)?;
        if !rep.rows.iter().all(|r| r.identity_holds()) {
            identity = false;
            parts.push(format!("{name}: decomposition residual outside its CI"));
        }
    }
    let dir = tempfile::tempdir()?;
    let a = csv_run("1", &dir.path().join("a.csv"))?;
    let b = csv_run("1", &dir.path().join("b.csv"))?;
    let c = csv_run("2", &dir.path().join("c.csv"))?;
    let same = a == b && a == c;
    parts.push(format!("plain/cond agree {agree}, identity {identity}, reruns identical {same}"));
    Ok((agree && identity && same, parts.join("; ")))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        (1, "E1 anchor", criterion_1),
        (2, "boundary classes", criterion_2),
        (3, "subexponential convolution ratio", criterion_3),
        (4, "Pareto mixture end to end", criterion_4),
        (5, "Weibull mixture big jump only", criterion_5),
        (6, "additive shock dichotomy", criterion_6),
        (7, "moving average", criterion_7),
        (8, "Kesten probe", criterion_8),
        (9, "random sums", criterion_9),
        (10, "engine invariants", criterion_10),
    ];
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, name, run) in criteria {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let (pass, detail) = match run() {
            Ok(v) => v,
            Err(e) => (false, format!("error: {e}")),
        };
        failed += u32::from(!pass);
        let verdict = if pass { "PASS" } else { "FAIL" };
        println!("criterion {id:>2} {verdict} {name} [{:.1}s]: {detail}", start.elapsed().as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
