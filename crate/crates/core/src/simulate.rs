//! Rare-event Monte Carlo: sum tails with a conditional last-step
//! estimator, the two-summand decomposition, random sums and a probe of
//! the geometric-in-n (Kesten) bound.

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dist::TailDistribution;
use crate::error::{Error, Result};
use crate::models::{CondIndepModel, Latent};
use crate::quadrature::{conv_tail2, p1_independent};
use crate::rng::{stream, SimRng};
use crate::verdict::{judge, ls_slope, ConvergenceTable, LimitRule, LimitVerdict, TableRow};

/// Replications per parallel chunk. Fixed, so results do not depend on the
/// number of workers.
const CHUNK: u64 = 4096;
const Z95: f64 = 1.959963984540054;
/// Rows with a smaller effective sample size are flagged unreliable.
pub const MIN_ESS: f64 = 50.0;

/// Running sums for one estimated quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stats {
    pub n: u64,
    pub sum: f64,
    pub sum_sq: f64,
    pub nonzero: u64,
    /// every pushed value was 0 or 1
    pub binary: bool,
}

impl Default for Stats {
    fn default() -> Self {
        Stats { n: 0, sum: 0.0, sum_sq: 0.0, nonzero: 0, binary: true }
    }
}

impl Stats {
    pub fn push(&mut self, v: f64) {
        self.n += 1;
        self.sum += v;
        self.sum_sq += v * v;
        if v != 0.0 {
            self.nonzero += 1;
        }
        if v != 0.0 && v != 1.0 {
            self.binary = false;
        }
    }

    pub fn merge(&mut self, o: &Stats) {
        self.n += o.n;
        self.sum += o.sum;
        self.sum_sq += o.sum_sq;
        self.nonzero += o.nonzero;
        self.binary &= o.binary;
    }

    pub fn mean(&self) -> f64 {
        self.sum / self.n as f64
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            return f64::NAN;
        }
        let n = self.n as f64;
        ((self.sum_sq - self.sum * self.sum / n) / (n - 1.0)).max(0.0)
    }

    pub fn se(&self) -> f64 {
        (self.variance() / self.n as f64).sqrt()
    }

    /// `(Σv)² / Σv²`; the hit count for indicator samples.
    pub fn ess(&self) -> f64 {
        if self.sum_sq == 0.0 {
            0.0
        } else {
            self.sum * self.sum / self.sum_sq
        }
    }

    /// 95% interval: Wilson for indicators with fewer than 30 hits,
    /// normal otherwise.
    pub fn ci(&self) -> (f64, f64) {
        let m = self.mean();
        if self.binary && self.nonzero < 30 {
            let n = self.n as f64;
            let z2 = Z95 * Z95;
            let centre = (m + z2 / (2.0 * n)) / (1.0 + z2 / n);
            let half = Z95 / (1.0 + z2 / n) * (m * (1.0 - m) / n + z2 / (4.0 * n * n)).sqrt();
            return ((centre - half).max(0.0), centre + half);
        }
        let h = Z95 * self.se();
        (m - h, m + h)
    }

    pub fn estimate(&self) -> Estimate {
        let (lo, hi) = self.ci();
        Estimate { estimate: self.mean(), se: self.se(), lo, hi, ess: self.ess() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub estimate: f64,
    pub se: f64,
    pub lo: f64,
    pub hi: f64,
    pub ess: f64,
}

/// Runs `f(rep, rng, out)` for `rep in 0..reps` with `rng = stream(seed, rep)`,
/// accumulating `width` outputs per replication.
pub fn run_replications<F>(reps: u64, seed: u64, width: usize, f: F) -> Vec<Stats>
where
    F: Fn(u64, &mut SimRng, &mut [f64]) + Sync,
{
    let chunks = reps.div_ceil(CHUNK);
    let partial: Vec<Vec<Stats>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![Stats::default(); width];
            let mut out = vec![0.0; width];
            for rep in c * CHUNK..((c + 1) * CHUNK).min(reps) {
                let mut rng = stream(seed, rep);
                out.iter_mut().for_each(|v| *v = 0.0);
                f(rep, &mut rng, &mut out);
                for (a, &v) in acc.iter_mut().zip(&out) {
                    a.push(v);
                }
            }
            acc
        })
        .collect();
    let mut total = vec![Stats::default(); width];
    for p in &partial {
        for (t, s) in total.iter_mut().zip(p) {
            t.merge(s);
        }
    }
    total
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Plain,
    CondLastStep,
}

impl Estimator {
    pub fn label(self) -> &'static str {
        match self {
            Estimator::Plain => "plain",
            Estimator::CondLastStep => "cond_last_step",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TauKind {
    Geometric { p: f64 },
    Poisson { lambda: f64 },
    Fixed { n: usize },
}

/// Law of the number of summands, truncated at `cap` with the mass above
/// folded into the top atom.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TauLaw {
    pub kind: TauKind,
    pub cap: usize,
}

impl TauLaw {
    /// Cap at the 0.999 quantile.
    pub fn new(kind: TauKind) -> Result<Self> {
        match kind {
            TauKind::Geometric { p } if !(p > 0.0 && p <= 1.0) => {
                return Err(Error::Config(format!("geometric p must lie in (0, 1], got {p}")))
            }
            TauKind::Poisson { lambda } if !(lambda > 0.0 && lambda <= 100.0) => {
                return Err(Error::Config(format!("poisson lambda must lie in (0, 100], got {lambda}")))
            }
            _ => {}
        }
        let mut cap = 0;
        let mut cdf = Self::raw_pmf(kind, 0);
        while cdf < 0.999 {
            cap += 1;
            cdf += Self::raw_pmf(kind, cap);
        }
        Ok(TauLaw { kind, cap })
    }

    pub fn with_cap(kind: TauKind, cap: usize) -> Result<Self> {
        let t = Self::new(kind)?;
        if cap < t.cap {
            return Err(Error::Precondition(format!("cap {cap} is below the 0.999 quantile {}", t.cap)));
        }
        Ok(TauLaw { kind, cap })
    }

    fn raw_pmf(kind: TauKind, k: usize) -> f64 {
        match kind {
            TauKind::Geometric { p } => {
                if k == 0 {
                    0.0
                } else {
                    p * (1.0 - p).powi(k as i32 - 1)
                }
            }
            TauKind::Poisson { lambda } => {
                let lf: f64 = (1..=k).map(|j| (j as f64).ln()).sum();
                (k as f64 * lambda.ln() - lambda - lf).exp()
            }
            TauKind::Fixed { n } => f64::from(k == n),
        }
    }

    /// Probabilities of `0..=cap` under the capped law.
    pub fn pmf(&self) -> Vec<f64> {
        let mut p: Vec<f64> = (0..=self.cap).map(|k| Self::raw_pmf(self.kind, k)).collect();
        let head: f64 = p[..self.cap].iter().sum();
        p[self.cap] = (1.0 - head).max(0.0);
        p
    }

    /// `P(τ > cap)` under the untruncated law; bounds the bias of any
    /// probability estimated with the capped law.
    pub fn cap_mass(&self) -> f64 {
        let head: f64 = (0..=self.cap).map(|k| Self::raw_pmf(self.kind, k)).sum();
        (1.0 - head).max(0.0)
    }

    pub fn mean(&self) -> f64 {
        match self.kind {
            TauKind::Geometric { p } => 1.0 / p,
            TauKind::Poisson { lambda } => lambda,
            TauKind::Fixed { n } => n as f64,
        }
    }

    pub fn label(&self) -> String {
        match self.kind {
            TauKind::Geometric { p } => format!("geometric({p})"),
            TauKind::Poisson { lambda } => format!("poisson({lambda})"),
            TauKind::Fixed { n } => format!("fixed({n})"),
        }
    }

    fn sample(&self, cdf: &[f64], rng: &mut SimRng) -> usize {
        let u: f64 = rng.random();
        cdf.iter().position(|&c| u < c).unwrap_or(self.cap)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SumCount {
    N(usize),
    Tau(TauLaw),
}

#[derive(Clone)]
pub struct SumQuery {
    pub model: Arc<dyn CondIndepModel>,
    pub n: SumCount,
    pub x_grid: Vec<f64>,
    pub replications: u64,
    pub seed: u64,
    pub estimator: Estimator,
}

impl SumQuery {
    pub fn new(model: Arc<dyn CondIndepModel>, n: usize, x_grid: Vec<f64>, replications: u64, seed: u64) -> Self {
        SumQuery { model, n: SumCount::N(n), x_grid, replications, seed, estimator: Estimator::CondLastStep }
    }

    pub fn with_estimator(mut self, e: Estimator) -> Self {
        self.estimator = e;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.replications < 1000 {
            return Err(Error::Precondition(format!("need at least 1000 replications, got {}", self.replications)));
        }
        if self.x_grid.is_empty() || self.x_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Precondition("x_grid must be non-empty and strictly increasing".into()));
        }
        let top = match &self.n {
            SumCount::N(n) => *n,
            SumCount::Tau(t) => t.cap,
        };
        if top == 0 && matches!(self.n, SumCount::N(_)) {
            return Err(Error::Precondition("n must be at least 1".into()));
        }
        if top > self.model.n_max() {
            return Err(Error::Precondition(format!(
                "{} summands requested but model {} holds {}",
                top,
                self.model.name(),
                self.model.n_max()
            )));
        }
        Ok(())
    }
}

/// Adds `P(S_k > x | g)` estimates for every `x` into `out`, given a latent
/// draw and the number of summands `k`.
fn one_sum(
    model: &dyn CondIndepModel,
    k: usize,
    xs: &[f64],
    est: Estimator,
    g: &Latent,
    rng: &mut SimRng,
    out: &mut [f64],
) {
    if k == 0 {
        return;
    }
    let mut s = 0.0;
    for i in 0..k - 1 {
        s += model.cond_sample(i, g, rng);
    }
    match est {
        Estimator::CondLastStep => {
            for (o, &x) in out.iter_mut().zip(xs) {
                *o = model.cond_tail(k - 1, x - s, g);
            }
        }
        Estimator::Plain => {
            s += model.cond_sample(k - 1, g, rng);
            for (o, &x) in out.iter_mut().zip(xs) {
                *o = f64::from(s > x);
            }
        }
    }
}

fn sum_table(q: &SumQuery, stats: &[Stats], label: &str, scale: f64) -> ConvergenceTable {
    let f = q.model.reference();
    let mut t = ConvergenceTable::default();
    for (s, &x) in stats.iter().zip(&q.x_grid) {
        let e = s.estimate();
        let target = scale * f.tail(x);
        t.push(TableRow {
            x,
            n_or_tau: label.to_string(),
            estimator: q.estimator.label().into(),
            estimate: e.estimate,
            se: e.se,
            lo: e.lo,
            hi: e.hi,
            target,
            ratio: e.estimate / target,
            reliable: e.ess >= MIN_ESS,
        });
    }
    t
}

/// `P(S_n > x)` on the grid with the target `(Σ c_i) F̄(x)` in each row.
pub fn mc_sum_tail(q: &SumQuery) -> Result<ConvergenceTable> {
    q.validate()?;
    let model = q.model.as_ref();
    match &q.n {
        SumCount::N(n) => {
            let n = *n;
            let stats = run_replications(q.replications, q.seed, q.x_grid.len(), |_, rng, out| {
                let g = model.sample_latent(rng);
                one_sum(model, n, &q.x_grid, q.estimator, &g, rng, out);
            });
            let c: f64 = model.c()[..n].iter().sum();
            Ok(sum_table(q, &stats, &n.to_string(), c))
        }
        SumCount::Tau(tau) => {
            let pmf = tau.pmf();
            let cdf: Vec<f64> = pmf
                .iter()
                .scan(0.0, |a, p| {
                    *a += p;
                    Some(*a)
                })
                .collect();
            let stats = run_replications(q.replications, q.seed, q.x_grid.len(), |_, rng, out| {
                let k = match tau.kind {
                    TauKind::Fixed { n } => n,
                    _ => tau.sample(&cdf, rng),
                };
                let g = model.sample_latent(rng);
                one_sum(model, k, &q.x_grid, q.estimator, &g, rng, out);
            });
            Ok(sum_table(q, &stats, &tau.label(), random_sum_weight(model, tau)))
        }
    }
}

/// `E Σ_{i≤τ} c_i` under the untruncated law of `τ`; terms beyond the model
/// size reuse its last `c_i`.
fn random_sum_weight(model: &dyn CondIndepModel, tau: &TauLaw) -> f64 {
    let c = model.c();
    let ci = |i: usize| c.get(i).copied().unwrap_or(*c.last().unwrap());
    // E Σ_{i≤τ} c_i = Σ_i c_i P(τ > i)
    let mut tail = 1.0 - TauLaw::raw_pmf(tau.kind, 0);
    let mut total = 0.0;
    let mut i = 0;
    while tail > 1e-16 && i < 10_000 {
        total += ci(i) * tail;
        i += 1;
        tail -= TauLaw::raw_pmf(tau.kind, i);
    }
    total
}

#[derive(Debug, Clone, Serialize)]
pub struct RandomSumReport {
    pub table: ConvergenceTable,
    pub tau: TauLaw,
    /// Upper bound on the bias from capping `τ`.
    pub cap_bias: f64,
}

/// `P(S_τ > x)` against `E(Σ_{i≤τ} c_i) F̄(x)`.
pub fn random_sum_tail(
    model: Arc<dyn CondIndepModel>,
    tau: TauLaw,
    x_grid: Vec<f64>,
    reps: u64,
    seed: u64,
    estimator: Estimator,
) -> Result<RandomSumReport> {
    let cap_bias = tau.cap_mass();
    let q = SumQuery { model, n: SumCount::Tau(tau.clone()), x_grid, replications: reps, seed, estimator };
    Ok(RandomSumReport { table: mc_sum_tail(&q)?, tau, cap_bias })
}

#[derive(Debug, Clone, Serialize)]
pub struct DecompositionRow {
    pub x: f64,
    /// `F̄_1(x)`, the denominator of the ratios
    pub reference_tail: f64,
    pub p_sum: Estimate,
    pub p1: Estimate,
    pub p2: Estimate,
    /// `P(X_1 > x, S ≤ x) + P(X_2 > x, S ≤ x)`; zero for non-negative summands
    pub p0: Estimate,
    pub per_term: Vec<Estimate>,
    /// `p_sum - (Σ per_term - p2 + p1 - p0)` estimated pairwise
    pub residual: Estimate,
}

impl DecompositionRow {
    /// The residual CI covers 0, up to quadrature error when the terms are
    /// conditional quadratures.
    pub fn identity_holds(&self) -> bool {
        let slack = 1e-6 * self.p_sum.estimate.abs();
        self.residual.lo - slack <= 0.0 && 0.0 <= self.residual.hi + slack
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DecompositionReport {
    pub model: String,
    pub rows: Vec<DecompositionRow>,
    /// `P_1 / F̄_1 → 0`
    pub p1_verdict: LimitVerdict,
    /// `P_2 / F̄_1 → 0`
    pub p2_verdict: LimitVerdict,
    pub p0_verdict: LimitVerdict,
    pub big_jump: bool,
    pub single_big_jump: bool,
}

impl DecompositionReport {
    pub fn table(&self) -> ConvergenceTable {
        let mut t = ConvergenceTable::default();
        for r in &self.rows {
            let mut add = |name: &str, e: &Estimate| {
                t.push(TableRow {
                    x: r.x,
                    n_or_tau: "2".into(),
                    estimator: name.into(),
                    estimate: e.estimate,
                    se: e.se,
                    lo: e.lo,
                    hi: e.hi,
                    target: r.reference_tail,
                    ratio: e.estimate / r.reference_tail,
                    reliable: true,
                })
            };
            add("p_sum", &r.p_sum);
            add("p1", &r.p1);
            add("p2", &r.p2);
            add("p0", &r.p0);
            for (k, e) in r.per_term.iter().enumerate() {
                add(&format!("term{}", k + 1), e);
            }
            add("residual", &r.residual);
        }
        t
    }
}

const DECOMP_WIDTH: usize = 7;

/// How the decomposition terms are estimated per replication.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DecompositionMethod {
    /// Draw the latent from the model's proposal at each `x`, sample `X_1`
    /// and `X_2`, and use conditional tails for the rest.
    SampledSummands,
    /// Draw the latent once and compute every term given it by quadrature.
    /// Needs non-negative summands with closed-form conditional laws.
    ConditionalQuadrature,
}

impl DecompositionMethod {
    /// Conditional quadrature where it applies.
    pub fn preferred(model: &dyn CondIndepModel) -> Self {
        let probe = model.latent_grid().remove(0);
        if !model.real_valued() && model.cond_law(0, &probe).is_some() && model.cond_law(1, &probe).is_some() {
            DecompositionMethod::ConditionalQuadrature
        } else {
            DecompositionMethod::SampledSummands
        }
    }
}

/// Two-summand decomposition `P(S > x) = F̄_1 + F̄_2 - P_2 + P_1 - P_0`,
/// with every term estimated conditionally on the latent draw.
pub fn big_jump_decomposition(
    model: Arc<dyn CondIndepModel>,
    x_grid: &[f64],
    reps: u64,
    seed: u64,
) -> Result<DecompositionReport> {
    big_jump_decomposition_with(model, x_grid, reps, seed, DecompositionMethod::SampledSummands)
}

fn sampled_terms(m: &dyn CondIndepModel, x: f64, rng: &mut SimRng, o: &mut [f64]) {
    let (g, w) = m.sample_latent_biased(x, rng);
    let y = m.cond_sample(0, &g, rng);
    let z = m.cond_sample(1, &g, rng);
    let psum = m.cond_tail(1, x - y, &g);
    let (t1, t2) = (m.cond_tail(0, x, &g), m.cond_tail(1, x, &g));
    let p2 = t1 * t2;
    let p1 = if y <= x { (psum - t2).max(0.0) } else { 0.0 };
    // P(X_j > x, S <= x | G), conditioned on the exceedance where possible
    let p0_part = |j: usize, v: f64, t: f64, rng: &mut SimRng| {
        let other = 1 - j;
        match m.cond_sample_above(j, x, &g, rng) {
            Some(v) => t * m.cond_cdf(other, x - v, &g),
            None if v > x => m.cond_cdf(other, x - v, &g),
            None => 0.0,
        }
    };
    let p0 = p0_part(0, y, t1, rng) + p0_part(1, z, t2, rng);
    let terms = [psum, p1, p2, p0, t1, t2, psum - (t1 + t2 - p2 + p1 - p0)];
    for (o, t) in o.iter_mut().zip(terms) {
        *o = w * t;
    }
}

fn quadrature_terms(m: &dyn CondIndepModel, g: &Latent, x: f64, o: &mut [f64]) {
    let (a, b) = (m.cond_law(0, g).expect("checked"), m.cond_law(1, g).expect("checked"));
    let psum = conv_tail2(&a, &b, x).map_or(f64::NAN, |r| r.value);
    let p1 = p1_independent(&a, &b, x).value;
    let (t1, t2) = (a.tail(x), b.tail(x));
    let p2 = t1 * t2;
    o.copy_from_slice(&[psum, p1, p2, 0.0, t1, t2, psum - (t1 + t2 - p2 + p1)]);
}

pub fn big_jump_decomposition_with(
    model: Arc<dyn CondIndepModel>,
    x_grid: &[f64],
    reps: u64,
    seed: u64,
    method: DecompositionMethod,
) -> Result<DecompositionReport> {
    let q = SumQuery::new(model.clone(), 2, x_grid.to_vec(), reps, seed);
    q.validate()?;
    let m = model.as_ref();
    if method == DecompositionMethod::ConditionalQuadrature
        && DecompositionMethod::preferred(m) != DecompositionMethod::ConditionalQuadrature
    {
        return Err(Error::Unsupported(format!(
            "{}: conditional quadrature needs non-negative summands with closed-form conditional laws",
            m.name()
        )));
    }
    let nx = x_grid.len();
    let stats = run_replications(reps, seed, nx * DECOMP_WIDTH, |_, rng, out| match method {
        DecompositionMethod::SampledSummands => {
            for (k, &x) in x_grid.iter().enumerate() {
                sampled_terms(m, x, rng, &mut out[k * DECOMP_WIDTH..(k + 1) * DECOMP_WIDTH]);
            }
        }
        DecompositionMethod::ConditionalQuadrature => {
            let g = m.sample_latent(rng);
            for (k, &x) in x_grid.iter().enumerate() {
                quadrature_terms(m, &g, x, &mut out[k * DECOMP_WIDTH..(k + 1) * DECOMP_WIDTH]);
            }
        }
    });
    let mut rows = vec![];
    let (mut t1, mut t2, mut t0) =
        (ConvergenceTable::default(), ConvergenceTable::default(), ConvergenceTable::default());
    for (k, &x) in x_grid.iter().enumerate() {
        let s = &stats[k * DECOMP_WIDTH..(k + 1) * DECOMP_WIDTH];
        let e: Vec<Estimate> = s.iter().map(Stats::estimate).collect();
        let reference_tail = m.marginal_tail(0, x);
        let ratio_row = |name: &str, est: &Estimate, st: &Stats| TableRow {
            x,
            n_or_tau: "2".into(),
            estimator: name.into(),
            estimate: est.estimate,
            se: est.se,
            lo: est.lo,
            hi: est.hi,
            target: reference_tail,
            ratio: est.estimate / reference_tail,
            // the zero rows of exact vanishing terms are reliable too
            reliable: st.ess() >= MIN_ESS || st.sum_sq == 0.0,
        };
        t1.push(ratio_row("p1", &e[1], &s[1]));
        t2.push(ratio_row("p2", &e[2], &s[2]));
        t0.push(ratio_row("p0", &e[3], &s[3]));
        rows.push(DecompositionRow {
            x,
            reference_tail,
            p_sum: e[0],
            p1: e[1],
            p2: e[2],
            p0: e[3],
            per_term: vec![e[4], e[5]],
            residual: e[6],
        });
    }
    let rule = LimitRule::default();
    let p1_verdict = judge(t1, 0.0, rule, true);
    let p2_verdict = judge(t2, 0.0, rule, true);
    let p0_verdict = judge(t0, 0.0, rule, true);
    let big_jump = p1_verdict.passed() && p0_verdict.passed();
    let single_big_jump = big_jump && p2_verdict.passed();
    Ok(DecompositionReport {
        model: m.name().into(),
        rows,
        p1_verdict,
        p2_verdict,
        p0_verdict,
        big_jump,
        single_big_jump,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct KestenRow {
    pub n: usize,
    /// `sup_x P(S_n > x) / F̄(x)` over the retained points
    pub sup_ratio: f64,
    pub x_at_sup: f64,
    pub excluded_x: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct KestenReport {
    pub eps: f64,
    pub x0: f64,
    pub rows: Vec<KestenRow>,
    /// `max_n sup_ratio / (1+ε)^n`
    pub v: f64,
    pub bound_ok: bool,
    /// least-squares slope of `ln sup_ratio` against `n`
    pub growth_slope: f64,
    pub v_large: bool,
    pub notes: Vec<String>,
}

/// Fits `V(ε)` in `P(S_n > x) <= V (1+ε)^n F̄(x)` over `x >= x0`.
pub fn kesten_probe(
    model: Arc<dyn CondIndepModel>,
    eps: f64,
    n_max: usize,
    x0: f64,
    x_grid: &[f64],
    reps: u64,
    seed: u64,
) -> Result<KestenReport> {
    if !(eps > 0.0) || n_max == 0 || n_max > 20 {
        return Err(Error::Precondition(format!("need eps > 0 and 1 <= n_max <= 20, got eps={eps}, n_max={n_max}")));
    }
    let xs: Vec<f64> = x_grid.iter().copied().filter(|&x| x >= x0).collect();
    let f = model.reference();
    let mut rows = vec![];
    for n in 1..=n_max {
        let q = SumQuery::new(model.clone(), n, xs.clone(), reps, seed.wrapping_add(n as u64));
        let table = mc_sum_tail(&q)?;
        let mut best = (f64::NEG_INFINITY, f64::NAN);
        let mut excluded = vec![];
        for r in &table.rows {
            let unstable = !r.reliable || !(r.lo > 0.0) || r.hi / r.lo > 10.0;
            if unstable {
                excluded.push(r.x);
                continue;
            }
            let ratio = r.estimate / f.tail(r.x);
            if ratio > best.0 {
                best = (ratio, r.x);
            }
        }
        rows.push(KestenRow { n, sup_ratio: best.0, x_at_sup: best.1, excluded_x: excluded });
    }
    let mut notes =
        vec!["V is fitted from the data; the probe cannot falsify the bound, only fail to support it".to_string()];
    let usable: Vec<&KestenRow> = rows.iter().filter(|r| r.sup_ratio.is_finite()).collect();
    if usable.len() < rows.len() {
        notes.push("some n had no reliable grid point and were left out of the fit".into());
    }
    let v = usable.iter().map(|r| r.sup_ratio / (1.0 + eps).powi(r.n as i32)).fold(f64::NEG_INFINITY, f64::max);
    let bound_ok =
        !usable.is_empty() && usable.iter().all(|r| r.sup_ratio <= v * (1.0 + eps).powi(r.n as i32) * (1.0 + 1e-12));
    let ns: Vec<f64> = usable.iter().map(|r| r.n as f64).collect();
    let ls: Vec<f64> = usable.iter().map(|r| r.sup_ratio.ln()).collect();
    let growth_slope = if usable.len() >= 2 { ls_slope(&ns, &ls) } else { f64::NAN };
    let v_large = v > 10.0;
    if v_large {
        notes.push(format!("fitted V = {v:.3} is large"));
    }
    Ok(KestenReport { eps, x0, rows, v, bound_ok, growth_slope, v_large, notes })
}
