use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use serde_json::json;

use super::{check_n, grid_levels, CondIndepModel, Latent};
use crate::conditions::BoundingSpec;
use crate::dist::{Law, TailDistribution};
use crate::error::{Error, Result};
use crate::integrate::{integrate_to_infinity, Tolerance};
use crate::rng::{open_uniform, SimRng};

/// `X_i = Z_i - Y_i Z_{i-1}` with `Z ~ Pareto(α)`, `Y ~ Pareto(β)`,
/// `α > β > 1`. The latent vector holds `W_i = Y_i Z_{i-1}` for
/// `i = 1..n+1` (stored 0-based), so that given it `X_i = Z_i - W_i` with
/// `Z_i` depending only on `W_{i+1}`.
#[derive(Debug, Clone)]
pub struct MovingAverage {
    pub alpha: f64,
    pub beta: f64,
    pub n: usize,
}

impl MovingAverage {
    pub fn new(alpha: f64, beta: f64, n: usize) -> Result<Self> {
        if !(alpha > beta && beta > 1.0) {
            return Err(Error::Unsupported(format!("need alpha > beta > 1, got alpha={alpha}, beta={beta}")));
        }
        check_n(n, 64)?;
        Ok(MovingAverage { alpha, beta, n })
    }

    fn d(&self) -> f64 {
        self.alpha - self.beta
    }

    /// `P(Z > t | YZ = w)`: given `YZ = w` the law of `Z` is Pareto(α-β)
    /// truncated to `[1, w]`.
    pub fn z_tail_given_w(&self, t: f64, w: f64) -> f64 {
        if t <= 1.0 {
            return 1.0;
        }
        if t >= w {
            return 0.0;
        }
        let d = self.d();
        let wd = w.powf(-d);
        ((t.powf(-d) - wd) / (1.0 - wd)).clamp(0.0, 1.0)
    }

    /// `P(YZ > t)`.
    pub fn w_tail(&self, t: f64) -> f64 {
        if t <= 1.0 {
            return 1.0;
        }
        let (a, b) = (self.alpha, self.beta);
        (a * t.powf(-b) - b * t.powf(-a)) / (a - b)
    }

    pub fn w_density(&self, t: f64) -> f64 {
        if t < 1.0 {
            return 0.0;
        }
        let (a, b) = (self.alpha, self.beta);
        a * b / (a - b) * (t.powf(-b - 1.0) - t.powf(-a - 1.0))
    }

    fn sample_w(&self, rng: &mut SimRng) -> f64 {
        open_uniform(rng).powf(-1.0 / self.beta) * open_uniform(rng).powf(-1.0 / self.alpha)
    }

    fn w_quantile(&self, u: f64) -> f64 {
        let (mut lo, mut hi) = (1.0f64, 2.0f64);
        while self.w_tail(hi) > u {
            lo = hi;
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.w_tail(mid) > u {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

impl CondIndepModel for MovingAverage {
    fn name(&self) -> &'static str {
        "moving_average"
    }

    fn n_max(&self) -> usize {
        self.n
    }

    fn sample_latent(&self, rng: &mut SimRng) -> Latent {
        (0..=self.n).map(|_| self.sample_w(rng)).collect()
    }

    /// Mixture proposal aimed at `{X_i > x}`, which needs `W_{i+1} > x`:
    /// the nominal law with probability 0.4, one of `W_2, ..., W_{n+1}`
    /// (uniformly) redrawn from Pareto(β) above `x` with probability 0.4,
    /// and all of them redrawn with probability 0.2 (joint exceedances).
    fn sample_latent_biased(&self, x: f64, rng: &mut SimRng) -> (Latent, f64) {
        const NOMINAL: f64 = 0.4;
        const JOINT: f64 = 0.2;
        let mut g = self.sample_latent(rng);
        let x = x.max(1.0);
        let redraw = |rng: &mut SimRng| x * open_uniform(rng).powf(-1.0 / self.beta);
        let u = open_uniform(rng);
        if u > NOMINAL + JOINT {
            let k = 1 + rng.random_range(0..self.n);
            g[k] = redraw(rng);
        } else if u > NOMINAL {
            for w in &mut g[1..] {
                *w = redraw(rng);
            }
        }
        let lr = |w: f64| {
            if w >= x {
                self.beta * x.powf(self.beta) * w.powf(-self.beta - 1.0) / self.w_density(w)
            } else {
                0.0
            }
        };
        let single = (1.0 - NOMINAL - JOINT) / self.n as f64;
        let sum: f64 = g[1..].iter().map(|&w| lr(w)).sum();
        let prod: f64 = g[1..].iter().map(|&w| lr(w)).product();
        (g, 1.0 / (NOMINAL + single * sum + JOINT * prod))
    }

    fn cond_tail(&self, i: usize, x: f64, g: &Latent) -> f64 {
        self.z_tail_given_w(x + g[i], g[i + 1])
    }

    fn cond_sample(&self, i: usize, g: &Latent, rng: &mut SimRng) -> f64 {
        let d = self.d();
        let wd = g[i + 1].powf(-d);
        let z = (1.0 - (1.0 - open_uniform(rng)) * (1.0 - wd)).powf(-1.0 / d);
        z - g[i]
    }

    fn cond_sample_above(&self, i: usize, x: f64, g: &Latent, rng: &mut SimRng) -> Option<f64> {
        let (t0, w) = ((x + g[i]).max(1.0), g[i + 1]);
        if t0 >= w {
            return None;
        }
        let d = self.d();
        let wd = w.powf(-d);
        let z = (wd + open_uniform(rng) * (t0.powf(-d) - wd)).powf(-1.0 / d);
        Some(z.clamp(t0, w) - g[i])
    }

    fn reference(&self) -> Arc<dyn TailDistribution> {
        Arc::new(Law::pareto(self.alpha))
    }

    fn c(&self) -> Vec<f64> {
        vec![1.0; self.n]
    }

    /// `B = Ω`, `r(x) = x^β`.
    fn bounding(&self) -> BoundingSpec {
        let b = self.beta;
        BoundingSpec::omega("omega", move |x: f64| b * x.ln()).with_valid_from(1.0)
    }

    fn in_bounding_set(&self, _i: usize, _x: f64, _g: &Latent) -> bool {
        true
    }

    fn real_valued(&self) -> bool {
        true
    }

    /// `P(Z - W > x) = E min(1, (x + W)^-α)`.
    fn marginal_tail(&self, _i: usize, x: f64) -> f64 {
        let z = |t: f64| if t <= 1.0 { 1.0 } else { t.powf(-self.alpha) };
        if x + 1.0 <= 1.0 {
            // split at the kink w = 1 - x
            let k = 1.0 - x;
            let below = 1.0 - self.w_tail(k);
            let above = integrate_to_infinity(|w| z(x + w) * self.w_density(w), k, Tolerance::rel(1e-12));
            return below + above.value;
        }
        integrate_to_infinity(|w| z(x + w) * self.w_density(w), 1.0, Tolerance::rel(1e-12)).value
    }

    /// `W_1 = 1` and every other coordinate at a common quantile, so that
    /// `X_1` sees the conditional law at each quantile `w` of `YZ`.
    fn latent_grid(&self) -> Vec<Latent> {
        grid_levels()
            .map(|u| {
                let w = self.w_quantile(1.0 - u);
                let mut g = vec![w; self.n + 1];
                g[0] = 1.0;
                g
            })
            .collect()
    }

    fn params(&self) -> BTreeMap<String, serde_json::Value> {
        BTreeMap::from([
            ("alpha".into(), json!(self.alpha)),
            ("beta".into(), json!(self.beta)),
            ("n".into(), json!(self.n)),
        ])
    }
}
