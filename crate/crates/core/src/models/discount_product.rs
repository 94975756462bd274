use std::collections::BTreeMap;
use std::sync::Arc;

use serde_json::json;

use super::{check_n, grid_levels, CondIndepModel, Latent};
use crate::conditions::BoundingSpec;
use crate::dist::{Law, TailDistribution};
use crate::error::{Error, Result};
use crate::integrate::integrate_pieces_auto;
use crate::rng::{open_uniform, SimRng};
use crate::verdict::{judge_values, ConvergenceTable, LimitRule};

/// Tails of the partial products `η_1 ⋯ η_k`, `k = 1..n`.
///
/// `T_k(t) = P(ln(η_1 ⋯ η_k) > t)` is tabulated on a grid in `t` by the
/// recursion `T_k(t) = ∫ f_L(l) T_{k-1}(t - l) dl`, `L = ln η`, each point
/// by adaptive quadrature; between points `ln T_k` is interpolated linearly.
#[derive(Debug, Clone)]
pub struct ProductTails {
    lo: f64,
    step: f64,
    /// `log_tails[k-2][m] = ln T_k(lo + m step)` for `k >= 2`
    log_tails: Vec<Vec<f64>>,
    eta: Law,
    l_range: (f64, f64),
}

const STEP: f64 = 0.05;

impl ProductTails {
    pub fn new(eta: &Law, n: usize) -> Result<Self> {
        let q_hi = eta.quantile_from_tail(1e-300)?;
        let q_lo = eta.quantile_from_tail(1.0 - 1e-15)?;
        if !(q_lo > 0.0) || !eta.has_density() {
            return Err(Error::Config("eta must be positive with a density".into()));
        }
        let l_range = (q_lo.ln(), q_hi.ln());
        let lo = n as f64 * l_range.0;
        let hi = n as f64 * l_range.1;
        let points = ((hi - lo) / STEP).ceil() as usize;
        let mut me = ProductTails { lo, step: (hi - lo) / points as f64, log_tails: vec![], eta: eta.clone(), l_range };
        for k in 2..=n {
            let row: Vec<f64> = (0..=points)
                .map(|m| {
                    let t = me.lo + m as f64 * me.step;
                    let v = me.convolve(k, t);
                    if v > 0.0 {
                        v.ln().min(0.0)
                    } else {
                        f64::NEG_INFINITY
                    }
                })
                .collect();
            me.log_tails.push(row);
        }
        Ok(me)
    }

    fn log_density_l(&self, l: f64) -> f64 {
        self.eta.log_density(l.exp()).map_or(f64::NEG_INFINITY, |ld| ld + l)
    }

    /// `∫ f_L(l) T_{k-1}(t - l) dl`.
    fn convolve(&self, k: usize, t: f64) -> f64 {
        let (a, b) = self.l_range;
        let pts = crate::verdict::grid(a, b, 41, false);
        integrate_pieces_auto(|l| (self.log_density_l(l) + self.log_tail_l(k - 1, t - l)).exp(), &pts, 1e-9).value
    }

    /// `ln T_k(t)`.
    fn log_tail_l(&self, k: usize, t: f64) -> f64 {
        if k == 1 {
            return self.eta.log_tail(t.exp());
        }
        let row = &self.log_tails[k - 2];
        let pos = (t - self.lo) / self.step;
        if pos <= 0.0 {
            return row[0];
        }
        let m = pos.floor() as usize;
        if m + 1 >= row.len() {
            // union bound beyond the grid
            return ((k as f64).ln() + self.eta.log_tail((t / k as f64).exp())).min(0.0);
        }
        let w = pos - m as f64;
        let (a, b) = (row[m], row[m + 1]);
        if b == f64::NEG_INFINITY {
            return if w == 0.0 { a } else { f64::NEG_INFINITY };
        }
        (1.0 - w) * a + w * b
    }

    /// `ln P(η_1 ⋯ η_k > y)`.
    pub fn log_tail(&self, k: usize, y: f64) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        self.log_tail_l(k, y.ln())
    }

    /// `E min(1, (η_1 ⋯ η_k / x)^α) = ∫_{-∞}^{ln x} α e^{α(u - ln x)} T_k(u) du`.
    pub fn expect_min_power(&self, k: usize, x: f64, alpha: f64) -> f64 {
        let lx = x.ln();
        let bottom = (k as f64 * self.l_range.0).min(lx - 800.0 / alpha);
        let pts = crate::verdict::grid(bottom, lx, 81, false);
        integrate_pieces_auto(|u| alpha * (alpha * (u - lx) + self.log_tail_l(k, u)).exp(), &pts, 1e-9).value
    }

    /// `E η^α`.
    pub fn eta_moment(&self, alpha: f64) -> f64 {
        let (a, b) = self.l_range;
        let pts = crate::verdict::grid(a.min(-800.0 / alpha), b, 81, false);
        integrate_pieces_auto(|u| alpha * (alpha * u + self.log_tail_l(1, u)).exp(), &pts, 1e-10).value
    }
}

/// `X_i = ξ_i η_1 ⋯ η_i` with `ξ_i ~ Pareto(α)` and i.i.d. discount factors;
/// the latent variable is `(η_1, ..., η_n)`.
#[derive(Debug, Clone)]
pub struct DiscountProduct {
    pub xi_alpha: f64,
    pub eta: Law,
    pub n: usize,
    pub eps: f64,
    products: Arc<ProductTails>,
    eta_moment: f64,
}

impl DiscountProduct {
    pub fn new(xi_alpha: f64, eta: Law, n: usize) -> Result<Self> {
        if !(xi_alpha > 0.0) {
            return Err(Error::Config(format!("xi_alpha must be positive, got {xi_alpha}")));
        }
        eta.validate()?;
        check_n(n, 8)?;
        let products = Arc::new(ProductTails::new(&eta, n)?);
        let eta_moment = products.eta_moment(xi_alpha);
        let mut m = DiscountProduct { xi_alpha, eta, n, eps: f64::NAN, products, eta_moment };
        let (eps, table) = m.choose_eps();
        match eps {
            Some(e) => m.eps = e,
            None => {
                return Err(Error::Config(format!(
                    "no eps in 0.1..0.9 makes P(prod eta > x^(1-eps)) = o(x^-alpha)\n{}",
                    table.to_csv()
                )))
            }
        }
        Ok(m)
    }

    /// `ln max_k P(η_1 ⋯ η_k > y)`.
    pub fn log_product_tail(&self, y: f64) -> f64 {
        (1..=self.n).map(|k| self.products.log_tail(k, y)).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Smallest `ε` on the 0.1 lattice with `P(Π > x^{1-ε}) / F̄_ξ(x) → 0`.
    fn choose_eps(&self) -> (Option<f64>, ConvergenceTable) {
        let xs = crate::boundary::asymptotic_grid();
        let mut all = ConvergenceTable::default();
        for k in 1..=9 {
            let eps = k as f64 / 10.0;
            let vals: Vec<f64> =
                xs.iter().map(|&x| (self.log_product_tail(x.powf(1.0 - eps)) + self.xi_alpha * x.ln()).exp()).collect();
            let v = judge_values(&format!("eps={eps}"), &xs, &vals, 0.0, LimitRule::default());
            let pass = v.passed();
            all.extend(v.table);
            if pass {
                return (Some(eps), all);
            }
        }
        (None, all)
    }

    fn prod(&self, i: usize, g: &Latent) -> f64 {
        g[..=i].iter().product()
    }

    fn xi_tail(&self, y: f64) -> f64 {
        if y <= 1.0 {
            1.0
        } else {
            y.powf(-self.xi_alpha)
        }
    }

    pub fn eta_moment(&self) -> f64 {
        self.eta_moment
    }
}

impl CondIndepModel for DiscountProduct {
    fn name(&self) -> &'static str {
        "discount_product"
    }

    fn n_max(&self) -> usize {
        self.n
    }

    fn sample_latent(&self, rng: &mut SimRng) -> Latent {
        (0..self.n).map(|_| self.eta.sample(rng)).collect()
    }

    fn cond_tail(&self, i: usize, x: f64, g: &Latent) -> f64 {
        self.xi_tail(x / self.prod(i, g))
    }

    fn cond_sample(&self, i: usize, g: &Latent, rng: &mut SimRng) -> f64 {
        open_uniform(rng).powf(-1.0 / self.xi_alpha) * self.prod(i, g)
    }

    fn cond_law(&self, i: usize, g: &Latent) -> Option<Law> {
        Some(Law::Pareto { alpha: self.xi_alpha, xmin: self.prod(i, g) })
    }

    fn reference(&self) -> Arc<dyn TailDistribution> {
        Arc::new(Law::pareto(self.xi_alpha))
    }

    /// `c_i = (E η^α)^i` by Breiman's lemma.
    fn c(&self) -> Vec<f64> {
        (1..=self.n).map(|i| self.eta_moment.powi(i as i32)).collect()
    }

    /// `B_i(x) = {η_1 ⋯ η_i <= x^{1-ε}}`, `r(x) = F̄_ξ(x^ε)/F̄_ξ(x)`.
    fn bounding(&self) -> BoundingSpec {
        let (a, eps) = (self.xi_alpha, self.eps);
        let me = self.clone();
        BoundingSpec::new(
            format!("prod eta <= x^{:.1}", 1.0 - eps),
            move |x: f64| a * (1.0 - eps) * x.ln(),
            move |x: f64| me.log_product_tail(x.powf(1.0 - eps)),
        )
        .with_valid_from(1.0)
    }

    fn in_bounding_set(&self, i: usize, x: f64, g: &Latent) -> bool {
        self.prod(i, g) <= x.powf(1.0 - self.eps)
    }

    fn marginal_tail(&self, i: usize, x: f64) -> f64 {
        if x <= 0.0 {
            1.0
        } else {
            self.products.expect_min_power(i + 1, x, self.xi_alpha)
        }
    }

    fn latent_grid(&self) -> Vec<Latent> {
        grid_levels().map(|u| vec![self.eta.quantile_from_tail(1.0 - u).expect("u in (0,1)"); self.n]).collect()
    }

    fn params(&self) -> BTreeMap<String, serde_json::Value> {
        BTreeMap::from([
            ("xi_alpha".into(), json!(self.xi_alpha)),
            ("eta".into(), serde_json::to_value(&self.eta).expect("law serialises")),
            ("n".into(), json!(self.n)),
        ])
    }
}
