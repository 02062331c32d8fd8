//! Threshold, exceedance counts and their closed-form expectation.
//!
//! For `n` i.i.d. points and neighbor order `k`, the threshold is
//!
//! ```text
//! v_{n,k}(t) = (t + log n + (k-1) log log n - log (k-1)!) / n
//! ```
//!
//! and `C_{n,k}` counts the points whose kth-nearest-neighbor ball has
//! probability content above it. Conditionally on its center, that
//! content is the kth order statistic of `n-1` uniforms, which gives
//! `E[C_{n,k}] = n P(Bin(n-1, v) <= k-1)` for any continuous law.

use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::measures::{DensityModel, PointSample};
use crate::nn::NeighborRadii;
use crate::quadrature::Tolerance;
use crate::special::ln_gamma;

/// `(n, k, t)` with `n >= 3`, `1 <= k <= n-1` and `v_{n,k}(t)` in (0, 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdParams {
    n: u64,
    k: u64,
    t: f64,
}

impl ThresholdParams {
    pub fn new(n: u64, k: u64, t: f64) -> Result<Self> {
        if n < 3 {
            return Err(invalid(format!(
                "n = {n}: need n >= 3 so that log log n > 0"
            )));
        }
        if k == 0 || k >= n {
            return Err(invalid(format!(
                "k = {k} must satisfy 1 <= k <= n - 1 = {}",
                n - 1
            )));
        }
        if !t.is_finite() {
            return Err(invalid("t must be finite"));
        }
        let p = Self { n, k, t };
        let v = p.threshold_value();
        if !(v > 0.0 && v < 1.0) {
            return Err(Error::ThresholdOutOfRange { n, k, t, value: v });
        }
        Ok(p)
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn k(&self) -> u64 {
        self.k
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    /// `log n + (k-1) log log n - log (k-1)!`
    fn centering(&self) -> f64 {
        let ln_n = (self.n as f64).ln();
        ln_n + (self.k - 1) as f64 * ln_n.ln() - ln_gamma(self.k as f64)
    }

    fn threshold_value(&self) -> f64 {
        (self.t + self.centering()) / self.n as f64
    }

    /// `v_{n,k}(t)`.
    pub fn threshold(&self) -> f64 {
        self.threshold_value()
    }
}

/// `v_{n,k}(t)`, or an error when it leaves (0, 1).
pub fn threshold(n: u64, k: u64, t: f64) -> Result<f64> {
    Ok(ThresholdParams::new(n, k, t)?.threshold())
}

/// `P(U_{k:m} > s) = Σ_{j<k} C(m,j) s^j (1-s)^{m-j}`, the chance that fewer
/// than `k` of `m` uniforms fall below `s`. Terms are formed in log space.
pub fn binomial_tail(m: u64, k: u64, s: f64) -> Result<f64> {
    if k == 0 || k > m {
        return Err(invalid(format!("need 1 <= k <= m, got k = {k}, m = {m}")));
    }
    if !(0.0..=1.0).contains(&s) {
        return Err(invalid(format!("probability {s} outside [0, 1]")));
    }
    if s == 0.0 {
        return Ok(1.0);
    }
    if s == 1.0 {
        return Ok(0.0);
    }
    let ln_s = s.ln();
    let ln_q = (-s).ln_1p();
    let mf = m as f64;
    let mut ln_binom = 0.0;
    let mut total = 0.0;
    for j in 0..k {
        let jf = j as f64;
        if j > 0 {
            ln_binom += ((mf - jf + 1.0) / jf).ln();
        }
        total += (ln_binom + jf * ln_s + (mf - jf) * ln_q).exp();
    }
    Ok(total.min(1.0))
}

/// Probability that a single point's kth-NN ball content exceeds `v_{n,k}`.
pub fn exceedance_probability(p: &ThresholdParams) -> f64 {
    binomial_tail(p.n - 1, p.k, p.threshold()).expect("validated parameters")
}

/// `E[C_{n,k}] = n Σ_{j<k} C(n-1,j) v^j (1-v)^{n-1-j}`.
pub fn expected_count(p: &ThresholdParams) -> f64 {
    p.n as f64 * exceedance_probability(p)
}

/// `n P_{n,k} - log n - (k-1) log log n + log (k-1)!`.
///
/// Evaluated as `n (P - v) + t`, so it is `<= t` exactly when `P <= v`.
pub fn centered_max(p: &ThresholdParams, max_content: f64) -> f64 {
    p.n as f64 * (max_content - p.threshold()) + p.t
}

/// Gumbel distribution function `exp(-exp(-t))`.
pub fn gumbel_cdf(t: f64) -> f64 {
    (-(-t).exp()).exp()
}

/// Outputs of one replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExceedanceRecord {
    pub replicate_id: u64,
    pub seed: u64,
    /// `C_{n,k}`
    pub count: u64,
    /// `Ĉ_{n,k}`: subcubes holding at least one exceedance.
    pub hat_count: u64,
    /// `P_{n,k}`
    pub max_content: f64,
    pub centered_max: f64,
    /// Every grid subcube holds a sample point.
    pub occupancy_ok: bool,
}

/// Points whose ball content exceeds the threshold, and the largest content.
#[derive(Debug, Clone, PartialEq)]
pub struct Exceedances {
    pub count: u64,
    pub max_content: f64,
    /// Indices of the exceeding points, ascending.
    pub exceeding: Vec<usize>,
}

/// Lazily evaluated `μ(B(X_i, R_{i,n,k}))` for one sample.
///
/// Cheap brackets are computed for every point up front; quadrature runs
/// only when a decision needs it, at a tolerance of `1e-12 v`.
pub struct BallContents<'a> {
    density: &'a DensityModel,
    sample: &'a PointSample,
    radii: &'a NeighborRadii,
    bounds: Vec<(f64, f64)>,
    exact: Vec<OnceLock<f64>>,
    tol: Tolerance,
}

impl<'a> BallContents<'a> {
    pub fn new(
        density: &'a DensityModel,
        sample: &'a PointSample,
        radii: &'a NeighborRadii,
        v: f64,
    ) -> Result<Self> {
        if radii.len() != sample.len() {
            return Err(invalid("radii and sample sizes differ"));
        }
        if density.dim() != sample.dim() {
            return Err(invalid("density and sample dimensions differ"));
        }
        let bounds = (0..sample.len())
            .into_par_iter()
            .map(|i| density.content_bounds(sample.point(i), radii.get(i)))
            .collect();
        let exact = (0..sample.len()).map(|_| OnceLock::new()).collect();
        Ok(Self {
            density,
            sample,
            radii,
            bounds,
            exact,
            tol: Tolerance::new(1e-12, 1e-12 * v),
        })
    }

    pub fn len(&self) -> usize {
        self.bounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bounds.is_empty()
    }

    pub fn sample(&self) -> &PointSample {
        self.sample
    }

    pub fn bounds(&self, i: usize) -> (f64, f64) {
        self.bounds[i]
    }

    pub fn content(&self, i: usize) -> f64 {
        *self.exact[i].get_or_init(|| {
            let (lo, hi) = self.bounds[i];
            if lo == hi {
                lo
            } else {
                self.density
                    .mu_ball_with(self.sample.point(i), self.radii.get(i), self.tol)
            }
        })
    }

    pub fn exceeds(&self, i: usize, v: f64) -> bool {
        let (lo, hi) = self.bounds[i];
        if lo > v {
            true
        } else if hi <= v {
            false
        } else {
            self.content(i) > v
        }
    }

    /// Largest content among `indices`, evaluating only points whose upper
    /// bound beats the best exact value so far.
    pub fn max_over<I: IntoIterator<Item = usize>>(&self, indices: I) -> f64 {
        let mut order: Vec<usize> = indices.into_iter().collect();
        order.sort_by(|&a, &b| {
            self.bounds[b]
                .1
                .total_cmp(&self.bounds[a].1)
                .then(a.cmp(&b))
        });
        let mut best = f64::NEG_INFINITY;
        for i in order {
            if self.bounds[i].1 <= best {
                break;
            }
            best = best.max(self.content(i));
        }
        best
    }

    pub fn exceedances(&self, v: f64) -> Exceedances {
        let exceeding: Vec<usize> = (0..self.len())
            .into_par_iter()
            .filter(|&i| self.exceeds(i, v))
            .collect();
        Exceedances {
            count: exceeding.len() as u64,
            max_content: self.max_over(0..self.len()),
            exceeding,
        }
    }
}

/// `C_{n,k}` and `P_{n,k}` for one sample.
pub fn exceedance_count(
    density: &DensityModel,
    sample: &PointSample,
    radii: &NeighborRadii,
    p: &ThresholdParams,
) -> Result<Exceedances> {
    if radii.k() as u64 != p.k || sample.len() as u64 != p.n {
        return Err(invalid("radii/sample do not match (n, k)"));
    }
    let v = p.threshold();
    Ok(BallContents::new(density, sample, radii, v)?.exceedances(v))
}
