//! Bounded densities on the unit cube, point sampling and ball contents.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{ball_aabb_volume, kappa};
use crate::quadrature::Tolerance;

/// Density on `[0,1]^d`, bounded between `f_minus > 0` and `f_plus`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityModel {
    dim: usize,
    kind: DensityKind,
    f_minus: f64,
    f_plus: f64,
    /// Cumulative cell probabilities, piecewise densities only.
    cumulative: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DensityKind {
    Uniform,
    /// Constant density `weights[c]` on each cell of the regular `m^d` grid.
    /// Cells are flattened with axis 0 varying fastest.
    PiecewiseConstant {
        cells_per_axis: usize,
        weights: Vec<f64>,
    },
}

/// JSON form of a density: `{"dim": 2, "kind": "piecewise", "m": 4, "weights": [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensitySpec {
    pub dim: usize,
    pub kind: SpecKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpecKind {
    Uniform,
    Piecewise,
}

impl DensitySpec {
    pub fn uniform(dim: usize) -> Self {
        Self {
            dim,
            kind: SpecKind::Uniform,
            m: None,
            weights: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_owned(),
            message: e.to_string(),
        })
    }

    /// Builds the model, rescaling the weights to integrate to one.
    pub fn build(&self) -> Result<DensityModel> {
        match self.kind {
            SpecKind::Uniform => DensityModel::uniform(self.dim),
            SpecKind::Piecewise => {
                let m = self
                    .m
                    .ok_or_else(|| Error::Density("piecewise density needs \"m\"".into()))?;
                let weights = self
                    .weights
                    .clone()
                    .ok_or_else(|| Error::Density("piecewise density needs \"weights\"".into()))?;
                if m == 0 || self.dim == 0 {
                    return Err(Error::Density("dim and m must be positive".into()));
                }
                let cell_volume = (m as f64).powi(-(self.dim as i32));
                let mass: f64 = weights.iter().sum::<f64>() * cell_volume;
                if !(mass > 0.0) || !mass.is_finite() {
                    return Err(Error::Density(
                        "weights must have positive finite total".into(),
                    ));
                }
                if (mass - 1.0).abs() > 1e-6 {
                    log::warn!("density weights integrate to {mass}; normalizing");
                }
                let weights = weights.into_iter().map(|w| w / mass).collect();
                DensityModel::piecewise(self.dim, m, weights)
            }
        }
    }
}

impl DensityModel {
    pub fn uniform(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dimension must be at least 1"));
        }
        Ok(Self {
            dim,
            kind: DensityKind::Uniform,
            f_minus: 1.0,
            f_plus: 1.0,
            cumulative: Vec::new(),
        })
    }

    /// Piecewise-constant density; `weights` are the density values per
    /// cell and must already integrate to one (to 1e-12).
    pub fn piecewise(dim: usize, cells_per_axis: usize, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 || cells_per_axis == 0 {
            return Err(invalid("dimension and cells per axis must be positive"));
        }
        let cells = cells_per_axis
            .checked_pow(dim as u32)
            .ok_or_else(|| invalid("too many cells"))?;
        if weights.len() != cells {
            return Err(Error::Density(format!(
                "expected {cells} weights, got {}",
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Density(
                "weights must be finite and nonnegative".into(),
            ));
        }
        let cell_volume = 1.0 / cells as f64;
        let mass: f64 = weights.iter().sum::<f64>() * cell_volume;
        if (mass - 1.0).abs() > 1e-12 {
            return Err(Error::Density(format!(
                "weights integrate to {mass}, not 1"
            )));
        }
        let f_minus = weights.iter().copied().fold(f64::INFINITY, f64::min);
        let f_plus = weights.iter().copied().fold(0.0, f64::max);
        if !(f_minus > 0.0) {
            return Err(Error::Density(
                "density must be bounded away from zero".into(),
            ));
        }
        let mut cumulative = Vec::with_capacity(cells);
        let mut acc = 0.0;
        for w in &weights {
            acc += w * cell_volume;
            cumulative.push(acc);
        }
        Ok(Self {
            dim,
            kind: DensityKind::PiecewiseConstant {
                cells_per_axis,
                weights,
            },
            f_minus,
            f_plus,
            cumulative,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &DensityKind {
        &self.kind
    }

    pub fn f_minus(&self) -> f64 {
        self.f_minus
    }

    pub fn f_plus(&self) -> f64 {
        self.f_plus
    }

    pub fn is_uniform(&self) -> bool {
        matches!(self.kind, DensityKind::Uniform)
    }

    /// Density value at `x` (cells are half-open, the upper face belongs to the last cell).
    pub fn density_at(&self, x: &[f64]) -> f64 {
        match &self.kind {
            DensityKind::Uniform => 1.0,
            DensityKind::PiecewiseConstant {
                cells_per_axis,
                weights,
            } => weights[cell_of(x, *cells_per_axis)],
        }
    }

    /// `μ(B(center, r))`.
    pub fn mu_ball(&self, center: &[f64], r: f64) -> f64 {
        self.mu_ball_with(center, r, Tolerance::DEFAULT)
    }

    pub fn mu_ball_with(&self, center: &[f64], r: f64, tol: Tolerance) -> f64 {
        debug_assert_eq!(center.len(), self.dim);
        if !(r > 0.0) {
            return 0.0;
        }
        let mu = match &self.kind {
            DensityKind::Uniform => {
                let lo = vec![0.0; self.dim];
                let hi = vec![1.0; self.dim];
                ball_aabb_volume(center, r, &lo, &hi, tol)
            }
            DensityKind::PiecewiseConstant {
                cells_per_axis,
                weights,
            } => piecewise_mu(center, r, *cells_per_axis, weights, tol),
        };
        mu.clamp(0.0, 1.0)
    }

    /// Cheap bracket `[lower, upper]` around `μ(B(center, r))` for a center in the cube.
    ///
    /// The lower bound uses the largest ball around `center` that stays
    /// inside the cube; both are exact when the ball is interior to the
    /// cube and (for piecewise densities) to a single cell.
    pub fn content_bounds(&self, center: &[f64], r: f64) -> (f64, f64) {
        let d = self.dim as i32;
        let k = kappa(self.dim);
        let wall = center
            .iter()
            .map(|&c| c.min(1.0 - c))
            .fold(f64::INFINITY, f64::min)
            .max(0.0);
        let full = k * r.powi(d);
        let inner = k * r.min(wall).powi(d);
        match &self.kind {
            DensityKind::Uniform => (inner, full.min(1.0)),
            DensityKind::PiecewiseConstant {
                cells_per_axis,
                weights,
            } => {
                let m = *cells_per_axis as f64;
                let cell = cell_of(center, *cells_per_axis);
                let in_cell = center
                    .iter()
                    .map(|&c| {
                        let j = (c * m).floor().min(m - 1.0);
                        (c - j / m).min((j + 1.0) / m - c)
                    })
                    .fold(f64::INFINITY, f64::min);
                if r <= in_cell {
                    let v = weights[cell] * full;
                    return (v, v);
                }
                (self.f_minus * inner, (self.f_plus * full).min(1.0))
            }
        }
    }

    /// `inf { r : μ(B(center, r)) > p }` for `0 < p < 1`, found by bisection
    /// until `|μ(B(center, r)) - p| <= 1e-10`.
    pub fn inverse_radius(&self, center: &[f64], p: f64) -> Result<f64> {
        if !(p > 0.0) {
            return Err(invalid(format!("probability must be positive, got {p}")));
        }
        if !(p < 1.0) {
            return Err(invalid(format!("probability must be below 1, got {p}")));
        }
        let tol = Tolerance::new(1e-13, 1e-15);
        let mut lo = 0.0;
        let mut hi = (self.dim as f64).sqrt();
        let mut mid = 0.5 * hi;
        for _ in 0..200 {
            mid = 0.5 * (lo + hi);
            let mu = self.mu_ball_with(center, mid, tol);
            if (mu - p).abs() <= 1e-10 * 0.5 || hi - lo <= f64::EPSILON * hi {
                break;
            }
            if mu > p {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(mid)
    }

    fn draw(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        match &self.kind {
            DensityKind::Uniform => {
                for x in out.iter_mut() {
                    *x = rng.random::<f64>();
                }
            }
            DensityKind::PiecewiseConstant { cells_per_axis, .. } => {
                let u: f64 = rng.random::<f64>() * self.cumulative[self.cumulative.len() - 1];
                let mut cell = self
                    .cumulative
                    .partition_point(|&c| c <= u)
                    .min(self.cumulative.len() - 1);
                let m = *cells_per_axis;
                for x in out.iter_mut() {
                    let j = cell % m;
                    cell /= m;
                    *x = ((j as f64 + rng.random::<f64>()) / m as f64).min(1.0);
                }
            }
        }
    }
}

fn cell_of(x: &[f64], m: usize) -> usize {
    let mut idx = 0;
    let mut stride = 1;
    for &c in x {
        let j = ((c * m as f64).floor() as isize).clamp(0, m as isize - 1) as usize;
        idx += j * stride;
        stride *= m;
    }
    idx
}

fn piecewise_mu(center: &[f64], r: f64, m: usize, weights: &[f64], tol: Tolerance) -> f64 {
    let d = center.len();
    let mf = m as f64;
    let ranges: Vec<(usize, usize)> = center
        .iter()
        .map(|&c| {
            let a = (((c - r) * mf).floor().max(0.0) as usize).min(m - 1);
            let b = (((c + r) * mf).floor().max(0.0) as usize).min(m - 1);
            (a, b)
        })
        .collect();
    let mut idx: Vec<usize> = ranges.iter().map(|r| r.0).collect();
    let mut lo = vec![0.0; d];
    let mut hi = vec![0.0; d];
    // Per-cell tolerance scaled to the cell's share of the ball.
    let cell_tol = Tolerance::new(
        tol.rel,
        tol.abs / ranges.iter().map(|r| r.1 - r.0 + 1).product::<usize>() as f64,
    );
    let mut total = 0.0;
    loop {
        let mut flat = 0;
        let mut stride = 1;
        for a in 0..d {
            lo[a] = idx[a] as f64 / mf;
            hi[a] = (idx[a] + 1) as f64 / mf;
            flat += idx[a] * stride;
            stride *= m;
        }
        let w = weights[flat];
        if w > 0.0 {
            total += w * ball_aabb_volume(center, r, &lo, &hi, cell_tol);
        }
        // odometer over the cell ranges
        let mut a = 0;
        loop {
            if a == d {
                return total;
            }
            if idx[a] < ranges[a].1 {
                idx[a] += 1;
                break;
            }
            idx[a] = ranges[a].0;
            a += 1;
        }
    }
}

/// Points in `[0,1]^d`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSample {
    dim: usize,
    points: Vec<f64>,
    seed: u64,
    redraws: usize,
}

impl PointSample {
    /// Wraps explicit coordinates (row-major, `n * dim` values).
    ///
    /// Used to inject fixed configurations; rejects coordinates outside
    /// the cube and repeated points.
    pub fn from_points(dim: usize, points: Vec<f64>, seed: u64) -> Result<Self> {
        if dim == 0 || points.is_empty() || !points.len().is_multiple_of(dim) {
            return Err(invalid(
                "points must be a nonempty multiple of the dimension",
            ));
        }
        if points.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(invalid("coordinates must lie in [0, 1]"));
        }
        let sample = Self {
            dim,
            points,
            seed,
            redraws: 0,
        };
        if !sample.duplicates().is_empty() {
            return Err(invalid("points must be pairwise distinct"));
        }
        Ok(sample)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of duplicate draws that were rejected and redrawn.
    pub fn redraws(&self) -> usize {
        self.redraws
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn coords(&self) -> &[f64] {
        &self.points
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, f64> {
        self.points.chunks_exact(self.dim)
    }

    /// Indices of points equal to an earlier point (by bit pattern).
    fn duplicates(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| {
            self.point(a)
                .iter()
                .zip(self.point(b))
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or_else(|| a.cmp(&b))
        });
        order
            .windows(2)
            .filter(|w| self.point(w[0]) == self.point(w[1]))
            .map(|w| w[1])
            .collect()
    }
}

/// Draws `n` i.i.d. points; identical `(density, n, seed)` give identical samples.
pub fn sample_points(density: &DensityModel, n: usize, seed: u64) -> Result<PointSample> {
    if n == 0 {
        return Err(invalid("sample size must be at least 1"));
    }
    let d = density.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = vec![0.0; n * d];
    for chunk in points.chunks_exact_mut(d) {
        density.draw(&mut rng, chunk);
    }
    let mut sample = PointSample {
        dim: d,
        points,
        seed,
        redraws: 0,
    };
    loop {
        let dups = sample.duplicates();
        if dups.is_empty() {
            return Ok(sample);
        }
        for i in dups {
            density.draw(&mut rng, &mut sample.points[i * d..(i + 1) * d]);
            sample.redraws += 1;
        }
    }
}

/// Seed of replicate `id` under `master`: a SplitMix64 hash of the pair, so
/// each replicate has its own stream regardless of which thread runs it.
pub fn replicate_seed(master: u64, id: u64) -> u64 {
    let mut z = master ^ id.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{ball_box_volume, BoxVolumeQuery};

    fn two_cell() -> DensityModel {
        DensityModel::piecewise(1, 2, vec![0.5, 1.5]).unwrap()
    }

    #[test]
    fn uniform_samples_stay_in_cube_and_repeat() {
        let u = DensityModel::uniform(3).unwrap();
        let a = sample_points(&u, 500, 7).unwrap();
        assert!(a.coords().iter().all(|x| (0.0..=1.0).contains(x)));
        assert_eq!(a, sample_points(&u, 500, 7).unwrap());
        assert_ne!(a, sample_points(&u, 500, 8).unwrap());
        assert_eq!(a.len(), 500);
    }

    #[test]
    fn piecewise_cell_frequencies() {
        let p = DensitySpec {
            dim: 1,
            kind: SpecKind::Piecewise,
            m: Some(2),
            weights: Some(vec![1.0, 3.0]),
        }
        .build()
        .unwrap();
        let n = 100_000;
        let s = sample_points(&p, n, 11).unwrap();
        let frac = s.coords().iter().filter(|&&x| x >= 0.5).count() as f64 / n as f64;
        let se = (0.1875f64 / n as f64).sqrt();
        assert!((frac - 0.75).abs() <= 4.0 * se, "frac={frac}");
        assert_eq!(p.f_minus(), 0.5);
        assert_eq!(p.f_plus(), 1.5);
    }

    #[test]
    fn mu_ball_examples() {
        let u = DensityModel::uniform(2).unwrap();
        let r: f64 = 0.1;
        assert_eq!(u.mu_ball(&[0.5, 0.5], r), std::f64::consts::PI * r * r);
        assert_eq!(u.mu_ball(&[0.5, 0.5], 0.0), 0.0);
        let p = two_cell();
        assert!((p.mu_ball(&[0.5], 0.2) - 0.4).abs() < 1e-15);
    }

    #[test]
    fn covering_radius_has_full_mass() {
        let p =
            DensityModel::piecewise(2, 3, (0..9).map(|i| 0.6 + 0.1 * i as f64).collect()).unwrap();
        for x in [[0.0, 0.0], [0.3, 0.77], [1.0, 0.5]] {
            assert!((p.mu_ball(&x, 2f64.sqrt()) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn mu_is_bracketed_by_density_bounds() {
        let p = DensityModel::piecewise(2, 2, vec![0.5, 1.5, 1.2, 0.8]).unwrap();
        for (x, r) in [([0.1, 0.2], 0.3), ([0.5, 0.5], 0.2), ([0.9, 0.05], 0.12)] {
            let lam = ball_box_volume(&BoxVolumeQuery::new(x.to_vec(), r).unwrap());
            let mu = p.mu_ball(&x, r);
            assert!(p.f_minus() * lam <= mu + 1e-12 && mu <= p.f_plus() * lam + 1e-12);
            let (lo, hi) = p.content_bounds(&x, r);
            assert!(lo <= mu + 1e-12 && mu <= hi + 1e-12);
        }
    }

    #[test]
    fn inverse_radius_examples() {
        let u1 = DensityModel::uniform(1).unwrap();
        assert!((u1.inverse_radius(&[0.5], 0.2).unwrap() - 0.1).abs() < 1e-9);
        let u2 = DensityModel::uniform(2).unwrap();
        let p = std::f64::consts::PI * 0.01 / 4.0;
        assert!((u2.inverse_radius(&[0.0, 0.0], p).unwrap() - 0.1).abs() < 1e-8);
        assert!(u2.inverse_radius(&[0.5, 0.5], 1.0).is_err());
        assert!(u2.inverse_radius(&[0.5, 0.5], 0.0).is_err());
    }

    #[test]
    fn spec_normalizes_and_rejects_bad_input() {
        let s = DensitySpec::from_json(r#"{"dim":1,"kind":"piecewise","m":2,"weights":[2,6]}"#)
            .unwrap();
        let d = s.build().unwrap();
        assert_eq!(d.f_minus(), 0.5);
        let bad = DensitySpec::from_json(r#"{"dim":1,"kind":"piecewise","m":2,"weights":[0,1]}"#)
            .unwrap();
        assert!(bad.build().is_err());
        let short = DensitySpec::from_json(r#"{"dim":2,"kind":"piecewise","m":2,"weights":[1,1]}"#)
            .unwrap();
        assert!(short.build().is_err());
        assert!(DensitySpec::from_json(r#"{"dim":2,"kind":"uniform"}"#)
            .unwrap()
            .build()
            .unwrap()
            .is_uniform());
    }

    #[test]
    fn injected_points_are_validated() {
        assert!(PointSample::from_points(1, vec![0.1, 0.5, 0.95], 0).is_ok());
        assert!(PointSample::from_points(1, vec![0.1, 0.1], 0).is_err());
        assert!(PointSample::from_points(1, vec![1.1], 0).is_err());
        assert!(PointSample::from_points(2, vec![0.1, 0.2, 0.3], 0).is_err());
    }

    #[test]
    fn replicate_seeds_differ() {
        let seeds: std::collections::BTreeSet<u64> =
            (0..1000).map(|i| replicate_seed(42, i)).collect();
        assert_eq!(seeds.len(), 1000);
        assert_ne!(replicate_seed(1, 0), replicate_seed(2, 0));
    }
}
