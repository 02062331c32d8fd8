//! Grid discretization, block maxima and Chen–Stein diagnostics.
//!
//! The cube is cut into `N^d` congruent subcubes indexed by `[1, N]^d`.
//! Block maxima `M_j` are the largest ball contents among points in
//! subcube `j`; `Ĉ` counts subcubes with `M_j > v`. The terms `b1`, `b2`
//! are estimated from how often subcubes (and pairs of nearby subcubes)
//! host an exceedance across replicates.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::limits::{BallContents, ThresholdParams};
use crate::measures::{DensityModel, PointSample};
use crate::nn::NeighborRadii;

/// Minimum replicate count for frequency estimates of `p_j`.
pub const MIN_REPLICATES: usize = 100;

const BOOTSTRAP_RESAMPLES: usize = 200;

/// 1-based subcube index, one entry per axis.
pub type Subcube = Vec<u32>;

/// How `N = cells_per_axis` follows from `n` and `ε`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GridRule {
    /// `N = ⌊n / (log n)^{1+ε}⌋` cells along every axis.
    PerAxis,
    /// `N^d ≈ n / (log n)^{1+ε}` cells in total: `N = ⌊(n / (log n)^{1+ε})^{1/d}⌋`.
    #[default]
    Total,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    dim: usize,
    n: u64,
    epsilon: f64,
    rule: GridRule,
    cells_per_axis: u32,
}

impl GridSpec {
    pub fn new(n: u64, epsilon: f64, dim: usize, rule: GridRule) -> Result<Self> {
        if n < 3 {
            return Err(invalid(format!("n = {n}: need n >= 3")));
        }
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(invalid(format!("epsilon must be positive, got {epsilon}")));
        }
        if dim == 0 {
            return Err(invalid("dimension must be at least 1"));
        }
        let ln_n = (n as f64).ln();
        let budget = n as f64 / ln_n.powf(1.0 + epsilon);
        let raw = match rule {
            GridRule::PerAxis => budget.floor(),
            GridRule::Total => {
                let root = budget.powf(1.0 / dim as f64);
                // guard against roots like 2.9999999 for exact powers
                let near = root.round();
                if near >= 1.0 && (near.powi(dim as i32) - budget).abs() <= 1e-9 * budget {
                    near
                } else {
                    root.floor()
                }
            }
        };
        if raw < 1.0 {
            return Err(Error::GridDegenerate { n, epsilon });
        }
        if raw > u32::MAX as f64 {
            return Err(invalid("grid too fine to index"));
        }
        Ok(Self {
            dim,
            n,
            epsilon,
            rule,
            cells_per_axis: raw as u32,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn rule(&self) -> GridRule {
        self.rule
    }

    pub fn cells_per_axis(&self) -> u32 {
        self.cells_per_axis
    }

    pub fn cell_width(&self) -> f64 {
        1.0 / self.cells_per_axis as f64
    }

    /// `N^d`, saturating at `u128::MAX`.
    pub fn total_cells(&self) -> u128 {
        (0..self.dim).fold(1u128, |acc, _| {
            acc.saturating_mul(self.cells_per_axis as u128)
        })
    }
}

/// Grid with `N = ⌊n / (log n)^{1+ε}⌋` cells per axis.
pub fn grid_size(n: u64, epsilon: f64, dim: usize) -> Result<GridSpec> {
    GridSpec::new(n, epsilon, dim, GridRule::PerAxis)
}

/// `j_m = min(⌊x_m N⌋ + 1, N)`.
pub fn assign_subcube(grid: &GridSpec, x: &[f64]) -> Result<Subcube> {
    if x.len() != grid.dim {
        return Err(invalid(format!(
            "point has {} coordinates, grid has {}",
            x.len(),
            grid.dim
        )));
    }
    if let Some(c) = x.iter().find(|c| !(0.0..=1.0).contains(*c)) {
        return Err(invalid(format!("coordinate {c} outside [0, 1]")));
    }
    Ok(subcube_of(grid, x))
}

fn subcube_of(grid: &GridSpec, x: &[f64]) -> Subcube {
    let n = grid.cells_per_axis;
    x.iter()
        .map(|&c| ((c * n as f64).floor() as u32 + 1).min(n))
        .collect()
}

/// `max_s |j_s - j'_s|`.
pub fn chebyshev_distance(a: &[u32], b: &[u32]) -> u32 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| x.abs_diff(y))
        .max()
        .unwrap_or(0)
}

/// `S(j, radius)`: subcubes within Chebyshev distance `radius` of `j`, in
/// lexicographic order.
pub fn neighborhood(grid: &GridSpec, j: &[u32], radius: u32) -> Vec<Subcube> {
    let n = grid.cells_per_axis;
    let lo: Vec<u32> = j.iter().map(|&c| c.saturating_sub(radius).max(1)).collect();
    let hi: Vec<u32> = j.iter().map(|&c| c.saturating_add(radius).min(n)).collect();
    let mut out = Vec::new();
    let mut cur = lo.clone();
    loop {
        out.push(cur.clone());
        let mut axis = grid.dim;
        loop {
            if axis == 0 {
                return out;
            }
            axis -= 1;
            if cur[axis] < hi[axis] {
                cur[axis] += 1;
                break;
            }
            cur[axis] = lo[axis];
        }
    }
}

/// Number of distinct occupied subcubes.
pub fn occupancy_count(grid: &GridSpec, sample: &PointSample) -> usize {
    sample
        .iter()
        .map(|x| subcube_of(grid, x))
        .collect::<BTreeSet<_>>()
        .len()
}

/// Every subcube holds at least one sample point.
pub fn occupancy_holds(grid: &GridSpec, occupied: usize) -> bool {
    occupied as u128 == grid.total_cells()
}

/// Number of exceeding points per subcube.
pub fn exceedances_by_subcube(
    grid: &GridSpec,
    sample: &PointSample,
    exceeding: &[usize],
) -> BTreeMap<Subcube, u32> {
    let mut map = BTreeMap::new();
    for &i in exceeding {
        *map.entry(subcube_of(grid, sample.point(i))).or_insert(0) += 1;
    }
    map
}

/// `max_j c_j (c_j - 1)` where `c_j` counts exceeding points in `S(j, 2k)`.
pub fn local_collisions(grid: &GridSpec, by_cell: &BTreeMap<Subcube, u32>, k: u64) -> u64 {
    let radius = 2 * k.min(u32::MAX as u64 / 2) as u32;
    let mut candidates = BTreeSet::new();
    for j in by_cell.keys() {
        candidates.extend(neighborhood(grid, j, radius));
    }
    candidates
        .iter()
        .map(|j| {
            let c: u64 = by_cell
                .iter()
                .filter(|(e, _)| chebyshev_distance(j, e) <= radius)
                .map(|(_, &m)| m as u64)
                .sum();
            c * c.saturating_sub(1)
        })
        .max()
        .unwrap_or(0)
}

/// Sparse block maxima of one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockMaxima {
    pub grid: GridSpec,
    /// `M_j` for every occupied subcube.
    pub entries: BTreeMap<Subcube, f64>,
    pub occupancy_count: usize,
    /// `Ĉ = #{j : M_j > v}`
    pub hat_count: u64,
    /// Subcubes with `M_j > v`, ascending.
    pub exceeding: Vec<Subcube>,
}

impl BlockMaxima {
    pub fn occupancy_ok(&self) -> bool {
        occupancy_holds(&self.grid, self.occupancy_count)
    }
}

pub fn block_maxima(
    grid: &GridSpec,
    density: &DensityModel,
    sample: &PointSample,
    radii: &NeighborRadii,
    p: &ThresholdParams,
) -> Result<BlockMaxima> {
    check_inputs(grid, sample, radii, p)?;
    let v = p.threshold();
    let contents = BallContents::new(density, sample, radii, v)?;
    let mut members: BTreeMap<Subcube, Vec<usize>> = BTreeMap::new();
    for (i, x) in sample.iter().enumerate() {
        members.entry(subcube_of(grid, x)).or_default().push(i);
    }
    let mut exceeding = Vec::new();
    let mut entries = BTreeMap::new();
    for (j, idx) in &members {
        // exceedance decisions go through the same bracket logic as C
        if idx.iter().any(|&i| contents.exceeds(i, v)) {
            exceeding.push(j.clone());
        }
        entries.insert(j.clone(), contents.max_over(idx.iter().copied()));
    }
    Ok(BlockMaxima {
        grid: *grid,
        occupancy_count: members.len(),
        hat_count: exceeding.len() as u64,
        entries,
        exceeding,
    })
}

/// Ordered pairs of exceeding points sharing some `S(j, 2k)`, maximized over `j`.
pub fn estimate_local_collisions(
    grid: &GridSpec,
    density: &DensityModel,
    sample: &PointSample,
    radii: &NeighborRadii,
    p: &ThresholdParams,
) -> Result<u64> {
    check_inputs(grid, sample, radii, p)?;
    let v = p.threshold();
    let ex = BallContents::new(density, sample, radii, v)?.exceedances(v);
    Ok(local_collisions(
        grid,
        &exceedances_by_subcube(grid, sample, &ex.exceeding),
        p.k(),
    ))
}

fn check_inputs(
    grid: &GridSpec,
    sample: &PointSample,
    radii: &NeighborRadii,
    p: &ThresholdParams,
) -> Result<()> {
    if grid.dim != sample.dim() {
        return Err(invalid("grid and sample dimensions differ"));
    }
    if sample.len() as u64 != p.n() || radii.len() != sample.len() || radii.k() as u64 != p.k() {
        return Err(invalid("sample, radii and (n, k) are inconsistent"));
    }
    Ok(())
}

/// Exceeding subcubes of one replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateCells {
    pub grid: GridSpec,
    /// Distinct subcubes with `M_j > v`.
    pub cells: Vec<Subcube>,
}

/// `(b1, b2)` from empirical frequencies of exceeding subcubes.
pub fn estimate_b_terms(replicates: &[ReplicateCells], k: u64) -> Result<(f64, f64)> {
    if replicates.len() < MIN_REPLICATES {
        return Err(invalid(format!(
            "need at least {MIN_REPLICATES} replicates, got {}",
            replicates.len()
        )));
    }
    let grid = replicates[0].grid;
    if replicates.iter().any(|r| r.grid != grid) {
        return Err(invalid("replicates were run on different grids"));
    }
    let refs: Vec<&ReplicateCells> = replicates.iter().collect();
    Ok(b_terms(&grid, &refs, k))
}

fn b_terms(grid: &GridSpec, replicates: &[&ReplicateCells], k: u64) -> (f64, f64) {
    let radius = 2 * k.min(u32::MAX as u64 / 2) as u32;
    let r = replicates.len() as f64;
    let mut single: BTreeMap<&Subcube, u64> = BTreeMap::new();
    let mut joint: u64 = 0;
    for rep in replicates {
        for (a, j) in rep.cells.iter().enumerate() {
            *single.entry(j).or_insert(0) += 1;
            joint += rep.cells[a + 1..]
                .iter()
                .filter(|j2| chebyshev_distance(j, j2) <= radius)
                .count() as u64;
        }
    }
    let mut b1 = 0.0;
    for (j, &cj) in &single {
        // sparse maps are small; scanning them beats enumerating (4k+1)^d cells
        let near: u64 = if single.len() < neighborhood_size(grid, radius) {
            single
                .iter()
                .filter(|(j2, _)| chebyshev_distance(j, j2) <= radius)
                .map(|(_, &c)| c)
                .sum()
        } else {
            neighborhood(grid, j, radius)
                .iter()
                .filter_map(|j2| single.get(j2))
                .sum()
        };
        b1 += (cj as f64 / r) * (near as f64 / r);
    }
    // each unordered pair counted once above; b2 runs over ordered pairs
    let b2 = 2.0 * joint as f64 / r;
    (b1, b2)
}

fn neighborhood_size(grid: &GridSpec, radius: u32) -> usize {
    let side = (2 * radius as u64 + 1).min(grid.cells_per_axis as u64);
    side.saturating_pow(grid.dim as u32).min(usize::MAX as u64) as usize
}

/// `2 (b1 + b2 + b3)`.
pub fn chen_stein_bound(b1: f64, b2: f64, b3: f64) -> Result<f64> {
    for (name, b) in [("b1", b1), ("b2", b2), ("b3", b3)] {
        if !(b >= 0.0) {
            return Err(invalid(format!("{name} must be nonnegative, got {b}")));
        }
    }
    Ok(2.0 * (b1 + b2 + b3))
}

/// Integer pmf on `{0, …, len-1}` plus a tail bucket for everything beyond.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pmf {
    probs: Vec<f64>,
    tail: f64,
}

impl Pmf {
    pub fn new(probs: Vec<f64>, tail: f64) -> Result<Self> {
        if probs
            .iter()
            .chain(std::iter::once(&tail))
            .any(|&p| !(p >= 0.0) || !p.is_finite())
        {
            return Err(invalid("pmf entries must be finite and nonnegative"));
        }
        let total: f64 = probs.iter().sum::<f64>() + tail;
        if (total - 1.0).abs() > 1e-9 {
            return Err(invalid(format!("pmf sums to {total}, not 1")));
        }
        Ok(Self { probs, tail })
    }

    /// Empirical pmf of integer observations.
    pub fn from_counts(values: &[u64]) -> Result<Self> {
        if values.is_empty() {
            return Err(invalid("empirical pmf needs at least one observation"));
        }
        let len = values.iter().max().map_or(0, |&m| m as usize + 1);
        let mut hist = vec![0u64; len];
        for &v in values {
            hist[v as usize] += 1;
        }
        let r = values.len() as f64;
        Ok(Self {
            probs: hist.iter().map(|&c| c as f64 / r).collect(),
            tail: 0.0,
        })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn tail(&self) -> f64 {
        self.tail
    }

    pub fn get(&self, m: usize) -> f64 {
        self.probs.get(m).copied().unwrap_or(0.0)
    }

    pub fn mean(&self) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(m, p)| m as f64 * p)
            .sum()
    }
}

/// `Σ_m |p_m - q_m|` (so disjoint laws are at distance 2). Tail buckets are
/// compared with each other as one extra atom.
pub fn tv_distance(a: &Pmf, b: &Pmf) -> f64 {
    let len = a.probs.len().max(b.probs.len());
    (0..len).map(|m| (a.get(m) - b.get(m)).abs()).sum::<f64>() + (a.tail - b.tail).abs()
}

/// What the diagnostics need from one replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateBlocks {
    pub cells: ReplicateCells,
    pub count: u64,
    pub hat_count: u64,
    pub occupancy_ok: bool,
    /// `max_j c_j (c_j - 1)` for this replicate.
    pub local_pairs: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChenSteinDiagnostics {
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
    pub bound: f64,
    /// Bootstrap standard error of `bound` over replicates.
    pub bound_se: f64,
    pub occupancy_failure_rate: f64,
    pub rn_estimate: f64,
    pub mismatch_rate: f64,
    pub epsilon: f64,
    pub cells_per_axis: u32,
    pub grid_rule: GridRule,
    pub replicates: usize,
    /// Same estimates restricted to replicates where every subcube is occupied.
    pub conditioned: Option<ConditionedDiagnostics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionedDiagnostics {
    pub replicates_kept: usize,
    pub replicates_discarded: usize,
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
    pub bound: f64,
    pub rn_estimate: f64,
    pub mismatch_rate: f64,
}

/// Aggregates per-replicate blocks into diagnostics; `seed` drives the bootstrap.
pub fn summarize_diagnostics(
    reps: &[ReplicateBlocks],
    k: u64,
    seed: u64,
) -> Result<ChenSteinDiagnostics> {
    let cells: Vec<ReplicateCells> = reps.iter().map(|r| r.cells.clone()).collect();
    let (b1, b2) = estimate_b_terms(&cells, k)?;
    let grid = cells[0].grid;
    let bound = chen_stein_bound(b1, b2, 0.0)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut boot = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
    let mut picked = Vec::with_capacity(reps.len());
    for _ in 0..BOOTSTRAP_RESAMPLES {
        picked.clear();
        picked.extend((0..reps.len()).map(|_| &cells[rng.random_range(0..reps.len())]));
        let (x1, x2) = b_terms(&grid, &picked, k);
        boot.push(2.0 * (x1 + x2));
    }

    let r = reps.len() as f64;
    let rate = |it: &mut dyn Iterator<Item = bool>| it.filter(|&b| b).count() as f64;
    let kept: Vec<&ReplicateBlocks> = reps.iter().filter(|r| r.occupancy_ok).collect();
    let conditioned = if kept.len() >= MIN_REPLICATES {
        let kept_cells: Vec<&ReplicateCells> = kept.iter().map(|r| &r.cells).collect();
        let (c1, c2) = b_terms(&grid, &kept_cells, k);
        let kr = kept.len() as f64;
        Some(ConditionedDiagnostics {
            replicates_kept: kept.len(),
            replicates_discarded: reps.len() - kept.len(),
            b1: c1,
            b2: c2,
            b3: 0.0,
            bound: 2.0 * (c1 + c2),
            rn_estimate: kept.iter().map(|r| r.local_pairs as f64).sum::<f64>() / kr,
            mismatch_rate: rate(&mut kept.iter().map(|r| r.count != r.hat_count)) / kr,
        })
    } else {
        None
    };

    Ok(ChenSteinDiagnostics {
        b1,
        b2,
        b3: 0.0,
        bound,
        bound_se: std_dev(&boot),
        occupancy_failure_rate: rate(&mut reps.iter().map(|r| !r.occupancy_ok)) / r,
        rn_estimate: reps.iter().map(|r| r.local_pairs as f64).sum::<f64>() / r,
        mismatch_rate: rate(&mut reps.iter().map(|r| r.count != r.hat_count)) / r,
        epsilon: grid.epsilon,
        cells_per_axis: grid.cells_per_axis,
        grid_rule: grid.rule,
        replicates: reps.len(),
        conditioned,
    })
}

pub(crate) fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}
