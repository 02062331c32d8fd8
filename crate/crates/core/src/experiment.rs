//! Replicated Monte Carlo runs and their summaries.
//!
//! Replicate `id` draws its sample from `replicate_seed(master_seed, id)`,
//! so every record depends only on the configuration and its id. Replicates
//! run on a rayon pool and are gathered in id order.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chenstein::{
    exceedances_by_subcube, local_collisions, occupancy_count, occupancy_holds, std_dev,
    summarize_diagnostics, tv_distance, ChenSteinDiagnostics, GridRule, GridSpec, Pmf,
    ReplicateBlocks, ReplicateCells, MIN_REPLICATES,
};
use crate::error::{invalid, Error, Result};
use crate::limits::{
    centered_max, expected_count, gumbel_cdf, BallContents, ExceedanceRecord, ThresholdParams,
};
use crate::measures::{replicate_seed, sample_points, DensityModel, DensitySpec, PointSample};
use crate::nn::kth_nn_radii;
use crate::special::ln_gamma;

pub const CSV_HEADER: &str =
    "replicate_id,seed,count,hat_count,max_content,centered_max,occupancy_ok";

const BOOTSTRAP_RESAMPLES: usize = 200;
const POISSON_TAIL: f64 = 1e-12;

fn default_epsilon() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dim: usize,
    pub n: u64,
    pub k: u64,
    #[serde(default)]
    pub t: f64,
    pub replicates: usize,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    pub density: DensitySpec,
    pub master_seed: u64,
    #[serde(default)]
    pub chenstein_diagnostics: bool,
    #[serde(default)]
    pub grid_rule: GridRule,
}

impl ExperimentConfig {
    /// Uniform density, `ε = 0.5`, diagnostics off.
    pub fn new(dim: usize, n: u64, k: u64, t: f64, replicates: usize, master_seed: u64) -> Self {
        Self {
            dim,
            n,
            k,
            t,
            replicates,
            epsilon: default_epsilon(),
            density: DensitySpec::uniform(dim),
            master_seed,
            chenstein_diagnostics: false,
            grid_rule: GridRule::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.prepare().map(|_| ())
    }

    fn prepare(&self) -> Result<Prepared> {
        if self.dim == 0 {
            return Err(invalid("dimension must be at least 1"));
        }
        if self.replicates == 0 {
            return Err(invalid("need at least one replicate"));
        }
        if self.chenstein_diagnostics && self.replicates < MIN_REPLICATES {
            return Err(invalid(format!(
                "diagnostics need at least {MIN_REPLICATES} replicates, got {}",
                self.replicates
            )));
        }
        if self.density.dim != self.dim {
            return Err(invalid(format!(
                "density is {}-dimensional but the experiment is {}-dimensional",
                self.density.dim, self.dim
            )));
        }
        let params = ThresholdParams::new(self.n, self.k, self.t)?;
        let density = self.density.build()?;
        let grid = match GridSpec::new(self.n, self.epsilon, self.dim, self.grid_rule) {
            Ok(g) => Some(g),
            Err(e) if self.chenstein_diagnostics => return Err(e),
            Err(Error::GridDegenerate { .. }) => None,
            Err(e) => return Err(e),
        };
        Ok(Prepared {
            params,
            density,
            grid,
        })
    }
}

struct Prepared {
    params: ThresholdParams,
    density: DensityModel,
    grid: Option<GridSpec>,
}

/// A replicate's record plus the per-subcube data the diagnostics need.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateOutcome {
    pub record: ExceedanceRecord,
    pub blocks: Option<ReplicateBlocks>,
}

fn outcome(prep: &Prepared, id: u64, sample: &PointSample) -> Result<ReplicateOutcome> {
    let p = &prep.params;
    let radii = kth_nn_radii(sample, p.k() as usize)?;
    let v = p.threshold();
    let ex = BallContents::new(&prep.density, sample, &radii, v)?.exceedances(v);
    // Without a usable grid every exceedance is its own block.
    let (hat_count, occupancy_ok, blocks) = match &prep.grid {
        Some(grid) => {
            let by_cell = exceedances_by_subcube(grid, sample, &ex.exceeding);
            let occupancy_ok = occupancy_holds(grid, occupancy_count(grid, sample));
            let hat = by_cell.len() as u64;
            let blocks = ReplicateBlocks {
                local_pairs: local_collisions(grid, &by_cell, p.k()),
                cells: ReplicateCells {
                    grid: *grid,
                    cells: by_cell.into_keys().collect(),
                },
                count: ex.count,
                hat_count: hat,
                occupancy_ok,
            };
            (hat, occupancy_ok, Some(blocks))
        }
        None => (ex.count, false, None),
    };
    let record = ExceedanceRecord {
        replicate_id: id,
        seed: sample.seed(),
        count: ex.count,
        hat_count,
        max_content: ex.max_content,
        centered_max: centered_max(p, ex.max_content),
        occupancy_ok,
    };
    Ok(ReplicateOutcome { record, blocks })
}

fn sampled_outcome(
    config: &ExperimentConfig,
    prep: &Prepared,
    id: u64,
) -> Result<ReplicateOutcome> {
    let seed = replicate_seed(config.master_seed, id);
    let sample = sample_points(&prep.density, config.n as usize, seed)?;
    outcome(prep, id, &sample)
}

/// One replicate, reproducible from `(config, id)`.
pub fn run_replicate(config: &ExperimentConfig, id: u64) -> Result<ExceedanceRecord> {
    let prep = config.prepare()?;
    Ok(sampled_outcome(config, &prep, id)?.record)
}

/// One replicate on explicitly supplied points instead of a random sample.
pub fn run_replicate_on(
    config: &ExperimentConfig,
    id: u64,
    sample: &PointSample,
) -> Result<ReplicateOutcome> {
    let prep = config.prepare()?;
    if sample.dim() != config.dim || sample.len() as u64 != config.n {
        return Err(invalid(
            "injected sample does not match the configured (dim, n)",
        ));
    }
    outcome(&prep, id, sample)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryReport {
    pub config: ExperimentConfig,
    pub pmf: Pmf,
    pub mean_count: f64,
    pub se_count: f64,
    pub expected_count: f64,
    pub tv_to_poisson: f64,
    pub tv_se: f64,
    pub ks_to_gumbel: f64,
    pub diagnostics: Option<ChenSteinDiagnostics>,
    pub runtime_seconds: f64,
    /// Per-replicate records in id order.
    #[serde(skip)]
    pub records: Vec<ExceedanceRecord>,
    /// Per-replicate subcube data in id order (empty without a grid).
    #[serde(skip)]
    pub blocks: Vec<ReplicateBlocks>,
}

/// Runs all replicates on the global rayon pool.
pub fn run_experiment(config: &ExperimentConfig) -> Result<SummaryReport> {
    run_experiment_with_workers(config, None)
}

/// Runs all replicates on `workers` threads (`None`: one per core). The
/// report, apart from `runtime_seconds`, does not depend on `workers`.
pub fn run_experiment_with_workers(
    config: &ExperimentConfig,
    workers: Option<usize>,
) -> Result<SummaryReport> {
    let prep = config.prepare()?;
    let start = Instant::now();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        if w == 0 {
            return Err(invalid("worker count must be positive"));
        }
        builder = builder.num_threads(w);
    }
    let pool = builder
        .build()
        .map_err(|e| invalid(format!("thread pool: {e}")))?;
    let outcomes: Vec<ReplicateOutcome> = pool.install(|| {
        (0..config.replicates as u64)
            .into_par_iter()
            .map(|id| sampled_outcome(config, &prep, id))
            .collect::<Result<_>>()
    })?;
    log::info!("{} replicates of n = {} done", outcomes.len(), config.n);

    let records: Vec<ExceedanceRecord> = outcomes.iter().map(|o| o.record.clone()).collect();
    let blocks: Vec<ReplicateBlocks> = outcomes.into_iter().filter_map(|o| o.blocks).collect();
    let diagnostics = if config.chenstein_diagnostics {
        let seed = replicate_seed(config.master_seed, u64::MAX - 1);
        Some(summarize_diagnostics(&blocks, prep.params.k(), seed)?)
    } else {
        None
    };
    let mut report = summarize(config, &prep.params, records, diagnostics)?;
    report.blocks = blocks;
    report.runtime_seconds = start.elapsed().as_secs_f64();
    Ok(report)
}

fn summarize(
    config: &ExperimentConfig,
    params: &ThresholdParams,
    records: Vec<ExceedanceRecord>,
    diagnostics: Option<ChenSteinDiagnostics>,
) -> Result<SummaryReport> {
    let counts: Vec<u64> = records.iter().map(|r| r.count).collect();
    let pmf = Pmf::from_counts(&counts)?;
    let poisson = poisson_pmf((-config.t).exp())?;
    let as_f64: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    let centered: Vec<f64> = records.iter().map(|r| r.centered_max).collect();
    let seed = replicate_seed(config.master_seed, u64::MAX);
    Ok(SummaryReport {
        config: config.clone(),
        mean_count: pmf.mean(),
        se_count: std_dev(&as_f64) / (counts.len() as f64).sqrt(),
        expected_count: expected_count(params),
        tv_to_poisson: tv_distance(&pmf, &poisson),
        tv_se: bootstrap_tv_se(&counts, &poisson, seed)?,
        ks_to_gumbel: ks_gumbel(&centered)?,
        pmf,
        diagnostics,
        runtime_seconds: 0.0,
        records,
        blocks: Vec::new(),
    })
}

/// Standard deviation of the plug-in TV over bootstrap resamples of the counts.
pub fn bootstrap_tv_se(counts: &[u64], target: &Pmf, seed: u64) -> Result<f64> {
    if counts.is_empty() {
        return Err(invalid("no counts to resample"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut resample = vec![0u64; counts.len()];
    let mut tvs = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
    for _ in 0..BOOTSTRAP_RESAMPLES {
        for slot in resample.iter_mut() {
            *slot = counts[rng.random_range(0..counts.len())];
        }
        tvs.push(tv_distance(&Pmf::from_counts(&resample)?, target));
    }
    Ok(std_dev(&tvs))
}

/// `Po(λ)` on `{0, …, M}` plus its tail, with `M` the smallest cutoff whose
/// tail mass is below `1e-12`.
pub fn poisson_pmf(lambda: f64) -> Result<Pmf> {
    check_lambda(lambda)?;
    let terms = poisson_terms(lambda);
    let mut tail = 0.0;
    let mut cut = terms.len() - 1;
    // tails accumulate from the far end, where terms are smallest
    let mut tails = vec![0.0; terms.len()];
    for m in (0..terms.len()).rev() {
        tails[m] = tail;
        tail += terms[m];
    }
    if let Some(m) = tails.iter().position(|&t| t < POISSON_TAIL) {
        cut = m;
    }
    Pmf::new(terms[..=cut].to_vec(), tails[cut])
}

/// `Po(λ)` on `{0, …, cutoff}` with everything above in the tail bucket.
pub fn poisson_pmf_truncated(lambda: f64, cutoff: usize) -> Result<Pmf> {
    check_lambda(lambda)?;
    let probs: Vec<f64> = (0..=cutoff)
        .map(|m| poisson_ln_pmf(lambda, m).exp())
        .collect();
    let head: f64 = probs.iter().sum();
    Pmf::new(probs, (1.0 - head).max(0.0))
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(invalid(format!(
            "Poisson mean must be positive, got {lambda}"
        )));
    }
    Ok(())
}

fn poisson_ln_pmf(lambda: f64, m: usize) -> f64 {
    -lambda + m as f64 * lambda.ln() - ln_gamma(m as f64 + 1.0)
}

/// Terms from 0 until they drop below 1e-300 past the mode.
fn poisson_terms(lambda: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut m = 0usize;
    loop {
        let p = poisson_ln_pmf(lambda, m).exp();
        out.push(p);
        if m as f64 > lambda && p < 1e-300 {
            return out;
        }
        m += 1;
    }
}

/// Kolmogorov–Smirnov distance between the empirical law of `samples` and
/// the Gumbel distribution.
pub fn ks_gumbel(samples: &[f64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(invalid("KS statistic needs at least one sample"));
    }
    if samples.iter().any(|x| x.is_nan()) {
        return Err(invalid("KS samples contain NaN"));
    }
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    Ok(xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let g = gumbel_cdf(x);
            ((i as f64 + 1.0) / n - g).max(g - i as f64 / n)
        })
        .fold(0.0, f64::max))
}

/// Where [`persist`] writes.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputPaths {
    pub replicates_csv: PathBuf,
    pub summary_json: PathBuf,
}

impl OutputPaths {
    /// `replicates.csv` and `summary.json` inside `dir`.
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            replicates_csv: dir.join("replicates.csv"),
            summary_json: dir.join("summary.json"),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_owned(),
        source,
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => fs::create_dir_all(dir).map_err(io_err(dir)),
        _ => Ok(()),
    }
}

fn fixed(x: f64) -> String {
    format!("{x:.16e}")
}

fn to_text<I, R>(header: &str, rows: I) -> String
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    let write = || -> csv::Result<()> {
        w.write_record(header.split(','))?;
        for row in rows {
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(())
    };
    write().expect("writing CSV to memory");
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("ASCII fields")
}

/// Replicate table: 64-bit hex seeds, decimals with 17 significant digits.
pub fn replicates_csv(records: &[ExceedanceRecord]) -> String {
    to_text(
        CSV_HEADER,
        records.iter().map(|r| {
            [
                r.replicate_id.to_string(),
                format!("0x{:016x}", r.seed),
                r.count.to_string(),
                r.hat_count.to_string(),
                fixed(r.max_content),
                fixed(r.centered_max),
                u8::from(r.occupancy_ok).to_string(),
            ]
        }),
    )
}

/// Writes the replicate CSV and the summary JSON.
pub fn persist(report: &SummaryReport, paths: &OutputPaths) -> Result<()> {
    ensure_parent(&paths.replicates_csv)?;
    ensure_parent(&paths.summary_json)?;
    fs::write(&paths.replicates_csv, replicates_csv(&report.records))
        .map_err(io_err(&paths.replicates_csv))?;
    let json = serde_json::to_string_pretty(report)?;
    fs::write(&paths.summary_json, json + "\n").map_err(io_err(&paths.summary_json))?;
    Ok(())
}

pub fn load_replicates_csv(path: &Path) -> Result<Vec<ExceedanceRecord>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_replicates_csv(&text).map_err(|message| Error::Parse {
        path: path.to_owned(),
        message,
    })
}

fn parse_replicates_csv(text: &str) -> std::result::Result<Vec<ExceedanceRecord>, String> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| e.to_string())?;
    if header.iter().ne(CSV_HEADER.split(',')) {
        return Err(format!(
            "unexpected header {:?}",
            header.iter().collect::<Vec<_>>().join(",")
        ));
    }
    reader
        .records()
        .enumerate()
        .map(|(i, row)| {
            let row = row.map_err(|e| e.to_string())?;
            let line_no = i + 2;
            let bad = |what: &str| format!("line {line_no}: bad {what}");
            let field = |c: usize| row.get(c).unwrap_or_default();
            if row.len() != 7 {
                return Err(format!(
                    "line {line_no}: expected 7 fields, got {}",
                    row.len()
                ));
            }
            Ok(ExceedanceRecord {
                replicate_id: field(0).parse().map_err(|_| bad("replicate_id"))?,
                seed: field(1)
                    .strip_prefix("0x")
                    .and_then(|h| u64::from_str_radix(h, 16).ok())
                    .ok_or_else(|| bad("seed"))?,
                count: field(2).parse().map_err(|_| bad("count"))?,
                hat_count: field(3).parse().map_err(|_| bad("hat_count"))?,
                max_content: field(4).parse().map_err(|_| bad("max_content"))?,
                centered_max: field(5).parse().map_err(|_| bad("centered_max"))?,
                occupancy_ok: match field(6) {
                    "0" => false,
                    "1" => true,
                    _ => return Err(bad("occupancy_ok")),
                },
            })
        })
        .collect()
}

pub const SWEEP_HEADER: &str =
    "n,replicates,mean_count,se_count,expected_count,tv_to_poisson,tv_se,ks_to_gumbel,\
b1,b2,bound,bound_se,mismatch_rate,occupancy_failure_rate,rn_estimate,runtime_seconds";

/// One row per report, in the order given; diagnostic columns are empty
/// when diagnostics were off.
pub fn sweep_csv(reports: &[SummaryReport]) -> String {
    to_text(
        SWEEP_HEADER,
        reports.iter().map(|r| {
            let d = r.diagnostics.as_ref();
            let opt =
                |f: fn(&ChenSteinDiagnostics) -> f64| d.map_or(String::new(), |d| fixed(f(d)));
            vec![
                r.config.n.to_string(),
                r.config.replicates.to_string(),
                fixed(r.mean_count),
                fixed(r.se_count),
                fixed(r.expected_count),
                fixed(r.tv_to_poisson),
                fixed(r.tv_se),
                fixed(r.ks_to_gumbel),
                opt(|d| d.b1),
                opt(|d| d.b2),
                opt(|d| d.bound),
                opt(|d| d.bound_se),
                opt(|d| d.mismatch_rate),
                opt(|d| d.occupancy_failure_rate),
                opt(|d| d.rn_estimate),
                format!("{:.3}", r.runtime_seconds),
            ]
        }),
    )
}
