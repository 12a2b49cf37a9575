//! Width sweeps over a `(γ, γ′)` grid, log-log slope fits and boundary
//! interpolation.
//!
//! Every individual run is keyed by `(γ-index, γ′-index, width, replicate)`
//! and seeded from `derive_seed(base_seed, key)`, so results do not depend
//! on scheduling. With a cache directory each finished run is stored as a
//! small key-value file and skipped on the next invocation.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::datasets::Dataset;
use crate::dynamics::{integrate, simulate_original, FlowConfig, StopReason};
use crate::error::{Error, Result};
use crate::network::{empirical_risk, init_params, InitConfig};
use crate::rng::derive_seed;
use crate::scaling::{classify_regime, PhaseCoordinates, PowerLaw, RegimeLabel, ScalingSpec};

pub const DEFAULT_WIDTHS: [usize; 4] = [1000, 2000, 4000, 8000];
pub const LARGE_WIDTHS: [usize; 5] = [1000, 5000, 10000, 20000, 40000];
pub const DEFAULT_REPLICATES: usize = 3;
/// Cells closer than this to the critical set are excluded from sign claims.
pub const NEAR_CRITICAL: f64 = 0.15;

#[derive(Debug, Clone, PartialEq)]
pub struct ScanGrid {
    pub gamma_values: Vec<f64>,
    pub gamma_prime_values: Vec<f64>,
    pub widths: Vec<usize>,
    pub replicates: usize,
    pub base_seed: u64,
}

fn strictly_increasing<T: PartialOrd>(v: &[T]) -> bool {
    v.windows(2).all(|w| w[0] < w[1])
}

impl ScanGrid {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.gamma_values.is_empty() || self.gamma_prime_values.is_empty() {
            return bad("grid needs at least one γ and one γ′ value");
        }
        if !strictly_increasing(&self.gamma_values) || !strictly_increasing(&self.gamma_prime_values) {
            return bad("γ and γ′ values must be strictly increasing");
        }
        if self
            .gamma_values
            .iter()
            .chain(&self.gamma_prime_values)
            .any(|v| !v.is_finite())
        {
            return bad("γ and γ′ values must be finite");
        }
        if self.widths.len() < 2 || !strictly_increasing(&self.widths) || self.widths[0] < 2 {
            return bad("widths must be ≥ 2 strictly increasing values, each ≥ 2");
        }
        if self.replicates == 0 {
            return bad("replicates must be ≥ 1");
        }
        Ok(())
    }

    /// Non-fatal remarks, such as widths spanning less than a decade.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let (Some(&lo), Some(&hi)) = (self.widths.first(), self.widths.last()) {
            if (hi as f64) < 10.0 * lo as f64 {
                out.push(format!("widths {lo}..{hi} span less than a decade; slopes are noisy"));
            }
        }
        out
    }

    pub fn cell_count(&self) -> usize {
        self.gamma_values.len() * self.gamma_prime_values.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub residual_rms: f64,
    pub point_count: usize,
}

/// Least-squares line through `(log m, log value)`.
pub fn fit_slope(widths: &[usize], values: &[f64]) -> Result<SlopeFit> {
    if widths.len() != values.len() {
        return Err(Error::DimensionMismatch {
            context: "slope fit",
            expected: widths.len(),
            actual: values.len(),
        });
    }
    if widths.len() < 2 {
        return Err(Error::Empty("slope fit needs two points"));
    }
    if let Some((i, &v)) = values.iter().enumerate().find(|(_, v)| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::NonPositive { index: i, value: v });
    }
    let xs: Vec<f64> = widths.iter().map(|&m| (m as f64).ln()).collect();
    let ys: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidConfig("slope fit needs two distinct widths".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    Ok(SlopeFit {
        slope,
        intercept,
        residual_rms: (ss / n).sqrt(),
        point_count: xs.len(),
    })
}

/// Everything besides the grid that determines a run.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanConfig {
    pub flow: FlowConfig,
    /// Runs stop at normalized time `horizon / κ` (or `flow.max_time` if
    /// smaller). `None` keeps `flow.max_time`.
    pub horizon: Option<f64>,
    /// Risk threshold relative to the initial risk, combined with
    /// `flow.risk_tolerance` by taking the larger.
    pub relative_tolerance: f64,
    /// Multipliers on `κ = m^−γ` and `κ′ = m^−γ′`.
    pub kappa_coeff: f64,
    pub kappa_prime_coeff: f64,
    /// Integrate the original model with `β₂ = m^(−b)`, `β₁ = κ′·β₂` and
    /// `α = β₁β₂/κ` instead of the normalized one. Only time is rescaled, so
    /// slopes should not depend on `b`.
    pub beta_exponent: Option<f64>,
    pub cache_dir: Option<PathBuf>,
    pub jobs: usize,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            flow: FlowConfig {
                record_stride: 1,
                max_steps: 200_000,
                ..FlowConfig::default()
            },
            horizon: Some(200.0),
            relative_tolerance: 1e-6,
            kappa_coeff: 1.0,
            kappa_prime_coeff: 1.0,
            beta_exponent: None,
            cache_dir: None,
            jobs: 1,
        }
    }
}

impl ScanConfig {
    fn validate(&self) -> Result<()> {
        if let Some(h) = self.horizon {
            if !(h > 0.0) {
                return Err(Error::InvalidConfig(format!("horizon must be positive, got {h}")));
            }
        }
        if !(self.relative_tolerance >= 0.0) {
            return Err(Error::InvalidConfig("relative tolerance must be ≥ 0".into()));
        }
        if !(self.kappa_coeff > 0.0 && self.kappa_prime_coeff > 0.0) {
            return Err(Error::InvalidConfig("κ coefficients must be positive".into()));
        }
        if let Some(b) = self.beta_exponent {
            if !b.is_finite() {
                return Err(Error::InvalidConfig(format!("β exponent must be finite, got {b}")));
            }
        }
        if self.jobs == 0 {
            return Err(Error::InvalidConfig("jobs must be ≥ 1".into()));
        }
        // initial_step < max_time is checked per run, after the horizon is applied.
        FlowConfig {
            initial_step: None,
            ..self.flow.clone()
        }
        .validate()
    }

    /// Hash of every setting that changes run results (not `jobs` or the
    /// cache location).
    pub fn settings_hash(&self, base_seed: u64, dataset: &Dataset) -> String {
        let f = &self.flow;
        let text = format!(
            "v={}\nseed={base_seed}\ndata={}\nh0={:?}\nT={:?}\ntol={:?}\nstride={}\nmaxsteps={}\nadaptive={}\ncap={:?}\nhorizon={:?}\nrel={:?}\nck={:?}\nckp={:?}\nbeta={:?}\n",
            env!("CARGO_PKG_VERSION"),
            dataset.fingerprint(),
            f.initial_step,
            f.max_time,
            f.risk_tolerance,
            f.record_stride,
            f.max_steps,
            f.adaptive,
            f.max_step,
            self.horizon,
            self.relative_tolerance,
            self.kappa_coeff,
            self.kappa_prime_coeff,
            self.beta_exponent,
        );
        hex(&Sha256::digest(text.as_bytes()))
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::with_capacity(2 * bytes.len()), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateResult {
    pub width: usize,
    pub replicate: usize,
    pub seed: u64,
    pub sup_rd_w: f64,
    pub sup_rd_theta: f64,
    pub sup_rd_a: f64,
    pub final_risk: f64,
    pub final_time: f64,
    pub steps: usize,
    pub stop_reason: StopReason,
}

impl ReplicateResult {
    fn to_record(&self) -> String {
        format!(
            "width={}\nreplicate={}\nseed={}\nsup_rd_w={}\nsup_rd_theta={}\nsup_rd_a={}\nfinal_risk={}\nfinal_time={}\nsteps={}\nstop_reason={}\n",
            self.width,
            self.replicate,
            self.seed,
            self.sup_rd_w,
            self.sup_rd_theta,
            self.sup_rd_a,
            self.final_risk,
            self.final_time,
            self.steps,
            self.stop_reason.as_str()
        )
    }

    fn from_record(text: &str) -> Result<Self> {
        let get = |key: &str| -> Result<&str> {
            text.lines()
                .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
                .ok_or_else(|| Error::Parse(format!("cache record lacks `{key}`")))
        };
        let num = |key: &str| -> Result<f64> {
            get(key)?
                .parse()
                .map_err(|_| Error::Parse(format!("bad `{key}` in cache record")))
        };
        let int = |key: &str| -> Result<u64> {
            get(key)?
                .parse()
                .map_err(|_| Error::Parse(format!("bad `{key}` in cache record")))
        };
        Ok(Self {
            width: int("width")? as usize,
            replicate: int("replicate")? as usize,
            seed: int("seed")?,
            sup_rd_w: num("sup_rd_w")?,
            sup_rd_theta: num("sup_rd_theta")?,
            sup_rd_a: num("sup_rd_a")?,
            final_risk: num("final_risk")?,
            final_time: num("final_time")?,
            steps: int("steps")? as usize,
            stop_reason: get("stop_reason")?.parse()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WidthSummary {
    pub width: usize,
    /// Geometric means over the non-diverged replicates; `NaN` when none.
    pub rd_w: f64,
    pub rd_theta: f64,
    pub rd_a: f64,
    pub diverged: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub gamma_index: usize,
    pub gamma_prime_index: usize,
    pub coords: PhaseCoordinates,
    pub regime: RegimeLabel,
    pub near_critical: bool,
    pub widths: Vec<WidthSummary>,
    pub replicates: Vec<ReplicateResult>,
    pub s_w: Option<SlopeFit>,
    pub s_theta: Option<SlopeFit>,
    pub s_a: Option<SlopeFit>,
    /// More than half of the replicates of some width diverged or failed.
    pub partial: bool,
    pub errors: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlopeBlock {
    W,
    Theta,
    A,
}

impl CellResult {
    pub fn slope(&self, block: SlopeBlock) -> Option<SlopeFit> {
        match block {
            SlopeBlock::W => self.s_w,
            SlopeBlock::Theta => self.s_theta,
            SlopeBlock::A => self.s_a,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RowZeros {
    pub gamma_prime: f64,
    pub zeros: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseMap {
    pub grid: ScanGrid,
    /// Row-major over `(γ′, γ)`.
    pub cells: Vec<CellResult>,
    pub zeros: Vec<RowZeros>,
}

impl PhaseMap {
    pub fn cell(&self, gamma_index: usize, gamma_prime_index: usize) -> &CellResult {
        &self.cells[gamma_prime_index * self.grid.gamma_values.len() + gamma_index]
    }

    /// One row per cell and width.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("gamma,gamma_prime,regime,width,rd_w,rd_theta,rd_a,diverged\n");
        for c in &self.cells {
            for w in &c.widths {
                let _ = writeln!(
                    out,
                    "{:.16e},{:.16e},{},{},{:.16e},{:.16e},{:.16e},{}",
                    c.coords.gamma, c.coords.gamma_prime, c.regime, w.width, w.rd_w, w.rd_theta, w.rd_a, w.diverged
                );
            }
        }
        out
    }

    /// One row per cell with the three slopes.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from(
            "gamma,gamma_prime,regime,near_critical,partial,s_w,s_w_rms,s_theta,s_theta_rms,s_a,s_a_rms\n",
        );
        let fmt = |f: Option<SlopeFit>| match f {
            Some(f) => format!("{:.16e},{:.16e}", f.slope, f.residual_rms),
            None => "NaN,NaN".to_string(),
        };
        for c in &self.cells {
            let _ = writeln!(
                out,
                "{:.16e},{:.16e},{},{},{},{},{},{}",
                c.coords.gamma,
                c.coords.gamma_prime,
                c.regime,
                c.near_critical,
                c.partial,
                fmt(c.s_w),
                fmt(c.s_theta),
                fmt(c.s_a)
            );
        }
        out
    }

    pub fn replicates_csv(&self) -> String {
        let mut out =
            String::from("gamma,gamma_prime,width,replicate,seed,sup_rd_w,sup_rd_theta,sup_rd_a,final_risk,final_time,steps,stop_reason\n");
        for c in &self.cells {
            for r in &c.replicates {
                let _ = writeln!(
                    out,
                    "{:.16e},{:.16e},{},{},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{},{}",
                    c.coords.gamma,
                    c.coords.gamma_prime,
                    r.width,
                    r.replicate,
                    r.seed,
                    r.sup_rd_w,
                    r.sup_rd_theta,
                    r.sup_rd_a,
                    r.final_risk,
                    r.final_time,
                    r.steps,
                    r.stop_reason.as_str()
                );
            }
        }
        out
    }

    pub fn zeros_csv(&self) -> String {
        let mut out = String::from("gamma_prime,gamma_at_zero\n");
        for row in &self.zeros {
            for z in &row.zeros {
                let _ = writeln!(out, "{:.16e},{:.16e}", row.gamma_prime, z);
            }
        }
        out
    }
}

/// Seed of one run; stable under changes to the width list or replicate
/// count.
pub fn run_seed(base_seed: u64, gamma_index: usize, gamma_prime_index: usize, width: usize, replicate: usize) -> u64 {
    derive_seed(
        base_seed,
        &[
            gamma_index as u64,
            gamma_prime_index as u64,
            width as u64,
            replicate as u64,
        ],
    )
}

#[derive(Debug, Clone, Copy)]
struct RunKey {
    gi: usize,
    gpi: usize,
    coords: PhaseCoordinates,
    width: usize,
    replicate: usize,
}

fn cache_path(dir: &Path, settings: &str, key: &RunKey) -> PathBuf {
    dir.join(settings).join(format!(
        "g{}_{:?}_gp{}_{:?}_m{}_r{}.txt",
        key.gi, key.coords.gamma, key.gpi, key.coords.gamma_prime, key.width, key.replicate
    ))
}

fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn execute(key: &RunKey, base_seed: u64, dataset: &Dataset, config: &ScanConfig) -> Result<ReplicateResult> {
    let seed = run_seed(base_seed, key.gi, key.gpi, key.width, key.replicate);
    let use_asi = key.coords.gamma <= 0.5;
    if use_asi && key.width % 2 != 0 {
        return Err(Error::InvalidConfig(format!(
            "ASI needs an even width, got {}",
            key.width
        )));
    }
    let init = InitConfig {
        m: if use_asi { key.width / 2 } else { key.width },
        d: dataset.d(),
        seed,
        use_asi,
    };
    let params0 = init_params(&init)?;
    let m = key.width as f64;
    let kappa = config.kappa_coeff * m.powf(-key.coords.gamma);
    let kappa_prime = config.kappa_prime_coeff * m.powf(-key.coords.gamma_prime);
    let r0 = empirical_risk(&params0, kappa, dataset)?;
    let mut flow = config.flow.clone();
    flow.risk_tolerance = flow.risk_tolerance.max(r0 * config.relative_tolerance);
    if let Some(h) = config.horizon {
        flow.max_time = flow.max_time.min(h / kappa);
    }
    let run = match config.beta_exponent {
        None => integrate(&params0, kappa, kappa_prime, dataset, &flow)?,
        Some(b) => {
            let g = key.coords.gamma;
            let gp = key.coords.gamma_prime;
            let spec = ScalingSpec::new(
                PowerLaw::new(config.kappa_prime_coeff / config.kappa_coeff, g - gp - 2.0 * b)?,
                PowerLaw::new(config.kappa_prime_coeff, -gp - b)?,
                PowerLaw::new(1.0, -b)?,
            );
            simulate_original(&spec, &init, dataset, &flow)?
        }
    };
    Ok(ReplicateResult {
        width: key.width,
        replicate: key.replicate,
        seed,
        sup_rd_w: run.sup_rd_w,
        sup_rd_theta: run.sup_rd_theta,
        sup_rd_a: run.sup_rd_a,
        final_risk: run.final_risk(),
        final_time: *run.trajectory.times.last().expect("initial record"),
        steps: run.accepted_steps,
        stop_reason: run.stop_reason,
    })
}

fn run_or_load(
    key: &RunKey,
    base_seed: u64,
    dataset: &Dataset,
    config: &ScanConfig,
    settings: &str,
) -> Result<ReplicateResult> {
    if let Some(dir) = &config.cache_dir {
        let path = cache_path(dir, settings, key);
        if let Ok(text) = fs::read_to_string(&path) {
            if let Ok(r) = ReplicateResult::from_record(&text) {
                return Ok(r);
            }
        }
        let r = execute(key, base_seed, dataset, config)?;
        write_atomic(&path, &r.to_record())?;
        Ok(r)
    } else {
        execute(key, base_seed, dataset, config)
    }
}

fn geometric_mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v.ln(), n + 1));
    if n == 0 {
        f64::NAN
    } else {
        (sum / n as f64).exp()
    }
}

fn assemble_cell(
    gi: usize,
    gpi: usize,
    coords: PhaseCoordinates,
    grid: &ScanGrid,
    outcomes: Vec<(usize, usize, Result<ReplicateResult>)>,
) -> CellResult {
    let mut replicates = Vec::new();
    let mut errors = Vec::new();
    let mut widths = Vec::new();
    let mut partial = false;
    for &width in &grid.widths {
        let mut ok = Vec::new();
        let mut diverged = 0;
        for (w, rep, out) in outcomes.iter().filter(|o| o.0 == width) {
            match out {
                Ok(r) => {
                    if r.stop_reason == StopReason::Diverged {
                        diverged += 1;
                    } else {
                        ok.push(r.clone());
                    }
                    replicates.push(r.clone());
                }
                Err(e) => {
                    diverged += 1;
                    errors.push(format!("m={w} replicate={rep}: {e}"));
                }
            }
        }
        if 2 * diverged > grid.replicates {
            partial = true;
        }
        widths.push(WidthSummary {
            width,
            rd_w: geometric_mean(ok.iter().map(|r| r.sup_rd_w)),
            rd_theta: geometric_mean(ok.iter().map(|r| r.sup_rd_theta)),
            rd_a: geometric_mean(ok.iter().map(|r| r.sup_rd_a)),
            diverged,
        });
    }
    let fit = |get: fn(&WidthSummary) -> f64| {
        let pts: Vec<(usize, f64)> = widths
            .iter()
            .map(|w| (w.width, get(w)))
            .filter(|(_, v)| *v > 0.0 && v.is_finite())
            .collect();
        let (ms, vs): (Vec<usize>, Vec<f64>) = pts.into_iter().unzip();
        fit_slope(&ms, &vs).ok()
    };
    CellResult {
        gamma_index: gi,
        gamma_prime_index: gpi,
        coords,
        regime: classify_regime(coords),
        near_critical: coords.distance_to_boundary() < NEAR_CRITICAL,
        s_w: fit(|w| w.rd_w),
        s_theta: fit(|w| w.rd_theta),
        s_a: fit(|w| w.rd_a),
        widths,
        replicates,
        partial,
        errors,
    }
}

fn run_keys(grid: &ScanGrid, cells: &[(usize, usize)]) -> Vec<RunKey> {
    let mut keys = Vec::new();
    for &(gi, gpi) in cells {
        let coords = PhaseCoordinates::new(grid.gamma_values[gi], grid.gamma_prime_values[gpi]);
        for &width in &grid.widths {
            for replicate in 0..grid.replicates {
                keys.push(RunKey {
                    gi,
                    gpi,
                    coords,
                    width,
                    replicate,
                });
            }
        }
    }
    keys
}

fn run_cells(
    grid: &ScanGrid,
    cells: &[(usize, usize)],
    dataset: &Dataset,
    config: &ScanConfig,
) -> Result<Vec<CellResult>> {
    grid.validate()?;
    config.validate()?;
    let settings = config.settings_hash(grid.base_seed, dataset);
    let keys = run_keys(grid, cells);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot build worker pool: {e}")))?;
    // Widest runs first so the pool drains evenly; results are re-sorted by
    // key below, so scheduling never reaches the output.
    let mut order: Vec<usize> = (0..keys.len()).collect();
    order.sort_by_key(|&i| std::cmp::Reverse(keys[i].width));
    let mut results: Vec<(usize, Result<ReplicateResult>)> = pool.install(|| {
        order
            .par_iter()
            .map(|&i| (i, run_or_load(&keys[i], grid.base_seed, dataset, config, &settings)))
            .collect()
    });
    results.sort_by_key(|(i, _)| *i);
    // Cache I/O failures are configuration problems, not run outcomes.
    if let Some(pos) = results.iter().position(|(_, r)| matches!(r, Err(Error::Io(_)))) {
        return Err(results.swap_remove(pos).1.unwrap_err());
    }

    let mut per_cell: Vec<Vec<(usize, usize, Result<ReplicateResult>)>> = cells.iter().map(|_| Vec::new()).collect();
    for (i, r) in results {
        let k = keys[i];
        let c = cells
            .iter()
            .position(|&(gi, gpi)| gi == k.gi && gpi == k.gpi)
            .expect("key from cell list");
        per_cell[c].push((k.width, k.replicate, r));
    }
    Ok(cells
        .iter()
        .zip(per_cell)
        .map(|(&(gi, gpi), outcomes)| {
            let coords = PhaseCoordinates::new(grid.gamma_values[gi], grid.gamma_prime_values[gpi]);
            assemble_cell(gi, gpi, coords, grid, outcomes)
        })
        .collect())
}

/// Runs every width and replicate of one grid cell.
pub fn run_cell(
    gamma_index: usize,
    gamma_prime_index: usize,
    grid: &ScanGrid,
    dataset: &Dataset,
    config: &ScanConfig,
) -> Result<CellResult> {
    if gamma_index >= grid.gamma_values.len() || gamma_prime_index >= grid.gamma_prime_values.len() {
        return Err(Error::InvalidConfig("cell index outside the grid".into()));
    }
    Ok(run_cells(grid, &[(gamma_index, gamma_prime_index)], dataset, config)?.remove(0))
}

/// Runs the whole grid. Per-run failures are recorded on their cells;
/// only configuration and cache I/O errors abort.
pub fn scan(grid: &ScanGrid, dataset: &Dataset, config: &ScanConfig) -> Result<PhaseMap> {
    let cells: Vec<(usize, usize)> = (0..grid.gamma_prime_values.len())
        .flat_map(|gpi| (0..grid.gamma_values.len()).map(move |gi| (gi, gpi)))
        .collect();
    let results = run_cells(grid, &cells, dataset, config)?;
    let mut map = PhaseMap {
        grid: grid.clone(),
        cells: results,
        zeros: Vec::new(),
    };
    map.zeros = zero_crossings(&map, SlopeBlock::W);
    Ok(map)
}

/// Linear interpolation of `S(γ) = 0` between adjacent cells of each γ′ row
/// whose slopes have opposite signs. A slope that is exactly zero is its
/// own crossing.
pub fn zero_crossings(map: &PhaseMap, block: SlopeBlock) -> Vec<RowZeros> {
    let ng = map.grid.gamma_values.len();
    map.grid
        .gamma_prime_values
        .iter()
        .enumerate()
        .map(|(gpi, &gp)| {
            let row: Vec<(f64, Option<f64>)> = (0..ng)
                .map(|gi| {
                    let c = map.cell(gi, gpi);
                    (c.coords.gamma, c.slope(block).map(|f| f.slope))
                })
                .collect();
            let mut zeros = Vec::new();
            for (i, &(g, s)) in row.iter().enumerate() {
                if s == Some(0.0) {
                    zeros.push(g);
                }
                if let (Some(s0), Some(&(g1, Some(s1)))) = (s, row.get(i + 1)) {
                    if s0 * s1 < 0.0 {
                        zeros.push(g + (g1 - g) * s0 / (s0 - s1));
                    }
                }
            }
            RowZeros { gamma_prime: gp, zeros }
        })
        .collect()
}

/// `S_w` zero crossings per γ′ row.
pub fn boundary_zeros(map: &PhaseMap) -> Vec<RowZeros> {
    zero_crossings(map, SlopeBlock::W)
}
