//! Finite-width checks of the initialization, decay and relative-change
//! bounds.
//!
//! Each check returns a [`BoundReport`] comparing an empirical quantity with
//! its predicted value. Statements that only hold with high probability over
//! the initialization are meant to be evaluated over a seed ensemble with
//! [`run_ensemble`] and [`pass_rate`].

use std::fmt;

use rayon::prelude::*;

use crate::datasets::Dataset;
use crate::dynamics::RunResult;
use crate::error::{Error, Result};
use crate::kernels::{decay_rate, gram_limit_closed};
use crate::linalg::min_eigenvalue;
use crate::network::{empirical_risk, NetworkParams};
use crate::scaling::PhaseCoordinates;

pub const DEFAULT_DECAY_TOLERANCE: f64 = 0.05;
pub const DEFAULT_RD_CONSTANT: f64 = 10.0;
/// Scale-normalized balancedness residual tolerated by [`check_neuron_bound`].
pub const DEFAULT_RESIDUAL_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BoundContext {
    pub m: usize,
    pub d: usize,
    pub n: Option<usize>,
    pub kappa: Option<f64>,
    pub kappa_prime: Option<f64>,
    pub seed: Option<u64>,
}

impl BoundContext {
    fn of_params(p: &NetworkParams) -> Self {
        Self {
            m: p.m(),
            d: p.d(),
            ..Self::default()
        }
    }

    fn of_run(run: &RunResult, n: Option<usize>) -> Self {
        Self {
            m: run.initial_params.m(),
            d: run.initial_params.d(),
            n,
            kappa: Some(run.kappa),
            kappa_prime: Some(run.kappa_prime),
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub bound_name: &'static str,
    pub theoretical_value: f64,
    pub empirical_value: f64,
    pub satisfied: bool,
    pub context: BoundContext,
    pub detail: String,
}

impl BoundReport {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.context.seed = Some(seed);
        self
    }

    pub fn with_n(mut self, n: usize) -> Self {
        self.context.n = Some(n);
        self
    }

    pub const CSV_HEADER: &'static str = "bound,theoretical,empirical,satisfied,m,n,d,kappa,kappa_prime,seed,detail";

    pub fn to_csv_row(&self) -> String {
        let c = &self.context;
        let opt_f = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.16e}"));
        format!(
            "{},{:.16e},{:.16e},{},{},{},{},{},{},{},\"{}\"",
            self.bound_name,
            self.theoretical_value,
            self.empirical_value,
            self.satisfied,
            c.m,
            c.n.map_or(String::new(), |n| n.to_string()),
            c.d,
            opt_f(c.kappa),
            opt_f(c.kappa_prime),
            c.seed.map_or(String::new(), |s| s.to_string()),
            self.detail.replace('"', "'"),
        )
    }
}

impl fmt::Display for BoundReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<20} {:<4} empirical {:>12.6e}  predicted {:>12.6e}",
            self.bound_name,
            if self.satisfied { "ok" } else { "FAIL" },
            self.empirical_value,
            self.theoretical_value
        )?;
        if !self.detail.is_empty() {
            write!(f, "  ({})", self.detail)?;
        }
        Ok(())
    }
}

pub fn reports_csv(reports: &[BoundReport]) -> String {
    let mut out = String::from(BoundReport::CSV_HEADER);
    out.push('\n');
    for r in reports {
        out.push_str(&r.to_csv_row());
        out.push('\n');
    }
    out
}

/// `√(2 log(2m(d+1)/δ))`.
pub fn initial_param_bound(m: usize, d: usize, delta: f64) -> f64 {
    (2.0 * (2.0 * m as f64 * (d as f64 + 1.0) / delta).ln()).sqrt()
}

/// Largest entry of the initial parameters against [`initial_param_bound`].
pub fn check_initial_param_bound(params0: &NetworkParams, delta: f64) -> Result<BoundReport> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidConfig(format!("δ must lie in (0, 1), got {delta}")));
    }
    let bound = initial_param_bound(params0.m(), params0.d(), delta);
    let largest = params0
        .a
        .iter()
        .chain(&params0.w)
        .fold(0.0f64, |acc, v| acc.max(v.abs()));
    Ok(BoundReport {
        bound_name: "initial-param-max",
        theoretical_value: bound,
        empirical_value: largest,
        satisfied: largest <= bound,
        context: BoundContext::of_params(params0),
        detail: format!("delta={delta}"),
    })
}

/// `[√(k/2), √(3k/2)]` for a block with `k` standard-normal entries.
pub fn norm_sandwich(count: usize) -> (f64, f64) {
    let k = count as f64;
    ((k / 2.0).sqrt(), (1.5 * k).sqrt())
}

/// The three norm sandwiches for `θ`, `θ_w` and `θ_a`. The report carries
/// `‖θ⁰‖` and the upper end of its sandwich; `satisfied` needs all three.
pub fn check_initial_norms(params0: &NetworkParams) -> BoundReport {
    let (m, d) = (params0.m(), params0.d());
    let (nt, nw, na) = params0.block_norms();
    let blocks = [("theta", nt, m * (d + 1)), ("w", nw, m * d), ("a", na, m)];
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, norm, count) in blocks {
        let (lo, hi) = norm_sandwich(count);
        let inside = lo <= norm && norm <= hi;
        ok &= inside;
        parts.push(format!(
            "{name}: {lo:.4} <= {norm:.4} <= {hi:.4}{}",
            if inside { "" } else { " violated" }
        ));
    }
    BoundReport {
        bound_name: "initial-norms",
        theoretical_value: norm_sandwich(m * (d + 1)).1,
        empirical_value: nt,
        satisfied: ok,
        context: BoundContext::of_params(params0),
        detail: parts.join("; "),
    }
}

/// Global rate `2mκ²λ/n` with `λ` the smaller least eigenvalue of the two
/// limiting kernels on `dataset`.
pub fn linear_decay_rate(m: usize, kappa: f64, kappa_prime: f64, dataset: &Dataset) -> Result<f64> {
    let lim = gram_limit_closed(dataset)?;
    let la = min_eigenvalue(&lim.k_a)?;
    let lw = min_eigenvalue(&lim.k_w)?;
    Ok(decay_rate(m, kappa, kappa_prime, dataset.n(), la, lw).linear)
}

/// Worst recorded `loss(t) / (exp(−rate·t)·loss(0))`, compared with
/// `1 + tolerance`.
pub fn check_decay_bound(run: &RunResult, rate: f64, tolerance: f64) -> BoundReport {
    let tr = &run.trajectory;
    let l0 = tr.losses.first().copied().unwrap_or(0.0);
    let worst = if l0 > 0.0 {
        tr.times
            .iter()
            .zip(&tr.losses)
            .map(|(t, l)| l / ((-rate * t).exp() * l0))
            .fold(0.0f64, f64::max)
    } else {
        0.0
    };
    BoundReport {
        bound_name: "loss-decay",
        theoretical_value: 1.0 + tolerance,
        empirical_value: worst,
        satisfied: worst <= 1.0 + tolerance,
        context: BoundContext::of_run(run, None),
        detail: format!("rate={rate:e} records={}", tr.len()),
    }
}

/// Smallest applicable prediction for the input-weight relative change:
/// `log m/(mκ)` when `γ < 1` and `κ′ log m/(mκ)` when `γ′ > γ − 1`.
/// `None` outside the linear regime.
pub fn predicted_rd_w(m: usize, kappa: f64, kappa_prime: f64, coords: PhaseCoordinates) -> Option<f64> {
    let base = (m as f64).ln() / (m as f64 * kappa);
    let mut best: Option<f64> = None;
    if coords.gamma < 1.0 {
        best = Some(base);
    }
    if coords.gamma_prime > coords.gamma - 1.0 {
        let v = kappa_prime * base;
        best = Some(best.map_or(v, |b| b.min(v)));
    }
    best
}

/// `sup RD(θ_w) / predicted` for each run. Satisfied iff every ratio is at
/// most `constant` and the ratio does not grow with the width.
pub fn check_rd_bounds(runs: &[&RunResult], coords: PhaseCoordinates, constant: f64) -> Result<BoundReport> {
    if runs.is_empty() {
        return Err(Error::Empty("run list"));
    }
    let mut sorted: Vec<&RunResult> = runs.to_vec();
    sorted.sort_by_key(|r| r.initial_params.m());
    let mut ratios = Vec::with_capacity(sorted.len());
    for r in &sorted {
        let m = r.initial_params.m();
        match predicted_rd_w(m, r.kappa, r.kappa_prime, coords) {
            Some(p) => ratios.push((m, r.sup_rd_w / p, p)),
            None => {
                return Ok(BoundReport {
                    bound_name: "rd-w",
                    theoretical_value: f64::NAN,
                    empirical_value: r.sup_rd_w,
                    satisfied: false,
                    context: BoundContext::of_run(r, None),
                    detail: format!(
                        "no linear-regime prediction at gamma={} gamma'={}",
                        coords.gamma, coords.gamma_prime
                    ),
                })
            }
        }
    }
    let bounded = ratios.iter().all(|(_, q, _)| *q <= constant);
    let shrinking = ratios.windows(2).all(|w| w[1].1 <= w[0].1);
    let last = sorted.last().expect("non-empty");
    let detail = ratios
        .iter()
        .map(|(m, q, _)| format!("m={m}: ratio {q:.4}"))
        .collect::<Vec<_>>()
        .join("; ");
    Ok(BoundReport {
        bound_name: "rd-w",
        theoretical_value: constant,
        empirical_value: ratios.last().expect("non-empty").1,
        satisfied: bounded && shrinking,
        context: BoundContext::of_run(last, None),
        detail,
    })
}

/// Condensed-regime counterpart of [`check_rd_bounds`]: `sup RD(θ_w)` must
/// grow with the width.
pub fn check_rd_growth(runs: &[&RunResult]) -> Result<BoundReport> {
    if runs.len() < 2 {
        return Err(Error::Empty("width pair"));
    }
    let mut sorted: Vec<&RunResult> = runs.to_vec();
    sorted.sort_by_key(|r| r.initial_params.m());
    let growing = sorted.windows(2).all(|w| w[1].sup_rd_w > w[0].sup_rd_w);
    let first = sorted[0];
    let last = sorted[sorted.len() - 1];
    Ok(BoundReport {
        bound_name: "rd-w-growth",
        theoretical_value: first.sup_rd_w,
        empirical_value: last.sup_rd_w,
        satisfied: growing,
        context: BoundContext::of_run(last, None),
        detail: sorted
            .iter()
            .map(|r| format!("m={}: {:.4}", r.initial_params.m(), r.sup_rd_w))
            .collect::<Vec<_>>()
            .join("; "),
    })
}

/// Largest `|a_k| − ‖w_k‖/κ′ − |a_k⁰|` over the neurons of `current`.
fn neuron_excess(current: &NetworkParams, initial: &NetworkParams, kappa_prime: f64) -> f64 {
    (0..current.m())
        .map(|k| {
            let nw = current.row(k).iter().map(|v| v * v).sum::<f64>().sqrt();
            current.a[k].abs() - nw / kappa_prime - initial.a[k].abs()
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Slack allowed by a balancedness residual of at most
/// `tolerance · max_k(‖w_k‖² + 1)`.
fn neuron_slack(current: &NetworkParams, kappa_prime: f64, tolerance: f64) -> f64 {
    let scale = current
        .rows()
        .map(|w| w.iter().map(|v| v * v).sum::<f64>() + 1.0)
        .fold(0.0f64, f64::max);
    (tolerance * scale).sqrt() / kappa_prime
}

/// `|a_k| ≤ ‖w_k‖/κ′ + |a_k⁰|` at the start, every snapshot and the end of
/// `run`. Integration error is allowed for through a scale-normalized
/// balancedness residual of up to `residual_tolerance`.
pub fn check_neuron_bound(run: &RunResult, kappa_prime: f64, residual_tolerance: f64) -> Result<BoundReport> {
    if !(kappa_prime > 0.0) {
        return Err(Error::InvalidConfig(format!("κ′ must be positive, got {kappa_prime}")));
    }
    if !(residual_tolerance >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "residual tolerance must be ≥ 0, got {residual_tolerance}"
        )));
    }
    let init = &run.initial_params;
    let states = std::iter::once(init)
        .chain(run.snapshots.iter().map(|s| &s.params))
        .chain(std::iter::once(&run.final_params));
    let mut worst = f64::NEG_INFINITY;
    let mut slack = 0.0f64;
    let mut ok = true;
    let mut count = 0;
    for p in states {
        if !p.same_shape(init) {
            return Err(Error::DimensionMismatch {
                context: "neuron bound",
                expected: init.m(),
                actual: p.m(),
            });
        }
        let e = neuron_excess(p, init, kappa_prime);
        let s = neuron_slack(p, kappa_prime, residual_tolerance);
        worst = worst.max(e);
        slack = slack.max(s);
        ok &= e <= s;
        count += 1;
    }
    Ok(BoundReport {
        bound_name: "neuron-amplitude",
        theoretical_value: slack,
        empirical_value: worst,
        satisfied: ok,
        context: BoundContext::of_run(run, None),
        detail: format!("states={count} residual_tolerance={residual_tolerance:e}"),
    })
}

/// With ASI the initial output vanishes, so `R(θ⁰) = Σy²/(2n) ≤ ½` for
/// targets in `[−1, 1]`.
pub fn check_initial_risk(params0: &NetworkParams, kappa: f64, dataset: &Dataset) -> Result<BoundReport> {
    let r0 = empirical_risk(params0, kappa, dataset)?;
    let expected = dataset.targets().iter().map(|y| y * y).sum::<f64>() / (2.0 * dataset.n() as f64);
    let matches = (r0 - expected).abs() <= 1e-12 * (1.0 + expected);
    Ok(BoundReport {
        bound_name: "initial-risk",
        theoretical_value: expected,
        empirical_value: r0,
        satisfied: matches && r0 <= 0.5,
        context: BoundContext {
            n: Some(dataset.n()),
            kappa: Some(kappa),
            ..BoundContext::of_params(params0)
        },
        detail: String::new(),
    })
}

/// Width precondition of the linear-regime statements. Its constants are not
/// known numerically, so it is reported as a formula only.
pub fn width_precondition(n: usize, d: usize, lambda: f64, delta: f64) -> String {
    format!(
        "m >= 16 n^2 d^2 C_psi^2 / (C_0 lambda^2) * log(4 n^2 / delta) with n={n}, d={d}, lambda={lambda:e}, delta={delta}; \
         log factor {:.4}, lambda^-2 {:.4e}",
        (4.0 * (n * n) as f64 / delta).ln(),
        1.0 / (lambda * lambda)
    )
}

/// Evaluates `check` for every seed on a pool of `jobs` threads and returns
/// the reports in seed order.
pub fn run_ensemble<F>(seeds: &[u64], jobs: usize, check: F) -> Result<Vec<BoundReport>>
where
    F: Fn(u64) -> Result<BoundReport> + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    pool.install(|| seeds.par_iter().map(|&s| check(s).map(|r| r.with_seed(s))).collect())
}

pub fn pass_rate(reports: &[BoundReport]) -> f64 {
    if reports.is_empty() {
        return f64::NAN;
    }
    reports.iter().filter(|r| r.satisfied).count() as f64 / reports.len() as f64
}
