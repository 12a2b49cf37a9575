//! Explicit-Euler gradient flow with monotone step acceptance.
//!
//! The normalized flow is `θ̇ = −M_κ′ ∇R` with `M_κ′ = diag(1/κ′, κ′ I_d)`
//! per neuron. A step of size `h` is accepted iff the risk does not
//! increase; otherwise `h` is halved and the step retried. Ten accepted
//! steps in a row double `h` up to a cap. Times are always reported in
//! normalized units, also when the original (unnormalized) model is
//! integrated.

use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::kernels::gram_finite;
use crate::linalg::min_eigenvalue;
use crate::network::{
    gradient, init_params, to_original, velocity_into, Evaluation, GradientPair, InitConfig, NetworkParams,
};
use crate::scaling::ScalingSpec;

/// Consecutive accepted steps before the step size doubles.
pub const GROWTH_STREAK: usize = 10;
/// Default cap on the step size as a multiple of the initial step.
pub const DEFAULT_CAP_FACTOR: f64 = 1024.0;
/// Steps below `initial_step * UNDERFLOW_FACTOR` mean divergence.
pub const UNDERFLOW_FACTOR: f64 = 1.0 / (1u64 << 40) as f64;

#[derive(Debug, Clone, PartialEq)]
pub struct FlowConfig {
    /// Initial step in normalized time; `None` derives it from the Gram
    /// spectrum at initialization (see [`auto_initial_step`]).
    pub initial_step: Option<f64>,
    pub max_time: f64,
    /// Absolute risk threshold.
    pub risk_tolerance: f64,
    pub record_stride: usize,
    pub max_steps: usize,
    /// With `false` every step has the initial size and is accepted.
    pub adaptive: bool,
    /// Step cap; `None` means `initial_step × 2¹⁰`.
    pub max_step: Option<f64>,
    /// Keep a full parameter snapshot every this many accepted steps
    /// (0 keeps none). The initial and final states are always available
    /// on the [`RunResult`].
    pub snapshot_stride: usize,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            initial_step: None,
            max_time: f64::INFINITY,
            risk_tolerance: 0.0,
            record_stride: 1,
            max_steps: 200_000,
            adaptive: true,
            max_step: None,
            snapshot_stride: 0,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if let Some(h) = self.initial_step {
            if !(h > 0.0 && h.is_finite()) {
                return bad(format!("initial_step must be positive, got {h}"));
            }
            if !(h < self.max_time) {
                return bad(format!("initial_step {h} must be below max_time {}", self.max_time));
            }
        }
        if !(self.max_time > 0.0) {
            return bad(format!("max_time must be positive, got {}", self.max_time));
        }
        if !(self.risk_tolerance >= 0.0) {
            return bad(format!("risk_tolerance must be ≥ 0, got {}", self.risk_tolerance));
        }
        if self.record_stride == 0 || self.max_steps == 0 {
            return bad("record_stride and max_steps must be ≥ 1".into());
        }
        if let Some(cap) = self.max_step {
            if !(cap > 0.0) {
                return bad(format!("max_step must be positive, got {cap}"));
            }
        }
        Ok(())
    }
}

/// Risk threshold matching the well-trained condition `R ≤ 1/(32n)`, never
/// looser than six orders of magnitude below the initial risk.
pub fn theory_risk_tolerance(initial_risk: f64, n: usize) -> f64 {
    (initial_risk * 1e-6).max(1.0 / (32.0 * n as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StopReason {
    RiskTolerance,
    MaxTime,
    MaxSteps,
    Diverged,
}

impl StopReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            StopReason::RiskTolerance => "risk-tolerance",
            StopReason::MaxTime => "max-time",
            StopReason::MaxSteps => "max-steps",
            StopReason::Diverged => "diverged",
        }
    }
}

impl std::str::FromStr for StopReason {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "risk-tolerance" => Ok(StopReason::RiskTolerance),
            "max-time" => Ok(StopReason::MaxTime),
            "max-steps" => Ok(StopReason::MaxSteps),
            "diverged" => Ok(StopReason::Diverged),
            other => Err(Error::Parse(format!("unknown stop reason `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    W,
    A,
    Theta,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub losses: Vec<f64>,
    pub rd_w: Vec<f64>,
    pub rd_theta: Vec<f64>,
    pub rd_a: Vec<f64>,
    pub alpha_max: Vec<f64>,
    pub omega_max: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,loss,rd_w,rd_theta,rd_a,alpha_max,omega_max\n");
        for i in 0..self.len() {
            out.push_str(&format!(
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                self.times[i],
                self.losses[i],
                self.rd_w[i],
                self.rd_theta[i],
                self.rd_a[i],
                self.alpha_max[i],
                self.omega_max[i]
            ));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub time: f64,
    pub params: NetworkParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub initial_params: NetworkParams,
    pub final_params: NetworkParams,
    pub trajectory: Trajectory,
    pub sup_rd_w: f64,
    pub sup_rd_theta: f64,
    pub sup_rd_a: f64,
    pub stop_reason: StopReason,
    pub kappa: f64,
    pub kappa_prime: f64,
    pub initial_step: f64,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub snapshots: Vec<Snapshot>,
}

impl RunResult {
    pub fn initial_risk(&self) -> f64 {
        self.trajectory.losses[0]
    }

    pub fn final_risk(&self) -> f64 {
        *self
            .trajectory
            .losses
            .last()
            .expect("trajectory has the initial record")
    }
}

fn block_deviation(cur: &[f64], init: &[f64], sc: f64) -> (f64, f64) {
    let mut num = 0.0;
    let mut den = 0.0;
    for (c, i) in cur.iter().zip(init) {
        let diff = sc * (c - i);
        num += diff * diff;
        den += sc * sc * i * i;
    }
    (num, den)
}

/// `‖block(current) − block(initial)‖₂ / ‖block(initial)‖₂`.
pub fn relative_deviation(current: &NetworkParams, initial: &NetworkParams, block: Block) -> Result<f64> {
    if !current.same_shape(initial) {
        return Err(Error::DimensionMismatch {
            context: "relative deviation",
            expected: initial.m() * (initial.d() + 1),
            actual: current.m() * (current.d() + 1),
        });
    }
    let (na, da) = block_deviation(&current.a, &initial.a, 1.0);
    let (nw, dw) = block_deviation(&current.w, &initial.w, 1.0);
    let (num, den) = match block {
        Block::A => (na, da),
        Block::W => (nw, dw),
        Block::Theta => (na + nw, da + dw),
    };
    if den == 0.0 {
        return Err(Error::ZeroNorm("initial parameter block"));
    }
    Ok((num / den).sqrt())
}

/// `max_k |κ′²(a_k² − a_k⁰²) − (‖w_k‖² − ‖w_k⁰‖²)|`; zero along the exact
/// flow.
pub fn balancedness_residual(current: &NetworkParams, initial: &NetworkParams, kappa_prime: f64) -> f64 {
    neuron_balance(current, initial, kappa_prime).fold(0.0, |acc, r| acc.max(r.abs()))
}

fn neuron_balance<'a>(
    current: &'a NetworkParams,
    initial: &'a NetworkParams,
    kappa_prime: f64,
) -> impl Iterator<Item = f64> + 'a {
    let kp2 = kappa_prime * kappa_prime;
    current
        .rows()
        .zip(initial.rows())
        .zip(current.a.iter().zip(&initial.a))
        .map(move |((w, w0), (a, a0))| {
            let dw: f64 = w.iter().map(|v| v * v).sum::<f64>() - w0.iter().map(|v| v * v).sum::<f64>();
            kp2 * (a * a - a0 * a0) - dw
        })
}

/// Residual divided by `max_k(‖w_k‖² + 1)`.
pub fn normalized_balancedness_residual(current: &NetworkParams, initial: &NetworkParams, kappa_prime: f64) -> f64 {
    let scale = current
        .rows()
        .map(|w| w.iter().map(|v| v * v).sum::<f64>() + 1.0)
        .fold(1.0, f64::max);
    balancedness_residual(current, initial, kappa_prime) / scale
}

/// Fraction of `‖θ₀‖` a single initial step may move the parameters.
pub const MAX_INITIAL_MOVE: f64 = 0.01;

/// `0.1 · n / (m κ² (λ̂_a/κ′ + κ′ λ̂_w))`, where `λ̂` are the smallest
/// eigenvalues of the normalized finite Gram matrices at `params`, so the
/// linearized decay time is resolved with at least ten steps. The result is
/// further capped so that the first step moves `θ` by at most 1% of `‖θ₀‖`;
/// for small κ the linearized rate badly overstates the usable step.
pub fn auto_initial_step(params: &NetworkParams, kappa: f64, kappa_prime: f64, dataset: &Dataset) -> Result<f64> {
    let g = gram_finite(params, kappa, kappa_prime, dataset)?;
    let la = min_eigenvalue(&g.normalized_a())?;
    let lw = min_eigenvalue(&g.normalized_w())?;
    let n = dataset.n() as f64;
    let m = params.m() as f64;
    let mut rate = m * kappa * kappa * (la.max(0.0) / kappa_prime + kappa_prime * lw.max(0.0)) / n;
    if !(rate > 0.0 && rate.is_finite()) {
        // Degenerate spectrum: the top eigenvalue still bounds stability.
        let top = crate::linalg::symmetric_eigenvalues(&g.g)?
            .last()
            .copied()
            .unwrap_or(0.0);
        rate = m * top / n;
    }
    let linear = if rate > 0.0 && rate.is_finite() {
        0.1 / rate
    } else {
        f64::INFINITY
    };

    let v = gradient(params, kappa, kappa_prime, dataset)?;
    let speed = v.da.iter().chain(&v.dw).map(|x| x * x).sum::<f64>().sqrt();
    let displacement = if speed > 0.0 {
        MAX_INITIAL_MOVE * params.theta_norm() / speed
    } else {
        f64::INFINITY
    };

    let h = linear.min(displacement);
    if h.is_finite() && h > 0.0 {
        Ok(h)
    } else {
        Err(Error::InvalidConfig(
            "cannot derive an initial step: zero Gram matrix and zero velocity".into(),
        ))
    }
}

/// A model integrated on its own parameter scale.
trait FlowModel {
    fn evaluate(&self, p: &NetworkParams, ds: &Dataset, ev: &mut Evaluation) -> Result<()>;
    fn velocity(&self, p: &NetworkParams, ev: &Evaluation, ds: &Dataset, out: &mut GradientPair);
    /// Factor multiplying `a_k Σ_i e_i σ′(z_ki) x_i / n` in the `ẇ_k` equation.
    fn w_scale(&self) -> f64;
    /// Native time units per unit of normalized time.
    fn time_scale(&self) -> f64;
    /// Multipliers taking `(a, W)` to normalized variables.
    fn to_normalized(&self) -> (f64, f64);
}

struct Normalized {
    kappa: f64,
    kappa_prime: f64,
}

impl FlowModel for Normalized {
    fn evaluate(&self, p: &NetworkParams, ds: &Dataset, ev: &mut Evaluation) -> Result<()> {
        ev.update(p, self.kappa, ds)
    }
    fn velocity(&self, p: &NetworkParams, ev: &Evaluation, ds: &Dataset, out: &mut GradientPair) {
        velocity_into(
            p,
            ev,
            ds,
            self.kappa / self.kappa_prime,
            self.kappa * self.kappa_prime,
            out,
        );
    }
    fn w_scale(&self) -> f64 {
        self.kappa * self.kappa_prime
    }
    fn time_scale(&self) -> f64 {
        1.0
    }
    fn to_normalized(&self) -> (f64, f64) {
        (1.0, 1.0)
    }
}

struct Original {
    inv_alpha: f64,
    beta1: f64,
    beta2: f64,
}

impl FlowModel for Original {
    fn evaluate(&self, p: &NetworkParams, ds: &Dataset, ev: &mut Evaluation) -> Result<()> {
        ev.update(p, self.inv_alpha, ds)
    }
    fn velocity(&self, p: &NetworkParams, ev: &Evaluation, ds: &Dataset, out: &mut GradientPair) {
        velocity_into(p, ev, ds, self.inv_alpha, self.inv_alpha, out);
    }
    fn w_scale(&self) -> f64 {
        self.inv_alpha
    }
    fn time_scale(&self) -> f64 {
        self.beta1 * self.beta2
    }
    fn to_normalized(&self) -> (f64, f64) {
        (1.0 / self.beta1, 1.0 / self.beta2)
    }
}

/// A neuron/sample pair whose one-sided velocities both push `z_ki` into
/// the kink at zero.
#[derive(Debug, Clone, Copy)]
struct Kink {
    k: usize,
    i: usize,
    /// `|z_ki|`, and the rate at which the current velocity closes it.
    gap: f64,
    closing: f64,
    /// Multiple of `x_i` added to `ẇ_k` to make `ż_ki = 0`.
    shift: f64,
}

/// Finds the pairs in sliding configuration. Across such a kink the risk
/// rises along the gradient direction of either side, so an Euler step that
/// crosses it is rejected for every step size and the integration stalls.
fn find_kinks(p: &NetworkParams, ev: &Evaluation, ds: &Dataset, w_scale: f64, vel: &GradientPair, out: &mut Vec<Kink>) {
    out.clear();
    let (m, d) = (p.m(), p.d());
    let inv_n = 1.0 / ds.n() as f64;
    for (i, x) in ds.inputs().chunks_exact(d).enumerate() {
        let xx: f64 = x.iter().map(|v| v * v).sum();
        let c_i = -w_scale * inv_n * ev.residuals[i];
        for k in 0..m {
            let z = ev.pre[i * m + k];
            let dw = &vel.dw[k * d..(k + 1) * d];
            let zdot: f64 = dw.iter().zip(x).map(|(g, xj)| g * xj).sum();
            // Δ = ẇ⁺ − ẇ⁻, the contribution of sample i while it is active.
            let dz = c_i * p.a[k] * xx;
            let (zp, zm) = if z > 0.0 { (zdot, zdot - dz) } else { (zdot + dz, zdot) };
            if zp < 0.0 && zm > 0.0 {
                out.push(Kink {
                    k,
                    i,
                    gap: z.abs(),
                    closing: zdot.abs(),
                    shift: -zdot / xx,
                });
            }
        }
    }
}

/// Copies `vel` into `out` and replaces `ẇ_k` by the sliding (Filippov)
/// velocity for every kink the step `h` would otherwise cross. The change is
/// a multiple of `x_i` and `|w_k·x_i| ≤ h|ż_ki|`, so balancedness is only
/// disturbed at the same `O(h²)` order as the Euler step itself.
fn apply_kinks(vel: &GradientPair, kinks: &[Kink], ds: &Dataset, h: f64, out: &mut GradientPair) {
    let d = ds.d();
    out.da.clone_from(&vel.da);
    out.dw.clone_from(&vel.dw);
    for kink in kinks.iter().filter(|kk| kk.gap <= h * kk.closing) {
        let x = ds.input(kink.i);
        for (g, xj) in out.dw[kink.k * d..(kink.k + 1) * d].iter_mut().zip(x) {
            *g += kink.shift * xj;
        }
    }
}

struct Recorder<'a> {
    init: &'a NetworkParams,
    scales: (f64, f64),
    den_a: f64,
    den_w: f64,
    alpha_max: f64,
    omega_max: f64,
    traj: Trajectory,
}

impl<'a> Recorder<'a> {
    fn new(init: &'a NetworkParams, scales: (f64, f64)) -> Self {
        let (_, den_a) = block_deviation(&init.a, &init.a, scales.0);
        let (_, den_w) = block_deviation(&init.w, &init.w, scales.1);
        Self {
            init,
            scales,
            den_a,
            den_w,
            alpha_max: 0.0,
            omega_max: 0.0,
            traj: Trajectory::default(),
        }
    }

    fn observe(&mut self, p: &NetworkParams) {
        let am = p.a.iter().fold(0.0f64, |m, v| m.max(v.abs())) * self.scales.0;
        let wm = p.w.iter().fold(0.0f64, |m, v| m.max(v.abs())) * self.scales.1;
        self.alpha_max = self.alpha_max.max(am);
        self.omega_max = self.omega_max.max(wm);
    }

    fn record(&mut self, t: f64, loss: f64, p: &NetworkParams) {
        let (na, _) = block_deviation(&p.a, &self.init.a, self.scales.0);
        let (nw, _) = block_deviation(&p.w, &self.init.w, self.scales.1);
        let ratio = |num: f64, den: f64| if den > 0.0 { (num / den).sqrt() } else { 0.0 };
        let t_ = &mut self.traj;
        t_.times.push(t);
        t_.losses.push(loss);
        t_.rd_a.push(ratio(na, self.den_a));
        t_.rd_w.push(ratio(nw, self.den_w));
        t_.rd_theta.push(ratio(na + nw, self.den_a + self.den_w));
        t_.alpha_max.push(self.alpha_max);
        t_.omega_max.push(self.omega_max);
    }
}

fn series_max(v: &[f64]) -> f64 {
    v.iter().copied().fold(0.0, f64::max)
}

#[allow(clippy::too_many_arguments)]
fn run<M: FlowModel>(
    model: &M,
    params0: NetworkParams,
    dataset: &Dataset,
    config: &FlowConfig,
    initial_step: f64,
    kappa: f64,
    kappa_prime: f64,
) -> Result<RunResult> {
    config.validate()?;
    if !(initial_step > 0.0 && initial_step.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "initial step must be positive, got {initial_step}"
        )));
    }
    let scales = model.to_normalized();
    let ts = model.time_scale();
    let normalize = |p: &NetworkParams| {
        if scales == (1.0, 1.0) {
            p.clone()
        } else {
            p.scaled(scales.0, scales.1)
        }
    };
    let cap = config.max_step.unwrap_or(initial_step * DEFAULT_CAP_FACTOR);
    let floor = initial_step * UNDERFLOW_FACTOR;

    let (m, d) = (params0.m(), params0.d());
    let mut theta = params0.clone();
    let mut cand = params0.clone();
    let mut ev = Evaluation::default();
    let mut cand_ev = Evaluation::default();
    let mut vel = GradientPair::zeros(m, d);
    let mut step_vel = GradientPair::zeros(m, d);
    let mut kinks = Vec::new();
    model.evaluate(&theta, dataset, &mut ev)?;

    let mut rec = Recorder::new(&params0, scales);
    rec.observe(&theta);
    rec.record(0.0, ev.risk, &theta);
    let mut snapshots = Vec::new();
    if config.snapshot_stride > 0 {
        snapshots.push(Snapshot {
            time: 0.0,
            params: normalize(&theta),
        });
    }

    let mut t = 0.0;
    let mut h = initial_step.min(cap);
    let mut streak = 0;
    let mut accepted = 0usize;
    let mut rejected = 0usize;
    let mut last_recorded = 0usize;
    let mut last_snapshot = 0usize;
    let mut vel_fresh = false;

    let stop = loop {
        if !ev.risk.is_finite() {
            break StopReason::Diverged;
        }
        if ev.risk <= config.risk_tolerance {
            break StopReason::RiskTolerance;
        }
        if t >= config.max_time {
            break StopReason::MaxTime;
        }
        if accepted >= config.max_steps {
            break StopReason::MaxSteps;
        }
        if !vel_fresh {
            model.velocity(&theta, &ev, dataset, &mut vel);
            find_kinks(&theta, &ev, dataset, model.w_scale(), &vel, &mut kinks);
            if !vel.is_finite() {
                break StopReason::Diverged;
            }
            vel_fresh = true;
        }
        let step = h.min(config.max_time - t);
        let native = step * ts;
        let vel = if kinks.is_empty() {
            &vel
        } else {
            apply_kinks(&vel, &kinks, dataset, native, &mut step_vel);
            &step_vel
        };
        for ((c, p), v) in cand.a.iter_mut().zip(&theta.a).zip(&vel.da) {
            *c = p + native * v;
        }
        for ((c, p), v) in cand.w.iter_mut().zip(&theta.w).zip(&vel.dw) {
            *c = p + native * v;
        }
        model.evaluate(&cand, dataset, &mut cand_ev)?;

        if config.adaptive && !(cand_ev.risk <= ev.risk) {
            rejected += 1;
            streak = 0;
            h *= 0.5;
            if h < floor {
                break StopReason::Diverged;
            }
            continue;
        }
        if !config.adaptive && !cand_ev.risk.is_finite() {
            break StopReason::Diverged;
        }

        std::mem::swap(&mut theta, &mut cand);
        std::mem::swap(&mut ev, &mut cand_ev);
        vel_fresh = false;
        accepted += 1;
        t = if config.max_time - t <= h {
            config.max_time
        } else {
            t + step
        };
        rec.observe(&theta);
        if accepted % config.record_stride == 0 {
            rec.record(t, ev.risk, &theta);
            last_recorded = accepted;
        }
        if config.snapshot_stride > 0 && accepted % config.snapshot_stride == 0 {
            snapshots.push(Snapshot {
                time: t,
                params: normalize(&theta),
            });
            last_snapshot = accepted;
        }
        if config.adaptive {
            streak += 1;
            if streak == GROWTH_STREAK {
                streak = 0;
                h = (2.0 * h).min(cap);
            }
        }
    };

    if last_recorded != accepted {
        rec.record(t, ev.risk, &theta);
    }
    let final_params = normalize(&theta);
    if config.snapshot_stride > 0 && last_snapshot != accepted {
        snapshots.push(Snapshot {
            time: t,
            params: final_params.clone(),
        });
    }
    let traj = rec.traj;
    Ok(RunResult {
        initial_params: normalize(&params0),
        final_params,
        sup_rd_w: series_max(&traj.rd_w),
        sup_rd_theta: series_max(&traj.rd_theta),
        sup_rd_a: series_max(&traj.rd_a),
        trajectory: traj,
        stop_reason: stop,
        kappa,
        kappa_prime,
        initial_step,
        accepted_steps: accepted,
        rejected_steps: rejected,
        snapshots,
    })
}

/// Integrates the normalized model from `params0`.
pub fn integrate(
    params0: &NetworkParams,
    kappa: f64,
    kappa_prime: f64,
    dataset: &Dataset,
    config: &FlowConfig,
) -> Result<RunResult> {
    if !(kappa > 0.0 && kappa_prime > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "κ and κ′ must be positive, got {kappa}, {kappa_prime}"
        )));
    }
    if params0.d() != dataset.d() {
        return Err(Error::DimensionMismatch {
            context: "integrate",
            expected: params0.d(),
            actual: dataset.d(),
        });
    }
    let h0 = match config.initial_step {
        Some(h) => h,
        None => auto_initial_step(params0, kappa, kappa_prime, dataset)?,
    };
    run(
        &Normalized { kappa, kappa_prime },
        params0.clone(),
        dataset,
        config,
        h0,
        kappa,
        kappa_prime,
    )
}

/// Integrates the original model `θ̇ = −∇R` in raw variables, starting from
/// the β-scaled draw of `init`, and reports everything in normalized
/// variables and normalized time `t̄ = t/(β₁β₂)`.
pub fn simulate_original(
    spec: &ScalingSpec,
    init: &InitConfig,
    dataset: &Dataset,
    config: &FlowConfig,
) -> Result<RunResult> {
    let normalized0 = init_params(init)?;
    let m = normalized0.m();
    let (kappa, kappa_prime) = spec.realize(m);
    let h0 = match config.initial_step {
        Some(h) => h,
        None => auto_initial_step(&normalized0, kappa, kappa_prime, dataset)?,
    };
    let model = Original {
        inv_alpha: 1.0 / spec.alpha.value(m),
        beta1: spec.beta1.value(m),
        beta2: spec.beta2.value(m),
    };
    run(
        &model,
        to_original(spec, &normalized0),
        dataset,
        config,
        h0,
        kappa,
        kappa_prime,
    )
}
