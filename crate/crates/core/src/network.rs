//! The normalized two-layer ReLU model `κ Σ_k a_k σ(w_k·x)`.
//!
//! Parameters are stored as a length-`m` vector `a` and an `m × d` row-major
//! matrix `W` whose last column multiplies the bias coordinate.

use std::io::{Read, Write};

use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::rng::NormalStream;
use crate::scaling::ScalingSpec;

#[inline]
pub fn relu(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        0.0
    }
}

/// ReLU derivative with `σ′(0) = 0`.
#[inline]
pub fn relu_prime(z: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Pairwise summation in a fixed order, so results do not depend on how the
/// caller chunks work.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if v.len() <= BLOCK {
        v.iter().sum()
    } else {
        let mid = v.len() / 2;
        pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub a: Vec<f64>,
    pub w: Vec<f64>,
    m: usize,
    d: usize,
}

impl NetworkParams {
    pub fn new(a: Vec<f64>, w: Vec<f64>, d: usize) -> Result<Self> {
        let m = a.len();
        if m == 0 {
            return Err(Error::Empty("network"));
        }
        if w.len() != m * d {
            return Err(Error::DimensionMismatch {
                context: "input weight matrix",
                expected: m * d,
                actual: w.len(),
            });
        }
        Ok(Self { a, w, m, d })
    }

    pub fn zeros(m: usize, d: usize) -> Self {
        Self {
            a: vec![0.0; m],
            w: vec![0.0; m * d],
            m,
            d,
        }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.w[k * self.d..(k + 1) * self.d]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.w.chunks_exact(self.d)
    }

    pub fn is_finite(&self) -> bool {
        self.a.iter().chain(&self.w).all(|v| v.is_finite())
    }

    pub fn same_shape(&self, other: &NetworkParams) -> bool {
        self.m == other.m && self.d == other.d
    }

    /// Multiplies `a` by `sa` and `W` by `sw`.
    pub fn scaled(&self, sa: f64, sw: f64) -> NetworkParams {
        NetworkParams {
            a: self.a.iter().map(|v| v * sa).collect(),
            w: self.w.iter().map(|v| v * sw).collect(),
            m: self.m,
            d: self.d,
        }
    }

    pub fn theta_norm(&self) -> f64 {
        self.a.iter().chain(&self.w).map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `(‖θ‖₂, ‖θ_w‖₂, ‖θ_a‖₂)`.
    pub fn block_norms(&self) -> (f64, f64, f64) {
        let sa: f64 = self.a.iter().map(|v| v * v).sum();
        let sw: f64 = self.w.iter().map(|v| v * v).sum();
        ((sa + sw).sqrt(), sw.sqrt(), sa.sqrt())
    }

    /// Binary snapshot: magic `RPS1`, then little-endian `m: u64`, `d: u64`,
    /// `seed: u64`, `κ: f64`, `κ′: f64`, then `a` and row-major `W` as
    /// little-endian `f64`.
    pub fn write_snapshot<W: Write>(&self, mut out: W, header: SnapshotHeader) -> Result<()> {
        out.write_all(SNAPSHOT_MAGIC)?;
        out.write_all(&(self.m as u64).to_le_bytes())?;
        out.write_all(&(self.d as u64).to_le_bytes())?;
        out.write_all(&header.seed.to_le_bytes())?;
        out.write_all(&header.kappa.to_le_bytes())?;
        out.write_all(&header.kappa_prime.to_le_bytes())?;
        for v in self.a.iter().chain(&self.w) {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_snapshot<R: Read>(mut input: R) -> Result<(NetworkParams, SnapshotHeader)> {
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != SNAPSHOT_MAGIC {
            return Err(Error::Parse("not a parameter snapshot".into()));
        }
        let mut word = [0u8; 8];
        let mut next = |input: &mut R| -> Result<[u8; 8]> {
            input.read_exact(&mut word)?;
            Ok(word)
        };
        let m = u64::from_le_bytes(next(&mut input)?) as usize;
        let d = u64::from_le_bytes(next(&mut input)?) as usize;
        let seed = u64::from_le_bytes(next(&mut input)?);
        let kappa = f64::from_le_bytes(next(&mut input)?);
        let kappa_prime = f64::from_le_bytes(next(&mut input)?);
        let mut vals = Vec::with_capacity(m * (d + 1));
        for _ in 0..m * (d + 1) {
            vals.push(f64::from_le_bytes(next(&mut input)?));
        }
        let w = vals.split_off(m);
        Ok((
            NetworkParams::new(vals, w, d)?,
            SnapshotHeader {
                seed,
                kappa,
                kappa_prime,
            },
        ))
    }

    /// CSV with header `k,a,w1,...,wd`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,a");
        for j in 1..=self.d {
            out.push_str(&format!(",w{j}"));
        }
        out.push('\n');
        for (k, row) in self.rows().enumerate() {
            out.push_str(&format!("{k},{:.16e}", self.a[k]));
            for v in row {
                out.push_str(&format!(",{v:.16e}"));
            }
            out.push('\n');
        }
        out
    }
}

const SNAPSHOT_MAGIC: &[u8; 4] = b"RPS1";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnapshotHeader {
    pub seed: u64,
    pub kappa: f64,
    pub kappa_prime: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InitConfig {
    pub m: usize,
    pub d: usize,
    pub seed: u64,
    pub use_asi: bool,
}

/// Standard-normal initialization: `a` first, then `W` row by row, all from
/// one [`NormalStream`]. With `use_asi` the result has width `2m`.
pub fn init_params(config: &InitConfig) -> Result<NetworkParams> {
    if config.m == 0 || config.d < 2 {
        return Err(Error::InvalidConfig(format!(
            "init needs m ≥ 1 and d ≥ 2, got m={} d={}",
            config.m, config.d
        )));
    }
    let mut rng = NormalStream::new(config.seed);
    let mut a = vec![0.0; config.m];
    let mut w = vec![0.0; config.m * config.d];
    rng.fill_normal(&mut a);
    rng.fill_normal(&mut w);
    let params = NetworkParams::new(a, w, config.d)?;
    Ok(if config.use_asi { apply_asi(&params) } else { params })
}

/// Appends the mirror neuron `(−a_k, w_k)` for every `k`, so the network
/// output is identically zero.
pub fn apply_asi(params: &NetworkParams) -> NetworkParams {
    let mut a = params.a.clone();
    a.extend(params.a.iter().map(|v| -v));
    let mut w = params.w.clone();
    w.extend_from_slice(&params.w);
    NetworkParams {
        a,
        w,
        m: params.m * 2,
        d: params.d,
    }
}

fn check_dim(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch {
            context,
            expected,
            actual,
        });
    }
    Ok(())
}

pub fn forward(params: &NetworkParams, kappa: f64, x: &[f64]) -> Result<f64> {
    check_dim("forward input", params.d, x.len())?;
    let terms: Vec<f64> = params.rows().zip(&params.a).map(|(w, a)| a * relu(dot(w, x))).collect();
    Ok(kappa * pairwise_sum(&terms))
}

/// Original-model output `(1/α(m)) Σ a_k σ(w_k·x)` on raw (unnormalized)
/// parameters.
pub fn forward_original(spec: &ScalingSpec, raw: &NetworkParams, x: &[f64]) -> Result<f64> {
    forward(raw, 1.0 / spec.alpha.value(raw.m), x)
}

/// Maps normalized parameters to raw ones: `a = β₁ā`, `w = β₂w̄`.
pub fn to_original(spec: &ScalingSpec, params: &NetworkParams) -> NetworkParams {
    let m = params.m;
    params.scaled(spec.beta1.value(m), spec.beta2.value(m))
}

pub fn to_normalized(spec: &ScalingSpec, raw: &NetworkParams) -> NetworkParams {
    let m = raw.m;
    raw.scaled(1.0 / spec.beta1.value(m), 1.0 / spec.beta2.value(m))
}

/// Preactivations and residuals of one parameter state, laid out `n × m`
/// (sample-major) so the per-sample neuron sums are contiguous.
#[derive(Debug, Clone, Default)]
pub struct Evaluation {
    pub pre: Vec<f64>,
    pub residuals: Vec<f64>,
    pub risk: f64,
    terms: Vec<f64>,
}

impl Evaluation {
    pub fn compute(params: &NetworkParams, kappa: f64, dataset: &Dataset) -> Result<Self> {
        let mut ev = Evaluation::default();
        ev.update(params, kappa, dataset)?;
        Ok(ev)
    }

    pub fn update(&mut self, params: &NetworkParams, kappa: f64, dataset: &Dataset) -> Result<()> {
        check_dim("dataset input", params.d, dataset.d())?;
        let (m, n) = (params.m, dataset.n());
        self.pre.resize(n * m, 0.0);
        self.residuals.resize(n, 0.0);
        self.terms.resize(m, 0.0);
        for (i, (x, y)) in dataset.rows().enumerate() {
            let pre = &mut self.pre[i * m..(i + 1) * m];
            for ((z, w), (t, a)) in pre
                .iter_mut()
                .zip(params.rows())
                .zip(self.terms.iter_mut().zip(&params.a))
            {
                *z = dot(w, x);
                *t = a * relu(*z);
            }
            self.residuals[i] = kappa * pairwise_sum(&self.terms) - y;
        }
        let sq: Vec<f64> = self.residuals.iter().map(|e| e * e).collect();
        self.risk = pairwise_sum(&sq) / (2.0 * n as f64);
        Ok(())
    }
}

/// `e_i = κ f(x_i) − y_i`.
pub fn residuals(params: &NetworkParams, kappa: f64, dataset: &Dataset) -> Result<Vec<f64>> {
    Ok(Evaluation::compute(params, kappa, dataset)?.residuals)
}

/// `(1/2n) Σ e_i²`.
pub fn empirical_risk(params: &NetworkParams, kappa: f64, dataset: &Dataset) -> Result<f64> {
    Ok(Evaluation::compute(params, kappa, dataset)?.risk)
}

/// Time derivatives of the mobility-weighted flow `θ̇ = −M_κ′ ∇R`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientPair {
    pub da: Vec<f64>,
    pub dw: Vec<f64>,
}

impl GradientPair {
    pub fn zeros(m: usize, d: usize) -> Self {
        Self {
            da: vec![0.0; m],
            dw: vec![0.0; m * d],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.da.iter().chain(&self.dw).all(|v| v.is_finite())
    }
}

/// Fills `out` with the flow velocity at the state described by `ev`.
///
/// `scale_a` and `scale_w` multiply the two blocks; for the normalized model
/// they are `κ/κ′` and `κκ′`.
pub(crate) fn velocity_into(
    params: &NetworkParams,
    ev: &Evaluation,
    dataset: &Dataset,
    scale_a: f64,
    scale_w: f64,
    out: &mut GradientPair,
) {
    let (m, d, n) = (params.m, params.d, dataset.n());
    out.da.resize(m, 0.0);
    out.dw.resize(m * d, 0.0);
    let inv_n = 1.0 / n as f64;
    for k in 0..m {
        let mut sa = 0.0;
        let dwk = &mut out.dw[k * d..(k + 1) * d];
        dwk.iter_mut().for_each(|v| *v = 0.0);
        for (i, x) in dataset.inputs().chunks_exact(d).enumerate() {
            let z = ev.pre[i * m + k];
            if z > 0.0 {
                let e = ev.residuals[i];
                sa += e * z;
                for (g, xj) in dwk.iter_mut().zip(x) {
                    *g += e * xj;
                }
            }
        }
        out.da[k] = -scale_a * inv_n * sa;
        let c = -scale_w * inv_n * params.a[k];
        dwk.iter_mut().for_each(|v| *v *= c);
    }
}

/// `ȧ_k = −(κ/(κ′n)) Σ_i e_i σ(w_k·x_i)`,
/// `ẇ_k = −(κκ′/n) Σ_i e_i a_k σ′(w_k·x_i) x_i`.
pub fn gradient(params: &NetworkParams, kappa: f64, kappa_prime: f64, dataset: &Dataset) -> Result<GradientPair> {
    if !(kappa_prime > 0.0) {
        return Err(Error::InvalidConfig(format!("κ′ must be positive, got {kappa_prime}")));
    }
    let ev = Evaluation::compute(params, kappa, dataset)?;
    let mut out = GradientPair::zeros(params.m, params.d);
    velocity_into(params, &ev, dataset, kappa / kappa_prime, kappa * kappa_prime, &mut out);
    Ok(out)
}
