//! Limiting kernels of the gradient flow and their finite-width Gram
//! matrices.
//!
//! With `w ~ N(0, I)` and `a ~ N(0, 1)`:
//!
//! ```text
//! K^[a]_ij = E σ(w·x_i) σ(w·x_j)
//!          = ‖x_i‖‖x_j‖ (sin θ + (π − θ) cos θ) / 2π
//! K^[w]_ij = E a² σ′(w·x_i) σ′(w·x_j) x_i·x_j
//!          = x_i·x_j (π − θ) / 2π
//! ```
//!
//! where `θ` is the angle between `x_i` and `x_j`. The closed forms are the
//! first- and zeroth-order arc-cosine kernels; [`gram_limit_mc`] estimates
//! the same expectations by sampling and serves as their oracle.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{min_eigenvalue, SymMatrix};
use crate::network::{relu, NetworkParams};
use crate::rng::{derive_seed, NormalStream};

#[derive(Debug, Clone, PartialEq)]
pub struct GramPair {
    pub k_a: SymMatrix,
    pub k_w: SymMatrix,
    pub lambda_a: f64,
    pub lambda_w: f64,
    pub lambda: f64,
    /// Per-entry Monte Carlo standard errors; `None` for closed forms.
    pub std_err: Option<(SymMatrix, SymMatrix)>,
}

impl GramPair {
    fn from_matrices(k_a: SymMatrix, k_w: SymMatrix, std_err: Option<(SymMatrix, SymMatrix)>) -> Result<Self> {
        let lambda_a = min_eigenvalue(&k_a)?;
        let lambda_w = min_eigenvalue(&k_w)?;
        Ok(Self {
            k_a,
            k_w,
            lambda_a,
            lambda_w,
            lambda: lambda_a.min(lambda_w),
            std_err,
        })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Angle between two nonzero vectors, clamped into `[0, π]`.
fn angle(u: &[f64], v: &[f64]) -> (f64, f64, f64) {
    let nu = dot(u, u).sqrt();
    let nv = dot(v, v).sqrt();
    let c = (dot(u, v) / (nu * nv)).clamp(-1.0, 1.0);
    (c.acos(), nu, nv)
}

/// `(k^[a], k^[w])` for one pair of inputs.
pub fn arc_cosine_pair(u: &[f64], v: &[f64]) -> (f64, f64) {
    let (theta, nu, nv) = angle(u, v);
    let ka = nu * nv * (theta.sin() + (PI - theta) * theta.cos()) / (2.0 * PI);
    let kw = dot(u, v) * (PI - theta) / (2.0 * PI);
    (ka, kw)
}

pub fn gram_limit_closed(dataset: &Dataset) -> Result<GramPair> {
    let n = dataset.n();
    if (0..n).any(|i| dataset.input(i).iter().all(|&v| v == 0.0)) {
        return Err(Error::ZeroNorm("input vector"));
    }
    let mut k_a = SymMatrix::zeros(n);
    let mut k_w = SymMatrix::zeros(n);
    for i in 0..n {
        for j in i..n {
            let (ka, kw) = if i == j {
                let sq = dot(dataset.input(i), dataset.input(i));
                (sq / 2.0, sq / 2.0)
            } else {
                arc_cosine_pair(dataset.input(i), dataset.input(j))
            };
            k_a.set(i, j, ka);
            k_a.set(j, i, ka);
            k_w.set(i, j, kw);
            k_w.set(j, i, kw);
        }
    }
    GramPair::from_matrices(k_a, k_w, None)
}

const MC_CHUNK: usize = 1 << 15;

struct Moments {
    sum_a: Vec<f64>,
    sq_a: Vec<f64>,
    sum_w: Vec<f64>,
    sq_w: Vec<f64>,
}

impl Moments {
    fn zeros(len: usize) -> Self {
        Self {
            sum_a: vec![0.0; len],
            sq_a: vec![0.0; len],
            sum_w: vec![0.0; len],
            sq_w: vec![0.0; len],
        }
    }

    fn merge(mut self, other: &Moments) -> Self {
        for (dst, src) in [
            (&mut self.sum_a, &other.sum_a),
            (&mut self.sq_a, &other.sq_a),
            (&mut self.sum_w, &other.sum_w),
            (&mut self.sq_w, &other.sq_w),
        ] {
            dst.iter_mut().zip(src).for_each(|(a, b)| *a += b);
        }
        self
    }
}

/// Monte Carlo estimate of `K^[a]` and `K^[w]` with per-entry standard
/// errors.
///
/// Samples are split into chunks of 2¹⁵ draws; chunk `c` uses the stream
/// seeded by `derive_seed(seed, [c])` and chunk sums are merged in chunk
/// order, so the estimate does not depend on the thread count.
pub fn gram_limit_mc(dataset: &Dataset, sample_count: usize, seed: u64) -> Result<GramPair> {
    if sample_count == 0 {
        return Err(Error::InvalidConfig("sample_count must be ≥ 1".into()));
    }
    let (n, d) = (dataset.n(), dataset.d());
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
    let dots: Vec<f64> = pairs
        .iter()
        .map(|&(i, j)| dot(dataset.input(i), dataset.input(j)))
        .collect();
    let chunks = sample_count.div_ceil(MC_CHUNK);

    let partials: Vec<Moments> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let len = MC_CHUNK.min(sample_count - c * MC_CHUNK);
            let mut rng = NormalStream::new(derive_seed(seed, &[c as u64]));
            let mut acc = Moments::zeros(pairs.len());
            let mut w = vec![0.0; d];
            let mut pre = vec![0.0; n];
            for _ in 0..len {
                let a = rng.normal();
                rng.fill_normal(&mut w);
                for (i, z) in pre.iter_mut().enumerate() {
                    *z = dot(&w, dataset.input(i));
                }
                let a2 = a * a;
                for (p, &(i, j)) in pairs.iter().enumerate() {
                    let fa = relu(pre[i]) * relu(pre[j]);
                    let fw = if pre[i] > 0.0 && pre[j] > 0.0 {
                        a2 * dots[p]
                    } else {
                        0.0
                    };
                    acc.sum_a[p] += fa;
                    acc.sq_a[p] += fa * fa;
                    acc.sum_w[p] += fw;
                    acc.sq_w[p] += fw * fw;
                }
            }
            acc
        })
        .collect();
    let total = partials.iter().fold(Moments::zeros(pairs.len()), |acc, p| acc.merge(p));

    let s = sample_count as f64;
    let stats = |sum: f64, sq: f64| {
        let mean = sum / s;
        let var = if sample_count > 1 {
            ((sq / s - mean * mean) * s / (s - 1.0)).max(0.0)
        } else {
            0.0
        };
        (mean, (var / s).sqrt())
    };
    let mut k_a = SymMatrix::zeros(n);
    let mut k_w = SymMatrix::zeros(n);
    let mut se_a = SymMatrix::zeros(n);
    let mut se_w = SymMatrix::zeros(n);
    for (p, &(i, j)) in pairs.iter().enumerate() {
        let (ma, ea) = stats(total.sum_a[p], total.sq_a[p]);
        let (mw, ew) = stats(total.sum_w[p], total.sq_w[p]);
        for (mat, v) in [(&mut k_a, ma), (&mut k_w, mw), (&mut se_a, ea), (&mut se_w, ew)] {
            mat.set(i, j, v);
            mat.set(j, i, v);
        }
    }
    GramPair::from_matrices(k_a, k_w, Some((se_a, se_w)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiniteGram {
    pub g_a: SymMatrix,
    pub g_w: SymMatrix,
    pub g: SymMatrix,
    pub kappa: f64,
    pub kappa_prime: f64,
    pub m: usize,
}

impl FiniteGram {
    /// `(κ′/κ²) G^[a]`, which concentrates on `K^[a]`.
    pub fn normalized_a(&self) -> SymMatrix {
        self.g_a.scale(self.kappa_prime / (self.kappa * self.kappa))
    }

    /// `G^[w] / (κ²κ′)`, which concentrates on `K^[w]`.
    pub fn normalized_w(&self) -> SymMatrix {
        self.g_w.scale(1.0 / (self.kappa * self.kappa * self.kappa_prime))
    }
}

/// `G^[a]_ij = (κ²/(κ′m)) Σ_k σ(w_k·x_i)σ(w_k·x_j)`,
/// `G^[w]_ij = (κ²κ′/m) Σ_k a_k² σ′(w_k·x_i)σ′(w_k·x_j) x_i·x_j`.
pub fn gram_finite(params: &NetworkParams, kappa: f64, kappa_prime: f64, dataset: &Dataset) -> Result<FiniteGram> {
    if params.d() != dataset.d() {
        return Err(Error::DimensionMismatch {
            context: "Gram input",
            expected: params.d(),
            actual: dataset.d(),
        });
    }
    let (n, m) = (dataset.n(), params.m());
    let mut pre = vec![0.0; n * m];
    for i in 0..n {
        let x = dataset.input(i);
        for (k, w) in params.rows().enumerate() {
            pre[i * m + k] = dot(w, x);
        }
    }
    let mut g_a = SymMatrix::zeros(n);
    let mut g_w = SymMatrix::zeros(n);
    let ca = kappa * kappa / (kappa_prime * m as f64);
    let cw = kappa * kappa * kappa_prime / m as f64;
    for i in 0..n {
        for j in i..n {
            let (zi, zj) = (&pre[i * m..(i + 1) * m], &pre[j * m..(j + 1) * m]);
            let mut sa = 0.0;
            let mut sw = 0.0;
            for k in 0..m {
                if zi[k] > 0.0 && zj[k] > 0.0 {
                    sa += zi[k] * zj[k];
                    sw += params.a[k] * params.a[k];
                }
            }
            let va = ca * sa;
            let vw = cw * sw * dot(dataset.input(i), dataset.input(j));
            g_a.set(i, j, va);
            g_a.set(j, i, va);
            g_w.set(i, j, vw);
            g_w.set(j, i, vw);
        }
    }
    let g = g_a.add(&g_w);
    Ok(FiniteGram {
        g_a,
        g_w,
        g,
        kappa,
        kappa_prime,
        m,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayRates {
    /// `(mκ²/n)(λ_a/κ′ + κ′λ_w)`, the local-in-time rate.
    pub local: f64,
    /// `2mκ²λ/n` with `λ = min(λ_a, λ_w)`, the global linear-regime rate.
    pub linear: f64,
}

pub fn decay_rate(m: usize, kappa: f64, kappa_prime: f64, n: usize, lambda_a: f64, lambda_w: f64) -> DecayRates {
    let base = m as f64 * kappa * kappa / n as f64;
    DecayRates {
        local: base * (lambda_a / kappa_prime + kappa_prime * lambda_w),
        linear: 2.0 * base * lambda_a.min(lambda_w),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{default_1d, random_dataset};
    use crate::network::{init_params, InitConfig};
    use approx::assert_relative_eq;

    fn unit_pair(theta: f64) -> Dataset {
        Dataset::from_rows(vec![vec![1.0, 0.0], vec![theta.cos(), theta.sin()]], vec![0.0, 0.0]).unwrap()
    }

    #[test]
    fn closed_form_special_angles() {
        let g = gram_limit_closed(&unit_pair(0.0)).unwrap();
        assert_relative_eq!(g.k_a.get(0, 1), 0.5, max_relative = 1e-12);
        assert_relative_eq!(g.k_a.get(0, 0), 0.5);
        let g = gram_limit_closed(&unit_pair(PI / 2.0)).unwrap();
        assert_relative_eq!(g.k_a.get(0, 1), 1.0 / (2.0 * PI), max_relative = 1e-12);
        assert!(g.k_w.get(0, 1).abs() < 1e-16);
        let g = gram_limit_closed(&unit_pair(PI)).unwrap();
        assert!(g.k_a.get(0, 1).abs() < 1e-16);
        assert!(g.k_w.get(0, 1).abs() < 1e-16);
    }

    #[test]
    fn closed_form_rejects_zero_input() {
        let ds = Dataset::from_rows(vec![vec![0.0, 0.0], vec![1.0, 1.0]], vec![0.0, 1.0]).unwrap();
        assert!(matches!(gram_limit_closed(&ds), Err(Error::ZeroNorm(_))));
    }

    fn within(mc: &GramPair, exact: &GramPair, k: f64) -> bool {
        let (se_a, se_w) = mc.std_err.as_ref().unwrap();
        let n = mc.k_a.n();
        (0..n).all(|i| {
            (0..n).all(|j| {
                (mc.k_a.get(i, j) - exact.k_a.get(i, j)).abs() <= k * se_a.get(i, j)
                    && (mc.k_w.get(i, j) - exact.k_w.get(i, j)).abs() <= k * se_w.get(i, j).max(1e-300)
            })
        })
    }

    #[test]
    fn mc_matches_special_angles() {
        // θ = π/2: x_i·x_j vanishes up to the rounding of cos(π/2).
        let ds = unit_pair(PI / 2.0);
        let mc = gram_limit_mc(&ds, 1_000_000, 1).unwrap();
        let exact = gram_limit_closed(&ds).unwrap();
        assert!(mc.k_w.get(0, 1).abs() < 1e-15);
        assert!(within(&mc, &exact, 3.0));
    }

    #[test]
    fn mc_diagonals() {
        let ds = Dataset::from_rows(vec![vec![0.0, 1.0], vec![0.0, 1.0]], vec![0.0, 0.0]).unwrap();
        let mc = gram_limit_mc(&ds, 400_000, 5).unwrap();
        let (se_a, se_w) = mc.std_err.clone().unwrap();
        assert!((mc.k_w.get(0, 0) - 0.5).abs() <= 3.0 * se_w.get(0, 0));
        assert!((mc.k_a.get(1, 1) - 0.5).abs() <= 3.0 * se_a.get(1, 1));
    }

    #[test]
    fn mc_is_thread_count_independent() {
        let ds = random_dataset(3, 4, 2).unwrap();
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| gram_limit_mc(&ds, 100_000, 9).unwrap());
        let b = four.install(|| gram_limit_mc(&ds, 100_000, 9).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn default_dataset_spectrum() {
        let g = gram_limit_closed(&default_1d()).unwrap();
        assert!(g.lambda > 0.0 && g.lambda <= 2.0, "λ = {}", g.lambda);
        assert_eq!(g.lambda, g.lambda_a.min(g.lambda_w));
    }

    #[test]
    fn finite_gram_example() {
        let p = NetworkParams::new(vec![1.0], vec![1.0, 0.0], 2).unwrap();
        let ds = Dataset::from_rows(vec![vec![1.0, 1.0]], vec![0.0]).unwrap();
        let g = gram_finite(&p, 1.0, 1.0, &ds).unwrap();
        assert_eq!(g.g_a.get(0, 0), 1.0);
        assert_eq!(g.g_w.get(0, 0), 2.0);
        assert_eq!(g.g.get(0, 0), 3.0);
        let g2 = gram_finite(&p, 2.0, 1.0, &ds).unwrap();
        assert_eq!(g2.g.get(0, 0), 12.0);
    }

    #[test]
    fn finite_gram_is_psd() {
        let ds = random_dataset(5, 3, 8).unwrap();
        for seed in 0..5 {
            let p = init_params(&InitConfig {
                m: 30,
                d: 3,
                seed,
                use_asi: false,
            })
            .unwrap();
            let g = gram_finite(&p, 0.3, 1.7, &ds).unwrap();
            for mat in [&g.g_a, &g.g_w] {
                let lam = min_eigenvalue(mat).unwrap();
                assert!(lam >= -1e-12, "{lam}");
            }
        }
    }

    #[test]
    fn decay_rate_examples() {
        let r = decay_rate(10_000, 1e-2, 1.0, 4, 0.1, 0.1);
        assert_relative_eq!(r.local, 0.05, max_relative = 1e-12);
        assert_relative_eq!(r.linear, 0.05, max_relative = 1e-12);
        // κ′ → 1/κ′ swaps the roles of λ_a and λ_w.
        let a = decay_rate(100, 0.5, 3.0, 4, 0.2, 0.7);
        let b = decay_rate(100, 0.5, 1.0 / 3.0, 4, 0.7, 0.2);
        assert_relative_eq!(a.local, b.local, max_relative = 1e-12);
        // Minimized at κ′ = √(λ_a/λ_w).
        let best = (0.2f64 / 0.7).sqrt();
        let at = decay_rate(100, 0.5, best, 4, 0.2, 0.7).local;
        for kp in [0.3, 0.5, 0.6, 1.0, 2.0] {
            assert!(decay_rate(100, 0.5, kp, 4, 0.2, 0.7).local >= at);
        }
    }
}
