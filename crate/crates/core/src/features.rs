//! Amplitude/orientation decomposition of hidden neurons and condensation
//! summaries.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::network::NetworkParams;

pub const DEFAULT_AMPLITUDE_FRACTION: f64 = 0.1;
pub const DEFAULT_COSINE_TOLERANCE: f64 = 0.05;
pub const ENTROPY_BINS: usize = 64;

/// Per-neuron amplitude `A_k = |a_k|·‖w_k‖₂` and orientation `w_k/‖w_k‖₂`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureCloud {
    pub amplitudes: Vec<f64>,
    /// Row-major `m × d`; rows of inactive neurons are left at zero.
    pub orientations: Vec<f64>,
    pub active: Vec<bool>,
    d: usize,
}

impl FeatureCloud {
    pub fn m(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn orientation(&self, k: usize) -> &[f64] {
        &self.orientations[k * self.d..(k + 1) * self.d]
    }
}

pub fn extract_features(params: &NetworkParams) -> FeatureCloud {
    let (m, d) = (params.m(), params.d());
    let mut amplitudes = Vec::with_capacity(m);
    let mut orientations = vec![0.0; m * d];
    let mut active = Vec::with_capacity(m);
    for (k, (w, a)) in params.rows().zip(&params.a).enumerate() {
        let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
        amplitudes.push(a.abs() * norm);
        if norm > 0.0 {
            for (o, v) in orientations[k * d..(k + 1) * d].iter_mut().zip(w) {
                *o = v / norm;
            }
        }
        active.push(norm > 0.0);
    }
    FeatureCloud {
        amplitudes,
        orientations,
        active,
        d,
    }
}

/// Angle to the first axis in `[−π, π)`.
pub fn angle_1d(orientation: &[f64]) -> Result<f64> {
    if orientation.len() != 2 {
        return Err(Error::DimensionMismatch {
            context: "angle_1d orientation",
            expected: 2,
            actual: orientation.len(),
        });
    }
    let t = orientation[1].atan2(orientation[0]);
    Ok(if t >= PI { t - 2.0 * PI } else { t })
}

/// The normalized all-ones direction `1/√d`.
pub fn default_reference(d: usize) -> Vec<f64> {
    vec![1.0 / (d as f64).sqrt(); d]
}

/// `(A_k, ŵ_k · p)` for every neuron with nonzero input weight.
pub fn project(cloud: &FeatureCloud, reference: &[f64]) -> Result<Vec<(f64, f64)>> {
    if reference.len() != cloud.d {
        return Err(Error::DimensionMismatch {
            context: "projection reference",
            expected: cloud.d,
            actual: reference.len(),
        });
    }
    let norm = reference.iter().map(|v| v * v).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidConfig(format!(
            "reference must be a unit vector, norm is {norm}"
        )));
    }
    Ok((0..cloud.m())
        .filter(|&k| cloud.active[k])
        .map(|k| {
            let i = cloud.orientation(k).iter().zip(reference).map(|(a, b)| a * b).sum();
            (cloud.amplitudes[k], i)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CondensationSummary {
    pub active_count: usize,
    pub cluster_count: usize,
    pub angular_entropy: f64,
    pub amplitude_threshold: f64,
    pub cosine_tolerance: f64,
}

/// Greedy clustering of the active neurons (`A_k ≥ fraction · max A`), in
/// order of decreasing amplitude. The tolerance is an angle in radians: a
/// neuron joins the closest centroid when its cosine similarity is at least
/// `cos(tolerance)` and opens a new cluster otherwise. Centroids are the
/// renormalized amplitude-weighted means of their members.
///
/// The entropy (nats) is taken over the amplitude mass of the active
/// neurons in a 64-bin angle histogram when `d = 2`, else over clusters.
pub fn condensation_summary(
    cloud: &FeatureCloud,
    amplitude_fraction: f64,
    cosine_tolerance: f64,
) -> Result<CondensationSummary> {
    if !(amplitude_fraction > 0.0 && amplitude_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "amplitude fraction must lie in (0,1), got {amplitude_fraction}"
        )));
    }
    if !(cosine_tolerance > 0.0 && cosine_tolerance < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "cosine tolerance must lie in (0,1), got {cosine_tolerance}"
        )));
    }
    if cloud.m() == 0 {
        return Err(Error::Empty("feature cloud"));
    }
    let max_a = cloud.amplitudes.iter().copied().fold(0.0, f64::max);
    if !(max_a > 0.0) {
        return Err(Error::Empty("active neuron set"));
    }
    let threshold = amplitude_fraction * max_a;
    let mut order: Vec<usize> = (0..cloud.m())
        .filter(|&k| cloud.active[k] && cloud.amplitudes[k] >= threshold)
        .collect();
    // Stable sort keeps the index order among equal amplitudes.
    order.sort_by(|&i, &j| cloud.amplitudes[j].total_cmp(&cloud.amplitudes[i]));

    let d = cloud.d;
    let min_cos = cosine_tolerance.cos();
    let mut sums: Vec<Vec<f64>> = Vec::new();
    let mut centroids: Vec<Vec<f64>> = Vec::new();
    let mut masses: Vec<f64> = Vec::new();
    for &k in &order {
        let u = cloud.orientation(k);
        let best = centroids
            .iter()
            .enumerate()
            .map(|(c, cen)| (c, cen.iter().zip(u).map(|(a, b)| a * b).sum::<f64>()))
            .fold(None, |acc: Option<(usize, f64)>, (c, s)| match acc {
                Some((_, bs)) if bs >= s => acc,
                _ => Some((c, s)),
            });
        let amp = cloud.amplitudes[k];
        match best {
            Some((c, s)) if s >= min_cos => {
                for (acc, v) in sums[c].iter_mut().zip(u) {
                    *acc += amp * v;
                }
                let n = sums[c].iter().map(|v| v * v).sum::<f64>().sqrt();
                if n > 0.0 {
                    centroids[c] = sums[c].iter().map(|v| v / n).collect();
                }
                masses[c] += amp;
            }
            _ => {
                sums.push(u.iter().map(|v| amp * v).collect());
                centroids.push(u.to_vec());
                masses.push(amp);
            }
        }
    }

    let angular_entropy = if d == 2 {
        let mut bins = vec![0.0; ENTROPY_BINS];
        for &k in &order {
            let t = angle_1d(cloud.orientation(k))?;
            let b = (((t + PI) / (2.0 * PI)) * ENTROPY_BINS as f64).floor() as usize;
            bins[b.min(ENTROPY_BINS - 1)] += cloud.amplitudes[k];
        }
        entropy(&bins)
    } else {
        entropy(&masses)
    };

    Ok(CondensationSummary {
        active_count: order.len(),
        cluster_count: centroids.len(),
        angular_entropy,
        amplitude_threshold: threshold,
        cosine_tolerance,
    })
}

fn entropy(masses: &[f64]) -> f64 {
    let total: f64 = masses.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    let h: f64 = masses
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| {
            let q = p / total;
            -q * q.ln()
        })
        .sum();
    h.max(0.0)
}

/// Scatter rows `tag,A,angle` for `d = 2` or `tag,A,I` against the default
/// reference otherwise.
pub fn scatter_csv(initial: &FeatureCloud, final_: &FeatureCloud) -> Result<String> {
    tagged_scatter_csv(&[("initial", initial), ("final", final_)])
}

/// [`scatter_csv`] for any list of tagged clouds of equal dimension.
pub fn tagged_scatter_csv(clouds: &[(&str, &FeatureCloud)]) -> Result<String> {
    let d = clouds.first().ok_or(Error::Empty("cloud list"))?.1.d;
    let mut out = String::from(if d == 2 { "tag,A,angle\n" } else { "tag,A,I\n" });
    for &(tag, cloud) in clouds {
        if cloud.d != d {
            return Err(Error::DimensionMismatch {
                context: "scatter clouds",
                expected: d,
                actual: cloud.d,
            });
        }
        if d == 2 {
            for k in (0..cloud.m()).filter(|&k| cloud.active[k]) {
                let t = angle_1d(cloud.orientation(k))?;
                out.push_str(&format!("{tag},{:.16e},{:.16e}\n", cloud.amplitudes[k], t));
            }
        } else {
            for (a, i) in project(cloud, &default_reference(d))? {
                out.push_str(&format!("{tag},{a:.16e},{i:.16e}\n"));
            }
        }
    }
    Ok(out)
}
