//! Initialization scalings as power laws in the width `m`.
//!
//! The original model is `(1/α) Σ a_k σ(w_k·x)` with `a_k ~ N(0, β₁²)` and
//! `w_k ~ N(0, β₂² I)`. After rescaling `a → a/β₁`, `w → w/β₂` and time by
//! `β₁β₂`, only two numbers survive: the energetic scale `κ = β₁β₂/α` and the
//! dynamical scale `κ′ = β₁/β₂`. Their width exponents `γ = −exp(κ)` and
//! `γ′ = −exp(κ′)` are the phase-diagram coordinates.

use std::fmt;
use std::ops::{Div, Mul};
use std::str::FromStr;

use crate::error::{Error, Result};

/// `coeff · m^exponent`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLaw {
    pub coeff: f64,
    pub exponent: f64,
}

impl PowerLaw {
    pub const ONE: PowerLaw = PowerLaw {
        coeff: 1.0,
        exponent: 0.0,
    };

    pub fn new(coeff: f64, exponent: f64) -> Result<Self> {
        if !(coeff > 0.0 && coeff.is_finite()) || !exponent.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "power law needs a positive finite coefficient and finite exponent, got {coeff}·m^{exponent}"
            )));
        }
        Ok(Self { coeff, exponent })
    }

    pub fn constant(c: f64) -> Result<Self> {
        Self::new(c, 0.0)
    }

    pub fn value(&self, m: usize) -> f64 {
        self.coeff * (m as f64).powf(self.exponent)
    }
}

impl Mul for PowerLaw {
    type Output = PowerLaw;
    fn mul(self, rhs: PowerLaw) -> PowerLaw {
        PowerLaw {
            coeff: self.coeff * rhs.coeff,
            exponent: self.exponent + rhs.exponent,
        }
    }
}

impl Div for PowerLaw {
    type Output = PowerLaw;
    fn div(self, rhs: PowerLaw) -> PowerLaw {
        PowerLaw {
            coeff: self.coeff / rhs.coeff,
            exponent: self.exponent - rhs.exponent,
        }
    }
}

impl fmt::Display for PowerLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}·m^{}", self.coeff, self.exponent)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingSpec {
    pub alpha: PowerLaw,
    pub beta1: PowerLaw,
    pub beta2: PowerLaw,
}

impl ScalingSpec {
    pub fn new(alpha: PowerLaw, beta1: PowerLaw, beta2: PowerLaw) -> Self {
        Self { alpha, beta1, beta2 }
    }

    /// A spec whose κ and κ′ are exactly `kappa` and `kappa_prime`, with
    /// `β₂ = 1`. Useful to turn any pair of power laws back into a model.
    pub fn from_kappas(kappa: PowerLaw, kappa_prime: PowerLaw) -> Self {
        // β₁ = κ′, β₂ = 1, α = β₁β₂/κ = κ′/κ.
        Self::new(kappa_prime / kappa, kappa_prime, PowerLaw::ONE)
    }

    pub fn kappa(&self) -> PowerLaw {
        kappa(self)
    }

    pub fn kappa_prime(&self) -> PowerLaw {
        kappa_prime(self)
    }

    pub fn coordinates(&self) -> PhaseCoordinates {
        phase_coordinates(self)
    }

    /// `(κ(m), κ′(m))` with this spec's own coefficients.
    pub fn realize(&self, m: usize) -> (f64, f64) {
        (self.kappa().value(m), self.kappa_prime().value(m))
    }
}

/// Energetic scale `κ = β₁β₂/α`.
pub fn kappa(spec: &ScalingSpec) -> PowerLaw {
    spec.beta1 * spec.beta2 / spec.alpha
}

/// Dynamical scale `κ′ = β₁/β₂`.
pub fn kappa_prime(spec: &ScalingSpec) -> PowerLaw {
    spec.beta1 / spec.beta2
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseCoordinates {
    pub gamma: f64,
    pub gamma_prime: f64,
}

impl PhaseCoordinates {
    pub fn new(gamma: f64, gamma_prime: f64) -> Self {
        Self { gamma, gamma_prime }
    }

    pub fn regime(&self) -> RegimeLabel {
        classify_regime(*self)
    }

    /// Euclidean distance to the critical set `{γ=1, γ′≤0} ∪ {γ′=γ−1, γ′≥0}`.
    pub fn distance_to_boundary(&self) -> f64 {
        let (g, gp) = (self.gamma, self.gamma_prime);
        // Vertical ray from (1, 0) downwards.
        let vertical = if gp <= 0.0 {
            (g - 1.0).abs()
        } else {
            ((g - 1.0).powi(2) + gp * gp).sqrt()
        };
        // Diagonal ray (1, 0) + s(1, 1), s ≥ 0.
        let s = ((g - 1.0) + gp) / 2.0;
        let diagonal = if s >= 0.0 {
            ((g - 1.0 - s).powi(2) + (gp - s).powi(2)).sqrt()
        } else {
            ((g - 1.0).powi(2) + gp * gp).sqrt()
        };
        vertical.min(diagonal)
    }
}

pub fn phase_coordinates(spec: &ScalingSpec) -> PhaseCoordinates {
    PhaseCoordinates {
        gamma: -kappa(spec).exponent,
        gamma_prime: -kappa_prime(spec).exponent,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RegimeLabel {
    Linear,
    Critical,
    Condensed,
}

impl fmt::Display for RegimeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RegimeLabel::Linear => "linear",
            RegimeLabel::Critical => "critical",
            RegimeLabel::Condensed => "condensed",
        })
    }
}

/// Linear iff `γ<1 or γ′>γ−1`; condensed iff `γ>1 and γ′<γ−1`; the
/// remaining one-dimensional set is critical.
pub fn classify_regime(coords: PhaseCoordinates) -> RegimeLabel {
    let PhaseCoordinates { gamma, gamma_prime } = coords;
    if gamma < 1.0 || gamma_prime > gamma - 1.0 {
        RegimeLabel::Linear
    } else if gamma > 1.0 && gamma_prime < gamma - 1.0 {
        RegimeLabel::Condensed
    } else {
        RegimeLabel::Critical
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preset {
    LeCun,
    He,
    Xavier,
    Ntk,
    MeanField,
    EEtAl,
}

impl Preset {
    pub const ALL: [Preset; 6] = [
        Preset::LeCun,
        Preset::He,
        Preset::Xavier,
        Preset::Ntk,
        Preset::MeanField,
        Preset::EEtAl,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Preset::LeCun => "lecun",
            Preset::He => "he",
            Preset::Xavier => "xavier",
            Preset::Ntk => "ntk",
            Preset::MeanField => "mean-field",
            Preset::EEtAl => "e-et-al",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        match key.as_str() {
            "lecun" => Ok(Preset::LeCun),
            "he" | "kaiming" => Ok(Preset::He),
            "xavier" | "glorot" => Ok(Preset::Xavier),
            "ntk" => Ok(Preset::Ntk),
            "meanfield" | "mf" => Ok(Preset::MeanField),
            "eetal" | "e" => Ok(Preset::EEtAl),
            _ => Err(Error::UnknownPreset(s.to_string())),
        }
    }
}

/// Power-law form of a named initialization for input dimension `dim`.
///
/// Xavier's `√(2/(m+1))` and `√(2/(m+d))` are replaced by their leading
/// order `√2·m^(−½)`. `beta_exponent` is the `b` in `β = m^(−b)` and is only
/// used (and required) by [`Preset::EEtAl`].
pub fn preset(name: Preset, dim: usize, beta_exponent: Option<f64>) -> Result<ScalingSpec> {
    if dim == 0 {
        return Err(Error::InvalidConfig("preset dimension must be ≥ 1".into()));
    }
    let d = dim as f64;
    let one = PowerLaw::ONE;
    let spec = match name {
        Preset::LeCun => ScalingSpec::new(one, PowerLaw::new(1.0, -0.5)?, PowerLaw::constant((1.0 / d).sqrt())?),
        Preset::He => ScalingSpec::new(
            one,
            PowerLaw::new(2f64.sqrt(), -0.5)?,
            PowerLaw::constant((2.0 / d).sqrt())?,
        ),
        Preset::Xavier => ScalingSpec::new(
            one,
            PowerLaw::new(2f64.sqrt(), -0.5)?,
            PowerLaw::new(2f64.sqrt(), -0.5)?,
        ),
        Preset::Ntk => ScalingSpec::new(PowerLaw::new(1.0, 0.5)?, one, one),
        Preset::MeanField => ScalingSpec::new(PowerLaw::new(1.0, 1.0)?, one, one),
        Preset::EEtAl => {
            let b = beta_exponent.ok_or(Error::MissingExponent("e-et-al"))?;
            ScalingSpec::new(one, PowerLaw::new(1.0, -b)?, one)
        }
    };
    Ok(spec)
}

/// Canonical realization of a phase-diagram cell: `κ = m^(−γ)`, `κ′ = m^(−γ′)`.
pub fn realize(coords: PhaseCoordinates, m: usize) -> (f64, f64) {
    let m = m as f64;
    (m.powf(-coords.gamma), m.powf(-coords.gamma_prime))
}
