//! Growth laws, the climate envelope, and homogeneous-medium front speeds.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid growth parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },
    #[error("no positive spreading speed for Allee threshold fraction {rho} (needs rho < 1/2)")]
    NonPositiveSpeed { rho: f64 },
    #[error("diffusion coefficient must be positive, got {0}")]
    InvalidDiffusion(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GrowthVariant {
    Logistic,
    /// Strong Allee effect (weak when `rho = 0`).
    Allee,
}

impl fmt::Display for GrowthVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GrowthVariant::Logistic => "logistic",
            GrowthVariant::Allee => "allee",
        })
    }
}

impl FromStr for GrowthVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "logistic" => Ok(GrowthVariant::Logistic),
            "allee" => Ok(GrowthVariant::Allee),
            other => Err(format!("unknown growth model `{other}`")),
        }
    }
}

/// Per-capita growth parameters.
///
/// Inside the envelope the logistic law is `r_plus (1 - u/K)`; the Allee law
/// is `r_plus * 4/(1-rho)^2 * (1 - u/K) (u/K - rho)`, scaled so both share the
/// zero at `K` and the maximum `r_plus` on `(0, K)`. Outside the envelope
/// both drop by `r_minus`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthModel {
    pub variant: GrowthVariant,
    pub r_plus: f64,
    pub r_minus: f64,
    pub carrying_capacity: f64,
    /// Allee threshold as a fraction of the carrying capacity.
    pub rho: f64,
}

impl GrowthModel {
    pub fn logistic(r_plus: f64, r_minus: f64, carrying_capacity: f64) -> Self {
        Self {
            variant: GrowthVariant::Logistic,
            r_plus,
            r_minus,
            carrying_capacity,
            rho: 0.0,
        }
    }

    pub fn allee(r_plus: f64, r_minus: f64, carrying_capacity: f64, rho: f64) -> Self {
        Self {
            variant: GrowthVariant::Allee,
            r_plus,
            r_minus,
            carrying_capacity,
            rho,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |field, reason: &str| {
            Err(ModelError::InvalidParameter {
                field,
                reason: reason.to_string(),
            })
        };
        if !(self.r_plus.is_finite() && self.r_plus > 0.0) {
            return bad("r_plus", "must be positive");
        }
        if !(self.r_minus.is_finite() && self.r_minus > self.r_plus) {
            return bad("r_minus", "must exceed r_plus");
        }
        if !(self.carrying_capacity.is_finite() && self.carrying_capacity > 0.0) {
            return bad("K", "must be positive");
        }
        if self.variant == GrowthVariant::Allee && !(0.0..1.0).contains(&self.rho) {
            return bad("rho", "must lie in [0, 1)");
        }
        Ok(())
    }

    /// Allee threshold density `rho * K` (zero for the logistic law).
    pub fn allee_threshold(&self) -> f64 {
        match self.variant {
            GrowthVariant::Logistic => 0.0,
            GrowthVariant::Allee => self.rho * self.carrying_capacity,
        }
    }

    /// Rate coefficient `4 r_plus / (1 - rho)^2` of the Allee law.
    pub fn allee_rate(&self) -> f64 {
        4.0 * self.r_plus / ((1.0 - self.rho) * (1.0 - self.rho))
    }

    pub fn per_capita_growth(&self, inside: bool, u: f64) -> f64 {
        let s = u / self.carrying_capacity;
        let g = match self.variant {
            GrowthVariant::Logistic => self.r_plus * (1.0 - s),
            GrowthVariant::Allee => self.allee_rate() * (1.0 - s) * (s - self.rho),
        };
        if inside {
            g
        } else {
            g - self.r_minus
        }
    }

    pub fn reaction_rate(&self, inside: bool, u: f64) -> f64 {
        u * self.per_capita_growth(inside, u)
    }

    /// Asymptotic front speed in a homogeneous, fully suitable medium.
    pub fn spreading_speed(&self, diffusion: f64) -> Result<f64, ModelError> {
        if !(diffusion.is_finite() && diffusion > 0.0) {
            return Err(ModelError::InvalidDiffusion(diffusion));
        }
        let fisher = 2.0 * (self.r_plus * diffusion).sqrt();
        match self.variant {
            GrowthVariant::Logistic => Ok(fisher),
            GrowthVariant::Allee => {
                if self.rho >= 0.5 {
                    return Err(ModelError::NonPositiveSpeed { rho: self.rho });
                }
                Ok(fisher * std::f64::consts::SQRT_2 * (0.5 - self.rho) / (1.0 - self.rho))
            }
        }
    }
}

impl Default for GrowthModel {
    fn default() -> Self {
        Self::logistic(1.0, 2.0, 10.0)
    }
}

pub fn analytic_spreading_speed(model: &GrowthModel, diffusion: f64) -> Result<f64, ModelError> {
    model.spreading_speed(diffusion)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EnvelopeMode {
    /// Band `[v t, L + v t]`: the trailing edge retreats.
    Shifting,
    /// Band `[0, L + v t]`: the range only grows.
    Expanding,
}

impl fmt::Display for EnvelopeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EnvelopeMode::Shifting => "shifting",
            EnvelopeMode::Expanding => "expanding",
        })
    }
}

impl FromStr for EnvelopeMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "shifting" => Ok(EnvelopeMode::Shifting),
            "expanding" => Ok(EnvelopeMode::Expanding),
            other => Err(format!("unknown envelope mode `{other}`")),
        }
    }
}

/// Latitudinal band of suitable climate moving north at speed `speed`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeSpec {
    pub thickness: f64,
    pub speed: f64,
    pub mode: EnvelopeMode,
}

impl Default for EnvelopeSpec {
    fn default() -> Self {
        Self {
            thickness: 30.0,
            speed: 2.5,
            mode: EnvelopeMode::Shifting,
        }
    }
}

impl EnvelopeSpec {
    pub fn shifting(thickness: f64, speed: f64) -> Self {
        Self {
            thickness,
            speed,
            mode: EnvelopeMode::Shifting,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.thickness.is_finite() && self.thickness > 0.0) {
            return Err(ModelError::InvalidParameter {
                field: "L",
                reason: "must be positive".into(),
            });
        }
        if !(self.speed.is_finite() && self.speed >= 0.0) {
            return Err(ModelError::InvalidParameter {
                field: "v",
                reason: "must be non-negative".into(),
            });
        }
        Ok(())
    }

    /// Closed latitude interval covered at time `t`.
    pub fn bounds(&self, t: f64) -> (f64, f64) {
        let shift = self.speed * t;
        match self.mode {
            EnvelopeMode::Shifting => (shift, self.thickness + shift),
            EnvelopeMode::Expanding => (0.0, self.thickness + shift),
        }
    }

    pub fn contains(&self, t: f64, x2: f64) -> bool {
        let (lo, hi) = self.bounds(t);
        lo <= x2 && x2 <= hi
    }

    /// Same band held at its `t = 0` position.
    pub fn frozen(&self) -> Self {
        Self {
            speed: 0.0,
            ..*self
        }
    }
}

pub fn in_envelope(env: &EnvelopeSpec, t: f64, x2: f64) -> bool {
    env.contains(t, x2)
}
