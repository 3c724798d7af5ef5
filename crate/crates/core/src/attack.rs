//! Faulty and malicious client behaviours.
//!
//! Data attacks (`noisy`, `label_flip`) corrupt a client's dataset once;
//! the client then trains normally. Model attacks replace the submission
//! every round: `byzantine_gaussian` draws a random model, while the
//! omniscient `ipm` and `alie` attacks read the round's honest
//! pseudo-gradients `g_k = w_t - w_k` and submit `w_t - g_mal`.

use std::fmt;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{apply_noise, flip_labels, LabeledDataset};
use crate::error::{check_dim, Error, Result};
use crate::rng::{self, Domain};
use crate::vector::{subtract, ParamVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AttackSpec {
    None,
    ByzantineGaussian {
        #[serde(default = "default_sigma")]
        sigma: f64,
    },
    Noisy {
        low: f64,
        high: f64,
        clip_lo: f64,
        clip_hi: f64,
    },
    LabelFlip {
        #[serde(default)]
        target: usize,
    },
    Ipm {
        epsilon: f64,
    },
    Alie {
        #[serde(default = "default_alie_epsilon")]
        epsilon: f64,
    },
}

fn default_sigma() -> f64 {
    20.0
}

fn default_alie_epsilon() -> f64 {
    1.5
}

impl AttackSpec {
    /// Noise for data normalized to `[-1, 1]`: `U(-1.4, 1.4)` clipped to `[-1, 1]`.
    pub fn noisy_images() -> Self {
        Self::Noisy {
            low: -1.4,
            high: 1.4,
            clip_lo: -1.0,
            clip_hi: 1.0,
        }
    }

    /// Noise for `[0, 1]` tabular data: `U(-0.5, 1.5)` clipped to `[0, 1]`.
    pub fn noisy_tabular() -> Self {
        Self::Noisy {
            low: -0.5,
            high: 1.5,
            clip_lo: 0.0,
            clip_hi: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        match *self {
            Self::ByzantineGaussian { sigma } if !(sigma >= 0.0 && sigma.is_finite()) => {
                bad(format!("sigma {sigma} must be non-negative"))
            }
            Self::Ipm { epsilon } | Self::Alie { epsilon } if !(epsilon >= 0.0 && epsilon.is_finite()) => {
                bad(format!("epsilon {epsilon} must be non-negative"))
            }
            Self::Noisy { low, high, clip_lo, clip_hi } if !(low <= high && clip_lo < clip_hi) => {
                bad(format!("noise bounds [{low}, {high}] / clip [{clip_lo}, {clip_hi}] unordered"))
            }
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::None => "none",
            Self::ByzantineGaussian { .. } => "byzantine_gaussian",
            Self::Noisy { .. } => "noisy",
            Self::LabelFlip { .. } => "label_flip",
            Self::Ipm { .. } => "ipm",
            Self::Alie { .. } => "alie",
        }
    }

    pub fn is_data_attack(&self) -> bool {
        matches!(self, Self::Noisy { .. } | Self::LabelFlip { .. })
    }

    pub fn is_omniscient(&self) -> bool {
        matches!(self, Self::Ipm { .. } | Self::Alie { .. })
    }
}

impl fmt::Display for AttackSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A submitted model drawn i.i.d. from `N(0, sigma^2)` per coordinate,
/// shaped like `w_t`.
pub fn gaussian_byzantine_update(w_t: &ParamVector, sigma: f64, seed: u64) -> Result<ParamVector> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!("sigma {sigma} must be non-negative")));
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut rng = rng::stream(seed, Domain::Byzantine, 0, 0);
    Ok(ParamVector::new(
        (0..w_t.dim()).map(|_| normal.sample(&mut rng)).collect(),
    ))
}

/// Per-coordinate mean and population standard deviation.
fn mean_and_std(grads: &[ParamVector]) -> Result<(Vec<f64>, Vec<f64>)> {
    let first = grads.first().ok_or(Error::Empty("benign gradients"))?;
    let dim = first.dim();
    for g in grads {
        check_dim(dim, g.dim())?;
    }
    let n = grads.len() as f64;
    let mut mean = vec![0.0; dim];
    for g in grads {
        for (m, v) in mean.iter_mut().zip(g.as_slice()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; dim];
    for g in grads {
        for ((s, v), m) in var.iter_mut().zip(g.as_slice()).zip(&mean) {
            let d = v - m;
            *s += d * d;
        }
    }
    let std = var.into_iter().map(|s| (s / n).sqrt()).collect();
    Ok((mean, std))
}

/// Inner product manipulation: `count` copies of `-epsilon * mean(benign)`.
pub fn ipm_updates(benign_grads: &[ParamVector], epsilon: f64, count: usize) -> Result<Vec<ParamVector>> {
    let (mean, _) = mean_and_std(benign_grads)?;
    let g = ParamVector::new(mean.into_iter().map(|m| -epsilon * m).collect());
    Ok(vec![g; count])
}

/// "A little is enough": `count` copies of `mean - epsilon * std` per
/// coordinate, with the population standard deviation.
pub fn alie_updates(benign_grads: &[ParamVector], epsilon: f64, count: usize) -> Result<Vec<ParamVector>> {
    if benign_grads.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "alie needs at least 2 benign gradients, got {}",
            benign_grads.len()
        )));
    }
    let (mean, std) = mean_and_std(benign_grads)?;
    let g = ParamVector::new(mean.iter().zip(&std).map(|(m, s)| m - epsilon * s).collect());
    Ok(vec![g; count])
}

/// Converts an attack pseudo-gradient into a submitted model `w_t - g`.
pub fn to_submission(w_t: &ParamVector, g: &ParamVector) -> Result<ParamVector> {
    subtract(w_t, g)
}

/// Applies a data-level attack; other kinds are rejected.
pub fn apply_data_attack(spec: &AttackSpec, dataset: &LabeledDataset, seed: u64) -> Result<LabeledDataset> {
    spec.validate()?;
    match *spec {
        AttackSpec::Noisy { low, high, clip_lo, clip_hi } => {
            apply_noise(dataset, low, high, clip_lo, clip_hi, seed)
        }
        AttackSpec::LabelFlip { target } => flip_labels(dataset, target),
        ref other => Err(Error::InvalidArgument(format!(
            "{} is not a data attack",
            other.name()
        ))),
    }
}
