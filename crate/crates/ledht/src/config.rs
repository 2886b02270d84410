//! Declarative run description shared by the CLI commands.
//!
//! A config file is JSON; every section and field has a default, and unknown
//! fields are rejected. All seeds used by a run derive from `seed`, so the
//! config alone determines every artifact.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::kk::{BankTraining, CropMode, KkOptions, Resonance};
use crate::learn::FitOptions;
use crate::lineshapes::Direction;
use crate::synth::{AugmentConfig, GenConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenSection {
    pub n_len: usize,
    pub width_min: f64,
    pub width_max: f64,
    pub width_step: f64,
    pub center_step: f64,
    pub edge_rule: f64,
    pub count: usize,
    pub direction: Direction,
    pub amplitude: f64,
}

impl Default for GenSection {
    fn default() -> Self {
        Self {
            n_len: 401,
            width_min: 4.0,
            width_max: 80.0,
            width_step: 0.5,
            center_step: 0.5,
            edge_rule: 0.5,
            count: 30_000,
            direction: Direction::DawsonToGaussian,
            amplitude: 1.0,
        }
    }
}

impl GenSection {
    pub fn to_config(&self, seed: u64) -> GenConfig {
        GenConfig {
            n_len: self.n_len,
            width_min: self.width_min,
            width_max: self.width_max,
            width_step: self.width_step,
            center_step: self.center_step,
            edge_rule: self.edge_rule,
            count: self.count,
            direction: self.direction,
            amplitude: self.amplitude,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MultiSection {
    pub count: usize,
    pub peaks_min: usize,
    pub peaks_max: usize,
    pub amp_min: f64,
    pub amp_max: f64,
    pub width_min: f64,
    pub width_max: f64,
}

impl Default for MultiSection {
    fn default() -> Self {
        Self {
            count: 1000,
            peaks_min: 1,
            peaks_max: 15,
            amp_min: 1.0,
            amp_max: 2.0,
            width_min: 4.0,
            width_max: 26.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentSection {
    pub reps: usize,
    pub noise_std: f64,
    pub offset_std: f64,
    pub offset_targets: bool,
}

impl Default for AugmentSection {
    fn default() -> Self {
        Self {
            reps: 3,
            noise_std: 1e-12,
            offset_std: 1.0,
            offset_targets: false,
        }
    }
}

impl AugmentSection {
    pub fn to_config(&self, seed: u64) -> AugmentConfig {
        AugmentConfig {
            reps: self.reps,
            noise_std: self.noise_std,
            offset_std: self.offset_std,
            seed,
            offset_targets: self.offset_targets,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    #[default]
    Single,
    Multi,
    /// Single peaks of the other lineshape family, e.g. dispersive to Lorentzian.
    Cross,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub kind: TestKind,
    pub test_count: usize,
    /// Pad length of the padded baseline; defaults to the grid length.
    pub pad_len: Option<usize>,
    pub cross_direction: Direction,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            kind: TestKind::Single,
            test_count: 10_000,
            pad_len: None,
            cross_direction: Direction::DispersiveToLorentzian,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KkTrainSection {
    pub width_min: f64,
    pub width_max: f64,
    pub step: f64,
    pub count: usize,
    pub reps: usize,
    pub noise_std: f64,
    pub offset_std: f64,
}

impl Default for KkTrainSection {
    fn default() -> Self {
        Self {
            width_min: 3.0,
            width_max: 50.0,
            step: 0.5,
            count: 15_000,
            reps: 3,
            noise_std: 1e-3,
            offset_std: 1.0,
        }
    }
}

impl KkTrainSection {
    pub fn recipe(&self, n_len: usize, seed: u64) -> BankTraining {
        BankTraining {
            gen: GenConfig {
                n_len,
                width_min: self.width_min,
                width_max: self.width_max,
                width_step: self.step,
                center_step: self.step,
                edge_rule: 0.5,
                count: self.count,
                direction: Direction::DawsonToGaussian,
                amplitude: 1.0,
                seed,
            },
            augment: AugmentConfig::new(self.reps, self.noise_std, self.offset_std, derive_seed(seed, 1)),
            fit: FitOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub resonances: Vec<Resonance>,
    pub width_from: usize,
    pub width_to: usize,
    pub steps: usize,
    pub anchors: Vec<usize>,
    pub crop: CropMode,
    pub train: KkTrainSection,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            resonances: vec![
                Resonance { omega: 120.0, gamma: 8.0, amplitude: 3.0 },
                Resonance { omega: 190.0, gamma: 6.0, amplitude: 2.0 },
                Resonance { omega: 290.0, gamma: 25.0, amplitude: 12.0 },
            ],
            width_from: 301,
            width_to: 211,
            steps: 10,
            anchors: vec![290],
            crop: CropMode::KeepHigh,
            train: KkTrainSection {
                count: 8000,
                ..KkTrainSection::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KkSection {
    pub n_len: usize,
    pub chi_nr: f64,
    pub resonances: Vec<Resonance>,
    pub options: KkOptions,
    pub train: KkTrainSection,
    pub sweep: SweepSection,
}

impl Default for KkSection {
    fn default() -> Self {
        Self {
            n_len: 301,
            chi_nr: 1.0,
            resonances: vec![
                Resonance { omega: 90.0, gamma: 8.0, amplitude: 3.0 },
                Resonance { omega: 150.0, gamma: 6.0, amplitude: 2.0 },
                Resonance { omega: 215.0, gamma: 10.0, amplitude: 4.0 },
            ],
            options: KkOptions::default(),
            train: KkTrainSection::default(),
            sweep: SweepSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub gen: GenSection,
    pub multi: MultiSection,
    pub augment: AugmentSection,
    pub fit: FitOptions,
    pub eval: EvalSection,
    pub kk: KkSection,
}

/// Decorrelated child seed for a numbered purpose.
pub fn derive_seed(seed: u64, purpose: u64) -> u64 {
    let mut z = seed ^ purpose.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub mod purpose {
    pub const TRAIN: u64 = 0;
    pub const AUGMENT: u64 = 1;
    pub const TEST: u64 = 2;
    pub const KK_TRAIN: u64 = 3;
    pub const SWEEP_TRAIN: u64 = 4;
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
    }

    pub fn train_config(&self) -> GenConfig {
        self.gen.to_config(derive_seed(self.seed, purpose::TRAIN))
    }

    pub fn augment_config(&self) -> AugmentConfig {
        self.augment.to_config(derive_seed(self.seed, purpose::AUGMENT))
    }

    pub fn test_seed(&self) -> u64 {
        derive_seed(self.seed, purpose::TEST)
    }

    pub fn pad_len(&self, n_len: usize) -> usize {
        self.eval.pad_len.unwrap_or(n_len)
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_and_hash_is_stable() {
        let c = RunConfig::default();
        let text = serde_json::to_string(&c).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
        assert_eq!(c.hash().len(), 64);
        let mut d = c.clone();
        d.seed = 1;
        assert_ne!(d.hash(), c.hash());
    }

    #[test]
    fn partial_files_fill_defaults_and_typos_fail() {
        let c: RunConfig = serde_json::from_str(r#"{"seed": 5, "gen": {"count": 10}}"#).unwrap();
        assert_eq!(c.seed, 5);
        assert_eq!(c.gen.count, 10);
        assert_eq!(c.gen.n_len, 401);
        assert!(serde_json::from_str::<RunConfig>(r#"{"gen": {"cuont": 10}}"#).is_err());
    }

    #[test]
    fn derived_seeds_differ() {
        let s: Vec<u64> = (0..5).map(|p| derive_seed(7, p)).collect();
        for i in 0..5 {
            for j in i + 1..5 {
                assert_ne!(s[i], s[j]);
            }
        }
    }
}
