//! Seeded generation of lineshape corpora and their augmentation.
//!
//! Peak parameters live on a lattice: widths `width_min + i·width_step` and
//! centers `first + j·center_step` on the centered pixel grid. With both
//! steps equal to 1 this is the integer grid. Every random draw comes from
//! ChaCha8 with an explicit stream number, so output never depends on how
//! rows are scheduled across threads.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learn::RowBlocks;
use crate::lineshapes::{accumulate, Direction, Grid, LineshapeParams};
use crate::matrix::Matrix;

/// Stream reserved for the sequential uniqueness pre-pass.
const PREPASS_STREAM: u64 = u64::MAX;
const LATTICE_EPS: f64 = 1e-9;

fn default_step() -> f64 {
    1.0
}

fn default_edge_rule() -> f64 {
    0.5
}

fn default_amplitude() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub n_len: usize,
    pub width_min: f64,
    pub width_max: f64,
    /// Lattice spacing of widths; 1 gives integer widths.
    #[serde(default = "default_step")]
    pub width_step: f64,
    /// Lattice spacing of centers; 1 gives integer pixel centers.
    #[serde(default = "default_step")]
    pub center_step: f64,
    /// Minimum center distance from either window edge, in FWHM of the peaked member.
    #[serde(default = "default_edge_rule")]
    pub edge_rule: f64,
    pub count: usize,
    pub direction: Direction,
    /// Amplitude of the peaked member for single-peak corpora.
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    pub seed: u64,
}

impl GenConfig {
    pub fn new(n_len: usize, width_min: f64, width_max: f64, count: usize, direction: Direction, seed: u64) -> Self {
        Self {
            n_len,
            width_min,
            width_max,
            width_step: 1.0,
            center_step: 1.0,
            edge_rule: 0.5,
            count,
            direction,
            amplitude: 1.0,
            seed,
        }
    }

    pub fn with_steps(mut self, center_step: f64, width_step: f64) -> Self {
        self.center_step = center_step;
        self.width_step = width_step;
        self
    }

    pub fn grid(&self) -> Grid {
        Grid::centered(self.n_len)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.n_len < 3 {
            return bad(format!("n_len must be at least 3, got {}", self.n_len));
        }
        let finite = [self.width_min, self.width_max, self.width_step, self.center_step, self.edge_rule, self.amplitude];
        if finite.iter().any(|v| !v.is_finite()) {
            return bad("generation parameters must be finite".into());
        }
        if self.width_min < 1.0 || self.width_max < self.width_min || self.width_max > self.n_len as f64 {
            return bad(format!(
                "width range [{}, {}] must satisfy 1 <= min <= max <= n_len = {}",
                self.width_min, self.width_max, self.n_len
            ));
        }
        if self.width_step <= 0.0 || self.center_step <= 0.0 {
            return bad("lattice steps must be positive".into());
        }
        if self.edge_rule < 0.0 {
            return bad(format!("edge rule must be non-negative, got {}", self.edge_rule));
        }
        Ok(())
    }
}

/// Number of unique lineshapes on an integer grid of `n_len` samples when a
/// peak needs at least `samples_per_fwhm` samples across its FWHM and the
/// FWHM may not exceed the window. A FWHM of `w` samples fits in
/// `n_len - w + 1` positions; summing over `w` gives a triangular number.
pub fn capacity(n_len: u64, samples_per_fwhm: u64) -> u64 {
    if n_len < samples_per_fwhm {
        return 0;
    }
    let m = n_len - samples_per_fwhm;
    (m + 1) * (m + 2) / 2
}

/// The admissible (width, center) lattice of a config.
#[derive(Debug, Clone)]
pub struct Lattice {
    pub widths: Vec<f64>,
    first: f64,
    center_step: f64,
    /// Inclusive admissible center index range per width, empty when lo > hi.
    ranges: Vec<(u64, u64)>,
    /// Running totals of admissible pairs, one past each width.
    prefix: Vec<u64>,
}

impl Lattice {
    pub fn new(cfg: &GenConfig) -> Result<Self> {
        cfg.validate()?;
        let grid = cfg.grid();
        let (first, last) = (grid.first(), grid.last());
        let n_widths = ((cfg.width_max - cfg.width_min) / cfg.width_step + LATTICE_EPS).floor() as usize + 1;
        let max_j = ((last - first) / cfg.center_step + LATTICE_EPS).floor();
        let kind = cfg.direction.input_kind();
        let mut widths = Vec::with_capacity(n_widths);
        let mut ranges = Vec::with_capacity(n_widths);
        let mut prefix = Vec::with_capacity(n_widths);
        let mut total = 0u64;
        for i in 0..n_widths {
            let w = cfg.width_min + i as f64 * cfg.width_step;
            let margin = cfg.edge_rule * kind.fwhm(w);
            let lo = (margin / cfg.center_step - LATTICE_EPS).ceil().max(0.0);
            let hi = (((last - first) - margin) / cfg.center_step + LATTICE_EPS).floor().min(max_j);
            let range = if hi >= lo { (lo as u64, hi as u64) } else { (1, 0) };
            if range.1 >= range.0 {
                total += range.1 - range.0 + 1;
            }
            widths.push(w);
            ranges.push(range);
            prefix.push(total);
        }
        Ok(Self {
            widths,
            first,
            center_step: cfg.center_step,
            ranges,
            prefix,
        })
    }

    pub fn admissible(&self) -> u64 {
        self.prefix.last().copied().unwrap_or(0)
    }

    /// Maps a flat index in `[0, admissible)` to (width index, center index).
    fn locate(&self, k: u64) -> (usize, u64) {
        let i = self.prefix.partition_point(|&p| p <= k);
        let before = if i == 0 { 0 } else { self.prefix[i - 1] };
        (i, self.ranges[i].0 + (k - before))
    }

    pub fn center(&self, j: u64) -> f64 {
        self.first + j as f64 * self.center_step
    }

    /// Draws one admissible (center, width), uniform over the lattice.
    fn draw<R: Rng>(&self, rng: &mut R) -> (usize, u64) {
        self.locate(rng.random_range(0..self.admissible()))
    }
}

pub fn admissible_count(cfg: &GenConfig) -> Result<u64> {
    Ok(Lattice::new(cfg)?.admissible())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Generator {
    SinglePeak {
        config: GenConfig,
    },
    MultiPeak {
        config: GenConfig,
        peaks_min: usize,
        peaks_max: usize,
        amp_min: f64,
        amp_max: f64,
        seed: u64,
    },
    External {
        description: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub reps: usize,
    pub noise_std: f64,
    pub offset_std: f64,
    pub seed: u64,
    /// Also shift targets by the per-spectrum offset.
    #[serde(default)]
    pub offset_targets: bool,
}

impl AugmentConfig {
    pub fn new(reps: usize, noise_std: f64, offset_std: f64, seed: u64) -> Self {
        Self {
            reps,
            noise_std,
            offset_std,
            seed,
            offset_targets: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::InvalidParameter("reps must be at least 1".into()));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) || !(self.offset_std >= 0.0 && self.offset_std.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "noise and offset standard deviations must be finite and non-negative, got {} and {}",
                self.noise_std, self.offset_std
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentRecord {
    #[serde(flatten)]
    pub config: AugmentConfig,
    pub base_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub generator: Generator,
    #[serde(default)]
    pub augmentations: Vec<AugmentRecord>,
}

/// Paired input and target spectra, one row per spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub inputs: Matrix,
    pub targets: Matrix,
    /// Input-side peaks of each row.
    pub params: Vec<Vec<LineshapeParams>>,
    pub provenance: Provenance,
}

impl TrainingSet {
    pub fn new(inputs: Matrix, targets: Matrix, params: Vec<Vec<LineshapeParams>>, provenance: Provenance) -> Result<Self> {
        if inputs.shape() != targets.shape() {
            return Err(Error::InvalidInput(format!(
                "inputs {:?} and targets {:?} differ in shape",
                inputs.shape(),
                targets.shape()
            )));
        }
        if !params.is_empty() && params.len() != inputs.rows() {
            return Err(Error::InvalidInput(format!(
                "{} parameter records for {} rows",
                params.len(),
                inputs.rows()
            )));
        }
        Ok(Self {
            inputs,
            targets,
            params,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.rows() == 0
    }

    pub fn n_len(&self) -> usize {
        self.inputs.cols()
    }

    /// Center of each row when every row holds exactly one peak.
    pub fn single_peak_centers(&self) -> Option<Vec<f64>> {
        if self.params.is_empty() || self.params.iter().any(|p| p.len() != 1) {
            return None;
        }
        Some(self.params.iter().map(|p| p[0].center).collect())
    }
}

impl RowBlocks for TrainingSet {
    fn n_rows(&self) -> usize {
        self.len()
    }

    fn n_cols(&self) -> usize {
        self.n_len()
    }

    fn fill_block(&self, start: usize, len: usize, inputs: &mut [f64], targets: &mut [f64]) {
        let n = self.n_len();
        inputs.copy_from_slice(&self.inputs.as_slice()[start * n..(start + len) * n]);
        targets.copy_from_slice(&self.targets.as_slice()[start * n..(start + len) * n]);
    }

    fn provenance(&self) -> serde_json::Value {
        serde_json::to_value(&self.provenance).unwrap_or(serde_json::Value::Null)
    }
}

fn render(grid: &Grid, rows: &[Vec<(LineshapeParams, LineshapeParams)>]) -> (Matrix, Matrix) {
    let n = grid.len;
    let mut inputs = Matrix::zeros(rows.len(), n);
    let mut targets = Matrix::zeros(rows.len(), n);
    inputs
        .as_mut_slice()
        .par_chunks_mut(n.max(1))
        .zip(targets.as_mut_slice().par_chunks_mut(n.max(1)))
        .zip(rows.par_iter())
        .for_each(|((fi, ft), peaks)| {
            for (p_in, p_tgt) in peaks {
                accumulate(p_in, grid, fi);
                accumulate(p_tgt, grid, ft);
            }
        });
    (inputs, targets)
}

/// Unique single-peak corpus, uniform over the admissible lattice.
pub fn gen_single_peak(config: &GenConfig) -> Result<TrainingSet> {
    let lattice = Lattice::new(config)?;
    let available = lattice.admissible();
    if config.count as u64 > available {
        return Err(Error::CapacityExceeded {
            requested: config.count,
            available: available as usize,
            detail: format!(
                "n_len {} widths [{}, {}] step {} center step {}",
                config.n_len, config.width_min, config.width_max, config.width_step, config.center_step
            ),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(PREPASS_STREAM);
    let mut seen = HashSet::with_capacity(config.count);
    let mut picks = Vec::with_capacity(config.count);
    let limit = 50 * config.count as u64;
    let mut rejections = 0u64;
    while picks.len() < config.count {
        let (i, j) = lattice.draw(&mut rng);
        if seen.insert((i, j)) {
            picks.push((i, j));
            rejections = 0;
        } else {
            rejections += 1;
            if rejections >= limit {
                return Err(Error::CapacityExceeded {
                    requested: config.count,
                    available: available as usize,
                    detail: format!("sampling stalled after {rejections} consecutive duplicate draws"),
                });
            }
        }
    }
    let pairs = picks
        .iter()
        .map(|&(i, j)| {
            let p = config.direction.pair(lattice.center(j), lattice.widths[i], config.amplitude)?;
            Ok(vec![(p.input, p.target)])
        })
        .collect::<Result<Vec<_>>>()?;
    let (inputs, targets) = render(&config.grid(), &pairs);
    let params = pairs.iter().map(|r| vec![r[0].0]).collect();
    TrainingSet::new(
        inputs,
        targets,
        params,
        Provenance {
            generator: Generator::SinglePeak { config: config.clone() },
            augmentations: Vec::new(),
        },
    )
}

/// Superpositions of `k ∈ [peaks_min, peaks_max]` peaks per spectrum, with
/// `config.count` spectra. Peaks are drawn from the same admissible lattice
/// but need not be unique.
pub fn gen_multi_peak(
    config: &GenConfig,
    peaks_min: usize,
    peaks_max: usize,
    amp_range: (f64, f64),
    seed: u64,
) -> Result<TrainingSet> {
    let lattice = Lattice::new(config)?;
    if peaks_min == 0 || peaks_max < peaks_min {
        return Err(Error::InvalidParameter(format!(
            "peak count range [{peaks_min}, {peaks_max}] must satisfy 1 <= min <= max"
        )));
    }
    let (amin, amax) = amp_range;
    if !(amin.is_finite() && amax.is_finite() && amin <= amax) {
        return Err(Error::InvalidParameter(format!("invalid amplitude range [{amin}, {amax}]")));
    }
    if lattice.admissible() == 0 {
        return Err(Error::CapacityExceeded {
            requested: config.count,
            available: 0,
            detail: "no admissible peak position".into(),
        });
    }
    let rows: Vec<Vec<(LineshapeParams, LineshapeParams)>> = (0..config.count)
        .into_par_iter()
        .map(|row| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(row as u64);
            let k = rng.random_range(peaks_min..=peaks_max);
            (0..k)
                .map(|_| {
                    let (i, j) = lattice.draw(&mut rng);
                    let a = if amin == amax { amin } else { rng.random_range(amin..=amax) };
                    let p = config.direction.pair(lattice.center(j), lattice.widths[i], a)?;
                    Ok((p.input, p.target))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let (inputs, targets) = render(&config.grid(), &rows);
    let params = rows.iter().map(|r| r.iter().map(|p| p.0).collect()).collect();
    TrainingSet::new(
        inputs,
        targets,
        params,
        Provenance {
            generator: Generator::MultiPeak {
                config: config.clone(),
                peaks_min,
                peaks_max,
                amp_min: amin,
                amp_max: amax,
                seed,
            },
            augmentations: Vec::new(),
        },
    )
}

/// Lazily perturbed replicas of a base set. Row `j` is copy `j / M` of base
/// row `j % M` and draws its offset and noise from stream `j`.
#[derive(Debug, Clone, Copy)]
pub struct AugmentedView<'a> {
    base: &'a TrainingSet,
    config: AugmentConfig,
}

impl<'a> AugmentedView<'a> {
    pub fn new(base: &'a TrainingSet, config: AugmentConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { base, config })
    }

    pub fn record(&self) -> AugmentRecord {
        AugmentRecord {
            config: self.config,
            base_rows: self.base.len(),
        }
    }

    fn perturb(&self, row: usize, input: &mut [f64], target: &mut [f64]) {
        let c = &self.config;
        if c.noise_std == 0.0 && c.offset_std == 0.0 {
            return;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
        rng.set_stream(row as u64);
        let offset = if c.offset_std > 0.0 {
            let z: f64 = StandardNormal.sample(&mut rng);
            c.offset_std * z
        } else {
            0.0
        };
        for v in input.iter_mut() {
            *v += offset;
            if c.noise_std > 0.0 {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v += c.noise_std * z;
            }
        }
        if c.offset_targets && offset != 0.0 {
            for v in target.iter_mut() {
                *v += offset;
            }
        }
    }
}

impl RowBlocks for AugmentedView<'_> {
    fn n_rows(&self) -> usize {
        self.base.len() * self.config.reps
    }

    fn n_cols(&self) -> usize {
        self.base.n_len()
    }

    fn fill_block(&self, start: usize, len: usize, inputs: &mut [f64], targets: &mut [f64]) {
        let n = self.n_cols();
        let m = self.base.len();
        inputs
            .par_chunks_mut(n.max(1))
            .zip(targets.par_chunks_mut(n.max(1)))
            .enumerate()
            .take(len)
            .for_each(|(k, (fi, ft))| {
                let row = start + k;
                fi.copy_from_slice(self.base.inputs.row(row % m));
                ft.copy_from_slice(self.base.targets.row(row % m));
                self.perturb(row, fi, ft);
            });
    }

    fn provenance(&self) -> serde_json::Value {
        let mut p = self.base.provenance.clone();
        p.augmentations.push(self.record());
        serde_json::to_value(&p).unwrap_or(serde_json::Value::Null)
    }
}

pub fn augment_with(set: &TrainingSet, config: AugmentConfig) -> Result<TrainingSet> {
    let view = AugmentedView::new(set, config)?;
    let rows = view.n_rows();
    let n = set.n_len();
    let mut inputs = vec![0.0; rows * n];
    let mut targets = vec![0.0; rows * n];
    view.fill_block(0, rows, &mut inputs, &mut targets);
    let params = if set.params.is_empty() {
        Vec::new()
    } else {
        (0..rows).map(|j| set.params[j % set.len()].clone()).collect()
    };
    let mut provenance = set.provenance.clone();
    provenance.augmentations.push(view.record());
    TrainingSet::new(Matrix::from_vec(rows, n, inputs)?, Matrix::from_vec(rows, n, targets)?, params, provenance)
}

/// `reps` perturbed copies of the inputs with untouched targets.
pub fn augment(set: &TrainingSet, reps: usize, noise_std: f64, offset_std: f64, seed: u64) -> Result<TrainingSet> {
    augment_with(set, AugmentConfig::new(reps, noise_std, offset_std, seed))
}
