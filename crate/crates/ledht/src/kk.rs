//! Kramers-Kronig extraction of the normalized susceptibility from a CARS
//! spectrum and its nonresonant background.
//!
//! With `r = I_CARS / I_NRB`, the amplitude is `A = √r` and the phase is
//! `φ = s · H{½ ln r}`, where `s = +1` for an ascending frequency axis and
//! `-1` for a descending one. The retrieved ratio is `A e^{iφ}`, which
//! estimates `χ / χ_nr` including its unit nonresonant part.

use std::collections::BTreeMap;

use rayon::prelude::*;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dht::{DhtPlan, PaddedPlan, Variant};
use crate::error::{Error, Result};
use crate::learn::{fit_with, FitOptions, LedhtMatrix};
use crate::synth::{gen_single_peak, AugmentConfig, AugmentedView, GenConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AxisDirection {
    #[default]
    Ascending,
    Descending,
}

impl AxisDirection {
    pub fn sign(self) -> f64 {
        match self {
            Self::Ascending => 1.0,
            Self::Descending => -1.0,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Self::Ascending => Self::Descending,
            Self::Descending => Self::Ascending,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarsPair {
    pub i_cars: Vec<f64>,
    pub i_nrb: Vec<f64>,
    pub axis: Option<Vec<f64>>,
    pub direction: AxisDirection,
}

impl CarsPair {
    pub fn new(i_cars: Vec<f64>, i_nrb: Vec<f64>, axis: Option<Vec<f64>>, direction: AxisDirection) -> Result<Self> {
        let pair = Self {
            i_cars,
            i_nrb,
            axis,
            direction,
        };
        pair.validate()?;
        Ok(pair)
    }

    /// Builds a pair whose direction is read off a strictly monotonic axis.
    pub fn with_axis(i_cars: Vec<f64>, i_nrb: Vec<f64>, axis: Vec<f64>) -> Result<Self> {
        let direction = if axis.len() >= 2 && axis[1] < axis[0] {
            AxisDirection::Descending
        } else {
            AxisDirection::Ascending
        };
        Self::new(i_cars, i_nrb, Some(axis), direction)
    }

    pub fn len(&self) -> usize {
        self.i_cars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.i_cars.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.i_cars.len();
        if self.i_nrb.len() != n {
            return Err(Error::InvalidInput(format!(
                "CARS has {n} samples but NRB has {}",
                self.i_nrb.len()
            )));
        }
        if n < 3 {
            return Err(Error::InvalidInput(format!("spectra need at least 3 samples, got {n}")));
        }
        crate::error::ensure_finite(&self.i_cars, "CARS spectrum")?;
        crate::error::ensure_finite(&self.i_nrb, "NRB spectrum")?;
        if let Some(axis) = &self.axis {
            if axis.len() != n {
                return Err(Error::InvalidInput(format!("axis has {} samples, spectra have {n}", axis.len())));
            }
            let s = self.direction.sign();
            if axis.windows(2).any(|w| (w[1] - w[0]) * s <= 0.0 || (w[1] - w[0]).is_nan()) {
                return Err(Error::InvalidInput(format!(
                    "axis is not strictly {:?}",
                    self.direction
                )));
            }
        }
        Ok(())
    }

    /// Contiguous sub-window `start..start + len`.
    pub fn crop(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.len() {
            return Err(Error::InvalidConfig(format!(
                "crop {start}..{} exceeds {} samples",
                start + len,
                self.len()
            )));
        }
        Self::new(
            self.i_cars[start..start + len].to_vec(),
            self.i_nrb[start..start + len].to_vec(),
            self.axis.as_ref().map(|a| a[start..start + len].to_vec()),
            self.direction,
        )
    }
}

/// Complex Lorentzian resonance `a / (Ω - ω - iΓ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Resonance {
    pub omega: f64,
    pub gamma: f64,
    pub amplitude: f64,
}

/// Forward model on the ascending pixel axis `0..n`:
/// `χ = χ_nr + Σ a / (Ω - ω - iΓ)`, `I_CARS = |χ|²`, `I_NRB = χ_nr²`.
/// Returns the pair and the exact ratio `χ / χ_nr`.
pub fn forward_model(n: usize, chi_nr: f64, resonances: &[Resonance]) -> Result<(CarsPair, Vec<Complex64>)> {
    if !(chi_nr.is_finite() && chi_nr > 0.0) {
        return Err(Error::InvalidParameter(format!("chi_nr must be positive, got {chi_nr}")));
    }
    let chi: Vec<Complex64> = (0..n)
        .map(|w| {
            let w = w as f64;
            resonances.iter().fold(Complex64::new(chi_nr, 0.0), |acc, r| {
                acc + r.amplitude / Complex64::new(r.omega - w, -r.gamma)
            })
        })
        .collect();
    let i_cars = chi.iter().map(|c| c.norm_sqr()).collect();
    let i_nrb = vec![chi_nr * chi_nr; n];
    let ratio = chi.iter().map(|c| c / chi_nr).collect();
    let axis = (0..n).map(|w| w as f64).collect();
    Ok((CarsPair::new(i_cars, i_nrb, Some(axis), AxisDirection::Ascending)?, ratio))
}

#[derive(Debug, Clone, Copy)]
pub enum KkBackend<'a> {
    Dht,
    DhtPad(usize),
    Ledht(&'a LedhtMatrix),
}

impl KkBackend<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Dht => "dht",
            Self::DhtPad(_) => "dht_pad",
            Self::Ledht(_) => "ledht",
        }
    }

    fn transform(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            Self::Dht => DhtPlan::new(x.len()).dht(x, Variant::Marple),
            Self::DhtPad(p) => PaddedPlan::new(x.len(), *p).apply(x),
            Self::Ledht(m) => {
                if m.n_len() != x.len() {
                    return Err(Error::InvalidInput(format!(
                        "matrix expects {} samples, spectrum has {}",
                        m.n_len(),
                        x.len()
                    )));
                }
                m.apply_row(x)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KkOptions {
    /// Nonpositive ratio samples are raised to this fraction of the maximum ratio.
    pub clamp_rel_epsilon: f64,
    /// Largest fraction of samples that may be clamped before the run fails.
    pub clamp_budget: f64,
    /// Also report `ratio - 1`, the resonant part alone.
    pub subtract_one: bool,
}

impl Default for KkOptions {
    fn default() -> Self {
        Self {
            clamp_rel_epsilon: 1e-8,
            clamp_budget: 0.01,
            subtract_one: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KkResult {
    pub amplitude: Vec<f64>,
    pub phase: Vec<f64>,
    pub ratio: Vec<Complex64>,
    /// `ratio - 1`, present when requested.
    pub resonant: Option<Vec<Complex64>>,
    pub backend: String,
    pub clamped: Vec<usize>,
    pub direction: AxisDirection,
}

fn clamped_ratio(pair: &CarsPair, opts: &KkOptions) -> Result<(Vec<f64>, Vec<usize>)> {
    let mut r: Vec<f64> = pair.i_cars.iter().zip(&pair.i_nrb).map(|(c, b)| c / b).collect();
    let bad: Vec<usize> = r.iter().enumerate().filter(|(_, v)| !v.is_finite()).map(|(i, _)| i).collect();
    if !bad.is_empty() {
        return Err(Error::DataQuality {
            message: "ratio is not finite (zero background)".into(),
            indices: bad,
        });
    }
    let nonpos: Vec<usize> = r.iter().enumerate().filter(|(_, v)| **v <= 0.0).map(|(i, _)| i).collect();
    if !nonpos.is_empty() {
        let budget = (opts.clamp_budget * r.len() as f64).floor() as usize;
        let peak = r.iter().copied().fold(0.0, f64::max);
        if nonpos.len() > budget || peak <= 0.0 {
            return Err(Error::DataQuality {
                message: format!("{} nonpositive ratio samples exceed the clamp budget of {budget}", nonpos.len()),
                indices: nonpos,
            });
        }
        let eps = opts.clamp_rel_epsilon * peak;
        for &i in &nonpos {
            r[i] = eps;
        }
    }
    Ok((r, nonpos))
}

pub fn kk_retrieve(pair: &CarsPair, backend: KkBackend<'_>, opts: &KkOptions) -> Result<KkResult> {
    pair.validate()?;
    let (r, clamped) = clamped_ratio(pair, opts)?;
    let half_log: Vec<f64> = r.iter().map(|v| 0.5 * v.ln()).collect();
    let s = pair.direction.sign();
    let phase: Vec<f64> = backend.transform(&half_log)?.into_iter().map(|v| s * v).collect();
    let amplitude: Vec<f64> = r.iter().map(|v| v.sqrt()).collect();
    let ratio: Vec<Complex64> = amplitude.iter().zip(&phase).map(|(&a, &p)| Complex64::from_polar(a, p)).collect();
    let resonant = opts.subtract_one.then(|| ratio.iter().map(|c| c - 1.0).collect());
    Ok(KkResult {
        amplitude,
        phase,
        ratio,
        resonant,
        backend: backend.name().into(),
        clamped,
        direction: pair.direction,
    })
}

/// Which part of the full window each crop keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CropMode {
    /// Drop samples from the start, keep the end.
    #[default]
    KeepHigh,
    /// Drop samples from the end.
    KeepLow,
    Center,
}

impl CropMode {
    pub fn offset(self, full: usize, width: usize) -> usize {
        match self {
            Self::KeepHigh => full - width,
            Self::KeepLow => 0,
            Self::Center => (full - width) / 2,
        }
    }
}

/// One learned matrix per crop width.
#[derive(Debug, Clone, Default)]
pub struct LedhtBank {
    pub matrices: BTreeMap<usize, LedhtMatrix>,
}

/// Recipe for training a bank: `gen.n_len` is replaced by each width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankTraining {
    pub gen: GenConfig,
    pub augment: AugmentConfig,
    #[serde(default)]
    pub fit: FitOptions,
}

impl LedhtBank {
    pub fn train(widths: &[usize], recipe: &BankTraining) -> Result<Self> {
        let mut matrices = BTreeMap::new();
        for &w in widths {
            if matrices.contains_key(&w) {
                continue;
            }
            let gen = GenConfig { n_len: w, ..recipe.gen.clone() };
            let set = gen_single_peak(&gen)?;
            let view = AugmentedView::new(&set, recipe.augment)?;
            let (m, _) = fit_with(&view, &recipe.fit)?;
            matrices.insert(w, m);
        }
        Ok(Self { matrices })
    }

    pub fn get(&self, width: usize) -> Result<&LedhtMatrix> {
        self.matrices
            .get(&width)
            .ok_or_else(|| Error::InvalidConfig(format!("no learned matrix for crop width {width}")))
    }
}

#[derive(Debug, Clone)]
pub enum SweepBackend {
    Dht,
    /// Pad length, defaulting to the crop width.
    DhtPad(Option<usize>),
    Ledht(LedhtBank),
}

impl SweepBackend {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Dht => "dht",
            Self::DhtPad(_) => "dht_pad",
            Self::Ledht(_) => "ledht",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub width: usize,
    pub offset: usize,
    pub backend: String,
    /// Values at each anchor, in anchor order.
    pub phase: Vec<f64>,
    pub im_ratio: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorStats {
    pub backend: String,
    pub anchor: usize,
    pub phase_mean: f64,
    pub phase_std: f64,
    pub im_mean: f64,
    pub im_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub widths: Vec<usize>,
    pub anchors: Vec<usize>,
    pub crop: CropMode,
    pub cells: Vec<SweepCell>,
    pub stats: Vec<AnchorStats>,
}

impl SweepReport {
    pub fn stat(&self, backend: &str, anchor: usize) -> Option<&AnchorStats> {
        self.stats.iter().find(|s| s.backend == backend && s.anchor == anchor)
    }
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Runs the retrieval on every crop width and backend and records the phase
/// and imaginary ratio at the anchors, which are sample indices of the full
/// window. Statistics use the population standard deviation.
pub fn stability_sweep(
    pair: &CarsPair,
    widths: &[usize],
    backends: &[SweepBackend],
    anchors: &[usize],
    crop: CropMode,
    opts: &KkOptions,
) -> Result<SweepReport> {
    pair.validate()?;
    let full = pair.len();
    if widths.is_empty() || backends.is_empty() || anchors.is_empty() {
        return Err(Error::InvalidConfig("sweep needs widths, backends and anchors".into()));
    }
    for &w in widths {
        if w < 3 || w > full {
            return Err(Error::InvalidConfig(format!("crop width {w} outside [3, {full}]")));
        }
        let off = crop.offset(full, w);
        if let Some(a) = anchors.iter().find(|&&a| a < off || a >= off + w) {
            return Err(Error::InvalidConfig(format!(
                "anchor {a} lies outside the crop {off}..{} of width {w}",
                off + w
            )));
        }
    }
    for b in backends {
        if let SweepBackend::Ledht(bank) = b {
            for &w in widths {
                bank.get(w)?;
            }
        }
    }
    let jobs: Vec<(usize, usize)> = widths
        .iter()
        .flat_map(|&w| (0..backends.len()).map(move |b| (w, b)))
        .collect();
    let cells = jobs
        .par_iter()
        .map(|&(w, bi)| {
            let off = crop.offset(full, w);
            let sub = pair.crop(off, w)?;
            let backend = &backends[bi];
            let res = match backend {
                SweepBackend::Dht => kk_retrieve(&sub, KkBackend::Dht, opts),
                SweepBackend::DhtPad(p) => kk_retrieve(&sub, KkBackend::DhtPad(p.unwrap_or(w)), opts),
                SweepBackend::Ledht(bank) => kk_retrieve(&sub, KkBackend::Ledht(bank.get(w)?), opts),
            }?;
            Ok(SweepCell {
                width: w,
                offset: off,
                backend: backend.name().into(),
                phase: anchors.iter().map(|&a| res.phase[a - off]).collect(),
                im_ratio: anchors.iter().map(|&a| res.ratio[a - off].im).collect(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut stats = Vec::new();
    for b in backends {
        let mine: Vec<&SweepCell> = cells.iter().filter(|c| c.backend == b.name()).collect();
        for (k, &anchor) in anchors.iter().enumerate() {
            let ph: Vec<f64> = mine.iter().map(|c| c.phase[k]).collect();
            let im: Vec<f64> = mine.iter().map(|c| c.im_ratio[k]).collect();
            let (phase_mean, phase_std) = mean_std(&ph);
            let (im_mean, im_std) = mean_std(&im);
            stats.push(AnchorStats {
                backend: b.name().into(),
                anchor,
                phase_mean,
                phase_std,
                im_mean,
                im_std,
            });
        }
    }
    Ok(SweepReport {
        widths: widths.to_vec(),
        anchors: anchors.to_vec(),
        crop,
        cells,
        stats,
    })
}

/// `count` integer widths evenly spaced from `from` down to `to`, inclusive.
pub fn linspace_widths(from: usize, to: usize, count: usize) -> Vec<usize> {
    if count <= 1 {
        return vec![from];
    }
    (0..count)
        .map(|i| {
            let t = i as f64 / (count - 1) as f64;
            (from as f64 + t * (to as f64 - from as f64)).round() as usize
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> (CarsPair, Vec<Complex64>) {
        let res = [
            Resonance { omega: 40.0, gamma: 4.0, amplitude: 2.0 },
            Resonance { omega: 70.0, gamma: 6.0, amplitude: 3.0 },
        ];
        forward_model(101, 1.0, &res).unwrap()
    }

    #[test]
    fn equal_spectra_give_unit_ratio() {
        let pair = CarsPair::new(vec![2.0; 9], vec![2.0; 9], None, AxisDirection::Ascending).unwrap();
        for b in [KkBackend::Dht, KkBackend::DhtPad(9)] {
            let r = kk_retrieve(&pair, b, &KkOptions::default()).unwrap();
            assert!(r.amplitude.iter().all(|a| *a == 1.0));
            assert!(r.phase.iter().all(|p| p.abs() < 1e-15));
            assert!(r.ratio.iter().all(|c| (c - 1.0).norm() < 1e-15));
        }
    }

    #[test]
    fn ratio_consistent_with_amplitude_and_phase() {
        let (pair, _) = model();
        let r = kk_retrieve(&pair, KkBackend::Dht, &KkOptions { subtract_one: true, ..KkOptions::default() }).unwrap();
        for i in 0..pair.len() {
            assert!(r.amplitude[i] >= 0.0);
            assert!((r.ratio[i].norm() - r.amplitude[i]).abs() <= 1e-12 * r.amplitude[i].max(1.0));
            assert!((r.ratio[i].re - r.amplitude[i] * r.phase[i].cos()).abs() < 1e-12);
            assert!((r.ratio[i].im - r.amplitude[i] * r.phase[i].sin()).abs() < 1e-12);
            assert_eq!(r.resonant.as_ref().unwrap()[i], r.ratio[i] - 1.0);
        }
    }

    #[test]
    fn flipping_direction_negates_phase() {
        let (pair, _) = model();
        let flipped = CarsPair { axis: None, direction: pair.direction.flipped(), ..pair.clone() };
        let a = kk_retrieve(&pair, KkBackend::DhtPad(101), &KkOptions::default()).unwrap();
        let b = kk_retrieve(&flipped, KkBackend::DhtPad(101), &KkOptions::default()).unwrap();
        for (x, y) in a.phase.iter().zip(&b.phase) {
            assert_eq!(*x, -*y);
        }
        assert_eq!(a.amplitude, b.amplitude);
    }

    #[test]
    fn amplitude_is_backend_agnostic() {
        let (pair, _) = model();
        let m = LedhtMatrix::identity(101);
        let amps: Vec<Vec<f64>> = [KkBackend::Dht, KkBackend::DhtPad(50), KkBackend::Ledht(&m)]
            .iter()
            .map(|b| kk_retrieve(&pair, *b, &KkOptions::default()).unwrap().amplitude)
            .collect();
        assert_eq!(amps[0], amps[1]);
        assert_eq!(amps[0], amps[2]);
    }

    #[test]
    fn compact_bump_agrees_at_center() {
        let n = 201;
        let cars: Vec<f64> = (0..n)
            .map(|i| {
                let d = (i as f64 - 100.0) / 8.0;
                1.0 + 0.5 * (-d * d).exp()
            })
            .collect();
        let pair = CarsPair::new(cars, vec![1.0; n], None, AxisDirection::Ascending).unwrap();
        let a = kk_retrieve(&pair, KkBackend::Dht, &KkOptions::default()).unwrap();
        let b = kk_retrieve(&pair, KkBackend::DhtPad(n), &KkOptions::default()).unwrap();
        assert!((a.phase[100] - b.phase[100]).abs() < 1e-3);
    }

    #[test]
    fn clamping_budget() {
        let mut cars = vec![1.0; 300];
        cars[10] = 0.0;
        cars[20] = -1e-3;
        let pair = CarsPair::new(cars.clone(), vec![1.0; 300], None, AxisDirection::Ascending).unwrap();
        let r = kk_retrieve(&pair, KkBackend::Dht, &KkOptions::default()).unwrap();
        assert_eq!(r.clamped, vec![10, 20]);
        assert!((r.amplitude[10] - 1e-4).abs() < 1e-18);
        cars[30] = 0.0;
        cars[40] = 0.0;
        let pair = CarsPair::new(cars, vec![1.0; 300], None, AxisDirection::Ascending).unwrap();
        match kk_retrieve(&pair, KkBackend::Dht, &KkOptions::default()) {
            Err(Error::DataQuality { indices, .. }) => assert_eq!(indices, vec![10, 20, 30, 40]),
            other => panic!("expected data-quality error, got {other:?}"),
        }
    }

    #[test]
    fn input_validation() {
        assert!(CarsPair::new(vec![1.0; 4], vec![1.0; 5], None, AxisDirection::Ascending).is_err());
        assert!(CarsPair::with_axis(vec![1.0; 3], vec![1.0; 3], vec![3.0, 2.0, 1.0]).is_ok());
        assert!(CarsPair::new(vec![1.0; 3], vec![1.0; 3], Some(vec![1.0, 3.0, 2.0]), AxisDirection::Ascending).is_err());
        let (pair, _) = model();
        let m = LedhtMatrix::identity(50);
        assert!(matches!(kk_retrieve(&pair, KkBackend::Ledht(&m), &KkOptions::default()), Err(Error::InvalidInput(_))));
        let zero_bg = CarsPair::new(vec![1.0; 3], vec![1.0, 0.0, 1.0], None, AxisDirection::Ascending).unwrap();
        assert!(matches!(kk_retrieve(&zero_bg, KkBackend::Dht, &KkOptions::default()), Err(Error::DataQuality { .. })));
    }

    #[test]
    fn sweep_shapes_and_constant_ratio() {
        let n = 120;
        let pair = CarsPair::new(vec![3.0; n], vec![1.5; n], None, AxisDirection::Ascending).unwrap();
        let widths = linspace_widths(120, 76, 23);
        assert_eq!(widths.len(), 23);
        let backends = [SweepBackend::Dht, SweepBackend::DhtPad(None)];
        let rep = stability_sweep(&pair, &widths, &backends, &[100, 110], CropMode::KeepHigh, &KkOptions::default()).unwrap();
        assert_eq!(rep.cells.len(), 46);
        assert!(rep.stats.iter().all(|s| s.phase_std < 1e-14 && s.im_std < 1e-14));
        let err = stability_sweep(&pair, &widths, &backends, &[10], CropMode::KeepHigh, &KkOptions::default()).unwrap_err();
        assert!(matches!(err, Error::InvalidConfig(_)));
        let missing = [SweepBackend::Ledht(LedhtBank::default())];
        assert!(stability_sweep(&pair, &widths, &missing, &[100], CropMode::KeepHigh, &KkOptions::default()).is_err());
    }

    #[test]
    fn crop_offsets() {
        assert_eq!(CropMode::KeepHigh.offset(10, 7), 3);
        assert_eq!(CropMode::KeepLow.offset(10, 7), 0);
        assert_eq!(CropMode::Center.offset(10, 7), 1);
        assert_eq!(linspace_widths(301, 211, 10), vec![301, 291, 281, 271, 261, 251, 241, 231, 221, 211]);
    }
}
