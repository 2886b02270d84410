//! Analytic lineshapes and their continuous Hilbert partners.
//!
//! Convention: `H f(x) = (1/π) p.v. ∫ f(x') / (x - x') dx'`. Under this
//! kernel the peaked member of each pair maps to its partner with factor +1
//! and the partner maps back with factor -1:
//!
//! * `H{gaussian} = dawson`, `H{dawson} = -gaussian`
//! * `H{lorentzian} = dispersive`, `H{dispersive} = -lorentzian`
//!
//! where `dawson(c, σ, a)(x) = a (2/√π) D((x - c) / (√2 σ))`. The signs are
//! guarded by tests against the quadrature oracle.

mod dawson;
mod oracle;
pub mod quad;

use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use dawson::dawson;
pub use oracle::{hilbert_oracle, hilbert_oracle_at, OracleOptions};

/// Ratio of FWHM to standard deviation for a Gaussian.
pub fn gaussian_fwhm_factor() -> f64 {
    2.0 * (2.0 * std::f64::consts::LN_2).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineshapeKind {
    Gaussian,
    Dawson,
    Lorentzian,
    Dispersive,
}

impl LineshapeKind {
    pub const ALL: [LineshapeKind; 4] = [
        LineshapeKind::Gaussian,
        LineshapeKind::Dawson,
        LineshapeKind::Lorentzian,
        LineshapeKind::Dispersive,
    ];

    pub fn partner(self) -> Self {
        match self {
            Self::Gaussian => Self::Dawson,
            Self::Dawson => Self::Gaussian,
            Self::Lorentzian => Self::Dispersive,
            Self::Dispersive => Self::Lorentzian,
        }
    }

    /// Gaussian and Lorentzian are the peaked members of their pairs.
    pub fn is_peaked(self) -> bool {
        matches!(self, Self::Gaussian | Self::Lorentzian)
    }

    pub fn peaked(self) -> Self {
        if self.is_peaked() {
            self
        } else {
            self.partner()
        }
    }

    /// FWHM of the peaked member of this kind's pair for the given width.
    pub fn fwhm(self, width: f64) -> f64 {
        match self.peaked() {
            Self::Gaussian => gaussian_fwhm_factor() * width,
            _ => 2.0 * width,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Gaussian => "gaussian",
            Self::Dawson => "dawson",
            Self::Lorentzian => "lorentzian",
            Self::Dispersive => "dispersive",
        }
    }
}

impl fmt::Display for LineshapeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LineshapeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" => Ok(Self::Gaussian),
            "dawson" => Ok(Self::Dawson),
            "lorentzian" => Ok(Self::Lorentzian),
            "dispersive" => Ok(Self::Dispersive),
            other => Err(Error::UnsupportedLineshape(other.to_string())),
        }
    }
}

/// One analytic peak. `width` is σ for gaussian/dawson and Γ for
/// lorentzian/dispersive, in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineshapeParams {
    pub kind: LineshapeKind,
    pub center: f64,
    pub width: f64,
    pub amplitude: f64,
}

impl LineshapeParams {
    pub fn new(kind: LineshapeKind, center: f64, width: f64, amplitude: f64) -> Self {
        Self {
            kind,
            center,
            width,
            amplitude,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.center.is_finite() && self.width.is_finite() && self.amplitude.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "lineshape fields must be finite: {self:?}"
            )));
        }
        if self.width <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "lineshape width must be positive, got {}",
                self.width
            )));
        }
        Ok(())
    }

    /// Value at a single point; assumes the parameters are valid.
    pub fn value_at(&self, x: f64) -> f64 {
        let (a, c, w) = (self.amplitude, self.center, self.width);
        let d = x - c;
        match self.kind {
            LineshapeKind::Gaussian => a * (-d * d / (2.0 * w * w)).exp(),
            LineshapeKind::Dawson => a * (2.0 / PI.sqrt()) * dawson(d / (SQRT_2 * w)),
            LineshapeKind::Lorentzian => a * w * w / (d * d + w * w),
            LineshapeKind::Dispersive => a * w * d / (d * d + w * w),
        }
    }

    pub fn fwhm(&self) -> f64 {
        self.kind.fwhm(self.width)
    }

    pub fn with_amplitude(mut self, amplitude: f64) -> Self {
        self.amplitude = amplitude;
        self
    }
}

/// Unit-spaced sample positions `start, start + 1, ..., start + len - 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub start: f64,
    pub len: usize,
}

impl Grid {
    pub fn new(start: f64, len: usize) -> Self {
        Self { start, len }
    }

    /// The centered pixel grid `-(N/2) ..= N - 1 - N/2`.
    pub fn centered(len: usize) -> Self {
        Self {
            start: -((len / 2) as f64),
            len,
        }
    }

    pub fn first(&self) -> f64 {
        self.start
    }

    pub fn last(&self) -> f64 {
        self.start + self.len as f64 - 1.0
    }

    pub fn point(&self, i: usize) -> f64 {
        self.start + i as f64
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        (0..self.len).map(move |i| self.point(i))
    }

    /// Index range covering the central `fraction` of the grid.
    pub fn interior(&self, fraction: f64) -> std::ops::Range<usize> {
        let skip = ((1.0 - fraction) * 0.5 * self.len as f64).floor() as usize;
        skip..self.len - skip
    }
}

pub fn eval_lineshape(p: &LineshapeParams, grid: &Grid) -> Result<Vec<f64>> {
    p.validate()?;
    if grid.len < 3 {
        return Err(Error::InvalidParameter(format!(
            "grid length must be at least 3, got {}",
            grid.len
        )));
    }
    Ok(grid.points().map(|x| p.value_at(x)).collect())
}

/// Adds `p` sampled on `grid` into `out` without allocating.
pub fn accumulate(p: &LineshapeParams, grid: &Grid, out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        *o += p.value_at(grid.point(i));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HilbertPair {
    pub input: LineshapeParams,
    pub target: LineshapeParams,
    /// `target.amplitude = factor * input.amplitude`.
    pub factor: f64,
}

pub fn hilbert_pair(p: &LineshapeParams) -> Result<HilbertPair> {
    p.validate()?;
    let factor = if p.kind.is_peaked() { 1.0 } else { -1.0 };
    Ok(HilbertPair {
        input: *p,
        target: LineshapeParams {
            kind: p.kind.partner(),
            amplitude: factor * p.amplitude,
            ..*p
        },
        factor,
    })
}

/// Which member of a pair is fed to a transform and which is its target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    DawsonToGaussian,
    GaussianToDawson,
    DispersiveToLorentzian,
    LorentzianToDispersive,
}

impl Direction {
    pub fn input_kind(self) -> LineshapeKind {
        match self {
            Self::DawsonToGaussian => LineshapeKind::Dawson,
            Self::GaussianToDawson => LineshapeKind::Gaussian,
            Self::DispersiveToLorentzian => LineshapeKind::Dispersive,
            Self::LorentzianToDispersive => LineshapeKind::Lorentzian,
        }
    }

    pub fn target_kind(self) -> LineshapeKind {
        self.input_kind().partner()
    }

    /// Builds an input/target pair whose peaked member has amplitude
    /// `amplitude`; the other member carries whatever sign keeps
    /// `target = H{input}`.
    pub fn pair(self, center: f64, width: f64, amplitude: f64) -> Result<HilbertPair> {
        let kind = self.input_kind();
        if kind.is_peaked() {
            hilbert_pair(&LineshapeParams::new(kind, center, width, amplitude))
        } else {
            let peaked = LineshapeParams::new(kind.peaked(), center, width, amplitude);
            let partner = hilbert_pair(&peaked)?.target;
            let input = partner.with_amplitude(-partner.amplitude);
            hilbert_pair(&input)
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::DawsonToGaussian => "dawson_to_gaussian",
            Self::GaussianToDawson => "gaussian_to_dawson",
            Self::DispersiveToLorentzian => "dispersive_to_lorentzian",
            Self::LorentzianToDispersive => "lorentzian_to_dispersive",
        }
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "dawson_to_gaussian" => Ok(Self::DawsonToGaussian),
            "gaussian_to_dawson" => Ok(Self::GaussianToDawson),
            "dispersive_to_lorentzian" => Ok(Self::DispersiveToLorentzian),
            "lorentzian_to_dispersive" => Ok(Self::LorentzianToDispersive),
            other => Err(Error::UnsupportedLineshape(format!("unknown direction {other}"))),
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gauss(c: f64, s: f64, a: f64) -> LineshapeParams {
        LineshapeParams::new(LineshapeKind::Gaussian, c, s, a)
    }

    #[test]
    fn gaussian_peak_and_fwhm() {
        let p = gauss(3.0, 7.0, 1.0);
        assert_eq!(p.value_at(3.0), 1.0);
        // Bisect the half-height crossing on the right flank.
        let (mut lo, mut hi) = (3.0, 3.0 + 10.0 * 7.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if p.value_at(mid) > 0.5 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let fwhm = 2.0 * (lo - 3.0);
        assert!((fwhm - gaussian_fwhm_factor() * 7.0).abs() < 1e-12);
        assert!((p.fwhm() - fwhm).abs() < 1e-12);
    }

    #[test]
    fn dispersive_is_odd() {
        let p = LineshapeParams::new(LineshapeKind::Dispersive, 2.0, 5.0, 1.5);
        assert_eq!(p.value_at(2.0), 0.0);
        for d in [0.5, 3.0, 40.0] {
            assert!((p.value_at(2.0 + d) + p.value_at(2.0 - d)).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_bad_width_and_short_grid() {
        let bad = gauss(0.0, 0.0, 1.0);
        assert!(matches!(
            eval_lineshape(&bad, &Grid::centered(11)),
            Err(Error::InvalidParameter(_))
        ));
        assert!(eval_lineshape(&gauss(0.0, 1.0, 1.0), &Grid::centered(2)).is_err());
    }

    #[test]
    fn pair_partner_is_odd_about_center() {
        let pair = hilbert_pair(&gauss(5.0, 3.0, 1.0)).unwrap();
        assert_eq!(pair.target.kind, LineshapeKind::Dawson);
        assert_eq!(pair.target.value_at(5.0), 0.0);
    }

    #[test]
    fn pair_involution_negates() {
        for kind in LineshapeKind::ALL {
            let p = LineshapeParams::new(kind, -4.0, 9.0, 1.25);
            let back = hilbert_pair(&hilbert_pair(&p).unwrap().target).unwrap().target;
            assert_eq!(back, p.with_amplitude(-1.25));
        }
    }

    #[test]
    fn direction_pairs_keep_peaked_positive() {
        for d in [
            Direction::DawsonToGaussian,
            Direction::GaussianToDawson,
            Direction::DispersiveToLorentzian,
            Direction::LorentzianToDispersive,
        ] {
            let pair = d.pair(1.0, 4.0, 2.0).unwrap();
            assert_eq!(pair.input.kind, d.input_kind());
            assert_eq!(pair.target.kind, d.target_kind());
            let peaked = if pair.input.kind.is_peaked() { pair.input } else { pair.target };
            assert_eq!(peaked.amplitude, 2.0);
            assert_eq!(hilbert_pair(&pair.input).unwrap().target, pair.target);
        }
    }

    #[test]
    fn dilation_scales_partner() {
        let s = 2.5;
        let narrow = hilbert_pair(&gauss(0.0, 4.0, 1.0)).unwrap().target;
        let wide = hilbert_pair(&gauss(0.0, 4.0 * s, 1.0)).unwrap().target;
        for x in [-13.0, -2.0, 0.7, 6.0, 31.0] {
            assert!((wide.value_at(s * x) - narrow.value_at(x)).abs() < 1e-15);
        }
    }

    #[test]
    fn parse_kinds() {
        assert_eq!("Dawson".parse::<LineshapeKind>().unwrap(), LineshapeKind::Dawson);
        assert!(matches!(
            "voigt".parse::<LineshapeKind>(),
            Err(Error::UnsupportedLineshape(_))
        ));
    }

    #[test]
    fn interior_range() {
        let g = Grid::centered(401);
        assert_eq!(g.interior(0.8), 40..361);
        assert_eq!(g.first(), -200.0);
        assert_eq!(g.last(), 200.0);
        assert_eq!(Grid::centered(6).first(), -3.0);
    }
}
