//! Centered-index DFT conventions and FFT-based discrete Hilbert transforms.
//!
//! Samples and frequency bins are stored in centered order: position `p`
//! holds index `p - h` with `h = N / 2` (integer division), so odd `N` spans
//! `[-(N-1)/2, (N-1)/2]` and even `N` spans `[-N/2, N/2 - 1]`.
//! A standard-order FFT is wrapped by two rotations:
//! the input is rotated left by `h` (`x[j] = v[(j + h) mod N]`) so that
//! index 0 lands at position 0, and the output is rotated right by `h`
//! (`out[p] = X[(p - h) mod N]`) to restore centered bin order.
//!
//! The Hilbert multipliers are diagonal in frequency and therefore commute
//! with circular shifts, so the transforms act on the raw array directly.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Marple,
    Henrici,
}

/// Cached forward and inverse FFTs for one length. Cheap to clone and `Sync`.
#[derive(Clone)]
pub struct DhtPlan {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for DhtPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DhtPlan").field("n", &self.n).finish()
    }
}

impl DhtPlan {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    fn check(&self, len: usize) -> Result<()> {
        if len != self.n {
            return Err(Error::InvalidInput(format!(
                "signal length {len} does not match plan length {}",
                self.n
            )));
        }
        Ok(())
    }

    /// Centered forward DFT with the 1/N factor on the forward side.
    pub fn dft(&self, g: &[f64]) -> Result<Vec<Complex64>> {
        self.check(g.len())?;
        ensure_finite(g, "signal")?;
        let buf: Vec<Complex64> = g.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        Ok(self.dft_complex(&buf))
    }

    fn dft_complex(&self, v: &[Complex64]) -> Vec<Complex64> {
        let n = self.n;
        let h = n / 2;
        let mut x: Vec<Complex64> = (0..n).map(|j| v[(j + h) % n]).collect();
        self.fwd.process(&mut x);
        let scale = 1.0 / n as f64;
        (0..n).map(|p| x[(p + n - h) % n] * scale).collect()
    }

    /// Centered inverse DFT, the exact inverse of [`DhtPlan::dft`].
    pub fn idft(&self, f: &[Complex64]) -> Result<Vec<Complex64>> {
        self.check(f.len())?;
        if f.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::InvalidInput("spectrum contains a non-finite value".into()));
        }
        let n = self.n;
        let h = n / 2;
        let mut x: Vec<Complex64> = (0..n).map(|j| f[(j + h) % n]).collect();
        self.inv.process(&mut x);
        Ok((0..n).map(|p| x[(p + n - h) % n]).collect())
    }

    /// Applies a standard-order frequency multiplier and returns the unscaled
    /// inverse transform divided by N.
    fn filtered(&self, g: &[f64], mult: impl Fn(usize) -> Complex64) -> Vec<Complex64> {
        let n = self.n;
        let mut x: Vec<Complex64> = g.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fwd.process(&mut x);
        for (m, c) in x.iter_mut().enumerate() {
            *c *= mult(m);
        }
        self.inv.process(&mut x);
        let scale = 1.0 / n as f64;
        for c in &mut x {
            *c *= scale;
        }
        x
    }

    pub fn dht(&self, g: &[f64], variant: Variant) -> Result<Vec<f64>> {
        self.check(g.len())?;
        ensure_finite(g, "signal")?;
        Ok(match variant {
            Variant::Marple => self.marple_unchecked(g),
            Variant::Henrici => self.henrici_unchecked(g).into_iter().map(|c| c.re).collect(),
        })
    }

    /// Analytic-signal construction: weight 1 on DC, 2 on positive bins,
    /// 1 on the even-length Nyquist bin, 0 on negative bins; the DHT is the
    /// imaginary part.
    fn marple_unchecked(&self, g: &[f64]) -> Vec<f64> {
        let n = self.n;
        let half = n / 2;
        let z = self.filtered(g, |m| {
            let w = if m == 0 || (n.is_multiple_of(2) && m == half) {
                1.0
            } else if m <= (n - 1) / 2 {
                2.0
            } else {
                0.0
            };
            Complex64::new(w, 0.0)
        });
        z.into_iter().map(|c| c.im).collect()
    }

    /// The full complex result of the `-i sgn[k]` filter before the real part
    /// is taken. Its imaginary part is round-off only.
    fn henrici_unchecked(&self, g: &[f64]) -> Vec<Complex64> {
        let n = self.n;
        let half = n / 2;
        self.filtered(g, |m| {
            // The even-length Nyquist bin is its own mirror image, so it gets
            // sign 0; any other choice leaves an imaginary residue.
            if m == 0 || (n.is_multiple_of(2) && m == half) {
                Complex64::new(0.0, 0.0)
            } else if m <= (n - 1) / 2 {
                Complex64::new(0.0, -1.0)
            } else {
                Complex64::new(0.0, 1.0)
            }
        })
    }

    pub fn henrici_complex(&self, g: &[f64]) -> Result<Vec<Complex64>> {
        self.check(g.len())?;
        ensure_finite(g, "signal")?;
        Ok(self.henrici_unchecked(g))
    }
}

/// Plan cache for the padded transform, which runs at length `N + 2 pad_len`.
#[derive(Debug, Clone)]
pub struct PaddedPlan {
    n: usize,
    pad_len: usize,
    inner: DhtPlan,
}

impl PaddedPlan {
    pub fn new(n: usize, pad_len: usize) -> Self {
        Self {
            n,
            pad_len,
            inner: DhtPlan::new(n + 2 * pad_len),
        }
    }

    pub fn pad_len(&self) -> usize {
        self.pad_len
    }

    pub fn apply(&self, g: &[f64]) -> Result<Vec<f64>> {
        if g.len() != self.n {
            return Err(Error::InvalidInput(format!(
                "signal length {} does not match plan length {}",
                g.len(),
                self.n
            )));
        }
        ensure_finite(g, "signal")?;
        if g.is_empty() {
            return Ok(Vec::new());
        }
        let p = self.pad_len;
        let mut ext = Vec::with_capacity(self.n + 2 * p);
        ext.extend(std::iter::repeat_n(g[0], p));
        ext.extend_from_slice(g);
        ext.extend(std::iter::repeat_n(g[self.n - 1], p));
        let out = self.inner.marple_unchecked(&ext);
        Ok(out[p..p + self.n].to_vec())
    }
}

pub fn dft(g: &[f64]) -> Result<Vec<Complex64>> {
    DhtPlan::new(g.len()).dft(g)
}

pub fn idft(f: &[Complex64]) -> Result<Vec<Complex64>> {
    DhtPlan::new(f.len()).idft(f)
}

pub fn dht(g: &[f64], variant: Variant) -> Result<Vec<f64>> {
    DhtPlan::new(g.len()).dht(g, variant)
}

/// Edge-value replication by `pad_len` samples per side, Marple DHT, central crop.
pub fn dht_padded(g: &[f64], pad_len: usize) -> Result<Vec<f64>> {
    PaddedPlan::new(g.len(), pad_len).apply(g)
}

pub fn henrici_complex(g: &[f64]) -> Result<Vec<Complex64>> {
    DhtPlan::new(g.len()).henrici_complex(g)
}

fn centered_index(p: usize, n: usize) -> f64 {
    p as f64 - (n / 2) as f64
}

/// Direct O(N²) evaluation of the centered DFT, independent of the FFT path.
pub fn dft_direct(g: &[f64]) -> Result<Vec<Complex64>> {
    ensure_finite(g, "signal")?;
    let n = g.len();
    let nf = n as f64;
    Ok((0..n)
        .map(|pk| {
            let k = centered_index(pk, n);
            let mut acc = Complex64::new(0.0, 0.0);
            for (pn, &v) in g.iter().enumerate() {
                let ang = -2.0 * PI * reduced(k, centered_index(pn, n), n) / nf;
                acc += Complex64::from_polar(v, ang);
            }
            acc / nf
        })
        .collect())
}

/// Direct O(N²) centered inverse DFT.
pub fn idft_direct(f: &[Complex64]) -> Vec<Complex64> {
    let n = f.len();
    let nf = n as f64;
    (0..n)
        .map(|pn| {
            let x = centered_index(pn, n);
            let mut acc = Complex64::new(0.0, 0.0);
            for (pk, &c) in f.iter().enumerate() {
                let ang = 2.0 * PI * reduced(centered_index(pk, n), x, n) / nf;
                acc += c * Complex64::from_polar(1.0, ang);
            }
            acc
        })
        .collect()
}

/// Direct Henrici sum: Re of the inverse of `-i sgn[k] F[k]`.
pub fn dht_direct(g: &[f64]) -> Result<Vec<f64>> {
    let n = g.len();
    let f = dft_direct(g)?;
    let half = (n / 2) as f64;
    let filtered: Vec<Complex64> = f
        .iter()
        .enumerate()
        .map(|(p, &c)| {
            let k = centered_index(p, n);
            if k == 0.0 || (n.is_multiple_of(2) && k == -half) {
                Complex64::new(0.0, 0.0)
            } else {
                c * Complex64::new(0.0, -k.signum())
            }
        })
        .collect();
    Ok(idft_direct(&filtered).into_iter().map(|c| c.re).collect())
}

/// `k n mod N` in exact integer arithmetic, keeps the phase argument small.
fn reduced(k: f64, x: f64, n: usize) -> f64 {
    let prod = (k as i64) * (x as i64);
    prod.rem_euclid(n as i64) as f64
}

/// Position of the centered mirror image `-n`, taken periodically so the
/// unpaired most-negative index of an even length maps onto itself.
pub fn mirror_position(p: usize, n: usize) -> usize {
    let h = n / 2;
    (2 * h + n - p) % n
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rand_signal(n: usize, seed: u64) -> Vec<f64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn dc_only_signal() {
        let f = dft(&[1.0, 1.0, 1.0]).unwrap();
        assert!((f[0].norm()) < 1e-15);
        assert!((f[1] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        assert!((f[2].norm()) < 1e-15);
    }

    #[test]
    fn centered_impulse_has_flat_spectrum() {
        let f = dft(&[0.0, 1.0, 0.0]).unwrap();
        for c in &f {
            assert!((c - Complex64::new(1.0 / 3.0, 0.0)).norm() < 1e-15);
        }
        let g = idft(&f).unwrap();
        assert!((g[1].re - 1.0).abs() < 1e-15 && g[0].norm() < 1e-15 && g[2].norm() < 1e-15);
    }

    #[test]
    fn delta_at_dc_inverts_to_ones() {
        for n in [4usize, 5] {
            let mut f = vec![Complex64::new(0.0, 0.0); n];
            f[n / 2] = Complex64::new(1.0, 0.0);
            for c in idft(&f).unwrap() {
                assert!((c - Complex64::new(1.0, 0.0)).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn parseval_with_forward_scaling() {
        let g = rand_signal(401, 3);
        let f = dft(&g).unwrap();
        let lhs: f64 = f.iter().map(|c| c.norm_sqr()).sum();
        let rhs: f64 = g.iter().map(|v| v * v).sum::<f64>() / 401.0;
        assert!((lhs - rhs).abs() <= 1e-12 * rhs);
    }

    #[test]
    fn round_trip() {
        for n in [5usize, 6, 401] {
            let g = rand_signal(n, n as u64);
            let back = idft(&dft(&g).unwrap()).unwrap();
            for (a, b) in g.iter().zip(&back) {
                assert!((a - b.re).abs() < 1e-12 && b.im.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn fft_matches_direct_sum() {
        for n in [3usize, 4, 5, 6, 7, 12, 31] {
            let g = rand_signal(n, 11 + n as u64);
            let a = dft(&g).unwrap();
            let b = dft_direct(&g).unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).norm() < 1e-13, "n={n}");
            }
            let h1 = dht(&g, Variant::Henrici).unwrap();
            let h2 = dht_direct(&g).unwrap();
            assert!(max_abs_diff(&h1, &h2) < 1e-13, "n={n}");
        }
    }

    #[test]
    fn constant_maps_to_zero() {
        for v in [Variant::Marple, Variant::Henrici] {
            let out = dht(&[2.5; 7], v).unwrap();
            assert!(out.iter().all(|x| x.abs() < 1e-15));
        }
        let out = dht_padded(&[2.5; 7], 9).unwrap();
        assert!(out.iter().all(|x| x.abs() < 1e-14));
    }

    #[test]
    fn cosine_maps_to_sine() {
        let n = 401;
        let h = (n / 2) as f64;
        let g: Vec<f64> = (0..n)
            .map(|p| (2.0 * PI * 3.0 * (p as f64 - h) / n as f64).cos())
            .collect();
        let s: Vec<f64> = (0..n)
            .map(|p| (2.0 * PI * 3.0 * (p as f64 - h) / n as f64).sin())
            .collect();
        for v in [Variant::Marple, Variant::Henrici] {
            assert!(max_abs_diff(&dht(&g, v).unwrap(), &s) < 1e-12);
        }
    }

    #[test]
    fn impulse_response_n5() {
        let out = dht(&[0.0, 0.0, 1.0, 0.0, 0.0], Variant::Henrici).unwrap();
        let want = 0.4 * ((2.0 * PI / 5.0).sin() + (4.0 * PI / 5.0).sin());
        assert!((out[3] - want).abs() < 1e-14);
        assert!((want - 0.615_536_707).abs() < 1e-8);
    }

    #[test]
    fn zero_padding_is_plain_dht() {
        let g = rand_signal(41, 5);
        assert_eq!(dht_padded(&g, 0).unwrap(), dht(&g, Variant::Marple).unwrap());
    }

    #[test]
    fn rejects_non_finite() {
        assert!(matches!(dft(&[1.0, f64::NAN, 0.0]), Err(Error::InvalidInput(_))));
        assert!(dht(&[1.0, f64::INFINITY, 0.0], Variant::Marple).is_err());
        assert!(dht_padded(&[1.0, f64::NAN, 0.0], 2).is_err());
    }

    #[test]
    fn mirror_positions() {
        assert_eq!((0..5).map(|p| mirror_position(p, 5)).collect::<Vec<_>>(), [4, 3, 2, 1, 0]);
        assert_eq!((0..4).map(|p| mirror_position(p, 4)).collect::<Vec<_>>(), [0, 3, 2, 1]);
    }
}
