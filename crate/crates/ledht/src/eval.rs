//! Error metrics and the three-way method comparison.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dht::{DhtPlan, PaddedPlan, Variant};
use crate::error::{Error, Result};
use crate::learn::{apply, LedhtMatrix};
use crate::matrix::Matrix;
use crate::synth::TrainingSet;

const EVAL_CHUNK: usize = 4096;

/// Methods in tie-breaking order: on equal MSE the earlier one wins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Dht,
    DhtPad,
    Ledht,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Dht, Method::DhtPad, Method::Ledht];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Dht => "dht",
            Method::DhtPad => "dht_pad",
            Method::Ledht => "ledht",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub fn mse(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidInput(format!("length mismatch: {} vs {}", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(Error::InvalidInput("mse of empty signals".into()));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64)
}

/// Argmin over finite entries, first index wins ties; `None` if all failed.
pub fn best_method(mse: &[f64; 3]) -> Option<Method> {
    let mut best: Option<Method> = None;
    for m in Method::ALL {
        let v = mse[m.index()];
        if v.is_finite() && best.is_none_or(|b| v < mse[b.index()]) {
            best = Some(m);
        }
    }
    best
}

/// Linear-interpolation quantile of sorted data (the usual "type 7").
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub count: usize,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    /// Most extreme values within 1.5 IQR of the quartiles.
    pub whisker_low: f64,
    pub whisker_high: f64,
}

impl Aggregate {
    /// Statistics over the finite entries of `values`.
    pub fn from_values(values: &[f64]) -> Self {
        let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
        v.sort_by(f64::total_cmp);
        let count = v.len();
        if count == 0 {
            return Self {
                count,
                mean: f64::NAN,
                std: f64::NAN,
                min: f64::NAN,
                q1: f64::NAN,
                median: f64::NAN,
                q3: f64::NAN,
                max: f64::NAN,
                whisker_low: f64::NAN,
                whisker_high: f64::NAN,
            };
        }
        let mean = v.iter().sum::<f64>() / count as f64;
        let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / count as f64;
        let (q1, q3) = (quantile_sorted(&v, 0.25), quantile_sorted(&v, 0.75));
        let iqr = q3 - q1;
        let whisker_low = v.iter().copied().find(|&x| x >= q1 - 1.5 * iqr).unwrap_or(v[0]);
        let whisker_high = v.iter().rev().copied().find(|&x| x <= q3 + 1.5 * iqr).unwrap_or(v[count - 1]);
        Self {
            count,
            mean,
            std: var.sqrt(),
            min: v[0],
            q1,
            median: quantile_sorted(&v, 0.5),
            q3,
            max: v[count - 1],
            whisker_low,
            whisker_high,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumScore {
    /// MSE per method in [`Method::ALL`] order; NaN marks a failed method.
    pub mse: [f64; 3],
    pub best: Option<Method>,
    pub center: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub index: usize,
    pub method: Method,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenterBin {
    pub center: i64,
    pub count: usize,
    pub mean_mse: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub aggregate: Aggregate,
    pub best_count: usize,
    pub best_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_len: usize,
    pub pad_len: usize,
    pub spectra: Vec<SpectrumScore>,
    pub summary: Vec<MethodSummary>,
    /// Mean MSE per integer center, single-peak sets only.
    pub per_center: Vec<CenterBin>,
    pub failures: Vec<Failure>,
    pub meta: serde_json::Value,
}

impl EvalReport {
    pub fn fraction(&self, m: Method) -> f64 {
        self.summary[m.index()].best_fraction
    }

    pub fn aggregate(&self, m: Method) -> &Aggregate {
        &self.summary[m.index()].aggregate
    }

    pub fn mse_column(&self, m: Method) -> Vec<f64> {
        self.spectra.iter().map(|s| s.mse[m.index()]).collect()
    }

    fn build(n_len: usize, pad_len: usize, spectra: Vec<SpectrumScore>, failures: Vec<Failure>, meta: serde_json::Value) -> Self {
        let scored = spectra.iter().filter(|s| s.best.is_some()).count();
        let summary = Method::ALL
            .iter()
            .map(|&m| {
                let best_count = spectra.iter().filter(|s| s.best == Some(m)).count();
                MethodSummary {
                    method: m,
                    aggregate: Aggregate::from_values(&spectra.iter().map(|s| s.mse[m.index()]).collect::<Vec<_>>()),
                    best_count,
                    best_fraction: if scored == 0 { 0.0 } else { best_count as f64 / scored as f64 },
                }
            })
            .collect();
        let mut bins: std::collections::BTreeMap<i64, (usize, [f64; 3])> = Default::default();
        for s in &spectra {
            if let Some(c) = s.center {
                let e = bins.entry(c.round() as i64).or_insert((0, [0.0; 3]));
                e.0 += 1;
                for k in 0..3 {
                    e.1[k] += s.mse[k];
                }
            }
        }
        let per_center = bins
            .into_iter()
            .map(|(center, (count, sum))| CenterBin {
                center,
                count,
                mean_mse: sum.map(|v| v / count as f64),
            })
            .collect();
        Self {
            n_len,
            pad_len,
            spectra,
            summary,
            per_center,
            failures,
            meta,
        }
    }

    /// Flat per-spectrum table: index, center, one MSE column per method, best.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::InvalidInput(format!("csv: {e}"));
        w.write_record(["index", "center", "mse_dht", "mse_dht_pad", "mse_ledht", "best"]).map_err(io)?;
        for (i, s) in self.spectra.iter().enumerate() {
            w.write_record([
                i.to_string(),
                s.center.map(|c| format!("{c:e}")).unwrap_or_default(),
                format!("{:e}", s.mse[0]),
                format!("{:e}", s.mse[1]),
                format!("{:e}", s.mse[2]),
                s.best.map(|b| b.as_str().to_string()).unwrap_or_default(),
            ])
            .map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::InvalidInput(format!("csv: {e}")))?;
        String::from_utf8(bytes).map_err(|e| Error::InvalidInput(e.to_string()))
    }
}

/// Scores DHT, padded DHT and the learned matrix against `targets`.
/// Per-spectrum failures are recorded rather than aborting the run.
pub fn compare_arrays(
    inputs: &Matrix,
    targets: &Matrix,
    centers: Option<&[f64]>,
    matrix: &LedhtMatrix,
    pad_len: usize,
    meta: serde_json::Value,
) -> Result<EvalReport> {
    let n = inputs.cols();
    if inputs.shape() != targets.shape() {
        return Err(Error::InvalidInput(format!(
            "inputs {:?} and targets {:?} differ in shape",
            inputs.shape(),
            targets.shape()
        )));
    }
    if matrix.n_len() != n {
        return Err(Error::InvalidInput(format!(
            "matrix grid length {} does not match test grid length {n}",
            matrix.n_len()
        )));
    }
    if let Some(c) = centers {
        if c.len() != inputs.rows() {
            return Err(Error::InvalidInput("one center per spectrum required".into()));
        }
    }
    let plan = DhtPlan::new(n);
    let padded = PaddedPlan::new(n, pad_len);
    let mut spectra = Vec::with_capacity(inputs.rows());
    let mut failures = Vec::new();
    for start in (0..inputs.rows()).step_by(EVAL_CHUNK) {
        let idx: Vec<usize> = (start..(start + EVAL_CHUNK).min(inputs.rows())).collect();
        let chunk = inputs.select_rows(&idx);
        let learned = apply(matrix, &chunk);
        let scored: Vec<(SpectrumScore, Vec<Failure>)> = idx
            .par_iter()
            .enumerate()
            .map(|(k, &i)| {
                let x = inputs.row(i);
                let t = targets.row(i);
                let mut mse_v = [f64::NAN; 3];
                let mut fails = Vec::new();
                let outs = [
                    plan.dht(x, Variant::Marple),
                    padded.apply(x),
                    match &learned {
                        Ok(l) => Ok(l.row(k).to_vec()),
                        Err(e) => Err(Error::InvalidInput(e.to_string())),
                    },
                ];
                for (m, out) in Method::ALL.iter().zip(outs) {
                    match out.and_then(|o| mse(&o, t)) {
                        Ok(v) if v.is_finite() => mse_v[m.index()] = v,
                        Ok(v) => fails.push(Failure { index: i, method: *m, message: format!("non-finite mse {v}") }),
                        Err(e) => fails.push(Failure { index: i, method: *m, message: e.to_string() }),
                    }
                }
                let score = SpectrumScore {
                    mse: mse_v,
                    best: best_method(&mse_v),
                    center: centers.map(|c| c[i]),
                };
                (score, fails)
            })
            .collect();
        for (s, f) in scored {
            spectra.push(s);
            failures.extend(f);
        }
    }
    Ok(EvalReport::build(n, pad_len, spectra, failures, meta))
}

pub fn compare_methods(test: &TrainingSet, matrix: &LedhtMatrix, pad_len: usize) -> Result<EvalReport> {
    let centers = test.single_peak_centers();
    let meta = serde_json::json!({
        "test_rows": test.len(),
        "test_provenance": test.provenance,
        "matrix_seed": matrix.meta.seed,
        "matrix_config_hash": matrix.meta.config_hash,
        "tie_order": ["dht", "dht_pad", "ledht"],
        "quantiles": "linear interpolation between order statistics",
    });
    compare_arrays(&test.inputs, &test.targets, centers.as_deref(), matrix, pad_len, meta)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelErrorProfile {
    pub values: Vec<f64>,
    pub floor: f64,
    pub min: f64,
    pub max: f64,
    pub left_edge: f64,
    pub right_edge: f64,
}

/// `|estimate - truth| / max(|truth|, floor)` pointwise. The floor defaults
/// to `1e-3 · max|truth|`, which keeps zero crossings of the truth from
/// dominating the profile.
pub fn relative_error_profile(estimate: &[f64], truth: &[f64], floor: Option<f64>) -> Result<RelErrorProfile> {
    if estimate.len() != truth.len() {
        return Err(Error::InvalidInput(format!(
            "length mismatch: {} vs {}",
            estimate.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::InvalidInput("empty signals".into()));
    }
    let peak = truth.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = floor.unwrap_or(1e-3 * peak);
    let values: Vec<f64> = estimate
        .iter()
        .zip(truth)
        .map(|(e, t)| {
            let d = t.abs().max(floor);
            if d > 0.0 {
                (e - t).abs() / d
            } else if e == t {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .collect();
    Ok(RelErrorProfile {
        floor,
        min: values.iter().copied().fold(f64::INFINITY, f64::min),
        max: values.iter().copied().fold(0.0, f64::max),
        left_edge: values[0],
        right_edge: values[values.len() - 1],
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learn::MatrixMeta;

    #[test]
    fn mse_examples() {
        assert_eq!(mse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((mse(&[1.5, 2.5, 3.5], &[1.0, 2.0, 3.0]).unwrap() - 0.25).abs() < 1e-15);
        assert_eq!(mse(&[0.0, 1.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert!(matches!(mse(&[0.0], &[1.0, 0.0]), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn ties_follow_fixed_order() {
        assert_eq!(best_method(&[1.0, 1.0, 1.0]), Some(Method::Dht));
        assert_eq!(best_method(&[2.0, 1.0, 1.0]), Some(Method::DhtPad));
        assert_eq!(best_method(&[f64::NAN, 3.0, 1.0]), Some(Method::Ledht));
        assert_eq!(best_method(&[f64::NAN; 3]), None);
    }

    #[test]
    fn quantiles_interpolate() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&v, 0.5), 2.5);
        assert_eq!(quantile_sorted(&v, 0.25), 1.75);
        assert_eq!(quantile_sorted(&v, 1.0), 4.0);
        let a = Aggregate::from_values(&[4.0, 1.0, 3.0, 2.0, f64::NAN]);
        assert_eq!(a.count, 4);
        assert_eq!(a.mean, 2.5);
        assert!((a.std - 1.25f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn rigged_targets_make_dht_best() {
        use crate::dht::dht;
        use crate::lineshapes::Direction;
        use crate::synth::{gen_single_peak, GenConfig};
        let set = gen_single_peak(&GenConfig::new(61, 3.0, 8.0, 40, Direction::DawsonToGaussian, 1)).unwrap();
        let rows: Vec<Vec<f64>> = set.inputs.iter_rows().map(|r| dht(r, Variant::Marple).unwrap()).collect();
        let rigged = Matrix::from_rows(&rows).unwrap();
        let m = LedhtMatrix::new(Matrix::zeros(61, 61), None, MatrixMeta::bare(61)).unwrap();
        let r = compare_arrays(&set.inputs, &rigged, None, &m, 61, serde_json::Value::Null).unwrap();
        assert_eq!(r.fraction(Method::Dht), 1.0);
        let total: f64 = Method::ALL.iter().map(|&m| r.fraction(m)).sum();
        assert!((total - 1.0).abs() < 1e-15);
        for m in Method::ALL {
            assert_eq!(*r.aggregate(m), Aggregate::from_values(&r.mse_column(m)));
        }
    }

    #[test]
    fn per_center_bins_and_grid_mismatch() {
        use crate::lineshapes::Direction;
        use crate::synth::{gen_single_peak, GenConfig};
        let set = gen_single_peak(&GenConfig::new(41, 3.0, 5.0, 30, Direction::DawsonToGaussian, 2)).unwrap();
        let m = LedhtMatrix::identity(41);
        let r = compare_methods(&set, &m, 41).unwrap();
        assert_eq!(r.per_center.iter().map(|b| b.count).sum::<usize>(), 30);
        let csv = r.to_csv().unwrap();
        assert_eq!(csv.lines().count(), 31);
        assert!(matches!(compare_methods(&set, &LedhtMatrix::identity(40), 41), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn relative_error_examples() {
        let t = [0.0, 1.0, -2.0, 0.5];
        let zero = relative_error_profile(&t, &t, None).unwrap();
        assert!(zero.values.iter().all(|v| *v == 0.0));
        let shifted: Vec<f64> = t.iter().map(|v| v + 0.2).collect();
        let p = relative_error_profile(&shifted, &t, Some(2.0)).unwrap();
        assert!(p.values.iter().all(|v| (v - 0.1).abs() < 1e-15));
        assert!((p.left_edge - 0.1).abs() < 1e-15 && (p.right_edge - 0.1).abs() < 1e-15);
        assert!(relative_error_profile(&t, &t[..2], None).is_err());
    }
}
