//! Bias, RMSE and Monte Carlo standard errors per method and specification.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::table::{DataFile, ResultTable};

/// True values keyed by parameter name.
pub type Truth = BTreeMap<String, f64>;

pub fn truth_from(names: &[String], values: &[f64]) -> Truth {
    names.iter().cloned().zip(values.iter().copied()).collect()
}

/// Parameter name of the multi-parameter record.
pub const ALL_PARAMETERS: &str = "all";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub method: String,
    pub spec: String,
    pub parameter: String,
    pub replications: usize,
    pub mean: f64,
    /// Standard deviation of the estimates across replications.
    pub sd: f64,
    /// Mean reported accuracy, if every row has one.
    pub mean_accuracy: Option<f64>,
    /// For a single parameter, mean error; for `all`, the sum of absolute
    /// per-parameter biases.
    pub bias: Option<f64>,
    pub bias_se: Option<f64>,
    /// For `all`, the root mean squared Euclidean distance to the truth.
    pub rmse: Option<f64>,
    pub rmse_se: Option<f64>,
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample standard deviation; zero for a single value.
fn sd(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    let m = mean(x);
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64).sqrt()
}

/// `(rmse, se)` from squared errors, with the delta-method standard error.
fn rmse_from_squares(sq: &[f64]) -> (f64, f64) {
    let mse = mean(sq);
    let rmse = mse.sqrt();
    let se_mse = sd(sq) / (sq.len() as f64).sqrt();
    let se = if rmse > 0.0 { se_mse / (2.0 * rmse) } else { 0.0 };
    (rmse, se)
}

/// One record per (method, spec, parameter) plus, where a truth covers two
/// or more parameters, an `all` record. Rows whose parameter has no truth get
/// fit statistics only.
pub fn summarize(table: &ResultTable, truth: Option<&Truth>) -> Result<Vec<SummaryRecord>> {
    if table.is_empty() {
        return Err(HarnessError::Config("cannot summarize an empty table".into()));
    }
    // (method, spec) -> parameter -> replication -> (estimate, accuracy)
    let mut groups: BTreeMap<(String, String), BTreeMap<String, BTreeMap<usize, (f64, Option<f64>)>>> = BTreeMap::new();
    let mut param_order: Vec<String> = Vec::new();
    for r in &table.rows {
        if !param_order.contains(&r.parameter) {
            param_order.push(r.parameter.clone());
        }
        groups
            .entry((r.method.clone(), r.spec.clone()))
            .or_default()
            .entry(r.parameter.clone())
            .or_default()
            .insert(r.replication, (r.estimate, r.accuracy));
    }
    let mut out = Vec::new();
    for ((method, spec), params) in &groups {
        let mut with_truth: Vec<(&String, &BTreeMap<usize, (f64, Option<f64>)>, f64)> = Vec::new();
        for name in &param_order {
            let Some(reps) = params.get(name) else { continue };
            let est: Vec<f64> = reps.values().map(|v| v.0).collect();
            let acc: Option<Vec<f64>> = reps.values().map(|v| v.1).collect();
            let t = truth.and_then(|t| t.get(name)).copied();
            let (bias, bias_se, rmse, rmse_se) = match t {
                Some(t) => {
                    with_truth.push((name, reps, t));
                    let err: Vec<f64> = est.iter().map(|e| e - t).collect();
                    let sq: Vec<f64> = err.iter().map(|e| e * e).collect();
                    let (rmse, rse) = rmse_from_squares(&sq);
                    (Some(mean(&err)), Some(sd(&err) / (err.len() as f64).sqrt()), Some(rmse), Some(rse))
                }
                None => (None, None, None, None),
            };
            out.push(SummaryRecord {
                method: method.clone(),
                spec: spec.clone(),
                parameter: name.clone(),
                replications: est.len(),
                mean: mean(&est),
                sd: sd(&est),
                mean_accuracy: acc.map(|a| mean(&a)),
                bias,
                bias_se,
                rmse,
                rmse_se,
            });
        }
        if with_truth.len() >= 2 {
            // replications present for every parameter
            let reps: Vec<usize> = with_truth[0]
                .1
                .keys()
                .copied()
                .filter(|r| with_truth.iter().all(|(_, m, _)| m.contains_key(r)))
                .collect();
            if reps.is_empty() {
                continue;
            }
            let sq: Vec<f64> = reps
                .iter()
                .map(|r| with_truth.iter().map(|(_, m, t)| (m[r].0 - t).powi(2)).sum())
                .collect();
            let (rmse, rmse_se) = rmse_from_squares(&sq);
            let per_param: Vec<(f64, f64)> = with_truth
                .iter()
                .map(|(_, m, t)| {
                    let err: Vec<f64> = reps.iter().map(|r| m[r].0 - t).collect();
                    (mean(&err), sd(&err) / (err.len() as f64).sqrt())
                })
                .collect();
            out.push(SummaryRecord {
                method: method.clone(),
                spec: spec.clone(),
                parameter: ALL_PARAMETERS.into(),
                replications: reps.len(),
                mean: f64::NAN,
                sd: f64::NAN,
                mean_accuracy: None,
                bias: Some(per_param.iter().map(|(b, _)| b.abs()).sum()),
                bias_se: Some(per_param.iter().map(|(_, s)| s * s).sum::<f64>().sqrt()),
                rmse: Some(rmse),
                rmse_se: Some(rmse_se),
            });
        }
    }
    Ok(out)
}

/// Finds one record.
pub fn find<'a>(records: &'a [SummaryRecord], method: &str, spec: &str, parameter: &str) -> Option<&'a SummaryRecord> {
    records
        .iter()
        .find(|r| r.method == method && r.spec == spec && r.parameter == parameter)
}

pub fn summary_file(records: &[SummaryRecord]) -> DataFile {
    let mut f = DataFile::new(
        "summary",
        &[
            "method",
            "spec",
            "parameter",
            "replications",
            "mean",
            "sd",
            "mean_accuracy",
            "bias",
            "bias_se",
            "rmse",
            "rmse_se",
        ],
    );
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let num = |v: f64| if v.is_nan() { String::new() } else { v.to_string() };
    for r in records {
        f.push([
            r.method.clone(),
            r.spec.clone(),
            r.parameter.clone(),
            r.replications.to_string(),
            num(r.mean),
            num(r.sd),
            opt(r.mean_accuracy),
            opt(r.bias),
            opt(r.bias_se),
            opt(r.rmse),
            opt(r.rmse_se),
        ]);
    }
    f
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::EstimateRow;

    fn rows(values: &[(usize, &str, f64)]) -> ResultTable {
        ResultTable {
            rows: values
                .iter()
                .map(|(rep, p, v)| EstimateRow {
                    scenario: "t".into(),
                    method: "nne".into(),
                    spec: "s".into(),
                    replication: *rep,
                    parameter: p.to_string(),
                    estimate: *v,
                    accuracy: None,
                    runtime_s: 0.0,
                    sim_burden: 0,
                    seed_path: "0".into(),
                })
                .collect(),
        }
    }

    fn truth(pairs: &[(&str, f64)]) -> Truth {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn estimate_equal_to_truth() {
        let s = summarize(&rows(&[(0, "b", 0.6)]), Some(&truth(&[("b", 0.6)]))).unwrap();
        assert_eq!((s[0].bias, s[0].rmse), (Some(0.0), Some(0.0)));
    }

    #[test]
    fn symmetric_pair_has_zero_bias_and_rmse_d() {
        let d = 0.25;
        let s = summarize(&rows(&[(0, "b", 1.0 + d), (1, "b", 1.0 - d)]), Some(&truth(&[("b", 1.0)]))).unwrap();
        assert!(s[0].bias.unwrap().abs() < 1e-15);
        assert!((s[0].rmse.unwrap() - d).abs() < 1e-15);
    }

    #[test]
    fn euclidean_rmse_over_parameters() {
        let t = rows(&[(0, "a", 3.0), (0, "b", 4.0), (1, "a", 0.0), (1, "b", 0.0)]);
        let s = summarize(&t, Some(&truth(&[("a", 0.0), ("b", 0.0)]))).unwrap();
        let all = find(&s, "nne", "s", ALL_PARAMETERS).unwrap();
        // squared distances 25 and 0
        assert!((all.rmse.unwrap() - 12.5f64.sqrt()).abs() < 1e-12);
        assert!((all.bias.unwrap() - (1.5 + 2.0)).abs() < 1e-12);
    }

    #[test]
    fn without_truth_only_fit_statistics() {
        let s = summarize(&rows(&[(0, "buy_rate", 0.4), (1, "buy_rate", 0.5)]), None).unwrap();
        assert_eq!(s.len(), 1);
        assert!(s[0].bias.is_none() && s[0].rmse.is_none());
        assert!((s[0].mean - 0.45).abs() < 1e-15);
        assert!(summarize(&ResultTable::default(), None).is_err());
    }
}
