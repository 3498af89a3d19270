//! AR(1) scenarios.
//!
//! `ar1_table2`: replication `r` uses `root.descend([r])`; substream 0 draws the
//! series, `1.row` the SMM shocks, `2.row` the training set and `3.row` net
//! training. Lasso learners reuse the net's training set.

use std::time::Instant;

use nne_core::ar1::{
    ar1_moments, ar1_population_moment, series_from_shocks, simulate_ar1, Ar1MomentSpec, MomentTerm,
};
use nne_core::baselines::gmm::{common_shocks, gmm_ar1, smm_ar1, GmmSpec};
use nne_core::baselines::indirect::{auxiliary_statistic, indirect_inference_ar1, Ma1Auxiliary};
use nne_core::baselines::lasso::{LassoOptions, LassoPoly};
use nne_core::estimator::{fit_nne_on, generate_training_set, Ar1Model, NneOptions, StructuralModel};
use nne_core::net::{self, Activation, LossKind, NetConfig, OutputHead, TrainSpec};
use nne_core::{MomentVector, RngStream, TrainExample};
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::summary::{summarize, summary_file, Truth};
use crate::table::{Artifacts, DataFile, EstimateRow, ResultTable};

fn secs(t: Instant, record: bool) -> f64 {
    if record {
        t.elapsed().as_secs_f64()
    } else {
        0.0
    }
}

pub fn ar1_truth(beta: f64) -> Truth {
    [("beta".to_string(), beta)].into_iter().collect()
}

/// Every moment row by GMM, SMM and NNE, plus the lasso learners.
pub fn table2(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let k = &cfg.knobs;
    let root = RngStream::new(cfg.seed);
    let hidden = k.hidden_units.unwrap_or(32);
    let scenario = cfg.scenario.name();
    let rows_per_rep: Vec<Result<Vec<EstimateRow>>> = (0..k.replications)
        .into_par_iter()
        .map(|rep| {
            let rs = root.descend(&[rep as u64]);
            let series = simulate_ar1(k.beta, k.n, &rs.substream(0))?;
            let mut out = Vec::new();
            let mut push = |method: &str, spec: &str, est: f64, burden: u64, runtime: f64, s: &RngStream| {
                out.push(EstimateRow {
                    scenario: scenario.into(),
                    method: method.into(),
                    spec: spec.into(),
                    replication: rep,
                    parameter: "beta".into(),
                    estimate: est,
                    accuracy: None,
                    runtime_s: runtime,
                    sim_burden: burden,
                    seed_path: s.to_string(),
                });
            };
            for &row in &k.rows {
                let spec = Ar1MomentSpec::from_row(row)?;
                let id = spec.id();
                let t = Instant::now();
                let g = gmm_ar1(&series, &GmmSpec::two_step(spec))?;
                push("gmm", &id, g.beta, 0, secs(t, cfg.record_runtime), &rs.substream(0));

                let t = Instant::now();
                let smm_stream = rs.substream(1).substream(row as u64);
                let s = smm_ar1(&series, &GmmSpec::two_step(spec), k.r, &smm_stream)?;
                push(&format!("smm_R{}", k.r), &id, s.beta, k.r as u64, secs(t, cfg.record_runtime), &smm_stream);

                let t = Instant::now();
                let model = Ar1Model::new(spec).with_sample_size(k.n);
                let ts = generate_training_set(&model, k.l_star, &rs.substream(2).substream(row as u64))?;
                let sim_t = secs(t, cfg.record_runtime);
                let opts = NneOptions {
                    l_star: k.l_star,
                    hidden_units: hidden,
                    train: TrainSpec {
                        max_epochs: k.max_epochs,
                        ..TrainSpec::with_loss(LossKind::C1)
                    },
                    ..NneOptions::default()
                };
                let net_stream = rs.substream(3).substream(row as u64);
                let t = Instant::now();
                let fitted = fit_nne_on(&ts, model.param_space(), &id, &opts, &net_stream)?;
                let observed = ar1_moments(&series, spec)?;
                let est = fitted.estimate(&observed)?;
                push("nne", &id, est.theta_hat[0], k.l_star as u64, sim_t + secs(t, cfg.record_runtime), &net_stream);

                if rep < k.lasso_replications {
                    for &d in &k.lasso_degrees {
                        let t = Instant::now();
                        let lasso = LassoPoly::<f64>::fit(&ts, &LassoOptions { degree: d, ..LassoOptions::default() })?;
                        let b = lasso.predict(observed.values())?[0];
                        push(
                            &format!("lasso_d{d}"),
                            &id,
                            b,
                            k.l_star as u64,
                            sim_t + secs(t, cfg.record_runtime),
                            &rs.substream(2).substream(row as u64),
                        );
                    }
                }
            }
            Ok(out)
        })
        .collect();
    let mut table = ResultTable::default();
    for r in rows_per_rep {
        table.extend(r?);
    }
    let summary = summarize(&table, Some(&ar1_truth(k.beta)))?;
    Ok(Artifacts {
        table,
        files: vec![summary_file(&summary)],
        notes: vec![],
    })
}

fn ghat(beta: f64, shocks: &[Vec<f64>]) -> Result<f64> {
    let mut s = 0.0;
    for e in shocks {
        s += MomentTerm::Cross(1).sample_mean(series_from_shocks(beta, e)?.values());
    }
    Ok(s / shocks.len() as f64)
}

fn aux_curve(beta: f64, shock: &[f64], aux: Ma1Auxiliary) -> Result<f64> {
    Ok(auxiliary_statistic(series_from_shocks(beta, shock)?.values(), aux))
}

/// Curves for the six panels of the AR(1) illustration and the two
/// indirect-inference panels.
///
/// `curves.csv` columns `curve,x,y`: for `g`, `ghat_R1`, `ghat_R5`,
/// `aux_ac_R1`, `aux_ls_R1` and `aux_ls_population` x is beta and y the
/// moment; for `fit_linear`, `fit_relu` and `fit_sigmoid` x is the moment and
/// y the fitted beta. `training_points.csv` holds the L points sampled from
/// `ghat_R1`; `observed.csv` the observed statistics.
pub fn fig3_curves(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let k = &cfg.knobs;
    let root = RngStream::new(cfg.seed);
    let scenario = cfg.scenario.name();
    let series = simulate_ar1(k.beta, k.n, &root.substream(0))?;
    let m_obs = MomentTerm::Cross(1).sample_mean(series.values());
    let shocks = common_shocks(k.n, k.r.max(5), &root.substream(1));
    let grid: Vec<f64> = (0..=180).map(|i| i as f64 * 0.005).collect();

    let mut curves = DataFile::new("curves", &["curve", "x", "y"]);
    let mut long_shocks = common_shocks(20_000, 1, &root.substream(5));
    let long = long_shocks.pop().expect("one series");
    for &b in &grid {
        curves.push(["g".to_string(), b.to_string(), ar1_population_moment(b, 1).to_string()]);
    }
    for (label, r) in [("ghat_R1", 1usize), ("ghat_R5", 5)] {
        for &b in &grid {
            curves.push([label.to_string(), b.to_string(), ghat(b, &shocks[..r])?.to_string()]);
        }
    }
    for (label, aux, shock) in [
        ("aux_ac_R1", Ma1Auxiliary::Autocovariance, &shocks[0]),
        ("aux_ls_R1", Ma1Auxiliary::LeastSquares, &shocks[0]),
        ("aux_ls_population", Ma1Auxiliary::LeastSquares, &long),
    ] {
        for &b in &grid {
            curves.push([label.to_string(), b.to_string(), aux_curve(b, shock, aux)?.to_string()]);
        }
    }

    // L training points drawn from the R = 1 curve
    let space = Ar1Model::new(Ar1MomentSpec::Row1).param_space().clone();
    let mut points = DataFile::new("training_points", &["beta", "m"]);
    let mut examples = Vec::new();
    for l in 0..k.l_star {
        let theta = nne_core::sample_theta(&space, &root.substream(2).substream(l as u64));
        let m = ghat(theta[0], &shocks[..1])?;
        points.push([theta[0], m]);
        examples.push(TrainExample {
            theta,
            moments: MomentVector::new("row1", vec![m]),
        });
    }
    let n = examples.len() as f64;
    let mx = examples.iter().map(|e| e.moments.values()[0]).sum::<f64>() / n;
    let my = examples.iter().map(|e| e.theta[0]).sum::<f64>() / n;
    let sxy: f64 = examples.iter().map(|e| (e.moments.values()[0] - mx) * (e.theta[0] - my)).sum();
    let sxx: f64 = examples.iter().map(|e| (e.moments.values()[0] - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let linear = |m: f64| my + slope * (m - mx);

    let m_grid: Vec<f64> = (0..=200).map(|i| -0.5 + 3.5 * i as f64 / 200.0).collect();
    for &m in &m_grid {
        curves.push(["fit_linear".to_string(), m.to_string(), linear(m).to_string()]);
    }
    let spec = TrainSpec {
        max_epochs: 5000,
        patience: 500,
        batch_size: 32,
        learning_rate: 1e-2,
        ..TrainSpec::with_loss(LossKind::C1)
    };
    let mut fits = Vec::new();
    for (label, act, s) in [("relu", Activation::Relu, 3u64), ("sigmoid", Activation::Sigmoid, 4)] {
        let cfg_net = NetConfig::new(1, 4, 1, OutputHead::Point).with_activation(act);
        let trained = net::train::<f64>(&examples, cfg_net, &spec, &root.substream(s))?;
        for &m in &m_grid {
            curves.push([format!("fit_{label}"), m.to_string(), trained.predict(&[m])?.mu[0].to_string()]);
        }
        fits.push((label, trained.predict(&[m_obs])?.mu[0], root.substream(s)));
    }

    let mut table = ResultTable::default();
    let mut push = |method: &str, est: f64, burden: u64, s: &RngStream| {
        table.rows.push(EstimateRow {
            scenario: scenario.into(),
            method: method.into(),
            spec: "row1".into(),
            replication: 0,
            parameter: "beta".into(),
            estimate: est,
            accuracy: None,
            runtime_s: 0.0,
            sim_burden: burden,
            seed_path: s.to_string(),
        });
    };
    push("gmm", gmm_ar1(&series, &GmmSpec::two_step(Ar1MomentSpec::Row1))?.beta, 0, &root.substream(0));
    for r in [1usize, 5] {
        let b = nne_core::baselines::gmm::smm_ar1(&series, &GmmSpec::two_step(Ar1MomentSpec::Row1), r, &root.substream(1))?.beta;
        push(&format!("smm_R{r}"), b, r as u64, &root.substream(1));
    }
    push("linear", linear(m_obs), k.l_star as u64, &root.substream(2));
    for (label, b, s) in &fits {
        push(&format!("nne_{label}"), *b, k.l_star as u64, s);
    }
    for (label, aux) in [("ii_ac_R1", Ma1Auxiliary::Autocovariance), ("ii_ls_R1", Ma1Auxiliary::LeastSquares)] {
        let b = indirect_inference_ar1(&series, aux, 1, &root.substream(1))?.beta;
        push(label, b, 1, &root.substream(1));
    }

    let mut observed = DataFile::new("observed", &["statistic", "value"]);
    observed.push(["m_lag1".to_string(), m_obs.to_string()]);
    observed.push(["aux_ls".to_string(), auxiliary_statistic(series.values(), Ma1Auxiliary::LeastSquares).to_string()]);
    observed.push(["true_beta".to_string(), k.beta.to_string()]);
    Ok(Artifacts {
        table,
        files: vec![curves, points, observed],
        notes: vec![],
    })
}
