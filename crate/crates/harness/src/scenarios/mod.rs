//! Scenario implementations and the dispatcher.

pub mod ar1;
pub mod search;

use std::path::{Path, PathBuf};

use nne_core::estimator::{check_theta_range, fit_nne, ConjugateToy, NneOptions};
use nne_core::net::{LossKind, TrainSpec};
use nne_core::search::{
    default_param_space, simulate_search, ConsumerGrid, SearchMomentSpec, SearchOutcome, PARAM_NAMES,
};
use nne_core::{MomentVector, RngStream};
use rand::Rng;

use crate::config::{ExperimentConfig, Scenario};
use crate::data::{ingest_search_csv, search_csv_string, synthetic_real_grid};
use crate::error::{HarnessError, Result};
use crate::summary::{find, summarize, summary_file, truth_from, Truth, ALL_PARAMETERS};
use crate::table::{write_artifacts, Artifacts, DataFile, EstimateRow, ResultTable};

use self::search::{hidden_units_for, nne_arm, run_on_data, run_plan, smle_arm, truth_vector, SearchPlan, INCREASE};

/// Runs one scenario and returns its rows and data files.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Artifacts> {
    cfg.knobs.validate()?;
    match cfg.scenario {
        Scenario::Ar1Table2 => ar1::table2(cfg),
        Scenario::Ar1Fig3Curves => ar1::fig3_curves(cfg),
        Scenario::SearchMc => search_mc(cfg),
        Scenario::SearchRmseVsCost => rmse_vs_cost(cfg),
        Scenario::SearchMomentSweep => moment_sweep(cfg),
        Scenario::SearchDataSize => data_size(cfg),
        Scenario::SmoothingGrid => smoothing_grid(cfg),
        Scenario::ThetaMisspec => theta_misspec(cfg),
        Scenario::AccuracyCalibration => accuracy_calibration(cfg),
        Scenario::Counterfactual => counterfactual(cfg),
        Scenario::RealData => real_data(cfg),
        Scenario::ConjugateCheck => conjugate_check(cfg),
    }
}

/// Runs a scenario and writes its files under `out/<scenario>/`.
pub fn run_and_write(cfg: &ExperimentConfig) -> Result<(Artifacts, Vec<PathBuf>)> {
    let dir = cfg.out.join(cfg.scenario.name());
    // fail on an unwritable path before spending compute
    std::fs::create_dir_all(&dir).map_err(|e| HarnessError::Output {
        path: dir.display().to_string(),
        reason: e.to_string(),
    })?;
    let art = run_experiment(cfg)?;
    let paths = write_artifacts(&dir, cfg, &art, &[])?;
    Ok((art, paths))
}

pub fn search_truth(cfg: &ExperimentConfig) -> Result<Truth> {
    let t = truth_vector(cfg.knobs.theta.as_deref())?;
    let names: Vec<String> = PARAM_NAMES.iter().map(|s| s.to_string()).collect();
    Ok(truth_from(&names, t.to_vector().values()))
}

fn parse_spec(s: &str) -> Result<SearchMomentSpec> {
    Ok(s.parse::<SearchMomentSpec>()?)
}

fn base_plan(cfg: &ExperimentConfig) -> Result<SearchPlan> {
    let k = &cfg.knobs;
    Ok(SearchPlan {
        scenario: cfg.scenario.name().to_string(),
        n: k.n,
        j: k.j,
        truth: truth_vector(k.theta.as_deref())?,
        nne: vec![],
        smle: vec![],
        smle_max_evals: k.smle_max_evals,
        max_epochs: k.max_epochs,
        record_runtime: cfg.record_runtime,
    })
}

fn hidden(cfg: &ExperimentConfig, l_star: usize) -> usize {
    cfg.knobs.hidden_units.unwrap_or_else(|| hidden_units_for(l_star))
}

fn finish(cfg: &ExperimentConfig, rows: Vec<EstimateRow>, notes: Vec<String>, mut files: Vec<DataFile>) -> Result<Artifacts> {
    let table = ResultTable { rows };
    let summary = summarize(&table, Some(&search_truth(cfg)?))?;
    files.insert(0, summary_file(&summary));
    Ok(Artifacts { table, files, notes })
}

/// Estimates for the histogram panels and key-statistic fit, NNE and SMLE.
pub fn search_mc(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let k = &cfg.knobs;
    let mut plan = base_plan(cfg)?;
    let spec = parse_spec(&k.spec_id)?;
    plan.nne.push(nne_arm(spec, k.l_star, hidden(cfg, k.l_star)));
    plan.smle = k.lambda.iter().map(|&l| smle_arm(l, k.r)).collect();
    let (rows, notes) = run_plan(&plan, k.replications, &RngStream::new(cfg.seed))?;
    finish(cfg, rows, notes, vec![])
}

/// RMSE against simulation burden over an `L*` grid for NNE and an `R` grid
/// for SMLE. `rmse_vs_cost.csv`: method, setting, sim_burden, rmse, rmse_se.
pub fn rmse_vs_cost(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let k = &cfg.knobs;
    let mut plan = base_plan(cfg)?;
    let spec = parse_spec(&k.spec_id)?;
    for &l in &k.l_star_grid {
        let mut arm = nne_arm(spec, l, hidden(cfg, l));
        arm.label = format!("{}_L{l}", spec.id());
        plan.nne.push(arm);
    }
    for &r in &k.r_grid {
        for &lam in &k.lambda {
            let mut arm = smle_arm(lam, r);
            arm.std_errors = false;
            plan.smle.push(arm);
        }
    }
    let (rows, notes) = run_plan(&plan, k.replications, &RngStream::new(cfg.seed))?;
    let table = ResultTable { rows };
    let summary = summarize(&table, Some(&search_truth(cfg)?))?;
    let mut f = DataFile::new("rmse_vs_cost", &["method", "setting", "mean_sim_burden", "rmse", "rmse_se"]);
    for rec in summary.iter().filter(|r| r.parameter == ALL_PARAMETERS) {
        let burden: Vec<f64> = table
            .select(&rec.method, &rec.spec, PARAM_NAMES[0])
            .map(|r| r.sim_burden as f64)
            .collect();
        let mean_burden = burden.iter().sum::<f64>() / burden.len().max(1) as f64;
        f.push([
            rec.method.clone(),
            rec.spec.clone(),
            mean_burden.to_string(),
            rec.rmse.unwrap_or(f64::NAN).to_string(),
            rec.rmse_se.unwrap_or(f64::NAN).to_string(),
        ]);
    }
    Ok(Artifacts {
        table,
        files: vec![summary_file(&summary), f],
        notes,
    })
}

/// Total |bias| and RMSE per moment specification.
/// `moment_sweep.csv`: spec, n_moments, total_abs_bias, bias_se, rmse, rmse_se.
pub fn moment_sweep(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let k = &cfg.knobs;
    let mut plan = base_plan(cfg)?;
    for s in &k.specs {
        plan.nne.push(nne_arm(parse_spec(s)?, k.l_star, hidden(cfg, k.l_star)));
    }
    plan.smle = k.lambda.iter().map(|&l| smle_arm(l, k.r)).collect();
    let (rows, notes) = run_plan(&plan, k.replications, &RngStream::new(cfg.seed))?;
    let mut art = finish(cfg, rows, notes, vec![])?;
    let summary = summarize(&art.table, Some(&search_truth(cfg)?))?;
    art.files.push(moment_sweep_file(&summary, &plan));
    Ok(art)
}

fn moment_sweep_file(summary: &[crate::summary::SummaryRecord], plan: &SearchPlan) -> DataFile {
    let mut f = DataFile::new("moment_sweep", &["spec", "n_moments", "total_abs_bias", "bias_se", "rmse", "rmse_se"]);
    for arm in &plan.nne {
        if let Some(r) = find(summary, "nne", &arm.label, ALL_PARAMETERS) {
            f.push([
                arm.label.clone(),
                arm.spec.len().to_string(),
                r.bias.unwrap_or(f64::NAN).to_string(),
                r.bias_se.unwrap_or(f64::NAN).to_string(),
                r.rmse.unwrap_or(f64::NAN).to_string(),
                r.rmse_se.unwrap_or(f64::NAN).to_string(),
            ]);
        }
    }
    f
}

/// RMSE by sample size with matched burdens. Each `n` has its own root
/// stream `seed:n`.
pub fn data_size(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let k = &cfg.knobs;
    let spec = parse_spec(&k.spec_id)?;
    let mut rows = Vec::new();
    let mut notes = Vec::new();
    for &n in &k.n_grid {
        let mut plan = base_plan(cfg)?;
        plan.n = n;
        let mut arm = nne_arm(spec, k.l_star, hidden(cfg, k.l_star));
        arm.label = format!("{}_n{n}", spec.id());
        plan.nne.push(arm);
        for &lam in &k.lambda {
            let mut a = smle_arm(lam, k.r);
            a.label = format!("lambda{lam}_R{}_n{n}", k.r);
            a.std_errors = false;
            plan.smle.push(a);
        }
        let (r, nt) = run_plan(&plan, k.replications, &RngStream::with_path(cfg.seed, &[n as u64]))?;
        rows.extend(r.into_iter().map(|mut row| {
            if row.method == "observed" || row.method == "truth" {
                row.spec = format!("{}_n{n}", row.spec);
            }
            row
        }));
        notes.extend(nt);
    }
    finish(cfg, rows, notes, vec![])
}

/// SMLE RMSE over a lambda grid. `smoothing.csv`: lambda, rmse, rmse_se.
pub fn smoothing_grid(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let k = &cfg.knobs;
    let mut plan = base_plan(cfg)?;
    plan.smle = k
        .lambda
        .iter()
        .map(|&l| {
            let mut a = smle_arm(l, k.r);
            a.std_errors = false;
            a
        })
        .collect();
    let (rows, notes) = run_plan(&plan, k.replications, &RngStream::new(cfg.seed))?;
    let mut art = finish(cfg, rows, notes, vec![])?;
    let summary = summarize(&art.table, Some(&search_truth(cfg)?))?;
    art.files.push(smoothing_file(&summary, &plan));
    Ok(art)
}

fn smoothing_file(summary: &[crate::summary::SummaryRecord], plan: &SearchPlan) -> DataFile {
    let mut f = DataFile::new("smoothing", &["lambda", "R", "rmse", "rmse_se"]);
    for arm in &plan.smle {
        if let Some(r) = find(summary, "smle", &arm.label, ALL_PARAMETERS) {
            f.push([
                arm.lambda.to_string(),
                arm.r.to_string(),
                r.rmse.unwrap_or(f64::NAN).to_string(),
                r.rmse_se.unwrap_or(f64::NAN).to_string(),
            ]);
        }
    }
    f
}

/// NNE under shifted `delta0` ranges. `misspec.csv`: lower, upper,
/// replication, delta0_hat, inside_range.
pub fn theta_misspec(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let k = &cfg.knobs;
    let mut plan = base_plan(cfg)?;
    let spec = parse_spec(&k.spec_id)?;
    for [lo, hi] in &k.delta0_ranges {
        let mut arm = nne_arm(spec, k.l_star, hidden(cfg, k.l_star));
        arm.space = default_param_space().with_bounds("delta0", *lo, *hi)?;
        arm.label = format!("{}_delta0[{lo},{hi}]", spec.id());
        plan.nne.push(arm);
    }
    let (rows, notes) = run_plan(&plan, k.replications, &RngStream::new(cfg.seed))?;
    let mut f = DataFile::new("misspec", &["lower", "upper", "replication", "delta0_hat", "inside_range"]);
    for (arm, [lo, hi]) in plan.nne.iter().zip(&k.delta0_ranges) {
        for r in rows.iter().filter(|r| r.method == "nne" && r.spec == arm.label && r.parameter == "delta0") {
            let inside = r.estimate > *lo && r.estimate < *hi;
            f.push([lo.to_string(), hi.to_string(), r.replication.to_string(), r.estimate.to_string(), (inside as u8).to_string()]);
        }
    }
    finish(cfg, rows, notes, vec![f])
}

/// Reported accuracy against the Monte Carlo spread of the estimates.
pub fn calibration_file(table: &ResultTable, truth: &Truth) -> Result<DataFile> {
    let summary = summarize(table, Some(truth))?;
    let mut f = DataFile::new("calibration", &["method", "spec", "parameter", "mc_sd", "mean_reported", "ratio"]);
    for r in summary.iter().filter(|r| PARAM_NAMES.contains(&r.parameter.as_str())) {
        if let Some(acc) = r.mean_accuracy {
            f.push([
                r.method.clone(),
                r.spec.clone(),
                r.parameter.clone(),
                r.sd.to_string(),
                acc.to_string(),
                (acc / r.sd).to_string(),
            ]);
        }
    }
    Ok(f)
}

pub fn accuracy_calibration(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let k = &cfg.knobs;
    let mut plan = base_plan(cfg)?;
    plan.nne.push(nne_arm(parse_spec(&k.spec_id)?, k.l_star, hidden(cfg, k.l_star)));
    plan.smle = k.lambda.iter().map(|&l| smle_arm(l, k.r)).collect();
    let (rows, notes) = run_plan(&plan, k.replications, &RngStream::new(cfg.seed))?;
    let table = ResultTable { rows: rows.clone() };
    let cal = calibration_file(&table, &search_truth(cfg)?)?;
    finish(cfg, rows, notes, vec![cal])
}

/// Mean buy-rate increase without search costs, per method.
pub fn counterfactual_file(table: &ResultTable) -> Result<DataFile> {
    let mut only = ResultTable::default();
    only.extend(table.rows.iter().filter(|r| r.parameter == INCREASE).cloned());
    let summary = summarize(&only, None)?;
    let mut f = DataFile::new("counterfactual", &["method", "spec", "mean_increase", "se", "replications"]);
    for r in &summary {
        f.push([
            r.method.clone(),
            r.spec.clone(),
            r.mean.to_string(),
            (r.sd / (r.replications as f64).sqrt()).to_string(),
            r.replications.to_string(),
        ]);
    }
    Ok(f)
}

pub fn counterfactual(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let k = &cfg.knobs;
    let mut plan = base_plan(cfg)?;
    plan.nne.push(nne_arm(parse_spec(&k.spec_id)?, k.l_star, hidden(cfg, k.l_star)));
    plan.smle = k
        .lambda
        .iter()
        .map(|&l| {
            let mut a = smle_arm(l, k.r);
            a.std_errors = false;
            a
        })
        .collect();
    let (rows, notes) = run_plan(&plan, k.replications, &RngStream::new(cfg.seed))?;
    let cf = counterfactual_file(&ResultTable { rows: rows.clone() })?;
    finish(cfg, rows, notes, vec![cf])
}

/// Loads `knobs.data`, or simulates a synthetic stand-in with sessions of 33
/// or 34 options at the truth.
pub fn load_or_synthesize(cfg: &ExperimentConfig, stream: &RngStream) -> Result<(ConsumerGrid, Vec<SearchOutcome>, bool)> {
    let k = &cfg.knobs;
    match &k.data {
        Some(p) => {
            let d = ingest_search_csv(p)?;
            Ok((d.grid, d.outcomes, false))
        }
        None => {
            let grid = synthetic_real_grid(k.n, k.j, &stream.substream(0))?;
            let out = simulate_search(&truth_vector(k.theta.as_deref())?, &grid, &stream.substream(1))?;
            Ok((grid, out, true))
        }
    }
}

/// Estimates on the (real or synthetic) data, then re-estimates on
/// session-level bootstrap resamples and records the key statistics each
/// estimate implies. Bootstrap `b` is replication `b + 1`; the summary covers
/// the bootstrap replications only.
pub fn real_data(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let k = &cfg.knobs;
    let root = RngStream::new(cfg.seed);
    let (grid, outcomes, synthetic) = load_or_synthesize(cfg, &root.substream(0))?;
    let spec = parse_spec(&k.spec_id)?;
    let mut plan = base_plan(cfg)?;
    plan.nne.push(nne_arm(spec, k.l_star, hidden(cfg, k.l_star)));
    plan.smle = k.lambda.iter().map(|&l| smle_arm(l, k.r)).collect();
    let mut notes = Vec::new();
    let grid = grid.into_shared();
    let mut rows = run_on_data(&plan, 0, grid.clone(), &outcomes, &root.substream(1), &mut notes)?;
    let mut boot_plan = plan.clone();
    for a in &mut boot_plan.smle {
        a.std_errors = false;
    }
    let n = grid.n_consumers();
    for b in 0..k.bootstrap {
        let bs = root.substream(2).substream(b as u64);
        let mut rng = bs.substream(0).rng();
        let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        let g = grid.select(&idx).into_shared();
        let o: Vec<SearchOutcome> = idx.iter().map(|&i| outcomes[i].clone()).collect();
        rows.extend(run_on_data(&boot_plan, b + 1, g, &o, &bs, &mut notes)?);
    }
    // truth rows are meaningless on real data
    if !synthetic {
        rows.retain(|r| r.method != "truth");
    }
    let table = ResultTable { rows };
    // spread over bootstrap resamples when there are any
    let mut spread = ResultTable::default();
    spread.extend(table.rows.iter().filter(|r| k.bootstrap == 0 || r.replication > 0).cloned());
    let truth = if synthetic { Some(search_truth(cfg)?) } else { None };
    let summary = summarize(&spread, truth.as_ref())?;
    let mut files = vec![summary_file(&summary)];
    if synthetic {
        files.push(raw_file("synthetic_data", &search_csv_string(&grid, &outcomes)?));
    }
    Ok(Artifacts { table, files, notes })
}

/// Wraps already-formatted CSV text as a data file.
fn raw_file(name: &str, csv_text: &str) -> DataFile {
    let mut lines = csv_text.lines();
    let header: Vec<String> = lines.next().unwrap_or_default().split(',').map(str::to_string).collect();
    DataFile {
        name: name.to_string(),
        header,
        rows: lines.map(|l| l.split(',').map(str::to_string).collect()).collect(),
    }
}

/// Conjugate normal-mean check: NNE mean and SD against the exact posterior
/// at `ybar` in {-1, 0, 1}. `conjugate.csv`: ybar, nne_mean, nne_sd,
/// posterior_mean, posterior_sd.
pub fn conjugate_check(cfg: &ExperimentConfig) -> Result<Artifacts> {
    let k = &cfg.knobs;
    let model = ConjugateToy::new();
    let opts = NneOptions {
        l_star: k.l_star,
        hidden_units: k.hidden_units.unwrap_or(32),
        train: TrainSpec {
            max_epochs: k.max_epochs,
            ..TrainSpec::with_loss(LossKind::C2Diag)
        },
        ..NneOptions::default()
    };
    let stream = RngStream::new(cfg.seed);
    let fitted = fit_nne(&model, &opts, &stream)?;
    let mut table = ResultTable::default();
    let mut f = DataFile::new("conjugate", &["ybar", "nne_mean", "nne_sd", "posterior_mean", "posterior_sd"]);
    let n = model.sample_size() as f64;
    for (i, ybar) in [-1.0, 0.0, 1.0].into_iter().enumerate() {
        let rep = fitted.estimate(&MomentVector::new("ybar", vec![ybar]))?;
        let sd = rep.std_devs().map(|s| s[0]);
        let (pm, psd) = truncated_normal_moments(ybar, 1.0 / n.sqrt(), -5.0, 5.0);
        f.push([ybar, rep.theta_hat[0], sd.unwrap_or(f64::NAN), pm, psd]);
        table.rows.push(EstimateRow {
            scenario: cfg.scenario.name().into(),
            method: "nne".into(),
            spec: format!("ybar={ybar}"),
            replication: i,
            parameter: "theta".into(),
            estimate: rep.theta_hat[0],
            accuracy: sd,
            runtime_s: 0.0,
            sim_burden: k.l_star as u64,
            seed_path: stream.to_string(),
        });
        if let Some(m) = check_theta_range(&rep).message() {
            return Err(HarnessError::Config(format!("conjugate check left the box: {m}")));
        }
    }
    Ok(Artifacts {
        table,
        files: vec![f],
        notes: vec![],
    })
}

/// Mean and SD of `N(mu, s^2)` truncated to `[a, b]`.
pub fn truncated_normal_moments(mu: f64, s: f64, a: f64, b: f64) -> (f64, f64) {
    use std::f64::consts::PI;
    let phi = |x: f64| (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
    let cdf = |x: f64| 0.5 * erfc(-x / std::f64::consts::SQRT_2);
    let (al, be) = ((a - mu) / s, (b - mu) / s);
    let z = cdf(be) - cdf(al);
    let m = mu + s * (phi(al) - phi(be)) / z;
    let v = s * s * (1.0 + (al * phi(al) - be * phi(be)) / z - ((phi(al) - phi(be)) / z).powi(2));
    (m, v.sqrt())
}

/// Complementary error function, absolute error below 1.2e-7.
fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let r = t
        * (-z * z - 1.26551223
            + t * (1.00002368
                + t * (0.37409196
                    + t * (0.09678418
                        + t * (-0.18628806
                            + t * (0.27886807 + t * (-1.13520398 + t * (1.48851587 + t * (-0.82215223 + t * 0.17087277)))))))))
            .exp();
    if x >= 0.0 {
        r
    } else {
        2.0 - r
    }
}

/// Output directory for a scenario.
pub fn scenario_dir(out: &Path, scenario: Scenario) -> PathBuf {
    out.join(scenario.name())
}
