//! Search-model Monte Carlo.
//!
//! Replication `r` draws everything from `root.descend([r])`:
//!
//! | substream | use |
//! |---|---|
//! | 0 | covariates |
//! | 1 | observed outcomes at the truth |
//! | 2 | training set (full 81 moments; smaller specs are column subsets) |
//! | 3.k | net training for `SearchMomentSpec::ALL[k]` |
//! | 4 | SMLE draws, shared by every lambda |
//! | 5 | shocks for key statistics and the counterfactual, shared by every method |
//!
//! so different scenarios that ask for the same piece get the same numbers.

use std::sync::Arc;
use std::time::Instant;

use nne_core::baselines::smle::{smle_search, SmleSpec};
use nne_core::estimator::{
    check_theta_range, fit_nne_on, generate_training_set, NneOptions, SearchModel, StructuralModel,
};
use nne_core::net::{TrainSpec, LossKind};
use nne_core::search::{
    counterfactual_zero_cost, default_param_space, generate_covariates, key_stats, simulate_search, ConsumerGrid,
    SearchMomentSpec, SearchOutcome, SearchParams, PARAM_NAMES,
};
use nne_core::{MomentVector, ParamSpace, ParamVector, RngStream, TrainExample};
use rayon::prelude::*;

use crate::error::{HarnessError, Result};
use crate::table::EstimateRow;

pub const KEY_STAT_NAMES: [&str; 3] = ["buy_rate", "searches_per_consumer", "search_ranking"];
pub const INCREASE: &str = "buy_rate_increase";

/// Nearest power of two to `64 sqrt(L / 1e4)`.
pub fn hidden_units_for(l_star: usize) -> usize {
    let target = 64.0 * (l_star as f64 / 1e4).sqrt();
    let k = target.log2().round().max(0.0) as u32;
    1usize << k
}

#[derive(Clone, Debug)]
pub struct NneArm {
    pub spec: SearchMomentSpec,
    pub l_star: usize,
    pub hidden_units: usize,
    pub space: ParamSpace,
    /// Written to the `spec` column.
    pub label: String,
}

#[derive(Clone, Debug)]
pub struct SmleArm {
    pub lambda: f64,
    pub r: usize,
    pub std_errors: bool,
    pub label: String,
}

#[derive(Clone, Debug)]
pub struct SearchPlan {
    pub scenario: String,
    pub n: usize,
    pub j: usize,
    pub truth: SearchParams,
    pub nne: Vec<NneArm>,
    pub smle: Vec<SmleArm>,
    pub smle_max_evals: usize,
    pub max_epochs: usize,
    pub record_runtime: bool,
}

pub fn nne_arm(spec: SearchMomentSpec, l_star: usize, hidden_units: usize) -> NneArm {
    NneArm {
        spec,
        l_star,
        hidden_units,
        space: default_param_space(),
        label: spec.id().to_string(),
    }
}

pub fn smle_arm(lambda: f64, r: usize) -> SmleArm {
    SmleArm {
        lambda,
        r,
        std_errors: true,
        label: format!("lambda{lambda}_R{r}"),
    }
}

fn spec_index(spec: SearchMomentSpec) -> u64 {
    SearchMomentSpec::ALL.iter().position(|s| *s == spec).expect("listed spec") as u64
}

fn select(examples: &[TrainExample], spec: SearchMomentSpec) -> Vec<TrainExample> {
    examples
        .iter()
        .map(|e| TrainExample {
            theta: e.theta.clone(),
            moments: MomentVector::new(spec.id(), spec.select(e.moments.values())),
        })
        .collect()
}

struct Emit<'a> {
    scenario: &'a str,
    replication: usize,
    rows: Vec<EstimateRow>,
}

impl Emit<'_> {
    #[allow(clippy::too_many_arguments)]
    fn push(
        &mut self,
        method: &str,
        spec: &str,
        parameter: &str,
        estimate: f64,
        accuracy: Option<f64>,
        runtime_s: f64,
        sim_burden: u64,
        stream: &RngStream,
    ) {
        self.rows.push(EstimateRow {
            scenario: self.scenario.to_string(),
            method: method.to_string(),
            spec: spec.to_string(),
            replication: self.replication,
            parameter: parameter.to_string(),
            estimate,
            accuracy,
            runtime_s,
            sim_burden,
            seed_path: stream.to_string(),
        });
    }

    /// Key statistics of data simulated at `theta`, and the counterfactual
    /// buy-rate increase, both under the shared substream.
    fn implications(&mut self, method: &str, spec: &str, theta: &SearchParams, grid: &ConsumerGrid, s: &RngStream) -> Result<()> {
        let out = simulate_search(theta, grid, s)?;
        let ks = key_stats(grid, &out)?;
        for (name, v) in KEY_STAT_NAMES.iter().zip([ks.buy_rate, ks.searches_per_consumer, ks.search_ranking]) {
            self.push(method, spec, name, v, None, 0.0, 0, s);
        }
        let cf = counterfactual_zero_cost(theta, grid, s)?;
        self.push(method, spec, INCREASE, cf.increment(), None, 0.0, 0, s);
        Ok(())
    }
}

fn elapsed(t: Instant, record: bool) -> f64 {
    if record {
        t.elapsed().as_secs_f64()
    } else {
        0.0
    }
}

/// Parameters as a `SearchParams`, tolerating values outside the box.
fn params_of(theta: &ParamVector) -> Result<SearchParams> {
    Ok(SearchParams::from_vector(theta)?)
}

/// Runs one replication on a given grid and observed outcomes.
pub fn run_on_data(
    plan: &SearchPlan,
    replication: usize,
    grid: Arc<ConsumerGrid>,
    observed: &[SearchOutcome],
    rs: &RngStream,
    notes: &mut Vec<String>,
) -> Result<Vec<EstimateRow>> {
    let mut emit = Emit {
        scenario: &plan.scenario,
        replication,
        rows: Vec::new(),
    };
    let shared = rs.substream(5);
    let ks = key_stats(&grid, observed)?;
    for (name, v) in KEY_STAT_NAMES.iter().zip([ks.buy_rate, ks.searches_per_consumer, ks.search_ranking]) {
        emit.push("observed", "data", name, v, None, 0.0, 0, &rs.substream(1));
    }
    emit.implications("truth", "truth", &plan.truth, &grid, &shared)?;

    if !plan.nne.is_empty() {
        let full = SearchModel::new(grid.clone(), SearchMomentSpec::M81);
        let observed_full = full.moments_of(observed)?;
        // one training set per box, sized for the largest arm
        let mut spaces: Vec<&ParamSpace> = Vec::new();
        for a in &plan.nne {
            if !spaces.contains(&&a.space) {
                spaces.push(&a.space);
            }
        }
        for (si, space) in spaces.iter().enumerate() {
            let arms: Vec<&NneArm> = plan.nne.iter().filter(|a| &a.space == *space).collect();
            let l_max = arms.iter().map(|a| a.l_star).max().expect("nonempty");
            let model = full.clone().with_space((*space).clone())?;
            let t = Instant::now();
            let ts_stream = if si == 0 { rs.substream(2) } else { rs.substream(2).substream(si as u64) };
            let examples = generate_training_set(&model, l_max, &ts_stream)?;
            let sim_time = elapsed(t, plan.record_runtime) / l_max as f64;
            for arm in arms {
                let t = Instant::now();
                let subset = select(&examples[..arm.l_star], arm.spec);
                let opts = NneOptions {
                    l_star: arm.l_star,
                    hidden_units: arm.hidden_units,
                    train: TrainSpec {
                        max_epochs: plan.max_epochs,
                        ..TrainSpec::with_loss(LossKind::C2Diag)
                    },
                    ..NneOptions::default()
                };
                let train_stream = rs.substream(3).substream(spec_index(arm.spec));
                let fitted = fit_nne_on(&subset, model.param_space(), arm.spec.id(), &opts, &train_stream)?;
                let obs = MomentVector::new(arm.spec.id(), arm.spec.select(observed_full.values()));
                let report = fitted.estimate(&obs)?;
                let runtime = elapsed(t, plan.record_runtime) + sim_time * arm.l_star as f64;
                let sds = report.std_devs();
                for (k, name) in PARAM_NAMES.iter().enumerate() {
                    emit.push(
                        "nne",
                        &arm.label,
                        name,
                        report.theta_hat[k],
                        sds.as_ref().map(|s| s[k]),
                        runtime,
                        arm.l_star as u64,
                        &train_stream,
                    );
                }
                if let Some(msg) = check_theta_range(&report).message() {
                    notes.push(format!("replication {replication}, nne {}: {msg}", arm.label));
                }
                emit.implications("nne", &arm.label, &params_of(&report.theta_hat)?, &grid, &shared)?;
            }
        }
    }

    for arm in &plan.smle {
        let t = Instant::now();
        let spec = SmleSpec {
            max_evals: plan.smle_max_evals,
            std_errors: arm.std_errors,
            ..SmleSpec::new(arm.lambda, arm.r)
        };
        let draws = rs.substream(4);
        let res = smle_search(&grid, observed, &spec, &draws)?;
        let runtime = elapsed(t, plan.record_runtime);
        for (k, name) in PARAM_NAMES.iter().enumerate() {
            emit.push(
                "smle",
                &arm.label,
                name,
                res.theta[k],
                res.std_errors.as_ref().map(|s| s[k]),
                runtime,
                res.sim_burden as u64,
                &draws,
            );
        }
        if !res.converged {
            notes.push(format!(
                "replication {replication}, smle {}: simplex stopped at the budget of {} evaluations",
                arm.label, spec.max_evals
            ));
        }
        emit.implications("smle", &arm.label, &params_of(&res.theta)?, &grid, &shared)?;
    }
    Ok(emit.rows)
}

/// Draws replication `r`'s grid and observed outcomes.
pub fn replication_data(plan: &SearchPlan, rs: &RngStream) -> Result<(Arc<ConsumerGrid>, Vec<SearchOutcome>)> {
    let grid = generate_covariates(plan.n, plan.j, &rs.substream(0))?.into_shared();
    let observed = simulate_search(&plan.truth, &grid, &rs.substream(1))?;
    Ok((grid, observed))
}

/// Every replication, in parallel; rows come back in replication order.
pub fn run_plan(plan: &SearchPlan, replications: usize, root: &RngStream) -> Result<(Vec<EstimateRow>, Vec<String>)> {
    if plan.nne.is_empty() && plan.smle.is_empty() {
        return Err(HarnessError::Config("nothing to estimate".into()));
    }
    let per_rep: Vec<Result<(Vec<EstimateRow>, Vec<String>)>> = (0..replications)
        .into_par_iter()
        .map(|r| {
            let rs = root.descend(&[r as u64]);
            let (grid, observed) = replication_data(plan, &rs)?;
            let mut notes = Vec::new();
            let rows = run_on_data(plan, r, grid, &observed, &rs, &mut notes)?;
            Ok((rows, notes))
        })
        .collect();
    let mut rows = Vec::new();
    let mut notes = Vec::new();
    for r in per_rep {
        let (a, b) = r?;
        rows.extend(a);
        notes.extend(b);
    }
    Ok((rows, notes))
}

pub fn truth_vector(theta: Option<&[f64]>) -> Result<SearchParams> {
    match theta {
        Some(v) => Ok(SearchParams::from_vector(&ParamVector::new(v.to_vec()))?),
        None => Ok(SearchParams::monte_carlo_truth()),
    }
}
