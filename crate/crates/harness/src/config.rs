//! Experiment configuration: scenario, scale, seed and per-scenario knobs.
//!
//! A config file is TOML:
//!
//! ```toml
//! scenario = "search_mc"
//! seed = 2024
//! scale = "desk"
//! out = "results"
//!
//! [knobs]
//! replications = 20
//! L_star = 10000
//! R = 50
//! lambda = [3.0, 7.0, 10.0]
//! n = 1000
//! J = 30
//! spec_id = "m46"
//! ```
//!
//! Unset knobs take the scenario's default at the chosen scale.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Ar1Table2,
    Ar1Fig3Curves,
    SearchMc,
    SearchRmseVsCost,
    SearchMomentSweep,
    SearchDataSize,
    SmoothingGrid,
    ThetaMisspec,
    AccuracyCalibration,
    Counterfactual,
    RealData,
    ConjugateCheck,
}

impl Scenario {
    pub const ALL: [Self; 12] = [
        Self::Ar1Table2,
        Self::Ar1Fig3Curves,
        Self::SearchMc,
        Self::SearchRmseVsCost,
        Self::SearchMomentSweep,
        Self::SearchDataSize,
        Self::SmoothingGrid,
        Self::ThetaMisspec,
        Self::AccuracyCalibration,
        Self::Counterfactual,
        Self::RealData,
        Self::ConjugateCheck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Ar1Table2 => "ar1_table2",
            Self::Ar1Fig3Curves => "ar1_fig3_curves",
            Self::SearchMc => "search_mc",
            Self::SearchRmseVsCost => "search_rmse_vs_cost",
            Self::SearchMomentSweep => "search_moment_sweep",
            Self::SearchDataSize => "search_data_size",
            Self::SmoothingGrid => "smoothing_grid",
            Self::ThetaMisspec => "theta_misspec",
            Self::AccuracyCalibration => "accuracy_calibration",
            Self::Counterfactual => "counterfactual",
            Self::RealData => "real_data",
            Self::ConjugateCheck => "conjugate_check",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.iter().copied().find(|c| c.name() == s).ok_or_else(|| {
            let known: Vec<&str> = Self::ALL.iter().map(|c| c.name()).collect();
            HarnessError::Config(format!("unknown scenario {s:?}; known: {}", known.join(", ")))
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    #[default]
    Desk,
    Paper,
}

impl FromStr for Scale {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Self::Desk),
            "paper" => Ok(Self::Paper),
            _ => Err(HarnessError::Config(format!("unknown scale {s:?}; use desk or paper"))),
        }
    }
}

/// Knob overrides as written in a config file; every field is optional.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KnobOverrides {
    pub replications: Option<usize>,
    #[serde(alias = "L_star")]
    pub l_star: Option<usize>,
    pub hidden_units: Option<usize>,
    #[serde(alias = "R")]
    pub r: Option<usize>,
    pub lambda: Option<Vec<f64>>,
    pub n: Option<usize>,
    #[serde(alias = "J")]
    pub j: Option<usize>,
    pub spec_id: Option<String>,
    pub specs: Option<Vec<String>>,
    pub rows: Option<Vec<usize>>,
    pub beta: Option<f64>,
    #[serde(alias = "L_star_grid")]
    pub l_star_grid: Option<Vec<usize>>,
    #[serde(alias = "R_grid")]
    pub r_grid: Option<Vec<usize>>,
    pub n_grid: Option<Vec<usize>>,
    pub delta0_ranges: Option<Vec<[f64; 2]>>,
    pub lasso_degrees: Option<Vec<usize>>,
    pub lasso_replications: Option<usize>,
    pub bootstrap: Option<usize>,
    pub smle_max_evals: Option<usize>,
    pub max_epochs: Option<usize>,
    pub data: Option<PathBuf>,
    pub theta: Option<Vec<f64>>,
}

/// Fully resolved knobs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Knobs {
    pub replications: usize,
    pub l_star: usize,
    /// `None` picks the scenario's rule (32 for AR(1), 64 for search, the
    /// square-root rule across an `L*` grid).
    pub hidden_units: Option<usize>,
    pub r: usize,
    pub lambda: Vec<f64>,
    pub n: usize,
    pub j: usize,
    pub spec_id: String,
    pub specs: Vec<String>,
    pub rows: Vec<usize>,
    pub beta: f64,
    pub l_star_grid: Vec<usize>,
    pub r_grid: Vec<usize>,
    pub n_grid: Vec<usize>,
    pub delta0_ranges: Vec<[f64; 2]>,
    pub lasso_degrees: Vec<usize>,
    pub lasso_replications: usize,
    pub bootstrap: usize,
    pub smle_max_evals: usize,
    pub max_epochs: usize,
    pub data: Option<PathBuf>,
    pub theta: Option<Vec<f64>>,
}

impl Knobs {
    /// Defaults for `scenario` at `scale`.
    pub fn defaults(scenario: Scenario, scale: Scale) -> Self {
        let paper = scale == Scale::Paper;
        let search_reps = if paper { 100 } else { 20 };
        let mut k = Self {
            replications: search_reps,
            l_star: 10_000,
            hidden_units: None,
            r: 50,
            lambda: vec![7.0],
            n: 1000,
            j: 30,
            spec_id: "m46".into(),
            specs: vec!["m46".into()],
            rows: (1..=6).collect(),
            beta: 0.6,
            l_star_grid: vec![],
            r_grid: vec![],
            n_grid: vec![],
            delta0_ranges: vec![],
            lasso_degrees: vec![2, 3],
            lasso_replications: 0,
            bootstrap: 0,
            smle_max_evals: 1500,
            max_epochs: 500,
            data: None,
            theta: None,
        };
        match scenario {
            Scenario::Ar1Table2 => {
                k.replications = 1000;
                k.l_star = 1000;
                k.n = 100;
                k.r = 10;
                k.lasso_replications = if paper { 1000 } else { 100 };
            }
            Scenario::Ar1Fig3Curves => {
                k.replications = 1;
                k.l_star = 25;
                k.n = 100;
                k.r = 5;
            }
            Scenario::SearchMc | Scenario::AccuracyCalibration => {
                k.lambda = vec![3.0, 7.0, 10.0];
            }
            Scenario::Counterfactual => {
                k.lambda = vec![3.0, 7.0, 10.0];
            }
            Scenario::SearchRmseVsCost => {
                k.replications = if paper { 100 } else { 5 };
                k.l_star_grid = if paper { vec![2500, 10_000, 50_000, 200_000] } else { vec![2500, 10_000] };
                k.r_grid = if paper { vec![5, 25, 100, 400] } else { vec![5, 25] };
            }
            Scenario::SearchMomentSweep => {
                k.specs = if paper {
                    ["m16", "m32", "m40", "m46", "m60", "m81"].map(String::from).to_vec()
                } else {
                    ["m16", "m46", "m81"].map(String::from).to_vec()
                };
                k.lambda = vec![];
            }
            Scenario::SearchDataSize => {
                k.replications = if paper { 100 } else { 5 };
                k.n_grid = if paper { vec![500, 1000, 2500, 5000] } else { vec![500, 1000] };
                k.r = 15;
                k.lambda = if paper { vec![3.0, 7.0, 10.0] } else { vec![7.0] };
            }
            Scenario::SmoothingGrid => {
                k.lambda = if paper {
                    (1..=15).map(f64::from).collect()
                } else {
                    vec![1.0, 3.0, 5.0, 7.0, 9.0, 11.0, 15.0]
                };
            }
            Scenario::ThetaMisspec => {
                k.replications = if paper { 100 } else { 10 };
                k.delta0_ranges = vec![[-6.0, -4.5], [-3.5, -2.0], [-4.0, -2.0], [-5.0, -2.0]];
                k.lambda = vec![];
            }
            Scenario::RealData => {
                k.n = 1055;
                k.j = 34;
                k.bootstrap = if paper { 100 } else { 10 };
                k.lambda = vec![3.0, 7.0, 10.0];
            }
            Scenario::ConjugateCheck => {
                k.replications = 1;
                k.hidden_units = Some(32);
                k.n = 100;
            }
        }
        k
    }

    pub fn apply(&mut self, o: &KnobOverrides) {
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = &o.$f { self.$f = v.clone(); } )* };
        }
        set!(
            replications, l_star, r, lambda, n, j, spec_id, specs, rows, beta, l_star_grid, r_grid, n_grid,
            delta0_ranges, lasso_degrees, lasso_replications, bootstrap, smle_max_evals, max_epochs
        );
        if o.hidden_units.is_some() {
            self.hidden_units = o.hidden_units;
        }
        if o.data.is_some() {
            self.data = o.data.clone();
        }
        if o.theta.is_some() {
            self.theta = o.theta.clone();
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("replications", self.replications),
            ("L_star", self.l_star),
            ("R", self.r),
            ("n", self.n),
            ("J", self.j),
            ("smle_max_evals", self.smle_max_evals),
            ("max_epochs", self.max_epochs),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(HarnessError::Config(format!("knob {name} must be positive")));
            }
        }
        if self.hidden_units == Some(0) {
            return Err(HarnessError::Config("knob hidden_units must be positive".into()));
        }
        if self.lambda.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(HarnessError::Config("every lambda must be positive".into()));
        }
        for (name, g) in [("L_star_grid", &self.l_star_grid), ("R_grid", &self.r_grid), ("n_grid", &self.n_grid)] {
            if g.contains(&0) {
                return Err(HarnessError::Config(format!("knob {name} entries must be positive")));
            }
        }
        if self.rows.iter().any(|r| !(1..=6).contains(r)) {
            return Err(HarnessError::Config("AR(1) rows must lie in 1..=6".into()));
        }
        if !(self.beta >= 0.0 && self.beta < 1.0) {
            return Err(HarnessError::Config(format!("AR(1) beta {} must lie in [0, 1)", self.beta)));
        }
        if self.delta0_ranges.iter().any(|[lo, hi]| !(lo < hi)) {
            return Err(HarnessError::Config("each delta0 range needs lower < upper".into()));
        }
        if self.lasso_degrees.iter().any(|d| !(1..=3).contains(d)) {
            return Err(HarnessError::Config("lasso degrees must lie in 1..=3".into()));
        }
        Ok(())
    }
}

/// Config file layout.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub scenario: Option<String>,
    pub seed: Option<u64>,
    pub scale: Option<Scale>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub record_runtime: Option<bool>,
    #[serde(default)]
    pub knobs: KnobOverrides,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| HarnessError::Config(format!("config {}: {e}", path.display())))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub seed: u64,
    pub scale: Scale,
    pub out: PathBuf,
    /// Wall-clock runtimes are written only when set; otherwise 0 so reruns
    /// are byte-identical.
    pub record_runtime: bool,
    pub knobs: Knobs,
}

pub const DEFAULT_SEED: u64 = 20240601;

impl ExperimentConfig {
    /// Desk-scale defaults for `scenario`.
    pub fn new(scenario: Scenario) -> Self {
        Self::with_scale(scenario, Scale::Desk)
    }

    pub fn with_scale(scenario: Scenario, scale: Scale) -> Self {
        Self {
            scenario,
            seed: DEFAULT_SEED,
            scale,
            out: PathBuf::from("results"),
            record_runtime: false,
            knobs: Knobs::defaults(scenario, scale),
        }
    }

    /// Merges a config file with command-line values; the command line wins.
    pub fn resolve(
        file: Option<&ConfigFile>,
        scenario: Option<&str>,
        seed: Option<u64>,
        scale: Option<Scale>,
        out: Option<&Path>,
    ) -> Result<Self> {
        let name = scenario
            .map(str::to_string)
            .or_else(|| file.and_then(|f| f.scenario.clone()))
            .ok_or_else(|| HarnessError::Config("no scenario given".into()))?;
        let scenario: Scenario = name.parse()?;
        let scale = scale.or(file.and_then(|f| f.scale)).unwrap_or_default();
        let mut cfg = Self::with_scale(scenario, scale);
        if let Some(f) = file {
            cfg.knobs.apply(&f.knobs);
            if let Some(s) = f.seed {
                cfg.seed = s;
            }
            if let Some(o) = &f.out {
                cfg.out = o.clone();
            }
            cfg.record_runtime = f.record_runtime.unwrap_or(false);
        }
        if let Some(s) = seed {
            cfg.seed = s;
        }
        if let Some(o) = out {
            cfg.out = o.to_path_buf();
        }
        cfg.knobs.validate()?;
        Ok(cfg)
    }
}
