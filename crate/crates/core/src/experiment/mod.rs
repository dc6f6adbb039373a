//! Investment-consumption experiments on synthetic trees.

mod model;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ambiguity::regime_nominal;
use crate::multistage::{solve_holistic, solve_nominal, tangent_envelope, MultistageProblem, Policy};
use crate::tree::{generate_synthetic, ScenarioTree, SyntheticParams};
use crate::utility::project;
use crate::{Error, Result};

pub use model::{build_investment_consumption, reward_scale, wealth_bounds, Market};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    /// Expected utility with the regime utilities themselves.
    MspTrue,
    /// Expected utility with the regime utilities projected on the grid.
    MspPln,
    /// Worst case over Kantorovich balls around the projections.
    ProKan,
    /// Worst case over utilities consistent with simulated answers.
    ProPc,
}

impl Model {
    pub fn name(self) -> &'static str {
        match self {
            Model::MspTrue => "msp_true",
            Model::MspPln => "msp_pln",
            Model::ProKan => "pro_kan",
            Model::ProPc => "pro_pc",
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "msp_true" => Ok(Model::MspTrue),
            "msp_pln" => Ok(Model::MspPln),
            "pro_kan" => Ok(Model::ProKan),
            "pro_pc" => Ok(Model::ProPc),
            _ => Err(Error::Config(format!("unknown model {s:?}; expected msp_true, msp_pln, pro_kan or pro_pc"))),
        }
    }
}

fn default_branching() -> Vec<usize> {
    vec![3, 3, 3]
}
fn default_breakpoints() -> usize {
    20
}
fn default_radius() -> f64 {
    0.001
}
fn default_questions() -> usize {
    10
}
fn default_model() -> Model {
    Model::ProKan
}
fn default_seeds() -> Vec<u64> {
    vec![0]
}
fn default_wealth() -> f64 {
    1.0
}
fn default_assets() -> Vec<String> {
    vec!["r1".into(), "r2".into(), "r3".into()]
}
fn default_price() -> String {
    "oil".into()
}
fn default_tangents() -> usize {
    65
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_branching")]
    pub branching: Vec<usize>,
    /// Checked against the length of `branching` when given.
    #[serde(default)]
    pub horizon: Option<usize>,
    #[serde(default = "default_breakpoints")]
    pub breakpoints: usize,
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default = "default_questions")]
    pub questions: usize,
    #[serde(default = "default_model")]
    pub model: Model,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Fixes the tree across seeds; seeds then only change the answers.
    #[serde(default)]
    pub tree_seed: Option<u64>,
    /// Reads the tree from a file instead of generating it.
    #[serde(default)]
    pub tree: Option<PathBuf>,
    #[serde(default)]
    pub synthetic: SyntheticParams,
    #[serde(default = "default_wealth")]
    pub initial_wealth: f64,
    /// Overrides the computed reward scale.
    #[serde(default)]
    pub reward_scale: Option<f64>,
    #[serde(default = "default_assets")]
    pub assets: Vec<String>,
    #[serde(default = "default_price")]
    pub price_series: String,
    #[serde(default)]
    pub lipschitz: Option<f64>,
    #[serde(default)]
    pub lipschitz_slope: Option<f64>,
    /// Tangent lines approximating the regime utilities in `msp_true`.
    #[serde(default = "default_tangents")]
    pub tangent_points: usize,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Record wall-clock times; otherwise the `ms` column is 0.
    #[serde(default)]
    pub timing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        toml::from_str("").expect("every field has a default")
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.breakpoints < 2 {
            return Err(Error::Config(format!("need at least 2 breakpoints, got {}", self.breakpoints)));
        }
        if !(self.radius >= 0.0 && self.radius.is_finite()) {
            return Err(Error::Config(format!("radius must be finite and nonnegative, got {}", self.radius)));
        }
        if self.branching.is_empty() || self.branching.contains(&0) {
            return Err(Error::Config("branching factors must be positive".into()));
        }
        if let Some(t) = self.horizon {
            if t != self.branching.len() {
                return Err(Error::Config(format!("horizon {t} but {} branching factors", self.branching.len())));
            }
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("no seeds given".into()));
        }
        if self.tangent_points < 2 {
            return Err(Error::Config("need at least 2 tangent points".into()));
        }
        Ok(())
    }

    pub fn horizon(&self) -> usize {
        self.branching.len()
    }
}

/// One line of output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub run_id: usize,
    pub model: Model,
    #[serde(rename = "T")]
    pub t: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "R")]
    pub r: f64,
    #[serde(rename = "K")]
    pub k: usize,
    pub seed: u64,
    pub value: f64,
    pub q1: f64,
    pub ms: u64,
}

pub const CSV_HEADER: &str = "run_id,model,T,N,R,K,seed,value,q1,ms";

/// Rows as comma-separated text with [`CSV_HEADER`].
pub fn rows_to_csv(rows: &[ResultRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.run_id, r.model, r.t, r.n, r.r, r.k, r.seed, r.value, r.q1, r.ms
        ));
    }
    out
}

pub fn tree_for(config: &ExperimentConfig, seed: u64) -> Result<ScenarioTree> {
    match &config.tree {
        Some(path) => Ok(ScenarioTree::load(path)?),
        None => Ok(generate_synthetic(&config.branching, &config.synthetic, config.tree_seed.unwrap_or(seed))?),
    }
}

/// Solves the configured model on `problem`.
pub fn solve_model(problem: &MultistageProblem, config: &ExperimentConfig) -> Result<Policy> {
    let tree = problem.tree();
    let market = Market::locate(tree, config)?;
    match config.model {
        Model::ProKan | Model::ProPc => solve_holistic(problem),
        Model::MspPln | Model::MspTrue => {
            let mut utilities = BTreeMap::new();
            for s in tree.non_leaves() {
                let truth = regime_nominal(tree.realization(s, market.price));
                let u = if config.model == Model::MspPln {
                    project(&truth, problem.grid())?
                } else {
                    tangent_envelope(&truth, config.tangent_points)?
                };
                utilities.insert(s, u);
            }
            solve_nominal(problem, &utilities)
        }
    }
}

fn run_one(config: &ExperimentConfig, seed: u64, run_id: usize) -> Result<(ResultRow, Policy)> {
    let start = Instant::now();
    let mut cfg = config.clone();
    cfg.seeds = vec![seed];
    let tree = tree_for(&cfg, seed)?;
    let problem = build_investment_consumption(&tree, &cfg)?;
    let policy = solve_model(&problem, &cfg)?;
    let q1 = *policy.decisions[0].last().expect("root decides consumption");
    let ms = if cfg.timing { start.elapsed().as_millis() as u64 } else { 0 };
    let row = ResultRow {
        run_id,
        model: cfg.model,
        t: tree.horizon(),
        n: cfg.breakpoints,
        r: cfg.radius,
        k: cfg.questions,
        seed,
        value: policy.value,
        q1,
        ms,
    };
    Ok((row, policy))
}

/// One row per seed, in seed order.
pub fn run(config: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    config.validate()?;
    config.seeds.iter().enumerate().map(|(i, &seed)| run_one(config, seed, i).map(|r| r.0)).collect()
}

/// Like [`run`] for a single seed, also returning the policy.
pub fn run_with_policy(config: &ExperimentConfig, seed: u64) -> Result<(ResultRow, Policy)> {
    config.validate()?;
    run_one(config, seed, 0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Horizon,
    Breakpoints,
    Radius,
    Questions,
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "T" | "horizon" => Ok(SweepParam::Horizon),
            "N" | "breakpoints" => Ok(SweepParam::Breakpoints),
            "R" | "radius" => Ok(SweepParam::Radius),
            "K" | "questions" => Ok(SweepParam::Questions),
            _ => Err(Error::Config(format!("unknown sweep parameter {s:?}; expected T, N, R or K"))),
        }
    }
}

fn as_count(v: f64, what: &str) -> Result<usize> {
    if v >= 0.0 && v.fract() == 0.0 && v <= 1e9 {
        Ok(v as usize)
    } else {
        Err(Error::Config(format!("{what} must be a nonnegative integer, got {v}")))
    }
}

/// `config` with one parameter replaced. A longer horizon repeats the last
/// branching factor; a shorter one truncates.
pub fn with_param(config: &ExperimentConfig, param: SweepParam, value: f64) -> Result<ExperimentConfig> {
    let mut c = config.clone();
    match param {
        SweepParam::Horizon => {
            let t = as_count(value, "T")?;
            if t == 0 {
                return Err(Error::Config("T must be positive".into()));
            }
            let last = *c.branching.last().expect("validated");
            c.branching.resize(t, last);
            c.horizon = None;
        }
        SweepParam::Breakpoints => c.breakpoints = as_count(value, "N")?,
        SweepParam::Radius => c.radius = value,
        SweepParam::Questions => c.questions = as_count(value, "K")?,
    }
    c.validate()?;
    Ok(c)
}

/// One run per `(value, seed)`, in that order. Runs are independent and
/// executed in parallel.
pub fn sweep(config: &ExperimentConfig, param: SweepParam, values: &[f64]) -> Result<Vec<ResultRow>> {
    let configs = values.iter().map(|&v| with_param(config, param, v)).collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, u64)> =
        (0..configs.len()).flat_map(|i| config.seeds.iter().map(move |&s| (i, s))).collect();
    jobs.par_iter()
        .enumerate()
        .map(|(id, &(i, seed))| run_one(&configs[i], seed, id).map(|r| r.0))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub param_value: f64,
    pub runs: usize,
    pub mean: f64,
    /// Sample standard deviation; 0 for a single run.
    pub std: f64,
    pub mean_q1: f64,
}

/// Mean and standard deviation of the values of each group of rows with the
/// same swept parameter, in the order given.
pub fn summarize(rows: &[ResultRow], param: SweepParam, values: &[f64]) -> Vec<SummaryRow> {
    values
        .iter()
        .map(|&v| {
            let group: Vec<&ResultRow> = rows
                .iter()
                .filter(|r| match param {
                    SweepParam::Horizon => r.t as f64 == v,
                    SweepParam::Breakpoints => r.n as f64 == v,
                    SweepParam::Radius => r.r == v,
                    SweepParam::Questions => r.k as f64 == v,
                })
                .collect();
            let m = group.len();
            let mean = group.iter().map(|r| r.value).sum::<f64>() / m.max(1) as f64;
            let var = if m > 1 {
                group.iter().map(|r| (r.value - mean).powi(2)).sum::<f64>() / (m - 1) as f64
            } else {
                0.0
            };
            let mean_q1 = group.iter().map(|r| r.q1).sum::<f64>() / m.max(1) as f64;
            SummaryRow { param_value: v, runs: m, mean, std: var.sqrt(), mean_q1 }
        })
        .collect()
}

pub fn summary_to_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from("param,runs,mean,std,mean_q1\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{},{}\n", r.param_value, r.runs, r.mean, r.std, r.mean_q1));
    }
    out
}
