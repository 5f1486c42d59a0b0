//! Experiment configuration, read from TOML or JSON.

use std::fs;
use std::path::{Path, PathBuf};

use cpsize::bounds::{SlackMode, TailMode};
use cpsize::dataio::{CsvSchema, SyntheticKind};
use cpsize::learners::TrainConfig;
use cpsize::scores::{LabelSpace, ScoreSpec};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Classification,
    Regression,
}

impl Task {
    pub fn as_str(&self) -> &'static str {
        match self {
            Task::Classification => "classification",
            Task::Regression => "regression",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "source")]
pub enum DataSource {
    Synthetic { generator: SyntheticKind },
    Csv { path: PathBuf, schema: CsvSchema },
}

impl DataSource {
    pub fn space(&self) -> Result<LabelSpace<f64>> {
        match self {
            DataSource::Synthetic { generator } => Ok(generator.space()?),
            DataSource::Csv { schema, .. } => Ok(schema.space),
        }
    }
}

/// Slack variant used for the training-c.d.f. bounds of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlackModeName {
    #[default]
    OracleZero,
    AssumptionBeta,
    CorollaryBetaMu,
}

impl SlackModeName {
    pub fn as_str(&self) -> &'static str {
        match self {
            SlackModeName::OracleZero => "oracle_zero",
            SlackModeName::AssumptionBeta => "assumption_beta",
            SlackModeName::CorollaryBetaMu => "corollary_beta_mu",
        }
    }

    pub fn mode(&self, c: f64, delta: f64) -> SlackMode<f64> {
        match self {
            SlackModeName::OracleZero => SlackMode::OracleZero,
            SlackModeName::AssumptionBeta => SlackMode::AssumptionBeta { c, delta },
            SlackModeName::CorollaryBetaMu => SlackMode::CorollaryBetaMu { c, delta },
        }
    }
}

fn default_delta() -> f64 {
    0.1
}

fn default_n_test() -> usize {
    2000
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_one() -> f64 {
    1.0
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Task,
    pub data: DataSource,
    #[serde(default)]
    pub train: TrainConfig,
    pub n_tr: Vec<usize>,
    pub n_cal: Vec<usize>,
    pub alpha: Vec<f64>,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub slack_mode: SlackModeName,
    #[serde(default)]
    pub tail_mode: TailMode,
    pub n_trials: usize,
    #[serde(default = "default_n_test")]
    pub n_test: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    /// Mutual-information constant in the β slack.
    #[serde(default = "default_one")]
    pub c: f64,
    /// Exponent of the regression score |ŷ − y|^p.
    #[serde(default = "default_one")]
    pub p: f64,
    /// Fresh model draw for every calibration and test point; otherwise one
    /// draw per trial.
    #[serde(default = "default_true")]
    pub per_point_draws: bool,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let cfg: Self = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(&text)?,
            _ => toml::from_str(&text)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_tr.is_empty() || self.n_cal.is_empty() || self.alpha.is_empty() {
            return bad("n_tr, n_cal and alpha grids must be nonempty".into());
        }
        if self.n_tr.iter().chain(&self.n_cal).any(|&n| n == 0) {
            return bad("grid sizes must be >= 1".into());
        }
        if let Some(a) = self.alpha.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
            return bad(format!("alpha {a} outside (0, 1)"));
        }
        if self.n_trials == 0 || self.n_test == 0 {
            return bad("n_trials and n_test must be >= 1".into());
        }
        if !(self.delta > 0.0 && self.delta < 0.5) {
            return bad(format!("delta {} outside (0, 0.5)", self.delta));
        }
        if self.slack_mode != SlackModeName::OracleZero && self.n_tr.iter().any(|&n| n < 2) {
            return bad("slack terms need n_tr >= 2".into());
        }
        self.train.validate()?;
        let space = self.data.space()?;
        match (self.task, space) {
            (Task::Classification, LabelSpace::Discrete { .. }) | (Task::Regression, LabelSpace::Interval { .. }) => {}
            _ => return bad(format!("task {} does not match data space {space:?}", self.task.as_str())),
        }
        self.score_spec()?;
        Ok(())
    }

    pub fn score_spec(&self) -> Result<ScoreSpec<f64>> {
        Ok(match self.data.space()? {
            LabelSpace::Discrete { k } => ScoreSpec::zero_one(k)?,
            LabelSpace::Interval { lo, hi } => ScoreSpec::lp_power(self.p, lo, hi)?,
        })
    }

    pub fn max_n_tr(&self) -> usize {
        self.n_tr.iter().copied().max().unwrap_or(0)
    }

    pub fn max_n_cal(&self) -> usize {
        self.n_cal.iter().copied().max().unwrap_or(0)
    }

    /// All grid points in output order.
    pub fn grid(&self) -> Vec<GridPoint> {
        let mut out = Vec::new();
        for &n_tr in &self.n_tr {
            for &n_cal in &self.n_cal {
                for (alpha_index, &alpha) in self.alpha.iter().enumerate() {
                    out.push(GridPoint {
                        n_tr,
                        n_cal,
                        alpha,
                        alpha_index,
                    });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub n_tr: usize,
    pub n_cal: usize,
    pub alpha: f64,
    /// Position in the alpha grid; part of the seed path and file key.
    pub alpha_index: usize,
}

impl GridPoint {
    pub fn key(&self) -> String {
        format!("ntr{}_ncal{}_a{:03}", self.n_tr, self.n_cal, self.alpha_index)
    }
}
