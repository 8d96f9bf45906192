use crate::error::{Error, Result};
use crate::lyapunov::{LearnConfig, LyapRiskConfig};
use crate::roa::{AttractionConfig, LevelConfig};
use crate::sysid::TrainConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Settings of the Lyapunov learner that are not shared with other stages.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LyapunovStage {
    pub hidden: usize,
    pub lr: f64,
    pub epochs_per_round: usize,
    pub max_rounds: usize,
    pub beta_margin: f64,
    pub counterexample_neighbours: usize,
    pub train_controller: bool,
    pub falsify_budget: u64,
    pub seed: u64,
    pub risk: LyapRiskConfig,
}

impl Default for LyapunovStage {
    fn default() -> Self {
        let l = LearnConfig::default();
        LyapunovStage {
            hidden: l.hidden,
            lr: l.lr,
            epochs_per_round: l.epochs_per_round,
            max_rounds: l.max_rounds,
            beta_margin: l.beta_margin,
            counterexample_neighbours: l.counterexample_neighbours,
            train_controller: l.train_controller,
            falsify_budget: l.falsify_budget,
            seed: l.seed,
            risk: l.risk,
        }
    }
}

/// LQR weights as diagonals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LqrStage {
    pub q: Vec<f64>,
    pub r: Vec<f64>,
}

impl Default for LqrStage {
    fn default() -> Self {
        LqrStage {
            q: vec![1.0, 1.0],
            r: vec![1.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RoaStage {
    pub iterations: usize,
    pub precision: f64,
    pub area_samples: usize,
    /// Simulated probes; 0 skips the attraction check.
    pub probes: usize,
    pub t_end: f64,
    pub dt: f64,
    pub seed: u64,
}

impl Default for RoaStage {
    fn default() -> Self {
        let l = LevelConfig::default();
        let a = AttractionConfig::default();
        RoaStage {
            iterations: l.iterations,
            precision: l.precision,
            area_samples: l.area_samples,
            probes: 200,
            t_end: a.t_end,
            dt: a.dt,
            seed: 0,
        }
    }
}

/// One end-to-end run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub system: String,
    /// Radius of the ball excluded from verification.
    pub eps: f64,
    /// Falsifier δ.
    pub precision: f64,
    /// Initial guess of β, also its floor.
    pub beta: f64,
    #[serde(default)]
    pub dynamics: TrainConfig,
    #[serde(default)]
    pub lyapunov: LyapunovStage,
    #[serde(default)]
    pub lqr: LqrStage,
    #[serde(default)]
    pub roa: RoaStage,
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

impl PipelineConfig {
    /// Defaults for a benchmark: its published `ε` and `β`.
    pub fn for_system(system: &str) -> Result<Self> {
        let row = crate::certificate::shipped(system)?.table;
        let sys = crate::dynamics::by_name(system)?;
        let mut cfg = PipelineConfig {
            system: system.into(),
            eps: row.eps,
            precision: 0.01,
            beta: row.beta,
            dynamics: TrainConfig::default(),
            lyapunov: LyapunovStage::default(),
            lqr: LqrStage {
                q: vec![1.0; sys.state_dim],
                r: vec![1.0; sys.input_dim],
            },
            roa: RoaStage::default(),
        };
        cfg.roa.dt = AttractionConfig::for_system(system).dt;
        Ok(cfg)
    }

    /// Parses a config. Keys missing from the file take the defaults of its
    /// `system` when that is a known benchmark.
    pub fn from_toml(text: &str) -> Result<Self> {
        let bad = |e: &dyn std::fmt::Display| Error::Config(e.to_string());
        let mut table: toml::Table = toml::from_str(text).map_err(|e| bad(&e))?;
        let base = table
            .get("system")
            .and_then(|s| s.as_str())
            .and_then(|s| PipelineConfig::for_system(s).ok());
        if let Some(base) = base {
            let mut merged = toml::Table::try_from(&base).map_err(|e| bad(&e))?;
            merge(&mut merged, std::mem::take(&mut table));
            table = merged;
        }
        let cfg: PipelineConfig = table.try_into().map_err(|e| bad(&e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// The configuration with every default written out.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("pipeline configs always serialize")
    }

    /// SHA-256 of [`Self::to_toml`], hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        let sys = crate::dynamics::by_name(&self.system)?;
        if !(self.eps > 0.0) || !(self.precision > 0.0) || !(self.beta >= 0.0) {
            return Err(Error::Config(
                "eps and precision must be positive, beta nonnegative".into(),
            ));
        }
        if self.lqr.q.len() != sys.state_dim || self.lqr.r.len() != sys.input_dim {
            return Err(Error::Config(format!(
                "{} needs {} Q and {} R weights",
                self.system, sys.state_dim, sys.input_dim
            )));
        }
        self.lyapunov.risk.validate()
    }

    pub fn learn_config(&self) -> LearnConfig {
        let l = &self.lyapunov;
        LearnConfig {
            risk: l.risk.clone(),
            hidden: l.hidden,
            lr: l.lr,
            epochs_per_round: l.epochs_per_round,
            max_rounds: l.max_rounds,
            eps: self.eps,
            precision: self.precision,
            falsify_budget: l.falsify_budget,
            beta_min: self.beta,
            beta_margin: l.beta_margin,
            counterexample_neighbours: l.counterexample_neighbours,
            train_controller: l.train_controller,
            seed: l.seed,
        }
    }

    pub fn level_config(&self) -> LevelConfig {
        LevelConfig {
            iterations: self.roa.iterations,
            precision: self.roa.precision,
            budget: LevelConfig::default().budget,
            eps: self.eps,
            area_samples: self.roa.area_samples,
            seed: self.roa.seed,
        }
    }

    pub fn attraction_config(&self) -> AttractionConfig {
        AttractionConfig {
            probes: self.roa.probes,
            t_end: self.roa.t_end,
            dt: self.roa.dt,
            eps: self.eps,
            seed: self.roa.seed,
            ..AttractionConfig::default()
        }
    }
}
