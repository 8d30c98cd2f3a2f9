//! Experiment configuration (TOML).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use actorsim_core::calibration::{FitMethod, FitOptions, Parameterization};
use actorsim_core::kinetics::{NoiseRule, RewardConstants};
use actorsim_core::policy_opt::{DqnOptions, EpsilonSchedule, TrainOptions};
use actorsim_core::uncertainty::ValueOptions;

use crate::error::{HarnessError, Result};

/// Data-collection rule of a campaign arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Arm {
    ActorSimulator,
    Random,
    Gp,
}

impl Arm {
    pub fn name(self) -> &'static str {
        match self {
            Arm::ActorSimulator => "actor-simulator",
            Arm::Random => "random",
            Arm::Gp => "gp",
        }
    }

    pub fn parse(s: &str) -> Option<Arm> {
        [Arm::ActorSimulator, Arm::Random, Arm::Gp].into_iter().find(|a| a.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitMethodName {
    Adam,
    LevenbergMarquardt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub method: FitMethodName,
    /// Optimize `ln(beta)` instead of `beta`.
    pub log_parameters: bool,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub validation_fraction: f64,
    pub grad_tol: f64,
    /// Starting points for the first fit (the first is the configured initial
    /// guess, the rest fresh draws from the same rule); the best is kept.
    pub initial_restarts: usize,
    /// Epoch budget of the first fit.
    pub initial_max_epochs: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            method: FitMethodName::LevenbergMarquardt,
            log_parameters: true,
            learning_rate: 1e-3,
            max_epochs: 30,
            patience: 5,
            validation_fraction: 0.0,
            grad_tol: 1e-10,
            initial_restarts: 4,
            initial_max_epochs: 100,
        }
    }
}

impl FitConfig {
    pub fn options(&self) -> FitOptions {
        FitOptions {
            method: match self.method {
                FitMethodName::Adam => FitMethod::Adam,
                FitMethodName::LevenbergMarquardt => FitMethod::LevenbergMarquardt,
            },
            parameterization: if self.log_parameters { Parameterization::Log } else { Parameterization::Linear },
            learning_rate: self.learning_rate,
            max_epochs: self.max_epochs,
            patience: self.patience,
            validation_fraction: self.validation_fraction,
            grad_tol: self.grad_tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UncertaintyConfig {
    pub rollouts: usize,
    pub horizon: usize,
    pub weight_samples: usize,
    pub v_max: f64,
    /// Cheaper settings for the weight table behind the training penalty.
    pub penalty_rollouts: usize,
    pub penalty_weight_samples: usize,
}

impl Default for UncertaintyConfig {
    fn default() -> Self {
        let v = ValueOptions::default();
        Self {
            rollouts: v.rollouts,
            horizon: v.horizon,
            weight_samples: 16,
            v_max: v.v_max,
            penalty_rollouts: 4,
            penalty_weight_samples: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    /// Simulated episodes per training call.
    pub episodes: usize,
    /// Train every this many iterations (the data-collection policy of the
    /// main arm is always refreshed when it trains).
    pub every: usize,
    pub updates_per_step: usize,
    pub max_updates_per_episode: usize,
    pub batch: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub buffer_capacity: usize,
    pub epsilon_start: f64,
    pub epsilon_decay: f64,
    pub epsilon_floor: f64,
    pub hidden: Vec<usize>,
    /// Divide penalized rewards by the reward bound inside the learner.
    pub normalize_rewards: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        let t = TrainOptions::default();
        Self {
            episodes: t.episodes,
            every: 1,
            updates_per_step: t.updates_per_step,
            max_updates_per_episode: t.max_updates_per_episode,
            batch: t.dqn.batch,
            learning_rate: t.dqn.learning_rate,
            l2: t.dqn.l2,
            buffer_capacity: t.buffer_capacity,
            epsilon_start: t.schedule.start,
            epsilon_decay: t.schedule.decay,
            epsilon_floor: t.schedule.floor,
            hidden: vec![64, 64],
            normalize_rewards: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    pub c_r: f64,
    pub c_m: f64,
    pub c_l: f64,
    pub yield_conversion: f64,
    pub lactate_cap: f64,
    pub growth_cap: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        let r = RewardConstants::default();
        Self {
            c_r: r.c_r,
            c_m: r.c_m,
            c_l: r.c_l,
            yield_conversion: r.yield_conversion,
            lactate_cap: r.lactate_cap,
            growth_cap: r.growth_cap,
        }
    }
}

impl RewardConfig {
    pub fn constants(&self) -> RewardConstants {
        RewardConstants {
            c_r: self.c_r,
            c_m: self.c_m,
            c_l: self.c_l,
            yield_conversion: self.yield_conversion,
            lactate_cap: self.lactate_cap,
            growth_cap: self.growth_cap,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseRuleName {
    /// Standard deviation is `noise_fraction` times the initial value.
    StdFraction,
    /// Variance is `noise_fraction` times the initial value.
    VarianceFraction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub arm: Arm,
    /// Arms run by `campaign`.
    pub arms: Vec<Arm>,
    /// Number of calibrated parameters: 20, 30 or 40.
    pub case: usize,
    /// Algorithm iterations (physical transitions after initialization).
    pub iterations: usize,
    pub init_episodes: usize,
    pub horizon: usize,
    pub dt_hours: f64,
    pub substeps: usize,
    pub replications: usize,
    pub gamma: f64,
    /// Penalty coefficient `c` in `lambda = c * gamma`.
    pub lambda_c: f64,
    pub noise_rule: NoiseRuleName,
    pub noise_fraction: f64,
    /// Upper end of the initial guess, as a multiple of the true value.
    pub init_beta_multiple: f64,
    pub seed: u64,
    pub eval_every: usize,
    pub eval_episodes: usize,
    pub final_eval_episodes: usize,
    pub action_grid_size: usize,
    pub gp_capacity: usize,
    pub mape_probe_states: usize,
    /// Fraction of degraded iterations that fails a run.
    pub max_degraded_fraction: f64,
    pub params_file: Option<PathBuf>,
    pub stoichiometry_file: Option<PathBuf>,
    pub fit: FitConfig,
    pub uncertainty: UncertaintyConfig,
    pub training: TrainingConfig,
    pub reward: RewardConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            arm: Arm::ActorSimulator,
            arms: vec![Arm::ActorSimulator, Arm::Random, Arm::Gp],
            case: 20,
            iterations: 100,
            init_episodes: 5,
            horizon: 12,
            dt_hours: 4.0,
            substeps: 16,
            replications: 30,
            gamma: 0.99,
            lambda_c: 1.0,
            noise_rule: NoiseRuleName::StdFraction,
            noise_fraction: 0.05,
            init_beta_multiple: 4.0,
            seed: 0,
            eval_every: 5,
            eval_episodes: 200,
            final_eval_episodes: 1000,
            action_grid_size: 11,
            gp_capacity: 500,
            mape_probe_states: 100,
            max_degraded_fraction: 0.2,
            params_file: None,
            stoichiometry_file: None,
            fit: FitConfig::default(),
            uncertainty: UncertaintyConfig::default(),
            training: TrainingConfig::default(),
            reward: RewardConfig::default(),
        }
    }
}

fn bad(msg: &str) -> HarnessError {
    HarnessError::Config(msg.to_string())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    /// Reads a config; relative file paths inside it resolve against the
    /// config's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        let mut c = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut c.params_file, &mut c.stoichiometry_file].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if ![20, 30, 40].contains(&self.case) {
            return Err(bad("case must be 20, 30 or 40"));
        }
        let counts = [
            ("iterations", self.iterations),
            ("init_episodes", self.init_episodes),
            ("horizon", self.horizon),
            ("substeps", self.substeps),
            ("replications", self.replications),
            ("eval_every", self.eval_every),
            ("eval_episodes", self.eval_episodes),
            ("final_eval_episodes", self.final_eval_episodes),
            ("gp_capacity", self.gp_capacity),
            ("mape_probe_states", self.mape_probe_states),
            ("training.episodes", self.training.episodes),
            ("training.every", self.training.every),
            ("training.batch", self.training.batch),
            ("training.buffer_capacity", self.training.buffer_capacity),
            ("uncertainty.rollouts", self.uncertainty.rollouts),
            ("uncertainty.horizon", self.uncertainty.horizon),
            ("uncertainty.weight_samples", self.uncertainty.weight_samples),
            ("uncertainty.penalty_rollouts", self.uncertainty.penalty_rollouts),
            ("uncertainty.penalty_weight_samples", self.uncertainty.penalty_weight_samples),
            ("fit.max_epochs", self.fit.max_epochs),
            ("fit.initial_restarts", self.fit.initial_restarts),
            ("fit.initial_max_epochs", self.fit.initial_max_epochs),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(HarnessError::Config(format!("{name} must be at least 1")));
            }
        }
        if self.action_grid_size < 2 {
            return Err(bad("action_grid_size must be at least 2"));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(bad("gamma must lie in (0, 1)"));
        }
        if !(self.lambda_c >= 1.0) {
            return Err(bad("lambda_c must be at least 1"));
        }
        if !(self.dt_hours > 0.0) || !(self.noise_fraction > 0.0) || !(self.init_beta_multiple > 0.0) {
            return Err(bad("dt_hours, noise_fraction and init_beta_multiple must be positive"));
        }
        if !(0.0..1.0).contains(&self.fit.validation_fraction) {
            return Err(bad("fit.validation_fraction must lie in [0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.max_degraded_fraction) {
            return Err(bad("max_degraded_fraction must lie in [0, 1]"));
        }
        if self.arms.is_empty() {
            return Err(bad("arms must not be empty"));
        }
        if self.training.hidden.is_empty() || self.training.hidden.contains(&0) {
            return Err(bad("training.hidden needs positive layer widths"));
        }
        for p in [&self.params_file, &self.stoichiometry_file].into_iter().flatten() {
            if !p.exists() {
                return Err(HarnessError::Config(format!("{} does not exist", p.display())));
            }
        }
        Ok(())
    }

    pub fn lambda(&self) -> f64 {
        self.lambda_c * self.gamma
    }

    pub fn noise_rule(&self) -> NoiseRule {
        match self.noise_rule {
            NoiseRuleName::StdFraction => NoiseRule::StdFraction(self.noise_fraction),
            NoiseRuleName::VarianceFraction => NoiseRule::VarianceFraction(self.noise_fraction),
        }
    }

    pub fn value_options(&self) -> ValueOptions {
        ValueOptions {
            rollouts: self.uncertainty.rollouts,
            horizon: self.uncertainty.horizon,
            gamma: self.gamma,
            v_max: self.uncertainty.v_max,
        }
    }

    pub fn train_options(&self) -> TrainOptions {
        let t = &self.training;
        TrainOptions {
            episodes: t.episodes,
            horizon: self.horizon,
            updates_per_step: t.updates_per_step,
            max_updates_per_episode: t.max_updates_per_episode,
            dqn: DqnOptions { batch: t.batch, gamma: self.gamma, learning_rate: t.learning_rate, l2: t.l2 },
            schedule: EpsilonSchedule { start: t.epsilon_start, decay: t.epsilon_decay, floor: t.epsilon_floor },
            buffer_capacity: t.buffer_capacity,
            reward_scale: 1.0,
        }
    }
}
