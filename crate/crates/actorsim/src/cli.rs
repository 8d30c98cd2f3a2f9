//! Command-line front end.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use actorsim_core::calibration::{estimate_covariance, mle_fit, CovarianceOptions};
use actorsim_core::mdp::{rollout, Dataset, Policy, TransitionSample, UniformPolicy};
use actorsim_core::policy_opt::{GreedyPolicy, QNetwork};

use crate::config::{Arm, ExperimentConfig};
use crate::csvio;
use crate::error::{HarnessError, Result};
use crate::harness::{self, Setup};
use crate::params_file::{self, KineticSetup};
use crate::rng::{stream, Component};

#[derive(Debug, Parser)]
#[command(name = "actorsim", version, about = "Uncertainty-aware calibration and policy optimization for a cell-culture digital twin")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Experiment configuration (TOML); built-in defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed (overrides the config).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// actor-simulator, random or gp (overrides the config).
    #[arg(long, global = true, value_parser = parse_arm)]
    pub arm: Option<Arm>,
    /// Number of calibrated parameters: 20, 30 or 40.
    #[arg(long, global = true, value_parser = ["20", "30", "40"])]
    pub case: Option<String>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
}

fn parse_arm(s: &str) -> std::result::Result<Arm, String> {
    Arm::parse(s).ok_or_else(|| format!("unknown arm `{s}` (expected actor-simulator, random or gp)"))
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Roll the physical emulator and dump trajectories and a dataset.
    Simulate {
        #[arg(long)]
        episodes: Option<usize>,
        /// Policy checkpoint; uniform random actions when omitted.
        #[arg(long)]
        policy: Option<PathBuf>,
    },
    /// Fit the calibrated parameters to a dataset.
    Calibrate {
        #[arg(long)]
        data: PathBuf,
    },
    /// Train a policy on the twin at fixed parameters.
    Train {
        /// Kinetic parameter file supplying the twin's parameters; the
        /// configured true parameters when omitted.
        #[arg(long)]
        params: Option<PathBuf>,
    },
    /// One run of the selected arm.
    Run {
        #[arg(long, default_value_t = 0)]
        replication: usize,
    },
    /// All configured arms over all replications.
    Campaign,
    /// Evaluate a policy checkpoint on the physical system.
    Evaluate {
        #[arg(long)]
        policy: PathBuf,
        #[arg(long)]
        episodes: Option<usize>,
    },
}

pub fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(a) = common.arm {
        cfg.arm = a;
    }
    if let Some(c) = &common.case {
        cfg.case = c.parse().map_err(|_| HarnessError::Config(format!("bad case `{c}`")))?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_policy(path: &Path, setup: &Setup) -> Result<GreedyPolicy> {
    let bytes = std::fs::read(path).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
    let net = QNetwork::from_bytes(&bytes).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
    if net.input_dim() != setup.base_state.len() || net.n_actions() != setup.grid.len() {
        return Err(HarnessError::Config("policy shape does not match the configured state and action grid".into()));
    }
    Ok(GreedyPolicy { net, grid: setup.grid.clone() })
}

/// Kinetic setup with the calibrated entries replaced by `beta`.
fn calibrated_setup(cfg: &ExperimentConfig, setup: &Setup, beta: &[f64]) -> Result<KineticSetup> {
    let mut ks = match &cfg.params_file {
        Some(p) => params_file::load(p)?,
        None => KineticSetup::default(),
    };
    ks.params = setup.model.mean_fn.params().with_beta(beta)?;
    Ok(ks)
}

pub fn execute(cli: &Cli) -> Result<()> {
    let cfg = load_config(&cli.common)?;
    let setup = Setup::from_config(&cfg)?;
    let out = &cli.common.out;
    std::fs::create_dir_all(out)?;
    match &cli.command {
        Command::Simulate { episodes, policy } => {
            let episodes = episodes.unwrap_or(cfg.init_episodes);
            if episodes == 0 {
                return Err(HarnessError::Config("episodes must be at least 1".into()));
            }
            let uniform = UniformPolicy(setup.grid.clone());
            let loaded = policy.as_deref().map(|p| load_policy(p, &setup)).transpose()?;
            let pol: &dyn Policy = match &loaded {
                Some(p) => p,
                None => &uniform,
            };
            let physical = setup.model.at(&setup.beta_true);
            let mut rng = stream(cfg.seed, 0, Component::Physical);
            let mut trajectories = Vec::with_capacity(episodes);
            let mut data = Dataset::new();
            for _ in 0..episodes {
                let s0 = actorsim_core::mdp::InitialDistribution::sample(&setup.initial, &mut rng);
                let tr = rollout(&physical, pol, &setup.reward, s0, cfg.horizon, cfg.gamma, &mut rng)?;
                data.start_episode();
                for st in &tr.steps {
                    data.push(TransitionSample {
                        state: st.state.clone(),
                        action: st.action,
                        next_state: st.next_state.clone(),
                    })?;
                }
                trajectories.push(tr);
            }
            csvio::write_trajectories(&out.join("trajectories.csv"), &trajectories)?;
            csvio::write_dataset(&out.join("dataset.csv"), &data)?;
            let mean = trajectories.iter().map(|t| t.discounted_return).sum::<f64>() / episodes as f64;
            println!("simulated {episodes} episodes, mean discounted return {mean:.4}");
        }
        Command::Calibrate { data } => {
            let data = csvio::read_dataset(data, &setup.grid)?;
            let mut rng = stream(cfg.seed, 0, Component::Init);
            let beta0 = harness::init_beta(&setup.beta_true, cfg.init_beta_multiple, &setup.model.mean_fn, &mut rng);
            let fit = mle_fit(&data, &beta0, &setup.model, &cfg.fit.options())?;
            let history: Vec<_> = fit.history.iter().map(|e| (0, *e)).collect();
            csvio::write_fit_diagnostics(&out.join("fit_diagnostics.csv"), &history)?;
            let ks = calibrated_setup(&cfg, &setup, &fit.beta)?;
            std::fs::write(out.join("calibrated.toml"), params_file::render(&ks))?;
            let names = setup.model.mean_fn.params().calibrated_names();
            let cov = estimate_covariance(&data, &fit.beta, &setup.model, &CovarianceOptions::default());
            let sd: Vec<Option<f64>> = (0..fit.beta.len())
                .map(|i| cov.as_ref().ok().map(|c| c.estimator_covariance()[(i, i)].max(0.0).sqrt()))
                .collect();
            csvio::write_rows(
                &out.join("estimates.csv"),
                &["parameter", "estimate", "std_error", "true_value"].map(String::from),
                names.iter().enumerate().map(|(i, n)| {
                    vec![
                        n.clone(),
                        csvio::num(fit.beta[i]),
                        sd[i].map(csvio::num).unwrap_or_default(),
                        csvio::num(setup.beta_true[i]),
                    ]
                }),
            )?;
            println!(
                "fit {} samples: {:?} after {} epochs, mean log-likelihood {:.6}, relative error {:.4}",
                data.len(),
                fit.stop,
                fit.history.len(),
                fit.train_ll,
                harness::relative_error(&fit.beta, &setup.beta_true)
            );
        }
        Command::Train { params } => {
            let beta = match params {
                Some(p) => {
                    let mut ks = params_file::load(p)?.params;
                    ks.set_calibrated(setup.model.mean_fn.params().calibrated().to_vec())?;
                    ks.beta()
                }
                None => setup.beta_true.clone(),
            };
            let mut rng = stream(cfg.seed, 0, Component::Training);
            let (policy, logs) = harness::train_on_twin(&setup, &cfg, &beta, &mut rng)?;
            std::fs::write(out.join("policy.bin"), policy.net.to_bytes())?;
            let rows: Vec<_> = logs.into_iter().map(|l| (0, l)).collect();
            csvio::write_training_log(&out.join("training_log.csv"), &rows)?;
            println!("trained {} episodes; checkpoint written to {}", cfg.training.episodes, out.join("policy.bin").display());
        }
        Command::Run { replication } => {
            let run = harness::run_arm(&setup, &cfg, cfg.arm, *replication)?;
            harness::write_run(out, &run)?;
            let ks = calibrated_setup(&cfg, &setup, &run.beta_hat)?;
            std::fs::write(out.join("calibrated.toml"), params_file::render(&ks))?;
            let last = run.metrics.last().expect("at least one iteration");
            println!(
                "{} run: relative error {:.4}, J {} , {} degraded iterations",
                cfg.arm.name(),
                last.relative_error,
                last.j_estimate.map_or("n/a".into(), |j| format!("{j:.4}")),
                run.degraded
            );
        }
        Command::Campaign => {
            let result = harness::run_campaign(&setup, &cfg);
            harness::write_campaign(out, &cfg, &result)?;
            for arm in &cfg.arms {
                if let Some(r) = result
                    .summary
                    .iter()
                    .filter(|r| r.arm == *arm && r.metric == "relative_error")
                    .max_by_key(|r| r.iteration)
                {
                    println!(
                        "{}: relative error at iteration {} mean {:.4} [{:.4}, {:.4}] over {} replications",
                        arm.name(),
                        r.iteration,
                        r.mean,
                        r.lower,
                        r.upper,
                        r.n
                    );
                }
            }
            if result.failed() > 0 {
                return Err(HarnessError::RunFailed(format!(
                    "{} of {} runs failed; see status.csv",
                    result.failed(),
                    result.status.len()
                )));
            }
        }
        Command::Evaluate { policy, episodes } => {
            let pol = load_policy(policy, &setup)?;
            let episodes = episodes.unwrap_or(cfg.final_eval_episodes);
            let mut rng = stream(cfg.seed, 0, Component::Evaluation);
            let ev = harness::evaluate_on_physical(&setup, &cfg, &pol, episodes, &mut rng)?;
            csvio::write_rows(
                &out.join("evaluation.csv"),
                &["episodes", "mean_return", "std_error"].map(String::from),
                [vec![episodes.to_string(), csvio::num(ev.mean), csvio::num(ev.std_error)]],
            )?;
            println!("J = {:.4} +/- {:.4} over {episodes} episodes", ev.mean, ev.std_error);
        }
    }
    Ok(())
}
