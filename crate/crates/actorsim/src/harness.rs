//! The calibration/policy loop, its baselines and multi-replication campaigns.

use std::path::Path;
use std::time::Instant;

use rand::{Rng, RngCore};
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};

use actorsim_core::baselines::{gp_fit, gp_input, gp_select_action, random_action, HyperChoice};
use actorsim_core::calibration::{
    estimate_covariance, mean_log_likelihood, mle_fit, CovarianceEstimate, CovarianceOptions, EpochRecord, FitOptions,
    FitResult,
};
use actorsim_core::kinetics::params::case_study;
use actorsim_core::kinetics::stoich::REACTION_NAMES;
use actorsim_core::kinetics::{
    flux_rates, sample_transition, CultureModel, CultureReward, PerturbedInitial, RewardScale, N_REACTIONS,
};
use actorsim_core::math;
use actorsim_core::mdp::{
    evaluate_policy, rollout, ActionGrid, ActionValue, Dataset, InitialDistribution, Policy, PolicyEvaluation,
    State, TransitionSample, UniformPolicy,
};
use actorsim_core::model::{GaussianModel, MeanFunction};
use actorsim_core::policy_opt::{
    DqnAgent, EpisodeLog, GreedyPolicy, NoPenalty, PenalizedMdp, Penalty, QNetwork, TrainOptions,
};
use actorsim_core::uncertainty::{
    plug_in_trace, select_calibration_action, weight_hat, UncertaintyContext, ValueOptions,
};

use crate::config::{Arm, ExperimentConfig};
use crate::csvio::{self, AuditRow, MetricsRecord};
use crate::error::{HarnessError, Result};
use crate::params_file::{self, KineticSetup};
use crate::rng::{stream, stream_at, Component};
use crate::stoich_file;

/// The physical system and its digital twin for one configuration.
#[derive(Debug, Clone)]
pub struct Setup {
    /// Shared by twin and physical system; they differ only in `beta`.
    pub model: GaussianModel<CultureModel>,
    pub beta_true: Vec<f64>,
    /// Shifted culture reward of the MDP.
    pub reward: CultureReward,
    /// The same reward divided by its bound; used only for the values inside
    /// the uncertainty weight.
    pub value_reward: CultureReward,
    /// `u_0`, the state each physical episode of the loop restarts from.
    pub base_state: State,
    /// Initial-state distribution of the MDP.
    pub initial: PerturbedInitial,
    pub grid: ActionGrid,
}

impl Setup {
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        let kinetic = match &cfg.params_file {
            Some(p) => params_file::load(p)?,
            None => KineticSetup::default(),
        };
        let mut params = kinetic.params.clone();
        params.set_calibrated(case_study(cfg.case)?)?;
        let mut cm = CultureModel::new(params).with_timing(cfg.dt_hours, cfg.substeps)?;
        cm.growth = kinetic.growth;
        if let Some(p) = &cfg.stoichiometry_file {
            cm.stoich = stoich_file::load(p)?;
        }
        cm.set_fresh_medium(kinetic.fresh.clone())?;
        let noise = cfg.noise_rule().noise_for(&kinetic.initial);
        if !noise.is_positive() {
            return Err(HarnessError::Config("noise rule gives a zero standard deviation; initial state needs positive entries".into()));
        }
        let beta_true = cm.params().beta();
        let model = GaussianModel::new(cm, noise)?;
        let rc = cfg.reward.constants();
        if !(rc.reward_bound() > 0.0) {
            return Err(HarnessError::Config("reward constants give a non-positive reward bound".into()));
        }
        let reward = CultureReward::new(rc, &kinetic.fresh);
        Ok(Self {
            model,
            beta_true,
            value_reward: reward.with_scale(RewardScale::Normalized),
            reward,
            base_state: kinetic.initial.clone(),
            initial: PerturbedInitial::new(kinetic.initial, 0.2),
            grid: ActionGrid::uniform(cfg.action_grid_size),
        })
    }

    /// Full 73-entry parameter vector with the calibrated entries set to `beta`.
    pub fn full_params(&self, beta: &[f64]) -> Result<Vec<f64>> {
        Ok(self.model.mean_fn.params().with_beta(beta)?.values().to_vec())
    }

    pub fn new_network(&self, cfg: &ExperimentConfig, rng: &mut dyn RngCore) -> Result<QNetwork> {
        let scale = self.base_state.iter().map(|x| 1.0 / x.max(1e-3)).collect();
        Ok(QNetwork::new(self.base_state.len(), &cfg.training.hidden, self.grid.len(), rng)?.with_input_scale(scale)?)
    }
}

/// Initial guess: each entry `U(1e-6 beta*_i, m beta*_i)`, clipped to bounds.
pub fn init_beta(
    true_beta: &[f64],
    multiple: f64,
    model: &impl MeanFunction,
    rng: &mut dyn RngCore,
) -> Vec<f64> {
    let mut b: Vec<f64> = true_beta.iter().map(|&t| rng.random_range(1e-6 * t..multiple * t)).collect();
    model.bounds().clip(&mut b);
    b
}

pub fn relative_error(beta_hat: &[f64], beta_true: &[f64]) -> f64 {
    beta_hat.iter().zip(beta_true).map(|(h, t)| ((h - t) / t).powi(2)).sum::<f64>().sqrt()
}

/// Penalty `u(s, a) = sqrt(w(t, a) Tr(I(s, a) Sigma / n))` with the weight
/// taken from a per-(step, action) table.
struct UncertaintyPenalty<'a> {
    setup: &'a Setup,
    beta_hat: &'a [f64],
    cov: &'a CovarianceEstimate,
    weights: &'a [Vec<f64>],
}

impl Penalty for UncertaintyPenalty<'_> {
    fn uncertainty(&mut self, step: usize, state: &[f64], action: ActionValue) -> actorsim_core::Result<f64> {
        let w = self.weights[step.min(self.weights.len() - 1)][action.index];
        let tr = plug_in_trace(state, action, self.beta_hat, self.cov, &self.setup.model)?;
        Ok(math::sqrt(w * tr))
    }
}

/// Value weights along a twin rollout of `policy` from `u_0`, one row per
/// episode step.
pub fn weight_table(
    setup: &Setup,
    cfg: &ExperimentConfig,
    beta_hat: &[f64],
    policy: &dyn Policy,
    rng: &mut dyn RngCore,
) -> Result<Vec<Vec<f64>>> {
    let twin = setup.model.at(beta_hat);
    let path = rollout(&twin, policy, &setup.value_reward, setup.base_state.clone(), cfg.horizon, cfg.gamma, rng)?;
    let value = ValueOptions {
        rollouts: cfg.uncertainty.penalty_rollouts,
        ..cfg.value_options()
    };
    let ctx = UncertaintyContext {
        value,
        weight_samples: cfg.uncertainty.penalty_weight_samples,
        ..UncertaintyContext::new(&setup.model, policy, &setup.value_reward)
    };
    let mut table = Vec::with_capacity(cfg.horizon);
    for step in &path.steps {
        let row = setup
            .grid
            .iter()
            .map(|a| weight_hat(&step.state, a, beta_hat, &ctx, rng))
            .collect::<actorsim_core::Result<Vec<f64>>>()?;
        table.push(row);
    }
    Ok(table)
}

/// Learner options with the configured reward normalization applied.
pub fn train_options(setup: &Setup, cfg: &ExperimentConfig) -> TrainOptions {
    let mut o = cfg.train_options();
    if cfg.training.normalize_rewards {
        o.reward_scale = 1.0 / setup.reward.constants.reward_bound();
    }
    o
}

pub fn new_agent(setup: &Setup, cfg: &ExperimentConfig, rng: &mut dyn RngCore) -> Result<DqnAgent> {
    let net = setup.new_network(cfg, rng)?;
    Ok(DqnAgent::new(net, setup.grid.clone(), train_options(setup, cfg))?)
}

/// Continues training `agent` on the twin at `beta_hat` with the given penalty.
pub fn train_agent(
    setup: &Setup,
    cfg: &ExperimentConfig,
    agent: &mut DqnAgent,
    beta_hat: &[f64],
    penalty: &mut dyn Penalty,
    rng: &mut dyn RngCore,
) -> Result<Vec<EpisodeLog>> {
    let twin = setup.model.at(beta_hat);
    let mut mdp = PenalizedMdp {
        dynamics: &twin,
        reward: &setup.reward,
        initial: &setup.initial,
        penalty,
        lambda: cfg.lambda(),
    };
    Ok(agent.train(&mut mdp, cfg.training.episodes, rng)?)
}

/// Trains a fresh agent on the twin at `beta_hat` without penalty.
pub fn train_on_twin(
    setup: &Setup,
    cfg: &ExperimentConfig,
    beta_hat: &[f64],
    rng: &mut dyn RngCore,
) -> Result<(GreedyPolicy, Vec<EpisodeLog>)> {
    let mut agent = new_agent(setup, cfg, rng)?;
    let logs = train_agent(setup, cfg, &mut agent, beta_hat, &mut NoPenalty, rng)?;
    Ok((agent.greedy_policy(), logs))
}

/// Uncertainty-penalized training step of the main arm; the value weights are
/// computed along rollouts of `current`.
pub fn train_penalized(
    setup: &Setup,
    cfg: &ExperimentConfig,
    agent: &mut DqnAgent,
    beta_hat: &[f64],
    cov: &CovarianceEstimate,
    current: &dyn Policy,
    rng: &mut dyn RngCore,
) -> Result<Vec<EpisodeLog>> {
    let weights = weight_table(setup, cfg, beta_hat, current, rng)?;
    let mut penalty = UncertaintyPenalty { setup, beta_hat, cov, weights: &weights };
    train_agent(setup, cfg, agent, beta_hat, &mut penalty, rng)
}

pub fn evaluate_on_physical(
    setup: &Setup,
    cfg: &ExperimentConfig,
    policy: &dyn Policy,
    episodes: usize,
    rng: &mut dyn RngCore,
) -> Result<PolicyEvaluation> {
    let physical = setup.model.at(&setup.beta_true);
    Ok(evaluate_policy(&physical, policy, &setup.reward, &setup.initial, episodes, cfg.horizon, cfg.gamma, rng)?)
}

/// Per-flux mean absolute percentage error of the twin at `beta_hat` over
/// `probes` states visited by `policy` on the physical system. Entries with a
/// zero true flux count only when the prediction is also zero.
pub fn flux_mape(
    setup: &Setup,
    cfg: &ExperimentConfig,
    beta_hat: &[f64],
    policy: &dyn Policy,
    probes: usize,
    rng: &mut dyn RngCore,
) -> Result<Vec<f64>> {
    let physical = setup.model.at(&setup.beta_true);
    let mut states = Vec::with_capacity(probes);
    while states.len() < probes {
        let s0 = setup.initial.sample(rng);
        let tr = rollout(&physical, policy, &setup.reward, s0, cfg.horizon, cfg.gamma, rng)?;
        states.extend(tr.steps.into_iter().map(|s| s.state));
    }
    states.truncate(probes);
    let truth = setup.full_params(&setup.beta_true)?;
    let fitted = setup.full_params(beta_hat)?;
    let mut sum = [0.0; N_REACTIONS];
    let mut count = [0usize; N_REACTIONS];
    for s in &states {
        let t = flux_rates(s, &truth)?;
        let p = flux_rates(s, &fitted)?;
        for j in 0..N_REACTIONS {
            if t[j] != 0.0 {
                sum[j] += ((p[j] - t[j]) / t[j]).abs();
                count[j] += 1;
            } else if p[j] == 0.0 {
                count[j] += 1;
            }
        }
    }
    Ok((0..N_REACTIONS).map(|j| if count[j] > 0 { 100.0 * sum[j] / count[j] as f64 } else { f64::NAN }).collect())
}

/// Everything one run of one arm produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub arm: Arm,
    pub replication: usize,
    pub metrics: Vec<MetricsRecord>,
    pub audit: Vec<AuditRow>,
    pub training_log: Vec<(usize, EpisodeLog)>,
    pub fit_log: Vec<(usize, EpochRecord)>,
    /// Wall-clock seconds per iteration.
    pub wall_seconds: Vec<f64>,
    pub dataset: Dataset,
    pub beta_hat: Vec<f64>,
    pub policy: Option<QNetwork>,
    /// Per-flux MAPE (%) of the final twin.
    pub flux_mape: Vec<f64>,
    pub degraded: usize,
}

/// The part of a replication shared by every arm: the random-action initial
/// episodes and the first fit.
#[derive(Debug, Clone)]
pub struct InitialPhase {
    pub data: Dataset,
    pub beta_hat: Vec<f64>,
    pub fit_log: Vec<(usize, EpochRecord)>,
}

/// `init_episodes` episodes of random actions from the initial distribution,
/// then the best of `initial_restarts` fits.
pub fn initial_phase(setup: &Setup, cfg: &ExperimentConfig, replication: usize) -> Result<InitialPhase> {
    let rep = replication as u64;
    let mut rng_init = stream(cfg.seed, rep, Component::Init);
    let mut rng_phys = stream_at(cfg.seed, rep, Component::Physical, 0);
    let mut starts = vec![init_beta(&setup.beta_true, cfg.init_beta_multiple, &setup.model.mean_fn, &mut rng_init)];
    let mut data = Dataset::new();
    for _ in 0..cfg.init_episodes {
        data.start_episode();
        let mut s = setup.initial.sample(&mut rng_init);
        for _ in 0..cfg.horizon {
            let a = random_action(&setup.grid, &mut rng_init);
            let next = sample_transition(&setup.model, &s, a, &setup.beta_true, &mut rng_phys)?;
            data.push(TransitionSample { state: s, action: a, next_state: next.clone() })?;
            s = next;
        }
    }
    while starts.len() < cfg.fit.initial_restarts {
        starts.push(init_beta(&setup.beta_true, cfg.init_beta_multiple, &setup.model.mean_fn, &mut rng_init));
    }
    let opts = FitOptions { max_epochs: cfg.fit.initial_max_epochs, ..cfg.fit.options() };
    let mut best: Option<(f64, FitResult)> = None;
    let mut last_err = None;
    for b0 in &starts {
        match mle_fit(&data, b0, &setup.model, &opts) {
            Ok(f) => {
                let ll = mean_log_likelihood(&setup.model, data.samples(), &f.beta)?;
                if best.as_ref().is_none_or(|(b, _)| ll > *b) {
                    best = Some((ll, f));
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    let (_, fit) = match (best, last_err) {
        (Some(b), _) => b,
        (None, Some(e)) => return Err(e.into()),
        (None, None) => unreachable!("at least one start"),
    };
    Ok(InitialPhase { data, beta_hat: fit.beta, fit_log: fit.history.iter().map(|e| (0, *e)).collect() })
}

/// GP prediction-error targets of the most recent samples against `beta_hat`.
fn gp_training_set(
    setup: &Setup,
    data: &Dataset,
    beta_hat: &[f64],
    capacity: usize,
) -> actorsim_core::Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let samples = data.samples();
    let recent = &samples[samples.len().saturating_sub(capacity)..];
    let mut inputs = Vec::with_capacity(recent.len());
    let mut targets = Vec::with_capacity(recent.len());
    for s in recent {
        let mean = setup.model.mean_fn.mean(&s.state, s.action, beta_hat)?;
        let mse = mean.iter().zip(&s.next_state).map(|(m, y)| (m - y).powi(2)).sum::<f64>() / mean.len() as f64;
        inputs.push(gp_input(&s.state, s.action));
        targets.push(mse);
    }
    Ok((inputs, targets))
}

/// One run of `arm`: initial data, then `iterations` rounds of
/// select / observe / fit / (train) / (evaluate).
pub fn run_arm(setup: &Setup, cfg: &ExperimentConfig, arm: Arm, replication: usize) -> Result<RunOutput> {
    let init = initial_phase(setup, cfg, replication)?;
    run_from(setup, cfg, arm, replication, &init)
}

/// [`run_arm`] continuing from an already computed initial phase.
pub fn run_from(
    setup: &Setup,
    cfg: &ExperimentConfig,
    arm: Arm,
    replication: usize,
    init: &InitialPhase,
) -> Result<RunOutput> {
    let rep = replication as u64;
    let seed = cfg.seed;
    let mut rng_phys = stream_at(seed, rep, Component::Physical, 1);
    let mut rng_sel = stream(seed, rep, Component::Selection);
    let fit_opts = cfg.fit.options();
    let cov_opts = CovarianceOptions::default();
    let physical_dyn = &setup.model;

    let mut data = init.data.clone();
    let init_transitions = data.len();
    let mut fit_log = init.fit_log.clone();
    let mut beta_hat = init.beta_hat.clone();

    let uniform = UniformPolicy(setup.grid.clone());
    let mut cov: Option<CovarianceEstimate> = None;
    let mut rng_train = stream_at(seed, rep, Component::Training, 0);
    let mut agent = new_agent(setup, cfg, &mut rng_train)?;
    let mut training_log = Vec::new();
    if arm == Arm::ActorSimulator {
        let c = estimate_covariance(&data, &beta_hat, &setup.model, &cov_opts)?;
        let logs = train_penalized(setup, cfg, &mut agent, &beta_hat, &c, &uniform, &mut rng_train)?;
        training_log.extend(logs.into_iter().map(|l| (0, l)));
        cov = Some(c);
    } else {
        let logs = train_agent(setup, cfg, &mut agent, &beta_hat, &mut NoPenalty, &mut rng_train)?;
        training_log.extend(logs.into_iter().map(|l| (0, l)));
    }
    let mut policy = Some(agent.greedy_policy());

    let mut state = setup.base_state.clone();
    let mut step = 0usize;
    data.start_episode();
    let mut metrics = Vec::with_capacity(cfg.iterations);
    let mut audit = Vec::new();
    let mut wall = Vec::with_capacity(cfg.iterations);
    let mut degraded_total = 0usize;

    for k in 1..=cfg.iterations {
        let clock = Instant::now();
        let mut degraded = false;
        if step == cfg.horizon {
            state = setup.base_state.clone();
            step = 0;
            data.start_episode();
        }

        let action = match arm {
            Arm::Random => random_action(&setup.grid, &mut rng_sel),
            Arm::Gp => {
                let surrogate = if data.len() >= 2 {
                    gp_training_set(setup, &data, &beta_hat, cfg.gp_capacity)
                        .and_then(|(x, y)| {
                            let best = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                            gp_fit(&x, &y, &HyperChoice::default()).map(|g| (g, best))
                        })
                        .map_err(|_| degraded = true)
                        .ok()
                } else {
                    None
                };
                let best = surrogate.as_ref().map_or(0.0, |(_, b)| *b);
                gp_select_action(surrogate.as_ref().map(|(g, _)| g), &state, best, &setup.grid, &mut rng_sel)?
            }
            Arm::ActorSimulator => {
                let pol: &dyn Policy = match &policy {
                    Some(p) => p,
                    None => &uniform,
                };
                let ctx = UncertaintyContext {
                    value: cfg.value_options(),
                    weight_samples: cfg.uncertainty.weight_samples,
                    ..UncertaintyContext::new(&setup.model, pol, &setup.value_reward)
                };
                let c = cov.as_ref().expect("covariance is set before the loop");
                match select_calibration_action(&state, &beta_hat, c, &setup.grid, &ctx, &mut rng_sel) {
                    Ok(sel) => {
                        for (i, e) in sel.estimates.iter().enumerate() {
                            if let Some(e) = e {
                                audit.push(AuditRow {
                                    iteration: k,
                                    action_index: i,
                                    weight: e.weight,
                                    trace: e.trace,
                                    u: e.u,
                                    selected: i == sel.action.index,
                                });
                            }
                        }
                        sel.action
                    }
                    Err(_) => {
                        degraded = true;
                        random_action(&setup.grid, &mut rng_sel)
                    }
                }
            }
        };

        let next = sample_transition(physical_dyn, &state, action, &setup.beta_true, &mut rng_phys)
            .map_err(|e| HarnessError::RunFailed(format!("physical transition at iteration {k}: {e}")))?;
        data.push(TransitionSample { state: std::mem::replace(&mut state, next.clone()), action, next_state: next })?;
        step += 1;

        match mle_fit(&data, &beta_hat, &setup.model, &fit_opts) {
            Ok(f) => {
                fit_log.extend(f.history.iter().map(|e| (k, *e)));
                beta_hat = f.beta;
            }
            Err(_) => degraded = true,
        }

        let evaluate = k % cfg.eval_every == 0 || k == cfg.iterations;
        let train = k % cfg.training.every == 0 || evaluate;
        if arm == Arm::ActorSimulator {
            match estimate_covariance(&data, &beta_hat, &setup.model, &cov_opts) {
                Ok(c) => cov = Some(c),
                Err(_) => degraded = true,
            }
        }
        if train {
            let mut rng_k = stream_at(seed, rep, Component::Training, k as u64);
            let logs = match (arm, &cov, &policy) {
                (Arm::ActorSimulator, Some(c), Some(p)) => {
                    train_penalized(setup, cfg, &mut agent, &beta_hat, c, p, &mut rng_k)
                }
                _ => train_agent(setup, cfg, &mut agent, &beta_hat, &mut NoPenalty, &mut rng_k),
            };
            match logs {
                Ok(logs) => {
                    training_log.extend(logs.into_iter().map(|l| (k, l)));
                    policy = Some(agent.greedy_policy());
                }
                Err(_) => degraded = true,
            }
        }

        let (mut j, mut j_se) = (None, None);
        if evaluate {
            if let Some(p) = &policy {
                let episodes = if k == cfg.iterations { cfg.final_eval_episodes } else { cfg.eval_episodes };
                let mut rng_eval = stream_at(seed, rep, Component::Evaluation, k as u64);
                match evaluate_on_physical(setup, cfg, p, episodes, &mut rng_eval) {
                    Ok(ev) => {
                        j = Some(ev.mean);
                        j_se = Some(ev.std_error);
                    }
                    Err(_) => degraded = true,
                }
            }
        }

        let loss = mean_log_likelihood(&setup.model, data.samples(), &beta_hat).map(|ll| -ll).unwrap_or(f64::NAN);
        degraded_total += usize::from(degraded);
        metrics.push(MetricsRecord {
            replication,
            iteration: k,
            arm,
            relative_error: relative_error(&beta_hat, &setup.beta_true),
            j_estimate: j,
            j_std_error: j_se,
            calibration_loss: loss,
            physical_transitions: data.len(),
            degraded,
        });
        debug_assert_eq!(data.len(), init_transitions + k);
        wall.push(clock.elapsed().as_secs_f64());
    }

    if degraded_total as f64 > cfg.max_degraded_fraction * cfg.iterations as f64 {
        return Err(HarnessError::RunFailed(format!(
            "{} of {} iterations degraded ({} replication {replication})",
            degraded_total,
            cfg.iterations,
            arm.name()
        )));
    }

    let mut rng_probe = stream(seed, rep, Component::Probe);
    let final_policy: &dyn Policy = match &policy {
        Some(p) => p,
        None => &uniform,
    };
    let mape = flux_mape(setup, cfg, &beta_hat, final_policy, cfg.mape_probe_states, &mut rng_probe)?;

    Ok(RunOutput {
        arm,
        replication,
        metrics,
        audit,
        training_log,
        fit_log,
        wall_seconds: wall,
        dataset: data,
        beta_hat,
        policy: policy.map(|p| p.net),
        flux_mape: mape,
        degraded: degraded_total,
    })
}

/// Main-arm run; see [`run_arm`].
pub fn run_actor_simulator(setup: &Setup, cfg: &ExperimentConfig, replication: usize) -> Result<RunOutput> {
    run_arm(setup, cfg, Arm::ActorSimulator, replication)
}

/// Baseline run with the same budget as the main arm.
pub fn run_baseline(setup: &Setup, cfg: &ExperimentConfig, arm: Arm, replication: usize) -> Result<RunOutput> {
    if arm == Arm::ActorSimulator {
        return Err(HarnessError::Config("run_baseline takes the random or gp arm".into()));
    }
    run_arm(setup, cfg, arm, replication)
}

/// Mean and two-sided 95% t-interval; the interval collapses to the mean for
/// fewer than two values.
pub fn t_interval(values: &[f64]) -> (f64, f64, f64) {
    let n = values.len();
    let mean = math::mean(values);
    if n < 2 {
        return (mean, mean, mean);
    }
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("valid degrees of freedom").inverse_cdf(0.975);
    let half = t * math::std_error(values);
    (mean, mean - half, mean + half)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub arm: Arm,
    pub iteration: usize,
    pub metric: &'static str,
    pub n: usize,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Per-arm, per-iteration mean and 95% band of relative error and `J`.
pub fn summarize(records: &[MetricsRecord], arms: &[Arm]) -> Vec<SummaryRow> {
    let mut out = Vec::new();
    for &arm in arms {
        let its: std::collections::BTreeSet<usize> =
            records.iter().filter(|r| r.arm == arm).map(|r| r.iteration).collect();
        for it in its {
            let rows: Vec<&MetricsRecord> = records.iter().filter(|r| r.arm == arm && r.iteration == it).collect();
            let err: Vec<f64> = rows.iter().map(|r| r.relative_error).collect();
            let j: Vec<f64> = rows.iter().filter_map(|r| r.j_estimate).collect();
            for (metric, v) in [("relative_error", err), ("j_estimate", j)] {
                if v.is_empty() {
                    continue;
                }
                let (mean, lower, upper) = t_interval(&v);
                out.push(SummaryRow { arm, iteration: it, metric, n: v.len(), mean, lower, upper });
            }
        }
    }
    out
}

/// Status of one (arm, replication) job.
#[derive(Debug, Clone)]
pub struct RunStatus {
    pub arm: Arm,
    pub replication: usize,
    pub error: Option<String>,
    pub degraded: usize,
}

#[derive(Debug)]
pub struct CampaignOutput {
    pub runs: Vec<RunOutput>,
    pub status: Vec<RunStatus>,
    pub summary: Vec<SummaryRow>,
}

impl CampaignOutput {
    pub fn metrics(&self) -> Vec<MetricsRecord> {
        self.runs.iter().flat_map(|r| r.metrics.iter().cloned()).collect()
    }

    pub fn failed(&self) -> usize {
        self.status.iter().filter(|s| s.error.is_some()).count()
    }
}

/// All arms x replications. Jobs run in parallel; results are ordered by arm
/// (config order) then replication.
pub fn run_campaign(setup: &Setup, cfg: &ExperimentConfig) -> CampaignOutput {
    let jobs: Vec<(Arm, usize)> =
        cfg.arms.iter().flat_map(|&a| (0..cfg.replications).map(move |r| (a, r))).collect();
    let inits: Vec<Result<InitialPhase>> =
        (0..cfg.replications).into_par_iter().map(|r| initial_phase(setup, cfg, r)).collect();
    let results: Vec<Result<RunOutput>> = jobs
        .par_iter()
        .map(|&(a, r)| match &inits[r] {
            Ok(init) => run_from(setup, cfg, a, r, init),
            Err(e) => Err(HarnessError::RunFailed(format!("initial phase: {e}"))),
        })
        .collect();
    let mut runs = Vec::new();
    let mut status = Vec::new();
    for ((arm, replication), res) in jobs.into_iter().zip(results) {
        match res {
            Ok(run) => {
                status.push(RunStatus { arm, replication, error: None, degraded: run.degraded });
                runs.push(run);
            }
            Err(e) => status.push(RunStatus { arm, replication, error: Some(e.to_string()), degraded: 0 }),
        }
    }
    let records: Vec<MetricsRecord> = runs.iter().flat_map(|r| r.metrics.iter().cloned()).collect();
    let summary = summarize(&records, &cfg.arms);
    CampaignOutput { runs, status, summary }
}

/// Writes `metrics.csv`, `summary.csv`, `flux_mape.csv`, `status.csv` and
/// `timing.csv` into `dir`.
pub fn write_campaign(dir: &Path, cfg: &ExperimentConfig, out: &CampaignOutput) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    csvio::write_metrics(&dir.join("metrics.csv"), &out.metrics())?;
    let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
    csvio::write_rows(
        &dir.join("summary.csv"),
        &s(&["arm", "iteration", "metric", "n", "mean", "ci_lower", "ci_upper"]),
        out.summary.iter().map(|r| {
            vec![
                r.arm.name().into(),
                r.iteration.to_string(),
                r.metric.into(),
                r.n.to_string(),
                csvio::num(r.mean),
                csvio::num(r.lower),
                csvio::num(r.upper),
            ]
        }),
    )?;
    let mut mape_rows = Vec::new();
    for &arm in &cfg.arms {
        let runs: Vec<&RunOutput> = out.runs.iter().filter(|r| r.arm == arm).collect();
        if runs.is_empty() {
            continue;
        }
        for (j, name) in REACTION_NAMES.iter().enumerate() {
            let v: Vec<f64> = runs.iter().map(|r| r.flux_mape[j]).filter(|x| x.is_finite()).collect();
            let mean = if v.is_empty() { f64::NAN } else { math::mean(&v) };
            mape_rows.push(vec![arm.name().into(), name.to_string(), csvio::num(mean), v.len().to_string()]);
        }
    }
    csvio::write_rows(&dir.join("flux_mape.csv"), &s(&["arm", "flux", "mape_percent", "replications"]), mape_rows)?;
    csvio::write_rows(
        &dir.join("status.csv"),
        &s(&["arm", "replication", "status", "degraded_iterations", "message"]),
        out.status.iter().map(|st| {
            vec![
                st.arm.name().into(),
                st.replication.to_string(),
                if st.error.is_some() { "failed" } else { "ok" }.into(),
                st.degraded.to_string(),
                st.error.clone().unwrap_or_default(),
            ]
        }),
    )?;
    csvio::write_rows(
        &dir.join("timing.csv"),
        &s(&["arm", "replication", "iteration", "wall_seconds"]),
        out.runs.iter().flat_map(|r| {
            r.wall_seconds.iter().enumerate().map(move |(i, w)| {
                vec![r.arm.name().into(), r.replication.to_string(), (i + 1).to_string(), csvio::num(*w)]
            })
        }),
    )?;
    Ok(())
}

/// Writes the per-run files of a single run into `dir`.
pub fn write_run(dir: &Path, run: &RunOutput) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    csvio::write_metrics(&dir.join("metrics.csv"), &run.metrics)?;
    csvio::write_audit(&dir.join("uncertainty_audit.csv"), &run.audit)?;
    csvio::write_training_log(&dir.join("training_log.csv"), &run.training_log)?;
    csvio::write_fit_diagnostics(&dir.join("fit_diagnostics.csv"), &run.fit_log)?;
    csvio::write_dataset(&dir.join("dataset.csv"), &run.dataset)?;
    if let Some(net) = &run.policy {
        std::fs::write(dir.join("policy.bin"), net.to_bytes())?;
    }
    Ok(())
}
