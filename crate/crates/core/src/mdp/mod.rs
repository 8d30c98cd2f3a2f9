//! MDP building blocks shared by the physical emulator, the digital twin and
//! the testbeds: actions, datasets, policies, rollouts and discounted returns.

pub mod tabular;

use alloc::vec::Vec;
use core::ops::Range;

use rand::{Rng, RngCore};

use crate::error::{invalid, Error, Result};
use crate::math;

/// A system state: cell density followed by metabolite concentrations for the
/// kinetic model, or any finite real vector for testbeds.
pub type State = Vec<f64>;

/// One point of the discrete action grid. `b` is the medium-exchange ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionValue {
    pub index: usize,
    pub b: f64,
}

/// Ordered set of admissible actions, each a ratio in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionGrid {
    values: Vec<f64>,
}

impl ActionGrid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(invalid("action grid must not be empty"));
        }
        if values.iter().any(|b| !(0.0..=1.0).contains(b)) {
            return Err(invalid("action ratios must lie in [0, 1]"));
        }
        Ok(Self { values })
    }

    /// `n` equally spaced ratios from 0 to 1 inclusive (`n = 11` gives steps of 0.1).
    pub fn uniform(n: usize) -> Self {
        assert!(n >= 1, "grid needs at least one action");
        if n == 1 {
            return Self { values: alloc::vec![0.0] };
        }
        let values = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        Self { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, index: usize) -> ActionValue {
        ActionValue { index, b: self.values[index] }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = ActionValue> + '_ {
        (0..self.len()).map(move |i| self.get(i))
    }

    /// Grid action closest to `b` (lowest index on ties).
    pub fn nearest(&self, b: f64) -> ActionValue {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, &v) in self.values.iter().enumerate() {
            let d = (v - b).abs();
            if d < best_d {
                best = i;
                best_d = d;
            }
        }
        self.get(best)
    }

    pub fn contains(&self, a: ActionValue) -> bool {
        a.index < self.len() && self.values[a.index] == a.b
    }
}

/// One observed transition `(s, a, s')`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionSample {
    pub state: State,
    pub action: ActionValue,
    pub next_state: State,
}

/// Append-only collection of transitions grouped into episodes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    samples: Vec<TransitionSample>,
    episode_starts: Vec<usize>,
}

impl Dataset {
    pub fn new() -> Self {
        Self::default()
    }

    /// Marks the next pushed sample as the first of a new episode.
    pub fn start_episode(&mut self) {
        let at = self.samples.len();
        if self.episode_starts.last() != Some(&at) {
            self.episode_starts.push(at);
        }
    }

    pub fn push(&mut self, sample: TransitionSample) -> Result<()> {
        if sample.state.len() != sample.next_state.len() {
            return Err(invalid("state and next_state dimensions differ"));
        }
        if self.episode_starts.is_empty() {
            self.episode_starts.push(0);
        }
        self.samples.push(sample);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[TransitionSample] {
        &self.samples
    }

    pub fn episode_starts(&self) -> &[usize] {
        &self.episode_starts
    }

    /// Index ranges of the episodes, in order.
    pub fn episodes(&self) -> Vec<Range<usize>> {
        let mut out = Vec::with_capacity(self.episode_starts.len());
        for (k, &start) in self.episode_starts.iter().enumerate() {
            let end = self.episode_starts.get(k + 1).copied().unwrap_or(self.samples.len());
            if end > start {
                out.push(start..end);
            }
        }
        out
    }
}

/// A (possibly stochastic) decision rule over a discrete action grid.
pub trait Policy {
    fn act(&self, state: &[f64], rng: &mut dyn RngCore) -> ActionValue;
}

impl<P: Policy + ?Sized> Policy for &P {
    fn act(&self, state: &[f64], rng: &mut dyn RngCore) -> ActionValue {
        (**self).act(state, rng)
    }
}

/// Always plays the same grid action.
#[derive(Debug, Clone, Copy)]
pub struct ConstantPolicy(pub ActionValue);

impl Policy for ConstantPolicy {
    fn act(&self, _state: &[f64], _rng: &mut dyn RngCore) -> ActionValue {
        self.0
    }
}

/// Uniformly random grid action, drawn as a continuous ratio and snapped to
/// the nearest grid point.
#[derive(Debug, Clone)]
pub struct UniformPolicy(pub ActionGrid);

impl Policy for UniformPolicy {
    fn act(&self, _state: &[f64], rng: &mut dyn RngCore) -> ActionValue {
        uniform_grid_action(&self.0, rng)
    }
}

/// Draws an action uniformly over the grid.
///
/// For a uniformly spaced grid this is the nearest-grid-point image of
/// `b ~ U(0, 1)` with the end cells widened to the same width as interior
/// cells, so every action has probability `1 / len`.
pub fn uniform_grid_action(grid: &ActionGrid, rng: &mut dyn RngCore) -> ActionValue {
    let u: f64 = rng.random();
    let idx = ((u * grid.len() as f64) as usize).min(grid.len() - 1);
    grid.get(idx)
}

pub trait RewardFn {
    fn reward(&self, state: &[f64], action: ActionValue, next_state: &[f64]) -> f64;
}

impl<F> RewardFn for F
where
    F: Fn(&[f64], ActionValue, &[f64]) -> f64,
{
    fn reward(&self, state: &[f64], action: ActionValue, next_state: &[f64]) -> f64 {
        self(state, action, next_state)
    }
}

/// A stochastic transition kernel that can be sampled.
pub trait Dynamics {
    fn state_dim(&self) -> usize;
    fn step(&self, state: &[f64], action: ActionValue, rng: &mut dyn RngCore) -> Result<State>;
}

impl<D: Dynamics + ?Sized> Dynamics for &D {
    fn state_dim(&self) -> usize {
        (**self).state_dim()
    }
    fn step(&self, state: &[f64], action: ActionValue, rng: &mut dyn RngCore) -> Result<State> {
        (**self).step(state, action, rng)
    }
}

/// Sampler for the initial state of an episode.
pub trait InitialDistribution {
    fn sample(&self, rng: &mut dyn RngCore) -> State;
}

/// Deterministic initial state.
#[derive(Debug, Clone)]
pub struct FixedInitial(pub State);

impl InitialDistribution for FixedInitial {
    fn sample(&self, _rng: &mut dyn RngCore) -> State {
        self.0.clone()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub state: State,
    pub action: ActionValue,
    pub reward: f64,
    pub next_state: State,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub initial: State,
    pub steps: Vec<Step>,
    pub discounted_return: f64,
}

impl Trajectory {
    pub fn rewards(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.reward).collect()
    }

    pub fn states(&self) -> impl Iterator<Item = &State> {
        core::iter::once(&self.initial).chain(self.steps.iter().map(|s| &s.next_state))
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(invalid("discount factor must lie in [0, 1)"));
    }
    Ok(())
}

/// `sum_t gamma^t r_t` over a finite reward sequence.
pub fn discounted_return(rewards: &[f64], gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    let mut acc = 0.0;
    let mut disc = 1.0;
    for &r in rewards {
        if !r.is_finite() {
            return Err(invalid("rewards must be finite"));
        }
        acc += disc * r;
        disc *= gamma;
    }
    Ok(acc)
}

pub fn rollout<D, P, R>(
    model: &D,
    policy: &P,
    reward: &R,
    initial: State,
    horizon: usize,
    gamma: f64,
    rng: &mut dyn RngCore,
) -> Result<Trajectory>
where
    D: Dynamics + ?Sized,
    P: Policy + ?Sized,
    R: RewardFn + ?Sized,
{
    if horizon == 0 {
        return Err(invalid("horizon must be at least 1"));
    }
    check_gamma(gamma)?;
    let mut steps = Vec::with_capacity(horizon);
    let mut state = initial.clone();
    for t in 0..horizon {
        let action = policy.act(&state, rng);
        let next = model.step(&state, action, rng)?;
        if let Some(index) = next.iter().position(|x| !x.is_finite()) {
            return Err(Error::DivergedSimulation { step: t, index });
        }
        let r = reward.reward(&state, action, &next);
        if !r.is_finite() {
            return Err(Error::DivergedSimulation { step: t, index: usize::MAX });
        }
        steps.push(Step { state: core::mem::take(&mut state), action, reward: r, next_state: next.clone() });
        state = next;
    }
    let rewards: Vec<f64> = steps.iter().map(|s| s.reward).collect();
    let discounted_return = discounted_return(&rewards, gamma)?;
    Ok(Trajectory { initial, steps, discounted_return })
}

/// Monte Carlo policy value with its standard error.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyEvaluation {
    pub mean: f64,
    pub std_error: f64,
    pub returns: Vec<f64>,
}

#[allow(clippy::too_many_arguments)]
pub fn evaluate_policy<D, P, R, I>(
    model: &D,
    policy: &P,
    reward: &R,
    initial: &I,
    episodes: usize,
    horizon: usize,
    gamma: f64,
    rng: &mut dyn RngCore,
) -> Result<PolicyEvaluation>
where
    D: Dynamics + ?Sized,
    P: Policy + ?Sized,
    R: RewardFn + ?Sized,
    I: InitialDistribution + ?Sized,
{
    if episodes == 0 {
        return Err(invalid("episodes must be at least 1"));
    }
    let mut returns = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let s0 = initial.sample(rng);
        let traj = rollout(model, policy, reward, s0, horizon, gamma, rng)?;
        returns.push(traj.discounted_return);
    }
    Ok(PolicyEvaluation { mean: math::mean(&returns), std_error: math::std_error(&returns), returns })
}
