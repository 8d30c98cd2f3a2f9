//! Policy optimization on the uncertainty-penalized digital twin: a small
//! Q-network trained from a replay buffer with epsilon-greedy exploration.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, RngCore};

use crate::error::{invalid, Error, Result};
use crate::math;
use crate::mdp::{uniform_grid_action, ActionGrid, ActionValue, Dynamics, InitialDistribution, Policy, RewardFn, State};

/// `r - lambda * u`.
pub fn penalized_reward(reward: f64, u: f64, lambda: f64) -> Result<f64> {
    if !(u >= 0.0) || !(lambda >= 0.0) {
        return Err(invalid("penalty needs u >= 0 and lambda >= 0"));
    }
    Ok(reward - lambda * u)
}

/// Linear epsilon decay with a floor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub decay: f64,
    pub floor: f64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self { start: 0.6, decay: 5e-4, floor: 0.01 }
    }
}

impl EpsilonSchedule {
    pub fn value(&self, step: u64) -> f64 {
        (self.start - step as f64 * self.decay).max(self.floor)
    }
}

/// Explores with probability `epsilon` (uniform over the grid), otherwise
/// takes the greedy action with lowest-index tie-break.
pub fn epsilon_greedy_action(q_values: &[f64], epsilon: f64, grid: &ActionGrid, rng: &mut dyn RngCore) -> Result<ActionValue> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(invalid("epsilon must lie in [0, 1]"));
    }
    if q_values.is_empty() || q_values.len() != grid.len() {
        return Err(invalid("need one Q-value per grid action"));
    }
    let explore = epsilon > 0.0 && rng.random::<f64>() < epsilon;
    if explore {
        return Ok(uniform_grid_action(grid, rng));
    }
    let best = math::argmax(q_values).ok_or(Error::DivergedModel)?;
    Ok(grid.get(best))
}

#[derive(Debug, Clone, PartialEq)]
struct Dense {
    inputs: usize,
    outputs: usize,
    /// Row-major `outputs x inputs`.
    w: Vec<f64>,
    b: Vec<f64>,
}

impl Dense {
    fn new(inputs: usize, outputs: usize, rng: &mut dyn RngCore) -> Self {
        let bound = 1.0 / math::sqrt(inputs as f64);
        let mut draw = || (2.0 * rng.random::<f64>() - 1.0) * bound;
        let w = (0..inputs * outputs).map(|_| draw()).collect();
        let b = (0..outputs).map(|_| draw()).collect();
        Self { inputs, outputs, w, b }
    }

    fn forward(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.outputs {
            let row = &self.w[o * self.inputs..(o + 1) * self.inputs];
            out.push(self.b[o] + row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>());
        }
    }

    fn n_params(&self) -> usize {
        self.w.len() + self.b.len()
    }
}

/// Feed-forward Q-network: ReLU hidden layers, one linear output per action.
/// Inputs are divided entrywise by a fixed scale before the first layer.
#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork {
    layers: Vec<Dense>,
    input_scale: Vec<f64>,
    adam_m: Vec<f64>,
    adam_v: Vec<f64>,
    adam_t: u64,
}

/// `(state, action index, target)` triples for a regression step.
pub type QTarget<'a> = (&'a [f64], usize, f64);

impl QNetwork {
    pub fn new(input_dim: usize, hidden: &[usize], n_actions: usize, rng: &mut dyn RngCore) -> Result<Self> {
        if input_dim == 0 || n_actions == 0 || hidden.contains(&0) {
            return Err(invalid("network dimensions must be positive"));
        }
        let mut dims = vec![input_dim];
        dims.extend_from_slice(hidden);
        dims.push(n_actions);
        let layers: Vec<Dense> = dims.windows(2).map(|w| Dense::new(w[0], w[1], rng)).collect();
        let n: usize = layers.iter().map(Dense::n_params).sum();
        Ok(Self { layers, input_scale: vec![1.0; input_dim], adam_m: vec![0.0; n], adam_v: vec![0.0; n], adam_t: 0 })
    }

    fn zeros(shape: &[usize]) -> Self {
        let layers: Vec<Dense> = shape
            .windows(2)
            .map(|w| Dense { inputs: w[0], outputs: w[1], w: vec![0.0; w[0] * w[1]], b: vec![0.0; w[1]] })
            .collect();
        let n: usize = layers.iter().map(Dense::n_params).sum();
        Self { layers, input_scale: vec![1.0; shape[0]], adam_m: vec![0.0; n], adam_v: vec![0.0; n], adam_t: 0 }
    }

    /// Two hidden layers of 64 units.
    pub fn standard(input_dim: usize, n_actions: usize, rng: &mut dyn RngCore) -> Result<Self> {
        Self::new(input_dim, &[64, 64], n_actions, rng)
    }

    pub fn with_input_scale(mut self, scale: Vec<f64>) -> Result<Self> {
        if scale.len() != self.input_dim() || scale.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(invalid("input scale must be positive, one entry per input"));
        }
        self.input_scale = scale;
        Ok(self)
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn n_actions(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    /// Layer sizes from input to output.
    pub fn shape(&self) -> Vec<usize> {
        let mut s = vec![self.input_dim()];
        s.extend(self.layers.iter().map(|l| l.outputs));
        s
    }

    pub fn input_scale(&self) -> &[f64] {
        &self.input_scale
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(Dense::n_params).sum()
    }

    /// Weights then biases, layer by layer.
    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            p.extend_from_slice(&l.w);
            p.extend_from_slice(&l.b);
        }
        p
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.n_params() {
            return Err(invalid("parameter vector has the wrong length"));
        }
        let mut k = 0;
        for l in &mut self.layers {
            let nw = l.w.len();
            l.w.copy_from_slice(&params[k..k + nw]);
            k += nw;
            let nb = l.b.len();
            l.b.copy_from_slice(&params[k..k + nb]);
            k += nb;
        }
        Ok(())
    }

    /// Activations of every layer; the last entry is the Q-vector.
    fn forward_all(&self, state: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(state.iter().zip(&self.input_scale).map(|(x, s)| x / s).collect::<Vec<f64>>());
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            let mut out = Vec::with_capacity(l.outputs);
            l.forward(&acts[i], &mut out);
            if i < last {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(out);
        }
        acts
    }

    pub fn q_values(&self, state: &[f64]) -> Vec<f64> {
        self.forward_all(state).pop().unwrap_or_default()
    }

    /// Mean squared error `mean (Q(s, a) - y)^2` and its gradient.
    pub fn loss_and_grad(&self, batch: &[QTarget<'_>]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.n_params()];
        let mut loss = 0.0;
        let n = batch.len().max(1) as f64;
        let offsets: Vec<usize> = self
            .layers
            .iter()
            .scan(0, |acc, l| {
                let o = *acc;
                *acc += l.n_params();
                Some(o)
            })
            .collect();
        for &(state, a, y) in batch {
            let acts = self.forward_all(state);
            let q = acts.last().unwrap();
            let err = q[a] - y;
            loss += err * err;
            let mut delta = vec![0.0; q.len()];
            delta[a] = 2.0 * err / n;
            for li in (0..self.layers.len()).rev() {
                let l = &self.layers[li];
                let input = &acts[li];
                let off = offsets[li];
                for o in 0..l.outputs {
                    let d = delta[o];
                    if d == 0.0 {
                        continue;
                    }
                    let row = &mut grad[off + o * l.inputs..off + (o + 1) * l.inputs];
                    for (g, x) in row.iter_mut().zip(input) {
                        *g += d * x;
                    }
                    grad[off + l.w.len() + o] += d;
                }
                if li > 0 {
                    let mut prev = vec![0.0; l.inputs];
                    for o in 0..l.outputs {
                        let d = delta[o];
                        if d == 0.0 {
                            continue;
                        }
                        for (p, w) in prev.iter_mut().zip(&l.w[o * l.inputs..(o + 1) * l.inputs]) {
                            *p += d * w;
                        }
                    }
                    for (p, a) in prev.iter_mut().zip(input) {
                        if *a <= 0.0 {
                            *p = 0.0;
                        }
                    }
                    delta = prev;
                }
            }
        }
        (loss / n, grad)
    }

    /// One Adam step on `grad + l2 * params`.
    pub fn adam_step(&mut self, grad: &[f64], lr: f64, l2: f64) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        let mut params = self.params();
        self.adam_t += 1;
        let t = self.adam_t.min(i32::MAX as u64) as i32;
        let c1 = 1.0 - math::powi(B1, t);
        let c2 = 1.0 - math::powi(B2, t);
        for i in 0..params.len() {
            let g = grad[i] + l2 * params[i];
            self.adam_m[i] = B1 * self.adam_m[i] + (1.0 - B1) * g;
            self.adam_v[i] = B2 * self.adam_v[i] + (1.0 - B2) * g * g;
            params[i] -= lr * (self.adam_m[i] / c1) / (math::sqrt(self.adam_v[i] / c2) + EPS);
        }
        self.set_params(&params).expect("same length");
    }

    /// Binary checkpoint: magic, version, layer shape, input scale and
    /// parameters, all little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let shape = self.shape();
        let mut out = Vec::with_capacity(16 + 8 * (shape.len() + self.input_dim() + self.n_params()));
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
        for s in &shape {
            out.extend_from_slice(&(*s as u64).to_le_bytes());
        }
        for x in self.input_scale.iter().chain(self.params().iter()) {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(invalid("not a Q-network checkpoint"));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(invalid("unsupported checkpoint version"));
        }
        let n = r.u32()? as usize;
        if !(2..=64).contains(&n) {
            return Err(invalid("implausible layer count"));
        }
        let mut shape = Vec::with_capacity(n);
        for _ in 0..n {
            let s = r.u64()? as usize;
            if s == 0 || s > 1 << 20 {
                return Err(invalid("implausible layer width"));
            }
            shape.push(s);
        }
        let mut net = QNetwork::zeros(&shape);
        let scale = (0..shape[0]).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let params = (0..net.n_params()).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        if r.pos != bytes.len() {
            return Err(invalid("trailing bytes in checkpoint"));
        }
        net = net.with_input_scale(scale)?;
        net.set_params(&params)?;
        Ok(net)
    }
}

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"AQNT";
pub const CHECKPOINT_VERSION: u32 = 1;

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| invalid("truncated checkpoint"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        let x = f64::from_le_bytes(self.take(8)?.try_into().unwrap());
        if !x.is_finite() {
            return Err(invalid("non-finite value in checkpoint"));
        }
        Ok(x)
    }
}

/// One stored transition.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: State,
    pub action: usize,
    pub reward: f64,
    pub next_state: State,
    pub terminal: bool,
}

/// Fixed-capacity ring buffer; the oldest entry is overwritten first.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    next: usize,
    inserted: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(invalid("replay capacity must be positive"));
        }
        Ok(Self { capacity, items: Vec::new(), next: 0, inserted: 0 })
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
        self.inserted += 1;
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.items[i]
    }

    /// `batch` distinct transitions chosen uniformly.
    pub fn sample(&self, batch: usize, rng: &mut dyn RngCore) -> Result<Vec<&Transition>> {
        if batch > self.items.len() {
            return Err(invalid("buffer holds fewer transitions than the batch size"));
        }
        let mut r = rng;
        Ok(rand::seq::index::sample(&mut r, self.items.len(), batch).into_iter().map(|i| &self.items[i]).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DqnOptions {
    pub batch: usize,
    pub gamma: f64,
    pub learning_rate: f64,
    pub l2: f64,
}

impl Default for DqnOptions {
    fn default() -> Self {
        Self { batch: 64, gamma: 0.99, learning_rate: 1e-3, l2: 1e-10 }
    }
}

/// One gradient step on a sampled mini-batch toward `r + gamma max Q(s', .)`.
pub fn dqn_train_step(net: &mut QNetwork, buffer: &ReplayBuffer, opts: &DqnOptions, rng: &mut dyn RngCore) -> Result<f64> {
    let batch = buffer.sample(opts.batch, rng)?;
    let targets: Vec<f64> = batch
        .iter()
        .map(|t| {
            if t.terminal {
                t.reward
            } else {
                let q = net.q_values(&t.next_state);
                t.reward + opts.gamma * q.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            }
        })
        .collect();
    let triples: Vec<QTarget<'_>> = batch.iter().zip(&targets).map(|(t, &y)| (t.state.as_slice(), t.action, y)).collect();
    let (loss, grad) = net.loss_and_grad(&triples);
    if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::TrainingDiverged { loss, step: net.adam_t as usize });
    }
    net.adam_step(&grad, opts.learning_rate, opts.l2);
    Ok(loss)
}

/// Source of the uncertainty `u(s, a)` used in the penalized reward.
pub trait Penalty {
    /// `step` is the position within the episode.
    fn uncertainty(&mut self, step: usize, state: &[f64], action: ActionValue) -> Result<f64>;
}

/// No penalty.
pub struct NoPenalty;

impl Penalty for NoPenalty {
    fn uncertainty(&mut self, _: usize, _: &[f64], _: ActionValue) -> Result<f64> {
        Ok(0.0)
    }
}

impl<F: FnMut(usize, &[f64], ActionValue) -> Result<f64>> Penalty for F {
    fn uncertainty(&mut self, step: usize, state: &[f64], action: ActionValue) -> Result<f64> {
        self(step, state, action)
    }
}

/// The digital twin with reward `r - lambda u`.
pub struct PenalizedMdp<'a> {
    pub dynamics: &'a dyn Dynamics,
    pub reward: &'a dyn RewardFn,
    pub initial: &'a dyn InitialDistribution,
    pub penalty: &'a mut dyn Penalty,
    pub lambda: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOptions {
    pub episodes: usize,
    pub horizon: usize,
    /// Gradient steps after each environment step once the buffer is warm.
    pub updates_per_step: usize,
    pub max_updates_per_episode: usize,
    pub dqn: DqnOptions,
    pub schedule: EpsilonSchedule,
    pub buffer_capacity: usize,
    /// Penalized rewards are multiplied by this before entering the buffer;
    /// the greedy policy is unchanged, the Q-values are better conditioned.
    pub reward_scale: f64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            episodes: 200,
            horizon: 12,
            updates_per_step: 1,
            max_updates_per_episode: 50,
            dqn: DqnOptions::default(),
            schedule: EpsilonSchedule::default(),
            buffer_capacity: 100_000,
            reward_scale: 1.0,
        }
    }
}

/// Per-episode training log entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeLog {
    pub episode: usize,
    /// NaN when no gradient step happened.
    pub mean_loss: f64,
    pub epsilon: f64,
    pub penalized_return: f64,
}

/// Network, replay buffer and exploration counter; persists across calls so
/// training warm-starts.
#[derive(Debug, Clone)]
pub struct DqnAgent {
    pub net: QNetwork,
    pub buffer: ReplayBuffer,
    pub grid: ActionGrid,
    pub opts: TrainOptions,
    pub env_steps: u64,
}

impl DqnAgent {
    pub fn new(net: QNetwork, grid: ActionGrid, opts: TrainOptions) -> Result<Self> {
        if net.n_actions() != grid.len() {
            return Err(invalid("network outputs must match the action grid"));
        }
        if !(opts.reward_scale > 0.0 && opts.reward_scale.is_finite()) {
            return Err(invalid("reward scale must be positive"));
        }
        Ok(Self { net, buffer: ReplayBuffer::new(opts.buffer_capacity)?, grid, opts, env_steps: 0 })
    }

    pub fn epsilon(&self) -> f64 {
        self.opts.schedule.value(self.env_steps)
    }

    pub fn greedy_policy(&self) -> GreedyPolicy {
        GreedyPolicy { net: self.net.clone(), grid: self.grid.clone() }
    }

    /// Simulates `episodes` episodes of the penalized MDP, interleaving buffer
    /// insertion with gradient steps.
    pub fn train(&mut self, mdp: &mut PenalizedMdp<'_>, episodes: usize, rng: &mut dyn RngCore) -> Result<Vec<EpisodeLog>> {
        if episodes == 0 {
            return Err(invalid("episodes must be at least 1"));
        }
        let o = self.opts;
        let mut log = Vec::with_capacity(episodes);
        for episode in 0..episodes {
            let mut state = mdp.initial.sample(rng);
            let mut ret = 0.0;
            let mut disc = 1.0;
            let mut losses = 0.0;
            let mut updates = 0usize;
            let eps_start = self.epsilon();
            for t in 0..o.horizon {
                let q = self.net.q_values(&state);
                let action = epsilon_greedy_action(&q, self.epsilon(), &self.grid, rng)?;
                self.env_steps += 1;
                let next = match mdp.dynamics.step(&state, action, rng) {
                    Ok(n) => n,
                    Err(Error::DivergedSimulation { .. }) | Err(Error::DivergedModel) => break,
                    Err(e) => return Err(e),
                };
                let r = mdp.reward.reward(&state, action, &next);
                let u = mdp.penalty.uncertainty(t, &state, action)?;
                let rt = penalized_reward(r, u, mdp.lambda)?;
                ret += disc * rt;
                disc *= o.dqn.gamma;
                self.buffer.push(Transition {
                    state: core::mem::take(&mut state),
                    action: action.index,
                    reward: rt * o.reward_scale,
                    next_state: next.clone(),
                    terminal: t + 1 == o.horizon,
                });
                state = next;
                if self.buffer.len() >= o.dqn.batch {
                    for _ in 0..o.updates_per_step {
                        if updates >= o.max_updates_per_episode {
                            break;
                        }
                        losses += dqn_train_step(&mut self.net, &self.buffer, &o.dqn, rng)?;
                        updates += 1;
                    }
                }
            }
            log.push(EpisodeLog {
                episode,
                mean_loss: if updates > 0 { losses / updates as f64 } else { f64::NAN },
                epsilon: eps_start,
                penalized_return: ret,
            });
        }
        Ok(log)
    }
}

/// Trains `agent` on the penalized MDP and returns its greedy policy.
pub fn train_policy(
    mdp: &mut PenalizedMdp<'_>,
    agent: &mut DqnAgent,
    episodes: usize,
    rng: &mut dyn RngCore,
) -> Result<(GreedyPolicy, Vec<EpisodeLog>)> {
    let log = agent.train(mdp, episodes, rng)?;
    Ok((agent.greedy_policy(), log))
}

/// Greedy action of a fixed Q-network.
#[derive(Debug, Clone, PartialEq)]
pub struct GreedyPolicy {
    pub net: QNetwork,
    pub grid: ActionGrid,
}

impl GreedyPolicy {
    pub fn action(&self, state: &[f64]) -> ActionValue {
        let q = self.net.q_values(state);
        self.grid.get(math::argmax(&q).unwrap_or(0))
    }
}

impl Policy for GreedyPolicy {
    fn act(&self, state: &[f64], _rng: &mut dyn RngCore) -> ActionValue {
        self.action(state)
    }
}
