//! Finite MDPs with exact dynamic-programming evaluation.
//!
//! A tabular state is encoded as a one-entry [`State`] holding its index so the
//! generic rollout machinery can drive these models too.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};

use super::{ActionGrid, ActionValue, Dynamics, InitialDistribution, Policy, RewardFn, State};
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    /// `P[s][a][s']`, row-major.
    transition: Vec<f64>,
    /// `r[s][a]`.
    reward: Vec<f64>,
    initial: Vec<f64>,
}

/// Stochastic policy as a row-stochastic `n_states x n_actions` table.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularPolicy {
    n_actions: usize,
    probs: Vec<f64>,
}

fn is_distribution(p: &[f64]) -> bool {
    p.iter().all(|&x| x >= 0.0 && x.is_finite()) && (p.iter().sum::<f64>() - 1.0).abs() < 1e-9
}

impl TabularMdp {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition: Vec<f64>,
        reward: Vec<f64>,
        initial: Vec<f64>,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(invalid("tabular MDP needs at least one state and one action"));
        }
        if transition.len() != n_states * n_actions * n_states
            || reward.len() != n_states * n_actions
            || initial.len() != n_states
        {
            return Err(invalid("tabular MDP table sizes do not match"));
        }
        if transition.chunks(n_states).any(|row| !is_distribution(row)) || !is_distribution(&initial) {
            return Err(invalid("transition rows and initial distribution must be probability vectors"));
        }
        Ok(Self { n_states, n_actions, transition, reward, initial })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn next_distribution(&self, s: usize, a: usize) -> &[f64] {
        let o = (s * self.n_actions + a) * self.n_states;
        &self.transition[o..o + self.n_states]
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.n_actions + a]
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    /// Same dynamics with a different reward table.
    pub fn with_reward(&self, reward: Vec<f64>) -> Result<Self> {
        Self::new(self.n_states, self.n_actions, self.transition.clone(), reward, self.initial.clone())
    }

    /// Same rewards with a different transition table.
    pub fn with_transition(&self, transition: Vec<f64>) -> Result<Self> {
        Self::new(self.n_states, self.n_actions, transition, self.reward.clone(), self.initial.clone())
    }

    /// Exact `V^pi` from `(I - gamma P_pi) V = r_pi`.
    pub fn policy_values(&self, policy: &TabularPolicy, gamma: f64) -> Result<Vec<f64>> {
        if !(0.0..1.0).contains(&gamma) {
            return Err(invalid("discount factor must lie in [0, 1)"));
        }
        let n = self.n_states;
        let mut m = DMatrix::<f64>::identity(n, n);
        let mut r = DVector::<f64>::zeros(n);
        for s in 0..n {
            for a in 0..self.n_actions {
                let pa = policy.prob(s, a);
                if pa == 0.0 {
                    continue;
                }
                r[s] += pa * self.reward(s, a);
                for (s2, &p) in self.next_distribution(s, a).iter().enumerate() {
                    m[(s, s2)] -= gamma * pa * p;
                }
            }
        }
        let v = m.lu().solve(&r).ok_or(Error::IllConditioned { condition: f64::INFINITY })?;
        Ok(v.iter().copied().collect())
    }

    /// `J(pi) = sum_s mu0(s) V^pi(s)`.
    pub fn objective(&self, policy: &TabularPolicy, gamma: f64) -> Result<f64> {
        let v = self.policy_values(policy, gamma)?;
        Ok(v.iter().zip(&self.initial).map(|(v, p)| v * p).sum())
    }

    /// `Q(s, a) = r(s, a) + gamma * sum_s' P(s'|s,a) V(s')`.
    pub fn q_values(&self, values: &[f64], gamma: f64) -> Vec<f64> {
        let mut q = vec![0.0; self.n_states * self.n_actions];
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let ev: f64 = self.next_distribution(s, a).iter().zip(values).map(|(p, v)| p * v).sum();
                q[s * self.n_actions + a] = self.reward(s, a) + gamma * ev;
            }
        }
        q
    }

    /// Optimal values and a greedy deterministic policy.
    pub fn value_iteration(&self, gamma: f64, tol: f64, max_iter: usize) -> (Vec<f64>, TabularPolicy) {
        let mut v = vec![0.0; self.n_states];
        for _ in 0..max_iter {
            let q = self.q_values(&v, gamma);
            let next: Vec<f64> = q
                .chunks(self.n_actions)
                .map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
                .collect();
            let delta = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            v = next;
            if delta < tol {
                break;
            }
        }
        let q = self.q_values(&v, gamma);
        let greedy: Vec<usize> =
            q.chunks(self.n_actions).map(|row| crate::math::argmax(row).unwrap_or(0)).collect();
        (v, TabularPolicy::deterministic(self.n_actions, &greedy))
    }
}

impl TabularPolicy {
    pub fn new(n_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if n_actions == 0 || !probs.len().is_multiple_of(n_actions) || probs.chunks(n_actions).any(|r| !is_distribution(r)) {
            return Err(invalid("policy rows must be probability vectors"));
        }
        Ok(Self { n_actions, probs })
    }

    pub fn deterministic(n_actions: usize, choice: &[usize]) -> Self {
        let mut probs = vec![0.0; choice.len() * n_actions];
        for (s, &a) in choice.iter().enumerate() {
            probs[s * n_actions + a] = 1.0;
        }
        Self { n_actions, probs }
    }

    /// Rows drawn from a flat Dirichlet (normalized exponentials).
    pub fn random(n_states: usize, n_actions: usize, rng: &mut dyn RngCore) -> Self {
        let mut probs = Vec::with_capacity(n_states * n_actions);
        for _ in 0..n_states {
            let row: Vec<f64> = (0..n_actions).map(|_| -crate::math::ln(1.0 - rng.random::<f64>())).collect();
            let total: f64 = row.iter().sum();
            probs.extend(row.iter().map(|x| x / total));
        }
        Self { n_actions, probs }
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.n_actions + a]
    }
}

impl Policy for TabularPolicy {
    fn act(&self, state: &[f64], rng: &mut dyn RngCore) -> ActionValue {
        let s = state[0] as usize;
        let a = sample_categorical(&self.probs[s * self.n_actions..(s + 1) * self.n_actions], rng);
        ActionValue { index: a, b: if self.n_actions > 1 { a as f64 / (self.n_actions - 1) as f64 } else { 0.0 } }
    }
}

/// Grid matching the action encoding used by [`TabularPolicy::act`].
pub fn action_grid(n_actions: usize) -> ActionGrid {
    ActionGrid::uniform(n_actions)
}

pub fn sample_categorical(p: &[f64], rng: &mut dyn RngCore) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return i;
        }
    }
    p.len() - 1
}

impl Dynamics for TabularMdp {
    fn state_dim(&self) -> usize {
        1
    }

    fn step(&self, state: &[f64], action: ActionValue, rng: &mut dyn RngCore) -> Result<State> {
        let s = state[0] as usize;
        if s >= self.n_states || action.index >= self.n_actions {
            return Err(invalid("tabular state or action out of range"));
        }
        Ok(vec![sample_categorical(self.next_distribution(s, action.index), rng) as f64])
    }
}

impl RewardFn for TabularMdp {
    fn reward(&self, state: &[f64], action: ActionValue, _next: &[f64]) -> f64 {
        TabularMdp::reward(self, state[0] as usize, action.index)
    }
}

impl InitialDistribution for TabularMdp {
    fn sample(&self, rng: &mut dyn RngCore) -> State {
        vec![sample_categorical(&self.initial, rng) as f64]
    }
}

/// `KL(p || q)` for categorical distributions; infinite when `q` misses mass of `p`.
pub fn categorical_kl(p: &[f64], q: &[f64]) -> f64 {
    let mut kl = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi > 0.0 {
            if qi <= 0.0 {
                return f64::INFINITY;
            }
            kl += pi * crate::math::ln(pi / qi);
        }
    }
    kl.max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_absorbing_state_value() {
        // r = 1 forever, gamma = 0.5 -> V = 2.
        let m = TabularMdp::new(1, 1, vec![1.0], vec![1.0], vec![1.0]).unwrap();
        let p = TabularPolicy::deterministic(1, &[0]);
        let v = m.policy_values(&p, 0.5).unwrap();
        assert!((v[0] - 2.0).abs() < 1e-12);
        let (vstar, _) = m.value_iteration(0.5, 1e-14, 10_000);
        assert!((vstar[0] - 2.0).abs() < 1e-10);
    }

    #[test]
    fn rejects_non_stochastic_rows() {
        assert!(TabularMdp::new(1, 1, vec![0.5], vec![1.0], vec![1.0]).is_err());
        assert!(TabularPolicy::new(2, vec![0.3, 0.3]).is_err());
    }

    #[test]
    fn kl_of_identical_is_zero() {
        assert_eq!(categorical_kl(&[0.2, 0.8], &[0.2, 0.8]), 0.0);
        assert!(categorical_kl(&[0.5, 0.5], &[1.0, 0.0]).is_infinite());
    }
}
