//! Model-uncertainty function `u(s, a; beta_hat, pi)`: the exact Gaussian-KL
//! form (needs the true parameters), the plug-in trace approximation, the
//! value-dependent weight and information-gain action selection.

use alloc::vec::Vec;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::calibration::{conditional_fisher_info, CovarianceEstimate};
use crate::error::{invalid, Error, Result};
use crate::math;
use crate::mdp::{rollout, ActionGrid, ActionValue, Dynamics, Policy, RewardFn};
use crate::model::{GaussianModel, MeanFunction};

/// `KL(N(f_a, Sigma) || N(f_b, Sigma))` for the shared diagonal noise.
pub fn kl_gaussian_transitions<M: MeanFunction>(
    state: &[f64],
    action: ActionValue,
    beta_a: &[f64],
    beta_b: &[f64],
    model: &GaussianModel<M>,
) -> Result<f64> {
    if !model.noise.is_positive() {
        return Err(invalid("KL needs strictly positive noise variances"));
    }
    let fa = model.mean_fn.mean(state, action, beta_a)?;
    let fb = model.mean_fn.mean(state, action, beta_b)?;
    let mut kl = 0.0;
    for ((a, b), s) in fa.iter().zip(&fb).zip(model.noise.std()) {
        let d = (a - b) / s;
        kl += 0.5 * d * d;
    }
    if !kl.is_finite() {
        return Err(Error::DivergedModel);
    }
    Ok(kl)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValueOptions {
    pub rollouts: usize,
    pub horizon: usize,
    pub gamma: f64,
    /// Ceiling of the clipped value estimate.
    pub v_max: f64,
}

impl Default for ValueOptions {
    fn default() -> Self {
        Self { rollouts: 8, horizon: 12, gamma: 0.99, v_max: 10.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValueEstimate {
    /// Clipped to `[0, v_max]`.
    pub value: f64,
    /// Unclipped Monte Carlo mean.
    pub raw_mean: f64,
    pub rollouts: usize,
    pub diverged: usize,
    pub horizon: usize,
}

/// Monte Carlo value of `state` under `policy`; diverged rollouts are dropped
/// and counted.
pub fn estimate_value<D, P, R>(
    state: &[f64],
    policy: &P,
    dynamics: &D,
    reward: &R,
    opts: &ValueOptions,
    rng: &mut dyn RngCore,
) -> Result<ValueEstimate>
where
    D: Dynamics + ?Sized,
    P: Policy + ?Sized,
    R: RewardFn + ?Sized,
{
    if opts.rollouts == 0 {
        return Err(invalid("need at least one rollout"));
    }
    let mut sum = 0.0;
    let mut ok = 0usize;
    let mut diverged = 0usize;
    for _ in 0..opts.rollouts {
        match rollout(dynamics, policy, reward, state.to_vec(), opts.horizon, opts.gamma, rng) {
            Ok(t) => {
                sum += t.discounted_return;
                ok += 1;
            }
            Err(Error::DivergedSimulation { .. }) | Err(Error::DivergedModel) => diverged += 1,
            Err(e) => return Err(e),
        }
    }
    if ok == 0 {
        return Err(Error::DivergedSimulation { step: 0, index: usize::MAX });
    }
    let raw_mean = sum / ok as f64;
    Ok(ValueEstimate {
        value: raw_mean.clamp(0.0, opts.v_max),
        raw_mean,
        rollouts: ok,
        diverged,
        horizon: opts.horizon,
    })
}

/// `2 (1 + log mean exp(V^2))` from value samples.
pub fn weight_from_values(values: &[f64]) -> f64 {
    let sq: Vec<f64> = values.iter().map(|v| v * v).collect();
    2.0 * (1.0 + math::log_mean_exp(&sq))
}

/// Everything the uncertainty function needs besides `(s, a)` and the
/// parameter estimates.
pub struct UncertaintyContext<'a, M, P: ?Sized, R: ?Sized> {
    pub model: &'a GaussianModel<M>,
    pub policy: &'a P,
    pub reward: &'a R,
    pub value: ValueOptions,
    /// Next-state draws per weight evaluation.
    pub weight_samples: usize,
}

impl<M, P: ?Sized, R: ?Sized> Clone for UncertaintyContext<'_, M, P, R> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<M, P: ?Sized, R: ?Sized> Copy for UncertaintyContext<'_, M, P, R> {}

impl<'a, M: MeanFunction, P: Policy + ?Sized, R: RewardFn + ?Sized> UncertaintyContext<'a, M, P, R> {
    pub fn new(model: &'a GaussianModel<M>, policy: &'a P, reward: &'a R) -> Self {
        Self { model, policy, reward, value: ValueOptions::default(), weight_samples: 16 }
    }
}

/// Value weight `w = 2 (1 + log E[exp(V(s')^2)])` with `s' ~ mu(.|s, a; beta)`
/// and `V` estimated in the model at `beta`.
pub fn weight_hat<M, P, R>(
    state: &[f64],
    action: ActionValue,
    beta: &[f64],
    ctx: &UncertaintyContext<'_, M, P, R>,
    rng: &mut dyn RngCore,
) -> Result<f64>
where
    M: MeanFunction,
    P: Policy + ?Sized,
    R: RewardFn + ?Sized,
{
    if ctx.weight_samples == 0 {
        return Err(invalid("need at least one next-state sample"));
    }
    let twin = ctx.model.at(beta);
    let mut values = Vec::with_capacity(ctx.weight_samples);
    for _ in 0..ctx.weight_samples {
        let next = ctx.model.sample_next(state, action, beta, rng)?;
        values.push(estimate_value(&next, ctx.policy, &twin, ctx.reward, &ctx.value, rng)?.value);
    }
    Ok(weight_from_values(&values))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UncertaintyMode {
    ExactOracle,
    PlugIn,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UncertaintyEstimate {
    pub u: f64,
    pub weight: f64,
    /// `Tr(I Sigma)` in plug-in mode, the KL divergence in oracle mode.
    pub trace: f64,
    pub mode: UncertaintyMode,
}

/// `max(0, Tr(I(beta_hat; s, a) Sigma_hat / n))`.
pub fn plug_in_trace<M: MeanFunction>(
    state: &[f64],
    action: ActionValue,
    beta_hat: &[f64],
    cov: &CovarianceEstimate,
    model: &GaussianModel<M>,
) -> Result<f64> {
    if cov.dim() != beta_hat.len() {
        return Err(invalid("covariance dimension does not match beta"));
    }
    let info = conditional_fisher_info(state, action, beta_hat, model)?;
    Ok(info.trace_product(&cov.estimator_covariance()).max(0.0))
}

/// Plug-in uncertainty from a precomputed weight.
pub fn plug_in_with_weight(trace: f64, weight: f64) -> UncertaintyEstimate {
    let trace = trace.max(0.0);
    UncertaintyEstimate { u: math::sqrt(weight * trace), weight, trace, mode: UncertaintyMode::PlugIn }
}

/// `u = sqrt(w_hat * Tr(I Sigma_hat))`.
pub fn uncertainty_plug_in<M, P, R>(
    state: &[f64],
    action: ActionValue,
    beta_hat: &[f64],
    cov: &CovarianceEstimate,
    ctx: &UncertaintyContext<'_, M, P, R>,
    rng: &mut dyn RngCore,
) -> Result<UncertaintyEstimate>
where
    M: MeanFunction,
    P: Policy + ?Sized,
    R: RewardFn + ?Sized,
{
    let trace = plug_in_trace(state, action, beta_hat, cov, ctx.model)?;
    let weight = weight_hat(state, action, beta_hat, ctx, rng)?;
    Ok(plug_in_with_weight(trace, weight))
}

/// `u = sqrt(w * KL(mu(.; beta_true) || mu(.; beta_hat)))`, with the weight
/// computed from the true model's values.
pub fn uncertainty_exact_oracle<M, P, R>(
    state: &[f64],
    action: ActionValue,
    beta_hat: &[f64],
    beta_true: &[f64],
    ctx: &UncertaintyContext<'_, M, P, R>,
    rng: &mut dyn RngCore,
) -> Result<UncertaintyEstimate>
where
    M: MeanFunction,
    P: Policy + ?Sized,
    R: RewardFn + ?Sized,
{
    let kl = kl_gaussian_transitions(state, action, beta_true, beta_hat, ctx.model)?;
    let weight = weight_hat(state, action, beta_true, ctx, rng)?;
    Ok(UncertaintyEstimate { u: math::sqrt(weight * kl), weight, trace: kl, mode: UncertaintyMode::ExactOracle })
}

/// Outcome of scoring every grid action.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionSelection {
    pub action: ActionValue,
    /// One entry per grid action; `None` where evaluation failed.
    pub estimates: Vec<Option<UncertaintyEstimate>>,
}

/// The grid action with the largest plug-in uncertainty (lowest index on
/// ties). Each action gets its own RNG substream so results do not depend on
/// evaluation order.
pub fn select_calibration_action<M, P, R>(
    state: &[f64],
    beta_hat: &[f64],
    cov: &CovarianceEstimate,
    grid: &ActionGrid,
    ctx: &UncertaintyContext<'_, M, P, R>,
    rng: &mut dyn RngCore,
) -> Result<ActionSelection>
where
    M: MeanFunction,
    P: Policy + ?Sized,
    R: RewardFn + ?Sized,
{
    if grid.is_empty() {
        return Err(invalid("empty action grid"));
    }
    let base = rng.next_u64();
    let mut estimates = Vec::with_capacity(grid.len());
    for a in grid.iter() {
        let mut sub = ChaCha8Rng::seed_from_u64(base);
        sub.set_stream(a.index as u64);
        estimates.push(uncertainty_plug_in(state, a, beta_hat, cov, ctx, &mut sub).ok());
    }
    let scores: Vec<f64> = estimates.iter().map(|e| e.map_or(f64::NAN, |e| e.u)).collect();
    let best = math::argmax(&scores).ok_or(Error::SelectionFailed)?;
    Ok(ActionSelection { action: grid.get(best), estimates })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{ConstantPolicy, FixedInitial};
    use crate::model::{LinearTestbed, NoiseSpec};
    use alloc::vec;
    use nalgebra::DMatrix;

    fn a(index: usize, b: f64) -> ActionValue {
        ActionValue { index, b }
    }

    struct Stay;
    impl Dynamics for Stay {
        fn state_dim(&self) -> usize {
            1
        }
        fn step(&self, s: &[f64], _: ActionValue, _: &mut dyn RngCore) -> Result<crate::mdp::State> {
            Ok(s.to_vec())
        }
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(9)
    }

    #[test]
    fn kl_examples() {
        let m = GaussianModel::new(LinearTestbed::new(1), NoiseSpec::new(vec![1.0]).unwrap()).unwrap();
        assert_eq!(kl_gaussian_transitions(&[1.0], a(0, 0.0), &[0.3], &[0.3], &m).unwrap(), 0.0);
        assert!((kl_gaussian_transitions(&[1.0], a(0, 0.0), &[0.0], &[1.0], &m).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn geometric_value() {
        let one = |_: &[f64], _: ActionValue, _: &[f64]| 1.0;
        let opts = ValueOptions { rollouts: 1, horizon: 60, gamma: 0.5, v_max: 10.0 };
        let v = estimate_value(&[0.0], &ConstantPolicy(a(0, 0.0)), &Stay, &one, &opts, &mut rng()).unwrap();
        assert!((v.raw_mean - 2.0).abs() < 1e-12);
        for t in 1..10 {
            let o = ValueOptions { horizon: t, ..opts };
            let v = estimate_value(&[0.0], &ConstantPolicy(a(0, 0.0)), &Stay, &one, &o, &mut rng()).unwrap();
            assert!(2.0 - v.raw_mean <= math::powi(0.5, t as i32) / 0.5 + 1e-12);
        }
        let big = ValueOptions { v_max: 1.5, ..opts };
        let v = estimate_value(&[0.0], &ConstantPolicy(a(0, 0.0)), &Stay, &one, &big, &mut rng()).unwrap();
        assert_eq!(v.value, 1.5);
        let _ = FixedInitial(vec![0.0]);
    }

    #[test]
    fn weight_examples() {
        assert_eq!(weight_from_values(&[0.0, 0.0]), 2.0);
        assert!((weight_from_values(&[3.0; 4]) - 20.0).abs() < 1e-12);
        let w = weight_from_values(&[30.0, 0.0]);
        assert!(w.is_finite() && w <= 2.0 * (1.0 + 900.0));
    }

    #[test]
    fn plug_in_identity_case() {
        let info = crate::calibration::FisherInfo { matrix: DMatrix::identity(3, 3) };
        let trace = info.trace_product(&CovarianceEstimate::fixed(DMatrix::identity(3, 3)).estimator_covariance());
        let e = plug_in_with_weight(trace, 2.0);
        assert!((e.u * e.u - 6.0).abs() < 1e-12);
        let e = plug_in_with_weight(-1e-18, 2.0);
        assert_eq!(e.u, 0.0);
    }

    #[test]
    fn selection_prefers_larger_information_and_breaks_ties_low() {
        let model = GaussianModel::new(LinearTestbed::new(1).with_gain(1.0, 2.0), NoiseSpec::new(vec![1.0]).unwrap())
            .unwrap();
        let zero = |_: &[f64], _: ActionValue, _: &[f64]| 0.0;
        let pol = ConstantPolicy(a(0, 0.0));
        let ctx = UncertaintyContext::new(&model, &pol, &zero);
        let grid = ActionGrid::new(vec![0.0, 1.0]).unwrap();
        let cov = CovarianceEstimate::fixed(DMatrix::identity(1, 1));
        let sel = select_calibration_action(&[1.0], &[0.5], &cov, &grid, &ctx, &mut rng()).unwrap();
        assert_eq!(sel.action.index, 1);

        let zero_cov = CovarianceEstimate::fixed(DMatrix::zeros(1, 1));
        let sel = select_calibration_action(&[1.0], &[0.5], &zero_cov, &grid, &ctx, &mut rng()).unwrap();
        assert_eq!(sel.action.index, 0);
        assert!(sel.estimates.iter().all(|e| e.unwrap().u == 0.0));
    }

    #[test]
    fn oracle_is_zero_at_truth() {
        let model = GaussianModel::new(LinearTestbed::new(2), NoiseSpec::new(vec![0.5, 0.5]).unwrap()).unwrap();
        let zero = |_: &[f64], _: ActionValue, _: &[f64]| 0.0;
        let pol = ConstantPolicy(a(0, 0.0));
        let ctx = UncertaintyContext::new(&model, &pol, &zero);
        let e = uncertainty_exact_oracle(&[1.0, 2.0], a(0, 0.0), &[0.7, 0.9], &[0.7, 0.9], &ctx, &mut rng()).unwrap();
        assert_eq!(e.u, 0.0);
    }
}
