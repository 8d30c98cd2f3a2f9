//! Cell-culture metabolic network emulator.
//!
//! The state is `(X, u)`: cell density `X` (10^6 cells/cm^2) and 33 metabolite
//! concentrations `u` (mM). One decision interval applies the medium exchange
//! `u+ = b u0 + (1 - b) u` and then integrates
//!
//! ```text
//! dX/dt = (mu - mu_d) X
//! du/dt = N v(s; beta) X
//! ```
//!
//! with explicit Euler substeps, clamping concentrations at zero after each
//! substep.

pub mod fluxes;
pub mod layout;
pub mod params;
pub mod stoich;

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, RngCore};

use crate::dual::Scalar;
use crate::error::{invalid, Error, Result};
use crate::mdp::{ActionValue, InitialDistribution, RewardFn, State};
use crate::model::{Bounds, GaussianModel, MeanFunction, NoiseSpec};

pub use fluxes::{flux_rates, growth_rate, GrowthConstants};
pub use layout::{N_METABOLITES, STATE_DIM};
pub use params::{KineticParams, Param};
pub use stoich::{Stoichiometry, N_REACTIONS};

/// Reference culture state at inoculation; also the fresh-medium profile for
/// the metabolite entries.
pub const DEFAULT_INITIAL_STATE: [f64; STATE_DIM] = [
    0.04, // X
    17.5, // GLC
    2.20, // G6P
    0.59, // F6P
    1.41, // GAP
    0.84, // PEP
    0.34, // PYR
    1.84, // LAC
    0.50, // ELAC
    0.50, // EPYR
    0.003, // Ru5P
    0.05, // AcCoA
    0.055, // CIT
    1.10, // AKG
    1.00, // SUC
    1.00, // FUM
    0.025, // MAL
    1.00, // OAA
    1.06, // GLN
    2.50, // EGLN
    2.14, // GLU
    1.00, // ALA
    1.00, // ASP
    0.10, // EASP
    0.20, // SER
    0.30, // GLY
    1.00, // NH4
    0.10, // EALA
    0.10, // EGLU
    1.00, // CO2
    0.25, // ESER
    0.25, // EGLY
    0.10, // ENH4
    0.10, // BIOM
];

/// `u+ = b u0 + (1 - b) u`, entrywise.
pub fn apply_medium_exchange(metabolites: &[f64], fresh: &[f64], b: f64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&b) {
        return Err(invalid("exchange ratio must lie in [0, 1]"));
    }
    if metabolites.len() != fresh.len() {
        return Err(invalid("fresh-medium profile has the wrong length"));
    }
    Ok(exchange(metabolites, fresh, b))
}

fn exchange<T: Scalar>(metabolites: &[T], fresh: &[f64], b: f64) -> Vec<T> {
    let keep = T::from_f64(1.0 - b);
    metabolites.iter().zip(fresh).map(|(&u, &u0)| T::from_f64(b * u0) + keep * u).collect()
}

/// Deterministic culture dynamics over one decision interval; the digital
/// twin's mean function `f(s, a; beta)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CultureModel {
    params: KineticParams,
    pub growth: GrowthConstants,
    pub stoich: Stoichiometry,
    fresh: Vec<f64>,
    /// Decision interval (h).
    pub dt: f64,
    pub substeps: usize,
    bounds: Bounds,
}

impl Default for CultureModel {
    fn default() -> Self {
        Self::new(KineticParams::reference())
    }
}

impl CultureModel {
    /// Default growth, network, medium profile, 4 h interval and 16 substeps.
    pub fn new(params: KineticParams) -> Self {
        let bounds = params.beta_bounds();
        Self {
            params,
            growth: GrowthConstants::default(),
            stoich: Stoichiometry::default(),
            fresh: DEFAULT_INITIAL_STATE[1..].to_vec(),
            dt: 4.0,
            substeps: 16,
            bounds,
        }
    }

    pub fn params(&self) -> &KineticParams {
        &self.params
    }

    pub fn set_params(&mut self, params: KineticParams) {
        self.bounds = params.beta_bounds();
        self.params = params;
    }

    pub fn fresh_medium(&self) -> &[f64] {
        &self.fresh
    }

    pub fn set_fresh_medium(&mut self, fresh: Vec<f64>) -> Result<()> {
        if fresh.len() != N_METABOLITES || fresh.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(invalid("fresh medium needs 33 non-negative concentrations"));
        }
        self.fresh = fresh;
        Ok(())
    }

    pub fn with_timing(mut self, dt: f64, substeps: usize) -> Result<Self> {
        if !(dt > 0.0) || substeps == 0 {
            return Err(invalid("need dt > 0 and at least one substep"));
        }
        self.dt = dt;
        self.substeps = substeps;
        Ok(self)
    }

    /// Full 73-entry parameter vector with the calibrated entries set to `beta`.
    fn full_params<T: Scalar>(&self, beta: &[T]) -> Result<Vec<T>> {
        if beta.len() != self.params.calibrated().len() {
            return Err(invalid("beta length does not match the calibration mask"));
        }
        let mut full: Vec<T> = self.params.values().iter().map(|&v| T::from_f64(v)).collect();
        for (p, &b) in self.params.calibrated().iter().zip(beta) {
            full[p.idx()] = b;
        }
        Ok(full)
    }

    /// Mean transition for an explicit full parameter vector.
    pub fn transition_full<T: Scalar>(&self, state: &[f64], b: f64, full: &[T]) -> Result<Vec<T>> {
        fluxes::check_state(state)?;
        if !(0.0..=1.0).contains(&b) {
            return Err(invalid("exchange ratio must lie in [0, 1]"));
        }
        let mut s: Vec<T> = Vec::with_capacity(STATE_DIM);
        s.push(T::from_f64(state[layout::X]));
        s.extend(exchange(&state[1..].iter().map(|&x| T::from_f64(x)).collect::<Vec<_>>(), &self.fresh, b));

        let h = T::from_f64(self.dt / self.substeps as f64);
        let mut du = vec![T::zero(); N_METABOLITES];
        for step in 0..self.substeps {
            let v = fluxes::net_fluxes(&s, full);
            let (mu, mu_d) = fluxes::growth_rates(&s, &self.growth);
            let x = s[layout::X];
            for d in du.iter_mut() {
                *d = T::zero();
            }
            self.stoich.accumulate(&v, x, &mut du);
            s[layout::X] = (x + h * (mu - mu_d) * x).clamp_nonneg();
            for (i, d) in du.iter().enumerate() {
                s[i + 1] = (s[i + 1] + h * *d).clamp_nonneg();
            }
            if let Some(index) = s.iter().position(|x| !x.value().is_finite()) {
                return Err(Error::DivergedSimulation { step, index });
            }
        }
        Ok(s)
    }

    /// `f(s, a; beta)` for the full reference parameter vector.
    pub fn mean_transition_reference(&self, state: &[f64], action: ActionValue) -> Result<State> {
        self.transition_full::<f64>(state, action.b, self.params.values())
    }
}

impl MeanFunction for CultureModel {
    fn state_dim(&self) -> usize {
        STATE_DIM
    }

    fn param_dim(&self) -> usize {
        self.params.calibrated().len()
    }

    fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    fn mean_generic<T: Scalar>(&self, state: &[f64], action: ActionValue, beta: &[T]) -> Result<Vec<T>> {
        let full = self.full_params(beta)?;
        self.transition_full(state, action.b, &full)
    }

    fn nonnegative_states(&self) -> bool {
        true
    }
}

/// How per-entry noise levels are derived from the initial state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseRule {
    /// Standard deviation is a fraction of the initial value.
    StdFraction(f64),
    /// Variance is a fraction of the initial value.
    VarianceFraction(f64),
}

impl NoiseRule {
    pub fn noise_for(&self, initial: &[f64]) -> NoiseSpec {
        let std = initial
            .iter()
            .map(|&x| match *self {
                NoiseRule::StdFraction(f) => f * x,
                NoiseRule::VarianceFraction(f) => crate::math::sqrt(f * x),
            })
            .collect();
        NoiseSpec::new(std).expect("non-negative initial state gives valid noise")
    }
}

impl Default for NoiseRule {
    fn default() -> Self {
        NoiseRule::StdFraction(0.05)
    }
}

/// Mean transition plus clamped Gaussian noise.
pub fn sample_transition(
    model: &GaussianModel<CultureModel>,
    state: &[f64],
    action: ActionValue,
    beta: &[f64],
    rng: &mut dyn RngCore,
) -> Result<State> {
    model.sample_next(state, action, beta, rng)
}

/// Economic constants of the culture reward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardConstants {
    /// Revenue per unit of cell product.
    pub c_r: f64,
    /// Cost of a full (100 %) medium exchange.
    pub c_m: f64,
    /// Penalty per unit of extracellular lactate produced.
    pub c_l: f64,
    /// Multiplies the cell-density change before pricing.
    pub yield_conversion: f64,
    /// Lactate increase per interval covered by the non-negativity shift.
    pub lactate_cap: f64,
    /// Cell-density increase per interval assumed by the reward bound.
    pub growth_cap: f64,
}

impl Default for RewardConstants {
    fn default() -> Self {
        Self { c_r: 30.0, c_m: 120.0, c_l: 84.0, yield_conversion: 1.0, lactate_cap: 5.0, growth_cap: 1.0 }
    }
}

impl RewardConstants {
    /// Raw economic reward `c_r dX - c_m b - c_l dELAC`, with changes measured
    /// from the post-exchange state.
    pub fn raw(&self, prev: &[f64], action: ActionValue, next: &[f64], fresh: &[f64]) -> f64 {
        let post_elac = action.b * fresh[layout::metabolite(layout::ELAC)] + (1.0 - action.b) * prev[layout::ELAC];
        let dx = next[layout::X] - prev[layout::X];
        let delac = next[layout::ELAC] - post_elac;
        self.c_r * self.yield_conversion * dx - self.c_m * action.b - self.c_l * delac
    }

    pub fn shift(&self) -> f64 {
        self.c_m + self.c_l * self.lactate_cap
    }

    /// Shifted, clipped reward used as the MDP reward.
    pub fn shifted(&self, raw: f64) -> f64 {
        (raw + self.shift()).max(0.0)
    }

    /// Upper bound on the shifted reward under the growth cap.
    pub fn reward_bound(&self) -> f64 {
        self.shift() + self.c_r * self.yield_conversion * self.growth_cap
    }
}

/// Which form of the culture reward an MDP sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RewardScale {
    Raw,
    /// Shifted to be non-negative.
    Shifted,
    /// Shifted, then divided by the reward bound.
    Normalized,
}

/// The culture reward as an MDP reward function.
#[derive(Debug, Clone, PartialEq)]
pub struct CultureReward {
    pub constants: RewardConstants,
    pub fresh: Vec<f64>,
    pub scale: RewardScale,
}

impl CultureReward {
    pub fn new(constants: RewardConstants, fresh: &[f64]) -> Self {
        Self { constants, fresh: fresh.to_vec(), scale: RewardScale::Shifted }
    }

    pub fn with_scale(&self, scale: RewardScale) -> Self {
        Self { scale, ..self.clone() }
    }
}

impl RewardFn for CultureReward {
    fn reward(&self, state: &[f64], action: ActionValue, next_state: &[f64]) -> f64 {
        let r = self.constants.raw(state, action, next_state, &self.fresh);
        match self.scale {
            RewardScale::Raw => r,
            RewardScale::Shifted => self.constants.shifted(r),
            RewardScale::Normalized => self.constants.shifted(r) / self.constants.reward_bound(),
        }
    }
}

/// Base state with independent multiplicative `U(1 - spread, 1 + spread)` noise.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbedInitial {
    pub base: State,
    pub spread: f64,
}

impl PerturbedInitial {
    pub fn new(base: State, spread: f64) -> Self {
        Self { base, spread }
    }
}

impl Default for PerturbedInitial {
    fn default() -> Self {
        Self { base: DEFAULT_INITIAL_STATE.to_vec(), spread: 0.2 }
    }
}

impl InitialDistribution for PerturbedInitial {
    fn sample(&self, rng: &mut dyn RngCore) -> State {
        self.base
            .iter()
            .map(|&x| {
                let u: f64 = rng.random();
                x * (1.0 - self.spread + 2.0 * self.spread * u)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{rollout, ConstantPolicy, Dynamics};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn act(b: f64) -> ActionValue {
        ActionValue { index: 0, b }
    }

    #[test]
    fn exchange_examples() {
        assert_eq!(apply_medium_exchange(&[2.0], &[6.0], 0.5).unwrap(), vec![4.0]);
        assert_eq!(apply_medium_exchange(&[2.0, 3.0], &[6.0, 1.0], 0.0).unwrap(), vec![2.0, 3.0]);
        assert_eq!(apply_medium_exchange(&[2.0, 3.0], &[6.0, 1.0], 1.0).unwrap(), vec![6.0, 1.0]);
        assert!(apply_medium_exchange(&[2.0], &[6.0], 1.5).is_err());
        assert!(apply_medium_exchange(&[2.0], &[6.0], -0.1).is_err());
    }

    #[test]
    fn identity_when_everything_is_switched_off() {
        let mut values = params::DEFAULT_VALUES.to_vec();
        for p in Param::ALL {
            if p.name().starts_with("v_max") {
                values[p.idx()] = 1e-300;
            }
        }
        let mut model = CultureModel::new(KineticParams::from_values(values, Vec::new()).unwrap());
        model.growth.mu_max = 0.0;
        model.growth.k_d = 0.0;
        let s = DEFAULT_INITIAL_STATE.to_vec();
        let out = model.mean(&s, act(0.0), &[]).unwrap();
        for (a, b) in out.iter().zip(&s) {
            assert!((a - b).abs() <= 1e-250, "{a} vs {b}");
        }
    }

    #[test]
    fn full_exchange_resets_metabolites_before_integration() {
        let model = CultureModel::default().with_timing(1e-9, 1).unwrap();
        let mut s = DEFAULT_INITIAL_STATE.to_vec();
        for x in s.iter_mut().skip(1) {
            *x *= 3.0;
        }
        let out = model.mean(&s, act(1.0), &model.params().beta()).unwrap();
        for i in 1..STATE_DIM {
            assert!((out[i] - DEFAULT_INITIAL_STATE[i]).abs() < 1e-6, "entry {i}");
        }
        assert!((out[0] - s[0]).abs() < 1e-9);
    }

    #[test]
    fn zero_noise_sample_equals_mean() {
        let m = GaussianModel::new(CultureModel::default(), NoiseSpec::zeros(STATE_DIM)).unwrap();
        let beta = m.mean_fn.params().beta();
        let s = DEFAULT_INITIAL_STATE.to_vec();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let draw = sample_transition(&m, &s, act(0.3), &beta, &mut rng).unwrap();
        assert_eq!(draw, m.mean_fn.mean(&s, act(0.3), &beta).unwrap());
    }

    #[test]
    fn reward_arithmetic() {
        let c = RewardConstants::default();
        let fresh = DEFAULT_INITIAL_STATE[1..].to_vec();
        let mut prev = DEFAULT_INITIAL_STATE.to_vec();
        prev[layout::ELAC] = fresh[layout::metabolite(layout::ELAC)];
        let mut next = prev.clone();
        next[layout::X] += 1.0;
        next[layout::ELAC] += 0.1;
        let r = c.raw(&prev, act(0.5), &next, &fresh);
        assert!((r - (-38.4)).abs() < 1e-9);
        assert_eq!(c.raw(&prev, act(0.0), &prev, &fresh), 0.0);
        assert_eq!(c.raw(&prev, act(1.0), &prev, &fresh), -120.0);
        assert_eq!(c.shifted(-1e6), 0.0);
        assert_eq!(c.shifted(0.0), c.shift());
        let full = CultureReward::new(c, &fresh);
        let base = full.with_scale(RewardScale::Raw).reward(&prev, act(0.5), &next);
        assert!((base - r).abs() < 1e-12);
        assert!((full.reward(&prev, act(0.5), &next) - (r + 540.0)).abs() < 1e-9);
        let n = full.with_scale(RewardScale::Normalized).reward(&prev, act(0.5), &next);
        assert!((n - (r + 540.0) / 570.0).abs() < 1e-12);
    }

    #[test]
    fn noise_free_no_exchange_episode_is_physical() {
        let m = GaussianModel::new(CultureModel::default(), NoiseSpec::zeros(STATE_DIM)).unwrap();
        let twin = m.at(&m.mean_fn.params().beta());
        let reward = CultureReward::new(RewardConstants::default(), m.mean_fn.fresh_medium());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = rollout(&twin, &ConstantPolicy(act(0.0)), &reward, DEFAULT_INITIAL_STATE.to_vec(), 12, 0.99, &mut rng)
            .unwrap();
        let states: Vec<&State> = t.states().collect();
        for w in states.windows(2) {
            assert!(w[1][layout::GLC] <= w[0][layout::GLC]);
            assert!(w[1][layout::ELAC] >= w[0][layout::ELAC]);
            assert!(w[1].iter().all(|x| *x >= 0.0));
        }
        assert!(twin.state_dim() == STATE_DIM);
    }

    #[test]
    fn perturbed_initial_within_spread() {
        let init = PerturbedInitial::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let s = init.sample(&mut rng);
            for (x, b) in s.iter().zip(&init.base) {
                assert!(*x >= 0.8 * b - 1e-15 && *x <= 1.2 * b + 1e-15);
            }
        }
    }

    #[test]
    fn sixteen_substeps_match_a_fine_reference() {
        let coarse = CultureModel::default();
        let fine = CultureModel::default().with_timing(4.0, 1024).unwrap();
        let beta = coarse.params().beta();
        let s = DEFAULT_INITIAL_STATE.to_vec();
        for b in [0.0, 0.5] {
            let a = coarse.mean(&s, act(b), &beta).unwrap();
            let r = fine.mean(&s, act(b), &beta).unwrap();
            for i in 0..STATE_DIM {
                assert!((a[i] - r[i]).abs() <= 0.01 * r[i].abs(), "{} {} vs {}", layout::NAMES[i], a[i], r[i]);
            }
        }
    }

    #[test]
    fn sampled_noise_has_requested_spread() {
        let noise = NoiseRule::default().noise_for(&DEFAULT_INITIAL_STATE);
        let m = GaussianModel::new(CultureModel::default(), noise.clone()).unwrap();
        let beta = m.mean_fn.params().beta();
        let s = DEFAULT_INITIAL_STATE.to_vec();
        let mean = m.mean_fn.mean(&s, act(0.0), &beta).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 20_000;
        let mut sq = 0.0;
        for _ in 0..n {
            let draw = sample_transition(&m, &s, act(0.0), &beta, &mut rng).unwrap();
            sq += (draw[layout::GLC] - mean[layout::GLC]).powi(2);
        }
        let sd = (sq / n as f64).sqrt();
        let want = noise.std()[layout::GLC];
        assert!((sd - want).abs() < 0.02 * want, "{sd} vs {want}");
    }
}
