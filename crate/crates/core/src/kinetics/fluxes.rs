//! Michaelis–Menten flux rates and the cell growth law.

use super::layout as l;
use super::params::Param as P;
use super::stoich::N_REACTIONS;
use crate::dual::Scalar;
use crate::error::{Error, Result};

/// Cell growth constants (rates in 1/h, concentrations in mM).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthConstants {
    pub mu_max: f64,
    pub k_d: f64,
    pub k_dlac: f64,
    pub k_glc: f64,
    pub k_ilac: f64,
}

impl Default for GrowthConstants {
    fn default() -> Self {
        Self { mu_max: 0.04, k_d: 0.005, k_dlac: 45.0, k_glc: 0.75, k_ilac: 40.0 }
    }
}

#[inline]
fn monod<T: Scalar>(c: T, k: T) -> T {
    c / (k + c)
}

#[inline]
fn inhibit<T: Scalar>(c: T, k: T) -> T {
    k / (k + c)
}

/// Net fluxes of the 30 reactions; reversible pairs are forward minus reverse.
/// No input validation; see [`flux_rates`].
pub fn net_fluxes<T: Scalar>(s: &[T], p: &[T]) -> [T; N_REACTIONS] {
    let k = |q: P| p[q.idx()];
    let c = |i: usize| s[i];
    let mm = |i: usize, q: P| monod(s[i], p[q.idx()]);

    let glc = c(l::GLC);
    let g6p = c(l::G6P);
    let f6p = c(l::F6P);
    let pep = c(l::PEP);
    let pyr = c(l::PYR);
    let lac = c(l::LAC);
    let gln = c(l::GLN);

    let hk = k(P::VmaxHK) * monod(glc, k(P::KmGLC)) * inhibit(g6p, k(P::KiG6P)) * inhibit(lac, k(P::KiLacHK));
    let pgi = k(P::VmaxPGI) * mm(l::G6P, P::KmG6P);
    let pfk = k(P::VmaxPFK) * mm(l::F6P, P::KmF6P);
    let pgk = k(P::VmaxPGK) * mm(l::GAP, P::KmGAP);
    // PEP / (K_m (1 + K_a / F6P) + PEP), multiplied through by F6P so F6P = 0 is finite.
    let pk = k(P::VmaxPK) * pep * f6p / (k(P::KmPEP) * (f6p + k(P::KaF6P)) + pep * f6p);
    let ldh = k(P::VmaxLDHf) * mm(l::PYR, P::KmPYR)
        - k(P::VmaxLDHr) * mm(l::LAC, P::KmLAC) * inhibit(pyr, k(P::KiPYR));
    let pyrt = k(P::VmaxPyrT) * mm(l::EPYR, P::KmEPYR) * inhibit(lac, k(P::KiLacPyr));
    let lact = k(P::VmaxLacTf) * mm(l::LAC, P::KmLAC) - k(P::VmaxLacTr) * mm(l::ELAC, P::KmELAC);
    let op = k(P::VmaxOP) * mm(l::G6P, P::KmG6P);
    let nop = k(P::VmaxNOP) * mm(l::RU5P, P::KmRU5P);
    let pdh = k(P::VmaxPDH) * mm(l::PYR, P::KmPYR);
    let cs = k(P::VmaxCS) * mm(l::ACCOA, P::KmACCOA) * mm(l::OAA, P::KmOAA);
    let cits = k(P::VmaxCITSf) * mm(l::CIT, P::KmCIT) - k(P::VmaxCITSr) * mm(l::AKG, P::KmAKG);
    let akgdh = k(P::VmaxAKGDH) * mm(l::AKG, P::KmAKG);
    let sdh = k(P::VmaxSDH) * mm(l::SUC, P::KmSUC);
    let fum = k(P::VmaxFUMf) * mm(l::FUM, P::KmFUM) - k(P::VmaxFUMr) * mm(l::MAL, P::KmMAL);
    let mdh = k(P::VmaxMDHf) * mm(l::MAL, P::KmMAL) - k(P::VmaxMDHr) * mm(l::OAA, P::KmOAA);
    let me = k(P::VmaxME) * mm(l::MAL, P::KmMAL);
    let pc = k(P::VmaxPC) * mm(l::PYR, P::KmPYR);
    let glns = k(P::VmaxGLNSf) * mm(l::GLN, P::KmGLN) * inhibit(lac, k(P::KiLacGLNS))
        - k(P::VmaxGLNSr) * mm(l::GLU, P::KmGLU) * mm(l::NH4, P::KmNH4);
    let gldh = k(P::VmaxGLDHf) * mm(l::GLU, P::KmGLU)
        - k(P::VmaxGLDHr) * mm(l::AKG, P::KmAKG) * mm(l::NH4, P::KmNH4);
    // Glutamine activation of the reverse transamination uses the saturating
    // form GLN / (K_a + GLN) so the rate stays below its v_max.
    let alata = k(P::VmaxAlaTAf) * mm(l::GLU, P::KmGLU) * mm(l::PYR, P::KmPYR)
        - k(P::VmaxAlaTAr) * mm(l::ALA, P::KmALA) * mm(l::AKG, P::KmAKG) * monod(gln, k(P::KaGLN));
    let alat = k(P::VmaxAlaT) * mm(l::ALA, P::KmALA);
    let glut = k(P::VmaxGluT) * mm(l::GLU, P::KmGLU);
    let glnt = k(P::VmaxGlnT) * mm(l::EGLN, P::KmEGLN) * inhibit(gln, k(P::KiGLN));
    let sal = k(P::VmaxSAL) * mm(l::SER, P::KmSER);
    let asta = k(P::VmaxASTAf) * mm(l::ASP, P::KmASP) * mm(l::AKG, P::KmAKG)
        - k(P::VmaxASTAr) * mm(l::GLU, P::KmGLU) * mm(l::OAA, P::KmOAA) * mm(l::NH4, P::KmNH4);
    let aspt = k(P::VmaxAspT) * mm(l::EASP, P::KmEASP);
    let acl = k(P::VmaxACL) * mm(l::CIT, P::KmCIT);
    let growth = k(P::VmaxGrowth)
        * mm(l::GLN, P::KmGLN)
        * mm(l::GLC, P::KmGLC)
        * mm(l::GLU, P::KmGLU)
        * mm(l::ALA, P::KmALA)
        * mm(l::ASP, P::KmASP)
        * mm(l::SER, P::KmSER)
        * mm(l::GLY, P::KmGLY);

    [
        hk, pgi, pfk, pgk, pk, ldh, pyrt, lact, op, nop, pdh, cs, cits, akgdh, sdh, fum, mdh, me, pc, glns, gldh,
        alata, alat, glut, glnt, sal, asta, aspt, acl, growth,
    ]
}

/// Specific growth and death rates `(mu, mu_d)`.
pub fn growth_rates<T: Scalar>(s: &[T], g: &GrowthConstants) -> (T, T) {
    let f = T::from_f64;
    let glc = s[l::GLC];
    let egln = s[l::EGLN];
    let elac = s[l::ELAC];
    let mu = f(g.mu_max) * monod(glc, f(g.k_glc)) * monod(egln, f(g.k_glc)) * inhibit(elac, f(g.k_ilac));
    let mu_d = f(g.k_d) * monod(elac, f(g.k_dlac));
    (mu, mu_d)
}

pub(crate) fn check_state(state: &[f64]) -> Result<()> {
    if state.len() != l::STATE_DIM {
        return Err(crate::error::invalid("culture state must have 34 entries"));
    }
    if let Some(index) = state.iter().position(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::InvalidState { index, value: state[index] });
    }
    Ok(())
}

/// Validated net flux vector at `state` for the full 73-entry parameter vector.
pub fn flux_rates(state: &[f64], params: &[f64]) -> Result<[f64; N_REACTIONS]> {
    check_state(state)?;
    if params.len() != super::params::N_PARAMS {
        return Err(crate::error::invalid("kinetic parameter vector must have 73 entries"));
    }
    Ok(net_fluxes(state, params))
}

/// Validated `(mu, mu_d)` at `state`.
pub fn growth_rate(state: &[f64], growth: &GrowthConstants) -> Result<(f64, f64)> {
    check_state(state)?;
    Ok(growth_rates(state, growth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinetics::params::{KineticParams, DEFAULT_VALUES};
    use alloc::vec;

    fn zero_state() -> alloc::vec::Vec<f64> {
        vec![0.0; l::STATE_DIM]
    }

    #[test]
    fn hexokinase_half_saturation() {
        let mut s = zero_state();
        s[l::GLC] = 1.46;
        let v = flux_rates(&s, DEFAULT_VALUES).unwrap();
        assert_eq!(v[0], 2.92 / 2.0);
        assert_eq!(v[0], 1.46);
    }

    #[test]
    fn pgi_zero_without_substrate() {
        let mut s = zero_state();
        s[l::GLC] = 10.0;
        let v = flux_rates(&s, DEFAULT_VALUES).unwrap();
        assert_eq!(v[1], 0.0);
    }

    #[test]
    fn negative_concentration_rejected() {
        let mut s = zero_state();
        s[l::PYR] = -0.1;
        assert_eq!(flux_rates(&s, DEFAULT_VALUES).unwrap_err(), Error::InvalidState { index: l::PYR, value: -0.1 });
    }

    #[test]
    fn growth_limits() {
        let g = GrowthConstants::default();
        let mut s = zero_state();
        s[l::GLC] = 1e12;
        s[l::EGLN] = 1e12;
        let (mu, mu_d) = growth_rate(&s, &g).unwrap();
        assert_eq!(mu_d, 0.0);
        assert!((mu - g.mu_max).abs() < 1e-9);
        s[l::ELAC] = g.k_dlac;
        let (_, mu_d) = growth_rate(&s, &g).unwrap();
        assert!((mu_d - g.k_d / 2.0).abs() < 1e-15);
    }

    #[test]
    fn fluxes_bounded_by_rate_constants() {
        let p = KineticParams::reference();
        let vals = p.values();
        // (forward v_max, reverse v_max) per reaction
        use P::*;
        let caps: [(P, Option<P>); N_REACTIONS] = [
            (VmaxHK, None),
            (VmaxPGI, None),
            (VmaxPFK, None),
            (VmaxPGK, None),
            (VmaxPK, None),
            (VmaxLDHf, Some(VmaxLDHr)),
            (VmaxPyrT, None),
            (VmaxLacTf, Some(VmaxLacTr)),
            (VmaxOP, None),
            (VmaxNOP, None),
            (VmaxPDH, None),
            (VmaxCS, None),
            (VmaxCITSf, Some(VmaxCITSr)),
            (VmaxAKGDH, None),
            (VmaxSDH, None),
            (VmaxFUMf, Some(VmaxFUMr)),
            (VmaxMDHf, Some(VmaxMDHr)),
            (VmaxME, None),
            (VmaxPC, None),
            (VmaxGLNSf, Some(VmaxGLNSr)),
            (VmaxGLDHf, Some(VmaxGLDHr)),
            (VmaxAlaTAf, Some(VmaxAlaTAr)),
            (VmaxAlaT, None),
            (VmaxGluT, None),
            (VmaxGlnT, None),
            (VmaxSAL, None),
            (VmaxASTAf, Some(VmaxASTAr)),
            (VmaxAspT, None),
            (VmaxACL, None),
            (VmaxGrowth, None),
        ];
        let mut seed = 12345u64;
        for _ in 0..500 {
            let mut s = zero_state();
            for x in s.iter_mut() {
                seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                *x = (seed >> 11) as f64 / (1u64 << 53) as f64 * 50.0;
            }
            let v = flux_rates(&s, vals).unwrap();
            for (r, (f, rev)) in caps.iter().enumerate() {
                let hi = vals[f.idx()];
                let lo = rev.map_or(0.0, |q| vals[q.idx()]);
                assert!(v[r] <= hi && v[r] >= -lo, "reaction {r}: {}", v[r]);
            }
        }
    }

    #[test]
    fn growth_monotone_in_glucose_and_lactate() {
        let g = GrowthConstants::default();
        let mut s = zero_state();
        s[l::EGLN] = 2.0;
        s[l::ELAC] = 5.0;
        let mut last = (-1.0, -1.0);
        for i in 0..50 {
            s[l::GLC] = i as f64 * 0.5;
            let (mu, _) = growth_rate(&s, &g).unwrap();
            assert!(mu >= last.0);
            last.0 = mu;
        }
        for i in 0..50 {
            s[l::ELAC] = i as f64;
            let (_, mu_d) = growth_rate(&s, &g).unwrap();
            assert!(mu_d >= last.1);
            last.1 = mu_d;
        }
    }
}
