//! The 73 kinetic constants of the metabolic network.
//!
//! Values marked `table` are the published reference values for the
//! calibration parameters; everything else is a labeled default chosen to give
//! a stable, non-stiff culture trajectory and can be overridden from a
//! parameter file.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::model::Bounds;

macro_rules! kinetic_params {
    ($( $id:ident = $name:literal : $default:expr ),* $(,)?) => {
        /// Kinetic parameter identifiers, in parameter-vector order.
        #[allow(non_camel_case_types)]
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
        #[repr(usize)]
        pub enum Param { $( $id ),* }

        /// Parameter names as used in parameter files.
        pub const PARAM_NAMES: &[&str] = &[ $( $name ),* ];

        /// Reference values.
        pub const DEFAULT_VALUES: &[f64] = &[ $( $default ),* ];

        impl Param {
            pub const ALL: &'static [Param] = &[ $( Param::$id ),* ];
        }
    };
}

kinetic_params! {
    // maximum rates (mM/h per unit cell density)
    VmaxHK = "v_max.HK": 2.92,                  // table
    VmaxPGI = "v_max.PGI": 1.43,                // table
    VmaxPFK = "v_max.PFK/ALD": 2.16,            // table
    VmaxPGK = "v_max.PGK": 4.00,                // table
    VmaxPK = "v_max.PK": 3.98,                  // table
    VmaxLDHf = "v_max.fLDH": 3.28,              // table
    VmaxLDHr = "v_max.rLDH": 0.30,
    VmaxPyrT = "v_max.PyrT": 0.17,              // table
    VmaxLacTf = "v_max.fLacT": 2.97,            // table
    VmaxLacTr = "v_max.rLacT": 0.20,
    VmaxOP = "v_max.OP": 0.01,                  // table
    VmaxNOP = "v_max.NOP": 0.02,                // table
    VmaxPDH = "v_max.PDH": 0.22,                // table
    VmaxCS = "v_max.CS": 0.43,                  // table
    VmaxCITSf = "v_max.fCITS/ISOD": 1.32,       // table
    VmaxCITSr = "v_max.rCITS/ISOD": 0.10,
    VmaxAKGDH = "v_max.AKGDH": 2.84,            // table
    VmaxSDH = "v_max.SDH": 0.32,                // table
    VmaxFUMf = "v_max.fFUM": 0.32,              // table
    VmaxFUMr = "v_max.rFUM": 0.05,
    VmaxMDHf = "v_max.fMDH": 1.44,              // table
    VmaxMDHr = "v_max.rMDH": 0.10,
    VmaxME = "v_max.ME": 0.51,                  // table
    VmaxPC = "v_max.PC": 0.06,                  // table
    VmaxGLNSf = "v_max.fGLNS": 1.14,            // table
    VmaxGLNSr = "v_max.rGLNS": 0.05,
    VmaxGLDHf = "v_max.fGLDH": 0.26,            // table
    VmaxGLDHr = "v_max.rGLDH": 0.05,
    VmaxAlaTAf = "v_max.fAlaTA": 0.82,          // table
    VmaxAlaTAr = "v_max.rAlaTA": 0.10,
    VmaxAlaT = "v_max.AlaT": 0.47,              // table
    VmaxGluT = "v_max.GluT": 0.17,              // table
    VmaxGlnT = "v_max.GlnT": 1.81,              // table
    VmaxSAL = "v_max.SAL": 0.01,                // table
    VmaxASTAf = "v_max.fASTA": 0.20,
    VmaxASTAr = "v_max.rASTA": 0.05,
    VmaxAspT = "v_max.AspT": 0.10,
    VmaxACL = "v_max.ACL": 0.10,
    VmaxGrowth = "v_max.growth": 0.02,
    // half-saturation constants (mM)
    KmGLC = "K_m.GLC": 1.46,                    // table
    KmG6P = "K_m.G6P": 0.50,
    KmF6P = "K_m.F6P": 0.50,
    KmGAP = "K_m.GAP": 1.00,
    KmPEP = "K_m.PEP": 0.50,
    KmPYR = "K_m.PYR": 0.21,                    // table
    KmLAC = "K_m.LAC": 1.00,
    KmEPYR = "K_m.EPYR": 0.50,
    KmELAC = "K_m.ELAC": 20.0,
    KmRU5P = "K_m.Ru5P": 0.02,                  // table
    KmACCOA = "K_m.AcCoA": 0.09,                // table
    KmOAA = "K_m.OAA": 0.08,                    // table
    KmCIT = "K_m.CIT": 0.39,                    // table
    KmAKG = "K_m.AKG": 2.92,                    // table
    KmSUC = "K_m.SUC": 0.50,
    KmFUM = "K_m.FUM": 0.50,
    KmMAL = "K_m.MAL": 0.11,                    // table
    KmGLN = "K_m.GLN": 0.26,                    // table
    KmGLU = "K_m.GLU": 0.30,                    // table
    KmNH4 = "K_m.NH4": 0.17,                    // table
    KmALA = "K_m.ALA": 0.20,                    // table
    KmEGLN = "K_m.EGLN": 1.00,                  // table
    KmSER = "K_m.SER": 0.01,                    // table
    KmASP = "K_m.ASP": 0.50,
    KmEASP = "K_m.EASP": 0.10,
    KmGLY = "K_m.GLY": 0.30,
    // inhibition constants (mM)
    KiG6P = "K_i.G6P": 2.00,
    KiLacHK = "K_i.LactoHK": 20.0,
    KiPYR = "K_i.PYR": 0.50,
    KiLacPyr = "K_i.LactoPyr": 20.0,
    KiLacGLNS = "K_i.LactoGLNS": 20.0,
    KiGLN = "K_i.GLN": 2.00,
    // activation constants (mM)
    KaF6P = "K_a.F6P": 0.10,
    KaGLN = "K_a.GLN": 0.50,
}

pub const N_PARAMS: usize = 73;

const _: () = assert!(PARAM_NAMES.len() == N_PARAMS && DEFAULT_VALUES.len() == N_PARAMS);

impl Param {
    pub const fn idx(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        PARAM_NAMES[self as usize]
    }

    pub fn from_name(name: &str) -> Option<Param> {
        PARAM_NAMES.iter().position(|n| *n == name).map(|i| Param::ALL[i])
    }
}

/// The twenty parameters calibrated in every case study.
pub const CASE_20: &[Param] = &[
    Param::VmaxHK,
    Param::VmaxPGI,
    Param::VmaxPFK,
    Param::VmaxPGK,
    Param::VmaxPK,
    Param::VmaxLDHf,
    Param::VmaxPyrT,
    Param::VmaxLacTf,
    Param::VmaxOP,
    Param::VmaxNOP,
    Param::VmaxPDH,
    Param::VmaxCS,
    Param::VmaxME,
    Param::VmaxMDHf,
    Param::VmaxGlnT,
    Param::KmNH4,
    Param::KmALA,
    Param::KmGLC,
    Param::KmGLN,
    Param::KmGLU,
];

/// Ten more for the 30-parameter case.
pub const CASE_30_EXTRA: &[Param] = &[
    Param::VmaxCITSf,
    Param::VmaxAKGDH,
    Param::VmaxSDH,
    Param::VmaxFUMf,
    Param::VmaxPC,
    Param::VmaxGLNSf,
    Param::VmaxGLDHf,
    Param::VmaxAlaTAf,
    Param::VmaxAlaT,
    Param::VmaxGluT,
];

/// Ten more for the 40-parameter case.
pub const CASE_40_EXTRA: &[Param] = &[
    Param::KmSER,
    Param::VmaxSAL,
    Param::KmRU5P,
    Param::KmPYR,
    Param::KmACCOA,
    Param::KmOAA,
    Param::KmCIT,
    Param::KmAKG,
    Param::KmMAL,
    Param::KmEGLN,
];

/// Calibrated parameters for a case study, in calibration-vector order.
pub fn case_study(n: usize) -> Result<Vec<Param>> {
    let mut out: Vec<Param> = CASE_20.to_vec();
    match n {
        20 => {}
        30 => out.extend_from_slice(CASE_30_EXTRA),
        40 => {
            out.extend_from_slice(CASE_30_EXTRA);
            out.extend_from_slice(CASE_40_EXTRA);
        }
        _ => return Err(invalid("case study must be 20, 30 or 40")),
    }
    Ok(out)
}

/// Full parameter vector with a calibration mask and per-entry bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct KineticParams {
    values: Vec<f64>,
    /// Calibrated entries, in calibration-vector order.
    calibrated: Vec<Param>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl KineticParams {
    /// Reference values, 20-parameter mask, bounds `[1e-3, 10] x value`.
    pub fn reference() -> Self {
        let values = DEFAULT_VALUES.to_vec();
        Self::from_values(values, CASE_20.to_vec()).expect("reference values are positive")
    }

    pub fn from_values(values: Vec<f64>, calibrated: Vec<Param>) -> Result<Self> {
        if values.len() != N_PARAMS {
            return Err(invalid("kinetic parameter vector must have 73 entries"));
        }
        if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(invalid("kinetic parameters must be strictly positive"));
        }
        let lower = values.iter().map(|v| v * 1e-3).collect();
        let upper = values.iter().map(|v| v * 10.0).collect();
        let mut p = Self { values, calibrated: Vec::new(), lower, upper };
        p.set_calibrated(calibrated)?;
        Ok(p)
    }

    pub fn set_calibrated(&mut self, calibrated: Vec<Param>) -> Result<()> {
        for (i, a) in calibrated.iter().enumerate() {
            if calibrated[i + 1..].contains(a) {
                return Err(invalid("calibration mask lists a parameter twice"));
            }
        }
        self.calibrated = calibrated;
        Ok(())
    }

    pub fn set_bounds(&mut self, param: Param, lower: f64, upper: f64) -> Result<()> {
        if !(lower > 0.0 && lower <= upper) {
            return Err(invalid("bounds need 0 < lower <= upper"));
        }
        self.lower[param.idx()] = lower;
        self.upper[param.idx()] = upper;
        Ok(())
    }

    pub fn set(&mut self, param: Param, value: f64) -> Result<()> {
        if !(value.is_finite() && value > 0.0) {
            return Err(invalid("kinetic parameters must be strictly positive"));
        }
        self.values[param.idx()] = value;
        Ok(())
    }

    pub fn get(&self, param: Param) -> f64 {
        self.values[param.idx()]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn calibrated(&self) -> &[Param] {
        &self.calibrated
    }

    /// Boolean mask over the 73 entries.
    pub fn mask(&self) -> Vec<bool> {
        let mut m = vec![false; N_PARAMS];
        for p in &self.calibrated {
            m[p.idx()] = true;
        }
        m
    }

    /// The calibrated subvector `beta`.
    pub fn beta(&self) -> Vec<f64> {
        self.calibrated.iter().map(|p| self.values[p.idx()]).collect()
    }

    pub fn beta_bounds(&self) -> Bounds {
        Bounds {
            lower: self.calibrated.iter().map(|p| self.lower[p.idx()]).collect(),
            upper: self.calibrated.iter().map(|p| self.upper[p.idx()]).collect(),
        }
    }

    /// Copy with the calibrated entries replaced by `beta`.
    pub fn with_beta(&self, beta: &[f64]) -> Result<Self> {
        if beta.len() != self.calibrated.len() {
            return Err(invalid("beta length does not match the calibration mask"));
        }
        let mut out = self.clone();
        for (p, &b) in self.calibrated.iter().zip(beta) {
            out.set(*p, b)?;
        }
        Ok(out)
    }

    pub fn calibrated_names(&self) -> Vec<String> {
        self.calibrated.iter().map(|p| String::from(p.name())).collect()
    }
}
