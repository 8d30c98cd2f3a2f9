//! Kinetic parameter files: nested key/value text whose dotted keys are the
//! parameter names (`v_max.HK = 2.92`, `K_m.GLC = 1.46`), plus optional
//! `[growth]`, `[initial_state]` and `[fresh_medium]` sections.

use std::fmt::Write as _;
use std::path::Path;

use actorsim_core::kinetics::layout::{self, NAMES, STATE_DIM};
use actorsim_core::kinetics::{GrowthConstants, KineticParams, Param, DEFAULT_INITIAL_STATE};

use crate::error::{HarnessError, Result};

/// Everything configurable about the culture emulator except the network.
#[derive(Debug, Clone, PartialEq)]
pub struct KineticSetup {
    pub params: KineticParams,
    pub growth: GrowthConstants,
    /// Base inoculation state (34 entries).
    pub initial: Vec<f64>,
    /// Fresh-medium metabolite profile (33 entries).
    pub fresh: Vec<f64>,
}

impl Default for KineticSetup {
    fn default() -> Self {
        Self {
            params: KineticParams::reference(),
            growth: GrowthConstants::default(),
            initial: DEFAULT_INITIAL_STATE.to_vec(),
            fresh: DEFAULT_INITIAL_STATE[1..].to_vec(),
        }
    }
}

const GROUPS: [&str; 4] = ["v_max", "K_m", "K_i", "K_a"];

fn cfg(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

fn number(v: &toml::Value, key: &str) -> Result<f64> {
    match v {
        toml::Value::Float(f) => Ok(*f),
        toml::Value::Integer(i) => Ok(*i as f64),
        _ => Err(cfg(format!("{key}: expected a number"))),
    }
}

fn table<'a>(v: &'a toml::Value, key: &str) -> Result<&'a toml::Table> {
    v.as_table().ok_or_else(|| cfg(format!("{key}: expected a table")))
}

pub fn parse(text: &str) -> Result<KineticSetup> {
    let root: toml::Table = text.parse().map_err(|e: toml::de::Error| cfg(format!("parameter file: {e}")))?;
    let mut setup = KineticSetup::default();
    let mut fresh_given = false;
    for (key, value) in &root {
        match key.as_str() {
            g if GROUPS.contains(&g) => {
                for (name, v) in table(value, g)? {
                    let full = format!("{g}.{name}");
                    let p = Param::from_name(&full).ok_or_else(|| cfg(format!("unknown parameter `{full}`")))?;
                    setup.params.set(p, number(v, &full)?).map_err(|e| cfg(format!("{full}: {e}")))?;
                }
            }
            "growth" => {
                for (name, v) in table(value, key)? {
                    let x = number(v, name)?;
                    let g = &mut setup.growth;
                    match name.as_str() {
                        "mu_max" => g.mu_max = x,
                        "k_d" => g.k_d = x,
                        "k_dlac" => g.k_dlac = x,
                        "k_glc" => g.k_glc = x,
                        "k_ilac" => g.k_ilac = x,
                        _ => return Err(cfg(format!("unknown growth constant `{name}`"))),
                    }
                }
            }
            "initial_state" => {
                for (name, v) in table(value, key)? {
                    let i = layout::index_of(name).ok_or_else(|| cfg(format!("unknown state entry `{name}`")))?;
                    setup.initial[i] = number(v, name)?;
                }
            }
            "fresh_medium" => {
                fresh_given = true;
                for (name, v) in table(value, key)? {
                    let i = layout::index_of(name)
                        .filter(|&i| i > 0)
                        .ok_or_else(|| cfg(format!("unknown metabolite `{name}`")))?;
                    setup.fresh[i - 1] = number(v, name)?;
                }
            }
            other => return Err(cfg(format!("unknown section `{other}` in parameter file"))),
        }
    }
    if !fresh_given {
        setup.fresh = setup.initial[1..].to_vec();
    }
    if setup.initial.iter().chain(&setup.fresh).any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(cfg("initial state and fresh medium must be finite and non-negative"));
    }
    Ok(setup)
}

pub fn load(path: &Path) -> Result<KineticSetup> {
    let text = std::fs::read_to_string(path).map_err(|e| cfg(format!("{}: {e}", path.display())))?;
    parse(&text)
}

fn key(name: &str) -> String {
    if name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
        name.to_string()
    } else {
        format!("\"{name}\"")
    }
}

/// Renders a setup in the format read by [`parse`].
pub fn render(setup: &KineticSetup) -> String {
    let mut out = String::new();
    for g in GROUPS {
        let _ = writeln!(out, "[{g}]");
        for p in Param::ALL {
            if let Some(rest) = p.name().strip_prefix(g).and_then(|r| r.strip_prefix('.')) {
                let _ = writeln!(out, "{} = {:?}", key(rest), setup.params.get(*p));
            }
        }
        out.push('\n');
    }
    let g = &setup.growth;
    let _ = writeln!(out, "[growth]");
    for (k, v) in [("mu_max", g.mu_max), ("k_d", g.k_d), ("k_dlac", g.k_dlac), ("k_glc", g.k_glc), ("k_ilac", g.k_ilac)] {
        let _ = writeln!(out, "{k} = {v:?}");
    }
    let _ = writeln!(out, "\n[initial_state]");
    for i in 0..STATE_DIM {
        let _ = writeln!(out, "{} = {:?}", NAMES[i], setup.initial[i]);
    }
    let _ = writeln!(out, "\n[fresh_medium]");
    for i in 1..STATE_DIM {
        let _ = writeln!(out, "{} = {:?}", NAMES[i], setup.fresh[i - 1]);
    }
    out
}
