//! Stoichiometry files in matrix-market coordinate layout. Each entry line
//! is `reaction metabolite coefficient` with 1-based indices; the size line is
//! `reactions metabolites entries`.

use std::fmt::Write as _;
use std::path::Path;

use actorsim_core::kinetics::stoich::{Stoichiometry, N_REACTIONS, REACTION_NAMES};
use actorsim_core::kinetics::layout::{NAMES, N_METABOLITES};

use crate::error::{HarnessError, Result};

const HEADER: &str = "%%MatrixMarket matrix coordinate real general";

/// Default network in file form.
pub const DEFAULT_FILE: &str = include_str!("../data/stoichiometry.mtx");

fn cfg(line: usize, msg: &str) -> HarnessError {
    HarnessError::Config(format!("stoichiometry line {line}: {msg}"))
}

pub fn parse(text: &str) -> Result<Stoichiometry> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    match lines.next() {
        Some((_, l)) if l.starts_with("%%MatrixMarket") => {}
        _ => return Err(cfg(1, "missing %%MatrixMarket header")),
    }
    let mut body = lines
        .map(|(n, l)| (n, l.split('%').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());
    let (n, size) = body.next().ok_or_else(|| cfg(1, "missing size line"))?;
    let dims: Vec<usize> = size.split_whitespace().map(|t| t.parse().map_err(|_| cfg(n, "bad size line"))).collect::<Result<_>>()?;
    if dims.len() != 3 || dims[0] != N_REACTIONS || dims[1] != N_METABOLITES {
        return Err(cfg(n, "size line must read `30 33 <entries>`"));
    }
    let mut triplets = Vec::with_capacity(dims[2]);
    for (n, line) in body {
        let t: Vec<&str> = line.split_whitespace().collect();
        if t.len() != 3 {
            return Err(cfg(n, "expected `reaction metabolite coefficient`"));
        }
        let r: usize = t[0].parse().map_err(|_| cfg(n, "bad reaction index"))?;
        let m: usize = t[1].parse().map_err(|_| cfg(n, "bad metabolite index"))?;
        let c: f64 = t[2].parse().map_err(|_| cfg(n, "bad coefficient"))?;
        if r == 0 || m == 0 {
            return Err(cfg(n, "indices are 1-based"));
        }
        triplets.push((r - 1, m - 1, c));
    }
    if triplets.len() != dims[2] {
        return Err(cfg(n, "entry count does not match the size line"));
    }
    Stoichiometry::from_triplets(triplets).map_err(|e| HarnessError::Config(e.to_string()))
}

pub fn load(path: &Path) -> Result<Stoichiometry> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
    parse(&text)
}

pub fn render(n: &Stoichiometry) -> String {
    let t = n.triplets();
    let mut out = format!("{HEADER}\n% rows: reactions, columns: metabolites (1-based)\n");
    let _ = writeln!(out, "{N_REACTIONS} {N_METABOLITES} {}", t.len());
    let mut last = usize::MAX;
    for (r, m, c) in t {
        if r != last {
            let _ = writeln!(out, "% {}", REACTION_NAMES[r]);
            last = r;
        }
        let _ = writeln!(out, "{} {} {}  % {}", r + 1, m + 1, c, NAMES[m + 1]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embedded_default_matches_network() {
        assert_eq!(parse(DEFAULT_FILE).unwrap(), Stoichiometry::default());
        assert_eq!(parse(&render(&Stoichiometry::default())).unwrap(), Stoichiometry::default());
    }

    #[test]
    fn rejects_malformed() {
        assert!(parse("30 33 0\n").is_err());
        assert!(parse(&format!("{HEADER}\n30 33 1\n0 1 1.0\n")).is_err());
        assert!(parse(&format!("{HEADER}\n30 33 2\n1 1 1.0\n")).is_err());
        assert!(parse(&format!("{HEADER}\n30 34 0\n")).is_err());
    }
}
