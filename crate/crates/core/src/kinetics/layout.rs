//! Index layout of the 34-entry culture state: cell density followed by 33
//! metabolite concentrations (mM).

/// Number of state entries.
pub const STATE_DIM: usize = 34;
/// Number of metabolite entries (state minus cell density).
pub const N_METABOLITES: usize = 33;

pub const X: usize = 0;
pub const GLC: usize = 1;
pub const G6P: usize = 2;
pub const F6P: usize = 3;
pub const GAP: usize = 4;
pub const PEP: usize = 5;
pub const PYR: usize = 6;
pub const LAC: usize = 7;
pub const ELAC: usize = 8;
pub const EPYR: usize = 9;
pub const RU5P: usize = 10;
pub const ACCOA: usize = 11;
pub const CIT: usize = 12;
pub const AKG: usize = 13;
pub const SUC: usize = 14;
pub const FUM: usize = 15;
pub const MAL: usize = 16;
pub const OAA: usize = 17;
pub const GLN: usize = 18;
pub const EGLN: usize = 19;
pub const GLU: usize = 20;
pub const ALA: usize = 21;
pub const ASP: usize = 22;
pub const EASP: usize = 23;
pub const SER: usize = 24;
pub const GLY: usize = 25;
pub const NH4: usize = 26;
pub const EALA: usize = 27;
pub const EGLU: usize = 28;
pub const CO2: usize = 29;
pub const ESER: usize = 30;
pub const EGLY: usize = 31;
pub const ENH4: usize = 32;
pub const BIOM: usize = 33;

/// State entry names in index order.
pub const NAMES: [&str; STATE_DIM] = [
    "X", "GLC", "G6P", "F6P", "GAP", "PEP", "PYR", "LAC", "ELAC", "EPYR", "Ru5P", "AcCoA", "CIT", "AKG", "SUC",
    "FUM", "MAL", "OAA", "GLN", "EGLN", "GLU", "ALA", "ASP", "EASP", "SER", "GLY", "NH4", "EALA", "EGLU", "CO2",
    "ESER", "EGLY", "ENH4", "BIOM",
];

/// State index of a named entry (case-insensitive).
pub fn index_of(name: &str) -> Option<usize> {
    NAMES.iter().position(|n| n.eq_ignore_ascii_case(name))
}

/// Metabolite-vector index (state index minus one) for a metabolite state index.
#[inline]
pub const fn metabolite(state_index: usize) -> usize {
    state_index - 1
}
