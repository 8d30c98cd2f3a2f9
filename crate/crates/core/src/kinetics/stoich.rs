//! Stoichiometry of the 30 net reactions over the 33 metabolites.

use alloc::vec;
use alloc::vec::Vec;

use super::layout::{self as l, N_METABOLITES};
use crate::error::{invalid, Result};

pub const N_REACTIONS: usize = 30;

pub const REACTION_NAMES: [&str; N_REACTIONS] = [
    "HK", "PGI", "PFK/ALD", "PGK", "PK", "LDH", "PyrT", "LacT", "OP", "NOP", "PDH", "CS", "CITS/ISOD", "AKGDH", "SDH",
    "FUM", "MDH", "ME", "PC", "GLNS", "GLDH", "AlaTA", "AlaT", "GluT", "GlnT", "SAL", "ASTA", "AspT", "ACL", "growth",
];

/// One nonzero entry: `(reaction, metabolite, coefficient)` with the
/// metabolite indexed into the 33-entry metabolite vector.
pub type Triplet = (usize, usize, i32);

const fn m(state_index: usize) -> usize {
    l::metabolite(state_index)
}

/// Default network. Reaction 30 (biomass) is provisional: it drains one unit of
/// each precursor into the `BIOM` pool.
pub const DEFAULT_TRIPLETS: &[Triplet] = &[
    (0, m(l::GLC), -1),
    (0, m(l::G6P), 1),
    (1, m(l::G6P), -1),
    (1, m(l::F6P), 1),
    (2, m(l::F6P), -1),
    (2, m(l::GAP), 2),
    (3, m(l::GAP), -1),
    (3, m(l::PEP), 1),
    (4, m(l::PEP), -1),
    (4, m(l::PYR), 1),
    (5, m(l::PYR), -1),
    (5, m(l::LAC), 1),
    (6, m(l::EPYR), -1),
    (6, m(l::PYR), 1),
    (7, m(l::LAC), -1),
    (7, m(l::ELAC), 1),
    (8, m(l::G6P), -1),
    (8, m(l::RU5P), 1),
    (8, m(l::CO2), 1),
    (9, m(l::RU5P), -3),
    (9, m(l::F6P), 2),
    (9, m(l::GAP), 1),
    (10, m(l::PYR), -1),
    (10, m(l::ACCOA), 1),
    (10, m(l::CO2), 1),
    (11, m(l::ACCOA), -1),
    (11, m(l::OAA), -1),
    (11, m(l::CIT), 1),
    (12, m(l::CIT), -1),
    (12, m(l::AKG), 1),
    (12, m(l::CO2), 1),
    (13, m(l::AKG), -1),
    (13, m(l::SUC), 1),
    (13, m(l::CO2), 1),
    (14, m(l::SUC), -1),
    (14, m(l::FUM), 1),
    (15, m(l::FUM), -1),
    (15, m(l::MAL), 1),
    (16, m(l::MAL), -1),
    (16, m(l::OAA), 1),
    (17, m(l::MAL), -1),
    (17, m(l::PYR), 1),
    (17, m(l::CO2), 1),
    (18, m(l::PYR), -1),
    (18, m(l::CO2), -1),
    (18, m(l::OAA), 1),
    (19, m(l::GLN), -1),
    (19, m(l::GLU), 1),
    (19, m(l::NH4), 1),
    (20, m(l::GLU), -1),
    (20, m(l::AKG), 1),
    (20, m(l::NH4), 1),
    (21, m(l::GLU), -1),
    (21, m(l::PYR), -1),
    (21, m(l::AKG), 1),
    (21, m(l::ALA), 1),
    (22, m(l::ALA), -1),
    (22, m(l::EALA), 1),
    (23, m(l::GLU), -1),
    (23, m(l::EGLU), 1),
    (24, m(l::EGLN), -1),
    (24, m(l::GLN), 1),
    (25, m(l::SER), -1),
    (25, m(l::PYR), 1),
    (25, m(l::NH4), 1),
    (26, m(l::ASP), -1),
    (26, m(l::AKG), -1),
    (26, m(l::GLU), 1),
    (26, m(l::OAA), 1),
    (27, m(l::EASP), -1),
    (27, m(l::ASP), 1),
    (28, m(l::CIT), -1),
    (28, m(l::ACCOA), 1),
    (28, m(l::OAA), 1),
    (29, m(l::GLN), -1),
    (29, m(l::GLC), -1),
    (29, m(l::GLU), -1),
    (29, m(l::ALA), -1),
    (29, m(l::ASP), -1),
    (29, m(l::SER), -1),
    (29, m(l::GLY), -1),
    (29, m(l::BIOM), 1),
];

/// Sparse `33 x 30` stoichiometry matrix, stored column by column.
#[derive(Debug, Clone, PartialEq)]
pub struct Stoichiometry {
    columns: Vec<Vec<(usize, f64)>>,
}

impl Default for Stoichiometry {
    fn default() -> Self {
        Self::from_triplets(DEFAULT_TRIPLETS.iter().map(|&(r, m, c)| (r, m, c as f64))).expect("valid default")
    }
}

impl Stoichiometry {
    pub fn from_triplets<I: IntoIterator<Item = (usize, usize, f64)>>(triplets: I) -> Result<Self> {
        let mut columns = vec![Vec::new(); N_REACTIONS];
        for (r, met, c) in triplets {
            if r >= N_REACTIONS || met >= N_METABOLITES {
                return Err(invalid("stoichiometry triplet out of range"));
            }
            if !c.is_finite() {
                return Err(invalid("stoichiometric coefficient must be finite"));
            }
            if c == 0.0 {
                continue;
            }
            let col: &mut Vec<(usize, f64)> = &mut columns[r];
            if col.iter().any(|(mm, _)| *mm == met) {
                return Err(invalid("duplicate stoichiometry entry"));
            }
            col.push((met, c));
        }
        Ok(Self { columns })
    }

    pub fn column(&self, reaction: usize) -> &[(usize, f64)] {
        &self.columns[reaction]
    }

    /// All nonzeros as `(reaction, metabolite, coefficient)`, column order.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        self.columns.iter().enumerate().flat_map(|(r, col)| col.iter().map(move |&(m, c)| (r, m, c))).collect()
    }

    /// Dense entry `N[metabolite, reaction]`.
    pub fn get(&self, metabolite: usize, reaction: usize) -> f64 {
        self.columns[reaction].iter().find(|(m, _)| *m == metabolite).map_or(0.0, |(_, c)| *c)
    }

    /// `du += scale * N v` for a metabolite-rate vector `du`.
    pub fn accumulate<T: crate::dual::Scalar>(&self, fluxes: &[T], scale: T, du: &mut [T]) {
        for (r, col) in self.columns.iter().enumerate() {
            let vr = fluxes[r] * scale;
            for &(met, c) in col {
                du[met] += vr * T::from_f64(c);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinetics::layout::index_of;

    /// Substrates and products of every reaction, by name.
    const ROLES: [(&str, &[&str], &[&str]); N_REACTIONS] = [
        ("HK", &["GLC"], &["G6P"]),
        ("PGI", &["G6P"], &["F6P"]),
        ("PFK/ALD", &["F6P"], &["GAP"]),
        ("PGK", &["GAP"], &["PEP"]),
        ("PK", &["PEP"], &["PYR"]),
        ("LDH", &["PYR"], &["LAC"]),
        ("PyrT", &["EPYR"], &["PYR"]),
        ("LacT", &["LAC"], &["ELAC"]),
        ("OP", &["G6P"], &["Ru5P", "CO2"]),
        ("NOP", &["Ru5P"], &["F6P", "GAP"]),
        ("PDH", &["PYR"], &["AcCoA", "CO2"]),
        ("CS", &["AcCoA", "OAA"], &["CIT"]),
        ("CITS/ISOD", &["CIT"], &["AKG", "CO2"]),
        ("AKGDH", &["AKG"], &["SUC", "CO2"]),
        ("SDH", &["SUC"], &["FUM"]),
        ("FUM", &["FUM"], &["MAL"]),
        ("MDH", &["MAL"], &["OAA"]),
        ("ME", &["MAL"], &["PYR", "CO2"]),
        ("PC", &["PYR", "CO2"], &["OAA"]),
        ("GLNS", &["GLN"], &["GLU", "NH4"]),
        ("GLDH", &["GLU"], &["AKG", "NH4"]),
        ("AlaTA", &["GLU", "PYR"], &["AKG", "ALA"]),
        ("AlaT", &["ALA"], &["EALA"]),
        ("GluT", &["GLU"], &["EGLU"]),
        ("GlnT", &["EGLN"], &["GLN"]),
        ("SAL", &["SER"], &["PYR", "NH4"]),
        ("ASTA", &["ASP", "AKG"], &["GLU", "OAA"]),
        ("AspT", &["EASP"], &["ASP"]),
        ("ACL", &["CIT"], &["AcCoA", "OAA"]),
        ("growth", &["GLN", "GLC", "GLU", "ALA", "ASP", "SER", "GLY"], &["BIOM"]),
    ];

    #[test]
    fn sign_pattern_matches_reaction_roles() {
        let n = Stoichiometry::default();
        for (r, (name, subs, prods)) in ROLES.iter().enumerate() {
            assert_eq!(REACTION_NAMES[r], *name);
            let mut expected = [0i32; N_METABOLITES];
            for s in *subs {
                expected[index_of(s).unwrap() - 1] = -1;
            }
            for p in *prods {
                expected[index_of(p).unwrap() - 1] = 1;
            }
            for met in 0..N_METABOLITES {
                let c = n.get(met, r);
                assert_eq!(c.signum() as i32 * (c != 0.0) as i32, expected[met], "reaction {name}, metabolite {met}");
            }
        }
    }

    #[test]
    fn rejects_out_of_range_and_duplicates() {
        assert!(Stoichiometry::from_triplets([(30, 0, 1.0)]).is_err());
        assert!(Stoichiometry::from_triplets([(0, 33, 1.0)]).is_err());
        assert!(Stoichiometry::from_triplets([(0, 1, 1.0), (0, 1, 2.0)]).is_err());
    }

    #[test]
    fn triplet_round_trip() {
        let n = Stoichiometry::default();
        let again = Stoichiometry::from_triplets(n.triplets()).unwrap();
        assert_eq!(n, again);
    }
}
