//! Atomic configuration space with a bounded number of excitations.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SparseMatrix;
use crate::num::{cr, Real, C};

/// Largest atom number for which the untruncated `3^n` space is built.
pub const MAX_FULL_ATOMS: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AtomLevel {
    G,
    E,
    S,
}

impl AtomLevel {
    pub const ALL: [AtomLevel; 3] = [AtomLevel::G, AtomLevel::E, AtomLevel::S];

    pub fn is_excited(self) -> bool {
        self != AtomLevel::G
    }
}

/// Maximum number of atoms allowed outside |g>.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Truncation {
    One,
    Two,
    Full,
}

impl Truncation {
    fn max_excitations(self, n: usize) -> usize {
        match self {
            Truncation::One => 1.min(n),
            Truncation::Two => 2.min(n),
            Truncation::Full => n,
        }
    }
}

/// Configurations ordered by excitation number, then lexicographically
/// (atom 0 most significant, `g < e < s`).
#[derive(Clone, Debug)]
pub struct TruncatedBasis {
    n: usize,
    truncation: Truncation,
    configs: Vec<Box<[AtomLevel]>>,
    excitation: Vec<usize>,
    index: HashMap<Box<[AtomLevel]>, usize>,
}

impl TruncatedBasis {
    pub fn new(n: usize, truncation: Truncation) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("basis needs at least one atom".into()));
        }
        if truncation == Truncation::Full && n > MAX_FULL_ATOMS {
            return Err(Error::TooLarge(format!(
                "full 3^{n} space refused (limit n <= {MAX_FULL_ATOMS})"
            )));
        }
        let max_exc = truncation.max_excitations(n);
        let mut configs = Vec::new();
        let mut excitation = Vec::new();
        for k in 0..=max_exc {
            let mut block = Vec::new();
            let mut positions = Vec::with_capacity(k);
            enumerate_excited(n, k, 0, &mut positions, &mut block);
            block.sort();
            excitation.extend(std::iter::repeat_n(k, block.len()));
            configs.extend(block);
        }
        let index = configs
            .iter()
            .enumerate()
            .map(|(i, c)| (c.clone(), i))
            .collect();
        Ok(Self {
            n,
            truncation,
            configs,
            excitation,
            index,
        })
    }

    /// Closed-form dimension of the space.
    pub fn expected_dim(n: usize, truncation: Truncation) -> usize {
        match truncation {
            Truncation::One => 1 + 2 * n,
            Truncation::Two if n == 1 => 3,
            Truncation::Two => 1 + 2 * n + 2 * n * (n - 1),
            Truncation::Full => 3usize.pow(n as u32),
        }
    }

    pub fn n_atoms(&self) -> usize {
        self.n
    }

    pub fn truncation(&self) -> Truncation {
        self.truncation
    }

    pub fn max_excitations(&self) -> usize {
        self.truncation.max_excitations(self.n)
    }

    pub fn dim(&self) -> usize {
        self.configs.len()
    }

    pub fn config(&self, i: usize) -> &[AtomLevel] {
        &self.configs[i]
    }

    pub fn configs(&self) -> impl Iterator<Item = &[AtomLevel]> {
        self.configs.iter().map(|c| &c[..])
    }

    pub fn excitation(&self, i: usize) -> usize {
        self.excitation[i]
    }

    pub fn index_of(&self, config: &[AtomLevel]) -> Option<usize> {
        self.index.get(config).copied()
    }

    /// Ordinals of all configurations with exactly `k` excitations.
    pub fn block_indices(&self, k: usize) -> Vec<usize> {
        (0..self.dim()).filter(|&i| self.excitation[i] == k).collect()
    }

    /// Ordinal of `|..e_j..>` (atom `j` excited, all others in g).
    pub fn single_excited(&self, j: usize, level: AtomLevel) -> Option<usize> {
        let mut c = vec![AtomLevel::G; self.n];
        c[j] = level;
        self.index_of(&c)
    }
}

fn enumerate_excited(
    n: usize,
    k: usize,
    start: usize,
    positions: &mut Vec<usize>,
    out: &mut Vec<Box<[AtomLevel]>>,
) {
    if positions.len() == k {
        let combos = 1usize << k;
        for mask in 0..combos {
            let mut c = vec![AtomLevel::G; n];
            for (bit, &p) in positions.iter().enumerate() {
                c[p] = if mask & (1 << bit) == 0 {
                    AtomLevel::E
                } else {
                    AtomLevel::S
                };
            }
            out.push(c.into_boxed_slice());
        }
        return;
    }
    for p in start..n {
        positions.push(p);
        enumerate_excited(n, k, p + 1, positions, out);
        positions.pop();
    }
}

/// `|a_j><b_j|` on atom `j`, projected onto the basis: elements whose
/// target configuration lies outside the truncation are dropped.
pub fn transition_operator<R: Real>(
    basis: &TruncatedBasis,
    j: usize,
    a: AtomLevel,
    b: AtomLevel,
) -> SparseMatrix<R> {
    assert!(j < basis.n_atoms(), "atom index {j} out of range");
    let mut t = Vec::new();
    let mut target = vec![AtomLevel::G; basis.n_atoms()];
    for (col, cfg) in basis.configs().enumerate() {
        if cfg[j] != b {
            continue;
        }
        target.copy_from_slice(cfg);
        target[j] = a;
        if let Some(row) = basis.index_of(&target) {
            t.push((row, col, cr(R::one())));
        }
    }
    SparseMatrix::from_triplets(basis.dim(), basis.dim(), t)
}

/// `|E> = n^{-1/2} sum_j |e_j>`.
pub fn collective_excited_state<R: Real>(basis: &TruncatedBasis) -> Vec<C<R>> {
    let n = basis.n_atoms();
    let amp = cr(R::one() / R::from_usize_lossy(n).sqrt());
    let mut v = vec![cr(R::zero()); basis.dim()];
    for j in 0..n {
        let i = basis
            .single_excited(j, AtomLevel::E)
            .expect("single excitations are present for max_exc >= 1");
        v[i] = amp;
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::norm;
    use AtomLevel::*;

    #[test]
    fn dimensions_match_closed_forms() {
        for n in 1..=6 {
            for t in [Truncation::One, Truncation::Two, Truncation::Full] {
                let b = TruncatedBasis::new(n, t).unwrap();
                assert_eq!(b.dim(), TruncatedBasis::expected_dim(n, t), "n={n} {t:?}");
            }
        }
        assert_eq!(TruncatedBasis::new(2, Truncation::Two).unwrap().dim(), 9);
        assert_eq!(TruncatedBasis::new(10, Truncation::Two).unwrap().dim(), 201);
        assert_eq!(TruncatedBasis::new(1, Truncation::Full).unwrap().dim(), 3);
    }

    #[test]
    fn full_space_guard() {
        assert!(matches!(
            TruncatedBasis::new(13, Truncation::Full),
            Err(Error::TooLarge(_))
        ));
        assert!(TruncatedBasis::new(0, Truncation::One).is_err());
    }

    #[test]
    fn ordering_is_ground_first_then_lexicographic() {
        let b = TruncatedBasis::new(2, Truncation::Two).unwrap();
        let got: Vec<Vec<AtomLevel>> = b.configs().map(|c| c.to_vec()).collect();
        let want = vec![
            vec![G, G],
            vec![G, E],
            vec![G, S],
            vec![E, G],
            vec![S, G],
            vec![E, E],
            vec![E, S],
            vec![S, E],
            vec![S, S],
        ];
        assert_eq!(got, want);
        for (i, c) in b.configs().enumerate() {
            assert_eq!(b.index_of(c), Some(i));
        }
    }

    #[test]
    fn single_atom_projector() {
        let b = TruncatedBasis::new(1, Truncation::Full).unwrap();
        let see = transition_operator::<f64>(&b, 0, E, E).to_dense();
        let diag: Vec<f64> = (0..3).map(|i| see[(i, i)].re).collect();
        assert_eq!(diag, vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn truncation_drops_out_of_space_targets() {
        let b = TruncatedBasis::new(2, Truncation::One).unwrap();
        let s = transition_operator::<f64>(&b, 0, E, G);
        let gg = b.index_of(&[G, G]).unwrap();
        let eg = b.index_of(&[E, G]).unwrap();
        assert_eq!(s.get(eg, gg), cr(1.0));
        // |g e> and |g s> would map to two-excitation states.
        assert_eq!(s.nnz(), 1);
    }

    #[test]
    fn adjoint_pairs_and_products_on_full_space() {
        let b = TruncatedBasis::new(2, Truncation::Full).unwrap();
        for j in 0..2 {
            let ge = transition_operator::<f64>(&b, j, G, E);
            let eg = transition_operator::<f64>(&b, j, E, G);
            assert_eq!(ge.adjoint(), eg);
            for a in AtomLevel::ALL {
                for bb in AtomLevel::ALL {
                    for cc in AtomLevel::ALL {
                        for d in AtomLevel::ALL {
                            let lhs = transition_operator::<f64>(&b, j, a, bb)
                                .matmul(&transition_operator(&b, j, cc, d));
                            let rhs = if bb == cc {
                                transition_operator::<f64>(&b, j, a, d)
                            } else {
                                SparseMatrix::zeros(b.dim(), b.dim())
                            };
                            assert_eq!(lhs, rhs);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn collective_state_is_normalized() {
        let b1 = TruncatedBasis::new(1, Truncation::One).unwrap();
        let e1 = collective_excited_state::<f64>(&b1);
        assert_eq!(e1[b1.single_excited(0, E).unwrap()], cr(1.0));
        let b4 = TruncatedBasis::new(4, Truncation::Two).unwrap();
        let e4 = collective_excited_state::<f64>(&b4);
        for j in 0..4 {
            assert_eq!(e4[b4.single_excited(j, E).unwrap()], cr(0.5));
        }
        for n in 1..8 {
            let b = TruncatedBasis::new(n, Truncation::One).unwrap();
            assert!((norm(&collective_excited_state::<f64>(&b)) - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn enumeration_is_deterministic() {
        let a = TruncatedBasis::new(5, Truncation::Two).unwrap();
        let b = TruncatedBasis::new(5, Truncation::Two).unwrap();
        assert!(a.configs().eq(b.configs()));
    }
}
