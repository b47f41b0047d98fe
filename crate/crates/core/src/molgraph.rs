//! Categorical heavy-atom molecular graphs over a fixed number of slots.
//!
//! Both atoms and bonds carry an explicit `None` category: an empty slot is
//! an atom of category `None`, and a missing bond is a bond of category
//! `None`. Hydrogens are implicit.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Heavy-atom slots per graph (QM9 molecules have at most nine).
pub const N_SLOTS: usize = 9;
/// Unordered slot pairs `u < v`.
pub const N_PAIRS: usize = N_SLOTS * (N_SLOTS - 1) / 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub enum AtomCategory {
    #[default]
    None = 0,
    C = 1,
    N = 2,
    O = 3,
    F = 4,
}

impl AtomCategory {
    pub const COUNT: usize = 5;
    pub const ALL: [AtomCategory; 5] = [
        AtomCategory::None,
        AtomCategory::C,
        AtomCategory::N,
        AtomCategory::O,
        AtomCategory::F,
    ];
    /// Element categories in histogram order.
    pub const ELEMENTS: [AtomCategory; 4] =
        [AtomCategory::C, AtomCategory::N, AtomCategory::O, AtomCategory::F];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn max_valence(self) -> u8 {
        match self {
            AtomCategory::None => 0,
            AtomCategory::C => 4,
            AtomCategory::N => 3,
            AtomCategory::O => 2,
            AtomCategory::F => 1,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            AtomCategory::None => "*",
            AtomCategory::C => "C",
            AtomCategory::N => "N",
            AtomCategory::O => "O",
            AtomCategory::F => "F",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub enum BondCategory {
    #[default]
    None = 0,
    Single = 1,
    Double = 2,
    Triple = 3,
}

impl BondCategory {
    pub const COUNT: usize = 4;
    pub const ALL: [BondCategory; 4] = [
        BondCategory::None,
        BondCategory::Single,
        BondCategory::Double,
        BondCategory::Triple,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn order(self) -> u8 {
        self as u8
    }

    pub fn from_order(order: u8) -> Option<Self> {
        Self::from_index(order as usize)
    }
}

/// Counts of C, N, O, F.
pub type AtomHistogram = [u32; 4];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct MolGraph {
    atoms: [AtomCategory; N_SLOTS],
    bonds: [[BondCategory; N_SLOTS]; N_SLOTS],
}

impl MolGraph {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Builds a graph from raw slot data, checking every structural
    /// invariant.
    pub fn from_parts(
        atoms: [AtomCategory; N_SLOTS],
        bonds: [[BondCategory; N_SLOTS]; N_SLOTS],
    ) -> Result<Self> {
        for u in 0..N_SLOTS {
            if bonds[u][u] != BondCategory::None {
                return Err(Error::Contract("bond on the diagonal"));
            }
            for v in 0..N_SLOTS {
                if bonds[u][v] != bonds[v][u] {
                    return Err(Error::Contract("bond matrix is not symmetric"));
                }
                if bonds[u][v] != BondCategory::None
                    && (atoms[u] == AtomCategory::None || atoms[v] == AtomCategory::None)
                {
                    return Err(Error::Contract("bond incident to an empty slot"));
                }
            }
        }
        Ok(MolGraph { atoms, bonds })
    }

    /// Graph whose atoms occupy the first slots in the given order.
    pub fn from_atoms(atoms: &[AtomCategory]) -> Result<Self> {
        let mut g = Self::empty();
        for &a in atoms {
            g.push_atom(a)?;
        }
        Ok(g)
    }

    /// Places `atom` in the first empty slot and returns the slot index.
    pub fn push_atom(&mut self, atom: AtomCategory) -> Result<usize> {
        if atom == AtomCategory::None {
            return Err(Error::Contract("cannot push an empty atom"));
        }
        let count = self.atom_count();
        match self.atoms.iter().position(|&a| a == AtomCategory::None) {
            Some(i) => {
                self.atoms[i] = atom;
                Ok(i)
            }
            None => Err(Error::Capacity(count + 1)),
        }
    }

    /// Sets both `u→v` and `v→u`.
    pub fn set_bond(&mut self, u: usize, v: usize, bond: BondCategory) -> Result<()> {
        if u >= N_SLOTS || v >= N_SLOTS || u == v {
            return Err(Error::Contract("bond endpoints must be distinct slots"));
        }
        if bond != BondCategory::None
            && (self.atoms[u] == AtomCategory::None || self.atoms[v] == AtomCategory::None)
        {
            return Err(Error::Contract("bond incident to an empty slot"));
        }
        self.bonds[u][v] = bond;
        self.bonds[v][u] = bond;
        Ok(())
    }

    pub fn atom(&self, u: usize) -> AtomCategory {
        self.atoms[u]
    }

    pub fn atoms(&self) -> &[AtomCategory; N_SLOTS] {
        &self.atoms
    }

    pub fn bond(&self, u: usize, v: usize) -> BondCategory {
        self.bonds[u][v]
    }

    pub fn exists(&self, u: usize) -> bool {
        self.atoms[u] != AtomCategory::None
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.iter().filter(|&&a| a != AtomCategory::None).count()
    }

    /// Occupied slot indices in slot order.
    pub fn occupied(&self) -> Vec<usize> {
        (0..N_SLOTS).filter(|&u| self.exists(u)).collect()
    }

    pub fn neighbors(&self, u: usize) -> impl Iterator<Item = (usize, BondCategory)> + '_ {
        (0..N_SLOTS)
            .filter(move |&v| self.bonds[u][v] != BondCategory::None)
            .map(move |v| (v, self.bonds[u][v]))
    }

    pub fn bond_order_sum(&self, u: usize) -> u32 {
        self.bonds[u].iter().map(|b| b.order() as u32).sum()
    }

    /// Bonded pairs `u < v`.
    pub fn bond_list(&self) -> Vec<(usize, usize, BondCategory)> {
        let mut out = Vec::new();
        for u in 0..N_SLOTS {
            for v in u + 1..N_SLOTS {
                if self.bonds[u][v] != BondCategory::None {
                    out.push((u, v, self.bonds[u][v]));
                }
            }
        }
        out
    }

    /// At least one atom, and no atom exceeds its maximum valence.
    pub fn is_valid(&self) -> bool {
        self.atom_count() >= 1
            && (0..N_SLOTS)
                .filter(|&u| self.exists(u))
                .all(|u| self.bond_order_sum(u) <= self.atoms[u].max_valence() as u32)
    }

    fn components(&self) -> usize {
        let mut seen = [false; N_SLOTS];
        let mut count = 0;
        for s in 0..N_SLOTS {
            if !self.exists(s) || seen[s] {
                continue;
            }
            count += 1;
            let mut stack = alloc::vec![s];
            seen[s] = true;
            while let Some(u) = stack.pop() {
                for (v, _) in self.neighbors(u) {
                    if !seen[v] {
                        seen[v] = true;
                        stack.push(v);
                    }
                }
            }
        }
        count
    }

    /// Whether the existing atoms form one connected component.
    pub fn is_connected(&self) -> Result<bool> {
        if self.atom_count() == 0 {
            return Err(Error::Contract("connectivity of an empty graph"));
        }
        Ok(self.components() == 1)
    }

    /// Cyclomatic number `E − V + C`.
    pub fn ring_count(&self) -> usize {
        let e = self.bond_list().len();
        let v = self.atom_count();
        e + self.components() - v
    }

    pub fn atom_histogram(&self) -> AtomHistogram {
        let mut h = [0u32; 4];
        for a in self.atoms {
            if a != AtomCategory::None {
                h[a.index() - 1] += 1;
            }
        }
        h
    }

    /// Counts of single, double and triple bonds.
    pub fn bond_histogram(&self) -> [u32; 3] {
        let mut h = [0u32; 3];
        for (_, _, b) in self.bond_list() {
            h[b.index() - 1] += 1;
        }
        h
    }

    /// Graph with slot `i` moved to slot `perm[i]`.
    pub fn permuted(&self, perm: &[usize; N_SLOTS]) -> Self {
        let mut g = Self::empty();
        for u in 0..N_SLOTS {
            g.atoms[perm[u]] = self.atoms[u];
            for v in 0..N_SLOTS {
                g.bonds[perm[u]][perm[v]] = self.bonds[u][v];
            }
        }
        g
    }

    /// Moves occupied slots to the front, keeping their relative order.
    pub fn compacted(&self) -> Self {
        let occ = self.occupied();
        let mut perm = [0usize; N_SLOTS];
        let mut next_empty = occ.len();
        let mut pos = 0;
        for (u, p) in perm.iter_mut().enumerate() {
            if self.exists(u) {
                *p = pos;
                pos += 1;
            } else {
                *p = next_empty;
                next_empty += 1;
            }
        }
        self.permuted(&perm)
    }

    /// One-hot node matrix `[9, 5]` and edge tensor `[9, 9, 4]`. The diagonal
    /// of the edge tensor is one-hot `None`.
    pub fn encode_one_hot<F: Scalar>(&self) -> (Tensor<F>, Tensor<F>) {
        let mut x = Tensor::zeros(&[N_SLOTS, AtomCategory::COUNT]);
        for (u, a) in self.atoms.iter().enumerate() {
            x.data_mut()[u * AtomCategory::COUNT + a.index()] = F::one();
        }
        let mut e = Tensor::zeros(&[N_SLOTS, N_SLOTS, BondCategory::COUNT]);
        for u in 0..N_SLOTS {
            for v in 0..N_SLOTS {
                let b = self.bonds[u][v].index();
                e.data_mut()[(u * N_SLOTS + v) * BondCategory::COUNT + b] = F::one();
            }
        }
        (x, e)
    }

    /// Inverse of [`encode_one_hot`](Self::encode_one_hot); picks the argmax
    /// of every row.
    pub fn decode_one_hot<F: Scalar>(x: &Tensor<F>, e: &Tensor<F>) -> Result<Self> {
        if x.shape() != [N_SLOTS, AtomCategory::COUNT]
            || e.shape() != [N_SLOTS, N_SLOTS, BondCategory::COUNT]
        {
            return Err(Error::Shape {
                op: "decode_one_hot",
                lhs: x.shape().to_vec(),
                rhs: e.shape().to_vec(),
            });
        }
        let mut atoms = [AtomCategory::None; N_SLOTS];
        for (u, row) in x.data().chunks(AtomCategory::COUNT).enumerate() {
            atoms[u] = AtomCategory::from_index(argmax(row)).unwrap();
        }
        let mut bonds = [[BondCategory::None; N_SLOTS]; N_SLOTS];
        for (i, row) in e.data().chunks(BondCategory::COUNT).enumerate() {
            bonds[i / N_SLOTS][i % N_SLOTS] = BondCategory::from_index(argmax(row)).unwrap();
        }
        Self::from_parts(atoms, bonds)
    }
}

/// Index of the first maximal entry.
pub fn argmax<F: Scalar>(row: &[F]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use AtomCategory as A;
    use BondCategory as B;

    pub(crate) fn chain(atoms: &[AtomCategory], bonds: &[BondCategory]) -> MolGraph {
        let mut g = MolGraph::from_atoms(atoms).unwrap();
        for (i, &b) in bonds.iter().enumerate() {
            g.set_bond(i, i + 1, b).unwrap();
        }
        g
    }

    pub(crate) fn triangle(a: [AtomCategory; 3]) -> MolGraph {
        let mut g = chain(&a, &[B::Single, B::Single]);
        g.set_bond(0, 2, B::Single).unwrap();
        g
    }

    #[test]
    fn validity_examples() {
        assert!(MolGraph::from_atoms(&[A::C]).unwrap().is_valid());
        assert!(chain(&[A::O, A::O], &[B::Double]).is_valid());
        let mut star = MolGraph::from_atoms(&[A::C; 6]).unwrap();
        for v in 1..6 {
            star.set_bond(0, v, B::Single).unwrap();
        }
        assert!(!star.is_valid());
        assert!(!MolGraph::empty().is_valid());
    }

    #[test]
    fn connectivity_examples() {
        assert!(triangle([A::C; 3]).is_connected().unwrap());
        let mut g = chain(&[A::C, A::C], &[B::Single]);
        g.push_atom(A::O).unwrap();
        assert!(!g.is_connected().unwrap());
        assert!(MolGraph::from_atoms(&[A::C]).unwrap().is_connected().unwrap());
        assert!(MolGraph::empty().is_connected().is_err());
    }

    #[test]
    fn ring_count_examples() {
        assert_eq!(triangle([A::C; 3]).ring_count(), 1);
        assert_eq!(chain(&[A::C; 3], &[B::Single; 2]).ring_count(), 0);
        let mut two = triangle([A::C; 3]);
        for _ in 0..3 {
            two.push_atom(A::C).unwrap();
        }
        two.set_bond(3, 4, B::Single).unwrap();
        two.set_bond(4, 5, B::Single).unwrap();
        two.set_bond(3, 5, B::Single).unwrap();
        assert_eq!(two.ring_count(), 2);
    }

    #[test]
    fn histogram_examples() {
        assert_eq!(triangle([A::C, A::C, A::O]).atom_histogram(), [2, 0, 1, 0]);
        assert_eq!(MolGraph::empty().atom_histogram(), [0, 0, 0, 0]);
        assert_eq!(MolGraph::from_atoms(&[A::C; 9]).unwrap().atom_histogram(), [9, 0, 0, 0]);
    }

    #[test]
    fn capacity_and_invariants() {
        let mut g = MolGraph::from_atoms(&[A::C; 9]).unwrap();
        assert_eq!(g.push_atom(A::N), Err(Error::Capacity(10)));
        assert!(g.set_bond(3, 3, B::Single).is_err());
        let mut h = MolGraph::from_atoms(&[A::C]).unwrap();
        assert!(h.set_bond(0, 1, B::Single).is_err());
        let mut bonds = [[B::None; N_SLOTS]; N_SLOTS];
        bonds[0][1] = B::Single;
        assert!(MolGraph::from_parts([A::C; N_SLOTS], bonds).is_err());
    }

    #[test]
    fn one_hot_examples() {
        let (x, e) = MolGraph::empty().encode_one_hot::<f32>();
        for row in x.data().chunks(5) {
            assert_eq!(row, &[1.0, 0.0, 0.0, 0.0, 0.0]);
        }
        for row in e.data().chunks(4) {
            assert_eq!(row, &[1.0, 0.0, 0.0, 0.0]);
        }
        let (x, _) = MolGraph::from_atoms(&[A::C]).unwrap().encode_one_hot::<f32>();
        assert_eq!(&x.data()[..5], &[0.0, 1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn permutation_keeps_validity_and_rings() {
        let g = triangle([A::C, A::N, A::O]);
        let perm = [8, 3, 5, 0, 1, 2, 4, 6, 7];
        let p = g.permuted(&perm);
        assert_eq!(p.is_valid(), g.is_valid());
        assert_eq!(p.ring_count(), g.ring_count());
        assert_eq!(p.atom(8), A::C);
        assert_eq!(p.bond(8, 3), B::Single);
        assert_eq!(p.compacted().atom_histogram(), g.atom_histogram());
    }
}
