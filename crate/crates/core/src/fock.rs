//! Sparse bosonic Fock states over labelled optical modes.
//!
//! A mode is a spatial path together with a time bin and a polarization.
//! States are stored as canonical sparse maps from occupation configurations
//! to complex amplitudes, so two states built from the same description in a
//! different order compare equal.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::{Add, Mul};
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Amplitudes below this magnitude are dropped after every operation.
pub const PRUNE_TOL: f64 = 1e-15;

/// Tolerance for "normalized" and for weight sums.
pub const NORM_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TimeBin {
    S,
    L,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Polarization {
    H,
    V,
}

/// Name of a spatial path, e.g. `a1`, `b7` or `out2`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Spatial(Arc<str>);

impl Spatial {
    pub fn new(label: &str) -> Self {
        Spatial(Arc::from(label))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl From<&str> for Spatial {
    fn from(label: &str) -> Self {
        Spatial::new(label)
    }
}

impl fmt::Display for Spatial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// One optical mode. Ordering is lexicographic on (spatial, bin, pol).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ModeId {
    pub spatial: Spatial,
    pub bin: TimeBin,
    pub pol: Polarization,
}

impl ModeId {
    pub fn new(spatial: impl Into<Spatial>, bin: TimeBin, pol: Polarization) -> Self {
        ModeId {
            spatial: spatial.into(),
            bin,
            pol,
        }
    }

    /// Short-bin, horizontally polarized sublevel of a path.
    pub fn s_h(spatial: impl Into<Spatial>) -> Self {
        ModeId::new(spatial, TimeBin::S, Polarization::H)
    }

    /// Long-bin, vertically polarized sublevel of a path.
    pub fn l_v(spatial: impl Into<Spatial>) -> Self {
        ModeId::new(spatial, TimeBin::L, Polarization::V)
    }

    /// All four (bin, pol) sublevels of a spatial path, in canonical order.
    pub fn sublevels(spatial: &Spatial) -> [ModeId; 4] {
        use Polarization::*;
        use TimeBin::*;
        [(S, H), (S, V), (L, H), (L, V)].map(|(bin, pol)| ModeId::new(spatial.clone(), bin, pol))
    }

    pub fn with_spatial(&self, spatial: &Spatial) -> ModeId {
        ModeId {
            spatial: spatial.clone(),
            ..self.clone()
        }
    }
}

impl fmt::Display for ModeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}_{:?}@{}", self.bin, self.pol, self.spatial)
    }
}

/// Occupation-number configuration. Zero counts are never stored.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FockBasis {
    occupations: Vec<(ModeId, u32)>,
}

impl FockBasis {
    pub fn vacuum() -> Self {
        FockBasis::default()
    }

    pub fn single(mode: ModeId) -> Self {
        FockBasis {
            occupations: vec![(mode, 1)],
        }
    }

    /// Builds a configuration from (mode, count) pairs; repeated modes add up.
    pub fn from_counts(counts: impl IntoIterator<Item = (ModeId, u32)>) -> Self {
        let mut map: BTreeMap<ModeId, u32> = BTreeMap::new();
        for (mode, n) in counts {
            *map.entry(mode).or_default() += n;
        }
        FockBasis {
            occupations: map.into_iter().filter(|&(_, n)| n > 0).collect(),
        }
    }

    /// One photon per entry of `modes`; the slice is sorted in place.
    pub fn from_modes(modes: &mut [&ModeId]) -> Self {
        modes.sort_unstable();
        let mut occupations: Vec<(ModeId, u32)> = Vec::with_capacity(modes.len());
        for m in modes.iter() {
            match occupations.last_mut() {
                Some((last, n)) if last == *m => *n += 1,
                _ => occupations.push(((*m).clone(), 1)),
            }
        }
        FockBasis { occupations }
    }

    pub fn count(&self, mode: &ModeId) -> u32 {
        self.occupations
            .binary_search_by(|(m, _)| m.cmp(mode))
            .map(|i| self.occupations[i].1)
            .unwrap_or(0)
    }

    pub fn total_photon_number(&self) -> u32 {
        self.occupations.iter().map(|&(_, n)| n).sum()
    }

    pub fn is_vacuum(&self) -> bool {
        self.occupations.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ModeId, u32)> {
        self.occupations.iter().map(|(m, n)| (m, *n))
    }

    /// Same configuration with one more photon in `mode`; also returns the new count.
    pub fn with_added(&self, mode: &ModeId) -> (FockBasis, u32) {
        let mut occupations = self.occupations.clone();
        let n = match occupations.binary_search_by(|(m, _)| m.cmp(mode)) {
            Ok(i) => {
                occupations[i].1 += 1;
                occupations[i].1
            }
            Err(i) => {
                occupations.insert(i, (mode.clone(), 1));
                1
            }
        };
        (FockBasis { occupations }, n)
    }

    /// Keeps only the modes accepted by `keep`.
    pub fn restricted(&self, mut keep: impl FnMut(&ModeId) -> bool) -> FockBasis {
        FockBasis {
            occupations: self
                .occupations
                .iter()
                .filter(|(m, _)| keep(m))
                .cloned()
                .collect(),
        }
    }

    /// Product of n! over all occupied modes.
    pub(crate) fn factorial_product(&self) -> f64 {
        self.occupations
            .iter()
            .map(|&(_, n)| (1..=n).map(f64::from).product::<f64>())
            .product()
    }
}

impl fmt::Display for FockBasis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.occupations.is_empty() {
            return f.write_str("|vac>");
        }
        f.write_str("|")?;
        for (i, (mode, n)) in self.occupations.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{n}:{mode}")?;
        }
        f.write_str(">")
    }
}

/// Sparse superposition of Fock configurations.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PureState {
    amps: BTreeMap<FockBasis, Complex64>,
}

impl PureState {
    /// The zero vector (not the vacuum).
    pub fn zero() -> Self {
        PureState::default()
    }

    pub fn vacuum() -> Self {
        PureState::basis(FockBasis::vacuum())
    }

    pub fn basis(basis: FockBasis) -> Self {
        let mut amps = BTreeMap::new();
        amps.insert(basis, Complex64::new(1.0, 0.0));
        PureState { amps }
    }

    /// One photon in `mode`.
    pub fn single(mode: ModeId) -> Self {
        PureState::basis(FockBasis::single(mode))
    }

    /// Sums amplitudes of repeated configurations and prunes float dust.
    pub fn from_terms(terms: impl IntoIterator<Item = (FockBasis, Complex64)>) -> Self {
        let mut amps: BTreeMap<FockBasis, Complex64> = BTreeMap::new();
        for (basis, amp) in terms {
            *amps.entry(basis).or_default() += amp;
        }
        amps.retain(|_, a| a.norm() >= PRUNE_TOL);
        PureState { amps }
    }

    pub fn amplitude(&self, basis: &FockBasis) -> Complex64 {
        self.amps.get(basis).copied().unwrap_or_default()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&FockBasis, Complex64)> {
        self.amps.iter().map(|(b, a)| (b, *a))
    }

    pub fn len(&self) -> usize {
        self.amps.len()
    }

    pub fn is_zero(&self) -> bool {
        self.amps.is_empty()
    }

    /// Every mode with a nonzero count in some term.
    pub fn occupied_modes(&self) -> BTreeSet<ModeId> {
        self.amps
            .keys()
            .flat_map(|b| b.iter().map(|(m, _)| m.clone()))
            .collect()
    }

    /// Bosonic creation operator: |n> -> sqrt(n+1) |n+1> on `mode`.
    pub fn create_photon(&self, mode: &ModeId) -> PureState {
        PureState::from_terms(self.amps.iter().map(|(basis, amp)| {
            let (raised, n) = basis.with_added(mode);
            (raised, amp * f64::from(n).sqrt())
        }))
    }

    /// <self|other>, antilinear in `self`.
    pub fn inner_product(&self, other: &PureState) -> Complex64 {
        let (small, large, flip) = if self.amps.len() <= other.amps.len() {
            (self, other, false)
        } else {
            (other, self, true)
        };
        let mut acc = Complex64::default();
        for (basis, a) in &small.amps {
            if let Some(b) = large.amps.get(basis) {
                acc += if flip { b.conj() * a } else { a.conj() * b };
            }
        }
        acc
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.values().map(|a| a.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm_sqr() - 1.0).abs() <= NORM_TOL
    }

    /// Product state on disjoint mode sets.
    pub fn tensor(&self, other: &PureState) -> Result<PureState> {
        let mine = self.occupied_modes();
        if let Some(shared) = other
            .occupied_modes()
            .into_iter()
            .find(|m| mine.contains(m))
        {
            return Err(Error::OverlappingModes(shared));
        }
        Ok(PureState::from_terms(self.amps.iter().flat_map(
            |(b1, a1)| {
                other.amps.iter().map(move |(b2, a2)| {
                    let merged = FockBasis::from_counts(
                        b1.iter().chain(b2.iter()).map(|(m, n)| (m.clone(), n)),
                    );
                    (merged, a1 * a2)
                })
            },
        )))
    }

    /// Returns the original norm and the unit-norm state.
    pub fn normalize(&self) -> Result<(f64, PureState)> {
        let norm = self.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::ZeroState);
        }
        Ok((norm, self.scaled(Complex64::new(1.0 / norm, 0.0))))
    }

    pub fn scaled(&self, factor: Complex64) -> PureState {
        PureState::from_terms(self.amps.iter().map(|(b, a)| (b.clone(), a * factor)))
    }

    /// Keeps the terms accepted by `keep`.
    pub fn filtered(&self, mut keep: impl FnMut(&FockBasis) -> bool) -> PureState {
        PureState {
            amps: self
                .amps
                .iter()
                .filter(|(b, _)| keep(b))
                .map(|(b, a)| (b.clone(), *a))
                .collect(),
        }
    }

    /// |<self|other>|^2 for unit vectors.
    pub fn overlap_sqr(&self, other: &PureState) -> f64 {
        self.inner_product(other).norm_sqr()
    }

    /// Term-wise comparison within `tol`.
    pub fn approx_eq(&self, other: &PureState, tol: f64) -> bool {
        let keys: BTreeSet<&FockBasis> = self.amps.keys().chain(other.amps.keys()).collect();
        keys.into_iter()
            .all(|b| (self.amplitude(b) - other.amplitude(b)).norm() <= tol)
    }
}

impl Add for &PureState {
    type Output = PureState;

    fn add(self, rhs: &PureState) -> PureState {
        PureState::from_terms(self.terms().chain(rhs.terms()).map(|(b, a)| (b.clone(), a)))
    }
}

impl Mul<f64> for &PureState {
    type Output = PureState;

    fn mul(self, rhs: f64) -> PureState {
        self.scaled(Complex64::new(rhs, 0.0))
    }
}

impl fmt::Display for PureState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.amps.is_empty() {
            return f.write_str("0");
        }
        for (i, (basis, amp)) in self.amps.iter().enumerate() {
            if i > 0 {
                f.write_str(" + ")?;
            }
            write!(f, "({:.6}{:+.6}i){}", amp.re, amp.im, basis)?;
        }
        Ok(())
    }
}

/// Weighted ensemble of normalized pure states.
#[derive(Clone, Debug, PartialEq)]
pub struct MixedState {
    branches: Vec<(f64, PureState)>,
}

impl MixedState {
    pub fn new(branches: Vec<(f64, PureState)>) -> Result<Self> {
        if branches.is_empty() {
            return Err(Error::InvalidMixture("no branches".into()));
        }
        for (w, state) in &branches {
            if !(*w >= 0.0) || !w.is_finite() {
                return Err(Error::InvalidMixture(format!(
                    "weight {w} is not a probability"
                )));
            }
            if !state.is_normalized() {
                return Err(Error::InvalidMixture(format!(
                    "branch has norm^2 {}",
                    state.norm_sqr()
                )));
            }
        }
        let total: f64 = branches.iter().map(|(w, _)| w).sum();
        if (total - 1.0).abs() > NORM_TOL {
            return Err(Error::InvalidMixture(format!("weights sum to {total}")));
        }
        Ok(MixedState { branches })
    }

    pub fn pure(state: PureState) -> Result<Self> {
        MixedState::new(vec![(1.0, state)])
    }

    pub fn branches(&self) -> &[(f64, PureState)] {
        &self.branches
    }

    /// The single branch, if this ensemble is a pure state.
    pub fn as_pure(&self) -> Option<&PureState> {
        match self.branches.as_slice() {
            [(_, s)] => Some(s),
            _ => None,
        }
    }

    /// <target| rho |target> for a unit vector `target`.
    pub fn fidelity_with(&self, target: &PureState) -> f64 {
        self.branches
            .iter()
            .map(|(w, s)| w * target.overlap_sqr(s))
            .sum()
    }

    /// Merges branches that are equal up to a global phase (overlap^2 >= 1 - tol).
    pub fn merged(&self, tol: f64) -> MixedState {
        let mut out: Vec<(f64, PureState)> = Vec::new();
        for (w, s) in &self.branches {
            match out.iter_mut().find(|(_, o)| o.overlap_sqr(s) >= 1.0 - tol) {
                Some((ow, _)) => *ow += w,
                None => out.push((*w, s.clone())),
            }
        }
        MixedState { branches: out }
    }
}
