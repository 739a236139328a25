//! Linear-optical elements as substitutions on creation operators.
//!
//! A [`LinearModeMap`] sends each mapped input mode `i` to a superposition
//! `a_i^† -> Σ_k c_ik b_k^†`. Modes without a column pass through unchanged.
//! Columns must be orthonormal; when a map is applied, no occupied
//! pass-through mode may also be an output of some column.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;

use num_complex::Complex64;

use crate::error::{check_unit_interval, Error, Result};
use crate::fock::{FockBasis, ModeId, Polarization, PureState, Spatial, TimeBin, PRUNE_TOL};

/// Tolerance of the column orthonormality check.
pub const ISOMETRY_TOL: f64 = 1e-12;

/// Balanced beam splitter in the `[[a->outA, a->outB], [b->outA, b->outB]]` layout.
pub const BALANCED_SPLITTER: [[f64; 2]; 2] = [
    [FRAC_1_SQRT_2, FRAC_1_SQRT_2],
    [FRAC_1_SQRT_2, -FRAC_1_SQRT_2],
];

type Column = Vec<(ModeId, Complex64)>;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinearModeMap {
    columns: BTreeMap<ModeId, Column>,
}

impl LinearModeMap {
    pub fn identity() -> Self {
        LinearModeMap::default()
    }

    /// Builds a map from explicit columns and rejects it unless the columns are orthonormal.
    pub fn new(columns: impl IntoIterator<Item = (ModeId, Column)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (input, column) in columns {
            let mut merged: BTreeMap<ModeId, Complex64> = BTreeMap::new();
            for (out, c) in column {
                *merged.entry(out).or_default() += c;
            }
            merged.retain(|_, c| c.norm() >= PRUNE_TOL);
            map.insert(input, merged.into_iter().collect());
        }
        let built = LinearModeMap { columns: map };
        built.check_isometry()?;
        Ok(built)
    }

    /// Largest deviation of the column Gram matrix from the identity.
    pub fn isometry_defect(&self) -> f64 {
        let cols: Vec<BTreeMap<&ModeId, Complex64>> = self
            .columns
            .values()
            .map(|c| c.iter().map(|(m, v)| (m, *v)).collect())
            .collect();
        let mut defect: f64 = 0.0;
        for (i, ci) in cols.iter().enumerate() {
            for (j, cj) in cols.iter().enumerate().skip(i) {
                let dot: Complex64 = ci
                    .iter()
                    .filter_map(|(m, a)| cj.get(m).map(|b| a.conj() * b))
                    .sum();
                let target = if i == j { 1.0 } else { 0.0 };
                defect = defect.max((dot - target).norm());
            }
        }
        defect
    }

    pub fn check_isometry(&self) -> Result<()> {
        let defect = self.isometry_defect();
        if defect <= ISOMETRY_TOL {
            Ok(())
        } else {
            Err(Error::NotIsometric { defect })
        }
    }

    pub fn column(&self, input: &ModeId) -> Option<&[(ModeId, Complex64)]> {
        self.columns.get(input).map(Vec::as_slice)
    }

    pub fn inputs(&self) -> impl Iterator<Item = &ModeId> {
        self.columns.keys()
    }

    pub fn outputs(&self) -> BTreeSet<&ModeId> {
        self.columns.values().flatten().map(|(m, _)| m).collect()
    }

    /// The map equivalent to applying `self` and then `next`.
    pub fn then(&self, next: &LinearModeMap) -> Result<LinearModeMap> {
        let mine_out = self.outputs();
        let mut columns: Vec<(ModeId, Column)> = self
            .columns
            .iter()
            .map(|(input, col)| {
                let substituted = col
                    .iter()
                    .flat_map(|(mid, c)| match next.column(mid) {
                        Some(next_col) => {
                            next_col.iter().map(|(o, d)| (o.clone(), c * d)).collect()
                        }
                        None => vec![(mid.clone(), *c)],
                    })
                    .collect();
                (input.clone(), substituted)
            })
            .collect();
        for (input, col) in &next.columns {
            if !self.columns.contains_key(input) && !mine_out.contains(input) {
                columns.push((input.clone(), col.clone()));
            }
        }
        LinearModeMap::new(columns)
    }

    /// Rewrites every term as creation operators on vacuum, substitutes each
    /// operator and re-expands with bosonic factors.
    pub fn apply(&self, state: &PureState) -> Result<PureState> {
        self.check_isometry()?;
        let outputs = self.outputs();
        if let Some(clash) = state
            .occupied_modes()
            .into_iter()
            .find(|m| !self.columns.contains_key(m) && outputs.contains(m))
        {
            return Err(Error::PassThroughCollision(clash));
        }

        let mut acc: BTreeMap<FockBasis, Complex64> = BTreeMap::new();
        let mut pass_through: Vec<[(ModeId, Complex64); 1]> = Vec::new();
        for (basis, amp) in state.terms() {
            pass_through.clear();
            pass_through.extend(
                basis
                    .iter()
                    .filter(|(m, _)| !self.columns.contains_key(*m))
                    .map(|(m, _)| [(m.clone(), real(1.0))]),
            );
            // One column per photon, so that the product of sums can be expanded.
            let mut photons: Vec<&[(ModeId, Complex64)]> = Vec::new();
            let mut passed = pass_through.iter();
            for (mode, n) in basis.iter() {
                let col: &[(ModeId, Complex64)] = match self.columns.get(mode) {
                    Some(c) => c,
                    None => passed.next().expect("one entry per unmapped mode"),
                };
                photons.extend(std::iter::repeat_n(col, n as usize));
            }
            // a_1^{†n_1}...|0> carries 1/sqrt(prod n!) relative to the normalized ket.
            let prefactor = amp / basis.factorial_product().sqrt();
            expand_product(&photons, prefactor, &mut acc);
        }
        Ok(PureState::from_terms(acc))
    }
}

/// Adds `prefactor * Π_k (Σ_j c_kj b_j^†) |0>` to `acc`.
fn expand_product(
    photons: &[&[(ModeId, Complex64)]],
    prefactor: Complex64,
    acc: &mut BTreeMap<FockBasis, Complex64>,
) {
    if photons.iter().any(|c| c.is_empty()) {
        return;
    }
    let mut choice = vec![0usize; photons.len()];
    let mut modes: Vec<&ModeId> = Vec::with_capacity(photons.len());
    loop {
        modes.clear();
        let mut coef = prefactor;
        for (col, &j) in photons.iter().zip(&choice) {
            let (m, c) = &col[j];
            coef *= c;
            modes.push(m);
        }
        let out = FockBasis::from_modes(&mut modes);
        *acc.entry(out.clone()).or_default() += coef * out.factorial_product().sqrt();

        let mut k = 0;
        loop {
            if k == choice.len() {
                return;
            }
            choice[k] += 1;
            if choice[k] < photons[k].len() {
                break;
            }
            choice[k] = 0;
            k += 1;
        }
    }
}

impl fmt::Display for LinearModeMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (input, col) in &self.columns {
            write!(f, "{input} ->")?;
            for (out, c) in col {
                write!(f, " ({:+.6}{:+.6}i){out}", c.re, c.im)?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

fn ensure_distinct(labels: &[&Spatial]) -> Result<()> {
    for (i, a) in labels.iter().enumerate() {
        if labels[i + 1..].contains(a) {
            return Err(Error::RepeatedLabel((*a).clone()));
        }
    }
    Ok(())
}

fn real(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// 50:50 beam splitter: `a -> (outA + outB)/√2`, `b -> (outA - outB)/√2` on every sublevel.
pub fn beam_splitter_map(
    in_a: &Spatial,
    in_b: &Spatial,
    out_a: &Spatial,
    out_b: &Spatial,
) -> Result<LinearModeMap> {
    beam_splitter_map_with(in_a, in_b, out_a, out_b, BALANCED_SPLITTER)
}

/// Two-port splitter with an arbitrary real coefficient matrix, applied per sublevel.
pub fn beam_splitter_map_with(
    in_a: &Spatial,
    in_b: &Spatial,
    out_a: &Spatial,
    out_b: &Spatial,
    matrix: [[f64; 2]; 2],
) -> Result<LinearModeMap> {
    ensure_distinct(&[in_a, in_b, out_a, out_b])?;
    let mut columns = Vec::new();
    for (input, row) in [(in_a, matrix[0]), (in_b, matrix[1])] {
        for mode in ModeId::sublevels(input) {
            columns.push((
                mode.clone(),
                vec![
                    (mode.with_spatial(out_a), real(row[0])),
                    (mode.with_spatial(out_b), real(row[1])),
                ],
            ));
        }
    }
    LinearModeMap::new(columns)
}

/// Variable beam splitter: `input -> √t kept + √(1-t) out` on every sublevel.
///
/// `kept` may equal `input`. When it does, the other input port is `out`
/// and is given the complementary column `√(1-t) kept - √t out`.
pub fn vbs_map(input: &Spatial, kept: &Spatial, out: &Spatial, t: f64) -> Result<LinearModeMap> {
    let t = check_unit_interval("t", t)?;
    if kept == out {
        return Err(Error::RepeatedLabel(kept.clone()));
    }
    if input == out {
        return Err(Error::RepeatedLabel(out.clone()));
    }
    let (tr, rf) = (t.sqrt(), (1.0 - t).sqrt());
    let mut columns = Vec::new();
    for mode in ModeId::sublevels(input) {
        columns.push((
            mode.clone(),
            vec![
                (mode.with_spatial(kept), real(tr)),
                (mode.with_spatial(out), real(rf)),
            ],
        ));
        if input == kept {
            let dark = mode.with_spatial(out);
            columns.push((
                dark.clone(),
                vec![(mode.clone(), real(rf)), (dark, real(-tr))],
            ));
        }
    }
    LinearModeMap::new(columns)
}

/// Polarizing beam splitter: H sublevels to `out_h`, V sublevels to `out_v`, both bins.
pub fn pbs_map(input: &Spatial, out_h: &Spatial, out_v: &Spatial) -> Result<LinearModeMap> {
    ensure_distinct(&[input, out_h, out_v])?;
    LinearModeMap::new(ModeId::sublevels(input).into_iter().map(|mode| {
        let target = match mode.pol {
            Polarization::H => out_h,
            Polarization::V => out_v,
        };
        let routed = mode.with_spatial(target);
        (mode, vec![(routed, real(1.0))])
    }))
}

/// The two time-bin qubit components.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Component {
    SH,
    LV,
}

impl Component {
    pub fn mode(self, spatial: &Spatial) -> ModeId {
        match self {
            Component::SH => ModeId::new(spatial.clone(), TimeBin::S, Polarization::H),
            Component::LV => ModeId::new(spatial.clone(), TimeBin::L, Polarization::V),
        }
    }
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Component::SH => "S_H",
            Component::LV => "L_V",
        })
    }
}

/// Sign flip on one sublevel of a path; identity elsewhere.
pub fn phase_flip_map(spatial: &Spatial, component: Component) -> LinearModeMap {
    let mode = component.mode(spatial);
    LinearModeMap::new([(mode.clone(), vec![(mode, real(-1.0))])])
        .expect("a single -1 column is an isometry")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn sp(s: &str) -> Spatial {
        Spatial::new(s)
    }

    fn bs() -> LinearModeMap {
        beam_splitter_map(&sp("a1"), &sp("a2"), &sp("a3"), &sp("a4")).unwrap()
    }

    #[test]
    fn beam_splitter_single_photon() {
        let out = bs().apply(&PureState::single(ModeId::s_h("a1"))).unwrap();
        let expected = &(&PureState::single(ModeId::s_h("a3"))
            + &PureState::single(ModeId::s_h("a4")))
            * FRAC_1_SQRT_2;
        assert!(out.approx_eq(&expected, 1e-15));
    }

    #[test]
    fn beam_splitter_coefficients_match_convention() {
        let map = bs();
        let col = map.column(&ModeId::l_v("a2")).unwrap();
        assert_eq!(col.len(), 2);
        assert_abs_diff_eq!(col[0].1.re, FRAC_1_SQRT_2);
        assert_eq!(col[0].0, ModeId::l_v("a3"));
        assert_abs_diff_eq!(col[1].1.re, -FRAC_1_SQRT_2);
        assert_eq!(col[1].0, ModeId::l_v("a4"));
    }

    #[test]
    fn hong_ou_mandel_has_no_coincidence() {
        let input = PureState::basis(FockBasis::from_counts([
            (ModeId::s_h("a1"), 1),
            (ModeId::s_h("a2"), 1),
        ]));
        let out = bs().apply(&input).unwrap();
        let coincidence = FockBasis::from_counts([(ModeId::s_h("a3"), 1), (ModeId::s_h("a4"), 1)]);
        assert_eq!(out.amplitude(&coincidence), Complex64::default());
        // (x + y)(x - y)/2 |0> = (x^2 - y^2)/2 |0> = (√2|2,0> - √2|0,2>)/2
        let expected = PureState::from_terms([
            (
                FockBasis::from_counts([(ModeId::s_h("a3"), 2)]),
                real(FRAC_1_SQRT_2),
            ),
            (
                FockBasis::from_counts([(ModeId::s_h("a4"), 2)]),
                real(-FRAC_1_SQRT_2),
            ),
        ]);
        assert!(out.approx_eq(&expected, 1e-15));
    }

    #[test]
    fn beam_splitter_self_inverse() {
        let forward = bs();
        let back = beam_splitter_map(&sp("a3"), &sp("a4"), &sp("a1"), &sp("a2")).unwrap();
        let psi = PureState::basis(FockBasis::from_counts([
            (ModeId::s_h("a1"), 2),
            (ModeId::l_v("a2"), 1),
        ]));
        let round = back.apply(&forward.apply(&psi).unwrap()).unwrap();
        assert!(round.approx_eq(&psi, 1e-14));
    }

    #[test]
    fn repeated_labels_rejected() {
        assert_eq!(
            beam_splitter_map(&sp("a1"), &sp("a1"), &sp("a3"), &sp("a4")),
            Err(Error::RepeatedLabel(sp("a1")))
        );
        assert!(pbs_map(&sp("a3"), &sp("a5"), &sp("a5")).is_err());
    }

    #[test]
    fn non_isometric_matrix_rejected() {
        let sum_only = [
            [FRAC_1_SQRT_2, FRAC_1_SQRT_2],
            [FRAC_1_SQRT_2, FRAC_1_SQRT_2],
        ];
        let err = beam_splitter_map_with(&sp("a1"), &sp("a2"), &sp("a3"), &sp("a4"), sum_only);
        assert!(matches!(err, Err(Error::NotIsometric { .. })));
    }

    #[test]
    fn vbs_extremes() {
        let psi = PureState::single(ModeId::s_h("a2"));
        let keep = vbs_map(&sp("a2"), &sp("a2"), &sp("out1"), 1.0).unwrap();
        assert!(keep.apply(&psi).unwrap().approx_eq(&psi, 1e-15));
        let send = vbs_map(&sp("a2"), &sp("a2"), &sp("out1"), 0.0).unwrap();
        assert!(send
            .apply(&psi)
            .unwrap()
            .approx_eq(&PureState::single(ModeId::s_h("out1")), 1e-15));
        assert!(vbs_map(&sp("a2"), &sp("a2"), &sp("out1"), 1.5).is_err());
        assert!(vbs_map(&sp("a2"), &sp("a2"), &sp("out1"), -0.1).is_err());
    }

    #[test]
    fn vbs_on_auxiliary_pair_gives_four_terms() {
        let t: f64 = 0.3;
        let aux = PureState::basis(FockBasis::from_counts([
            (ModeId::s_h("a2"), 1),
            (ModeId::l_v("a2"), 1),
        ]));
        let out = vbs_map(&sp("a2"), &sp("a2"), &sp("out1"), t)
            .unwrap()
            .apply(&aux)
            .unwrap();
        let cross = (t * (1.0 - t)).sqrt();
        let expected = PureState::from_terms([
            (
                FockBasis::from_counts([(ModeId::s_h("a2"), 1), (ModeId::l_v("a2"), 1)]),
                real(t),
            ),
            (
                FockBasis::from_counts([(ModeId::s_h("out1"), 1), (ModeId::l_v("out1"), 1)]),
                real(1.0 - t),
            ),
            (
                FockBasis::from_counts([(ModeId::s_h("a2"), 1), (ModeId::l_v("out1"), 1)]),
                real(cross),
            ),
            (
                FockBasis::from_counts([(ModeId::l_v("a2"), 1), (ModeId::s_h("out1"), 1)]),
                real(cross),
            ),
        ]);
        assert!(out.approx_eq(&expected, 1e-15));
    }

    #[test]
    fn pbs_routes_by_polarization() {
        let pbs = pbs_map(&sp("a3"), &sp("a5"), &sp("a6")).unwrap();
        let cases = [
            (ModeId::s_h("a3"), ModeId::s_h("a5")),
            (ModeId::l_v("a3"), ModeId::l_v("a6")),
            (
                ModeId::new("a3", TimeBin::S, Polarization::V),
                ModeId::new("a6", TimeBin::S, Polarization::V),
            ),
            (
                ModeId::new("a3", TimeBin::L, Polarization::H),
                ModeId::new("a5", TimeBin::L, Polarization::H),
            ),
        ];
        for (input, output) in cases {
            assert_eq!(
                pbs.apply(&PureState::single(input)).unwrap(),
                PureState::single(output)
            );
        }
        let pbs4 = pbs_map(&sp("a4"), &sp("a7"), &sp("a8")).unwrap();
        assert_eq!(
            pbs4.apply(&PureState::single(ModeId::l_v("a4"))).unwrap(),
            PureState::single(ModeId::l_v("a8"))
        );
    }

    #[test]
    fn phase_flip_fixes_sign_and_is_involution() {
        let out = sp("out1");
        let flip = phase_flip_map(&out, Component::SH);
        let (a, b) = (0.6, 0.8);
        let bad = &(&PureState::single(ModeId::s_h("out1")) * -a)
            + &(&PureState::single(ModeId::l_v("out1")) * b);
        let good = &(&PureState::single(ModeId::s_h("out1")) * a)
            + &(&PureState::single(ModeId::l_v("out1")) * b);
        assert!(flip.apply(&bad).unwrap().approx_eq(&good, 1e-15));
        assert!(flip
            .apply(&flip.apply(&bad).unwrap())
            .unwrap()
            .approx_eq(&bad, 1e-15));
        assert_eq!(
            flip.apply(&PureState::vacuum()).unwrap(),
            PureState::vacuum()
        );
    }

    #[test]
    fn pass_through_collision_detected() {
        let psi = PureState::single(ModeId::s_h("a3"));
        assert_eq!(
            bs().apply(&psi),
            Err(Error::PassThroughCollision(ModeId::s_h("a3")))
        );
    }

    #[test]
    fn composition_matches_sequential_application() {
        let bs = bs();
        let pbs = pbs_map(&sp("a3"), &sp("a5"), &sp("a6")).unwrap();
        let composed = bs.then(&pbs).unwrap();
        let psi = PureState::basis(FockBasis::from_counts([
            (ModeId::s_h("a1"), 1),
            (ModeId::l_v("a2"), 1),
            (ModeId::s_h("a2"), 1),
        ]));
        let seq = pbs.apply(&bs.apply(&psi).unwrap()).unwrap();
        assert!(composed.apply(&psi).unwrap().approx_eq(&seq, 1e-12));
    }
}
