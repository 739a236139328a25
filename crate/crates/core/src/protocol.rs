//! The two-party heralded amplifier for single-photon time-bin entanglement.
//!
//! Each party holds one arm of the shared photon (path `a1` or `b1`) and two
//! auxiliary photons `S_H` and `L_V` in path `a2`/`b2`. The auxiliary photons
//! cross a variable beam splitter that leaks them into `out1`/`out2`, then a
//! 50:50 splitter mixes them with the signal and four polarizing splitters
//! route everything onto detectors `D1..D4` of each side:
//!
//! | detector | path | reads |
//! |----------|------|-------|
//! | D1       | x5   | H     |
//! | D2       | x6   | V     |
//! | D3       | x7   | H     |
//! | D4       | x8   | V     |
//!
//! A run succeeds when each side fires one S_H detector and one L_V detector.
//! The surviving photon (if any) sits in `out1`/`out2`, and a sign correction
//! that depends on the heralding pattern restores the input superposition.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use num_complex::Complex64;

use crate::elements::{
    beam_splitter_map_with, pbs_map, phase_flip_map, vbs_map, Component, LinearModeMap,
    BALANCED_SPLITTER,
};
use crate::error::{check_unit_interval, Error, Result};
use crate::fock::{FockBasis, MixedState, ModeId, Polarization, PureState, Spatial};

/// Tolerance on α² + β² = 1.
pub const COEFFICIENT_TOL: f64 = 1e-9;

/// A correction is accepted when the corrected state reaches this overlap².
pub const CORRECTION_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Side {
    A,
    B,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::A, Side::B];

    fn prefix(self) -> &'static str {
        match self {
            Side::A => "a",
            Side::B => "b",
        }
    }

    /// Spatial path `a<index>` / `b<index>`.
    pub fn path(self, index: u8) -> Spatial {
        Spatial::new(&format!("{}{index}", self.prefix()))
    }

    /// The side's output path, `out1` for A and `out2` for B.
    pub fn output(self) -> Spatial {
        match self {
            Side::A => Spatial::new("out1"),
            Side::B => Spatial::new("out2"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DetectorModel {
    /// Exactly one photon at each heralding detector, none elsewhere.
    NumberResolving,
    /// At least one photon at each heralding detector, none elsewhere.
    Threshold,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Detector {
    D1,
    D2,
    D3,
    D4,
}

impl Detector {
    pub const ALL: [Detector; 4] = [Detector::D1, Detector::D2, Detector::D3, Detector::D4];

    pub fn index(self) -> u8 {
        match self {
            Detector::D1 => 1,
            Detector::D2 => 2,
            Detector::D3 => 3,
            Detector::D4 => 4,
        }
    }

    pub fn polarization(self) -> Polarization {
        match self {
            Detector::D1 | Detector::D3 => Polarization::H,
            Detector::D2 | Detector::D4 => Polarization::V,
        }
    }

    pub fn path(self, side: Side) -> Spatial {
        side.path(4 + self.index())
    }

    fn slot(self, side: Side) -> usize {
        let base = match side {
            Side::A => 0,
            Side::B => 4,
        };
        base + usize::from(self.index() - 1)
    }
}

/// The four per-side detector pairs that herald success.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DetectorPair {
    D1D2,
    D1D4,
    D2D3,
    D3D4,
}

impl DetectorPair {
    pub const ALL: [DetectorPair; 4] = [
        DetectorPair::D1D2,
        DetectorPair::D1D4,
        DetectorPair::D2D3,
        DetectorPair::D3D4,
    ];

    pub fn detectors(self) -> [Detector; 2] {
        use Detector::*;
        match self {
            DetectorPair::D1D2 => [D1, D2],
            DetectorPair::D1D4 => [D1, D4],
            DetectorPair::D2D3 => [D2, D3],
            DetectorPair::D3D4 => [D3, D4],
        }
    }

    /// Unordered lookup; `None` for pairs that are not heralding pairs.
    pub fn from_detectors(x: Detector, y: Detector) -> Option<Self> {
        let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
        DetectorPair::ALL
            .into_iter()
            .find(|p| p.detectors() == [lo, hi])
    }

    fn label(self, side: Side) -> String {
        let [x, y] = self.detectors();
        let s = side.prefix();
        format!("D{}{s}D{}{s}", x.index(), y.index())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DetectionPattern {
    pub side_a: DetectorPair,
    pub side_b: DetectorPair,
}

impl DetectionPattern {
    pub fn new(side_a: DetectorPair, side_b: DetectorPair) -> Self {
        DetectionPattern { side_a, side_b }
    }

    pub fn from_detectors(side_a: [Detector; 2], side_b: [Detector; 2]) -> Result<Self> {
        let pair = |d: [Detector; 2], side: Side| {
            DetectorPair::from_detectors(d[0], d[1]).ok_or_else(|| {
                let s = side.prefix();
                Error::InvalidPattern(format!("D{}{s}D{}{s}", d[0].index(), d[1].index()))
            })
        };
        Ok(DetectionPattern::new(
            pair(side_a, Side::A)?,
            pair(side_b, Side::B)?,
        ))
    }

    pub fn pair(&self, side: Side) -> DetectorPair {
        match side {
            Side::A => self.side_a,
            Side::B => self.side_b,
        }
    }
}

impl fmt::Display for DetectionPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}{}",
            self.side_a.label(Side::A),
            self.side_b.label(Side::B)
        )
    }
}

impl FromStr for DetectionPattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        success_patterns()
            .into_iter()
            .find(|p| p.to_string() == s)
            .ok_or_else(|| Error::InvalidPattern(s.to_string()))
    }
}

/// All sixteen heralding patterns, side A major.
pub fn success_patterns() -> Vec<DetectionPattern> {
    DetectorPair::ALL
        .into_iter()
        .flat_map(|a| {
            DetectorPair::ALL
                .into_iter()
                .map(move |b| DetectionPattern::new(a, b))
        })
        .collect()
}

/// Photon counts at the eight detectors (D1a..D4a, D1b..D4b).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DetectorRecord([u32; 8]);

impl DetectorRecord {
    pub fn count(&self, side: Side, detector: Detector) -> u32 {
        self.0[detector.slot(side)]
    }

    pub fn counts(&self) -> [u32; 8] {
        self.0
    }

    pub fn total(&self) -> u32 {
        self.0.iter().sum()
    }

    fn heralds(&self, pattern: &DetectionPattern, model: DetectorModel) -> bool {
        Side::BOTH.into_iter().all(|side| {
            let fired = pattern.pair(side).detectors();
            Detector::ALL.into_iter().all(|d| {
                let n = self.count(side, d);
                match (fired.contains(&d), model) {
                    (false, _) => n == 0,
                    (true, DetectorModel::NumberResolving) => n == 1,
                    (true, DetectorModel::Threshold) => n >= 1,
                }
            })
        })
    }
}

fn is_output(mode: &ModeId) -> bool {
    matches!(mode.spatial.as_str(), "out1" | "out2")
}

fn detector_of(mode: &ModeId) -> Option<(Side, Detector)> {
    let label = mode.spatial.as_str();
    let side = match label.get(..1)? {
        "a" => Side::A,
        "b" => Side::B,
        _ => return None,
    };
    let detector = match label.get(1..)? {
        "5" => Detector::D1,
        "6" => Detector::D2,
        "7" => Detector::D3,
        "8" => Detector::D4,
        _ => return None,
    };
    (detector.polarization() == mode.pol).then_some((side, detector))
}

/// Splits a configuration into its detector record (bins aggregated) and the output part.
fn split_basis(basis: &FockBasis) -> Result<(DetectorRecord, FockBasis)> {
    let mut record = DetectorRecord::default();
    for (mode, n) in basis.iter() {
        if is_output(mode) {
            continue;
        }
        let (side, det) = detector_of(mode).ok_or_else(|| Error::UnmeasuredMode(mode.clone()))?;
        record.0[det.slot(side)] += n;
    }
    Ok((record, basis.restricted(is_output)))
}

/// A state split by detector record: (record, output configuration, amplitude).
#[derive(Clone, Debug, PartialEq)]
pub struct Classified {
    terms: Vec<(DetectorRecord, FockBasis, Complex64)>,
}

impl Classified {
    pub fn new(state: &PureState) -> Result<Self> {
        let terms = state
            .terms()
            .map(|(basis, amp)| {
                let (record, out) = split_basis(basis)?;
                Ok((record, out, amp))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Classified { terms })
    }

    /// Probability of every detector record; sums to the squared norm of the state.
    pub fn outcomes(&self) -> BTreeMap<DetectorRecord, f64> {
        self.grouped(|_| true)
            .into_iter()
            .map(|(r, s)| (r, s.norm_sqr()))
            .collect()
    }

    fn grouped(
        &self,
        mut keep: impl FnMut(&DetectorRecord) -> bool,
    ) -> BTreeMap<DetectorRecord, PureState> {
        let mut groups: BTreeMap<DetectorRecord, Vec<(FockBasis, Complex64)>> = BTreeMap::new();
        for (record, out, amp) in &self.terms {
            if keep(record) {
                groups.entry(*record).or_default().push((out.clone(), *amp));
            }
        }
        groups
            .into_iter()
            .map(|(r, terms)| (r, PureState::from_terms(terms)))
            .collect()
    }

    pub fn herald(&self, pattern: &DetectionPattern, model: DetectorModel) -> Result<Heralded> {
        let parts = self.grouped(|r| r.heralds(pattern, model));
        let probability: f64 = parts.values().map(PureState::norm_sqr).sum();
        if probability == 0.0 {
            return Ok(Heralded {
                probability: 0.0,
                conditioned: None,
            });
        }
        let branches = parts
            .values()
            .filter(|p| !p.is_zero())
            .map(|p| {
                let (norm, unit) = p.normalize()?;
                Ok((norm * norm / probability, unit))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Heralded {
            probability,
            conditioned: Some(MixedState::new(branches)?),
        })
    }
}

/// Probability of every detector record; sums to the squared norm of the state.
pub fn detector_outcomes(state: &PureState) -> Result<BTreeMap<DetectorRecord, f64>> {
    Ok(Classified::new(state)?.outcomes())
}

/// Result of conditioning on one detection pattern.
#[derive(Clone, Debug, PartialEq)]
pub struct Heralded {
    pub probability: f64,
    /// State of `out1`/`out2`; one branch per compatible detector record.
    /// `None` when the pattern has zero probability.
    pub conditioned: Option<MixedState>,
}

impl Heralded {
    pub fn pure_state(&self) -> Option<&PureState> {
        self.conditioned.as_ref().and_then(MixedState::as_pure)
    }
}

/// Keeps the terms compatible with `pattern` and conditions the output modes on them.
pub fn postselect(
    state: &PureState,
    pattern: &DetectionPattern,
    model: DetectorModel,
) -> Result<Heralded> {
    Classified::new(state)?.herald(pattern, model)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProtocolConfig {
    pub alpha: f64,
    pub beta: f64,
    pub eta: f64,
    pub t: f64,
    pub detector_model: DetectorModel,
}

impl ProtocolConfig {
    pub fn new(
        alpha: f64,
        beta: f64,
        eta: f64,
        t: f64,
        detector_model: DetectorModel,
    ) -> Result<Self> {
        let config = ProtocolConfig {
            alpha,
            beta,
            eta,
            t,
            detector_model,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        check_coefficients(self.alpha, self.beta)?;
        check_unit_interval("eta", self.eta)?;
        check_unit_interval("t", self.t)?;
        Ok(())
    }
}

fn check_coefficients(alpha: f64, beta: f64) -> Result<()> {
    for (name, value) in [("alpha", alpha), ("beta", beta)] {
        if !(value >= 0.0) || !value.is_finite() {
            return Err(Error::Domain {
                name,
                value,
                range: "[0, 1]",
            });
        }
    }
    let sum = alpha * alpha + beta * beta;
    if (sum - 1.0).abs() > COEFFICIENT_TOL {
        return Err(Error::UnnormalizedCoefficients(sum));
    }
    Ok(())
}

fn qubit(alpha: f64, beta: f64, path: &Spatial) -> PureState {
    &(&PureState::single(ModeId::s_h(path.clone())) * alpha)
        + &(&PureState::single(ModeId::l_v(path.clone())) * beta)
}

/// `(|ψ>_{a1}|0>_{b1} + |0>_{a1}|ψ>_{b1})/√2` and the vacuum.
pub fn prepare_input_branches(alpha: f64, beta: f64) -> Result<(PureState, PureState)> {
    check_coefficients(alpha, beta)?;
    let raw = &qubit(alpha, beta, &Side::A.path(1)) + &qubit(alpha, beta, &Side::B.path(1));
    let (_, entangled) = raw.normalize()?;
    Ok((entangled, PureState::vacuum()))
}

/// `|S_H>|L_V>` on the side's auxiliary path.
pub fn prepare_auxiliary(side: Side) -> PureState {
    let path = side.path(2);
    PureState::basis(FockBasis::from_counts([
        (ModeId::s_h(path.clone()), 1),
        (ModeId::l_v(path), 1),
    ]))
}

/// Normalized target `((α S_H + β L_V)_{out1} + (α S_H + β L_V)_{out2})/√2`.
pub fn ideal_output(alpha: f64, beta: f64) -> Result<PureState> {
    check_coefficients(alpha, beta)?;
    let raw = &qubit(alpha, beta, &Side::A.output()) + &qubit(alpha, beta, &Side::B.output());
    Ok(raw.normalize()?.1)
}

/// Sign conventions of the circuit. Only the 50:50 splitter is adjustable.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Conventions {
    pub beam_splitter: [[f64; 2]; 2],
}

impl Default for Conventions {
    fn default() -> Self {
        Conventions {
            beam_splitter: BALANCED_SPLITTER,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Element {
    pub name: &'static str,
    pub map: LinearModeMap,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Circuit {
    elements: Vec<Element>,
}

impl Circuit {
    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn apply(&self, state: &PureState) -> Result<PureState> {
        self.elements
            .iter()
            .try_fold(state.clone(), |s, e| e.map.apply(&s))
    }

    /// Single map equivalent to the whole element sequence.
    pub fn composed(&self) -> Result<LinearModeMap> {
        self.elements
            .iter()
            .try_fold(LinearModeMap::identity(), |acc, e| acc.then(&e.map))
    }
}

pub fn build_circuit(t: f64) -> Result<Circuit> {
    build_circuit_with(t, &Conventions::default())
}

pub fn build_circuit_with(t: f64, conventions: &Conventions) -> Result<Circuit> {
    let (a, b) = (Side::A, Side::B);
    let bs = |s: Side| {
        beam_splitter_map_with(
            &s.path(1),
            &s.path(2),
            &s.path(3),
            &s.path(4),
            conventions.beam_splitter,
        )
    };
    let elements = vec![
        Element {
            name: "VBS1",
            map: vbs_map(&a.path(2), &a.path(2), &a.output(), t)?,
        },
        Element {
            name: "VBS2",
            map: vbs_map(&b.path(2), &b.path(2), &b.output(), t)?,
        },
        Element {
            name: "BS1",
            map: bs(a)?,
        },
        Element {
            name: "BS2",
            map: bs(b)?,
        },
        Element {
            name: "PBS5",
            map: pbs_map(&a.path(3), &a.path(5), &a.path(6))?,
        },
        Element {
            name: "PBS6",
            map: pbs_map(&a.path(4), &a.path(7), &a.path(8))?,
        },
        Element {
            name: "PBS7",
            map: pbs_map(&b.path(3), &b.path(5), &b.path(6))?,
        },
        Element {
            name: "PBS8",
            map: pbs_map(&b.path(4), &b.path(7), &b.path(8))?,
        },
    ];
    Ok(Circuit { elements })
}

/// Both input branches after the full circuit: (entangled, vacuum).
pub fn evolved_branches(
    alpha: f64,
    beta: f64,
    t: f64,
    conventions: &Conventions,
) -> Result<(PureState, PureState)> {
    // The composed map expands each input term once instead of after every element.
    let circuit = build_circuit_with(t, conventions)?.composed()?;
    let (entangled, vacuum) = prepare_input_branches(alpha, beta)?;
    let aux = prepare_auxiliary(Side::A).tensor(&prepare_auxiliary(Side::B))?;
    Ok((
        circuit.apply(&entangled.tensor(&aux)?)?,
        circuit.apply(&vacuum.tensor(&aux)?)?,
    ))
}

/// Phase flips on output sublevels applied after a given herald.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Correction {
    flips: Vec<(Side, Component)>,
}

const FLIP_SLOTS: [(Side, Component); 4] = [
    (Side::A, Component::SH),
    (Side::A, Component::LV),
    (Side::B, Component::SH),
    (Side::B, Component::LV),
];

impl Correction {
    fn from_mask(mask: u8) -> Self {
        Correction {
            flips: FLIP_SLOTS
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, f)| *f)
                .collect(),
        }
    }

    pub fn flips(&self) -> &[(Side, Component)] {
        &self.flips
    }

    pub fn is_identity(&self) -> bool {
        self.flips.is_empty()
    }

    pub fn elements(&self) -> Vec<LinearModeMap> {
        self.flips
            .iter()
            .map(|(side, c)| phase_flip_map(&side.output(), *c))
            .collect()
    }

    pub fn apply(&self, state: &PureState) -> Result<PureState> {
        self.elements()
            .iter()
            .try_fold(state.clone(), |s, m| m.apply(&s))
    }

    pub fn apply_mixed(&self, state: &MixedState) -> Result<MixedState> {
        let branches = state
            .branches()
            .iter()
            .map(|(w, s)| Ok((*w, self.apply(s)?)))
            .collect::<Result<Vec<_>>>()?;
        MixedState::new(branches)
    }
}

impl fmt::Display for Correction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.flips.is_empty() {
            return f.write_str("none");
        }
        for (i, (side, c)) in self.flips.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "flip {c} on {}", side.output())?;
        }
        Ok(())
    }
}

/// Per-pattern corrections, found by searching all sign assignments.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrectionTable {
    entries: BTreeMap<DetectionPattern, Correction>,
}

// Generic coefficients so that α and β flips are distinguishable.
const REFERENCE_ALPHA: f64 = 0.6;
const REFERENCE_BETA: f64 = 0.8;
const REFERENCE_T: f64 = 0.25;

impl CorrectionTable {
    pub fn discover(conventions: &Conventions) -> Result<Self> {
        let (evolved, _) =
            evolved_branches(REFERENCE_ALPHA, REFERENCE_BETA, REFERENCE_T, conventions)?;
        let evolved = Classified::new(&evolved)?;
        let ideal = ideal_output(REFERENCE_ALPHA, REFERENCE_BETA)?;
        let mut entries = BTreeMap::new();
        for pattern in success_patterns() {
            let heralded = evolved.herald(&pattern, DetectorModel::NumberResolving)?;
            let label = pattern.to_string();
            let Some(state) = heralded.pure_state() else {
                return Err(Error::NoCorrection {
                    pattern: label,
                    best: 0.0,
                });
            };
            let mut best: f64 = 0.0;
            let mut hits = Vec::new();
            for mask in 0u8..16 {
                let overlap = ideal.overlap_sqr(&Correction::from_mask(mask).apply(state)?);
                best = best.max(overlap);
                if overlap >= 1.0 - CORRECTION_TOL {
                    hits.push(mask);
                }
            }
            // A flip set and its complement differ only by a global sign.
            let correction = match hits.as_slice() {
                [] => {
                    return Err(Error::NoCorrection {
                        pattern: label,
                        best,
                    })
                }
                [m, n] if m ^ n == 0b1111 => {
                    let pick = *[*m, *n]
                        .iter()
                        .min_by_key(|x| (x.count_ones(), **x))
                        .expect("two candidates");
                    Correction::from_mask(pick)
                }
                _ => return Err(Error::AmbiguousCorrection { pattern: label }),
            };
            entries.insert(pattern, correction);
        }
        Ok(CorrectionTable { entries })
    }

    pub fn get(&self, pattern: &DetectionPattern) -> Result<&Correction> {
        self.entries
            .get(pattern)
            .ok_or_else(|| Error::InvalidPattern(pattern.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&DetectionPattern, &Correction)> {
        self.entries.iter()
    }
}

/// Circuit conventions together with their discovered correction table.
#[derive(Clone, Debug, PartialEq)]
pub struct Simulator {
    conventions: Conventions,
    table: CorrectionTable,
}

impl Simulator {
    pub fn new(conventions: Conventions) -> Result<Self> {
        let table = CorrectionTable::discover(&conventions)?;
        Ok(Simulator { conventions, table })
    }

    /// Shared simulator for the standard conventions, built on first use.
    pub fn standard() -> Result<&'static Simulator> {
        static STANDARD: OnceLock<Result<Simulator>> = OnceLock::new();
        STANDARD
            .get_or_init(|| Simulator::new(Conventions::default()))
            .as_ref()
            .map_err(Clone::clone)
    }

    pub fn conventions(&self) -> &Conventions {
        &self.conventions
    }

    pub fn table(&self) -> &CorrectionTable {
        &self.table
    }

    pub fn run(&self, config: &ProtocolConfig) -> Result<ProtocolResult> {
        run_with_table(config, &self.conventions, &self.table)
    }
}

/// Correction for a heralding pattern under the standard conventions.
pub fn correction_for(pattern: &DetectionPattern) -> Result<Correction> {
    Simulator::standard()?.table().get(pattern).cloned()
}

#[derive(Clone, Debug, PartialEq)]
pub struct PatternOutcome {
    pub pattern: DetectionPattern,
    pub prob_entangled: f64,
    pub prob_vacuum: f64,
    pub correction: Correction,
    /// Corrected output of the entangled branch.
    pub conditioned_entangled: Option<MixedState>,
    /// Overlap² of the corrected entangled-branch output with the target.
    pub fidelity: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolResult {
    pub config: ProtocolConfig,
    pub p1: f64,
    pub p2: f64,
    pub p_total: f64,
    /// Weight of the entangled component after heralding; 0 when undefined.
    pub eta_out: f64,
    /// False when no pattern can fire (p_total = 0).
    pub eta_out_defined: bool,
    /// `eta_out / eta`; `None` when eta = 0 or eta_out is undefined.
    pub g: Option<f64>,
    pub per_pattern: Vec<PatternOutcome>,
    /// Heralded state of `out1`/`out2` with branches equal up to phase merged.
    pub conditioned_output: Option<MixedState>,
    pub output_fidelity: Option<f64>,
}

impl ProtocolResult {
    pub fn pattern(&self, pattern: &DetectionPattern) -> Option<&PatternOutcome> {
        self.per_pattern.iter().find(|o| &o.pattern == pattern)
    }
}

pub fn run_protocol(config: &ProtocolConfig) -> Result<ProtocolResult> {
    Simulator::standard()?.run(config)
}

/// Runs with non-standard conventions; the correction table is rediscovered.
pub fn run_protocol_with(
    config: &ProtocolConfig,
    conventions: &Conventions,
) -> Result<ProtocolResult> {
    Simulator::new(*conventions)?.run(config)
}

fn run_with_table(
    config: &ProtocolConfig,
    conventions: &Conventions,
    table: &CorrectionTable,
) -> Result<ProtocolResult> {
    config.validate()?;
    let eta = config.eta;
    let (entangled, vacuum) = evolved_branches(config.alpha, config.beta, config.t, conventions)?;
    let ideal = ideal_output(config.alpha, config.beta)?;
    let (entangled, vacuum) = (Classified::new(&entangled)?, Classified::new(&vacuum)?);

    let mut per_pattern = Vec::with_capacity(16);
    let mut vacuum_conditioned = Vec::with_capacity(16);
    for pattern in success_patterns() {
        let correction = table.get(&pattern)?.clone();
        let he = entangled.herald(&pattern, config.detector_model)?;
        let hv = vacuum.herald(&pattern, config.detector_model)?;
        let conditioned_entangled = he
            .conditioned
            .as_ref()
            .map(|m| correction.apply_mixed(m))
            .transpose()?;
        let fidelity = conditioned_entangled
            .as_ref()
            .map(|m| m.fidelity_with(&ideal));
        vacuum_conditioned.push(hv.conditioned);
        per_pattern.push(PatternOutcome {
            pattern,
            prob_entangled: he.probability,
            prob_vacuum: hv.probability,
            correction,
            conditioned_entangled,
            fidelity,
        });
    }

    let p1: f64 = per_pattern.iter().map(|o| o.prob_entangled).sum();
    let p2: f64 = per_pattern.iter().map(|o| o.prob_vacuum).sum();
    let p_total = eta * p1 + (1.0 - eta) * p2;
    let (eta_out, eta_out_defined) = if p_total > 0.0 {
        (eta * p1 / p_total, true)
    } else {
        (0.0, false)
    };
    let g = (eta_out_defined && eta > 0.0).then(|| eta_out / eta);

    let conditioned_output = if eta_out_defined {
        let mut branches = Vec::new();
        for (o, vac) in per_pattern.iter().zip(&vacuum_conditioned) {
            let parts = [
                (eta * o.prob_entangled, o.conditioned_entangled.as_ref()),
                ((1.0 - eta) * o.prob_vacuum, vac.as_ref()),
            ];
            for (scale, mixed) in parts {
                if let (true, Some(m)) = (scale > 0.0, mixed) {
                    for (w, s) in m.branches() {
                        branches.push((scale * w / p_total, s.clone()));
                    }
                }
            }
        }
        Some(MixedState::new(branches)?.merged(CORRECTION_TOL))
    } else {
        None
    };

    let output_fidelity = (p1 > 0.0).then(|| {
        per_pattern
            .iter()
            .filter_map(|o| o.fidelity.map(|f| f * o.prob_entangled))
            .sum::<f64>()
            / p1
    });

    Ok(ProtocolResult {
        config: *config,
        p1,
        p2,
        p_total,
        eta_out,
        eta_out_defined,
        g,
        per_pattern,
        conditioned_output,
        output_fidelity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn first_pattern() -> DetectionPattern {
        DetectionPattern::new(DetectorPair::D1D2, DetectorPair::D1D2)
    }

    #[test]
    fn input_branches() {
        let (ent, vac) = prepare_input_branches(1.0, 0.0).unwrap();
        let expected = &(&PureState::single(ModeId::s_h("a1"))
            + &PureState::single(ModeId::s_h("b1")))
            * FRAC_1_SQRT_2;
        assert!(ent.approx_eq(&expected, 1e-15));
        assert_eq!(vac, PureState::vacuum());

        let (ent, _) = prepare_input_branches(FRAC_1_SQRT_2, FRAC_1_SQRT_2).unwrap();
        assert_eq!(ent.len(), 4);
        for (_, a) in ent.terms() {
            assert_abs_diff_eq!(a.re, 0.5, epsilon = 1e-15);
        }
        assert!(ent.is_normalized());
        assert!(prepare_input_branches(0.5, 0.5).is_err());
    }

    #[test]
    fn auxiliary_pair() {
        let aux = prepare_auxiliary(Side::A);
        let basis = FockBasis::from_counts([(ModeId::s_h("a2"), 1), (ModeId::l_v("a2"), 1)]);
        assert_eq!(aux, PureState::basis(basis.clone()));
        assert_eq!(basis.total_photon_number(), 2);
        assert!(prepare_auxiliary(Side::B)
            .occupied_modes()
            .iter()
            .all(|m| m.spatial.as_str() == "b2"));
    }

    #[test]
    fn circuit_order_and_names() {
        let names: Vec<_> = build_circuit(0.3)
            .unwrap()
            .elements()
            .iter()
            .map(|e| e.name)
            .collect();
        assert_eq!(
            names,
            ["VBS1", "VBS2", "BS1", "BS2", "PBS5", "PBS6", "PBS7", "PBS8"]
        );
        assert!(build_circuit(1.2).is_err());
    }

    #[test]
    fn full_expansion_has_64_terms_before_the_circuit() {
        let (ent, _) = prepare_input_branches(FRAC_1_SQRT_2, FRAC_1_SQRT_2).unwrap();
        let t = 0.3;
        let vbs = |s: Side| vbs_map(&s.path(2), &s.path(2), &s.output(), t).unwrap();
        let aux = vbs(Side::B)
            .apply(
                &vbs(Side::A)
                    .apply(
                        &prepare_auxiliary(Side::A)
                            .tensor(&prepare_auxiliary(Side::B))
                            .unwrap(),
                    )
                    .unwrap(),
            )
            .unwrap();
        assert_eq!(aux.len(), 16);
        // 4 signal terms x 4 x 4 auxiliary terms, all on distinct configurations.
        let whole = ent.tensor(&aux).unwrap();
        assert_eq!(whole.len(), 64);
        assert!(whole.terms().all(|(b, _)| b.total_photon_number() == 5));
    }

    #[test]
    fn composed_circuit_matches_element_by_element() {
        let t = 0.35;
        let circuit = build_circuit(t).unwrap();
        let (ent, _) = prepare_input_branches(0.6, 0.8).unwrap();
        let aux = prepare_auxiliary(Side::A)
            .tensor(&prepare_auxiliary(Side::B))
            .unwrap();
        let input = ent.tensor(&aux).unwrap();
        let stepwise = circuit.apply(&input).unwrap();
        let (composed, _) = evolved_branches(0.6, 0.8, t, &Conventions::default()).unwrap();
        assert_eq!(stepwise.len(), composed.len());
        assert!(stepwise.approx_eq(&composed, 1e-12));
    }

    #[test]
    fn photon_number_conserved() {
        let (ent, vac) = evolved_branches(0.6, 0.8, 0.3, &Conventions::default()).unwrap();
        assert!(ent.terms().all(|(b, _)| b.total_photon_number() == 5));
        assert!(vac.terms().all(|(b, _)| b.total_photon_number() == 4));
        assert_abs_diff_eq!(ent.norm_sqr(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(vac.norm_sqr(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn sixteen_patterns() {
        let patterns = success_patterns();
        assert_eq!(patterns.len(), 16);
        assert!(patterns.contains(&first_pattern()));
        assert!(DetectorPair::from_detectors(Detector::D1, Detector::D3).is_none());
        assert!(DetectionPattern::from_detectors(
            [Detector::D1, Detector::D3],
            [Detector::D1, Detector::D2]
        )
        .is_err());
        assert_eq!(
            DetectionPattern::from_detectors(
                [Detector::D2, Detector::D1],
                [Detector::D4, Detector::D3]
            )
            .unwrap(),
            DetectionPattern::new(DetectorPair::D1D2, DetectorPair::D3D4)
        );
        assert_eq!(first_pattern().to_string(), "D1aD2aD1bD2b");
        assert_eq!(
            "D3aD4aD1bD4b"
                .parse::<DetectionPattern>()
                .unwrap()
                .to_string(),
            "D3aD4aD1bD4b"
        );
    }

    #[test]
    fn herald_on_first_pattern() {
        let t: f64 = 0.25;
        let (alpha, beta) = (0.6, 0.8);
        let (ent, vac) = evolved_branches(alpha, beta, t, &Conventions::default()).unwrap();
        let he = postselect(&ent, &first_pattern(), DetectorModel::NumberResolving).unwrap();
        assert_abs_diff_eq!(
            he.probability,
            t.powi(3) * (1.0 - t) / 16.0,
            epsilon = 1e-15
        );
        // Under the splitter convention above this herald needs no correction.
        let state = he.pure_state().unwrap();
        let ideal = ideal_output(alpha, beta).unwrap();
        assert_abs_diff_eq!(ideal.overlap_sqr(state), 1.0, epsilon = 1e-12);

        let hv = postselect(&vac, &first_pattern(), DetectorModel::NumberResolving).unwrap();
        assert_abs_diff_eq!(hv.probability, t.powi(4) / 16.0, epsilon = 1e-15);
        assert_eq!(hv.pure_state().unwrap(), &PureState::vacuum());
    }

    #[test]
    fn empty_herald_is_zero_marker() {
        let he = postselect(
            &PureState::vacuum(),
            &first_pattern(),
            DetectorModel::NumberResolving,
        )
        .unwrap();
        assert_eq!(he.probability, 0.0);
        assert!(he.conditioned.is_none());
    }

    #[test]
    fn postselect_rejects_unmeasured_modes() {
        let stray = PureState::single(ModeId::s_h("a1"));
        assert!(matches!(
            postselect(&stray, &first_pattern(), DetectorModel::NumberResolving),
            Err(Error::UnmeasuredMode(_))
        ));
    }

    #[test]
    fn correction_table_is_complete_and_involutive() {
        let (ent, _) = evolved_branches(0.6, 0.8, 0.4, &Conventions::default()).unwrap();
        for pattern in success_patterns() {
            let correction = correction_for(&pattern).unwrap();
            let state = postselect(&ent, &pattern, DetectorModel::NumberResolving)
                .unwrap()
                .pure_state()
                .unwrap()
                .clone();
            let twice = correction
                .apply(&correction.apply(&state).unwrap())
                .unwrap();
            assert!(twice.approx_eq(&state, 1e-15));
        }
        assert!(correction_for(&first_pattern()).unwrap().is_identity());
    }

    #[test]
    fn correction_labels() {
        assert_eq!(Correction::default().to_string(), "none");
        assert_eq!(
            Correction::from_mask(0b0101).to_string(),
            "flip S_H on out1; flip S_H on out2"
        );
    }

    #[test]
    fn eta_one_has_no_vacuum_weight() {
        let config = ProtocolConfig::new(
            FRAC_1_SQRT_2,
            FRAC_1_SQRT_2,
            1.0,
            0.3,
            DetectorModel::NumberResolving,
        )
        .unwrap();
        let r = run_protocol(&config).unwrap();
        assert_abs_diff_eq!(r.eta_out, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.g.unwrap(), 1.0, epsilon = 1e-15);
        assert_eq!(r.conditioned_output.unwrap().branches().len(), 1);
    }

    #[test]
    fn degenerate_transmissions() {
        let zero = ProtocolConfig::new(1.0, 0.0, 0.4, 0.0, DetectorModel::NumberResolving).unwrap();
        let r = run_protocol(&zero).unwrap();
        assert_eq!(r.p_total, 0.0);
        assert!(!r.eta_out_defined);
        assert_eq!(r.eta_out, 0.0);
        assert!(r.g.is_none());
        assert!(r.conditioned_output.is_none());
        assert!(r.output_fidelity.is_none());

        let one = ProtocolConfig::new(1.0, 0.0, 1.0, 1.0, DetectorModel::NumberResolving).unwrap();
        let r = run_protocol(&one).unwrap();
        assert!(!r.eta_out_defined);

        let eta_zero =
            ProtocolConfig::new(1.0, 0.0, 0.0, 0.3, DetectorModel::NumberResolving).unwrap();
        let r = run_protocol(&eta_zero).unwrap();
        assert!(r.eta_out_defined);
        assert_eq!(r.eta_out, 0.0);
        assert!(r.g.is_none());
    }

    #[test]
    fn config_validation() {
        let nr = DetectorModel::NumberResolving;
        assert!(ProtocolConfig::new(0.6, 0.8, 0.5, 1.5, nr).is_err());
        assert!(ProtocolConfig::new(0.6, 0.8, -0.1, 0.5, nr).is_err());
        assert!(ProtocolConfig::new(0.6, 0.7, 0.5, 0.5, nr).is_err());
        assert!(ProtocolConfig::new(-0.6, 0.8, 0.5, 0.5, nr).is_err());
        assert!(ProtocolConfig::new(0.6, 0.8, 0.5, f64::NAN, nr).is_err());
    }
}
