//! The self-verification suite behind `timebin-amp verify`.

use std::f64::consts::FRAC_1_SQRT_2;

use crate::analysis::{closed_p1, closed_p2, t_grid, verify_with, Quantity, VerificationReport};
use crate::elements::beam_splitter_map_with;
use crate::error::Result;
use crate::fock::{FockBasis, ModeId, PureState, Spatial};
use crate::protocol::{
    build_circuit_with, detector_outcomes, evolved_branches, ideal_output, success_patterns,
    Classified, Conventions, DetectorModel, ProtocolConfig, Simulator,
};

/// Tolerance for exact identities (unitarity, uniformity, coefficient independence).
pub const EXACT_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GridSize {
    Quick,
    Full,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub etas: Vec<f64>,
    pub ts: Vec<f64>,
    pub coefficients: Vec<(f64, f64)>,
}

impl Grid {
    pub fn new(size: GridSize) -> Self {
        match size {
            GridSize::Quick => Grid {
                etas: vec![0.2, 0.4, 0.8],
                ts: t_grid(0.05, 0.95, 0.05).expect("static grid"),
                coefficients: vec![(1.0, 0.0), (FRAC_1_SQRT_2, FRAC_1_SQRT_2), (0.6, 0.8)],
            },
            GridSize::Full => Grid {
                etas: (1..=9).map(|i| f64::from(i) / 10.0).collect(),
                ts: t_grid(0.01, 0.99, 0.01).expect("static grid"),
                coefficients: vec![
                    (1.0, 0.0),
                    (0.0, 1.0),
                    (FRAC_1_SQRT_2, FRAC_1_SQRT_2),
                    (0.6, 0.8),
                    (0.8, 0.6),
                ],
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn from_result(
        name: &'static str,
        result: Result<std::result::Result<String, String>>,
    ) -> Self {
        match result {
            Ok(Ok(detail)) => CheckOutcome {
                name,
                passed: true,
                detail,
            },
            Ok(Err(detail)) => CheckOutcome {
                name,
                passed: false,
                detail,
            },
            Err(e) => CheckOutcome {
                name,
                passed: false,
                detail: e.to_string(),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckSuite {
    pub outcomes: Vec<CheckOutcome>,
    pub closed_form: Option<VerificationReport>,
}

impl CheckSuite {
    pub fn passed(&self) -> bool {
        self.outcomes.iter().all(|o| o.passed)
    }

    pub fn first_failure(&self) -> Option<&CheckOutcome> {
        self.outcomes.iter().find(|o| !o.passed)
    }
}

type Verdict = Result<std::result::Result<String, String>>;

fn element_isometry(grid: &Grid, conventions: &Conventions) -> Verdict {
    let mut worst: f64 = 0.0;
    for &t in &grid.ts {
        for element in build_circuit_with(t, conventions)?.elements() {
            worst = worst.max(element.map.isometry_defect());
        }
    }
    Ok(Ok(format!("max Gram deviation {worst:.3e}")))
}

fn hong_ou_mandel(conventions: &Conventions) -> Verdict {
    let sp = Spatial::new;
    let bs = beam_splitter_map_with(
        &sp("a1"),
        &sp("a2"),
        &sp("a3"),
        &sp("a4"),
        conventions.beam_splitter,
    )?;
    let input = PureState::basis(FockBasis::from_counts([
        (ModeId::s_h("a1"), 1),
        (ModeId::s_h("a2"), 1),
    ]));
    let out = bs.apply(&input)?;
    let coincidence = FockBasis::from_counts([(ModeId::s_h("a3"), 1), (ModeId::s_h("a4"), 1)]);
    let amp = out.amplitude(&coincidence).norm();
    Ok(if amp == 0.0 {
        Ok("no coincidence term".into())
    } else {
        Err(format!("coincidence amplitude {amp:e}"))
    })
}

fn completeness(grid: &Grid, conventions: &Conventions) -> Verdict {
    let mut worst: f64 = 0.0;
    for &t in &grid.ts {
        for &(alpha, beta) in &grid.coefficients {
            let (ent, vac) = evolved_branches(alpha, beta, t, conventions)?;
            for branch in [&ent, &vac] {
                let total: f64 = detector_outcomes(branch)?.values().sum();
                worst = worst.max((total - 1.0).abs());
                if (total - 1.0).abs() > EXACT_TOL {
                    return Ok(Err(format!(
                        "outcome probabilities sum to {total} at t={t}, alpha={alpha}, beta={beta}"
                    )));
                }
            }
        }
    }
    Ok(Ok(format!("max |sum - 1| = {worst:.3e}")))
}

fn pattern_uniformity(grid: &Grid, conventions: &Conventions) -> Verdict {
    let mut worst: f64 = 0.0;
    for &t in &grid.ts {
        let (ent, vac) = evolved_branches(FRAC_1_SQRT_2, FRAC_1_SQRT_2, t, conventions)?;
        let (ent, vac) = (Classified::new(&ent)?, Classified::new(&vac)?);
        let (want_e, want_v) = (closed_p1(t)? / 16.0, closed_p2(t)? / 16.0);
        for pattern in success_patterns() {
            let pe = ent
                .herald(&pattern, DetectorModel::NumberResolving)?
                .probability;
            let pv = vac
                .herald(&pattern, DetectorModel::NumberResolving)?
                .probability;
            let err = (pe - want_e).abs().max((pv - want_v).abs());
            worst = worst.max(err);
            if err > EXACT_TOL {
                return Ok(Err(format!(
                    "pattern {pattern} at t={t}: entangled {pe}, vacuum {pv}"
                )));
            }
        }
    }
    Ok(Ok(format!("max deviation {worst:.3e}")))
}

fn coefficient_independence(grid: &Grid, sim: &Simulator) -> Verdict {
    let mut worst: f64 = 0.0;
    for &eta in &grid.etas {
        for &t in &grid.ts {
            let runs = grid
                .coefficients
                .iter()
                .map(|&(a, b)| {
                    sim.run(&ProtocolConfig::new(
                        a,
                        b,
                        eta,
                        t,
                        DetectorModel::NumberResolving,
                    )?)
                })
                .collect::<Result<Vec<_>>>()?;
            let Some(first) = runs.first() else { continue };
            for r in &runs[1..] {
                let dev = (r.p1 - first.p1)
                    .abs()
                    .max((r.p2 - first.p2).abs())
                    .max((r.eta_out - first.eta_out).abs());
                worst = worst.max(dev);
                if dev > EXACT_TOL {
                    return Ok(Err(format!(
                        "eta={eta}, t={t}: alpha={} gives p1={} vs {}",
                        r.config.alpha, r.p1, first.p1
                    )));
                }
            }
        }
    }
    Ok(Ok(format!("max spread {worst:.3e}")))
}

fn correction_validity(grid: &Grid, sim: &Simulator) -> Verdict {
    let mut worst: f64 = 0.0;
    for &t in &grid.ts {
        for &(alpha, beta) in &grid.coefficients {
            let (ent, _) = evolved_branches(alpha, beta, t, sim.conventions())?;
            let ent = Classified::new(&ent)?;
            let ideal = ideal_output(alpha, beta)?;
            for pattern in success_patterns() {
                let heralded = ent.herald(&pattern, DetectorModel::NumberResolving)?;
                let Some(state) = heralded.pure_state() else {
                    return Ok(Err(format!("pattern {pattern} never fires at t={t}")));
                };
                let corrected = sim.table().get(&pattern)?.apply(state)?;
                let defect = 1.0 - ideal.overlap_sqr(&corrected);
                worst = worst.max(defect);
                if defect > crate::protocol::CORRECTION_TOL {
                    return Ok(Err(format!(
                        "pattern {pattern} at t={t}, alpha={alpha}, beta={beta}: overlap^2 {}",
                        1.0 - defect
                    )));
                }
            }
        }
    }
    Ok(Ok(format!("min overlap^2 1 - {worst:.3e}")))
}

/// Runs every check on `grid` under `conventions`.
pub fn run_checks(grid: &Grid, conventions: &Conventions) -> CheckSuite {
    let mut outcomes = vec![
        CheckOutcome::from_result("element isometry", element_isometry(grid, conventions)),
        CheckOutcome::from_result("hong-ou-mandel bunching", hong_ou_mandel(conventions)),
        CheckOutcome::from_result("outcome completeness", completeness(grid, conventions)),
        CheckOutcome::from_result("pattern uniformity", pattern_uniformity(grid, conventions)),
    ];
    let sim = match Simulator::new(*conventions) {
        Ok(sim) => sim,
        Err(e) => {
            outcomes.push(CheckOutcome {
                name: "correction table",
                passed: false,
                detail: e.to_string(),
            });
            return CheckSuite {
                outcomes,
                closed_form: None,
            };
        }
    };
    outcomes.push(CheckOutcome::from_result(
        "correction table",
        correction_validity(grid, &sim),
    ));
    outcomes.push(CheckOutcome::from_result(
        "coefficient independence",
        coefficient_independence(grid, &sim),
    ));
    let report = verify_with(&sim, &grid.etas, &grid.ts, &grid.coefficients);
    let closed_form = report.as_ref().ok().cloned();
    outcomes.push(CheckOutcome::from_result(
        "closed-form agreement",
        report.map(|r| {
            let summary = Quantity::ALL
                .iter()
                .map(|q| format!("{}={:.2e}", q.name(), r.max_error(*q)))
                .collect::<Vec<_>>()
                .join(" ");
            match r.mismatches.first() {
                None => Ok(format!("{} points, max errors {summary}", r.points)),
                Some(m) => Err(format!(
                    "{} at eta={}, t={}, alpha={}, beta={}: closed {:?} vs brute {:?}",
                    m.quantity.name(),
                    m.eta,
                    m.t,
                    m.alpha,
                    m.beta,
                    m.closed,
                    m.brute
                )),
            }
        }),
    ));
    CheckSuite {
        outcomes,
        closed_form,
    }
}
