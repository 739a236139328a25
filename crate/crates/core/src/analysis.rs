//! Closed-form success probability, fidelity and gain, the parameter sweeps
//! behind the figure data, and cross-validation against the simulator.

use std::f64::consts::FRAC_1_SQRT_2;

use rayon::prelude::*;

use crate::error::{check_unit_interval, Error, Result};
use crate::protocol::{DetectorModel, ProtocolConfig, Simulator};

/// Agreement required between closed forms and the simulator.
pub const VERIFY_TOL: f64 = 1e-10;

/// Success probability of the entangled branch, t³(1−t).
pub fn closed_p1(t: f64) -> Result<f64> {
    let t = check_unit_interval("t", t)?;
    Ok(t.powi(3) * (1.0 - t))
}

/// Success probability of the vacuum branch, t⁴.
pub fn closed_p2(t: f64) -> Result<f64> {
    let t = check_unit_interval("t", t)?;
    Ok(t.powi(4))
}

/// (1−2η)t⁴ + ηt³.
pub fn closed_p_total(eta: f64, t: f64) -> Result<f64> {
    let eta = check_unit_interval("eta", eta)?;
    let t = check_unit_interval("t", t)?;
    Ok((1.0 - 2.0 * eta) * t.powi(4) + eta * t.powi(3))
}

/// Output fidelity η(1−t) / (η(1−t) + (1−η)t).
///
/// `None` when the ratio is 0/0 (η = 0, t = 0). At η = 1 the value is 1 for
/// every t, including the removable point t = 1.
pub fn closed_eta_prime(eta: f64, t: f64) -> Result<Option<f64>> {
    let eta = check_unit_interval("eta", eta)?;
    let t = check_unit_interval("t", t)?;
    if eta == 1.0 {
        return Ok(Some(1.0));
    }
    let denom = eta * (1.0 - t) + (1.0 - eta) * t;
    Ok((denom > 0.0).then(|| eta * (1.0 - t) / denom))
}

/// Amplification factor (1−t) / (η(1−t) + (1−η)t); `None` for η = 0.
pub fn closed_g(eta: f64, t: f64) -> Result<Option<f64>> {
    let eta = check_unit_interval("eta", eta)?;
    let t = check_unit_interval("t", t)?;
    if eta == 0.0 {
        return Ok(None);
    }
    if eta == 1.0 {
        return Ok(Some(1.0));
    }
    let denom = eta * (1.0 - t) + (1.0 - eta) * t;
    Ok(Some((1.0 - t) / denom))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Source {
    ClosedForm,
    BruteForce,
}

impl Source {
    pub fn label(self) -> &'static str {
        match self {
            Source::ClosedForm => "closed",
            Source::BruteForce => "brute",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepRow {
    pub eta: f64,
    pub t: f64,
    pub p1: f64,
    pub p2: f64,
    pub p_total: f64,
    pub eta_prime: Option<f64>,
    pub g: Option<f64>,
    pub source: Source,
}

impl SweepRow {
    pub fn closed(eta: f64, t: f64) -> Result<Self> {
        Ok(SweepRow {
            eta,
            t,
            p1: closed_p1(t)?,
            p2: closed_p2(t)?,
            p_total: closed_p_total(eta, t)?,
            eta_prime: closed_eta_prime(eta, t)?,
            g: closed_g(eta, t)?,
            source: Source::ClosedForm,
        })
    }

    pub fn brute(eta: f64, t: f64, alpha: f64, beta: f64) -> Result<Self> {
        SweepRow::brute_with(Simulator::standard()?, eta, t, alpha, beta)
    }

    pub fn brute_with(sim: &Simulator, eta: f64, t: f64, alpha: f64, beta: f64) -> Result<Self> {
        let config = ProtocolConfig::new(alpha, beta, eta, t, DetectorModel::NumberResolving)?;
        let r = sim.run(&config)?;
        Ok(SweepRow {
            eta,
            t,
            p1: r.p1,
            p2: r.p2,
            p_total: r.p_total,
            eta_prime: r.eta_out_defined.then_some(r.eta_out),
            g: r.g,
            source: Source::BruteForce,
        })
    }
}

/// `min, min + step, ...` up to `max` inclusive, snapped to 12 decimals so
/// that grids print cleanly.
pub fn t_grid(min: f64, max: f64, step: f64) -> Result<Vec<f64>> {
    check_unit_interval("t-min", min)?;
    check_unit_interval("t-max", max)?;
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::Domain {
            name: "t-step",
            value: step,
            range: "(0, 1]",
        });
    }
    if max < min {
        return Ok(Vec::new());
    }
    let count = ((max - min) / step + 1e-9).floor() as usize;
    Ok((0..=count)
        .map(|i| ((min + i as f64 * step) * 1e12).round() / 1e12)
        .filter(|t| *t <= max + 1e-12)
        .map(|t| t.min(1.0))
        .collect())
}

/// Evaluates every (η, t) pair, ordered by η then t. Brute-force rows use α = β = 1/√2.
pub fn sweep(eta_list: &[f64], t_grid: &[f64], source: Source) -> Result<Vec<SweepRow>> {
    let points: Vec<(f64, f64)> = eta_list
        .iter()
        .flat_map(|&eta| t_grid.iter().map(move |&t| (eta, t)))
        .collect();
    let mut rows: Vec<SweepRow> = points
        .par_iter()
        .map(|&(eta, t)| match source {
            Source::ClosedForm => SweepRow::closed(eta, t),
            Source::BruteForce => SweepRow::brute(eta, t, FRAC_1_SQRT_2, FRAC_1_SQRT_2),
        })
        .collect::<Result<_>>()?;
    rows.sort_by(|a, b| a.eta.total_cmp(&b.eta).then(a.t.total_cmp(&b.t)));
    Ok(rows)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Quantity {
    P1,
    P2,
    PTotal,
    EtaPrime,
    G,
}

impl Quantity {
    pub const ALL: [Quantity; 5] = [
        Quantity::P1,
        Quantity::P2,
        Quantity::PTotal,
        Quantity::EtaPrime,
        Quantity::G,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Quantity::P1 => "p1",
            Quantity::P2 => "p2",
            Quantity::PTotal => "p_total",
            Quantity::EtaPrime => "eta_prime",
            Quantity::G => "g",
        }
    }

    pub fn of(self, row: &SweepRow) -> Option<f64> {
        match self {
            Quantity::P1 => Some(row.p1),
            Quantity::P2 => Some(row.p2),
            Quantity::PTotal => Some(row.p_total),
            Quantity::EtaPrime => row.eta_prime,
            Quantity::G => row.g,
        }
    }
}

/// A grid point where the two sources disagree.
#[derive(Clone, Debug, PartialEq)]
pub struct Mismatch {
    pub quantity: Quantity,
    pub eta: f64,
    pub t: f64,
    pub alpha: f64,
    pub beta: f64,
    pub closed: Option<f64>,
    pub brute: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerificationReport {
    pub points: usize,
    pub tolerance: f64,
    /// Largest absolute error seen for each quantity, in [`Quantity::ALL`] order.
    pub max_errors: Vec<(Quantity, f64)>,
    pub mismatches: Vec<Mismatch>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty()
    }

    pub fn max_error(&self, quantity: Quantity) -> f64 {
        self.max_errors
            .iter()
            .find(|(q, _)| *q == quantity)
            .map_or(0.0, |(_, e)| *e)
    }
}

/// Compares the simulator against the closed forms on every grid point.
pub fn verify_against_brute_force(
    eta_grid: &[f64],
    t_grid: &[f64],
    alpha_beta_grid: &[(f64, f64)],
) -> Result<VerificationReport> {
    verify_with(Simulator::standard()?, eta_grid, t_grid, alpha_beta_grid)
}

pub fn verify_with(
    sim: &Simulator,
    eta_grid: &[f64],
    t_grid: &[f64],
    alpha_beta_grid: &[(f64, f64)],
) -> Result<VerificationReport> {
    let points: Vec<(f64, f64, f64, f64)> = eta_grid
        .iter()
        .flat_map(|&eta| {
            t_grid
                .iter()
                .flat_map(move |&t| alpha_beta_grid.iter().map(move |&(a, b)| (eta, t, a, b)))
        })
        .collect();
    let compared: Vec<Vec<(Quantity, f64, Option<Mismatch>)>> = points
        .par_iter()
        .map(|&(eta, t, alpha, beta)| {
            let closed = SweepRow::closed(eta, t)?;
            let brute = SweepRow::brute_with(sim, eta, t, alpha, beta)?;
            Ok(Quantity::ALL
                .into_iter()
                .map(|q| {
                    let (c, b) = (q.of(&closed), q.of(&brute));
                    let err = match (c, b) {
                        (Some(c), Some(b)) => (c - b).abs(),
                        (None, None) => 0.0,
                        _ => f64::INFINITY,
                    };
                    let mismatch = (!(err <= VERIFY_TOL)).then(|| Mismatch {
                        quantity: q,
                        eta,
                        t,
                        alpha,
                        beta,
                        closed: c,
                        brute: b,
                    });
                    (q, err, mismatch)
                })
                .collect())
        })
        .collect::<Result<_>>()?;

    let mut max_errors: Vec<(Quantity, f64)> = Quantity::ALL.iter().map(|q| (*q, 0.0)).collect();
    let mut mismatches = Vec::new();
    for point in compared {
        for (q, err, mismatch) in point {
            let slot = max_errors
                .iter_mut()
                .find(|(k, _)| *k == q)
                .expect("all quantities");
            slot.1 = slot.1.max(err);
            mismatches.extend(mismatch);
        }
    }
    Ok(VerificationReport {
        points: points.len(),
        tolerance: VERIFY_TOL,
        max_errors,
        mismatches,
    })
}
