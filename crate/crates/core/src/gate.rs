//! CNOT verification: truth tables, population tomograms and Bell-state
//! fidelity computed from oracle runs.
//!
//! Basis inputs `|00>..|11>` are the level populations `|0>..|3>`. The gate
//! acts in regime III, so tomogram inputs are injected at `tau2`.

use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::{integrate, DecayParams, IntegrateOptions};
use crate::pulse::{RegimeSchedule, Shape};
use crate::state::{binary_label, DensityMatrix, TwoQubitLabel, NUM_LEVELS};

/// Ideal CNOT on the level basis: `00->00, 01->01, 10->11, 11->10`.
pub const CNOT_MAP: [usize; NUM_LEVELS] = [0, 1, 3, 2];

/// Target Bell state `(|00> - i|11>) / sqrt(2)`.
pub fn bell_target() -> [C64; NUM_LEVELS] {
    [C64::new(FRAC_1_SQRT_2, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, -FRAC_1_SQRT_2)]
}

/// `<Psi|rho|Psi>` for the Bell target, clamped to `[0, 1]`.
pub fn bell_overlap(rho: &DensityMatrix) -> Result<f64> {
    let psi = bell_target();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..NUM_LEVELS {
        for j in 0..NUM_LEVELS {
            acc += psi[i].conj() * rho.get(i, j) * psi[j];
        }
    }
    let r = acc.re;
    if !r.is_finite() || r < -1e-9 {
        return Err(Error::InvalidState(format!("Bell overlap {r} is negative")));
    }
    Ok(r.clamp(0.0, 1.0))
}

/// `F = sqrt(<Psi|rho|Psi>)`.
pub fn bell_fidelity(rho: &DensityMatrix) -> Result<f64> {
    Ok(bell_overlap(rho)?.sqrt())
}

/// Index of the largest population; ties go to the lower index and are flagged.
pub fn dominant_level(populations: &[f64; NUM_LEVELS]) -> (usize, bool) {
    let mut best = 0;
    for k in 1..NUM_LEVELS {
        if populations[k] > populations[best] {
            best = k;
        }
    }
    let tie = (0..NUM_LEVELS).any(|k| k != best && (populations[k] - populations[best]).abs() <= 1e-12);
    (best, tie)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthRow {
    pub input: String,
    pub output: String,
    pub distribution: [f64; NUM_LEVELS],
    pub tie: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthTable {
    pub rows: Vec<TruthRow>,
}

impl TruthTable {
    pub fn outputs(&self) -> Vec<TwoQubitLabel> {
        self.rows
            .iter()
            .map(|r| TwoQubitLabel::parse_binary(&r.output).expect("labels are generated internally"))
            .collect()
    }

    pub fn is_cnot(&self) -> bool {
        self.outputs().iter().enumerate().all(|(k, out)| out.decimal() == CNOT_MAP[k])
            && self.rows.iter().all(|r| !r.tie)
    }
}

/// Runs regime III of `schedule` once per basis input, each starting at
/// `tau2`, and reports the dominant output level.
pub fn cnot_truth_table(
    schedule: &RegimeSchedule,
    decay: &DecayParams,
    opts: &IntegrateOptions,
) -> Result<TruthTable> {
    let run_opts = IntegrateOptions { t_start: schedule.tau2(), t_stop: None, stride: 0, ..opts.clone() };
    let finals: Vec<Result<DensityMatrix>> = (0..NUM_LEVELS)
        .into_par_iter()
        .map(|k| {
            let rho0 = DensityMatrix::basis(k)?;
            Ok(integrate(&rho0, schedule, decay, &run_opts)?.final_state())
        })
        .collect();
    let mut rows = Vec::with_capacity(NUM_LEVELS);
    for (k, rho) in finals.into_iter().enumerate() {
        let distribution = rho?.populations();
        let (out, tie) = dominant_level(&distribution);
        rows.push(TruthRow {
            input: binary_label(k)?.binary().to_string(),
            output: binary_label(out)?.binary().to_string(),
            distribution,
            tie,
        });
    }
    Ok(TruthTable { rows })
}

/// Output populations per basis input (row = input, column = output).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tomogram {
    pub populations: [[f64; NUM_LEVELS]; NUM_LEVELS],
    /// Cumulative pulse area at which the snapshot was taken.
    pub area: f64,
}

impl Tomogram {
    pub fn identity(area: f64) -> Self {
        let mut populations = [[0.0; NUM_LEVELS]; NUM_LEVELS];
        for (k, row) in populations.iter_mut().enumerate() {
            row[k] = 1.0;
        }
        Self { populations, area }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.populations
            .iter()
            .flatten()
            .zip(other.populations.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Builds a tomogram from the output state of each basis input.
pub fn tomogram(outputs: &[DensityMatrix; NUM_LEVELS], phi: f64) -> Result<Tomogram> {
    let mut populations = [[0.0; NUM_LEVELS]; NUM_LEVELS];
    for (row, rho) in populations.iter_mut().zip(outputs) {
        *row = rho.populations();
        let sum: f64 = row.iter().sum();
        if sum > 1.0 + 1e-9 || row.iter().any(|p| *p < -1e-12) {
            return Err(Error::InvalidState(format!("tomogram row {row:?} is not a distribution")));
        }
    }
    Ok(Tomogram { populations, area: phi })
}

/// Tomograms at each cumulative area in `phis`. Before the regime-III drive
/// starts the tomogram is the identity.
pub fn tomograms_at(
    schedule: &RegimeSchedule,
    decay: &DecayParams,
    opts: &IntegrateOptions,
    phis: &[f64],
) -> Result<Vec<Tomogram>> {
    let start_area = schedule.cumulative_area(schedule.tau2());
    let times: Vec<Option<f64>> = phis
        .iter()
        .map(|&phi| (phi > start_area + 1e-12).then(|| schedule.time_at_area(phi).max(schedule.tau2())))
        .collect();
    let snaps: Vec<f64> = times.iter().flatten().copied().collect();
    let run_opts = IntegrateOptions {
        t_start: schedule.tau2(),
        t_stop: None,
        stride: 0,
        snapshots: snaps,
        ..opts.clone()
    };
    let per_input: Vec<Result<Vec<DensityMatrix>>> = (0..NUM_LEVELS)
        .into_par_iter()
        .map(|k| {
            let rho0 = DensityMatrix::basis(k)?;
            let trace = integrate(&rho0, schedule, decay, &run_opts)?;
            Ok(trace.snapshots.iter().map(|p| p.rho).collect())
        })
        .collect();
    let per_input: Vec<Vec<DensityMatrix>> = per_input.into_iter().collect::<Result<_>>()?;

    let mut out = Vec::with_capacity(phis.len());
    let mut snap_idx = 0;
    for (phi, t) in phis.iter().zip(&times) {
        match t {
            None => out.push(Tomogram::identity(*phi)),
            Some(_) => {
                let states: [DensityMatrix; NUM_LEVELS] = std::array::from_fn(|k| per_input[k][snap_idx]);
                out.push(tomogram(&states, *phi)?);
                snap_idx += 1;
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FidelityPoint {
    pub t: f64,
    /// Pulse area measured from the chosen origin.
    pub area: f64,
    pub fidelity: f64,
    pub fidelity_sq: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FidelitySeries {
    pub envelope: Shape,
    pub points: Vec<FidelityPoint>,
}

impl FidelitySeries {
    /// First point of maximal fidelity.
    pub fn max(&self) -> Option<FidelityPoint> {
        self.points.iter().copied().fold(None, |best, p| match best {
            Some(b) if b.fidelity >= p.fidelity => Some(b),
            _ => Some(p),
        })
    }

    /// Fidelity at the point closest to `area`.
    pub fn at_area(&self, area: f64) -> Option<FidelityPoint> {
        self.points
            .iter()
            .copied()
            .min_by(|a, b| (a.area - area).abs().total_cmp(&(b.area - area).abs()))
    }
}

/// Bell fidelity of the state prepared from `rho0` along the whole schedule.
/// Areas are reported relative to `origin`.
pub fn fidelity_vs_area(
    rho0: &DensityMatrix,
    schedule: &RegimeSchedule,
    decay: &DecayParams,
    opts: &IntegrateOptions,
    envelope: Shape,
    origin: f64,
) -> Result<FidelitySeries> {
    let trace = integrate(rho0, schedule, decay, opts)?;
    let points = trace
        .points
        .iter()
        .map(|p| {
            let fidelity_sq = bell_overlap(&p.rho)?;
            Ok(FidelityPoint { t: p.t, area: p.area - origin, fidelity: fidelity_sq.sqrt(), fidelity_sq })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FidelitySeries { envelope, points })
}
