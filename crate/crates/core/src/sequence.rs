//! Closed-form evaluation of the full three-regime sequence.
//!
//! Each regime is a two-level Bloch solution on its own transition; the
//! other two levels keep the populations they had at the regime boundary.
//! Coherences are dropped at every boundary.

use serde::{Deserialize, Serialize};

use crate::bloch::{regime1_solution, regime2_solution, regime3_solution, Mode, RegimeInit, TransitionParams};
use crate::error::{Error, Result};
use crate::pulse::{stitch, Regime, RegimeSchedule};
use crate::state::{density_update_from_bloch, BlochVector, DensityMatrix, Transition};

/// Relaxation times. `t2_microwave` applies to the `1 <-> 2` coherence.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Relaxation {
    pub t1: f64,
    pub t2: f64,
    pub t2_microwave: f64,
}

impl Relaxation {
    pub fn coherent() -> Self {
        Self { t1: f64::INFINITY, t2: f64::INFINITY, t2_microwave: f64::INFINITY }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClosedFormSequence {
    mode: Mode,
    zeeman_shift: bool,
    tau1: f64,
    tau2: f64,
    end: f64,
    params: [TransitionParams; 3],
    rho_tau1: DensityMatrix,
    rho_tau2: DensityMatrix,
    init2: RegimeInit,
    init3: RegimeInit,
}

/// Square-equivalent Rabi frequency of a regime: its area over its duration.
fn regime_rabi(schedule: &RegimeSchedule, regime: Regime) -> f64 {
    let (a, b) = match regime {
        Regime::I => (0.0, schedule.tau1()),
        Regime::II => (schedule.tau1(), schedule.tau2()),
        Regime::III => (schedule.tau2(), schedule.end()),
    };
    if b > a {
        schedule.regime_area(regime) / (b - a)
    } else {
        0.0
    }
}

/// Applies a Bloch vector to its block, leaving `rho` unchanged when the
/// block holds no population.
fn apply(rho: &DensityMatrix, b: &BlochVector) -> Result<DensityMatrix> {
    match density_update_from_bloch(rho, b) {
        Err(Error::DegenerateBlock(..)) => Ok(*rho),
        other => other,
    }
}

impl ClosedFormSequence {
    /// `zeeman_shift` tells whether the schedule's microwave detuning already
    /// includes the shift; the literal regime-II form always adds it itself.
    pub fn new(
        schedule: &RegimeSchedule,
        relax: Relaxation,
        w_eq: f64,
        mode: Mode,
        zeeman_shift: bool,
    ) -> Result<Self> {
        let r = [Regime::I, Regime::II, Regime::III].map(|g| regime_rabi(schedule, g));
        let mut d = [Regime::I, Regime::II, Regime::III].map(|g| schedule.regime_detuning(g));
        if zeeman_shift && mode == Mode::Literal {
            d[1] -= r[1];
        }
        let p1 = TransitionParams::new(Transition::Optical01, r[0], d[0], relax.t1, relax.t2)?.with_equilibrium(w_eq);
        let p2 = TransitionParams::new(Transition::Microwave12, r[1], d[1], relax.t1, relax.t2_microwave)?;
        let p3 = TransitionParams::new(Transition::Optical23, r[2], d[2], relax.t1, relax.t2)?;
        let ground = DensityMatrix::basis(0)?;

        let (tau1, tau2) = (schedule.tau1(), schedule.tau2());
        let b1 = regime1_solution(&p1, tau1, mode);
        let rho_tau1 = apply(&ground, &b1)?.without_coherences();
        let (_, init2) = stitch(&b1, &rho_tau1, b1.w, mode)?;
        let b2 = regime2_solution(init2.w0, &p2, tau2 - tau1, mode, false);
        let rho_tau2 = apply(&rho_tau1, &b2)?.without_coherences();
        let (_, init3) = stitch(&b2, &rho_tau2, b1.w, mode)?;

        Ok(Self {
            mode,
            zeeman_shift,
            tau1,
            tau2,
            end: schedule.end(),
            params: [p1, p2, p3],
            rho_tau1,
            rho_tau2,
            init2,
            init3,
        })
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn params(&self) -> &[TransitionParams; 3] {
        &self.params
    }

    pub fn init2(&self) -> RegimeInit {
        self.init2
    }

    pub fn init3(&self) -> RegimeInit {
        self.init3
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    /// Bloch vector of `regime` after `elapsed` time inside it.
    pub fn regime_bloch(&self, regime: Regime, elapsed: f64) -> BlochVector {
        let [p1, p2, p3] = &self.params;
        match regime {
            Regime::I => regime1_solution(p1, elapsed, self.mode),
            Regime::II => regime2_solution(self.init2.w0, p2, elapsed, self.mode, false),
            Regime::III => regime3_solution(self.init3.w0, p3, elapsed, self.mode),
        }
    }

    /// Bloch vector of the transition driven at time `t`.
    pub fn bloch_at(&self, t: f64) -> BlochVector {
        if t <= self.tau1 {
            self.regime_bloch(Regime::I, t)
        } else if t <= self.tau2 {
            self.regime_bloch(Regime::II, t - self.tau1)
        } else {
            self.regime_bloch(Regime::III, t - self.tau2)
        }
    }

    pub fn tau1(&self) -> f64 {
        self.tau1
    }

    pub fn tau2(&self) -> f64 {
        self.tau2
    }

    /// Full density matrix after `elapsed` time inside `regime`. The elapsed
    /// time may run past the scheduled regime length.
    pub fn regime_state(&self, regime: Regime, elapsed: f64) -> Result<DensityMatrix> {
        if !(elapsed >= 0.0) {
            return Err(Error::Domain(format!("elapsed time {elapsed} is negative")));
        }
        let base = match regime {
            Regime::I => DensityMatrix::basis(0)?,
            Regime::II => self.rho_tau1,
            Regime::III => self.rho_tau2,
        };
        apply(&base, &self.regime_bloch(regime, elapsed))
    }

    /// Full density matrix at time `t`.
    pub fn state_at(&self, t: f64) -> Result<DensityMatrix> {
        if !(t >= 0.0) {
            return Err(Error::Domain(format!("time {t} is negative")));
        }
        if t <= self.tau1 {
            self.regime_state(Regime::I, t)
        } else if t <= self.tau2 {
            self.regime_state(Regime::II, t - self.tau1)
        } else {
            self.regime_state(Regime::III, t - self.tau2)
        }
    }

    /// Whether the microwave regime was built with the shifted detuning.
    pub fn zeeman_shift(&self) -> bool {
        self.zeeman_shift
    }
}
