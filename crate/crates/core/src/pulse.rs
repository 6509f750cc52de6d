//! Pulse envelopes, area arithmetic and the three-regime CNOT schedule.
//!
//! Regime I drives `0-1` with a sigma-minus optical pulse, regime II drives
//! `1-2` with a microwave pulse and regime III drives `2-3` with a train of
//! sigma-plus pulses. Only one channel is ever active at a time.

use std::f64::consts::{PI, SQRT_2, TAU};

use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::bloch::Mode;
use crate::error::{Error, Result};
use crate::state::{BlochVector, DensityMatrix, Transition};
use crate::bloch::RegimeInit;

/// Gaussian envelopes are cut at this many standard deviations either side.
pub const GAUSSIAN_HALF_WIDTH: f64 = 4.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Square,
    Gaussian,
}

impl Shape {
    pub fn as_str(self) -> &'static str {
        match self {
            Shape::Square => "square",
            Shape::Gaussian => "gaussian",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Channel {
    /// Left circularly polarised optical field, `0 <-> 1`.
    SigmaMinus,
    /// Microwave magnetic field, `1 <-> 2`.
    Microwave,
    /// Right circularly polarised optical field, `2 <-> 3`.
    SigmaPlus,
}

impl Channel {
    pub fn transition(self) -> Transition {
        match self {
            Channel::SigmaMinus => Transition::Optical01,
            Channel::Microwave => Transition::Microwave12,
            Channel::SigmaPlus => Transition::Optical23,
        }
    }

    fn regime(self) -> Regime {
        match self {
            Channel::SigmaMinus => Regime::I,
            Channel::Microwave => Regime::II,
            Channel::SigmaPlus => Regime::III,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Regime {
    I,
    II,
    III,
}

impl Regime {
    pub fn channel(self) -> Channel {
        match self {
            Regime::I => Channel::SigmaMinus,
            Regime::II => Channel::Microwave,
            Regime::III => Channel::SigmaPlus,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pulse {
    pub shape: Shape,
    pub channel: Channel,
    /// Peak Rabi frequency (rad/s).
    pub peak_rabi: f64,
    /// Full width for square pulses, standard deviation for Gaussians.
    pub duration: f64,
    /// Detuning seen by the driven transition (rad/s).
    pub detuning: f64,
}

impl Pulse {
    pub fn new(shape: Shape, channel: Channel, peak_rabi: f64, duration: f64, detuning: f64) -> Result<Self> {
        if !(peak_rabi >= 0.0 && peak_rabi.is_finite()) {
            return Err(Error::Domain(format!("peak Rabi frequency {peak_rabi} must be >= 0")));
        }
        if !(duration > 0.0 && duration.is_finite()) {
            return Err(Error::Domain(format!("pulse duration {duration} must be > 0")));
        }
        if !detuning.is_finite() {
            return Err(Error::Domain("detuning must be finite".into()));
        }
        Ok(Self { shape, channel, peak_rabi, duration, detuning })
    }

    pub fn area(&self) -> f64 {
        pulse_area(self)
    }

    /// Length of the window in which the envelope is non-zero.
    pub fn window(&self) -> f64 {
        match self.shape {
            Shape::Square => self.duration,
            Shape::Gaussian => 2.0 * GAUSSIAN_HALF_WIDTH * self.duration,
        }
    }

    /// Rabi frequency at `elapsed` seconds after the window opens.
    pub fn envelope(&self, elapsed: f64) -> f64 {
        if elapsed < 0.0 || elapsed > self.window() {
            return 0.0;
        }
        match self.shape {
            Shape::Square => self.peak_rabi,
            Shape::Gaussian => {
                let x = (elapsed - GAUSSIAN_HALF_WIDTH * self.duration) / self.duration;
                self.peak_rabi * (-0.5 * x * x).exp()
            }
        }
    }

    /// Area accumulated by `elapsed` seconds into the window, from the
    /// truncated envelope.
    pub fn area_until(&self, elapsed: f64) -> f64 {
        let e = elapsed.clamp(0.0, self.window());
        match self.shape {
            Shape::Square => self.peak_rabi * e,
            Shape::Gaussian => {
                let s = self.duration;
                let z = |x: f64| erf((x - GAUSSIAN_HALF_WIDTH * s) / (s * SQRT_2));
                self.peak_rabi * s * (PI / 2.0).sqrt() * (z(e) - z(0.0))
            }
        }
    }

    /// Generalised Rabi frequency at the envelope peak.
    pub fn peak_beta(&self) -> f64 {
        self.peak_rabi.hypot(self.detuning)
    }
}

/// Area theorem: `integral of W(t) dt`. Gaussian areas use the untruncated
/// integral `W sigma sqrt(2 pi)`; the +-4 sigma cut removes less than 1e-4 of it.
pub fn pulse_area(p: &Pulse) -> f64 {
    match p.shape {
        Shape::Square => p.peak_rabi * p.duration,
        Shape::Gaussian => p.peak_rabi * p.duration * TAU.sqrt(),
    }
}

/// Duration (or sigma) that gives `theta` of area at the given peak.
pub fn duration_for_area(shape: Shape, peak_rabi: f64, theta: f64) -> Result<f64> {
    if !(peak_rabi > 0.0 && peak_rabi.is_finite()) {
        return Err(Error::Domain(format!("peak Rabi frequency {peak_rabi} must be > 0")));
    }
    if !(theta >= 0.0 && theta.is_finite()) {
        return Err(Error::Domain(format!("pulse area {theta} must be >= 0")));
    }
    Ok(match shape {
        Shape::Square => theta / peak_rabi,
        Shape::Gaussian => theta / (peak_rabi * TAU.sqrt()),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduledPulse {
    pub start: f64,
    pub pulse: Pulse,
}

impl ScheduledPulse {
    pub fn end(&self) -> f64 {
        self.start + self.pulse.window()
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.start && t <= self.end()
    }
}

/// Repetition of the regime-III pulse train.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Train {
    pub period: f64,
    pub count: usize,
}

/// Time-ordered pulses split into regimes at `tau1` and `tau2`.
///
/// Regime I covers `[0, tau1]`, regime II `(tau1, tau2]` and regime III
/// `(tau2, end]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeSchedule {
    pulses: Vec<ScheduledPulse>,
    tau1: f64,
    tau2: f64,
    end: f64,
    train: Option<Train>,
}

impl RegimeSchedule {
    pub fn new(
        mut pulses: Vec<ScheduledPulse>,
        tau1: f64,
        tau2: f64,
        end: f64,
        train: Option<Train>,
    ) -> Result<Self> {
        if !(0.0 < tau1 && tau1 < tau2 && tau2 <= end && end.is_finite()) {
            return Err(Error::Schedule(format!(
                "need 0 < tau1 < tau2 <= end, got tau1 = {tau1}, tau2 = {tau2}, end = {end}"
            )));
        }
        pulses.sort_by(|a, b| a.start.total_cmp(&b.start));
        let slack = 1e-12 * end;
        for sp in &pulses {
            let (lo, hi) = match sp.pulse.channel.regime() {
                Regime::I => (0.0, tau1),
                Regime::II => (tau1, tau2),
                Regime::III => (tau2, end),
            };
            if sp.start < lo - slack || sp.end() > hi + slack {
                return Err(Error::Schedule(format!(
                    "{:?} pulse window [{}, {}] leaves its regime [{lo}, {hi}]",
                    sp.pulse.channel,
                    sp.start,
                    sp.end()
                )));
            }
        }
        for pair in pulses.windows(2) {
            if pair[1].start < pair[0].end() - slack {
                return Err(Error::Schedule(format!(
                    "pulses starting at {} and {} overlap",
                    pair[0].start, pair[1].start
                )));
            }
        }
        Ok(Self { pulses, tau1, tau2, end, train })
    }

    pub fn pulses(&self) -> &[ScheduledPulse] {
        &self.pulses
    }

    pub fn tau1(&self) -> f64 {
        self.tau1
    }

    pub fn tau2(&self) -> f64 {
        self.tau2
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    pub fn train(&self) -> Option<Train> {
        self.train
    }

    pub fn regime_at(&self, t: f64) -> Regime {
        if t <= self.tau1 {
            Regime::I
        } else if t <= self.tau2 {
            Regime::II
        } else {
            Regime::III
        }
    }

    pub fn regime_pulses(&self, regime: Regime) -> impl Iterator<Item = &ScheduledPulse> {
        self.pulses.iter().filter(move |p| p.pulse.channel.regime() == regime)
    }

    /// The pulse whose window holds `t` within the regime governing `t`.
    pub fn active_pulse(&self, t: f64) -> Option<&ScheduledPulse> {
        let regime = self.regime_at(t);
        self.regime_pulses(regime).find(|p| p.contains(t))
    }

    /// Detuning that defines the rotating frame of a regime.
    pub fn regime_detuning(&self, regime: Regime) -> f64 {
        self.regime_pulses(regime).next().map_or(0.0, |p| p.pulse.detuning)
    }

    /// Total nominal area per regime.
    pub fn regime_area(&self, regime: Regime) -> f64 {
        self.regime_pulses(regime).map(|p| pulse_area(&p.pulse)).sum()
    }

    /// Area delivered by all pulses up to time `t`.
    pub fn cumulative_area(&self, t: f64) -> f64 {
        self.pulses.iter().map(|p| p.pulse.area_until(t - p.start)).sum()
    }

    /// Earliest time at which the cumulative area reaches `area`, clamped to
    /// the schedule end.
    pub fn time_at_area(&self, area: f64) -> f64 {
        if area <= 0.0 {
            return 0.0;
        }
        if area >= self.cumulative_area(self.end) {
            return self.end;
        }
        let (mut lo, mut hi) = (0.0, self.end);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.cumulative_area(mid) < area {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= f64::EPSILON * self.end {
                break;
            }
        }
        hi
    }

    /// Times at which the drive switches on or off, plus the regime edges.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut pts = vec![0.0, self.tau1, self.tau2, self.end];
        for p in &self.pulses {
            pts.push(p.start);
            pts.push(p.end());
        }
        pts.retain(|t| *t >= 0.0 && *t <= self.end);
        pts.sort_by(f64::total_cmp);
        pts.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * self.end.max(f64::MIN_POSITIVE));
        pts
    }

    /// Shortest nutation period among the scheduled pulses, if any drive.
    pub fn shortest_period(&self) -> Option<f64> {
        self.pulses
            .iter()
            .map(|p| p.pulse.peak_beta())
            .filter(|b| *b > 0.0)
            .map(|b| TAU / b)
            .min_by(f64::total_cmp)
    }

    /// Multiplies every Rabi frequency and detuning by `k` and divides every
    /// time by `k`; pulse areas are unchanged.
    pub fn rescaled(&self, k: f64) -> Result<Self> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::Domain(format!("rescale factor {k} must be > 0")));
        }
        let pulses = self
            .pulses
            .iter()
            .map(|sp| ScheduledPulse {
                start: sp.start / k,
                pulse: Pulse {
                    peak_rabi: sp.pulse.peak_rabi * k,
                    duration: sp.pulse.duration / k,
                    detuning: sp.pulse.detuning * k,
                    ..sp.pulse
                },
            })
            .collect();
        let train = self.train.map(|tr| Train { period: tr.period / k, ..tr });
        Self::new(pulses, self.tau1 / k, self.tau2 / k, self.end / k, train)
    }
}

/// Inputs for [`build_cnot_schedule`]. Rabi frequencies and detunings are
/// indexed by regime (`0-1`, `1-2`, `2-3`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CnotSpec {
    /// Regime-I area (rad).
    pub phi1: f64,
    /// Regime-II area (rad).
    pub phi2: f64,
    /// Number of regime-III pulses.
    pub n_flips: usize,
    /// Area of each regime-III pulse (rad).
    pub flip_area: f64,
    /// Envelope of the regime-III train; regimes I and II are square.
    pub envelope: Shape,
    pub peak_rabi: [f64; 3],
    pub detuning: [f64; 3],
    /// Shift the microwave detuning by its own Rabi frequency.
    pub zeeman_shift: bool,
    /// Centre-to-centre spacing of Gaussian pulses; `None` means `8 sigma`.
    pub train_period: Option<f64>,
}

impl Default for CnotSpec {
    fn default() -> Self {
        Self {
            phi1: PI / 3.0,
            phi2: PI / 4.0,
            n_flips: 5,
            flip_area: PI / 2.0,
            envelope: Shape::Square,
            peak_rabi: [1.0; 3],
            detuning: [0.0; 3],
            zeeman_shift: false,
            train_period: None,
        }
    }
}

pub fn build_cnot_schedule(spec: &CnotSpec) -> Result<RegimeSchedule> {
    for (name, phi) in [("phi1", spec.phi1), ("phi2", spec.phi2)] {
        if !(phi > 0.0 && phi <= TAU) {
            return Err(Error::Domain(format!("{name} = {phi} must lie in (0, 2 pi]")));
        }
    }
    if !(spec.flip_area > 0.0 && spec.flip_area.is_finite()) {
        return Err(Error::Domain(format!("flip area {} must be > 0", spec.flip_area)));
    }
    let [r1, r2, r3] = spec.peak_rabi;
    let [d1, d2, d3] = spec.detuning;

    let t1 = duration_for_area(Shape::Square, r1, spec.phi1)?;
    let first = Pulse::new(Shape::Square, Channel::SigmaMinus, r1, t1, d1)?;
    let t2 = duration_for_area(Shape::Square, r2, spec.phi2)?;
    let mw_detuning = if spec.zeeman_shift { d2 + r2 } else { d2 };
    let second = Pulse::new(Shape::Square, Channel::Microwave, r2, t2, mw_detuning)?;

    let tau1 = t1;
    let tau2 = tau1 + t2;
    let mut pulses = vec![
        ScheduledPulse { start: 0.0, pulse: first },
        ScheduledPulse { start: tau1, pulse: second },
    ];

    let width = duration_for_area(spec.envelope, r3, spec.flip_area)?;
    let flip = Pulse::new(spec.envelope, Channel::SigmaPlus, r3, width, d3)?;
    let period = match (spec.envelope, spec.train_period) {
        (Shape::Square, _) => flip.window(),
        (Shape::Gaussian, None) => flip.window(),
        (Shape::Gaussian, Some(p)) => {
            if p < flip.window() {
                return Err(Error::Domain(format!(
                    "train period {p} is shorter than the pulse window {}",
                    flip.window()
                )));
            }
            p
        }
    };
    for k in 0..spec.n_flips {
        pulses.push(ScheduledPulse { start: tau2 + k as f64 * period, pulse: flip });
    }
    let (end, train) = if spec.n_flips == 0 {
        (tau2, None)
    } else {
        let last = tau2 + (spec.n_flips - 1) as f64 * period + flip.window();
        (last, Some(Train { period, count: spec.n_flips }))
    };
    RegimeSchedule::new(pulses, tau1, tau2, end, train)
}

/// Carries a regime's final state into the initial condition of the next.
///
/// Coherences are always dropped. Into the microwave regime the start
/// inversion is `-(1 + w(tau1)) / 2` in literal mode and `rho22 - rho11` at the
/// boundary otherwise; into the final regime it is `-(1 + w(tau1)) / 4` in
/// literal mode and `rho33 - rho22` otherwise. `w_tau1` is the regime-I
/// inversion at `tau1`. Returns the next transition with its start vector.
pub fn stitch(
    regime_end: &BlochVector,
    rho_at_boundary: &DensityMatrix,
    w_tau1: f64,
    mode: Mode,
) -> Result<(Transition, RegimeInit)> {
    let next = match regime_end.transition {
        Transition::Optical01 => Transition::Microwave12,
        Transition::Microwave12 => Transition::Optical23,
        Transition::Optical23 => {
            return Err(Error::Domain("no regime follows the 2-3 transition".into()));
        }
    };
    let (i, j) = next.levels();
    let w0 = match (mode, next) {
        (Mode::Literal, Transition::Microwave12) => -(1.0 + w_tau1) / 2.0,
        (Mode::Literal, _) => -(1.0 + w_tau1) / 4.0,
        (Mode::Consistent, _) => rho_at_boundary.population(j) - rho_at_boundary.population(i),
    };
    Ok((next, RegimeInit::inversion(w0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn area_examples() {
        let p = Pulse::new(Shape::Square, Channel::SigmaMinus, PI * 1e13, 100e-15, 0.0).unwrap();
        assert_relative_eq!(pulse_area(&p), PI, max_relative = 1e-12);
        let p = Pulse::new(Shape::Gaussian, Channel::SigmaPlus, 0.0, 5e-15, 0.0).unwrap();
        assert_eq!(pulse_area(&p), 0.0);
        // 5 fs Gaussian with a pi/2 area
        let sigma = 5e-15;
        let peak = (PI / 2.0) / (sigma * TAU.sqrt());
        let p = Pulse::new(Shape::Gaussian, Channel::SigmaPlus, peak, sigma, 0.0).unwrap();
        assert_relative_eq!(pulse_area(&p), PI / 2.0, max_relative = 1e-12);
        // the +-4 sigma cut loses < 1e-4 of it
        let truncated = p.area_until(p.window());
        assert!((truncated - PI / 2.0).abs() / (PI / 2.0) < 1e-4);
        assert!(truncated < PI / 2.0);
    }

    #[test]
    fn duration_examples() {
        assert_eq!(duration_for_area(Shape::Square, 1.0, PI).unwrap(), PI);
        assert_eq!(duration_for_area(Shape::Square, 2.0, PI).unwrap(), PI / 2.0);
        assert!(duration_for_area(Shape::Square, 0.0, PI).is_err());
        assert!(duration_for_area(Shape::Gaussian, -1.0, PI).is_err());
        let sigma = duration_for_area(Shape::Gaussian, 3.0, 1.234).unwrap();
        let p = Pulse::new(Shape::Gaussian, Channel::Microwave, 3.0, sigma, 0.0).unwrap();
        assert_relative_eq!(pulse_area(&p), 1.234, max_relative = 1e-9);
    }

    #[test]
    fn gaussian_cumulative_area_is_monotone_and_symmetric() {
        let p = Pulse::new(Shape::Gaussian, Channel::SigmaPlus, 2.0, 0.5, 0.0).unwrap();
        let total = p.area_until(p.window());
        assert_relative_eq!(p.area_until(p.window() / 2.0), total / 2.0, max_relative = 1e-12);
        let mut prev = 0.0;
        for k in 0..=100 {
            let a = p.area_until(p.window() * k as f64 / 100.0);
            assert!(a >= prev);
            prev = a;
        }
    }

    #[test]
    fn default_scenario_schedule() {
        let s = build_cnot_schedule(&CnotSpec::default()).unwrap();
        assert_relative_eq!(s.tau1(), PI / 3.0, max_relative = 1e-12);
        assert_relative_eq!(s.tau2(), PI / 3.0 + PI / 4.0, max_relative = 1e-12);
        assert_relative_eq!(s.regime_area(Regime::III), 5.0 * PI / 2.0, max_relative = 1e-12);
        assert_eq!(s.train(), Some(Train { period: PI / 2.0, count: 5 }));
        assert_relative_eq!(s.end(), PI / 3.0 + PI / 4.0 + 5.0 * PI / 2.0, max_relative = 1e-12);
    }

    #[test]
    fn no_flips_ends_at_tau2() {
        let s = build_cnot_schedule(&CnotSpec { n_flips: 0, ..CnotSpec::default() }).unwrap();
        assert_eq!(s.end(), s.tau2());
        assert!(s.train().is_none());
    }

    #[test]
    fn nonpositive_areas_rejected() {
        assert!(build_cnot_schedule(&CnotSpec { phi1: 0.0, ..CnotSpec::default() }).is_err());
        assert!(build_cnot_schedule(&CnotSpec { phi2: -1.0, ..CnotSpec::default() }).is_err());
        assert!(build_cnot_schedule(&CnotSpec { phi1: 7.0, ..CnotSpec::default() }).is_err());
    }

    #[test]
    fn gaussian_train_spacing() {
        let spec = CnotSpec { envelope: Shape::Gaussian, ..CnotSpec::default() };
        let s = build_cnot_schedule(&spec).unwrap();
        let sigma = duration_for_area(Shape::Gaussian, 1.0, PI / 2.0).unwrap();
        assert_relative_eq!(s.train().unwrap().period, 8.0 * sigma, max_relative = 1e-12);
        let short = CnotSpec { train_period: Some(sigma), ..spec };
        assert!(build_cnot_schedule(&short).is_err());
        let gapped = CnotSpec { train_period: Some(12.0 * sigma), ..spec };
        let s = build_cnot_schedule(&gapped).unwrap();
        // between pulses the drive is off
        let gap = s.tau2() + 10.0 * sigma;
        assert!(s.active_pulse(gap).is_none());
    }

    #[test]
    fn zeeman_shift_moves_microwave_detuning() {
        let s = build_cnot_schedule(&CnotSpec {
            zeeman_shift: true,
            peak_rabi: [1.0, 2.0, 1.0],
            ..CnotSpec::default()
        })
        .unwrap();
        assert_eq!(s.regime_detuning(Regime::II), 2.0);
    }

    #[test]
    fn regime_windows_and_boundaries() {
        let s = build_cnot_schedule(&CnotSpec::default()).unwrap();
        assert_eq!(s.regime_at(s.tau1()), Regime::I);
        assert_eq!(s.regime_at(s.tau2()), Regime::II);
        assert_eq!(s.regime_at(s.tau2() + 1e-9), Regime::III);
        assert_eq!(s.active_pulse(s.tau1()).unwrap().pulse.channel, Channel::SigmaMinus);
        assert_eq!(s.active_pulse(s.tau1() + 1e-9).unwrap().pulse.channel, Channel::Microwave);
    }

    #[test]
    fn schedule_rejects_misplaced_pulses() {
        let p = Pulse::new(Shape::Square, Channel::Microwave, 1.0, 1.0, 0.0).unwrap();
        let err = RegimeSchedule::new(vec![ScheduledPulse { start: 0.0, pulse: p }], 1.0, 2.0, 3.0, None);
        assert!(err.is_err());
        assert!(RegimeSchedule::new(vec![], 2.0, 1.0, 3.0, None).is_err());
    }

    #[test]
    fn time_at_area_inverts_cumulative_area() {
        let s = build_cnot_schedule(&CnotSpec { envelope: Shape::Gaussian, ..CnotSpec::default() })
            .unwrap();
        for k in 1..20 {
            let target = k as f64 * 0.4;
            let t = s.time_at_area(target);
            assert!((s.cumulative_area(t) - target).abs() < 1e-9);
        }
    }

    #[test]
    fn stitch_examples() {
        let rho = DensityMatrix::basis(0).unwrap();
        let end = BlochVector::new(0.0, 0.0, -1.0, Transition::Optical01);
        for mode in [Mode::Literal, Mode::Consistent] {
            let (next, init) = stitch(&end, &rho, -1.0, mode).unwrap();
            assert_eq!(next, Transition::Microwave12);
            assert_eq!(init, RegimeInit::inversion(0.0));
        }

        let rho = DensityMatrix::basis(1).unwrap();
        let end = BlochVector::new(0.3, 0.1, 1.0, Transition::Optical01);
        for mode in [Mode::Literal, Mode::Consistent] {
            let (_, init) = stitch(&end, &rho, 1.0, mode).unwrap();
            assert_eq!(init, RegimeInit::inversion(-1.0));
        }

        let rho = DensityMatrix::diagonal([1.0 / 3.0, 2.0 / 3.0, 0.0, 0.0]);
        let end = BlochVector::new(0.0, 0.0, 1.0 / 3.0, Transition::Optical01);
        for mode in [Mode::Literal, Mode::Consistent] {
            let (_, init) = stitch(&end, &rho, 1.0 / 3.0, mode).unwrap();
            assert_relative_eq!(init.w0, -2.0 / 3.0, max_relative = 1e-15);
        }
    }

    #[test]
    fn stitch_into_third_regime() {
        let rho = DensityMatrix::diagonal([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 0.0]);
        let end = BlochVector::new(0.0, 0.0, 0.0, Transition::Microwave12);
        let (next, lit) = stitch(&end, &rho, 1.0 / 3.0, Mode::Literal).unwrap();
        assert_eq!(next, Transition::Optical23);
        assert_relative_eq!(lit.w0, -1.0 / 3.0, max_relative = 1e-15);
        let (_, con) = stitch(&end, &rho, 1.0 / 3.0, Mode::Consistent).unwrap();
        assert_relative_eq!(con.w0, -1.0 / 3.0, max_relative = 1e-15);
        let end = BlochVector::new(0.0, 0.0, 0.0, Transition::Optical23);
        assert!(stitch(&end, &rho, 0.0, Mode::Consistent).is_err());
    }

    proptest! {
        #[test]
        fn schedule_areas_round_trip(phi1 in 0.01f64..TAU, phi2 in 0.01f64..TAU, n in 0usize..8,
                                     r in prop::array::uniform3(0.1f64..10.0), gauss in prop::bool::ANY) {
            let envelope = if gauss { Shape::Gaussian } else { Shape::Square };
            let spec = CnotSpec { phi1, phi2, n_flips: n, envelope, peak_rabi: r, ..CnotSpec::default() };
            let s = build_cnot_schedule(&spec).unwrap();
            prop_assert!((s.regime_area(Regime::I) - phi1).abs() <= 1e-9 * phi1);
            prop_assert!((s.regime_area(Regime::II) - phi2).abs() <= 1e-9 * phi2);
            let flips = n as f64 * PI / 2.0;
            prop_assert!((s.regime_area(Regime::III) - flips).abs() <= 1e-9 * flips.max(1.0));
        }

        #[test]
        fn at_most_one_channel_active(phi1 in 0.1f64..TAU, phi2 in 0.1f64..TAU, n in 1usize..6,
                                      gauss in prop::bool::ANY) {
            let envelope = if gauss { Shape::Gaussian } else { Shape::Square };
            let s = build_cnot_schedule(&CnotSpec { phi1, phi2, n_flips: n, envelope, ..CnotSpec::default() }).unwrap();
            for k in 0..=2000 {
                let t = s.end() * k as f64 / 2000.0;
                let regime = s.regime_at(t);
                let live: Vec<_> = s.pulses().iter()
                    .filter(|p| p.contains(t) && p.pulse.channel.regime() == regime)
                    .map(|p| p.pulse.channel)
                    .collect();
                prop_assert!(live.iter().all(|c| *c == live[0]));
            }
        }

        #[test]
        fn stitch_conserves_pair_population(p in prop::array::uniform4(0.0f64..1.0), w_tau1 in -1.0f64..1.0,
                                            lit in prop::bool::ANY, k in 0usize..2) {
            let total: f64 = p.iter().sum();
            let rho = DensityMatrix::diagonal(p.map(|x| x / total.max(1.0)));
            let mode = if lit { Mode::Literal } else { Mode::Consistent };
            let end = BlochVector::new(0.0, 0.0, w_tau1, Transition::ALL[k]);
            let (next, init) = stitch(&end, &rho, w_tau1, mode).unwrap();
            let (i, j) = next.levels();
            let shared = rho.population(i) + rho.population(j);
            let implied = (shared - init.w0) / 2.0 + (shared + init.w0) / 2.0;
            prop_assert!(implied <= shared + 1e-12);
            prop_assert!(rho.trace() - shared + implied <= rho.trace() + 1e-12);
        }
    }
}
