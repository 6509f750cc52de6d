//! Fixed-step RK4 integration of the full 4x4 Liouville-von Neumann equation
//!
//! ```text
//! d rho / dt = -i [H(t), rho] - Gamma o rho
//! ```
//!
//! with `H` in the rotating frame of the active drive (rad/s, hbar = 1) and
//! `Gamma o rho` the elementwise product with a symmetric rate matrix. This is
//! the brute-force reference that the closed forms are checked against.
//!
//! The coupling of transition `i-j` is `H_ij = H_ji = -W(t)/2` and the upper
//! level of the driven pair carries the detuning on the diagonal. With that
//! choice the two-level reduction reproduces the Bloch equations of
//! [`crate::bloch`] term for term.

use nalgebra::Matrix4;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pulse::{Regime, RegimeSchedule};
use crate::state::{DensityMatrix, Transition, NUM_LEVELS};

/// Hermiticity drift that aborts an integration.
pub const HERMITICITY_FAILURE: f64 = 1e-8;

/// Elementwise decay rates (1/s).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayParams {
    gamma: [[f64; NUM_LEVELS]; NUM_LEVELS],
}

impl DecayParams {
    pub fn new(gamma: [[f64; NUM_LEVELS]; NUM_LEVELS]) -> Result<Self> {
        for i in 0..NUM_LEVELS {
            for j in 0..NUM_LEVELS {
                let g = gamma[i][j];
                if !(g >= 0.0 && g.is_finite()) {
                    return Err(Error::Domain(format!("decay rate gamma[{i}][{j}] = {g} must be >= 0")));
                }
                if g != gamma[j][i] {
                    return Err(Error::Domain(format!("decay matrix not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self { gamma })
    }

    pub fn none() -> Self {
        Self { gamma: [[0.0; NUM_LEVELS]; NUM_LEVELS] }
    }

    pub fn uniform(rate: f64) -> Result<Self> {
        Self::new([[rate; NUM_LEVELS]; NUM_LEVELS])
    }

    /// Populations relax at `1/T1`, coherences at `1/T2`, except the
    /// microwave coherence `1-2` which uses `1/T2'`. Infinite times give zero
    /// rates.
    pub fn from_times(t1: f64, t2: f64, t2_microwave: f64) -> Result<Self> {
        for (name, t) in [("T1", t1), ("T2", t2), ("T2'", t2_microwave)] {
            if !(t > 0.0) {
                return Err(Error::Domain(format!("{name} = {t} must be > 0")));
            }
        }
        let mut gamma = [[1.0 / t2; NUM_LEVELS]; NUM_LEVELS];
        for (k, row) in gamma.iter_mut().enumerate() {
            row[k] = 1.0 / t1;
        }
        gamma[1][2] = 1.0 / t2_microwave;
        gamma[2][1] = 1.0 / t2_microwave;
        Self::new(gamma)
    }

    pub fn rate(&self, i: usize, j: usize) -> f64 {
        self.gamma[i][j]
    }

    pub fn is_zero(&self) -> bool {
        self.gamma.iter().flatten().all(|g| *g == 0.0)
    }

    fn as_matrix(&self) -> Matrix4<C64> {
        Matrix4::from_fn(|i, j| C64::new(self.gamma[i][j], 0.0))
    }
}

/// Rotating-frame Hamiltonian (rad/s).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HamiltonianFrame(Matrix4<C64>);

impl HamiltonianFrame {
    pub fn zero() -> Self {
        Self(Matrix4::zeros())
    }

    /// Single-transition drive: `H_ij = H_ji = -rabi/2`, `H_jj = detuning`.
    pub fn drive(transition: Transition, rabi: f64, detuning: f64) -> Self {
        let (i, j) = transition.levels();
        let mut m = Matrix4::zeros();
        let c = C64::new(-rabi / 2.0, 0.0);
        m[(i, j)] = c;
        m[(j, i)] = c;
        m[(j, j)] = C64::new(detuning, 0.0);
        Self(m)
    }

    /// Checks Hermiticity and that couplings lie on the `0-1`, `1-2`, `2-3` band.
    pub fn from_matrix(m: Matrix4<C64>) -> Result<Self> {
        for i in 0..NUM_LEVELS {
            for j in 0..NUM_LEVELS {
                if (m[(i, j)] - m[(j, i)].conj()).norm() > 1e-12 {
                    return Err(Error::Domain(format!("Hamiltonian not Hermitian at ({i}, {j})")));
                }
                if i.abs_diff(j) > 1 && m[(i, j)] != C64::new(0.0, 0.0) {
                    return Err(Error::Domain(format!("coupling ({i}, {j}) is off the ladder")));
                }
            }
        }
        Ok(Self(m))
    }

    pub fn matrix(&self) -> &Matrix4<C64> {
        &self.0
    }

    pub fn coupling(&self, t: Transition) -> C64 {
        let (i, j) = t.levels();
        self.0[(i, j)]
    }
}

fn transition_of(regime: Regime) -> Transition {
    regime.channel().transition()
}

/// Hamiltonian at time `t`: only the regime's channel is coupled, gated by
/// its pulse windows.
pub fn hamiltonian_at(t: f64, schedule: &RegimeSchedule) -> Result<HamiltonianFrame> {
    if !(0.0..=schedule.end()).contains(&t) {
        return Err(Error::Domain(format!("t = {t} outside schedule [0, {}]", schedule.end())));
    }
    let regime = schedule.regime_at(t);
    let rabi = schedule.active_pulse(t).map_or(0.0, |p| p.pulse.envelope(t - p.start));
    Ok(HamiltonianFrame::drive(transition_of(regime), rabi, schedule.regime_detuning(regime)))
}

/// `-i [H, rho] - Gamma o rho`.
pub fn liouville_rhs(rho: &DensityMatrix, h: &HamiltonianFrame, decay: &DecayParams) -> Matrix4<C64> {
    rhs(rho.matrix(), h.matrix(), &decay.as_matrix())
}

fn rhs(rho: &Matrix4<C64>, h: &Matrix4<C64>, gamma: &Matrix4<C64>) -> Matrix4<C64> {
    let comm = h * rho - rho * h;
    comm * C64::new(0.0, -1.0) - gamma.component_mul(rho)
}

#[derive(Clone, Debug, PartialEq)]
pub struct IntegrateOptions {
    /// Largest allowed step; each constant-drive segment is split into equal
    /// steps no longer than this.
    pub dt: f64,
    /// Record every `stride`-th step. Zero records only the endpoints.
    pub stride: usize,
    /// Clear all coherences when crossing `tau1` and `tau2`.
    pub reset_coherences: bool,
    /// Start time; the state before it is `rho0`.
    pub t_start: f64,
    /// Stop time; `None` runs to the end of the schedule.
    pub t_stop: Option<f64>,
    /// Extra times at which the exact state is captured.
    pub snapshots: Vec<f64>,
}

impl IntegrateOptions {
    pub fn new(dt: f64) -> Self {
        Self { dt, stride: 1, reset_coherences: true, t_start: 0.0, t_stop: None, snapshots: Vec::new() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TracePoint {
    pub t: f64,
    /// Cumulative pulse area delivered by time `t`.
    pub area: f64,
    pub rho: DensityMatrix,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SimulationTrace {
    pub points: Vec<TracePoint>,
    pub snapshots: Vec<TracePoint>,
    /// Largest Hermiticity error seen at any step.
    pub max_hermiticity_error: f64,
    pub steps: usize,
}

impl SimulationTrace {
    pub fn last(&self) -> Option<&TracePoint> {
        self.points.last()
    }

    pub fn final_state(&self) -> DensityMatrix {
        self.points.last().map_or(DensityMatrix::zeros(), |p| p.rho)
    }
}

/// Largest step allowed for a schedule: 1/50 of its shortest nutation period.
pub fn max_step(schedule: &RegimeSchedule) -> f64 {
    schedule.shortest_period().map_or(f64::INFINITY, |p| p / 50.0)
}

pub fn integrate(
    rho0: &DensityMatrix,
    schedule: &RegimeSchedule,
    decay: &DecayParams,
    opts: &IntegrateOptions,
) -> Result<SimulationTrace> {
    let (trace, err) = integrate_partial(rho0, schedule, decay, opts);
    match err {
        Some(e) => Err(e),
        None => Ok(trace),
    }
}

/// Like [`integrate`] but keeps whatever was traced before a failure.
pub fn integrate_partial(
    rho0: &DensityMatrix,
    schedule: &RegimeSchedule,
    decay: &DecayParams,
    opts: &IntegrateOptions,
) -> (SimulationTrace, Option<Error>) {
    let mut trace = SimulationTrace::default();
    let limit = max_step(schedule);
    if !(opts.dt > 0.0) || opts.dt > limit {
        return (trace, Some(Error::StepSize { dt: opts.dt, limit }));
    }
    let t_start = opts.t_start;
    let t_stop = opts.t_stop.unwrap_or(schedule.end());
    if !(0.0 <= t_start && t_start <= t_stop && t_stop <= schedule.end()) {
        return (
            trace,
            Some(Error::Domain(format!(
                "integration window [{t_start}, {t_stop}] outside [0, {}]",
                schedule.end()
            ))),
        );
    }

    let mut snaps: Vec<f64> = opts.snapshots.iter().copied().filter(|t| *t >= t_start && *t <= t_stop).collect();
    snaps.sort_by(f64::total_cmp);

    let mut cuts: Vec<f64> = schedule.breakpoints();
    cuts.extend(snaps.iter().copied());
    cuts.push(t_start);
    cuts.push(t_stop);
    cuts.retain(|t| *t >= t_start && *t <= t_stop);
    cuts.sort_by(f64::total_cmp);
    let eps = 1e-12 * schedule.end();
    cuts.dedup_by(|a, b| (*a - *b).abs() <= eps);
    // the window edges survive deduplication exactly
    if let Some(first) = cuts.first_mut() {
        *first = t_start;
    }
    if let Some(last) = cuts.last_mut() {
        *last = t_stop;
    }

    let gamma = decay.as_matrix();
    let mut rho = *rho0.matrix();
    let mut t = t_start;
    let mut step = 0usize;
    let mut next_snap = 0usize;

    let record = |t: f64, rho: &Matrix4<C64>| TracePoint {
        t,
        area: schedule.cumulative_area(t),
        rho: DensityMatrix::from_matrix_unchecked(*rho),
    };

    trace.points.push(record(t, &rho));
    while next_snap < snaps.len() && (snaps[next_snap] - t).abs() <= eps {
        trace.snapshots.push(record(t, &rho));
        next_snap += 1;
    }

    for seg in cuts.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let len = b - a;
        if len <= 0.0 {
            continue;
        }
        // Pick the governing regime and pulse from the segment midpoint so
        // that boundary conventions never leak into the stepping.
        let mid = 0.5 * (a + b);
        let regime = schedule.regime_at(mid);
        let transition = transition_of(regime);
        let detuning = schedule.regime_detuning(regime);
        let pulse = schedule.active_pulse(mid).copied();
        // Elapsed time is clamped to the window: rounding in `t0 + h` must
        // not switch the drive off inside the segment.
        let h_at = |time: f64| {
            let rabi = pulse.map_or(0.0, |p| p.pulse.envelope((time - p.start).clamp(0.0, p.pulse.window())));
            *HamiltonianFrame::drive(transition, rabi, detuning).matrix()
        };

        let n = (len / opts.dt).ceil().max(1.0) as usize;
        let h = len / n as f64;
        for k in 0..n {
            let t0 = a + k as f64 * h;
            let h0 = h_at(t0);
            let hm = h_at(t0 + 0.5 * h);
            let h1 = h_at(t0 + h);
            let half = C64::new(0.5 * h, 0.0);
            let full = C64::new(h, 0.0);
            let k1 = rhs(&rho, &h0, &gamma);
            let k2 = rhs(&(rho + k1 * half), &hm, &gamma);
            let k3 = rhs(&(rho + k2 * half), &hm, &gamma);
            let k4 = rhs(&(rho + k3 * full), &h1, &gamma);
            rho += (k1 + k2 * C64::new(2.0, 0.0) + k3 * C64::new(2.0, 0.0) + k4) * C64::new(h / 6.0, 0.0);
            t = if k + 1 == n { b } else { t0 + h };
            step += 1;

            let herm = DensityMatrix::from_matrix_unchecked(rho).hermiticity_error();
            trace.max_hermiticity_error = trace.max_hermiticity_error.max(herm);
            if !herm.is_finite() || herm > HERMITICITY_FAILURE || rho.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                trace.steps = step;
                return (
                    trace,
                    Some(Error::Numerical { t, reason: format!("Hermiticity drift {herm:e}") }),
                );
            }
            if opts.stride > 0 && step % opts.stride == 0 && k + 1 < n {
                trace.points.push(record(t, &rho));
            }
        }

        while next_snap < snaps.len() && (snaps[next_snap] - b).abs() <= eps {
            trace.snapshots.push(record(b, &rho));
            next_snap += 1;
        }
        if opts.stride > 0 || b == t_stop {
            if trace.points.last().is_none_or(|p| p.t != b) {
                trace.points.push(record(b, &rho));
            }
        }
        let crosses_boundary = (b - schedule.tau1()).abs() <= eps || (b - schedule.tau2()).abs() <= eps;
        if opts.reset_coherences && crosses_boundary && b < t_stop {
            rho = *DensityMatrix::from_matrix_unchecked(rho).without_coherences().matrix();
        }
    }
    trace.steps = step;
    (trace, None)
}
