//! Optical Bloch equations for a single driven transition and their
//! closed-form (Torrey-type) transient solutions.
//!
//! Equations of motion, with `T1`/`T2` the population/coherence relaxation
//! times and `w_eq` the equilibrium inversion:
//!
//! ```text
//! du/dt = -D v - u/T2
//! dv/dt =  D u + W w - v/T2
//! dw/dt = -W v - (w - w_eq)/T1
//! ```
//!
//! Two evaluation modes are provided. [`Mode::Consistent`] returns the exact
//! solution of these equations from the regime's initial condition.
//! [`Mode::Literal`] evaluates the published per-regime closed forms verbatim,
//! including the terms that make them miss their own initial conditions; it is
//! kept so the mismatch can be measured rather than hidden.

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::state::{BlochVector, Transition};

/// Below this `|beta t|` the trigonometric quotients switch to their series.
const SMALL_PHASE: f64 = 1e-4;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "paper-literal")]
    Literal,
    #[default]
    #[serde(rename = "consistent")]
    Consistent,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Literal => "paper-literal",
            Mode::Consistent => "consistent",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "paper-literal" => Ok(Mode::Literal),
            "consistent" => Ok(Mode::Consistent),
            other => Err(Error::Domain(format!(
                "unknown mode '{other}', expected paper-literal or consistent"
            ))),
        }
    }
}

/// Whether the strong-field assumption `W min(T1, T2) > 1` behind the closed
/// forms holds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Validity {
    Valid,
    OutsideStrongField,
}

/// Drive and relaxation parameters of one transition.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionParams {
    pub transition: Transition,
    /// Rabi frequency (rad/s).
    pub rabi: f64,
    /// Detuning (rad/s).
    pub detuning: f64,
    /// Population relaxation time; `f64::INFINITY` disables it.
    pub t1: f64,
    /// Coherence relaxation time; `f64::INFINITY` disables it.
    pub t2: f64,
    /// Equilibrium inversion (source term).
    pub w_eq: f64,
}

impl TransitionParams {
    pub fn new(transition: Transition, rabi: f64, detuning: f64, t1: f64, t2: f64) -> Result<Self> {
        let p = Self { transition, rabi, detuning, t1, t2, w_eq: 0.0 };
        p.validate()?;
        Ok(p)
    }

    /// Undamped drive.
    pub fn coherent(transition: Transition, rabi: f64, detuning: f64) -> Self {
        Self { transition, rabi, detuning, t1: f64::INFINITY, t2: f64::INFINITY, w_eq: 0.0 }
    }

    pub fn with_equilibrium(mut self, w_eq: f64) -> Self {
        self.w_eq = w_eq;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rabi >= 0.0 && self.rabi.is_finite()) {
            return Err(Error::Domain(format!("Rabi frequency {} must be finite and >= 0", self.rabi)));
        }
        if !self.detuning.is_finite() {
            return Err(Error::Domain("detuning must be finite".into()));
        }
        if !(self.t1 > 0.0 && self.t2 > 0.0) {
            return Err(Error::Domain(format!(
                "relaxation times must be positive (T1 = {}, T2 = {})",
                self.t1, self.t2
            )));
        }
        if !self.w_eq.is_finite() {
            return Err(Error::Domain("equilibrium inversion must be finite".into()));
        }
        Ok(())
    }

    pub fn validity(&self) -> Validity {
        if self.rabi * self.t1.min(self.t2) > 1.0 {
            Validity::Valid
        } else {
            Validity::OutsideStrongField
        }
    }
}

/// Bloch components at the start of a regime.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeInit {
    pub u0: f64,
    pub v0: f64,
    pub w0: f64,
}

impl RegimeInit {
    pub fn new(u0: f64, v0: f64, w0: f64) -> Self {
        Self { u0, v0, w0 }
    }

    /// Population-only start (coherences cleared).
    pub fn inversion(w0: f64) -> Self {
        Self { u0: 0.0, v0: 0.0, w0 }
    }

    pub fn ground() -> Self {
        Self::inversion(-1.0)
    }
}

/// Generalized Rabi frequency `sqrt(W^2 + D^2)`.
pub fn beta(params: &TransitionParams) -> f64 {
    params.rabi.hypot(params.detuning)
}

/// Dimensionless steady-state coherence `(W w_eq / T) / (W^2 + D^2 + 1/T^2)`,
/// with `T = T2`.
pub fn xi(params: &TransitionParams) -> f64 {
    let t = params.t2;
    let num = params.rabi * params.w_eq / t;
    if num == 0.0 {
        return 0.0;
    }
    num / (params.rabi.powi(2) + params.detuning.powi(2) + 1.0 / (t * t))
}

/// `xi * T`, evaluated without forming `0 * inf` when `T` is infinite.
fn xi_times_t(params: &TransitionParams) -> f64 {
    let num = params.rabi * params.w_eq;
    if num == 0.0 {
        return 0.0;
    }
    let t = params.t2;
    num / (params.rabi.powi(2) + params.detuning.powi(2) + 1.0 / (t * t))
}

/// `sin(beta t) / beta`, continuous through `beta = 0`.
fn sin_over(beta: f64, t: f64) -> f64 {
    let x = beta * t;
    if x.abs() < SMALL_PHASE {
        t * (1.0 - x * x / 6.0)
    } else {
        (beta * t).sin() / beta
    }
}

/// `(cos(beta t) - 1) / beta^2`, continuous through `beta = 0`.
fn cos_minus_one_over(beta: f64, t: f64) -> f64 {
    let x = beta * t;
    if x.abs() < SMALL_PHASE {
        -t * t / 2.0 * (1.0 - x * x / 12.0)
    } else {
        ((beta * t).cos() - 1.0) / (beta * beta)
    }
}

/// Right-hand side of the Bloch equations.
pub fn bloch_rhs(b: &BlochVector, params: &TransitionParams) -> [f64; 3] {
    let (d, om) = (params.detuning, params.rabi);
    let du = -d * b.v - b.u / params.t2;
    let dv = d * b.u + om * b.w - b.v / params.t2;
    let dw = -om * b.v - (b.w - params.w_eq) / params.t1;
    [du, dv, dw]
}

/// Damped transient solution for `T1 = T2 = T`.
///
/// Relaxes towards the steady state `(-D xi T, xi, w_eq - W xi T)` while
/// nutating at `beta`. This form is exact for the Bloch equations whenever
/// `T1 = T2`; it returns [`Validity::OutsideStrongField`] alongside the result
/// when `W T <= 1`.
pub fn general_solution(
    params: &TransitionParams,
    init: &RegimeInit,
    t: f64,
) -> Result<(BlochVector, Validity)> {
    params.validate()?;
    if params.t1 != params.t2 {
        return Err(Error::Domain(format!(
            "the damped closed form needs T1 = T2 (got {} and {})",
            params.t1, params.t2
        )));
    }
    Ok((torrey(params, init, t), params.validity()))
}

fn torrey(params: &TransitionParams, init: &RegimeInit, t: f64) -> BlochVector {
    let (d, om, w_eq) = (params.detuning, params.rabi, params.w_eq);
    let tt = params.t2;
    let b = beta(params);
    let xi = xi(params);
    let xi_t = xi_times_t(params);
    let decay = (-t / tt).exp();
    let s = sin_over(b, t);
    let c = cos_minus_one_over(b, t);

    let v_rel = init.v0 - xi;
    let kick = d * init.u0 + om * init.w0 - xi / tt;

    let u = decay * (init.u0 - d * v_rel * s + d * kick * c + d * xi_t) - d * xi_t;
    let v = decay * (v_rel * (b * t).cos() + kick * s) + xi;
    let w = decay * (init.w0 - w_eq - om * v_rel * s + om * kick * c + om * xi_t) + w_eq - om * xi_t;
    BlochVector::new(u, v, w, params.transition)
}

/// Exact propagation of the Bloch equations for any `T1`, `T2`.
///
/// Uses the closed form when `T1 = T2` and the exponential of the augmented
/// 4x4 generator otherwise.
pub fn propagate(params: &TransitionParams, init: &RegimeInit, t: f64) -> BlochVector {
    if params.t1 == params.t2 {
        return torrey(params, init, t);
    }
    let (d, om) = (params.detuning, params.rabi);
    let (g2, g1) = (1.0 / params.t2, 1.0 / params.t1);
    #[rustfmt::skip]
    let generator = Matrix4::new(
        -g2, -d,  0.0, 0.0,
         d,  -g2, om,  0.0,
         0.0, -om, -g1, params.w_eq * g1,
         0.0, 0.0, 0.0, 0.0,
    );
    let x = (generator * t).exp() * Vector4::new(init.u0, init.v0, init.w0, 1.0);
    BlochVector::new(x[0], x[1], x[2], params.transition)
}

/// Regime I: `0 <-> 1` from the ground doublet `(0, 0, -1)`.
///
/// The literal form ignores `w_eq` and decays with `T2`.
pub fn regime1_solution(params: &TransitionParams, t: f64, mode: Mode) -> BlochVector {
    match mode {
        Mode::Consistent => propagate(params, &RegimeInit::ground(), t),
        Mode::Literal => {
            let (om, d) = (params.rabi, params.detuning);
            let b = beta(params);
            let decay = (-t / params.t2).exp();
            let one_minus_cos = -b * b * cos_minus_one_over(b, t);
            let (ratio, ratio_d) = if b == 0.0 { (0.0, 0.0) } else { (om / b, om * d / (b * b)) };
            let u = ratio_d * one_minus_cos * decay;
            let v = -om * sin_over(b, t) * decay;
            let w = (1.0 + ratio * ratio * one_minus_cos) * decay;
            BlochVector::new(u, v, w, params.transition)
        }
    }
}

/// Literal `u, v, w` shared by the printed regime II and III forms.
fn printed_flip(w_start: f64, b: f64, t2: f64, t: f64, transition: Transition) -> BlochVector {
    let decay = (-t / t2).exp();
    let (sin, cos) = (b * t).sin_cos();
    let u = w_start / 2.0 * (cos - 1.0) * decay;
    let v = -w_start * sin * decay;
    let w = w_start * ((1.0 - cos) / 2.0 - sin) * decay;
    // adding zero folds -0.0 into 0.0
    BlochVector::new(u + 0.0, v + 0.0, w + 0.0, transition)
}

/// Regime II: microwave `1 <-> 2` from `(0, 0, w_start)`.
///
/// The literal form always uses the Zeeman-shifted nutation rate
/// `sqrt(W^2 + (D + W)^2)`; the consistent form applies the shift only when
/// `zeeman_shift` is set. `params.t2` carries the microwave dephasing time.
pub fn regime2_solution(
    w_start: f64,
    params: &TransitionParams,
    t: f64,
    mode: Mode,
    zeeman_shift: bool,
) -> BlochVector {
    let shifted = TransitionParams { detuning: params.detuning + params.rabi, ..*params };
    match mode {
        Mode::Literal => printed_flip(w_start, beta(&shifted), params.t2, t, params.transition),
        Mode::Consistent => {
            let p = if zeeman_shift { shifted } else { *params };
            let p = TransitionParams { w_eq: 0.0, ..p };
            propagate(&p, &RegimeInit::inversion(w_start), t)
        }
    }
}

/// Regime III: optical `2 <-> 3` from `(0, 0, w_start)`.
pub fn regime3_solution(w_start: f64, params: &TransitionParams, t: f64, mode: Mode) -> BlochVector {
    match mode {
        Mode::Literal => printed_flip(w_start, beta(params), params.t2, t, params.transition),
        Mode::Consistent => {
            let p = TransitionParams { w_eq: 0.0, ..*params };
            propagate(&p, &RegimeInit::inversion(w_start), t)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    const T01: Transition = Transition::Optical01;

    #[test]
    fn beta_examples() {
        assert_eq!(beta(&TransitionParams::coherent(T01, 3.0, 4.0)), 5.0);
        assert_eq!(beta(&TransitionParams::coherent(T01, 1.0, 0.0)), 1.0);
        assert_eq!(beta(&TransitionParams::coherent(T01, 0.0, 2.0)), 2.0);
    }

    #[test]
    fn xi_examples() {
        let p = TransitionParams::new(T01, 1.0, 0.0, 1.0, 1.0).unwrap();
        assert_eq!(xi(&p), 0.0);
        assert_abs_diff_eq!(xi(&p.with_equilibrium(1.0)), 0.5, epsilon = 1e-15);
        let p = TransitionParams::new(T01, 0.0, 3.0, 2.0, 2.0).unwrap().with_equilibrium(0.7);
        assert_eq!(xi(&p), 0.0);
        assert_eq!(xi(&TransitionParams::coherent(T01, 0.0, 0.0).with_equilibrium(1.0)), 0.0);
    }

    #[test]
    fn rhs_examples() {
        let p = TransitionParams::new(T01, 0.0, 0.3, 2.0, 3.0).unwrap().with_equilibrium(0.4);
        assert_eq!(bloch_rhs(&BlochVector::new(0.0, 0.0, 0.4, T01), &p), [0.0, 0.0, 0.0]);

        let p = TransitionParams::coherent(T01, 2.5, 0.0);
        let d = bloch_rhs(&BlochVector::new(0.0, 0.0, -1.0, T01), &p);
        assert_eq!(d, [0.0, -2.5, 0.0]);

        let p = TransitionParams::new(T01, 0.0, 0.0, 4.0, 2.0).unwrap().with_equilibrium(0.8);
        let d = bloch_rhs(&BlochVector::new(1.0, 0.0, 0.0, T01), &p);
        assert_abs_diff_eq!(d[0], -0.5);
        assert_abs_diff_eq!(d[1], 0.0);
        assert_abs_diff_eq!(d[2], 0.2);
    }

    #[test]
    fn general_solution_reduces_to_initial_value() {
        let p = TransitionParams::new(T01, 3.0, 1.2, 5.0, 5.0).unwrap().with_equilibrium(0.3);
        let init = RegimeInit::new(0.2, -0.4, 0.5);
        let (b, validity) = general_solution(&p, &init, 0.0).unwrap();
        assert_eq!(validity, Validity::Valid);
        assert_abs_diff_eq!(b.u, 0.2, epsilon = 1e-14);
        assert_abs_diff_eq!(b.v, -0.4, epsilon = 1e-14);
        assert_abs_diff_eq!(b.w, 0.5, epsilon = 1e-14);
    }

    #[test]
    fn general_solution_undamped_resonant_nutation() {
        // exact solution of the undamped resonant equations from (0,0,-1):
        // u = 0, v = -sin(W t), w = -cos(W t)
        let p = TransitionParams::coherent(T01, 1.7, 0.0);
        for k in 0..50 {
            let t = k as f64 * 0.13;
            let (b, _) = general_solution(&p, &RegimeInit::ground(), t).unwrap();
            assert_abs_diff_eq!(b.u, 0.0, epsilon = 1e-14);
            assert_abs_diff_eq!(b.v, -(1.7 * t).sin(), epsilon = 1e-13);
            assert_abs_diff_eq!(b.w, -(1.7 * t).cos(), epsilon = 1e-13);
        }
    }

    #[test]
    fn general_solution_pure_relaxation() {
        let p = TransitionParams::new(T01, 0.0, 0.0, 2.0, 2.0).unwrap();
        let (b, validity) = general_solution(&p, &RegimeInit::ground(), 1.3).unwrap();
        assert_eq!(validity, Validity::OutsideStrongField);
        assert_eq!(b.u, 0.0);
        assert_eq!(b.v, 0.0);
        assert_abs_diff_eq!(b.w, -(-1.3f64 / 2.0).exp(), epsilon = 1e-15);
    }

    #[test]
    fn general_solution_requires_equal_times() {
        let p = TransitionParams::new(T01, 3.0, 0.0, 5.0, 4.0).unwrap();
        assert!(general_solution(&p, &RegimeInit::ground(), 1.0).is_err());
    }

    #[test]
    fn regime1_modes() {
        let p = TransitionParams::coherent(T01, 1.0, 0.0);
        let b = regime1_solution(&p, PI, Mode::Consistent);
        assert_abs_diff_eq!(b.w, 1.0, epsilon = 1e-14);
        let b = regime1_solution(&p, 0.0, Mode::Consistent);
        assert_eq!(b.components(), [0.0, 0.0, -1.0]);
        // printed form starts at +1
        let b = regime1_solution(&p, 0.0, Mode::Literal);
        assert_eq!(b.w, 1.0);
        assert_eq!(b.v, 0.0);
    }

    #[test]
    fn regime1_pi_over_three_is_a_quarter() {
        // sin^2(pi/6) = 1/4 of the population reaches |1>
        let p = TransitionParams::coherent(T01, 1.0, 0.0);
        let b = regime1_solution(&p, PI / 3.0, Mode::Consistent);
        assert_abs_diff_eq!((1.0 + b.w) / 2.0, 0.25, epsilon = 1e-14);
    }

    #[test]
    fn regime1_literal_matches_printed_terms() {
        let p = TransitionParams::new(T01, 2.0, 1.0, 10.0, 10.0).unwrap();
        let t = 0.7;
        let b = regime1_solution(&p, t, Mode::Literal);
        let beta2 = 5.0f64;
        let bt = beta2.sqrt() * t;
        let e = (-t / 10.0f64).exp();
        assert_abs_diff_eq!(b.u, 2.0 * 1.0 / beta2 * (1.0 - bt.cos()) * e, epsilon = 1e-14);
        assert_abs_diff_eq!(b.v, -2.0 / beta2.sqrt() * bt.sin() * e, epsilon = 1e-14);
        assert_abs_diff_eq!(b.w, (1.0 + 4.0 / beta2 * (1.0 - bt.cos())) * e, epsilon = 1e-14);
    }

    #[test]
    fn regime2_examples() {
        let p = TransitionParams::coherent(Transition::Microwave12, 1.0, 0.0);
        let b = regime2_solution(-2.0 / 3.0, &p, 0.0, Mode::Literal, false);
        assert_eq!(b.components(), [0.0, 0.0, 0.0]);
        let b = regime2_solution(-2.0 / 3.0, &p, 0.0, Mode::Consistent, false);
        assert_eq!(b.components(), [0.0, 0.0, -2.0 / 3.0]);
        // pi/2 of resonant area moves half of the pair population
        let b = regime2_solution(-2.0 / 3.0, &p, PI / 2.0, Mode::Consistent, false);
        assert_abs_diff_eq!(b.w, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn regime2_literal_uses_shifted_beta() {
        let p = TransitionParams::coherent(Transition::Microwave12, 1.0, 0.0);
        let t = 0.4;
        let b = regime2_solution(-0.5, &p, t, Mode::Literal, false);
        let bt = 2.0f64.sqrt() * t;
        assert_abs_diff_eq!(b.v, 0.5 * bt.sin(), epsilon = 1e-15);
        assert_abs_diff_eq!(b.u, -0.25 * (bt.cos() - 1.0), epsilon = 1e-15);
    }

    #[test]
    fn regime2_shift_caps_transfer_at_half() {
        // with D_eff = W the maximum transfer is W^2 / beta^2 = 1/2 of the pair
        let p = TransitionParams::coherent(Transition::Microwave12, 1.0, 0.0);
        let beta = 2.0f64.sqrt();
        let b = regime2_solution(-1.0, &p, PI / beta, Mode::Consistent, true);
        assert_abs_diff_eq!(b.w, 0.0, epsilon = 1e-13);
    }

    #[test]
    fn regime3_examples() {
        let p = TransitionParams::coherent(Transition::Optical23, 1.0, 0.0);
        let b = regime3_solution(-0.25, &p, 0.0, Mode::Consistent);
        assert_eq!(b.components(), [0.0, 0.0, -0.25]);
        let b = regime3_solution(-1.0 / 3.0, &p, PI, Mode::Consistent);
        assert_abs_diff_eq!(b.w, 1.0 / 3.0, epsilon = 1e-14);
        let b = regime3_solution(-1.0 / 3.0, &p, 0.0, Mode::Literal);
        assert_eq!(b.w, 0.0);
    }

    #[test]
    fn propagate_matches_torrey_when_times_equal() {
        let p = TransitionParams::new(T01, 2.0, 0.7, 3.0, 3.0).unwrap().with_equilibrium(-0.6);
        let init = RegimeInit::new(0.1, 0.3, -0.8);
        // force the matrix-exponential branch with a hair of asymmetry
        let q = TransitionParams { t1: 3.0 * (1.0 + 1e-12), ..p };
        for k in 0..20 {
            let t = k as f64 * 0.37;
            let a = propagate(&p, &init, t);
            let b = propagate(&q, &init, t);
            assert!(a.max_abs_diff(&b) < 1e-10, "t = {t}: {a:?} vs {b:?}");
        }
    }

    #[test]
    fn undamped_norm_conserved_over_ten_periods() {
        let p = TransitionParams::coherent(T01, 2.0, 0.0);
        let period = 2.0 * PI / 2.0;
        for k in 0..=1000 {
            let t = 10.0 * period * k as f64 / 1000.0;
            let b = regime1_solution(&p, t, Mode::Consistent);
            assert!((b.norm_sqr() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn modes_agree_after_long_decay() {
        let p = TransitionParams::new(Transition::Optical23, 1.0, 0.0, 20.0, 20.0).unwrap();
        let t = 2000.0;
        let a = regime3_solution(-0.4, &p, t, Mode::Consistent);
        let b = regime3_solution(-0.4, &p, t, Mode::Literal);
        assert!(a.max_abs_diff(&b) < 1e-12);
        assert!(a.norm_sqr() < 1e-24);
    }

    #[test]
    fn damped_solution_tracks_enveloped_undamped_solution() {
        // W T = 100: the damped nutation equals the undamped one times e^{-t/T}
        let om = 1.0;
        let tt = 100.0;
        let p = TransitionParams::new(T01, om, 0.0, tt, tt).unwrap();
        let period = 2.0 * PI / om;
        for k in 1..=100 {
            let t = period * k as f64 / 100.0;
            let (b, _) = general_solution(&p, &RegimeInit::ground(), t).unwrap();
            let env = (-t / tt).exp();
            let exact_w = -(om * t).cos() * env;
            let exact_v = -(om * t).sin() * env;
            let bound = 1.0 / (om * tt);
            assert!((b.w - exact_w).abs() <= bound * exact_w.abs().max(1e-3));
            assert!((b.v - exact_v).abs() <= bound * exact_v.abs().max(1e-3));
        }
    }

    fn arb_params() -> impl Strategy<Value = (TransitionParams, RegimeInit)> {
        (
            0.1f64..5.0,
            -3.0f64..3.0,
            0.5f64..50.0,
            0.5f64..50.0,
            -1.0f64..1.0,
            prop::bool::ANY,
            (-0.5f64..0.5, -0.5f64..0.5, -1.0f64..1.0),
        )
            .prop_map(|(om, d, t1, t2, w_eq, equal, (u0, v0, w0))| {
                let t1 = if equal { t2 } else { t1 };
                let p = TransitionParams::new(T01, om, d, t1, t2).unwrap().with_equilibrium(w_eq);
                (p, RegimeInit::new(u0, v0, w0))
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn consistent_solution_satisfies_the_equations((p, init) in arb_params(), t in 0.0f64..6.0) {
            let h = 1e-4;
            let plus = propagate(&p, &init, t + h);
            let minus = propagate(&p, &init, t - h);
            let here = propagate(&p, &init, t);
            let rhs = bloch_rhs(&here, &p);
            let fd = [
                (plus.u - minus.u) / (2.0 * h),
                (plus.v - minus.v) / (2.0 * h),
                (plus.w - minus.w) / (2.0 * h),
            ];
            let scale = 1.0 + p.rabi.powi(3).max(p.detuning.abs().powi(3));
            for k in 0..3 {
                prop_assert!((fd[k] - rhs[k]).abs() < 1e-6 * scale, "component {}: {} vs {}", k, fd[k], rhs[k]);
            }
        }

        #[test]
        fn regimes_are_area_invariant(om in 0.2f64..4.0, tt in 5.0f64..200.0, t in 0.0f64..5.0,
                                      k in 0.1f64..10.0, w0 in -1.0f64..0.0, mode_lit in prop::bool::ANY) {
            let mode = if mode_lit { Mode::Literal } else { Mode::Consistent };
            let p = TransitionParams::new(T01, om, 0.0, tt, tt).unwrap();
            // every rate scales by k, so relaxation times scale by 1/k
            let q = TransitionParams::new(T01, k * om, 0.0, tt / k, tt / k).unwrap();
            let a = regime1_solution(&p, t, mode);
            let b = regime1_solution(&q, t / k, mode);
            prop_assert!(a.max_abs_diff(&b) < 1e-10);
            let p2 = TransitionParams { transition: Transition::Microwave12, ..p };
            let q2 = TransitionParams { transition: Transition::Microwave12, ..q };
            let a = regime2_solution(w0, &p2, t, mode, true);
            let b = regime2_solution(w0, &q2, t / k, mode, true);
            prop_assert!(a.max_abs_diff(&b) < 1e-10);
            let p3 = TransitionParams { transition: Transition::Optical23, ..p };
            let q3 = TransitionParams { transition: Transition::Optical23, ..q };
            let a = regime3_solution(w0, &p3, t, mode);
            let b = regime3_solution(w0, &q3, t / k, mode);
            prop_assert!(a.max_abs_diff(&b) < 1e-10);
        }

        #[test]
        fn damping_never_amplifies(om in 0.1f64..5.0, d in -3.0f64..3.0, tt in 0.5f64..50.0,
                                   w0 in -1.0f64..1.0, t in 0.0f64..20.0) {
            let p = TransitionParams::new(T01, om, d, tt, tt).unwrap();
            let init = RegimeInit::inversion(w0);
            let b = propagate(&p, &init, t);
            prop_assert!(b.norm_sqr() <= w0 * w0 + 1e-9);
        }
    }
}
