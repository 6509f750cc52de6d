//! Scenario configuration: TOML in, validated and fully defaulted.
//!
//! Angles are given in units of pi. Times and rates are in any consistent
//! unit system; `omega_t2` sets the dephasing time as a multiple of the
//! regime-I Rabi period when `t2` is absent.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::f64::consts::PI;
use std::path::Path;

use crate::bloch::{Mode, TransitionParams, Validity};
use crate::error::{Error, Result};
use crate::oracle::{max_step, DecayParams};
use crate::pulse::{build_cnot_schedule, CnotSpec, RegimeSchedule, Shape};
use crate::sequence::Relaxation;
use crate::state::{LevelStructure, Transition};

/// Where fidelity areas are measured from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AreaOrigin {
    /// Cumulative area from the start of the sequence.
    #[default]
    Start,
    /// Area delivered after the initialization regimes.
    RegimeThree,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub mode: Mode,
    pub envelope: Shape,
    /// Regime-I area over pi.
    pub phi1_pi: f64,
    /// Regime-II area over pi.
    pub phi2_pi: f64,
    pub n_flips: usize,
    /// Area of each regime-III pulse over pi.
    pub flip_area_pi: f64,
    /// True area per nominal axis unit.
    pub axis_scale: f64,
    pub rabi: [f64; 3],
    pub detuning: [f64; 3],
    pub zeeman_shift: bool,
    /// Gaussian centre spacing; defaults to the 8 sigma window.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_period: Option<f64>,
    /// `Omega_01 * T2`, used when `t2` is not given.
    pub omega_t2: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t2: Option<f64>,
    /// Microwave dephasing time; defaults to `t2`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t2_microwave: Option<f64>,
    /// Equilibrium inversion of the `0 <-> 1` transition.
    pub w_eq: f64,
    /// Level energies `omega_0..omega_3`.
    pub levels: [f64; 4],
    pub dt: f64,
    /// Keep every `stride`-th integrator step.
    pub stride: usize,
    pub reset_coherences: bool,
    pub fidelity_origin: AreaOrigin,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Consistent,
            envelope: Shape::Square,
            phi1_pi: 1.0 / 3.0,
            phi2_pi: 0.25,
            n_flips: 5,
            flip_area_pi: 0.5,
            axis_scale: 1.0,
            rabi: [1.0; 3],
            detuning: [0.0; 3],
            zeeman_shift: false,
            train_period: None,
            omega_t2: 100.0,
            t1: None,
            t2: None,
            t2_microwave: None,
            w_eq: 0.0,
            levels: [0.0, 1000.0, 990.0, 10.0],
            dt: 0.005,
            stride: 10,
            reset_coherences: true,
            fidelity_origin: AreaOrigin::Start,
        }
    }
}

/// Non-fatal findings from validation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Warning {
    pub code: String,
    pub message: String,
}

/// Keys that are omitted from the effective config when unset.
const OPTIONAL_KEYS: [&str; 4] = ["train_period", "t1", "t2", "t2_microwave"];

fn positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("`{name}` must be a positive finite number, got {x}")))
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Applies `key=value` overrides, with values in TOML syntax.
    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self> {
        if overrides.is_empty() {
            return Ok(self.clone());
        }
        let mut table = toml::Table::try_from(self).map_err(|e| Error::Config(e.to_string()))?;
        for item in overrides {
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{item}` is not key=value")))?;
            let key = key.trim().trim_start_matches("--").replace('-', "_");
            if !table.contains_key(&key) && !OPTIONAL_KEYS.contains(&key.as_str()) {
                return Err(Error::Config(format!("unknown override key `{key}`")));
            }
            let value: toml::Value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
                Ok(mut t) => t.remove("v").expect("parsed key"),
                Err(_) => toml::Value::String(raw.trim().to_string()),
            };
            table.insert(key, value);
        }
        let text = toml::to_string(&table).map_err(|e| Error::Config(e.to_string()))?;
        Self::from_toml_str(&text)
    }

    /// Effective configuration with every default filled in.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }

    /// First 16 hex digits of the SHA-256 of [`Self::to_toml`].
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        hex::encode(digest)[..16].to_string()
    }

    fn check(&self) -> Result<()> {
        for (name, phi) in [("phi1_pi", self.phi1_pi), ("phi2_pi", self.phi2_pi)] {
            if !(phi > 0.0 && phi <= 2.0) {
                return Err(Error::Config(format!("`{name}` must lie in (0, 2], got {phi}")));
            }
        }
        positive("flip_area_pi", self.flip_area_pi)?;
        positive("axis_scale", self.axis_scale)?;
        positive("omega_t2", self.omega_t2)?;
        positive("dt", self.dt)?;
        for (k, r) in self.rabi.iter().enumerate() {
            positive(&format!("rabi[{k}]"), *r)?;
        }
        for (k, d) in self.detuning.iter().enumerate() {
            if !d.is_finite() {
                return Err(Error::Config(format!("`detuning[{k}]` must be finite")));
            }
        }
        for (name, v) in [("t1", self.t1), ("t2", self.t2), ("t2_microwave", self.t2_microwave), ("train_period", self.train_period)] {
            if let Some(x) = v {
                positive(name, x)?;
            }
        }
        if !(self.w_eq.abs() <= 1.0) {
            return Err(Error::Config(format!("`w_eq` must lie in [-1, 1], got {}", self.w_eq)));
        }
        if self.stride == 0 {
            return Err(Error::Config("`stride` must be at least 1".into()));
        }
        LevelStructure::new(self.levels).map_err(|e| Error::Config(format!("`levels`: {e}")))?;
        let limit = max_step(&self.schedule()?);
        if self.dt > limit {
            return Err(Error::Config(format!("`dt` = {} exceeds the stability limit {limit}", self.dt)));
        }
        Ok(())
    }

    pub fn spec(&self) -> CnotSpec {
        CnotSpec {
            phi1: self.phi1_pi * PI * self.axis_scale,
            phi2: self.phi2_pi * PI * self.axis_scale,
            n_flips: self.n_flips,
            flip_area: self.flip_area_pi * PI * self.axis_scale,
            envelope: self.envelope,
            peak_rabi: self.rabi,
            detuning: self.detuning,
            zeeman_shift: self.zeeman_shift,
            train_period: self.train_period,
        }
    }

    /// Pulse schedule. Scaled areas above `2 pi` are reduced modulo `2 pi`
    /// for the initialization regimes.
    pub fn schedule(&self) -> Result<RegimeSchedule> {
        let mut spec = self.spec();
        for phi in [&mut spec.phi1, &mut spec.phi2] {
            if *phi > 2.0 * PI {
                *phi = phi.rem_euclid(2.0 * PI);
                if *phi == 0.0 {
                    *phi = 2.0 * PI;
                }
            }
        }
        build_cnot_schedule(&spec).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn relaxation(&self) -> Relaxation {
        let t2 = self.t2.unwrap_or(self.omega_t2 / self.rabi[0]);
        Relaxation {
            t1: self.t1.unwrap_or(t2),
            t2,
            t2_microwave: self.t2_microwave.unwrap_or(t2),
        }
    }

    pub fn decay(&self) -> Result<DecayParams> {
        let r = self.relaxation();
        DecayParams::from_times(r.t1, r.t2, r.t2_microwave)
    }

    /// Strong-field and dephasing-budget warnings.
    pub fn warnings(&self) -> Result<Vec<Warning>> {
        let r = self.relaxation();
        let mut out = Vec::new();
        for (k, tr) in Transition::ALL.into_iter().enumerate() {
            let t2 = if tr == Transition::Microwave12 { r.t2_microwave } else { r.t2 };
            let p = TransitionParams::new(tr, self.rabi[k], self.detuning[k], r.t1, t2)?;
            if p.validity() == Validity::OutsideStrongField {
                out.push(Warning {
                    code: "strong-field".into(),
                    message: format!(
                        "transition {tr}: Omega * min(T1, T2) = {} <= 1, closed forms are not accurate",
                        self.rabi[k] * r.t1.min(t2)
                    ),
                });
            }
        }
        let duration = self.schedule()?.end();
        if duration > r.t2 {
            out.push(Warning {
                code: "dephasing-budget".into(),
                message: format!("sequence duration {duration} exceeds T2 = {}", r.t2),
            });
        }
        Ok(out)
    }
}
