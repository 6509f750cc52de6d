//! State representations for the four-level system.
//!
//! Levels are labelled `|0>..|3>`: `|0>` and `|3>` are the spin-split valence
//! (heavy hole) states, `|1>` and `|2>` the spin-split conduction states. The
//! three dipole/magnetic-dipole couplings form a ladder `0-1`, `1-2`, `2-3`.

use std::fmt;

use nalgebra::Matrix4;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_LEVELS: usize = 4;

/// Tolerance for the Hermiticity invariant.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// One of the three driven transitions of the ladder.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Transition {
    /// `|0> <-> |1>`, driven by the sigma-minus optical pulse.
    Optical01,
    /// `|1> <-> |2>`, driven by the microwave field.
    Microwave12,
    /// `|2> <-> |3>`, driven by the sigma-plus optical pulse.
    Optical23,
}

impl Transition {
    pub const ALL: [Transition; 3] = [Self::Optical01, Self::Microwave12, Self::Optical23];

    pub fn from_levels(i: usize, j: usize) -> Result<Self> {
        match (i, j) {
            (0, 1) => Ok(Self::Optical01),
            (1, 2) => Ok(Self::Microwave12),
            (2, 3) => Ok(Self::Optical23),
            _ => Err(Error::Domain(format!(
                "({i}, {j}) is not a coupled transition; expected (0,1), (1,2) or (2,3)"
            ))),
        }
    }

    /// `(lower, upper)` level indices.
    pub fn levels(self) -> (usize, usize) {
        match self {
            Self::Optical01 => (0, 1),
            Self::Microwave12 => (1, 2),
            Self::Optical23 => (2, 3),
        }
    }

    /// The two levels not involved in this transition.
    pub fn spectators(self) -> (usize, usize) {
        match self {
            Self::Optical01 => (2, 3),
            Self::Microwave12 => (0, 3),
            Self::Optical23 => (0, 1),
        }
    }
}

impl fmt::Display for Transition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (i, j) = self.levels();
        write!(f, "{i}-{j}")
    }
}

/// Bare level angular frequencies (rad/s) of the unperturbed Hamiltonian.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelStructure {
    omega: [f64; NUM_LEVELS],
}

impl LevelStructure {
    pub fn new(omega: [f64; NUM_LEVELS]) -> Result<Self> {
        if omega.iter().any(|w| !w.is_finite()) {
            return Err(Error::Domain("level frequencies must be finite".into()));
        }
        if omega[1] <= omega[0] || omega[2] <= omega[3] {
            return Err(Error::Domain(
                "conduction levels |1>, |2> must lie above valence levels |0>, |3>".into(),
            ));
        }
        if omega[1] == omega[2] {
            return Err(Error::Domain(
                "conduction spin splitting is zero; microwave transition undefined".into(),
            ));
        }
        Ok(Self { omega })
    }

    pub fn omega(&self) -> [f64; NUM_LEVELS] {
        self.omega
    }

    /// Transition frequency `omega_jj - omega_ii` (may be negative for the
    /// emissive `2-3` step).
    pub fn transition_frequency(&self, t: Transition) -> f64 {
        let (i, j) = t.levels();
        self.omega[j] - self.omega[i]
    }

    /// Detuning of a drive at `carrier` from transition `t`.
    pub fn detuning(&self, t: Transition, carrier: f64) -> f64 {
        carrier - self.transition_frequency(t)
    }
}

/// A 4x4 density matrix over `|0>..|3>`.
///
/// Trace is allowed to fall below one: the phenomenological decay term removes
/// population and the matrix is never renormalised.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DensityMatrix(Matrix4<C64>);

impl DensityMatrix {
    /// Wraps a matrix without checking any invariant.
    pub fn from_matrix_unchecked(m: Matrix4<C64>) -> Self {
        Self(m)
    }

    /// Wraps a matrix, checking Hermiticity, non-negative diagonal and trace.
    pub fn from_matrix(m: Matrix4<C64>) -> Result<Self> {
        let rho = Self(m);
        rho.validate()?;
        Ok(rho)
    }

    pub fn zeros() -> Self {
        Self(Matrix4::zeros())
    }

    /// Pure basis state `|k><k|`.
    pub fn basis(k: usize) -> Result<Self> {
        if k >= NUM_LEVELS {
            return Err(Error::Domain(format!("level {k} out of range 0..3")));
        }
        let mut m = Matrix4::zeros();
        m[(k, k)] = C64::new(1.0, 0.0);
        Ok(Self(m))
    }

    pub fn diagonal(d: [f64; NUM_LEVELS]) -> Self {
        let mut m = Matrix4::zeros();
        for (k, p) in d.iter().enumerate() {
            m[(k, k)] = C64::new(*p, 0.0);
        }
        Self(m)
    }

    /// `|psi><psi|` for a (not necessarily normalised) state vector.
    pub fn pure(psi: [C64; NUM_LEVELS]) -> Self {
        let mut m = Matrix4::zeros();
        for i in 0..NUM_LEVELS {
            for j in 0..NUM_LEVELS {
                m[(i, j)] = psi[i] * psi[j].conj();
            }
        }
        Self(m)
    }

    pub fn matrix(&self) -> &Matrix4<C64> {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix4<C64> {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.0[(i, j)]
    }

    pub fn population(&self, k: usize) -> f64 {
        self.0[(k, k)].re
    }

    pub fn populations(&self) -> [f64; NUM_LEVELS] {
        [0, 1, 2, 3].map(|k| self.population(k))
    }

    pub fn trace(&self) -> f64 {
        self.populations().iter().sum()
    }

    /// Largest `|rho_ij - conj(rho_ji)|`.
    pub fn hermiticity_error(&self) -> f64 {
        let m = &self.0;
        let mut worst = 0.0f64;
        for i in 0..NUM_LEVELS {
            for j in i..NUM_LEVELS {
                worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn validate(&self) -> Result<()> {
        let herm = self.hermiticity_error();
        if !herm.is_finite() || herm > HERMITIAN_TOL {
            return Err(Error::InvalidState(format!("not Hermitian (error {herm:e})")));
        }
        for k in 0..NUM_LEVELS {
            let p = self.population(k);
            if p < -HERMITIAN_TOL {
                return Err(Error::InvalidState(format!("negative population rho_{k}{k} = {p}")));
            }
        }
        let tr = self.trace();
        if tr > 1.0 + 1e-9 {
            return Err(Error::InvalidState(format!("trace {tr} exceeds one")));
        }
        Ok(())
    }

    /// Zeroes every off-diagonal element.
    pub fn without_coherences(&self) -> Self {
        let mut m = Matrix4::zeros();
        for k in 0..NUM_LEVELS {
            m[(k, k)] = C64::new(self.0[(k, k)].re, 0.0);
        }
        Self(m)
    }

    /// Replaces the matrix by `(rho + rho^dagger) / 2`.
    pub fn hermitize(&self) -> Self {
        Self((self.0 + self.0.adjoint()) * C64::new(0.5, 0.0))
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        (self.0 - other.0).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// Bloch vector of one two-level transition.
///
/// `u = rho_ij + rho_ji`, `v = i (rho_ji - rho_ij)`, `w = rho_jj - rho_ii`
/// with `j` the upper level, so the ground doublet sits at `w = -1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlochVector {
    pub u: f64,
    pub v: f64,
    pub w: f64,
    pub transition: Transition,
}

impl BlochVector {
    pub fn new(u: f64, v: f64, w: f64, transition: Transition) -> Self {
        Self { u, v, w, transition }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.u * self.u + self.v * self.v + self.w * self.w
    }

    pub fn components(&self) -> [f64; 3] {
        [self.u, self.v, self.w]
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        (self.u - other.u)
            .abs()
            .max((self.v - other.v).abs())
            .max((self.w - other.w).abs())
    }
}

pub fn bloch_from_density(rho: &DensityMatrix, i: usize, j: usize) -> Result<BlochVector> {
    let transition = Transition::from_levels(i, j)?;
    Ok(bloch_of(rho, transition))
}

/// Infallible form of [`bloch_from_density`] for an already-validated transition.
pub fn bloch_of(rho: &DensityMatrix, transition: Transition) -> BlochVector {
    let (i, j) = transition.levels();
    let rij = rho.get(i, j);
    let rji = rho.get(j, i);
    let u = (rij + rji).re;
    let v = (C64::i() * (rji - rij)).re;
    let w = rho.population(j) - rho.population(i);
    BlochVector { u, v, w, transition }
}

/// Writes a Bloch vector back into the 2x2 block of its transition.
///
/// The pair population `S = rho_ii + rho_jj` is taken from `rho_prev` and held
/// fixed; populations become `(S -/+ w) / 2` and `rho_ij = (u + i v) / 2`.
/// Every element outside the block is copied unchanged.
pub fn density_update_from_bloch(rho_prev: &DensityMatrix, b: &BlochVector) -> Result<DensityMatrix> {
    let (i, j) = b.transition.levels();
    let shared = rho_prev.population(i) + rho_prev.population(j);
    if shared <= 0.0 {
        return Err(Error::DegenerateBlock(i, j, shared));
    }
    let mut m = *rho_prev.matrix();
    m[(i, i)] = C64::new((shared - b.w) / 2.0, 0.0);
    m[(j, j)] = C64::new((shared + b.w) / 2.0, 0.0);
    let coherence = C64::new(b.u / 2.0, b.v / 2.0);
    m[(i, j)] = coherence;
    m[(j, i)] = coherence.conj();
    Ok(DensityMatrix(m))
}

/// Decimal level index paired with its two-qubit binary label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct TwoQubitLabel {
    level: usize,
}

impl TwoQubitLabel {
    pub const ALL: [TwoQubitLabel; 4] = [
        TwoQubitLabel { level: 0 },
        TwoQubitLabel { level: 1 },
        TwoQubitLabel { level: 2 },
        TwoQubitLabel { level: 3 },
    ];

    pub fn decimal(&self) -> usize {
        self.level
    }

    pub fn binary(&self) -> &'static str {
        ["00", "01", "10", "11"][self.level]
    }

    pub fn parse_binary(s: &str) -> Result<Self> {
        match s {
            "00" => Ok(Self { level: 0 }),
            "01" => Ok(Self { level: 1 }),
            "10" => Ok(Self { level: 2 }),
            "11" => Ok(Self { level: 3 }),
            _ => Err(Error::Domain(format!("'{s}' is not a two-bit label"))),
        }
    }
}

impl fmt::Display for TwoQubitLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "|{}>", self.binary())
    }
}

pub fn binary_label(level: usize) -> Result<TwoQubitLabel> {
    if level >= NUM_LEVELS {
        return Err(Error::Domain(format!("level {level} out of range 0..3")));
    }
    Ok(TwoQubitLabel { level })
}
