//! Shared parameter and state types on the five-state one-excitation basis,
//! plus construction of the Hamiltonian and jump operators.
//!
//! The basis order is fixed everywhere in this crate: |a> = atom A excited,
//! |b> = one photon in cavity A, |c> = atom B excited, |d> = one photon in
//! cavity B, |e> = no excitation left. Rates are dimensionless in units of a
//! reference rate, times in inverse units of that rate, and hbar = 1.

use num_complex::Complex64 as C64;
use serde::Serialize;
use std::f64::consts::TAU;
use std::ops::{Index, IndexMut};
use thiserror::Error;

/// Dimension of the one-excitation Hilbert space.
pub const DIM: usize = 5;

/// Basis indices in the fixed global order (a, b, c, d, e).
pub mod basis {
    pub const ATOM_A: usize = 0;
    pub const CAVITY_A: usize = 1;
    pub const ATOM_B: usize = 2;
    pub const CAVITY_B: usize = 3;
    pub const GROUND: usize = 4;
}

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("{name} must be a finite non-negative rate, got {value}")]
    InvalidRate { name: &'static str, value: f64 },
    #[error("{name} must be finite, got {value}")]
    NotFinite { name: &'static str, value: f64 },
}

/// Rates and detuning of a single atom-cavity subsystem.
///
/// `g` is the atom-cavity coupling, `kappa` the cavity output rate through
/// the partially transmitting mirror, `kappa_loss` the mirror absorption or
/// scattering rate, `gamma` the spontaneous-emission rate of the atom, and
/// `delta` the (signed) atom-cavity detuning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SubsystemParams {
    g: f64,
    kappa: f64,
    kappa_loss: f64,
    gamma: f64,
    delta: f64,
}

impl SubsystemParams {
    pub fn new(
        g: f64,
        kappa: f64,
        kappa_loss: f64,
        gamma: f64,
        delta: f64,
    ) -> Result<Self, ModelError> {
        for (name, value) in [
            ("g", g),
            ("kappa", kappa),
            ("kappa_loss", kappa_loss),
            ("gamma", gamma),
        ] {
            if !value.is_finite() || value < 0.0 {
                return Err(ModelError::InvalidRate { name, value });
            }
        }
        if !delta.is_finite() {
            return Err(ModelError::NotFinite {
                name: "delta",
                value: delta,
            });
        }
        Ok(Self {
            g,
            kappa,
            kappa_loss,
            gamma,
            delta,
        })
    }

    pub fn g(&self) -> f64 {
        self.g
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn kappa_loss(&self) -> f64 {
        self.kappa_loss
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Total cavity field decay rate K = kappa + kappa_loss.
    pub fn big_k(&self) -> f64 {
        self.kappa + self.kappa_loss
    }
}

/// Two cascaded subsystems plus the inter-cavity propagation phase.
///
/// `phi` is reduced to [0, 2*pi) on construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CascadeParams {
    a: SubsystemParams,
    b: SubsystemParams,
    phi: f64,
}

impl CascadeParams {
    pub fn new(a: SubsystemParams, b: SubsystemParams, phi: f64) -> Result<Self, ModelError> {
        if !phi.is_finite() {
            return Err(ModelError::NotFinite {
                name: "phi",
                value: phi,
            });
        }
        Ok(Self {
            a,
            b,
            phi: phi.rem_euclid(TAU),
        })
    }

    /// Both subsystems with the same parameters.
    pub fn equal(p: SubsystemParams, phi: f64) -> Result<Self, ModelError> {
        Self::new(p, p, phi)
    }

    pub fn a(&self) -> &SubsystemParams {
        &self.a
    }

    pub fn b(&self) -> &SubsystemParams {
        &self.b
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    /// Instantaneous decay rates <J_i^dag J_i> of the five jump channels for
    /// an (unnormalized) no-jump state, in the fixed channel order
    /// 1 = cavity output, 2/3 = mirror loss A/B, 4/5 = atom decay A/B.
    pub fn jump_rates(&self, s: &AmplitudeState) -> [f64; 5] {
        let joint = self.a.kappa.sqrt() * s.beta
            + self.b.kappa.sqrt() * C64::from_polar(1.0, -self.phi) * s.delta;
        [
            joint.norm_sqr(),
            self.a.kappa_loss * s.beta.norm_sqr(),
            self.b.kappa_loss * s.delta.norm_sqr(),
            self.a.gamma * s.alpha.norm_sqr(),
            self.b.gamma * s.gamma.norm_sqr(),
        ]
    }
}

/// The four complex amplitudes of the unnormalized no-jump state at time `t`.
///
/// The amplitude of |e> is implicit: its population is 1 minus the squared
/// norm of the four explicit amplitudes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmplitudeState {
    pub t: f64,
    pub alpha: C64,
    pub beta: C64,
    pub gamma: C64,
    pub delta: C64,
}

impl AmplitudeState {
    /// Canonical initial state: atom A excited, everything else empty.
    pub fn initial() -> Self {
        Self {
            t: 0.0,
            alpha: C64::new(1.0, 0.0),
            beta: C64::new(0.0, 0.0),
            gamma: C64::new(0.0, 0.0),
            delta: C64::new(0.0, 0.0),
        }
    }

    pub fn norm_sq(&self) -> f64 {
        self.alpha.norm_sqr() + self.beta.norm_sqr() + self.gamma.norm_sqr() + self.delta.norm_sqr()
    }

    /// Occupation probabilities of the five basis states; the |e> entry is
    /// the accumulated norm loss.
    pub fn populations(&self) -> [f64; 5] {
        [
            self.alpha.norm_sqr(),
            self.beta.norm_sqr(),
            self.gamma.norm_sqr(),
            self.delta.norm_sqr(),
            1.0 - self.norm_sq(),
        ]
    }

    pub fn amplitudes(&self) -> [C64; 4] {
        [self.alpha, self.beta, self.gamma, self.delta]
    }

    pub fn from_amplitudes(t: f64, a: [C64; 4]) -> Self {
        Self {
            t,
            alpha: a[0],
            beta: a[1],
            gamma: a[2],
            delta: a[3],
        }
    }
}

/// Dense 5x5 complex matrix over the fixed basis order.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix5(pub [[C64; DIM]; DIM]);

impl OperatorMatrix5 {
    pub fn zeros() -> Self {
        Self([[C64::new(0.0, 0.0); DIM]; DIM])
    }

    pub fn adjoint(&self) -> Self {
        let mut out = Self::zeros();
        for i in 0..DIM {
            for j in 0..DIM {
                out.0[i][j] = self.0[j][i].conj();
            }
        }
        out
    }

    pub fn matmul(&self, other: &Self) -> Self {
        let mut out = Self::zeros();
        for i in 0..DIM {
            for k in 0..DIM {
                let aik = self.0[i][k];
                if aik == C64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..DIM {
                    out.0[i][j] += aik * other.0[k][j];
                }
            }
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for i in 0..DIM {
            for j in 0..DIM {
                out.0[i][j] += other.0[i][j];
            }
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for i in 0..DIM {
            for j in 0..DIM {
                out.0[i][j] -= other.0[i][j];
            }
        }
        out
    }

    pub fn scale(&self, c: C64) -> Self {
        let mut out = self.clone();
        for i in 0..DIM {
            for j in 0..DIM {
                out.0[i][j] *= c;
            }
        }
        out
    }

    pub fn apply(&self, v: &[C64; DIM]) -> [C64; DIM] {
        std::array::from_fn(|i| (0..DIM).map(|j| self.0[i][j] * v[j]).sum())
    }

    /// Largest elementwise deviation from Hermiticity, max |M - M^dag|.
    pub fn hermiticity_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..DIM {
            for j in 0..DIM {
                worst = worst.max((self.0[i][j] - self.0[j][i].conj()).norm());
            }
        }
        worst
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..DIM {
            for j in 0..DIM {
                worst = worst.max((self.0[i][j] - other.0[i][j]).norm());
            }
        }
        worst
    }
}

impl Index<(usize, usize)> for OperatorMatrix5 {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.0[i][j]
    }
}

impl IndexMut<(usize, usize)> for OperatorMatrix5 {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.0[i][j]
    }
}

/// Hamiltonian on the one-excitation basis: two Jaynes-Cummings blocks plus
/// the cascade coupling i (sqrt(kappa_a kappa_b)/2)(e^{-i phi} b a^dag - h.c.)
/// between the cavity states |b> and |d>.
pub fn build_hamiltonian(p: &CascadeParams) -> OperatorMatrix5 {
    use basis::*;
    let mut h = OperatorMatrix5::zeros();
    h[(ATOM_A, ATOM_A)] = C64::new(p.a().delta(), 0.0);
    h[(ATOM_A, CAVITY_A)] = C64::new(p.a().g(), 0.0);
    h[(CAVITY_A, ATOM_A)] = C64::new(p.a().g(), 0.0);
    h[(ATOM_B, ATOM_B)] = C64::new(p.b().delta(), 0.0);
    h[(ATOM_B, CAVITY_B)] = C64::new(p.b().g(), 0.0);
    h[(CAVITY_B, ATOM_B)] = C64::new(p.b().g(), 0.0);
    let c =
        C64::i() * (p.a().kappa() * p.b().kappa()).sqrt() / 2.0 * C64::from_polar(1.0, -p.phi());
    h[(CAVITY_A, CAVITY_B)] = c;
    h[(CAVITY_B, CAVITY_A)] = c.conj();
    h
}

/// The five jump operators in fixed channel order: the joint cavity output
/// J1 = sqrt(kappa_a)|e><b| + sqrt(kappa_b) e^{-i phi}|e><d|, the two mirror
/// losses, and the two atomic spontaneous-emission channels.
pub fn build_jump_operators(p: &CascadeParams) -> [OperatorMatrix5; 5] {
    use basis::*;
    let mut j1 = OperatorMatrix5::zeros();
    j1[(GROUND, CAVITY_A)] = C64::new(p.a().kappa().sqrt(), 0.0);
    j1[(GROUND, CAVITY_B)] = p.b().kappa().sqrt() * C64::from_polar(1.0, -p.phi());
    let mut j2 = OperatorMatrix5::zeros();
    j2[(GROUND, CAVITY_A)] = C64::new(p.a().kappa_loss().sqrt(), 0.0);
    let mut j3 = OperatorMatrix5::zeros();
    j3[(GROUND, CAVITY_B)] = C64::new(p.b().kappa_loss().sqrt(), 0.0);
    let mut j4 = OperatorMatrix5::zeros();
    j4[(GROUND, ATOM_A)] = C64::new(p.a().gamma().sqrt(), 0.0);
    let mut j5 = OperatorMatrix5::zeros();
    j5[(GROUND, ATOM_B)] = C64::new(p.b().gamma().sqrt(), 0.0);
    [j1, j2, j3, j4, j5]
}

/// Non-Hermitian Hamiltonian H - (i/2) sum_i J_i^dag J_i that generates the
/// no-jump evolution. The |e> row stays identically zero, so the fully
/// decayed state never evolves.
pub fn effective_hamiltonian(p: &CascadeParams) -> OperatorMatrix5 {
    let mut h = build_hamiltonian(p);
    for j in build_jump_operators(p) {
        let jj = j.adjoint().matmul(&j);
        h = h.sub(&jj.scale(C64::new(0.0, 0.5)));
    }
    h
}

pub mod config {
    //! JSON parameter ingestion with exact-key validation and key-path error
    //! reporting. Schema:
    //!
    //! ```json
    //! { "a": {"g": 5.0, "kappa": 0.9, "kappa_loss": 0.1, "gamma": 0.2, "delta": 0.1},
    //!   "b": {"g": 5.0, "kappa": 0.9, "kappa_loss": 0.1, "gamma": 0.2, "delta": 0.1},
    //!   "phi": 0.0 }
    //! ```

    use super::{CascadeParams, SubsystemParams};
    use serde_json::Value;
    use thiserror::Error;

    #[derive(Debug, Error, PartialEq)]
    #[error("config error at `{path}`: {message}")]
    pub struct ConfigError {
        pub path: String,
        pub message: String,
    }

    fn err(path: &str, message: impl Into<String>) -> ConfigError {
        ConfigError {
            path: path.to_string(),
            message: message.into(),
        }
    }

    const SUBSYSTEM_KEYS: [&str; 5] = ["g", "kappa", "kappa_loss", "gamma", "delta"];

    fn number(
        obj: &serde_json::Map<String, Value>,
        parent: &str,
        key: &str,
    ) -> Result<f64, ConfigError> {
        let path = if parent.is_empty() {
            key.to_string()
        } else {
            format!("{parent}.{key}")
        };
        match obj.get(key) {
            None => Err(err(&path, "missing required key")),
            Some(Value::Number(n)) => n
                .as_f64()
                .filter(|x| x.is_finite())
                .ok_or_else(|| err(&path, "not a finite number")),
            Some(other) => Err(err(&path, format!("expected a number, got {other}"))),
        }
    }

    fn subsystem(
        root: &serde_json::Map<String, Value>,
        key: &str,
    ) -> Result<SubsystemParams, ConfigError> {
        let obj = match root.get(key) {
            None => return Err(err(key, "missing required key")),
            Some(Value::Object(m)) => m,
            Some(other) => return Err(err(key, format!("expected an object, got {other}"))),
        };
        for k in obj.keys() {
            if !SUBSYSTEM_KEYS.contains(&k.as_str()) {
                return Err(err(&format!("{key}.{k}"), "unknown key"));
            }
        }
        let g = number(obj, key, "g")?;
        let kappa = number(obj, key, "kappa")?;
        let kappa_loss = number(obj, key, "kappa_loss")?;
        let gamma = number(obj, key, "gamma")?;
        let delta = number(obj, key, "delta")?;
        SubsystemParams::new(g, kappa, kappa_loss, gamma, delta)
            .map_err(|e| err(key, e.to_string()))
    }

    /// Parse and validate a cascade configuration document.
    pub fn cascade_from_json(text: &str) -> Result<CascadeParams, ConfigError> {
        let value: Value =
            serde_json::from_str(text).map_err(|e| err("", format!("invalid JSON: {e}")))?;
        let root = match value {
            Value::Object(m) => m,
            other => return Err(err("", format!("expected a JSON object, got {other}"))),
        };
        for k in root.keys() {
            if !["a", "b", "phi"].contains(&k.as_str()) {
                return Err(err(k, "unknown key"));
            }
        }
        let a = subsystem(&root, "a")?;
        let b = subsystem(&root, "b")?;
        let phi = number(&root, "", "phi")?;
        CascadeParams::new(a, b, phi).map_err(|e| err("phi", e.to_string()))
    }
}
