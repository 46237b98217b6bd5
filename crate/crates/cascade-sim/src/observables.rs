//! Derived physical quantities: concurrence, radiated-photon probability,
//! detector response, the temporal mode envelope of the radiated photon, the
//! interference term, and the two-measurement concurrence reconstruction.

use crate::analytic;
use crate::model::{AmplitudeState, CascadeParams, SubsystemParams};
use crate::ode::IntegratorConfig;
use num_complex::Complex64 as C64;
use thiserror::Error;

/// Squared-norm threshold that defines the truncation time for
/// infinite-horizon quantities.
pub const NORM_TAIL_CUTOFF: f64 = 1e-10;

/// Default probability floor below which the reconstruction refuses to
/// divide by the single-cavity signal.
pub const DEFAULT_NOISE_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum ObservableError {
    #[error("invalid detector config: {0}")]
    InvalidDetector(String),
    #[error("all dissipation rates are zero; the radiated probability has no limit")]
    NonDissipative,
    #[error("squared norm is still {norm:.3e} at t = {t:.3e}; no truncation time found")]
    TailNotReached { t: f64, norm: f64 },
    #[error("p_rad(infinity) is zero; the mode function is undefined")]
    UndefinedMode,
    #[error("time grid ends before the norm has decayed: <psi|psi> = {norm_end:.3e} at the last grid point (need < 1e-8)")]
    GridTooShort { norm_end: f64 },
    #[error("series lengths differ: {left} vs {right}")]
    GridMismatch { left: usize, right: usize },
    #[error("time grid must be non-empty and strictly ascending")]
    BadGrid,
    #[error(transparent)]
    Ode(#[from] crate::ode::OdeError),
}

/// Detector quantum efficiency and time resolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorConfig {
    eta: f64,
    t_bin: f64,
}

impl DetectorConfig {
    pub fn new(eta: f64, t_bin: f64) -> Result<Self, ObservableError> {
        if !(0.0..=1.0).contains(&eta) {
            return Err(ObservableError::InvalidDetector(format!(
                "eta must lie in [0, 1], got {eta}"
            )));
        }
        if !(t_bin > 0.0 && t_bin.is_finite()) {
            return Err(ObservableError::InvalidDetector(format!(
                "t_bin must be positive, got {t_bin}"
            )));
        }
        Ok(Self { eta, t_bin })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn t_bin(&self) -> f64 {
        self.t_bin
    }
}

/// Normalized temporal intensity profile zeta^2(t) of the radiated photon,
/// with the total channel-1 emission probability it was normalized by.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeFunction {
    pub t_grid: Vec<f64>,
    pub zeta_sq: Vec<f64>,
    pub p_rad_inf: f64,
}

/// Total radiated probability with its truncation diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadiatedTotal {
    pub value: f64,
    /// Time at which the integral was truncated.
    pub t_cut: f64,
    /// Remaining squared norm at `t_cut` (bounds the truncation error).
    pub norm_tail: f64,
}

/// Concurrence of the two intracavity fields, C = 2 |beta| |delta|.
pub fn concurrence(s: &AmplitudeState) -> f64 {
    2.0 * s.beta.norm() * s.delta.norm()
}

/// Strong-coupling equal-parameter approximation
/// C(t) ~ kappa t sin^2(g t) exp(-(K + Gamma) t / 2); valid for g >> K, Gamma, Delta.
pub fn concurrence_approx(p: &SubsystemParams, t: f64) -> f64 {
    let s = (p.g() * t).sin();
    p.kappa() * t * s * s * (-(p.big_k() + p.gamma()) * t / 2.0).exp()
}

/// Interference term 2 Re[beta*(t) delta(t) e^{-i phi}] between the photon
/// being in one or the other cavity; equals C cos(phi_delta - phi_beta).
pub fn interference_term(s: &AmplitudeState, phi: f64) -> f64 {
    2.0 * (s.beta.conj() * s.delta * C64::from_polar(1.0, -phi)).re
}

/// Instantaneous channel-1 flux <J_1^dag J_1>(t).
pub fn emission_flux(p: &CascadeParams, s: &AmplitudeState) -> f64 {
    p.jump_rates(s)[0]
}

fn flux_at(p: &CascadeParams, t: f64) -> f64 {
    emission_flux(p, &analytic::amplitudes_general(p, t))
}

fn quad_tol(cfg: &IntegratorConfig) -> f64 {
    (100.0 * cfg.abs_tol).clamp(1e-12, 1e-8)
}

/// Probability that the photon has been radiated through the monitored
/// output channel within [0, t]; monotone non-decreasing in t.
pub fn p_rad(p: &CascadeParams, t: f64, cfg: &IntegratorConfig) -> Result<f64, ObservableError> {
    cfg.validate()?;
    assert!(t >= 0.0, "p_rad is defined for t >= 0");
    Ok(adaptive_gauss_kronrod(
        &|x| flux_at(p, x),
        0.0,
        t,
        quad_tol(cfg),
    ))
}

/// Truncation time: smallest probed t with <psi|psi>(t) below the cutoff.
fn tail_cut_time(p: &CascadeParams) -> Result<f64, ObservableError> {
    let mut t = 1.0;
    loop {
        let norm = analytic::amplitudes_general(p, t).norm_sq();
        if norm < NORM_TAIL_CUTOFF {
            return Ok(t);
        }
        t *= 2.0;
        if t > 1e9 {
            return Err(ObservableError::TailNotReached { t, norm });
        }
    }
}

/// The t -> infinity limit of [`p_rad`], truncated where the surviving norm
/// drops below [`NORM_TAIL_CUTOFF`].
pub fn p_rad_infty(
    p: &CascadeParams,
    cfg: &IntegratorConfig,
) -> Result<RadiatedTotal, ObservableError> {
    cfg.validate()?;
    if p.a().big_k() + p.b().big_k() + p.a().gamma() + p.b().gamma() == 0.0 {
        return Err(ObservableError::NonDissipative);
    }
    let t_cut = tail_cut_time(p)?;
    let value = adaptive_gauss_kronrod(&|x| flux_at(p, x), 0.0, t_cut, quad_tol(cfg));
    let norm_tail = analytic::amplitudes_general(p, t_cut).norm_sq();
    Ok(RadiatedTotal {
        value,
        t_cut,
        norm_tail,
    })
}

/// Normalized mode intensity zeta^2(t) = <J_1^dag J_1>(t) / p_rad(inf) on the
/// caller's grid. The grid must extend far enough that the squared norm at
/// its end is below 1e-8, so the profile carries all but a negligible tail.
pub fn mode_envelope(
    p: &CascadeParams,
    t_grid: &[f64],
    cfg: &IntegratorConfig,
) -> Result<ModeFunction, ObservableError> {
    cfg.validate()?;
    if t_grid.is_empty() || t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(ObservableError::BadGrid);
    }
    let norm_end = analytic::amplitudes_general(p, *t_grid.last().unwrap()).norm_sq();
    if norm_end >= 1e-8 {
        return Err(ObservableError::GridTooShort { norm_end });
    }
    let total = p_rad_infty(p, cfg)?;
    if total.value <= 0.0 {
        return Err(ObservableError::UndefinedMode);
    }
    let zeta_sq = t_grid
        .iter()
        .map(|&t| flux_at(p, t) / total.value)
        .collect();
    Ok(ModeFunction {
        t_grid: t_grid.to_vec(),
        zeta_sq,
        p_rad_inf: total.value,
    })
}

/// Probability of a detector click in [t - T/2, t + T/2]:
/// eta T <J_1^dag J_1>(t), assuming the envelope varies slowly over T.
pub fn detection_probability(p: &CascadeParams, t: f64, det: &DetectorConfig) -> f64 {
    det.eta * det.t_bin * flux_at(p, t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReconstructionFlag {
    Ok,
    /// P_D > P_D', i.e. 1 - sqrt(r) < 0: outside the regime where the
    /// interference term equals minus the concurrence.
    RegimeViolation,
    /// Single-cavity signal below the noise floor; the point is undefined.
    BelowFloor,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconstructionPoint {
    pub beta_abs: f64,
    pub delta_abs: f64,
    pub concurrence: f64,
    pub flag: ReconstructionFlag,
}

/// Reconstruct the concurrence from the two measured click-probability
/// series: P_D(t) with both cavities and P_D'(t) = eta kappa T |beta(t)|^2
/// with cavity A alone. Valid in the strong-coupling equal-parameter regime;
/// points that violate it are flagged rather than silently repaired.
pub fn reconstruct_concurrence(
    pd_two_cavity: &[f64],
    pd_single_cavity: &[f64],
    det: &DetectorConfig,
    kappa: f64,
    noise_floor: f64,
) -> Result<Vec<ReconstructionPoint>, ObservableError> {
    if pd_two_cavity.len() != pd_single_cavity.len() {
        return Err(ObservableError::GridMismatch {
            left: pd_two_cavity.len(),
            right: pd_single_cavity.len(),
        });
    }
    let scale = det.eta * kappa * det.t_bin;
    Ok(pd_two_cavity
        .iter()
        .zip(pd_single_cavity)
        .map(|(&pd, &pd_prime)| {
            if pd_prime.is_nan() || pd_prime <= noise_floor {
                return ReconstructionPoint {
                    beta_abs: f64::NAN,
                    delta_abs: f64::NAN,
                    concurrence: f64::NAN,
                    flag: ReconstructionFlag::BelowFloor,
                };
            }
            let beta_abs = (pd_prime / scale).sqrt();
            let x = 1.0 - (pd.max(0.0) / pd_prime).sqrt();
            let delta_abs = beta_abs * x.max(0.0);
            ReconstructionPoint {
                beta_abs,
                delta_abs,
                concurrence: (2.0 * beta_abs * delta_abs).clamp(0.0, 1.0),
                flag: if x < 0.0 {
                    ReconstructionFlag::RegimeViolation
                } else {
                    ReconstructionFlag::Ok
                },
            }
        })
        .collect())
}

// 15-point Kronrod nodes/weights with the embedded 7-point Gauss rule.
const XGK: [f64; 8] = [
    0.991455371120813,
    0.949107912342759,
    0.864864423359769,
    0.741531185599394,
    0.586087235467691,
    0.405845151377397,
    0.207784955007898,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529,
    0.063092092629979,
    0.104790010322250,
    0.140653259715525,
    0.169004726639267,
    0.190350578064785,
    0.204432940075298,
    0.209482141084728,
];
const WG: [f64; 4] = [
    0.129484966168870,
    0.279705391489277,
    0.381830050505119,
    0.417959183673469,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let half = (b - a) / 2.0;
    let mid = (a + b) / 2.0;
    let mut kronrod = WGK[7] * f(mid);
    let mut gauss = WG[3] * f(mid);
    for i in 0..7 {
        let x = half * XGK[i];
        let pair = f(mid - x) + f(mid + x);
        kronrod += WGK[i] * pair;
        if i % 2 == 1 {
            gauss += WG[i / 2] * pair;
        }
    }
    let value = kronrod * half;
    (value, (value - gauss * half).abs())
}

/// Adaptive bisection on the GK15 rule down to absolute error `tol`,
/// halving the error budget on each split.
fn adaptive_gauss_kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        tol: f64,
        est: (f64, f64),
        depth: u32,
    ) -> f64 {
        let (value, err) = est;
        if err <= tol || depth >= 48 {
            return value;
        }
        let mid = (a + b) / 2.0;
        let left = gk15(f, a, mid);
        let right = gk15(f, mid, b);
        recurse(f, a, mid, tol / 2.0, left, depth + 1)
            + recurse(f, mid, b, tol / 2.0, right, depth + 1)
    }
    if a == b {
        return 0.0;
    }
    recurse(f, a, b, tol, gk15(f, a, b), 0)
}

/// Trapezoid rule on an arbitrary ascending grid.
pub fn trapezoid(t: &[f64], y: &[f64]) -> f64 {
    t.windows(2)
        .zip(y.windows(2))
        .map(|(tw, yw)| (tw[1] - tw[0]) * (yw[0] + yw[1]) / 2.0)
        .sum()
}
