//! Adaptive Dormand-Prince 5(4) integration of the no-jump amplitude system,
//! with cubic-Hermite dense output for jump-time sampling.
//!
//! Values requested on an explicit time grid are produced by landing steps
//! exactly on the grid times, so grid outputs carry no interpolation error;
//! the stored dense output interpolates between accepted steps and is what
//! the trajectory sampler bisects on.

use crate::model::{AmplitudeState, CascadeParams};
use num_complex::Complex64 as C64;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum OdeError {
    #[error("invalid integrator config: {0}")]
    InvalidConfig(String),
    #[error("integration failed: step size underflow at t = {t}")]
    StepSizeUnderflow { t: f64 },
    #[error("integration failed: step limit exceeded at t = {t}")]
    TooManySteps { t: f64 },
    #[error("t = {t} outside the integrated span [{start}, {end}]")]
    OutOfSpan { t: f64, start: f64, end: f64 },
    #[error("time grid must be strictly ascending and start at or after the initial time")]
    BadGrid,
}

/// Tolerances and step control for the adaptive integrator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub dense_output: bool,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            max_step: 0.1,
            dense_output: true,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<(), OdeError> {
        if !(self.rel_tol > 0.0 && self.rel_tol <= 1e-3) {
            return Err(OdeError::InvalidConfig(format!(
                "rel_tol must lie in (0, 1e-3], got {}",
                self.rel_tol
            )));
        }
        if !(self.abs_tol > 0.0 && self.abs_tol <= 1e-6) {
            return Err(OdeError::InvalidConfig(format!(
                "abs_tol must lie in (0, 1e-6], got {}",
                self.abs_tol
            )));
        }
        if !(self.max_step > 0.0 && self.max_step.is_finite()) {
            return Err(OdeError::InvalidConfig(format!(
                "max_step must be positive and finite, got {}",
                self.max_step
            )));
        }
        Ok(())
    }
}

// Dormand-Prince 5(4) tableau. The last row of `A` doubles as the 5th-order
// weights (FSAL); `E` is the difference between the 5th- and 4th-order
// weights, used for the embedded error estimate.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

const MAX_STEPS: usize = 20_000_000;

type StateHook<'a> = Box<dyn FnMut(&mut [C64]) + 'a>;

pub(crate) struct Dopri5<'a, F>
where
    F: FnMut(f64, &[C64], &mut [C64]),
{
    rhs: F,
    cfg: &'a IntegratorConfig,
    pub t: f64,
    pub y: Vec<C64>,
    pub f: Vec<C64>,
    h: f64,
    k: [Vec<C64>; 7],
    y_stage: Vec<C64>,
    y_next: Vec<C64>,
    steps: usize,
    /// Applied to the state after every accepted step (dissipator symmetry
    /// restoration for the master-equation engine).
    post_accept: Option<StateHook<'a>>,
}

impl<'a, F> Dopri5<'a, F>
where
    F: FnMut(f64, &[C64], &mut [C64]),
{
    pub fn new(mut rhs: F, t0: f64, y0: &[C64], cfg: &'a IntegratorConfig) -> Self {
        let dim = y0.len();
        let mut f = vec![C64::new(0.0, 0.0); dim];
        rhs(t0, y0, &mut f);
        let h = cfg.max_step.min(1e-3);
        Self {
            rhs,
            cfg,
            t: t0,
            y: y0.to_vec(),
            f,
            h,
            k: std::array::from_fn(|_| vec![C64::new(0.0, 0.0); dim]),
            y_stage: vec![C64::new(0.0, 0.0); dim],
            y_next: vec![C64::new(0.0, 0.0); dim],
            steps: 0,
            post_accept: None,
        }
    }

    pub fn with_post_accept(mut self, hook: impl FnMut(&mut [C64]) + 'a) -> Self {
        self.post_accept = Some(Box::new(hook));
        self
    }

    /// Take one accepted step without passing `t_limit`. Returns true when
    /// the step landed exactly on `t_limit`.
    pub fn step_toward(&mut self, t_limit: f64) -> Result<bool, OdeError> {
        let dim = self.y.len();
        loop {
            self.steps += 1;
            if self.steps > MAX_STEPS {
                return Err(OdeError::TooManySteps { t: self.t });
            }
            let remaining = t_limit - self.t;
            let clipped = self.h.min(self.cfg.max_step) >= remaining;
            let h = if clipped {
                remaining
            } else {
                self.h.min(self.cfg.max_step)
            };

            // stages; k[0] is the FSAL derivative carried from the last step
            self.k[0].copy_from_slice(&self.f);
            for s in 1..7 {
                for i in 0..dim {
                    let mut acc = self.y[i];
                    for (j, a) in A[s - 1][..s].iter().enumerate() {
                        acc += *a * h * self.k[j][i];
                    }
                    self.y_stage[i] = acc;
                }
                let (_, rest) = self.k.split_at_mut(s);
                (self.rhs)(self.t + C[s] * h, &self.y_stage, &mut rest[0]);
            }
            // 5th-order solution is stage 7's argument (FSAL): A[5] row
            for i in 0..dim {
                let mut acc = self.y[i];
                for (j, a) in A[5].iter().enumerate() {
                    acc += *a * h * self.k[j][i];
                }
                self.y_next[i] = acc;
            }

            // weighted rms error of the embedded 4th-order difference
            let mut err_sq = 0.0;
            for i in 0..dim {
                let mut e = C64::new(0.0, 0.0);
                for (j, w) in E.iter().enumerate() {
                    e += *w * self.k[j][i];
                }
                let e = (e * h).norm();
                let scale = self.cfg.abs_tol
                    + self.cfg.rel_tol * self.y[i].norm().max(self.y_next[i].norm());
                err_sq += (e / scale) * (e / scale);
            }
            let err = (err_sq / dim as f64).sqrt();

            if err <= 1.0 {
                self.t = if clipped { t_limit } else { self.t + h };
                std::mem::swap(&mut self.y, &mut self.y_next);
                if let Some(hook) = self.post_accept.as_mut() {
                    hook(&mut self.y);
                    let (t, y) = (self.t, &self.y);
                    (self.rhs)(t, y, &mut self.f);
                } else {
                    // k[6] = f(t+h, y5) is the next step's k[0]
                    self.f.copy_from_slice(&self.k[6]);
                }
                if !clipped {
                    let scale = if err == 0.0 {
                        5.0
                    } else {
                        (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                    };
                    self.h = (h * scale).min(self.cfg.max_step);
                }
                return Ok(clipped);
            }

            // rejected: shrink and retry (NaN errors also land here)
            let scale = if err.is_finite() {
                (0.9 * err.powf(-0.2)).clamp(0.2, 1.0)
            } else {
                0.2
            };
            self.h = h * scale;
            if !clipped && self.h < 1e-14 * self.t.abs().max(1.0) {
                return Err(OdeError::StepSizeUnderflow { t: self.t });
            }
        }
    }
}

fn amplitude_rhs(p: &CascadeParams) -> impl Fn(f64, &[C64], &mut [C64]) {
    let ca = C64::new(-p.a().gamma() / 2.0, -p.a().delta());
    let cb = C64::new(-p.b().gamma() / 2.0, -p.b().delta());
    let ga = p.a().g();
    let gb = p.b().g();
    let half_ka = p.a().big_k() / 2.0;
    let half_kb = p.b().big_k() / 2.0;
    let drive = (p.a().kappa() * p.b().kappa()).sqrt() * C64::from_polar(1.0, p.phi());
    move |_t, y, dy| {
        dy[0] = ca * y[0] - C64::i() * ga * y[1];
        dy[1] = -C64::i() * ga * y[0] - half_ka * y[1];
        dy[2] = cb * y[2] - C64::i() * gb * y[3];
        dy[3] = -C64::i() * gb * y[2] - half_kb * y[3] - drive * y[1];
    }
}

/// Integrate the amplitude equations and return the state at each grid time.
///
/// The grid must be strictly ascending with `t_grid[0] >= init.t`; each grid
/// time is hit exactly by the stepper.
pub fn integrate(
    p: &CascadeParams,
    t_grid: &[f64],
    init: &AmplitudeState,
    cfg: &IntegratorConfig,
) -> Result<Vec<AmplitudeState>, OdeError> {
    cfg.validate()?;
    if t_grid.is_empty() || t_grid.windows(2).any(|w| w[1] <= w[0]) || t_grid[0] < init.t {
        return Err(OdeError::BadGrid);
    }
    let rhs = amplitude_rhs(p);
    let y0 = init.amplitudes();
    let mut stepper = Dopri5::new(rhs, init.t, &y0, cfg);
    let mut out = Vec::with_capacity(t_grid.len());
    for &target in t_grid {
        while stepper.t < target {
            stepper.step_toward(target)?;
        }
        out.push(AmplitudeState::from_amplitudes(
            stepper.t,
            [stepper.y[0], stepper.y[1], stepper.y[2], stepper.y[3]],
        ));
    }
    Ok(out)
}

/// Dense no-jump solution: states and derivatives at every accepted step,
/// interpolated in between by a cubic Hermite polynomial.
#[derive(Debug, Clone)]
pub struct NoJumpSolution {
    ts: Vec<f64>,
    ys: Vec<[C64; 4]>,
    fs: Vec<[C64; 4]>,
    node_norms: Vec<f64>,
}

/// Integrate from `init` to `t_end`, storing dense output.
pub fn integrate_dense(
    p: &CascadeParams,
    t_end: f64,
    init: &AmplitudeState,
    cfg: &IntegratorConfig,
) -> Result<NoJumpSolution, OdeError> {
    cfg.validate()?;
    if t_end.is_nan() || t_end <= init.t {
        return Err(OdeError::BadGrid);
    }
    let rhs = amplitude_rhs(p);
    let y0 = init.amplitudes();
    let mut stepper = Dopri5::new(rhs, init.t, &y0, cfg);
    let mut ts = vec![init.t];
    let mut ys = vec![y0];
    let mut fs = vec![[stepper.f[0], stepper.f[1], stepper.f[2], stepper.f[3]]];
    while stepper.t < t_end {
        stepper.step_toward(t_end)?;
        ts.push(stepper.t);
        ys.push([stepper.y[0], stepper.y[1], stepper.y[2], stepper.y[3]]);
        fs.push([stepper.f[0], stepper.f[1], stepper.f[2], stepper.f[3]]);
    }
    let node_norms = ys
        .iter()
        .map(|y| y.iter().map(|z| z.norm_sqr()).sum())
        .collect();
    Ok(NoJumpSolution {
        ts,
        ys,
        fs,
        node_norms,
    })
}

impl NoJumpSolution {
    pub fn t_start(&self) -> f64 {
        self.ts[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.ts.last().unwrap()
    }

    fn check_span(&self, t: f64) -> Result<(), OdeError> {
        if t < self.t_start() || t > self.t_end() {
            return Err(OdeError::OutOfSpan {
                t,
                start: self.t_start(),
                end: self.t_end(),
            });
        }
        Ok(())
    }

    /// Index of the step segment [ts[i], ts[i+1]] containing `t`.
    fn segment(&self, t: f64) -> usize {
        self.ts
            .partition_point(|&x| x <= t)
            .clamp(1, self.ts.len() - 1)
            - 1
    }

    fn eval(&self, t: f64) -> [C64; 4] {
        let i = self.segment(t);
        let h = self.ts[i + 1] - self.ts[i];
        let th = (t - self.ts[i]) / h;
        let h00 = (1.0 + 2.0 * th) * (1.0 - th) * (1.0 - th);
        let h10 = th * (1.0 - th) * (1.0 - th);
        let h01 = th * th * (3.0 - 2.0 * th);
        let h11 = th * th * (th - 1.0);
        std::array::from_fn(|k| {
            h00 * self.ys[i][k]
                + (h10 * h) * self.fs[i][k]
                + h01 * self.ys[i + 1][k]
                + (h11 * h) * self.fs[i + 1][k]
        })
    }

    pub fn state_at(&self, t: f64) -> Result<AmplitudeState, OdeError> {
        self.check_span(t)?;
        Ok(AmplitudeState::from_amplitudes(t, self.eval(t)))
    }

    /// Squared norm <psi|psi>(t) of the no-jump state from dense output.
    pub fn norm_squared_at(&self, t: f64) -> Result<f64, OdeError> {
        self.check_span(t)?;
        Ok(self.eval(t).iter().map(|z| z.norm_sqr()).sum())
    }

    /// Largest time index such that the node norm is still >= `target`;
    /// used to bracket the jump-time inversion.
    pub(crate) fn bracket_norm(&self, target: f64) -> usize {
        self.node_norms
            .partition_point(|&n| n >= target)
            .clamp(1, self.ts.len() - 1)
            - 1
    }

    pub(crate) fn node_time(&self, i: usize) -> f64 {
        self.ts[i]
    }
}
