//! Quantum-jump Monte Carlo unraveling of the master equation.
//!
//! Each trajectory follows the deterministic no-jump evolution until a single
//! jump collapses it into |e>. The jump time is sampled exactly by inverting
//! the norm decay (draw u uniform, solve <psi|psi>(T) = u on the dense ODE
//! solution), so there is no time-step bias; the channel is then drawn from
//! the instantaneous jump rates at the collapse time.
//!
//! Trajectories are seeded by a counter construction from the base seed, so
//! results are bit-identical for any degree of parallelism.

use crate::model::{AmplitudeState, CascadeParams};
use crate::ode::{integrate_dense, IntegratorConfig, NoJumpSolution, OdeError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TrajectoryError {
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error("norm inversion did not converge after 200 bisection steps (u = {u})")]
    BisectionStall { u: f64 },
    #[error("horizon must be positive and finite")]
    InvalidHorizon,
    #[error("ensemble needs at least one trajectory")]
    EmptyEnsemble,
    #[error("population grid must be ascending and lie within [0, horizon]")]
    BadGrid,
}

/// The five jump channels, in the fixed order used everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum JumpChannel {
    /// J1: photon leaves through the joint cavity output.
    CavityOutput,
    /// J2: photon absorbed or scattered by the mirrors of cavity A.
    MirrorLossA,
    /// J3: photon absorbed or scattered by the mirrors of cavity B.
    MirrorLossB,
    /// J4: atom A decays into free space.
    AtomDecayA,
    /// J5: atom B decays into free space.
    AtomDecayB,
}

impl JumpChannel {
    pub const ALL: [JumpChannel; 5] = [
        JumpChannel::CavityOutput,
        JumpChannel::MirrorLossA,
        JumpChannel::MirrorLossB,
        JumpChannel::AtomDecayA,
        JumpChannel::AtomDecayB,
    ];

    /// Zero-based position in the fixed channel order.
    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&c| c == self).unwrap()
    }

    /// One-based channel number (1..=5).
    pub fn label(self) -> u8 {
        self.index() as u8 + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpEvent {
    pub time: f64,
    pub channel: JumpChannel,
}

/// Outcome of a single trajectory: at most one jump within the horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRecord {
    pub jump: Option<JumpEvent>,
    pub seed: u64,
}

/// Ensemble settings. `t_grid` is where the mean basis-state occupations are
/// reported; `histogram_bins` bins channel-1 jump times over [0, horizon].
#[derive(Debug, Clone)]
pub struct EnsembleConfig {
    pub horizon: f64,
    pub n_traj: usize,
    pub base_seed: u64,
    pub t_grid: Vec<f64>,
    pub histogram_bins: usize,
}

impl EnsembleConfig {
    pub fn new(horizon: f64, n_traj: usize, base_seed: u64) -> Self {
        let t_grid = (0..=200).map(|i| horizon * i as f64 / 200.0).collect();
        Self {
            horizon,
            n_traj,
            base_seed,
            t_grid,
            histogram_bins: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleSummary {
    pub n_traj: usize,
    /// Jump counts per channel, fixed order 1..=5.
    pub channel_counts: [u64; 5],
    pub no_jump_count: u64,
    /// Channel-1 jump-time counts over `histogram_bins` uniform bins spanning
    /// [0, horizon].
    pub click_histogram: Vec<u64>,
    pub horizon: f64,
    pub t_grid: Vec<f64>,
    /// Mean occupation of the five basis states at each grid time.
    pub population_series: Vec<[f64; 5]>,
}

impl EnsembleSummary {
    pub fn channel_fraction(&self, channel: JumpChannel) -> f64 {
        self.channel_counts[channel.index()] as f64 / self.n_traj as f64
    }
}

/// splitmix64; used to derive independent per-trajectory seeds from
/// (base_seed, trajectory index).
fn mix_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Solve <psi|psi>(T) = u by bisection on the dense solution. The node norms
/// bracket the root; the interior is monotone up to interpolation error.
fn invert_norm(sol: &NoJumpSolution, u: f64) -> Result<f64, TrajectoryError> {
    let seg = sol.bracket_norm(u);
    let mut lo = sol.node_time(seg);
    let mut hi = sol.node_time(seg + 1);
    let tol = 1e-13 * sol.t_end().max(1.0);
    for _ in 0..200 {
        let mid = (lo + hi) / 2.0;
        if sol.norm_squared_at(mid)? >= u {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= tol {
            return Ok((lo + hi) / 2.0);
        }
    }
    Err(TrajectoryError::BisectionStall { u })
}

fn sample_with_solution(
    sol: &NoJumpSolution,
    p: &CascadeParams,
    horizon: f64,
    seed: u64,
) -> Result<TrajectoryRecord, TrajectoryError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = loop {
        let u: f64 = rng.gen();
        if u > 0.0 {
            break u;
        }
    };
    if sol.norm_squared_at(horizon)? > u {
        return Ok(TrajectoryRecord { jump: None, seed });
    }
    let time = invert_norm(sol, u)?;
    let rates = p.jump_rates(&sol.state_at(time)?);
    let total: f64 = rates.iter().sum();
    let channel = if total > 0.0 {
        let mut v = rng.gen::<f64>() * total;
        let mut picked = JumpChannel::AtomDecayB;
        for ch in JumpChannel::ALL {
            v -= rates[ch.index()];
            if v <= 0.0 {
                picked = ch;
                break;
            }
        }
        picked
    } else {
        // all rates vanish at an isolated stationary point; attribute the
        // jump to the largest-rate channel (degenerate, measure zero)
        JumpChannel::ALL
            .into_iter()
            .max_by(|a, b| rates[a.index()].total_cmp(&rates[b.index()]))
            .unwrap()
    };
    Ok(TrajectoryRecord {
        jump: Some(JumpEvent { time, channel }),
        seed,
    })
}

/// Sample one trajectory over [0, horizon] from the canonical initial state.
pub fn sample_trajectory(
    p: &CascadeParams,
    horizon: f64,
    seed: u64,
) -> Result<TrajectoryRecord, TrajectoryError> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(TrajectoryError::InvalidHorizon);
    }
    let sol = integrate_dense(
        p,
        horizon,
        &AmplitudeState::initial(),
        &IntegratorConfig::default(),
    )?;
    sample_with_solution(&sol, p, horizon, seed)
}

/// Run `cfg.n_traj` trajectories and aggregate counts, the channel-1
/// click-time histogram, and the mean basis-state occupations.
pub fn run_ensemble(
    p: &CascadeParams,
    cfg: &EnsembleConfig,
) -> Result<EnsembleSummary, TrajectoryError> {
    if !(cfg.horizon > 0.0 && cfg.horizon.is_finite()) {
        return Err(TrajectoryError::InvalidHorizon);
    }
    if cfg.n_traj == 0 {
        return Err(TrajectoryError::EmptyEnsemble);
    }
    if cfg.t_grid.windows(2).any(|w| w[1] <= w[0])
        || cfg.t_grid.iter().any(|&t| t < 0.0 || t > cfg.horizon)
    {
        return Err(TrajectoryError::BadGrid);
    }
    let sol = integrate_dense(
        p,
        cfg.horizon,
        &AmplitudeState::initial(),
        &IntegratorConfig::default(),
    )?;

    let records: Vec<TrajectoryRecord> = (0..cfg.n_traj as u64)
        .into_par_iter()
        .map(|i| sample_with_solution(&sol, p, cfg.horizon, mix_seed(cfg.base_seed, i)))
        .collect::<Result<_, _>>()?;

    let mut channel_counts = [0u64; 5];
    let mut no_jump_count = 0u64;
    let mut click_histogram = vec![0u64; cfg.histogram_bins];
    let mut jump_times: Vec<f64> = Vec::with_capacity(records.len());
    for r in &records {
        match r.jump {
            None => no_jump_count += 1,
            Some(JumpEvent { time, channel }) => {
                channel_counts[channel.index()] += 1;
                jump_times.push(time);
                if channel == JumpChannel::CavityOutput {
                    let bin = ((time / cfg.horizon) * cfg.histogram_bins as f64) as usize;
                    click_histogram[bin.min(cfg.histogram_bins - 1)] += 1;
                }
            }
        }
    }
    jump_times.sort_by(f64::total_cmp);

    // All surviving trajectories share the same normalized no-jump state, so
    // the empirical mean occupation is (alive fraction) * |amp|^2 / norm^2
    // plus the jumped fraction sitting in |e>.
    let n = cfg.n_traj as f64;
    let population_series = cfg
        .t_grid
        .iter()
        .map(|&t| {
            let jumped = jump_times.partition_point(|&tj| tj <= t) as f64;
            let alive = (n - jumped) / n;
            let s = sol.state_at(t)?;
            let norm = s.norm_sq().max(f64::MIN_POSITIVE);
            Ok([
                alive * s.alpha.norm_sqr() / norm,
                alive * s.beta.norm_sqr() / norm,
                alive * s.gamma.norm_sqr() / norm,
                alive * s.delta.norm_sqr() / norm,
                jumped / n,
            ])
        })
        .collect::<Result<_, TrajectoryError>>()?;

    Ok(EnsembleSummary {
        n_traj: cfg.n_traj,
        channel_counts,
        no_jump_count,
        click_histogram,
        horizon: cfg.horizon,
        t_grid: cfg.t_grid.clone(),
        population_series,
    })
}
