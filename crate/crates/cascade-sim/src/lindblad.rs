//! Direct density-matrix evolution of the full master equation on the
//! five-state basis; the independent ground truth for the trajectory
//! ensemble and for the no-jump/collapsed mixture structure.

use crate::model::{
    basis, build_hamiltonian, build_jump_operators, AmplitudeState, CascadeParams, OperatorMatrix5,
    DIM,
};
use crate::ode::{Dopri5, IntegratorConfig, OdeError};
use num_complex::Complex64 as C64;

/// 5x5 density matrix over the fixed basis order (a, b, c, d, e).
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix5(pub OperatorMatrix5);

impl DensityMatrix5 {
    pub fn zeros() -> Self {
        Self(OperatorMatrix5::zeros())
    }

    /// Pure basis-state projector |k><k|.
    pub fn basis_state(k: usize) -> Self {
        let mut m = OperatorMatrix5::zeros();
        m[(k, k)] = C64::new(1.0, 0.0);
        Self(m)
    }

    /// The statistical mixture of the unnormalized no-jump state and the
    /// jump-absorbed weight in |e>: |psi><psi| + (1 - <psi|psi>) |e><e|.
    pub fn from_no_jump_state(s: &AmplitudeState) -> Self {
        let v = [s.alpha, s.beta, s.gamma, s.delta, C64::new(0.0, 0.0)];
        let mut m = OperatorMatrix5::zeros();
        for i in 0..DIM {
            for j in 0..DIM {
                m[(i, j)] = v[i] * v[j].conj();
            }
        }
        m[(basis::GROUND, basis::GROUND)] = C64::new(1.0 - s.norm_sq(), 0.0);
        Self(m)
    }

    pub fn trace(&self) -> C64 {
        (0..DIM).map(|i| self.0[(i, i)]).sum()
    }

    pub fn populations(&self) -> [f64; DIM] {
        std::array::from_fn(|i| self.0[(i, i)].re)
    }

    pub fn hermiticity_defect(&self) -> f64 {
        self.0.hermiticity_defect()
    }

    /// Smallest eigenvalue, from a Jacobi sweep on the real-symmetric
    /// embedding [[X, -Y], [Y, X]] of the Hermitian matrix X + iY.
    #[allow(clippy::needless_range_loop)]
    pub fn min_eigenvalue(&self) -> f64 {
        const N: usize = 2 * DIM;
        let mut s = [[0.0f64; N]; N];
        for i in 0..DIM {
            for j in 0..DIM {
                let z = self.0[(i, j)];
                s[i][j] = z.re;
                s[i + DIM][j + DIM] = z.re;
                s[i][j + DIM] = -z.im;
                s[i + DIM][j] = z.im;
            }
        }
        let scale = s
            .iter()
            .flatten()
            .fold(0.0f64, |m, x| m.max(x.abs()))
            .max(1e-300);
        for _sweep in 0..60 {
            let mut off = 0.0f64;
            for p in 0..N {
                for q in (p + 1)..N {
                    off = off.max(s[p][q].abs());
                }
            }
            if off < 1e-15 * scale {
                break;
            }
            for p in 0..N {
                for q in (p + 1)..N {
                    let spq = s[p][q];
                    if spq.abs() < 1e-18 * scale {
                        continue;
                    }
                    let tau = (s[q][q] - s[p][p]) / (2.0 * spq);
                    let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                    let cos = 1.0 / (1.0 + t * t).sqrt();
                    let sin = t * cos;
                    for r in 0..N {
                        let (srp, srq) = (s[r][p], s[r][q]);
                        s[r][p] = cos * srp - sin * srq;
                        s[r][q] = sin * srp + cos * srq;
                    }
                    for r in 0..N {
                        let (spr, sqr) = (s[p][r], s[q][r]);
                        s[p][r] = cos * spr - sin * sqr;
                        s[q][r] = sin * spr + cos * sqr;
                    }
                }
            }
        }
        (0..N).map(|i| s[i][i]).fold(f64::INFINITY, f64::min)
    }

    fn to_vec(&self) -> Vec<C64> {
        let mut v = Vec::with_capacity(DIM * DIM);
        for i in 0..DIM {
            for j in 0..DIM {
                v.push(self.0[(i, j)]);
            }
        }
        v
    }

    fn from_slice(v: &[C64]) -> Self {
        let mut m = OperatorMatrix5::zeros();
        for i in 0..DIM {
            for j in 0..DIM {
                m[(i, j)] = v[i * DIM + j];
            }
        }
        Self(m)
    }
}

/// Right-hand side of the master equation:
/// -i[H, rho] + sum_i (J_i rho J_i^dag - 1/2 {J_i^dag J_i, rho}).
pub fn lindblad_rhs(p: &CascadeParams, rho: &DensityMatrix5) -> DensityMatrix5 {
    let h = build_hamiltonian(p);
    let jumps = build_jump_operators(p);
    DensityMatrix5(apply_liouvillian(&h, &jumps, &rho.0))
}

fn apply_liouvillian(
    h: &OperatorMatrix5,
    jumps: &[OperatorMatrix5; 5],
    rho: &OperatorMatrix5,
) -> OperatorMatrix5 {
    let mut out = h.matmul(rho).sub(&rho.matmul(h)).scale(-C64::i());
    for j in jumps {
        let jd = j.adjoint();
        let jdj = jd.matmul(j);
        out = out.add(&j.matmul(rho).matmul(&jd));
        out = out.sub(&jdj.matmul(rho).scale(C64::new(0.5, 0.0)));
        out = out.sub(&rho.matmul(&jdj).scale(C64::new(0.5, 0.0)));
    }
    out
}

/// Evolve `rho0` (the state at `t_grid[0]`) through the master equation,
/// reporting the density matrix at each grid time. The state is
/// re-hermitized after every accepted step to suppress round-off drift.
pub fn evolve_master(
    p: &CascadeParams,
    t_grid: &[f64],
    rho0: &DensityMatrix5,
    cfg: &IntegratorConfig,
) -> Result<Vec<DensityMatrix5>, OdeError> {
    cfg.validate()?;
    if t_grid.is_empty() || t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(OdeError::BadGrid);
    }
    let h = build_hamiltonian(p);
    let jumps = build_jump_operators(p);
    let rhs = move |_t: f64, y: &[C64], dy: &mut [C64]| {
        let rho = DensityMatrix5::from_slice(y);
        let out = apply_liouvillian(&h, &jumps, &rho.0);
        for i in 0..DIM {
            for j in 0..DIM {
                dy[i * DIM + j] = out[(i, j)];
            }
        }
    };
    let hermitize = |y: &mut [C64]| {
        for i in 0..DIM {
            for j in (i + 1)..DIM {
                let avg = (y[i * DIM + j] + y[j * DIM + i].conj()) / 2.0;
                y[i * DIM + j] = avg;
                y[j * DIM + i] = avg.conj();
            }
            y[i * DIM + i] = C64::new(y[i * DIM + i].re, 0.0);
        }
    };
    let y0 = rho0.to_vec();
    let mut stepper = Dopri5::new(rhs, t_grid[0], &y0, cfg).with_post_accept(hermitize);
    let mut out = Vec::with_capacity(t_grid.len());
    for &target in t_grid {
        while stepper.t < target {
            stepper.step_toward(target)?;
        }
        out.push(DensityMatrix5::from_slice(&stepper.y));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic;
    use crate::model::SubsystemParams;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fig_params() -> CascadeParams {
        let s = SubsystemParams::new(5.0, 0.9, 0.1, 0.2, 0.1).unwrap();
        CascadeParams::equal(s, 0.0).unwrap()
    }

    fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
            .collect()
    }

    fn random_hermitian(rng: &mut impl Rng) -> DensityMatrix5 {
        let mut m = OperatorMatrix5::zeros();
        for i in 0..DIM {
            m[(i, i)] = C64::new(rng.gen_range(-1.0..1.0), 0.0);
            for j in (i + 1)..DIM {
                let z = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                m[(i, j)] = z;
                m[(j, i)] = z.conj();
            }
        }
        DensityMatrix5(m)
    }

    #[test]
    fn rhs_vanishes_on_the_dark_state() {
        let rho = DensityMatrix5::basis_state(basis::GROUND);
        let out = lindblad_rhs(&fig_params(), &rho);
        assert!(out.0.max_abs_diff(&OperatorMatrix5::zeros()) < 1e-15);
    }

    #[test]
    fn rhs_vanishes_without_couplings() {
        let z = SubsystemParams::new(0.0, 0.0, 0.0, 0.0, 0.0).unwrap();
        let p = CascadeParams::equal(z, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            let rho = random_hermitian(&mut rng);
            assert!(
                lindblad_rhs(&p, &rho)
                    .0
                    .max_abs_diff(&OperatorMatrix5::zeros())
                    < 1e-15
            );
        }
    }

    #[test]
    fn rhs_golden_for_initial_state() {
        // Frozen from a term-by-term matrix evaluation in a separate script:
        // only the atom-A decay and the coherent a<->b exchange act on |a><a|.
        let rho = DensityMatrix5::basis_state(basis::ATOM_A);
        let out = lindblad_rhs(&fig_params(), &rho);
        let mut expected = OperatorMatrix5::zeros();
        expected[(0, 0)] = C64::new(-0.2, 0.0);
        expected[(0, 1)] = C64::new(0.0, 5.0);
        expected[(1, 0)] = C64::new(0.0, -5.0);
        expected[(4, 4)] = C64::new(0.2, 0.0);
        assert!(out.0.max_abs_diff(&expected) < 1e-13);
    }

    #[test]
    fn rhs_is_hermitian_and_traceless() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let a = SubsystemParams::new(
                rng.gen_range(0.0..10.0),
                rng.gen_range(0.0..10.0),
                rng.gen_range(0.0..10.0),
                rng.gen_range(0.0..10.0),
                rng.gen_range(-10.0..10.0),
            )
            .unwrap();
            let p = CascadeParams::equal(a, rng.gen_range(0.0..6.0)).unwrap();
            let rho = random_hermitian(&mut rng);
            let out = lindblad_rhs(&p, &rho);
            assert!(out.hermiticity_defect() < 1e-12);
            assert!(out.trace().norm() < 1e-12);
        }
    }

    #[test]
    fn absorbing_state_is_stationary() {
        let rho0 = DensityMatrix5::basis_state(basis::GROUND);
        let grid = linspace(0.0, 5.0, 6);
        let out = evolve_master(&fig_params(), &grid, &rho0, &IntegratorConfig::default()).unwrap();
        for rho in out {
            assert!(rho.0.max_abs_diff(&rho0.0) < 1e-12);
        }
    }

    #[test]
    fn trace_preserved_on_figure_parameters() {
        let rho0 = DensityMatrix5::basis_state(basis::ATOM_A);
        let grid = linspace(0.0, 10.0, 101);
        let out = evolve_master(&fig_params(), &grid, &rho0, &IntegratorConfig::default()).unwrap();
        for rho in &out {
            assert!((rho.trace() - C64::new(1.0, 0.0)).norm() < 1e-9);
            assert!(rho.hermiticity_defect() < 1e-10);
            assert!(rho.min_eigenvalue() > -1e-8);
        }
    }

    #[test]
    fn populations_match_analytic_amplitudes() {
        let p = fig_params();
        let rho0 = DensityMatrix5::basis_state(basis::ATOM_A);
        let out = evolve_master(&p, &[0.0, 1.0], &rho0, &IntegratorConfig::default()).unwrap();
        let amp = analytic::amplitudes_general(&p, 1.0);
        let pops = out[1].populations();
        assert!((pops[basis::CAVITY_A] - amp.beta.norm_sqr()).abs() < 1e-8);
        // frozen |beta(1)|^2 from the independent oracle
        assert!((pops[basis::CAVITY_A] - 5.065271844139377e-1).abs() < 1e-8);
    }

    #[test]
    fn mixture_structure_from_pure_initial_state() {
        // rho(t) = |psi_no(t)><psi_no(t)| + eps^2 |e><e|: coherences between
        // |e> and the one-excitation sector must stay zero, and the whole
        // matrix must match the no-jump construction.
        let p = fig_params();
        let rho0 = DensityMatrix5::basis_state(basis::ATOM_A);
        let grid = linspace(0.0, 10.0, 21);
        let out = evolve_master(&p, &grid, &rho0, &IntegratorConfig::default()).unwrap();
        for (rho, &t) in out.iter().zip(&grid) {
            for k in 0..4 {
                assert!(rho.0[(basis::GROUND, k)].norm() < 1e-10);
                assert!(rho.0[(k, basis::GROUND)].norm() < 1e-10);
            }
            let amp = analytic::amplitudes_general(&p, t);
            let expected = DensityMatrix5::from_no_jump_state(&amp);
            assert!(rho.0.max_abs_diff(&expected.0) < 1e-8);
        }
    }

    #[test]
    fn min_eigenvalue_agrees_with_known_spectra() {
        let rho = DensityMatrix5::basis_state(basis::ATOM_A);
        assert!(rho.min_eigenvalue().abs() < 1e-12);
        let mut m = OperatorMatrix5::zeros();
        for i in 0..DIM {
            m[(i, i)] = C64::new(i as f64 - 2.0, 0.0);
        }
        assert!((DensityMatrix5(m).min_eigenvalue() + 2.0).abs() < 1e-12);
        // 2x2 block with known eigenvalues 3 and -1 embedded at (0,1)
        let mut m = OperatorMatrix5::zeros();
        m[(0, 0)] = C64::new(1.0, 0.0);
        m[(1, 1)] = C64::new(1.0, 0.0);
        m[(0, 1)] = C64::new(0.0, 2.0);
        m[(1, 0)] = C64::new(0.0, -2.0);
        assert!((DensityMatrix5(m).min_eigenvalue() + 1.0).abs() < 1e-12);
    }
}
