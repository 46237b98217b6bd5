//! Closed-form no-jump amplitudes, in the general-parameter form and in the
//! equal-parameter specialization.
//!
//! All exponentials are evaluated with combined exponents
//! exp[(-(K+Gamma)/4 - i Delta/2 +/- Omega/2) t], never as separate
//! sinh(Omega t/2) * exp(-r t) factors, so nothing overflows at large t even
//! when Re(Omega) t is huge. Degenerate denominators (equal or near-equal
//! subsystems) are handled by a series expansion inside the exponential
//! difference quotient `exp_diff`.

use crate::model::{AmplitudeState, CascadeParams, SubsystemParams};
use num_complex::Complex64 as C64;

/// The complex rates entering the closed-form solutions: Omega for each
/// subsystem plus the parameter asymmetries Upsilon = (K_a - K_b + Gamma_a -
/// Gamma_b)/4 and Lambda = (Delta_a - Delta_b)/2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OmegaValues {
    pub omega_a: C64,
    pub omega_b: C64,
    pub upsilon: f64,
    pub lambda: f64,
}

/// Radicand of Omega: K^2/4 - 4 g^2 - i K (Delta - i Gamma/2) - (Delta - i Gamma/2)^2.
pub fn omega_radicand(p: &SubsystemParams) -> C64 {
    let k = p.big_k();
    let d = C64::new(p.delta(), -p.gamma() / 2.0);
    C64::new(k * k / 4.0 - 4.0 * p.g() * p.g(), 0.0) - C64::i() * k * d - d * d
}

/// Principal square root of the radicand. Every downstream quantity is
/// invariant under Omega -> -Omega, so the branch choice is free.
pub fn omega(p: &SubsystemParams) -> C64 {
    omega_radicand(p).sqrt()
}

pub fn omega_values(p: &CascadeParams) -> OmegaValues {
    OmegaValues {
        omega_a: omega(p.a()),
        omega_b: omega(p.b()),
        upsilon: (p.a().big_k() - p.b().big_k() + p.a().gamma() - p.b().gamma()) / 4.0,
        lambda: (p.a().delta() - p.b().delta()) / 2.0,
    }
}

/// (e^z - 1)/z, with the Taylor series inside |z| <= 0.25 where the direct
/// form loses precision to cancellation.
fn phi1(z: C64) -> C64 {
    if z.norm() <= 0.25 {
        let mut sum = C64::new(1.0, 0.0);
        let mut term = C64::new(1.0, 0.0);
        for n in 2..=18 {
            term = term * z / n as f64;
            sum += term;
        }
        sum
    } else {
        (z.exp() - 1.0) / z
    }
}

/// (e^{l1 t} - e^{l2 t}) / (l1 - l2).
///
/// Factoring out the exponential with the larger real part keeps the phi1
/// argument in the left half plane, so the result never overflows when both
/// rates are decaying; the confluent limit l1 -> l2 is t e^{l t} exactly.
fn exp_diff(l1: C64, l2: C64, t: f64) -> C64 {
    let (lead, trail) = if (l1 * t).re >= (l2 * t).re {
        (l1, l2)
    } else {
        (l2, l1)
    };
    (lead * t).exp() * t * phi1((trail - lead) * t)
}

/// No-jump eigenrates of one subsystem: lambda_+/- = -(K+Gamma)/4 - i Delta/2 +/- Omega/2.
fn eigenpair(p: &SubsystemParams, omega: C64) -> (C64, C64) {
    let r = C64::new((p.big_k() + p.gamma()) / 4.0, p.delta() / 2.0);
    (-r + omega / 2.0, -r - omega / 2.0)
}

/// Within this distance of Omega = 0 (critical damping of one subsystem)
/// the 1/(Omega_a Omega_b) prefactor amplifies cancellation noise in the
/// driven amplitudes beyond usefulness; gamma and delta are integrated
/// numerically instead.
fn near_critical(p: &SubsystemParams, omega: C64) -> bool {
    let scale = 1.0f64.max(p.big_k() + p.gamma() + p.delta().abs() + 4.0 * p.g());
    omega.norm() < 1e-3 * scale
}

fn integrator_fallback(p: &CascadeParams, t: f64) -> Option<AmplitudeState> {
    use crate::ode::{integrate, IntegratorConfig};
    let cfg = IntegratorConfig {
        rel_tol: 1e-12,
        abs_tol: 1e-14,
        ..IntegratorConfig::default()
    };
    integrate(p, &[t], &AmplitudeState::initial(), &cfg)
        .ok()
        .map(|mut states| states.pop().expect("one grid point"))
}

fn atom_coefficient(p: &SubsystemParams) -> C64 {
    // K/2 - i (Delta - i Gamma/2)
    C64::new(p.big_k() / 2.0, 0.0) - C64::i() * C64::new(p.delta(), -p.gamma() / 2.0)
}

/// General-parameter closed-form amplitudes at time `t >= 0` for the
/// canonical initial state (atom A excited).
pub fn amplitudes_general(p: &CascadeParams, t: f64) -> AmplitudeState {
    let ov = omega_values(p);
    amplitudes_from_omegas(p, ov.omega_a, ov.omega_b, t)
}

/// Same as [`amplitudes_general`] but with explicit Omega branch choices;
/// used to verify branch invariance.
pub(crate) fn amplitudes_from_omegas(
    p: &CascadeParams,
    omega_a: C64,
    omega_b: C64,
    t: f64,
) -> AmplitudeState {
    assert!(t >= 0.0, "amplitudes are defined for t >= 0");
    let a = p.a();
    let b = p.b();
    let (lap, lam) = eigenpair(a, omega_a);
    let ed_a = exp_diff(lap, lam, t);
    let half_sum = ((lap * t).exp() + (lam * t).exp()) / 2.0;
    let alpha = half_sum + atom_coefficient(a) / 2.0 * ed_a;
    let beta = -C64::i() * a.g() * ed_a;

    let drive = a.g() * (a.kappa() * b.kappa()).sqrt();
    let (gamma, delta) = if drive == 0.0 {
        (C64::new(0.0, 0.0), C64::new(0.0, 0.0))
    } else if near_critical(a, omega_a) || near_critical(b, omega_b) {
        match integrator_fallback(p, t) {
            Some(s) => return s,
            None => cascade_terms(p, omega_a, omega_b, t, lap, lam),
        }
    } else {
        cascade_terms(p, omega_a, omega_b, t, lap, lam)
    };
    AmplitudeState {
        t,
        alpha,
        beta,
        gamma,
        delta,
    }
}

/// gamma and delta for a driven subsystem B, away from critical damping.
fn cascade_terms(
    p: &CascadeParams,
    omega_a: C64,
    omega_b: C64,
    t: f64,
    lap: C64,
    lam: C64,
) -> (C64, C64) {
    let a = p.a();
    let b = p.b();
    let drive = a.g() * (a.kappa() * b.kappa()).sqrt();
    let (lbp, lbm) = eigenpair(b, omega_b);
    let pref = drive * C64::from_polar(1.0, p.phi()) / (omega_a * omega_b);
    let epp = exp_diff(lap, lbp, t);
    let emp = exp_diff(lam, lbp, t);
    let epm = exp_diff(lap, lbm, t);
    let emm = exp_diff(lam, lbm, t);
    let gamma = b.g() * pref * (epp - emp - epm + emm);
    // (K_b - Gamma_b)/4 - i Delta_b/2
    let w = C64::new((b.big_k() - b.gamma()) / 4.0, -b.delta() / 2.0);
    let delta =
        C64::i() * pref * ((omega_b / 2.0 - w) * (epp - emp) + (omega_b / 2.0 + w) * (epm - emm));
    (gamma, delta)
}

/// Equal-parameter closed-form amplitudes: alpha and beta as in the general
/// case, gamma and delta from the dedicated equal-parameter expressions. The
/// caller asserts that both subsystems share the parameters `p`.
pub fn amplitudes_equal(p: &SubsystemParams, phi: f64, t: f64) -> AmplitudeState {
    assert!(t >= 0.0, "amplitudes are defined for t >= 0");
    let om = omega(p);
    let (lp, lm) = eigenpair(p, om);
    let ep = (lp * t).exp();
    let em = (lm * t).exp();
    let cosh_part = (ep + em) / 2.0;
    let sinh_part = (ep - em) / 2.0;
    let ed = exp_diff(lp, lm, t);
    let alpha = cosh_part + atom_coefficient(p) / 2.0 * ed;
    let beta = -C64::i() * p.g() * ed;

    let (gamma, delta) = if p.kappa() * p.g() == 0.0 {
        (C64::new(0.0, 0.0), C64::new(0.0, 0.0))
    } else if near_critical(p, om) {
        // the 1/Omega^3 prefactor is hopeless this close to critical damping
        if let Some(s) = CascadeParams::equal(*p, phi)
            .ok()
            .and_then(|cascade| integrator_fallback(&cascade, t))
        {
            return s;
        }
        equal_cascade_terms(p, phi, t, om, cosh_part, sinh_part)
    } else {
        equal_cascade_terms(p, phi, t, om, cosh_part, sinh_part)
    };
    AmplitudeState {
        t,
        alpha,
        beta,
        gamma,
        delta,
    }
}

fn equal_cascade_terms(
    p: &SubsystemParams,
    phi: f64,
    t: f64,
    om: C64,
    cosh_part: C64,
    sinh_part: C64,
) -> (C64, C64) {
    let om3 = om * om * om;
    let eip = C64::from_polar(1.0, phi);
    let bracket = om * t * cosh_part - 2.0 * sinh_part;
    let gamma = 2.0 * p.kappa() * p.g() * p.g() * eip / om3 * bracket;
    let w2 = C64::new((p.big_k() - p.gamma()) / 2.0, -p.delta());
    let delta =
        C64::i() * p.kappa() * p.g() * eip / om3 * (-w2 * bracket + om * om * t * sinh_part);
    (gamma, delta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SubsystemParams;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fig_subsystem() -> SubsystemParams {
        SubsystemParams::new(5.0, 0.9, 0.1, 0.2, 0.1).unwrap()
    }

    fn fig_params() -> CascadeParams {
        CascadeParams::equal(fig_subsystem(), 0.0).unwrap()
    }

    fn random_subsystem(rng: &mut impl Rng) -> SubsystemParams {
        SubsystemParams::new(
            rng.gen_range(0.0..10.0),
            rng.gen_range(0.0..10.0),
            rng.gen_range(0.0..10.0),
            rng.gen_range(0.0..10.0),
            rng.gen_range(-10.0..10.0),
        )
        .unwrap()
    }

    fn random_params(rng: &mut impl Rng) -> CascadeParams {
        let a = random_subsystem(rng);
        let b = random_subsystem(rng);
        CascadeParams::new(a, b, rng.gen_range(-10.0..10.0)).unwrap()
    }

    fn max_amp_diff(x: &AmplitudeState, y: &AmplitudeState) -> f64 {
        x.amplitudes()
            .iter()
            .zip(y.amplitudes())
            .map(|(u, v)| (u - v).norm())
            .fold(0.0, f64::max)
    }

    #[test]
    fn omega_zero_coupling_cases() {
        let p = SubsystemParams::new(0.0, 1.0, 0.0, 0.0, 0.0).unwrap();
        assert!((omega(&p) - C64::new(0.5, 0.0)).norm() < 1e-15);

        // g = 0 makes the radicand the perfect square (K/2 - i(Delta - i Gamma/2))^2
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let p = SubsystemParams::new(
                0.0,
                rng.gen_range(0.0..10.0),
                rng.gen_range(0.0..10.0),
                rng.gen_range(0.0..10.0),
                rng.gen_range(-10.0..10.0),
            )
            .unwrap();
            let root =
                C64::new(p.big_k() / 2.0, 0.0) - C64::i() * C64::new(p.delta(), -p.gamma() / 2.0);
            let om = omega(&p);
            let dev = (om - root).norm().min((om + root).norm());
            assert!(dev < 1e-12 * (1.0 + root.norm()));
        }
    }

    #[test]
    fn omega_figure_parameters_golden() {
        // Direct complex evaluation of the radicand for g=5, K=1, Gamma=0.2,
        // Delta=0.1 gives -99.85 - 0.08i; the principal root is below.
        let om = omega(&fig_subsystem());
        assert!((omega_radicand(&fig_subsystem()) - C64::new(-99.85, -0.08)).norm() < 1e-12);
        let golden = C64::new(4.003003058021228e-3, -9.992497987191864e0);
        assert!((om - golden).norm() < 1e-12);
    }

    #[test]
    fn omega_squared_matches_radicand() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let p = random_subsystem(&mut rng);
            let om = omega(&p);
            let rad = omega_radicand(&p);
            assert!((om * om - rad).norm() <= 1e-12 * (1.0 + rad.norm()));
        }
    }

    #[test]
    fn upsilon_and_lambda_are_the_eigenrate_asymmetries() {
        // lambda_a+ - lambda_b+ = (Omega_a - Omega_b)/2 - Upsilon - i Lambda,
        // which is exactly the denominator structure of the cross terms.
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..50 {
            let p = random_params(&mut rng);
            let ov = omega_values(&p);
            let (lap, _) = eigenpair(p.a(), ov.omega_a);
            let (lbp, _) = eigenpair(p.b(), ov.omega_b);
            let expect = (ov.omega_a - ov.omega_b) / 2.0 - C64::new(ov.upsilon, ov.lambda);
            assert!((lap - lbp - expect).norm() < 1e-12 * (1.0 + expect.norm()));
        }
    }

    #[test]
    fn initial_conditions() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let p = random_params(&mut rng);
            let s = amplitudes_general(&p, 0.0);
            assert!(max_amp_diff(&s, &AmplitudeState::initial()) < 1e-14);
            let e = amplitudes_equal(p.a(), p.phi(), 0.0);
            assert!(max_amp_diff(&e, &AmplitudeState::initial()) < 1e-14);
        }
    }

    #[test]
    fn decoupled_atom_decays_freely() {
        // g_a = 0: alpha(t) = exp(-(Gamma_a/2 + i Delta_a) t), everything else stays empty.
        let a = SubsystemParams::new(0.0, 0.9, 0.1, 0.7, -1.3).unwrap();
        let b = SubsystemParams::new(4.0, 2.0, 0.5, 0.3, 0.8).unwrap();
        let p = CascadeParams::new(a, b, 1.1).unwrap();
        for &t in &[0.1, 0.5, 1.0, 3.0, 10.0, 50.0] {
            let s = amplitudes_general(&p, t);
            let expect = (C64::new(-a.gamma() / 2.0, -a.delta()) * t).exp();
            assert!((s.alpha - expect).norm() < 1e-12);
            assert!(s.beta.norm() < 1e-15);
            assert!(s.gamma.norm() < 1e-15);
            assert!(s.delta.norm() < 1e-15);
        }
    }

    #[test]
    fn equal_kappa_zero_has_no_cascade() {
        let p = SubsystemParams::new(3.0, 0.0, 0.8, 0.2, 0.4).unwrap();
        for &t in &[0.3, 1.0, 5.0] {
            let s = amplitudes_equal(&p, 0.9, t);
            assert_eq!(s.gamma, C64::new(0.0, 0.0));
            assert_eq!(s.delta, C64::new(0.0, 0.0));
        }
    }

    #[test]
    fn figure_parameters_golden_amplitudes() {
        // Frozen from integrating the amplitude equations at tolerance 1e-13
        // with an independent integrator.
        let p = fig_params();
        let golden = [
            (
                0.5,
                [
                    C64::new(-6.6785540600985e-1, 1.097752372940508e-2),
                    C64::new(-1.381476055829528e-2, -5.166057897470243e-1),
                    C64::new(2.016787391836901e-1, -5.169063748287503e-3),
                    C64::new(8.847711838478639e-4, 1.082208437632161e-1),
                ],
            ),
            (
                1.0,
                [
                    C64::new(1.792196429184848e-1, -3.892265578007651e-4),
                    C64::new(3.627032920852872e-2, 7.107824193331196e-1),
                    C64::new(-1.574804023275802e-1, 7.427994706452473e-3),
                    C64::new(-1.44497243323036e-2, -3.136271525538606e-1),
                ],
            ),
            (
                2.0,
                [
                    C64::new(-4.717765819416514e-1, 5.142111060028993e-2),
                    C64::new(2.775679387963973e-2, 2.940245843948551e-1),
                    C64::new(3.883517594066025e-1, -4.050686395532971e-2),
                    C64::new(-3.048490664395269e-2, -2.797511276920594e-1),
                ],
            ),
            (
                5.0,
                [
                    C64::new(2.126322606278979e-1, -5.350654440495627e-2),
                    C64::new(1.049108998349385e-2, 3.210276764943072e-2),
                    C64::new(-4.845930658894251e-1, 1.235734680350512e-1),
                    C64::new(-1.381608308256412e-2, -5.408323925599898e-2),
                ],
            ),
        ];
        for (t, want) in golden {
            let s = amplitudes_general(&p, t);
            for (got, want) in s.amplitudes().iter().zip(want) {
                assert!((got - want).norm() < 1e-11, "t={t}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn equal_matches_general_at_figure_parameters() {
        let p = fig_params();
        let s = amplitudes_general(&p, 1.0);
        let e = amplitudes_equal(p.a(), p.phi(), 1.0);
        assert!(max_amp_diff(&s, &e) < 1e-9);
    }

    #[test]
    fn branch_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..100 {
            let p = random_params(&mut rng);
            let t = rng.gen_range(0.0..10.0);
            let oa = omega(p.a());
            let ob = omega(p.b());
            let base = amplitudes_from_omegas(&p, oa, ob, t);
            let scale = 1.0 + base.norm_sq().sqrt();
            for (fa, fb) in [(-1.0, 1.0), (1.0, -1.0), (-1.0, -1.0)] {
                let flipped = amplitudes_from_omegas(&p, fa * oa, fb * ob, t);
                assert!(
                    max_amp_diff(&base, &flipped) < 1e-10 * scale,
                    "branch flip changed amplitudes: {base:?} vs {flipped:?}"
                );
            }
        }
    }

    #[test]
    fn norm_is_non_increasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        for _ in 0..20 {
            let p = random_params(&mut rng);
            let mut prev = 1.0 + 1e-12;
            for k in 0..800 {
                let t = k as f64 * 0.025;
                let n = amplitudes_general(&p, t).norm_sq();
                assert!(n <= prev + 1e-9, "norm grew at t={t}: {n} > {prev}");
                prev = n;
            }
        }
    }

    #[test]
    fn norm_bounded_by_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for _ in 0..50 {
            let p = random_params(&mut rng);
            let t = rng.gen_range(0.0..50.0);
            assert!(amplitudes_general(&p, t).norm_sq() <= 1.0 + 1e-9);
        }
    }

    #[test]
    fn equal_parameter_limit_of_general_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..20 {
            let a = random_subsystem(&mut rng);
            let eps = 1e-6;
            let b = SubsystemParams::new(
                a.g() * (1.0 + eps),
                a.kappa() * (1.0 + eps),
                a.kappa_loss() * (1.0 + eps),
                a.gamma() * (1.0 + eps),
                a.delta() * (1.0 + eps),
            )
            .unwrap();
            let phi = rng.gen_range(0.0..std::f64::consts::TAU);
            let p = CascadeParams::new(a, b, phi).unwrap();
            let t = rng.gen_range(0.0..10.0);
            let general = amplitudes_general(&p, t);
            let equal = amplitudes_equal(&a, phi, t);
            assert!(max_amp_diff(&general, &equal) < 1e-4);
        }
    }

    #[test]
    fn phase_covariance() {
        // alpha and beta do not depend on phi; gamma and delta carry exactly
        // one overall factor e^{i phi}.
        let mut rng = ChaCha8Rng::seed_from_u64(69);
        for _ in 0..40 {
            let a = random_subsystem(&mut rng);
            let b = random_subsystem(&mut rng);
            let phi = rng.gen_range(0.0..std::f64::consts::TAU);
            let t = rng.gen_range(0.0..8.0);
            let p0 = CascadeParams::new(a, b, 0.0).unwrap();
            let pp = CascadeParams::new(a, b, phi).unwrap();
            let s0 = amplitudes_general(&p0, t);
            let sp = amplitudes_general(&pp, t);
            let rot = C64::from_polar(1.0, pp.phi());
            assert_eq!(s0.alpha, sp.alpha);
            assert_eq!(s0.beta, sp.beta);
            assert!((sp.gamma - rot * s0.gamma).norm() < 1e-12 * (1.0 + s0.gamma.norm()));
            assert!((sp.delta - rot * s0.delta).norm() < 1e-12 * (1.0 + s0.delta.norm()));

            let e0 = amplitudes_equal(&a, 0.0, t);
            let ep = amplitudes_equal(&a, phi, t);
            assert!(
                (ep.gamma - C64::from_polar(1.0, phi) * e0.gamma).norm()
                    < 1e-12 * (1.0 + e0.gamma.norm())
            );
            assert!(
                (ep.delta - C64::from_polar(1.0, phi) * e0.delta).norm()
                    < 1e-12 * (1.0 + e0.delta.norm())
            );
        }
    }

    #[test]
    fn critical_damping_stays_finite_and_accurate() {
        // g = K/4 at resonance makes Omega exactly zero; the closed form is
        // singular there and the driven amplitudes come from the integrator.
        let crit = SubsystemParams::new(0.25, 0.9, 0.1, 0.0, 0.0).unwrap();
        assert_eq!(omega(&crit), C64::new(0.0, 0.0));
        let p = CascadeParams::equal(crit, 0.4).unwrap();
        let cfg = crate::ode::IntegratorConfig::default();
        for &t in &[0.0, 0.5, 2.0, 10.0] {
            let s = amplitudes_general(&p, t);
            let e = amplitudes_equal(&crit, 0.4, t);
            for z in s.amplitudes().into_iter().chain(e.amplitudes()) {
                assert!(z.is_finite(), "non-finite amplitude at t={t}");
            }
            let grid = [t.max(1e-12)];
            let reference =
                crate::ode::integrate(&p, &grid, &AmplitudeState::initial(), &cfg).unwrap();
            assert!(max_amp_diff(&s, &reference[0]) < 1e-8);
            assert!(max_amp_diff(&e, &reference[0]) < 1e-8);
        }

        // just off criticality the closed form is used and must agree too
        let near = SubsystemParams::new(0.2505, 0.9, 0.1, 0.0, 0.0).unwrap();
        let p = CascadeParams::equal(near, 0.0).unwrap();
        let s = amplitudes_general(&p, 3.0);
        let reference =
            crate::ode::integrate(&p, &[3.0], &AmplitudeState::initial(), &cfg).unwrap();
        assert!(max_amp_diff(&s, &reference[0]) < 1e-8);
    }

    #[test]
    fn no_overflow_at_large_times() {
        // Weakly coupled, strongly damped: Re(Omega) t/2 alone would overflow
        // exp() near t ~ 1500; the combined-exponent form must stay finite.
        let a = SubsystemParams::new(1e-3, 9.0, 1.0, 1e-4, 0.0).unwrap();
        let p = CascadeParams::equal(a, 0.0).unwrap();
        for &t in &[100.0, 1000.0, 5000.0] {
            let s = amplitudes_general(&p, t);
            for z in s.amplitudes() {
                assert!(z.is_finite(), "non-finite amplitude at t={t}");
            }
            assert!(s.norm_sq() <= 1.0 + 1e-9);
            let e = amplitudes_equal(&a, 0.0, t);
            for z in e.amplitudes() {
                assert!(z.is_finite());
            }
        }
    }
}
