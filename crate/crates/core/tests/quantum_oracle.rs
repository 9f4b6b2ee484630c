//! Cross-checks of the real-vector description against 2x2 density matrices.

use std::f64::consts::PI;

use num_complex::Complex64 as C;
use proptest::prelude::*;
use wpd_core::gpt::BinaryMeasurement;
use wpd_core::interferometer::{
    orbit_preparations, prepare, which_phase, which_way, NoiseModel, PrepSettings,
};

type Mat = [[C; 2]; 2];

/// Amplitudes in the ordered basis (|L>, |R>).
fn amplitudes(r: f64, phi: f64, swap: bool) -> [C; 2] {
    let l = C::from_polar((1.0 - r).sqrt(), phi);
    let rr = C::new(r.sqrt(), 0.0);
    if swap {
        [rr, l]
    } else {
        [l, rr]
    }
}

fn density(psi: [C; 2]) -> Mat {
    let mut rho = [[C::new(0.0, 0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            rho[i][j] = psi[i] * psi[j].conj();
        }
    }
    rho
}

fn trace_prod(a: &Mat, b: &Mat) -> f64 {
    let mut t = C::new(0.0, 0.0);
    for i in 0..2 {
        for j in 0..2 {
            t += a[i][j] * b[j][i];
        }
    }
    t.re
}

fn pauli() -> [Mat; 3] {
    let (o, one, i) = (C::new(0.0, 0.0), C::new(1.0, 0.0), C::new(0.0, 1.0));
    // In the (|L>, |R>) ordering the y axis of the state vectors is -sigma_y.
    [
        [[o, one], [one, o]],
        [[o, i], [-i, o]],
        [[one, o], [o, -one]],
    ]
}

fn bloch(rho: &Mat) -> [f64; 3] {
    pauli().map(|p| trace_prod(rho, &p))
}

/// Projector `(I + n.sigma) / 2` for a unit vector `n`.
fn projector(n: [f64; 3]) -> Mat {
    let p = pauli();
    let mut out = [[C::new(0.0, 0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            let id = if i == j { 0.5 } else { 0.0 };
            out[i][j] =
                C::new(id, 0.0) + (p[0][i][j] * n[0] + p[1][i][j] * n[1] + p[2][i][j] * n[2]) * 0.5;
        }
    }
    out
}

fn depolarize(rho: &Mat, p: f64) -> Mat {
    let mut out = *rho;
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = rho[i][j] * (1.0 - p)
                + if i == j {
                    C::new(p / 2.0, 0.0)
                } else {
                    C::new(0.0, 0.0)
                };
        }
    }
    out
}

#[test]
fn named_states_match_density_matrices() {
    let cases = [
        (0.0, 0.0, false),
        (1.0, 0.0, false),
        (0.5, 0.0, false),
        (0.5, PI / 2.0, false),
        (0.75, 0.0, false),
        (0.75, PI, true),
        (0.3, 1.1, true),
    ];
    for (r, phi, swap) in cases {
        let s = prepare(&PrepSettings::new(r, phi, swap).unwrap());
        let b = bloch(&density(amplitudes(r, phi, swap)));
        for k in 0..3 {
            assert!(
                (s.coords()[k + 1] - b[k]).abs() < 1e-12,
                "r={r} phi={phi} swap={swap}"
            );
        }
    }
}

#[test]
fn detector_probabilities_match_born_rule() {
    let rho = density(amplitudes(0.75, 0.0, false));
    let s = prepare(&PrepSettings::new(0.75, 0.0, false).unwrap());
    let p_left = s.probability(which_way().plus()).unwrap();
    assert!((p_left - trace_prod(&rho, &projector([0.0, 0.0, 1.0]))).abs() < 1e-12);
    assert!((p_left - 0.25).abs() < 1e-12);
    let p_port = s.probability(which_phase().plus()).unwrap();
    assert!((p_port - trace_prod(&rho, &projector([1.0, 0.0, 0.0]))).abs() < 1e-12);
    assert!((p_port - (1.0 + 3f64.sqrt() / 2.0) / 2.0).abs() < 1e-12);
}

#[test]
fn orbit_states_follow_the_sign_pattern() {
    let q = orbit_preparations(0.75).unwrap();
    let settings = [(0.0, false), (PI, false), (PI, true), (0.0, true)];
    let signs = [(-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0), (1.0, 1.0)];
    for ((s, (phi, swap)), (sz, sx)) in q.states.iter().zip(settings).zip(signs) {
        let b = bloch(&density(amplitudes(0.75, phi, swap)));
        assert!((s.coords()[3] - b[2]).abs() < 1e-12);
        assert!((s.coords()[1] - b[0]).abs() < 1e-12);
        assert!((b[2] - sz * 0.5).abs() < 1e-12);
        assert!((b[0] - sx * 3f64.sqrt() / 2.0).abs() < 1e-12);
    }
}

proptest! {
    #[test]
    fn prepared_states_agree_with_quantum_theory(
        r in 0.0f64..=1.0,
        phi in 0.0f64..(2.0 * PI),
        swap in any::<bool>(),
        p in 0.0f64..=1.0,
        theta in 0.0f64..PI,
        az in 0.0f64..(2.0 * PI),
    ) {
        let s = prepare(&PrepSettings::new(r, phi, swap).unwrap());
        let rho = density(amplitudes(r, phi, swap));
        let b = bloch(&rho);
        for k in 0..3 {
            prop_assert!((s.coords()[k + 1] - b[k]).abs() < 1e-12);
        }

        let noisy = NoiseModel::depolarizing(p).unwrap().apply_to_state(&s).unwrap();
        let rho_noisy = depolarize(&rho, p);
        let n = [theta.sin() * az.cos(), theta.sin() * az.sin(), theta.cos()];
        let m = BinaryMeasurement::along("n", &n).unwrap();
        let gpt = noisy.probability(m.plus()).unwrap();
        let born = trace_prod(&rho_noisy, &projector(n));
        prop_assert!((gpt - born).abs() < 1e-12);
        let minus = [-n[0], -n[1], -n[2]];
        prop_assert!((noisy.probability(m.minus()).unwrap() - trace_prod(&rho_noisy, &projector(minus))).abs() < 1e-12);
    }
}
