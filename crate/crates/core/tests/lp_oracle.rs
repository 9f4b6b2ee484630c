//! Noncontextual-model verdicts against a brute-force rational oracle that
//! enumerates basic solutions of the constraint system.

use num_bigint::BigInt;
use num_rational::BigRational as Q;
use num_traits::{One, Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wpd_core::ontic::{
    nc_model_feasibility, nc_model_feasibility_on, noisy_orbit, verify_certificate, verify_model,
    OnticSpace,
};
use wpd_core::orbit::OrbitQuadruple;

fn q(v: f64) -> Q {
    Q::from_float(v).unwrap()
}

/// Equality system `A mu = b` over the four deterministic assignments, one
/// block of four variables per state.
fn constraint_system(quad: &OrbitQuadruple) -> (Vec<Vec<Q>>, Vec<Q>) {
    let values = [(1, 1), (1, -1), (-1, 1), (-1, -1)];
    let exps = quad.expectations().unwrap();
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for (k, &(ek, fk)) in exps.iter().enumerate() {
        let row = |f: &dyn Fn((i64, i64)) -> i64| {
            let mut r = vec![Q::zero(); 16];
            for (l, &v) in values.iter().enumerate() {
                r[4 * k + l] = Q::from_integer(BigInt::from(f(v)));
            }
            r
        };
        a.push(row(&|_| 1));
        b.push(Q::one());
        a.push(row(&|v| v.0));
        b.push(q(ek));
        a.push(row(&|v| v.1));
        b.push(q(fk));
    }
    for l in 0..4 {
        let mut r = vec![Q::zero(); 16];
        r[l] = Q::one();
        r[8 + l] = Q::one();
        r[4 + l] = -Q::one();
        r[12 + l] = -Q::one();
        a.push(r);
        b.push(Q::zero());
    }
    (a, b)
}

/// Row-reduces `[A | b]`; returns the nonzero rows or `None` when the system
/// is inconsistent.
fn reduce(a: &[Vec<Q>], b: &[Q]) -> Option<Vec<Vec<Q>>> {
    let n = a[0].len();
    let mut m: Vec<Vec<Q>> = a
        .iter()
        .zip(b)
        .map(|(row, rhs)| row.iter().cloned().chain([rhs.clone()]).collect())
        .collect();
    let mut rank = 0;
    for col in 0..n {
        let Some(p) = (rank..m.len()).find(|&i| !m[i][col].is_zero()) else {
            continue;
        };
        m.swap(rank, p);
        let piv = m[rank][col].clone();
        for v in m[rank].iter_mut() {
            *v = &*v / &piv;
        }
        for i in 0..m.len() {
            if i != rank && !m[i][col].is_zero() {
                let f = m[i][col].clone();
                for j in 0..=n {
                    let d = &f * &m[rank][j];
                    m[i][j] = &m[i][j] - d;
                }
            }
        }
        rank += 1;
    }
    if m[rank..].iter().any(|row| !row[n].is_zero()) {
        return None;
    }
    m.truncate(rank);
    Some(m)
}

/// Solves the square system on columns `cols`; `None` when singular.
fn solve_on(rows: &[Vec<Q>], cols: &[usize]) -> Option<Vec<Q>> {
    let r = rows.len();
    let n = rows[0].len() - 1;
    let mut m: Vec<Vec<Q>> = rows
        .iter()
        .map(|row| {
            cols.iter()
                .map(|&c| row[c].clone())
                .chain([row[n].clone()])
                .collect()
        })
        .collect();
    for col in 0..r {
        let p = (col..r).find(|&i| !m[i][col].is_zero())?;
        m.swap(col, p);
        let piv = m[col][col].clone();
        for v in m[col].iter_mut() {
            *v = &*v / &piv;
        }
        for i in 0..r {
            if i != col && !m[i][col].is_zero() {
                let f = m[i][col].clone();
                for j in 0..=r {
                    let d = &f * &m[col][j];
                    m[i][j] = &m[i][j] - d;
                }
            }
        }
    }
    Some(m.into_iter().map(|row| row[r].clone()).collect())
}

fn next_combination(c: &mut [usize], n: usize) -> bool {
    let k = c.len();
    for i in (0..k).rev() {
        if c[i] < n - k + i {
            c[i] += 1;
            for j in i + 1..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// A nonempty polyhedron `{A x = b, x >= 0}` has a basic feasible solution,
/// so trying every column basis decides feasibility.
fn oracle_feasible(quad: &OrbitQuadruple) -> bool {
    let (a, b) = constraint_system(quad);
    let Some(rows) = reduce(&a, &b) else {
        return false;
    };
    let n = a[0].len();
    let mut cols: Vec<usize> = (0..rows.len()).collect();
    loop {
        if let Some(x) = solve_on(&rows, &cols) {
            if x.iter().all(|v| !v.is_negative()) {
                return true;
            }
        }
        if !next_combination(&mut cols, n) {
            return false;
        }
    }
}

#[test]
fn oracle_sanity() {
    assert!(oracle_feasible(&noisy_orbit(1.0, 0.0).unwrap()));
    assert!(oracle_feasible(&noisy_orbit(0.5, 0.0).unwrap()));
    assert!(!oracle_feasible(&noisy_orbit(0.75, 0.0).unwrap()));
    assert!(oracle_feasible(&noisy_orbit(0.75, 0.3).unwrap()));
}

#[test]
fn verdicts_match_the_rational_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut cases: Vec<(f64, f64)> =
        vec![(0.0, 0.0), (0.5, 0.0), (1.0, 0.0), (0.75, 0.0), (0.75, 0.3)];
    cases.extend((0..30).map(|_| (rng.random::<f64>(), rng.random::<f64>() * 0.5)));
    for (r, p) in cases {
        let quad = noisy_orbit(r, p).unwrap();
        let result = nc_model_feasibility(&quad, 1e-9).unwrap();
        assert_eq!(result.is_feasible(), oracle_feasible(&quad), "r={r} p={p}");
        match result.model() {
            Some(model) => assert!(verify_model(model, &quad, 1e-9)),
            None => {
                let cert = result.certificate().unwrap();
                assert!(cert.bound < 0.0);
                assert!(
                    verify_certificate(cert, &quad, &OnticSpace::deterministic(), 1e-9).unwrap()
                );
            }
        }
    }
}

#[test]
fn enlarged_ontic_spaces_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut cases: Vec<(f64, f64)> = vec![(0.5, 0.0), (1.0, 0.0), (0.75, 0.26), (0.75, 0.28)];
    cases.extend((0..40).map(|_| (rng.random::<f64>(), rng.random::<f64>() * 0.6)));
    for (r, p) in cases {
        let quad = noisy_orbit(r, p).unwrap();
        let base = nc_model_feasibility_on(&quad, &OnticSpace::deterministic(), 1e-9).unwrap();
        for space in [OnticSpace::with_coin_flips(), OnticSpace::grid16()] {
            let other = nc_model_feasibility_on(&quad, &space, 1e-9).unwrap();
            assert_eq!(
                base.is_feasible(),
                other.is_feasible(),
                "r={r} p={p} |L|={}",
                space.len()
            );
            if let Some(model) = other.model() {
                assert!(verify_model(model, &quad, 1e-9));
            }
        }
    }
}
