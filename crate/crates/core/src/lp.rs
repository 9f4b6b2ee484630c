//! Dense two-phase simplex over a generic ordered field.
//!
//! The same code runs in `f64` (with explicit tolerances) and in exact
//! `BigRational` arithmetic. Bland's rule is used throughout, so the method
//! terminates on degenerate problems. Infeasible problems yield a Farkas
//! certificate `z` with `A^T z >= 0` and `b^T z < 0` for the standard form
//! `A x = b, x >= 0`.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

pub type Rational = BigRational;

pub trait LpScalar:
    Clone
    + Debug
    + PartialOrd
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn zero() -> Self;
    fn one() -> Self;
    fn abs(&self) -> Self;
    fn from_f64(v: f64) -> Self;
    fn to_f64(&self) -> f64;
}

impl LpScalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn abs(&self) -> Self {
        f64::abs(*self)
    }
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(&self) -> f64 {
        *self
    }
}

impl LpScalar for BigRational {
    fn zero() -> Self {
        Zero::zero()
    }
    fn one() -> Self {
        One::one()
    }
    fn abs(&self) -> Self {
        Signed::abs(self)
    }
    /// Exact binary value of the float.
    fn from_f64(v: f64) -> Self {
        BigRational::from_float(v).expect("finite float")
    }
    fn to_f64(&self) -> f64 {
        num_traits::ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
}

/// Pivot and feasibility thresholds; both zero for exact arithmetic.
#[derive(Debug, Clone)]
pub struct Tolerances<T> {
    /// Entries with magnitude at or below this are treated as zero.
    pub pivot: T,
    /// Phase-1 optimum above this declares the problem infeasible.
    pub feasibility: T,
}

impl Tolerances<f64> {
    pub fn float(feasibility: f64) -> Self {
        Tolerances {
            pivot: 1e-11,
            feasibility,
        }
    }
}

impl Tolerances<BigRational> {
    pub fn exact() -> Self {
        Tolerances {
            pivot: Zero::zero(),
            feasibility: Zero::zero(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

/// `minimize c^T x` subject to rows `a_i^T x (<=|=|>=) b_i` and `x >= 0`.
#[derive(Debug, Clone)]
pub struct LinearProgram<T> {
    num_vars: usize,
    rows: Vec<(Vec<T>, Relation, T)>,
    objective: Vec<T>,
}

#[derive(Debug, Clone)]
pub enum LpOutcome<T> {
    Optimal {
        /// Values of the declared variables (slacks dropped).
        x: Vec<T>,
        objective: T,
    },
    Infeasible(FarkasCertificate<T>),
    Unbounded,
}

/// Multipliers, one per constraint row, proving infeasibility of the
/// standard form.
#[derive(Debug, Clone)]
pub struct FarkasCertificate<T> {
    pub multipliers: Vec<T>,
    /// `b^T z`, strictly negative for a valid certificate.
    pub bound: T,
}

impl<T: LpScalar> LinearProgram<T> {
    pub fn new(num_vars: usize) -> Self {
        LinearProgram {
            num_vars,
            rows: Vec::new(),
            objective: vec![T::zero(); num_vars],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn add_constraint(&mut self, coeffs: Vec<T>, relation: Relation, rhs: T) {
        assert_eq!(coeffs.len(), self.num_vars, "constraint width");
        self.rows.push((coeffs, relation, rhs));
    }

    pub fn set_objective(&mut self, coeffs: Vec<T>) {
        assert_eq!(coeffs.len(), self.num_vars, "objective width");
        self.objective = coeffs;
    }

    /// Largest violation of any constraint or sign bound at `x`.
    pub fn max_violation(&self, x: &[T]) -> f64 {
        assert_eq!(x.len(), self.num_vars, "point width");
        let mut worst = x.iter().map(|v| -v.to_f64()).fold(0.0, f64::max);
        for (coeffs, relation, rhs) in &self.rows {
            let lhs = coeffs
                .iter()
                .zip(x)
                .fold(T::zero(), |acc, (a, v)| acc + a.clone() * v.clone());
            let gap = (lhs - rhs.clone()).to_f64();
            let v = match relation {
                Relation::Le => gap,
                Relation::Ge => -gap,
                Relation::Eq => gap.abs(),
            };
            worst = worst.max(v);
        }
        worst
    }

    /// Maps every coefficient through `f` (e.g. float to exact rational).
    pub fn map<U: LpScalar>(&self, f: impl Fn(&T) -> U) -> LinearProgram<U> {
        LinearProgram {
            num_vars: self.num_vars,
            rows: self
                .rows
                .iter()
                .map(|(a, r, b)| (a.iter().map(&f).collect(), *r, f(b)))
                .collect(),
            objective: self.objective.iter().map(&f).collect(),
        }
    }

    /// Standard form `A x = b, x >= 0` with one slack column per inequality
    /// appended after the declared variables.
    pub fn standard_form(&self) -> (Vec<Vec<T>>, Vec<T>, Vec<T>) {
        let slacks = self.rows.iter().filter(|r| r.1 != Relation::Eq).count();
        let width = self.num_vars + slacks;
        let mut a = Vec::with_capacity(self.rows.len());
        let mut b = Vec::with_capacity(self.rows.len());
        let mut next_slack = self.num_vars;
        for (coeffs, relation, rhs) in &self.rows {
            let mut row = coeffs.clone();
            row.resize(width, T::zero());
            match relation {
                Relation::Le => {
                    row[next_slack] = T::one();
                    next_slack += 1;
                }
                Relation::Ge => {
                    row[next_slack] = -T::one();
                    next_slack += 1;
                }
                Relation::Eq => {}
            }
            a.push(row);
            b.push(rhs.clone());
        }
        let mut c = self.objective.clone();
        c.resize(width, T::zero());
        (a, b, c)
    }

    pub fn solve(&self, tol: &Tolerances<T>) -> LpOutcome<T> {
        let (a, b, c) = self.standard_form();
        match solve_standard(&a, &b, &c, tol) {
            LpOutcome::Optimal { mut x, objective } => {
                x.truncate(self.num_vars);
                LpOutcome::Optimal { x, objective }
            }
            other => other,
        }
    }

    /// Checks `z` against this program's standard form.
    pub fn verify_certificate(&self, cert: &FarkasCertificate<T>, tol: &T) -> bool {
        let (a, b, _) = self.standard_form();
        verify_farkas(&a, &b, &cert.multipliers, tol)
    }
}

/// `A^T z >= -tol` componentwise and `b^T z < -tol`.
pub fn verify_farkas<T: LpScalar>(a: &[Vec<T>], b: &[T], z: &[T], tol: &T) -> bool {
    if z.len() != a.len() || b.len() != a.len() {
        return false;
    }
    let width = a.first().map_or(0, Vec::len);
    let neg_tol = -tol.clone();
    for j in 0..width {
        let mut s = T::zero();
        for (row, zi) in a.iter().zip(z) {
            s = s + row[j].clone() * zi.clone();
        }
        if s < neg_tol {
            return false;
        }
    }
    let mut bz = T::zero();
    for (bi, zi) in b.iter().zip(z) {
        bz = bz + bi.clone() * zi.clone();
    }
    bz < neg_tol
}

struct Tableau<T> {
    // rows[i] = [A' | I_art | rhs]; the last row holds reduced costs with the
    // negated objective value in its rhs slot.
    rows: Vec<Vec<T>>,
    basis: Vec<usize>,
    width: usize,
}

impl<T: LpScalar> Tableau<T> {
    fn rhs(&self, i: usize) -> &T {
        &self.rows[i][self.width]
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let p = self.rows[row][col].clone();
        for v in self.rows[row].iter_mut() {
            *v = v.clone() / p.clone();
        }
        let pivot_row = self.rows[row].clone();
        for (i, r) in self.rows.iter_mut().enumerate() {
            if i == row {
                continue;
            }
            let factor = r[col].clone();
            if factor == T::zero() {
                continue;
            }
            for (v, pv) in r.iter_mut().zip(&pivot_row) {
                *v = v.clone() - factor.clone() * pv.clone();
            }
        }
        self.basis[row] = col;
    }

    /// Bland's rule on the columns `eligible`; returns false if unbounded.
    fn optimize(&mut self, eligible: &[bool], tol: &Tolerances<T>) -> bool {
        let m = self.basis.len();
        let neg_eps = -tol.pivot.clone();
        loop {
            let obj = &self.rows[m];
            let Some(col) = (0..self.width).find(|&j| eligible[j] && obj[j] < neg_eps) else {
                return true;
            };
            let mut leave: Option<(usize, T)> = None;
            for i in 0..m {
                let aij = &self.rows[i][col];
                if *aij > tol.pivot {
                    let ratio = self.rhs(i).clone() / aij.clone();
                    let better = match &leave {
                        None => true,
                        Some((k, best)) => {
                            ratio < *best || (ratio == *best && self.basis[i] < self.basis[*k])
                        }
                    };
                    if better {
                        leave = Some((i, ratio));
                    }
                }
            }
            match leave {
                Some((row, _)) => self.pivot(row, col),
                None => return false,
            }
        }
    }
}

/// Two-phase simplex on `A x = b, x >= 0, minimize c^T x`.
pub fn solve_standard<T: LpScalar>(
    a: &[Vec<T>],
    b: &[T],
    c: &[T],
    tol: &Tolerances<T>,
) -> LpOutcome<T> {
    let m = a.len();
    let n = c.len();
    let width = n + m;
    let signs: Vec<bool> = b.iter().map(|bi| *bi < T::zero()).collect();

    let mut rows: Vec<Vec<T>> = Vec::with_capacity(m + 1);
    for i in 0..m {
        let mut row = Vec::with_capacity(width + 1);
        let flip = |v: &T| if signs[i] { -v.clone() } else { v.clone() };
        row.extend(a[i].iter().map(flip));
        row.extend((0..m).map(|k| if k == i { T::one() } else { T::zero() }));
        row.push(flip(&b[i]));
        rows.push(row);
    }
    // Phase-1 costs: 1 on artificials, reduced by the artificial basis.
    let mut obj = vec![T::zero(); width + 1];
    for k in n..width {
        obj[k] = T::one();
    }
    for row in &rows {
        for (o, v) in obj.iter_mut().zip(row) {
            *o = o.clone() - v.clone();
        }
    }
    for o in obj[n..width].iter_mut() {
        *o = T::zero();
    }
    rows.push(obj);
    let mut t = Tableau {
        rows,
        basis: (n..width).collect(),
        width,
    };

    let all = vec![true; width];
    t.optimize(&all, tol);
    let infeasibility = -t.rows[m][width].clone();
    if infeasibility > tol.feasibility {
        // y_i = 1 - (reduced cost of artificial i); certificate z = -S y.
        let multipliers = (0..m)
            .map(|i| {
                let y = T::one() - t.rows[m][n + i].clone();
                if signs[i] {
                    y
                } else {
                    -y
                }
            })
            .collect::<Vec<_>>();
        let bound = b
            .iter()
            .zip(&multipliers)
            .fold(T::zero(), |acc, (bi, zi)| acc + bi.clone() * zi.clone());
        return LpOutcome::Infeasible(FarkasCertificate { multipliers, bound });
    }

    // Drive zero-level artificials out of the basis; rows where that is
    // impossible are redundant and get cleared.
    for i in 0..m {
        if t.basis[i] < n {
            continue;
        }
        let pivot_col = (0..n).find(|&j| t.rows[i][j].abs() > tol.pivot);
        match pivot_col {
            Some(j) => t.pivot(i, j),
            None => {
                for v in t.rows[i].iter_mut() {
                    *v = T::zero();
                }
            }
        }
    }

    // Phase-2 reduced costs.
    let mut obj = vec![T::zero(); width + 1];
    obj[..n].clone_from_slice(c);
    for i in 0..m {
        let j = t.basis[i];
        if j < n && c[j] != T::zero() {
            let cb = c[j].clone();
            for (o, v) in obj.iter_mut().zip(&t.rows[i]) {
                *o = o.clone() - cb.clone() * v.clone();
            }
        }
    }
    t.rows[m] = obj;
    let eligible: Vec<bool> = (0..width).map(|j| j < n).collect();
    if !t.optimize(&eligible, tol) {
        return LpOutcome::Unbounded;
    }
    let mut x = vec![T::zero(); n];
    for i in 0..m {
        if t.basis[i] < n {
            x[t.basis[i]] = t.rhs(i).clone();
        }
    }
    let objective = x
        .iter()
        .zip(c)
        .fold(T::zero(), |acc, (xi, ci)| acc + xi.clone() * ci.clone());
    LpOutcome::Optimal { x, objective }
}
