//! Dynamical maps on the torus: the map interface, exact example maps, and
//! orbit/cocycle helpers.
//!
//! Every example map has closed-form forward and inverse formulas and exact
//! Jacobians, so certification sweeps never pay for numerical inversion and
//! the structure tags (volume, symplectic) can be checked to rounding.

use crate::torus::TorusPoint;
use crate::{CoreError, Result};
use nalgebra::{DMatrix, DVector};
use std::f64::consts::TAU;

/// Which geometric structure a map is known to preserve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Preservation {
    None,
    Volume,
    Symplectic,
}

impl Preservation {
    /// Strongest tag implied by both; used when composing maps.
    pub fn meet(self, other: Preservation) -> Preservation {
        self.min(other)
    }
}

/// A diffeomorphism of T^d with exact differential access.
pub trait DynamicalMap: Send + Sync {
    fn dim(&self) -> usize;
    fn eval(&self, p: &TorusPoint) -> TorusPoint;
    fn eval_inverse(&self, p: &TorusPoint) -> Result<TorusPoint>;
    /// Jacobian of the forward map at `p`.
    fn differential(&self, p: &TorusPoint) -> DMatrix<f64>;
    /// Jacobian of the inverse map at `p`; defaults to inverting the forward
    /// Jacobian at the preimage.
    fn inverse_differential(&self, p: &TorusPoint) -> Result<DMatrix<f64>> {
        let q = self.eval_inverse(p)?;
        self.differential(&q)
            .try_inverse()
            .ok_or_else(|| CoreError::NotInvertible("singular forward differential".into()))
    }
    fn preservation(&self) -> Preservation;
    /// Upper bound on the operator norm of the second derivative, when one
    /// is known; linear maps return 0.
    fn curvature_bound(&self) -> Option<f64> {
        None
    }
    fn name(&self) -> String;
}

/// Standard symplectic matrix [[0, I], [-I, 0]] pairing q_i with p_i = x_{i+d/2}.
pub fn symplectic_form(d: usize) -> DMatrix<f64> {
    assert!(d % 2 == 0, "symplectic form needs even dimension");
    let half = d / 2;
    let mut j = DMatrix::zeros(d, d);
    for i in 0..half {
        j[(i, half + i)] = 1.0;
        j[(half + i, i)] = -1.0;
    }
    j
}

// ---------------------------------------------------------------------------
// integer linear algebra for unimodular matrices

pub(crate) fn int_det(m: &[Vec<i64>]) -> i64 {
    let n = m.len();
    if n == 1 {
        return m[0][0];
    }
    let mut det = 0i64;
    for (j, &mj) in m[0].iter().enumerate() {
        if mj == 0 {
            continue;
        }
        let minor: Vec<Vec<i64>> = m[1..]
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .filter(|&(c, _)| c != j)
                    .map(|(_, &v)| v)
                    .collect()
            })
            .collect();
        let sign = if j % 2 == 0 { 1 } else { -1 };
        det += sign * mj * int_det(&minor);
    }
    det
}

pub(crate) fn int_adjugate(m: &[Vec<i64>]) -> Vec<Vec<i64>> {
    let n = m.len();
    let mut adj = vec![vec![0i64; n]; n];
    for i in 0..n {
        for j in 0..n {
            let minor: Vec<Vec<i64>> = (0..n)
                .filter(|&r| r != i)
                .map(|r| (0..n).filter(|&c| c != j).map(|c| m[r][c]).collect())
                .collect();
            let sign = if (i + j) % 2 == 0 { 1 } else { -1 };
            // adjugate is the transposed cofactor matrix
            adj[j][i] = sign
                * if minor.is_empty() {
                    1
                } else {
                    int_det(&minor)
                };
        }
    }
    adj
}

fn to_f64_matrix(m: &[Vec<i64>]) -> DMatrix<f64> {
    let n = m.len();
    DMatrix::from_fn(n, n, |i, j| m[i][j] as f64)
}

/// Linear automorphism of T^d given by a unimodular integer matrix.
#[derive(Debug, Clone)]
pub struct TorusAutomorphism {
    matrix: DMatrix<f64>,
    inverse: DMatrix<f64>,
    preservation: Preservation,
    label: String,
}

impl TorusAutomorphism {
    pub fn from_rows(rows: &[Vec<i64>], label: &str) -> Result<TorusAutomorphism> {
        let n = rows.len();
        if n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(CoreError::parameter("automorphism matrix must be square"));
        }
        let det = int_det(rows);
        if det.abs() != 1 {
            return Err(CoreError::parameter(format!(
                "automorphism matrix must be unimodular, det = {det}"
            )));
        }
        // A^-1 = adj(A)/det; det = +-1 keeps entries integral (hence exact).
        let mut adj = int_adjugate(rows);
        if det == -1 {
            for row in adj.iter_mut() {
                for v in row.iter_mut() {
                    *v = -*v;
                }
            }
        }
        let matrix = to_f64_matrix(rows);
        let preservation = if n % 2 == 0 && is_symplectic_integer(rows) {
            Preservation::Symplectic
        } else {
            Preservation::Volume
        };
        Ok(TorusAutomorphism {
            matrix,
            inverse: to_f64_matrix(&adj),
            preservation,
            label: label.to_string(),
        })
    }

    /// Arnold cat map [[2,1],[1,1]].
    pub fn cat2() -> TorusAutomorphism {
        Self::from_rows(&[vec![2, 1], vec![1, 1]], "cat2").expect("cat matrix is unimodular")
    }

    pub fn identity(d: usize) -> TorusAutomorphism {
        let rows: Vec<Vec<i64>> = (0..d)
            .map(|i| (0..d).map(|j| i64::from(i == j)).collect())
            .collect();
        Self::from_rows(&rows, "identity").expect("identity is unimodular")
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn inverse_matrix(&self) -> &DMatrix<f64> {
        &self.inverse
    }
}

fn is_symplectic_integer(rows: &[Vec<i64>]) -> bool {
    let n = rows.len();
    let half = n / 2;
    let j_of = |r: usize, c: usize| -> i64 {
        if c == r + half {
            1
        } else if r == c + half {
            -1
        } else {
            0
        }
    };
    // check A^T J A == J in integer arithmetic
    for r in 0..n {
        for c in 0..n {
            let mut acc = 0i64;
            for a in 0..n {
                for b in 0..n {
                    acc += rows[a][r] * j_of(a, b) * rows[b][c];
                }
            }
            if acc != j_of(r, c) {
                return false;
            }
        }
    }
    true
}

impl DynamicalMap for TorusAutomorphism {
    fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn eval(&self, p: &TorusPoint) -> TorusPoint {
        TorusPoint::new(&self.matrix * p.coords())
    }

    fn eval_inverse(&self, p: &TorusPoint) -> Result<TorusPoint> {
        Ok(TorusPoint::new(&self.inverse * p.coords()))
    }

    fn differential(&self, _p: &TorusPoint) -> DMatrix<f64> {
        self.matrix.clone()
    }

    fn inverse_differential(&self, _p: &TorusPoint) -> Result<DMatrix<f64>> {
        Ok(self.inverse.clone())
    }

    fn preservation(&self) -> Preservation {
        self.preservation
    }

    fn curvature_bound(&self) -> Option<f64> {
        Some(0.0)
    }

    fn name(&self) -> String {
        self.label.clone()
    }
}

/// Cat map on (x, y) driving a circle fiber: (x,y,z) -> (2x+y, x+y, z + (k/2pi) sin 2pi x).
///
/// Volume preserving for every k; partially hyperbolic with a one-dimensional
/// center for moderate k (certified downstream).
#[derive(Debug, Clone)]
pub struct CatSkew3 {
    kappa: f64,
}

impl CatSkew3 {
    pub fn new(kappa: f64) -> CatSkew3 {
        CatSkew3 { kappa }
    }

    /// The k = 0 product case; its leaves are exactly affine.
    pub fn linear() -> CatSkew3 {
        CatSkew3 { kappa: 0.0 }
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }
}

impl DynamicalMap for CatSkew3 {
    fn dim(&self) -> usize {
        3
    }

    fn eval(&self, p: &TorusPoint) -> TorusPoint {
        let c = p.coords();
        let (x, y, z) = (c[0], c[1], c[2]);
        TorusPoint::from_slice(&[
            2.0 * x + y,
            x + y,
            z + self.kappa / TAU * (TAU * x).sin(),
        ])
    }

    fn eval_inverse(&self, p: &TorusPoint) -> Result<TorusPoint> {
        let c = p.coords();
        let (cx, cy, cz) = (c[0], c[1], c[2]);
        let x = cx - cy;
        Ok(TorusPoint::from_slice(&[
            x,
            -cx + 2.0 * cy,
            cz - self.kappa / TAU * (TAU * x).sin(),
        ]))
    }

    fn differential(&self, p: &TorusPoint) -> DMatrix<f64> {
        let x = p.coords()[0];
        DMatrix::from_row_slice(
            3,
            3,
            &[
                2.0,
                1.0,
                0.0,
                1.0,
                1.0,
                0.0,
                self.kappa * (TAU * x).cos(),
                0.0,
                1.0,
            ],
        )
    }

    fn inverse_differential(&self, p: &TorusPoint) -> Result<DMatrix<f64>> {
        let c = p.coords();
        let x = c[0] - c[1];
        let k = self.kappa * (TAU * x).cos();
        Ok(DMatrix::from_row_slice(
            3,
            3,
            &[1.0, -1.0, 0.0, -1.0, 2.0, 0.0, -k, k, 1.0],
        ))
    }

    fn preservation(&self) -> Preservation {
        Preservation::Volume
    }

    fn curvature_bound(&self) -> Option<f64> {
        // only nonzero second derivative is d2/dx2 of the fiber drift
        Some(TAU * self.kappa.abs())
    }

    fn name(&self) -> String {
        if self.kappa == 0.0 {
            "linear_skew3".into()
        } else {
            format!("cat_skew3(kappa={})", self.kappa)
        }
    }
}

/// Two cat maps of different strength on (q1,p1) and (q2,p2), coupled by the
/// exact symplectic kick of the Hamiltonian (k/4pi^2) cos 2pi q1 cos 2pi q2.
///
/// Coordinates are ordered (q1, q2, p1, p2) so the standard form pairs
/// x_i with x_{i+2}. Hyperbolic rates at k = 0 are {6.854, 2.618, 0.382,
/// 0.1459}, giving a 1+2+1 partially hyperbolic splitting.
#[derive(Debug, Clone)]
pub struct CoupledCat4 {
    kappa: f64,
}

/// Strong block: square of the cat matrix.
const STRONG: [[f64; 2]; 2] = [[5.0, 3.0], [3.0, 2.0]];
const STRONG_INV: [[f64; 2]; 2] = [[2.0, -3.0], [-3.0, 5.0]];
/// Weak block: the cat matrix itself.
const WEAK: [[f64; 2]; 2] = [[2.0, 1.0], [1.0, 1.0]];
const WEAK_INV: [[f64; 2]; 2] = [[1.0, -1.0], [-1.0, 2.0]];

impl CoupledCat4 {
    pub fn new(kappa: f64) -> CoupledCat4 {
        CoupledCat4 { kappa }
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    fn linear(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(4, 4);
        // strong block on (q1, p1) = indices (0, 2)
        m[(0, 0)] = STRONG[0][0];
        m[(0, 2)] = STRONG[0][1];
        m[(2, 0)] = STRONG[1][0];
        m[(2, 2)] = STRONG[1][1];
        // weak block on (q2, p2) = indices (1, 3)
        m[(1, 1)] = WEAK[0][0];
        m[(1, 3)] = WEAK[0][1];
        m[(3, 1)] = WEAK[1][0];
        m[(3, 3)] = WEAK[1][1];
        m
    }

    fn linear_inv(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(4, 4);
        m[(0, 0)] = STRONG_INV[0][0];
        m[(0, 2)] = STRONG_INV[0][1];
        m[(2, 0)] = STRONG_INV[1][0];
        m[(2, 2)] = STRONG_INV[1][1];
        m[(1, 1)] = WEAK_INV[0][0];
        m[(1, 3)] = WEAK_INV[0][1];
        m[(3, 1)] = WEAK_INV[1][0];
        m[(3, 3)] = WEAK_INV[1][1];
        m
    }

    fn kick_delta(&self, q1: f64, q2: f64) -> (f64, f64) {
        let a = self.kappa / TAU;
        (
            a * (TAU * q1).sin() * (TAU * q2).cos(),
            a * (TAU * q1).cos() * (TAU * q2).sin(),
        )
    }

    /// Jacobian of the momentum kick at fiber coordinates (q1, q2):
    /// identity plus a lower-left block, hence exactly symplectic.
    fn kick_jacobian(&self, q1: f64, q2: f64) -> DMatrix<f64> {
        let mut m = DMatrix::identity(4, 4);
        let k = self.kappa;
        let (s1, c1) = (TAU * q1).sin_cos();
        let (s2, c2) = (TAU * q2).sin_cos();
        m[(2, 0)] = k * c1 * c2;
        m[(2, 1)] = -k * s1 * s2;
        m[(3, 0)] = -k * s1 * s2;
        m[(3, 1)] = k * c1 * c2;
        m
    }
}

impl DynamicalMap for CoupledCat4 {
    fn dim(&self) -> usize {
        4
    }

    fn eval(&self, p: &TorusPoint) -> TorusPoint {
        let lin = TorusPoint::new(self.linear() * p.coords());
        let c = lin.coords();
        let (d1, d2) = self.kick_delta(c[0], c[1]);
        TorusPoint::from_slice(&[c[0], c[1], c[2] + d1, c[3] + d2])
    }

    fn eval_inverse(&self, p: &TorusPoint) -> Result<TorusPoint> {
        let c = p.coords();
        let (d1, d2) = self.kick_delta(c[0], c[1]);
        let unkicked = DVector::from_column_slice(&[c[0], c[1], c[2] - d1, c[3] - d2]);
        Ok(TorusPoint::new(self.linear_inv() * unkicked))
    }

    fn differential(&self, p: &TorusPoint) -> DMatrix<f64> {
        let lin = self.linear();
        let q = TorusPoint::new(&lin * p.coords());
        let c = q.coords();
        self.kick_jacobian(c[0], c[1]) * lin
    }

    fn inverse_differential(&self, p: &TorusPoint) -> Result<DMatrix<f64>> {
        let c = p.coords();
        let mut unkick = self.kick_jacobian(c[0], c[1]);
        // inverse of I + N is I - N for the nilpotent kick block
        unkick[(2, 0)] = -unkick[(2, 0)];
        unkick[(2, 1)] = -unkick[(2, 1)];
        unkick[(3, 0)] = -unkick[(3, 0)];
        unkick[(3, 1)] = -unkick[(3, 1)];
        Ok(self.linear_inv() * unkick)
    }

    fn preservation(&self) -> Preservation {
        Preservation::Symplectic
    }

    fn curvature_bound(&self) -> Option<f64> {
        // second derivatives of the kick are bounded by 2 pi k per entry;
        // 4 nonzero entries give a safe operator-norm bound
        Some(4.0 * TAU * self.kappa.abs())
    }

    fn name(&self) -> String {
        format!("coupled_cat4(kappa={})", self.kappa)
    }
}

/// Rigid translation; every Lyapunov exponent vanishes.
#[derive(Debug, Clone)]
pub struct TorusTranslation {
    shift: DVector<f64>,
}

impl TorusTranslation {
    pub fn new(shift: &[f64]) -> TorusTranslation {
        TorusTranslation {
            shift: DVector::from_column_slice(shift),
        }
    }
}

impl DynamicalMap for TorusTranslation {
    fn dim(&self) -> usize {
        self.shift.len()
    }

    fn eval(&self, p: &TorusPoint) -> TorusPoint {
        p.translate(&self.shift)
    }

    fn eval_inverse(&self, p: &TorusPoint) -> Result<TorusPoint> {
        Ok(p.translate(&(-&self.shift)))
    }

    fn differential(&self, _p: &TorusPoint) -> DMatrix<f64> {
        DMatrix::identity(self.dim(), self.dim())
    }

    fn inverse_differential(&self, _p: &TorusPoint) -> Result<DMatrix<f64>> {
        Ok(DMatrix::identity(self.dim(), self.dim()))
    }

    fn preservation(&self) -> Preservation {
        Preservation::Volume
    }

    fn curvature_bound(&self) -> Option<f64> {
        Some(0.0)
    }

    fn name(&self) -> String {
        let parts: Vec<String> = self.shift.iter().map(|x| format!("{x}")).collect();
        format!("translation({})", parts.join(","))
    }
}

/// View of a map with time reversed.
pub struct Inverted<'a> {
    inner: &'a dyn DynamicalMap,
}

impl<'a> Inverted<'a> {
    pub fn new(inner: &'a dyn DynamicalMap) -> Inverted<'a> {
        Inverted { inner }
    }
}

impl DynamicalMap for Inverted<'_> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn eval(&self, p: &TorusPoint) -> TorusPoint {
        self.inner
            .eval_inverse(p)
            .expect("inverse evaluation failed in time-reversed view")
    }

    fn eval_inverse(&self, p: &TorusPoint) -> Result<TorusPoint> {
        Ok(self.inner.eval(p))
    }

    fn differential(&self, p: &TorusPoint) -> DMatrix<f64> {
        self.inner
            .inverse_differential(p)
            .expect("inverse differential failed in time-reversed view")
    }

    fn inverse_differential(&self, p: &TorusPoint) -> Result<DMatrix<f64>> {
        Ok(self.inner.differential(p))
    }

    fn preservation(&self) -> Preservation {
        self.inner.preservation()
    }

    fn curvature_bound(&self) -> Option<f64> {
        self.inner.curvature_bound()
    }

    fn name(&self) -> String {
        format!("inverse({})", self.inner.name())
    }
}

// ---------------------------------------------------------------------------
// orbits and cocycles

pub fn iterate(map: &dyn DynamicalMap, p: &TorusPoint, n: usize) -> TorusPoint {
    let mut q = p.clone();
    for _ in 0..n {
        q = map.eval(&q);
    }
    q
}

pub fn iterate_inverse(map: &dyn DynamicalMap, p: &TorusPoint, n: usize) -> Result<TorusPoint> {
    let mut q = p.clone();
    for _ in 0..n {
        q = map.eval_inverse(&q)?;
    }
    Ok(q)
}

/// Orbit p, f(p), ..., f^n(p); length n+1.
pub fn forward_orbit(map: &dyn DynamicalMap, p: &TorusPoint, n: usize) -> Vec<TorusPoint> {
    let mut orbit = Vec::with_capacity(n + 1);
    orbit.push(p.clone());
    for _ in 0..n {
        let next = map.eval(orbit.last().unwrap());
        orbit.push(next);
    }
    orbit
}

/// Orbit p, f^-1(p), ..., f^-n(p); length n+1.
pub fn backward_orbit(
    map: &dyn DynamicalMap,
    p: &TorusPoint,
    n: usize,
) -> Result<Vec<TorusPoint>> {
    let mut orbit = Vec::with_capacity(n + 1);
    orbit.push(p.clone());
    for _ in 0..n {
        let next = map.eval_inverse(orbit.last().unwrap())?;
        orbit.push(next);
    }
    Ok(orbit)
}

/// D_p f^n as the ordered Jacobian product along the forward orbit.
pub fn forward_cocycle(map: &dyn DynamicalMap, p: &TorusPoint, n: usize) -> DMatrix<f64> {
    let d = map.dim();
    let mut acc = DMatrix::identity(d, d);
    let mut q = p.clone();
    for _ in 0..n {
        acc = map.differential(&q) * acc;
        q = map.eval(&q);
    }
    acc
}

/// D_p f^{-n}; the product of inverse Jacobians walked down the backward orbit.
pub fn backward_cocycle(map: &dyn DynamicalMap, p: &TorusPoint, n: usize) -> Result<DMatrix<f64>> {
    let d = map.dim();
    let mut acc = DMatrix::identity(d, d);
    let mut q = p.clone();
    for _ in 0..n {
        acc = map.inverse_differential(&q)? * acc;
        q = map.eval_inverse(&q)?;
    }
    Ok(acc)
}

/// Central-difference Jacobian through the torus wrap; oracle for exact
/// differentials.
pub fn finite_difference_differential(
    map: &dyn DynamicalMap,
    p: &TorusPoint,
    h: f64,
) -> DMatrix<f64> {
    let d = map.dim();
    let mut out = DMatrix::zeros(d, d);
    for j in 0..d {
        let mut e = DVector::zeros(d);
        e[j] = h;
        let fp = map.eval(&p.translate(&e));
        let fm = map.eval(&p.translate(&(-e)));
        out.set_column(j, &(fm.displacement_to(&fp) / (2.0 * h)));
    }
    out
}

/// Worst deviation from the tagged structure over `n` seeded sample points:
/// |det Df| - 1 for volume, the symplectic identity residual for symplectic.
pub fn preservation_defect(map: &dyn DynamicalMap, n: usize, seed: u64) -> f64 {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let d = map.dim();
    let j = if map.preservation() == Preservation::Symplectic {
        Some(symplectic_form(d))
    } else {
        None
    };
    let mut worst = 0.0f64;
    for _ in 0..n {
        let p = TorusPoint::new(DVector::from_fn(d, |_, _| rng.random::<f64>()));
        let df = map.differential(&p);
        let defect = match &j {
            Some(j) => (df.transpose() * j * &df - j).norm(),
            None => (df.determinant().abs() - 1.0).abs(),
        };
        worst = worst.max(defect);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const EXACT: f64 = 1e-12;
    const ROUNDTRIP: f64 = 1e-10;
    const FD: f64 = 1e-8;
    const FORM: f64 = 1e-9;

    fn random_point(rng: &mut ChaCha8Rng, d: usize) -> TorusPoint {
        TorusPoint::new(DVector::from_fn(d, |_, _| rng.random::<f64>()))
    }

    fn zoo() -> Vec<Box<dyn DynamicalMap>> {
        vec![
            Box::new(TorusAutomorphism::cat2()),
            Box::new(CatSkew3::linear()),
            Box::new(CatSkew3::new(0.3)),
            Box::new(CoupledCat4::new(0.05)),
            Box::new(TorusTranslation::new(&[0.1234, 0.567, 0.89])),
        ]
    }

    #[test]
    fn cat2_pointwise_values() {
        let cat = TorusAutomorphism::cat2();
        let origin = TorusPoint::from_slice(&[0.0, 0.0]);
        assert_eq!(cat.eval(&origin), origin);
        let half = TorusPoint::from_slice(&[0.5, 0.5]);
        let image = cat.eval(&half);
        assert!(image.dist(&TorusPoint::from_slice(&[0.5, 0.0])) < EXACT);
    }

    #[test]
    fn linear_skew_fixes_fiber_over_origin() {
        let m = CatSkew3::linear();
        let p = TorusPoint::from_slice(&[0.0, 0.0, 0.3]);
        assert!(m.eval(&p).dist(&p) < EXACT);
    }

    #[test]
    fn skew_differential_formula() {
        let m = CatSkew3::new(0.3);
        let p = TorusPoint::from_slice(&[0.0, 0.42, 0.77]);
        let expected = DMatrix::from_row_slice(
            3,
            3,
            &[2.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.3, 0.0, 1.0],
        );
        assert!((m.differential(&p) - expected).norm() < EXACT);
    }

    #[test]
    fn differentials_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for map in zoo() {
            for _ in 0..100 {
                let p = random_point(&mut rng, map.dim());
                let exact = map.differential(&p);
                let fd = finite_difference_differential(map.as_ref(), &p, 1e-5);
                assert!(
                    (exact - fd).norm() < FD,
                    "fd mismatch for {} at {p}",
                    map.name()
                );
            }
            // exercise the wrap explicitly
            let mut near_one = vec![0.9999999; map.dim()];
            near_one[0] = 0.0000001;
            let p = TorusPoint::from_slice(&near_one);
            let diff = map.differential(&p) - finite_difference_differential(map.as_ref(), &p, 1e-5);
            assert!(diff.norm() < FD, "wrap fd mismatch for {}", map.name());
        }
    }

    #[test]
    fn inverse_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for map in zoo() {
            for _ in 0..100 {
                let p = random_point(&mut rng, map.dim());
                let back = map.eval_inverse(&map.eval(&p)).unwrap();
                assert!(back.dist(&p) < ROUNDTRIP, "round trip for {}", map.name());
                let fwd = map.eval(&map.eval_inverse(&p).unwrap());
                assert!(fwd.dist(&p) < ROUNDTRIP);
            }
        }
        let id = TorusAutomorphism::identity(3);
        let p = TorusPoint::from_slice(&[0.3, 0.6, 0.9]);
        assert_eq!(id.eval_inverse(&p).unwrap(), p);
    }

    #[test]
    fn inverse_differentials_are_exact_inverses() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for map in zoo() {
            for _ in 0..50 {
                let p = random_point(&mut rng, map.dim());
                let q = map.eval(&p);
                let product = map.inverse_differential(&q).unwrap() * map.differential(&p);
                let d = map.dim();
                assert!(
                    (product - DMatrix::identity(d, d)).norm() < FORM,
                    "Df^-1 Df != I for {}",
                    map.name()
                );
            }
        }
    }

    #[test]
    fn squaring_matches_squared_matrix() {
        let cat = TorusAutomorphism::cat2();
        let squared = TorusAutomorphism::from_rows(&[vec![5, 3], vec![3, 2]], "cat2^2").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..100 {
            let p = random_point(&mut rng, 2);
            let twice = cat.eval(&cat.eval(&p));
            assert!(twice.dist(&squared.eval(&p)) < EXACT);
        }
    }

    #[test]
    fn preservation_tags_are_verified() {
        for map in zoo() {
            let defect = preservation_defect(map.as_ref(), 1000, 0xBEEF);
            assert!(
                defect < FORM,
                "{} claims {:?} but defect = {defect:e}",
                map.name(),
                map.preservation()
            );
        }
        assert_eq!(CoupledCat4::new(0.05).preservation(), Preservation::Symplectic);
        assert_eq!(CatSkew3::new(0.3).preservation(), Preservation::Volume);
    }

    #[test]
    fn cocycles_compose_and_invert() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let map = CatSkew3::new(0.3);
        for _ in 0..20 {
            let p = random_point(&mut rng, 3);
            let n = 6;
            let fwd = forward_cocycle(&map, &p, n);
            let q = iterate(&map, &p, n);
            let bwd = backward_cocycle(&map, &q, n).unwrap();
            assert!((bwd * fwd - DMatrix::identity(3, 3)).norm() < 1e-9);
        }
        // for linear maps the cocycle is the matrix power
        let cat = TorusAutomorphism::cat2();
        let p = TorusPoint::from_slice(&[0.2, 0.7]);
        let m3 = forward_cocycle(&cat, &p, 3);
        let expected = cat.matrix() * cat.matrix() * cat.matrix();
        assert!((m3 - expected).norm() < EXACT);
    }

    #[test]
    fn inverted_view_swaps_time() {
        let map = CatSkew3::new(0.25);
        let inv = Inverted::new(&map);
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        for _ in 0..20 {
            let p = random_point(&mut rng, 3);
            assert!(inv.eval(&map.eval(&p)).dist(&p) < ROUNDTRIP);
            let product = inv.differential(&map.eval(&p)) * map.differential(&p);
            assert!((product - DMatrix::identity(3, 3)).norm() < FORM);
        }
        assert_eq!(inv.preservation(), Preservation::Volume);
    }

    #[test]
    fn orbits_have_expected_shape() {
        let map = TorusAutomorphism::cat2();
        let p = TorusPoint::from_slice(&[0.25, 0.5]);
        let fwd = forward_orbit(&map, &p, 3);
        assert_eq!(fwd.len(), 4);
        assert_eq!(fwd[0], p);
        assert!(fwd[1].dist(&map.eval(&p)) < EXACT);
        let bwd = backward_orbit(&map, &p, 3).unwrap();
        assert!(map.eval(&bwd[1]).dist(&p) < EXACT);
        // period-3 orbit of the cat map
        let periodic = TorusPoint::from_slice(&[0.25, 0.5]);
        assert!(iterate(&map, &periodic, 3).dist(&periodic) < EXACT);
    }

    #[test]
    fn symplectic_tag_detection_on_integer_matrices() {
        // cat2 sits in SL(2,Z) = Sp(2,Z)
        assert_eq!(TorusAutomorphism::cat2().preservation(), Preservation::Symplectic);
        // a volume-only example: swap two coordinates in d=3
        let swap = TorusAutomorphism::from_rows(
            &[vec![0, 1, 0], vec![1, 0, 0], vec![0, 0, 1]],
            "swap",
        )
        .unwrap();
        assert_eq!(swap.preservation(), Preservation::Volume);
    }
}
