//! Flat torus T^d = R^d/Z^d: points, charts, and linear subspaces of the
//! tangent space.
//!
//! Everything here is exact flat geometry. Charts are additive shifts, so
//! they are isometries onto their image as long as the radius stays below
//! 1/2, and volume/symplectic forms pull back to constant forms for free.

use crate::{CoreError, Result};
use nalgebra::{DMatrix, DVector};

/// Rank cutoff when orthonormalizing a spanning set.
const RANK_TOL: f64 = 1e-10;
/// Principal cosines above this mean the subspaces share a direction.
const DEGENERACY_TOL: f64 = 1e-9;

/// Point of T^d, coordinates normalized to [0,1).
#[derive(Debug, Clone, PartialEq)]
pub struct TorusPoint {
    coords: DVector<f64>,
}

fn wrap_unit(x: f64) -> f64 {
    let y = x - x.floor();
    // x slightly below an integer can round the fractional part up to 1.0.
    if y >= 1.0 {
        y - 1.0
    } else {
        y
    }
}

impl TorusPoint {
    pub fn new(coords: DVector<f64>) -> Self {
        TorusPoint {
            coords: coords.map(wrap_unit),
        }
    }

    pub fn from_slice(coords: &[f64]) -> Self {
        Self::new(DVector::from_column_slice(coords))
    }

    pub fn origin(dim: usize) -> Self {
        TorusPoint {
            coords: DVector::zeros(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &DVector<f64> {
        &self.coords
    }

    /// Representative of `other - self` with every component in [-1/2, 1/2].
    pub fn displacement_to(&self, other: &TorusPoint) -> DVector<f64> {
        let mut d = &other.coords - &self.coords;
        for x in d.iter_mut() {
            *x -= x.round();
        }
        d
    }

    /// Geodesic distance; at most sqrt(d)/2.
    pub fn dist(&self, other: &TorusPoint) -> f64 {
        self.displacement_to(other).norm()
    }

    pub fn translate(&self, v: &DVector<f64>) -> TorusPoint {
        TorusPoint::new(&self.coords + v)
    }
}

impl std::fmt::Display for TorusPoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(")?;
        for (i, x) in self.coords.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{x:.6}")?;
        }
        write!(f, ")")
    }
}

/// Tangent vector at a marked base point (flat metric).
#[derive(Debug, Clone, PartialEq)]
pub struct Tangent {
    pub base: TorusPoint,
    pub vec: DVector<f64>,
}

impl Tangent {
    pub fn norm(&self) -> f64 {
        self.vec.norm()
    }
}

/// Exponential chart v -> base + v (mod 1) on the ball of `radius`.
#[derive(Debug, Clone)]
pub struct Chart {
    base: TorusPoint,
    radius: f64,
}

impl Chart {
    /// Isometry requires radius < 1/2 on the flat torus.
    pub fn new(base: TorusPoint, radius: f64) -> Result<Chart> {
        if !(radius > 0.0 && radius < 0.5) {
            return Err(CoreError::parameter(format!(
                "chart radius must lie in (0, 1/2), got {radius}"
            )));
        }
        Ok(Chart { base, radius })
    }

    pub fn base(&self) -> &TorusPoint {
        &self.base
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn apply(&self, v: &DVector<f64>) -> Result<TorusPoint> {
        let n = v.norm();
        if n > self.radius {
            return Err(CoreError::OutOfChart {
                dist: n,
                radius: self.radius,
            });
        }
        Ok(self.base.translate(v))
    }

    pub fn lift(&self, q: &TorusPoint) -> Result<Tangent> {
        let v = self.base.displacement_to(q);
        let n = v.norm();
        if n > self.radius {
            return Err(CoreError::OutOfChart {
                dist: n,
                radius: self.radius,
            });
        }
        Ok(Tangent {
            base: self.base.clone(),
            vec: v,
        })
    }

    pub fn contains(&self, q: &TorusPoint) -> bool {
        self.base.dist(q) <= self.radius
    }
}

/// Linear subspace of R^d held as an orthonormal column basis.
#[derive(Debug, Clone)]
pub struct Subspace {
    basis: DMatrix<f64>,
}

impl Subspace {
    /// Orthonormalizes the given spanning vectors; rejects dependent sets.
    pub fn span(vectors: &[DVector<f64>]) -> Result<Subspace> {
        if vectors.is_empty() {
            return Err(CoreError::parameter("empty spanning set"));
        }
        let m = DMatrix::from_columns(vectors);
        Self::from_matrix(m)
    }

    /// Columns of `m` are the spanning set. Rank is judged from singular
    /// values (reliable even when clustered); the orthonormal basis comes
    /// from QR, because SVD singular *vectors* lose orthogonality when the
    /// spanning set is already orthonormal (all singular values equal).
    pub fn from_matrix(m: DMatrix<f64>) -> Result<Subspace> {
        let k = m.ncols();
        if k == 0 {
            return Ok(Subspace::empty(m.nrows()));
        }
        let rank = m
            .clone()
            .svd(false, false)
            .singular_values
            .iter()
            .filter(|&&s| s > RANK_TOL)
            .count();
        if rank < k {
            return Err(CoreError::parameter(format!(
                "spanning set is rank deficient: {rank} of {k} independent"
            )));
        }
        let q = m.qr().q();
        Ok(Subspace {
            basis: q.columns(0, k).into_owned(),
        })
    }

    pub fn line(v: &DVector<f64>) -> Result<Subspace> {
        Self::span(std::slice::from_ref(v))
    }

    /// Zero-dimensional subspace (no basis columns).
    pub fn empty(dim: usize) -> Subspace {
        Subspace {
            basis: DMatrix::zeros(dim, 0),
        }
    }

    pub fn full(dim: usize) -> Subspace {
        Subspace {
            basis: DMatrix::identity(dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn basis_vector(&self, i: usize) -> DVector<f64> {
        self.basis.column(i).into_owned()
    }

    /// Orthogonal projector onto the subspace.
    pub fn projector(&self) -> DMatrix<f64> {
        &self.basis * self.basis.transpose()
    }

    pub fn project(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.basis * (self.basis.transpose() * v)
    }

    /// Orthogonal complement.
    pub fn complement(&self) -> Subspace {
        let d = self.ambient_dim();
        let k = self.dim();
        if k == 0 {
            return Subspace::full(d);
        }
        // QR of [basis | I]: the first k columns of Q reproduce the basis,
        // the remaining d-k complete an orthonormal frame of the ambient
        // space, hence span the orthogonal complement.
        let mut wide = DMatrix::zeros(d, k + d);
        wide.columns_mut(0, k).copy_from(&self.basis);
        wide.columns_mut(k, d)
            .copy_from(&DMatrix::<f64>::identity(d, d));
        let q = wide.qr().q();
        Subspace {
            basis: q.columns(k, d - k).into_owned(),
        }
    }

    /// Largest principal cosine with `other`; 0 means orthogonal, 1 means a
    /// shared direction.
    pub fn principal_cosine(&self, other: &Subspace) -> f64 {
        if self.dim() == 0 || other.dim() == 0 {
            return 0.0;
        }
        let m = self.basis.transpose() * &other.basis;
        m.svd(false, false).singular_values.max().min(1.0)
    }

    /// Direct sum; errors when the summands nearly intersect.
    pub fn direct_sum(&self, other: &Subspace) -> Result<Subspace> {
        if self.dim() == 0 {
            return Ok(other.clone());
        }
        if other.dim() == 0 {
            return Ok(self.clone());
        }
        let cosine = self.principal_cosine(other);
        if cosine >= 1.0 - DEGENERACY_TOL {
            return Err(CoreError::DegenerateSubspaces { cosine });
        }
        let mut cols: Vec<DVector<f64>> = Vec::with_capacity(self.dim() + other.dim());
        for i in 0..self.dim() {
            cols.push(self.basis_vector(i));
        }
        for i in 0..other.dim() {
            cols.push(other.basis_vector(i));
        }
        Subspace::span(&cols)
    }

    /// Intersection: directions with principal cosine above `cos_tol`.
    /// Principal intersection: directions whose principal cosine reaches
    /// `cos_tol`. Implemented through the projector sum, whose eigenvalues
    /// are 1 +/- cos(theta_i) per principal angle and exactly 2 on the true
    /// intersection; the symmetric eigenproblem is reliable where the
    /// general SVD's vector accumulation is not (rank-deficient inputs).
    pub fn intersect(&self, other: &Subspace, cos_tol: f64) -> Subspace {
        if self.dim() == 0 || other.dim() == 0 {
            return Subspace::empty(self.ambient_dim());
        }
        let sum = self.projector() + other.projector();
        let eig = nalgebra::SymmetricEigen::new(sum);
        let mut cols = Vec::new();
        for (i, &lambda) in eig.eigenvalues.iter().enumerate() {
            if lambda - 1.0 >= cos_tol {
                cols.push(eig.eigenvectors.column(i).into_owned());
            }
        }
        if cols.is_empty() {
            Subspace::empty(self.ambient_dim())
        } else {
            Subspace::span(&cols).expect("eigenvectors are orthonormal")
        }
    }

    pub fn contains_vector(&self, v: &DVector<f64>, tol: f64) -> bool {
        (self.project(v) - v).norm() <= tol * v.norm().max(1.0)
    }
}

/// Deterministic sample of `n` unit vectors in R^dim (Box-Muller over a
/// seeded stream, then normalized).
pub fn unit_sphere_points(dim: usize, n: usize, seed: u64) -> Vec<DVector<f64>> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut gauss = move || {
        let u1: f64 = rng.random::<f64>().max(1e-300);
        let u2: f64 = rng.random();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    };
    (0..n)
        .map(|_| {
            loop {
                let v = DVector::from_fn(dim, |_, _| gauss());
                let norm = v.norm();
                if norm > 1e-6 {
                    return v / norm;
                }
            }
        })
        .collect()
}

/// Operator norm of the orthogonal projection of `from` onto `onto`.
///
/// This is the largest principal cosine between the two subspaces; inputs
/// sharing a direction are rejected because the quantity is then useless as
/// a transversality measure.
pub fn orthogonal_projection_norm(onto: &Subspace, from: &Subspace) -> Result<f64> {
    let cosine = onto.principal_cosine(from);
    if cosine >= 1.0 - DEGENERACY_TOL {
        return Err(CoreError::DegenerateSubspaces { cosine });
    }
    Ok(cosine)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const EXACT: f64 = 1e-12;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(0x7041)
    }

    fn random_point(rng: &mut ChaCha8Rng, d: usize) -> TorusPoint {
        TorusPoint::new(DVector::from_fn(d, |_, _| rng.random::<f64>()))
    }

    fn random_unit(rng: &mut ChaCha8Rng, d: usize) -> DVector<f64> {
        loop {
            let v = DVector::from_fn(d, |_, _| rng.random::<f64>() - 0.5);
            if v.norm() > 1e-3 {
                return v.normalize();
            }
        }
    }

    #[test]
    fn wrap_and_displacement() {
        let p = TorusPoint::from_slice(&[0.9, 0.9]);
        let q = p.translate(&DVector::from_column_slice(&[0.2, 0.2]));
        assert!((q.coords() - DVector::from_column_slice(&[0.1, 0.1])).norm() < EXACT);

        let a = TorusPoint::from_slice(&[0.0, 0.0]);
        let b = TorusPoint::from_slice(&[0.9, 0.0]);
        let v = a.displacement_to(&b);
        assert!((v - DVector::from_column_slice(&[-0.1, 0.0])).norm() < EXACT);
    }

    #[test]
    fn distance_bounded_by_half_sqrt_dim() {
        let mut rng = rng();
        for d in [2usize, 3, 4] {
            let bound = (d as f64).sqrt() / 2.0;
            for _ in 0..200 {
                let p = random_point(&mut rng, d);
                let q = random_point(&mut rng, d);
                assert!(p.dist(&q) <= bound + EXACT);
                assert!((p.dist(&q) - q.dist(&p)).abs() < EXACT);
            }
        }
    }

    #[test]
    fn chart_roundtrip_and_isometry() {
        let mut rng = rng();
        for _ in 0..100 {
            let p = random_point(&mut rng, 3);
            let chart = Chart::new(p.clone(), 0.3).unwrap();
            let v = random_unit(&mut rng, 3) * (rng.random::<f64>() * 0.3);
            let w = random_unit(&mut rng, 3) * (rng.random::<f64>() * 0.3);
            let qv = chart.apply(&v).unwrap();
            let qw = chart.apply(&w).unwrap();
            // lift inverts apply
            let back = chart.lift(&qv).unwrap();
            assert!((&back.vec - &v).norm() < EXACT);
            // isometry onto the image
            assert!((qv.dist(&qw) - (&v - &w).norm()).abs() < EXACT);
        }
        // center maps to itself, lift of center is zero
        let p = TorusPoint::from_slice(&[0.25, 0.5, 0.125]);
        let chart = Chart::new(p.clone(), 0.25).unwrap();
        assert_eq!(chart.apply(&DVector::zeros(3)).unwrap(), p);
        assert!(chart.lift(&p).unwrap().norm() < EXACT);
    }

    #[test]
    fn chart_rejects_bad_radius_and_far_points() {
        assert!(Chart::new(TorusPoint::origin(2), 0.0).is_err());
        assert!(Chart::new(TorusPoint::origin(2), 0.5).is_err());
        let chart = Chart::new(TorusPoint::origin(2), 0.2).unwrap();
        let far = TorusPoint::from_slice(&[0.5, 0.5]);
        assert!(matches!(
            chart.lift(&far),
            Err(CoreError::OutOfChart { .. })
        ));
    }

    #[test]
    fn projection_norm_matches_brute_force() {
        let e1 = DVector::from_column_slice(&[1.0, 0.0, 0.0]);
        let e2 = DVector::from_column_slice(&[0.0, 1.0, 0.0]);
        let ex = Subspace::line(&e1).unwrap();
        let ey = Subspace::line(&e2).unwrap();
        assert!(orthogonal_projection_norm(&ex, &ey).unwrap() < EXACT);

        // tilted line: projection norm onto span(e1) is |sin alpha|
        for alpha in [0.1f64, 0.35, 0.8, 1.2] {
            let f = Subspace::line(&DVector::from_column_slice(&[
                alpha.sin(),
                alpha.cos(),
                0.0,
            ]))
            .unwrap();
            let got = orthogonal_projection_norm(&ex, &f).unwrap();
            assert!((got - alpha.sin().abs()) < 1e-12, "alpha={alpha} got={got}");
        }

        // random plane in R^4 against a random line: compare with a dense
        // sweep over unit vectors of the plane
        let mut rng = rng();
        for _ in 0..20 {
            let plane = Subspace::span(&[random_unit(&mut rng, 4), random_unit(&mut rng, 4)])
                .unwrap();
            let line = Subspace::line(&random_unit(&mut rng, 4)).unwrap();
            let fast = orthogonal_projection_norm(&line, &plane).unwrap();
            let mut slow = 0.0f64;
            let n = 20_000;
            for k in 0..n {
                let t = 2.0 * std::f64::consts::PI * (k as f64) / (n as f64);
                let v = plane.basis_vector(0) * t.cos() + plane.basis_vector(1) * t.sin();
                slow = slow.max(line.project(&v).norm());
            }
            assert!((fast - slow).abs() < 1e-7, "fast={fast} slow={slow}");
        }
    }

    #[test]
    fn projection_norm_rejects_shared_directions() {
        let e = Subspace::line(&DVector::from_column_slice(&[1.0, 0.0])).unwrap();
        assert!(matches!(
            orthogonal_projection_norm(&e, &e),
            Err(CoreError::DegenerateSubspaces { .. })
        ));
    }

    #[test]
    fn complement_and_intersection() {
        let mut rng = rng();
        for d in [3usize, 4] {
            for _ in 0..20 {
                let s = Subspace::span(&[random_unit(&mut rng, d), random_unit(&mut rng, d)])
                    .unwrap();
                let c = s.complement();
                assert_eq!(s.dim() + c.dim(), d);
                let sum = s.projector() + c.projector();
                assert!((sum - DMatrix::identity(d, d)).norm() < 1e-10);
            }
        }

        // xy-plane meets yz-plane in the y-axis
        let e = |i: usize| {
            let mut v = DVector::zeros(3);
            v[i] = 1.0;
            v
        };
        let xy = Subspace::span(&[e(0), e(1)]).unwrap();
        let yz = Subspace::span(&[e(1), e(2)]).unwrap();
        let axis = xy.intersect(&yz, 1.0 - 1e-8);
        assert_eq!(axis.dim(), 1);
        assert!(axis.contains_vector(&e(1), 1e-10));
    }

    #[test]
    fn rank_deficient_span_is_rejected() {
        let v = DVector::from_column_slice(&[1.0, 2.0, 3.0]);
        let w = &v * 2.0;
        assert!(Subspace::span(&[v, w]).is_err());
    }

    #[test]
    fn orthonormal_input_frames_stay_orthonormal() {
        // spanning sets that are already orthonormal have fully clustered
        // singular values; the stored basis and the complement must still be
        // orthonormal to machine precision
        for (d, k) in [(3usize, 2usize), (4, 2), (5, 3)] {
            let pts = unit_sphere_points(d, k, 99 + d as u64);
            let raw = DMatrix::from_fn(d, k, |i, j| pts[j][i]);
            let frame = raw.qr().q().columns(0, k).into_owned();
            let s = Subspace::from_matrix(frame.clone()).unwrap();
            let gram = s.basis().transpose() * s.basis();
            assert!((gram - DMatrix::identity(k, k)).norm() < 1e-13);
            // same subspace, not just any orthonormal frame
            assert!(s.principal_cosine(&Subspace::from_matrix(frame).unwrap()) > 1.0 - 1e-14);
            let c = s.complement();
            let cgram = c.basis().transpose() * c.basis();
            assert!((cgram - DMatrix::identity(d - k, d - k)).norm() < 1e-13);
            let cross = s.basis().transpose() * c.basis();
            assert!(cross.norm() < 1e-13);
        }
    }
}
