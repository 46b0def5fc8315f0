//! Cone fields, cone invariance, and the sampled partial-hyperbolicity
//! certificate.
//!
//! A cone is the set of vectors within a fixed angular aperture of a core
//! subspace: v belongs iff ||v - pi v|| <= gamma ||pi v||, equivalently
//! v' B v >= 0 with B = (1 + gamma^2) P - I. Membership being a quadratic
//! sign condition is what makes the extremal-norm computations exact: the
//! sup of a quadratic form over the cone equals min over mu >= 0 of
//! lambda_max(S + mu B) (tight by the two-form S-procedure), and that inner
//! function is convex in mu, so a bracketed golden-section solve finds it.
//! A dense boundary-ray sweep is kept alongside as the slower geometric
//! definition; the two are cross-checked in the tests.

use crate::exec::{map_indexed, ExecMode, UnitGrid};
use crate::maps::{backward_cocycle, forward_cocycle, DynamicalMap, Inverted};
use crate::torus::{Subspace, TorusPoint};
use crate::{CoreError, Result};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

/// Primary convergence threshold for subspace power iteration.
const POWER_TOL: f64 = 2.220446049250313e-16; // 2^-52
/// Accept a splitting whose checkpoint drift never quite reaches POWER_TOL;
/// still orders of magnitude below any aperture in use.
const POWER_TOL_FALLBACK: f64 = 1e-12;
/// Principal-cosine cutoff when intersecting the forward and backward
/// dominated subspaces to extract the center.
const CENTER_COS_TOL: f64 = 1.0 - 1e-8;
/// Angular spacing of the boundary-ray sweep on circle factors.
const RAY_SPACING: f64 = 1e-3;
/// Total ray budget for one sampled push-forward.
const RAY_BUDGET: usize = 200_000;

/// A splitting E^u + E^c + E^s at one point; the center may be trivial.
#[derive(Debug, Clone)]
pub struct Splitting {
    unstable: Subspace,
    center: Subspace,
    stable: Subspace,
}

impl Splitting {
    pub fn new(unstable: Subspace, center: Subspace, stable: Subspace) -> Result<Splitting> {
        let d = unstable.ambient_dim();
        if unstable.dim() == 0 || stable.dim() == 0 {
            return Err(CoreError::parameter(
                "unstable and stable bundles must be nontrivial",
            ));
        }
        if unstable.dim() + center.dim() + stable.dim() != d {
            return Err(CoreError::Dimension {
                expected: d,
                got: unstable.dim() + center.dim() + stable.dim(),
            });
        }
        // direct sums detect near-degenerate pairs
        let uc = unstable.direct_sum(&center)?;
        let _all = uc.direct_sum(&stable)?;
        Ok(Splitting {
            unstable,
            center,
            stable,
        })
    }

    pub fn unstable(&self) -> &Subspace {
        &self.unstable
    }

    pub fn center(&self) -> &Subspace {
        &self.center
    }

    pub fn stable(&self) -> &Subspace {
        &self.stable
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.unstable.dim(), self.center.dim(), self.stable.dim())
    }

    /// Worst transversality defect: max over the two projections
    /// (E^s onto E^u + E^c, and E^u onto E^c + E^s).
    pub fn projection_defect(&self) -> Result<f64> {
        let uc = self.unstable.direct_sum(&self.center)?;
        let cs = self.center.direct_sum(&self.stable)?;
        let a = crate::torus::orthogonal_projection_norm(&uc, &self.stable)?;
        let b = crate::torus::orthogonal_projection_norm(&cs, &self.unstable)?;
        Ok(a.max(b))
    }
}

/// Cone around a core subspace with aperture gamma.
#[derive(Debug, Clone)]
pub struct Cone {
    core: Subspace,
    aperture: f64,
}

impl Cone {
    pub fn new(core: Subspace, aperture: f64) -> Result<Cone> {
        if core.dim() == 0 || core.dim() == core.ambient_dim() {
            return Err(CoreError::parameter(
                "cone core must be a proper nontrivial subspace",
            ));
        }
        if !(aperture > 0.0) {
            return Err(CoreError::parameter(format!(
                "cone aperture must be positive, got {aperture}"
            )));
        }
        Ok(Cone { core, aperture })
    }

    pub fn core(&self) -> &Subspace {
        &self.core
    }

    pub fn aperture(&self) -> f64 {
        self.aperture
    }

    /// Off-core vs on-core length ratio; infinite when v is orthogonal to
    /// the core.
    pub fn off_on_ratio(&self, v: &DVector<f64>) -> f64 {
        let on = self.core.project(v);
        let off = v - &on;
        let on_norm = on.norm();
        if on_norm == 0.0 {
            if off.norm() == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            off.norm() / on_norm
        }
    }

    pub fn contains(&self, v: &DVector<f64>) -> Result<bool> {
        if v.norm() == 0.0 {
            return Err(CoreError::parameter("cone membership of the zero vector"));
        }
        Ok(self.off_on_ratio(v) <= self.aperture)
    }

    /// B with v in cone iff v' B v >= 0.
    pub fn quadratic_form(&self) -> DMatrix<f64> {
        let d = self.core.ambient_dim();
        self.core.projector() * (1.0 + self.aperture * self.aperture)
            - DMatrix::identity(d, d)
    }
}

// ---------------------------------------------------------------------------
// exact extremal quadratics over a cone (S-procedure duals)

fn sym_eig_bounds(m: &DMatrix<f64>) -> (f64, f64) {
    let sym = (m + m.transpose()) * 0.5;
    let eig = nalgebra::SymmetricEigen::new(sym);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in eig.eigenvalues.iter() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    (lo, hi)
}

fn golden_min(mut phi: impl FnMut(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    const INV_PHI: f64 = 0.618033988749894848;
    let mut x1 = hi - (hi - lo) * INV_PHI;
    let mut x2 = lo + (hi - lo) * INV_PHI;
    let mut f1 = phi(x1);
    let mut f2 = phi(x2);
    for _ in 0..120 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - (hi - lo) * INV_PHI;
            f1 = phi(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + (hi - lo) * INV_PHI;
            f2 = phi(x2);
        }
    }
    f1.min(f2)
}

/// Max of v' S v over unit vectors of the cone: min over mu >= 0 of
/// lambda_max(S + mu B), convex in mu.
pub fn cone_sup_quadratic(s: &DMatrix<f64>, cone: &Cone) -> f64 {
    let b = cone.quadratic_form();
    let phi = |mu: f64| sym_eig_bounds(&(s + &b * mu)).1;
    // bracket the convex minimum by doubling
    let mut hi = 1.0f64.max(sym_eig_bounds(s).1.abs());
    let mut best = phi(0.0).min(phi(hi));
    for _ in 0..60 {
        let probe = phi(2.0 * hi);
        if probe >= phi(hi) {
            break;
        }
        hi *= 2.0;
        best = best.min(probe);
    }
    best.min(golden_min(phi, 0.0, 2.0 * hi))
}

pub fn cone_inf_quadratic(s: &DMatrix<f64>, cone: &Cone) -> f64 {
    -cone_sup_quadratic(&(-s), cone)
}

/// (min, max) of ||M v|| over unit vectors of the cone.
pub fn cone_norm_bounds(m: &DMatrix<f64>, cone: &Cone) -> (f64, f64) {
    let gram = m.transpose() * m;
    let hi = cone_sup_quadratic(&gram, cone).max(0.0).sqrt();
    let lo = cone_inf_quadratic(&gram, cone).max(0.0).sqrt();
    (lo, hi)
}

/// Smallest aperture around `target_core` whose cone contains M(C):
/// feasibility of gamma is sup over C of |N M v|^2 - gamma^2 |P M v|^2 <= 0,
/// monotone in gamma, solved by bisection. Infinite when some cone ray maps
/// into the target's orthogonal complement.
pub fn pushed_aperture_into(m: &DMatrix<f64>, cone: &Cone, target_core: &Subspace) -> f64 {
    let d = target_core.ambient_dim();
    let p = target_core.projector();
    let n = DMatrix::identity(d, d) - &p;
    let pm = &p * m;
    let nm = &n * m;
    let s_off = nm.transpose() * &nm;
    let s_on = pm.transpose() * &pm;
    let feasible = |gamma: f64| cone_sup_quadratic(&(&s_off - &s_on * (gamma * gamma)), cone) <= 0.0;
    let mut hi = 1.0;
    let mut tries = 0;
    while !feasible(hi) {
        hi *= 4.0;
        tries += 1;
        if tries > 30 {
            return f64::INFINITY;
        }
    }
    let mut lo = 0.0;
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

// ---------------------------------------------------------------------------
// sampled push-forward (geometric definition of the pushed cone)

/// Grid on the unit sphere S^dim; dim 0 is the two points, dim 1 an evenly
/// spaced circle, dim 2 a golden spiral.
fn sphere_grid(dim: usize, spacing: f64, budget: usize) -> Result<Vec<DVector<f64>>> {
    match dim {
        0 => Ok(vec![
            DVector::from_column_slice(&[1.0]),
            DVector::from_column_slice(&[-1.0]),
        ]),
        1 => {
            let n = ((std::f64::consts::TAU / spacing).ceil() as usize).min(budget).max(8);
            Ok((0..n)
                .map(|i| {
                    let t = std::f64::consts::TAU * (i as f64) / (n as f64);
                    DVector::from_column_slice(&[t.cos(), t.sin()])
                })
                .collect())
        }
        2 => {
            let target = (4.0 * std::f64::consts::PI / (spacing * spacing)).ceil() as usize;
            let n = target.min(budget).max(64);
            let golden = std::f64::consts::PI * (3.0 - 5.0f64.sqrt());
            Ok((0..n)
                .map(|i| {
                    let z = 1.0 - 2.0 * (i as f64 + 0.5) / (n as f64);
                    let r = (1.0 - z * z).max(0.0).sqrt();
                    let t = golden * (i as f64);
                    DVector::from_column_slice(&[r * t.cos(), r * t.sin(), z])
                })
                .collect())
        }
        _ => Err(CoreError::Capacity(
            "boundary-ray sampling supports sphere factors up to S^2".into(),
        )),
    }
}

fn sphere_point(dim: usize, angles: &[f64]) -> DVector<f64> {
    match dim {
        0 => DVector::from_column_slice(&[angles[0].signum()]),
        1 => DVector::from_column_slice(&[angles[0].cos(), angles[0].sin()]),
        2 => {
            let (t, p) = (angles[0], angles[1]);
            DVector::from_column_slice(&[t.sin() * p.cos(), t.sin() * p.sin(), t.cos()])
        }
        _ => unreachable!(),
    }
}

fn sphere_angles(dim: usize, v: &DVector<f64>) -> Vec<f64> {
    match dim {
        0 => vec![v[0]],
        1 => vec![v[1].atan2(v[0])],
        2 => vec![v[2].clamp(-1.0, 1.0).acos(), v[1].atan2(v[0])],
        _ => unreachable!(),
    }
}

/// Max over the cone's boundary rays of the off/on ratio of M v measured
/// against `target_core`: a dense product-sphere sweep followed by
/// per-angle ternary refinement around the best ray.
///
/// This is a lower bound for the full pushed aperture: shears can drive the
/// ratio higher on interior rays (the image of an interior ray may come
/// close to the target's orthogonal complement), so containment claims use
/// [`pushed_aperture_into`]. The two agree whenever the extremal image ray
/// comes from the cone boundary, which holds for maps diagonal in a frame
/// adapted to the core.
pub fn boundary_ray_aperture(
    m: &DMatrix<f64>,
    cone: &Cone,
    target_core: &Subspace,
) -> Result<f64> {
    let k = cone.core.dim();
    let d = cone.core.ambient_dim();
    let comp = cone.core.complement();
    let gamma = cone.aperture;
    let target = Cone::new(target_core.clone(), 1.0)?; // ratio helper only

    let ray = |a: &DVector<f64>, b: &DVector<f64>| -> DVector<f64> {
        cone.core.basis() * a * 1.0 + comp.basis() * b * gamma
    };
    let ratio = |v: &DVector<f64>| target.off_on_ratio(&(m * v));

    let a_dim = k - 1;
    let b_dim = d - k - 1;
    // keep the two grids within the total ray budget
    let mut spacing_a = RAY_SPACING;
    let mut spacing_b = RAY_SPACING;
    loop {
        let na = if a_dim == 0 {
            1 // quadratic ratio is even, so one core sign suffices
        } else {
            sphere_grid(a_dim, spacing_a, RAY_BUDGET)?.len()
        };
        let nb = sphere_grid(b_dim, spacing_b, RAY_BUDGET)?.len();
        if na.saturating_mul(nb) <= RAY_BUDGET {
            break;
        }
        if na >= nb {
            spacing_a *= 2.0;
        } else {
            spacing_b *= 2.0;
        }
    }
    let a_grid = if a_dim == 0 {
        vec![DVector::from_column_slice(&[1.0])]
    } else {
        sphere_grid(a_dim, spacing_a, RAY_BUDGET)?
    };
    let b_grid = sphere_grid(b_dim, spacing_b, RAY_BUDGET)?;

    let mut best = f64::NEG_INFINITY;
    let mut best_pair = (a_grid[0].clone(), b_grid[0].clone());
    for a in &a_grid {
        for b in &b_grid {
            let r = ratio(&ray(a, b));
            if r > best {
                best = r;
                best_pair = (a.clone(), b.clone());
            }
        }
    }
    if !best.is_finite() {
        return Ok(best);
    }

    // refinement: ternary search on each spherical angle of each factor
    let mut a_angles = sphere_angles(a_dim, &best_pair.0);
    let mut b_angles = sphere_angles(b_dim, &best_pair.1);
    for _ in 0..3 {
        for idx in 0..a_angles.len() {
            if a_dim == 0 {
                continue;
            }
            refine_angle(&mut a_angles, idx, spacing_a, |ang| {
                ratio(&ray(&sphere_point(a_dim, ang), &sphere_point(b_dim, &b_angles)))
            });
        }
        for idx in 0..b_angles.len() {
            if b_dim == 0 {
                continue;
            }
            let a_point = sphere_point(a_dim, &a_angles);
            refine_angle(&mut b_angles, idx, spacing_b, |ang| {
                ratio(&ray(&a_point, &sphere_point(b_dim, ang)))
            });
        }
    }
    let refined = ratio(&ray(
        &sphere_point(a_dim, &a_angles),
        &sphere_point(b_dim, &b_angles),
    ));
    Ok(best.max(refined))
}

fn refine_angle(angles: &mut [f64], idx: usize, width: f64, mut value: impl FnMut(&[f64]) -> f64) {
    let mut lo = angles[idx] - width;
    let mut hi = angles[idx] + width;
    for _ in 0..60 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        let mut probe = angles.to_vec();
        probe[idx] = m1;
        let v1 = value(&probe);
        probe[idx] = m2;
        let v2 = value(&probe);
        if v1 < v2 {
            lo = m1;
        } else {
            hi = m2;
        }
    }
    angles[idx] = 0.5 * (lo + hi);
}

/// Smallest cone of the same core dimension at m(p) containing the image of
/// the cone under the differential: core is Df E re-orthonormalized,
/// aperture the maximized off/on ratio over the whole image.
pub fn push_forward_cone(
    map: &dyn DynamicalMap,
    p: &TorusPoint,
    cone: &Cone,
) -> Result<Cone> {
    let df = map.differential(p);
    let pushed_core = Subspace::from_matrix(&df * cone.core.basis())?;
    let aperture = pushed_aperture_into(&df, cone, &pushed_core);
    if !aperture.is_finite() {
        return Err(CoreError::Indeterminate(
            "image of the cone meets the orthogonal complement of its pushed core".into(),
        ));
    }
    Cone::new(pushed_core, aperture)
}

// ---------------------------------------------------------------------------
// cone fields and invariance

/// Cone field over a region: cores anchored at finitely many points (nearest
/// anchor wins; ties resolved by index), constant aperture.
#[derive(Debug, Clone)]
pub struct ConeField {
    anchors: Vec<(TorusPoint, Subspace)>,
    aperture: f64,
}

impl ConeField {
    pub fn new(anchors: Vec<(TorusPoint, Subspace)>, aperture: f64) -> Result<ConeField> {
        if anchors.is_empty() {
            return Err(CoreError::parameter("cone field needs at least one anchor"));
        }
        if !(aperture > 0.0 && aperture < 1.0) {
            return Err(CoreError::parameter(format!(
                "cone field aperture must lie in (0,1), got {aperture}"
            )));
        }
        let k = anchors[0].1.dim();
        if anchors.iter().any(|(_, s)| s.dim() != k) {
            return Err(CoreError::parameter("anchor core dimensions differ"));
        }
        Ok(ConeField { anchors, aperture })
    }

    pub fn constant(anchor: TorusPoint, core: Subspace, aperture: f64) -> Result<ConeField> {
        Self::new(vec![(anchor, core)], aperture)
    }

    pub fn aperture(&self) -> f64 {
        self.aperture
    }

    pub fn core_at(&self, p: &TorusPoint) -> &Subspace {
        let mut best = 0;
        let mut best_dist = f64::INFINITY;
        for (i, (anchor, _)) in self.anchors.iter().enumerate() {
            let dist = anchor.dist(p);
            if dist < best_dist {
                best_dist = dist;
                best = i;
            }
        }
        &self.anchors[best].1
    }

    pub fn cone_at(&self, p: &TorusPoint) -> Cone {
        Cone::new(self.core_at(p).clone(), self.aperture).expect("validated at construction")
    }
}

/// Min over the sample of (aperture - pushed aperture into the cone at the
/// image point). Positive means strict invariance, zero is the non-strict
/// boundary case.
pub fn check_invariance(
    field: &ConeField,
    map: &dyn DynamicalMap,
    points: &[TorusPoint],
) -> f64 {
    points
        .iter()
        .map(|p| {
            let df = map.differential(p);
            let source = field.cone_at(p);
            let target_core = field.core_at(&map.eval(p));
            field.aperture - pushed_aperture_into(&df, &source, target_core)
        })
        .fold(f64::INFINITY, f64::min)
}

// ---------------------------------------------------------------------------
// splittings by power iteration

/// Fixed generic orthonormal seed frame. Coordinate axes are unusable as
/// seeds: product maps keep coordinate planes exactly invariant, so a frame
/// started inside one never leaves it and the iteration converges to the
/// wrong subspace with zero drift. A frozen random rotation avoids every
/// such plane while keeping runs reproducible.
fn generic_seed_frame(d: usize, k: usize) -> DMatrix<f64> {
    let cols = crate::torus::unit_sphere_points(d, k, 0x5EED_CA7);
    let seed = DMatrix::from_fn(d, k, |i, j| cols[j][i]);
    seed.qr().q().columns(0, k).into_owned()
}

fn propagate_expanding_frame(
    map: &dyn DynamicalMap,
    x: &TorusPoint,
    dim: usize,
    depth: usize,
) -> Result<Subspace> {
    let orbit = crate::maps::backward_orbit(map, x, depth)?;
    let mut frame = generic_seed_frame(map.dim(), dim);
    for j in (1..=depth).rev() {
        let pushed = map.differential(&orbit[j]) * frame;
        let qr = pushed.qr();
        // rank collapse means the seed axes were unluckily degenerate
        let r = qr.r();
        for i in 0..dim {
            if r[(i, i)].abs() < 1e-250 {
                return Err(CoreError::NonConvergence {
                    context: "expanding-frame propagation lost rank".into(),
                    residual: r[(i, i)].abs(),
                });
            }
        }
        frame = qr.q().columns(0, dim).into_owned();
    }
    Ok(Subspace::from_matrix(frame)?)
}

/// Dominant invariant subspace of dimension `dim` at x: frames seeded on
/// coordinate axes deep in the backward orbit and pushed forward with
/// re-orthonormalization, deepening until two checkpoints agree.
pub fn expanding_subspace(
    map: &dyn DynamicalMap,
    x: &TorusPoint,
    dim: usize,
) -> Result<Subspace> {
    let depths = [24usize, 48, 96, 192, 384];
    let mut prev: Option<Subspace> = None;
    let mut best_drift = f64::INFINITY;
    let mut best: Option<Subspace> = None;
    for &depth in &depths {
        let frame = propagate_expanding_frame(map, x, dim, depth)?;
        if let Some(prev_frame) = &prev {
            let drift = (frame.projector() - prev_frame.projector())
                .svd(false, false)
                .singular_values
                .max();
            if drift <= POWER_TOL {
                return Ok(frame);
            }
            if drift < best_drift {
                best_drift = drift;
                best = Some(frame.clone());
            }
        }
        prev = Some(frame);
    }
    if best_drift <= POWER_TOL_FALLBACK {
        Ok(best.expect("drift recorded"))
    } else {
        Err(CoreError::NonConvergence {
            context: "subspace power iteration".into(),
            residual: best_drift,
        })
    }
}

/// Splitting with the requested dimensions at x. The center is the
/// principal intersection of the forward dominated (u+c) and backward
/// dominated (c+s) subspaces.
pub fn compute_splitting(
    map: &dyn DynamicalMap,
    x: &TorusPoint,
    dims: (usize, usize, usize),
) -> Result<Splitting> {
    let (u, c, s) = dims;
    let d = map.dim();
    if u + c + s != d || u == 0 || s == 0 {
        return Err(CoreError::parameter(format!(
            "splitting dims ({u},{c},{s}) invalid for dimension {d}"
        )));
    }
    let inverse = Inverted::new(map);
    let unstable = expanding_subspace(map, x, u)?;
    let stable = expanding_subspace(&inverse, x, s)?;
    let center = if c == 0 {
        Subspace::empty(d)
    } else {
        let forward_dominated = expanding_subspace(map, x, u + c)?;
        let backward_dominated = expanding_subspace(&inverse, x, s + c)?;
        let center = forward_dominated.intersect(&backward_dominated, CENTER_COS_TOL);
        if center.dim() != c {
            return Err(CoreError::NonConvergence {
                context: format!(
                    "center intersection has dimension {} (expected {c})",
                    center.dim()
                ),
                residual: f64::NAN,
            });
        }
        center
    };
    Splitting::new(unstable, center, stable)
}

// ---------------------------------------------------------------------------
// the certificate

#[derive(Debug, Clone, Serialize)]
pub struct PHCertificate {
    pub map: String,
    pub params: String,
    pub region: String,
    pub grid: usize,
    pub dims: [usize; 3],
    pub apertures: [f64; 3],
    #[serde(rename = "N")]
    pub n: u32,
    /// Margins of the four inequalities (center comparisons absent for a
    /// trivial center): worst case over the grid and over cone rays.
    pub margins: [Option<f64>; 4],
    pub pass: bool,
    /// On failure, names the tightest inequality and where it failed.
    pub violated: Option<String>,
}

#[derive(Debug, Clone)]
pub struct CertifyConfig {
    pub grid_res: usize,
    pub n_max: u32,
    pub dims: (usize, usize, usize),
    /// Apertures for C^u, C^c, C^s.
    pub apertures: [f64; 3],
    /// A trivial center turns the check into a plain Anosov test; opt in
    /// explicitly so dims typos fail loudly.
    pub allow_trivial_center: bool,
    /// Use this splitting at every grid point instead of recomputing one
    /// per point (appropriate for maps with constant bundles).
    pub splitting: Option<Splitting>,
    pub exec: ExecMode,
}

impl CertifyConfig {
    pub fn new(grid_res: usize, n_max: u32, dims: (usize, usize, usize)) -> CertifyConfig {
        CertifyConfig {
            grid_res,
            n_max,
            dims,
            apertures: [0.01, 0.01, 0.01],
            allow_trivial_center: false,
            splitting: None,
            exec: ExecMode::Auto,
        }
    }
}

struct PointMargins {
    values: [Option<f64>; 4],
}

fn point_margins(
    map: &dyn DynamicalMap,
    x: &TorusPoint,
    splitting: &Splitting,
    n: u32,
    apertures: &[f64; 3],
) -> Result<PointMargins> {
    let fwd = forward_cocycle(map, x, n as usize);
    let bwd = backward_cocycle(map, x, n as usize)?;
    let cone_u = Cone::new(splitting.unstable().clone(), apertures[0])?;
    let cone_s = Cone::new(splitting.stable().clone(), apertures[2])?;
    let (min_u, _) = cone_norm_bounds(&fwd, &cone_u);
    let (_, max_s) = cone_norm_bounds(&fwd, &cone_s);
    let (_, max_u_back) = cone_norm_bounds(&bwd, &cone_u);
    let m3 = 0.5 - max_s;
    let m4 = 0.5 - max_u_back;
    if splitting.center().dim() == 0 {
        return Ok(PointMargins {
            values: [None, None, Some(m3), Some(m4)],
        });
    }
    let cone_c = Cone::new(splitting.center().clone(), apertures[1])?;
    let (min_c, max_c) = cone_norm_bounds(&fwd, &cone_c);
    let m1 = 0.5 * min_c - max_s;
    let m2 = 0.25 * min_u - 0.5 * max_c;
    Ok(PointMargins {
        values: [Some(m1), Some(m2), Some(m3), Some(m4)],
    })
}

fn merge_min(acc: &mut [Option<(f64, usize)>; 4], values: &[Option<f64>; 4], idx: usize) {
    for (slot, v) in acc.iter_mut().zip(values.iter()) {
        if let Some(v) = v {
            match slot {
                Some((cur, _)) if *cur <= *v => {}
                _ => *slot = Some((*v, idx)),
            }
        }
    }
}

/// Grid-sampled partial-hyperbolicity certificate: the least N <= n_max for
/// which all four cone-worst-case inequalities hold at every lattice point,
/// or a failure report for N = n_max.
pub fn certify_ph(map: &dyn DynamicalMap, cfg: &CertifyConfig) -> Result<PHCertificate> {
    if cfg.grid_res == 0 || cfg.n_max == 0 {
        return Err(CoreError::parameter("grid resolution and n_max must be positive"));
    }
    if cfg.dims.1 == 0 && !cfg.allow_trivial_center {
        return Err(CoreError::parameter(
            "trivial center requested; set allow_trivial_center for the Anosov reduction",
        ));
    }
    let d = map.dim();
    let grid = UnitGrid::new(d, cfg.grid_res);
    let points: Vec<TorusPoint> = (0..grid.len())
        .map(|i| TorusPoint::from_slice(&grid.point(i)))
        .collect();

    let resolved: Vec<Splitting> = match &cfg.splitting {
        Some(s) => {
            if s.dims() != cfg.dims {
                return Err(CoreError::parameter("supplied splitting dims mismatch"));
            }
            vec![s.clone(); points.len()]
        }
        None => {
            let computed: Vec<Result<Splitting>> = map_indexed(cfg.exec, points.len(), |i| {
                compute_splitting(map, &points[i], cfg.dims)
            });
            let mut resolved = Vec::with_capacity(points.len());
            for s in computed {
                resolved.push(s?);
            }
            resolved
        }
    };

    let region = format!("T^{d} full torus");
    let mut last_margins: [Option<f64>; 4] = [None; 4];
    let mut last_violated = None;
    for n in 1..=cfg.n_max {
        let per_point: Vec<Result<PointMargins>> =
            map_indexed(cfg.exec, points.len(), |i| {
                point_margins(map, &points[i], &resolved[i], n, &cfg.apertures)
            });
        let mut acc: [Option<(f64, usize)>; 4] = [None; 4];
        for (i, pm) in per_point.into_iter().enumerate() {
            merge_min(&mut acc, &pm?.values, i);
        }
        let margins = acc.map(|slot| slot.map(|(v, _)| v));
        let pass = margins.iter().flatten().all(|&m| m > 0.0);
        if pass {
            return Ok(PHCertificate {
                map: map.name(),
                params: format!("apertures={:?}", cfg.apertures),
                region,
                grid: cfg.grid_res,
                dims: [cfg.dims.0, cfg.dims.1, cfg.dims.2],
                apertures: cfg.apertures,
                n,
                margins,
                pass: true,
                violated: None,
            });
        }
        let names = ["center-over-stable", "unstable-over-center", "stable-contraction", "unstable-backward-contraction"];
        let worst = acc
            .iter()
            .enumerate()
            .filter_map(|(k, slot)| slot.map(|(v, i)| (v, k, i)))
            .fold((f64::INFINITY, 0, 0), |best, cur| {
                if cur.0 < best.0 {
                    cur
                } else {
                    best
                }
            });
        last_margins = margins;
        last_violated = Some(format!(
            "{} at grid point {}",
            names[worst.1], points[worst.2]
        ));
    }
    Ok(PHCertificate {
        map: map.name(),
        params: format!("apertures={:?}", cfg.apertures),
        region,
        grid: cfg.grid_res,
        dims: [cfg.dims.0, cfg.dims.1, cfg.dims.2],
        apertures: cfg.apertures,
        n: cfg.n_max,
        margins: last_margins,
        pass: false,
        violated: last_violated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::{CatSkew3, TorusAutomorphism};
    use crate::torus::unit_sphere_points;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const EXACT: f64 = 1e-9;

    fn axis(d: usize, i: usize) -> DVector<f64> {
        let mut v = DVector::zeros(d);
        v[i] = 1.0;
        v
    }

    /// Unit eigenvectors of the cat matrix, unstable then stable.
    fn cat_eigenframe() -> (DVector<f64>, DVector<f64>, f64, f64) {
        let lam_u = (3.0 + 5.0f64.sqrt()) / 2.0;
        let lam_s = (3.0 - 5.0f64.sqrt()) / 2.0;
        let vu = DVector::from_column_slice(&[1.0, (5.0f64.sqrt() - 1.0) / 2.0]).normalize();
        let vs = DVector::from_column_slice(&[1.0, -(5.0f64.sqrt() + 1.0) / 2.0]).normalize();
        (vu, vs, lam_u, lam_s)
    }

    #[test]
    fn membership_basic_cases() {
        let core = Subspace::line(&axis(2, 0)).unwrap();
        let cone = Cone::new(core, 0.5).unwrap();
        assert!(cone.contains(&axis(2, 0)).unwrap());
        assert!(!cone.contains(&axis(2, 1)).unwrap());
        assert!(cone
            .contains(&DVector::from_column_slice(&[2.0, 1.0]))
            .unwrap());
        assert!(cone.contains(&DVector::from_column_slice(&[0.0, 0.0])).is_err());
        // scaling closure and aperture monotonicity
        let v = DVector::from_column_slice(&[1.0, 0.49]);
        for t in [-3.0, -0.5, 0.25, 7.0] {
            assert_eq!(
                cone.contains(&v).unwrap(),
                cone.contains(&(&v * t)).unwrap()
            );
        }
        let wider = Cone::new(cone.core().clone(), 0.8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        for _ in 0..200 {
            let v = DVector::from_fn(2, |_, _| rng.random::<f64>() - 0.5);
            if v.norm() < 1e-3 {
                continue;
            }
            if cone.contains(&v).unwrap() {
                assert!(wider.contains(&v).unwrap());
            }
        }
    }

    #[test]
    fn cone_sup_matches_closed_form() {
        // diagonal form, core = e1: the max over the cone is attained on
        // the core or on the boundary mixed with the largest transverse
        // eigenvalue
        let mut rng = ChaCha8Rng::seed_from_u64(72);
        for _ in 0..40 {
            let d = 3 + (rng.random::<u64>() % 2) as usize;
            let gamma = 0.05 + 0.6 * rng.random::<f64>();
            let diag: Vec<f64> = (0..d).map(|_| 4.0 * rng.random::<f64>() - 2.0).collect();
            let s = DMatrix::from_diagonal(&DVector::from_vec(diag.clone()));
            let cone = Cone::new(Subspace::line(&axis(d, 0)).unwrap(), gamma).unwrap();
            let transverse_max = diag[1..].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let g2 = gamma * gamma;
            let expected = ((diag[0] + g2 * transverse_max) / (1.0 + g2)).max(diag[0]);
            let got = cone_sup_quadratic(&s, &cone);
            assert!(
                (got - expected).abs() < 1e-9,
                "sup mismatch: got {got}, expected {expected}"
            );
            let expected_min =
                ((diag[0] + g2 * diag[1..].iter().cloned().fold(f64::INFINITY, f64::min))
                    / (1.0 + g2))
                    .min(diag[0]);
            let got_min = cone_inf_quadratic(&s, &cone);
            assert!((got_min - expected_min).abs() < 1e-9);
        }
    }

    #[test]
    fn cone_sup_dominates_dense_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(73);
        for d in [3usize, 4] {
            for _ in 0..10 {
                let core = Subspace::line(
                    &DVector::from_fn(d, |_, _| rng.random::<f64>() - 0.5).normalize(),
                )
                .unwrap();
                let gamma = 0.1 + 0.4 * rng.random::<f64>();
                let cone = Cone::new(core.clone(), gamma).unwrap();
                let raw = DMatrix::from_fn(d, d, |_, _| rng.random::<f64>() - 0.5);
                let s = &raw + raw.transpose();
                let sup = cone_sup_quadratic(&s, &cone);
                let comp = core.complement();
                let mut seen = f64::NEG_INFINITY;
                for b in unit_sphere_points(d - 1, 600, rng.random()) {
                    for t in [0.0, 0.3, 0.7, 1.0] {
                        let v = (core.basis_vector(0) + comp.basis() * &b * (gamma * t))
                            .normalize();
                        seen = seen.max((v.transpose() * &s * &v)[(0, 0)]);
                    }
                }
                assert!(sup >= seen - 1e-9, "S-procedure bound violated");
                assert!(sup <= seen + 0.05 * s.norm(), "bound far from attained");
            }
        }
    }

    #[test]
    fn push_forward_on_cat_eigenlines() {
        let cat = TorusAutomorphism::cat2();
        let p = TorusPoint::from_slice(&[0.37, 0.11]);
        let (vu, vs, lam_u, lam_s) = cat_eigenframe();

        for gamma in [0.1, 0.3] {
            let cone = Cone::new(Subspace::line(&vu).unwrap(), gamma).unwrap();
            let pushed = push_forward_cone(&cat, &p, &cone).unwrap();
            // orthogonal eigenframe: exact contraction factor lam_s/lam_u
            let expected = gamma * lam_s / lam_u;
            assert!(pushed.aperture() < gamma);
            assert!(
                (pushed.aperture() - expected).abs() < 1e-6,
                "got {}, expected {expected}",
                pushed.aperture()
            );
            assert!(pushed.core().principal_cosine(cone.core()) > 1.0 - 1e-12);
        }

        let stable_cone = Cone::new(Subspace::line(&vs).unwrap(), 0.1).unwrap();
        let pushed = push_forward_cone(&cat, &p, &stable_cone).unwrap();
        assert!(pushed.aperture() > 0.1);
        assert!((pushed.aperture() - 0.1 * lam_u / lam_s).abs() < 1e-6);

        let id = TorusAutomorphism::identity(2);
        let same = push_forward_cone(&id, &p, &stable_cone).unwrap();
        assert!((same.aperture() - 0.1).abs() < 1e-9);
    }

    fn random_orthonormal(d: usize, seed: u64) -> DMatrix<f64> {
        let cols = unit_sphere_points(d, d, seed);
        let g = DMatrix::from_fn(d, d, |i, j| cols[j][i]);
        g.qr().q()
    }

    #[test]
    fn sampled_and_exact_pushed_apertures_agree() {
        // M = Q2 D Q1' with the core spanned by Q1's leading columns: the
        // maximal ratio has the closed form gamma * max(D_perp) / min(D_core)
        // and is attained on the cone boundary, so both paths must find it
        let mut rng = ChaCha8Rng::seed_from_u64(74);
        for d in [2usize, 3, 4] {
            for trial in 0..6 {
                let k = 1 + (rng.random::<u64>() as usize) % (d - 1);
                let q1 = random_orthonormal(d, 1000 + 10 * d as u64 + trial);
                let q2 = random_orthonormal(d, 2000 + 10 * d as u64 + trial);
                let diag: Vec<f64> = (0..d).map(|_| 0.3 + 2.0 * rng.random::<f64>()).collect();
                let m = &q2 * DMatrix::from_diagonal(&DVector::from_vec(diag.clone())) * q1.transpose();
                let core_cols: Vec<DVector<f64>> =
                    (0..k).map(|j| q1.column(j).into_owned()).collect();
                let core = Subspace::span(&core_cols).unwrap();
                let gamma = 0.05 + 0.3 * rng.random::<f64>();
                let cone = Cone::new(core, gamma).unwrap();
                let target = Subspace::from_matrix(&m * cone.core().basis()).unwrap();
                let expected = gamma
                    * diag[k..].iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                    / diag[..k].iter().cloned().fold(f64::INFINITY, f64::min);
                let exact = pushed_aperture_into(&m, &cone, &target);
                let sampled = boundary_ray_aperture(&m, &cone, &target).unwrap();
                assert!(
                    (exact - expected).abs() < 1e-9 * (1.0 + expected),
                    "d={d} k={k}: exact {exact} vs closed form {expected}"
                );
                assert!(
                    (sampled - expected).abs() < 5e-3 * (1.0 + expected),
                    "d={d} k={k}: sampled {sampled} vs closed form {expected}"
                );
            }
        }
        // on arbitrary matrices the boundary sweep is a lower bound
        for d in [3usize, 4] {
            for _ in 0..6 {
                let k = 1 + (rng.random::<u64>() as usize) % (d - 1);
                let cols: Vec<DVector<f64>> = (0..k)
                    .map(|_| DVector::from_fn(d, |_, _| rng.random::<f64>() - 0.5))
                    .collect();
                let core = match Subspace::span(&cols) {
                    Ok(s) => s,
                    Err(_) => continue,
                };
                let cone = Cone::new(core, 0.05 + 0.3 * rng.random::<f64>()).unwrap();
                let m = DMatrix::from_fn(d, d, |_, _| 2.0 * rng.random::<f64>() - 1.0);
                if m.determinant().abs() < 0.05 {
                    continue;
                }
                let target = Subspace::from_matrix(&m * cone.core().basis()).unwrap();
                let sampled = boundary_ray_aperture(&m, &cone, &target).unwrap();
                let exact = pushed_aperture_into(&m, &cone, &target);
                assert!(
                    sampled <= exact * (1.0 + 1e-9) + 1e-12,
                    "boundary sweep exceeded the full-cone bound: {sampled} > {exact}"
                );
            }
        }
    }

    #[test]
    fn invariance_margins_have_expected_signs() {
        let (vu, vs, _, _) = cat_eigenframe();
        let cat = TorusAutomorphism::cat2();
        let anchor = TorusPoint::origin(2);
        let points: Vec<TorusPoint> = (0..16)
            .map(|i| TorusPoint::from_slice(&[(i % 4) as f64 / 4.0, (i / 4) as f64 / 4.0]))
            .collect();

        // unstable cone strictly invariant under the cat map
        let vu3 = DVector::from_column_slice(&[vu[0], vu[1], 0.0]);
        let skew = CatSkew3::linear();
        let field_u3 = ConeField::constant(
            TorusPoint::origin(3),
            Subspace::line(&vu3).unwrap(),
            0.2,
        )
        .unwrap();
        let pts3: Vec<TorusPoint> = (0..27)
            .map(|i| {
                TorusPoint::from_slice(&[
                    (i % 3) as f64 / 3.0,
                    ((i / 3) % 3) as f64 / 3.0,
                    (i / 9) as f64 / 3.0,
                ])
            })
            .collect();
        assert!(check_invariance(&field_u3, &skew, &pts3) > 0.0);

        // stable cone is not forward invariant
        let field_s = ConeField::constant(anchor.clone(), Subspace::line(&vs).unwrap(), 0.1)
            .unwrap();
        assert!(check_invariance(&field_s, &cat, &points) < 0.0);

        // identity map sits exactly on the boundary
        let id = TorusAutomorphism::identity(2);
        let field_u = ConeField::constant(anchor, Subspace::line(&vu).unwrap(), 0.2).unwrap();
        let margin = check_invariance(&field_u, &id, &points);
        assert!(margin.abs() < 1e-9, "identity margin {margin}");
    }

    #[test]
    fn splittings_match_closed_forms() {
        // product case: exact eigendirections
        let skew = CatSkew3::linear();
        let (vu, vs, _, _) = cat_eigenframe();
        let p = TorusPoint::from_slice(&[0.123, 0.456, 0.789]);
        let s = compute_splitting(&skew, &p, (1, 1, 1)).unwrap();
        let vu3 = Subspace::line(&DVector::from_column_slice(&[vu[0], vu[1], 0.0])).unwrap();
        let vs3 = Subspace::line(&DVector::from_column_slice(&[vs[0], vs[1], 0.0])).unwrap();
        let ez = Subspace::line(&axis(3, 2)).unwrap();
        assert!(s.unstable().principal_cosine(&vu3) > 1.0 - 1e-12);
        assert!(s.stable().principal_cosine(&vs3) > 1.0 - 1e-12);
        assert!(s.center().principal_cosine(&ez) > 1.0 - 1e-12);

        // skew case: center stays exact, u/s tilt into the fiber with the
        // closed-form coefficient at the fixed point
        let kappa = 0.3;
        let skew = CatSkew3::new(kappa);
        let origin = TorusPoint::origin(3);
        let s = compute_splitting(&skew, &origin, (1, 1, 1)).unwrap();
        assert!(s.center().principal_cosine(&ez) > 1.0 - 1e-12);
        let lam_u = (3.0 + 5.0f64.sqrt()) / 2.0;
        let lam_s = (3.0 - 5.0f64.sqrt()) / 2.0;
        let zeta = kappa * vu[0] / (lam_u - 1.0);
        let xi = kappa * vs[0] / (lam_s - 1.0);
        let eu_expected =
            Subspace::line(&DVector::from_column_slice(&[vu[0], vu[1], zeta])).unwrap();
        let es_expected =
            Subspace::line(&DVector::from_column_slice(&[vs[0], vs[1], xi])).unwrap();
        assert!(
            s.unstable().principal_cosine(&eu_expected) > 1.0 - 1e-10,
            "unstable tilt mismatch"
        );
        assert!(
            s.stable().principal_cosine(&es_expected) > 1.0 - 1e-10,
            "stable tilt mismatch"
        );
    }

    #[test]
    fn splittings_are_invariant_under_the_map() {
        let mut rng = ChaCha8Rng::seed_from_u64(75);
        let maps: Vec<Box<dyn DynamicalMap>> = vec![
            Box::new(CatSkew3::new(0.3)),
            Box::new(crate::maps::CoupledCat4::new(0.05)),
        ];
        let dims = [(1usize, 1usize, 1usize), (1, 2, 1)];
        for (map, &dim) in maps.iter().zip(dims.iter()) {
            for _ in 0..5 {
                let d = map.dim();
                let x = TorusPoint::new(DVector::from_fn(d, |_, _| rng.random::<f64>()));
                let here = compute_splitting(map.as_ref(), &x, dim).unwrap();
                let there = compute_splitting(map.as_ref(), &map.eval(&x), dim).unwrap();
                let df = map.differential(&x);
                for (a, b) in [
                    (here.unstable(), there.unstable()),
                    (here.center(), there.center()),
                    (here.stable(), there.stable()),
                ] {
                    if a.dim() == 0 {
                        continue;
                    }
                    let pushed = Subspace::from_matrix(&df * a.basis()).unwrap();
                    assert!(
                        pushed.principal_cosine(b) > 1.0 - 1e-9,
                        "bundle not invariant for {}",
                        map.name()
                    );
                }
                // transverse but not orthogonal: the skew tilts the fast
                // bundles out of the coordinate planes by O(kappa)
                assert!(here.projection_defect().unwrap() < 0.6);
            }
        }
    }

    /// Closed-form margins for the product map: eigenframe orthonormal, so
    /// the cone extremals are two-term mixtures.
    fn linear_skew_margins(n: u32, gamma: f64) -> [f64; 4] {
        let lam_u = ((3.0 + 5.0f64.sqrt()) / 2.0).powi(n as i32);
        let lam_s = ((3.0 - 5.0f64.sqrt()) / 2.0).powi(n as i32);
        let g2 = gamma * gamma;
        let norm = 1.0 + g2;
        let max_s = ((lam_s * lam_s + g2 * lam_u * lam_u) / norm).sqrt();
        let min_c = ((1.0 + g2 * lam_s * lam_s) / norm).sqrt();
        let max_c = ((1.0 + g2 * lam_u * lam_u) / norm).sqrt();
        let min_u = ((lam_u * lam_u + g2 * lam_s * lam_s) / norm).sqrt();
        let max_u_back = ((1.0 / (lam_u * lam_u) + g2 / (lam_s * lam_s)) / norm).sqrt();
        [
            0.5 * min_c - max_s,
            0.25 * min_u - 0.5 * max_c,
            0.5 - max_s,
            0.5 - max_u_back,
        ]
    }

    #[test]
    fn certificate_matches_eigen_oracle_on_product_map() {
        let skew = CatSkew3::linear();
        let mut cfg = CertifyConfig::new(4, 3, (1, 1, 1));
        cfg.apertures = [0.01, 0.01, 0.01];
        let cert = certify_ph(&skew, &cfg).unwrap();
        assert!(cert.pass);
        assert_eq!(cert.n, 1);
        let expected = linear_skew_margins(1, 0.01);
        for (got, want) in cert.margins.iter().zip(expected.iter()) {
            let got = got.expect("nontrivial center margins");
            assert!(
                (got - want).abs() < EXACT,
                "margin mismatch: {got} vs {want}"
            );
        }
    }

    #[test]
    fn nested_iterates_do_not_shrink_margins() {
        // holds while the aperture leakage gamma * (lam_u/lam_s)^n stays
        // subdominant; a cone of fixed aperture around E^s picks up an
        // expanding component that eventually grows the extremal norms again
        for n in 1..3u32 {
            let a = linear_skew_margins(n, 1e-3);
            let b = linear_skew_margins(n + 1, 1e-3);
            for (x, y) in a.iter().zip(b.iter()) {
                assert!(y >= x, "margin shrank from {x} to {y} at n={n}");
            }
        }
        // at the working aperture the first certifying step still improves
        let a = linear_skew_margins(1, 0.01);
        let b = linear_skew_margins(2, 0.01);
        assert!(a.iter().all(|m| *m > 0.0));
        for (x, y) in a.iter().zip(b.iter()) {
            assert!(y >= x);
        }
    }

    #[test]
    fn skew_map_certifies_within_three_iterates() {
        let skew = CatSkew3::new(0.3);
        let mut cfg = CertifyConfig::new(8, 3, (1, 1, 1));
        cfg.apertures = [0.01, 0.01, 0.01];
        let cert = certify_ph(&skew, &cfg).unwrap();
        assert!(cert.pass, "certificate failed: {:?}", cert.violated);
        assert!(cert.n <= 3);
    }

    #[test]
    fn coupled_map_certifies_at_one_iterate() {
        let map = crate::maps::CoupledCat4::new(0.05);
        let mut cfg = CertifyConfig::new(4, 2, (1, 2, 1));
        cfg.apertures = [0.01, 0.01, 0.01];
        let cert = certify_ph(&map, &cfg).unwrap();
        assert!(cert.pass, "certificate failed: {:?}", cert.violated);
        assert_eq!(cert.n, 1);
    }

    #[test]
    fn anosov_check_with_trivial_center() {
        let cat = TorusAutomorphism::cat2();
        let mut cfg = CertifyConfig::new(4, 2, (1, 0, 1));
        cfg.apertures = [0.01, 0.01, 0.01];
        assert!(matches!(
            certify_ph(&cat, &cfg),
            Err(CoreError::Parameter(_))
        ));
        cfg.allow_trivial_center = true;
        let cert = certify_ph(&cat, &cfg).unwrap();
        assert!(cert.pass);
        assert_eq!(cert.n, 1);
        assert!(cert.margins[0].is_none() && cert.margins[1].is_none());
        assert!(cert.margins[2].unwrap() > 0.0 && cert.margins[3].unwrap() > 0.0);
    }

    #[test]
    fn failure_reports_name_the_inequality() {
        // a cone this wide around E^s contains expanding directions, so the
        // contraction inequalities fail at every iterate
        let cat = TorusAutomorphism::cat2();
        let mut cfg = CertifyConfig::new(2, 2, (1, 0, 1));
        cfg.apertures = [0.9, 0.9, 0.9];
        cfg.allow_trivial_center = true;
        let cert = certify_ph(&cat, &cfg).unwrap();
        assert!(!cert.pass);
        assert_eq!(cert.n, 2);
        assert!(cert.violated.as_deref().unwrap_or("").contains("contraction"));
        let json = serde_json::to_string(&cert).unwrap();
        assert!(json.contains("\"margins\"") && json.contains("\"N\":2"));

        // maps without a dominated direction have no splitting at all
        let id = TorusAutomorphism::identity(2);
        let err = compute_splitting(&id, &TorusPoint::origin(2), (1, 0, 1));
        assert!(err.is_err());
    }
}
