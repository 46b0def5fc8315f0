//! Elementary compactly supported perturbations: a bump-profile vector field
//! flown for a short time inside one chart, in plain, volume-preserving, and
//! symplectic variants, plus C0/C1 distance estimators between maps.
//!
//! The field is X(x) = r F((x - z)/r) with F built from the profile, so the
//! whole construction is equivariant under homotheties: C1 size is scale
//! free and C0 size scales with r. Inside the plateau the flow is an exact
//! translation; outside radius 2.9 r the map returns its input bitwise.

use crate::maps::{symplectic_form, DynamicalMap, Preservation};
use crate::torus::{unit_sphere_points, Chart, Subspace, TorusPoint};
use crate::{CoreError, Result};
use nalgebra::{DMatrix, DVector};
use std::sync::OnceLock;

/// Chart radius used for all perturbation charts.
pub const CHART_RADIUS: f64 = 0.25;
/// Profile is identically 1 up to here (scaled by r).
const PLATEAU_END: f64 = 2.2;
/// Profile vanishes from here on; strictly inside the nominal support 3r.
const SUPPORT_END: f64 = 2.9;
/// Safety factor between the measured C1 growth rate and the flow constant.
const ETA_SAFETY: f64 = 0.95;
/// Fixed-point tolerance for implicit integrator stages.
const STAGE_TOL: f64 = 1e-15;
/// Number of integrator steps for one perturbation flow.
const FLOW_STEPS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum PerturbationMode {
    Plain,
    Volume,
    Symplectic,
}

impl PerturbationMode {
    pub fn preservation(self) -> Preservation {
        match self {
            PerturbationMode::Plain => Preservation::None,
            PerturbationMode::Volume => Preservation::Volume,
            PerturbationMode::Symplectic => Preservation::Symplectic,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            PerturbationMode::Plain => "plain",
            PerturbationMode::Volume => "volume",
            PerturbationMode::Symplectic => "symplectic",
        }
    }
}

/// Scalar bump profile: quintic smoothstep taper, identically 1 on
/// [0, 2.2], identically 0 from 2.9 on.
#[derive(Debug, Clone, Copy)]
pub struct BumpProfile {
    plateau_end: f64,
    support_end: f64,
}

fn smoothstep(t: f64) -> f64 {
    t * t * t * (10.0 + t * (-15.0 + 6.0 * t))
}

fn smoothstep_d1(t: f64) -> f64 {
    30.0 * t * t * (1.0 - t) * (1.0 - t)
}

fn smoothstep_d2(t: f64) -> f64 {
    60.0 * t * (1.0 - t) * (1.0 - 2.0 * t)
}

impl BumpProfile {
    pub fn quintic() -> BumpProfile {
        BumpProfile {
            plateau_end: PLATEAU_END,
            support_end: SUPPORT_END,
        }
    }

    pub fn plateau_end(&self) -> f64 {
        self.plateau_end
    }

    pub fn support_end(&self) -> f64 {
        self.support_end
    }

    fn taper_width(&self) -> f64 {
        self.support_end - self.plateau_end
    }

    pub fn chi(&self, t: f64) -> f64 {
        if t <= self.plateau_end {
            1.0
        } else if t >= self.support_end {
            0.0
        } else {
            1.0 - smoothstep((t - self.plateau_end) / self.taper_width())
        }
    }

    pub fn chi_d1(&self, t: f64) -> f64 {
        if t <= self.plateau_end || t >= self.support_end {
            0.0
        } else {
            let w = self.taper_width();
            -smoothstep_d1((t - self.plateau_end) / w) / w
        }
    }

    pub fn chi_d2(&self, t: f64) -> f64 {
        if t <= self.plateau_end || t >= self.support_end {
            0.0
        } else {
            let w = self.taper_width();
            -smoothstep_d2((t - self.plateau_end) / w) / (w * w)
        }
    }

    /// Analytic sup of |chi'|; the smoothstep derivative peaks at 15/8.
    pub fn derivative_sup(&self) -> f64 {
        1.875 / self.taper_width()
    }

    fn measured(&self, mode: PerturbationMode, dim: usize) -> (f64, f64) {
        static CACHE: OnceLock<
            std::sync::Mutex<std::collections::BTreeMap<(u8, usize), (f64, f64)>>,
        > = OnceLock::new();
        let cache = CACHE.get_or_init(|| std::sync::Mutex::new(Default::default()));
        let key = (mode as u8, dim);
        if let Some(&v) = cache.lock().unwrap().get(&key) {
            return v;
        }
        let pair = self.measure_rate(mode, dim);
        cache.lock().unwrap().insert(key, pair);
        pair
    }

    /// Measured C1 growth rate of the unit-scale field for this mode and
    /// dimension: sup over the taper shell of the field's Jacobian norm.
    /// Cached per (mode, dim).
    pub fn flow_rate(&self, mode: PerturbationMode, dim: usize) -> f64 {
        self.measured(mode, dim).0
    }

    /// Sup of the unit-scale field magnitude; 1 on the plateau, possibly
    /// larger in the shell because of the structure-preserving corrections.
    pub fn field_sup(&self, mode: PerturbationMode, dim: usize) -> f64 {
        self.measured(mode, dim).1
    }

    /// Flow constant: time eta of the unit-scale flow moves C1 distance by
    /// at most ETA_SAFETY.
    pub fn eta(&self, mode: PerturbationMode, dim: usize) -> f64 {
        ETA_SAFETY / self.flow_rate(mode, dim)
    }

    fn measure_rate(&self, mode: PerturbationMode, dim: usize) -> (f64, f64) {
        let v = {
            let mut e = DVector::zeros(dim);
            e[0] = 1.0;
            e
        };
        let field = UnitField {
            profile: *self,
            mode,
            v: v.clone(),
            j: if mode == PerturbationMode::Symplectic {
                Some(symplectic_form(dim))
            } else {
                None
            },
            dim,
        };
        let radii = 240;
        let mut rate = 0.0f64;
        let mut magnitude = 1.0f64; // plateau value
        let mut eval_dir = |dir: &DVector<f64>| {
            for i in 0..=radii {
                let t = self.plateau_end
                    + self.taper_width() * (i as f64) / (radii as f64);
                let y = dir * t;
                let norm = field
                    .jacobian(&y)
                    .svd(false, false)
                    .singular_values
                    .max();
                if norm > rate {
                    rate = norm;
                }
                let f = field.eval(&y).norm();
                if f > magnitude {
                    magnitude = f;
                }
            }
        };
        match mode {
            // rotations fixing v leave these fields' Jacobian norms
            // unchanged, so a 2-plane sweep is exact
            PerturbationMode::Plain | PerturbationMode::Volume => {
                let sectors = 720;
                for k in 0..=sectors {
                    let theta = std::f64::consts::PI * (k as f64) / (sectors as f64);
                    let mut dir = DVector::zeros(dim);
                    dir[0] = theta.cos();
                    dir[1] = theta.sin();
                    eval_dir(&dir);
                }
                (rate, magnitude)
            }
            // the symplectic pairing breaks rotational symmetry: dense
            // seeded sweep of the sphere, then a small inflation to cover
            // sampling slack
            PerturbationMode::Symplectic => {
                for dir in unit_sphere_points(dim, 6000, 0x5EED) {
                    eval_dir(&dir);
                }
                (rate * 1.03, magnitude * 1.03)
            }
        }
    }
}

/// The unit-scale vector field F and its exact Jacobian.
struct UnitField {
    profile: BumpProfile,
    mode: PerturbationMode,
    v: DVector<f64>,
    j: Option<DMatrix<f64>>,
    dim: usize,
}

impl UnitField {
    fn eval(&self, y: &DVector<f64>) -> DVector<f64> {
        let rho = y.norm();
        let p = &self.profile;
        if rho >= p.support_end {
            return DVector::zeros(self.dim);
        }
        if rho <= p.plateau_end {
            return self.v.clone();
        }
        let chi = p.chi(rho);
        let chi1 = p.chi_d1(rho);
        let u = y / rho;
        match self.mode {
            PerturbationMode::Plain => &self.v * chi,
            PerturbationMode::Volume => {
                // divergence-free by construction: F = div of an
                // antisymmetric two-form potential
                let vu = self.v.dot(&u);
                let tangential = &self.v - &u * vu;
                &self.v * chi + tangential * (rho * chi1 / (self.dim as f64 - 1.0))
            }
            PerturbationMode::Symplectic => {
                // Hamiltonian field of chi(|y|) w(v, y - z)
                let j = self.j.as_ref().unwrap();
                let jy = j * y;
                let phi = self.v.dot(&jy);
                &self.v * chi + &jy * (chi1 / rho * phi)
            }
        }
    }

    fn jacobian(&self, y: &DVector<f64>) -> DMatrix<f64> {
        let d = self.dim;
        let rho = y.norm();
        let p = &self.profile;
        if rho >= p.support_end || rho <= p.plateau_end {
            return DMatrix::zeros(d, d);
        }
        let chi1 = p.chi_d1(rho);
        let chi2 = p.chi_d2(rho);
        let u = y / rho;
        let ut = u.transpose();
        match self.mode {
            PerturbationMode::Plain => &self.v * (ut * chi1),
            PerturbationMode::Volume => {
                let dm1 = d as f64 - 1.0;
                let vu = self.v.dot(&u);
                let tangential = &self.v - &u * vu;
                let a = rho * chi1 / dm1;
                let a_prime = (chi1 + rho * chi2) / dm1;
                let proj = DMatrix::identity(d, d) - &u * &ut;
                // D[(v.u)u] = u v^T proj / rho + (v.u) proj / rho
                let dp = (&u * (self.v.transpose() * &proj) + &proj * vu) / rho;
                &self.v * (&ut * chi1) + &tangential * (&ut * a_prime) - dp * a
            }
            PerturbationMode::Symplectic => {
                let j = self.j.as_ref().unwrap();
                let jy = j * y;
                let phi = self.v.dot(&jy);
                let b = chi1 / rho;
                let b_prime = (chi2 * rho - chi1) / (rho * rho);
                let vtj = self.v.transpose() * j;
                &self.v * (&ut * chi1)
                    + &jy * (&ut * (b_prime * phi))
                    + &jy * (vtj * b)
                    + j * (b * phi)
            }
        }
    }
}

// Gauss-Legendre 2-stage coefficients (order 4, symmetric, symplectic).
const GL_A: [[f64; 2]; 2] = [
    [0.25, 0.25 - 0.288675134594812882],
    [0.25 + 0.288675134594812882, 0.25],
];
const GL_B: [f64; 2] = [0.5, 0.5];

/// One elementary perturbation: supported in the chart ball B(z, 3r),
/// translating B(z, 2r) by alpha eta r v.
pub struct Perturbation {
    chart: Chart,
    z: DVector<f64>,
    r: f64,
    v: DVector<f64>,
    alpha: f64,
    mode: PerturbationMode,
    profile: BumpProfile,
    eta: f64,
    field: UnitField,
}

impl Clone for Perturbation {
    fn clone(&self) -> Self {
        Perturbation::new(
            self.chart.base().clone(),
            self.z.clone(),
            self.r,
            self.v.clone(),
            self.alpha,
            self.mode,
        )
        .expect("clone of validated perturbation")
    }
}

impl std::fmt::Debug for Perturbation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Perturbation")
            .field("chart_center", &format!("{}", self.chart.base()))
            .field("r", &self.r)
            .field("alpha", &self.alpha)
            .field("mode", &self.mode.label())
            .finish()
    }
}

impl Perturbation {
    pub fn new(
        center: TorusPoint,
        z: DVector<f64>,
        r: f64,
        v: DVector<f64>,
        alpha: f64,
        mode: PerturbationMode,
    ) -> Result<Perturbation> {
        let d = center.dim();
        if z.len() != d || v.len() != d {
            return Err(CoreError::Dimension {
                expected: d,
                got: z.len().max(v.len()),
            });
        }
        if !(r > 0.0 && r < 0.25) {
            return Err(CoreError::parameter(format!(
                "perturbation radius must lie in (0, 1/4), got {r}"
            )));
        }
        if z.norm() + 3.0 * r > CHART_RADIUS {
            return Err(CoreError::parameter(format!(
                "support ball B(z, 3r) leaves the chart: |z| + 3r = {}",
                z.norm() + 3.0 * r
            )));
        }
        let vnorm = v.norm();
        if vnorm < 1e-12 {
            return Err(CoreError::parameter("perturbation direction is zero"));
        }
        if mode == PerturbationMode::Symplectic && d % 2 != 0 {
            return Err(CoreError::parameter(
                "symplectic perturbation needs even dimension",
            ));
        }
        let alpha_cap = Self::alpha_max(mode, d);
        if !(0.0..=alpha_cap).contains(&alpha) {
            return Err(CoreError::parameter(format!(
                "alpha = {alpha} outside [0, {alpha_cap}] for mode {} in dimension {d}",
                mode.label()
            )));
        }
        let profile = BumpProfile::quintic();
        let eta = profile.eta(mode, d);
        let v = v / vnorm;
        let field = UnitField {
            profile,
            mode,
            v: v.clone(),
            j: if mode == PerturbationMode::Symplectic {
                Some(symplectic_form(d))
            } else {
                None
            },
            dim: d,
        };
        Ok(Perturbation {
            chart: Chart::new(center, CHART_RADIUS)?,
            z,
            r,
            v,
            alpha,
            mode,
            profile,
            eta,
            field,
        })
    }

    /// Largest admissible alpha: the C1 self-consistency root of
    /// e^(ETA_SAFETY a) - 1 = a, capped by the C0 budget. Any point moves by
    /// at most alpha eta sup|F| r, which must stay within r/(100 d^2).
    pub fn alpha_max(mode: PerturbationMode, dim: usize) -> f64 {
        let (mut lo, mut hi) = (1e-4, 2.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if (ETA_SAFETY * mid).exp() - 1.0 <= mid {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let profile = BumpProfile::quintic();
        let eta = profile.eta(mode, dim);
        let field_sup = profile.field_sup(mode, dim);
        let c0_cap = 1.0 / (100.0 * (dim * dim) as f64 * eta * field_sup);
        lo.min(c0_cap)
    }

    pub fn mode(&self) -> PerturbationMode {
        self.mode
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn radius(&self) -> f64 {
        self.r
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn direction(&self) -> &DVector<f64> {
        &self.v
    }

    pub fn chart(&self) -> &Chart {
        &self.chart
    }

    pub fn profile(&self) -> &BumpProfile {
        &self.profile
    }

    /// Exact displacement applied on the plateau ball B(z, 2r).
    pub fn translation(&self) -> DVector<f64> {
        &self.v * (self.alpha * self.eta * self.r)
    }

    pub fn support_center(&self) -> TorusPoint {
        self.chart.base().translate(&self.z)
    }

    pub fn support_radius(&self) -> f64 {
        3.0 * self.r
    }

    fn flow_time(&self) -> f64 {
        self.alpha * self.eta
    }

    /// Integrates dy/dt = F(y) from `y0` for this perturbation's flow time
    /// (negated when `backward`); optionally carries the exact variational
    /// Jacobian of the discrete flow.
    fn integrate(
        &self,
        y0: &DVector<f64>,
        backward: bool,
        with_jacobian: bool,
    ) -> (DVector<f64>, Option<DMatrix<f64>>) {
        let d = self.field.dim;
        let mut y = y0.clone();
        let mut jac = if with_jacobian {
            Some(DMatrix::identity(d, d))
        } else {
            None
        };
        let total = if backward {
            -self.flow_time()
        } else {
            self.flow_time()
        };
        if total == 0.0 {
            return (y, jac);
        }
        let h = total / FLOW_STEPS as f64;
        for _ in 0..FLOW_STEPS {
            // implicit stages by fixed-point iteration; h |DF| << 1
            let mut k1 = self.field.eval(&y);
            let mut k2 = k1.clone();
            for _ in 0..40 {
                let s1 = &y + (&k1 * GL_A[0][0] + &k2 * GL_A[0][1]) * h;
                let s2 = &y + (&k1 * GL_A[1][0] + &k2 * GL_A[1][1]) * h;
                let n1 = self.field.eval(&s1);
                let n2 = self.field.eval(&s2);
                let delta = (&n1 - &k1).norm().max((&n2 - &k2).norm());
                k1 = n1;
                k2 = n2;
                if delta <= STAGE_TOL {
                    break;
                }
            }
            if let Some(m) = jac.as_mut() {
                let s1 = &y + (&k1 * GL_A[0][0] + &k2 * GL_A[0][1]) * h;
                let s2 = &y + (&k1 * GL_A[1][0] + &k2 * GL_A[1][1]) * h;
                let a1 = self.field.jacobian(&s1);
                let a2 = self.field.jacobian(&s2);
                // variational stages: K_i = A_i (I + h sum_j a_ij K_j)
                let mut big_k1 = a1.clone();
                let mut big_k2 = a2.clone();
                for _ in 0..40 {
                    let n1 = &a1
                        + &a1 * (&big_k1 * (h * GL_A[0][0]) + &big_k2 * (h * GL_A[0][1]));
                    let n2 = &a2
                        + &a2 * (&big_k1 * (h * GL_A[1][0]) + &big_k2 * (h * GL_A[1][1]));
                    let delta = (&n1 - &big_k1).norm().max((&n2 - &big_k2).norm());
                    big_k1 = n1;
                    big_k2 = n2;
                    if delta <= STAGE_TOL {
                        break;
                    }
                }
                let step =
                    DMatrix::identity(d, d) + big_k1 * (h * GL_B[0]) + big_k2 * (h * GL_B[1]);
                *m = step * m.clone();
            }
            y += (&k1 * GL_B[0] + &k2 * GL_B[1]) * h;
        }
        (y, jac)
    }

    /// Chart-coordinate map T. Outside |x - z| >= 2.9 r the input is
    /// returned untouched.
    pub fn apply_tangent(&self, x: &DVector<f64>) -> DVector<f64> {
        self.tangent_flow(x, false)
    }

    pub fn apply_tangent_inverse(&self, x: &DVector<f64>) -> DVector<f64> {
        self.tangent_flow(x, true)
    }

    fn tangent_flow(&self, x: &DVector<f64>, backward: bool) -> DVector<f64> {
        let w = x - &self.z;
        if w.norm() >= self.profile.support_end * self.r || self.alpha == 0.0 {
            return x.clone();
        }
        let y0 = w / self.r;
        let (y, _) = self.integrate(&y0, backward, false);
        &self.z + y * self.r
    }

    /// Exact Jacobian of the (discrete) chart-coordinate map.
    pub fn tangent_jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let d = self.field.dim;
        let w = x - &self.z;
        if w.norm() >= self.profile.support_end * self.r || self.alpha == 0.0 {
            return DMatrix::identity(d, d);
        }
        let y0 = w / self.r;
        let (_, jac) = self.integrate(&y0, false, true);
        jac.unwrap()
    }

    fn chart_offset(&self, p: &TorusPoint) -> DVector<f64> {
        self.chart.base().displacement_to(p)
    }

    fn in_support(&self, p: &TorusPoint) -> bool {
        let w = self.chart_offset(p) - &self.z;
        w.norm() < self.profile.support_end * self.r && self.alpha != 0.0
    }

    /// The diffeomorphism on the torus; identity (bitwise) outside the
    /// support ball.
    pub fn apply(&self, p: &TorusPoint) -> TorusPoint {
        if !self.in_support(p) {
            return p.clone();
        }
        let x = self.chart_offset(p);
        let image = self.apply_tangent(&x);
        self.chart.base().translate(&image)
    }

    pub fn apply_inverse(&self, p: &TorusPoint) -> TorusPoint {
        if !self.in_support(p) {
            return p.clone();
        }
        let x = self.chart_offset(p);
        let image = self.apply_tangent_inverse(&x);
        self.chart.base().translate(&image)
    }

    pub fn jacobian(&self, p: &TorusPoint) -> DMatrix<f64> {
        let d = self.field.dim;
        if !self.in_support(p) {
            return DMatrix::identity(d, d);
        }
        self.tangent_jacobian(&self.chart_offset(p))
    }

    /// Sup over a dense shell sweep of ||DT - id||; must stay below alpha.
    pub fn derivative_defect(&self, directions: usize, radii: usize, seed: u64) -> f64 {
        let d = self.field.dim;
        let mut worst = 0.0f64;
        for dir in unit_sphere_points(d, directions, seed) {
            for i in 0..=radii {
                let t = (self.profile.plateau_end
                    + self.profile.taper_width() * (i as f64) / (radii as f64))
                    * self.r;
                let x = &self.z + dir.clone() * t;
                let defect = (self.tangent_jacobian(&x) - DMatrix::identity(d, d))
                    .svd(false, false)
                    .singular_values
                    .max();
                worst = worst.max(defect);
            }
        }
        worst
    }
}

/// Perturbed composition: the perturbations applied in order after the base
/// map. Supports must be pairwise disjoint so the factors commute.
pub struct ComposedMap {
    base: Box<dyn DynamicalMap>,
    perturbations: Vec<Perturbation>,
}

impl ComposedMap {
    pub fn new(
        base: Box<dyn DynamicalMap>,
        perturbations: Vec<Perturbation>,
    ) -> Result<ComposedMap> {
        let d = base.dim();
        for (i, pert) in perturbations.iter().enumerate() {
            if pert.direction().len() != d {
                return Err(CoreError::Dimension {
                    expected: d,
                    got: pert.direction().len(),
                });
            }
            for (k, other) in perturbations.iter().enumerate().take(i) {
                let gap = pert.support_center().dist(&other.support_center())
                    - pert.support_radius()
                    - other.support_radius();
                if gap <= 0.0 {
                    return Err(CoreError::SupportOverlap { a: k, b: i, gap });
                }
            }
        }
        Ok(ComposedMap {
            base,
            perturbations,
        })
    }

    pub fn base(&self) -> &dyn DynamicalMap {
        self.base.as_ref()
    }

    pub fn perturbations(&self) -> &[Perturbation] {
        &self.perturbations
    }
}

impl DynamicalMap for ComposedMap {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn eval(&self, p: &TorusPoint) -> TorusPoint {
        let mut q = self.base.eval(p);
        for pert in &self.perturbations {
            q = pert.apply(&q);
        }
        q
    }

    fn eval_inverse(&self, p: &TorusPoint) -> Result<TorusPoint> {
        let mut q = p.clone();
        for pert in self.perturbations.iter().rev() {
            q = pert.apply_inverse(&q);
        }
        self.base.eval_inverse(&q)
    }

    fn differential(&self, p: &TorusPoint) -> DMatrix<f64> {
        let mut m = self.base.differential(p);
        let mut q = self.base.eval(p);
        for pert in &self.perturbations {
            m = pert.jacobian(&q) * m;
            q = pert.apply(&q);
        }
        m
    }

    fn preservation(&self) -> Preservation {
        self.perturbations
            .iter()
            .fold(self.base.preservation(), |acc, p| {
                acc.meet(p.mode().preservation())
            })
    }

    fn name(&self) -> String {
        format!(
            "perturbed({}, count={})",
            self.base.name(),
            self.perturbations.len()
        )
    }
}

/// Max pointwise distance over the sample.
pub fn c0_distance(f: &dyn DynamicalMap, g: &dyn DynamicalMap, sample: &[TorusPoint]) -> f64 {
    sample
        .iter()
        .map(|p| f.eval(p).dist(&g.eval(p)))
        .fold(0.0, f64::max)
}

/// Max over the sample of pointwise distance plus Jacobian operator-norm
/// distance; upper-biased C1 estimate.
pub fn c1_distance(f: &dyn DynamicalMap, g: &dyn DynamicalMap, sample: &[TorusPoint]) -> f64 {
    sample
        .iter()
        .map(|p| {
            let point_gap = f.eval(p).dist(&g.eval(p));
            let jac_gap = (f.differential(p) - g.differential(p))
                .svd(false, false)
                .singular_values
                .max();
            point_gap + jac_gap
        })
        .fold(0.0, f64::max)
}

/// Sample that covers every perturbation support (ring sweep around each
/// center) plus seeded global points; suitable for the distance estimators.
pub fn support_covering_sample(
    perturbations: &[Perturbation],
    per_support: usize,
    seed: u64,
) -> Vec<TorusPoint> {
    use rand::{Rng, SeedableRng};
    let mut out = Vec::new();
    for (i, pert) in perturbations.iter().enumerate() {
        let center = pert.support_center();
        let d = center.dim();
        let dirs = unit_sphere_points(d, per_support, seed ^ (i as u64).wrapping_mul(0x9E37));
        for (k, dir) in dirs.iter().enumerate() {
            // radii sweep the plateau, the taper shell, and just outside
            let shells = [0.0, 0.8, 1.6, 2.0, 2.3, 2.5, 2.7, 2.85, 3.05];
            let rho = shells[k % shells.len()] * pert.radius();
            out.push(center.translate(&(dir * rho)));
        }
    }
    if let Some(first) = perturbations.first() {
        let d = first.direction().len();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..per_support {
            out.push(TorusPoint::new(DVector::from_fn(d, |_, _| {
                rng.random::<f64>()
            })));
        }
    }
    out
}

/// Unit vector in the span of `space` closest to its first basis vector;
/// convenience for picking center directions.
pub fn principal_direction(space: &Subspace) -> DVector<f64> {
    space.basis_vector(0)
}
