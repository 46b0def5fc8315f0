//! su-path machinery on a single construction ball.
//!
//! A ball carries a frame adapted to the splitting at its anchor and a batch
//! of paired center bumps placed along the stable axis. The stable foliation
//! of the model is affine; the unstable foliation is the image of the affine
//! one under the composed bump diffeomorphism, so its leaves satisfy the
//! closed-form equation y = drag(x0 + U w) and every flow step reduces to a
//! chord Newton solve against a matrix factored once per ball. No
//! interpolation enters: tolerances in this module are solver tolerances.
//!
//! On top of the flows sit the four-legged holonomy quadrilaterals, the
//! theta-accessibility checklist, a constructive box-to-ball coverage
//! certificate, and point-to-point su-path search.

use nalgebra::linalg::LU;
use nalgebra::{DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::cones::compute_splitting;
use crate::error::CoreError;
use crate::Result;
use crate::exec::{self, ExecMode};
use crate::maps::DynamicalMap;
use crate::perturb::{ComposedMap, Perturbation, PerturbationMode, CHART_RADIUS};
use crate::torus::{Chart, TorusPoint};

/// Chord-Newton stopping tolerance for leaf projections, in chart units.
const PROJECT_TOL: f64 = 1e-13;
const PROJECT_MAX: usize = 200;
/// Polyline samples per leg, endpoints included.
const LEG_SAMPLES: usize = 9;
/// Consecutive legs of a path must share endpoints to this accuracy.
const ENDPOINT_TOL: f64 = 1e-9;

/// Leg-length convention for the holonomy quadrilaterals. Both are exposed
/// because the two written forms of the construction differ; reports carry
/// the active label so results stay attributable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LegConvention {
    /// The s-excursion stops at the first bump shell (10 d eps) while the
    /// u-legs grow with the center index: u = s*10jd*eps, s-leg = s*10d*eps.
    Narrow,
    /// Every leg spans 40 j d eps; the u-legs take the unsigned scale.
    Wide,
}

impl LegConvention {
    pub fn label(self) -> &'static str {
        match self {
            LegConvention::Narrow => "narrow",
            LegConvention::Wide => "wide",
        }
    }

    /// Signed length of the opening unstable leg at scale s.
    fn u_leg(self, j: usize, d: usize, eps: f64, s: f64) -> f64 {
        let jd = (j * d) as f64 * eps;
        match self {
            LegConvention::Narrow => s * 10.0 * jd,
            LegConvention::Wide => s.abs() * 40.0 * jd,
        }
    }

    /// Signed length of the stable excursion at scale s.
    fn s_leg(self, j: usize, d: usize, eps: f64, s: f64) -> f64 {
        match self {
            LegConvention::Narrow => s * 10.0 * d as f64 * eps,
            LegConvention::Wide => s * 40.0 * (j * d) as f64 * eps,
        }
    }
}

/// Which complement the unstable-leaf projection slides along.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FlowFibers {
    /// The stable-plus-center block of the splitting frame. With this fixed
    /// fiber space the flow steps compose exactly, and a bump translation
    /// (which lies in the center) is absorbed whole by the projection.
    Adapted,
    /// The orthogonal complement of the unstable subspace.
    Orthogonal,
}

impl FlowFibers {
    pub fn label(self) -> &'static str {
        match self {
            FlowFibers::Adapted => "stable-plus-center",
            FlowFibers::Orthogonal => "orthogonal",
        }
    }
}

/// Parameters for building one construction ball.
#[derive(Clone, Debug)]
pub struct AccessConfig {
    pub eps: f64,
    pub alpha: f64,
    pub mode: PerturbationMode,
    pub convention: LegConvention,
    pub dims: (usize, usize, usize),
}

impl AccessConfig {
    /// Defaults to volume mode with alpha at 90% of the admissible maximum
    /// for the total dimension, which keeps the bumps inside their combined
    /// C0 and C1 budgets while making the center step as large as possible.
    pub fn new(eps: f64, dims: (usize, usize, usize)) -> AccessConfig {
        let mode = PerturbationMode::Volume;
        let dim = dims.0 + dims.1 + dims.2;
        AccessConfig {
            eps,
            alpha: 0.9 * Perturbation::alpha_max(mode, dim),
            mode,
            convention: LegConvention::Narrow,
            dims,
        }
    }
}

/// One construction ball: chart, adapted frame, bump batch, and the two
/// prefactored chord matrices for leaf projections.
#[derive(Clone)]
pub struct AccessBall {
    chart: Chart,
    dims: (usize, usize, usize),
    eps: f64,
    alpha: f64,
    eta: f64,
    theta: f64,
    convention: LegConvention,
    u_basis: DMatrix<f64>,
    s_basis: DMatrix<f64>,
    center_frame: DMatrix<f64>,
    eu: DVector<f64>,
    es: DVector<f64>,
    /// Columns [U | W | S]; the affine model of the coverage map.
    frame: DMatrix<f64>,
    frame_lu: LU<f64, Dyn, Dyn>,
    fiber_adapted: DMatrix<f64>,
    chord_adapted: LU<f64, Dyn, Dyn>,
    fiber_orth: DMatrix<f64>,
    chord_orth: LU<f64, Dyn, Dyn>,
    bumps: Vec<Perturbation>,
}

fn chord_matrix(u_basis: &DMatrix<f64>, fiber: &DMatrix<f64>) -> DMatrix<f64> {
    let d = u_basis.nrows();
    let u = u_basis.ncols();
    let f = fiber.ncols();
    let mut m = DMatrix::zeros(d, u + f);
    m.view_mut((0, 0), (d, u)).copy_from(u_basis);
    m.view_mut((0, u), (d, f)).copy_from(&(-fiber));
    m
}

impl AccessBall {
    /// Builds the ball at `anchor`: splitting frame, paired center bumps at
    /// stable offsets 10 j d eps with radius d eps, and the factored chord
    /// matrices. The map is only consulted for its splitting; compose the
    /// bumps onto a base map separately via [`AccessBall::composed`].
    pub fn build(
        map: &dyn DynamicalMap,
        anchor: &TorusPoint,
        cfg: &AccessConfig,
    ) -> Result<AccessBall> {
        let d = map.dim();
        let (u, c, s) = cfg.dims;
        if u + c + s != d {
            return Err(CoreError::Dimension {
                expected: d,
                got: u + c + s,
            });
        }
        if c == 0 {
            return Err(CoreError::parameter(
                "center holonomy needs at least one center direction",
            ));
        }
        if !(cfg.eps > 0.0) {
            return Err(CoreError::parameter("eps must be positive"));
        }
        let container = 100.0 * (d * d) as f64 * cfg.eps;
        if container > CHART_RADIUS {
            return Err(CoreError::parameter(format!(
                "construction ball 100 d^2 eps = {container:.3e} exceeds the chart radius {CHART_RADIUS}"
            )));
        }

        let splitting = compute_splitting(map, anchor, cfg.dims)?;
        let u_basis = splitting.unstable().basis().clone();
        let s_basis = splitting.stable().basis().clone();
        let center_frame = splitting.center().basis().clone();
        let eu = u_basis.column(0).into_owned();
        let es = s_basis.column(0).into_owned();

        let r = d as f64 * cfg.eps;
        let mut bumps = Vec::with_capacity(2 * c);
        for j in 1..=c {
            for sign in [1.0f64, -1.0] {
                let offset = &es * (sign * 10.0 * (j * d) as f64 * cfg.eps);
                let dir = center_frame.column(j - 1).into_owned() * sign;
                bumps.push(Perturbation::new(
                    anchor.clone(),
                    offset,
                    r,
                    dir,
                    cfg.alpha,
                    cfg.mode,
                )?);
            }
        }
        let eta = bumps[0].eta();
        let theta = cfg.alpha * eta * d as f64;
        if theta >= 1.0 / (10.0 * d as f64) {
            return Err(CoreError::parameter(format!(
                "center step theta = {theta:.4} must stay below 1/(10d) = {:.4}; lower alpha",
                1.0 / (10.0 * d as f64)
            )));
        }

        let mut frame = DMatrix::zeros(d, d);
        frame.view_mut((0, 0), (d, u)).copy_from(&u_basis);
        frame.view_mut((0, u), (d, c)).copy_from(&center_frame);
        frame.view_mut((0, u + c), (d, s)).copy_from(&s_basis);
        let frame_lu = frame.clone().lu();
        if !frame_lu.is_invertible() {
            return Err(CoreError::NotInvertible(
                "splitting frame is singular".into(),
            ));
        }

        let mut fiber_adapted = DMatrix::zeros(d, s + c);
        fiber_adapted.view_mut((0, 0), (d, s)).copy_from(&s_basis);
        fiber_adapted
            .view_mut((0, s), (d, c))
            .copy_from(&center_frame);
        let chord_adapted = chord_matrix(&u_basis, &fiber_adapted).lu();
        let fiber_orth = splitting.unstable().complement().basis().clone();
        let chord_orth = chord_matrix(&u_basis, &fiber_orth).lu();
        if !chord_adapted.is_invertible() || !chord_orth.is_invertible() {
            return Err(CoreError::NotInvertible(
                "chord matrix for leaf projection is singular".into(),
            ));
        }

        Ok(AccessBall {
            chart: Chart::new(anchor.clone(), CHART_RADIUS)?,
            dims: cfg.dims,
            eps: cfg.eps,
            alpha: cfg.alpha,
            eta,
            theta,
            convention: cfg.convention,
            u_basis,
            s_basis,
            center_frame,
            eu,
            es,
            frame,
            frame_lu,
            fiber_adapted,
            chord_adapted,
            fiber_orth,
            chord_orth,
            bumps,
        })
    }

    pub fn chart(&self) -> &Chart {
        &self.chart
    }

    pub fn anchor(&self) -> &TorusPoint {
        self.chart.base()
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// Center step per quadrilateral, relative to eps: alpha * eta * d.
    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn convention(&self) -> LegConvention {
        self.convention
    }

    pub fn bumps(&self) -> &[Perturbation] {
        &self.bumps
    }

    pub fn unstable_basis(&self) -> &DMatrix<f64> {
        &self.u_basis
    }

    pub fn stable_basis(&self) -> &DMatrix<f64> {
        &self.s_basis
    }

    pub fn center_basis(&self) -> &DMatrix<f64> {
        &self.center_frame
    }

    pub fn unstable_direction(&self) -> &DVector<f64> {
        &self.eu
    }

    pub fn stable_direction(&self) -> &DVector<f64> {
        &self.es
    }

    /// Frame [U | W | S] whose columns order the coverage parameters.
    pub fn frame(&self) -> &DMatrix<f64> {
        &self.frame
    }

    /// Same geometry with the bump batch removed: flows become affine and
    /// every holonomy closes. theta is kept so the failing checks report
    /// against the same targets.
    pub fn without_bumps(&self) -> AccessBall {
        let mut plain = self.clone();
        plain.bumps.clear();
        plain
    }

    /// Composes the bump batch onto a base map (bumps applied after it).
    pub fn composed(&self, base: Box<dyn DynamicalMap>) -> Result<ComposedMap> {
        ComposedMap::new(base, self.bumps.clone())
    }

    pub fn lift(&self, p: &TorusPoint) -> Result<DVector<f64>> {
        Ok(self.chart.lift(p)?.vec)
    }

    pub fn embed(&self, x: &DVector<f64>) -> Result<TorusPoint> {
        self.chart.apply(x)
    }

    /// Composed bump image of a chart point. Supports are pairwise disjoint,
    /// so application order does not matter.
    pub fn drag(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = x.clone();
        for bump in &self.bumps {
            y = bump.apply_tangent(&y);
        }
        y
    }

    pub fn drag_inverse(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = x.clone();
        for bump in self.bumps.iter().rev() {
            y = bump.apply_tangent_inverse(&y);
        }
        y
    }

    fn inside_chart(&self, x: &DVector<f64>) -> Result<()> {
        let dist = x.norm();
        if dist > self.chart.radius() {
            return Err(CoreError::OutOfChart {
                dist,
                radius: self.chart.radius(),
            });
        }
        Ok(())
    }

    /// Solves drag(x0 + U w) = y + F b for the leaf through `through` and a
    /// target point y; returns the on-leaf point and the fiber coordinates b.
    /// The chord matrix [U | -F] is factored once per ball; the bump
    /// differential is alpha-close to the identity, so the iteration
    /// contracts at a rate comparable to alpha.
    fn project_to_leaf(
        &self,
        through: &DVector<f64>,
        y: &DVector<f64>,
        fibers: FlowFibers,
    ) -> Result<(DVector<f64>, DVector<f64>)> {
        let d = through.len();
        let u = self.dims.0;
        let (chord, fiber) = match fibers {
            FlowFibers::Adapted => (&self.chord_adapted, &self.fiber_adapted),
            FlowFibers::Orthogonal => (&self.chord_orth, &self.fiber_orth),
        };
        let x0 = self.drag_inverse(through);
        let mut w = DVector::<f64>::zeros(u);
        let mut b = DVector::<f64>::zeros(d - u);
        let mut residual = f64::INFINITY;
        for _ in 0..PROJECT_MAX {
            let p = &x0 + &self.u_basis * &w;
            let dragged = self.drag(&p);
            let g = &dragged - y - fiber * &b;
            residual = g.norm();
            if residual < PROJECT_TOL {
                self.inside_chart(&dragged)?;
                return Ok((dragged, b));
            }
            let rhs = -g;
            let delta = chord.solve(&rhs).ok_or_else(|| {
                CoreError::NotInvertible("chord matrix for leaf projection".into())
            })?;
            w += delta.rows(0, u).into_owned();
            b += delta.rows(u, d - u).into_owned();
        }
        Err(CoreError::NonConvergence {
            context: "unstable-leaf projection".into(),
            residual,
        })
    }

    /// Point of the dragged unstable leaf through x reached by sliding the
    /// straight target x + disp back onto the leaf along the fiber space.
    fn shift_on_u_leaf(
        &self,
        x: &DVector<f64>,
        disp: &DVector<f64>,
        fibers: FlowFibers,
    ) -> Result<DVector<f64>> {
        if disp.iter().all(|&v| v == 0.0) {
            return Ok(x.clone());
        }
        let y = x + disp;
        Ok(self.project_to_leaf(x, &y, fibers)?.0)
    }

    /// Unstable flow: slide x + t e^u onto the dragged leaf through x. With
    /// a fixed fiber space the steps compose exactly: the image stays on the
    /// same leaf and straight targets add up.
    pub fn flow_u(&self, x: &DVector<f64>, t: f64, fibers: FlowFibers) -> Result<DVector<f64>> {
        if t == 0.0 {
            return Ok(x.clone());
        }
        self.shift_on_u_leaf(x, &(&self.eu * t), fibers)
    }

    /// Stable flow: the stable family is affine, so this is an exact
    /// translation along e^s.
    pub fn flow_s(&self, x: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
        if t == 0.0 {
            return Ok(x.clone());
        }
        let y = x + &self.es * t;
        self.inside_chart(&y)?;
        Ok(y)
    }

    /// Distance from q to the dragged unstable leaf through a, measured
    /// along the orthogonal complement of the unstable subspace.
    pub fn u_leaf_residual(&self, a: &DVector<f64>, q: &DVector<f64>) -> Result<f64> {
        let (_, b) = self.project_to_leaf(a, q, FlowFibers::Orthogonal)?;
        Ok(b.norm())
    }

    /// Distance from q to the affine stable leaf through a.
    pub fn s_leaf_residual(&self, a: &DVector<f64>, q: &DVector<f64>) -> f64 {
        let delta = q - a;
        let tangential = &self.s_basis * (self.s_basis.transpose() * &delta);
        (delta - tangential).norm()
    }
}

/// A leg lies on one leaf of one family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LegKind {
    Unstable,
    Stable,
}

impl LegKind {
    pub fn label(self) -> &'static str {
        match self {
            LegKind::Unstable => "u",
            LegKind::Stable => "s",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SuLeg {
    pub kind: LegKind,
    pub start: Vec<f64>,
    pub end: Vec<f64>,
    pub samples: Vec<Vec<f64>>,
}

impl SuLeg {
    fn from_points(kind: LegKind, samples: Vec<DVector<f64>>) -> SuLeg {
        let start = samples.first().map(vec_of).unwrap_or_default();
        let end = samples.last().map(vec_of).unwrap_or_default();
        SuLeg {
            kind,
            start,
            end,
            samples: samples.iter().map(vec_of).collect(),
        }
    }
}

fn vec_of(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

fn dvec_of(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

/// Piecewise path whose every segment lies on a single stable or unstable
/// leaf; consecutive legs share endpoints.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct SuPath {
    pub legs: Vec<SuLeg>,
}

/// Re-measured path invariants: worst endpoint mismatch between consecutive
/// legs and worst distance from a sample to its leg's leaf.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PathCheck {
    pub endpoint_gap: f64,
    pub leaf_residual: f64,
}

impl PathCheck {
    pub fn passes(&self, tol: f64) -> bool {
        self.endpoint_gap <= ENDPOINT_TOL && self.leaf_residual <= tol
    }
}

impl SuPath {
    pub fn is_empty(&self) -> bool {
        self.legs.is_empty()
    }

    pub fn len(&self) -> usize {
        self.legs.len()
    }

    pub fn endpoint(&self) -> Option<DVector<f64>> {
        self.legs.last().map(|leg| dvec_of(&leg.end))
    }

    /// Re-checks the invariants from scratch against the ball's leaf
    /// families; quantities are returned, not asserted.
    pub fn validate(&self, ball: &AccessBall) -> Result<PathCheck> {
        let mut endpoint_gap: f64 = 0.0;
        let mut leaf_residual: f64 = 0.0;
        for pair in self.legs.windows(2) {
            let gap = (dvec_of(&pair[0].end) - dvec_of(&pair[1].start)).norm();
            endpoint_gap = endpoint_gap.max(gap);
        }
        for leg in &self.legs {
            let a = dvec_of(&leg.start);
            for sample in &leg.samples {
                let q = dvec_of(sample);
                let r = match leg.kind {
                    LegKind::Unstable => ball.u_leaf_residual(&a, &q)?,
                    LegKind::Stable => ball.s_leaf_residual(&a, &q),
                };
                leaf_residual = leaf_residual.max(r);
            }
        }
        Ok(PathCheck {
            endpoint_gap,
            leaf_residual,
        })
    }
}

/// Endpoint data of one holonomy quadrilateral.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HolonomyResult {
    pub j: usize,
    pub eps: f64,
    /// Signed leg-scale parameter in [-1, 1].
    pub scale: f64,
    pub convention: String,
    pub start: Vec<f64>,
    /// Endpoint minus start, as chart vectors.
    pub displacement: Vec<f64>,
    /// Component of the displacement along the j-th center direction.
    pub center_component: f64,
    /// Norm of the displacement with that component removed.
    pub off_center_residual: f64,
    pub path: SuPath,
}

impl AccessBall {
    fn leg_lengths(&self, j: usize, scale: f64) -> (f64, f64) {
        let d = self.anchor().dim();
        (
            self.convention.u_leg(j, d, self.eps, scale),
            self.convention.s_leg(j, d, self.eps, scale),
        )
    }

    /// The four corners visited by the quadrilateral: u-leg, s-leg, backward
    /// u-leg, backward s-leg. `swap_s` flips the s-excursion first downward,
    /// which routes the third leg past the opposite bump of the pair.
    fn quad_corners(
        &self,
        x: &DVector<f64>,
        j: usize,
        scale: f64,
        swap_s: bool,
    ) -> Result<[DVector<f64>; 5]> {
        let (u_len, s_len) = self.leg_lengths(j, scale);
        let s_first = if swap_s { -s_len } else { s_len };
        let p0 = x.clone();
        let p1 = self.flow_u(&p0, u_len, FlowFibers::Adapted)?;
        let p2 = self.flow_s(&p1, s_first)?;
        let p3 = self.flow_u(&p2, -u_len, FlowFibers::Adapted)?;
        let p4 = self.flow_s(&p3, -s_first)?;
        Ok([p0, p1, p2, p3, p4])
    }

    fn quad_path(
        &self,
        corners: &[DVector<f64>; 5],
        j: usize,
        scale: f64,
        swap_s: bool,
    ) -> Result<SuPath> {
        let (u_len, s_len) = self.leg_lengths(j, scale);
        let s_first = if swap_s { -s_len } else { s_len };
        let plan = [
            (LegKind::Unstable, 0usize, u_len),
            (LegKind::Stable, 1, s_first),
            (LegKind::Unstable, 2, -u_len),
            (LegKind::Stable, 3, -s_first),
        ];
        let mut legs = Vec::with_capacity(4);
        for (kind, corner, len) in plan {
            let start = &corners[corner];
            let mut samples = Vec::with_capacity(LEG_SAMPLES);
            for k in 0..LEG_SAMPLES {
                let frac = k as f64 / (LEG_SAMPLES - 1) as f64;
                let point = match kind {
                    LegKind::Unstable => self.flow_u(start, frac * len, FlowFibers::Adapted)?,
                    LegKind::Stable => start + &self.es * (frac * len),
                };
                samples.push(point);
            }
            // Pin the last sample to the flow's own corner so shared
            // endpoints are bitwise, not just within solver noise.
            *samples.last_mut().expect("nonempty") = corners[corner + 1].clone();
            legs.push(SuLeg::from_points(kind, samples));
        }
        Ok(SuPath { legs })
    }

    fn quad_inner(
        &self,
        x: &DVector<f64>,
        j: usize,
        scale: f64,
        swap_s: bool,
        with_path: bool,
    ) -> Result<HolonomyResult> {
        let d = self.anchor().dim();
        let c = self.dims.1;
        if x.len() != d {
            return Err(CoreError::Dimension {
                expected: d,
                got: x.len(),
            });
        }
        if j == 0 || j > c {
            return Err(CoreError::parameter(format!(
                "center index {j} outside 1..={c}"
            )));
        }
        if !(-1.0..=1.0).contains(&scale) {
            return Err(CoreError::parameter(format!(
                "leg scale {scale} outside [-1, 1]"
            )));
        }
        let working = 2.0 * d as f64 * self.eps;
        if x.norm() > working * (1.0 + 1e-9) {
            return Err(CoreError::parameter(format!(
                "start point at |x| = {:.3e} outside the working ball 2 d eps = {working:.3e}",
                x.norm()
            )));
        }

        let (corners, path) = if scale == 0.0 {
            // All four legs degenerate; the endpoint is the start, exactly.
            let here = [x.clone(), x.clone(), x.clone(), x.clone(), x.clone()];
            let path = if with_path {
                self.quad_path(&here, j, 0.0, swap_s)?
            } else {
                SuPath::default()
            };
            (here, path)
        } else {
            let corners = self.quad_corners(x, j, scale, swap_s)?;
            let path = if with_path {
                self.quad_path(&corners, j, scale, swap_s)?
            } else {
                SuPath::default()
            };
            (corners, path)
        };

        let displacement = &corners[4] - x;
        let w_j = self.center_frame.column(j - 1);
        let center_component = w_j.dot(&displacement);
        let off_center_residual = (&displacement - w_j * center_component).norm();
        Ok(HolonomyResult {
            j,
            eps: self.eps,
            scale,
            convention: self.convention.label().to_owned(),
            start: vec_of(x),
            displacement: vec_of(&displacement),
            center_component,
            off_center_residual,
            path,
        })
    }

    /// One four-legged holonomy quadrilateral around the j-th bump pair.
    /// `scale` multiplies every leg; its sign selects which bump of the pair
    /// the third leg crosses, so the endpoint translation flips with it.
    pub fn quadrilateral_holonomy(
        &self,
        x: &DVector<f64>,
        j: usize,
        scale: f64,
    ) -> Result<HolonomyResult> {
        self.quad_inner(x, j, scale, false, true)
    }

    /// The opposite-ordering quadrilateral: the s-excursion runs downward
    /// first, so the endpoint translation carries the opposite sign.
    pub fn quadrilateral_swapped(
        &self,
        x: &DVector<f64>,
        j: usize,
        scale: f64,
    ) -> Result<HolonomyResult> {
        self.quad_inner(x, j, scale, true, true)
    }

    /// Point at arc parameter t in [0, 1] along the quadrilateral: each
    /// quarter of the parameter runs through one leg. t = 0 returns the
    /// start exactly; t = 1 lands on the holonomy endpoint.
    pub fn quad_arc(&self, x: &DVector<f64>, j: usize, scale: f64, t: f64) -> Result<DVector<f64>> {
        if !(0.0..=1.0).contains(&t) {
            return Err(CoreError::parameter(format!(
                "arc parameter {t} outside [0, 1]"
            )));
        }
        if t == 0.0 || scale == 0.0 {
            return Ok(x.clone());
        }
        let corners = self.quad_corners(x, j, scale, false)?;
        let (u_len, s_len) = self.leg_lengths(j, scale);
        let pos = t * 4.0;
        let k = (pos.floor() as usize).min(3);
        let frac = pos - k as f64;
        if frac == 0.0 {
            return Ok(corners[k].clone());
        }
        match k {
            0 => self.flow_u(&corners[0], frac * u_len, FlowFibers::Adapted),
            1 => Ok(&corners[1] + &self.es * (frac * s_len)),
            2 => self.flow_u(&corners[2], -frac * u_len, FlowFibers::Adapted),
            _ => Ok(&corners[3] - &self.es * (frac * s_len)),
        }
    }

    /// Center flow: whole steps are full quadrilaterals, the remainder is
    /// one quadrilateral at fractional scale. Each full step translates by
    /// theta * eps along the j-th center direction while the orbit stays in
    /// the bump plateau's reach.
    pub fn center_flow(&self, x: &DVector<f64>, j: usize, t: f64) -> Result<DVector<f64>> {
        let mut cur = x.clone();
        let mut t = t;
        while t >= 1.0 {
            cur = self.quad_corners(&cur, j, 1.0, false)?[4].clone();
            t -= 1.0;
        }
        while t <= -1.0 {
            cur = self.quad_corners(&cur, j, -1.0, false)?[4].clone();
            t += 1.0;
        }
        if t != 0.0 {
            cur = self.quad_corners(&cur, j, t, false)?[4].clone();
        }
        Ok(cur)
    }
}

/// Worst-case margins of the four-point checklist for the quadrilateral
/// family, over deterministic scale and start-point lattices.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ThetaAccessReport {
    pub engine: String,
    pub convention: String,
    pub fibers: String,
    pub eps: f64,
    pub theta: f64,
    pub center_count: usize,
    pub scale_samples: usize,
    pub point_samples: usize,
    /// Worst |H(s, 0, x) - x|; the arc at parameter 0 must return its start.
    pub base_defect: f64,
    /// Worst endpoint mismatch between consecutive legs.
    pub endpoint_gap: f64,
    /// Worst distance from a leg sample to its leaf.
    pub leaf_residual: f64,
    /// Worst |H(s, 1, x) - x| over both leg orderings.
    pub identity_defect: f64,
    /// Allowance for the above: eps / (10 d).
    pub identity_bound: f64,
    /// Worst |H(+-1, 1, x) - (x +- theta eps w_j)|.
    pub translation_defect: f64,
    /// Allowance for the above: theta eps / (10 d).
    pub translation_bound: f64,
    pub pass_base: bool,
    pub pass_legs: bool,
    pub pass_identity: bool,
    pub pass_translation: bool,
    pub pass: bool,
}

#[derive(Clone, Copy, Default)]
struct ThetaTask {
    base: f64,
    gap: f64,
    residual: f64,
    identity: f64,
    translation: f64,
}

impl AccessBall {
    /// Deterministic start points inside the 2 d eps working ball: the
    /// center, near-boundary points along each frame axis, and two mixed
    /// directions.
    fn sample_points(&self) -> Vec<DVector<f64>> {
        let d = self.anchor().dim();
        let r = 2.0 * d as f64 * self.eps;
        let mut pts = vec![DVector::zeros(d)];
        let mut axes: Vec<DVector<f64>> = vec![self.eu.clone(), self.es.clone()];
        for j in 0..self.dims.1 {
            axes.push(self.center_frame.column(j).into_owned());
        }
        for axis in &axes {
            pts.push(axis * (0.9 * r));
            pts.push(axis * (-0.9 * r));
        }
        let mut mixed = self.eu.clone() + &self.es + self.center_frame.column(0);
        mixed /= mixed.norm();
        pts.push(&mixed * (0.95 * r));
        pts.push(&mixed * (-0.6 * r));
        pts
    }

    /// Runs the four-point checklist: (base) the arc at parameter zero is
    /// the identity, (legs) every leg is a genuine leaf segment, (identity)
    /// the closed quadrilateral stays eps/(10d)-close to the identity in
    /// both leg orderings, (translation) at full scale the endpoint realizes
    /// the signed center step theta * eps * w_j within theta * eps / (10 d).
    pub fn theta_access_check(&self, mode: ExecMode) -> Result<ThetaAccessReport> {
        let d = self.anchor().dim();
        let c = self.dims.1;
        let scales = [-1.0, -0.75, -0.5, -0.25, 0.25, 0.5, 0.75, 1.0];
        let points = self.sample_points();
        let orderings = [false, true];
        let tasks = c * scales.len() * points.len() * orderings.len();

        let outcomes: Vec<Result<ThetaTask>> = exec::map_indexed(mode, tasks, |idx| {
            let mut rest = idx;
            let j = 1 + rest % c;
            rest /= c;
            let scale = scales[rest % scales.len()];
            rest /= scales.len();
            let x = &points[rest % points.len()];
            rest /= points.len();
            let swap_s = orderings[rest];

            let mut out = ThetaTask::default();
            let at_zero = self.quad_arc(x, j, scale, 0.0)?;
            out.base = (at_zero - x).norm();
            let holonomy = self.quad_inner(x, j, scale, swap_s, true)?;
            let check = holonomy.path.validate(self)?;
            out.gap = check.endpoint_gap;
            out.residual = check.leaf_residual;
            let disp = dvec_of(&holonomy.displacement);
            out.identity = disp.norm();
            if scale.abs() == 1.0 && !swap_s {
                let w_j = self.center_frame.column(j - 1);
                let target = w_j * (scale * self.theta * self.eps);
                out.translation = (disp - target).norm();
            } else {
                out.translation = 0.0;
            }
            Ok(out)
        });

        let mut worst = ThetaTask::default();
        for item in outcomes {
            let t = item?;
            worst.base = worst.base.max(t.base);
            worst.gap = worst.gap.max(t.gap);
            worst.residual = worst.residual.max(t.residual);
            worst.identity = worst.identity.max(t.identity);
            worst.translation = worst.translation.max(t.translation);
        }

        let identity_bound = self.eps / (10.0 * d as f64);
        let translation_bound = self.theta * self.eps / (10.0 * d as f64);
        let pass_base = worst.base == 0.0;
        let pass_legs = worst.gap <= ENDPOINT_TOL && worst.residual <= ENDPOINT_TOL;
        let pass_identity = worst.identity < identity_bound;
        let pass_translation = worst.translation < translation_bound;
        Ok(ThetaAccessReport {
            engine: "dragged-foliation".into(),
            convention: self.convention.label().into(),
            fibers: FlowFibers::Adapted.label().into(),
            eps: self.eps,
            theta: self.theta,
            center_count: c,
            scale_samples: scales.len(),
            point_samples: points.len(),
            base_defect: worst.base,
            endpoint_gap: worst.gap,
            leaf_residual: worst.residual,
            identity_defect: worst.identity,
            identity_bound,
            translation_defect: worst.translation,
            translation_bound,
            pass_base,
            pass_legs,
            pass_identity,
            pass_translation,
            pass: pass_base && pass_legs && pass_identity && pass_translation,
        })
    }
}

/// Sampling and solver knobs for the coverage certificate.
#[derive(Clone, Debug)]
pub struct CoverageConfig {
    /// Lattice points per axis on each face of the parameter box.
    pub boundary_resolution: usize,
    /// Target shell radii in units of eps, ascending.
    pub shell_radii: Vec<f64>,
    /// Add pairwise diagonal directions to the axis targets.
    pub diagonal_targets: bool,
    pub damping: f64,
    pub max_newton: usize,
}

impl Default for CoverageConfig {
    fn default() -> CoverageConfig {
        CoverageConfig {
            boundary_resolution: 5,
            shell_radii: vec![0.5, 1.0, 1.5, 2.0, 2.4],
            diagonal_targets: true,
            damping: 0.5,
            max_newton: 80,
        }
    }
}

/// Outcome of the constructive degree argument on the parameter box
/// [-3/theta, 3/theta]^d.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoverageReport {
    pub eps: f64,
    pub theta: f64,
    pub box_half_width: f64,
    pub fibers: String,
    pub boundary_samples: usize,
    /// Sup over the boundary lattice of |P(t) - affine model|.
    pub boundary_defect: f64,
    /// Allowance for the above: 2 eps / 10.
    pub boundary_bound: f64,
    pub boundary_pass: bool,
    /// Exact lower bound on the affine image's distance to the base point
    /// over every face of the box.
    pub face_clearance: f64,
    /// Radius covered by the homotopy argument alone:
    /// face_clearance - boundary_defect.
    pub degree_radius: f64,
    pub targets: usize,
    pub solved: usize,
    pub target_tol: f64,
    pub worst_target_residual: f64,
    /// Largest shell radius whose every target the damped Newton reached.
    pub solved_radius: f64,
    /// min(degree_radius, solved_radius); zero when the boundary check fails.
    pub covered_radius: f64,
    pub pass: bool,
}

impl AccessBall {
    /// The coverage composition P(t): one exact stable translation, then the
    /// center quadrilateral flows (highest index first), then one slide
    /// along the unstable leaf. Flow speed is theta * eps per unit of t, so
    /// the box [-3/theta, 3/theta]^d maps over a 3 eps neighborhood.
    /// Unstable flows compose exactly along the fixed fiber space, so the
    /// whole u-block is a single projection.
    pub fn coverage_map(&self, x0: &DVector<f64>, t: &[f64]) -> Result<DVector<f64>> {
        let (u, c, s) = self.dims;
        let d = u + c + s;
        if t.len() != d {
            return Err(CoreError::Dimension {
                expected: d,
                got: t.len(),
            });
        }
        let speed = self.theta * self.eps;
        let s_coeffs = DVector::from_column_slice(&t[u + c..]) * speed;
        let mut cur = x0 + &self.s_basis * s_coeffs;
        for j in (1..=c).rev() {
            cur = self.center_flow(&cur, j, t[u + j - 1])?;
        }
        let u_coeffs = DVector::from_column_slice(&t[..u]) * speed;
        let disp = &self.u_basis * u_coeffs;
        self.shift_on_u_leaf(&cur, &disp, FlowFibers::Orthogonal)
    }

    /// Damped Newton on P(t) = y with the affine model as preconditioner,
    /// parameters clamped into the box given by `limits`. Returns the
    /// solution when the residual drops below tol, and the best residual
    /// seen either way. Flow failures count as a failed attempt.
    fn newton_shoot(
        &self,
        x0: &DVector<f64>,
        y: &DVector<f64>,
        tol: f64,
        damping: f64,
        max_newton: usize,
        limits: &[f64],
    ) -> (Option<DVector<f64>>, f64) {
        let speed = self.theta * self.eps;
        let clamp = |t: &mut DVector<f64>| {
            for (i, v) in t.iter_mut().enumerate() {
                *v = v.clamp(-limits[i], limits[i]);
            }
        };
        let rhs0 = y - x0;
        let Some(mut t) = self.frame_lu.solve(&rhs0) else {
            return (None, f64::INFINITY);
        };
        t /= speed;
        clamp(&mut t);
        let mut best = f64::INFINITY;
        for _ in 0..max_newton {
            let p = match self.coverage_map(x0, t.as_slice()) {
                Ok(p) => p,
                Err(_) => return (None, best),
            };
            let r = &p - y;
            let norm = r.norm();
            best = best.min(norm);
            if norm < tol {
                return (Some(t), norm);
            }
            let Some(delta) = self.frame_lu.solve(&r) else {
                return (None, best);
            };
            t -= delta * (damping / speed);
            clamp(&mut t);
        }
        (None, best)
    }

    /// Exact lower bound on the distance from the base point to the affine
    /// image of each face: for the face t_i = +-3/theta the displacement is
    /// +-3 eps v_i plus a span of the other columns, so the unconstrained
    /// least-squares distance 3 eps dist(v_i, span(rest)) bounds it below.
    fn face_clearance(&self) -> f64 {
        let d = self.anchor().dim();
        let mut clearance = f64::INFINITY;
        for i in 0..d {
            let v_i = self.frame.column(i).into_owned();
            let mut rest = DMatrix::zeros(d, d - 1);
            let mut col = 0;
            for k in 0..d {
                if k != i {
                    rest.set_column(col, &self.frame.column(k));
                    col += 1;
                }
            }
            let normal = (rest.transpose() * &rest).lu();
            let rhs = rest.transpose() * &v_i;
            let dist = match normal.solve(&rhs) {
                Some(c) => (&v_i - &rest * c).norm(),
                None => 0.0,
            };
            clearance = clearance.min(3.0 * self.eps * dist);
        }
        clearance
    }

    fn coverage_targets(&self, x0: &DVector<f64>, cfg: &CoverageConfig) -> Vec<(f64, DVector<f64>)> {
        let d = self.anchor().dim();
        let mut dirs: Vec<DVector<f64>> = Vec::new();
        for i in 0..d {
            let v = self.frame.column(i).into_owned();
            dirs.push(v.clone());
            dirs.push(-v);
        }
        if cfg.diagonal_targets {
            for i in 0..d {
                for k in (i + 1)..d {
                    for (si, sk) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                        let mut v =
                            self.frame.column(i) * si + self.frame.column(k) * sk;
                        v /= v.norm();
                        dirs.push(v);
                    }
                }
            }
        }
        let mut targets = Vec::new();
        for &shell in &cfg.shell_radii {
            for dir in &dirs {
                targets.push((shell, x0 + dir * (shell * self.eps)));
            }
        }
        targets
    }

    /// Constructive replacement for the degree argument. First certifies
    /// that the boundary of the parameter box lands within 2 eps / 10 of the
    /// affine model (so the straight-line homotopy cannot sweep a covered
    /// target across the boundary image), then solves P(t) = y for a
    /// deterministic grid of targets by damped Newton. The reported radius
    /// is what both stages support.
    pub fn brouwer_coverage(
        &self,
        x0: &DVector<f64>,
        cfg: &CoverageConfig,
        mode: ExecMode,
    ) -> Result<CoverageReport> {
        let d = self.anchor().dim();
        if x0.len() != d {
            return Err(CoreError::Dimension {
                expected: d,
                got: x0.len(),
            });
        }
        if x0.norm() > self.eps * (1.0 + 1e-9) {
            return Err(CoreError::parameter(format!(
                "coverage base point at |x0| = {:.3e} outside the eps ball",
                x0.norm()
            )));
        }
        let half = 3.0 / self.theta;
        let speed = self.theta * self.eps;
        let m = cfg.boundary_resolution.max(2);
        let per_face = m.pow((d - 1) as u32);
        let boundary_samples = 2 * d * per_face;

        let defects: Vec<Result<f64>> = exec::map_indexed(mode, boundary_samples, |idx| {
            let face = idx / per_face;
            let axis = face / 2;
            let side = if face % 2 == 0 { half } else { -half };
            let mut lattice = idx % per_face;
            let mut t = vec![0.0f64; d];
            t[axis] = side;
            for (k, slot) in t.iter_mut().enumerate() {
                if k == axis {
                    continue;
                }
                let step = lattice % m;
                lattice /= m;
                *slot = -half + 2.0 * half * step as f64 / (m - 1) as f64;
            }
            let image = self.coverage_map(x0, &t)?;
            let affine = x0 + &self.frame * (DVector::from_vec(t) * speed);
            Ok((image - affine).norm())
        });
        let mut boundary_defect: f64 = 0.0;
        for item in defects {
            boundary_defect = boundary_defect.max(item?);
        }
        let boundary_bound = 2.0 * self.eps / 10.0;
        let boundary_pass = boundary_defect < boundary_bound;

        let face_clearance = self.face_clearance();
        let degree_radius = if boundary_pass {
            (face_clearance - boundary_defect).max(0.0)
        } else {
            0.0
        };

        let target_tol = self.eps / 10.0;
        let targets = self.coverage_targets(x0, cfg);
        let (solved, worst_residual, solved_radius) = if boundary_pass {
            let limits = vec![half; d];
            let results: Vec<(f64, bool, f64)> =
                exec::map_indexed(mode, targets.len(), |idx| {
                    let (shell, y) = &targets[idx];
                    let (sol, residual) = self.newton_shoot(
                        x0,
                        y,
                        target_tol,
                        cfg.damping,
                        cfg.max_newton,
                        &limits,
                    );
                    (*shell, sol.is_some(), residual)
                });
            let solved = results.iter().filter(|r| r.1).count();
            let worst = results
                .iter()
                .map(|r| r.2)
                .fold(0.0f64, f64::max);
            let mut solved_radius = 0.0f64;
            for &shell in &cfg.shell_radii {
                let all = results
                    .iter()
                    .filter(|r| r.0 == shell)
                    .all(|r| r.1);
                if all {
                    solved_radius = shell * self.eps;
                } else {
                    break;
                }
            }
            (solved, worst, solved_radius)
        } else {
            (0, f64::INFINITY, 0.0)
        };

        let covered_radius = if boundary_pass {
            degree_radius.min(solved_radius)
        } else {
            0.0
        };
        Ok(CoverageReport {
            eps: self.eps,
            theta: self.theta,
            box_half_width: half,
            fibers: FlowFibers::Orthogonal.label().into(),
            boundary_samples,
            boundary_defect,
            boundary_bound,
            boundary_pass,
            face_clearance,
            degree_radius,
            targets: targets.len(),
            solved,
            target_tol,
            worst_target_residual: worst_residual,
            solved_radius,
            covered_radius,
            pass: boundary_pass && covered_radius > 0.0,
        })
    }
}

/// Result of a point-to-point search: either a valid path or the best
/// residual the ladder of strategies achieved.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum ConnectOutcome {
    Path(SuPath),
    Failure { best_residual: f64 },
}

impl ConnectOutcome {
    pub fn path(&self) -> Option<&SuPath> {
        match self {
            ConnectOutcome::Path(p) => Some(p),
            ConnectOutcome::Failure { .. } => None,
        }
    }
}

impl AccessBall {
    fn u_leg_between(
        &self,
        from: &DVector<f64>,
        w: &DVector<f64>,
        end: &DVector<f64>,
    ) -> SuLeg {
        let x0 = self.drag_inverse(from);
        let mut samples = Vec::with_capacity(LEG_SAMPLES);
        for k in 0..LEG_SAMPLES {
            let frac = k as f64 / (LEG_SAMPLES - 1) as f64;
            samples.push(self.drag(&(&x0 + &self.u_basis * (w * frac))));
        }
        *samples.first_mut().expect("nonempty") = from.clone();
        *samples.last_mut().expect("nonempty") = end.clone();
        SuLeg::from_points(LegKind::Unstable, samples)
    }

    fn s_leg_between(&self, from: &DVector<f64>, end: &DVector<f64>) -> SuLeg {
        let mut samples = Vec::with_capacity(LEG_SAMPLES);
        for k in 0..LEG_SAMPLES {
            let frac = k as f64 / (LEG_SAMPLES - 1) as f64;
            samples.push(from + (end - from) * frac);
        }
        SuLeg::from_points(LegKind::Stable, samples)
    }

    /// Gauss-Newton shot for a two-leg connection. `u_first` tries
    /// p --u--> m --s--> q; otherwise p --s--> m --u--> q. Returns the leg
    /// parameters and the least-squares residual, which measures the center
    /// gap the two families cannot close.
    fn two_leg_shot(
        &self,
        p: &DVector<f64>,
        q: &DVector<f64>,
        u_first: bool,
    ) -> Result<(DVector<f64>, DVector<f64>, f64)> {
        let d = p.len();
        let (u, _, s) = self.dims;
        let mut j0 = DMatrix::zeros(d, u + s);
        if u_first {
            j0.view_mut((0, 0), (d, u)).copy_from(&self.u_basis);
            j0.view_mut((0, u), (d, s)).copy_from(&(-&self.s_basis));
        } else {
            j0.view_mut((0, 0), (d, s)).copy_from(&self.s_basis);
            j0.view_mut((0, s), (d, u)).copy_from(&self.u_basis);
        }
        let normal = (j0.transpose() * &j0).lu();
        let mut xi = DVector::<f64>::zeros(u + s);
        let mut residual = f64::INFINITY;
        for _ in 0..PROJECT_MAX {
            let g = if u_first {
                let w = xi.rows(0, u).into_owned();
                let sigma = xi.rows(u, s).into_owned();
                self.drag(&(self.drag_inverse(p) + &self.u_basis * w))
                    - q
                    - &self.s_basis * sigma
            } else {
                let sigma = xi.rows(0, s).into_owned();
                let w = xi.rows(s, u).into_owned();
                let mid = p + &self.s_basis * sigma;
                self.drag(&(self.drag_inverse(&mid) + &self.u_basis * w)) - q
            };
            let next = g.norm();
            let delta = normal
                .solve(&(j0.transpose() * &g))
                .ok_or_else(|| CoreError::NotInvertible("two-leg normal matrix".into()))?;
            xi -= &delta;
            if (residual - next).abs() < 1e-16 && delta.norm() < 1e-13 {
                residual = next;
                break;
            }
            residual = next;
        }
        let (first, second) = if u_first {
            (xi.rows(0, u).into_owned(), xi.rows(u, s).into_owned())
        } else {
            (xi.rows(0, s).into_owned(), xi.rows(s, u).into_owned())
        };
        Ok((first, second, residual))
    }

    /// Appends the legs of the center flow for coordinate j over t whole and
    /// fractional quadrilaterals, advancing `cur`.
    fn center_flow_legs(
        &self,
        legs: &mut Vec<SuLeg>,
        cur: &mut DVector<f64>,
        j: usize,
        t: f64,
    ) -> Result<()> {
        let mut t = t;
        let mut step = |scale: f64, cur: &mut DVector<f64>| -> Result<()> {
            let corners = self.quad_corners(cur, j, scale, false)?;
            let path = self.quad_path(&corners, j, scale, false)?;
            legs.extend(path.legs);
            *cur = corners[4].clone();
            Ok(())
        };
        while t >= 1.0 {
            step(1.0, cur)?;
            t -= 1.0;
        }
        while t <= -1.0 {
            step(-1.0, cur)?;
            t += 1.0;
        }
        if t != 0.0 {
            step(t, cur)?;
        }
        Ok(())
    }

    /// Center displacement along w_j of the flow over t quadrilaterals,
    /// measured from the anchor.
    fn center_pickup(&self, j: usize, t: f64) -> Result<f64> {
        let moved = self.center_flow(&DVector::zeros(self.anchor().dim()), j, t)?;
        Ok(self.center_frame.column(j - 1).dot(&moved))
    }

    /// Inverts the per-quadrilateral pickup for a requested center
    /// displacement. Whole quadrilaterals land exactly on multiples of
    /// theta * eps, so integer parameters bracket the target exactly and
    /// the fractional remainder is found by bisection; the pickup is flat
    /// between the taper shells, which rules out Newton here. Returns None
    /// when the displacement needs more quadrilaterals than `budget`.
    fn invert_center_pickup(
        &self,
        j: usize,
        x: f64,
        budget: f64,
        tol: f64,
    ) -> Result<Option<f64>> {
        let speed = self.theta * self.eps;
        if x == 0.0 {
            return Ok(Some(0.0));
        }
        if x.abs() > budget * speed * (1.0 + 1e-9) {
            return Ok(None);
        }
        let rungs = x / speed;
        let near = rungs.round();
        if (x - near * speed).abs() <= 0.25 * tol {
            return Ok(Some(near));
        }
        let mut lo = rungs.floor();
        let mut hi = lo + 1.0;
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if self.center_pickup(j, mid)? < x {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(Some(0.5 * (lo + hi)))
    }

    /// Realizes a parameter vector of the coverage composition as explicit
    /// legs: one stable leg, the center quadrilaterals highest index first,
    /// one unstable leg.
    fn assemble_shot_legs(&self, p: &DVector<f64>, t: &DVector<f64>) -> Result<Vec<SuLeg>> {
        let (u, c, _) = self.dims;
        let speed = self.theta * self.eps;
        let mut legs = Vec::new();
        let mut cur = p.clone();
        let s_coeffs = DVector::from_column_slice(&t.as_slice()[u + c..]) * speed;
        let s_move = &self.s_basis * s_coeffs;
        if s_move.iter().any(|&v| v != 0.0) {
            let end = &cur + &s_move;
            legs.push(self.s_leg_between(&cur, &end));
            cur = end;
        }
        for j in (1..=c).rev() {
            self.center_flow_legs(&mut legs, &mut cur, j, t[u + j - 1])?;
        }
        let u_coeffs = DVector::from_column_slice(&t.as_slice()[..u]) * speed;
        let disp = &self.u_basis * &u_coeffs;
        if disp.iter().any(|&v| v != 0.0) {
            let end = self.shift_on_u_leaf(&cur, &disp, FlowFibers::Orthogonal)?;
            let w = {
                let x0 = self.drag_inverse(&cur);
                self.u_basis.transpose() * (self.drag_inverse(&end) - x0)
            };
            legs.push(self.u_leg_between(&cur, &w, &end));
        }
        Ok(legs)
    }

    /// Point-to-point su-path search, cheapest strategy first: identity,
    /// one unstable leg, one stable leg, a two-leg shot in both orders, and
    /// finally a full shot through the coverage composition whose center
    /// range is capped so the assembled path respects `max_legs`.
    pub fn su_connect(
        &self,
        p: &DVector<f64>,
        q: &DVector<f64>,
        max_legs: usize,
        tol: f64,
    ) -> Result<ConnectOutcome> {
        let d = self.anchor().dim();
        if p.len() != d || q.len() != d {
            return Err(CoreError::Dimension {
                expected: d,
                got: p.len().max(q.len()),
            });
        }
        self.inside_chart(p)?;
        self.inside_chart(q)?;
        let mut best = (q - p).norm();
        if best <= tol {
            return Ok(ConnectOutcome::Path(SuPath::default()));
        }

        if max_legs >= 1 {
            // Single unstable leg: is q on the dragged leaf through p?
            let (on_leaf, b) = self.project_to_leaf(p, q, FlowFibers::Orthogonal)?;
            let residual = b.norm();
            if residual <= tol {
                let w = {
                    let x0 = self.drag_inverse(p);
                    let target = self.drag_inverse(&on_leaf) - x0;
                    self.u_basis.transpose() * target
                };
                let leg = self.u_leg_between(p, &w, &on_leaf);
                return Ok(ConnectOutcome::Path(SuPath { legs: vec![leg] }));
            }
            best = best.min(residual);

            // Single stable leg.
            let delta = q - p;
            let tangential = &self.s_basis * (self.s_basis.transpose() * &delta);
            let off = (&delta - &tangential).norm();
            if off <= tol {
                let end = p + tangential;
                let leg = self.s_leg_between(p, &end);
                return Ok(ConnectOutcome::Path(SuPath { legs: vec![leg] }));
            }
            best = best.min(off);
        }

        if max_legs >= 2 {
            for u_first in [true, false] {
                let (first, second, residual) = self.two_leg_shot(p, q, u_first)?;
                if residual <= tol {
                    let legs = if u_first {
                        // The shot's residual is mid - q - S sigma, so the
                        // closing stable displacement is -S sigma.
                        let x0 = self.drag_inverse(p);
                        let mid = self.drag(&(&x0 + &self.u_basis * &first));
                        let end = &mid - &self.s_basis * &second;
                        vec![
                            self.u_leg_between(p, &first, &mid),
                            self.s_leg_between(&mid, &end),
                        ]
                    } else {
                        let mid = p + &self.s_basis * &first;
                        let m0 = self.drag_inverse(&mid);
                        let end = self.drag(&(&m0 + &self.u_basis * &second));
                        vec![
                            self.s_leg_between(p, &mid),
                            self.u_leg_between(&mid, &second, &end),
                        ]
                    };
                    return Ok(ConnectOutcome::Path(SuPath { legs }));
                }
                best = best.min(residual);
            }
        }

        // Full shot through the coverage composition. Reserve two legs for
        // the stable and unstable blocks; each whole or fractional center
        // quadrilateral costs four legs. The stage displacements add, so the
        // stable and unstable coefficients come straight off the frame; each
        // center coordinate is inverted through its quadrilateral pickup,
        // and a short outer loop absorbs the leakage of a final fractional
        // quadrilateral into the other blocks.
        if !self.bumps.is_empty() && max_legs >= 6 {
            let (u, c, s) = self.dims;
            let quad_budget = ((max_legs - 2) / 4) as f64;
            let speed = self.theta * self.eps;
            let delta = q - p;
            if let Some(a) = self.frame_lu.solve(&delta) {
                let mut t = DVector::<f64>::zeros(d);
                for i in 0..u {
                    t[i] = a[i] / speed;
                }
                for i in 0..s {
                    t[u + c + i] = a[u + c + i] / speed;
                }
                let mut want_c: Vec<f64> = (0..c).map(|k| a[u + k]).collect();
                let mut feasible = true;
                for j in 1..=c {
                    match self.invert_center_pickup(j, want_c[j - 1], quad_budget, tol)? {
                        Some(tj) => t[u + j - 1] = tj,
                        None => {
                            feasible = false;
                            break;
                        }
                    }
                }
                if feasible {
                    for _ in 0..8 {
                        let image = match self.coverage_map(p, t.as_slice()) {
                            Ok(image) => image,
                            Err(_) => break,
                        };
                        let r = &image - q;
                        let norm = r.norm();
                        best = best.min(norm);
                        if norm <= tol {
                            let legs = self.assemble_shot_legs(p, &t)?;
                            if legs.len() <= max_legs {
                                return Ok(ConnectOutcome::Path(SuPath { legs }));
                            }
                            break;
                        }
                        let Some(b) = self.frame_lu.solve(&r) else {
                            break;
                        };
                        for i in 0..u {
                            t[i] -= b[i] / speed;
                        }
                        for i in 0..s {
                            t[u + c + i] -= b[u + c + i] / speed;
                        }
                        let mut still = true;
                        for j in 1..=c {
                            if b[u + j - 1].abs() <= 0.25 * tol {
                                continue;
                            }
                            want_c[j - 1] -= b[u + j - 1];
                            match self.invert_center_pickup(
                                j,
                                want_c[j - 1],
                                quad_budget,
                                tol,
                            )? {
                                Some(tj) => t[u + j - 1] = tj,
                                None => {
                                    still = false;
                                    break;
                                }
                            }
                        }
                        if !still {
                            break;
                        }
                    }
                }
            }
        }

        Ok(ConnectOutcome::Failure {
            best_residual: best,
        })
    }
}

/// Center displacement per quadrilateral divided by eps, re-measured while
/// eps halves. The ratio should hold at theta across scales.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScalingTrend {
    pub eps: Vec<f64>,
    pub ratio: Vec<f64>,
    pub theta: f64,
    pub drift: Vec<f64>,
}

/// Rebuilds the ball at eps, eps/2, ..., eps/2^halvings and measures the
/// full-scale center pickup of the first quadrilateral at the anchor.
pub fn holonomy_scaling(
    map: &dyn DynamicalMap,
    anchor: &TorusPoint,
    cfg: &AccessConfig,
    halvings: usize,
) -> Result<ScalingTrend> {
    let d = map.dim();
    let mut out = ScalingTrend {
        eps: Vec::new(),
        ratio: Vec::new(),
        theta: 0.0,
        drift: Vec::new(),
    };
    for k in 0..=halvings {
        let mut scaled = cfg.clone();
        scaled.eps = cfg.eps / f64::powi(2.0, k as i32);
        let ball = AccessBall::build(map, anchor, &scaled)?;
        let holonomy = ball.quadrilateral_holonomy(&DVector::zeros(d), 1, 1.0)?;
        out.theta = ball.theta();
        out.eps.push(scaled.eps);
        out.ratio.push(holonomy.center_component / scaled.eps);
        out.drift
            .push((holonomy.center_component / scaled.eps - ball.theta()).abs());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::ExecMode;
    use crate::leaves::{compute_local_leaf, LeafConfig, LeafKind};
    use crate::maps::{iterate_inverse, CatSkew3};
    use nalgebra::DVector;

    const EPS: f64 = 2.5e-4;
    const DIMS: (usize, usize, usize) = (1, 1, 1);

    fn anchor() -> TorusPoint {
        TorusPoint::from_slice(&[0.13, 0.41, 0.27])
    }

    fn skew_ball() -> AccessBall {
        let map = CatSkew3::new(0.3);
        AccessBall::build(&map, &anchor(), &AccessConfig::new(EPS, DIMS)).expect("ball")
    }

    #[test]
    fn quadrilateral_translates_by_the_center_step() {
        let ball = skew_ball();
        let step = ball.theta() * ball.eps();
        let w1 = ball.center_basis().column(0).into_owned();
        let d = 3;

        let x = DVector::zeros(d);
        let plus = ball.quadrilateral_holonomy(&x, 1, 1.0).expect("holonomy");
        let disp = DVector::from_column_slice(&plus.displacement);
        assert!((disp - &w1 * step).norm() < 1e-12, "defect {:e}", (DVector::from_column_slice(&plus.displacement) - &w1 * step).norm());
        assert!((plus.center_component / step - 1.0).abs() < 1e-9);
        assert!(plus.off_center_residual < 1e-12);

        // Opposite scale routes the third leg past the opposite bump.
        let minus = ball.quadrilateral_holonomy(&x, 1, -1.0).expect("holonomy");
        let disp = DVector::from_column_slice(&minus.displacement);
        assert!((disp + &w1 * step).norm() < 1e-12);

        // The swapped leg ordering also flips the sign.
        let swapped = ball.quadrilateral_swapped(&x, 1, 1.0).expect("holonomy");
        let disp = DVector::from_column_slice(&swapped.displacement);
        assert!((disp + &w1 * step).norm() < 1e-12);

        // Still exact from a start near the working-ball edge: the plateau
        // radius 2.2 d eps covers every |x| <= 2 d eps start.
        let mut edge = ball.unstable_direction() + &w1;
        edge /= edge.norm();
        edge *= 1.9 * 3.0 * EPS;
        let off = ball.quadrilateral_holonomy(&edge, 1, 1.0).expect("holonomy");
        let disp = DVector::from_column_slice(&off.displacement);
        assert!((disp - &w1 * step).norm() < 1e-11);
    }

    #[test]
    fn unperturbed_and_degenerate_quadrilaterals_close() {
        let ball = skew_ball();
        let plain = ball.without_bumps();
        let x = DVector::zeros(3);

        for scale in [1.0, -1.0, 0.6] {
            let h = plain.quadrilateral_holonomy(&x, 1, scale).expect("holonomy");
            let disp = DVector::from_column_slice(&h.displacement);
            assert!(disp.norm() < 1e-12, "open quadrilateral: {:e}", disp.norm());
        }

        // Zero scale degenerates every leg and returns the start exactly.
        let zero = ball.quadrilateral_holonomy(&x, 1, 0.0).expect("holonomy");
        assert!(zero.displacement.iter().all(|&v| v == 0.0));
        assert_eq!(zero.path.len(), 4);
    }

    #[test]
    fn fractional_scale_pickup_is_monotone() {
        let ball = skew_ball();
        let step = ball.theta() * ball.eps();
        let x = DVector::zeros(3);
        let mut previous = 0.0;
        for k in 0..=10 {
            let scale = k as f64 / 10.0;
            let h = ball.quadrilateral_holonomy(&x, 1, scale).expect("holonomy");
            assert!(
                h.center_component >= previous - 1e-13,
                "pickup fell from {previous:e} to {:e} at scale {scale}",
                h.center_component
            );
            assert!(h.center_component <= step * (1.0 + 1e-9));
            previous = h.center_component;
        }
        assert!((previous / step - 1.0).abs() < 1e-9);
    }

    #[test]
    fn wide_legs_overshoot_the_bump_shells() {
        let map = CatSkew3::new(0.3);
        let mut cfg = AccessConfig::new(EPS, DIMS);
        cfg.convention = LegConvention::Wide;
        let ball = AccessBall::build(&map, &anchor(), &cfg).expect("ball");
        // With every leg spanning 40 j d eps the s-excursion parks the
        // backward u-leg far outside the bump supports, so nothing is
        // picked up; the quadrilateral closes like the unperturbed one.
        let h = ball
            .quadrilateral_holonomy(&DVector::zeros(3), 1, 1.0)
            .expect("holonomy");
        let disp = DVector::from_column_slice(&h.displacement);
        assert!(disp.norm() < 1e-12, "wide pickup {:e}", disp.norm());
    }

    #[test]
    fn theta_access_report_flags_missing_bumps() {
        let ball = skew_ball();
        let report = ball.theta_access_check(ExecMode::Auto).expect("report");
        assert!(report.pass_base);
        assert!(report.pass_legs, "legs: gap {:e} residual {:e}", report.endpoint_gap, report.leaf_residual);
        assert!(report.pass_identity, "identity defect {:e} vs {:e}", report.identity_defect, report.identity_bound);
        assert!(report.pass_translation, "translation defect {:e} vs {:e}", report.translation_defect, report.translation_bound);
        assert!(report.pass);

        let plain = ball.without_bumps();
        let report = plain.theta_access_check(ExecMode::Auto).expect("report");
        assert!(report.pass_base && report.pass_legs && report.pass_identity);
        assert!(!report.pass_translation, "no bumps, yet translation defect {:e}", report.translation_defect);
        assert!(!report.pass);
    }

    #[test]
    fn flows_track_straight_lines_within_the_stated_slack() {
        // Displacement bound for the leafwise flows: a slide of length tau
        // stays within |tau| / (10 d) of the straight translation even when
        // the leaf threads a bump.
        let ball = skew_ball();
        let d = 3.0;
        let start = ball.stable_direction() * (10.0 * d * EPS)
            - ball.unstable_direction() * (5.0 * d * EPS);
        for k in 1..=12 {
            let tau = k as f64 * d * EPS;
            for fibers in [FlowFibers::Adapted, FlowFibers::Orthogonal] {
                let moved = ball.flow_u(&start, tau, fibers).expect("flow");
                let defect = (&moved - &start - ball.unstable_direction() * tau).norm();
                assert!(
                    defect < tau / (10.0 * d),
                    "defect {defect:e} over bound {:e} at tau {tau:e} ({})",
                    tau / (10.0 * d),
                    fibers.label()
                );
            }
        }
    }

    #[test]
    fn coverage_certificate_engulfs_the_target_ball() {
        let ball = skew_ball();
        let x0 = DVector::zeros(3);
        let cfg = CoverageConfig {
            boundary_resolution: 3,
            shell_radii: vec![1.0, 2.4],
            diagonal_targets: false,
            ..CoverageConfig::default()
        };
        let report = ball.brouwer_coverage(&x0, &cfg, ExecMode::Auto).expect("coverage");
        assert!(report.boundary_pass, "boundary defect {:e} vs {:e}", report.boundary_defect, report.boundary_bound);
        assert!(report.covered_radius >= 2.4 * EPS, "covered {:e}", report.covered_radius);
        assert!(report.pass);

        // The zero parameter returns the base point bitwise.
        let fixed = ball.coverage_map(&x0, &[0.0, 0.0, 0.0]).expect("eval");
        assert!(fixed.iter().zip(x0.iter()).all(|(a, b)| a == b));

        // Without bumps the center directions are unreachable and the
        // affine comparison on the boundary fails at the center faces.
        let plain = ball.without_bumps();
        let report = plain.brouwer_coverage(&x0, &cfg, ExecMode::Auto).expect("coverage");
        assert!(!report.boundary_pass);
        assert_eq!(report.covered_radius, 0.0);
        assert!(!report.pass);
    }

    #[test]
    fn su_connect_finds_short_ladders() {
        let ball = skew_ball();
        let p = DVector::zeros(3);
        let tol = 1e-7;

        let same = ball.su_connect(&p, &p, 8, tol).expect("connect");
        assert!(matches!(&same, ConnectOutcome::Path(path) if path.is_empty()));

        let on_leaf = ball
            .flow_u(&p, 2.0e-3, FlowFibers::Orthogonal)
            .expect("flow");
        let got = ball.su_connect(&p, &on_leaf, 8, tol).expect("connect");
        let path = got.path().expect("one-leg path");
        assert_eq!(path.len(), 1);
        assert_eq!(path.legs[0].kind, LegKind::Unstable);
        let check = path.validate(&ball).expect("validate");
        assert!(check.passes(tol));

        let on_stable = &p + ball.stable_direction() * 1.5e-3;
        let got = ball.su_connect(&p, &on_stable, 8, tol).expect("connect");
        let path = got.path().expect("one-leg path");
        assert_eq!(path.len(), 1);
        assert_eq!(path.legs[0].kind, LegKind::Stable);

        let mid = ball
            .flow_u(&p, 1.4e-3, FlowFibers::Orthogonal)
            .expect("flow");
        let two = &mid + ball.stable_direction() * -2.1e-3;
        let got = ball.su_connect(&p, &two, 8, tol).expect("connect");
        let path = got.path().expect("two-leg path");
        assert_eq!(path.len(), 2);
        let check = path.validate(&ball).expect("validate");
        assert!(check.passes(tol), "gap {:e} residual {:e}", check.endpoint_gap, check.leaf_residual);
        let end = path.endpoint().expect("endpoint");
        assert!((end - &two).norm() <= tol);

        // A center offset needs the quadrilateral ladder.
        let step = ball.theta() * ball.eps();
        let center_target = &p + ball.center_basis().column(0) * (0.8 * step);
        let got = ball.su_connect(&p, &center_target, 8, tol).expect("connect");
        let path = got.path().expect("quadrilateral path");
        assert!(path.len() <= 8, "path used {} legs", path.len());
        let end = path.endpoint().expect("endpoint");
        assert!((end - &center_target).norm() <= tol);
        let check = path.validate(&ball).expect("validate");
        assert!(check.passes(tol));

        // Out of reach within the leg budget: one quadrilateral moves the
        // center by at most theta * eps.
        let far = &p + ball.center_basis().column(0) * (5.0 * step);
        let got = ball.su_connect(&p, &far, 8, tol).expect("connect");
        match got {
            ConnectOutcome::Failure { best_residual } => {
                assert!(best_residual > tol);
                assert!(best_residual < 6.0 * step);
            }
            ConnectOutcome::Path(_) => panic!("budget should not reach 5 theta eps"),
        }
    }

    #[test]
    fn graph_transform_leaves_match_the_dragged_model() {
        // Cross-check of the two leaf engines on a composed map with linear
        // base: where the backward orbit leaves the bump supports and stays
        // out, the invariant unstable leaf is exactly the dragged model
        // leaf. The start sits inside the first bump so the bend is active.
        let ball = {
            let map = CatSkew3::linear();
            AccessBall::build(&map, &anchor(), &AccessConfig::new(EPS, DIMS)).expect("ball")
        };
        let composed = ball
            .composed(Box::new(CatSkew3::linear()))
            .expect("composed");

        let x_chart = ball.stable_direction() * (10.0 * 3.0 * EPS)
            + ball.unstable_direction() * (0.5 * 3.0 * EPS);
        let x = ball.embed(&x_chart).expect("embed");

        // Precondition: the backward orbit must not re-enter any support.
        let mut probe = x.clone();
        for step in 1..=20 {
            probe = iterate_inverse(&composed, &probe, 1).expect("backward");
            for bump in ball.bumps() {
                let dist = probe.dist(&bump.support_center());
                assert!(
                    dist > bump.support_radius(),
                    "backward orbit re-enters a support at step {step}"
                );
            }
        }

        let leaf = compute_local_leaf(
            &composed,
            &x,
            LeafKind::Unstable,
            &LeafConfig::new(0.004, 1),
        )
        .expect("leaf");
        let mut worst = 0.0f64;
        for k in 0..=8 {
            let a = DVector::from_vec(vec![0.004 * (k as f64 / 8.0 * 2.0 - 1.0)]);
            let node = leaf.point_at(&a).expect("node");
            let node_chart = ball.lift(&node).expect("lift");
            let residual = ball
                .u_leaf_residual(&x_chart, &node_chart)
                .expect("residual");
            worst = worst.max(residual);
        }
        assert!(worst < 1e-8, "engines disagree by {worst:e}");
    }

    #[test]
    fn holonomy_scaling_keeps_the_ratio_pinned() {
        let map = CatSkew3::new(0.3);
        let trend =
            holonomy_scaling(&map, &anchor(), &AccessConfig::new(EPS, DIMS), 2).expect("trend");
        assert_eq!(trend.eps.len(), 3);
        for (k, drift) in trend.drift.iter().enumerate() {
            // The pickup is exact on the plateau; what remains is the
            // absolute chord-solve tolerance divided by a shrinking eps.
            assert!(
                drift / trend.theta < 1e-4,
                "ratio drifted by {drift:e} at eps {}",
                trend.eps[k]
            );
        }
    }

    #[test]
    fn ball_construction_rejects_bad_parameters() {
        let map = CatSkew3::new(0.3);
        // Container too large for the chart.
        let big = AccessConfig::new(4.0e-4, DIMS);
        assert!(AccessBall::build(&map, &anchor(), &big).is_err());
        // Center step too large for the identity allowance.
        let mut hot = AccessConfig::new(EPS, DIMS);
        hot.alpha = 0.05;
        assert!(AccessBall::build(&map, &anchor(), &hot).is_err());
        // No center directions to translate along.
        let mut flat = AccessConfig::new(EPS, (2, 0, 1));
        flat.dims = (2, 0, 1);
        assert!(AccessBall::build(&map, &anchor(), &flat).is_err());
    }
}
