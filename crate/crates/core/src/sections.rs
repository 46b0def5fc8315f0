//! Center-section combinatorics: admissible disks, certified return times,
//! low-period sets, offset ball covers along the unstable direction, and
//! disk families whose first return is pushed past a prescribed depth.
//!
//! Return times are certified through outer hulls. Segments that the map
//! translates exactly stay segments; everything else inflates by a measured
//! Lipschitz factor. Disjointness always carries a margin, and a pair that
//! can neither be separated nor witnessed is reported as indeterminate
//! instead of guessed.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector, LU};
use serde::Serialize;

use crate::cones::compute_splitting;
use crate::error::CoreError;
use crate::exec::{self, ExecMode, UnitGrid};
use crate::maps::{self, DynamicalMap};
use crate::perturb::CHART_RADIUS;
use crate::torus::{unit_sphere_points, TorusPoint};
use crate::Result;

/// Largest component count the pairwise oracles accept.
const MAX_PIECES: usize = 20_000;
/// Hull extent at which propagation stops producing certified statements.
const HULL_LIMIT: f64 = 0.2;
/// Padding added per propagation step for floating-point drift.
const STEP_SLACK: f64 = 1e-13;
/// Gap below which a pair needs an explicit witness to be classified.
const AMBIGUITY: f64 = 1e-10;
/// Distance at which an exactly propagated point counts as a member.
const WITNESS_TOL: f64 = 1e-9;

fn wrap_unit(x: f64) -> f64 {
    x - x.round()
}

fn plane_dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    wrap_unit(a[0] - b[0]).hypot(wrap_unit(a[1] - b[1]))
}

/// Deterministic low-discrepancy scalar in [0, 1); `lane` decorrelates uses.
fn weyl(i: usize, lane: u64) -> f64 {
    let a = (i as f64 + 1.0) * 0.618_033_988_749_894_9;
    let b = (lane as f64 + 1.0) * 0.754_877_666_246_692_9;
    (a + b).fract()
}

fn weyl_point(dim: usize, i: usize, lane: u64) -> TorusPoint {
    let coords: Vec<f64> = (0..dim).map(|k| weyl(i * dim + k, lane)).collect();
    TorusPoint::from_slice(&coords)
}

/// Probe set for structure detection; includes the lattice corners where the
/// example maps reach their extreme derivatives.
fn probe_points(dim: usize) -> Vec<TorusPoint> {
    let mut pts = vec![
        TorusPoint::origin(dim),
        TorusPoint::from_slice(&vec![0.25; dim]),
        TorusPoint::from_slice(&vec![0.5; dim]),
    ];
    pts.extend((0..4).map(|i| weyl_point(dim, i, 2)));
    pts
}

fn operator_norm(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .singular_values()
        .iter()
        .fold(0.0f64, |a, &b| a.max(b))
}

/// Measured Lipschitz constant of the forward map. Exact for constant
/// differentials; otherwise a sampled supremum with a safety factor, which is
/// adequate for the smooth example maps whose derivative oscillates slowly.
fn lipschitz_bound(map: &dyn DynamicalMap) -> f64 {
    let mut pts = probe_points(map.dim());
    pts.extend((0..33).map(|i| weyl_point(map.dim(), i, 5)));
    let mut sup = 0.0f64;
    let mut constant = true;
    let mut first: Option<DMatrix<f64>> = None;
    for p in &pts {
        let d = map.differential(p);
        sup = sup.max(operator_norm(&d));
        match &first {
            None => first = Some(d),
            Some(f) => {
                if (f - &d).amax() > 1e-12 {
                    constant = false;
                }
            }
        }
    }
    if constant {
        sup
    } else {
        sup * 1.05 + 1e-9
    }
}

// ---------------------------------------------------------------------------
// region pieces and certified return times

/// Component of a region submitted to the return-time oracle.
#[derive(Clone, Debug)]
pub enum Piece {
    Ball {
        center: TorusPoint,
        radius: f64,
    },
    /// Segment {center + t axis : |t| <= half} with a unit axis.
    Arc {
        center: TorusPoint,
        axis: DVector<f64>,
        half: f64,
    },
}

impl Piece {
    pub fn ball(center: TorusPoint, radius: f64) -> Piece {
        Piece::Ball { center, radius }
    }

    pub fn arc(center: TorusPoint, axis: DVector<f64>, half: f64) -> Piece {
        Piece::Arc { center, axis, half }
    }

    fn center(&self) -> &TorusPoint {
        match self {
            Piece::Ball { center, .. } | Piece::Arc { center, .. } => center,
        }
    }

    fn pad(&self) -> f64 {
        match self {
            Piece::Ball { radius, .. } => *radius,
            Piece::Arc { .. } => 0.0,
        }
    }

    fn segment(&self) -> Option<(&DVector<f64>, f64)> {
        match self {
            Piece::Ball { .. } => None,
            Piece::Arc { axis, half, .. } => Some((axis, *half)),
        }
    }

    fn witness_points(&self) -> Vec<TorusPoint> {
        match self {
            Piece::Ball { center, .. } => vec![center.clone()],
            Piece::Arc { center, axis, half } => vec![
                center.clone(),
                center.translate(&(axis * *half)),
                center.translate(&(axis * -*half)),
            ],
        }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        match self {
            Piece::Ball { center, radius } => {
                if center.dim() != dim {
                    return Err(CoreError::Dimension {
                        expected: dim,
                        got: center.dim(),
                    });
                }
                if !(*radius >= 0.0 && *radius < HULL_LIMIT) {
                    return Err(CoreError::parameter("ball radius outside [0, hull limit)"));
                }
            }
            Piece::Arc { center, axis, half } => {
                if center.dim() != dim || axis.len() != dim {
                    return Err(CoreError::Dimension {
                        expected: dim,
                        got: axis.len(),
                    });
                }
                if (axis.norm() - 1.0).abs() > 1e-9 {
                    return Err(CoreError::parameter("arc axis must be a unit vector"));
                }
                if !(*half > 0.0 && *half < HULL_LIMIT) {
                    return Err(CoreError::parameter("arc half-length outside (0, hull limit)"));
                }
            }
        }
        Ok(())
    }
}

fn point_segment_distance(
    delta: &DVector<f64>,
    axis: &DVector<f64>,
    half: f64,
) -> f64 {
    let t = axis.dot(delta).clamp(-half, half);
    (delta - axis * t).norm()
}

/// Distance between the cores (point or segment) of two components. For
/// parallel segments the value is exact; skew segments get a sound lower
/// bound, which only ever makes the disjointness test more conservative.
fn core_distance(
    ca: &TorusPoint,
    sa: Option<(&DVector<f64>, f64)>,
    cb: &TorusPoint,
    sb: Option<(&DVector<f64>, f64)>,
) -> f64 {
    let delta = ca.displacement_to(cb);
    match (sa, sb) {
        (None, None) => delta.norm(),
        (Some((u, h)), None) => point_segment_distance(&delta, u, h),
        (None, Some((v, h))) => point_segment_distance(&cb.displacement_to(ca), v, h),
        (Some((u, ha)), Some((v, hb))) => {
            if u.dot(v).abs() > 1.0 - 1e-9 {
                let axial = u.dot(&delta);
                let gap = (axial.abs() - (ha + hb)).max(0.0);
                let perp = (&delta - u * axial).norm();
                perp.hypot(gap)
            } else {
                let via_a = point_segment_distance(&delta, u, ha) - hb;
                let via_b = point_segment_distance(&cb.displacement_to(ca), v, hb) - ha;
                via_a.max(via_b).max(0.0)
            }
        }
    }
}

struct Hull {
    center: TorusPoint,
    axis: Option<(DVector<f64>, f64)>,
    pad: f64,
}

impl Hull {
    fn from_piece(p: &Piece) -> Hull {
        Hull {
            center: p.center().clone(),
            axis: p.segment().map(|(a, h)| (a.clone(), h)),
            pad: p.pad(),
        }
    }

    fn segment(&self) -> Option<(&DVector<f64>, f64)> {
        self.axis.as_ref().map(|(a, h)| (a, *h))
    }

    fn propagate(&mut self, map: &dyn DynamicalMap, lip: f64, step: usize) -> Result<()> {
        let next = map.eval(&self.center);
        if let Some((axis, half)) = &self.axis {
            // keep the segment only when the map translates it exactly;
            // otherwise demote it to an enclosing ball before inflating
            let plus = map.eval(&self.center.translate(&(axis * *half)));
            let minus = map.eval(&self.center.translate(&(axis * -*half)));
            let keep = plus.dist(&next.translate(&(axis * *half))) <= 1e-10
                && minus.dist(&next.translate(&(axis * -*half))) <= 1e-10;
            if !keep {
                self.pad += *half;
                self.axis = None;
            }
        }
        self.pad = lip * self.pad + STEP_SLACK;
        self.center = next;
        let extent = self.pad + self.axis.as_ref().map_or(0.0, |(_, h)| *h);
        if extent > HULL_LIMIT {
            return Err(CoreError::Indeterminate(format!(
                "hull extent {extent:.3e} exceeds {HULL_LIMIT} after {step} steps; \
                 no certified return statement is possible"
            )));
        }
        Ok(())
    }
}

/// First-return depth of a finite union of components.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum ReturnTime {
    /// The first visit of the union to itself happens after `n + 1` steps.
    At(usize),
    /// No visit within the inspected horizon.
    MoreThan(usize),
}

impl ReturnTime {
    pub fn exceeds(&self, depth: usize) -> bool {
        match self {
            ReturnTime::At(n) => *n > depth,
            ReturnTime::MoreThan(m) => *m >= depth,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ReturnReport {
    pub time: ReturnTime,
    /// Iterates fully certified as disjoint from the union.
    pub steps_cleared: usize,
    /// Smallest certified separation among the cleared steps.
    pub min_gap: f64,
    /// Distance realizing the first verified visit, when one exists.
    pub witness_gap: Option<f64>,
}

struct PairScan {
    hit: Option<f64>,
    ambiguous: bool,
    gap: f64,
}

/// Certified first-return depth of the union of `pieces` under `map`,
/// inspected for `1 <= i <= j_max + 1` forward steps. Backward visits need no
/// separate pass: `f^-i(X)` meets `X` exactly when `f^i(X)` does, by applying
/// `f^i` to the intersection.
pub fn return_time(
    map: &dyn DynamicalMap,
    pieces: &[Piece],
    j_max: usize,
) -> Result<ReturnReport> {
    let dim = map.dim();
    if pieces.is_empty() {
        return Err(CoreError::parameter("return time needs at least one piece"));
    }
    if pieces.len() > MAX_PIECES {
        return Err(CoreError::Capacity(format!(
            "{} pieces exceed the pairwise cap {MAX_PIECES}",
            pieces.len()
        )));
    }
    if j_max > 64 {
        return Err(CoreError::parameter("return horizon capped at 64"));
    }
    for p in pieces {
        p.validate(dim)?;
    }

    let lip = lipschitz_bound(map);
    let mut hulls: Vec<Hull> = pieces.iter().map(Hull::from_piece).collect();
    let mut witnesses: Vec<Vec<TorusPoint>> =
        pieces.iter().map(Piece::witness_points).collect();
    let mut min_gap = f64::INFINITY;

    for step in 1..=j_max + 1 {
        for h in hulls.iter_mut() {
            h.propagate(map, lip, step)?;
        }
        for ws in witnesses.iter_mut() {
            for w in ws.iter_mut() {
                *w = map.eval(w);
            }
        }

        let rows: Vec<PairScan> = exec::map_indexed(ExecMode::Auto, hulls.len(), |a| {
            let ha = &hulls[a];
            let mut row = PairScan {
                hit: None,
                ambiguous: false,
                gap: f64::INFINITY,
            };
            for pb in pieces {
                let core = core_distance(&ha.center, ha.segment(), pb.center(), pb.segment());
                let gap = core - ha.pad - pb.pad();
                if gap <= AMBIGUITY {
                    let mut best = f64::INFINITY;
                    for w in &witnesses[a] {
                        let wd = core_distance(w, None, pb.center(), pb.segment()) - pb.pad();
                        best = best.min(wd);
                    }
                    if best <= WITNESS_TOL {
                        let hit = best.max(0.0);
                        row.hit = Some(row.hit.map_or(hit, |h: f64| h.min(hit)));
                    } else {
                        row.ambiguous = true;
                    }
                } else {
                    row.gap = row.gap.min(gap);
                }
            }
            row
        });

        let hit = rows
            .iter()
            .filter_map(|r| r.hit)
            .fold(f64::INFINITY, f64::min);
        if hit.is_finite() {
            return Ok(ReturnReport {
                time: ReturnTime::At(step - 1),
                steps_cleared: step - 1,
                min_gap,
                witness_gap: Some(hit),
            });
        }
        if let Some(row) = rows.iter().find(|r| r.ambiguous) {
            let _ = row;
            return Err(CoreError::Indeterminate(format!(
                "step {step}: hulls touch without an intersection witness"
            )));
        }
        min_gap = rows.iter().fold(min_gap, |m, r| m.min(r.gap));
    }

    Ok(ReturnReport {
        time: ReturnTime::MoreThan(j_max),
        steps_cleared: j_max + 1,
        min_gap,
        witness_gap: None,
    })
}

// ---------------------------------------------------------------------------
// map structure probes and integer lattice enumeration

enum MapShape {
    Linear(Vec<Vec<i64>>),
    Skew {
        base: Vec<usize>,
        fiber: Vec<usize>,
        block: Vec<Vec<i64>>,
    },
    General,
}

/// Sample-based structure classification. The lattice paths downstream are
/// exact for maps that really are linear or fiber-translation skews; a map
/// that deviates only on a small set can defeat the probes, so callers that
/// perturb locally must use the seeded path instead.
fn probe_shape(map: &dyn DynamicalMap) -> MapShape {
    let d = map.dim();
    let pts = probe_points(d);
    let diffs: Vec<DMatrix<f64>> = pts.iter().map(|p| map.differential(p)).collect();

    let mut fiber: Vec<usize> = Vec::new();
    'cols: for j in 0..d {
        for m in &diffs {
            for i in 0..d {
                let want = if i == j { 1.0 } else { 0.0 };
                if (m[(i, j)] - want).abs() > 1e-12 {
                    continue 'cols;
                }
            }
        }
        // the coordinate translation must commute with the map
        for (p, t) in [(&pts[3], 0.3217), (&pts[4], 0.1103)] {
            let mut shifted = p.coords().clone();
            shifted[j] += t;
            let moved = map.eval(&TorusPoint::new(shifted));
            let mut expect = map.eval(p).coords().clone();
            expect[j] += t;
            if moved.dist(&TorusPoint::new(expect)) > 1e-11 {
                continue 'cols;
            }
        }
        fiber.push(j);
    }

    let base: Vec<usize> = (0..d).filter(|i| !fiber.contains(i)).collect();
    if fiber.len() == d {
        // every coordinate is fixed-direction: identity or a translation
        let rows: Vec<Vec<i64>> = (0..d)
            .map(|i| (0..d).map(|j| i64::from(i == j)).collect())
            .collect();
        return MapShape::Linear(rows);
    }

    let integer_block = |idx: &[usize]| -> Option<Vec<Vec<i64>>> {
        let m0 = &diffs[0];
        for m in &diffs[1..] {
            for &r in idx {
                for &c in idx {
                    if (m[(r, c)] - m0[(r, c)]).abs() > 1e-12 {
                        return None;
                    }
                }
            }
        }
        let mut block = vec![vec![0i64; idx.len()]; idx.len()];
        for (ri, &r) in idx.iter().enumerate() {
            for (ci, &c) in idx.iter().enumerate() {
                let v = m0[(r, c)];
                if (v - v.round()).abs() > 1e-9 {
                    return None;
                }
                block[ri][ci] = v.round() as i64;
            }
        }
        Some(block)
    };

    if fiber.is_empty() {
        let all: Vec<usize> = (0..d).collect();
        if let Some(block) = integer_block(&all) {
            // a constant integer differential must also reproduce the map
            let p = &pts[3];
            let mut image = DVector::zeros(d);
            for r in 0..d {
                for c in 0..d {
                    image[r] += block[r][c] as f64 * p.coords()[c];
                }
            }
            if map.eval(p).dist(&TorusPoint::new(image)) <= 1e-10 {
                return MapShape::Linear(block);
            }
        }
        return MapShape::General;
    }

    match integer_block(&base) {
        Some(block) => MapShape::Skew { base, fiber, block },
        None => MapShape::General,
    }
}

fn int_matmul(a: &[Vec<i64>], b: &[Vec<i64>]) -> Result<Vec<Vec<i64>>> {
    let n = a.len();
    let mut out = vec![vec![0i64; n]; n];
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0i64;
            for k in 0..n {
                let term = a[i][k]
                    .checked_mul(b[k][j])
                    .ok_or_else(|| CoreError::Capacity("integer matrix power overflow".into()))?;
                acc = acc
                    .checked_add(term)
                    .ok_or_else(|| CoreError::Capacity("integer matrix power overflow".into()))?;
            }
            out[i][j] = acc;
        }
    }
    Ok(out)
}

fn int_matpow(a: &[Vec<i64>], k: usize) -> Result<Vec<Vec<i64>>> {
    let n = a.len();
    let mut out: Vec<Vec<i64>> = (0..n)
        .map(|i| (0..n).map(|j| i64::from(i == j)).collect())
        .collect();
    for _ in 0..k {
        out = int_matmul(&out, a)?;
    }
    Ok(out)
}

/// Column Hermite form: column operations only, so the column lattice is
/// preserved. Returns a lower-triangular matrix with positive diagonal.
fn column_hermite(m: &[Vec<i64>]) -> Vec<Vec<i64>> {
    let n = m.len();
    let mut h: Vec<Vec<i64>> = m.to_vec();
    for r in 0..n {
        loop {
            // move the smallest nonzero entry of row r (columns >= r) to r
            let mut pivot: Option<usize> = None;
            for c in r..n {
                if h[r][c] != 0 && pivot.is_none_or(|p| h[r][c].abs() < h[r][p].abs()) {
                    pivot = Some(c);
                }
            }
            let Some(p) = pivot else { break };
            if p != r {
                for row in h.iter_mut() {
                    row.swap(r, p);
                }
            }
            let mut reduced = true;
            for c in r + 1..n {
                if h[r][c] != 0 {
                    let q = h[r][c].div_euclid(h[r][r]);
                    for row in h.iter_mut() {
                        row[c] -= q * row[r];
                    }
                    if h[r][c] != 0 {
                        reduced = false;
                    }
                }
            }
            if reduced {
                break;
            }
        }
        if h[r][r] < 0 {
            for row in h.iter_mut() {
                row[r] = -row[r];
            }
        }
    }
    h
}

/// Exact rational periodic point of an integer linear block.
struct LatticePoint {
    num: Vec<i64>,
    den: i64,
    period: usize,
}

impl LatticePoint {
    fn coords(&self) -> Vec<f64> {
        self.num
            .iter()
            .map(|&n| n as f64 / self.den as f64)
            .collect()
    }
}

/// All periodic points of the block with minimal period <= j, solved exactly
/// over the integers. Requires every `A^k - I` to be nonsingular.
fn periodic_lattice(block: &[Vec<i64>], j: usize) -> Result<Vec<LatticePoint>> {
    let n = block.len();
    let mut out = Vec::new();
    let mut powers: Vec<Vec<Vec<i64>>> = Vec::with_capacity(j + 1);
    for k in 0..=j {
        powers.push(int_matpow(block, k)?);
    }
    let shifted = |k: usize| -> Vec<Vec<i64>> {
        let mut m = powers[k].clone();
        for i in 0..n {
            m[i][i] -= 1;
        }
        m
    };

    let mut budget = 0i64;
    for k in 1..=j {
        let m = shifted(k);
        let det = maps::int_det(&m);
        if det == 0 {
            if m.iter().all(|row| row.iter().all(|&v| v == 0)) {
                // the k-th power is the identity: every point is periodic
                return Err(CoreError::Indeterminate(
                    "linear block is periodic itself; its low-period set is the whole torus"
                        .into(),
                ));
            }
            return Err(CoreError::Indeterminate(
                "linear block has neutral directions; the low-period set is not isolated".into(),
            ));
        }
        budget += det.abs();
        if budget > 200_000 {
            return Err(CoreError::Capacity(format!(
                "lattice enumeration would visit more than 200000 classes by period {k}"
            )));
        }
    }

    for k in 1..=j {
        let m = shifted(k);
        let det = maps::int_det(&m);
        let det_abs = det.abs();
        let adj = maps::int_adjugate(&m);
        let h = column_hermite(&m);
        let diag: Vec<i64> = (0..n).map(|i| h[i][i]).collect();

        let total: i64 = diag.iter().product();
        debug_assert_eq!(total, det_abs);
        for idx in 0..total {
            let mut rem = idx;
            let mut v = vec![0i64; n];
            for i in 0..n {
                v[i] = rem % diag[i];
                rem /= diag[i];
            }
            // x = adj v / det, reduced to [0, 1)^n with denominator |det|
            let mut num = vec![0i64; n];
            let mut ok = true;
            for i in 0..n {
                let mut acc = 0i64;
                for c in 0..n {
                    match adj[i][c].checked_mul(v[c]).and_then(|t| acc.checked_add(t)) {
                        Some(val) => acc = val,
                        None => {
                            ok = false;
                            break;
                        }
                    }
                }
                if !ok {
                    break;
                }
                let val = acc * det.signum();
                num[i] = val.rem_euclid(det_abs);
            }
            if !ok {
                return Err(CoreError::Capacity("integer lattice solve overflow".into()));
            }

            // keep each point only at its minimal period
            let mut minimal = k;
            'div: for cand in 1..k {
                if k % cand != 0 {
                    continue;
                }
                let mc = shifted(cand);
                for row in &mc {
                    let mut acc = 0i64;
                    for (c, &r) in row.iter().enumerate() {
                        acc += r * num[c];
                    }
                    if acc.rem_euclid(det_abs) != 0 {
                        continue 'div;
                    }
                }
                minimal = cand;
                break;
            }
            if minimal == k {
                out.push(LatticePoint {
                    num,
                    den: det_abs,
                    period: k,
                });
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// low-period sets

#[derive(Clone, Debug, Serialize)]
pub struct PeriodicOrbitRep {
    pub point: Vec<f64>,
    pub period: usize,
    /// Coordinates along which a whole invariant circle (or torus) consists
    /// of periodic points; empty for isolated points.
    pub circle_axes: Vec<usize>,
}

impl PeriodicOrbitRep {
    /// Distance from `p`, measured transversally to any periodic circle.
    pub fn distance_to(&self, p: &TorusPoint) -> f64 {
        let mut acc = 0.0;
        for (i, &x) in self.point.iter().enumerate() {
            if self.circle_axes.contains(&i) {
                continue;
            }
            let d = wrap_unit(p.coords()[i] - x);
            acc += d * d;
        }
        acc.sqrt()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LowPeriodSet {
    pub j: usize,
    pub reps: Vec<PeriodicOrbitRep>,
    /// True when the set comes from exact lattice enumeration.
    pub exact: bool,
    /// Seeded refinements that failed to converge (nonlinear path only).
    pub skipped_seeds: usize,
}

impl LowPeriodSet {
    pub fn len(&self) -> usize {
        self.reps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reps.is_empty()
    }

    pub fn distance_to(&self, p: &TorusPoint) -> f64 {
        self.reps
            .iter()
            .map(|r| r.distance_to(p))
            .fold(f64::INFINITY, f64::min)
    }
}

fn embed_base(dim: usize, base_idx: &[usize], coords: &[f64]) -> TorusPoint {
    let mut full = vec![0.0; dim];
    for (slot, &c) in base_idx.iter().zip(coords.iter()) {
        full[*slot] = c;
    }
    TorusPoint::from_slice(&full)
}

/// Whether the whole fiber over a periodic base point is periodic: the fiber
/// displacement accumulated over one base period must vanish.
fn fiber_closes(
    map: &dyn DynamicalMap,
    dim: usize,
    base_idx: &[usize],
    fiber_idx: &[usize],
    lp: &LatticePoint,
) -> Result<bool> {
    let start = embed_base(dim, base_idx, &lp.coords());
    let end = maps::iterate(map, &start, lp.period);
    let delta = start.displacement_to(&end);
    for &b in base_idx {
        if delta[b].abs() > 1e-9 {
            return Err(CoreError::Internal(format!(
                "exact periodic base moved by {:.3e} under iteration",
                delta[b].abs()
            )));
        }
    }
    Ok(fiber_idx.iter().all(|&f| delta[f].abs() < 1e-9))
}

fn seeded_periodic_point(
    map: &dyn DynamicalMap,
    seed: &TorusPoint,
    k: usize,
) -> Option<TorusPoint> {
    let d = map.dim();
    let mut x = seed.clone();
    for _ in 0..40 {
        let fx = maps::iterate(map, &x, k);
        let g = x.displacement_to(&fx);
        if g.norm() < 1e-12 {
            break;
        }
        let jac = maps::forward_cocycle(map, &x, k) - DMatrix::<f64>::identity(d, d);
        let normal = jac.transpose() * &jac + DMatrix::<f64>::identity(d, d) * 1e-12;
        let rhs = jac.transpose() * &g;
        let lu = LU::new(normal);
        let step = lu.solve(&rhs)?;
        if step.norm() > 0.5 {
            return None;
        }
        x = x.translate(&(-step));
    }
    let residual = x.displacement_to(&maps::iterate(map, &x, k)).norm();
    (residual < 1e-11).then_some(x)
}

/// Periodic points of minimal period <= `j`. Linear and fiber-translation
/// skew maps are solved exactly over the integer lattice; other maps are
/// refined by least-squares iteration from `grid_res^d` seeds. An optional
/// ball `region` restricts the output.
pub fn low_period_set(
    map: &dyn DynamicalMap,
    j: usize,
    region: Option<(&TorusPoint, f64)>,
    grid_res: usize,
) -> Result<LowPeriodSet> {
    let dim = map.dim();
    let mut reps: Vec<PeriodicOrbitRep> = Vec::new();
    let mut exact = true;
    let mut skipped = 0usize;

    if j > 0 {
        match probe_shape(map) {
            MapShape::Skew { base, fiber, block } => {
                for lp in periodic_lattice(&block, j)? {
                    if fiber_closes(map, dim, &base, &fiber, &lp)? {
                        reps.push(PeriodicOrbitRep {
                            point: embed_base(dim, &base, &lp.coords()).coords().iter().copied().collect(),
                            period: lp.period,
                            circle_axes: fiber.clone(),
                        });
                    }
                }
            }
            MapShape::Linear(block) => {
                let neutral = (1..=j).any(|k| {
                    int_matpow(&block, k).map_or(true, |p| {
                        (0..block.len()).all(|i| {
                            (0..block.len())
                                .all(|c| p[i][c] == i64::from(i == c))
                        })
                    })
                });
                if neutral {
                    // identity-like power: periodicity is a global property,
                    // settled by direct evaluation
                    for k in 1..=j {
                        let p = TorusPoint::origin(dim);
                        if maps::iterate(map, &p, k).dist(&p) < 1e-9 {
                            reps.push(PeriodicOrbitRep {
                                point: vec![0.0; dim],
                                period: k,
                                circle_axes: (0..dim).collect(),
                            });
                            break;
                        }
                    }
                } else {
                    for lp in periodic_lattice(&block, j)? {
                        reps.push(PeriodicOrbitRep {
                            point: lp.coords(),
                            period: lp.period,
                            circle_axes: Vec::new(),
                        });
                    }
                }
            }
            MapShape::General => {
                exact = false;
                if grid_res < 2 {
                    return Err(CoreError::parameter(
                        "seeded periodic search needs grid_res >= 2",
                    ));
                }
                let grid = UnitGrid::new(dim, grid_res);
                if grid.len() > 100_000 {
                    return Err(CoreError::Capacity("seed grid larger than 100000".into()));
                }
                for k in 1..=j {
                    let found: Vec<Option<TorusPoint>> =
                        exec::map_indexed(ExecMode::Auto, grid.len(), |i| {
                            let seed = TorusPoint::from_slice(&grid.point(i));
                            seeded_periodic_point(map, &seed, k)
                        });
                    for cand in found {
                        let Some(x) = cand else {
                            skipped += 1;
                            continue;
                        };
                        // minimal period within k
                        let mut minimal = k;
                        for cand_k in 1..k {
                            if k % cand_k == 0
                                && x.displacement_to(&maps::iterate(map, &x, cand_k)).norm()
                                    < 1e-9
                            {
                                minimal = cand_k;
                                break;
                            }
                        }
                        let dup = reps.iter().any(|r| {
                            r.circle_axes.is_empty()
                                && TorusPoint::from_slice(&r.point).dist(&x) < 1e-6
                        });
                        if !dup {
                            reps.push(PeriodicOrbitRep {
                                point: x.coords().iter().copied().collect(),
                                period: minimal,
                                circle_axes: Vec::new(),
                            });
                        }
                    }
                }
            }
        }
    }

    if let Some((center, radius)) = region {
        reps.retain(|r| r.distance_to(center) <= radius);
    }
    reps.sort_by(|a, b| {
        a.period
            .cmp(&b.period)
            .then_with(|| a.point.partial_cmp(&b.point).expect("finite coordinates"))
    });

    Ok(LowPeriodSet {
        j,
        reps,
        exact,
        skipped_seeds: skipped,
    })
}

// ---------------------------------------------------------------------------
// admissible disks

/// Embedded center disk: the image of a radius-`rho` ball in the center
/// directions under the exponential chart at `center`.
#[derive(Clone, Debug)]
pub struct AdmissibleDisk {
    center: TorusPoint,
    axes: DMatrix<f64>,
    radius: f64,
}

impl AdmissibleDisk {
    pub fn new(center: TorusPoint, axes: DMatrix<f64>, radius: f64) -> Result<AdmissibleDisk> {
        let d = center.dim();
        if axes.nrows() != d || axes.ncols() == 0 || axes.ncols() >= d {
            return Err(CoreError::parameter(
                "disk frame must have ambient rows and a proper positive column count",
            ));
        }
        let gram = axes.transpose() * &axes;
        if (&gram - DMatrix::<f64>::identity(axes.ncols(), axes.ncols())).amax() > 1e-9 {
            return Err(CoreError::parameter("disk frame must be orthonormal"));
        }
        if !(radius > 0.0 && radius <= 0.8 * CHART_RADIUS) {
            return Err(CoreError::parameter(
                "disk radius must be positive and fit the chart scale",
            ));
        }
        Ok(AdmissibleDisk {
            center,
            axes,
            radius,
        })
    }

    /// Disk spanned by the certified center directions at `center`.
    pub fn from_splitting(
        map: &dyn DynamicalMap,
        center: TorusPoint,
        dims: (usize, usize, usize),
        radius: f64,
    ) -> Result<AdmissibleDisk> {
        let split = compute_splitting(map, &center, dims)?;
        AdmissibleDisk::new(center, split.center().basis().clone(), radius)
    }

    pub fn center(&self) -> &TorusPoint {
        &self.center
    }

    pub fn axes(&self) -> &DMatrix<f64> {
        &self.axes
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn dim(&self) -> usize {
        self.center.dim()
    }

    pub fn core_dim(&self) -> usize {
        self.axes.ncols()
    }

    /// Point of the disk at internal coordinates `w`, |w| <= radius.
    pub fn point_at(&self, w: &[f64]) -> Result<TorusPoint> {
        if w.len() != self.core_dim() {
            return Err(CoreError::Dimension {
                expected: self.core_dim(),
                got: w.len(),
            });
        }
        let wv = DVector::from_column_slice(w);
        if wv.norm() > self.radius * (1.0 + 1e-12) {
            return Err(CoreError::parameter("disk coordinates outside the radius"));
        }
        Ok(self.center.translate(&(&self.axes * wv)))
    }
}

// ---------------------------------------------------------------------------
// offset ball covers along the unstable direction

/// Ball cover of a center disk, pushed off the disk along the unstable
/// direction in disjoint slots. All lengths are multiples of `eps` with the
/// dimension-dependent factors spelled out in the fields.
#[derive(Clone, Debug, Serialize)]
pub struct CenterCover {
    pub eps: f64,
    pub rho: f64,
    /// Radius 100 d^2 eps of the offset balls.
    pub ball_radius: f64,
    /// Same-slot separation threshold 200 d^2 eps.
    pub conflict_radius: f64,
    /// Offset ladder step 500 d^2 eps.
    pub offset_step: f64,
    /// Cover grid in disk coordinates; consecutive points are eps/2-dense.
    pub grid: Vec<Vec<f64>>,
    /// Ladder slot of each grid point, 1-based.
    pub slots: Vec<usize>,
    /// Offset ball centers in tangent coordinates at the disk center.
    pub points: Vec<Vec<f64>>,
    /// Unit unstable direction used for the offsets.
    pub unstable_direction: Vec<f64>,
    /// Measured multiplicity: every conflict ball meets at most
    /// `multiplicity - 1` others. Slots never exceed it.
    pub multiplicity: usize,
    /// Containment factor: offset balls stay within
    /// `containment_factor * eps` of the disk. Equals 1000 d^2 multiplicity.
    pub containment_factor: f64,
    pub worst_containment: f64,
    pub min_ball_gap: f64,
    pub max_offset_norm: f64,
    pub cover_pitch: f64,
}

fn slice_sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn slice_norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Cover of the disk by eps/4-balls whose centers are pushed along `v_u` in
/// integer multiples of the offset step, with slots chosen greedily so the
/// pushed balls are pairwise disjoint. Rejects scales that are too coarse to
/// be a cover or too fine to fit the chart.
pub fn center_cover(
    disk: &AdmissibleDisk,
    eps: f64,
    v_u: &DVector<f64>,
) -> Result<CenterCover> {
    let d = disk.dim();
    let c = disk.core_dim();
    let rho = disk.radius();
    let d2 = (d * d) as f64;
    if v_u.len() != d {
        return Err(CoreError::Dimension {
            expected: d,
            got: v_u.len(),
        });
    }
    if (v_u.norm() - 1.0).abs() > 1e-9 {
        return Err(CoreError::parameter("unstable direction must be a unit vector"));
    }
    if (disk.axes().transpose() * v_u).amax() > 1e-8 {
        return Err(CoreError::parameter(
            "unstable direction must be transversal to the disk",
        ));
    }
    if !(eps > 0.0) {
        return Err(CoreError::parameter("cover scale must be positive"));
    }
    if eps > rho / 40.0 {
        return Err(CoreError::parameter(
            "cover scale too coarse relative to the disk; need eps <= rho/40",
        ));
    }

    let pitch = eps / (2.0 * (c as f64).sqrt());
    let per_axis = (rho / pitch).ceil() as usize;
    let estimate = (2 * per_axis + 2).checked_pow(c as u32);
    if estimate.is_none_or(|e| e > MAX_PIECES) {
        return Err(CoreError::Capacity(format!(
            "cover grid would exceed {MAX_PIECES} points; raise eps or shrink the disk"
        )));
    }

    // the grid in disk coordinates; for an interval the endpoints are pinned
    let mut grid: Vec<Vec<f64>> = Vec::new();
    if c == 1 {
        let mut x = -rho;
        while x < rho - 1e-15 {
            grid.push(vec![x]);
            x += pitch;
        }
        grid.push(vec![rho]);
    } else {
        let radius_slack = rho + pitch * (c as f64).sqrt() / 2.0;
        let side = per_axis as i64 + 1;
        let mut idx = vec![-side; c];
        loop {
            let point: Vec<f64> = idx.iter().map(|&i| i as f64 * pitch).collect();
            let norm = slice_norm(&point);
            if norm <= rho {
                grid.push(point);
            } else if norm <= radius_slack {
                grid.push(point.iter().map(|x| x * rho / norm).collect());
            }
            let mut k = c;
            loop {
                if k == 0 {
                    break;
                }
                k -= 1;
                idx[k] += 1;
                if idx[k] <= side {
                    break;
                }
                idx[k] = -side;
                if k == 0 {
                    idx.clear();
                    break;
                }
            }
            if idx.is_empty() || (idx.iter().all(|&i| i == -side) && grid.len() > 1) {
                break;
            }
        }
        // measured cover property, since the boundary treatment is generic
        let dirs = unit_sphere_points(c, 512, 31);
        let mut worst = 0.0f64;
        for (i, dir) in dirs.iter().enumerate() {
            let r = rho * weyl(i, 17).powf(1.0 / c as f64);
            let sample: Vec<f64> = dir.iter().map(|x| x * r).collect();
            let gap = grid
                .iter()
                .map(|g| slice_norm(&slice_sub(&sample, g)))
                .fold(f64::INFINITY, f64::min);
            worst = worst.max(gap);
        }
        if worst > eps / 4.0 * (1.0 + 1e-9) {
            return Err(CoreError::Internal(format!(
                "cover grid misses the disk by {worst:.3e} > eps/4"
            )));
        }
    }

    let len = grid.len();
    let conflict_radius = 200.0 * d2 * eps;
    let offset_step = 500.0 * d2 * eps;
    let ball_radius = 100.0 * d2 * eps;

    // greedy slot assignment in grid order
    let mut slots: Vec<usize> = Vec::with_capacity(len);
    for i in 0..len {
        let mut used: Vec<usize> = Vec::new();
        for jdx in 0..i {
            if slice_norm(&slice_sub(&grid[i], &grid[jdx])) < conflict_radius {
                used.push(slots[jdx]);
            }
        }
        let mut k = 1usize;
        while used.contains(&k) {
            k += 1;
        }
        slots.push(k);
    }

    // measured multiplicity of the conflict balls
    let neighbor_counts: Vec<usize> = exec::map_indexed(ExecMode::Auto, len, |i| {
        (0..len)
            .filter(|&jdx| {
                jdx != i && slice_norm(&slice_sub(&grid[i], &grid[jdx])) < 2.0 * conflict_radius
            })
            .count()
    });
    let multiplicity = neighbor_counts.iter().copied().max().unwrap_or(0) + 1;
    if slots.iter().any(|&k| k > multiplicity) {
        return Err(CoreError::Internal(
            "slot ladder exceeded the measured multiplicity".into(),
        ));
    }

    let axes = disk.axes();
    let points: Vec<Vec<f64>> = (0..len)
        .map(|i| {
            let base = axes * DVector::from_column_slice(&grid[i]);
            let z = base + v_u * (offset_step * slots[i] as f64);
            z.iter().copied().collect()
        })
        .collect();

    let containment_factor = 1000.0 * d2 * multiplicity as f64;
    let worst_containment = exec::max_indexed(ExecMode::Auto, len, |i| {
        // distance from the pushed ball to the disk, measured in the chart
        let z = DVector::from_column_slice(&points[i]);
        let mut core = axes.transpose() * &z;
        let n = core.norm();
        if n > rho {
            core *= rho / n;
        }
        (z - axes * core).norm() + ball_radius
    });
    if worst_containment > containment_factor * eps {
        return Err(CoreError::Internal(format!(
            "offset balls left the stated containment region: {worst_containment:.3e}"
        )));
    }

    let min_ball_gap = exec::min_indexed(ExecMode::Auto, len, |i| {
        let mut best = f64::INFINITY;
        for jdx in 0..len {
            if jdx != i {
                best = best
                    .min(slice_norm(&slice_sub(&points[i], &points[jdx])) - 2.0 * ball_radius);
            }
        }
        best
    });
    if len > 1 && min_ball_gap <= 0.0 {
        return Err(CoreError::Internal(
            "offset balls intersect; slot ladder failed".into(),
        ));
    }

    let max_offset_norm = exec::max_indexed(ExecMode::Auto, len, |i| slice_norm(&points[i]));
    if max_offset_norm + ball_radius > 0.98 * CHART_RADIUS {
        return Err(CoreError::parameter(
            "offsets leave the chart; shrink the disk radius or the cover scale",
        ));
    }

    Ok(CenterCover {
        eps,
        rho,
        ball_radius,
        conflict_radius,
        offset_step,
        grid,
        slots,
        points,
        unstable_direction: v_u.iter().copied().collect(),
        multiplicity,
        containment_factor,
        worst_containment,
        min_ball_gap,
        max_offset_norm,
        cover_pitch: pitch,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct CoverPathCheck {
    pub samples: usize,
    /// Worst landing distance from a disk point to its cover ball center;
    /// the leg must land inside half the ball scale.
    pub direct_worst: f64,
    pub direct_bound: f64,
    /// Worst landing distance when starting anywhere eps/2-close to the disk.
    pub nearby_worst: f64,
    pub nearby_bound: f64,
    pub legs: usize,
    pub pass: bool,
}

/// Every disk point reaches one of the cover balls along a single unstable
/// leg; so does every point eps/2-close to the disk. Exact for maps with
/// constant differential, whose invariant leaves are affine.
pub fn cover_path_check(
    map: &dyn DynamicalMap,
    disk: &AdmissibleDisk,
    cover: &CenterCover,
    samples: usize,
) -> Result<CoverPathCheck> {
    let d = disk.dim();
    let c = disk.core_dim();
    let probes = probe_points(d);
    let d0 = map.differential(&probes[0]);
    for p in &probes[1..3] {
        if (&d0 - map.differential(p)).amax() > 1e-10 {
            return Err(CoreError::Indeterminate(
                "single-leg reachability is exact only for affine leaves; \
                 the differential is not constant"
                    .into(),
            ));
        }
    }
    if samples == 0 {
        return Err(CoreError::parameter("need at least one sample"));
    }

    let axes = disk.axes();
    let dirs_c = unit_sphere_points(c, samples, 23);
    let dirs_d = unit_sphere_points(d, samples, 29);
    let mut direct_worst = 0.0f64;
    let mut nearby_worst = 0.0f64;
    for s in 0..samples {
        let r = disk.radius() * weyl(s, 3).powf(1.0 / c as f64);
        let w: Vec<f64> = dirs_c[s].iter().map(|x| x * r).collect();
        let (mut best, mut best_idx) = (f64::INFINITY, 0usize);
        for (i, g) in cover.grid.iter().enumerate() {
            let gap = slice_norm(&slice_sub(&w, g));
            if gap < best {
                best = gap;
                best_idx = i;
            }
        }
        direct_worst = direct_worst.max(best);

        // starting anywhere eps/2-close to the same disk point, the same
        // slot still lands inside the full ball scale
        let delta = &dirs_d[s] * (0.97 * cover.eps / 2.0);
        let core = axes * DVector::from_column_slice(&slice_sub(&w, &cover.grid[best_idx]));
        nearby_worst = nearby_worst.max((core + delta).norm());
    }

    let direct_bound = cover.eps / 2.0;
    let nearby_bound = cover.eps;
    Ok(CoverPathCheck {
        samples,
        direct_worst,
        direct_bound,
        nearby_worst,
        nearby_bound,
        legs: 1,
        pass: direct_worst <= direct_bound && nearby_worst <= nearby_bound,
    })
}

// ---------------------------------------------------------------------------
// spatial hashes for the family construction

struct PlaneHash {
    n: i64,
    cells: HashMap<(i64, i64), Vec<usize>>,
    pts: Vec<[f64; 2]>,
}

impl PlaneHash {
    fn new(pts: Vec<[f64; 2]>, min_cell: f64) -> PlaneHash {
        let n = ((1.0 / min_cell).floor().max(4.0)) as i64;
        let mut cells: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (i, p) in pts.iter().enumerate() {
            let key = (
                ((p[0].rem_euclid(1.0)) * n as f64).floor() as i64 % n,
                ((p[1].rem_euclid(1.0)) * n as f64).floor() as i64 % n,
            );
            cells.entry(key).or_default().push(i);
        }
        PlaneHash { n, cells, pts }
    }

    /// Minimum distance to the stored points, exact up to one cell width;
    /// infinity means "farther than a cell".
    fn min_dist(&self, p: [f64; 2]) -> f64 {
        let cx = ((p[0].rem_euclid(1.0)) * self.n as f64).floor() as i64 % self.n;
        let cy = ((p[1].rem_euclid(1.0)) * self.n as f64).floor() as i64 % self.n;
        let mut best = f64::INFINITY;
        for dx in -1..=1 {
            for dy in -1..=1 {
                let key = ((cx + dx).rem_euclid(self.n), (cy + dy).rem_euclid(self.n));
                if let Some(bucket) = self.cells.get(&key) {
                    for &i in bucket {
                        best = best.min(plane_dist(p, self.pts[i]));
                    }
                }
            }
        }
        best
    }
}

struct SpaceHash {
    n: i64,
    cells: HashMap<(i64, i64, i64), Vec<usize>>,
    pts: Vec<TorusPoint>,
}

impl SpaceHash {
    fn new(pts: Vec<TorusPoint>, min_cell: f64) -> SpaceHash {
        let n = ((1.0 / min_cell).floor().max(4.0)) as i64;
        let mut cells: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
        for (i, p) in pts.iter().enumerate() {
            let c = p.coords();
            let key = (
                ((c[0].rem_euclid(1.0)) * n as f64).floor() as i64 % n,
                ((c[1].rem_euclid(1.0)) * n as f64).floor() as i64 % n,
                ((c[2].rem_euclid(1.0)) * n as f64).floor() as i64 % n,
            );
            cells.entry(key).or_default().push(i);
        }
        SpaceHash { n, cells, pts }
    }

    fn min_dist(&self, p: &TorusPoint) -> f64 {
        let c = p.coords();
        let cx = ((c[0].rem_euclid(1.0)) * self.n as f64).floor() as i64 % self.n;
        let cy = ((c[1].rem_euclid(1.0)) * self.n as f64).floor() as i64 % self.n;
        let cz = ((c[2].rem_euclid(1.0)) * self.n as f64).floor() as i64 % self.n;
        let mut best = f64::INFINITY;
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    let key = (
                        (cx + dx).rem_euclid(self.n),
                        (cy + dy).rem_euclid(self.n),
                        (cz + dz).rem_euclid(self.n),
                    );
                    if let Some(bucket) = self.cells.get(&key) {
                        for &i in bucket {
                            best = best.min(p.dist(&self.pts[i]));
                        }
                    }
                }
            }
        }
        best
    }
}

// ---------------------------------------------------------------------------
// disk families over a sampling window

#[derive(Clone, Debug)]
pub struct FamilyConfig {
    /// Returns up to this depth must miss the family.
    pub j: usize,
    /// Ball fraction of the disk radius used for the covering claim.
    pub beta: f64,
    /// Disk radius.
    pub rho: f64,
    /// Center of the sampling window.
    pub region_center: TorusPoint,
    /// Radius of the sampling window; the construction is windowed because a
    /// full-torus cover at these scales is out of reach of a desk run.
    pub region_radius: f64,
    /// Grid pitch as a fraction of beta * rho.
    pub pitch_factor: f64,
    /// Sample count for each of the two path checks.
    pub claim_samples: usize,
    /// Verification grid pitch as a fraction of the construction pitch.
    pub check_pitch_factor: f64,
    pub mode: ExecMode,
    pub seed: u64,
}

impl FamilyConfig {
    pub fn new(
        j: usize,
        beta: f64,
        rho: f64,
        region_center: TorusPoint,
        region_radius: f64,
    ) -> FamilyConfig {
        FamilyConfig {
            j,
            beta,
            rho,
            region_center,
            region_radius,
            pitch_factor: 0.5,
            claim_samples: 100,
            check_pitch_factor: 0.79,
            mode: ExecMode::Auto,
            seed: 9,
        }
    }
}

#[derive(Clone, Debug)]
pub struct DiskFamily {
    disks: Vec<AdmissibleDisk>,
}

impl DiskFamily {
    pub fn disks(&self) -> &[AdmissibleDisk] {
        &self.disks
    }

    pub fn len(&self) -> usize {
        self.disks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.disks.is_empty()
    }

    pub fn r_max(&self) -> f64 {
        self.disks
            .iter()
            .map(AdmissibleDisk::radius)
            .fold(0.0, f64::max)
    }

    /// Oracle components: one-dimensional disks become exact segments,
    /// higher-dimensional ones their enclosing balls.
    pub fn pieces(&self) -> Vec<Piece> {
        self.disks
            .iter()
            .map(|d| {
                if d.core_dim() == 1 {
                    Piece::arc(d.center().clone(), d.axes().column(0).into_owned(), d.radius())
                } else {
                    Piece::ball(d.center().clone(), d.radius())
                }
            })
            .collect()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ClaimCheck {
    pub tested: usize,
    pub passed: usize,
    pub legs: usize,
    /// Smallest clearance achieved over the samples; positive means pass.
    pub worst_margin: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct FamilyReport {
    pub map: String,
    pub j: usize,
    pub beta: f64,
    pub rho: f64,
    pub region_center: Vec<f64>,
    pub region_radius: f64,
    pub count: usize,
    pub r_max: f64,
    /// Periodic base circles of depth <= j found by exact enumeration.
    pub low_period_bases: usize,
    /// Window grid points dropped for sitting rho-close to a periodic circle.
    pub excluded_points: usize,
    /// Smallest pairwise transversal separation of the disks.
    pub min_base_gap: f64,
    pub return_time: ReturnTime,
    pub return_min_gap: f64,
    pub covering_samples: usize,
    pub covering_worst: f64,
    pub covering_bound: f64,
    /// Single-leg escape from the low-period neighborhood.
    pub escape: ClaimCheck,
    /// Two-leg landing inside a family disk from a beta-ball around it.
    pub projection: ClaimCheck,
    /// Transversal stagger scale that produced certified gaps.
    pub sigma_scale: f64,
    pub pass: bool,
}

struct FamilyAttempt {
    disks: Vec<AdmissibleDisk>,
    excluded: usize,
    min_base_gap: f64,
    oracle: Result<ReturnReport>,
}

fn family_attempt(
    map: &dyn DynamicalMap,
    cfg: &FamilyConfig,
    fiber_axis: usize,
    base_idx: [usize; 2],
    per_hash: &PlaneHash,
    sigma_unit: f64,
) -> FamilyAttempt {
    let d = map.dim();
    let h = cfg.pitch_factor * cfg.beta * cfg.rho;
    let n = (cfg.region_radius / h).ceil() as i64;
    let rc = cfg.region_center.coords();

    let mut disks: Vec<AdmissibleDisk> = Vec::new();
    let mut excluded = 0usize;
    let mut axes = DMatrix::<f64>::zeros(d, 1);
    axes[(fiber_axis, 0)] = 1.0;

    for ix in -n..=n {
        for iy in -n..=n {
            for iz in -n..=n {
                let off = (
                    ix as f64 * h,
                    iy as f64 * h,
                    iz as f64 * h,
                );
                let norm = (off.0 * off.0 + off.1 * off.1 + off.2 * off.2).sqrt();
                if norm > cfg.region_radius {
                    continue;
                }
                // stagger the transversal position by fiber layer so no two
                // disks share a base point and lattice returns are broken
                let sigma = (iz + n + 1) as f64 * sigma_unit;
                let mut coords = vec![0.0; d];
                coords[base_idx[0]] = rc[base_idx[0]] + off.0 + sigma;
                coords[base_idx[1]] = rc[base_idx[1]] + off.1;
                coords[fiber_axis] = rc[fiber_axis] + off.2;
                let q = TorusPoint::from_slice(&coords);
                let base = [coords[base_idx[0]], coords[base_idx[1]]];
                if per_hash.min_dist(base) <= cfg.rho {
                    excluded += 1;
                    continue;
                }
                disks.push(
                    AdmissibleDisk::new(q, axes.clone(), cfg.rho)
                        .expect("window disk frame is orthonormal by construction"),
                );
            }
        }
    }

    let bases: Vec<[f64; 2]> = disks
        .iter()
        .map(|dk| {
            let c = dk.center().coords();
            [c[base_idx[0]], c[base_idx[1]]]
        })
        .collect();
    let min_base_gap = if bases.len() < 2 {
        f64::INFINITY
    } else {
        exec::min_indexed(cfg.mode, bases.len(), |i| {
            let mut best = f64::INFINITY;
            for jdx in i + 1..bases.len() {
                best = best.min(plane_dist(bases[i], bases[jdx]));
            }
            best
        })
    };

    let family = DiskFamily {
        disks: disks.clone(),
    };
    let oracle = return_time(map, &family.pieces(), cfg.j);

    FamilyAttempt {
        disks,
        excluded,
        min_base_gap,
        oracle,
    }
}

/// Builds a family of pairwise disjoint center disks over the sampling
/// window, staying `rho` clear of every low-period circle, with a certified
/// first-return depth beyond `j`, a `beta rho`-cover of the cleared window,
/// and sampled single-leg and two-leg reachability checks.
pub fn build_disk_family(
    map: &dyn DynamicalMap,
    cfg: &FamilyConfig,
) -> Result<(DiskFamily, FamilyReport)> {
    let d = map.dim();
    if !(cfg.beta > 0.0 && cfg.beta < 1.0) {
        return Err(CoreError::parameter("beta must lie in (0, 1)"));
    }
    if !(cfg.rho > 0.0 && cfg.rho <= 0.02) {
        return Err(CoreError::parameter("disk radius must lie in (0, 0.02]"));
    }
    if !(cfg.region_radius > cfg.rho && cfg.region_radius <= 0.1) {
        return Err(CoreError::parameter(
            "window radius must exceed rho and stay within 0.1",
        ));
    }
    if !(cfg.pitch_factor > 0.0 && cfg.pitch_factor < 1.0)
        || !(cfg.check_pitch_factor > 0.0 && cfg.check_pitch_factor < 1.0)
    {
        return Err(CoreError::parameter("pitch factors must lie in (0, 1)"));
    }
    if cfg.claim_samples == 0 {
        return Err(CoreError::parameter("need at least one claim sample"));
    }
    if cfg.region_center.dim() != d {
        return Err(CoreError::Dimension {
            expected: d,
            got: cfg.region_center.dim(),
        });
    }

    let MapShape::Skew { base, fiber, block } = probe_shape(map) else {
        return Err(CoreError::Indeterminate(
            "disk family construction needs a fiber-translation skew map".into(),
        ));
    };
    if fiber.len() != 1 || base.len() != 2 {
        return Err(CoreError::Indeterminate(
            "disk family construction needs a one-dimensional fiber over a plane".into(),
        ));
    }
    let fiber_axis = fiber[0];
    let base_idx = [base[0], base[1]];

    // genuine low-period circles: periodic bases whose fiber closes up
    let mut per_bases: Vec<[f64; 2]> = Vec::new();
    if cfg.j > 0 {
        for lp in periodic_lattice(&block, cfg.j)? {
            if fiber_closes(map, d, &base, &fiber, &lp)? {
                let c = lp.coords();
                per_bases.push([c[0], c[1]]);
            }
        }
    }
    let low_period_bases = per_bases.len();
    let per_hash = PlaneHash::new(per_bases.clone(), (2.5 * cfg.rho).max(0.02));

    // transversal stagger ladder: retried if a lattice alignment ever lands
    // two disks too close for certification
    let mut attempt: Option<FamilyAttempt> = None;
    let mut sigma_scale = 0.0;
    for scale in [1e-4, 1.7e-4, 2.9e-4] {
        let a = family_attempt(map, cfg, fiber_axis, base_idx, &per_hash, scale * cfg.beta * cfg.rho);
        sigma_scale = scale;
        let clean = a.min_base_gap > 1e-9
            && match &a.oracle {
                Ok(rep) => rep.min_gap > 1e-9 || rep.time != ReturnTime::MoreThan(cfg.j),
                Err(_) => false,
            };
        let last = attempt.replace(a);
        let _ = last;
        if clean {
            break;
        }
    }
    let attempt = attempt.expect("ladder ran at least once");
    let oracle = attempt.oracle?;
    let disks = attempt.disks;
    if disks.is_empty() {
        return Err(CoreError::parameter(
            "window produced no disks; it is swallowed by the low-period neighborhood",
        ));
    }

    // covering check on a shifted verification grid over the window interior
    let h = cfg.pitch_factor * cfg.beta * cfg.rho;
    let hc = cfg.check_pitch_factor * h;
    let nc = ((cfg.region_radius - cfg.beta * cfg.rho) / hc).ceil().max(0.0) as i64;
    let rc = cfg.region_center.coords();
    let centers: Vec<TorusPoint> = disks.iter().map(|dk| dk.center().clone()).collect();
    let center_hash = SpaceHash::new(centers, cfg.beta * cfg.rho);
    let mut covering_worst = 0.0f64;
    let mut covering_samples = 0usize;
    let shift = (h / 3.0, 2.0 * h / 7.0, h / 5.0);
    for ix in -nc..=nc {
        for iy in -nc..=nc {
            for iz in -nc..=nc {
                let off = (
                    ix as f64 * hc + shift.0,
                    iy as f64 * hc + shift.1,
                    iz as f64 * hc + shift.2,
                );
                let norm = (off.0 * off.0 + off.1 * off.1 + off.2 * off.2).sqrt();
                if norm > cfg.region_radius - cfg.beta * cfg.rho {
                    continue;
                }
                let mut coords = vec![0.0; d];
                coords[base_idx[0]] = rc[base_idx[0]] + off.0;
                coords[base_idx[1]] = rc[base_idx[1]] + off.1;
                coords[fiber_axis] = rc[fiber_axis] + off.2;
                let p = TorusPoint::from_slice(&coords);
                if per_hash.min_dist([coords[base_idx[0]], coords[base_idx[1]]]) <= cfg.rho {
                    continue;
                }
                covering_samples += 1;
                covering_worst = covering_worst.max(center_hash.min_dist(&p));
            }
        }
    }

    // splitting frame of the skew structure, shared by both path checks
    let split = compute_splitting(map, &cfg.region_center, (1, 1, 1))?;
    let v_u = split.unstable().basis_vector(0);
    let v_s = split.stable().basis_vector(0);
    if v_u[fiber_axis].abs() > 1e-9 || v_s[fiber_axis].abs() > 1e-9 {
        return Err(CoreError::Internal(
            "skew splitting has fiber components in the hyperbolic directions".into(),
        ));
    }
    let u2 = [v_u[base_idx[0]], v_u[base_idx[1]]];

    // single-leg escape: points rho-close to a low-period circle leave the
    // whole low-period neighborhood along their unstable line
    let escape = if cfg.j == 0 {
        ClaimCheck {
            tested: 0,
            passed: 0,
            legs: 1,
            worst_margin: f64::INFINITY,
        }
    } else {
        let region_base = [rc[base_idx[0]], rc[base_idx[1]]];
        let bases_in: Vec<[f64; 2]> = per_bases
            .iter()
            .copied()
            .filter(|b| plane_dist(*b, region_base) <= 0.8 * cfg.region_radius)
            .collect();
        if bases_in.is_empty() {
            return Err(CoreError::parameter(
                "no low-period base inside the sampling window; recenter the window",
            ));
        }
        let mut passed = 0usize;
        let mut worst = f64::INFINITY;
        for s in 0..cfg.claim_samples {
            let b = bases_in[s % bases_in.len()];
            let r = 0.9 * cfg.rho * weyl(s, 41);
            let phi = std::f64::consts::TAU * weyl(s, 43);
            let start = [b[0] + r * phi.cos(), b[1] + r * phi.sin()];
            let mut escaped = None;
            'scan: for m in 1..=1500 {
                for sign in [1.0, -1.0] {
                    let t = sign * m as f64 * cfg.rho / 5.0;
                    let pt = [start[0] + t * u2[0], start[1] + t * u2[1]];
                    let clear = per_hash.min_dist(pt);
                    if clear > cfg.rho * (1.0 + 1e-9) {
                        escaped = Some(clear - cfg.rho);
                        break 'scan;
                    }
                }
            }
            match escaped {
                Some(margin) => {
                    passed += 1;
                    worst = worst.min(margin);
                }
                None => worst = worst.min(0.0),
            }
        }
        ClaimCheck {
            tested: cfg.claim_samples,
            passed,
            legs: 1,
            worst_margin: worst,
        }
    };

    // two-leg landing: from anywhere beta rho-close to a disk center, one
    // unstable and one stable leg land on the disk strictly inside its radius
    let frame = {
        let mut f = DMatrix::<f64>::zeros(d, 3);
        f.set_column(0, &v_u);
        f.set_column(1, &v_s);
        f[(fiber_axis, 2)] = 1.0;
        f
    };
    let frame_lu = LU::new(frame.clone());
    let dirs = unit_sphere_points(d, cfg.claim_samples, cfg.seed);
    let mut projection_passed = 0usize;
    let mut projection_worst = f64::INFINITY;
    for (s, dir) in dirs.iter().enumerate() {
        let dk = &disks[(s.wrapping_mul(2_654_435_761)) % disks.len()];
        let q = dk.center();
        let p = q.translate(&(dir * (0.97 * cfg.beta * cfg.rho)));
        let rhs = p.displacement_to(q);
        let Some(a) = frame_lu.solve(&rhs) else {
            projection_worst = projection_worst.min(0.0);
            continue;
        };
        // p + a_u v_u + a_s v_s = q - a_c e_f, so the landing offset is -a_c
        let landing = a[2].abs();
        let legs_ok = a[0].abs() <= cfg.rho && a[1].abs() <= cfg.rho;
        let margin = cfg.rho - landing;
        projection_worst = projection_worst.min(margin);
        if legs_ok && margin > 0.0 {
            projection_passed += 1;
        }
    }
    let projection = ClaimCheck {
        tested: cfg.claim_samples,
        passed: projection_passed,
        legs: 2,
        worst_margin: projection_worst,
    };

    let family = DiskFamily { disks };
    let covering_bound = cfg.beta * cfg.rho;
    let depth_ok = cfg.j == 0 || oracle.time == ReturnTime::MoreThan(cfg.j);
    let escape_ok = cfg.j == 0 || escape.passed == escape.tested;
    let pass = attempt.min_base_gap > 1e-9
        && depth_ok
        && covering_worst <= covering_bound * (1.0 + 1e-9)
        && covering_samples > 0
        && escape_ok
        && projection.passed == projection.tested;

    let report = FamilyReport {
        map: map.name(),
        j: cfg.j,
        beta: cfg.beta,
        rho: cfg.rho,
        region_center: rc.iter().copied().collect(),
        region_radius: cfg.region_radius,
        count: family.len(),
        r_max: family.r_max(),
        low_period_bases,
        excluded_points: attempt.excluded,
        min_base_gap: attempt.min_base_gap,
        return_time: oracle.time,
        return_min_gap: oracle.min_gap,
        covering_samples,
        covering_worst,
        covering_bound,
        escape,
        projection,
        sigma_scale,
        pass,
    };
    Ok((family, report))
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::{CatSkew3, CoupledCat4, Inverted, TorusAutomorphism};

    fn cat_ball(x: f64, y: f64, r: f64) -> Vec<Piece> {
        vec![Piece::ball(TorusPoint::from_slice(&[x, y]), r)]
    }

    #[test]
    fn return_time_certifies_fixed_and_periodic_returns() {
        let cat = TorusAutomorphism::cat2();

        let fixed = return_time(&cat, &cat_ball(0.0, 0.0, 0.01), 6).unwrap();
        assert_eq!(fixed.time, ReturnTime::At(0));
        assert!(fixed.witness_gap.unwrap() < 1e-12);

        // (0.75, 0.5) -> (0.0, 0.25) -> (0.25, 0.25) -> (0.75, 0.5)
        let orbit3 = return_time(&cat, &cat_ball(0.75, 0.5, 1e-3), 6).unwrap();
        assert_eq!(orbit3.time, ReturnTime::At(2));
        assert!(orbit3.witness_gap.unwrap() < 1e-12);
        assert!(orbit3.min_gap > 0.0);

        let inv = Inverted::new(&cat);
        let backward = return_time(&inv, &cat_ball(0.75, 0.5, 1e-3), 6).unwrap();
        assert_eq!(backward.time, ReturnTime::At(2));
    }

    #[test]
    fn return_time_clears_a_generic_ball_to_depth_twenty() {
        let cat = TorusAutomorphism::cat2();
        let pieces = cat_ball(0.31830988618379069, 0.36787944117144233, 1e-12);
        let rep = return_time(&cat, &pieces, 20).unwrap();
        assert_eq!(rep.time, ReturnTime::MoreThan(20));
        assert_eq!(rep.steps_cleared, 21);
        assert!(rep.min_gap > 1e-3, "min gap {}", rep.min_gap);

        let inv = Inverted::new(&cat);
        let back = return_time(&inv, &pieces, 20).unwrap();
        assert_eq!(back.time, ReturnTime::MoreThan(20));
    }

    #[test]
    fn return_time_reports_hull_blowup_as_indeterminate() {
        let cat = TorusAutomorphism::cat2();
        let err = return_time(&cat, &cat_ball(0.31, 0.17, 0.05), 20).unwrap_err();
        assert!(matches!(err, CoreError::Indeterminate(_)), "got {err}");
    }

    #[test]
    fn low_period_set_enumerates_cat_lattice_classes() {
        let cat = TorusAutomorphism::cat2();

        let fixed = low_period_set(&cat, 1, None, 0).unwrap();
        assert!(fixed.exact);
        assert_eq!(fixed.len(), 1);
        assert_eq!(fixed.reps[0].point, vec![0.0, 0.0]);
        assert!(fixed.reps[0].circle_axes.is_empty());

        // |det(A^2 - I)| = 5 lattice classes in total
        let two = low_period_set(&cat, 2, None, 0).unwrap();
        assert_eq!(two.len(), 5);
        assert_eq!(two.reps.iter().filter(|r| r.period == 1).count(), 1);
        assert_eq!(two.reps.iter().filter(|r| r.period == 2).count(), 4);
        for target in [[0.8, 0.6], [0.2, 0.4]] {
            assert!(
                two.reps
                    .iter()
                    .any(|r| (r.point[0] - target[0]).abs() < 1e-12
                        && (r.point[1] - target[1]).abs() < 1e-12),
                "missing {target:?}"
            );
        }

        let windowed = low_period_set(&cat, 2, Some((&TorusPoint::from_slice(&[0.8, 0.6]), 0.05)), 0)
            .unwrap();
        assert_eq!(windowed.len(), 1);
    }

    #[test]
    fn low_period_set_flags_invariant_circles() {
        let skew = CatSkew3::linear();
        let set = low_period_set(&skew, 2, None, 0).unwrap();
        assert!(set.exact);
        assert_eq!(set.len(), 5);
        assert!(set.reps.iter().all(|r| r.circle_axes == vec![2]));

        // the sine kick cancels over the symmetric orbits, so the same five
        // circles survive a nonzero coupling
        let kicked = CatSkew3::new(0.3);
        let set_k = low_period_set(&kicked, 2, None, 0).unwrap();
        assert_eq!(set_k.len(), 5);
        assert!(set_k.reps.iter().all(|r| r.circle_axes == vec![2]));

        let origin = TorusPoint::origin(3);
        assert!(set.distance_to(&origin) < 1e-12);
        let off_fiber = TorusPoint::from_slice(&[0.0, 0.0, 0.37]);
        assert!(set.distance_to(&off_fiber) < 1e-12);
    }

    #[test]
    fn low_period_set_refines_seeds_on_the_coupled_map() {
        let map = CoupledCat4::new(0.05);
        let set = low_period_set(&map, 1, None, 6).unwrap();
        assert!(!set.exact);
        assert_eq!(set.len(), 5, "fixed points: {:?}", set.reps);
        assert!(set.distance_to(&TorusPoint::origin(4)) < 1e-9);
        for rep in &set.reps {
            let p = TorusPoint::from_slice(&rep.point);
            assert!(p.dist(&map.eval(&p)) < 1e-9);
        }
    }

    #[test]
    fn admissible_disks_validate_their_frames() {
        let skew = CatSkew3::linear();
        let center = TorusPoint::from_slice(&[0.13, 0.41, 0.27]);
        let disk = AdmissibleDisk::from_splitting(&skew, center.clone(), (1, 1, 1), 1e-5).unwrap();
        assert_eq!(disk.core_dim(), 1);
        assert!((disk.axes()[(2, 0)].abs() - 1.0).abs() < 1e-12);

        let bad_radius = AdmissibleDisk::new(center.clone(), disk.axes().clone(), 0.0);
        assert!(bad_radius.is_err());
        let skewed = DMatrix::from_column_slice(3, 1, &[0.5, 0.5, 0.5]);
        assert!(AdmissibleDisk::new(center, skewed, 1e-5).is_err());
    }

    fn tiny_disk() -> (CatSkew3, AdmissibleDisk, DVector<f64>) {
        let skew = CatSkew3::linear();
        let center = TorusPoint::from_slice(&[0.13, 0.41, 0.27]);
        let disk =
            AdmissibleDisk::from_splitting(&skew, center.clone(), (1, 1, 1), 1e-5).unwrap();
        let split = compute_splitting(&skew, &center, (1, 1, 1)).unwrap();
        let v_u = split.unstable().basis_vector(0);
        (skew, disk, v_u)
    }

    #[test]
    fn center_cover_matches_the_interval_count_and_separates_balls() {
        let (_, disk, v_u) = tiny_disk();
        let rho = disk.radius();
        let eps = rho / 50.0;
        let cover = center_cover(&disk, eps, &v_u).unwrap();

        // interval cover count: ceil(2 rho / (eps/2)) plus a pinned endpoint
        let expected = (2.0 * rho / (eps / 2.0)).ceil() as usize;
        assert!(
            (expected..=expected + 2).contains(&cover.grid.len()),
            "cover size {} vs expected around {}",
            cover.grid.len(),
            expected
        );

        // every scale factor is what the construction states
        assert!((cover.ball_radius - 900.0 * eps).abs() < 1e-18);
        assert!((cover.conflict_radius - 1800.0 * eps).abs() < 1e-18);
        assert!((cover.offset_step - 4500.0 * eps).abs() < 1e-18);
        assert!((cover.containment_factor - 9000.0 * cover.multiplicity as f64).abs() < 1e-9);

        // the whole grid conflicts with itself at this scale, so the slot
        // ladder is a full permutation and the multiplicity equals the count
        assert_eq!(cover.multiplicity, cover.grid.len());
        let mut sorted = cover.slots.clone();
        sorted.sort_unstable();
        assert!(sorted.iter().enumerate().all(|(i, &k)| k == i + 1));

        // independent pairwise re-verification of separation and containment
        let n = cover.points.len();
        let mut min_gap = f64::INFINITY;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    let gap = slice_norm(&slice_sub(&cover.points[i], &cover.points[j]))
                        - 2.0 * cover.ball_radius;
                    min_gap = min_gap.min(gap);
                }
            }
        }
        assert!(min_gap > 0.0, "ball gap {min_gap}");
        assert!((min_gap - cover.min_ball_gap).abs() < 1e-15);
        assert!(cover.worst_containment <= cover.containment_factor * eps);
        assert!(cover.max_offset_norm + cover.ball_radius < 0.98 * CHART_RADIUS);

        // re-measure the multiplicity brute force
        let mut worst_neighbors = 0usize;
        for i in 0..n {
            let count = (0..n)
                .filter(|&j| {
                    j != i
                        && slice_norm(&slice_sub(&cover.grid[i], &cover.grid[j]))
                            < 2.0 * cover.conflict_radius
                })
                .count();
            worst_neighbors = worst_neighbors.max(count);
        }
        assert_eq!(worst_neighbors + 1, cover.multiplicity);
    }

    #[test]
    fn center_cover_rejects_degenerate_scales() {
        let (_, disk, v_u) = tiny_disk();
        let rho = disk.radius();

        let coarse = center_cover(&disk, rho / 30.0, &v_u);
        assert!(matches!(coarse, Err(CoreError::Parameter(_))));

        let fine = center_cover(&disk, rho * 1e-9, &v_u);
        assert!(matches!(fine, Err(CoreError::Capacity(_))));

        let along_disk = DVector::from_column_slice(&[0.0, 0.0, 1.0]);
        let bad_dir = center_cover(&disk, rho / 50.0, &along_disk);
        assert!(matches!(bad_dir, Err(CoreError::Parameter(_))));
    }

    #[test]
    fn cover_targets_are_reachable_with_one_leg() {
        let (skew, disk, v_u) = tiny_disk();
        let eps = disk.radius() / 50.0;
        let cover = center_cover(&disk, eps, &v_u).unwrap();
        let check = cover_path_check(&skew, &disk, &cover, 60).unwrap();
        assert!(check.pass);
        assert!(check.direct_worst <= eps / 4.0 * (1.0 + 1e-9));
        assert!(check.nearby_worst <= eps * (1.0 + 1e-12));

        let kicked = CatSkew3::new(0.3);
        let err = cover_path_check(&kicked, &disk, &cover, 10).unwrap_err();
        assert!(matches!(err, CoreError::Indeterminate(_)));
    }

    #[test]
    fn disk_family_covers_a_window_without_return_depth() {
        let skew = CatSkew3::linear();
        let rho = 0.002;
        let mut cfg = FamilyConfig::new(
            0,
            0.5,
            rho,
            TorusPoint::from_slice(&[0.31, 0.17, 0.44]),
            1.8 * rho,
        );
        cfg.claim_samples = 30;
        let (family, report) = build_disk_family(&skew, &cfg).unwrap();
        assert!(report.pass, "report: {report:?}");
        assert_eq!(report.low_period_bases, 0);
        assert_eq!(report.escape.tested, 0);
        assert_eq!(report.projection.passed, 30);
        assert!(report.covering_worst <= report.covering_bound);
        assert!(family.len() > 1000, "family size {}", family.len());
        assert!((family.r_max() - rho).abs() < 1e-15);
    }

    #[test]
    fn disk_family_outruns_depth_ten() {
        let skew = CatSkew3::linear();
        let rho = 0.002;
        let mut cfg = FamilyConfig::new(
            10,
            0.5,
            rho,
            TorusPoint::from_slice(&[0.75, 0.5, 0.37]),
            2.2 * rho,
        );
        cfg.claim_samples = 25;
        let (family, report) = build_disk_family(&skew, &cfg).unwrap();
        assert!(report.pass, "report: {report:?}");
        assert_eq!(report.return_time, ReturnTime::MoreThan(10));
        assert!(report.return_min_gap > 1e-9);
        assert!(report.min_base_gap > 1e-9);
        assert!(
            (20_000..=30_000).contains(&report.low_period_bases),
            "bases {}",
            report.low_period_bases
        );
        assert!(report.excluded_points > 0);
        assert_eq!(report.escape.passed, 25);
        assert_eq!(report.projection.passed, 25);
        assert!(report.escape.worst_margin > 0.0);
        assert!(report.projection.worst_margin > 0.0);

        // the oracle is reusable on the family pieces directly
        let again = return_time(&skew, &family.pieces(), 10).unwrap();
        assert_eq!(again.time, ReturnTime::MoreThan(10));
    }
}
