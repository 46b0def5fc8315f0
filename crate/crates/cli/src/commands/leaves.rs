use nalgebra::DVector;
use serde::Serialize;

use phdyn::leaves::{compute_local_leaf, invariance_defect, LeafConfig, LeafKind};
use phdyn::maps::DynamicalMap;
use phdyn::torus::TorusPoint;

use crate::artifact::dat_table;
use crate::commands::CommandOutput;
use crate::config::LeavesSpec;

const RESIDUAL_BOUND: f64 = 1e-8;
const INVARIANCE_BOUND: f64 = 1e-6;

#[derive(Serialize)]
struct LeafSummary {
    map: String,
    kind: &'static str,
    point: Vec<f64>,
    rho: f64,
    leaf_dim: usize,
    graph_sup_norm: f64,
    lipschitz: f64,
    /// Fixed-point residual of the graph transform at the returned leaf.
    residual: f64,
    residual_bound: f64,
    /// Distance from the mapped leaf to the leaf at the image point, over
    /// an interior sample lattice.
    invariance_defect: f64,
    invariance_bound: f64,
    pass: bool,
}

pub fn run(map: &dyn DynamicalMap, spec: &LeavesSpec) -> phdyn::Result<CommandOutput> {
    let kind = if spec.kind == "stable" {
        LeafKind::Stable
    } else {
        LeafKind::Unstable
    };
    let cfg = LeafConfig {
        rho: spec.rho,
        tol: 1e-10,
        dim: spec.dim,
    };
    let point = TorusPoint::from_slice(&spec.point);

    let leaf = compute_local_leaf(map, &point, kind, &cfg)?;
    let next = compute_local_leaf(map, &map.eval(&point), kind, &cfg)?;
    let defect = invariance_defect(map, &leaf, &next, 9, 0.3)?;

    let pass = leaf.residual() <= RESIDUAL_BOUND && defect <= INVARIANCE_BOUND;
    let summary = LeafSummary {
        map: map.name(),
        kind: kind.label(),
        point: spec.point.clone(),
        rho: spec.rho,
        leaf_dim: spec.dim,
        graph_sup_norm: leaf.graph_sup_norm(),
        lipschitz: leaf.lipschitz(),
        residual: leaf.residual(),
        residual_bound: RESIDUAL_BOUND,
        invariance_defect: defect,
        invariance_bound: INVARIANCE_BOUND,
        pass,
    };

    // Trace the leaf for plotting: parameters first, ambient coordinates
    // after. One lattice for one- and two-dimensional leaves, per-axis
    // sweeps above that.
    let samples = spec.samples.unwrap_or(41);
    let k = spec.dim;
    let mut rows = Vec::new();
    let coord = |i: usize| -> f64 {
        spec.rho * (2.0 * i as f64 / (samples - 1) as f64 - 1.0)
    };
    match k {
        1 => {
            for i in 0..samples {
                let a = DVector::from_element(1, coord(i));
                let p = leaf.point_at(&a)?;
                let mut row = vec![a[0]];
                row.extend(p.coords().iter().copied());
                rows.push(row);
            }
        }
        2 => {
            for i in 0..samples {
                for jj in 0..samples {
                    let a = DVector::from_vec(vec![coord(i), coord(jj)]);
                    let p = leaf.point_at(&a)?;
                    let mut row = vec![a[0], a[1]];
                    row.extend(p.coords().iter().copied());
                    rows.push(row);
                }
            }
        }
        _ => {
            for axis in 0..k {
                for i in 0..samples {
                    let mut a = DVector::zeros(k);
                    a[axis] = coord(i);
                    let p = leaf.point_at(&a)?;
                    let mut row = vec![axis as f64, a[axis]];
                    row.extend(p.coords().iter().copied());
                    rows.push(row);
                }
            }
        }
    }
    let header = match k {
        1 => "a x_1 .. x_d",
        2 => "a_1 a_2 x_1 .. x_d",
        _ => "axis a x_1 .. x_d",
    };
    let plots = vec![("leaf_graph.dat".to_string(), dat_table(header, &rows))];

    let failure = (!pass).then(|| {
        format!(
            "leaf residual {:.3e} (bound {RESIDUAL_BOUND:.0e}), invariance defect {:.3e} (bound {INVARIANCE_BOUND:.0e})",
            summary.residual, summary.invariance_defect
        )
    });
    Ok(CommandOutput {
        pass,
        report: serde_json::to_value(&summary).expect("leaf summary serializes"),
        plots,
        failure,
    })
}
