use nalgebra::DVector;
use serde::Serialize;

use phdyn::access::{holonomy_scaling, AccessBall, AccessConfig, ScalingTrend};
use phdyn::maps::DynamicalMap;
use phdyn::torus::TorusPoint;

use crate::artifact::dat_table;
use crate::commands::CommandOutput;
use crate::config::HolonomySpec;

const REL_BOUND: f64 = 0.05;

#[derive(Serialize)]
struct CenterPickup {
    j: usize,
    center_component: f64,
    expected: f64,
    rel_error: f64,
    off_center_residual: f64,
}

#[derive(Serialize)]
struct HolonomySummary {
    map: String,
    eps: f64,
    theta: f64,
    alpha: f64,
    eta: f64,
    dims: [usize; 3],
    /// Full-scale pickup of each center quadrilateral at the anchor.
    per_center: Vec<CenterPickup>,
    rel_bound: f64,
    /// Pickup ratio against theta at eps, eps/2, ...
    scaling: ScalingTrend,
    drift_nonincreasing: bool,
    pass: bool,
}

pub fn run(map: &dyn DynamicalMap, spec: &HolonomySpec) -> phdyn::Result<CommandOutput> {
    let d = map.dim();
    let cfg = AccessConfig::new(
        spec.eps,
        (spec.dims[0], spec.dims[1], spec.dims[2]),
    );
    let anchor = TorusPoint::from_slice(&spec.anchor);
    let ball = AccessBall::build(map, &anchor, &cfg)?;
    let theta = ball.theta();
    let origin = DVector::zeros(d);

    let mut per_center = Vec::new();
    for j in 1..=spec.dims[1] {
        let h = ball.quadrilateral_holonomy(&origin, j, 1.0)?;
        let expected = theta * spec.eps;
        per_center.push(CenterPickup {
            j,
            center_component: h.center_component,
            expected,
            rel_error: (h.center_component / expected - 1.0).abs(),
            off_center_residual: h.off_center_residual,
        });
    }

    // Leg-scale sweep for the plot table.
    let default_scales = [0.25, 0.5, 0.75, 1.0];
    let scales: &[f64] = spec.scales.as_deref().unwrap_or(&default_scales);
    let mut rows = Vec::new();
    for j in 1..=spec.dims[1] {
        for &s in scales {
            for signed in [s, -s] {
                let h = ball.quadrilateral_holonomy(&origin, j, signed)?;
                rows.push(vec![
                    j as f64,
                    signed,
                    h.center_component,
                    h.off_center_residual,
                ]);
            }
        }
    }

    let trend = holonomy_scaling(map, &anchor, &cfg, spec.halvings.unwrap_or(2))?;
    let drift_nonincreasing = trend
        .drift
        .windows(2)
        .all(|w| w[1] <= w[0] * (1.0 + 1e-9));

    let pass = per_center.iter().all(|c| c.rel_error <= REL_BOUND) && drift_nonincreasing;
    let failure = (!pass).then(|| {
        let worst = per_center
            .iter()
            .map(|c| c.rel_error)
            .fold(0.0f64, f64::max);
        format!(
            "worst center pickup error {worst:.3e} (bound {REL_BOUND}), drift nonincreasing: {drift_nonincreasing}"
        )
    });

    let mut trend_rows = Vec::new();
    for k in 0..trend.eps.len() {
        trend_rows.push(vec![trend.eps[k], trend.ratio[k], trend.drift[k]]);
    }
    let plots = vec![
        (
            "holonomy_sweep.dat".to_string(),
            dat_table("j scale center_component off_center_residual", &rows),
        ),
        (
            "holonomy_scaling.dat".to_string(),
            dat_table("eps ratio drift", &trend_rows),
        ),
    ];

    let summary = HolonomySummary {
        map: map.name(),
        eps: spec.eps,
        theta,
        alpha: ball.alpha(),
        eta: ball.eta(),
        dims: spec.dims,
        per_center,
        rel_bound: REL_BOUND,
        scaling: trend,
        drift_nonincreasing,
        pass,
    };
    Ok(CommandOutput {
        pass,
        report: serde_json::to_value(&summary).expect("holonomy summary serializes"),
        plots,
        failure,
    })
}
