use nalgebra::DVector;
use serde::Serialize;

use phdyn::access::{
    AccessBall, AccessConfig, CoverageConfig, CoverageReport, ThetaAccessReport,
};
use phdyn::exec::ExecMode;
use phdyn::maps::DynamicalMap;
use phdyn::torus::TorusPoint;

use crate::artifact::dat_table;
use crate::commands::CommandOutput;
use crate::config::AccessSpec;

#[derive(Serialize)]
struct ChecklistItem {
    item: &'static str,
    name: &'static str,
    defect: f64,
    bound: f64,
    pass: bool,
}

#[derive(Serialize)]
struct AccessSummary {
    map: String,
    eps: f64,
    theta: f64,
    alpha: f64,
    eta: f64,
    dims: [usize; 3],
    perturbed: bool,
    /// The four-point holonomy checklist: (a) base return, (b) leg gluing,
    /// (c) endpoint identity at scale 0, (d) endpoint translation at full
    /// scale.
    items: Vec<ChecklistItem>,
    summary: String,
    checklist: ThetaAccessReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    coverage: Option<CoverageReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    coverage_error: Option<String>,
    pass: bool,
}

pub fn run(map: &dyn DynamicalMap, spec: &AccessSpec) -> phdyn::Result<CommandOutput> {
    let d = map.dim();
    let cfg = AccessConfig::new(
        spec.eps,
        (spec.dims[0], spec.dims[1], spec.dims[2]),
    );
    let perturbed = spec.perturbed.unwrap_or(true);
    let ball = {
        let built = AccessBall::build(map, &TorusPoint::from_slice(&spec.anchor), &cfg)?;
        if perturbed {
            built
        } else {
            built.without_bumps()
        }
    };

    let checklist = ball.theta_access_check(ExecMode::Auto)?;
    let items = vec![
        ChecklistItem {
            item: "a",
            name: "base point return",
            defect: checklist.base_defect,
            bound: checklist.identity_bound,
            pass: checklist.pass_base,
        },
        ChecklistItem {
            item: "b",
            name: "leg gluing",
            defect: checklist.endpoint_gap.max(checklist.leaf_residual),
            bound: checklist.identity_bound,
            pass: checklist.pass_legs,
        },
        ChecklistItem {
            item: "c",
            name: "endpoint identity at scale zero",
            defect: checklist.identity_defect,
            bound: checklist.identity_bound,
            pass: checklist.pass_identity,
        },
        ChecklistItem {
            item: "d",
            name: "endpoint translation at full scale",
            defect: checklist.translation_defect,
            bound: checklist.translation_bound,
            pass: checklist.pass_translation,
        },
    ];
    let failed: Vec<&str> = items.iter().filter(|i| !i.pass).map(|i| i.item).collect();
    let summary = if failed.is_empty() {
        "all four items verified".to_string()
    } else {
        format!("failure at item ({})", failed.join("), ("))
    };

    let want_coverage = spec.coverage.unwrap_or(true);
    let (coverage, coverage_error) = if want_coverage {
        match ball.brouwer_coverage(&DVector::zeros(d), &CoverageConfig::default(), ExecMode::Auto)
        {
            Ok(report) => (Some(report), None),
            Err(e) => (None, Some(e.to_string())),
        }
    } else {
        (None, None)
    };

    let coverage_pass = !want_coverage || coverage.as_ref().is_some_and(|c| c.pass);
    let pass = checklist.pass && coverage_pass;

    // Sweep table: pickup of each quadrilateral against leg scale.
    let origin = DVector::zeros(d);
    let mut rows = Vec::new();
    for j in 1..=spec.dims[1] {
        for s in [0.25, 0.5, 0.75, 1.0] {
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
    let plots = vec![(
        "access_sweep.dat".to_string(),
        dat_table("j scale center_component off_center_residual", &rows),
    )];

    let failure = (!pass).then(|| {
        if failed.is_empty() {
            coverage_error
                .clone()
                .unwrap_or_else(|| "coverage verification failed".to_string())
        } else {
            summary.clone()
        }
    });
    let report = AccessSummary {
        map: map.name(),
        eps: spec.eps,
        theta: ball.theta(),
        alpha: ball.alpha(),
        eta: ball.eta(),
        dims: spec.dims,
        perturbed,
        items,
        summary,
        checklist,
        coverage,
        coverage_error,
        pass,
    };
    Ok(CommandOutput {
        pass,
        report: serde_json::to_value(&report).expect("access summary serializes"),
        plots,
        failure,
    })
}
