use phdyn::exec::ExecMode;
use phdyn::maps::DynamicalMap;
use phdyn::sections::{build_disk_family, FamilyConfig};
use phdyn::torus::TorusPoint;

use crate::artifact::dat_table;
use crate::commands::CommandOutput;
use crate::config::SectionsSpec;

pub fn run(map: &dyn DynamicalMap, spec: &SectionsSpec, seed: u64) -> phdyn::Result<CommandOutput> {
    let mut cfg = FamilyConfig::new(
        spec.j,
        spec.beta,
        spec.rho,
        TorusPoint::from_slice(&spec.region_center),
        spec.region_radius,
    );
    if let Some(samples) = spec.claim_samples {
        cfg.claim_samples = samples;
    }
    cfg.mode = ExecMode::Auto;
    cfg.seed = seed;

    let (family, report) = build_disk_family(map, &cfg)?;

    let rows: Vec<Vec<f64>> = family
        .disks()
        .iter()
        .map(|disk| {
            let mut row: Vec<f64> = disk.center().coords().iter().copied().collect();
            row.push(disk.radius());
            row
        })
        .collect();
    let plots = vec![(
        "disk_centers.dat".to_string(),
        dat_table("x_1 .. x_d radius", &rows),
    )];

    let failure = (!report.pass).then(|| {
        format!(
            "family of {} disks: return {:?} (need > {}), escape {}/{}, projection {}/{}",
            report.count,
            report.return_time,
            spec.j,
            report.escape.passed,
            report.escape.tested,
            report.projection.passed,
            report.projection.tested
        )
    });
    Ok(CommandOutput {
        pass: report.pass,
        report: serde_json::to_value(&report).expect("family report serializes"),
        plots,
        failure,
    })
}
