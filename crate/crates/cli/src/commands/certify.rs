use phdyn::cones::{certify_ph, CertifyConfig};
use phdyn::maps::DynamicalMap;

use crate::artifact::dat_table;
use crate::commands::CommandOutput;
use crate::config::CertifySpec;

pub fn run(map: &dyn DynamicalMap, spec: &CertifySpec) -> phdyn::Result<CommandOutput> {
    let mut cfg = CertifyConfig::new(
        spec.grid,
        spec.n_max,
        (spec.dims[0], spec.dims[1], spec.dims[2]),
    );
    if let Some(apertures) = spec.apertures {
        cfg.apertures = apertures;
    }
    if let Some(allow) = spec.allow_trivial_center {
        cfg.allow_trivial_center = allow;
    }

    let cert = certify_ph(map, &cfg)?;

    let rows: Vec<Vec<f64>> = cert
        .margins
        .iter()
        .enumerate()
        .filter_map(|(i, m)| m.map(|margin| vec![i as f64, cert.n as f64, margin]))
        .collect();
    let plots = vec![(
        "certify_margins.dat".to_string(),
        dat_table("inequality n margin", &rows),
    )];

    let failure = cert.violated.clone();
    Ok(CommandOutput {
        pass: cert.pass,
        report: serde_json::to_value(&cert).expect("certificate serializes"),
        plots,
        failure,
    })
}
