use serde::Serialize;

use phdyn::cones::{certify_ph, CertifyConfig, PHCertificate};
use phdyn::lyapunov::{dichotomy_report, lyapunov_spectrum, DichotomyReport, LyapunovReport};
use phdyn::maps::{DynamicalMap, Preservation};
use phdyn::torus::TorusPoint;

use crate::artifact::dat_table;
use crate::commands::CommandOutput;
use crate::config::{CertifySpec, LyapunovSpec};

const SUM_BOUND: f64 = 1e-6;
const PAIRING_BOUND: f64 = 1e-6;

#[derive(Serialize)]
struct LyapunovSummary {
    map: String,
    n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    spectrum: Option<LyapunovReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sum_defect_bound: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pairing_defect: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    dichotomy: Option<DichotomyReport>,
    /// Hyperbolicity certificate recomputed for the cross-check, when the
    /// config carries a certify block.
    #[serde(skip_serializing_if = "Option::is_none")]
    certificate: Option<PHCertificate>,
    pass: bool,
}

pub fn run(
    map: &dyn DynamicalMap,
    spec: &LyapunovSpec,
    certify_spec: Option<&CertifySpec>,
) -> phdyn::Result<CommandOutput> {
    let mut plots = Vec::new();

    let spectrum = match &spec.point {
        Some(p) => Some(lyapunov_spectrum(map, &TorusPoint::from_slice(p), spec.n)?),
        None => None,
    };
    let mut pairing_defect = None;
    let mut spectrum_pass = true;
    if let Some(report) = &spectrum {
        spectrum_pass &= report.sum_defect <= SUM_BOUND;
        if map.preservation() == Preservation::Symplectic {
            let defect = report.pairing_defect();
            spectrum_pass &= defect <= PAIRING_BOUND;
            pairing_defect = Some(defect);
        }
        let rows: Vec<Vec<f64>> = report
            .convergence
            .iter()
            .map(|snap| {
                let mut row = vec![snap.steps as f64];
                row.extend(snap.exponents.iter().copied());
                row
            })
            .collect();
        plots.push((
            "lyapunov_trace.dat".to_string(),
            dat_table("steps lambda_1 .. lambda_d", &rows),
        ));
    }

    let certificate = match certify_spec {
        Some(cs) => {
            let mut cfg = CertifyConfig::new(cs.grid, cs.n_max, (cs.dims[0], cs.dims[1], cs.dims[2]));
            if let Some(apertures) = cs.apertures {
                cfg.apertures = apertures;
            }
            if let Some(allow) = cs.allow_trivial_center {
                cfg.allow_trivial_center = allow;
            }
            Some(certify_ph(map, &cfg)?)
        }
        None => None,
    };

    let dichotomy = match spec.samples {
        Some(samples) => Some(dichotomy_report(
            map,
            samples,
            spec.n,
            spec.zero_band,
            certificate.as_ref(),
        )?),
        None => None,
    };
    if let Some(report) = &dichotomy {
        let rows: Vec<Vec<f64>> = report
            .spectra
            .iter()
            .enumerate()
            .map(|(i, exps)| {
                let mut row = vec![i as f64];
                row.extend(exps.iter().copied());
                row
            })
            .collect();
        plots.push((
            "lyapunov_samples.dat".to_string(),
            dat_table("sample lambda_1 .. lambda_d", &rows),
        ));
    }

    let dichotomy_pass = dichotomy.as_ref().map(|d| d.pass).unwrap_or(true);
    let pass = spectrum_pass && dichotomy_pass;
    let failure = (!pass).then(|| {
        if !spectrum_pass {
            "spectrum consistency checks failed".to_string()
        } else {
            "exponent signature disagrees across samples or with the certificate".to_string()
        }
    });

    let summary = LyapunovSummary {
        map: map.name(),
        n: spec.n,
        spectrum,
        sum_defect_bound: Some(SUM_BOUND),
        pairing_defect,
        dichotomy,
        certificate,
        pass,
    };
    Ok(CommandOutput {
        pass,
        report: serde_json::to_value(&summary).expect("lyapunov summary serializes"),
        plots,
        failure,
    })
}
