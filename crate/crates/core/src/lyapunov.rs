//! Lyapunov diagnostics: QR-cocycle spectra with convergence traces, exact
//! volume bookkeeping, symplectic pairing defects, and sampled sign
//! signatures cross-checked against cone certificates.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::cones::PHCertificate;
use crate::error::CoreError;
use crate::exec::{self, ExecMode};
use crate::maps::DynamicalMap;
use crate::torus::TorusPoint;
use crate::Result;

/// Frame-alignment steps discarded before exponents accumulate. The QR frame
/// locks onto the invariant flag exponentially fast, so a short transient
/// removes the O(1/n) bias the coordinate starting basis would leave.
const BURN_IN: usize = 200;

#[derive(Clone, Debug, Serialize)]
pub struct SpectrumSnapshot {
    pub steps: usize,
    pub exponents: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct LyapunovReport {
    pub map: String,
    pub point: Vec<f64>,
    /// Accumulation steps, after the discarded alignment transient.
    pub n: usize,
    pub burn_in: usize,
    /// Exponents in descending order.
    pub exponents: Vec<f64>,
    /// Partial estimates at the quarter, half, and full mark.
    pub convergence: Vec<SpectrumSnapshot>,
    /// Average log-volume growth over the window; the exponents sum to this
    /// by construction, so `sum_defect` only measures arithmetic drift.
    pub volume_rate: f64,
    pub sum_defect: f64,
}

impl LyapunovReport {
    /// Largest |l_i + l_{d+1-i}| over the exponent pairs; vanishes for
    /// symplectic cocycles.
    pub fn pairing_defect(&self) -> f64 {
        let d = self.exponents.len();
        (0..d / 2)
            .map(|i| (self.exponents[i] + self.exponents[d - 1 - i]).abs())
            .fold(0.0, f64::max)
    }

    /// Sign counts (expanding, within `band` of zero, contracting).
    pub fn signature(&self, band: f64) -> (usize, usize, usize) {
        let u = self.exponents.iter().filter(|&&l| l > band).count();
        let s = self.exponents.iter().filter(|&&l| l < -band).count();
        (u, self.exponents.len() - u - s, s)
    }
}

/// Exponents of the derivative cocycle along the forward orbit of `start`,
/// by per-step QR reduction of an evolving orthonormal frame.
pub fn lyapunov_spectrum(
    map: &dyn DynamicalMap,
    start: &TorusPoint,
    n: usize,
) -> Result<LyapunovReport> {
    let d = map.dim();
    if start.dim() != d {
        return Err(CoreError::Dimension {
            expected: d,
            got: start.dim(),
        });
    }
    if n == 0 {
        return Err(CoreError::parameter("spectrum needs at least one step"));
    }

    let mut x = start.clone();
    let mut frame = DMatrix::<f64>::identity(d, d);
    for _ in 0..BURN_IN {
        let (q, _) = (map.differential(&x) * &frame).qr().unpack();
        frame = q;
        x = map.eval(&x);
    }

    let mut sums = vec![0.0f64; d];
    let mut log_volume = 0.0f64;
    let mut marks = vec![n / 4, n / 2, n];
    marks.retain(|&m| m > 0);
    marks.dedup();
    let mut convergence: Vec<SpectrumSnapshot> = Vec::with_capacity(marks.len());
    for step in 1..=n {
        let df = map.differential(&x);
        log_volume += df.determinant().abs().ln();
        let (q, r) = (df * &frame).qr().unpack();
        for (i, sum) in sums.iter_mut().enumerate() {
            let pivot = r[(i, i)].abs();
            if !(pivot > 0.0) {
                return Err(CoreError::NonConvergence {
                    context: format!("cocycle frame degenerated at step {step}"),
                    residual: pivot,
                });
            }
            *sum += pivot.ln();
        }
        frame = q;
        x = map.eval(&x);
        if marks.contains(&step) {
            let mut exps: Vec<f64> = sums.iter().map(|s| s / step as f64).collect();
            exps.sort_by(|a, b| b.partial_cmp(a).expect("finite exponents"));
            convergence.push(SpectrumSnapshot {
                steps: step,
                exponents: exps,
            });
        }
    }

    let mut exponents: Vec<f64> = sums.iter().map(|s| s / n as f64).collect();
    exponents.sort_by(|a, b| b.partial_cmp(a).expect("finite exponents"));
    let volume_rate = log_volume / n as f64;
    let sum_defect = (exponents.iter().sum::<f64>() - volume_rate).abs();

    Ok(LyapunovReport {
        map: map.name(),
        point: start.coords().iter().copied().collect(),
        n,
        burn_in: BURN_IN,
        exponents,
        convergence,
        volume_rate,
        sum_defect,
    })
}

/// Largest |forward + reversed backward| exponent mismatch at `start`.
/// Running the inverse map negates and reverses the spectrum; on maps with
/// constant differential the cancellation is exact.
pub fn time_reversal_defect(
    map: &dyn DynamicalMap,
    start: &TorusPoint,
    n: usize,
) -> Result<f64> {
    let forward = lyapunov_spectrum(map, start, n)?;
    let inverse = crate::maps::Inverted::new(map);
    let backward = lyapunov_spectrum(&inverse, start, n)?;
    let d = forward.exponents.len();
    Ok((0..d)
        .map(|i| (forward.exponents[i] + backward.exponents[d - 1 - i]).abs())
        .fold(0.0, f64::max))
}

#[derive(Clone, Debug, Serialize)]
pub struct DichotomyReport {
    pub map: String,
    pub samples: usize,
    pub n: usize,
    /// Half-width of the neutral band, 10/n.
    pub zero_band: f64,
    /// Common (expanding, neutral, contracting) counts across the samples;
    /// absent when the samples disagree.
    pub signature: Option<(usize, usize, usize)>,
    /// Weakest expansion rate among exponents classified expanding.
    pub min_unstable: f64,
    /// Weakest contraction rate among exponents classified contracting.
    pub max_stable: f64,
    /// Largest |exponent| inside the neutral band.
    pub worst_center: f64,
    pub spectra: Vec<Vec<f64>>,
    /// Whether the signature equals the certified splitting dimensions,
    /// when a certificate is supplied. A dominated middle band with nonzero
    /// exponents legitimately reports false here.
    pub matches_certificate: Option<bool>,
    pub pass: bool,
}

/// Kronecker sequence start points: equidistributed, deterministic, and
/// independent of the sample count.
fn sample_point(dim: usize, s: usize) -> TorusPoint {
    const STRIDES: [f64; 6] = [
        std::f64::consts::SQRT_2,
        1.732_050_807_568_877_2,
        2.236_067_977_499_79,
        2.645_751_311_064_590_7,
        3.316_624_790_355_399_7,
        3.605_551_275_463_989,
    ];
    let coords: Vec<f64> = (0..dim)
        .map(|k| (0.5 + (s as f64 + 1.0) * STRIDES[k % STRIDES.len()]).fract())
        .collect();
    TorusPoint::from_slice(&coords)
}

/// Exponent sign signature measured at equidistributed sample points. The
/// neutral band defaults to the noise floor 10/n of finite-window estimates.
/// All samples must agree for a pass; a certificate pins the expected
/// dimensions.
pub fn dichotomy_report(
    map: &dyn DynamicalMap,
    samples: usize,
    n: usize,
    zero_band: Option<f64>,
    certificate: Option<&PHCertificate>,
) -> Result<DichotomyReport> {
    if samples == 0 {
        return Err(CoreError::parameter("need at least one sample point"));
    }
    let zero_band = match zero_band {
        Some(band) if band > 0.0 => band,
        Some(_) => return Err(CoreError::parameter("zero band must be positive")),
        None => 10.0 / n as f64,
    };

    let runs: Vec<Result<LyapunovReport>> =
        exec::map_indexed(ExecMode::Auto, samples, |s| {
            lyapunov_spectrum(map, &sample_point(map.dim(), s), n)
        });
    let mut spectra = Vec::with_capacity(samples);
    let mut signature: Option<(usize, usize, usize)> = None;
    let mut consistent = true;
    let mut min_unstable = f64::INFINITY;
    let mut max_stable = f64::NEG_INFINITY;
    let mut worst_center = 0.0f64;
    for run in runs {
        let report = run?;
        let sig = report.signature(zero_band);
        match &signature {
            None => signature = Some(sig),
            Some(prev) => consistent &= *prev == sig,
        }
        for &l in &report.exponents {
            if l > zero_band {
                min_unstable = min_unstable.min(l);
            } else if l < -zero_band {
                max_stable = max_stable.max(l);
            } else {
                worst_center = worst_center.max(l.abs());
            }
        }
        spectra.push(report.exponents);
    }

    let signature = if consistent { signature } else { None };
    let matches_certificate = certificate.map(|cert| {
        signature.is_some_and(|(u, c, s)| [u, c, s] == cert.dims)
    });
    let pass = signature.is_some() && matches_certificate.unwrap_or(true);

    Ok(DichotomyReport {
        map: map.name(),
        samples,
        n,
        zero_band,
        signature,
        min_unstable,
        max_stable,
        worst_center,
        spectra,
        matches_certificate,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cones::{certify_ph, CertifyConfig};
    use crate::maps::{CatSkew3, CoupledCat4, TorusAutomorphism, TorusTranslation};

    const CAT_EXPONENT: f64 = 0.962_423_650_119_206_9;

    #[test]
    fn cat_spectrum_matches_the_closed_form() {
        let cat = TorusAutomorphism::cat2();
        let start = TorusPoint::from_slice(&[0.2, 0.1]);
        let report = lyapunov_spectrum(&cat, &start, 20_000).unwrap();
        assert!((report.exponents[0] - CAT_EXPONENT).abs() < 1e-9);
        assert!((report.exponents[1] + CAT_EXPONENT).abs() < 1e-9);
        assert!(report.volume_rate.abs() < 1e-12);
        assert!(report.sum_defect < 1e-9);

        assert_eq!(report.convergence.len(), 3);
        assert_eq!(report.convergence[0].steps, 5_000);
        assert_eq!(report.convergence[2].steps, 20_000);
        assert_eq!(report.convergence[2].exponents, report.exponents);
        // the trace is already settled at the quarter mark
        assert!((report.convergence[0].exponents[0] - CAT_EXPONENT).abs() < 1e-9);
    }

    #[test]
    fn skew_center_exponent_sits_at_zero() {
        let skew = CatSkew3::linear();
        let start = TorusPoint::from_slice(&[0.2, 0.1, 0.7]);
        let report = lyapunov_spectrum(&skew, &start, 10_000).unwrap();
        assert!((report.exponents[0] - CAT_EXPONENT).abs() < 1e-9);
        assert!(report.exponents[1].abs() < 1e-9);
        assert!((report.exponents[2] + CAT_EXPONENT).abs() < 1e-9);

        // the sine kick shears the fiber but never stretches it; the finite
        // window leaves an O(1/n) boundary term on the estimate
        let kicked = CatSkew3::new(0.3);
        let kicked_report = lyapunov_spectrum(&kicked, &start, 50_000).unwrap();
        assert!(kicked_report.exponents[1].abs() < 1e-6);
        assert!(kicked_report.sum_defect < 1e-9);
    }

    #[test]
    fn coupled_map_pairs_its_exponents() {
        let map = CoupledCat4::new(0.05);
        let start = TorusPoint::from_slice(&[0.21, 0.37, 0.11, 0.53]);
        let report = lyapunov_spectrum(&map, &start, 20_000).unwrap();
        assert!(report.pairing_defect() < 1e-8, "pairing {}", report.pairing_defect());
        assert!(report.sum_defect < 1e-9);
        // near the uncoupled limit the rates stay close to the two blocks
        assert!((report.exponents[0] - 1.924_847_300_238_413_9).abs() < 0.05);
        assert!((report.exponents[1] - CAT_EXPONENT).abs() < 0.05);
        assert_eq!(report.signature(1e-3), (2, 0, 2));
    }

    #[test]
    fn time_reversal_negates_the_spectrum() {
        let cat = TorusAutomorphism::cat2();
        let start = TorusPoint::from_slice(&[0.2, 0.1]);
        assert!(time_reversal_defect(&cat, &start, 10_000).unwrap() < 1e-9);

        let skew = CatSkew3::linear();
        let start3 = TorusPoint::from_slice(&[0.2, 0.1, 0.7]);
        assert!(time_reversal_defect(&skew, &start3, 10_000).unwrap() < 1e-9);
    }

    #[test]
    fn dichotomy_signature_matches_the_certificate() {
        let skew = CatSkew3::linear();
        let mut cfg = CertifyConfig::new(4, 3, (1, 1, 1));
        cfg.splitting = None;
        let cert = certify_ph(&skew, &cfg).unwrap();
        assert!(cert.pass);

        let report = dichotomy_report(&skew, 5, 10_000, None, Some(&cert)).unwrap();
        assert!(report.pass, "report: {report:?}");
        assert_eq!(report.signature, Some((1, 1, 1)));
        assert_eq!(report.matches_certificate, Some(true));
        assert!(report.min_unstable > 0.9);
        assert!(report.max_stable < -0.9);
        assert!(report.worst_center < report.zero_band);
        assert_eq!(report.spectra.len(), 5);
    }

    #[test]
    fn dichotomy_flags_a_mismatched_certificate() {
        // a translation has a fully neutral spectrum
        let shift = TorusTranslation::new(&[0.37, 0.21, 0.11]);
        let plain = dichotomy_report(&shift, 3, 1_000, None, None).unwrap();
        assert!(plain.pass);
        assert_eq!(plain.signature, Some((0, 3, 0)));

        let skew = CatSkew3::linear();
        let cert = certify_ph(&skew, &CertifyConfig::new(4, 3, (1, 1, 1))).unwrap();
        let crossed = dichotomy_report(&shift, 3, 1_000, None, Some(&cert)).unwrap();
        assert!(!crossed.pass);
        assert_eq!(crossed.matches_certificate, Some(false));

        // a fixed wide band still splits a genuinely hyperbolic spectrum
        let cat = TorusAutomorphism::cat2();
        let banded = dichotomy_report(&cat, 3, 1_000, Some(0.01), None).unwrap();
        assert_eq!(banded.signature, Some((1, 0, 1)));
    }

    #[test]
    fn spectrum_rejects_degenerate_requests() {
        let cat = TorusAutomorphism::cat2();
        let start = TorusPoint::from_slice(&[0.2, 0.1]);
        assert!(matches!(
            lyapunov_spectrum(&cat, &start, 0),
            Err(CoreError::Parameter(_))
        ));
        assert!(matches!(
            dichotomy_report(&cat, 0, 1_000, None, None),
            Err(CoreError::Parameter(_))
        ));
        assert!(matches!(
            dichotomy_report(&cat, 1, 1_000, Some(0.0), None),
            Err(CoreError::Parameter(_))
        ));
    }

    #[test]
    fn identity_spectrum_is_exactly_zero() {
        let id = TorusAutomorphism::identity(3);
        let start = TorusPoint::from_slice(&[0.2, 0.1, 0.7]);
        let report = lyapunov_spectrum(&id, &start, 100).unwrap();
        assert_eq!(report.exponents, vec![0.0, 0.0, 0.0]);
        assert_eq!(report.sum_defect, 0.0);

        // a short window still reports a trace, just with fewer marks
        let tiny = lyapunov_spectrum(&id, &start, 2).unwrap();
        assert_eq!(tiny.convergence.len(), 2);
    }
}
