use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use phdyn::maps::{symplectic_form, DynamicalMap, TorusAutomorphism};
use phdyn::perturb::{
    c0_distance, c1_distance, support_covering_sample, ComposedMap, Perturbation,
    PerturbationMode,
};
use phdyn::torus::TorusPoint;

use crate::artifact::dat_table;
use crate::commands::CommandOutput;
use crate::config::{MapSpec, PerturbSpec};

const PLATEAU_BOUND: f64 = 1e-10;
const STRUCTURE_BOUND: f64 = 1e-9;

#[derive(Serialize)]
struct PerturbSummary {
    map: String,
    mode: &'static str,
    alpha: f64,
    alpha_max: f64,
    radius: f64,
    eta: f64,
    translation_norm: f64,
    /// Worst |psi(x) - x - shift| over the plateau ball B(z, 2r).
    plateau_defect: f64,
    plateau_bound: f64,
    /// Points outside B(z, 3r) moved by as much as one ulp.
    support_mismatches: usize,
    support_samples: usize,
    /// Worst measured operator deviation of the differential from identity.
    derivative_defect: f64,
    derivative_bound: f64,
    /// sup |psi(x) - x| over a support-covering sample.
    c0_distance: f64,
    c0_bound: f64,
    /// Worst |det Dpsi - 1| over the support shell; absent in plain mode.
    #[serde(skip_serializing_if = "Option::is_none")]
    volume_residual: Option<f64>,
    /// Worst |Dpsi^T J Dpsi - J| over the support shell; symplectic only.
    #[serde(skip_serializing_if = "Option::is_none")]
    symplectic_residual: Option<f64>,
    structure_bound: f64,
    /// Distances between the configured map and its perturbed composition.
    composed_c0: f64,
    composed_c1: f64,
    pass: bool,
}

/// Deterministic unit directions: Gaussian draws from a seeded stream.
fn unit_directions(d: usize, count: usize, seed: u64) -> Vec<DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let v = DVector::from_fn(d, |_, _| {
            let (a, b): (f64, f64) = (rng.random(), rng.random());
            (-2.0 * a.max(1e-300).ln()).sqrt() * (std::f64::consts::TAU * b).cos()
        });
        let n = v.norm();
        if n > 1e-9 {
            out.push(v / n);
        }
    }
    out
}

pub fn run(
    map: &dyn DynamicalMap,
    map_spec: &MapSpec,
    spec: &PerturbSpec,
    seed: u64,
) -> phdyn::Result<CommandOutput> {
    let d = map.dim();
    let mode = match spec.mode.as_str() {
        "volume" => PerturbationMode::Volume,
        "symplectic" => PerturbationMode::Symplectic,
        _ => PerturbationMode::Plain,
    };
    let center = TorusPoint::from_slice(&spec.center);
    let z = spec
        .offset
        .as_ref()
        .map(|o| DVector::from_column_slice(o))
        .unwrap_or_else(|| DVector::zeros(d));
    let v = DVector::from_column_slice(&spec.direction);
    let pert = Perturbation::new(center, z.clone(), spec.radius, v, spec.alpha, mode)?;

    let r = spec.radius;
    let shift = pert.translation();
    let samples = spec.samples.unwrap_or(1000);

    // Plateau: the map restricted to B(z, 2r) is the exact translation.
    let mut plateau_defect: f64 = 0.0;
    for dir in unit_directions(d, 48, seed ^ 0x51) {
        for step in 0..=8 {
            let x = &z + &dir * (2.0 * r * step as f64 / 8.0);
            let defect = (pert.apply_tangent(&x) - &x - &shift).norm();
            plateau_defect = plateau_defect.max(defect);
        }
    }

    // Support: outside B(z, 3r) every coordinate must come back bitwise.
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x07);
    let support_center = pert.support_center();
    let mut support_mismatches = 0usize;
    let mut support_samples = 0usize;
    while support_samples < samples.max(200) {
        let p = TorusPoint::new(DVector::from_fn(d, |_, _| rng.random::<f64>()));
        if support_center.displacement_to(&p).norm() <= 3.0 * r {
            continue;
        }
        support_samples += 1;
        if pert.apply(&p).coords() != p.coords() {
            support_mismatches += 1;
        }
    }

    let derivative_defect = pert.derivative_defect(60, 40, seed ^ 0xD1);
    let derivative_bound = spec.alpha;

    // C0 size against the bare identity, sampled across the support shells.
    let sample = support_covering_sample(std::slice::from_ref(&pert), 120, seed ^ 0xC0);
    let identity: Box<dyn DynamicalMap> = Box::new(TorusAutomorphism::identity(d));
    let bumped_identity = ComposedMap::new(
        Box::new(TorusAutomorphism::identity(d)),
        vec![pert.clone()],
    )?;
    let c0 = c0_distance(identity.as_ref(), &bumped_identity, &sample);
    let c0_bound = r / (100.0 * (d * d) as f64);

    // Structure residuals on the support shell [0, 3.05 r].
    let mut volume_residual = None;
    let mut symplectic_residual = None;
    if mode != PerturbationMode::Plain {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x57);
        let dirs = unit_directions(d, samples, seed ^ 0x58);
        let mut worst_det: f64 = 0.0;
        let mut worst_form: f64 = 0.0;
        let form = (d % 2 == 0).then(|| symplectic_form(d));
        for dir in &dirs {
            let rho: f64 = 3.05 * r * rng.random::<f64>();
            let p = support_center.translate(&(dir * rho));
            let m = pert.jacobian(&p);
            worst_det = worst_det.max((m.determinant() - 1.0).abs());
            if mode == PerturbationMode::Symplectic {
                let j = form.as_ref().expect("even dimension");
                let defect: DMatrix<f64> = m.transpose() * j * &m - j;
                worst_form = worst_form.max(defect.norm());
            }
        }
        volume_residual = Some(worst_det);
        if mode == PerturbationMode::Symplectic {
            symplectic_residual = Some(worst_form);
        }
    }

    // How far the configured map moves when the bump is composed onto it.
    let base = map_spec.build().map_err(|e| {
        phdyn::error::CoreError::parameter(format!("cannot rebuild the base map: {e}"))
    })?;
    let composed = ComposedMap::new(base, vec![pert.clone()])?;
    let composed_c0 = c0_distance(map, &composed, &sample);
    let composed_c1 = c1_distance(map, &composed, &sample);

    let pass = plateau_defect <= PLATEAU_BOUND
        && support_mismatches == 0
        && derivative_defect <= derivative_bound * (1.0 + 1e-12) + 1e-300
        && c0 <= c0_bound * (1.0 + 1e-9)
        && volume_residual.is_none_or(|v| v < STRUCTURE_BOUND)
        && symplectic_residual.is_none_or(|v| v < STRUCTURE_BOUND);

    let summary = PerturbSummary {
        map: map.name(),
        mode: match mode {
            PerturbationMode::Plain => "plain",
            PerturbationMode::Volume => "volume",
            PerturbationMode::Symplectic => "symplectic",
        },
        alpha: spec.alpha,
        alpha_max: Perturbation::alpha_max(mode, d),
        radius: r,
        eta: pert.eta(),
        translation_norm: shift.norm(),
        plateau_defect,
        plateau_bound: PLATEAU_BOUND,
        support_mismatches,
        support_samples,
        derivative_defect,
        derivative_bound,
        c0_distance: c0,
        c0_bound,
        volume_residual,
        symplectic_residual,
        structure_bound: STRUCTURE_BOUND,
        composed_c0,
        composed_c1,
        pass,
    };

    // Radial bump profile for plotting.
    let profile = pert.profile();
    let rows: Vec<Vec<f64>> = (0..=320)
        .map(|i| {
            let t = 3.2 * r * i as f64 / 320.0;
            vec![t, profile.chi(t), profile.chi_d1(t)]
        })
        .collect();
    let plots = vec![(
        "bump_profile.dat".to_string(),
        dat_table("t chi chi'", &rows),
    )];

    let failure = (!pass).then(|| {
        format!(
            "plateau {:.3e}, support mismatches {}, derivative {:.3e} vs {:.3e}, c0 {:.3e} vs {:.3e}",
            summary.plateau_defect,
            summary.support_mismatches,
            summary.derivative_defect,
            summary.derivative_bound,
            summary.c0_distance,
            summary.c0_bound
        )
    });
    Ok(CommandOutput {
        pass,
        report: serde_json::to_value(&summary).expect("perturb summary serializes"),
        plots,
        failure,
    })
}
