//! Built-in verification: numerical checks the installed binary can run on
//! itself without any input files. Tolerances reflect the quadrature and
//! voxelization error bounds of the fixtures, not tuned constants.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::Parser;
use projsynth::metrics::mae;
use projsynth::projector::{back_project, forward_project, FeatureVolume};
use projsynth::{ConeBeamGeometry, GridSpec, Vec3, Volume};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

#[derive(Parser)]
pub struct Args {
    /// Also write the report as JSON here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Override the ray step (mm) of every check. Exists so the quadrature
    /// sensitivity of the chord check can be demonstrated; a huge step must
    /// make it fail.
    #[arg(long, hide = true)]
    pub step_override: Option<f64>,
}

#[derive(Serialize)]
struct Check {
    name: &'static str,
    pass: bool,
    detail: String,
}

#[derive(Serialize)]
struct Report {
    schema: u32,
    checks: Vec<Check>,
    pass: bool,
}

fn test_geometry() -> ConeBeamGeometry {
    ConeBeamGeometry {
        sad: 600.0,
        sdd: 1000.0,
        det_rows: 31,
        det_cols: 31,
        pixel_pitch: [4.0, 4.0],
        det_offset: [0.0, 0.0],
    }
}

/// Forward/back-projection must satisfy the transpose identity
/// <Ax, y> = <x, At y> on random pairs.
fn adjoint_check(step_override: Option<f64>) -> Result<Check> {
    const TOL: f64 = 1e-5;
    let grid = GridSpec::centered([32, 32, 32], [1.0; 3])?;
    let geometry = ConeBeamGeometry {
        sad: 500.0,
        sdd: 750.0,
        det_rows: 48,
        det_cols: 64,
        pixel_pitch: [2.0, 2.0],
        det_offset: [0.0, 0.0],
    };
    let step = step_override.unwrap_or(0.7);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED_0001);
    let mut worst = 0.0f64;
    for pair in 0..20 {
        let angle = rng.random_range(0.0..360.0);
        let xs: Vec<f32> = (0..grid.num_voxels())
            .map(|_| rng.random_range(0.0..1.0))
            .collect();
        let x = FeatureVolume::new(grid, 1, xs)?;
        let ys: Vec<f32> = (0..geometry.det_rows * geometry.det_cols)
            .map(|_| rng.random_range(0.0..1.0))
            .collect();
        let y = projsynth::Projection::new(geometry.det_rows, geometry.det_cols, 1, angle, ys)?;

        let ax = forward_project(&x, &geometry, angle, step)?;
        let aty = back_project(&y, &geometry, &grid, step)?;
        let lhs: f64 = ax
            .data
            .iter()
            .zip(&y.data)
            .map(|(&a, &b)| a as f64 * b as f64)
            .sum();
        let rhs: f64 = x
            .data
            .iter()
            .zip(&aty.data)
            .map(|(&a, &b)| a as f64 * b as f64)
            .sum();
        let ax_norm = ax
            .data
            .iter()
            .map(|&v| (v as f64).powi(2))
            .sum::<f64>()
            .sqrt();
        let y_norm = y
            .data
            .iter()
            .map(|&v| (v as f64).powi(2))
            .sum::<f64>()
            .sqrt();
        let scale = (ax_norm * y_norm).max(f64::MIN_POSITIVE);
        let residual = (lhs - rhs).abs() / scale;
        let _ = pair;
        worst = worst.max(residual);
    }
    Ok(Check {
        name: "adjoint",
        pass: worst <= TOL,
        detail: format!("max residual {worst:.3e} over 20 pairs, tol {TOL:.1e}"),
    })
}

/// Ray-box chord length for a ray that starts at `origin`, independent of the
/// projector's own clipping code.
fn box_chord(origin: Vec3, dir: Vec3, lo: Vec3, hi: Vec3) -> f64 {
    let mut t0: f64 = 0.0;
    let mut t1 = f64::INFINITY;
    for axis in 0..3 {
        let o = origin.component(axis);
        let d = dir.component(axis);
        let (a, b) = (lo.component(axis), hi.component(axis));
        if d.abs() < 1e-12 {
            if o < a || o > b {
                return 0.0;
            }
        } else {
            let ta = (a - o) / d;
            let tb = (b - o) / d;
            t0 = t0.max(ta.min(tb));
            t1 = t1.min(ta.max(tb));
        }
    }
    (t1 - t0).max(0.0)
}

/// Line integrals through a homogeneous cube must match chord length times
/// attenuation; rays that miss must integrate to exactly zero.
fn chord_check(step_override: Option<f64>) -> Result<Check> {
    const MU: f64 = 0.002;
    const CENTRAL_TOL: f64 = 1e-2;
    const OBLIQUE_TOL: f64 = 2e-2;
    // Relative tolerances need non-grazing chords: with step s the midpoint
    // rule is off by at most MU*s/2, so 25 mm chords keep 2% attainable.
    const MIN_CHORD: f64 = 25.0;

    let grid = GridSpec::centered([32, 32, 32], [2.0; 3])?;
    let volume = FeatureVolume::from_volume(&Volume::constant(grid, MU as f32)?);
    let geometry = test_geometry();
    let step = step_override.unwrap_or(0.5);
    let lo = grid.world_min();
    let hi = grid.world_max();

    let front = forward_project(&volume, &geometry, 0.0, step)?;
    let central = front.at(0, 15, 15) as f64;
    // The central ray crosses the full 64 mm cube.
    let central_rel = (central - 64.0 * MU).abs() / (64.0 * MU);

    let angle = 37.0;
    let oblique = forward_project(&volume, &geometry, angle, step)?;
    let source = geometry.source_position(angle);
    let mut oblique_rel = 0.0f64;
    let mut rays = 0usize;
    let mut leakage = 0usize;
    for row in 0..geometry.det_rows {
        for col in 0..geometry.det_cols {
            let pixel = geometry.detector_pixel_center(angle, row, col)?;
            let dir = (pixel - source).normalized();
            let chord = box_chord(source, dir, lo, hi);
            let measured = oblique.at(0, row, col) as f64;
            if chord == 0.0 {
                if measured != 0.0 {
                    leakage += 1;
                }
            } else if chord >= MIN_CHORD {
                oblique_rel = oblique_rel.max((measured - chord * MU).abs() / (chord * MU));
                rays += 1;
            }
        }
    }

    let pass = central_rel <= CENTRAL_TOL && oblique_rel <= OBLIQUE_TOL && leakage == 0;
    Ok(Check {
        name: "chord",
        pass,
        detail: format!(
            "central rel {central_rel:.3e} (tol {CENTRAL_TOL:.1e}), oblique max rel {oblique_rel:.3e} over {rays} rays (tol {OBLIQUE_TOL:.1e}), {leakage} rays leak outside the cube"
        ),
    })
}

/// A centered sphere looks the same from every gantry angle; projections at
/// rotated angles must agree pixel-for-pixel up to voxelization error.
fn rotation_check(step_override: Option<f64>) -> Result<Check> {
    const TOL: f64 = 1e-4;
    let grid = GridSpec::centered([32, 32, 32], [2.0; 3])?;
    // Radial profile with a smoothstep shell: exactly rotation invariant in
    // the continuum and C1 in space, so sampling it at voxel centers leaves
    // only second-order asymmetry (a hard binary ball would be first order).
    let (mu, radius, shell) = (0.01f64, 12.0f64, 6.0f64);
    let mut volume = Volume::zeros(grid)?;
    for z in 0..32 {
        for y in 0..32 {
            for x in 0..32 {
                let p = grid.voxel_center(z, y, x);
                let t = ((radius - p.norm()) / shell + 0.5).clamp(0.0, 1.0);
                let v = mu * t * t * (3.0 - 2.0 * t);
                *volume.at_mut(z, y, x) = v as f32;
            }
        }
    }
    let features = FeatureVolume::from_volume(&volume);
    let geometry = test_geometry();
    let step = step_override.unwrap_or(1.0);

    let angles = [0.0, 30.0, 60.0, 90.0];
    let mut views = Vec::new();
    for &a in &angles {
        views.push(forward_project(&features, &geometry, a, step)?);
    }
    let mut worst = 0.0f64;
    for i in 0..views.len() {
        for j in (i + 1)..views.len() {
            worst = worst.max(mae(&views[i], &views[j])?);
        }
    }
    Ok(Check {
        name: "rotation",
        pass: worst <= TOL,
        detail: format!("max pairwise MAE {worst:.3e} over 6 angle pairs, tol {TOL:.1e}"),
    })
}

pub fn run(args: &Args) -> Result<ExitCode> {
    let checks = vec![
        adjoint_check(args.step_override)?,
        chord_check(args.step_override)?,
        rotation_check(args.step_override)?,
    ];
    for c in &checks {
        println!(
            "check {}: {} ({})",
            c.name,
            if c.pass { "PASS" } else { "FAIL" },
            c.detail
        );
    }
    let pass = checks.iter().all(|c| c.pass);
    println!("selftest: {}", if pass { "PASS" } else { "FAIL" });
    if let Some(path) = &args.out {
        let report = Report {
            schema: 1,
            checks,
            pass,
        };
        std::fs::write(
            path,
            format!("{}\n", serde_json::to_string_pretty(&report)?),
        )?;
    }
    Ok(if pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}
