//! End-to-end view synthesis: encode source projections into geometry
//! features plus a texture code, transform the geometry features through the
//! volume (see [`crate::transform`]), and decode every transformed view with
//! a generator conditioned on the fused texture code.
//!
//! Stages are pluggable through the [`Encoder`], [`crate::transform::Refiner`]
//! and [`Generator`] traits. The reference implementations are deliberately
//! simple, deterministic stand-ins for learned networks: they preserve the
//! pipeline's structure (separate geometry and texture paths) without any
//! training, which keeps the whole chain testable end to end.

use crate::error::{Error, Result};
use crate::geometry::ConeBeamGeometry;
use crate::grid::GridSpec;
use crate::projection::Projection;
use crate::transform::{transform_projections, Refiner, TransformPlan};

/// Fixed-length texture descriptor extracted by an encoder.
#[derive(Clone, Debug, PartialEq)]
pub struct TextureCode(pub Vec<f64>);

impl TextureCode {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Splits a projection into geometry features (same detector shape, angle
/// preserved) and a texture code. Feature images and codes must be finite and
/// codes must have the same length for every input.
pub trait Encoder: Send + Sync {
    fn encode(&self, projection: &Projection) -> Result<(Projection, TextureCode)>;
    fn key(&self) -> String;
}

/// Decodes one transformed geometry-feature image into a synthesized view in
/// [0, 1], conditioned on a texture code.
pub trait Generator: Send + Sync {
    fn generate(&self, features: &Projection, texture: &TextureCode) -> Result<Projection>;
    fn key(&self) -> String;
}

/// Geometry features are the single-channel input itself; the texture code
/// is its (mean, population standard deviation).
pub struct IdentityEncoder;

impl Encoder for IdentityEncoder {
    fn encode(&self, projection: &Projection) -> Result<(Projection, TextureCode)> {
        if projection.channels != 1 {
            return Err(Error::InvalidArgument(format!(
                "identity encoder expects single-channel projections, got {}",
                projection.channels
            )));
        }
        let (mean, std) = mean_std(&projection.data);
        Ok((projection.clone(), TextureCode(vec![mean, std])))
    }

    fn key(&self) -> String {
        "identity".to_string()
    }
}

/// Re-expresses a feature image in the texture code's statistics:
/// `clamp(((F - mean(F)) / std(F)) * code[1] + code[0], 0, 1)`. A feature
/// image with zero spread maps to the constant `code[0]` (clamped).
pub struct PassthroughGenerator;

impl Generator for PassthroughGenerator {
    fn generate(&self, features: &Projection, texture: &TextureCode) -> Result<Projection> {
        if features.channels != 1 {
            return Err(Error::Contract(format!(
                "passthrough generator expects single-channel features, got {}",
                features.channels
            )));
        }
        if texture.len() != 2 {
            return Err(Error::Contract(format!(
                "passthrough generator expects a (mean, std) texture code, got length {}",
                texture.len()
            )));
        }
        let (mean, std) = mean_std(&features.data);
        let data: Vec<f32> = if std > 0.0 {
            features
                .data
                .iter()
                .map(|&v| {
                    let z = (v as f64 - mean) / std;
                    (z * texture.0[1] + texture.0[0]).clamp(0.0, 1.0) as f32
                })
                .collect()
        } else {
            vec![texture.0[0].clamp(0.0, 1.0) as f32; features.data.len()]
        };
        Projection::new(features.rows, features.cols, 1, features.angle_deg, data)
    }

    fn key(&self) -> String {
        "passthrough".to_string()
    }
}

fn mean_std(data: &[f32]) -> (f64, f64) {
    let n = data.len() as f64;
    let mean = data.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = data.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// A configured synthesis chain. `grid` is the intermediate feature-volume
/// grid; `step` the ray integration step in mm.
pub struct Pipeline<'a> {
    pub encoder: &'a dyn Encoder,
    pub refiner: &'a dyn Refiner,
    pub generator: &'a dyn Generator,
    pub geometry: &'a ConeBeamGeometry,
    pub grid: GridSpec,
    pub step: f64,
}

pub struct SynthesisResult {
    /// Cycle path: views regenerated at the source angles, in input order.
    pub source_views: Vec<Projection>,
    /// Synthesized views at the target angles, in input order.
    pub target_views: Vec<Projection>,
    /// The fused texture code the generator was conditioned on.
    pub texture: TextureCode,
}

impl Pipeline<'_> {
    /// Encode every source and fuse the texture codes by averaging. Codes
    /// are accumulated in ascending-angle order so the fused code does not
    /// depend on the order sources are passed in.
    pub fn encode_sources(&self, sources: &[Projection]) -> Result<(Vec<Projection>, TextureCode)> {
        if sources.is_empty() {
            return Err(Error::InvalidArgument(
                "need at least one source projection".into(),
            ));
        }
        let mut features = Vec::with_capacity(sources.len());
        let mut codes = Vec::with_capacity(sources.len());
        for p in sources {
            let (f, code) = self.encoder.encode(p)?;
            if f.rows != p.rows || f.cols != p.cols {
                return Err(Error::Contract(format!(
                    "encoder changed detector shape: {}x{} -> {}x{}",
                    p.rows, p.cols, f.rows, f.cols
                )));
            }
            if f.angle_deg != p.angle_deg {
                return Err(Error::Contract(format!(
                    "encoder changed the view angle: {} -> {}",
                    p.angle_deg, f.angle_deg
                )));
            }
            if let Some(i) = code.0.iter().position(|v| !v.is_finite()) {
                return Err(Error::Contract(format!(
                    "encoder produced non-finite texture component at index {i}"
                )));
            }
            features.push(f);
            codes.push(code);
        }
        let len = codes[0].len();
        if codes.iter().any(|c| c.len() != len) {
            return Err(Error::Contract(
                "encoder produced texture codes of mixed length".into(),
            ));
        }

        let mut order: Vec<usize> = (0..sources.len()).collect();
        order.sort_by(|&a, &b| sources[a].angle_deg.total_cmp(&sources[b].angle_deg));
        let mut fused = vec![0.0f64; len];
        for &i in &order {
            for (f, c) in fused.iter_mut().zip(&codes[i].0) {
                *f += c;
            }
        }
        let inv = 1.0 / sources.len() as f64;
        for f in &mut fused {
            *f *= inv;
        }
        Ok((features, TextureCode(fused)))
    }

    /// Synthesize views at `target_angles` from the given source views.
    pub fn synthesize(
        &self,
        sources: &[Projection],
        target_angles: &[f64],
    ) -> Result<SynthesisResult> {
        if target_angles.is_empty() {
            return Err(Error::InvalidArgument(
                "need at least one target angle".into(),
            ));
        }
        let (features, texture) = self.encode_sources(sources)?;
        let plan = TransformPlan {
            sources: &features,
            target_angles,
            geometry: self.geometry,
            grid: self.grid,
            step: self.step,
            refiner: self.refiner,
        };
        let transformed = transform_projections(&plan)?;

        let decode = |views: &[Projection]| -> Result<Vec<Projection>> {
            views
                .iter()
                .map(|f| {
                    let out = self.generator.generate(f, &texture)?;
                    if out.rows != f.rows || out.cols != f.cols || out.channels != 1 {
                        return Err(Error::Contract(format!(
                            "generator produced shape {}x{}x{}, expected 1x{}x{}",
                            out.channels, out.rows, out.cols, f.rows, f.cols
                        )));
                    }
                    if let Some(i) = out.data.iter().position(|v| !(0.0..=1.0).contains(v)) {
                        return Err(Error::Contract(format!(
                            "generator produced {} at flat index {i}, outside [0, 1]",
                            out.data[i]
                        )));
                    }
                    Ok(out)
                })
                .collect()
        };
        let source_views = decode(&transformed.source_views)?;
        let target_views = decode(&transformed.target_views)?;
        Ok(SynthesisResult {
            source_views,
            target_views,
            texture,
        })
    }
}

/// Look up an encoder by registry key. Known keys: `identity`.
pub fn encoder_from_key(key: &str) -> Result<Box<dyn Encoder>> {
    match key {
        "identity" => Ok(Box::new(IdentityEncoder)),
        _ => Err(Error::InvalidArgument(format!(
            "unknown encoder key {key:?}"
        ))),
    }
}

/// Look up a refiner by registry key. Known keys: `identity`,
/// `smoothing:<sigma_mm>`.
pub fn refiner_from_key(key: &str) -> Result<Box<dyn Refiner>> {
    use crate::transform::{IdentityRefiner, SmoothingRefiner};
    if key == "identity" {
        return Ok(Box::new(IdentityRefiner));
    }
    if let Some(rest) = key.strip_prefix("smoothing:") {
        let sigma: f64 = rest
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("bad smoothing sigma {rest:?}")))?;
        return Ok(Box::new(SmoothingRefiner::new(sigma)?));
    }
    Err(Error::InvalidArgument(format!(
        "unknown refiner key {key:?}"
    )))
}

/// Look up a generator by registry key. Known keys: `passthrough`.
pub fn generator_from_key(key: &str) -> Result<Box<dyn Generator>> {
    match key {
        "passthrough" => Ok(Box::new(PassthroughGenerator)),
        _ => Err(Error::InvalidArgument(format!(
            "unknown generator key {key:?}"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::{Ellipsoid, PhantomSpec};
    use crate::projector::{forward_project, FeatureVolume};
    use crate::transform::IdentityRefiner;

    fn geom() -> ConeBeamGeometry {
        ConeBeamGeometry {
            sad: 500.0,
            sdd: 750.0,
            det_rows: 16,
            det_cols: 16,
            pixel_pitch: [4.0, 4.0],
            det_offset: [0.0, 0.0],
        }
    }

    fn unit_sources(angles: &[f64], grid: GridSpec) -> Vec<Projection> {
        let spec = PhantomSpec {
            grid,
            background: 0.0,
            ellipsoids: vec![
                Ellipsoid {
                    center: [5.0, 8.0, 2.0],
                    semi_axes: [8.0, 6.0, 7.0],
                    value: 0.012,
                    rot_z_deg: 0.0,
                },
                Ellipsoid {
                    center: [-6.0, -9.0, -3.0],
                    semi_axes: [6.0, 8.0, 5.0],
                    value: 0.008,
                    rot_z_deg: 0.0,
                },
            ],
        };
        let vol = FeatureVolume::from_volume(&spec.rasterize().unwrap());
        angles
            .iter()
            .map(|&a| {
                forward_project(&vol, &geom(), a, 1.0)
                    .unwrap()
                    .normalized_unit()
            })
            .collect()
    }

    #[test]
    fn identity_encoder_stats_match_hand_values() {
        let p = Projection::new(1, 3, 1, 15.0, vec![0.0, 0.5, 1.0]).unwrap();
        let (f, code) = IdentityEncoder.encode(&p).unwrap();
        assert_eq!(f.data, p.data);
        assert_eq!(f.angle_deg, 15.0);
        assert_eq!(code.len(), 2);
        assert_eq!(code.0[0], 0.5);
        // Population std of {0, 0.5, 1} is sqrt(1/6).
        assert!((code.0[1] - (1.0f64 / 6.0).sqrt()).abs() < 1e-15);

        let multi = Projection::zeros(2, 2, 3, 0.0).unwrap();
        assert!(IdentityEncoder.encode(&multi).is_err());
    }

    #[test]
    fn passthrough_generator_reconstructs_its_own_input() {
        let p = Projection::new(2, 3, 1, 30.0, vec![0.1, 0.9, 0.4, 0.6, 0.2, 0.8]).unwrap();
        let (f, code) = IdentityEncoder.encode(&p).unwrap();
        let out = PassthroughGenerator.generate(&f, &code).unwrap();
        assert_eq!(out.angle_deg, 30.0);
        for (a, b) in out.data.iter().zip(&p.data) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn passthrough_generator_degenerate_and_clamped_cases() {
        let flat = Projection::new(2, 2, 1, 0.0, vec![0.5; 4]).unwrap();
        let out = PassthroughGenerator
            .generate(&flat, &TextureCode(vec![0.3, 0.0]))
            .unwrap();
        assert_eq!(out.data, vec![0.3; 4]);

        // A wild texture code cannot push outputs outside [0, 1].
        let p = Projection::new(2, 2, 1, 0.0, vec![0.0, 0.25, 0.75, 1.0]).unwrap();
        let out = PassthroughGenerator
            .generate(&p, &TextureCode(vec![2.0, 5.0]))
            .unwrap();
        assert!(out.data.iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(out.data[0], 0.0);
        assert_eq!(out.data[3], 1.0);

        assert!(PassthroughGenerator
            .generate(&p, &TextureCode(vec![0.5]))
            .is_err());
    }

    #[test]
    fn texture_fusion_averages_and_ignores_source_order() {
        let grid = GridSpec::centered([16, 16, 16], [2.0; 3]).unwrap();
        let sources = unit_sources(&[0.0, 90.0], grid);
        let pipeline = Pipeline {
            encoder: &IdentityEncoder,
            refiner: &IdentityRefiner,
            generator: &PassthroughGenerator,
            geometry: &geom(),
            grid,
            step: 1.0,
        };
        let (_, t01) = pipeline.encode_sources(&sources).unwrap();
        let rev: Vec<Projection> = sources.iter().rev().cloned().collect();
        let (_, t10) = pipeline.encode_sources(&rev).unwrap();
        assert_eq!(t01, t10);

        let (_, c0) = IdentityEncoder.encode(&sources[0]).unwrap();
        let (_, c1) = IdentityEncoder.encode(&sources[1]).unwrap();
        for j in 0..2 {
            assert_eq!(t01.0[j], (c0.0[j] + c1.0[j]) / 2.0);
        }
    }

    #[test]
    fn synthesize_produces_unit_range_views_deterministically() {
        let grid = GridSpec::centered([16, 16, 16], [2.0; 3]).unwrap();
        let sources = unit_sources(&[0.0, 90.0], grid);
        let pipeline = Pipeline {
            encoder: &IdentityEncoder,
            refiner: &IdentityRefiner,
            generator: &PassthroughGenerator,
            geometry: &geom(),
            grid,
            step: 1.0,
        };
        let a = pipeline.synthesize(&sources, &[30.0, 60.0]).unwrap();
        assert_eq!(a.source_views.len(), 2);
        assert_eq!(a.target_views.len(), 2);
        assert_eq!(a.target_views[0].angle_deg, 30.0);
        assert_eq!(a.target_views[1].angle_deg, 60.0);
        for v in a.source_views.iter().chain(&a.target_views) {
            assert!(v.data.iter().all(|x| (0.0..=1.0).contains(x)));
        }

        let b = pipeline.synthesize(&sources, &[30.0, 60.0]).unwrap();
        assert_eq!(a.target_views[0].data, b.target_views[0].data);
        assert_eq!(a.target_views[1].data, b.target_views[1].data);
        assert_eq!(a.texture, b.texture);

        // Source order must not change the synthesized targets.
        let rev: Vec<Projection> = sources.iter().rev().cloned().collect();
        let c = pipeline.synthesize(&rev, &[30.0, 60.0]).unwrap();
        assert_eq!(a.target_views[0].data, c.target_views[0].data);
        assert_eq!(a.target_views[1].data, c.target_views[1].data);
    }

    #[test]
    fn synthesize_validates_inputs() {
        let grid = GridSpec::centered([8, 8, 8], [2.0; 3]).unwrap();
        let sources = unit_sources(&[0.0], grid);
        let pipeline = Pipeline {
            encoder: &IdentityEncoder,
            refiner: &IdentityRefiner,
            generator: &PassthroughGenerator,
            geometry: &geom(),
            grid,
            step: 1.0,
        };
        assert!(pipeline.synthesize(&sources, &[]).is_err());
        assert!(pipeline.synthesize(&[], &[30.0]).is_err());
    }

    #[test]
    fn second_source_view_improves_synthesized_targets() {
        let g = ConeBeamGeometry {
            sad: 1000.0,
            sdd: 1500.0,
            det_rows: 30,
            det_cols: 50,
            pixel_pitch: [6.0, 6.0],
            det_offset: [0.0, 0.0],
        };
        let grid = GridSpec::centered([43, 43, 43], [3.0; 3]).unwrap();
        let step = 1.5;
        let targets = [30.0, 60.0];
        let spec = PhantomSpec::random(5, 3, grid).unwrap();
        let vol = FeatureVolume::from_volume(&spec.rasterize().unwrap());
        let drr = |a: f64| {
            forward_project(&vol, &g, a, step)
                .unwrap()
                .normalized_unit()
        };

        let truth: Vec<Projection> = targets.iter().map(|&a| drr(a)).collect();
        let pipeline = Pipeline {
            encoder: &IdentityEncoder,
            refiner: &IdentityRefiner,
            generator: &PassthroughGenerator,
            geometry: &g,
            grid,
            step,
        };
        let mean_err = |sources: &[Projection]| {
            let out = pipeline.synthesize(sources, &targets).unwrap();
            out.target_views
                .iter()
                .zip(&truth)
                .map(|(p, t)| crate::metrics::mae(p, t).unwrap())
                .sum::<f64>()
                / targets.len() as f64
        };
        let one = mean_err(&[drr(0.0)]);
        let two = mean_err(&[drr(0.0), drr(90.0)]);
        assert!(two < one, "two views should beat one: {two} vs {one}");
    }

    #[test]
    fn registry_keys_resolve_and_reject() {
        assert_eq!(encoder_from_key("identity").unwrap().key(), "identity");
        assert_eq!(
            generator_from_key("passthrough").unwrap().key(),
            "passthrough"
        );
        assert_eq!(refiner_from_key("identity").unwrap().key(), "identity");
        assert_eq!(
            refiner_from_key("smoothing:2.5").unwrap().key(),
            "smoothing:2.5"
        );

        assert!(encoder_from_key("unet").is_err());
        assert!(generator_from_key("gan").is_err());
        assert!(refiner_from_key("smoothing:").is_err());
        assert!(refiner_from_key("smoothing:-2").is_err());
        assert!(refiner_from_key("blur").is_err());
    }
}
