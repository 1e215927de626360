//! Procedural femur-like shapes with analytic landmarks.
//!
//! A shape is the union of a capsule shaft along +z, a sphere head offset
//! medially above the shaft, and two ellipsoid condyles at the distal end.
//! Shapes are built as left femurs (medial = +x, posterior = -y); right
//! femurs are their mirror image across the x = 0 plane.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::landmarks::LandmarkSet;
use super::manifest::{Sample, Side, Split};
use crate::error::{LmptError, Result};
use crate::geometry::{subsample_indices, Point3, PointCloud, Strategy};
use crate::scalar::Scalar;

/// Inclusive sampling range in mm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Span {
    pub min: f64,
    pub max: f64,
}

impl Span {
    pub const fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    fn draw(&self, rng: &mut impl Rng) -> f64 {
        if self.max > self.min {
            rng.gen_range(self.min..=self.max)
        } else {
            self.min
        }
    }

    fn valid(&self) -> bool {
        self.min > 0.0 && self.min <= self.max && self.max.is_finite()
    }
}

/// Proportions and landmark schema of one synthetic species.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeciesPreset {
    pub name: String,
    pub shaft_length: Span,
    pub shaft_radius: Span,
    pub head_radius: Span,
    /// Medial gap between the shaft surface and the head center.
    pub neck_offset: Span,
    /// Height of the head center above the shaft top.
    pub neck_rise: Span,
    /// Condyle semi-axes (x, y, z).
    pub condyle_axes: [Span; 3],
    /// Medial condyle size relative to the lateral one.
    pub medial_condyle_scale: Span,
    pub landmarks: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub species: Vec<SpeciesPreset>,
    pub points_per_shape: usize,
    pub seed: u64,
}

/// Every landmark the generator knows how to place.
pub const SYNTH_LANDMARKS: &[&str] = &["MFH", "IFH", "SGT", "LT", "MEC", "LEC", "PMC", "PLC", "DMC", "DLC", "ICN"];

/// Mirror pairs among [`SYNTH_LANDMARKS`].
pub fn synth_mirror_pairs() -> Vec<(String, String)> {
    [("LEC", "MEC"), ("PLC", "PMC"), ("DLC", "DMC")]
        .iter()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect()
}

fn names(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

impl SpeciesPreset {
    /// Long slender shaft, large head.
    pub fn human() -> Self {
        Self {
            name: "human".into(),
            shaft_length: Span::new(380.0, 450.0),
            shaft_radius: Span::new(12.0, 15.0),
            head_radius: Span::new(21.0, 25.0),
            neck_offset: Span::new(22.0, 30.0),
            neck_rise: Span::new(5.0, 14.0),
            condyle_axes: [Span::new(15.0, 18.0), Span::new(24.0, 29.0), Span::new(20.0, 25.0)],
            medial_condyle_scale: Span::new(1.05, 1.15),
            landmarks: names(&["MFH", "SGT", "LT", "MEC", "LEC", "PMC", "PLC", "DMC", "DLC", "ICN"]),
        }
    }

    /// Shorter stockier shaft and relatively bulky condyles. Omits MFH and LT
    /// of the human schema and adds IFH.
    pub fn dog() -> Self {
        Self {
            name: "dog".into(),
            shaft_length: Span::new(150.0, 190.0),
            shaft_radius: Span::new(8.0, 10.0),
            head_radius: Span::new(9.0, 11.0),
            neck_offset: Span::new(6.0, 9.0),
            neck_rise: Span::new(1.0, 4.0),
            condyle_axes: [Span::new(10.0, 12.0), Span::new(14.0, 17.0), Span::new(11.0, 13.0)],
            medial_condyle_scale: Span::new(0.92, 0.98),
            landmarks: names(&["IFH", "SGT", "MEC", "LEC", "PMC", "PLC", "DMC", "DLC", "ICN"]),
        }
    }

    fn validate(&self) -> Result<()> {
        let spans = [
            ("shaft_length", self.shaft_length),
            ("shaft_radius", self.shaft_radius),
            ("head_radius", self.head_radius),
            ("neck_offset", self.neck_offset),
            ("neck_rise", self.neck_rise),
            ("condyle_axes.x", self.condyle_axes[0]),
            ("condyle_axes.y", self.condyle_axes[1]),
            ("condyle_axes.z", self.condyle_axes[2]),
            ("medial_condyle_scale", self.medial_condyle_scale),
        ];
        for (what, s) in spans {
            if !s.valid() {
                return Err(LmptError::Config(format!("species {}: invalid range {what} {s:?}", self.name)));
            }
        }
        if self.landmarks.is_empty() {
            return Err(LmptError::Config(format!("species {}: empty landmark schema", self.name)));
        }
        if let Some(bad) = self.landmarks.iter().find(|l| !SYNTH_LANDMARKS.contains(&l.as_str())) {
            return Err(LmptError::Config(format!("species {}: generator cannot place {bad}", self.name)));
        }
        Ok(())
    }
}

impl SynthParams {
    pub fn new(species: Vec<SpeciesPreset>, points_per_shape: usize, seed: u64) -> Self {
        Self { species, points_per_shape, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.species.is_empty() {
            return Err(LmptError::Config("synthetic params need at least one species".into()));
        }
        if self.points_per_shape < 16 {
            return Err(LmptError::Config("points_per_shape must be at least 16".into()));
        }
        self.species.iter().try_for_each(SpeciesPreset::validate)
    }
}

/// Concrete dimensions of one generated shape (mm).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeDims {
    pub shaft_length: f64,
    pub shaft_radius: f64,
    pub head_radius: f64,
    pub neck_offset: f64,
    pub neck_rise: f64,
    pub condyle_axes: [f64; 3],
    pub medial_condyle_scale: f64,
}

impl ShapeDims {
    pub fn draw(preset: &SpeciesPreset, rng: &mut impl Rng) -> Self {
        let mut d = Self {
            shaft_length: preset.shaft_length.draw(rng),
            shaft_radius: preset.shaft_radius.draw(rng),
            head_radius: preset.head_radius.draw(rng),
            neck_offset: preset.neck_offset.draw(rng),
            neck_rise: preset.neck_rise.draw(rng),
            condyle_axes: preset.condyle_axes.map(|s| s.draw(rng)),
            medial_condyle_scale: preset.medial_condyle_scale.draw(rng),
        };
        // keep the analytic landmarks exposed on the union surface
        d.condyle_axes[0] = d.condyle_axes[0].max(d.shaft_radius);
        d
    }

    fn head_center(&self) -> [f64; 3] {
        [self.shaft_radius + self.neck_offset, 0.0, self.shaft_length + self.neck_rise]
    }

    /// (center, semi-axes) of the medial and lateral condyles.
    fn condyles(&self) -> [([f64; 3], [f64; 3]); 2] {
        let lat = self.condyle_axes;
        let med = lat.map(|a| a * self.medial_condyle_scale);
        let y = -0.3 * lat[1];
        let gap = 0.2 * self.shaft_radius;
        [
            ([med[0] + gap, y, -0.1 * med[2]], med),
            ([-(lat[0] + gap), y, 0.0], lat),
        ]
    }

    fn primitives(&self) -> Vec<Primitive> {
        let [(mc, ma), (lc, la)] = self.condyles();
        vec![
            Primitive::Capsule { length: self.shaft_length, radius: self.shaft_radius },
            Primitive::Sphere { center: self.head_center(), radius: self.head_radius },
            Primitive::Ellipsoid { center: mc, axes: ma },
            Primitive::Ellipsoid { center: lc, axes: la },
        ]
    }

    /// Analytic landmark position for a left femur.
    pub fn landmark(&self, name: &str) -> Option<[f64; 3]> {
        let h = self.head_center();
        let rh = self.head_radius;
        let r = self.shaft_radius;
        let [(mc, ma), (lc, la)] = self.condyles();
        Some(match name {
            "MFH" => [h[0] + rh, h[1], h[2]],
            "IFH" => [h[0], h[1], h[2] - rh],
            "SGT" => [-r, 0.0, self.shaft_length],
            "LT" => {
                let t = std::f64::consts::FRAC_PI_4;
                [r * t.cos(), -r * t.sin(), 0.8 * self.shaft_length]
            }
            "MEC" => [mc[0] + ma[0], mc[1], mc[2]],
            "LEC" => [lc[0] - la[0], lc[1], lc[2]],
            "PMC" => [mc[0], mc[1] - ma[1], mc[2]],
            "PLC" => [lc[0], lc[1] - la[1], lc[2]],
            "DMC" => [mc[0], mc[1], mc[2] - ma[2]],
            "DLC" => [lc[0], lc[1], lc[2] - la[2]],
            "ICN" => [0.0, 0.0, -r],
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy)]
enum Primitive {
    Capsule { length: f64, radius: f64 },
    Sphere { center: [f64; 3], radius: f64 },
    Ellipsoid { center: [f64; 3], axes: [f64; 3] },
}

fn unit_sphere(rng: &mut impl Rng) -> [f64; 3] {
    let z: f64 = rng.gen_range(-1.0..=1.0);
    let phi: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let s = (1.0 - z * z).max(0.0).sqrt();
    [s * phi.cos(), s * phi.sin(), z]
}

impl Primitive {
    fn area(&self) -> f64 {
        use std::f64::consts::PI;
        match *self {
            Primitive::Capsule { length, radius } => 2.0 * PI * radius * length + 4.0 * PI * radius * radius,
            Primitive::Sphere { radius, .. } => 4.0 * PI * radius * radius,
            Primitive::Ellipsoid { axes: [a, b, c], .. } => {
                let p = 1.6075;
                let m = ((a * b).powf(p) + (a * c).powf(p) + (b * c).powf(p)) / 3.0;
                4.0 * PI * m.powf(1.0 / p)
            }
        }
    }

    fn sample(&self, rng: &mut impl Rng) -> [f64; 3] {
        match *self {
            Primitive::Capsule { length, radius } => {
                let side = 2.0 * length;
                let caps = 4.0 * radius;
                if rng.gen::<f64>() * (side + caps) < side {
                    let t: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                    [radius * t.cos(), radius * t.sin(), rng.gen_range(0.0..=length)]
                } else {
                    let u = unit_sphere(rng);
                    let z = if u[2] >= 0.0 { length + radius * u[2] } else { radius * u[2] };
                    [radius * u[0], radius * u[1], z]
                }
            }
            Primitive::Sphere { center, radius } => {
                let u = unit_sphere(rng);
                [center[0] + radius * u[0], center[1] + radius * u[1], center[2] + radius * u[2]]
            }
            Primitive::Ellipsoid { center, axes: [a, b, c] } => {
                let bound = (b * c).max(a * c).max(a * b);
                loop {
                    let u = unit_sphere(rng);
                    let w = ((b * c * u[0]).powi(2) + (a * c * u[1]).powi(2) + (a * b * u[2]).powi(2)).sqrt();
                    if rng.gen::<f64>() * bound <= w {
                        return [center[0] + a * u[0], center[1] + b * u[1], center[2] + c * u[2]];
                    }
                }
            }
        }
    }

    fn contains(&self, p: &[f64; 3]) -> bool {
        const MARGIN: f64 = 1e-9;
        match *self {
            Primitive::Capsule { length, radius } => {
                let z = p[2].clamp(0.0, length);
                p[0] * p[0] + p[1] * p[1] + (p[2] - z).powi(2) < radius * radius * (1.0 - MARGIN)
            }
            Primitive::Sphere { center, radius } => {
                let d = (0..3).map(|k| (p[k] - center[k]).powi(2)).sum::<f64>();
                d < radius * radius * (1.0 - MARGIN)
            }
            Primitive::Ellipsoid { center, axes } => {
                (0..3).map(|k| ((p[k] - center[k]) / axes[k]).powi(2)).sum::<f64>() < 1.0 - MARGIN
            }
        }
    }
}

const POOL_FACTOR: usize = 3;

/// Samples the union surface of a left femur with `n` evenly spread points,
/// plus its analytic landmarks.
///
/// A uniform pool of `3n` surface points (with the landmark positions
/// appended) is thinned to `n` points by farthest-point selection, so every
/// landmark ends up within the selection's covering radius.
pub fn left_femur(dims: &ShapeDims, landmarks: &[String], n: usize, rng: &mut impl Rng) -> Result<(Vec<[f64; 3]>, LandmarkSet<f64>)> {
    let prims = dims.primitives();
    let areas: Vec<f64> = prims.iter().map(Primitive::area).collect();
    let total: f64 = areas.iter().sum();
    let mut pool: Vec<[f64; 3]> = Vec::with_capacity(POOL_FACTOR * n + landmarks.len());
    while pool.len() < POOL_FACTOR * n {
        let mut t = rng.gen::<f64>() * total;
        let mut which = prims.len() - 1;
        for (i, a) in areas.iter().enumerate() {
            if t < *a {
                which = i;
                break;
            }
            t -= a;
        }
        let p = prims[which].sample(rng);
        if prims.iter().enumerate().all(|(j, q)| j == which || !q.contains(&p)) {
            pool.push(p);
        }
    }
    let mut set = LandmarkSet::new();
    for name in landmarks {
        let p = dims
            .landmark(name)
            .ok_or_else(|| LmptError::Config(format!("generator cannot place landmark {name}")))?;
        set.insert(name.clone(), p)?;
        pool.push(p);
    }
    let pool_cloud = PointCloud::new(pool)?;
    let keep = subsample_indices(&pool_cloud, n, 0, Strategy::FarthestPoint)?;
    Ok((keep.iter().map(|&i| pool_cloud.points()[i]).collect(), set))
}

/// Reflection across the x = 0 plane.
pub fn mirror_x<S: Scalar>(p: &Point3<S>) -> Point3<S> {
    [-p[0], p[1], p[2]]
}

/// Generates `count` shapes, cycling through the species presets; sides are
/// drawn per shape. Deterministic per seed.
pub fn synth_generate<S: Scalar>(params: &SynthParams, count: usize, seed: u64) -> Result<Vec<Sample<S>>> {
    if count < 1 {
        return Err(LmptError::Range("synthetic count must be at least 1".into()));
    }
    params.validate()?;
    (0..count)
        .map(|i| {
            let preset = &params.species[i % params.species.len()];
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ params.seed.rotate_left(17) ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let dims = ShapeDims::draw(preset, &mut rng);
            let side = if rng.gen_bool(0.5) { Side::Left } else { Side::Right };
            let (points, landmarks) = left_femur(&dims, &preset.landmarks, params.points_per_shape, &mut rng)?;
            let (points, landmarks) = match side {
                Side::Left => (points, landmarks),
                Side::Right => (points.iter().map(mirror_x).collect(), landmarks.map_positions(mirror_x)),
            };
            Ok(Sample {
                id: format!("{}_{i:04}", preset.name),
                cloud: PointCloud::new(points.iter().map(|p| p.map(S::lit)).collect())?,
                species: preset.name.clone(),
                side,
                split: Split::Train,
                landmarks: landmarks.cast(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{dist, knn};

    fn params(n: usize) -> SynthParams {
        SynthParams::new(vec![SpeciesPreset::human(), SpeciesPreset::dog()], n, 3)
    }

    #[test]
    fn generation_is_deterministic() {
        let a = synth_generate::<f64>(&params(256), 1, 42).unwrap();
        let b = synth_generate::<f64>(&params(256), 1, 42).unwrap();
        assert_eq!(a, b);
        let c = synth_generate::<f64>(&params(256), 1, 43).unwrap();
        assert_ne!(a[0].cloud, c[0].cloud);
    }

    #[test]
    fn zero_count_is_range_error() {
        assert!(matches!(synth_generate::<f64>(&params(64), 0, 1), Err(LmptError::Range(_))));
    }

    #[test]
    fn landmarks_lie_within_point_spacing() {
        for s in synth_generate::<f64>(&params(300), 6, 9).unwrap() {
            let spacing = s.cloud.mean_spacing();
            for (name, p) in s.landmarks.iter() {
                let nearest = s.cloud.points().iter().map(|q| dist(p, q)).fold(f64::INFINITY, f64::min);
                assert!(nearest <= spacing, "{} {name}: {nearest} > {spacing}", s.id);
            }
        }
    }

    #[test]
    fn species_schemas_follow_presets() {
        let samples = synth_generate::<f64>(&params(64), 4, 1).unwrap();
        assert_eq!(samples[0].species, "human");
        assert_eq!(samples[1].species, "dog");
        assert_eq!(samples[0].landmarks.len(), 10);
        assert!(samples[1].landmarks.contains("IFH") && !samples[1].landmarks.contains("LT"));
    }

    #[test]
    fn mirrored_shape_swaps_medial_and_lateral_sides() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let dims = ShapeDims::draw(&SpeciesPreset::human(), &mut rng);
        let lm = SpeciesPreset::human().landmarks;
        let (left, left_lm) = left_femur(&dims, &lm, 128, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let (left2, _) = left_femur(&dims, &lm, 128, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(left, left2);
        let right_lm = left_lm.map_positions(mirror_x);
        // medial is +x on the left femur and -x on the right one
        assert!(left_lm.get("MEC").unwrap()[0] > 0.0 && left_lm.get("LEC").unwrap()[0] < 0.0);
        assert!(right_lm.get("MEC").unwrap()[0] < 0.0 && right_lm.get("LEC").unwrap()[0] > 0.0);
        for (a, b) in [("MEC", "LEC"), ("PMC", "PLC"), ("DMC", "DLC")] {
            let la = left_lm.get(a).unwrap();
            let rb = right_lm.get(b).unwrap();
            assert_eq!(la[0].signum(), rb[0].signum(), "{a} vs {b}");
        }
    }

    #[test]
    fn landmarks_are_on_the_union_surface() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for preset in [SpeciesPreset::human(), SpeciesPreset::dog()] {
            for _ in 0..20 {
                let dims = ShapeDims::draw(&preset, &mut rng);
                let prims = dims.primitives();
                for name in SYNTH_LANDMARKS {
                    let p = dims.landmark(name).unwrap();
                    assert!(prims.iter().all(|q| !q.contains(&p)), "{} {name} buried", preset.name);
                }
            }
        }
    }

    #[test]
    fn clouds_have_requested_size_and_knn_works() {
        let s = &synth_generate::<f64>(&params(200), 1, 0).unwrap()[0];
        assert_eq!(s.cloud.len(), 200);
        assert!(knn(&s.cloud, &s.cloud, 8).is_ok());
    }
}
