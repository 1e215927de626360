use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::{LabelRegistry, LandmarkSet, Sample, Side};
use crate::error::{LmptError, Result};
use crate::geometry::{normalize_cloud, NormTransform, Point3, PointCloud};
use crate::scalar::Scalar;

/// Random rigid/scale/mirror perturbation settings. Axes are 0 = x, 1 = y,
/// 2 = z in the normalized frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    /// Superior–inferior axis; rotation about it covers the full turn.
    pub up_axis: usize,
    pub full_turn: bool,
    /// Uniform tilt range (degrees) about each of the two other axes.
    pub tilt_deg: f64,
    pub scale_min: f64,
    pub scale_max: f64,
    pub flip_prob: f64,
    /// Medio-lateral axis negated by a flip.
    pub flip_axis: usize,
    /// Rename mirror-paired landmarks and toggle the side tag on a flip.
    /// Without it a flipped sample keeps its anatomical labels.
    pub swap_labels: bool,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self { up_axis: 2, full_turn: true, tilt_deg: 15.0, scale_min: 0.8, scale_max: 1.2, flip_prob: 0.5, flip_axis: 0, swap_labels: true }
    }
}

impl AugmentConfig {
    /// No perturbation at all.
    pub fn none() -> Self {
        Self { full_turn: false, tilt_deg: 0.0, scale_min: 1.0, scale_max: 1.0, flip_prob: 0.0, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(LmptError::Config(m));
        if self.up_axis > 2 || self.flip_axis > 2 {
            return err("augment axes must be 0, 1 or 2".into());
        }
        if !(self.tilt_deg >= 0.0 && self.tilt_deg <= 180.0) {
            return err(format!("tilt_deg must lie in [0, 180], got {}", self.tilt_deg));
        }
        if !(self.scale_min > 0.0 && self.scale_min <= self.scale_max && self.scale_max.is_finite()) {
            return err(format!("invalid scale range [{}, {}]", self.scale_min, self.scale_max));
        }
        if !(0.0..=1.0).contains(&self.flip_prob) {
            return err(format!("flip_prob must lie in [0, 1], got {}", self.flip_prob));
        }
        Ok(())
    }
}

/// One concrete draw of augmentation parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentDraw {
    /// Rotation about the up axis (radians).
    pub turn: f64,
    /// Rotations about the two remaining axes, in ascending axis order.
    pub tilts: [f64; 2],
    pub scale: f64,
    pub flip: bool,
}

impl AugmentDraw {
    pub fn identity() -> Self {
        Self { turn: 0.0, tilts: [0.0; 2], scale: 1.0, flip: false }
    }

    pub fn flip_only() -> Self {
        Self { flip: true, ..Self::identity() }
    }

    /// Always consumes the same number of draws, whatever the config.
    pub fn sample(cfg: &AugmentConfig, rng: &mut impl Rng) -> Self {
        let turn = rng.gen_range(0.0..std::f64::consts::TAU);
        let tilt = cfg.tilt_deg.to_radians();
        let t0 = rng.gen_range(-1.0..=1.0) * tilt;
        let t1 = rng.gen_range(-1.0..=1.0) * tilt;
        let u: f64 = rng.gen();
        let scale = cfg.scale_min + u * (cfg.scale_max - cfg.scale_min);
        let flip = rng.gen::<f64>() < cfg.flip_prob;
        Self { turn: if cfg.full_turn { turn } else { 0.0 }, tilts: [t0, t1], scale, flip }
    }
}

/// A normalized sample ready for training.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample<S> {
    pub id: String,
    pub cloud: PointCloud<S>,
    pub landmarks: LandmarkSet<S>,
    pub species: String,
    pub side: Side,
}

impl<S: Scalar> TrainSample<S> {
    /// Normalizes the cloud and moves its landmarks into the same frame.
    pub fn from_sample(sample: &Sample<S>) -> Result<(Self, NormTransform<S>)> {
        let (cloud, t) = normalize_cloud(&sample.cloud)?;
        let landmarks = sample.landmarks.map_positions(|p| t.apply(p));
        let s = Self { id: sample.id.clone(), cloud, landmarks, species: sample.species.clone(), side: sample.side };
        Ok((s, t))
    }
}

fn axis_rotation(axis: usize, angle: f64) -> [[f64; 3]; 3] {
    let (s, c) = angle.sin_cos();
    let (a, b) = ((axis + 1) % 3, (axis + 2) % 3);
    let mut m = [[0.0; 3]; 3];
    m[axis][axis] = 1.0;
    m[a][a] = c;
    m[a][b] = -s;
    m[b][a] = s;
    m[b][b] = c;
    m
}

fn matmul3(x: &[[f64; 3]; 3], y: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut m = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] = (0..3).map(|k| x[i][k] * y[k][j]).sum();
        }
    }
    m
}

/// Linear map `scale · R_up(turn) · R_a(tilt0) · R_b(tilt1)` followed by the
/// optional axis negation.
pub fn augment_matrix(cfg: &AugmentConfig, draw: &AugmentDraw) -> [[f64; 3]; 3] {
    let others: Vec<usize> = (0..3).filter(|&a| a != cfg.up_axis).collect();
    let r = matmul3(
        &axis_rotation(cfg.up_axis, draw.turn),
        &matmul3(&axis_rotation(others[0], draw.tilts[0]), &axis_rotation(others[1], draw.tilts[1])),
    );
    let mut m = r.map(|row| row.map(|v| v * draw.scale));
    if draw.flip {
        for v in m[cfg.flip_axis].iter_mut() {
            *v = -*v;
        }
    }
    m
}

/// Applies one concrete draw. With `swap_labels`, a flip also relabels
/// mirror-paired landmarks and toggles the side tag.
pub fn apply_augment<S: Scalar>(
    sample: &TrainSample<S>,
    cfg: &AugmentConfig,
    draw: &AugmentDraw,
    registry: &LabelRegistry,
) -> Result<TrainSample<S>> {
    let swap = draw.flip && cfg.swap_labels;
    if swap && !registry.has_mirror_metadata() {
        return Err(LmptError::Schema("flip augmentation needs mirror pairs in the registry".into()));
    }
    let m = augment_matrix(cfg, draw).map(|row| row.map(S::lit));
    let map = |p: &Point3<S>| -> Point3<S> {
        [0, 1, 2].map(|i| m[i][0] * p[0] + m[i][1] * p[1] + m[i][2] * p[2])
    };
    let mut landmarks = sample.landmarks.map_positions(map);
    let mut side = sample.side;
    if swap {
        landmarks = landmarks.rename(|n| registry.mirror_of(n).to_string());
        side = side.toggled();
    }
    Ok(TrainSample {
        id: sample.id.clone(),
        cloud: sample.cloud.map(map),
        landmarks,
        species: sample.species.clone(),
        side,
    })
}

/// Draws parameters from `seed` and applies them.
pub fn augment<S: Scalar>(
    sample: &TrainSample<S>,
    cfg: &AugmentConfig,
    registry: &LabelRegistry,
    seed: u64,
) -> Result<TrainSample<S>> {
    use rand::SeedableRng;
    if cfg.flip_prob > 0.0 && cfg.swap_labels && !registry.has_mirror_metadata() {
        return Err(LmptError::Schema("flip augmentation needs mirror pairs in the registry".into()));
    }
    let draw = AugmentDraw::sample(cfg, &mut ChaCha8Rng::seed_from_u64(seed));
    apply_augment(sample, cfg, &draw, registry)
}
