use std::sync::Arc;

use super::config::{AttentionMode, ModelConfig};
use super::layout::{build_layout, BlockLayout, Layout};
use super::params::ParamSet;
use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{LmptError, Result};
use crate::geometry::{grid_pool_map, knn, serialize_order, sub3, NeighborTable, PointCloud, PoolMap};
use crate::scalar::Scalar;

/// Flattened neighborhoods of one point level: pair `r` links query point
/// `rows[r]` to neighbor `cols[r]`, with relative offset `p_i - p_j` in row
/// `r` of `offsets`.
#[derive(Debug, Clone)]
pub struct Windows<S> {
    points: usize,
    k: usize,
    rows: Arc<[usize]>,
    cols: Arc<[usize]>,
    offsets: Tensor<S>,
}

impl<S: Scalar> Windows<S> {
    pub fn from_table(coords: &[[S; 3]], table: &NeighborTable<S>) -> Result<Self> {
        if table.rows() != coords.len() {
            return Err(LmptError::Shape(format!(
                "neighbor table has {} rows for {} points",
                table.rows(),
                coords.len()
            )));
        }
        let k = table.k();
        let cols: Vec<usize> = table.indices().to_vec();
        if let Some(&bad) = cols.iter().find(|&&j| j >= coords.len()) {
            return Err(LmptError::Index(format!("neighbor {bad} out of range for {} points", coords.len())));
        }
        let rows: Vec<usize> = (0..coords.len()).flat_map(|i| std::iter::repeat_n(i, k)).collect();
        let mut offsets = Vec::with_capacity(rows.len() * 3);
        for (&i, &j) in rows.iter().zip(&cols) {
            offsets.extend_from_slice(&sub3(&coords[i], &coords[j]));
        }
        Ok(Self {
            points: coords.len(),
            k,
            offsets: Tensor::matrix(rows.len(), 3, offsets)?,
            rows: rows.into(),
            cols: cols.into(),
        })
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn k(&self) -> usize {
        self.k
    }
}

/// Neighborhoods of `k` points for every point of `cloud`.
///
/// Serialized mode takes the window of `k` consecutive points in Z-order
/// centred on each point (shifted inward at the ends of the curve).
pub fn neighborhoods<S: Scalar>(
    cloud: &PointCloud<S>,
    k: usize,
    mode: AttentionMode,
    bits: u32,
) -> Result<NeighborTable<S>> {
    let m = cloud.len();
    if k > m {
        return Err(LmptError::InsufficientPoints { requested: k, available: m });
    }
    match mode {
        AttentionMode::Knn => knn(cloud, cloud, k),
        AttentionMode::Serialized => {
            let order = serialize_order(cloud, bits)?;
            let mut rank = vec![0; m];
            for (r, &i) in order.iter().enumerate() {
                rank[i] = r;
            }
            let rows: Vec<Vec<usize>> = (0..m)
                .map(|i| {
                    let start = rank[i].saturating_sub((k - 1) / 2).min(m - k);
                    order[start..start + k].to_vec()
                })
                .collect();
            NeighborTable::from_rows(cloud.points(), cloud.points(), &rows)
        }
    }
}

/// Point levels, pool maps and neighborhoods for one input cloud. Level 0
/// is the input; encoder stage `s` pools level `s` into level `s + 1`.
#[derive(Debug, Clone)]
pub struct Hierarchy<S> {
    levels: Vec<PointCloud<S>>,
    pools: Vec<PoolMap<S>>,
    encoder: Vec<Windows<S>>,
    decoder: Vec<Windows<S>>,
}

impl<S: Scalar> Hierarchy<S> {
    pub fn build(cloud: &PointCloud<S>, config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let windows = |level: &PointCloud<S>, stage: usize| -> Result<Windows<S>> {
            let k = config.neighbors[stage];
            let table = neighborhoods(level, k, config.attention_mode, config.serialize_bits).map_err(|e| match e {
                LmptError::InsufficientPoints { available, .. } => LmptError::KTooLarge { stage, k, points: available },
                e => e,
            })?;
            Windows::from_table(level.points(), &table)
        };
        let mut levels = vec![cloud.clone()];
        let mut pools = Vec::new();
        let mut encoder = Vec::new();
        let mut decoder = Vec::new();
        for s in 0..config.stages() {
            decoder.push(windows(&levels[s], s)?);
            let pool = grid_pool_map(&levels[s], S::lit(config.pool_cells[s]))?;
            let next = pool.centroid_cloud();
            encoder.push(windows(&next, s)?);
            levels.push(next);
            pools.push(pool);
        }
        Ok(Self { levels, pools, encoder, decoder })
    }

    /// Level 0 is the input cloud.
    pub fn level(&self, i: usize) -> &PointCloud<S> {
        &self.levels[i]
    }

    pub fn level_sizes(&self) -> Vec<usize> {
        self.levels.iter().map(PointCloud::len).collect()
    }

    pub fn pool(&self, stage: usize) -> &PoolMap<S> {
        &self.pools[stage]
    }

    pub fn encoder_windows(&self, stage: usize) -> &Windows<S> {
        &self.encoder[stage]
    }

    pub fn decoder_windows(&self, stage: usize) -> &Windows<S> {
        &self.decoder[stage]
    }
}

/// Features of one encoder level, kept for the matching decoder skip.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageState {
    pub level: usize,
    pub points: usize,
    pub width: usize,
    pub features: Var,
}

/// Grouped vector attention over `windows`, then residual + layer norm and a
/// two-layer feed-forward with residual + layer norm.
pub fn attention_block<S: Scalar>(
    tape: &mut Tape<S>,
    p: &[Var],
    block: &BlockLayout,
    features: Var,
    windows: &Windows<S>,
) -> Result<Var> {
    let (m, c) = tape.value(features).dims2()?;
    if c != block.width || m != windows.points {
        return Err(LmptError::Shape(format!(
            "block of width {} over {} points got features {m}x{c}",
            block.width, windows.points
        )));
    }
    let q = block.query.apply(tape, p, features)?;
    let k = block.key.apply(tape, p, features)?;
    let v = block.value.apply(tape, p, features)?;
    let q = tape.gather_rows(q, windows.rows.clone())?;
    let k = tape.gather_rows(k, windows.cols.clone())?;
    let v = tape.gather_rows(v, windows.cols.clone())?;

    let offsets = tape.constant(windows.offsets.clone());
    let delta = block.pos_in.apply(tape, p, offsets)?;
    let delta = tape.relu(delta);
    let delta = block.pos_out.apply(tape, p, delta)?;

    let rel = tape.sub(q, k)?;
    let rel = tape.add(rel, delta)?;
    let logits = block.weight_in.apply(tape, p, rel)?;
    let logits = tape.relu(logits);
    let logits = block.weight_out.apply(tape, p, logits)?;
    let weights = tape.grouped_softmax(logits, windows.rows.clone(), m)?;

    let values = tape.add(v, delta)?;
    let weighted = tape.mul(weights, values)?;
    let attended = tape.segment_sum(weighted, windows.rows.clone(), m)?;

    let h = tape.add(features, attended)?;
    let h = block.norm1.apply(tape, p, h)?;
    let f = block.ffn_in.apply(tape, p, h)?;
    let f = tape.gelu(f);
    let f = block.ffn_out.apply(tape, p, f)?;
    let y = tape.add(h, f)?;
    block.norm2.apply(tape, p, y)
}

/// A configured network with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LmptModel<S> {
    config: ModelConfig,
    layout: Layout,
    params: ParamSet<S>,
}

/// Validates `config` and initializes a model deterministically from `seed`.
pub fn build_model<S: Scalar>(config: &ModelConfig, seed: u64) -> Result<LmptModel<S>> {
    LmptModel::new(config.clone(), seed)
}

impl<S: Scalar> LmptModel<S> {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let (layout, params) = build_layout(&config, seed);
        Ok(Self { config, layout, params })
    }

    /// Rebuilds a model around stored parameters, checking they fit `config`.
    pub fn from_params(config: ModelConfig, params: ParamSet<S>) -> Result<Self> {
        let mut model = Self::new(config, 0)?;
        model.params.assign_from(&params)?;
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn params(&self) -> &ParamSet<S> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<S> {
        &mut self.params
    }

    pub fn hierarchy(&self, cloud: &PointCloud<S>) -> Result<Hierarchy<S>> {
        Hierarchy::build(cloud, &self.config)
    }

    /// Embeds coordinates and runs every encoder stage. The returned states
    /// start with the embedding (level 0); the last one is the bottleneck.
    pub fn encode(&self, tape: &mut Tape<S>, p: &[Var], hier: &Hierarchy<S>) -> Result<Vec<StageState>> {
        self.check_bound(p)?;
        let input = hier.level(0);
        let coords = tape.constant(Tensor::from_rows(input.points()));
        let x = self.layout.embed_in.apply(tape, p, coords)?;
        let x = tape.gelu(x);
        let x = self.layout.embed_out.apply(tape, p, x)?;
        let x = self.layout.embed_norm.apply(tape, p, x)?;
        let mut states =
            vec![StageState { level: 0, points: input.len(), width: self.config.channels[0], features: x }];
        for (s, stage) in self.layout.encoder.iter().enumerate() {
            let pool = hier.pool(s);
            let prev = states.last().expect("embedding state").features;
            let x = stage.proj.apply(tape, p, prev)?;
            let x = tape.segment_mean(x, pool.assignment.clone().into(), pool.clusters())?;
            let mut x = stage.norm.apply(tape, p, x)?;
            for block in &stage.blocks {
                x = attention_block(tape, p, block, x, hier.encoder_windows(s))?;
            }
            states.push(StageState {
                level: s + 1,
                points: pool.clusters(),
                width: self.config.channels[s],
                features: x,
            });
        }
        Ok(states)
    }

    /// Per-channel affine modulation of bottleneck features by the FiLM
    /// parameters of `condition`. Identity when FiLM is disabled.
    pub fn film_modulate(&self, tape: &mut Tape<S>, p: &[Var], features: Var, condition: usize) -> Result<Var> {
        if condition >= self.config.num_conditions {
            return Err(LmptError::Condition { id: condition, count: self.config.num_conditions });
        }
        let Some(film) = self.layout.film else {
            return Ok(features);
        };
        let (m, c) = tape.value(features).dims2()?;
        if c != film.width {
            return Err(LmptError::Shape(format!("FiLM width {} got features of width {c}", film.width)));
        }
        let mut one_hot = vec![S::zero(); self.config.num_conditions];
        one_hot[condition] = S::one();
        let one_hot = tape.constant(Tensor::matrix(1, one_hot.len(), one_hot)?);
        let affine = tape.matmul(one_hot, p[film.weight])?;
        let affine = tape.add_bias(affine, p[film.bias])?;
        let broadcast: Arc<[usize]> = vec![0; m].into();
        let gamma = tape.slice_cols(affine, 0, c)?;
        let beta = tape.slice_cols(affine, c, c)?;
        let gamma = tape.gather_rows(gamma, broadcast.clone())?;
        let beta = tape.gather_rows(beta, broadcast)?;
        let scaled = tape.mul(features, gamma)?;
        tape.add(scaled, beta)
    }

    /// Unpools from `bottleneck` back to the input resolution, adding projected
    /// skip features from `states` at each level. Returns `N x channels[0]`.
    pub fn decode(
        &self,
        tape: &mut Tape<S>,
        p: &[Var],
        hier: &Hierarchy<S>,
        states: &[StageState],
        bottleneck: Var,
    ) -> Result<Var> {
        if states.len() != self.config.stages() + 1 {
            return Err(LmptError::Shape(format!(
                "decoder expects {} encoder states, got {}",
                self.config.stages() + 1,
                states.len()
            )));
        }
        let mut x = bottleneck;
        for s in (0..self.config.stages()).rev() {
            let stage = &self.layout.decoder[s];
            let pool = hier.pool(s);
            let up = tape.gather_rows(x, pool.assignment.clone().into())?;
            let up = stage.up.apply(tape, p, up)?;
            let skip = stage.skip.apply(tape, p, states[s].features)?;
            x = tape.add(up, skip)?;
            for block in &stage.blocks {
                x = attention_block(tape, p, block, x, hier.decoder_windows(s))?;
            }
        }
        Ok(x)
    }

    /// Linear projection of per-point features to class logits.
    pub fn kp_head(&self, tape: &mut Tape<S>, p: &[Var], features: Var) -> Result<Var> {
        let (_, c) = tape.value(features).dims2()?;
        if c != self.layout.head.fan_in {
            return Err(LmptError::Shape(format!("head expects width {}, got {c}", self.layout.head.fan_in)));
        }
        self.layout.head.apply(tape, p, features)
    }

    /// encode → FiLM (skipped when `condition` is `None`) → decode → head.
    pub fn forward_on_tape(
        &self,
        tape: &mut Tape<S>,
        p: &[Var],
        hier: &Hierarchy<S>,
        condition: Option<usize>,
    ) -> Result<Var> {
        let states = self.encode(tape, p, hier)?;
        let mut bottleneck = states.last().expect("at least one stage").features;
        if let Some(c) = condition {
            bottleneck = self.film_modulate(tape, p, bottleneck, c)?;
        }
        let x = self.decode(tape, p, hier, &states, bottleneck)?;
        self.kp_head(tape, p, x)
    }

    /// Logits (`N x C`) for a normalized cloud.
    pub fn forward(&self, cloud: &PointCloud<S>, condition: usize) -> Result<Tensor<S>> {
        self.run(cloud, Some(condition))
    }

    /// Logits with the FiLM stage bypassed.
    pub fn forward_unconditioned(&self, cloud: &PointCloud<S>) -> Result<Tensor<S>> {
        self.run(cloud, None)
    }

    fn run(&self, cloud: &PointCloud<S>, condition: Option<usize>) -> Result<Tensor<S>> {
        let hier = self.hierarchy(cloud)?;
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape, false);
        let out = self.forward_on_tape(&mut tape, &p, &hier, condition)?;
        Ok(tape.value(out).clone())
    }

    fn check_bound(&self, p: &[Var]) -> Result<()> {
        if p.len() != self.params.len() {
            return Err(LmptError::Shape(format!("{} bound parameters for a model with {}", p.len(), self.params.len())));
        }
        Ok(())
    }
}
