use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use super::params::ParamSet;
use crate::autodiff::{Tape, Tensor, Var};
use crate::error::Result;
use crate::scalar::Scalar;

/// Affine map `x·W + b` with `W: [fan_in, fan_out]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Linear {
    pub weight: usize,
    pub bias: usize,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    pub fn apply<S: Scalar>(&self, tape: &mut Tape<S>, p: &[Var], x: Var) -> Result<Var> {
        let y = tape.matmul(x, p[self.weight])?;
        tape.add_bias(y, p[self.bias])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Norm {
    pub gain: usize,
    pub bias: usize,
}

impl Norm {
    pub fn apply<S: Scalar>(&self, tape: &mut Tape<S>, p: &[Var], x: Var) -> Result<Var> {
        tape.layer_norm(x, p[self.gain], p[self.bias])
    }
}

/// Parameter slots of one grouped vector attention block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockLayout {
    pub width: usize,
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub pos_in: Linear,
    pub pos_out: Linear,
    pub weight_in: Linear,
    pub weight_out: Linear,
    pub norm1: Norm,
    pub ffn_in: Linear,
    pub ffn_out: Linear,
    pub norm2: Norm,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncoderLayout {
    pub proj: Linear,
    pub norm: Norm,
    pub blocks: Vec<BlockLayout>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecoderLayout {
    pub up: Linear,
    pub skip: Linear,
    pub blocks: Vec<BlockLayout>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FilmLayout {
    pub weight: usize,
    pub bias: usize,
    pub width: usize,
}

/// Where every parameter of a model lives inside its [`ParamSet`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    /// Coordinate embedding: `norm(out(gelu(in(p))))`.
    pub embed_in: Linear,
    pub embed_out: Linear,
    pub embed_norm: Norm,
    pub encoder: Vec<EncoderLayout>,
    pub film: Option<FilmLayout>,
    /// Indexed by stage; decoder stage `s` runs at the resolution that
    /// encoder stage `s` pooled from.
    pub decoder: Vec<DecoderLayout>,
    pub head: Linear,
}

struct Builder<'a, S> {
    params: &'a mut ParamSet<S>,
    rng: ChaCha8Rng,
}

impl<S: Scalar> Builder<'_, S> {
    fn linear(&mut self, name: &str, fan_in: usize, fan_out: usize) -> Linear {
        let bound = (3.0 / fan_in as f64).sqrt();
        // Drawn at 32-bit precision so checkpoints store the initial values exactly.
        let w: Vec<S> =
            (0..fan_in * fan_out).map(|_| S::lit(self.rng.gen_range(-bound..bound) as f32 as f64)).collect();
        let weight = self.params.push(format!("{name}.weight"), Tensor::matrix(fan_in, fan_out, w).expect("sized"));
        let bias = self.params.push(format!("{name}.bias"), Tensor::zeros(vec![fan_out]));
        Linear { weight, bias, fan_in, fan_out }
    }

    fn norm(&mut self, name: &str, width: usize) -> Norm {
        let gain = self.params.push(format!("{name}.gain"), Tensor::filled(vec![width], S::one()));
        let bias = self.params.push(format!("{name}.bias"), Tensor::zeros(vec![width]));
        Norm { gain, bias }
    }

    fn block(&mut self, name: &str, c: usize) -> BlockLayout {
        BlockLayout {
            width: c,
            query: self.linear(&format!("{name}.query"), c, c),
            key: self.linear(&format!("{name}.key"), c, c),
            value: self.linear(&format!("{name}.value"), c, c),
            pos_in: self.linear(&format!("{name}.pos_in"), 3, c),
            pos_out: self.linear(&format!("{name}.pos_out"), c, c),
            weight_in: self.linear(&format!("{name}.weight_in"), c, c),
            weight_out: self.linear(&format!("{name}.weight_out"), c, c),
            norm1: self.norm(&format!("{name}.norm1"), c),
            ffn_in: self.linear(&format!("{name}.ffn_in"), c, 2 * c),
            ffn_out: self.linear(&format!("{name}.ffn_out"), 2 * c, c),
            norm2: self.norm(&format!("{name}.norm2"), c),
        }
    }
}

/// Allocates and initializes every parameter for `config`. The order of
/// allocation (and hence of random draws) is fixed, so a seed determines the
/// parameters exactly. FiLM starts as the identity: `W = 0`, `b = (1…1, 0…0)`.
pub fn build_layout<S: Scalar>(config: &ModelConfig, seed: u64) -> (Layout, ParamSet<S>) {
    use rand::SeedableRng;
    let mut params = ParamSet::new();
    let mut b = Builder { params: &mut params, rng: ChaCha8Rng::seed_from_u64(seed) };
    let ch = &config.channels;
    let c0 = ch[0];
    let embed_in = b.linear("embed_in", 3, c0);
    let embed_out = b.linear("embed_out", c0, c0);
    let embed_norm = b.norm("embed_norm", c0);
    let mut encoder = Vec::new();
    for s in 0..config.stages() {
        let prev = if s == 0 { c0 } else { ch[s - 1] };
        let proj = b.linear(&format!("enc{s}.proj"), prev, ch[s]);
        let norm = b.norm(&format!("enc{s}.norm"), ch[s]);
        let blocks = (0..config.blocks[s]).map(|i| b.block(&format!("enc{s}.block{i}"), ch[s])).collect();
        encoder.push(EncoderLayout { proj, norm, blocks });
    }
    let film = config.film.then(|| {
        let width = config.bottleneck_width();
        let weight = b.params.push("film.weight", Tensor::zeros(vec![config.num_conditions, 2 * width]));
        let bias_data = (0..2 * width).map(|i| if i < width { S::one() } else { S::zero() }).collect();
        let bias = b.params.push("film.bias", Tensor::vector(bias_data));
        FilmLayout { weight, bias, width }
    });
    let mut decoder = Vec::new();
    for s in (0..config.stages()).rev() {
        let out = if s == 0 { c0 } else { ch[s - 1] };
        let up = b.linear(&format!("dec{s}.up"), ch[s], out);
        let skip = b.linear(&format!("dec{s}.skip"), out, out);
        let blocks = (0..config.blocks[s]).map(|i| b.block(&format!("dec{s}.block{i}"), out)).collect();
        decoder.push(DecoderLayout { up, skip, blocks });
    }
    decoder.reverse();
    let head = b.linear("head", c0, config.num_classes);
    (Layout { embed_in, embed_out, embed_norm, encoder, film, decoder, head }, params)
}
