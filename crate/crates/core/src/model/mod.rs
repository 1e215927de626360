//! Point transformer encoder/decoder with a FiLM-conditioned bottleneck.

mod config;
mod layout;
mod network;
mod params;
mod predict;

pub use config::{AttentionMode, ModelConfig};
pub use layout::{BlockLayout, DecoderLayout, EncoderLayout, FilmLayout, Layout, Linear, Norm};
pub use network::{attention_block, build_model, neighborhoods, Hierarchy, LmptModel, StageState, Windows};
pub use params::ParamSet;
pub use predict::{argmax_point, predict_landmarks};
