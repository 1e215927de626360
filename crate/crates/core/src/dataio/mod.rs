//! Shape and annotation ingestion, label registry, medoid consolidation,
//! dataset splits and the synthetic femur generator.

mod consolidate;
mod landmarks;
mod manifest;
mod registry;
mod shape_io;
pub mod synth;

pub use consolidate::{consolidate_annotations, read_rounds, round_files};
pub use landmarks::LandmarkSet;
pub use manifest::{
    load_manifest, load_samples, split_dataset, DatasetManifest, HasSpecies, ManifestEntry, Sample, Side, Split,
};
pub use registry::{build_registry, LabelRegistry, SpeciesSchema};
pub use shape_io::{load_shape, write_obj, write_ply, Shape};
pub use synth::{synth_generate, synth_mirror_pairs, SpeciesPreset, Span, SynthParams};
