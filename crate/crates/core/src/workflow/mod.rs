//! Procedure timelines: the synthetic workflow simulator and ingestion of
//! annotation and feature files.

mod io;
mod sequence;
mod sim;

pub use io::{
    attach_features, feature_csv_string, load_annotations, parse_annotations, read_feature_csv,
    read_feature_f32, read_features, sidecar_path, to_cholec80_tsv, to_generic_csv,
    write_feature_csv, write_feature_f32, write_text, AnnotationFormat, FeatureSource,
};
pub use sequence::{FeatureMatrix, ProcedureSequence};
pub use sim::{
    emit_for_sequence, generate_dataset, generate_dataset_with, onsets, Dist, FeatureSpec,
    InstrumentSpec, PhaseSpec, SignatureKind, SimConfig, TriggerRule, UsageRule,
};
