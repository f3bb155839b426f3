//! EEG records, seizure annotations, label rasterization and the synthetic
//! recording generator.

mod annotations;
mod io;
mod record;
mod synth;

pub use annotations::{rasterize, subsample_strong, AnnotationSet, Completeness, LabelMask, SeizureEvent};
pub use io::{
    annotation_path, load_annotations, load_dataset, load_record, read_neeg, record_from_csv, record_to_csv,
    write_annotations, write_dataset, write_neeg, write_record, NEEG_MAGIC, NEEG_VERSION,
};
pub use record::EegRecord;
pub use synth::{subject_seed, synth_dataset, synth_subject, ChannelSpread, SynthConfig};
