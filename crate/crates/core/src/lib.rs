//! Silhouette sequences, exact Euclidean distance transforms, the signed dense
//! descriptor field, information-density metrics, file formats and a synthetic walker corpus.

// `!(x <= y)`-style comparisons deliberately treat NaN as out of range.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dstf;
pub mod edt;
mod error;
pub mod io;
pub mod metrics;
pub mod silhouette;
pub mod synth;

pub use dstf::{
    bi_dt, sign_and_normalize, sign_and_normalize_with, transform_sequence, BiDtFrame, DegeneratePolicy, DstfFrame,
    DstfSequence, Normalization, RegionScale, TransformOptions,
};
pub use edt::{edt_squared, edt_squared_from_sources};
pub use error::{Error, Result};
pub use metrics::{
    entropy_ratio, frame_difference, geni, image_entropy, EntropyReport, FrameDifference, GeniMap, ValueRange,
};
pub use silhouette::{classify_pixels, PixelClass, PixelClassMap, SilhouetteFrame, SilhouetteSequence};
pub use synth::{synth_walker, synthetic_corpus, synthetic_sequences, CorpusSpec, WalkerParams};
