//! Face stimulus construction: loading, preprocessing, inversion, composite
//! and whole/part stimuli, attention simulation and a procedural face
//! generator.

mod image;
pub mod io;
mod ops;
pub mod synth;

pub use self::image::Image;
pub use ops::{
    apply_attention_cfe, apply_attention_wpe, invert, make_composite, make_whole_part, preprocess,
    split_train_test, OvalMask, Region, StimulusParams,
};
pub use synth::{gen_synthetic_faces, SyntheticFace};
