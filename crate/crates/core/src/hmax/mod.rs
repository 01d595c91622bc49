//! The S1 → C1 → S2 → C2 hierarchy and template learning.

mod bankfile;
mod c1;
mod c2cache;
mod config;
mod feature;
mod fft;
mod gabor;
mod model;
mod s1;
mod s2;
mod template;

pub use bankfile::{read_bank, sidecar_path, write_bank, BankHeader, BANK_FORMAT_VERSION};
pub use c1::{c1, face_oval_extent};
pub use c2cache::{read_c2_cache, write_c2_cache, C2Cache};
pub use config::{Band, C1Band, C1Params, GaborParams, ModelConfig, Pooling};
pub use feature::{FeatureMap, Level};
pub use gabor::gabor_kernel;
pub use model::Model;
pub use s1::s1_direct;
pub use s2::{c2, c2_direct, calibrate_sigma, c2_from_distance, c2_min_distances, dissimilarity, s2_response, C2Vector, ResponseMap};
pub use template::{learn_templates, learn_templates_from_c1, SizeClass, Template, TemplateBank, TemplateSource};
