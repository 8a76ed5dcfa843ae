//! Multimodal reference footage library: emotion vectors, records,
//! extractors, persistence and synthetic generation.

pub mod codec;
pub mod extract;
pub mod interchange;
pub mod library;
pub mod record;
pub mod synthetic;
pub mod vector;

pub use codec::{load_library, save_library};
pub use extract::{synthetic_extract, ExtractorSuite, RawInputs, SyntheticExtractor};
pub use library::FootageLibrary;
pub use record::{build_record, FootageRecord};
pub use synthetic::{generate_held_out, generate_library, generate_records, ClusterConfig, SpeakerLayout};
pub use vector::{EmotionVector, Modality, Schema};
