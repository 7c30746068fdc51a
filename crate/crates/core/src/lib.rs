//! Static security scanner for serialized machine-learning model files.
//!
//! Pickle streams, ZIP-wrapped checkpoints and Keras model configs are parsed
//! and symbolically evaluated; nothing found in a scanned file is ever
//! deserialized, imported or executed.

pub mod container;
pub mod forge;
pub mod keras;
pub mod pickle;
pub mod policy;
pub mod scan;
pub(crate) mod util;

pub use policy::{Finding, Locus, Policy, RuleId, Severity};
pub use scan::{render, scan_file, scan_reader, scan_tree, sniff, FileKind, FileReport, Kind, OutputFormat, ScanOptions, ScanReport};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
