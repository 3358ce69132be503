//! Decoding correlated detector error models of quantum LDPC codes by graph
//! augmentation and rewiring of the correlated Tanner graph.
//!
//! ```no_run
//! use gari_core::{build_correlated, ensemble_decode, EnsembleConfig, GariModel, MemoryBasis};
//!
//! # fn main() -> Result<(), Box<dyn std::error::Error>> {
//! let dem = gari_core::dem::load_dem_file("fixtures/bb72_p0.003.dem.gz".as_ref())?;
//! let rule = gari_core::dem::parse_sidecar(&std::fs::read_to_string("fixtures/bb72_p0.003.dem.typing")?)?;
//! let typing = gari_core::dem::classify_detectors(&dem, &rule)?;
//! let cm = build_correlated(&dem.with_typing(typing)?, MemoryBasis::Z)?;
//! let gm = GariModel::from_correlated(&cm)?;
//! let input = gari_core::DecodeInput { s_x: vec![false; gm.top_x.num_rows()], s_z: vec![false; gm.top_z.num_rows()] };
//! let out = ensemble_decode(&gm, &input, &EnsembleConfig { size: 8, base_seed: 1, decoder: Default::default() })?;
//! assert!(out.outcome.converged);
//! # Ok(())
//! # }
//! ```

pub mod decoder;
pub mod dem;
pub mod ensemble;
pub mod gari;
pub mod harness;
pub mod mask;
pub mod seed;
pub mod spmat;
pub mod synth;

pub use dem::{DemError, DemModel, DetectorType, DetectorTyping, ErrorMechanism, TypingRule};
pub use gari::{build_correlated, CorrelatedModel, GariError, GariModel, MemoryBasis};
pub use mask::ObsMask;
pub use spmat::{BinMatrix, MatrixError, MatrixStats};
pub use decoder::{decode, DecodeError, DecodeInput, DecodeOutcome, DecoderConfig, DecoderGraph, StopCriterion};
pub use ensemble::{ensemble_decode, EnsembleConfig, EnsembleOutcome};
pub use harness::{run_experiment, Decoding, ExperimentConfig, ExperimentReport};
