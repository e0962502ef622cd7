//! Lq-spectra, entropies and multifractal spectra of frequency measures of primitive compatible
//! random substitutions, together with exact and Monte Carlo oracles for the frequency measure.

pub mod catalogue;
pub mod conditions;
pub mod distribution;
pub mod error;
pub mod language;
pub mod lq;
pub mod matrix;
pub mod oracle;
pub mod spectral;
pub mod substitution;
pub mod word;

pub use distribution::{InflationLevels, WordDistribution};
pub use error::{Error, Result};
pub use language::{Language, LegalLanguage};
pub use matrix::Matrix;
pub use spectral::PerronData;
pub use substitution::{RandomSubstitution, Realisation, ValidationReport};
pub use word::{Letter, Word};
