//! Text-based cyber-risk scoring of annual filings and the asset pricing
//! tests used to study whether that score is priced.
//!
//! The pipeline is split into stages that mirror the crate modules:
//!
//! - [`edgar`]: EDGAR full-index parsing, 10-K selection, cached fetching and
//!   HTML text extraction.
//! - [`textprep`]: normalization, sentence splitting, stop/common word
//!   filtering and greedy paragraph merging.
//! - [`embed`]: a Paragraph Vector engine (PV-DBOW and PV-DM) with negative
//!   sampling, inference and a binary model format.
//! - [`scoring`]: cosine similarity against a reference corpus and filing,
//!   firm-month and long-run score aggregation.
//! - [`portfolio`]: quantile sorts, value-weighted backtests, double sorts and
//!   performance ratios.
//! - [`apt`]: OLS with Newey-West errors, Fama-MacBeth, GRS and the Bayesian
//!   factor-model scan.

pub mod apt;
pub mod calendar;
pub mod edgar;
pub mod embed;
pub mod linalg;
pub mod portfolio;
pub mod scoring;
pub mod synth;
pub mod textprep;

pub use calendar::Month;
