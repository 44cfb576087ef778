//! Executable security experiments: the O(n) unit-vector extraction attack on
//! plain linear layers, its degradation against the private layer, continuous
//! LWE sample generation, and the sample converter that turns CLWE instances
//! into the shifted-modular form the extraction problem takes.

mod extraction;
mod reduction;
mod samplers;

pub use extraction::{
    extract_plain_linear, extraction_residuals, pll_demod_oracle, ExtractError, Extraction,
    ResidualReport,
};
pub use reduction::{alg1_convert, SolveMatrixSample};
pub use samplers::{clwe_sample, LweParams, LweSampleSet, SampleTag, SamplerError};
