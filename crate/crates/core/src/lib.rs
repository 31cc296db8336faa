pub mod error;
pub mod numeric;
pub mod seed;
pub mod spectra;
pub mod tensor_spectrum;
pub mod additive_spectrum;
pub mod field_sim;
pub mod std_approx;
pub mod prob_setting;
pub mod cli;

pub use error::{Error, Result};

/// Shortest decimal text that parses back to the same `f64` (at most 17
/// significant digits).
pub fn format_f64(x: f64) -> String {
    format!("{x}")
}
