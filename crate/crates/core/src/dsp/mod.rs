//! Preprocessing and spectral estimation.

mod filter;
mod welch;

pub use filter::{design_cheby1_bandpass, filtfilt, Biquad, FilterSettings, FilterSpec};
pub use welch::{welch_psd, PsdEstimate, Window, WelchSettings};
