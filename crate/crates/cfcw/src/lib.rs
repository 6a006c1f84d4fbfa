//! Cross-frequency continuous-wave (CFCW) acoustic tracking.
//!
//! A moving beacon transmits an ultrasound tone while a fixed speaker next
//! to the microphone array transmits a second tone a few kHz lower. The
//! microphones' quadratic term records the difference tone, whose phase
//! follows the beacon range at the ultrasound wavelength.

pub mod coexistence;
pub mod demod;
pub mod error;
pub mod experiment;
pub mod handwriting;
pub mod localize;
pub mod signal;
pub mod sim;
pub mod startpoint;
pub mod tx;
pub mod word;

pub use error::{Error, Result};
