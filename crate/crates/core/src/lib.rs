//! Magneto-inductive network topology modulation.
//!
//! Coupled resonant coils form a multiple-access channel whose impedance
//! matrix depends on which coils of each transmitter grid are active. The
//! crate models that channel ([`coil`], [`network`]), maps data onto active
//! coil patterns ([`modulation`], [`scene`]) and detects the transmitted
//! pattern at the receiver ([`demodulation`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coil;
pub mod demodulation;
pub mod error;
pub mod linalg;
pub mod modulation;
pub mod network;
pub mod scene;

pub use error::{Error, Result};
