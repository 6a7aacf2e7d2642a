//! Simulator for RIS-assisted semantic image transmission over MIMO-OFDM.
//!
//! The physical layer ([`scenario`], [`ris_channel`], [`ofdm`]) carries the
//! two semantic parts of an image produced by [`codec`]. Learned controllers
//! in [`agents`], built on the small dense-network engine in [`nn`], pick RIS
//! phase shifts, stream assignments and RIS row usage to serve each user's
//! requirement. [`reconstruction`] repairs badly received parts, and
//! [`harness`] runs whole experiments.

pub mod agents;
pub mod codec;
pub mod error;
pub mod harness;
pub mod nn;
pub mod ofdm;
pub mod reconstruction;
pub mod ris_channel;
pub mod rng;
pub mod scenario;

pub use error::{Error, Result};
