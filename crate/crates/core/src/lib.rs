//! Link-level simulation of FBMC/OQAM over massive-MIMO uplink channels.
//!
//! The crate covers prototype filter design (including channel-aware
//! receive filters), the OQAM filter banks, multi-tap Rayleigh channels,
//! per-subcarrier MRC/ZF/MMSE combining, the large-array limit of the MRC
//! interference, and a Monte Carlo harness that sweeps the array size.

pub mod asymptotic;
pub mod channel;
pub mod combining;
pub mod dsp;
pub mod error;
pub mod harness;
pub mod io;
pub mod modem;
pub mod prototype;
pub mod rng;

pub use channel::{ChannelSet, PowerDelayProfile};
pub use combining::Detector;
pub use error::{Error, Result};
pub use harness::{ExperimentConfig, SinrRecord};
pub use modem::{SymbolGrid, TimeSignal};
pub use prototype::PrototypeFilter;
