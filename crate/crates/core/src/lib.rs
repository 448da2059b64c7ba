//! Design calculator and bit-true behavioral simulator for a WDM
//! photonic-electronic linear-algebra accelerator.
//!
//! The pieces, bottom up:
//!
//! - [`resonator`]: comb grid, modulator rings and the racetrack photodetector.
//! - [`eo`]: ring E/O transfer, DAC calibration maps, DNL/INL, trimming.
//! - [`frontend`]: TIA, amplifier and ADC models plus the noise budget.
//! - [`power`]: power, area and energy roll-up against [`config::AccelConfig`].
//! - [`mvm`]: matrix-vector multiplication through the optical chain.
//! - [`mmm`]: matrix-matrix scheduling and the double product with broadband
//!   racetrack modulators.
//! - [`attention`]: one attention head and multi-head composition on exact,
//!   oracle and simulated backends.
//!
//! Every simulated path has an integer oracle it must match bit for bit when
//! the chain is ideal.

pub mod attention;
pub mod config;
pub mod eo;
pub mod error;
pub mod frontend;
pub mod mmm;
pub mod mvm;
pub mod power;
pub mod quant;
pub mod resonator;

pub use config::{AccelConfig, R2rStatic};
pub use eo::{CalibrationMap, DacTiming, MrmTransferModel};
pub use error::{Error, Result};
pub use frontend::{AdcModel, AmpModel, TiaModel};
pub use mmm::{MmmStrategy, ScheduleReport};
pub use mvm::{ChainTrace, MvmEngine, Nonlinearity, NoiseMode, SimFlags};
pub use power::PerfReport;
pub use quant::{QuantizedMatrix, QuantizedVector};
pub use resonator::{DispersionModel, MrmGeometry, RtrGeometry, WavelengthPlan};
