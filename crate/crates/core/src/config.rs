//! Electrical, optical and layout constants of one accelerator instance.
//!
//! Every key carries its SI unit in the name. Loading rejects unknown keys, so
//! a misspelled constant fails loudly instead of silently keeping its default.

use serde::{Deserialize, Serialize};

use crate::eo::{DacTiming, MrmTransferModel};
use crate::error::{Error, Result};
use crate::frontend::{AdcModel, AmpModel, TiaModel};
use crate::quant::check_bits;

/// Where the per-DAC R-2R static power comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum R2rStatic {
    /// A fixed figure in W.
    Fixed(f64),
    /// Solve the ladder for `r_u_ohm`.
    Model(LadderTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LadderTag {
    Ladder,
}

impl R2rStatic {
    pub const LADDER: Self = R2rStatic::Model(LadderTag::Ladder);
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AccelConfig {
    pub d: usize,
    pub bits: u32,
    pub f_clk_hz: f64,
    pub vddh_v: f64,
    pub vdd_v: f64,

    pub r_hs_ohm: f64,
    pub c_dac_load_f: f64,
    pub r_u_ohm: f64,
    /// The reference per-DAC figure (7.2 µW) is used for the power roll-up by
    /// default; the ladder model at 5 MΩ gives a much smaller number.
    pub r2r_static_w: R2rStatic,

    pub dr_eo_w: f64,
    pub responsivity_a_per_w: f64,
    pub splitter_loss_db: f64,
    pub mrm_dr_db: f64,
    pub rtr_dr_db: f64,
    pub heater_unit_w: f64,

    /// HS-DAC switching power at `hs_dac_dyn_ref_hz`; scales linearly with clock.
    pub hs_dac_dyn_w: f64,
    pub hs_dac_dyn_ref_hz: f64,
    pub tia_w: f64,
    pub s2d_w: f64,
    pub adc_w: f64,
    pub per_row_overhead_w: f64,

    pub hs_dac_tile_um2: f64,
    pub r2r_tile_um2: f64,
    pub mrm_tile_um2: f64,
    pub rtr_pd_tile_um2: f64,
    pub per_cell_overhead_um2: f64,
    pub per_row_fixed_um2: f64,
    pub ops_stage_length_um: f64,
    pub ops_row_pitch_um: f64,

    pub lambda_max_nm: f64,
    pub spacing_nm: f64,
    pub mrm_q: f64,
    pub mrm_shift_nm_per_v: f64,
    pub rtr_bend_radius_um: f64,

    pub tia: TiaModel,
    pub amp: AmpModel,
    /// Differential ADC full scale. Left unset, it tracks the receive chain's
    /// own full-scale swing so that the top code is reachable.
    pub adc_full_scale_v: Option<f64>,
}

/// Per-row overhead fitted to the reference power column.
pub const FITTED_PER_ROW_OVERHEAD_W: f64 = 0.633_943_882e-3;
/// Per-cell and per-row area overheads fitted to the reference area column.
pub const FITTED_PER_CELL_OVERHEAD_UM2: f64 = 299.979_539;
pub const FITTED_PER_ROW_FIXED_UM2: f64 = -7_737.513_019;

impl Default for AccelConfig {
    fn default() -> Self {
        Self {
            d: 32,
            bits: 4,
            f_clk_hz: 2e9,
            vddh_v: 2.4,
            vdd_v: 1.2,
            r_hs_ohm: 2e3,
            c_dac_load_f: 30e-15,
            r_u_ohm: 5e6,
            r2r_static_w: R2rStatic::Fixed(7.2e-6),
            dr_eo_w: 670e-6,
            responsivity_a_per_w: 0.5,
            splitter_loss_db: 0.07,
            mrm_dr_db: 2.5,
            rtr_dr_db: 2.5,
            heater_unit_w: 2.4e-3,
            hs_dac_dyn_w: 0.2e-3,
            hs_dac_dyn_ref_hz: 2e9,
            tia_w: 0.1e-3,
            s2d_w: 0.75e-3,
            adc_w: 1.2e-3,
            per_row_overhead_w: FITTED_PER_ROW_OVERHEAD_W,
            hs_dac_tile_um2: 50.0 * 20.0,
            r2r_tile_um2: 20.0 * 10.0,
            mrm_tile_um2: 20.0 * 20.0,
            rtr_pd_tile_um2: 480.0 * 20.0,
            per_cell_overhead_um2: FITTED_PER_CELL_OVERHEAD_UM2,
            per_row_fixed_um2: FITTED_PER_ROW_FIXED_UM2,
            ops_stage_length_um: 35.0,
            ops_row_pitch_um: 20.0,
            lambda_max_nm: 1550.0,
            spacing_nm: 0.5,
            mrm_q: 1.0e4,
            mrm_shift_nm_per_v: 0.04,
            rtr_bend_radius_um: 5.0,
            tia: TiaModel::default(),
            amp: AmpModel::default(),
            adc_full_scale_v: None,
        }
    }
}

impl AccelConfig {
    pub fn with_d(d: usize) -> Self {
        Self {
            d,
            ..Self::default()
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::invalid(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        check_bits(self.bits)?;
        if self.bits >= 16 {
            return Err(Error::invalid("bits must leave room for the calibration bit"));
        }
        if self.d == 0 || !self.d.is_power_of_two() {
            return Err(Error::invalid(format!("d = {} is not a power of two", self.d)));
        }
        let positive = [
            ("f_clk_hz", self.f_clk_hz),
            ("vddh_v", self.vddh_v),
            ("vdd_v", self.vdd_v),
            ("r_hs_ohm", self.r_hs_ohm),
            ("c_dac_load_f", self.c_dac_load_f),
            ("r_u_ohm", self.r_u_ohm),
            ("dr_eo_w", self.dr_eo_w),
            ("responsivity_a_per_w", self.responsivity_a_per_w),
            ("heater_unit_w", self.heater_unit_w),
            ("hs_dac_dyn_ref_hz", self.hs_dac_dyn_ref_hz),
            ("lambda_max_nm", self.lambda_max_nm),
            ("spacing_nm", self.spacing_nm),
            ("mrm_q", self.mrm_q),
            ("mrm_shift_nm_per_v", self.mrm_shift_nm_per_v),
            ("rtr_bend_radius_um", self.rtr_bend_radius_um),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        let non_negative = [
            ("splitter_loss_db", self.splitter_loss_db),
            ("mrm_dr_db", self.mrm_dr_db),
            ("rtr_dr_db", self.rtr_dr_db),
            ("hs_dac_dyn_w", self.hs_dac_dyn_w),
            ("tia_w", self.tia_w),
            ("s2d_w", self.s2d_w),
            ("adc_w", self.adc_w),
            ("per_row_overhead_w", self.per_row_overhead_w),
            ("hs_dac_tile_um2", self.hs_dac_tile_um2),
            ("r2r_tile_um2", self.r2r_tile_um2),
            ("mrm_tile_um2", self.mrm_tile_um2),
            ("rtr_pd_tile_um2", self.rtr_pd_tile_um2),
            ("per_cell_overhead_um2", self.per_cell_overhead_um2),
            ("ops_stage_length_um", self.ops_stage_length_um),
            ("ops_row_pitch_um", self.ops_row_pitch_um),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be non-negative, got {v}")));
            }
        }
        // The fitted per-row constant is negative; only require finiteness.
        if !self.per_row_fixed_um2.is_finite() {
            return Err(Error::invalid("per_row_fixed_um2 must be finite"));
        }
        if let R2rStatic::Fixed(w) = self.r2r_static_w {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::invalid("r2r_static_w must be non-negative"));
            }
        }
        if let Some(fs) = self.adc_full_scale_v {
            if !(fs > 0.0) {
                return Err(Error::invalid("adc_full_scale_v must be positive"));
            }
        }
        self.tia.validate()?;
        self.amp.validate()?;
        Ok(())
    }

    pub fn log2_d(&self) -> u32 {
        self.d.trailing_zeros()
    }

    /// HS-DAC switching power at the configured clock.
    pub fn hs_dac_dyn_at_clock_w(&self) -> f64 {
        self.hs_dac_dyn_w * self.f_clk_hz / self.hs_dac_dyn_ref_hz
    }

    pub fn dac_timing(&self) -> DacTiming {
        DacTiming {
            r_hs_ohm: self.r_hs_ohm,
            c_load_f: self.c_dac_load_f,
            resolution_bits: self.bits,
        }
    }

    /// Modulator ring parked with its 0 V resonance on `lambda_nm`.
    pub fn mrm_model(&self, lambda_nm: f64) -> Result<MrmTransferModel> {
        MrmTransferModel::with_dynamic_range(self.mrm_q, lambda_nm, self.mrm_shift_nm_per_v, self.vddh_v, self.mrm_dr_db)
    }

    pub fn adc(&self, full_scale_v: f64) -> AdcModel {
        AdcModel {
            bits: self.bits,
            full_scale: self.adc_full_scale_v.unwrap_or(full_scale_v),
            sample_rate: self.f_clk_hz,
        }
    }
}
