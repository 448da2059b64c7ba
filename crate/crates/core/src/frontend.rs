//! Receive chain: transimpedance amplifier, single-ended-to-differential
//! amplifier and flash ADC.
//!
//! Noise figures are V² at the ADC input; reports quote them as power into
//! 1 Ω, so "µW" below means µV².

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quant::max_code;

pub const BOLTZMANN: f64 = 1.38e-23;
pub const ELEMENTARY_CHARGE: f64 = 1.602e-19;

/// Guard added before flooring so ties at exactly half an LSB round up even
/// when `v·N/fs` lands a few ulps short of `k + 0.5`.
const TIE_GUARD: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TiaModel {
    pub g_m: f64,
    pub r_f: f64,
    pub c_tia: f64,
    pub gamma: f64,
    pub temperature: f64,
}

impl Default for TiaModel {
    fn default() -> Self {
        Self {
            g_m: 1e-3,
            r_f: 1650.0,
            c_tia: 30e-15,
            gamma: 2.5,
            temperature: 300.0,
        }
    }
}

impl TiaModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.g_m > 0.0 && self.r_f > 0.0 && self.c_tia > 0.0 && self.gamma >= 0.0 && self.temperature >= 0.0) {
            return Err(Error::invalid("TIA parameters must be positive"));
        }
        Ok(())
    }

    #[inline]
    pub fn r_tia(&self) -> f64 {
        self.r_f / (1.0 + self.g_m * self.r_f)
    }

    #[inline]
    pub fn dc_transimpedance(&self) -> f64 {
        self.g_m * self.r_f * self.r_tia()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TiaCharacteristics {
    pub r_tia_ohm: f64,
    pub dc_transimpedance_ohm: f64,
    pub bandwidth_hz: f64,
    pub in_noise_a_per_rthz: f64,
}

/// The noise density keeps the `2π` in front of `κT`; without it the
/// reference 6.26 pA/√Hz is not reached.
pub fn tia_characteristics(m: &TiaModel) -> TiaCharacteristics {
    let r_tia = m.r_tia();
    let psd = 2.0 * PI * BOLTZMANN * m.temperature / (m.r_f * m.r_f)
        * (m.gamma / m.g_m + 1.0 / (m.g_m * m.g_m * r_tia));
    TiaCharacteristics {
        r_tia_ohm: r_tia,
        dc_transimpedance_ohm: m.dc_transimpedance(),
        bandwidth_hz: 1.0 / (2.0 * PI * r_tia * m.c_tia),
        in_noise_a_per_rthz: psd.sqrt(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AmpModel {
    pub g_m_amp: f64,
    pub r_amp: f64,
    pub c_amp: f64,
    /// Transconductance of the active-inductor load device.
    pub g_m_ind: f64,
    pub bw_boost: f64,
}

impl Default for AmpModel {
    fn default() -> Self {
        let (g_m_amp, r_amp, c_amp) = (5e-3, 600.0, 80e-15);
        Self {
            g_m_amp,
            r_amp,
            c_amp,
            // R_AMP ≈ R_S/(1 + g_ind·R_S) → 1/g_ind as R_S grows.
            g_m_ind: 1.0 / r_amp,
            // Peaking that lifts the single-pole 3.32 GHz to 5.5 GHz.
            bw_boost: 5.5e9 * 2.0 * PI * r_amp * c_amp,
        }
    }
}

impl AmpModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.g_m_amp > 0.0 && self.r_amp > 0.0 && self.c_amp > 0.0 && self.g_m_ind >= 0.0 && self.bw_boost > 0.0) {
            return Err(Error::invalid("amplifier parameters must be positive"));
        }
        Ok(())
    }

    #[inline]
    pub fn dc_gain(&self) -> f64 {
        self.g_m_amp * self.r_amp
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmpCharacteristics {
    pub dc_gain: f64,
    pub bandwidth_hz: f64,
}

pub fn amp_characteristics(m: &AmpModel) -> AmpCharacteristics {
    AmpCharacteristics {
        dc_gain: m.dc_gain(),
        bandwidth_hz: m.bw_boost / (2.0 * PI * m.r_amp * m.c_amp),
    }
}

/// Noise terms at the ADC input, V².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseBudget {
    pub shot: f64,
    pub tia_thermal: f64,
    pub amp_thermal: f64,
    pub total: f64,
}

/// Shot, TIA thermal and amplifier thermal noise integrated over the
/// amplifier bandwidth, the dominant pole of the chain.
pub fn oe_noise_power(tia: &TiaModel, amp: &AmpModel, i_pd: f64) -> NoiseBudget {
    let kt = BOLTZMANN * tia.temperature;
    let r_tia = tia.r_tia();
    let amp_fold = amp.g_m_amp * amp.g_m_amp * amp.r_amp / amp.c_amp;
    let zt = tia.g_m * tia.r_f * r_tia;
    let shot = 0.5 * ELEMENTARY_CHARGE * i_pd.max(0.0) * zt * zt * amp_fold;
    let tia_thermal = kt * (tia.gamma * tia.g_m * r_tia * r_tia + r_tia) * amp_fold;
    let amp_thermal = 2.0 * kt * (tia.gamma * amp.g_m_amp * amp.r_amp + tia.gamma * amp.g_m_ind * amp.r_amp + 1.0) / amp.c_amp;
    NoiseBudget {
        shot,
        tia_thermal,
        amp_thermal,
        total: shot + tia_thermal + amp_thermal,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdcModel {
    pub bits: u32,
    pub full_scale: f64,
    pub sample_rate: f64,
}

impl AdcModel {
    pub fn v_lsb(&self) -> f64 {
        self.full_scale / f64::from(max_code(self.bits))
    }

    pub fn quant_noise_power(&self) -> f64 {
        let lsb = self.v_lsb();
        lsb * lsb / 12.0
    }

    pub fn dequantize(&self, code: u32) -> f64 {
        f64::from(code) * self.v_lsb()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnrMargin {
    pub quant_noise: f64,
    pub margin_db: f64,
    pub margin_bits: f64,
}

pub fn snr_margin(noise_power: f64, adc: &AdcModel) -> Result<SnrMargin> {
    if !(noise_power > 0.0) {
        return Err(Error::invalid("noise power must be positive"));
    }
    let quant = adc.quant_noise_power();
    let margin_db = 10.0 * (quant / noise_power).log10();
    Ok(SnrMargin {
        quant_noise: quant,
        margin_db,
        margin_bits: margin_db / 6.02,
    })
}

/// Mid-tread quantizer on `[0, full_scale]`, saturating, ties round up.
pub fn quantize_lsb(v: f64, full_scale: f64, bits: u32) -> u32 {
    let top = max_code(bits);
    if !(full_scale > 0.0) || v.is_nan() {
        return 0;
    }
    let u = (v * f64::from(top) / full_scale + 0.5 + TIE_GUARD).floor();
    u.clamp(0.0, f64::from(top)) as u32
}

pub fn adc_quantize(v_diff: f64, adc: &AdcModel) -> u32 {
    quantize_lsb(v_diff, adc.full_scale, adc.bits)
}
