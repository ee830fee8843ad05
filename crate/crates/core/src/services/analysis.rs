//! Deterministic pseudo-science behind the spectrometry and environment
//! services. None of it models real physics; every function is a pure map
//! from inputs so replays are reproducible.

use std::f64::consts::PI;

use crate::fault::Fault;

/// Calibration constant pinning `velocity(5, 10) = 11.332`.
pub const VELOCITY_CALIBRATION: f64 = 5.666;

/// `κ · sqrt(2·weight / mass)`.
pub fn particles_speed(mass: f64, weight: f64) -> Result<f64, Fault> {
    if mass.is_nan() || mass <= 0.0 {
        return Err(Fault::validation("mass must be > 0"));
    }
    if weight.is_nan() || weight < 0.0 {
        return Err(Fault::validation("weight must be >= 0"));
    }
    Ok(VELOCITY_CALIBRATION * (2.0 * weight / mass).sqrt())
}

pub const ELEMENTS: [&str; 4] = ["Si", "Fe", "Mg", "Ca"];
const ELEMENT_PRIMES: [u64; 4] = [3, 5, 7, 11];

pub fn byte_sum(text: &str) -> u64 {
    text.bytes().map(u64::from).sum()
}

/// Element abundances from a hash `h`: `raw_i = (h·p_i) mod 97`, normalized
/// to sum 1, or uniform when every raw value is zero.
pub fn abundances(h: u64) -> [f64; 4] {
    let raw = ELEMENT_PRIMES.map(|p| (h % 97) * p % 97);
    let total: u64 = raw.iter().sum();
    if total == 0 {
        return [0.25; 4];
    }
    raw.map(|r| r as f64 / total as f64)
}

pub fn released_xrays(sample_id: &str) -> [f64; 4] {
    abundances(byte_sum(sample_id))
}

pub fn vaporized_bits(rock_id: &str, laser_power: f64) -> Result<[f64; 4], Fault> {
    if !laser_power.is_finite() || laser_power < 0.0 {
        return Err(Fault::validation("laser_power must be a finite value >= 0"));
    }
    // floor(power) only matters modulo 97.
    let power = (laser_power.floor() % 97.0) as u64;
    Ok(abundances(byte_sum(rock_id) % 97 + power))
}

pub fn contains_carbon(sample_id: &str) -> bool {
    byte_sum(sample_id).is_multiple_of(2)
}

pub fn contains_oxygen(sample_id: &str) -> bool {
    byte_sum(sample_id).is_multiple_of(3)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Channel {
    Pressure,
    Humidity,
    WindSpeed,
    Ultraviolet,
}

impl Channel {
    pub const ALL: [Channel; 4] = [Channel::Pressure, Channel::Humidity, Channel::WindSpeed, Channel::Ultraviolet];
}

/// `base + amplitude · sin(2π·t/period)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelModel {
    pub base: f64,
    pub amplitude: f64,
    /// Ticks per cycle; must be positive.
    pub period: u64,
}

impl ChannelModel {
    pub fn value_at(&self, tick: u64) -> f64 {
        let phase = (tick % self.period) as f64 / self.period as f64;
        self.base + self.amplitude * (2.0 * PI * phase).sin()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvironmentModel {
    pub pressure: ChannelModel,
    pub humidity: ChannelModel,
    pub wind: ChannelModel,
    pub uv: ChannelModel,
}

impl Default for EnvironmentModel {
    fn default() -> Self {
        EnvironmentModel {
            pressure: ChannelModel { base: 715.0, amplitude: 50.0, period: 86_400 },
            humidity: ChannelModel { base: 0.03, amplitude: 0.02, period: 86_400 },
            wind: ChannelModel { base: 7.0, amplitude: 5.0, period: 3_600 },
            uv: ChannelModel { base: 2.5, amplitude: 2.5, period: 86_400 },
        }
    }
}

impl EnvironmentModel {
    pub fn channel(&self, c: Channel) -> &ChannelModel {
        match c {
            Channel::Pressure => &self.pressure,
            Channel::Humidity => &self.humidity,
            Channel::WindSpeed => &self.wind,
            Channel::Ultraviolet => &self.uv,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        for c in Channel::ALL {
            let m = self.channel(c);
            if m.period == 0 {
                return Err(format!("{c:?}: period must be > 0"));
            }
            if m.amplitude.is_nan() || m.amplitude < 0.0 {
                return Err(format!("{c:?}: amplitude must be >= 0"));
            }
        }
        Ok(())
    }
}
