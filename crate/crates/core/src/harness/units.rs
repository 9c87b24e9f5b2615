//! Quantities written as `"<number> <unit>"` strings.

use std::f64::consts::PI;

use crate::constants::{ATOMIC_MASS_UNIT, ELEMENTARY_CHARGE, ZERO_CELSIUS};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    Length,
    Time,
    /// Cyclic frequency, Hz.
    Frequency,
    /// Written in Hz (converted with 2 pi) or rad/s.
    AngularFrequency,
    Voltage,
    Current,
    Temperature,
    Power,
    Energy,
    Mass,
    Area,
    /// 1/s
    Rate,
}

impl Dimension {
    fn units(self) -> &'static [(&'static str, f64)] {
        match self {
            Dimension::Length => &[
                ("m", 1.0),
                ("cm", 1e-2),
                ("mm", 1e-3),
                ("um", 1e-6),
                ("µm", 1e-6),
                ("nm", 1e-9),
            ],
            Dimension::Time => &[
                ("s", 1.0),
                ("ms", 1e-3),
                ("us", 1e-6),
                ("µs", 1e-6),
                ("ns", 1e-9),
                ("ps", 1e-12),
                ("fs", 1e-15),
            ],
            Dimension::Frequency => &[("Hz", 1.0), ("kHz", 1e3), ("MHz", 1e6), ("GHz", 1e9)],
            Dimension::AngularFrequency => &[
                ("Hz", 2.0 * PI),
                ("kHz", 2.0 * PI * 1e3),
                ("MHz", 2.0 * PI * 1e6),
                ("GHz", 2.0 * PI * 1e9),
                ("rad/s", 1.0),
            ],
            Dimension::Voltage => &[("V", 1.0), ("mV", 1e-3), ("kV", 1e3)],
            Dimension::Current => &[("A", 1.0), ("mA", 1e-3)],
            Dimension::Temperature => &[("K", 1.0), ("mK", 1e-3), ("uK", 1e-6), ("µK", 1e-6)],
            Dimension::Power => &[("W", 1.0), ("mW", 1e-3), ("uW", 1e-6), ("µW", 1e-6)],
            Dimension::Energy => &[
                ("J", 1.0),
                ("nJ", 1e-9),
                ("pJ", 1e-12),
                ("eV", ELEMENTARY_CHARGE),
            ],
            Dimension::Mass => &[("kg", 1.0), ("u", ATOMIC_MASS_UNIT)],
            Dimension::Area => &[("m^2", 1.0), ("cm^2", 1e-4), ("Mb", 1e-22)],
            Dimension::Rate => &[("/s", 1.0), ("1/s", 1.0), ("/ms", 1e3)],
        }
    }

    /// Accepted unit spellings, for error messages.
    pub fn accepted(self) -> String {
        let mut names: Vec<&str> = self.units().iter().map(|u| u.0).collect();
        if self == Dimension::Temperature {
            names.push("degC");
        }
        names.join(", ")
    }
}

/// Parses `"<number> <unit>"` into SI. Temperatures also accept `degC`.
pub fn parse_quantity(text: &str, dim: Dimension) -> Result<f64, String> {
    let text = text.trim();
    let split = text
        .find(|c: char| c.is_whitespace())
        .ok_or_else(|| format!("`{text}` needs a unit ({})", dim.accepted()))?;
    let (number, unit) = (&text[..split], text[split..].trim());
    let value: f64 = number
        .parse()
        .map_err(|_| format!("`{number}` is not a number"))?;
    if !value.is_finite() {
        return Err(format!("`{number}` is not finite"));
    }
    if dim == Dimension::Temperature && unit == "degC" {
        return Ok(value + ZERO_CELSIUS);
    }
    dim.units()
        .iter()
        .find(|(name, _)| *name == unit)
        .map(|(_, scale)| value * scale)
        .ok_or_else(|| format!("unit `{unit}` is not one of {}", dim.accepted()))
}

/// Inverse of [`parse_quantity`] in the SI unit, so the round trip is exact.
pub fn format_quantity(value: f64, dim: Dimension) -> String {
    let name = dim
        .units()
        .iter()
        .find(|u| u.1 == 1.0)
        .map(|u| u.0)
        .expect("every dimension lists its SI unit");
    format!("{value:e} {name}")
}
