//! Unit conversions and physical constants.
//!
//! Internally every quantity is carried in micrometers, seconds and
//! micromolar. Conversions to and from other units happen at the edges
//! (config parsing, formula evaluation that needs liters or molar).

use crate::error::{Error, Result};

/// Avogadro constant, mol⁻¹.
pub const AVOGADRO: f64 = 6.022_140_86e23;

/// Fixed physical constants used across the crate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constants {
    pub avogadro: f64,
}

pub const CONSTANTS: Constants = Constants {
    avogadro: AVOGADRO,
};

/// Micromolar per molar.
pub const UM_PER_M: f64 = 1e6;
/// Decimeters per micrometer; a cubed decimeter is a liter.
pub const DM_PER_UM: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    Length,
    Time,
    Concentration,
    Frequency,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unit {
    Meter,
    Decimeter,
    Centimeter,
    Millimeter,
    Micrometer,
    Nanometer,
    Second,
    Millisecond,
    Minute,
    Hour,
    Molar,
    Millimolar,
    Micromolar,
    Nanomolar,
    Hertz,
    PerMinute,
}

/// Scale of a unit relative to the base unit of its dimension.
enum Scale {
    /// Exact power of ten.
    Decade(i32),
    /// Arbitrary multiplier (minutes, hours).
    Factor(f64),
}

impl Unit {
    pub fn dimension(self) -> Dimension {
        use Unit::*;
        match self {
            Meter | Decimeter | Centimeter | Millimeter | Micrometer | Nanometer => {
                Dimension::Length
            }
            Second | Millisecond | Minute | Hour => Dimension::Time,
            Molar | Millimolar | Micromolar | Nanomolar => Dimension::Concentration,
            Hertz | PerMinute => Dimension::Frequency,
        }
    }

    fn scale(self) -> Scale {
        use Unit::*;
        match self {
            Meter | Second | Molar | Hertz => Scale::Decade(0),
            Decimeter => Scale::Decade(-1),
            Centimeter => Scale::Decade(-2),
            Millimeter | Millisecond | Millimolar => Scale::Decade(-3),
            Micrometer | Micromolar => Scale::Decade(-6),
            Nanometer | Nanomolar => Scale::Decade(-9),
            Minute => Scale::Factor(60.0),
            Hour => Scale::Factor(3600.0),
            PerMinute => Scale::Factor(1.0 / 60.0),
        }
    }

    pub fn symbol(self) -> &'static str {
        use Unit::*;
        match self {
            Meter => "m",
            Decimeter => "dm",
            Centimeter => "cm",
            Millimeter => "mm",
            Micrometer => "um",
            Nanometer => "nm",
            Second => "s",
            Millisecond => "ms",
            Minute => "min",
            Hour => "h",
            Molar => "M",
            Millimolar => "mM",
            Micromolar => "uM",
            Nanomolar => "nM",
            Hertz => "Hz",
            PerMinute => "bpm",
        }
    }
}

fn pow10(exp: i32) -> f64 {
    // exact for |exp| <= 22
    10f64.powi(exp)
}

/// Converts `value` from `from` to `to`.
///
/// Power-of-ten conversions multiply or divide by an exactly representable
/// power of ten, never by its (inexact) reciprocal.
pub fn convert(value: f64, from: Unit, to: Unit) -> Result<f64> {
    if from.dimension() != to.dimension() {
        return Err(Error::Domain(format!(
            "cannot convert {} ({:?}) to {} ({:?})",
            from.symbol(),
            from.dimension(),
            to.symbol(),
            to.dimension()
        )));
    }
    Ok(match (from.scale(), to.scale()) {
        (Scale::Decade(a), Scale::Decade(b)) => {
            let shift = a - b;
            if shift >= 0 {
                value * pow10(shift)
            } else {
                value / pow10(-shift)
            }
        }
        (a, b) => value * a.factor() / b.factor(),
    })
}

impl Scale {
    fn factor(&self) -> f64 {
        match *self {
            Scale::Decade(e) => pow10(e),
            Scale::Factor(f) => f,
        }
    }
}

/// Beat period in seconds for a heart rate in beats per minute.
pub fn bpm_to_period(bpm: f64) -> Result<f64> {
    if !(bpm > 0.0) || !bpm.is_finite() {
        return Err(Error::Domain(format!("heart rate must be positive, got {bpm}")));
    }
    Ok(60.0 / bpm)
}

/// Converts a molecule count held in a volume (liters) to micromolar.
pub fn count_in_liters_to_um(count: f64, volume_l: f64) -> f64 {
    count / (AVOGADRO * volume_l) * UM_PER_M
}

/// Cube of a length given in micrometers, expressed in liters.
pub fn cubed_um_to_liters(length_um: f64) -> f64 {
    let dm = length_um * DM_PER_UM;
    dm * dm * dm
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert_eq!(convert(1.0, Unit::Molar, Unit::Micromolar).unwrap(), 1e6);
        assert_eq!(convert(500.0, Unit::Nanometer, Unit::Micrometer).unwrap(), 0.5);
        assert_eq!(bpm_to_period(80.0).unwrap(), 0.75);
        assert_eq!(convert(2.0, Unit::Minute, Unit::Second).unwrap(), 120.0);
        assert_eq!(convert(120.0, Unit::PerMinute, Unit::Hertz).unwrap(), 2.0);
    }

    #[test]
    fn incompatible_dimensions_rejected() {
        assert!(convert(1.0, Unit::Meter, Unit::Second).is_err());
        assert!(convert(1.0, Unit::Molar, Unit::Hertz).is_err());
        assert!(bpm_to_period(0.0).is_err());
    }

    #[test]
    fn liters() {
        // 1 dm = 1e5 um
        assert!((cubed_um_to_liters(1e5) - 1.0).abs() < 1e-15);
    }

    const DECIMAL: [Unit; 10] = [
        Unit::Meter,
        Unit::Decimeter,
        Unit::Centimeter,
        Unit::Millimeter,
        Unit::Micrometer,
        Unit::Nanometer,
        Unit::Molar,
        Unit::Millimolar,
        Unit::Micromolar,
        Unit::Nanomolar,
    ];

    proptest! {
        // Binary floating point cannot undo every decimal scaling exactly, so
        // the general round trip is held to one ulp and integer-valued inputs
        // whose scaled value stays below 2^53 must come back bit-exact.
        #[test]
        fn round_trip(x in -1e12f64..1e12, a in 0usize..10, b in 0usize..10) {
            let (u, v) = (DECIMAL[a], DECIMAL[b]);
            prop_assume!(u.dimension() == v.dimension());
            let back = convert(convert(x, u, v).unwrap(), v, u).unwrap();
            let ulp = f64::EPSILON * x.abs();
            prop_assert!((back - x).abs() <= ulp, "{x} -> {back}");
        }

        #[test]
        fn round_trip_exact_integers(n in -1_000_000i64..1_000_000, a in 0usize..10, b in 0usize..10) {
            let (u, v) = (DECIMAL[a], DECIMAL[b]);
            prop_assume!(u.dimension() == v.dimension());
            let x = n as f64;
            let there = convert(x, u, v).unwrap();
            prop_assume!(there.fract() == 0.0);
            prop_assert_eq!(convert(there, v, u).unwrap(), x);
        }
    }
}
