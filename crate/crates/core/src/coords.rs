//! Direction bookkeeping: vertical-polar (as stored in measurement files) to
//! interaural-polar conversion and the nine elevation sectors.
//!
//! Conventions:
//! - vertical-polar azimuth is counterclockwise from the front, positive to
//!   the listener's left, normalized to `[-180, 180)`;
//! - interaural lateral angle is negative on the left, `[-90, 90]`;
//! - polar angle is 0 at the front horizon, 90 overhead, 180 at the rear
//!   horizon, normalized to `[-90, 270)`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lateral magnitude beyond which a direction belongs to a lateral sector.
pub const LATERAL_LIMIT_DEG: f64 = 60.0;

/// Directions closer than this to a pole have their polar angle pinned to 0.
const POLE_EPS_DEG: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerticalPolar {
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
}

impl VerticalPolar {
    /// Normalizes azimuth into `[-180, 180)`; rejects `|elevation| > 90`.
    pub fn new(azimuth_deg: f64, elevation_deg: f64) -> Result<Self> {
        if !azimuth_deg.is_finite() || !elevation_deg.is_finite() {
            return Err(Error::InvalidArgument("non-finite direction".into()));
        }
        if elevation_deg.abs() > 90.0 {
            return Err(Error::InvalidArgument(format!(
                "elevation {elevation_deg} outside [-90, 90]"
            )));
        }
        Ok(Self {
            azimuth_deg: wrap_azimuth(azimuth_deg),
            elevation_deg,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterauralPolar {
    pub lateral_deg: f64,
    pub polar_deg: f64,
}

impl InterauralPolar {
    /// Normalizes polar into `[-90, 270)`; rejects `|lateral| > 90`.
    pub fn new(lateral_deg: f64, polar_deg: f64) -> Result<Self> {
        if !lateral_deg.is_finite() || !polar_deg.is_finite() {
            return Err(Error::InvalidArgument("non-finite direction".into()));
        }
        if lateral_deg.abs() > 90.0 {
            return Err(Error::InvalidArgument(format!(
                "lateral {lateral_deg} outside [-90, 90]"
            )));
        }
        let polar_deg = if 90.0 - lateral_deg.abs() < POLE_EPS_DEG {
            0.0
        } else {
            wrap_polar(polar_deg)
        };
        Ok(Self {
            lateral_deg,
            polar_deg,
        })
    }
}

fn wrap_azimuth(az: f64) -> f64 {
    let w = (az + 180.0).rem_euclid(360.0) - 180.0;
    if w >= 180.0 {
        w - 360.0
    } else {
        w
    }
}

fn wrap_polar(p: f64) -> f64 {
    let w = (p + 90.0).rem_euclid(360.0) - 90.0;
    if w >= 270.0 {
        w - 360.0
    } else {
        w
    }
}

/// The nine elevation sectors, in the order used for class indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ElevationClass {
    FrontDown,
    FrontLevel,
    FrontUp,
    Up,
    BackUp,
    BackLevel,
    BackDown,
    LateralUp,
    LateralDown,
}

impl ElevationClass {
    pub const COUNT: usize = 9;

    pub const ALL: [ElevationClass; 9] = [
        ElevationClass::FrontDown,
        ElevationClass::FrontLevel,
        ElevationClass::FrontUp,
        ElevationClass::Up,
        ElevationClass::BackUp,
        ElevationClass::BackLevel,
        ElevationClass::BackDown,
        ElevationClass::LateralUp,
        ElevationClass::LateralDown,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Result<Self> {
        Self::ALL.get(i).copied().ok_or(Error::ClassOutOfRange(i))
    }

    /// Two-letter abbreviation (FD, FL, ..., LD).
    pub fn abbrev(self) -> &'static str {
        match self {
            ElevationClass::FrontDown => "FD",
            ElevationClass::FrontLevel => "FL",
            ElevationClass::FrontUp => "FU",
            ElevationClass::Up => "UP",
            ElevationClass::BackUp => "BU",
            ElevationClass::BackLevel => "BL",
            ElevationClass::BackDown => "BD",
            ElevationClass::LateralUp => "LU",
            ElevationClass::LateralDown => "LD",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ElevationClass::FrontDown => "front-down",
            ElevationClass::FrontLevel => "front-level",
            ElevationClass::FrontUp => "front-up",
            ElevationClass::Up => "up",
            ElevationClass::BackUp => "back-up",
            ElevationClass::BackLevel => "back-level",
            ElevationClass::BackDown => "back-down",
            ElevationClass::LateralUp => "lateral-up",
            ElevationClass::LateralDown => "lateral-down",
        }
    }

    pub fn is_lateral(self) -> bool {
        matches!(self, ElevationClass::LateralUp | ElevationClass::LateralDown)
    }
}

impl fmt::Display for ElevationClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.abbrev())
    }
}

impl FromStr for ElevationClass {
    type Err = Error;

    /// Accepts the abbreviation, the kebab-case name or the variant name,
    /// case-insensitively.
    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace(['_', ' '], "-");
        Self::ALL
            .iter()
            .copied()
            .find(|c| {
                c.abbrev().eq_ignore_ascii_case(&key)
                    || c.name() == key
                    || format!("{c:?}").eq_ignore_ascii_case(&key.replace('-', ""))
            })
            .ok_or_else(|| Error::InvalidArgument(format!("unknown elevation class {s:?}")))
    }
}

/// One measurement direction with its sector label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Direction {
    pub interaural: InterauralPolar,
    pub vertical: VerticalPolar,
    pub class_label: ElevationClass,
    pub source_distance_m: Option<f64>,
}

impl Direction {
    pub fn from_vertical(vertical: VerticalPolar, source_distance_m: Option<f64>) -> Self {
        let interaural = vertical_to_interaural(vertical);
        Self {
            interaural,
            vertical,
            class_label: classify(interaural),
            source_distance_m,
        }
    }

    pub fn from_interaural(interaural: InterauralPolar, source_distance_m: Option<f64>) -> Self {
        let vertical = interaural_to_vertical(interaural);
        Self {
            // Re-derive so the stored pair is self-consistent.
            interaural: vertical_to_interaural(vertical),
            vertical,
            class_label: classify(interaural),
            source_distance_m,
        }
    }
}

pub fn vertical_to_interaural(v: VerticalPolar) -> InterauralPolar {
    let (az, el) = (v.azimuth_deg.to_radians(), v.elevation_deg.to_radians());
    let x = el.cos() * az.cos();
    let y = el.cos() * az.sin();
    let z = el.sin();
    // +y points left while the lateral angle is negative on the left.
    let lateral = -y.clamp(-1.0, 1.0).asin().to_degrees();
    let polar = z.atan2(x).to_degrees();
    InterauralPolar::new(lateral, polar).expect("conversion stays in range")
}

pub fn interaural_to_vertical(i: InterauralPolar) -> VerticalPolar {
    let (lat, pol) = (i.lateral_deg.to_radians(), i.polar_deg.to_radians());
    let y = -lat.sin();
    let x = lat.cos() * pol.cos();
    let z = lat.cos() * pol.sin();
    let el = z.clamp(-1.0, 1.0).asin().to_degrees();
    let az = y.atan2(x).to_degrees();
    VerticalPolar::new(az, el).expect("conversion stays in range")
}

/// Angles this close to a whole degree are taken as that degree before the
/// sector edges are applied, so grid points sitting on an edge classify the
/// same regardless of trig rounding.
pub const EDGE_SNAP_DEG: f64 = 1e-9;

fn snap_deg(deg: f64) -> f64 {
    let r = deg.round();
    if (deg - r).abs() < EDGE_SNAP_DEG {
        r
    } else {
        deg
    }
}

/// Sector lookup: lateral sectors beyond 60 degrees, otherwise half-open
/// polar intervals `(lo, hi]`.
pub fn classify(i: InterauralPolar) -> ElevationClass {
    use ElevationClass::*;
    let pol = snap_deg(i.polar_deg);
    if snap_deg(i.lateral_deg).abs() > LATERAL_LIMIT_DEG {
        return if (0.0..180.0).contains(&pol) {
            LateralUp
        } else {
            LateralDown
        };
    }
    // -90 is the same direction as 270, the closed end of back-down.
    if pol <= -90.0 {
        BackDown
    } else if pol <= -20.0 {
        FrontDown
    } else if pol <= 20.0 {
        FrontLevel
    } else if pol <= 70.0 {
        FrontUp
    } else if pol <= 110.0 {
        Up
    } else if pol <= 160.0 {
        BackUp
    } else if pol <= 200.0 {
        BackLevel
    } else {
        BackDown
    }
}

/// Orders a left/right pair as (ipsilateral, contralateral). A source on the
/// midline (`lateral == 0`) keeps the left ear as ipsilateral.
pub fn ipsi_contra_swap<T: Clone>(
    left: &[T],
    right: &[T],
    lateral_deg: f64,
) -> Result<(Vec<T>, Vec<T>)> {
    if left.len() != right.len() {
        return Err(Error::LengthMismatch {
            what: "left/right spectra",
            left: left.len(),
            right: right.len(),
        });
    }
    if lateral_deg > 0.0 {
        Ok((right.to_vec(), left.to_vec()))
    } else {
        Ok((left.to_vec(), right.to_vec()))
    }
}
