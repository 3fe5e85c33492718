//! Unit conversions used across the crate.
//!
//! Positions along the corridor are kept in miles (mile markers), while
//! vehicle dynamics run in SI units.

pub const METERS_PER_MILE: f64 = 1609.344;
pub const FEET_PER_MILE: f64 = 5280.0;
pub const SECONDS_PER_HOUR: f64 = 3600.0;

#[inline]
pub fn meters_to_miles(m: f64) -> f64 {
    m / METERS_PER_MILE
}

#[inline]
pub fn miles_to_meters(mi: f64) -> f64 {
    mi * METERS_PER_MILE
}

/// Miles per hour to feet per second (60 mph = 88 ft/s).
#[inline]
pub fn mph_to_fps(mph: f64) -> f64 {
    mph * FEET_PER_MILE / SECONDS_PER_HOUR
}

#[inline]
pub fn mps_to_mph(mps: f64) -> f64 {
    mps / METERS_PER_MILE * SECONDS_PER_HOUR
}

#[inline]
pub fn mph_to_mps(mph: f64) -> f64 {
    mph * METERS_PER_MILE / SECONDS_PER_HOUR
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sixty_mph_is_eighty_eight_fps() {
        assert!((mph_to_fps(60.0) - 88.0).abs() < 1e-12);
    }

    #[test]
    fn mph_round_trip() {
        let v = 31.4;
        assert!((mps_to_mph(mph_to_mps(v)) - v).abs() < 1e-12);
    }
}
