//! Penetration-rate and headway-to-density arithmetic.

use super::{check_sorted, time_span, AnalyticsError, Trajectories};
use crate::road::Heading;
use crate::units::{mph_to_fps, FEET_PER_MILE, SECONDS_PER_HOUR};

fn positive(name: &str, v: f64) -> Result<(), AnalyticsError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(AnalyticsError::InvalidInput(format!("{name} must be positive, got {v}")))
    }
}

/// Density implied by a uniform stream at `speed_mph` with every driver
/// holding `time_gap` seconds of headway.
pub fn veh_per_mile_from_gap(speed_mph: f64, time_gap: f64) -> Result<f64, AnalyticsError> {
    positive("speed", speed_mph)?;
    positive("time gap", time_gap)?;
    Ok(FEET_PER_MILE / (mph_to_fps(speed_mph) * time_gap))
}

/// Vehicles per hour passing a point when one passes every `period_s` seconds.
pub fn passing_rate_from_period(period_s: f64) -> Result<f64, AnalyticsError> {
    positive("passing period", period_s)?;
    Ok(SECONDS_PER_HOUR / period_s)
}

/// Fraction of the total flow made up of controlled vehicles.
pub fn penetration_rate(control_rate: f64, total_flow: f64) -> Result<f64, AnalyticsError> {
    positive("total flow", total_flow)?;
    if !(control_rate.is_finite() && control_rate >= 0.0) {
        return Err(AnalyticsError::InvalidInput(format!(
            "control passing rate must be non-negative, got {control_rate}"
        )));
    }
    if control_rate > total_flow {
        return Err(AnalyticsError::InvalidInput(format!(
            "control passing rate {control_rate} exceeds total flow {total_flow}"
        )));
    }
    Ok(control_rate / total_flow)
}

/// Penetration restricted to the lanes carrying `lane_fraction` of the total flow.
pub fn penetration_rate_in_lanes(
    control_rate: f64,
    total_flow: f64,
    lane_fraction: f64,
) -> Result<f64, AnalyticsError> {
    if !(lane_fraction > 0.0 && lane_fraction <= 1.0) {
        return Err(AnalyticsError::InvalidInput(format!(
            "lane flow fraction must lie in (0, 1], got {lane_fraction}"
        )));
    }
    penetration_rate(control_rate, total_flow * lane_fraction)
}

/// Hourly rate at which westbound vehicles with control engaged pass
/// mile marker `mm`, measured over the span of the recorded data.
pub fn control_passing_rate(trajectories: &Trajectories, mm: f64) -> Result<f64, AnalyticsError> {
    check_sorted(trajectories)?;
    let Some((lo, hi)) = time_span(trajectories) else {
        return Ok(0.0);
    };
    positive("observation span", hi - lo)?;
    let crossings = trajectories
        .values()
        .flat_map(|s| s.windows(2))
        .filter(|w| {
            let (a, b) = (&w[0], &w[1]);
            a.effective_heading() == Heading::Westbound
                && b.effective_heading() == Heading::Westbound
                && a.control_engaged
                && a.mile_marker > mm
                && b.mile_marker <= mm
        })
        .count();
    Ok(crossings as f64 * SECONDS_PER_HOUR / (hi - lo))
}

#[cfg(test)]
mod tests {
    use super::super::group_by_vin;
    use super::super::testutil::rec;
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn seventy_mph_three_seconds() {
        let d = veh_per_mile_from_gap(70.0, 3.0).unwrap();
        assert!((d - 17.1).abs() <= 0.1, "{d}");
    }

    #[test]
    fn sixty_mph_one_second_is_sixty() {
        let d = veh_per_mile_from_gap(60.0, 1.0).unwrap();
        assert!((d - 60.0).abs() < 1e-12);
    }

    #[test]
    fn doubling_gap_halves_density() {
        for (x, t) in [(30.0, 1.5), (55.0, 2.0), (70.0, 3.0)] {
            let a = veh_per_mile_from_gap(x, t).unwrap();
            let b = veh_per_mile_from_gap(x, 2.0 * t).unwrap();
            assert!((b - a / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn gap_inputs_validated() {
        assert!(veh_per_mile_from_gap(0.0, 3.0).is_err());
        assert!(veh_per_mile_from_gap(70.0, -1.0).is_err());
    }

    #[test]
    fn twenty_two_second_period_band() {
        let rate = passing_rate_from_period(22.0).unwrap();
        assert!((rate - 163.636).abs() < 1e-3);
        let hi = penetration_rate(rate, 6000.0).unwrap() * 100.0;
        let lo = penetration_rate(rate, 8000.0).unwrap() * 100.0;
        assert!((hi - 2.73).abs() <= 0.05, "{hi}");
        assert!((lo - 2.05).abs() <= 0.05, "{lo}");
        let lane_hi = penetration_rate_in_lanes(rate, 6000.0, 0.75).unwrap() * 100.0;
        let lane_lo = penetration_rate_in_lanes(rate, 8000.0, 0.75).unwrap() * 100.0;
        assert!((lane_hi - 3.64).abs() <= 0.05, "{lane_hi}");
        assert!((lane_lo - 2.73).abs() <= 0.05, "{lane_lo}");
    }

    #[test]
    fn penetration_edges() {
        assert_eq!(penetration_rate(0.0, 6000.0).unwrap(), 0.0);
        assert_eq!(penetration_rate(6000.0, 6000.0).unwrap(), 1.0);
        assert!(penetration_rate(6001.0, 6000.0).is_err());
        assert!(penetration_rate(1.0, 0.0).is_err());
        assert!(penetration_rate_in_lanes(1.0, 100.0, 0.0).is_err());
    }

    #[test]
    fn passing_rate_from_log() {
        // Two engaged vehicles cross mm 2.0 westbound within an hour.
        let mut recs = Vec::new();
        for (vin, t0) in [("A", 0.0), ("B", 1800.0)] {
            recs.push(rec(vin, t0, 2.5, Heading::Westbound, true));
            recs.push(rec(vin, t0 + 60.0, 1.5, Heading::Westbound, true));
        }
        recs.push(rec("C", 3600.0, 1.0, Heading::Westbound, false));
        let t = group_by_vin(recs);
        assert!((control_passing_rate(&t, 2.0).unwrap() - 2.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn monotone(c1 in 0.0f64..1000.0, dc in 0.0f64..1000.0, f in 2000.0f64..9000.0, df in 0.0f64..1000.0) {
            let a = penetration_rate(c1, f).unwrap();
            let b = penetration_rate(c1 + dc, f).unwrap();
            let c = penetration_rate(c1, f + df).unwrap();
            prop_assert!(b >= a);
            prop_assert!(c <= a);
            prop_assert!((0.0..=1.0).contains(&a));
        }
    }
}
