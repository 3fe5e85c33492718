//! Time-space trajectory points colored by commanded speed.

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

use super::{check_sorted, AnalyticsError, Trajectories};
use crate::wire::Vin;

/// Point color: the commanded speed (m/s) while experimental control is
/// engaged, gray otherwise. Serialized as a number or the string `"gray"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PlotColor {
    Speed(f64),
    Gray,
}

impl Serialize for PlotColor {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            PlotColor::Speed(v) => s.serialize_f64(*v),
            PlotColor::Gray => s.serialize_str("gray"),
        }
    }
}

impl<'de> Deserialize<'de> for PlotColor {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = PlotColor;
            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("a speed or \"gray\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<PlotColor, E> {
                Ok(PlotColor::Speed(v))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<PlotColor, E> {
                Ok(PlotColor::Speed(v as f64))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<PlotColor, E> {
                Ok(PlotColor::Speed(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<PlotColor, E> {
                if v == "gray" {
                    Ok(PlotColor::Gray)
                } else {
                    Err(E::invalid_value(de::Unexpected::Str(v), &self))
                }
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotPoint {
    pub vin: Vin,
    pub t: f64,
    pub mile_marker: f64,
    pub color: PlotColor,
}

/// One point per telemetry sample. Engaged samples without a commanded
/// speed fall back to the measured speed.
pub fn trajectory_plot_data(trajectories: &Trajectories) -> Result<Vec<PlotPoint>, AnalyticsError> {
    check_sorted(trajectories)?;
    Ok(trajectories
        .values()
        .flatten()
        .map(|r| PlotPoint {
            vin: r.vin.clone(),
            t: r.t,
            mile_marker: r.mile_marker,
            color: if r.control_engaged {
                PlotColor::Speed(r.commanded_speed.unwrap_or(r.speed))
            } else {
                PlotColor::Gray
            },
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::super::group_by_vin;
    use super::super::testutil::rec;
    use super::*;
    use crate::road::Heading;

    #[test]
    fn engaged_uses_commanded_speed() {
        let mut r = rec("A", 0.0, 2.0, Heading::Westbound, true);
        r.commanded_speed = Some(20.0);
        r.speed = 17.0;
        let pts = trajectory_plot_data(&group_by_vin(vec![r])).unwrap();
        assert_eq!(pts[0].color, PlotColor::Speed(20.0));
    }

    #[test]
    fn disengaged_is_gray() {
        let pts = trajectory_plot_data(&group_by_vin(vec![rec("A", 0.0, 2.0, Heading::Eastbound, false)])).unwrap();
        assert_eq!(pts[0].color, PlotColor::Gray);
    }

    #[test]
    fn disengage_before_turnaround_leaves_gray_tip() {
        let mut recs: Vec<_> = (0..10)
            .map(|k| rec("A", k as f64, 2.0 - 0.01 * k as f64, Heading::Westbound, true))
            .collect();
        recs.extend((10..13).map(|k| rec("A", k as f64, 1.9 - 0.01 * (k - 10) as f64, Heading::Westbound, false)));
        recs.extend((13..16).map(|k| rec("A", k as f64, 1.87, Heading::Turnaround, false)));
        let pts = trajectory_plot_data(&group_by_vin(recs)).unwrap();
        assert_eq!(pts.len(), 16);
        let first_gray = pts.iter().position(|p| p.color == PlotColor::Gray).unwrap();
        assert_eq!(first_gray, 10);
        assert!(pts[first_gray..].iter().all(|p| p.color == PlotColor::Gray));
    }

    #[test]
    fn color_wire_format() {
        assert_eq!(serde_json::to_string(&PlotColor::Gray).unwrap(), "\"gray\"");
        assert_eq!(serde_json::to_string(&PlotColor::Speed(20.5)).unwrap(), "20.5");
        let c: PlotColor = serde_json::from_str("12").unwrap();
        assert_eq!(c, PlotColor::Speed(12.0));
        assert!(serde_json::from_str::<PlotColor>("\"blue\"").is_err());
    }
}
