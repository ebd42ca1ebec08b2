use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Mean Earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

pub const METERS_PER_MILE: f64 = 1609.344;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeoError {
    #[error("latitude {0} outside [-90, 90]")]
    Latitude(f64),
    #[error("longitude {0} outside [-180, 180]")]
    Longitude(f64),
}

/// A WGS84 coordinate in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPoint")]
pub struct GeoPoint {
    lat: f64,
    lon: f64,
}

#[derive(Deserialize)]
struct RawPoint {
    lat: f64,
    lon: f64,
}

impl TryFrom<RawPoint> for GeoPoint {
    type Error = GeoError;
    fn try_from(raw: RawPoint) -> Result<Self, GeoError> {
        GeoPoint::new(raw.lat, raw.lon)
    }
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self, GeoError> {
        if !lat.is_finite() || !(-90.0..=90.0).contains(&lat) {
            return Err(GeoError::Latitude(lat));
        }
        if !lon.is_finite() || !(-180.0..=180.0).contains(&lon) {
            return Err(GeoError::Longitude(lon));
        }
        Ok(Self { lat, lon })
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }

    pub fn lon(&self) -> f64 {
        self.lon
    }
}

/// Haversine distance on a sphere of the given radius.
pub fn great_circle_with_radius(a: GeoPoint, b: GeoPoint, radius: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let (phi1, phi2) = (a.lat.to_radians(), b.lat.to_radians());
    let dphi = (b.lat - a.lat).to_radians();
    let dlambda = (b.lon - a.lon).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * radius * h.min(1.0).sqrt().asin()
}

pub fn great_circle(a: GeoPoint, b: GeoPoint) -> f64 {
    great_circle_with_radius(a, b, EARTH_RADIUS_M)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn p(lat: f64, lon: f64) -> GeoPoint {
        GeoPoint::new(lat, lon).unwrap()
    }

    #[test]
    fn identical_points_are_zero() {
        assert_eq!(great_circle(p(40.42, -86.91), p(40.42, -86.91)), 0.0);
    }

    #[test]
    fn half_circumference() {
        let d = great_circle(p(0.0, 0.0), p(0.0, 180.0));
        assert!((d - PI * EARTH_RADIUS_M).abs() < 1e-6);
        assert!((d - 20_015_087.0).abs() < 1.0);
    }

    #[test]
    fn one_degree_on_equator() {
        let d = great_circle(p(0.0, 0.0), p(0.0, 1.0));
        assert!((d - PI * EARTH_RADIUS_M / 180.0).abs() < 1e-6);
        assert!((d - 111_195.0).abs() < 1.0);
    }

    #[test]
    fn rejects_out_of_range() {
        assert_eq!(GeoPoint::new(95.0, 0.0), Err(GeoError::Latitude(95.0)));
        assert_eq!(GeoPoint::new(0.0, -181.0), Err(GeoError::Longitude(-181.0)));
        assert!(GeoPoint::new(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn deserialize_validates() {
        assert!(serde_json::from_str::<GeoPoint>(r#"{"lat":91,"lon":0}"#).is_err());
        let g: GeoPoint = serde_json::from_str(r#"{"lat":1.5,"lon":2}"#).unwrap();
        assert_eq!(g, p(1.5, 2.0));
    }

    // Poles and the antimeridian alias distinct coordinates to one place.
    fn point() -> impl Strategy<Value = GeoPoint> {
        (-89.9f64..89.9, -179.9f64..179.9).prop_map(|(la, lo)| p(la, lo))
    }

    proptest! {
        #[test]
        fn metric_axioms(a in point(), b in point(), c in point()) {
            let ab = great_circle(a, b);
            let ba = great_circle(b, a);
            let bc = great_circle(b, c);
            let ac = great_circle(a, c);
            prop_assert!(ab >= 0.0);
            prop_assert!((ab - ba).abs() <= 1e-6 * ab.max(1.0));
            prop_assert!(ac <= (ab + bc) * (1.0 + 1e-6) + 1e-6);
            if a != b {
                prop_assert!(ab > 0.0);
            }
        }
    }
}
