//! WGS84 geodetic coordinates and local east-north-up frames.

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

/// WGS84 semi-major axis, meters.
pub const WGS84_A: f64 = 6_378_137.0;
/// WGS84 flattening.
pub const WGS84_F: f64 = 1.0 / 298.257_223_563;

fn e2() -> f64 {
    WGS84_F * (2.0 - WGS84_F)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeodesyError {
    #[error("latitude {0} outside [-90, 90]")]
    Latitude(f64),
    #[error("longitude {0} outside [-180, 180]")]
    Longitude(f64),
    #[error("altitude {0} is not finite")]
    Altitude(f64),
}

/// Latitude and longitude in degrees, altitude in meters above the ellipsoid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoPoint {
    pub latitude: f64,
    pub longitude: f64,
    pub altitude: f64,
}

impl GeoPoint {
    pub fn new(latitude: f64, longitude: f64, altitude: f64) -> Result<Self, GeodesyError> {
        if !(latitude.abs() <= 90.0) {
            return Err(GeodesyError::Latitude(latitude));
        }
        if !(longitude.abs() <= 180.0) {
            return Err(GeodesyError::Longitude(longitude));
        }
        if !altitude.is_finite() {
            return Err(GeodesyError::Altitude(altitude));
        }
        Ok(GeoPoint {
            latitude,
            longitude,
            altitude,
        })
    }
}

pub fn geodetic_to_ecef(g: &GeoPoint) -> Vector3<f64> {
    let lat = g.latitude.to_radians();
    let lon = g.longitude.to_radians();
    let (slat, clat) = lat.sin_cos();
    let (slon, clon) = lon.sin_cos();
    let n = WGS84_A / (1.0 - e2() * slat * slat).sqrt();
    Vector3::new(
        (n + g.altitude) * clat * clon,
        (n + g.altitude) * clat * slon,
        (n * (1.0 - e2()) + g.altitude) * slat,
    )
}

/// ECEF to geodetic by Bowring's initial guess refined with Newton-style
/// fixed-point iterations; converges to sub-millimeter in a few steps for
/// near-surface points.
pub fn ecef_to_geodetic(p: &Vector3<f64>) -> GeoPoint {
    let e2 = e2();
    let lon = p.y.atan2(p.x);
    let rho = (p.x * p.x + p.y * p.y).sqrt();
    let b = WGS84_A * (1.0 - WGS84_F);
    if rho < 1e-9 {
        let alt = p.z.abs() - b;
        return GeoPoint {
            latitude: 90f64.copysign(p.z),
            longitude: 0.0,
            altitude: alt,
        };
    }
    let mut lat = (p.z / (rho * (1.0 - e2))).atan();
    let mut alt = 0.0;
    for _ in 0..10 {
        let slat = lat.sin();
        let n = WGS84_A / (1.0 - e2 * slat * slat).sqrt();
        alt = rho / lat.cos() - n;
        let next = (p.z / (rho * (1.0 - e2 * n / (n + alt)))).atan();
        let done = (next - lat).abs() < 1e-15;
        lat = next;
        if done {
            break;
        }
    }
    GeoPoint {
        latitude: lat.to_degrees(),
        longitude: lon.to_degrees(),
        altitude: alt,
    }
}

/// East-north-up frame tangent to the ellipsoid at `origin`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnuFrame {
    origin: GeoPoint,
    origin_ecef: Vector3<f64>,
    /// Rows are the east, north and up unit vectors in ECEF.
    ecef_to_enu: Matrix3<f64>,
}

impl EnuFrame {
    pub fn new(origin: GeoPoint) -> Self {
        let lat = origin.latitude.to_radians();
        let lon = origin.longitude.to_radians();
        let (slat, clat) = lat.sin_cos();
        let (slon, clon) = lon.sin_cos();
        let ecef_to_enu = Matrix3::new(
            -slon,
            clon,
            0.0,
            -slat * clon,
            -slat * slon,
            clat,
            clat * clon,
            clat * slon,
            slat,
        );
        EnuFrame {
            origin,
            origin_ecef: geodetic_to_ecef(&origin),
            ecef_to_enu,
        }
    }

    pub fn origin(&self) -> &GeoPoint {
        &self.origin
    }

    pub fn enu_of(&self, g: &GeoPoint) -> Vector3<f64> {
        self.ecef_to_enu * (geodetic_to_ecef(g) - self.origin_ecef)
    }

    pub fn geodetic_of(&self, enu: &Vector3<f64>) -> GeoPoint {
        ecef_to_geodetic(&(self.ecef_to_enu.transpose() * enu + self.origin_ecef))
    }
}

pub fn enu_of(frame: &EnuFrame, g: &GeoPoint) -> Vector3<f64> {
    frame.enu_of(g)
}
