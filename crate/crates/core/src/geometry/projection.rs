//! Ellipsoidal Lambert conformal conic projection with two standard parallels
//! (Snyder's formulation), forward and inverse. Output is in kilometers.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use serde::{Deserialize, Serialize};

use super::PlanarPoint;
use crate::error::{Error, Result};

/// Parameters of a two-parallel Lambert conformal conic projection.
///
/// Angles are in degrees, offsets and the semi-major axis in kilometers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProjectionSpec {
    pub lat_1: f64,
    pub lat_2: f64,
    pub lat_0: f64,
    pub lon_0: f64,
    pub false_easting: f64,
    pub false_northing: f64,
    pub semi_major: f64,
    pub flattening: f64,
}

impl ProjectionSpec {
    /// "Lambert II étendu" on the Clarke 1880 (IGN) ellipsoid.
    pub fn lambert_ii_extended() -> Self {
        let a = 6378.2492;
        let b = 6356.515;
        Self {
            lat_1: 45.898_918_964_419,
            lat_2: 47.696_014_502_038,
            lat_0: 46.8,
            lon_0: 2.337_229_166_667,
            false_easting: 600.0,
            false_northing: 2200.0,
            semi_major: a,
            flattening: 1.0 - b / a,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.lat_1,
            self.lat_2,
            self.lat_0,
            self.lon_0,
            self.false_easting,
            self.false_northing,
            self.semi_major,
            self.flattening,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Domain("non-finite projection parameter".into()));
        }
        if self.lat_1.abs() >= 90.0 || self.lat_2.abs() >= 90.0 || self.lat_0.abs() >= 90.0 {
            return Err(Error::Domain("standard parallels and origin must satisfy |lat| < 90".into()));
        }
        if (self.lat_1 + self.lat_2).abs() < 1e-10 {
            return Err(Error::Domain(
                "standard parallels symmetric about the equator do not define a cone".into(),
            ));
        }
        if self.semi_major <= 0.0 || !(0.0..1.0).contains(&self.flattening) {
            return Err(Error::Domain("invalid ellipsoid".into()));
        }
        Ok(())
    }
}

impl Default for ProjectionSpec {
    fn default() -> Self {
        Self::lambert_ii_extended()
    }
}

/// A validated projection with its cone constants precomputed.
#[derive(Debug, Clone, Copy)]
pub struct LambertConformalConic {
    spec: ProjectionSpec,
    e: f64,
    n: f64,
    af: f64,
    rho0: f64,
    lon0: f64,
}

fn m_fn(phi: f64, e: f64) -> f64 {
    let s = phi.sin();
    phi.cos() / (1.0 - e * e * s * s).sqrt()
}

fn t_fn(phi: f64, e: f64) -> f64 {
    let s = phi.sin();
    (FRAC_PI_4 - 0.5 * phi).tan() / ((1.0 - e * s) / (1.0 + e * s)).powf(0.5 * e)
}

impl LambertConformalConic {
    pub fn new(spec: ProjectionSpec) -> Result<Self> {
        spec.validate()?;
        let f = spec.flattening;
        let e = (f * (2.0 - f)).sqrt();
        let (p1, p2, p0) = (spec.lat_1.to_radians(), spec.lat_2.to_radians(), spec.lat_0.to_radians());
        let (m1, m2) = (m_fn(p1, e), m_fn(p2, e));
        let (t1, t2, t0) = (t_fn(p1, e), t_fn(p2, e), t_fn(p0, e));
        let n = if (p1 - p2).abs() < 1e-12 {
            p1.sin()
        } else {
            (m1.ln() - m2.ln()) / (t1.ln() - t2.ln())
        };
        let af = spec.semi_major * m1 / (n * t1.powf(n));
        let rho0 = af * t0.powf(n);
        Ok(Self {
            spec,
            e,
            n,
            af,
            rho0,
            lon0: spec.lon_0.to_radians(),
        })
    }

    pub fn spec(&self) -> &ProjectionSpec {
        &self.spec
    }

    /// Maps (longitude, latitude) in degrees to kilometers.
    pub fn project(&self, lon: f64, lat: f64) -> Result<PlanarPoint> {
        if !lon.is_finite() || !lat.is_finite() {
            return Err(Error::Domain(format!("non-finite coordinate ({lon}, {lat})")));
        }
        if lat.abs() >= 90.0 {
            return Err(Error::Domain(format!("latitude {lat} is at or beyond a pole")));
        }
        let phi = lat.to_radians();
        let rho = self.af * t_fn(phi, self.e).powf(self.n);
        if !rho.is_finite() {
            return Err(Error::Domain(format!("latitude {lat} is outside the cone's domain")));
        }
        let theta = self.n * wrap_pi(lon.to_radians() - self.lon0);
        Ok(PlanarPoint::new(
            self.spec.false_easting + rho * theta.sin(),
            self.spec.false_northing + self.rho0 - rho * theta.cos(),
        ))
    }

    /// Maps kilometers back to (longitude, latitude) in degrees.
    pub fn inverse(&self, p: PlanarPoint) -> Result<(f64, f64)> {
        let x = p.x - self.spec.false_easting;
        let y = self.rho0 - (p.y - self.spec.false_northing);
        let sign = self.n.signum();
        let rho = sign * x.hypot(y);
        if rho == 0.0 {
            return Ok((self.spec.lon_0, 90.0 * sign));
        }
        let theta = (sign * x).atan2(sign * y);
        let t = (rho / self.af).powf(1.0 / self.n);
        let e = self.e;
        let mut phi = FRAC_PI_2 - 2.0 * t.atan();
        for _ in 0..50 {
            let s = phi.sin();
            let next = FRAC_PI_2 - 2.0 * (t * ((1.0 - e * s) / (1.0 + e * s)).powf(0.5 * e)).atan();
            let done = (next - phi).abs() < 1e-15;
            phi = next;
            if done {
                break;
            }
        }
        let lon = wrap_pi(theta / self.n + self.lon0);
        Ok((lon.to_degrees(), phi.to_degrees()))
    }
}

fn wrap_pi(a: f64) -> f64 {
    let mut a = a % (2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    } else if a < -PI {
        a += 2.0 * PI;
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Vincenty's inverse formula on the projection's ellipsoid, in kilometers.
    fn vincenty(a: f64, f: f64, (lon1, lat1): (f64, f64), (lon2, lat2): (f64, f64)) -> f64 {
        let b = a * (1.0 - f);
        let l = (lon2 - lon1).to_radians();
        let u1 = ((1.0 - f) * lat1.to_radians().tan()).atan();
        let u2 = ((1.0 - f) * lat2.to_radians().tan()).atan();
        let (su1, cu1, su2, cu2) = (u1.sin(), u1.cos(), u2.sin(), u2.cos());
        let mut lambda = l;
        let (mut s_sig, mut c_sig, mut sig, mut c2a, mut c2sm);
        loop {
            let (sl, cl) = (lambda.sin(), lambda.cos());
            s_sig = ((cu2 * sl).powi(2) + (cu1 * su2 - su1 * cu2 * cl).powi(2)).sqrt();
            c_sig = su1 * su2 + cu1 * cu2 * cl;
            sig = s_sig.atan2(c_sig);
            let sa = cu1 * cu2 * sl / s_sig;
            c2a = 1.0 - sa * sa;
            c2sm = c_sig - 2.0 * su1 * su2 / c2a;
            let c = f / 16.0 * c2a * (4.0 + f * (4.0 - 3.0 * c2a));
            let prev = lambda;
            lambda = l + (1.0 - c) * f * sa
                * (sig + c * s_sig * (c2sm + c * c_sig * (-1.0 + 2.0 * c2sm * c2sm)));
            if (lambda - prev).abs() < 1e-14 {
                break;
            }
        }
        let u2sq = c2a * (a * a - b * b) / (b * b);
        let aa = 1.0 + u2sq / 16384.0 * (4096.0 + u2sq * (-768.0 + u2sq * (320.0 - 175.0 * u2sq)));
        let bb = u2sq / 1024.0 * (256.0 + u2sq * (-128.0 + u2sq * (74.0 - 47.0 * u2sq)));
        let ds = bb * s_sig
            * (c2sm + bb / 4.0 * (c_sig * (-1.0 + 2.0 * c2sm * c2sm)
                - bb / 6.0 * c2sm * (-3.0 + 4.0 * s_sig * s_sig) * (-3.0 + 4.0 * c2sm * c2sm)));
        b * aa * (sig - ds)
    }

    #[test]
    fn origin_maps_to_false_origin() {
        let spec = ProjectionSpec::default();
        let lcc = LambertConformalConic::new(spec).unwrap();
        let p = lcc.project(spec.lon_0, spec.lat_0).unwrap();
        assert!((p.x - spec.false_easting).abs() < 1e-9);
        assert!((p.y - spec.false_northing).abs() < 1e-9);
    }

    #[test]
    fn round_trip_over_france() {
        let lcc = LambertConformalConic::new(ProjectionSpec::default()).unwrap();
        for i in 0..10 {
            for j in 0..10 {
                let lon = -5.0 + 13.0 * i as f64 / 9.0;
                let lat = 41.0 + 10.0 * j as f64 / 9.0;
                let p = lcc.project(lon, lat).unwrap();
                let (lon2, lat2) = lcc.inverse(p).unwrap();
                assert!((lon - lon2).abs() < 1e-9, "{lon} {lon2}");
                assert!((lat - lat2).abs() < 1e-9, "{lat} {lat2}");
            }
        }
    }

    #[test]
    fn one_degree_of_longitude_matches_geodesic() {
        let spec = ProjectionSpec::default();
        let lcc = LambertConformalConic::new(spec).unwrap();
        let a = (spec.lon_0 - 0.5, spec.lat_0);
        let b = (spec.lon_0 + 0.5, spec.lat_0);
        let planar = super::super::distance(lcc.project(a.0, a.1).unwrap(), lcc.project(b.0, b.1).unwrap());
        let geodesic = vincenty(spec.semi_major, spec.flattening, a, b);
        assert!(((planar - geodesic) / geodesic).abs() < 0.005, "{planar} vs {geodesic}");
    }

    #[test]
    fn poles_and_bad_specs_are_domain_errors() {
        let lcc = LambertConformalConic::new(ProjectionSpec::default()).unwrap();
        assert!(matches!(lcc.project(0.0, 90.0), Err(Error::Domain(_))));
        assert!(matches!(lcc.project(0.0, -95.0), Err(Error::Domain(_))));
        let bad = ProjectionSpec {
            lat_1: 30.0,
            lat_2: -30.0,
            ..ProjectionSpec::default()
        };
        assert!(LambertConformalConic::new(bad).is_err());
    }

    #[test]
    fn tangent_cone_is_supported() {
        let spec = ProjectionSpec {
            lat_1: 46.8,
            lat_2: 46.8,
            ..ProjectionSpec::default()
        };
        let lcc = LambertConformalConic::new(spec).unwrap();
        let p = lcc.project(4.0, 44.0).unwrap();
        let (lon, lat) = lcc.inverse(p).unwrap();
        assert!((lon - 4.0).abs() < 1e-9 && (lat - 44.0).abs() < 1e-9);
    }
}
