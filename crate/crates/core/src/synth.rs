//! Deterministic synthetic household blobs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{GeoPoint, EARTH_RADIUS_M};
use crate::ingest::Household;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid synthetic parameters: {0}")]
    Params(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthParams {
    pub clusters: usize,
    pub points_per_cluster: usize,
    /// Standard deviation of each blob, meters.
    pub spread_m: f64,
    /// Blob centers as `[lat, lon]`; drawn inside `bbox` when absent.
    pub centers: Option<Vec<[f64; 2]>>,
    /// `[min_lat, min_lon, max_lat, max_lon]`.
    pub bbox: [f64; 4],
    pub income_mu: f64,
    pub income_sigma: f64,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            clusters: 3,
            points_per_cluster: 100,
            spread_m: 2_000.0,
            centers: None,
            bbox: [33.8, -118.5, 34.3, -117.9],
            income_mu: 10.2,
            income_sigma: 0.5,
            seed: 0,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::Params(m.into()));
        if self.clusters == 0 || self.points_per_cluster == 0 {
            return bad("clusters and points_per_cluster must be positive");
        }
        if !(self.spread_m.is_finite() && self.spread_m >= 0.0) {
            return bad("spread_m must be a nonnegative number");
        }
        if !(self.income_mu.is_finite() && self.income_sigma.is_finite() && self.income_sigma >= 0.0) {
            return bad("income parameters must be finite with sigma >= 0");
        }
        if let Some(c) = &self.centers {
            if c.len() != self.clusters {
                return bad("centers must list one point per cluster");
            }
            for &[lat, lon] in c {
                GeoPoint::new(lat, lon).map_err(|e| SynthError::Params(e.to_string()))?;
            }
        } else {
            let [a, b, c, d] = self.bbox;
            if !(a < c && b < d) || GeoPoint::new(a, b).is_err() || GeoPoint::new(c, d).is_err() {
                return bad("bbox must be [min_lat, min_lon, max_lat, max_lon] with min < max");
            }
        }
        Ok(())
    }
}

fn offset(center: GeoPoint, north_m: f64, east_m: f64) -> GeoPoint {
    let lat = (center.lat() + (north_m / EARTH_RADIUS_M).to_degrees()).clamp(-89.9, 89.9);
    let scale = EARTH_RADIUS_M * lat.to_radians().cos();
    let lon = center.lon() + (east_m / scale).to_degrees();
    let lon = (lon + 540.0).rem_euclid(360.0) - 180.0;
    GeoPoint::new(lat, lon).expect("clamped coordinates are valid")
}

/// `clusters × points_per_cluster` households tagged `blob-<i>`, with ids
/// `s<n>` and log-normal incomes rounded to whole dollars (at least 1).
pub fn generate(params: &SynthParams) -> Result<Vec<Household>, SynthError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let centers: Vec<GeoPoint> = match &params.centers {
        Some(c) => c.iter().map(|&[a, b]| GeoPoint::new(a, b).unwrap()).collect(),
        None => {
            let [a, b, c, d] = params.bbox;
            (0..params.clusters)
                .map(|_| GeoPoint::new(rng.random_range(a..c), rng.random_range(b..d)).unwrap())
                .collect()
        }
    };
    let jitter = Normal::new(0.0, params.spread_m).map_err(|e| SynthError::Params(e.to_string()))?;
    let income =
        LogNormal::new(params.income_mu, params.income_sigma).map_err(|e| SynthError::Params(e.to_string()))?;

    let mut out = Vec::with_capacity(params.clusters * params.points_per_cluster);
    for (c, &center) in centers.iter().enumerate() {
        for _ in 0..params.points_per_cluster {
            let loc = offset(center, jitter.sample(&mut rng), jitter.sample(&mut rng));
            let inc = income.sample(&mut rng).round().max(1.0);
            let mut h = Household::new(format!("s{}", out.len()), loc).with_income(inc);
            h.city = Some(format!("blob-{c}"));
            out.push(h);
        }
    }
    Ok(out)
}
