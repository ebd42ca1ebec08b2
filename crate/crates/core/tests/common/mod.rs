#![allow(dead_code)]

use std::sync::atomic::{AtomicUsize, Ordering};

use foodloc::distance::{HttpResponse, Transport};
use foodloc::geo::{great_circle, GeoPoint};
use foodloc::matrix::SquareMatrix;
use rand_xoshiro::rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

pub fn p(lat: f64, lon: f64) -> GeoPoint {
    GeoPoint::new(lat, lon).unwrap()
}

/// Table service stand-in whose metric is `scale` × great-circle.
pub struct MockTable {
    pub scale: f64,
    pub requests: AtomicUsize,
}

impl MockTable {
    pub fn new(scale: f64) -> Self {
        Self {
            scale,
            requests: AtomicUsize::new(0),
        }
    }
}

fn indices(query: &str, key: &str) -> Vec<usize> {
    let v = query
        .split('&')
        .find_map(|kv| kv.strip_prefix(&format!("{key}=")))
        .unwrap();
    v.split(';').map(|i| i.parse().unwrap()).collect()
}

impl Transport for MockTable {
    fn get(&self, url: &str) -> Result<HttpResponse, String> {
        self.requests.fetch_add(1, Ordering::Relaxed);
        let rest = url.split("/table/v1/driving/").nth(1).unwrap();
        let (coords, query) = rest.split_once('?').unwrap();
        let pts: Vec<GeoPoint> = coords
            .split(';')
            .map(|c| {
                let (lon, lat) = c.split_once(',').unwrap();
                p(lat.parse().unwrap(), lon.parse().unwrap())
            })
            .collect();
        let src = indices(query, "sources");
        let dst = indices(query, "destinations");
        let distances: Vec<Vec<f64>> = src
            .iter()
            .map(|&s| dst.iter().map(|&d| self.scale * great_circle(pts[s], pts[d])).collect())
            .collect();
        let body = serde_json::json!({"code": "Ok", "distances": distances});
        Ok(HttpResponse {
            status: 200,
            body: serde_json::to_vec(&body).unwrap(),
        })
    }
}

pub fn rng(seed: u64) -> Xoshiro256PlusPlus {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

pub fn unit(r: &mut Xoshiro256PlusPlus) -> f64 {
    (r.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

pub fn below(r: &mut Xoshiro256PlusPlus, n: usize) -> usize {
    (r.next_u64() % n as u64) as usize
}

/// Euclidean distances between `n` random points in a 10 km square.
pub fn random_plane(n: usize, r: &mut Xoshiro256PlusPlus) -> SquareMatrix {
    let pts: Vec<(f64, f64)> = (0..n).map(|_| (unit(r) * 10_000.0, unit(r) * 10_000.0)).collect();
    SquareMatrix::from_fn(n, |i, j| {
        let (a, b) = (pts[i], pts[j]);
        ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
    })
}

pub fn objective_of(m: &SquareMatrix, medoids: &[usize], w: &[f64]) -> f64 {
    foodloc::kmedoids::assign(m.view(), medoids, w).1
}

/// Smallest objective reachable from `medoids` by one swap.
pub fn best_single_swap(m: &SquareMatrix, medoids: &[usize], w: &[f64]) -> f64 {
    let mut best = f64::INFINITY;
    for slot in 0..medoids.len() {
        for cand in 0..m.len() {
            if medoids.contains(&cand) {
                continue;
            }
            let mut trial = medoids.to_vec();
            trial[slot] = cand;
            best = best.min(objective_of(m, &trial, w));
        }
    }
    best
}
