//! Dense source × destination distance matrices in meters.
//!
//! Two providers fill them: an OSRM-compatible table service, queried in
//! square tiles of at most `chunk_size` per side, and an offline haversine
//! fallback. Finished matrices are cached on disk in the `DMAT1` format
//! (see [`cache`]).

pub mod cache;
pub mod table;

use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{great_circle_with_radius, GeoPoint, EARTH_RADIUS_M};
use crate::matrix::SquareView;

pub use cache::{decode_matrix, encode_matrix, load_matrix, save_matrix, CacheTrailer};
pub use table::{parse_table_response, table_request, table_url, HttpResponse, HttpTransport, Transport};

#[derive(Debug, Error)]
pub enum DistanceError {
    #[error("distance at ({row}, {col}) is {value}; expected a finite nonnegative number")]
    InvalidValue { row: usize, col: usize, value: f64 },
    #[error("diagonal entry {index} is {value}; identical point lists need a zero diagonal")]
    NonZeroDiagonal { index: usize, value: f64 },
    #[error("expected {expected} values, got {actual}")]
    Shape { expected: usize, actual: usize },
    #[error("{}", UnreachableList(.pairs))]
    Unreachable { pairs: Vec<(usize, usize)> },
    #[error("transport failed after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("table service answered HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("malformed table response: {0}")]
    Response(String),
    #[error("invalid provider spec: {0}")]
    Spec(String),
    #[error("source and destination lists must be nonempty")]
    Empty,
    #[error("matrix is {rows}x{cols}; a square matrix is required")]
    NotSquare { rows: usize, cols: usize },
    #[error("cache format error: {0}")]
    Format(String),
    #[error("cache checksum mismatch: stored {stored:08x}, computed {computed:08x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

struct UnreachableList<'a>(&'a [(usize, usize)]);

impl fmt::Display for UnreachableList<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} unreachable pair(s) (row, col):", self.0.len())?;
        for (r, c) in self.0.iter().take(20) {
            write!(f, " ({r}, {c})")?;
        }
        if self.0.len() > 20 {
            write!(f, " ...")?;
        }
        Ok(())
    }
}

/// Row-major distances in meters with the points and provider that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    sources: Vec<GeoPoint>,
    destinations: Vec<GeoPoint>,
    values: Vec<f64>,
    provider_tag: String,
    created_at: DateTime<Utc>,
}

impl DistanceMatrix {
    pub fn new(
        sources: Vec<GeoPoint>,
        destinations: Vec<GeoPoint>,
        values: Vec<f64>,
        provider_tag: impl Into<String>,
    ) -> Result<Self, DistanceError> {
        Self::with_timestamp(sources, destinations, values, provider_tag, Utc::now())
    }

    pub fn with_timestamp(
        sources: Vec<GeoPoint>,
        destinations: Vec<GeoPoint>,
        values: Vec<f64>,
        provider_tag: impl Into<String>,
        created_at: DateTime<Utc>,
    ) -> Result<Self, DistanceError> {
        let cols = destinations.len();
        let expected = sources.len() * cols;
        if values.len() != expected {
            return Err(DistanceError::Shape {
                expected,
                actual: values.len(),
            });
        }
        if let Some(pos) = values.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(DistanceError::InvalidValue {
                row: pos / cols,
                col: pos % cols,
                value: values[pos],
            });
        }
        if sources == destinations {
            for i in 0..sources.len() {
                let v = values[i * cols + i];
                if v != 0.0 {
                    return Err(DistanceError::NonZeroDiagonal { index: i, value: v });
                }
            }
        }
        Ok(Self {
            sources,
            destinations,
            values,
            provider_tag: provider_tag.into(),
            created_at,
        })
    }

    pub fn rows(&self) -> usize {
        self.sources.len()
    }

    pub fn cols(&self) -> usize {
        self.destinations.len()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols() + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        let c = self.cols();
        &self.values[row * c..(row + 1) * c]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn sources(&self) -> &[GeoPoint] {
        &self.sources
    }

    pub fn destinations(&self) -> &[GeoPoint] {
        &self.destinations
    }

    pub fn provider_tag(&self) -> &str {
        &self.provider_tag
    }

    pub fn created_at(&self) -> DateTime<Utc> {
        self.created_at
    }

    pub fn square_view(&self) -> Result<SquareView<'_>, DistanceError> {
        if self.rows() != self.cols() {
            return Err(DistanceError::NotSquare {
                rows: self.rows(),
                cols: self.cols(),
            });
        }
        Ok(SquareView::new(self.rows(), &self.values))
    }

    /// Keeps only the given destination columns, in the given order.
    pub fn select_columns(&self, columns: &[usize]) -> DistanceMatrix {
        let mut values = Vec::with_capacity(self.rows() * columns.len());
        for r in 0..self.rows() {
            let row = self.row(r);
            values.extend(columns.iter().map(|&c| row[c]));
        }
        DistanceMatrix {
            sources: self.sources.clone(),
            destinations: columns.iter().map(|&c| self.destinations[c]).collect(),
            values,
            provider_tag: self.provider_tag.clone(),
            created_at: self.created_at,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    TableApi,
    GreatCircle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderSpec {
    pub kind: ProviderKind,
    pub base_url: Option<String>,
    /// Maximum points per tile side.
    pub chunk_size: usize,
    pub earth_radius: f64,
    /// Concurrent tile requests.
    pub max_in_flight: usize,
    /// Total attempts per tile for transport failures.
    pub attempts: u32,
    pub retry_base_ms: u64,
    pub timeout_secs: u64,
}

impl Default for ProviderSpec {
    fn default() -> Self {
        Self {
            kind: ProviderKind::GreatCircle,
            base_url: None,
            chunk_size: 100,
            earth_radius: EARTH_RADIUS_M,
            max_in_flight: 4,
            attempts: 3,
            retry_base_ms: 500,
            timeout_secs: 60,
        }
    }
}

impl ProviderSpec {
    pub fn great_circle() -> Self {
        Self::default()
    }

    pub fn table_api(base_url: impl Into<String>) -> Self {
        Self {
            kind: ProviderKind::TableApi,
            base_url: Some(base_url.into()),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), DistanceError> {
        if self.chunk_size < 2 {
            return Err(DistanceError::Spec("chunk_size must be at least 2".into()));
        }
        if self.max_in_flight < 1 {
            return Err(DistanceError::Spec("max_in_flight must be at least 1".into()));
        }
        if self.attempts < 1 {
            return Err(DistanceError::Spec("attempts must be at least 1".into()));
        }
        if !(self.earth_radius > 0.0 && self.earth_radius.is_finite()) {
            return Err(DistanceError::Spec("earth_radius must be positive".into()));
        }
        match (self.kind, &self.base_url) {
            (ProviderKind::TableApi, None) => {
                Err(DistanceError::Spec("table_api requires base_url".into()))
            }
            (ProviderKind::GreatCircle, Some(_)) => {
                Err(DistanceError::Spec("base_url is only valid for table_api".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn tag(&self) -> String {
        match self.kind {
            ProviderKind::GreatCircle => format!("great_circle:r={}", self.earth_radius),
            ProviderKind::TableApi => {
                format!("table_api:{}", self.base_url.as_deref().unwrap_or_default())
            }
        }
    }
}

type TileResult = Result<Vec<f64>, DistanceError>;

/// A configured distance source.
pub struct Provider {
    spec: ProviderSpec,
    transport: Option<Box<dyn Transport>>,
}

impl fmt::Debug for Provider {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Provider").field("spec", &self.spec).finish()
    }
}

impl Provider {
    /// Uses a real HTTP client for table_api specs.
    pub fn new(spec: ProviderSpec) -> Result<Self, DistanceError> {
        spec.validate()?;
        let transport: Option<Box<dyn Transport>> = match spec.kind {
            ProviderKind::TableApi => Some(Box::new(HttpTransport::new(spec.timeout_secs)?)),
            ProviderKind::GreatCircle => None,
        };
        Ok(Self { spec, transport })
    }

    pub fn with_transport(
        spec: ProviderSpec,
        transport: Box<dyn Transport>,
    ) -> Result<Self, DistanceError> {
        spec.validate()?;
        Ok(Self {
            spec,
            transport: Some(transport),
        })
    }

    pub fn spec(&self) -> &ProviderSpec {
        &self.spec
    }

    pub fn build_matrix(
        &self,
        sources: &[GeoPoint],
        destinations: &[GeoPoint],
    ) -> Result<DistanceMatrix, DistanceError> {
        if sources.is_empty() || destinations.is_empty() {
            return Err(DistanceError::Empty);
        }
        let values = match self.spec.kind {
            ProviderKind::GreatCircle => {
                let r = self.spec.earth_radius;
                sources
                    .iter()
                    .flat_map(|&s| destinations.iter().map(move |&d| great_circle_with_radius(s, d, r)))
                    .collect()
            }
            ProviderKind::TableApi => {
                let transport = self
                    .transport
                    .as_deref()
                    .ok_or_else(|| DistanceError::Spec("table_api provider has no transport".into()))?;
                let mut values = self.tiled(transport, sources, destinations)?;
                if sources == destinations {
                    let n = sources.len();
                    for i in 0..n {
                        values[i * n + i] = 0.0;
                    }
                }
                values
            }
        };
        DistanceMatrix::new(sources.to_vec(), destinations.to_vec(), values, self.spec.tag())
    }

    fn tiled(
        &self,
        transport: &dyn Transport,
        sources: &[GeoPoint],
        destinations: &[GeoPoint],
    ) -> Result<Vec<f64>, DistanceError> {
        let chunk = self.spec.chunk_size;
        let row_tiles: Vec<_> = (0..sources.len()).step_by(chunk).collect();
        let col_tiles: Vec<_> = (0..destinations.len()).step_by(chunk).collect();
        let tiles: Vec<(usize, usize)> = row_tiles
            .iter()
            .flat_map(|&r| col_tiles.iter().map(move |&c| (r, c)))
            .collect();

        let results: Mutex<Vec<Option<TileResult>>> =
            Mutex::new((0..tiles.len()).map(|_| None).collect());
        let next = AtomicUsize::new(0);
        let workers = self.spec.max_in_flight.min(tiles.len());
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let t = next.fetch_add(1, Ordering::Relaxed);
                    let Some(&(r0, c0)) = tiles.get(t) else { break };
                    let rows = &sources[r0..(r0 + chunk).min(sources.len())];
                    let cols = &destinations[c0..(c0 + chunk).min(destinations.len())];
                    let block = table_request(&self.spec, transport, rows, cols);
                    results.lock().unwrap()[t] = Some(block);
                });
            }
        });

        let ncols = destinations.len();
        let mut values = vec![0.0; sources.len() * ncols];
        let mut unreachable = Vec::new();
        let mut first_error = None;
        for (&(r0, c0), block) in tiles.iter().zip(results.into_inner().unwrap()) {
            let rows = (r0 + chunk).min(sources.len()) - r0;
            let cols = (c0 + chunk).min(destinations.len()) - c0;
            match block.expect("every tile is fetched") {
                Ok(block) => {
                    for r in 0..rows {
                        let dst = (r0 + r) * ncols + c0;
                        values[dst..dst + cols].copy_from_slice(&block[r * cols..(r + 1) * cols]);
                    }
                }
                Err(DistanceError::Unreachable { pairs }) => {
                    unreachable.extend(pairs.into_iter().map(|(r, c)| (r0 + r, c0 + c)));
                }
                Err(e) => {
                    first_error.get_or_insert(e);
                }
            }
        }
        if let Some(e) = first_error {
            return Err(e);
        }
        if !unreachable.is_empty() {
            unreachable.sort_unstable();
            return Err(DistanceError::Unreachable { pairs: unreachable });
        }
        Ok(values)
    }
}

/// Builds a matrix with the provider's default transport.
pub fn build_matrix(
    spec: &ProviderSpec,
    sources: &[GeoPoint],
    destinations: &[GeoPoint],
) -> Result<DistanceMatrix, DistanceError> {
    Provider::new(spec.clone())?.build_matrix(sources, destinations)
}
