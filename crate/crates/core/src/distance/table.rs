//! Client for OSRM-compatible `/table/v1/driving` endpoints.

use std::time::Duration;

use serde::Deserialize;

use super::{DistanceError, ProviderSpec};
use crate::geo::GeoPoint;

#[derive(Debug, Clone, PartialEq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: Vec<u8>,
}

/// Fetches a URL. Errors are transport failures and will be retried.
pub trait Transport: Send + Sync {
    fn get(&self, url: &str) -> Result<HttpResponse, String>;
}

pub struct HttpTransport {
    client: reqwest::blocking::Client,
}

impl HttpTransport {
    pub fn new(timeout_secs: u64) -> Result<Self, DistanceError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(timeout_secs))
            .build()
            .map_err(|e| DistanceError::Spec(format!("cannot build HTTP client: {e}")))?;
        Ok(Self { client })
    }
}

impl Transport for HttpTransport {
    fn get(&self, url: &str) -> Result<HttpResponse, String> {
        let resp = self.client.get(url).send().map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let body = resp.bytes().map_err(|e| e.to_string())?.to_vec();
        Ok(HttpResponse { status, body })
    }
}

/// Degrees with at most six decimals, trailing zeros dropped.
fn coord(v: f64) -> String {
    let s = format!("{v:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    match s {
        "-0" | "" => "0".to_string(),
        s => s.to_string(),
    }
}

fn index_list(range: std::ops::Range<usize>) -> String {
    range.map(|i| i.to_string()).collect::<Vec<_>>().join(";")
}

/// Sources are listed first, then destinations; coordinates are lon-first.
pub fn table_url(base_url: &str, sources: &[GeoPoint], destinations: &[GeoPoint]) -> String {
    let coords = sources
        .iter()
        .chain(destinations)
        .map(|p| format!("{},{}", coord(p.lon()), coord(p.lat())))
        .collect::<Vec<_>>()
        .join(";");
    let s = sources.len();
    format!(
        "{}/table/v1/driving/{}?sources={}&destinations={}&annotations=distance",
        base_url.trim_end_matches('/'),
        coords,
        index_list(0..s),
        index_list(s..s + destinations.len()),
    )
}

#[derive(Deserialize)]
struct TableBody {
    code: Option<String>,
    message: Option<String>,
    distances: Option<Vec<Vec<Option<f64>>>>,
}

/// Decodes a table response into a row-major `rows × cols` block.
///
/// Null cells are collected and reported together as
/// [`DistanceError::Unreachable`].
pub fn parse_table_response(body: &[u8], rows: usize, cols: usize) -> Result<Vec<f64>, DistanceError> {
    let parsed: TableBody =
        serde_json::from_slice(body).map_err(|e| DistanceError::Response(e.to_string()))?;
    if let Some(code) = parsed.code.as_deref() {
        if code != "Ok" {
            return Err(DistanceError::Response(format!(
                "service code {code}: {}",
                parsed.message.as_deref().unwrap_or("")
            )));
        }
    }
    let distances = parsed
        .distances
        .ok_or_else(|| DistanceError::Response("no distances field".into()))?;
    if distances.len() != rows {
        return Err(DistanceError::Response(format!(
            "expected {rows} rows, got {}",
            distances.len()
        )));
    }
    let mut values = Vec::with_capacity(rows * cols);
    let mut unreachable = Vec::new();
    for (r, row) in distances.iter().enumerate() {
        if row.len() != cols {
            return Err(DistanceError::Response(format!(
                "row {r} has {} entries, expected {cols}",
                row.len()
            )));
        }
        for (c, cell) in row.iter().enumerate() {
            match *cell {
                Some(v) if v.is_finite() && v >= 0.0 => values.push(v),
                Some(v) => return Err(DistanceError::InvalidValue { row: r, col: c, value: v }),
                None => {
                    unreachable.push((r, c));
                    values.push(0.0);
                }
            }
        }
    }
    if !unreachable.is_empty() {
        return Err(DistanceError::Unreachable { pairs: unreachable });
    }
    Ok(values)
}

/// One table request, retried with exponential backoff on transport failure only.
pub fn table_request(
    spec: &ProviderSpec,
    transport: &dyn Transport,
    sources: &[GeoPoint],
    destinations: &[GeoPoint],
) -> Result<Vec<f64>, DistanceError> {
    let base = spec
        .base_url
        .as_deref()
        .ok_or_else(|| DistanceError::Spec("table_api requires base_url".into()))?;
    let url = table_url(base, sources, destinations);
    let mut attempt = 0;
    let resp = loop {
        attempt += 1;
        match transport.get(&url) {
            Ok(resp) => break resp,
            Err(message) if attempt >= spec.attempts => {
                return Err(DistanceError::Transport {
                    attempts: attempt,
                    message,
                })
            }
            Err(message) => {
                let wait = spec.retry_base_ms.saturating_mul(1 << (attempt - 1).min(16));
                log::warn!("table request failed ({message}); retrying in {wait} ms");
                std::thread::sleep(Duration::from_millis(wait));
            }
        }
    };
    if resp.status != 200 {
        let body = String::from_utf8_lossy(&resp.body);
        return Err(DistanceError::Http {
            status: resp.status,
            body: body.chars().take(200).collect(),
        });
    }
    parse_table_response(&resp.body, sources.len(), destinations.len())
}
