//! Household loading and the preprocessing recipe: income filter, seeded
//! sampling, income-derived weights, and weighting-by-duplication.

use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{GeoError, GeoPoint};
use crate::rng::{partial_shuffle, SplitMix64};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("dataset not found: {0}")]
    MissingFile(PathBuf),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("header has no column named {0:?}")]
    MissingColumn(String),
    #[error("line {line}: {message}")]
    Row { line: u64, message: String },
    #[error("line {line}: {source}")]
    Coordinate {
        line: u64,
        #[source]
        source: GeoError,
    },
    #[error("income {0} is not positive; cannot derive a weight")]
    DegenerateIncome(f64),
    #[error("sample size must be at least 1")]
    SampleSize,
    #[error("invalid ingest configuration: {0}")]
    Config(String),
}

/// A geolocated demand point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Household {
    pub id: String,
    pub location: GeoPoint,
    pub income: Option<f64>,
    pub weight: f64,
    pub origin_id: String,
    pub city: Option<String>,
}

impl Household {
    pub fn new(id: impl Into<String>, location: GeoPoint) -> Self {
        let id = id.into();
        Self {
            origin_id: id.clone(),
            id,
            location,
            income: None,
            weight: 1.0,
            city: None,
        }
    }

    pub fn with_income(mut self, income: f64) -> Self {
        self.income = Some(income);
        self
    }
}

/// Maps dataset columns onto household fields. Only `lat` and `lon` are required.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ColumnSchema {
    pub id: Option<String>,
    pub lat: String,
    pub lon: String,
    pub income: Option<String>,
    pub weight: Option<String>,
    pub origin_id: Option<String>,
    pub city: Option<String>,
}

impl Default for ColumnSchema {
    fn default() -> Self {
        Self {
            id: Some("id".into()),
            lat: "lat".into(),
            lon: "lon".into(),
            income: Some("income".into()),
            weight: None,
            origin_id: None,
            city: None,
        }
    }
}

impl ColumnSchema {
    /// Layout written by [`write_households`].
    pub fn prepared() -> Self {
        Self {
            id: Some("id".into()),
            lat: "lat".into(),
            lon: "lon".into(),
            income: Some("income".into()),
            weight: Some("weight".into()),
            origin_id: Some("origin_id".into()),
            city: Some("city".into()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightingMode {
    None,
    Duplicate,
    Direct,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SampleSize {
    Count(usize),
    #[serde(with = "all_literal")]
    All,
}

mod all_literal {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str("all")
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<(), D::Error> {
        match String::deserialize(d)?.as_str() {
            "all" => Ok(()),
            other => Err(D::Error::custom(format!("expected \"all\", got {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestConfig {
    /// Households earning more than this are dropped. `None` disables the filter.
    pub income_cap: Option<f64>,
    pub sample_size: SampleSize,
    pub seed: u64,
    pub weighting_mode: WeightingMode,
    pub weight_cap: f64,
    pub weight_numerator: f64,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            income_cap: Some(40_000.0),
            sample_size: SampleSize::All,
            seed: 0,
            weighting_mode: WeightingMode::None,
            weight_cap: 50.0,
            weight_numerator: 5.0,
        }
    }
}

impl IngestConfig {
    pub fn validate(&self) -> Result<(), IngestError> {
        if self.sample_size == SampleSize::Count(0) {
            return Err(IngestError::SampleSize);
        }
        if !(self.weight_cap >= 1.25) {
            return Err(IngestError::Config(format!(
                "weight_cap {} must be at least 1.25",
                self.weight_cap
            )));
        }
        if !(self.weight_numerator > 0.0 && self.weight_numerator.is_finite()) {
            return Err(IngestError::Config("weight_numerator must be positive".into()));
        }
        if let Some(cap) = self.income_cap {
            if !(cap >= 0.0) {
                return Err(IngestError::Config("income_cap must be nonnegative".into()));
            }
        }
        Ok(())
    }

    pub fn formula(&self) -> WeightFormula {
        WeightFormula {
            numerator: self.weight_numerator,
            cap: self.weight_cap,
        }
    }
}

/// `w = numerator / (income / 10_000)`, clamped to `cap`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightFormula {
    pub numerator: f64,
    pub cap: f64,
}

impl Default for WeightFormula {
    fn default() -> Self {
        Self {
            numerator: 5.0,
            cap: 50.0,
        }
    }
}

impl WeightFormula {
    pub fn weight(&self, income: f64) -> Result<f64, IngestError> {
        if !(income > 0.0) || !income.is_finite() {
            return Err(IngestError::DegenerateIncome(income));
        }
        Ok((self.numerator / (income / 10_000.0)).min(self.cap))
    }
}

/// Weight for an annual income in dollars under the default formula.
pub fn compute_weight(income: f64) -> Result<f64, IngestError> {
    WeightFormula::default().weight(income)
}

pub fn load_households(path: &Path, schema: &ColumnSchema) -> Result<Vec<Household>, IngestError> {
    let file = File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => IngestError::MissingFile(path.to_path_buf()),
        _ => IngestError::Io {
            path: path.to_path_buf(),
            source: e,
        },
    })?;
    parse_households(file, schema)
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize, IngestError> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| IngestError::MissingColumn(name.to_string()))
}

fn optional_column(
    headers: &csv::StringRecord,
    name: &Option<String>,
) -> Result<Option<usize>, IngestError> {
    name.as_deref().map(|n| column(headers, n)).transpose()
}

fn parse_real(field: &str, what: &str, line: u64) -> Result<f64, IngestError> {
    field.trim().parse::<f64>().map_err(|_| IngestError::Row {
        line,
        message: format!("{what} {field:?} is not a number"),
    })
}

/// Parses a CSV stream with a header row. Lines starting with `#` are comments.
pub fn parse_households<R: Read>(
    reader: R,
    schema: &ColumnSchema,
) -> Result<Vec<Household>, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .flexible(false)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| IngestError::Row {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let lat_col = column(&headers, &schema.lat)?;
    let lon_col = column(&headers, &schema.lon)?;
    let id_col = optional_column(&headers, &schema.id)?;
    let income_col = optional_column(&headers, &schema.income)?;
    let weight_col = optional_column(&headers, &schema.weight)?;
    let origin_col = optional_column(&headers, &schema.origin_id)?;
    let city_col = optional_column(&headers, &schema.city)?;

    let mut out = Vec::new();
    for (index, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| IngestError::Row {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let lat = parse_real(&record[lat_col], "latitude", line)?;
        let lon = parse_real(&record[lon_col], "longitude", line)?;
        let location =
            GeoPoint::new(lat, lon).map_err(|source| IngestError::Coordinate { line, source })?;
        let id = match id_col {
            Some(c) => record[c].trim().to_string(),
            None => index.to_string(),
        };
        if id.is_empty() {
            return Err(IngestError::Row {
                line,
                message: "empty id".into(),
            });
        }
        let income = match income_col.map(|c| record[c].trim()) {
            None | Some("") => None,
            Some(field) => {
                let v = parse_real(field, "income", line)?;
                if !(v >= 0.0) || !v.is_finite() {
                    return Err(IngestError::Row {
                        line,
                        message: format!("income {v} must be nonnegative"),
                    });
                }
                Some(v)
            }
        };
        let weight = match weight_col.map(|c| record[c].trim()) {
            None | Some("") => 1.0,
            Some(field) => {
                let w = parse_real(field, "weight", line)?;
                if !(w > 0.0) || !w.is_finite() {
                    return Err(IngestError::Row {
                        line,
                        message: format!("weight {w} must be positive"),
                    });
                }
                w
            }
        };
        let origin_id = match origin_col.map(|c| record[c].trim()) {
            None | Some("") => id.clone(),
            Some(o) => o.to_string(),
        };
        let city = city_col
            .map(|c| record[c].trim())
            .filter(|c| !c.is_empty())
            .map(str::to_string);
        out.push(Household {
            id,
            location,
            income,
            weight,
            origin_id,
            city,
        });
    }
    Ok(out)
}

/// Writes households in the prepared layout, preceded by `#` comment lines.
pub fn write_households<W: Write>(
    writer: W,
    households: &[Household],
    comments: &[String],
) -> std::io::Result<()> {
    let mut writer = writer;
    for c in comments {
        writeln!(writer, "# {c}")?;
    }
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["id", "lat", "lon", "income", "weight", "origin_id", "city"])?;
    for h in households {
        w.write_record([
            h.id.clone(),
            h.location.lat().to_string(),
            h.location.lon().to_string(),
            h.income.map(|i| i.to_string()).unwrap_or_default(),
            h.weight.to_string(),
            h.origin_id.clone(),
            h.city.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()
}

/// Keeps households with income at or below `cap`, and those with no income.
pub fn filter_by_income(households: &[Household], cap: f64) -> Vec<Household> {
    households
        .iter()
        .filter(|h| h.income.is_none_or(|i| i <= cap))
        .cloned()
        .collect()
}

/// Uniform `n`-subset via SplitMix64-driven partial Fisher–Yates, in selection order.
pub fn sample(households: &[Household], n: usize, seed: u64) -> Result<Vec<Household>, IngestError> {
    if n < 1 {
        return Err(IngestError::SampleSize);
    }
    if n >= households.len() {
        return Ok(households.to_vec());
    }
    let mut idx: Vec<usize> = (0..households.len()).collect();
    let mut rng = SplitMix64::new(seed);
    partial_shuffle(&mut idx, n, &mut rng);
    Ok(idx[..n].iter().map(|&i| households[i].clone()).collect())
}

/// Sets each weight from income; households without income keep weight 1.0.
pub fn apply_weights(
    households: &[Household],
    formula: WeightFormula,
) -> Result<Vec<Household>, IngestError> {
    households
        .iter()
        .map(|h| {
            let weight = match h.income {
                Some(i) => formula.weight(i)?,
                None => 1.0,
            };
            Ok(Household {
                weight,
                ..h.clone()
            })
        })
        .collect()
}

/// Number of copies a weight turns into: nearest integer, halves away from zero, at least one.
pub fn copies_for(weight: f64) -> usize {
    (weight.round() as usize).max(1)
}

/// Repeats household `i` `copies_for(w_i)` times, each copy with weight 1.0.
pub fn duplicate_by_weight(households: &[Household]) -> Vec<Household> {
    let total: usize = households.iter().map(|h| copies_for(h.weight)).sum();
    let mut out = Vec::with_capacity(total);
    for h in households {
        for j in 0..copies_for(h.weight) {
            let id = if j == 0 {
                h.id.clone()
            } else {
                format!("{}#{j}", h.id)
            };
            out.push(Household {
                id,
                weight: 1.0,
                origin_id: h.origin_id.clone(),
                ..h.clone()
            });
        }
    }
    out
}

/// Runs filter, sample, weight and (optionally) duplication in that order.
pub fn prepare(households: &[Household], config: &IngestConfig) -> Result<Vec<Household>, IngestError> {
    config.validate()?;
    let filtered = match config.income_cap {
        Some(cap) => filter_by_income(households, cap),
        None => households.to_vec(),
    };
    let sampled = match config.sample_size {
        SampleSize::All => filtered,
        SampleSize::Count(n) => sample(&filtered, n, config.seed)?,
    };
    match config.weighting_mode {
        WeightingMode::None => Ok(sampled),
        WeightingMode::Direct => apply_weights(&sampled, config.formula()),
        WeightingMode::Duplicate => Ok(duplicate_by_weight(&apply_weights(
            &sampled,
            config.formula(),
        )?)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn hh(id: &str, income: Option<f64>) -> Household {
        let h = Household::new(id, GeoPoint::new(40.0, -86.0).unwrap());
        match income {
            Some(i) => h.with_income(i),
            None => h,
        }
    }

    fn ids(v: &[Household]) -> Vec<&str> {
        v.iter().map(|h| h.id.as_str()).collect()
    }

    #[test]
    fn loads_rows_in_order() {
        let csv = "id,lat,lon,income\na,40.1,-86.2,30000\nb,40.2,-86.3,\nc,40.3,-86.4,41000\n";
        let v = parse_households(csv.as_bytes(), &ColumnSchema::default()).unwrap();
        assert_eq!(ids(&v), ["a", "b", "c"]);
        assert_eq!(v[0].income, Some(30000.0));
        assert_eq!(v[1].income, None);
        assert!(v.iter().all(|h| h.weight == 1.0 && h.origin_id == h.id));
    }

    #[test]
    fn latitude_out_of_range_names_the_line() {
        let csv = "id,lat,lon\na,40.1,-86.2\nb,95.0,-86.3\n";
        let schema = ColumnSchema {
            income: None,
            ..Default::default()
        };
        match parse_households(csv.as_bytes(), &schema) {
            Err(IngestError::Coordinate { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unparseable_row_reports_line() {
        let csv = "id,lat,lon,income\na,40.1,-86.2,1\nb,forty,-86.3,1\n";
        let err = parse_households(csv.as_bytes(), &ColumnSchema::default()).unwrap_err();
        assert!(matches!(err, IngestError::Row { line: 3, .. }), "{err}");
    }

    #[test]
    fn missing_column_and_file() {
        let err = parse_households("x,y\n1,2\n".as_bytes(), &ColumnSchema::default()).unwrap_err();
        assert!(matches!(err, IngestError::MissingColumn(ref c) if c == "lat"));
        let err = load_households(Path::new("/nonexistent/x.csv"), &ColumnSchema::default())
            .unwrap_err();
        assert!(matches!(err, IngestError::MissingFile(_)));
    }

    #[test]
    fn custom_schema_without_id_uses_row_index() {
        let csv = "Y,X,MedInc\n34.0,-118.2,25000\n34.1,-118.3,52000\n";
        let schema = ColumnSchema {
            id: None,
            lat: "Y".into(),
            lon: "X".into(),
            income: Some("MedInc".into()),
            ..Default::default()
        };
        let v = parse_households(csv.as_bytes(), &schema).unwrap();
        assert_eq!(ids(&v), ["0", "1"]);
        assert_eq!(v[1].income, Some(52000.0));
    }

    #[test]
    fn filter_keeps_boundary() {
        let v = vec![
            hh("1", Some(30000.0)),
            hh("2", Some(45000.0)),
            hh("3", Some(40000.0)),
        ];
        assert_eq!(ids(&filter_by_income(&v, 40000.0)), ["1", "3"]);
        let none = vec![hh("1", None), hh("2", None)];
        assert_eq!(filter_by_income(&none, 40000.0), none);
    }

    #[test]
    fn weight_examples() {
        assert_eq!(compute_weight(40000.0).unwrap(), 1.25);
        assert_eq!(compute_weight(10000.0).unwrap(), 5.0);
        assert_eq!(compute_weight(25000.0).unwrap(), 2.0);
        assert_eq!(compute_weight(1.0).unwrap(), 50.0);
        assert!(matches!(compute_weight(0.0), Err(IngestError::DegenerateIncome(_))));
        assert!(compute_weight(-5.0).is_err());
    }

    #[test]
    fn duplication_rounds_half_away() {
        let mut a = hh("a", None);
        a.weight = 1.25;
        let mut b = hh("b", None);
        b.weight = 1.5;
        assert_eq!(duplicate_by_weight(&[a.clone()]).len(), 1);
        assert_eq!(duplicate_by_weight(&[b.clone()]).len(), 2);

        let mut c = hh("c", None);
        c.weight = 2.0;
        let mut d = hh("d", None);
        d.weight = 4.6;
        let out = duplicate_by_weight(&[a, c, d]);
        assert_eq!(out.len(), 8);
        assert_eq!(ids(&out), ["a", "c", "c#1", "d", "d#1", "d#2", "d#3", "d#4"]);
        assert!(out.iter().all(|h| h.weight == 1.0));
        assert!(out[3..].iter().all(|h| h.origin_id == "d"));
    }

    #[test]
    fn sample_identity_and_error() {
        let v: Vec<_> = (0..5).map(|i| hh(&i.to_string(), None)).collect();
        assert_eq!(sample(&v, 5, 1).unwrap(), v);
        assert_eq!(sample(&v, 9, 1).unwrap(), v);
        assert!(matches!(sample(&v, 0, 1), Err(IngestError::SampleSize)));
    }

    #[test]
    fn sample_golden() {
        let v: Vec<_> = (0..10).map(|i| hh(&i.to_string(), None)).collect();
        let s = sample(&v, 3, 42).unwrap();
        assert_eq!(ids(&s), GOLDEN_SAMPLE_10_3_42);
    }

    // SplitMix64(42) driving three Fisher–Yates steps over 0..10, traced by hand.
    const GOLDEN_SAMPLE_10_3_42: [&str; 3] = ["7", "2", "4"];

    #[test]
    fn config_validation() {
        let mut c = IngestConfig::default();
        assert!(c.validate().is_ok());
        c.sample_size = SampleSize::Count(0);
        assert!(c.validate().is_err());
        c.sample_size = SampleSize::All;
        c.weight_cap = 1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn sample_size_json() {
        let c: IngestConfig = serde_json::from_str(r#"{"sample_size":"all"}"#).unwrap();
        assert_eq!(c.sample_size, SampleSize::All);
        let c: IngestConfig = serde_json::from_str(r#"{"sample_size":12}"#).unwrap();
        assert_eq!(c.sample_size, SampleSize::Count(12));
        assert!(serde_json::from_str::<IngestConfig>(r#"{"sample_size":"some"}"#).is_err());
    }

    proptest! {
        #[test]
        fn filter_is_idempotent(incomes in prop::collection::vec(prop::option::of(0.0f64..100_000.0), 0..40),
                                cap in 0.0f64..100_000.0) {
            let v: Vec<_> = incomes.iter().enumerate().map(|(i, inc)| hh(&i.to_string(), *inc)).collect();
            let once = filter_by_income(&v, cap);
            prop_assert_eq!(filter_by_income(&once, cap), once);
        }

        #[test]
        fn sample_is_deterministic_subset(len in 1usize..60, n in 1usize..80, seed: u64) {
            let v: Vec<_> = (0..len).map(|i| hh(&i.to_string(), None)).collect();
            let a = sample(&v, n, seed).unwrap();
            prop_assert_eq!(&a, &sample(&v, n, seed).unwrap());
            prop_assert_eq!(a.len(), n.min(len));
            let mut seen = std::collections::HashSet::new();
            for h in &a {
                prop_assert!(seen.insert(h.id.clone()));
                prop_assert!(v.contains(h));
            }
        }

        #[test]
        fn low_income_weight_at_least_bound(income in 1e-3f64..=40_000.0) {
            prop_assert!(compute_weight(income).unwrap() >= 1.25);
        }

        #[test]
        fn duplicated_length(weights in prop::collection::vec(0.01f64..20.0, 0..30)) {
            let v: Vec<_> = weights.iter().enumerate().map(|(i, w)| {
                let mut h = hh(&i.to_string(), None);
                h.weight = *w;
                h
            }).collect();
            let expected: usize = weights.iter().map(|w| (w.round() as usize).max(1)).sum();
            prop_assert_eq!(duplicate_by_weight(&v).len(), expected);
        }
    }

    #[test]
    fn unit_weights_duplicate_to_identity() {
        let v: Vec<_> = (0..4).map(|i| hh(&i.to_string(), Some(1.0))).collect();
        assert_eq!(duplicate_by_weight(&v), v);
    }
}
