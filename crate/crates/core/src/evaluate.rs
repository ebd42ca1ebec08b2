//! Candidate-versus-baseline comparison: household-to-nearest-facility
//! distances, savings, and the pantry-to-bank penalty.
//!
//! All internal arithmetic is in meters; reports are in miles
//! (1 mi = 1609.344 m). Sums run in index order with compensated summation.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::distance::{DistanceError, DistanceMatrix, Provider};
use crate::geo::{GeoError, GeoPoint, METERS_PER_MILE};
use crate::hierarchy::{pantry_bank_distances, PantryBankDistances, PlacementPlan};
use crate::ingest::Household;
use crate::matrix::SquareView;
use crate::numeric::compensated_sum;

#[derive(Debug, Error)]
pub enum EvaluateError {
    #[error(transparent)]
    Distance(#[from] DistanceError),
    #[error("facility file not found: {0}")]
    MissingFile(PathBuf),
    #[error("facility file {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("facility file line {line}: {message}")]
    Row { line: u64, message: String },
    #[error("facility file line {line}: {source}")]
    Coordinate {
        line: u64,
        #[source]
        source: GeoError,
    },
    #[error("facility set {0:?} is empty")]
    EmptySet(String),
    #[error("no households to evaluate")]
    NoHouseholds,
    #[error("matrix has {rows} rows but there are {households} households")]
    RowMismatch { rows: usize, households: usize },
    #[error("pantry {pantry:?} names unknown bank {bank:?}")]
    UnknownBank { pantry: String, bank: String },
}

pub fn meters_to_miles(m: f64) -> f64 {
    m / METERS_PER_MILE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Facility {
    pub id: String,
    pub location: GeoPoint,
    pub city: Option<String>,
    /// For pantries: the bank that supplies it, when known.
    pub bank_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FacilitySet {
    pub label: String,
    pub facilities: Vec<Facility>,
}

impl FacilitySet {
    pub fn new(label: impl Into<String>, facilities: Vec<Facility>) -> Result<Self, EvaluateError> {
        let label = label.into();
        if facilities.is_empty() {
            return Err(EvaluateError::EmptySet(label));
        }
        Ok(Self { label, facilities })
    }

    pub fn points(&self) -> Vec<GeoPoint> {
        self.facilities.iter().map(|f| f.location).collect()
    }

    /// Facilities at the given household sites, ids taken from the households.
    pub fn from_households(
        label: impl Into<String>,
        households: &[Household],
        indices: &[usize],
    ) -> Result<Self, EvaluateError> {
        Self::new(
            label,
            indices
                .iter()
                .map(|&i| Facility {
                    id: households[i].id.clone(),
                    location: households[i].location,
                    city: households[i].city.clone(),
                    bank_id: None,
                })
                .collect(),
        )
    }
}

/// Reads `id,lat,lon[,city][,bank_id]` rows (id optional; `#` lines are comments).
pub fn parse_facilities<R: Read>(label: &str, reader: R) -> Result<FacilitySet, EvaluateError> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| EvaluateError::Row {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let (lat_col, lon_col) = match (col("lat"), col("lon")) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            return Err(EvaluateError::Row {
                line: 1,
                message: "header needs lat and lon columns".into(),
            })
        }
    };
    let (id_col, city_col, bank_col) = (col("id"), col("city"), col("bank_id"));
    let mut facilities = Vec::new();
    for (index, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| EvaluateError::Row {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let num = |c: usize, what: &str| {
            record[c].trim().parse::<f64>().map_err(|_| EvaluateError::Row {
                line,
                message: format!("{what} {:?} is not a number", &record[c]),
            })
        };
        let location = GeoPoint::new(num(lat_col, "latitude")?, num(lon_col, "longitude")?)
            .map_err(|source| EvaluateError::Coordinate { line, source })?;
        let text = |c: Option<usize>| {
            c.map(|c| record[c].trim().to_string())
                .filter(|s| !s.is_empty())
        };
        facilities.push(Facility {
            id: text(id_col).unwrap_or_else(|| format!("{label}-{index}")),
            location,
            city: text(city_col),
            bank_id: text(bank_col),
        });
    }
    FacilitySet::new(label, facilities)
}

pub fn load_facilities(label: &str, path: &Path) -> Result<FacilitySet, EvaluateError> {
    let file = File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => EvaluateError::MissingFile(path.to_path_buf()),
        _ => EvaluateError::Io {
            path: path.to_path_buf(),
            source: e,
        },
    })?;
    parse_facilities(label, file)
}

pub fn write_facilities<W: Write>(writer: W, set: &FacilitySet) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["id", "lat", "lon", "city", "bank_id"])?;
    for f in &set.facilities {
        w.write_record([
            f.id.clone(),
            f.location.lat().to_string(),
            f.location.lon().to_string(),
            f.city.clone().unwrap_or_default(),
            f.bank_id.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    /// Every row counts once; weighting comes from duplicated rows.
    #[default]
    Duplicated,
    /// Rows are weighted by `Household::weight`.
    Direct,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NearestStats {
    /// Meters from each household to its nearest facility.
    pub per_household: Vec<f64>,
    /// Column index of that facility (lowest index on ties).
    pub nearest: Vec<usize>,
    pub total: f64,
    pub mean: f64,
}

fn row_minima(m: &DistanceMatrix) -> (Vec<f64>, Vec<usize>) {
    (0..m.rows())
        .map(|r| {
            let row = m.row(r);
            let mut best = 0;
            for c in 1..row.len() {
                if row[c] < row[best] {
                    best = c;
                }
            }
            (row[best], best)
        })
        .unzip()
}

/// Unweighted stats over the matrix rows (households × facilities).
pub fn nearest_facility_stats(m: &DistanceMatrix) -> NearestStats {
    let (per_household, nearest) = row_minima(m);
    let total = compensated_sum(per_household.iter().copied());
    let mean = total / per_household.len().max(1) as f64;
    NearestStats {
        per_household,
        nearest,
        total,
        mean,
    }
}

/// Weighted stats: `total = Σ w·d`, `mean = total / Σ w`.
pub fn nearest_facility_stats_weighted(m: &DistanceMatrix, weights: &[f64]) -> NearestStats {
    let (per_household, nearest) = row_minima(m);
    let total = compensated_sum(per_household.iter().zip(weights).map(|(d, w)| d * w));
    let mean = total / compensated_sum(weights.iter().copied());
    NearestStats {
        per_household,
        nearest,
        total,
        mean,
    }
}

/// Absolute and percent saving of `candidate_avg` relative to `baseline_avg`.
pub fn savings(baseline_avg: f64, candidate_avg: f64) -> (f64, Option<f64>) {
    let abs = baseline_avg - candidate_avg;
    let pct = (baseline_avg > 0.0).then(|| 100.0 * abs / baseline_avg);
    (abs, pct)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub group: String,
    pub household_count: usize,
    pub candidate_avg_mi: f64,
    pub baseline_avg_mi: f64,
    pub saving_abs_mi: f64,
    pub saving_pct: Option<f64>,
    pub candidate_total_mi: f64,
    pub baseline_total_mi: f64,
}

impl GroupReport {
    /// Builds a group row from per-household meters and weights.
    fn from_rows(group: String, candidate: &[f64], baseline: &[f64], weights: &[f64]) -> Self {
        let wsum = compensated_sum(weights.iter().copied());
        let ct = meters_to_miles(compensated_sum(candidate.iter().zip(weights).map(|(d, w)| d * w)));
        let bt = meters_to_miles(compensated_sum(baseline.iter().zip(weights).map(|(d, w)| d * w)));
        let (ca, ba) = (ct / wsum, bt / wsum);
        let (saving_abs_mi, saving_pct) = savings(ba, ca);
        Self {
            group,
            household_count: candidate.len(),
            candidate_avg_mi: ca,
            baseline_avg_mi: ba,
            saving_abs_mi,
            saving_pct,
            candidate_total_mi: ct,
            baseline_total_mi: bt,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyBlock {
    pub candidate_count: usize,
    pub baseline_count: usize,
    pub candidate_avg_mi: f64,
    pub baseline_avg_mi: f64,
    pub candidate_total_mi: f64,
    pub baseline_total_mi: f64,
    /// Candidate minus baseline; positive means the candidate is worse.
    pub per_pantry_avg_mi: f64,
    pub total_mi: f64,
}

pub fn penalty_from_distances(candidate: &PantryBankDistances, baseline: &PantryBankDistances) -> PenaltyBlock {
    let ca = meters_to_miles(candidate.mean);
    let ba = meters_to_miles(baseline.mean);
    let ct = meters_to_miles(candidate.total);
    let bt = meters_to_miles(baseline.total);
    PenaltyBlock {
        candidate_count: candidate.per_pantry.len(),
        baseline_count: baseline.per_pantry.len(),
        candidate_avg_mi: ca,
        baseline_avg_mi: ba,
        candidate_total_mi: ct,
        baseline_total_mi: bt,
        per_pantry_avg_mi: ca - ba,
        total_mi: ct - bt,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub candidate_label: String,
    pub baseline_label: String,
    pub weight_mode: WeightMode,
    /// One row per city group (sorted by name), then `overall`.
    pub groups: Vec<GroupReport>,
    pub penalty: Option<PenaltyBlock>,
}

impl EvaluationReport {
    pub fn overall(&self) -> &GroupReport {
        self.groups.last().expect("report always has an overall row")
    }
}

/// Axis-aligned box that tags households lacking a city column value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CityBox {
    pub name: String,
    pub min_lat: f64,
    pub max_lat: f64,
    pub min_lon: f64,
    pub max_lon: f64,
}

impl CityBox {
    pub fn contains(&self, p: GeoPoint) -> bool {
        (self.min_lat..=self.max_lat).contains(&p.lat()) && (self.min_lon..=self.max_lon).contains(&p.lon())
    }
}

/// City tag per household: the explicit column first, then the first matching box.
pub fn city_groups(households: &[Household], boxes: &[CityBox]) -> Vec<Option<String>> {
    households
        .iter()
        .map(|h| {
            h.city
                .clone()
                .or_else(|| boxes.iter().find(|b| b.contains(h.location)).map(|b| b.name.clone()))
        })
        .collect()
}

/// Compares two household × facility matrices row by row.
pub fn compare_matrices(
    candidate: (&str, &DistanceMatrix),
    baseline: (&str, &DistanceMatrix),
    households: &[Household],
    boxes: &[CityBox],
    mode: WeightMode,
) -> Result<EvaluationReport, EvaluateError> {
    if households.is_empty() {
        return Err(EvaluateError::NoHouseholds);
    }
    for m in [candidate.1, baseline.1] {
        if m.rows() != households.len() {
            return Err(EvaluateError::RowMismatch {
                rows: m.rows(),
                households: households.len(),
            });
        }
    }
    let cand = nearest_facility_stats(candidate.1).per_household;
    let base = nearest_facility_stats(baseline.1).per_household;
    let weights: Vec<f64> = match mode {
        WeightMode::Duplicated => vec![1.0; households.len()],
        WeightMode::Direct => households.iter().map(|h| h.weight).collect(),
    };

    let tags = city_groups(households, boxes);
    let mut by_city: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, t) in tags.iter().enumerate() {
        if let Some(t) = t {
            by_city.entry(t.as_str()).or_default().push(i);
        }
    }
    let pick = |v: &[f64], idx: &[usize]| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
    let mut groups: Vec<GroupReport> = by_city
        .iter()
        .map(|(city, idx)| {
            GroupReport::from_rows(
                city.to_string(),
                &pick(&cand, idx),
                &pick(&base, idx),
                &pick(&weights, idx),
            )
        })
        .collect();
    groups.push(GroupReport::from_rows("overall".into(), &cand, &base, &weights));
    Ok(EvaluationReport {
        candidate_label: candidate.0.to_string(),
        baseline_label: baseline.0.to_string(),
        weight_mode: mode,
        groups,
        penalty: None,
    })
}

/// Household → facility comparison with matrices fetched from `provider`.
pub fn compare(
    candidate: &FacilitySet,
    baseline: &FacilitySet,
    households: &[Household],
    provider: &Provider,
    boxes: &[CityBox],
    mode: WeightMode,
) -> Result<EvaluationReport, EvaluateError> {
    if households.is_empty() {
        return Err(EvaluateError::NoHouseholds);
    }
    let points: Vec<GeoPoint> = households.iter().map(|h| h.location).collect();
    let cm = provider.build_matrix(&points, &candidate.points())?;
    let bm = provider.build_matrix(&points, &baseline.points())?;
    compare_matrices(
        (&candidate.label, &cm),
        (&baseline.label, &bm),
        households,
        boxes,
        mode,
    )
}

/// Pantry → bank distances for a baseline: each pantry's named bank when it
/// has one, otherwise its nearest bank.
pub fn baseline_pantry_bank_distances(
    banks: &FacilitySet,
    pantries: &FacilitySet,
    provider: &Provider,
) -> Result<PantryBankDistances, EvaluateError> {
    let m = provider.build_matrix(&pantries.points(), &banks.points())?;
    let per_pantry = pantries
        .facilities
        .iter()
        .enumerate()
        .map(|(r, p)| match &p.bank_id {
            Some(bank) => banks
                .facilities
                .iter()
                .position(|b| &b.id == bank)
                .map(|c| m.get(r, c))
                .ok_or_else(|| EvaluateError::UnknownBank {
                    pantry: p.id.clone(),
                    bank: bank.clone(),
                }),
            None => Ok(m.row(r).iter().copied().fold(f64::INFINITY, f64::min)),
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PantryBankDistances::from_distances(per_pantry))
}

pub fn penalty_report(
    plan: &PlacementPlan,
    household_matrix: SquareView<'_>,
    baseline_banks: &FacilitySet,
    baseline_pantries: &FacilitySet,
    provider: &Provider,
) -> Result<PenaltyBlock, EvaluateError> {
    let candidate = pantry_bank_distances(plan, household_matrix);
    let baseline = baseline_pantry_bank_distances(baseline_banks, baseline_pantries, provider)?;
    Ok(penalty_from_distances(&candidate, &baseline))
}

fn round_to(v: f64, places: i32) -> f64 {
    let f = 10f64.powi(places);
    (v * f).round() / f
}

/// Display-precision CSV: miles to 2 decimals, percents to 1.
pub fn write_report_csv<W: Write>(
    writer: W,
    report: &EvaluationReport,
    comments: &[String],
) -> std::io::Result<()> {
    let mut writer = writer;
    for c in comments {
        writeln!(writer, "# {c}")?;
    }
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "group",
        "household_count",
        "candidate_avg_mi",
        "baseline_avg_mi",
        "saving_abs_mi",
        "saving_pct",
        "candidate_total_mi",
        "baseline_total_mi",
    ])?;
    for g in &report.groups {
        w.write_record([
            g.group.clone(),
            g.household_count.to_string(),
            format!("{:.2}", round_to(g.candidate_avg_mi, 2)),
            format!("{:.2}", round_to(g.baseline_avg_mi, 2)),
            format!("{:.2}", round_to(g.saving_abs_mi, 2)),
            g.saving_pct
                .map(|p| format!("{:.1}", round_to(p, 1)))
                .unwrap_or_default(),
            format!("{:.2}", round_to(g.candidate_total_mi, 2)),
            format!("{:.2}", round_to(g.baseline_total_mi, 2)),
        ])?;
    }
    if let Some(p) = &report.penalty {
        w.write_record([
            "penalty".to_string(),
            p.candidate_count.to_string(),
            format!("{:.2}", round_to(p.candidate_avg_mi, 2)),
            format!("{:.2}", round_to(p.baseline_avg_mi, 2)),
            format!("{:.2}", round_to(p.per_pantry_avg_mi, 2)),
            String::new(),
            format!("{:.2}", round_to(p.candidate_total_mi, 2)),
            format!("{:.2}", round_to(p.baseline_total_mi, 2)),
        ])?;
    }
    w.flush()
}

/// Households as points labelled by which facility set serves them closer.
pub fn households_geojson(
    households: &[Household],
    candidate: &NearestStats,
    baseline: &NearestStats,
    labels: (&str, &str),
    provenance: Value,
) -> Value {
    let features: Vec<Value> = households
        .iter()
        .enumerate()
        .map(|(i, h)| {
            let (c, b) = (candidate.per_household[i], baseline.per_household[i]);
            let nearest = if c < b {
                labels.0
            } else if b < c {
                labels.1
            } else {
                "tie"
            };
            json!({
                "type": "Feature",
                "geometry": {"type": "Point", "coordinates": [h.location.lon(), h.location.lat()]},
                "properties": {
                    "id": h.id,
                    "nearest": nearest,
                    "candidate_mi": meters_to_miles(c),
                    "baseline_mi": meters_to_miles(b),
                },
            })
        })
        .collect();
    json!({"type": "FeatureCollection", "provenance": provenance, "features": features})
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(lat: f64, lon: f64) -> GeoPoint {
        GeoPoint::new(lat, lon).unwrap()
    }

    fn matrix(rows: usize, cols: usize, values: Vec<f64>) -> DistanceMatrix {
        let src = (0..rows).map(|i| p(i as f64, 0.0)).collect();
        let dst = (0..cols).map(|j| p(j as f64, 50.0)).collect();
        DistanceMatrix::new(src, dst, values, "hand").unwrap()
    }

    fn households(n: usize) -> Vec<Household> {
        (0..n).map(|i| Household::new(i.to_string(), p(i as f64, 0.0))).collect()
    }

    #[test]
    fn nearest_is_row_minimum() {
        let m = matrix(1, 2, vec![3000.0, 5000.0]);
        let s = nearest_facility_stats(&m);
        assert_eq!(s.per_household, vec![3000.0]);
        assert_eq!(s.nearest, vec![0]);

        let m = matrix(3, 2, vec![4.0, 2.0, 1.0, 7.0, 5.0, 5.0]);
        let s = nearest_facility_stats(&m);
        assert_eq!(s.per_household, vec![2.0, 1.0, 5.0]);
        assert_eq!(s.nearest, vec![1, 0, 0]);
        assert_eq!(s.total, 8.0);
        assert!((s.mean - 8.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn facility_everywhere_is_zero() {
        let m = matrix(2, 2, vec![0.0, 9.0, 9.0, 0.0]);
        assert_eq!(nearest_facility_stats(&m).total, 0.0);
    }

    #[test]
    fn saving_arithmetic_example() {
        let (abs, pct) = savings(6.83, 3.22);
        assert!((abs - 3.61).abs() < 1e-9);
        assert_eq!(format!("{:.1}", pct.unwrap()), "52.9");
        assert_eq!(savings(0.0, 0.0), (0.0, None));
    }

    #[test]
    fn identical_sets_save_nothing() {
        let m = matrix(3, 2, vec![4.0, 2.0, 1.0, 7.0, 5.0, 5.0]);
        let r = compare_matrices(("a", &m), ("b", &m), &households(3), &[], WeightMode::Duplicated).unwrap();
        assert_eq!(r.overall().saving_abs_mi, 0.0);
        assert_eq!(r.overall().saving_pct, Some(0.0));
    }

    #[test]
    fn groups_by_city_then_overall() {
        let mut hh = households(3);
        hh[0].city = Some("Lafayette".into());
        hh[2].city = Some("Fresno".into());
        let cm = matrix(3, 1, vec![1609.344, 3218.688, 0.0]);
        let bm = matrix(3, 1, vec![3218.688, 3218.688, 1609.344]);
        let r = compare_matrices(("k", &cm), ("real", &bm), &hh, &[], WeightMode::Duplicated).unwrap();
        let names: Vec<_> = r.groups.iter().map(|g| g.group.as_str()).collect();
        assert_eq!(names, ["Fresno", "Lafayette", "overall"]);
        assert_eq!(r.groups[0].saving_abs_mi, 1.0);
        assert_eq!(r.groups[1].saving_pct, Some(50.0));
        let o = r.overall();
        assert_eq!(o.household_count, 3);
        assert!((o.candidate_total_mi - 3.0).abs() < 1e-12);
        assert!((o.baseline_total_mi - 5.0).abs() < 1e-12);
        assert!((o.candidate_avg_mi * 3.0 - o.candidate_total_mi).abs() < 1e-9);
    }

    #[test]
    fn city_boxes_tag_untagged_households() {
        let hh = households(3);
        let boxes = [CityBox {
            name: "south".into(),
            min_lat: -1.0,
            max_lat: 1.5,
            min_lon: -1.0,
            max_lon: 1.0,
        }];
        assert_eq!(city_groups(&hh, &boxes), vec![Some("south".into()), Some("south".into()), None]);
    }

    #[test]
    fn direct_weights_match_duplication() {
        let mut hh = households(2);
        hh[0].weight = 3.0;
        let m = matrix(2, 1, vec![100.0, 400.0]);
        let direct = compare_matrices(("c", &m), ("b", &m), &hh, &[], WeightMode::Direct).unwrap();

        let dup = crate::ingest::duplicate_by_weight(&hh);
        let md = matrix(4, 1, vec![100.0, 100.0, 100.0, 400.0]);
        let dupr = compare_matrices(("c", &md), ("b", &md), &dup, &[], WeightMode::Duplicated).unwrap();
        assert!((direct.overall().candidate_avg_mi - dupr.overall().candidate_avg_mi).abs() < 1e-12);
        assert!((direct.overall().candidate_total_mi - dupr.overall().candidate_total_mi).abs() < 1e-12);
    }

    #[test]
    fn row_mismatch_rejected() {
        let m = matrix(2, 1, vec![1.0, 2.0]);
        assert!(matches!(
            compare_matrices(("c", &m), ("b", &m), &households(3), &[], WeightMode::Duplicated),
            Err(EvaluateError::RowMismatch { .. })
        ));
    }

    #[test]
    fn penalty_totals_and_means() {
        let mile = METERS_PER_MILE;
        let cand = PantryBankDistances::from_distances(vec![2.0 * mile, 4.0 * mile]);
        let base = PantryBankDistances::from_distances(vec![1.0 * mile, 1.0 * mile]);
        let p = penalty_from_distances(&cand, &base);
        assert!((p.per_pantry_avg_mi - 2.0).abs() < 1e-12);
        assert!((p.total_mi - 4.0).abs() < 1e-12);
        let same = penalty_from_distances(&cand, &cand);
        assert_eq!((same.per_pantry_avg_mi, same.total_mi), (0.0, 0.0));
    }

    #[test]
    fn facility_csv() {
        let csv = "id,lat,lon,city,bank_id\np1,34.05,-118.24,Los Angeles,b1\np2,34.1,-118.3,,\n";
        let set = parse_facilities("real", csv.as_bytes()).unwrap();
        assert_eq!(set.facilities.len(), 2);
        assert_eq!(set.facilities[0].bank_id.as_deref(), Some("b1"));
        assert_eq!(set.facilities[1].city, None);
        assert!(parse_facilities("x", "lat,lon\n".as_bytes()).is_err());
        assert!(parse_facilities("x", "lat,lon\n91,0\n".as_bytes()).is_err());
        assert!(parse_facilities("x", "a,b\n1,2\n".as_bytes()).is_err());
    }

    #[test]
    fn display_rounding() {
        let report = EvaluationReport {
            candidate_label: "k".into(),
            baseline_label: "real".into(),
            weight_mode: WeightMode::Duplicated,
            groups: vec![GroupReport {
                group: "overall".into(),
                household_count: 2,
                candidate_avg_mi: 3.2249,
                baseline_avg_mi: 6.83,
                saving_abs_mi: 3.6051,
                saving_pct: Some(52.855),
                candidate_total_mi: 6.4498,
                baseline_total_mi: 13.66,
            }],
            penalty: None,
        };
        let mut out = Vec::new();
        write_report_csv(&mut out, &report, &["seed=1".into()]).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("# seed=1\n"));
        assert!(text.contains("overall,2,3.22,6.83,3.61,52.9,6.45,13.66"), "{text}");
    }
}
