//! Daily time-series panels: ingestion, validation, scaling and description.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use chrono::NaiveDate;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg;

/// Eigenvalue floor used when repairing a pairwise-complete correlation
/// matrix.
pub const CORRELATION_EIGEN_FLOOR: f64 = 1e-8;

/// Probabilities reported by [`descriptives`].
pub const DESCRIPTIVE_PROBS: [f64; 5] = [0.10, 0.25, 0.50, 0.75, 0.90];

/// One validated daily panel.
///
/// `pollutants` holds original units with `NaN` in cells where `observed`
/// is false.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeriesDataset {
    pub dates: Vec<NaiveDate>,
    pub outcome: Vec<u64>,
    pub temperature: Vec<f64>,
    pub humidity: Vec<f64>,
    pub holiday: Vec<bool>,
    pub pollutant_names: Vec<String>,
    pub pollutants: DMatrix<f64>,
    pub observed: DMatrix<bool>,
}

/// Column names to read from a CSV file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Schema {
    pub date: String,
    pub outcome: String,
    pub temperature: String,
    pub humidity: String,
    pub holiday: String,
    pub pollutants: Vec<String>,
}

impl Default for Schema {
    fn default() -> Self {
        Self {
            date: "date".into(),
            outcome: "outcome".into(),
            temperature: "temp".into(),
            humidity: "rhum".into(),
            holiday: "holiday".into(),
            pollutants: Vec::new(),
        }
    }
}

impl Schema {
    pub fn with_pollutants<I, S>(pollutants: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            pollutants: pollutants.into_iter().map(Into::into).collect(),
            ..Self::default()
        }
    }
}

impl TimeSeriesDataset {
    /// Build a dataset from columns, checking every invariant.
    ///
    /// Non-finite pollutant values are treated as missing regardless of the
    /// mask.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        dates: Vec<NaiveDate>,
        outcome: Vec<u64>,
        temperature: Vec<f64>,
        humidity: Vec<f64>,
        holiday: Vec<bool>,
        pollutant_names: Vec<String>,
        mut pollutants: DMatrix<f64>,
        mut observed: DMatrix<bool>,
    ) -> Result<Self> {
        let t = dates.len();
        for (name, len) in [
            ("outcome", outcome.len()),
            ("temperature", temperature.len()),
            ("humidity", humidity.len()),
            ("holiday", holiday.len()),
            ("pollutant rows", pollutants.nrows()),
            ("mask rows", observed.nrows()),
        ] {
            if len != t {
                return Err(Error::DimensionMismatch(format!(
                    "{name} has length {len}, expected {t}"
                )));
            }
        }
        let p = pollutant_names.len();
        if p == 0 {
            return Err(Error::InvalidConfig("at least one pollutant is required".into()));
        }
        if pollutants.ncols() != p || observed.ncols() != p {
            return Err(Error::DimensionMismatch(format!(
                "{p} pollutant names but {} value columns and {} mask columns",
                pollutants.ncols(),
                observed.ncols()
            )));
        }
        check_contiguous(&dates)?;
        for (row, (&temp, &rhum)) in temperature.iter().zip(&humidity).enumerate() {
            if !temp.is_finite() {
                return Err(Error::MissingOutcome {
                    row,
                    column: "temperature".into(),
                });
            }
            if !rhum.is_finite() {
                return Err(Error::MissingOutcome {
                    row,
                    column: "humidity".into(),
                });
            }
        }
        for i in 0..t {
            for j in 0..p {
                if !observed[(i, j)] || !pollutants[(i, j)].is_finite() {
                    observed[(i, j)] = false;
                    pollutants[(i, j)] = f64::NAN;
                }
            }
        }
        for (j, name) in pollutant_names.iter().enumerate() {
            if observed.column(j).iter().filter(|&&o| o).count() < 2 {
                return Err(Error::EmptyPollutantColumn(name.clone()));
            }
        }
        Ok(Self {
            dates,
            outcome,
            temperature,
            humidity,
            holiday,
            pollutant_names,
            pollutants,
            observed,
        })
    }

    pub fn n_days(&self) -> usize {
        self.dates.len()
    }

    pub fn n_pollutants(&self) -> usize {
        self.pollutant_names.len()
    }

    /// Days with at least one missing pollutant.
    pub fn partially_missing_days(&self) -> usize {
        (0..self.n_days())
            .filter(|&i| self.observed.row(i).iter().any(|&o| !o))
            .count()
    }

    /// Restrict to a subset of pollutant columns (by index), keeping the
    /// rest of the panel.
    pub fn select_pollutants(&self, columns: &[usize]) -> Result<Self> {
        let t = self.n_days();
        let names = columns
            .iter()
            .map(|&j| {
                self.pollutant_names
                    .get(j)
                    .cloned()
                    .ok_or_else(|| Error::DimensionMismatch(format!("no pollutant {j}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let values = DMatrix::from_fn(t, columns.len(), |i, k| self.pollutants[(i, columns[k])]);
        let mask = DMatrix::from_fn(t, columns.len(), |i, k| self.observed[(i, columns[k])]);
        Self::new(
            self.dates.clone(),
            self.outcome.clone(),
            self.temperature.clone(),
            self.humidity.clone(),
            self.holiday.clone(),
            names,
            values,
            mask,
        )
    }

    /// Write the panel back to CSV in the input layout.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::Parse(e.to_string()))?;
        let mut header = vec!["date", "outcome", "temp", "rhum", "holiday"];
        header.extend(self.pollutant_names.iter().map(String::as_str));
        w.write_record(&header)?;
        for i in 0..self.n_days() {
            let mut rec = vec![
                self.dates[i].format("%Y-%m-%d").to_string(),
                self.outcome[i].to_string(),
                fmt_f64(self.temperature[i]),
                fmt_f64(self.humidity[i]),
                u8::from(self.holiday[i]).to_string(),
            ];
            for j in 0..self.n_pollutants() {
                rec.push(if self.observed[(i, j)] {
                    fmt_f64(self.pollutants[(i, j)])
                } else {
                    "NA".into()
                });
            }
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

fn check_contiguous(dates: &[NaiveDate]) -> Result<()> {
    for (i, w) in dates.windows(2).enumerate() {
        if w[0].succ_opt() != Some(w[1]) {
            return Err(Error::NonContiguousDates(format!(
                "row {} is {} but row {} is {}",
                i,
                w[0],
                i + 1,
                w[1]
            )));
        }
    }
    Ok(())
}

fn is_missing_token(cell: &str) -> bool {
    let c = cell.trim();
    c.is_empty() || c.eq_ignore_ascii_case("NA")
}

/// Read and validate a CSV panel.
pub fn load_dataset(path: &Path, schema: &Schema) -> Result<TimeSeriesDataset> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&bytes, schema)
}

/// Parse a CSV panel from memory; see [`load_dataset`].
pub fn parse_dataset(bytes: &[u8], schema: &Schema) -> Result<TimeSeriesDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let header = reader.headers()?.clone();
    let index: HashMap<&str, usize> = header.iter().enumerate().map(|(i, h)| (h, i)).collect();
    let col = |name: &str| {
        index
            .get(name)
            .copied()
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let date_ix = col(&schema.date)?;
    let outcome_ix = col(&schema.outcome)?;
    let temp_ix = col(&schema.temperature)?;
    let rhum_ix = col(&schema.humidity)?;
    let holiday_ix = col(&schema.holiday)?;
    if schema.pollutants.is_empty() {
        return Err(Error::InvalidConfig("schema lists no pollutant columns".into()));
    }
    let pollutant_ix = schema
        .pollutants
        .iter()
        .map(|p| col(p))
        .collect::<Result<Vec<_>>>()?;

    let mut dates = Vec::new();
    let mut outcome = Vec::new();
    let mut temperature = Vec::new();
    let mut humidity = Vec::new();
    let mut holiday = Vec::new();
    let mut values: Vec<f64> = Vec::new();

    for (row, rec) in reader.records().enumerate() {
        let rec = rec?;
        let field = |ix: usize| rec.get(ix).unwrap_or("");
        let date = NaiveDate::parse_from_str(field(date_ix), "%Y-%m-%d")
            .map_err(|e| Error::Parse(format!("row {row}: date `{}`: {e}", field(date_ix))))?;
        let required = |ix: usize, column: &str| -> Result<&str> {
            let cell = field(ix);
            if is_missing_token(cell) {
                Err(Error::MissingOutcome {
                    row,
                    column: column.to_string(),
                })
            } else {
                Ok(cell)
            }
        };
        let o = required(outcome_ix, &schema.outcome)?;
        let o: u64 = o
            .parse()
            .map_err(|_| Error::Parse(format!("row {row}: outcome `{o}` is not a count")))?;
        let parse_real = |cell: &str, column: &str| -> Result<f64> {
            cell.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse(format!("row {row}: {column} `{cell}` is not a number")))
        };
        let temp = parse_real(required(temp_ix, &schema.temperature)?, &schema.temperature)?;
        let rhum = parse_real(required(rhum_ix, &schema.humidity)?, &schema.humidity)?;
        let hol = match required(holiday_ix, &schema.holiday)? {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::Parse(format!(
                    "row {row}: holiday `{other}` must be 0 or 1"
                )))
            }
        };
        dates.push(date);
        outcome.push(o);
        temperature.push(temp);
        humidity.push(rhum);
        holiday.push(hol);
        for &ix in &pollutant_ix {
            let cell = field(ix);
            let v = if is_missing_token(cell) {
                f64::NAN
            } else {
                cell.parse::<f64>().unwrap_or(f64::NAN)
            };
            values.push(v);
        }
    }

    let t = dates.len();
    let p = pollutant_ix.len();
    let pollutants = DMatrix::from_row_slice(t, p, &values);
    let observed = pollutants.map(|v| v.is_finite());
    TimeSeriesDataset::new(
        dates,
        outcome,
        temperature,
        humidity,
        holiday,
        schema.pollutants.clone(),
        pollutants,
        observed,
    )
}

/// Hex SHA-256 of raw bytes; used to pin datasets in run manifests.
pub fn content_hash(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest.iter() {
        let _ = write!(out, "{b:02x}");
    }
    out
}

/// Per-column location and scale of the observed entries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingParams {
    pub names: Vec<String>,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl ScalingParams {
    pub fn identity(names: Vec<String>) -> Self {
        let p = names.len();
        Self {
            names,
            mean: vec![0.0; p],
            sd: vec![1.0; p],
        }
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    /// Map a standardized value of column `p` back to original units.
    pub fn to_original(&self, p: usize, z: f64) -> f64 {
        z * self.sd[p] + self.mean[p]
    }

    pub fn to_standard(&self, p: usize, y: f64) -> f64 {
        (y - self.mean[p]) / self.sd[p]
    }
}

/// Standardized pollutant matrix (`NaN` where missing) and its mask.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardized {
    pub values: DMatrix<f64>,
    pub observed: DMatrix<bool>,
}

/// Sample mean and (n - 1)-denominator standard deviation.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// Standardize observed pollutant entries column by column.
pub fn standardize(dataset: &TimeSeriesDataset) -> Result<(Standardized, ScalingParams)> {
    standardize_columns(
        &dataset.pollutants,
        &dataset.observed,
        &dataset.pollutant_names,
    )
}

/// Column-wise standardization over the entries flagged in `observed`.
pub fn standardize_columns(
    values: &DMatrix<f64>,
    observed: &DMatrix<bool>,
    names: &[String],
) -> Result<(Standardized, ScalingParams)> {
    let (t, p) = values.shape();
    let mut out = DMatrix::from_element(t, p, f64::NAN);
    let mut means = Vec::with_capacity(p);
    let mut sds = Vec::with_capacity(p);
    for j in 0..p {
        let name = names.get(j).cloned().unwrap_or_else(|| format!("column{j}"));
        let obs: Vec<f64> = (0..t)
            .filter(|&i| observed[(i, j)])
            .map(|i| values[(i, j)])
            .collect();
        if obs.len() < 2 {
            return Err(Error::EmptyPollutantColumn(name));
        }
        let (m, sd) = mean_sd(&obs);
        if !(sd > 0.0) {
            return Err(Error::ZeroVariance(name));
        }
        for i in 0..t {
            if observed[(i, j)] {
                out[(i, j)] = (values[(i, j)] - m) / sd;
            }
        }
        means.push(m);
        sds.push(sd);
    }
    Ok((
        Standardized {
            values: out,
            observed: observed.clone(),
        },
        ScalingParams {
            names: names.to_vec(),
            mean: means,
            sd: sds,
        },
    ))
}

/// Pairwise-complete Pearson correlation, repaired to be positive definite.
///
/// A pair whose joint observations are constant in either column gets
/// correlation 0.
pub fn empirical_correlation(values: &DMatrix<f64>, observed: &DMatrix<bool>) -> Result<DMatrix<f64>> {
    let (t, p) = values.shape();
    let mut c = DMatrix::identity(p, p);
    for a in 0..p {
        for b in (a + 1)..p {
            let pairs: Vec<(f64, f64)> = (0..t)
                .filter(|&i| observed[(i, a)] && observed[(i, b)])
                .map(|i| (values[(i, a)], values[(i, b)]))
                .collect();
            if pairs.len() < 2 {
                return Err(Error::InsufficientOverlap(a, b));
            }
            let n = pairs.len() as f64;
            let ma = pairs.iter().map(|x| x.0).sum::<f64>() / n;
            let mb = pairs.iter().map(|x| x.1).sum::<f64>() / n;
            let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
            for &(x, y) in &pairs {
                sab += (x - ma) * (y - mb);
                saa += (x - ma).powi(2);
                sbb += (y - mb).powi(2);
            }
            let r = if saa > 0.0 && sbb > 0.0 {
                (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0)
            } else {
                0.0
            };
            c[(a, b)] = r;
            c[(b, a)] = r;
        }
    }
    Ok(linalg::nearest_correlation(&c, CORRELATION_EIGEN_FLOOR))
}

/// Linear-interpolation quantile between order statistics (type 7).
///
/// `sorted` must be ascending and nonempty.
pub fn quantile_sorted(sorted: &[f64], prob: f64) -> f64 {
    let n = sorted.len();
    assert!(n > 0, "quantile of an empty sample");
    let h = (n - 1) as f64 * prob.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Type-7 quantile of an unsorted sample; non-finite entries are ignored.
pub fn quantile(values: &[f64], prob: f64) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, prob)
}

/// One row of the descriptive table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariableSummary {
    pub name: String,
    pub n_days: usize,
    /// Values at [`DESCRIPTIVE_PROBS`].
    pub percentiles: [f64; 5],
    pub iqr: f64,
}

impl VariableSummary {
    pub fn from_values(name: impl Into<String>, values: &[f64]) -> Self {
        let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
        v.sort_by(f64::total_cmp);
        let percentiles = DESCRIPTIVE_PROBS.map(|p| quantile_sorted(&v, p));
        Self {
            name: name.into(),
            n_days: v.len(),
            percentiles,
            iqr: percentiles[3] - percentiles[1],
        }
    }
}

/// Descriptive statistics for the outcome, meteorology and pollutants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Descriptives {
    pub outcome: VariableSummary,
    pub temperature: VariableSummary,
    pub humidity: VariableSummary,
    pub pollutants: Vec<VariableSummary>,
}

impl Descriptives {
    pub fn pollutant_iqr(&self) -> Vec<f64> {
        self.pollutants.iter().map(|s| s.iqr).collect()
    }

    pub fn rows(&self) -> impl Iterator<Item = &VariableSummary> {
        [&self.outcome, &self.temperature, &self.humidity]
            .into_iter()
            .chain(self.pollutants.iter())
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("variable,n_days,p10,p25,p50,p75,p90,iqr\n");
        for r in self.rows() {
            let _ = write!(s, "{},{}", r.name, r.n_days);
            for q in r.percentiles {
                let _ = write!(s, ",{q:.4}");
            }
            let _ = writeln!(s, ",{:.4}", r.iqr);
        }
        s
    }
}

pub fn descriptives(dataset: &TimeSeriesDataset) -> Descriptives {
    let outcome: Vec<f64> = dataset.outcome.iter().map(|&o| o as f64).collect();
    let pollutants = dataset
        .pollutant_names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let col: Vec<f64> = (0..dataset.n_days())
                .filter(|&i| dataset.observed[(i, j)])
                .map(|i| dataset.pollutants[(i, j)])
                .collect();
            VariableSummary::from_values(name.clone(), &col)
        })
        .collect();
    Descriptives {
        outcome: VariableSummary::from_values("outcome", &outcome),
        temperature: VariableSummary::from_values("temp", &dataset.temperature),
        humidity: VariableSummary::from_values("rhum", &dataset.humidity),
        pollutants,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn day(i: i64) -> NaiveDate {
        NaiveDate::from_ymd_opt(2011, 1, 1).unwrap() + chrono::Duration::days(i)
    }

    fn csv_with(rows: &[&str]) -> Vec<u8> {
        let mut s = String::from("date,outcome,temp,rhum,holiday,no2,o3\n");
        for r in rows {
            s.push_str(r);
            s.push('\n');
        }
        s.into_bytes()
    }

    fn schema() -> Schema {
        Schema::with_pollutants(["no2", "o3"])
    }

    #[test]
    fn parses_missing_pollutant_cells() {
        let bytes = csv_with(&[
            "2011-01-01,30,5.0,80,0,20.5,NA",
            "2011-01-02,31,6.0,81,1,,10",
            "2011-01-03,32,7.0,82,0,abc,11",
            "2011-01-04,33,8.0,83,0,22,12",
            "2011-01-05,34,9.0,84,0,23,13",
        ]);
        let ds = parse_dataset(&bytes, &schema()).unwrap();
        assert_eq!(ds.n_days(), 5);
        assert_eq!(ds.partially_missing_days(), 3);
        assert!(!ds.observed[(0, 1)]);
        assert!(!ds.observed[(1, 0)]);
        assert!(!ds.observed[(2, 0)]);
        assert!(ds.holiday[1]);
    }

    #[test]
    fn each_malformed_input_maps_to_one_error() {
        let missing_col = b"date,outcome,temp,rhum,holiday,no2\n2011-01-01,1,1,1,0,1\n";
        assert!(matches!(
            parse_dataset(missing_col, &schema()),
            Err(Error::MissingColumn(c)) if c == "o3"
        ));
        let gap = csv_with(&["2011-01-01,1,1,1,0,1,1", "2011-01-03,1,1,1,0,2,2"]);
        assert!(matches!(
            parse_dataset(&gap, &schema()),
            Err(Error::NonContiguousDates(_))
        ));
        let no_outcome = csv_with(&["2011-01-01,,1,1,0,1,1", "2011-01-02,1,1,1,0,2,2"]);
        assert!(matches!(
            parse_dataset(&no_outcome, &schema()),
            Err(Error::MissingOutcome { row: 0, .. })
        ));
        let no_temp = csv_with(&["2011-01-01,3,NA,1,0,1,1", "2011-01-02,1,1,1,0,2,2"]);
        assert!(matches!(
            parse_dataset(&no_temp, &schema()),
            Err(Error::MissingOutcome { .. })
        ));
        let blank = csv_with(&["2011-01-01,1,1,1,0,,1", "2011-01-02,1,1,1,0,NA,2"]);
        assert!(matches!(
            parse_dataset(&blank, &schema()),
            Err(Error::EmptyPollutantColumn(c)) if c == "no2"
        ));
        let single = csv_with(&["2011-01-01,1,1,1,0,1,1"]);
        assert!(matches!(
            parse_dataset(&single, &schema()),
            Err(Error::EmptyPollutantColumn(_))
        ));
        let dup = csv_with(&["2011-01-01,1,1,1,0,1,1", "2011-01-01,1,1,1,0,2,2"]);
        assert!(matches!(
            parse_dataset(&dup, &schema()),
            Err(Error::NonContiguousDates(_))
        ));
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_dataset(Path::new("/nonexistent/panel.csv"), &schema()).unwrap_err();
        assert_eq!(err.code(), "IO");
    }

    fn single_column(values: &[f64]) -> (DMatrix<f64>, DMatrix<bool>) {
        let m = DMatrix::from_column_slice(values.len(), 1, values);
        let mask = m.map(|v: f64| v.is_finite());
        (m, mask)
    }

    #[test]
    fn standardize_three_points() {
        let (m, mask) = single_column(&[1.0, 2.0, 3.0]);
        let (z, s) = standardize_columns(&m, &mask, &["x".into()]).unwrap();
        assert_eq!(s.mean, vec![2.0]);
        assert_eq!(s.sd, vec![1.0]);
        assert_eq!(z.values.as_slice(), &[-1.0, 0.0, 1.0]);
    }

    #[test]
    fn standardize_identity_case() {
        let (m, mask) = single_column(&[-1.0, 0.0, 1.0]);
        let (z, s) = standardize_columns(&m, &mask, &["x".into()]).unwrap();
        assert_eq!((s.mean[0], s.sd[0]), (0.0, 1.0));
        assert_eq!(z.values, m);
    }

    #[test]
    fn standardize_ignores_missing() {
        // Observed {0, 10, 20}: mean 10, sd sqrt((100 + 0 + 100) / 2) = 10.
        let (m, mask) = single_column(&[0.0, 10.0, f64::NAN, 20.0]);
        let (z, s) = standardize_columns(&m, &mask, &["x".into()]).unwrap();
        assert_eq!((s.mean[0], s.sd[0]), (10.0, 10.0));
        assert_eq!(z.values[(0, 0)], -1.0);
        assert_eq!(z.values[(1, 0)], 0.0);
        assert!(z.values[(2, 0)].is_nan());
        assert!(!z.observed[(2, 0)]);
        assert_eq!(z.values[(3, 0)], 1.0);
    }

    #[test]
    fn standardize_constant_column_fails() {
        let (m, mask) = single_column(&[4.0, 4.0, 4.0]);
        assert!(matches!(
            standardize_columns(&m, &mask, &["x".into()]),
            Err(Error::ZeroVariance(_))
        ));
    }

    #[test]
    fn correlation_examples() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [4.0, 3.0, 2.0, 1.0];
        let mut m = DMatrix::zeros(4, 3);
        for i in 0..4 {
            m[(i, 0)] = x[i];
            m[(i, 1)] = x[i];
            m[(i, 2)] = y[i];
        }
        let mask = DMatrix::from_element(4, 3, true);
        let c = empirical_correlation(&m, &mask).unwrap();
        assert!((c[(0, 1)] - 1.0).abs() < 1e-6);
        assert!((c[(0, 2)] + 1.0).abs() < 1e-6);
        assert_eq!(c[(1, 1)], 1.0);

        let one = DMatrix::from_column_slice(3, 1, &[1.0, 5.0, 2.0]);
        let c1 = empirical_correlation(&one, &DMatrix::from_element(3, 1, true)).unwrap();
        assert_eq!(c1, DMatrix::identity(1, 1));
    }

    #[test]
    fn correlation_needs_overlap() {
        let m = DMatrix::from_row_slice(4, 2, &[1.0, f64::NAN, 2.0, f64::NAN, 3.0, 1.0, f64::NAN, 2.0]);
        let mask = m.map(|v: f64| v.is_finite());
        assert!(matches!(
            empirical_correlation(&m, &mask),
            Err(Error::InsufficientOverlap(0, 1))
        ));
    }

    // Independent oracle: sort, then interpolate by hand at rank p(n-1).
    fn brute_quantile(values: &[f64], p: f64) -> f64 {
        let mut v = values.to_vec();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let pos = p * (v.len() as f64 - 1.0);
        let below = v[pos as usize];
        let above = v[(pos as usize + 1).min(v.len() - 1)];
        below + (pos - (pos as usize) as f64) * (above - below)
    }

    #[test]
    fn quantiles_of_one_to_hundred() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(brute_quantile(&v, 0.25), 25.75);
        assert_eq!(brute_quantile(&v, 0.75), 75.25);
        let s = VariableSummary::from_values("x", &v);
        assert_eq!(s.percentiles[1], 25.75);
        assert_eq!(s.percentiles[3], 75.25);
        assert_eq!(s.iqr, 49.5);
        for p in [0.1, 0.5, 0.9, 0.33] {
            assert_eq!(quantile(&v, p), brute_quantile(&v, p));
        }
    }

    #[test]
    fn constant_column_has_zero_iqr() {
        let s = VariableSummary::from_values("c", &[3.0; 17]);
        assert!(s.percentiles.iter().all(|&q| q == 3.0));
        assert_eq!(s.iqr, 0.0);
    }

    #[test]
    fn descriptives_csv_layout() {
        let t = 4;
        let ds = TimeSeriesDataset::new(
            (0..t).map(|i| day(i as i64)).collect(),
            vec![1, 2, 3, 4],
            vec![1.0, 2.0, 3.0, 4.0],
            vec![50.0, 60.0, 70.0, 80.0],
            vec![false; t],
            vec!["no2".into()],
            DMatrix::from_column_slice(t, 1, &[10.0, f64::NAN, 30.0, 40.0]),
            DMatrix::from_element(t, 1, true),
        )
        .unwrap();
        let d = descriptives(&ds);
        assert_eq!(d.pollutants[0].n_days, 3);
        let csv = d.to_csv();
        assert!(csv.starts_with("variable,n_days,p10,p25,p50,p75,p90,iqr\n"));
        assert_eq!(csv.lines().count(), 5);
    }

    proptest::proptest! {
        #[test]
        fn standardize_round_trips(values in proptest::collection::vec(-1e3f64..1e3, 3..40)) {
            let (m, mask) = single_column(&values);
            if let Ok((z, s)) = standardize_columns(&m, &mask, &["x".into()]) {
                for (i, v) in values.iter().enumerate() {
                    let back = s.to_original(0, z.values[(i, 0)]);
                    proptest::prop_assert!((back - v).abs() <= 1e-12 * v.abs().max(s.sd[0]).max(1.0) * 10.0);
                }
            }
        }

        #[test]
        fn iqr_ignores_missing_entries(
            values in proptest::collection::vec(-50f64..50.0, 2..30),
            extra in 1usize..10,
        ) {
            let base = VariableSummary::from_values("x", &values);
            let mut padded = values.clone();
            padded.extend(std::iter::repeat_n(f64::NAN, extra));
            let with_missing = VariableSummary::from_values("x", &padded);
            proptest::prop_assert_eq!(base.iqr, with_missing.iqr);
        }
    }
}
