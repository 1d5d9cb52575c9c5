//! Longitudinal data model: a balanced panel of `n` units observed at `T`
//! timepoints, each timepoint carrying a covariate vector and a binary
//! treatment, with one terminal outcome per unit.
//!
//! Long format (one row per unit-time) is the canonical on-disk layout.
//! Units are ordered by id (numerically when every id is an integer,
//! lexicographically otherwise) and every derived matrix uses that order.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use thiserror::Error;

use crate::rng::{rng_for, Stream};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("missing required column `{0}`")]
    MissingColumn(String),
    #[error("non-binary treatment value `{value}` for unit `{unit}` at time {time}")]
    NonBinaryTreatment { unit: String, time: i64, value: String },
    #[error("unit `{unit}` has no record for time {time}")]
    RaggedPanel { unit: String, time: i64 },
    #[error("unit `{unit}` has more than one record for time {time}")]
    DuplicateRecord { unit: String, time: i64 },
    #[error("non-numeric value `{value}` in column `{column}` on line {line}")]
    NonNumericValue { column: String, line: u64, value: String },
    #[error("time values {0:?} are not consecutive integers")]
    NonConsecutiveTimes(Vec<i64>),
    #[error("time index {t} outside 1..={n_times}")]
    TimeOutOfRange { t: usize, n_times: usize },
    #[error("invalid number of splits K={k} for n={n} units")]
    InvalidK { k: usize, n: usize },
    #[error("dataset has no units")]
    Empty,
    #[error("inconsistent shapes: {0}")]
    Shape(String),
    #[error("covariate dimension differs across time; long-format export needs a common schema")]
    HeterogeneousCovariates,
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, DatasetError>;

/// Column mapping for long-format CSV input.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvSchema {
    pub id: String,
    pub time: String,
    pub treatment: String,
    pub outcome: String,
    /// Explicit covariate columns; `None` takes every remaining column.
    pub covariates: Option<Vec<String>>,
    /// Treat the `y` column as a time-varying outcome: lagged values become
    /// covariates at the following timepoint and the final value is `Y`.
    pub time_varying_outcome: bool,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            id: "id".into(),
            time: "time".into(),
            treatment: "a".into(),
            outcome: "y".into(),
            covariates: None,
            time_varying_outcome: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LongitudinalDataset {
    ids: Vec<String>,
    time_labels: Vec<i64>,
    covariate_names: Vec<Vec<String>>,
    /// One `n × p_t` matrix per timepoint.
    covariates: Vec<Array2<f64>>,
    /// `n × T`, entries in {0, 1}.
    treatments: Array2<u8>,
    outcomes: Vec<f64>,
    /// The `y` column as read, `n × T`. Final column equals `outcomes`.
    row_outcomes: Option<Array2<f64>>,
}

impl LongitudinalDataset {
    /// Build a dataset from per-time covariate matrices, an `n × T`
    /// treatment matrix and terminal outcomes. Units get ids `1..=n` and
    /// covariates are named `x1..xp`.
    pub fn new(covariates: Vec<Array2<f64>>, treatments: Array2<u8>, outcomes: Vec<f64>) -> Result<Self> {
        let n = outcomes.len();
        let ids = (1..=n).map(|i| i.to_string()).collect();
        let t = covariates.len();
        let names = covariates
            .iter()
            .map(|m| (1..=m.ncols()).map(|j| format!("x{j}")).collect())
            .collect();
        Self::from_parts(ids, (1..=t as i64).collect(), names, covariates, treatments, outcomes, None)
    }

    fn from_parts(
        ids: Vec<String>,
        time_labels: Vec<i64>,
        covariate_names: Vec<Vec<String>>,
        covariates: Vec<Array2<f64>>,
        treatments: Array2<u8>,
        outcomes: Vec<f64>,
        row_outcomes: Option<Array2<f64>>,
    ) -> Result<Self> {
        let n = outcomes.len();
        let t = covariates.len();
        if n == 0 {
            return Err(DatasetError::Empty);
        }
        if t == 0 {
            return Err(DatasetError::Shape("at least one timepoint is required".into()));
        }
        if ids.len() != n || time_labels.len() != t || covariate_names.len() != t {
            return Err(DatasetError::Shape("ids, time labels or names disagree with data".into()));
        }
        if treatments.dim() != (n, t) {
            return Err(DatasetError::Shape(format!(
                "treatment matrix is {:?}, expected ({n}, {t})",
                treatments.dim()
            )));
        }
        for (s, (m, names)) in covariates.iter().zip(&covariate_names).enumerate() {
            if m.nrows() != n || m.ncols() != names.len() {
                return Err(DatasetError::Shape(format!("covariate block at time {} is {:?}", s + 1, m.dim())));
            }
        }
        for ((i, s), &a) in treatments.indexed_iter() {
            if a > 1 {
                return Err(DatasetError::NonBinaryTreatment {
                    unit: ids[i].clone(),
                    time: time_labels[s],
                    value: a.to_string(),
                });
            }
        }
        if let Some(r) = &row_outcomes {
            if r.dim() != (n, t) {
                return Err(DatasetError::Shape("row outcome matrix has the wrong shape".into()));
            }
        }
        Ok(Self { ids, time_labels, covariate_names, covariates, treatments, outcomes, row_outcomes })
    }

    pub fn n_units(&self) -> usize {
        self.outcomes.len()
    }

    pub fn n_times(&self) -> usize {
        self.covariates.len()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn time_labels(&self) -> &[i64] {
        &self.time_labels
    }

    /// Covariates at time `t` (1-based).
    pub fn covariates(&self, t: usize) -> ArrayView2<'_, f64> {
        self.covariates[t - 1].view()
    }

    pub fn covariate_names(&self, t: usize) -> &[String] {
        &self.covariate_names[t - 1]
    }

    pub fn treatments(&self) -> ArrayView2<'_, u8> {
        self.treatments.view()
    }

    /// Treatment column at time `t` (1-based).
    pub fn treatment(&self, t: usize) -> Vec<u8> {
        self.treatments.column(t - 1).to_vec()
    }

    pub fn outcomes(&self) -> &[f64] {
        &self.outcomes
    }

    pub fn outcome_mean(&self) -> f64 {
        self.outcomes.iter().sum::<f64>() / self.n_units() as f64
    }

    /// Keep only the units at `rows`, in that order.
    pub fn subset(&self, rows: &[usize]) -> Self {
        let pick2 = |m: &Array2<f64>| m.select(Axis(0), rows);
        Self {
            ids: rows.iter().map(|&i| self.ids[i].clone()).collect(),
            time_labels: self.time_labels.clone(),
            covariate_names: self.covariate_names.clone(),
            covariates: self.covariates.iter().map(pick2).collect(),
            treatments: self.treatments.select(Axis(0), rows),
            outcomes: rows.iter().map(|&i| self.outcomes[i]).collect(),
            row_outcomes: self.row_outcomes.as_ref().map(pick2),
        }
    }

    /// Map a time-varying outcome onto the fixed-outcome layout: the outcome
    /// observed at time `s` becomes covariate `<y>_lag` at time `s + 1`.
    /// The terminal value stays the outcome.
    pub fn with_lagged_outcomes(&self, name: &str) -> Self {
        let mut out = self.clone();
        let Some(rows) = &self.row_outcomes else {
            return out;
        };
        for s in 1..self.n_times() {
            let lag = rows.column(s - 1).insert_axis(Axis(1));
            let block = ndarray::concatenate(Axis(1), &[self.covariates[s].view(), lag]).expect("row counts match");
            out.covariates[s] = block;
            out.covariate_names[s].push(format!("{name}_lag"));
        }
        out
    }

    /// Write long-format CSV: `id,time,a,y,<covariates>`. Numbers use the
    /// shortest representation that parses back to the same `f64`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let names = &self.covariate_names[0];
        if self.covariate_names.iter().any(|c| c != names) {
            return Err(DatasetError::HeterogeneousCovariates);
        }
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["id".to_string(), "time".into(), "a".into(), "y".into()];
        header.extend(names.iter().cloned());
        w.write_record(&header)?;
        for i in 0..self.n_units() {
            for s in 0..self.n_times() {
                let y = match &self.row_outcomes {
                    Some(r) => r[[i, s]],
                    None => self.outcomes[i],
                };
                let mut rec = vec![
                    self.ids[i].clone(),
                    self.time_labels[s].to_string(),
                    self.treatments[[i, s]].to_string(),
                    y.to_string(),
                ];
                rec.extend(self.covariates[s].row(i).iter().map(|v| v.to_string()));
                w.write_record(&rec)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_path(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

impl fmt::Display for LongitudinalDataset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} units x {} times", self.n_units(), self.n_times())
    }
}

/// Read a long-format CSV file.
pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<LongitudinalDataset> {
    read_csv(std::fs::File::open(path)?, schema)
}

struct Row {
    id: String,
    time: i64,
    a: u8,
    y: f64,
    x: Vec<f64>,
}

pub fn read_csv<R: Read>(reader: R, schema: &CsvSchema) -> Result<LongitudinalDataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DatasetError::MissingColumn(name.to_string()))
    };
    let id_col = find(&schema.id)?;
    let time_col = find(&schema.time)?;
    let a_col = find(&schema.treatment)?;
    let y_col = find(&schema.outcome)?;
    let cov_names: Vec<String> = match &schema.covariates {
        Some(cols) => cols.clone(),
        None => headers
            .iter()
            .enumerate()
            .filter(|(j, _)| ![id_col, time_col, a_col, y_col].contains(j))
            .map(|(_, h)| h.to_string())
            .collect(),
    };
    let cov_cols = cov_names.iter().map(|c| find(c)).collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let number = |col: usize| -> Result<f64> {
            let raw = rec.get(col).unwrap_or("");
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(DatasetError::NonNumericValue {
                    column: headers[col].to_string(),
                    line,
                    value: raw.to_string(),
                }),
            }
        };
        let id = rec.get(id_col).unwrap_or("").to_string();
        let time_raw = rec.get(time_col).unwrap_or("");
        let time = time_raw.parse::<i64>().map_err(|_| DatasetError::NonNumericValue {
            column: schema.time.clone(),
            line,
            value: time_raw.to_string(),
        })?;
        let a_val = number(a_col)?;
        let a = if a_val == 0.0 {
            0
        } else if a_val == 1.0 {
            1
        } else {
            return Err(DatasetError::NonBinaryTreatment {
                unit: id,
                time,
                value: rec.get(a_col).unwrap_or("").to_string(),
            });
        };
        let y = number(y_col)?;
        let x = cov_cols.iter().map(|&c| number(c)).collect::<Result<Vec<_>>>()?;
        rows.push(Row { id, time, a, y, x });
    }
    if rows.is_empty() {
        return Err(DatasetError::Empty);
    }
    let dataset = assemble(rows, cov_names)?;
    Ok(if schema.time_varying_outcome {
        dataset.with_lagged_outcomes(&schema.outcome)
    } else {
        dataset
    })
}

fn assemble(mut rows: Vec<Row>, cov_names: Vec<String>) -> Result<LongitudinalDataset> {
    let times: BTreeSet<i64> = rows.iter().map(|r| r.time).collect();
    let times: Vec<i64> = times.into_iter().collect();
    if times.windows(2).any(|w| w[1] != w[0] + 1) {
        return Err(DatasetError::NonConsecutiveTimes(times));
    }
    let numeric_ids = rows.iter().all(|r| r.id.parse::<i64>().is_ok());
    if numeric_ids {
        rows.sort_by_key(|r| (r.id.parse::<i64>().unwrap_or_default(), r.time));
    } else {
        rows.sort_by(|a, b| a.id.cmp(&b.id).then(a.time.cmp(&b.time)));
    }

    let n_t = times.len();
    let p = cov_names.len();
    let mut ids: Vec<String> = Vec::new();
    let mut index: HashMap<&str, usize> = HashMap::new();
    for r in &rows {
        if !index.contains_key(r.id.as_str()) {
            index.insert(r.id.as_str(), ids.len());
            ids.push(r.id.clone());
        }
    }
    let n = ids.len();
    let mut seen = vec![false; n * n_t];
    let mut covariates = vec![Array2::<f64>::zeros((n, p)); n_t];
    let mut treatments = Array2::<u8>::zeros((n, n_t));
    let mut row_outcomes = Array2::<f64>::zeros((n, n_t));
    for r in &rows {
        let i = index[r.id.as_str()];
        let s = (r.time - times[0]) as usize;
        if std::mem::replace(&mut seen[i * n_t + s], true) {
            return Err(DatasetError::DuplicateRecord { unit: r.id.clone(), time: r.time });
        }
        treatments[[i, s]] = r.a;
        row_outcomes[[i, s]] = r.y;
        for (j, &v) in r.x.iter().enumerate() {
            covariates[s][[i, j]] = v;
        }
    }
    for i in 0..n {
        for s in 0..n_t {
            if !seen[i * n_t + s] {
                return Err(DatasetError::RaggedPanel { unit: ids[i].clone(), time: times[s] });
            }
        }
    }
    let outcomes = row_outcomes.column(n_t - 1).to_vec();
    LongitudinalDataset::from_parts(
        ids,
        times,
        vec![cov_names; n_t],
        covariates,
        treatments,
        outcomes,
        Some(row_outcomes),
    )
}

/// Flattened history `H_t = (x_1, a_1, x_2, ..., a_{t-1}, x_t)` with one
/// row per unit. Columns run in chronological order: the covariates of each
/// timepoint followed by that timepoint's treatment, ending with `x_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryMatrix {
    pub t: usize,
    pub columns: Vec<String>,
    pub values: Array2<f64>,
}

/// Full-history `H_t` for `t` in `1..=T`.
pub fn build_history(dataset: &LongitudinalDataset, t: usize) -> Result<HistoryMatrix> {
    build_history_truncated(dataset, t, None)
}

/// `H_t` keeping only timepoints `t - max_lag ..= t`.
pub fn build_history_truncated(
    dataset: &LongitudinalDataset,
    t: usize,
    max_lag: Option<usize>,
) -> Result<HistoryMatrix> {
    let n_times = dataset.n_times();
    if t == 0 || t > n_times {
        return Err(DatasetError::TimeOutOfRange { t, n_times });
    }
    let first = max_lag.map_or(1, |lag| t.saturating_sub(lag).max(1));
    let n = dataset.n_units();
    let mut blocks: Vec<ArrayView2<f64>> = Vec::new();
    let mut treat_cols: Vec<Array2<f64>> = Vec::new();
    let mut columns = Vec::new();
    for s in first..t {
        treat_cols.push(dataset.treatments.column(s - 1).mapv(f64::from).into_shape_with_order((n, 1)).expect("column"));
    }
    let mut treat_iter = treat_cols.iter();
    for s in first..=t {
        blocks.push(dataset.covariates(s));
        columns.extend(dataset.covariate_names(s).iter().map(|c| format!("{c}_{s}")));
        if s < t {
            blocks.push(treat_iter.next().expect("one treatment column per prior time").view());
            columns.push(format!("a_{s}"));
        }
    }
    let values = ndarray::concatenate(Axis(1), &blocks).expect("all blocks have n rows");
    Ok(HistoryMatrix { t, columns, values })
}

/// Per-unit split labels in `1..=K`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    labels: Vec<usize>,
    k: usize,
}

impl FoldAssignment {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Units evaluated in fold `k` (1-based).
    pub fn test_units(&self, k: usize) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| self.labels[i] == k).collect()
    }

    /// Units used for training fold `k`'s nuisances. With a single fold
    /// the whole sample is used for both.
    pub fn train_units(&self, k: usize) -> Vec<usize> {
        if self.k == 1 {
            return (0..self.labels.len()).collect();
        }
        (0..self.labels.len()).filter(|&i| self.labels[i] != k).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &l in &self.labels {
            sizes[l - 1] += 1;
        }
        sizes
    }
}

/// Random split of `n` units into `k` groups whose sizes differ by at most
/// one. Depends only on `(n, k, seed)`.
pub fn assign_folds(n: usize, k: usize, seed: u64) -> Result<FoldAssignment> {
    if k == 0 || k > n {
        return Err(DatasetError::InvalidK { k, n });
    }
    let mut labels: Vec<usize> = (0..n).map(|i| i % k + 1).collect();
    labels.shuffle(&mut rng_for(seed, Stream::Folds, n as u64));
    Ok(FoldAssignment { labels, k })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn parse(text: &str) -> Result<LongitudinalDataset> {
        read_csv(text.as_bytes(), &CsvSchema::default())
    }

    #[test]
    fn loads_small_panel() {
        let ds = parse("id,time,a,y,x\n1,1,0,3.5,0.1\n1,2,1,3.5,0.2\n2,1,1,1.0,0.3\n2,2,0,1.0,0.4\n").unwrap();
        assert_eq!(ds.n_units(), 2);
        assert_eq!(ds.n_times(), 2);
        assert_eq!(ds.outcomes(), &[3.5, 1.0]);
        assert_eq!(ds.treatment(2), vec![1, 0]);
        assert_eq!(ds.covariates(2), array![[0.2], [0.4]]);
    }

    #[test]
    fn rows_are_sorted_by_id_then_time() {
        let ds = parse("id,time,a,y,x\n10,2,1,5,4\n2,2,0,7,2\n10,1,0,5,3\n2,1,1,7,1\n").unwrap();
        assert_eq!(ds.ids(), &["2", "10"]);
        assert_eq!(ds.covariates(1), array![[1.0], [3.0]]);
        assert_eq!(ds.outcomes(), &[7.0, 5.0]);
    }

    #[test]
    fn missing_time_is_ragged() {
        let err = parse("id,time,a,y\n1,1,0,1\n1,2,0,1\n2,1,0,1\n").unwrap_err();
        assert!(matches!(err, DatasetError::RaggedPanel { ref unit, time: 2 } if unit == "2"));
    }

    #[test]
    fn treatment_two_is_rejected() {
        let err = parse("id,time,a,y\n1,1,2,1\n").unwrap_err();
        assert!(matches!(err, DatasetError::NonBinaryTreatment { .. }));
    }

    #[test]
    fn missing_column_and_bad_numbers() {
        assert!(matches!(parse("id,time,y\n1,1,1\n"), Err(DatasetError::MissingColumn(c)) if c == "a"));
        assert!(matches!(parse("id,time,a,y,x\n1,1,0,1,abc\n"), Err(DatasetError::NonNumericValue { .. })));
        assert!(matches!(parse("id,time,a,y,x\n1,1,0,1,\n"), Err(DatasetError::NonNumericValue { .. })));
        assert!(matches!(parse("id,time,a,y\n1,1,0,1\n1,1,1,1\n"), Err(DatasetError::DuplicateRecord { .. })));
        assert!(matches!(parse("id,time,a,y\n1,1,0,1\n1,3,1,1\n"), Err(DatasetError::NonConsecutiveTimes(_))));
    }

    #[test]
    fn explicit_schema_selects_covariates() {
        let schema = CsvSchema { covariates: Some(vec!["x2".into()]), ..CsvSchema::default() };
        let ds = read_csv("id,time,a,y,x1,x2\n1,1,0,1,9,8\n".as_bytes(), &schema).unwrap();
        assert_eq!(ds.covariate_names(1), &["x2"]);
        assert_eq!(ds.covariates(1), array![[8.0]]);
    }

    #[test]
    fn time_varying_outcome_becomes_lagged_covariate() {
        let schema = CsvSchema { time_varying_outcome: true, ..CsvSchema::default() };
        let ds = read_csv("id,time,a,y,x\n1,1,0,4,0\n1,2,1,6,1\n".as_bytes(), &schema).unwrap();
        assert_eq!(ds.outcomes(), &[6.0]);
        assert_eq!(ds.covariate_names(1), &["x"]);
        assert_eq!(ds.covariate_names(2), &["x", "y_lag"]);
        assert_eq!(ds.covariates(2), array![[1.0, 4.0]]);
    }

    fn two_time_dataset() -> LongitudinalDataset {
        LongitudinalDataset::new(
            vec![array![[1.0], [5.0]], array![[3.0], [7.0]]],
            array![[1, 0], [0, 1]],
            vec![0.0, 1.0],
        )
        .unwrap()
    }

    #[test]
    fn history_at_first_time_is_baseline_only() {
        let ds = two_time_dataset();
        let h = build_history(&ds, 1).unwrap();
        assert_eq!(h.values, array![[1.0], [5.0]]);
        assert_eq!(h.columns, vec!["x1_1"]);
    }

    #[test]
    fn history_at_second_time_is_chronological() {
        let h = build_history(&two_time_dataset(), 2).unwrap();
        assert_eq!(h.values.row(0).to_vec(), vec![1.0, 1.0, 3.0]);
        assert_eq!(h.columns, vec!["x1_1", "a_1", "x1_2"]);
    }

    #[test]
    fn history_out_of_range() {
        let ds = two_time_dataset();
        assert!(matches!(build_history(&ds, 3), Err(DatasetError::TimeOutOfRange { t: 3, n_times: 2 })));
        assert!(build_history(&ds, 0).is_err());
    }

    #[test]
    fn truncated_history_keeps_recent_lags() {
        let ds = LongitudinalDataset::new(
            vec![array![[1.0]], array![[2.0]], array![[3.0]]],
            array![[1, 0, 1]],
            vec![0.0],
        )
        .unwrap();
        let h = build_history_truncated(&ds, 3, Some(1)).unwrap();
        assert_eq!(h.values, array![[2.0, 0.0, 3.0]]);
        let full = build_history_truncated(&ds, 3, None).unwrap();
        assert_eq!(full.values, array![[1.0, 1.0, 2.0, 0.0, 3.0]]);
    }

    #[test]
    fn folds_are_deterministic_and_balanced() {
        let a = assign_folds(10, 2, 7).unwrap();
        assert_eq!(a, assign_folds(10, 2, 7).unwrap());
        let each = assign_folds(10, 10, 3).unwrap();
        assert_eq!(each.sizes(), vec![1; 10]);
        let mut five = assign_folds(5, 2, 1).unwrap().sizes();
        five.sort();
        assert_eq!(five, vec![2, 3]);
        assert!(matches!(assign_folds(3, 4, 0), Err(DatasetError::InvalidK { .. })));
        assert!(matches!(assign_folds(3, 0, 0), Err(DatasetError::InvalidK { .. })));
    }

    #[test]
    fn single_fold_trains_on_everything() {
        let f = assign_folds(4, 1, 0).unwrap();
        assert_eq!(f.train_units(1), vec![0, 1, 2, 3]);
        assert_eq!(f.test_units(1), vec![0, 1, 2, 3]);
    }
}
