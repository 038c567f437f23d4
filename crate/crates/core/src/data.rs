//! Competing-risks records, time grids, CSV ingestion and fold partitioning.
//!
//! The on-disk layout is one row per subject with columns
//! `time,status,cause,w1..wp`, where `status` is the any-event indicator and
//! `cause` is zero for censored rows. Lines starting with `#` are comments.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// One right-censored competing-risks record `(T~, Delta, M*Delta, W)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub time: f64,
    pub delta: bool,
    /// Zero iff censored.
    pub cause: usize,
    pub covariates: Vec<f64>,
}

impl Observation {
    pub fn new(time: f64, delta: bool, cause: usize, covariates: Vec<f64>) -> Result<Self> {
        let obs = Observation {
            time,
            delta,
            cause,
            covariates,
        };
        obs.check().map_err(Error::Validation)?;
        Ok(obs)
    }

    pub fn event(time: f64, cause: usize, covariates: Vec<f64>) -> Result<Self> {
        Self::new(time, true, cause, covariates)
    }

    pub fn censored(time: f64, covariates: Vec<f64>) -> Result<Self> {
        Self::new(time, false, 0, covariates)
    }

    fn check(&self) -> std::result::Result<(), String> {
        if !(self.time.is_finite() && self.time > 0.0) {
            return Err(format!("nonpositive time {}", self.time));
        }
        if self.delta != (self.cause >= 1) {
            return Err(format!(
                "cause/status inconsistency: status={} cause={}",
                self.delta as u8, self.cause
            ));
        }
        if let Some(x) = self.covariates.iter().find(|x| !x.is_finite()) {
            return Err(format!("non-finite covariate value {x}"));
        }
        Ok(())
    }

    /// `I(T~ <= t, M = m)`.
    #[inline]
    pub fn observed_incidence(&self, t: f64, cause: usize) -> bool {
        self.delta && self.cause == cause && self.time <= t
    }
}

/// An immutable, validated collection of observations.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    observations: Vec<Observation>,
    n_causes: usize,
    covariate_names: Vec<String>,
}

impl Dataset {
    /// Validates and wraps observations. `n_causes` defaults to the largest
    /// observed cause (at least 2).
    pub fn new(
        observations: Vec<Observation>,
        covariate_names: Vec<String>,
        n_causes: Option<usize>,
    ) -> Result<Self> {
        if observations.is_empty() {
            return Err(Error::Validation("dataset has no observations".into()));
        }
        let p = covariate_names.len();
        for (i, obs) in observations.iter().enumerate() {
            obs.check()
                .map_err(|m| Error::Validation(format!("{m} at row {}", i + 1)))?;
            if obs.covariates.len() != p {
                return Err(Error::Validation(format!(
                    "row {} has {} covariates, expected {p}",
                    i + 1,
                    obs.covariates.len()
                )));
            }
        }
        let max_cause = observations.iter().map(|o| o.cause).max().unwrap_or(0);
        let n_causes = match n_causes {
            Some(k) if k < max_cause => {
                return Err(Error::Validation(format!(
                    "observed cause {max_cause} exceeds n_causes {k}"
                )))
            }
            Some(k) if k < 2 => {
                return Err(Error::Validation("n_causes must be at least 2".into()))
            }
            Some(k) => k,
            None => max_cause.max(2),
        };
        Ok(Dataset {
            observations,
            n_causes,
            covariate_names,
        })
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn n_causes(&self) -> usize {
        self.n_causes
    }

    pub fn n_covariates(&self) -> usize {
        self.covariate_names.len()
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn get(&self, i: usize) -> &Observation {
        &self.observations[i]
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Observation> {
        self.observations.iter()
    }

    pub fn censoring_fraction(&self) -> f64 {
        let censored = self.observations.iter().filter(|o| !o.delta).count();
        censored as f64 / self.len() as f64
    }

    /// Subset by row indices, preserving the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let observations = indices
            .iter()
            .map(|&i| self.observations[i].clone())
            .collect();
        Dataset::new(
            observations,
            self.covariate_names.clone(),
            Some(self.n_causes),
        )
    }

    pub fn into_observations(self) -> Vec<Observation> {
        self.observations
    }
}

/// Strictly increasing evaluation times with positive weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    times: Vec<f64>,
    weights: Vec<f64>,
}

impl TimeGrid {
    /// Weights are normalized; `None` gives uniform weights `1/J`.
    pub fn new(times: Vec<f64>, weights: Option<Vec<f64>>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::InvalidArgument("time grid is empty".into()));
        }
        if times.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(Error::InvalidArgument(
                "grid times must be positive and finite".into(),
            ));
        }
        if times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(
                "grid times must be strictly increasing".into(),
            ));
        }
        let weights = match weights {
            None => vec![1.0 / times.len() as f64; times.len()],
            Some(w) => {
                if w.len() != times.len() {
                    return Err(Error::InvalidArgument(format!(
                        "{} weights for {} grid times",
                        w.len(),
                        times.len()
                    )));
                }
                if w.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                    return Err(Error::InvalidArgument("grid weights must be positive".into()));
                }
                let total: f64 = w.iter().sum();
                w.iter().map(|x| x / total).collect()
            }
        };
        Ok(TimeGrid { times, weights })
    }

    pub fn single(t: f64) -> Result<Self> {
        Self::new(vec![t], None)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Column-name mapping for CSV ingestion.
#[derive(Debug, Clone)]
pub struct CsvSchema {
    pub time: String,
    pub status: String,
    pub cause: String,
    /// `None` uses every remaining column, in file order.
    pub covariates: Option<Vec<String>>,
    pub n_causes: Option<usize>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema {
            time: "time".into(),
            status: "status".into(),
            cause: "cause".into(),
            covariates: None,
            n_causes: None,
        }
    }
}

fn reader_builder() -> csv::ReaderBuilder {
    let mut b = csv::ReaderBuilder::new();
    b.has_headers(true).comment(Some(b'#')).trim(csv::Trim::All);
    b
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::Validation(format!("missing column '{name}'")))
}

fn parse_field<T: std::str::FromStr>(
    record: &csv::StringRecord,
    idx: usize,
    row: usize,
    column: &str,
) -> Result<T> {
    let raw = record.get(idx).unwrap_or("");
    raw.parse::<T>().map_err(|_| Error::Parse {
        row,
        column: column.to_string(),
        message: format!("cannot parse '{raw}'"),
    })
}

pub fn read_csv<R: Read>(reader: R, schema: &CsvSchema) -> Result<Dataset> {
    let mut rdr = reader_builder().from_reader(reader);
    let headers = rdr.headers()?.clone();
    let time_idx = column_index(&headers, &schema.time)?;
    let status_idx = column_index(&headers, &schema.status)?;
    let cause_idx = column_index(&headers, &schema.cause)?;
    let covariate_names: Vec<String> = match &schema.covariates {
        Some(names) => names.clone(),
        None => headers
            .iter()
            .enumerate()
            .filter(|(i, _)| ![time_idx, status_idx, cause_idx].contains(i))
            .map(|(_, h)| h.to_string())
            .collect(),
    };
    let cov_idx = covariate_names
        .iter()
        .map(|name| column_index(&headers, name))
        .collect::<Result<Vec<_>>>()?;

    let mut observations = Vec::new();
    for (k, record) in rdr.records().enumerate() {
        let row = k + 1;
        let record = record.map_err(|e| Error::Parse {
            row,
            column: String::new(),
            message: e.to_string(),
        })?;
        if record.len() != headers.len() {
            return Err(Error::Parse {
                row,
                column: String::new(),
                message: format!("ragged row: {} fields, expected {}", record.len(), headers.len()),
            });
        }
        let time: f64 = parse_field(&record, time_idx, row, &schema.time)?;
        if !(time > 0.0) {
            return Err(Error::Validation(format!("nonpositive time at row {row}")));
        }
        let status: u8 = parse_field(&record, status_idx, row, &schema.status)?;
        if status > 1 {
            return Err(Error::Parse {
                row,
                column: schema.status.clone(),
                message: format!("status must be 0 or 1, got {status}"),
            });
        }
        let cause: usize = parse_field(&record, cause_idx, row, &schema.cause)?;
        let covariates = cov_idx
            .iter()
            .zip(&covariate_names)
            .map(|(&i, name)| parse_field::<f64>(&record, i, row, name))
            .collect::<Result<Vec<_>>>()?;
        let obs = Observation {
            time,
            delta: status == 1,
            cause,
            covariates,
        };
        obs.check()
            .map_err(|m| Error::Validation(format!("{m} at row {row}")))?;
        observations.push(obs);
    }
    Dataset::new(observations, covariate_names, schema.n_causes)
}

pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, schema)
}

/// Reads only the named covariate columns (other columns are ignored).
pub fn read_covariates<R: Read>(reader: R, names: &[String]) -> Result<Vec<Vec<f64>>> {
    let mut rdr = reader_builder().from_reader(reader);
    let headers = rdr.headers()?.clone();
    let idx = names
        .iter()
        .map(|name| column_index(&headers, name))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for (k, record) in rdr.records().enumerate() {
        let record = record?;
        let row = idx
            .iter()
            .zip(names)
            .map(|(&i, name)| parse_field::<f64>(&record, i, k + 1, name))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

/// Writes the dataset in the load schema. Floats use the shortest
/// representation that parses back to the same bits.
pub fn write_csv<W: Write>(data: &Dataset, mut out: W) -> Result<()> {
    let mut header = String::from("time,status,cause");
    for name in data.covariate_names() {
        header.push(',');
        header.push_str(name);
    }
    let map_io = |e| Error::io("<csv output>", e);
    writeln!(out, "{header}").map_err(map_io)?;
    for obs in data.iter() {
        let mut line = format!("{},{},{}", obs.time, obs.delta as u8, obs.cause);
        for x in &obs.covariates {
            line.push(',');
            line.push_str(&x.to_string());
        }
        writeln!(out, "{line}").map_err(map_io)?;
    }
    Ok(())
}

pub fn save_csv(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_csv(data, &mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Partitions `0..n` into `q` disjoint folds whose sizes differ by at most one.
/// The first `n % q` folds receive the extra element.
pub fn split_folds(n: usize, q: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if q < 2 || q > n {
        return Err(Error::InvalidArgument(format!(
            "fold count {q} out of range [2, {n}]"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut folds = vec![Vec::with_capacity(n / q + 1); q];
    for (pos, i) in order.into_iter().enumerate() {
        folds[pos % q].push(i);
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn schema() -> CsvSchema {
        CsvSchema::default()
    }

    #[test]
    fn loads_two_rows() {
        let csv = "time,status,cause,w1,w2\n2.0,1,1,0.1,0.2\n1.5,0,0,0.3,0.4\n";
        let d = read_csv(csv.as_bytes(), &schema()).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.n_causes(), 2);
        assert!(d.get(0).delta && d.get(0).cause == 1);
        assert!(!d.get(1).delta && d.get(1).cause == 0);
        assert_eq!(d.get(1).covariates, vec![0.3, 0.4]);
        assert_eq!(d.covariate_names(), &["w1".to_string(), "w2".to_string()]);
    }

    #[test]
    fn rejects_nonpositive_time() {
        let csv = "time,status,cause,w1\n1.0,1,1,0\n-1,1,1,0\n";
        let err = read_csv(csv.as_bytes(), &schema()).unwrap_err();
        assert!(err.to_string().contains("nonpositive time at row 2"), "{err}");
    }

    #[test]
    fn rejects_inconsistent_cause() {
        let csv = "time,status,cause,w1\n1.0,1,0,0\n";
        assert!(read_csv(csv.as_bytes(), &schema()).is_err());
        let csv = "time,status,cause,w1\n1.0,0,2,0\n";
        assert!(read_csv(csv.as_bytes(), &schema()).is_err());
    }

    #[test]
    fn reports_parse_location() {
        let csv = "time,status,cause,w1\n1.0,1,1,abc\n";
        match read_csv(csv.as_bytes(), &schema()).unwrap_err() {
            Error::Parse { row, column, .. } => {
                assert_eq!(row, 1);
                assert_eq!(column, "w1");
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn rejects_ragged_rows() {
        let csv = "time,status,cause,w1\n1.0,1,1\n";
        assert!(read_csv(csv.as_bytes(), &schema()).is_err());
    }

    #[test]
    fn honours_cause_override_and_comments() {
        let csv = "# produced by test\ntime,status,cause,w1\n1.0,1,1,0\n";
        let mut s = schema();
        s.n_causes = Some(3);
        let d = read_csv(csv.as_bytes(), &s).unwrap();
        assert_eq!(d.n_causes(), 3);
        s.n_causes = Some(2);
        let csv = "time,status,cause,w1\n1.0,1,3,0\n";
        assert!(read_csv(csv.as_bytes(), &s).is_err());
    }

    #[test]
    fn grid_normalizes() {
        let g = TimeGrid::new(vec![1.0, 2.0], Some(vec![1.0, 3.0])).unwrap();
        assert_eq!(g.weights(), &[0.25, 0.75]);
        assert!(TimeGrid::new(vec![2.0, 1.0], None).is_err());
        assert!(TimeGrid::new(vec![1.0, 1.0], None).is_err());
        assert!(TimeGrid::new(vec![1.0], Some(vec![0.0])).is_err());
    }

    #[test]
    fn folds_examples() {
        let f = split_folds(10, 10, 1).unwrap();
        assert!(f.iter().all(|s| s.len() == 1));
        let f = split_folds(10, 3, 1).unwrap();
        let mut sizes: Vec<_> = f.iter().map(|s| s.len()).collect();
        sizes.sort_unstable_by(|a, b| b.cmp(a));
        assert_eq!(sizes, vec![4, 3, 3]);
        assert_eq!(split_folds(10, 3, 9).unwrap(), split_folds(10, 3, 9).unwrap());
        assert!(split_folds(10, 1, 0).is_err());
        assert!(split_folds(10, 11, 0).is_err());
    }

    proptest! {
        #[test]
        fn folds_are_balanced_partitions(n in 2usize..200, qf in 0.0f64..1.0, seed in any::<u64>()) {
            let q = 2 + ((n - 2) as f64 * qf) as usize;
            let folds = split_folds(n, q, seed).unwrap();
            prop_assert_eq!(folds.len(), q);
            let mut all: Vec<usize> = folds.iter().flatten().copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            let max = folds.iter().map(|f| f.len()).max().unwrap();
            let min = folds.iter().map(|f| f.len()).min().unwrap();
            prop_assert!(max - min <= 1);
        }

        #[test]
        fn observation_coupling(time in 1e-6f64..100.0, delta in any::<bool>(), cause in 0usize..4) {
            let ok = Observation::new(time, delta, cause, vec![0.0]).is_ok();
            prop_assert_eq!(ok, delta == (cause >= 1));
        }
    }
}
