use std::collections::HashMap;
use std::io::Read;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use super::DataError;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Intercept,
    Continuous,
    Binary,
    Dummy,
}

/// N×P actor design matrix: an intercept column followed by standardized
/// continuous columns, 0/1 binary columns and dummy indicators.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateMatrix<S> {
    values: Array2<S>,
    names: Vec<String>,
    kinds: Vec<ColumnKind>,
}

impl<S: Scalar> CovariateMatrix<S> {
    /// Wraps an already-encoded design matrix after checking it has exactly
    /// one intercept column of ones.
    pub fn new(
        values: Array2<S>,
        names: Vec<String>,
        kinds: Vec<ColumnKind>,
    ) -> Result<Self, DataError> {
        if names.len() != values.ncols() || kinds.len() != values.ncols() {
            return Err(DataError::InvalidCovariates(format!(
                "{} columns but {} names and {} kinds",
                values.ncols(),
                names.len(),
                kinds.len()
            )));
        }
        let intercepts: Vec<usize> =
            kinds.iter().enumerate().filter(|(_, &k)| k == ColumnKind::Intercept).map(|(c, _)| c).collect();
        if intercepts.len() != 1 {
            return Err(DataError::InvalidCovariates(format!(
                "expected exactly one intercept column, found {}",
                intercepts.len()
            )));
        }
        if values.column(intercepts[0]).iter().any(|&v| v != S::one()) {
            return Err(DataError::InvalidCovariates("intercept column must be all ones".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(DataError::InvalidCovariates("non-finite entry".into()));
        }
        Ok(CovariateMatrix { values, names, kinds })
    }

    /// Design matrix with only the intercept column.
    pub fn intercept_only(n_actors: usize) -> Self {
        CovariateMatrix {
            values: Array2::ones((n_actors, 1)),
            names: vec!["intercept".to_string()],
            kinds: vec![ColumnKind::Intercept],
        }
    }

    /// Builds a design matrix from raw columns, prepending the intercept and
    /// standardizing every continuous column to mean 0, sample sd 1.
    pub fn from_columns(
        n_actors: usize,
        columns: Vec<(String, ColumnKind, Vec<S>)>,
    ) -> Result<Self, DataError> {
        let p = columns.len() + 1;
        let mut values = Array2::<S>::ones((n_actors, p));
        let mut names = vec!["intercept".to_string()];
        let mut kinds = vec![ColumnKind::Intercept];
        for (c, (name, kind, raw)) in columns.into_iter().enumerate() {
            if raw.len() != n_actors {
                return Err(DataError::RowCount { expected: n_actors, found: raw.len() });
            }
            let col = match kind {
                ColumnKind::Intercept => {
                    return Err(DataError::InvalidCovariates(
                        "the intercept column is added automatically".into(),
                    ))
                }
                ColumnKind::Continuous => standardize(&name, &raw)?,
                ColumnKind::Binary | ColumnKind::Dummy => {
                    if let Some(v) = raw.iter().find(|&&v| v != S::zero() && v != S::one()) {
                        return Err(DataError::InvalidCovariates(format!(
                            "column `{name}` must be 0/1, found {v}"
                        )));
                    }
                    raw
                }
            };
            for (i, v) in col.into_iter().enumerate() {
                values[[i, c + 1]] = v;
            }
            names.push(name);
            kinds.push(kind);
        }
        CovariateMatrix::new(values, names, kinds)
    }

    pub fn n_actors(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_covariates(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Array2<S> {
        &self.values
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, S> {
        self.values.row(i)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn kinds(&self) -> &[ColumnKind] {
        &self.kinds
    }

    pub fn intercept_index(&self) -> usize {
        self.kinds.iter().position(|&k| k == ColumnKind::Intercept).unwrap()
    }
}

fn standardize<S: Scalar>(name: &str, raw: &[S]) -> Result<Vec<S>, DataError> {
    let n = raw.len();
    if n < 2 {
        return Err(DataError::ZeroVariance(name.to_string()));
    }
    let nf = S::from_usize_lossy(n);
    let mean = raw.iter().copied().sum::<S>() / nf;
    let ss: S = raw.iter().map(|&v| (v - mean) * (v - mean)).sum();
    let sd = (ss / (nf - S::one())).sqrt();
    if !(sd > S::zero()) {
        return Err(DataError::ZeroVariance(name.to_string()));
    }
    Ok(raw.iter().map(|&v| (v - mean) / sd).collect())
}

/// How one input column is encoded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SchemaKind {
    Continuous,
    Binary,
    /// Expanded into one dummy indicator per non-baseline level, in the
    /// listed order. Each level carries the output column label.
    Categorical { baseline: String, levels: Vec<(String, String)> },
    Skip,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub name: String,
    pub kind: SchemaKind,
}

/// Column encodings for a covariate CSV. Header columns not named in the
/// schema are ignored.
///
/// Text form, one column per line:
///
/// ```text
/// seniority   continuous
/// gender      binary
/// law_school  categorical baseline=0 levels=1:UConn,2:Other
/// office      skip
/// ```
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CovariateSchema {
    pub columns: Vec<ColumnSchema>,
}

impl CovariateSchema {
    pub fn parse(text: &str) -> Result<Self, DataError> {
        let mut columns = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let content = line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let err = |message: String| DataError::Schema { line: line_no, message };
            let mut parts = content.split_whitespace();
            let name = parts.next().unwrap().to_string();
            let kind = parts.next().ok_or_else(|| err(format!("column `{name}` has no kind")))?;
            let kind = match kind {
                "continuous" => SchemaKind::Continuous,
                "binary" => SchemaKind::Binary,
                "skip" => SchemaKind::Skip,
                "categorical" => {
                    let mut baseline = None;
                    let mut levels = Vec::new();
                    for opt in parts.by_ref() {
                        if let Some(b) = opt.strip_prefix("baseline=") {
                            baseline = Some(b.to_string());
                        } else if let Some(ls) = opt.strip_prefix("levels=") {
                            for item in ls.split(',').filter(|s| !s.is_empty()) {
                                let (level, label) = match item.split_once(':') {
                                    Some((l, lab)) => (l.to_string(), lab.to_string()),
                                    None => (item.to_string(), format!("{name}={item}")),
                                };
                                levels.push((level, label));
                            }
                        } else {
                            return Err(err(format!("unknown categorical option `{opt}`")));
                        }
                    }
                    let baseline =
                        baseline.ok_or_else(|| err(format!("categorical `{name}` needs baseline=")))?;
                    if levels.is_empty() {
                        return Err(err(format!("categorical `{name}` needs levels=")));
                    }
                    if levels.iter().any(|(l, _)| *l == baseline) {
                        return Err(err(format!("baseline `{baseline}` repeated in levels")));
                    }
                    SchemaKind::Categorical { baseline, levels }
                }
                other => return Err(err(format!("unknown column kind `{other}`"))),
            };
            if parts.next().is_some() {
                return Err(err("trailing tokens".into()));
            }
            if columns.iter().any(|c: &ColumnSchema| c.name == name) {
                return Err(err(format!("column `{name}` listed twice")));
            }
            columns.push(ColumnSchema { name, kind });
        }
        Ok(CovariateSchema { columns })
    }
}

/// Reads a covariate CSV with a header row and one row per actor in id
/// order, encoding columns per `schema`.
pub fn load_covariates<S: Scalar, R: Read>(
    source: R,
    schema: &CovariateSchema,
    n_actors: usize,
) -> Result<CovariateMatrix<S>, DataError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
    let header: HashMap<String, usize> =
        reader.headers()?.iter().enumerate().map(|(c, h)| (h.to_string(), c)).collect();
    let mut positions = Vec::new();
    for col in &schema.columns {
        if col.kind == SchemaKind::Skip {
            continue;
        }
        let pos = *header.get(&col.name).ok_or_else(|| DataError::MissingColumn(col.name.clone()))?;
        positions.push((col, pos));
    }

    let records: Vec<csv::StringRecord> = reader.records().collect::<Result<_, _>>()?;
    if records.len() != n_actors {
        return Err(DataError::RowCount { expected: n_actors, found: records.len() });
    }

    let mut columns: Vec<(String, ColumnKind, Vec<S>)> = Vec::new();
    for (col, pos) in positions {
        let cell = |row: usize| -> Result<&str, DataError> {
            let v = records[row].get(pos).unwrap_or("");
            if v.is_empty() || v.eq_ignore_ascii_case("na") {
                Err(DataError::MissingValue { row: row + 1, column: col.name.clone() })
            } else {
                Ok(v)
            }
        };
        match &col.kind {
            SchemaKind::Continuous | SchemaKind::Binary => {
                let mut vals = Vec::with_capacity(n_actors);
                for row in 0..n_actors {
                    let raw = cell(row)?;
                    let v: S = raw.parse().map_err(|_| DataError::BadValue {
                        row: row + 1,
                        column: col.name.clone(),
                        message: format!("`{raw}` is not a number"),
                    })?;
                    if col.kind == SchemaKind::Binary && v != S::zero() && v != S::one() {
                        return Err(DataError::BadValue {
                            row: row + 1,
                            column: col.name.clone(),
                            message: format!("binary column holds `{raw}`"),
                        });
                    }
                    vals.push(v);
                }
                let kind = if col.kind == SchemaKind::Binary {
                    ColumnKind::Binary
                } else {
                    ColumnKind::Continuous
                };
                columns.push((col.name.clone(), kind, vals));
            }
            SchemaKind::Categorical { baseline, levels } => {
                let mut dummies: Vec<Vec<S>> = vec![Vec::with_capacity(n_actors); levels.len()];
                for row in 0..n_actors {
                    let raw = cell(row)?;
                    let hit = levels.iter().position(|(l, _)| l == raw);
                    if hit.is_none() && raw != baseline {
                        return Err(DataError::UnknownLevel {
                            row: row + 1,
                            column: col.name.clone(),
                            level: raw.to_string(),
                        });
                    }
                    for (k, d) in dummies.iter_mut().enumerate() {
                        d.push(if hit == Some(k) { S::one() } else { S::zero() });
                    }
                }
                for ((_, label), d) in levels.iter().zip(dummies) {
                    columns.push((label.clone(), ColumnKind::Dummy, d));
                }
            }
            SchemaKind::Skip => unreachable!(),
        }
    }
    CovariateMatrix::from_columns(n_actors, columns)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema(text: &str) -> CovariateSchema {
        CovariateSchema::parse(text).unwrap()
    }

    #[test]
    fn standardizes_continuous_column() {
        let w: CovariateMatrix<f64> =
            load_covariates("x\n1\n2\n3\n".as_bytes(), &schema("x continuous"), 3).unwrap();
        assert_eq!(w.n_covariates(), 2);
        assert_eq!(w.names(), &["intercept".to_string(), "x".to_string()]);
        let col: Vec<f64> = w.values().column(1).to_vec();
        assert_eq!(col, vec![-1.0, 0.0, 1.0]);
        assert!(w.values().column(0).iter().all(|&v| v == 1.0));
    }

    #[test]
    fn categorical_expands_against_baseline() {
        let text = "law_school,office\n0,1\n1,2\n2,1\n1,3\n";
        let s = schema("law_school categorical baseline=0 levels=1:UConn,2:Other\noffice skip\n");
        let w: CovariateMatrix<f64> = load_covariates(text.as_bytes(), &s, 4).unwrap();
        assert_eq!(w.names(), &["intercept", "UConn", "Other"]);
        assert_eq!(w.kinds(), &[ColumnKind::Intercept, ColumnKind::Dummy, ColumnKind::Dummy]);
        assert_eq!(w.values().column(1).to_vec(), vec![0.0, 1.0, 0.0, 1.0]);
        assert_eq!(w.values().column(2).to_vec(), vec![0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn rejects_bad_inputs() {
        let s = schema("x continuous");
        assert!(matches!(
            load_covariates::<f64, _>("x\n4\n4\n4\n".as_bytes(), &s, 3),
            Err(DataError::ZeroVariance(_))
        ));
        assert!(matches!(
            load_covariates::<f64, _>("x,y\n1,0\nNA,1\n3,0\n".as_bytes(), &s, 3),
            Err(DataError::MissingValue { row: 2, .. })
        ));
        assert!(matches!(
            load_covariates::<f64, _>("x\n1\n2\n".as_bytes(), &s, 3),
            Err(DataError::RowCount { expected: 3, found: 2 })
        ));
        let cat = schema("c categorical baseline=a levels=b");
        assert!(matches!(
            load_covariates::<f64, _>("c\na\nz\n".as_bytes(), &cat, 2),
            Err(DataError::UnknownLevel { row: 2, .. })
        ));
        let bin = schema("g binary");
        assert!(matches!(
            load_covariates::<f64, _>("g\n0\n2\n".as_bytes(), &bin, 2),
            Err(DataError::BadValue { row: 2, .. })
        ));
        assert!(matches!(
            load_covariates::<f64, _>("h\n0\n1\n".as_bytes(), &bin, 2),
            Err(DataError::MissingColumn(_))
        ));
    }

    #[test]
    fn schema_parse_errors() {
        assert!(CovariateSchema::parse("x").is_err());
        assert!(CovariateSchema::parse("x weird").is_err());
        assert!(CovariateSchema::parse("x categorical levels=1").is_err());
        assert!(CovariateSchema::parse("x categorical baseline=0 levels=0,1").is_err());
        assert!(CovariateSchema::parse("x continuous\nx binary").is_err());
        let s = schema("# comment\nx categorical baseline=0 levels=1,2\n");
        assert_eq!(
            s.columns[0].kind,
            SchemaKind::Categorical {
                baseline: "0".into(),
                levels: vec![("1".into(), "x=1".into()), ("2".into(), "x=2".into())]
            }
        );
    }

    #[test]
    fn new_requires_single_intercept() {
        let v = Array2::<f64>::ones((3, 2));
        let r = CovariateMatrix::new(
            v,
            vec!["a".into(), "b".into()],
            vec![ColumnKind::Intercept, ColumnKind::Intercept],
        );
        assert!(r.is_err());
        let w = CovariateMatrix::<f64>::intercept_only(4);
        assert_eq!(w.intercept_index(), 0);
        assert_eq!(w.n_actors(), 4);
    }

    proptest::proptest! {
        #[test]
        fn standardized_moments(raw in proptest::collection::vec(-1e3f64..1e3, 3..60)) {
            let n = raw.len();
            let spread = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                - raw.iter().cloned().fold(f64::INFINITY, f64::min);
            proptest::prop_assume!(spread > 1e-6);
            let w = CovariateMatrix::from_columns(n, vec![("x".into(), ColumnKind::Continuous, raw)]).unwrap();
            let col = w.values().column(1);
            let mean = col.sum() / n as f64;
            let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt();
            proptest::prop_assert!(mean.abs() < 1e-12);
            proptest::prop_assert!((sd - 1.0).abs() < 1e-12);
        }
    }
}
