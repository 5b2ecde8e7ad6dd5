//! (De)serializes an `Array2` as a list of rows.

use ndarray::Array2;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub fn serialize<S, T>(matrix: &Array2<T>, serializer: S) -> Result<S::Ok, S::Error>
where
    S: Serializer,
    T: Serialize,
{
    let (n_rows, n_cols) = matrix.dim();
    let rows: Vec<Vec<&T>> =
        (0..n_rows).map(|i| (0..n_cols).map(|j| &matrix[[i, j]]).collect()).collect();
    rows.serialize(serializer)
}

pub fn deserialize<'de, D, T>(deserializer: D) -> Result<Array2<T>, D::Error>
where
    D: Deserializer<'de>,
    T: Deserialize<'de> + Clone,
{
    let rows: Vec<Vec<T>> = Vec::deserialize(deserializer)?;
    let n_cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != n_cols) {
        return Err(D::Error::custom("ragged matrix rows"));
    }
    let n_rows = rows.len();
    let flat: Vec<T> = rows.into_iter().flatten().collect();
    Array2::from_shape_vec((n_rows, n_cols), flat).map_err(D::Error::custom)
}
