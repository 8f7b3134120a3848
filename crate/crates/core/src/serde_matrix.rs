//! JSON encoding of complex matrices as row-major nested `[re, im]` pairs:
//! `[[[re, im], [re, im], ...], ...]`, one inner array per row.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::linalg::{c, CMatrix};

pub fn to_rows(m: &CMatrix) -> Vec<Vec<[f64; 2]>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect()).collect()
}

pub fn from_rows(rows: &[Vec<[f64; 2]>]) -> Result<CMatrix, String> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != ncols) {
        return Err("ragged matrix rows".into());
    }
    Ok(CMatrix::from_fn(nrows, ncols, |i, j| c(rows[i][j][0], rows[i][j][1])))
}

pub fn serialize<S: Serializer>(m: &CMatrix, s: S) -> Result<S::Ok, S::Error> {
    to_rows(m).serialize(s)
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<CMatrix, D::Error> {
    let rows = Vec::<Vec<[f64; 2]>>::deserialize(d)?;
    from_rows(&rows).map_err(D::Error::custom)
}

pub mod vec {
    use super::*;

    pub fn serialize<S: Serializer>(ms: &[CMatrix], s: S) -> Result<S::Ok, S::Error> {
        ms.iter().map(to_rows).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<CMatrix>, D::Error> {
        let all = Vec::<Vec<Vec<[f64; 2]>>>::deserialize(d)?;
        all.iter().map(|rows| from_rows(rows).map_err(D::Error::custom)).collect()
    }
}

pub mod option {
    use super::*;

    pub fn serialize<S: Serializer>(m: &Option<CMatrix>, s: S) -> Result<S::Ok, S::Error> {
        m.as_ref().map(to_rows).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<CMatrix>, D::Error> {
        let rows = Option::<Vec<Vec<[f64; 2]>>>::deserialize(d)?;
        rows.map(|r| from_rows(&r).map_err(D::Error::custom)).transpose()
    }
}
