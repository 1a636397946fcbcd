use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::registry::FeatureKind;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub kind: FeatureKind,
    /// Columns sharing a group are one logical feature (one-hot blocks).
    pub group: String,
}

impl Column {
    pub fn new(name: impl Into<String>, kind: FeatureKind) -> Self {
        let name = name.into();
        Column {
            group: name.clone(),
            name,
            kind,
        }
    }

    pub fn grouped(name: impl Into<String>, kind: FeatureKind, group: impl Into<String>) -> Self {
        Column {
            name: name.into(),
            kind,
            group: group.into(),
        }
    }
}

/// Row-major design matrix with an explicit missingness mask. Missing cells
/// hold `NaN` and nothing else does.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureMatrix {
    patient_ids: Vec<String>,
    columns: Vec<Column>,
    values: Vec<f64>,
    mask: Vec<bool>,
}

const FORMAT_TAG: &str = "#format=radsurv.feature-matrix;version=1";
const MISSING: &str = "NA";

impl FeatureMatrix {
    /// All cells missing.
    pub fn new(patient_ids: Vec<String>, columns: Vec<Column>) -> Self {
        let n = patient_ids.len() * columns.len();
        FeatureMatrix {
            patient_ids,
            columns,
            values: vec![f64::NAN; n],
            mask: vec![true; n],
        }
    }

    /// Builds from dense rows; non-finite entries become missing.
    pub fn from_rows(patient_ids: Vec<String>, columns: Vec<Column>, rows: &[Vec<f64>]) -> Result<Self> {
        if rows.len() != patient_ids.len() {
            return Err(Error::Dimension(format!("{} rows for {} ids", rows.len(), patient_ids.len())));
        }
        let mut m = FeatureMatrix::new(patient_ids, columns);
        for (r, row) in rows.iter().enumerate() {
            if row.len() != m.ncols() {
                return Err(Error::Dimension(format!("row {r} has {} values, expected {}", row.len(), m.ncols())));
            }
            for (c, &v) in row.iter().enumerate() {
                m.set(r, c, v.is_finite().then_some(v));
            }
        }
        Ok(m)
    }

    pub fn nrows(&self) -> usize {
        self.patient_ids.len()
    }

    pub fn ncols(&self) -> usize {
        self.columns.len()
    }

    pub fn patient_ids(&self) -> &[String] {
        &self.patient_ids
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column_names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    /// Distinct groups in column order, each with its column indices.
    pub fn groups(&self) -> Vec<(String, Vec<usize>)> {
        let mut out: Vec<(String, Vec<usize>)> = Vec::new();
        for (i, c) in self.columns.iter().enumerate() {
            match out.iter_mut().find(|(g, _)| *g == c.group) {
                Some((_, idx)) => idx.push(i),
                None => out.push((c.group.clone(), vec![i])),
            }
        }
        out
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        let i = row * self.ncols() + col;
        (!self.mask[i]).then(|| self.values[i])
    }

    /// Raw value; `NaN` when missing.
    #[inline]
    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.ncols() + col]
    }

    #[inline]
    pub fn is_missing(&self, row: usize, col: usize) -> bool {
        self.mask[row * self.ncols() + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: Option<f64>) {
        let i = row * self.ncols() + col;
        match value.filter(|v| v.is_finite()) {
            Some(v) => {
                self.values[i] = v;
                self.mask[i] = false;
            }
            None => {
                self.values[i] = f64::NAN;
                self.mask[i] = true;
            }
        }
    }

    pub fn row(&self, row: usize) -> &[f64] {
        let p = self.ncols();
        &self.values[row * p..(row + 1) * p]
    }

    pub fn column(&self, col: usize) -> Vec<Option<f64>> {
        (0..self.nrows()).map(|r| self.get(r, col)).collect()
    }

    pub fn has_missing(&self) -> bool {
        self.mask.iter().any(|&m| m)
    }

    pub fn observed_in_row(&self, row: usize) -> usize {
        let p = self.ncols();
        self.mask[row * p..(row + 1) * p].iter().filter(|&&m| !m).count()
    }

    pub fn select_rows(&self, rows: &[usize]) -> FeatureMatrix {
        let p = self.ncols();
        let mut values = Vec::with_capacity(rows.len() * p);
        let mut mask = Vec::with_capacity(rows.len() * p);
        for &r in rows {
            values.extend_from_slice(&self.values[r * p..(r + 1) * p]);
            mask.extend_from_slice(&self.mask[r * p..(r + 1) * p]);
        }
        FeatureMatrix {
            patient_ids: rows.iter().map(|&r| self.patient_ids[r].clone()).collect(),
            columns: self.columns.clone(),
            values,
            mask,
        }
    }

    /// Rows for `ids`, in that order.
    pub fn select_ids(&self, ids: &[String]) -> Result<FeatureMatrix> {
        let index: HashMap<&str, usize> = self
            .patient_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect();
        let rows = ids
            .iter()
            .map(|id| {
                index
                    .get(id.as_str())
                    .copied()
                    .ok_or_else(|| Error::Dimension(format!("patient {id} not in matrix")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(self.select_rows(&rows))
    }

    pub fn select_columns(&self, cols: &[usize]) -> FeatureMatrix {
        let mut out = FeatureMatrix::new(
            self.patient_ids.clone(),
            cols.iter().map(|&c| self.columns[c].clone()).collect(),
        );
        for r in 0..self.nrows() {
            for (j, &c) in cols.iter().enumerate() {
                out.set(r, j, self.get(r, c));
            }
        }
        out
    }

    pub fn select_column_names(&self, names: &[String]) -> Result<FeatureMatrix> {
        let cols = names
            .iter()
            .map(|n| self.column_index(n).ok_or_else(|| Error::UnknownFeature(n.clone())))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.select_columns(&cols))
    }

    /// Columns of `self` followed by columns of `other`; rows must match.
    pub fn hstack(&self, other: &FeatureMatrix) -> Result<FeatureMatrix> {
        if self.patient_ids != other.patient_ids {
            return Err(Error::Dimension("hstack: patient rows differ".into()));
        }
        let mut columns = self.columns.clone();
        columns.extend(other.columns.iter().cloned());
        let mut out = FeatureMatrix::new(self.patient_ids.clone(), columns);
        let p = self.ncols();
        for r in 0..self.nrows() {
            for c in 0..p {
                out.set(r, c, self.get(r, c));
            }
            for c in 0..other.ncols() {
                out.set(r, p + c, other.get(r, c));
            }
        }
        Ok(out)
    }

    /// Bitwise equality, including the NaN payload of missing cells.
    pub fn bitwise_eq(&self, other: &FeatureMatrix) -> bool {
        self.patient_ids == other.patient_ids
            && self.columns == other.columns
            && self.mask == other.mask
            && self.values.len() == other.values.len()
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }

    /// Writes the values file (with a metadata preamble) and the parallel
    /// 0/1 mask file.
    pub fn write_delimited<W1: Write, W2: Write>(&self, values: W1, mask: W2) -> Result<()> {
        let mut vw = csv::WriterBuilder::new().flexible(true).from_writer(values);
        vw.write_record([FORMAT_TAG])?;
        let kinds: Vec<&str> = std::iter::once("#kind")
            .chain(self.columns.iter().map(|c| c.kind.as_str()))
            .collect();
        vw.write_record(&kinds)?;
        let groups: Vec<&str> = std::iter::once("#group")
            .chain(self.columns.iter().map(|c| c.group.as_str()))
            .collect();
        vw.write_record(&groups)?;
        let header: Vec<&str> = std::iter::once("patient_id")
            .chain(self.columns.iter().map(|c| c.name.as_str()))
            .collect();
        vw.write_record(&header)?;

        let mut mw = csv::Writer::from_writer(mask);
        mw.write_record(&header)?;

        let mut vrow = Vec::with_capacity(self.ncols() + 1);
        let mut mrow = Vec::with_capacity(self.ncols() + 1);
        for r in 0..self.nrows() {
            vrow.clear();
            mrow.clear();
            vrow.push(self.patient_ids[r].clone());
            mrow.push(self.patient_ids[r].clone());
            for c in 0..self.ncols() {
                match self.get(r, c) {
                    // `{}` on f64 prints the shortest string that round-trips
                    Some(v) => vrow.push(format!("{v}")),
                    None => vrow.push(MISSING.to_string()),
                }
                mrow.push(if self.is_missing(r, c) { "1" } else { "0" }.to_string());
            }
            vw.write_record(&vrow)?;
            mw.write_record(&mrow)?;
        }
        vw.flush()?;
        mw.flush()?;
        Ok(())
    }

    pub fn read_delimited<R1: Read, R2: Read>(values: R1, mask: R2) -> Result<FeatureMatrix> {
        let mut vr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(values);
        let mut records = vr.records();
        let mut next = |what: &str| -> Result<csv::StringRecord> {
            records
                .next()
                .ok_or_else(|| Error::parse("feature matrix", format!("missing {what}")))?
                .map_err(Error::from)
        };
        let tag = next("format tag")?;
        if tag.get(0) != Some(FORMAT_TAG) {
            return Err(Error::parse("feature matrix", format!("bad format tag {:?}", tag.get(0))));
        }
        let kinds = next("kind row")?;
        let groups = next("group row")?;
        let header = next("header")?;
        let p = header.len().saturating_sub(1);
        if kinds.len() != p + 1 || groups.len() != p + 1 {
            return Err(Error::parse("feature matrix", "metadata rows do not match header"));
        }
        let columns = (0..p)
            .map(|c| {
                Ok(Column::grouped(
                    &header[c + 1],
                    kinds[c + 1].parse::<FeatureKind>()?,
                    &groups[c + 1],
                ))
            })
            .collect::<Result<Vec<_>>>()?;

        let mut ids = Vec::new();
        let mut rows: Vec<Vec<Option<f64>>> = Vec::new();
        for (i, rec) in records.enumerate() {
            let rec = rec?;
            if rec.len() != p + 1 {
                return Err(Error::parse(format!("feature row {}", i + 1), "wrong field count"));
            }
            ids.push(rec[0].to_string());
            let row = (1..=p)
                .map(|c| match &rec[c] {
                    MISSING => Ok(None),
                    s => s
                        .parse::<f64>()
                        .map(Some)
                        .map_err(|e| Error::parse(format!("feature row {}", i + 1), e.to_string())),
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }

        let mut mr = csv::Reader::from_reader(mask);
        let mut m = FeatureMatrix::new(ids, columns);
        let mut n_mask_rows = 0;
        for (r, rec) in mr.records().enumerate() {
            let rec = rec?;
            if r >= rows.len() || rec.len() != p + 1 || rec[0] != m.patient_ids[r] {
                return Err(Error::parse(format!("mask row {}", r + 1), "does not align with values"));
            }
            for c in 0..p {
                let missing = &rec[c + 1] == "1";
                if missing != rows[r][c].is_none() {
                    return Err(Error::parse(
                        format!("mask row {}", r + 1),
                        format!("mask disagrees with value in column {}", m.columns[c].name),
                    ));
                }
                m.set(r, c, rows[r][c]);
            }
            n_mask_rows += 1;
        }
        if n_mask_rows != rows.len() {
            return Err(Error::parse("mask", "row count differs from values"));
        }
        Ok(m)
    }

    pub fn write_files(&self, values: &Path, mask: &Path) -> Result<()> {
        self.write_delimited(File::create(values)?, File::create(mask)?)
    }

    pub fn read_files(values: &Path, mask: &Path) -> Result<FeatureMatrix> {
        FeatureMatrix::read_delimited(
            BufReader::new(File::open(values)?),
            BufReader::new(File::open(mask)?),
        )
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::parse("delimited text", e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MissingnessReport {
    pub per_feature: BTreeMap<String, f64>,
    /// Ordered like the matrix columns.
    pub ordered: Vec<(String, f64)>,
    pub overall: f64,
}

pub fn missingness_report(matrix: &FeatureMatrix) -> Result<MissingnessReport> {
    if matrix.nrows() == 0 || matrix.ncols() == 0 {
        return Err(Error::Empty("feature matrix".into()));
    }
    let n = matrix.nrows() as f64;
    let ordered: Vec<(String, f64)> = (0..matrix.ncols())
        .map(|c| {
            let missing = (0..matrix.nrows()).filter(|&r| matrix.is_missing(r, c)).count();
            (matrix.columns()[c].name.clone(), missing as f64 / n)
        })
        .collect();
    let overall = ordered.iter().map(|(_, f)| f).sum::<f64>() / ordered.len() as f64;
    Ok(MissingnessReport {
        per_feature: ordered.iter().cloned().collect(),
        ordered,
        overall,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cols(n: usize) -> Vec<Column> {
        (0..n).map(|i| Column::new(format!("f{i}"), FeatureKind::Continuous)).collect()
    }

    #[test]
    fn missingness_fractions() {
        let ids: Vec<String> = (0..10).map(|i| format!("P{i}")).collect();
        let rows: Vec<Vec<f64>> = (0..10)
            .map(|i| vec![1.0, if i < 3 { f64::NAN } else { 2.0 }])
            .collect();
        let m = FeatureMatrix::from_rows(ids, cols(2), &rows).unwrap();
        let rep = missingness_report(&m).unwrap();
        assert_eq!(rep.per_feature["f0"], 0.0);
        assert!((rep.per_feature["f1"] - 0.3).abs() < 1e-15);
        assert!((rep.overall - 0.15).abs() < 1e-15);
    }

    #[test]
    fn mask_tracks_sentinel() {
        let mut m = FeatureMatrix::new(vec!["a".into()], cols(1));
        assert!(m.is_missing(0, 0) && m.value(0, 0).is_nan());
        m.set(0, 0, Some(2.5));
        assert_eq!(m.get(0, 0), Some(2.5));
        m.set(0, 0, Some(f64::INFINITY));
        assert!(m.is_missing(0, 0));
    }

    #[test]
    fn groups_follow_column_order() {
        let columns = vec![
            Column::new("age", FeatureKind::Continuous),
            Column::grouped("pathology_1", FeatureKind::Binary, "pathology"),
            Column::grouped("pathology_2", FeatureKind::Binary, "pathology"),
            Column::new("re_RT", FeatureKind::Binary),
        ];
        let m = FeatureMatrix::new(vec![], columns);
        let g = m.groups();
        assert_eq!(g.len(), 3);
        assert_eq!(g[1], ("pathology".to_string(), vec![1, 2]));
    }

    #[test]
    fn read_rejects_inconsistent_mask() {
        let m = FeatureMatrix::from_rows(vec!["a".into()], cols(1), &[vec![1.0]]).unwrap();
        let (mut v, mut k) = (Vec::new(), Vec::new());
        m.write_delimited(&mut v, &mut k).unwrap();
        let k = String::from_utf8(k).unwrap().replace("a,0", "a,1");
        assert!(FeatureMatrix::read_delimited(&v[..], k.as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn delimited_round_trip_is_bitwise(
            rows in prop::collection::vec(
                prop::collection::vec(prop_oneof![Just(f64::NAN), -1e12f64..1e12, any::<f64>()], 3),
                1..20)
        ) {
            let ids: Vec<String> = (0..rows.len()).map(|i| format!("P,{i}")).collect();
            let m = FeatureMatrix::from_rows(ids, cols(3), &rows).unwrap();
            let (mut v, mut k) = (Vec::new(), Vec::new());
            m.write_delimited(&mut v, &mut k).unwrap();
            let back = FeatureMatrix::read_delimited(&v[..], &k[..]).unwrap();
            prop_assert!(m.bitwise_eq(&back));
        }
    }
}
