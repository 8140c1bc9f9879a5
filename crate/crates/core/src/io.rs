//! File formats: dense CSV with a header row and Matrix Market coordinate
//! files. Paths ending in `.mtx` select Matrix Market, anything else CSV.
//! Floats are written in shortest round-trip form.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::eval::LabelMatrix;
use crate::matrix::{AffinityMatrix, BowMatrix, SparseAffinity};
use crate::reduce::MembershipMatrix;

fn is_mtx(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("mtx"))
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| Error::Parse(format!("{what}: not a number: {s:?}")))
}

/// Header row plus numeric rows.
fn read_dense_csv(path: &Path) -> Result<(Vec<String>, Array2<f64>)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let cols = header.len();
    let mut data = Vec::new();
    let mut rows = 0;
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != cols {
            return Err(Error::Parse(format!("{}: row {} has {} fields, header has {cols}", path.display(), r + 1, rec.len())));
        }
        for field in rec.iter() {
            data.push(parse_f64(field, &path.display().to_string())?);
        }
        rows += 1;
    }
    let values = Array2::from_shape_vec((rows, cols), data).map_err(|e| Error::Parse(e.to_string()))?;
    Ok((header, values))
}

fn write_dense_csv(path: &Path, header: &[String], values: ndarray::ArrayView2<'_, f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in values.rows() {
        w.write_record(row.iter().map(|v| format!("{v:?}")))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum MtxSymmetry {
    General,
    Symmetric,
}

struct Mtx {
    rows: usize,
    cols: usize,
    symmetry: MtxSymmetry,
    /// Zero-based entries as stored in the file.
    entries: Vec<(usize, usize, f64)>,
}

fn read_mtx(path: &Path) -> Result<Mtx> {
    let ctx = path.display().to_string();
    let mut lines = BufReader::new(File::open(path)?).lines();
    let banner = lines.next().ok_or_else(|| Error::Parse(format!("{ctx}: empty file")))??;
    let words: Vec<String> = banner.split_whitespace().map(|w| w.to_ascii_lowercase()).collect();
    if words.len() != 5 || words[0] != "%%matrixmarket" || words[1] != "matrix" || words[2] != "coordinate" {
        return Err(Error::Parse(format!("{ctx}: expected a coordinate Matrix Market banner, got {banner:?}")));
    }
    let pattern = match words[3].as_str() {
        "real" | "integer" | "double" => false,
        "pattern" => true,
        other => return Err(Error::Parse(format!("{ctx}: unsupported field type {other}"))),
    };
    let symmetry = match words[4].as_str() {
        "general" => MtxSymmetry::General,
        "symmetric" => MtxSymmetry::Symmetric,
        other => return Err(Error::Parse(format!("{ctx}: unsupported symmetry {other}"))),
    };

    let mut size: Option<(usize, usize, usize)> = None;
    let mut entries = Vec::new();
    for line in lines {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let f: Vec<&str> = t.split_whitespace().collect();
        let idx = |s: &str| s.parse::<usize>().map_err(|_| Error::Parse(format!("{ctx}: bad index {s:?}")));
        match size {
            None => {
                if f.len() != 3 {
                    return Err(Error::Parse(format!("{ctx}: bad size line {t:?}")));
                }
                size = Some((idx(f[0])?, idx(f[1])?, idx(f[2])?));
            }
            Some((r, c, _)) => {
                let want = if pattern { 2 } else { 3 };
                if f.len() != want {
                    return Err(Error::Parse(format!("{ctx}: bad entry line {t:?}")));
                }
                let (i, j) = (idx(f[0])?, idx(f[1])?);
                if i == 0 || j == 0 || i > r || j > c {
                    return Err(Error::Parse(format!("{ctx}: entry ({i}, {j}) outside {r}x{c}")));
                }
                let v = if pattern { 1.0 } else { parse_f64(f[2], &ctx)? };
                entries.push((i - 1, j - 1, v));
            }
        }
    }
    let (rows, cols, nnz) = size.ok_or_else(|| Error::Parse(format!("{ctx}: missing size line")))?;
    if entries.len() != nnz {
        return Err(Error::Parse(format!("{ctx}: header promises {nnz} entries, found {}", entries.len())));
    }
    if symmetry == MtxSymmetry::Symmetric && rows != cols {
        return Err(Error::Parse(format!("{ctx}: symmetric matrix must be square")));
    }
    Ok(Mtx { rows, cols, symmetry, entries })
}

fn write_mtx(path: &Path, rows: usize, cols: usize, symmetric: bool, entries: &[(usize, usize, f64)]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let kind = if symmetric { "symmetric" } else { "general" };
    writeln!(w, "%%MatrixMarket matrix coordinate real {kind}")?;
    writeln!(w, "{rows} {cols} {}", entries.len())?;
    for &(i, j, v) in entries {
        writeln!(w, "{} {} {v:?}", i + 1, j + 1)?;
    }
    w.flush()?;
    Ok(())
}

impl Mtx {
    fn to_dense(&self) -> Array2<f64> {
        let mut a = Array2::zeros((self.rows, self.cols));
        for &(i, j, v) in &self.entries {
            a[[i, j]] += v;
            if self.symmetry == MtxSymmetry::Symmetric && i != j {
                a[[j, i]] += v;
            }
        }
        a
    }
}

pub fn read_bow(path: impl AsRef<Path>) -> Result<BowMatrix> {
    let path = path.as_ref();
    if is_mtx(path) {
        BowMatrix::new(read_mtx(path)?.to_dense())
    } else {
        let (header, values) = read_dense_csv(path)?;
        BowMatrix::new(values)?.with_feature_ids(header)
    }
}

/// Matrix Market output stores nonzeros only and drops feature ids.
pub fn write_bow(path: impl AsRef<Path>, x: &BowMatrix) -> Result<()> {
    let path = path.as_ref();
    if is_mtx(path) {
        let entries: Vec<_> = x
            .values()
            .indexed_iter()
            .filter(|(_, &v)| v != 0.0)
            .map(|((i, j), &v)| (i, j, v))
            .collect();
        write_mtx(path, x.rows(), x.cols(), false, &entries)
    } else {
        write_dense_csv(path, &x.feature_labels(), x.values())
    }
}

pub fn read_affinity(path: impl AsRef<Path>) -> Result<AffinityMatrix> {
    let path = path.as_ref();
    if is_mtx(path) {
        AffinityMatrix::new(read_mtx(path)?.to_dense())
    } else {
        AffinityMatrix::new(read_dense_csv(path)?.1)
    }
}

pub fn write_affinity(path: impl AsRef<Path>, a: &AffinityMatrix) -> Result<()> {
    let path = path.as_ref();
    if is_mtx(path) {
        write_sparse_affinity(path, &SparseAffinity::from_dense(a))
    } else {
        let header: Vec<String> = (0..a.size()).map(|i| i.to_string()).collect();
        write_dense_csv(path, &header, a.values())
    }
}

pub fn read_sparse_affinity(path: impl AsRef<Path>) -> Result<SparseAffinity> {
    let path = path.as_ref();
    if !is_mtx(path) {
        return Ok(SparseAffinity::from_dense(&read_affinity(path)?));
    }
    let m = read_mtx(path)?;
    if m.rows != m.cols {
        return Err(Error::InvalidMatrix(format!("affinity must be square, got {}x{}", m.rows, m.cols)));
    }
    let mut triplets = m.entries.clone();
    if m.symmetry == MtxSymmetry::Symmetric {
        triplets.extend(m.entries.iter().filter(|e| e.0 != e.1).map(|&(i, j, v)| (j, i, v)));
    }
    SparseAffinity::from_triplets(m.rows, &triplets)
}

/// Symmetric Matrix Market with the lower triangle, or dense CSV.
pub fn write_sparse_affinity(path: impl AsRef<Path>, w: &SparseAffinity) -> Result<()> {
    let path = path.as_ref();
    if !is_mtx(path) {
        return write_affinity(path, &w.to_dense());
    }
    let lower: Vec<_> = w.triplets().into_iter().filter(|&(i, j, _)| i >= j).collect();
    write_mtx(path, w.size(), w.size(), true, &lower)
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<LabelMatrix> {
    let (header, values) = read_dense_csv(path.as_ref())?;
    if let Some(v) = values.iter().find(|&&v| v != 0.0 && v != 1.0) {
        return Err(Error::Parse(format!("label entries must be 0 or 1, found {v}")));
    }
    LabelMatrix::new(values.mapv(|v| v as u8), header)
}

pub fn write_labels(path: impl AsRef<Path>, labels: &LabelMatrix) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    w.write_record(labels.class_names())?;
    for row in labels.values().rows() {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// One `feature_id,cluster_id` line per mid-level feature.
pub fn write_membership(path: impl AsRef<Path>, u: &MembershipMatrix, feature_ids: &[String]) -> Result<()> {
    if feature_ids.len() != u.num_features() {
        return Err(Error::dims(format!("{} feature ids for {} features", feature_ids.len(), u.num_features())));
    }
    let mut w = csv::Writer::from_path(path.as_ref())?;
    w.write_record(["feature_id", "cluster_id"])?;
    for (id, c) in feature_ids.iter().zip(u.assignments()) {
        w.write_record([id.as_str(), &c.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a membership file; `K` is one more than the largest cluster id
/// unless given.
pub fn read_membership(path: impl AsRef<Path>, k: Option<usize>) -> Result<(Vec<String>, MembershipMatrix)> {
    let mut rdr = csv::Reader::from_path(path.as_ref())?;
    let mut ids = Vec::new();
    let mut assignments = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != 2 {
            return Err(Error::Parse(format!("membership rows need 2 fields, got {}", rec.len())));
        }
        ids.push(rec[0].to_string());
        assignments.push(rec[1].trim().parse::<usize>().map_err(|_| Error::Parse(format!("bad cluster id {:?}", &rec[1])))?);
    }
    let k = k.unwrap_or_else(|| assignments.iter().max().map_or(0, |m| m + 1));
    Ok((ids, MembershipMatrix::new(assignments, k)?))
}
