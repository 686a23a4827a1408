//! Binary file formats and factorization bundles.
//!
//! Two little-endian binary formats cover all matrix traffic:
//!
//! - `TSM1` (dense): magic `TSQRMAT1`, u64 rows, u64 cols, then
//!   rows x cols f64 values in column-major order.
//! - `TSR1` (triangular): magic `TSQRTRI1`, u64 n, then the packed upper
//!   triangle, n(n+1)/2 f64 values, columns concatenated left to right.
//!
//! A factorization is serialized as a directory:
//!
//! ```text
//! meta.txt                          m=, n=, p=, variant=, then the tree text
//! r.tsr1                            root R factor (raw signs)
//! leaf_<rank>.tsm1                  local Householder vectors
//! leaf_<rank>_r.tsr1                local R factor
//! leaf_<rank>.tau                   local reflector scalars
//! merge_<round>_<dst>_<src>.tsr1    merge Householder triangle
//! merge_<round>_<dst>_<src>.tau     merge reflector scalars
//! ```
//!
//! Tau files are u64 count followed by that many f64 values, little-endian.
//! Readers reject wrong magic, truncated payloads, and non-finite values.

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::factor::{partition_rows, TsqrFactorization};
use crate::householder::{PanelFactor, QrVariant};
use crate::stacked::StackedFactor;
use crate::tree::parse_tree;
use crate::triangular::UpperTriangular;
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const DENSE_MAGIC: &[u8; 8] = b"TSQRMAT1";
const TRI_MAGIC: &[u8; 8] = b"TSQRTRI1";

fn format_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::Format {
        path: path.display().to_string(),
        msg: msg.into(),
    }
}

fn write_u64(w: &mut impl Write, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn write_f64_slice(w: &mut impl Write, values: &[f64]) -> Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_f64_vec(r: &mut impl Read, len: usize, path: &Path) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; len * 8];
    r.read_exact(&mut bytes)
        .map_err(|e| format_err(path, format!("truncated payload: {e}")))?;
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
        return Err(format_err(path, format!("non-finite value at index {bad}")));
    }
    Ok(values)
}

/// Write a dense matrix in TSM1 format.
pub fn write_dense(path: impl AsRef<Path>, m: &DenseMatrix) -> Result<()> {
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    w.write_all(DENSE_MAGIC)?;
    write_u64(&mut w, m.rows() as u64)?;
    write_u64(&mut w, m.cols() as u64)?;
    write_f64_slice(&mut w, m.data())?;
    w.flush()?;
    Ok(())
}

/// Read a TSM1 file.
pub fn read_dense(path: impl AsRef<Path>) -> Result<DenseMatrix> {
    let path = path.as_ref();
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != DENSE_MAGIC {
        return Err(format_err(path, "bad magic; expected TSQRMAT1"));
    }
    let rows = read_u64(&mut r)? as usize;
    let cols = read_u64(&mut r)? as usize;
    if rows == 0 || cols == 0 || rows.saturating_mul(cols) > (1 << 32) {
        return Err(format_err(
            path,
            format!("implausible dimensions {rows}x{cols}"),
        ));
    }
    let data = read_f64_vec(&mut r, rows * cols, path)?;
    DenseMatrix::new(rows, cols, data)
}

/// Write an upper-triangular matrix in TSR1 format (packed payload).
pub fn write_triangular(path: impl AsRef<Path>, t: &UpperTriangular) -> Result<()> {
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    w.write_all(TRI_MAGIC)?;
    write_u64(&mut w, t.n() as u64)?;
    write_f64_slice(&mut w, &t.to_packed())?;
    w.flush()?;
    Ok(())
}

/// Read a TSR1 file.
pub fn read_triangular(path: impl AsRef<Path>) -> Result<UpperTriangular> {
    let path = path.as_ref();
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != TRI_MAGIC {
        return Err(format_err(path, "bad magic; expected TSQRTRI1"));
    }
    let n = read_u64(&mut r)? as usize;
    if n == 0 || n > (1 << 20) {
        return Err(format_err(path, format!("implausible dimension n = {n}")));
    }
    let packed = read_f64_vec(&mut r, UpperTriangular::packed_len(n), path)?;
    UpperTriangular::from_packed(n, &packed)
}

fn write_tau(path: impl AsRef<Path>, tau: &[f64]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    write_u64(&mut w, tau.len() as u64)?;
    write_f64_slice(&mut w, tau)?;
    w.flush()?;
    Ok(())
}

fn read_tau(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let mut r = BufReader::new(File::open(path)?);
    let len = read_u64(&mut r)? as usize;
    if len > (1 << 24) {
        return Err(format_err(path, format!("implausible tau count {len}")));
    }
    read_f64_vec(&mut r, len, path)
}

fn variant_name(v: QrVariant) -> String {
    match v {
        QrVariant::Unblocked => "unblocked".into(),
        QrVariant::Recursive { threshold } => format!("recursive:{threshold}"),
    }
}

fn parse_variant(s: &str) -> Option<QrVariant> {
    match s {
        "unblocked" => Some(QrVariant::Unblocked),
        "recursive" => Some(QrVariant::recursive_default()),
        other => {
            let threshold = other.strip_prefix("recursive:")?.parse().ok()?;
            Some(QrVariant::Recursive { threshold })
        }
    }
}

/// Serialize a factorization into `dir` (created if needed).
pub fn save_bundle(dir: impl AsRef<Path>, fact: &TsqrFactorization) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;

    let mut meta = String::new();
    meta.push_str(&format!("m={}\n", fact.m));
    meta.push_str(&format!("n={}\n", fact.n));
    meta.push_str(&format!("p={}\n", fact.p));
    meta.push_str(&format!("variant={}\n", variant_name(fact.variant)));
    meta.push_str("tree:\n");
    meta.push_str(&fact.tree.to_text());
    std::fs::write(dir.join("meta.txt"), meta)?;

    write_triangular(dir.join("r.tsr1"), &fact.r)?;
    for (rank, pf) in fact.leaf_factors.iter().enumerate() {
        write_dense(dir.join(format!("leaf_{rank}.tsm1")), &pf.v)?;
        write_triangular(dir.join(format!("leaf_{rank}_r.tsr1")), &pf.r)?;
        write_tau(dir.join(format!("leaf_{rank}.tau")), &pf.tau)?;
    }
    for (&(round, dst, src), sf) in &fact.merge_factors {
        let stem = format!("merge_{round}_{dst}_{src}");
        write_triangular(dir.join(format!("{stem}.tsr1")), &sf.v)?;
        write_tau(dir.join(format!("{stem}.tau")), &sf.tau)?;
    }
    Ok(())
}

/// Load a factorization bundle written by [`save_bundle`].
pub fn load_bundle(dir: impl AsRef<Path>) -> Result<TsqrFactorization> {
    let dir = dir.as_ref();
    let meta_path = dir.join("meta.txt");
    let meta = std::fs::read_to_string(&meta_path)?;

    let mut m = None;
    let mut n = None;
    let mut p = None;
    let mut variant = None;
    let mut tree_text = String::new();
    let mut in_tree = false;
    for line in meta.lines() {
        if in_tree {
            tree_text.push_str(line);
            tree_text.push('\n');
        } else if let Some(v) = line.strip_prefix("m=") {
            m = v.trim().parse::<usize>().ok();
        } else if let Some(v) = line.strip_prefix("n=") {
            n = v.trim().parse::<usize>().ok();
        } else if let Some(v) = line.strip_prefix("p=") {
            p = v.trim().parse::<usize>().ok();
        } else if let Some(v) = line.strip_prefix("variant=") {
            variant = parse_variant(v.trim());
        } else if line.trim() == "tree:" {
            in_tree = true;
        }
    }
    let (m, n, p, variant) = match (m, n, p, variant) {
        (Some(m), Some(n), Some(p), Some(v)) => (m, n, p, v),
        _ => return Err(format_err(&meta_path, "missing m=, n=, p=, or variant=")),
    };
    let tree = parse_tree(&tree_text)?;
    if tree.p() != p {
        return Err(format_err(
            &meta_path,
            format!("tree is for p = {} but meta says p = {p}", tree.p()),
        ));
    }

    let mut leaf_factors = Vec::with_capacity(p);
    for rank in 0..p {
        let v = read_dense(dir.join(format!("leaf_{rank}.tsm1")))?;
        let r = read_triangular(dir.join(format!("leaf_{rank}_r.tsr1")))?;
        let tau = read_tau(dir.join(format!("leaf_{rank}.tau")))?;
        if v.cols() != n || r.n() != n || tau.len() != n {
            return Err(format_err(
                dir,
                format!("leaf {rank} data does not match n = {n}"),
            ));
        }
        leaf_factors.push(PanelFactor { v, tau, r });
    }

    let mut merge_factors = BTreeMap::new();
    for (round, merges) in tree.rounds().iter().enumerate() {
        for mg in merges {
            let stem = format!("merge_{round}_{}_{}", mg.dst, mg.src);
            let v = read_triangular(dir.join(format!("{stem}.tsr1")))?;
            let tau = read_tau(dir.join(format!("{stem}.tau")))?;
            if v.n() != n || tau.len() != n {
                return Err(format_err(
                    dir,
                    format!("{stem} data does not match n = {n}"),
                ));
            }
            merge_factors.insert((round, mg.dst, mg.src), StackedFactor { v, tau });
        }
    }

    let r = read_triangular(dir.join("r.tsr1"))?;
    if r.n() != n {
        return Err(format_err(dir, format!("r.tsr1 does not match n = {n}")));
    }

    let row_partition = partition_rows(m, p);
    for (rank, (&(_, rows), pf)) in row_partition.iter().zip(&leaf_factors).enumerate() {
        if rows < n {
            return Err(format_err(
                dir,
                format!("rank {rank} gets {rows} rows for m = {m}, p = {p}; needs at least {n}"),
            ));
        }
        if pf.v.rows() != rows {
            return Err(format_err(
                dir,
                format!(
                    "leaf {rank} has {} rows but the partition of m = {m} gives {rows}",
                    pf.v.rows()
                ),
            ));
        }
    }

    Ok(TsqrFactorization {
        m,
        n,
        p,
        variant,
        tree,
        row_partition,
        leaf_factors,
        merge_factors,
        r,
    })
}
