//! Plain-text complex records.
//!
//! A record is a matrix written as a `# shape <rows> <cols>` line followed by
//! one `re,im` line per entry in row-major order. Other `#` lines are
//! comments. Values use Rust's shortest round-trip formatting, so reading a
//! written record gives back the same bits.
//!
//! Patterns are `modes x angles`, AoD distributions `1 x angles`, CSI and
//! filters their natural shape, and replay sequences `steps x 2` with the
//! Alice->Bob value first.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use robin_core::channel::{AntennaPattern, AoDDistribution};
use robin_core::secrecy::ChainState;
use robin_core::{CMatrix, C64};

use crate::error::{Result, SimError};

pub fn write_matrix<W: Write>(mut w: W, m: &CMatrix) -> std::io::Result<()> {
    writeln!(w, "# shape {} {}", m.rows(), m.cols())?;
    for z in m.as_slice() {
        writeln!(w, "{},{}", z.re, z.im)?;
    }
    w.flush()
}

fn record_error(line: usize, message: impl Into<String>) -> SimError {
    SimError::Record {
        line,
        message: message.into(),
    }
}

pub fn read_matrix<R: BufRead>(r: R) -> Result<CMatrix> {
    let mut shape: Option<(usize, usize)> = None;
    let mut values = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let n = n + 1;
        let line = line.map_err(|e| record_error(n, e.to_string()))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(dims) = comment.trim().strip_prefix("shape") {
                if shape.is_some() {
                    return Err(record_error(n, "second shape line"));
                }
                let dims: Vec<usize> = dims
                    .split_whitespace()
                    .map(str::parse)
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| record_error(n, format!("bad shape: {e}")))?;
                match dims[..] {
                    [rows, cols] => shape = Some((rows, cols)),
                    _ => return Err(record_error(n, "shape needs two dimensions")),
                }
            }
            continue;
        }
        if shape.is_none() {
            return Err(record_error(n, "value before the shape line"));
        }
        let (re, im) = line.split_once(',').ok_or_else(|| record_error(n, format!("expected `re,im`, got `{line}`")))?;
        let parse = |s: &str| s.trim().parse::<f64>().map_err(|e| record_error(n, format!("`{}`: {e}", s.trim())));
        let z = C64::new(parse(re)?, parse(im)?);
        if !(z.re.is_finite() && z.im.is_finite()) {
            return Err(record_error(n, "non-finite value"));
        }
        values.push(z);
    }
    let (rows, cols) = shape.ok_or_else(|| record_error(0, "missing shape line"))?;
    let found = values.len();
    CMatrix::from_vec(rows, cols, values).ok_or_else(|| record_error(0, format!("shape {rows}x{cols} but {found} values")))
}

pub fn save_matrix(path: &Path, m: &CMatrix) -> Result<()> {
    let f = File::create(path).map_err(|e| SimError::io(path, e))?;
    write_matrix(BufWriter::new(f), m).map_err(|e| SimError::io(path, e))
}

pub fn load_matrix(path: &Path) -> Result<CMatrix> {
    let f = File::open(path).map_err(|e| SimError::io(path, e))?;
    read_matrix(BufReader::new(f))
}

pub fn pattern_to_matrix(p: &AntennaPattern) -> CMatrix {
    CMatrix::from_vec(p.num_modes(), p.num_angles(), p.gains().to_vec()).expect("pattern gains are modes x angles")
}

pub fn pattern_from_matrix(m: &CMatrix) -> Result<AntennaPattern> {
    Ok(AntennaPattern::from_gains(m.rows(), m.cols(), m.as_slice().to_vec())?)
}

pub fn aod_to_matrix(a: &AoDDistribution) -> CMatrix {
    CMatrix::row_vector(a.values())
}

pub fn aod_from_matrix(m: &CMatrix) -> Result<AoDDistribution> {
    if m.rows() != 1 {
        return Err(record_error(0, format!("an AoD record has one row, found {}", m.rows())));
    }
    Ok(AoDDistribution::from_values(m.row(0).to_vec()))
}

pub fn sequence_to_matrix(seq: &[ChainState]) -> CMatrix {
    CMatrix::from_fn(seq.len(), 2, |t, k| if k == 0 { seq[t].0 } else { seq[t].1 })
}

pub fn sequence_from_matrix(m: &CMatrix) -> Result<Vec<ChainState>> {
    if m.cols() != 2 {
        return Err(record_error(0, format!("a sequence record has two columns, found {}", m.cols())));
    }
    Ok((0..m.rows()).map(|t| (m[(t, 0)], m[(t, 1)])).collect())
}
