//! Lead-field files: a text header `LEADFIELD s n 3 [tag]` followed by
//! `s * 3n` little-endian f64 values, electrode-major.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::LeadField;
use crate::real::{lit, to_f64, Real};
use crate::vec3;

pub fn write_lead_field<T: Real>(path: &Path, lf: &LeadField<T>, tag: Option<&str>) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    write!(out, "LEADFIELD {} {} 3", lf.n_electrodes, lf.n_sources())?;
    if let Some(tag) = tag {
        write!(out, " {tag}")?;
    }
    writeln!(out)?;
    for &v in &lf.values {
        out.write_all(&to_f64(v).to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a lead field; source positions are not stored and come back empty
/// unless `positions` is given. Returns the header tag, if any.
pub fn read_lead_field<T: Real>(path: &Path, positions: Option<Vec<vec3::Vec3<T>>>) -> Result<(LeadField<T>, Option<String>)> {
    let mut reader = BufReader::new(fs::File::open(path)?);
    let mut header = String::new();
    reader.read_line(&mut header)?;
    let bad = |reason: String| Error::Format { path: path.to_path_buf(), reason };
    let tok: Vec<&str> = header.split_whitespace().collect();
    if tok.len() < 4 || tok[0] != "LEADFIELD" || tok[3] != "3" {
        return Err(bad(format!("expected `LEADFIELD s n 3`, got `{}`", header.trim_end())));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|e| bad(format!("bad header field `{s}`: {e}")));
    let (s, n) = (num(tok[1])?, num(tok[2])?);
    let tag = (tok.len() > 4).then(|| tok[4..].join(" "));
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    if bytes.len() != s * 3 * n * 8 {
        return Err(bad(format!("expected {} bytes of data, found {}", s * 3 * n * 8, bytes.len())));
    }
    let values = bytes.chunks_exact(8).map(|c| lit(f64::from_le_bytes(c.try_into().expect("8 bytes")))).collect();
    let positions = match positions {
        Some(p) if p.len() == n => p,
        Some(p) => return Err(Error::DimensionMismatch { expected: n, actual: p.len() }),
        None => vec![[T::zero(); 3]; n],
    };
    Ok((LeadField { n_electrodes: s, positions, values }, tag))
}

/// Comma-separated copy for inspection, one electrode per line, after an
/// optional `# tag` line.
pub fn write_lead_field_csv<T: Real>(path: &Path, lf: &LeadField<T>, tag: Option<&str>) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    if let Some(tag) = tag {
        writeln!(out, "# {tag}")?;
    }
    let cols = lf.n_columns();
    for e in 0..lf.n_electrodes {
        let line: Vec<String> = (0..cols).map(|c| format!("{:e}", to_f64(lf.get(e, c)))).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a plain vector of numbers separated by whitespace or newlines.
pub fn read_vector<T: Real>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path)?;
    text.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .map(lit)
                .map_err(|e| Error::Format { path: path.to_path_buf(), reason: format!("`{t}`: {e}") })
        })
        .collect()
}
