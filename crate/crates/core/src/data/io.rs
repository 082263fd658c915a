//! Point-cloud and manifest file formats.
//!
//! XYZ: one `%.6f %.6f %.6f` line per point. PLY: the minimal ASCII header
//! (`ply` / `format ascii 1.0` / `element vertex N` / three float properties
//! / `end_header`) followed by the same coordinate lines. Parsers report
//! 1-based line numbers on malformed input.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::geom::PointCloud;
use crate::numerics::Tensor;

use super::{DataError, Manifest};

fn io_err(path: &Path, source: std::io::Error) -> DataError {
    DataError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> DataError {
    DataError::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

pub fn save_xyz(cloud: &PointCloud, path: &Path) -> Result<(), DataError> {
    let mut w = BufWriter::new(File::create(path).map_err(|e| io_err(path, e))?);
    for p in cloud.iter() {
        writeln!(w, "{:.6} {:.6} {:.6}", p[0], p[1], p[2]).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn load_xyz(path: &Path) -> Result<PointCloud, DataError> {
    let reader = BufReader::new(File::open(path).map_err(|e| io_err(path, e))?);
    let mut data: Vec<f32> = Vec::new();
    let mut count = 0usize;
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        parse_coord_line(&line, path, lineno, &mut data)?;
        count += 1;
    }
    if count == 0 {
        return Err(parse_err(path, 1, "file contains no points"));
    }
    let tensor = Tensor::new(vec![count, 3], data).expect("xyz data length");
    PointCloud::new(tensor).map_err(DataError::from)
}

fn parse_coord_line(
    line: &str,
    path: &Path,
    lineno: usize,
    out: &mut Vec<f32>,
) -> Result<(), DataError> {
    let mut fields = 0usize;
    for tok in line.split_whitespace() {
        let v: f32 = tok
            .parse()
            .map_err(|_| parse_err(path, lineno, format!("invalid coordinate {tok:?}")))?;
        if !v.is_finite() {
            return Err(parse_err(path, lineno, format!("non-finite coordinate {tok}")));
        }
        out.push(v);
        fields += 1;
    }
    if fields != 3 {
        out.truncate(out.len() - fields);
        return Err(parse_err(
            path,
            lineno,
            format!("expected 3 coordinates, found {fields}"),
        ));
    }
    Ok(())
}

pub fn save_ply(cloud: &PointCloud, path: &Path) -> Result<(), DataError> {
    let mut w = BufWriter::new(File::create(path).map_err(|e| io_err(path, e))?);
    write!(
        w,
        "ply\nformat ascii 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\nend_header\n",
        cloud.len()
    )
    .map_err(|e| io_err(path, e))?;
    for p in cloud.iter() {
        writeln!(w, "{:.6} {:.6} {:.6}", p[0], p[1], p[2]).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn load_ply(path: &Path) -> Result<PointCloud, DataError> {
    let reader = BufReader::new(File::open(path).map_err(|e| io_err(path, e))?);
    let mut lines = reader.lines().enumerate();
    let mut next = || -> Result<(usize, String), DataError> {
        match lines.next() {
            Some((i, Ok(line))) => Ok((i + 1, line)),
            Some((_, Err(e))) => Err(io_err(path, e)),
            None => Err(parse_err(path, 0, "unexpected end of file")),
        }
    };
    let (n1, magic) = next()?;
    if magic.trim() != "ply" {
        return Err(parse_err(path, n1, "missing 'ply' magic"));
    }
    let (n2, format) = next()?;
    if format.trim() != "format ascii 1.0" {
        return Err(parse_err(path, n2, "only 'format ascii 1.0' is supported"));
    }
    let mut vertex_count: Option<usize> = None;
    loop {
        let (lineno, line) = next()?;
        let line = line.trim().to_string();
        if line == "end_header" {
            break;
        }
        if let Some(rest) = line.strip_prefix("element vertex ") {
            let n: usize = rest
                .trim()
                .parse()
                .map_err(|_| parse_err(path, lineno, format!("bad vertex count {rest:?}")))?;
            vertex_count = Some(n);
        } else if line.starts_with("element ") {
            return Err(parse_err(path, lineno, "only vertex elements are supported"));
        } else if line.starts_with("property ") || line.starts_with("comment ") {
            continue;
        } else {
            return Err(parse_err(path, lineno, format!("unrecognized header line {line:?}")));
        }
    }
    let count =
        vertex_count.ok_or_else(|| parse_err(path, 0, "header missing 'element vertex'"))?;
    if count == 0 {
        return Err(parse_err(path, 0, "vertex count is zero"));
    }
    let mut data: Vec<f32> = Vec::with_capacity(count * 3);
    for _ in 0..count {
        let (lineno, line) = next()?;
        parse_coord_line(&line, path, lineno, &mut data)?;
    }
    let tensor = Tensor::new(vec![count, 3], data).expect("ply data length");
    PointCloud::new(tensor).map_err(DataError::from)
}

/// Pretty-printed JSON with a trailing newline; the stable field order makes
/// re-saves byte-identical.
pub fn save_manifest(manifest: &Manifest, path: &Path) -> Result<(), DataError> {
    let mut json = serde_json::to_string_pretty(manifest).map_err(|e| DataError::Manifest {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    json.push('\n');
    std::fs::write(path, json).map_err(|e| io_err(path, e))
}

pub fn load_manifest(path: &Path) -> Result<Manifest, DataError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| DataError::Manifest {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}
