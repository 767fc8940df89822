//! File formats.
//!
//! * Edge list: one `src dst [weight]` per line, 0-based ids, `#` or `%`
//!   comments. Edge `src -> dst` is stored at `A[src][dst]`; repeated edges
//!   sum. The vertex count is `max id + 1` unless given explicitly.
//! * Matrix Market `coordinate` files with `real`, `integer` or `pattern`
//!   fields and `general` or `symmetric` symmetry.
//! * Dense text grid: a `rows cols` header line followed by `rows` lines of
//!   `cols` numbers.
//! * Dense binary grid: magic `DGRD`, `u32` version (1), `u64` rows, `u64`
//!   cols, then `rows·cols` little-endian `f32` in row-major order.
//! * Weight bundle: text, each matrix introduced by `@ name rows cols`
//!   followed by its dense text rows.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use crate::compiler::WeightSet;
use crate::error::{Error, Result};
use crate::matrix::{CooMatrix, DenseMatrix, Layout, MatrixRef};

pub const DENSE_BINARY_MAGIC: &[u8; 4] = b"DGRD";
pub const DENSE_BINARY_VERSION: u32 = 1;

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn lines(path: &Path) -> Result<impl Iterator<Item = (usize, std::io::Result<String>)>> {
    let f = std::fs::File::open(path)?;
    Ok(BufReader::new(f).lines().enumerate().map(|(i, l)| (i + 1, l)))
}

fn is_comment(s: &str) -> bool {
    s.starts_with('#') || s.starts_with('%')
}

pub fn parse_edge_list(
    text: &str,
    path: &Path,
    vertices: Option<usize>,
) -> Result<CooMatrix> {
    let mut triplets = Vec::new();
    let mut max_id = None::<usize>;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || is_comment(line) {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if !(2..=3).contains(&fields.len()) {
            return Err(parse_err(
                path,
                i + 1,
                format!("expected 'src dst [weight]', found {} fields", fields.len()),
            ));
        }
        let id = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| parse_err(path, i + 1, format!("invalid vertex id '{s}'")))
        };
        let (s, d) = (id(fields[0])?, id(fields[1])?);
        let w = match fields.get(2) {
            Some(t) => t
                .parse::<f32>()
                .map_err(|_| parse_err(path, i + 1, format!("invalid weight '{t}'")))?,
            None => 1.0,
        };
        if let Some(n) = vertices {
            if s >= n || d >= n {
                return Err(parse_err(
                    path,
                    i + 1,
                    format!("vertex id out of range for {n} vertices"),
                ));
            }
        }
        max_id = Some(max_id.map_or(s.max(d), |m| m.max(s).max(d)));
        triplets.push((s, d, w));
    }
    let n = vertices.unwrap_or(max_id.map_or(0, |m| m + 1));
    CooMatrix::from_triplets(n, n, Layout::RowMajor, triplets)
}

pub fn load_edge_list(path: &Path, vertices: Option<usize>) -> Result<CooMatrix> {
    let text = std::fs::read_to_string(path)?;
    parse_edge_list(&text, path, vertices)
}

pub fn write_edge_list(path: &Path, m: &CooMatrix) -> Result<()> {
    let mut out = String::new();
    writeln!(out, "# vertices {}", m.rows()).unwrap();
    for e in m.entries() {
        if e.value == 1.0 {
            writeln!(out, "{} {}", e.row, e.col).unwrap();
        } else {
            writeln!(out, "{} {} {}", e.row, e.col, e.value).unwrap();
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Reads the vertex count a file written by [`write_edge_list`] records in
/// its header, so trailing isolated vertices survive a round trip.
pub fn edge_list_header_vertices(text: &str) -> Option<usize> {
    text.lines()
        .next()?
        .strip_prefix("# vertices ")?
        .trim()
        .parse()
        .ok()
}

/// Loads a graph from an edge list or a Matrix Market file, chosen by
/// extension (`.mtx` is Matrix Market).
pub fn load_graph(path: &Path) -> Result<CooMatrix> {
    if path.extension().is_some_and(|e| e == "mtx") {
        load_matrix_market(path)
    } else {
        let text = std::fs::read_to_string(path)?;
        parse_edge_list(&text, path, edge_list_header_vertices(&text))
    }
}

#[derive(Clone, Copy, PartialEq)]
enum MmField {
    Real,
    Pattern,
}

pub fn load_matrix_market(path: &Path) -> Result<CooMatrix> {
    let mut it = lines(path)?;
    let (_, header) = it
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty file"))?;
    let header = header?;
    let words: Vec<String> = header.split_whitespace().map(|w| w.to_ascii_lowercase()).collect();
    if words.len() != 5 || words[0] != "%%matrixmarket" || words[1] != "matrix" {
        return Err(parse_err(path, 1, "missing '%%MatrixMarket matrix' header"));
    }
    if words[2] != "coordinate" {
        return Err(parse_err(path, 1, format!("unsupported format '{}'", words[2])));
    }
    let field = match words[3].as_str() {
        "real" | "integer" => MmField::Real,
        "pattern" => MmField::Pattern,
        other => return Err(parse_err(path, 1, format!("unsupported field '{other}'"))),
    };
    let symmetric = match words[4].as_str() {
        "general" => false,
        "symmetric" => true,
        other => return Err(parse_err(path, 1, format!("unsupported symmetry '{other}'"))),
    };
    let mut size = None::<(usize, usize, usize)>;
    let mut triplets = Vec::new();
    for (ln, line) in it {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let f: Vec<&str> = t.split_whitespace().collect();
        let num = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| parse_err(path, ln, format!("invalid integer '{s}'")))
        };
        match size {
            None => {
                if f.len() != 3 {
                    return Err(parse_err(path, ln, "size line must be 'rows cols nnz'"));
                }
                size = Some((num(f[0])?, num(f[1])?, num(f[2])?));
            }
            Some((rows, cols, _)) => {
                let want = if field == MmField::Pattern { 2 } else { 3 };
                if f.len() != want {
                    return Err(parse_err(path, ln, format!("expected {want} fields")));
                }
                let (r, c) = (num(f[0])?, num(f[1])?);
                if r == 0 || c == 0 || r > rows || c > cols {
                    return Err(parse_err(path, ln, format!("index ({r}, {c}) out of range")));
                }
                let v = if field == MmField::Pattern {
                    1.0
                } else {
                    f[2].parse::<f32>()
                        .map_err(|_| parse_err(path, ln, format!("invalid value '{}'", f[2])))?
                };
                triplets.push((r - 1, c - 1, v));
                if symmetric && r != c {
                    triplets.push((c - 1, r - 1, v));
                }
            }
        }
    }
    let (rows, cols, _) = size.ok_or_else(|| parse_err(path, 1, "missing size line"))?;
    CooMatrix::from_triplets(rows, cols, Layout::RowMajor, triplets)
}

pub fn write_matrix_market(path: &Path, m: &CooMatrix) -> Result<()> {
    let mut out = String::from("%%MatrixMarket matrix coordinate real general\n");
    writeln!(out, "{} {} {}", m.rows(), m.cols(), m.nnz()).unwrap();
    for e in m.entries() {
        writeln!(out, "{} {} {}", e.row + 1, e.col + 1, e.value).unwrap();
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn parse_row(line: &str, cols: usize, path: &Path, ln: usize) -> Result<Vec<f32>> {
    let vals = line
        .split_whitespace()
        .map(|s| {
            s.parse::<f32>()
                .map_err(|_| parse_err(path, ln, format!("invalid number '{s}'")))
        })
        .collect::<Result<Vec<f32>>>()?;
    if vals.len() != cols {
        return Err(parse_err(
            path,
            ln,
            format!("expected {cols} values, found {}", vals.len()),
        ));
    }
    Ok(vals)
}

fn parse_dims(line: &str, path: &Path, ln: usize) -> Result<(usize, usize)> {
    let f: Vec<&str> = line.split_whitespace().collect();
    let dims = match f.as_slice() {
        [r, c] => r.parse().ok().zip(c.parse().ok()),
        _ => None,
    };
    dims.ok_or_else(|| parse_err(path, ln, "expected 'rows cols' header"))
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !is_comment(l))
}

pub fn parse_dense_text(text: &str, path: &Path) -> Result<DenseMatrix> {
    let mut it = content_lines(text);
    let (ln, header) = it.next().ok_or_else(|| parse_err(path, 1, "empty file"))?;
    let (rows, cols) = parse_dims(header, path, ln)?;
    let mut values = Vec::with_capacity(rows * cols);
    for _ in 0..rows {
        let (ln, line) = it
            .next()
            .ok_or_else(|| parse_err(path, ln + 1, format!("expected {rows} rows")))?;
        values.extend(parse_row(line, cols, path, ln)?);
    }
    if let Some((ln, _)) = it.next() {
        return Err(parse_err(path, ln, "trailing data after last row"));
    }
    DenseMatrix::new(rows, cols, Layout::RowMajor, values)
}

fn dense_text_body(out: &mut String, m: &DenseMatrix) {
    for i in 0..m.rows() {
        let row: Vec<String> = (0..m.cols()).map(|j| m.get(i, j).to_string()).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
}

pub fn dense_to_text(m: &DenseMatrix) -> String {
    let mut out = format!("{} {}\n", m.rows(), m.cols());
    dense_text_body(&mut out, m);
    out
}

pub fn write_dense_binary<W: Write>(w: &mut W, m: &DenseMatrix) -> Result<()> {
    w.write_all(DENSE_BINARY_MAGIC)?;
    w.write_all(&DENSE_BINARY_VERSION.to_le_bytes())?;
    w.write_all(&(m.rows() as u64).to_le_bytes())?;
    w.write_all(&(m.cols() as u64).to_le_bytes())?;
    let rm = m.to_row_major();
    for v in rm.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_dense_binary<R: Read>(r: &mut R, path: &Path) -> Result<DenseMatrix> {
    let mut head = [0u8; 24];
    r.read_exact(&mut head)
        .map_err(|_| parse_err(path, 0, "truncated binary header"))?;
    if &head[0..4] != DENSE_BINARY_MAGIC {
        return Err(parse_err(path, 0, "bad magic, expected DGRD"));
    }
    let version = u32::from_le_bytes(head[4..8].try_into().unwrap());
    if version != DENSE_BINARY_VERSION {
        return Err(parse_err(path, 0, format!("unsupported version {version}")));
    }
    let rows = u64::from_le_bytes(head[8..16].try_into().unwrap()) as usize;
    let cols = u64::from_le_bytes(head[16..24].try_into().unwrap()) as usize;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != rows * cols * 4 {
        return Err(parse_err(
            path,
            0,
            format!("expected {} payload bytes, found {}", rows * cols * 4, bytes.len()),
        ));
    }
    let values = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    DenseMatrix::new(rows, cols, Layout::RowMajor, values)
}

/// Loads a dense matrix, detecting the binary format by its magic.
pub fn load_dense(path: &Path) -> Result<DenseMatrix> {
    let bytes = std::fs::read(path)?;
    if bytes.starts_with(DENSE_BINARY_MAGIC) {
        read_dense_binary(&mut bytes.as_slice(), path)
    } else {
        let text = String::from_utf8(bytes)
            .map_err(|_| parse_err(path, 0, "neither a DGRD binary nor UTF-8 text"))?;
        parse_dense_text(&text, path)
    }
}

/// Writes binary when the path ends in `.bin`, text otherwise.
pub fn save_dense(path: &Path, m: &DenseMatrix) -> Result<()> {
    if path.extension().is_some_and(|e| e == "bin") {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        write_dense_binary(&mut f, m)?;
        f.flush()?;
    } else {
        std::fs::write(path, dense_to_text(m))?;
    }
    Ok(())
}

/// Loads any supported matrix file: `.mtx` as sparse, everything else dense.
pub fn load_matrix(path: &Path) -> Result<MatrixRef> {
    if path.extension().is_some_and(|e| e == "mtx") {
        Ok(load_matrix_market(path)?.into())
    } else {
        Ok(load_dense(path)?.into())
    }
}

pub fn parse_weight_bundle(text: &str, path: &Path) -> Result<WeightSet> {
    let mut set = WeightSet::default();
    let mut it = content_lines(text).peekable();
    while let Some((ln, line)) = it.next() {
        let rest = line
            .strip_prefix('@')
            .ok_or_else(|| parse_err(path, ln, "expected '@ name rows cols'"))?;
        let f: Vec<&str> = rest.split_whitespace().collect();
        if f.len() != 3 {
            return Err(parse_err(path, ln, "expected '@ name rows cols'"));
        }
        let (rows, cols) = parse_dims(&format!("{} {}", f[1], f[2]), path, ln)?;
        let mut values = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            match it.peek() {
                Some((rl, l)) if !l.starts_with('@') => {
                    values.extend(parse_row(l, cols, path, *rl)?);
                    it.next();
                }
                _ => {
                    return Err(parse_err(
                        path,
                        ln,
                        format!("matrix '{}' needs {rows} rows", f[0]),
                    ))
                }
            }
        }
        if set.weights.contains_key(f[0]) {
            return Err(parse_err(path, ln, format!("duplicate matrix '{}'", f[0])));
        }
        set.insert(f[0], DenseMatrix::new(rows, cols, Layout::RowMajor, values)?);
    }
    Ok(set)
}

pub fn load_weights(path: &Path) -> Result<WeightSet> {
    let text = std::fs::read_to_string(path)?;
    parse_weight_bundle(&text, path)
}

pub fn weights_to_text(set: &WeightSet) -> String {
    let mut out = String::new();
    for (name, m) in &set.weights {
        writeln!(out, "@ {name} {} {}", m.rows(), m.cols()).unwrap();
        dense_text_body(&mut out, m);
    }
    out
}

pub fn save_weights(path: &Path, set: &WeightSet) -> Result<()> {
    std::fs::write(path, weights_to_text(set))?;
    Ok(())
}

/// Path helper used by writers that emit several sibling files.
pub fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}
