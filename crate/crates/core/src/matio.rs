//! Matrix Market reading/writing and right-hand-side generation.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::NormalStream;
use crate::sparse::{sparse_ata, CsrMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Layout {
    Coordinate,
    Array,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Symmetry {
    General,
    Symmetric,
}

fn parse_header(line: &str) -> Result<(Layout, Symmetry)> {
    let tokens: Vec<String> = line.split_whitespace().map(|t| t.to_ascii_lowercase()).collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(Error::Parse {
            line: 1,
            msg: format!("bad header '{line}'"),
        });
    }
    let layout = match tokens[2].as_str() {
        "coordinate" => Layout::Coordinate,
        "array" => Layout::Array,
        other => {
            return Err(Error::Parse {
                line: 1,
                msg: format!("unknown layout '{other}'"),
            })
        }
    };
    match tokens[3].as_str() {
        "real" | "double" | "integer" => {}
        "complex" | "pattern" => return Err(Error::UnsupportedFormat(format!("field '{}'", tokens[3]))),
        other => {
            return Err(Error::Parse {
                line: 1,
                msg: format!("unknown field '{other}'"),
            })
        }
    }
    let symmetry = match tokens[4].as_str() {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        "skew-symmetric" | "hermitian" => {
            return Err(Error::UnsupportedFormat(format!("symmetry '{}'", tokens[4])))
        }
        other => {
            return Err(Error::Parse {
                line: 1,
                msg: format!("unknown symmetry '{other}'"),
            })
        }
    };
    Ok((layout, symmetry))
}

fn parse_num<T: std::str::FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T> {
    tok.and_then(|t| t.parse().ok()).ok_or_else(|| Error::Parse {
        line,
        msg: format!("expected {what}"),
    })
}

/// Parses Matrix Market text. Symmetric storage is mirrored into a full
/// matrix and duplicate coordinates are summed.
pub fn parse_matrix_market<R: BufRead>(reader: R) -> Result<CsrMatrix> {
    let mut lines = reader.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        msg: "empty file".into(),
    })?;
    let (layout, symmetry) = parse_header(&header?)?;

    let mut size_line = None;
    for (no, line) in lines.by_ref() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('%') {
            continue;
        }
        size_line = Some((no + 1, trimmed.to_string()));
        break;
    }
    let (size_no, size_line) = size_line.ok_or(Error::Parse {
        line: 1,
        msg: "missing size line".into(),
    })?;
    let mut it = size_line.split_whitespace();
    let n_rows: usize = parse_num(it.next(), size_no, "row count")?;
    let n_cols: usize = parse_num(it.next(), size_no, "column count")?;
    if symmetry == Symmetry::Symmetric && n_rows != n_cols {
        return Err(Error::Parse {
            line: size_no,
            msg: "symmetric matrix must be square".into(),
        });
    }
    let expected = match layout {
        Layout::Coordinate => parse_num(it.next(), size_no, "entry count")?,
        Layout::Array => match symmetry {
            Symmetry::General => n_rows * n_cols,
            Symmetry::Symmetric => n_rows * (n_rows + 1) / 2,
        },
    };

    let mut triplets = Vec::with_capacity(if symmetry == Symmetry::Symmetric { 2 * expected } else { expected });
    let mut push = |i: usize, j: usize, v: f64, line: usize| -> Result<()> {
        if i >= n_rows || j >= n_cols {
            return Err(Error::Parse {
                line,
                msg: format!("entry ({}, {}) outside {n_rows}x{n_cols}", i + 1, j + 1),
            });
        }
        if !v.is_finite() {
            return Err(Error::Parse {
                line,
                msg: "non-finite value".into(),
            });
        }
        if symmetry == Symmetry::Symmetric && j > i {
            return Err(Error::Parse {
                line,
                msg: "symmetric file stores an upper-triangular entry".into(),
            });
        }
        triplets.push((i, j, v));
        if symmetry == Symmetry::Symmetric && i != j {
            triplets.push((j, i, v));
        }
        Ok(())
    };

    let mut count = 0usize;
    // array layout walks columns top to bottom (lower triangle only when symmetric)
    let (mut ai, mut aj) = (0usize, 0usize);
    for (no, line) in lines {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('%') {
            continue;
        }
        let no = no + 1;
        if count == expected {
            return Err(Error::Parse {
                line: no,
                msg: "more entries than declared".into(),
            });
        }
        let mut it = trimmed.split_whitespace();
        match layout {
            Layout::Coordinate => {
                let i: usize = parse_num(it.next(), no, "row index")?;
                let j: usize = parse_num(it.next(), no, "column index")?;
                let v: f64 = parse_num(it.next(), no, "value")?;
                if i == 0 || j == 0 {
                    return Err(Error::Parse {
                        line: no,
                        msg: "indices are 1-based".into(),
                    });
                }
                push(i - 1, j - 1, v, no)?;
            }
            Layout::Array => {
                let v: f64 = parse_num(it.next(), no, "value")?;
                push(ai, aj, v, no)?;
                ai += 1;
                if ai == n_rows {
                    aj += 1;
                    ai = if symmetry == Symmetry::Symmetric { aj } else { 0 };
                }
            }
        }
        count += 1;
    }
    if count != expected {
        return Err(Error::Parse {
            line: 0,
            msg: format!("declared {expected} entries, found {count}"),
        });
    }
    CsrMatrix::from_triplets(n_rows, n_cols, &triplets)
}

pub fn read_matrix_market<P: AsRef<Path>>(path: P) -> Result<CsrMatrix> {
    let file = File::open(path)?;
    parse_matrix_market(BufReader::new(file))
}

/// Writes coordinate format. With `symmetric`, only the lower triangle is
/// written and the matrix must be exactly symmetric.
pub fn write_matrix_market<W: Write>(mut out: W, a: &CsrMatrix, symmetric: bool) -> Result<()> {
    if symmetric && !a.is_symmetric() {
        return Err(Error::InvalidMatrix("matrix is not symmetric".into()));
    }
    let stored = if symmetric { a.lower_triangle() } else { a.clone() };
    writeln!(
        out,
        "%%MatrixMarket matrix coordinate real {}",
        if symmetric { "symmetric" } else { "general" }
    )?;
    writeln!(out, "{} {} {}", a.n_rows(), a.n_cols(), stored.nnz())?;
    for i in 0..stored.n_rows() {
        let (cols, vals) = stored.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            // `{:e}` round-trips f64 exactly
            writeln!(out, "{} {} {:e}", i + 1, j + 1, v)?;
        }
    }
    Ok(())
}

pub fn write_matrix_market_file<P: AsRef<Path>>(path: P, a: &CsrMatrix, symmetric: bool) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_matrix_market(&mut w, a, symmetric)?;
    w.flush()?;
    Ok(())
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

/// Standard-normal vector from the pinned generator (see [`crate::rng`]),
/// scaled to unit 2-norm.
pub fn make_rhs(n: usize, seed: u64) -> Vec<f64> {
    let mut b = NormalStream::new(seed).normal_vec(n);
    normalize(&mut b);
    b
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Origin {
    DirectSpd,
    NormalEquations,
}

impl Origin {
    pub fn as_str(&self) -> &'static str {
        match self {
            Origin::DirectSpd => "spd",
            Origin::NormalEquations => "normal_equations",
        }
    }
}

/// How the right-hand side is generated for normal-equation problems.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RhsMode {
    /// Unit-norm random vector of length `n`.
    #[default]
    Random,
    /// `A^T g` for a random `g` of length `m`, normalized. Falls back to
    /// `Random` for square SPD inputs.
    NormalEquations,
}

impl RhsMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            RhsMode::Random => "random",
            RhsMode::NormalEquations => "normal_equations",
        }
    }
}

#[derive(Clone, Debug)]
pub struct ProblemInstance {
    pub name: String,
    pub s: CsrMatrix,
    pub b: Vec<f64>,
    pub origin: Origin,
    pub rhs_mode: RhsMode,
}

impl ProblemInstance {
    pub fn n(&self) -> usize {
        self.s.n_rows()
    }

    /// Square symmetric inputs are used directly; anything else is turned
    /// into normal equations `A^T A` (transposing first when `m < n`).
    pub fn from_matrix(name: impl Into<String>, a: CsrMatrix, rhs_mode: RhsMode, seed: u64) -> Result<Self> {
        let name = name.into();
        if a.is_square() && a.is_symmetric() {
            let b = make_rhs(a.n_rows(), seed);
            return Ok(Self {
                name,
                s: a,
                b,
                origin: Origin::DirectSpd,
                rhs_mode: RhsMode::Random,
            });
        }
        let a = if a.n_rows() < a.n_cols() { a.transpose() } else { a };
        let s = sparse_ata(&a);
        let b = match rhs_mode {
            RhsMode::Random => make_rhs(s.n_rows(), seed),
            RhsMode::NormalEquations => {
                let g = NormalStream::new(seed).normal_vec(a.n_rows());
                let mut b = a.spmv_transpose(&g)?;
                normalize(&mut b);
                b
            }
        };
        if b.iter().all(|&x| x == 0.0) {
            return Err(Error::Domain("right-hand side is zero".into()));
        }
        Ok(Self {
            name,
            s,
            b,
            origin: Origin::NormalEquations,
            rhs_mode,
        })
    }

    pub fn load<P: AsRef<Path>>(path: P, rhs_mode: RhsMode, seed: u64) -> Result<Self> {
        let path = path.as_ref();
        let a = read_matrix_market(path)?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        Self::from_matrix(name, a, rhs_mode, seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn symmetric_coordinate_is_mirrored() {
        let text = "%%MatrixMarket matrix coordinate real symmetric\n% comment\n2 2 3\n1 1 2\n2 1 -1\n2 2 2\n";
        let a = parse_matrix_market(Cursor::new(text)).unwrap();
        assert_eq!(a.to_dense(), nalgebra::DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 2.0]));
        assert!(a.is_symmetric());
    }

    #[test]
    fn general_round_trip() {
        let a = CsrMatrix::from_triplets(2, 3, &[(0, 0, 1.5), (0, 2, -2.25e-7), (1, 1, 3.0), (1, 2, 0.0)]).unwrap();
        let mut buf = Vec::new();
        write_matrix_market(&mut buf, &a, false).unwrap();
        let back = parse_matrix_market(Cursor::new(buf)).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn symmetric_round_trip() {
        let a = CsrMatrix::from_triplets(3, 3, &[(0, 0, 4.0), (1, 0, 0.1), (0, 1, 0.1), (1, 1, 3.0), (2, 2, 1.0 / 3.0)]).unwrap();
        let mut buf = Vec::new();
        write_matrix_market(&mut buf, &a, true).unwrap();
        assert_eq!(parse_matrix_market(Cursor::new(buf)).unwrap(), a);
    }

    #[test]
    fn duplicates_summed_and_integer_field() {
        let text = "%%MatrixMarket matrix coordinate integer general\n2 2 3\n1 1 2\n1 1 3\n2 2 1\n";
        let a = parse_matrix_market(Cursor::new(text)).unwrap();
        assert_eq!(a.get(0, 0), Some(5.0));
        assert_eq!(a.nnz(), 2);
    }

    #[test]
    fn array_layouts() {
        let general = "%%MatrixMarket matrix array real general\n2 2\n1\n2\n3\n4\n";
        let a = parse_matrix_market(Cursor::new(general)).unwrap();
        assert_eq!(a.to_dense(), nalgebra::DMatrix::from_row_slice(2, 2, &[1.0, 3.0, 2.0, 4.0]));
        let sym = "%%MatrixMarket matrix array real symmetric\n2 2\n1\n2\n4\n";
        let a = parse_matrix_market(Cursor::new(sym)).unwrap();
        assert_eq!(a.to_dense(), nalgebra::DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]));
    }

    #[test]
    fn rejects_unsupported_and_malformed() {
        let complex = "%%MatrixMarket matrix coordinate complex general\n1 1 1\n1 1 1 0\n";
        assert!(matches!(parse_matrix_market(Cursor::new(complex)), Err(Error::UnsupportedFormat(_))));
        let pattern = "%%MatrixMarket matrix coordinate pattern symmetric\n1 1 1\n1 1\n";
        assert!(matches!(parse_matrix_market(Cursor::new(pattern)), Err(Error::UnsupportedFormat(_))));
        let bad = "%%MatrixMarket vector coordinate real general\n";
        assert!(matches!(parse_matrix_market(Cursor::new(bad)), Err(Error::Parse { .. })));
        let short = "%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1\n";
        assert!(matches!(parse_matrix_market(Cursor::new(short)), Err(Error::Parse { .. })));
        let oob = "%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1\n";
        assert!(matches!(parse_matrix_market(Cursor::new(oob)), Err(Error::Parse { .. })));
        let upper = "%%MatrixMarket matrix coordinate real symmetric\n2 2 1\n1 2 1\n";
        assert!(matches!(parse_matrix_market(Cursor::new(upper)), Err(Error::Parse { .. })));
    }

    #[test]
    fn rhs_is_deterministic_and_unit() {
        let a = make_rhs(5, 7);
        assert_eq!(a, make_rhs(5, 7));
        for (n, seed) in [(1, 0), (5, 7), (1000, 123)] {
            let b = make_rhs(n, seed);
            let norm = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() <= 1e-14);
        }
    }

    #[test]
    fn rectangular_input_becomes_normal_equations() {
        let a = CsrMatrix::from_triplets(3, 2, &[(0, 0, 1.0), (1, 1, 2.0), (2, 0, 1.0)]).unwrap();
        let p = ProblemInstance::from_matrix("rect", a.clone(), RhsMode::Random, 1).unwrap();
        assert_eq!(p.origin, Origin::NormalEquations);
        assert_eq!(p.s.to_dense(), nalgebra::DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 4.0]));
        let wide = ProblemInstance::from_matrix("wide", a.transpose(), RhsMode::NormalEquations, 1).unwrap();
        assert_eq!(wide.s, p.s);
        assert_eq!(wide.rhs_mode, RhsMode::NormalEquations);
        let norm = wide.b.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-14);
    }
}
