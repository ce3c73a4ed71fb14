//! Plain-text sparse format for cone programs.
//!
//! ```text
//! # comments start with '#'
//! conic 1
//! vars 2
//! rows 3
//! cones 2
//! nonneg 1
//! soc 2
//! objective 1
//! 0 -1
//! matrix 3
//! 0 0 1
//! 1 1 -1
//! 2 0 -1
//! rhs 2
//! 0 3
//! 1 1
//! end
//! ```
//!
//! Indices are zero-based. The program is `minimize cᵀx s.t. Ax + s = b,
//! s ∈ K`, with cone kinds `zero`, `nonneg` and `soc` listed in row order.
//! Only nonzero objective/rhs entries need to be listed; duplicate matrix
//! entries are summed. Values use Rust's shortest round-trip formatting, so a
//! write/read cycle is exact.

use std::fmt::Write as _;

use crate::program::{Cone, ConicProgram};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

pub fn write_program(prog: &ConicProgram) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "conic 1");
    let _ = writeln!(out, "vars {}", prog.num_vars());
    let _ = writeln!(out, "rows {}", prog.num_rows());
    let _ = writeln!(out, "cones {}", prog.cones().len());
    for cone in prog.cones() {
        let (kind, d) = match cone {
            Cone::Zero(d) => ("zero", d),
            Cone::Nonnegative(d) => ("nonneg", d),
            Cone::SecondOrder(d) => ("soc", d),
        };
        let _ = writeln!(out, "{kind} {d}");
    }
    let obj: Vec<(usize, f64)> = prog
        .objective()
        .iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(i, v)| (i, *v))
        .collect();
    let _ = writeln!(out, "objective {}", obj.len());
    for (i, v) in obj {
        let _ = writeln!(out, "{i} {v:?}");
    }
    let _ = writeln!(out, "matrix {}", prog.triplets().len());
    for &(r, c, v) in prog.triplets() {
        let _ = writeln!(out, "{r} {c} {v:?}");
    }
    let rhs: Vec<(usize, f64)> = prog
        .rhs()
        .iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(i, v)| (i, *v))
        .collect();
    let _ = writeln!(out, "rhs {}", rhs.len());
    for (i, v) in rhs {
        let _ = writeln!(out, "{i} {v:?}");
    }
    let _ = writeln!(out, "end");
    out
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn next_tokens(&mut self) -> Result<Vec<&'a str>, ParseError> {
        for (i, raw) in self.inner.by_ref() {
            self.line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            return Ok(content.split_whitespace().collect());
        }
        Err(self.err("unexpected end of input"))
    }

    fn err(&self, message: impl Into<String>) -> ParseError {
        ParseError {
            line: self.line,
            message: message.into(),
        }
    }

    fn header(&mut self, key: &str) -> Result<usize, ParseError> {
        let t = self.next_tokens()?;
        if t.len() != 2 || t[0] != key {
            return Err(self.err(format!("expected `{key} <count>`")));
        }
        self.int(t[1])
    }

    fn int(&self, tok: &str) -> Result<usize, ParseError> {
        tok.parse()
            .map_err(|_| self.err(format!("invalid integer `{tok}`")))
    }

    fn float(&self, tok: &str) -> Result<f64, ParseError> {
        tok.parse()
            .map_err(|_| self.err(format!("invalid number `{tok}`")))
    }
}

pub fn read_program(text: &str) -> Result<ConicProgram, ParseError> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        line: 0,
    };
    let version = lines.header("conic")?;
    if version != 1 {
        return Err(lines.err(format!("unsupported format version {version}")));
    }
    let n = lines.header("vars")?;
    let m = lines.header("rows")?;
    let k = lines.header("cones")?;
    let mut cones = Vec::with_capacity(k);
    for _ in 0..k {
        let t = lines.next_tokens()?;
        if t.len() != 2 {
            return Err(lines.err("expected `<kind> <dim>`"));
        }
        let d = lines.int(t[1])?;
        cones.push(match t[0] {
            "zero" => Cone::Zero(d),
            "nonneg" => Cone::Nonnegative(d),
            "soc" => Cone::SecondOrder(d),
            other => return Err(lines.err(format!("unknown cone kind `{other}`"))),
        });
    }
    let mut c = vec![0.0; n];
    for _ in 0..lines.header("objective")? {
        let t = lines.next_tokens()?;
        if t.len() != 2 {
            return Err(lines.err("expected `<col> <value>`"));
        }
        let j = lines.int(t[0])?;
        if j >= n {
            return Err(lines.err(format!("objective index {j} ≥ vars {n}")));
        }
        c[j] = lines.float(t[1])?;
    }
    let nnz = lines.header("matrix")?;
    let mut trip = Vec::with_capacity(nnz);
    for _ in 0..nnz {
        let t = lines.next_tokens()?;
        if t.len() != 3 {
            return Err(lines.err("expected `<row> <col> <value>`"));
        }
        let (r, col) = (lines.int(t[0])?, lines.int(t[1])?);
        if r >= m || col >= n {
            return Err(lines.err(format!("entry ({r}, {col}) outside {m}x{n}")));
        }
        trip.push((r, col, lines.float(t[2])?));
    }
    let mut b = vec![0.0; m];
    for _ in 0..lines.header("rhs")? {
        let t = lines.next_tokens()?;
        if t.len() != 2 {
            return Err(lines.err("expected `<row> <value>`"));
        }
        let i = lines.int(t[0])?;
        if i >= m {
            return Err(lines.err(format!("rhs index {i} ≥ rows {m}")));
        }
        b[i] = lines.float(t[1])?;
    }
    let t = lines.next_tokens()?;
    if t != ["end"] {
        return Err(lines.err("expected `end`"));
    }
    Ok(ConicProgram::from_parts(n, c, trip, b, cones))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::program::Affine;

    #[test]
    fn round_trip_is_exact() {
        let mut p = ConicProgram::new();
        let x = p.add_var();
        let y = p.add_var();
        p.set_cost(x, -1.0 / 3.0);
        p.add_nonnegative(Affine::term(x, -0.1).offset(3.0));
        p.add_soc(Affine::var(y), vec![Affine::term(x, std::f64::consts::PI)]);
        p.add_equality(Affine::var(y).offset(-2.0));
        let back = read_program(&write_program(&p)).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let text = "conic 1\nvars 1\nrows 1\ncones 1\nbogus 1\n";
        let e = read_program(text).unwrap_err();
        assert_eq!(e.line, 5);
        assert!(e.message.contains("bogus"));
        let e = read_program("conic 2\n").unwrap_err();
        assert_eq!(e.line, 1);
    }
}
