use std::fmt;

use crate::program::{Cone, ConicProgram};

#[derive(Debug, Clone, PartialEq)]
pub enum Issue {
    /// Sum of cone dimensions differs from the number of rows.
    RowConeMismatch { rows: usize, cone_rows: usize },
    ObjectiveLength { expected: usize, found: usize },
    EmptyCone { index: usize },
    SocTooSmall { index: usize, dim: usize },
    EntryOutOfRange { row: usize, col: usize },
    NonFinite { what: &'static str },
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Issue::RowConeMismatch { rows, cone_rows } => {
                write!(f, "A has {rows} rows but cones cover {cone_rows}")
            }
            Issue::ObjectiveLength { expected, found } => {
                write!(f, "objective has {found} entries, expected {expected}")
            }
            Issue::EmptyCone { index } => write!(f, "cone {index} has dimension 0"),
            Issue::SocTooSmall { index, dim } => {
                write!(f, "second-order cone {index} has dimension {dim} < 2")
            }
            Issue::EntryOutOfRange { row, col } => {
                write!(f, "matrix entry ({row}, {col}) out of range")
            }
            Issue::NonFinite { what } => write!(f, "non-finite value in {what}"),
        }
    }
}

/// Structural report on a program.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub issues: Vec<Issue>,
    pub num_vars: usize,
    pub num_rows: usize,
    pub num_cones: usize,
    pub nnz: usize,
}

impl Diagnostics {
    pub fn is_ok(&self) -> bool {
        self.issues.is_empty()
    }
}

impl fmt::Display for Diagnostics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} vars, {} rows, {} cones, {} nonzeros",
            self.num_vars, self.num_rows, self.num_cones, self.nnz
        )?;
        for issue in &self.issues {
            write!(f, "; {issue}")?;
        }
        Ok(())
    }
}

pub fn validate(prog: &ConicProgram) -> Diagnostics {
    let mut issues = Vec::new();
    let n = prog.num_vars();
    let m = prog.num_rows();
    let cone_rows: usize = prog.cones().iter().map(Cone::dim).sum();
    if cone_rows != m {
        issues.push(Issue::RowConeMismatch { rows: m, cone_rows });
    }
    if prog.objective().len() != n {
        issues.push(Issue::ObjectiveLength {
            expected: n,
            found: prog.objective().len(),
        });
    }
    for (index, cone) in prog.cones().iter().enumerate() {
        match *cone {
            Cone::SecondOrder(dim) if dim < 2 => issues.push(Issue::SocTooSmall { index, dim }),
            c if c.dim() == 0 => issues.push(Issue::EmptyCone { index }),
            _ => {}
        }
    }
    if let Some(&(row, col, _)) = prog.triplets().iter().find(|&&(r, c, _)| r >= m || c >= n) {
        issues.push(Issue::EntryOutOfRange { row, col });
    }
    if prog.triplets().iter().any(|t| !t.2.is_finite()) {
        issues.push(Issue::NonFinite { what: "A" });
    }
    if prog.rhs().iter().any(|v| !v.is_finite()) {
        issues.push(Issue::NonFinite { what: "b" });
    }
    if prog.objective().iter().any(|v| !v.is_finite()) {
        issues.push(Issue::NonFinite { what: "c" });
    }
    Diagnostics {
        issues,
        num_vars: n,
        num_rows: m,
        num_cones: prog.cones().len(),
        nnz: prog.triplets().len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::program::Affine;

    #[test]
    fn well_formed_program_has_no_issues() {
        let mut p = ConicProgram::new();
        let t = p.add_var();
        p.set_cost(t, 1.0);
        p.add_soc(Affine::var(t), vec![Affine::constant(1.0), Affine::constant(1.0)]);
        let d = validate(&p);
        assert!(d.is_ok(), "{d}");
        assert_eq!((d.num_vars, d.num_rows, d.num_cones), (1, 3, 1));
    }

    #[test]
    fn row_cone_mismatch_is_reported() {
        let p = ConicProgram::from_parts(
            1,
            vec![0.0],
            vec![(0, 0, 1.0)],
            vec![0.0, 0.0],
            vec![Cone::Nonnegative(1)],
        );
        assert_eq!(
            validate(&p).issues,
            vec![Issue::RowConeMismatch {
                rows: 2,
                cone_rows: 1
            }]
        );
    }

    #[test]
    fn degenerate_cones_are_flagged() {
        let p = ConicProgram::from_parts(
            1,
            vec![0.0],
            vec![],
            vec![1.0],
            vec![Cone::SecondOrder(1), Cone::Zero(0)],
        );
        let issues = validate(&p).issues;
        assert!(issues.contains(&Issue::SocTooSmall { index: 0, dim: 1 }));
        assert!(issues.contains(&Issue::EmptyCone { index: 1 }));
    }
}
