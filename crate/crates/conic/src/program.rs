use std::collections::BTreeMap;
use std::fmt;
use std::ops::Range;

/// One factor of the cone product `K`.
///
/// A second-order cone of dimension `d` constrains `s = (t, u)` with
/// `u ∈ ℝ^{d-1}` to `‖u‖₂ ≤ t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cone {
    Zero(usize),
    Nonnegative(usize),
    SecondOrder(usize),
}

impl Cone {
    pub fn dim(&self) -> usize {
        match *self {
            Cone::Zero(d) | Cone::Nonnegative(d) | Cone::SecondOrder(d) => d,
        }
    }

    /// Barrier degree contributed to the complementarity measure.
    pub fn degree(&self) -> usize {
        match *self {
            Cone::Zero(_) => 0,
            Cone::Nonnegative(d) => d,
            Cone::SecondOrder(_) => 1,
        }
    }
}

impl fmt::Display for Cone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cone::Zero(d) => write!(f, "zero({d})"),
            Cone::Nonnegative(d) => write!(f, "nonneg({d})"),
            Cone::SecondOrder(d) => write!(f, "soc({d})"),
        }
    }
}

/// Affine function `Σ coeff·x[col] + constant` of the decision vector.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Affine {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl Affine {
    pub fn constant(value: f64) -> Self {
        Affine {
            terms: Vec::new(),
            constant: value,
        }
    }

    pub fn var(col: usize) -> Self {
        Affine {
            terms: vec![(col, 1.0)],
            constant: 0.0,
        }
    }

    pub fn term(col: usize, coeff: f64) -> Self {
        Affine {
            terms: vec![(col, coeff)],
            constant: 0.0,
        }
    }

    pub fn add_term(mut self, col: usize, coeff: f64) -> Self {
        self.terms.push((col, coeff));
        self
    }

    pub fn push_term(&mut self, col: usize, coeff: f64) {
        self.terms.push((col, coeff));
    }

    pub fn plus(mut self, other: &Affine) -> Self {
        self.terms.extend_from_slice(&other.terms);
        self.constant += other.constant;
        self
    }

    pub fn minus(mut self, other: &Affine) -> Self {
        self.terms.extend(other.terms.iter().map(|&(c, v)| (c, -v)));
        self.constant -= other.constant;
        self
    }

    pub fn scaled(mut self, factor: f64) -> Self {
        for t in &mut self.terms {
            t.1 *= factor;
        }
        self.constant *= factor;
        self
    }

    pub fn offset(mut self, delta: f64) -> Self {
        self.constant += delta;
        self
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .fold(self.constant, |acc, &(c, v)| acc + v * x[c])
    }
}

/// `minimize cᵀx  subject to  Ax + s = b,  s ∈ K`.
///
/// Rows of `A` are grouped consecutively by cone in the order of `cones`.
/// Constraints are appended as affine expressions `e(x)` that must lie in a
/// cone; each row stores `A = -∇e` and `b = e(0)` so that `s = b - Ax = e(x)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConicProgram {
    num_vars: usize,
    c: Vec<f64>,
    triplets: Vec<(usize, usize, f64)>,
    b: Vec<f64>,
    cones: Vec<Cone>,
}

impl ConicProgram {
    pub fn new() -> Self {
        Self::default()
    }

    /// Assemble a program from raw parts without checking consistency; run
    /// [`crate::validate`] before solving.
    pub fn from_parts(
        num_vars: usize,
        c: Vec<f64>,
        triplets: Vec<(usize, usize, f64)>,
        b: Vec<f64>,
        cones: Vec<Cone>,
    ) -> Self {
        ConicProgram {
            num_vars,
            c,
            triplets,
            b,
            cones,
        }
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn num_rows(&self) -> usize {
        self.b.len()
    }

    pub fn objective(&self) -> &[f64] {
        &self.c
    }

    pub fn triplets(&self) -> &[(usize, usize, f64)] {
        &self.triplets
    }

    pub fn rhs(&self) -> &[f64] {
        &self.b
    }

    pub fn cones(&self) -> &[Cone] {
        &self.cones
    }

    pub fn add_var(&mut self) -> usize {
        self.num_vars += 1;
        self.c.push(0.0);
        self.num_vars - 1
    }

    pub fn add_vars(&mut self, count: usize) -> VarRange {
        let start = self.num_vars;
        self.num_vars += count;
        self.c.resize(self.num_vars, 0.0);
        VarRange {
            start,
            end: self.num_vars,
        }
    }

    pub fn set_cost(&mut self, col: usize, value: f64) {
        self.c[col] = value;
    }

    /// Append `rows` as one cone of the given kind; `kind` only selects the
    /// cone family, the dimension comes from `rows.len()`.
    pub fn add_cone(&mut self, kind: Cone, rows: &[Affine]) {
        if rows.is_empty() {
            return;
        }
        for row in rows {
            let r = self.b.len();
            for &(col, coeff) in &row.terms {
                debug_assert!(col < self.num_vars, "column {col} out of range");
                if coeff != 0.0 {
                    self.triplets.push((r, col, -coeff));
                }
            }
            self.b.push(row.constant);
        }
        let d = rows.len();
        let cone = match kind {
            Cone::Zero(_) => Cone::Zero(d),
            Cone::Nonnegative(_) => Cone::Nonnegative(d),
            Cone::SecondOrder(_) => Cone::SecondOrder(d),
        };
        // merge consecutive zero / nonnegative blocks
        match (self.cones.last_mut(), cone) {
            (Some(Cone::Zero(prev)), Cone::Zero(d)) => *prev += d,
            (Some(Cone::Nonnegative(prev)), Cone::Nonnegative(d)) => *prev += d,
            _ => self.cones.push(cone),
        }
    }

    /// `e(x) = 0`.
    pub fn add_equality(&mut self, e: Affine) {
        self.add_cone(Cone::Zero(1), &[e]);
    }

    /// `e(x) ≥ 0`.
    pub fn add_nonnegative(&mut self, e: Affine) {
        self.add_cone(Cone::Nonnegative(1), &[e]);
    }

    /// `‖(e₁, …, e_k)‖₂ ≤ t`.
    pub fn add_soc(&mut self, t: Affine, rest: Vec<Affine>) {
        let mut rows = Vec::with_capacity(rest.len() + 1);
        rows.push(t);
        rows.extend(rest);
        self.add_cone(Cone::SecondOrder(0), &rows);
    }

    /// Row offsets of each cone in `cones()` order.
    pub fn cone_offsets(&self) -> Vec<usize> {
        let mut off = 0;
        self.cones
            .iter()
            .map(|k| {
                let o = off;
                off += k.dim();
                o
            })
            .collect()
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.c.iter().zip(x).map(|(a, b)| a * b).sum()
    }

    /// `s = b - Ax` for a given primal point.
    pub fn slack_at(&self, x: &[f64]) -> Vec<f64> {
        let mut s = self.b.clone();
        for &(r, c, v) in &self.triplets {
            s[r] -= v * x[c];
        }
        s
    }

    /// Largest cone violation of `b - Ax`; zero means `x` is feasible.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let s = self.slack_at(x);
        let mut worst: f64 = 0.0;
        let mut off = 0;
        for cone in &self.cones {
            let seg = &s[off..off + cone.dim()];
            worst = worst.max(crate::cones::violation(cone, seg));
            off += cone.dim();
        }
        worst
    }
}

/// Half-open column range `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct VarRange {
    pub start: usize,
    pub end: usize,
}

impl VarRange {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    pub fn at(&self, i: usize) -> usize {
        assert!(i < self.len(), "index {i} outside range of length {}", self.len());
        self.start + i
    }

    pub fn as_range(&self) -> Range<usize> {
        self.start..self.end
    }
}

/// Named handles onto column ranges of a program.
#[derive(Debug, Clone)]
pub struct VariableMap<K: Ord> {
    entries: BTreeMap<K, VarRange>,
    num_vars: usize,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum MapError {
    #[error("handle already registered")]
    Duplicate,
    #[error("range {start}..{end} overlaps an existing handle")]
    Overlap { start: usize, end: usize },
    #[error("no variable registered under the requested handle")]
    Missing,
    #[error("handles cover {covered} columns but the program declares {declared}")]
    Coverage { covered: usize, declared: usize },
}

impl<K: Ord + Clone> Default for VariableMap<K> {
    fn default() -> Self {
        VariableMap {
            entries: BTreeMap::new(),
            num_vars: 0,
        }
    }
}

impl<K: Ord + Clone> VariableMap<K> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, key: K, range: VarRange) -> Result<(), MapError> {
        if self.entries.contains_key(&key) {
            return Err(MapError::Duplicate);
        }
        if !range.is_empty()
            && self
                .entries
                .values()
                .any(|r| !r.is_empty() && r.start < range.end && range.start < r.end)
        {
            return Err(MapError::Overlap {
                start: range.start,
                end: range.end,
            });
        }
        self.num_vars = self.num_vars.max(range.end);
        self.entries.insert(key, range);
        Ok(())
    }

    pub fn get(&self, key: &K) -> Result<VarRange, MapError> {
        self.entries.get(key).copied().ok_or(MapError::Missing)
    }

    pub fn col(&self, key: &K) -> Result<usize, MapError> {
        let r = self.get(key)?;
        if r.len() != 1 {
            return Err(MapError::Missing);
        }
        Ok(r.start)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&K, &VarRange)> {
        self.entries.iter()
    }

    /// Total number of columns covered by registered handles.
    pub fn covered(&self) -> usize {
        self.entries.values().map(|r| r.len()).sum()
    }

    /// Checks that the handles tile `0..declared` exactly.
    pub fn check_coverage(&self, declared: usize) -> Result<(), MapError> {
        let covered = self.covered();
        if covered != declared || self.num_vars != declared {
            return Err(MapError::Coverage { covered, declared });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_store_negated_gradient() {
        let mut p = ConicProgram::new();
        let x = p.add_var();
        p.add_nonnegative(Affine::term(x, 2.0).offset(-1.0));
        assert_eq!(p.triplets(), &[(0, 0, -2.0)]);
        assert_eq!(p.rhs(), &[-1.0]);
        assert_eq!(p.slack_at(&[3.0]), vec![5.0]);
    }

    #[test]
    fn adjacent_linear_blocks_merge() {
        let mut p = ConicProgram::new();
        let x = p.add_var();
        p.add_nonnegative(Affine::var(x));
        p.add_nonnegative(Affine::var(x));
        p.add_soc(Affine::constant(1.0), vec![Affine::var(x)]);
        p.add_equality(Affine::var(x));
        p.add_equality(Affine::var(x));
        assert_eq!(
            p.cones(),
            &[Cone::Nonnegative(2), Cone::SecondOrder(2), Cone::Zero(2)]
        );
        assert_eq!(p.cone_offsets(), vec![0, 2, 4]);
    }

    #[test]
    fn variable_map_rejects_overlap_and_checks_coverage() {
        let mut m: VariableMap<&str> = VariableMap::new();
        m.insert("a", VarRange { start: 0, end: 3 }).unwrap();
        assert_eq!(
            m.insert("b", VarRange { start: 2, end: 4 }),
            Err(MapError::Overlap { start: 2, end: 4 })
        );
        assert_eq!(
            m.insert("a", VarRange { start: 5, end: 6 }),
            Err(MapError::Duplicate)
        );
        m.insert("b", VarRange { start: 3, end: 4 }).unwrap();
        assert!(m.check_coverage(4).is_ok());
        assert!(m.check_coverage(5).is_err());
        assert_eq!(m.get(&"zz"), Err(MapError::Missing));
        assert_eq!(m.col(&"b"), Ok(3));
    }
}
