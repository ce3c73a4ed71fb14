//! Second-order cone rewritings of hyperbolic constraints and of products
//! of nonnegative variables.

use crate::program::{Affine, ConicProgram};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TransformError {
    #[error("hyperbolic constraint needs at least one w entry")]
    EmptyW,
    #[error("geometric-mean tree needs at least one leaf")]
    NoLeaves,
}

/// Appends `‖(2w, x − y)‖₂ ≤ x + y`, i.e. `wᵀw ≤ x·y` with `x, y ≥ 0`.
pub fn add_hyperbolic(
    prog: &mut ConicProgram,
    w: &[Affine],
    x: &Affine,
    y: &Affine,
) -> Result<(), TransformError> {
    if w.is_empty() {
        return Err(TransformError::EmptyW);
    }
    let mut rest: Vec<Affine> = w.iter().map(|wi| wi.clone().scaled(2.0)).collect();
    rest.push(x.clone().minus(y));
    prog.add_soc(x.clone().plus(y), rest);
    Ok(())
}

/// Evaluates the hyperbolic SOC rows at a point. Returns
/// `(‖(2w, x − y)‖, x + y)`; the point is a member iff the first is `≤` the
/// second.
pub fn hyperbolic_rows(w: &[f64], x: f64, y: f64) -> (f64, f64) {
    let lhs = (w.iter().map(|v| 4.0 * v * v).sum::<f64>() + (x - y).powi(2)).sqrt();
    (lhs, x + y)
}

/// Result of [`gm_tree`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GmTree {
    /// column of the root `ψ⁰`
    pub root: usize,
    /// columns of the fresh internal nodes, root first (empty for one leaf)
    pub nodes: Vec<usize>,
    /// columns pinned to the constant 1 to pad the leaf count
    pub padding: Vec<usize>,
    /// tree depth `p`: the root bounds `(∏ leaves)^{1/2^p}`
    pub depth: u32,
}

/// Builds a binary tree of hyperbolic constraints whose root `ψ⁰` satisfies
/// `ψ⁰ ≤ (∏ leaves · 1^{pad})^{1/2^p}` at every feasible point, with
/// equality attainable. The leaf count is padded to the next power of two
/// with fresh variables pinned to 1 through equality rows.
///
/// Leaves must be constrained nonnegative elsewhere.
pub fn gm_tree(prog: &mut ConicProgram, leaves: &[usize]) -> Result<GmTree, TransformError> {
    if leaves.is_empty() {
        return Err(TransformError::NoLeaves);
    }
    if leaves.len() == 1 {
        return Ok(GmTree {
            root: leaves[0],
            nodes: Vec::new(),
            padding: Vec::new(),
            depth: 0,
        });
    }
    let width = leaves.len().next_power_of_two();
    let depth = width.trailing_zeros();
    let mut level: Vec<usize> = leaves.to_vec();
    let mut padding = Vec::new();
    while level.len() < width {
        let one = prog.add_var();
        prog.add_equality(Affine::var(one).offset(-1.0));
        padding.push(one);
        level.push(one);
    }

    // allocate all internal nodes up front, root first, so the columns of a
    // tree are contiguous
    let internal = prog.add_vars(width - 1);
    let nodes: Vec<usize> = internal.as_range().collect();
    // node k (heap order, root = 0) has children 2k+1, 2k+2; the children of
    // the deepest internal level are the leaves
    let first_leaf_level = width - 1;
    let child = |idx: usize| -> usize {
        if idx >= first_leaf_level {
            level[idx - first_leaf_level]
        } else {
            nodes[idx]
        }
    };
    for k in (0..width - 1).rev() {
        let (l, r) = (child(2 * k + 1), child(2 * k + 2));
        add_hyperbolic(prog, &[Affine::var(nodes[k])], &Affine::var(l), &Affine::var(r))?;
    }
    Ok(GmTree {
        root: nodes[0],
        nodes,
        padding,
        depth,
    })
}
