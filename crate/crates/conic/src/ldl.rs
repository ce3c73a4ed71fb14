//! Sparse LDLᵀ factorization of symmetric quasi-definite matrices.
//!
//! The symbolic phase computes a minimum-degree ordering, the elimination
//! tree and column counts once per sparsity pattern; the numeric phase is an
//! up-looking factorization that can be repeated with new values. No pivoting
//! is done: quasi-definite matrices admit an LDLᵀ factorization under any
//! symmetric permutation, and the expected sign of every pivot is known.

const NONE: usize = usize::MAX;

/// Minimum-degree ordering of the graph of a symmetric pattern given as
/// `(i, j)` pairs (either triangle, duplicates allowed). Vertices flagged in
/// `defer` are ordered after all others.
pub(crate) fn minimum_degree(n: usize, pairs: &[(usize, usize)], defer: &[bool]) -> Vec<usize> {
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(i, j) in pairs {
        if i != j {
            adj[i].push(j);
            adj[j].push(i);
        }
    }
    for a in &mut adj {
        a.sort_unstable();
        a.dedup();
    }

    let mut eliminated = vec![false; n];
    let mut mark = vec![NONE; n];
    // bucket queue keyed by current degree, with lazy deletion
    // deferred vertices live in a second band of buckets
    let band = |v: usize| if defer[v] { n + 1 } else { 0 };
    let mut degree: Vec<usize> = adj.iter().map(|a| a.len()).collect();
    let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); 2 * n + 2];
    for v in 0..n {
        buckets[degree[v] + band(v)].push(v);
    }
    let mut order = Vec::with_capacity(n);
    let mut lowest = 0;
    while order.len() < n {
        // find the live vertex with smallest degree
        let p = loop {
            while lowest < buckets.len() && buckets[lowest].is_empty() {
                lowest += 1;
            }
            let cand = buckets[lowest].pop().expect("queue exhausted");
            if !eliminated[cand] && degree[cand] + band(cand) == lowest {
                break cand;
            }
        };
        eliminated[p] = true;
        order.push(p);
        let nbrs = std::mem::take(&mut adj[p]);
        let live: Vec<usize> = nbrs.into_iter().filter(|&u| !eliminated[u]).collect();
        for &u in &live {
            // adj[u] := (adj[u] ∪ live) \ {p, u}
            let tag = u;
            let list = &mut adj[u];
            list.retain(|&x| x != p && !eliminated[x]);
            for &x in list.iter() {
                mark[x] = tag;
            }
            for &x in &live {
                if x != u && mark[x] != tag {
                    list.push(x);
                    mark[x] = tag;
                }
            }
            for &x in list.iter() {
                mark[x] = NONE;
            }
            let d = list.len();
            if d != degree[u] {
                degree[u] = d;
                let key = d + band(u);
                buckets[key].push(u);
                if key < lowest {
                    lowest = key;
                }
            }
        }
    }
    order
}

/// Symbolic analysis plus storage for repeated numeric factorizations.
#[derive(Debug, Clone)]
pub(crate) struct LdlFactor {
    n: usize,
    /// `perm[new] = old`
    perm: Vec<usize>,
    /// upper-triangular permuted matrix, CSC
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
    /// for each input entry, its slot in `values`
    slot_of_entry: Vec<usize>,
    etree: Vec<usize>,
    l_ptr: Vec<usize>,
    l_idx: Vec<usize>,
    l_val: Vec<f64>,
    d: Vec<f64>,
    d_inv: Vec<f64>,
    /// expected pivot signs in permuted order
    signs: Vec<f64>,
    work: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub(crate) enum LdlError {
    #[error("non-finite pivot at column {0}")]
    NonFinite(usize),
}

impl LdlFactor {
    /// `entries` lists `(row, col)` positions of the upper triangle
    /// (`row ≤ col`) in the order values will later be supplied; every
    /// diagonal must appear. `signs[i]` is the expected sign of pivot `i`;
    /// columns flagged in `defer` are eliminated last.
    pub(crate) fn analyze(
        n: usize,
        entries: &[(usize, usize)],
        signs: &[f64],
        defer: &[bool],
    ) -> Self {
        let perm = minimum_degree(n, entries, defer);
        let mut pinv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            pinv[old] = new;
        }

        // permuted upper-triangular coordinates
        let mapped: Vec<(usize, usize)> = entries
            .iter()
            .map(|&(r, c)| {
                let (a, b) = (pinv[r], pinv[c]);
                if a <= b {
                    (a, b)
                } else {
                    (b, a)
                }
            })
            .collect();
        let mut order: Vec<usize> = (0..mapped.len()).collect();
        order.sort_unstable_by_key(|&k| (mapped[k].1, mapped[k].0));

        let mut col_ptr = vec![0usize; n + 1];
        let mut row_idx = Vec::with_capacity(mapped.len());
        let mut slot_of_entry = vec![0usize; mapped.len()];
        let mut last: Option<(usize, usize)> = None;
        for &k in &order {
            let (r, c) = mapped[k];
            if last != Some((r, c)) {
                row_idx.push(r);
                col_ptr[c + 1] += 1;
                last = Some((r, c));
            }
            slot_of_entry[k] = row_idx.len() - 1;
        }
        for c in 0..n {
            col_ptr[c + 1] += col_ptr[c];
        }

        // elimination tree and column counts of L
        let mut etree = vec![NONE; n];
        let mut lnz = vec![0usize; n];
        let mut flag = vec![NONE; n];
        for j in 0..n {
            flag[j] = j;
            for p in col_ptr[j]..col_ptr[j + 1] {
                let mut i = row_idx[p];
                while flag[i] != j {
                    if etree[i] == NONE {
                        etree[i] = j;
                    }
                    lnz[i] += 1;
                    flag[i] = j;
                    i = etree[i];
                }
            }
        }
        let mut l_ptr = vec![0usize; n + 1];
        for i in 0..n {
            l_ptr[i + 1] = l_ptr[i] + lnz[i];
        }
        let nnz_l = l_ptr[n];
        let signs_p = perm.iter().map(|&old| signs[old]).collect();

        LdlFactor {
            n,
            perm,
            values: vec![0.0; row_idx.len()],
            col_ptr,
            row_idx,
            slot_of_entry,
            etree,
            l_ptr,
            l_idx: vec![0; nnz_l],
            l_val: vec![0.0; nnz_l],
            d: vec![0.0; n],
            d_inv: vec![0.0; n],
            signs: signs_p,
            work: vec![0.0; n],
        }
    }

    /// Numeric factorization. `values[k]` belongs to `entries[k]` from
    /// [`Self::analyze`]. Pivots whose sign disagrees with the expected one,
    /// or whose magnitude drops below `delta_min`, are replaced by
    /// `sign·delta`. Returns the number of such replacements.
    pub(crate) fn factor(
        &mut self,
        values: &[f64],
        delta_min: f64,
        delta: f64,
    ) -> Result<usize, LdlError> {
        self.values.iter_mut().for_each(|v| *v = 0.0);
        for (k, &v) in values.iter().enumerate() {
            self.values[self.slot_of_entry[k]] += v;
        }

        let n = self.n;
        let mut y_vals = vec![0.0; n];
        let mut y_used = vec![false; n];
        let mut y_idx = vec![0usize; n];
        let mut elim = vec![0usize; n];
        let mut next_in_col: Vec<usize> = self.l_ptr[..n].to_vec();
        let mut bumped = 0;

        for k in 0..n {
            let mut nnz_y = 0;
            self.d[k] = 0.0;
            for p in self.col_ptr[k]..self.col_ptr[k + 1] {
                let b = self.row_idx[p];
                if b == k {
                    self.d[k] = self.values[p];
                    continue;
                }
                y_vals[b] = self.values[p];
                if !y_used[b] {
                    y_used[b] = true;
                    elim[0] = b;
                    let mut ne = 1;
                    let mut next = self.etree[b];
                    while next != NONE && next < k {
                        if y_used[next] {
                            break;
                        }
                        y_used[next] = true;
                        elim[ne] = next;
                        ne += 1;
                        next = self.etree[next];
                    }
                    while ne > 0 {
                        ne -= 1;
                        y_idx[nnz_y] = elim[ne];
                        nnz_y += 1;
                    }
                }
            }
            for i in (0..nnz_y).rev() {
                let c = y_idx[i];
                let slot = next_in_col[c];
                let yc = y_vals[c];
                for j in self.l_ptr[c]..slot {
                    y_vals[self.l_idx[j]] -= self.l_val[j] * yc;
                }
                self.l_idx[slot] = k;
                let lv = yc * self.d_inv[c];
                self.l_val[slot] = lv;
                self.d[k] -= yc * lv;
                next_in_col[c] += 1;
                y_vals[c] = 0.0;
                y_used[c] = false;
            }
            let sign = self.signs[k];
            if !self.d[k].is_finite() {
                return Err(LdlError::NonFinite(k));
            }
            if self.d[k] * sign < delta_min {
                self.d[k] = sign * delta;
                bumped += 1;
            }
            self.d_inv[k] = 1.0 / self.d[k];
        }
        Ok(bumped)
    }

    /// Solves `K x = b` in place using the last factorization.
    pub(crate) fn solve(&mut self, x: &mut [f64]) {
        let n = self.n;
        let w = &mut self.work;
        for i in 0..n {
            w[i] = x[self.perm[i]];
        }
        for i in 0..n {
            let wi = w[i];
            for j in self.l_ptr[i]..self.l_ptr[i + 1] {
                w[self.l_idx[j]] -= self.l_val[j] * wi;
            }
        }
        for i in 0..n {
            w[i] *= self.d_inv[i];
        }
        for i in (0..n).rev() {
            let mut acc = w[i];
            for j in self.l_ptr[i]..self.l_ptr[i + 1] {
                acc -= self.l_val[j] * w[self.l_idx[j]];
            }
            w[i] = acc;
        }
        for i in 0..n {
            x[self.perm[i]] = w[i];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_mul(n: usize, entries: &[(usize, usize)], vals: &[f64], x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; n];
        for (k, &(r, c)) in entries.iter().enumerate() {
            y[r] += vals[k] * x[c];
            if r != c {
                y[c] += vals[k] * x[r];
            }
        }
        y
    }

    #[test]
    fn quasi_definite_solve() {
        // [ 4 0 | 1 2 ]
        // [ 0 3 | 0 1 ]
        // [ 1 0 |-2 0 ]
        // [ 2 1 | 0 -1]
        let entries = vec![(0, 0), (1, 1), (2, 2), (3, 3), (0, 2), (0, 3), (1, 3)];
        let vals = vec![4.0, 3.0, -2.0, -1.0, 1.0, 2.0, 1.0];
        let signs = vec![1.0, 1.0, -1.0, -1.0];
        let mut f = LdlFactor::analyze(4, &entries, &signs, &[false; 4]);
        assert_eq!(f.factor(&vals, 1e-14, 1e-7).unwrap(), 0);
        let b = vec![1.0, -2.0, 0.5, 3.0];
        let mut x = b.clone();
        f.solve(&mut x);
        let back = dense_mul(4, &entries, &vals, &x);
        for i in 0..4 {
            assert!((back[i] - b[i]).abs() < 1e-12, "{back:?}");
        }
    }

    #[test]
    fn duplicate_entries_are_summed() {
        let entries = vec![(0, 0), (0, 0), (1, 1), (0, 1)];
        let vals = vec![1.0, 1.0, -3.0, 1.0];
        let mut f = LdlFactor::analyze(2, &entries, &[1.0, -1.0], &[false; 2]);
        f.factor(&vals, 1e-14, 1e-7).unwrap();
        let mut x = vec![1.0, 1.0];
        f.solve(&mut x);
        // [2 1; 1 -3] x = [1 1]
        assert!((2.0 * x[0] + x[1] - 1.0).abs() < 1e-12);
        assert!((x[0] - 3.0 * x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ordering_is_a_permutation() {
        let pairs: Vec<(usize, usize)> = (0..20).map(|i| (i, (i * 7 + 3) % 20)).collect();
        let mut p = minimum_degree(20, &pairs, &[false; 20]);
        p.sort_unstable();
        assert_eq!(p, (0..20).collect::<Vec<_>>());
    }

    #[test]
    fn deferred_vertices_come_last() {
        // star around vertex 0: unconstrained, the leaves go first and 0 last
        let pairs: Vec<(usize, usize)> = (1..6).map(|i| (0, i)).collect();
        let mut defer = [false; 6];
        defer[2] = true;
        defer[4] = true;
        let p = minimum_degree(6, &pairs, &defer);
        let tail: Vec<usize> = p[4..].to_vec();
        assert!(tail.contains(&2) && tail.contains(&4), "{p:?}");
    }
}
