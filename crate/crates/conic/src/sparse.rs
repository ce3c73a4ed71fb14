/// Compressed-column matrix used for the solver's matrix-vector products.
#[derive(Debug, Clone)]
pub(crate) struct Csc {
    pub rows: usize,
    pub cols: usize,
    pub col_ptr: Vec<usize>,
    pub row_idx: Vec<usize>,
    pub vals: Vec<f64>,
}

impl Csc {
    /// Builds from triplets, summing duplicates.
    pub fn from_triplets(rows: usize, cols: usize, trip: &[(usize, usize, f64)]) -> Self {
        let mut order: Vec<usize> = (0..trip.len()).collect();
        order.sort_unstable_by_key(|&k| (trip[k].1, trip[k].0));
        let mut col_ptr = vec![0usize; cols + 1];
        let mut row_idx: Vec<usize> = Vec::with_capacity(trip.len());
        let mut vals: Vec<f64> = Vec::with_capacity(trip.len());
        let mut last: Option<(usize, usize)> = None;
        for k in order {
            let (r, c, v) = trip[k];
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
            } else {
                row_idx.push(r);
                vals.push(v);
                col_ptr[c + 1] += 1;
                last = Some((r, c));
            }
        }
        for c in 0..cols {
            col_ptr[c + 1] += col_ptr[c];
        }
        Csc {
            rows,
            cols,
            col_ptr,
            row_idx,
            vals,
        }
    }

    /// `y += α·A x`
    pub fn gemv(&self, alpha: f64, x: &[f64], y: &mut [f64]) {
        for c in 0..self.cols {
            let xc = alpha * x[c];
            if xc == 0.0 {
                continue;
            }
            for p in self.col_ptr[c]..self.col_ptr[c + 1] {
                y[self.row_idx[p]] += self.vals[p] * xc;
            }
        }
    }

    /// `y += α·Aᵀ z`
    pub fn gemv_t(&self, alpha: f64, z: &[f64], y: &mut [f64]) {
        for c in 0..self.cols {
            let mut acc = 0.0;
            for p in self.col_ptr[c]..self.col_ptr[c + 1] {
                acc += self.vals[p] * z[self.row_idx[p]];
            }
            y[c] += alpha * acc;
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.cols).flat_map(move |c| {
            (self.col_ptr[c]..self.col_ptr[c + 1]).map(move |p| (self.row_idx[p], c, self.vals[p]))
        })
    }
}

pub(crate) fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
