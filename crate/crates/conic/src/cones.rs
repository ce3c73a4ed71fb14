//! Cone arithmetic: membership, step lengths, Jordan products and
//! Nesterov–Todd scaling for the zero, nonnegative and second-order cones.

use crate::program::Cone;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Distance-like violation of `s ∈ cone`; zero when `s` is a member.
pub fn violation(cone: &Cone, s: &[f64]) -> f64 {
    match cone {
        Cone::Zero(_) => s.iter().fold(0.0, |m, v| m.max(v.abs())),
        Cone::Nonnegative(_) => s.iter().fold(0.0, |m, &v| m.max(-v)),
        Cone::SecondOrder(_) => (norm(&s[1..]) - s[0]).max(0.0),
    }
}

/// Violation of `z ∈ cone*`. The zero cone's dual is the whole space.
pub fn dual_violation(cone: &Cone, z: &[f64]) -> f64 {
    match cone {
        Cone::Zero(_) => 0.0,
        _ => violation(cone, z),
    }
}

/// Value `J(u) = u₀² − ‖u₁‖²` computed as a product of factors.
fn soc_residual(u: &[f64]) -> f64 {
    let n1 = norm(&u[1..]);
    (u[0] - n1) * (u[0] + n1)
}

/// Largest `α ≥ 0` keeping `u + α·du` in the cone (may be `f64::INFINITY`).
/// `u` must lie in the cone.
pub fn max_step(cone: &Cone, u: &[f64], du: &[f64]) -> f64 {
    match cone {
        Cone::Zero(_) => f64::INFINITY,
        Cone::Nonnegative(_) => u
            .iter()
            .zip(du)
            .filter(|(_, &d)| d < 0.0)
            .fold(f64::INFINITY, |a, (&x, &d)| a.min(-x / d)),
        Cone::SecondOrder(_) => soc_max_step(u, du),
    }
}

fn soc_max_step(u: &[f64], du: &[f64]) -> f64 {
    // J(u + α du) = a α² + 2 b α + c
    let a = du[0] * du[0] - dot(&du[1..], &du[1..]);
    let b = u[0] * du[0] - dot(&u[1..], &du[1..]);
    let c = soc_residual(u).max(0.0);

    let mut alpha = f64::INFINITY;
    if du[0] < 0.0 {
        alpha = -u[0] / du[0];
    }
    let root = if a.abs() <= f64::EPSILON * (b.abs() + c.abs() + 1e-300) {
        if b < 0.0 {
            -c / (2.0 * b)
        } else {
            f64::INFINITY
        }
    } else {
        let disc = b * b - a * c;
        if disc < 0.0 {
            // no real root: J keeps the sign of c
            f64::INFINITY
        } else {
            let sq = disc.sqrt();
            // roots of a α² + 2bα + c, computed without cancellation
            let q = -(b + b.signum() * sq);
            let (r1, r2) = if q != 0.0 { (q / a, c / q) } else { (0.0, 0.0) };
            let mut best = f64::INFINITY;
            for r in [r1, r2] {
                if r > 0.0 && r < best {
                    best = r;
                }
            }
            if c == 0.0 && b < 0.0 {
                best = 0.0;
            }
            best
        }
    };
    alpha.min(root)
}

/// Jordan product `u ∘ v`, written into `out`.
pub fn circ(cone: &Cone, u: &[f64], v: &[f64], out: &mut [f64]) {
    match cone {
        Cone::Zero(_) => out.fill(0.0),
        Cone::Nonnegative(_) => {
            for i in 0..u.len() {
                out[i] = u[i] * v[i];
            }
        }
        Cone::SecondOrder(_) => {
            out[0] = dot(u, v);
            for i in 1..u.len() {
                out[i] = u[0] * v[i] + v[0] * u[i];
            }
        }
    }
}

/// Solves `λ ∘ x = d` for `x`.
pub fn inv_circ(cone: &Cone, lambda: &[f64], d: &[f64], out: &mut [f64]) {
    match cone {
        Cone::Zero(_) => out.fill(0.0),
        Cone::Nonnegative(_) => {
            for i in 0..d.len() {
                out[i] = d[i] / lambda[i];
            }
        }
        Cone::SecondOrder(_) => {
            let l0 = lambda[0];
            let j = soc_residual(lambda);
            let x0 = (l0 * d[0] - dot(&lambda[1..], &d[1..])) / j;
            out[0] = x0;
            for i in 1..d.len() {
                out[i] = (d[i] - x0 * lambda[i]) / l0;
            }
        }
    }
}

/// Adds `alpha·e` where `e` is the cone's identity element.
pub fn add_identity(cone: &Cone, u: &mut [f64], alpha: f64) {
    match cone {
        Cone::Zero(_) => {}
        Cone::Nonnegative(_) => u.iter_mut().for_each(|x| *x += alpha),
        Cone::SecondOrder(_) => u[0] += alpha,
    }
}

/// Smallest "eigenvalue" of `u` with respect to the cone's Jordan algebra.
pub fn min_eigenvalue(cone: &Cone, u: &[f64]) -> f64 {
    match cone {
        Cone::Zero(_) => 0.0,
        Cone::Nonnegative(_) => u.iter().copied().fold(f64::INFINITY, f64::min),
        Cone::SecondOrder(_) => u[0] - norm(&u[1..]),
    }
}

/// Moves `u` strictly inside the cone if it is not already.
pub fn shift_to_interior(cone: &Cone, u: &mut [f64]) {
    if u.is_empty() {
        return;
    }
    let lo = min_eigenvalue(cone, u);
    if let Cone::Zero(_) = cone {
        return;
    }
    // a barely interior start gives a nearly singular scaling, so anything
    // short of a unit margin is pushed out to one
    if !(lo >= 1.0) {
        let shift = if lo.is_finite() { 1.0 - lo } else { 1.0 };
        add_identity(cone, u, shift);
    }
}

/// Nesterov–Todd scaling of one cone at the pair `(s, z)`.
#[derive(Debug, Clone)]
pub enum BlockScaling {
    Zero,
    /// `W = diag(w)`, `w = √(s/z)`.
    Nonnegative { w: Vec<f64> },
    /// `W = η·[w₀ w₁ᵀ; w₁ I + w₁w₁ᵀ/(1+w₀)]` with `J(w) = 1`.
    SecondOrder { eta: f64, w: Vec<f64> },
}

impl BlockScaling {
    pub fn identity(cone: &Cone) -> Self {
        match cone {
            Cone::Zero(_) => BlockScaling::Zero,
            Cone::Nonnegative(d) => BlockScaling::Nonnegative { w: vec![1.0; *d] },
            Cone::SecondOrder(d) => {
                let mut w = vec![0.0; *d];
                w[0] = 1.0;
                BlockScaling::SecondOrder { eta: 1.0, w }
            }
        }
    }

    /// Recomputes the scaling; returns `false` if `s` or `z` left the
    /// interior.
    pub fn update(&mut self, s: &[f64], z: &[f64]) -> bool {
        match self {
            BlockScaling::Zero => true,
            BlockScaling::Nonnegative { w } => {
                for i in 0..s.len() {
                    if !(s[i] > 0.0 && z[i] > 0.0) {
                        return false;
                    }
                    w[i] = (s[i] / z[i]).sqrt();
                }
                true
            }
            BlockScaling::SecondOrder { eta, w } => {
                let js = soc_residual(s);
                let jz = soc_residual(z);
                if !(js > 0.0 && jz > 0.0 && s[0] > 0.0 && z[0] > 0.0) {
                    return false;
                }
                let ss = js.sqrt();
                let zs = jz.sqrt();
                *eta = (ss / zs).sqrt();
                let mut sbar_z = 0.0;
                for i in 0..s.len() {
                    sbar_z += (s[i] / ss) * (z[i] / zs);
                }
                let gamma = ((1.0 + sbar_z) / 2.0).sqrt();
                w[0] = (s[0] / ss + z[0] / zs) / (2.0 * gamma);
                for i in 1..s.len() {
                    w[i] = (s[i] / ss - z[i] / zs) / (2.0 * gamma);
                }
                // renormalise so that J(w) = 1 exactly
                let n1 = norm(&w[1..]);
                w[0] = (1.0 + n1 * n1).sqrt();
                true
            }
        }
    }

    /// `out = W v`.
    pub fn apply(&self, v: &[f64], out: &mut [f64]) {
        match self {
            BlockScaling::Zero => out.fill(0.0),
            BlockScaling::Nonnegative { w } => {
                for i in 0..v.len() {
                    out[i] = w[i] * v[i];
                }
            }
            BlockScaling::SecondOrder { eta, w } => {
                let w1v1 = dot(&w[1..], &v[1..]);
                out[0] = eta * (w[0] * v[0] + w1v1);
                let coef = w1v1 / (1.0 + w[0]) + v[0];
                for i in 1..v.len() {
                    out[i] = eta * (v[i] + coef * w[i]);
                }
            }
        }
    }

    /// `out = W⁻¹ v`.
    pub fn apply_inv(&self, v: &[f64], out: &mut [f64]) {
        match self {
            BlockScaling::Zero => out.fill(0.0),
            BlockScaling::Nonnegative { w } => {
                for i in 0..v.len() {
                    out[i] = v[i] / w[i];
                }
            }
            BlockScaling::SecondOrder { eta, w } => {
                let w1v1 = dot(&w[1..], &v[1..]);
                out[0] = (w[0] * v[0] - w1v1) / eta;
                let coef = w1v1 / (1.0 + w[0]) - v[0];
                for i in 1..v.len() {
                    out[i] = (v[i] + coef * w[i]) / eta;
                }
            }
        }
    }

    /// Upper-triangular entries `(i, j, value)` of `W²` (block-local
    /// indices, `i ≤ j`).
    pub fn w_squared_upper(&self, dim: usize, out: &mut Vec<(usize, usize, f64)>) {
        match self {
            BlockScaling::Zero => {
                for i in 0..dim {
                    out.push((i, i, 0.0));
                }
            }
            BlockScaling::Nonnegative { w } => {
                for (i, wi) in w.iter().enumerate() {
                    out.push((i, i, wi * wi));
                }
            }
            BlockScaling::SecondOrder { eta, w } => {
                // W² = η²(2wwᵀ − J)
                let e2 = eta * eta;
                for j in 0..dim {
                    for i in 0..=j {
                        let mut v = 2.0 * w[i] * w[j];
                        if i == j {
                            v += if i == 0 { -1.0 } else { 1.0 };
                        }
                        out.push((i, j, e2 * v));
                    }
                }
            }
        }
    }

    /// Number of entries emitted by [`Self::w_squared_upper`].
    pub fn pattern_len(cone: &Cone) -> usize {
        match cone {
            Cone::Zero(d) | Cone::Nonnegative(d) => *d,
            Cone::SecondOrder(d) => d * (d + 1) / 2,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn soc_step_hits_boundary() {
        let c = Cone::SecondOrder(3);
        let u = [2.0, 0.0, 0.0];
        let du = [0.0, 1.0, 0.0];
        assert_relative_eq!(max_step(&c, &u, &du), 2.0, epsilon = 1e-12);
        let du = [1.0, 0.5, 0.0];
        assert!(max_step(&c, &u, &du).is_infinite());
        let du = [-1.0, 0.0, 0.0];
        assert_relative_eq!(max_step(&c, &u, &du), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn nt_scaling_maps_z_to_winv_s() {
        let c = Cone::SecondOrder(4);
        let s = [3.0, 1.0, -0.5, 0.7];
        let z = [2.0, -0.3, 0.4, 1.1];
        let mut sc = BlockScaling::identity(&c);
        assert!(sc.update(&s, &z));
        let mut wz = [0.0; 4];
        let mut winv_s = [0.0; 4];
        sc.apply(&z, &mut wz);
        sc.apply_inv(&s, &mut winv_s);
        for i in 0..4 {
            assert_relative_eq!(wz[i], winv_s[i], epsilon = 1e-12);
        }
        // W W⁻¹ = I
        let v = [0.3, -1.0, 2.0, 0.1];
        let mut t = [0.0; 4];
        let mut back = [0.0; 4];
        sc.apply(&v, &mut t);
        sc.apply_inv(&t, &mut back);
        for i in 0..4 {
            assert_relative_eq!(back[i], v[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn w_squared_matches_double_application() {
        let c = Cone::SecondOrder(3);
        let mut sc = BlockScaling::identity(&c);
        assert!(sc.update(&[2.0, 0.5, 0.1], &[1.5, -0.2, 0.9]));
        let mut entries = Vec::new();
        sc.w_squared_upper(3, &mut entries);
        let mut dense = [[0.0; 3]; 3];
        for (i, j, v) in entries {
            dense[i][j] = v;
            dense[j][i] = v;
        }
        let v = [0.4, -0.7, 1.3];
        let mut t = [0.0; 3];
        let mut ww = [0.0; 3];
        sc.apply(&v, &mut t);
        sc.apply(&t, &mut ww);
        for i in 0..3 {
            let d: f64 = (0..3).map(|j| dense[i][j] * v[j]).sum();
            assert_relative_eq!(d, ww[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn inverse_jordan_product() {
        let c = Cone::SecondOrder(3);
        let l = [2.0, 0.3, -0.4];
        let d = [1.0, 2.0, 3.0];
        let mut x = [0.0; 3];
        let mut back = [0.0; 3];
        inv_circ(&c, &l, &d, &mut x);
        circ(&c, &l, &x, &mut back);
        for i in 0..3 {
            assert_relative_eq!(back[i], d[i], epsilon = 1e-12);
        }
    }
}
