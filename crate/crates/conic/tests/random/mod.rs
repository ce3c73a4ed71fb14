//! Random cone programs with known structure, shared by the solver tests.
#![allow(dead_code)]

use conic::{Affine, Cone, ConicProgram};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box–Muller; keeps the test helpers free of extra dependencies
    let u1: f64 = rng.random_range(f64::EPSILON..1.0);
    let u2: f64 = rng.random_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn random_cones(rng: &mut ChaCha8Rng, n: usize) -> Vec<Cone> {
    let mut cones = Vec::new();
    let zero = rng.random_range(0..=n / 2);
    if zero > 0 {
        cones.push(Cone::Zero(zero));
    }
    for _ in 0..rng.random_range(1..=2) {
        cones.push(Cone::Nonnegative(rng.random_range(1..=4)));
    }
    for _ in 0..rng.random_range(1..=3) {
        cones.push(Cone::SecondOrder(rng.random_range(2..=6)));
    }
    cones
}

/// A point strictly inside the cone (or zero for the zero cone).
fn interior(rng: &mut ChaCha8Rng, cone: &Cone, dual: bool) -> Vec<f64> {
    match *cone {
        Cone::Zero(d) => {
            if dual {
                (0..d).map(|_| normal(rng)).collect()
            } else {
                vec![0.0; d]
            }
        }
        Cone::Nonnegative(d) => (0..d).map(|_| rng.random_range(0.1..2.0)).collect(),
        Cone::SecondOrder(d) => {
            let tail: Vec<f64> = (0..d - 1).map(|_| normal(rng)).collect();
            let nrm = tail.iter().map(|v| v * v).sum::<f64>().sqrt();
            let mut v = vec![nrm + rng.random_range(0.1..2.0)];
            v.extend(tail);
            v
        }
    }
}

fn assemble(n: usize, a: &[Vec<f64>], b: Vec<f64>, c: Vec<f64>, cones: Vec<Cone>) -> ConicProgram {
    let mut trip = Vec::new();
    for (i, row) in a.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if v != 0.0 {
                trip.push((i, j, v));
            }
        }
    }
    ConicProgram::from_parts(n, c, trip, b, cones)
}

/// Primal and dual strictly feasible: `b = A x₀ + s₀` with `s₀ ∈ int K`,
/// `c = −Aᵀ y₀` with `y₀ ∈ int K*`.
pub fn feasible_socp(rng: &mut ChaCha8Rng) -> ConicProgram {
    let n = rng.random_range(3..=10);
    let cones = random_cones(rng, n);
    let m: usize = cones.iter().map(|k| k.dim()).sum();
    let a: Vec<Vec<f64>> = (0..m).map(|_| (0..n).map(|_| normal(rng)).collect()).collect();
    let x0: Vec<f64> = (0..n).map(|_| normal(rng)).collect();
    let s0: Vec<f64> = cones.iter().flat_map(|k| interior(rng, k, false)).collect();
    let y0: Vec<f64> = cones.iter().flat_map(|k| interior(rng, k, true)).collect();
    let b: Vec<f64> = (0..m)
        .map(|i| a[i].iter().zip(&x0).map(|(u, v)| u * v).sum::<f64>() + s0[i])
        .collect();
    let c: Vec<f64> = (0..n)
        .map(|j| -(0..m).map(|i| a[i][j] * y0[i]).sum::<f64>())
        .collect();
    assemble(n, &a, b, c, cones)
}

/// Primal infeasible by construction: `y₀ ∈ K*` with `Aᵀy₀ = 0` and
/// `bᵀy₀ = −1`.
pub fn infeasible_socp(rng: &mut ChaCha8Rng) -> ConicProgram {
    let n = rng.random_range(3..=10);
    let cones = random_cones(rng, n);
    let m: usize = cones.iter().map(|k| k.dim()).sum();
    let y0: Vec<f64> = cones.iter().flat_map(|k| interior(rng, k, true)).collect();
    let yy: f64 = y0.iter().map(|v| v * v).sum();
    let mut a: Vec<Vec<f64>> = (0..m).map(|_| (0..n).map(|_| normal(rng)).collect()).collect();
    for j in 0..n {
        let proj = (0..m).map(|i| a[i][j] * y0[i]).sum::<f64>() / yy;
        for i in 0..m {
            a[i][j] -= proj * y0[i];
        }
    }
    let mut b: Vec<f64> = (0..m).map(|_| normal(rng)).collect();
    let shift = (b.iter().zip(&y0).map(|(u, v)| u * v).sum::<f64>() + 1.0) / yy;
    for i in 0..m {
        b[i] -= shift * y0[i];
    }
    // keep the dual strictly feasible so infeasibility is one-sided
    let y1: Vec<f64> = cones.iter().flat_map(|k| interior(rng, k, true)).collect();
    let c: Vec<f64> = (0..n)
        .map(|j| -(0..m).map(|i| a[i][j] * y1[i]).sum::<f64>())
        .collect();
    assemble(n, &a, b, c, cones)
}

/// `minimize bᵀy s.t. Aᵀy + c = 0, y ∈ K*`, written in standard form.
pub fn dual_of(p: &ConicProgram) -> ConicProgram {
    let m = p.num_rows();
    let mut d = ConicProgram::new();
    let y = d.add_vars(m);
    for (i, &bi) in p.rhs().iter().enumerate() {
        d.set_cost(y.at(i), bi);
    }
    let mut rows: Vec<Affine> = p.objective().iter().map(|&cj| Affine::constant(cj)).collect();
    for &(i, j, v) in p.triplets() {
        rows[j].push_term(y.at(i), v);
    }
    d.add_cone(Cone::Zero(0), &rows);
    for (k, off) in p.cones().iter().zip(p.cone_offsets()) {
        let block: Vec<Affine> = (off..off + k.dim()).map(|i| Affine::var(y.at(i))).collect();
        match k {
            Cone::Zero(_) => {}
            Cone::Nonnegative(_) => d.add_cone(Cone::Nonnegative(0), &block),
            Cone::SecondOrder(_) => d.add_cone(Cone::SecondOrder(0), &block),
        }
    }
    d
}
