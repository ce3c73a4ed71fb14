//! Primal-dual interior-point method on the homogeneous self-dual embedding.
//!
//! Each iteration scales the cone pair `(s, z)` with Nesterov–Todd scaling
//! `W`, factors the quasi-definite system
//!
//! ```text
//! [ εI   Aᵀ        ]
//! [ A   −(W² + εI) ]
//! ```
//!
//! and takes a Mehrotra predictor-corrector step. The `(τ, κ)` pair of the
//! embedding makes infeasibility show up as `τ → 0`, at which point the
//! iterate itself is a Farkas certificate.

use std::collections::BTreeMap;
use std::fmt;

use crate::cones::{self, BlockScaling};
use crate::ldl::LdlFactor;
use crate::program::{Cone, ConicProgram};
use crate::sparse::{dot, norm2, Csc};
use crate::validate::{validate, Diagnostics};

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSettings {
    pub max_iterations: usize,
    /// relative primal/dual residual tolerance
    pub tol_feasibility: f64,
    /// relative duality-gap tolerance
    pub tol_gap: f64,
    /// tolerance on normalised Farkas certificates
    pub tol_infeasibility: f64,
    /// static regularization added to both diagonal blocks of the KKT matrix
    pub static_regularization: f64,
    pub refinement_rounds: usize,
    pub equilibrate: bool,
    pub max_step_fraction: f64,
    /// when the iteration stalls, tolerances are relaxed by this factor and
    /// the last iterate is reported with an `Almost*` status if it passes
    pub reduced_accuracy_factor: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            max_iterations: 100,
            tol_feasibility: 1e-8,
            tol_gap: 1e-8,
            tol_infeasibility: 1e-8,
            static_regularization: 1e-8,
            refinement_rounds: 3,
            equilibrate: true,
            max_step_fraction: 0.99,
            reduced_accuracy_factor: 1e3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Status {
    Optimal,
    PrimalInfeasible,
    DualInfeasible,
    /// the iteration stalled at a point meeting the relaxed tolerances
    AlmostOptimal,
    AlmostPrimalInfeasible,
    AlmostDualInfeasible,
    MaxIterations,
    NumericalFailure,
}

impl Status {
    /// Full-accuracy status for an `Almost*` one; other statuses unchanged.
    pub fn full_accuracy(self) -> Status {
        match self {
            Status::AlmostOptimal => Status::Optimal,
            Status::AlmostPrimalInfeasible => Status::PrimalInfeasible,
            Status::AlmostDualInfeasible => Status::DualInfeasible,
            other => other,
        }
    }

    fn reduced_accuracy(self) -> Status {
        match self {
            Status::Optimal => Status::AlmostOptimal,
            Status::PrimalInfeasible => Status::AlmostPrimalInfeasible,
            Status::DualInfeasible => Status::AlmostDualInfeasible,
            other => other,
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Status::Optimal => "optimal",
            Status::PrimalInfeasible => "primal-infeasible",
            Status::DualInfeasible => "dual-infeasible",
            Status::AlmostOptimal => "almost-optimal",
            Status::AlmostPrimalInfeasible => "almost-primal-infeasible",
            Status::AlmostDualInfeasible => "almost-dual-infeasible",
            Status::MaxIterations => "max-iterations",
            Status::NumericalFailure => "numerical-failure",
        };
        f.write_str(s)
    }
}

/// Solver output.
///
/// For `Optimal` (and `MaxIterations`/`NumericalFailure`) `x`, `s`, `y` are
/// the last primal-dual iterate. For `PrimalInfeasible`, `y` is a
/// certificate with `Aᵀy ≈ 0`, `bᵀy = −1`, `y ∈ K*`. For `DualInfeasible`,
/// `(x, s)` satisfies `Ax + s ≈ 0`, `cᵀx = −1`, `s ∈ K`. The `Almost*`
/// variants carry the same data at reduced accuracy.
#[derive(Debug, Clone)]
pub struct Solution {
    pub status: Status,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub s: Vec<f64>,
    pub iterations: usize,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
    pub diagnostics: Option<String>,
}

impl Solution {
    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }

    /// Largest of the three relative convergence measures.
    pub fn worst_residual(&self) -> f64 {
        self.primal_residual.max(self.dual_residual).max(self.gap)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SolverError {
    #[error("program failed validation: {0}")]
    InvalidProgram(Diagnostics),
    #[error("no solver registered under `{0}`")]
    UnknownSolver(String),
}

/// Anything that maps a cone program to a solution.
pub trait ConicSolver: Send + Sync {
    fn name(&self) -> &str;
    fn solve(
        &self,
        prog: &ConicProgram,
        settings: &SolverSettings,
    ) -> Result<Solution, SolverError>;
}

/// The built-in interior-point method.
#[derive(Debug, Clone, Copy, Default)]
pub struct InteriorPoint;

impl ConicSolver for InteriorPoint {
    fn name(&self) -> &str {
        "ipm"
    }

    fn solve(
        &self,
        prog: &ConicProgram,
        settings: &SolverSettings,
    ) -> Result<Solution, SolverError> {
        solve(prog, settings)
    }
}

/// Name → solver lookup; the built-in IPM is registered as `"ipm"`.
pub struct SolverRegistry {
    solvers: BTreeMap<String, Box<dyn ConicSolver>>,
}

impl Default for SolverRegistry {
    fn default() -> Self {
        let mut r = SolverRegistry {
            solvers: BTreeMap::new(),
        };
        r.register(Box::new(InteriorPoint));
        r
    }
}

impl SolverRegistry {
    pub fn register(&mut self, solver: Box<dyn ConicSolver>) {
        self.solvers.insert(solver.name().to_string(), solver);
    }

    pub fn get(&self, name: &str) -> Result<&dyn ConicSolver, SolverError> {
        self.solvers
            .get(name)
            .map(|b| b.as_ref())
            .ok_or_else(|| SolverError::UnknownSolver(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.solvers.keys().map(|s| s.as_str())
    }
}

/// Solves `prog` with the built-in interior-point method.
pub fn solve(prog: &ConicProgram, settings: &SolverSettings) -> Result<Solution, SolverError> {
    let diag = validate(prog);
    if !diag.is_ok() {
        return Err(SolverError::InvalidProgram(diag));
    }
    Ok(Ipm::new(prog, settings).run())
}

/// Diagonal scaling `Ā = E A D`, `c̄ = σ D c`, `b̄ = E b`, with `E` constant
/// on each second-order cone so cone membership is preserved.
struct Equilibration {
    d: Vec<f64>,
    e: Vec<f64>,
    cost: f64,
}

fn equilibrate_data(
    a: &mut Csc,
    b: &mut [f64],
    c: &mut [f64],
    cones: &[Cone],
    enabled: bool,
) -> Equilibration {
    let (m, n) = (a.rows, a.cols);
    let mut d = vec![1.0; n];
    let mut e = vec![1.0; m];
    if !enabled {
        return Equilibration { d, e, cost: 1.0 };
    }
    const BOUND: (f64, f64) = (1e-4, 1e4);
    let orig = a.vals.clone();
    for _ in 0..15 {
        let mut col_max = vec![0.0f64; n];
        let mut row_max = vec![0.0f64; m];
        for (r, col, v) in a.iter() {
            col_max[col] = col_max[col].max(v.abs());
            row_max[r] = row_max[r].max(v.abs());
        }
        // one factor per second-order cone
        let mut off = 0;
        for cone in cones {
            if let Cone::SecondOrder(dim) = cone {
                let mx = row_max[off..off + dim].iter().copied().fold(0.0, f64::max);
                row_max[off..off + dim].iter_mut().for_each(|v| *v = mx);
            }
            off += cone.dim();
        }
        let mut moved = false;
        for (j, &v) in col_max.iter().enumerate() {
            if v > 0.0 {
                let nd = (d[j] / v.sqrt()).clamp(BOUND.0, BOUND.1);
                moved |= (nd / d[j] - 1.0).abs() > 1e-3;
                d[j] = nd;
            }
        }
        for (i, &v) in row_max.iter().enumerate() {
            if v > 0.0 {
                let ne = (e[i] / v.sqrt()).clamp(BOUND.0, BOUND.1);
                moved |= (ne / e[i] - 1.0).abs() > 1e-3;
                e[i] = ne;
            }
        }
        for col in 0..n {
            for p in a.col_ptr[col]..a.col_ptr[col + 1] {
                a.vals[p] = orig[p] * e[a.row_idx[p]] * d[col];
            }
        }
        if !moved {
            break;
        }
    }
    for (r, bv) in b.iter_mut().enumerate() {
        *bv *= e[r];
    }
    for (j, cv) in c.iter_mut().enumerate() {
        *cv *= d[j];
    }
    let cmax = c.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let cost = if cmax > 0.0 {
        (1.0 / cmax).clamp(1e-4, 1e4)
    } else {
        1.0
    };
    c.iter_mut().for_each(|v| *v *= cost);
    Equilibration { d, e, cost }
}

struct Ipm<'a> {
    prog: &'a ConicProgram,
    settings: &'a SolverSettings,
    a_orig: Csc,
    a: Csc,
    b: Vec<f64>,
    c: Vec<f64>,
    eq: Equilibration,
    cones: Vec<Cone>,
    offsets: Vec<usize>,
    degree: usize,
    n: usize,
    m: usize,
}

struct Direction {
    x: Vec<f64>,
    z: Vec<f64>,
    s: Vec<f64>,
    tau: f64,
    kappa: f64,
}

impl Direction {
    fn is_finite(&self) -> bool {
        self.tau.is_finite()
            && self.kappa.is_finite()
            && self.x.iter().chain(&self.z).chain(&self.s).all(|v| v.is_finite())
    }
}

struct Kkt {
    factor: LdlFactor,
    /// values of the upper-triangular entries, in the order given to
    /// `LdlFactor::analyze`
    values: Vec<f64>,
    /// index in `entries` where the cone blocks begin
    cone_start: usize,
}

impl<'a> Ipm<'a> {
    fn new(prog: &'a ConicProgram, settings: &'a SolverSettings) -> Self {
        let n = prog.num_vars();
        let m = prog.num_rows();
        let a_orig = Csc::from_triplets(m, n, prog.triplets());
        let mut a = a_orig.clone();
        let mut b = prog.rhs().to_vec();
        let mut c = prog.objective().to_vec();
        let cones = prog.cones().to_vec();
        let eq = equilibrate_data(&mut a, &mut b, &mut c, &cones, settings.equilibrate);
        let offsets = prog.cone_offsets();
        let degree = cones.iter().map(|k| k.degree()).sum();
        Ipm {
            prog,
            settings,
            a_orig,
            a,
            b,
            c,
            eq,
            cones,
            offsets,
            degree,
            n,
            m,
        }
    }

    fn build_kkt(&self) -> Kkt {
        let (n, m) = (self.n, self.m);
        let mut entries = Vec::with_capacity(n + self.a.vals.len() + m);
        for j in 0..n {
            entries.push((j, j));
        }
        for (r, col, _) in self.a.iter() {
            entries.push((col, n + r));
        }
        let cone_start = entries.len();
        let mut tmp = Vec::new();
        for (k, cone) in self.cones.iter().enumerate() {
            tmp.clear();
            BlockScaling::identity(cone).w_squared_upper(cone.dim(), &mut tmp);
            let off = n + self.offsets[k];
            for &(i, j, _) in &tmp {
                entries.push((off + i, off + j));
            }
        }
        let mut signs = vec![1.0; n + m];
        signs[n..].iter_mut().for_each(|s| *s = -1.0);
        // Equality rows carry only the tiny static regularisation on the
        // diagonal. Eliminating them before the columns they touch leaves
        // huge, nearly rank-deficient updates in the x block that cancel
        // catastrophically, so they are ordered last.
        let mut defer = vec![false; n + m];
        for (k, cone) in self.cones.iter().enumerate() {
            if let Cone::Zero(d) = cone {
                let off = n + self.offsets[k];
                defer[off..off + d].iter_mut().for_each(|f| *f = true);
            }
        }
        let factor = LdlFactor::analyze(n + m, &entries, &signs, &defer);
        let values = vec![0.0; entries.len()];
        Kkt {
            factor,
            values,
            cone_start,
        }
    }

    /// Fills KKT values for the given scalings and factors.
    fn factor_kkt(&self, kkt: &mut Kkt, scalings: &[BlockScaling]) -> bool {
        let eps = self.settings.static_regularization;
        let n = self.n;
        let mut k = 0;
        for _ in 0..n {
            kkt.values[k] = eps;
            k += 1;
        }
        for &v in &self.a.vals {
            kkt.values[k] = v;
            k += 1;
        }
        debug_assert_eq!(k, kkt.cone_start);
        let mut tmp = Vec::new();
        for (cone, sc) in self.cones.iter().zip(scalings) {
            tmp.clear();
            sc.w_squared_upper(cone.dim(), &mut tmp);
            for &(i, j, v) in &tmp {
                kkt.values[k] = if i == j { -v - eps } else { -v };
                k += 1;
            }
        }
        kkt.factor.factor(&kkt.values, 1e-13, 1e-7).is_ok()
    }

    /// `[y_x; y_z] = [Aᵀz; Ax − W²z]` (unregularized KKT operator).
    fn kkt_mul(&self, scalings: &[BlockScaling], v: &[f64], out: &mut [f64]) {
        let (n, m) = (self.n, self.m);
        out.iter_mut().for_each(|o| *o = 0.0);
        let (vx, vz) = v.split_at(n);
        let (ox, oz) = out.split_at_mut(n);
        self.a.gemv_t(1.0, vz, ox);
        self.a.gemv(1.0, vx, oz);
        let mut t = vec![0.0; m];
        let mut t2 = vec![0.0; m];
        for (k, cone) in self.cones.iter().enumerate() {
            let r = self.offsets[k]..self.offsets[k] + cone.dim();
            scalings[k].apply(&vz[r.clone()], &mut t[r.clone()]);
            scalings[k].apply(&t[r.clone()], &mut t2[r.clone()]);
        }
        for i in 0..m {
            oz[i] -= t2[i];
        }
    }

    fn kkt_solve(&self, kkt: &mut Kkt, scalings: &[BlockScaling], rhs: &[f64]) -> Vec<f64> {
        let mut sol = rhs.to_vec();
        kkt.factor.solve(&mut sol);
        let dim = rhs.len();
        let mut kx = vec![0.0; dim];
        let rhs_norm = rhs.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for _ in 0..self.settings.refinement_rounds.max(1) * 2 {
            self.kkt_mul(scalings, &sol, &mut kx);
            let mut res: Vec<f64> = rhs.iter().zip(&kx).map(|(r, k)| r - k).collect();
            let res_norm = res.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if res_norm <= 1e-13 * (1.0 + rhs_norm) {
                break;
            }
            kkt.factor.solve(&mut res);
            for i in 0..dim {
                sol[i] += res[i];
            }
        }
        sol
    }

    fn cone_slices<'v>(&self, k: usize, v: &'v [f64]) -> &'v [f64] {
        &v[self.offsets[k]..self.offsets[k] + self.cones[k].dim()]
    }

    fn run(&self) -> Solution {
        let (n, m) = (self.n, self.m);
        let set = self.settings;
        let mut kkt = self.build_kkt();
        let mut scalings: Vec<BlockScaling> =
            self.cones.iter().map(BlockScaling::identity).collect();

        // ---- initial point
        if !self.factor_kkt(&mut kkt, &scalings) {
            return self.failure("initial factorization failed");
        }
        let mut rhs = vec![0.0; n + m];
        rhs[n..].copy_from_slice(&self.b);
        let sol = self.kkt_solve(&mut kkt, &scalings, &rhs);
        let mut x = sol[..n].to_vec();
        let mut s = vec![0.0; m];
        for (k, cone) in self.cones.iter().enumerate() {
            let o = self.offsets[k];
            let d = cone.dim();
            if let Cone::Zero(_) = cone {
                continue;
            }
            for i in 0..d {
                s[o + i] = -sol[n + o + i];
            }
            cones::shift_to_interior(cone, &mut s[o..o + d]);
        }
        rhs.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..n {
            rhs[j] = -self.c[j];
        }
        let sol = self.kkt_solve(&mut kkt, &scalings, &rhs);
        let mut z = sol[n..].to_vec();
        for (k, cone) in self.cones.iter().enumerate() {
            let o = self.offsets[k];
            cones::shift_to_interior(cone, &mut z[o..o + cone.dim()]);
        }
        let mut tau = 1.0;
        let mut kappa = 1.0;

        let mut rx = vec![0.0; n];
        let mut rz = vec![0.0; m];
        let mut lambda = vec![0.0; m];
        let mut small_steps = 0;
        // best interior iterate so far, the fallback when the iteration stalls
        let mut best: Option<Snapshot> = None;

        for iter in 0..=set.max_iterations {
            // ---- residuals of the embedding (scaled data)
            rx.iter_mut().for_each(|v| *v = 0.0);
            self.a.gemv_t(1.0, &z, &mut rx);
            for j in 0..n {
                rx[j] += self.c[j] * tau;
            }
            rz.copy_from_slice(&s);
            self.a.gemv(1.0, &x, &mut rz);
            for i in 0..m {
                rz[i] -= self.b[i] * tau;
            }
            let rtau = dot(&self.c, &x) + dot(&self.b, &z) + kappa;

            // ---- termination on the original problem
            let report = self.assess(&x, &s, &z, tau, 1.0);
            if let Some(status) = report.status {
                return self.finish(status, &x, &s, &z, tau, iter, &report);
            }
            if iter == set.max_iterations {
                return self.finish(Status::MaxIterations, &x, &s, &z, tau, iter, &report);
            }

            let mu = (dot(&s, &z) + tau * kappa) / (self.degree as f64 + 1.0);

            // ---- scaling
            for (k, _) in self.cones.iter().enumerate() {
                let ok = scalings[k].update(self.cone_slices(k, &s), self.cone_slices(k, &z));
                if !ok {
                    // the current point is outside the cone, so only the
                    // last interior iterate is a candidate
                    return match &best {
                        Some(b) => self.stalled(&b.x, &b.s, &b.z, b.tau, iter, "iterate left cone", None),
                        None => self.stalled(&x, &s, &z, tau, iter, "iterate left cone", None),
                    };
                }
                let r = self.offsets[k]..self.offsets[k] + self.cones[k].dim();
                let (zs, ls) = (&z[r.clone()], &mut lambda[r.clone()]);
                scalings[k].apply(zs, ls);
            }
            let merit = report.merit();
            if best.as_ref().is_none_or(|b| merit < b.merit) {
                best = Some(Snapshot {
                    merit,
                    x: x.clone(),
                    s: s.clone(),
                    z: z.clone(),
                    tau,
                });
            }
            if !self.factor_kkt(&mut kkt, &scalings) {
                return self.stalled(&x, &s, &z, tau, iter, "factorization failed", best.as_ref());
            }

            // constant system K [x1; z1] = [−c; b]
            let mut rhs1 = vec![0.0; n + m];
            for j in 0..n {
                rhs1[j] = -self.c[j];
            }
            rhs1[n..].copy_from_slice(&self.b);
            let sol1 = self.kkt_solve(&mut kkt, &scalings, &rhs1);
            let (x1, z1) = sol1.split_at(n);
            let denom_base = dot(&self.c, x1) + dot(&self.b, z1);

            // ---- predictor
            let mut ds = vec![0.0; m];
            for (k, cone) in self.cones.iter().enumerate() {
                let r = self.offsets[k]..self.offsets[k] + cone.dim();
                cones::circ(cone, &lambda[r.clone()], &lambda[r.clone()], &mut ds[r.clone()]);
            }
            let aff = self.direction(
                &mut kkt,
                &scalings,
                &lambda,
                (x1, z1, denom_base),
                (&rx, &rz, rtau, &ds, tau * kappa),
                (tau, kappa),
            );
            let alpha_aff = self.step_length(&s, &z, tau, kappa, &aff).min(1.0);
            let sigma = (1.0 - alpha_aff).powi(3);

            // ---- corrector
            let mut ws = vec![0.0; m];
            let mut wz = vec![0.0; m];
            for (k, cone) in self.cones.iter().enumerate() {
                let r = self.offsets[k]..self.offsets[k] + cone.dim();
                scalings[k].apply_inv(&aff.s[r.clone()], &mut ws[r.clone()]);
                scalings[k].apply(&aff.z[r.clone()], &mut wz[r.clone()]);
                let mut prod = vec![0.0; cone.dim()];
                cones::circ(cone, &ws[r.clone()], &wz[r.clone()], &mut prod);
                for (i, p) in r.clone().zip(prod) {
                    ds[i] += p;
                }
                cones::add_identity(cone, &mut ds[r.clone()], -sigma * mu);
            }
            let dkappa = tau * kappa + aff.tau * aff.kappa - sigma * mu;
            let f = 1.0 - sigma;
            let rx_c: Vec<f64> = rx.iter().map(|v| v * f).collect();
            let rz_c: Vec<f64> = rz.iter().map(|v| v * f).collect();
            let dir = self.direction(
                &mut kkt,
                &scalings,
                &lambda,
                (x1, z1, denom_base),
                (&rx_c, &rz_c, rtau * f, &ds, dkappa),
                (tau, kappa),
            );
            let alpha = (set.max_step_fraction * self.step_length(&s, &z, tau, kappa, &dir)).min(1.0);
            if !alpha.is_finite() || alpha < 1e-10 || !dir.is_finite() {
                return self.stalled(&x, &s, &z, tau, iter, "no usable step", best.as_ref());
            }
            if alpha < 1e-8 {
                small_steps += 1;
                if small_steps > 5 {
                    return self.stalled(&x, &s, &z, tau, iter, "step length stalled", best.as_ref());
                }
            } else {
                small_steps = 0;
            }

            for j in 0..n {
                x[j] += alpha * dir.x[j];
            }
            for i in 0..m {
                s[i] += alpha * dir.s[i];
                z[i] += alpha * dir.z[i];
            }
            tau += alpha * dir.tau;
            kappa += alpha * dir.kappa;
            if !(tau > 0.0 && kappa > 0.0) || x.iter().chain(&s).chain(&z).any(|v| !v.is_finite()) {
                return self.failure("non-finite iterate");
            }
        }
        unreachable!("loop returns on the final iteration")
    }

    #[allow(clippy::type_complexity)]
    fn direction(
        &self,
        kkt: &mut Kkt,
        scalings: &[BlockScaling],
        lambda: &[f64],
        (x1, z1, denom_base): (&[f64], &[f64], f64),
        (dx, dz, dtau, ds, dkappa): (&[f64], &[f64], f64, &[f64], f64),
        (tau, kappa): (f64, f64),
    ) -> Direction {
        let (n, m) = (self.n, self.m);
        // w_ds = W (λ \ ds)
        let mut t = vec![0.0; m];
        let mut w_ds = vec![0.0; m];
        for (k, cone) in self.cones.iter().enumerate() {
            let r = self.offsets[k]..self.offsets[k] + cone.dim();
            cones::inv_circ(cone, &lambda[r.clone()], &ds[r.clone()], &mut t[r.clone()]);
            scalings[k].apply(&t[r.clone()], &mut w_ds[r.clone()]);
        }
        let mut rhs = vec![0.0; n + m];
        for j in 0..n {
            rhs[j] = -dx[j];
        }
        for i in 0..m {
            rhs[n + i] = -dz[i] + w_ds[i];
        }
        let sol2 = self.kkt_solve(kkt, scalings, &rhs);
        let (x2, z2) = sol2.split_at(n);
        let dtau_step = (-dtau + dkappa / tau - dot(&self.c, x2) - dot(&self.b, z2))
            / (denom_base - kappa / tau);
        let dxv: Vec<f64> = (0..n).map(|j| x2[j] + dtau_step * x1[j]).collect();
        let dzv: Vec<f64> = (0..m).map(|i| z2[i] + dtau_step * z1[i]).collect();
        let mut dsv = vec![0.0; m];
        for (k, cone) in self.cones.iter().enumerate() {
            if let Cone::Zero(_) = cone {
                continue;
            }
            let r = self.offsets[k]..self.offsets[k] + cone.dim();
            scalings[k].apply(&dzv[r.clone()], &mut t[r.clone()]);
            let mut w2 = vec![0.0; cone.dim()];
            scalings[k].apply(&t[r.clone()], &mut w2);
            for (i, v) in r.zip(w2) {
                dsv[i] = -w_ds[i] - v;
            }
        }
        let dkappa_step = -(dkappa + kappa * dtau_step) / tau;
        Direction {
            x: dxv,
            z: dzv,
            s: dsv,
            tau: dtau_step,
            kappa: dkappa_step,
        }
    }

    fn step_length(&self, s: &[f64], z: &[f64], tau: f64, kappa: f64, d: &Direction) -> f64 {
        let mut alpha = f64::INFINITY;
        if d.tau < 0.0 {
            alpha = alpha.min(-tau / d.tau);
        }
        if d.kappa < 0.0 {
            alpha = alpha.min(-kappa / d.kappa);
        }
        for (k, cone) in self.cones.iter().enumerate() {
            let r = self.offsets[k]..self.offsets[k] + cone.dim();
            alpha = alpha.min(cones::max_step(cone, &s[r.clone()], &d.s[r.clone()]));
            alpha = alpha.min(cones::max_step(cone, &z[r.clone()], &d.z[r.clone()]));
        }
        alpha
    }

    /// Maps a scaled iterate back to the original problem's variables.
    fn unscale(&self, x: &[f64], s: &[f64], z: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let xu = x.iter().zip(&self.eq.d).map(|(v, d)| v * d).collect();
        let su = s.iter().zip(&self.eq.e).map(|(v, e)| v / e).collect();
        let zu = z
            .iter()
            .zip(&self.eq.e)
            .map(|(v, e)| v * e / self.eq.cost)
            .collect();
        (xu, su, zu)
    }

    /// Checks termination; `relax` scales every tolerance.
    fn assess(&self, x: &[f64], s: &[f64], z: &[f64], tau: f64, relax: f64) -> Report {
        let set = self.settings;
        let (tol_feas, tol_gap, tol_inf) = (
            set.tol_feasibility * relax,
            set.tol_gap * relax,
            set.tol_infeasibility * relax,
        );
        let (xu, su, zu) = self.unscale(x, s, z);
        let b = self.prog.rhs();
        let c = self.prog.objective();

        // normalised iterate
        let xh: Vec<f64> = xu.iter().map(|v| v / tau).collect();
        let sh: Vec<f64> = su.iter().map(|v| v / tau).collect();
        let zh: Vec<f64> = zu.iter().map(|v| v / tau).collect();
        let mut pr = sh.clone();
        self.a_orig.gemv(1.0, &xh, &mut pr);
        for i in 0..pr.len() {
            pr[i] -= b[i];
        }
        let mut dr = c.to_vec();
        self.a_orig.gemv_t(1.0, &zh, &mut dr);
        let pres = norm2(&pr) / (1.0 + norm2(b));
        let dres = norm2(&dr) / (1.0 + norm2(c));
        let pcost = dot(c, &xh);
        let dcost = -dot(b, &zh);
        let gap = (pcost - dcost).abs() / (1.0 + pcost.abs().min(dcost.abs()));

        let mut status = None;
        if pres <= tol_feas && dres <= tol_feas && gap <= tol_gap {
            status = Some(Status::Optimal);
        } else {
            // Farkas certificates on the unnormalised iterate
            let btz = dot(b, &zu);
            if btz < 0.0 {
                let mut atz = vec![0.0; self.n];
                self.a_orig.gemv_t(1.0, &zu, &mut atz);
                if norm2(&atz) <= tol_inf * (-btz) {
                    status = Some(Status::PrimalInfeasible);
                }
            }
            let ctx = dot(c, &xu);
            if status.is_none() && ctx < 0.0 {
                let mut axs = su.clone();
                self.a_orig.gemv(1.0, &xu, &mut axs);
                if norm2(&axs) <= tol_inf * (-ctx) {
                    status = Some(Status::DualInfeasible);
                }
            }
        }
        Report {
            status,
            pres,
            dres,
            gap,
            pcost,
            dcost,
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn finish(
        &self,
        status: Status,
        x: &[f64],
        s: &[f64],
        z: &[f64],
        tau: f64,
        iter: usize,
        rep: &Report,
    ) -> Solution {
        let (xu, su, zu) = self.unscale(x, s, z);
        let b = self.prog.rhs();
        let c = self.prog.objective();
        let (x, s, y) = match status.full_accuracy() {
            Status::PrimalInfeasible => {
                let scale = -dot(b, &zu);
                (
                    vec![f64::NAN; self.n],
                    vec![f64::NAN; self.m],
                    zu.iter().map(|v| v / scale).collect(),
                )
            }
            Status::DualInfeasible => {
                let scale = -dot(c, &xu);
                (
                    xu.iter().map(|v| v / scale).collect(),
                    su.iter().map(|v| v / scale).collect(),
                    vec![f64::NAN; self.m],
                )
            }
            _ => (
                xu.iter().map(|v| v / tau).collect(),
                su.iter().map(|v| v / tau).collect(),
                zu.iter().map(|v| v / tau).collect(),
            ),
        };
        Solution {
            status,
            x,
            y,
            s,
            iterations: iter,
            primal_objective: rep.pcost,
            dual_objective: rep.dcost,
            primal_residual: rep.pres,
            dual_residual: rep.dres,
            gap: rep.gap,
            diagnostics: None,
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn stalled(
        &self,
        x: &[f64],
        s: &[f64],
        z: &[f64],
        tau: f64,
        iter: usize,
        why: &str,
        best: Option<&Snapshot>,
    ) -> Solution {
        let relax = self.settings.reduced_accuracy_factor;
        let mut rep = self.assess(x, s, z, tau, relax);
        let (mut x, mut s, mut z, mut tau) = (x, s, z, tau);
        // fall back to the best interior iterate unless the current one
        // already meets the relaxed tolerances
        if let Some(b) = best {
            let alt = self.assess(&b.x, &b.s, &b.z, b.tau, relax);
            if rep.status.is_none() && (alt.status.is_some() || alt.merit() < rep.merit()) {
                rep = alt;
                (x, s, z, tau) = (&b.x, &b.s, &b.z, b.tau);
            }
        }
        let status = rep
            .status
            .map_or(Status::NumericalFailure, Status::reduced_accuracy);
        let mut sol = self.finish(status, x, s, z, tau, iter, &rep);
        sol.diagnostics = Some(format!(
            "{why} at iteration {iter} (pres {:.2e}, dres {:.2e}, gap {:.2e}, tau {:.2e})",
            rep.pres, rep.dres, rep.gap, tau
        ));
        sol
    }

    fn failure(&self, why: &str) -> Solution {
        Solution {
            status: Status::NumericalFailure,
            x: vec![f64::NAN; self.n],
            y: vec![f64::NAN; self.m],
            s: vec![f64::NAN; self.m],
            iterations: 0,
            primal_objective: f64::NAN,
            dual_objective: f64::NAN,
            primal_residual: f64::INFINITY,
            dual_residual: f64::INFINITY,
            gap: f64::INFINITY,
            diagnostics: Some(why.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Report {
    status: Option<Status>,
    pres: f64,
    dres: f64,
    gap: f64,
    pcost: f64,
    dcost: f64,
}

impl Report {
    fn merit(&self) -> f64 {
        let m = self.pres.max(self.dres).max(self.gap);
        if m.is_nan() { f64::INFINITY } else { m }
    }
}

struct Snapshot {
    merit: f64,
    x: Vec<f64>,
    s: Vec<f64>,
    z: Vec<f64>,
    tau: f64,
}
