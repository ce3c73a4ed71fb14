//! The convex subproblem solved at every SPCA iteration.
//!
//! Complex beamformers are embedded as reals: `g_{mn}` occupies `2·Nt`
//! columns, real parts first. With `h = a + ib` and `g = x + iy`,
//! `Re(h g) = aᵀx − bᵀy` and `Im(h g) = bᵀx + aᵀy`, both linear.
//!
//! Per link `t` with iterate `(θ, r_i)` the program contains
//!
//! * power: `‖vec(G_m)‖ ≤ √P_m` per cell,
//! * rate: `θζ²/2 ≤ Re(h g) − v/(2θ)` as a hyperbolic cone, i.e. the convex
//!   upper estimate `G(ζ, v, θ) = (v/θ + θζ²)/2` of `√v·ζ` kept below the
//!   received amplitude,
//! * phase: `Im(h g) = 0`,
//! * linearization: `v ≥ q·r_i^{q−1}(r − r_i) + r_i^q − 1`, the tangent of the
//!   concave `r^q − 1`,
//! * interference: `‖(1, h_{km'n} g_{m'n} for m' ≠ m)‖ ≤ ζ`,
//! * bounds `r ≥ 0`, `v ≥ ε`, `ψ ≥ 0`,
//!
//! and maximizes the root of a geometric-mean tree over the `r(t)`.

use std::fmt;
use std::str::FromStr;

use conic::{
    add_hyperbolic, gm_tree, Affine, ConicProgram, GmTree, MapError, TransformError, VarRange,
    VariableMap,
};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::network::{Assignment, ChannelSet, NetworkConfig};
use crate::rates::{check_shapes, BeamformerSet, LinkIndex, RateError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StateError {
    #[error("link {t}: {what} = {value} violates its bound")]
    Bound {
        t: usize,
        what: &'static str,
        value: f64,
    },
    #[error("state holds {found} links, expected {expected}")]
    Length { expected: usize, found: usize },
    #[error("weight {value} of link {t} is not positive")]
    Weight { t: usize, value: f64 },
    #[error("weight margin {0} must be positive")]
    Margin(f64),
}

#[derive(Debug, thiserror::Error)]
pub enum BuildError {
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    Shape(#[from] RateError),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Transform(#[from] TransformError),
}

/// How the objective is read. Both build the same program; the geometric
/// mean `(∏ r)^{1/T}` and the tree root `(∏ r · 1^pad)^{1/2^p}` are
/// monotone in each other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "gm")]
    Gm,
    #[default]
    #[serde(rename = "tree")]
    ProductTree,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Gm => "gm",
            Method::ProductTree => "tree",
        })
    }
}

impl FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gm" => Ok(Method::Gm),
            "tree" | "product-tree" => Ok(Method::ProductTree),
            other => Err(format!("unknown method `{other}` (expected gm or tree)")),
        }
    }
}

/// Per-link scaled weights `δ(t) = s·w(t)` with `min δ > 1`, and `q = 1/δ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub delta: Vec<f64>,
    pub q: Vec<f64>,
    /// common factor `s`
    pub scale: f64,
}

/// `s = (1 + margin) / min w`, so the smallest scaled weight is `1 + margin`.
pub fn scale_weights(w: &[f64], margin: f64) -> Result<WeightVector, StateError> {
    if !(margin > 0.0 && margin.is_finite()) {
        return Err(StateError::Margin(margin));
    }
    if let Some((t, &value)) = w.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
        return Err(StateError::Weight { t, value });
    }
    let min = w.iter().copied().fold(f64::INFINITY, f64::min);
    let scale = (1.0 + margin) / min;
    let delta: Vec<f64> = w.iter().map(|v| v * scale).collect();
    let q = delta.iter().map(|d| 1.0 / d).collect();
    Ok(WeightVector { delta, q, scale })
}

/// `w(t)`: the weight of the user served on each link, flat order.
pub fn link_weights(config: &NetworkConfig, assignment: &Assignment) -> Vec<f64> {
    LinkIndex::all(config.cells, config.subcarriers)
        .map(|l| config.weights[l.user(assignment)][l.m])
        .collect()
}

/// SPCA iterate, one entry per link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpcaState {
    pub theta: Vec<f64>,
    pub r: Vec<f64>,
    pub zeta: Vec<f64>,
    pub v: Vec<f64>,
    pub iteration: usize,
    pub epsilon: f64,
}

impl SpcaState {
    pub fn links(&self) -> usize {
        self.theta.len()
    }

    /// `θ > 0`, `r > 0`, `ζ > 0` and `v ≥ ε`, all finite.
    pub fn validate(&self, links: usize) -> Result<(), StateError> {
        for len in [self.theta.len(), self.r.len(), self.zeta.len(), self.v.len()] {
            if len != links {
                return Err(StateError::Length {
                    expected: links,
                    found: len,
                });
            }
        }
        let positive = |what, vals: &[f64]| {
            for (t, &value) in vals.iter().enumerate() {
                if !(value.is_finite() && value > 0.0) {
                    return Err(StateError::Bound { t, what, value });
                }
            }
            Ok(())
        };
        positive("theta", &self.theta)?;
        positive("r", &self.r)?;
        positive("zeta", &self.zeta)?;
        for (t, &value) in self.v.iter().enumerate() {
            if !(value.is_finite() && value >= self.epsilon) {
                return Err(StateError::Bound { t, what: "v", value });
            }
        }
        Ok(())
    }
}

/// `G(ζ, v, θ) = (v/θ + θζ²)/2`, an upper estimate of `√v·ζ` for `θ > 0`.
pub fn upper_estimate(zeta: f64, v: f64, theta: f64) -> f64 {
    0.5 * (v / theta + theta * zeta * zeta)
}

/// `G(ζ, v, θ) − √v·ζ ≥ 0`, zero iff `θ = √v/ζ`.
pub fn estimator_gap(zeta: f64, v: f64, theta: f64) -> f64 {
    // (√(v/θ) − √θ·ζ)²/2, without the cancellation of the direct form
    let d = (v / theta).sqrt() - theta.sqrt() * zeta;
    0.5 * d * d
}

/// Column handles of the subproblem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Handle {
    /// `2·Nt` reals of `g_{mn}`: real parts, then imaginary parts
    Beam { m: usize, n: usize },
    Rate(usize),
    Zeta(usize),
    V(usize),
    /// internal geometric-mean tree node in heap order; `Psi(0)` is the root
    Psi(usize),
    /// tree leaf pinned to 1
    Pad(usize),
}

/// A built subproblem and what is needed to read its solution.
#[derive(Debug, Clone)]
pub struct Subproblem {
    pub program: ConicProgram,
    pub map: VariableMap<Handle>,
    pub tree: GmTree,
    pub method: Method,
    /// links whose direct channel is exactly zero; their `r`, `ζ`, `v` are
    /// pinned and their rate and interference cones dropped
    pub degenerate: Vec<bool>,
    cells: usize,
    subcarriers: usize,
    antennas: usize,
}

/// Extracted optimum.
#[derive(Debug, Clone, PartialEq)]
pub struct Extracted {
    pub beams: BeamformerSet,
    pub r: Vec<f64>,
    pub zeta: Vec<f64>,
    pub v: Vec<f64>,
    /// tree root `ψ⁰`
    pub psi: f64,
}

/// `(Re(h g), Im(h g))` as affine functions of the beam columns at `base`.
fn hg_affine(h: &[Complex64], base: usize) -> (Affine, Affine) {
    let nt = h.len();
    let mut re = Affine::constant(0.0);
    let mut im = Affine::constant(0.0);
    for (a, c) in h.iter().enumerate() {
        let (x, y) = (base + a, base + nt + a);
        re.push_term(x, c.re);
        re.push_term(y, -c.im);
        im.push_term(x, c.im);
        im.push_term(y, c.re);
    }
    (re, im)
}

fn is_zero(h: &[Complex64]) -> bool {
    h.iter().all(|c| c.re == 0.0 && c.im == 0.0)
}

pub fn build_subproblem(
    channels: &ChannelSet,
    assignment: &Assignment,
    weights: &WeightVector,
    state: &SpcaState,
    config: &NetworkConfig,
    method: Method,
) -> Result<Subproblem, BuildError> {
    let (cells, subs, nt) = (config.cells, config.subcarriers, config.antennas);
    let links = cells * subs;
    check_shapes(channels, &BeamformerSet::zeros(cells, subs, nt), assignment)?;
    if channels.antennas != nt || config.p_max.len() != cells {
        return Err(RateError::Shape {
            what: "config",
            expected: format!("{cells} cells, {nt} antennas"),
            found: format!("{} budgets, {} antennas", config.p_max.len(), channels.antennas),
        }
        .into());
    }
    state.validate(links)?;
    if weights.q.len() != links {
        return Err(StateError::Length {
            expected: links,
            found: weights.q.len(),
        }
        .into());
    }

    let mut prog = ConicProgram::new();
    let mut map = VariableMap::new();
    let beams = prog.add_vars(links * 2 * nt);
    for link in LinkIndex::all(cells, subs) {
        let start = beams.start + link.t * 2 * nt;
        map.insert(
            Handle::Beam {
                m: link.m,
                n: link.n,
            },
            VarRange {
                start,
                end: start + 2 * nt,
            },
        )?;
    }
    let r = prog.add_vars(links);
    let zeta = prog.add_vars(links);
    let v = prog.add_vars(links);
    for t in 0..links {
        map.insert(Handle::Rate(t), single(r.at(t)))?;
        map.insert(Handle::Zeta(t), single(zeta.at(t)))?;
        map.insert(Handle::V(t), single(v.at(t)))?;
    }
    let leaves: Vec<usize> = r.as_range().collect();
    let tree = gm_tree(&mut prog, &leaves)?;
    for (i, &col) in tree.padding.iter().enumerate() {
        map.insert(Handle::Pad(i), single(col))?;
    }
    for (i, &col) in tree.nodes.iter().enumerate() {
        map.insert(Handle::Psi(i), single(col))?;
    }
    map.check_coverage(prog.num_vars())?;
    prog.set_cost(tree.root, -1.0);

    let beam_base = |m: usize, n: usize| beams.start + (m * subs + n) * 2 * nt;

    // power
    for m in 0..cells {
        let rest = (0..subs)
            .flat_map(|n| (0..2 * nt).map(move |j| (n, j)))
            .map(|(n, j)| Affine::var(beam_base(m, n) + j))
            .collect();
        prog.add_soc(Affine::constant(config.p_max[m].sqrt()), rest);
    }

    let mut degenerate = vec![false; links];
    for link in LinkIndex::all(cells, subs) {
        let t = link.t;
        let (rc, zc, vc) = (r.at(t), zeta.at(t), v.at(t));
        let h = channels.toward(assignment, link.m, link.m, link.n);
        if is_zero(h) {
            degenerate[t] = true;
            prog.add_equality(Affine::var(rc).offset(-1.0));
            prog.add_equality(Affine::var(zc).offset(-1.0));
            prog.add_equality(Affine::var(vc).offset(-state.epsilon));
            continue;
        }
        let (re, im) = hg_affine(h, beam_base(link.m, link.n));

        // phase
        prog.add_equality(im);

        // rate: (ζ√(θ/2))² ≤ u·1 with u = Re(h g) − v/(2θ)
        let theta = state.theta[t];
        let u = re.add_term(vc, -1.0 / (2.0 * theta));
        add_hyperbolic(
            &mut prog,
            &[Affine::term(zc, (theta / 2.0).sqrt())],
            &u,
            &Affine::constant(1.0),
        )?;

        // linearization of r^q − 1 at r_i
        let (q, ri) = (weights.q[t], state.r[t]);
        let slope = q * ri.powf(q - 1.0);
        let lin = Affine::term(vc, 1.0)
            .add_term(rc, -slope)
            .offset(slope * ri - ri.powf(q) + 1.0);
        prog.add_nonnegative(lin);

        // interference
        let mut rest = vec![Affine::constant(1.0)];
        for bs in (0..cells).filter(|&bs| bs != link.m) {
            let hx = channels.toward(assignment, link.m, bs, link.n);
            let (xr, xi) = hg_affine(hx, beam_base(bs, link.n));
            rest.push(xr);
            rest.push(xi);
        }
        prog.add_soc(Affine::var(zc), rest);

        prog.add_nonnegative(Affine::var(rc));
        prog.add_nonnegative(Affine::var(vc).offset(-state.epsilon));
    }
    for &node in &tree.nodes {
        prog.add_nonnegative(Affine::var(node));
    }

    Ok(Subproblem {
        program: prog,
        map,
        tree,
        method,
        degenerate,
        cells,
        subcarriers: subs,
        antennas: nt,
    })
}

fn single(col: usize) -> VarRange {
    VarRange {
        start: col,
        end: col + 1,
    }
}

impl Subproblem {
    pub fn links(&self) -> usize {
        self.cells * self.subcarriers
    }

    /// Objective as the selected method reads it: the tree root `ψ⁰`, or
    /// for `gm` the geometric mean `(∏ r)^{1/T} = ψ⁰^{2^p/T}`.
    pub fn reported_objective(&self, psi: f64) -> f64 {
        match self.method {
            Method::ProductTree => psi,
            Method::Gm => {
                let width = (1u64 << self.tree.depth) as f64;
                psi.max(0.0).powf(width / self.links() as f64)
            }
        }
    }

    /// Writes the values of beams and link variables into a solution-shaped
    /// vector, e.g. to evaluate constraints at a known point.
    pub fn embed(
        &self,
        beams: &BeamformerSet,
        r: &[f64],
        zeta: &[f64],
        v: &[f64],
    ) -> Result<Vec<f64>, MapError> {
        let mut x = vec![0.0; self.program.num_vars()];
        let nt = self.antennas;
        for link in LinkIndex::all(self.cells, self.subcarriers) {
            let cols = self.map.get(&Handle::Beam {
                m: link.m,
                n: link.n,
            })?;
            for (a, c) in beams.get(link.m, link.n).iter().enumerate() {
                x[cols.at(a)] = c.re;
                x[cols.at(nt + a)] = c.im;
            }
            x[self.map.col(&Handle::Rate(link.t))?] = r[link.t];
            x[self.map.col(&Handle::Zeta(link.t))?] = zeta[link.t];
            x[self.map.col(&Handle::V(link.t))?] = v[link.t];
        }
        // pads at 1, tree nodes at the largest value their children allow
        for &p in &self.tree.padding {
            x[p] = 1.0;
        }
        let width = self.tree.nodes.len() + 1;
        let leaf_col = |i: usize| -> usize {
            let links = self.links();
            if i < links {
                self.map.col(&Handle::Rate(i)).expect("rate handle")
            } else {
                self.tree.padding[i - links]
            }
        };
        if !self.tree.nodes.is_empty() {
            for k in (0..width - 1).rev() {
                let child = |c: usize| {
                    if c >= width - 1 {
                        x[leaf_col(c - (width - 1))]
                    } else {
                        x[self.tree.nodes[c]]
                    }
                };
                let (a, b) = (child(2 * k + 1), child(2 * k + 2));
                x[self.tree.nodes[k]] = (a.max(0.0) * b.max(0.0)).sqrt();
            }
        }
        Ok(x)
    }
}

/// Reads beams and per-link `(r, ζ, v)` out of a solution vector.
pub fn extract_solution(x: &[f64], sub: &Subproblem) -> Result<Extracted, MapError> {
    let nt = sub.antennas;
    let mut beams = BeamformerSet::zeros(sub.cells, sub.subcarriers, nt);
    let links = sub.links();
    let (mut r, mut zeta, mut v) = (vec![0.0; links], vec![0.0; links], vec![0.0; links]);
    for link in LinkIndex::all(sub.cells, sub.subcarriers) {
        let cols = sub.map.get(&Handle::Beam {
            m: link.m,
            n: link.n,
        })?;
        for (a, c) in beams.get_mut(link.m, link.n).iter_mut().enumerate() {
            *c = Complex64::new(x[cols.at(a)], x[cols.at(nt + a)]);
        }
        r[link.t] = x[sub.map.col(&Handle::Rate(link.t))?];
        zeta[link.t] = x[sub.map.col(&Handle::Zeta(link.t))?];
        v[link.t] = x[sub.map.col(&Handle::V(link.t))?];
    }
    Ok(Extracted {
        beams,
        r,
        zeta,
        v,
        psi: x[sub.tree.root],
    })
}
