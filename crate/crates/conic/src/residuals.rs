//! Residuals recomputed from the program data alone, independent of the
//! solver's internal (scaled, homogenised) quantities.

use crate::cones;
use crate::program::ConicProgram;
use crate::solver::{Solution, Status};
use crate::sparse::{dot, norm2, Csc};

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    /// `‖Ax + s − b‖ / (1 + ‖b‖)`
    pub primal: f64,
    /// `‖Aᵀy + c‖ / (1 + ‖c‖)`
    pub dual: f64,
    /// `|cᵀx + bᵀy| / (1 + min(|cᵀx|, |bᵀy|))`
    pub gap: f64,
    /// `sᵀy / (1 + |cᵀx|)`
    pub complementarity: f64,
    /// largest violation of `s ∈ K`
    pub slack_cone: f64,
    /// largest violation of `y ∈ K*`
    pub dual_cone: f64,
    /// for infeasibility certificates: the certificate checks
    pub certificate: Option<CertificateCheck>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CertificateCheck {
    /// `y ∈ K*`, `Aᵀy = 0`, `bᵀy < 0`
    Primal {
        at_y: f64,
        bt_y: f64,
        cone_violation: f64,
    },
    /// `s ∈ K`, `Ax + s = 0`, `cᵀx < 0`
    Dual {
        ax_plus_s: f64,
        ct_x: f64,
        cone_violation: f64,
    },
}

impl CertificateCheck {
    /// Sign pattern and tolerance check of the certificate.
    pub fn holds(&self, tol: f64) -> bool {
        match *self {
            CertificateCheck::Primal {
                at_y,
                bt_y,
                cone_violation,
            } => bt_y < 0.0 && at_y <= tol * bt_y.abs() && cone_violation <= tol,
            CertificateCheck::Dual {
                ax_plus_s,
                ct_x,
                cone_violation,
            } => ct_x < 0.0 && ax_plus_s <= tol * ct_x.abs() && cone_violation <= tol,
        }
    }
}

impl ResidualReport {
    pub fn worst(&self) -> f64 {
        self.primal
            .max(self.dual)
            .max(self.gap)
            .max(self.slack_cone)
            .max(self.dual_cone)
    }
}

fn cone_violations(prog: &ConicProgram, v: &[f64], dual: bool) -> f64 {
    let mut worst: f64 = 0.0;
    for (k, off) in prog.cones().iter().zip(prog.cone_offsets()) {
        let seg = &v[off..off + k.dim()];
        let viol = if dual {
            cones::dual_violation(k, seg)
        } else {
            cones::violation(k, seg)
        };
        worst = worst.max(viol);
    }
    worst
}

/// Recomputes all residuals of `sol` against `prog`.
pub fn residuals(prog: &ConicProgram, sol: &Solution) -> ResidualReport {
    let a = Csc::from_triplets(prog.num_rows(), prog.num_vars(), prog.triplets());
    let b = prog.rhs();
    let c = prog.objective();
    let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());

    let certificate = match sol.status.full_accuracy() {
        Status::PrimalInfeasible if finite(&sol.y) => {
            let mut aty = vec![0.0; prog.num_vars()];
            a.gemv_t(1.0, &sol.y, &mut aty);
            Some(CertificateCheck::Primal {
                at_y: norm2(&aty),
                bt_y: dot(b, &sol.y),
                cone_violation: cone_violations(prog, &sol.y, true),
            })
        }
        Status::DualInfeasible if finite(&sol.x) && finite(&sol.s) => {
            let mut axs = sol.s.clone();
            a.gemv(1.0, &sol.x, &mut axs);
            Some(CertificateCheck::Dual {
                ax_plus_s: norm2(&axs),
                ct_x: dot(c, &sol.x),
                cone_violation: cone_violations(prog, &sol.s, false),
            })
        }
        _ => None,
    };

    if !(finite(&sol.x) && finite(&sol.s) && finite(&sol.y)) {
        return ResidualReport {
            primal: f64::INFINITY,
            dual: f64::INFINITY,
            gap: f64::INFINITY,
            complementarity: f64::INFINITY,
            slack_cone: f64::INFINITY,
            dual_cone: f64::INFINITY,
            certificate,
        };
    }

    let mut pr = sol.s.clone();
    a.gemv(1.0, &sol.x, &mut pr);
    for (p, bi) in pr.iter_mut().zip(b) {
        *p -= bi;
    }
    let mut dr = c.to_vec();
    a.gemv_t(1.0, &sol.y, &mut dr);
    let pcost = dot(c, &sol.x);
    let dcost = -dot(b, &sol.y);
    ResidualReport {
        primal: norm2(&pr) / (1.0 + norm2(b)),
        dual: norm2(&dr) / (1.0 + norm2(c)),
        gap: (pcost - dcost).abs() / (1.0 + pcost.abs().min(dcost.abs())),
        complementarity: dot(&sol.s, &sol.y).abs() / (1.0 + pcost.abs()),
        slack_cone: cone_violations(prog, &sol.s, false),
        dual_cone: cone_violations(prog, &sol.y, true),
        certificate,
    }
}
