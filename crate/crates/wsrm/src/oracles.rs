//! Independent references for the SPCA result: water-filling for parallel
//! interference-free channels, exhaustive power grids for tiny coupled
//! instances, and a direct check of whether an SINR floor is attainable.

use conic::{solve, Affine, ConicProgram, SolverError, SolverSettings, Status};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::network::{Assignment, ChannelSet, NetworkConfig};
use crate::rates::{check_shapes, weighted_sum_rate, BeamformerSet, LinkIndex, RateError};

/// Bisection stops once the water-level bracket is this narrow (relative).
pub const WATER_LEVEL_TOL: f64 = 1e-10;
/// Largest number of grid points [`grid_search`] will evaluate.
pub const GRID_BUDGET: u64 = 20_000_000;
pub const DEFAULT_GRID_POINTS: usize = 201;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OracleError {
    #[error("gain {index} is {value}; gains must be finite and nonnegative")]
    Gain { index: usize, value: f64 },
    #[error("power budget {0} must be finite and nonnegative")]
    Budget(f64),
    #[error("grid search needs single-antenna transmitters, found {0} antennas")]
    Antennas(usize),
    #[error("grid of {points}^{axes} points exceeds the budget of {budget}")]
    TooLarge { points: usize, axes: usize, budget: u64 },
    #[error("grid needs at least 2 points per axis, got {0}")]
    Resolution(usize),
    #[error("holding SNR {floor} everywhere needs {reserved} of a {budget} budget")]
    Floor { floor: f64, reserved: f64, budget: f64 },
    #[error(transparent)]
    Rate(#[from] RateError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaterFilling {
    pub powers: Vec<f64>,
    pub level: f64,
    /// `Σ log2(1 + p_n g_n)`
    pub rate: f64,
}

/// Maximizes `Σ log2(1 + p_n g_n)` subject to `Σ p_n ≤ budget` with
/// `p_n = max(0, μ − 1/g_n)` and `μ` found by bisection.
pub fn water_filling(gains: &[f64], budget: f64) -> Result<WaterFilling, OracleError> {
    water_filling_with_floor(gains, budget, 0.0)
}

/// Water-filling with every channel held at SNR `p_n g_n ≥ floor`:
/// `p_n = max(floor/g_n, μ − 1/g_n)`. This is the exact optimum of the
/// single-cell problem once an SINR floor is imposed on every subcarrier.
pub fn water_filling_with_floor(
    gains: &[f64],
    budget: f64,
    floor: f64,
) -> Result<WaterFilling, OracleError> {
    if !(budget >= 0.0 && budget.is_finite()) {
        return Err(OracleError::Budget(budget));
    }
    if let Some((index, &value)) = gains.iter().enumerate().find(|(_, g)| !(g.is_finite() && **g >= 0.0)) {
        return Err(OracleError::Gain { index, value });
    }
    let base: Vec<f64> = gains
        .iter()
        .map(|&g| if floor > 0.0 { floor / g } else { 0.0 })
        .collect();
    let reserved: f64 = base.iter().sum();
    if !(reserved <= budget) {
        return Err(OracleError::Floor { floor, reserved, budget });
    }
    let alloc = |mu: f64| -> Vec<f64> {
        gains
            .iter()
            .zip(&base)
            .map(|(&g, &b)| if g > 0.0 { (mu - 1.0 / g).max(b) } else { 0.0 })
            .collect()
    };
    let used = |mu: f64| alloc(mu).iter().sum::<f64>();
    let best = gains.iter().copied().fold(0.0, f64::max);
    if best == 0.0 || budget == 0.0 {
        return Ok(WaterFilling {
            powers: vec![0.0; gains.len()],
            level: 0.0,
            rate: 0.0,
        });
    }
    // at μ = 1/g_best + budget the best channel alone exhausts the budget
    let mut lo = 0.0;
    let mut hi = 1.0 / best + budget;
    while hi - lo > WATER_LEVEL_TOL * hi {
        let mid = 0.5 * (lo + hi);
        if used(mid) > budget {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let level = lo;
    let mut powers = alloc(level);
    // hand the bisection remainder to the channels above their floor
    let wet: Vec<usize> = (0..gains.len())
        .filter(|&n| gains[n] > 0.0 && level - 1.0 / gains[n] > base[n])
        .collect();
    let slack = (budget - powers.iter().sum::<f64>()).max(0.0);
    if !wet.is_empty() {
        for &n in &wet {
            powers[n] += slack / wet.len() as f64;
        }
    }
    let rate = powers.iter().zip(gains).map(|(p, g)| (1.0 + p * g).log2()).sum();
    Ok(WaterFilling {
        powers,
        level,
        rate,
    })
}

/// `|h|²` of every subcarrier of a single-cell, single-antenna, single-user
/// channel set.
pub fn scalar_gains(channels: &ChannelSet, assignment: &Assignment) -> Vec<f64> {
    (0..channels.subcarriers)
        .map(|n| channels.toward(assignment, 0, 0, n)[0].norm_sqr())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub wsr: f64,
    /// per-link transmit powers at the best point, flat link order
    pub powers: Vec<f64>,
    pub points_per_axis: usize,
    pub evaluated: u64,
}

/// Exhaustive search over per-link powers on a uniform grid of
/// `[0, P_max(m)]` with `points` values per axis, keeping points that meet
/// every per-BS budget. Requires `Nt = 1`, where beam phases do not matter.
pub fn grid_search(
    channels: &ChannelSet,
    assignment: &Assignment,
    config: &NetworkConfig,
    points: usize,
) -> Result<GridResult, OracleError> {
    if config.antennas != 1 {
        return Err(OracleError::Antennas(config.antennas));
    }
    if points < 2 {
        return Err(OracleError::Resolution(points));
    }
    let axes = config.links();
    let total = (points as u64).checked_pow(axes as u32).filter(|&n| n <= GRID_BUDGET);
    let Some(total) = total else {
        return Err(OracleError::TooLarge {
            points,
            axes,
            budget: GRID_BUDGET,
        });
    };
    let mut beams = BeamformerSet::zeros(config.cells, config.subcarriers, 1);
    check_shapes(channels, &beams, assignment)?;
    let level = |m: usize, i: usize| config.p_max[m] * i as f64 / (points - 1) as f64;
    let links: Vec<LinkIndex> = LinkIndex::all(config.cells, config.subcarriers).collect();
    let mut idx = vec![0usize; axes];
    let mut best = GridResult {
        wsr: f64::NEG_INFINITY,
        powers: vec![0.0; axes],
        points_per_axis: points,
        evaluated: 0,
    };
    for _ in 0..total {
        let powers: Vec<f64> = links.iter().map(|l| level(l.m, idx[l.t])).collect();
        let within = (0..config.cells).all(|m| {
            let used: f64 = links.iter().filter(|l| l.m == m).map(|l| powers[l.t]).sum();
            used <= config.p_max[m] * (1.0 + 1e-12)
        });
        if within {
            for l in &links {
                beams.get_mut(l.m, l.n)[0] = Complex64::new(powers[l.t].sqrt(), 0.0);
            }
            let wsr = weighted_sum_rate(channels, &beams, assignment, &config.weights)?.wsr;
            best.evaluated += 1;
            if wsr > best.wsr {
                best.wsr = wsr;
                best.powers = powers;
            }
        }
        // odometer increment
        for d in idx.iter_mut() {
            *d += 1;
            if *d < points {
                break;
            }
            *d = 0;
        }
    }
    Ok(best)
}

/// Whether some beamformers within the power budgets reach SINR ≥ `floor`
/// on every link. Each link becomes `Re(h g) ≥ √floor·‖(1, cross terms)‖`
/// with `Im(h g) = 0`, a second-order cone.
pub fn floor_attainable(
    channels: &ChannelSet,
    assignment: &Assignment,
    config: &NetworkConfig,
    floor: f64,
) -> Result<Status, SolverError> {
    let (cells, subs, nt) = (config.cells, config.subcarriers, config.antennas);
    let mut prog = ConicProgram::new();
    let beams = prog.add_vars(cells * subs * 2 * nt);
    let base = |m: usize, n: usize| beams.start + (m * subs + n) * 2 * nt;
    let hg = |h: &[Complex64], at: usize| {
        let (mut re, mut im) = (Affine::constant(0.0), Affine::constant(0.0));
        for (a, c) in h.iter().enumerate() {
            re.push_term(at + a, c.re);
            re.push_term(at + nt + a, -c.im);
            im.push_term(at + a, c.im);
            im.push_term(at + nt + a, c.re);
        }
        (re, im)
    };
    for m in 0..cells {
        let rest = (0..subs)
            .flat_map(|n| (0..2 * nt).map(move |j| base(m, n) + j))
            .map(Affine::var)
            .collect();
        prog.add_soc(Affine::constant(config.p_max[m].sqrt()), rest);
    }
    let s = floor.sqrt();
    for l in LinkIndex::all(cells, subs) {
        let (re, im) = hg(channels.toward(assignment, l.m, l.m, l.n), base(l.m, l.n));
        prog.add_equality(im);
        let mut rest = vec![Affine::constant(s)];
        for bs in (0..cells).filter(|&bs| bs != l.m) {
            let (xr, xi) = hg(channels.toward(assignment, l.m, bs, l.n), base(bs, l.n));
            rest.push(xr.scaled(s));
            rest.push(xi.scaled(s));
        }
        prog.add_soc(re, rest);
    }
    Ok(solve(&prog, &SolverSettings::default())?.status.full_accuracy())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_gains_split_evenly() {
        let wf = water_filling(&[1.0; 4], 4.0).unwrap();
        for p in &wf.powers {
            assert!((p - 1.0).abs() < 1e-9);
        }
        assert!((wf.rate - 4.0).abs() < 1e-9);
    }

    #[test]
    fn weak_channel_left_dry() {
        let wf = water_filling(&[4.0, 0.01], 1.0).unwrap();
        assert_eq!(wf.powers[1], 0.0);
        assert!((wf.powers[0] - 1.0).abs() < 1e-9);
        let used: f64 = [4.0f64, 0.01]
            .iter()
            .map(|g| (wf.level - 1.0 / g).max(0.0))
            .sum();
        assert!((used - 1.0).abs() < 1e-8);
    }

    #[test]
    fn tiny_budget_goes_to_best() {
        let wf = water_filling(&[0.5, 3.0, 2.0], 1e-6).unwrap();
        assert_eq!(wf.powers[0], 0.0);
        assert_eq!(wf.powers[2], 0.0);
        assert!(wf.powers[1] > 0.0);
    }

    #[test]
    fn floor_raises_dry_channels() {
        let wf = water_filling_with_floor(&[4.0, 0.01], 1.0, 1e-3).unwrap();
        assert!((wf.powers[1] - 0.1).abs() < 1e-9);
        assert!((wf.powers[0] - 0.9).abs() < 1e-9);
        assert!(water_filling_with_floor(&[4.0, 0.01], 1.0, 0.1).is_err());
        let free = water_filling(&[4.0, 0.01], 1.0).unwrap();
        assert!(wf.rate < free.rate);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(water_filling(&[1.0, -1.0], 1.0).is_err());
        assert!(water_filling(&[1.0], f64::NAN).is_err());
        assert_eq!(water_filling(&[0.0, 0.0], 1.0).unwrap().rate, 0.0);
    }
}
