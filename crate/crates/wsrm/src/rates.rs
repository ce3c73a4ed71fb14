//! SINR, rates and transmit powers of a beamformer set. Noise power is 1.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::network::{Assignment, ChannelSet, NetworkConfig};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RateError {
    #[error("shape mismatch in {what}: expected {expected}, found {found}")]
    Shape {
        what: &'static str,
        expected: String,
        found: String,
    },
    #[error("weight of user {k} in cell {m} is {w}, must be nonnegative")]
    NegativeWeight { k: usize, m: usize, w: f64 },
}

/// One beamformer `g[m][n]` (length `Nt`) per cell and subcarrier; it
/// serves the user `f(m, n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamformerSet {
    pub cells: usize,
    pub subcarriers: usize,
    pub antennas: usize,
    g: Vec<Complex64>,
}

impl BeamformerSet {
    pub fn zeros(cells: usize, subcarriers: usize, antennas: usize) -> Self {
        BeamformerSet {
            cells,
            subcarriers,
            antennas,
            g: vec![Complex64::new(0.0, 0.0); cells * subcarriers * antennas],
        }
    }

    fn offset(&self, m: usize, n: usize) -> usize {
        (m * self.subcarriers + n) * self.antennas
    }

    pub fn get(&self, m: usize, n: usize) -> &[Complex64] {
        let o = self.offset(m, n);
        &self.g[o..o + self.antennas]
    }

    pub fn get_mut(&mut self, m: usize, n: usize) -> &mut [Complex64] {
        let o = self.offset(m, n);
        &mut self.g[o..o + self.antennas]
    }

    pub fn is_finite(&self) -> bool {
        self.g.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    /// Largest entrywise distance to `other` (same shape assumed).
    pub fn max_abs_diff(&self, other: &BeamformerSet) -> f64 {
        self.g
            .iter()
            .zip(&other.g)
            .fold(0.0, |m, (a, b)| m.max((a - b).norm()))
    }
}

/// Flat link index `t = m·N + n` over the active links `(f(m,n), m, n)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LinkIndex {
    pub t: usize,
    pub m: usize,
    pub n: usize,
}

impl LinkIndex {
    pub fn new(m: usize, n: usize, subcarriers: usize) -> Self {
        LinkIndex {
            t: m * subcarriers + n,
            m,
            n,
        }
    }

    pub fn from_flat(t: usize, subcarriers: usize) -> Self {
        LinkIndex {
            t,
            m: t / subcarriers,
            n: t % subcarriers,
        }
    }

    /// In-cell index `k` of the served user.
    pub fn user(&self, assignment: &Assignment) -> usize {
        assignment.user(self.m, self.n)
    }

    /// All links in flat order.
    pub fn all(cells: usize, subcarriers: usize) -> impl Iterator<Item = LinkIndex> {
        (0..cells * subcarriers).map(move |t| LinkIndex::from_flat(t, subcarriers))
    }
}

/// `h·g` for a row vector `h` and a column vector `g`.
pub fn hg(h: &[Complex64], g: &[Complex64]) -> Complex64 {
    h.iter().zip(g).map(|(a, b)| a * b).sum()
}

pub fn check_shapes(
    channels: &ChannelSet,
    beams: &BeamformerSet,
    assignment: &Assignment,
) -> Result<(), RateError> {
    if !channels.matches(assignment) {
        return Err(RateError::Shape {
            what: "channels",
            expected: format!(
                "{} cells x {} subcarriers",
                assignment.cells(),
                assignment.subcarriers()
            ),
            found: format!("{} cells x {} subcarriers", channels.cells, channels.subcarriers),
        });
    }
    if (beams.cells, beams.subcarriers, beams.antennas)
        != (channels.cells, channels.subcarriers, channels.antennas)
    {
        return Err(RateError::Shape {
            what: "beamformers",
            expected: format!(
                "{}x{}x{}",
                channels.cells, channels.subcarriers, channels.antennas
            ),
            found: format!("{}x{}x{}", beams.cells, beams.subcarriers, beams.antennas),
        });
    }
    Ok(())
}

/// Received interference power on link `(m, n)`: `Σ_{m'≠m} |h_{k m' n} g_{m' n}|²`.
pub fn interference(
    channels: &ChannelSet,
    beams: &BeamformerSet,
    assignment: &Assignment,
    m: usize,
    n: usize,
) -> f64 {
    (0..channels.cells)
        .filter(|&bs| bs != m)
        .map(|bs| hg(channels.toward(assignment, m, bs, n), beams.get(bs, n)).norm_sqr())
        .sum()
}

fn sinr_unchecked(
    channels: &ChannelSet,
    beams: &BeamformerSet,
    assignment: &Assignment,
    m: usize,
    n: usize,
) -> f64 {
    let signal = hg(channels.toward(assignment, m, m, n), beams.get(m, n)).norm_sqr();
    signal / (1.0 + interference(channels, beams, assignment, m, n))
}

pub fn sinr(
    channels: &ChannelSet,
    beams: &BeamformerSet,
    assignment: &Assignment,
    link: LinkIndex,
) -> Result<f64, RateError> {
    check_shapes(channels, beams, assignment)?;
    Ok(sinr_unchecked(channels, beams, assignment, link.m, link.n))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    /// `Σ w·log2(1 + γ)`, bits/s/Hz
    pub wsr: f64,
    /// per link, flat order
    pub sinr: Vec<f64>,
    /// `c_t = log2(1 + γ_t)` per link
    pub link_rates: Vec<f64>,
    /// `R_km`, indexed `[k][m]`
    pub user_rates: Vec<Vec<f64>>,
}

/// Weighted sum-rate with `weights[k][m]`.
pub fn weighted_sum_rate(
    channels: &ChannelSet,
    beams: &BeamformerSet,
    assignment: &Assignment,
    weights: &[Vec<f64>],
) -> Result<RateReport, RateError> {
    check_shapes(channels, beams, assignment)?;
    let (cells, users) = (channels.cells, channels.users_per_cell);
    if weights.len() != users || weights.iter().any(|r| r.len() != cells) {
        return Err(RateError::Shape {
            what: "weights",
            expected: format!("{users}x{cells}"),
            found: format!("{}x{}", weights.len(), weights.first().map_or(0, Vec::len)),
        });
    }
    for (k, row) in weights.iter().enumerate() {
        for (m, &w) in row.iter().enumerate() {
            if !(w >= 0.0) {
                return Err(RateError::NegativeWeight { k, m, w });
            }
        }
    }
    let mut report = RateReport {
        wsr: 0.0,
        sinr: Vec::with_capacity(cells * channels.subcarriers),
        link_rates: Vec::with_capacity(cells * channels.subcarriers),
        user_rates: vec![vec![0.0; cells]; users],
    };
    for link in LinkIndex::all(cells, channels.subcarriers) {
        let gamma = sinr_unchecked(channels, beams, assignment, link.m, link.n);
        let c = (1.0 + gamma).log2();
        let k = link.user(assignment);
        report.sinr.push(gamma);
        report.link_rates.push(c);
        report.user_rates[k][link.m] += c;
        report.wsr += weights[k][link.m] * c;
    }
    Ok(report)
}

/// `Σ_n ‖g_{mn}‖²`.
pub fn per_bs_power(beams: &BeamformerSet, m: usize) -> f64 {
    (0..beams.subcarriers)
        .flat_map(|n| beams.get(m, n))
        .map(|c| c.norm_sqr())
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerViolation {
    pub cell: usize,
    pub power: f64,
    pub limit: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub powers: Vec<f64>,
    pub violations: Vec<PowerViolation>,
}

impl FeasibilityReport {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Feasible iff every BS power is at most `P_max·(1 + tol)`.
pub fn check_feasibility(beams: &BeamformerSet, config: &NetworkConfig, tol: f64) -> FeasibilityReport {
    let mut report = FeasibilityReport::default();
    for (m, &limit) in config.p_max.iter().enumerate().take(beams.cells) {
        let power = per_bs_power(beams, m);
        report.powers.push(power);
        if power > limit * (1.0 + tol) {
            report.violations.push(PowerViolation {
                cell: m,
                power,
                limit,
            });
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// Two cells, one user each, one subcarrier, one antenna.
    fn two_cell(direct: f64, cross: f64) -> (ChannelSet, Assignment) {
        let ch = ChannelSet::from_fn(2, 1, 1, 1, |g, bs, _, _| {
            if g == bs {
                c(direct, 0.0)
            } else {
                c(cross, 0.0)
            }
        });
        (ch, Assignment::new(1, vec![vec![0], vec![0]]).unwrap())
    }

    #[test]
    fn single_cell_sinr_is_signal_power() {
        let ch = ChannelSet::from_fn(1, 1, 1, 1, |_, _, _, _| c(3f64.sqrt(), 0.0));
        let a = Assignment::new(1, vec![vec![0]]).unwrap();
        let mut b = BeamformerSet::zeros(1, 1, 1);
        assert_eq!(sinr(&ch, &b, &a, LinkIndex::new(0, 0, 1)).unwrap(), 0.0);
        b.get_mut(0, 0)[0] = c(1.0, 0.0);
        let g = sinr(&ch, &b, &a, LinkIndex::new(0, 0, 1)).unwrap();
        assert!((g - 3.0).abs() < 1e-12);
        let r = weighted_sum_rate(&ch, &b, &a, &[vec![1.0]]).unwrap();
        assert!((r.wsr - 2.0).abs() < 1e-12);
    }

    #[test]
    fn interference_enters_the_denominator() {
        let (ch, a) = two_cell(2.0, 1.0);
        let mut b = BeamformerSet::zeros(2, 1, 1);
        b.get_mut(0, 0)[0] = c(1.0, 0.0);
        b.get_mut(1, 0)[0] = c(1.0, 0.0);
        // |h g|² = 4, cross 1
        assert!((sinr(&ch, &b, &a, LinkIndex::new(0, 0, 1)).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn powers_and_feasibility() {
        let mut b = BeamformerSet::zeros(2, 2, 1);
        let cfg = NetworkConfig::uniform(2, 1, 2, 1, 1.0);
        assert!(check_feasibility(&b, &cfg, 0.0).is_feasible());
        let half = 0.5f64.sqrt();
        b.get_mut(0, 0)[0] = c(half, 0.0);
        b.get_mut(0, 1)[0] = c(0.0, half);
        assert!((per_bs_power(&b, 0) - 1.0).abs() < 1e-15);
        assert!(check_feasibility(&b, &cfg, 1e-12).is_feasible());
        b.get_mut(1, 0)[0] = c(1.01f64.sqrt(), 0.0);
        let rep = check_feasibility(&b, &cfg, 1e-6);
        assert_eq!(rep.violations.len(), 1);
        assert_eq!(rep.violations[0].cell, 1);
    }

    #[test]
    fn bad_weights_are_rejected() {
        let (ch, a) = two_cell(1.0, 0.0);
        let b = BeamformerSet::zeros(2, 1, 1);
        assert!(matches!(
            weighted_sum_rate(&ch, &b, &a, &[vec![1.0, -1.0]]),
            Err(RateError::NegativeWeight { k: 0, m: 1, .. })
        ));
        assert!(matches!(
            weighted_sum_rate(&ch, &b, &a, &[vec![1.0]]),
            Err(RateError::Shape { .. })
        ));
    }

    #[test]
    fn link_index_round_trip() {
        for link in LinkIndex::all(3, 8) {
            assert_eq!(LinkIndex::from_flat(link.t, 8), link);
            assert_eq!(LinkIndex::new(link.m, link.n, 8).t, link.t);
        }
    }
}
