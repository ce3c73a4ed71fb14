//! Network geometry, subcarrier scheduling and frequency-selective channels.
//!
//! Users are indexed per cell as `(m, k)`; wherever a flat index is needed
//! the global user is `m·K + k`.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::rng::{stream, Purpose};

pub const REFERENCE_DISTANCE: f64 = 200.0;
pub const PATH_LOSS_EXPONENT: f64 = 3.5;
/// variance of the shadowing in dB
pub const SHADOWING_VARIANCE_DB: f64 = 8.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("invalid `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("cannot give each of {users} users a subcarrier out of {subcarriers}")]
    InfeasibleAssignment { users: usize, subcarriers: usize },
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        reason: reason.into(),
    }
}

/// How path loss and shadowing enter the channel coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GainModel {
    /// `h = √((200/l)^3.5 · Φ) · Λ`: both factors scale received power.
    #[default]
    Power,
    /// `h = (200/l)^3.5 · Φ · Λ`: both factors scale the amplitude.
    Amplitude,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    /// M
    pub cells: usize,
    /// K
    pub users_per_cell: usize,
    /// N
    pub subcarriers: usize,
    /// Nt
    pub antennas: usize,
    /// per-BS budget in watts
    pub p_max: Vec<f64>,
    /// meters between adjacent BSs
    pub inter_bs_distance: f64,
    pub annulus_inner: f64,
    pub annulus_outer: f64,
    /// `weights[k][m]` belongs to user `k` of cell `m`
    pub weights: Vec<Vec<f64>>,
    #[serde(default)]
    pub gain_model: GainModel,
}

pub fn dbw_to_watts(dbw: f64) -> f64 {
    10f64.powf(dbw / 10.0)
}

impl NetworkConfig {
    /// Equal budgets and unit weights, 1000 m spacing, users in [500, 1000] m.
    pub fn uniform(cells: usize, users: usize, subcarriers: usize, antennas: usize, p_max: f64) -> Self {
        NetworkConfig {
            cells,
            users_per_cell: users,
            subcarriers,
            antennas,
            p_max: vec![p_max; cells],
            inter_bs_distance: 1000.0,
            annulus_inner: 500.0,
            annulus_outer: 1000.0,
            weights: vec![vec![1.0; cells]; users],
            gain_model: GainModel::default(),
        }
    }

    /// M=3, K=2, N=8, Nt=2, 20 dBW.
    pub fn desk() -> Self {
        Self::uniform(3, 2, 8, 2, dbw_to_watts(20.0))
    }

    /// Like [`Self::desk`] with 64 subcarriers.
    pub fn full() -> Self {
        Self::uniform(3, 2, 64, 2, dbw_to_watts(20.0))
    }

    /// Number of active links `T = M·N`.
    pub fn links(&self) -> usize {
        self.cells * self.subcarriers
    }

    pub fn total_users(&self) -> usize {
        self.cells * self.users_per_cell
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.cells == 0 {
            return Err(invalid("cells", "need at least one cell"));
        }
        if self.users_per_cell == 0 {
            return Err(invalid("users_per_cell", "need at least one user per cell"));
        }
        if self.subcarriers < self.users_per_cell {
            return Err(ConfigError::InfeasibleAssignment {
                users: self.users_per_cell,
                subcarriers: self.subcarriers,
            });
        }
        if self.antennas == 0 {
            return Err(invalid("antennas", "need at least one antenna"));
        }
        if self.p_max.len() != self.cells {
            return Err(invalid(
                "p_max",
                format!("{} budgets for {} cells", self.p_max.len(), self.cells),
            ));
        }
        if let Some(p) = self.p_max.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
            return Err(invalid("p_max", format!("budget {p} is not positive")));
        }
        if !(self.inter_bs_distance.is_finite() && self.inter_bs_distance > 0.0) {
            return Err(invalid("inter_bs_distance", "must be positive"));
        }
        if !(self.annulus_inner.is_finite() && self.annulus_inner > 0.0) {
            return Err(invalid("annulus_inner", "must be positive (path loss diverges at 0)"));
        }
        if !(self.annulus_outer.is_finite() && self.annulus_outer >= self.annulus_inner) {
            return Err(invalid("annulus_outer", "must not be below annulus_inner"));
        }
        if self.weights.len() != self.users_per_cell
            || self.weights.iter().any(|row| row.len() != self.cells)
        {
            return Err(invalid(
                "weights",
                format!("expected {} rows of {} entries", self.users_per_cell, self.cells),
            ));
        }
        if let Some(w) = self.weights.iter().flatten().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(invalid("weights", format!("weight {w} is not positive")));
        }
        Ok(())
    }
}

/// Per-cell subcarrier schedule: `user[m][n]` is `f(m, n)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub users_per_cell: usize,
    pub user: Vec<Vec<usize>>,
}

impl Assignment {
    /// Checks that every entry names a user and every user is scheduled.
    pub fn new(users_per_cell: usize, user: Vec<Vec<usize>>) -> Result<Self, ConfigError> {
        let a = Assignment {
            users_per_cell,
            user,
        };
        for row in &a.user {
            let mut seen = vec![false; users_per_cell];
            for &k in row {
                if k >= users_per_cell {
                    return Err(invalid("assignment", format!("user {k} out of range")));
                }
                seen[k] = true;
            }
            if seen.iter().any(|s| !s) {
                return Err(invalid("assignment", "some user has no subcarrier"));
            }
        }
        Ok(a)
    }

    pub fn cells(&self) -> usize {
        self.user.len()
    }

    pub fn subcarriers(&self) -> usize {
        self.user.first().map_or(0, Vec::len)
    }

    pub fn user(&self, m: usize, n: usize) -> usize {
        self.user[m][n]
    }

    /// Global index of the user served by cell `m` on subcarrier `n`.
    pub fn global_user(&self, m: usize, n: usize) -> usize {
        m * self.users_per_cell + self.user[m][n]
    }

    /// `S_km`: subcarriers of user `k` in cell `m`, ascending.
    pub fn subcarriers_of(&self, m: usize, k: usize) -> Vec<usize> {
        (0..self.subcarriers()).filter(|&n| self.user[m][n] == k).collect()
    }
}

/// Random partition of the subcarriers of every cell among its users, each
/// user getting at least one: shuffled subcarriers are dealt round-robin to
/// a shuffled user order.
pub fn assign_subcarriers(config: &NetworkConfig, seed: u64) -> Result<Assignment, ConfigError> {
    let (k, n) = (config.users_per_cell, config.subcarriers);
    if k == 0 || n < k {
        return Err(ConfigError::InfeasibleAssignment {
            users: k,
            subcarriers: n,
        });
    }
    let mut rng = stream(seed, Purpose::Assignment);
    let mut user = Vec::with_capacity(config.cells);
    for _ in 0..config.cells {
        let mut subs: Vec<usize> = (0..n).collect();
        subs.shuffle(&mut rng);
        let mut order: Vec<usize> = (0..k).collect();
        order.shuffle(&mut rng);
        let mut row = vec![0; n];
        for (i, &s) in subs.iter().enumerate() {
            row[s] = order[i % k];
        }
        user.push(row);
    }
    Ok(Assignment {
        users_per_cell: k,
        user,
    })
}

/// BS sites: a single BS at the origin, two at `(±d/2, 0)`, otherwise the
/// vertices of a regular M-gon with side `d` centred on the origin.
pub fn bs_layout(cells: usize, spacing: f64) -> Vec<[f64; 2]> {
    match cells {
        0 => Vec::new(),
        1 => vec![[0.0, 0.0]],
        2 => vec![[-spacing / 2.0, 0.0], [spacing / 2.0, 0.0]],
        m => {
            let radius = spacing / (2.0 * (PI / m as f64).sin());
            (0..m)
                .map(|i| {
                    let a = PI / 2.0 + TAU * i as f64 / m as f64;
                    [radius * a.cos(), radius * a.sin()]
                })
                .collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub config: NetworkConfig,
    pub seed: u64,
    pub bs_positions: Vec<[f64; 2]>,
    /// `user_positions[m][k]`
    pub user_positions: Vec<Vec<[f64; 2]>>,
    /// `distances[g][m']`: global user `g` to BS `m'`, meters
    pub distances: Vec<Vec<f64>>,
    pub assignment: Assignment,
}

/// Places BSs and users and draws the subcarrier schedule.
pub fn drop_network(config: &NetworkConfig, seed: u64) -> Result<Scenario, ConfigError> {
    config.validate()?;
    let bs = bs_layout(config.cells, config.inter_bs_distance);
    let mut rng = stream(seed, Purpose::Geometry);
    let (r_in, r_out) = (config.annulus_inner, config.annulus_outer);
    let mut users = Vec::with_capacity(config.cells);
    for centre in &bs {
        let mut cell = Vec::with_capacity(config.users_per_cell);
        for _ in 0..config.users_per_cell {
            // uniform by area
            let radius = if r_in == r_out {
                r_in
            } else {
                rng.random_range(r_in * r_in..r_out * r_out).sqrt()
            };
            let angle = rng.random_range(0.0..TAU);
            cell.push([centre[0] + radius * angle.cos(), centre[1] + radius * angle.sin()]);
        }
        users.push(cell);
    }
    let distances = users
        .iter()
        .flatten()
        .map(|u| bs.iter().map(|b| (u[0] - b[0]).hypot(u[1] - b[1])).collect())
        .collect();
    Ok(Scenario {
        config: config.clone(),
        seed,
        bs_positions: bs,
        user_positions: users,
        distances,
        assignment: assign_subcarriers(config, seed)?,
    })
}

pub fn path_loss(distance: f64) -> f64 {
    (REFERENCE_DISTANCE / distance).powf(PATH_LOSS_EXPONENT)
}

/// `h[g][m'][n]`, a row vector of `Nt` complex gains from BS `m'` to global
/// user `g` on subcarrier `n`, for every triple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSet {
    pub cells: usize,
    pub users_per_cell: usize,
    pub subcarriers: usize,
    pub antennas: usize,
    /// `distances[g][m']`, meters (empty for hand-built channels)
    pub distances: Vec<Vec<f64>>,
    h: Vec<Complex64>,
}

impl ChannelSet {
    /// Builds a channel set from `f(g, bs, n, antenna)`.
    pub fn from_fn(
        cells: usize,
        users_per_cell: usize,
        subcarriers: usize,
        antennas: usize,
        mut f: impl FnMut(usize, usize, usize, usize) -> Complex64,
    ) -> Self {
        let mut h = Vec::with_capacity(cells * users_per_cell * cells * subcarriers * antennas);
        for g in 0..cells * users_per_cell {
            for bs in 0..cells {
                for n in 0..subcarriers {
                    for a in 0..antennas {
                        h.push(f(g, bs, n, a));
                    }
                }
            }
        }
        ChannelSet {
            cells,
            users_per_cell,
            subcarriers,
            antennas,
            distances: Vec::new(),
            h,
        }
    }

    fn offset(&self, user: usize, bs: usize, n: usize) -> usize {
        ((user * self.cells + bs) * self.subcarriers + n) * self.antennas
    }

    /// Channel from BS `bs` to global user `user` on subcarrier `n`.
    pub fn get(&self, user: usize, bs: usize, n: usize) -> &[Complex64] {
        let o = self.offset(user, bs, n);
        &self.h[o..o + self.antennas]
    }

    pub fn get_mut(&mut self, user: usize, bs: usize, n: usize) -> &mut [Complex64] {
        let o = self.offset(user, bs, n);
        &mut self.h[o..o + self.antennas]
    }

    /// Channel from BS `bs` to the user that cell `m` serves on `n`; the
    /// direct link when `bs == m`.
    pub fn toward(&self, assignment: &Assignment, m: usize, bs: usize, n: usize) -> &[Complex64] {
        self.get(assignment.global_user(m, n), bs, n)
    }

    pub fn is_finite(&self) -> bool {
        self.h.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    /// True if the dimensions agree with `assignment`.
    pub fn matches(&self, assignment: &Assignment) -> bool {
        assignment.cells() == self.cells
            && assignment.subcarriers() == self.subcarriers
            && assignment.users_per_cell == self.users_per_cell
            && self.h.len()
                == self.cells * self.users_per_cell * self.cells * self.subcarriers * self.antennas
    }
}

/// Draws `h = a(l, Φ) · Λ` for every (user, BS, subcarrier) with
/// `10·log10 Φ ~ N(0, 8)` per triple and `Λ ~ CN(0, I)`; `a` follows the
/// configured [`GainModel`].
pub fn generate_channels(scenario: &Scenario, seed: u64) -> ChannelSet {
    let cfg = &scenario.config;
    let mut rng = stream(seed, Purpose::Channels);
    let sd_db = SHADOWING_VARIANCE_DB.sqrt();
    let half = 0.5f64.sqrt();
    let mut set = ChannelSet::from_fn(
        cfg.cells,
        cfg.users_per_cell,
        cfg.subcarriers,
        cfg.antennas,
        |_, _, _, _| Complex64::new(0.0, 0.0),
    );
    for g in 0..cfg.total_users() {
        for bs in 0..cfg.cells {
            let pl = path_loss(scenario.distances[g][bs]);
            for n in 0..cfg.subcarriers {
                let shadow_db: f64 = sd_db * rng.sample::<f64, _>(StandardNormal);
                let phi = 10f64.powf(shadow_db / 10.0);
                let amp = match cfg.gain_model {
                    GainModel::Power => (pl * phi).sqrt(),
                    GainModel::Amplitude => pl * phi,
                };
                for c in set.get_mut(g, bs, n) {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    *c = Complex64::new(amp * half * re, amp * half * im);
                }
            }
        }
    }
    set.distances = scenario.distances.clone();
    set
}

/// Scenario and channels of one trial.
pub fn realize(config: &NetworkConfig, seed: u64) -> Result<(Scenario, ChannelSet), ConfigError> {
    let scenario = drop_network(config, seed)?;
    let channels = generate_channels(&scenario, seed);
    Ok((scenario, channels))
}

pub const SCENARIO_FORMAT: &str = "wsrm-scenario";
pub const SCENARIO_VERSION: u32 = 1;

/// Versioned JSON document holding everything needed to replay a trial.
/// Complex numbers are `[re, im]` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioDocument {
    pub format: String,
    pub version: u32,
    pub scenario: Scenario,
    pub channels: ChannelSet,
}

#[derive(Debug, thiserror::Error)]
pub enum DocumentError {
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("unsupported document `{format}` version {version}")]
    Version { format: String, version: u32 },
}

impl ScenarioDocument {
    pub fn new(scenario: Scenario, channels: ChannelSet) -> Self {
        ScenarioDocument {
            format: SCENARIO_FORMAT.to_string(),
            version: SCENARIO_VERSION,
            scenario,
            channels,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario documents serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, DocumentError> {
        let doc: ScenarioDocument = serde_json::from_str(text)?;
        if doc.format != SCENARIO_FORMAT || doc.version != SCENARIO_VERSION {
            return Err(DocumentError::Version {
                format: doc.format,
                version: doc.version,
            });
        }
        Ok(doc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triangle_layout_has_requested_side() {
        let bs = bs_layout(3, 1000.0);
        for i in 0..3 {
            let (a, b) = (bs[i], bs[(i + 1) % 3]);
            assert!(((a[0] - b[0]).hypot(a[1] - b[1]) - 1000.0).abs() < 1e-9);
        }
        assert_eq!(bs_layout(1, 1000.0), vec![[0.0, 0.0]]);
    }

    #[test]
    fn validation_names_the_field() {
        let mut cfg = NetworkConfig::desk();
        cfg.p_max[1] = 0.0;
        match cfg.validate() {
            Err(ConfigError::Invalid { field, .. }) => assert_eq!(field, "p_max"),
            other => panic!("{other:?}"),
        }
        let mut cfg = NetworkConfig::desk();
        cfg.weights[0][2] = -1.0;
        assert!(matches!(cfg.validate(), Err(ConfigError::Invalid { field: "weights", .. })));
        let mut cfg = NetworkConfig::desk();
        cfg.subcarriers = 1;
        assert!(matches!(
            cfg.validate(),
            Err(ConfigError::InfeasibleAssignment { .. })
        ));
    }

    #[test]
    fn unit_path_loss_at_reference_distance() {
        assert_eq!(path_loss(200.0), 1.0);
        assert!(path_loss(500.0) < path_loss(400.0));
    }

    #[test]
    fn single_user_gets_every_subcarrier() {
        let cfg = NetworkConfig::uniform(1, 1, 4, 1, 1.0);
        let a = assign_subcarriers(&cfg, 3).unwrap();
        assert_eq!(a.subcarriers_of(0, 0), vec![0, 1, 2, 3]);
    }

    #[test]
    fn hand_built_assignment_is_checked() {
        assert!(Assignment::new(2, vec![vec![0, 0, 0]]).is_err());
        assert!(Assignment::new(2, vec![vec![0, 2]]).is_err());
        assert!(Assignment::new(2, vec![vec![1, 0]]).is_ok());
    }
}
