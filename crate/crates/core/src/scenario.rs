//! Geometry, user mobility, blockage and raw link generation.
//!
//! All links share one model: a Rician tap-0 (distance-phase LoS plus
//! Gaussian scatter) followed by pure-scatter taps. Average power of every
//! link is one before blockage is applied.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-element reflection amplitude. With 32 elements an aligned surface
/// carries about ten times the power of one direct link.
pub const DEFAULT_RIS_GAIN: f64 = 0.1;

pub type Point = [f64; 3];

/// How the user moves between time intervals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mobility {
    /// Fresh uniform position every interval.
    Uniform,
    /// Fixed-length step in a uniformly random horizontal direction,
    /// reflected at the area bounds.
    Walk,
}

/// Physical scenario and transmission schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n_bs_antennas: usize,
    pub n_ut_antennas_per_user: usize,
    pub n_users: usize,
    pub n_ris: usize,
    pub ris_rows: usize,
    pub ris_cols: usize,
    pub n_taps: usize,
    pub n_subcarriers: usize,
    pub cp_length: usize,
    pub snr_db: f64,
    pub los_nlos_power_ratio: f64,
    /// Scatter power of each tap; sums to one.
    pub tap_powers: Vec<f64>,
    pub bs_position: Point,
    pub ris_positions: Vec<Point>,
    pub area_min: Point,
    pub area_max: Point,
    pub blockage_probability: f64,
    pub carrier_wavelength: f64,
    /// Spacing between adjacent RIS elements in meters.
    pub element_spacing: f64,
    /// Amplitude applied to every reflected element path; `None` uses
    /// [`DEFAULT_RIS_GAIN`].
    pub ris_gain: Option<f64>,
    pub mobility: Mobility,
    pub walk_step: f64,
    pub warmup_intervals: usize,
    pub images_per_interval: usize,
    pub known_images_online: usize,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_bs_antennas: 2,
            n_ut_antennas_per_user: 2,
            n_users: 1,
            n_ris: 2,
            ris_rows: 4,
            ris_cols: 8,
            n_taps: 2,
            n_subcarriers: 1024,
            cp_length: 16,
            snr_db: 3.0,
            los_nlos_power_ratio: 10.0,
            tap_powers: vec![0.7, 0.3],
            bs_position: [0.0, 0.0, 10.0],
            ris_positions: vec![[5.0, -2.0, 5.0], [-2.0, 5.0, 5.0]],
            area_min: [0.0, 0.0, 1.5],
            area_max: [10.0, 10.0, 1.5],
            blockage_probability: 0.5,
            carrier_wavelength: 0.1,
            element_spacing: 0.05,
            ris_gain: None,
            mobility: Mobility::Walk,
            walk_step: 0.5,
            warmup_intervals: 64,
            images_per_interval: 20,
            known_images_online: 1,
            seed: 2024,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_bs_antennas", self.n_bs_antennas),
            ("n_ut_antennas_per_user", self.n_ut_antennas_per_user),
            ("n_users", self.n_users),
            ("ris_rows", self.ris_rows),
            ("ris_cols", self.ris_cols),
            ("n_taps", self.n_taps),
            ("n_subcarriers", self.n_subcarriers),
            ("images_per_interval", self.images_per_interval),
        ];
        for (name, value) in counts {
            if value == 0 {
                return Err(Error::Config(format!("scenario.{name} must be at least 1")));
            }
        }
        if self.n_users > 2 {
            return Err(Error::Config("scenario.n_users must be 1 or 2".into()));
        }
        if !self.n_subcarriers.is_power_of_two() {
            return Err(Error::Config("scenario.n_subcarriers must be a power of two".into()));
        }
        // Cascaded paths span 2L-1 taps; the prefix has to cover that spread.
        let spread = 2 * self.n_taps - 1;
        if self.cp_length < spread {
            return Err(Error::Config(format!(
                "scenario.cp_length = {} is shorter than the cascaded spread of {spread} taps",
                self.cp_length
            )));
        }
        if !(0.0..=1.0).contains(&self.blockage_probability) {
            return Err(Error::Config("scenario.blockage_probability must lie in [0, 1]".into()));
        }
        if self.tap_powers.len() != self.n_taps {
            return Err(Error::Config(format!(
                "scenario.tap_powers has {} entries for {} taps",
                self.tap_powers.len(),
                self.n_taps
            )));
        }
        if self.tap_powers.iter().any(|p| *p < 0.0)
            || (self.tap_powers.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(Error::Config("scenario.tap_powers must be nonnegative and sum to 1".into()));
        }
        if self.ris_positions.len() != self.n_ris {
            return Err(Error::Config(format!(
                "scenario.ris_positions lists {} surfaces but n_ris = {}",
                self.ris_positions.len(),
                self.n_ris
            )));
        }
        if !(self.los_nlos_power_ratio >= 0.0) || !self.snr_db.is_finite() {
            return Err(Error::Config("scenario.los_nlos_power_ratio / snr_db out of range".into()));
        }
        if !(self.carrier_wavelength > 0.0) || !(self.element_spacing > 0.0) {
            return Err(Error::Config("scenario wavelength and element spacing must be positive".into()));
        }
        if (0..3).any(|a| self.area_min[a] > self.area_max[a]) {
            return Err(Error::Config("scenario.area_min exceeds area_max".into()));
        }
        if self.walk_step < 0.0 {
            return Err(Error::Config("scenario.walk_step must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn elements_per_ris(&self) -> usize {
        self.ris_rows * self.ris_cols
    }

    pub fn effective_ris_gain(&self) -> f64 {
        self.ris_gain.unwrap_or(DEFAULT_RIS_GAIN)
    }

    pub fn snr_linear(&self) -> f64 {
        10f64.powf(self.snr_db / 10.0)
    }

    /// Position of element `(row, col)` of surface `ris`.
    ///
    /// Surfaces are vertical planes facing the centre of the user area:
    /// columns run horizontally, rows vertically.
    pub fn element_position(&self, ris: usize, row: usize, col: usize) -> Point {
        let centre = self.ris_positions[ris];
        let area_centre = [
            0.5 * (self.area_min[0] + self.area_max[0]),
            0.5 * (self.area_min[1] + self.area_max[1]),
        ];
        let nx = area_centre[0] - centre[0];
        let ny = area_centre[1] - centre[1];
        let norm = nx.hypot(ny);
        // Column axis is horizontal and orthogonal to the facing direction.
        let (cx, cy) = if norm > 0.0 { (-ny / norm, nx / norm) } else { (1.0, 0.0) };
        let dc = (col as f64 - 0.5 * (self.ris_cols as f64 - 1.0)) * self.element_spacing;
        let dr = (row as f64 - 0.5 * (self.ris_rows as f64 - 1.0)) * self.element_spacing;
        [centre[0] + dc * cx, centre[1] + dc * cy, centre[2] + dr]
    }
}

/// Per-user state, constant within a time interval.
#[derive(Debug, Clone, PartialEq)]
pub struct UserState {
    pub position: Point,
    pub direct_link_blocked: bool,
    pub interval_index: usize,
}

impl UserState {
    /// Uniform initial position, blockage drawn, interval 0.
    pub fn initial<R: Rng + ?Sized>(config: &ScenarioConfig, rng: &mut R) -> Self {
        Self {
            position: uniform_position(config, rng),
            direct_link_blocked: rng.random_bool(config.blockage_probability),
            interval_index: 0,
        }
    }
}

fn uniform_position<R: Rng + ?Sized>(config: &ScenarioConfig, rng: &mut R) -> Point {
    let mut p = [0.0; 3];
    for (a, slot) in p.iter_mut().enumerate() {
        let (lo, hi) = (config.area_min[a], config.area_max[a]);
        *slot = if hi > lo { rng.random_range(lo..=hi) } else { lo };
    }
    p
}

fn reflect(mut x: f64, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return lo;
    }
    let span = hi - lo;
    // Fold into [lo, lo + 2 span) then mirror the upper half.
    let mut t = (x - lo).rem_euclid(2.0 * span);
    if t > span {
        t = 2.0 * span - t;
    }
    x = lo + t;
    x
}

/// Advances one user by one interval: new position, fresh blockage draw.
pub fn step_scenario<R: Rng + ?Sized>(
    state: &UserState,
    config: &ScenarioConfig,
    rng: &mut R,
) -> UserState {
    let position = match config.mobility {
        Mobility::Uniform => uniform_position(config, rng),
        Mobility::Walk => {
            let theta = rng.random_range(0.0..2.0 * PI);
            let mut p = state.position;
            p[0] = reflect(p[0] + config.walk_step * theta.cos(), config.area_min[0], config.area_max[0]);
            p[1] = reflect(p[1] + config.walk_step * theta.sin(), config.area_min[1], config.area_max[1]);
            p
        }
    };
    UserState {
        position,
        direct_link_blocked: rng.random_bool(config.blockage_probability),
        interval_index: state.interval_index + 1,
    }
}

/// Raw link taps for one user during one interval.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    /// `[bs_antenna][ut_antenna][tap]`
    pub h_direct: Vec<Vec<Vec<Complex64>>>,
    /// `[ris][element][bs_antenna][tap]`
    pub h_bs_ris: Vec<Vec<Vec<Vec<Complex64>>>>,
    /// `[ris][element][ut_antenna][tap]`
    pub h_ris_ut: Vec<Vec<Vec<Vec<Complex64>>>>,
    /// Amplitude on every reflected element path.
    pub ris_gain: f64,
}

impl ChannelRealization {
    pub fn n_bs(&self) -> usize {
        self.h_direct.len()
    }

    pub fn n_ut(&self) -> usize {
        self.h_direct.first().map_or(0, Vec::len)
    }

    pub fn n_taps(&self) -> usize {
        self.h_direct
            .first()
            .and_then(|r| r.first())
            .map_or(0, Vec::len)
    }

    /// Zero channel with the given shape.
    pub fn zeros(n_bs: usize, n_ut: usize, n_ris: usize, elements: usize, taps: usize) -> Self {
        let z = Complex64::new(0.0, 0.0);
        Self {
            h_direct: vec![vec![vec![z; taps]; n_ut]; n_bs],
            h_bs_ris: vec![vec![vec![vec![z; taps]; n_bs]; elements]; n_ris],
            h_ris_ut: vec![vec![vec![vec![z; taps]; n_ut]; elements]; n_ris],
            ris_gain: 1.0,
        }
    }
}

fn distance(a: &Point, b: &Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Unit-modulus LoS term `exp(-j 2 pi d / lambda)`.
pub fn los_phase(distance: f64, wavelength: f64) -> Complex64 {
    Complex64::from_polar(1.0, -2.0 * PI * distance / wavelength)
}

fn cn<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (0.5 * variance).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(s * re, s * im)
}

fn rician_taps<R: Rng + ?Sized>(config: &ScenarioConfig, distance: f64, rng: &mut R) -> Vec<Complex64> {
    let k = config.los_nlos_power_ratio;
    let los_amp = (k / (k + 1.0)).sqrt();
    let nlos_amp = (1.0 / (k + 1.0)).sqrt();
    let g = los_phase(distance, config.carrier_wavelength);
    config
        .tap_powers
        .iter()
        .enumerate()
        .map(|(tap, &rho)| {
            let scatter = nlos_amp * cn(rng, rho);
            if tap == 0 {
                los_amp * g + scatter
            } else {
                scatter
            }
        })
        .collect()
}

fn check_distance(d: f64) -> Result<f64> {
    if d < 1e-9 {
        Err(Error::ZeroDistance)
    } else {
        Ok(d)
    }
}

fn bs_ris_links<R: Rng + ?Sized>(
    config: &ScenarioConfig,
    rng: &mut R,
) -> Result<Vec<Vec<Vec<Vec<Complex64>>>>> {
    let mut out = Vec::with_capacity(config.n_ris);
    for s in 0..config.n_ris {
        let mut elems = Vec::with_capacity(config.elements_per_ris());
        for row in 0..config.ris_rows {
            for col in 0..config.ris_cols {
                let e = config.element_position(s, row, col);
                let d = check_distance(distance(&config.bs_position, &e))?;
                elems.push(
                    (0..config.n_bs_antennas)
                        .map(|_| rician_taps(config, d, rng))
                        .collect(),
                );
            }
        }
        out.push(elems);
    }
    Ok(out)
}

fn user_links<R: Rng + ?Sized>(
    state: &UserState,
    config: &ScenarioConfig,
    h_bs_ris: Vec<Vec<Vec<Vec<Complex64>>>>,
    rng: &mut R,
) -> Result<ChannelRealization> {
    let d_direct = check_distance(distance(&config.bs_position, &state.position))?;
    for p in &config.ris_positions {
        check_distance(distance(p, &state.position))?;
    }
    let mut h_direct: Vec<Vec<Vec<Complex64>>> = (0..config.n_bs_antennas)
        .map(|_| {
            (0..config.n_ut_antennas_per_user)
                .map(|_| rician_taps(config, d_direct, rng))
                .collect()
        })
        .collect();
    if state.direct_link_blocked {
        for tap in h_direct.iter_mut().flatten().flatten() {
            *tap = Complex64::new(0.0, 0.0);
        }
    }
    let mut h_ris_ut = Vec::with_capacity(config.n_ris);
    for s in 0..config.n_ris {
        let mut elems = Vec::with_capacity(config.elements_per_ris());
        for row in 0..config.ris_rows {
            for col in 0..config.ris_cols {
                let e = config.element_position(s, row, col);
                let d = check_distance(distance(&e, &state.position))?;
                elems.push(
                    (0..config.n_ut_antennas_per_user)
                        .map(|_| rician_taps(config, d, rng))
                        .collect(),
                );
            }
        }
        h_ris_ut.push(elems);
    }
    Ok(ChannelRealization {
        h_direct,
        h_bs_ris,
        h_ris_ut,
        ris_gain: config.effective_ris_gain(),
    })
}

/// Draws every raw link of one user for the current interval.
pub fn generate_links<R: Rng + ?Sized>(
    state: &UserState,
    config: &ScenarioConfig,
    rng: &mut R,
) -> Result<ChannelRealization> {
    let bs_ris = bs_ris_links(config, rng)?;
    user_links(state, config, bs_ris, rng)
}

/// Multi-user variant: the BS-to-RIS links are physical and therefore
/// shared by every user; direct and RIS-to-user links are per user.
pub fn generate_multiuser_links<R: Rng + ?Sized>(
    states: &[UserState],
    config: &ScenarioConfig,
    rng: &mut R,
) -> Result<Vec<ChannelRealization>> {
    let bs_ris = bs_ris_links(config, rng)?;
    states
        .iter()
        .map(|s| user_links(s, config, bs_ris.clone(), rng))
        .collect()
}
