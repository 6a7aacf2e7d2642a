//! RIS steering, cascaded impulse response and per-subcarrier response.

use std::cell::RefCell;
use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::scenario::ChannelRealization;

/// Number of discrete phase levels; index `k` encodes `k * pi / 32`.
pub const PHASE_LEVELS: u8 = 64;

pub type CMatrix = DMatrix<Complex64>;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

pub fn phase_radians(index: u8) -> f64 {
    f64::from(index) * PI / 32.0
}

/// Row-controlled RIS state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RisConfig {
    /// `[ris][row]`, each in `0..64`.
    pub phase_index: Vec<Vec<u8>>,
    /// `[ris][row]`; gates adjustment, not reflection.
    pub row_in_use: Vec<Vec<bool>>,
}

impl RisConfig {
    pub fn new(n_ris: usize, rows: usize) -> Self {
        Self {
            phase_index: vec![vec![0; rows]; n_ris],
            row_in_use: vec![vec![true; rows]; n_ris],
        }
    }

    pub fn n_ris(&self) -> usize {
        self.phase_index.len()
    }

    pub fn rows(&self) -> usize {
        self.phase_index.first().map_or(0, Vec::len)
    }

    pub fn rows_in_use(&self) -> usize {
        self.row_in_use.iter().flatten().filter(|u| **u).count()
    }

    /// Shifts a row's phase by `delta` levels, modulo 64. Rows not in use
    /// are left untouched.
    pub fn apply_delta(&mut self, ris: usize, row: usize, delta: i32) {
        if self.row_in_use[ris][row] {
            let cur = i32::from(self.phase_index[ris][row]);
            self.phase_index[ris][row] = (cur + delta).rem_euclid(i32::from(PHASE_LEVELS)) as u8;
        }
    }
}

/// `[1, e^{j phi}, ..., e^{j (n-1) phi}]` with `phi = index * pi / 32`.
pub fn steering_vector(phase_index: u8, n_cols: usize) -> Result<Vec<Complex64>> {
    if phase_index >= PHASE_LEVELS {
        return Err(Error::OutOfRange(format!("phase index {phase_index} not in 0..64")));
    }
    // Reduce the exponent on the integer grid so every entry is exact to
    // the cos/sin of a single angle in [0, 2 pi).
    Ok((0..n_cols)
        .map(|c| {
            let k = (usize::from(phase_index) * c) % usize::from(PHASE_LEVELS);
            Complex64::from_polar(1.0, phase_radians(k as u8))
        })
        .collect())
}

/// Cascaded channel of one user.
#[derive(Debug, Clone)]
pub struct EffectiveChannel {
    /// `[bs_antenna][ut_antenna][tap]`, length `2L - 1`.
    pub cir: Vec<Vec<Vec<Complex64>>>,
    /// One `n_ut x n_bs` matrix per subcarrier.
    pub cfr: Vec<CMatrix>,
}

fn convolve(a: &[Complex64], b: &[Complex64], out: &mut [Complex64], scale: Complex64) {
    for (i, x) in a.iter().enumerate() {
        let sx = scale * x;
        for (j, y) in b.iter().enumerate() {
            out[i + j] += sx * y;
        }
    }
}

/// Combines raw links under a RIS configuration into the effective CIR
/// (`direct + gain * sum_s sum_m phi_{s,m} (h_BR * h_RU)`) and its CFR.
pub fn cascade(links: &ChannelRealization, ris: &RisConfig, n_subcarriers: usize) -> Result<EffectiveChannel> {
    let cir = cascade_cir(links, ris)?;
    let cfr = cir_matrix_to_cfr(&cir, n_subcarriers)?;
    Ok(EffectiveChannel { cir, cfr })
}

/// Time-domain part of [`cascade`].
pub fn cascade_cir(links: &ChannelRealization, ris: &RisConfig) -> Result<Vec<Vec<Vec<Complex64>>>> {
    let (n_bs, n_ut, taps) = (links.n_bs(), links.n_ut(), links.n_taps());
    if taps == 0 {
        return Err(Error::Dimension("empty tap sequences".into()));
    }
    if links.h_bs_ris.len() != ris.n_ris() || links.h_ris_ut.len() != ris.n_ris() {
        return Err(Error::Dimension(format!(
            "links cover {} surfaces, RIS config {}",
            links.h_bs_ris.len(),
            ris.n_ris()
        )));
    }
    let len = 2 * taps - 1;
    let zero = Complex64::new(0.0, 0.0);
    let mut cir = vec![vec![vec![zero; len]; n_ut]; n_bs];
    for i in 0..n_bs {
        for j in 0..n_ut {
            cir[i][j][..taps].copy_from_slice(&links.h_direct[i][j]);
        }
    }
    for (s, rows) in ris.phase_index.iter().enumerate() {
        let elements = links.h_bs_ris[s].len();
        if elements != links.h_ris_ut[s].len() || elements % rows.len().max(1) != 0 {
            return Err(Error::Dimension(format!(
                "surface {s}: {elements} elements do not tile {} rows",
                rows.len()
            )));
        }
        let cols = elements / rows.len();
        for (r, &idx) in rows.iter().enumerate() {
            let steer = steering_vector(idx, cols)?;
            for (c, phi) in steer.iter().enumerate() {
                let m = r * cols + c;
                let w = links.ris_gain * phi;
                for (i, out_i) in cir.iter_mut().enumerate() {
                    for (j, out) in out_i.iter_mut().enumerate() {
                        convolve(&links.h_bs_ris[s][m][i], &links.h_ris_ut[s][m][j], out, w);
                    }
                }
            }
        }
    }
    Ok(cir)
}

/// Reflected CIR of a single row at a given phase index, `[bs][ut][tap]`.
pub fn row_cir(links: &ChannelRealization, ris: usize, row: usize, rows: usize, phase_index: u8) -> Result<Vec<Vec<Vec<Complex64>>>> {
    let (n_bs, n_ut, taps) = (links.n_bs(), links.n_ut(), links.n_taps());
    let elements = links.h_bs_ris.get(ris).map_or(0, Vec::len);
    if rows == 0 || elements % rows != 0 || row >= rows {
        return Err(Error::Dimension(format!("row {row} of {rows} on a {elements}-element surface")));
    }
    let cols = elements / rows;
    let zero = Complex64::new(0.0, 0.0);
    let mut cir = vec![vec![vec![zero; 2 * taps - 1]; n_ut]; n_bs];
    for (c, phi) in steering_vector(phase_index, cols)?.iter().enumerate() {
        let m = row * cols + c;
        let w = links.ris_gain * phi;
        for (i, out_i) in cir.iter_mut().enumerate() {
            for (j, out) in out_i.iter_mut().enumerate() {
                convolve(&links.h_bs_ris[ris][m][i], &links.h_ris_ut[ris][m][j], out, w);
            }
        }
    }
    Ok(cir)
}

/// K-point DFT of a tap sequence, zero padded.
pub fn cir_to_cfr(cir: &[Complex64], n_subcarriers: usize) -> Result<Vec<Complex64>> {
    if cir.len() > n_subcarriers {
        return Err(Error::Dimension(format!(
            "{} taps exceed {n_subcarriers} subcarriers",
            cir.len()
        )));
    }
    let mut buf = vec![Complex64::new(0.0, 0.0); n_subcarriers];
    buf[..cir.len()].copy_from_slice(cir);
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(n_subcarriers).process(&mut buf));
    Ok(buf)
}

/// Per-subcarrier `n_ut x n_bs` matrices from a `[bs][ut][tap]` CIR.
pub fn cir_matrix_to_cfr(cir: &[Vec<Vec<Complex64>>], n_subcarriers: usize) -> Result<Vec<CMatrix>> {
    let n_bs = cir.len();
    let n_ut = cir.first().map_or(0, Vec::len);
    let mut cfr = vec![CMatrix::zeros(n_ut, n_bs); n_subcarriers];
    for (i, row) in cir.iter().enumerate() {
        for (j, taps) in row.iter().enumerate() {
            for (k, v) in cir_to_cfr(taps, n_subcarriers)?.into_iter().enumerate() {
                cfr[k][(j, i)] = v;
            }
        }
    }
    Ok(cfr)
}
