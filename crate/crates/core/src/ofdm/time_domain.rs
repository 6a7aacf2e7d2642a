//! Sample-level OFDM chain used to validate the per-subcarrier model.

use nalgebra::DVector;
use num_complex::Complex64;
use rustfft::FftPlanner;

use super::SvdDecomposition;
use crate::error::{Error, Result};
use crate::ris_channel::EffectiveChannel;

/// Noiseless per-subcarrier model: `lambda_{k,d} x_{k,d}`.
pub fn frequency_domain_reference(symbols: &[Vec<Complex64>], svd: &SvdDecomposition) -> Vec<Vec<Complex64>> {
    symbols
        .iter()
        .enumerate()
        .map(|(d, s)| s.iter().enumerate().map(|(k, x)| x * svd.lambda[k][d]).collect())
        .collect()
}

/// Like [`simulate_time_domain`], but refuses a prefix shorter than the
/// channel spread.
pub fn time_domain_reference(
    symbols: &[Vec<Complex64>],
    channel: &EffectiveChannel,
    svd: &SvdDecomposition,
    cp_length: usize,
) -> Result<Vec<Vec<Complex64>>> {
    let taps = channel.cir.first().and_then(|r| r.first()).map_or(0, Vec::len);
    if cp_length + 1 < taps {
        return Err(Error::InsufficientCp { cp: cp_length, taps });
    }
    simulate_time_domain(symbols, channel, svd, cp_length)
}

/// Precode, inverse transform, add prefix, convolve every antenna pair with
/// its taps, strip the prefix, forward transform and combine. Each stream
/// holds one symbol per subcarrier (or is empty when idle). No check on the
/// prefix length, so a short prefix shows up as model mismatch.
pub fn simulate_time_domain(
    symbols: &[Vec<Complex64>],
    channel: &EffectiveChannel,
    svd: &SvdDecomposition,
    cp_length: usize,
) -> Result<Vec<Vec<Complex64>>> {
    let k_len = svd.n_subcarriers();
    let n_bs = channel.cir.len();
    let n_ut = channel.cir.first().map_or(0, Vec::len);
    let zero = Complex64::new(0.0, 0.0);
    if symbols.len() > svd.n_streams() {
        return Err(Error::Dimension("more symbol streams than subchannels".into()));
    }
    if symbols.iter().any(|s| !s.is_empty() && s.len() != k_len) {
        return Err(Error::Dimension(format!("streams must carry {k_len} symbols")));
    }
    if channel.cfr.len() != k_len {
        return Err(Error::Dimension("decomposition and channel disagree on subcarriers".into()));
    }

    let mut planner = FftPlanner::<f64>::new();
    let ifft = planner.plan_fft_inverse(k_len);
    let fft = planner.plan_fft_forward(k_len);

    // Precoded frequency-domain signal per BS antenna.
    let mut tx_freq = vec![vec![zero; k_len]; n_bs];
    for k in 0..k_len {
        let x = DVector::from_iterator(
            svd.v[k].ncols(),
            (0..svd.v[k].ncols()).map(|d| symbols.get(d).and_then(|s| s.get(k)).copied().unwrap_or(zero)),
        );
        let s = &svd.v[k] * x;
        for i in 0..n_bs {
            tx_freq[i][k] = s[i];
        }
    }

    // OFDM modulation with prefix; the unitary-free convention puts 1/K on
    // the inverse so forward(inverse(x)) = x.
    let tx_time: Vec<Vec<Complex64>> = tx_freq
        .into_iter()
        .map(|mut f| {
            ifft.process(&mut f);
            let scale = 1.0 / k_len as f64;
            f.iter_mut().for_each(|z| *z *= scale);
            let mut with_cp = Vec::with_capacity(k_len + cp_length);
            with_cp.extend_from_slice(&f[k_len - cp_length.min(k_len)..]);
            with_cp.extend_from_slice(&f);
            with_cp
        })
        .collect();

    let total = k_len + cp_length.min(k_len);
    let cp = total - k_len;
    let mut rx_freq = vec![vec![zero; k_len]; n_ut];
    for (j, rx) in rx_freq.iter_mut().enumerate() {
        let mut r = vec![zero; total];
        for (i, t) in tx_time.iter().enumerate() {
            let h = &channel.cir[i][j];
            for (n, out) in r.iter_mut().enumerate() {
                for (l, hl) in h.iter().enumerate() {
                    if n >= l {
                        *out += hl * t[n - l];
                    }
                }
            }
        }
        rx.copy_from_slice(&r[cp..]);
        fft.process(rx);
    }

    let n_streams = symbols.len();
    let mut out = vec![Vec::with_capacity(k_len); n_streams];
    for k in 0..k_len {
        let y = DVector::from_iterator(n_ut, (0..n_ut).map(|j| rx_freq[j][k]));
        let combined = svd.u[k].adjoint() * y;
        for (d, o) in out.iter_mut().enumerate() {
            if !symbols[d].is_empty() {
                o.push(combined[d]);
            }
        }
    }
    Ok(out)
}
