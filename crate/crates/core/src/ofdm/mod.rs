//! SVD-precoded MIMO-OFDM transport of the two semantic bit streams.
//!
//! One image occupies one OFDM symbol: each of the two spatial streams
//! carries one symbol per subcarrier. With both parts on the same stream
//! that stream runs 16-QAM and the other is idle; otherwise each part gets
//! its own stream at 4-QAM. Either way an image costs 4096 bits.

mod qam;
mod svd;
mod time_domain;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub use qam::Modulation;
pub use svd::{singular_values, svd_subchannels, SvdDecomposition};
pub use time_domain::{frequency_domain_reference, simulate_time_domain, time_domain_reference};

use crate::error::{Error, Result};

pub const BITS_PER_PART: usize = 2048;
pub const BITS_PER_IMAGE: usize = 2 * BITS_PER_PART;
pub const N_STREAMS: usize = 2;

/// Stream choice of each semantic part (`0` is the strongest subchannel).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamPlan {
    pub background: usize,
    pub object: usize,
}

impl StreamPlan {
    pub fn new(background: usize, object: usize) -> Result<Self> {
        if background >= N_STREAMS || object >= N_STREAMS {
            return Err(Error::OutOfRange(format!(
                "stream indices ({background}, {object}) must be below {N_STREAMS}"
            )));
        }
        Ok(Self { background, object })
    }

    pub fn is_shared(&self) -> bool {
        self.background == self.object
    }

    pub fn modulation(&self) -> Modulation {
        if self.is_shared() {
            Modulation::Qam16
        } else {
            Modulation::Qam4
        }
    }
}

/// Symbols (and their source bits) ready for transmission.
#[derive(Debug, Clone)]
pub struct TxFrame {
    pub plan: StreamPlan,
    pub streams: [Vec<Complex64>; N_STREAMS],
    pub stream_bits: [Vec<u8>; N_STREAMS],
}

/// Demodulated output of one frame.
#[derive(Debug, Clone)]
pub struct RxFrame {
    pub bits_background: Vec<u8>,
    pub bits_object: Vec<u8>,
    /// Gain-compensated symbols per stream, before slicing.
    pub equalized: [Vec<Complex64>; N_STREAMS],
    pub stream_errors: [usize; N_STREAMS],
}

impl RxFrame {
    pub fn bit_errors(&self) -> usize {
        self.stream_errors.iter().sum()
    }
}

/// Places the two parts on the streams chosen by `plan`.
pub fn map_bits_to_streams(
    bits_background: &[u8],
    bits_object: &[u8],
    plan: StreamPlan,
) -> Result<TxFrame> {
    if bits_background.len() != BITS_PER_PART || bits_object.len() != BITS_PER_PART {
        return Err(Error::Dimension(format!(
            "parts carry {} and {} bits, expected {BITS_PER_PART} each",
            bits_background.len(),
            bits_object.len()
        )));
    }
    let modulation = plan.modulation();
    let mut stream_bits: [Vec<u8>; N_STREAMS] = Default::default();
    if plan.is_shared() {
        let mut joined = Vec::with_capacity(BITS_PER_IMAGE);
        joined.extend_from_slice(bits_background);
        joined.extend_from_slice(bits_object);
        stream_bits[plan.background] = joined;
    } else {
        stream_bits[plan.background] = bits_background.to_vec();
        stream_bits[plan.object] = bits_object.to_vec();
    }
    let streams = [modulation.modulate(&stream_bits[0]), modulation.modulate(&stream_bits[1])];
    Ok(TxFrame { plan, streams, stream_bits })
}

/// Noise variance per complex symbol for unit symbol energy.
pub fn noise_variance(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

fn complex_noise<R: Rng + ?Sized>(rng: &mut R, sigma: f64) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * sigma
}

/// Sends one frame over the parallel subchannels `x -> lambda x + n`,
/// compensates the gain and slices. Noise is drawn stream by stream in
/// subcarrier order, so output is a pure function of the rng state.
pub fn transmit_frame<R: Rng + ?Sized>(
    frame: &TxFrame,
    svd: &SvdDecomposition,
    snr_db: f64,
    rng: &mut R,
) -> Result<RxFrame> {
    if !snr_db.is_finite() && snr_db != f64::INFINITY {
        return Err(Error::NonFinite("snr_db".into()));
    }
    let sigma = (0.5 * noise_variance(snr_db)).sqrt();
    let mut equalized: [Vec<Complex64>; N_STREAMS] = Default::default();
    for (d, symbols) in frame.streams.iter().enumerate() {
        if symbols.is_empty() {
            continue;
        }
        if d >= svd.n_streams() {
            return Err(Error::Dimension(format!(
                "plan uses stream {d} but the channel offers {}",
                svd.n_streams()
            )));
        }
        if symbols.len() > svd.n_subcarriers() {
            return Err(Error::Dimension(format!(
                "{} symbols exceed {} subcarriers",
                symbols.len(),
                svd.n_subcarriers()
            )));
        }
        equalized[d] = symbols
            .iter()
            .enumerate()
            .map(|(k, x)| {
                let gain = svd.lambda[k][d];
                let y = gain * x + complex_noise(rng, sigma);
                if gain > 1e-12 {
                    y / gain
                } else {
                    y
                }
            })
            .collect();
    }

    let modulation = frame.plan.modulation();
    let rx_bits = [modulation.demodulate(&equalized[0]), modulation.demodulate(&equalized[1])];
    let mut stream_errors = [0usize; N_STREAMS];
    for d in 0..N_STREAMS {
        stream_errors[d] = rx_bits[d]
            .iter()
            .zip(&frame.stream_bits[d])
            .filter(|(a, b)| a != b)
            .count();
    }

    let plan = frame.plan;
    let (bits_background, bits_object) = if plan.is_shared() {
        let s = &rx_bits[plan.background];
        (s[..BITS_PER_PART].to_vec(), s[BITS_PER_PART..].to_vec())
    } else {
        (rx_bits[plan.background].clone(), rx_bits[plan.object].clone())
    };
    Ok(RxFrame { bits_background, bits_object, equalized, stream_errors })
}

/// Average spectral efficiency over subcarriers, summed over subchannels.
pub fn sum_rate(svd: &SvdDecomposition, snr_db: f64) -> f64 {
    sum_rate_from_gains(&svd.lambda, snr_db)
}

pub fn sum_rate_from_gains(lambda: &[Vec<f64>], snr_db: f64) -> f64 {
    if lambda.is_empty() {
        return 0.0;
    }
    let gamma = 10f64.powf(snr_db / 10.0);
    let total: f64 = lambda
        .iter()
        .flatten()
        .map(|l| (1.0 + l * l * gamma).log2())
        .sum();
    total / lambda.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;

    fn random_bits(n: usize, rng: &mut impl Rng) -> Vec<u8> {
        (0..n).map(|_| rng.random_range(0..2u8)).collect()
    }

    #[test]
    fn split_plan_energy_and_counts() {
        let mut rng = stream(1, "bits");
        let (b, o) = (random_bits(2048, &mut rng), random_bits(2048, &mut rng));
        let tx = map_bits_to_streams(&b, &o, StreamPlan::new(1, 0).unwrap()).unwrap();
        for s in &tx.streams {
            assert_eq!(s.len(), 1024);
        }
        // Average over the full constellation is exactly one; check a
        // balanced exhaustive sequence rather than the random one.
        let all: Vec<u8> = (0..4u8).flat_map(|w| [w >> 1, w & 1]).collect();
        let syms = Modulation::Qam4.modulate(&all);
        let e = syms.iter().map(|s| s.norm_sqr()).sum::<f64>() / syms.len() as f64;
        assert!((e - 1.0).abs() < 1e-12);
        for s in &tx.streams {
            assert!(s.iter().all(|x| (x.norm_sqr() - 1.0).abs() < 1e-12));
        }
    }

    #[test]
    fn shared_plan_idles_other_stream() {
        let mut rng = stream(2, "bits");
        let (b, o) = (random_bits(2048, &mut rng), random_bits(2048, &mut rng));
        let tx = map_bits_to_streams(&b, &o, StreamPlan::new(0, 0).unwrap()).unwrap();
        assert_eq!(tx.streams[0].len(), 1024);
        assert!(tx.streams[1].is_empty());
        assert_eq!(&tx.stream_bits[0][..2048], &b[..]);
        assert_eq!(&tx.stream_bits[0][2048..], &o[..]);
    }

    #[test]
    fn bit_count_mismatch() {
        assert!(map_bits_to_streams(&[0; 10], &[0; 2048], StreamPlan::new(0, 1).unwrap()).is_err());
        assert!(StreamPlan::new(2, 0).is_err());
    }

    #[test]
    fn noiseless_identity() {
        let mut rng = stream(3, "bits");
        let (b, o) = (random_bits(2048, &mut rng), random_bits(2048, &mut rng));
        let svd = SvdDecomposition::flat(1024, 2, 1.0);
        for plan in [(0, 0), (1, 1), (0, 1), (1, 0)] {
            let plan = StreamPlan::new(plan.0, plan.1).unwrap();
            let tx = map_bits_to_streams(&b, &o, plan).unwrap();
            let rx = transmit_frame(&tx, &svd, f64::INFINITY, &mut rng).unwrap();
            assert_eq!(rx.bit_errors(), 0);
            assert_eq!(rx.bits_background, b);
            assert_eq!(rx.bits_object, o);
        }
    }

    #[test]
    fn dead_stream_is_chance_level() {
        let mut rng = stream(4, "bits");
        let (b, o) = (random_bits(2048, &mut rng), random_bits(2048, &mut rng));
        let mut svd = SvdDecomposition::flat(1024, 2, 1.0);
        for l in &mut svd.lambda {
            l[1] = 0.0;
        }
        let tx = map_bits_to_streams(&b, &o, StreamPlan::new(0, 1).unwrap()).unwrap();
        let rx = transmit_frame(&tx, &svd, 3.0, &mut rng).unwrap();
        let ber = rx.stream_errors[1] as f64 / 2048.0;
        assert!((ber - 0.5).abs() <= 0.03, "ber {ber}");
    }

    #[test]
    fn sum_rate_examples() {
        let dead = SvdDecomposition::flat(4, 2, 0.0);
        assert_eq!(sum_rate(&dead, 3.0), 0.0);
        let unit = SvdDecomposition::flat(1, 2, 1.0);
        assert!((sum_rate(&unit, 0.0) - 2.0).abs() < 1e-12);
        let double = SvdDecomposition::flat(1, 2, 2.0);
        assert!(sum_rate(&double, 0.0) > sum_rate(&unit, 0.0));
    }
}
