//! Gray-coded square QAM with unit average symbol energy.

use num_complex::Complex64;

/// Supported constellations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Modulation {
    Qam4,
    Qam16,
}

impl Modulation {
    pub fn bits_per_symbol(self) -> usize {
        match self {
            Modulation::Qam4 => 2,
            Modulation::Qam16 => 4,
        }
    }

    pub fn order(self) -> usize {
        1 << self.bits_per_symbol()
    }

    fn bits_per_axis(self) -> usize {
        self.bits_per_symbol() / 2
    }

    /// Amplitude normalization: 1/sqrt(2) for 4-QAM, 1/sqrt(10) for 16-QAM.
    fn scale(self) -> f64 {
        match self {
            Modulation::Qam4 => std::f64::consts::FRAC_1_SQRT_2,
            Modulation::Qam16 => 1.0 / 10f64.sqrt(),
        }
    }

    /// Gray-coded PAM level of one axis, before scaling.
    fn level(self, bits: &[u8]) -> f64 {
        match self {
            Modulation::Qam4 => {
                if bits[0] == 0 {
                    -1.0
                } else {
                    1.0
                }
            }
            // 00 -> -3, 01 -> -1, 11 -> 1, 10 -> 3
            Modulation::Qam16 => match (bits[0], bits[1]) {
                (0, 0) => -3.0,
                (0, _) => -1.0,
                (_, 0) => 3.0,
                _ => 1.0,
            },
        }
    }

    fn slice(self, x: f64, out: &mut Vec<u8>) {
        match self {
            Modulation::Qam4 => out.push(u8::from(x >= 0.0)),
            Modulation::Qam16 => {
                let bits = if x < -2.0 {
                    [0, 0]
                } else if x < 0.0 {
                    [0, 1]
                } else if x < 2.0 {
                    [1, 1]
                } else {
                    [1, 0]
                };
                out.extend_from_slice(&bits);
            }
        }
    }

    /// Maps bits (values 0/1) to symbols; the first half of each symbol's
    /// bits drives the in-phase axis. Trailing bits that do not fill a
    /// symbol are an error for the caller to avoid.
    pub fn modulate(self, bits: &[u8]) -> Vec<Complex64> {
        let b = self.bits_per_symbol();
        let a = self.bits_per_axis();
        debug_assert_eq!(bits.len() % b, 0);
        bits.chunks_exact(b)
            .map(|chunk| {
                Complex64::new(self.level(&chunk[..a]), self.level(&chunk[a..])) * self.scale()
            })
            .collect()
    }

    /// Minimum-distance detection (per-axis slicing is exact for square QAM).
    pub fn demodulate(self, symbols: &[Complex64]) -> Vec<u8> {
        let mut out = Vec::with_capacity(symbols.len() * self.bits_per_symbol());
        let s = self.scale();
        for y in symbols {
            self.slice(y.re / s, &mut out);
            self.slice(y.im / s, &mut out);
        }
        out
    }

    /// All constellation points, indexed by their bit label (MSB first).
    pub fn constellation(self) -> Vec<(Vec<u8>, Complex64)> {
        let b = self.bits_per_symbol();
        (0..self.order())
            .map(|label| {
                let bits: Vec<u8> = (0..b).map(|i| ((label >> (b - 1 - i)) & 1) as u8).collect();
                let sym = self.modulate(&bits)[0];
                (bits, sym)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_average_energy() {
        for m in [Modulation::Qam4, Modulation::Qam16] {
            let pts = m.constellation();
            let e: f64 = pts.iter().map(|(_, s)| s.norm_sqr()).sum::<f64>() / pts.len() as f64;
            assert!((e - 1.0).abs() < 1e-12, "{m:?} energy {e}");
        }
    }

    #[test]
    fn nearest_neighbours_differ_in_one_bit() {
        for m in [Modulation::Qam4, Modulation::Qam16] {
            let pts = m.constellation();
            let dmin = pts
                .iter()
                .flat_map(|a| pts.iter().map(move |b| (a.1 - b.1).norm()))
                .filter(|d| *d > 1e-9)
                .fold(f64::INFINITY, f64::min);
            for (ba, a) in &pts {
                for (bb, b) in &pts {
                    if ((a - b).norm() - dmin).abs() < 1e-9 {
                        let diff = ba.iter().zip(bb).filter(|(x, y)| x != y).count();
                        assert_eq!(diff, 1, "{m:?} {ba:?} vs {bb:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn qpsk_labels() {
        // 00, 01, 11, 10 walk around the square, one bit per step.
        let walk = [[0u8, 0], [0, 1], [1, 1], [1, 0], [0, 0]];
        for w in walk.windows(2) {
            let a = Modulation::Qam4.modulate(&w[0])[0];
            let b = Modulation::Qam4.modulate(&w[1])[0];
            assert!(((a - b).norm() - 2f64.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn exhaustive_twelve_bit_round_trip() {
        for m in [Modulation::Qam4, Modulation::Qam16] {
            for word in 0u32..(1 << 12) {
                let bits: Vec<u8> = (0..12).map(|i| ((word >> (11 - i)) & 1) as u8).collect();
                assert_eq!(m.demodulate(&m.modulate(&bits)), bits);
            }
        }
    }
}
