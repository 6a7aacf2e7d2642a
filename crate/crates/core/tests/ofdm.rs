use num_complex::Complex64;
use rand::Rng;
use ris_semcom::ofdm::{
    frequency_domain_reference, map_bits_to_streams, noise_variance, simulate_time_domain, singular_values, sum_rate,
    svd_subchannels, time_domain_reference, transmit_frame, Modulation, StreamPlan, SvdDecomposition,
};
use ris_semcom::ris_channel::{cascade, CMatrix, RisConfig, PHASE_LEVELS};
use ris_semcom::rng::stream;
use ris_semcom::scenario::{generate_links, ScenarioConfig, UserState};
use ris_semcom::Error;

fn random_matrix<R: Rng>(rng: &mut R) -> CMatrix {
    CMatrix::from_fn(2, 2, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
}

fn random_bits<R: Rng>(rng: &mut R, n: usize) -> Vec<u8> {
    (0..n).map(|_| rng.random_range(0..2)).collect()
}

/// Singular values of a 2x2 matrix from the eigenvalues of `H^H H`.
fn closed_form_singular_values(h: &CMatrix) -> [f64; 2] {
    let g = h.adjoint() * h;
    let (a, d) = (g[(0, 0)].re, g[(1, 1)].re);
    let b = g[(0, 1)].norm_sqr();
    let disc = ((a - d) * (a - d) / 4.0 + b).sqrt();
    let mid = (a + d) / 2.0;
    [(mid + disc).sqrt(), (mid - disc).max(0.0).sqrt()]
}

/// Gaussian tail by composite Simpson integration of the density.
fn q_function(x: f64) -> f64 {
    let upper = x + 12.0;
    let n = 20_000;
    let h = (upper - x) / n as f64;
    let pdf = |t: f64| (-t * t / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut s = pdf(x) + pdf(upper);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * pdf(x + i as f64 * h);
    }
    s * h / 3.0
}

#[test]
fn svd_reconstructs_random_channels() {
    let mut rng = stream(31, "svd");
    let cfr: Vec<CMatrix> = (0..1000).map(|_| random_matrix(&mut rng)).collect();
    let svd = svd_subchannels(&cfr).unwrap();
    for (k, h) in cfr.iter().enumerate() {
        let l = &svd.lambda[k];
        assert!(l[0] >= l[1] && l[1] >= 0.0);
        let mut d = CMatrix::zeros(2, 2);
        d[(0, 0)] = Complex64::new(l[0], 0.0);
        d[(1, 1)] = Complex64::new(l[1], 0.0);
        let rebuilt = &svd.u[k] * d * svd.v[k].adjoint();
        assert!((rebuilt - h).norm() <= 1e-9 * h.norm());
        let eye = CMatrix::identity(2, 2);
        assert!((svd.u[k].adjoint() * &svd.u[k] - &eye).norm() < 1e-9);
        assert!((svd.v[k].adjoint() * &svd.v[k] - &eye).norm() < 1e-9);
        let want = closed_form_singular_values(h);
        assert!((l[0] - want[0]).abs() < 1e-9 && (l[1] - want[1]).abs() < 1e-6);
        let sv = singular_values(h);
        assert!((sv[0] - want[0]).abs() < 1e-9 && (sv[1] - want[1]).abs() < 1e-6);
    }
}

#[test]
fn rank_deficient_channel_has_zero_second_value() {
    let row = [Complex64::new(0.6, 0.2), Complex64::new(-0.3, 0.9)];
    let h = CMatrix::from_fn(2, 2, |i, j| row[j] * if i == 0 { 1.0 } else { 2.0 });
    let sv = singular_values(&h);
    assert!(sv[1].abs() < 1e-9);
}

fn scenario_channel(seed: u64) -> (ris_semcom::ris_channel::EffectiveChannel, SvdDecomposition) {
    let cfg = ScenarioConfig { n_subcarriers: 64, blockage_probability: 0.0, ..ScenarioConfig::default() };
    let mut rng = stream(seed, "time-domain");
    let user = UserState::initial(&cfg, &mut rng);
    let links = generate_links(&user, &cfg, &mut rng).unwrap();
    let mut ris = RisConfig::new(cfg.n_ris, cfg.ris_rows);
    for p in ris.phase_index.iter_mut().flatten() {
        *p = rng.random_range(0..PHASE_LEVELS);
    }
    let eff = cascade(&links, &ris, cfg.n_subcarriers).unwrap();
    let svd = svd_subchannels(&eff.cfr).unwrap();
    (eff, svd)
}

#[test]
fn time_domain_chain_matches_subcarrier_model() {
    for seed in 0..100 {
        let (eff, svd) = scenario_channel(seed);
        let mut rng = stream(seed, "symbols");
        let symbols: Vec<Vec<Complex64>> =
            (0..2).map(|_| Modulation::Qam4.modulate(&random_bits(&mut rng, 128))).collect();
        let td = time_domain_reference(&symbols, &eff, &svd, 16).unwrap();
        let fd = frequency_domain_reference(&symbols, &svd);
        let scale = fd.iter().flatten().map(|v| v.norm()).fold(0.0, f64::max);
        for (a, b) in td.iter().flatten().zip(fd.iter().flatten()) {
            assert!((a - b).norm() <= 1e-6 * scale, "seed {seed}");
        }
    }
}

#[test]
fn transmit_frame_matches_time_domain() {
    let cfg = ScenarioConfig { blockage_probability: 0.0, ..ScenarioConfig::default() };
    let mut rng = stream(33, "tx-vs-td");
    for _ in 0..5 {
        let user = UserState::initial(&cfg, &mut rng);
        let links = generate_links(&user, &cfg, &mut rng).unwrap();
        let eff = cascade(&links, &RisConfig::new(cfg.n_ris, cfg.ris_rows), cfg.n_subcarriers).unwrap();
        let svd = svd_subchannels(&eff.cfr).unwrap();
        let tx = map_bits_to_streams(&random_bits(&mut rng, 2048), &random_bits(&mut rng, 2048), StreamPlan::new(0, 1).unwrap()).unwrap();
        let rx = transmit_frame(&tx, &svd, f64::INFINITY, &mut rng).unwrap();
        let td = time_domain_reference(&tx.streams, &eff, &svd, cfg.cp_length).unwrap();
        for d in 0..2 {
            for k in 0..cfg.n_subcarriers {
                let want = td[d][k];
                let got = rx.equalized[d][k] * svd.lambda[k][d];
                assert!((got - want).norm() <= 1e-6 * want.norm().max(1e-3));
            }
        }
        assert_eq!(rx.bit_errors(), 0);
    }
}

#[test]
fn short_prefix_breaks_equivalence() {
    let (eff, svd) = scenario_channel(7);
    let mut rng = stream(7, "cp");
    let symbols: Vec<Vec<Complex64>> = (0..2).map(|_| Modulation::Qam4.modulate(&random_bits(&mut rng, 128))).collect();
    assert!(matches!(time_domain_reference(&symbols, &eff, &svd, 1), Err(Error::InsufficientCp { .. })));
    let td = simulate_time_domain(&symbols, &eff, &svd, 0).unwrap();
    let fd = frequency_domain_reference(&symbols, &svd);
    let scale = fd.iter().flatten().map(|v| v.norm()).fold(0.0, f64::max);
    let worst = td.iter().flatten().zip(fd.iter().flatten()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    assert!(worst > 1e-3 * scale, "mismatch {worst}");
}

#[test]
fn qpsk_ber_matches_q_function() {
    let mut rng = stream(34, "ber");
    let svd = SvdDecomposition::flat(1024, 2, 1.0);
    let plan = StreamPlan::new(0, 1).unwrap();
    let (mut errors, mut bits) = (0usize, 0usize);
    while bits < 1_000_000 {
        let tx = map_bits_to_streams(&random_bits(&mut rng, 2048), &random_bits(&mut rng, 2048), plan).unwrap();
        let rx = transmit_frame(&tx, &svd, 3.0, &mut rng).unwrap();
        errors += rx.bit_errors();
        bits += 4096;
    }
    let ber = errors as f64 / bits as f64;
    let want = q_function(10f64.powf(0.3).sqrt());
    assert!((want - 0.0786).abs() < 5e-4);
    assert!((ber - want).abs() <= 0.1 * want, "ber {ber} vs {want}");
}

#[test]
fn noise_power_matches_snr() {
    let mut rng = stream(35, "noise");
    let svd = SvdDecomposition::flat(1024, 2, 1.0);
    let plan = StreamPlan::new(0, 1).unwrap();
    let (mut power, mut n) = (0.0, 0usize);
    for _ in 0..100 {
        let tx = map_bits_to_streams(&random_bits(&mut rng, 2048), &random_bits(&mut rng, 2048), plan).unwrap();
        let rx = transmit_frame(&tx, &svd, 3.0, &mut rng).unwrap();
        for d in 0..2 {
            for (y, x) in rx.equalized[d].iter().zip(&tx.streams[d]) {
                power += (y - x).norm_sqr();
                n += 1;
            }
        }
    }
    let measured = power / n as f64;
    assert!((measured - noise_variance(3.0)).abs() < 0.01 * noise_variance(3.0));
}

#[test]
fn constellations_are_gray_and_unit_energy() {
    for m in [Modulation::Qam4, Modulation::Qam16] {
        let pts = m.constellation();
        assert_eq!(pts.len(), m.order());
        let energy: f64 = pts.iter().map(|(_, p)| p.norm_sqr()).sum::<f64>() / pts.len() as f64;
        assert!((energy - 1.0).abs() < 1e-12);
        let dmin = pts
            .iter()
            .enumerate()
            .flat_map(|(i, a)| pts[i + 1..].iter().map(move |b| (a.1 - b.1).norm()))
            .fold(f64::INFINITY, f64::min);
        for (i, (ba, a)) in pts.iter().enumerate() {
            for (bb, b) in &pts[i + 1..] {
                if ((a - b).norm() - dmin).abs() < 1e-9 {
                    let diff = ba.iter().zip(bb).filter(|(x, y)| x != y).count();
                    assert_eq!(diff, 1, "{m:?} neighbours {ba:?} {bb:?}");
                }
            }
        }
        let bits: Vec<u8> = pts.iter().flat_map(|(b, _)| b.clone()).collect();
        assert_eq!(m.demodulate(&m.modulate(&bits)), bits);
    }
}

#[test]
fn plans_pick_modulation_and_streams() {
    let mut rng = stream(36, "plans");
    let bg = random_bits(&mut rng, 2048);
    let ob = random_bits(&mut rng, 2048);
    let shared = map_bits_to_streams(&bg, &ob, StreamPlan::new(1, 1).unwrap()).unwrap();
    assert_eq!(shared.plan.modulation(), Modulation::Qam16);
    assert!(shared.streams[0].is_empty());
    assert_eq!(shared.streams[1].len(), 1024);
    let split = map_bits_to_streams(&bg, &ob, StreamPlan::new(1, 0).unwrap()).unwrap();
    assert_eq!(split.plan.modulation(), Modulation::Qam4);
    assert_eq!(split.stream_bits[0], ob);
    assert_eq!(split.stream_bits[1], bg);
    assert!(StreamPlan::new(2, 0).is_err());
    assert!(map_bits_to_streams(&bg[..100], &ob, StreamPlan::new(0, 1).unwrap()).is_err());
}

#[test]
fn noiseless_round_trip_every_plan() {
    let mut rng = stream(37, "roundtrip");
    let svd = SvdDecomposition::flat(1024, 2, 0.3);
    for (b, o) in [(0, 0), (1, 1), (0, 1), (1, 0)] {
        let bg = random_bits(&mut rng, 2048);
        let ob = random_bits(&mut rng, 2048);
        let tx = map_bits_to_streams(&bg, &ob, StreamPlan::new(b, o).unwrap()).unwrap();
        let rx = transmit_frame(&tx, &svd, f64::INFINITY, &mut rng).unwrap();
        assert_eq!(rx.bits_background, bg);
        assert_eq!(rx.bits_object, ob);
    }
}

#[test]
fn sum_rate_by_hand() {
    let mut svd = SvdDecomposition::flat(2, 2, 1.0);
    svd.lambda = vec![vec![2.0, 1.0], vec![1.0, 0.0]];
    let g = 10f64.powf(0.3);
    let want = ((1.0 + 4.0 * g).log2() + (1.0 + g).log2() + (1.0 + g).log2()) / 2.0;
    assert!((sum_rate(&svd, 3.0) - want).abs() < 1e-12);
}
