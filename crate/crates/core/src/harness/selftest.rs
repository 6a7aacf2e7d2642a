//! Quick built-in property checks plus a small deterministic experiment.

use num_complex::Complex64;
use rand::Rng;

use super::config::ExperimentSpec;
use super::experiment::{run_rows, MetricsRow};
use crate::agents::{compute_reward, RewardKind};
use crate::codec::{decode_frame, encode_frame, frame_mse, generate_source};
use crate::nn::{finite_diff_check, init_network, Activation, Target};
use crate::ofdm::{map_bits_to_streams, svd_subchannels, transmit_frame, StreamPlan, SvdDecomposition};
use crate::reconstruction::{detect_broken, inpaint, Reference};
use crate::ris_channel::CMatrix;
use crate::rng::stream;

#[derive(Debug, Clone)]
pub struct SelftestReport {
    pub checks: Vec<(String, bool)>,
    pub rows: Vec<MetricsRow>,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|(_, ok)| *ok)
    }
}

fn svd_check(seed: u64) -> bool {
    let mut rng = stream(seed, "selftest-svd");
    let cfr: Vec<CMatrix> = (0..200)
        .map(|_| CMatrix::from_fn(2, 2, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))))
        .collect();
    let Ok(svd) = svd_subchannels(&cfr) else { return false };
    cfr.iter().enumerate().all(|(k, h)| {
        let l = &svd.lambda[k];
        let mut d = CMatrix::zeros(2, 2);
        d[(0, 0)] = Complex64::new(l[0], 0.0);
        d[(1, 1)] = Complex64::new(l[1], 0.0);
        let rebuilt = &svd.u[k] * d * svd.v[k].adjoint();
        l[0] >= l[1] && l[1] >= 0.0 && (rebuilt - h).norm() <= 1e-9 * h.norm().max(1e-300)
    })
}

fn noiseless_link_check(seed: u64) -> bool {
    let mut rng = stream(seed, "selftest-link");
    let svd = SvdDecomposition::flat(1024, 2, 0.7);
    (0..5).all(|i| {
        let f = generate_source(&mut rng, i).expect("valid label");
        let enc = encode_frame(&f);
        [(0, 0), (0, 1), (1, 0)].iter().all(|&(b, o)| {
            let plan = StreamPlan::new(b, o).expect("valid plan");
            let tx = map_bits_to_streams(&enc.bits_background, &enc.bits_object, plan).expect("4096 bits");
            let rx = transmit_frame(&tx, &svd, f64::INFINITY, &mut rng).expect("matching shapes");
            rx.bits_background == enc.bits_background && rx.bits_object == enc.bits_object
        })
    })
}

fn codec_check(seed: u64) -> bool {
    let mut rng = stream(seed, "selftest-codec");
    (0..20).all(|i| {
        let f = generate_source(&mut rng, (i % 10) as u8).expect("valid label");
        let enc = encode_frame(&f);
        let dec = decode_frame(&enc.bits_background, &enc.bits_object, &f.object_mask).expect("2048 bits");
        frame_mse(&f.image, &dec.image).is_ok_and(|m| m <= 0.01)
    })
}

fn reward_check() -> bool {
    let close = |a: f64, b: f64| (a - b).abs() < 1e-12;
    close(compute_reward(RewardKind::Acc, 0.95, 0.01, 0.0, &[], false), 29.5)
        && close(compute_reward(RewardKind::Acc, 0.80, 0.01, 0.0, &[], false), -92.0)
        && close(compute_reward(RewardKind::Mse, 0.0, 0.1, 0.0, &[], false), 10.0)
        && close(compute_reward(RewardKind::Rate, 0.0, 0.1, 0.0, &[true; 4], true), -20.0)
        && compute_reward(RewardKind::Acc, 0.85, 0.01, 0.0, &[], false) < 0.0
}

fn gradient_check(seed: u64) -> bool {
    use Activation::*;
    let mut rng = stream(seed, "selftest-grad");
    let Ok(net) = init_network(&[6, 10, 8, 5], &[Relu, Relu, Linear], &mut rng) else { return false };
    let x: Vec<f64> = (0..6).map(|i| 0.3 + 0.1 * i as f64).collect();
    finite_diff_check(&net, &x, &Target::Selected { index: 2, value: 1.5 }).is_ok_and(|e| e <= 1e-4)
}

fn inpaint_check(seed: u64) -> bool {
    let mut rng = stream(seed, "selftest-inpaint");
    (0..10).all(|i| {
        let f = generate_source(&mut rng, (i % 10) as u8).expect("valid label");
        let enc = encode_frame(&f);
        let noise: Vec<u8> = (0..enc.bits_object.len()).map(|_| rng.random_range(0..2)).collect();
        let dec = decode_frame(&enc.bits_background, &noise, &f.object_mask).expect("2048 bits");
        let q = detect_broken(&dec, &f.object_mask, Reference::Frame(&f.image)).expect("same shape");
        let out = inpaint(&dec.image, &f.object_mask, &q);
        let before = frame_mse(&f.image, &dec.image).expect("same shape");
        let after = frame_mse(&f.image, &out.image).expect("same shape");
        after <= before
    })
}

/// Spec of the small experiment the self test runs.
pub fn selftest_spec(root_seed: u64) -> ExperimentSpec {
    let mut spec = ExperimentSpec::default();
    spec.scenario.seed = root_seed;
    spec.scenario.n_subcarriers = 1024;
    spec.scenario.warmup_intervals = 4;
    spec.experiment.n_intervals = 8;
    spec.experiment.n_seeds = 2;
    spec.experiment.penalty_enabled = true;
    spec.experiment.rewards = vec!["acc@0,mse@6".into()];
    spec
}

pub fn run_selftest(root_seed: u64) -> SelftestReport {
    let mut checks = vec![
        ("svd reconstruction".to_string(), svd_check(root_seed)),
        ("noiseless link round trip".to_string(), noiseless_link_check(root_seed)),
        ("codec floor".to_string(), codec_check(root_seed)),
        ("reward formulas".to_string(), reward_check()),
        ("gradient check".to_string(), gradient_check(root_seed)),
        ("inpainting improves".to_string(), inpaint_check(root_seed)),
    ];
    let spec = selftest_spec(root_seed);
    let (rows, err) = run_rows(&spec, spec.experiment.n_seeds);
    checks.push(("mini experiment".to_string(), err.is_none() && rows.len() == 16));
    SelftestReport { checks, rows }
}
