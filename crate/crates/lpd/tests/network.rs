mod support;

use listrecon::{EventList, Grid, Image2D};
use listrecon_lpd::{
    dual_module_forward, lmpd_backward, lmpd_forward, primal_module_forward, Mode, NetOperator,
    NetworkConfig, NetworkParams,
};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;
use support::{projector, random_events, random_image, rng};

fn small() -> NetworkConfig {
    NetworkConfig::default()
        .with_phases(2)
        .with_channels(vec![2, 8, 16, 8, 1])
}

fn perturbed(config: &NetworkConfig, seed: u64) -> NetworkParams {
    let mut params = NetworkParams::init(config, seed).unwrap();
    for (i, v) in params.running_stats.iter_mut().enumerate() {
        *v += 0.05 * ((i % 5) as f64);
    }
    params
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn dual_module_commutes_with_event_permutation(seed in 0u64..1000, n in 1usize..40) {
        let params = NetworkParams::init(&small(), seed).unwrap();
        let mut r = rng(seed);
        let h: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
        let af: Vec<f64> = (0..n).map(|_| r.random_range(0.0..2.0)).collect();
        let g = vec![1.0; n];
        let out = dual_module_forward(&params, 1, &h, &af, &g).unwrap();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut r);
        let hp: Vec<f64> = perm.iter().map(|&i| h[i]).collect();
        let afp: Vec<f64> = perm.iter().map(|&i| af[i]).collect();
        let outp = dual_module_forward(&params, 1, &hp, &afp, &g).unwrap();
        for (k, &i) in perm.iter().enumerate() {
            prop_assert_eq!(outp[k], out[i]);
        }
    }

    #[test]
    fn output_is_invariant_to_event_order(seed in 0u64..1000) {
        let p = projector(16);
        let mut r = rng(seed);
        let events = random_events(&p, 60, &mut r);
        let mut shuffled = events.events().to_vec();
        shuffled.shuffle(&mut r);
        let shuffled = EventList::new(shuffled);
        let params = perturbed(&small(), seed);
        for mode in [Mode::Eval, Mode::Train] {
            let a = lmpd_forward(&params, &NetOperator::new(&p, &events).unwrap(), mode, false).unwrap();
            let b = lmpd_forward(&params, &NetOperator::new(&p, &shuffled).unwrap(), mode, false).unwrap();
            let scale = a.output.values().iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
            for (x, y) in a.output.values().iter().zip(b.output.values()) {
                prop_assert!((x - y).abs() <= 1e-10 * scale, "{x} vs {y}");
            }
        }
    }
}

#[test]
fn phase_outputs_stay_bounded() {
    let p = projector(32);
    for seed in 0..3 {
        let mut r = rng(seed);
        let events = random_events(&p, 500, &mut r);
        let op = NetOperator::new(&p, &events).unwrap();
        let params = NetworkParams::init(&NetworkConfig::default().with_phases(4), seed).unwrap();
        for mode in [Mode::Eval, Mode::Train] {
            let out = lmpd_forward(&params, &op, mode, false).unwrap();
            assert_eq!(out.phase_outputs.len(), 4);
            for f in &out.phase_outputs {
                assert!(f.all_finite());
                assert!(f.values().iter().all(|v| v.abs() <= 1e6));
            }
            assert_eq!(&out.output, out.phase_outputs.last().unwrap());
        }
    }
}

#[test]
fn smoke_run_on_a_toy_instance() {
    let p = projector(32);
    let mut r = rng(11);
    let events = random_events(&p, 500, &mut r);
    let op = NetOperator::new(&p, &events).unwrap();
    let params = NetworkParams::init(&NetworkConfig::default(), 11).unwrap();
    let out = lmpd_forward(&params, &op, Mode::Eval, true).unwrap();
    assert_eq!((out.output.width(), out.output.height()), (32, 32));
    assert_eq!(out.phase_outputs.len(), 8);
    assert!(out.output.all_finite());
    assert!(out.output.values().iter().any(|&v| v != 0.0));
}

#[test]
fn eval_mode_is_bit_reproducible() {
    let p = projector(16);
    let mut r = rng(5);
    let events = random_events(&p, 80, &mut r);
    let op = NetOperator::new(&p, &events).unwrap();
    let params = perturbed(&NetworkConfig::default().with_phases(3), 5);
    let a = lmpd_forward(&params, &op, Mode::Eval, false).unwrap();
    let b = lmpd_forward(&params, &op, Mode::Eval, false).unwrap();
    assert_eq!(a.output.values(), b.output.values());
}

#[test]
fn zero_loss_gradient_gives_zero_parameter_gradient() {
    let p = projector(8);
    let mut r = rng(6);
    let events = random_events(&p, 20, &mut r);
    let op = NetOperator::new(&p, &events).unwrap();
    let params = perturbed(&small(), 6);
    for mode in [Mode::Eval, Mode::Train] {
        let fwd = lmpd_forward(&params, &op, mode, true).unwrap();
        let grad = lmpd_backward(&params, &op, &fwd, &Image2D::zeros(p.grid())).unwrap();
        assert!(grad.iter().all(|&g| g == 0.0));
    }
}

#[test]
fn primal_module_is_translation_covariant_in_the_interior() {
    let n = 20;
    let grid = Grid::new(n, n, 1.0).unwrap();
    let mut r = rng(7);
    let f = random_image(grid, &mut r);
    let bp = random_image(grid, &mut r);
    let shift = |img: &Image2D| {
        let mut out = Image2D::zeros(grid);
        for q in 0..n {
            for p in 1..n {
                out.set(p, q, img.get(p - 1, q));
            }
        }
        out
    };
    let params = perturbed(&NetworkConfig::default().with_phases(1), 7);
    let layers = params.config().n_conv_layers();
    let out = primal_module_forward(&params, 0, &f, &bp, Mode::Eval).unwrap();
    let out_shifted =
        primal_module_forward(&params, 0, &shift(&f), &shift(&bp), Mode::Eval).unwrap();
    // Zero padding reaches one pixel further inward per layer.
    let margin = layers + 1;
    let scale = out.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for q in margin..n - margin {
        for p in margin..n - margin {
            let (a, b) = (out.get(p - 1, q), out_shifted.get(p, q));
            assert!((a - b).abs() <= 1e-12 * scale, "({p}, {q}): {a} vs {b}");
        }
    }
}
