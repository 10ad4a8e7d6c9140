use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::autodiff::{Tape, Tensor};
use crate::domain::{CfState, Sample};
use crate::error::Error;
use crate::phys::{ovrv_accel, ovrv_rdc_derivatives, OvrvParams};
use crate::train::{Normalizer, Standardizer};

fn small_config(seq_len: usize) -> NetConfig {
    NetConfig { seq_len, lstm_layers: 2, lstm_hidden: 5, seq_head: 4, phy_hidden: vec![6, 5], seed: 11, ..NetConfig::default() }
}

fn random_state(rng: &mut impl Rng) -> CfState {
    CfState::new(rng.random_range(10.0..60.0), rng.random_range(-3.0..3.0), rng.random_range(0.0..30.0))
}

fn random_sample(seq_len: usize, rng: &mut impl Rng) -> Sample {
    let window: Vec<CfState> = (0..seq_len).map(|_| random_state(rng)).collect();
    Sample::new(0, window, rng.random_range(-1.0..1.0)).unwrap()
}

fn fitted_normalizer() -> Normalizer {
    Normalizer {
        features: [
            Standardizer { mean: 32.0, std: 9.5, constant: false },
            Standardizer { mean: 0.2, std: 1.3, constant: false },
            Standardizer { mean: 14.0, std: 4.1, constant: false },
        ],
        target: Standardizer { mean: 0.05, std: 0.4, constant: false },
    }
}

fn tape_value(net: &RacerNet, sample: &Sample) -> f64 {
    let mut tape = Tape::new();
    let bound = net.bind(&mut tape);
    let p = net.forward(&mut tape, &bound, sample).unwrap();
    tape.scalar_value(p.accel)
}

fn gradients(net: &RacerNet, sample: &Sample) -> [f64; 3] {
    let mut tape = Tape::new();
    let bound = net.bind(&mut tape);
    let p = net.forward(&mut tape, &bound, sample).unwrap();
    let g = net.input_gradients(&mut tape, &p).unwrap();
    [tape.scalar_value(g.dv), tape.scalar_value(g.ds), tape.scalar_value(g.dr)]
}

#[test]
fn zero_net_outputs_final_bias() {
    let mut net = RacerNet::zeros(small_config(4)).unwrap();
    net.combiner.bias = Tensor::scalar(0.7);
    net.set_normalizer(Normalizer::IDENTITY);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..5 {
        let s = random_sample(4, &mut rng);
        assert_eq!(tape_value(&net, &s), 0.7);
        assert_eq!(net.predict_sample(&s).unwrap(), 0.7);
    }
}

#[test]
fn ovrv_form_reproduces_physics() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for params in [OvrvParams::MIN_GAP, OvrvParams::MAX_GAP] {
        let net = RacerNet::ovrv_form(small_config(3), &params, fitted_normalizer()).unwrap();
        let analytic = ovrv_rdc_derivatives(&params);
        for _ in 0..20 {
            let s = random_sample(3, &mut rng);
            let want = ovrv_accel(&s.phy_state, &params);
            let got = tape_value(&net, &s);
            assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0), "{got} vs {want}");
            let g = gradients(&net, &s);
            for (a, b) in g.iter().zip([analytic.dv, analytic.ds, analytic.dr]) {
                assert!((a - b).abs() <= 1e-14, "{g:?} vs {analytic:?}");
            }
        }
    }
}

#[test]
fn ovrv_form_gradients_are_exact_in_physical_units() {
    let p = OvrvParams::MIN_GAP;
    let net = RacerNet::ovrv_form(small_config(2), &p, Normalizer::IDENTITY).unwrap();
    let s = random_sample(2, &mut ChaCha8Rng::seed_from_u64(3));
    assert_eq!(gradients(&net, &s), [-p.k1 * p.tau - p.k2, p.k1, p.k2]);
}

#[test]
fn linear_speed_model_gradients() {
    let net = RacerNet::affine(small_config(2), [0.0, 0.0, 0.3], 0.0, Normalizer::IDENTITY).unwrap();
    let s = random_sample(2, &mut ChaCha8Rng::seed_from_u64(4));
    assert_eq!(gradients(&net, &s), [0.3, 0.0, 0.0]);
}

#[test]
fn input_gradients_match_finite_differences() {
    let mut net = RacerNet::new(small_config(4)).unwrap();
    net.set_normalizer(fitted_normalizer());
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let h = 1e-5;
    for _ in 0..10 {
        let s = random_sample(4, &mut rng);
        let g = gradients(&net, &s);
        // g is ordered (v, s, Δv); the state features are (s, Δv, v). Moving
        // v with the lead speed fixed moves Δv the other way.
        for (gi, dir) in [(0, [0.0, -1.0, 1.0]), (1, [1.0, 0.0, 0.0]), (2, [0.0, 1.0, 0.0])] {
            let shifted = |d: f64| {
                let mut f = s.phy_state.features();
                for k in 0..3 {
                    f[k] += d * dir[k];
                }
                let mut t = s.clone();
                t.phy_state = CfState::new(f[0], f[1], f[2]);
                net.predict_sample(&t).unwrap()
            };
            let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
            let rel = (g[gi] - fd).abs() / fd.abs().max(1e-3);
            assert!(rel < 1e-4, "direction {dir:?}: {} vs {fd}", g[gi]);
        }
    }
}

#[test]
fn tape_free_path_matches_tape_and_is_deterministic() {
    let mut net = RacerNet::new(small_config(6)).unwrap();
    net.set_normalizer(fitted_normalizer());
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..5 {
        let s = random_sample(6, &mut rng);
        let a = net.predict_sample(&s).unwrap();
        assert_eq!(a, net.predict_sample(&s).unwrap());
        assert_eq!(a, tape_value(&net, &s));
        assert_eq!(a, net.predict(&s.seq_window).unwrap());
    }
}

#[test]
fn expression_values_equal_numeric_gradient() {
    let mut net = RacerNet::new(small_config(3)).unwrap();
    net.set_normalizer(fitted_normalizer());
    let s = random_sample(3, &mut ChaCha8Rng::seed_from_u64(7));
    let mut tape = Tape::new();
    let bound = net.bind(&mut tape);
    let p = net.forward(&mut tape, &bound, &s).unwrap();
    let numeric = tape.grad(p.accel, &[p.phy_input]).unwrap().remove(0);
    let g = net.input_gradients(&mut tape, &p).unwrap();
    let n = numeric.data();
    let expr = [tape.scalar_value(g.ds), tape.scalar_value(g.dr), tape.scalar_value(g.dv)];
    let want = [n[0], n[1], n[2] - n[1]];
    for k in 0..3 {
        assert!((expr[k] - want[k]).abs() <= 1e-15 * want[k].abs().max(1.0));
    }
}

#[test]
fn gradients_do_not_depend_on_sequence_branch() {
    let mut net = RacerNet::new(small_config(4)).unwrap();
    net.set_normalizer(fitted_normalizer());
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let s = random_sample(4, &mut rng);
    let base = gradients(&net, &s);

    let mut other = s.clone();
    for st in other.seq_window.iter_mut() {
        *st = random_state(&mut rng);
    }
    assert_ne!(net.predict_sample(&s).unwrap(), net.predict_sample(&other).unwrap());
    assert_eq!(gradients(&net, &other), base);

    let mut silenced = net.clone();
    for cell in silenced.lstm.iter_mut() {
        *cell = LstmCell::zeros(cell.input_size(), cell.hidden_size());
    }
    silenced.seq_head.weights = Tensor::zeros(silenced.seq_head.weights.rows(), silenced.seq_head.weights.cols());
    assert_eq!(gradients(&silenced, &s), base);
}

#[test]
fn shape_and_normalizer_errors() {
    let net = RacerNet::new(small_config(4)).unwrap();
    let s = random_sample(4, &mut ChaCha8Rng::seed_from_u64(9));
    assert!(matches!(net.predict_sample(&s), Err(Error::UnfittedNormalizer)));
    let mut net = net;
    net.set_normalizer(Normalizer::IDENTITY);
    let short = random_sample(3, &mut ChaCha8Rng::seed_from_u64(9));
    assert!(matches!(net.predict_sample(&short), Err(Error::Shape { .. })));
    let mut tape = Tape::new();
    let bound = net.bind(&mut tape);
    assert!(net.forward(&mut tape, &bound, &short).is_err());
    assert!(NetConfig { lstm_hidden: 0, ..NetConfig::default() }.validate().is_err());
}

#[test]
fn default_architecture_shapes() {
    let net = RacerNet::new(NetConfig::default()).unwrap();
    // LSTM: 4·(32·35 + 32) + 4·(32·64 + 32); head 32·32 + 32; phy 3·32+32 + 32·32+32 + 32+1; combiner 33 + 1.
    let lstm = 4 * (32 * 35 + 32) + 4 * (32 * 64 + 32);
    let expected = lstm + (32 * 32 + 32) + (3 * 32 + 32) + (32 * 32 + 32) + (32 + 1) + (33 + 1);
    assert_eq!(net.parameter_count(), expected);
    let bound = 1.0 / (35f64).sqrt();
    assert!(net.lstm[0].w_f.data().iter().all(|x| x.abs() <= bound));
    assert_eq!(net, RacerNet::new(NetConfig::default()).unwrap());
    assert_ne!(net, RacerNet::new(NetConfig { seed: 1, ..NetConfig::default() }).unwrap());
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let mut net = RacerNet::new(small_config(5)).unwrap();
    net.set_normalizer(fitted_normalizer());
    let manifest = save_checkpoint(&net, dir.path()).unwrap();
    assert_eq!(manifest.parameter_count, net.parameter_count());
    let loaded = load_checkpoint(dir.path()).unwrap();
    assert_eq!(loaded, net);
    let bits = |n: &RacerNet| n.parameters().iter().flat_map(|p| p.data().iter().map(|x| x.to_bits())).collect::<Vec<_>>();
    assert_eq!(bits(&loaded), bits(&net));

    let affine = RacerNet::ovrv_form(small_config(2), &OvrvParams::MAX_GAP, fitted_normalizer()).unwrap();
    let dir2 = tempfile::tempdir().unwrap();
    save_checkpoint(&affine, dir2.path()).unwrap();
    assert_eq!(load_checkpoint(dir2.path()).unwrap(), affine);

    let mut bytes = std::fs::read(dir.path().join(PARAMS_FILE)).unwrap();
    bytes[3] ^= 1;
    std::fs::write(dir.path().join(PARAMS_FILE), bytes).unwrap();
    assert!(matches!(load_checkpoint(dir.path()), Err(Error::Checkpoint(_))));
}
