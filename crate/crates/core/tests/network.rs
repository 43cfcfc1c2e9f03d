use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rectrack_core::autodiff::{grad_check, GradCheckConfig, Graph};
use rectrack_core::network::{
    unrolled_loss, LstmLayerParams, LstmState, NetworkConfig, NetworkParams, StateVars, GATE_F, GATE_I, GATE_Z,
};
use rectrack_core::Tensor;

fn rand_tensor(rng: &mut ChaCha8Rng, dims: &[usize], scale: f64) -> Tensor {
    let len = dims.iter().product();
    Tensor::new(dims, (0..len).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Line-by-line transcription of the peephole LSTM equations.
fn lstm_oracle(p: &LstmLayerParams, x: &Tensor, y: &Tensor, c: &Tensor) -> (Vec<f64>, Vec<f64>) {
    let n = x.dims()[0];
    let d = x.dims()[1];
    let u = y.dims()[1];
    let mut y_out = vec![0.0; n * u];
    let mut c_out = vec![0.0; n * u];
    let lin = |gate: usize, row: usize, col: usize| -> f64 {
        let mut acc = p.b[gate].data()[col];
        for k in 0..d {
            acc += p.w[gate].data()[k * u + col] * x.data()[row * d + k];
        }
        for k in 0..u {
            acc += p.r[gate].data()[k * u + col] * y.data()[row * u + k];
        }
        acc
    };
    for row in 0..n {
        for col in 0..u {
            let c_prev = c.data()[row * u + col];
            let z = lin(0, row, col).tanh();
            let i = sig(lin(1, row, col) + p.p[0].data()[col] * c_prev);
            let f = sig(lin(2, row, col) + p.p[1].data()[col] * c_prev);
            let c_new = i * z + f * c_prev;
            let o = sig(lin(3, row, col) + p.p[2].data()[col] * c_new);
            c_out[row * u + col] = c_new;
            y_out[row * u + col] = o * c_new.tanh();
        }
    }
    (y_out, c_out)
}

#[test]
fn lstm_step_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for _ in 0..200 {
        let n = rng.random_range(1..3);
        let d = rng.random_range(1..6);
        let u = rng.random_range(1..5);
        let p = LstmLayerParams::random(d, u, 1.0, &mut rng);
        let x = rand_tensor(&mut rng, &[n, d], 2.0);
        let y = rand_tensor(&mut rng, &[n, u], 1.0);
        let c = rand_tensor(&mut rng, &[n, u], 2.0);
        let (y1, c1) = p.step(&x, &y, &c).unwrap();
        let (yo, co) = lstm_oracle(&p, &x, &y, &c);
        for (a, b) in y1.data().iter().zip(&yo).chain(c1.data().iter().zip(&co)) {
            assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
        }
    }
}

#[test]
fn lstm_zero_parameters_give_zero_state() {
    let p = LstmLayerParams::zeros(3, 4);
    let x = Tensor::new(&[1, 3], vec![0.3, -2.0, 5.0]).unwrap();
    let (y, c) = p.step(&x, &Tensor::zeros(&[1, 4]), &Tensor::zeros(&[1, 4])).unwrap();
    assert!(y.data().iter().all(|&v| v == 0.0));
    assert!(c.data().iter().all(|&v| v == 0.0));
}

#[test]
fn lstm_scalar_hand_evaluation() {
    let mut p = LstmLayerParams::zeros(1, 1);
    p.b[GATE_Z].data_mut()[0] = 0.5f64.atanh();
    let (y, c) = p.step(&Tensor::zeros(&[1, 1]), &Tensor::zeros(&[1, 1]), &Tensor::zeros(&[1, 1])).unwrap();
    // z = 0.5, i = f = o = 0.5, c = 0.25, y = 0.5 tanh(0.25)
    assert!((c.data()[0] - 0.25).abs() < 1e-15);
    assert!((y.data()[0] - 0.5 * 0.25f64.tanh()).abs() < 1e-15);
    assert!((y.data()[0] - 0.122455).abs() < 1e-5);
}

#[test]
fn lstm_saturated_gates_hold_memory_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..50 {
        let mut p = LstmLayerParams::random(3, 4, 1.0, &mut rng);
        p.b[GATE_F].data_mut().fill(800.0);
        p.b[GATE_I].data_mut().fill(-800.0);
        let x = rand_tensor(&mut rng, &[2, 3], 1.0);
        let y = rand_tensor(&mut rng, &[2, 4], 1.0);
        let c = rand_tensor(&mut rng, &[2, 4], 3.0);
        let (_, c1) = p.step(&x, &y, &c).unwrap();
        assert_eq!(c1, c);
    }
}

fn random_crops(rng: &mut ChaCha8Rng, pairs: usize, size: usize) -> Tensor {
    rand_tensor(rng, &[2 * pairs, 3, size, size], 1.0)
}

#[test]
fn embedding_has_configured_length() {
    let cfg = NetworkConfig::desk();
    let params = NetworkParams::init(&cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let crops = random_crops(&mut rng, 1, cfg.crop_size);
    let mut g = Graph::new();
    let vars = params.bind(&mut g, false);
    let c = g.leaf(&crops, false);
    let feats = params.view().stream_features(&mut g, &vars, c).unwrap();
    assert_eq!(g.value(feats).dims(), &[2, 6336]);
    let e = params.view().embed_pairs(&mut g, &vars, c).unwrap();
    assert_eq!(g.value(e).dims(), &[1, cfg.embed_dim]);
}

#[test]
fn swapping_crop_order_changes_embedding() {
    let cfg = NetworkConfig::tiny();
    let params = NetworkParams::init(&cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let crops = random_crops(&mut rng, 1, cfg.crop_size);
    let per = crops.len() / 2;
    let mut swapped = crops.data()[per..].to_vec();
    swapped.extend_from_slice(&crops.data()[..per]);
    let swapped = Tensor::new(crops.dims(), swapped).unwrap();
    let embed = |t: &Tensor| {
        let mut g = Graph::new();
        let vars = params.bind(&mut g, false);
        let c = g.leaf(t, false);
        let e = params.view().embed_pairs(&mut g, &vars, c).unwrap();
        g.value(e).clone()
    };
    assert_ne!(embed(&crops), embed(&swapped));
}

#[test]
fn streams_share_conv_weights() {
    let cfg = NetworkConfig::tiny();
    let mut params = NetworkParams::init(&cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let one = rand_tensor(&mut rng, &[1, 3, 8, 8], 1.0);
    let mut both = one.data().to_vec();
    both.extend_from_slice(one.data());
    let crops = Tensor::new(&[2, 3, 8, 8], both).unwrap();
    let features = |p: &NetworkParams| {
        let mut g = Graph::new();
        let vars = p.bind(&mut g, false);
        let c = g.leaf(&crops, false);
        let f = p.view().stream_features(&mut g, &vars, c).unwrap();
        g.value(f).clone()
    };
    let before = features(&params);
    params.get_mut("conv0.weight").unwrap().data_mut()[5] += 0.3;
    let after = features(&params);
    let f = before.dims()[1];
    assert_eq!(&before.data()[..f], &before.data()[f..]);
    assert_eq!(&after.data()[..f], &after.data()[f..]);
    assert_ne!(before, after);
}

#[test]
fn forward_step_is_deterministic() {
    let cfg = NetworkConfig::tiny();
    let params = NetworkParams::init(&cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let crops = random_crops(&mut rng, 2, cfg.crop_size);
    let state = LstmState::zeros(2, cfg.lstm_units);
    let a = params.predict(&crops, &state).unwrap();
    let b = params.predict(&crops, &state).unwrap();
    assert_eq!(a, b);
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(a.1.layers[1].c.data()), bits(b.1.layers[1].c.data()));
}

#[test]
fn zero_input_weights_decouple_prediction_from_crops() {
    let cfg = NetworkConfig::tiny();
    let mut params = NetworkParams::init(&cfg).unwrap();
    let names: Vec<String> = params.names().iter().filter(|n| n.contains(".w_")).cloned().collect();
    assert_eq!(names.len(), 8);
    for n in &names {
        params.get_mut(n).unwrap().data_mut().fill(0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let first = random_crops(&mut rng, 1, cfg.crop_size);
    let (_, state) = params.predict(&first, &LstmState::zeros(1, cfg.lstm_units)).unwrap();
    let a = params.predict(&random_crops(&mut rng, 1, cfg.crop_size), &state).unwrap();
    let b = params.predict(&random_crops(&mut rng, 1, cfg.crop_size), &state).unwrap();
    assert_eq!(a, b);
}

#[test]
fn unrolled_loss_threads_state() {
    let cfg = NetworkConfig::tiny();
    let params = NetworkParams::init(&cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let steps: Vec<(Tensor, Tensor)> =
        (0..2).map(|_| (random_crops(&mut rng, 1, cfg.crop_size), rand_tensor(&mut rng, &[1, 4], 1.0))).collect();
    let zero = LstmState::zeros(1, cfg.lstm_units);

    // manual: predict twice with threaded state, average the step losses
    let (p1, s1) = params.predict(&steps[0].0, &zero).unwrap();
    let (p2, _) = params.predict(&steps[1].0, &s1).unwrap();
    let l1 = |p: [f64; 4], t: &Tensor| p.iter().zip(t.data()).map(|(a, b)| (a - b).abs()).sum::<f64>() / 4.0;
    let step1 = l1(p1[0].to_array(), &steps[0].1);
    let step2 = l1(p2[0].to_array(), &steps[1].1);

    let eval = |s: &[(Tensor, Tensor)]| {
        let mut g = Graph::new();
        let vars = params.bind(&mut g, false);
        let loss = unrolled_loss(&params.view(), &mut g, &vars, s, &zero).unwrap();
        g.value(loss).data()[0]
    };
    assert!((eval(&steps[..1]) - step1).abs() < 1e-14);
    assert!((eval(&steps) - (step1 + step2) / 2.0).abs() < 1e-14);

    let mut g = Graph::new();
    let vars = params.bind(&mut g, false);
    assert!(unrolled_loss(&params.view(), &mut g, &vars, &[], &zero).is_err());
}

#[test]
fn perfect_predictions_give_zero_loss() {
    let cfg = NetworkConfig::tiny();
    let mut params = NetworkParams::init(&cfg).unwrap();
    params.get_mut("head.weight").unwrap().data_mut().fill(0.0);
    params.get_mut("head.bias").unwrap().data_mut().copy_from_slice(&[0.25, 0.25, 0.75, 0.75]);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let target = Tensor::new(&[1, 4], vec![0.25, 0.25, 0.75, 0.75]).unwrap();
    let steps: Vec<(Tensor, Tensor)> =
        (0..3).map(|_| (random_crops(&mut rng, 1, cfg.crop_size), target.clone())).collect();
    let mut g = Graph::new();
    let vars = params.bind(&mut g, false);
    let loss = unrolled_loss(&params.view(), &mut g, &vars, &steps, &LstmState::zeros(1, cfg.lstm_units)).unwrap();
    assert_eq!(g.value(loss).data()[0], 0.0);
}

fn network_grad_check(cfg: &NetworkConfig, seed: u64, coords: usize, tol: f64) {
    let params = NetworkParams::init(cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let steps: Vec<(Tensor, Tensor)> =
        (0..4).map(|_| (random_crops(&mut rng, 1, cfg.crop_size), rand_tensor(&mut rng, &[1, 4], 1.0))).collect();
    let start = LstmState::zeros(1, cfg.lstm_units);
    let mut tensors = params.tensors().to_vec();
    let view = params.view();
    let gc = GradCheckConfig { tol, coords_per_tensor: coords, seed, ..GradCheckConfig::default() };
    let report = grad_check(&mut tensors, |g, vars| unrolled_loss(&view, g, vars, &steps, &start), &gc).unwrap();
    assert!(report.passed(), "seed {seed}: max {:e}, failures {:?}", report.max_rel_error, report.failures);
}

#[test]
fn tiny_network_unroll_gradients_match_finite_differences() {
    let mut cfg = NetworkConfig::tiny();
    for seed in 0..20 {
        cfg.seed = seed;
        network_grad_check(&cfg, seed, 6, 1e-4);
    }
}

#[test]
fn single_step_lstm_loss_gradient_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    let p = LstmLayerParams::random(3, 4, 0.8, &mut rng);
    let x = rand_tensor(&mut rng, &[2, 3], 1.0);
    let y0 = rand_tensor(&mut rng, &[2, 4], 1.0);
    let c0 = rand_tensor(&mut rng, &[2, 4], 1.0);
    let target = rand_tensor(&mut rng, &[2, 4], 1.0);
    let mut tensors: Vec<Tensor> = p.w.iter().chain(&p.r).chain(&p.p).chain(&p.b).cloned().collect();
    tensors.extend([x, y0, c0]);
    let report = grad_check(
        &mut tensors,
        |g, v| {
            let layer = rectrack_core::network::LstmLayerVars {
                w: [v[0], v[1], v[2], v[3]],
                r: [v[4], v[5], v[6], v[7]],
                p: [v[8], v[9], v[10]],
                b: [v[11], v[12], v[13], v[14]],
            };
            let (y, c) = rectrack_core::network::lstm_step(g, &layer, v[15], v[16], v[17])?;
            let both = g.add(y, c)?;
            let t = g.constant(target.clone());
            g.l1_loss(both, t)
        },
        &GradCheckConfig::default(),
    )
    .unwrap();
    assert!(report.passed(), "{report:?}");
}

#[test]
fn state_vars_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut s = LstmState::zeros(2, 3);
    for l in &mut s.layers {
        l.y = rand_tensor(&mut rng, &[2, 3], 1.0);
        l.c = rand_tensor(&mut rng, &[2, 3], 1.0);
    }
    let mut g = Graph::new();
    let v = StateVars::constant(&mut g, &s);
    assert_eq!(v.read(&g), s);
    let _ = GATE_Z;
}
