//! Finite-difference gradient checks in f64 with step 1e-4. Each check
//! returns the worst relative error between analytic and numeric gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use somnoflow::model::{build_model, HeadConfig, ModelConfig, SleepNet};
use somnoflow::nn::{
    bce_loss, conv1d_backward, conv1d_valid, dense_backward, dense_forward, dropout, maxpool1d, maxpool1d_backward,
    relu, relu_backward, sigmoid, BatchNormState, FeatureMap, LayerParams, Mode,
};

use super::rel_err;

pub const H: f64 = 1e-4;
pub const LAYER_TOL: f64 = 1e-4;
pub const MODEL_TOL: f64 = 1e-3;
pub const SEEDS: u64 = 20;

fn randn(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn map(rng: &mut ChaCha8Rng, c: usize, l: usize) -> FeatureMap<f64> {
    FeatureMap::new(c, l, randn(rng, c * l)).unwrap()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Central difference of `f` with respect to `x[i]`.
fn numeric(x: &mut [f64], i: usize, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    let orig = x[i];
    x[i] = orig + H;
    let up = f(x);
    x[i] = orig - H;
    let down = f(x);
    x[i] = orig;
    (up - down) / (2.0 * H)
}

fn worst(pairs: impl IntoIterator<Item = (f64, f64)>) -> f64 {
    pairs.into_iter().map(|(a, n)| rel_err(a, n)).fold(0.0, f64::max)
}

fn random_bias(rng: &mut ChaCha8Rng, p: &mut LayerParams<f64>) {
    for b in &mut p.bias {
        *b = rng.random_range(-0.5..0.5);
    }
}

pub fn conv1d_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = LayerParams::conv1d("c", 4, 3, 5);
    p.init_he_uniform(&mut rng);
    random_bias(&mut rng, &mut p);
    let x = map(&mut rng, 3, 12);
    let w = randn(&mut rng, 4 * 8);
    let up = FeatureMap::new(4, 8, w.clone()).unwrap();
    let g = conv1d_backward(&x, &mut p.clone(), &up).unwrap();

    let loss = |x: &FeatureMap<f64>, p: &LayerParams<f64>| dot(conv1d_valid(x, p).unwrap().as_slice(), &w);
    let mut pairs = vec![];
    let mut xs = x.as_slice().to_vec();
    for i in 0..xs.len() {
        let n = numeric(&mut xs, i, |v| loss(&FeatureMap::new(3, 12, v.to_vec()).unwrap(), &p));
        pairs.push((g.input_grad.as_slice()[i], n));
    }
    let mut ws = p.weights.clone();
    for i in 0..ws.len() {
        let n = numeric(&mut ws, i, |v| loss(&x, &LayerParams { weights: v.to_vec(), ..p.clone() }));
        pairs.push((g.weight_grad[i], n));
    }
    let mut bs = p.bias.clone();
    for i in 0..bs.len() {
        let n = numeric(&mut bs, i, |v| loss(&x, &LayerParams { bias: v.to_vec(), ..p.clone() }));
        pairs.push((g.bias_grad[i], n));
    }
    worst(pairs)
}

pub fn dense_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = LayerParams::dense("d", 6, 9);
    p.init_he_uniform(&mut rng);
    random_bias(&mut rng, &mut p);
    let x = randn(&mut rng, 9);
    let w = randn(&mut rng, 6);
    let mut acc = p.clone();
    let gx = dense_backward(&x, &mut acc, &w).unwrap();

    let loss = |x: &[f64], p: &LayerParams<f64>| dot(&dense_forward(x, p).unwrap(), &w);
    let mut pairs = vec![];
    let mut xs = x.clone();
    for i in 0..xs.len() {
        pairs.push((gx[i], numeric(&mut xs, i, |v| loss(v, &p))));
    }
    let mut ws = p.weights.clone();
    for i in 0..ws.len() {
        let n = numeric(&mut ws, i, |v| loss(&x, &LayerParams { weights: v.to_vec(), ..p.clone() }));
        pairs.push((acc.weight_grad[i], n));
    }
    let mut bs = p.bias.clone();
    for i in 0..bs.len() {
        let n = numeric(&mut bs, i, |v| loss(&x, &LayerParams { bias: v.to_vec(), ..p.clone() }));
        pairs.push((acc.bias_grad[i], n));
    }
    worst(pairs)
}

pub fn batchnorm_error(seed: u64, mode: Mode) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (c, l, b) = (3, 7, 4);
    let mut bn = BatchNormState::<f64>::new("bn", c, 0.1, 1e-6).unwrap();
    bn.params.weights = (0..c).map(|_| rng.random_range(0.5..1.5)).collect();
    bn.params.bias = randn(&mut rng, c);
    bn.running_mean = randn(&mut rng, c);
    bn.running_var = (0..c).map(|_| rng.random_range(0.5..2.0)).collect();
    let xs: Vec<FeatureMap<f64>> = (0..b).map(|_| map(&mut rng, c, l)).collect();
    let w: Vec<Vec<f64>> = (0..b).map(|_| randn(&mut rng, c * l)).collect();
    let ups: Vec<FeatureMap<f64>> = w.iter().map(|v| FeatureMap::new(c, l, v.clone()).unwrap()).collect();

    let (_, cache) = bn.normalize(&xs, mode).unwrap();
    let mut acc = bn.clone();
    let gx = acc.backward(&cache, &ups).unwrap();

    let loss = |xs: &[FeatureMap<f64>], bn: &BatchNormState<f64>| {
        let (ys, _) = bn.normalize(xs, mode).unwrap();
        ys.iter().zip(&w).map(|(y, w)| dot(y.as_slice(), w)).sum::<f64>()
    };
    let mut pairs = vec![];
    let mut flat: Vec<f64> = xs.iter().flat_map(|x| x.as_slice().to_vec()).collect();
    for i in 0..flat.len() {
        let n = numeric(&mut flat, i, |v| {
            let m: Vec<_> = v.chunks(c * l).map(|ch| FeatureMap::new(c, l, ch.to_vec()).unwrap()).collect();
            loss(&m, &bn)
        });
        pairs.push((gx[i / (c * l)].as_slice()[i % (c * l)], n));
    }
    let mut gamma = bn.params.weights.clone();
    for i in 0..c {
        let n = numeric(&mut gamma, i, |v| {
            let mut t = bn.clone();
            t.params.weights = v.to_vec();
            loss(&xs, &t)
        });
        pairs.push((acc.params.weight_grad[i], n));
    }
    let mut beta = bn.params.bias.clone();
    for i in 0..c {
        let n = numeric(&mut beta, i, |v| {
            let mut t = bn.clone();
            t.params.bias = v.to_vec();
            loss(&xs, &t)
        });
        pairs.push((acc.params.bias_grad[i], n));
    }
    worst(pairs)
}

pub fn elementwise_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Max-pool: random inputs have no ties, so argmax is stable under ±h.
    let x = map(&mut rng, 2, 11);
    let (pooled, idx) = maxpool1d(&x, 2, 2).unwrap();
    let w = randn(&mut rng, pooled.as_slice().len());
    let up = FeatureMap::new(2, pooled.length(), w.clone()).unwrap();
    let gx = maxpool1d_backward(&up, &idx).unwrap();
    let mut xs = x.as_slice().to_vec();
    let mut pairs = vec![];
    for i in 0..xs.len() {
        let n = numeric(&mut xs, i, |v| {
            dot(maxpool1d(&FeatureMap::new(2, 11, v.to_vec()).unwrap(), 2, 2).unwrap().0.as_slice(), &w)
        });
        pairs.push((gx.as_slice()[i], n));
    }

    // ReLU away from the kink.
    for _ in 0..20 {
        let mut z = [rng.random_range(0.01..2.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 }];
        let n = numeric(&mut z, 0, |v| relu(v[0]));
        pairs.push((relu_backward(z[0], 1.0), n));
    }

    // Dropout with a fixed mask is linear.
    let v = randn(&mut rng, 10);
    let mut mask_rng = ChaCha8Rng::seed_from_u64(seed + 1000);
    let (_, mask) = dropout(&v, 0.3, &mut mask_rng, Mode::Train).unwrap();
    let wd = randn(&mut rng, 10);
    let gd = mask.backward(&wd);
    let mut vs = v.clone();
    for i in 0..10 {
        let n = numeric(&mut vs, i, |u| {
            let mut r = ChaCha8Rng::seed_from_u64(seed + 1000);
            dot(&dropout(u, 0.3, &mut r, Mode::Train).unwrap().0, &wd)
        });
        pairs.push((gd[i], n));
    }

    // Sigmoid followed by cross-entropy, through the logit.
    for y in [0.0, 1.0] {
        let mut z = [rng.random_range(-4.0..4.0)];
        let p = sigmoid(z[0]);
        let analytic = bce_loss(p, y).1 * p * (1.0 - p);
        let n = numeric(&mut z, 0, |v| bce_loss(sigmoid(v[0]), y).0);
        pairs.push((analytic, n));
    }
    worst(pairs)
}

/// Two heads on 2 features × 8 epochs; 83 parameters.
pub fn reduced_config(seed: u64) -> ModelConfig {
    let head = |k| HeadConfig {
        kernel_width: k,
        n_filters: 2,
        pool_width: 2,
        dropout_rate: 0.3,
        fc_width: 2,
    };
    ModelConfig {
        input_features: 2,
        window_epochs: 8,
        heads: vec![head(3), head(5)],
        trunk_widths: vec![2, 1],
        seed,
        ..Default::default()
    }
}

fn total_loss(m: &SleepNet<f64>, xs: &[FeatureMap<f64>], ys: &[f64], aux: f64, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cache = m.forward_batch(xs, Mode::Train, &mut rng).unwrap();
    let per: f64 = cache
        .outputs
        .iter()
        .zip(ys)
        .map(|(o, &y)| bce_loss(o.p_final, y).0 + aux * o.p_heads.iter().map(|&p| bce_loss(p, y).0).sum::<f64>())
        .sum();
    per / xs.len() as f64
}

/// Worst relative error over every parameter of the reduced model, with
/// dropout active (same mask on every evaluation) and the auxiliary loss on.
pub fn model_error(seed: u64) -> f64 {
    let aux = 0.25;
    let mut m: SleepNet<f64> = build_model(reduced_config(seed)).unwrap();
    assert!((60..=120).contains(&m.n_params()), "{}", m.n_params());
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 500);
    for p in m.params_mut() {
        for b in &mut p.bias {
            *b = rng.random_range(-0.2..0.2);
        }
    }
    let xs: Vec<FeatureMap<f64>> = (0..4).map(|_| map(&mut rng, 2, 8)).collect();
    let ys = [0.0, 1.0, 1.0, 0.0];

    let mut analytic_model = m.clone();
    let mut fwd_rng = ChaCha8Rng::seed_from_u64(seed);
    let cache = analytic_model.forward_batch(&xs, Mode::Train, &mut fwd_rng).unwrap();
    let reported = analytic_model.backward(&cache, &ys, aux).unwrap();
    assert!((reported - total_loss(&m, &xs, &ys, aux, seed)).abs() < 1e-12);

    let analytic: Vec<f64> = analytic_model
        .params()
        .iter()
        .flat_map(|p| p.weight_grad.iter().chain(&p.bias_grad).copied().collect::<Vec<_>>())
        .collect();
    let mut numeric_grads = Vec::with_capacity(analytic.len());
    let n_layers = m.params().len();
    for l in 0..n_layers {
        for in_bias in [false, true] {
            let len = {
                let p = &m.params()[l];
                if in_bias { p.bias.len() } else { p.weights.len() }
            };
            for i in 0..len {
                let eval = |delta: f64| {
                    let mut t = m.clone();
                    let p = &mut t.params_mut()[l];
                    let v = if in_bias { &mut p.bias } else { &mut p.weights };
                    v[i] += delta;
                    total_loss(&t, &xs, &ys, aux, seed)
                };
                numeric_grads.push((eval(H) - eval(-H)) / (2.0 * H));
            }
        }
    }
    worst(analytic.iter().copied().zip(numeric_grads))
}
