use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::config::{HeadConfig, ModelConfig};
use crate::data::{apply_normalizer, FeatureWindow, NormStats};
use crate::error::{Error, Result};
use crate::nn::{
    conv1d_backward, conv1d_valid, dense_backward, dense_forward, dropout, maxpool1d, maxpool1d_backward, relu,
    relu_backward, sigmoid, BatchNormCache, BatchNormState, DropoutMask, FeatureMap, LayerParams, Mode, PoolIndices,
    Real,
};

/// One resolution-specific branch: conv → batch norm → ReLU → max-pool →
/// dropout → intermediate FC (ReLU) → scalar sigmoid prediction.
#[derive(Clone, Debug, PartialEq)]
pub struct Head<T> {
    pub config: HeadConfig,
    pub conv: LayerParams<T>,
    pub bn: BatchNormState<T>,
    pub fc: LayerParams<T>,
    pub pred: LayerParams<T>,
}

impl<T: Real> Head<T> {
    fn feature_layers_frozen(&self) -> bool {
        self.conv.frozen && self.bn.params.frozen
    }

    fn fully_frozen(&self) -> bool {
        self.feature_layers_frozen() && self.fc.frozen && self.pred.frozen
    }

    fn layers(&self) -> [&LayerParams<T>; 4] {
        [&self.conv, &self.bn.params, &self.fc, &self.pred]
    }

    fn layers_mut(&mut self) -> [&mut LayerParams<T>; 4] {
        [&mut self.conv, &mut self.bn.params, &mut self.fc, &mut self.pred]
    }
}

/// Final and per-head sleep probabilities for one window.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction<T> {
    pub p_final: T,
    pub p_heads: Vec<T>,
}

/// The full network plus the feature normalization it was trained with.
#[derive(Clone, Debug, PartialEq)]
pub struct SleepNet<T = f32> {
    pub config: ModelConfig,
    pub heads: Vec<Head<T>>,
    /// Fusion network over the concatenated head probabilities.
    pub trunk: Vec<LayerParams<T>>,
    pub norm: Option<NormStats>,
}

#[derive(Clone, Debug)]
struct HeadCache<T> {
    bn: BatchNormCache<T>,
    bn_out: Vec<FeatureMap<T>>,
    pool: Vec<PoolIndices>,
    drop: Vec<DropoutMask<T>>,
    flat: Vec<Vec<T>>,
    fc_pre: Vec<Vec<T>>,
    fc_act: Vec<Vec<T>>,
}

/// Activations saved by [`SleepNet::forward_batch`] for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache<T> {
    inputs: Vec<FeatureMap<T>>,
    heads: Vec<HeadCache<T>>,
    /// Per sample, the input of every trunk layer.
    trunk_in: Vec<Vec<Vec<T>>>,
    /// Per sample, the pre-activation of every trunk layer.
    trunk_pre: Vec<Vec<Vec<T>>>,
    pub outputs: Vec<Prediction<T>>,
}

/// Builds a model with seeded He-uniform weights and zero biases.
pub fn build_model<T: Real>(config: ModelConfig) -> Result<SleepNet<T>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut heads = Vec::with_capacity(config.heads.len());
    for (i, hc) in config.heads.iter().enumerate() {
        let mut conv = LayerParams::conv1d(format!("head{i}.conv"), hc.n_filters, config.input_features, hc.kernel_width);
        conv.init_he_uniform(&mut rng);
        let bn = BatchNormState::new(format!("head{i}.bn"), hc.n_filters, config.bn_momentum, config.bn_eps)?;
        let flat = hc.n_filters * hc.pooled_len(config.window_epochs);
        let mut fc = LayerParams::dense(format!("head{i}.fc"), hc.fc_width, flat);
        fc.init_he_uniform(&mut rng);
        let mut pred = LayerParams::dense(format!("head{i}.pred"), 1, hc.fc_width);
        pred.init_he_uniform(&mut rng);
        heads.push(Head {
            config: hc.clone(),
            conv,
            bn,
            fc,
            pred,
        });
    }
    let mut trunk = Vec::with_capacity(config.trunk_widths.len());
    let mut width = heads.len();
    for (i, &w) in config.trunk_widths.iter().enumerate() {
        let mut layer = LayerParams::dense(format!("trunk{i}"), w, width);
        layer.init_he_uniform(&mut rng);
        trunk.push(layer);
        width = w;
    }
    Ok(SleepNet {
        config,
        heads,
        trunk,
        norm: None,
    })
}

impl<T: Real> SleepNet<T> {
    pub fn n_params(&self) -> usize {
        self.params().iter().map(|p| p.n_params()).sum()
    }

    /// All trainable layers in a fixed order: each head's conv, bn, fc, pred,
    /// then the trunk.
    pub fn params(&self) -> Vec<&LayerParams<T>> {
        self.heads
            .iter()
            .flat_map(|h| h.layers())
            .chain(self.trunk.iter())
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut LayerParams<T>> {
        let mut v: Vec<&mut LayerParams<T>> = Vec::new();
        for h in &mut self.heads {
            v.extend(h.layers_mut());
        }
        v.extend(self.trunk.iter_mut());
        v
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    /// Freezes everything except the fusion trunk (and, when configured, the
    /// intermediate FC / prediction layers).
    pub fn set_transfer_freeze(&mut self) {
        let widen = self.config.transfer_trains_intermediate;
        for h in &mut self.heads {
            h.conv.frozen = true;
            h.bn.params.frozen = true;
            h.fc.frozen = !widen;
            h.pred.frozen = !widen;
        }
        for t in &mut self.trunk {
            t.frozen = false;
        }
    }

    pub fn unfreeze_all(&mut self) {
        for p in self.params_mut() {
            p.frozen = false;
        }
    }

    fn check_input(&self, x: &FeatureMap<T>) -> Result<()> {
        let want = (self.config.input_features, self.config.window_epochs);
        if x.shape() != want {
            return Err(Error::Shape(format!("window is {:?}, model expects {:?}", x.shape(), want)));
        }
        Ok(())
    }

    /// Runs a batch through the network, keeping what the backward pass needs.
    ///
    /// Heads whose conv and batch norm are frozen run in infer mode (running
    /// statistics, no dropout) whatever `mode` says.
    pub fn forward_batch<R: Rng + ?Sized>(
        &self,
        inputs: &[FeatureMap<T>],
        mode: Mode,
        rng: &mut R,
    ) -> Result<ForwardCache<T>> {
        if inputs.is_empty() {
            return Err(Error::Shape("empty batch".into()));
        }
        for x in inputs {
            self.check_input(x)?;
        }
        let n = inputs.len();
        let mut head_caches = Vec::with_capacity(self.heads.len());
        let mut head_p: Vec<Vec<T>> = vec![Vec::with_capacity(self.heads.len()); n];
        for head in &self.heads {
            let hmode = if head.feature_layers_frozen() { Mode::Infer } else { mode };
            let conv_out = inputs
                .iter()
                .map(|x| conv1d_valid(x, &head.conv))
                .collect::<Result<Vec<_>>>()?;
            let (bn_out, bn) = head.bn.normalize(&conv_out, hmode)?;
            let mut cache = HeadCache {
                bn,
                bn_out: Vec::with_capacity(n),
                pool: Vec::with_capacity(n),
                drop: Vec::with_capacity(n),
                flat: Vec::with_capacity(n),
                fc_pre: Vec::with_capacity(n),
                fc_act: Vec::with_capacity(n),
            };
            for (s, y) in bn_out.into_iter().enumerate() {
                let mut act = y.clone();
                act.as_mut_slice().iter_mut().for_each(|v| *v = relu(*v));
                let (pooled, idx) = maxpool1d(&act, head.config.pool_width, head.config.pool_width)?;
                let (flat, mask) = dropout(pooled.as_slice(), head.config.dropout_rate, rng, hmode)?;
                let fc_pre = dense_forward(&flat, &head.fc)?;
                let fc_act: Vec<T> = fc_pre.iter().map(|&v| relu(v)).collect();
                let logit = dense_forward(&fc_act, &head.pred)?[0];
                head_p[s].push(sigmoid(logit));
                cache.bn_out.push(y);
                cache.pool.push(idx);
                cache.drop.push(mask);
                cache.flat.push(flat);
                cache.fc_pre.push(fc_pre);
                cache.fc_act.push(fc_act);
            }
            head_caches.push(cache);
        }

        let last = self.trunk.len() - 1;
        let mut trunk_in = Vec::with_capacity(n);
        let mut trunk_pre = Vec::with_capacity(n);
        let mut outputs = Vec::with_capacity(n);
        for p_heads in head_p {
            let mut x = p_heads.clone();
            let mut ins = Vec::with_capacity(self.trunk.len());
            let mut pres = Vec::with_capacity(self.trunk.len());
            for (l, layer) in self.trunk.iter().enumerate() {
                let pre = dense_forward(&x, layer)?;
                ins.push(std::mem::take(&mut x));
                x = if l < last { pre.iter().map(|&v| relu(v)).collect() } else { pre.clone() };
                pres.push(pre);
            }
            outputs.push(Prediction {
                p_final: sigmoid(x[0]),
                p_heads,
            });
            trunk_in.push(ins);
            trunk_pre.push(pres);
        }
        Ok(ForwardCache {
            inputs: inputs.to_vec(),
            heads: head_caches,
            trunk_in,
            trunk_pre,
            outputs,
        })
    }

    /// Applies the batch statistics of a train-mode pass to the running
    /// statistics of every head that was in train mode.
    pub fn apply_running_stats(&mut self, cache: &ForwardCache<T>) {
        for (head, hc) in self.heads.iter_mut().zip(&cache.heads) {
            head.bn.update_running(&hc.bn);
        }
    }

    /// Total loss `BCE(p_final, y) + aux · Σ_h BCE(p_h, y)` averaged over the
    /// batch. Accumulates gradients into every layer that lies on a path to
    /// a trainable parameter; fully frozen heads are skipped.
    pub fn backward(&mut self, cache: &ForwardCache<T>, labels: &[T], aux_weight: f64) -> Result<T> {
        let n = cache.outputs.len();
        if labels.len() != n {
            return Err(Error::Shape(format!("{} labels for a batch of {n}", labels.len())));
        }
        let inv_n = T::one() / T::of(n as f64);
        let aux = T::of(aux_weight);
        let n_heads = self.heads.len();
        let mut loss = T::zero();
        // d loss / d head-logit, per head per sample
        let mut d_head_logit = vec![vec![T::zero(); n]; n_heads];

        for (s, (out, &y)) in cache.outputs.iter().zip(labels).enumerate() {
            loss += crate::nn::bce_loss(out.p_final, y).0;
            for &p in &out.p_heads {
                loss += aux * crate::nn::bce_loss(p, y).0;
            }
            let mut g = vec![(out.p_final - y) * inv_n];
            for l in (0..self.trunk.len()).rev() {
                let g_in = dense_backward(&cache.trunk_in[s][l], &mut self.trunk[l], &g)?;
                g = if l > 0 {
                    g_in.iter()
                        .zip(&cache.trunk_pre[s][l - 1])
                        .map(|(&gi, &pre)| relu_backward(pre, gi))
                        .collect()
                } else {
                    g_in
                };
            }
            for (h, &p) in out.p_heads.iter().enumerate() {
                d_head_logit[h][s] = g[h] * p * (T::one() - p) + aux * (p - y) * inv_n;
            }
        }

        for (h, (head, hc)) in self.heads.iter_mut().zip(&cache.heads).enumerate() {
            if head.fully_frozen() {
                continue;
            }
            let mut d_bn_out = Vec::with_capacity(n);
            for s in 0..n {
                let g_fc_act = dense_backward(&hc.fc_act[s], &mut head.pred, &[d_head_logit[h][s]])?;
                let g_fc_pre: Vec<T> = g_fc_act
                    .iter()
                    .zip(&hc.fc_pre[s])
                    .map(|(&g, &pre)| relu_backward(pre, g))
                    .collect();
                let g_flat = dense_backward(&hc.flat[s], &mut head.fc, &g_fc_pre)?;
                let g_pooled = hc.drop[s].backward(&g_flat);
                let g_pooled = FeatureMap::from_raw(head.config.n_filters, hc.pool[s].output_length, g_pooled);
                let mut g_act = maxpool1d_backward(&g_pooled, &hc.pool[s])?;
                for (g, &pre) in g_act.as_mut_slice().iter_mut().zip(hc.bn_out[s].as_slice()) {
                    *g = relu_backward(pre, *g);
                }
                d_bn_out.push(g_act);
            }
            if head.feature_layers_frozen() {
                continue;
            }
            let d_conv_out = head.bn.backward(&hc.bn, &d_bn_out)?;
            for (x, g) in cache.inputs.iter().zip(&d_conv_out) {
                conv1d_backward(x, &mut head.conv, g)?;
            }
        }
        Ok(loss * inv_n)
    }

    /// Inference on one input matrix. Pure: equal inputs give bit-identical
    /// outputs regardless of what else is being evaluated.
    pub fn forward_map(&self, x: &FeatureMap<T>) -> Result<Prediction<T>> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut cache = self.forward_batch(std::slice::from_ref(x), Mode::Infer, &mut rng)?;
        Ok(cache.outputs.pop().expect("one output per input"))
    }

    /// Conv output of head `h` for one input, before batch norm.
    pub fn head_conv_features(&self, x: &FeatureMap<T>, h: usize) -> Result<FeatureMap<T>> {
        self.check_input(x)?;
        let head = self
            .heads
            .get(h)
            .ok_or_else(|| Error::Config(format!("no head {h}")))?;
        conv1d_valid(x, &head.conv)
    }

    /// Named tensors in file order, including batch-norm running statistics.
    pub fn tensors(&self) -> Vec<(String, Vec<usize>, &[T])> {
        let mut out: Vec<(String, Vec<usize>, &[T])> = Vec::new();
        for (i, h) in self.heads.iter().enumerate() {
            for (name, shape, data) in head_tensors(i, h) {
                out.push((name, shape, data));
            }
        }
        for t in &self.trunk {
            out.push((format!("{}.weight", t.name), t.weight_shape.clone(), &t.weights));
            out.push((format!("{}.bias", t.name), vec![t.bias.len()], &t.bias));
        }
        out
    }

    pub(crate) fn tensor_mut(&mut self, name: &str) -> Option<&mut Vec<T>> {
        for h in &mut self.heads {
            let bn = &mut h.bn;
            let candidates: [(String, &mut Vec<T>); 10] = [
                (format!("{}.weight", h.conv.name), &mut h.conv.weights),
                (format!("{}.bias", h.conv.name), &mut h.conv.bias),
                (format!("{}.gamma", bn.params.name), &mut bn.params.weights),
                (format!("{}.beta", bn.params.name), &mut bn.params.bias),
                (format!("{}.running_mean", bn.params.name), &mut bn.running_mean),
                (format!("{}.running_var", bn.params.name), &mut bn.running_var),
                (format!("{}.weight", h.fc.name), &mut h.fc.weights),
                (format!("{}.bias", h.fc.name), &mut h.fc.bias),
                (format!("{}.weight", h.pred.name), &mut h.pred.weights),
                (format!("{}.bias", h.pred.name), &mut h.pred.bias),
            ];
            for (n, t) in candidates {
                if n == name {
                    return Some(t);
                }
            }
        }
        for t in &mut self.trunk {
            if name == format!("{}.weight", t.name) {
                return Some(&mut t.weights);
            }
            if name == format!("{}.bias", t.name) {
                return Some(&mut t.bias);
            }
        }
        None
    }

    /// SHA-256 over every tensor (as little-endian f32) in file order.
    pub fn digest(&self) -> String {
        digest_of(self.tensors())
    }

    /// Digest of one head's tensors, running statistics included.
    pub fn head_digest(&self, h: usize) -> String {
        digest_of(head_tensors(h, &self.heads[h]))
    }

    pub fn trunk_digest(&self) -> String {
        digest_of(
            self.trunk
                .iter()
                .flat_map(|t| [(String::new(), vec![], &t.weights[..]), (String::new(), vec![], &t.bias[..])]),
        )
    }
}

fn head_tensors<T: Real>(i: usize, h: &Head<T>) -> Vec<(String, Vec<usize>, &[T])> {
    let ch = vec![h.bn.channels()];
    vec![
        (format!("head{i}.conv.weight"), h.conv.weight_shape.clone(), &h.conv.weights[..]),
        (format!("head{i}.conv.bias"), vec![h.conv.bias.len()], &h.conv.bias[..]),
        (format!("head{i}.bn.gamma"), ch.clone(), &h.bn.params.weights[..]),
        (format!("head{i}.bn.beta"), ch.clone(), &h.bn.params.bias[..]),
        (format!("head{i}.bn.running_mean"), ch.clone(), &h.bn.running_mean[..]),
        (format!("head{i}.bn.running_var"), ch, &h.bn.running_var[..]),
        (format!("head{i}.fc.weight"), h.fc.weight_shape.clone(), &h.fc.weights[..]),
        (format!("head{i}.fc.bias"), vec![h.fc.bias.len()], &h.fc.bias[..]),
        (format!("head{i}.pred.weight"), h.pred.weight_shape.clone(), &h.pred.weights[..]),
        (format!("head{i}.pred.bias"), vec![h.pred.bias.len()], &h.pred.bias[..]),
    ]
}

pub(crate) fn tensor_bytes<T: Real>(data: &[T], out: &mut Vec<u8>) {
    for v in data {
        let f = v.to_f32().expect("Real converts to f32");
        out.extend_from_slice(&f.to_le_bytes());
    }
}

fn digest_of<'a, T: Real>(tensors: impl IntoIterator<Item = (String, Vec<usize>, &'a [T])>) -> String {
    let mut hasher = Sha256::new();
    let mut buf = Vec::new();
    for (_, _, data) in tensors {
        buf.clear();
        tensor_bytes(data, &mut buf);
        hasher.update(&buf);
    }
    hex::encode(hasher.finalize())
}

impl SleepNet<f32> {
    /// Inference on a normalized window.
    pub fn forward(&self, window: &FeatureWindow) -> Result<Prediction<f32>> {
        if !window.normalized {
            return Err(Error::Data("window must be normalized before inference".into()));
        }
        self.forward_map(&window.features)
    }

    /// Normalizes a raw window with the model's statistics and runs inference.
    pub fn predict_raw(&self, window: &FeatureWindow) -> Result<Prediction<f32>> {
        if window.normalized {
            return self.forward(window);
        }
        let norm = self
            .norm
            .as_ref()
            .ok_or_else(|| Error::Data("model has no normalization statistics".into()))?;
        self.forward(&apply_normalizer(window, norm)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_build() {
        let m: SleepNet<f32> = build_model(ModelConfig::default()).unwrap();
        assert_eq!(m.heads.len(), 4);
        let x = FeatureMap::zeros(5, 30);
        let lens: Vec<usize> = (0..4).map(|h| m.head_conv_features(&x, h).unwrap().length()).collect();
        assert_eq!(lens, vec![28, 26, 24, 20]);
        assert!((10_000..25_000).contains(&m.n_params()), "{}", m.n_params());
    }

    #[test]
    fn seeded_digest() {
        let a: SleepNet<f32> = build_model(ModelConfig { seed: 5, ..Default::default() }).unwrap();
        let b: SleepNet<f32> = build_model(ModelConfig { seed: 5, ..Default::default() }).unwrap();
        let c: SleepNet<f32> = build_model(ModelConfig { seed: 6, ..Default::default() }).unwrap();
        assert_eq!(a.digest(), b.digest());
        assert_ne!(a.digest(), c.digest());
    }

    #[test]
    fn kernel_wider_than_window() {
        let mut c = ModelConfig::default();
        c.heads[0].kernel_width = 31;
        assert!(matches!(build_model::<f32>(c), Err(Error::Config(_))));
    }

    #[test]
    fn zero_final_layer_gives_half() {
        let mut m: SleepNet<f32> = build_model(ModelConfig::default()).unwrap();
        let last = m.trunk.last_mut().unwrap();
        last.weights.fill(0.0);
        last.bias.fill(0.0);
        let x = FeatureMap::new(5, 30, (0..150).map(|i| (i as f32 * 0.37).sin()).collect()).unwrap();
        let p = m.forward_map(&x).unwrap();
        assert_eq!(p.p_final, 0.5);
        assert!(p.p_heads.iter().all(|p| (0.0..=1.0).contains(p)));
    }

    #[test]
    fn wrong_shape_and_unnormalized_rejected() {
        let m: SleepNet<f32> = build_model(ModelConfig::default()).unwrap();
        assert!(m.forward_map(&FeatureMap::zeros(5, 29)).is_err());
        let w = FeatureWindow {
            features: FeatureMap::zeros(5, 30),
            start_epoch: 0,
            end_timestamp: 900,
            label: None,
            normalized: false,
        };
        assert!(m.forward(&w).is_err());
        assert!(m.predict_raw(&w).is_err(), "no normalization statistics");
    }

    #[test]
    fn transfer_freeze_flags() {
        let mut m: SleepNet<f32> = build_model(ModelConfig::default()).unwrap();
        m.set_transfer_freeze();
        assert!(m.heads.iter().all(|h| h.fully_frozen()));
        assert!(m.trunk.iter().all(|t| !t.frozen));
        m.config.transfer_trains_intermediate = true;
        m.set_transfer_freeze();
        assert!(m.heads.iter().all(|h| h.feature_layers_frozen() && !h.fc.frozen));
    }
}
