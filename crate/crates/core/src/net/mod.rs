//! The 3D-2D regression network.
//!
//! Trunk: four Conv3D+ReLU+BN blocks densely concatenated (channel
//! progression 32 -> 64 -> 96 -> 128), a reshape that folds depth into
//! channels, then five SepConv2D+ReLU+BN blocks (512, 320, 256, 128, 32)
//! interleaved with three dropout layers. The head is a 3x3 Conv2D+ReLU that
//! keeps 5x5 (padding 1) or shrinks to 3x3 (padding 0); the scalar-output
//! variant appends a bias-free fully-connected layer over the 9 remaining
//! values, followed by a final ReLU so predicted yields stay non-negative.

pub mod checkpoint;
pub mod layers;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use layers::{
    concat_channels, dropout_backward, dropout_forward, relu, relu_backward, split_channels,
    BatchNorm, BnCache, Conv2d, Conv3d, DenseNoBias, SepConv2d,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

/// Output channels of every Conv3D block.
const CONV3D_WIDTH: usize = 32;
/// Running concatenation widths after each block.
const CONCAT_WIDTHS: [usize; 3] = [64, 96, 128];
/// SepConv2D output widths.
const SEP_WIDTHS: [usize; 5] = [512, 320, 256, 128, 32];
/// Default batch-norm momentum and epsilon.
const BN_MOMENTUM: f64 = 0.9;
const BN_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelConfig {
    /// Input window size W.
    pub window: usize,
    /// Input channel count n.
    pub channels: usize,
    /// Output window size N (5, 3 or 1).
    pub output: usize,
    pub dropout: f64,
}

impl ModelConfig {
    pub fn new(channels: usize, output: usize) -> Result<Self> {
        let cfg = ModelConfig {
            window: 5,
            channels,
            output,
            dropout: 0.5,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.window != 5 {
            return Err(Error::InvalidConfig(format!(
                "input window must be 5, got {}",
                self.window
            )));
        }
        if ![1, 3, 5].contains(&self.output) {
            return Err(Error::InvalidConfig(format!(
                "output window must be 1, 3 or 5, got {}",
                self.output
            )));
        }
        if self.channels == 0 {
            return Err(Error::InvalidConfig("channel count must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidConfig(format!(
                "dropout rate {} must lie in [0, 1)",
                self.dropout
            )));
        }
        Ok(())
    }

    /// Width of the channel axis after folding depth into channels.
    pub fn reshaped_channels(&self) -> usize {
        CONCAT_WIDTHS[2] * self.channels
    }

    fn head_padding(&self) -> usize {
        usize::from(self.output == 5)
    }
}

#[derive(Clone, Debug)]
pub struct Network<T> {
    pub config: ModelConfig,
    conv3d: Vec<Conv3d<T>>,
    bn3d: Vec<BatchNorm<T>>,
    sep: Vec<SepConv2d<T>>,
    bn2d: Vec<BatchNorm<T>>,
    head: Conv2d<T>,
    head_fc: Option<DenseNoBias<T>>,
}

/// Everything the backward pass needs from a train-mode forward.
pub struct ForwardCache<T> {
    x: Tensor<T>,
    /// Inputs to conv3d blocks 2..4 (block 1 reads `x`).
    y1: Tensor<T>,
    c1: Tensor<T>,
    c2: Tensor<T>,
    z3d: Vec<Tensor<T>>,
    bn3d: Vec<BnCache<T>>,
    drop_masks: Vec<Vec<bool>>,
    /// Inputs to the five sepconv blocks.
    sep_in: Vec<Tensor<T>>,
    sep_mid: Vec<Tensor<T>>,
    sep_z: Vec<Tensor<T>>,
    bn2d: Vec<BnCache<T>>,
    head_in: Tensor<T>,
    head_z: Tensor<T>,
    fc_in: Option<Tensor<T>>,
    fc_z: Option<Tensor<T>>,
}

/// Per-block gradients, aligned with [`Network::visit_params`] order.
pub struct Gradients<T> {
    pub names: Vec<String>,
    pub values: Vec<Vec<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, name: &str) -> Option<&[T]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.values[i].as_slice())
    }
}

impl<T: Scalar> Network<T> {
    /// Zero-initialized network of the given configuration.
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut conv3d = Vec::new();
        let mut bn3d = Vec::new();
        let mut c_in = 1;
        for _ in 0..4 {
            conv3d.push(Conv3d::zeros(c_in, CONV3D_WIDTH));
            bn3d.push(BatchNorm::new(CONV3D_WIDTH, BN_MOMENTUM, BN_EPS));
            c_in = if c_in == 1 {
                CONV3D_WIDTH
            } else {
                c_in + CONV3D_WIDTH
            };
        }
        debug_assert_eq!(c_in, CONCAT_WIDTHS[2]);

        let mut sep = Vec::new();
        let mut bn2d = Vec::new();
        let mut s_in = config.reshaped_channels();
        for &width in &SEP_WIDTHS {
            sep.push(SepConv2d::zeros(s_in, width));
            bn2d.push(BatchNorm::new(width, BN_MOMENTUM, BN_EPS));
            s_in = width;
        }

        let head = Conv2d::zeros(SEP_WIDTHS[4], 1, config.head_padding());
        let head_fc = (config.output == 1).then(|| DenseNoBias::zeros(9));
        Ok(Network {
            config,
            conv3d,
            bn3d,
            sep,
            bn2d,
            head,
            head_fc,
        })
    }

    /// Seeded initialization: kernels from a fan-in-scaled uniform
    /// distribution, biases and shifts zero, gains one. The head draws last
    /// so trunks of different head variants share bytes under one seed.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fill = |t: &mut [T], fan_in: usize| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for v in t.iter_mut() {
                *v = T::from_f64((rng.random::<f64>() * 2.0 - 1.0) * bound);
            }
        };
        for conv in &mut net.conv3d {
            let fan_in = 27 * conv.c_in();
            fill(conv.kernel.data_mut(), fan_in);
        }
        for s in &mut net.sep {
            fill(s.depthwise.data_mut(), 9);
            let fan_in = s.c_in();
            fill(s.pointwise.data_mut(), fan_in);
        }
        let fan_in = 9 * net.head.c_in();
        fill(net.head.kernel.data_mut(), fan_in);
        if let Some(fc) = &mut net.head_fc {
            fill(&mut fc.weights, 9);
        }
        Ok(net)
    }

    // -- parameter plumbing --------------------------------------------------

    /// Visit every trainable block in fixed order.
    pub fn visit_params(&self, f: &mut impl FnMut(&str, &[T])) {
        for (i, (conv, bn)) in self.conv3d.iter().zip(&self.bn3d).enumerate() {
            let n = i + 1;
            f(&format!("conv3d_{n}.kernel"), conv.kernel.data());
            f(&format!("conv3d_{n}.bias"), &conv.bias);
            f(&format!("bn3d_{n}.gamma"), &bn.gamma);
            f(&format!("bn3d_{n}.beta"), &bn.beta);
        }
        for (i, (s, bn)) in self.sep.iter().zip(&self.bn2d).enumerate() {
            let n = i + 1;
            f(&format!("sep_{n}.depthwise"), s.depthwise.data());
            f(&format!("sep_{n}.pointwise"), s.pointwise.data());
            f(&format!("sep_{n}.bias"), &s.bias);
            f(&format!("bn2d_{n}.gamma"), &bn.gamma);
            f(&format!("bn2d_{n}.beta"), &bn.beta);
        }
        f("head.kernel", self.head.kernel.data());
        f("head.bias", &self.head.bias);
        if let Some(fc) = &self.head_fc {
            f("head.fc", &fc.weights);
        }
    }

    /// Mutable visit over the same blocks in the same order.
    pub fn visit_params_mut(&mut self, f: &mut impl FnMut(&str, &mut [T])) {
        for i in 0..self.conv3d.len() {
            let n = i + 1;
            f(&format!("conv3d_{n}.kernel"), self.conv3d[i].kernel.data_mut());
            f(&format!("conv3d_{n}.bias"), &mut self.conv3d[i].bias);
            f(&format!("bn3d_{n}.gamma"), &mut self.bn3d[i].gamma);
            f(&format!("bn3d_{n}.beta"), &mut self.bn3d[i].beta);
        }
        for i in 0..self.sep.len() {
            let n = i + 1;
            f(&format!("sep_{n}.depthwise"), self.sep[i].depthwise.data_mut());
            f(&format!("sep_{n}.pointwise"), self.sep[i].pointwise.data_mut());
            f(&format!("sep_{n}.bias"), &mut self.sep[i].bias);
            f(&format!("bn2d_{n}.gamma"), &mut self.bn2d[i].gamma);
            f(&format!("bn2d_{n}.beta"), &mut self.bn2d[i].beta);
        }
        f("head.kernel", self.head.kernel.data_mut());
        f("head.bias", &mut self.head.bias);
        if let Some(fc) = &mut self.head_fc {
            f("head.fc", &mut fc.weights);
        }
    }

    /// Visit non-trainable state (batch-norm running statistics).
    pub fn visit_state(&self, f: &mut impl FnMut(&str, &[T])) {
        for (i, bn) in self.bn3d.iter().enumerate() {
            f(&format!("bn3d_{}.running_mean", i + 1), &bn.running_mean);
            f(&format!("bn3d_{}.running_var", i + 1), &bn.running_var);
        }
        for (i, bn) in self.bn2d.iter().enumerate() {
            f(&format!("bn2d_{}.running_mean", i + 1), &bn.running_mean);
            f(&format!("bn2d_{}.running_var", i + 1), &bn.running_var);
        }
    }

    pub fn visit_state_mut(&mut self, f: &mut impl FnMut(&str, &mut [T])) {
        for i in 0..self.bn3d.len() {
            f(&format!("bn3d_{}.running_mean", i + 1), &mut self.bn3d[i].running_mean);
            f(&format!("bn3d_{}.running_var", i + 1), &mut self.bn3d[i].running_var);
        }
        for i in 0..self.bn2d.len() {
            f(&format!("bn2d_{}.running_mean", i + 1), &mut self.bn2d[i].running_mean);
            f(&format!("bn2d_{}.running_var", i + 1), &mut self.bn2d[i].running_var);
        }
    }

    pub fn param_count(&self) -> usize {
        let mut total = 0;
        self.visit_params(&mut |_, slice| total += slice.len());
        total
    }

    // -- forward -------------------------------------------------------------

    fn check_input(&self, x: &Tensor<T>) -> Result<usize> {
        let w = self.config.window;
        let n = self.config.channels;
        match *x.dims() {
            [b, h, ww, d, c] if h == w && ww == w && d == n && c == 1 => Ok(b),
            _ => Err(Error::ShapeMismatch(format!(
                "expected [b, {w}, {w}, {n}, 1], got {:?}",
                x.dims()
            ))),
        }
    }

    /// Train-mode forward pass. Dropout draws from `rng`; batch-norm batch
    /// statistics are captured in the cache and are only folded into the
    /// running statistics by [`Network::commit_running_stats`].
    pub fn forward_train(
        &self,
        x: &Tensor<T>,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Tensor<T>, ForwardCache<T>)> {
        let batch = self.check_input(x)?;
        let rate = self.config.dropout;

        // 3-D stage with dense concatenation
        let z1 = self.conv3d[0].forward(x);
        let (y1, bnc1) = self.bn3d[0].forward_train(&relu(&z1));
        let z2 = self.conv3d[1].forward(&y1);
        let (y2, bnc2) = self.bn3d[1].forward_train(&relu(&z2));
        let c1 = concat_channels(&y1, &y2);
        let z3 = self.conv3d[2].forward(&c1);
        let (y3, bnc3) = self.bn3d[2].forward_train(&relu(&z3));
        let c2 = concat_channels(&c1, &y3);
        let z4 = self.conv3d[3].forward(&c2);
        let (y4, bnc4) = self.bn3d[3].forward_train(&relu(&z4));
        let c3 = concat_channels(&c2, &y4);
        debug_assert_eq!(*c3.dims().last().unwrap(), CONCAT_WIDTHS[2]);

        // fold depth into channels: [b, 5, 5, n, 128] -> [b, 5, 5, 128 n]
        let w = self.config.window;
        let folded = self.config.reshaped_channels();
        let r = c3.reshape(&[batch, w, w, folded])?;

        let (d1, m1) = dropout_forward(&r, rate, rng);

        let mut sep_in = Vec::with_capacity(5);
        let mut sep_mid = Vec::with_capacity(5);
        let mut sep_z = Vec::with_capacity(5);
        let mut bn2d_caches = Vec::with_capacity(5);
        let mut drop_masks = vec![m1];

        let mut cur = d1;
        for i in 0..5 {
            sep_in.push(cur.clone());
            let (z, mid) = self.sep[i].forward(&cur);
            let (y, bnc) = self.bn2d[i].forward_train(&relu(&z));
            sep_mid.push(mid);
            sep_z.push(z);
            bn2d_caches.push(bnc);
            // dropout after the second and third blocks (plus the one
            // ahead of the first)
            cur = if i == 1 || i == 2 {
                let (d, m) = dropout_forward(&y, rate, rng);
                drop_masks.push(m);
                d
            } else {
                y
            };
        }
        let head_in = cur;
        let head_z = self.head.forward(&head_in);
        let head_a = relu(&head_z);

        let (out, fc_in, fc_z) = if self.config.output == 1 {
            let fc_in = head_a.clone().reshape(&[batch, 9])?;
            let fc = self.head_fc.as_ref().expect("scalar head has an fc layer");
            let fc_z = fc.forward(&fc_in);
            (relu(&fc_z), Some(fc_in), Some(fc_z))
        } else {
            let n = self.config.output;
            (head_a.reshape(&[batch, n, n])?, None, None)
        };

        let cache = ForwardCache {
            x: x.clone(),
            y1,
            c1,
            c2,
            z3d: vec![z1, z2, z3, z4],
            bn3d: vec![bnc1, bnc2, bnc3, bnc4],
            drop_masks,
            sep_in,
            sep_mid,
            sep_z,
            bn2d: bn2d_caches,
            head_in,
            head_z,
            fc_in,
            fc_z,
        };
        Ok((out, cache))
    }

    /// Eval-mode forward: batch norm uses running statistics, dropout is the
    /// identity.
    pub fn forward_eval(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let batch = self.check_input(x)?;
        let z1 = self.conv3d[0].forward(x);
        let y1 = self.bn3d[0].forward_eval(&relu(&z1));
        let z2 = self.conv3d[1].forward(&y1);
        let y2 = self.bn3d[1].forward_eval(&relu(&z2));
        let c1 = concat_channels(&y1, &y2);
        let z3 = self.conv3d[2].forward(&c1);
        let y3 = self.bn3d[2].forward_eval(&relu(&z3));
        let c2 = concat_channels(&c1, &y3);
        let z4 = self.conv3d[3].forward(&c2);
        let y4 = self.bn3d[3].forward_eval(&relu(&z4));
        let c3 = concat_channels(&c2, &y4);

        let w = self.config.window;
        let mut cur = c3.reshape(&[batch, w, w, self.config.reshaped_channels()])?;
        for i in 0..5 {
            let (z, _) = self.sep[i].forward(&cur);
            cur = self.bn2d[i].forward_eval(&relu(&z));
        }
        let head_a = relu(&self.head.forward(&cur));
        if self.config.output == 1 {
            let fc_in = head_a.reshape(&[batch, 9])?;
            let fc = self.head_fc.as_ref().expect("scalar head has an fc layer");
            Ok(relu(&fc.forward(&fc_in)))
        } else {
            let n = self.config.output;
            head_a.reshape(&[batch, n, n])
        }
    }

    /// Fold the cached batch statistics into the running statistics. Called
    /// once per optimizer step by the trainer.
    pub fn commit_running_stats(&mut self, cache: &ForwardCache<T>) {
        for (bn, c) in self.bn3d.iter_mut().zip(&cache.bn3d) {
            bn.update_running(c);
        }
        for (bn, c) in self.bn2d.iter_mut().zip(&cache.bn2d) {
            bn.update_running(c);
        }
    }

    // -- backward ------------------------------------------------------------

    /// Backpropagate `d_out` (gradient of the loss w.r.t. the network output)
    /// through the cached forward pass. Returns gradients for every trainable
    /// block plus the gradient w.r.t. the input.
    pub fn backward(
        &self,
        cache: &ForwardCache<T>,
        d_out: &Tensor<T>,
    ) -> Result<(Gradients<T>, Tensor<T>)> {
        let batch = cache.x.dims()[0];
        let w = self.config.window;
        let rate = self.config.dropout;

        let mut grads = Gradients {
            names: Vec::new(),
            values: Vec::new(),
        };

        // head
        let (mut d_head_a, d_fc_w) = if self.config.output == 1 {
            let fc = self.head_fc.as_ref().expect("scalar head has an fc layer");
            let fc_z = cache.fc_z.as_ref().expect("cache from a scalar head");
            let fc_in = cache.fc_in.as_ref().expect("cache from a scalar head");
            let d_fc_z = relu_backward(fc_z, d_out);
            let (dw, d_fc_in) = fc.backward(fc_in, &d_fc_z);
            let ho = self.head.out_size(w);
            (d_fc_in.reshape(&[batch, ho, ho, 1])?, Some(dw))
        } else {
            let n = self.config.output;
            (d_out.clone().reshape(&[batch, n, n, 1])?, None)
        };
        d_head_a = relu_backward(&cache.head_z, &d_head_a);
        let (d_head_k, d_head_b, d_head_in) = self.head.backward(&cache.head_in, &d_head_a);

        // 2-D stage, walking the five blocks backwards
        let mut sep_grads: Vec<(Tensor<T>, Tensor<T>, Vec<T>)> = Vec::with_capacity(5);
        let mut bn2d_grads: Vec<(Vec<T>, Vec<T>)> = Vec::with_capacity(5);
        let mut d_cur = d_head_in;
        for i in (0..5).rev() {
            // dropout sits after blocks 2 and 3 (indices 1 and 2)
            if i == 1 || i == 2 {
                d_cur = dropout_backward(&d_cur, &cache.drop_masks[i], rate);
            }
            let a = relu(&cache.sep_z[i]);
            let (dg, db, d_a) = self.bn2d[i].backward_train(&a, &cache.bn2d[i], &d_cur);
            let d_z = relu_backward(&cache.sep_z[i], &d_a);
            let (ddw, dpw, dbias, d_in) =
                self.sep[i].backward(&cache.sep_in[i], &cache.sep_mid[i], &d_z);
            bn2d_grads.push((dg, db));
            sep_grads.push((ddw, dpw, dbias));
            d_cur = d_in;
        }
        sep_grads.reverse();
        bn2d_grads.reverse();

        // through the first dropout and the reshape back to 5 axes
        let d_r = dropout_backward(&d_cur, &cache.drop_masks[0], rate);
        let n_ch = self.config.channels;
        let d_c3 = d_r.reshape(&[batch, w, w, n_ch, CONCAT_WIDTHS[2]])?;

        // 3-D stage: unwind the dense concatenation
        let mut conv_grads: Vec<(Tensor<T>, Vec<T>)> = Vec::with_capacity(4);
        let mut bn3d_grads: Vec<(Vec<T>, Vec<T>)> = Vec::with_capacity(4);

        // block 4
        let (mut d_c2, d_y4) = split_channels(&d_c3, CONCAT_WIDTHS[1]);
        {
            let a = relu(&cache.z3d[3]);
            let (dg, db, d_a) = self.bn3d[3].backward_train(&a, &cache.bn3d[3], &d_y4);
            let d_z = relu_backward(&cache.z3d[3], &d_a);
            let (dk, dbias, d_in) = self.conv3d[3].backward(&cache.c2, &d_z);
            add_into(&mut d_c2, &d_in);
            bn3d_grads.push((dg, db));
            conv_grads.push((dk, dbias));
        }
        // block 3
        let (mut d_c1, d_y3) = split_channels(&d_c2, CONCAT_WIDTHS[0]);
        {
            let a = relu(&cache.z3d[2]);
            let (dg, db, d_a) = self.bn3d[2].backward_train(&a, &cache.bn3d[2], &d_y3);
            let d_z = relu_backward(&cache.z3d[2], &d_a);
            let (dk, dbias, d_in) = self.conv3d[2].backward(&cache.c1, &d_z);
            add_into(&mut d_c1, &d_in);
            bn3d_grads.push((dg, db));
            conv_grads.push((dk, dbias));
        }
        // block 2
        let (mut d_y1, d_y2) = split_channels(&d_c1, CONV3D_WIDTH);
        {
            let a = relu(&cache.z3d[1]);
            let (dg, db, d_a) = self.bn3d[1].backward_train(&a, &cache.bn3d[1], &d_y2);
            let d_z = relu_backward(&cache.z3d[1], &d_a);
            let (dk, dbias, d_in) = self.conv3d[1].backward(&cache.y1, &d_z);
            add_into(&mut d_y1, &d_in);
            bn3d_grads.push((dg, db));
            conv_grads.push((dk, dbias));
        }
        // block 1
        let d_x;
        {
            let a = relu(&cache.z3d[0]);
            let (dg, db, d_a) = self.bn3d[0].backward_train(&a, &cache.bn3d[0], &d_y1);
            let d_z = relu_backward(&cache.z3d[0], &d_a);
            let (dk, dbias, d_in) = self.conv3d[0].backward(&cache.x, &d_z);
            d_x = d_in;
            bn3d_grads.push((dg, db));
            conv_grads.push((dk, dbias));
        }
        conv_grads.reverse();
        bn3d_grads.reverse();

        // assemble in visit_params order
        for (i, ((dk, dbias), (dg, db))) in conv_grads.into_iter().zip(bn3d_grads).enumerate() {
            let n = i + 1;
            grads.push(format!("conv3d_{n}.kernel"), dk.into_data());
            grads.push(format!("conv3d_{n}.bias"), dbias);
            grads.push(format!("bn3d_{n}.gamma"), dg);
            grads.push(format!("bn3d_{n}.beta"), db);
        }
        for (i, ((ddw, dpw, dbias), (dg, db))) in
            sep_grads.into_iter().zip(bn2d_grads).enumerate()
        {
            let n = i + 1;
            grads.push(format!("sep_{n}.depthwise"), ddw.into_data());
            grads.push(format!("sep_{n}.pointwise"), dpw.into_data());
            grads.push(format!("sep_{n}.bias"), dbias);
            grads.push(format!("bn2d_{n}.gamma"), dg);
            grads.push(format!("bn2d_{n}.beta"), db);
        }
        grads.push("head.kernel".to_string(), d_head_k.into_data());
        grads.push("head.bias".to_string(), d_head_b);
        if let Some(dw) = d_fc_w {
            grads.push("head.fc".to_string(), dw);
        }
        Ok((grads, d_x))
    }

    /// Per-stage output shapes (without the batch axis) of one forward pass.
    pub fn shape_trace(&self) -> Result<Vec<(String, Vec<usize>)>> {
        let cfg = &self.config;
        let (w, n) = (cfg.window, cfg.channels);
        let mut trace: Vec<(String, Vec<usize>)> = vec![("input".into(), vec![w, w, n, 1])];
        let mut push = |name: &str, dims: Vec<usize>| trace.push((name.into(), dims));
        push("conv3d_1", vec![w, w, n, CONV3D_WIDTH]);
        push("conv3d_2", vec![w, w, n, CONV3D_WIDTH]);
        push("concat_1", vec![w, w, n, CONCAT_WIDTHS[0]]);
        push("conv3d_3", vec![w, w, n, CONV3D_WIDTH]);
        push("concat_2", vec![w, w, n, CONCAT_WIDTHS[1]]);
        push("conv3d_4", vec![w, w, n, CONV3D_WIDTH]);
        push("concat_3", vec![w, w, n, CONCAT_WIDTHS[2]]);
        push("reshape", vec![w, w, cfg.reshaped_channels()]);
        push("dropout_1", vec![w, w, cfg.reshaped_channels()]);
        push("sepconv_1", vec![w, w, SEP_WIDTHS[0]]);
        push("sepconv_2", vec![w, w, SEP_WIDTHS[1]]);
        push("dropout_2", vec![w, w, SEP_WIDTHS[1]]);
        push("sepconv_3", vec![w, w, SEP_WIDTHS[2]]);
        push("dropout_3", vec![w, w, SEP_WIDTHS[2]]);
        push("sepconv_4", vec![w, w, SEP_WIDTHS[3]]);
        push("sepconv_5", vec![w, w, SEP_WIDTHS[4]]);
        let ho = self.head.out_size(w);
        push("head_conv", vec![ho, ho, 1]);
        if cfg.output == 1 {
            push("head_reshape", vec![9, 1]);
            push("head_fc", vec![1]);
        }

        // verify against a live forward pass
        let x = Tensor::zeros(&[1, w, w, n, 1]);
        let out = self.forward_eval(&x)?;
        let want: &[usize] = if cfg.output == 1 {
            &[1, 1]
        } else {
            &[1, cfg.output, cfg.output]
        };
        if out.dims() != want {
            return Err(Error::ShapeMismatch(format!(
                "forward produced {:?}, expected {:?}",
                out.dims(),
                want
            )));
        }
        Ok(trace)
    }
}

impl<T: Scalar> Gradients<T> {
    fn push(&mut self, name: String, values: Vec<T>) {
        self.names.push(name);
        self.values.push(values);
    }
}

fn add_into<T: Scalar>(acc: &mut Tensor<T>, extra: &Tensor<T>) {
    debug_assert_eq!(acc.dims(), extra.dims());
    for (a, &b) in acc.data_mut().iter_mut().zip(extra.data()) {
        *a += b;
    }
}

// ---------------------------------------------------------------------------
// Closed-form parameter accounting
// ---------------------------------------------------------------------------

/// Per-layer trainable parameter counts.
pub fn count_params(config: &ModelConfig) -> Vec<(String, usize)> {
    let mut rows = Vec::new();
    let mut c_in = 1;
    for i in 0..4 {
        rows.push((
            format!("conv3d_{}", i + 1),
            Conv3d::<f64>::param_count(c_in, CONV3D_WIDTH),
        ));
        rows.push((format!("bn3d_{}", i + 1), 2 * CONV3D_WIDTH));
        c_in = if c_in == 1 {
            CONV3D_WIDTH
        } else {
            c_in + CONV3D_WIDTH
        };
    }
    let mut s_in = config.reshaped_channels();
    for (i, &width) in SEP_WIDTHS.iter().enumerate() {
        rows.push((
            format!("sep_{}", i + 1),
            SepConv2d::<f64>::param_count(s_in, width),
        ));
        rows.push((format!("bn2d_{}", i + 1), 2 * width));
        s_in = width;
    }
    rows.push(("head_conv".to_string(), Conv2d::<f64>::param_count(SEP_WIDTHS[4], 1)));
    if config.output == 1 {
        // bias-free: nine weights over the flattened 3x3 map
        rows.push(("head_fc".to_string(), 9));
    }
    rows
}

pub fn total_params(config: &ModelConfig) -> usize {
    count_params(config).iter().map(|(_, n)| n).sum()
}

/// Parameter count of the rejected design alternative: a fully-connected
/// head with 25 outputs reading the flattened (5, 5, 32) feature map.
pub fn fc_head_alternative_params() -> usize {
    let inputs = 5 * 5 * SEP_WIDTHS[4];
    inputs * 25 + 25
}
