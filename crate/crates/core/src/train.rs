//! Mini-batch MSE training with the Adadelta optimizer.
//!
//! Adadelta keeps decaying accumulators of squared gradients and squared
//! updates, so there is no global learning rate anywhere in the trainer; the
//! step scale bootstraps from epsilon. Model selection keeps the parameters
//! with the lowest validation MSE (or training MSE when no validation split
//! is supplied).

use crate::error::{Error, Result};
use crate::net::checkpoint::Checkpoint;
use crate::net::{Gradients, ModelConfig, Network};
use crate::normalize::Normalizer;
use crate::sampling::{DatasetSplit, Sample};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Adadelta decay.
    pub rho: f64,
    /// Adadelta stabilizer.
    pub eps: f64,
    /// Stop after this many epochs without improvement, if set.
    pub patience: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 96,
            epochs: 500,
            seed: 0,
            rho: 0.95,
            eps: 1e-6,
            patience: None,
        }
    }
}

/// Mean over every batch and pixel entry of `(pred - target)^2`, plus its
/// gradient `2 (pred - target) / count`.
pub fn mse_loss<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<(T, Tensor<T>)> {
    if pred.dims() != target.dims() {
        return Err(Error::ShapeMismatch(format!(
            "prediction {:?} vs target {:?}",
            pred.dims(),
            target.dims()
        )));
    }
    let count = T::from_usize(pred.len());
    let mut loss = T::zero();
    let mut grad = Tensor::zeros(pred.dims());
    for ((&p, &t), g) in pred
        .data()
        .iter()
        .zip(target.data())
        .zip(grad.data_mut().iter_mut())
    {
        let d = p - t;
        loss += d * d;
        *g = T::from_f64(2.0) * d / count;
    }
    Ok((loss / count, grad))
}

/// Per-block accumulators `E[g^2]` and `E[dx^2]`, zero at initialization.
#[derive(Clone, Debug)]
pub struct AdadeltaState<T> {
    pub sq_grad: Vec<Vec<T>>,
    pub sq_update: Vec<Vec<T>>,
    pub rho: f64,
    pub eps: f64,
}

impl<T: Scalar> AdadeltaState<T> {
    pub fn new_for(net: &Network<T>, rho: f64, eps: f64) -> Self {
        let mut sizes = Vec::new();
        net.visit_params(&mut |_, slice| sizes.push(slice.len()));
        AdadeltaState {
            sq_grad: sizes.iter().map(|&n| vec![T::zero(); n]).collect(),
            sq_update: sizes.iter().map(|&n| vec![T::zero(); n]).collect(),
            rho,
            eps,
        }
    }
}

/// One elementwise Adadelta update:
/// `E[g^2] <- rho E[g^2] + (1 - rho) g^2`,
/// `dx    <- -sqrt(E[dx^2] + eps) / sqrt(E[g^2] + eps) * g`,
/// `E[dx^2] <- rho E[dx^2] + (1 - rho) dx^2`,
/// `x     <- x + dx`.
#[inline]
pub fn adadelta_scalar_step(x: f64, g: f64, sq_grad: f64, sq_update: f64, rho: f64, eps: f64)
    -> (f64, f64, f64) {
    let sq_grad = rho * sq_grad + (1.0 - rho) * g * g;
    let dx = -((sq_update + eps).sqrt() / (sq_grad + eps).sqrt()) * g;
    let sq_update = rho * sq_update + (1.0 - rho) * dx * dx;
    (x + dx, sq_grad, sq_update)
}

/// Apply one Adadelta step over every trainable block.
pub fn adadelta_step<T: Scalar>(
    net: &mut Network<T>,
    grads: &Gradients<T>,
    state: &mut AdadeltaState<T>,
) -> Result<()> {
    for (name, values) in grads.names.iter().zip(&grads.values) {
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFiniteGradient {
                layer: name.clone(),
            });
        }
    }
    let rho = T::from_f64(state.rho);
    let one_m = T::one() - rho;
    let eps = T::from_f64(state.eps);
    let mut block = 0;
    net.visit_params_mut(&mut |_, slice| {
        let g = &grads.values[block];
        let eg = &mut state.sq_grad[block];
        let eu = &mut state.sq_update[block];
        debug_assert_eq!(slice.len(), g.len());
        for i in 0..slice.len() {
            eg[i] = rho * eg[i] + one_m * g[i] * g[i];
            let dx = -((eu[i] + eps).sqrt() / (eg[i] + eps).sqrt()) * g[i];
            eu[i] = rho * eu[i] + one_m * dx * dx;
            slice[i] += dx;
        }
        block += 1;
    });
    Ok(())
}

#[derive(Clone, Copy, Debug)]
pub struct EpochStats {
    /// Average train-mode minibatch loss over the epoch.
    pub train_mse: f64,
    /// Eval-mode MSE over the validation split; NaN when it is empty.
    pub val_mse: f64,
}

pub struct TrainOutcome<T> {
    pub checkpoint: Checkpoint<T>,
    pub history: Vec<EpochStats>,
    pub best_epoch: usize,
}

/// Assemble a normalized input batch `[b, W, W, n, 1]` and target batch from
/// the given samples. Background cells stay zero.
pub fn batch_tensors<T: Scalar>(
    samples: &[&Sample<T>],
    normalizer: &Normalizer<T>,
    config: &ModelConfig,
) -> (Tensor<T>, Tensor<T>) {
    let b = samples.len();
    let (w, n, out) = (config.window, config.channels, config.output);
    let mut x = Tensor::zeros(&[b, w, w, n, 1]);
    let target_dims: &[usize] = if out == 1 { &[1] } else { &[out, out] };
    let mut y_dims = vec![b];
    y_dims.extend_from_slice(target_dims);
    let mut y = Tensor::zeros(&y_dims);
    for (bi, s) in samples.iter().enumerate() {
        for row in 0..w {
            for col in 0..w {
                if !s.x_mask[row * w + col] {
                    continue;
                }
                for ch in 0..n {
                    x.set(
                        &[bi, row, col, ch, 0],
                        normalizer.scale(ch, s.x.at(&[row, col, ch])),
                    );
                }
            }
        }
        if out == 1 {
            y.set(&[bi, 0], s.y.at(&[0, 0]));
        } else {
            for i in 0..out {
                for j in 0..out {
                    y.set(&[bi, i, j], s.y.at(&[i, j]));
                }
            }
        }
    }
    (x, y)
}

/// Eval-mode MSE of a network over a sample set.
pub fn evaluate_mse<T: Scalar>(
    net: &Network<T>,
    samples: &[Sample<T>],
    normalizer: &Normalizer<T>,
    batch_size: usize,
) -> Result<f64> {
    if samples.is_empty() {
        return Ok(f64::NAN);
    }
    let mut total = 0.0;
    for chunk in samples.chunks(batch_size.max(1)) {
        let refs: Vec<&Sample<T>> = chunk.iter().collect();
        let (x, y) = batch_tensors(&refs, normalizer, &net.config);
        let pred = net.forward_eval(&x)?;
        let (loss, _) = mse_loss(&pred, &y)?;
        total += loss.as_f64() * chunk.len() as f64;
    }
    Ok(total / samples.len() as f64)
}

fn check_samples<T: Scalar>(samples: &[Sample<T>], config: &ModelConfig) -> Result<()> {
    for s in samples {
        if s.window() != config.window {
            return Err(Error::ShapeMismatch(format!(
                "sample window {} vs model window {}",
                s.window(),
                config.window
            )));
        }
        if s.target_size() != config.output {
            return Err(Error::ShapeMismatch(format!(
                "sample target {} vs model output {}",
                s.target_size(),
                config.output
            )));
        }
        if s.channels() != config.channels {
            return Err(Error::ChannelMismatch {
                expected: config.channels,
                got: s.channels(),
            });
        }
    }
    Ok(())
}

/// Train the network on the split. The normalizer must have been fitted on
/// the training split (see [`Normalizer::fit_samples`]); validation data
/// only ever passes through it. Returns the parameters of the epoch with the
/// best selection metric (validation MSE, or training MSE without a
/// validation split) together with the per-epoch loss history.
pub fn train<T: Scalar>(
    split: &DatasetSplit<T>,
    normalizer: &Normalizer<T>,
    model_config: ModelConfig,
    config: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    if split.train.is_empty() {
        return Err(Error::TooFewSamples { got: 0, need: 1 });
    }
    if config.batch_size == 0 {
        return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
    }
    check_samples(&split.train, &model_config)?;
    check_samples(&split.validation, &model_config)?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let init_seed = rng.random::<u64>();
    let mut net = Network::init(model_config, init_seed)?;
    let mut state = AdadeltaState::new_for(&net, config.rho, config.eps);

    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, Network<T>, usize)> = None;

    let k = split.train.len();
    let mut order: Vec<usize> = (0..k).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let refs: Vec<&Sample<T>> = chunk.iter().map(|&i| &split.train[i]).collect();
            let (x, y) = batch_tensors(&refs, normalizer, &model_config);
            let (pred, cache) = net.forward_train(&x, &mut rng)?;
            let (loss, d_loss) = mse_loss(&pred, &y)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch });
            }
            let (grads, _) = net.backward(&cache, &d_loss)?;
            adadelta_step(&mut net, &grads, &mut state)?;
            net.commit_running_stats(&cache);
            epoch_loss += loss.as_f64() * chunk.len() as f64;
        }
        let train_mse = epoch_loss / k as f64;
        let val_mse = evaluate_mse(&net, &split.validation, normalizer, config.batch_size)?;
        history.push(EpochStats { train_mse, val_mse });

        let metric = if val_mse.is_nan() { train_mse } else { val_mse };
        let improved = match &best {
            None => true,
            Some((best_metric, _, _)) => metric < *best_metric,
        };
        if improved {
            best = Some((metric, net.clone(), epoch));
        }
        if let Some(patience) = config.patience {
            let best_epoch = best.as_ref().map(|(_, _, e)| *e).unwrap_or(0);
            if epoch - best_epoch >= patience {
                break;
            }
        }
    }

    let (_, best_net, best_epoch) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            network: best_net,
            normalizer: normalizer.clone(),
        },
        history,
        best_epoch,
    })
}

/// Render the loss history as `epoch,train_mse,val_mse` CSV.
pub fn history_csv(history: &[EpochStats]) -> String {
    let mut out = String::from("epoch,train_mse,val_mse\n");
    for (epoch, stats) in history.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{}\n",
            epoch, stats.train_mse, stats.val_mse
        ));
    }
    out
}
