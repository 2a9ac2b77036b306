//! Acceptance suite for the library: architecture conformance, parameter
//! accounting, gradient correctness, reconstruction and metric oracles, the
//! optimizer contract, the overfit smoke test and the regression baseline.
//!
//! Each test prints one `ACCEPTANCE <k> PASS` line (visible under
//! `cargo test -- --nocapture`). Oracles in this file are written
//! independently of the library paths they check.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Instant;
use yieldreg::mapgen::{self, stubs};
use yieldreg::metrics;
use yieldreg::mlr;
use yieldreg::net::{count_params, fc_head_alternative_params, ModelConfig, Network};
use yieldreg::normalize::Normalizer;
use yieldreg::raster::FieldRaster;
use yieldreg::sampling::{DatasetSplit, Sample};
use yieldreg::synth::{self, BoundaryStyle, ResponseFamily, SynthSpec};
use yieldreg::tensor::Tensor;
use yieldreg::train::{self, adadelta_scalar_step, mse_loss, TrainConfig};

fn random_tensor(dims: &[usize], lo: f64, hi: f64, seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..dims.iter().product::<usize>())
        .map(|_| lo + rng.random::<f64>() * (hi - lo))
        .collect();
    Tensor::from_vec(dims, data).unwrap()
}

// ---------------------------------------------------------------------------
// 1. Architecture table conformance
// ---------------------------------------------------------------------------

#[test]
fn acceptance_01_layer_shapes_match_architecture_table() {
    let t0 = Instant::now();
    let shape = |dims: &[usize]| dims.to_vec();
    // trunk rows for n = 8, identical across head variants
    let trunk: Vec<(&str, Vec<usize>)> = vec![
        ("input", shape(&[5, 5, 8, 1])),
        ("conv3d_1", shape(&[5, 5, 8, 32])),
        ("conv3d_2", shape(&[5, 5, 8, 32])),
        ("concat_1", shape(&[5, 5, 8, 64])),
        ("conv3d_3", shape(&[5, 5, 8, 32])),
        ("concat_2", shape(&[5, 5, 8, 96])),
        ("conv3d_4", shape(&[5, 5, 8, 32])),
        ("concat_3", shape(&[5, 5, 8, 128])),
        ("reshape", shape(&[5, 5, 1024])),
        ("dropout_1", shape(&[5, 5, 1024])),
        ("sepconv_1", shape(&[5, 5, 512])),
        ("sepconv_2", shape(&[5, 5, 320])),
        ("dropout_2", shape(&[5, 5, 320])),
        ("sepconv_3", shape(&[5, 5, 256])),
        ("dropout_3", shape(&[5, 5, 256])),
        ("sepconv_4", shape(&[5, 5, 128])),
        ("sepconv_5", shape(&[5, 5, 32])),
    ];
    for output in [5usize, 3, 1] {
        let net = Network::<f64>::init(ModelConfig::new(8, output).unwrap(), 1).unwrap();
        let trace = net.shape_trace().unwrap();
        for (i, (name, dims)) in trunk.iter().enumerate() {
            assert_eq!(&trace[i].0, name, "row {i} name for N={output}");
            assert_eq!(&trace[i].1, dims, "row {i} dims for N={output}");
        }
        let tail = &trace[trunk.len()..];
        match output {
            5 => {
                assert_eq!(tail, [("head_conv".to_string(), vec![5, 5, 1])]);
            }
            3 => {
                assert_eq!(tail, [("head_conv".to_string(), vec![3, 3, 1])]);
            }
            1 => {
                assert_eq!(
                    tail,
                    [
                        ("head_conv".to_string(), vec![3, 3, 1]),
                        ("head_reshape".to_string(), vec![9, 1]),
                        ("head_fc".to_string(), vec![1]),
                    ]
                );
            }
            _ => unreachable!(),
        }
    }
    let elapsed = t0.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "shape check took {elapsed:?}");
    println!(
        "ACCEPTANCE 1 PASS: all layer shapes match the architecture table for N in {{5,3,1}} \
         (including the 64/96/128 concat progression and the 1024-wide reshape) in {elapsed:?}"
    );
}

// ---------------------------------------------------------------------------
// 2. Parameter-count claims
// ---------------------------------------------------------------------------

#[test]
fn acceptance_02_parameter_count_claims() {
    let rows5 = count_params(&ModelConfig::new(8, 5).unwrap());
    let head = rows5.iter().find(|(n, _)| n == "head_conv").unwrap().1;
    assert_eq!(head, 289);

    assert_eq!(fc_head_alternative_params(), 20_025);

    let rows1 = count_params(&ModelConfig::new(8, 1).unwrap());
    let fc = rows1.iter().find(|(n, _)| n == "head_fc").unwrap().1;
    assert_eq!(fc, 9);

    // closed-form totals agree with the live parameter blocks
    for output in [5usize, 3, 1] {
        let cfg = ModelConfig::new(8, output).unwrap();
        let net = Network::<f64>::zeros(cfg).unwrap();
        assert_eq!(net.param_count(), yieldreg::net::total_params(&cfg));
    }
    println!(
        "ACCEPTANCE 2 PASS: head conv = 289 params, rejected FC-head alternative = 20025, \
         scalar-head FC = 9 (bias-free)"
    );
}

// ---------------------------------------------------------------------------
// 3. Gradient correctness (finite differences)
// ---------------------------------------------------------------------------

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-2)
}

/// Central difference of a scalar function of one coordinate.
fn central<F: FnMut(f64) -> f64>(mut f: F, h: f64) -> f64 {
    (f(h) - f(-h)) / (2.0 * h)
}

#[test]
fn acceptance_03_gradients_match_finite_differences() {
    use yieldreg::net::layers::{BatchNorm, Conv2d, Conv3d, DenseNoBias, SepConv2d};
    let t0 = Instant::now();
    let h = 1e-4;
    let mut worst_layer = 0.0f64;

    // --- per-layer isolation on small channel-width surrogates -------------
    // the layers themselves are smooth (activations live between layers), so
    // the spec step of 1e-4 applies cleanly; the loss is a fixed weighted sum
    {
        let mut conv = Conv3d::<f64>::zeros(2, 3);
        conv.kernel = random_tensor(&[3, 3, 3, 2, 3], -1.0, 1.0, 10);
        conv.bias = random_tensor(&[3], -0.5, 0.5, 11).into_data();
        let x = random_tensor(&[2, 4, 4, 3, 2], -1.0, 1.0, 12);
        let w = random_tensor(&[2, 4, 4, 3, 3], -1.0, 1.0, 13);
        let loss = |c: &Conv3d<f64>| -> f64 {
            c.forward(&x)
                .data()
                .iter()
                .zip(w.data())
                .map(|(a, b)| a * b)
                .sum()
        };
        let (dk, db, dx) = conv.backward(&x, &w);
        for i in 0..dk.len() {
            let fd = central(
                |d| {
                    let mut c = conv.clone();
                    c.kernel.data_mut()[i] += d;
                    loss(&c)
                },
                h,
            );
            worst_layer = worst_layer.max(rel_err(dk.data()[i], fd));
        }
        for i in 0..db.len() {
            let fd = central(
                |d| {
                    let mut c = conv.clone();
                    c.bias[i] += d;
                    loss(&c)
                },
                h,
            );
            worst_layer = worst_layer.max(rel_err(db[i], fd));
        }
        for i in 0..dx.len() {
            let fd = central(
                |d| {
                    let mut xp = x.clone();
                    xp.data_mut()[i] += d;
                    conv.forward(&xp)
                        .data()
                        .iter()
                        .zip(w.data())
                        .map(|(a, b)| a * b)
                        .sum()
                },
                h,
            );
            worst_layer = worst_layer.max(rel_err(dx.data()[i], fd));
        }
    }
    {
        let mut sep = SepConv2d::<f64>::zeros(3, 2);
        sep.depthwise = random_tensor(&[3, 3, 3], -1.0, 1.0, 20);
        sep.pointwise = random_tensor(&[3, 2], -1.0, 1.0, 21);
        sep.bias = random_tensor(&[2], -0.5, 0.5, 22).into_data();
        let x = random_tensor(&[2, 4, 4, 3], -1.0, 1.0, 23);
        let w = random_tensor(&[2, 4, 4, 2], -1.0, 1.0, 24);
        let loss = |s: &SepConv2d<f64>, xin: &Tensor<f64>| -> f64 {
            s.forward(xin)
                .0
                .data()
                .iter()
                .zip(w.data())
                .map(|(a, b)| a * b)
                .sum()
        };
        let (_, mid) = sep.forward(&x);
        let (ddw, dpw, db, dx) = sep.backward(&x, &mid, &w);
        for i in 0..ddw.len() {
            let fd = central(
                |d| {
                    let mut s = sep.clone();
                    s.depthwise.data_mut()[i] += d;
                    loss(&s, &x)
                },
                h,
            );
            worst_layer = worst_layer.max(rel_err(ddw.data()[i], fd));
        }
        for i in 0..dpw.len() {
            let fd = central(
                |d| {
                    let mut s = sep.clone();
                    s.pointwise.data_mut()[i] += d;
                    loss(&s, &x)
                },
                h,
            );
            worst_layer = worst_layer.max(rel_err(dpw.data()[i], fd));
        }
        for i in 0..db.len() {
            let fd = central(
                |d| {
                    let mut s = sep.clone();
                    s.bias[i] += d;
                    loss(&s, &x)
                },
                h,
            );
            worst_layer = worst_layer.max(rel_err(db[i], fd));
        }
        for i in 0..dx.len() {
            let fd = central(
                |d| {
                    let mut xp = x.clone();
                    xp.data_mut()[i] += d;
                    loss(&sep, &xp)
                },
                h,
            );
            worst_layer = worst_layer.max(rel_err(dx.data()[i], fd));
        }
    }
    for padding in [1usize, 0] {
        let mut conv = Conv2d::<f64>::zeros(3, 2, padding);
        conv.kernel = random_tensor(&[3, 3, 3, 2], -1.0, 1.0, 30);
        conv.bias = random_tensor(&[2], -0.5, 0.5, 31).into_data();
        let x = random_tensor(&[2, 5, 5, 3], -1.0, 1.0, 32);
        let side = conv.out_size(5);
        let w = random_tensor(&[2, side, side, 2], -1.0, 1.0, 33);
        let loss = |c: &Conv2d<f64>, xin: &Tensor<f64>| -> f64 {
            c.forward(xin)
                .data()
                .iter()
                .zip(w.data())
                .map(|(a, b)| a * b)
                .sum()
        };
        let (dk, db, dx) = conv.backward(&x, &w);
        for i in 0..dk.len() {
            let fd = central(
                |d| {
                    let mut c = conv.clone();
                    c.kernel.data_mut()[i] += d;
                    loss(&c, &x)
                },
                h,
            );
            worst_layer = worst_layer.max(rel_err(dk.data()[i], fd));
        }
        for i in 0..db.len() {
            let fd = central(
                |d| {
                    let mut c = conv.clone();
                    c.bias[i] += d;
                    loss(&c, &x)
                },
                h,
            );
            worst_layer = worst_layer.max(rel_err(db[i], fd));
        }
        for i in 0..dx.len() {
            let fd = central(
                |d| {
                    let mut xp = x.clone();
                    xp.data_mut()[i] += d;
                    loss(&conv, &xp)
                },
                h,
            );
            worst_layer = worst_layer.max(rel_err(dx.data()[i], fd));
        }
    }
    {
        let mut bn = BatchNorm::<f64>::new(3, 0.9, 1e-5);
        bn.gamma = vec![1.2, 0.8, 1.1];
        bn.beta = vec![0.1, -0.3, 0.0];
        let x = random_tensor(&[4, 5, 3], -2.0, 2.0, 40);
        let w = random_tensor(&[4, 5, 3], -1.0, 1.0, 41);
        let loss = |b: &BatchNorm<f64>, xin: &Tensor<f64>| -> f64 {
            b.forward_train(xin)
                .0
                .data()
                .iter()
                .zip(w.data())
                .map(|(a, c)| a * c)
                .sum()
        };
        let (_, cache) = bn.forward_train(&x);
        let (dg, dbeta, dx) = bn.backward_train(&x, &cache, &w);
        for i in 0..dg.len() {
            let fd = central(
                |d| {
                    let mut b = bn.clone();
                    b.gamma[i] += d;
                    loss(&b, &x)
                },
                h,
            );
            worst_layer = worst_layer.max(rel_err(dg[i], fd));
        }
        for i in 0..dbeta.len() {
            let fd = central(
                |d| {
                    let mut b = bn.clone();
                    b.beta[i] += d;
                    loss(&b, &x)
                },
                h,
            );
            worst_layer = worst_layer.max(rel_err(dbeta[i], fd));
        }
        for i in 0..dx.len() {
            let fd = central(
                |d| {
                    let mut xp = x.clone();
                    xp.data_mut()[i] += d;
                    loss(&bn, &xp)
                },
                h,
            );
            worst_layer = worst_layer.max(rel_err(dx.data()[i], fd));
        }
    }
    {
        let mut fc = DenseNoBias::<f64>::zeros(9);
        fc.weights = random_tensor(&[9], -1.0, 1.0, 50).into_data();
        let x = random_tensor(&[3, 9], -1.0, 1.0, 51);
        let w = random_tensor(&[3, 1], -1.0, 1.0, 52);
        let loss = |f: &DenseNoBias<f64>, xin: &Tensor<f64>| -> f64 {
            f.forward(xin)
                .data()
                .iter()
                .zip(w.data())
                .map(|(a, b)| a * b)
                .sum()
        };
        let (dw, dx) = fc.backward(&x, &w);
        for i in 0..dw.len() {
            let fd = central(
                |d| {
                    let mut f = fc.clone();
                    f.weights[i] += d;
                    loss(&f, &x)
                },
                h,
            );
            worst_layer = worst_layer.max(rel_err(dw[i], fd));
        }
        for i in 0..dx.len() {
            let fd = central(
                |d| {
                    let mut xp = x.clone();
                    xp.data_mut()[i] += d;
                    loss(&fc, &xp)
                },
                h,
            );
            worst_layer = worst_layer.max(rel_err(dx.data()[i], fd));
        }
    }
    assert!(
        worst_layer < 1e-4,
        "per-layer finite differences disagree: worst rel err {worst_layer:.3e}"
    );

    // --- full-width end-to-end, all three head variants ---------------------
    // Dropout masks are replayed by reseeding, and batch-norm runs in train
    // mode so the check covers the batch-statistics path. The 1e-4 step can
    // straddle a ReLU kink in a network this deep, which invalidates the
    // finite-difference estimate itself (the loss is piecewise-smooth); such
    // coordinates are detected by comparing against a 1e-6 step and checked
    // at the smaller, kink-free step instead.
    let mut worst_e2e = 0.0f64;
    let mut kink_fallbacks = 0usize;
    let mut checked = 0usize;
    for output in [5usize, 3, 1] {
        let config = ModelConfig::new(8, output).unwrap();
        let net = Network::<f64>::init(config, 42).unwrap();
        let x = random_tensor(&[2, 5, 5, 8, 1], 0.0, 1.0, 60 + output as u64);
        let target_dims: Vec<usize> = if output == 1 {
            vec![2, 1]
        } else {
            vec![2, output, output]
        };
        let target = random_tensor(&target_dims, 0.0, 2.0, 70 + output as u64);

        let loss_of = |net: &Network<f64>| {
            let mut drop_rng = ChaCha8Rng::seed_from_u64(99);
            let (out, _) = net.forward_train(&x, &mut drop_rng).unwrap();
            mse_loss(&out, &target).unwrap().0
        };

        let mut drop_rng = ChaCha8Rng::seed_from_u64(99);
        let (out, cache) = net.forward_train(&x, &mut drop_rng).unwrap();
        let (_, d_loss) = mse_loss(&out, &target).unwrap();
        let (grads, _) = net.backward(&cache, &d_loss).unwrap();

        for (bi, _name) in grads.names.iter().enumerate() {
            let len = grads.values[bi].len();
            let mut pick = ChaCha8Rng::seed_from_u64((output * 1000 + bi) as u64);
            for _ in 0..3.min(len) {
                let pi = pick.random_range(0..len);
                let eval = |d: f64| {
                    let mut n = net.clone();
                    let mut idx = 0;
                    n.visit_params_mut(&mut |_, slice| {
                        if idx == bi {
                            slice[pi] += d;
                        }
                        idx += 1;
                    });
                    loss_of(&n)
                };
                let fd4 = central(eval, 1e-4);
                let fd6 = central(eval, 1e-6);
                // smooth at the 1e-4 scale iff both steps agree
                let fd = if rel_err(fd4, fd6) < 1e-5 {
                    fd4
                } else {
                    kink_fallbacks += 1;
                    fd6
                };
                let analytic = grads.values[bi][pi];
                worst_e2e = worst_e2e.max(rel_err(analytic, fd));
                checked += 1;
            }
        }
    }
    assert!(
        worst_e2e < 1e-4,
        "end-to-end finite differences disagree: worst rel err {worst_e2e:.3e}"
    );
    let elapsed = t0.elapsed();
    assert!(
        elapsed.as_secs_f64() < 120.0,
        "gradient suite took {elapsed:?}"
    );
    println!(
        "ACCEPTANCE 3 PASS: per-layer and end-to-end gradients match central finite \
         differences (worst layer rel err {worst_layer:.2e}; end-to-end {checked} sampled \
         coordinates, worst rel err {worst_e2e:.2e}, {kink_fallbacks} kink fallbacks) \
         in {elapsed:?}"
    );
}

// ---------------------------------------------------------------------------
// 4. Overlap-average oracle
// ---------------------------------------------------------------------------

#[test]
fn acceptance_04_overlap_average_matches_brute_force() {
    // 6x6 field with a masked-out hole; the oracle re-derives the whole
    // accumulate/divide process with plain loops
    let mut field = FieldRaster::<f64>::new(6, 6, 2, 10.0);
    for r in 0..6 {
        for c in 0..6 {
            field.set(r, c, 0, (r * 6 + c) as f64);
            field.set(r, c, 1, 1.0);
        }
    }
    field.clear_cell(1, 4);

    for output in [1usize, 3, 5] {
        let stub = stubs::HashStub {
            window: 5,
            output,
            channels: 2,
            seen: std::sync::Mutex::new(Vec::new()),
        };
        let (map, counts) = mapgen::predict_map(&stub, &field, 4).unwrap();

        let mut sums = [0.0f64; 36];
        let mut cnt = [0u32; 36];
        let offset = ((5 - output) / 2) as isize;
        for row in 0..6usize {
            for col in 0..6usize {
                if !field.mask().get(row, col) {
                    continue;
                }
                let (r0, c0) = (row as isize - 2, col as isize - 2);
                for i in 0..output {
                    for j in 0..output {
                        let tr = r0 + offset + i as isize;
                        let tc = c0 + offset + j as isize;
                        if tr < 0 || tc < 0 || tr >= 6 || tc >= 6 {
                            continue;
                        }
                        if !field.mask().get(tr as usize, tc as usize) {
                            continue;
                        }
                        sums[tr as usize * 6 + tc as usize] +=
                            stubs::hash_prediction(r0, c0, i, j);
                        cnt[tr as usize * 6 + tc as usize] += 1;
                    }
                }
            }
        }
        for (r, c) in field.mask().iter_inside() {
            let want = sums[r * 6 + c] / cnt[r * 6 + c] as f64;
            assert!(
                (map.get(r, c, 0) - want).abs() < 1e-12,
                "N={output} cell ({r},{c})"
            );
            assert_eq!(counts.get(r, c, 0) as u32, cnt[r * 6 + c]);
        }
    }

    // interior contribution counts equal N^2 exactly on a fully masked field
    let mut big = FieldRaster::<f64>::new(12, 12, 2, 10.0);
    for r in 0..12 {
        for c in 0..12 {
            big.set(r, c, 0, 0.0);
            big.set(r, c, 1, 0.0);
        }
    }
    for output in [1usize, 3, 5] {
        let stub = stubs::ConstantStub {
            value: 1.0,
            window: 5,
            output,
            channels: 2,
        };
        let (_, counts) = mapgen::predict_map(&stub, &big, 16).unwrap();
        let margin = output / 2 + 2;
        for r in margin..12 - margin {
            for c in margin..12 - margin {
                assert_eq!(counts.get(r, c, 0) as usize, output * output);
            }
        }
    }
    println!(
        "ACCEPTANCE 4 PASS: reconstruction equals the brute-force accumulate/divide oracle \
         to 1e-12 on a 6x6 field for N in {{1,3,5}}; interior counts equal N^2"
    );
}

// ---------------------------------------------------------------------------
// 5. Variance reduction from overlap averaging
// ---------------------------------------------------------------------------

#[test]
fn acceptance_05_variance_reduction_over_output_size() {
    let sigma = 4.0f64;
    let trials = 1000usize;
    let mut truth = FieldRaster::<f64>::new(10, 10, 1, 10.0);
    let mut field = FieldRaster::<f64>::new(10, 10, 1, 10.0);
    for r in 0..10 {
        for c in 0..10 {
            truth.set(r, c, 0, 40.0 + (r as f64 * 1.3 + c as f64 * 0.7));
            field.set(r, c, 0, 1.0);
        }
    }
    // pixels whose every contributing window is fully interior
    let interior: Vec<(usize, usize)> = (4..6)
        .flat_map(|r| (4..6).map(move |c| (r, c)))
        .collect();

    let mut mean_variance = Vec::new();
    for output in [1usize, 3, 5] {
        let mut per_trial: Vec<Vec<f64>> = Vec::with_capacity(trials);
        for trial in 0..trials {
            let stub = stubs::TruthStub {
                truth: &truth,
                window: 5,
                output,
                channels: 1,
                sigma,
                trial: trial as u64,
            };
            let (map, _) = mapgen::predict_map(&stub, &field, 100).unwrap();
            per_trial.push(interior.iter().map(|&(r, c)| map.get(r, c, 0)).collect());
        }
        // unbiased per-pixel variance across trials, averaged over pixels
        let mut total = 0.0;
        for pi in 0..interior.len() {
            let vals: Vec<f64> = per_trial.iter().map(|t| t[pi]).collect();
            let mean = vals.iter().sum::<f64>() / trials as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
                / (trials as f64 - 1.0);
            total += var;
        }
        let avg = total / interior.len() as f64;
        let expected = sigma * sigma / (output * output) as f64;
        assert!(
            avg < 2.0 * expected && avg > expected / 2.0,
            "N={output}: variance {avg:.4} vs expected {expected:.4}"
        );
        mean_variance.push(avg);
    }
    assert!(
        mean_variance[0] > mean_variance[1] && mean_variance[1] > mean_variance[2],
        "variance must strictly decrease with N: {mean_variance:?}"
    );
    println!(
        "ACCEPTANCE 5 PASS: interior-pixel variance {:.3} / {:.3} / {:.3} for N=1/3/5 \
         (expected {:.3} / {:.3} / {:.3}), strictly decreasing",
        mean_variance[0],
        mean_variance[1],
        mean_variance[2],
        sigma * sigma,
        sigma * sigma / 9.0,
        sigma * sigma / 25.0
    );
}

// ---------------------------------------------------------------------------
// 6. Metric oracles
// ---------------------------------------------------------------------------

#[test]
fn acceptance_06_metric_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut truth = FieldRaster::<f64>::new(20, 20, 1, 10.0);
    let mut pred = FieldRaster::<f64>::new(20, 20, 1, 10.0);
    for r in 0..20 {
        for c in 0..20 {
            if rng.random::<f64>() < 0.8 {
                truth.set(r, c, 0, rng.random::<f64>() * 90.0);
                pred.set(r, c, 0, rng.random::<f64>() * 90.0);
            }
        }
    }
    let f = truth.mask().clone();

    // scalar-loop RMSE oracle
    let mut sum = 0.0;
    let mut n = 0usize;
    for (r, c) in f.iter_inside() {
        sum += (truth.get(r, c, 0) - pred.get(r, c, 0)).powi(2);
        n += 1;
    }
    let want_rmse = (sum / n as f64).sqrt();
    assert!((metrics::rmse(&truth, &pred, &f).unwrap() - want_rmse).abs() < 1e-10);

    // sort-based RMedSE oracle
    let mut squares: Vec<f64> = f
        .iter_inside()
        .map(|(r, c)| (truth.get(r, c, 0) - pred.get(r, c, 0)).powi(2))
        .collect();
    squares.sort_by(f64::total_cmp);
    let k = squares.len();
    let want_med = if k % 2 == 1 {
        squares[k / 2]
    } else {
        0.5 * (squares[k / 2 - 1] + squares[k / 2])
    };
    assert!((metrics::rmedse(&truth, &pred, &f).unwrap() - want_med.sqrt()).abs() < 1e-10);

    // per-window SSIM oracle at both window sizes
    let range = {
        let mut top = 0.0f64;
        for r in [&truth, &pred] {
            for (row, col) in r.mask().iter_inside() {
                top = top.max(r.get(row, col, 0));
            }
        }
        top
    };
    for w in [3usize, 11] {
        let map = metrics::ssim_map(&truth, &pred, w).unwrap();
        let c1 = (0.01 * range).powi(2);
        let c2 = (0.03 * range).powi(2);
        let half = (w / 2) as isize;
        for row in 0..20usize {
            for col in 0..20usize {
                let mut va = Vec::new();
                let mut vb = Vec::new();
                for dr in -half..=half {
                    for dc in -half..=half {
                        va.push(truth.input_value(row as isize + dr, col as isize + dc, 0));
                        vb.push(pred.input_value(row as isize + dr, col as isize + dc, 0));
                    }
                }
                let m = va.len() as f64;
                let mu_a = va.iter().sum::<f64>() / m;
                let mu_b = vb.iter().sum::<f64>() / m;
                let var_a = va.iter().map(|v| (v - mu_a).powi(2)).sum::<f64>() / m;
                let var_b = vb.iter().map(|v| (v - mu_b).powi(2)).sum::<f64>() / m;
                let cov = va
                    .iter()
                    .zip(&vb)
                    .map(|(x, y)| (x - mu_a) * (y - mu_b))
                    .sum::<f64>()
                    / m;
                let want = ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2))
                    / ((mu_a.powi(2) + mu_b.powi(2) + c1) * (var_a + var_b + c2));
                assert!(
                    (map.get(row, col, 0) - want).abs() < 1e-10,
                    "w={w} at ({row},{col})"
                );
            }
        }
        // symmetry
        let rev = metrics::ssim_map(&pred, &truth, w).unwrap();
        for row in 0..20 {
            for col in 0..20 {
                assert!((map.get(row, col, 0) - rev.get(row, col, 0)).abs() < 1e-12);
            }
        }
    }

    // SSIM(M, M) = 1 exactly
    let self_map = metrics::ssim_map(&truth, &truth, 3).unwrap();
    for row in 0..20 {
        for col in 0..20 {
            assert_eq!(self_map.get(row, col, 0), 1.0);
        }
    }

    // windows fully over shared zero background score 1
    let mut sparse_a = FieldRaster::<f64>::new(16, 16, 1, 10.0);
    let mut sparse_b = FieldRaster::<f64>::new(16, 16, 1, 10.0);
    sparse_a.set(0, 0, 0, 80.0);
    sparse_b.set(0, 0, 0, 40.0);
    let sparse_map = metrics::ssim_map(&sparse_a, &sparse_b, 3).unwrap();
    assert_eq!(sparse_map.get(12, 12, 0), 1.0);

    println!(
        "ACCEPTANCE 6 PASS: RMSE/RMedSE/SSIM match independent scalar oracles to 1e-10 on \
         random 20x20 masked maps; SSIM(M,M)=1 exactly, symmetric, and 1 on shared zero \
         background"
    );
}

// ---------------------------------------------------------------------------
// 7. Adadelta contract
// ---------------------------------------------------------------------------

#[test]
fn acceptance_07_adadelta_first_step_and_descent() {
    // first step with g = 1, rho = 0.95, eps = 1e-6
    let (x1, eg, _) = adadelta_scalar_step(0.0, 1.0, 0.0, 0.0, 0.95, 1e-6);
    assert!((eg - 0.05).abs() < 1e-15);
    // hand evaluation of the update rule
    let derived = -(1e-6f64 / (0.05 + 1e-6)).sqrt();
    assert!((x1 - derived).abs() < 1e-7, "{x1} vs {derived}");
    // the same value quoted to four significant digits
    assert!((x1 - (-4.4716e-3)).abs() < 1e-6, "{x1}");

    // the network-level optimizer step applies exactly the scalar rule
    {
        let config = ModelConfig::new(2, 5).unwrap();
        let mut net = Network::<f64>::zeros(config).unwrap();
        let mut state = train::AdadeltaState::new_for(&net, 0.95, 1e-6);
        let mut grads = yieldreg::net::Gradients {
            names: Vec::new(),
            values: Vec::new(),
        };
        net.visit_params(&mut |name, slice| {
            grads.names.push(name.to_string());
            grads.values.push(vec![1.0; slice.len()]);
        });
        train::adadelta_step(&mut net, &grads, &mut state).unwrap();
        net.visit_params(&mut |name, slice| {
            // gains start at 1, everything else at 0; each moved by x1
            for &v in slice {
                let base = if name.ends_with("gamma") { 1.0 } else { 0.0 };
                assert!((v - (base + x1)).abs() < 1e-15);
            }
        });
    }

    // 200 steps on f(x) = x^2 from x = 1
    let (mut x, mut eg, mut eu) = (1.0f64, 0.0, 0.0);
    let mut prev = f64::INFINITY;
    for step in 0..200 {
        let (nx, neg, neu) = adadelta_scalar_step(x, 2.0 * x, eg, eu, 0.95, 1e-6);
        x = nx;
        eg = neg;
        eu = neu;
        if step >= 1 {
            assert!(x.abs() < prev, "|x| must decrease after step 1");
        }
        prev = x.abs();
    }
    assert!(x.abs() < 0.9, "|x| after 200 steps: {}", x.abs());
    println!(
        "ACCEPTANCE 7 PASS: first Adadelta step {x1:.7e} matches the hand-derived value \
         (rounded -4.4716e-3); 200 steps on x^2 shrink |x| monotonically to {:.4}",
        x.abs()
    );
}

// ---------------------------------------------------------------------------
// 8. Overfit smoke test
// ---------------------------------------------------------------------------

#[test]
fn acceptance_08_overfit_eight_samples() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let make = |rng: &mut ChaCha8Rng| Sample {
        x: Tensor::from_vec(
            &[5, 5, 8],
            (0..200).map(|_| rng.random::<f64>() * 3.0).collect(),
        )
        .unwrap(),
        x_mask: vec![true; 25],
        y: Tensor::from_vec(
            &[5, 5],
            (0..25).map(|_| 45.0 + rng.random::<f64>() * 30.0).collect(),
        )
        .unwrap(),
        origin: (0, 0),
        year: 1,
    };
    let train_samples: Vec<Sample<f64>> = (0..8).map(|_| make(&mut rng)).collect();
    // validation = the training samples, so the recorded val MSE is the
    // eval-mode (dropout-free) MSE on the 8 training samples
    let split = DatasetSplit {
        validation: train_samples.clone(),
        train: train_samples,
        seed: 0,
    };
    let normalizer = Normalizer::fit_samples(&split.train).unwrap();
    let model = ModelConfig::new(8, 5).unwrap();
    let cfg = TrainConfig {
        batch_size: 4,
        epochs: 300,
        seed: 3,
        ..TrainConfig::default()
    };
    let outcome = train::train(&split, &normalizer, model, &cfg).unwrap();
    let first = outcome.history.first().unwrap().val_mse;
    let best = outcome
        .history
        .iter()
        .map(|s| s.val_mse)
        .fold(f64::INFINITY, f64::min);
    let elapsed = t0.elapsed();
    assert!(
        best < 0.01 * first,
        "train MSE only reached {best:.3} from an epoch-0 value of {first:.1}"
    );
    assert!(elapsed.as_secs_f64() < 600.0, "overfit run took {elapsed:?}");
    println!(
        "ACCEPTANCE 8 PASS: 8-sample overfit reached MSE {best:.3} = {:.4}% of the epoch-0 \
         value {first:.1} within {} epochs in {elapsed:?} (single-threaded)",
        100.0 * best / first,
        outcome.history.len()
    );
}

// ---------------------------------------------------------------------------
// 9. Regression baseline
// ---------------------------------------------------------------------------

#[test]
fn acceptance_09_mlr_baseline() {
    // OLS vs an independent normal-equations solve (Gauss-Jordan)
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let rows: Vec<Vec<f64>> = (0..200)
        .map(|_| (0..8).map(|_| rng.random::<f64>() * 6.0 - 3.0).collect())
        .collect();
    let targets: Vec<f64> = rows
        .iter()
        .map(|r| {
            let s: f64 = r.iter().enumerate().map(|(i, v)| (i as f64 * 0.5 - 2.0) * v).sum();
            55.0 + s + rng.random::<f64>() * 2.0
        })
        .collect();
    let model = mlr::fit_mlr(&rows, &targets).unwrap();

    let dim = 9usize;
    let mut g = vec![vec![0.0f64; dim + 1]; dim];
    for (row, &y) in rows.iter().zip(&targets) {
        let mut a = vec![1.0];
        a.extend_from_slice(row);
        for i in 0..dim {
            for j in 0..dim {
                g[i][j] += a[i] * a[j];
            }
            g[i][dim] += a[i] * y;
        }
    }
    for col in 0..dim {
        let pivot = (col..dim)
            .max_by(|&a, &b| g[a][col].abs().partial_cmp(&g[b][col].abs()).unwrap())
            .unwrap();
        g.swap(col, pivot);
        let p = g[col][col];
        for j in col..=dim {
            g[col][j] /= p;
        }
        for i in 0..dim {
            if i != col {
                let f = g[i][col];
                for j in col..=dim {
                    g[i][j] -= f * g[col][j];
                }
            }
        }
    }
    assert!((model.intercept - g[0][dim]).abs() < 1e-8);
    for i in 0..8 {
        assert!(
            (model.coefficients[i] - g[i + 1][dim]).abs() < 1e-8,
            "coefficient {i}"
        );
    }

    // noiseless linear synthetic field: exact recovery
    let spec = SynthSpec {
        height: 16,
        width: 16,
        years: 3,
        seed: 7,
        boundary: BoundaryStyle::Rect,
        noise_sigma: 0.0,
        response: ResponseFamily::Linear,
    };
    let years = synth::generate::<f64>(&spec).unwrap();
    let mut srows = Vec::new();
    let mut stargets = Vec::new();
    for data in &years {
        for (r, c) in data.features.mask().iter_inside() {
            srows.push((0..8).map(|ch| data.features.get(r, c, ch)).collect());
            stargets.push(data.yields.get(r, c, 0));
        }
    }
    let smodel = mlr::fit_mlr(&srows, &stargets).unwrap();
    let want = [0.3, 0.2, 0.25, 0.05, -15.0, 0.02, 3.0, 0.5];
    let mut worst = 0.0f64;
    for (got, want) in smodel.coefficients.iter().zip(want) {
        worst = worst.max((got - want).abs());
    }
    assert!(worst < 1e-6, "worst coefficient error {worst:.3e}");
    println!(
        "ACCEPTANCE 9 PASS: OLS matches the normal-equations oracle to 1e-8; noiseless \
         linear synthetic field recovered with worst coefficient error {worst:.2e}"
    );
}
