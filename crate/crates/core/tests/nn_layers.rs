//! Layer and optimizer tests: batch norm statistics, running-stat
//! updates, parameter init bounds, and the momentum update recursion.

use sod_core::nn::{BatchNorm2d, Conv2d, ConvBnRelu, Linear, Module, Param, Sgd, BN_EPS, BN_MOMENTUM};
use sod_core::rng::Rng;
use sod_core::Tensor;

fn assert_close(a: &[f64], b: &[f64], tol: f64, what: &str) {
    assert_eq!(a.len(), b.len(), "{what}: length mismatch");
    for (i, (x, y)) in a.iter().zip(b.iter()).enumerate() {
        assert!(
            (x - y).abs() <= tol,
            "{what}: index {i}, {x} vs {y}, diff {}",
            (x - y).abs()
        );
    }
}

#[test]
fn batchnorm_training_output_has_zero_mean_unit_var() {
    let mut rng = Rng::seed_from_u64(41);
    let n = 64;
    let data: Vec<f64> = (0..2 * n).map(|_| rng.range(-3.0, 3.0)).collect();
    let x = Tensor::leaf(&[2, 8, 8], data).unwrap();
    let bn = BatchNorm2d::new(2).unwrap();
    let y = bn.forward(&x, true).unwrap();
    for c in 0..2 {
        let ch = &y.data()[c * n..(c + 1) * n];
        let mean: f64 = ch.iter().sum::<f64>() / n as f64;
        let var: f64 = ch.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 1e-10, "channel {c} mean {mean}");
        // var is slightly below 1 because of eps in the denominator
        assert!((var - 1.0).abs() < 1e-3, "channel {c} var {var}");
    }
}

#[test]
fn batchnorm_running_stats_follow_momentum_rule() {
    let x = Tensor::leaf(&[1, 2, 2], vec![1.0, 3.0, 5.0, 7.0]).unwrap();
    let bn = BatchNorm2d::new(1).unwrap();
    bn.forward(&x, true).unwrap();
    let batch_mean = 4.0;
    let batch_var = 5.0; // biased: mean of squared deviations from 4
    let (rm, rv) = bn.running_stats();
    assert_close(
        &rm,
        &[(1.0 - BN_MOMENTUM) * 0.0 + BN_MOMENTUM * batch_mean],
        1e-12,
        "running mean",
    );
    assert_close(
        &rv,
        &[(1.0 - BN_MOMENTUM) * 1.0 + BN_MOMENTUM * batch_var],
        1e-12,
        "running var",
    );
}

#[test]
fn batchnorm_eval_uses_running_stats() {
    let bn = BatchNorm2d::new(1).unwrap();
    bn.set_running_stats(vec![2.0], vec![4.0]);
    let x = Tensor::leaf(&[1, 1, 2], vec![2.0, 6.0]).unwrap();
    let y = bn.forward(&x, false).unwrap();
    let denom = (4.0f64 + BN_EPS).sqrt();
    assert_close(y.data(), &[0.0, 4.0 / denom], 1e-12, "eval normalize");
    // Eval mode must not touch the running stats.
    let (rm, rv) = bn.running_stats();
    assert_eq!((rm[0], rv[0]), (2.0, 4.0));
}

#[test]
fn batchnorm_gradients_match_finite_differences() {
    let mut rng = Rng::seed_from_u64(42);
    let data: Vec<f64> = (0..18).map(|_| rng.range(-2.0, 2.0)).collect();
    let x = Tensor::leaf(&[2, 3, 3], data).unwrap();
    let bn = BatchNorm2d::new(2).unwrap();
    let loss = |t: &Tensor| {
        let y = bn.forward(t, true).unwrap();
        y.mul(&y).unwrap().sum_all()
    };
    let l = loss(&x);
    l.backward().unwrap();
    let g = x.grad().unwrap();
    let h = 1e-5;
    for i in 0..x.len() {
        let mut plus = x.data().to_vec();
        plus[i] += h;
        let mut minus = x.data().to_vec();
        minus[i] -= h;
        let fd = (loss(&Tensor::leaf(&[2, 3, 3], plus).unwrap()).item().unwrap()
            - loss(&Tensor::leaf(&[2, 3, 3], minus).unwrap()).item().unwrap())
            / (2.0 * h);
        let rel = (g[i] - fd).abs() / g[i].abs().max(fd.abs()).max(0.01);
        assert!(rel < 1e-5, "bn grad {i}: {} vs fd {fd}", g[i]);
    }
}

#[test]
fn conv_init_respects_fan_in_bound_and_zero_bias() {
    let mut rng = Rng::seed_from_u64(43);
    let conv = Conv2d::new(4, 8, 3, 1, 1, &mut rng).unwrap();
    let bound = (6.0f64 / (4.0 * 9.0)).sqrt();
    assert!(conv
        .weight
        .tensor()
        .data()
        .iter()
        .all(|v| v.abs() <= bound));
    assert!(conv.bias.tensor().data().iter().all(|&v| v == 0.0));
    // Different draws, not all identical.
    let w = conv.weight.tensor().data();
    assert!(w.iter().any(|&v| v != w[0]));
}

#[test]
fn linear_forward_matches_hand_computation() {
    let mut rng = Rng::seed_from_u64(44);
    let mut lin = Linear::new(2, 2, &mut rng).unwrap();
    lin.visit_params("", &mut |name, p: &mut Param| {
        if name == "weight" {
            p.set_values(vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        } else {
            p.set_values(vec![0.5, -0.5]).unwrap();
        }
    });
    let x = Tensor::leaf(&[1, 2], vec![1.0, 1.0]).unwrap();
    let y = lin.forward(&x).unwrap();
    assert_close(y.data(), &[4.5, 5.5], 1e-12, "linear forward");
}

#[test]
fn sgd_matches_two_step_momentum_recursion() {
    // Single weight w0=1, fixed grad 1 each step, lr=0.1, momentum=0.9,
    // weight decay 0.
    struct One {
        p: Param,
    }
    impl Module for One {
        fn visit_params(&mut self, _: &str, f: &mut dyn FnMut(String, &mut Param)) {
            f(String::from("w"), &mut self.p);
        }
        fn visit_params_ref(&self, _: &str, f: &mut dyn FnMut(String, &Param)) {
            f(String::from("w"), &self.p);
        }
        fn visit_stats(&self, _: &str, _: &mut dyn FnMut(String, &BatchNorm2d)) {}
    }
    let mut m = One {
        p: Param::new(&[1], vec![1.0]).unwrap(),
    };
    let opt = Sgd {
        lr: 0.1,
        momentum: 0.9,
        weight_decay: 0.0,
    };
    // Step 1: v = 1, w = 1 - 0.1 = 0.9.
    let loss = m.p.tensor().sum_all();
    loss.backward().unwrap();
    opt.step(&mut m).unwrap();
    assert_close(m.p.tensor().data(), &[0.9], 1e-12, "after step 1");
    // Step 2: v = 0.9 + 1 = 1.9, w = 0.9 - 0.19 = 0.71.
    let loss = m.p.tensor().sum_all();
    loss.backward().unwrap();
    opt.step(&mut m).unwrap();
    assert_close(m.p.tensor().data(), &[0.71], 1e-12, "after step 2");
    // Gradients are cleared after each step.
    assert!(m.p.tensor().grad().is_none());
}

#[test]
fn sgd_applies_weight_decay() {
    struct One {
        p: Param,
    }
    impl Module for One {
        fn visit_params(&mut self, _: &str, f: &mut dyn FnMut(String, &mut Param)) {
            f(String::from("w"), &mut self.p);
        }
        fn visit_params_ref(&self, _: &str, f: &mut dyn FnMut(String, &Param)) {
            f(String::from("w"), &self.p);
        }
        fn visit_stats(&self, _: &str, _: &mut dyn FnMut(String, &BatchNorm2d)) {}
    }
    let mut m = One {
        p: Param::new(&[1], vec![2.0]).unwrap(),
    };
    let opt = Sgd {
        lr: 0.1,
        momentum: 0.0,
        weight_decay: 0.5,
    };
    // grad 0 via a zero-coefficient loss; v = 0 + 0 + 0.5*2 = 1.
    let loss = m.p.tensor().scale(0.0).sum_all();
    loss.backward().unwrap();
    opt.step(&mut m).unwrap();
    assert_close(m.p.tensor().data(), &[1.9], 1e-12, "decay step");
}

#[test]
fn sgd_errors_name_the_ungradded_parameter() {
    struct One {
        p: Param,
    }
    impl Module for One {
        fn visit_params(&mut self, _: &str, f: &mut dyn FnMut(String, &mut Param)) {
            f(String::from("stray.weight"), &mut self.p);
        }
        fn visit_params_ref(&self, _: &str, f: &mut dyn FnMut(String, &Param)) {
            f(String::from("stray.weight"), &self.p);
        }
        fn visit_stats(&self, _: &str, _: &mut dyn FnMut(String, &BatchNorm2d)) {}
    }
    let mut m = One {
        p: Param::new(&[1], vec![1.0]).unwrap(),
    };
    let opt = Sgd {
        lr: 0.1,
        momentum: 0.9,
        weight_decay: 0.0,
    };
    let err = opt.step(&mut m).unwrap_err();
    let msg = format!("{err}");
    assert!(msg.contains("stray.weight"), "error was: {msg}");
}

#[test]
fn conv_bn_relu_output_is_nonnegative() {
    let mut rng = Rng::seed_from_u64(45);
    let block = ConvBnRelu::new(3, 4, 3, 1, &mut rng).unwrap();
    let data: Vec<f64> = (0..3 * 36).map(|_| rng.range(-1.0, 1.0)).collect();
    let x = Tensor::leaf(&[3, 6, 6], data).unwrap();
    let y = block.forward(&x, true).unwrap();
    assert_eq!(y.shape(), &[4, 6, 6]);
    assert!(y.data().iter().all(|&v| v >= 0.0));
}

#[test]
fn rng_split_streams_are_independent_and_deterministic() {
    let base = Rng::seed_from_u64(7);
    let mut a1 = base.split(1);
    let mut a2 = base.split(1);
    let mut b = base.split(2);
    let xs1: Vec<u64> = (0..4).map(|_| a1.next_u64()).collect();
    let xs2: Vec<u64> = (0..4).map(|_| a2.next_u64()).collect();
    let ys: Vec<u64> = (0..4).map(|_| b.next_u64()).collect();
    assert_eq!(xs1, xs2);
    assert_ne!(xs1, ys);
}
