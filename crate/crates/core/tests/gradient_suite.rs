//! Finite-difference validation of the reverse-mode gradients across
//! every differentiable building block, driven by the shared suite.

use sod_core::gradcheck::{check_fn, run_suite, Coords, DEFAULT_STEP};
use sod_core::Tensor;

#[test]
fn suite_gradients_agree_with_finite_differences() {
    // A reduced trial count here keeps the unit run fast; the acceptance
    // battery runs the full 100 trials.
    let entries = run_suite(0, 10).unwrap();
    assert!(!entries.is_empty());
    for e in &entries {
        assert!(
            e.result.max_rel < 1e-4,
            "{}: max relative error {} over {} checks",
            e.name,
            e.result.max_rel,
            e.result.checked
        );
        assert!(e.result.checked > 0, "{}: nothing checked", e.name);
        assert!(
            e.result.skip_fraction() < 0.5,
            "{}: skipped {} of {} coordinates",
            e.name,
            e.result.skipped,
            e.result.checked + e.result.skipped
        );
    }
}

#[test]
fn suite_covers_every_module_family() {
    let entries = run_suite(1, 2).unwrap();
    let names: Vec<&str> = entries.iter().map(|e| e.name.as_str()).collect();
    for needle in [
        "conv", "softmax", "matmul", "batchnorm", "pool", "resample", "bce", "jhol", "ndam",
        "aiam", "network",
    ] {
        assert!(
            names.iter().any(|n| n.contains(needle)),
            "no suite entry mentions '{needle}': {names:?}"
        );
    }
}

#[test]
fn check_fn_flags_a_deliberately_wrong_gradient() {
    // sanity check of the checker itself: a detached path hides the
    // dependence, so analytic and numeric gradients must disagree.
    let f = |inputs: &[Tensor]| {
        let x = &inputs[0];
        let hidden = x.detach().mul(&x.detach()).unwrap();
        hidden.add(x)?.sum_all().mul(&Tensor::scalar(1.0))
    };
    let x = Tensor::leaf(&[3], vec![0.5, 1.5, -0.7]).unwrap();
    let r = check_fn(f, &[x], Coords::All, DEFAULT_STEP).unwrap();
    assert!(r.max_rel > 0.1, "checker missed the broken gradient");
}
