//! Acceptance suite. One test per contract-level criterion; each prints
//! a single machine-greppable PASS/FAIL line (run with --nocapture to
//! see the lines for passing tests as well).

mod oracles;

use std::time::Instant;

use sod_cli::ablate::{self, REFERENCE, SCHEMES};
use sod_cli::config::TrainConfig;
use sod_cli::evalcsv;
use sod_cli::synth::synth_dataset;
use sod_cli::train::{evaluate_model, train_model};
use sod_core::gradcheck::run_suite;
use sod_core::loss::{jhol_terms, pair_from_slices, LossConfig};
use sod_core::metrics::{evaluate_pair, CURVE_POINTS};
use sod_core::network::{Model, ModelConfig};
use sod_core::rng::Rng;
use sod_core::Tensor;

fn check(name: &str, ok: bool, detail: &str) {
    let verdict = if ok { "PASS" } else { "FAIL" };
    println!("ACCEPTANCE {verdict}: {name} ({detail})");
    assert!(ok, "{name}: {detail}");
}

/// Every differentiable op and module matches central finite differences
/// at 1e-4 relative tolerance over 100 seeded trials, within 5 minutes.
#[test]
fn criterion_gradients_match_finite_differences() {
    let start = Instant::now();
    let entries = run_suite(0, 100).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    let mut failures = Vec::new();
    for e in &entries {
        worst = worst.max(e.result.max_rel);
        checked += e.result.checked;
        if e.result.max_rel >= 1e-4 || e.result.checked == 0 {
            failures.push(e.name.clone());
        }
    }
    check(
        "gradient suite",
        failures.is_empty() && elapsed < 300.0,
        &format!(
            "{n} targets, {checked} coords, worst rel {worst:.3e}, {elapsed:.1}s, failing: {failures:?}",
            n = entries.len()
        ),
    );
}

/// The four ratio loss terms agree with an independent scalar
/// transcription at 1e-12 for every binary 3x3 ground truth (512
/// patterns), against both a random and a perfect prediction.
#[test]
fn criterion_loss_ratio_terms_match_scalar_oracle() {
    let cfg = LossConfig::default();
    let mut rng = Rng::seed_from_u64(77);
    let mut worst = 0.0f64;
    for pattern in 0u16..512 {
        let gt: Vec<f64> = (0..9).map(|b| ((pattern >> b) & 1) as f64).collect();
        let pred: Vec<f64> = (0..9).map(|_| rng.uniform()).collect();
        for p in [&pred, &gt] {
            let pair = pair_from_slices(p, &gt, 1, 9).unwrap();
            let t = jhol_terms(&pair, &cfg).unwrap();
            let want = oracles::ratio_oracle(p, &gt, cfg.eps);
            for k in 0..4 {
                let got = t.terms[k].item().unwrap();
                worst = worst.max((got - want[k]).abs());
            }
        }
        // perfect binary prediction: error terms vanish, the
        // negative-agreement ratio approaches the background fraction.
        // All-background ground truth is excluded: every ratio there is
        // a clamped eps/eps quotient with no meaningful limit.
        if pattern != 0 {
            let pair = pair_from_slices(&gt, &gt, 1, 9).unwrap();
            let t = jhol_terms(&pair, &cfg).unwrap();
            let bg = gt.iter().filter(|&&g| g < 0.5).count() as f64 / 9.0;
            for k in 0..3 {
                assert!(t.terms[k].item().unwrap() < 1e-7, "pattern {pattern} term {k}");
            }
            assert!((t.terms[3].item().unwrap() - bg).abs() < 1e-7, "pattern {pattern} term 3");
        }
    }
    check(
        "ratio loss oracle",
        worst < 1e-12,
        &format!("512 patterns x 2 predictions, worst abs diff {worst:.3e}"),
    );
}

/// All six evaluation measures agree with naive reference
/// implementations at 1e-9 on 50 seeded 16x16 prediction/gt pairs.
#[test]
fn criterion_metrics_match_naive_oracles() {
    let mut rng = Rng::seed_from_u64(90);
    let mut worst = 0.0f64;
    for trial in 0..50 {
        let (pred, gt) = oracles::random_pair(&mut rng, 16, 16);
        let m = evaluate_pair(&pred, &gt).unwrap();
        let (oprec, orec, ofc, of_max, of_avg) = oracles::pr_oracle(&pred, &gt);
        for i in 0..CURVE_POINTS {
            worst = worst.max((m.precision[i] - oprec[i]).abs());
            worst = worst.max((m.recall[i] - orec[i]).abs());
            worst = worst.max((m.f_curve[i] - ofc[i]).abs());
        }
        let om = pred
            .data
            .iter()
            .zip(&gt.data)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            / 256.0;
        for (name, got, want) in [
            ("f_max", m.f_max, of_max),
            ("f_avg", m.f_avg, of_avg),
            ("f_weighted", m.f_weighted, oracles::weighted_oracle(&pred, &gt)),
            ("s_alpha", m.s_alpha, oracles::s_oracle(&pred, &gt)),
            ("e_xi", m.e_xi, oracles::e_oracle(&pred, &gt)),
            ("mae", m.mae, om),
        ] {
            let d = (got - want).abs();
            assert!(d < 1e-9, "trial {trial} {name}: {got} vs {want}");
            worst = worst.max(d);
        }
    }
    check(
        "metric oracles",
        worst < 1e-9,
        &format!("50 pairs, 6 measures + 3 curves, worst abs diff {worst:.3e}"),
    );
}

/// Random configurations build models whose realized wiring matches the
/// requested flags and whose outputs have the contracted shapes/ranges.
#[test]
fn criterion_architecture_flags_respected() {
    let mut rng = Rng::seed_from_u64(4242);
    let widths = [4usize, 6, 8, 12, 16];
    for trial in 0..20 {
        let cfg = ModelConfig {
            channels: (0..5).map(|_| widths[rng.below(widths.len())]).collect(),
            input: if trial < 2 { 64 } else { 32 },
            ndam_p1: rng.chance(0.5),
            ndam_p2: rng.chance(0.5),
            aiam_i1: rng.chance(0.5),
            aiam_i2: rng.chance(0.5),
            side_outputs: rng.chance(0.5),
        };
        let model = Model::build(cfg.clone(), trial).unwrap();
        let audit = model.audit();
        assert_eq!(audit.ndam_p1, cfg.ndam_p1, "trial {trial} p1");
        assert_eq!(audit.ndam_p2, cfg.ndam_p2, "trial {trial} p2");
        assert_eq!(audit.aiam_i1, cfg.aiam_i1, "trial {trial} i1");
        assert_eq!(audit.aiam_i2, cfg.aiam_i2, "trial {trial} i2");
        assert_eq!(audit.side_outputs, cfg.side_outputs, "trial {trial} side");
        assert_eq!(audit.ndam_levels, vec![3, 4, 5]);
        assert_eq!(audit.aiam_levels, vec![2, 3, 4]);

        let r = cfg.input;
        let rgb = Tensor::new(&[3, r, r], (0..3 * r * r).map(|_| rng.uniform()).collect()).unwrap();
        let depth = Tensor::new(&[1, r, r], (0..r * r).map(|_| rng.uniform()).collect()).unwrap();
        let out = model.forward(&rgb, &depth, false).unwrap();
        assert_eq!(out.saliency.shape(), &[1, r, r], "trial {trial} saliency shape");
        assert!(
            out.saliency.data().iter().all(|&v| v > 0.0 && v < 1.0),
            "trial {trial} saliency range"
        );
        let want_side = if cfg.side_outputs { 3 } else { 0 };
        assert_eq!(out.side.len(), want_side, "trial {trial} side count");
        for s in &out.side {
            assert_eq!(s.shape(), &[1, r, r], "trial {trial} side shape");
        }
    }
    check("architecture invariants", true, "20 random configs audited");
}

/// The default small-scale schedule trains from scratch on synthetic
/// data to MAE < 0.15 and max F-measure > 0.80 on a held-out split in
/// under 30 minutes, and the loss falls from the first step to the end
/// of the first epoch.
#[test]
fn criterion_toy_training_reaches_quality_targets() {
    let start = Instant::now();
    let cfg = TrainConfig::default();
    let train = synth_dataset(cfg.train_samples, cfg.model.input, cfg.seed);
    let test = synth_dataset(cfg.test_samples, cfg.model.input, cfg.seed ^ 0x7E57);
    let outcome = train_model(&cfg, &train, &test, None, false).unwrap();
    let report = evaluate_model(&outcome.model, &test).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let loss_fell = outcome.epochs[0].train_loss < outcome.first_step_loss;
    check(
        "small-scale training",
        report.mae < 0.15 && report.f_max > 0.80 && elapsed < 1800.0 && loss_fell,
        &format!(
            "mae {:.4} (<0.15), f_max {:.4} (>0.80), {:.0}s (<1800), loss {:.3} -> {:.3}",
            report.mae, report.f_max, elapsed, outcome.first_step_loss, outcome.epochs[0].train_loss
        ),
    );
}

/// Seed-averaged over 3 seeds, the full system (all attention phases,
/// all loss terms) scores a lower MAE than the stripped baseline, and
/// both result and reference tables are written.
#[test]
fn criterion_ablation_orders_full_system_ahead_of_baseline() {
    let base = ablate::ablation_base();
    let results = ablate::run_ablation(&base, &[0, 1, 2], false).unwrap();
    assert_eq!(results.len(), SCHEMES.len());
    let dir = tempfile::tempdir().unwrap();
    ablate::write_results(dir.path(), &results).unwrap();
    ablate::write_reference(dir.path()).unwrap();
    let table = std::fs::read_to_string(dir.path().join("ablation.csv")).unwrap();
    let reference = std::fs::read_to_string(dir.path().join("reference.csv")).unwrap();
    assert_eq!(table.lines().count(), 14);
    assert_eq!(reference.lines().count(), 14);
    let base_mae = results[0].metrics[5];
    let full_mae = results[12].metrics[5];
    check(
        "ablation ordering",
        full_mae <= base_mae,
        &format!("full-system MAE {full_mae:.4} <= baseline MAE {base_mae:.4}, 3 seeds"),
    );
}

/// The shipped reference table is full-scale-only: a desk-scale run of
/// the identical full-system scheme lands far from the published row,
/// and the table itself is well-formed. This documents, rather than
/// hides, that the original numbers are not reproducible here.
#[test]
fn criterion_reference_numbers_not_reproduced_at_desk_scale() {
    for (row, vals) in REFERENCE.iter().enumerate() {
        for (col, v) in vals.iter().enumerate() {
            assert!((0.0..=1.0).contains(v), "reference row {row} col {col}");
        }
    }
    let base = ablate::ablation_base();
    let mut cfg = ablate::scheme_config(&base, &SCHEMES[12]);
    cfg.seed = 0;
    let train = synth_dataset(cfg.train_samples, cfg.model.input, cfg.seed);
    let test = synth_dataset(cfg.test_samples, cfg.model.input, cfg.seed ^ 0x7E57);
    let outcome = train_model(&cfg, &train, &test, None, false).unwrap();
    let report = evaluate_model(&outcome.model, &test).unwrap();
    let published_mae = REFERENCE[12][5];
    let gap = (report.mae - published_mae).abs();
    check(
        "reference gap",
        gap > 0.05,
        &format!(
            "desk-scale full-system MAE {:.4} vs published {published_mae:.3}; gap {gap:.3} confirms the table is not reproduced here",
            report.mae
        ),
    );
}

/// Two identical runs of the data -> train -> evaluate pipeline produce
/// byte-identical metric and log files.
#[test]
fn criterion_pipeline_is_deterministic() {
    let run = || {
        let mut cfg = TrainConfig::default();
        cfg.model.channels = vec![4, 4, 8, 8, 8];
        cfg.model.input = 32;
        cfg.epochs = 2;
        cfg.train_samples = 8;
        cfg.test_samples = 4;
        cfg.seed = 11;
        let train = synth_dataset(cfg.train_samples, cfg.model.input, cfg.seed);
        let test = synth_dataset(cfg.test_samples, cfg.model.input, cfg.seed ^ 0x7E57);
        let dir = tempfile::tempdir().unwrap();
        let outcome = train_model(&cfg, &train, &test, Some(dir.path()), false).unwrap();
        let report = evaluate_model(&outcome.model, &test).unwrap();
        evalcsv::write_metrics(dir.path(), &report).unwrap();
        evalcsv::write_curves(dir.path(), &report).unwrap();
        let read = |n: &str| std::fs::read(dir.path().join(n)).unwrap();
        (read("metrics.csv"), read("curves.csv"), read("train_log.csv"))
    };
    let a = run();
    let b = run();
    check(
        "determinism",
        a == b,
        "metrics.csv, curves.csv and train_log.csv byte-identical across two runs",
    );
}
