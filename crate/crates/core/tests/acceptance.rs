//! Acceptance criteria, each checked against an independent oracle written
//! here. Prints one PASS/FAIL line per criterion and fails if any is red.
//!
//! cargo test --test acceptance

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use holdscan::classifier::{weighted_cross_entropy, LinearModel, SparseVector};
use holdscan::cli::{cmd_pipeline, corpus_or_synthetic, RunConfig};
use holdscan::compliance::{audit_corpus, gold_predictions, PredictedLabels};
use holdscan::corpus::{
    generate_synthetic, stratified_split, GeneratorProfile, Provenance, SplitMode,
};
use holdscan::decision::decide;
use holdscan::metrics::{binary_auc, confusion, macro_prf};
use holdscan::tuning::{run_cross_validation, shared_threshold_search, FoldPredictions};
use holdscan::{
    AuditConfig, Call, Channel, Corpus, DecisionRule, FeatureSpec, Label, PhraseTurn, ProbTriple,
    TrainConfig,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn label(i: usize) -> Label {
    Label::from_index(i).unwrap()
}

fn random_triple(rng: &mut ChaCha8Rng, coarse: bool) -> ProbTriple {
    if coarse {
        let w: [u32; 3] = std::array::from_fn(|_| rng.random_range(0..=4));
        if w.iter().sum::<u32>() == 0 {
            return ProbTriple::uniform();
        }
        return ProbTriple::normalized(w[0] as f64, w[1] as f64, w[2] as f64).unwrap();
    }
    let w: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.0..1.0));
    ProbTriple::normalized(w[0], w[1], w[2]).unwrap()
}

// 1 --------------------------------------------------------------------------

/// Opening and closing compete only when their summed probability reaches
/// the threshold; opening wins a tie.
fn restated_rule(p: [f64; 3], tau: f64) -> usize {
    if p[1] + p[2] >= tau {
        if p[2] > p[1] {
            2
        } else {
            1
        }
    } else {
        0
    }
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cases: Vec<(ProbTriple, f64)> = (0..10_000)
        .map(|i| {
            let p = random_triple(&mut rng, i % 2 == 0);
            let tau = match i % 4 {
                // Exactly on the boundary.
                0 => p.p1() + p.p2(),
                1 => 1.0 + 1e-9,
                _ => rng.random_range(0.0..1.0),
            };
            (p, tau)
        })
        .collect();
    let start = Instant::now();
    let decided: Vec<Label> = cases
        .iter()
        .map(|(p, tau)| decide(p, &DecisionRule::new(*tau).unwrap()))
        .collect();
    let elapsed = start.elapsed();
    let mismatches = cases
        .iter()
        .zip(&decided)
        .filter(|((p, tau), d)| restated_rule(p.to_array(), *tau) != d.index())
        .count();
    check(
        mismatches == 0 && elapsed < Duration::from_secs(1),
        format!("{mismatches} mismatches in 10000 pairs, {elapsed:.2?}"),
    )
}

// 2 --------------------------------------------------------------------------

fn oracle_f1(truth: &[usize], predicted: &[usize]) -> f64 {
    let mut total = 0.0;
    for c in 0..3 {
        let tp = truth
            .iter()
            .zip(predicted)
            .filter(|(&t, &p)| t == c && p == c)
            .count() as f64;
        let pred = predicted.iter().filter(|&&p| p == c).count() as f64;
        let act = truth.iter().filter(|&&t| t == c).count() as f64;
        let precision = if pred > 0.0 { tp / pred } else { 0.0 };
        let recall = if act > 0.0 { tp / act } else { 0.0 };
        total += if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
    }
    total / 3.0
}

fn oracle_mean_f1(folds: &[FoldPredictions], tau: f64) -> f64 {
    folds
        .iter()
        .map(|f| {
            let truth: Vec<usize> = f.labels.iter().map(|l| l.index()).collect();
            let predicted: Vec<usize> = f
                .probs
                .iter()
                .map(|p| restated_rule(p.to_array(), tau))
                .collect();
            oracle_f1(&truth, &predicted)
        })
        .sum::<f64>()
        / folds.len() as f64
}

/// Every distinct script mass and the reject-all threshold, tried one by one.
fn exhaustive_best(folds: &[FoldPredictions]) -> f64 {
    let mut taus: Vec<f64> = folds
        .iter()
        .flat_map(|f| f.probs.iter().map(|p| p.p1() + p.p2()))
        .collect();
    taus.push(1.0 + 1e-9);
    taus.iter()
        .map(|&t| oracle_mean_f1(folds, t))
        .fold(f64::NEG_INFINITY, f64::max)
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..500 {
        let n_folds = rng.random_range(1..=5);
        let total = rng.random_range(n_folds..=200);
        let coarse = rng.random_bool(0.5);
        let mut sizes = vec![total / n_folds; n_folds];
        sizes[0] += total % n_folds;
        let folds: Vec<FoldPredictions> = sizes
            .iter()
            .map(|&n| {
                let probs = (0..n).map(|_| random_triple(&mut rng, coarse)).collect();
                let labels = (0..n).map(|_| label(rng.random_range(0..3))).collect();
                FoldPredictions::new(probs, labels).unwrap()
            })
            .collect();
        let choice = shared_threshold_search(&folds).unwrap();
        let best = exhaustive_best(&folds);
        worst = worst
            .max((choice.mean_f1 - best).abs())
            .max((oracle_mean_f1(&folds, choice.threshold) - best).abs());
    }

    let p = |a, b, c| ProbTriple::new(a, b, c).unwrap();
    let worked = [FoldPredictions::new(
        vec![
            p(0.8, 0.15, 0.05),
            p(0.4, 0.5, 0.1),
            p(0.7, 0.2, 0.1),
            p(0.1, 0.2, 0.7),
        ],
        vec![label(0), label(1), label(0), label(2)],
    )
    .unwrap()];
    let choice = shared_threshold_search(&worked).unwrap();
    check(
        worst <= 1e-12 && choice.threshold == 0.6 && choice.mean_f1 == 1.0,
        format!(
            "max deviation {worst:e} over 500 instances; worked example tau {} F1 {}",
            choice.threshold, choice.mean_f1
        ),
    )
}

// 3 --------------------------------------------------------------------------

fn pair_counting_auc(scores: &[f64], positive: &[bool]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if positive[i] && !positive[j] {
                pairs += 1.0;
                wins += if si > sj {
                    1.0
                } else if si == sj {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    wins / pairs
}

/// Area under the ROC polyline, tied scores forming one diagonal segment.
fn trapezoidal_auc(scores: &[f64], positive: &[bool]) -> f64 {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let n_pos = positive.iter().filter(|&&p| p).count() as f64;
    let n_neg = positive.len() as f64 - n_pos;
    let (mut tp, mut fp, mut area) = (0.0, 0.0, 0.0);
    let mut i = 0;
    while i < order.len() {
        let (prev_tp, prev_fp) = (tp, fp);
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if positive[order[i]] {
                tp += 1.0
            } else {
                fp += 1.0
            }
            i += 1;
        }
        area += (fp - prev_fp) / n_neg * (tp + prev_tp) / (2.0 * n_pos);
    }
    area
}

fn criterion_3() -> Outcome {
    let truth = [label(0), label(1), label(0), label(2)];
    let predicted = [label(0), label(1), label(1), label(2)];
    let s = macro_prf(&confusion(&truth, &predicted).unwrap()).unwrap();
    let hand = (5.0 / 6.0, 5.0 / 6.0, 7.0 / 9.0);
    let worked_ok = (s.precision - hand.0).abs() < 1e-9
        && (s.recall - hand.1).abs() < 1e-9
        && (s.f1 - hand.2).abs() < 1e-9
        && (s.balanced_accuracy - hand.1).abs() < 1e-9;

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut auc_dev = 0.0f64;
    for _ in 0..1000 {
        let n = rng.random_range(2..60);
        let mut positive: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        positive[0] = true;
        positive[1] = false;
        let levels = rng.random_range(2..20);
        let scores: Vec<f64> = (0..n)
            .map(|_| rng.random_range(0..levels) as f64 / levels as f64)
            .collect();
        let pc = pair_counting_auc(&scores, &positive);
        let tr = trapezoidal_auc(&scores, &positive);
        let lib = binary_auc(&scores, &positive).unwrap();
        auc_dev = auc_dev.max((pc - tr).abs()).max((pc - lib).abs());
    }

    let mut ba_mismatch = 0;
    for _ in 0..1000 {
        let n = rng.random_range(1..50);
        let t: Vec<Label> = (0..n).map(|_| label(rng.random_range(0..3))).collect();
        let p: Vec<Label> = (0..n).map(|_| label(rng.random_range(0..3))).collect();
        let s = macro_prf(&confusion(&t, &p).unwrap()).unwrap();
        if s.balanced_accuracy != s.recall {
            ba_mismatch += 1;
        }
    }
    check(
        worked_ok && auc_dev <= 1e-9 && ba_mismatch == 0,
        format!(
            "worked P/R/F1 {:.4}/{:.4}/{:.4}; AUC deviation {auc_dev:e}; {ba_mismatch} BA != recall",
            s.precision, s.recall, s.f1
        ),
    )
}

// 4 --------------------------------------------------------------------------

fn corpus_from_labels(labels: &[usize], turns_per_call: usize) -> Corpus {
    let calls = labels
        .chunks(turns_per_call)
        .enumerate()
        .map(|(c, chunk)| {
            let call_id = format!("call{c:05}");
            Call {
                call_id: call_id.clone(),
                turns: chunk
                    .iter()
                    .enumerate()
                    .map(|(i, &l)| PhraseTurn {
                        call_id: call_id.clone(),
                        turn_index: i as u32,
                        channel: Channel::Agent,
                        start_ms: i as u64 * 1000,
                        end_ms: i as u64 * 1000 + 500,
                        text: format!("turn {i}"),
                        label: Some(label(l)),
                    })
                    .collect(),
                holds: Vec::new(),
            }
        })
        .collect();
    Corpus::new(calls, Provenance::Ingested, None).unwrap()
}

fn criterion_4() -> Outcome {
    let mut labels = vec![0; 4000];
    labels.extend(vec![1; 463]);
    labels.extend(vec![2; 301]);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for i in (1..labels.len()).rev() {
        labels.swap(i, rng.random_range(0..=i));
    }
    let corpus = corpus_from_labels(&labels, 25);
    let gold = corpus.gold_labels().unwrap();
    let plan = stratified_split(&corpus, 10, 4, SplitMode::Row).unwrap();
    let positives: Vec<usize> = plan.class_counts(&gold).iter().map(|c| c[1]).collect();
    let fixed_ok = positives.iter().all(|&c| c == 46 || c == 47);

    let mut worst = 0.0f64;
    for trial in 0..200 {
        let n = rng.random_range(30..800);
        let k = rng.random_range(3..=12);
        let weights = [
            rng.random_range(1..20),
            rng.random_range(1..5),
            rng.random_range(1..5),
        ];
        // Every class needs at least k members to appear in every fold.
        let mut labels: Vec<usize> = (0..n)
            .map(|_| {
                let r = rng.random_range(0..weights.iter().sum::<u32>());
                if r < weights[0] {
                    0
                } else if r < weights[0] + weights[1] {
                    1
                } else {
                    2
                }
            })
            .collect();
        labels.extend((0..3 * k).map(|i| i % 3));
        let corpus = corpus_from_labels(&labels, rng.random_range(1..30));
        let gold = corpus.gold_labels().unwrap();
        let plan = stratified_split(&corpus, k, trial, SplitMode::Row).unwrap();
        let totals = corpus.class_counts();
        for row in plan.class_counts(&gold) {
            for c in 0..3 {
                worst = worst.max((row[c] as f64 - totals[c] as f64 / k as f64).abs());
            }
        }
    }
    check(
        fixed_ok && worst < 1.0,
        format!("positives per fold {positives:?}; max deviation on 200 random corpora {worst:.3}"),
    )
}

// 5 --------------------------------------------------------------------------

fn criterion_5() -> Outcome {
    let (corpus, _) = generate_synthetic(150, 5, &GeneratorProfile::default()).unwrap();
    let plan = stratified_split(&corpus, 5, 5, SplitMode::Row).unwrap();
    let config = TrainConfig {
        seed: 5,
        epochs: 3,
        ..TrainConfig::default()
    };
    let spec = FeatureSpec::default();
    let base = run_cross_validation(&corpus, &plan, &config, &spec).unwrap();

    let mut perturbed = corpus.clone();
    let folds = plan.folds();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut changed = 0;
    for (turn, &fold) in perturbed
        .calls
        .iter_mut()
        .flat_map(|c| c.turns.iter_mut())
        .zip(&folds)
    {
        if fold == plan.test_fold {
            let old = turn.label.unwrap().index();
            turn.label = Some(label((old + rng.random_range(1..3)) % 3));
            changed += 1;
        }
    }
    let other = run_cross_validation(&perturbed, &plan, &config, &spec).unwrap();
    let same = base.checkpoints == other.checkpoints
        && base.shared_threshold == other.shared_threshold
        && base.validation_mean_f1 == other.validation_mean_f1;
    check(
        same,
        format!(
            "{changed} test labels flipped; checkpoints and threshold {} unchanged: {same}",
            base.shared_threshold
        ),
    )
}

// 6 --------------------------------------------------------------------------

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let config = RunConfig {
        seed: Some(42),
        ..RunConfig::default()
    };
    let corpus = corpus_or_synthetic(&config, None).unwrap();
    let plan = stratified_split(&corpus, 10, 42, config.split_mode).unwrap();
    let run = run_cross_validation(
        &corpus,
        &plan,
        &config.train_config().unwrap(),
        &config.feature_spec(),
    )
    .unwrap();
    let elapsed = start.elapsed();
    let f1 = run.mean_test.f1_macro;
    check(
        f1 >= 0.95 && elapsed < Duration::from_secs(120),
        format!(
            "mean test F1-macro {f1:.4} on {} turns in {elapsed:.1?}",
            corpus.num_turns()
        ),
    )
}

// 7 --------------------------------------------------------------------------

fn criterion_7() -> Outcome {
    let (corpus, ledger) = generate_synthetic(1000, 42, &GeneratorProfile::default()).unwrap();
    let gold = gold_predictions(&corpus).unwrap();
    let audit = audit_corpus(&corpus, &gold, &AuditConfig::default()).unwrap();
    let exact = audit.ledger() == ledger;

    let (small, _) = generate_synthetic(200, 7, &GeneratorProfile::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let noisy: PredictedLabels = gold_predictions(&small)
        .unwrap()
        .into_iter()
        .map(|(id, labels)| {
            let labels = labels
                .into_iter()
                .map(|l| {
                    if rng.random_bool(0.05) {
                        label(rng.random_range(0..3))
                    } else {
                        l
                    }
                })
                .collect();
            (id, labels)
        })
        .collect();
    let mut increases = 0;
    for _ in 0..100 {
        let narrow = AuditConfig {
            pre_window_ms: rng.random_range(0..30_000),
            post_window_ms: rng.random_range(0..30_000),
            grace_ms: rng.random_range(0..5_000),
        };
        let wide = AuditConfig {
            pre_window_ms: narrow.pre_window_ms + rng.random_range(0..30_000),
            post_window_ms: narrow.post_window_ms + rng.random_range(0..30_000),
            grace_ms: narrow.grace_ms + rng.random_range(0..5_000),
        };
        let a = audit_corpus(&small, &noisy, &narrow)
            .unwrap()
            .summary
            .total();
        let b = audit_corpus(&small, &noisy, &wide).unwrap().summary.total();
        if b > a {
            increases += 1;
        }
    }
    check(
        exact && increases == 0,
        format!(
            "gold audit equals planted ledger ({} violations): {exact}; {increases} of 100 widenings increased the count",
            ledger.len()
        ),
    )
}

// 8 --------------------------------------------------------------------------

fn criterion_8() -> Outcome {
    let config = RunConfig {
        seed: Some(8),
        calls: 200,
        folds: 5,
        ..RunConfig::default()
    };
    let corpus = corpus_or_synthetic(&config, None).unwrap();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let outputs: Vec<Vec<u8>> = dirs
        .iter()
        .map(|d| {
            cmd_pipeline(&config, &corpus, None, d.path()).unwrap();
            std::fs::read(d.path().join("metrics.json")).unwrap()
        })
        .collect();
    check(
        outputs[0] == outputs[1],
        format!(
            "metrics.json {} bytes, identical: {}",
            outputs[0].len(),
            outputs[0] == outputs[1]
        ),
    )
}

// 9 --------------------------------------------------------------------------

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let dim = 6;
    let mut model = LinearModel::zeros(dim);
    for w in model.weights.iter_mut() {
        *w = rng.random_range(-1.0..1.0);
    }
    model.bias = std::array::from_fn(|_| rng.random_range(-0.5..0.5));
    let xs: Vec<SparseVector> = (0..5)
        .map(|_| {
            let pairs = (0..dim as u32)
                .filter_map(|i| {
                    if rng.random_bool(0.6) {
                        Some((i, rng.random_range(-2.0..2.0)))
                    } else {
                        None
                    }
                })
                .collect();
            SparseVector::from_pairs(dim, pairs)
        })
        .collect();
    let batch: Vec<(&SparseVector, Label)> = xs
        .iter()
        .enumerate()
        .map(|(i, x)| (x, label(i % 3)))
        .collect();
    let weights = [0.3, 1.0, 2.5];
    let (_, grad) = weighted_cross_entropy(&model, &batch, &weights);

    let h = 1e-5;
    let loss_at = |m: &LinearModel| weighted_cross_entropy(m, &batch, &weights).0;
    let mut worst = 0.0f64;
    let mut compare = |analytic: f64, numeric: f64| {
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max(rel);
    };
    for i in 0..model.weights.len() {
        let (mut plus, mut minus) = (model.clone(), model.clone());
        plus.weights[i] += h;
        minus.weights[i] -= h;
        compare(
            grad.weights[i],
            (loss_at(&plus) - loss_at(&minus)) / (2.0 * h),
        );
    }
    for c in 0..3 {
        let (mut plus, mut minus) = (model.clone(), model.clone());
        plus.bias[c] += h;
        minus.bias[c] -= h;
        compare(grad.bias[c], (loss_at(&plus) - loss_at(&minus)) / (2.0 * h));
    }
    check(worst <= 1e-6, format!("max relative error {worst:e}"))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("decision rule matches restated rule", criterion_1),
        ("threshold search matches exhaustive sweep", criterion_2),
        ("metrics match hand and pairwise oracles", criterion_3),
        ("stratified split balance", criterion_4),
        ("test labels never leak into selection", criterion_5),
        ("default synthetic pipeline quality", criterion_6),
        ("gold audit reproduces planted ledger", criterion_7),
        ("pipeline output is deterministic", criterion_8),
        ("gradient matches finite differences", criterion_9),
    ];
    let mut failed = Vec::new();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("criterion {}: PASS  {name}  ({detail})", i + 1),
            Err(detail) => {
                println!("criterion {}: FAIL  {name}  ({detail})", i + 1);
                failed.push(i + 1);
            }
        }
    }
    if !failed.is_empty() {
        eprintln!("failing criteria: {failed:?}");
        std::process::exit(1);
    }
}
