//! End-to-end acceptance suite: one PASS/FAIL line per criterion, non-zero
//! exit status if any criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use ndarray::{array, Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reic::corpus::generate_synthetic;
use reic::nn::{finite_diff_grad, max_relative_error, DenseLayer, LstmCell, LstmState, Parameterized};
use reic::rehead::{loss_threshold, RelationLabelSet};
use reic::rltrain::{
    evaluate, policy_gradient, reward_end2end, reward_threshold, train, EvalReport, PreparedCorpus, Rollout,
    TrainHistory,
};
use reic::selector::{
    backprop_trajectory, select, select_one_step, trajectory_log_prob, PolicyConfig, PolicyNetwork, SelectorConfig,
};
use reic_cli::{run_from, RunConfig, ABLATION_CSV, CHECKPOINT, HISTORY_CSV, RESOLVED_CONFIG};
use statrs::distribution::{ChiSquared, ContinuousCDF};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(label: &str, elapsed: Duration, limit: Duration) -> Result<(), String> {
    check(elapsed <= limit, || {
        format!("{label} took {elapsed:.1?}, limit {limit:?}")
    })
}

fn random_array2(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
}

fn random_array1(rng: &mut ChaCha8Rng, n: usize) -> Array1<f64> {
    Array1::from_shape_fn(n, |_| rng.random_range(-1.0..1.0))
}

const FD_EPS: f64 = 1e-5;
const FD_TOLERANCE: f64 = 1e-4;
const FD_INSTANCES: usize = 25;

fn dense_instance(rng: &mut ChaCha8Rng) -> f64 {
    let (i, o) = (rng.random_range(1..7), rng.random_range(1..7));
    let mut layer = DenseLayer::new(i, o, rng);
    let x = random_array1(rng, i);
    let c = random_array1(rng, o);
    let loss = |l: &DenseLayer, x: &Array1<f64>| l.forward(x.view()).unwrap().dot(&c);
    let dx = layer.backward(x.view(), c.view());
    let mut probe = layer.clone();
    let numeric = finite_diff_grad(
        |p| {
            probe.set_flat_params(p);
            loss(&probe, &x)
        },
        &layer.flat_params(),
        FD_EPS,
    );
    let numeric_x = finite_diff_grad(
        |v| loss(&layer, &Array1::from(v.to_vec())),
        x.as_slice().unwrap(),
        FD_EPS,
    );
    max_relative_error(&layer.flat_grads(), &numeric).max(max_relative_error(dx.as_slice().unwrap(), &numeric_x))
}

fn lstm_instance(rng: &mut ChaCha8Rng) -> f64 {
    let (i, h) = (rng.random_range(1..5), rng.random_range(1..5));
    let mut cell = LstmCell::new(i, h, rng);
    let x = random_array1(rng, i);
    let prev = LstmState {
        h: random_array1(rng, h),
        c: random_array1(rng, h),
    };
    let (a, b) = (random_array1(rng, h), random_array1(rng, h));
    let loss = |cell: &LstmCell, x: &Array1<f64>, prev: &LstmState| {
        let (s, _) = cell.step(x.view(), prev).unwrap();
        s.h.dot(&a) + s.c.dot(&b)
    };
    let (_, cache) = cell.step(x.view(), &prev).unwrap();
    let (dx, dh, dc) = cell.backward(&cache, a.view(), b.view());
    let mut probe = cell.clone();
    let numeric = finite_diff_grad(
        |p| {
            probe.set_flat_params(p);
            loss(&probe, &x, &prev)
        },
        &cell.flat_params(),
        FD_EPS,
    );
    let nx = finite_diff_grad(
        |v| loss(&cell, &Array1::from(v.to_vec()), &prev),
        x.as_slice().unwrap(),
        FD_EPS,
    );
    let nh = finite_diff_grad(
        |v| {
            let s = LstmState {
                h: Array1::from(v.to_vec()),
                c: prev.c.clone(),
            };
            loss(&cell, &x, &s)
        },
        prev.h.as_slice().unwrap(),
        FD_EPS,
    );
    let nc = finite_diff_grad(
        |v| {
            let s = LstmState {
                h: prev.h.clone(),
                c: Array1::from(v.to_vec()),
            };
            loss(&cell, &x, &s)
        },
        prev.c.as_slice().unwrap(),
        FD_EPS,
    );
    [
        max_relative_error(&cell.flat_grads(), &numeric),
        max_relative_error(dx.as_slice().unwrap(), &nx),
        max_relative_error(dh.as_slice().unwrap(), &nh),
        max_relative_error(dc.as_slice().unwrap(), &nc),
    ]
    .into_iter()
    .fold(0.0, f64::max)
}

fn trajectory_instance(rng: &mut ChaCha8Rng, one_step: bool) -> f64 {
    let d = rng.random_range(2..5);
    let m = rng.random_range(3..9);
    let cfg = PolicyConfig {
        embed_dim: d,
        hidden_dim: rng.random_range(2..5),
        scorer_hidden: rng.random_range(2..6),
    };
    let mut net = PolicyNetwork::new(cfg, rng);
    let z = random_array2(rng, m, d);
    let target = rng.random_range(0..m);
    let sel = SelectorConfig {
        max_steps: rng.random_range(1..m),
        ..SelectorConfig::default()
    };
    let mut state = if one_step {
        select_one_step(&net, z.view(), target, &sel, rng).unwrap()
    } else {
        select(&net, z.view(), target, &sel, rng).unwrap()
    };
    let choices = state.selected[1..].to_vec();
    net.zero_grads();
    backprop_trajectory(&mut net, &mut state.trace, 1.0).unwrap();
    let mut probe = net.clone();
    let numeric = finite_diff_grad(
        |p| {
            probe.set_flat_params(p);
            trajectory_log_prob(&probe, z.view(), target, &choices, one_step).unwrap()
        },
        &net.flat_params(),
        FD_EPS,
    );
    max_relative_error(&net.flat_grads(), &numeric)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = BTreeMap::new();
    for _ in 0..FD_INSTANCES {
        let errors = [
            ("dense", dense_instance(&mut rng)),
            ("recurrent", lstm_instance(&mut rng)),
            ("trajectory", trajectory_instance(&mut rng, false)),
            ("one-step trajectory", trajectory_instance(&mut rng, true)),
        ];
        for (name, e) in errors {
            let w = worst.entry(name).or_insert(0.0f64);
            *w = w.max(e);
        }
    }
    let summary = worst
        .iter()
        .map(|(k, v)| format!("{k} {v:.1e}"))
        .collect::<Vec<_>>()
        .join(", ");
    for (name, &e) in &worst {
        check(e < FD_TOLERANCE, || {
            format!("{name} max rel. err {e:.2e} over {FD_INSTANCES} instances")
        })?;
    }
    within("gradient checks", start.elapsed(), Duration::from_secs(30))?;
    Ok(format!("{FD_INSTANCES} instances each, max rel. err: {summary}"))
}

fn enumerable_reward(choices: &[usize]) -> f64 {
    match choices {
        [1, 2] => 1.0,
        [2, 1] => -0.4,
        _ => unreachable!("only two trajectories exist"),
    }
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let z = array![[0.4, -0.3], [0.9, 0.2], [-0.5, 0.7]];
    let mut init = ChaCha8Rng::seed_from_u64(12);
    let mut net = PolicyNetwork::new(
        PolicyConfig {
            embed_dim: 2,
            hidden_dim: 3,
            scorer_hidden: 4,
        },
        &mut init,
    );
    let mut probe = net.clone();
    let exact = finite_diff_grad(
        |p| {
            probe.set_flat_params(p);
            [[1, 2], [2, 1]]
                .iter()
                .map(|c| trajectory_log_prob(&probe, z.view(), 0, c, false).unwrap().exp() * enumerable_reward(c))
                .sum()
        },
        &net.flat_params(),
        1e-6,
    );
    let cfg = SelectorConfig {
        max_steps: 2,
        ..SelectorConfig::default()
    };
    let n = 200_000;
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut rollouts: Vec<Rollout> = (0..n)
        .map(|_| {
            let s = select(&net, z.view(), 0, &cfg, &mut rng).unwrap();
            Rollout {
                reward: enumerable_reward(&s.selected[1..]),
                traces: vec![s.trace],
            }
        })
        .collect();
    let sampled = policy_gradient(&mut net, &mut rollouts).map_err(|e| e.to_string())?;
    let scale = exact.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    let mut worst = 0.0f64;
    let mut compared = 0;
    for (i, (a, b)) in sampled.iter().zip(&exact).enumerate() {
        if b.abs() > 1e-6 * scale {
            let rel = (a - b).abs() / b.abs();
            check(rel <= 0.02, || {
                format!("coordinate {i}: sampled {a:.6e} vs exact {b:.6e} ({:.2}%)", rel * 100.0)
            })?;
            worst = worst.max(rel);
            compared += 1;
        }
    }
    within("REINFORCE oracle", start.elapsed(), Duration::from_secs(120))?;
    Ok(format!(
        "{n} trajectories, {compared}/{} coordinates compared, worst {:.3}%",
        exact.len(),
        worst * 100.0
    ))
}

fn naive_threshold(y: &[f64], gold: &RelationLabelSet, theta: f64) -> f64 {
    let above: f64 = theta.exp()
        + (0..y.len())
            .filter(|r| !gold.contains(*r))
            .map(|r| y[r].exp())
            .sum::<f64>();
    let below: f64 = (-theta).exp()
        + (0..y.len())
            .filter(|r| gold.contains(*r))
            .map(|r| (-y[r]).exp())
            .sum::<f64>();
    above.ln() + below.ln()
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst = 0.0f64;
    for i in 0..1000 {
        let k = rng.random_range(1..10);
        let y: Vec<f64> = (0..k).map(|_| rng.random_range(-8.0..8.0)).collect();
        let theta = rng.random_range(-3.0..3.0);
        let gold = RelationLabelSet((0..k).filter(|_| rng.random_bool(0.3)).collect());
        let stable = loss_threshold(Array1::from(y.clone()).view(), &gold, theta);
        let naive = naive_threshold(&y, &gold, theta);
        let diff = (stable - naive).abs();
        check(diff <= 1e-9, || {
            format!("instance {i}: stable {stable} vs naive {naive}")
        })?;
        worst = worst.max(diff);
    }
    let positive = loss_threshold(array![1.0].view(), &RelationLabelSet::from_label(Some(0)), 0.0);
    let na = loss_threshold(array![-2.0].view(), &RelationLabelSet::from_label(None), 0.0);
    check((positive - 0.31326).abs() < 1e-5, || {
        format!("positive example gave {positive}")
    })?;
    check((na - 0.12693).abs() < 1e-5, || format!("N/A example gave {na}"))?;
    Ok(format!(
        "1000 instances, max |diff| {worst:.1e}; hand values {positive:.5}, {na:.5}"
    ))
}

struct SeedRun {
    seed: u64,
    reic: EvalReport,
    reic_history: TrainHistory,
    snippet: EvalReport,
    bridge: EvalReport,
}

fn experiment_config(seed: u64, selector: &str) -> RunConfig {
    let mut cfg = RunConfig::default();
    for (k, v) in [
        ("seed", seed.to_string()),
        ("corpus_seed", seed.to_string()),
        ("n_bags", "300".into()),
        ("eval_bags", "100".into()),
        ("sentences_per_doc", "60".into()),
        ("evidence_offset_min", "20".into()),
        ("max_steps", "10".into()),
        ("epochs", "30".into()),
        ("selector", selector.into()),
    ] {
        cfg.set(k, &v).unwrap();
    }
    cfg
}

fn run_experiment(seed: u64) -> Result<SeedRun, String> {
    let base = experiment_config(seed, "reic");
    let synth = base.synthetic().map_err(|e| e.to_string())?;
    let (corpus, store) = generate_synthetic(&synth).map_err(|e| e.to_string())?;
    let n_train = synth.n_bags - base.eval_bags().map_err(|e| e.to_string())?;
    let (train_split, eval_split) = corpus.split(n_train);
    let train_data = PreparedCorpus::new(&train_split, &store).map_err(|e| e.to_string())?;
    let eval_data = PreparedCorpus::new(&eval_split, &store).map_err(|e| e.to_string())?;
    let fit = |selector: &str| -> Result<(EvalReport, TrainHistory), String> {
        let cfg = experiment_config(seed, selector);
        let tc = cfg.train().map_err(|e| e.to_string())?;
        let out = train(&train_data, tc, cfg.reward().map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        let report = evaluate(&out.policy, &out.head, &eval_data, &tc).map_err(|e| e.to_string())?;
        Ok((report, out.history))
    };
    let (reic, reic_history) = fit("reic")?;
    let (snippet, _) = fit("snippet")?;
    let (bridge, _) = fit("bridge")?;
    Ok(SeedRun {
        seed,
        reic,
        reic_history,
        snippet,
        bridge,
    })
}

fn criterion_4(runs: &[SeedRun], elapsed: Duration) -> Outcome {
    let recall: f64 = runs.iter().map(|r| r.reic.metrics.evidence_recall).sum::<f64>() / runs.len() as f64;
    let snippet_recall: f64 = runs.iter().map(|r| r.snippet.metrics.evidence_recall).sum::<f64>() / runs.len() as f64;
    let f1s = runs
        .iter()
        .map(|r| format!("seed {} {:.3}/{:.3}", r.seed, r.reic.metrics.f1, r.snippet.metrics.f1))
        .collect::<Vec<_>>()
        .join(", ");
    check(recall >= 0.8, || format!("REIC mean evidence recall {recall:.3} < 0.8"))?;
    check(snippet_recall <= 0.3, || {
        format!("snippet mean evidence recall {snippet_recall:.3} > 0.3")
    })?;
    for r in runs {
        let gap = r.reic.metrics.f1 - r.snippet.metrics.f1;
        check(gap >= 0.10, || {
            format!(
                "seed {}: REIC F1 {:.3} vs snippet {:.3} (gap {:.1} points)",
                r.seed,
                r.reic.metrics.f1,
                r.snippet.metrics.f1,
                gap * 100.0
            )
        })?;
    }
    within("planted-evidence experiment", elapsed, Duration::from_secs(600))?;
    Ok(format!(
        "recall REIC {recall:.3}, snippet {snippet_recall:.3}; F1 REIC/snippet: {f1s}; {elapsed:.0?}"
    ))
}

fn criterion_5(runs: &[SeedRun]) -> Outcome {
    let mut parts = Vec::new();
    for r in runs {
        let h = &r.reic_history;
        let early = h.ema_at_fraction(0.1).ok_or("empty history")?;
        let last = h.final_ema().ok_or("empty history")?;
        check(last >= early, || {
            format!("seed {}: final EMA {last:.4} < EMA at 10% {early:.4}", r.seed)
        })?;
        parts.push(format!("seed {} {early:.3} -> {last:.3}", r.seed));
    }
    Ok(format!("reward EMA at 10% -> final: {}", parts.join(", ")))
}

fn criterion_8(runs: &[SeedRun]) -> Outcome {
    let mean = |f: &dyn Fn(&SeedRun) -> f64| runs.iter().map(f).sum::<f64>() / runs.len() as f64;
    let reic_pos = mean(&|r| r.reic.metrics.mean_bridge_mentions_pos);
    let reic_na = mean(&|r| r.reic.metrics.mean_bridge_mentions_na);
    let filt_pos = mean(&|r| r.bridge.metrics.mean_bridge_mentions_pos);
    let filt_na = mean(&|r| r.bridge.metrics.mean_bridge_mentions_na);
    check(reic_pos > reic_na, || {
        format!("REIC positive {reic_pos:.2} <= N/A {reic_na:.2}")
    })?;
    check(filt_pos > filt_na, || {
        format!("bridge filter positive {filt_pos:.2} <= N/A {filt_na:.2}")
    })?;
    check(filt_pos >= reic_pos, || {
        format!("bridge filter {filt_pos:.2} < REIC {reic_pos:.2} on positive bags")
    })?;
    Ok(format!(
        "positive/N/A bag means: bridge filter {filt_pos:.2}/{filt_na:.2}, REIC {reic_pos:.2}/{reic_na:.2}"
    ))
}

const FIXTURE_CORPUS: &[&str] = &[
    "--set",
    "n_bags=40",
    "--set",
    "eval_bags=15",
    "--set",
    "sentences_per_doc=20",
    "--set",
    "dim=12",
    "--set",
    "evidence_offset_min=5",
    "--set",
    "n_distractor_entities=10",
];

const FIXTURE_MODEL: &[&str] = &[
    "--set",
    "epochs=3",
    "--set",
    "hidden_dim=8",
    "--set",
    "scorer_hidden=8",
    "--set",
    "head_hidden=8",
    "--set",
    "max_steps=4",
];

fn cli(args: &[&str]) -> Result<(), String> {
    let mut full = vec!["reic"];
    full.extend_from_slice(args);
    run_from(full).map_err(|e| format!("{args:?}: {e:#}"))
}

fn fixture_corpus(dir: &Path) -> Result<(), String> {
    let mut args = vec!["gen-corpus", "--out", dir.to_str().unwrap()];
    args.extend_from_slice(FIXTURE_CORPUS);
    cli(&args)
}

fn ablate(corpus: &Path, out: &Path, sweep: &str) -> Result<Vec<Vec<String>>, String> {
    let mut args = vec![
        "ablate",
        "--corpus",
        corpus.to_str().unwrap(),
        "--sweep",
        sweep,
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(FIXTURE_MODEL);
    cli(&args)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(out.join(ABLATION_CSV))
        .map_err(|e| e.to_string())?;
    reader
        .records()
        .map(|r| {
            r.map(|r| r.iter().map(str::to_owned).collect())
                .map_err(|e| e.to_string())
        })
        .collect()
}

fn orderings(m: usize, target: usize, t: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..t {
        out = out
            .into_iter()
            .flat_map(|prefix: Vec<usize>| {
                (0..m)
                    .filter(|&i| i != target && !prefix.contains(&i))
                    .map(|i| {
                        let mut next = prefix.clone();
                        next.push(i);
                        next
                    })
                    .collect::<Vec<_>>()
            })
            .collect();
    }
    out
}

fn criterion_6() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let corpus = tmp.path().join("corpus");
    fixture_corpus(&corpus)?;
    let rows = ablate(&corpus, &tmp.path().join("ablate"), "selector=reic,onestep")?;
    check(rows.len() == 3, || {
        format!("expected header and 2 rows, got {} lines", rows.len())
    })?;
    check(
        rows[0][0] == "selector" && rows[1][0] == "reic" && rows[2][0] == "onestep",
        || format!("unexpected rows {:?}", rows.iter().map(|r| &r[0]).collect::<Vec<_>>()),
    )?;

    let (m, t, target, d) = (5, 2, 0, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let z = random_array2(&mut rng, m, d);
    let cfg = PolicyConfig {
        embed_dim: d,
        hidden_dim: 4,
        scorer_hidden: 5,
    };
    let sel = SelectorConfig {
        max_steps: t,
        ..SelectorConfig::default()
    };
    let uniform = PolicyNetwork::zeros(cfg);
    let all = orderings(m, target, t);
    let draws = 100_000;
    let mut counts: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
    let mut sampler = ChaCha8Rng::seed_from_u64(2025);
    for _ in 0..draws {
        let s = select_one_step(&uniform, z.view(), target, &sel, &mut sampler).map_err(|e| e.to_string())?;
        *counts.entry(s.selected[1..].to_vec()).or_default() += 1;
    }
    let expected = draws as f64 / all.len() as f64;
    let stat: f64 = all
        .iter()
        .map(|o| (counts.get(o).copied().unwrap_or(0) as f64 - expected).powi(2) / expected)
        .sum();
    let p = 1.0 - ChiSquared::new((all.len() - 1) as f64).unwrap().cdf(stat);
    check(p > 0.01, || format!("uniform one-step chi-square p = {p:.4}"))?;

    let mut net = PolicyNetwork::new(cfg, &mut ChaCha8Rng::seed_from_u64(8));
    let sharpened: Vec<f64> = net.flat_params().iter().map(|w| 4.0 * w).collect();
    net.set_flat_params(&sharpened);
    let mut tv = 0.0;
    let (mut mass_multi, mut mass_one) = (0.0, 0.0);
    for o in &all {
        let pm = trajectory_log_prob(&net, z.view(), target, o, false)
            .map_err(|e| e.to_string())?
            .exp();
        let po = trajectory_log_prob(&net, z.view(), target, o, true)
            .map_err(|e| e.to_string())?
            .exp();
        tv += (pm - po).abs() / 2.0;
        mass_multi += pm;
        mass_one += po;
    }
    check(
        (mass_multi - 1.0).abs() < 1e-12 && (mass_one - 1.0).abs() < 1e-12,
        || format!("enumerated masses {mass_multi} and {mass_one}"),
    )?;
    check(tv > 1e-3, || {
        format!("multi-step and one-step distributions coincide (TV {tv:.2e})")
    })?;
    Ok(format!(
        "ablation rows reic, onestep; uniform one-step chi-square p = {p:.3} over {} orderings; TV(multi, one-step) = {tv:.4}",
        all.len()
    ))
}

fn criterion_7() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let corpus = tmp.path().join("corpus");
    fixture_corpus(&corpus)?;
    let out = tmp.path().join("ablate");
    let rows = ablate(&corpus, &out, "lambda=1,10")?;
    check(rows.len() == 3 && rows[1][0] == "1" && rows[2][0] == "10", || {
        format!(
            "unexpected ablation rows {:?}",
            rows.iter().map(|r| &r[0]).collect::<Vec<_>>()
        )
    })?;
    let mut rewards = Vec::new();
    for run in ["run-0", "run-1"] {
        let text = fs::read_to_string(out.join(run).join(RESOLVED_CONFIG)).map_err(|e| e.to_string())?;
        let cfg = RunConfig::from_text(&text).map_err(|e| e.to_string())?;
        let mut reward = cfg.reward().map_err(|e| e.to_string())?;
        let scores = array![0.3, 2.1, -0.4, 0.7, -1.2];
        let e2e = reward_end2end(scores.view(), Some(1), &reward).map_err(|e| e.to_string())?;
        reward.clip_negative = false;
        let thr = reward_threshold(scores.view(), Some(3), 0.5, &reward).map_err(|e| e.to_string())?;
        rewards.push((reward.lambda_positive, e2e, thr));
    }
    let ((l1, e1, t1), (l10, e10, t10)) = (rewards[0], rewards[1]);
    check(l1 == 1.0 && l10 == 10.0, || format!("resolved lambdas {l1} and {l10}"))?;
    check(e10 == 10.0 * e1, || format!("end-to-end reward {e10} is not 10 x {e1}"))?;
    check(t10 == 10.0 * t1, || format!("threshold reward {t10} is not 10 x {t1}"))?;
    Ok(format!(
        "rows lambda=1 and lambda=10; end-to-end {e1:.6} -> {e10:.6}, threshold {t1:.6} -> {t10:.6}"
    ))
}

fn criterion_9() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_reic");
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let corpus = tmp.path().join("corpus");
    fixture_corpus(&corpus)?;
    let train_into = |name: &str| -> Result<std::path::PathBuf, String> {
        let out = tmp.path().join(name);
        let mut args = vec![
            "train",
            "--corpus",
            corpus.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--set",
            "seed=5",
        ];
        args.extend_from_slice(FIXTURE_MODEL);
        let status = Command::new(bin)
            .args(&args)
            .env("RUST_LOG", "warn")
            .status()
            .map_err(|e| e.to_string())?;
        check(status.success(), || format!("train exited with {status}"))?;
        Ok(out)
    };
    let (a, b) = (train_into("a")?, train_into("b")?);
    for f in [HISTORY_CSV, CHECKPOINT] {
        let (x, y) = (
            fs::read(a.join(f)).map_err(|e| e.to_string())?,
            fs::read(b.join(f)).map_err(|e| e.to_string())?,
        );
        check(x == y, || format!("{f} differs between runs"))?;
    }
    Ok("two separate processes wrote byte-identical history.csv and checkpoint.bin".into())
}

fn guarded(f: impl FnOnce() -> Outcome) -> Outcome {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(r) => r,
        Err(panic) => Err(panic
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into())),
    }
}

fn main() -> ExitCode {
    let filter: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wanted = |n: usize| filter.is_empty() || filter.contains(&n);
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let mut record = |n: usize, name: &'static str, f: &dyn Fn() -> Outcome| {
        if wanted(n) {
            let outcome = guarded(f);
            let status = if outcome.is_ok() { "PASS" } else { "FAIL" };
            let detail = match &outcome {
                Ok(s) | Err(s) => s,
            };
            println!("criterion {n} [{status}] {name}: {detail}");
            results.push((n, name, outcome));
        }
    };

    record(1, "gradient fidelity", &criterion_1);
    record(2, "REINFORCE oracle", &criterion_2);
    record(3, "threshold loss", &criterion_3);

    if wanted(4) || wanted(5) || wanted(8) {
        let start = Instant::now();
        let runs = catch_unwind(|| (0..3).map(run_experiment).collect::<Result<Vec<_>, _>>())
            .unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        match runs {
            Ok(runs) => {
                record(4, "planted-evidence experiment", &|| criterion_4(&runs, elapsed));
                record(5, "reward trend", &|| criterion_5(&runs));
                record(8, "bridge-mention analysis", &|| criterion_8(&runs));
            }
            Err(e) => {
                for (n, name) in [
                    (4, "planted-evidence experiment"),
                    (5, "reward trend"),
                    (8, "bridge-mention analysis"),
                ] {
                    record(n, name, &|| Err(format!("experiment failed: {e}")));
                }
            }
        }
    }

    record(6, "one-step ablation", &criterion_6);
    record(7, "lambda ablation", &criterion_7);
    record(9, "determinism", &criterion_9);

    let failed = results.iter().filter(|r| r.2.is_err()).count();
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
