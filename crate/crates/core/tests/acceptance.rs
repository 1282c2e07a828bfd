//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! `ACCEPTANCE_ONLY=1,5` restricts the run to the listed criteria.
//! Criterion 7 runs only when `NEGFACTOR_DATA` names a CSV of real judgments.

mod common;

use std::collections::{BTreeMap, HashMap};
use std::process::ExitCode;
use std::time::Instant;

use negfactor::dataset::{
    generate_synthetic, load_csv, CellKey, ColumnSchema, Frame, PlantedFactors, PlantedSpec,
    ResponseTable, Subject, Tense,
};
use negfactor::evaluation::{bootstrap_compare, cross_validate, paired_bootstrap, CvConfig};
use negfactor::factorization::{enumeration_oracle, forward_negraising, FactorParams, Hyperparams};
use negfactor::math::{logit, sigmoid, spearman};
use negfactor::optim::{fit, FitConfig};
use negfactor::report::{analyze, rank_verbs};
use negfactor::response::{
    kl_loss, predict_negraising, total_loss_with, EffectsParams, LossOptions,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn random_cell<R: Rng>(rng: &mut R, n_verbs: usize, n_frames: usize) -> CellKey {
    CellKey {
        verb: rng.random_range(0..n_verbs),
        frame: rng.random_range(0..n_frames),
        subject: if rng.random_bool(0.5) {
            Subject::First
        } else {
            Subject::Third
        },
        tense: if rng.random_bool(0.5) {
            Tense::Present
        } else {
            Tense::Past
        },
    }
}

fn forward_matches_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let hyper = loop {
            if let Ok(h) = Hyperparams::new(rng.random_range(0..=3), rng.random_range(0..=3)) {
                break h;
            }
        };
        let (n_verbs, n_frames) = (rng.random_range(1..=4), rng.random_range(1..=6));
        let scale = rng.random_range(0.1..4.0);
        let params = FactorParams::random(n_verbs, n_frames, hyper, scale, &mut rng);
        let cell = random_cell(&mut rng, n_verbs, n_frames);
        let fast = forward_negraising(&params, &cell).unwrap();
        let slow = enumeration_oracle(&params, &cell).unwrap();
        worst = worst.max((fast - slow).abs());
    }
    check(
        worst <= 1e-10,
        format!("1000 instances, max |diff| {worst:.3e}"),
    )
}

fn gradient_matches_finite_differences() -> Outcome {
    let worst = (0..60)
        .map(|seed| common::max_relative_error(seed, 1e-5))
        .fold(0.0, f64::max);
    check(
        worst < 1e-4,
        format!("60 instances, max relative error {worst:.3e}"),
    )
}

fn planted_recovery() -> Outcome {
    let hyper = Hyperparams::new(1, 1).unwrap();
    let mut spec = PlantedSpec::random(50, 6, 20, hyper, 0.05, 2024);
    spec.ratings_per_cell = Some(10);
    // Boolean factors; rate √½ makes the planted ψλ split the verbs about evenly.
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    spec.true_factors = PlantedFactors::bernoulli(50, 6, hyper, 0.5f64.sqrt(), &mut rng);
    let (table, realized) = generate_synthetic(&spec).unwrap();
    let grid: Vec<Hyperparams> = [(1, 0), (0, 1), (1, 1), (2, 2)]
        .into_iter()
        .map(|(i, t)| Hyperparams::new(i, t).unwrap())
        .collect();
    let config = CvConfig::default();
    let report = match cross_validate(&table, &grid, &config) {
        Ok(r) => r,
        Err(e) => return Outcome::Fail(format!("cross-validation failed: {e}")),
    };
    let total = |i, t| {
        report
            .result(Hyperparams::new(i, t).unwrap())
            .ok()
            .and_then(|g| g.total)
    };
    let (Some(both), Some(lex), Some(structural)) = (total(1, 1), total(1, 0), total(0, 1)) else {
        return Outcome::Fail("a grid point has failed folds".into());
    };
    let big = total(2, 2).map_or("failed".into(), |x| format!("{x:.3}"));

    let model = match fit(&table, Hyperparams::new(1, 1).unwrap(), &config.fit) {
        Ok(r) => r.model,
        Err(e) => return Outcome::Fail(format!("full fit failed: {e}")),
    };
    let fitted = analyze(&model).unwrap();
    let fitted: HashMap<&str, f64> = fitted
        .verb_scores
        .iter()
        .map(|s| (s.verb.as_str(), s.product))
        .collect();
    let truth = &realized.true_factors;
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for v in 0..spec.n_verbs {
        x.push(truth.psi[v][0] * truth.lambda[v][0]);
        y.push(fitted[PlantedSpec::verb_label(v).as_str()]);
    }
    let rho = spearman(&x, &y).unwrap_or(f64::NAN);
    check(
        both <= lex && both <= structural && rho >= 0.8,
        format!(
            "held-out (1,1) {both:.3}, (1,0) {lex:.3}, (0,1) {structural:.3}, (2,2) {big}; spearman {rho:.3}"
        ),
    )
}

fn capacity_monotonicity() -> Outcome {
    let spec = PlantedSpec::random(15, 4, 6, Hyperparams::new(1, 1).unwrap(), 0.05, 11);
    let (table, _) = generate_synthetic(&spec).unwrap();
    let config = FitConfig {
        restarts: 5,
        ..FitConfig::default()
    };
    let max = 2;
    let mut loss = BTreeMap::new();
    for i in 0..=max {
        for t in 0..=max {
            if let Ok(h) = Hyperparams::new(i, t) {
                match fit(&table, h, &config) {
                    Ok(r) => loss.insert((i, t), r.model.loss),
                    Err(e) => return Outcome::Fail(format!("fit {h} failed: {e}")),
                };
            }
        }
    }
    let mut violations = Vec::new();
    for (&(i, t), &l) in &loss {
        for next in [(i + 1, t), (i, t + 1)] {
            if let Some(&m) = loss.get(&next) {
                if m > l + 1e-6 {
                    violations.push(format!("({},{}) {m:.6} > ({i},{t}) {l:.6}", next.0, next.1));
                }
            }
        }
    }
    let summary: Vec<String> = loss
        .iter()
        .map(|((i, t), l)| format!("({i},{t}) {l:.4}"))
        .collect();
    if violations.is_empty() {
        Outcome::Pass(summary.join(", "))
    } else {
        Outcome::Fail(violations.join("; "))
    }
}

fn loss_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut problems = Vec::new();
    for _ in 0..1000 {
        let r: f64 = rng.random_range(0.0..=1.0);
        let d = kl_loss(r, r).unwrap();
        if d != 0.0 {
            problems.push(format!("kl({r}, {r}) = {d:e}"));
            break;
        }
    }
    let mut min_kl = f64::INFINITY;
    for _ in 0..10_000 {
        let r: f64 = rng.random_range(0.0..=1.0);
        let r_hat = sigmoid(rng.random_range(-12.0..12.0));
        min_kl = min_kl.min(kl_loss(r, r_hat).unwrap());
    }
    if min_kl < 0.0 {
        problems.push(format!("negative kl {min_kl:e}"));
    }

    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let (table, factors, effects, cells) =
            common::random_instance(&mut ChaCha8Rng::seed_from_u64(seed));
        let options = LossOptions {
            weight_by_acceptability: false,
            acceptability_channel: false,
            ..LossOptions::default()
        };
        let got = total_loss_with(&table, &factors, &effects, &cells, &options)
            .unwrap()
            .total();
        let expected = direct_sum(&table, &factors, &effects, &options);
        worst = worst.max((got - expected).abs());
    }
    if worst > 1e-12 {
        problems.push(format!("total loss off by {worst:e}"));
    }
    let detail = format!("min kl over 10000 pairs {min_kl:.3e}, total loss max |diff| {worst:.3e}");
    if problems.is_empty() {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(problems.join("; "))
    }
}

/// `Σ D(r ‖ r̂)` plus the random-effect priors, record by record.
fn direct_sum(
    table: &ResponseTable,
    factors: &FactorParams,
    effects: &EffectsParams,
    options: &LossOptions,
) -> f64 {
    let mut data = 0.0;
    for (n, rec) in table.records().iter().enumerate() {
        let cell = table.cell_key(n);
        let p = forward_negraising(factors, &cell)
            .unwrap()
            .clamp(1e-7, 1.0 - 1e-7);
        let l = table.record_ids()[n].participant;
        let r_hat = predict_negraising(logit(p), effects, l).unwrap();
        data += kl_loss(rec.negraising, r_hat).unwrap();
    }
    let mut prior = 0.0;
    for ch in [&effects.negraising, &effects.acceptability] {
        for (x, s) in [
            (&ch.participant_shift, ch.shift_log_variance),
            (&ch.participant_log_scale, ch.scale_log_variance),
        ] {
            let var = s.exp();
            prior += x.iter().map(|v| v * v / (2.0 * var)).sum::<f64>() + x.len() as f64 * s / 2.0;
            if let Some(hyper) = options.variance_prior {
                prior += (hyper.shape + 1.0) * s + hyper.scale / var;
            }
        }
    }
    data + prior
}

fn bootstrap_sanity() -> Outcome {
    let spec = PlantedSpec::random(8, 3, 4, Hyperparams::new(1, 1).unwrap(), 0.05, 3);
    let (table, _) = generate_synthetic(&spec).unwrap();
    let config = CvConfig {
        fit: FitConfig {
            max_iterations: 300,
            restarts: 1,
            ..FitConfig::default()
        },
        n_boot: 2000,
        ..CvConfig::default()
    };
    let a = Hyperparams::new(1, 0).unwrap();
    let b = Hyperparams::new(0, 1).unwrap();
    let mut report = cross_validate(&table, &[a, b], &config).unwrap();

    let own = bootstrap_compare(&report, a, a, 2000, 9).unwrap();
    let self_ok = own.ci_lower == 0.0 && own.ci_upper == 0.0 && !own.reliable;

    let d = 0.37;
    let shifted: Vec<Option<f64>> = report
        .result(a)
        .unwrap()
        .sentence_losses
        .iter()
        .map(|x| x.map(|x| x + d))
        .collect();
    let slot = report.grid.iter_mut().find(|g| g.hyperparams == b).unwrap();
    slot.sentence_losses = shifted;
    let constant = bootstrap_compare(&report, b, a, 2000, 9).unwrap();
    let err = (constant.ci_lower - d)
        .abs()
        .max((constant.ci_upper - d).abs());

    let x: Vec<f64> = (0..500).map(|k| (k as f64 * 0.731).sin()).collect();
    let y: Vec<f64> = x.iter().map(|v| v - 1.25).collect();
    let (lo, hi, _) = paired_bootstrap(&x, &y, 10_000, 4).unwrap();
    let raw_err = (lo - 1.25).abs().max((hi - 1.25).abs());

    check(
        self_ok && err <= 1e-9 && raw_err <= 1e-9,
        format!(
            "self CI [{}, {}], constant CI error {err:.3e} (report) {raw_err:.3e} (raw)",
            own.ci_lower, own.ci_upper
        ),
    )
}

fn real_data() -> Outcome {
    let Ok(path) = std::env::var("NEGFACTOR_DATA") else {
        return Outcome::Skip("NEGFACTOR_DATA not set".into());
    };
    let table = match load_csv(&path, &ColumnSchema::default()) {
        Ok(t) => t,
        Err(e) => return Outcome::Fail(format!("cannot load {path}: {e}")),
    };
    let model = match fit(
        &table,
        Hyperparams::new(1, 1).unwrap(),
        &FitConfig::default(),
    ) {
        Ok(r) => r.model,
        Err(e) => return Outcome::Fail(format!("fit failed: {e}")),
    };
    let bundle = analyze(&model).unwrap();
    let mut problems = Vec::new();

    let low: Vec<String> = bundle
        .phi
        .iter()
        .chain(&bundle.omega)
        .filter(|e| e.probability < 0.85)
        .map(|e| {
            format!(
                "{}/{}={:.3}",
                e.subject.label(),
                e.tense.label(),
                e.probability
            )
        })
        .collect();
    if !low.is_empty() {
        problems.push(format!("context entries below 0.85: {}", low.join(" ")));
    }

    let min_frame = bundle
        .pi
        .iter()
        .min_by(|a, b| a.probability.total_cmp(&b.probability))
        .map(|e| e.frame);
    if min_frame != Some(Frame::PassiveThatS) {
        problems.push(format!("minimum pi at {min_frame:?}"));
    }

    let score: HashMap<String, f64> = rank_verbs(&bundle).into_iter().collect();
    for high in ["think", "believe", "want", "seem"] {
        for low in ["know", "notice", "realize", "love"] {
            match (score.get(high), score.get(low)) {
                (Some(h), Some(l)) if h > l => {}
                (Some(h), Some(l)) => problems.push(format!("{high} {h:.3} <= {low} {l:.3}")),
                _ => problems.push(format!("{high} or {low} missing")),
            }
        }
    }
    if problems.is_empty() {
        Outcome::Pass(format!(
            "{} records, all qualitative checks hold",
            table.len()
        ))
    } else {
        Outcome::Fail(problems.join("; "))
    }
}

fn deterministic_json() -> Outcome {
    let spec = PlantedSpec::random(10, 3, 5, Hyperparams::new(1, 1).unwrap(), 0.05, 8);
    let (table, _) = generate_synthetic(&spec).unwrap();
    let config = FitConfig {
        max_iterations: 2000,
        seed: 42,
        ..FitConfig::default()
    };
    let hyper = Hyperparams::new(2, 1).unwrap();
    let run = || {
        fit(&table, hyper, &config)
            .unwrap()
            .model
            .to_json()
            .unwrap()
    };
    let first = run();
    let second = run();
    let single = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(run);
    check(
        first == second && first == single,
        format!(
            "{} bytes, three runs identical: {}",
            first.len(),
            first == second && first == single
        ),
    )
}

fn main() -> ExitCode {
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let criteria: [(usize, &str, fn() -> Outcome); 8] = [
        (
            1,
            "forward model matches enumeration oracle",
            forward_matches_oracle,
        ),
        (
            2,
            "analytic gradient matches finite differences",
            gradient_matches_finite_differences,
        ),
        (3, "planted (1,1) model is recovered", planted_recovery),
        (
            4,
            "training loss is monotone in capacity",
            capacity_monotonicity,
        ),
        (5, "loss identities", loss_identities),
        (6, "bootstrap sanity", bootstrap_sanity),
        (7, "qualitative pattern on real data", real_data),
        (8, "model JSON is deterministic", deterministic_json),
    ];
    let mut failed = false;
    for (n, name, run) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&n)) {
            continue;
        }
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match outcome {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => {
                failed = true;
                ("FAIL", d)
            }
            Outcome::Skip(d) => ("SKIP", d),
        };
        println!("criterion {n}: {tag} {name} ({detail}) [{secs:.1}s]");
    }
    if failed {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
