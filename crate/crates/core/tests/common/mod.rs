//! Helpers shared by the integration test targets.

#![allow(dead_code)]

use negfactor::dataset::{Frame, ResponseRecord, ResponseTable, Subject, Tense};
use negfactor::factorization::{FactorParams, Hyperparams};
use negfactor::optim::gradient;
use negfactor::response::{
    total_loss, total_loss_with, AcceptabilityCells, EffectsParams, LossOptions,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// A random table with at most 5 verbs, 3 frames and 4 participants, with
/// random parameters for it.
pub fn random_instance(
    rng: &mut ChaCha8Rng,
) -> (
    ResponseTable,
    FactorParams,
    EffectsParams,
    AcceptabilityCells,
) {
    let n_verbs = rng.random_range(1..=5);
    let n_frames = rng.random_range(1..=3);
    let n_participants = rng.random_range(1..=4);
    let hyper = loop {
        let h = Hyperparams::new(rng.random_range(0..=2), rng.random_range(0..=2));
        if let Ok(h) = h {
            break h;
        }
    };
    let mut records = Vec::new();
    for v in 0..n_verbs {
        for f in 0..n_frames {
            for subject in Subject::ALL {
                for tense in Tense::ALL {
                    for l in 0..n_participants {
                        if rng.random_bool(0.7) {
                            records.push(ResponseRecord {
                                verb: format!("v{v}"),
                                frame: Frame::ALL[f],
                                subject,
                                tense,
                                participant: format!("p{l}"),
                                negraising: rng.random_range(0.02..0.98),
                                acceptability: rng.random_range(0.02..0.98),
                            });
                        }
                    }
                }
            }
        }
    }
    if records.is_empty() {
        return random_instance(rng);
    }
    let table = ResponseTable::from_records(records).unwrap();
    let factors = FactorParams::random(table.verbs().len(), table.frames().len(), hyper, 1.0, rng);
    let normal = Normal::new(0.0, 0.3).unwrap();
    let mut effects = EffectsParams::zeros(table.participants().len());
    for x in effects.values_mut() {
        *x = normal.sample(rng);
    }
    let layout = table.cell_layout();
    let cells = AcceptabilityCells::new(
        layout
            .cells
            .iter()
            .map(|c| (*c, normal.sample(rng) * 3.0))
            .collect(),
    )
    .unwrap();
    (table, factors, effects, cells)
}

/// Largest relative error between the analytic gradient and central
/// differences with step `h`.
pub fn max_relative_error(seed: u64, h: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (table, factors, effects, cells) = random_instance(&mut rng);
    let g = gradient(&table, &factors, &effects, &cells).unwrap();
    let loss = |f: &FactorParams, e: &EffectsParams, c: &AcceptabilityCells| {
        total_loss(&table, f, e, c).unwrap()
    };
    let mut worst = 0.0f64;
    let mut check = |what: &str, analytic: f64, plus: f64, minus: f64| {
        let numeric = (plus - minus) / (2.0 * h);
        let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
        if err > 1e-4 {
            eprintln!("{what}: analytic {analytic} numeric {numeric}");
        }
        worst = worst.max(err);
    };
    let analytic: Vec<f64> = g.factors.logits().copied().collect();
    for (k, a) in analytic.into_iter().enumerate() {
        let mut p = factors.clone();
        *p.logits_mut().nth(k).unwrap() += h;
        let mut m = factors.clone();
        *m.logits_mut().nth(k).unwrap() -= h;
        check(
            "factor",
            a,
            loss(&p, &effects, &cells),
            loss(&m, &effects, &cells),
        );
    }
    let analytic: Vec<f64> = g.effects.values().copied().collect();
    for (k, a) in analytic.into_iter().enumerate() {
        let mut p = effects.clone();
        *p.values_mut().nth(k).unwrap() += h;
        let mut m = effects.clone();
        *m.values_mut().nth(k).unwrap() -= h;
        check(
            "effect",
            a,
            loss(&factors, &p, &cells),
            loss(&factors, &m, &cells),
        );
    }
    // The neg-raising weight logit⁻¹(α) is held constant, so α only sees the
    // acceptability term.
    let acceptability = |c: &AcceptabilityCells| {
        total_loss_with(&table, &factors, &effects, c, &LossOptions::default())
            .unwrap()
            .acceptability
    };
    for k in 0..cells.len() {
        let mut p = cells.clone();
        p.alpha_mut()[k] += h;
        let mut m = cells.clone();
        m.alpha_mut()[k] -= h;
        check(
            "alpha",
            g.alpha.alpha()[k],
            acceptability(&p),
            acceptability(&m),
        );
    }
    worst
}
