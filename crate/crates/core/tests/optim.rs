mod common;

use common::max_relative_error;
use negfactor::dataset::{generate_synthetic, PlantedEffects, PlantedSpec};
use negfactor::factorization::{FactorParams, Hyperparams};
use negfactor::optim::{evaluate, fit, FitConfig};
use negfactor::response::{total_loss, AcceptabilityCells, EffectsParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn gradient_matches_central_differences() {
    for seed in 0..60 {
        let err = max_relative_error(seed, 1e-5);
        assert!(err < 1e-4, "instance {seed}: relative error {err:e}");
    }
}

#[test]
fn fit_on_noise_free_planted_data_reaches_planted_objective() {
    let spec = PlantedSpec::random(12, 3, 5, Hyperparams::new(1, 1).unwrap(), 0.0, 31);
    let (table, spec) = generate_synthetic(&spec).unwrap();
    let planted = spec.planted_model().unwrap();
    let layout = table.cell_layout();
    let alpha = planted.alpha_map();
    let cells = AcceptabilityCells::new(
        layout
            .cells
            .iter()
            .map(|c| (*c, alpha[&table.sentence_of(c)]))
            .collect(),
    )
    .unwrap();
    let planted_objective = total_loss(&table, &planted.factors, &planted.effects, &cells).unwrap();

    let config = FitConfig {
        seed: 4,
        ..FitConfig::default()
    };
    let result = fit(&table, Hyperparams::new(1, 1).unwrap(), &config).unwrap();
    let fitted = result.model.loss;
    assert!(
        fitted <= planted_objective + 0.05 * planted_objective.abs(),
        "fitted {fitted} vs planted {planted_objective}"
    );
}

#[test]
fn planted_model_beats_random_initializations() {
    let mut spec = PlantedSpec::random(10, 4, 6, Hyperparams::new(1, 1).unwrap(), 0.0, 5);
    spec.effects = PlantedEffects {
        shift_sd: 0.3,
        log_scale_sd: 0.1,
        ..PlantedEffects::default()
    };
    let (table, spec) = generate_synthetic(&spec).unwrap();
    let planted = spec.planted_model().unwrap();
    let planted_loss = evaluate(&planted, &table).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..20 {
        let mut random = planted.clone();
        random.factors = FactorParams::random(10, 4, planted.hyperparams, 0.5, &mut rng);
        random.effects = EffectsParams::zeros(planted.participants.len());
        let loss = evaluate(&random, &table).unwrap();
        assert!(planted_loss <= loss, "{planted_loss} > {loss}");
    }
}

#[test]
fn perfect_prediction_model_has_zero_held_out_loss() {
    let spec = PlantedSpec::random(4, 2, 3, Hyperparams::new(1, 1).unwrap(), 0.0, 8);
    let (table, spec) = generate_synthetic(&spec).unwrap();
    let planted = spec.planted_model().unwrap();
    assert!(evaluate(&planted, &table).unwrap() < 1e-12);
}

#[test]
fn model_json_is_deterministic_across_runs() {
    let spec = PlantedSpec::random(6, 3, 4, Hyperparams::new(1, 1).unwrap(), 0.05, 2);
    let (table, _) = generate_synthetic(&spec).unwrap();
    let config = FitConfig {
        max_iterations: 400,
        ..FitConfig::default()
    };
    let a = fit(&table, Hyperparams::new(2, 1).unwrap(), &config).unwrap();
    let b = fit(&table, Hyperparams::new(2, 1).unwrap(), &config).unwrap();
    assert_eq!(a.model.to_json().unwrap(), b.model.to_json().unwrap());
}
