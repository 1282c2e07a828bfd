//! Full-batch Adam fitting, analytic gradients and held-out evaluation.

mod adam;
mod objective;

use std::collections::HashMap;

use log::debug;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use adam::Adam;
pub(crate) use objective::{FactorObjective, Masked, Objective};

use crate::dataset::{CellKey, ResponseTable, Sentence};
use crate::error::{Error, Result};
use crate::factorization::{FactorParams, Hyperparams};
use crate::math::{logit, neg_entropy, sigmoid};
use crate::model::{AlphaEntry, FittedModel};
use crate::response::{
    check_compatible, kl_from_logit, AcceptabilityCells, ChannelEffects, EffectsParams, LossOptions,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub max_iterations: usize,
    /// Converged once the relative loss change over `check_interval`
    /// iterations stays below this for `patience` consecutive checks.
    pub convergence_tol: f64,
    pub check_interval: usize,
    pub patience: usize,
    /// Times the learning rate is multiplied by `lr_decay_factor` when the
    /// convergence test passes, before the fit is declared converged.
    pub lr_decays: usize,
    pub lr_decay_factor: f64,
    pub seed: u64,
    /// Standard deviation of the initial factor logits.
    pub init_scale: f64,
    /// Independent initializations; the lowest final loss wins.
    pub restarts: usize,
    pub loss: LossOptions,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            learning_rate: 0.01,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            max_iterations: 30_000,
            convergence_tol: 1e-6,
            check_interval: 100,
            patience: 1,
            lr_decays: 0,
            lr_decay_factor: 0.1,
            seed: 0,
            init_scale: 0.5,
            restarts: 3,
            loss: LossOptions::default(),
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.into()));
        if !(self.learning_rate > 0.0) {
            return fail("learning_rate must be positive");
        }
        for b in [self.adam_beta1, self.adam_beta2] {
            if !(b > 0.0 && b < 1.0) {
                return fail("Adam betas must lie in (0, 1)");
            }
        }
        if !(self.adam_epsilon > 0.0) {
            return fail("adam_epsilon must be positive");
        }
        if self.patience < 1 || self.check_interval < 1 {
            return fail("patience and check_interval must be at least 1");
        }
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor < 1.0) {
            return fail("lr_decay_factor must lie in (0, 1)");
        }
        if self.restarts < 1 {
            return fail("restarts must be at least 1");
        }
        if !(self.init_scale >= 0.0) {
            return fail("init_scale must be nonnegative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub model: FittedModel,
    /// Objective before each factor-block step, then at the returned
    /// parameters.
    pub trajectory: Vec<f64>,
    pub iterations_run: usize,
    pub converged: bool,
}

/// Gradient of the objective, shaped like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub factors: FactorParams,
    pub effects: EffectsParams,
    pub alpha: AcceptabilityCells,
}

pub(crate) struct AdamOutcome {
    pub x: Vec<f64>,
    pub trajectory: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub final_breakdown: crate::response::LossBreakdown,
}

pub(crate) fn run_adam<O: Objective>(
    obj: &mut O,
    mut x: Vec<f64>,
    config: &FitConfig,
) -> Result<AdamOutcome> {
    let mut grad = vec![0.0; obj.dim()];
    let mut adam = Adam::new(obj.dim(), config);
    let mut trajectory = Vec::new();
    let mut calm = 0;
    let mut decays_left = config.lr_decays;
    let mut converged = false;
    let mut iteration = 0;
    let final_breakdown = loop {
        let b = obj.eval(&x, Some(&mut grad));
        let loss = b.total();
        if !loss.is_finite() {
            return Err(Error::Diverged {
                iteration,
                trajectory,
            });
        }
        trajectory.push(loss);
        if let Some(n) = grad.iter().position(|g| !g.is_finite()) {
            debug!("non-finite gradient in {}", obj.param_name(n));
            return Err(Error::Diverged {
                iteration,
                trajectory,
            });
        }
        if iteration == config.max_iterations {
            break b;
        }
        let window = config.check_interval;
        if iteration >= window && iteration % window == 0 {
            let before = trajectory[iteration - window];
            let rel = (before - loss).abs() / loss.abs().max(f64::MIN_POSITIVE);
            if rel < config.convergence_tol {
                calm += 1;
                if calm >= config.patience {
                    if decays_left == 0 {
                        converged = true;
                        break b;
                    }
                    decays_left -= 1;
                    calm = 0;
                    adam.decay(config.lr_decay_factor);
                    debug!(
                        "learning rate now {} at iteration {iteration}",
                        adam.learning_rate()
                    );
                }
            } else {
                calm = 0;
            }
        }
        adam.step(&mut x, &grad);
        iteration += 1;
    };
    Ok(AdamOutcome {
        x,
        trajectory,
        iterations: iteration,
        converged,
        final_breakdown,
    })
}

pub(crate) fn restart_rng(seed: u64, restart: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart as u64);
    rng
}

/// Analytic gradient of the objective (default [`LossOptions`]) with respect
/// to every free parameter. Frozen boundary factors have no entries.
pub fn gradient(
    table: &ResponseTable,
    factors: &FactorParams,
    effects: &EffectsParams,
    cells: &AcceptabilityCells,
) -> Result<Gradient> {
    gradient_with(table, factors, effects, cells, &LossOptions::default())
}

pub fn gradient_with(
    table: &ResponseTable,
    factors: &FactorParams,
    effects: &EffectsParams,
    cells: &AcceptabilityCells,
    options: &LossOptions,
) -> Result<Gradient> {
    check_compatible(table, factors, effects)?;
    let layout = table.cell_layout();
    let alpha = cells.aligned(table, &layout)?;
    for (n, x) in FactorObjective::pack(factors, effects, &alpha)
        .iter()
        .enumerate()
    {
        if !x.is_finite() {
            let obj = FactorObjective::new(table, layout, factors, *options);
            return Err(Error::Numerical(obj.param_name(n)));
        }
    }
    let mut obj = FactorObjective::new(table, layout.clone(), factors, *options);
    let x = FactorObjective::pack(factors, effects, &alpha);
    let mut g = vec![0.0; obj.dim()];
    obj.eval(&x, Some(&mut g));
    if let Some(n) = g.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numerical(obj.param_name(n)));
    }
    let (gf, ge, ga) = obj.unpack(&g);
    Ok(Gradient {
        factors: gf,
        effects: ge,
        alpha: AcceptabilityCells::new(layout.cells.into_iter().zip(ga).collect())?,
    })
}

/// Fits the factorization to `table` with Adam, keeping the best of
/// `config.restarts` random initializations.
///
/// The acceptability block (`α` and the acceptability effects) receives no
/// gradient from the neg-raising term, so it does not depend on the factors.
/// It is fitted once, first, and then held fixed while each restart fits the
/// factors and the neg-raising effects. This reaches the same stationary
/// point as updating both blocks together, and every restart and every
/// `|I|, |T|` shares the same `α`.
pub fn fit(table: &ResponseTable, hyper: Hyperparams, config: &FitConfig) -> Result<FitResult> {
    if table.is_empty() {
        return Err(Error::Empty);
    }
    hyper.validate()?;
    config.validate()?;
    let layout = table.cell_layout();
    let n_verbs = table.verbs().len();
    let n_frames = table.frames().len();
    let n_participants = table.participants().len();
    let alpha0 = AcceptabilityCells::from_cell_means(table, &layout);

    let template = FactorParams::zeros(n_verbs, n_frames, hyper);
    let n_factors = template.len();
    let n_effects = EffectsParams::zeros(n_participants).len();
    let factor_block: Vec<usize> = (0..n_factors + n_effects / 2).collect();
    let acceptability_block: Vec<usize> =
        (n_factors + n_effects / 2..n_factors + n_effects + layout.cells.len()).collect();

    let mut base = FactorObjective::pack(
        &template,
        &EffectsParams::zeros(n_participants),
        alpha0.alpha(),
    );
    let mut acceptability_converged = true;
    if config.loss.acceptability_channel {
        let mut obj = FactorObjective::new(table, layout.clone(), &template, config.loss);
        let mut masked = Masked::new(&mut obj, base.clone(), acceptability_block);
        let x0 = masked.restrict(&base);
        let outcome = run_adam(&mut masked, x0, config)?;
        debug!(
            "acceptability block: {} after {} iterations",
            outcome.final_breakdown.acceptability, outcome.iterations
        );
        acceptability_converged = outcome.converged;
        base = masked.expand(&outcome.x);
    }

    let outcomes: Vec<Result<(AdamOutcome, Vec<f64>)>> = (0..config.restarts)
        .into_par_iter()
        .map(|restart| {
            let mut rng = restart_rng(config.seed, restart);
            let factors =
                FactorParams::random(n_verbs, n_frames, hyper, config.init_scale, &mut rng);
            let mut start = base.clone();
            for (dst, src) in start.iter_mut().zip(factors.logits()) {
                *dst = *src;
            }
            let mut obj = FactorObjective::new(table, layout.clone(), &template, config.loss);
            let mut masked = Masked::new(&mut obj, start.clone(), factor_block.clone());
            let x0 = masked.restrict(&start);
            let outcome = run_adam(&mut masked, x0, config)?;
            debug!(
                "fit {hyper} restart {restart}: loss {} after {} iterations",
                outcome.final_breakdown.total(),
                outcome.iterations
            );
            let full = masked.expand(&outcome.x);
            Ok((outcome, full))
        })
        .collect();

    let mut best: Option<(AdamOutcome, Vec<f64>)> = None;
    let mut first_error = None;
    for o in outcomes {
        match o {
            Ok(o) => {
                let better = best.as_ref().map_or(true, |b| {
                    o.0.final_breakdown.total() < b.0.final_breakdown.total()
                });
                if better {
                    best = Some(o);
                }
            }
            Err(e) => {
                first_error.get_or_insert(e);
            }
        }
    }
    let Some((outcome, x)) = best else {
        return Err(first_error.expect("at least one restart"));
    };

    let obj = FactorObjective::new(table, layout, &template, config.loss);
    let (factors, effects, alpha) = obj.unpack(&x);
    let acceptability = obj
        .layout()
        .cells
        .iter()
        .zip(alpha)
        .map(|(c, a)| {
            let s = table.sentence_of(c);
            AlphaEntry {
                verb: s.verb,
                frame: s.frame,
                subject: s.subject,
                tense: s.tense,
                alpha: a,
            }
        })
        .collect();
    let converged = outcome.converged && acceptability_converged;
    let model = FittedModel {
        hyperparams: hyper,
        seed: config.seed,
        loss: outcome.final_breakdown.total(),
        data_loss: outcome.final_breakdown.negraising,
        iterations: outcome.iterations,
        converged,
        config: config.clone(),
        verbs: table.verbs().items().to_vec(),
        frames: table.frames().items().to_vec(),
        participants: table.participants().items().to_vec(),
        factors,
        effects,
        acceptability,
    };
    Ok(FitResult {
        model,
        trajectory: outcome.trajectory,
        iterations_run: outcome.iterations,
        converged,
    })
}

/// Weighted neg-raising KL of `model` on `table`, without prior terms.
pub fn evaluate(model: &FittedModel, table: &ResponseTable) -> Result<f64> {
    Ok(evaluate_sentences(model, table)?
        .iter()
        .map(|(_, l)| l)
        .sum())
}

/// Weighted neg-raising KL per sentence of `table`, in sorted sentence order.
///
/// Participants unknown to the model get zero random effects. Sentences the
/// model has no `α` for get one fitted to their acceptability responses under
/// the model's acceptability effects.
pub fn evaluate_sentences(
    model: &FittedModel,
    table: &ResponseTable,
) -> Result<Vec<(Sentence, f64)>> {
    model.validate()?;
    let verbs = model.verb_index()?;
    let frames = model.frame_index()?;
    let participants = model.participant_index()?;
    let alphas = model.alpha_map();
    let probs = model.factors.probabilities();
    let weight = model.config.loss.weight_by_acceptability;

    let layout = table.cell_layout();
    let mut sentences = Vec::with_capacity(layout.cells.len());
    let mut nu = Vec::with_capacity(layout.cells.len());
    for cell in &layout.cells {
        let s = table.sentence_of(cell);
        let verb = verbs
            .encode_str(&s.verb)
            .ok_or_else(|| Error::Coverage(format!("verb `{}`", s.verb)))?;
        let frame = frames
            .encode(&s.frame)
            .ok_or_else(|| Error::Coverage(format!("frame `{}`", s.frame)))?;
        let key = CellKey {
            verb,
            frame,
            subject: s.subject,
            tense: s.tense,
        };
        nu.push(probs.nu(&key).0);
        sentences.push(s);
    }
    let participant: Vec<Option<usize>> = table
        .records()
        .iter()
        .map(|r| participants.encode_str(&r.participant))
        .collect();

    let mut missing: HashMap<usize, Vec<(f64, Option<usize>)>> = HashMap::new();
    let mut alpha: Vec<Option<f64>> = sentences.iter().map(|s| alphas.get(s).copied()).collect();
    for (n, r) in table.records().iter().enumerate() {
        let c = layout.record_cell[n];
        if alpha[c].is_none() {
            missing
                .entry(c)
                .or_default()
                .push((r.acceptability, participant[n]));
        }
    }
    for (c, responses) in missing {
        alpha[c] = Some(fit_cell_alpha(&responses, &model.effects.acceptability));
    }

    let mut losses = vec![0.0; sentences.len()];
    for (n, r) in table.records().iter().enumerate() {
        let c = layout.record_cell[n];
        let w = if weight {
            sigmoid(alpha[c].expect("filled above"))
        } else {
            1.0
        };
        let z = model.effects.negraising.linear(nu[c], participant[n]);
        losses[c] += w * kl_at_logit(r.negraising, z);
    }
    Ok(sentences.into_iter().zip(losses).collect())
}

fn kl_at_logit(r: f64, z: f64) -> f64 {
    kl_from_logit(r, neg_entropy(r), z).0
}

/// Minimizes `Σ D(a ‖ logit⁻¹(m_l α + β₀ + β_l))` over `α` by safeguarded
/// Newton steps. The objective is convex in `α`.
fn fit_cell_alpha(responses: &[(f64, Option<usize>)], effects: &ChannelEffects) -> f64 {
    let mean = responses.iter().map(|r| r.0).sum::<f64>() / responses.len() as f64;
    let objective = |alpha: f64| -> (f64, f64, f64) {
        let (mut f, mut g, mut h) = (0.0, 0.0, 0.0);
        for &(a, l) in responses {
            let m = effects.multiplier(l);
            let z = effects.linear(alpha, l);
            let p = sigmoid(z);
            f += kl_at_logit(a, z);
            g += (p - a) * m;
            h += p * (1.0 - p) * m * m;
        }
        (f, g, h)
    };
    let mut alpha = logit(mean);
    let (mut f, mut g, mut h) = objective(alpha);
    for _ in 0..100 {
        if g.abs() < 1e-12 {
            break;
        }
        let mut step = if h > 1e-12 { g / h } else { g.signum() };
        let mut accepted = false;
        for _ in 0..50 {
            let candidate = alpha - step;
            let (fc, gc, hc) = objective(candidate);
            if fc <= f {
                alpha = candidate;
                (f, g, h) = (fc, gc, hc);
                accepted = true;
                break;
            }
            step /= 2.0;
        }
        if !accepted {
            break;
        }
    }
    alpha
}
