//! Synthetic judgment data drawn from planted factors.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{CellKey, Frame, ResponseRecord, ResponseTable, Subject, Tense};
use crate::error::{Error, Result};
use crate::factorization::{FactorParams, Hyperparams, CONTEXTS};
use crate::math::{logit, sigmoid};
use crate::model::{AlphaEntry, FittedModel};
use crate::optim::FitConfig;
use crate::response::{ChannelEffects, EffectsParams, VariancePrior};

/// Planted factor probabilities. Rows follow the stored layout of
/// [`FactorParams`]: `lambda` is `|V|×|T|`, `pi` is `|T|×|F|`, `psi` is
/// `|V|×|I|`, `phi` is `|I|×4`, `omega` is `|T|×4`. A side with no properties
/// has empty matrices. Boolean factors are the special case of 0/1 entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedFactors {
    pub n_lexical: usize,
    pub n_structural: usize,
    pub lambda: Vec<Vec<f64>>,
    pub pi: Vec<Vec<f64>>,
    pub psi: Vec<Vec<f64>>,
    pub phi: Vec<Vec<f64>>,
    pub omega: Vec<Vec<f64>>,
}

/// Fixed effects of one channel and the spread of its per-participant
/// random effects.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantedEffects {
    pub shift: f64,
    pub log_scale: f64,
    pub shift_sd: f64,
    pub log_scale_sd: f64,
}

impl Default for PlantedEffects {
    fn default() -> Self {
        PlantedEffects {
            shift: 0.0,
            log_scale: 0.0,
            shift_sd: 0.0,
            log_scale_sd: 0.0,
        }
    }
}

/// Per-cell `α ~ Normal(alpha_mean, alpha_sd²)` and the acceptability link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantedAcceptability {
    pub alpha_mean: f64,
    pub alpha_sd: f64,
    pub effects: PlantedEffects,
}

impl Default for PlantedAcceptability {
    fn default() -> Self {
        PlantedAcceptability {
            alpha_mean: 1.5,
            alpha_sd: 1.0,
            effects: PlantedEffects::default(),
        }
    }
}

/// Effects and `α` values actually drawn by [`generate_synthetic`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizedEffects {
    pub participants: Vec<String>,
    pub effects: EffectsParams,
    pub acceptability: Vec<AlphaEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedSpec {
    pub n_verbs: usize,
    /// At most six; the first `n_frames` of [`Frame::ALL`] are used.
    pub n_frames: usize,
    pub n_participants: usize,
    /// Raters drawn per sentence without replacement; every participant
    /// rates every sentence when absent.
    #[serde(default)]
    pub ratings_per_cell: Option<usize>,
    pub true_factors: PlantedFactors,
    #[serde(default)]
    pub effects: PlantedEffects,
    #[serde(default)]
    pub acceptability: PlantedAcceptability,
    /// Standard deviation of Gaussian noise added to each response before
    /// truncation to `[0, 1]`.
    pub noise_scale: f64,
    pub seed: u64,
    /// Filled in by [`generate_synthetic`]; ignored on input.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub realized: Option<RealizedEffects>,
}

impl PlantedFactors {
    /// Draws every probability uniformly from `[low, high]`.
    pub fn uniform<R: Rng + ?Sized>(
        n_verbs: usize,
        n_frames: usize,
        hyper: Hyperparams,
        low: f64,
        high: f64,
        rng: &mut R,
    ) -> Self {
        Self::build(n_verbs, n_frames, hyper, || rng.random_range(low..=high))
    }

    /// Boolean factors: every entry is 1 with probability `rate`, else 0.
    pub fn bernoulli<R: Rng + ?Sized>(
        n_verbs: usize,
        n_frames: usize,
        hyper: Hyperparams,
        rate: f64,
        rng: &mut R,
    ) -> Self {
        Self::build(n_verbs, n_frames, hyper, || {
            if rng.random::<f64>() < rate {
                1.0
            } else {
                0.0
            }
        })
    }

    fn build(
        n_verbs: usize,
        n_frames: usize,
        hyper: Hyperparams,
        mut draw: impl FnMut() -> f64,
    ) -> Self {
        let mut m = |rows: usize, cols: usize| -> Vec<Vec<f64>> {
            (0..rows)
                .map(|_| (0..cols).map(|_| draw()).collect())
                .collect()
        };
        let (i, t) = (hyper.n_lexical, hyper.n_structural);
        let lambda = if t > 0 { m(n_verbs, t) } else { Vec::new() };
        let psi = if i > 0 { m(n_verbs, i) } else { Vec::new() };
        PlantedFactors {
            n_lexical: i,
            n_structural: t,
            lambda,
            pi: m(t, n_frames),
            psi,
            phi: m(i, CONTEXTS),
            omega: m(t, CONTEXTS),
        }
    }

    /// Every probability set to `p`.
    pub fn constant(n_verbs: usize, n_frames: usize, hyper: Hyperparams, p: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        Self::uniform(n_verbs, n_frames, hyper, p, p, &mut rng)
    }

    pub fn hyperparams(&self) -> Result<Hyperparams> {
        Hyperparams::new(self.n_lexical, self.n_structural)
    }

    /// Factor logits with probabilities clamped into `[1e-12, 1 - 1e-12]`.
    pub fn to_params(&self, n_verbs: usize, n_frames: usize) -> Result<FactorParams> {
        let hyper = self.hyperparams()?;
        let (i, t) = (self.n_lexical, self.n_structural);
        let flat = |name: &str, m: &[Vec<f64>], rows: usize, cols: usize| -> Result<Vec<f64>> {
            let want_rows = if cols == 0 { 0 } else { rows };
            if m.len() != want_rows || m.iter().any(|r| r.len() != cols) {
                return Err(Error::Dimension(format!(
                    "{name} must be {want_rows}×{cols}"
                )));
            }
            m.iter()
                .flatten()
                .map(|&p| {
                    if (0.0..=1.0).contains(&p) {
                        Ok(logit(p.clamp(1e-12, 1.0 - 1e-12)))
                    } else {
                        Err(Error::Domain(format!("{name} probability {p}")))
                    }
                })
                .collect()
        };
        FactorParams::from_logits(
            n_verbs,
            n_frames,
            hyper,
            flat("lambda", &self.lambda, n_verbs, t)?,
            flat("pi", &self.pi, t, n_frames)?,
            flat("psi", &self.psi, n_verbs, i)?,
            flat("phi", &self.phi, i, CONTEXTS)?,
            flat("omega", &self.omega, t, CONTEXTS)?,
        )
    }
}

impl PlantedSpec {
    /// A spec with uniform random factor probabilities in `[0.05, 0.95]`
    /// (drawn from `seed`), all participants rating every sentence and no
    /// random effects.
    pub fn random(
        n_verbs: usize,
        n_frames: usize,
        n_participants: usize,
        hyper: Hyperparams,
        noise_scale: f64,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        PlantedSpec {
            n_verbs,
            n_frames,
            n_participants,
            ratings_per_cell: None,
            true_factors: PlantedFactors::uniform(n_verbs, n_frames, hyper, 0.05, 0.95, &mut rng),
            effects: PlantedEffects::default(),
            acceptability: PlantedAcceptability::default(),
            noise_scale,
            seed,
            realized: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_verbs == 0 || self.n_frames == 0 || self.n_participants == 0 {
            return Err(Error::Dimension("dimensions must be positive".into()));
        }
        if self.n_frames > Frame::ALL.len() {
            return Err(Error::Dimension(format!(
                "at most {} frames, got {}",
                Frame::ALL.len(),
                self.n_frames
            )));
        }
        if let Some(k) = self.ratings_per_cell {
            if k == 0 || k > self.n_participants {
                return Err(Error::Dimension(format!(
                    "ratings_per_cell {k} outside 1..={}",
                    self.n_participants
                )));
            }
        }
        let sds = [
            self.noise_scale,
            self.effects.shift_sd,
            self.effects.log_scale_sd,
            self.acceptability.alpha_sd,
            self.acceptability.effects.shift_sd,
            self.acceptability.effects.log_scale_sd,
        ];
        if sds.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return Err(Error::Domain(
                "noise and spreads must be finite and ≥ 0".into(),
            ));
        }
        self.true_factors.to_params(self.n_verbs, self.n_frames)?;
        Ok(())
    }

    pub fn verb_label(v: usize) -> String {
        format!("v{v:03}")
    }

    pub fn participant_label(l: usize) -> String {
        format!("p{l:03}")
    }

    /// The planted parameters as a model over the generated table, with each
    /// random-effect log-variance at its optimum given the realized effects.
    /// Requires [`PlantedSpec::realized`]; `loss` and `data_loss` are left at 0.
    pub fn planted_model(&self) -> Result<FittedModel> {
        let realized = self
            .realized
            .as_ref()
            .ok_or_else(|| Error::Config("spec has no realized effects".into()))?;
        let factors = self.true_factors.to_params(self.n_verbs, self.n_frames)?;
        let config = FitConfig::default();
        let mut effects = realized.effects.clone();
        if let Some(prior) = config.loss.variance_prior {
            for ch in [&mut effects.negraising, &mut effects.acceptability] {
                ch.shift_log_variance = best_log_variance(&ch.participant_shift, prior);
                ch.scale_log_variance = best_log_variance(&ch.participant_log_scale, prior);
            }
        }
        let model = FittedModel {
            hyperparams: factors.hyper(),
            seed: self.seed,
            loss: 0.0,
            data_loss: 0.0,
            iterations: 0,
            converged: false,
            config,
            verbs: (0..self.n_verbs).map(Self::verb_label).collect(),
            frames: Frame::ALL[..self.n_frames].to_vec(),
            participants: realized.participants.clone(),
            factors,
            effects,
            acceptability: realized.acceptability.clone(),
        };
        model.validate()?;
        Ok(model)
    }
}

/// Minimizer over `s` of `Σx²/(2e^s) + (L/2)s + (a+1)s + b e^(-s)`.
fn best_log_variance(x: &[f64], prior: VariancePrior) -> f64 {
    let sq: f64 = x.iter().map(|v| v * v).sum();
    ((0.5 * sq + prior.scale) / (0.5 * x.len() as f64 + prior.shape + 1.0)).ln()
}

fn draw_channel<R: Rng + ?Sized>(p: &PlantedEffects, n: usize, rng: &mut R) -> ChannelEffects {
    let mut ch = ChannelEffects::zeros(n);
    ch.shift = p.shift;
    ch.log_scale = p.log_scale;
    let shift = Normal::new(0.0, p.shift_sd).expect("validated spread");
    let scale = Normal::new(0.0, p.log_scale_sd).expect("validated spread");
    for l in 0..n {
        ch.participant_shift[l] = shift.sample(rng);
        ch.participant_log_scale[l] = scale.sample(rng);
    }
    ch
}

/// Draws a response table from `spec`. Deterministic in `spec`, including
/// its seed. The returned spec carries the realized participant effects and
/// per-sentence `α`.
pub fn generate_synthetic(spec: &PlantedSpec) -> Result<(ResponseTable, PlantedSpec)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let probs = spec
        .true_factors
        .to_params(spec.n_verbs, spec.n_frames)?
        .probabilities();
    let participants: Vec<String> = (0..spec.n_participants)
        .map(PlantedSpec::participant_label)
        .collect();
    let effects = EffectsParams {
        negraising: draw_channel(&spec.effects, spec.n_participants, &mut rng),
        acceptability: draw_channel(&spec.acceptability.effects, spec.n_participants, &mut rng),
    };
    let alpha_dist = Normal::new(spec.acceptability.alpha_mean, spec.acceptability.alpha_sd)
        .map_err(|e| Error::Domain(e.to_string()))?;
    let noise = Normal::new(0.0, spec.noise_scale).expect("validated noise");

    let mut records = Vec::new();
    let mut alphas = Vec::new();
    for v in 0..spec.n_verbs {
        let verb = PlantedSpec::verb_label(v);
        for (f, &frame) in Frame::ALL[..spec.n_frames].iter().enumerate() {
            for subject in Subject::ALL {
                for tense in Tense::ALL {
                    let cell = CellKey {
                        verb: v,
                        frame: f,
                        subject,
                        tense,
                    };
                    let nu = probs.nu(&cell).0;
                    let alpha = alpha_dist.sample(&mut rng);
                    alphas.push(AlphaEntry {
                        verb: verb.clone(),
                        frame,
                        subject,
                        tense,
                        alpha,
                    });
                    let raters: Vec<usize> = match spec.ratings_per_cell {
                        Some(k) => {
                            let mut s = sample(&mut rng, spec.n_participants, k).into_vec();
                            s.sort_unstable();
                            s
                        }
                        None => (0..spec.n_participants).collect(),
                    };
                    for l in raters {
                        let r = sigmoid(effects.negraising.linear(nu, Some(l)));
                        let a = sigmoid(effects.acceptability.linear(alpha, Some(l)));
                        let r = (r + noise.sample(&mut rng)).clamp(0.0, 1.0);
                        let a = (a + noise.sample(&mut rng)).clamp(0.0, 1.0);
                        records.push(ResponseRecord {
                            verb: verb.clone(),
                            frame,
                            subject,
                            tense,
                            participant: participants[l].clone(),
                            negraising: r,
                            acceptability: a,
                        });
                    }
                }
            }
        }
    }
    let table = ResponseTable::from_records(records)?;
    let mut out = spec.clone();
    out.realized = Some(RealizedEffects {
        participants: table.participants().items().to_vec(),
        effects: reindex(&effects, &participants, table.participants().items()),
        acceptability: alphas,
    });
    Ok((table, out))
}

/// Effects reordered from generation order to the table's participant index
/// (participants who never rated anything are dropped).
fn reindex(effects: &EffectsParams, from: &[String], to: &[String]) -> EffectsParams {
    let pick = |ch: &ChannelEffects| {
        let mut out = ChannelEffects::zeros(to.len());
        out.shift = ch.shift;
        out.log_scale = ch.log_scale;
        for (k, name) in to.iter().enumerate() {
            let l = from
                .iter()
                .position(|x| x == name)
                .expect("known participant");
            out.participant_shift[k] = ch.participant_shift[l];
            out.participant_log_scale[k] = ch.participant_log_scale[l];
        }
        out
    };
    EffectsParams {
        negraising: pick(&effects.negraising),
        acceptability: pick(&effects.acceptability),
    }
}
