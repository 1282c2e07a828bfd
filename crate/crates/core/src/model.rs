//! The serialized fit: factor logits, effects, acceptability cells and the
//! labels that give their axes meaning.
//!
//! JSON stores logits rather than probabilities, with explicit shapes. Floats
//! are written in shortest round-trip form, so `load(save(m)) == m` bit for bit.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{Frame, LabelIndex, Sentence, Subject, Tense};
use crate::error::{Error, Result};
use crate::factorization::{FactorParams, Hyperparams, CONTEXTS};
use crate::optim::FitConfig;
use crate::response::EffectsParams;

/// A fitted `α` for one sentence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaEntry {
    pub verb: String,
    pub frame: Frame,
    pub subject: Subject,
    pub tense: Tense,
    pub alpha: f64,
}

impl AlphaEntry {
    pub fn sentence(&self) -> Sentence {
        Sentence {
            verb: self.verb.clone(),
            frame: self.frame,
            subject: self.subject,
            tense: self.tense,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub hyperparams: Hyperparams,
    pub seed: u64,
    /// Training objective at the returned parameters.
    pub loss: f64,
    /// Weighted neg-raising KL on the training data at the returned parameters.
    pub data_loss: f64,
    pub iterations: usize,
    pub converged: bool,
    pub config: FitConfig,
    pub verbs: Vec<String>,
    pub frames: Vec<Frame>,
    pub participants: Vec<String>,
    pub factors: FactorParams,
    pub effects: EffectsParams,
    pub acceptability: Vec<AlphaEntry>,
}

impl FittedModel {
    /// Checks that every array agrees with the label lists.
    pub fn validate(&self) -> Result<()> {
        let f = &self.factors;
        if f.hyper() != self.hyperparams {
            return Err(Error::Schema(
                "factor shapes disagree with hyperparams".into(),
            ));
        }
        if f.n_verbs() != self.verbs.len() || f.n_frames() != self.frames.len() {
            return Err(Error::Schema(format!(
                "factors cover {}×{} verbs×frames, labels list {}×{}",
                f.n_verbs(),
                f.n_frames(),
                self.verbs.len(),
                self.frames.len()
            )));
        }
        let l = self.participants.len();
        let e = &self.effects;
        for (name, n) in [
            (
                "negraising.participant_shift",
                e.negraising.participant_shift.len(),
            ),
            (
                "negraising.participant_log_scale",
                e.negraising.participant_log_scale.len(),
            ),
            (
                "acceptability.participant_shift",
                e.acceptability.participant_shift.len(),
            ),
            (
                "acceptability.participant_log_scale",
                e.acceptability.participant_log_scale.len(),
            ),
        ] {
            if n != l {
                return Err(Error::Schema(format!(
                    "{name} has {n} entries for {l} participants"
                )));
            }
        }
        Ok(())
    }

    pub fn verb_index(&self) -> Result<LabelIndex<String>> {
        LabelIndex::new(self.verbs.clone())
    }

    pub fn frame_index(&self) -> Result<LabelIndex<Frame>> {
        LabelIndex::new(self.frames.clone())
    }

    pub fn participant_index(&self) -> Result<LabelIndex<String>> {
        LabelIndex::new(self.participants.clone())
    }

    pub fn alpha_map(&self) -> HashMap<Sentence, f64> {
        self.acceptability
            .iter()
            .map(|e| (e.sentence(), e.alpha))
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: FittedModel = serde_json::from_str(text)?;
        model.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[derive(Serialize, Deserialize)]
struct Block {
    shape: [usize; 2],
    logits: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct FactorRepr {
    n_lexical: usize,
    n_structural: usize,
    n_verbs: usize,
    n_frames: usize,
    lambda: Block,
    pi: Block,
    psi: Block,
    phi: Block,
    omega: Block,
}

impl Serialize for FactorParams {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let h = self.hyper();
        let (i, t, v, f) = (h.n_lexical, h.n_structural, self.n_verbs(), self.n_frames());
        let block = |shape: [usize; 2], logits: &[f64]| Block {
            shape,
            logits: logits.to_vec(),
        };
        FactorRepr {
            n_lexical: i,
            n_structural: t,
            n_verbs: v,
            n_frames: f,
            lambda: block([v, t], self.lambda_logits()),
            pi: block([t, f], self.pi_logits()),
            psi: block([v, i], self.psi_logits()),
            phi: block([i, CONTEXTS], self.phi_logits()),
            omega: block([t, CONTEXTS], self.omega_logits()),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for FactorParams {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let r = FactorRepr::deserialize(d)?;
        let hyper = Hyperparams {
            n_lexical: r.n_lexical,
            n_structural: r.n_structural,
        };
        let (i, t, v, f) = (r.n_lexical, r.n_structural, r.n_verbs, r.n_frames);
        for (name, block, shape) in [
            ("lambda", &r.lambda, [v, t]),
            ("pi", &r.pi, [t, f]),
            ("psi", &r.psi, [v, i]),
            ("phi", &r.phi, [i, CONTEXTS]),
            ("omega", &r.omega, [t, CONTEXTS]),
        ] {
            if block.shape != shape {
                return Err(D::Error::custom(format!(
                    "{name} has shape {:?}, expected {shape:?}",
                    block.shape
                )));
            }
        }
        FactorParams::from_logits(
            v,
            f,
            hyper,
            r.lambda.logits,
            r.pi.logits,
            r.psi.logits,
            r.phi.logits,
            r.omega.logits,
        )
        .map_err(D::Error::custom)
    }
}
