//! Analysis tables from a fitted model: lexical and structural properties by
//! subject and tense, structural properties by frame, and the per-verb
//! `P(ψ)·P(λ)` scores.

use std::fs::{self, File};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{Frame, Subject, Tense};
use crate::error::{Error, Result};
use crate::factorization::Hyperparams;
use crate::math::spearman;
use crate::model::FittedModel;

/// One entry of `phi` (lexical) or `omega` (structural).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextEntry {
    pub property: usize,
    pub subject: Subject,
    pub tense: Tense,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameEntry {
    pub property: usize,
    pub frame: Frame,
    pub probability: f64,
}

/// `P(ψ[v,i]) · P(λ[v,t])`. A side without properties contributes a single
/// slot at probability 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerbScore {
    pub verb: String,
    pub lexical: usize,
    pub structural: usize,
    pub psi: f64,
    pub lambda: f64,
    pub product: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisBundle {
    pub hyperparams: Hyperparams,
    pub phi: Vec<ContextEntry>,
    pub omega: Vec<ContextEntry>,
    pub pi: Vec<FrameEntry>,
    /// Grouped by verb in model order, then lexical, then structural slot.
    pub verb_scores: Vec<VerbScore>,
    /// Rank correlation of `P(ψ)` with `P(λ)` across verbs, for the
    /// one-by-one model only.
    pub psi_lambda_spearman: Option<f64>,
}

const CONTEXTS: [(Subject, Tense); 4] = [
    (Subject::First, Tense::Past),
    (Subject::First, Tense::Present),
    (Subject::Third, Tense::Past),
    (Subject::Third, Tense::Present),
];

/// Probabilities of every factor of `model`, arranged for reporting.
pub fn analyze(model: &FittedModel) -> Result<AnalysisBundle> {
    model.validate()?;
    let hyper = model.hyperparams;
    let p = model.factors.probabilities();
    let context_table = |n: usize, get: &dyn Fn(usize, usize) -> f64| {
        let mut out = Vec::with_capacity(n * 4);
        for property in 0..n {
            for (c, &(subject, tense)) in CONTEXTS.iter().enumerate() {
                out.push(ContextEntry {
                    property,
                    subject,
                    tense,
                    probability: get(property, c),
                });
            }
        }
        out
    };
    let phi = context_table(hyper.n_lexical, &|i, c| p.phi(i, c));
    let omega = context_table(hyper.n_structural, &|t, c| p.omega(t, c));
    let mut pi = Vec::new();
    for t in 0..hyper.n_structural {
        for (f, &frame) in model.frames.iter().enumerate() {
            pi.push(FrameEntry {
                property: t,
                frame,
                probability: p.pi(t, f),
            });
        }
    }
    let mut verb_scores = Vec::new();
    for (v, verb) in model.verbs.iter().enumerate() {
        for i in 0..hyper.lexical_slots() {
            for t in 0..hyper.structural_slots() {
                let psi = p.psi(v, i);
                let lambda = p.lambda(v, t);
                verb_scores.push(VerbScore {
                    verb: verb.clone(),
                    lexical: i,
                    structural: t,
                    psi,
                    lambda,
                    product: psi * lambda,
                });
            }
        }
    }
    let psi_lambda_spearman = if hyper.n_lexical == 1 && hyper.n_structural == 1 {
        let psi: Vec<f64> = verb_scores.iter().map(|s| s.psi).collect();
        let lambda: Vec<f64> = verb_scores.iter().map(|s| s.lambda).collect();
        spearman(&psi, &lambda)
    } else {
        None
    };
    Ok(AnalysisBundle {
        hyperparams: hyper,
        phi,
        omega,
        pi,
        verb_scores,
        psi_lambda_spearman,
    })
}

/// Verbs by descending score, ties broken by verb. A verb's score is its
/// largest `P(ψ)·P(λ)`, which is the single product in the one-by-one model.
pub fn rank_verbs(bundle: &AnalysisBundle) -> Vec<(String, f64)> {
    let mut best: Vec<(String, f64)> = Vec::new();
    for s in &bundle.verb_scores {
        match best.last_mut() {
            Some((verb, score)) if *verb == s.verb => *score = score.max(s.product),
            _ => best.push((s.verb.clone(), s.product)),
        }
    }
    best.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    best
}

impl AnalysisBundle {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Writes `phi.csv`, `omega.csv`, `pi.csv`, `verb_scores.csv` and
    /// `bundle.json` into `dir`, creating it if needed.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_rows(&dir.join("phi.csv"), &self.phi)?;
        write_rows(&dir.join("omega.csv"), &self.omega)?;
        write_rows(&dir.join("pi.csv"), &self.pi)?;
        write_rows(&dir.join("verb_scores.csv"), &self.verb_scores)?;
        let path = dir.join("bundle.json");
        fs::write(&path, self.to_json()?).map_err(|e| Error::io(&path, e))
    }
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
