//! Sentence-level cross-validation over the hyperparameter grid and paired
//! bootstrap comparison of the resulting models.

mod bootstrap;
mod folds;

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use bootstrap::{
    bootstrap_compare, paired_bootstrap, ComparisonRecord, CONFIDENCE, DEFAULT_BOOTSTRAP,
};
pub use folds::{assign_folds, FoldAssignment, FoldEntry, Violation, DEFAULT_FOLDS, MAX_SWAPS};

use crate::dataset::{ResponseTable, Sentence};
use crate::error::{Error, Result};
use crate::factorization::Hyperparams;
use crate::optim::{evaluate_sentences, fit, FitConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CvConfig {
    pub n_folds: usize,
    pub fold_seed: u64,
    pub fit: FitConfig,
    pub n_boot: usize,
    pub bootstrap_seed: u64,
    /// Pairwise comparisons are run among this many best grid points.
    pub compare_top: usize,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            n_folds: DEFAULT_FOLDS,
            fold_seed: 0,
            fit: FitConfig::default(),
            n_boot: DEFAULT_BOOTSTRAP,
            bootstrap_seed: 0,
            compare_top: 3,
        }
    }
}

/// Outcome of one fold at one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    /// Weighted held-out KL; `None` if the fit failed.
    pub loss: Option<f64>,
    pub error: Option<String>,
    pub train_loss: Option<f64>,
    pub iterations: Option<usize>,
    pub converged: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub hyperparams: Hyperparams,
    pub folds: Vec<FoldResult>,
    /// Sum over folds; `None` if any fold failed.
    pub total: Option<f64>,
    /// Held-out loss per sentence, aligned with [`EvalReport::sentences`].
    pub sentence_losses: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub folds: FoldAssignment,
    /// Every held-out sentence, sorted; pinned sentences are absent.
    pub sentences: Vec<Sentence>,
    pub grid: Vec<GridResult>,
    /// Grid points with a total, best (lowest) first.
    pub best_models: Vec<Hyperparams>,
    pub bootstrap: Vec<ComparisonRecord>,
}

impl EvalReport {
    pub fn result(&self, hyper: Hyperparams) -> Result<&GridResult> {
        self.grid
            .iter()
            .find(|g| g.hyperparams == hyper)
            .ok_or_else(|| Error::Config(format!("grid point {hyper} not in report")))
    }

    /// Per-sentence held-out losses of one grid point, all present.
    pub fn sentence_losses(&self, hyper: Hyperparams) -> Result<Vec<f64>> {
        let g = self.result(hyper)?;
        if g.sentence_losses.len() != self.sentences.len() {
            return Err(Error::Pairing(format!(
                "{hyper} has {} sentence losses for {} sentences",
                g.sentence_losses.len(),
                self.sentences.len()
            )));
        }
        g.sentence_losses
            .iter()
            .zip(&self.sentences)
            .map(|(l, s)| l.ok_or_else(|| Error::Pairing(format!("{hyper} has no loss for {s}"))))
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Parses `all` or a list of `I,T` pairs separated by whitespace or `;`.
pub fn parse_grid(text: &str) -> Result<Vec<Hyperparams>> {
    if text.trim() == "all" {
        return Ok(Hyperparams::grid());
    }
    let mut grid: Vec<Hyperparams> = text
        .split(|c: char| c == ';' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect::<Result<_>>()?;
    grid.dedup();
    if grid.is_empty() {
        return Err(Error::Config("empty grid".into()));
    }
    Ok(grid)
}

/// Fits every grid point on every training split and scores the held-out
/// sentences. All grid points share one fold assignment. A failed fit is
/// recorded in its [`FoldResult`] and does not stop the run.
pub fn cross_validate(
    table: &ResponseTable,
    grid: &[Hyperparams],
    config: &CvConfig,
) -> Result<EvalReport> {
    for h in grid {
        h.validate()?;
    }
    config.fit.validate()?;
    let folds = assign_folds(table, config.n_folds, config.fold_seed)?;
    let sentences: Vec<Sentence> = folds
        .entries
        .iter()
        .filter(|e| e.fold.is_some())
        .map(|e| e.sentence.clone())
        .collect();
    let position: HashMap<&Sentence, usize> =
        sentences.iter().enumerate().map(|(n, s)| (s, n)).collect();
    let splits = (0..config.n_folds)
        .map(|k| folds.split(table, k))
        .collect::<Result<Vec<_>>>()?;

    let jobs: Vec<(usize, usize)> = (0..grid.len())
        .flat_map(|g| (0..config.n_folds).map(move |k| (g, k)))
        .collect();
    let outcomes: Vec<(FoldResult, Vec<(Sentence, f64)>)> = jobs
        .par_iter()
        .map(|&(g, k)| {
            let (train, test) = &splits[k];
            let run = || -> Result<_> {
                let result = fit(train, grid[g], &config.fit)?;
                let per = evaluate_sentences(&result.model, test)?;
                Ok((result, per))
            };
            match run() {
                Ok((result, per)) => {
                    info!("{} fold {k}: train {:.4}", grid[g], result.model.loss);
                    let loss = per.iter().map(|(_, l)| l).sum();
                    let fold = FoldResult {
                        fold: k,
                        loss: Some(loss),
                        error: None,
                        train_loss: Some(result.model.loss),
                        iterations: Some(result.iterations_run),
                        converged: Some(result.converged),
                    };
                    (fold, per)
                }
                Err(e) => {
                    warn!("{} fold {k} failed: {e}", grid[g]);
                    let fold = FoldResult {
                        fold: k,
                        loss: None,
                        error: Some(e.to_string()),
                        train_loss: None,
                        iterations: None,
                        converged: None,
                    };
                    (fold, Vec::new())
                }
            }
        })
        .collect();

    let mut results: Vec<GridResult> = grid
        .iter()
        .map(|&hyperparams| GridResult {
            hyperparams,
            folds: Vec::new(),
            total: None,
            sentence_losses: vec![None; sentences.len()],
        })
        .collect();
    for (&(g, _), (fold, per)) in jobs.iter().zip(outcomes) {
        for (s, l) in per {
            results[g].sentence_losses[position[&s]] = Some(l);
        }
        results[g].folds.push(fold);
    }
    for r in &mut results {
        r.total = r.folds.iter().map(|f| f.loss).sum();
    }

    let mut best_models: Vec<(f64, Hyperparams)> = results
        .iter()
        .filter_map(|r| r.total.map(|t| (t, r.hyperparams)))
        .collect();
    best_models.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let best_models: Vec<Hyperparams> = best_models.into_iter().map(|(_, h)| h).collect();

    let mut report = EvalReport {
        folds,
        sentences,
        grid: results,
        best_models,
        bootstrap: Vec::new(),
    };
    let top: Vec<Hyperparams> = report
        .best_models
        .iter()
        .take(config.compare_top)
        .copied()
        .collect();
    for (n, &a) in top.iter().enumerate() {
        for &b in &top[n + 1..] {
            let record = bootstrap_compare(&report, a, b, config.n_boot, config.bootstrap_seed)?;
            report.bootstrap.push(record);
        }
    }
    Ok(report)
}
