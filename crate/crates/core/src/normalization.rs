//! Normalized neg-raising scores from a model with one free `ν` and one free
//! `α` per sentence, fitted under the same response links and loss as the
//! factorization.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{CellLayout, Frame, ResponseTable, Subject, Tense};
use crate::error::{Error, Result};
use crate::math::{logit, sigmoid};
use crate::optim::{run_adam, FitConfig, Objective};
use crate::response::{
    prior_terms, response_terms, EffectsParams, LossBreakdown, LossOptions, PreparedData,
    ResponseGrad,
};

/// How the fixed neg-raising effects enter the reported score.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreLink {
    /// `logit⁻¹(exp(σ₀) ν) + β₀`. Leaves `[0, 1]` when `β₀ ≠ 0`.
    #[default]
    Literal,
    /// `logit⁻¹(exp(σ₀) ν + β₀)`, always in `(0, 1)`.
    Inside,
}

impl ScoreLink {
    pub fn score(self, nu: f64, log_scale: f64, shift: f64) -> f64 {
        let m = log_scale.exp();
        match self {
            ScoreLink::Literal => sigmoid(m * nu) + shift,
            ScoreLink::Inside => sigmoid(m * nu + shift),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub verb: String,
    pub frame: Frame,
    pub subject: Subject,
    pub tense: Tense,
    pub nu: f64,
    pub alpha: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedScores {
    pub link: ScoreLink,
    /// Sorted by sentence.
    pub rows: Vec<ScoreRow>,
    pub effects: EffectsParams,
    pub loss: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl NormalizedScores {
    /// Recomputes every score under `link`.
    pub fn with_link(mut self, link: ScoreLink) -> Self {
        let nr = &self.effects.negraising;
        for row in &mut self.rows {
            row.score = link.score(row.nu, nr.log_scale, nr.shift);
        }
        self.link = link;
        self
    }

    /// CSV with columns `verb,frame,subject,tense,nu,alpha,score`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn write_csv_path(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(file)
    }
}

struct CellObjective {
    data: PreparedData,
    options: LossOptions,
    n_cells: usize,
    effects: EffectsParams,
    g_effects: EffectsParams,
}

impl CellObjective {
    fn pack(nu: &[f64], effects: &EffectsParams, alpha: &[f64]) -> Vec<f64> {
        nu.iter()
            .chain(effects.values())
            .chain(alpha)
            .copied()
            .collect()
    }

    fn split<'a>(&self, x: &'a [f64]) -> (&'a [f64], &'a [f64], &'a [f64]) {
        let (nu, rest) = x.split_at(self.n_cells);
        let (effects, alpha) = rest.split_at(self.effects.len());
        (nu, effects, alpha)
    }
}

impl Objective for CellObjective {
    fn dim(&self) -> usize {
        2 * self.n_cells + self.effects.len()
    }

    fn eval(&mut self, x: &[f64], grad: Option<&mut [f64]>) -> LossBreakdown {
        let (nu, values, alpha) = self.split(x);
        for (dst, src) in self.effects.values_mut().zip(values) {
            *dst = *src;
        }
        let Some(grad) = grad else {
            let mut out = response_terms(&self.data, nu, alpha, &self.effects, &self.options, None);
            out.prior = prior_terms(&self.effects, &self.options, None);
            return out;
        };
        grad.fill(0.0);
        self.g_effects.values_mut().for_each(|g| *g = 0.0);
        let (g_nu, rest) = grad.split_at_mut(self.n_cells);
        let (g_values, g_alpha) = rest.split_at_mut(self.effects.len());
        let mut out = response_terms(
            &self.data,
            nu,
            alpha,
            &self.effects,
            &self.options,
            Some(ResponseGrad {
                nu: g_nu,
                alpha: g_alpha,
                effects: &mut self.g_effects,
            }),
        );
        out.prior = prior_terms(&self.effects, &self.options, Some(&mut self.g_effects));
        for (dst, src) in g_values.iter_mut().zip(self.g_effects.values()) {
            *dst = *src;
        }
        out
    }

    fn param_name(&self, n: usize) -> String {
        let e = self.effects.len();
        if n < self.n_cells {
            format!("nu[{n}]")
        } else if n < self.n_cells + e {
            self.effects.value_name(n - self.n_cells)
        } else {
            format!("alpha[{}]", n - self.n_cells - e)
        }
    }
}

fn cell_means(layout: &CellLayout, pick: impl Fn(usize) -> f64) -> Vec<f64> {
    let mut sum = vec![0.0; layout.cells.len()];
    let mut count = vec![0usize; layout.cells.len()];
    for (n, &c) in layout.record_cell.iter().enumerate() {
        sum[c] += pick(n);
        count[c] += 1;
    }
    sum.iter().zip(&count).map(|(s, &k)| s / k as f64).collect()
}

/// Fits free per-sentence `ν` and `α` with the participant effects by Adam,
/// starting from the logits of the cell-mean responses, and scores each
/// sentence under `link`.
pub fn normalize(
    table: &ResponseTable,
    config: &FitConfig,
    link: ScoreLink,
) -> Result<NormalizedScores> {
    if table.is_empty() {
        return Err(Error::Empty);
    }
    config.validate()?;
    let layout = table.cell_layout();
    let records = table.records();
    let nu0: Vec<f64> = cell_means(&layout, |n| records[n].negraising)
        .into_iter()
        .map(logit)
        .collect();
    let alpha0: Vec<f64> = cell_means(&layout, |n| records[n].acceptability)
        .into_iter()
        .map(logit)
        .collect();
    let n_participants = table.participants().len();
    let mut obj = CellObjective {
        data: PreparedData::from_table(table, &layout),
        options: config.loss,
        n_cells: layout.cells.len(),
        effects: EffectsParams::zeros(n_participants),
        g_effects: EffectsParams::zeros(n_participants),
    };
    let x0 = CellObjective::pack(&nu0, &obj.effects, &alpha0);
    let outcome = run_adam(&mut obj, x0, config)?;
    let (nu, values, alpha) = obj.split(&outcome.x);
    let mut effects = EffectsParams::zeros(n_participants);
    for (dst, src) in effects.values_mut().zip(values) {
        *dst = *src;
    }
    let rows = layout
        .cells
        .iter()
        .enumerate()
        .map(|(c, cell)| {
            let s = table.sentence_of(cell);
            ScoreRow {
                verb: s.verb,
                frame: s.frame,
                subject: s.subject,
                tense: s.tense,
                nu: nu[c],
                alpha: alpha[c],
                score: 0.0,
            }
        })
        .collect();
    let scores = NormalizedScores {
        link,
        rows,
        effects,
        loss: outcome.final_breakdown.total(),
        iterations: outcome.iterations,
        converged: outcome.converged,
    };
    Ok(scores.with_link(link))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::ResponseRecord;

    fn rec(verb: &str, participant: &str, r: f64, a: f64) -> ResponseRecord {
        ResponseRecord {
            verb: verb.into(),
            frame: Frame::ThatS,
            subject: Subject::First,
            tense: Tense::Present,
            participant: participant.into(),
            negraising: r,
            acceptability: a,
        }
    }

    fn quick() -> FitConfig {
        FitConfig {
            max_iterations: 3000,
            ..FitConfig::default()
        }
    }

    #[test]
    fn constant_cell_scores_its_response() {
        let table = ResponseTable::from_records(vec![
            rec("think", "p1", 0.9, 0.8),
            rec("think", "p2", 0.9, 0.8),
            rec("think", "p3", 0.9, 0.8),
        ])
        .unwrap();
        let scores = normalize(&table, &quick(), ScoreLink::Inside).unwrap();
        assert!(
            (scores.rows[0].score - 0.9).abs() < 1e-3,
            "{}",
            scores.rows[0].score
        );
        // The literal form moves with whatever shift the fit settles on.
        let literal = scores.with_link(ScoreLink::Literal);
        assert!(
            (literal.rows[0].score - 0.9).abs() < 1e-2,
            "{}",
            literal.rows[0].score
        );
    }

    #[test]
    fn identical_cells_get_identical_scores() {
        let mut records = Vec::new();
        for verb in ["a", "b"] {
            for (p, r) in [("p1", 0.2), ("p2", 0.6), ("p3", 0.45)] {
                records.push(rec(verb, p, r, 0.7));
            }
        }
        records.push(rec("c", "p1", 0.9, 0.3));
        records.push(rec("c", "p2", 0.7, 0.4));
        let table = ResponseTable::from_records(records).unwrap();
        let scores = normalize(&table, &quick(), ScoreLink::Literal).unwrap();
        assert!((scores.rows[0].score - scores.rows[1].score).abs() < 1e-3);
    }

    #[test]
    fn links_differ_only_in_where_the_shift_goes() {
        assert_eq!(ScoreLink::Literal.score(0.0, 0.0, 0.25), 0.75);
        assert_eq!(ScoreLink::Inside.score(0.0, 0.0, 0.0), 0.5);
        assert!((ScoreLink::Inside.score(1.0, 2f64.ln(), 0.5) - sigmoid(2.5)).abs() < 1e-15);
    }

    #[test]
    fn csv_has_the_documented_columns() {
        let table = ResponseTable::from_records(vec![rec("think", "p1", 0.9, 0.8)]).unwrap();
        let scores = normalize(
            &table,
            &FitConfig {
                max_iterations: 10,
                ..quick()
            },
            ScoreLink::Inside,
        )
        .unwrap();
        let mut out = Vec::new();
        scores.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("verb,frame,subject,tense,nu,alpha,score\n"));
        assert!(text.contains("think,NP __ that S,first,present,"));
    }
}
