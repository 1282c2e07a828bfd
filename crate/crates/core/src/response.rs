//! Response links, KL loss and the acceptability-weighted objective.
//!
//! A neg-raising response is predicted as
//! `r̂ = logit⁻¹(m_l ν + β₀ + β_l)` with `m_l = exp(σ₀ + σ_l)`, where `ν` is the
//! logit of the cell probability. The acceptability response has the same
//! form with its own effects and a free per-cell `α` in place of `ν`.
//! Neg-raising KL terms are weighted by `α' = logit⁻¹(α)`.

use serde::{Deserialize, Serialize};

use crate::dataset::{CellKey, CellLayout, ResponseTable};
use crate::error::{Error, Result};
use crate::factorization::FactorParams;
use crate::math::{logit, neg_entropy, sigmoid};

/// Fixed and per-participant effects of one response channel.
///
/// Scales are stored as logs: the multiplier for participant `l` is
/// `exp(log_scale + participant_log_scale[l])`. Random-effect variances are
/// stored as log-variances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelEffects {
    pub shift: f64,
    pub log_scale: f64,
    pub participant_shift: Vec<f64>,
    pub participant_log_scale: Vec<f64>,
    pub shift_log_variance: f64,
    pub scale_log_variance: f64,
}

impl ChannelEffects {
    pub fn zeros(n_participants: usize) -> Self {
        ChannelEffects {
            shift: 0.0,
            log_scale: 0.0,
            participant_shift: vec![0.0; n_participants],
            participant_log_scale: vec![0.0; n_participants],
            shift_log_variance: 0.0,
            scale_log_variance: 0.0,
        }
    }

    pub fn n_participants(&self) -> usize {
        self.participant_shift.len()
    }

    /// `m_l`, with `None` standing for a participant without random effects.
    pub fn multiplier(&self, participant: Option<usize>) -> f64 {
        let random = participant.map_or(0.0, |l| self.participant_log_scale[l]);
        (self.log_scale + random).exp()
    }

    /// `m_l x + β₀ + β_l`.
    pub fn linear(&self, x: f64, participant: Option<usize>) -> f64 {
        let random = participant.map_or(0.0, |l| self.participant_shift[l]);
        self.multiplier(participant) * x + self.shift + random
    }

    fn check(&self, l: usize) -> Result<()> {
        if l >= self.n_participants() {
            return Err(Error::Index {
                kind: "participant",
                index: l,
                size: self.n_participants(),
            });
        }
        Ok(())
    }

    fn values(&self) -> impl Iterator<Item = &f64> {
        [
            &self.shift,
            &self.log_scale,
            &self.shift_log_variance,
            &self.scale_log_variance,
        ]
        .into_iter()
        .chain(&self.participant_shift)
        .chain(&self.participant_log_scale)
    }

    fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        [
            &mut self.shift,
            &mut self.log_scale,
            &mut self.shift_log_variance,
            &mut self.scale_log_variance,
        ]
        .into_iter()
        .chain(&mut self.participant_shift)
        .chain(&mut self.participant_log_scale)
    }

    fn value_name(&self, n: usize) -> String {
        let l = self.n_participants();
        match n {
            0 => "shift".into(),
            1 => "log_scale".into(),
            2 => "shift_log_variance".into(),
            3 => "scale_log_variance".into(),
            n if n < 4 + l => format!("participant_shift[{}]", n - 4),
            n => format!("participant_log_scale[{}]", n - 4 - l),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectsParams {
    pub negraising: ChannelEffects,
    pub acceptability: ChannelEffects,
}

impl EffectsParams {
    pub fn zeros(n_participants: usize) -> Self {
        EffectsParams {
            negraising: ChannelEffects::zeros(n_participants),
            acceptability: ChannelEffects::zeros(n_participants),
        }
    }

    pub fn n_participants(&self) -> usize {
        self.negraising.n_participants()
    }

    pub fn len(&self) -> usize {
        2 * (4 + 2 * self.n_participants())
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Every value, negraising channel first.
    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.negraising.values().chain(self.acceptability.values())
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.negraising
            .values_mut()
            .chain(self.acceptability.values_mut())
    }

    pub fn value_name(&self, n: usize) -> String {
        let half = self.len() / 2;
        if n < half {
            format!("negraising.{}", self.negraising.value_name(n))
        } else {
            format!("acceptability.{}", self.acceptability.value_name(n - half))
        }
    }

    fn check_shape(&self) -> Result<()> {
        let l = self.n_participants();
        let ok = [
            self.negraising.participant_log_scale.len(),
            self.acceptability.participant_shift.len(),
            self.acceptability.participant_log_scale.len(),
        ]
        .iter()
        .all(|&n| n == l);
        if ok {
            Ok(())
        } else {
            Err(Error::Dimension(
                "random-effect vectors differ in length".into(),
            ))
        }
    }
}

/// Free acceptability parameters `α`, one per observed cell, sorted by cell.
#[derive(Debug, Clone, PartialEq)]
pub struct AcceptabilityCells {
    cells: Vec<CellKey>,
    alpha: Vec<f64>,
}

impl AcceptabilityCells {
    pub fn new(mut entries: Vec<(CellKey, f64)>) -> Result<Self> {
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        if entries.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::Schema("duplicate acceptability cell".into()));
        }
        let (cells, alpha) = entries.into_iter().unzip();
        Ok(AcceptabilityCells { cells, alpha })
    }

    /// `α = logit(mean acceptability)` for every cell of the table.
    pub fn from_cell_means(table: &ResponseTable, layout: &CellLayout) -> Self {
        let mut sum = vec![0.0; layout.cells.len()];
        let mut count = vec![0usize; layout.cells.len()];
        for (r, &c) in table.records().iter().zip(&layout.record_cell) {
            sum[c] += r.acceptability;
            count[c] += 1;
        }
        let alpha = sum
            .iter()
            .zip(&count)
            .map(|(s, &n)| logit(s / n as f64))
            .collect();
        AcceptabilityCells {
            cells: layout.cells.clone(),
            alpha,
        }
    }

    pub fn get(&self, cell: &CellKey) -> Option<f64> {
        self.cells.binary_search(cell).ok().map(|i| self.alpha[i])
    }

    pub fn cells(&self) -> &[CellKey] {
        &self.cells
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn alpha_mut(&mut self) -> &mut [f64] {
        &mut self.alpha
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// `α` aligned with `layout.cells`.
    pub(crate) fn aligned(&self, table: &ResponseTable, layout: &CellLayout) -> Result<Vec<f64>> {
        layout
            .cells
            .iter()
            .map(|c| {
                self.get(c)
                    .ok_or_else(|| Error::MissingCell(table.sentence_of(c).to_string()))
            })
            .collect()
    }
}

/// Inverse-gamma hyperprior on each random-effect variance. It keeps the
/// jointly optimized variance from collapsing to zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariancePrior {
    pub shape: f64,
    pub scale: f64,
}

impl Default for VariancePrior {
    fn default() -> Self {
        VariancePrior {
            shape: 1.0,
            scale: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossOptions {
    /// Weight neg-raising terms by `logit⁻¹(α)`; otherwise every weight is 1.
    pub weight_by_acceptability: bool,
    /// Include `Σ D(a ‖ â)`, the only term that informs `α`.
    pub acceptability_channel: bool,
    pub variance_prior: Option<VariancePrior>,
}

impl Default for LossOptions {
    fn default() -> Self {
        LossOptions {
            weight_by_acceptability: true,
            acceptability_channel: true,
            variance_prior: Some(VariancePrior::default()),
        }
    }
}

/// The objective split into its parts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    /// `Σ α' D(r ‖ r̂)`.
    pub negraising: f64,
    /// `Σ D(a ‖ â)`.
    pub acceptability: f64,
    /// Gaussian random-effect penalties, variance normalizers and hyperprior.
    pub prior: f64,
}

impl LossBreakdown {
    pub fn total(&self) -> f64 {
        self.negraising + self.acceptability + self.prior
    }
}

pub fn predict_negraising(nu: f64, effects: &EffectsParams, l: usize) -> Result<f64> {
    effects.negraising.check(l)?;
    Ok(sigmoid(effects.negraising.linear(nu, Some(l))))
}

pub fn predict_acceptability(alpha: f64, effects: &EffectsParams, l: usize) -> Result<f64> {
    effects.acceptability.check(l)?;
    Ok(sigmoid(effects.acceptability.linear(alpha, Some(l))))
}

/// `D(r ‖ r̂) = -[r ln(r̂/r) + (1-r) ln((1-r̂)/(1-r))]`, natural log.
pub fn kl_loss(r: f64, r_hat: f64) -> Result<f64> {
    for (name, x) in [("r", r), ("r_hat", r_hat)] {
        if !(x > 0.0 && x < 1.0) {
            return Err(Error::Domain(format!("{name} = {x}")));
        }
    }
    Ok(-(r * (r_hat / r).ln() + (1.0 - r) * ((1.0 - r_hat) / (1.0 - r)).ln()))
}

/// KL divergence with `r̂ = logit⁻¹(z)`, using `-ln r̂ = softplus(-z)` and
/// `-ln(1 - r̂) = softplus(z)`. Returns the divergence and `r̂`.
#[inline]
pub(crate) fn kl_from_logit(r: f64, neg_entropy_r: f64, z: f64) -> (f64, f64) {
    let e = (-z.abs()).exp();
    let log1pe = e.ln_1p();
    let sp_pos = z.max(0.0) + log1pe;
    let sp_neg = sp_pos - z;
    let r_hat = if z >= 0.0 {
        1.0 / (1.0 + e)
    } else {
        e / (1.0 + e)
    };
    (neg_entropy_r + r * sp_neg + (1.0 - r) * sp_pos, r_hat)
}

/// Participant value meaning "no random effects" (population-level prediction).
pub(crate) const NO_PARTICIPANT: u32 = u32::MAX;

/// Per-record data in the layout the loss loop wants.
#[derive(Debug, Clone)]
pub(crate) struct PreparedData {
    pub cell: Vec<u32>,
    pub participant: Vec<u32>,
    pub r: Vec<f64>,
    pub a: Vec<f64>,
    neg_entropy_r: Vec<f64>,
    neg_entropy_a: Vec<f64>,
}

impl PreparedData {
    pub fn from_table(table: &ResponseTable, layout: &CellLayout) -> Self {
        let participant = table
            .record_ids()
            .iter()
            .map(|id| id.participant as u32)
            .collect();
        Self::new(table, layout, participant)
    }

    pub fn new(table: &ResponseTable, layout: &CellLayout, participant: Vec<u32>) -> Self {
        let r: Vec<f64> = table.records().iter().map(|x| x.negraising).collect();
        let a: Vec<f64> = table.records().iter().map(|x| x.acceptability).collect();
        PreparedData {
            cell: layout.record_cell.iter().map(|&c| c as u32).collect(),
            participant,
            neg_entropy_r: r.iter().map(|&x| neg_entropy(x)).collect(),
            neg_entropy_a: a.iter().map(|&x| neg_entropy(x)).collect(),
            r,
            a,
        }
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }
}

/// Gradient buffers for [`response_terms`].
pub(crate) struct ResponseGrad<'a> {
    pub nu: &'a mut [f64],
    pub alpha: &'a mut [f64],
    pub effects: &'a mut EffectsParams,
}

fn multipliers(ch: &ChannelEffects) -> Vec<f64> {
    ch.participant_log_scale
        .iter()
        .map(|s| (ch.log_scale + s).exp())
        .collect()
}

/// Data terms of the objective for cell values `nu` and `alpha`. When `grad`
/// is given, gradients are *added* into it. The neg-raising weight `α'` is a
/// constant here: `alpha` receives gradient only from the acceptability term.
pub(crate) fn response_terms(
    data: &PreparedData,
    nu: &[f64],
    alpha: &[f64],
    effects: &EffectsParams,
    options: &LossOptions,
    mut grad: Option<ResponseGrad<'_>>,
) -> LossBreakdown {
    let nr = &effects.negraising;
    let acc = &effects.acceptability;
    let m_nr = multipliers(nr);
    let m_acc = multipliers(acc);
    let fixed_nr = nr.log_scale.exp();
    let fixed_acc = acc.log_scale.exp();
    let weights: Vec<f64> = if options.weight_by_acceptability {
        alpha.iter().map(|&x| sigmoid(x)).collect()
    } else {
        vec![1.0; alpha.len()]
    };

    let mut out = LossBreakdown::default();
    for n in 0..data.len() {
        let c = data.cell[n] as usize;
        let l = data.participant[n];
        let known = l != NO_PARTICIPANT;
        let l = l as usize;
        let w = weights[c];

        let (m, shift) = if known {
            (m_nr[l], nr.shift + nr.participant_shift[l])
        } else {
            (fixed_nr, nr.shift)
        };
        let z = m * nu[c] + shift;
        let (d, r_hat) = kl_from_logit(data.r[n], data.neg_entropy_r[n], z);
        out.negraising += w * d;

        if let Some(g) = grad.as_mut() {
            let gz = w * (r_hat - data.r[n]);
            g.nu[c] += gz * m;
            let gs = gz * m * nu[c];
            g.effects.negraising.shift += gz;
            g.effects.negraising.log_scale += gs;
            if known {
                g.effects.negraising.participant_shift[l] += gz;
                g.effects.negraising.participant_log_scale[l] += gs;
            }
        }

        if options.acceptability_channel {
            let (m, shift) = if known {
                (m_acc[l], acc.shift + acc.participant_shift[l])
            } else {
                (fixed_acc, acc.shift)
            };
            let z = m * alpha[c] + shift;
            let (d, a_hat) = kl_from_logit(data.a[n], data.neg_entropy_a[n], z);
            out.acceptability += d;
            if let Some(g) = grad.as_mut() {
                let gz = a_hat - data.a[n];
                g.alpha[c] += gz * m;
                let gs = gz * m * alpha[c];
                g.effects.acceptability.shift += gz;
                g.effects.acceptability.log_scale += gs;
                if known {
                    g.effects.acceptability.participant_shift[l] += gz;
                    g.effects.acceptability.participant_log_scale[l] += gs;
                }
            }
        }
    }
    out
}

/// Negative log prior of the random effects: for each random-effect vector
/// `x` of length `L` with log-variance `s`,
/// `Σ x² / (2 e^s) + (L/2) s`, plus the inverse-gamma hyperprior
/// `(shape + 1) s + scale e^(-s)` when configured.
pub(crate) fn prior_terms(
    effects: &EffectsParams,
    options: &LossOptions,
    mut grad: Option<&mut EffectsParams>,
) -> f64 {
    let mut total = 0.0;
    for channel in 0..2 {
        let ch = if channel == 0 {
            &effects.negraising
        } else {
            &effects.acceptability
        };
        for which in 0..2 {
            let (x, s) = if which == 0 {
                (&ch.participant_shift, ch.shift_log_variance)
            } else {
                (&ch.participant_log_scale, ch.scale_log_variance)
            };
            let inv_var = (-s).exp();
            let sq: f64 = x.iter().map(|v| v * v).sum();
            let half_l = x.len() as f64 / 2.0;
            total += 0.5 * sq * inv_var + half_l * s;
            let mut g_s = -0.5 * sq * inv_var + half_l;
            if let Some(prior) = options.variance_prior {
                total += (prior.shape + 1.0) * s + prior.scale * inv_var;
                g_s += prior.shape + 1.0 - prior.scale * inv_var;
            }
            if let Some(g) = grad.as_mut() {
                let gch = if channel == 0 {
                    &mut g.negraising
                } else {
                    &mut g.acceptability
                };
                let (gx, gs) = if which == 0 {
                    (&mut gch.participant_shift, &mut gch.shift_log_variance)
                } else {
                    (&mut gch.participant_log_scale, &mut gch.scale_log_variance)
                };
                for (gv, v) in gx.iter_mut().zip(x) {
                    *gv += v * inv_var;
                }
                *gs += g_s;
            }
        }
    }
    total
}

pub(crate) fn check_compatible(
    table: &ResponseTable,
    factors: &FactorParams,
    effects: &EffectsParams,
) -> Result<()> {
    effects.check_shape()?;
    if factors.n_verbs() != table.verbs().len() || factors.n_frames() != table.frames().len() {
        return Err(Error::Dimension(format!(
            "factors cover {} verbs × {} frames, table has {} × {}",
            factors.n_verbs(),
            factors.n_frames(),
            table.verbs().len(),
            table.frames().len()
        )));
    }
    if effects.n_participants() != table.participants().len() {
        return Err(Error::Dimension(format!(
            "effects cover {} participants, table has {}",
            effects.n_participants(),
            table.participants().len()
        )));
    }
    Ok(())
}

/// The full objective with default [`LossOptions`].
pub fn total_loss(
    table: &ResponseTable,
    factors: &FactorParams,
    effects: &EffectsParams,
    cells: &AcceptabilityCells,
) -> Result<f64> {
    total_loss_with(table, factors, effects, cells, &LossOptions::default()).map(|b| b.total())
}

pub fn total_loss_with(
    table: &ResponseTable,
    factors: &FactorParams,
    effects: &EffectsParams,
    cells: &AcceptabilityCells,
    options: &LossOptions,
) -> Result<LossBreakdown> {
    check_compatible(table, factors, effects)?;
    let layout = table.cell_layout();
    let alpha = cells.aligned(table, &layout)?;
    let probs = factors.probabilities();
    let nu: Vec<f64> = layout.cells.iter().map(|c| probs.nu(c).0).collect();
    let data = PreparedData::from_table(table, &layout);
    let mut out = response_terms(&data, &nu, &alpha, effects, options, None);
    out.prior = prior_terms(effects, options, None);
    Ok(out)
}
