//! The training objective over a packed parameter vector.
//!
//! Packing order: factor logits (see [`FactorParams::logits`]), then effects
//! (see [`EffectsParams::values`]), then one `α` per cell of the layout.

use crate::dataset::{CellLayout, ResponseTable};
use crate::factorization::FactorParams;
use crate::response::{
    prior_terms, response_terms, EffectsParams, LossBreakdown, LossOptions, PreparedData,
    ResponseGrad,
};

/// Something Adam can minimize.
pub(crate) trait Objective {
    fn dim(&self) -> usize;
    /// Loss at `x`; when `grad` is given it is overwritten with the gradient.
    fn eval(&mut self, x: &[f64], grad: Option<&mut [f64]>) -> LossBreakdown;
    fn param_name(&self, n: usize) -> String;
}

pub(crate) struct FactorObjective {
    layout: CellLayout,
    data: PreparedData,
    options: LossOptions,
    factors: FactorParams,
    effects: EffectsParams,
    alpha: Vec<f64>,
    g_factors: FactorParams,
    g_effects: EffectsParams,
    g_nu: Vec<f64>,
    g_alpha: Vec<f64>,
    nu: Vec<f64>,
}

impl FactorObjective {
    pub fn new(
        table: &ResponseTable,
        layout: CellLayout,
        template: &FactorParams,
        options: LossOptions,
    ) -> Self {
        let n_cells = layout.cells.len();
        let n_participants = table.participants().len();
        let data = PreparedData::from_table(table, &layout);
        let mut g_factors = template.clone();
        g_factors.logits_mut().for_each(|x| *x = 0.0);
        FactorObjective {
            layout,
            data,
            options,
            factors: template.clone(),
            effects: EffectsParams::zeros(n_participants),
            alpha: vec![0.0; n_cells],
            g_factors,
            g_effects: EffectsParams::zeros(n_participants),
            g_nu: vec![0.0; n_cells],
            g_alpha: vec![0.0; n_cells],
            nu: vec![0.0; n_cells],
        }
    }

    pub fn layout(&self) -> &CellLayout {
        &self.layout
    }

    pub fn pack(factors: &FactorParams, effects: &EffectsParams, alpha: &[f64]) -> Vec<f64> {
        factors
            .logits()
            .chain(effects.values())
            .chain(alpha)
            .copied()
            .collect()
    }

    /// Copies `x` into the three parameter groups.
    pub fn unpack_into(
        x: &[f64],
        factors: &mut FactorParams,
        effects: &mut EffectsParams,
        alpha: &mut [f64],
    ) {
        let mut it = x.iter();
        for (dst, src) in factors.logits_mut().zip(&mut it) {
            *dst = *src;
        }
        for (dst, src) in effects.values_mut().zip(&mut it) {
            *dst = *src;
        }
        for (dst, src) in alpha.iter_mut().zip(&mut it) {
            *dst = *src;
        }
    }

    pub fn unpack(&self, x: &[f64]) -> (FactorParams, EffectsParams, Vec<f64>) {
        let mut f = self.factors.clone();
        let mut e = self.effects.clone();
        let mut a = self.alpha.clone();
        Self::unpack_into(x, &mut f, &mut e, &mut a);
        (f, e, a)
    }
}

impl Objective for FactorObjective {
    fn dim(&self) -> usize {
        self.factors.len() + self.effects.len() + self.alpha.len()
    }

    fn eval(&mut self, x: &[f64], grad: Option<&mut [f64]>) -> LossBreakdown {
        Self::unpack_into(x, &mut self.factors, &mut self.effects, &mut self.alpha);
        let probs = self.factors.probabilities();
        for (nu, cell) in self.nu.iter_mut().zip(&self.layout.cells) {
            *nu = probs.nu(cell).0;
        }
        let Some(grad) = grad else {
            let mut out = response_terms(
                &self.data,
                &self.nu,
                &self.alpha,
                &self.effects,
                &self.options,
                None,
            );
            out.prior = prior_terms(&self.effects, &self.options, None);
            return out;
        };

        self.g_nu.fill(0.0);
        self.g_alpha.fill(0.0);
        self.g_effects.values_mut().for_each(|x| *x = 0.0);
        self.g_factors.logits_mut().for_each(|x| *x = 0.0);
        let mut out = response_terms(
            &self.data,
            &self.nu,
            &self.alpha,
            &self.effects,
            &self.options,
            Some(ResponseGrad {
                nu: &mut self.g_nu,
                alpha: &mut self.g_alpha,
                effects: &mut self.g_effects,
            }),
        );
        out.prior = prior_terms(&self.effects, &self.options, Some(&mut self.g_effects));
        for (cell, &g) in self.layout.cells.iter().zip(&self.g_nu) {
            probs.backprop(cell, g, &mut self.g_factors);
        }
        let packed = self
            .g_factors
            .logits()
            .chain(self.g_effects.values())
            .chain(&self.g_alpha);
        for (dst, src) in grad.iter_mut().zip(packed) {
            *dst = *src;
        }
        out
    }

    fn param_name(&self, n: usize) -> String {
        let nf = self.factors.len();
        let ne = self.effects.len();
        if n < nf {
            self.factors.logit_name(n)
        } else if n < nf + ne {
            self.effects.value_name(n - nf)
        } else {
            format!("alpha[{}]", n - nf - ne)
        }
    }
}

/// Restricts an objective to a subset of its coordinates; the others stay
/// at the values in `base`.
pub(crate) struct Masked<'a, O> {
    inner: &'a mut O,
    base: Vec<f64>,
    free: Vec<usize>,
    full_grad: Vec<f64>,
}

impl<'a, O: Objective> Masked<'a, O> {
    pub fn new(inner: &'a mut O, base: Vec<f64>, free: Vec<usize>) -> Self {
        let n = inner.dim();
        Masked {
            inner,
            base,
            free,
            full_grad: vec![0.0; n],
        }
    }

    pub fn restrict(&self, x: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&k| x[k]).collect()
    }

    /// The full parameter vector for free values `x`.
    pub fn expand(&self, x: &[f64]) -> Vec<f64> {
        let mut full = self.base.clone();
        for (&k, &v) in self.free.iter().zip(x) {
            full[k] = v;
        }
        full
    }
}

impl<O: Objective> Objective for Masked<'_, O> {
    fn dim(&self) -> usize {
        self.free.len()
    }

    fn eval(&mut self, x: &[f64], grad: Option<&mut [f64]>) -> LossBreakdown {
        for (&k, &v) in self.free.iter().zip(x) {
            self.base[k] = v;
        }
        match grad {
            None => self.inner.eval(&self.base, None),
            Some(grad) => {
                let out = self.inner.eval(&self.base, Some(&mut self.full_grad));
                for (dst, &k) in grad.iter_mut().zip(&self.free) {
                    *dst = self.full_grad[k];
                }
                out
            }
        }
    }

    fn param_name(&self, n: usize) -> String {
        self.inner.param_name(self.free[n])
    }
}
