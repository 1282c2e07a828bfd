//! The probabilistic boolean factorization.
//!
//! A verb `v` licenses neg-raising in frame `f` with subject `j` and tense `k`
//! when some structural property `t` and lexical property `i` line up:
//!
//! ```text
//! n[v,f,j,k] = OR over (t, i) of  λ[v,t] ∧ ψ[v,i] ∧ φ[i,j,k] ∧ π[t,f] ∧ ω[t,j,k]
//! ```
//!
//! Every entry is an independent Bernoulli variable whose probability is the
//! logistic transform of a free logit. Treating each conjunction
//! `ζ[v,t,i,f,j,k]` as an independent event gives
//!
//! ```text
//! P(n[v,f,j,k]) = 1 - Π over (t, i) of (1 - ζ[v,t,i,f,j,k])
//! ```
//!
//! which [`forward_negraising`] evaluates in log space. Boundary models with
//! no lexical (`|I| = 0`) or no structural (`|T| = 0`) properties hold the
//! removed factors at probability one; they own no parameters.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::CellKey;
use crate::error::{Error, Result};
use crate::math::{logit, sigmoid};

/// Lower clamp applied to `P(n)` before taking its logit.
pub const PROBABILITY_FLOOR: f64 = 1e-7;
/// Upper clamp applied to `P(n)` before taking its logit.
pub const PROBABILITY_CEIL: f64 = 1.0 - 1e-7;

/// Largest number of `(t, i)` events [`enumeration_oracle`] will enumerate.
pub const ORACLE_EVENT_LIMIT: usize = 12;
/// Largest number of free boolean entries [`entry_enumeration`] will enumerate.
pub const ENTRY_VARIABLE_LIMIT: usize = 20;

/// Subject/tense contexts per factor row (`|J| × |K|`).
pub const CONTEXTS: usize = 4;

/// Number of lexical (`|I|`) and structural (`|T|`) properties.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Hyperparams {
    pub n_lexical: usize,
    pub n_structural: usize,
}

impl Hyperparams {
    pub const MAX: usize = 4;

    pub fn new(n_lexical: usize, n_structural: usize) -> Result<Self> {
        let h = Hyperparams {
            n_lexical,
            n_structural,
        };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_lexical == 0 && self.n_structural == 0 {
            return Err(Error::Config("|I| and |T| cannot both be zero".into()));
        }
        if self.n_lexical > Self::MAX || self.n_structural > Self::MAX {
            return Err(Error::Config(format!(
                "|I| and |T| must be at most {}, got {self}",
                Self::MAX
            )));
        }
        Ok(())
    }

    /// Every pairing in `{0..4}²` except `(0, 0)`.
    pub fn grid() -> Vec<Hyperparams> {
        let mut out = Vec::new();
        for n_lexical in 0..=Self::MAX {
            for n_structural in 0..=Self::MAX {
                if n_lexical + n_structural > 0 {
                    out.push(Hyperparams {
                        n_lexical,
                        n_structural,
                    });
                }
            }
        }
        out
    }

    /// Lexical slots in the product, counting the frozen one of a boundary model.
    pub fn lexical_slots(&self) -> usize {
        self.n_lexical.max(1)
    }

    pub fn structural_slots(&self) -> usize {
        self.n_structural.max(1)
    }
}

impl fmt::Display for Hyperparams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.n_lexical, self.n_structural)
    }
}

impl FromStr for Hyperparams {
    type Err = Error;

    /// Parses `"I,T"`, e.g. `"1,0"`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("expected `I,T`, got `{s}`"));
        let (i, t) = s.trim().split_once(',').ok_or_else(bad)?;
        let i = i.trim().parse().map_err(|_| bad())?;
        let t = t.trim().parse().map_err(|_| bad())?;
        Hyperparams::new(i, t)
    }
}

/// Unconstrained logits of the five factor objects.
///
/// Storage is row-major: `lambda` is `|V|×|T|`, `pi` is `|T|×|F|`, `psi` is
/// `|V|×|I|`, `phi` is `|I|×4` and `omega` is `|T|×4`, where the trailing axis
/// of `phi` and `omega` is [`crate::dataset::context_index`].
#[derive(Debug, Clone, PartialEq)]
pub struct FactorParams {
    hyper: Hyperparams,
    n_verbs: usize,
    n_frames: usize,
    pub(crate) lambda: Vec<f64>,
    pub(crate) pi: Vec<f64>,
    pub(crate) psi: Vec<f64>,
    pub(crate) phi: Vec<f64>,
    pub(crate) omega: Vec<f64>,
}

impl FactorParams {
    pub fn zeros(n_verbs: usize, n_frames: usize, hyper: Hyperparams) -> Self {
        let (i, t) = (hyper.n_lexical, hyper.n_structural);
        FactorParams {
            hyper,
            n_verbs,
            n_frames,
            lambda: vec![0.0; n_verbs * t],
            pi: vec![0.0; t * n_frames],
            psi: vec![0.0; n_verbs * i],
            phi: vec![0.0; i * CONTEXTS],
            omega: vec![0.0; t * CONTEXTS],
        }
    }

    /// Logits drawn independently from `Normal(0, scale²)`.
    pub fn random<R: Rng + ?Sized>(
        n_verbs: usize,
        n_frames: usize,
        hyper: Hyperparams,
        scale: f64,
        rng: &mut R,
    ) -> Self {
        let mut p = Self::zeros(n_verbs, n_frames, hyper);
        if scale > 0.0 {
            let normal = Normal::new(0.0, scale).expect("positive finite scale");
            for x in p.logits_mut() {
                *x = normal.sample(rng);
            }
        }
        p
    }

    /// Builds parameters from explicit logits, checking every length.
    #[allow(clippy::too_many_arguments)]
    pub fn from_logits(
        n_verbs: usize,
        n_frames: usize,
        hyper: Hyperparams,
        lambda: Vec<f64>,
        pi: Vec<f64>,
        psi: Vec<f64>,
        phi: Vec<f64>,
        omega: Vec<f64>,
    ) -> Result<Self> {
        hyper.validate()?;
        let p = FactorParams {
            hyper,
            n_verbs,
            n_frames,
            lambda,
            pi,
            psi,
            phi,
            omega,
        };
        let expected = Self::zeros(n_verbs, n_frames, hyper);
        for (name, got, want) in [
            ("lambda", p.lambda.len(), expected.lambda.len()),
            ("pi", p.pi.len(), expected.pi.len()),
            ("psi", p.psi.len(), expected.psi.len()),
            ("phi", p.phi.len(), expected.phi.len()),
            ("omega", p.omega.len(), expected.omega.len()),
        ] {
            if got != want {
                return Err(Error::Dimension(format!(
                    "{name} has {got} entries, expected {want}"
                )));
            }
        }
        Ok(p)
    }

    pub fn hyper(&self) -> Hyperparams {
        self.hyper
    }

    pub fn n_verbs(&self) -> usize {
        self.n_verbs
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn lambda_logits(&self) -> &[f64] {
        &self.lambda
    }

    pub fn pi_logits(&self) -> &[f64] {
        &self.pi
    }

    pub fn psi_logits(&self) -> &[f64] {
        &self.psi
    }

    pub fn phi_logits(&self) -> &[f64] {
        &self.phi
    }

    pub fn omega_logits(&self) -> &[f64] {
        &self.omega
    }

    /// Number of free parameters.
    pub fn len(&self) -> usize {
        self.lambda.len() + self.pi.len() + self.psi.len() + self.phi.len() + self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All logits in the fixed order lambda, pi, psi, phi, omega.
    pub fn logits(&self) -> impl Iterator<Item = &f64> {
        self.lambda
            .iter()
            .chain(&self.pi)
            .chain(&self.psi)
            .chain(&self.phi)
            .chain(&self.omega)
    }

    pub fn logits_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.lambda
            .iter_mut()
            .chain(&mut self.pi)
            .chain(&mut self.psi)
            .chain(&mut self.phi)
            .chain(&mut self.omega)
    }

    /// Name of the `n`th logit in [`Self::logits`] order, e.g. `pi[0,3]`.
    pub fn logit_name(&self, n: usize) -> String {
        let (i, t, f) = (self.hyper.n_lexical, self.hyper.n_structural, self.n_frames);
        let blocks = [
            ("lambda", self.lambda.len(), t.max(1)),
            ("pi", self.pi.len(), f.max(1)),
            ("psi", self.psi.len(), i.max(1)),
            ("phi", self.phi.len(), CONTEXTS),
            ("omega", self.omega.len(), CONTEXTS),
        ];
        let mut rest = n;
        for (name, len, cols) in blocks {
            if rest < len {
                return format!("{name}[{},{}]", rest / cols, rest % cols);
            }
            rest -= len;
        }
        format!("factor[{n}]")
    }

    fn check_cell(&self, cell: &CellKey) -> Result<()> {
        self.check_ids(cell.verb, cell.frame)
    }

    fn check_ids(&self, v: usize, f: usize) -> Result<()> {
        if v >= self.n_verbs {
            return Err(Error::Index {
                kind: "verb",
                index: v,
                size: self.n_verbs,
            });
        }
        if f >= self.n_frames {
            return Err(Error::Index {
                kind: "frame",
                index: f,
                size: self.n_frames,
            });
        }
        Ok(())
    }

    pub fn probabilities(&self) -> FactorProbs {
        FactorProbs::new(self)
    }
}

/// Logistic transforms of [`FactorParams`], with the frozen factors of
/// boundary models materialized as a single slot at probability one.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorProbs {
    hyper: Hyperparams,
    n_frames: usize,
    lambda: Vec<f64>,
    pi: Vec<f64>,
    psi: Vec<f64>,
    phi: Vec<f64>,
    omega: Vec<f64>,
}

impl FactorProbs {
    fn new(p: &FactorParams) -> Self {
        let lift = |logits: &[f64], frozen: bool, len: usize| -> Vec<f64> {
            if frozen {
                vec![1.0; len]
            } else {
                logits.iter().map(|&x| sigmoid(x)).collect()
            }
        };
        let (ts, is) = (p.hyper.structural_slots(), p.hyper.lexical_slots());
        let no_t = p.hyper.n_structural == 0;
        let no_i = p.hyper.n_lexical == 0;
        FactorProbs {
            hyper: p.hyper,
            n_frames: p.n_frames,
            lambda: lift(&p.lambda, no_t, p.n_verbs * ts),
            pi: lift(&p.pi, no_t, ts * p.n_frames),
            psi: lift(&p.psi, no_i, p.n_verbs * is),
            phi: lift(&p.phi, no_i, is * CONTEXTS),
            omega: lift(&p.omega, no_t, ts * CONTEXTS),
        }
    }

    pub fn lambda(&self, v: usize, t: usize) -> f64 {
        self.lambda[v * self.hyper.structural_slots() + t]
    }

    pub fn pi(&self, t: usize, f: usize) -> f64 {
        self.pi[t * self.n_frames + f]
    }

    pub fn psi(&self, v: usize, i: usize) -> f64 {
        self.psi[v * self.hyper.lexical_slots() + i]
    }

    pub fn phi(&self, i: usize, context: usize) -> f64 {
        self.phi[i * CONTEXTS + context]
    }

    pub fn omega(&self, t: usize, context: usize) -> f64 {
        self.omega[t * CONTEXTS + context]
    }

    /// `ζ` for every `(t, i)` pair of a cell, row-major in `t`.
    pub fn conjunctions(&self, cell: &CellKey) -> Vec<f64> {
        let c = cell.context();
        let mut out =
            Vec::with_capacity(self.hyper.structural_slots() * self.hyper.lexical_slots());
        for t in 0..self.hyper.structural_slots() {
            let a = self.lambda(cell.verb, t) * self.pi(t, cell.frame) * self.omega(t, c);
            for i in 0..self.hyper.lexical_slots() {
                out.push(a * self.psi(cell.verb, i) * self.phi(i, c));
            }
        }
        out
    }

    /// `Σ ln(1 - ζ)` over the cell's `(t, i)` pairs, i.e. `ln(1 - P(n))`.
    pub(crate) fn log_complement(&self, cell: &CellKey) -> f64 {
        let c = cell.context();
        let mut s = 0.0;
        for t in 0..self.hyper.structural_slots() {
            let a = self.lambda(cell.verb, t) * self.pi(t, cell.frame) * self.omega(t, c);
            for i in 0..self.hyper.lexical_slots() {
                s += (-(a * self.psi(cell.verb, i) * self.phi(i, c))).ln_1p();
            }
        }
        s
    }

    pub fn negraising(&self, cell: &CellKey) -> f64 {
        -self.log_complement(cell).exp_m1()
    }

    /// `logit(clamp(P(n)))` and whether the clamp was inactive.
    pub(crate) fn nu(&self, cell: &CellKey) -> (f64, bool) {
        let s = self.log_complement(cell);
        let p = -s.exp_m1();
        if p < PROBABILITY_FLOOR {
            (logit(PROBABILITY_FLOOR), false)
        } else if p > PROBABILITY_CEIL {
            (logit(PROBABILITY_CEIL), false)
        } else {
            // ln(1 - p) = s exactly, which keeps ν accurate near p = 1.
            (p.ln() - s, true)
        }
    }

    /// Adds `g_nu · ∂ν/∂logit` for one cell into `grad`.
    ///
    /// With `P = 1 - Π(1 - ζ)` and `ν = logit(P)`, `∂ν/∂ζ = 1 / (P (1 - ζ))`,
    /// and each factor probability `x` in `ζ` contributes `∂ζ/∂logit(x) = ζ (1 - x)`.
    pub(crate) fn backprop(&self, cell: &CellKey, g_nu: f64, grad: &mut FactorParams) {
        let s = self.log_complement(cell);
        let p = -s.exp_m1();
        if !(PROBABILITY_FLOOR..=PROBABILITY_CEIL).contains(&p) || g_nu == 0.0 {
            return;
        }
        let (v, f, c) = (cell.verb, cell.frame, cell.context());
        let (ts, is) = (self.hyper.structural_slots(), self.hyper.lexical_slots());
        let learn_t = self.hyper.n_structural > 0;
        let learn_i = self.hyper.n_lexical > 0;
        for t in 0..ts {
            let (lam, pi, om) = (self.lambda(v, t), self.pi(t, f), self.omega(t, c));
            let a = lam * pi * om;
            let mut t_coef = 0.0;
            for i in 0..is {
                let (psi, phi) = (self.psi(v, i), self.phi(i, c));
                let zeta = a * psi * phi;
                let coef = g_nu * zeta / (p * (1.0 - zeta));
                t_coef += coef;
                if learn_i {
                    grad.psi[v * is + i] += coef * (1.0 - psi);
                    grad.phi[i * CONTEXTS + c] += coef * (1.0 - phi);
                }
            }
            if learn_t {
                grad.lambda[v * ts + t] += t_coef * (1.0 - lam);
                grad.pi[t * self.n_frames + f] += t_coef * (1.0 - pi);
                grad.omega[t * CONTEXTS + c] += t_coef * (1.0 - om);
            }
        }
    }
}

/// `P(d[v,f]) = 1 - Π_t (1 - P(λ[v,t]) P(π[t,f]))`, the selection-only special case.
pub fn forward_selection(params: &FactorParams, v: usize, f: usize) -> Result<f64> {
    params.check_ids(v, f)?;
    let probs = params.probabilities();
    let s: f64 = (0..params.hyper.structural_slots())
        .map(|t| (-(probs.lambda(v, t) * probs.pi(t, f))).ln_1p())
        .sum();
    Ok(-s.exp_m1())
}

/// `P(n[v,f,j,k])` under the factorization.
pub fn forward_negraising(params: &FactorParams, cell: &CellKey) -> Result<f64> {
    params.check_cell(cell)?;
    Ok(params.probabilities().negraising(cell))
}

/// Probability that at least one `(t, i)` conjunction holds, summed over every
/// truth assignment of the conjunction events (each weighted as an
/// independent Bernoulli with probability `ζ`).
pub fn enumeration_oracle(params: &FactorParams, cell: &CellKey) -> Result<f64> {
    params.check_cell(cell)?;
    let zetas = params.probabilities().conjunctions(cell);
    if zetas.len() > ORACLE_EVENT_LIMIT {
        return Err(Error::Capacity {
            events: zetas.len(),
            limit: ORACLE_EVENT_LIMIT,
        });
    }
    let mut total = 0.0;
    for world in 1u32..(1 << zetas.len()) {
        let mut w = 1.0;
        for (bit, &z) in zetas.iter().enumerate() {
            w *= if world >> bit & 1 == 1 { z } else { 1.0 - z };
        }
        total += w;
    }
    Ok(total)
}

/// Exact probability of the boolean disjunction when the *entries* of Λ, Ψ,
/// Φ, Π and Ω are the independent variables, by enumeration.
///
/// Conjunctions that share an entry are positively correlated, so for
/// `|T| > 1` or `|I| > 1` this is at most [`forward_negraising`]; the two agree
/// for boundary models and for `|I| = |T| = 1`.
pub fn entry_enumeration(params: &FactorParams, cell: &CellKey) -> Result<f64> {
    params.check_cell(cell)?;
    let probs = params.probabilities();
    let h = params.hyper;
    let (v, f, c) = (cell.verb, cell.frame, cell.context());
    let (ts, is) = (h.structural_slots(), h.lexical_slots());
    // Variable order: per t (λ, π, ω), then per i (ψ, φ). Frozen entries are
    // constant true and are not enumerated.
    let mut vars = Vec::new();
    if h.n_structural > 0 {
        for t in 0..ts {
            vars.extend([probs.lambda(v, t), probs.pi(t, f), probs.omega(t, c)]);
        }
    }
    if h.n_lexical > 0 {
        for i in 0..is {
            vars.extend([probs.psi(v, i), probs.phi(i, c)]);
        }
    }
    if vars.len() > ENTRY_VARIABLE_LIMIT {
        return Err(Error::Capacity {
            events: vars.len(),
            limit: ENTRY_VARIABLE_LIMIT,
        });
    }
    let t_offset = 0;
    let i_offset = if h.n_structural > 0 { 3 * ts } else { 0 };
    let mut total = 0.0;
    for world in 0u32..(1 << vars.len()) {
        let on = |k: usize| world >> k & 1 == 1;
        let structural =
            h.n_structural == 0 || (0..ts).any(|t| (0..3).all(|o| on(t_offset + 3 * t + o)));
        let lexical = h.n_lexical == 0 || (0..is).any(|i| (0..2).all(|o| on(i_offset + 2 * i + o)));
        if structural && lexical {
            let mut w = 1.0;
            for (k, &p) in vars.iter().enumerate() {
                w *= if on(k) { p } else { 1.0 - p };
            }
            total += w;
        }
    }
    Ok(total)
}
