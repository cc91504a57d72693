//! One-chain state machine: cached likelihood terms plus the block updates.

use rand::Rng;

use super::config::{McmcConfig, Variant};
use super::gibbs::degenerate_error;
use crate::error::{FusionError, Result};
use crate::model::density::ordinal_log_prob;
use crate::model::{CutoffVector, Dataset, ParamState};
use crate::priors::{
    cutoff_log_prior, log_prior, normal_log_density, nu_tilde_log_prior, precision_log_prior,
    regression_log_prior, PriorSpec,
};
use crate::sampling::{draw_categorical, std_normal};
use crate::special::{ln_gamma, log_sum_exp, softmax_in_place, LOG_FLOOR};

/// A Metropolis–Hastings parameter block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    /// Intercept and regression coefficients.
    Beta,
    /// Log-increments of the regression cutoffs.
    ThetaTilde,
    /// Dirichlet precision intercept and coefficients.
    Omega,
    /// Annotation cutoff log-increments and confidence mean for one true
    /// category, updated jointly.
    Calibration(usize),
    Nu { annotator: usize, category: usize },
    NuTilde(usize),
}

impl std::fmt::Display for Block {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Block::Beta => write!(f, "beta"),
            Block::ThetaTilde => write!(f, "theta_tilde"),
            Block::Omega => write!(f, "omega"),
            Block::Calibration(y) => write!(f, "calibration[{}]", y + 1),
            Block::Nu {
                annotator,
                category,
            } => write!(f, "nu[{},{}]", annotator + 1, category + 1),
            Block::NuTilde(y) => write!(f, "nu_tilde[{}]", y + 1),
        }
    }
}

/// Per-block proposal scale and acceptance bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSlot {
    pub block: Block,
    pub dimension: usize,
    pub target: f64,
    pub scale: f64,
}

/// Flattened observations used by the chain.
#[derive(Debug, Clone)]
struct Prepared {
    n: usize,
    l: usize,
    p: usize,
    q: usize,
    x: Vec<f64>,
    ann_start: Vec<usize>,
    ann_seq: Vec<usize>,
    ann_score: Vec<usize>,
    ann_annotator: Vec<usize>,
    by_annotator: Vec<Vec<usize>>,
    conf_start: Vec<usize>,
    conf_seq: Vec<usize>,
    log_c: Vec<f64>,
    sum_log_c: Vec<f64>,
    u: Vec<f64>,
    ids: Vec<String>,
}

impl Prepared {
    fn new(data: &Dataset, variant: Variant) -> Prepared {
        let l = data.n_categories();
        let p = data.n_covariates();
        let q = data.n_quality();
        let mut out = Prepared {
            n: data.len(),
            l,
            p,
            q,
            x: Vec::with_capacity(data.len() * p),
            ann_start: vec![0],
            ann_seq: Vec::new(),
            ann_score: Vec::new(),
            ann_annotator: Vec::new(),
            by_annotator: vec![Vec::new(); data.n_annotators()],
            conf_start: vec![0],
            conf_seq: Vec::new(),
            log_c: Vec::new(),
            sum_log_c: Vec::new(),
            u: Vec::new(),
            ids: data.sequences.iter().map(|s| s.id.clone()).collect(),
        };
        for (i, seq) in data.sequences.iter().enumerate() {
            out.x.extend_from_slice(&seq.x);
            if variant.uses_annotations() {
                for ann in seq.annotations() {
                    out.by_annotator[ann.annotator].push(out.ann_seq.len());
                    out.ann_seq.push(i);
                    out.ann_score.push(ann.score);
                    out.ann_annotator.push(ann.annotator);
                }
            }
            if variant.uses_confidences() {
                for (im, c) in seq.confidences() {
                    out.conf_seq.push(i);
                    let mut total = 0.0;
                    for &v in c {
                        let lc = v.ln();
                        total += lc;
                        out.log_c.push(lc);
                    }
                    out.sum_log_c.push(total);
                    out.u.extend_from_slice(&im.u);
                }
            }
            out.ann_start.push(out.ann_seq.len());
            out.conf_start.push(out.conf_seq.len());
        }
        out
    }

    fn n_ann(&self) -> usize {
        self.ann_seq.len()
    }

    fn n_conf(&self) -> usize {
        self.conf_seq.len()
    }
}

/// Dirichlet log-density of confidence `k` with mean `alpha` and precision
/// `s`, given `lgs = ln Gamma(s)`.
#[inline]
fn conf_log_density(log_c: &[f64], sum_log_c: f64, s: f64, lgs: f64, alpha: &[f64]) -> f64 {
    let mut out = lgs - sum_log_c;
    for (&lc, &a) in log_c.iter().zip(alpha) {
        let sa = s * a;
        out += sa * lc - ln_gamma(sa);
    }
    out
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Metropolis acceptance: non-finite proposals are rejected without
/// consuming a uniform.
fn mh_accept<R: Rng + ?Sized>(current: f64, proposed: f64, rng: &mut R) -> bool {
    if !proposed.is_finite() {
        return false;
    }
    let u: f64 = rng.random();
    u.ln() < proposed - current
}

/// Log-scale Robbins–Monro step toward an acceptance-rate target.
pub fn adapt_scale(current: f64, accepted: bool, iteration: usize, target: f64, rate: f64) -> f64 {
    let t = iteration.max(1) as f64;
    let indicator = if accepted { 1.0 } else { 0.0 };
    (current.ln() + t.powf(-rate) * (indicator - target)).exp()
}

/// Starting point of every chain: regression and precision coefficients at
/// zero, cutoffs and confidence means at their prior means, shared annotator
/// means at the middle of their prior support and annotator means equal to
/// them. Latent categories start at the modal annotation, else the argmax of
/// the mean confidence, else the modal category under the starting
/// regression.
pub fn initial_state(data: &Dataset, prior: &PriorSpec, variant: Variant) -> Result<ParamState> {
    let l = data.n_categories();
    let theta = CutoffVector::from_increments(prior.theta_tilde_means.clone());
    let phi: Vec<CutoffVector> = prior
        .phi_tilde_means
        .iter()
        .map(|m| CutoffVector::from_increments(m.clone()))
        .collect();
    let nu_tilde: Vec<f64> = (0..l)
        .map(|y| {
            let (lo, hi) = prior.nu_tilde_support(y, &phi[y]);
            0.5 * (lo + hi)
        })
        .collect();
    let mut state = ParamState {
        beta0: 0.0,
        beta: vec![0.0; prior.n_covariates],
        theta,
        phi,
        nu: vec![nu_tilde.clone(); prior.n_annotators],
        nu_tilde,
        alpha: (0..l).map(|y| prior.alpha_prior_mean(y)).collect(),
        omega0: 0.0,
        omega: vec![0.0; prior.n_quality],
        y: Vec::with_capacity(data.len()),
    };
    let start_pmf = crate::model::ordinal_pmf(0.0, &state.theta)?;
    let start_mode = argmax(&start_pmf);
    for seq in &data.sequences {
        let y = if variant == Variant::MaximumObserved {
            seq.observed_y.ok_or_else(|| {
                FusionError::VariantMismatch(format!("sequence {} has no observed category", seq.id))
            })?
        } else {
            let mut counts = vec![0usize; l];
            if variant.uses_annotations() {
                for ann in seq.annotations() {
                    counts[ann.score] += 1;
                }
            }
            if counts.iter().any(|&c| c > 0) {
                let best = *counts.iter().max().unwrap_or(&0);
                counts.iter().position(|&c| c == best).unwrap_or(0)
            } else if variant.uses_confidences() && seq.confidences().next().is_some() {
                let mut mean = vec![0.0; l];
                for (_, c) in seq.confidences() {
                    for (m, v) in mean.iter_mut().zip(c) {
                        *m += v;
                    }
                }
                argmax(&mean)
            } else {
                start_mode
            }
        };
        state.y.push(y);
    }
    Ok(state)
}

/// Index of the largest element; ties go to the lower index.
pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (k, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = k;
        }
    }
    best
}

/// Chain state with cached likelihood terms.
#[derive(Debug, Clone)]
pub struct Sampler {
    prior: PriorSpec,
    variant: Variant,
    d: Prepared,
    state: ParamState,
    slots: Vec<BlockSlot>,
    accepted: Vec<bool>,
    /// Linear predictor per sequence.
    lin: Vec<f64>,
    /// Dirichlet precision and its log-gamma per confidence vector.
    s: Vec<f64>,
    lgs: Vec<f64>,
    /// `ln f_C` per confidence vector and category, row-major `[k * L + y]`.
    fc: Vec<f64>,
    /// `ln f_Z` per annotation and category, row-major `[j * L + y]`.
    zc: Vec<f64>,
    ann_by_y: Vec<Vec<usize>>,
    conf_by_y: Vec<Vec<usize>>,
    scratch_lin: Vec<f64>,
    scratch_s: Vec<f64>,
    scratch_lgs: Vec<f64>,
}

impl Sampler {
    /// Prepares a chain on `data` starting at `init`, or at
    /// [`initial_state`] when `init` is `None`.
    pub fn new(
        data: &Dataset,
        prior: &PriorSpec,
        variant: Variant,
        cfg: &McmcConfig,
        init: Option<ParamState>,
    ) -> Result<Sampler> {
        variant.check(data)?;
        data.validate()?;
        prior.validate()?;
        let dims = [
            ("categories", prior.categories.get(), data.n_categories()),
            ("covariates", prior.n_covariates, data.n_covariates()),
            ("quality covariates", prior.n_quality, data.n_quality()),
            ("annotators", prior.n_annotators, data.n_annotators()),
        ];
        for (what, expected, found) in dims {
            if expected != found {
                return Err(FusionError::DimensionMismatch {
                    what,
                    expected,
                    found,
                });
            }
        }
        let mut state = match init {
            Some(s) => s,
            None => initial_state(data, prior, variant)?,
        };
        state.validate()?;
        if state.y.len() != data.len() {
            return Err(FusionError::DimensionMismatch {
                what: "latent categories",
                expected: data.len(),
                found: state.y.len(),
            });
        }
        if variant == Variant::MaximumObserved {
            for (y, seq) in state.y.iter_mut().zip(&data.sequences) {
                *y = seq.observed_y.expect("checked by Variant::check");
            }
        }
        let d = Prepared::new(data, variant);
        let slots = build_slots(&d, variant, data.n_annotators(), cfg);
        let mut sampler = Sampler {
            prior: prior.clone(),
            variant,
            accepted: vec![false; slots.len()],
            slots,
            lin: vec![0.0; d.n],
            s: vec![0.0; d.n_conf()],
            lgs: vec![0.0; d.n_conf()],
            fc: vec![0.0; d.n_conf() * d.l],
            zc: vec![0.0; d.n_ann() * d.l],
            ann_by_y: vec![Vec::new(); d.l],
            conf_by_y: vec![Vec::new(); d.l],
            scratch_lin: vec![0.0; d.n],
            scratch_s: vec![0.0; d.n_conf()],
            scratch_lgs: vec![0.0; d.n_conf()],
            d,
            state,
        };
        sampler.refresh_all();
        Ok(sampler)
    }

    pub fn state(&self) -> &ParamState {
        &self.state
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn sequence_ids(&self) -> &[String] {
        &self.d.ids
    }

    pub fn slots(&self) -> &[BlockSlot] {
        &self.slots
    }

    /// Acceptance flags of the last sweep, aligned with [`Sampler::slots`].
    pub fn last_accepted(&self) -> &[bool] {
        &self.accepted
    }

    pub fn set_scale(&mut self, slot: usize, scale: f64) {
        self.slots[slot].scale = scale;
    }

    /// Log-posterior (up to a constant) of the current state, over the data
    /// layers the variant uses.
    pub fn log_posterior(&self) -> f64 {
        let l = self.d.l;
        let y = &self.state.y;
        let mut lp = log_prior(&self.state, &self.prior);
        for i in 0..self.d.n {
            lp += ordinal_log_prob(self.lin[i], &self.state.theta, y[i]);
        }
        for (j, &i) in self.d.ann_seq.iter().enumerate() {
            lp += self.zc[j * l + y[i]];
        }
        for (k, &i) in self.d.conf_seq.iter().enumerate() {
            lp += self.fc[k * l + y[i]];
        }
        lp
    }

    /// One full iteration: the latent categories (unless fixed), then every
    /// block in order. Proposal scales are left unchanged.
    pub fn sweep<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        if self.variant.samples_latent() {
            self.gibbs(rng)?;
        }
        for b in 0..self.slots.len() {
            self.update_block(b, rng);
        }
        Ok(())
    }

    /// One Metropolis–Hastings step on block `slot` at its current scale.
    /// Only that block's parameters can change.
    pub fn update_block<R: Rng + ?Sized>(&mut self, slot: usize, rng: &mut R) -> bool {
        let BlockSlot { block, scale, .. } = self.slots[slot];
        let acc = match block {
            Block::Beta => self.update_beta(scale, rng),
            Block::ThetaTilde => self.update_theta(scale, rng),
            Block::Omega => self.update_omega(scale, rng),
            Block::Calibration(y) => self.update_calibration(y, scale, rng),
            Block::Nu {
                annotator,
                category,
            } => self.update_nu(annotator, category, scale, rng),
            Block::NuTilde(y) => self.update_nu_tilde(y, scale, rng),
        };
        self.accepted[slot] = acc;
        acc
    }

    /// Applies the Robbins–Monro step to every block using the last sweep's
    /// acceptance flags.
    pub fn adapt(&mut self, iteration: usize, rate: f64) {
        for (slot, &acc) in self.slots.iter_mut().zip(&self.accepted) {
            slot.scale = adapt_scale(slot.scale, acc, iteration, slot.target, rate);
        }
    }

    /// Full conditional of every sequence's latent category from the caches.
    pub fn y_conditionals(&self) -> Result<Vec<Vec<f64>>> {
        let mut w = vec![0.0; self.d.l];
        (0..self.d.n)
            .map(|i| {
                self.conditional_weights(i, &mut w)?;
                softmax_in_place(&mut w);
                Ok(w.clone())
            })
            .collect()
    }

    fn conditional_weights(&self, i: usize, w: &mut [f64]) -> Result<()> {
        let l = self.d.l;
        let mut clamped = vec![false; l];
        for y in 0..l {
            let v = ordinal_log_prob(self.lin[i], &self.state.theta, y);
            clamped[y] = v <= LOG_FLOOR;
            w[y] = v;
        }
        for j in self.d.ann_start[i]..self.d.ann_start[i + 1] {
            for y in 0..l {
                let v = self.zc[j * l + y];
                clamped[y] |= v <= LOG_FLOOR;
                w[y] += v;
            }
        }
        for k in self.d.conf_start[i]..self.d.conf_start[i + 1] {
            for y in 0..l {
                w[y] += self.fc[k * l + y];
            }
        }
        if clamped.iter().all(|&c| c) {
            return Err(degenerate_error(&self.d.ids[i]));
        }
        Ok(())
    }

    fn gibbs<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        let mut w = vec![0.0; self.d.l];
        for i in 0..self.d.n {
            self.conditional_weights(i, &mut w)?;
            softmax_in_place(&mut w);
            self.state.y[i] = draw_categorical(&w, rng);
        }
        self.group_by_y();
        Ok(())
    }

    fn group_by_y(&mut self) {
        for v in self.ann_by_y.iter_mut().chain(self.conf_by_y.iter_mut()) {
            v.clear();
        }
        for (j, &i) in self.d.ann_seq.iter().enumerate() {
            self.ann_by_y[self.state.y[i]].push(j);
        }
        for (k, &i) in self.d.conf_seq.iter().enumerate() {
            self.conf_by_y[self.state.y[i]].push(k);
        }
    }

    fn refresh_all(&mut self) {
        let p = self.d.p;
        for i in 0..self.d.n {
            self.lin[i] = self.state.linear_predictor(&self.d.x[i * p..(i + 1) * p]);
        }
        self.refresh_precision();
        for y in 0..self.d.l {
            self.refresh_fc_column(y);
            self.refresh_zc_column(y);
        }
        self.group_by_y();
    }

    fn refresh_precision(&mut self) {
        let q = self.d.q;
        for k in 0..self.d.n_conf() {
            let s = self.state.precision(&self.d.u[k * q..(k + 1) * q]);
            self.s[k] = s;
            self.lgs[k] = ln_gamma(s);
        }
    }

    fn refresh_fc_column(&mut self, y: usize) {
        let l = self.d.l;
        let alpha = &self.state.alpha[y];
        for k in 0..self.d.n_conf() {
            self.fc[k * l + y] = conf_log_density(
                &self.d.log_c[k * l..(k + 1) * l],
                self.d.sum_log_c[k],
                self.s[k],
                self.lgs[k],
                alpha,
            );
        }
    }

    fn refresh_zc_column(&mut self, y: usize) {
        let l = self.d.l;
        for j in 0..self.d.n_ann() {
            let nu = self.state.nu[self.d.ann_annotator[j]][y];
            self.zc[j * l + y] = ordinal_log_prob(nu, &self.state.phi[y], self.d.ann_score[j]);
        }
    }

    fn y_log_lik(&self, lin: &[f64], theta: &CutoffVector) -> f64 {
        lin.iter()
            .zip(&self.state.y)
            .map(|(&m, &y)| ordinal_log_prob(m, theta, y))
            .sum()
    }

    fn update_beta<R: Rng + ?Sized>(&mut self, scale: f64, rng: &mut R) -> bool {
        let p = self.d.p;
        let beta0 = self.state.beta0 + scale * std_normal(rng);
        let beta: Vec<f64> = self
            .state
            .beta
            .iter()
            .map(|b| b + scale * std_normal(rng))
            .collect();
        let mut lin = std::mem::take(&mut self.scratch_lin);
        for (i, m) in lin.iter_mut().enumerate() {
            *m = beta0 + dot(&self.d.x[i * p..(i + 1) * p], &beta);
        }
        let current = self.y_log_lik(&self.lin, &self.state.theta)
            + regression_log_prior(&self.prior, self.state.beta0, &self.state.beta);
        let proposed = self.y_log_lik(&lin, &self.state.theta)
            + regression_log_prior(&self.prior, beta0, &beta);
        let acc = mh_accept(current, proposed, rng);
        if acc {
            self.state.beta0 = beta0;
            self.state.beta = beta;
            std::mem::swap(&mut self.lin, &mut lin);
        }
        self.scratch_lin = lin;
        acc
    }

    fn update_theta<R: Rng + ?Sized>(&mut self, scale: f64, rng: &mut R) -> bool {
        let raw: Vec<f64> = self
            .state
            .theta
            .increments()
            .iter()
            .map(|r| r + scale * std_normal(rng))
            .collect();
        let theta = CutoffVector::from_increments(raw);
        let means = &self.prior.theta_tilde_means;
        let var = self.prior.cutoff_log_var;
        let current = self.y_log_lik(&self.lin, &self.state.theta)
            + cutoff_log_prior(self.state.theta.increments(), means, var);
        let proposed = if theta.is_strictly_increasing() {
            self.y_log_lik(&self.lin, &theta) + cutoff_log_prior(theta.increments(), means, var)
        } else {
            f64::NAN
        };
        let acc = mh_accept(current, proposed, rng);
        if acc {
            self.state.theta = theta;
        }
        acc
    }

    fn update_omega<R: Rng + ?Sized>(&mut self, scale: f64, rng: &mut R) -> bool {
        let l = self.d.l;
        let q = self.d.q;
        let omega0 = self.state.omega0 + scale * std_normal(rng);
        let omega: Vec<f64> = self
            .state
            .omega
            .iter()
            .map(|w| w + scale * std_normal(rng))
            .collect();
        let mut s_new = std::mem::take(&mut self.scratch_s);
        let mut lgs_new = std::mem::take(&mut self.scratch_lgs);
        let mut current = precision_log_prior(&self.prior, self.state.omega0, &self.state.omega);
        let mut proposed = precision_log_prior(&self.prior, omega0, &omega);
        for k in 0..self.d.n_conf() {
            let y = self.state.y[self.d.conf_seq[k]];
            current += self.fc[k * l + y];
            let s = (omega0 + dot(&self.d.u[k * q..(k + 1) * q], &omega)).exp();
            let lgs = ln_gamma(s);
            s_new[k] = s;
            lgs_new[k] = lgs;
            proposed += conf_log_density(
                &self.d.log_c[k * l..(k + 1) * l],
                self.d.sum_log_c[k],
                s,
                lgs,
                &self.state.alpha[y],
            );
        }
        let acc = mh_accept(current, proposed, rng);
        if acc {
            self.state.omega0 = omega0;
            self.state.omega = omega;
            std::mem::swap(&mut self.s, &mut s_new);
            std::mem::swap(&mut self.lgs, &mut lgs_new);
            for y in 0..l {
                self.refresh_fc_column(y);
            }
        }
        self.scratch_s = s_new;
        self.scratch_lgs = lgs_new;
        acc
    }

    fn update_calibration<R: Rng + ?Sized>(&mut self, y: usize, scale: f64, rng: &mut R) -> bool {
        let l = self.d.l;
        let move_phi = self.variant.uses_annotations() && l > 2;
        let move_alpha = self.variant.uses_confidences();
        let phi_cur = &self.state.phi[y];
        let phi_new = if move_phi {
            CutoffVector::from_increments(
                phi_cur
                    .increments()
                    .iter()
                    .map(|r| r + scale * std_normal(rng))
                    .collect(),
            )
        } else {
            phi_cur.clone()
        };
        let log_alpha_cur: Vec<f64> = self.state.alpha[y].iter().map(|a| a.ln()).collect();
        let log_alpha_new = if move_alpha {
            let eps: Vec<f64> = (0..l).map(|_| std_normal(rng)).collect();
            let eps_mean = eps.iter().sum::<f64>() / l as f64;
            let mut v: Vec<f64> = log_alpha_cur
                .iter()
                .zip(&eps)
                .map(|(la, e)| la + scale * (e - eps_mean))
                .collect();
            let lse = log_sum_exp(&v);
            for x in v.iter_mut() {
                *x -= lse;
            }
            v
        } else {
            log_alpha_cur.clone()
        };
        let alpha_new: Vec<f64> = log_alpha_new.iter().map(|v| v.exp()).collect();

        let nu_tilde = self.state.nu_tilde[y];
        let var = self.prior.cutoff_log_var;
        let means = &self.prior.phi_tilde_means[y];
        let conc = &self.prior.alpha_concentration[y];
        // Dirichlet prior kernel plus the log-Jacobian of the log-ratio map.
        let alpha_term = |la: &[f64]| -> f64 { la.iter().zip(conc).map(|(v, k)| k * v).sum() };

        let mut current = 0.0;
        let mut proposed = 0.0;
        if move_phi {
            current += cutoff_log_prior(phi_cur.increments(), means, var)
                + nu_tilde_log_prior(&self.prior, y, nu_tilde, phi_cur);
            proposed += cutoff_log_prior(phi_new.increments(), means, var)
                + nu_tilde_log_prior(&self.prior, y, nu_tilde, &phi_new);
            if !phi_new.is_strictly_increasing() {
                proposed = f64::NAN;
            }
            for &j in &self.ann_by_y[y] {
                current += self.zc[j * l + y];
                let nu = self.state.nu[self.d.ann_annotator[j]][y];
                proposed += ordinal_log_prob(nu, &phi_new, self.d.ann_score[j]);
            }
        }
        if move_alpha {
            current += alpha_term(&log_alpha_cur);
            proposed += alpha_term(&log_alpha_new);
            for &k in &self.conf_by_y[y] {
                current += self.fc[k * l + y];
                proposed += conf_log_density(
                    &self.d.log_c[k * l..(k + 1) * l],
                    self.d.sum_log_c[k],
                    self.s[k],
                    self.lgs[k],
                    &alpha_new,
                );
            }
        }
        let acc = mh_accept(current, proposed, rng);
        if acc {
            if move_phi {
                self.state.phi[y] = phi_new;
                self.refresh_zc_column(y);
            }
            if move_alpha {
                self.state.alpha[y] = alpha_new;
                self.refresh_fc_column(y);
            }
        }
        acc
    }

    fn update_nu<R: Rng + ?Sized>(&mut self, a: usize, y: usize, scale: f64, rng: &mut R) -> bool {
        let l = self.d.l;
        let nu_cur = self.state.nu[a][y];
        let nu_new = nu_cur + scale * std_normal(rng);
        let var = self.prior.nu_conditional_var;
        let mean = self.state.nu_tilde[y];
        let phi = &self.state.phi[y];
        let mut current = normal_log_density(nu_cur, mean, var);
        let mut proposed = normal_log_density(nu_new, mean, var);
        for &j in &self.d.by_annotator[a] {
            if self.state.y[self.d.ann_seq[j]] == y {
                current += self.zc[j * l + y];
                proposed += ordinal_log_prob(nu_new, phi, self.d.ann_score[j]);
            }
        }
        let acc = mh_accept(current, proposed, rng);
        if acc {
            self.state.nu[a][y] = nu_new;
            for &j in &self.d.by_annotator[a] {
                self.zc[j * l + y] = ordinal_log_prob(nu_new, phi, self.d.ann_score[j]);
            }
        }
        acc
    }

    fn update_nu_tilde<R: Rng + ?Sized>(&mut self, y: usize, scale: f64, rng: &mut R) -> bool {
        let cur = self.state.nu_tilde[y];
        let new = cur + scale * std_normal(rng);
        let var = self.prior.nu_conditional_var;
        let phi = &self.state.phi[y];
        let target = |m: f64| -> f64 {
            nu_tilde_log_prior(&self.prior, y, m, phi)
                + self
                    .state
                    .nu
                    .iter()
                    .map(|row| normal_log_density(row[y], m, var))
                    .sum::<f64>()
        };
        let current = target(cur);
        let proposed = target(new);
        let acc = mh_accept(current, proposed, rng);
        if acc {
            self.state.nu_tilde[y] = new;
        }
        acc
    }
}

fn build_slots(d: &Prepared, variant: Variant, n_annotators: usize, cfg: &McmcConfig) -> Vec<BlockSlot> {
    let l = d.l;
    let mut blocks: Vec<(Block, usize)> = vec![(Block::Beta, 1 + d.p)];
    if l > 2 {
        blocks.push((Block::ThetaTilde, l - 2));
    }
    if variant.samples_latent() {
        if variant.uses_confidences() {
            blocks.push((Block::Omega, 1 + d.q));
        }
        let calib_dim = if variant.uses_annotations() { l - 2 } else { 0 }
            + if variant.uses_confidences() { l - 1 } else { 0 };
        if calib_dim > 0 {
            blocks.extend((0..l).map(|y| (Block::Calibration(y), calib_dim)));
        }
        if variant.uses_annotations() {
            for annotator in 0..n_annotators {
                for category in 0..l {
                    blocks.push((
                        Block::Nu {
                            annotator,
                            category,
                        },
                        1,
                    ));
                }
            }
            blocks.extend((0..l).map(|y| (Block::NuTilde(y), 1)));
        }
    }
    blocks
        .into_iter()
        .map(|(block, dimension)| BlockSlot {
            block,
            dimension,
            target: if dimension > 1 {
                cfg.adapt_target_block
            } else {
                cfg.adapt_target_univariate
            },
            scale: cfg.initial_step,
        })
        .collect()
}
