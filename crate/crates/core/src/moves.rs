//! Reversible-jump moves over the change-point configuration.
//!
//! Five moves are available at every iteration: birth and death of a single
//! change point, a shift of an existing change point, and the compound moves
//! that add or remove a short-lived state as a pair of change points in one
//! step. Move probabilities are tied together so that
//! `P(k) b_k = P(k+1) d_{k+1}` and
//! `P(k) P_t(kt) a_{k,kt} = P(k+2) P_t(kt+2) r_{k+2,kt+2}`,
//! which keeps the trans-dimensional kernel reversible.
//!
//! Acceptance ratios are computed as differences of the full unnormalised
//! log posterior plus the proposal terms. This is algebraically identical to
//! the factored prior-ratio forms and makes each reverse move the exact
//! negation of its forward move.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::likelihood::{log_likelihood_bounds, log_location_prior};
use crate::model::{pair_qualifies, ChangePointState, Hyperparams, IntensityParams};
use crate::proposal::ProposalDistribution;
use crate::trace::Trace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MoveKind {
    Birth,
    Death,
    Shift,
    AddShortState,
    RemoveShortState,
}

/// Per-state move proposal probabilities; always sums to one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MoveProbabilities {
    pub birth: f64,
    pub death: f64,
    pub add_pair: f64,
    pub remove_pair: f64,
    pub shift: f64,
}

impl MoveProbabilities {
    pub fn sum(&self) -> f64 {
        self.birth + self.death + self.add_pair + self.remove_pair + self.shift
    }
}

/// Result of one attempted move.
#[derive(Debug, Clone)]
pub struct MoveOutcome {
    pub kind: MoveKind,
    pub log_acceptance: f64,
    pub accepted: bool,
    /// The proposed state; `None` when the proposal was structurally invalid
    /// (collision, empty dwelling, escape from the dwelling) and was
    /// auto-rejected.
    pub proposed: Option<ChangePointState>,
}

impl MoveOutcome {
    fn auto_reject(kind: MoveKind) -> Self {
        Self {
            kind,
            log_acceptance: f64::NEG_INFINITY,
            accepted: false,
            proposed: None,
        }
    }
}

/// Positions of a short-lived-state pair centred at `xi` with duration `d`.
pub fn pair_positions(xi: f64, d: f64) -> (f64, f64) {
    (xi - 0.5 * d, xi + 0.5 * d)
}

/// True with probability `exp(-lambda_D * d)`: the duration test that gates
/// add-short-state proposals, calibrated so the probability equals
/// `p_accept` at `d = tau`.
pub fn duration_accept<R: Rng + ?Sized>(d: f64, hyper: &Hyperparams, rng: &mut R) -> bool {
    rng.random::<f64>() < (-hyper.lambda_d() * d).exp()
}

/// The move kernel: trace, proposal distribution, and hyperparameters, plus
/// the derived proposal constants.
pub struct MoveKernel<'a> {
    trace: &'a Trace,
    dist: &'a ProposalDistribution,
    hyper: &'a Hyperparams,
    /// Proportionality constant for birth/death, derived from `c_cap`.
    c_star: f64,
    /// Proportionality constant for add/remove, derived from `gamma_cap`.
    gamma_star: f64,
    ln_fact: Vec<f64>,
}

impl<'a> MoveKernel<'a> {
    pub fn new(
        trace: &'a Trace,
        dist: &'a ProposalDistribution,
        hyper: &'a Hyperparams,
    ) -> crate::Result<Self> {
        hyper.validate()?;
        let k_max = hyper.k_max;
        let mut max_bd = 0.0f64;
        for k in 0..=k_max {
            max_bd = max_bd.max(birth_min(hyper, k) + death_min(hyper, k));
        }
        let mut max_ar = 0.0f64;
        for k in 0..=k_max {
            for kt in 0..=k {
                max_ar = max_ar.max(add_min(hyper, k, kt) + remove_min(hyper, k, kt));
            }
        }
        let c_star = if max_bd > 0.0 {
            hyper.c_cap / max_bd
        } else {
            0.0
        };
        let gamma_star = if max_ar > 0.0 {
            hyper.gamma_cap / max_ar
        } else {
            0.0
        };
        let mut ln_fact = Vec::with_capacity(2 * k_max + 6);
        let mut acc = 0.0;
        ln_fact.push(0.0);
        for v in 1..=(2 * k_max + 5) {
            acc += (v as f64).ln();
            ln_fact.push(acc);
        }
        Ok(Self {
            trace,
            dist,
            hyper,
            c_star,
            gamma_star,
            ln_fact,
        })
    }

    pub fn hyper(&self) -> &Hyperparams {
        self.hyper
    }

    pub fn dist(&self) -> &ProposalDistribution {
        self.dist
    }

    /// Move proposal probabilities in state `(k, k_t)`.
    pub fn move_probabilities(&self, k: usize, k_t: usize) -> MoveProbabilities {
        let h = self.hyper;
        let birth = self.c_star * birth_min(h, k);
        let death = self.c_star * death_min(h, k);
        let add_pair = self.gamma_star * add_min(h, k, k_t);
        let remove_pair = self.gamma_star * remove_min(h, k, k_t);
        let shift = 1.0 - birth - death - add_pair - remove_pair;
        MoveProbabilities {
            birth,
            death,
            add_pair,
            remove_pair,
            shift,
        }
    }

    fn ln_poisson(&self, k: usize, lambda: f64) -> f64 {
        k as f64 * lambda.ln() - lambda - self.ln_fact[k]
    }

    /// Unnormalised log posterior of the change-point configuration:
    /// Poisson priors on k and k_t, the order-statistic location prior, and
    /// the step likelihood.
    pub fn log_state_posterior(&self, state: &ChangePointState, params: &IntensityParams) -> f64 {
        let lp_k = self.ln_poisson(state.k(), self.hyper.lambda);
        let lp_kt = self.ln_poisson(state.k_t(), self.hyper.lambda_t);
        let lp_s = log_location_prior(state.interior(), self.trace.l_end())
            .expect("states hold strictly increasing locations");
        let ll = log_likelihood_bounds(self.trace, state.bounds(), state.counts(), params);
        lp_k + lp_kt + lp_s + ll
    }

    // ---- birth / death ---------------------------------------------------

    /// Deterministic birth core: insert a change point at `s_star`.
    /// Returns the proposed state and its log acceptance ratio, or `None`
    /// when the proposal is structurally invalid.
    pub fn birth_at(
        &self,
        state: &ChangePointState,
        params: &IntensityParams,
        s_star: f64,
    ) -> Option<(ChangePointState, f64)> {
        if state.k() + 1 > self.hyper.k_max {
            return None;
        }
        if state.interior().contains(&s_star) {
            return None; // grid collision
        }
        let mut interior: Vec<f64> = state.interior().to_vec();
        let pos = interior.partition_point(|&t| t < s_star);
        interior.insert(pos, s_star);
        let prop = ChangePointState::fit(self.trace, &interior, params, self.hyper.tau).ok()?;
        let logr = self.log_birth_ratio(state, &prop, s_star, params);
        Some((prop, logr))
    }

    /// Deterministic death core: remove interior change point `j`
    /// (1-based index into the location vector).
    pub fn death_of(
        &self,
        state: &ChangePointState,
        params: &IntensityParams,
        j: usize,
    ) -> Option<(ChangePointState, f64)> {
        let k = state.k();
        if k == 0 || j < 1 || j > k {
            return None;
        }
        let removed = state.s()[j];
        let mut interior: Vec<f64> = state.interior().to_vec();
        interior.remove(j - 1);
        let prop = ChangePointState::fit(self.trace, &interior, params, self.hyper.tau).ok()?;
        // death acceptance is the reciprocal of the birth that reinserts the
        // removed point into the proposed state
        let logr = -self.log_birth_ratio(&prop, state, removed, params);
        Some((prop, logr))
    }

    /// Log acceptance ratio of the birth `base -> born` at `s_star`:
    /// posterior ratio times `d_{k+1} / (b_k q(s*) (k+1))`, with `q` the
    /// proposal density at the born location. The Jacobian is one.
    fn log_birth_ratio(
        &self,
        base: &ChangePointState,
        born: &ChangePointState,
        s_star: f64,
        params: &IntensityParams,
    ) -> f64 {
        let k = base.k();
        let post = self.log_state_posterior(born, params) - self.log_state_posterior(base, params);
        let p_base = self.move_probabilities(k, base.k_t());
        let p_born = self.move_probabilities(k + 1, born.k_t());
        let q = self
            .dist
            .density_at(s_star)
            .expect("birth locations lie on the proposal grid");
        post + p_born.death.ln() - p_base.birth.ln() - q.ln() - ((k + 1) as f64).ln()
    }

    pub fn propose_birth<R: Rng + ?Sized>(
        &self,
        state: &ChangePointState,
        params: &IntensityParams,
        rng: &mut R,
    ) -> MoveOutcome {
        let s_star = self.dist.sample_location(rng);
        match self.birth_at(state, params, s_star) {
            Some((prop, logr)) => finish(MoveKind::Birth, prop, logr, rng),
            None => MoveOutcome::auto_reject(MoveKind::Birth),
        }
    }

    pub fn propose_death<R: Rng + ?Sized>(
        &self,
        state: &ChangePointState,
        params: &IntensityParams,
        rng: &mut R,
    ) -> MoveOutcome {
        let k = state.k();
        if k == 0 {
            return MoveOutcome::auto_reject(MoveKind::Death);
        }
        let j = rng.random_range(1..=k);
        match self.death_of(state, params, j) {
            Some((prop, logr)) => finish(MoveKind::Death, prop, logr, rng),
            None => MoveOutcome::auto_reject(MoveKind::Death),
        }
    }

    // ---- shift -----------------------------------------------------------

    /// Deterministic shift core: move interior change point `j` to the grid
    /// point `new_idx`. The proposal is drawn from the pmf restricted to the
    /// open interval between the neighbouring change points, so the ratio
    /// uses the restricted (shared-normaliser) masses.
    pub fn shift_to(
        &self,
        state: &ChangePointState,
        params: &IntensityParams,
        j: usize,
        new_idx: usize,
    ) -> Option<(ChangePointState, f64)> {
        let k = state.k();
        if k == 0 || j < 1 || j > k {
            return None;
        }
        let s = state.s();
        let s_star = self.dist.grid()[new_idx];
        if s_star <= s[j - 1] || s_star >= s[j + 1] {
            return None;
        }
        if s_star == s[j] {
            // identity proposal: acceptance ratio one, state unchanged
            return Some((state.clone(), 0.0));
        }
        let mut interior: Vec<f64> = state.interior().to_vec();
        interior[j - 1] = s_star;
        let prop = ChangePointState::fit(self.trace, &interior, params, self.hyper.tau).ok()?;
        let post =
            self.log_state_posterior(&prop, params) - self.log_state_posterior(state, params);
        let q_old = self.dist.pmf_at(s[j]).ok()?;
        let q_new = self.dist.pmf_at(s_star).ok()?;
        Some((prop, post + q_old.ln() - q_new.ln()))
    }

    pub fn propose_shift<R: Rng + ?Sized>(
        &self,
        state: &ChangePointState,
        params: &IntensityParams,
        rng: &mut R,
    ) -> MoveOutcome {
        let k = state.k();
        if k == 0 {
            return MoveOutcome::auto_reject(MoveKind::Shift);
        }
        let j = rng.random_range(1..=k);
        let s = state.s();
        let grid = self.dist.grid();
        let lo = grid.partition_point(|&g| g <= s[j - 1]);
        let hi = grid.partition_point(|&g| g < s[j + 1]);
        if lo >= hi {
            return MoveOutcome::auto_reject(MoveKind::Shift);
        }
        let Some(new_idx) = self.dist.sample_restricted(lo..hi, rng) else {
            return MoveOutcome::auto_reject(MoveKind::Shift);
        };
        match self.shift_to(state, params, j, new_idx) {
            Some((prop, logr)) => finish(MoveKind::Shift, prop, logr, rng),
            None => MoveOutcome::auto_reject(MoveKind::Shift),
        }
    }

    // ---- compound short-lived-state moves ---------------------------------

    /// Deterministic add core: insert the pair `(t1, t2)` (grid times) into
    /// a single dwelling. Auto-rejects (returns `None`) on collisions, on
    /// straddling an existing change point, on an empty dwelling after the
    /// insert, or when the refitted state does not classify the inserted
    /// points as a short-lived pair with each other, since the reverse
    /// remove could never select them.
    pub fn add_pair_at(
        &self,
        state: &ChangePointState,
        params: &IntensityParams,
        t1: f64,
        t2: f64,
    ) -> Option<(ChangePointState, f64)> {
        if state.k() + 2 > self.hyper.k_max || t2 <= t1 {
            return None;
        }
        if state
            .interior()
            .iter()
            .any(|&t| t == t1 || t == t2 || (t > t1 && t < t2))
        {
            return None;
        }
        let mut interior: Vec<f64> = state.interior().to_vec();
        let pos = interior.partition_point(|&t| t < t1);
        interior.insert(pos, t2);
        interior.insert(pos, t1);
        let prop = ChangePointState::fit(self.trace, &interior, params, self.hyper.tau).ok()?;
        let i1 = pos + 1; // index of t1 within the location vector
        if !prop.is_short(i1)
            || !prop.is_short(i1 + 1)
            || !pair_qualifies(prop.s(), prop.counts(), i1, self.hyper.tau)
        {
            return None;
        }
        let logr = self.log_add_pair_ratio(state, &prop, i1, params)?;
        Some((prop, logr))
    }

    /// Deterministic remove core: delete the pair whose left point is the
    /// interior change point `i1` (with its right neighbour `i1 + 1`).
    pub fn remove_pair_of(
        &self,
        state: &ChangePointState,
        params: &IntensityParams,
        i1: usize,
    ) -> Option<(ChangePointState, f64)> {
        let k = state.k();
        if i1 < 1 || i1 + 1 > k {
            return None;
        }
        let mut interior: Vec<f64> = state.interior().to_vec();
        interior.remove(i1); // right point (index i1+1 within s)
        interior.remove(i1 - 1);
        let prop = ChangePointState::fit(self.trace, &interior, params, self.hyper.tau).ok()?;
        // reciprocal of the add that reinserts this pair into the proposal
        let pos = prop.interior().partition_point(|&t| t < state.s()[i1]);
        let logr = -self.log_add_pair_ratio(&prop, state, pos + 1, params)?;
        Some((prop, logr))
    }

    /// Log acceptance ratio of the add move `base -> prop`, where the pair
    /// occupies interior indices `i1, i1 + 1` of `prop`.
    ///
    /// The proposal probabilities are accounted exactly as simulated: the
    /// forward side is `a_{k,kt}` times the discretised exponential duration
    /// mass, the centre-anchor mass, and the duration-gate survival
    /// probability `exp(-lambda_D d)`; the reverse side is `r_{k+2,kt*}`
    /// times the probability of selecting this pair through either of its
    /// endpoints, `(1/kt*)(1/Sigma_t1 + 1/Sigma_t2)`. The target carries
    /// one factor of the grid spacing per change point, matching the
    /// birth/death kernel, and the Jacobian of `(xi, d) -> (t1, t2)` is one.
    fn log_add_pair_ratio(
        &self,
        base: &ChangePointState,
        prop: &ChangePointState,
        i1: usize,
        params: &IntensityParams,
    ) -> Option<f64> {
        let t1 = prop.s()[i1];
        let t2 = prop.s()[i1 + 1];
        let d = t2 - t1;
        let xi = 0.5 * (t1 + t2);
        let spacing = self.dist.spacing();
        let anchor_mass = self.center_mass(xi)?;
        let lambda_d = self.hyper.lambda_d();
        // geometric duration mass P(d = m spacing), plus the gate survival
        let decay = (-lambda_d * spacing).exp();
        let log_p_duration = (1.0 - decay).ln() - lambda_d * (d - spacing);
        let log_gate = -lambda_d * d;
        let kt_star = prop.k_t();
        let sigma_t1 = self.count_remove_partners(prop, i1);
        let sigma_t2 = self.count_remove_partners(prop, i1 + 1);
        if kt_star == 0 || sigma_t1 == 0 || sigma_t2 == 0 {
            return None;
        }
        let log_reverse_sel =
            (1.0 / sigma_t1 as f64 + 1.0 / sigma_t2 as f64).ln() - (kt_star as f64).ln();
        let post = self.log_state_posterior(prop, params) - self.log_state_posterior(base, params)
            + 2.0 * spacing.ln();
        let p_base = self.move_probabilities(base.k(), base.k_t());
        let p_prop = self.move_probabilities(prop.k(), kt_star);
        Some(
            post + p_prop.remove_pair.ln() + log_reverse_sel
                - p_base.add_pair.ln()
                - log_p_duration
                - anchor_mass.ln()
                - log_gate,
        )
    }

    /// Proposal mass of a pair centre. Centres lie either on the grid or on
    /// the half-grid midway between two adjacent grid points; in the latter
    /// case the centre is anchored to (and carries the mass of) its left
    /// grid neighbour.
    fn center_mass(&self, xi: f64) -> Option<f64> {
        let spacing = self.dist.spacing();
        let g0 = self.dist.grid()[0];
        let raw = (xi - g0) / spacing;
        let nearest = raw.round();
        let anchor = if (raw - nearest).abs() < 0.25 {
            nearest as isize
        } else {
            raw.floor() as isize // half-grid centre: left neighbour
        };
        if anchor < 0 || anchor as usize >= self.dist.len() {
            return None;
        }
        Some(self.dist.pmf()[anchor as usize])
    }

    /// Number of flagged neighbours of interior change point `i` that form a
    /// valid short-lived pair with it (the Sigma_remove count).
    pub fn count_remove_partners(&self, state: &ChangePointState, i: usize) -> usize {
        let k = state.k();
        let s = state.s();
        let n = state.counts();
        let tau = self.hyper.tau;
        let mut c = 0;
        if i >= 2 && state.is_short(i - 1) && pair_qualifies(s, n, i - 1, tau) {
            c += 1;
        }
        if i < k && state.is_short(i + 1) && pair_qualifies(s, n, i, tau) {
            c += 1;
        }
        c
    }

    pub fn propose_add_pair<R: Rng + ?Sized>(
        &self,
        state: &ChangePointState,
        params: &IntensityParams,
        rng: &mut R,
    ) -> MoveOutcome {
        if state.k() + 2 > self.hyper.k_max {
            return MoveOutcome::auto_reject(MoveKind::AddShortState);
        }
        let spacing = self.dist.spacing();
        // duration: the exponential law discretised to grid multiples so
        // that both endpoints land on grid points
        let decay = (-self.hyper.lambda_d() * spacing).exp();
        let u: f64 = rng.random();
        let m = 1 + (u.max(f64::MIN_POSITIVE).ln() / decay.ln()).floor() as usize;
        let d = m as f64 * spacing;
        if !duration_accept(d, self.hyper, rng) {
            return MoveOutcome::auto_reject(MoveKind::AddShortState);
        }
        let anchor = self.dist.sample_index(rng);
        let xi = if m.is_multiple_of(2) {
            self.dist.grid()[anchor]
        } else {
            self.dist.grid()[anchor] + 0.5 * spacing
        };
        let (t1, t2) = pair_positions(xi, d);
        let (Ok(i1), Ok(i2)) = (self.dist.nearest_index(t1), self.dist.nearest_index(t2)) else {
            return MoveOutcome::auto_reject(MoveKind::AddShortState);
        };
        if i2 - i1 != m {
            // an endpoint fell off the grid and was clamped
            return MoveOutcome::auto_reject(MoveKind::AddShortState);
        }
        let (g1, g2) = (self.dist.grid()[i1], self.dist.grid()[i2]);
        match self.add_pair_at(state, params, g1, g2) {
            Some((prop, logr)) => finish(MoveKind::AddShortState, prop, logr, rng),
            None => MoveOutcome::auto_reject(MoveKind::AddShortState),
        }
    }

    pub fn propose_remove_pair<R: Rng + ?Sized>(
        &self,
        state: &ChangePointState,
        params: &IntensityParams,
        rng: &mut R,
    ) -> MoveOutcome {
        if state.k_t() < 2 {
            return MoveOutcome::auto_reject(MoveKind::RemoveShortState);
        }
        let flagged: Vec<usize> = (1..=state.k()).filter(|&i| state.is_short(i)).collect();
        let first = flagged[rng.random_range(0..flagged.len())];
        let mut partners = Vec::with_capacity(2);
        let (s, n, tau) = (state.s(), state.counts(), self.hyper.tau);
        if first >= 2 && state.is_short(first - 1) && pair_qualifies(s, n, first - 1, tau) {
            partners.push(first - 1);
        }
        if first < state.k() && state.is_short(first + 1) && pair_qualifies(s, n, first, tau) {
            partners.push(first + 1);
        }
        if partners.is_empty() {
            return MoveOutcome::auto_reject(MoveKind::RemoveShortState);
        }
        let second = partners[rng.random_range(0..partners.len())];
        let i1 = first.min(second);
        match self.remove_pair_of(state, params, i1) {
            Some((prop, logr)) => finish(MoveKind::RemoveShortState, prop, logr, rng),
            None => MoveOutcome::auto_reject(MoveKind::RemoveShortState),
        }
    }

    // ---- iteration ---------------------------------------------------------

    /// Draws a move kind from the per-state probabilities, executes it, and
    /// returns the resulting state (unchanged on rejection) plus the outcome.
    pub fn step<R: Rng + ?Sized>(
        &self,
        state: &ChangePointState,
        params: &IntensityParams,
        rng: &mut R,
    ) -> (ChangePointState, MoveOutcome) {
        let probs = self.move_probabilities(state.k(), state.k_t());
        let u: f64 = rng.random();
        let outcome = if u < probs.birth {
            self.propose_birth(state, params, rng)
        } else if u < probs.birth + probs.death {
            self.propose_death(state, params, rng)
        } else if u < probs.birth + probs.death + probs.add_pair {
            self.propose_add_pair(state, params, rng)
        } else if u < probs.birth + probs.death + probs.add_pair + probs.remove_pair {
            self.propose_remove_pair(state, params, rng)
        } else {
            self.propose_shift(state, params, rng)
        };
        let next = if outcome.accepted {
            outcome
                .proposed
                .clone()
                .expect("accepted moves carry a state")
        } else {
            state.clone()
        };
        (next, outcome)
    }
}

fn finish<R: Rng + ?Sized>(
    kind: MoveKind,
    proposed: ChangePointState,
    log_acceptance: f64,
    rng: &mut R,
) -> MoveOutcome {
    let accepted = if log_acceptance >= 0.0 {
        true
    } else {
        rng.random::<f64>().max(f64::MIN_POSITIVE).ln() < log_acceptance
    };
    MoveOutcome {
        kind,
        log_acceptance,
        accepted,
        proposed: Some(proposed),
    }
}

// min(1, P(k+1)/P(k)) and companions, with boundary conditions.

fn birth_min(h: &Hyperparams, k: usize) -> f64 {
    if k + 1 > h.k_max {
        return 0.0;
    }
    (h.lambda / (k + 1) as f64).min(1.0)
}

fn death_min(h: &Hyperparams, k: usize) -> f64 {
    if k == 0 {
        return 0.0;
    }
    (k as f64 / h.lambda).min(1.0)
}

fn add_min(h: &Hyperparams, k: usize, kt: usize) -> f64 {
    if k + 2 > h.k_max {
        return 0.0;
    }
    let rk = h.lambda * h.lambda / ((k + 1) as f64 * (k + 2) as f64);
    let rt = h.lambda_t * h.lambda_t / ((kt + 1) as f64 * (kt + 2) as f64);
    (rk * rt).min(1.0)
}

fn remove_min(h: &Hyperparams, k: usize, kt: usize) -> f64 {
    if kt < 2 || k < 2 {
        return 0.0;
    }
    let rk = (k as f64 * (k - 1) as f64) / (h.lambda * h.lambda);
    let rt = (kt as f64 * (kt - 1) as f64) / (h.lambda_t * h.lambda_t);
    (rk * rt).min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::proposal::build_proposal;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params() -> IntensityParams {
        IntensityParams::new(1000.0, 0.0, 1000.0, 10_000.0).unwrap()
    }

    fn step_trace() -> Trace {
        // noise-free two-level trace: 1000 photons for 20 frames, then 0
        let mut y = vec![1000.0; 20];
        y.extend(vec![0.0; 20]);
        Trace::from_frames(y, 1.0).unwrap()
    }

    #[test]
    fn probabilities_sum_and_caps() {
        let tr = step_trace();
        let dist = build_proposal(&tr, 10, 100.0, 1.0).unwrap();
        let hyper = Hyperparams::default();
        let kernel = MoveKernel::new(&tr, &dist, &hyper).unwrap();
        let mut max_bd = 0.0f64;
        let mut max_ar = 0.0f64;
        for k in 0..=hyper.k_max {
            for kt in 0..=k {
                let p = kernel.move_probabilities(k, kt);
                assert_abs_diff_eq!(p.sum(), 1.0, epsilon = 1e-12);
                assert!(p.birth >= 0.0 && p.death >= 0.0 && p.shift >= 0.0);
                assert!(p.add_pair >= 0.0 && p.remove_pair >= 0.0);
                max_bd = max_bd.max(p.birth + p.death);
                max_ar = max_ar.max(p.add_pair + p.remove_pair);
            }
        }
        assert_abs_diff_eq!(max_bd, hyper.c_cap, epsilon = 1e-12);
        assert_abs_diff_eq!(max_ar, hyper.gamma_cap, epsilon = 1e-12);

        // boundaries
        let p0 = kernel.move_probabilities(0, 0);
        assert_eq!(p0.death, 0.0);
        assert_eq!(p0.remove_pair, 0.0);
        let pmax = kernel.move_probabilities(hyper.k_max, 0);
        assert_eq!(pmax.birth, 0.0);
        assert_eq!(pmax.add_pair, 0.0);
        // where the Poisson ratio exceeds one the birth probability saturates
        assert_abs_diff_eq!(p0.birth, kernel.c_star, epsilon = 1e-15);
        assert_abs_diff_eq!(
            kernel.move_probabilities(1, 0).birth,
            kernel.c_star,
            epsilon = 1e-15
        );
    }

    #[test]
    fn detailed_balance_identities() {
        // P(k) b_k = P(k+1) d_{k+1} and the pair analogue, over all states.
        let tr = step_trace();
        let dist = build_proposal(&tr, 10, 100.0, 1.0).unwrap();
        let hyper = Hyperparams::default();
        let kernel = MoveKernel::new(&tr, &dist, &hyper).unwrap();
        let pois = |k: usize, lambda: f64| -> f64 {
            let mut lf = 0.0;
            for v in 2..=k {
                lf += (v as f64).ln();
            }
            (k as f64 * lambda.ln() - lambda - lf).exp()
        };
        for k in 0..hyper.k_max {
            let b = kernel.move_probabilities(k, 0).birth;
            let d = kernel.move_probabilities(k + 1, 0).death;
            assert_abs_diff_eq!(
                pois(k, hyper.lambda) * b,
                pois(k + 1, hyper.lambda) * d,
                epsilon = 1e-15
            );
        }
        for k in 0..hyper.k_max - 1 {
            for kt in 0..=k {
                let a = kernel.move_probabilities(k, kt).add_pair;
                let r = kernel.move_probabilities(k + 2, kt + 2).remove_pair;
                let lhs = pois(k, hyper.lambda) * pois(kt, hyper.lambda_t) * a;
                let rhs = pois(k + 2, hyper.lambda) * pois(kt + 2, hyper.lambda_t) * r;
                assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(rhs.abs()).max(1e-300));
            }
        }
    }

    #[test]
    fn duration_test_trivial_points() {
        let hyper = Hyperparams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        // d = 0 always accepts
        for _ in 0..100 {
            assert!(duration_accept(0.0, &hyper, &mut rng));
        }
        // d = tau accepts with probability p = 0.5
        let n = 100_000;
        let hits = (0..n)
            .filter(|_| duration_accept(hyper.tau, &hyper, &mut rng))
            .count();
        let sigma = (n as f64 * 0.25).sqrt();
        assert!((hits as f64 - n as f64 * 0.5).abs() < 3.0 * sigma);
    }

    #[test]
    fn pair_positions_formula() {
        let (t1, t2) = pair_positions(50.0, 4.0);
        assert_abs_diff_eq!(t1, 48.0);
        assert_abs_diff_eq!(t2, 52.0);
    }

    #[test]
    fn shift_identity_is_unit_acceptance() {
        let tr = step_trace();
        let dist = build_proposal(&tr, 10, 100.0, 1.0).unwrap();
        let hyper = Hyperparams::default();
        let kernel = MoveKernel::new(&tr, &dist, &hyper).unwrap();
        let p = params();
        let st = ChangePointState::fit(&tr, &[20.5], &p, hyper.tau).unwrap();
        let idx = dist.nearest_index(20.5).unwrap();
        let (prop, logr) = kernel.shift_to(&st, &p, 1, idx).unwrap();
        assert_eq!(prop, st);
        assert_eq!(logr, 0.0);
    }

    #[test]
    fn shift_toward_true_step_gains_likelihood() {
        let tr = step_trace();
        let dist = build_proposal(&tr, 10, 100.0, 1.0).unwrap();
        let hyper = Hyperparams::default();
        let kernel = MoveKernel::new(&tr, &dist, &hyper).unwrap();
        let p = params();
        // true boundary is at t = 20; start displaced at 15.5
        let st = ChangePointState::fit(&tr, &[15.5], &p, hyper.tau).unwrap();
        let toward = dist.nearest_index(19.5).unwrap();
        let (_, logr) = kernel.shift_to(&st, &p, 1, toward).unwrap();
        assert!(
            logr > 0.0,
            "shift toward the step should be favoured: {logr}"
        );
    }

    #[test]
    fn birth_at_true_step_is_favoured() {
        let tr = step_trace();
        let dist = build_proposal(&tr, 10, 100.0, 1.0).unwrap();
        let hyper = Hyperparams::default();
        let kernel = MoveKernel::new(&tr, &dist, &hyper).unwrap();
        let p = params();
        let flat = ChangePointState::flat(&tr, &p, hyper.tau).unwrap();
        let s_star = dist.grid()[dist.nearest_index(19.5).unwrap()];
        let (_, logr) = kernel.birth_at(&flat, &p, s_star).unwrap();
        assert!(
            logr > 0.0,
            "birth at the true step should exceed one: {logr}"
        );
    }

    #[test]
    fn birth_death_round_trip_restores_state() {
        let tr = step_trace();
        let dist = build_proposal(&tr, 10, 100.0, 1.0).unwrap();
        let hyper = Hyperparams::default();
        let kernel = MoveKernel::new(&tr, &dist, &hyper).unwrap();
        let p = params();
        let st = ChangePointState::fit(&tr, &[10.5, 19.5], &p, hyper.tau).unwrap();
        let s_star = dist.grid()[25];
        let (born, logr_birth) = kernel.birth_at(&st, &p, s_star).unwrap();
        assert_eq!(born.k(), 3);
        let j = born.s().iter().position(|&t| t == s_star).unwrap();
        let (back, logr_death) = kernel.death_of(&born, &p, j).unwrap();
        assert_eq!(back, st);
        assert_abs_diff_eq!(logr_birth + logr_death, 0.0, epsilon = 1e-10);
    }

    #[test]
    fn birth_collision_rejected() {
        let tr = step_trace();
        let dist = build_proposal(&tr, 10, 100.0, 1.0).unwrap();
        let hyper = Hyperparams::default();
        let kernel = MoveKernel::new(&tr, &dist, &hyper).unwrap();
        let p = params();
        let g = dist.grid()[12];
        let st = ChangePointState::fit(&tr, &[g], &p, hyper.tau).unwrap();
        assert!(kernel.birth_at(&st, &p, g).is_none());
    }

    fn blink_trace() -> (Trace, IntensityParams) {
        // one fluorophore with a two-frame blink, then photobleached
        let mut y = vec![1000.0; 12];
        y.extend(vec![0.0; 2]);
        y.extend(vec![1000.0; 12]);
        y.extend(vec![0.0; 14]);
        (
            Trace::from_frames(y, 1.0).unwrap(),
            IntensityParams::new(1000.0, 0.0, 1000.0, 10_000.0).unwrap(),
        )
    }

    #[test]
    fn add_remove_round_trip_restores_state() {
        let (tr, p) = blink_trace();
        let dist = build_proposal(&tr, 5, 10.0, 1.0).unwrap();
        let hyper = Hyperparams {
            lambda_t: 0.5, // make pair moves non-negligible
            ..Hyperparams::default()
        };
        let kernel = MoveKernel::new(&tr, &dist, &hyper).unwrap();
        let st = ChangePointState::fit(&tr, &[26.0], &p, hyper.tau).unwrap();
        let t1 = dist.grid()[dist.nearest_index(11.5).unwrap()];
        let t2 = dist.grid()[dist.nearest_index(13.5).unwrap()];
        let (with_pair, logr_add) = kernel.add_pair_at(&st, &p, t1, t2).unwrap();
        assert_eq!(with_pair.k(), 3);
        assert_eq!(with_pair.k_t(), 2);
        let i1 = with_pair.s().iter().position(|&t| t == t1).unwrap();
        let (back, logr_rem) = kernel.remove_pair_of(&with_pair, &p, i1).unwrap();
        assert_eq!(back, st);
        assert_abs_diff_eq!(logr_add + logr_rem, 0.0, epsilon = 1e-10);
    }

    #[test]
    fn add_pair_straddling_existing_point_rejected() {
        let (tr, p) = blink_trace();
        let dist = build_proposal(&tr, 5, 10.0, 1.0).unwrap();
        let hyper = Hyperparams::default();
        let kernel = MoveKernel::new(&tr, &dist, &hyper).unwrap();
        let st = ChangePointState::fit(&tr, &[13.5], &p, hyper.tau).unwrap();
        assert!(kernel.add_pair_at(&st, &p, 11.5, 15.5).is_none());
    }

    #[test]
    fn sigma_remove_counts_both_partners() {
        // counts (1,0,1,0,1): the two interior flagged points each see two
        // valid partners, the outer ones only one.
        let mut y = vec![1000.0; 6];
        y.extend(vec![0.0; 3]);
        y.extend(vec![1000.0; 6]);
        y.extend(vec![0.0; 3]);
        y.extend(vec![1000.0; 6]);
        let tr = Trace::from_frames(y, 1.0).unwrap();
        let p = IntensityParams::new(1000.0, 0.0, 1000.0, 10_000.0).unwrap();
        let dist = build_proposal(&tr, 3, 10.0, 1.0).unwrap();
        let hyper = Hyperparams::default();
        let kernel = MoveKernel::new(&tr, &dist, &hyper).unwrap();
        let st = ChangePointState::fit(&tr, &[6.0, 9.0, 15.0, 18.0], &p, hyper.tau).unwrap();
        assert_eq!(st.counts(), &[1, 0, 1, 0, 1]);
        assert_eq!(st.k_t(), 4);
        assert_eq!(kernel.count_remove_partners(&st, 2), 2);
        assert_eq!(kernel.count_remove_partners(&st, 3), 2);
        assert_eq!(kernel.count_remove_partners(&st, 1), 1);
        assert_eq!(kernel.count_remove_partners(&st, 4), 1);
    }

    #[test]
    fn birth_ratio_tracks_proposal_mass() {
        // the q(s*) term comes from pmf_at: swapping the proposal
        // distribution shifts the birth log ratio by exactly the log mass
        // ratio
        let tr = step_trace();
        let uniform = build_proposal(&tr, 10, 100.0, 1.0).unwrap();
        let peaked = build_proposal(&tr, 5, 4.0, 1.0).unwrap();
        let hyper = Hyperparams::default();
        let p = params();
        let k_u = MoveKernel::new(&tr, &uniform, &hyper).unwrap();
        let k_p = MoveKernel::new(&tr, &peaked, &hyper).unwrap();
        let flat = ChangePointState::flat(&tr, &p, hyper.tau).unwrap();
        let s_star = uniform.grid()[31];
        let (_, r_u) = k_u.birth_at(&flat, &p, s_star).unwrap();
        let (_, r_p) = k_p.birth_at(&flat, &p, s_star).unwrap();
        let expect = uniform.pmf_at(s_star).unwrap().ln() - peaked.pmf_at(s_star).unwrap().ln();
        assert_abs_diff_eq!(r_p - r_u, expect, epsilon = 1e-12);
    }

    #[test]
    fn step_explores_and_keeps_invariants() {
        let (tr, p) = blink_trace();
        let dist = build_proposal(&tr, 5, 10.0, 1.0).unwrap();
        let hyper = Hyperparams {
            lambda: 4.0,
            lambda_t: 2.0,
            ..Hyperparams::default()
        };
        let kernel = MoveKernel::new(&tr, &dist, &hyper).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut st = ChangePointState::flat(&tr, &p, hyper.tau).unwrap();
        let mut seen = std::collections::BTreeSet::new();
        for _ in 0..4000 {
            let (next, outcome) = kernel.step(&st, &p, &mut rng);
            seen.insert(format!("{:?}", outcome.kind));
            st = next;
            assert!(st.k() <= hyper.k_max);
            assert!(st.k_t() <= st.k());
            assert!(st.k_t().is_multiple_of(2));
            assert!(st.counts().windows(2).all(|w| w[0] != w[1]));
        }
        assert!(seen.contains("Birth"));
        assert!(seen.contains("Death"));
        assert!(seen.contains("Shift"));
    }
}
