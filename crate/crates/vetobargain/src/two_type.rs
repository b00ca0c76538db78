//! Two-type example: a low type `l` and a high type `h` with linear-loss
//! Vetoer utility. Thresholds, the skimming ladder, regions, payoffs and
//! seeded play.

use ordered_float::OrderedFloat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::outcome::{Agreement, EquilibriumOutcome, TypeOutcome};
use crate::primitives::{uv_eval, ProposerUtility, VetoerForm, TOL_STRUCT};

/// Belief tolerance when locating a segment or a zone.
const MU_TOL: f64 = 1e-12;
/// Posteriors within this distance of a cutoff are snapped onto it.
const SNAP_TOL: f64 = 1e-9;
const MAX_PERIODS: usize = 100_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TwoTypeParams {
    pub l: f64,
    pub h: f64,
    pub delta: f64,
    /// Prior probability of `h`.
    pub mu0: f64,
    pub utility: ProposerUtility,
}

impl TwoTypeParams {
    pub fn new(l: f64, h: f64, delta: f64, mu0: f64) -> Result<Self> {
        let p = TwoTypeParams {
            l,
            h,
            delta,
            mu0,
            utility: ProposerUtility::LinearLoss,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_utility(mut self, utility: ProposerUtility) -> Self {
        self.utility = utility;
        self
    }

    pub fn with_mu0(mut self, mu0: f64) -> Result<Self> {
        self.mu0 = mu0;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let (l, h) = (self.l, self.h);
        if !(0.0 < l && l < 0.5 && 0.5 < h && h < 2.0 * l && 2.0 * l < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "need 0 < l < 1/2 < h < 2l < 1, got l = {l}, h = {h}"
            )));
        }
        if !(0.0..1.0).contains(&self.delta) {
            return Err(Error::InvalidParameter(format!(
                "δ = {} outside [0,1)",
                self.delta
            )));
        }
        if !(0.0..=1.0).contains(&self.mu0) {
            return Err(Error::InvalidParameter(format!(
                "μ0 = {} outside [0,1]",
                self.mu0
            )));
        }
        Ok(())
    }

    pub fn uv_h(&self, a: f64) -> f64 {
        uv_eval(self.h, a, VetoerForm::Linear)
    }

    pub fn uv_l(&self, a: f64) -> f64 {
        uv_eval(self.l, a, VetoerForm::Linear)
    }

    pub fn u(&self, a: f64) -> f64 {
        self.utility.eval(a)
    }
}

/// Region-independent objects.
#[derive(Clone, Debug, Serialize)]
pub struct Thresholds {
    pub a_star: f64,
    pub mu_star: f64,
    pub a_delta: f64,
    /// `a⁰ = 2l < a¹ < … < a^N = 1`
    pub ladder: Vec<f64>,
    /// `μ⁰ = 0 < μ¹ < …`; segment `n` is `(μⁿ, μⁿ⁺¹]`.
    pub cutoffs: Vec<f64>,
    /// Value of starting the ladder at `aⁿ`, as `(intercept, slope)` in μ.
    pub lines: Vec<(f64, f64)>,
    /// True when the cutoff recursion stopped before the top rung.
    pub cutoffs_truncated: bool,
}

impl Thresholds {
    /// Index `n` of the segment containing μ; knots go to the lower segment.
    pub fn segment(&self, mu: f64) -> usize {
        self.cutoffs
            .iter()
            .rposition(|&c| mu > c + MU_TOL)
            .unwrap_or(0)
    }

    pub fn line_value(&self, n: usize, mu: f64) -> f64 {
        let (a, b) = self.lines[n];
        a + b * mu
    }

    /// Skimming value at belief μ and the rung it starts from.
    pub fn skim_value(&self, mu: f64) -> (f64, usize) {
        let n = self.segment(mu);
        (self.line_value(n, mu), n)
    }

    /// Index `k` with `a ∈ (aᵏ, aᵏ⁺¹]`, for `a > 2l`.
    pub fn rung_below(&self, a: f64) -> usize {
        let k = self.ladder.partition_point(|&x| x < a - TOL_STRUCT);
        k.saturating_sub(1).min(self.ladder.len() - 1)
    }
}

pub fn thresholds(p: &TwoTypeParams) -> Result<Thresholds> {
    p.validate()?;
    let (l, h, d) = (p.l, p.h, p.delta);
    let a_star = 2.0 * h - 1.0;
    let mu_star = (p.u(2.0 * l) - p.u(a_star)) / (p.u(1.0) - p.u(a_star));
    let a_delta = d * a_star;

    let mut ladder = vec![2.0 * l];
    while *ladder.last().unwrap() < 1.0 {
        let prev = *ladder.last().unwrap();
        let next = (2.0 * h - d * (2.0 * h - prev)).min(1.0);
        if next <= prev {
            return Err(Error::Consistency("ladder stopped increasing".into()));
        }
        ladder.push(next);
    }

    let mut cutoffs = vec![0.0];
    let mut lines = vec![(p.u(2.0 * l), 0.0)];
    let mut truncated = false;
    for n in 1..ladder.len() {
        let mp = cutoffs[n - 1];
        let vp = if n == 1 {
            p.u(2.0 * l)
        } else {
            let (a, b) = lines[n - 2];
            a + b * mp
        };
        let un = p.u(ladder[n]);
        let slope = (un - d * vp) / (1.0 - mp);
        let icpt = (d * vp - mp * un) / (1.0 - mp);
        let (a0, b0) = lines[n - 1];
        let mu_n = (a0 - icpt) / (slope - b0);
        if !(mu_n.is_finite() && mu_n > mp + MU_TOL && mu_n < 1.0) {
            truncated = true;
            break;
        }
        cutoffs.push(mu_n);
        lines.push((icpt, slope));
    }
    Ok(Thresholds {
        a_star,
        mu_star,
        a_delta,
        ladder,
        cutoffs,
        lines,
        cutoffs_truncated: truncated,
    })
}

pub fn skim_value(p: &TwoTypeParams, mu: f64) -> Result<(f64, usize)> {
    Ok(thresholds(p)?.skim_value(mu))
}

/// Offer `a^δ` now, then 1.
pub fn leapfrog_value(p: &TwoTypeParams, mu: f64) -> f64 {
    let a_delta = p.delta * (2.0 * p.h - 1.0);
    (1.0 - mu) * p.u(a_delta) + mu * p.delta * p.u(1.0)
}

fn bisect(g: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let g_lo = g(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if (g(mid) > 0.0) == (g_lo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn mu_delta_from(p: &TwoTypeParams, th: &Thresholds) -> Result<f64> {
    let gap = |mu: f64| th.skim_value(mu).0 - leapfrog_value(p, mu);
    let k = th.cutoffs.len();
    for n in 0..k {
        let left = th.cutoffs[n];
        let right = if n + 1 < k { th.cutoffs[n + 1] } else { 1.0 };
        let on_seg = |mu: f64| th.line_value(n, mu) - leapfrog_value(p, mu);
        if on_seg(right) <= 0.0 {
            if on_seg(left) <= 0.0 {
                return Ok(left);
            }
            let root = bisect(on_seg, left, right);
            debug_assert!(gap(root).abs() < 1e-9);
            return Ok(root);
        }
    }
    Err(Error::MuDeltaUndefined { delta: p.delta })
}

/// Smallest belief at which leapfrogging does as well as skimming.
pub fn mu_delta(p: &TwoTypeParams) -> Result<f64> {
    mu_delta_from(p, &thresholds(p)?)
}

/// Rejection probability of `h` that moves belief μ to `target`.
pub fn rejection_prob(target: f64, mu: f64) -> f64 {
    target * (1.0 - mu) / ((1.0 - target) * mu)
}

fn delayed_value(p: &TwoTypeParams, mu_d: f64, mu: f64) -> f64 {
    let a_delta = p.delta * (2.0 * p.h - 1.0);
    let r = rejection_prob(mu_d, mu);
    (1.0 - mu) * p.delta * p.u(a_delta) + mu * (1.0 - r + r * p.delta * p.delta) * p.u(1.0)
}

fn mu_bar_from(p: &TwoTypeParams, mu_d: f64) -> Result<f64> {
    let g = |mu: f64| leapfrog_value(p, mu) - delayed_value(p, mu_d, mu);
    let lo = mu_d + 1e-12;
    let hi = 1.0;
    if !(g(lo) > 0.0 && g(hi) < 0.0) {
        return Err(Error::Consistency(format!(
            "no sign change for the delayed-leapfrog threshold on ({mu_d}, 1)"
        )));
    }
    Ok(bisect(g, lo, hi))
}

/// Belief above which Proposer prefers offering 1 first.
pub fn mu_bar_delta(p: &TwoTypeParams) -> Result<f64> {
    let mu_d = mu_delta(p)?;
    mu_bar_from(p, mu_d)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Skimming,
    Leapfrogging,
    DelayedLeapfrogging,
}

#[derive(Clone, Debug, Serialize)]
pub struct TwoTypeEquilibrium {
    pub params: TwoTypeParams,
    #[serde(flatten)]
    pub thresholds: Thresholds,
    pub mu_delta: f64,
    pub mu_bar_delta: f64,
    /// Segment containing `μ^δ`.
    pub m_index: usize,
    pub u_h_star: f64,
    pub a_bar_delta: f64,
    pub region: Region,
    /// μ0 sits on a region boundary; resolved to the lower region.
    pub boundary: bool,
    pub proposer_payoff: f64,
    pub h_payoff: f64,
    pub l_payoff: f64,
}

pub fn classify(p: &TwoTypeParams) -> Result<TwoTypeEquilibrium> {
    let th = thresholds(p)?;
    let mu_d = mu_delta_from(p, &th)?;
    let mu_bar = mu_bar_from(p, mu_d)?;
    let m = th.segment(mu_d);
    let u_h_star = p.uv_h(th.ladder[m]);
    let a_bar = 2.0 * p.h - p.delta * u_h_star;
    let mu0 = p.mu0;
    let boundary = (mu0 - mu_d).abs() <= MU_TOL || (mu0 - mu_bar).abs() <= MU_TOL;
    let region = if mu0 <= mu_d + MU_TOL {
        Region::Skimming
    } else if mu0 <= mu_bar + MU_TOL {
        Region::Leapfrogging
    } else {
        Region::DelayedLeapfrogging
    };
    let mut eq = TwoTypeEquilibrium {
        params: *p,
        thresholds: th,
        mu_delta: mu_d,
        mu_bar_delta: mu_bar,
        m_index: m,
        u_h_star,
        a_bar_delta: a_bar,
        region,
        boundary,
        proposer_payoff: 0.0,
        h_payoff: 0.0,
        l_payoff: 0.0,
    };
    let a_delta = eq.thresholds.a_delta;
    let (pp, hp, lp) = match region {
        Region::Skimming => {
            let (v, n) = eq.thresholds.skim_value(mu0);
            (v, p.uv_h(eq.thresholds.ladder[n]), 0.0)
        }
        Region::Leapfrogging => (leapfrog_value(p, mu0), p.delta * p.uv_h(1.0), a_delta),
        Region::DelayedLeapfrogging => (
            delayed_value(p, mu_d, mu0),
            p.uv_h(1.0),
            p.delta * (1.0 - eq.lambda(1.0)) * p.uv_l(a_delta),
        ),
    };
    eq.proposer_payoff = pp;
    eq.h_payoff = hp;
    eq.l_payoff = lp;
    Ok(eq)
}

impl TwoTypeEquilibrium {
    /// Probability of skimming at `μ^δ` that leaves `h` indifferent over `a`.
    pub fn lambda(&self, a: f64) -> f64 {
        let p = &self.params;
        let d = p.delta;
        let far = d * d * p.uv_h(1.0);
        (p.uv_h(a) - far) / (d * self.u_h_star - far)
    }

    /// Probability of staying at rung `k` after `a ∈ (aᵏ, aᵏ⁺¹]` is rejected.
    pub fn stay_prob(&self, k: usize, a: f64) -> f64 {
        let p = &self.params;
        let lad = &self.thresholds.ladder;
        if k == 0 {
            return 1.0;
        }
        let hi = p.uv_h(lad[k - 1]);
        let lo = p.uv_h(lad[k]);
        ((p.delta * hi - p.uv_h(a)) / (p.delta * (hi - lo))).clamp(0.0, 1.0)
    }

    pub fn leapfrog_value(&self, mu: f64) -> f64 {
        leapfrog_value(&self.params, mu)
    }

    pub fn skim_value(&self, mu: f64) -> f64 {
        self.thresholds.skim_value(mu).0
    }
}

/// Smallest `t` with `u_V(1,h) ≥ δᵗ u_V(2l,h)` and the payoff of offering 1
/// until then, then `2l`.
pub fn dynamic_commitment_lower_bound(p: &TwoTypeParams) -> (u32, f64) {
    if p.mu0 >= 1.0 {
        return (0, p.u(1.0));
    }
    let ratio = p.uv_h(1.0) / p.uv_h(2.0 * p.l);
    let mut t = 0u32;
    let mut dt = 1.0;
    while dt > ratio {
        t += 1;
        dt *= p.delta;
        if dt == 0.0 {
            break;
        }
    }
    (t, p.mu0 * p.u(1.0) + (1.0 - p.mu0) * dt * p.u(2.0 * p.l))
}

/// What Proposer plans to do at a belief.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Plan {
    /// Offer `a^δ`, then 1.
    Leapfrog,
    /// Offer 1 and mix between skimming and leapfrogging after a rejection.
    DelayedLeapfrog,
    /// Run down the ladder from the current segment.
    Skim,
    /// At `μᵏ`: offer `aᵏ` with probability π, else `aᵏ⁻¹`.
    SkimMix { k: usize, pi: OrderedFloat<f64> },
    /// At `μ^δ`: skim with probability λ, else leapfrog.
    SkimOrLeap { lambda: OrderedFloat<f64> },
    /// Belief concentrated on `h`: offer 1.
    HighOnly,
    /// Belief concentrated on `l`: offer `2l`.
    LowOnly,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct TwoTypeState {
    pub mu: OrderedFloat<f64>,
    pub plan: Plan,
}

impl TwoTypeState {
    pub fn new(mu: f64, plan: Plan) -> Self {
        TwoTypeState {
            mu: OrderedFloat(mu),
            plan,
        }
    }
}

/// Knobs that corrupt the strategy profile; the default leaves it intact.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Distortion {
    /// Factor on `h`'s rejection probability in the delayed branch.
    pub r_scale: f64,
    /// Added to the skim probability λ, then clamped to `[0,1]`.
    pub lambda_shift: f64,
    /// Replace this rung's offer with the one below it.
    pub skip_rung: Option<usize>,
    /// Send unexpected rejections of pooling offers to the low type.
    pub flip_off_path: bool,
}

impl Default for Distortion {
    fn default() -> Self {
        Distortion {
            r_scale: 1.0,
            lambda_shift: 0.0,
            skip_rung: None,
            flip_off_path: false,
        }
    }
}

/// Vetoer responses to one offer at one state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Response {
    pub accept_l: f64,
    pub accept_h: f64,
    pub after_rejection: TwoTypeState,
}

/// The full strategy profile behind the equilibrium.
#[derive(Clone, Debug)]
pub struct TwoTypeStrategy {
    pub eq: TwoTypeEquilibrium,
    pub distortion: Distortion,
}

impl TwoTypeStrategy {
    pub fn new(eq: TwoTypeEquilibrium) -> Self {
        TwoTypeStrategy {
            eq,
            distortion: Distortion::default(),
        }
    }

    pub fn distorted(eq: TwoTypeEquilibrium, distortion: Distortion) -> Self {
        TwoTypeStrategy { eq, distortion }
    }

    pub fn root(&self) -> TwoTypeState {
        let mu0 = self.eq.params.mu0;
        let plan = match self.eq.region {
            Region::Skimming => Plan::Skim,
            Region::Leapfrogging => Plan::Leapfrog,
            Region::DelayedLeapfrogging => Plan::DelayedLeapfrog,
        };
        TwoTypeState::new(mu0, plan)
    }

    fn rung_offer(&self, k: usize) -> f64 {
        let lad = &self.eq.thresholds.ladder;
        match self.distortion.skip_rung {
            Some(j) if j == k && k > 0 => lad[k - 1],
            _ => lad[k],
        }
    }

    pub fn offers(&self, s: &TwoTypeState) -> Vec<(f64, f64)> {
        let th = &self.eq.thresholds;
        let mu = s.mu.0;
        let mut out = match s.plan {
            Plan::Leapfrog => vec![(th.a_delta, 1.0)],
            Plan::DelayedLeapfrog | Plan::HighOnly => vec![(1.0, 1.0)],
            Plan::LowOnly => vec![(th.ladder[0], 1.0)],
            Plan::Skim => vec![(self.rung_offer(th.segment(mu)), 1.0)],
            Plan::SkimMix { k, pi } => {
                if k == 0 {
                    vec![(self.rung_offer(0), 1.0)]
                } else {
                    vec![
                        (self.rung_offer(k), pi.0),
                        (self.rung_offer(k - 1), 1.0 - pi.0),
                    ]
                }
            }
            Plan::SkimOrLeap { lambda } => vec![
                (self.rung_offer(th.segment(mu)), lambda.0),
                (th.a_delta, 1.0 - lambda.0),
            ],
        };
        out.retain(|x| x.1 > 0.0);
        out.sort_by(|a, b| a.0.total_cmp(&b.0));
        out.dedup_by(|a, b| {
            if a.0 == b.0 {
                b.1 += a.1;
                true
            } else {
                false
            }
        });
        out
    }

    fn posterior(mu: f64, acc_l: f64, acc_h: f64) -> Option<f64> {
        let rej = mu * (1.0 - acc_h) + (1.0 - mu) * (1.0 - acc_l);
        if rej <= 0.0 {
            None
        } else {
            Some(mu * (1.0 - acc_h) / rej)
        }
    }

    fn snap(mu: f64, target: f64) -> f64 {
        if (mu - target).abs() <= SNAP_TOL {
            target
        } else {
            mu
        }
    }

    pub fn respond(&self, s: &TwoTypeState, a: f64) -> Response {
        let p = &self.eq.params;
        let th = &self.eq.thresholds;
        let d = p.delta;
        let mu = s.mu.0;
        let two_l = th.ladder[0];
        let l_acc = if a <= two_l + TOL_STRUCT && a >= 0.0 {
            1.0
        } else {
            0.0
        };

        match s.plan {
            Plan::HighOnly | Plan::LowOnly => {
                let next_offer = if s.plan == Plan::HighOnly { 1.0 } else { two_l };
                let h_acc = if p.uv_h(a) >= d * p.uv_h(next_offer) - TOL_STRUCT {
                    1.0
                } else {
                    0.0
                };
                let mu_next = Self::posterior(mu, l_acc, h_acc).unwrap_or(mu);
                return Response {
                    accept_l: l_acc,
                    accept_h: h_acc,
                    after_rejection: TwoTypeState::new(mu_next, s.plan),
                };
            }
            _ => {}
        }

        if a <= th.a_delta + TOL_STRUCT {
            return Response {
                accept_l: l_acc,
                accept_h: 0.0,
                after_rejection: TwoTypeState::new(1.0, Plan::HighOnly),
            };
        }
        if a <= two_l + TOL_STRUCT {
            let next = if self.distortion.flip_off_path {
                TwoTypeState::new(0.0, Plan::LowOnly)
            } else {
                TwoTypeState::new(1.0, Plan::HighOnly)
            };
            return Response {
                accept_l: 1.0,
                accept_h: 1.0,
                after_rejection: next,
            };
        }

        let leap_zone = mu > self.eq.mu_delta + MU_TOL;
        if leap_zone && a > self.eq.a_bar_delta + TOL_STRUCT {
            let r =
                (self.distortion.r_scale * rejection_prob(self.eq.mu_delta, mu)).clamp(0.0, 1.0);
            let h_acc = 1.0 - r;
            let mu_next = Self::posterior(mu, 0.0, h_acc).unwrap_or(mu);
            let mu_next = Self::snap(mu_next, self.eq.mu_delta);
            let lambda = (self.eq.lambda(a) + self.distortion.lambda_shift).clamp(0.0, 1.0);
            return Response {
                accept_l: 0.0,
                accept_h: h_acc,
                after_rejection: TwoTypeState::new(
                    mu_next,
                    Plan::SkimOrLeap {
                        lambda: OrderedFloat(lambda),
                    },
                ),
            };
        }

        let k = th.rung_below(a);
        let seg = th.segment(mu);
        if k <= seg && k < th.cutoffs.len() {
            let target = th.cutoffs[k];
            let q = ((mu - target) / (mu * (1.0 - target))).clamp(0.0, 1.0);
            let mu_next = Self::snap(Self::posterior(mu, 0.0, q).unwrap_or(target), target);
            let plan = if k == 0 {
                Plan::LowOnly
            } else {
                Plan::SkimMix {
                    k,
                    pi: OrderedFloat(self.eq.stay_prob(k, a)),
                }
            };
            Response {
                accept_l: 0.0,
                accept_h: q,
                after_rejection: TwoTypeState::new(mu_next, plan),
            }
        } else {
            Response {
                accept_l: 0.0,
                accept_h: 0.0,
                after_rejection: TwoTypeState::new(mu, Plan::Skim),
            }
        }
    }

    /// Per-type agreements along the equilibrium path.
    pub fn on_path_outcome(&self, max_periods: usize) -> EquilibriumOutcome {
        let p = &self.eq.params;
        let mut per_type = [Vec::<Agreement>::new(), Vec::<Agreement>::new()];
        // (state, reach prob for l, reach prob for h, period)
        let mut frontier = vec![(self.root(), 1.0f64, 1.0f64, 0u32)];
        while let Some((s, pl, ph, t)) = frontier.pop() {
            if t as usize >= max_periods || (pl < 1e-16 && ph < 1e-16) {
                continue;
            }
            for (a, w) in self.offers(&s) {
                let r = self.respond(&s, a);
                if pl * w * r.accept_l > 0.0 {
                    per_type[0].push(Agreement {
                        action: a,
                        period: t,
                        prob: pl * w * r.accept_l,
                    });
                }
                if ph * w * r.accept_h > 0.0 {
                    per_type[1].push(Agreement {
                        action: a,
                        period: t,
                        prob: ph * w * r.accept_h,
                    });
                }
                let nl = pl * w * (1.0 - r.accept_l);
                let nh = ph * w * (1.0 - r.accept_h);
                if nl > 0.0 || nh > 0.0 {
                    frontier.push((r.after_rejection, nl, nh, t + 1));
                }
            }
        }
        let [al, ah] = per_type;
        EquilibriumOutcome {
            delta: p.delta,
            utility: p.utility,
            vetoer_form: VetoerForm::Linear,
            types: vec![
                TypeOutcome {
                    v: p.l,
                    weight: 1.0 - p.mu0,
                    agreements: al,
                },
                TypeOutcome {
                    v: p.h,
                    weight: p.mu0,
                    agreements: ah,
                },
            ],
            proposer_payoff: self.eq.proposer_payoff,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TraceStep {
    pub period: u32,
    pub offer: f64,
    pub accepted: bool,
    /// Proposer's belief that the Vetoer is `h` after this period.
    pub posterior: f64,
}

/// Which of the two types is playing.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Low,
    High,
}

fn draw(rng: &mut ChaCha8Rng, p: f64) -> bool {
    p >= 1.0 || (p > 0.0 && rng.random::<f64>() < p)
}

fn play(strategy: &TwoTypeStrategy, side: Side, rng: &mut ChaCha8Rng) -> Vec<TraceStep> {
    let mut s = strategy.root();
    let mut trace = Vec::new();
    for period in 0..MAX_PERIODS as u32 {
        let offers = strategy.offers(&s);
        let x: f64 = rng.random();
        let mut acc = 0.0;
        let mut a = offers[offers.len() - 1].0;
        for &(o, w) in &offers {
            acc += w;
            if x < acc {
                a = o;
                break;
            }
        }
        let r = strategy.respond(&s, a);
        let pa = match side {
            Side::Low => r.accept_l,
            Side::High => r.accept_h,
        };
        if draw(rng, pa) {
            trace.push(TraceStep {
                period,
                offer: a,
                accepted: true,
                posterior: s.mu.0,
            });
            return trace;
        }
        s = r.after_rejection;
        trace.push(TraceStep {
            period,
            offer: a,
            accepted: false,
            posterior: s.mu.0,
        });
    }
    trace
}

/// Seeded replay of equilibrium play against a given type.
pub fn simulate(eq: &TwoTypeEquilibrium, side: Side, seed: u64) -> Vec<TraceStep> {
    let strategy = TwoTypeStrategy::new(eq.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    play(&strategy, side, &mut rng)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct MonteCarlo {
    pub traces: usize,
    pub mean: f64,
    pub std_error: f64,
}

/// Proposer's realised payoff over `n` seeded traces with the type drawn from μ0.
pub fn monte_carlo(eq: &TwoTypeEquilibrium, n: usize, seed: u64) -> MonteCarlo {
    const CHUNK: usize = 4096;
    let strategy = TwoTypeStrategy::new(eq.clone());
    let p = &eq.params;
    let chunks = n.div_ceil(CHUNK);
    let (sum, sum_sq) = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let m = CHUNK.min(n - c * CHUNK);
            let mut s = 0.0;
            let mut s2 = 0.0;
            for _ in 0..m {
                let side = if draw(&mut rng, p.mu0) {
                    Side::High
                } else {
                    Side::Low
                };
                let trace = play(&strategy, side, &mut rng);
                let x = match trace.last() {
                    Some(step) if step.accepted => {
                        p.delta.powi(step.period as i32) * p.u(step.offer)
                    }
                    _ => 0.0,
                };
                s += x;
                s2 += x * x;
            }
            (s, s2)
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let nf = n as f64;
    let mean = sum / nf;
    let var = (sum_sq / nf - mean * mean).max(0.0) * nf / (nf - 1.0).max(1.0);
    MonteCarlo {
        traces: n,
        mean,
        std_error: (var / nf).sqrt(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(delta: f64, mu0: f64) -> TwoTypeParams {
        TwoTypeParams::new(0.3, 0.55, delta, mu0).unwrap()
    }

    #[test]
    fn closed_form_thresholds() {
        let th = thresholds(&params(0.9, 0.5)).unwrap();
        assert!((th.a_star - 0.1).abs() < 1e-15);
        assert!((th.mu_star - 5.0 / 9.0).abs() < 1e-12);
        let resid = 0.6 - ((1.0 - th.mu_star) * 0.1 + th.mu_star);
        assert!(resid.abs() < 1e-12);
        assert!((th.a_delta - 0.09).abs() < 1e-15);
        assert!((th.ladder[1] - 0.65).abs() < 1e-12);
        assert!((th.ladder[2] - 0.695).abs() < 1e-12);
        assert_eq!(*th.ladder.last().unwrap(), 1.0);
        let p = params(0.9, 0.5);
        for w in th.ladder.windows(2).take(th.ladder.len() - 2) {
            assert!((p.uv_h(w[1]) - 0.9 * p.uv_h(w[0])).abs() < 1e-12);
        }
    }

    #[test]
    fn skim_value_examples() {
        let p = params(0.99, 0.3);
        let th = thresholds(&p).unwrap();
        assert_eq!(th.skim_value(0.0), (0.6, 0));
        let mu1 = th.cutoffs[1];
        assert_eq!(th.skim_value(0.5 * mu1).0, 0.6);
        // Proposer is indifferent at the first cutoff.
        assert!((th.line_value(1, mu1) - th.line_value(0, mu1)).abs() < 1e-9);
        let (v, _) = th.skim_value(0.3);
        assert!((0.6..=0.62).contains(&v));
    }

    #[test]
    fn leapfrog_value_examples() {
        let p = params(0.9, 0.7);
        assert!((leapfrog_value(&p, 0.0) - 0.09).abs() < 1e-15);
        assert!((leapfrog_value(&p, 1.0) - 0.9).abs() < 1e-15);
        assert!((leapfrog_value(&p, 0.7) - 0.657).abs() < 1e-12);
    }

    #[test]
    fn golden_thresholds() {
        // Frozen from the bisection oracle.
        let expect = [
            (0.9, 0.642857142857, 0.778270),
            (0.99, 0.5625, 0.726601),
            (0.999, 0.556236, 0.722650),
        ];
        for (d, md, mb) in expect {
            let p = params(d, 0.5);
            let m = mu_delta(&p).unwrap();
            let b = mu_bar_delta(&p).unwrap();
            assert!((m - md).abs() < 1e-6, "{d}: {m}");
            assert!((b - mb).abs() < 1e-5, "{d}: {b}");
        }
    }

    #[test]
    fn impatient_proposer_cannot_leapfrog() {
        let p = params(0.2, 0.5);
        assert!(matches!(mu_delta(&p), Err(Error::MuDeltaUndefined { .. })));
        assert!(classify(&p).unwrap_err().is_gate());
    }

    #[test]
    fn regions() {
        assert_eq!(
            classify(&params(0.99, 0.1)).unwrap().region,
            Region::Skimming
        );
        assert_eq!(
            classify(&params(0.99, 0.7)).unwrap().region,
            Region::Leapfrogging
        );
        assert_eq!(
            classify(&params(0.99, 0.95)).unwrap().region,
            Region::DelayedLeapfrogging
        );
        let md = mu_delta(&params(0.99, 0.5)).unwrap();
        let eq = classify(&params(0.99, md)).unwrap();
        assert!(eq.boundary);
        assert_eq!(eq.region, Region::Skimming);
    }

    #[test]
    fn commitment_bound_example() {
        let (t, v) = dynamic_commitment_lower_bound(&params(0.99, 0.7));
        assert_eq!(t, 161);
        assert!(v > 0.73, "{v}");
        assert_eq!(dynamic_commitment_lower_bound(&params(0.99, 1.0)).1, 1.0);
    }

    #[test]
    fn leapfrog_traces() {
        let eq = classify(&params(0.99, 0.7)).unwrap();
        let tl = simulate(&eq, Side::Low, 1);
        assert_eq!(tl.len(), 1);
        assert!(tl[0].accepted && (tl[0].offer - eq.thresholds.a_delta).abs() < 1e-15);
        let th = simulate(&eq, Side::High, 1);
        assert_eq!(th.len(), 2);
        assert!(!th[0].accepted && th[1].accepted && th[1].offer == 1.0);
        assert_eq!(th[0].posterior, 1.0);
    }

    #[test]
    fn on_path_outcome_matches_payoff() {
        for mu0 in [0.1, 0.3, 0.5, 0.7, 0.9, 0.97] {
            for d in [0.9, 0.99] {
                let eq = classify(&params(d, mu0)).unwrap();
                let o = TwoTypeStrategy::new(eq.clone()).on_path_outcome(10_000);
                assert!(
                    (o.summed_payoff() - eq.proposer_payoff).abs() < 1e-9,
                    "{d} {mu0} {:?}: {} vs {}",
                    eq.region,
                    o.summed_payoff(),
                    eq.proposer_payoff
                );
                assert!((o.vetoer_payoff(1) - eq.h_payoff).abs() < 1e-9);
                assert!((o.vetoer_payoff(0) - eq.l_payoff).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn skimming_sandwich_when_patient() {
        let p = params(0.999, 0.5);
        let md = mu_delta(&p).unwrap();
        for i in 0..=20 {
            let mu = md * i as f64 / 20.0;
            let (v, _) = skim_value(&p, mu).unwrap();
            assert!(v >= 0.6 - 1e-12 && v <= 0.61, "{mu}: {v}");
        }
    }

    #[test]
    fn payoff_continuous_at_the_top() {
        let eq = classify(&params(0.999, 0.999)).unwrap();
        assert!((eq.proposer_payoff - 1.0).abs() < 0.02);
    }
}
