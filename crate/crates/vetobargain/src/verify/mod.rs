//! One-shot deviation checks on encoded strategy profiles, plus a small
//! finite-horizon oracle.

mod oracle;
mod skim_profile;
mod two_type_profile;

pub use oracle::{finite_horizon_oracle, OracleTables};
pub use skim_profile::{SkimProfile, SkimState};
pub use two_type_profile::TwoTypeProfile;

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt::Debug;
use std::hash::Hash;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};

const MAX_STATES: usize = 20_000;
const WITNESSES: usize = 5;
const REACH_TOL: f64 = 1e-14;
const BAYES_TOL: f64 = 1e-6;

/// Strategies and beliefs for both players, indexed by a belief descriptor.
pub trait StrategyProfile: Sync {
    type State: Clone + Eq + Hash + Debug + Send + Sync;

    fn root(&self) -> Self::State;
    fn delta(&self) -> f64;
    fn proposer_utility(&self, a: f64) -> f64;
    fn vetoer_utility(&self, v: f64, a: f64) -> f64;
    /// Proposer's offer distribution as `(offer, prob)`.
    fn offers(&self, s: &Self::State) -> Vec<(f64, f64)>;
    fn accept_prob(&self, s: &Self::State, v: f64, a: f64) -> f64;
    /// Belief as weighted type representatives.
    fn belief(&self, s: &Self::State) -> Vec<(f64, f64)>;
    fn after_rejection(&self, s: &Self::State, a: f64) -> Self::State;
    /// Types the Vetoer check should always include.
    fn critical_types(&self) -> Vec<f64>;
    /// Bound on the spread of either player's stage utility.
    fn utility_span(&self) -> f64;

    fn acceptance_mass(&self, s: &Self::State, a: f64) -> f64 {
        let b = self.belief(s);
        let total: f64 = b.iter().map(|x| x.1).sum();
        if total <= 0.0 {
            return 0.0;
        }
        b.iter()
            .map(|&(v, w)| w * self.accept_prob(s, v, a))
            .sum::<f64>()
            / total
    }
}

#[derive(Clone, Debug)]
pub struct CheckConfig {
    pub offer_grid: Vec<f64>,
    pub type_sample: Vec<f64>,
    pub horizon: usize,
    pub eps: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Player {
    Proposer,
    Vetoer,
}

#[derive(Clone, Debug, Serialize)]
pub struct Witness {
    pub player: Player,
    pub state: String,
    pub deviation: String,
    pub gain: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DeviationReport {
    pub max_proposer_gain: f64,
    pub max_vetoer_gain: f64,
    pub witnesses: Vec<Witness>,
    pub horizon: usize,
    pub tail_bound: f64,
    pub eps: f64,
    pub on_path_states: usize,
    pub off_path_states: usize,
    /// Proposer's value at the root from rolling the profile forward.
    pub on_path_value: f64,
    /// Largest sup-distance between encoded and Bayes posteriors on path.
    pub bayes_error: f64,
    pub encoding_errors: Vec<String>,
    pub passed: bool,
}

struct Evaluator<'a, P: StrategyProfile> {
    profile: &'a P,
    v_memo: HashMap<(P::State, usize), f64>,
}

impl<'a, P: StrategyProfile> Evaluator<'a, P> {
    fn new(profile: &'a P) -> Self {
        Evaluator {
            profile,
            v_memo: HashMap::new(),
        }
    }

    fn value(&mut self, s: &P::State, depth: usize) -> f64 {
        if depth == 0 {
            return 0.0;
        }
        if let Some(&x) = self.v_memo.get(&(s.clone(), depth)) {
            return x;
        }
        let x = self
            .profile
            .offers(s)
            .into_iter()
            .map(|(a, w)| w * self.q(s, a, depth))
            .sum();
        self.v_memo.insert((s.clone(), depth), x);
        x
    }

    fn q(&mut self, s: &P::State, a: f64, depth: usize) -> f64 {
        let p = self.profile;
        let m = p.acceptance_mass(s, a);
        let mut x = m * p.proposer_utility(a);
        if m < 1.0 {
            let next = p.after_rejection(s, a);
            x += (1.0 - m) * p.delta() * self.value(&next, depth - 1);
        }
        x
    }
}

struct VetoerEvaluator<'a, P: StrategyProfile> {
    profile: &'a P,
    v: f64,
    memo: HashMap<(P::State, usize), f64>,
}

impl<'a, P: StrategyProfile> VetoerEvaluator<'a, P> {
    fn value(&mut self, s: &P::State, depth: usize) -> f64 {
        if depth == 0 {
            return 0.0;
        }
        if let Some(&x) = self.memo.get(&(s.clone(), depth)) {
            return x;
        }
        let x = self
            .profile
            .offers(s)
            .into_iter()
            .map(|(a, w)| w * self.follow(s, a, depth).0)
            .sum();
        self.memo.insert((s.clone(), depth), x);
        x
    }

    /// (value of following the profile, value of accepting, value of rejecting)
    fn follow(&mut self, s: &P::State, a: f64, depth: usize) -> (f64, f64, f64) {
        let p = self.profile;
        let acc = p.accept_prob(s, self.v, a);
        let acc_val = p.vetoer_utility(self.v, a);
        let next = p.after_rejection(s, a);
        let rej_val = p.delta() * self.value(&next, depth - 1);
        (acc * acc_val + (1.0 - acc) * rej_val, acc_val, rej_val)
    }
}

/// Sup distance between the CDFs of two weighted point sets.
fn belief_distance(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let ta: f64 = a.iter().map(|x| x.1).sum();
    let tb: f64 = b.iter().map(|x| x.1).sum();
    if ta <= 0.0 || tb <= 0.0 {
        return if ta <= 0.0 && tb <= 0.0 { 0.0 } else { 1.0 };
    }
    let mut pts: Vec<(f64, f64)> = a
        .iter()
        .map(|&(v, w)| (v, w / ta))
        .chain(b.iter().map(|&(v, w)| (v, -w / tb)))
        .collect();
    pts.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut run = 0.0f64;
    let mut worst = 0.0f64;
    let mut i = 0;
    while i < pts.len() {
        let v = pts[i].0;
        while i < pts.len() && pts[i].0 <= v + 1e-12 {
            run += pts[i].1;
            i += 1;
        }
        worst = worst.max(run.abs());
    }
    worst
}

fn candidate_offers(grid: &[f64], support: &[(f64, f64)]) -> Vec<f64> {
    let mut out: Vec<f64> = grid
        .iter()
        .copied()
        .chain(support.iter().map(|x| x.0))
        .collect();
    out.sort_by(|a, b| a.total_cmp(b));
    out.dedup();
    out
}

/// Checks every one-shot deviation at on-path states and one layer of
/// off-path states reached by a single Proposer deviation.
pub fn eps_equilibrium<P: StrategyProfile>(
    profile: &P,
    cfg: &CheckConfig,
) -> Result<DeviationReport> {
    let delta = profile.delta();
    let h = cfg.horizon;
    let tail_bound = delta.powi(h as i32) * profile.utility_span();
    if tail_bound >= cfg.eps / 10.0 {
        return Err(Error::Precondition(format!(
            "horizon {h} too short: tail bound {tail_bound:.3e} ≥ ε/10"
        )));
    }
    if cfg.offer_grid.is_empty() {
        return Err(Error::Precondition("empty offer grid".into()));
    }
    let mut encoding_errors = Vec::new();

    // On-path states by breadth-first search.
    let root = profile.root();
    let mut on_path: Vec<P::State> = vec![root.clone()];
    let mut seen: HashSet<P::State> = HashSet::from([root.clone()]);
    let mut queue = VecDeque::from([(root.clone(), 0usize)]);
    let mut bayes_error = 0.0f64;
    while let Some((s, d)) = queue.pop_front() {
        let offers = profile.offers(&s);
        let total: f64 = offers.iter().map(|x| x.1).sum();
        if offers.is_empty() || (total - 1.0).abs() > 1e-12 || offers.iter().any(|x| x.1 < 0.0) {
            encoding_errors.push(format!("offer distribution at {s:?} sums to {total}"));
        }
        if d >= h {
            continue;
        }
        let belief = profile.belief(&s);
        for (a, _) in offers {
            let mut posterior = Vec::with_capacity(belief.len());
            for &(v, w) in &belief {
                let p = profile.accept_prob(&s, v, a);
                if !(0.0..=1.0).contains(&p) {
                    encoding_errors.push(format!("accept prob {p} for v={v} at {s:?}, a={a}"));
                }
                if w * (1.0 - p) > 0.0 {
                    posterior.push((v, w * (1.0 - p)));
                }
            }
            let reach: f64 = posterior.iter().map(|x| x.1).sum();
            if reach <= REACH_TOL {
                continue;
            }
            let next = profile.after_rejection(&s, a);
            bayes_error = bayes_error.max(belief_distance(&posterior, &profile.belief(&next)));
            if seen.insert(next.clone()) {
                if seen.len() > MAX_STATES {
                    return Err(Error::Consistency(format!(
                        "more than {MAX_STATES} on-path states"
                    )));
                }
                on_path.push(next.clone());
                queue.push_back((next, d + 1));
            }
        }
    }
    if bayes_error > BAYES_TOL {
        encoding_errors.push(format!("on-path posterior off by {bayes_error:.3e}"));
    }

    // One layer of off-path states.
    let off_path: Vec<P::State> = {
        let mut set: HashSet<P::State> = HashSet::new();
        let mut out = Vec::new();
        for s in &on_path {
            for &a in &cfg.offer_grid {
                let n = profile.after_rejection(s, a);
                if !seen.contains(&n) && set.insert(n.clone()) {
                    out.push(n);
                }
            }
        }
        out
    };
    let states: Vec<(P::State, bool)> = on_path
        .iter()
        .map(|s| (s.clone(), true))
        .chain(off_path.iter().map(|s| (s.clone(), false)))
        .collect();

    let proposer: Vec<Witness> = states
        .par_iter()
        .map_init(
            || Evaluator::new(profile),
            |ev, (s, _)| {
                let offers = profile.offers(s);
                let follow = ev.value(s, h);
                let (mut best, mut arg) = (f64::NEG_INFINITY, f64::NAN);
                for a in candidate_offers(&cfg.offer_grid, &offers) {
                    let q = ev.q(s, a, h);
                    if q > best {
                        best = q;
                        arg = a;
                    }
                }
                Witness {
                    player: Player::Proposer,
                    state: format!("{s:?}"),
                    deviation: format!("offer {arg:.6}"),
                    gain: best - follow,
                }
            },
        )
        .collect();

    let on_path_value = Evaluator::new(profile).value(&root, h);

    let vetoer: Vec<Witness> = cfg
        .type_sample
        .par_iter()
        .flat_map_iter(|&v| {
            let mut ev = VetoerEvaluator {
                profile,
                v,
                memo: HashMap::new(),
            };
            let mut worst: Option<Witness> = None;
            for (s, on) in &states {
                let support = profile.offers(s);
                let offers = if *on {
                    candidate_offers(&cfg.offer_grid, &support)
                } else {
                    support.iter().map(|x| x.0).collect()
                };
                for a in offers {
                    let (follow, acc, rej) = ev.follow(s, a, h);
                    let gain = acc.max(rej) - follow;
                    if worst.as_ref().is_none_or(|w| gain > w.gain) {
                        let what = if acc >= rej { "accept" } else { "reject" };
                        worst = Some(Witness {
                            player: Player::Vetoer,
                            state: format!("{s:?}"),
                            deviation: format!("type {v:.6} should {what} offer {a:.6}"),
                            gain,
                        });
                    }
                }
            }
            worst
        })
        .collect();

    let max_of = |w: &[Witness]| w.iter().map(|x| x.gain).fold(0.0f64, f64::max);
    let max_proposer_gain = max_of(&proposer);
    let max_vetoer_gain = max_of(&vetoer);
    let mut witnesses: Vec<Witness> = proposer
        .into_iter()
        .chain(vetoer)
        .filter(|w| w.gain > 0.0)
        .collect();
    witnesses.sort_by(|a, b| b.gain.total_cmp(&a.gain));
    witnesses.truncate(WITNESSES);

    let passed =
        max_proposer_gain < cfg.eps && max_vetoer_gain < cfg.eps && encoding_errors.is_empty();
    Ok(DeviationReport {
        max_proposer_gain,
        max_vetoer_gain,
        witnesses,
        horizon: h,
        tail_bound,
        eps: cfg.eps,
        on_path_states: on_path.len(),
        off_path_states: off_path.len(),
        on_path_value,
        bayes_error,
        encoding_errors,
        passed,
    })
}

/// `n` evenly spaced types in `[lo, hi]` merged with the critical ones inside it.
pub fn type_sample(lo: f64, hi: f64, n: usize, critical: &[f64]) -> Vec<f64> {
    let mut out = crate::primitives::even_points(lo, hi, n);
    out.extend(critical.iter().copied().filter(|&v| v >= lo && v <= hi));
    out.sort_by(|a, b| a.total_cmp(b));
    out.dedup_by(|a, b| (*a - *b).abs() <= 1e-15);
    out
}
