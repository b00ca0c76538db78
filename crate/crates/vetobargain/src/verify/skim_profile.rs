use serde::Serialize;

use crate::primitives::{uv_eval, Belief, VetoerForm};
use crate::skim::SkimSolution;

use super::StrategyProfile;

const SAME_OFFER: f64 = 1e-15;
const IND_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum SkimState {
    /// Remaining types are the nodes `1..=q` (plus any nonpositive lump).
    Trunc(usize),
    /// After an unexpected rejection: belief is a point mass.
    OffPath,
}

/// Skimming equilibrium on the type grid as a full strategy profile.
#[derive(Clone, Debug)]
pub struct SkimProfile {
    pub sol: SkimSolution,
    /// Belief point after an unexpected rejection.
    pub off_path_point: f64,
    /// Added to the last offer of every on-path run; zero for the equilibrium.
    pub terminal_shift: f64,
    lower: f64,
    upper: f64,
}

impl SkimProfile {
    pub fn new(sol: SkimSolution, prior: &Belief) -> Self {
        let base = prior.base();
        let (lo, hi) = (base.lower(), base.upper());
        let off_path_point = if lo <= 0.0 {
            0.0
        } else if hi <= 0.5 {
            hi
        } else {
            lo
        };
        SkimProfile {
            sol,
            off_path_point,
            terminal_shift: 0.0,
            lower: prior.lower(),
            upper: prior.upper(),
        }
    }

    pub fn with_terminal_shift(mut self, shift: f64) -> Self {
        self.terminal_shift = shift;
        self
    }

    pub fn support(&self) -> (f64, f64) {
        (self.lower, self.upper)
    }

    fn uv(&self, v: f64, a: f64) -> f64 {
        uv_eval(v, a, VetoerForm::Quadratic)
    }

    fn on_path_offer(&self, q: usize) -> f64 {
        let a = self.sol.offer_at(q);
        if self.sol.t[q] == 0 {
            a + self.terminal_shift
        } else {
            a
        }
    }

    fn off_path_offer(&self) -> f64 {
        (2.0 * self.off_path_point.max(0.0)).min(1.0)
    }

    /// Node whose cell holds `v`; `None` for the nonpositive lump.
    fn node(&self, v: f64) -> Option<usize> {
        let z0 = self.sol.nodes[0];
        if v > z0 {
            self.sol.cell(v).map(|c| c + 1)
        } else if z0 > 0.0 {
            Some(1)
        } else {
            None
        }
    }

    fn low_offer(&self, a: f64) -> bool {
        a < self.sol.p_bar[0] - IND_TOL
    }

    fn to_state(&self, k: usize) -> SkimState {
        if k == 0 && self.sol.cdf[0] <= 0.0 {
            SkimState::OffPath
        } else {
            SkimState::Trunc(k)
        }
    }

    fn waits_for_off_path(&self, v: f64, a: f64) -> bool {
        let wait = self.sol.delta * self.uv(v, self.off_path_offer()).max(0.0);
        self.uv(v, a) >= wait - IND_TOL
    }
}

impl StrategyProfile for SkimProfile {
    type State = SkimState;

    fn root(&self) -> SkimState {
        SkimState::Trunc(self.sol.len() - 1)
    }

    fn delta(&self) -> f64 {
        self.sol.delta
    }

    fn proposer_utility(&self, a: f64) -> f64 {
        self.sol.utility.eval(a)
    }

    fn vetoer_utility(&self, v: f64, a: f64) -> f64 {
        self.uv(v, a)
    }

    fn offers(&self, s: &SkimState) -> Vec<(f64, f64)> {
        match *s {
            SkimState::Trunc(q) => vec![(self.on_path_offer(q), 1.0)],
            SkimState::OffPath => vec![(self.off_path_offer(), 1.0)],
        }
    }

    fn accept_prob(&self, s: &SkimState, v: f64, a: f64) -> f64 {
        let yes = match *s {
            SkimState::OffPath => self.waits_for_off_path(v, a),
            SkimState::Trunc(q) => match self.node(v) {
                None => self.uv(v, a) > IND_TOL,
                Some(_) if self.low_offer(a) => self.waits_for_off_path(v, a),
                // Types the belief rules out compare with the encoded continuation.
                Some(j) if j > q => {
                    let wait = match self.after_rejection(s, a) {
                        SkimState::OffPath => self.uv(v, self.off_path_offer()).max(0.0),
                        SkimState::Trunc(k) => self.uv(v, self.on_path_offer(k)),
                    };
                    self.uv(v, a) >= self.sol.delta * wait - IND_TOL
                }
                Some(j) if (a - self.on_path_offer(q)).abs() <= SAME_OFFER => j > self.sol.t[q],
                Some(j) => j > self.sol.first_reaching(a),
            },
        };
        if yes {
            1.0
        } else {
            0.0
        }
    }

    fn belief(&self, s: &SkimState) -> Vec<(f64, f64)> {
        match *s {
            SkimState::OffPath => vec![(self.off_path_point, 1.0)],
            SkimState::Trunc(q) => {
                let sol = &self.sol;
                let mut out = Vec::with_capacity(q + 1);
                if sol.cdf[0] > 0.0 {
                    out.push((sol.nodes[0], sol.cdf[0]));
                }
                out.extend((1..=q).map(|j| (sol.nodes[j], sol.cdf[j] - sol.cdf[j - 1])));
                out
            }
        }
    }

    fn after_rejection(&self, s: &SkimState, a: f64) -> SkimState {
        match *s {
            SkimState::OffPath => SkimState::OffPath,
            SkimState::Trunc(q) => {
                if self.low_offer(a) {
                    SkimState::OffPath
                } else if (a - self.on_path_offer(q)).abs() <= SAME_OFFER {
                    self.to_state(self.sol.t[q])
                } else {
                    self.to_state(self.sol.first_reaching(a).min(q))
                }
            }
        }
    }

    fn critical_types(&self) -> Vec<f64> {
        let sol = &self.sol;
        let step = (self.upper - self.lower) / (sol.len() - 1) as f64;
        let mut out = vec![self.lower.max(sol.nodes[0]) + 1e-9, self.upper];
        for p in &sol.path {
            for d in [-1.0, 0.0, 1.0] {
                out.push(p.accept_lo + d * step);
            }
        }
        out.retain(|&v| v >= self.lower && v <= self.upper);
        out
    }

    fn utility_span(&self) -> f64 {
        // Offers and types in [−1, 1].
        4.0
    }
}
