use crate::primitives::{uv_eval, VetoerForm};
use crate::two_type::{TwoTypeState, TwoTypeStrategy};

use super::StrategyProfile;

/// Two-type strategy seen through the checker. Types are exactly `l` and `h`.
#[derive(Clone, Debug)]
pub struct TwoTypeProfile {
    pub strategy: TwoTypeStrategy,
}

impl TwoTypeProfile {
    pub fn new(strategy: TwoTypeStrategy) -> Self {
        TwoTypeProfile { strategy }
    }

    pub fn types(&self) -> Vec<f64> {
        let p = &self.strategy.eq.params;
        vec![p.l, p.h]
    }
}

impl StrategyProfile for TwoTypeProfile {
    type State = TwoTypeState;

    fn root(&self) -> TwoTypeState {
        self.strategy.root()
    }

    fn delta(&self) -> f64 {
        self.strategy.eq.params.delta
    }

    fn proposer_utility(&self, a: f64) -> f64 {
        self.strategy.eq.params.u(a)
    }

    fn vetoer_utility(&self, v: f64, a: f64) -> f64 {
        uv_eval(v, a, VetoerForm::Linear)
    }

    fn offers(&self, s: &TwoTypeState) -> Vec<(f64, f64)> {
        self.strategy.offers(s)
    }

    fn accept_prob(&self, s: &TwoTypeState, v: f64, a: f64) -> f64 {
        let r = self.strategy.respond(s, a);
        if v == self.strategy.eq.params.h {
            r.accept_h
        } else {
            r.accept_l
        }
    }

    fn belief(&self, s: &TwoTypeState) -> Vec<(f64, f64)> {
        let p = &self.strategy.eq.params;
        let mu = s.mu.0;
        vec![(p.l, 1.0 - mu), (p.h, mu)]
            .into_iter()
            .filter(|x| x.1 > 0.0)
            .collect()
    }

    fn acceptance_mass(&self, s: &TwoTypeState, a: f64) -> f64 {
        let r = self.strategy.respond(s, a);
        let mu = s.mu.0;
        mu * r.accept_h + (1.0 - mu) * r.accept_l
    }

    fn after_rejection(&self, s: &TwoTypeState, a: f64) -> TwoTypeState {
        self.strategy.respond(s, a).after_rejection
    }

    fn critical_types(&self) -> Vec<f64> {
        self.types()
    }

    fn utility_span(&self) -> f64 {
        // Offers live in [0, 1]; u and both u_V stay within [−1, 1] there.
        2.0
    }
}
