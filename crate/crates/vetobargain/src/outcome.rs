//! Per-type equilibrium outcomes.

use serde::Serialize;

use crate::primitives::{uv_eval, ProposerUtility, VetoerForm};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Agreement {
    pub action: f64,
    pub period: u32,
    /// Probability, from the start of the game, that this agreement is reached.
    pub prob: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TypeOutcome {
    pub v: f64,
    pub weight: f64,
    pub agreements: Vec<Agreement>,
}

impl TypeOutcome {
    pub fn never(v: f64, weight: f64) -> Self {
        TypeOutcome {
            v,
            weight,
            agreements: Vec::new(),
        }
    }

    pub fn once(v: f64, weight: f64, action: f64, period: u32) -> Self {
        TypeOutcome {
            v,
            weight,
            agreements: vec![Agreement {
                action,
                period,
                prob: 1.0,
            }],
        }
    }
}

/// Who agrees to what and when, with the Proposer's payoff.
#[derive(Clone, Debug, Serialize)]
pub struct EquilibriumOutcome {
    pub delta: f64,
    pub utility: ProposerUtility,
    pub vetoer_form: VetoerForm,
    pub types: Vec<TypeOutcome>,
    pub proposer_payoff: f64,
}

impl EquilibriumOutcome {
    /// Proposer's payoff by direct discounted summation.
    pub fn summed_payoff(&self) -> f64 {
        self.types
            .iter()
            .map(|t| {
                t.weight
                    * t.agreements
                        .iter()
                        .map(|g| {
                            g.prob * self.delta.powi(g.period as i32) * self.utility.eval(g.action)
                        })
                        .sum::<f64>()
            })
            .sum()
    }

    pub fn vetoer_payoff(&self, i: usize) -> f64 {
        let t = &self.types[i];
        t.agreements
            .iter()
            .map(|g| {
                g.prob * self.delta.powi(g.period as i32) * uv_eval(t.v, g.action, self.vetoer_form)
            })
            .sum()
    }

    pub fn total_weight(&self) -> f64 {
        self.types.iter().map(|t| t.weight).sum()
    }

    /// Offers in order of first agreement period.
    pub fn agreement_schedule(&self) -> Vec<(u32, f64)> {
        let mut s: Vec<(u32, f64)> = self
            .types
            .iter()
            .flat_map(|t| t.agreements.iter().map(|g| (g.period, g.action)))
            .collect();
        s.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
        s.dedup_by(|a, b| a.0 == b.0 && (a.1 - b.1).abs() <= 1e-12);
        s
    }
}
