//! Commitment payoff without commitment: offer 0 to clear the types in
//! `(0, c*/2)`, then skim the rest down to `c*`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::outcome::{EquilibriumOutcome, TypeOutcome};
use crate::primitives::{
    even_points, uv_eval, Belief, GridSpec, ProposerUtility, TypeDistribution, VetoerForm,
};
use crate::skim::{self, SkimSolution, SweepRow};
use crate::static_mech::{self, DelegationReport};

/// Cells used to represent the types that accept the opening offer.
const ACCEPT_CELLS: usize = 200;
const FLAT_TOL: f64 = 1e-6;

#[derive(Clone, Debug, Serialize)]
pub struct LeapfrogEquilibrium {
    pub delta: f64,
    pub c_star: f64,
    pub first_offer: f64,
    /// Types in this open interval accept the opening offer.
    pub acceptance_set: (f64, f64),
    #[serde(skip)]
    pub prior: TypeDistribution,
    pub posterior: Belief,
    pub posterior_mass: f64,
    pub cont: SkimSolution,
    pub payoff: f64,
    pub commitment_payoff: f64,
    pub full_delegation_payoff: f64,
    pub gap_to_commitment: f64,
}

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Construction {
    Leapfrog(Box<LeapfrogEquilibrium>),
    /// Full delegation is already optimal; plain skimming attains it.
    FullDelegation {
        note: String,
        delegation: DelegationReport,
        skim: Box<SkimSolution>,
    },
}

impl Construction {
    pub fn payoff(&self) -> f64 {
        match self {
            Construction::Leapfrog(eq) => eq.payoff,
            Construction::FullDelegation { skim, .. } => skim.payoff,
        }
    }

    pub fn leapfrog(&self) -> Option<&LeapfrogEquilibrium> {
        match self {
            Construction::Leapfrog(eq) => Some(eq),
            _ => None,
        }
    }
}

fn check_support(f: &TypeDistribution) -> Result<()> {
    if f.lower() <= 0.0 || f.upper() <= 0.5 {
        Ok(())
    } else {
        Err(Error::Hypothesis(format!(
            "leapfrogging needs v̲ ≤ 0 or v̄ ≤ 1/2; support is [{}, {}]",
            f.lower(),
            f.upper()
        )))
    }
}

pub fn construct(
    f: &TypeDistribution,
    u: &ProposerUtility,
    delta: f64,
    spec: GridSpec,
) -> Result<Construction> {
    check_support(f)?;
    let prior = Belief::full(f);
    let rep = static_mech::optimal_interval(&prior, u)?;
    let floor = 2.0 * f.lower().max(0.0);
    if rep.c_star <= floor + FLAT_TOL {
        let g = skim::belief_grid(&prior, spec, delta)?;
        let sol = skim::solve(&prior, u, delta, &g)?;
        return Ok(Construction::FullDelegation {
            note: format!(
                "full delegation [{floor}, 1] is optimal; returning the skimming equilibrium"
            ),
            delegation: rep,
            skim: Box::new(sol),
        });
    }
    let c = rep.c_star;
    if 0.5 * c >= f.upper() {
        return Err(Error::Precondition(format!(
            "threshold {c} leaves no type above c*/2"
        )));
    }
    let posterior = Belief::union_with_nonpositive(f, 0.5 * c)?;
    let g = skim::belief_grid(&posterior, spec, delta)?;
    let cont = skim::solve_with_floor_offer(&posterior, u, delta, &g, c)?;
    let mass = posterior.mass();
    let payoff = delta * mass * cont.payoff;
    Ok(Construction::Leapfrog(Box::new(LeapfrogEquilibrium {
        delta,
        c_star: c,
        first_offer: 0.0,
        acceptance_set: (0.0, 0.5 * c),
        prior: f.clone(),
        posterior,
        posterior_mass: mass,
        cont,
        payoff,
        commitment_payoff: rep.u_commit,
        full_delegation_payoff: rep.u_full,
        gap_to_commitment: rep.u_commit - payoff,
    })))
}

impl LeapfrogEquilibrium {
    /// Best discounted utility type `v` can get by rejecting the opening offer.
    pub fn continuation_value(&self, v: f64) -> f64 {
        let d = self.delta;
        self.cont
            .path
            .iter()
            .enumerate()
            .map(|(k, s)| d.powi(k as i32 + 1) * uv_eval(v, s.offer, VetoerForm::Quadratic))
            .fold(0.0, f64::max)
    }

    /// Response to the opening offer 0.
    pub fn accepts_first_offer(&self, v: f64) -> bool {
        v > 0.0 && v < self.acceptance_set.1 && self.continuation_value(v) <= 0.0
    }

    /// Offers along the equilibrium path, opening offer first.
    pub fn path_offers(&self) -> Vec<f64> {
        std::iter::once(self.first_offer)
            .chain(self.cont.path.iter().map(|s| s.offer))
            .collect()
    }

    /// Belief at each path step, as the window `[c, c′]` of remaining types
    /// (plus any nonpositive types).
    pub fn belief_windows(&self) -> Vec<BeliefWindow> {
        let lo = self.prior.lower().min(self.acceptance_set.1);
        let half = self.acceptance_set.1;
        self.cont
            .path
            .iter()
            .map(|s| {
                let hi = s.accept_hi;
                let kind = if hi >= self.c_star {
                    WindowKind::Bracketing
                } else {
                    WindowKind::BelowThreshold
                };
                BeliefWindow { lo, half, hi, kind }
            })
            .collect()
    }

    /// Positive part of the belief at a path step. Nonpositive types keep the
    /// status quo under every menu, so they shift all payoffs equally.
    pub fn window_belief(&self, w: &BeliefWindow) -> Result<Belief> {
        crate::primitives::truncate(&self.prior, w.half.max(self.prior.lower()), w.hi)
    }

    pub fn outcome(&self) -> EquilibriumOutcome {
        let f = &self.prior;
        let half = self.acceptance_set.1;
        let mut types = Vec::new();
        let lo = f.lower().max(0.0);
        if half > lo {
            let edges = even_points(lo, half, ACCEPT_CELLS + 1);
            for w in edges.windows(2) {
                let mid = 0.5 * (w[0] + w[1]);
                types.push(TypeOutcome::once(mid, f.cdf(w[1]) - f.cdf(w[0]), 0.0, 0));
            }
        }
        for t in self.cont.outcome().types {
            let mut t = t;
            t.weight *= self.posterior_mass;
            for g in &mut t.agreements {
                g.period += 1;
            }
            types.push(t);
        }
        EquilibriumOutcome {
            delta: self.delta,
            utility: self.cont.utility,
            vetoer_form: VetoerForm::Quadratic,
            types,
            proposer_payoff: self.payoff,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    /// `c ≤ c*/2 ≤ c* ≤ c′`
    Bracketing,
    /// Every remaining positive type is below `c*`; `[c*, 1]` is then the
    /// full-delegation set of the window.
    BelowThreshold,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BeliefWindow {
    pub lo: f64,
    pub half: f64,
    pub hi: f64,
    pub kind: WindowKind,
}

#[derive(Clone, Debug, Serialize)]
pub struct DeviationGuard {
    pub delta: f64,
    pub equilibrium_payoff: f64,
    pub max_deviation_payoff: f64,
    pub worst_offer: f64,
    /// `(offer, payoff)` per probe.
    pub probes: Vec<(f64, f64)>,
    pub holds: bool,
}

/// Payoff from opening with `a > 0` instead, after which play follows the
/// skimming equilibrium on the prior.
pub fn deviation_payoff(fallback: &SkimSolution, a: f64) -> f64 {
    let n = fallback.len();
    let d = fallback.first_reaching(a).min(n - 1);
    fallback.utility.eval(a.min(1.0)) * (1.0 - fallback.cdf[d]) + fallback.delta * fallback.r[d]
}

pub fn deviation_guard(
    eq: &LeapfrogEquilibrium,
    fallback: &SkimSolution,
    probes: &[f64],
) -> DeviationGuard {
    let rows: Vec<(f64, f64)> = probes
        .iter()
        .map(|&a| {
            let p = if a <= 0.0 {
                eq.payoff
            } else {
                deviation_payoff(fallback, a)
            };
            (a, p)
        })
        .collect();
    let (worst_offer, max_dev) =
        rows.iter()
            .filter(|r| r.0 > 0.0)
            .copied()
            .fold(
                (f64::NAN, f64::NEG_INFINITY),
                |a, b| if b.1 > a.1 { b } else { a },
            );
    DeviationGuard {
        delta: eq.delta,
        equilibrium_payoff: eq.payoff,
        max_deviation_payoff: max_dev,
        worst_offer,
        probes: rows,
        holds: max_dev <= eq.payoff + 1e-3,
    }
}

/// Leapfrog payoff against the commitment payoff across discount factors.
pub fn commitment_gap_sweep(
    f: &TypeDistribution,
    u: &ProposerUtility,
    deltas: &[f64],
    spec: GridSpec,
) -> Result<Vec<SweepRow>> {
    deltas
        .par_iter()
        .map(|&d| {
            let c = construct(f, u, d, spec)?;
            let (bench, n) = match &c {
                Construction::Leapfrog(eq) => (eq.commitment_payoff, eq.cont.len()),
                Construction::FullDelegation {
                    delegation, skim, ..
                } => (delegation.u_commit, skim.len()),
            };
            Ok(SweepRow {
                delta: d,
                payoff: c.payoff(),
                benchmark: bench,
                gap: bench - c.payoff(),
                grid_points: n,
            })
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct NecessityReport {
    pub commitment_payoff: f64,
    pub full_delegation_payoff: f64,
    /// Rows `(δ, skim payoff, U, margin)`.
    pub rows: Vec<(f64, f64, f64, f64)>,
    pub min_margin: f64,
    pub holds: bool,
}

/// How far plain skimming stays below the commitment payoff.
pub fn necessity_gap(
    f: &TypeDistribution,
    u: &ProposerUtility,
    deltas: &[f64],
    spec: GridSpec,
) -> Result<NecessityReport> {
    let prior = Belief::full(f);
    let rep = static_mech::optimal_interval(&prior, u)?;
    let floor = 2.0 * f.lower().max(0.0);
    if !(rep.commitment_premium() > 1e-4 && rep.c_star > floor + FLAT_TOL) {
        return Err(Error::Hypothesis(format!(
            "no strict commitment premium: U − U̲ = {:.3e}, c* = {}",
            rep.commitment_premium(),
            rep.c_star
        )));
    }
    let rows: Vec<(f64, f64, f64, f64)> = deltas
        .par_iter()
        .map(|&d| {
            let g = skim::belief_grid(&prior, spec, d)?;
            let s = skim::solve(&prior, u, d, &g)?;
            Ok((d, s.payoff, rep.u_commit, rep.u_commit - s.payoff))
        })
        .collect::<Result<_>>()?;
    let min_margin = rows.iter().map(|r| r.3).fold(f64::INFINITY, f64::min);
    Ok(NecessityReport {
        commitment_payoff: rep.u_commit,
        full_delegation_payoff: rep.u_full,
        rows,
        min_margin,
        holds: min_margin >= 0.5 * rep.commitment_premium(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const LIN: ProposerUtility = ProposerUtility::LinearLoss;

    fn tri() -> TypeDistribution {
        TypeDistribution::triangular(0.0, 1.0, 0.6).unwrap()
    }

    #[test]
    fn uniform_prior_is_full_delegation() {
        let f = TypeDistribution::uniform(0.0, 1.0).unwrap();
        let c = construct(&f, &LIN, 0.9, GridSpec::Points(400)).unwrap();
        assert!(matches!(c, Construction::FullDelegation { .. }));
    }

    #[test]
    fn gap_support_outside_hypothesis_is_gated() {
        let f = TypeDistribution::uniform(0.2, 1.0).unwrap();
        let e = construct(&f, &LIN, 0.9, GridSpec::Points(400)).unwrap_err();
        assert!(e.is_gate());
    }

    #[test]
    fn triangular_leapfrog_shape() {
        let c = construct(&tri(), &LIN, 0.99, GridSpec::DEFAULT_AUTO).unwrap();
        let eq = c.leapfrog().unwrap();
        let offers = eq.path_offers();
        assert_eq!(offers[0], 0.0);
        assert!(offers[1] > offers[0]);
        assert_eq!(*offers.last().unwrap(), eq.c_star);
        assert!(eq.cont.offers_strictly_decreasing());
        assert!(eq.gap_to_commitment >= -1e-6);
        let o = eq.outcome();
        assert!((o.total_weight() - 1.0).abs() < 1e-12);
        assert!((o.summed_payoff() - eq.payoff).abs() < 1e-9);
    }

    #[test]
    fn opening_offer_acceptance() {
        let c = construct(&tri(), &LIN, 0.99, GridSpec::Points(800)).unwrap();
        let eq = c.leapfrog().unwrap();
        let half = 0.5 * eq.c_star;
        for v in even_points(-0.1, 1.0, 1101) {
            let inside = v > 0.0 && v < half;
            assert_eq!(eq.accepts_first_offer(v), inside, "{v}");
        }
    }

    #[test]
    fn necessity_refuses_uniform() {
        let f = TypeDistribution::uniform(0.0, 1.0).unwrap();
        assert!(necessity_gap(&f, &LIN, &[0.9], GridSpec::Points(400))
            .unwrap_err()
            .is_gate());
    }

    #[test]
    fn path_beliefs_keep_threshold_delegation_optimal() {
        let c = construct(&tri(), &LIN, 0.99, GridSpec::Points(800)).unwrap();
        let eq = c.leapfrog().unwrap();
        let w = eq.belief_windows();
        let last = w.len() - 1;
        for (k, win) in w.iter().enumerate() {
            assert!(win.lo <= win.half + 1e-12);
            if k < last {
                assert_eq!(win.kind, WindowKind::Bracketing, "step {k}");
                let r = crate::static_mech::conditional_optimality_check(
                    &Belief::full(&eq.prior),
                    &LIN,
                    eq.c_star,
                    win.lo,
                    win.hi,
                )
                .unwrap();
                assert!(r.holds, "step {k}: {r:?}");
            }
            let g = eq.window_belief(win).unwrap();
            let r = crate::static_mech::probe_delegation(&g, &LIN, eq.c_star);
            assert!(r.holds, "step {k}: {r:?}");
        }
    }
}
