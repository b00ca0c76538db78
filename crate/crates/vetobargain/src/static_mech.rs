//! Static benchmark: interval delegation, conditional optimality and the
//! dynamic-to-static payoff-preserving transform.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::outcome::EquilibriumOutcome;
use crate::primitives::{
    cdf_trapezoid, even_points, uv_eval, Belief, ProposerUtility, VetoerForm, TOL_PAYOFF, TOL_ROOT,
    TOL_STRUCT,
};

const SCAN_POINTS: usize = 400;
const QUAD_INTERVALS: usize = 2000;
const WINDOW_INTERVALS: usize = 200;
const PROBE_MENUS: usize = 500;
const PROBE_MAX_ACTIONS: usize = 5;
const PROBE_SEED: u64 = 0x005e_ed0f_ca11;

/// `∫ u(choice(v)) dF` for the delegation set `[c, 1]`.
pub fn interval_delegation_payoff(f: &Belief, u: &ProposerUtility, c: f64) -> f64 {
    let (lo, hi) = (f.lower(), f.upper());
    let mut total = 0.0;
    // Types in [c/2, c] compromise on c.
    let a = (0.5 * c).max(lo).max(0.0);
    let b = c.min(hi);
    if b > a {
        total += u.eval(c) * (f.cdf(b) - f.cdf(a));
    }
    // Types in [c, 1] get their ideal point.
    let s = c.max(lo);
    let top = hi.min(1.0);
    if top > s {
        let mut nodes = even_points(s, top, QUAD_INTERVALS + 1);
        if let crate::primitives::SupportSpec::Union { lo: gap_hi } = f.support() {
            if gap_hi > s && gap_hi < top {
                nodes.push(gap_hi);
                nodes.push(0.0f64.max(s));
                nodes.sort_by(|x, y| x.total_cmp(y));
                nodes.dedup();
            }
        }
        total += cdf_trapezoid(&nodes, |v| f.cdf(v), |v| u.eval(v));
    }
    // Types above 1 take 1.
    if hi > 1.0 {
        total += u.eval(1.0) * (1.0 - f.cdf(1.0));
    }
    total
}

/// Optimal interval delegation set and the full-delegation comparison.
#[derive(Clone, Debug, Serialize)]
pub struct DelegationReport {
    pub c_star: f64,
    #[serde(rename = "U")]
    pub u_commit: f64,
    #[serde(rename = "U_full")]
    pub u_full: f64,
    pub payoff_curve: Vec<(f64, f64)>,
}

impl DelegationReport {
    /// `U − U̲`
    pub fn commitment_premium(&self) -> f64 {
        self.u_commit - self.u_full
    }
}

fn golden_max(g: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let (mut g1, mut g2) = (g(x1), g(x2));
    while b - a > tol {
        if g1 >= g2 {
            b = x2;
            x2 = x1;
            g2 = g1;
            x1 = b - r * (b - a);
            g1 = g(x1);
        } else {
            a = x1;
            x1 = x2;
            g1 = g2;
            x2 = a + r * (b - a);
            g2 = g(x2);
        }
    }
    let x = 0.5 * (a + b);
    (x, g(x))
}

/// Best threshold `c ∈ [2v̲⁺, 1]`: coarse scan, then golden-section polish.
pub fn optimal_interval(f: &Belief, u: &ProposerUtility) -> Result<DelegationReport> {
    if f.upper() <= 0.0 || f.cdf(0.0) >= 1.0 {
        return Err(Error::Precondition(
            "belief puts no mass on positive types".into(),
        ));
    }
    let c_lo = 2.0 * f.lower().max(0.0);
    if c_lo >= 1.0 {
        let p = interval_delegation_payoff(f, u, 1.0);
        return Ok(DelegationReport {
            c_star: 1.0,
            u_commit: p,
            u_full: p,
            payoff_curve: vec![(1.0, p)],
        });
    }
    let cs = even_points(c_lo, 1.0, SCAN_POINTS);
    let curve: Vec<(f64, f64)> = cs
        .par_iter()
        .map(|&c| (c, interval_delegation_payoff(f, u, c)))
        .collect();
    let best = curve.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let k = curve.iter().position(|p| p.1 >= best - TOL_STRUCT).unwrap();
    let (mut c_star, mut u_commit) = curve[k];
    let a = curve[k.saturating_sub(1)].0;
    let b = curve[(k + 1).min(curve.len() - 1)].0;
    if b > a {
        let (c, val) = golden_max(|c| interval_delegation_payoff(f, u, c), a, b, TOL_ROOT);
        if val > u_commit + TOL_STRUCT {
            c_star = c;
            u_commit = val;
        }
    }
    Ok(DelegationReport {
        c_star,
        u_commit,
        u_full: curve[0].1,
        payoff_curve: curve,
    })
}

/// Exact payoff of a finite menu; each type picks the nearest action.
pub fn menu_payoff(f: &Belief, u: &ProposerUtility, menu: &[f64]) -> f64 {
    let mut acts: Vec<f64> = menu.iter().copied().chain(std::iter::once(0.0)).collect();
    acts.sort_by(|a, b| a.total_cmp(b));
    acts.dedup();
    let mut total = 0.0;
    for (i, &a) in acts.iter().enumerate() {
        let lo = if i == 0 {
            f64::NEG_INFINITY
        } else {
            0.5 * (acts[i - 1] + a)
        };
        let hi = if i + 1 == acts.len() {
            f64::INFINITY
        } else {
            0.5 * (a + acts[i + 1])
        };
        total += u.eval(a) * (f.cdf(hi) - f.cdf(lo));
    }
    total
}

#[derive(Clone, Debug, Serialize)]
pub struct ConditionalReport {
    pub holds: bool,
    /// Largest improvement over `[c*, 1]` found by any probe.
    pub worst_gap: f64,
    pub worst_alternative: String,
}

/// Checks that `[c*, 1]` stays optimal after truncating the belief to `[c, c_hi]`.
pub fn conditional_optimality_check(
    f: &Belief,
    u: &ProposerUtility,
    c_star: f64,
    c: f64,
    c_hi: f64,
) -> Result<ConditionalReport> {
    if c > 0.5 * c_star + TOL_STRUCT || c_hi < c_star - TOL_STRUCT {
        return Err(Error::Precondition(format!(
            "window [{c}, {c_hi}] does not bracket [{}, {c_star}]",
            0.5 * c_star
        )));
    }
    let g = f.truncate(c, c_hi)?;
    Ok(probe_delegation(&g, u, c_star))
}

/// Compares `[c*, 1]` under `g` against a grid of intervals and random menus.
pub fn probe_delegation(g: &Belief, u: &ProposerUtility, c_star: f64) -> ConditionalReport {
    let base = interval_delegation_payoff(g, u, c_star);

    let mut alternatives: Vec<(f64, String)> = even_points(0.0, 1.0, WINDOW_INTERVALS)
        .par_iter()
        .map(|&cp| {
            (
                interval_delegation_payoff(g, u, cp),
                format!("interval [{cp:.6}, 1]"),
            )
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(PROBE_SEED);
    let menus: Vec<Vec<f64>> = (0..PROBE_MENUS)
        .map(|_| {
            let k = rng.random_range(1..=PROBE_MAX_ACTIONS);
            (0..k).map(|_| rng.random::<f64>()).collect()
        })
        .collect();
    alternatives.extend(
        menus
            .par_iter()
            .map(|m| (menu_payoff(g, u, m), format!("menu {m:?}")))
            .collect::<Vec<_>>(),
    );

    let (best, label) = alternatives
        .into_iter()
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .unwrap();
    let worst_gap = best - base;
    ConditionalReport {
        holds: worst_gap <= TOL_PAYOFF,
        worst_gap,
        worst_alternative: label,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Representation {
    Interval {
        c: f64,
    },
    Menu {
        actions: Vec<f64>,
    },
    /// Lottery image of a dynamic outcome.
    Image,
}

/// Direct mechanism on a finite type set; each type gets a lottery.
#[derive(Clone, Debug, Serialize)]
pub struct StaticMechanism {
    pub representation: Representation,
    pub vetoer_form: VetoerForm,
    pub types: Vec<f64>,
    pub weights: Vec<f64>,
    /// Per type: `(action, probability)` pairs summing to one.
    pub assignment: Vec<Vec<(f64, f64)>>,
}

impl StaticMechanism {
    fn from_menu(
        representation: Representation,
        menu: &[f64],
        types: &[f64],
        weights: &[f64],
        u: &ProposerUtility,
    ) -> Self {
        let assignment = types
            .iter()
            .map(|&v| vec![(crate::primitives::vetoer_best_in_menu(v, menu, u), 1.0)])
            .collect();
        StaticMechanism {
            representation,
            vetoer_form: VetoerForm::Quadratic,
            types: types.to_vec(),
            weights: weights.to_vec(),
            assignment,
        }
    }

    /// Interval `[c, 1]` evaluated on `types`; a type's choice is the
    /// projection of its ideal point, or 0 if that is better.
    pub fn interval(c: f64, types: &[f64], weights: &[f64]) -> Self {
        let assignment = types
            .iter()
            .map(|&v| {
                let proj = v.clamp(c, 1.0);
                let a = if uv_eval(v, proj, VetoerForm::Quadratic) >= 0.0 && v > 0.0 {
                    proj
                } else {
                    0.0
                };
                vec![(a, 1.0)]
            })
            .collect();
        StaticMechanism {
            representation: Representation::Interval { c },
            vetoer_form: VetoerForm::Quadratic,
            types: types.to_vec(),
            weights: weights.to_vec(),
            assignment,
        }
    }

    pub fn menu(actions: &[f64], types: &[f64], weights: &[f64], u: &ProposerUtility) -> Self {
        Self::from_menu(
            Representation::Menu {
                actions: actions.to_vec(),
            },
            actions,
            types,
            weights,
            u,
        )
    }

    pub fn vetoer_value(&self, v: f64, row: usize) -> f64 {
        self.assignment[row]
            .iter()
            .map(|&(a, p)| p * uv_eval(v, a, self.vetoer_form))
            .sum()
    }

    pub fn proposer_payoff(&self, u: &ProposerUtility) -> f64 {
        self.weights
            .iter()
            .zip(&self.assignment)
            .map(|(w, lot)| w * lot.iter().map(|&(a, p)| p * u.eval(a)).sum::<f64>())
            .sum()
    }
}

/// Each agreement on `a` at period `t` becomes probability `δ^t` on `a`;
/// the remainder goes to the status quo.
pub fn mechanism_from_outcome(outcome: &EquilibriumOutcome) -> StaticMechanism {
    let d = outcome.delta;
    let assignment = outcome
        .types
        .iter()
        .map(|t| {
            let mut lot: Vec<(f64, f64)> = t
                .agreements
                .iter()
                .map(|g| (g.action, g.prob * d.powi(g.period as i32)))
                .collect();
            let used: f64 = lot.iter().map(|x| x.1).sum();
            lot.push((0.0, (1.0 - used).max(0.0)));
            lot
        })
        .collect();
    StaticMechanism {
        representation: Representation::Image,
        vetoer_form: outcome.vetoer_form,
        types: outcome.types.iter().map(|t| t.v).collect(),
        weights: outcome.types.iter().map(|t| t.weight).collect(),
        assignment,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct IcIrReport {
    pub ic_ok: bool,
    pub ir_ok: bool,
    pub worst_violation: f64,
    /// `(type, mimicked type)` for the worst IC violation; the two coincide
    /// when the worst problem is an IR failure.
    pub offending_pair: Option<(f64, f64)>,
}

/// Pairwise IC and per-type IR on the mechanism's own type set.
pub fn ic_ir_check(m: &StaticMechanism) -> IcIrReport {
    let n = m.types.len();
    let own: Vec<f64> = (0..n).map(|i| m.vetoer_value(m.types[i], i)).collect();
    let mut worst = f64::NEG_INFINITY;
    let mut pair = None;
    let mut ir_ok = true;
    for i in 0..n {
        let ir_gap = -own[i];
        if ir_gap > TOL_PAYOFF {
            ir_ok = false;
        }
        if ir_gap > worst {
            worst = ir_gap;
            pair = Some((m.types[i], m.types[i]));
        }
    }
    let ic = (0..n)
        .into_par_iter()
        .map(|i| {
            let v = m.types[i];
            let mut best = (f64::NEG_INFINITY, i);
            for j in 0..n {
                let gain = m.vetoer_value(v, j) - own[i];
                if gain > best.0 {
                    best = (gain, j);
                }
            }
            (best.0, i, best.1)
        })
        .reduce(
            || (f64::NEG_INFINITY, 0, 0),
            |a, b| if b.0 > a.0 { b } else { a },
        );
    let ic_ok = ic.0 <= TOL_PAYOFF;
    if ic.0 > worst {
        worst = ic.0;
        pair = Some((m.types[ic.1], m.types[ic.2]));
    }
    IcIrReport {
        ic_ok,
        ir_ok,
        worst_violation: worst.max(0.0),
        offending_pair: pair,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::outcome::{Agreement, TypeOutcome};
    use crate::primitives::TypeDistribution;

    const LIN: ProposerUtility = ProposerUtility::LinearLoss;

    fn prior(f: TypeDistribution) -> Belief {
        Belief::full(&f)
    }

    #[test]
    fn payoff_examples() {
        let u01 = prior(TypeDistribution::uniform(0.0, 1.0).unwrap());
        assert!((interval_delegation_payoff(&u01, &LIN, 0.0) - 0.5).abs() < 1e-12);
        let u2 = prior(TypeDistribution::uniform(0.2, 1.0).unwrap());
        assert!((interval_delegation_payoff(&u2, &LIN, 0.4) - 0.625).abs() < 1e-12);
        // One take-it-or-leave-it offer at 1.
        let tri = prior(TypeDistribution::triangular(0.0, 1.0, 0.6).unwrap());
        let p = interval_delegation_payoff(&tri, &LIN, 1.0);
        assert!((p - (1.0 - tri.cdf(0.5))).abs() < 1e-12);
    }

    #[test]
    fn uniform_priors_delegate_fully() {
        let r =
            optimal_interval(&prior(TypeDistribution::uniform(0.0, 1.0).unwrap()), &LIN).unwrap();
        assert_eq!(r.c_star, 0.0);
        assert!((r.u_commit - 0.5).abs() < 1e-12);
        let r =
            optimal_interval(&prior(TypeDistribution::uniform(0.2, 1.0).unwrap()), &LIN).unwrap();
        assert!((r.c_star - 0.4).abs() < 1e-12);
        assert!((r.u_commit - 0.625).abs() < 1e-12 && (r.u_full - 0.625).abs() < 1e-12);
    }

    #[test]
    fn triangular_threshold_golden() {
        let f = prior(TypeDistribution::triangular(0.0, 1.0, 0.6).unwrap());
        let r = optimal_interval(&f, &LIN).unwrap();
        // First-order condition of the piecewise-quadratic payoff.
        let analytic = (5.0 + 2.5f64.sqrt()) / 7.5;
        assert!((r.c_star - analytic).abs() < 1e-8, "{}", r.c_star);
        assert!((r.c_star - 0.8774851773).abs() < 1e-8);
        assert!((r.u_commit - 0.5974983530).abs() < 1e-7, "{}", r.u_commit);
        assert!((r.u_full - 0.5333333333).abs() < 1e-7, "{}", r.u_full);
        assert!(r.payoff_curve.iter().all(|p| p.1 <= r.u_commit + 1e-12));
    }

    #[test]
    fn conditional_optimality_on_prior_and_window() {
        let f = prior(TypeDistribution::triangular(0.0, 1.0, 0.6).unwrap());
        let r = optimal_interval(&f, &LIN).unwrap();
        let full = conditional_optimality_check(&f, &LIN, r.c_star, 0.0, 1.0).unwrap();
        assert!(full.holds, "{full:?}");
        let half = conditional_optimality_check(&f, &LIN, r.c_star, 0.5 * r.c_star, 1.0).unwrap();
        assert!(half.holds, "{half:?}");
        assert!(conditional_optimality_check(&f, &LIN, r.c_star, 0.6, 1.0).is_err());
    }

    #[test]
    fn lottery_image_examples() {
        let outcome = EquilibriumOutcome {
            delta: 0.9,
            utility: LIN,
            vetoer_form: VetoerForm::Quadratic,
            types: vec![
                TypeOutcome::once(0.8, 0.5, 1.0, 2),
                TypeOutcome::once(0.6, 0.3, 0.7, 0),
                TypeOutcome::never(0.1, 0.2),
            ],
            proposer_payoff: 0.5 * 0.81 + 0.3 * 0.7,
        };
        let m = mechanism_from_outcome(&outcome);
        assert!((m.assignment[0][0].1 - 0.81).abs() < 1e-15);
        assert!((m.assignment[0][1].1 - 0.19).abs() < 1e-15);
        assert_eq!(m.assignment[1], vec![(0.7, 1.0), (0.0, 0.0)]);
        assert_eq!(m.assignment[2], vec![(0.0, 1.0)]);
        assert!((m.proposer_payoff(&LIN) - outcome.summed_payoff()).abs() < 1e-12);
        for i in 0..3 {
            assert!((m.vetoer_value(m.types[i], i) - outcome.vetoer_payoff(i)).abs() < 1e-12);
        }
    }

    #[test]
    fn mixed_agreements_keep_probability() {
        let t = TypeOutcome {
            v: 0.55,
            weight: 1.0,
            agreements: vec![
                Agreement {
                    action: 1.0,
                    period: 0,
                    prob: 0.25,
                },
                Agreement {
                    action: 0.6,
                    period: 3,
                    prob: 0.75,
                },
            ],
        };
        let o = EquilibriumOutcome {
            delta: 0.5,
            utility: LIN,
            vetoer_form: VetoerForm::Linear,
            types: vec![t],
            proposer_payoff: 0.0,
        };
        let m = mechanism_from_outcome(&o);
        let total: f64 = m.assignment[0].iter().map(|x| x.1).sum();
        assert!((total - 1.0).abs() < 1e-15);
        assert!((m.vetoer_value(0.55, 0) - o.vetoer_payoff(0)).abs() < 1e-15);
    }

    #[test]
    fn ic_ir_examples() {
        let types = even_points(0.0, 1.0, 101);
        let w = vec![1.0 / 101.0; 101];
        let r = ic_ir_check(&StaticMechanism::interval(0.8, &types, &w));
        assert!(r.ic_ok && r.ir_ok, "{r:?}");
        let bad = StaticMechanism {
            representation: Representation::Image,
            vetoer_form: VetoerForm::Quadratic,
            types: vec![0.3, 0.9],
            weights: vec![0.5, 0.5],
            assignment: vec![vec![(1.0, 1.0)], vec![(0.9, 1.0)]],
        };
        let r = ic_ir_check(&bad);
        assert!(!r.ir_ok && !r.ic_ok);
        assert!((r.worst_violation - 0.4).abs() < 1e-12);
    }

    #[test]
    fn menu_matches_interval_limit() {
        let f = prior(TypeDistribution::uniform(0.0, 1.0).unwrap());
        // Dense menu on [0.5, 1] approximates the interval payoff.
        let menu = even_points(0.5, 1.0, 501);
        let a = menu_payoff(&f, &LIN, &menu);
        let b = interval_delegation_payoff(&f, &LIN, 0.5);
        assert!((a - b).abs() < 1e-5);
        let types = even_points(0.0, 1.0, 11);
        let m = StaticMechanism::menu(&[0.7, 1.0], &types, &vec![1.0 / 11.0; 11], &LIN);
        assert_eq!(m.assignment[3][0].0, 0.0);
        assert_eq!(m.assignment[6][0].0, 0.7);
    }
}
