//! Skimming equilibrium on a continuum of types: the value/indifference-offer
//! system solved by forward recursion on a type grid.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::outcome::{EquilibriumOutcome, TypeOutcome};
use crate::primitives::{
    largest_indifferent_action, uv_eval, Belief, Grid, GridSpec, ProposerUtility, VetoerForm,
    TOL_ROOT, TOL_STRUCT,
};
use crate::static_mech;

const ACTION_POINTS: usize = 201;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PathStep {
    /// Index of the highest remaining type.
    pub state: usize,
    pub v: f64,
    pub offer: f64,
    /// Types in `(accept_lo, accept_hi]` accept.
    pub accept_lo: f64,
    pub accept_hi: f64,
    pub next: usize,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Diagnostics {
    pub bellman_residual: f64,
    pub indifference_residual: f64,
    /// Grid points where `P < P̄`.
    pub envelope_gaps: usize,
    pub t_monotone: bool,
    /// Tied maximizers `(state, z, y)` with `z < y`.
    pub ties: Vec<(usize, usize, usize)>,
    /// Ties where `P̄(z) < P̄(y)` fails.
    pub tie_violations: usize,
    /// Last index of the closed-form seed segment (0 if there is none).
    pub seed_end: usize,
    pub hypothesis_warning: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SkimSolution {
    pub delta: f64,
    pub utility: ProposerUtility,
    /// Offer that clears the lowest positive types.
    pub floor_offer: f64,
    pub nodes: Vec<f64>,
    /// Belief CDF at the nodes.
    pub cdf: Vec<f64>,
    pub r: Vec<f64>,
    pub p: Vec<f64>,
    pub p_bar: Vec<f64>,
    pub t: Vec<usize>,
    pub path: Vec<PathStep>,
    pub payoff: f64,
    pub diagnostics: Diagnostics,
}

/// Type grid on `[v̲⁺, v̄]` with `spec` points.
pub fn belief_grid(f: &Belief, spec: GridSpec, delta: f64) -> Result<Grid> {
    let lo = f.positive_floor();
    let n = spec.type_points(f.upper() - lo, delta);
    Grid::new(lo, f.upper(), n, ACTION_POINTS)
}

pub fn solve(f: &Belief, u: &ProposerUtility, delta: f64, grid: &Grid) -> Result<SkimSolution> {
    let floor_offer = 2.0 * f.positive_floor().max(0.0);
    solve_with_floor_offer(f, u, delta, grid, floor_offer)
}

/// Like [`solve`] but with the bottom offer fixed at `floor_offer`.
pub fn solve_with_floor_offer(
    f: &Belief,
    u: &ProposerUtility,
    delta: f64,
    grid: &Grid,
    floor_offer: f64,
) -> Result<SkimSolution> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "δ = {delta} outside (0,1)"
        )));
    }
    let floor = f.positive_floor();
    let top = f.upper();
    let tol = 1e-12 * (1.0 + top.abs());
    let nodes: Vec<f64> = grid
        .types
        .iter()
        .copied()
        .filter(|&v| v >= floor - tol && v <= top + tol)
        .collect();
    if nodes.len() < 2
        || (nodes[0] - floor).abs() > tol
        || (nodes[nodes.len() - 1] - top).abs() > tol
    {
        return Err(Error::InvalidParameter(format!(
            "degenerate grid: need points at both ends of [{floor}, {top}]"
        )));
    }
    let n = nodes.len();
    let cdf: Vec<f64> = nodes.iter().map(|&v| f.cdf(v)).collect();
    let ub = |x: f64| u.eval(x.min(1.0));
    let mut r = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut p_bar = vec![0.0; n];
    let mut t = vec![0usize; n];
    p[0] = floor_offer;
    p_bar[0] = floor_offer;

    let mut diag = Diagnostics::default();
    let base = f.base();
    if !(base.lower() <= 0.0 || base.upper() <= 0.5) {
        diag.hypothesis_warning = Some(format!(
            "prior support [{}, {}] has positive floor and top above 1/2; \
             equilibrium support not guaranteed",
            base.lower(),
            base.upper()
        ));
    }

    // Closed-form seed while the objective is decreasing in the cutoff.
    let s = floor_offer;
    if floor > 0.0 && s <= 1.0 {
        let disc = |v: f64| (v * v - delta * (2.0 * v * s - s * s)).max(0.0).sqrt();
        let closed = |v: f64| v + disc(v);
        let slope_p = |v: f64| 1.0 + (v - delta * s) / disc(v);
        let du = |x: f64| if x < 1.0 { u.slope(x) } else { 0.0 };
        let mut a = Vec::with_capacity(n);
        let mut b = Vec::with_capacity(n);
        let mut pb = 0.0f64;
        let mut pb_slope;
        for i in 0..n {
            let pv = if i == 0 { s } else { closed(nodes[i]) };
            if pv >= pb {
                pb = pv;
                pb_slope = slope_p(nodes[i]);
            } else {
                pb_slope = 0.0;
            }
            let dens = f.pdf(nodes[i]);
            a.push(du(pb) * pb_slope);
            b.push((delta * u.eval(s) - ub(pb)) * dens);
            if i == 0 {
                continue;
            }
            let ok = (0..=i).all(|k| a[k] * (cdf[i] - cdf[k]) + b[k] < 0.0);
            if !ok {
                break;
            }
            diag.seed_end = i;
            r[i] = u.eval(s) * (cdf[i] - cdf[0]);
            p[i] = pv;
            p_bar[i] = pb;
            t[i] = 0;
        }
    }

    for i in (diag.seed_end + 1)..n {
        let mut best = f64::NEG_INFINITY;
        for j in 0..i {
            best = best.max(ub(p_bar[j]) * (cdf[i] - cdf[j]) + delta * r[j]);
        }
        // Largest maximizer, up to round-off.
        let slack = 1e-15 * (1.0 + best.abs());
        let arg = (0..i)
            .rev()
            .find(|&j| ub(p_bar[j]) * (cdf[i] - cdf[j]) + delta * r[j] >= best - slack)
            .unwrap_or(0);
        r[i] = best;
        t[i] = arg;
        let offer = p_bar[arg].min(1.0);
        let w = delta * uv_eval(nodes[i], offer, VetoerForm::Quadratic);
        p[i] = largest_indifferent_action(nodes[i], w)?;
        p_bar[i] = p_bar[i - 1].max(p[i]);
    }

    let mut sol = SkimSolution {
        delta,
        utility: *u,
        floor_offer,
        nodes,
        cdf,
        r,
        p,
        p_bar,
        t,
        path: Vec::new(),
        payoff: 0.0,
        diagnostics: diag,
    };
    sol.path = sol.compute_path()?;
    sol.payoff = sol.r[n - 1];
    sol.diagnose();
    sol.check_values()?;
    Ok(sol)
}

impl SkimSolution {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn objective(&self, i: usize, j: usize) -> f64 {
        self.utility.eval(self.p_bar[j].min(1.0)) * (self.cdf[i] - self.cdf[j])
            + self.delta * self.r[j]
    }

    /// Offer made when the highest remaining type is node `q`.
    pub fn offer_at(&self, q: usize) -> f64 {
        self.p_bar[self.t[q]].min(1.0)
    }

    /// Largest node index strictly below `v`, if any.
    pub fn cell(&self, v: f64) -> Option<usize> {
        let k = self.nodes.partition_point(|&z| z < v);
        if k == 0 {
            None
        } else {
            Some(k - 1)
        }
    }

    /// First node whose envelope offer reaches `a`, or `len()` if none does.
    pub fn first_reaching(&self, a: f64) -> usize {
        self.p_bar.partition_point(|&x| x < a)
    }

    fn compute_path(&self) -> Result<Vec<PathStep>> {
        let mut out = Vec::new();
        let mut q = self.nodes.len() - 1;
        while q > 0 {
            let next = self.t[q];
            if next >= q {
                return Err(Error::Consistency(format!("state {q} does not progress")));
            }
            out.push(PathStep {
                state: q,
                v: self.nodes[q],
                offer: self.offer_at(q),
                accept_lo: self.nodes[next],
                accept_hi: self.nodes[q],
                next,
            });
            q = next;
        }
        Ok(out)
    }

    fn diagnose(&mut self) {
        let n = self.nodes.len();
        let this = &*self;
        let (bell, ind) = (1..n)
            .into_par_iter()
            .map(|i| {
                let best = (0..i)
                    .map(|j| this.objective(i, j))
                    .fold(f64::NEG_INFINITY, f64::max);
                let b = (this.r[i] - best)
                    .abs()
                    .max((this.objective(i, this.t[i]) - this.r[i]).abs());
                let v = this.nodes[i];
                let next = this.p_bar[this.t[i]].min(1.0);
                let d = (uv_eval(v, this.p[i], VetoerForm::Quadratic)
                    - this.delta * uv_eval(v, next, VetoerForm::Quadratic))
                .abs();
                (b, d)
            })
            .reduce(|| (0.0, 0.0), |a, b| (a.0.max(b.0), a.1.max(b.1)));
        let ties: Vec<(usize, usize, usize)> = (1..n)
            .into_par_iter()
            .flat_map_iter(|i| {
                let y = this.t[i];
                let best = this.r[i];
                (0..y)
                    .filter(move |&z| this.objective(i, z) >= best - TOL_STRUCT)
                    .map(move |z| (i, z, y))
                    .collect::<Vec<_>>()
            })
            .collect();
        let d = &mut self.diagnostics;
        d.bellman_residual = bell;
        d.indifference_residual = ind;
        d.envelope_gaps = (0..n)
            .filter(|&i| self.p[i] < self.p_bar[i] - TOL_STRUCT)
            .count();
        d.t_monotone = self.t.windows(2).all(|w| w[0] <= w[1]);
        d.tie_violations = ties
            .iter()
            .filter(|&&(_, z, y)| !(self.p_bar[z] < self.p_bar[y]))
            .count();
        d.ties = ties;
    }

    fn check_values(&self) -> Result<()> {
        // R(z_1) can be 0 when the floor is 0: cell 0 only ever sees offer 0.
        let start = if self.floor_offer <= 0.0 { 2 } else { 1 };
        for i in start..self.nodes.len() {
            if !(self.r[i] > 0.0) {
                return Err(Error::Consistency(format!(
                    "nonpositive value {} at v = {}",
                    self.r[i], self.nodes[i]
                )));
            }
        }
        Ok(())
    }

    pub fn path_offers(&self) -> Vec<f64> {
        self.path.iter().map(|s| s.offer).collect()
    }

    pub fn offers_strictly_decreasing(&self) -> bool {
        self.path.windows(2).all(|w| w[1].offer < w[0].offer)
    }

    /// Minimum of `R(v) − (1−1/m)∫[u(min(P̄,1)) − 1/m] dF` over the grid.
    pub fn lower_bound_slack(&self, m: f64) -> f64 {
        let mut integral = 0.0;
        let mut worst = f64::INFINITY;
        for i in 0..self.nodes.len() {
            if i > 0 {
                let g0 = self.utility.eval(self.p_bar[i - 1].min(1.0)) - 1.0 / m;
                let g1 = self.utility.eval(self.p_bar[i].min(1.0)) - 1.0 / m;
                integral += 0.5 * (g0 + g1) * (self.cdf[i] - self.cdf[i - 1]);
            }
            worst = worst.min(self.r[i] - (1.0 - 1.0 / m) * integral);
        }
        worst
    }

    /// Per-type outcome on the nodes; node `z_j` carries the mass of `(z_{j−1}, z_j]`.
    pub fn outcome(&self) -> EquilibriumOutcome {
        let n = self.nodes.len();
        let mut types = Vec::with_capacity(n);
        types.push(TypeOutcome::never(self.nodes[0], self.cdf[0]));
        for j in 1..n {
            let k = self
                .path
                .iter()
                .rposition(|s| s.next < j && j <= s.state)
                .expect("every node above the floor is on the path");
            let w = self.cdf[j] - self.cdf[j - 1];
            types.push(TypeOutcome::once(
                self.nodes[j],
                w,
                self.path[k].offer,
                k as u32,
            ));
        }
        EquilibriumOutcome {
            delta: self.delta,
            utility: self.utility,
            vetoer_form: VetoerForm::Quadratic,
            types,
            proposer_payoff: self.payoff,
        }
    }

    /// Outcome together with a check that summation reproduces `R(v̄)`.
    pub fn payoff_and_outcome(&self) -> Result<EquilibriumOutcome> {
        let o = self.outcome();
        let summed = o.summed_payoff();
        if (summed - self.payoff).abs() > TOL_ROOT {
            return Err(Error::Consistency(format!(
                "path payoff {summed} differs from value {}",
                self.payoff
            )));
        }
        Ok(o)
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct SweepRow {
    pub delta: f64,
    pub payoff: f64,
    pub benchmark: f64,
    pub gap: f64,
    pub grid_points: usize,
}

/// Skim payoff against the full-delegation payoff across discount factors.
pub fn limit_sweep(
    f: &Belief,
    u: &ProposerUtility,
    deltas: &[f64],
    spec: GridSpec,
) -> Result<Vec<SweepRow>> {
    let bench = static_mech::optimal_interval(f, u)?.u_full;
    deltas
        .par_iter()
        .map(|&d| {
            let g = belief_grid(f, spec, d)?;
            let sol = solve(f, u, d, &g)?;
            Ok(SweepRow {
                delta: d,
                payoff: sol.payoff,
                benchmark: bench,
                gap: (sol.payoff - bench).abs(),
                grid_points: sol.len(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::primitives::TypeDistribution;

    const LIN: ProposerUtility = ProposerUtility::LinearLoss;

    fn uni(lo: f64, hi: f64) -> Belief {
        Belief::full(&TypeDistribution::uniform(lo, hi).unwrap())
    }

    fn solve_n(f: &Belief, d: f64, n: usize) -> SkimSolution {
        let g = belief_grid(f, GridSpec::Points(n), d).unwrap();
        solve(f, &LIN, d, &g).unwrap()
    }

    #[test]
    fn seed_matches_closed_form() {
        let f = uni(0.2, 1.0);
        let s = solve_n(&f, 0.9, 2000);
        assert!(s.diagnostics.seed_end > 0);
        for i in 0..=s.diagnostics.seed_end {
            let v = s.nodes[i];
            let closed = v + (v * v - 0.72 * (v - 0.2)).sqrt();
            assert!((s.p[i] - closed).abs() < 1e-9);
        }
        assert_eq!(s.p[0], 0.4);
    }

    #[test]
    fn residuals_and_shape() {
        let f = uni(0.2, 1.0);
        let s = solve_n(&f, 0.9, 2000);
        let d = &s.diagnostics;
        assert!(
            d.bellman_residual < 1e-9 && d.indifference_residual < 1e-9,
            "{d:?}"
        );
        assert!(d.t_monotone);
        assert!(s.offers_strictly_decreasing());
        assert_eq!(s.path.last().unwrap().offer, 0.4);
        assert!(s.r.windows(2).all(|w| w[1] >= w[0]));
        assert!(s.p_bar.windows(2).all(|w| w[1] >= w[0]));
        assert!(d.hypothesis_warning.is_some());
    }

    #[test]
    fn uniform_unit_payoff_bracket() {
        let s = solve_n(&uni(0.0, 1.0), 0.99, 2000);
        assert!(s.payoff >= 0.48 && s.payoff <= 0.5, "{}", s.payoff);
        assert!(s.diagnostics.hypothesis_warning.is_none());
        assert_eq!(s.path.last().unwrap().offer, 0.0);
    }

    #[test]
    fn outcome_reproduces_value() {
        for f in [uni(0.2, 1.0), uni(-0.3, 0.9)] {
            let s = solve_n(&f, 0.9, 800);
            let o = s.payoff_and_outcome().unwrap();
            assert!((o.total_weight() - 1.0).abs() < 1e-12);
            // The top type accepts the first offer.
            let top = o.types.last().unwrap();
            assert_eq!(top.agreements[0].period, 0);
        }
    }

    #[test]
    fn frozen_path_uniform_gap() {
        let s = solve_n(&uni(0.2, 1.0), 0.9, 2000);
        let offers = s.path_offers();
        // Regression values from the first solver run.
        assert_eq!(offers.len(), FROZEN_PATH_LEN);
        assert!(
            (offers[0] - FROZEN_FIRST_OFFER).abs() < 1e-12,
            "{}",
            offers[0]
        );
        let rest = [
            0.7594483781747121,
            0.577191235222687,
            0.43857411501582216,
            0.4,
        ];
        for (a, b) in offers[1..].iter().zip(rest) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((s.payoff - FROZEN_PAYOFF).abs() < 1e-12, "{}", s.payoff);
    }

    const FROZEN_PATH_LEN: usize = 5;
    const FROZEN_FIRST_OFFER: f64 = 0.9996483231869269;
    const FROZEN_PAYOFF: f64 = 0.624999922702137;
}
