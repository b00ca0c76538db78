use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::primitives::{even_points, uv_eval, ProposerUtility, VetoerForm};

const BELIEF_POINTS: usize = 1000;
const MAX_PERIODS: usize = 20;
const BR_TOL: f64 = 1e-12;

/// Backward-induction tables on the belief grid `μ = P(high type)`.
#[derive(Clone, Debug, Serialize)]
pub struct OracleTables {
    pub types: (f64, f64),
    pub mu_grid: Vec<f64>,
    /// `value[t][i]`: Proposer's value at period `t`, belief `mu_grid[i]`; row `T` is zero.
    pub value: Vec<Vec<f64>>,
    pub policy: Vec<Vec<f64>>,
    pub low_value: Vec<Vec<f64>>,
    pub high_value: Vec<Vec<f64>>,
    /// Cells where no response profile passed the best-response test and
    /// the least-violating one was used.
    pub fallbacks: usize,
}

impl OracleTables {
    /// Value at period `t` by linear interpolation in `μ`.
    pub fn value_at(&self, t: usize, mu: f64) -> f64 {
        interp(&self.value[t], mu)
    }

    pub fn periods(&self) -> usize {
        self.policy.len()
    }
}

fn interp(row: &[f64], mu: f64) -> f64 {
    let n = row.len() - 1;
    let x = mu.clamp(0.0, 1.0) * n as f64;
    let i = (x.floor() as usize).min(n - 1);
    let w = x - i as f64;
    row[i] * (1.0 - w) + row[i + 1] * w
}

struct Cell {
    q: f64,
    offer: f64,
    wl: f64,
    wh: f64,
    violation: f64,
}

/// Finite game with `T` periods and zero continuation after the last one.
///
/// `types` holds one or two `(v, prior weight)` pairs; with one type the
/// belief coordinate is inert. At each belief and offer the Vetoer's
/// response is a best-response profile whose rejection posterior is either
/// Bayes-exact (pure responses) or the grid point nearest the indifference
/// (one type mixing); among those, Proposer's favourite is taken.
pub fn finite_horizon_oracle(
    types: &[(f64, f64)],
    offer_grid: &[f64],
    delta: f64,
    periods: usize,
    utility: ProposerUtility,
    form: VetoerForm,
) -> Result<OracleTables> {
    let (l, h) = match types {
        [(v, _)] => (*v, *v),
        [(a, _), (b, _)] if a < b => (*a, *b),
        [(a, _), (b, _)] => (*b, *a),
        _ => {
            return Err(Error::Precondition(format!(
                "oracle handles one or two types, got {}",
                types.len()
            )))
        }
    };
    if periods == 0 || periods > MAX_PERIODS {
        return Err(Error::Precondition(format!(
            "horizon {periods} outside 1..={MAX_PERIODS}"
        )));
    }
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::InvalidParameter(format!(
            "δ = {delta} outside [0,1)"
        )));
    }
    if offer_grid.is_empty() {
        return Err(Error::Precondition("empty offer grid".into()));
    }
    let mu_grid = even_points(0.0, 1.0, BELIEF_POINTS);
    let zero = vec![0.0; BELIEF_POINTS];
    let mut value = vec![zero.clone()];
    let mut low_value = vec![zero.clone()];
    let mut high_value = vec![zero];
    let mut policy = Vec::new();
    let mut fallbacks = 0;

    for _ in 0..periods {
        let (v_next, wl_next, wh_next) = (&value[0], &low_value[0], &high_value[0]);
        let cells: Vec<Cell> = (0..BELIEF_POINTS)
            .into_par_iter()
            .map(|i| {
                let mu = mu_grid[i];
                let mut best: Option<Cell> = None;
                for &a in offer_grid {
                    let c = respond(
                        a,
                        i,
                        mu,
                        &mu_grid,
                        (l, h),
                        delta,
                        utility,
                        form,
                        v_next,
                        wl_next,
                        wh_next,
                    );
                    let better = match &best {
                        None => true,
                        Some(b) if c.violation != b.violation => c.violation < b.violation,
                        Some(b) => c.q > b.q + BR_TOL,
                    };
                    if better {
                        best = Some(c);
                    }
                }
                best.unwrap()
            })
            .collect();
        fallbacks += cells.iter().filter(|c| c.violation > 0.0).count();
        value.insert(0, cells.iter().map(|c| c.q).collect());
        low_value.insert(0, cells.iter().map(|c| c.wl).collect());
        high_value.insert(0, cells.iter().map(|c| c.wh).collect());
        policy.insert(0, cells.iter().map(|c| c.offer).collect());
    }
    Ok(OracleTables {
        types: (l, h),
        mu_grid,
        value,
        policy,
        low_value,
        high_value,
        fallbacks,
    })
}

/// Proposer's favourite best-response profile to offer `a` at belief `μ_i`.
#[allow(clippy::too_many_arguments)]
fn respond(
    a: f64,
    i: usize,
    mu: f64,
    mu_grid: &[f64],
    (l, h): (f64, f64),
    delta: f64,
    utility: ProposerUtility,
    form: VetoerForm,
    v_next: &[f64],
    wl_next: &[f64],
    wh_next: &[f64],
) -> Cell {
    let ul = uv_eval(l, a, form);
    let uh = uv_eval(h, a, form);
    let ua = utility.eval(a);
    let make = |sl: f64, sh: f64, post: f64, on_grid: Option<usize>, violation: f64| {
        let (vn, wln, whn) = match on_grid {
            Some(j) => (v_next[j], wl_next[j], wh_next[j]),
            None => (
                interp(v_next, post),
                interp(wl_next, post),
                interp(wh_next, post),
            ),
        };
        let m = mu * sh + (1.0 - mu) * sl;
        Cell {
            q: m * ua + (1.0 - m) * delta * vn,
            offer: a,
            wl: sl * ul + (1.0 - sl) * delta * wln,
            wh: sh * uh + (1.0 - sh) * delta * whn,
            violation,
        }
    };
    // Amount by which pure response `s` to payoff `acc` vs `rej` is suboptimal.
    let miss = |s: f64, acc: f64, rej: f64| {
        if s > 0.5 {
            (rej - acc).max(0.0)
        } else {
            (acc - rej).max(0.0)
        }
    };

    let mut best: Option<Cell> = None;
    let mut keep = |c: Cell| {
        let replace = match &best {
            None => true,
            Some(b) => {
                (c.violation <= BR_TOL && b.violation > BR_TOL)
                    || ((c.violation <= BR_TOL) == (b.violation <= BR_TOL)
                        && if c.violation <= BR_TOL {
                            c.q > b.q
                        } else {
                            c.violation < b.violation
                        })
            }
        };
        if replace {
            best = Some(c);
        }
    };

    for (sl, sh) in [(1.0, 1.0), (1.0, 0.0), (0.0, 1.0), (0.0, 0.0)] {
        let rej = mu * (1.0 - sh) + (1.0 - mu) * (1.0 - sl);
        // Unexpected rejections are blamed on the high type.
        let post = if rej > 0.0 {
            mu * (1.0 - sh) / rej
        } else {
            1.0
        };
        let cl = delta * interp(wl_next, post);
        let ch = delta * interp(wh_next, post);
        // Both types respond optimally even where the belief rules one out.
        let viol = miss(sl, ul, cl).max(miss(sh, uh, ch));
        let v = if viol <= BR_TOL { 0.0 } else { viol };
        keep(make(sl, sh, post, None, v));
    }

    // High type mixes, low type rejects: posterior falls below μ.
    if i > 0 && mu < 1.0 {
        let g = |j: usize| uh - delta * wh_next[j];
        if let Some(j) = nearest_root(g, (0..i).rev()) {
            let post = mu_grid[j];
            if ul <= delta * wl_next[j] + BR_TOL {
                let stay = post * (1.0 - mu) / (mu * (1.0 - post));
                keep(make(0.0, 1.0 - stay, post, Some(j), 0.0));
            }
        }
    }
    // Low type mixes, high type rejects: posterior rises above μ.
    if i + 1 < mu_grid.len() && mu > 0.0 {
        let g = |j: usize| ul - delta * wl_next[j];
        if let Some(j) = nearest_root(g, i + 1..mu_grid.len()) {
            let post = mu_grid[j];
            if uh <= delta * wh_next[j] + BR_TOL {
                let stay = mu * (1.0 - post) / ((1.0 - mu) * post);
                keep(make(1.0 - stay, 0.0, post, Some(j), 0.0));
            }
        }
    }
    let mut c = best.unwrap();
    if c.violation <= BR_TOL {
        c.violation = 0.0;
    }
    c
}

/// First index along `order` where `g` vanishes or changes sign, picking
/// the endpoint with smaller `|g|`.
fn nearest_root(g: impl Fn(usize) -> f64, order: impl Iterator<Item = usize>) -> Option<usize> {
    let mut prev: Option<(usize, f64)> = None;
    for j in order {
        let x = g(j);
        if x.abs() <= BR_TOL {
            return Some(j);
        }
        if let Some((k, y)) = prev {
            if (x > 0.0) != (y > 0.0) {
                return Some(if x.abs() < y.abs() { j } else { k });
            }
        }
        prev = Some((j, x));
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Vec<f64> {
        even_points(0.0, 1.0, 101)
    }

    #[test]
    fn one_period_picks_best_single_offer() {
        let t = finite_horizon_oracle(
            &[(0.3, 0.5), (0.55, 0.5)],
            &grid(),
            0.9,
            1,
            ProposerUtility::LinearLoss,
            VetoerForm::Linear,
        )
        .unwrap();
        for (i, &mu) in t.mu_grid.iter().enumerate() {
            let expect = 0.6f64.max(mu * 1.0);
            assert!((t.value[0][i] - expect).abs() < 1e-12, "μ={mu}");
        }
        assert_eq!(t.fallbacks, 0);
    }

    #[test]
    fn impatient_game_collapses_to_one_period() {
        let types = [(0.3, 0.5), (0.55, 0.5)];
        let one = finite_horizon_oracle(
            &types,
            &grid(),
            0.0,
            1,
            ProposerUtility::LinearLoss,
            VetoerForm::Linear,
        )
        .unwrap();
        let many = finite_horizon_oracle(
            &types,
            &grid(),
            0.0,
            8,
            ProposerUtility::LinearLoss,
            VetoerForm::Linear,
        )
        .unwrap();
        for t in 0..8 {
            for i in 0..one.mu_grid.len() {
                assert!((many.value[t][i] - one.value[0][i]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn rejects_three_types() {
        let e = finite_horizon_oracle(
            &[(0.1, 0.3), (0.2, 0.3), (0.3, 0.4)],
            &grid(),
            0.9,
            2,
            ProposerUtility::LinearLoss,
            VetoerForm::Linear,
        );
        assert!(e.is_err());
    }
}
