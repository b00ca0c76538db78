//! Payoff primitives, type distributions, beliefs and grids.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::error::{Error, Result};

/// Tolerance for algebraic identities.
pub const TOL_STRUCT: f64 = 1e-12;
/// Tolerance for roots and fixed points.
pub const TOL_ROOT: f64 = 1e-9;
/// Tolerance for quadrature-based payoff comparisons.
pub const TOL_PAYOFF: f64 = 1e-6;

/// Upper end of the action domain.
pub const ACTION_MAX: f64 = 2.0;

/// Proposer's utility over actions, with ideal point 1 and u(0) = 0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProposerUtility {
    LinearLoss,
    QuadraticLoss,
    /// `weight` on linear loss, the rest on quadratic loss.
    Mixture {
        weight: f64,
    },
}

impl ProposerUtility {
    pub fn mixture(weight: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&weight) {
            return Err(Error::InvalidParameter(format!(
                "mixture weight {weight} outside [0,1]"
            )));
        }
        Ok(ProposerUtility::Mixture { weight })
    }

    pub fn eval(&self, a: f64) -> f64 {
        match *self {
            ProposerUtility::LinearLoss => 1.0 - (1.0 - a).abs(),
            ProposerUtility::QuadraticLoss => 1.0 - (1.0 - a) * (1.0 - a),
            ProposerUtility::Mixture { weight } => {
                weight * (1.0 - (1.0 - a).abs()) + (1.0 - weight) * (1.0 - (1.0 - a) * (1.0 - a))
            }
        }
    }

    /// Left derivative, which is what the offer clamp at 1 needs.
    pub fn slope(&self, a: f64) -> f64 {
        let lin = if a <= 1.0 { 1.0 } else { -1.0 };
        let quad = 2.0 * (1.0 - a);
        match *self {
            ProposerUtility::LinearLoss => lin,
            ProposerUtility::QuadraticLoss => quad,
            ProposerUtility::Mixture { weight } => weight * lin + (1.0 - weight) * quad,
        }
    }
}

/// Functional form of the Vetoer's utility.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VetoerForm {
    /// 2va − a²
    Quadratic,
    /// v − |v − a|
    Linear,
}

pub fn uv_eval(v: f64, a: f64, form: VetoerForm) -> f64 {
    match form {
        VetoerForm::Quadratic => 2.0 * v * a - a * a,
        VetoerForm::Linear => v - (v - a).abs(),
    }
}

/// Largest action that gives quadratic-loss type `v` utility exactly `w`.
pub fn largest_indifferent_action(v: f64, w: f64) -> Result<f64> {
    let v_sq = v * v;
    if w > v_sq + TOL_STRUCT {
        return Err(Error::InfeasibleContinuation { w, v_sq });
    }
    Ok(v + (v_sq - w).max(0.0).sqrt())
}

/// Type `v`'s choice from `menu` plus the veto option 0 under quadratic loss.
///
/// Ties go to the action Proposer likes more, then to the larger action.
pub fn vetoer_best_in_menu(v: f64, menu: &[f64], u: &ProposerUtility) -> f64 {
    let mut best = 0.0;
    let mut best_uv = uv_eval(v, 0.0, VetoerForm::Quadratic);
    for &a in menu {
        let val = uv_eval(v, a, VetoerForm::Quadratic);
        let better = if (val - best_uv).abs() <= TOL_STRUCT {
            let (ua, ub) = (u.eval(a), u.eval(best));
            if (ua - ub).abs() <= TOL_STRUCT {
                a > best
            } else {
                ua > ub
            }
        } else {
            val > best_uv
        };
        if better {
            best = a;
            best_uv = val;
        }
    }
    best
}

/// Parametric family of the prior density.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    Uniform,
    Triangular {
        peak: f64,
    },
    TruncatedNormal {
        mean: f64,
        sd: f64,
    },
    /// Knots `(v, relative density)`; the support spans the first to last knot.
    PiecewiseLinear {
        knots: Vec<(f64, f64)>,
    },
}

/// Prior over Vetoer ideal points with interval support and bounded density.
#[derive(Clone, Debug, Serialize)]
pub struct TypeDistribution {
    family: Family,
    lower: f64,
    upper: f64,
    density_floor: f64,
    density_ceiling: f64,
    #[serde(skip)]
    cache: Cache,
}

#[derive(Clone, Debug, Default)]
struct Cache {
    /// Normal CDF at the truncation points.
    phi_lo: f64,
    norm: f64,
    /// Cumulative mass at each knot, normalised.
    knot_mass: Vec<f64>,
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + erf(z / std::f64::consts::SQRT_2))
}

impl TypeDistribution {
    pub fn new(family: Family, lower: f64, upper: f64) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite() && lower < upper) {
            return Err(Error::InvalidParameter(format!(
                "support [{lower}, {upper}] is not a proper interval"
            )));
        }
        let mut cache = Cache::default();
        match &family {
            Family::Uniform => {}
            Family::Triangular { peak } => {
                if !(lower..=upper).contains(peak) {
                    return Err(Error::InvalidParameter(format!(
                        "triangular peak {peak} outside [{lower}, {upper}]"
                    )));
                }
            }
            Family::TruncatedNormal { mean, sd } => {
                if !(*sd > 0.0 && mean.is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "normal sd {sd} must be positive"
                    )));
                }
                cache.phi_lo = std_normal_cdf((lower - mean) / sd);
                cache.norm = std_normal_cdf((upper - mean) / sd) - cache.phi_lo;
                if cache.norm <= 0.0 {
                    return Err(Error::InvalidParameter(
                        "truncated normal has no mass".into(),
                    ));
                }
            }
            Family::PiecewiseLinear { knots } => {
                if knots.len() < 2 {
                    return Err(Error::InvalidParameter("need at least two knots".into()));
                }
                if knots.windows(2).any(|w| w[1].0 <= w[0].0) {
                    return Err(Error::InvalidParameter(
                        "knots must be strictly increasing".into(),
                    ));
                }
                if knots.iter().any(|k| !(k.1 >= 0.0) || !k.1.is_finite()) {
                    return Err(Error::InvalidParameter(
                        "knot densities must be finite and >= 0".into(),
                    ));
                }
                if (knots[0].0 - lower).abs() > TOL_STRUCT
                    || (knots[knots.len() - 1].0 - upper).abs() > TOL_STRUCT
                {
                    return Err(Error::InvalidParameter(
                        "support must span the first to the last knot".into(),
                    ));
                }
                let mut acc = vec![0.0];
                for w in knots.windows(2) {
                    let area = 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0);
                    acc.push(acc.last().unwrap() + area);
                }
                let total = *acc.last().unwrap();
                if total <= 0.0 {
                    return Err(Error::InvalidParameter("density integrates to zero".into()));
                }
                cache.knot_mass = acc.into_iter().map(|m| m / total).collect();
                cache.norm = total;
            }
        }
        let mut dist = TypeDistribution {
            family,
            lower,
            upper,
            density_floor: 0.0,
            density_ceiling: 0.0,
            cache,
        };
        dist.measure_density_bounds()?;
        Ok(dist)
    }

    pub fn uniform(lower: f64, upper: f64) -> Result<Self> {
        Self::new(Family::Uniform, lower, upper)
    }

    pub fn triangular(lower: f64, upper: f64, peak: f64) -> Result<Self> {
        Self::new(Family::Triangular { peak }, lower, upper)
    }

    pub fn truncated_normal(lower: f64, upper: f64, mean: f64, sd: f64) -> Result<Self> {
        Self::new(Family::TruncatedNormal { mean, sd }, lower, upper)
    }

    pub fn piecewise_linear(knots: Vec<(f64, f64)>) -> Result<Self> {
        let (lo, hi) = match (knots.first(), knots.last()) {
            (Some(a), Some(b)) => (a.0, b.0),
            _ => return Err(Error::InvalidParameter("need at least two knots".into())),
        };
        Self::new(Family::PiecewiseLinear { knots }, lo, hi)
    }

    // Interior points only: a triangle's density vanishes at its base corners.
    fn measure_density_bounds(&mut self) -> Result<()> {
        let n = 1000;
        let mut pts: Vec<f64> = (1..n)
            .map(|i| self.lower + (self.upper - self.lower) * i as f64 / n as f64)
            .collect();
        match &self.family {
            Family::Triangular { peak } => pts.push(*peak),
            Family::PiecewiseLinear { knots } => {
                pts.extend(knots[1..knots.len() - 1].iter().map(|k| k.0))
            }
            _ => {}
        }
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        for v in pts {
            let f = self.pdf(v);
            lo = lo.min(f);
            hi = hi.max(f);
        }
        if !(lo > 0.0) || !hi.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "density not bounded away from 0 and infinity (floor {lo}, ceiling {hi})"
            )));
        }
        self.density_floor = lo;
        self.density_ceiling = hi;
        Ok(())
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn density_floor(&self) -> f64 {
        self.density_floor
    }

    pub fn density_ceiling(&self) -> f64 {
        self.density_ceiling
    }

    pub fn cdf(&self, v: f64) -> f64 {
        if v <= self.lower {
            return 0.0;
        }
        if v >= self.upper {
            return 1.0;
        }
        let (lo, hi) = (self.lower, self.upper);
        match &self.family {
            Family::Uniform => (v - lo) / (hi - lo),
            Family::Triangular { peak } => {
                let c = *peak;
                if v <= c {
                    (v - lo) * (v - lo) / ((hi - lo) * (c - lo))
                } else {
                    1.0 - (hi - v) * (hi - v) / ((hi - lo) * (hi - c))
                }
            }
            Family::TruncatedNormal { mean, sd } => {
                (std_normal_cdf((v - mean) / sd) - self.cache.phi_lo) / self.cache.norm
            }
            Family::PiecewiseLinear { knots } => {
                let i = knots.partition_point(|k| k.0 <= v).saturating_sub(1);
                let (x0, y0) = knots[i];
                let (x1, y1) = knots[i + 1];
                let d = v - x0;
                let slope = (y1 - y0) / (x1 - x0);
                self.cache.knot_mass[i] + (y0 * d + 0.5 * slope * d * d) / self.cache.norm
            }
        }
        .clamp(0.0, 1.0)
    }

    pub fn pdf(&self, v: f64) -> f64 {
        if v < self.lower || v > self.upper {
            return 0.0;
        }
        let (lo, hi) = (self.lower, self.upper);
        match &self.family {
            Family::Uniform => 1.0 / (hi - lo),
            Family::Triangular { peak } => {
                let c = *peak;
                if v < c {
                    2.0 * (v - lo) / ((hi - lo) * (c - lo))
                } else if v > c {
                    2.0 * (hi - v) / ((hi - lo) * (hi - c))
                } else {
                    2.0 / (hi - lo)
                }
            }
            Family::TruncatedNormal { mean, sd } => {
                let z = (v - mean) / sd;
                (-0.5 * z * z).exp() / ((2.0 * std::f64::consts::PI).sqrt() * sd * self.cache.norm)
            }
            Family::PiecewiseLinear { knots } => {
                let i = knots
                    .partition_point(|k| k.0 <= v)
                    .saturating_sub(1)
                    .min(knots.len() - 2);
                let (x0, y0) = knots[i];
                let (x1, y1) = knots[i + 1];
                (y0 + (y1 - y0) * (v - x0) / (x1 - x0)) / self.cache.norm
            }
        }
    }
}

/// Which part of the prior a belief is supported on.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum SupportSpec {
    Interval {
        lo: f64,
        hi: f64,
    },
    /// `[v̲, 0] ∪ [lo, v̄]`
    Union {
        lo: f64,
    },
}

/// Conditional distribution of the prior on a support window.
#[derive(Clone, Debug, Serialize)]
pub struct Belief {
    base: TypeDistribution,
    support: SupportSpec,
    mass: f64,
}

/// Conditional of `f` on `[lo, hi]`.
pub fn truncate(f: &TypeDistribution, lo: f64, hi: f64) -> Result<Belief> {
    let tol = TOL_STRUCT * (1.0 + f.upper().abs().max(f.lower().abs()));
    if lo < f.lower() - tol || hi > f.upper() + tol || lo > hi {
        return Err(Error::Precondition(format!(
            "window [{lo}, {hi}] not inside support [{}, {}]",
            f.lower(),
            f.upper()
        )));
    }
    let lo = lo.max(f.lower());
    let hi = hi.min(f.upper());
    let mass = f.cdf(hi) - f.cdf(lo);
    if !(mass > 0.0) {
        return Err(Error::EmptyBelief { lo, hi });
    }
    Ok(Belief {
        base: f.clone(),
        support: SupportSpec::Interval { lo, hi },
        mass,
    })
}

impl Belief {
    pub fn full(f: &TypeDistribution) -> Belief {
        Belief {
            base: f.clone(),
            support: SupportSpec::Interval {
                lo: f.lower(),
                hi: f.upper(),
            },
            mass: 1.0,
        }
    }

    /// Posterior `[v̲, 0] ∪ [lo, v̄]`; collapses to `[lo, v̄]` when `v̲ ≥ 0`.
    pub fn union_with_nonpositive(f: &TypeDistribution, lo: f64) -> Result<Belief> {
        if f.lower() >= 0.0 {
            return truncate(f, lo, f.upper());
        }
        if !(lo > 0.0 && lo < f.upper()) {
            return Err(Error::Precondition(format!(
                "union floor {lo} must lie in (0, {})",
                f.upper()
            )));
        }
        let mass = f.cdf(0.0) + 1.0 - f.cdf(lo);
        if !(mass > 0.0) {
            return Err(Error::EmptyBelief { lo, hi: f.upper() });
        }
        Ok(Belief {
            base: f.clone(),
            support: SupportSpec::Union { lo },
            mass,
        })
    }

    /// Further truncation to `[lo, hi]`, intersected with the current support.
    pub fn truncate(&self, lo: f64, hi: f64) -> Result<Belief> {
        match self.support {
            SupportSpec::Interval { lo: a, hi: b } => truncate(&self.base, lo.max(a), hi.min(b)),
            SupportSpec::Union { lo: floor } => {
                if lo >= floor || hi <= 0.0 {
                    truncate(&self.base, lo, hi)
                } else {
                    Err(Error::Precondition(
                        "window straddles the gap of a union support".into(),
                    ))
                }
            }
        }
    }

    pub fn base(&self) -> &TypeDistribution {
        &self.base
    }

    pub fn support(&self) -> SupportSpec {
        self.support
    }

    /// Prior probability of the support set.
    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn lower(&self) -> f64 {
        match self.support {
            SupportSpec::Interval { lo, .. } => lo,
            SupportSpec::Union { .. } => self.base.lower(),
        }
    }

    pub fn upper(&self) -> f64 {
        match self.support {
            SupportSpec::Interval { hi, .. } => hi,
            SupportSpec::Union { .. } => self.base.upper(),
        }
    }

    /// Lowest non-negative point of the support.
    pub fn positive_floor(&self) -> f64 {
        match self.support {
            SupportSpec::Interval { lo, .. } => lo.max(0.0),
            SupportSpec::Union { lo } => lo,
        }
    }

    pub fn cdf(&self, v: f64) -> f64 {
        let f = &self.base;
        let raw = match self.support {
            SupportSpec::Interval { lo, hi } => f.cdf(v.clamp(lo, hi)) - f.cdf(lo),
            SupportSpec::Union { lo } => {
                let neg = f.cdf(v.min(0.0));
                let pos = if v >= lo { f.cdf(v) - f.cdf(lo) } else { 0.0 };
                neg + pos
            }
        };
        (raw / self.mass).clamp(0.0, 1.0)
    }

    pub fn pdf(&self, v: f64) -> f64 {
        let inside = match self.support {
            SupportSpec::Interval { lo, hi } => v >= lo && v <= hi,
            SupportSpec::Union { lo } => v <= 0.0 || v >= lo,
        };
        if inside {
            self.base.pdf(v) / self.mass
        } else {
            0.0
        }
    }

    /// Conditional mass on types `v ≤ 0`.
    pub fn nonpositive_mass(&self) -> f64 {
        if self.lower() >= 0.0 {
            0.0
        } else {
            self.cdf(0.0)
        }
    }
}

/// How many type points a solver should use.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridSpec {
    Points(usize),
    /// Step `kappa·√(1−δ)`, clamped to `[min_points, max_points]`.
    Auto {
        kappa: f64,
        min_points: usize,
        max_points: usize,
    },
}

impl GridSpec {
    pub const DEFAULT_AUTO: GridSpec = GridSpec::Auto {
        kappa: 0.01,
        min_points: 400,
        max_points: 40_000,
    };

    pub fn type_points(&self, width: f64, delta: f64) -> usize {
        match *self {
            GridSpec::Points(n) => n,
            GridSpec::Auto {
                kappa,
                min_points,
                max_points,
            } => {
                let step = kappa * (1.0 - delta).max(0.0).sqrt();
                let n = if step > 0.0 {
                    (width / step).ceil() as usize + 1
                } else {
                    max_points
                };
                n.clamp(min_points, max_points)
            }
        }
    }
}

/// Type and action grids.
#[derive(Clone, Debug, Serialize)]
pub struct Grid {
    pub types: Vec<f64>,
    pub actions: Vec<f64>,
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|i| {
            if i == n - 1 {
                hi
            } else {
                lo + (hi - lo) * i as f64 / (n - 1) as f64
            }
        })
        .collect()
}

/// Sorted `base` with each special point inserted if it falls strictly inside.
fn with_points(mut base: Vec<f64>, specials: &[f64]) -> Vec<f64> {
    let (lo, hi) = (base[0], base[base.len() - 1]);
    for &s in specials {
        let tol = TOL_STRUCT * (1.0 + s.abs());
        if s > lo + tol && s < hi - tol && !base.iter().any(|&b| (b - s).abs() <= tol) {
            base.push(s);
        }
    }
    base.sort_by(|a, b| a.total_cmp(b));
    base
}

impl Grid {
    /// `n_types` points on `[lo, hi]` and `n_actions` points on
    /// `[min(0, lo), 1]`, each with 0, `2·lo⁺` and 1 inserted when inside.
    pub fn new(lo: f64, hi: f64, n_types: usize, n_actions: usize) -> Result<Grid> {
        if !(lo < hi) || n_types < 2 || n_actions < 2 {
            return Err(Error::InvalidParameter(format!(
                "degenerate grid: [{lo}, {hi}] with {n_types} type and {n_actions} action points"
            )));
        }
        let specials = [0.0, 2.0 * lo.max(0.0), 1.0];
        Ok(Grid {
            types: with_points(linspace(lo, hi, n_types), &specials),
            actions: with_points(linspace(lo.min(0.0), 1.0, n_actions), &specials),
        })
    }

    pub fn type_step(&self) -> f64 {
        max_gap(&self.types)
    }

    pub fn action_step(&self) -> f64 {
        max_gap(&self.actions)
    }
}

fn max_gap(xs: &[f64]) -> f64 {
    xs.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
}

/// Evenly spaced points on `[lo, hi]`.
pub fn even_points(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    linspace(lo, hi, n.max(1))
}

/// CDF-weighted trapezoid `∫ g dF` over consecutive nodes.
pub fn cdf_trapezoid(nodes: &[f64], cdf: impl Fn(f64) -> f64, g: impl Fn(f64) -> f64) -> f64 {
    let mut total = 0.0;
    let mut prev_f = cdf(nodes[0]);
    let mut prev_g = g(nodes[0]);
    for &x in &nodes[1..] {
        let (fx, gx) = (cdf(x), g(x));
        total += 0.5 * (prev_g + gx) * (fx - prev_f);
        prev_f = fx;
        prev_g = gx;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn vetoer_utility_examples() {
        assert!(close(uv_eval(0.5, 0.5, VetoerForm::Quadratic), 0.25, 1e-15));
        assert_eq!(uv_eval(0.3, 0.0, VetoerForm::Quadratic), 0.0);
        assert!(close(uv_eval(0.55, 0.65, VetoerForm::Linear), 0.45, 1e-15));
    }

    #[test]
    fn indifferent_action_examples() {
        assert!(close(
            largest_indifferent_action(0.5, 0.25).unwrap(),
            0.5,
            1e-15
        ));
        assert!(close(
            largest_indifferent_action(0.5, 0.0).unwrap(),
            1.0,
            1e-15
        ));
        let a = largest_indifferent_action(0.6, 0.32).unwrap();
        assert!(close(a, 0.8, 1e-12));
        assert!(close(2.0 * 0.6 * a - a * a, 0.32, 1e-12));
        assert!(matches!(
            largest_indifferent_action(0.5, 0.3),
            Err(Error::InfeasibleContinuation { .. })
        ));
    }

    #[test]
    fn indifferent_action_reproduces_floor_seed() {
        let (lo, delta) = (0.2, 0.9);
        for i in 0..50 {
            let v = lo + 0.8 * i as f64 / 49.0;
            let w = delta * uv_eval(v, 2.0 * lo, VetoerForm::Quadratic);
            let closed = v + (v * v - 4.0 * delta * lo * (v - lo)).sqrt();
            assert!(close(
                largest_indifferent_action(v, w).unwrap(),
                closed,
                1e-12
            ));
        }
    }

    #[test]
    fn menu_choice_examples() {
        let u = ProposerUtility::LinearLoss;
        assert_eq!(vetoer_best_in_menu(0.3, &[0.7, 1.0], &u), 0.0);
        assert_eq!(vetoer_best_in_menu(0.6, &[0.7, 1.0], &u), 0.7);
        assert_eq!(vetoer_best_in_menu(0.42, &[0.42], &u), 0.42);
    }

    #[test]
    fn menu_ties_favour_proposer() {
        // Type 0.5 is indifferent between 0.4 and 0.6; Proposer prefers 0.6.
        let u = ProposerUtility::LinearLoss;
        assert_eq!(vetoer_best_in_menu(0.5, &[0.4, 0.6], &u), 0.6);
        // Type 0 is indifferent between 0 and 0 only.
        assert_eq!(vetoer_best_in_menu(0.0, &[0.0], &u), 0.0);
    }

    #[test]
    fn utility_normalisation() {
        for u in [
            ProposerUtility::LinearLoss,
            ProposerUtility::QuadraticLoss,
            ProposerUtility::Mixture { weight: 0.3 },
        ] {
            assert_eq!(u.eval(0.0), 0.0);
            assert_eq!(u.eval(1.0), 1.0);
            assert!(u.eval(0.7) < 1.0 && u.eval(1.3) < 1.0);
        }
    }

    #[test]
    fn truncation_examples() {
        let f = TypeDistribution::uniform(0.0, 1.0).unwrap();
        let b = truncate(&f, 0.0, 1.0).unwrap();
        for v in [0.1, 0.5, 0.9] {
            assert!(close(b.cdf(v), f.cdf(v), 1e-15));
        }
        let b = truncate(&f, 0.25, 0.75).unwrap();
        assert!(close(b.pdf(0.5), 2.0, 1e-12));
        assert!(close(b.cdf(0.5), 0.5, 1e-12));
        assert!(matches!(
            truncate(&f, 0.5, 0.5),
            Err(Error::EmptyBelief { .. })
        ));
    }

    #[test]
    fn union_posterior_mass() {
        let f = TypeDistribution::uniform(-0.5, 1.0).unwrap();
        let b = Belief::union_with_nonpositive(&f, 0.4).unwrap();
        assert!(close(b.mass(), (0.5 + 0.6) / 1.5, 1e-12));
        assert!(close(b.cdf(0.2), 0.5 / 1.1, 1e-12));
        assert_eq!(b.pdf(0.2), 0.0);
        assert!(close(b.cdf(1.0), 1.0, 1e-12));
        assert!(close(b.nonpositive_mass(), 0.5 / 1.1, 1e-12));
    }

    #[test]
    fn families_integrate_to_one() {
        let dists = vec![
            TypeDistribution::uniform(-0.2, 0.9).unwrap(),
            TypeDistribution::triangular(0.0, 1.0, 0.6).unwrap(),
            TypeDistribution::truncated_normal(0.0, 1.0, 0.4, 0.3).unwrap(),
            TypeDistribution::piecewise_linear(vec![(0.0, 1.0), (0.5, 3.0), (1.0, 0.5)]).unwrap(),
        ];
        for f in dists {
            let nodes = even_points(f.lower(), f.upper(), 20_001);
            let mass = cdf_trapezoid(&nodes, |v| v, |v| f.pdf(v));
            assert!(close(mass, 1.0, 1e-6), "{:?} mass {mass}", f.family());
            assert_eq!(f.cdf(f.lower()), 0.0);
            assert_eq!(f.cdf(f.upper()), 1.0);
            // CDF matches the integrated density at an interior point.
            let mid = 0.5 * (f.lower() + f.upper());
            let nodes = even_points(f.lower(), mid, 20_001);
            let part = cdf_trapezoid(&nodes, |v| v, |v| f.pdf(v));
            assert!(close(part, f.cdf(mid), 1e-6));
            assert!(f.density_floor() > 0.0 && f.density_ceiling().is_finite());
        }
    }

    #[test]
    fn rejects_bad_distributions() {
        assert!(TypeDistribution::uniform(1.0, 0.0).is_err());
        assert!(TypeDistribution::triangular(0.0, 1.0, 1.5).is_err());
        assert!(
            TypeDistribution::piecewise_linear(vec![(0.0, 1.0), (0.5, 0.0), (1.0, 1.0)]).is_err()
        );
    }

    #[test]
    fn grid_contains_special_points() {
        let g = Grid::new(0.2, 1.0, 11, 21).unwrap();
        assert!(g.types.contains(&0.4));
        assert!(g.types.contains(&1.0));
        assert!(g.actions.contains(&0.0));
        assert!(g.types.windows(2).all(|w| w[1] > w[0]));
        assert!(Grid::new(0.5, 0.5, 10, 10).is_err());
    }

    #[test]
    fn auto_grid_scales_with_patience() {
        let g = GridSpec::DEFAULT_AUTO;
        let a = g.type_points(1.0, 0.9);
        let b = g.type_points(1.0, 0.999);
        assert!(b > a);
        assert_eq!(GridSpec::Points(77).type_points(1.0, 0.5), 77);
    }
}
