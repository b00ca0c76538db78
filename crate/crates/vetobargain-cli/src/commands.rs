use anyhow::{bail, Context};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use vetobargain::leapfrog::{self, Construction};
use vetobargain::primitives::{even_points, Belief, GridSpec, ACTION_MAX};
use vetobargain::skim::{self, SweepRow};
use vetobargain::static_mech;
use vetobargain::two_type::{
    classify, monte_carlo, simulate, Distortion, MonteCarlo, Side, TwoTypeStrategy,
};
use vetobargain::verify::{
    eps_equilibrium, type_sample, CheckConfig, DeviationReport, SkimProfile, StrategyProfile,
    TwoTypeProfile,
};

use crate::config::{Config, Mutation, ProfileKind, SweepKind};
use crate::output::{Emitter, FanChart, Series};

/// The verification ran but the profile failed it.
#[derive(Debug)]
pub struct VerificationFailed(pub String);

impl std::fmt::Display for VerificationFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "verification failed: {}", self.0)
    }
}

impl std::error::Error for VerificationFailed {}

const TERMINAL_SHIFT: f64 = 0.1;
const GUARD_PROBES: usize = 201;

fn num(x: f64) -> String {
    format!("{x}")
}

pub fn run_static(cfg: &Config, out: &mut Emitter) -> anyhow::Result<()> {
    let f = cfg.distribution()?;
    let u = cfg.utility()?;
    let rep = static_mech::optimal_interval(&Belief::full(&f), &u)?;
    #[derive(Serialize)]
    struct Summary {
        c_star: f64,
        #[serde(rename = "U")]
        u_commit: f64,
        #[serde(rename = "U_full")]
        u_full: f64,
        commitment_premium: f64,
        curve_points: usize,
    }
    out.json(
        "static",
        &Summary {
            c_star: rep.c_star,
            u_commit: rep.u_commit,
            u_full: rep.u_full,
            commitment_premium: rep.commitment_premium(),
            curve_points: rep.payoff_curve.len(),
        },
    )?;
    let rows: Vec<Vec<String>> = rep
        .payoff_curve
        .iter()
        .map(|&(c, p)| vec![num(c), num(p)])
        .collect();
    out.csv("static_curve", &["c", "payoff"], &rows)?;
    println!(
        "c* = {}  U = {}  U_full = {}",
        rep.c_star, rep.u_commit, rep.u_full
    );
    Ok(())
}

pub fn run_two_type(
    cfg: &Config,
    simulate_n: Option<usize>,
    out: &mut Emitter,
) -> anyhow::Result<()> {
    let p = cfg.two_type_params()?;
    let eq = classify(&p)?;
    out.json("two_type", &eq)?;
    let th = &eq.thresholds;
    let rows: Vec<Vec<String>> = th
        .ladder
        .iter()
        .enumerate()
        .map(|(n, &a)| {
            let cut = th.cutoffs.get(n).map(|&c| num(c)).unwrap_or_default();
            vec![n.to_string(), num(a), cut]
        })
        .collect();
    out.csv("two_type_ladder", &["rung", "offer", "cutoff"], &rows)?;
    println!(
        "region = {:?}  mu_delta = {}  mu_bar_delta = {}  payoff = {}",
        eq.region, eq.mu_delta, eq.mu_bar_delta, eq.proposer_payoff
    );

    if let Some(n) = simulate_n {
        let Some(seed) = cfg.seed else {
            bail!("--simulate needs a seed (config `seed` or --seed)");
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        for i in 0..n {
            let side = if rng.random::<f64>() < p.mu0 {
                Side::High
            } else {
                Side::Low
            };
            let trace_seed = seed.wrapping_add(1 + i as u64);
            for step in simulate(&eq, side, trace_seed) {
                rows.push(vec![
                    i.to_string(),
                    format!("{side:?}").to_lowercase(),
                    step.period.to_string(),
                    num(step.offer),
                    step.accepted.to_string(),
                    num(step.posterior),
                ]);
            }
        }
        out.csv(
            "two_type_traces",
            &["trace", "side", "period", "offer", "accepted", "posterior"],
            &rows,
        )?;
        let mc: MonteCarlo = monte_carlo(&eq, n, seed);
        out.json("two_type_monte_carlo", &mc)?;
        println!(
            "monte carlo: {} traces, mean {} (se {})",
            mc.traces, mc.mean, mc.std_error
        );
    }
    Ok(())
}

fn fan_chart(title: &str, rows: &[SweepRow], u_commit: f64, u_full: f64) -> FanChart {
    let flat = |v: f64| rows.iter().map(|r| (r.delta, v)).collect();
    FanChart {
        title: title.to_string(),
        series: vec![
            Series {
                name: "payoff".into(),
                color: "#1f77b4",
                dashed: false,
                points: rows.iter().map(|r| (r.delta, r.payoff)).collect(),
            },
            Series {
                name: "U".into(),
                color: "#d62728",
                dashed: true,
                points: flat(u_commit),
            },
            Series {
                name: "U_full".into(),
                color: "#2ca02c",
                dashed: true,
                points: flat(u_full),
            },
        ],
    }
}

pub fn run_skim(cfg: &Config, out: &mut Emitter) -> anyhow::Result<()> {
    let f = cfg.distribution()?;
    let u = cfg.utility()?;
    let prior = Belief::full(&f);
    let rep = static_mech::optimal_interval(&prior, &u)?;
    #[derive(Serialize)]
    struct Summary {
        delta: f64,
        payoff: f64,
        floor_offer: f64,
        grid_points: usize,
        path_steps: usize,
        offers_strictly_decreasing: bool,
        bellman_residual: f64,
        indifference_residual: f64,
        tie_violations: usize,
        hypothesis_warning: Option<String>,
    }
    let mut summaries = Vec::new();
    let mut path_rows = Vec::new();
    let mut sweep = Vec::new();
    for &d in cfg.deltas()? {
        let g = skim::belief_grid(&prior, cfg.grid_spec(), d)?;
        let sol =
            skim::solve(&prior, &u, d, &g).with_context(|| format!("skim solve at δ = {d}"))?;
        for (k, s) in sol.path.iter().enumerate() {
            path_rows.push(vec![
                num(d),
                k.to_string(),
                num(s.v),
                num(s.offer),
                num(s.accept_lo),
                num(s.accept_hi),
            ]);
        }
        println!(
            "δ = {d}: payoff {} over {} path steps",
            sol.payoff,
            sol.path.len()
        );
        sweep.push(SweepRow {
            delta: d,
            payoff: sol.payoff,
            benchmark: rep.u_full,
            gap: (sol.payoff - rep.u_full).abs(),
            grid_points: sol.len(),
        });
        summaries.push(Summary {
            delta: d,
            payoff: sol.payoff,
            floor_offer: sol.floor_offer,
            grid_points: sol.len(),
            path_steps: sol.path.len(),
            offers_strictly_decreasing: sol.offers_strictly_decreasing(),
            bellman_residual: sol.diagnostics.bellman_residual,
            indifference_residual: sol.diagnostics.indifference_residual,
            tie_violations: sol.diagnostics.tie_violations,
            hypothesis_warning: sol.diagnostics.hypothesis_warning.clone(),
        });
    }
    out.json("skim", &summaries)?;
    out.csv(
        "skim_path",
        &["delta", "step", "v", "offer", "accept_lo", "accept_hi"],
        &path_rows,
    )?;
    out.svg(
        "skim",
        &fan_chart("skimming payoff", &sweep, rep.u_commit, rep.u_full),
    )?;
    Ok(())
}

pub fn run_leapfrog(cfg: &Config, out: &mut Emitter) -> anyhow::Result<()> {
    let f = cfg.distribution()?;
    let u = cfg.utility()?;
    let prior = Belief::full(&f);
    let rep = static_mech::optimal_interval(&prior, &u)?;
    #[derive(Serialize)]
    struct Summary {
        delta: f64,
        kind: &'static str,
        c_star: f64,
        payoff: f64,
        commitment_payoff: f64,
        gap_to_commitment: f64,
        first_offer: Option<f64>,
        path_offers: Vec<f64>,
        guard_holds: Option<bool>,
        max_deviation_payoff: Option<f64>,
    }
    let mut summaries = Vec::new();
    let mut rows = Vec::new();
    let mut sweep = Vec::new();
    for &d in cfg.deltas()? {
        let c = leapfrog::construct(&f, &u, d, cfg.grid_spec())
            .with_context(|| format!("leapfrog at δ = {d}"))?;
        let s = match &c {
            Construction::Leapfrog(eq) => {
                let g = skim::belief_grid(&prior, cfg.grid_spec(), d)?;
                let fallback = skim::solve(&prior, &u, d, &g)?;
                let guard =
                    leapfrog::deviation_guard(eq, &fallback, &even_points(0.0, 1.0, GUARD_PROBES));
                Summary {
                    delta: d,
                    kind: "leapfrog",
                    c_star: eq.c_star,
                    payoff: eq.payoff,
                    commitment_payoff: eq.commitment_payoff,
                    gap_to_commitment: eq.gap_to_commitment,
                    first_offer: Some(eq.first_offer),
                    path_offers: eq.path_offers(),
                    guard_holds: Some(guard.holds),
                    max_deviation_payoff: Some(guard.max_deviation_payoff),
                }
            }
            Construction::FullDelegation {
                delegation, skim, ..
            } => Summary {
                delta: d,
                kind: "full_delegation",
                c_star: delegation.c_star,
                payoff: skim.payoff,
                commitment_payoff: delegation.u_commit,
                gap_to_commitment: delegation.u_commit - skim.payoff,
                first_offer: None,
                path_offers: skim.path_offers(),
                guard_holds: None,
                max_deviation_payoff: None,
            },
        };
        println!(
            "δ = {d}: {} payoff {} gap {}",
            s.kind, s.payoff, s.gap_to_commitment
        );
        rows.push(vec![
            num(d),
            s.kind.to_string(),
            num(s.c_star),
            num(s.payoff),
            num(s.commitment_payoff),
            num(s.gap_to_commitment),
            s.guard_holds.map(|b| b.to_string()).unwrap_or_default(),
        ]);
        sweep.push(SweepRow {
            delta: d,
            payoff: s.payoff,
            benchmark: s.commitment_payoff,
            gap: s.gap_to_commitment,
            grid_points: 0,
        });
        summaries.push(s);
    }
    out.json("leapfrog", &summaries)?;
    out.csv(
        "leapfrog",
        &[
            "delta",
            "kind",
            "c_star",
            "payoff",
            "commitment_payoff",
            "gap",
            "guard_holds",
        ],
        &rows,
    )?;
    out.svg(
        "leapfrog",
        &fan_chart("leapfrogging payoff", &sweep, rep.u_commit, rep.u_full),
    )?;
    Ok(())
}

fn check<P: StrategyProfile>(
    profile: &P,
    types: Vec<f64>,
    cfg: &Config,
) -> anyhow::Result<DeviationReport> {
    let v = &cfg.verify;
    let check = CheckConfig {
        offer_grid: even_points(0.0, 1.0, v.offer_points),
        type_sample: types,
        horizon: v.horizon,
        eps: v.eps,
    };
    Ok(eps_equilibrium(profile, &check)?)
}

pub fn run_verify(cfg: &Config, out: &mut Emitter) -> anyhow::Result<()> {
    let v = &cfg.verify;
    let report = match v.profile {
        ProfileKind::TwoType => {
            let distortion = match v.mutation {
                Mutation::None => Distortion::default(),
                Mutation::SkipRung => Distortion {
                    skip_rung: Some(1),
                    ..Default::default()
                },
                Mutation::RejectionProbability => Distortion {
                    r_scale: 0.5,
                    ..Default::default()
                },
                Mutation::SkimProbability => Distortion {
                    lambda_shift: 0.5,
                    ..Default::default()
                },
                Mutation::OffPathBelief => Distortion {
                    flip_off_path: true,
                    ..Default::default()
                },
                Mutation::TerminalOffer => {
                    bail!("mutation `terminal_offer` applies to the skim profile")
                }
            };
            let eq = classify(&cfg.two_type_params()?)?;
            let profile = TwoTypeProfile::new(TwoTypeStrategy::distorted(eq, distortion));
            let types = profile.types();
            check(&profile, types, cfg)?
        }
        ProfileKind::Skim => {
            let shift = match v.mutation {
                Mutation::None => 0.0,
                Mutation::TerminalOffer => TERMINAL_SHIFT,
                m => bail!("mutation `{m:?}` applies to the two-type profile"),
            };
            let delta = match v.delta {
                Some(d) => d,
                None => *cfg.deltas()?.first().unwrap(),
            };
            let f = cfg.distribution()?;
            let prior = Belief::full(&f);
            let g = skim::belief_grid(&prior, GridSpec::Points(v.skim_points), delta)?;
            let sol = skim::solve(&prior, &cfg.utility()?, delta, &g)?;
            let profile = SkimProfile::new(sol, &prior).with_terminal_shift(shift);
            let types = type_sample(
                f.lower(),
                f.upper().min(ACTION_MAX),
                v.type_points,
                &profile.critical_types(),
            );
            check(&profile, types, cfg)?
        }
    };
    out.json("verify", &report)?;
    println!(
        "{}: proposer gain {:.3e}, vetoer gain {:.3e}, eps {}",
        if report.passed { "passed" } else { "FAILED" },
        report.max_proposer_gain,
        report.max_vetoer_gain,
        report.eps
    );
    if !report.passed {
        let why = match report.witnesses.first() {
            Some(w) => format!(
                "{:?} gains {:.3e} at {} by {}",
                w.player, w.gain, w.state, w.deviation
            ),
            None => format!("{} encoding errors", report.encoding_errors.len()),
        };
        return Err(VerificationFailed(why).into());
    }
    Ok(())
}

pub fn run_sweep(cfg: &Config, out: &mut Emitter) -> anyhow::Result<()> {
    let f = cfg.distribution()?;
    let u = cfg.utility()?;
    let prior = Belief::full(&f);
    let rep = static_mech::optimal_interval(&prior, &u)?;
    let deltas = cfg.deltas()?;
    let (rows, title) = match cfg.sweep.kind {
        SweepKind::Skim => (
            skim::limit_sweep(&prior, &u, deltas, cfg.grid_spec())?,
            "skimming payoff against full delegation",
        ),
        SweepKind::Leapfrog => (
            leapfrog::commitment_gap_sweep(&f, &u, deltas, cfg.grid_spec())?,
            "leapfrogging payoff against commitment",
        ),
    };
    for r in &rows {
        println!(
            "δ = {}: payoff {} benchmark {} gap {}",
            r.delta, r.payoff, r.benchmark, r.gap
        );
    }
    out.json("sweep", &rows)?;
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![num(r.delta), num(r.payoff), num(r.benchmark), num(r.gap)])
        .collect();
    out.csv("sweep", &["delta", "payoff", "benchmark", "gap"], &table)?;
    out.svg("sweep", &fan_chart(title, &rows, rep.u_commit, rep.u_full))?;
    Ok(())
}
