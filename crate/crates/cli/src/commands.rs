use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use refugia::asymptotics;
use refugia::continuation::{self, Branch, Crossing};
use refugia::evolution::{self, Outcome};
use refugia::steady::{self, MultistartConfig, SteadyState};
use refugia::thresholds::{self, Verdict};
use refugia::{spectra, verify, Field, Grid, ModelParams, Region};
use serde_json::json;

use crate::config::{parse_range, ConfigError, RunConfig};
use crate::output::{num, opt, Run, Table};
use crate::svg::{Plot, Series};
use crate::{Mode, Origin, EXIT_TIME_REACHED, EXIT_VERIFY_FAILED};

pub fn eig(cfg: RunConfig, mu_grid: &str) -> Result<u8> {
    let grid = cfg.validate()?;
    let mus = parse_range(mu_grid)?;
    let b = cfg.model.b;
    let sigma: Vec<f64> = mus
        .par_iter()
        .map(|&mu| spectra::sigma1_curve(&grid, b, mu))
        .collect::<refugia::Result<_>>()?;
    let dirichlet = spectra::sigma1_dirichlet(&grid)?;

    let mut run = Run::new("eig", &cfg, &grid)?;
    let mut t = Table::new(&["mu", "sigma1"]);
    for (mu, s) in mus.iter().zip(&sigma) {
        t.push(vec![num(*mu), num(*s)]);
    }
    run.csv("eig.csv", &t)?;
    let curve: Vec<(f64, f64)> = mus.iter().cloned().zip(sigma.iter().cloned()).collect();
    let mut plot = Plot::new("principal eigenvalue of the habitat well", "mu", "sigma1")
        .with(Series::line("sigma1(b mu)", curve))
        .with(Series::line(
            "refuge Dirichlet",
            vec![(mus[0], dirichlet), (*mus.last().unwrap(), dirichlet)],
        ));
    plot.log_x = mus.iter().all(|m| *m > 0.0);
    run.svg("eig.svg", &plot.render())?;
    let increasing = sigma.windows(2).zip(mus.windows(2)).all(|(s, m)| (s[1] - s[0]) * (m[1] - m[0]) > 0.0);
    run.finish(json!({
        "points": mus.len(),
        "sigma1_dirichlet": dirichlet,
        "increasing": increasing,
    }))?;
    Ok(0)
}

pub fn regions(cfg: RunConfig, lambda: &str, mu: &str, alpha: Option<f64>) -> Result<u8> {
    let grid = cfg.validate()?;
    let lambdas = parse_range(lambda)?;
    let mus = parse_range(mu)?;
    if lambdas.iter().any(|l| !(*l > 0.0)) {
        return Err(ConfigError("lambda range must be positive".into()).into());
    }
    let alpha = alpha.unwrap_or(cfg.model.alpha);
    if !(alpha >= 0.0) {
        return Err(ConfigError(format!("alpha must be nonnegative, got {alpha}")).into());
    }
    let ModelParams { b, c, .. } = cfg.model;
    let points: Vec<(f64, f64)> = mus.iter().flat_map(|&m| lambdas.iter().map(move |&l| (l, m))).collect();
    let verdicts: Vec<thresholds::RegionVerdict> = points
        .par_iter()
        .map(|&(l, m)| thresholds::classify(&grid, l, m, alpha, b, c))
        .collect::<refugia::Result<_>>()?;

    let mut run = Run::new("regions", &cfg, &grid)?;
    let mut t = Table::new(&["lambda", "mu", "verdict", "ell_tilde", "m", "sigma1_curve", "gamma_u_onset"]);
    for v in &verdicts {
        t.push(vec![
            num(v.lambda),
            num(v.mu),
            verdict_name(v.verdict).to_string(),
            opt(v.ell_tilde),
            opt(v.m),
            opt(v.sigma1),
            opt(v.gamma_u_onset),
        ]);
    }
    run.csv("regions.csv", &t)?;

    let positive_mu: Vec<f64> = mus.iter().cloned().filter(|m| *m > 0.0).collect();
    let curves: Vec<(f64, f64, f64)> = positive_mu
        .par_iter()
        .map(|&m| {
            let s = spectra::sigma1_curve(&grid, b, m)?;
            let lt = if alpha == 0.0 || m <= c / (alpha * b) {
                s
            } else {
                thresholds::ell(&grid, m, alpha, b, c)?
            };
            Ok((m, s, lt))
        })
        .collect::<refugia::Result<_>>()?;
    let mut plot = Plot::new(&format!("parameter regions, alpha = {alpha}"), "mu", "lambda")
        .with(Series::line(
            "lambda = sigma1(b mu)",
            curves.iter().map(|&(m, s, _)| (m, s)).collect(),
        ))
        .with(Series::line(
            "ell_tilde",
            curves.iter().map(|&(m, _, l)| (m, l)).collect(),
        ));
    let negative_mu: Vec<f64> = mus.iter().cloned().filter(|m| *m < 0.0).collect();
    if !negative_mu.is_empty() {
        plot = plot
            .with(Series::line(
                "lambda = |mu|/c",
                negative_mu.iter().map(|&m| (m, -m / c)).collect(),
            ))
            .with(Series::line(
                "mu = m(lambda)",
                lambdas
                    .iter()
                    .map(|&l| (thresholds::m_curve(l, alpha, c), l))
                    .filter(|&(m, _)| m >= mus[0])
                    .collect(),
            ));
    }
    for kind in [
        Verdict::NonexistenceByGrowthBound,
        Verdict::NonexistenceByPredatorBound,
        Verdict::ExistenceGuaranteed,
    ] {
        let pts: Vec<(f64, f64)> = verdicts
            .iter()
            .filter(|v| v.verdict == kind)
            .map(|v| (v.mu, v.lambda))
            .collect();
        if !pts.is_empty() {
            plot = plot.with(Series::markers(verdict_name(kind), pts));
        }
    }
    run.svg("regions.svg", &plot.render())?;
    let count = |k: Verdict| verdicts.iter().filter(|v| v.verdict == k).count();
    run.finish(json!({
        "alpha": alpha,
        "points": verdicts.len(),
        "nonexistence_growth_bound": count(Verdict::NonexistenceByGrowthBound),
        "nonexistence_predator_bound": count(Verdict::NonexistenceByPredatorBound),
        "existence_guaranteed": count(Verdict::ExistenceGuaranteed),
        "indeterminate": count(Verdict::Indeterminate),
    }))?;
    Ok(0)
}

fn verdict_name(v: Verdict) -> &'static str {
    match v {
        Verdict::NonexistenceByGrowthBound => "nonexistence_growth_bound",
        Verdict::NonexistenceByPredatorBound => "nonexistence_predator_bound",
        Verdict::ExistenceGuaranteed => "existence_guaranteed",
        Verdict::Indeterminate => "indeterminate",
    }
}

fn solution_record(grid: &Grid, s: &SteadyState) -> Result<serde_json::Value> {
    let h = grid.h();
    let (u_ok, v_ok) = s.within_bounds(10.0 * h * h);
    let ids = steady::integral_identities(grid, &s.params, &s.u, &s.v)?;
    Ok(json!({
        "residual": s.residual_norm,
        "iterations": s.iterations,
        "positive": s.is_positive(),
        "u_max": s.u.max(),
        "u_min": s.u.min(),
        "u_mean": grid.mean(&s.u),
        "v_max": s.v.max(),
        "v_min": s.v.min(),
        "v_mean": grid.mean(&s.v),
        "u_within_bound": u_ok,
        "v_within_bound": v_ok,
        "prey_identity": ids.prey,
        "predator_identity": ids.predator,
    }))
}

fn fields_table(grid: &Grid, u: &Field, v: &Field) -> Table {
    let mut t = Table::new(&["node", "x", "y", "region", "u", "v"]);
    for (i, x) in grid.coords().iter().enumerate() {
        let vk = grid
            .local_index(Region::Habitat, i)
            .map(|k| num(v.values()[k]))
            .unwrap_or_default();
        let region = match grid.label(i) {
            Region::Refuge => "refuge",
            _ => "habitat",
        };
        t.push(vec![
            i.to_string(),
            num(x[0]),
            num(x[1]),
            region.to_string(),
            num(u.values()[i]),
            vk,
        ]);
    }
    t
}

pub fn steady(cfg: RunConfig, multistart: Option<usize>, fields: bool) -> Result<u8> {
    let grid = cfg.validate()?;
    let params = cfg.model;
    let states = match multistart {
        Some(starts) => {
            let report = steady::multistart(
                &grid,
                &params,
                &MultistartConfig {
                    starts,
                    seed: cfg.seed,
                    newton: cfg.newton,
                },
            )?;
            eprintln!(
                "{} of {starts} starts converged; {} distinct positive solutions",
                report.converged,
                report.positive.len()
            );
            report.positive
        }
        None => {
            let mut ccfg = cfg.continuation;
            ccfg.newton = cfg.newton;
            vec![continuation::positive_solution(&grid, &params, Crossing::Last, &ccfg)
                .context("following the branch of positive solutions")?]
        }
    };
    let verdict = if params.lambda > 0.0 {
        Some(thresholds::classify(&grid, params.lambda, params.mu, params.alpha, params.b, params.c)?)
    } else {
        None
    };
    let mut run = Run::new("steady", &cfg, &grid)?;
    let records: Vec<serde_json::Value> = states.iter().map(|s| solution_record(&grid, s)).collect::<Result<_>>()?;
    run.json(
        "solution.json",
        &json!({
            "params": params,
            "region": verdict,
            "solutions": records,
        }),
    )?;
    if fields {
        for (k, s) in states.iter().enumerate() {
            run.csv(&format!("fields_{k}.csv"), &fields_table(&grid, &s.u, &s.v))?;
        }
    }
    run.finish(json!({ "solutions": states.len() }))?;
    Ok(0)
}

fn branch_plot(title: &str, branch: &Branch, origin: f64, y_label: &str) -> Plot {
    let line: Vec<(f64, f64)> = branch.points.iter().map(|p| (p.lambda, p.u.max())).collect();
    let folds: Vec<(f64, f64)> = branch.folds().iter().map(|&i| line[i]).collect();
    let mut plot = Plot::new(title, "lambda", y_label)
        .with(Series::line("branch", line))
        .with(Series::markers("bifurcation point", vec![(origin, 0.0)]));
    if !folds.is_empty() {
        plot = plot.with(Series::markers("fold", folds));
    }
    plot
}

pub fn continue_branch(cfg: RunConfig, from: Origin, seed_step: f64) -> Result<u8> {
    let grid = cfg.validate()?;
    let params = cfg.model;
    let mut ccfg = cfg.continuation;
    ccfg.newton = cfg.newton;
    let (branch, origin, name) = match from {
        Origin::GammaV => {
            if !(params.mu > 0.0) {
                return Err(ConfigError("branches from the predator-only state need mu > 0".into()).into());
            }
            let origin = spectra::sigma1_curve(&grid, params.b, params.mu)?;
            (continuation::branch_from_gamma_v(&grid, &params, seed_step, &ccfg)?, origin, "gamma_v")
        }
        Origin::GammaU => {
            if !(params.mu < 0.0) {
                return Err(ConfigError("branches from the prey-only state need mu < 0".into()).into());
            }
            let origin = -params.mu / params.c;
            (continuation::branch_from_gamma_u(&grid, &params, seed_step, &ccfg)?, origin, "gamma_u")
        }
        Origin::Lp2 => {
            if !(params.mu > 0.0) {
                return Err(ConfigError("the limit system needs mu > 0".into()).into());
            }
            let origin = spectra::sigma1_curve(&grid, params.b, params.mu)?;
            (
                continuation::continue_lp2_branch(&grid, params.mu, params.b, seed_step, &ccfg)?,
                origin,
                "limit_system",
            )
        }
    };
    let mut run = Run::new("continue", &cfg, &grid)?;
    let mut t = Table::new(&["s", "lambda", "u_max", "v_max", "u_mean", "v_mean", "fold", "residual"]);
    let folds = branch.folds();
    for (i, p) in branch.points.iter().enumerate() {
        t.push(vec![
            num(p.s),
            num(p.lambda),
            num(p.u.max()),
            num(p.v.max()),
            num(grid.mean(&p.u)),
            num(grid.mean(&p.v)),
            (folds.contains(&i) as u8).to_string(),
            num(p.residual),
        ]);
    }
    run.csv("branch.csv", &t)?;
    let y = if matches!(from, Origin::Lp2) { "max w" } else { "max u" };
    let title = format!("branch from {name}, mu = {}, alpha = {}", params.mu, params.alpha);
    run.svg("branch.svg", &branch_plot(&title, &branch, origin, y).render())?;
    let fold_lambdas: Vec<f64> = folds.iter().map(|&i| branch.points[i].lambda).collect();
    eprintln!(
        "{} points, folds at {:?}, termination {:?}",
        branch.points.len(),
        fold_lambdas,
        branch.termination
    );
    run.finish(json!({
        "origin": origin,
        "points": branch.points.len(),
        "folds": fold_lambdas,
        "termination": branch.termination,
        "first_lambda": branch.points.first().map(|p| p.lambda),
        "last_lambda": branch.points.last().map(|p| p.lambda),
    }))?;
    Ok(0)
}

/// Smooth positive initial data inside the a priori box.
fn initial_data(grid: &Grid, params: &ModelParams) -> (Field, Field) {
    let [[x0, x1], [y0, y1]] = grid.bounding_box();
    let sx = 2.0 * std::f64::consts::PI / (x1 - x0).max(f64::MIN_POSITIVE);
    let sy = std::f64::consts::PI / (y1 - y0).max(f64::MIN_POSITIVE);
    let lambda = params.lambda.max(0.1);
    let bound = params.predator_bound().max(0.1);
    let u = Field::from_fn(grid, Region::Domain, |p| {
        lambda * (0.5 + 0.25 * (sx * (p[0] - x0)).cos() + 0.1 * (sy * (p[1] - y0)).cos())
    });
    let v = Field::from_fn(grid, Region::Habitat, |p| bound * (0.5 + 0.25 * (sx * (p[0] - x0)).sin()));
    (u, v)
}

pub fn evolve(cfg: RunConfig) -> Result<u8> {
    let grid = cfg.validate()?;
    let params = cfg.model;
    let (u0, v0) = initial_data(&grid, &params);
    let traj = evolution::evolve(&grid, &params, &u0, &v0, &cfg.evolution)?;
    let mut run = Run::new("evolve", &cfg, &grid)?;
    let mut t = Table::new(&["t", "dt", "min_u", "min_v", "mass_u", "mass_v", "rate", "residual"]);
    for m in &traj.monitors {
        t.push(vec![
            num(m.t),
            num(m.dt),
            num(m.min_u),
            num(m.min_v),
            num(m.mass_u),
            num(m.mass_v),
            num(m.rate),
            num(m.residual),
        ]);
    }
    run.csv("monitor.csv", &t)?;
    for (k, (time, u, v)) in traj.snapshots.iter().enumerate() {
        let name = format!("snapshot_{k:04}.csv");
        run.csv(&name, &fields_table(&grid, u, v))
            .with_context(|| format!("snapshot at t = {time}"))?;
    }
    run.csv("final_fields.csv", &fields_table(&grid, &traj.u, &traj.v))?;
    let plot = Plot::new("evolution", "t", "mass")
        .with(Series::line("prey mass", traj.monitors.iter().map(|m| (m.t, m.mass_u)).collect()))
        .with(Series::line(
            "predator mass",
            traj.monitors.iter().map(|m| (m.t, m.mass_v)).collect(),
        ));
    run.svg("monitor.svg", &plot.render())?;
    let residual = evolution::steady_residual_monitor(&grid, &params, &traj.u, &traj.v)?;
    eprintln!(
        "{:?} at t = {:.4} after {} steps ({} rejected), steady residual {residual:.2e}",
        traj.outcome, traj.t, traj.steps, traj.rejected
    );
    run.finish(json!({
        "outcome": traj.outcome,
        "t": traj.t,
        "steps": traj.steps,
        "rejected": traj.rejected,
        "min_u": traj.min_u,
        "min_v": traj.min_v,
        "cutoff_active_steps": traj.cutoff_active_steps,
        "steady_residual": residual,
        "snapshots": traj.snapshots.len(),
    }))?;
    Ok(match traj.outcome {
        Outcome::SteadyDetected => 0,
        Outcome::TimeReached => EXIT_TIME_REACHED,
    })
}

pub fn asymptotics(cfg: RunConfig, mode: Mode, lambda_factor: f64) -> Result<u8> {
    let grid = cfg.validate()?;
    let ModelParams { mu, b, c, .. } = cfg.model;
    if !(mu > 0.0) {
        return Err(ConfigError("the asymptotic sweeps need mu > 0".into()).into());
    }
    let mut ccfg = cfg.continuation;
    ccfg.newton = cfg.newton;
    let sigma = spectra::sigma1_curve(&grid, b, mu)?;
    let mut run = Run::new("asymptotics", &cfg, &grid)?;
    let summary = match mode {
        Mode::Alpha => {
            if !(lambda_factor > 0.0) {
                bail!(ConfigError("lambda factor must be positive".into()));
            }
            let lambda = lambda_factor * sigma;
            let rows = asymptotics::alpha_sweep(&grid, lambda, mu, b, c, &cfg.sweeps.alphas, &ccfg)?;
            let mut t = Table::new(&["alpha", "prey_gap", "predator_norm", "rescaled_gap", "case", "error"]);
            for r in &rows {
                t.push(vec![
                    num(r.alpha),
                    opt(r.prey_gap),
                    opt(r.predator_norm),
                    opt(r.rescaled_gap),
                    r.case.map(|c| format!("{c:?}").to_lowercase()).unwrap_or_default(),
                    r.error.clone().unwrap_or_default().replace(',', ";"),
                ]);
            }
            run.csv("alpha_sweep.csv", &t)?;
            let to_prey_only: Vec<(f64, f64)> = rows
                .iter()
                .filter_map(|r| Some((r.alpha, r.prey_gap? + r.predator_norm?)))
                .collect();
            let rescaled: Vec<(f64, f64)> = rows.iter().filter_map(|r| Some((r.alpha, r.rescaled_gap?))).collect();
            let mut plot = Plot::new(&format!("flux sweep at lambda = {lambda:.4}"), "alpha", "gap")
                .log_log()
                .with(Series::line("|u - lambda| + |v|", to_prey_only.clone()));
            if !rescaled.is_empty() {
                plot = plot.with(Series::line("|alpha u - w|", rescaled));
            }
            run.svg("alpha_sweep.svg", &plot.render())?;
            json!({
                "lambda": lambda,
                "sigma1": sigma,
                "gaps": to_prey_only.iter().map(|p| p.1).collect::<Vec<_>>(),
                "failures": rows.iter().filter(|r| r.error.is_some()).count(),
            })
        }
        Mode::Lambda0 => {
            let lambdas: Vec<f64> = cfg.sweeps.lambda_factors.iter().map(|f| f * sigma).collect();
            let rows = asymptotics::lp2_scaling_probe(&grid, mu, b, &lambdas, &ccfg)?;
            let (s0, t0) = asymptotics::base_point(&grid, b, mu);
            let jac = asymptotics::jacobian_base_point(&grid, b, mu)?;
            let mut t = Table::new(&[
                "lambda",
                "w_max",
                "lambda_w_max",
                "mean_v_over_lambda",
                "min_v_over_lambda",
                "max_v_over_lambda",
                "harnack_ratio",
                "within_bounds",
                "s",
                "t",
                "phi_error",
                "psi_norm",
                "residual",
            ]);
            for r in &rows {
                t.push(vec![
                    num(r.lambda),
                    num(r.w_max),
                    num(r.scaled_w_max),
                    num(r.scaled_v_mean),
                    num(r.min_v_over_lambda),
                    num(r.max_v_over_lambda),
                    num(r.harnack_ratio),
                    (r.within_bounds as u8).to_string(),
                    num(r.s),
                    num(r.t),
                    num(r.phi_error),
                    num(r.psi_norm),
                    num(r.residual),
                ]);
            }
            run.csv("lambda0_scaling.csv", &t)?;
            let inv: Vec<f64> = rows.iter().map(|r| 1.0 / r.lambda).collect();
            let wmax: Vec<f64> = rows.iter().map(|r| r.w_max).collect();
            let slope = asymptotics::loglog_slope(&inv, &wmax);
            let plot = Plot::new("limit system as lambda -> 0", "1/lambda", "max w")
                .log_log()
                .with(Series::markers("max w", inv.iter().cloned().zip(wmax.iter().cloned()).collect()))
                .with(Series::line("s0 / lambda", inv.iter().map(|&x| (x, s0 * x)).collect()));
            run.svg("lambda0_scaling.svg", &plot.render())?;
            json!({
                "sigma1": sigma,
                "slope": slope,
                "s0": s0,
                "t0": t0,
                "det_j": jac.det,
                "all_within_bounds": rows.iter().all(|r| r.within_bounds),
            })
        }
    };
    eprintln!("{summary}");
    run.finish(summary)?;
    Ok(0)
}

pub fn verify(cfg: RunConfig) -> Result<u8> {
    let grid = cfg.validate()?;
    let reports = verify::run_all();
    for r in &reports {
        println!("{r}");
    }
    let mut run = Run::new("verify", &cfg, &grid)?;
    let mut t = Table::new(&["criterion", "name", "passed", "seconds"]);
    for r in &reports {
        t.push(vec![r.id.to_string(), r.name.to_string(), r.passed.to_string(), format!("{:.3}", r.seconds)]);
    }
    run.csv("verify.csv", &t)?;
    run.json("verify.json", &reports)?;
    let failed: Vec<usize> = reports.iter().filter(|r| !r.passed).map(|r| r.id).collect();
    run.finish(json!({ "passed": reports.len() - failed.len(), "failed": failed }))?;
    Ok(if failed.is_empty() { 0 } else { EXIT_VERIFY_FAILED })
}
