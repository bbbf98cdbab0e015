//! End-to-end checks of the library against closed-form facts about the
//! model. Each check returns a [`CriterionReport`]; the same functions back
//! the `verify` command and the acceptance tests.

use std::sync::Mutex;
use std::time::Instant;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::asymptotics;
use crate::continuation::{self, Branch, ContinuationConfig, Crossing, Termination};
use crate::error::{Error, Result};
use crate::evolution::{self, EvolutionConfig, Outcome};
use crate::geometry::{DomainSpec, Field, Grid, Region};
use crate::model::ModelParams;
use crate::operators::{self, Operator};
use crate::spectra;
use crate::steady::{self, Lp2, MultistartConfig, Sp2, SteadyState, SteadySystem};
use crate::thresholds::{self, DirectionData};

#[derive(Debug, Clone, Serialize)]
pub struct CriterionReport {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl std::fmt::Display for CriterionReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "[{}] criterion {:>2} {}: {} ({:.1}s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail,
            self.seconds
        )
    }
}

/// Maxima of positive solutions met along the way, for the a priori box check.
#[derive(Debug, Default)]
pub struct SolutionLog {
    entries: Mutex<Vec<(ModelParams, f64, f64, f64)>>,
}

impl SolutionLog {
    /// Record `(params, max u, max v, h)`.
    pub fn record(&self, params: &ModelParams, u_max: f64, v_max: f64, h: f64) {
        self.entries.lock().unwrap().push((*params, u_max, v_max, h));
    }

    pub fn record_state(&self, state: &SteadyState, h: f64) {
        if state.is_positive() {
            self.record(&state.params, state.u.max(), state.v.max(), h);
        }
    }

    pub fn record_branch(&self, params: &ModelParams, branch: &Branch, h: f64) {
        for p in &branch.points {
            self.record(&params.with_lambda(p.lambda), p.u.max(), p.v.max(), h);
        }
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn snapshot(&self) -> Vec<(ModelParams, f64, f64, f64)> {
        self.entries.lock().unwrap().clone()
    }
}

const B: f64 = 1.0;
const C: f64 = 1.0;
const MU_POS: f64 = 2.0;
const MU_NEG: f64 = -1.0;

fn ring() -> Result<Grid> {
    Grid::build(&DomainSpec::ring_fixture())
}

fn rect() -> Result<Grid> {
    Grid::build(&DomainSpec::rect_fixture())
}

/// Principal Dirichlet eigenvalue of the refuge in closed form.
pub fn analytic_dirichlet(spec: &DomainSpec) -> f64 {
    use std::f64::consts::PI;
    match spec {
        DomainSpec::Ring { refuge_length, .. } => (PI / refuge_length).powi(2),
        DomainSpec::RectWithHole { hole_x, hole_y, .. } => {
            PI * PI * ((hole_x[1] - hole_x[0]).powi(-2) + (hole_y[1] - hole_y[0]).powi(-2))
        }
    }
}

/// Smallest eigenvalue of `-L + diag(q)` from a dense symmetric eigensolver.
pub fn dense_principal_eigenvalue(op: &Operator, q: &[f64]) -> f64 {
    let k = op.stiffness().to_dense();
    let n = op.len();
    let s: Vec<f64> = op.weights().iter().map(|w| 1.0 / w.sqrt()).collect();
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] = s[i] * k[(i, j)] * s[j];
        }
        a[(i, i)] += q[i];
    }
    SymmetricEigen::new(a).eigenvalues.min()
}

fn run(id: usize, name: &'static str, f: impl FnOnce() -> Result<(bool, String)>) -> CriterionReport {
    let start = Instant::now();
    let (passed, detail) = match f() {
        Ok(r) => r,
        Err(e) => (false, format!("error: {e}")),
    };
    CriterionReport {
        id,
        name,
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| (lo.ln() + (hi.ln() - lo.ln()) * k as f64 / (n - 1) as f64).exp())
        .collect()
}

fn eigen_curve_checks(spec: &DomainSpec) -> Result<(bool, String)> {
    let grid = Grid::build(spec)?;
    let mus = logspace(0.1, 1e3, 50);
    let sig: Vec<f64> = mus
        .par_iter()
        .map(|&mu| spectra::sigma1_curve(&grid, B, mu))
        .collect::<Result<_>>()?;
    let increasing = sig.windows(2).all(|w| w[1] > w[0]);
    let below = sig.iter().zip(&mus).all(|(s, mu)| *s < B * mu);
    let at_zero = spectra::sigma1_curve(&grid, B, 0.0)?.abs();
    let dirichlet = spectra::sigma1_dirichlet(&grid)?;
    let saturated = spectra::sigma1_curve(&grid, B, 1e6)?;
    let sat_rel = (dirichlet - saturated).abs() / dirichlet;
    let exact = analytic_dirichlet(spec);
    let fine = spectra::sigma1_dirichlet(&Grid::build(&spec.refined(2))?)?;
    let ratio = (dirichlet - exact).abs() / (fine - exact).abs();
    let passed = increasing && below && at_zero <= 1e-9 && sat_rel <= 0.02 && (3.5..=4.5).contains(&ratio);
    Ok((
        passed,
        format!(
            "increasing={increasing} below_bmu={below} sigma(0)={at_zero:.1e} \
             |sigma(1e6)-sigmaD|/sigmaD={sat_rel:.2e} sigmaD={dirichlet:.6} exact={exact:.6} error_ratio={ratio:.3}"
        ),
    ))
}

/// Eigenvalue curve on both fixtures: monotone, below `bμ`, zero at `μ = 0`,
/// saturating at the refuge Dirichlet eigenvalue, which converges at second
/// order.
pub fn criterion_1() -> CriterionReport {
    run(1, "eigenvalue curve", || {
        let (a, da) = eigen_curve_checks(&DomainSpec::ring_fixture())?;
        let (b, db) = eigen_curve_checks(&DomainSpec::rect_fixture())?;
        Ok((a && b, format!("ring: {da}; rect: {db}")))
    })
}

fn mesh_h(grid: &Grid) -> f64 {
    grid.h()
}

/// Branch off the predator-only state below the direction threshold.
pub fn criterion_2(log: &SolutionLog) -> CriterionReport {
    run(2, "bifurcation from predator-only state", || {
        let grid = ring()?;
        let sigma = spectra::sigma1_curve(&grid, B, MU_POS)?;
        let params = ModelParams::new(sigma, MU_POS, B, C, 1.0)?;
        let cfg = ContinuationConfig {
            lambda_window: Some([0.0, sigma + 2.0]),
            ..Default::default()
        };
        let branch = continuation::branch_from_gamma_v(&grid, &params, 1e-3, &cfg)?;
        log.record_branch(&params, &branch, mesh_h(&grid));
        let origin = branch.points[0].lambda;
        let rel = (origin - sigma).abs() / sigma;
        let last = branch.points.last().unwrap().lambda;
        let spans = matches!(branch.termination, Termination::LambdaWindow) && last >= origin + 2.0;
        let positive = branch.points.iter().all(|p| p.u.min() > 0.0 && p.v.min() > 0.0);
        let chord = branch.points.iter().skip(1).map(|p| p.constraint.abs()).fold(0.0, f64::max);
        Ok((
            rel <= 5e-3 && spans && positive && chord <= 1e-10,
            format!(
                "origin={origin:.6} sigma1={sigma:.6} rel={rel:.1e} last_lambda={last:.4} points={} \
                 termination={:?} positive={positive} max_chord_residual={chord:.1e}",
                branch.points.len(),
                branch.termination
            ),
        ))
    })
}

/// Sign of the bifurcation direction across the flux threshold `α*`.
pub fn criterion_3(log: &SolutionLog) -> CriterionReport {
    run(3, "direction threshold", || {
        let grid = ring()?;
        let data = DirectionData::new(&grid, B, C, MU_POS)?;
        let at_zero = data.lambda_prime(0.0);
        let scan: Vec<f64> = (0..40).map(|k| 1e-3 * 2f64.powi(k)).collect();
        let signs: Vec<bool> = scan.iter().map(|&a| data.lambda_prime(a) > 0.0).collect();
        let changes = signs.windows(2).filter(|w| w[0] != w[1]).count();
        let astar = thresholds::alpha_star_from(&data)?;
        let cfg = ContinuationConfig::default();
        let mut sides = Vec::new();
        for alpha in [0.5 * astar, 2.0 * astar] {
            let params = ModelParams::new(data.sigma1, MU_POS, B, C, alpha)?;
            let (p, _) = continuation::seed_from_gamma_v_with(&grid, &params, &data, 1e-3, &cfg)?;
            log.record(&params.with_lambda(p.lambda), p.u.max(), p.v.max(), mesh_h(&grid));
            let side = (p.lambda - data.sigma1).signum();
            sides.push((alpha, side, data.lambda_prime(alpha).signum()));
        }
        let matches = sides.iter().all(|(_, a, b)| a == b);
        Ok((
            at_zero > 0.0 && changes == 1 && matches,
            format!("lambda'(0)|alpha=0 = {at_zero:.4} sign_changes={changes} alpha*={astar:.4} entry_sides={sides:?}"),
        ))
    })
}

/// A fold below the bifurcation value for strong flux, with two positive
/// solutions between the fold and the bifurcation value.
pub fn criterion_4(log: &SolutionLog) -> CriterionReport {
    run(4, "fold and multiplicity", || {
        let grid = ring()?;
        let data = DirectionData::new(&grid, B, C, MU_POS)?;
        let astar = thresholds::alpha_star_from(&data)?;
        let sigma = data.sigma1;
        let params = ModelParams::new(sigma, MU_POS, B, C, 4.0 * astar)?;
        let cfg = ContinuationConfig {
            lambda_window: Some([0.0, sigma + 2.0]),
            ..Default::default()
        };
        let branch = continuation::branch_from_gamma_v(&grid, &params, 1e-3, &cfg)?;
        log.record_branch(&params, &branch, mesh_h(&grid));
        let folds: Vec<f64> = branch.folds().iter().map(|&i| branch.points[i].lambda).collect();
        let Some(fold) = folds.iter().cloned().reduce(f64::min) else {
            return Ok((false, "no fold found".into()));
        };
        let mid = 0.5 * (fold + sigma);
        let report = steady::multistart(
            &grid,
            &params.with_lambda(mid),
            &MultistartConfig {
                starts: 50,
                seed: 4,
                ..Default::default()
            },
        )?;
        for s in &report.positive {
            log.record_state(s, mesh_h(&grid));
        }
        let n = report.positive.len();
        let mut min_dist = f64::INFINITY;
        for i in 0..n {
            for j in 0..i {
                min_dist = min_dist.min(report.positive[i].distance(&report.positive[j]));
            }
        }
        Ok((
            fold < sigma && n >= 2 && min_dist > 1e-3,
            format!(
                "alpha={:.3} folds={folds:?} sigma1={sigma:.6} lambda_mid={mid:.6} distinct_positive={n} \
                 min_pairwise_distance={min_dist:.3e}",
                4.0 * astar
            ),
        ))
    })
}

/// Branch off the prey-only state for negative predator growth.
pub fn criterion_5(log: &SolutionLog) -> CriterionReport {
    run(5, "bifurcation from prey-only state", || {
        let grid = ring()?;
        let onset = -MU_NEG / C;
        let params = ModelParams::new(onset, MU_NEG, B, C, 1.0)?;
        let (p, _) = continuation::seed_from_gamma_u(&grid, &params, 1e-3, &ContinuationConfig::default())?;
        log.record(&params.with_lambda(p.lambda), p.u.max(), p.v.max(), mesh_h(&grid));
        let rel = (p.lambda - onset).abs() / onset;
        let mut slopes = Vec::new();
        for alpha in [0.0, 1.0, 10.0, 100.0] {
            slopes.push(thresholds::lambda_prime0_gamma_u(&grid, &params.with_alpha(alpha))?);
        }
        let phi = spectra::phi_lower_star(&grid, B, onset)?;
        let l1 = grid.integrate(&phi.map(f64::abs));
        let (_, _, habitat) = grid.measures();
        let id_rel = (l1 - B * habitat).abs() / (B * habitat);
        Ok((
            rel <= 5e-3 && slopes.iter().all(|s| *s > 0.0) && id_rel <= 1e-6,
            format!(
                "origin={:.6} onset={onset} rel={rel:.1e} lambda'(0) at alpha=0,1,10,100: {slopes:.4?} \
                 |phi|_L1={l1:.10} b|habitat|={:.10} rel={id_rel:.1e}",
                p.lambda,
                B * habitat
            ),
        ))
    })
}

/// Random parameter points in the proven nonexistence regions.
pub fn nonexistence_samples(grid: &Grid, count: usize, seed: u64) -> Result<Vec<ModelParams>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for k in 0..count {
        let alpha = if rng.gen_bool(0.2) { 0.0 } else { 10f64.powf(rng.gen_range(-1.0..2.0)) };
        if k % 2 == 0 {
            let mu = 10f64.powf(rng.gen_range(-1.0..1.0));
            let lt = thresholds::ell_tilde(grid, mu, alpha, B, C)?;
            let lambda = lt * rng.gen_range(0.05..0.98);
            out.push(ModelParams::new(lambda, mu, B, C, alpha)?);
        } else {
            let lambda = rng.gen_range(0.05..5.0);
            let m = thresholds::m_curve(lambda, alpha, C);
            let mu = m - rng.gen_range(0.02..2.0) * lambda;
            out.push(ModelParams::new(lambda, mu, B, C, alpha)?);
        }
    }
    Ok(out)
}

/// No positive solution is found in the nonexistence regions.
pub fn criterion_6() -> CriterionReport {
    run(6, "nonexistence regions", || {
        let grid = ring()?;
        let points = nonexistence_samples(&grid, 200, 6)?;
        let found: Vec<(usize, usize)> = points
            .par_iter()
            .enumerate()
            .map(|(k, p)| {
                let cfg = MultistartConfig {
                    starts: 50,
                    seed: 1000 + k as u64,
                    ..Default::default()
                };
                steady::multistart(&grid, p, &cfg).map(|r| (r.positive.len(), r.converged))
            })
            .collect::<Result<_>>()?;
        let positive: usize = found.iter().map(|f| f.0).sum();
        let converged: usize = found.iter().map(|f| f.1).sum();
        Ok((
            positive == 0,
            format!(
                "points={} starts=50 converged_runs={converged} positive_solutions_found={positive}",
                points.len()
            ),
        ))
    })
}

/// Every positive solution lies in the a priori box.
pub fn criterion_7(log: &SolutionLog) -> CriterionReport {
    run(7, "a priori box", || {
        let grid = ring()?;
        let h = mesh_h(&grid);
        let cfg = ContinuationConfig::default();
        for alpha in [0.0, 1.0, 10.0, 100.0] {
            let pos = ModelParams::new(1.0, MU_POS, B, C, alpha)?;
            let br = continuation::branch_from_gamma_v(&grid, &pos, 1e-3, &cfg)?;
            log.record_branch(&pos, &br, h);
            let neg = ModelParams::new(1.0, MU_NEG, B, C, alpha)?;
            let br = continuation::branch_from_gamma_u(&grid, &neg, 1e-3, &cfg)?;
            log.record_branch(&neg, &br, h);
            let sigma = spectra::sigma1_curve(&grid, B, MU_POS)?;
            let ms = steady::multistart(
                &grid,
                &pos.with_lambda(sigma + 1.0),
                &MultistartConfig {
                    starts: 20,
                    seed: 7,
                    ..Default::default()
                },
            )?;
            for s in &ms.positive {
                log.record_state(s, h);
            }
        }
        let entries = log.snapshot();
        let mut worst_u: f64 = 0.0;
        let mut worst_v: f64 = 0.0;
        let mut alphas: Vec<f64> = Vec::new();
        let mut ok = true;
        for (p, umax, vmax, h) in &entries {
            let tol = 1.0 + 10.0 * h * h;
            let ru = umax / (p.lambda * tol);
            let rv = vmax / (p.predator_bound() * tol);
            worst_u = worst_u.max(ru);
            worst_v = worst_v.max(rv);
            ok &= ru <= 1.0 && rv <= 1.0;
            if !alphas.contains(&p.alpha) {
                alphas.push(p.alpha);
            }
        }
        let covered = [0.0, 1.0, 10.0, 100.0].iter().all(|a| alphas.contains(a));
        Ok((
            ok && covered,
            format!(
                "solutions_checked={} max(u/bound)={worst_u:.6} max(v/bound)={worst_v:.6} alphas_covered={covered}",
                entries.len()
            ),
        ))
    })
}

/// Collapse to the prey-only state as `α → ∞` above the bifurcation value.
pub fn criterion_8(log: &SolutionLog) -> CriterionReport {
    run(8, "large-flux collapse", || {
        let grid = ring()?;
        let sigma = spectra::sigma1_curve(&grid, B, MU_POS)?;
        let lambda = 1.5 * sigma;
        let rows = asymptotics::alpha_sweep(
            &grid,
            lambda,
            MU_POS,
            B,
            C,
            &[1.0, 10.0, 100.0, 1000.0],
            &ContinuationConfig::default(),
        )?;
        let mut gaps = Vec::new();
        for r in &rows {
            match (r.prey_gap, r.predator_norm) {
                (Some(a), Some(b)) => gaps.push(a + b),
                _ => return Ok((false, format!("alpha={} failed: {:?}", r.alpha, r.error))),
            }
            if let Some(s) = &r.state {
                log.record_state(s, mesh_h(&grid));
            }
        }
        let monotone = gaps.windows(2).all(|w| w[1] < w[0]);
        let ratio = gaps[gaps.len() - 1] / gaps[0];
        Ok((
            monotone && ratio < 0.1,
            format!("lambda={lambda:.6} |u-lambda|+|v| at alpha=1,10,100,1000: {gaps:.5?} final/first={ratio:.4}"),
        ))
    })
}

/// Bounds and blow-up scaling of the limit system as `λ → 0⁺`.
pub fn criterion_9() -> CriterionReport {
    run(9, "limit system bounds and scaling", || {
        let grid = ring()?;
        let sigma = spectra::sigma1_curve(&grid, B, MU_POS)?;
        let lambdas: Vec<f64> = [0.2, 0.1, 0.05, 0.025].iter().map(|f| f * sigma).collect();
        let rows = asymptotics::lp2_scaling_probe(&grid, MU_POS, B, &lambdas, &ContinuationConfig::default())?;
        let bounds = rows.iter().all(|r| r.within_bounds);
        let inv: Vec<f64> = rows.iter().map(|r| 1.0 / r.lambda).collect();
        let wmax: Vec<f64> = rows.iter().map(|r| r.w_max).collect();
        let slope = asymptotics::loglog_slope(&inv, &wmax);
        let (s0, t0) = asymptotics::base_point(&grid, B, MU_POS);
        let last = rows.last().unwrap();
        let s_rel = (last.scaled_w_max - s0).abs() / s0;
        let t_rel = (last.scaled_v_mean - t0).abs() / t0;
        let j = asymptotics::jacobian_base_point(&grid, B, MU_POS)?;
        let (_, refuge, habitat) = grid.measures();
        let det_formula = -B * t0 * refuge * habitat;
        let det_ok = j.det < 0.0 && (j.det - det_formula).abs() <= 1e-12 * det_formula.abs();
        Ok((
            bounds && (slope - 1.0).abs() <= 0.05 && s_rel <= 0.05 && t_rel <= 0.05 && det_ok,
            format!(
                "bounds={bounds} slope={slope:.4} lambda*|w|={:.5} s0={s0:.5} rel={s_rel:.2e} \
                 mean(v/lambda)={:.5} t0={t0:.5} rel={t_rel:.2e} detJ={:.6} formula={det_formula:.6}",
                last.scaled_w_max, last.scaled_v_mean, j.det
            ),
        ))
    })
}

/// Time integration settles on the Newton steady state.
pub fn criterion_10(log: &SolutionLog) -> CriterionReport {
    run(10, "evolution consistency", || {
        let grid = ring()?;
        let sigma = spectra::sigma1_curve(&grid, B, MU_POS)?;
        let params = ModelParams::new(sigma + 0.5, MU_POS, B, C, 1.0)?;
        let u0 = Field::from_fn(&grid, Region::Domain, |x| 0.5 + 0.3 * x[0].cos() + 0.1 * (3.0 * x[0]).sin());
        let v0 = Field::from_fn(&grid, Region::Habitat, |x| 1.0 + 0.5 * (2.0 * x[0]).sin());
        let cfg = EvolutionConfig {
            t_final: 2000.0,
            dt_max: 0.2,
            ..Default::default()
        };
        let traj = evolution::evolve(&grid, &params, &u0, &v0, &cfg)?;
        let residual = evolution::steady_residual_monitor(&grid, &params, &traj.u, &traj.v)?;
        let newton = continuation::positive_solution(&grid, &params, Crossing::Last, &ContinuationConfig::default())?;
        log.record_state(&newton, mesh_h(&grid));
        let dist = traj.u.dist_inf(&newton.u)?.max(traj.v.dist_inf(&newton.v)?);
        let nonneg = traj.min_u >= evolution::NEGATIVITY_TOL && traj.min_v >= evolution::NEGATIVITY_TOL;
        let zero_v = Field::zeros(&grid, Region::Habitat);
        let prey_only = evolution::evolve(
            &grid,
            &params,
            &u0,
            &zero_v,
            &EvolutionConfig {
                t_final: 5.0,
                ..Default::default()
            },
        )?;
        let invariant = prey_only.v.values().iter().all(|&x| x == 0.0);
        Ok((
            residual < 1e-6 && dist < 1e-6 && nonneg && invariant,
            format!(
                "outcome={:?} t={:.2} steps={} steady_residual={residual:.2e} distance_to_newton={dist:.2e} \
                 min_u={:.3e} min_v={:.3e} v_zero_invariant={invariant}",
                traj.outcome, traj.t, traj.steps, traj.min_u, traj.min_v
            ),
        ))
        .map(|(p, d)| (p && traj.outcome == Outcome::SteadyDetected, d))
    })
}

/// Relative error of the analytic Jacobian against central differences
/// of the residual in direction `d`.
pub fn jacobian_fd_error<S: SteadySystem>(sys: &S, x: &[f64], d: &[f64]) -> Result<f64> {
    let jd = sys.jacobian(x)?.matvec(d);
    let xs = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let ds = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let step = 1e-6 * (1.0 + xs) / ds;
    let plus: Vec<f64> = x.iter().zip(d).map(|(x, d)| x + step * d).collect();
    let minus: Vec<f64> = x.iter().zip(d).map(|(x, d)| x - step * d).collect();
    let rp = sys.residual(&plus)?;
    let rm = sys.residual(&minus)?;
    let mut err: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for i in 0..jd.len() {
        let fd = (rp[i] - rm[i]) / (2.0 * step);
        err = err.max((jd[i] - fd).abs());
        scale = scale.max(jd[i].abs());
    }
    Ok(err / scale.max(f64::MIN_POSITIVE))
}

fn random_state(grid: &Grid, rng: &mut ChaCha8Rng, level_u: f64, level_v: f64) -> Vec<f64> {
    let u = steady::random_field(grid, Region::Domain, level_u, rng);
    let v = steady::random_field(grid, Region::Habitat, level_v, rng);
    let mut x = u.into_values();
    x.extend(v.into_values());
    x
}

fn random_direction(grid: &Grid, rng: &mut ChaCha8Rng) -> Vec<f64> {
    // Differences of two positive fields give sign-changing smooth directions.
    let a = random_state(grid, rng, 1.0, 1.0);
    let b = random_state(grid, rng, 1.0, 1.0);
    a.iter().zip(&b).map(|(a, b)| a - b).collect()
}

/// Analytic Jacobians agree with central differences.
pub fn criterion_11() -> CriterionReport {
    run(11, "Jacobian fidelity", || {
        let mut worst = Vec::new();
        let mut ok = true;
        for (name, grid) in [("ring", ring()?), ("rect", rect()?)] {
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let sp2 = Sp2::new(&grid, ModelParams::new(1.3, MU_POS, B, C, 2.5)?)?;
            let lp2 = Lp2::new(&grid, 0.3, MU_POS, B)?;
            let mut e_sp2: f64 = 0.0;
            let mut e_lp2: f64 = 0.0;
            for _ in 0..20 {
                let x = random_state(&grid, &mut rng, 0.8, 1.5);
                let d = random_direction(&grid, &mut rng);
                e_sp2 = e_sp2.max(jacobian_fd_error(&sp2, &x, &d)?);
                let x = random_state(&grid, &mut rng, 3.0, 1.0);
                let d = random_direction(&grid, &mut rng);
                e_lp2 = e_lp2.max(jacobian_fd_error(&lp2, &x, &d)?);
            }
            ok &= e_sp2 <= 1e-6 && e_lp2 <= 1e-6;
            worst.push(format!("{name}: coupled={e_sp2:.2e} limit={e_lp2:.2e}"));
        }
        Ok((ok, format!("max relative error over 20 states: {}", worst.join(", "))))
    })
}

/// A rectangle with at most 64 nodes whose refuge still has interior nodes.
pub fn small_rect() -> DomainSpec {
    DomainSpec::RectWithHole {
        outer_x: [0.0, 2.0],
        outer_y: [0.0, 1.0],
        hole_x: [0.5, 1.5],
        hole_y: [0.25, 0.75],
        nx: 9,
        ny: 7,
    }
}

/// `λ` where `K` changes sign, by scanning with the dense eigensolver:
/// each pass samples 200 points and keeps the cell containing the change.
fn scanned_ell(grid: &Grid, mu: f64, alpha: f64) -> Result<f64> {
    let op = operators::neumann_laplacian(grid, Region::Domain)?;
    let theta = grid.habitat_fraction().to_vec();
    let k = |lambda: f64| {
        let depth = B * (C * lambda + mu) / (alpha * B * lambda + 1.0);
        let q: Vec<f64> = theta.iter().map(|t| depth * t).collect();
        lambda - dense_principal_eigenvalue(&op, &q)
    };
    let (mut lo, mut hi) = (0.0, spectra::sigma1_dirichlet(grid)?);
    for _ in 0..3 {
        let n = 200;
        let pts: Vec<f64> = (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect();
        let vals: Vec<f64> = pts.iter().map(|&l| k(l)).collect();
        let i = (0..n)
            .find(|&i| vals[i] < 0.0 && vals[i + 1] >= 0.0)
            .ok_or(Error::NoSignChange { lo, hi })?;
        lo = pts[i];
        hi = pts[i + 1];
    }
    Ok(0.5 * (lo + hi))
}

/// Banded eigen solves and the bisection root agree with dense oracles.
pub fn criterion_12() -> CriterionReport {
    run(12, "oracle equivalence", || {
        let mut worst_eig: f64 = 0.0;
        let mut cases = 0;
        for spec in [DomainSpec::ring(64), small_rect()] {
            let grid = Grid::build(&spec)?;
            if grid.len() > 64 {
                return Err(Error::BadParameter(format!("oracle grid has {} nodes", grid.len())));
            }
            let theta = grid.habitat_fraction().to_vec();
            let dom = operators::neumann_laplacian(&grid, Region::Domain)?;
            for mu in [0.0, 0.5, 2.0, 20.0, 1e4] {
                let q: Vec<f64> = theta.iter().map(|t| B * mu * t).collect();
                let got = spectra::principal_pair(&dom, &q)?.value;
                let want = dense_principal_eigenvalue(&dom, &q);
                worst_eig = worst_eig.max((got - want).abs() / want.abs().max(1.0));
                cases += 1;
            }
            let hab = operators::neumann_laplacian(&grid, Region::Habitat)?;
            let q: Vec<f64> = (0..hab.len()).map(|i| (i as f64 * 0.37).sin()).collect();
            let got = spectra::principal_pair(&hab, &q)?.value;
            worst_eig = worst_eig.max((got - dense_principal_eigenvalue(&hab, &q)).abs());
            let dir = operators::dirichlet_laplacian_refuge(&grid)?;
            let q = vec![0.0; dir.len()];
            let got = spectra::principal_pair(&dir, &q)?.value;
            let want = dense_principal_eigenvalue(&dir, &q);
            worst_eig = worst_eig.max((got - want).abs() / want.abs().max(1.0));
            cases += 2;
        }
        let grid = Grid::build(&DomainSpec::ring(64))?;
        let (mu, alpha) = (3.0, 1.0);
        let bisected = thresholds::ell(&grid, mu, alpha, B, C)?;
        let scanned = scanned_ell(&grid, mu, alpha)?;
        let diff = (bisected - scanned).abs();
        Ok((
            worst_eig <= 1e-8 && diff <= 1e-6,
            format!(
                "eigen cases={cases} max_rel_diff={worst_eig:.2e}; ell bisection={bisected:.9} scan={scanned:.9} diff={diff:.1e}"
            ),
        ))
    })
}

/// Run all criteria. The a priori box check runs last so it sees every
/// solution produced by the others.
pub fn run_all() -> Vec<CriterionReport> {
    let log = SolutionLog::default();
    type Job = Box<dyn Fn(&SolutionLog) -> CriterionReport + Sync>;
    let jobs: Vec<Job> = vec![
        Box::new(|_| criterion_1()),
        Box::new(criterion_2),
        Box::new(criterion_3),
        Box::new(criterion_4),
        Box::new(criterion_5),
        Box::new(|_| criterion_6()),
        Box::new(criterion_8),
        Box::new(|_| criterion_9()),
        Box::new(criterion_10),
        Box::new(|_| criterion_11()),
        Box::new(|_| criterion_12()),
    ];
    let mut reports: Vec<CriterionReport> = jobs.par_iter().map(|f| f(&log)).collect();
    reports.push(criterion_7(&log));
    reports.sort_by_key(|r| r.id);
    reports
}
