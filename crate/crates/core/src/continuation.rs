//! Arclength continuation of positive steady states in `λ`.
//!
//! Branches are started next to a semitrivial state from the bifurcation
//! tangent and then followed with a secant predictor and a corrector on the
//! system augmented by the chord condition `‖Δx‖² + Δλ² = Δs²`, where `‖·‖`
//! is the quadrature L² norm. The augmented linear systems are solved by
//! block elimination so only the banded Jacobian is ever factored.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Field, Grid, Region};
use crate::linalg::{self, BandedLu};
use crate::model::ModelParams;
use crate::spectra;
use crate::steady::{Lp2, NewtonConfig, Sp2, Stencil, SteadySystem, POSITIVITY_TOL};
use crate::thresholds::{self, DirectionData};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContinuationConfig {
    pub ds: f64,
    pub ds_min: f64,
    pub ds_max: f64,
    pub max_steps: usize,
    /// Stop once `λ` leaves this interval. Defaults to `[0, origin + 2]`.
    pub lambda_window: Option<[f64; 2]>,
    pub corrector_iter: usize,
    pub newton: NewtonConfig,
}

impl Default for ContinuationConfig {
    fn default() -> Self {
        ContinuationConfig {
            ds: 0.05,
            ds_min: 1e-7,
            ds_max: 0.5,
            max_steps: 2000,
            lambda_window: None,
            corrector_iter: 12,
            newton: NewtonConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BranchPoint {
    pub lambda: f64,
    pub u: Field,
    pub v: Field,
    /// Accumulated arclength from the first point.
    pub s: f64,
    /// Unit direction of travel in `(u, v, λ)`, stacked with `λ` last.
    pub tangent: Vec<f64>,
    pub fold: bool,
    /// Smallest pivot of the Jacobian factorization, a proxy for its
    /// smallest singular value.
    pub pivot: f64,
    pub residual: f64,
    /// Residual of the chord condition at this point.
    pub constraint: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BranchOrigin {
    FromGammaV { lambda0: f64 },
    FromGammaU { lambda0: f64 },
    Lp2 { lambda0: f64 },
    Manual,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Termination {
    LambdaWindow,
    MaxSteps,
    /// The step size fell below `ds_min`, usually at a sharp fold.
    StepUnderflow { lambda: f64 },
    /// The next point lost strict positivity.
    LeftPositiveCone { lambda: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Branch {
    pub points: Vec<BranchPoint>,
    pub origin: BranchOrigin,
    pub termination: Termination,
}

impl Branch {
    pub fn lambdas(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.lambda).collect()
    }

    pub fn folds(&self) -> Vec<usize> {
        detect_folds(self)
    }
}

/// Indices where consecutive `λ` increments change sign.
pub fn fold_indices(lambdas: &[f64]) -> Vec<usize> {
    let mut out = Vec::new();
    for i in 1..lambdas.len().saturating_sub(1) {
        let before = lambdas[i] - lambdas[i - 1];
        let after = lambdas[i + 1] - lambdas[i];
        if before * after < 0.0 {
            out.push(i);
        }
    }
    out
}

pub fn detect_folds(branch: &Branch) -> Vec<usize> {
    fold_indices(&branch.lambdas())
}

/// Stacked quadrature weights for `[u on Ω; v on Ω₁]`.
fn stacked_weights(grid: &Grid) -> Vec<f64> {
    let mut w = grid.weights().to_vec();
    w.extend(grid.region_weights(Region::Habitat));
    w
}

/// A linear or quadratic side condition `N(x, λ) = 0` with its gradient.
trait Constraint {
    fn eval(&self, x: &[f64], lambda: f64) -> (f64, Vec<f64>, f64);
}

/// `⟨a, x⟩ = target`.
struct Projection {
    a: Vec<f64>,
    target: f64,
}

impl Constraint for Projection {
    fn eval(&self, x: &[f64], _lambda: f64) -> (f64, Vec<f64>, f64) {
        (linalg::dot(&self.a, x) - self.target, self.a.clone(), 0.0)
    }
}

/// `‖x - x₀‖²_W + (λ - λ₀)² = ds²`.
struct Chord<'a> {
    w: &'a [f64],
    x0: &'a [f64],
    lambda0: f64,
    ds: f64,
}

impl Constraint for Chord<'_> {
    fn eval(&self, x: &[f64], lambda: f64) -> (f64, Vec<f64>, f64) {
        let mut n = (lambda - self.lambda0).powi(2) - self.ds * self.ds;
        let mut a = Vec::with_capacity(x.len());
        for i in 0..x.len() {
            let d = x[i] - self.x0[i];
            n += self.w[i] * d * d;
            a.push(2.0 * self.w[i] * d);
        }
        (n, a, 2.0 * (lambda - self.lambda0))
    }
}

const CONSTRAINT_TOL: f64 = 1e-12;

struct Corrected {
    x: Vec<f64>,
    lambda: f64,
    iterations: usize,
    residual: f64,
    constraint: f64,
    pivot: f64,
}

/// Newton on `R(λ, x) = 0, N(x, λ) = 0`.
///
/// Each step solves `J y = -R` and `J z = R_λ`, then
/// `δλ = (-N - aᵀy)/(a_λ - aᵀz)` and `δx = y - δλ z`.
fn correct<S: SteadySystem>(
    sys: &mut S,
    mut x: Vec<f64>,
    mut lambda: f64,
    constraint: &dyn Constraint,
    cfg: &ContinuationConfig,
) -> Result<Corrected> {
    for it in 0..=cfg.corrector_iter {
        sys.set_lambda(lambda);
        let r = sys.residual(&x)?;
        let (nval, a, a_l) = constraint.eval(&x, lambda);
        let res = linalg::norm_inf(&r);
        if !res.is_finite() || !nval.is_finite() {
            break;
        }
        let jac = sys.jacobian(&x)?;
        let lu = BandedLu::factor(&jac, sys.stencil().order())?;
        if res <= cfg.newton.tol.max(sys.stencil().roundoff_floor(&x)) && nval.abs() <= CONSTRAINT_TOL {
            return Ok(Corrected {
                pivot: lu.min_abs_pivot(),
                x,
                lambda,
                iterations: it,
                residual: res,
                constraint: nval,
            });
        }
        if it == cfg.corrector_iter {
            break;
        }
        let neg: Vec<f64> = r.iter().map(|v| -v).collect();
        let y = lu.solve(&neg)?;
        let z = lu.solve(&sys.lambda_derivative(&x)?)?;
        let den = a_l - linalg::dot(&a, &z);
        if !den.is_finite() || den == 0.0 {
            break;
        }
        let dl = (-nval - linalg::dot(&a, &y)) / den;
        for i in 0..x.len() {
            x[i] += y[i] - dl * z[i];
        }
        lambda += dl;
    }
    Err(Error::CorrectionFailed(format!("corrector did not converge near lambda = {lambda}")))
}

fn is_positive(x: &[f64]) -> bool {
    x.iter().all(|&v| v > POSITIVITY_TOL)
}

fn weighted_unit(w: &[f64], dx: &[f64], dl: f64) -> Vec<f64> {
    let norm = (linalg::weighted_dot(w, dx, dx) + dl * dl).sqrt();
    let mut t: Vec<f64> = dx.iter().map(|d| d / norm).collect();
    t.push(dl / norm);
    t
}

fn point(stencil: &Stencil, c: &Corrected, s: f64, tangent: Vec<f64>) -> BranchPoint {
    let (u, v) = stencil.unstack(&c.x);
    BranchPoint {
        lambda: c.lambda,
        u,
        v,
        s,
        tangent,
        fold: false,
        pivot: c.pivot,
        residual: c.residual,
        constraint: c.constraint,
    }
}

/// Follow a branch of `sys` from `base` in the direction `tangent`.
fn trace<S: SteadySystem>(
    mut sys: S,
    grid: &Grid,
    base: BranchPoint,
    origin: BranchOrigin,
    window: [f64; 2],
    cfg: &ContinuationConfig,
) -> Result<Branch> {
    let w = stacked_weights(grid);
    let stencil = sys.stencil().clone();
    let n = w.len();
    let mut points = vec![base];
    let mut ds = cfg.ds.clamp(cfg.ds_min, cfg.ds_max);
    let mut easy = 0;
    let termination = loop {
        if points.len() > cfg.max_steps {
            break Termination::MaxSteps;
        }
        let last = points.last().unwrap();
        let x0 = stencil.stack(&last.u, &last.v)?;
        let (l0, t) = (last.lambda, last.tangent.clone());
        let pred: Vec<f64> = (0..n).map(|i| x0[i] + ds * t[i]).collect();
        let chord = Chord {
            w: &w,
            x0: &x0,
            lambda0: l0,
            ds,
        };
        let attempt = correct(&mut sys, pred, l0 + ds * t[n], &chord, cfg);
        let accepted = match attempt {
            Ok(c) => {
                let dx: Vec<f64> = (0..n).map(|i| c.x[i] - x0[i]).collect();
                let dl = c.lambda - l0;
                let forward = linalg::weighted_dot(&w, &dx, &t[..n]) + dl * t[n] > 0.0;
                forward.then(|| (c, weighted_unit(&w, &dx, dl)))
            }
            Err(_) => None,
        };
        let Some((c, secant)) = accepted else {
            ds *= 0.5;
            easy = 0;
            if ds < cfg.ds_min {
                break Termination::StepUnderflow { lambda: l0 };
            }
            continue;
        };
        if !is_positive(&c.x) {
            break Termination::LeftPositiveCone { lambda: c.lambda };
        }
        let s = last.s + ds;
        let lambda = c.lambda;
        points.push(point(&stencil, &c, s, secant));
        if lambda < window[0] || lambda > window[1] {
            break Termination::LambdaWindow;
        }
        if c.iterations <= 3 {
            easy += 1;
            if easy >= 4 {
                ds = (ds * 1.3).min(cfg.ds_max);
                easy = 0;
            }
        } else {
            easy = 0;
        }
    };
    for i in fold_indices(&points.iter().map(|p| p.lambda).collect::<Vec<_>>()) {
        points[i].fold = true;
    }
    Ok(Branch {
        points,
        origin,
        termination,
    })
}

/// Newton-correct a seed guess under the side condition `⟨a, x⟩ = target`
/// and return it with the unit direction away from the bifurcation point.
fn seed<S: SteadySystem>(
    sys: &mut S,
    grid: &Grid,
    guess: Vec<f64>,
    lambda_guess: f64,
    projection: Projection,
    bifurcation: (&[f64], f64),
    cfg: &ContinuationConfig,
) -> Result<(BranchPoint, Vec<f64>)> {
    let w = stacked_weights(grid);
    let c = correct(sys, guess, lambda_guess, &projection, cfg)
        .map_err(|e| Error::CorrectionFailed(format!("seed correction failed: {e}")))?;
    if !is_positive(&c.x) {
        return Err(Error::CorrectionFailed("seed is not strictly positive".into()));
    }
    let dx: Vec<f64> = c.x.iter().zip(bifurcation.0).map(|(a, b)| a - b).collect();
    let tangent = weighted_unit(&w, &dx, c.lambda - bifurcation.1);
    let mut p = point(sys.stencil(), &c, 0.0, tangent.clone());
    p.constraint = 0.0;
    Ok((p, tangent))
}

/// Start on the branch leaving the predator-only state `(0, μ)` at
/// `λ = σ₁(bμ1_{Ω₁})`, at amplitude `s = ∫ u φ*`.
pub fn seed_from_gamma_v(
    grid: &Grid,
    params: &ModelParams,
    s: f64,
    cfg: &ContinuationConfig,
) -> Result<(BranchPoint, Vec<f64>)> {
    let data = DirectionData::new(grid, params.b, params.c, params.mu)?;
    seed_from_gamma_v_with(grid, params, &data, s, cfg)
}

pub fn seed_from_gamma_v_with(
    grid: &Grid,
    params: &ModelParams,
    data: &DirectionData,
    s: f64,
    cfg: &ContinuationConfig,
) -> Result<(BranchPoint, Vec<f64>)> {
    if !(s > 0.0) {
        return Err(Error::BadParameter(format!("seed amplitude must be positive, got {s}")));
    }
    let sigma = data.sigma1;
    let slope = data.lambda_prime(params.alpha);
    let mut sys = Sp2::new(grid, params.with_lambda(sigma))?;
    let st = sys.stencil().clone();
    let phi = &data.phi;
    let psi = data.psi(params.alpha);
    let u = phi.scale(s);
    let v = psi.scale(s).map(|x| x + params.mu);
    let guess = st.stack(&u, &v)?;
    let base = st.stack(&Field::zeros(grid, Region::Domain), &Field::constant(grid, Region::Habitat, params.mu))?;
    let mut a: Vec<f64> = grid.weights().iter().zip(phi.values()).map(|(w, p)| w * p).collect();
    a.resize(st.n() + st.m(), 0.0);
    seed(
        &mut sys,
        grid,
        guess,
        sigma + s * slope,
        Projection { a, target: s },
        (&base, sigma),
        cfg,
    )
}

/// Start on the branch leaving the prey-only state `(λ, 0)` at
/// `λ = |μ|/c`, at amplitude `s = mean_{Ω₁} v`.
pub fn seed_from_gamma_u(
    grid: &Grid,
    params: &ModelParams,
    s: f64,
    cfg: &ContinuationConfig,
) -> Result<(BranchPoint, Vec<f64>)> {
    if !(params.mu < 0.0) {
        return Err(Error::BadParameter(format!("the prey-only branch needs mu < 0, got {}", params.mu)));
    }
    if !(s > 0.0) {
        return Err(Error::BadParameter(format!("seed amplitude must be positive, got {s}")));
    }
    let lambda0 = -params.mu / params.c;
    let slope = thresholds::lambda_prime0_gamma_u(grid, params)?;
    let phi = spectra::phi_lower_star(grid, params.b, lambda0)?;
    let lambda = lambda0 + s * slope;
    let mut sys = Sp2::new(grid, params.with_lambda(lambda))?;
    let st = sys.stencil().clone();
    let u = phi.scale(s).map(|x| x + lambda);
    let guess = st.stack(&u, &Field::constant(grid, Region::Habitat, s))?;
    let base = st.stack(&Field::constant(grid, Region::Domain, lambda0), &Field::zeros(grid, Region::Habitat))?;
    let w1 = grid.region_weights(Region::Habitat);
    let total: f64 = w1.iter().sum();
    let mut a = vec![0.0; st.n()];
    a.extend(w1.iter().map(|w| w / total));
    seed(&mut sys, grid, guess, lambda, Projection { a, target: s }, (&base, lambda0), cfg)
}

/// Continue a branch of the coupled system from a seed.
pub fn continue_branch(
    grid: &Grid,
    params: &ModelParams,
    base: BranchPoint,
    tangent: Vec<f64>,
    origin: BranchOrigin,
    cfg: &ContinuationConfig,
) -> Result<Branch> {
    let mut base = base;
    base.tangent = tangent;
    let lambda0 = match origin {
        BranchOrigin::FromGammaV { lambda0 } | BranchOrigin::FromGammaU { lambda0 } | BranchOrigin::Lp2 { lambda0 } => lambda0,
        BranchOrigin::Manual => base.lambda,
    };
    let window = cfg.lambda_window.unwrap_or([0.0, lambda0 + 2.0]);
    let sys = Sp2::new(grid, params.with_lambda(base.lambda))?;
    let mut branch = trace(sys, grid, base.clone(), origin, window, cfg)?;
    branch.points[0] = BranchPoint {
        fold: branch.points[0].fold,
        ..base
    };
    Ok(branch)
}

/// Seed at `s` from the predator-only state and continue.
pub fn branch_from_gamma_v(grid: &Grid, params: &ModelParams, s: f64, cfg: &ContinuationConfig) -> Result<Branch> {
    let lambda0 = spectra::sigma1_curve(grid, params.b, params.mu)?;
    let (p, t) = seed_from_gamma_v(grid, params, s, cfg)?;
    continue_branch(grid, params, p, t, BranchOrigin::FromGammaV { lambda0 }, cfg)
}

/// Seed at `s` from the prey-only state and continue.
pub fn branch_from_gamma_u(grid: &Grid, params: &ModelParams, s: f64, cfg: &ContinuationConfig) -> Result<Branch> {
    let lambda0 = -params.mu / params.c;
    let (p, t) = seed_from_gamma_u(grid, params, s, cfg)?;
    continue_branch(grid, params, p, t, BranchOrigin::FromGammaU { lambda0 }, cfg)
}

/// Start on the branch of the limit system leaving `(0, μ)` at
/// `λ = σ₁(bμ1_{Ω₁})`, at amplitude `s = ∫ w φ*`.
pub fn seed_lp2(grid: &Grid, mu: f64, b: f64, s: f64, cfg: &ContinuationConfig) -> Result<(BranchPoint, Vec<f64>)> {
    if !(mu > 0.0) {
        return Err(Error::BadParameter(format!("the limit system branch needs mu > 0, got {mu}")));
    }
    // The c-part of the tangent drops out in the limit; any valid c works.
    let data = DirectionData::new(grid, b, 1.0, mu)?;
    let sigma = data.sigma1;
    let mut sys = Lp2::new(grid, sigma, mu, b)?;
    let st = sys.stencil().clone();
    let phi = &data.phi;
    let w = phi.scale(s);
    let v = data.psi_alpha.scale(s).map(|x| x + mu);
    let guess = st.stack(&w, &v)?;
    let base = st.stack(&Field::zeros(grid, Region::Domain), &Field::constant(grid, Region::Habitat, mu))?;
    let mut a: Vec<f64> = grid.weights().iter().zip(phi.values()).map(|(w, p)| w * p).collect();
    a.resize(st.n() + st.m(), 0.0);
    // No quadratic self-limitation in w, so only the cross term sets the slope.
    let slope = data.lambda_prime(1.0) - data.lambda_prime(0.0);
    seed(
        &mut sys,
        grid,
        guess,
        sigma + s * slope,
        Projection { a, target: s },
        (&base, sigma),
        cfg,
    )
}

/// Branch of the limit system from `λ = σ₁(bμ1_{Ω₁})` towards `λ → 0⁺`.
pub fn continue_lp2_branch(grid: &Grid, mu: f64, b: f64, s: f64, cfg: &ContinuationConfig) -> Result<Branch> {
    let (p, t) = seed_lp2(grid, mu, b, s, cfg)?;
    let lambda0 = spectra::sigma1_curve(grid, b, mu)?;
    let window = cfg.lambda_window.unwrap_or([0.05 * lambda0, lambda0 + 2.0]);
    let sys = Lp2::new(grid, p.lambda, mu, b)?;
    let mut p = p;
    p.tangent = t;
    trace(sys, grid, p, BranchOrigin::Lp2 { lambda0 }, window, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Crossing {
    /// The crossing nearest the semitrivial state along the branch.
    First,
    /// The crossing farthest along the branch.
    Last,
}

/// Index `i` such that `λ` lies between points `i` and `i + 1`.
pub fn crossings(branch: &Branch, lambda: f64) -> Vec<usize> {
    let l = branch.lambdas();
    (0..l.len().saturating_sub(1))
        .filter(|&i| (l[i] - lambda) * (l[i + 1] - lambda) <= 0.0 && l[i] != l[i + 1])
        .collect()
}

/// Newton solve at `params.lambda` started from the branch interpolated at
/// the chosen crossing.
pub fn solve_on_branch(
    grid: &Grid,
    params: &ModelParams,
    branch: &Branch,
    which: Crossing,
    newton: &NewtonConfig,
) -> Result<crate::steady::SteadyState> {
    let lambda = params.lambda;
    let idx = crossings(branch, lambda);
    let i = match which {
        Crossing::First => idx.first(),
        Crossing::Last => idx.last(),
    }
    .copied()
    .ok_or_else(|| Error::SolutionNotFound(format!("the branch does not reach lambda = {lambda}")))?;
    let (a, b) = (&branch.points[i], &branch.points[i + 1]);
    let t = (lambda - a.lambda) / (b.lambda - a.lambda);
    let mix = |x: &Field, y: &Field| x.zip_map(y, |p, q| p + t * (q - p));
    let u = mix(&a.u, &b.u)?;
    let v = mix(&a.v, &b.v)?;
    crate::steady::newton_solve(grid, params, (&u, &v), newton)
}

/// A positive solution at `params` taken from the branch leaving the
/// predator-only state (`μ > 0`) or the prey-only state (`μ < 0`).
pub fn positive_solution(
    grid: &Grid,
    params: &ModelParams,
    which: Crossing,
    cfg: &ContinuationConfig,
) -> Result<crate::steady::SteadyState> {
    let mut cfg = *cfg;
    let branch = if params.mu > 0.0 {
        let s1 = spectra::sigma1_curve(grid, params.b, params.mu)?;
        cfg.lambda_window.get_or_insert([0.0, s1.max(params.lambda) + 0.5]);
        branch_from_gamma_v(grid, params, 1e-3, &cfg)?
    } else if params.mu < 0.0 {
        let l0 = -params.mu / params.c;
        cfg.lambda_window.get_or_insert([0.0, l0.max(params.lambda) + 0.5]);
        branch_from_gamma_u(grid, params, 1e-3, &cfg)?
    } else {
        return Err(Error::BadParameter("branch solutions need mu != 0".into()));
    };
    solve_on_branch(grid, params, &branch, which, &cfg.newton)
}

/// A solution of the limit system at `λ` from its branch, crossing nearest
/// the bifurcation point.
pub fn lp2_solution(grid: &Grid, lambda: f64, mu: f64, b: f64, cfg: &ContinuationConfig) -> Result<crate::steady::Lp2State> {
    let mut cfg = *cfg;
    cfg.lambda_window.get_or_insert([0.9 * lambda, f64::INFINITY]);
    let branch = continue_lp2_branch(grid, mu, b, 1e-3, &cfg)?;
    let i = *crossings(&branch, lambda)
        .first()
        .ok_or_else(|| Error::SolutionNotFound(format!("the limit branch does not reach lambda = {lambda}")))?;
    let (p, q) = (&branch.points[i], &branch.points[i + 1]);
    let t = (lambda - p.lambda) / (q.lambda - p.lambda);
    let w = p.u.zip_map(&q.u, |a, b| a + t * (b - a))?;
    let v = p.v.zip_map(&q.v, |a, b| a + t * (b - a))?;
    crate::steady::newton_lp2(grid, lambda, mu, b, (&w, &v), &cfg.newton)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::DomainSpec;

    fn ring(n: usize) -> Grid {
        Grid::build(&DomainSpec::ring(n)).unwrap()
    }

    #[test]
    fn folds_of_synthetic_sequences() {
        let monotone: Vec<f64> = (0..10).map(|i| i as f64).collect();
        assert!(fold_indices(&monotone).is_empty());
        let parabola: Vec<f64> = (-5..=5).map(|i| (i as f64).powi(2)).collect();
        assert_eq!(fold_indices(&parabola), vec![5]);
    }

    #[test]
    fn gamma_v_seed_is_on_the_tangent() {
        let g = ring(128);
        let p = ModelParams::new(1.0, 2.0, 1.0, 1.0, 0.5).unwrap();
        let sigma = spectra::sigma1_curve(&g, 1.0, 2.0).unwrap();
        let slope = thresholds::lambda_prime0_gamma_v(&g, &p).unwrap();
        let cfg = ContinuationConfig::default();
        let mut errs = Vec::new();
        for s in [1e-2, 5e-3] {
            let (pt, _) = seed_from_gamma_v(&g, &p, s, &cfg).unwrap();
            errs.push((pt.lambda - sigma - s * slope).abs());
        }
        // Second-order remainder: halving s quarters the error.
        assert!(errs[1] < 0.3 * errs[0], "{errs:?}");
    }

    #[test]
    fn gamma_u_branch_increases() {
        let g = ring(128);
        let p = ModelParams::new(1.0, -1.0, 1.0, 1.0, 1.0).unwrap();
        let cfg = ContinuationConfig {
            lambda_window: Some([0.0, 2.0]),
            ..Default::default()
        };
        let br = branch_from_gamma_u(&g, &p, 1e-3, &cfg).unwrap();
        assert_eq!(br.termination, Termination::LambdaWindow);
        assert!(br.folds().is_empty());
        assert!(br.points.iter().all(|p| p.constraint.abs() <= 1e-10));
    }
}
