//! Steady states: residuals, analytic Jacobians and damped Newton solves for
//! the coupled system and for its large-flux limit.
//!
//! Unknowns are stacked as `[u on Ω; v on Ω₁]`. The predator equation is used
//! in the substituted form where `Δu` has been eliminated, which keeps the
//! Jacobian as sparse as the Laplacians.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Field, Grid, Region};
use crate::linalg::{self, BandedLu, CsrMatrix};
use crate::model::ModelParams;
use crate::operators::{self, Operator};

/// Nodes with both components above this are counted as positive.
pub const POSITIVITY_TOL: f64 = 1e-8;
/// Two solutions closer than this in ℓ∞ are the same solution.
pub const DISTINCT_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NewtonConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig {
            tol: 1e-10,
            max_iter: 60,
            max_halvings: 30,
        }
    }
}

/// Laplacians and habitat fractions shared by every system on one grid.
#[derive(Debug, Clone)]
pub struct Stencil {
    lap: Operator,
    lap1: Operator,
    /// Habitat fraction of each domain node.
    theta: Vec<f64>,
    /// Domain index of each habitat node.
    habitat: Vec<usize>,
    order: Vec<usize>,
    /// Largest absolute row sum of the Laplacians, for the round-off floor.
    lap_scale: f64,
}

impl Stencil {
    pub fn new(grid: &Grid) -> Result<Self> {
        let lap = operators::neumann_laplacian(grid, Region::Domain)?;
        let lap1 = operators::neumann_laplacian(grid, Region::Habitat)?;
        let row_scale = |op: &Operator| {
            let m = op.matrix();
            (0..m.rows())
                .map(|r| m.row(r).map(|(_, v)| v.abs()).sum::<f64>())
                .fold(0.0, f64::max)
        };
        let lap_scale = row_scale(&lap).max(row_scale(&lap1));
        Ok(Stencil {
            lap,
            lap1,
            theta: grid.habitat_fraction().to_vec(),
            habitat: grid.nodes(Region::Habitat).to_vec(),
            order: grid.coupled_order(),
            lap_scale,
        })
    }

    pub fn n(&self) -> usize {
        self.lap.len()
    }

    pub fn m(&self) -> usize {
        self.lap1.len()
    }

    pub fn split<'x>(&self, x: &'x [f64]) -> (&'x [f64], &'x [f64]) {
        x.split_at(self.n())
    }

    pub fn stack(&self, u: &Field, v: &Field) -> Result<Vec<f64>> {
        u.expect_region(Region::Domain)?;
        v.expect_region(Region::Habitat)?;
        let mut x = u.values().to_vec();
        x.extend_from_slice(v.values());
        Ok(x)
    }

    pub fn unstack(&self, x: &[f64]) -> (Field, Field) {
        let (u, v) = self.split(x);
        (
            Field::from_values(Region::Domain, u.to_vec()),
            Field::from_values(Region::Habitat, v.to_vec()),
        )
    }

    pub fn laplacian(&self) -> &Operator {
        &self.lap
    }

    pub fn habitat_laplacian(&self) -> &Operator {
        &self.lap1
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    /// Domain index of each habitat node.
    pub fn habitat_nodes(&self) -> &[usize] {
        &self.habitat
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// Smallest residual that round-off lets us certify at state `x`.
    pub fn roundoff_floor(&self, x: &[f64]) -> f64 {
        16.0 * f64::EPSILON * (self.lap_scale + 1.0 + linalg::norm_inf(x)) * (1.0 + linalg::norm_inf(x))
    }

    /// The Laplacian blocks of the stacked Jacobian plus per-node diagonals
    /// and the two off-diagonal coupling diagonals.
    fn assemble(&self, duu: &[f64], duv: &[f64], dvu: &[f64], dvv: &[f64]) -> CsrMatrix {
        let n = self.n();
        let mut t = Vec::new();
        for (shift, op, diag) in [(0, &self.lap, duu), (n, &self.lap1, dvv)] {
            let s = op.weights();
            for (r, c, k) in op.stiffness().triplets() {
                t.push((shift + r, shift + c, -k / s[r]));
            }
            for (i, d) in diag.iter().enumerate() {
                t.push((shift + i, shift + i, *d));
            }
        }
        for (k, &i) in self.habitat.iter().enumerate() {
            t.push((i, n + k, duv[k]));
            t.push((n + k, i, dvu[k]));
        }
        CsrMatrix::from_triplets(n + self.m(), n + self.m(), t)
    }
}

/// A steady problem `R(λ, x) = 0` on a stacked unknown.
pub trait SteadySystem: Sync {
    fn stencil(&self) -> &Stencil;
    fn lambda(&self) -> f64;
    fn set_lambda(&mut self, lambda: f64);
    fn residual(&self, x: &[f64]) -> Result<Vec<f64>>;
    fn jacobian(&self, x: &[f64]) -> Result<CsrMatrix>;
    /// `∂R/∂λ`.
    fn lambda_derivative(&self, x: &[f64]) -> Result<Vec<f64>>;
}

fn check_denominator(min: f64) -> Result<()> {
    if min > 0.0 {
        Ok(())
    } else {
        Err(Error::DegenerateDenominator { min })
    }
}

/// The coupled system with prey growth `λ`, predator growth `μ`, predation
/// `b`, conversion `c` and flux strength `α`.
#[derive(Debug, Clone)]
pub struct Sp2 {
    pub params: ModelParams,
    stencil: Stencil,
}

impl Sp2 {
    pub fn new(grid: &Grid, params: ModelParams) -> Result<Self> {
        params.validate()?;
        Ok(Sp2 {
            params,
            stencil: Stencil::new(grid)?,
        })
    }

    pub fn with_stencil(stencil: Stencil, params: ModelParams) -> Self {
        Sp2 { params, stencil }
    }
}

impl SteadySystem for Sp2 {
    fn stencil(&self) -> &Stencil {
        &self.stencil
    }

    fn lambda(&self) -> f64 {
        self.params.lambda
    }

    fn set_lambda(&mut self, lambda: f64) {
        self.params.lambda = lambda;
    }

    fn residual(&self, x: &[f64]) -> Result<Vec<f64>> {
        let st = &self.stencil;
        let ModelParams {
            lambda,
            mu,
            b,
            c,
            alpha,
        } = self.params;
        let (u, v) = st.split(x);
        let mut out = st.lap.apply_values(u);
        out.extend(st.lap1.apply_values(v));
        let n = st.n();
        for i in 0..n {
            out[i] += u[i] * lambda - u[i] * u[i];
        }
        let mut min_den = f64::INFINITY;
        for (k, &i) in st.habitat.iter().enumerate() {
            let bt = b * st.theta[i];
            out[i] -= bt * u[i] * v[k];
            let den = 1.0 + alpha * u[i];
            min_den = min_den.min(den);
            let h = alpha * u[i] * (lambda - u[i] - bt * v[k]) + mu + c * u[i] - v[k];
            out[n + k] += v[k] * h / den;
        }
        check_denominator(min_den)?;
        Ok(out)
    }

    fn jacobian(&self, x: &[f64]) -> Result<CsrMatrix> {
        let st = &self.stencil;
        let ModelParams {
            lambda,
            mu,
            b,
            c,
            alpha,
        } = self.params;
        let (u, v) = st.split(x);
        let mut duu: Vec<f64> = u.iter().map(|u| lambda - 2.0 * u).collect();
        let m = st.m();
        let (mut duv, mut dvu, mut dvv) = (vec![0.0; m], vec![0.0; m], vec![0.0; m]);
        let mut min_den = f64::INFINITY;
        for (k, &i) in st.habitat.iter().enumerate() {
            let bt = b * st.theta[i];
            let (ui, vk) = (u[i], v[k]);
            duu[i] -= bt * vk;
            duv[k] = -bt * ui;
            let den = 1.0 + alpha * ui;
            min_den = min_den.min(den);
            let h = alpha * ui * (lambda - ui - bt * vk) + mu + c * ui - vk;
            let h_u = alpha * (lambda - 2.0 * ui - bt * vk) + c;
            let h_v = -alpha * ui * bt - 1.0;
            dvu[k] = vk * (h_u * den - alpha * h) / (den * den);
            dvv[k] = (h + vk * h_v) / den;
        }
        check_denominator(min_den)?;
        Ok(st.assemble(&duu, &duv, &dvu, &dvv))
    }

    fn lambda_derivative(&self, x: &[f64]) -> Result<Vec<f64>> {
        let st = &self.stencil;
        let alpha = self.params.alpha;
        let (u, v) = st.split(x);
        let mut out = u.to_vec();
        for (k, &i) in st.habitat.iter().enumerate() {
            out.push(alpha * u[i] * v[k] / (1.0 + alpha * u[i]));
        }
        Ok(out)
    }
}

/// The limit system for the rescaled prey `w = αu` as `α → ∞`.
#[derive(Debug, Clone)]
pub struct Lp2 {
    pub lambda: f64,
    pub mu: f64,
    pub b: f64,
    stencil: Stencil,
}

impl Lp2 {
    pub fn new(grid: &Grid, lambda: f64, mu: f64, b: f64) -> Result<Self> {
        Self::with_stencil(Stencil::new(grid)?, lambda, mu, b)
    }

    pub fn with_stencil(stencil: Stencil, lambda: f64, mu: f64, b: f64) -> Result<Self> {
        if !(b > 0.0) || !lambda.is_finite() || !mu.is_finite() {
            return Err(Error::BadParameter(format!(
                "limit system needs finite lambda, mu and b > 0; got {lambda}, {mu}, {b}"
            )));
        }
        Ok(Lp2 {
            lambda,
            mu,
            b,
            stencil,
        })
    }
}

impl SteadySystem for Lp2 {
    fn stencil(&self) -> &Stencil {
        &self.stencil
    }

    fn lambda(&self) -> f64 {
        self.lambda
    }

    fn set_lambda(&mut self, lambda: f64) {
        self.lambda = lambda;
    }

    fn residual(&self, x: &[f64]) -> Result<Vec<f64>> {
        let st = &self.stencil;
        let (lambda, mu, b) = (self.lambda, self.mu, self.b);
        let (w, v) = st.split(x);
        let mut out = st.lap.apply_values(w);
        out.extend(st.lap1.apply_values(v));
        let n = st.n();
        for i in 0..n {
            out[i] += w[i] * lambda;
        }
        let mut min_den = f64::INFINITY;
        for (k, &i) in st.habitat.iter().enumerate() {
            let bt = b * st.theta[i];
            out[i] -= bt * w[i] * v[k];
            let den = 1.0 + w[i];
            min_den = min_den.min(den);
            let h = w[i] * (lambda - bt * v[k]) + mu - v[k];
            out[n + k] += v[k] * h / den;
        }
        check_denominator(min_den)?;
        Ok(out)
    }

    fn jacobian(&self, x: &[f64]) -> Result<CsrMatrix> {
        let st = &self.stencil;
        let (lambda, mu, b) = (self.lambda, self.mu, self.b);
        let (w, v) = st.split(x);
        let mut dww = vec![lambda; st.n()];
        let m = st.m();
        let (mut dwv, mut dvw, mut dvv) = (vec![0.0; m], vec![0.0; m], vec![0.0; m]);
        let mut min_den = f64::INFINITY;
        for (k, &i) in st.habitat.iter().enumerate() {
            let bt = b * st.theta[i];
            let (wi, vk) = (w[i], v[k]);
            dww[i] -= bt * vk;
            dwv[k] = -bt * wi;
            let den = 1.0 + wi;
            min_den = min_den.min(den);
            let h = wi * (lambda - bt * vk) + mu - vk;
            let h_w = lambda - bt * vk;
            let h_v = -wi * bt - 1.0;
            dvw[k] = vk * (h_w * den - h) / (den * den);
            dvv[k] = (h + vk * h_v) / den;
        }
        check_denominator(min_den)?;
        Ok(st.assemble(&dww, &dwv, &dvw, &dvv))
    }

    fn lambda_derivative(&self, x: &[f64]) -> Result<Vec<f64>> {
        let st = &self.stencil;
        let (w, v) = st.split(x);
        let mut out = w.to_vec();
        for (k, &i) in st.habitat.iter().enumerate() {
            out.push(v[k] * w[i] / (1.0 + w[i]));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone)]
pub struct NewtonOutcome {
    pub x: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

/// Damped Newton iteration with backtracking on the ℓ² residual.
///
/// Converges when `‖R‖∞` drops below `cfg.tol`, or below the round-off floor
/// of the discrete Laplacian when that is larger.
pub fn newton<S: SteadySystem + ?Sized>(sys: &S, x0: Vec<f64>, cfg: &NewtonConfig) -> Result<NewtonOutcome> {
    let st = sys.stencil();
    let mut x = x0;
    let mut r = sys.residual(&x)?;
    for it in 0..=cfg.max_iter {
        let res = linalg::norm_inf(&r);
        if !res.is_finite() {
            return Err(Error::SolveFailure("residual is not finite".into()));
        }
        if res <= cfg.tol.max(st.roundoff_floor(&x)) {
            return Ok(NewtonOutcome {
                x,
                residual: res,
                iterations: it,
            });
        }
        if it == cfg.max_iter {
            break;
        }
        let jac = sys.jacobian(&x)?;
        let lu = BandedLu::factor(&jac, st.order())?;
        let neg: Vec<f64> = r.iter().map(|v| -v).collect();
        let dx = lu.solve(&neg)?;
        let norm0 = linalg::dot(&r, &r).sqrt();
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=cfg.max_halvings {
            let trial: Vec<f64> = x.iter().zip(&dx).map(|(x, d)| x + t * d).collect();
            if let Ok(rt) = sys.residual(&trial) {
                let norm = linalg::dot(&rt, &rt).sqrt();
                if norm.is_finite() && norm <= (1.0 - 1e-4 * t) * norm0 {
                    accepted = Some((trial, rt));
                    break;
                }
            }
            t *= 0.5;
        }
        match accepted {
            Some((xn, rn)) => {
                x = xn;
                r = rn;
            }
            None => {
                return Err(Error::MaxIterations {
                    iterations: it + 1,
                    residual: res,
                })
            }
        }
    }
    Err(Error::MaxIterations {
        iterations: cfg.max_iter,
        residual: linalg::norm_inf(&r),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegralIdentities {
    /// `∫_Ω u(λ - u - b1_{Ω₁}v)`.
    pub prey: f64,
    /// `∫_{Ω₁} v/(1+αu) {αu(λ - u - bv) + μ + cu - v}`.
    pub predator: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SteadyState {
    pub u: Field,
    pub v: Field,
    pub params: ModelParams,
    pub residual_norm: f64,
    pub iterations: usize,
    /// Strict nodewise positivity of `u` on Ω and of `v` on Ω₁.
    pub positive: (bool, bool),
    pub identities: IntegralIdentities,
}

impl SteadyState {
    pub fn is_positive(&self) -> bool {
        self.positive.0 && self.positive.1
    }

    /// `(max u ≤ λ(1+tol), max v ≤ max{λ/b, μ+cλ}(1+tol))`.
    pub fn within_bounds(&self, tol: f64) -> (bool, bool) {
        let p = &self.params;
        (
            self.u.max() <= p.lambda * (1.0 + tol),
            self.v.max() <= p.predator_bound() * (1.0 + tol),
        )
    }

    /// ℓ∞ distance over both components.
    pub fn distance(&self, other: &SteadyState) -> f64 {
        let du = self.u.dist_inf(&other.u).unwrap_or(f64::INFINITY);
        let dv = self.v.dist_inf(&other.v).unwrap_or(f64::INFINITY);
        du.max(dv)
    }
}

fn positivity(u: &[f64], v: &[f64]) -> (bool, bool) {
    let pos = |x: &[f64]| x.iter().all(|&x| x > POSITIVITY_TOL);
    (pos(u), pos(v))
}

fn identities(sys: &Sp2, grid: &Grid, x: &[f64]) -> Result<IntegralIdentities> {
    // Laplacian rows integrate to zero, so these are weighted residual sums.
    let r = sys.residual(x)?;
    let n = sys.stencil.n();
    let w = grid.weights();
    let w1 = grid.region_weights(Region::Habitat);
    Ok(IntegralIdentities {
        prey: linalg::dot(w, &r[..n]),
        predator: linalg::dot(&w1, &r[n..]),
    })
}

fn make_state(sys: &Sp2, grid: &Grid, out: NewtonOutcome) -> Result<SteadyState> {
    let identities = identities(sys, grid, &out.x)?;
    let (u, v) = sys.stencil.unstack(&out.x);
    Ok(SteadyState {
        positive: positivity(u.values(), v.values()),
        u,
        v,
        params: sys.params,
        residual_norm: out.residual,
        iterations: out.iterations,
        identities,
    })
}

/// Residuals of both equations; `v` is taken as zero in the refuge.
pub fn residual_sp2(grid: &Grid, params: &ModelParams, u: &Field, v: &Field) -> Result<(Field, Field)> {
    let sys = Sp2::new(grid, *params)?;
    let r = sys.residual(&sys.stencil.stack(u, v)?)?;
    Ok(sys.stencil.unstack(&r))
}

/// Residual of the predator equation in the original flux form
/// `∇·((1+αu)∇v) - α∇·(v∇u) + v(μ + cu - v)`, together with the prey residual.
/// Agrees with [`residual_sp2`] up to the factor `1+αu` wherever the prey
/// equation holds.
pub fn residual_sp2_raw(grid: &Grid, params: &ModelParams, u: &Field, v: &Field) -> Result<(Field, Field)> {
    let (ru, _) = residual_sp2(grid, params, u, v)?;
    let u1 = u.restrict(grid, Region::Habitat)?;
    let a = u1.map(|x| 1.0 + params.alpha * x);
    let diffusion = operators::divergence_form(grid, &a)?.apply(v)?;
    let flux = operators::advective_term(grid, v, u)?;
    let rv = diffusion
        .add(&flux.scale(params.alpha))?
        .add(&v.zip_map(&u1, |v, u| v * (params.mu + params.c * u - v))?)?;
    Ok((ru, rv))
}

pub fn jacobian_sp2(grid: &Grid, params: &ModelParams, u: &Field, v: &Field) -> Result<CsrMatrix> {
    let sys = Sp2::new(grid, *params)?;
    sys.jacobian(&sys.stencil.stack(u, v)?)
}

pub fn newton_solve(
    grid: &Grid,
    params: &ModelParams,
    initial: (&Field, &Field),
    cfg: &NewtonConfig,
) -> Result<SteadyState> {
    let sys = Sp2::new(grid, *params)?;
    newton_sp2(&sys, grid, sys.stencil.stack(initial.0, initial.1)?, cfg)
}

pub(crate) fn newton_sp2(sys: &Sp2, grid: &Grid, x0: Vec<f64>, cfg: &NewtonConfig) -> Result<SteadyState> {
    let out = newton(sys, x0, cfg)?;
    make_state(sys, grid, out)
}

pub fn integral_identities(grid: &Grid, params: &ModelParams, u: &Field, v: &Field) -> Result<IntegralIdentities> {
    let sys = Sp2::new(grid, *params)?;
    identities(&sys, grid, &sys.stencil.stack(u, v)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Semitrivial {
    /// `(u, v) = (λ, 0)`.
    PreyOnly,
    /// `(u, v) = (0, μ)`.
    PredatorOnly,
}

pub fn semitrivial(grid: &Grid, params: &ModelParams, which: Semitrivial) -> Result<SteadyState> {
    let (u, v) = match which {
        Semitrivial::PreyOnly => {
            if !(params.lambda > 0.0) {
                return Err(Error::BadParameter(format!(
                    "the prey-only state needs lambda > 0, got {}",
                    params.lambda
                )));
            }
            (params.lambda, 0.0)
        }
        Semitrivial::PredatorOnly => {
            if !(params.mu > 0.0) {
                return Err(Error::BadParameter(format!(
                    "the predator-only state needs mu > 0, got {}",
                    params.mu
                )));
            }
            (0.0, params.mu)
        }
    };
    let sys = Sp2::new(grid, *params)?;
    let x = sys
        .stencil
        .stack(&Field::constant(grid, Region::Domain, u), &Field::constant(grid, Region::Habitat, v))?;
    let r = sys.residual(&x)?;
    make_state(
        &sys,
        grid,
        NewtonOutcome {
            residual: linalg::norm_inf(&r),
            x,
            iterations: 0,
        },
    )
}

/// A converged solution of the limit system.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Lp2State {
    pub w: Field,
    pub v: Field,
    pub lambda: f64,
    pub mu: f64,
    pub b: f64,
    pub residual_norm: f64,
    pub iterations: usize,
    pub positive: (bool, bool),
}

impl Lp2State {
    pub fn is_positive(&self) -> bool {
        self.positive.0 && self.positive.1
    }
}

pub(crate) fn lp2_state(sys: &Lp2, out: NewtonOutcome) -> Lp2State {
    let (w, v) = sys.stencil.unstack(&out.x);
    Lp2State {
        positive: positivity(w.values(), v.values()),
        w,
        v,
        lambda: sys.lambda,
        mu: sys.mu,
        b: sys.b,
        residual_norm: out.residual,
        iterations: out.iterations,
    }
}

pub fn residual_lp2(grid: &Grid, lambda: f64, mu: f64, b: f64, w: &Field, v: &Field) -> Result<(Field, Field)> {
    let sys = Lp2::new(grid, lambda, mu, b)?;
    let r = sys.residual(&sys.stencil.stack(w, v)?)?;
    Ok(sys.stencil.unstack(&r))
}

pub fn jacobian_lp2(grid: &Grid, lambda: f64, mu: f64, b: f64, w: &Field, v: &Field) -> Result<CsrMatrix> {
    let sys = Lp2::new(grid, lambda, mu, b)?;
    sys.jacobian(&sys.stencil.stack(w, v)?)
}

pub fn newton_lp2(
    grid: &Grid,
    lambda: f64,
    mu: f64,
    b: f64,
    initial: (&Field, &Field),
    cfg: &NewtonConfig,
) -> Result<Lp2State> {
    let sys = Lp2::new(grid, lambda, mu, b)?;
    let out = newton(&sys, sys.stencil.stack(initial.0, initial.1)?, cfg)?;
    Ok(lp2_state(&sys, out))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MultistartConfig {
    pub starts: usize,
    pub seed: u64,
    pub newton: NewtonConfig,
}

impl Default for MultistartConfig {
    fn default() -> Self {
        MultistartConfig {
            starts: 50,
            seed: 0,
            newton: NewtonConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MultistartReport {
    /// Distinct strictly positive coexistence states, in order of discovery.
    pub positive: Vec<SteadyState>,
    /// Starts that converged to anything.
    pub converged: usize,
    pub starts: usize,
}

/// Positive initial fields `level·exp(½·noise)` where the noise is a random
/// combination of low cosine modes scaled to `|noise| ≤ 1`.
pub(crate) fn random_field(grid: &Grid, region: Region, level: f64, rng: &mut ChaCha8Rng) -> Field {
    let [[x0, y0], [x1, y1]] = grid.bounding_box();
    let (lx, ly) = ((x1 - x0).max(1e-300), (y1 - y0).max(1e-300));
    let modes: Vec<(f64, f64, f64, f64)> = (0..4)
        .map(|_| {
            (
                rng.gen_range(-1.0..1.0),
                rng.gen_range(0..4) as f64,
                rng.gen_range(0..3) as f64,
                rng.gen_range(0.0..std::f64::consts::TAU),
            )
        })
        .collect();
    let noise = |p: [f64; 2]| {
        modes
            .iter()
            .map(|(a, kx, ky, ph)| {
                let arg = std::f64::consts::TAU * (kx * (p[0] - x0) / lx + ky * (p[1] - y0) / ly);
                a * (arg + ph).cos()
            })
            .sum::<f64>()
    };
    let raw = Field::from_fn(grid, region, noise);
    let scale = raw.norm_inf().max(1e-12);
    raw.map(|z| level * (0.5 * z / scale).exp())
}

/// Latin-hypercube samples of the two constant levels inside the a priori box.
pub fn multistart_initials(grid: &Grid, params: &ModelParams, starts: usize, seed: u64) -> Vec<(Field, Field)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut strata_u: Vec<usize> = (0..starts).collect();
    let mut strata_v: Vec<usize> = (0..starts).collect();
    use rand::seq::SliceRandom;
    strata_u.shuffle(&mut rng);
    strata_v.shuffle(&mut rng);
    let umax = params.lambda.max(1e-6);
    let vmax = params.predator_bound().max(1e-6);
    (0..starts)
        .map(|k| {
            let su = (strata_u[k] as f64 + rng.gen::<f64>()) / starts as f64;
            let sv = (strata_v[k] as f64 + rng.gen::<f64>()) / starts as f64;
            let u = random_field(grid, Region::Domain, (su * umax).max(1e-3 * umax), &mut rng);
            let v = random_field(grid, Region::Habitat, (sv * vmax).max(1e-3 * vmax), &mut rng);
            (u, v)
        })
        .collect()
}

/// Newton from many random positive starts; returns every distinct positive
/// solution found. Deterministic for a given seed.
pub fn multistart(grid: &Grid, params: &ModelParams, cfg: &MultistartConfig) -> Result<MultistartReport> {
    let sys = Sp2::new(grid, *params)?;
    let initials = multistart_initials(grid, params, cfg.starts, cfg.seed);
    let results: Vec<Option<SteadyState>> = initials
        .par_iter()
        .map(|(u, v)| {
            let x0 = sys.stencil.stack(u, v).ok()?;
            newton_sp2(&sys, grid, x0, &cfg.newton).ok()
        })
        .collect();
    let converged = results.iter().filter(|r| r.is_some()).count();
    let mut positive: Vec<SteadyState> = Vec::new();
    for s in results.into_iter().flatten() {
        // A component below the distinctness tolerance cannot be told apart
        // from a semitrivial state.
        let coexisting = s.u.max() > DISTINCT_TOL && s.v.max() > DISTINCT_TOL;
        if s.is_positive() && coexisting && positive.iter().all(|p| p.distance(&s) > DISTINCT_TOL) {
            positive.push(s);
        }
    }
    Ok(MultistartReport {
        positive,
        converged,
        starts: cfg.starts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::DomainSpec;
    use crate::spectra;

    fn ring(n: usize) -> Grid {
        Grid::build(&DomainSpec::ring(n)).unwrap()
    }

    fn params(lambda: f64, mu: f64, alpha: f64) -> ModelParams {
        ModelParams::new(lambda, mu, 1.0, 1.0, alpha).unwrap()
    }

    #[test]
    fn semitrivial_states_have_zero_residual() {
        let g = ring(64);
        let p = params(1.5, 2.0, 3.0);
        let s = semitrivial(&g, &p, Semitrivial::PreyOnly).unwrap();
        assert_eq!(s.residual_norm, 0.0);
        assert_eq!(s.identities.prey, 0.0);
        assert_eq!(s.identities.predator, 0.0);
        let s = semitrivial(&g, &p, Semitrivial::PredatorOnly).unwrap();
        assert_eq!(s.residual_norm, 0.0);
        let p = params(1.5, -1.0, 3.0);
        assert!(semitrivial(&g, &p, Semitrivial::PredatorOnly).is_err());
    }

    #[test]
    fn degenerate_denominator_is_reported() {
        let g = ring(32);
        let p = params(1.0, 1.0, 2.0);
        let u = Field::constant(&g, Region::Domain, -0.6);
        let v = Field::constant(&g, Region::Habitat, 1.0);
        assert!(matches!(
            residual_sp2(&g, &p, &u, &v),
            Err(Error::DegenerateDenominator { .. })
        ));
    }

    #[test]
    fn raw_form_agrees_where_prey_equation_holds() {
        let g = ring(128);
        let sigma = spectra::sigma1_curve(&g, 1.0, 2.0).unwrap();
        let p = params(sigma + 0.5, 2.0, 1.0);
        let init = (
            Field::constant(&g, Region::Domain, 0.3),
            Field::constant(&g, Region::Habitat, 2.0),
        );
        let s = newton_solve(&g, &p, (&init.0, &init.1), &NewtonConfig::default()).unwrap();
        assert!(s.is_positive());
        let (_, raw) = residual_sp2_raw(&g, &p, &s.u, &s.v).unwrap();
        assert!(raw.norm_inf() < 1e-8, "{}", raw.norm_inf());
    }

    #[test]
    fn newton_from_semitrivial_takes_no_steps() {
        let g = ring(64);
        let p = params(1.0, 2.0, 1.0);
        let u = Field::zeros(&g, Region::Domain);
        let v = Field::constant(&g, Region::Habitat, 2.0);
        let s = newton_solve(&g, &p, (&u, &v), &NewtonConfig::default()).unwrap();
        assert_eq!(s.iterations, 0);
    }

    #[test]
    fn limit_system_predator_only_state() {
        let g = ring(64);
        let w = Field::zeros(&g, Region::Domain);
        let v = Field::constant(&g, Region::Habitat, 2.0);
        let (rw, rv) = residual_lp2(&g, 0.3, 2.0, 1.0, &w, &v).unwrap();
        assert_eq!(rw.norm_inf(), 0.0);
        assert_eq!(rv.norm_inf(), 0.0);
    }

    #[test]
    fn multistart_is_deterministic() {
        let g = ring(64);
        let sigma = spectra::sigma1_curve(&g, 1.0, 2.0).unwrap();
        let p = params(sigma + 1.0, 2.0, 0.5);
        let cfg = MultistartConfig {
            starts: 8,
            seed: 7,
            ..Default::default()
        };
        let a = multistart(&g, &p, &cfg).unwrap();
        let b = multistart(&g, &p, &cfg).unwrap();
        assert_eq!(a.positive.len(), b.positive.len());
        assert!(!a.positive.is_empty());
        for (x, y) in a.positive.iter().zip(&b.positive) {
            assert_eq!(x.u, y.u);
        }
    }
}
