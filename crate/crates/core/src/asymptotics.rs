//! Limits of steady states for large flux strength `α` and for small prey
//! growth in the limit system.

use serde::{Deserialize, Serialize};

use crate::continuation::{self, ContinuationConfig, Crossing};
use crate::error::{Error, Result};
use crate::geometry::{Field, Grid, Region};
use crate::model::ModelParams;
use crate::operators;
use crate::spectra;
use crate::steady::{self, Lp2State, NewtonConfig, SteadyState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitCase {
    /// `(u, v) → (λ, 0)`.
    PreyOnly,
    /// `(αu, v) → (w, v∞)`, a solution of the limit system.
    Rescaled,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlphaSweepRow {
    pub alpha: f64,
    /// `‖u - λ‖∞`.
    pub prey_gap: Option<f64>,
    /// `‖v‖∞`.
    pub predator_norm: Option<f64>,
    /// `‖αu - w‖∞` against the limit-system solution, when one exists.
    pub rescaled_gap: Option<f64>,
    pub case: Option<LimitCase>,
    pub error: Option<String>,
    #[serde(skip)]
    pub state: Option<SteadyState>,
}

fn classify_case(state: &SteadyState) -> LimitCase {
    let lambda = state.params.lambda;
    let to_prey_only = state.u.map(|x| x - lambda).norm_inf() + state.v.norm_inf();
    // In the rescaled case u = O(1/α) while v stays of order one.
    if state.u.norm_inf() < to_prey_only {
        LimitCase::Rescaled
    } else {
        LimitCase::PreyOnly
    }
}

/// Steady states along increasing `α`, each warm-started from the previous
/// one. Between listed values `α` is advanced geometrically by at most a
/// factor 1.5, halving the factor when Newton fails.
///
/// The chain starts from the branch leaving the semitrivial state at the
/// first listed `α`; for `λ` below the bifurcation value it takes the
/// small-amplitude crossing, which is the one that rescales.
pub fn alpha_sweep(
    grid: &Grid,
    lambda: f64,
    mu: f64,
    b: f64,
    c: f64,
    alphas: &[f64],
    cfg: &ContinuationConfig,
) -> Result<Vec<AlphaSweepRow>> {
    if alphas.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::BadParameter("alphas must be strictly increasing".into()));
    }
    let Some(&first) = alphas.first() else {
        return Ok(Vec::new());
    };
    let sigma = if mu > 0.0 {
        spectra::sigma1_curve(grid, b, mu)?
    } else {
        f64::INFINITY
    };
    let which = if lambda < sigma { Crossing::First } else { Crossing::Last };
    let limit = if mu > 0.0 && lambda < sigma {
        continuation::lp2_solution(grid, lambda, mu, b, cfg).ok()
    } else {
        None
    };
    let base = ModelParams::new(lambda, mu, b, c, first)?;
    let mut current = continuation::positive_solution(grid, &base, which, cfg);
    let mut rows = Vec::with_capacity(alphas.len());
    let mut alpha = first;
    for &target in alphas {
        if let Ok(state) = &current {
            if target > alpha {
                current = march_alpha(grid, state, target, &cfg.newton);
            }
        }
        alpha = target;
        rows.push(match &current {
            Ok(s) => AlphaSweepRow {
                alpha,
                prey_gap: Some(s.u.map(|x| x - lambda).norm_inf()),
                predator_norm: Some(s.v.norm_inf()),
                rescaled_gap: limit
                    .as_ref()
                    .and_then(|l| s.u.scale(alpha).dist_inf(&l.w).ok()),
                case: Some(classify_case(s)),
                error: None,
                state: Some(s.clone()),
            },
            Err(e) => AlphaSweepRow {
                alpha,
                prey_gap: None,
                predator_norm: None,
                rescaled_gap: None,
                case: None,
                error: Some(e.to_string()),
                state: None,
            },
        });
    }
    Ok(rows)
}

fn march_alpha(grid: &Grid, from: &SteadyState, target: f64, newton: &NewtonConfig) -> Result<SteadyState> {
    let mut state = from.clone();
    let mut ratio: f64 = 1.5;
    while state.params.alpha < target {
        let a = state.params.alpha;
        let next = if a == 0.0 {
            target.min(1.0)
        } else {
            (a * ratio).min(target)
        };
        let p = state.params.with_alpha(next);
        match steady::newton_solve(grid, &p, (&state.u, &state.v), newton) {
            Ok(s) if s.is_positive() => {
                state = s;
                ratio = (ratio * 1.2).min(1.5);
            }
            _ => {
                ratio = 1.0 + 0.5 * (ratio - 1.0);
                if ratio < 1.0 + 1e-6 {
                    return Err(Error::SolutionNotFound(format!("warm start failed at alpha = {a}")));
                }
            }
        }
    }
    Ok(state)
}

/// `(s, t, φ, ψ)` with `λw = s + λφ`, `v/λ = t + λψ`, `s` the mean of `λw`
/// over Ω and `t` the mean of `v/λ` over Ω₁.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Decomposition {
    pub s: f64,
    pub t: f64,
    pub phi: Field,
    pub psi: Field,
}

pub fn extract_lyapunov_schmidt(grid: &Grid, w: &Field, v: &Field, lambda: f64) -> Result<Decomposition> {
    w.expect_region(Region::Domain)?;
    v.expect_region(Region::Habitat)?;
    if !(lambda > 0.0) {
        return Err(Error::BadParameter(format!("lambda must be positive, got {lambda}")));
    }
    let lw = w.scale(lambda);
    let s = grid.mean(&lw);
    let vl = v.scale(1.0 / lambda);
    let w1 = grid.region_weights(Region::Habitat);
    let t = vl.values().iter().zip(&w1).map(|(x, w)| x * w).sum::<f64>() / w1.iter().sum::<f64>();
    Ok(Decomposition {
        s,
        t,
        phi: lw.map(|x| (x - s) / lambda),
        psi: vl.map(|x| (x - t) / lambda),
    })
}

/// `s₀ = μ|Ω₁|/|Ω₀|` and `t₀ = |Ω|/(b|Ω₁|)`.
pub fn base_point(grid: &Grid, b: f64, mu: f64) -> (f64, f64) {
    let (all, refuge, habitat) = grid.measures();
    (mu * habitat / refuge, all / (b * habitat))
}

/// `φ₀ = μ(-Δ)⁻¹ of ((|Ω₁|/|Ω₀|)1_{Ω₀} - 1_{Ω₁})` with zero mean.
pub fn phi_zero(grid: &Grid, mu: f64) -> Result<Field> {
    let (_, refuge, habitat) = grid.measures();
    let rhs = grid
        .habitat_indicator()
        .map(|theta| mu * ((habitat / refuge) * (1.0 - theta) - theta));
    operators::mean_zero_inverse(grid, Region::Domain, &rhs)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasePointJacobian {
    pub s0: f64,
    pub t0: f64,
    pub j: [[f64; 2]; 2],
    pub det: f64,
}

/// Jacobian of the reduced two-dimensional map at `(s₀, t₀)`.
pub fn jacobian_base_point(grid: &Grid, b: f64, mu: f64) -> Result<BasePointJacobian> {
    if !(mu > 0.0) || !(b > 0.0) {
        return Err(Error::BadParameter(format!("need mu > 0 and b > 0, got mu = {mu}, b = {b}")));
    }
    let (_, refuge, habitat) = grid.measures();
    let (s0, t0) = base_point(grid, b, mu);
    let j = [[0.0, -s0 * b * habitat], [-(t0 / s0) * refuge, -b * t0 * habitat]];
    Ok(BasePointJacobian {
        s0,
        t0,
        j,
        det: j[0][0] * j[1][1] - j[0][1] * j[1][0],
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalingRow {
    pub lambda: f64,
    pub w_max: f64,
    /// `λ‖w‖∞`.
    pub scaled_w_max: f64,
    /// Mean of `v/λ` over Ω₁.
    pub scaled_v_mean: f64,
    pub min_v_over_lambda: f64,
    pub max_v_over_lambda: f64,
    /// `max v / min v` on Ω₁.
    pub harnack_ratio: f64,
    /// `λ/b < v < μ` at every habitat node.
    pub within_bounds: bool,
    pub s: f64,
    pub t: f64,
    /// `‖φ - φ₀‖∞`.
    pub phi_error: f64,
    /// `‖ψ‖∞`.
    pub psi_norm: f64,
    pub residual: f64,
    #[serde(skip)]
    pub state: Option<Lp2State>,
}

fn scaling_row(grid: &Grid, state: &Lp2State, phi0: &Field) -> Result<ScalingRow> {
    let lambda = state.lambda;
    let d = extract_lyapunov_schmidt(grid, &state.w, &state.v, lambda)?;
    let (vmin, vmax) = (state.v.min(), state.v.max());
    Ok(ScalingRow {
        lambda,
        w_max: state.w.max(),
        scaled_w_max: lambda * state.w.max(),
        scaled_v_mean: d.t,
        min_v_over_lambda: vmin / lambda,
        max_v_over_lambda: vmax / lambda,
        harnack_ratio: vmax / vmin,
        within_bounds: vmin > lambda / state.b && vmax < state.mu,
        s: d.s,
        t: d.t,
        phi_error: d.phi.dist_inf(phi0)?,
        psi_norm: d.psi.norm_inf(),
        residual: state.residual_norm,
        state: Some(state.clone()),
    })
}

/// Solutions of the limit system at decreasing `λ` with their scaling
/// diagnostics.
///
/// The first solution comes from the branch leaving `(0, μ)`. Later ones are
/// reached by lowering `λ` geometrically, predicting with the blow-up scaling
/// `w ∝ 1/λ`, `v ∝ λ` and correcting with Newton.
pub fn lp2_scaling_probe(
    grid: &Grid,
    mu: f64,
    b: f64,
    lambdas: &[f64],
    cfg: &ContinuationConfig,
) -> Result<Vec<ScalingRow>> {
    if lambdas.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::BadParameter("lambdas must be strictly decreasing".into()));
    }
    let Some(&first) = lambdas.first() else {
        return Ok(Vec::new());
    };
    let phi0 = phi_zero(grid, mu)?;
    let mut state = continuation::lp2_solution(grid, first, mu, b, cfg)?;
    let mut rows = vec![scaling_row(grid, &state, &phi0)?];
    for &target in &lambdas[1..] {
        while state.lambda > target {
            let mut ratio: f64 = 0.8;
            loop {
                let next = (state.lambda * ratio).max(target);
                let k = next / state.lambda;
                let w = state.w.scale(1.0 / k);
                let v = state.v.map(|x| x * k.max(0.0));
                match steady::newton_lp2(grid, next, mu, b, (&w, &v), &cfg.newton) {
                    Ok(s) if s.is_positive() => {
                        state = s;
                        break;
                    }
                    _ => {
                        ratio = 1.0 - 0.5 * (1.0 - ratio);
                        if ratio > 1.0 - 1e-6 {
                            return Err(Error::SolutionNotFound(format!(
                                "limit system continuation failed below lambda = {}",
                                state.lambda
                            )));
                        }
                    }
                }
            }
        }
        rows.push(scaling_row(grid, &state, &phi0)?);
    }
    Ok(rows)
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::DomainSpec;
    use std::f64::consts::PI;

    #[test]
    fn ring_base_point_jacobian() {
        let g = Grid::build(&DomainSpec::ring(256)).unwrap();
        let bp = jacobian_base_point(&g, 1.0, 2.0).unwrap();
        assert!((bp.s0 - 2.0).abs() < 1e-12 && (bp.t0 - 2.0).abs() < 1e-12);
        let expect = [[0.0, -2.0 * PI], [-PI, -2.0 * PI]];
        for r in 0..2 {
            for c in 0..2 {
                assert!((bp.j[r][c] - expect[r][c]).abs() < 1e-12);
            }
        }
        assert!((bp.det + 2.0 * PI * PI).abs() < 1e-11);
    }

    #[test]
    fn decomposition_reconstructs() {
        let g = Grid::build(&DomainSpec::ring(64)).unwrap();
        let w = Field::from_fn(&g, Region::Domain, |p| 3.0 + p[0].sin());
        let v = Field::from_fn(&g, Region::Habitat, |p| 0.2 + 0.1 * p[0].cos());
        let lambda = 0.3;
        let d = extract_lyapunov_schmidt(&g, &w, &v, lambda).unwrap();
        let back = d.phi.map(|x| d.s + lambda * x);
        assert!(back.dist_inf(&w.scale(lambda)).unwrap() < 1e-14);
        assert!(grid_mean_abs(&g, &d.phi) < 1e-13);
    }

    fn grid_mean_abs(g: &Grid, f: &Field) -> f64 {
        g.mean(f).abs()
    }

    #[test]
    fn loglog_slope_of_power_law() {
        let x = [1.0, 2.0, 4.0, 8.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(1.5)).collect();
        assert!((loglog_slope(&x, &y) - 1.5).abs() < 1e-12);
    }
}
