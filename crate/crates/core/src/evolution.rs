//! Time integration of the parabolic system
//!
//! ```text
//! u_t = Δu + u(λ - u - b1_{Ω₁}v)                      in Ω
//! v_t = ∇·((1+αu)∇v) - α∇·(v∇u) + v(μ + cu - v)       in Ω₁
//! ```
//!
//! by a first-order IMEX scheme: diffusion implicit, reaction and the
//! directed flux explicit. The predator diffusion coefficient uses the cutoff
//! `χ(u)` so it stays elliptic even if `u` dips below zero.
//!
//! Both updates are written for the increment, `(I - dt L)(xⁿ⁺¹ - xⁿ) = dt·rhs`,
//! so states with zero right-hand side, such as `(λ, 0)` or any `v ≡ 0`, are
//! reproduced exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Field, Grid, Region};
use crate::linalg;
use crate::model::ModelParams;
use crate::operators::{self, Operator};
use crate::steady;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolutionConfig {
    pub dt: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub t_final: f64,
    /// Width `δ` of the cutoff; must lie in `(0, 1/(2α))`. Defaults to `1/(4α)`.
    pub cutoff: Option<f64>,
    /// Stop when `‖(xⁿ⁺¹ - xⁿ)/dt‖∞` falls below this.
    pub steady_tol: f64,
    /// Record a monitor row every this many accepted steps.
    pub monitor_every: usize,
    /// Keep a snapshot every this many accepted steps; 0 keeps none.
    pub snapshot_every: usize,
    /// Fail when `‖u‖∞ + ‖v‖∞` exceeds this.
    pub blowup: f64,
    /// Switch off all reaction terms, leaving pure transport.
    pub transport_only: bool,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        EvolutionConfig {
            dt: 1e-3,
            dt_min: 1e-9,
            dt_max: 0.05,
            t_final: 200.0,
            cutoff: None,
            steady_tol: 1e-10,
            monitor_every: 50,
            snapshot_every: 0,
            blowup: 1e8,
            transport_only: false,
        }
    }
}

/// Negative values below this count as a positivity violation.
pub const NEGATIVITY_TOL: f64 = -1e-12;

/// `χ(s) = s` for `s ≥ 0`, `-δ` for `s ≤ -δ`, and the cubic
/// `s - s²/δ - s³/δ²` in between, which joins both pieces with matching slope.
pub fn cutoff(s: f64, delta: f64) -> f64 {
    if s >= 0.0 {
        s
    } else if s <= -delta {
        -delta
    } else {
        s - s * s / delta - s * s * s / (delta * delta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Monitor {
    pub t: f64,
    pub dt: f64,
    pub min_u: f64,
    pub min_v: f64,
    pub mass_u: f64,
    pub mass_v: f64,
    /// `‖(xⁿ⁺¹ - xⁿ)/dt‖∞` of the last step.
    pub rate: f64,
    /// ℓ∞ norm of the steady residual.
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    SteadyDetected,
    TimeReached,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub monitors: Vec<Monitor>,
    pub snapshots: Vec<(f64, Field, Field)>,
    pub u: Field,
    pub v: Field,
    pub t: f64,
    pub steps: usize,
    pub rejected: usize,
    pub outcome: Outcome,
    /// Smallest nodal values seen over all accepted states.
    pub min_u: f64,
    pub min_v: f64,
    /// Accepted steps in which `χ(u) ≠ u` at some node.
    pub cutoff_active_steps: usize,
}

/// ℓ∞ norm of the steady residual at `(u, v)`.
pub fn steady_residual_monitor(grid: &Grid, params: &ModelParams, u: &Field, v: &Field) -> Result<f64> {
    let (ru, rv) = steady::residual_sp2(grid, params, u, v)?;
    Ok(ru.norm_inf().max(rv.norm_inf()))
}

/// Precomputed pieces for stepping on one grid.
pub struct Stepper {
    params: ModelParams,
    delta: f64,
    lap: Operator,
    implicit_u: Option<(f64, operators::ShiftedSolver)>,
    theta: Vec<f64>,
    habitat: Vec<usize>,
    transport_only: bool,
}

pub struct Step {
    pub u: Field,
    pub v: Field,
    pub cutoff_active: bool,
}

impl Stepper {
    pub fn new(grid: &Grid, params: &ModelParams, cfg: &EvolutionConfig) -> Result<Self> {
        params.validate()?;
        let delta = match cfg.cutoff {
            Some(d) => d,
            None if params.alpha > 0.0 => 0.25 / params.alpha,
            None => 0.25,
        };
        if !(delta > 0.0) || (params.alpha > 0.0 && delta >= 0.5 / params.alpha) {
            return Err(Error::BadParameter(format!(
                "cutoff width must lie in (0, 1/(2 alpha)), got {delta}"
            )));
        }
        Ok(Stepper {
            params: *params,
            delta,
            lap: operators::neumann_laplacian(grid, Region::Domain)?,
            implicit_u: None,
            theta: grid.habitat_fraction().to_vec(),
            habitat: grid.nodes(Region::Habitat).to_vec(),
            transport_only: cfg.transport_only,
        })
    }

    /// One step of size `dt` from `(u, v)`.
    pub fn step(&mut self, grid: &Grid, u: &Field, v: &Field, dt: f64) -> Result<Step> {
        if !(dt > 0.0) {
            return Err(Error::BadParameter(format!("time step must be positive, got {dt}")));
        }
        let ModelParams {
            lambda,
            mu,
            b,
            c,
            alpha,
        } = self.params;
        let (uv, vv) = (u.values(), v.values());
        let react = !self.transport_only;

        let mut rhs_u = self.lap.apply_values(uv);
        if react {
            let mut vext = vec![0.0; uv.len()];
            for (k, &i) in self.habitat.iter().enumerate() {
                vext[i] = vv[k];
            }
            for i in 0..uv.len() {
                rhs_u[i] += uv[i] * (lambda - uv[i] - b * self.theta[i] * vext[i]);
            }
        }
        if self.implicit_u.as_ref().map(|(h, _)| *h) != Some(dt) {
            self.implicit_u = Some((dt, self.lap.factor_shifted(1.0 / dt)?));
        }
        // (I - dt L) δ = dt·rhs  ⇔  (-L + 1/dt) δ = rhs.
        let du = self.implicit_u.as_ref().unwrap().1.solve_values(&rhs_u)?;
        let u_new: Vec<f64> = uv.iter().zip(&du).map(|(a, d)| a + d).collect();

        let mut cutoff_active = false;
        let a: Vec<f64> = self
            .habitat
            .iter()
            .map(|&i| {
                let chi = cutoff(uv[i], self.delta);
                cutoff_active |= chi != uv[i];
                1.0 + alpha * chi
            })
            .collect();
        let diff = operators::divergence_form_unchecked(grid, &a);
        let mut rhs_v = diff.apply_values(vv);
        let u_new_field = Field::from_values(Region::Domain, u_new);
        if alpha != 0.0 {
            let adv = operators::advective_term(grid, v, &u_new_field)?;
            for (r, f) in rhs_v.iter_mut().zip(adv.values()) {
                *r += alpha * f;
            }
        }
        if react {
            for (k, &i) in self.habitat.iter().enumerate() {
                rhs_v[k] += vv[k] * (mu + c * u_new_field.values()[i] - vv[k]);
            }
        }
        let dv = diff.factor_shifted(1.0 / dt)?.solve_values(&rhs_v)?;
        let v_new: Vec<f64> = vv.iter().zip(&dv).map(|(a, d)| a + d).collect();
        if !u_new_field.values().iter().chain(&v_new).all(|x| x.is_finite()) {
            return Err(Error::NonfiniteState { time: f64::NAN });
        }
        Ok(Step {
            u: u_new_field,
            v: Field::from_values(Region::Habitat, v_new),
            cutoff_active,
        })
    }
}

/// One IMEX step; see [`Stepper`] for repeated use.
pub fn step(grid: &Grid, params: &ModelParams, u: &Field, v: &Field, dt: f64) -> Result<(Field, Field)> {
    let mut s = Stepper::new(grid, params, &EvolutionConfig::default())?;
    let out = s.step(grid, u, v, dt)?;
    Ok((out.u, out.v))
}

fn monitor(grid: &Grid, params: &ModelParams, t: f64, dt: f64, rate: f64, u: &Field, v: &Field) -> Monitor {
    let w1 = grid.region_weights(Region::Habitat);
    Monitor {
        t,
        dt,
        min_u: u.min(),
        min_v: v.min(),
        mass_u: grid.integrate(u),
        mass_v: linalg::dot(&w1, v.values()),
        rate,
        residual: steady_residual_monitor(grid, params, u, v).unwrap_or(f64::NAN),
    }
}

/// Integrate from `(u0, v0)` until `cfg.t_final` or until the state stops
/// changing. Steps that produce values below `-1e-12` or fail to solve are
/// retried with half the step; the step grows again by 10% after each run of
/// ten clean steps.
pub fn evolve(grid: &Grid, params: &ModelParams, u0: &Field, v0: &Field, cfg: &EvolutionConfig) -> Result<Trajectory> {
    u0.expect_region(Region::Domain)?;
    v0.expect_region(Region::Habitat)?;
    if u0.min() < 0.0 || v0.min() < 0.0 {
        return Err(Error::BadParameter("initial data must be nonnegative".into()));
    }
    if !(cfg.dt > 0.0 && cfg.dt_min > 0.0 && cfg.dt_max >= cfg.dt_min) {
        return Err(Error::BadParameter("time steps must satisfy 0 < dt_min <= dt_max".into()));
    }
    let mut stepper = Stepper::new(grid, params, cfg)?;
    let (mut u, mut v) = (u0.clone(), v0.clone());
    let mut t = 0.0;
    let mut dt = cfg.dt.clamp(cfg.dt_min, cfg.dt_max);
    let mut monitors = vec![monitor(grid, params, 0.0, dt, f64::NAN, &u, &v)];
    let mut snapshots = Vec::new();
    if cfg.snapshot_every > 0 {
        snapshots.push((0.0, u.clone(), v.clone()));
    }
    let (mut steps, mut rejected, mut clean, mut cutoff_steps) = (0, 0, 0, 0);
    let (mut min_u, mut min_v) = (u.min(), v.min());
    let mut rate = f64::INFINITY;
    let outcome = loop {
        if t >= cfg.t_final {
            break Outcome::TimeReached;
        }
        let h = dt.min(cfg.t_final - t);
        let trial = stepper.step(grid, &u, &v, h);
        let ok = match &trial {
            Ok(s) => s.u.min() >= NEGATIVITY_TOL && s.v.min() >= NEGATIVITY_TOL,
            Err(Error::SolveFailure(_)) | Err(Error::NonfiniteState { .. }) => false,
            Err(_) => false,
        };
        if !ok {
            rejected += 1;
            clean = 0;
            dt *= 0.5;
            if dt < cfg.dt_min {
                return match trial {
                    Err(Error::NonfiniteState { .. }) => Err(Error::NonfiniteState { time: t }),
                    Err(e) => Err(e),
                    Ok(_) => Err(Error::SolveFailure(format!(
                        "step size fell below {} at t = {t} keeping the state nonnegative",
                        cfg.dt_min
                    ))),
                };
            }
            continue;
        }
        let s = trial.unwrap();
        let du = s.u.dist_inf(&u)?;
        let dv = s.v.dist_inf(&v)?;
        rate = du.max(dv) / h;
        u = s.u;
        v = s.v;
        t += h;
        steps += 1;
        cutoff_steps += usize::from(s.cutoff_active);
        min_u = min_u.min(u.min());
        min_v = min_v.min(v.min());
        if u.norm_inf() + v.norm_inf() > cfg.blowup {
            return Err(Error::BlowupDetected {
                time: t,
                norm: u.norm_inf() + v.norm_inf(),
            });
        }
        if cfg.monitor_every > 0 && steps % cfg.monitor_every == 0 {
            monitors.push(monitor(grid, params, t, h, rate, &u, &v));
        }
        if cfg.snapshot_every > 0 && steps % cfg.snapshot_every == 0 {
            snapshots.push((t, u.clone(), v.clone()));
        }
        if rate < cfg.steady_tol {
            break Outcome::SteadyDetected;
        }
        clean += 1;
        if clean >= 10 {
            dt = (dt * 1.1).min(cfg.dt_max);
            clean = 0;
        }
    };
    if monitors.last().map(|m| m.t) != Some(t) {
        monitors.push(monitor(grid, params, t, dt, rate, &u, &v));
    }
    Ok(Trajectory {
        monitors,
        snapshots,
        u,
        v,
        t,
        steps,
        rejected,
        outcome,
        min_u,
        min_v,
        cutoff_active_steps: cutoff_steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::DomainSpec;

    fn ring(n: usize) -> Grid {
        Grid::build(&DomainSpec::ring(n)).unwrap()
    }

    #[test]
    fn cutoff_is_c1() {
        let d = 0.2;
        assert_eq!(cutoff(0.3, d), 0.3);
        assert_eq!(cutoff(-0.5, d), -d);
        assert!((cutoff(-d, d) + d).abs() < 1e-15);
        let e = 1e-7;
        let slope0 = (cutoff(0.0, d) - cutoff(-e, d)) / e;
        assert!((slope0 - 1.0).abs() < 1e-5);
        let slope_d = (cutoff(-d + e, d) - cutoff(-d, d)) / e;
        assert!(slope_d.abs() < 1e-5);
        for k in 0..100 {
            let s = -d + d * k as f64 / 100.0;
            assert!(cutoff(s, d) >= -d && cutoff(s, d) <= s.max(0.0) + 1e-15);
        }
    }

    #[test]
    fn prey_only_state_is_a_fixed_point() {
        let g = ring(64);
        let p = ModelParams::new(1.5, 2.0, 1.0, 1.0, 3.0).unwrap();
        let u = Field::constant(&g, Region::Domain, 1.5);
        let v = Field::zeros(&g, Region::Habitat);
        let (u1, v1) = step(&g, &p, &u, &v, 0.01).unwrap();
        assert_eq!(u1, u);
        assert_eq!(v1, v);
    }

    #[test]
    fn rejects_bad_cutoff_and_negative_data() {
        let g = ring(32);
        let p = ModelParams::new(1.0, 1.0, 1.0, 1.0, 2.0).unwrap();
        let cfg = EvolutionConfig {
            cutoff: Some(0.3),
            ..Default::default()
        };
        assert!(Stepper::new(&g, &p, &cfg).is_err());
        let u = Field::constant(&g, Region::Domain, -0.1);
        let v = Field::zeros(&g, Region::Habitat);
        assert!(evolve(&g, &p, &u, &v, &EvolutionConfig::default()).is_err());
    }
}
