use proptest::prelude::*;
use refugia::continuation::{self, ContinuationConfig};
use refugia::evolution::{self, EvolutionConfig};
use refugia::linalg::CsrMatrix;
use refugia::operators;
use refugia::steady::{self, NewtonConfig, Stencil, SteadySystem, DISTINCT_TOL, POSITIVITY_TOL};
use refugia::thresholds::{self, Verdict};
use refugia::verify;
use refugia::{DomainSpec, Field, Grid, ModelParams, Region, Result};
use std::sync::OnceLock;

fn ring64() -> &'static Grid {
    static G: OnceLock<Grid> = OnceLock::new();
    G.get_or_init(|| Grid::build(&DomainSpec::ring(64)).unwrap())
}

fn rect_small() -> &'static Grid {
    static G: OnceLock<Grid> = OnceLock::new();
    G.get_or_init(|| Grid::build(&DomainSpec::rect(32, 16)).unwrap())
}

/// Prey and predator sharing growth rate `λ` and competing for it; this
/// system has no positive solution, so it probes the solver for false hits.
struct SharedGrowth {
    lambda: f64,
    b: f64,
    stencil: Stencil,
}

impl SteadySystem for SharedGrowth {
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
        let (u, v) = st.split(x);
        let mut out = st.laplacian().apply_values(u);
        out.extend(st.habitat_laplacian().apply_values(v));
        let n = st.n();
        let mut vext = vec![0.0; n];
        for (k, &i) in st.habitat_nodes().iter().enumerate() {
            vext[i] = v[k];
            out[n + k] += v[k] * (self.lambda - u[i] - self.b * v[k]);
        }
        for i in 0..n {
            out[i] += u[i] * (self.lambda - u[i] - self.b * st.theta()[i] * vext[i]);
        }
        Ok(out)
    }

    fn jacobian(&self, x: &[f64]) -> Result<CsrMatrix> {
        let st = &self.stencil;
        let (u, v) = st.split(x);
        let n = st.n();
        let mut t = st.laplacian().matrix().triplets();
        t.extend(
            st.habitat_laplacian()
                .matrix()
                .triplets()
                .into_iter()
                .map(|(r, c, a)| (r + n, c + n, a)),
        );
        let mut vext = vec![0.0; n];
        for (k, &i) in st.habitat_nodes().iter().enumerate() {
            vext[i] = v[k];
            let bt = self.b * st.theta()[i];
            t.push((i, n + k, -bt * u[i]));
            t.push((n + k, i, -v[k]));
            t.push((n + k, n + k, self.lambda - u[i] - 2.0 * self.b * v[k]));
        }
        for i in 0..n {
            let bt = self.b * st.theta()[i];
            t.push((i, i, self.lambda - 2.0 * u[i] - bt * vext[i]));
        }
        Ok(CsrMatrix::from_triplets(n + st.m(), n + st.m(), t))
    }

    fn lambda_derivative(&self, x: &[f64]) -> Result<Vec<f64>> {
        let st = &self.stencil;
        let (u, v) = st.split(x);
        let mut out = u.to_vec();
        out.extend_from_slice(v);
        Ok(out)
    }
}

#[test]
fn shared_growth_system_has_no_coexistence_state() {
    for grid in [ring64(), rect_small()] {
        let sys = SharedGrowth {
            lambda: 1.5,
            b: 1.0,
            stencil: Stencil::new(grid).unwrap(),
        };
        let x = vec![0.7; sys.stencil.n() + sys.stencil.m()];
        let d: Vec<f64> = (0..x.len()).map(|i| (0.3 * i as f64).sin()).collect();
        assert!(verify::jacobian_fd_error(&sys, &x, &d).unwrap() < 1e-6);

        let params = ModelParams::new(1.5, 1.5, 1.0, 1.0, 0.0).unwrap();
        let mut converged = 0;
        for (u0, v0) in steady::multistart_initials(grid, &params, 50, 3) {
            let x0 = sys.stencil.stack(&u0, &v0).unwrap();
            let Ok(out) = steady::newton(&sys, x0, &NewtonConfig::default()) else {
                continue;
            };
            converged += 1;
            let (u, v) = sys.stencil.unstack(&out.x);
            let coexisting =
                u.min() > POSITIVITY_TOL && v.min() > POSITIVITY_TOL && v.max() > DISTINCT_TOL;
            assert!(!coexisting, "coexistence state with v in [{}, {}]", v.min(), v.max());
        }
        assert!(converged > 0);
    }
}

#[test]
fn transport_conserves_prey_mass_and_moves_predators_by_the_refuge_flux() {
    let grid = ring64();
    let w1 = grid.region_weights(Region::Habitat);
    let u0 = Field::from_fn(grid, Region::Domain, |x| 1.0 + 0.4 * x[0].cos());
    let v0 = Field::from_fn(grid, Region::Habitat, |x| 0.8 + 0.3 * (2.0 * x[0]).sin());
    for alpha in [0.0, 3.0] {
        let params = ModelParams::new(1.0, 1.0, 1.0, 1.0, alpha).unwrap();
        let cfg = EvolutionConfig {
            transport_only: true,
            ..Default::default()
        };
        let mut stepper = evolution::Stepper::new(grid, &params, &cfg).unwrap();
        let dt = 0.01;
        let out = stepper.step(grid, &u0, &v0, dt).unwrap();
        let mass_u = (grid.integrate(&out.u) - grid.integrate(&u0)).abs();
        assert!(mass_u < 1e-13 * grid.integrate(&u0), "prey mass moved by {mass_u}");
        let dv = refugia::linalg::dot(&w1, out.v.values()) - refugia::linalg::dot(&w1, v0.values());
        let flux = operators::advective_term(grid, &v0, &out.u).unwrap();
        let expected = dt * alpha * refugia::linalg::dot(&w1, flux.values());
        assert!((dv - expected).abs() < 1e-13, "alpha={alpha}: {dv} vs {expected}");
        if alpha == 0.0 {
            assert!(dv.abs() < 1e-13);
        }
    }
}

#[test]
fn predator_free_and_prey_free_data_stay_so() {
    let grid = ring64();
    let params = ModelParams::new(1.2, 0.8, 1.0, 1.0, 2.0).unwrap();
    let u0 = Field::from_fn(grid, Region::Domain, |x| 0.5 + 0.2 * x[0].sin());
    let zero_v = Field::zeros(grid, Region::Habitat);
    let (_, v) = evolution::step(grid, &params, &u0, &zero_v, 0.05).unwrap();
    assert!(v.values().iter().all(|&x| x == 0.0));
    let lambda_u = Field::from_fn(grid, Region::Domain, |_| 1.2);
    let (u, _) = evolution::step(grid, &params, &lambda_u, &zero_v, 0.05).unwrap();
    assert!(u.values().iter().all(|&x| x == 1.2));
}

#[test]
fn ell_increases_in_mu_and_decreases_in_alpha() {
    let grid = ring64();
    let by_mu: Vec<f64> = [2.0, 4.0, 8.0, 16.0]
        .iter()
        .map(|&mu| thresholds::ell(grid, mu, 1.0, 1.0, 1.0).unwrap())
        .collect();
    assert!(by_mu.windows(2).all(|w| w[1] > w[0]), "{by_mu:?}");
    let by_alpha: Vec<f64> = [1.0, 4.0, 16.0, 64.0]
        .iter()
        .map(|&a| thresholds::ell(grid, 5.0, a, 1.0, 1.0).unwrap())
        .collect();
    assert!(by_alpha.windows(2).all(|w| w[1] < w[0]), "{by_alpha:?}");
    let sd = refugia::spectra::sigma1_dirichlet(grid).unwrap();
    assert!(by_mu.iter().chain(&by_alpha).all(|&l| l > 0.0 && l < sd));
}

#[test]
fn branch_states_satisfy_the_integrated_equations() {
    let grid = ring64();
    let sigma = refugia::spectra::sigma1_curve(grid, 1.0, 2.0).unwrap();
    let params = ModelParams::new(sigma + 0.6, 2.0, 1.0, 1.0, 3.0).unwrap();
    let state = continuation::positive_solution(
        grid,
        &params,
        continuation::Crossing::Last,
        &ContinuationConfig::default(),
    )
    .unwrap();
    assert!(state.is_positive());
    let ids = steady::integral_identities(grid, &params, &state.u, &state.v).unwrap();
    assert!(ids.prey.abs() < 1e-9 && ids.predator.abs() < 1e-9, "{ids:?}");
    // Strictly positive once nontrivial, not merely nonnegative.
    assert!(state.u.min() > 1e-3 && state.v.min() > 1e-3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn verdict_matches_its_stored_curve_values(
        lambda in 0.01f64..4.0,
        mu in -4.0f64..8.0,
        alpha in prop_oneof![Just(0.0), 0.05f64..50.0],
    ) {
        let v = thresholds::classify(ring64(), lambda, mu, alpha, 1.0, 1.0).unwrap();
        prop_assert_eq!(v.verdict, v.recompute());
        if v.verdict == Verdict::NonexistenceByPredatorBound {
            prop_assert!(mu < 0.0);
        }
    }

    #[test]
    fn coupled_jacobian_matches_differences(
        lambda in 0.1f64..3.0,
        mu in -2.0f64..4.0,
        alpha in 0.0f64..20.0,
        seed in 0u64..1000,
    ) {
        let grid = ring64();
        let sys = steady::Sp2::new(grid, ModelParams::new(lambda, mu, 1.0, 1.0, alpha).unwrap()).unwrap();
        let n = sys.stencil().n() + sys.stencil().m();
        let phase = seed as f64 * 0.01;
        let x: Vec<f64> = (0..n).map(|i| 0.6 + 0.3 * (0.11 * i as f64 + phase).sin()).collect();
        let d: Vec<f64> = (0..n).map(|i| (0.37 * i as f64 - phase).cos()).collect();
        prop_assert!(verify::jacobian_fd_error(&sys, &x, &d).unwrap() < 1e-6);
    }

    #[test]
    fn cutoff_is_identity_on_nonnegatives(s in 0.0f64..100.0, delta in 0.01f64..10.0) {
        prop_assert_eq!(evolution::cutoff(s, delta), s);
    }
}
