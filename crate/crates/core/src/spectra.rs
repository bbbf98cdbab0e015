//! Principal eigenpairs of `-Δ + q` and the tangent fields built from them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Field, Grid, Region};
use crate::model::ModelParams;
use crate::operators::{self, Operator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    Neumann,
    Dirichlet,
}

#[derive(Debug, Clone)]
pub struct EigenResult {
    pub value: f64,
    /// Positive eigenfunction with unit weighted L² norm.
    pub eigenfunction: Field,
    /// `‖(-Δ + q - σ)φ‖∞ / (‖φ‖∞ · max(1, |σ|, ‖q‖∞))`.
    pub residual: f64,
    pub iterations: usize,
}

const WARMUP_TOL: f64 = 1e-6;
const FINAL_TOL: f64 = 1e-12;
const MAX_WARMUP: usize = 2000;
const MAX_POLISH: usize = 8;

struct Pair {
    value: f64,
    vector: Vec<f64>,
    residual: f64,
}

fn normalize(w: &[f64], x: &mut [f64]) {
    let norm = x.iter().zip(w).map(|(x, w)| w * x * x).sum::<f64>().sqrt();
    let sign = if x.iter().zip(w).map(|(x, w)| w * x).sum::<f64>() < 0.0 {
        -1.0
    } else {
        1.0
    };
    for xi in x.iter_mut() {
        *xi *= sign / norm;
    }
}

fn evaluate(op: &Operator, q: &[f64], x: Vec<f64>) -> Pair {
    let w = op.weights();
    let lx = op.apply_values(&x);
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..x.len() {
        num += w[i] * x[i] * (q[i] * x[i] - lx[i]);
        den += w[i] * x[i] * x[i];
    }
    let value = num / den;
    let qmax = q.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = 1f64.max(value.abs()).max(qmax) * crate::linalg::norm_inf(&x);
    let residual = (0..x.len())
        .map(|i| (q[i] * x[i] - lx[i] - value * x[i]).abs())
        .fold(0.0, f64::max)
        / scale;
    Pair {
        value,
        vector: x,
        residual,
    }
}

/// Smallest eigenvalue of `-L + diag(q)` for a weighted-symmetric `L`.
///
/// Inverse iteration with a shift strictly below the spectrum converges to the
/// principal pair from any positive start; a few Rayleigh-quotient steps then
/// polish it to round-off.
pub fn principal_pair(op: &Operator, q: &[f64]) -> Result<EigenResult> {
    let w = op.weights();
    let n = op.len();
    let shift = q.iter().cloned().fold(f64::INFINITY, f64::min) - 1.0;
    let shifted: Vec<f64> = q.iter().map(|v| v - shift).collect();
    let solver = op.factor_with_potential(&shifted)?;
    let mut x = vec![1.0; n];
    normalize(w, &mut x);
    let mut pair = evaluate(op, q, x);
    let mut iterations = 0;
    while iterations < MAX_WARMUP && pair.residual > WARMUP_TOL {
        let mut y = solver.solve_values(&pair.vector)?;
        normalize(w, &mut y);
        pair = evaluate(op, q, y);
        iterations += 1;
    }
    if pair.residual > WARMUP_TOL {
        return Err(Error::NoConvergence {
            iterations,
            residual: pair.residual,
        });
    }
    let warm_value = pair.value;
    for _ in 0..MAX_POLISH {
        if pair.residual <= FINAL_TOL {
            break;
        }
        // Offset the shift so the factorization never meets an exactly singular matrix.
        let shift = pair.value - 1e-10 * (1.0 + pair.value.abs());
        let q_rq: Vec<f64> = q.iter().map(|v| v - shift).collect();
        let Ok(rq) = op.factor_with_potential(&q_rq) else {
            break;
        };
        let Ok(mut y) = rq.solve_values(&pair.vector) else {
            break;
        };
        normalize(w, &mut y);
        let next = evaluate(op, q, y);
        iterations += 1;
        let drifted = next.value > warm_value + 1e-4 * (1.0 + warm_value.abs());
        if drifted || !next.residual.is_finite() || next.residual >= pair.residual {
            break;
        }
        pair = next;
    }
    if pair.residual > 1e-9 {
        return Err(Error::NoConvergence {
            iterations,
            residual: pair.residual,
        });
    }
    Ok(EigenResult {
        value: pair.value,
        eigenfunction: Field::from_values(op.region(), pair.vector),
        residual: pair.residual,
        iterations,
    })
}

/// Principal eigenpair of `-Δ + q` on `region`.
pub fn principal_eigen(grid: &Grid, region: Region, q: &Field, bc: Boundary) -> Result<EigenResult> {
    q.expect_region(region)?;
    let op = match bc {
        Boundary::Neumann => operators::neumann_laplacian(grid, region)?,
        Boundary::Dirichlet => {
            if region != Region::Refuge {
                return Err(Error::BadParameter(
                    "Dirichlet conditions are only provided on the refuge".into(),
                ));
            }
            operators::dirichlet_laplacian_refuge(grid)?
        }
    };
    principal_pair(&op, q.values())
}

fn well_potential(grid: &Grid, depth: f64) -> Field {
    grid.habitat_indicator().scale(depth)
}

/// `σ₁(bμ 1_{Ω₁})` with Neumann conditions on the whole domain.
pub fn sigma1_curve(grid: &Grid, b: f64, mu: f64) -> Result<f64> {
    Ok(principal_eigen(grid, Region::Domain, &well_potential(grid, b * mu), Boundary::Neumann)?.value)
}

/// Principal Dirichlet eigenvalue of the refuge, computed once per grid.
pub fn sigma1_dirichlet(grid: &Grid) -> Result<f64> {
    if let Some(v) = grid.dirichlet_cache.get() {
        return Ok(*v);
    }
    let q = Field::zeros(grid, Region::Refuge);
    let value = principal_eigen(grid, Region::Refuge, &q, Boundary::Dirichlet)?.value;
    Ok(*grid.dirichlet_cache.get_or_init(|| value))
}

/// Principal eigenpair of `-Δ + bμ 1_{Ω₁}` on the domain, normalized in L².
pub fn phi_star(grid: &Grid, b: f64, mu: f64) -> Result<EigenResult> {
    principal_eigen(grid, Region::Domain, &well_potential(grid, b * mu), Boundary::Neumann)
}

/// Solves `(-Δ + μ) ψ = μ[α(σ₁ - bμ) + c] φ*` on the habitat.
pub fn psi_star(grid: &Grid, params: &ModelParams, phi_star: &Field, sigma1: f64) -> Result<Field> {
    let (psi_c, psi_alpha) = psi_star_parts(grid, params, phi_star, sigma1)?;
    psi_c.add(&psi_alpha.scale(params.alpha))
}

/// The two α-independent pieces of ψ*, so that `ψ* = ψ_c + α ψ_α`.
pub fn psi_star_parts(
    grid: &Grid,
    params: &ModelParams,
    phi_star: &Field,
    sigma1: f64,
) -> Result<(Field, Field)> {
    phi_star.expect_region(Region::Domain)?;
    let mu = params.mu;
    if !(mu > 0.0) {
        return Err(Error::BadParameter(format!("ψ* needs mu > 0, got {mu}")));
    }
    let solver = operators::neumann_laplacian(grid, Region::Habitat)?.factor_shifted(mu)?;
    let phi1 = phi_star.restrict(grid, Region::Habitat)?;
    let psi_c = solver.solve(&phi1.scale(mu * params.c))?;
    // On refuge boundary nodes the well depth is the habitat share of bμ.
    let theta = grid.habitat_indicator().restrict(grid, Region::Habitat)?;
    let depth = theta.map(|t| mu * (sigma1 - params.b * mu * t));
    let psi_alpha = solver.solve(&phi1.mul(&depth)?)?;
    Ok((psi_c, psi_alpha))
}

/// Solves `(-Δ + λ) φ = -bλ 1_{Ω₁}` on the domain.
pub fn phi_lower_star(grid: &Grid, b: f64, lambda: f64) -> Result<Field> {
    if !(lambda > 0.0) {
        return Err(Error::BadParameter(format!("lambda must be positive, got {lambda}")));
    }
    let rhs = grid.habitat_indicator().scale(-b * lambda);
    operators::shifted_inverse(grid, Region::Domain, lambda, &rhs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::DomainSpec;
    use nalgebra::{DMatrix, SymmetricEigen};

    fn ring(n: usize) -> Grid {
        Grid::build(&DomainSpec::ring(n)).unwrap()
    }

    /// Smallest eigenvalue of the weighted-symmetric pencil by dense solve.
    fn dense_smallest(op: &Operator, q: &[f64]) -> f64 {
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

    #[test]
    fn zero_potential_gives_zero_and_constant() {
        let g = ring(64);
        let r = principal_eigen(&g, Region::Domain, &Field::zeros(&g, Region::Domain), Boundary::Neumann).unwrap();
        assert!(r.value.abs() < 1e-12);
        let c = (2.0 * std::f64::consts::PI).powf(-0.5);
        assert!(r.eigenfunction.values().iter().all(|v| (v - c).abs() < 1e-10));
        let r = principal_eigen(&g, Region::Domain, &Field::constant(&g, Region::Domain, 3.5), Boundary::Neumann)
            .unwrap();
        assert!((r.value - 3.5).abs() < 1e-12);
    }

    #[test]
    fn well_eigenvalue_matches_dense() {
        let g = ring(64);
        let q = well_potential(&g, 2.0);
        let r = principal_eigen(&g, Region::Domain, &q, Boundary::Neumann).unwrap();
        let op = operators::neumann_laplacian(&g, Region::Domain).unwrap();
        let dense = dense_smallest(&op, q.values());
        assert!((r.value - dense).abs() < 1e-10, "{} vs {dense}", r.value);
        assert!(r.value > 0.0 && r.value < 2.0);
        assert!(r.residual <= 1e-9);
        assert!(r.eigenfunction.min() > 0.0);
    }

    #[test]
    fn dirichlet_values_match_the_discrete_closed_form() {
        // Uniform interior nodes with zero ends: (4/h²) sin²(πh / 2L) per axis.
        let g = ring(256);
        let h = std::f64::consts::PI / 128.0;
        let exact = 4.0 / (h * h) * (h / 2.0).sin().powi(2);
        assert!((sigma1_dirichlet(&g).unwrap() - exact).abs() < 1e-10);
        let g = Grid::build(&DomainSpec::rect_fixture()).unwrap();
        let DomainSpec::RectWithHole { .. } = g.spec() else { unreachable!() };
        let interior = g.nodes(Region::Refuge);
        let xs: std::collections::BTreeSet<i64> =
            interior.iter().map(|&i| (g.coords()[i][0] * 1e9).round() as i64).collect();
        let ys: std::collections::BTreeSet<i64> =
            interior.iter().map(|&i| (g.coords()[i][1] * 1e9).round() as i64).collect();
        let (hx, hy) = (0.4 / (xs.len() + 1) as f64, 0.2 / (ys.len() + 1) as f64);
        let exact = 4.0 / (hx * hx) * (std::f64::consts::PI * hx / 0.8).sin().powi(2)
            + 4.0 / (hy * hy) * (std::f64::consts::PI * hy / 0.4).sin().powi(2);
        let got = sigma1_dirichlet(&g).unwrap();
        assert!((got - exact).abs() < 1e-9 * exact, "{got} vs {exact}");
    }

    #[test]
    fn dirichlet_ring_converges_at_second_order() {
        let e1 = (sigma1_dirichlet(&ring(256)).unwrap() - 1.0).abs();
        let e2 = (sigma1_dirichlet(&ring(512)).unwrap() - 1.0).abs();
        assert!(e1 < 1e-3, "{e1}");
        let ratio = e1 / e2;
        assert!((ratio - 4.0).abs() < 0.3, "{ratio}");
    }

    #[test]
    fn sigma1_is_increasing_and_saturates() {
        let g = ring(128);
        let mut last = -1.0;
        for mu in [0.0, 0.1, 0.5, 1.0, 3.0, 10.0, 100.0] {
            let s = sigma1_curve(&g, 1.0, mu).unwrap();
            assert!(s > last);
            assert!(mu == 0.0 || s < mu);
            last = s;
        }
        let big = sigma1_curve(&g, 1.0, 1e6).unwrap();
        let d = sigma1_dirichlet(&g).unwrap();
        assert!((big - d).abs() / d < 0.02, "{big} vs {d}");
    }

    #[test]
    fn phi_star_prefers_the_refuge() {
        let g = ring(256);
        let r = phi_star(&g, 1.0, 2.0).unwrap();
        assert!((g.l2_norm(&r.eigenfunction) - 1.0).abs() < 1e-12);
        let refuge = r.eigenfunction.restrict(&g, Region::Refuge).unwrap();
        let habitat = r.eigenfunction.restrict(&g, Region::Habitat).unwrap();
        assert!(g.mean(&refuge) > g.mean(&habitat));
        let flat = phi_star(&g, 0.0, 2.0).unwrap();
        let c = (2.0 * std::f64::consts::PI).powf(-0.5);
        assert!(flat.eigenfunction.values().iter().all(|v| (v - c).abs() < 1e-10));
    }

    #[test]
    fn psi_star_monotone_in_alpha() {
        let g = ring(128);
        let eig = phi_star(&g, 1.0, 2.0).unwrap();
        let p = ModelParams::new(3.0, 2.0, 1.0, 1.0, 0.0).unwrap();
        let psi0 = psi_star(&g, &p, &eig.eigenfunction, eig.value).unwrap();
        assert!(psi0.min() > 0.0);
        let psi1 = psi_star(&g, &p.with_alpha(1.0), &eig.eigenfunction, eig.value).unwrap();
        let psi10 = psi_star(&g, &p.with_alpha(10.0), &eig.eigenfunction, eig.value).unwrap();
        for i in 0..psi0.len() {
            assert!(psi1.values()[i] < psi0.values()[i]);
            assert!(psi10.values()[i] < psi1.values()[i]);
        }
        // Linear decay to -∞: min ψ*(α)/α tends to the minimum of the α-slope.
        let (_, slope) = psi_star_parts(&g, &p, &eig.eigenfunction, eig.value).unwrap();
        assert!(slope.max() < 0.0);
        let far = psi_star(&g, &p.with_alpha(1e4), &eig.eigenfunction, eig.value).unwrap();
        assert!((far.min() / 1e4 - slope.min()).abs() < 1e-3 * slope.min().abs());
    }

    #[test]
    fn phi_lower_star_mass_identity() {
        let g = ring(256);
        let (_, _, habitat) = g.measures();
        let phi = phi_lower_star(&g, 1.3, 0.8).unwrap();
        assert!(phi.max() < 0.0);
        let l1 = g.integrate(&phi.map(f64::abs));
        assert!((l1 - 1.3 * habitat).abs() < 1e-10 * l1);
        let l1_habitat = g.integrate(&phi.restrict(&g, Region::Habitat).unwrap().map(f64::abs));
        assert!(l1_habitat < 1.3 * habitat);
        assert_eq!(phi_lower_star(&g, 0.0, 0.8).unwrap().norm_inf(), 0.0);
    }
}
