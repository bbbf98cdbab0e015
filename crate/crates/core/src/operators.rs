//! Finite-volume diffusion operators.
//!
//! Every operator `L` here has the form `L = -W⁻¹K` where `W` is the diagonal
//! of dual-cell volumes and `K` a symmetric, positive semidefinite flux
//! matrix, so `L` is self-adjoint in the weighted inner product and Neumann
//! versions have zero row sums.

use crate::error::{Error, Result};
use crate::geometry::{Field, Grid, Link, Region};
use crate::linalg::{BandedLu, CsrMatrix};

#[derive(Debug, Clone)]
pub struct Operator {
    region: Region,
    stiffness: CsrMatrix,
    /// Diagonal contributions from links to zero boundary values.
    boundary: Vec<f64>,
    weights: Vec<f64>,
    order: Vec<usize>,
}

impl Operator {
    /// Sum `coef(link)` couplings over links whose face piece lies on `side`
    /// (all links when `side` is the whole domain). Links leaving the region
    /// add `coef` to the diagonal when `dirichlet` is set and are dropped
    /// otherwise.
    fn assemble(
        grid: &Grid,
        region: Region,
        side: Region,
        dirichlet: bool,
        coef: impl Fn(&Link) -> f64,
    ) -> Self {
        let n = grid.region_len(region);
        let mut t = Vec::with_capacity(4 * grid.links().len());
        let mut boundary = vec![0.0; n];
        for l in grid.links() {
            if side != Region::Domain && l.side != side {
                continue;
            }
            let c = coef(l);
            match (grid.local_index(region, l.a), grid.local_index(region, l.b)) {
                (Some(i), Some(j)) => {
                    t.push((i, i, c));
                    t.push((j, j, c));
                    t.push((i, j, -c));
                    t.push((j, i, -c));
                }
                (Some(i), None) | (None, Some(i)) if dirichlet => {
                    t.push((i, i, c));
                    boundary[i] += c;
                }
                _ => {}
            }
        }
        Operator {
            region,
            stiffness: CsrMatrix::from_triplets(n, n, t),
            boundary,
            weights: grid.region_weights(region),
            order: grid.band_order(region),
        }
    }

    pub fn region(&self) -> Region {
        self.region
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// The symmetric flux matrix `K` with `L = -W⁻¹K`.
    pub fn stiffness(&self) -> &CsrMatrix {
        &self.stiffness
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Node ordering with small bandwidth for this operator.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// The operator itself as a matrix, `-W⁻¹K`.
    pub fn matrix(&self) -> CsrMatrix {
        let s: Vec<f64> = self.weights.iter().map(|w| -1.0 / w).collect();
        self.stiffness.scale_rows(&s)
    }

    /// Evaluated in flux form, `(Kx)ᵢ = dᵢxᵢ + Σⱼ Kᵢⱼ(xⱼ - xᵢ)`, so constants
    /// are mapped to exactly zero by the Neumann operators.
    pub fn apply_values(&self, x: &[f64]) -> Vec<f64> {
        (0..x.len())
            .map(|i| {
                let flux: f64 = self
                    .stiffness
                    .row(i)
                    .filter(|&(j, _)| j != i)
                    .map(|(j, k)| k * (x[j] - x[i]))
                    .sum();
                -(flux + self.boundary[i] * x[i]) / self.weights[i]
            })
            .collect()
    }

    pub fn apply(&self, f: &Field) -> Result<Field> {
        f.expect_region(self.region)?;
        Ok(Field::from_values(self.region, self.apply_values(f.values())))
    }

    /// Factor `-L + diag(q)` for repeated solves.
    pub fn factor_with_potential(&self, q: &[f64]) -> Result<ShiftedSolver> {
        let d: Vec<f64> = q.iter().zip(&self.weights).map(|(q, w)| q * w).collect();
        let lu = BandedLu::factor(&self.stiffness.add_diagonal(&d), &self.order)?;
        Ok(ShiftedSolver {
            region: self.region,
            lu,
            weights: self.weights.clone(),
        })
    }

    pub fn factor_shifted(&self, m: f64) -> Result<ShiftedSolver> {
        self.factor_with_potential(&vec![m; self.len()])
    }
}

/// A factorization of `-L + diag(q)`.
#[derive(Debug, Clone)]
pub struct ShiftedSolver {
    region: Region,
    lu: BandedLu,
    weights: Vec<f64>,
}

impl ShiftedSolver {
    /// Solve `(-L + q) x = f`.
    pub fn solve_values(&self, f: &[f64]) -> Result<Vec<f64>> {
        let rhs: Vec<f64> = f.iter().zip(&self.weights).map(|(f, w)| f * w).collect();
        self.lu.solve(&rhs)
    }

    pub fn solve(&self, f: &Field) -> Result<Field> {
        f.expect_region(self.region)?;
        Ok(Field::from_values(self.region, self.solve_values(f.values())?))
    }

    pub fn det_sign(&self) -> f64 {
        self.lu.det_sign()
    }
}

/// Laplacian with zero-flux conditions on the region boundary. On the
/// habitat only face pieces outside the refuge carry flux, so the refuge
/// boundary acts as a wall.
pub fn neumann_laplacian(grid: &Grid, region: Region) -> Result<Operator> {
    if grid.region_len(region) == 0 {
        return Err(match region {
            Region::Refuge => Error::EmptyRefuge,
            _ => Error::BadParameter(format!("{region:?} has no nodes")),
        });
    }
    Ok(Operator::assemble(grid, region, region, false, |l| l.coef))
}

/// Laplacian on the refuge interior with zero values on the refuge boundary
/// nodes.
pub fn dirichlet_laplacian_refuge(grid: &Grid) -> Result<Operator> {
    if grid.region_len(Region::Refuge) == 0 {
        return Err(Error::EmptyRefuge);
    }
    Ok(Operator::assemble(grid, Region::Refuge, Region::Refuge, true, |l| l.coef))
}

/// `∇·(a∇·)` on the habitat with zero-flux walls. Face coefficients are the
/// arithmetic mean of the two nodal values.
pub fn divergence_form(grid: &Grid, a: &Field) -> Result<Operator> {
    a.expect_region(Region::Habitat)?;
    let min = a.min();
    if !(min > 0.0) {
        return Err(Error::NonellipticCoefficient { min });
    }
    Ok(divergence_form_unchecked(grid, a.values()))
}

pub(crate) fn divergence_form_unchecked(grid: &Grid, a: &[f64]) -> Operator {
    let at = |node| a[grid.local_index(Region::Habitat, node).unwrap()];
    Operator::assemble(grid, Region::Habitat, Region::Habitat, false, |l| {
        0.5 * (at(l.a) + at(l.b)) * l.coef
    })
}

/// `-∇·(v∇u)` on the habitat.
///
/// Evaluated as `-vΔu - ½W⁻¹Σ T (v_j - v_i)(u_j - u_i)` with the full-domain
/// Laplacian of `u`, which is the flux form with face value `(v_i + v_j)/2`
/// away from the refuge and, on refuge boundary nodes, lets the prey flux
/// through the refuge side of the dual cell act on the local predator density.
/// This makes `∇·(u∇v) - ∇·(v∇u) = uΔv - vΔu` hold exactly at the discrete
/// level. The result does not integrate to zero: its integral is the flux
/// `-∫ v ∂ₙu` through the refuge boundary.
pub fn advective_term(grid: &Grid, v: &Field, u: &Field) -> Result<Field> {
    v.expect_region(Region::Habitat)?;
    u.expect_region(Region::Domain)?;
    let lap_u = neumann_laplacian(grid, Region::Domain)?.apply_values(u.values());
    let weights = grid.region_weights(Region::Habitat);
    let uv = u.values();
    let vv = v.values();
    let mut cross = vec![0.0; v.len()];
    for l in grid.links().iter().filter(|l| l.side == Region::Habitat) {
        let i = grid.local_index(Region::Habitat, l.a).unwrap();
        let j = grid.local_index(Region::Habitat, l.b).unwrap();
        let c = 0.5 * l.coef * (vv[j] - vv[i]) * (uv[l.b] - uv[l.a]);
        cross[i] += c;
        cross[j] += c;
    }
    let out = grid
        .nodes(Region::Habitat)
        .iter()
        .enumerate()
        .map(|(k, &node)| -vv[k] * lap_u[node] - cross[k] / weights[k])
        .collect();
    Ok(Field::from_values(Region::Habitat, out))
}

/// Solve `(-Δ + m) x = rhs` with Neumann conditions on `region`.
pub fn shifted_inverse(grid: &Grid, region: Region, m: f64, rhs: &Field) -> Result<Field> {
    if !(m > 0.0) {
        return Err(Error::BadParameter(format!("shift must be positive, got {m}")));
    }
    rhs.expect_region(region)?;
    neumann_laplacian(grid, region)?.factor_shifted(m)?.solve(rhs)
}

/// Zero-mean solution of `-Δ x = rhs - mean(rhs)` with Neumann conditions.
pub fn mean_zero_inverse(grid: &Grid, region: Region, rhs: &Field) -> Result<Field> {
    rhs.expect_region(region)?;
    let op = neumann_laplacian(grid, region)?;
    let w = op.weights();
    let total: f64 = w.iter().sum();
    let mean = rhs.values().iter().zip(w).map(|(f, w)| f * w).sum::<f64>() / total;
    let mut b: Vec<f64> = rhs.values().iter().zip(w).map(|(f, w)| (f - mean) * w).collect();
    // Pin the first node; the dropped equation is implied by the others.
    let pin = 0;
    let mut t: Vec<_> = op
        .stiffness()
        .triplets()
        .into_iter()
        .filter(|&(r, _, _)| r != pin)
        .collect();
    t.push((pin, pin, 1.0));
    b[pin] = 0.0;
    let n = op.len();
    let lu = BandedLu::factor(&CsrMatrix::from_triplets(n, n, t), op.order())?;
    let mut x = lu.solve(&b)?;
    let xmean = x.iter().zip(w).map(|(x, w)| x * w).sum::<f64>() / total;
    for xi in &mut x {
        *xi -= xmean;
    }
    Ok(Field::from_values(region, x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::DomainSpec;

    fn ring(n: usize) -> Grid {
        Grid::build(&DomainSpec::ring(n)).unwrap()
    }

    #[test]
    fn constants_are_in_the_kernel() {
        for g in [ring(64), Grid::build(&DomainSpec::rect(32, 16)).unwrap()] {
            for region in [Region::Domain, Region::Habitat, Region::Refuge] {
                let op = neumann_laplacian(&g, region).unwrap();
                let y = op.apply(&Field::constant(&g, region, 3.0)).unwrap();
                assert!(y.norm_inf() < 1e-10, "{region:?}: {}", y.norm_inf());
            }
        }
    }

    #[test]
    fn ring_cosine_is_an_eigenfunction() {
        let mut errors = Vec::new();
        for n in [128, 256] {
            let g = ring(n);
            let op = neumann_laplacian(&g, Region::Domain).unwrap();
            let f = Field::from_fn(&g, Region::Domain, |x| x[0].cos());
            let lf = op.apply(&f).unwrap();
            errors.push(lf.add(&f).unwrap().norm_inf());
        }
        assert!(errors[1] < 1e-4, "{errors:?}");
        assert!(errors[0] / errors[1] > 3.5, "{errors:?}");
    }

    #[test]
    fn operators_are_weighted_symmetric() {
        let g = Grid::build(&DomainSpec::rect(20, 16)).unwrap();
        let f = Field::from_fn(&g, Region::Domain, |x| (3.0 * x[0]).sin() + x[1]);
        let h = Field::from_fn(&g, Region::Domain, |x| x[0] * x[0] - (2.0 * x[1]).cos());
        let op = neumann_laplacian(&g, Region::Domain).unwrap();
        let a = g.inner(&op.apply(&f).unwrap(), &h).unwrap();
        let b = g.inner(&f, &op.apply(&h).unwrap()).unwrap();
        assert!((a - b).abs() < 1e-10 * a.abs().max(1.0));
        assert!(g.integrate(&op.apply(&f).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn divergence_form_reduces_to_laplacian() {
        let g = ring(64);
        let one = Field::constant(&g, Region::Habitat, 1.0);
        let two = Field::constant(&g, Region::Habitat, 2.0);
        let lap = neumann_laplacian(&g, Region::Habitat).unwrap().matrix().to_dense();
        let d1 = divergence_form(&g, &one).unwrap().matrix().to_dense();
        let d2 = divergence_form(&g, &two).unwrap().matrix().to_dense();
        assert!((&lap - &d1).abs().max() < 1e-12);
        assert!((&d2 - &d1 * 2.0).abs().max() < 1e-12);
        let bad = Field::constant(&g, Region::Habitat, 0.0);
        assert!(matches!(divergence_form(&g, &bad), Err(Error::NonellipticCoefficient { .. })));
    }

    #[test]
    fn divergence_form_manufactured_solution() {
        // Habitat is the arc [π, 2π]; v = cos x has zero flux at both walls.
        // Interior nodes converge at second order, the two wall nodes (half
        // cells) at first order.
        let mut interior = Vec::new();
        let mut walls = Vec::new();
        for n in [128, 256, 512] {
            let g = ring(n);
            let a = Field::from_fn(&g, Region::Habitat, |x| 2.0 + x[0].sin());
            let v = Field::from_fn(&g, Region::Habitat, |x| x[0].cos());
            let exact = Field::from_fn(&g, Region::Habitat, |x| {
                let (s, c) = x[0].sin_cos();
                c * (-s) - (2.0 + s) * c
            });
            let err = divergence_form(&g, &a).unwrap().apply(&v).unwrap().sub(&exact).unwrap();
            let (mut e_in, mut e_wall) = (0.0f64, 0.0f64);
            for (k, &node) in g.nodes(Region::Habitat).iter().enumerate() {
                if g.interface().contains(&node) {
                    e_wall = e_wall.max(err.values()[k].abs());
                } else {
                    e_in = e_in.max(err.values()[k].abs());
                }
            }
            interior.push(e_in);
            walls.push(e_wall);
        }
        assert!(interior[2] < 1e-4, "{interior:?}");
        assert!(interior[0] / interior[1] > 3.5 && interior[1] / interior[2] > 3.5, "{interior:?}");
        assert!(walls[0] / walls[1] > 1.8 && walls[1] / walls[2] > 1.8, "{walls:?}");
    }

    #[test]
    fn advective_identity_is_exact() {
        let g = Grid::build(&DomainSpec::rect(24, 16)).unwrap();
        let u = Field::from_fn(&g, Region::Domain, |x| 1.0 + 0.5 * (2.0 * x[0]).sin() * x[1]);
        let v = Field::from_fn(&g, Region::Habitat, |x| 2.0 + x[0] * x[1]);
        let lhs = divergence_form(&g, &u.restrict(&g, Region::Habitat).unwrap())
            .unwrap()
            .apply(&v)
            .unwrap()
            .add(&advective_term(&g, &v, &u).unwrap())
            .unwrap();
        let lap_v = neumann_laplacian(&g, Region::Habitat).unwrap().apply(&v).unwrap();
        let lap_u = neumann_laplacian(&g, Region::Domain)
            .unwrap()
            .apply(&u)
            .unwrap()
            .restrict(&g, Region::Habitat)
            .unwrap();
        let uh = u.restrict(&g, Region::Habitat).unwrap();
        let rhs = uh.mul(&lap_v).unwrap().sub(&v.mul(&lap_u).unwrap()).unwrap();
        assert!(lhs.dist_inf(&rhs).unwrap() < 1e-9 * rhs.norm_inf().max(1.0));
    }

    #[test]
    fn advective_term_integral_is_the_boundary_flux() {
        // Σ w¹(-vΔu) - Σ_links T Δv Δu, evaluated independently.
        let g = Grid::build(&DomainSpec::rect(20, 16)).unwrap();
        let u = Field::from_fn(&g, Region::Domain, |x| (2.0 * x[0]).cos() + x[1] * x[1]);
        let v = Field::from_fn(&g, Region::Habitat, |x| 1.5 + x[0].sin() * x[1]);
        let adv = advective_term(&g, &v, &u).unwrap();
        let lap_u = neumann_laplacian(&g, Region::Domain).unwrap().apply(&u).unwrap();
        let ve = v.extend_by_zero(&g);
        let mut expected = 0.0;
        for (i, (w, theta)) in g.weights().iter().zip(g.habitat_fraction()).enumerate() {
            expected -= w * theta * ve.values()[i] * lap_u.values()[i];
        }
        for l in g.links().iter().filter(|l| l.side == Region::Habitat) {
            expected -= l.coef * (ve.values()[l.b] - ve.values()[l.a]) * (u.values()[l.b] - u.values()[l.a]);
        }
        assert!((g.integrate(&adv) - expected).abs() < 1e-10 * expected.abs().max(1.0));
        assert!(g.integrate(&adv).abs() > 1e-3);
        let flat = Field::constant(&g, Region::Domain, 0.7);
        assert!(advective_term(&g, &v, &flat).unwrap().norm_inf() < 1e-12);
    }

    #[test]
    fn advective_term_is_conservative_away_from_the_refuge() {
        // u constant near the refuge: no flux through its boundary.
        let g = ring(128);
        let u = Field::from_fn(&g, Region::Domain, |x| {
            let s = (x[0] - 1.5 * std::f64::consts::PI).abs();
            if s < 1.0 { (1.0 - s * s).powi(3) } else { 0.0 }
        });
        let v = Field::from_fn(&g, Region::Habitat, |x| 2.0 + x[0].cos());
        let adv = advective_term(&g, &v, &u).unwrap();
        assert!(g.integrate(&adv).abs() < 1e-12);
    }

    #[test]
    fn shifted_inverse_round_trip() {
        let g = ring(64);
        let m = 0.7;
        let ones = Field::constant(&g, Region::Domain, m);
        let x = shifted_inverse(&g, Region::Domain, m, &ones).unwrap();
        assert!(x.values().iter().all(|v| (v - 1.0).abs() < 1e-12));
        let f = Field::from_fn(&g, Region::Habitat, |x| x[0].sin() + 2.0);
        let op = neumann_laplacian(&g, Region::Habitat).unwrap();
        let sol = shifted_inverse(&g, Region::Habitat, m, &f).unwrap();
        let back = op.apply(&sol).unwrap().scale(-1.0).add(&sol.scale(m)).unwrap();
        assert!(back.dist_inf(&f).unwrap() < 1e-10);
    }

    #[test]
    fn mean_zero_inverse_of_cosine() {
        let g = ring(256);
        let f = Field::from_fn(&g, Region::Domain, |x| x[0].cos());
        let x = mean_zero_inverse(&g, Region::Domain, &f).unwrap();
        assert!(x.dist_inf(&f).unwrap() < 1e-4);
        assert!(g.integrate(&x).abs() < 1e-12);
        let zero = mean_zero_inverse(&g, Region::Domain, &Field::zeros(&g, Region::Domain)).unwrap();
        assert_eq!(zero.norm_inf(), 0.0);
    }

    #[test]
    fn dirichlet_refuge_is_positive_definite() {
        let g = ring(64);
        let op = dirichlet_laplacian_refuge(&g).unwrap();
        let k = op.stiffness().to_dense();
        let eig = nalgebra::SymmetricEigen::new(k);
        assert!(eig.eigenvalues.min() > 0.0);
    }
}
