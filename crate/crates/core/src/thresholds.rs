//! Parameter-plane curves separating existence and nonexistence of positive
//! steady states, and the direction of bifurcation off the semitrivial states.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Field, Grid, Region};
use crate::model::ModelParams;
use crate::spectra;

/// `K(λ) = λ - σ₁(b(cλ + μ)/(αbλ + 1) · 1_{Ω₁})`.
pub fn k_eval(grid: &Grid, lambda: f64, mu: f64, alpha: f64, b: f64, c: f64) -> Result<f64> {
    if lambda < 0.0 {
        return Err(Error::BadParameter(format!("lambda must be nonnegative, got {lambda}")));
    }
    let depth = b * (c * lambda + mu) / (alpha * b * lambda + 1.0);
    Ok(lambda - spectra::sigma1_curve(grid, 1.0, depth)?)
}

const ROOT_TOL: f64 = 1e-8;

/// Bisection on a bracket with `f(lo) < 0 < f(hi)`, to `tol` absolute.
pub(crate) fn bisect(
    mut lo: f64,
    mut hi: f64,
    tol: f64,
    mut f: impl FnMut(f64) -> Result<f64>,
) -> Result<f64> {
    let (flo, fhi) = (f(lo)?, f(hi)?);
    if flo.signum() == fhi.signum() {
        return Err(Error::NoSignChange { lo, hi });
    }
    let increasing = flo < 0.0;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid)?;
        if fm == 0.0 {
            return Ok(mid);
        }
        if (fm < 0.0) == increasing {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// The unique zero of `λ ↦ K(λ, μ, α)`, which exists when `μ > c/(αb)`.
pub fn ell(grid: &Grid, mu: f64, alpha: f64, b: f64, c: f64) -> Result<f64> {
    if !(alpha > 0.0) || mu <= c / (alpha * b) {
        return Err(Error::OutOfRegime(format!(
            "the zero of K needs alpha > 0 and mu > c/(alpha b); got mu = {mu}, alpha = {alpha}"
        )));
    }
    // K(0) = -σ₁(bμ1) < 0 and K(σ₁ᴰ) > 0 since every σ₁ is below σ₁ᴰ.
    let upper = spectra::sigma1_dirichlet(grid)?;
    bisect(0.0, upper, ROOT_TOL, |l| k_eval(grid, l, mu, alpha, b, c))
}

/// The nonexistence bound for `μ > 0`: `σ₁(bμ1_{Ω₁})` up to `μ = c/(αb)`
/// and `ℓ(μ, α)` beyond. For `α = 0` the first piece covers every `μ`.
pub fn ell_tilde(grid: &Grid, mu: f64, alpha: f64, b: f64, c: f64) -> Result<f64> {
    if !(mu > 0.0) {
        return Err(Error::BadParameter(format!("mu must be positive, got {mu}")));
    }
    if alpha == 0.0 || mu <= c / (alpha * b) {
        spectra::sigma1_curve(grid, b, mu)
    } else {
        ell(grid, mu, alpha, b, c)
    }
}

/// Nonexistence bound for `μ < 0`:
/// `-cλ` for `λ ≤ c/α` and `-(α/4)(λ + c/α)²` beyond.
pub fn m_curve(lambda: f64, alpha: f64, c: f64) -> f64 {
    if alpha == 0.0 || lambda <= c / alpha {
        -c * lambda
    } else {
        let t = lambda + c / alpha;
        -0.25 * alpha * t * t
    }
}

/// Data along the predator-only state needed for the bifurcation direction.
/// ψ* is affine in α, so the pieces are computed once and reused.
#[derive(Debug, Clone)]
pub struct DirectionData {
    pub sigma1: f64,
    pub phi: Field,
    pub psi_c: Field,
    pub psi_alpha: Field,
    /// `∫ φ*³` and `∫ b1_{Ω₁} ψ φ*²` for both ψ pieces.
    cubic: f64,
    cross_c: f64,
    cross_alpha: f64,
}

impl DirectionData {
    pub fn new(grid: &Grid, b: f64, c: f64, mu: f64) -> Result<Self> {
        let eig = spectra::phi_star(grid, b, mu)?;
        let params = ModelParams::new(eig.value, mu, b, c, 0.0)?;
        let (psi_c, psi_alpha) = spectra::psi_star_parts(grid, &params, &eig.eigenfunction, eig.value)?;
        let phi = eig.eigenfunction;
        let w = grid.weights();
        let theta = grid.habitat_fraction();
        let cubic = phi.values().iter().zip(w).map(|(p, w)| w * p * p * p).sum();
        let cross = |psi: &Field| {
            grid.nodes(Region::Habitat)
                .iter()
                .zip(psi.values())
                .map(|(&i, s)| w[i] * b * theta[i] * s * phi.values()[i] * phi.values()[i])
                .sum::<f64>()
        };
        let cross_c = cross(&psi_c);
        let cross_alpha = cross(&psi_alpha);
        Ok(DirectionData {
            sigma1: eig.value,
            phi,
            psi_c,
            psi_alpha,
            cubic,
            cross_c,
            cross_alpha,
        })
    }

    /// `∫_Ω (φ* + b1_{Ω₁}ψ*) φ*²` at the given α.
    pub fn lambda_prime(&self, alpha: f64) -> f64 {
        self.cubic + self.cross_c + alpha * self.cross_alpha
    }

    pub fn psi(&self, alpha: f64) -> Field {
        self.psi_c.add(&self.psi_alpha.scale(alpha)).unwrap()
    }
}

/// Slope `λ'(0)` of the branch leaving the predator-only state.
pub fn lambda_prime0_gamma_v(grid: &Grid, params: &ModelParams) -> Result<f64> {
    Ok(DirectionData::new(grid, params.b, params.c, params.mu)?.lambda_prime(params.alpha))
}

/// The α at which the branch off the predator-only state turns from
/// supercritical to subcritical.
pub fn alpha_star(grid: &Grid, mu: f64, b: f64, c: f64) -> Result<f64> {
    alpha_star_from(&DirectionData::new(grid, b, c, mu)?)
}

pub fn alpha_star_from(data: &DirectionData) -> Result<f64> {
    let f = |a: f64| Ok(data.lambda_prime(a));
    if data.lambda_prime(0.0) <= 0.0 {
        return Err(Error::NoSignChange { lo: 0.0, hi: 0.0 });
    }
    let mut lo = 0.0;
    let mut hi = 1e-3;
    while data.lambda_prime(hi) > 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > 1e9 {
            return Err(Error::NoSignChange { lo: 0.0, hi });
        }
    }
    bisect(lo, hi, 1e-12 * hi.max(1.0), f)
}

/// Slope `λ'(0)` of the branch leaving the prey-only state at `λ = |μ|/c`,
/// for `μ < 0`.
pub fn lambda_prime0_gamma_u(grid: &Grid, params: &ModelParams) -> Result<f64> {
    let mu = params.mu;
    if !(mu < 0.0) {
        return Err(Error::BadParameter(format!("mu must be negative, got {mu}")));
    }
    let c = params.c;
    let b = params.b;
    let lambda = -mu / c;
    let phi = spectra::phi_lower_star(grid, b, lambda)?;
    let w = grid.weights();
    let theta = grid.habitat_fraction();
    let mut habitat = 0.0;
    let mut habitat_sq = 0.0;
    let mut l1 = 0.0;
    for i in 0..grid.len() {
        habitat += w[i] * theta[i];
        habitat_sq += w[i] * theta[i] * theta[i];
        l1 += w[i] * theta[i] * phi.values()[i].abs();
    }
    // The α term integrates 1_{Ω₁}·1_{Ω₁}; with nodal habitat fractions this
    // differs from |Ω₁| on refuge boundary nodes only.
    Ok((c * c * l1 + c * habitat + params.alpha * mu.abs() * (b * habitat_sq - l1)) / (c * c * habitat))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// `μ > 0` and `λ ≤ ℓ̃(μ, α)`.
    NonexistenceByGrowthBound,
    /// `μ < 0` and `μ ≤ m(λ, α)`.
    NonexistenceByPredatorBound,
    ExistenceGuaranteed,
    Indeterminate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionVerdict {
    pub verdict: Verdict,
    pub lambda: f64,
    pub mu: f64,
    pub alpha: f64,
    /// `σ₁(bμ1_{Ω₁})` when `μ > 0`.
    pub sigma1: Option<f64>,
    /// `ℓ̃(μ, α)` when `μ > 0`.
    pub ell_tilde: Option<f64>,
    /// `m(λ, α)` when `μ < 0`.
    pub m: Option<f64>,
    /// `|μ|/c` when `μ < 0`.
    pub gamma_u_onset: Option<f64>,
}

impl RegionVerdict {
    /// Recompute the verdict from the stored curve values.
    pub fn recompute(&self) -> Verdict {
        if self.mu > 0.0 {
            let (lt, s) = (self.ell_tilde.unwrap(), self.sigma1.unwrap());
            if self.lambda <= lt {
                Verdict::NonexistenceByGrowthBound
            } else if self.lambda > s {
                Verdict::ExistenceGuaranteed
            } else {
                Verdict::Indeterminate
            }
        } else if self.mu < 0.0 {
            if self.mu <= self.m.unwrap() {
                Verdict::NonexistenceByPredatorBound
            } else if self.lambda > self.gamma_u_onset.unwrap() {
                Verdict::ExistenceGuaranteed
            } else {
                Verdict::Indeterminate
            }
        } else {
            Verdict::ExistenceGuaranteed
        }
    }
}

/// Classify a parameter point using the proven existence and nonexistence
/// curves.
pub fn classify(grid: &Grid, lambda: f64, mu: f64, alpha: f64, b: f64, c: f64) -> Result<RegionVerdict> {
    if !(lambda > 0.0) {
        return Err(Error::BadParameter(format!("lambda must be positive, got {lambda}")));
    }
    let mut out = RegionVerdict {
        verdict: Verdict::Indeterminate,
        lambda,
        mu,
        alpha,
        sigma1: None,
        ell_tilde: None,
        m: None,
        gamma_u_onset: None,
    };
    if mu > 0.0 {
        let s = spectra::sigma1_curve(grid, b, mu)?;
        out.sigma1 = Some(s);
        out.ell_tilde = Some(if alpha == 0.0 || mu <= c / (alpha * b) {
            s
        } else {
            ell(grid, mu, alpha, b, c)?
        });
    } else if mu < 0.0 {
        out.m = Some(m_curve(lambda, alpha, c));
        out.gamma_u_onset = Some(-mu / c);
    }
    out.verdict = out.recompute();
    Ok(out)
}
