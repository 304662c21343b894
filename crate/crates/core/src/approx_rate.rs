//! Very-noisy approximation of the crossover rate.
//!
//! Two routes: a rational closed form in `(ρ_e², ρ_e'²)`, and the ratio of
//! the squared mutual-information gap to the variance of the information
//! densities, evaluated with the Gaussian fourth-moment identity.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact_rate::CrossoverProblem;
use crate::model::mutual_information;

/// Threshold below which the monotonicity properties of the approximate rate hold.
pub const RHO_CRIT: f64 = 0.63055;

pub fn rho_crit() -> f64 {
    RHO_CRIT
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApproxRateInputs {
    pub rho_e: f64,
    pub rho_ep: f64,
}

impl ApproxRateInputs {
    pub fn new(rho_e: f64, rho_ep: f64) -> Result<Self> {
        for r in [rho_e, rho_ep] {
            if !(r.abs() < 1.0) {
                return Err(Error::CorrelationOutOfRange(r));
            }
        }
        Ok(ApproxRateInputs { rho_e, rho_ep })
    }
}

/// `A/B` form. Requires `|ρ_e'| ≤ |ρ_e|`, the only configuration that arises
/// for an edge on the path of a non-edge; outside it `B` is not a variance.
pub fn approx_rate_closed_form(input: ApproxRateInputs) -> Result<f64> {
    let ApproxRateInputs { rho_e, rho_ep } = ApproxRateInputs::new(input.rho_e, input.rho_ep)?;
    let (y, x) = (rho_e * rho_e, rho_ep * rho_ep);
    if x == 0.0 && y == 0.0 {
        return Err(Error::DegenerateDenominator);
    }
    if x > y {
        return Err(Error::NonDominantPair { rho_e, rho_ep });
    }
    if x == y {
        return Ok(0.0);
    }
    let gap = 0.5 * ((-x).ln_1p() - (-y).ln_1p());
    let a = gap * gap;
    let (ux, uy) = (1.0 - x, 1.0 - y);
    let b = 2.0 * (x * x + x) / (ux * ux) + 2.0 * (y * y + y) / (uy * uy) - 4.0 * x * (y + 1.0) / (ux * uy);
    if !(b > 0.0) {
        return Err(Error::DegenerateDenominator);
    }
    Ok(a / b)
}

/// Shorthand for the closed form on a dominant pair.
pub(crate) fn jtilde(rho_e: f64, rho_ep: f64) -> Result<f64> {
    approx_rate_closed_form(ApproxRateInputs { rho_e, rho_ep })
}

/// Off-diagonal entry of the inverse of the 2×2 block on `(a, b)`.
fn inverse_offdiag(sigma: &DMatrix<f64>, (a, b): (usize, usize)) -> f64 {
    let (saa, sbb, sab) = (sigma[(a, a)], sigma[(b, b)], sigma[(a, b)]);
    -sab / (saa * sbb - sab * sab)
}

/// `(I(p_e') - I(p_e))² / (4 Tr((MΣ)²))`, with `M` carrying `½[Σ_e⁻¹]_od` on
/// the edge and `-½[Σ_e'⁻¹]_od` on the non-edge.
pub fn approx_rate_snr(problem: &CrossoverProblem) -> Result<f64> {
    let sigma = problem.sigma();
    let m = problem.m();
    let (e, ep) = (problem.edge(), problem.non_edge());
    let gap = mutual_information(problem.rho_e())? - mutual_information(problem.rho_ep())?;
    if gap == 0.0 {
        return Ok(0.0);
    }
    let mut mm = DMatrix::<f64>::zeros(m, m);
    for (sign, (a, b)) in [(0.5, e), (-0.5, ep)] {
        let v = sign * inverse_offdiag(sigma, (a, b));
        mm[(a, b)] += v;
        mm[(b, a)] += v;
    }
    let ms = &mm * sigma;
    let trace = ms.component_mul(&ms.transpose()).sum();
    if !(trace > 0.0) {
        return Err(Error::DegenerateDenominator);
    }
    Ok(gap * gap / (4.0 * trace))
}
