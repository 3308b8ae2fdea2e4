//! Closed-form entropy as a function of error rate for replies that take
//! exactly `k` distinct values, one of them correct.
//!
//! With error rate `e`, correct mass `1 - e` and incorrect masses
//! `p1, .., p(k-2)` plus the residual `r = e - sum(p)`:
//!
//! ```text
//! H(e) = -(1-e) ln(1-e) - sum_j p_j ln p_j - r ln r
//! ```
//!
//! The binary case (`k = 2`) has no free masses; lower orders are the general
//! five-outcome form with trailing masses set to zero.

use serde::Serialize;

/// Probabilities at or below this magnitude are exact zeros.
pub const ZERO_TOLERANCE: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CurveError {
    #[error("curve order must be 2..=5, got {0}")]
    Order(usize),
    #[error("order {order} takes {expected} incorrect masses, got {found}")]
    MassCount {
        order: usize,
        expected: usize,
        found: usize,
    },
    #[error("incorrect mass {0} is negative or not finite")]
    BadMass(f64),
    #[error("error rate {0} outside [0, 1]")]
    ErrorRate(f64),
    #[error("incorrect masses sum to {mass_sum}, exceeding error rate {error_rate}")]
    Infeasible { error_rate: f64, mass_sum: f64 },
}

/// Order `k` (distinct replies, one correct) and the `k - 2` free incorrect
/// masses.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveParams {
    order: usize,
    incorrect_masses: Vec<f64>,
}

impl CurveParams {
    pub fn new(order: usize, incorrect_masses: Vec<f64>) -> Result<Self, CurveError> {
        if !(2..=5).contains(&order) {
            return Err(CurveError::Order(order));
        }
        if incorrect_masses.len() != order - 2 {
            return Err(CurveError::MassCount {
                order,
                expected: order - 2,
                found: incorrect_masses.len(),
            });
        }
        if let Some(&bad) = incorrect_masses.iter().find(|m| !(m.is_finite() && **m >= 0.0)) {
            return Err(CurveError::BadMass(bad));
        }
        Ok(Self {
            order,
            incorrect_masses,
        })
    }

    pub fn binary() -> Self {
        Self {
            order: 2,
            incorrect_masses: Vec::new(),
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn incorrect_masses(&self) -> &[f64] {
        &self.incorrect_masses
    }

    pub fn mass_sum(&self) -> f64 {
        self.incorrect_masses.iter().sum()
    }

    pub fn is_feasible(&self, error_rate: f64) -> bool {
        (0.0..=1.0).contains(&error_rate) && error_rate - self.mass_sum() >= -ZERO_TOLERANCE
    }
}

fn neg_xlnx(p: f64) -> f64 {
    if p <= ZERO_TOLERANCE {
        0.0
    } else {
        -p * p.ln()
    }
}

pub fn curve_entropy(error_rate: f64, params: &CurveParams) -> Result<f64, CurveError> {
    if !(0.0..=1.0).contains(&error_rate) {
        return Err(CurveError::ErrorRate(error_rate));
    }
    let mass_sum = params.mass_sum();
    let residual = error_rate - mass_sum;
    if residual < -ZERO_TOLERANCE {
        return Err(CurveError::Infeasible {
            error_rate,
            mass_sum,
        });
    }
    let mut h = neg_xlnx(1.0 - error_rate);
    for &p in &params.incorrect_masses {
        h += neg_xlnx(p);
    }
    Ok(h + neg_xlnx(residual))
}

/// Entropy of the two-reply curve (one correct, one incorrect). Returns NaN
/// outside `[0, 1]`.
pub fn binary_entropy(error_rate: f64) -> f64 {
    curve_entropy(error_rate, &CurveParams::binary()).unwrap_or(f64::NAN)
}

/// Samples the curve on `grid_size` evenly spaced error rates in `[0, 1]`,
/// skipping rates below the incorrect-mass total.
pub fn curve_grid(params: &CurveParams, grid_size: usize) -> Vec<(f64, f64)> {
    assert!(grid_size >= 2, "curve_grid needs at least two grid points");
    let last = (grid_size - 1) as f64;
    (0..grid_size)
        .map(|i| i as f64 / last)
        .filter_map(|e| curve_entropy(e, params).ok().map(|h| (e, h)))
        .collect()
}

/// Lower and upper entropy over all five-choice distributions with the given
/// error rate: all incorrect mass on one letter, or split evenly over four.
pub fn envelope_bounds(error_rate: f64) -> Result<(f64, f64), CurveError> {
    if !(0.0..=1.0).contains(&error_rate) {
        return Err(CurveError::ErrorRate(error_rate));
    }
    let lower = binary_entropy(error_rate);
    let upper = (lower + error_rate * 4f64.ln()).clamp(0.0, 5f64.ln());
    Ok((lower, upper))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    fn params(order: usize, masses: &[f64]) -> CurveParams {
        CurveParams::new(order, masses.to_vec()).unwrap()
    }

    #[test]
    fn binary_landmarks() {
        assert_eq!(curve_entropy(0.0, &CurveParams::binary()).unwrap(), 0.0);
        assert_eq!(curve_entropy(1.0, &CurveParams::binary()).unwrap(), 0.0);
        assert!((binary_entropy(0.5) - LN_2).abs() < 1e-12);
        // mpmath: -(0.75 ln 0.75 + 0.25 ln 0.25)
        assert!((binary_entropy(0.25) - 0.562335144618808_3).abs() < 1e-12);
    }

    #[test]
    fn higher_order_examples() {
        // mpmath: -(0.5 ln 0.5) - 2 (0.25 ln 0.25)
        let h = curve_entropy(0.5, &params(3, &[0.25])).unwrap();
        assert!((h - 1.039_720_770_839_917_9).abs() < 1e-12);
        let h = curve_entropy(0.8, &params(5, &[0.2, 0.2, 0.2])).unwrap();
        assert!((h - 5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(
            curve_entropy(0.2, &params(3, &[0.3])),
            Err(CurveError::Infeasible { .. })
        ));
        assert!(matches!(curve_entropy(-0.1, &CurveParams::binary()), Err(CurveError::ErrorRate(_))));
        assert!(matches!(curve_entropy(1.1, &CurveParams::binary()), Err(CurveError::ErrorRate(_))));
        assert!(matches!(CurveParams::new(3, vec![-0.1]), Err(CurveError::BadMass(_))));
        assert!(matches!(CurveParams::new(6, vec![]), Err(CurveError::Order(6))));
        assert!(matches!(
            CurveParams::new(4, vec![0.1]),
            Err(CurveError::MassCount { expected: 2, found: 1, .. })
        ));
    }

    #[test]
    fn grid_examples() {
        let g = curve_grid(&CurveParams::binary(), 11);
        assert_eq!(g.len(), 11);
        assert_eq!(g[0], (0.0, 0.0));
        assert_eq!(g[10], (1.0, 0.0));

        let g = curve_grid(&params(3, &[0.3]), 11);
        assert_eq!(g.len(), 8);
        assert!(g.iter().all(|&(e, _)| e >= 0.3));

        let curves: Vec<Vec<(f64, f64)>> = [0.1, 0.3, 0.5, 0.7, 0.9]
            .iter()
            .map(|&p| curve_grid(&params(3, &[p]), 101))
            .collect();
        for (i, a) in curves.iter().enumerate() {
            for b in &curves[i + 1..] {
                assert_ne!(a, b);
            }
        }
    }

    #[test]
    fn envelope_examples() {
        assert_eq!(envelope_bounds(0.0).unwrap(), (0.0, 0.0));
        let (lo, hi) = envelope_bounds(1.0).unwrap();
        assert_eq!(lo, 0.0);
        assert!((hi - 4f64.ln()).abs() < 1e-12);
        let (lo, hi) = envelope_bounds(0.5).unwrap();
        assert!((lo - LN_2).abs() < 1e-12);
        assert!((hi - (LN_2 + 0.5 * 4f64.ln())).abs() < 1e-12);
        assert!(envelope_bounds(1.5).is_err());
    }

    #[test]
    fn continuity_as_mass_fills_error_rate() {
        let e = 0.6;
        let at_limit = curve_entropy(e, &params(3, &[e])).unwrap();
        assert!((at_limit - binary_entropy(e)).abs() < 1e-12);
        let near = curve_entropy(e, &params(3, &[e - 1e-9])).unwrap();
        assert!((near - binary_entropy(e)).abs() < 1e-6);
    }

    #[test]
    fn reduction_chain_on_dense_grid() {
        for i in 0..=1000 {
            let e = i as f64 / 1000.0;
            let h2 = curve_entropy(e, &CurveParams::binary()).unwrap();
            let h3 = curve_entropy(e, &params(3, &[0.0])).unwrap();
            assert!((h3 - h2).abs() < 1e-12);
            let p1 = 0.3 * e;
            let h3 = curve_entropy(e, &params(3, &[p1])).unwrap();
            let h4 = curve_entropy(e, &params(4, &[p1, 0.0])).unwrap();
            assert!((h4 - h3).abs() < 1e-12);
            let p2 = 0.2 * e;
            let h4 = curve_entropy(e, &params(4, &[p1, p2])).unwrap();
            let h5 = curve_entropy(e, &params(5, &[p1, p2, 0.0])).unwrap();
            assert!((h5 - h4).abs() < 1e-12);
        }
    }

    #[test]
    fn binary_symmetry() {
        for i in 0..=1000 {
            let e = i as f64 / 1000.0;
            assert!((binary_entropy(e) - binary_entropy(1.0 - e)).abs() < 1e-12);
        }
    }
}
