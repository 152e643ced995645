use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::geometry::BoxRegion;

/// Working region of the certificate: states `x = (x1; x2) ∈ Dx`,
/// accelerations `ẋ2 ∈ Dẋ`, and a bound on the external input norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub dx: BoxRegion,
    pub dxdot: BoxRegion,
    pub u_ex_max: f64,
}

impl DomainSpec {
    pub fn new(dx: BoxRegion, dxdot: BoxRegion, u_ex_max: f64) -> Result<Self> {
        if dx.dim() != 2 * dxdot.dim() {
            return Err(contract(format!(
                "state box has dimension {}, acceleration box {}",
                dx.dim(),
                dxdot.dim()
            )));
        }
        if !dx.contains_origin_interior() {
            return Err(contract("the state box must contain the origin in its interior"));
        }
        if !(u_ex_max.is_finite() && u_ex_max >= 0.0) {
            return Err(contract("u_ex_max must be nonnegative"));
        }
        Ok(Self { dx, dxdot, u_ex_max })
    }

    /// The benchmark region: `x1, x2 ∈ [-2, 2]`, `ẋ2 ∈ [-2.55, 4.55]`, `|u_ex| ≤ 0.1`.
    pub fn duffing_default() -> Self {
        Self {
            dx: BoxRegion::symmetric(2, 2.0),
            dxdot: BoxRegion { lo: vec![-2.55], hi: vec![4.55] },
            u_ex_max: 0.1,
        }
    }

    /// Half-dimension `n` of the state.
    pub fn n(&self) -> usize {
        self.dxdot.dim()
    }

    pub fn x1_box(&self) -> BoxRegion {
        let n = self.n();
        BoxRegion { lo: self.dx.lo[..n].to_vec(), hi: self.dx.hi[..n].to_vec() }
    }

    pub fn x2_box(&self) -> BoxRegion {
        let n = self.n();
        BoxRegion { lo: self.dx.lo[n..].to_vec(), hi: self.dx.hi[n..].to_vec() }
    }

    /// Region of the regression inputs, ordered `(ẋ2; x1; x2)`.
    pub fn regression_box(&self) -> BoxRegion {
        self.dxdot.product(&self.dx)
    }

    pub fn contains_state(&self, x1: &[f64], x2: &[f64]) -> bool {
        let mut x = x1.to_vec();
        x.extend_from_slice(x2);
        self.dx.contains(&x)
    }
}

/// Stacks `(ẋ2; x1; x2)`, the regression input layout.
pub fn regression_input(xdot2: &[f64], x1: &[f64], x2: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(3 * x1.len());
    v.extend_from_slice(xdot2);
    v.extend_from_slice(x1);
    v.extend_from_slice(x2);
    v
}
