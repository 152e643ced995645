//! Axis-aligned boxes and the regular grids laid over them.

use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxRegion {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxRegion {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(contract("box bounds must be nonempty and of equal length"));
        }
        if lo.iter().zip(&hi).any(|(l, h)| !(l.is_finite() && h.is_finite() && l <= h)) {
            return Err(contract(format!("empty or non-finite box {lo:?}..{hi:?}")));
        }
        Ok(Self { lo, hi })
    }

    /// The box `[-h, h]^dim`.
    pub fn symmetric(dim: usize, half_width: f64) -> Self {
        Self { lo: vec![-half_width; dim], hi: vec![half_width; dim] }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dim() && p.iter().zip(self.lo.iter().zip(&self.hi)).all(|(x, (l, h))| *l <= *x && *x <= *h)
    }

    pub fn contains_with_slack(&self, p: &[f64], slack: f64) -> bool {
        p.len() == self.dim()
            && p.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(x, (l, h))| *l - slack <= *x && *x <= *h + slack)
    }

    pub fn contains_origin_interior(&self) -> bool {
        self.lo.iter().zip(&self.hi).all(|(l, h)| *l < 0.0 && *h > 0.0)
    }

    /// Whether the centered Euclidean ball of radius `r` lies inside the box.
    pub fn contains_centered_ball(&self, r: f64) -> bool {
        self.lo.iter().zip(&self.hi).all(|(l, h)| *l <= -r && r <= *h)
    }

    /// All 2^dim corners (degenerate axes repeat).
    pub fn corners(&self) -> Vec<Vec<f64>> {
        let d = self.dim();
        (0..1usize << d)
            .map(|mask| (0..d).map(|k| if mask >> k & 1 == 1 { self.hi[k] } else { self.lo[k] }).collect())
            .collect()
    }

    /// Largest Euclidean norm over the box, attained at a corner.
    pub fn max_norm(&self) -> f64 {
        self.corners()
            .iter()
            .map(|c| crate::linalg::norm(c))
            .fold(0.0, f64::max)
    }

    pub fn widths(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| h - l).collect()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            lo: self.lo.iter().map(|x| x * factor).collect(),
            hi: self.hi.iter().map(|x| x * factor).collect(),
        }
    }

    /// Cartesian product `self × other`, with `self`'s axes first.
    pub fn product(&self, other: &BoxRegion) -> BoxRegion {
        let mut lo = self.lo.clone();
        lo.extend_from_slice(&other.lo);
        let mut hi = self.hi.clone();
        hi.extend_from_slice(&other.hi);
        BoxRegion { lo, hi }
    }

    pub fn grid(&self, counts: &[usize]) -> Result<Grid> {
        Grid::new(self.clone(), counts.to_vec())
    }
}

/// Regular lattice over a box. Axis `k` holds `counts[k]` evenly spaced
/// nodes including both ends; a single node sits at the interval midpoint.
/// Nodes are enumerated with the last axis varying fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub region: BoxRegion,
    pub counts: Vec<usize>,
}

impl Grid {
    pub fn new(region: BoxRegion, counts: Vec<usize>) -> Result<Self> {
        if counts.len() != region.dim() || counts.iter().any(|&c| c == 0) {
            return Err(contract(format!(
                "grid counts {counts:?} do not match a {}-dimensional box",
                region.dim()
            )));
        }
        Ok(Self { region, counts })
    }

    pub fn uniform(region: BoxRegion, per_axis: usize) -> Result<Self> {
        let d = region.dim();
        Self::new(region, vec![per_axis; d])
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn axis_value(&self, axis: usize, i: usize) -> f64 {
        let (lo, hi, c) = (self.region.lo[axis], self.region.hi[axis], self.counts[axis]);
        if c == 1 {
            0.5 * (lo + hi)
        } else {
            lo + (hi - lo) * i as f64 / (c - 1) as f64
        }
    }

    pub fn point(&self, mut index: usize) -> Vec<f64> {
        let d = self.counts.len();
        let mut p = vec![0.0; d];
        for axis in (0..d).rev() {
            let c = self.counts[axis];
            p[axis] = self.axis_value(axis, index % c);
            index /= c;
        }
        p
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }
}
