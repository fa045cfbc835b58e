//! Uniform access to the scalar tensors of any parameter record.

use crate::numkit::{Matrix, Vector};

/// A record of real tensors visited in a fixed order.
///
/// The order is part of the contract: initialization, optimizer state,
/// finite differences and gradient norms all walk tensors through this
/// trait, so two records of the same shape always line up index by index.
pub trait Parameters {
    fn tensors(&self) -> Vec<&[f64]>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn flatten(&self) -> Vec<f64> {
        self.tensors().concat()
    }

    fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// Sets every scalar to zero.
    fn zero(&mut self) {
        for t in self.tensors_mut() {
            t.fill(0.0);
        }
    }
}

impl Parameters for Vec<f64> {
    fn tensors(&self) -> Vec<&[f64]> {
        vec![self.as_slice()]
    }
    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.as_mut_slice()]
    }
}

impl Parameters for Vector {
    fn tensors(&self) -> Vec<&[f64]> {
        vec![self.as_slice()]
    }
    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.as_mut_slice()]
    }
}

impl Parameters for Matrix {
    fn tensors(&self) -> Vec<&[f64]> {
        vec![self.as_slice()]
    }
    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.as_mut_slice()]
    }
}

impl Parameters for Vec<Vec<f64>> {
    fn tensors(&self) -> Vec<&[f64]> {
        self.iter().map(Vec::as_slice).collect()
    }
    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.iter_mut().map(Vec::as_mut_slice).collect()
    }
}
