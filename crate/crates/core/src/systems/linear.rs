use super::{BackupPolicy, Smoothing, SystemModel};
use crate::{Matrix, Vector};

/// Linear time-invariant model `x' = A x + B u`.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub a: Matrix,
    pub b: Matrix,
    lower: Vector,
    upper: Vector,
}

impl LinearSystem {
    pub fn new(a: Matrix, b: Matrix, lower: Vector, upper: Vector) -> Self {
        assert_eq!(a.nrows(), a.ncols());
        assert_eq!(b.nrows(), a.nrows());
        assert_eq!(lower.len(), b.ncols());
        assert_eq!(upper.len(), b.ncols());
        Self { a, b, lower, upper }
    }
}

impl SystemModel for LinearSystem {
    fn state_dim(&self) -> usize {
        self.a.nrows()
    }
    fn input_dim(&self) -> usize {
        self.b.ncols()
    }
    fn f(&self, x: &Vector) -> Vector {
        &self.a * x
    }
    fn g(&self, _x: &Vector) -> Matrix {
        self.b.clone()
    }
    fn df_dx(&self, _x: &Vector) -> Matrix {
        self.a.clone()
    }
    fn dg_dx(&self, _x: &Vector) -> Vec<Matrix> {
        let n = self.state_dim();
        vec![Matrix::zeros(n, n); self.input_dim()]
    }
    fn input_lower(&self) -> &Vector {
        &self.lower
    }
    fn input_upper(&self) -> &Vector {
        &self.upper
    }
}

/// A policy that always returns the same input.
#[derive(Debug, Clone)]
pub struct ConstantPolicy {
    pub input: Vector,
    pub state_dim: usize,
}

impl BackupPolicy for ConstantPolicy {
    fn eval(&self, _x: &Vector) -> Vector {
        self.input.clone()
    }
    fn jacobian(&self, _x: &Vector) -> Matrix {
        Matrix::zeros(self.input.len(), self.state_dim)
    }
    fn smoothing(&self) -> Smoothing {
        Smoothing::Hard
    }
}
