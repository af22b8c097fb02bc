//! Adam optimizer with bias correction.

use super::{Matrix, Real};
use crate::error::{Error, Result};

/// Per-parameter Adam moments; one state per parameter matrix.
#[derive(Debug, Clone)]
pub struct AdamState<T: Real = f32> {
    m: Matrix<T>,
    v: Matrix<T>,
    step: usize,
    beta1: T,
    beta2: T,
    eps: T,
}

impl<T: Real> AdamState<T> {
    /// Fresh state with the usual defaults (β1=0.9, β2=0.999, ε=1e-8).
    pub fn new(rows: usize, cols: usize) -> Self {
        AdamState {
            m: Matrix::zeros(rows, cols),
            v: Matrix::zeros(rows, cols),
            step: 0,
            beta1: T::of(0.9),
            beta2: T::of(0.999),
            eps: T::of(1e-8),
        }
    }

    pub fn for_param(param: &Matrix<T>) -> Self {
        Self::new(param.rows(), param.cols())
    }

    pub fn step(&self) -> usize {
        self.step
    }

    /// Bias-corrected Adam update; increments the step counter.
    ///
    /// Entries whose gradient is exactly zero are skipped entirely (lazy
    /// update): their moments and parameter values stay untouched, so a
    /// zero gradient is a no-op on parameters from any state. This keeps
    /// rarely-touched rows (e.g. lookup entries for absent tokens) from
    /// drifting under stale momentum.
    pub fn update(&mut self, param: &mut Matrix<T>, grad: &Matrix<T>, lr: T) -> Result<()> {
        if param.shape() != grad.shape() || param.shape() != self.m.shape() {
            return Err(Error::shape("adam_step", param.shape_str(), grad.shape_str()));
        }
        self.step += 1;
        let t = self.step as i32;
        let b1 = self.beta1;
        let b2 = self.beta2;
        let one = T::ONE;
        let bc1 = one - b1.powi(t);
        let bc2 = one - b2.powi(t);
        let p = param.data_mut();
        let g = grad.data();
        let m = self.m.data_mut();
        let v = self.v.data_mut();
        for i in 0..p.len() {
            if g[i] == T::ZERO {
                continue;
            }
            m[i] = b1 * m[i] + (one - b1) * g[i];
            v[i] = b2 * v[i] + (one - b2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }

    /// Zero the moment rows listed in `mask` (used to freeze features).
    pub fn zero_rows(&mut self, rows: &[usize]) {
        for &r in rows {
            self.m.row_mut(r).iter_mut().for_each(|x| *x = T::ZERO);
            self.v.row_mut(r).iter_mut().for_each(|x| *x = T::ZERO);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_a_noop_on_params() {
        let mut p = Matrix::from_vec(2, 2, vec![1.0f32, -2.0, 0.5, 3.0]).unwrap();
        let before = p.clone();
        let g = Matrix::zeros(2, 2);
        let mut st = AdamState::for_param(&p);
        for _ in 0..5 {
            st.update(&mut p, &g, 0.01).unwrap();
        }
        assert_eq!(p, before);
        assert_eq!(st.step(), 5);
    }

    #[test]
    fn first_step_with_constant_grad_moves_by_about_lr() {
        // At step 1: m_hat = g, v_hat = g^2, so the update is lr·g/(|g|+eps) ≈ lr.
        let mut p = Matrix::from_vec(1, 3, vec![0.0f64, 1.0, -1.0]).unwrap();
        let g = Matrix::from_vec(1, 3, vec![0.3f64, 0.3, 0.3]).unwrap();
        let mut st = AdamState::for_param(&p);
        let lr = 0.05;
        st.update(&mut p, &g, lr).unwrap();
        for (i, &x) in p.data().iter().enumerate() {
            let start = [0.0, 1.0, -1.0][i];
            assert!(
                (start - x - lr).abs() < 1e-6,
                "entry {i}: moved by {}",
                start - x
            );
        }
    }

    #[test]
    fn identical_inputs_give_bit_identical_results() {
        let run = || {
            let mut p = Matrix::from_vec(2, 2, vec![0.1f32, 0.2, 0.3, 0.4]).unwrap();
            let g = Matrix::from_vec(2, 2, vec![0.5f32, -0.5, 0.25, 1.0]).unwrap();
            let mut st = AdamState::for_param(&p);
            for _ in 0..10 {
                st.update(&mut p, &g, 0.03).unwrap();
            }
            p
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut p = Matrix::<f32>::zeros(2, 2);
        let g = Matrix::<f32>::zeros(2, 3);
        let mut st = AdamState::for_param(&p);
        assert!(st.update(&mut p, &g, 0.01).is_err());
    }
}
