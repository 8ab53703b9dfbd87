//! Vector helpers for states of the discretized state space.
//!
//! A state is a plain `Vec<f64>` with the Euclidean norm. For the spectral
//! heat model the coefficients are taken in an orthonormal cosine basis, so
//! the Euclidean norm of the coefficient vector equals the L² norm of the
//! represented function.

pub type State = Vec<f64>;

pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn distance(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

pub fn sub(x: &[f64], y: &[f64]) -> State {
    x.iter().zip(y).map(|(a, b)| a - b).collect()
}

pub fn add(x: &[f64], y: &[f64]) -> State {
    x.iter().zip(y).map(|(a, b)| a + b).collect()
}

pub fn scale(c: f64, x: &[f64]) -> State {
    x.iter().map(|v| c * v).collect()
}

/// `y += c * x`
pub fn axpy(c: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += c * xi;
    }
}

pub fn zeros(dim: usize) -> State {
    vec![0.0; dim]
}
