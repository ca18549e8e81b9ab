//! Seeded simulation designs with known answers, shared by tests, the
//! acceptance run and the fixture generator.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::factors::DfmModel;
use crate::linalg::{Cholesky, Matrix};
use crate::rng::{rng_from_seed, PortableRng};

fn normal(rng: &mut PortableRng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn normal_matrix(rows: usize, cols: usize, seed: u64) -> Matrix<f64> {
    let mut rng = rng_from_seed(seed);
    Matrix::from_fn(rows, cols, |_, _| normal(&mut rng))
}

pub fn normal_vec(len: usize, sd: f64, seed: u64) -> Vec<f64> {
    let mut rng = rng_from_seed(seed);
    (0..len).map(|_| sd * normal(&mut rng)).collect()
}

/// Static factor panel `x = F Λ' + e` with `k` unit-variance factors,
/// standard normal loadings and noise of standard deviation `noise`.
pub fn factor_panel(rows: usize, cols: usize, k: usize, noise: f64, seed: u64) -> Matrix<f64> {
    let mut rng = rng_from_seed(seed);
    let f = Matrix::from_fn(rows, k, |_, _| normal(&mut rng));
    let l = Matrix::from_fn(cols, k, |_, _| normal(&mut rng));
    let common = f.matmul(&l.transpose()).expect("conformable");
    Matrix::from_fn(rows, cols, |r, c| common[(r, c)] + noise * normal(&mut rng))
}

/// Two-factor model with `A = [[0.7, 0.1], [0, 0.5]]`, `Q = I`, standard
/// normal loadings and idiosyncratic variances `noise · U(0.5, 1.5)`.
pub fn two_factor_dfm(n: usize, noise: f64, seed: u64) -> DfmModel<f64> {
    let mut rng = rng_from_seed(seed ^ 0xD0F);
    let lambda = Matrix::from_fn(n, 2, |_, _| normal(&mut rng));
    let a = Matrix::from_rows(&[vec![0.7, 0.1], vec![0.0, 0.5]]).expect("2x2");
    let q = Matrix::identity(2);
    let r: Vec<f64> = (0..n).map(|_| noise * rng.random_range(0.5..1.5)).collect();
    DfmModel::from_parameters(lambda, a, q, r, vec![0.0; n]).expect("valid parameters")
}

/// Draws `(observations, factors)` of length `len` from a DFM, starting from
/// the model's initial state distribution.
pub fn simulate_dfm(model: &DfmModel<f64>, len: usize, seed: u64) -> (Matrix<f64>, Matrix<f64>) {
    let mut rng = rng_from_seed(seed);
    let r = model.r;
    let n = model.width();
    let p0 = Cholesky::new(&model.initial_covariance).expect("positive definite P0");
    let q = Cholesky::new(&model.factor_noise).expect("positive definite Q");
    let mut f = Matrix::zeros(len, r);
    let mut x = Matrix::zeros(len, n);
    let draw = |rng: &mut PortableRng| -> Vec<f64> { (0..r).map(|_| normal(rng)).collect() };
    let mut state = p0.lower().matvec(&draw(&mut rng)).expect("r");
    for t in 0..len {
        if t > 0 {
            let shock = q.lower().matvec(&draw(&mut rng)).expect("r");
            let next = model.transition.matvec(&state).expect("r");
            state = next.iter().zip(&shock).map(|(a, b)| a + b).collect();
        }
        f.row_mut(t).copy_from_slice(&state);
        let common = model.loadings.matvec(&state).expect("n");
        for i in 0..n {
            x[(t, i)] = model.means[i] + common[i] + model.idiosyncratic[i].sqrt() * normal(&mut rng);
        }
    }
    (x, f)
}

/// `x_t = φ x_{t−1} + ε_t` with unit innovations after a 50-step burn-in;
/// returns the path and its innovations.
pub fn ar1(len: usize, phi: f64, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = rng_from_seed(seed);
    let mut prev = 0.0;
    for _ in 0..50 {
        prev = phi * prev + normal(&mut rng);
    }
    let mut x = Vec::with_capacity(len);
    let mut eps = Vec::with_capacity(len);
    for _ in 0..len {
        let e = normal(&mut rng);
        prev = phi * prev + e;
        x.push(prev);
        eps.push(e);
    }
    (x, eps)
}

/// `y = 2x₁ − 3x₅ + ε` with σ = 0.5 over 23 standard normal candidates, T = 200.
pub fn planted_support(seed: u64) -> (Matrix<f64>, Vec<f64>) {
    let x = normal_matrix(200, 23, seed);
    let e = normal_vec(200, 0.5, seed ^ 0xABCD);
    let y = (0..200).map(|r| 2.0 * x[(r, 0)] - 3.0 * x[(r, 4)] + e[r]).collect();
    (x, y)
}

/// `y = 1.5 x₁ + ε` over 8 candidates, T = 300.
pub fn strong_signal(seed: u64) -> (Matrix<f64>, Vec<f64>) {
    let x = normal_matrix(300, 8, seed);
    let e = normal_vec(300, 1.0, seed ^ 0xABCD);
    let y = (0..300).map(|r| 1.5 * x[(r, 0)] + e[r]).collect();
    (x, y)
}
