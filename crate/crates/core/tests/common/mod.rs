#![allow(dead_code)]

use cesbound::scale_shape::{self, ScaleFunctional};
use cesbound::DensityGenerator;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(r: usize, c: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

pub fn random_vector(n: usize, rng: &mut impl Rng) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

pub fn random_symmetric(m: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let a = random_matrix(m, m, rng);
    (&a + a.transpose()) * 0.5
}

/// Well-conditioned random SPD matrix.
pub fn random_spd(m: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let a = random_matrix(m, m, rng);
    &a * a.transpose() / m as f64 + DMatrix::identity(m, m) * 0.5
}

pub fn random_shape(kind: ScaleFunctional, m: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    scale_shape::renormalize(kind, &random_spd(m, rng)).unwrap()
}

pub fn generators() -> Vec<DensityGenerator> {
    vec![
        DensityGenerator::gaussian(),
        DensityGenerator::student_t(6.0).unwrap(),
        DensityGenerator::student_t(8.0).unwrap(),
        DensityGenerator::generalized_gaussian(0.5).unwrap(),
    ]
}

pub fn rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

pub fn rel_identity(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    rel(a, &DMatrix::identity(n, n))
}

/// Mean and standard error of each coordinate of a sample of vectors.
pub fn mean_and_se(samples: &[DVector<f64>]) -> (DVector<f64>, DVector<f64>) {
    let n = samples.len() as f64;
    let d = samples[0].len();
    let mean = samples.iter().fold(DVector::zeros(d), |acc, s| acc + s) / n;
    let var = samples
        .iter()
        .fold(DVector::zeros(d), |acc: DVector<f64>, s| acc + (s - &mean).map(|x| x * x))
        / (n - 1.0);
    (mean, var.map(|v| (v / n).sqrt()))
}

/// Empirical outer-product FIM with the per-entry standard error.
pub fn outer_product_stats(samples: &[DVector<f64>]) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = samples.len() as f64;
    let d = samples[0].len();
    let mut mean = DMatrix::zeros(d, d);
    let mut sq = DMatrix::zeros(d, d);
    for s in samples {
        let o = s * s.transpose();
        sq += o.map(|x| x * x);
        mean += o;
    }
    mean /= n;
    sq /= n;
    let se = (sq - mean.map(|x| x * x)).map(|v| (v.max(0.0) / n).sqrt());
    (mean, se)
}

/// Largest |a - b| / se over entries, with a small absolute floor on se.
pub fn max_z(a: &DMatrix<f64>, b: &DMatrix<f64>, se: &DMatrix<f64>) -> f64 {
    let mut z: f64 = 0.0;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            let s = se[(i, j)].max(1e-12);
            z = z.max((a[(i, j)] - b[(i, j)]).abs() / s);
        }
    }
    z
}

/// Two-sided z threshold holding the family-wise error of `k` simultaneous
/// checks at the level of a single 3-sigma check.
pub fn bonferroni_z(k: usize) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    let n = Normal::new(0.0, 1.0).unwrap();
    let p = 2.0 * (1.0 - n.cdf(3.0));
    n.inverse_cdf(1.0 - p / (2.0 * k.max(1) as f64))
}

/// Draws `n` rows from `gen` and returns them as vectors.
pub fn draws(gen: &DensityGenerator, n: usize, mu: &DVector<f64>, sigma: &DMatrix<f64>, seed: u64) -> Vec<DVector<f64>> {
    let x = gen.sample(n, mu, sigma, seed).unwrap();
    (0..n).map(|i| x.row(i).transpose()).collect()
}
