use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::model::{Dims, GruWeights, ModelParams};
use crate::ndmath::{Real, Tensor};

pub const EMBEDDING_INIT_RANGE: f64 = 0.1;

/// Random `n×n` orthogonal matrix: the Q factor of a Gaussian matrix, computed
/// in `f64` by Gram-Schmidt with re-orthogonalization. Gram-Schmidt leaves
/// `diag(R)` positive, so Q is Haar-distributed.
pub fn random_orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    // column-major working copy
    let mut cols: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..n).map(|_| StandardNormal.sample(rng)).collect())
        .collect();
    for j in 0..n {
        for _pass in 0..2 {
            let (head, tail) = cols.split_at_mut(j);
            let col = &mut tail[0];
            for q in head.iter() {
                let dot: f64 = q.iter().zip(col.iter()).map(|(a, b)| a * b).sum();
                for (x, qi) in col.iter_mut().zip(q) {
                    *x -= dot * qi;
                }
            }
            let norm = col.iter().map(|x| x * x).sum::<f64>().sqrt();
            for x in col.iter_mut() {
                *x /= norm;
            }
        }
    }
    let mut out = vec![0.0; n * n];
    for (j, col) in cols.iter().enumerate() {
        for (i, &x) in col.iter().enumerate() {
            out[i * n + j] = x;
        }
    }
    out
}

/// `rows×cols` slice of a random orthogonal `max(rows, cols)` square matrix:
/// orthonormal columns when tall, orthonormal rows when wide.
pub fn orthogonal<T: Real, R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Tensor<T> {
    let n = rows.max(cols);
    let q = random_orthogonal(n, rng);
    let data = (0..rows)
        .flat_map(|i| (0..cols).map(move |j| (i, j)))
        .map(|(i, j)| T::of(q[i * n + j]))
        .collect();
    Tensor::matrix(rows, cols, data).expect("positive extents")
}

fn init_gru<T: Real, R: Rng + ?Sized>(embed: usize, hidden: usize, rng: &mut R) -> GruWeights<T> {
    let mut g = GruWeights::zeros(embed, hidden);
    g.w_z = orthogonal(embed, hidden, rng);
    g.w_r = orthogonal(embed, hidden, rng);
    g.w_h = orthogonal(embed, hidden, rng);
    g.u_z = orthogonal(hidden, hidden, rng);
    g.u_r = orthogonal(hidden, hidden, rng);
    g.u_h = orthogonal(hidden, hidden, rng);
    g
}

/// Embeddings uniform in `[-0.1, 0.1]`, GRU matrices orthogonal, biases zero.
pub fn init_params<T: Real, R: Rng + ?Sized>(dims: Dims, rng: &mut R) -> ModelParams<T> {
    let mut p = ModelParams::zeros(dims);
    let u =
        Uniform::new_inclusive(-EMBEDDING_INIT_RANGE, EMBEDDING_INIT_RANGE).expect("valid range");
    for x in p.embedding.data_mut() {
        *x = T::of(u.sample(rng));
    }
    p.doc_encoder.forward = init_gru(dims.embed, dims.hidden, rng);
    p.doc_encoder.backward = init_gru(dims.embed, dims.hidden, rng);
    p.query_encoder.forward = init_gru(dims.embed, dims.hidden, rng);
    p.query_encoder.backward = init_gru(dims.embed, dims.hidden, rng);
    p
}

/// `max |QᵀQ − I|` over the Gram matrix of the columns (or rows, for wide matrices).
pub fn orthogonality_error<T: Real>(m: &Tensor<T>) -> f64 {
    let (r, c) = m.dims2();
    let (a, k, n) = if r >= c {
        (m.transpose(), c, r)
    } else {
        (m.clone(), r, c)
    };
    let mut worst: f64 = 0.0;
    for i in 0..k {
        for j in 0..k {
            let dot: f64 = (0..n)
                .map(|p| a.get2(i, p).as_f64() * a.get2(j, p).as_f64())
                .sum();
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((dot - target).abs());
        }
    }
    worst
}
