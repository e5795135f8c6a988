//! Symmetric Lanczos with full reorthogonalization.

use faer::{Mat, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct LanczosOptions {
    pub max_dim: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        Self {
            max_dim: 200,
            tol: 1e-10,
            seed: 0x5eed,
        }
    }
}

fn dotv(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn ritz(alpha: &[f64], beta: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let m = alpha.len();
    let t = Mat::from_fn(m, m, |i, j| {
        if i == j {
            alpha[i]
        } else if i + 1 == j {
            beta[i]
        } else if j + 1 == i {
            beta[j]
        } else {
            0.0
        }
    });
    let evd = t
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::EigenNonConvergence(format!("tridiagonal eigensolver: {e:?}")))?;
    let s = evd.S();
    let u = evd.U();
    let vals: Vec<f64> = (0..m).map(|i| s[i]).collect();
    let last: Vec<f64> = (0..m).map(|i| u[(m - 1, i)]).collect();
    Ok((vals, last))
}

/// The `k` eigenvalues of largest magnitude of a symmetric operator of size
/// `n`, applied through `apply`. Multiplicities are not resolved.
pub fn largest_magnitude<F>(n: usize, k: usize, mut apply: F, opts: LanczosOptions) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    if n == 0 || k == 0 {
        return Ok(Vec::new());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut q: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    let nq = dotv(&q, &q).sqrt();
    q.iter_mut().for_each(|v| *v /= nq);

    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut alpha = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let cap = opts.max_dim.min(n);
    let mut scale = 0.0f64;

    for j in 0..cap {
        let mut w = apply(&q)?;
        if w.len() != n || w.iter().any(|v| !v.is_finite()) {
            return Err(Error::EigenNonConvergence("operator produced invalid output".into()));
        }
        let a = dotv(&q, &w);
        alpha.push(a);
        basis.push(q.clone());
        for _ in 0..2 {
            for b in &basis {
                let c = dotv(b, &w);
                w.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
        }
        let bnorm = dotv(&w, &w).sqrt();
        scale = scale.max(a.abs()).max(bnorm);

        let done_space = j + 1 == n || bnorm <= 1e-13 * scale.max(1e-300);
        let check = done_space || j + 1 >= k.min(n) && (j % 4 == 3 || j + 1 == cap);
        if check {
            let (vals, last) = ritz(&alpha, &beta)?;
            let mut order: Vec<usize> = (0..vals.len()).collect();
            order.sort_by(|&x, &y| vals[y].abs().partial_cmp(&vals[x].abs()).unwrap());
            let want = k.min(vals.len());
            let top = &order[..want];
            let converged = done_space
                || top
                    .iter()
                    .all(|&i| (bnorm * last[i]).abs() <= opts.tol * vals[i].abs().max(1e-300));
            if converged {
                return Ok(top.iter().map(|&i| vals[i]).collect());
            }
        }
        beta.push(bnorm);
        q = w.iter().map(|v| v / bnorm).collect();
    }
    Err(Error::EigenNonConvergence(format!(
        "{k} eigenvalues not converged within {cap} Lanczos steps"
    )))
}
