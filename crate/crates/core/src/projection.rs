//! Projection onto the nonnegative orthant in the Gram metric.
//!
//! Solves `min_{λ ≥ 0} (λ - y)ᵀ Q (λ - y)` with the Lawson–Hanson active-set
//! method applied to the normal equations `Q λ = Q y`. With `Q = L Lᵀ` this is
//! the nonnegative least-squares problem `min ‖Lᵀλ - Lᵀy‖`.

use crate::basis::Weights;
use crate::error::{Error, Result};
use crate::gram::GramMatrix;
use crate::linalg::{Cholesky, Mat};
use crate::scalar::Real;

/// Projects `y` onto `R₊^{J+1}` under `‖·‖_Q`.
///
/// Coordinates excluded from the Gram factor (no chi mass) are clipped at zero.
pub fn project_nonneg_q<T: Real>(gram: &GramMatrix<T>, y: &[T]) -> Result<Weights<T>> {
    if y.len() != gram.dim() {
        return Err(Error::Dimension {
            expected: gram.dim(),
            got: y.len(),
        });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!("non-finite point to project: {y:?}")));
    }
    if y.iter().all(|&v| v >= T::zero()) {
        return Ok(Weights::from_projection(y.to_vec()));
    }
    let active = gram.active();
    let qa = gram.matrix().select(active);
    let ya: Vec<T> = active.iter().map(|&i| y[i]).collect();
    let xa = nnls_gram(&qa, &ya)?;
    let mut out: Vec<T> = y.iter().map(|&v| v.max(T::zero())).collect();
    for (&i, v) in active.iter().zip(xa) {
        out[i] = v;
    }
    Ok(Weights::from_projection(out))
}

/// Active-set solve of `min_{x ≥ 0} (x - y)ᵀ Q (x - y)` for a positive definite `Q`.
pub fn nnls_gram<T: Real>(q: &Mat<T>, y: &[T]) -> Result<Vec<T>> {
    let n = y.len();
    let b = q.matvec(y);
    let mut x = vec![T::zero(); n];
    let mut passive = vec![false; n];
    let scale = b.iter().fold(T::zero(), |m, v| m.max(v.abs())) + T::min_positive_value();
    let tol = T::epsilon() * T::c(64.0) * T::from_usize_lossy(n) * scale;
    let max_pivots = (n * n).max(4);
    let mut pivots = 0usize;

    let gradient = |x: &[T]| -> Vec<T> {
        let qx = q.matvec(x);
        b.iter().zip(qx).map(|(&bi, qi)| bi - qi).collect()
    };
    let solve_passive = |passive: &[bool]| -> Result<Vec<T>> {
        let idx: Vec<usize> = (0..n).filter(|&i| passive[i]).collect();
        let sub = q.select(&idx);
        let rhs: Vec<T> = idx.iter().map(|&i| b[i]).collect();
        let ch = Cholesky::new(&sub)
            .map_err(|p| Error::Numerical(format!("singular passive block (pivot {p})")))?;
        let z_sub = ch.solve(&rhs);
        let mut z = vec![T::zero(); n];
        for (&i, v) in idx.iter().zip(z_sub) {
            z[i] = v;
        }
        Ok(z)
    };

    let mut w = gradient(&x);
    loop {
        let entering = (0..n)
            .filter(|&i| !passive[i])
            .max_by(|&i, &j| w[i].partial_cmp(&w[j]).unwrap());
        let t = match entering {
            Some(t) if w[t] > tol => t,
            _ => break,
        };
        passive[t] = true;
        loop {
            pivots += 1;
            if pivots > max_pivots {
                return Err(Error::Numerical(format!(
                    "active-set projection exceeded {max_pivots} pivots; y = {y:?}, x = {x:?}"
                )));
            }
            let z = solve_passive(&passive)?;
            let infeasible: Vec<usize> =
                (0..n).filter(|&i| passive[i] && z[i] <= T::zero()).collect();
            if infeasible.is_empty() {
                x = z;
                break;
            }
            // step from x toward z until the first passive coordinate hits zero
            let step = infeasible
                .iter()
                .map(|&i| x[i] / (x[i] - z[i]))
                .fold(T::infinity(), T::min);
            for i in 0..n {
                x[i] = x[i] + step * (z[i] - x[i]);
            }
            for i in 0..n {
                if passive[i] && x[i] <= tol.min(T::epsilon()) {
                    passive[i] = false;
                    x[i] = T::zero();
                }
            }
            for &i in &infeasible {
                passive[i] = false;
                x[i] = T::zero();
            }
            if !passive.iter().any(|&p| p) {
                break;
            }
        }
        w = gradient(&x);
    }
    Ok(x)
}
