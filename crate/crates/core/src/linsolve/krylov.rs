//! Restarted GMRES with right preconditioning, plus Jacobi and ILU(0)
//! preconditioners operating on [`CsrMatrix`].

use super::csr::{dot, norm2, CsrMatrix};
use crate::error::{Error, Result};

pub trait Preconditioner {
    /// `z = M^{-1} r`
    fn apply(&self, r: &[f64], z: &mut [f64]);
}

pub struct Jacobi {
    inv_diag: Vec<f64>,
}

impl Jacobi {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        let inv_diag = a
            .diagonal()
            .into_iter()
            .enumerate()
            .map(|(i, d)| {
                if d == 0.0 {
                    Err(Error::numerical(format!("zero diagonal in row {i}")))
                } else {
                    Ok(1.0 / d)
                }
            })
            .collect::<Result<_>>()?;
        Ok(Jacobi { inv_diag })
    }
}

impl Preconditioner for Jacobi {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        for ((zi, ri), d) in z.iter_mut().zip(r).zip(&self.inv_diag) {
            *zi = ri * d;
        }
    }
}

/// Incomplete LU with zero fill-in: L (unit lower) and U share the pattern of A.
pub struct Ilu0 {
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    lu: Vec<f64>,
    diag: Vec<usize>,
}

impl Ilu0 {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        let n = a.n();
        let row_ptr = a.row_ptr().to_vec();
        let col_idx = a.col_idx().to_vec();
        let mut lu = a.values().to_vec();
        let mut diag = vec![usize::MAX; n];
        for i in 0..n {
            for k in row_ptr[i]..row_ptr[i + 1] {
                if col_idx[k] == i {
                    diag[i] = k;
                }
            }
            if diag[i] == usize::MAX {
                return Err(Error::numerical(format!(
                    "ILU(0): diagonal missing from pattern in row {i}"
                )));
            }
        }
        // position lookup for the current row
        let mut pos = vec![usize::MAX; n];
        for i in 0..n {
            for k in row_ptr[i]..row_ptr[i + 1] {
                pos[col_idx[k]] = k;
            }
            for k in row_ptr[i]..diag[i] {
                let c = col_idx[k];
                let pivot = lu[diag[c]];
                if pivot == 0.0 {
                    return Err(Error::numerical(format!("ILU(0): zero pivot in row {c}")));
                }
                let l = lu[k] / pivot;
                lu[k] = l;
                for kk in diag[c] + 1..row_ptr[c + 1] {
                    let p = pos[col_idx[kk]];
                    if p != usize::MAX {
                        lu[p] -= l * lu[kk];
                    }
                }
            }
            if lu[diag[i]] == 0.0 {
                return Err(Error::numerical(format!("ILU(0): zero pivot in row {i}")));
            }
            for k in row_ptr[i]..row_ptr[i + 1] {
                pos[col_idx[k]] = usize::MAX;
            }
        }
        Ok(Ilu0 {
            row_ptr,
            col_idx,
            lu,
            diag,
        })
    }
}

impl Preconditioner for Ilu0 {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        let n = r.len();
        for i in 0..n {
            let mut s = r[i];
            for k in self.row_ptr[i]..self.diag[i] {
                s -= self.lu[k] * z[self.col_idx[k]];
            }
            z[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = z[i];
            for k in self.diag[i] + 1..self.row_ptr[i + 1] {
                s -= self.lu[k] * z[self.col_idx[k]];
            }
            z[i] = s / self.lu[self.diag[i]];
        }
    }
}

#[derive(Debug, Clone)]
pub struct GmresOutcome {
    pub converged: bool,
    pub iterations: usize,
    /// Relative true-residual norm after each restart cycle, plus the initial one.
    pub history: Vec<f64>,
}

/// Right-preconditioned restarted GMRES(m). `x` holds the initial guess on
/// entry and the iterate on exit.
pub fn gmres(
    a: &CsrMatrix,
    b: &[f64],
    x: &mut [f64],
    precond: &dyn Preconditioner,
    restart: usize,
    tol: f64,
    max_iter: usize,
) -> GmresOutcome {
    let n = a.n();
    let bnorm = norm2(b).max(f64::MIN_POSITIVE);
    let mut r = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut history = Vec::new();
    let mut iterations = 0;
    let m = restart.max(1);

    let residual = |x: &[f64], r: &mut Vec<f64>| {
        a.mul_vec(x, r);
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
        norm2(r)
    };

    let mut beta = residual(x, &mut r);
    history.push(beta / bnorm);
    let mut stagnant = 0;
    while beta / bnorm > tol && iterations < max_iter {
        let mut v: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        v.push(r.iter().map(|ri| ri / beta).collect());
        let mut h = vec![vec![0.0; m]; m + 1];
        let mut cs = vec![0.0; m];
        let mut sn = vec![0.0; m];
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k_used = 0;
        for k in 0..m {
            precond.apply(&v[k], &mut z);
            a.mul_vec(&z, &mut w);
            for i in 0..=k {
                h[i][k] = dot(&w, &v[i]);
                for (wj, vj) in w.iter_mut().zip(&v[i]) {
                    *wj -= h[i][k] * vj;
                }
            }
            let hn = norm2(&w);
            h[k + 1][k] = hn;
            for i in 0..k {
                let t = cs[i] * h[i][k] + sn[i] * h[i + 1][k];
                h[i + 1][k] = -sn[i] * h[i][k] + cs[i] * h[i + 1][k];
                h[i][k] = t;
            }
            let denom = h[k][k].hypot(h[k + 1][k]);
            if denom == 0.0 {
                break;
            }
            cs[k] = h[k][k] / denom;
            sn[k] = h[k + 1][k] / denom;
            h[k][k] = denom;
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            k_used = k + 1;
            iterations += 1;
            let lucky = hn == 0.0;
            if !lucky {
                v.push(w.iter().map(|wi| wi / hn).collect());
            }
            if g[k + 1].abs() / bnorm <= tol * 0.5 || lucky || iterations >= max_iter {
                break;
            }
        }
        if k_used == 0 {
            break;
        }
        // back substitution
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for j in i + 1..k_used {
                s -= h[i][j] * y[j];
            }
            y[i] = s / h[i][i];
        }
        let mut update = vec![0.0; n];
        for (j, yj) in y.iter().enumerate() {
            for (u, vj) in update.iter_mut().zip(&v[j]) {
                *u += yj * vj;
            }
        }
        precond.apply(&update, &mut z);
        for (xi, zi) in x.iter_mut().zip(&z) {
            *xi += zi;
        }
        let new_beta = residual(x, &mut r);
        history.push(new_beta / bnorm);
        if new_beta >= 0.999 * beta {
            stagnant += 1;
            if stagnant >= 3 {
                beta = new_beta;
                break;
            }
        } else {
            stagnant = 0;
        }
        beta = new_beta;
    }
    GmresOutcome {
        converged: beta / bnorm <= tol,
        iterations,
        history,
    }
}
