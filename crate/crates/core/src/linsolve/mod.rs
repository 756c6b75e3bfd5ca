//! Sparse linear algebra: CSR matrices, Dirichlet elimination, a banded
//! direct factorisation, and ILU(0)-preconditioned restarted GMRES.

mod banded;
mod csr;
mod krylov;

pub use banded::BandedLu;
pub use csr::{dot, norm2, CsrMatrix};
pub use krylov::{gmres, GmresOutcome, Ilu0, Jacobi, Preconditioner};

use crate::error::{Error, Result};

/// Assembled matrix, right-hand side, and pending Dirichlet constraints.
#[derive(Debug, Clone)]
pub struct SparseSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub constraints: Vec<(usize, f64)>,
}

impl SparseSystem {
    pub fn new(matrix: CsrMatrix, rhs: Vec<f64>) -> Self {
        SparseSystem {
            matrix,
            rhs,
            constraints: Vec::new(),
        }
    }
}

/// Replace constrained rows by identity rows and move the constrained columns
/// into the right-hand side, keeping the sparsity pattern intact.
pub fn apply_dirichlet(system: &mut SparseSystem, constraints: &[(usize, f64)]) -> Result<()> {
    let n = system.matrix.n();
    let mut fixed: Vec<Option<f64>> = vec![None; n];
    for &(dof, value) in constraints {
        if dof >= n {
            return Err(Error::config(format!(
                "constraint on dof {dof} outside system of size {n}"
            )));
        }
        match fixed[dof] {
            Some(prev) if prev != value => {
                return Err(Error::config(format!(
                    "conflicting constraints on dof {dof}: {prev} and {value}"
                )))
            }
            _ => fixed[dof] = Some(value),
        }
    }
    if constraints.is_empty() {
        return Ok(());
    }
    let row_ptr = system.matrix.row_ptr().to_vec();
    let col_idx = system.matrix.col_idx().to_vec();
    let values = system.matrix.values_mut();
    for r in 0..n {
        if let Some(v) = fixed[r] {
            for k in row_ptr[r]..row_ptr[r + 1] {
                values[k] = if col_idx[k] == r { 1.0 } else { 0.0 };
            }
            system.rhs[r] = v;
            continue;
        }
        for k in row_ptr[r]..row_ptr[r + 1] {
            if let Some(v) = fixed[col_idx[k]] {
                system.rhs[r] -= values[k] * v;
                values[k] = 0.0;
            }
        }
    }
    for r in 0..n {
        if fixed[r].is_some() && system.matrix.get(r, r) != 1.0 {
            return Err(Error::config(format!(
                "constrained dof {r} has no diagonal entry in the pattern"
            )));
        }
    }
    system.constraints.extend_from_slice(constraints);
    Ok(())
}

/// Cuthill-McKee ordering of an undirected graph given as adjacency lists.
///
/// Returns `order` with `order[k]` the original vertex placed at position `k`.
/// Each component starts from its lowest-degree vertex and neighbours are
/// visited in increasing degree, which keeps banded factorisations narrow.
pub fn cuthill_mckee(adjacency: &[Vec<usize>]) -> Vec<usize> {
    let n = adjacency.len();
    let degree: Vec<usize> = adjacency.iter().map(Vec::len).collect();
    let mut seen = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&v| (degree[v], v));
    for &root in &by_degree {
        if seen[root] {
            continue;
        }
        seen[root] = true;
        let mut head = order.len();
        order.push(root);
        while head < order.len() {
            let v = order[head];
            head += 1;
            let mut next: Vec<usize> = adjacency[v].iter().copied().filter(|&u| !seen[u]).collect();
            next.sort_by_key(|&u| (degree[u], u));
            next.dedup();
            for u in next {
                if !seen[u] {
                    seen[u] = true;
                    order.push(u);
                }
            }
        }
    }
    order
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PreconditionerKind {
    Jacobi,
    Ilu0,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// Direct below the size threshold, Krylov above it.
    Auto,
    Direct,
    Iterative,
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub restart: usize,
    pub direct_threshold: usize,
    pub preconditioner: PreconditionerKind,
    pub strategy: Strategy,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-10,
            max_iter: 5000,
            restart: 50,
            direct_threshold: 20_000,
            preconditioner: PreconditionerKind::Ilu0,
            strategy: Strategy::Auto,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Direct,
    Gmres,
    /// Krylov stagnated and the direct factorisation took over.
    GmresThenDirect,
}

#[derive(Debug, Clone)]
pub struct SolveStats {
    pub method: Method,
    pub iterations: usize,
    /// Final `||Ax - b|| / ||b||`.
    pub relative_residual: f64,
    pub residual_history: Vec<f64>,
    pub reused_factorisation: bool,
}

fn relative_residual(a: &CsrMatrix, x: &[f64], b: &[f64]) -> f64 {
    let ax = a.apply(x);
    let r: f64 = ax
        .iter()
        .zip(b)
        .map(|(p, q)| (p - q) * (p - q))
        .sum::<f64>()
        .sqrt();
    let bn = norm2(b);
    if bn == 0.0 {
        r
    } else {
        r / bn
    }
}

/// Normwise backward error `||b - A x|| / (||A|| ||x|| + ||b||)` in the
/// infinity norm.
fn backward_error(a: &CsrMatrix, x: &[f64], b: &[f64]) -> f64 {
    let ax = a.apply(x);
    let r = ax.iter().zip(b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
    let norm_a = (0..a.n())
        .map(|i| a.row(i).map(|(_, v)| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let inf = |v: &[f64]| v.iter().map(|t| t.abs()).fold(0.0, f64::max);
    let denom = norm_a * inf(x) + inf(b);
    if denom == 0.0 {
        r
    } else {
        r / denom
    }
}

/// Solve a constrained system with the default cache-less solver.
pub fn solve(system: &SparseSystem, opts: &SolveOptions) -> Result<(Vec<f64>, SolveStats)> {
    LinearSolver::new(*opts).solve(&system.matrix, &system.rhs, None)
}

/// Linear solver that keeps the last direct factorisation and reuses it
/// whenever the next matrix is bitwise identical.
#[derive(Debug)]
pub struct LinearSolver {
    opts: SolveOptions,
    cached: Option<(CsrMatrix, BandedLu)>,
}

impl LinearSolver {
    pub fn new(opts: SolveOptions) -> Self {
        LinearSolver { opts, cached: None }
    }

    pub fn options(&self) -> &SolveOptions {
        &self.opts
    }

    fn direct(&mut self, a: &CsrMatrix, b: &[f64]) -> Result<(Vec<f64>, bool)> {
        let reused = matches!(&self.cached, Some((m, _)) if m == a);
        if !reused {
            let lu = BandedLu::factor(a)?;
            self.cached = Some((a.clone(), lu));
        }
        let (_, lu) = self.cached.as_ref().expect("factorisation cached above");
        let mut x = b.to_vec();
        lu.solve_in_place(&mut x);
        Ok((x, reused))
    }

    pub fn solve(
        &mut self,
        a: &CsrMatrix,
        b: &[f64],
        guess: Option<&[f64]>,
    ) -> Result<(Vec<f64>, SolveStats)> {
        let n = a.n();
        if b.len() != n {
            return Err(Error::numerical(format!(
                "right-hand side has length {} for a {n}x{n} system",
                b.len()
            )));
        }
        if let Some(r) = (0..n).find(|&r| a.row(r).all(|(_, v)| v == 0.0)) {
            return Err(Error::numerical(format!("matrix row {r} is identically zero")));
        }
        let use_direct = match self.opts.strategy {
            Strategy::Direct => true,
            Strategy::Iterative => false,
            Strategy::Auto => n <= self.opts.direct_threshold,
        };
        let (x, method, iterations, mut history, reused) = if use_direct {
            let (x, reused) = self.direct(a, b)?;
            (x, Method::Direct, 0, Vec::new(), reused)
        } else {
            let mut x = guess.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
            let pre: Box<dyn Preconditioner> = match self.opts.preconditioner {
                PreconditionerKind::Jacobi => Box::new(Jacobi::new(a)?),
                PreconditionerKind::Ilu0 => Box::new(Ilu0::new(a)?),
            };
            let out = gmres(
                a,
                b,
                &mut x,
                pre.as_ref(),
                self.opts.restart,
                self.opts.tol,
                self.opts.max_iter,
            );
            if out.converged {
                (x, Method::Gmres, out.iterations, out.history, false)
            } else {
                log::warn!(
                    "GMRES stagnated after {} iterations (residual {:.3e}); falling back to direct",
                    out.iterations,
                    out.history.last().copied().unwrap_or(f64::NAN)
                );
                let (x, reused) = self.direct(a, b).map_err(|e| match e {
                    Error::Numerical { message, .. } => Error::Numerical {
                        message: format!("Krylov failed and direct fallback failed: {message}"),
                        residual_history: out.history.clone(),
                    },
                    other => other,
                })?;
                (x, Method::GmresThenDirect, out.iterations, out.history, reused)
            }
        };
        let mut x = x;
        let mut rel = relative_residual(a, &x, b);
        if method != Method::Gmres {
            // refinement with the cached factors recovers digits lost to
            // poor scaling between storage and stiffness
            for _ in 0..2 {
                if rel <= self.opts.tol {
                    break;
                }
                let ax = a.apply(&x);
                let r: Vec<f64> = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
                let (d, _) = self.direct(a, &r)?;
                x.iter_mut().zip(&d).for_each(|(xi, di)| *xi += di);
                rel = relative_residual(a, &x, b);
            }
            if rel > self.opts.tol {
                let eta = backward_error(a, &x, b);
                log::debug!("direct solve: relative residual {rel:.3e}, backward error {eta:.3e}");
                if eta <= self.opts.tol {
                    rel = eta;
                }
            }
        }
        history.push(rel);
        if !(rel <= self.opts.tol) {
            return Err(Error::Numerical {
                message: format!(
                    "linear solve missed tolerance: residual {rel:.3e} > {:.1e}",
                    self.opts.tol
                ),
                residual_history: history,
            });
        }
        Ok((
            x,
            SolveStats {
                method,
                iterations,
                relative_residual: rel,
                residual_history: history,
                reused_factorisation: reused,
            },
        ))
    }
}
