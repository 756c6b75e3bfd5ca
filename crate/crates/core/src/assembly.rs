//! Shared finite-element assembly helpers for Q1 meshes.
//!
//! Element contributions are computed in parallel and scattered into the
//! global matrix sequentially in element order, so results are bitwise
//! reproducible regardless of the thread count.

use std::collections::BTreeSet;

use rayon::prelude::*;

use crate::linsolve::CsrMatrix;
use crate::mesh::StructuredQuadMesh;

pub type Local4 = [[f64; 4]; 4];

/// Node-to-node sparsity of a Q1 mesh (every pair sharing an element).
pub fn q1_pattern(mesh: &StructuredQuadMesh) -> CsrMatrix {
    let mut rows = vec![BTreeSet::new(); mesh.num_nodes()];
    for e in 0..mesh.num_elements() {
        let nodes = mesh.element_nodes(e);
        for &a in &nodes {
            rows[a].extend(nodes.iter().copied());
        }
    }
    CsrMatrix::from_pattern(&rows)
}

/// Evaluate `local` for every element in parallel, preserving element order.
pub fn map_elements<T, F>(mesh: &StructuredQuadMesh, local: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..mesh.num_elements()).into_par_iter().map(local).collect()
}

pub fn scatter_matrix(global: &mut CsrMatrix, nodes: &[usize; 4], local: &Local4) {
    for (a, &r) in nodes.iter().enumerate() {
        for (b, &c) in nodes.iter().enumerate() {
            if local[a][b] != 0.0 {
                global.add(r, c, local[a][b]);
            }
        }
    }
}

pub fn scatter_vector(global: &mut [f64], nodes: &[usize; 4], local: &[f64; 4]) {
    for (a, &r) in nodes.iter().enumerate() {
        global[r] += local[a];
    }
}

/// Add `d` to the diagonal of `m` (pattern must contain the diagonal).
pub fn add_diagonal(m: &mut CsrMatrix, d: &[f64]) {
    for (i, &v) in d.iter().enumerate() {
        if v != 0.0 {
            m.add(i, i, v);
        }
    }
}

/// `y_i = sum_j m_ij (x_j - x_i)`, i.e. `m x` for an operator whose rows
/// sum to zero, evaluated so that constant fields map to exactly zero.
pub fn apply_zero_row_sum(m: &CsrMatrix, x: &[f64]) -> Vec<f64> {
    (0..m.n())
        .map(|i| m.row(i).map(|(j, v)| v * (x[j] - x[i])).sum())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pattern_has_nine_point_stencil() {
        let mesh = StructuredQuadMesh::new(3, 3, 1.0, 1.0).unwrap();
        let p = q1_pattern(&mesh);
        let interior = mesh.node_id(1, 1);
        assert_eq!(p.row(interior).count(), 9);
        assert_eq!(p.row(0).count(), 4);
        assert!(p.is_structurally_symmetric());
    }

    #[test]
    fn parallel_map_keeps_order() {
        let mesh = StructuredQuadMesh::new(17, 9, 1.0, 1.0).unwrap();
        let ids = map_elements(&mesh, |e| e);
        assert!(ids.iter().enumerate().all(|(i, &e)| i == e));
    }
}
