//! Uniform structured quadrilateral mesh with bilinear (Q1) elements.
//!
//! Nodes are numbered lexicographically with x running fastest:
//! `node(i, j) = j * (nx + 1) + i`. Element `e = j * nx + i` has its four
//! nodes in counter-clockwise order starting at the lower-left corner.

use crate::error::{Error, Result};

/// Reference-element corner coordinates, counter-clockwise.
pub const CORNERS: [[f64; 2]; 4] = [[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]];

const GAUSS_2: f64 = 0.577_350_269_189_625_8; // 1/sqrt(3)

/// 2x2 Gauss-Legendre points on the reference square; all weights are 1.
pub const GAUSS_2X2: [[f64; 2]; 4] = [
    [-GAUSS_2, -GAUSS_2],
    [GAUSS_2, -GAUSS_2],
    [GAUSS_2, GAUSS_2],
    [-GAUSS_2, GAUSS_2],
];

/// Two-point Gauss rule on [-1, 1]: (abscissa, weight).
pub const GAUSS_LINE_2: [(f64, f64); 2] = [(-GAUSS_2, 1.0), (GAUSS_2, 1.0)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Left, Side::Right, Side::Bottom, Side::Top];

    pub fn name(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
            Side::Bottom => "bottom",
            Side::Top => "top",
        }
    }

    pub fn from_name(s: &str) -> Option<Side> {
        Side::ALL.into_iter().find(|side| side.name() == s)
    }
}

/// Bilinear shape functions and their reference derivatives at `(xi, eta)`.
///
/// `dn[k] = [dN_k/dxi, dN_k/deta]`.
pub fn shape_eval(xi: f64, eta: f64) -> ([f64; 4], [[f64; 2]; 4]) {
    let mut n = [0.0; 4];
    let mut dn = [[0.0; 2]; 4];
    for (k, c) in CORNERS.iter().enumerate() {
        let a = 1.0 + c[0] * xi;
        let b = 1.0 + c[1] * eta;
        n[k] = 0.25 * a * b;
        dn[k] = [0.25 * c[0] * b, 0.25 * c[1] * a];
    }
    (n, dn)
}

#[derive(Debug, Clone)]
pub struct StructuredQuadMesh {
    nx: usize,
    ny: usize,
    lx: f64,
    ly: f64,
    coords: Vec<[f64; 2]>,
}

/// Geometry of one element evaluated at one quadrature point.
#[derive(Debug, Clone, Copy)]
pub struct QuadPoint {
    pub n: [f64; 4],
    /// Physical gradients of the shape functions.
    pub grad: [[f64; 2]; 4],
    /// Quadrature weight times Jacobian determinant.
    pub dv: f64,
    pub x: [f64; 2],
}

impl StructuredQuadMesh {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::config(format!(
                "mesh needs at least one element per direction, got {nx}x{ny}"
            )));
        }
        if !(lx > 0.0 && ly > 0.0 && lx.is_finite() && ly.is_finite()) {
            return Err(Error::config(format!(
                "mesh extents must be positive, got {lx} x {ly}"
            )));
        }
        let hx = lx / nx as f64;
        let hy = ly / ny as f64;
        let mut coords = Vec::with_capacity((nx + 1) * (ny + 1));
        for j in 0..=ny {
            for i in 0..=nx {
                let x = if i == nx { lx } else { i as f64 * hx };
                let y = if j == ny { ly } else { j as f64 * hy };
                coords.push([x, y]);
            }
        }
        Ok(StructuredQuadMesh {
            nx,
            ny,
            lx,
            ly,
            coords,
        })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn extent(&self) -> [f64; 2] {
        [self.lx, self.ly]
    }

    pub fn element_size(&self) -> [f64; 2] {
        [self.lx / self.nx as f64, self.ly / self.ny as f64]
    }

    pub fn num_nodes(&self) -> usize {
        (self.nx + 1) * (self.ny + 1)
    }

    pub fn num_elements(&self) -> usize {
        self.nx * self.ny
    }

    pub fn node_id(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }

    pub fn node(&self, id: usize) -> [f64; 2] {
        self.coords[id]
    }

    pub fn coords(&self) -> &[[f64; 2]] {
        &self.coords
    }

    pub fn element_nodes(&self, e: usize) -> [usize; 4] {
        let i = e % self.nx;
        let j = e / self.nx;
        let n0 = self.node_id(i, j);
        let n3 = self.node_id(i, j + 1);
        [n0, n0 + 1, n3 + 1, n3]
    }

    /// Isoparametric map from local to global coordinates.
    pub fn map_to_global(&self, e: usize, local: [f64; 2]) -> [f64; 2] {
        let (n, _) = shape_eval(local[0], local[1]);
        let mut x = [0.0; 2];
        for (k, &node) in self.element_nodes(e).iter().enumerate() {
            let c = self.coords[node];
            x[0] += n[k] * c[0];
            x[1] += n[k] * c[1];
        }
        x
    }

    /// Jacobian matrix `d(x, y)/d(xi, eta)` and its determinant.
    pub fn jacobian(&self, e: usize, local: [f64; 2]) -> ([[f64; 2]; 2], f64) {
        let (_, dn) = shape_eval(local[0], local[1]);
        let mut jac = [[0.0; 2]; 2];
        for (k, &node) in self.element_nodes(e).iter().enumerate() {
            let c = self.coords[node];
            for a in 0..2 {
                for b in 0..2 {
                    jac[a][b] += c[a] * dn[k][b];
                }
            }
        }
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        (jac, det)
    }

    /// Shape values, physical gradients, and volume weight at a local point.
    pub fn eval_at(&self, e: usize, local: [f64; 2], weight: f64) -> QuadPoint {
        let (n, dn) = shape_eval(local[0], local[1]);
        let (jac, det) = self.jacobian(e, local);
        let inv = [
            [jac[1][1] / det, -jac[0][1] / det],
            [-jac[1][0] / det, jac[0][0] / det],
        ];
        let mut grad = [[0.0; 2]; 4];
        for k in 0..4 {
            // grad N = J^{-T} dN/dxi
            grad[k][0] = inv[0][0] * dn[k][0] + inv[1][0] * dn[k][1];
            grad[k][1] = inv[0][1] * dn[k][0] + inv[1][1] * dn[k][1];
        }
        QuadPoint {
            n,
            grad,
            dv: weight * det,
            x: self.map_to_global(e, local),
        }
    }

    /// The four 2x2 Gauss points of element `e`.
    pub fn quadrature(&self, e: usize) -> [QuadPoint; 4] {
        GAUSS_2X2.map(|p| self.eval_at(e, p, 1.0))
    }

    /// Locate the element containing `x` and the local coordinates of `x` in it.
    ///
    /// Points on shared edges or corners resolve to the lowest element id.
    pub fn locate_point(&self, x: [f64; 2]) -> Option<(usize, [f64; 2])> {
        let tol = 1e-12 * self.lx.max(self.ly);
        if !(x[0] >= -tol && x[0] <= self.lx + tol && x[1] >= -tol && x[1] <= self.ly + tol) {
            return None;
        }
        let [hx, hy] = self.element_size();
        let i = lowest_cell(x[0], hx, self.nx, tol);
        let j = lowest_cell(x[1], hy, self.ny, tol);
        let e = j * self.nx + i;
        let origin = self.coords[self.node_id(i, j)];
        let xi = 2.0 * (x[0] - origin[0]) / hx - 1.0;
        let eta = 2.0 * (x[1] - origin[1]) / hy - 1.0;
        Some((e, [xi.clamp(-1.0, 1.0), eta.clamp(-1.0, 1.0)]))
    }

    /// Interpolate a nodal field at a physical point.
    pub fn interpolate(&self, field: &[f64], x: [f64; 2]) -> Option<f64> {
        let (e, local) = self.locate_point(x)?;
        let (n, _) = shape_eval(local[0], local[1]);
        Some(
            self.element_nodes(e)
                .iter()
                .zip(n)
                .map(|(&node, w)| w * field[node])
                .sum(),
        )
    }

    /// Samples of a nodal field along the horizontal line at height `y`, one
    /// per node column, as `(x, value)` pairs.
    pub fn horizontal_profile(&self, field: &[f64], y: f64) -> Option<Vec<(f64, f64)>> {
        let [hx, _] = self.element_size();
        (0..=self.nx)
            .map(|i| {
                let x = i as f64 * hx;
                self.interpolate(field, [x, y]).map(|v| (x, v))
            })
            .collect()
    }

    pub fn boundary_nodes(&self, side: Side) -> Vec<usize> {
        match side {
            Side::Bottom => (0..=self.nx).map(|i| self.node_id(i, 0)).collect(),
            Side::Top => (0..=self.nx).map(|i| self.node_id(i, self.ny)).collect(),
            Side::Left => (0..=self.ny).map(|j| self.node_id(0, j)).collect(),
            Side::Right => (0..=self.ny).map(|j| self.node_id(self.nx, j)).collect(),
        }
    }

    /// Boundary edges of one side as node pairs with their length.
    pub fn boundary_edges(&self, side: Side) -> Vec<([usize; 2], f64)> {
        let nodes = self.boundary_nodes(side);
        nodes
            .windows(2)
            .map(|w| {
                let a = self.coords[w[0]];
                let b = self.coords[w[1]];
                ([w[0], w[1]], ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt())
            })
            .collect()
    }

    pub fn is_boundary_node(&self, id: usize) -> bool {
        let i = id % (self.nx + 1);
        let j = id / (self.nx + 1);
        i == 0 || j == 0 || i == self.nx || j == self.ny
    }

    /// Area integral of a nodal field over the domain (2x2 Gauss).
    pub fn integrate(&self, field: &[f64]) -> f64 {
        (0..self.num_elements())
            .map(|e| {
                let nodes = self.element_nodes(e);
                self.quadrature(e)
                    .iter()
                    .map(|qp| {
                        let v: f64 = nodes.iter().zip(qp.n).map(|(&n, w)| w * field[n]).sum();
                        v * qp.dv
                    })
                    .sum::<f64>()
            })
            .sum()
    }
}

fn lowest_cell(x: f64, h: f64, n: usize, tol: f64) -> usize {
    let s = x / h;
    let mut i = s.floor().max(0.0) as usize;
    if i >= n {
        i = n - 1;
    }
    // On a grid line the lower neighbour also contains the point.
    if i > 0 && (x - i as f64 * h).abs() <= tol {
        i -= 1;
    }
    i
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn horizontal_profile_of_linear_field_is_exact() {
        let m = StructuredQuadMesh::new(6, 5, 3.0, 2.0).unwrap();
        let f: Vec<f64> = m.coords().iter().map(|c| 2.0 * c[0] + 3.0 * c[1]).collect();
        let line = m.horizontal_profile(&f, 0.7).unwrap();
        assert_eq!(line.len(), 7);
        for (x, v) in line {
            assert_relative_eq!(v, 2.0 * x + 2.1, epsilon = 1e-12);
        }
        assert!(m.horizontal_profile(&f, 2.5).is_none());
    }

    #[test]
    fn node_and_element_counts_of_the_spherical_mesh() {
        let m = StructuredQuadMesh::new(120, 120, 0.5e-3, 0.5e-3).unwrap();
        assert_eq!(m.num_nodes(), 14641);
        assert_eq!(m.num_elements(), 14400);
    }

    #[test]
    fn smallest_and_rectangular_meshes() {
        let m = StructuredQuadMesh::new(1, 1, 1.0, 1.0).unwrap();
        assert_eq!((m.num_nodes(), m.num_elements()), (4, 1));
        let m = StructuredQuadMesh::new(2, 3, 2.0, 3.0).unwrap();
        assert_eq!((m.num_nodes(), m.num_elements()), (12, 6));
        assert_eq!(m.element_size(), [1.0, 1.0]);
    }

    #[test]
    fn degenerate_dimensions_rejected() {
        assert!(StructuredQuadMesh::new(0, 3, 1.0, 1.0).is_err());
        assert!(StructuredQuadMesh::new(3, 3, 0.0, 1.0).is_err());
        assert!(StructuredQuadMesh::new(3, 3, 1.0, -1.0).is_err());
    }

    #[test]
    fn shape_values_at_centre_and_corners() {
        let (n, _) = shape_eval(0.0, 0.0);
        assert_eq!(n, [0.25; 4]);
        assert_eq!(shape_eval(-1.0, -1.0).0, [1.0, 0.0, 0.0, 0.0]);
        assert_eq!(shape_eval(1.0, -1.0).0, [0.0, 1.0, 0.0, 0.0]);
        for (j, c) in CORNERS.iter().enumerate() {
            let (n, _) = shape_eval(c[0], c[1]);
            for (i, v) in n.iter().enumerate() {
                assert_eq!(*v, if i == j { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn jacobian_positive_everywhere() {
        let m = StructuredQuadMesh::new(7, 5, 3.0, 0.2).unwrap();
        for e in 0..m.num_elements() {
            for p in GAUSS_2X2 {
                assert!(m.jacobian(e, p).1 > 0.0);
            }
        }
    }

    #[test]
    fn quadrature_is_exact_for_bilinear_products() {
        // integral over [-1,1]^2 of (a0 + a1 xi + a2 eta + a3 xi eta)(b0 + ...)
        let a = [0.3, -1.2, 0.7, 2.1];
        let b = [-0.4, 0.9, 1.5, -0.6];
        let f = |c: &[f64; 4], x: f64, y: f64| c[0] + c[1] * x + c[2] * y + c[3] * x * y;
        let numeric: f64 = GAUSS_2X2.iter().map(|p| f(&a, p[0], p[1]) * f(&b, p[0], p[1])).sum();
        // Odd moments vanish; <1>=4, <x^2>=<y^2>=4/3, <x^2 y^2>=4/9.
        let exact = 4.0 * a[0] * b[0]
            + 4.0 / 3.0 * a[1] * b[1]
            + 4.0 / 3.0 * a[2] * b[2]
            + 4.0 / 9.0 * a[3] * b[3];
        assert!((numeric - exact).abs() < 1e-13);
    }

    #[test]
    fn locate_centre_of_first_element() {
        let m = StructuredQuadMesh::new(4, 4, 1.0, 1.0).unwrap();
        let (e, local) = m.locate_point([0.125, 0.125]).unwrap();
        assert_eq!(e, 0);
        assert!(local[0].abs() < 1e-14 && local[1].abs() < 1e-14);
    }

    #[test]
    fn shared_edge_resolves_to_lowest_element() {
        let m = StructuredQuadMesh::new(4, 4, 1.0, 1.0).unwrap();
        // vertical edge between elements 0 and 1
        assert_eq!(m.locate_point([0.25, 0.1]).unwrap().0, 0);
        // corner shared by elements 0, 1, 4, 5
        assert_eq!(m.locate_point([0.25, 0.25]).unwrap().0, 0);
        // horizontal edge between elements 5 and 9
        assert_eq!(m.locate_point([0.3, 0.5]).unwrap().0, 5);
    }

    #[test]
    fn outside_points_not_found() {
        let m = StructuredQuadMesh::new(4, 4, 1.0, 1.0).unwrap();
        assert!(m.locate_point([1.5, 0.5]).is_none());
        assert!(m.locate_point([0.5, -0.01]).is_none());
    }

    #[test]
    fn boundary_sides() {
        let m = StructuredQuadMesh::new(3, 2, 3.0, 2.0).unwrap();
        assert_eq!(m.boundary_nodes(Side::Bottom), vec![0, 1, 2, 3]);
        assert_eq!(m.boundary_nodes(Side::Right), vec![3, 7, 11]);
        let len: f64 = m.boundary_edges(Side::Top).iter().map(|e| e.1).sum();
        assert_relative_eq!(len, 3.0);
    }

    proptest! {
        #[test]
        fn partition_of_unity(xi in -1.0f64..=1.0, eta in -1.0f64..=1.0) {
            let (n, dn) = shape_eval(xi, eta);
            prop_assert!((n.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            prop_assert!(dn.iter().map(|d| d[0]).sum::<f64>().abs() < 1e-14);
            prop_assert!(dn.iter().map(|d| d[1]).sum::<f64>().abs() < 1e-14);
        }

        #[test]
        fn locate_inverts_isoparametric_map(
            e in 0usize..35, xi in -0.999f64..0.999, eta in -0.999f64..0.999
        ) {
            let m = StructuredQuadMesh::new(7, 5, 0.7e-3, 0.3e-3).unwrap();
            let x = m.map_to_global(e, [xi, eta]);
            let (found, local) = m.locate_point(x).unwrap();
            prop_assert_eq!(found, e);
            let back = m.map_to_global(found, local);
            let tol = 1e-12 * 0.7e-3;
            prop_assert!((back[0] - x[0]).abs() <= tol && (back[1] - x[1]).abs() <= tol);
        }
    }
}
