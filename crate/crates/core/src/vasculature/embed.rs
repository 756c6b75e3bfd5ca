use std::ops::Range;

use super::VesselNetwork;
use crate::error::{Error, Result};
use crate::mesh::{shape_eval, StructuredQuadMesh, GAUSS_LINE_2};

/// One line-quadrature point on a segment centreline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinePoint {
    pub segment: usize,
    /// Arc-length position measured from the segment's first node.
    pub s: f64,
    /// Arc-length quadrature weight.
    pub weight: f64,
    pub x: [f64; 2],
    pub element: usize,
    pub local: [f64; 2],
    pub shape: [f64; 4],
}

/// Line quadrature of every segment, resolved into host elements.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub points: Vec<LinePoint>,
    pub ranges: Vec<Range<usize>>,
}

impl EmbeddingTable {
    pub fn segment_points(&self, k: usize) -> &[LinePoint] {
        &self.points[self.ranges[k].clone()]
    }

    /// Integral of a per-segment line density over the whole network.
    pub fn integrate<F: Fn(&LinePoint) -> f64>(&self, f: F) -> f64 {
        self.points.iter().map(|p| p.weight * f(p)).sum()
    }
}

/// Parameters in (0, 1) where the segment a->b crosses grid lines.
fn grid_crossings(a: [f64; 2], b: [f64; 2], h: [f64; 2], counts: [usize; 2]) -> Vec<f64> {
    let mut ts = vec![0.0, 1.0];
    for d in 0..2 {
        let (lo, hi) = (a[d].min(b[d]), a[d].max(b[d]));
        if hi - lo <= 0.0 {
            continue;
        }
        let first = (lo / h[d]).floor() as i64 + 1;
        let last = (hi / h[d]).ceil() as i64 - 1;
        for k in first.max(0)..=last.min(counts[d] as i64) {
            let t = (k as f64 * h[d] - a[d]) / (b[d] - a[d]);
            if t > 0.0 && t < 1.0 {
                ts.push(t);
            }
        }
    }
    ts.sort_by(f64::total_cmp);
    ts.dedup_by(|x, y| (*x - *y).abs() < 1e-12);
    ts
}

/// Split every segment at element boundaries, subdivide pieces to at most
/// half the smaller element edge, and place two Gauss points per piece.
pub fn embed_network(network: &VesselNetwork, mesh: &StructuredQuadMesh) -> Result<EmbeddingTable> {
    let [lx, ly] = mesh.extent();
    let h = mesh.element_size();
    let tol = 1e-12 * lx.max(ly);
    for (k, seg) in network.segments.iter().enumerate() {
        for &n in &seg.nodes {
            let x = network.nodes[n];
            if x[0] < -tol || x[0] > lx + tol || x[1] < -tol || x[1] > ly + tol {
                return Err(Error::config(format!(
                    "segment {k}: endpoint ({}, {}) lies outside the mesh domain",
                    x[0], x[1]
                )));
            }
        }
    }
    let max_piece = 0.5 * h[0].min(h[1]);
    let mut points = Vec::new();
    let mut ranges = Vec::with_capacity(network.num_segments());
    for (k, seg) in network.segments.iter().enumerate() {
        let start = points.len();
        let a = network.nodes[seg.nodes[0]];
        let b = network.nodes[seg.nodes[1]];
        let len = network.segment_length(k);
        let ts = grid_crossings(a, b, h, [mesh.nx(), mesh.ny()]);
        for w in ts.windows(2) {
            let (t0, t1) = (w[0], w[1]);
            let mid = lerp(a, b, 0.5 * (t0 + t1));
            let (element, _) = mesh.locate_point(clamp_to(mid, lx, ly)).ok_or_else(|| {
                Error::config(format!("segment {k}: centreline leaves the mesh domain"))
            })?;
            let origin = mesh.node(mesh.element_nodes(element)[0]);
            let pieces = (((t1 - t0) * len / max_piece).ceil() as usize).max(1);
            let dt = (t1 - t0) / pieces as f64;
            for p in 0..pieces {
                let (u0, u1) = (t0 + p as f64 * dt, t0 + (p + 1) as f64 * dt);
                for &(g, wg) in &GAUSS_LINE_2 {
                    let t = 0.5 * (u0 + u1) + 0.5 * (u1 - u0) * g;
                    let x = lerp(a, b, t);
                    let local = [
                        (2.0 * (x[0] - origin[0]) / h[0] - 1.0).clamp(-1.0, 1.0),
                        (2.0 * (x[1] - origin[1]) / h[1] - 1.0).clamp(-1.0, 1.0),
                    ];
                    let (shape, _) = shape_eval(local[0], local[1]);
                    points.push(LinePoint {
                        segment: k,
                        s: t * len,
                        weight: 0.5 * (u1 - u0) * len * wg,
                        x,
                        element,
                        local,
                        shape,
                    });
                }
            }
        }
        ranges.push(start..points.len());
    }
    Ok(EmbeddingTable { points, ranges })
}

fn lerp(a: [f64; 2], b: [f64; 2], t: f64) -> [f64; 2] {
    [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
}

fn clamp_to(x: [f64; 2], lx: f64, ly: f64) -> [f64; 2] {
    [x[0].clamp(0.0, lx), x[1].clamp(0.0, ly)]
}

#[cfg(test)]
mod tests {
    use super::super::test_networks::chain;
    use super::super::NetworkSpec;
    use super::*;
    use std::collections::BTreeSet;

    fn mesh() -> StructuredQuadMesh {
        StructuredQuadMesh::new(10, 10, 1e-3, 1e-3).unwrap()
    }

    #[test]
    fn midline_segment_weights_sum_to_length() {
        // along the horizontal midline of element row 4
        let net = chain(&[[0.2e-3, 0.45e-3], [0.3e-3, 0.45e-3]], 5e-6, 10.0, 0.0);
        let t = embed_network(&net, &mesh()).unwrap();
        let total: f64 = t.segment_points(0).iter().map(|p| p.weight).sum();
        assert!((total - 1e-4).abs() < 1e-10 * 1e-4);
        assert!(t.points.iter().all(|p| p.element == 42));
    }

    #[test]
    fn crossing_three_elements() {
        let net = chain(&[[0.05e-3, 0.55e-3], [0.25e-3, 0.55e-3]], 5e-6, 10.0, 0.0);
        let t = embed_network(&net, &mesh()).unwrap();
        let hosts: BTreeSet<usize> = t.points.iter().map(|p| p.element).collect();
        assert_eq!(hosts, BTreeSet::from([50, 51, 52]));
        for p in &t.points {
            let x = mesh().map_to_global(p.element, p.local);
            assert!((x[0] - p.x[0]).abs() < 1e-15 && (x[1] - p.x[1]).abs() < 1e-15);
        }
    }

    #[test]
    fn unit_density_integrates_to_network_length() {
        let spec = NetworkSpec::default();
        let net = spec.generate().unwrap();
        let m = StructuredQuadMesh::new(54, 70, spec.extent[0], spec.extent[1]).unwrap();
        let t = embed_network(&net, &m).unwrap();
        let total = t.integrate(|_| 1.0);
        let exact = net.total_length();
        assert!((total - exact).abs() <= 1e-10 * exact, "{total} vs {exact}");
        for k in 0..net.num_segments() {
            let s: f64 = t.segment_points(k).iter().map(|p| p.weight).sum();
            assert!((s - net.segment_length(k)).abs() <= 1e-10 * net.segment_length(k));
        }
    }

    #[test]
    fn pieces_respect_half_edge_limit() {
        let net = chain(&[[0.0, 0.0], [1e-3, 1e-3]], 5e-6, 10.0, 0.0);
        let t = embed_network(&net, &mesh()).unwrap();
        let max_w = t.points.iter().fold(0.0f64, |m, p| m.max(p.weight));
        // each piece has two points of half its length
        assert!(2.0 * max_w <= 0.5e-4 * (1.0 + 1e-12));
    }

    #[test]
    fn endpoint_outside_is_rejected() {
        let net = chain(&[[0.5e-3, 0.5e-3], [1.5e-3, 0.5e-3]], 5e-6, 10.0, 0.0);
        let err = embed_network(&net, &mesh()).unwrap_err().to_string();
        assert!(err.contains("segment 0"), "{err}");
    }
}
