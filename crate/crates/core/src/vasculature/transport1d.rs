use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::ops::Range;

use super::{BcKind, EmbeddingTable, FlowSolution, VesselNetwork};
use crate::error::{Error, Result};
use crate::linsolve::{cuthill_mckee, CsrMatrix, LinearSolver, SolveOptions, Strategy};

/// One linear 1D cell, oriented like its parent segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub nodes: [usize; 2],
    pub segment: usize,
    pub length: f64,
}

/// Refined 1D grid: every segment split into equal linear cells.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGrid {
    pub points: Vec<[f64; 2]>,
    pub cells: Vec<Cell>,
    pub segment_cells: Vec<Range<usize>>,
    /// Grid index of each network node.
    pub node_index: Vec<usize>,
}

impl NetworkGrid {
    pub fn new(network: &VesselNetwork, max_cell: f64) -> Result<Self> {
        if !(max_cell > 0.0) {
            return Err(Error::config("1D cell length must be positive"));
        }
        let n0 = network.num_nodes();
        let mut points = network.nodes.clone();
        let mut cells = Vec::new();
        let mut segment_cells = Vec::with_capacity(network.num_segments());
        for (k, seg) in network.segments.iter().enumerate() {
            let len = network.segment_length(k);
            let m = ((len / max_cell).ceil() as usize).max(1);
            let (a, b) = (network.nodes[seg.nodes[0]], network.nodes[seg.nodes[1]]);
            let start = cells.len();
            let mut prev = seg.nodes[0];
            for c in 0..m {
                let next = if c + 1 == m {
                    seg.nodes[1]
                } else {
                    let t = (c + 1) as f64 / m as f64;
                    points.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
                    points.len() - 1
                };
                cells.push(Cell {
                    nodes: [prev, next],
                    segment: k,
                    length: len / m as f64,
                });
                prev = next;
            }
            segment_cells.push(start..cells.len());
        }
        // renumber for a narrow band
        let mut adj = vec![Vec::new(); points.len()];
        for c in &cells {
            adj[c.nodes[0]].push(c.nodes[1]);
            adj[c.nodes[1]].push(c.nodes[0]);
        }
        let order = cuthill_mckee(&adj);
        let mut new_id = vec![0; points.len()];
        for (k, &old) in order.iter().enumerate() {
            new_id[old] = k;
        }
        let points = order.iter().map(|&old| points[old]).collect();
        for c in &mut cells {
            c.nodes = [new_id[c.nodes[0]], new_id[c.nodes[1]]];
        }
        let node_index = (0..n0).map(|i| new_id[i]).collect();
        Ok(NetworkGrid {
            points,
            cells,
            segment_cells,
            node_index,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Grid nodes and linear weights of arc position `s` on segment `k`.
    pub fn locate(&self, k: usize, s: f64) -> ([usize; 2], [f64; 2]) {
        let range = self.segment_cells[k].clone();
        let m = range.len();
        let h = self.cells[range.start].length;
        let c = ((s / h).floor().max(0.0) as usize).min(m - 1);
        let cell = self.cells[range.start + c];
        let f = (s / h - c as f64).clamp(0.0, 1.0);
        (cell.nodes, [1.0 - f, f])
    }

    pub fn value_at(&self, field: &[f64], k: usize, s: f64) -> f64 {
        let (n, w) = self.locate(k, s);
        w[0] * field[n[0]] + w[1] * field[n[1]]
    }
}

/// Exchange coefficients at each embedding point, per unit centreline length.
///
/// The vessel loses `(inter/2)(w_v + w_l) + trans <w_v - w_l>_+` in kg/(m s),
/// where `w_l` is the lagged IF mass fraction at the point.
#[derive(Debug, Clone, PartialEq)]
pub struct LineExchange {
    pub inter: Vec<f64>,
    pub trans: Vec<f64>,
    pub omega_if: Vec<f64>,
}

/// Nanoparticle mass fraction along the network.
#[derive(Debug)]
pub struct NetworkTransport {
    pub grid: NetworkGrid,
    pub omega: Vec<f64>,
    pub diffusivity: f64,
    pub rho_v: f64,
    solver: LinearSolver,
}

impl Clone for NetworkTransport {
    fn clone(&self) -> Self {
        NetworkTransport {
            grid: self.grid.clone(),
            omega: self.omega.clone(),
            diffusivity: self.diffusivity,
            rho_v: self.rho_v,
            solver: LinearSolver::new(*self.solver.options()),
        }
    }
}

const MAX_PICARD: usize = 5;

impl NetworkTransport {
    pub fn new(grid: NetworkGrid, diffusivity: f64, rho_v: f64) -> Self {
        let n = grid.len();
        NetworkTransport {
            grid,
            omega: vec![0.0; n],
            diffusivity,
            rho_v,
            solver: LinearSolver::new(SolveOptions {
                strategy: Strategy::Direct,
                ..Default::default()
            }),
        }
    }

    /// Mass fraction at the network nodes.
    pub fn node_values(&self) -> Vec<f64> {
        self.grid.node_index.iter().map(|&g| self.omega[g]).collect()
    }

    /// Mean mass fraction on each segment (average of its grid nodes).
    pub fn segment_means(&self) -> Vec<f64> {
        self.grid
            .segment_cells
            .iter()
            .map(|r| {
                let cells = &self.grid.cells[r.clone()];
                cells
                    .iter()
                    .map(|c| 0.5 * (self.omega[c.nodes[0]] + self.omega[c.nodes[1]]))
                    .sum::<f64>()
                    / cells.len() as f64
            })
            .collect()
    }

    /// Lumped nodal volumes `sum A l / 2` over open cells.
    pub fn lumped_volume(&self, network: &VesselNetwork) -> Vec<f64> {
        let mut m = vec![0.0; self.grid.len()];
        for c in &self.grid.cells {
            let seg = &network.segments[c.segment];
            if seg.collapsed {
                continue;
            }
            let a = PI * seg.radius * seg.radius;
            m[c.nodes[0]] += 0.5 * a * c.length;
            m[c.nodes[1]] += 0.5 * a * c.length;
        }
        m
    }

    /// Total nanoparticle mass in the vessels, `rho_v sum M_i w_i`.
    pub fn total_mass(&self, network: &VesselNetwork) -> f64 {
        self.rho_v
            * self
                .lumped_volume(network)
                .iter()
                .zip(&self.omega)
                .map(|(m, w)| m * w)
                .sum::<f64>()
    }

    /// One backward-Euler step. `inlet` is the injected mass fraction while
    /// injection is active; otherwise inflow carries no particles.
    pub fn advance(
        &mut self,
        network: &VesselNetwork,
        flow: &FlowSolution,
        dt: f64,
        inlet: Option<f64>,
        exchange: Option<(&EmbeddingTable, &LineExchange)>,
    ) -> Result<()> {
        if !(dt > 0.0) {
            return Err(Error::config(format!("time step must be positive, got {dt}")));
        }
        let grid = &self.grid;
        let n = grid.len();
        let mass = self.lumped_volume(network);
        let mut pattern = vec![BTreeSet::new(); n];
        for (i, row) in pattern.iter_mut().enumerate() {
            row.insert(i);
        }
        for c in &grid.cells {
            pattern[c.nodes[0]].insert(c.nodes[1]);
            pattern[c.nodes[1]].insert(c.nodes[0]);
        }
        let mut base = CsrMatrix::from_pattern(&pattern);
        let mut rhs0 = vec![0.0; n];
        for i in 0..n {
            base.add(i, i, mass[i] / dt);
            rhs0[i] = mass[i] / dt * self.omega[i];
        }
        let mut outflow = vec![0.0; n];
        for c in &grid.cells {
            let seg = &network.segments[c.segment];
            if seg.collapsed {
                continue;
            }
            let area = PI * seg.radius * seg.radius;
            let d = area * self.diffusivity / c.length;
            let [i, j] = c.nodes;
            base.add(i, i, d);
            base.add(j, j, d);
            base.add(i, j, -d);
            base.add(j, i, -d);
            let q = flow.flow[c.segment];
            let (up, down) = if q >= 0.0 { (i, j) } else { (j, i) };
            let q = q.abs();
            base.add(up, up, q);
            base.add(down, up, -q);
            outflow[up] += q;
            outflow[down] -= q;
        }
        // external exchange at network boundary nodes
        let mut inlet_nodes = vec![false; n];
        for bc in network.bcs_of(BcKind::InletConcentration) {
            inlet_nodes[grid.node_index[bc.node]] = true;
        }
        for i in 0..n {
            let net_out = outflow[i];
            if net_out < 0.0 {
                base.add(i, i, -net_out);
            }
        }
        let mut dirichlet: Vec<(usize, f64)> = Vec::new();
        if let Some(w) = inlet {
            for (i, &flag) in inlet_nodes.iter().enumerate() {
                if flag {
                    dirichlet.push((i, w));
                }
            }
        }
        for (i, &m) in mass.iter().enumerate() {
            if m == 0.0 {
                dirichlet.push((i, 0.0));
            }
        }

        // exchange: per grid node, lumped weights of each line point
        let mut links: Vec<(usize, f64, usize)> = Vec::new();
        if let Some((table, _)) = exchange {
            for (p, lp) in table.points.iter().enumerate() {
                if network.segments[lp.segment].collapsed {
                    continue;
                }
                let (nodes, w) = grid.locate(lp.segment, lp.s);
                for k in 0..2 {
                    if w[k] > 0.0 {
                        links.push((nodes[k], lp.weight * w[k] / self.rho_v, p));
                    }
                }
            }
        }
        // Inflow into the vessel is lagged. Outward filtration drags the mean
        // mass fraction, except that a vessel leaner than the IF loses at most
        // its own content, which keeps the vessel field non-negative.
        let (lin, mut rhs_lin) = (base.clone(), rhs0.clone());
        if let Some((_, ex)) = exchange {
            for &(i, wt, p) in &links {
                let a = ex.inter[p];
                if a < 0.0 {
                    rhs_lin[i] -= 0.5 * a * wt * (self.omega[i] + ex.omega_if[p]);
                }
            }
        }
        let mut active: Vec<bool> = links
            .iter()
            .map(|&(i, _, p)| exchange.is_some_and(|(_, ex)| self.omega[i] > ex.omega_if[p]))
            .collect();
        let mut omega = self.omega.clone();
        for sweep in 0..MAX_PICARD {
            let (mut a, mut b) = (lin.clone(), rhs_lin.clone());
            if let Some((_, ex)) = exchange {
                for (l, &(i, wt, p)) in links.iter().enumerate() {
                    let drag = ex.inter[p];
                    if drag >= 0.0 {
                        if active[l] {
                            a.add(i, i, 0.5 * drag * wt);
                            b[i] -= 0.5 * drag * wt * ex.omega_if[p];
                        } else {
                            a.add(i, i, drag * wt);
                        }
                    }
                    if active[l] {
                        a.add(i, i, ex.trans[p] * wt);
                        b[i] += ex.trans[p] * wt * ex.omega_if[p];
                    }
                }
            }
            let mut sys = crate::linsolve::SparseSystem::new(a, b);
            crate::linsolve::apply_dirichlet(&mut sys, &dirichlet)?;
            let (x, _) = self.solver.solve(&sys.matrix, &sys.rhs, Some(&omega))?;
            omega = x;
            let Some((_, ex)) = exchange else { break };
            let next: Vec<bool> = links
                .iter()
                .map(|&(i, _, p)| omega[i] > ex.omega_if[p])
                .collect();
            if next == active {
                break;
            }
            if sweep + 1 == MAX_PICARD {
                log::debug!("network transport: active set still changing after {MAX_PICARD} sweeps");
            }
            active = next;
        }
        if omega.iter().any(|w| !w.is_finite()) {
            return Err(Error::numerical("non-finite vessel mass fraction"));
        }
        self.omega = omega;
        Ok(())
    }
}

/// Free-function form of [`NetworkTransport::advance`].
pub fn advance_network_transport(
    state: &mut NetworkTransport,
    network: &VesselNetwork,
    flow: &FlowSolution,
    dt: f64,
    inlet: Option<f64>,
    exchange: Option<(&EmbeddingTable, &LineExchange)>,
) -> Result<()> {
    state.advance(network, flow, dt, inlet, exchange)
}

#[cfg(test)]
mod tests {
    use super::super::test_networks::chain;
    use super::super::{solve_network_flow, NetworkSpec};
    use super::*;

    fn straight(p_in: f64) -> VesselNetwork {
        chain(&[[0.0, 0.0], [2e-3, 0.0]], 10e-6, p_in, 0.0)
    }

    #[test]
    fn uniform_inlet_state_is_steady() {
        let net = straight(50.0);
        let flow = solve_network_flow(&net).unwrap();
        let grid = NetworkGrid::new(&net, 20e-6).unwrap();
        let mut t = NetworkTransport::new(grid, 1.2955e-11, 1000.0);
        t.omega.iter_mut().for_each(|w| *w = 2e-3);
        for _ in 0..5 {
            t.advance(&net, &flow, 60.0, Some(2e-3), None).unwrap();
        }
        assert!(t.omega.iter().all(|w| (w - 2e-3).abs() < 1e-15));
    }

    #[test]
    fn no_flow_no_diffusion_keeps_field() {
        let net = straight(0.0);
        let flow = solve_network_flow(&net).unwrap();
        let grid = NetworkGrid::new(&net, 50e-6).unwrap();
        let mut t = NetworkTransport::new(grid, 0.0, 1000.0);
        t.omega = (0..t.grid.len()).map(|i| (i as f64 * 0.37).sin().abs() * 1e-3).collect();
        let before = t.omega.clone();
        t.advance(&net, &flow, 60.0, None, None).unwrap();
        for (a, b) in before.iter().zip(&t.omega) {
            assert!((a - b).abs() <= 1e-15 * a.abs().max(1e-18));
        }
    }

    #[test]
    fn advected_front_position() {
        let net = straight(20.0);
        let flow = solve_network_flow(&net).unwrap();
        let h = 5e-6;
        let grid = NetworkGrid::new(&net, h).unwrap();
        let mut t = NetworkTransport::new(grid, 0.0, 1000.0);
        let area = PI * 1e-10;
        let speed = flow.flow[0] / area;
        // half a cell per step, 200 steps: the front travels 100 cells
        let dt = 0.5 * h / speed;
        let steps = 200;
        for _ in 0..steps {
            t.advance(&net, &flow, dt, Some(1.0), None).unwrap();
        }
        // upwind smears the front; its 1/2 level tracks (Q/A) t
        let expected = speed * dt * steps as f64;
        let mut pts: Vec<(f64, f64)> = (0..t.grid.len())
            .map(|i| (t.grid.points[i][0], t.omega[i]))
            .collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let front = pts
            .windows(2)
            .find(|w| w[0].1 >= 0.5 && w[1].1 < 0.5)
            .map(|w| w[0].0 + (w[0].1 - 0.5) / (w[0].1 - w[1].1) * (w[1].0 - w[0].0))
            .unwrap();
        assert!((front - expected).abs() <= h, "front {front}, expected {expected}");
    }

    #[test]
    fn mass_conserved_without_exchange_or_boundary_flux() {
        let net = straight(0.0);
        let flow = solve_network_flow(&net).unwrap();
        let grid = NetworkGrid::new(&net, 20e-6).unwrap();
        let mut t = NetworkTransport::new(grid, 1e-9, 1000.0);
        t.omega = (0..t.grid.len())
            .map(|i| if t.grid.points[i][0] < 0.5e-3 { 1e-3 } else { 0.0 })
            .collect();
        let m0 = t.total_mass(&net);
        for _ in 0..10 {
            t.advance(&net, &flow, 10.0, None, None).unwrap();
            let m = t.total_mass(&net);
            assert!((m - m0).abs() <= 1e-10 * m0);
        }
    }

    #[test]
    fn maximum_principle_on_generated_network() {
        let net = NetworkSpec::default().generate().unwrap();
        let flow = solve_network_flow(&net).unwrap();
        let grid = NetworkGrid::new(&net, 20e-6).unwrap();
        let mut t = NetworkTransport::new(grid, 1.2955e-11, 1000.0);
        for step in 0..20 {
            let inlet = (step < 10).then_some(2e-3);
            t.advance(&net, &flow, 60.0, inlet, None).unwrap();
            assert!(t.omega.iter().all(|&w| (-1e-15..=2e-3 + 1e-15).contains(&w)));
        }
    }

    #[test]
    fn rejects_non_positive_step() {
        let net = straight(1.0);
        let flow = solve_network_flow(&net).unwrap();
        let mut t = NetworkTransport::new(NetworkGrid::new(&net, 1e-4).unwrap(), 0.0, 1000.0);
        assert!(t.advance(&net, &flow, 0.0, None, None).is_err());
    }
}
