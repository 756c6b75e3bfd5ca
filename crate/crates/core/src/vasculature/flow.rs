use std::collections::BTreeSet;
use std::f64::consts::PI;

use super::VesselNetwork;
use crate::error::{Error, Result};
use crate::linsolve::{apply_dirichlet, solve, CsrMatrix, SolveOptions, SparseSystem, Strategy};

/// Nodal pressures and per-segment volumetric flow (positive from the first
/// to the second endpoint).
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSolution {
    pub pressure: Vec<f64>,
    pub flow: Vec<f64>,
}

impl FlowSolution {
    /// Net volumetric flow entering the network from outside at each node.
    pub fn external_inflow(&self, network: &VesselNetwork) -> Vec<f64> {
        let mut ext = vec![0.0; network.num_nodes()];
        for (k, s) in network.segments.iter().enumerate() {
            ext[s.nodes[0]] += self.flow[k];
            ext[s.nodes[1]] -= self.flow[k];
        }
        ext
    }

    /// Pressure at arc position `s` along segment `k`.
    pub fn pressure_along(&self, network: &VesselNetwork, k: usize, s: f64) -> f64 {
        let [a, b] = network.segments[k].nodes;
        let t = s / network.segment_length(k);
        self.pressure[a] + t * (self.pressure[b] - self.pressure[a])
    }
}

/// Hagen-Poiseuille conductance `pi R^4 / (8 mu L)`; zero when collapsed.
pub fn conductance(network: &VesselNetwork, k: usize) -> f64 {
    let s = &network.segments[k];
    if s.collapsed {
        return 0.0;
    }
    PI * s.radius.powi(4) / (8.0 * network.viscosity * network.segment_length(k))
}

/// Kirchhoff solve with pressure conditions at the inlet/outlet nodes.
pub fn solve_network_flow(network: &VesselNetwork) -> Result<FlowSolution> {
    let n = network.num_nodes();
    let comp = network.open_components();
    let mut fixed: Vec<Option<f64>> = vec![None; n];
    for bc in network.bcs.iter().filter(|b| b.kind.is_pressure()) {
        fixed[bc.node] = Some(bc.value);
    }
    let n_comp = comp.iter().flatten().max().map_or(0, |m| m + 1);
    let mut has_bc = vec![false; n_comp];
    for (i, c) in comp.iter().enumerate() {
        if let (Some(c), Some(_)) = (c, fixed[i]) {
            has_bc[*c] = true;
        }
    }
    if let Some(bad) = has_bc.iter().position(|&b| !b) {
        let members: Vec<usize> = (0..n).filter(|&i| comp[i] == Some(bad)).take(8).collect();
        return Err(Error::config(format!(
            "network component {bad} (nodes {members:?}...) has no pressure boundary condition"
        )));
    }

    let mut pattern = vec![BTreeSet::new(); n];
    for (i, row) in pattern.iter_mut().enumerate() {
        row.insert(i);
    }
    for s in network.segments.iter().filter(|s| !s.collapsed) {
        let [a, b] = s.nodes;
        pattern[a].insert(b);
        pattern[b].insert(a);
    }
    let mut a = CsrMatrix::from_pattern(&pattern);
    for (k, s) in network.segments.iter().enumerate() {
        let g = conductance(network, k);
        if g == 0.0 {
            continue;
        }
        let [i, j] = s.nodes;
        a.add(i, i, g);
        a.add(j, j, g);
        a.add(i, j, -g);
        a.add(j, i, -g);
    }
    let mut constraints: Vec<(usize, f64)> = fixed
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.map(|v| (i, v)))
        .collect();
    // nodes reached only by collapsed segments carry no flow; pin them
    for i in 0..n {
        if comp[i].is_none() && fixed[i].is_none() {
            constraints.push((i, 0.0));
        }
    }
    let mut sys = SparseSystem::new(a, vec![0.0; n]);
    apply_dirichlet(&mut sys, &constraints)?;
    let opts = SolveOptions {
        tol: 1e-13,
        strategy: Strategy::Direct,
        ..Default::default()
    };
    let (pressure, _) = solve(&sys, &opts)?;
    let flow = (0..network.num_segments())
        .map(|k| {
            let [i, j] = network.segments[k].nodes;
            conductance(network, k) * (pressure[i] - pressure[j])
        })
        .collect();
    Ok(FlowSolution { pressure, flow })
}
