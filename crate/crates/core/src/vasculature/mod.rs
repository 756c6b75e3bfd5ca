//! Discrete 1D vessel networks: topology, Hagen-Poiseuille flow, embedding
//! into the 2D mesh, and nanoparticle transport along the centrelines.

mod embed;
mod flow;
mod generate;
mod transport1d;

use std::fmt::Write as _;
use std::path::Path;

pub use embed::{embed_network, EmbeddingTable, LinePoint};
pub use flow::{solve_network_flow, FlowSolution};
pub use generate::{power_law_exponent_for_mean, power_law_quantile, NetworkSpec};
pub use transport1d::{advance_network_transport, LineExchange, NetworkGrid, NetworkTransport};

use crate::error::{Error, Result};

/// Default blood viscosity in Pa s.
pub const BLOOD_VISCOSITY: f64 = 3.0e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BcKind {
    InletPressure,
    OutletPressure,
    InletConcentration,
}

impl BcKind {
    pub fn name(self) -> &'static str {
        match self {
            BcKind::InletPressure => "inlet_p",
            BcKind::OutletPressure => "outlet_p",
            BcKind::InletConcentration => "inlet_conc",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "inlet_p" => Some(BcKind::InletPressure),
            "outlet_p" => Some(BcKind::OutletPressure),
            "inlet_conc" => Some(BcKind::InletConcentration),
            _ => None,
        }
    }

    pub fn is_pressure(self) -> bool {
        !matches!(self, BcKind::InletConcentration)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryCondition {
    pub node: usize,
    pub kind: BcKind,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub nodes: [usize; 2],
    pub radius: f64,
    pub collapsed: bool,
}

/// Graph of straight cylindrical segments.
#[derive(Debug, Clone, PartialEq)]
pub struct VesselNetwork {
    pub nodes: Vec<[f64; 2]>,
    pub segments: Vec<Segment>,
    pub bcs: Vec<BoundaryCondition>,
    pub viscosity: f64,
}

impl VesselNetwork {
    pub fn new(
        nodes: Vec<[f64; 2]>,
        segments: Vec<Segment>,
        bcs: Vec<BoundaryCondition>,
    ) -> Result<Self> {
        let net = VesselNetwork {
            nodes,
            segments,
            bcs,
            viscosity: BLOOD_VISCOSITY,
        };
        net.validate()?;
        Ok(net)
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_segments(&self) -> usize {
        self.segments.len()
    }

    pub fn segment_length(&self, s: usize) -> f64 {
        let [a, b] = self.segments[s].nodes;
        let (pa, pb) = (self.nodes[a], self.nodes[b]);
        (pb[0] - pa[0]).hypot(pb[1] - pa[1])
    }

    pub fn total_length(&self) -> f64 {
        (0..self.num_segments()).map(|s| self.segment_length(s)).sum()
    }

    /// Mean radius over the open (non-collapsed) segments.
    pub fn mean_radius(&self) -> f64 {
        let open: Vec<f64> = self
            .segments
            .iter()
            .filter(|s| !s.collapsed)
            .map(|s| s.radius)
            .collect();
        open.iter().sum::<f64>() / open.len().max(1) as f64
    }

    pub fn bcs_of(&self, kind: BcKind) -> impl Iterator<Item = &BoundaryCondition> + '_ {
        self.bcs.iter().filter(move |b| b.kind == kind)
    }

    /// Connected components over open segments; `None` for nodes touching
    /// only collapsed segments (or none at all).
    pub fn open_components(&self) -> Vec<Option<usize>> {
        let n = self.num_nodes();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        let mut touched = vec![false; n];
        for s in self.segments.iter().filter(|s| !s.collapsed) {
            let [a, b] = s.nodes;
            touched[a] = true;
            touched[b] = true;
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
        let mut label = vec![usize::MAX; n];
        let mut next = 0;
        let mut out = vec![None; n];
        for i in 0..n {
            if !touched[i] {
                continue;
            }
            let r = find(&mut parent, i);
            if label[r] == usize::MAX {
                label[r] = next;
                next += 1;
            }
            out[i] = Some(label[r]);
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_nodes();
        if !(self.viscosity > 0.0) {
            return Err(Error::config("blood viscosity must be positive"));
        }
        for (i, x) in self.nodes.iter().enumerate() {
            if !x[0].is_finite() || !x[1].is_finite() {
                return Err(Error::data(format!("network node {i}: non-finite coordinate")));
            }
        }
        for (k, s) in self.segments.iter().enumerate() {
            let [a, b] = s.nodes;
            if a >= n || b >= n {
                return Err(Error::data(format!("segment {k}: endpoint outside node list")));
            }
            if a == b || self.segment_length(k) <= 0.0 {
                return Err(Error::data(format!("segment {k}: zero length")));
            }
            if !s.collapsed && !(s.radius > 0.0 && s.radius.is_finite()) {
                return Err(Error::data(format!(
                    "segment {k}: radius {} must be positive on an open segment",
                    s.radius
                )));
            }
            if s.radius < 0.0 {
                return Err(Error::data(format!("segment {k}: negative radius")));
            }
        }
        let mut pressure_bc = vec![None; n];
        for bc in &self.bcs {
            if bc.node >= n {
                return Err(Error::data(format!(
                    "boundary condition on missing node {}",
                    bc.node
                )));
            }
            if !bc.value.is_finite() {
                return Err(Error::data(format!("node {}: non-finite BC value", bc.node)));
            }
            if bc.kind == BcKind::InletConcentration && !(0.0..=1.0).contains(&bc.value) {
                return Err(Error::data(format!(
                    "node {}: inlet concentration {} outside [0, 1]",
                    bc.node, bc.value
                )));
            }
            if bc.kind.is_pressure() {
                if let Some(prev) = pressure_bc[bc.node] {
                    if prev != bc.value {
                        return Err(Error::data(format!(
                            "node {}: conflicting pressure conditions",
                            bc.node
                        )));
                    }
                }
                pressure_bc[bc.node] = Some(bc.value);
            }
        }
        let comp = self.open_components();
        let inlets: Vec<usize> = self
            .bcs_of(BcKind::InletPressure)
            .filter_map(|b| comp[b.node])
            .collect();
        let connected = self
            .bcs_of(BcKind::OutletPressure)
            .filter_map(|b| comp[b.node])
            .any(|c| inlets.contains(&c));
        if !connected {
            return Err(Error::config(
                "network has no open path from an inlet to an outlet",
            ));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("NODES\n");
        for (i, x) in self.nodes.iter().enumerate() {
            let _ = writeln!(s, "{i} {:e} {:e}", x[0], x[1]);
        }
        s.push_str("SEGMENTS\n");
        for (k, seg) in self.segments.iter().enumerate() {
            let _ = writeln!(
                s,
                "{k} {} {} {:e} {}",
                seg.nodes[0],
                seg.nodes[1],
                seg.radius,
                u8::from(seg.collapsed)
            );
        }
        s.push_str("BC\n");
        for bc in &self.bcs {
            let _ = writeln!(s, "{} {} {:e}", bc.node, bc.kind.name(), bc.value);
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        #[derive(PartialEq)]
        enum Section {
            None,
            Nodes,
            Segments,
            Bc,
        }
        let mut section = Section::None;
        let mut nodes = Vec::new();
        let mut segments = Vec::new();
        let mut bcs = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |msg: &str| Error::data(format!("network file line {}: {msg}", lineno + 1));
            match line {
                "NODES" => {
                    section = Section::Nodes;
                    continue;
                }
                "SEGMENTS" => {
                    section = Section::Segments;
                    continue;
                }
                "BC" => {
                    section = Section::Bc;
                    continue;
                }
                _ => {}
            }
            let tok: Vec<&str> = line.split_whitespace().collect();
            let num = |i: usize| -> Result<f64> {
                tok.get(i)
                    .ok_or_else(|| bad("missing value"))?
                    .parse::<f64>()
                    .map_err(|_| bad(&format!("bad number '{}'", tok[i])))
            };
            let idx = |i: usize| -> Result<usize> {
                tok.get(i)
                    .ok_or_else(|| bad("missing value"))?
                    .parse::<usize>()
                    .map_err(|_| bad(&format!("bad index '{}'", tok[i])))
            };
            match section {
                Section::None => return Err(bad("data before any section header")),
                Section::Nodes => {
                    if tok.len() != 3 {
                        return Err(bad("expected 'id x y'"));
                    }
                    if idx(0)? != nodes.len() {
                        return Err(bad("node ids must be consecutive from 0"));
                    }
                    nodes.push([num(1)?, num(2)?]);
                }
                Section::Segments => {
                    if tok.len() != 5 {
                        return Err(bad("expected 'id node_a node_b radius collapsed'"));
                    }
                    if idx(0)? != segments.len() {
                        return Err(bad("segment ids must be consecutive from 0"));
                    }
                    let collapsed = match tok[4] {
                        "0" => false,
                        "1" => true,
                        _ => return Err(bad("collapsed flag must be 0 or 1")),
                    };
                    segments.push(Segment {
                        nodes: [idx(1)?, idx(2)?],
                        radius: num(3)?,
                        collapsed,
                    });
                }
                Section::Bc => {
                    if tok.len() != 3 {
                        return Err(bad("expected 'node kind value'"));
                    }
                    let kind = BcKind::from_name(tok[1])
                        .ok_or_else(|| bad(&format!("unknown BC kind '{}'", tok[1])))?;
                    bcs.push(BoundaryCondition {
                        node: idx(0)?,
                        kind,
                        value: num(2)?,
                    });
                }
            }
        }
        VesselNetwork::new(nodes, segments, bcs)
    }
}

pub fn load_network(path: &Path) -> Result<VesselNetwork> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    VesselNetwork::parse(&text)
}

pub fn save_network(network: &VesselNetwork, path: &Path) -> Result<()> {
    crate::io::write_atomic(path, network.to_text().as_bytes())
}

#[cfg(test)]
pub(crate) mod test_networks {
    use super::*;

    pub fn chain(points: &[[f64; 2]], radius: f64, p_in: f64, p_out: f64) -> VesselNetwork {
        let segments = (0..points.len() - 1)
            .map(|i| Segment {
                nodes: [i, i + 1],
                radius,
                collapsed: false,
            })
            .collect();
        let bcs = vec![
            BoundaryCondition {
                node: 0,
                kind: BcKind::InletPressure,
                value: p_in,
            },
            BoundaryCondition {
                node: points.len() - 1,
                kind: BcKind::OutletPressure,
                value: p_out,
            },
            BoundaryCondition {
                node: 0,
                kind: BcKind::InletConcentration,
                value: 2e-3,
            },
        ];
        VesselNetwork::new(points.to_vec(), segments, bcs).unwrap()
    }
}
