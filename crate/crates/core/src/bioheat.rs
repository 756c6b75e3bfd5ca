//! Summed multiphase heat balance under local thermal equilibrium.
//!
//! All phases share one temperature. Heat capacity and conductivity are
//! volume-fraction weighted sums over solid, tumour cells, host cells, IF and
//! blood; convection is carried by the IF Darcy flux. Perfusion cooling is
//! either a Pennes-type volume sink or a per-length sink along discrete
//! vessels, and outer sides may exchange heat through a Robin condition.

use std::f64::consts::PI;

use crate::assembly::{apply_zero_row_sum, map_elements, q1_pattern, scatter_matrix, scatter_vector, Local4};
use crate::error::{Error, Result};
use crate::fields::{darcy_velocity, PhaseFields, PhaseFractions, PointFields, TransportCoefficients};
use crate::linsolve::{apply_dirichlet, CsrMatrix, LinearSolver, SolveOptions, SparseSystem};
use crate::mesh::{Side, StructuredQuadMesh};
use crate::vasculature::{EmbeddingTable, VesselNetwork};

/// One value per phase: solid, tumour cells, host cells, IF, blood.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerPhase {
    pub solid: f64,
    pub tumour: f64,
    pub host: f64,
    pub fluid: f64,
    pub vessel: f64,
}

impl PerPhase {
    pub const fn uniform(v: f64) -> Self {
        PerPhase {
            solid: v,
            tumour: v,
            host: v,
            fluid: v,
            vessel: v,
        }
    }

    pub fn as_array(&self) -> [f64; 5] {
        [self.solid, self.tumour, self.host, self.fluid, self.vessel]
    }

    pub fn weighted(&self, f: &PhaseFractions) -> f64 {
        self.as_array().iter().zip(f.as_array()).map(|(a, b)| a * b).sum()
    }
}

/// How blood perfusion removes heat.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PerfusionSink {
    None,
    /// `rho_v c_v w (T - T_b)` per volume.
    Lumped,
    /// `2 pi R beta (T - T_b)` per vessel length.
    Discrete,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThermalParams {
    pub heat_capacity: PerPhase,
    pub density: PerPhase,
    pub conductivity: PerPhase,
    /// Perfusion rate `w` (1/s).
    pub perfusion: f64,
    /// Wall heat exchange coefficient of discrete vessels (W/(m^2 K)).
    pub vessel_exchange: f64,
    /// Robin coefficient per outer side; `None` keeps the side insulated.
    pub robin: [Option<f64>; 4],
    pub body_temperature: f64,
}

impl Default for ThermalParams {
    fn default() -> Self {
        ThermalParams {
            heat_capacity: PerPhase::uniform(3470.0),
            density: PerPhase::uniform(1000.0),
            conductivity: PerPhase::uniform(0.51),
            perfusion: 0.0,
            vessel_exchange: 20.0,
            robin: [None; 4],
            body_temperature: 310.15,
        }
    }
}

fn side_index(side: Side) -> usize {
    Side::ALL.iter().position(|&s| s == side).expect("side listed in ALL")
}

impl ThermalParams {
    pub fn robin_on(&self, side: Side) -> Option<f64> {
        self.robin[side_index(side)]
    }

    pub fn set_robin(&mut self, side: Side, beta: Option<f64>) {
        self.robin[side_index(side)] = beta;
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("heat capacity", &self.heat_capacity),
            ("density", &self.density),
            ("conductivity", &self.conductivity),
        ] {
            if p.as_array().iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return Err(Error::config(format!("every phase {name} must be positive")));
            }
        }
        if !(self.perfusion >= 0.0) {
            return Err(Error::config("perfusion rate must be non-negative"));
        }
        if !(self.vessel_exchange >= 0.0) {
            return Err(Error::config("vessel heat exchange coefficient must be non-negative"));
        }
        if self.robin.iter().flatten().any(|b| !(*b >= 0.0)) {
            return Err(Error::config("Robin coefficients must be non-negative"));
        }
        if !(250.0..=330.0).contains(&self.body_temperature) {
            return Err(Error::config(format!(
                "body temperature {} K outside the physiological range 250-330 K",
                self.body_temperature
            )));
        }
        Ok(())
    }
}

/// Effective volumetric heat capacity (J/(m^3 K)) and conductivity (W/(m K)).
pub fn effective_props(point: &PointFields, params: &ThermalParams) -> Result<(f64, f64)> {
    let f = point.fractions();
    let total = f.total();
    if (total - 1.0).abs() > 1e-10 {
        return Err(Error::data(format!("phase volume fractions sum to {total}, not 1")));
    }
    if f.as_array().iter().any(|&v| v < -1e-12) {
        return Err(Error::data(format!("negative phase volume fraction in {f:?}")));
    }
    let c = PerPhase {
        solid: params.heat_capacity.solid * params.density.solid,
        tumour: params.heat_capacity.tumour * params.density.tumour,
        host: params.heat_capacity.host * params.density.host,
        fluid: params.heat_capacity.fluid * params.density.fluid,
        vessel: params.heat_capacity.vessel * params.density.vessel,
    };
    Ok((c.weighted(&f), params.conductivity.weighted(&f)))
}

/// Volumetric nanoparticle heating `SAR (rho_v eps_v w_v + rho_l eps S^l w_l)`.
pub fn heat_source_qp(point: &PointFields, omega_vessel: f64, omega_if: f64, rho_v: f64, rho_l: f64, sar: f64) -> f64 {
    sar * (rho_v * point.eps_v * omega_vessel + rho_l * point.fluid_fraction() * omega_if)
}

/// Heating per unit length of a discrete vessel of radius `radius`.
pub fn heat_source_line(radius: f64, omega_vessel: f64, rho_v: f64, sar: f64) -> f64 {
    rho_v * PI * radius * radius * omega_vessel * sar
}

/// Pennes perfusion sink in W/m^3.
pub fn heat_sink_lumped(temperature: f64, params: &ThermalParams) -> f64 {
    params.density.vessel * params.heat_capacity.vessel * params.perfusion * (temperature - params.body_temperature)
}

/// Vessel wall sink per unit length in W/m.
pub fn heat_sink_discrete(temperature: f64, radius: f64, beta: f64, body_temperature: f64) -> f64 {
    2.0 * PI * radius * beta * (temperature - body_temperature)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThermalState {
    pub temperature: Vec<f64>,
    pub t: f64,
}

impl ThermalState {
    pub fn uniform(num_nodes: usize, temperature: f64) -> Self {
        ThermalState {
            temperature: vec![temperature; num_nodes],
            t: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct HeatOptions {
    pub slab_thickness: f64,
    /// Include IF convection `c_l rho_l q . grad T`.
    pub convection: bool,
    pub solve: SolveOptions,
}

impl Default for HeatOptions {
    fn default() -> Self {
        HeatOptions {
            slab_thickness: 1e-3,
            convection: true,
            solve: SolveOptions::default(),
        }
    }
}

/// Inputs that change from step to step.
#[derive(Debug, Clone, Copy, Default)]
pub struct HeatLoad<'a> {
    pub sar: f64,
    /// Nodal IF mass fraction.
    pub omega_if: Option<&'a [f64]>,
    /// Nodal homogenised blood mass fraction.
    pub omega_vessel: Option<&'a [f64]>,
    /// Blood mass fraction at each embedding point (discrete vessels).
    pub line_omega: Option<&'a [f64]>,
    /// Additional nodal load in W per unit depth.
    pub extra: Option<&'a [f64]>,
    /// Prescribed nodal temperatures.
    pub dirichlet: &'a [(usize, f64)],
}

/// Per-step energy bookkeeping in W per unit depth.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnergyBalance {
    pub energy_before: f64,
    pub energy_after: f64,
    pub source: f64,
    pub perfusion: f64,
    pub robin: f64,
    pub vessel_sink: f64,
    /// Net flux of conduction plus convection.
    pub transport: f64,
    pub extra: f64,
    /// Heat delivered through prescribed temperatures.
    pub dirichlet: f64,
    pub residual: f64,
    pub relative_residual: f64,
}

struct ElementData {
    op: Local4,
    mv: Local4,
    ml: Local4,
    capacity: [f64; 4],
    pennes: [f64; 4],
}

/// Pre-assembled heat operator for fixed fields.
#[derive(Debug)]
pub struct HeatSolver {
    capacity: Vec<f64>,
    /// Conduction plus convection.
    operator: CsrMatrix,
    /// Lumped linear sink coefficients (Pennes, Robin, vessel walls).
    pennes: Vec<f64>,
    robin: Vec<f64>,
    vessel: Vec<f64>,
    /// `int SAR-free rho_v eps_v N_i N_j` and `int rho_l eps S^l N_i N_j`.
    source_vessel: CsrMatrix,
    source_fluid: CsrMatrix,
    line_source: Vec<(usize, usize, f64)>,
    line_coeff: Vec<f64>,
    body: f64,
    solver: LinearSolver,
    cached: Option<(f64, CsrMatrix)>,
}

impl HeatSolver {
    pub fn new(
        mesh: &StructuredQuadMesh,
        fields: &PhaseFields,
        params: &ThermalParams,
        coeffs: &TransportCoefficients,
        sink: PerfusionSink,
        network: Option<(&VesselNetwork, &EmbeddingTable)>,
        opts: &HeatOptions,
    ) -> Result<Self> {
        params.validate()?;
        fields.check_mesh(mesh)?;
        if !(opts.slab_thickness > 0.0) {
            return Err(Error::config("slab thickness must be positive"));
        }
        if sink == PerfusionSink::Discrete && network.is_none() {
            return Err(Error::config("discrete perfusion sink needs a vessel network"));
        }
        let q = if opts.convection {
            darcy_velocity(mesh, fields, coeffs)
        } else {
            vec![[0.0; 2]; 4 * mesh.num_elements()]
        };
        let conv = params.heat_capacity.fluid * params.density.fluid;
        let rho_v = params.density.vessel;
        let rho_l = params.density.fluid;
        let w = if sink == PerfusionSink::Lumped { params.perfusion } else { 0.0 };
        let pennes_coef = params.density.vessel * params.heat_capacity.vessel * w;
        let elems = map_elements(mesh, |e| -> Result<ElementData> {
            let nodes = mesh.element_nodes(e);
            let mut d = ElementData {
                op: [[0.0; 4]; 4],
                mv: [[0.0; 4]; 4],
                ml: [[0.0; 4]; 4],
                capacity: [0.0; 4],
                pennes: [0.0; 4],
            };
            for (k, qp) in mesh.quadrature(e).iter().enumerate() {
                let pf = fields.interpolate(&nodes, &qp.n);
                let (c, kappa) = effective_props(&pf, params)?;
                let qv = q[4 * e + k];
                for a in 0..4 {
                    for b in 0..4 {
                        let gg = qp.grad[a][0] * qp.grad[b][0] + qp.grad[a][1] * qp.grad[b][1];
                        let qg = qv[0] * qp.grad[b][0] + qv[1] * qp.grad[b][1];
                        d.op[a][b] += (kappa * gg + conv * qp.n[a] * qg) * qp.dv;
                        let nn = qp.n[a] * qp.n[b] * qp.dv;
                        d.mv[a][b] += rho_v * pf.eps_v * nn;
                        d.ml[a][b] += rho_l * pf.fluid_fraction() * nn;
                    }
                    d.capacity[a] += c * qp.n[a] * qp.dv;
                    d.pennes[a] += pennes_coef * qp.n[a] * qp.dv;
                }
            }
            Ok(d)
        });
        let n = mesh.num_nodes();
        let mut operator = q1_pattern(mesh);
        let mut source_vessel = operator.clone();
        let mut source_fluid = operator.clone();
        let mut capacity = vec![0.0; n];
        let mut pennes = vec![0.0; n];
        for (e, d) in elems.into_iter().enumerate() {
            let d = d?;
            let nodes = mesh.element_nodes(e);
            scatter_matrix(&mut operator, &nodes, &d.op);
            scatter_matrix(&mut source_vessel, &nodes, &d.mv);
            scatter_matrix(&mut source_fluid, &nodes, &d.ml);
            scatter_vector(&mut capacity, &nodes, &d.capacity);
            scatter_vector(&mut pennes, &nodes, &d.pennes);
        }

        let mut robin = vec![0.0; n];
        for side in Side::ALL {
            if let Some(beta) = params.robin_on(side) {
                for ([a, b], len) in mesh.boundary_edges(side) {
                    robin[a] += 0.5 * beta * len;
                    robin[b] += 0.5 * beta * len;
                }
            }
        }

        let mut vessel = vec![0.0; n];
        let mut line_source = Vec::new();
        let mut line_coeff = Vec::new();
        if let Some((net, table)) = network {
            for (p, lp) in table.points.iter().enumerate() {
                let seg = &net.segments[lp.segment];
                let nodes = mesh.element_nodes(lp.element);
                let r = if seg.collapsed { 0.0 } else { seg.radius };
                line_coeff.push(heat_source_line(r, 1.0, rho_v, 1.0));
                for (k, &node) in nodes.iter().enumerate() {
                    let wt = lp.weight * lp.shape[k] / opts.slab_thickness;
                    if wt == 0.0 {
                        continue;
                    }
                    if sink == PerfusionSink::Discrete && !seg.collapsed {
                        vessel[node] += wt * 2.0 * PI * seg.radius * params.vessel_exchange;
                    }
                    line_source.push((p, node, wt));
                }
            }
        }

        Ok(HeatSolver {
            capacity,
            operator,
            pennes,
            robin,
            vessel,
            source_vessel,
            source_fluid,
            line_source,
            line_coeff,
            body: params.body_temperature,
            solver: LinearSolver::new(opts.solve),
            cached: None,
        })
    }

    /// Lumped heat capacity per node (J/K per unit depth).
    pub fn lumped_capacity(&self) -> &[f64] {
        &self.capacity
    }

    /// Stored heat relative to body temperature (J per unit depth).
    pub fn energy(&self, temperature: &[f64]) -> f64 {
        self.capacity.iter().zip(temperature).map(|(c, t)| c * (t - self.body)).sum()
    }

    /// Nodal heating load (W per unit depth) for the given mass fractions.
    pub fn source_load(&self, load: &HeatLoad<'_>) -> Vec<f64> {
        let n = self.capacity.len();
        let mut f = vec![0.0; n];
        if load.sar == 0.0 {
            return f;
        }
        if let Some(wv) = load.omega_vessel {
            for (fi, v) in f.iter_mut().zip(self.source_vessel.apply(wv)) {
                *fi += load.sar * v;
            }
        }
        if let Some(wl) = load.omega_if {
            for (fi, v) in f.iter_mut().zip(self.source_fluid.apply(wl)) {
                *fi += load.sar * v;
            }
        }
        if let Some(wline) = load.line_omega {
            for &(p, node, wt) in &self.line_source {
                f[node] += wt * self.line_coeff[p] * wline[p] * load.sar;
            }
        }
        f
    }

    fn matrix_for(&mut self, dt: f64) -> CsrMatrix {
        if let Some((cdt, m)) = &self.cached {
            if *cdt == dt {
                return m.clone();
            }
        }
        let mut m = self.operator.clone();
        for i in 0..self.capacity.len() {
            m.add(i, i, self.capacity[i] / dt + self.pennes[i] + self.robin[i] + self.vessel[i]);
        }
        self.cached = Some((dt, m.clone()));
        m
    }

    pub fn step(&mut self, state: &mut ThermalState, load: &HeatLoad<'_>, dt: f64) -> Result<EnergyBalance> {
        if !(dt > 0.0) {
            return Err(Error::config(format!("time step must be positive, got {dt}")));
        }
        let n = self.capacity.len();
        if state.temperature.len() != n {
            return Err(Error::data("thermal state does not match the mesh"));
        }
        for (name, v) in [("IF", load.omega_if), ("vessel", load.omega_vessel), ("extra", load.extra)] {
            if v.is_some_and(|v| v.len() != n) {
                return Err(Error::data(format!("{name} load vector does not match the mesh")));
            }
        }
        if let Some(l) = load.line_omega {
            if l.len() != self.line_coeff.len() {
                return Err(Error::data("line mass fractions do not match the embedding"));
            }
        }
        let source = self.source_load(load);
        let old = state.temperature.clone();
        // solve for the increment so that round-off scales with the change
        let sinks: Vec<f64> = (0..n).map(|i| self.pennes[i] + self.robin[i] + self.vessel[i]).collect();
        let op_old = apply_zero_row_sum(&self.operator, &old);
        let rhs: Vec<f64> = (0..n)
            .map(|i| source[i] + load.extra.map_or(0.0, |e| e[i]) - op_old[i] - sinks[i] * (old[i] - self.body))
            .collect();
        let a = self.matrix_for(dt);
        let delta = if load.dirichlet.is_empty() {
            self.solver.solve(&a, &rhs, None)?.0
        } else {
            let shifted: Vec<(usize, f64)> = load.dirichlet.iter().map(|&(i, v)| (i, v - old.get(i).copied().unwrap_or(0.0))).collect();
            let mut sys = SparseSystem::new(a.clone(), rhs.clone());
            apply_dirichlet(&mut sys, &shifted)?;
            self.solver.solve(&sys.matrix, &sys.rhs, None)?.0
        };
        let x: Vec<f64> = old.iter().zip(&delta).map(|(t, d)| t + d).collect();
        if let Some(i) = x.iter().position(|t| !t.is_finite()) {
            return Err(Error::numerical(format!("non-finite temperature at node {i}")));
        }

        let lin = |c: &[f64]| -> f64 { c.iter().zip(&x).map(|(c, t)| c * (t - self.body)).sum() };
        let flux = apply_zero_row_sum(&self.operator, &x);
        let transport = -flux.iter().sum::<f64>();
        let dirichlet = if load.dirichlet.is_empty() {
            0.0
        } else {
            let full = a.apply(&delta);
            let mut seen = vec![false; n];
            load.dirichlet
                .iter()
                .filter(|(i, _)| !std::mem::replace(&mut seen[*i], true))
                .map(|&(i, _)| full[i] - rhs[i])
                .sum()
        };
        let e0 = self.energy(&old);
        let e1 = self.energy(&x);
        let bal_source: f64 = source.iter().sum();
        let extra: f64 = load.extra.map_or(0.0, |e| e.iter().sum());
        let perfusion = lin(&self.pennes);
        let robin = lin(&self.robin);
        let vessel_sink = lin(&self.vessel);
        let storage = (e1 - e0) / dt;
        let residual = storage - (bal_source + extra + transport + dirichlet - perfusion - robin - vessel_sink);
        let scale = [storage, bal_source, extra, transport, dirichlet, perfusion, robin, vessel_sink]
            .iter()
            .fold(f64::MIN_POSITIVE, |m, v| m.max(v.abs()))
            .max(1e-12 * e1.abs() / dt);
        state.temperature = x;
        state.t += dt;
        Ok(EnergyBalance {
            energy_before: e0,
            energy_after: e1,
            source: bal_source,
            perfusion,
            robin,
            vessel_sink,
            transport,
            extra,
            dirichlet,
            residual,
            relative_residual: residual.abs() / scale,
        })
    }
}

/// One-off heat step that assembles the operator from scratch.
#[allow(clippy::too_many_arguments)]
pub fn advance_heat_step(
    state: &mut ThermalState,
    fields: &PhaseFields,
    params: &ThermalParams,
    coeffs: &TransportCoefficients,
    mesh: &StructuredQuadMesh,
    sink: PerfusionSink,
    network: Option<(&VesselNetwork, &EmbeddingTable)>,
    load: &HeatLoad<'_>,
    dt: f64,
) -> Result<EnergyBalance> {
    let mut solver = HeatSolver::new(mesh, fields, params, coeffs, sink, network, &HeatOptions::default())?;
    solver.step(state, load, dt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{generate_idealised_tumour, TumourProfile};
    use approx::assert_relative_eq;

    fn tissue() -> PointFields {
        PointFields {
            eps: 0.772,
            s_t: 0.2,
            s_h: 0.3,
            s_l: 0.5,
            eps_v: 0.028,
            p_l: 0.0,
            p_v: 2000.0,
            p_t: 0.0,
        }
    }

    #[test]
    fn effective_property_examples() {
        let p = ThermalParams::default();
        let (c, k) = effective_props(&tissue(), &p).unwrap();
        assert_relative_eq!(k, 0.51, max_relative = 1e-14);
        assert_relative_eq!(c, 3.47e6, max_relative = 1e-14);
        let doubled = PointFields {
            eps: 2.0 * 0.772,
            eps_v: 0.056,
            ..tissue()
        };
        assert!(effective_props(&doubled, &p).is_err());
    }

    #[test]
    fn source_and_sink_examples() {
        let pf = tissue();
        assert_relative_eq!(heat_source_qp(&pf, 2e-3, 0.0, 1000.0, 1000.0, 2e6), 1.12e5, max_relative = 1e-12);
        assert_relative_eq!(heat_source_line(10e-6, 2e-3, 1000.0, 2e6), 1.2566e-3, max_relative = 1e-4);
        let mut p = ThermalParams::default();
        assert_eq!(heat_sink_lumped(p.body_temperature, &p), 0.0);
        assert_eq!(heat_sink_lumped(400.0, &p), 0.0);
        p.perfusion = 0.018;
        assert_relative_eq!(heat_sink_lumped(p.body_temperature + 1.0, &p), 62_460.0, max_relative = 1e-9);
        assert_relative_eq!(heat_sink_discrete(314.15, 10e-6, 20.0, 310.15), 5.0265e-3, max_relative = 1e-4);
        assert_eq!(heat_sink_discrete(310.15, 10e-6, 20.0, 310.15), 0.0);
    }

    fn uniform_solver(mesh: &StructuredQuadMesh, params: &ThermalParams, sink: PerfusionSink) -> HeatSolver {
        let f = PhaseFields::uniform(mesh, tissue()).unwrap();
        HeatSolver::new(mesh, &f, params, &TransportCoefficients::default(), sink, None, &Default::default()).unwrap()
    }

    #[test]
    fn insulated_equilibrium_stays_uniform() {
        let mesh = StructuredQuadMesh::new(10, 8, 1e-3, 1e-3).unwrap();
        let f = generate_idealised_tumour(&mesh, [0.0, 1e-3], 0.4e-3, &TumourProfile::default()).unwrap();
        let p = ThermalParams::default();
        let mut s = HeatSolver::new(&mesh, &f, &p, &TransportCoefficients::default(), PerfusionSink::None, None, &Default::default()).unwrap();
        let mut st = ThermalState::uniform(mesh.num_nodes(), 315.0);
        for _ in 0..10 {
            s.step(&mut st, &HeatLoad::default(), 60.0).unwrap();
        }
        let dev = st.temperature.iter().fold(0.0f64, |m, t| m.max((t - 315.0).abs()));
        assert!(dev < 1e-12, "{dev}");
    }

    #[test]
    fn pennes_uniform_relaxation() {
        let mesh = StructuredQuadMesh::new(4, 4, 1e-3, 1e-3).unwrap();
        let mut p = ThermalParams::default();
        p.perfusion = 0.018;
        let mut s = uniform_solver(&mesh, &p, PerfusionSink::Lumped);
        let mut st = ThermalState::uniform(mesh.num_nodes(), p.body_temperature);
        let wv = vec![2e-3; mesh.num_nodes()];
        let load = HeatLoad {
            sar: 2e6,
            omega_vessel: Some(&wv),
            ..Default::default()
        };
        for _ in 0..200 {
            let bal = s.step(&mut st, &load, 60.0).unwrap();
            assert!(bal.relative_residual < 1e-9);
        }
        let expected = 1.12e5 / (1000.0 * 3470.0 * 0.018);
        assert_relative_eq!(expected, 1.793, max_relative = 1e-3);
        for t in &st.temperature {
            assert_relative_eq!(t - p.body_temperature, expected, max_relative = 1e-9);
        }
    }

    #[test]
    fn slab_matches_fourier_series() {
        // 1D slab: ends held at 0 relative temperature, uniform initial excess
        let l = 1e-3;
        let nx = 100;
        let mesh = StructuredQuadMesh::new(nx, 1, l, l / nx as f64).unwrap();
        let p = ThermalParams::default();
        let mut s = uniform_solver(&mesh, &p, PerfusionSink::None);
        let t0 = 1.0;
        let tb = p.body_temperature;
        let mut st = ThermalState::uniform(mesh.num_nodes(), tb + t0);
        let mut bc = Vec::new();
        for side in [Side::Left, Side::Right] {
            bc.extend(mesh.boundary_nodes(side).into_iter().map(|i| (i, tb)));
        }
        let alpha = 0.51 / 3.47e6;
        let t_end = l * l / (4.0 * alpha);
        let steps = 20_000;
        let dt = t_end / steps as f64;
        let load = HeatLoad {
            dirichlet: &bc,
            ..Default::default()
        };
        for _ in 0..steps {
            let bal = s.step(&mut st, &load, dt).unwrap();
            assert!(bal.relative_residual < 1e-8, "{bal:?}");
        }
        let exact = |x: f64| -> f64 {
            (0..200)
                .map(|m| {
                    let k = (2 * m + 1) as f64;
                    4.0 * t0 / (PI * k)
                        * (k * PI * x / l).sin()
                        * (-(k * PI / l).powi(2) * alpha * t_end).exp()
                })
                .sum()
        };
        let mid = mesh.node_id(nx / 2, 0);
        let got = st.temperature[mid] - tb;
        assert!((got - exact(l / 2.0)).abs() / exact(l / 2.0) < 1e-3, "{got} vs {}", exact(l / 2.0));
    }

    #[test]
    fn convection_vanishes_for_uniform_pressure() {
        let mesh = StructuredQuadMesh::new(8, 8, 1e-3, 1e-3).unwrap();
        let mut p = ThermalParams::default();
        p.set_robin(Side::Right, Some(20.0));
        let f = PhaseFields::uniform(&mesh, PointFields { p_l: 400.0, ..tissue() }).unwrap();
        let c = TransportCoefficients::default();
        let run = |convection: bool| {
            let opts = HeatOptions { convection, ..Default::default() };
            let mut s = HeatSolver::new(&mesh, &f, &p, &c, PerfusionSink::None, None, &opts).unwrap();
            let mut st = ThermalState::uniform(mesh.num_nodes(), p.body_temperature);
            let wl: Vec<f64> = mesh.coords().iter().map(|x| 1e-3 * (1.0 + x[0] / 1e-3)).collect();
            let load = HeatLoad { sar: 2e6, omega_if: Some(&wl), ..Default::default() };
            for _ in 0..5 {
                s.step(&mut st, &load, 60.0).unwrap();
            }
            st.temperature
        };
        let (a, b) = (run(true), run(false));
        assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-12));
    }

    #[test]
    fn robin_cooling_stays_within_bounds_and_balances() {
        let mesh = StructuredQuadMesh::new(20, 20, 0.5e-3, 0.5e-3).unwrap();
        let f = generate_idealised_tumour(&mesh, [0.0, 0.5e-3], 0.4e-3, &TumourProfile::default()).unwrap();
        let mut p = ThermalParams::default();
        p.set_robin(Side::Right, Some(20.0));
        p.set_robin(Side::Bottom, Some(20.0));
        let mut s = HeatSolver::new(&mesh, &f, &p, &TransportCoefficients::default(), PerfusionSink::None, None, &Default::default()).unwrap();
        let mut st = ThermalState::uniform(mesh.num_nodes(), 320.0);
        for _ in 0..30 {
            let bal = s.step(&mut st, &HeatLoad::default(), 10.0).unwrap();
            assert!(bal.relative_residual < 1e-8);
            assert!(bal.robin > 0.0);
            assert!(st.temperature.iter().all(|&t| t >= p.body_temperature - 1e-9 && t <= 320.0 + 1e-9));
        }
    }

    #[test]
    fn rejects_bad_input() {
        let mesh = StructuredQuadMesh::new(2, 2, 1e-3, 1e-3).unwrap();
        let p = ThermalParams::default();
        let mut s = uniform_solver(&mesh, &p, PerfusionSink::None);
        let mut st = ThermalState::uniform(mesh.num_nodes(), 310.15);
        assert!(s.step(&mut st, &HeatLoad::default(), 0.0).is_err());
        let f = PhaseFields::uniform(&mesh, tissue()).unwrap();
        assert!(HeatSolver::new(&mesh, &f, &p, &TransportCoefficients::default(), PerfusionSink::Discrete, None, &Default::default()).is_err());
        let mut bad = p.clone();
        bad.body_temperature = 10.0;
        assert!(bad.validate().is_err());
    }
}
