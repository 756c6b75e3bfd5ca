//! Nanoparticle mass balance in the interstitial fluid.
//!
//! Storage, Darcy advection and diffusion are assembled with Q1 Galerkin;
//! vessel exchange and lymphatic terms use row-sum lumping so the discrete
//! operator stays an M-matrix. Transendothelial brackets are resolved with
//! Picard sweeps over their active sets.
//!
//! Fluid leaving the vessels drags the IF mass fraction along; with the fluid
//! rates reconstructed from the particle kernels at unit mass fraction the
//! interendothelial gain becomes `(a/2)(w_v - w)` and lymphatic drainage
//! cancels against its own fluid drag.

use std::f64::consts::PI;

use crate::assembly::{add_diagonal, apply_zero_row_sum, map_elements, q1_pattern, scatter_matrix, scatter_vector, Local4};
use crate::error::{Error, Result};
use crate::fields::{PhaseFields, TransportCoefficients};
use crate::linsolve::{CsrMatrix, LinearSolver, SolveOptions};
use crate::mesh::StructuredQuadMesh;
use crate::protocol::Protocol;
use crate::vasculature::{EmbeddingTable, FlowSolution, LineExchange, NetworkTransport, VesselNetwork};

/// Exchange surface of one vascular representation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExchangeGeometry {
    /// Homogenised vasculature with volume fraction `eps_v`; rates per volume.
    Homogenised { vessel_fraction: f64 },
    /// Discrete vessel of radius `R`; rates per unit centreline length.
    Discrete { radius: f64 },
}

impl ExchangeGeometry {
    /// Wall area per unit volume (homogenised) or per unit length (discrete).
    pub fn wall_density(&self, coeffs: &TransportCoefficients) -> f64 {
        match *self {
            ExchangeGeometry::Homogenised { vessel_fraction } => {
                vessel_fraction * coeffs.surface_to_volume
            }
            ExchangeGeometry::Discrete { radius } => 2.0 * PI * radius,
        }
    }
}

/// Pressures and mass fractions on both sides of the vessel wall.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalExchange {
    pub p_vessel: f64,
    pub p_if: f64,
    pub omega_vessel: f64,
    pub omega_if: f64,
}

/// Convective (interendothelial) particle transfer from vessel to IF.
pub fn transfer_interendothelial(
    geometry: ExchangeGeometry,
    local: &LocalExchange,
    coeffs: &TransportCoefficients,
) -> f64 {
    let drive = local.p_vessel - local.p_if - coeffs.oncotic_term();
    coeffs.rho_v
        * geometry.wall_density(coeffs)
        * coeffs.hydraulic_conductivity
        * drive
        * 0.5
        * (local.omega_vessel + local.omega_if)
}

/// Diffusive (transendothelial) particle transfer from vessel to IF.
pub fn transfer_transendothelial(
    geometry: ExchangeGeometry,
    local: &LocalExchange,
    coeffs: &TransportCoefficients,
) -> f64 {
    coeffs.rho_v
        * geometry.wall_density(coeffs)
        * coeffs.wall_permeability
        * (local.omega_vessel - local.omega_if).max(0.0)
}

/// Lymphatic fluid uptake rate per volume; multiply by the mass fraction for
/// the particle drainage.
fn lymph_fluid_rate(p_if: f64, p_t: f64, coeffs: &TransportCoefficients) -> f64 {
    coeffs.rho_l
        * coeffs.lymph_filtration
        * (p_if - coeffs.lymph_pressure).max(0.0)
        * (1.0 - p_t / coeffs.lymph_collapse_pressure).max(0.0)
}

/// Particle removal by lymphatic drainage, kg/(m^3 s).
pub fn lymph_drainage(
    p_if: f64,
    p_t: f64,
    omega_if: f64,
    coeffs: &TransportCoefficients,
) -> Result<f64> {
    if coeffs.lymph_collapse_pressure == 0.0 {
        return Err(Error::config("lymphatic collapsing pressure must be non-zero"));
    }
    Ok(lymph_fluid_rate(p_if, p_t, coeffs) * omega_if)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportState {
    pub omega_if: Vec<f64>,
    pub omega_v: Vec<f64>,
    pub t: f64,
}

impl TransportState {
    pub fn new(num_nodes: usize) -> Self {
        TransportState {
            omega_if: vec![0.0; num_nodes],
            omega_v: vec![0.0; num_nodes],
            t: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VascularMode {
    None,
    Homogenised,
    Discrete,
}

/// Discrete network geometry coupled into the IF balance.
#[derive(Debug, Clone, Copy)]
pub struct DiscreteCoupling<'a> {
    pub network: &'a VesselNetwork,
    pub flow: &'a FlowSolution,
    pub table: &'a EmbeddingTable,
}

#[derive(Debug, Clone, Copy)]
pub struct TransportOptions {
    /// Out-of-plane thickness that converts line densities to volume densities.
    pub slab_thickness: f64,
    pub streamline_diffusion: bool,
    pub solve: SolveOptions,
}

impl Default for TransportOptions {
    fn default() -> Self {
        TransportOptions {
            slab_thickness: 1e-3,
            streamline_diffusion: false,
            solve: SolveOptions::default(),
        }
    }
}

/// Per-step mass bookkeeping, in kg/s per unit depth unless noted.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MassBalance {
    /// Particle mass in the IF before and after the step (kg per unit depth).
    pub mass_before: f64,
    pub mass_after: f64,
    pub vascular: f64,
    pub line: f64,
    /// Net flux of the advection/diffusion operator (zero-flux walls leave
    /// only the non-conservative advection contribution).
    pub advection: f64,
    pub drainage: f64,
    pub drainage_drag: f64,
    /// External nodal source supplied to [`TransportSolver::step_with_source`].
    pub source: f64,
    pub residual: f64,
    pub relative_residual: f64,
    pub picard_sweeps: usize,
    pub active_set_converged: bool,
}

#[derive(Debug, Clone, Copy)]
struct LineEntry {
    point: usize,
    node: usize,
    /// `w N_i / H`
    weight: f64,
}

struct ElementData {
    stiff: Local4,
    adv: Local4,
    mass: [f64; 4],
    half_a: [f64; 4],
    b: [f64; 4],
    drain: [f64; 4],
    peclet: f64,
}

const MAX_PICARD: usize = 5;

/// Pre-assembled transport operator for fixed fields.
#[derive(Debug)]
pub struct TransportSolver {
    mode: VascularMode,
    mass: Vec<f64>,
    /// Diffusion plus advection (plus optional streamline diffusion).
    transport: CsrMatrix,
    hom_half_a: Vec<f64>,
    hom_b: Vec<f64>,
    drain: Vec<f64>,
    line: Vec<LineEntry>,
    line_half_a: Vec<f64>,
    line_b: Vec<f64>,
    line_interp: Vec<([usize; 4], [f64; 4])>,
    slab: f64,
    max_peclet: f64,
    solver: LinearSolver,
    cached_dt: Option<(f64, CsrMatrix)>,
}

impl TransportSolver {
    pub fn new(
        mesh: &StructuredQuadMesh,
        fields: &PhaseFields,
        coeffs: &TransportCoefficients,
        mode: VascularMode,
        discrete: Option<DiscreteCoupling<'_>>,
        opts: &TransportOptions,
    ) -> Result<Self> {
        coeffs.validate()?;
        fields.check_mesh(mesh)?;
        if !(opts.slab_thickness > 0.0) {
            return Err(Error::config("slab thickness must be positive"));
        }
        if (mode == VascularMode::Discrete) != discrete.is_some() {
            return Err(Error::config(
                "discrete network coupling must be supplied exactly when the discrete mode is active",
            ));
        }
        let h = mesh.element_size();
        let h_max = h[0].max(h[1]);
        let homogenised = mode == VascularMode::Homogenised;
        let oncotic = coeffs.oncotic_term();
        let sd = opts.streamline_diffusion;
        let elems = map_elements(mesh, |e| {
            let nodes = mesh.element_nodes(e);
            let mut d = ElementData {
                stiff: [[0.0; 4]; 4],
                adv: [[0.0; 4]; 4],
                mass: [0.0; 4],
                half_a: [0.0; 4],
                b: [0.0; 4],
                drain: [0.0; 4],
                peclet: 0.0,
            };
            let p0 = fields.p_l[nodes[0]];
            for qp in mesh.quadrature(e) {
                let pf = fields.interpolate(&nodes, &qp.n);
                let s = coeffs.rho_l * pf.fluid_fraction();
                let mut g = [0.0; 2];
                for k in 1..4 {
                    let dp = fields.p_l[nodes[k]] - p0;
                    g[0] += qp.grad[k][0] * dp;
                    g[1] += qp.grad[k][1] * dp;
                }
                let q = [-coeffs.mobility * g[0], -coeffs.mobility * g[1]];
                let qn = q[0].hypot(q[1]);
                let diff = s * coeffs.diffusivity;
                let pe = if diff > 0.0 {
                    coeffs.rho_l * qn * h_max / (2.0 * diff)
                } else if qn > 0.0 {
                    f64::INFINITY
                } else {
                    0.0
                };
                d.peclet = d.peclet.max(pe);
                let k_sd = if sd && qn > 0.0 {
                    let xi = if pe.is_finite() && pe > 1e-8 {
                        1.0 / pe.tanh() - 1.0 / pe
                    } else if pe.is_finite() {
                        pe / 3.0
                    } else {
                        1.0
                    };
                    coeffs.rho_l * h_max * xi / (2.0 * qn)
                } else {
                    0.0
                };
                for a in 0..4 {
                    let qa = q[0] * qp.grad[a][0] + q[1] * qp.grad[a][1];
                    for b in 0..4 {
                        let gg = qp.grad[a][0] * qp.grad[b][0] + qp.grad[a][1] * qp.grad[b][1];
                        let qb = q[0] * qp.grad[b][0] + q[1] * qp.grad[b][1];
                        d.stiff[a][b] += (diff * gg + k_sd * qa * qb) * qp.dv;
                        d.adv[a][b] += coeffs.rho_l * qp.n[a] * qb * qp.dv;
                    }
                    d.mass[a] += s * qp.n[a] * qp.dv;
                    let rate = lymph_fluid_rate(pf.p_l, pf.p_t, coeffs);
                    d.drain[a] += rate * qp.n[a] * qp.dv;
                    if homogenised {
                        let wall = ExchangeGeometry::Homogenised {
                            vessel_fraction: pf.eps_v,
                        }
                        .wall_density(coeffs);
                        let a_coef = coeffs.rho_v
                            * wall
                            * coeffs.hydraulic_conductivity
                            * (pf.p_v - pf.p_l - oncotic);
                        d.half_a[a] += 0.5 * a_coef * qp.n[a] * qp.dv;
                        d.b[a] += coeffs.rho_v * wall * coeffs.wall_permeability * qp.n[a] * qp.dv;
                    }
                }
            }
            d
        });
        let n = mesh.num_nodes();
        let mut transport = q1_pattern(mesh);
        let mut mass = vec![0.0; n];
        let mut hom_half_a = vec![0.0; n];
        let mut hom_b = vec![0.0; n];
        let mut drain = vec![0.0; n];
        let mut max_peclet = 0.0f64;
        for (e, d) in elems.iter().enumerate() {
            let nodes = mesh.element_nodes(e);
            scatter_matrix(&mut transport, &nodes, &d.stiff);
            scatter_matrix(&mut transport, &nodes, &d.adv);
            scatter_vector(&mut mass, &nodes, &d.mass);
            scatter_vector(&mut hom_half_a, &nodes, &d.half_a);
            scatter_vector(&mut hom_b, &nodes, &d.b);
            scatter_vector(&mut drain, &nodes, &d.drain);
            max_peclet = max_peclet.max(d.peclet);
        }
        if max_peclet > 2.0 {
            log::warn!(
                "element Peclet number reaches {max_peclet:.2}; Galerkin advection may oscillate{}",
                if sd { "" } else { " (streamline diffusion is off)" }
            );
        }
        if let Some(i) = mass.iter().position(|&m| !(m > 0.0)) {
            return Err(Error::data(format!(
                "node {i}: zero interstitial fluid fraction leaves the particle balance singular"
            )));
        }

        let mut line = Vec::new();
        let mut line_half_a = Vec::new();
        let mut line_b = Vec::new();
        let mut line_interp = Vec::new();
        if let Some(dc) = discrete {
            for (p, lp) in dc.table.points.iter().enumerate() {
                let seg = &dc.network.segments[lp.segment];
                let nodes = mesh.element_nodes(lp.element);
                line_interp.push((nodes, lp.shape));
                if seg.collapsed {
                    line_half_a.push(0.0);
                    line_b.push(0.0);
                    continue;
                }
                let p_if: f64 = nodes.iter().zip(&lp.shape).map(|(&k, w)| w * fields.p_l[k]).sum();
                let p_vessel = dc.flow.pressure_along(dc.network, lp.segment, lp.s);
                let wall = ExchangeGeometry::Discrete { radius: seg.radius }.wall_density(coeffs);
                let a = coeffs.rho_v * wall * coeffs.hydraulic_conductivity * (p_vessel - p_if - oncotic);
                line_half_a.push(0.5 * a);
                line_b.push(coeffs.rho_v * wall * coeffs.wall_permeability);
                for (k, &node) in nodes.iter().enumerate() {
                    if lp.shape[k] > 0.0 {
                        line.push(LineEntry {
                            point: p,
                            node,
                            weight: lp.weight * lp.shape[k] / opts.slab_thickness,
                        });
                    }
                }
            }
        }
        Ok(TransportSolver {
            mode,
            mass,
            transport,
            hom_half_a,
            hom_b,
            drain,
            line,
            line_half_a,
            line_b,
            line_interp,
            slab: opts.slab_thickness,
            max_peclet,
            solver: LinearSolver::new(opts.solve),
            cached_dt: None,
        })
    }

    pub fn mode(&self) -> VascularMode {
        self.mode
    }

    pub fn max_peclet(&self) -> f64 {
        self.max_peclet
    }

    /// Lumped storage coefficients `int rho_l eps S^l N_i`.
    pub fn lumped_storage(&self) -> &[f64] {
        &self.mass
    }

    /// Particle mass in the IF per unit depth.
    pub fn mass_per_depth(&self, omega: &[f64]) -> f64 {
        self.mass.iter().zip(omega).map(|(m, w)| m * w).sum()
    }

    /// Particle mass in the IF within the slab, kg.
    pub fn mass_in_slab(&self, omega: &[f64]) -> f64 {
        self.slab * self.mass_per_depth(omega)
    }

    /// IF mass fraction at each embedding point.
    pub fn if_at_line_points(&self, omega: &[f64]) -> Vec<f64> {
        self.line_interp
            .iter()
            .map(|(nodes, n)| nodes.iter().zip(n).map(|(&k, w)| w * omega[k]).sum())
            .collect()
    }

    /// Exchange coefficients seen by the 1D network, with the IF mass
    /// fraction lagged at `omega_if`.
    pub fn line_exchange(&self, omega_if: &[f64]) -> LineExchange {
        LineExchange {
            inter: self.line_half_a.iter().map(|h| 2.0 * h).collect(),
            trans: self.line_b.clone(),
            omega_if: self.if_at_line_points(omega_if),
        }
    }

    fn operator_for(&mut self, dt: f64) -> CsrMatrix {
        if let Some((cached, m)) = &self.cached_dt {
            if *cached == dt {
                return m.clone();
            }
        }
        let mut m = self.transport.clone();
        let diag: Vec<f64> = self
            .mass
            .iter()
            .zip(&self.hom_half_a)
            .map(|(mass, ha)| mass / dt + ha)
            .collect();
        add_diagonal(&mut m, &diag);
        for e in &self.line {
            m.add(e.node, e.node, self.line_half_a[e.point] * e.weight);
        }
        self.cached_dt = Some((dt, m.clone()));
        m
    }

    /// Advance `state` by `dt`. `omega_vessel` is the homogenised blood mass
    /// fraction for this step; `line_omega` the vessel mass fraction at each
    /// embedding point (discrete mode).
    pub fn step(
        &mut self,
        state: &mut TransportState,
        omega_vessel: f64,
        line_omega: Option<&[f64]>,
        dt: f64,
    ) -> Result<MassBalance> {
        self.step_with_source(state, omega_vessel, line_omega, None, dt)
    }

    /// [`step`](Self::step) with an extra nodal mass source in kg/s per unit
    /// depth, used by manufactured-solution checks.
    pub fn step_with_source(
        &mut self,
        state: &mut TransportState,
        omega_vessel: f64,
        line_omega: Option<&[f64]>,
        source: Option<&[f64]>,
        dt: f64,
    ) -> Result<MassBalance> {
        if !(dt > 0.0) {
            return Err(Error::config(format!("time step must be positive, got {dt}")));
        }
        let n = self.mass.len();
        if state.omega_if.len() != n || source.is_some_and(|s| s.len() != n) {
            return Err(Error::data("transport state does not match the mesh"));
        }
        let wv = if self.mode == VascularMode::Homogenised {
            omega_vessel
        } else {
            0.0
        };
        let line_w: Vec<f64> = match (self.mode, line_omega) {
            (VascularMode::Discrete, Some(w)) if w.len() == self.line_half_a.len() => w.to_vec(),
            (VascularMode::Discrete, _) => {
                return Err(Error::data("discrete mode needs vessel values at every line point"))
            }
            _ => Vec::new(),
        };
        let base = self.operator_for(dt);
        let old = state.omega_if.clone();
        // residual of the old state, excluding the bracket terms; the solve
        // is for the increment so a steady state is reproduced exactly
        let t_old = apply_zero_row_sum(&self.transport, &old);
        let mut rhs0: Vec<f64> = (0..n)
            .map(|i| self.hom_half_a[i] * (wv - old[i]) - t_old[i] + source.map_or(0.0, |f| f[i]))
            .collect();
        for e in &self.line {
            rhs0[e.node] += self.line_half_a[e.point] * e.weight * (line_w[e.point] - old[e.node]);
        }
        let hom_active = |w: &[f64]| -> Vec<bool> {
            (0..n).map(|i| self.hom_b[i] > 0.0 && wv > w[i]).collect()
        };
        let line_active = |w: &[f64]| -> Vec<bool> {
            self.line
                .iter()
                .map(|e| self.line_b[e.point] > 0.0 && line_w[e.point] > w[e.node])
                .collect()
        };
        let mut act_h = hom_active(&old);
        let mut act_l = line_active(&old);
        let mut omega = old.clone();
        let mut sweeps = 0;
        let mut converged = false;
        while sweeps < MAX_PICARD {
            sweeps += 1;
            let mut a = base.clone();
            let mut b = rhs0.clone();
            for i in 0..n {
                if act_h[i] {
                    a.add(i, i, self.hom_b[i]);
                    b[i] += self.hom_b[i] * (wv - old[i]);
                }
            }
            for (l, e) in self.line.iter().enumerate() {
                if act_l[l] {
                    let c = self.line_b[e.point] * e.weight;
                    a.add(e.node, e.node, c);
                    b[e.node] += c * (line_w[e.point] - old[e.node]);
                }
            }
            let (delta, _) = self.solver.solve(&a, &b, None)?;
            omega = old.iter().zip(&delta).map(|(w, d)| w + d).collect();
            let (nh, nl) = (hom_active(&omega), line_active(&omega));
            if nh == act_h && nl == act_l {
                converged = true;
                break;
            }
            if sweeps < MAX_PICARD {
                act_h = nh;
                act_l = nl;
            }
        }
        if !converged {
            log::warn!("transport: transendothelial active set still changing after {MAX_PICARD} sweeps");
        }
        if let Some(i) = omega.iter().position(|w| !w.is_finite()) {
            return Err(Error::numerical(format!("non-finite IF mass fraction at node {i}")));
        }

        // bookkeeping with the active sets of the final solve
        let mut vascular = 0.0;
        for i in 0..n {
            let mut r = self.hom_half_a[i] * (wv - omega[i]);
            if act_h[i] {
                r += self.hom_b[i] * (wv - omega[i]);
            }
            vascular += r;
        }
        let mut line = 0.0;
        for (l, e) in self.line.iter().enumerate() {
            let diff = line_w[e.point] - omega[e.node];
            let mut r = self.line_half_a[e.point] * diff;
            if act_l[l] {
                r += self.line_b[e.point] * diff;
            }
            line += e.weight * r;
        }
        let flux = apply_zero_row_sum(&self.transport, &omega);
        let advection = -flux.iter().sum::<f64>();
        let drainage: f64 = self.drain.iter().zip(&omega).map(|(d, w)| d * w).sum();
        let mass_before = self.mass_per_depth(&old);
        let mass_after = self.mass_per_depth(&omega);
        let storage = (mass_after - mass_before) / dt;
        let external: f64 = source.map_or(0.0, |f| f.iter().sum());
        let residual = storage - (vascular + line + advection + external);
        let scale = [storage, vascular, line, advection, external, mass_after / dt * 1e-6]
            .iter()
            .fold(f64::MIN_POSITIVE, |m, v| m.max(v.abs()));

        state.omega_if = omega;
        state.omega_v.iter_mut().for_each(|w| *w = wv);
        state.t += dt;
        Ok(MassBalance {
            mass_before,
            mass_after,
            vascular,
            line,
            advection,
            drainage,
            drainage_drag: drainage,
            source: external,
            residual,
            relative_residual: residual.abs() / scale,
            picard_sweeps: sweeps,
            active_set_converged: converged,
        })
    }
}

/// Vessel mass fraction at each embedding point from the 1D network state.
pub fn line_values(table: &EmbeddingTable, vessel: &NetworkTransport) -> Vec<f64> {
    table
        .points
        .iter()
        .map(|p| vessel.grid.value_at(&vessel.omega, p.segment, p.s))
        .collect()
}

/// One-off transport step that assembles the operator from scratch.
#[allow(clippy::too_many_arguments)]
pub fn advance_transport_step(
    state: &mut TransportState,
    fields: &PhaseFields,
    coeffs: &TransportCoefficients,
    mesh: &StructuredQuadMesh,
    mode: VascularMode,
    discrete: Option<(DiscreteCoupling<'_>, &NetworkTransport)>,
    protocol: &Protocol,
    dt: f64,
) -> Result<MassBalance> {
    let mut solver = TransportSolver::new(
        mesh,
        fields,
        coeffs,
        mode,
        discrete.map(|(c, _)| c),
        &TransportOptions::default(),
    )?;
    let t_new = state.t + dt;
    let line = discrete.map(|(c, v)| line_values(c.table, v));
    solver.step(state, protocol.vessel_fraction(t_new), line.as_deref(), dt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{generate_idealised_tumour, PointFields, TumourProfile};
    use approx::assert_relative_eq;

    fn coeffs() -> TransportCoefficients {
        TransportCoefficients::default()
    }

    #[test]
    fn interendothelial_examples() {
        let c = coeffs();
        let mut l = LocalExchange {
            p_vessel: 100.0,
            p_if: 100.0,
            omega_vessel: 1e-3,
            omega_if: 1e-3,
        };
        let hom = ExchangeGeometry::Homogenised {
            vessel_fraction: 0.028,
        };
        assert_eq!(transfer_interendothelial(hom, &l, &c), 0.0);
        l.p_if = 0.0;
        assert_relative_eq!(transfer_interendothelial(hom, &l, &c), 1.96e-6, max_relative = 1e-12);
        let disc = ExchangeGeometry::Discrete { radius: 10e-6 };
        let expected = 1000.0 * 2.0 * PI * 10e-6 * 1e-10 * 100.0 * 1e-3;
        assert_relative_eq!(transfer_interendothelial(disc, &l, &c), expected, max_relative = 1e-12);
        assert_relative_eq!(expected, 6.28e-13, max_relative = 1e-3);
    }

    #[test]
    fn transendothelial_examples() {
        let c = coeffs();
        let hom = ExchangeGeometry::Homogenised {
            vessel_fraction: 0.028,
        };
        let mut l = LocalExchange {
            p_vessel: 0.0,
            p_if: 0.0,
            omega_vessel: 2e-3,
            omega_if: 1e-3,
        };
        assert_relative_eq!(transfer_transendothelial(hom, &l, &c), 3.92e-7, max_relative = 1e-12);
        l.omega_if = 3e-3;
        assert_eq!(transfer_transendothelial(hom, &l, &c), 0.0);
        l.omega_if = 2e-3;
        assert_eq!(transfer_transendothelial(hom, &l, &c), 0.0);
    }

    #[test]
    fn drainage_examples() {
        let c = coeffs();
        assert_relative_eq!(lymph_drainage(533.3, 0.0, 1e-3, &c).unwrap(), 5.546e-4, max_relative = 1e-3);
        assert_eq!(lymph_drainage(533.3, 133.0, 1e-3, &c).unwrap(), 0.0);
        assert_eq!(lymph_drainage(533.3, 500.0, 1e-3, &c).unwrap(), 0.0);
        assert_eq!(lymph_drainage(0.0, 0.0, 1e-3, &c).unwrap(), 0.0);
        let bad = TransportCoefficients {
            lymph_collapse_pressure: 0.0,
            ..c
        };
        assert!(lymph_drainage(533.3, 0.0, 1e-3, &bad).is_err());
    }

    fn uniform_fields(mesh: &StructuredQuadMesh, eps_v: f64) -> PhaseFields {
        PhaseFields::uniform(
            mesh,
            PointFields {
                eps: 0.8 - eps_v,
                s_t: 0.2,
                s_h: 0.3,
                s_l: 0.5,
                eps_v,
                p_l: 0.0,
                p_v: 2000.0,
                p_t: 0.0,
            },
        )
        .unwrap()
    }

    #[test]
    fn constant_state_without_transfer_is_steady() {
        let mesh = StructuredQuadMesh::new(12, 10, 1e-3, 1e-3).unwrap();
        let f = generate_idealised_tumour(&mesh, [0.0, 1e-3], 0.4e-3, &TumourProfile::default()).unwrap();
        let c = coeffs();
        let mut s = TransportSolver::new(&mesh, &f, &c, VascularMode::None, None, &Default::default()).unwrap();
        let mut st = TransportState::new(mesh.num_nodes());
        st.omega_if.iter_mut().for_each(|w| *w = 1.5e-3);
        for _ in 0..5 {
            s.step(&mut st, 0.0, None, 60.0).unwrap();
        }
        let dev = st.omega_if.iter().fold(0.0f64, |m, w| m.max((w - 1.5e-3).abs()));
        assert!(dev < 1e-15, "{dev}");
        let u = uniform_fields(&mesh, 0.0);
        let mut s = TransportSolver::new(&mesh, &u, &c, VascularMode::None, None, &Default::default()).unwrap();
        st.omega_if.iter_mut().for_each(|w| *w = 1.5e-3);
        s.step(&mut st, 0.0, None, 60.0).unwrap();
        assert!(st.omega_if.iter().all(|w| (w - 1.5e-3).abs() < 1e-15));
    }

    #[test]
    fn gaussian_second_moment_grows_linearly() {
        let l = 1e-3;
        let mesh = StructuredQuadMesh::new(80, 80, l, l).unwrap();
        let f = uniform_fields(&mesh, 0.0);
        let c = TransportCoefficients {
            diffusivity: 1e-10,
            ..coeffs()
        };
        let mut s = TransportSolver::new(&mesh, &f, &c, VascularMode::None, None, &Default::default()).unwrap();
        let sigma0: f64 = 0.05e-3;
        let centre = [0.5e-3, 0.5e-3];
        let r2 = |x: &[f64; 2]| (x[0] - centre[0]).powi(2) + (x[1] - centre[1]).powi(2);
        let mut st = TransportState::new(mesh.num_nodes());
        st.omega_if = mesh
            .coords()
            .iter()
            .map(|x| (-r2(x) / (2.0 * sigma0 * sigma0)).exp())
            .collect();
        let storage = s.lumped_storage().to_vec();
        let moment = |w: &[f64]| {
            let m = &storage;
            let num: f64 = mesh.coords().iter().zip(w).zip(m).map(|((x, w), m)| r2(x) * w * m).sum();
            let den: f64 = w.iter().zip(m).map(|(w, m)| w * m).sum();
            num / den
        };
        let m0 = moment(&st.omega_if);
        let (dt, steps) = (2.0, 20);
        for _ in 0..steps {
            s.step(&mut st, 0.0, None, dt).unwrap();
        }
        let m1 = moment(&st.omega_if);
        let expected = 4.0 * c.diffusivity * dt * steps as f64;
        assert!(((m1 - m0) - expected).abs() / expected < 0.02, "{} vs {expected}", m1 - m0);
    }

    #[test]
    fn superposition_with_one_signed_brackets() {
        let mesh = StructuredQuadMesh::new(10, 10, 1e-3, 1e-3).unwrap();
        let f = generate_idealised_tumour(
            &mesh,
            [0.0, 1e-3],
            0.4e-3,
            &TumourProfile {
                core_if_saturation: 0.3,
                ..Default::default()
            },
        ).unwrap();
        let c = coeffs();
        let run = |w0: f64, wv: f64| {
            let mut s =
                TransportSolver::new(&mesh, &f, &c, VascularMode::Homogenised, None, &Default::default()).unwrap();
            let mut st = TransportState::new(mesh.num_nodes());
            st.omega_if = mesh.coords().iter().map(|x| w0 * (1.0 + x[0] / 1e-3)).collect();
            for _ in 0..3 {
                s.step(&mut st, wv, None, 60.0).unwrap();
            }
            st.omega_if
        };
        // brackets stay active: the vessel value dominates the IF everywhere
        let a = run(1e-5, 1e-3);
        let b = run(2e-5, 3e-3);
        let ab = run(3e-5, 4e-3);
        for i in 0..a.len() {
            assert!((a[i] + b[i] - ab[i]).abs() <= 1e-12 * ab[i].abs().max(1e-12), "{i} {} {} {}", a[i], b[i], ab[i]);
        }
    }

    fn spherical_case(sd: bool) -> (StructuredQuadMesh, PhaseFields, Vec<TransportState>, Vec<MassBalance>, Vec<f64>) {
        let mesh = StructuredQuadMesh::new(30, 30, 0.5e-3, 0.5e-3).unwrap();
        let profile = TumourProfile {
            vessel_pressure: 20000.0,
            ..Default::default()
        };
        let f = generate_idealised_tumour(&mesh, [0.0, 0.5e-3], 0.4e-3, &profile).unwrap();
        let opts = TransportOptions {
            streamline_diffusion: sd,
            ..Default::default()
        };
        let mut s = TransportSolver::new(&mesh, &f, &coeffs(), VascularMode::Homogenised, None, &opts).unwrap();
        let storage = s.lumped_storage().to_vec();
        let mut st = TransportState::new(mesh.num_nodes());
        let p = Protocol::default();
        let (mut states, mut bals) = (Vec::new(), Vec::new());
        for step in 1..=60 {
            let bal = s.step(&mut st, p.vessel_fraction(60.0 * step as f64), None, 60.0).unwrap();
            states.push(st.clone());
            bals.push(bal);
        }
        (mesh, f, states, bals, storage)
    }

    #[test]
    fn homogenised_mass_balance_and_bounds() {
        let (mesh, f, states, bals, _) = spherical_case(false);
        for (k, (st, bal)) in states.iter().zip(&bals).enumerate() {
            assert!(bal.relative_residual < 1e-8, "step {}: {bal:?}", k + 1);
            assert!(st.omega_if.iter().all(|&w| (0.0..=2e-3).contains(&w)));
        }
        // particle mass per tissue volume is far lower in the non-perfused core
        let core = mesh.node_id(0, 30);
        let host = mesh.node_id(30, 0);
        let density = |st: &TransportState, i: usize| f.eps[i] * f.s_l[i] * st.omega_if[i];
        for st in &states[..40] {
            assert!(density(st, core) < 0.01 * density(st, host));
        }
        assert!(states[59].omega_if[host] < states[39].omega_if[host]);
    }

    #[test]
    fn stabilised_core_mass_fraction_lags_host() {
        let (mesh, _, states, bals, _) = spherical_case(true);
        let core = mesh.node_id(0, 30);
        let host = mesh.node_id(30, 0);
        assert!(bals.iter().all(|b| b.relative_residual < 1e-8));
        assert!(states[9].omega_if[core] < 0.01 * states[9].omega_if[host]);
        assert!(states[39].omega_if[host] > states[9].omega_if[host]);
    }

    #[test]
    fn decay_after_injection() {
        let mesh = StructuredQuadMesh::new(12, 12, 0.5e-3, 0.5e-3).unwrap();
        let profile = TumourProfile {
            vessel_pressure: 20000.0,
            ..Default::default()
        };
        let f = generate_idealised_tumour(&mesh, [0.0, 0.5e-3], 0.4e-3, &profile).unwrap();
        let mut s =
            TransportSolver::new(&mesh, &f, &coeffs(), VascularMode::Homogenised, None, &Default::default())
                .unwrap();
        let mut st = TransportState::new(mesh.num_nodes());
        let p = Protocol::default();
        let mut masses = Vec::new();
        for step in 1..=60 {
            s.step(&mut st, p.vessel_fraction(60.0 * step as f64), None, 60.0).unwrap();
            masses.push(s.mass_per_depth(&st.omega_if));
        }
        assert!(masses[39] > masses[19]);
        assert!(masses[59] < masses[39]);
    }

    #[test]
    fn non_positive_step_rejected() {
        let mesh = StructuredQuadMesh::new(2, 2, 1e-3, 1e-3).unwrap();
        let f = uniform_fields(&mesh, 0.0);
        let mut s = TransportSolver::new(&mesh, &f, &coeffs(), VascularMode::None, None, &Default::default()).unwrap();
        let mut st = TransportState::new(mesh.num_nodes());
        assert!(s.step(&mut st, 0.0, None, 0.0).is_err());
        assert!(s.step(&mut st, 0.0, None, -1.0).is_err());
    }
}
