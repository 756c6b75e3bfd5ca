//! Tumour-microenvironment phase fields and transport coefficients.
//!
//! Phase fields are inputs to the simulator: either generated from analytic
//! radial/elliptic profiles or read from a node-ordered text file.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::mesh::StructuredQuadMesh;

const SUM_TOL: f64 = 1e-10;

/// Nodal volume fractions, saturations, and pressures.
///
/// `eps` is the ECM porosity, `eps_v` the homogenised vascular fraction; the
/// solid fraction is the remainder `1 - eps - eps_v`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseFields {
    pub coords: Vec<[f64; 2]>,
    pub eps: Vec<f64>,
    pub s_t: Vec<f64>,
    pub s_h: Vec<f64>,
    pub s_l: Vec<f64>,
    pub eps_v: Vec<f64>,
    pub p_l: Vec<f64>,
    pub p_v: Vec<f64>,
    pub p_t: Vec<f64>,
}

/// Volume fractions of every phase at one point: (solid, tumour, host, IF, vessel).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseFractions {
    pub solid: f64,
    pub tumour: f64,
    pub host: f64,
    pub fluid: f64,
    pub vessel: f64,
}

impl PhaseFractions {
    pub fn as_array(&self) -> [f64; 5] {
        [self.solid, self.tumour, self.host, self.fluid, self.vessel]
    }

    pub fn total(&self) -> f64 {
        self.as_array().iter().sum()
    }
}

/// Values of all fields interpolated to one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointFields {
    pub eps: f64,
    pub s_t: f64,
    pub s_h: f64,
    pub s_l: f64,
    pub eps_v: f64,
    pub p_l: f64,
    pub p_v: f64,
    pub p_t: f64,
}

impl PointFields {
    pub fn fractions(&self) -> PhaseFractions {
        PhaseFractions {
            solid: 1.0 - self.eps - self.eps_v,
            tumour: self.eps * self.s_t,
            host: self.eps * self.s_h,
            fluid: self.eps * self.s_l,
            vessel: self.eps_v,
        }
    }

    /// IF volume fraction `eps * S^l`.
    pub fn fluid_fraction(&self) -> f64 {
        self.eps * self.s_l
    }
}

pub const FIELD_COLUMNS: [&str; 10] = [
    "x", "y", "eps", "S_t", "S_h", "S_l", "eps_v", "p_l", "p_v", "p_t",
];

impl PhaseFields {
    pub fn len(&self) -> usize {
        self.eps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eps.is_empty()
    }

    pub fn eps_s(&self, node: usize) -> f64 {
        1.0 - self.eps[node] - self.eps_v[node]
    }

    pub fn at_node(&self, i: usize) -> PointFields {
        PointFields {
            eps: self.eps[i],
            s_t: self.s_t[i],
            s_h: self.s_h[i],
            s_l: self.s_l[i],
            eps_v: self.eps_v[i],
            p_l: self.p_l[i],
            p_v: self.p_v[i],
            p_t: self.p_t[i],
        }
    }

    /// Interpolate all fields with the given element nodes and shape values.
    pub fn interpolate(&self, nodes: &[usize; 4], n: &[f64; 4]) -> PointFields {
        let mix = |f: &[f64]| nodes.iter().zip(n).map(|(&k, w)| w * f[k]).sum::<f64>();
        PointFields {
            eps: mix(&self.eps),
            s_t: mix(&self.s_t),
            s_h: mix(&self.s_h),
            s_l: mix(&self.s_l),
            eps_v: mix(&self.eps_v),
            p_l: mix(&self.p_l),
            p_v: mix(&self.p_v),
            p_t: mix(&self.p_t),
        }
    }

    /// Check the saturation and volume-fraction invariants at every node.
    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        for (name, v) in [
            ("coords", self.coords.len()),
            ("S_t", self.s_t.len()),
            ("S_h", self.s_h.len()),
            ("S_l", self.s_l.len()),
            ("eps_v", self.eps_v.len()),
            ("p_l", self.p_l.len()),
            ("p_v", self.p_v.len()),
            ("p_t", self.p_t.len()),
        ] {
            if v != n {
                return Err(Error::data(format!("field {name} has {v} entries, expected {n}")));
            }
        }
        for i in 0..n {
            let p = self.at_node(i);
            let all = [
                p.eps, p.s_t, p.s_h, p.s_l, p.eps_v, p.p_l, p.p_v, p.p_t,
                self.coords[i][0], self.coords[i][1],
            ];
            if all.iter().any(|v| !v.is_finite()) {
                return Err(Error::data(format!("node {i}: non-finite field value")));
            }
            for (name, v) in [
                ("eps", p.eps),
                ("S_t", p.s_t),
                ("S_h", p.s_h),
                ("S_l", p.s_l),
                ("eps_v", p.eps_v),
                ("eps_s", self.eps_s(i)),
            ] {
                if !(-SUM_TOL..=1.0 + SUM_TOL).contains(&v) {
                    return Err(Error::data(format!("node {i}: {name} = {v} outside [0, 1]")));
                }
            }
            let sum = p.s_t + p.s_h + p.s_l;
            if (sum - 1.0).abs() > SUM_TOL {
                return Err(Error::data(format!(
                    "node {i}: saturations sum to {sum}, expected 1"
                )));
            }
        }
        Ok(())
    }

    /// Check that the fields live on the nodes of `mesh`.
    pub fn check_mesh(&self, mesh: &StructuredQuadMesh) -> Result<()> {
        if self.len() != mesh.num_nodes() {
            return Err(Error::data(format!(
                "field has {} nodes, mesh has {}",
                self.len(),
                mesh.num_nodes()
            )));
        }
        let [lx, ly] = mesh.extent();
        let tol = 1e-9 * lx.max(ly);
        for (i, (a, b)) in self.coords.iter().zip(mesh.coords()).enumerate() {
            if (a[0] - b[0]).abs() > tol || (a[1] - b[1]).abs() > tol {
                return Err(Error::data(format!(
                    "node {i}: field coordinate ({}, {}) does not match mesh ({}, {})",
                    a[0], a[1], b[0], b[1]
                )));
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = FIELD_COLUMNS.join(" ");
        s.push('\n');
        for i in 0..self.len() {
            let c = self.coords[i];
            let _ = writeln!(
                s,
                "{:e} {:e} {:e} {:e} {:e} {:e} {:e} {:e} {:e} {:e}",
                c[0],
                c[1],
                self.eps[i],
                self.s_t[i],
                self.s_h[i],
                self.s_l[i],
                self.eps_v[i],
                self.p_l[i],
                self.p_v[i],
                self.p_t[i]
            );
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::data("field file is empty"))?;
        let names: Vec<&str> = header.split_whitespace().collect();
        let mut col = [0usize; 10];
        for (k, want) in FIELD_COLUMNS.iter().enumerate() {
            col[k] = names
                .iter()
                .position(|n| n == want)
                .ok_or_else(|| Error::data(format!("field file: missing column '{want}'")))?;
        }
        let mut f = PhaseFields::empty(0);
        for (lineno, line) in lines {
            let vals: Vec<&str> = line.split_whitespace().collect();
            if vals.len() != names.len() {
                return Err(Error::data(format!(
                    "field file line {}: expected {} values, found {}",
                    lineno + 1,
                    names.len(),
                    vals.len()
                )));
            }
            let mut row = [0.0; 10];
            for k in 0..10 {
                let raw = vals[col[k]];
                let v: f64 = raw.parse().map_err(|_| {
                    Error::data(format!("field file line {}: bad number '{raw}'", lineno + 1))
                })?;
                if v.is_nan() {
                    return Err(Error::data(format!(
                        "field file line {}: NaN in column {}",
                        lineno + 1,
                        FIELD_COLUMNS[k]
                    )));
                }
                row[k] = v;
            }
            f.coords.push([row[0], row[1]]);
            f.eps.push(row[2]);
            f.s_t.push(row[3]);
            f.s_h.push(row[4]);
            f.s_l.push(row[5]);
            f.eps_v.push(row[6]);
            f.p_l.push(row[7]);
            f.p_v.push(row[8]);
            f.p_t.push(row[9]);
        }
        f.validate()?;
        Ok(f)
    }

    fn empty(n: usize) -> Self {
        PhaseFields {
            coords: Vec::with_capacity(n),
            eps: Vec::with_capacity(n),
            s_t: Vec::with_capacity(n),
            s_h: Vec::with_capacity(n),
            s_l: Vec::with_capacity(n),
            eps_v: Vec::with_capacity(n),
            p_l: Vec::with_capacity(n),
            p_v: Vec::with_capacity(n),
            p_t: Vec::with_capacity(n),
        }
    }

    /// Spatially uniform fields on a mesh.
    pub fn uniform(mesh: &StructuredQuadMesh, at: PointFields) -> Result<Self> {
        let mut f = PhaseFields::empty(mesh.num_nodes());
        for &c in mesh.coords() {
            f.push(c, at);
        }
        f.validate()?;
        Ok(f)
    }

    fn push(&mut self, c: [f64; 2], p: PointFields) {
        self.coords.push(c);
        self.eps.push(p.eps);
        self.s_t.push(p.s_t);
        self.s_h.push(p.s_h);
        self.s_l.push(p.s_l);
        self.eps_v.push(p.eps_v);
        self.p_l.push(p.p_l);
        self.p_v.push(p.p_v);
        self.p_t.push(p.p_t);
    }
}

pub fn load_fields(path: &Path) -> Result<PhaseFields> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    PhaseFields::parse(&text)
}

pub fn save_fields(fields: &PhaseFields, path: &Path) -> Result<()> {
    crate::io::write_atomic(path, fields.to_text().as_bytes())
}

/// Smooth indicator: 1 well inside, 0 well outside, 1/2 on the interface.
fn tanh_step(signed_distance: f64, width: f64) -> f64 {
    0.5 * (1.0 - (signed_distance / width).tanh())
}

/// Parameters shared by the analytic tumour generators.
#[derive(Debug, Clone, PartialEq)]
pub struct TumourProfile {
    /// Width of the tanh transition between tumour and host.
    pub transition_width: f64,
    /// ECM solid volume fraction (uniform).
    pub solid_fraction: f64,
    /// Homogenised vascular volume fraction in the host tissue.
    pub host_vessel_fraction: f64,
    /// Vascular volume fraction in the tumour core.
    pub core_vessel_fraction: f64,
    /// IF saturation in the host.
    pub host_if_saturation: f64,
    /// IF saturation in the tumour core.
    pub core_if_saturation: f64,
    /// Interstitial pressure at the tumour centre.
    pub peak_if_pressure: f64,
    /// Width of the pressure drop outside the tumour rim.
    pub pressure_width: f64,
    /// Distance from the rim to the centre of the pressure drop. A positive
    /// offset keeps the steep IF pressure gradient in well-hydrated host
    /// tissue.
    pub pressure_offset: f64,
    /// Homogenised blood pressure (uniform).
    pub vessel_pressure: f64,
    /// Tumour-cell pressure at the centre; decays like the cell saturation.
    pub peak_cell_pressure: f64,
}

impl Default for TumourProfile {
    fn default() -> Self {
        TumourProfile {
            transition_width: 40e-6,
            solid_fraction: 0.2,
            host_vessel_fraction: 0.028,
            core_vessel_fraction: 0.0,
            host_if_saturation: 0.5,
            core_if_saturation: 5e-4,
            peak_if_pressure: 4.0 * 133.322_387_415,
            pressure_width: 100e-6,
            pressure_offset: 0.0,
            vessel_pressure: 2000.0,
            peak_cell_pressure: 700.0,
        }
    }
}

impl TumourProfile {
    fn check(&self) -> Result<()> {
        if !(self.transition_width > 0.0) {
            return Err(Error::config("tumour transition width must be positive"));
        }
        if !(self.pressure_width > 0.0) {
            return Err(Error::config("pressure transition width must be positive"));
        }
        for (name, v) in [
            ("solid_fraction", self.solid_fraction),
            ("host_vessel_fraction", self.host_vessel_fraction),
            ("core_vessel_fraction", self.core_vessel_fraction),
            ("host_if_saturation", self.host_if_saturation),
            ("core_if_saturation", self.core_if_saturation),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(format!("{name} = {v} outside [0, 1]")));
            }
        }
        let max_v = self.host_vessel_fraction.max(self.core_vessel_fraction);
        if self.solid_fraction + max_v > 1.0 {
            return Err(Error::config("solid and vessel fractions exceed 1"));
        }
        Ok(())
    }

    /// Fields at a point given the tumour indicator `phi` (1 in the core) and
    /// the normalised pressure shape `pressure_shape` in [0, 1].
    fn point(&self, phi: f64, pressure_shape: f64) -> PointFields {
        let eps_v = self.core_vessel_fraction * phi + self.host_vessel_fraction * (1.0 - phi);
        let eps = 1.0 - self.solid_fraction - eps_v;
        let s_l = self.core_if_saturation * phi + self.host_if_saturation * (1.0 - phi);
        let s_t = phi * (1.0 - self.core_if_saturation);
        let s_h = (1.0 - phi) * (1.0 - self.host_if_saturation);
        PointFields {
            eps,
            s_t,
            s_h,
            s_l,
            eps_v,
            p_l: self.peak_if_pressure * pressure_shape,
            p_v: self.vessel_pressure,
            p_t: self.peak_cell_pressure * phi,
        }
    }
}

/// Radially symmetric tumour centred at `centre` with radius `radius`.
///
/// The interstitial pressure equals the peak at the centre and falls
/// monotonically to zero at the domain point farthest from the centre.
pub fn generate_idealised_tumour(
    mesh: &StructuredQuadMesh,
    centre: [f64; 2],
    radius: f64,
    profile: &TumourProfile,
) -> Result<PhaseFields> {
    profile.check()?;
    let [lx, ly] = mesh.extent();
    if !(radius > 0.0 && radius < lx.min(ly)) {
        return Err(Error::config(format!(
            "tumour radius {radius} must be positive and below the smaller domain extent {}",
            lx.min(ly)
        )));
    }
    let far = [[0.0, 0.0], [lx, 0.0], [lx, ly], [0.0, ly]]
        .iter()
        .map(|c| ((c[0] - centre[0]).powi(2) + (c[1] - centre[1]).powi(2)).sqrt())
        .fold(0.0, f64::max);
    let shape = |r: f64| tanh_step(r - radius - profile.pressure_offset, profile.pressure_width);
    let (s0, s1) = (shape(0.0), shape(far));
    let mut f = PhaseFields::empty(mesh.num_nodes());
    for &c in mesh.coords() {
        let r = ((c[0] - centre[0]).powi(2) + (c[1] - centre[1]).powi(2)).sqrt();
        let phi = tanh_step(r - radius, profile.transition_width);
        let p_shape = ((shape(r) - s1) / (s0 - s1)).clamp(0.0, 1.0);
        f.push(c, profile.point(phi, p_shape));
    }
    f.validate()?;
    Ok(f)
}

/// Elliptic tumour with semi-axes `a` (along x) and `b` (along y).
pub fn generate_ellipse_tumour(
    mesh: &StructuredQuadMesh,
    a: f64,
    b: f64,
    centre: [f64; 2],
    profile: &TumourProfile,
) -> Result<PhaseFields> {
    profile.check()?;
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::config("ellipse semi-axes must be positive"));
    }
    let scale = a.min(b);
    // signed distance approximated by the scaled level set (rho - 1) * min(a, b)
    let level = |c: [f64; 2]| {
        let rho = (((c[0] - centre[0]) / a).powi(2) + ((c[1] - centre[1]) / b).powi(2)).sqrt();
        (rho - 1.0) * scale
    };
    let [lx, ly] = mesh.extent();
    let far = [[0.0, 0.0], [lx, 0.0], [lx, ly], [0.0, ly]]
        .into_iter()
        .map(level)
        .fold(f64::MIN, f64::max);
    let shape = |d: f64| tanh_step(d - profile.pressure_offset, profile.pressure_width);
    let (s0, s1) = (shape(-scale), shape(far));
    let mut f = PhaseFields::empty(mesh.num_nodes());
    for &c in mesh.coords() {
        let d = level(c);
        let phi = tanh_step(d, profile.transition_width);
        let p_shape = ((shape(d) - s1) / (s0 - s1)).clamp(0.0, 1.0);
        f.push(c, profile.point(phi, p_shape));
    }
    f.validate()?;
    Ok(f)
}

/// Transport parameters of the nanoparticle mass balance, in SI units.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportCoefficients {
    /// Nanoparticle diffusivity in the IF.
    pub diffusivity: f64,
    /// Darcy mobility k/mu of the IF in the ECM.
    pub mobility: f64,
    pub rho_l: f64,
    pub rho_v: f64,
    /// Vessel-wall hydraulic conductivity L_p.
    pub hydraulic_conductivity: f64,
    pub surface_to_volume: f64,
    /// Vessel-wall permeability P.
    pub wall_permeability: f64,
    pub reflection: f64,
    pub oncotic_vessel: f64,
    pub oncotic_if: f64,
    /// Lymphatic filtration coefficient (L_p S/V)^ly.
    pub lymph_filtration: f64,
    pub lymph_pressure: f64,
    pub lymph_collapse_pressure: f64,
    /// Nanoparticle diffusivity along discrete vessels.
    pub vessel_diffusivity: f64,
}

impl Default for TransportCoefficients {
    fn default() -> Self {
        TransportCoefficients {
            diffusivity: 1.2955e-11,
            mobility: 1.0e-12,
            rho_l: 1000.0,
            rho_v: 1000.0,
            hydraulic_conductivity: 1.0e-10,
            surface_to_volume: 7000.0,
            wall_permeability: 2.0e-9,
            reflection: 0.0,
            oncotic_vessel: 0.0,
            oncotic_if: 0.0,
            lymph_filtration: 1.04e-6,
            lymph_pressure: 0.0,
            lymph_collapse_pressure: 133.0,
            vessel_diffusivity: 1.2955e-11,
        }
    }
}

impl TransportCoefficients {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("diffusivity", self.diffusivity),
            ("mobility", self.mobility),
            ("rho_l", self.rho_l),
            ("rho_v", self.rho_v),
            ("hydraulic_conductivity", self.hydraulic_conductivity),
            ("surface_to_volume", self.surface_to_volume),
            ("wall_permeability", self.wall_permeability),
            ("lymph_filtration", self.lymph_filtration),
            ("vessel_diffusivity", self.vessel_diffusivity),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{name} must be non-negative, got {v}")));
            }
        }
        if !(self.rho_l > 0.0 && self.rho_v > 0.0) {
            return Err(Error::config("densities must be positive"));
        }
        if !(0.0..=1.0).contains(&self.reflection) {
            return Err(Error::config("reflection coefficient must lie in [0, 1]"));
        }
        if self.lymph_pressure < 0.0 {
            return Err(Error::config("lymphatic pressure must be non-negative"));
        }
        if self.lymph_collapse_pressure == 0.0 {
            return Err(Error::config("lymphatic collapsing pressure must be non-zero"));
        }
        Ok(())
    }

    /// Oncotic correction `sigma (pi^v - pi^l)`.
    pub fn oncotic_term(&self) -> f64 {
        self.reflection * (self.oncotic_vessel - self.oncotic_if)
    }
}

/// IF Darcy flux `q = -(k/mu) grad p^l` at the 2x2 Gauss points, indexed
/// `element * 4 + point`.
pub fn darcy_velocity(
    mesh: &StructuredQuadMesh,
    fields: &PhaseFields,
    coeffs: &TransportCoefficients,
) -> Vec<[f64; 2]> {
    let mut out = Vec::with_capacity(mesh.num_elements() * 4);
    for e in 0..mesh.num_elements() {
        let nodes = mesh.element_nodes(e);
        for qp in mesh.quadrature(e) {
            // differences against node 0 make constant fields give exactly zero
            let p0 = fields.p_l[nodes[0]];
            let mut g = [0.0; 2];
            for (k, &node) in nodes.iter().enumerate().skip(1) {
                let dp = fields.p_l[node] - p0;
                g[0] += qp.grad[k][0] * dp;
                g[1] += qp.grad[k][1] * dp;
            }
            out.push([-coeffs.mobility * g[0], -coeffs.mobility * g[1]]);
        }
    }
    out
}
