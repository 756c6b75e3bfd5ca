use std::path::{Path, PathBuf};

use crate::bioheat::{PerPhase, PerfusionSink, ThermalParams};
use crate::error::{Error, Result};
use crate::fields::{PointFields, TransportCoefficients, TumourProfile};
use crate::io::config::{RawConfig, Section};
use crate::linsolve::{PreconditionerKind, SolveOptions, Strategy};
use crate::mesh::Side;
use crate::protocol::{Protocol, Window};
use crate::transport::VascularMode;
use crate::units::Dim;
use crate::vasculature::NetworkSpec;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshSpec {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FieldSource {
    Spherical {
        centre: [f64; 2],
        radius: f64,
        profile: TumourProfile,
    },
    Ellipse {
        centre: [f64; 2],
        semi_axes: [f64; 2],
        profile: TumourProfile,
    },
    Uniform(PointFields),
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub enum NetworkSource {
    Generate(NetworkSpec),
    File(PathBuf),
}

/// Fixed nanoparticle distribution used instead of solving transport.
#[derive(Debug, Clone, PartialEq)]
pub enum Prescribed {
    /// `omega` times the tumour-cell indicator.
    Tumour { omega: f64 },
    /// Gaussian clusters inside the tumour with the same particle mass as the
    /// `Tumour` distribution of the same `omega`.
    Clusters { omega: f64, count: usize, width: f64, spread: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputPlan {
    /// Grid snapshot every this many steps (0 disables periodic snapshots).
    pub snapshot_every: usize,
    /// Extra snapshot times in seconds.
    pub snapshot_times: Vec<f64>,
    pub csv: bool,
    pub probes: Vec<(String, [f64; 2])>,
}

/// Fully resolved scenario in SI units.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub name: String,
    pub mesh: MeshSpec,
    pub fields: FieldSource,
    pub mode: VascularMode,
    pub network: Option<NetworkSource>,
    /// Maximum 1D cell length on the network.
    pub network_cell: f64,
    pub prescribed: Option<Prescribed>,
    pub coeffs: TransportCoefficients,
    pub slab_thickness: f64,
    pub streamline_diffusion: bool,
    pub thermal: ThermalParams,
    pub initial_temperature: f64,
    pub sink: PerfusionSink,
    pub convection: bool,
    pub protocol: Protocol,
    pub dt: f64,
    pub steps: usize,
    pub output: OutputPlan,
    pub solver: SolveOptions,
    raw: RawConfig,
}

const SECTIONS: &[&str] = &[
    "scenario",
    "mesh",
    "fields",
    "transport",
    "network",
    "nanoparticles",
    "heat",
    "perfusion",
    "protocol",
    "time",
    "output",
    "solver",
];

fn profile_from(s: &Section<'_>) -> Result<TumourProfile> {
    let d = TumourProfile::default();
    Ok(TumourProfile {
        transition_width: s.quantity_or("transition_width", Dim::LENGTH, d.transition_width)?,
        solid_fraction: s.quantity_or("solid_fraction", Dim::NONE, d.solid_fraction)?,
        host_vessel_fraction: s.quantity_or("host_vessel_fraction", Dim::NONE, d.host_vessel_fraction)?,
        core_vessel_fraction: s.quantity_or("core_vessel_fraction", Dim::NONE, d.core_vessel_fraction)?,
        host_if_saturation: s.quantity_or("host_if_saturation", Dim::NONE, d.host_if_saturation)?,
        core_if_saturation: s.quantity_or("core_if_saturation", Dim::NONE, d.core_if_saturation)?,
        peak_if_pressure: s.quantity_or("peak_if_pressure", Dim::PRESSURE, d.peak_if_pressure)?,
        pressure_width: s.quantity_or("pressure_width", Dim::LENGTH, d.pressure_width)?,
        pressure_offset: s.quantity_or("pressure_offset", Dim::LENGTH, d.pressure_offset)?,
        vessel_pressure: s.quantity_or("vessel_pressure", Dim::PRESSURE, d.vessel_pressure)?,
        peak_cell_pressure: s.quantity_or("peak_cell_pressure", Dim::PRESSURE, d.peak_cell_pressure)?,
    })
}

fn per_phase(s: &Section<'_>, key: &str, dim: Dim, default: f64) -> Result<PerPhase> {
    let base = s.quantity_or(key, dim, default)?;
    let get = |phase: &str| s.quantity_or(&format!("{key}.{phase}"), dim, base);
    let p = PerPhase {
        solid: get("solid")?,
        tumour: get("tumour")?,
        host: get("host")?,
        fluid: get("fluid")?,
        vessel: get("vessel")?,
    };
    for k in s.keys_with_prefix(key) {
        if !["solid", "tumour", "host", "fluid", "vessel"].contains(&k.as_str()) {
            return Err(Error::config(format!("unknown phase '{k}' in {key}.{k}")));
        }
    }
    Ok(p)
}

/// Generator settings read from a `[network]` section.
pub fn network_spec(n: &Section<'_>, default_extent: [f64; 2]) -> Result<NetworkSpec> {
    let d = NetworkSpec::default();
    let core = match (n.pair("core_centre", Dim::LENGTH)?, n.quantity("core_radius", Dim::LENGTH)?) {
        (Some(c), Some(r)) => Some((c, r)),
        (None, None) => None,
        _ => return Err(Error::config("[network] core_centre and core_radius go together")),
    };
    Ok(NetworkSpec {
        extent: n.pair("extent", Dim::LENGTH)?.unwrap_or(default_extent),
        generations: n.integer_or("generations", d.generations as u64)? as usize,
        capillary_nodes: n.integer_or("capillary_nodes", d.capillary_nodes as u64)? as usize,
        anastomosis_probability: n.quantity_or("anastomosis_probability", Dim::NONE, d.anastomosis_probability)?,
        tree_fraction: n.quantity_or("tree_fraction", Dim::NONE, d.tree_fraction)?,
        jitter: n.quantity_or("jitter", Dim::NONE, d.jitter)?,
        radius_range: n.pair("radius_range", Dim::LENGTH)?.unwrap_or(d.radius_range),
        mean_radius: n.quantity_or("mean_radius", Dim::LENGTH, d.mean_radius)?,
        seed: n.integer_or("seed", d.seed)?,
        inlet_pressure: n.quantity_or("inlet_pressure", Dim::PRESSURE, d.inlet_pressure)?,
        outlet_pressure: n.quantity_or("outlet_pressure", Dim::PRESSURE, d.outlet_pressure)?,
        inlet_concentration: 0.0,
        collapsed_core: core,
    })
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self> {
        Self::from_raw(RawConfig::load(path)?)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        Self::from_raw(RawConfig::parse(text, path)?)
    }

    /// Copy of this scenario with `section.key` replaced by `value`.
    pub fn with_override(&self, param: &str, value: &str) -> Result<Self> {
        let mut raw = self.raw.clone();
        raw.set(param, value)?;
        Self::from_raw(raw)
    }

    pub fn raw(&self) -> &RawConfig {
        &self.raw
    }

    pub fn from_raw(raw: RawConfig) -> Result<Self> {
        let scenario = raw.section("scenario");
        let name = scenario.string_or("name", "scenario");

        let m = raw.section("mesh");
        let mesh = MeshSpec {
            nx: m.integer("nx")?.ok_or_else(|| Error::config("[mesh] nx is required"))? as usize,
            ny: m.integer("ny")?.ok_or_else(|| Error::config("[mesh] ny is required"))? as usize,
            lx: m.require_quantity("lx", Dim::LENGTH)?,
            ly: m.require_quantity("ly", Dim::LENGTH)?,
        };

        let f = raw.section("fields");
        let kind = f.choice("source", &["spherical", "ellipse", "uniform", "file"], "spherical")?;
        let centre_default = [0.5 * mesh.lx, 0.5 * mesh.ly];
        let fields = match kind.as_str() {
            "spherical" => FieldSource::Spherical {
                centre: f.pair("centre", Dim::LENGTH)?.unwrap_or([0.0, mesh.ly]),
                radius: f.require_quantity("radius", Dim::LENGTH)?,
                profile: profile_from(&f)?,
            },
            "ellipse" => FieldSource::Ellipse {
                centre: f.pair("centre", Dim::LENGTH)?.unwrap_or(centre_default),
                semi_axes: f
                    .pair("semi_axes", Dim::LENGTH)?
                    .ok_or_else(|| Error::config("[fields] semi_axes is required for an ellipse"))?,
                profile: profile_from(&f)?,
            },
            "uniform" => {
                let eps_v = f.quantity_or("eps_v", Dim::NONE, 0.028)?;
                let s_l = f.quantity_or("s_l", Dim::NONE, 0.5)?;
                let s_t = f.quantity_or("s_t", Dim::NONE, 0.0)?;
                FieldSource::Uniform(PointFields {
                    eps: f.quantity_or("eps", Dim::NONE, 0.8 - eps_v)?,
                    s_t,
                    s_h: 1.0 - s_l - s_t,
                    s_l,
                    eps_v,
                    p_l: f.quantity_or("p_l", Dim::PRESSURE, 0.0)?,
                    p_v: f.quantity_or("p_v", Dim::PRESSURE, 2000.0)?,
                    p_t: f.quantity_or("p_t", Dim::PRESSURE, 0.0)?,
                })
            }
            _ => FieldSource::File(f.path("file").ok_or_else(|| Error::config("[fields] file is required"))?),
        };

        let t = raw.section("transport");
        let mode = match t.choice("mode", &["homogenised", "lumped", "discrete", "none"], "homogenised")?.as_str() {
            "homogenised" | "lumped" => VascularMode::Homogenised,
            "discrete" => VascularMode::Discrete,
            _ => VascularMode::None,
        };
        let d = TransportCoefficients::default();
        let coeffs = TransportCoefficients {
            diffusivity: t.quantity_or("diffusivity", Dim::DIFFUSIVITY, d.diffusivity)?,
            mobility: t.quantity_or("mobility", Dim::MOBILITY, d.mobility)?,
            rho_l: t.quantity_or("fluid_density", Dim::DENSITY, d.rho_l)?,
            rho_v: t.quantity_or("blood_density", Dim::DENSITY, d.rho_v)?,
            hydraulic_conductivity: t.quantity_or("hydraulic_conductivity", Dim::HYDRAULIC_CONDUCTIVITY, d.hydraulic_conductivity)?,
            surface_to_volume: t.quantity_or("surface_to_volume", Dim::INV_LENGTH, d.surface_to_volume)?,
            wall_permeability: t.quantity_or("wall_permeability", Dim::VELOCITY, d.wall_permeability)?,
            reflection: t.quantity_or("reflection", Dim::NONE, d.reflection)?,
            oncotic_vessel: t.quantity_or("oncotic_vessel", Dim::PRESSURE, d.oncotic_vessel)?,
            oncotic_if: t.quantity_or("oncotic_if", Dim::PRESSURE, d.oncotic_if)?,
            lymph_filtration: t.quantity_or("lymph_filtration", Dim::FILTRATION, d.lymph_filtration)?,
            lymph_pressure: t.quantity_or("lymph_pressure", Dim::PRESSURE, d.lymph_pressure)?,
            lymph_collapse_pressure: t.quantity_or("lymph_collapse_pressure", Dim::PRESSURE, d.lymph_collapse_pressure)?,
            vessel_diffusivity: t.quantity_or("vessel_diffusivity", Dim::DIFFUSIVITY, d.vessel_diffusivity)?,
        };
        coeffs.validate()?;
        let slab_thickness = t.quantity_or("slab_thickness", Dim::LENGTH, 1e-3)?;
        let streamline_diffusion = t.boolean_or("streamline_diffusion", false)?;

        let n = raw.section("network");
        let network = if raw.has_section("network") {
            Some(match n.path("file") {
                Some(p) => NetworkSource::File(p),
                None => NetworkSource::Generate(network_spec(&n, [mesh.lx, mesh.ly])?),
            })
        } else {
            None
        };
        let network_cell = n.quantity_or("cell_length", Dim::LENGTH, 20e-6)?;
        if mode == VascularMode::Discrete && network.is_none() {
            return Err(Error::config("transport mode 'discrete' needs a [network] section"));
        }

        let np = raw.section("nanoparticles");
        let prescribed = match np.choice("distribution", &["solved", "tumour", "clusters"], "solved")?.as_str() {
            "solved" => None,
            kind => {
                let omega = np.require_quantity("omega", Dim::NONE)?;
                Some(if kind == "tumour" {
                    Prescribed::Tumour { omega }
                } else {
                    Prescribed::Clusters {
                        omega,
                        count: np.integer_or("clusters", 4)? as usize,
                        width: np.require_quantity("cluster_width", Dim::LENGTH)?,
                        spread: np.quantity_or("cluster_spread", Dim::NONE, 0.5)?,
                    }
                })
            }
        };
        if prescribed.is_some() && mode != VascularMode::None {
            return Err(Error::config("a prescribed nanoparticle distribution needs transport mode 'none'"));
        }

        let h = raw.section("heat");
        let dt_params = ThermalParams::default();
        let mut thermal = ThermalParams {
            heat_capacity: per_phase(&h, "heat_capacity", Dim::SPECIFIC_HEAT, 3470.0)?,
            density: per_phase(&h, "density", Dim::DENSITY, 1000.0)?,
            conductivity: per_phase(&h, "conductivity", Dim::CONDUCTIVITY, 0.51)?,
            perfusion: h.quantity_or("perfusion", Dim::RATE, 0.0)?,
            vessel_exchange: h.quantity_or("vessel_exchange", Dim::HEAT_TRANSFER, dt_params.vessel_exchange)?,
            robin: [None; 4],
            body_temperature: h.quantity_or("body_temperature", Dim::TEMPERATURE, dt_params.body_temperature)?,
        };
        for side_name in h.keys_with_prefix("robin") {
            let side = Side::from_name(&side_name)
                .ok_or_else(|| Error::config(format!("unknown boundary side 'robin.{side_name}'")))?;
            thermal.set_robin(side, h.quantity(&format!("robin.{side_name}"), Dim::HEAT_TRANSFER)?);
        }
        thermal.validate()?;
        let initial_temperature = h.quantity_or("initial_temperature", Dim::TEMPERATURE, thermal.body_temperature)?;
        let convection = h.boolean_or("convection", true)?;

        let ps = raw.section("perfusion");
        let sink = match ps.choice("sink", &["auto", "lumped", "discrete", "none"], "auto")?.as_str() {
            "lumped" => PerfusionSink::Lumped,
            "discrete" => PerfusionSink::Discrete,
            "none" => PerfusionSink::None,
            _ => match mode {
                VascularMode::Homogenised => PerfusionSink::Lumped,
                VascularMode::Discrete => PerfusionSink::Discrete,
                VascularMode::None => {
                    if thermal.perfusion > 0.0 {
                        PerfusionSink::Lumped
                    } else {
                        PerfusionSink::None
                    }
                }
            },
        };
        if sink == PerfusionSink::Discrete && network.is_none() {
            return Err(Error::config("discrete perfusion sink needs a [network] section"));
        }

        let tm = raw.section("time");
        let dt = tm.quantity_or("dt", Dim::TIME, 60.0)?;
        let steps = tm.integer_or("steps", 60)? as usize;
        if !(dt > 0.0) || steps == 0 {
            return Err(Error::config("time step and step count must be positive"));
        }

        let pr = raw.section("protocol");
        let dp = Protocol::default();
        let window = |key: &str, d: Window| -> Result<Window> {
            Ok(pr.pair(key, Dim::TIME)?.map_or(d, |[a, b]| Window::new(a, b)))
        };
        let protocol = Protocol {
            injection: window("injection", dp.injection)?,
            heating: window("heating", dp.heating)?,
            omega_d: pr.quantity_or("omega_d", Dim::NONE, dp.omega_d)?,
            sar: pr.quantity_or("sar", Dim::SPECIFIC_POWER, dp.sar)?,
        };
        protocol.validate(dt * steps as f64)?;

        let o = raw.section("output");
        let mut probes = Vec::new();
        for pname in o.keys_with_prefix("probe") {
            let at = o.pair(&format!("probe.{pname}"), Dim::LENGTH)?.expect("key listed");
            if !(0.0..=mesh.lx).contains(&at[0]) || !(0.0..=mesh.ly).contains(&at[1]) {
                return Err(Error::config(format!("probe '{pname}' at {at:?} lies outside the domain")));
            }
            probes.push((pname, at));
        }
        let output = OutputPlan {
            snapshot_every: o.integer_or("snapshot_every", 0)? as usize,
            snapshot_times: o.quantities("snapshot_times", Dim::TIME)?.unwrap_or_default(),
            csv: o.boolean_or("csv", true)?,
            probes,
        };

        let s = raw.section("solver");
        let dsolve = SolveOptions::default();
        let solver = SolveOptions {
            tol: s.quantity_or("tol", Dim::NONE, dsolve.tol)?,
            max_iter: s.integer_or("max_iter", dsolve.max_iter as u64)? as usize,
            restart: s.integer_or("restart", dsolve.restart as u64)? as usize,
            direct_threshold: s.integer_or("direct_threshold", dsolve.direct_threshold as u64)? as usize,
            preconditioner: match s.choice("preconditioner", &["ilu0", "jacobi"], "ilu0")?.as_str() {
                "jacobi" => PreconditionerKind::Jacobi,
                _ => PreconditionerKind::Ilu0,
            },
            strategy: match s.choice("strategy", &["auto", "direct", "iterative"], "auto")?.as_str() {
                "direct" => Strategy::Direct,
                "iterative" => Strategy::Iterative,
                _ => Strategy::Auto,
            },
        };

        raw.reject_unused(SECTIONS)?;
        let cfg = ScenarioConfig {
            name,
            mesh,
            fields,
            mode,
            network,
            network_cell,
            prescribed,
            coeffs,
            slab_thickness,
            streamline_diffusion,
            thermal,
            initial_temperature,
            sink,
            convection,
            protocol,
            dt,
            steps,
            output,
            solver,
            raw,
        };
        log::info!("scenario '{}' resolved: {cfg:?}", cfg.name);
        Ok(cfg)
    }

    pub fn total_time(&self) -> f64 {
        self.dt * self.steps as f64
    }
}
