//! Treatment simulation driver and parameter sweeps.
//!
//! Each step advances the vessel network (discrete mode), then the IF
//! nanoparticle balance, then the heat balance with the fresh mass fractions.
//! Temperature never feeds back into transport, so this order gives the same
//! answer as a monolithic backward-Euler step.

mod scenario;

use std::path::{Path, PathBuf};

use rayon::prelude::*;

pub use scenario::{network_spec, FieldSource, MeshSpec, NetworkSource, OutputPlan, Prescribed, ScenarioConfig};

use crate::bioheat::{EnergyBalance, HeatLoad, HeatOptions, HeatSolver, ThermalState};
use crate::error::{Error, Result};
use crate::fields::{generate_ellipse_tumour, generate_idealised_tumour, load_fields, PhaseFields};
use crate::io::vtk::{write_network_snapshot, write_snapshot};
use crate::io::write_atomic;
use crate::mesh::StructuredQuadMesh;
use crate::transport::{
    line_values, DiscreteCoupling, MassBalance, TransportOptions, TransportSolver, TransportState, VascularMode,
};
use crate::vasculature::{
    embed_network, load_network, solve_network_flow, EmbeddingTable, FlowSolution, NetworkGrid, NetworkTransport,
    VesselNetwork,
};

const KELVIN: f64 = 273.15;

/// Discrete vasculature built for a scenario.
pub struct Vessels {
    pub network: VesselNetwork,
    pub flow: FlowSolution,
    pub table: EmbeddingTable,
    pub grid: NetworkGrid,
}

/// Everything that stays fixed during a run.
pub struct Scenario {
    pub config: ScenarioConfig,
    pub mesh: StructuredQuadMesh,
    pub fields: PhaseFields,
    pub vessels: Option<Vessels>,
    /// Fixed IF mass fraction when transport is not solved.
    pub prescribed: Option<Vec<f64>>,
    probe_cells: Vec<(String, [f64; 2])>,
}

fn build_fields(cfg: &ScenarioConfig, mesh: &StructuredQuadMesh) -> Result<PhaseFields> {
    let f = match &cfg.fields {
        FieldSource::Spherical { centre, radius, profile } => generate_idealised_tumour(mesh, *centre, *radius, profile)?,
        FieldSource::Ellipse { centre, semi_axes, profile } => {
            generate_ellipse_tumour(mesh, semi_axes[0], semi_axes[1], *centre, profile)?
        }
        FieldSource::Uniform(p) => PhaseFields::uniform(mesh, *p)?,
        FieldSource::File(path) => load_fields(path)?,
    };
    f.check_mesh(mesh)?;
    Ok(f)
}

fn build_vessels(cfg: &ScenarioConfig, mesh: &StructuredQuadMesh) -> Result<Option<Vessels>> {
    let Some(src) = &cfg.network else { return Ok(None) };
    let network = match src {
        NetworkSource::Generate(spec) => spec.generate()?,
        NetworkSource::File(path) => load_network(path)?,
    };
    let flow = solve_network_flow(&network)?;
    let table = embed_network(&network, mesh)?;
    let grid = NetworkGrid::new(&network, cfg.network_cell)?;
    Ok(Some(Vessels { network, flow, table, grid }))
}

/// Tumour-cell indicator `S^t / (S^t + S^h)`.
fn tumour_indicator(fields: &PhaseFields) -> Vec<f64> {
    fields
        .s_t
        .iter()
        .zip(&fields.s_h)
        .map(|(t, h)| if t + h > 0.0 { t / (t + h) } else { 0.0 })
        .collect()
}

fn tumour_frame(cfg: &ScenarioConfig) -> ([f64; 2], [f64; 2]) {
    match &cfg.fields {
        FieldSource::Spherical { centre, radius, .. } => (*centre, [*radius; 2]),
        FieldSource::Ellipse { centre, semi_axes, .. } => (*centre, *semi_axes),
        _ => ([0.5 * cfg.mesh.lx, 0.5 * cfg.mesh.ly], [0.25 * cfg.mesh.lx, 0.25 * cfg.mesh.ly]),
    }
}

impl Scenario {
    pub fn build(config: &ScenarioConfig) -> Result<Self> {
        let cfg = config.clone();
        let mesh = StructuredQuadMesh::new(cfg.mesh.nx, cfg.mesh.ny, cfg.mesh.lx, cfg.mesh.ly)?;
        let fields = build_fields(&cfg, &mesh)?;
        let vessels = build_vessels(&cfg, &mesh)?;
        let mut scenario = Scenario {
            probe_cells: cfg.output.probes.clone(),
            config: cfg,
            mesh,
            fields,
            vessels,
            prescribed: None,
        };
        scenario.prescribed = scenario.prescribed_distribution()?;
        Ok(scenario)
    }

    fn prescribed_distribution(&self) -> Result<Option<Vec<f64>>> {
        let Some(p) = &self.config.prescribed else { return Ok(None) };
        let phi = tumour_indicator(&self.fields);
        match *p {
            Prescribed::Tumour { omega } => Ok(Some(phi.iter().map(|v| omega * v).collect())),
            Prescribed::Clusters { omega, count, width, spread } => {
                if count == 0 || !(width > 0.0) {
                    return Err(Error::config("cluster count and width must be positive"));
                }
                let (c, ax) = tumour_frame(&self.config);
                let centres: Vec<[f64; 2]> = (0..count)
                    .map(|k| {
                        let th = 2.0 * std::f64::consts::PI * k as f64 / count as f64 + 0.25 * std::f64::consts::PI;
                        [c[0] + spread * ax[0] * th.cos(), c[1] + spread * ax[1] * th.sin()]
                    })
                    .collect();
                let raw: Vec<f64> = self
                    .mesh
                    .coords()
                    .iter()
                    .zip(&phi)
                    .map(|(x, f)| {
                        let g: f64 = centres
                            .iter()
                            .map(|m| (-((x[0] - m[0]).powi(2) + (x[1] - m[1]).powi(2)) / (2.0 * width * width)).exp())
                            .sum();
                        g * f
                    })
                    .collect();
                let homogeneous: Vec<f64> = phi.iter().map(|v| omega * v).collect();
                let target = self.particle_mass(&homogeneous)?;
                let got = self.particle_mass(&raw)?;
                if !(got > 0.0) {
                    return Err(Error::config("particle clusters do not overlap the tumour"));
                }
                Ok(Some(raw.iter().map(|v| v * target / got).collect()))
            }
        }
    }

    /// Integrated IF particle mass per unit depth, `int rho_l eps S^l omega`.
    pub fn particle_mass(&self, omega_if: &[f64]) -> Result<f64> {
        let weight: Vec<f64> = (0..self.mesh.num_nodes())
            .map(|i| self.config.coeffs.rho_l * self.fields.eps[i] * self.fields.s_l[i] * omega_if[i])
            .collect();
        Ok(self.mesh.integrate(&weight))
    }

    fn discrete(&self) -> Option<DiscreteCoupling<'_>> {
        self.vessels.as_ref().map(|v| DiscreteCoupling {
            network: &v.network,
            flow: &v.flow,
            table: &v.table,
        })
    }

    fn heat_solver(&self) -> Result<HeatSolver> {
        let cfg = &self.config;
        let opts = HeatOptions {
            slab_thickness: cfg.slab_thickness,
            convection: cfg.convection,
            solve: cfg.solver,
        };
        HeatSolver::new(
            &self.mesh,
            &self.fields,
            &cfg.thermal,
            &cfg.coeffs,
            cfg.sink,
            self.vessels.as_ref().map(|v| (&v.network, &v.table)),
            &opts,
        )
    }

    fn transport_solver(&self) -> Result<Option<TransportSolver>> {
        let cfg = &self.config;
        if cfg.mode == VascularMode::None {
            return Ok(None);
        }
        let opts = TransportOptions {
            slab_thickness: cfg.slab_thickness,
            streamline_diffusion: cfg.streamline_diffusion,
            solve: cfg.solver,
        };
        let coupling = if cfg.mode == VascularMode::Discrete { self.discrete() } else { None };
        TransportSolver::new(&self.mesh, &self.fields, &cfg.coeffs, cfg.mode, coupling, &opts).map(Some)
    }

    fn temperature_stats(&self, t: &[f64]) -> (f64, f64, f64) {
        let area = self.config.mesh.lx * self.config.mesh.ly;
        let mean = self.mesh.integrate(t) / area;
        let max = t.iter().copied().fold(f64::MIN, f64::max);
        let min = t.iter().copied().fold(f64::MAX, f64::min);
        (mean, max, min)
    }
}

/// One row of the time series. Temperatures in kelvin.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub t: f64,
    pub t_mean: f64,
    pub t_max: f64,
    pub t_min: f64,
    pub probes: Vec<f64>,
    /// Particle mass in the IF of the slab (kg).
    pub np_mass_if: f64,
    /// Particle mass in the blood (kg).
    pub np_mass_vessel: f64,
    pub mass_balance: Option<MassBalance>,
    pub energy: EnergyBalance,
}

/// Inputs of every heat step, kept for replay.
#[derive(Debug, Clone, Default)]
pub struct History {
    pub omega_if: Vec<Vec<f64>>,
    pub omega_v: Vec<Vec<f64>>,
    pub line_omega: Vec<Option<Vec<f64>>>,
    pub temperature: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out_dir: Option<PathBuf>,
    pub keep_history: bool,
}

#[derive(Debug)]
pub struct RunResult {
    pub probe_names: Vec<String>,
    pub records: Vec<StepRecord>,
    pub snapshots: Vec<PathBuf>,
    pub csv: Option<PathBuf>,
    pub thermal: ThermalState,
    pub transport: TransportState,
    pub history: Option<History>,
}

impl RunResult {
    /// Largest mean temperature and the time it occurs.
    pub fn peak_mean(&self) -> (f64, f64) {
        self.records
            .iter()
            .fold((f64::MIN, 0.0), |acc, r| if r.t_mean > acc.0 { (r.t_mean, r.t) } else { acc })
    }

    pub fn max_temperature(&self) -> f64 {
        self.records.iter().map(|r| r.t_max).fold(f64::MIN, f64::max)
    }

    pub fn final_record(&self) -> &StepRecord {
        self.records.last().expect("a run has at least one step")
    }

    /// Record whose time is closest to `t`.
    pub fn at_time(&self, t: f64) -> &StepRecord {
        self.records
            .iter()
            .min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()))
            .expect("a run has at least one step")
    }
}

/// CSV header of the time series.
pub fn csv_header(probe_names: &[String]) -> Vec<String> {
    let mut h: Vec<String> = ["step", "t", "T_mean", "T_max", "T_min"].iter().map(|s| s.to_string()).collect();
    h.extend(probe_names.iter().map(|p| format!("probe_{p}")));
    h.extend(
        ["np_mass_if", "np_mass_vessel", "mass_balance_rel", "energy_balance_rel"]
            .iter()
            .map(|s| s.to_string()),
    );
    h
}

fn csv_text(probe_names: &[String], records: &[StepRecord]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let fail = |e: csv::Error| Error::data(format!("csv: {e}"));
    w.write_record(csv_header(probe_names)).map_err(fail)?;
    for r in records {
        let mut row = vec![
            r.step.to_string(),
            r.t.to_string(),
            (r.t_mean - KELVIN).to_string(),
            (r.t_max - KELVIN).to_string(),
            (r.t_min - KELVIN).to_string(),
        ];
        row.extend(r.probes.iter().map(|p| (p - KELVIN).to_string()));
        row.push(r.np_mass_if.to_string());
        row.push(r.np_mass_vessel.to_string());
        row.push(r.mass_balance.map_or(0.0, |m| m.relative_residual).to_string());
        row.push(r.energy.relative_residual.to_string());
        w.write_record(&row).map_err(fail)?;
    }
    w.into_inner().map_err(|e| Error::data(format!("csv: {e}")))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

struct Snapshotter<'a> {
    scenario: &'a Scenario,
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Snapshotter<'_> {
    fn wanted(&self, step: usize, t: f64) -> bool {
        let plan = &self.scenario.config.output;
        let dt = self.scenario.config.dt;
        step == self.scenario.config.steps
            || (plan.snapshot_every > 0 && step % plan.snapshot_every == 0)
            || plan.snapshot_times.iter().any(|&s| (s - t).abs() < 0.5 * dt)
    }

    fn write(
        &mut self,
        step: usize,
        temperature: &[f64],
        tr: &TransportState,
        sar: f64,
        vessel: Option<&NetworkTransport>,
    ) -> Result<()> {
        let sc = self.scenario;
        let f = &sc.fields;
        let c = &sc.config.coeffs;
        let t_c: Vec<f64> = temperature.iter().map(|t| t - KELVIN).collect();
        let q: Vec<f64> = (0..sc.mesh.num_nodes())
            .map(|i| sar * (c.rho_v * f.eps_v[i] * tr.omega_v[i] + c.rho_l * f.eps[i] * f.s_l[i] * tr.omega_if[i]))
            .collect();
        let path = self.dir.join(format!("step_{step:06}.vtk"));
        write_snapshot(
            &sc.mesh,
            &[
                ("T", &t_c),
                ("omega_if", &tr.omega_if),
                ("omega_v", &tr.omega_v),
                ("S_t", &f.s_t),
                ("eps_v", &f.eps_v),
                ("p_l", &f.p_l),
                ("Q", &q),
            ],
            &path,
        )?;
        self.written.push(path);
        if let (Some(v), Some(nt)) = (&sc.vessels, vessel) {
            let radius: Vec<f64> = v.network.segments.iter().map(|s| s.radius).collect();
            let path = self.dir.join(format!("network_{step:06}.vtk"));
            write_network_snapshot(
                &v.network,
                &[("R", &radius), ("omega", &nt.segment_means()), ("Q", &v.flow.flow)],
                &path,
            )?;
            self.written.push(path);
        }
        Ok(())
    }
}

/// Run the full treatment described by `config`.
pub fn run_simulation(config: &ScenarioConfig, opts: &RunOptions) -> Result<RunResult> {
    let sc = Scenario::build(config)?;
    run_scenario(&sc, opts)
}

pub fn run_scenario(sc: &Scenario, opts: &RunOptions) -> Result<RunResult> {
    let cfg = &sc.config;
    let n = sc.mesh.num_nodes();
    let mut heat = sc.heat_solver()?;
    let mut transport = sc.transport_solver()?;
    let mut vessel = sc
        .vessels
        .as_ref()
        .filter(|_| cfg.mode == VascularMode::Discrete)
        .map(|v| NetworkTransport::new(v.grid.clone(), cfg.coeffs.vessel_diffusivity, cfg.coeffs.rho_v));
    let mut tstate = TransportState::new(n);
    if let Some(w) = &sc.prescribed {
        tstate.omega_if = w.clone();
    }
    let mut thermal = ThermalState::uniform(n, cfg.initial_temperature);

    let mut snap = match &opts.out_dir {
        Some(dir) => {
            ensure_dir(dir)?;
            let sdir = dir.join("snapshots");
            ensure_dir(&sdir)?;
            Some(Snapshotter {
                scenario: sc,
                dir: sdir,
                written: Vec::new(),
            })
        }
        None => None,
    };
    let mut history = opts.keep_history.then(History::default);
    let mut records = Vec::with_capacity(cfg.steps);
    let eps_v_area = sc.mesh.integrate(&sc.fields.eps_v);

    for step in 1..=cfg.steps {
        let t_new = step as f64 * cfg.dt;
        let mut line = None;
        if let (Some(nt), Some(v), Some(tr)) = (vessel.as_mut(), &sc.vessels, transport.as_ref()) {
            let exchange = tr.line_exchange(&tstate.omega_if);
            let inlet = cfg.protocol.injecting(t_new).then_some(cfg.protocol.omega_d);
            nt.advance(&v.network, &v.flow, cfg.dt, inlet, Some((&v.table, &exchange)))
                .map_err(|e| e.at_step(step, "vasculature"))?;
            line = Some(line_values(&v.table, nt));
        }
        let balance = match transport.as_mut() {
            Some(tr) => Some(
                tr.step(&mut tstate, cfg.protocol.vessel_fraction(t_new), line.as_deref(), cfg.dt)
                    .map_err(|e| e.at_step(step, "transport"))?,
            ),
            None => {
                tstate.t = t_new;
                None
            }
        };
        let sar = cfg.protocol.sar_at(t_new);
        let load = HeatLoad {
            sar,
            omega_if: Some(&tstate.omega_if),
            omega_vessel: (cfg.mode == VascularMode::Homogenised).then_some(tstate.omega_v.as_slice()),
            line_omega: line.as_deref(),
            ..Default::default()
        };
        let energy = heat.step(&mut thermal, &load, cfg.dt).map_err(|e| e.at_step(step, "bioheat"))?;

        let (t_mean, t_max, t_min) = sc.temperature_stats(&thermal.temperature);
        let probes = sc
            .probe_cells
            .iter()
            .map(|(_, x)| sc.mesh.interpolate(&thermal.temperature, *x).unwrap_or(f64::NAN))
            .collect();
        let np_mass_if = match &transport {
            Some(tr) => tr.mass_in_slab(&tstate.omega_if),
            None => sc.particle_mass(&tstate.omega_if)? * cfg.slab_thickness,
        };
        let np_mass_vessel = match (&vessel, &sc.vessels) {
            (Some(nt), Some(v)) => nt.total_mass(&v.network),
            _ if cfg.mode == VascularMode::Homogenised => {
                cfg.coeffs.rho_v * eps_v_area * tstate.omega_v.first().copied().unwrap_or(0.0) * cfg.slab_thickness
            }
            _ => 0.0,
        };
        records.push(StepRecord {
            step,
            t: t_new,
            t_mean,
            t_max,
            t_min,
            probes,
            np_mass_if,
            np_mass_vessel,
            mass_balance: balance,
            energy,
        });
        if let Some(h) = history.as_mut() {
            h.omega_if.push(tstate.omega_if.clone());
            h.omega_v.push(tstate.omega_v.clone());
            h.line_omega.push(line.clone());
            h.temperature.push(thermal.temperature.clone());
        }
        if let Some(s) = snap.as_mut() {
            if s.wanted(step, t_new) {
                s.write(step, &thermal.temperature, &tstate, sar, vessel.as_ref())?;
            }
        }
        log::debug!("step {step}: t = {t_new} s, mean T = {:.4} degC", t_mean - KELVIN);
    }

    let probe_names: Vec<String> = sc.probe_cells.iter().map(|(n, _)| n.clone()).collect();
    let mut csv_path = None;
    if let Some(dir) = &opts.out_dir {
        if cfg.output.csv {
            let path = dir.join("timeseries.csv");
            write_atomic(&path, &csv_text(&probe_names, &records)?)?;
            csv_path = Some(path);
        }
    }
    Ok(RunResult {
        probe_names,
        records,
        snapshots: snap.map(|s| s.written).unwrap_or_default(),
        csv: csv_path,
        thermal,
        transport: tstate,
        history,
    })
}

/// Re-run only the heat balance from stored transport fields. Returns the
/// temperature after every step.
pub fn replay_heat(sc: &Scenario, history: &History) -> Result<Vec<Vec<f64>>> {
    let cfg = &sc.config;
    let mut heat = sc.heat_solver()?;
    let mut thermal = ThermalState::uniform(sc.mesh.num_nodes(), cfg.initial_temperature);
    let mut out = Vec::with_capacity(history.omega_if.len());
    for (k, w) in history.omega_if.iter().enumerate() {
        let t_new = (k + 1) as f64 * cfg.dt;
        let load = HeatLoad {
            sar: cfg.protocol.sar_at(t_new),
            omega_if: Some(w),
            omega_vessel: (cfg.mode == VascularMode::Homogenised).then_some(history.omega_v[k].as_slice()),
            line_omega: history.line_omega[k].as_deref(),
            ..Default::default()
        };
        heat.step(&mut thermal, &load, cfg.dt).map_err(|e| e.at_step(k + 1, "bioheat"))?;
        out.push(thermal.temperature.clone());
    }
    Ok(out)
}

/// Summary of one sweep run. Temperatures in kelvin.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: String,
    pub peak_mean: f64,
    pub peak_time: f64,
    pub final_mean: f64,
    pub max_temperature: f64,
}

/// Run `base` once per value of `param` (a `section.key` path). Runs are
/// independent and may execute concurrently; rows follow `values`.
pub fn run_sweep(base: &ScenarioConfig, param: &str, values: &[String], out_dir: Option<&Path>) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Ok(Vec::new());
    }
    let configs = values
        .iter()
        .map(|v| base.with_override(param, v))
        .collect::<Result<Vec<_>>>()?;
    let rows = configs
        .into_par_iter()
        .enumerate()
        .map(|(i, cfg)| {
            let opts = RunOptions {
                out_dir: out_dir.map(|d| d.join(format!("sweep_{i:03}"))),
                keep_history: false,
            };
            let r = run_simulation(&cfg, &opts)?;
            let (peak_mean, peak_time) = r.peak_mean();
            Ok(SweepRow {
                value: values[i].clone(),
                peak_mean,
                peak_time,
                final_mean: r.final_record().t_mean,
                max_temperature: r.max_temperature(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if let Some(dir) = out_dir {
        ensure_dir(dir)?;
        let mut w = csv::Writer::from_writer(Vec::new());
        let fail = |e: csv::Error| Error::data(format!("csv: {e}"));
        w.write_record([param, "peak_T_mean", "t_peak", "final_T_mean", "T_max"]).map_err(fail)?;
        for r in &rows {
            w.write_record([
                r.value.clone(),
                (r.peak_mean - KELVIN).to_string(),
                r.peak_time.to_string(),
                (r.final_mean - KELVIN).to_string(),
                (r.max_temperature - KELVIN).to_string(),
            ])
            .map_err(fail)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::data(format!("csv: {e}")))?;
        write_atomic(&dir.join("sweep.csv"), &bytes)?;
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = "
[scenario]
name = small
[mesh]
nx = 12
ny = 12
lx = 0.5 mm
ly = 0.5 mm
[fields]
source = spherical
radius = 0.3 mm
core_if_saturation = 0.3
[transport]
mode = homogenised
[heat]
robin.right = 20 W/(m^2*K)
robin.bottom = 20 W/(m^2*K)
[protocol]
injection = 0 s, 300 s
heating = 120 s, 600 s
sar = 2 MW/kg
[time]
dt = 30 s
steps = 20
[output]
probe.centre = 0 mm, 0.5 mm
";

    fn small() -> ScenarioConfig {
        ScenarioConfig::parse(SMALL, Path::new("small.cfg")).unwrap()
    }

    #[test]
    fn sar_zero_holds_body_temperature() {
        let cfg = small().with_override("protocol.sar", "0 W/kg").unwrap();
        let r = run_simulation(&cfg, &RunOptions::default()).unwrap();
        let tb = cfg.thermal.body_temperature;
        for rec in &r.records {
            assert!((rec.t_max - tb).abs() < 1e-10 && (rec.t_min - tb).abs() < 1e-10);
        }
    }

    #[test]
    fn heating_raises_temperature_and_balances() {
        let r = run_simulation(&small(), &RunOptions::default()).unwrap();
        assert_eq!(r.records.len(), 20);
        assert!(r.max_temperature() > small().thermal.body_temperature);
        for rec in &r.records {
            assert!(rec.energy.relative_residual < 1e-8, "{:?}", rec.energy);
            assert!(rec.mass_balance.unwrap().relative_residual < 1e-8);
        }
    }

    #[test]
    fn replay_matches_in_loop_temperatures() {
        let sc = Scenario::build(&small()).unwrap();
        let r = run_scenario(&sc, &RunOptions { out_dir: None, keep_history: true }).unwrap();
        let h = r.history.unwrap();
        let replay = replay_heat(&sc, &h).unwrap();
        for (a, b) in replay.iter().zip(&h.temperature) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn outputs_are_written_and_repeatable() {
        let dir = tempfile::tempdir().unwrap();
        let opts = |sub: &str| RunOptions {
            out_dir: Some(dir.path().join(sub)),
            keep_history: false,
        };
        let a = run_simulation(&small(), &opts("a")).unwrap();
        let b = run_simulation(&small(), &opts("b")).unwrap();
        let ta = std::fs::read(a.csv.unwrap()).unwrap();
        let tb = std::fs::read(b.csv.unwrap()).unwrap();
        assert_eq!(ta, tb);
        let text = String::from_utf8(ta).unwrap();
        assert!(text.starts_with("step,t,T_mean,T_max,T_min,probe_centre,np_mass_if"));
        assert_eq!(text.lines().count(), 21);
        assert!(a.snapshots.iter().all(|p| p.exists()));
    }

    #[test]
    fn sweep_rows_follow_values() {
        let rows = run_sweep(&small(), "protocol.sar", &["1 MW/kg".into(), "2 MW/kg".into()], None).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows[1].peak_mean > rows[0].peak_mean);
        assert!(run_sweep(&small(), "protocol.sar", &[], None).unwrap().is_empty());
        assert!(run_sweep(&small(), "protocol.sarr", &["1".into()], None).is_err());
        assert!(run_sweep(&small(), "nosuch.key", &["1".into()], None).is_err());
    }
}
