//! Manufactured-solution and closed-form checks of the assembled operators.
//!
//! Each case returns [`Metric`] rows with a machine-checkable threshold so
//! that the command line can print a report and fail on any miss.

use std::f64::consts::PI;
use std::path::Path;

use rayon::prelude::*;

use crate::bioheat::{effective_props, HeatLoad, HeatOptions, HeatSolver, PerfusionSink, ThermalParams, ThermalState};
use crate::error::{Error, Result};
use crate::fields::{PhaseFields, PointFields, TransportCoefficients};
use crate::io::write_atomic;
use crate::mesh::StructuredQuadMesh;
use crate::transport::{TransportOptions, TransportSolver, TransportState, VascularMode};
use crate::vasculature::{embed_network, BcKind, BoundaryCondition, Segment, VesselNetwork};

/// One checked quantity.
#[derive(Debug, Clone, PartialEq)]
pub struct Metric {
    pub case: String,
    pub metric: String,
    pub value: f64,
    /// Human-readable acceptance band, e.g. `[1.9, 2.1]` or `<= 1e-3`.
    pub threshold: String,
    pub pass: bool,
}

impl Metric {
    fn band(case: &str, metric: &str, value: f64, lo: f64, hi: f64) -> Self {
        Metric {
            case: case.into(),
            metric: metric.into(),
            value,
            threshold: format!("[{lo}, {hi}]"),
            pass: (lo..=hi).contains(&value),
        }
    }

    fn at_most(case: &str, metric: &str, value: f64, limit: f64) -> Self {
        Metric {
            case: case.into(),
            metric: metric.into(),
            value,
            threshold: format!("<= {limit:e}"),
            pass: value.abs() <= limit,
        }
    }
}

pub const CASES: [&str; 4] = ["mms-heat", "mms-transport", "pennes", "line-source"];

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

const GAUSS_3: [(f64, f64); 3] = [(-0.774_596_669_241_483_4, 5.0 / 9.0), (0.0, 8.0 / 9.0), (0.774_596_669_241_483_4, 5.0 / 9.0)];

/// `|| u_h - u ||_L2` with 3x3 Gauss points per element.
pub fn l2_error(mesh: &StructuredQuadMesh, uh: &[f64], exact: impl Fn([f64; 2]) -> f64) -> f64 {
    let mut sum = 0.0;
    for e in 0..mesh.num_elements() {
        let nodes = mesh.element_nodes(e);
        for &(xi, wx) in &GAUSS_3 {
            for &(eta, wy) in &GAUSS_3 {
                let qp = mesh.eval_at(e, [xi, eta], wx * wy);
                let v: f64 = nodes.iter().zip(qp.n).map(|(&k, n)| n * uh[k]).sum();
                sum += (v - exact(qp.x)).powi(2) * qp.dv;
            }
        }
    }
    sum.sqrt()
}

/// Consistent load `int g N_i`.
fn consistent_load(mesh: &StructuredQuadMesh, g: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
    let mut b = vec![0.0; mesh.num_nodes()];
    for e in 0..mesh.num_elements() {
        let nodes = mesh.element_nodes(e);
        for &(xi, wx) in &GAUSS_3 {
            for &(eta, wy) in &GAUSS_3 {
                let qp = mesh.eval_at(e, [xi, eta], wx * wy);
                let gv = g(qp.x);
                for (k, &node) in nodes.iter().enumerate() {
                    b[node] += gv * qp.n[k] * qp.dv;
                }
            }
        }
    }
    b
}

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

/// Errors and observed orders of a manufactured-solution study.
#[derive(Debug, Clone, PartialEq)]
pub struct Convergence {
    pub h: Vec<f64>,
    pub spatial_errors: Vec<f64>,
    pub spatial_order: f64,
    pub dt: Vec<f64>,
    pub temporal_errors: Vec<f64>,
    pub temporal_order: f64,
}

impl Convergence {
    fn monotone(errors: &[f64]) -> bool {
        errors.windows(2).all(|w| w[1] < w[0])
    }

    fn metrics(&self, case: &str) -> Vec<Metric> {
        let mut out = vec![
            Metric::band(case, "spatial_order", self.spatial_order, 1.9, 2.1),
            Metric::band(case, "temporal_order", self.temporal_order, 0.9, 1.1),
        ];
        for (name, errs) in [("spatial_errors_monotone", &self.spatial_errors), ("temporal_errors_monotone", &self.temporal_errors)] {
            let ok = Self::monotone(errs);
            out.push(Metric {
                case: case.into(),
                metric: name.into(),
                value: if ok { 1.0 } else { 0.0 },
                threshold: "= 1".into(),
                pass: ok,
            });
        }
        out
    }
}

/// Settings of a manufactured-solution study.
#[derive(Debug, Clone, PartialEq)]
pub struct MmsPlan {
    /// Element counts per side for the spatial study.
    pub levels: Vec<usize>,
    /// Time step and step count of the spatial study.
    pub spatial_dt: f64,
    pub spatial_steps: usize,
    /// Mesh and end time of the temporal study.
    pub temporal_level: usize,
    pub time_steps: Vec<f64>,
    pub temporal_end: f64,
    pub tau: f64,
}

impl Default for MmsPlan {
    fn default() -> Self {
        MmsPlan {
            levels: vec![8, 16, 32, 64],
            spatial_dt: 10.0,
            spatial_steps: 450,
            temporal_level: 128,
            time_steps: vec![60.0, 30.0, 15.0, 7.5],
            temporal_end: 600.0,
            tau: 300.0,
        }
    }
}

/// Side of the heat square; large enough that conduction does not make the
/// response quasi-static on the scale of `tau`.
const HEAT_LENGTH: f64 = 40e-3;
const TRANSPORT_LENGTH: f64 = 10e-3;
const MMS_AMPLITUDE: f64 = 2.0;

/// Heat operator with `T* = T_b + A sin(pi x/L) sin(pi y/L) (1 - exp(-t/tau))`
/// on a square held at `T_b`. Returns the relative L2 error at the end.
pub fn mms_heat_error(n: usize, dt: f64, steps: usize, tau: f64) -> Result<f64> {
    let l = HEAT_LENGTH;
    let mesh = StructuredQuadMesh::new(n, n, l, l)?;
    let fields = PhaseFields::uniform(&mesh, tissue())?;
    let params = ThermalParams::default();
    let tb = params.body_temperature;
    let (c, kappa) = effective_props(&tissue(), &params)?;
    let mut solver = HeatSolver::new(
        &mesh,
        &fields,
        &params,
        &TransportCoefficients::default(),
        PerfusionSink::None,
        None,
        &HeatOptions::default(),
    )?;
    let shape = |x: [f64; 2]| MMS_AMPLITUDE * (PI * x[0] / l).sin() * (PI * x[1] / l).sin();
    let base = consistent_load(&mesh, shape);
    let lap = 2.0 * PI * PI / (l * l);
    let boundary: Vec<(usize, f64)> = (0..mesh.num_nodes())
        .filter(|&i| mesh.is_boundary_node(i))
        .map(|i| (i, tb))
        .collect();
    let mut state = ThermalState::uniform(mesh.num_nodes(), tb);
    for k in 1..=steps {
        let t = k as f64 * dt;
        let decay = (-t / tau).exp();
        let g = c * decay / tau + kappa * lap * (1.0 - decay);
        let extra: Vec<f64> = base.iter().map(|b| g * b).collect();
        let load = HeatLoad {
            extra: Some(&extra),
            dirichlet: &boundary,
            ..Default::default()
        };
        solver.step(&mut state, &load, dt)?;
    }
    let t_end = steps as f64 * dt;
    let f = 1.0 - (-t_end / tau).exp();
    let err = l2_error(&mesh, &state.temperature, |x| tb + shape(x) * f);
    let norm = l2_error(&mesh, &vec![0.0; mesh.num_nodes()], |x| shape(x) * f);
    Ok(err / norm)
}

fn study(plan: &MmsPlan, length: f64, error: impl Fn(usize, f64, usize) -> Result<f64> + Sync) -> Result<Convergence> {
    let spatial: Vec<f64> = plan
        .levels
        .par_iter()
        .map(|&n| error(n, plan.spatial_dt, plan.spatial_steps))
        .collect::<Result<_>>()?;
    let temporal: Vec<f64> = plan
        .time_steps
        .par_iter()
        .map(|&dt| error(plan.temporal_level, dt, (plan.temporal_end / dt).round() as usize))
        .collect::<Result<_>>()?;
    let h: Vec<f64> = plan.levels.iter().map(|&n| length / n as f64).collect();
    Ok(Convergence {
        spatial_order: log_slope(&h, &spatial),
        temporal_order: log_slope(&plan.time_steps, &temporal),
        h,
        spatial_errors: spatial,
        dt: plan.time_steps.clone(),
        temporal_errors: temporal,
    })
}

pub fn mms_heat(plan: &MmsPlan) -> Result<Convergence> {
    if plan.levels.len() < 3 || plan.time_steps.len() < 3 {
        return Err(Error::config("a convergence study needs at least three levels"));
    }
    study(plan, HEAT_LENGTH, |n, dt, steps| mms_heat_error(n, dt, steps, plan.tau))
}

/// Particle transport with `w* = W cos(pi x/L) cos(pi y/L) (1 - exp(-t/tau))`
/// under a uniform Darcy flux along x and zero-flux walls.
pub fn mms_transport_error(n: usize, dt: f64, steps: usize, tau: f64) -> Result<f64> {
    let l = TRANSPORT_LENGTH;
    let mesh = StructuredQuadMesh::new(n, n, l, l)?;
    let coeffs = TransportCoefficients {
        diffusivity: 1e-8,
        ..Default::default()
    };
    let drop = 2000.0;
    let mut fields = PhaseFields::uniform(&mesh, tissue())?;
    for (p, x) in fields.p_l.iter_mut().zip(mesh.coords()) {
        *p = drop * (1.0 - x[0] / l);
    }
    let q = coeffs.mobility * drop / l;
    let s = coeffs.rho_l * tissue().fluid_fraction();
    let opts = TransportOptions::default();
    let mut solver = TransportSolver::new(&mesh, &fields, &coeffs, VascularMode::None, None, &opts)?;
    let amp = 1e-3;
    let k = PI / l;
    let shape = move |x: [f64; 2]| amp * (k * x[0]).cos() * (k * x[1]).cos();
    let dx_shape = move |x: [f64; 2]| -amp * k * (k * x[0]).sin() * (k * x[1]).cos();
    let b_shape = consistent_load(&mesh, shape);
    let b_adv = consistent_load(&mesh, |x| coeffs.rho_l * q * dx_shape(x));
    let lap = 2.0 * k * k;
    let mut state = TransportState::new(mesh.num_nodes());
    for step in 1..=steps {
        let t = step as f64 * dt;
        let decay = (-t / tau).exp();
        let g_shape = s * decay / tau + s * coeffs.diffusivity * lap * (1.0 - decay);
        let src: Vec<f64> = b_shape
            .iter()
            .zip(&b_adv)
            .map(|(a, b)| g_shape * a + (1.0 - decay) * b)
            .collect();
        solver.step_with_source(&mut state, 0.0, None, Some(&src), dt)?;
    }
    let f = 1.0 - (-(steps as f64 * dt) / tau).exp();
    let err = l2_error(&mesh, &state.omega_if, |x| shape(x) * f);
    let norm = l2_error(&mesh, &vec![0.0; mesh.num_nodes()], |x| shape(x) * f);
    Ok(err / norm)
}

pub fn mms_transport(plan: &MmsPlan) -> Result<Convergence> {
    if plan.levels.len() < 3 || plan.time_steps.len() < 3 {
        return Err(Error::config("a convergence study needs at least three levels"));
    }
    study(plan, TRANSPORT_LENGTH, |n, dt, steps| mms_transport_error(n, dt, steps, plan.tau))
}

/// Steady temperature rise of insulated, uniformly perfused tissue heated
/// at `q_p` W/m^3. Returns `(simulated, analytic)`.
pub fn pennes_uniform_steady(q_p: f64, perfusion: f64) -> Result<(f64, f64)> {
    if !(perfusion > 0.0) {
        return Err(Error::config("a steady state needs a positive perfusion rate"));
    }
    let mesh = StructuredQuadMesh::new(4, 4, 1e-3, 1e-3)?;
    let fields = PhaseFields::uniform(&mesh, tissue())?;
    let params = ThermalParams {
        perfusion,
        ..Default::default()
    };
    let coeffs = TransportCoefficients::default();
    let mut solver = HeatSolver::new(&mesh, &fields, &params, &coeffs, PerfusionSink::Lumped, None, &HeatOptions::default())?;
    // heating by particles in the IF at unit SAR
    let omega = vec![q_p / (coeffs.rho_l * tissue().fluid_fraction()); mesh.num_nodes()];
    let tb = params.body_temperature;
    let mut state = ThermalState::uniform(mesh.num_nodes(), tb);
    let load = HeatLoad {
        sar: 1.0,
        omega_if: Some(&omega),
        ..Default::default()
    };
    for _ in 0..200 {
        solver.step(&mut state, &load, 60.0)?;
    }
    let sim = mesh.integrate(&state.temperature) / 1e-6 - tb;
    let analytic = q_p / (params.density.vessel * params.heat_capacity.vessel * perfusion);
    Ok((sim, analytic))
}

/// Radial profile around a short embedded segment heated at `strength` W/kg.
#[derive(Debug, Clone, PartialEq)]
pub struct LineSourceReport {
    /// Distances from the segment centre and `T - T_b` there.
    pub radius: Vec<f64>,
    pub rise: Vec<f64>,
    /// Fitted and analytic `d(T - T_b) / d ln(1/r)`.
    pub fitted_slope: f64,
    pub analytic_slope: f64,
    /// Largest relative deviation of a local slope from the fit.
    pub slope_spread: f64,
    pub temperature: Vec<f64>,
}

pub fn line_source_steady(n: usize, strength: f64) -> Result<LineSourceReport> {
    let l = 10e-3;
    let mesh = StructuredQuadMesh::new(n, n, l, l)?;
    let h = l / n as f64;
    let half = h;
    let c = 0.5 * l;
    let radius = 10e-6;
    let network = VesselNetwork::new(
        vec![[c - half, c], [c + half, c]],
        vec![Segment {
            nodes: [0, 1],
            radius,
            collapsed: false,
        }],
        vec![
            BoundaryCondition { node: 0, kind: BcKind::InletPressure, value: 1.0 },
            BoundaryCondition { node: 1, kind: BcKind::OutletPressure, value: 0.0 },
        ],
    )?;
    let table = embed_network(&network, &mesh)?;
    let fields = PhaseFields::uniform(&mesh, tissue())?;
    let params = ThermalParams::default();
    let opts = HeatOptions {
        convection: false,
        ..Default::default()
    };
    let mut solver = HeatSolver::new(
        &mesh,
        &fields,
        &params,
        &TransportCoefficients::default(),
        PerfusionSink::None,
        Some((&network, &table)),
        &opts,
    )?;
    let tb = params.body_temperature;
    let boundary: Vec<(usize, f64)> = (0..mesh.num_nodes())
        .filter(|&i| mesh.is_boundary_node(i))
        .map(|i| (i, tb))
        .collect();
    let ones = vec![1.0; table.points.len()];
    let mut state = ThermalState::uniform(mesh.num_nodes(), tb);
    let load = HeatLoad {
        sar: strength,
        line_omega: Some(&ones),
        dirichlet: &boundary,
        ..Default::default()
    };
    // one very long implicit step is the steady state
    solver.step(&mut state, &load, 1e12)?;

    let (_, kappa) = effective_props(&tissue(), &params)?;
    let power = 2.0 * half * params.density.vessel * PI * radius * radius * strength / opts.slab_thickness;
    let analytic_slope = power / (2.0 * PI * kappa);
    let mid = n / 2;
    let mut r = Vec::new();
    let mut rise = Vec::new();
    for j in (mid + 4)..=(mid + n / 6) {
        r.push((j - mid) as f64 * h);
        rise.push(state.temperature[mesh.node_id(mid, j)] - tb);
    }
    let x: Vec<f64> = r.iter().map(|v| -v.ln()).collect();
    let fit = linear_slope(&x, &rise);
    let spread = x
        .windows(2)
        .zip(rise.windows(2))
        .map(|(xs, ys)| ((ys[1] - ys[0]) / (xs[1] - xs[0]) - fit).abs() / fit.abs().max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max);
    Ok(LineSourceReport {
        radius: r,
        rise,
        fitted_slope: fit,
        analytic_slope,
        slope_spread: if strength == 0.0 { 0.0 } else { spread },
        temperature: state.temperature,
    })
}

fn linear_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Run one named case (or `all`) and collect its metrics.
pub fn run_case(name: &str) -> Result<Vec<Metric>> {
    match name {
        "all" => {
            let parts: Vec<Vec<Metric>> = CASES.par_iter().map(|c| run_case(c)).collect::<Result<_>>()?;
            Ok(parts.into_iter().flatten().collect())
        }
        "mms-heat" => {
            let c = mms_heat(&MmsPlan::default())?;
            log::info!("mms-heat spatial errors {:?}, temporal errors {:?}", c.spatial_errors, c.temporal_errors);
            let mut m = c.metrics(name);
            let zero = mms_heat_zero_source()?;
            m.push(Metric::at_most(name, "zero_source_error", zero, 1e-12));
            Ok(m)
        }
        "mms-transport" => {
            let c = mms_transport(&MmsPlan::default())?;
            log::info!("mms-transport spatial errors {:?}, temporal errors {:?}", c.spatial_errors, c.temporal_errors);
            Ok(c.metrics(name))
        }
        "pennes" => {
            let mut m = Vec::new();
            for (q, w) in PENNES_CASES {
                let (sim, exact) = pennes_uniform_steady(q, w)?;
                let rel = (sim - exact).abs() / exact;
                m.push(Metric::at_most(name, &format!("rel_error_q{q:e}_w{w}"), rel, 1e-3));
            }
            Ok(m)
        }
        "line-source" => {
            let n = 120;
            let a = line_source_steady(n, 1e8)?;
            let b = line_source_steady(n, 2e8)?;
            let z = line_source_steady(n, 0.0)?;
            let tb = ThermalParams::default().body_temperature;
            let lin = a
                .temperature
                .iter()
                .zip(&b.temperature)
                .map(|(x, y)| ((y - tb) - 2.0 * (x - tb)).abs() / (x - tb).abs().max(1e-300))
                .fold(0.0, f64::max);
            let zero = z.temperature.iter().map(|t| (t - tb).abs()).fold(0.0, f64::max);
            Ok(vec![
                Metric::at_most(name, "slope_rel_error", (a.fitted_slope - a.analytic_slope) / a.analytic_slope, 0.05),
                Metric::at_most(name, "slope_spread", a.slope_spread, 0.05),
                Metric::at_most(name, "linearity", lin, 1e-12),
                Metric::at_most(name, "zero_strength", zero, 1e-12),
            ])
        }
        other => Err(Error::config(format!(
            "unknown verification case '{other}' (expected one of {}, all)",
            CASES.join(", ")
        ))),
    }
}

/// `(Q_p [W/m^3], w [1/s])` pairs of the perfusion check.
pub const PENNES_CASES: [(f64, f64); 3] = [(1.12e5, 0.018), (1.12e5, 0.036), (5.6e5, 0.009)];

/// With `T* = T_b` and no forcing the discrete solution stays at `T_b`.
fn mms_heat_zero_source() -> Result<f64> {
    let mesh = StructuredQuadMesh::new(8, 8, HEAT_LENGTH, HEAT_LENGTH)?;
    let fields = PhaseFields::uniform(&mesh, tissue())?;
    let params = ThermalParams::default();
    let mut solver = HeatSolver::new(
        &mesh,
        &fields,
        &params,
        &TransportCoefficients::default(),
        PerfusionSink::None,
        None,
        &HeatOptions::default(),
    )?;
    let tb = params.body_temperature;
    let mut state = ThermalState::uniform(mesh.num_nodes(), tb);
    for _ in 0..60 {
        solver.step(&mut state, &HeatLoad::default(), 30.0)?;
    }
    Ok(state.temperature.iter().map(|t| (t - tb).abs()).fold(0.0, f64::max))
}

/// Report as CSV with columns `case, metric, value, threshold, pass`.
pub fn write_report(metrics: &[Metric], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let fail = |e: csv::Error| Error::data(format!("csv: {e}"));
    w.write_record(["case", "metric", "value", "threshold", "pass"]).map_err(fail)?;
    for m in metrics {
        w.write_record([m.case.clone(), m.metric.clone(), m.value.to_string(), m.threshold.clone(), m.pass.to_string()])
            .map_err(fail)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::data(format!("csv: {e}")))?;
    write_atomic(path, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law() {
        let x = [1.0, 2.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powi(2)).collect();
        assert!((log_slope(&x, &y) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn pennes_examples() {
        let (sim, exact) = pennes_uniform_steady(1.12e5, 0.018).unwrap();
        assert!((exact - 1.793).abs() < 1e-3);
        assert!((sim - exact).abs() / exact < 1e-3);
        let (z, _) = pennes_uniform_steady(0.0, 0.018).unwrap();
        assert!(z.abs() < 1e-12);
        let (_, half) = pennes_uniform_steady(1.12e5, 0.036).unwrap();
        assert!((half - 0.5 * exact).abs() < 1e-12);
        assert!(pennes_uniform_steady(1.0, 0.0).is_err());
    }

    #[test]
    fn zero_forcing_stays_at_body_temperature() {
        assert!(mms_heat_zero_source().unwrap() < 1e-12);
    }

    #[test]
    fn unknown_case_is_config_error() {
        assert_eq!(run_case("nope").unwrap_err().exit_code(), 1);
    }
}
