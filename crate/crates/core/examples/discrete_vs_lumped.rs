//! Cooling by an explicit capillary network compared with the lumped
//! perfusion sink, read along the horizontal line y = 1.8 mm after 60 min.

use nanotherm::io::presets;
use nanotherm::sim::{run_scenario, RunOptions, Scenario, ScenarioConfig};

fn line_maximum(cfg: &ScenarioConfig) -> nanotherm::Result<f64> {
    let sc = Scenario::build(cfg)?;
    let r = run_scenario(&sc, &RunOptions::default())?;
    let line = sc
        .mesh
        .horizontal_profile(&r.thermal.temperature, 1.8e-3)
        .expect("line inside the domain");
    Ok(line.iter().map(|(_, t)| *t).fold(f64::MIN, f64::max) - 273.15)
}

fn main() -> nanotherm::Result<()> {
    let base = presets::load("discrete_network")?;
    let cases: [(&str, &[(&str, &str)]); 5] = [
        ("no perfusion", &[("perfusion.sink", "none")]),
        ("discrete, beta = 2e-5 W/mm^2/K", &[]),
        ("discrete, beta = 2e-3 W/mm^2/K", &[("heat.vessel_exchange", "2e-3 W/mm^2/K")]),
        ("lumped, w = 0.018 1/s", &[("perfusion.sink", "lumped"), ("heat.perfusion", "0.018 1/s")]),
        ("lumped, w = 0.036 1/s", &[("perfusion.sink", "lumped"), ("heat.perfusion", "0.036 1/s")]),
    ];
    let mut reference = None;
    for (label, overrides) in cases {
        let mut cfg = base.clone();
        for (k, v) in overrides {
            cfg = cfg.with_override(k, v)?;
        }
        let t = line_maximum(&cfg)?;
        let r = *reference.get_or_insert(t);
        println!("{label:<32} line maximum {t:.3} degC, cooling {:.3} K", r - t);
    }
    Ok(())
}
