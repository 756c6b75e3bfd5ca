//! Build a scenario from text: a uniform tissue block with particles held at
//! a fixed mass fraction, heated with a lumped perfusion sink. The result is
//! compared with the closed-form Pennes steady state.

use std::path::Path;

use nanotherm::sim::{run_simulation, RunOptions, ScenarioConfig};

const CONFIG: &str = "
[scenario]
name = uniform_block

[mesh]
nx = 4
ny = 4
lx = 1 mm
ly = 1 mm

[fields]
source = uniform
eps_v = 0
s_l = 0.5
s_t = 0.5
eps = 0.8

[transport]
mode = none

[nanoparticles]
distribution = tumour
omega = 1e-3

[heat]
heat_capacity = 3470 J/(kg*K)
density = 1000 kg/m^3
conductivity = 0.51 W/(m*K)
body_temperature = 37 degC
perfusion = 0.018 1/s

[protocol]
heating = 0 min, 200 min
sar = 0.5 MW/kg

[time]
dt = 60 s
steps = 200
";

fn main() -> nanotherm::Result<()> {
    let cfg = ScenarioConfig::parse(CONFIG, Path::new("uniform_block.cfg"))?;
    let r = run_simulation(&cfg, &RunOptions::default())?;
    let q = 1000.0 * 0.8 * 0.5 * 1e-3 * 0.5e6;
    let analytic = q / (1000.0 * 3470.0 * 0.018);
    let rise = r.final_record().t_mean - cfg.thermal.body_temperature;
    println!("heat source {q:.3e} W/m^3");
    println!("simulated rise {rise:.6} K, analytic {analytic:.6} K");
    Ok(())
}
