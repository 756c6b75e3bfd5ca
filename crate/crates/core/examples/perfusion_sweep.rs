//! Peak temperature of the spherical preset for several Pennes perfusion
//! rates, run in parallel.

use nanotherm::io::presets;
use nanotherm::sim::run_sweep;

fn main() -> nanotherm::Result<()> {
    let base = presets::load("spherical_lumped")?.with_override("perfusion.sink", "lumped")?;
    let values: Vec<String> = ["0 1/s", "0.009 1/s", "0.018 1/s", "0.036 1/s"].map(String::from).to_vec();
    let rows = run_sweep(&base, "heat.perfusion", &values, None)?;
    let reference = rows[0].peak_mean;
    for row in &rows {
        println!(
            "w = {:>10}: peak mean {:.2} degC at {:.0} min (cooling {:.2} K)",
            row.value,
            row.peak_mean - 273.15,
            row.peak_time / 60.0,
            reference - row.peak_mean
        );
    }
    Ok(())
}
