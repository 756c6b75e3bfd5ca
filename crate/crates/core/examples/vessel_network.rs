//! Generate a synthetic capillary network, solve its blood flow and write it
//! as a VTK polyline file.

use std::path::Path;

use nanotherm::io::vtk::write_network_snapshot;
use nanotherm::vasculature::{solve_network_flow, NetworkSpec};

fn main() -> nanotherm::Result<()> {
    let spec = NetworkSpec {
        collapsed_core: Some(([1.35e-3, 1.8e-3], 0.5e-3)),
        ..NetworkSpec::default()
    };
    let network = spec.generate()?;
    let flow = solve_network_flow(&network)?;
    let radii: Vec<f64> = network.segments.iter().map(|s| s.radius).collect();
    let open = network.segments.iter().filter(|s| !s.collapsed).count();
    let max_flow = flow.flow.iter().fold(0.0f64, |m, q| m.max(q.abs()));
    println!("nodes {}, segments {} ({} open)", network.num_nodes(), network.num_segments(), open);
    println!(
        "radius {:.2}..{:.2} um, mean {:.2} um; total length {:.2} mm",
        radii.iter().cloned().fold(f64::MAX, f64::min) * 1e6,
        radii.iter().cloned().fold(0.0, f64::max) * 1e6,
        radii.iter().sum::<f64>() / radii.len() as f64 * 1e6,
        network.total_length() * 1e3
    );
    println!("largest segment flow {max_flow:.3e} m^3/s");
    std::fs::create_dir_all("out").map_err(|e| nanotherm::Error::io("out", e))?;
    let q: Vec<f64> = flow.flow.clone();
    write_network_snapshot(&network, &[("R", &radii), ("Q", &q)], Path::new("out/network.vtk"))?;
    println!("wrote out/network.vtk");
    Ok(())
}
