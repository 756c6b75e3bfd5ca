//! Observed convergence orders of the heat and transport operators on
//! manufactured solutions.

use nanotherm::verify::{mms_heat, mms_transport, MmsPlan};

fn main() -> nanotherm::Result<()> {
    let plan = MmsPlan::default();
    for (name, study) in [("heat", mms_heat(&plan)?), ("transport", mms_transport(&plan)?)] {
        println!("{name}:");
        for (h, e) in study.h.iter().zip(&study.spatial_errors) {
            println!("  h  = {h:.3e} m   L2 error {e:.3e}");
        }
        println!("  spatial order  {:.3}", study.spatial_order);
        for (dt, e) in study.dt.iter().zip(&study.temporal_errors) {
            println!("  dt = {dt:>6.1} s   L2 error {e:.3e}");
        }
        println!("  temporal order {:.3}", study.temporal_order);
    }
    Ok(())
}
