//! Behaviour of the shipped presets.

use nanotherm::io::presets;
use nanotherm::sim::{replay_heat, run_scenario, run_simulation, run_sweep, RunOptions, RunResult, Scenario};

const KELVIN: f64 = 273.15;

#[test]
fn spherical_mean_temperature_rises_after_twenty_minutes_and_peaks_at_forty() {
    let r = run_simulation(&presets::load("spherical_lumped").unwrap(), &RunOptions::default()).unwrap();
    let mean = |min: f64| r.at_time(min * 60.0).t_mean - KELVIN;
    assert!((mean(20.0) - 37.0).abs() < 1e-9, "no heating before the field is switched on");
    assert!(mean(25.0) > 42.0);
    let (peak, t_peak) = r.peak_mean();
    assert!((t_peak - 2400.0).abs() <= 60.0);
    assert!(mean(60.0) < peak - KELVIN - 1.0);
    let snapshot_t = r.at_time(2400.0);
    assert!(snapshot_t.t_max.is_finite());
}

#[test]
fn peak_temperature_falls_with_perfusion() {
    let base = presets::load("spherical_lumped").unwrap();
    let values: Vec<String> = ["0 1/s", "0.009 1/s", "0.018 1/s", "0.036 1/s"].map(String::from).to_vec();
    let rows = run_sweep(&base, "heat.perfusion", &values, None).unwrap();
    assert_eq!(rows.len(), 4);
    for pair in rows.windows(2) {
        assert!(pair[1].peak_mean < pair[0].peak_mean, "{} vs {}", pair[0].value, pair[1].value);
    }
}

#[test]
fn halving_the_time_step_converges_at_first_order() {
    let base = presets::load("mouse_homogeneous").unwrap();
    let finals: Vec<f64> = [("60 s", "30"), ("30 s", "60"), ("15 s", "120")]
        .iter()
        .map(|(dt, steps)| {
            // Each override is validated on its own, so lengthen the run before changing dt.
            let cfg = base
                .with_override("time.steps", "240")
                .and_then(|c| c.with_override("time.dt", dt))
                .and_then(|c| c.with_override("time.steps", steps))
                .unwrap();
            run_simulation(&cfg, &RunOptions::default()).unwrap().final_record().t_mean
        })
        .collect();
    let ratio = (finals[0] - finals[1]) / (finals[1] - finals[2]);
    assert!((1.8..=2.2).contains(&ratio), "Richardson ratio {ratio}");
}

#[test]
fn discrete_heat_replay_reproduces_in_loop_temperatures() {
    let sc = Scenario::build(&presets::load("discrete_network").unwrap()).unwrap();
    let r = run_scenario(&sc, &RunOptions { out_dir: None, keep_history: true }).unwrap();
    let history = r.history.unwrap();
    let replay = replay_heat(&sc, &history).unwrap();
    assert_eq!(replay.len(), history.temperature.len());
    let worst = replay
        .iter()
        .zip(&history.temperature)
        .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max);
    assert!(worst <= 1e-12, "replay differs by {worst:e} K");
}

fn if_range(name: &str, overrides: &[(&str, &str)]) -> (Scenario, nanotherm::sim::History, RunResult) {
    let cfg = overrides
        .iter()
        .fold(presets::load(name).unwrap(), |c, (k, v)| c.with_override(k, v).unwrap());
    let sc = Scenario::build(&cfg).unwrap();
    let mut r = run_scenario(&sc, &RunOptions { out_dir: None, keep_history: true }).unwrap();
    let h = r.history.take().unwrap();
    (sc, h, r)
}

fn extremes(values: &[Vec<f64>]) -> (f64, f64) {
    values
        .iter()
        .flatten()
        .fold((f64::MAX, f64::MIN), |(lo, hi), &w| (lo.min(w), hi.max(w)))
}

#[test]
fn spherical_if_mass_fraction_stays_within_injection_bounds() {
    let (_, h, _) = if_range("spherical_lumped", &[]);
    let (lo, hi) = extremes(&h.omega_if);
    assert!(lo >= 0.0 && hi <= 2e-3, "[{lo:e}, {hi:e}]");
}

#[test]
fn discrete_mass_fractions_stay_bounded() {
    let omega_d = 2e-3;
    let (sc, h, r) = if_range("discrete_network", &[]);
    for line in h.line_omega.iter().flatten() {
        assert!(line.iter().all(|&w| (0.0..=omega_d * (1.0 + 1e-12)).contains(&w)));
    }
    assert!(r.records.iter().all(|rec| rec.np_mass_vessel >= 0.0));
    let (_, hi) = extremes(&h.omega_if);
    assert!(hi <= omega_d);
    // Galerkin advection undershoots in the nearly dry core; the particle
    // mass density it represents stays negligible.
    let density = |om: &Vec<f64>| -> Vec<f64> {
        om.iter()
            .enumerate()
            .map(|(i, w)| sc.fields.eps[i] * sc.fields.s_l[i] * w)
            .collect()
    };
    let densities: Vec<Vec<f64>> = h.omega_if.iter().map(density).collect();
    let (dlo, dhi) = extremes(&densities);
    assert!(dlo >= -1e-3 * dhi, "density undershoot {dlo:e} vs peak {dhi:e}");

    let (_, h_sd, _) = if_range("discrete_network", &[("transport.streamline_diffusion", "true")]);
    let (lo_sd, _) = extremes(&h_sd.omega_if);
    assert!(lo_sd >= -5e-4 * omega_d, "stabilised undershoot {lo_sd:e}");
}

#[test]
fn clustered_and_uniform_mouse_presets_hold_equal_particle_mass() {
    let masses: Vec<f64> = ["mouse_homogeneous", "mouse_clustered"]
        .iter()
        .map(|n| {
            let sc = Scenario::build(&presets::load(n).unwrap()).unwrap();
            sc.particle_mass(sc.prescribed.as_deref().unwrap()).unwrap()
        })
        .collect();
    assert!((masses[0] - masses[1]).abs() <= 1e-12 * masses[0]);
}
