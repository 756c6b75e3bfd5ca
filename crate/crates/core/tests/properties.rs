//! Randomised checks of structural invariants across modules.

use nanotherm::bioheat::{HeatLoad, HeatOptions, HeatSolver, PerfusionSink, ThermalParams, ThermalState};
use nanotherm::fields::{darcy_velocity, generate_idealised_tumour, PhaseFields, PointFields, TransportCoefficients, TumourProfile};
use nanotherm::mesh::StructuredQuadMesh;
use nanotherm::units::{parse_as, Dim};
use nanotherm::vasculature::{embed_network, solve_network_flow, NetworkSpec};
use proptest::prelude::*;

fn profile() -> impl Strategy<Value = TumourProfile> {
    (0.02f64..0.2, 0.1f64..0.3, 0.0f64..0.05, 0.0f64..0.05, 0.3f64..0.95, 1e-4f64..0.6, 0.0f64..2000.0).prop_map(
        |(tw, solid, hv, cv, hs, cs, peak)| TumourProfile {
            transition_width: tw * 1e-3,
            solid_fraction: solid,
            host_vessel_fraction: hv,
            core_vessel_fraction: cv,
            host_if_saturation: hs,
            core_if_saturation: cs,
            peak_if_pressure: peak,
            ..TumourProfile::default()
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn generated_fields_keep_fractions_summing_to_one(
        p in profile(),
        cx in 0.0f64..1.0,
        cy in 0.0f64..1.0,
        r in 0.1f64..0.8,
    ) {
        let mesh = StructuredQuadMesh::new(12, 10, 1e-3, 0.8e-3).unwrap();
        let f = generate_idealised_tumour(&mesh, [cx * 1e-3, cy * 0.8e-3], r * 1e-3, &p).unwrap();
        for i in 0..mesh.num_nodes() {
            prop_assert!((f.s_t[i] + f.s_h[i] + f.s_l[i] - 1.0).abs() < 1e-10);
            prop_assert!((f.eps[i] + f.eps_v[i] + p.solid_fraction - 1.0).abs() < 1e-10);
            prop_assert!(f.s_t[i] >= 0.0 && f.s_h[i] >= 0.0 && f.s_l[i] >= 0.0);
        }
    }

    #[test]
    fn darcy_flux_scales_linearly_with_pressure(alpha in -5.0f64..5.0, p in profile()) {
        let mesh = StructuredQuadMesh::new(8, 8, 1e-3, 1e-3).unwrap();
        let f = generate_idealised_tumour(&mesh, [0.0, 1e-3], 0.6e-3, &p).unwrap();
        let mut scaled = f.clone();
        scaled.p_l.iter_mut().for_each(|v| *v *= alpha);
        let coeffs = TransportCoefficients::default();
        let q = darcy_velocity(&mesh, &f, &coeffs);
        let qa = darcy_velocity(&mesh, &scaled, &coeffs);
        let scale = q.iter().map(|v| v[0].abs().max(v[1].abs())).fold(1e-300, f64::max);
        for (a, b) in q.iter().zip(&qa) {
            for k in 0..2 {
                prop_assert!((alpha * a[k] - b[k]).abs() <= 1e-13 * scale * alpha.abs().max(1.0));
            }
        }
    }

    #[test]
    fn network_flow_conserves_mass_and_embedding_covers_segments(seed in 0u64..1000, generations in 2usize..5) {
        let spec = NetworkSpec { seed, generations, ..NetworkSpec::default() };
        let net = spec.generate().unwrap();
        let flow = solve_network_flow(&net).unwrap();
        let mut balance = vec![0.0; net.num_nodes()];
        for (k, s) in net.segments.iter().enumerate() {
            balance[s.nodes[0]] -= flow.flow[k];
            balance[s.nodes[1]] += flow.flow[k];
        }
        let qmax = flow.flow.iter().fold(0.0f64, |m, q| m.max(q.abs()));
        let boundary: Vec<usize> = net.bcs.iter().map(|b| b.node).collect();
        for (i, b) in balance.iter().enumerate() {
            if !boundary.contains(&i) {
                prop_assert!(b.abs() <= 1e-10 * qmax, "node {i}: imbalance {b:e}");
            }
        }
        let mesh = StructuredQuadMesh::new(27, 35, spec.extent[0], spec.extent[1]).unwrap();
        let table = embed_network(&net, &mesh).unwrap();
        for k in 0..net.num_segments() {
            let w: f64 = table.segment_points(k).iter().map(|p| p.weight).sum();
            prop_assert!((w - net.segment_length(k)).abs() <= 1e-10 * net.segment_length(k).max(1e-12));
        }
    }

    #[test]
    fn conduction_with_robin_walls_stays_between_initial_and_body_temperature(
        t0 in 290.0f64..330.0,
        tb in 295.0f64..315.0,
        betas in prop::array::uniform4(prop::option::of(1.0f64..2000.0)),
        dt in 1.0f64..600.0,
    ) {
        let mesh = StructuredQuadMesh::new(6, 6, 2e-3, 2e-3).unwrap();
        let fields = PhaseFields::uniform(&mesh, PointFields {
            eps: 0.8, s_t: 0.3, s_h: 0.2, s_l: 0.5, eps_v: 0.0, p_l: 0.0, p_v: 0.0, p_t: 0.0,
        }).unwrap();
        let params = ThermalParams { robin: betas, body_temperature: tb, ..ThermalParams::default() };
        let coeffs = TransportCoefficients::default();
        let mut solver = HeatSolver::new(&mesh, &fields, &params, &coeffs, PerfusionSink::None, None, &HeatOptions::default()).unwrap();
        let mut state = ThermalState::uniform(mesh.num_nodes(), t0);
        let (lo, hi) = (t0.min(tb), t0.max(tb));
        for _ in 0..5 {
            solver.step(&mut state, &HeatLoad::default(), dt).unwrap();
            for &t in &state.temperature {
                prop_assert!(t >= lo - 1e-9 && t <= hi + 1e-9, "{t} outside [{lo}, {hi}]");
            }
        }
    }

    #[test]
    fn specific_power_in_megawatts_scales_by_a_million(x in 1e-3f64..1e3) {
        let v = parse_as(&format!("{x} MW/kg"), Dim::SPECIFIC_POWER).unwrap();
        prop_assert!((v - x * 1e6).abs() <= 1e-9 * v);
        let back = parse_as(&format!("{} W/kg", x * 1e6), Dim::SPECIFIC_POWER).unwrap();
        prop_assert!((back - v).abs() <= 1e-9 * v);
    }
}
