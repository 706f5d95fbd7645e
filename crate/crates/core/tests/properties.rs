//! Property-based checks of the field metric, serialization and determinism.

use accwave::config::ScenarioConfig;
use accwave::io::{
    read_param_draws, read_trajectories, sample_params, write_trajectories, ParamSample, Precision,
};
use accwave::metrics::{field_rmse, FieldComponent};
use accwave::micro::{Trajectory, VehicleSample};
use accwave::model::TrafficState;
use accwave::pde::{EulerianField, Grid};
use proptest::prelude::*;

const CELLS: usize = 6;
const TIMES: usize = 3;

fn field_strategy() -> impl Strategy<Value = EulerianField> {
    prop::collection::vec((0.01f64..0.2, -5.0f64..40.0), CELLS * TIMES).prop_map(|vals| {
        let grid = Grid::new(60.0, CELLS).unwrap();
        let states = vals
            .chunks(CELLS)
            .map(|row| {
                row.iter()
                    .map(|&(rho, v)| TrafficState { rho, v })
                    .collect()
            })
            .collect();
        EulerianField {
            grid,
            times: (0..TIMES).map(|k| k as f64).collect(),
            states,
        }
    })
}

fn component() -> impl Strategy<Value = FieldComponent> {
    prop_oneof![Just(FieldComponent::Rho), Just(FieldComponent::V)]
}

proptest! {
    #[test]
    fn rmse_is_a_metric(a in field_strategy(), b in field_strategy(), c in field_strategy(), comp in component()) {
        let ab = field_rmse(&a, &b, comp).unwrap();
        let ba = field_rmse(&b, &a, comp).unwrap();
        let bc = field_rmse(&b, &c, comp).unwrap();
        let ac = field_rmse(&a, &c, comp).unwrap();
        prop_assert_eq!(ab, ba);
        prop_assert_eq!(field_rmse(&a, &a, comp).unwrap(), 0.0);
        prop_assert!(ab >= 0.0);
        prop_assert!(ac <= ab + bc + 1e-12);
    }

    #[test]
    fn rmse_vanishes_only_for_equal_components(a in field_strategy(), cell in 0..CELLS, time in 0..TIMES, bump in 1e-3f64..1.0) {
        let mut b = a.clone();
        b.states[time][cell].v += bump;
        prop_assert!(field_rmse(&a, &b, FieldComponent::V).unwrap() > 0.0);
        prop_assert_eq!(field_rmse(&a, &b, FieldComponent::Rho).unwrap(), 0.0);
    }

    #[test]
    fn trajectories_round_trip_at_full_precision(
        vehicles in 1usize..4,
        len in 2usize..30,
        dt in prop::sample::select(vec![0.01, 0.1, 0.5]),
        x0 in -500.0f64..500.0,
        v in prop::collection::vec(0.0f64..40.0, 120),
    ) {
        let trajs: Vec<Trajectory> = (0..vehicles)
            .map(|id| {
                let samples = (0..len)
                    .map(|k| VehicleSample {
                        t: k as f64 * dt,
                        x: x0 - 20.0 * id as f64 + k as f64,
                        v: v[(id * len + k) % v.len()],
                        a: -v[k % v.len()] / 10.0,
                    })
                    .collect();
                Trajectory::new(id, dt, samples).unwrap()
            })
            .collect();
        let mut buf = Vec::new();
        write_trajectories(&mut buf, &trajs, Precision::Full).unwrap();
        let back = read_trajectories(buf.as_slice()).unwrap();
        prop_assert_eq!(back.len(), trajs.len());
        for (a, b) in trajs.iter().zip(&back) {
            prop_assert_eq!(a.vehicle_id, b.vehicle_id);
            prop_assert_eq!(&a.samples, &b.samples);
            prop_assert!((a.dt - b.dt).abs() < 1e-9);
        }
    }

    #[test]
    fn config_round_trip(vehicles in 2usize..12, dt in 0.001f64..0.5, k_v in 0.0f64..5.0, seed in any::<u64>()) {
        let mut cfg = accwave::cases::case_config(1).unwrap();
        cfg.platoon.vehicles = vehicles;
        cfg.platoon.dt = dt;
        cfg.params.k_v = k_v;
        cfg.seed = seed;
        let text = cfg.to_toml_string().unwrap();
        prop_assert_eq!(ScenarioConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn parameter_sampling_is_seeded(seed in any::<u64>(), count in 1usize..50) {
        let draws: Vec<ParamSample> = (0..7)
            .map(|k| ParamSample { tau: 1.0 + k as f64 * 0.1, standstill: 5.0, k_s: 0.3, k_v: 0.5 })
            .collect();
        let a = sample_params(&draws, count, seed).unwrap();
        prop_assert_eq!(&a, &sample_params(&draws, count, seed).unwrap());
        prop_assert_eq!(a.len(), count);
        prop_assert!(a.iter().all(|s| draws.contains(s)));
    }
}

#[test]
fn shuffled_rows_ingest_identically() {
    let text = "t,vehicle_id,x,v,a\n0,0,0,10,0\n0,1,-17,10,0\n0.1,0,1,10,0\n0.1,1,-16,10,0\n0.2,0,2,10,0\n0.2,1,-15,10,0\n";
    let shuffled = "vehicle_id,v,t,x,a\n1,10,0.2,-15,0\n0,10,0.1,1,0\n1,10,0,-17,0\n0,10,0.2,2,0\n1,10,0.1,-16,0\n0,10,0,0,0\n";
    let a = read_trajectories(text.as_bytes()).unwrap();
    assert_eq!(a.len(), 2);
    assert!(a.iter().all(|t| t.len() == 3));
    assert_eq!(a, read_trajectories(shuffled.as_bytes()).unwrap());
}

#[test]
fn single_draw_file_gives_identical_samples() {
    let draws = read_param_draws("tau,L,k_s,k_v\n1.0883,9.655,0.3134,0.4629\n".as_bytes()).unwrap();
    let s = sample_params(&draws, 200, 1).unwrap();
    assert!(s.iter().all(|d| *d == draws[0]));
}

#[test]
fn identical_config_gives_identical_csv() {
    let cfg = accwave::cases::case_config(2).unwrap();
    let render = || {
        let study = accwave::cases::run_wave_study(&cfg).unwrap();
        let mut buf = Vec::new();
        write_trajectories(&mut buf, &study.trajectories, Precision::Short).unwrap();
        accwave::io::write_wave_paths(&mut buf, &study.proposed, Precision::Short).unwrap();
        buf
    };
    assert_eq!(render(), render());
}
