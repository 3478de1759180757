use lstm_sharp_core::energy::{COMPONENTS, DYNAMIC_KEYS};
use lstm_sharp_core::{
    build_program, estimate_energy, simulate, CostModel, HardwareConfig, LstmModelSpec,
    ScheduleKind, SimReport, TileConfig,
};

fn report(kind: ScheduleKind, h: usize, macs: usize, k: usize) -> (SimReport, HardwareConfig) {
    let s = LstmModelSpec::square(h, 25).unwrap();
    let hw = HardwareConfig::with_macs(macs);
    let tile = TileConfig::new(&hw, k).unwrap();
    let p = build_program(kind, &s, &hw, &tile, false).unwrap();
    (simulate(&p, &hw).unwrap(), hw)
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1e-30)
}

#[test]
fn zero_costs_give_zero_energy() {
    let (r, hw) = report(ScheduleKind::Intergate, 200, 4096, 64);
    let e = estimate_energy(&r, &hw, &CostModel::uniform(0.0, 0.0)).unwrap();
    assert_eq!(e.total_j, 0.0);
    assert_eq!(e.flops_per_joule, 0.0);
    assert!(e
        .dynamic_j
        .values()
        .chain(e.static_j.values())
        .all(|&v| v == 0.0));
}

#[test]
fn doubling_dynamic_costs_doubles_dynamic_energy() {
    let (r, hw) = report(ScheduleKind::Batch, 340, 4096, 32);
    let base = CostModel::uniform(1e-12, 0.5);
    let a = estimate_energy(&r, &hw, &base).unwrap();
    let b = estimate_energy(&r, &hw, &base.scale_dynamic(2.0)).unwrap();
    assert!(close(b.dynamic_total_j, 2.0 * a.dynamic_total_j));
    assert_eq!(a.static_total_j, b.static_total_j);
    for k in COMPONENTS {
        assert!(close(b.dynamic_j[k], 2.0 * a.dynamic_j[k]), "{k}");
    }
}

#[test]
fn energy_is_linear_in_each_cost() {
    let (r, hw) = report(ScheduleKind::Unfolded, 200, 16384, 64);
    let zero = CostModel::uniform(0.0, 0.0);
    let all = CostModel::uniform(1e-12, 0.0);
    let whole = estimate_energy(&r, &hw, &all).unwrap().total_j;
    let mut sum = 0.0;
    for k in DYNAMIC_KEYS {
        let mut one = zero.clone();
        one.dynamic.get_mut(k).unwrap().value = 1e-12;
        sum += estimate_energy(&r, &hw, &one).unwrap().total_j;
    }
    assert!(close(whole, sum), "{whole} vs {sum}");
}

#[test]
fn static_energy_is_power_times_wall_time() {
    let (r, hw) = report(ScheduleKind::Sequential, 200, 1024, 32);
    let e = estimate_energy(&r, &hw, &CostModel::uniform(0.0, 0.25)).unwrap();
    let wall = r.total_cycles as f64 / hw.frequency_hz;
    assert!(close(r.wall_time_s, wall));
    assert!(close(
        e.static_total_j,
        0.25 * COMPONENTS.len() as f64 * wall
    ));
    assert!(close(e.average_w, 0.25 * COMPONENTS.len() as f64));
}

#[test]
fn fewer_cycles_win_when_static_power_dominates() {
    let costs = CostModel::uniform(1e-15, 1.0);
    for h in [200, 512] {
        let (seq, hw) = report(ScheduleKind::Sequential, h, 16384, 32);
        let (unf, _) = report(ScheduleKind::Unfolded, h, 16384, 32);
        let es = estimate_energy(&seq, &hw, &costs).unwrap();
        let eu = estimate_energy(&unf, &hw, &costs).unwrap();
        assert!(unf.total_cycles <= seq.total_cycles);
        assert!(eu.total_j <= es.total_j, "H{h}");
        assert!(eu.flops_per_joule >= es.flops_per_joule);
    }
}

#[test]
fn flops_per_joule_counts_two_flops_per_mac() {
    let (r, hw) = report(ScheduleKind::Intergate, 200, 1024, 32);
    let e = estimate_energy(&r, &hw, &CostModel::uniform(1e-12, 0.1)).unwrap();
    assert!(close(
        e.flops_per_joule,
        2.0 * r.useful_mac_ops as f64 / e.total_j
    ));
}

#[test]
fn missing_and_extra_keys_are_rejected() {
    let mut m = CostModel::uniform(1e-12, 0.1);
    m.dynamic.remove("add_op");
    let err = m.validate().unwrap_err().to_string();
    assert!(err.contains("dynamic.add_op"), "{err}");

    let mut m = CostModel::uniform(1e-12, 0.1);
    let e = m.static_power["mfu"];
    m.static_power.insert("dram".into(), e);
    let err = m.validate().unwrap_err().to_string();
    assert!(err.contains("static_power.dram"), "{err}");

    let mut m = CostModel::uniform(1e-12, 0.1);
    m.dynamic.get_mut("mac_op").unwrap().value = -1.0;
    assert!(m.validate().is_err());
}

#[test]
fn cost_model_toml_round_trips() {
    let m = CostModel::uniform(3e-13, 0.02);
    let text = m.to_toml_string();
    assert_eq!(CostModel::from_toml_str(&text).unwrap(), m);
    assert!(CostModel::from_toml_str(&text.replace("version = 1", "version = 9")).is_err());
    assert!(CostModel::from_toml_str("version = 1").is_err());
}

#[test]
fn energy_csv_lists_every_component() {
    let (r, hw) = report(ScheduleKind::Batch, 200, 1024, 32);
    let csv = estimate_energy(&r, &hw, &CostModel::uniform(1e-12, 0.1))
        .unwrap()
        .csv();
    for k in COMPONENTS {
        assert!(csv.lines().any(|l| l.starts_with(k)), "{k} missing:\n{csv}");
    }
}
