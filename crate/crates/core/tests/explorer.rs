use lstm_sharp_core::explore::{default_budgets, default_specs, run_cell, DEFAULT_SEQ_LEN};
use lstm_sharp_core::{
    build_config_table, compare_schedules, derive_tiles, padding_gain, sweep_grid, sweep_k,
    ConfigTable, HardwareConfig, LstmModelSpec, ScheduleKind, ScheduleSetup, SweepResult,
};

fn square(h: usize) -> LstmModelSpec {
    LstmModelSpec::square(h, DEFAULT_SEQ_LEN).unwrap()
}

#[test]
fn k_sweep_covers_every_admissible_width_and_picks_the_fastest() {
    let hw = HardwareConfig::with_macs(16384);
    let sw = sweep_k(&square(512), &hw, ScheduleKind::Intergate, true, 1).unwrap();
    let ks: Vec<usize> = sw.points.iter().map(|p| p.k_eff).collect();
    assert_eq!(
        ks,
        derive_tiles(&hw)
            .iter()
            .map(|t| t.k_eff)
            .collect::<Vec<_>>()
    );
    assert_eq!(ks, vec![32, 64, 128, 256]);
    let min = sw.points.iter().map(|p| p.cycles).min().unwrap();
    assert_eq!(sw.best().cycles, min);
    // ties go to the narrower width
    let first = sw.points.iter().find(|p| p.cycles == min).unwrap();
    assert_eq!(sw.k_opt, first.k_eff);
    assert!(!sw.degenerate);
}

#[test]
fn best_width_depends_on_the_model() {
    let hw = HardwareConfig::with_macs(4096);
    let ks: Vec<usize> = default_specs()
        .iter()
        .map(|s| {
            sweep_k(s, &hw, ScheduleKind::Unfolded, true, 2)
                .unwrap()
                .k_opt
        })
        .collect();
    assert!(ks.iter().any(|&k| k != ks[0]), "{ks:?}");
}

#[test]
fn single_width_budget_is_degenerate() {
    let hw = HardwareConfig {
        k_base: 64,
        ..HardwareConfig::with_macs(64)
    };
    let sw = sweep_k(&square(64), &hw, ScheduleKind::Batch, false, 1).unwrap();
    assert!(sw.degenerate);
    assert_eq!(sw.k_opt, 64);
    assert_eq!(sw.points.len(), 1);
}

#[test]
fn padding_gain_is_at_least_one_and_matches_direct_runs() {
    for (h, m) in [(200, 4096), (340, 16384), (512, 65536)] {
        let s = square(h);
        let hw = HardwareConfig::with_macs(m);
        let g = padding_gain(&s, &hw, ScheduleKind::Unfolded, 1).unwrap();
        let on = sweep_k(&s, &hw, ScheduleKind::Unfolded, true, 1).unwrap();
        let off = run_cell(&s, &hw, on.k_opt, ScheduleKind::Unfolded, false).unwrap();
        assert!(g >= 1.0, "H{h} M{m}: {g}");
        assert_eq!(g, off.cycles as f64 / on.best().cycles as f64);
    }
}

#[test]
fn one_step_sequences_sweep_cleanly() {
    let s = LstmModelSpec::square(200, 1).unwrap();
    let hw = HardwareConfig::with_macs(4096);
    for kind in ScheduleKind::ALL {
        let sw = sweep_k(&s, &hw, kind, true, 1).unwrap();
        assert!(sw.best().cycles > 0, "{kind}");
    }
}

#[test]
fn parallel_and_serial_sweeps_agree() {
    let specs = vec![square(200), square(340)];
    let hw = HardwareConfig::with_macs(1024);
    let budgets = [1024, 4096];
    let a = sweep_grid(&specs, &hw, &budgets, ScheduleKind::Batch, true, 1).unwrap();
    let b = sweep_grid(&specs, &hw, &budgets, ScheduleKind::Batch, true, 4).unwrap();
    assert_eq!(a, b);
    let c = compare_schedules(&specs, &hw, &budgets, &ScheduleSetup::reconfigured(), 1).unwrap();
    let d = compare_schedules(&specs, &hw, &budgets, &ScheduleSetup::reconfigured(), 3).unwrap();
    assert_eq!(c, d);
}

#[test]
fn grid_speedups_are_relative_to_the_small_baseline() {
    let specs = vec![square(200)];
    let hw = HardwareConfig::with_macs(1024);
    let r = sweep_grid(
        &specs,
        &hw,
        &[1024, 4096],
        ScheduleKind::Intergate,
        false,
        2,
    )
    .unwrap();
    let base = r
        .cells
        .iter()
        .find(|c| c.budget == 1024 && c.k_eff == 32)
        .unwrap();
    assert_eq!(base.speedup, 1.0);
    for c in &r.cells {
        assert_eq!(c.speedup, base.cycles as f64 / c.cycles as f64);
    }
}

#[test]
fn sweep_csv_round_trips() {
    let specs = vec![square(200)];
    let hw = HardwareConfig::with_macs(1024);
    let r = sweep_grid(&specs, &hw, &[1024, 4096], ScheduleKind::Unfolded, true, 1).unwrap();
    let csv = r.csv();
    let back = SweepResult::from_csv(&csv).unwrap();
    assert_eq!(back.csv(), csv);
    assert_eq!(back.cells.len(), r.cells.len());
    assert!(SweepResult::from_csv("nope\n").is_err());
    let broken = csv.replace("unfolded", "sideways");
    assert!(SweepResult::from_csv(&broken).is_err());
}

#[test]
fn comparison_needs_a_sequential_baseline() {
    let setups: Vec<ScheduleSetup> = ScheduleSetup::fixed(32)
        .into_iter()
        .filter(|s| s.kind != ScheduleKind::Sequential)
        .collect();
    let hw = HardwareConfig::with_macs(1024);
    assert!(compare_schedules(&[square(200)], &hw, &[1024], &setups, 1).is_err());
}

#[test]
fn comparison_speedups_are_against_sequential() {
    let hw = HardwareConfig::with_macs(1024);
    let t = compare_schedules(&[square(340)], &hw, &[4096], &ScheduleSetup::fixed(32), 1).unwrap();
    let row = &t.rows[0];
    assert_eq!(row.get(ScheduleKind::Sequential).speedup, 1.0);
    for e in &row.entries {
        let seq = row.get(ScheduleKind::Sequential).cycles as f64;
        assert_eq!(e.speedup, seq / e.cycles as f64);
    }
    assert_eq!(t.csv().lines().count(), 1 + ScheduleKind::ALL.len());
}

#[test]
fn config_table_is_deterministic_and_matches_fresh_sweeps() {
    let specs = vec![square(340), square(200)];
    let hw = HardwareConfig::with_macs(1024);
    let budgets = default_budgets();
    let a = build_config_table(&specs, &hw, &budgets, ScheduleKind::Unfolded, true, 1).unwrap();
    let b = build_config_table(&specs, &hw, &budgets, ScheduleKind::Unfolded, true, 4).unwrap();
    assert_eq!(a.to_json(), b.to_json());
    assert_eq!(a.entries.len(), 8);
    // sorted by key
    assert_eq!(a.entries[0].hidden_dim, 200);
    for e in &a.entries {
        let s = square(e.hidden_dim);
        let sw = sweep_k(
            &s,
            &hw.with_budget(e.budget),
            ScheduleKind::Unfolded,
            true,
            1,
        )
        .unwrap();
        assert_eq!(e.k_opt, sw.k_opt);
        assert_eq!(e.cycles, sw.best().cycles);
        assert!(e.layout_id.starts_with(&format!("k{}-", e.k_opt)));
        assert!(e.layout_id.ends_with("-r"));
    }
    let back = ConfigTable::from_json(&a.to_json()).unwrap();
    assert_eq!(back, a);
    assert_eq!(
        back.lookup(200, 200, 4096),
        a.entries
            .iter()
            .find(|e| e.hidden_dim == 200 && e.budget == 4096)
    );
    assert!(back.lookup(999, 999, 4096).is_none());
}

#[test]
fn tap_level_tracks_the_row_groups() {
    let hw = HardwareConfig::with_macs(1024);
    let t =
        build_config_table(&[square(200)], &hw, &[4096], ScheduleKind::Batch, false, 1).unwrap();
    let e = &t.entries[0];
    let groups = e.k_opt / 32;
    let vs_units = 4096usize / 32;
    assert_eq!(e.tap_level, vs_units.ilog2() - groups.ilog2());
}

#[test]
fn empty_model_list_gives_an_empty_table() {
    let hw = HardwareConfig::with_macs(1024);
    let t = build_config_table(&[], &hw, &[1024], ScheduleKind::Unfolded, true, 2).unwrap();
    assert!(t.entries.is_empty());
    assert_eq!(ConfigTable::from_json(&t.to_json()).unwrap(), t);
}

#[test]
fn config_table_version_is_checked() {
    let hw = HardwareConfig::with_macs(1024);
    let t = build_config_table(
        &[square(64)],
        &hw,
        &[1024],
        ScheduleKind::Intergate,
        false,
        1,
    )
    .unwrap();
    let json = t.to_json().replace("\"version\": 1", "\"version\": 2");
    assert!(ConfigTable::from_json(&json).is_err());
}
