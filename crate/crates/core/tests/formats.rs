use lstm_sharp_core::formats::{
    decode_weights, encode_weights, hardware_to_toml, model_to_toml, parse_hardware, parse_model,
    read_weights, sha256_hex, stages_csv, steps_csv, write_weights, STAGES_CSV_HEADER,
    WEIGHTS_MAGIC,
};
use lstm_sharp_core::{
    build_program, simulate, HardwareConfig, LstmModelSpec, LstmWeights, RunManifest, ScheduleKind,
    SharpError, TileConfig,
};

#[test]
fn model_file_round_trips() {
    let s = LstmModelSpec::new("speech", 160, 512, 25).unwrap();
    let text = model_to_toml(&s);
    assert!(text.starts_with("version = 1"));
    assert_eq!(parse_model(&text).unwrap(), s);
}

#[test]
fn model_file_errors() {
    let ok = "version = 1\nname = \"m\"\ninput_dim = 4\nhidden_dim = 8\nseq_len = 2\n";
    assert!(parse_model(ok).is_ok());
    let missing = ok.replace("version = 1\n", "");
    assert!(parse_model(&missing)
        .unwrap_err()
        .to_string()
        .contains("missing version"));
    let future = ok.replace("version = 1", "version = 2");
    assert!(parse_model(&future)
        .unwrap_err()
        .to_string()
        .contains("unsupported version"));
    let typo = ok.replace("seq_len", "seqlen");
    assert!(parse_model(&typo).is_err());
    let zero = ok.replace("hidden_dim = 8", "hidden_dim = 0");
    assert!(parse_model(&zero).is_err());
    assert!(parse_model("version = ").is_err());
}

#[test]
fn hardware_file_round_trips_and_fills_defaults() {
    let hw = HardwareConfig::with_macs(16384);
    assert_eq!(parse_hardware(&hardware_to_toml(&hw)).unwrap(), hw);
    let short = parse_hardware("version = 1\ntotal_macs = 4096\n").unwrap();
    assert_eq!(short, HardwareConfig::with_macs(4096));
    assert!(parse_hardware("version = 1\ntotal_macs = 1000\n").is_err());
    assert!(parse_hardware("version = 1\ntotal_mac = 4096\n").is_err());
}

#[test]
fn weights_round_trip_bit_for_bit() {
    let s = LstmModelSpec::new("w", 5, 7, 1).unwrap();
    let w = LstmWeights::random(&s, 9);
    let bytes = encode_weights(&w);
    assert_eq!(&bytes[..8], WEIGHTS_MAGIC);
    assert_eq!(decode_weights(&bytes, Some(&s)).unwrap(), w);
    assert_eq!(decode_weights(&bytes, None).unwrap(), w);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.bin");
    write_weights(&path, &w).unwrap();
    assert_eq!(read_weights(&path, Some(&s)).unwrap(), w);
}

#[test]
fn weights_payload_order_is_w_then_u_then_b() {
    let s = LstmModelSpec::new("w", 2, 1, 1).unwrap();
    let mut w = LstmWeights::zeros(&s);
    w.w[0].data = vec![1.0, 2.0];
    w.u[3].data = vec![3.0];
    w.b[1] = vec![4.0];
    let bytes = encode_weights(&w);
    let hlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let vals: Vec<f64> = bytes[12 + hlen..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    // 4 gates x (1x2 W, 1x1 U, 1 bias)
    assert_eq!(vals.len(), 16);
    assert_eq!(&vals[0..2], &[1.0, 2.0]);
    assert_eq!(vals[8 + 3], 3.0);
    assert_eq!(vals[12 + 1], 4.0);
}

#[test]
fn corrupted_weights_are_rejected() {
    let s = LstmModelSpec::new("w", 3, 4, 1).unwrap();
    let good = encode_weights(&LstmWeights::random(&s, 1));

    let mut flipped = good.clone();
    *flipped.last_mut().unwrap() ^= 1;
    let err = decode_weights(&flipped, Some(&s)).unwrap_err().to_string();
    assert!(err.contains("digest"), "{err}");

    let mut magic = good.clone();
    magic[0] = b'X';
    assert!(decode_weights(&magic, None)
        .unwrap_err()
        .to_string()
        .contains("magic"));

    let short = &good[..good.len() - 8];
    assert!(decode_weights(short, None)
        .unwrap_err()
        .to_string()
        .contains("payload"));

    assert!(decode_weights(&good[..10], None).is_err());

    let other = LstmModelSpec::new("w", 3, 5, 1).unwrap();
    assert!(matches!(
        decode_weights(&good, Some(&other)).unwrap_err(),
        SharpError::Dimension { .. }
    ));
}

#[test]
fn sha256_matches_a_known_digest() {
    assert_eq!(
        sha256_hex(b"abc"),
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
    );
}

#[test]
fn manifest_records_inputs_and_pinned_time() {
    std::env::set_var("SOURCE_DATE_EPOCH", "1700000000");
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.toml");
    std::fs::write(&path, "abc").unwrap();
    let mut m = RunManifest::new("simulate", serde_json::json!({"k": 32}));
    m.add_input(&path).unwrap();
    assert_eq!(m.timestamp, "2023-11-14T22:13:20Z");
    assert_eq!(m.inputs[0].sha256, sha256_hex(b"abc"));
    assert_eq!(m.config["k"], 32);
    let back: RunManifest = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
    assert_eq!(back, m);
}

#[test]
fn stage_and_step_csvs_have_one_row_per_item() {
    let s = LstmModelSpec::square(64, 3).unwrap();
    let hw = HardwareConfig::with_macs(1024);
    let tile = TileConfig::new(&hw, 32).unwrap();
    let r = simulate(
        &build_program(ScheduleKind::Batch, &s, &hw, &tile, false).unwrap(),
        &hw,
    )
    .unwrap();
    let stages = stages_csv(&r);
    assert_eq!(stages.lines().next(), Some(STAGES_CSV_HEADER));
    assert_eq!(stages.lines().count(), 5);
    let steps = steps_csv(&r);
    assert_eq!(steps.lines().count(), 4);
    let total: u64 = steps
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse::<u64>().unwrap())
        .sum();
    assert_eq!(total, r.total_cycles);
}
