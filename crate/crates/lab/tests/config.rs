use regnoise_lab::config::{ExperimentConfig, ExperimentKind, Params, DEFAULT_SEED};

fn parse(text: &str) -> regnoise_lab::Result<ExperimentConfig> {
    ExperimentConfig::from_json(text)
}

#[test]
fn minimal_config_gets_defaults() {
    let cfg = parse(r#"{"experiment": "yde"}"#).unwrap();
    assert_eq!(cfg, ExperimentConfig::new(ExperimentKind::Yde));
    assert_eq!(cfg.seed, DEFAULT_SEED);
    assert!(cfg.validate().is_empty());
}

#[test]
fn every_default_config_is_valid() {
    for kind in ExperimentKind::ALL {
        let cfg = ExperimentConfig::new(kind);
        assert!(cfg.validate().is_empty(), "{}: {:?}", kind.name(), cfg.validate());
        // Round trip through JSON.
        let back = parse(&cfg.to_value().to_string()).unwrap();
        assert_eq!(back, cfg);
    }
}

#[test]
fn unknown_keys_are_rejected_at_every_level() {
    for text in [
        r#"{"experiment": "yde", "sedd": 3}"#,
        r#"{"experiment": "yde", "resolution": {"n_time": 64, "n_space": 8}}"#,
        r#"{"experiment": "yde", "params": {"lamda": 1.0}}"#,
        r#"{"experiment": "warp-drive"}"#,
    ] {
        let err = parse(text).unwrap_err().to_string();
        assert!(err.contains("unknown"), "{text}: {err}");
    }
}

#[test]
fn syntax_errors_report_line_and_column() {
    let err = parse("{\n  \"experiment\": \"yde\",\n  \"seed\": ,\n}").unwrap_err().to_string();
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn hurst_zero_is_rejected() {
    let cfg = parse(r#"{"experiment": "peano", "params": {"hurst": 0.0}}"#).unwrap();
    let d = cfg.validate();
    assert_eq!(d.len(), 1);
    assert_eq!(d[0].field, "params.hurst");
    assert!(d[0].message.contains("H out of (0,1)"));
}

#[test]
fn young_condition_is_enforced() {
    let cfg = parse(r#"{"experiment": "yde", "params": {"gamma": 0.4, "nu": 1.0}}"#).unwrap();
    let d = cfg.validate();
    assert!(d.iter().any(|d| d.message.contains("Young condition violated")), "{d:?}");
    let ok = parse(r#"{"experiment": "yde", "params": {"gamma": 0.6, "nu": 1.0}}"#).unwrap();
    assert!(ok.validate().is_empty());
}

#[test]
fn resolution_must_be_power_of_two() {
    let cfg = parse(r#"{"experiment": "flow", "resolution": {"n_time": 1000}}"#).unwrap();
    assert!(cfg.validate().iter().any(|d| d.field == "resolution.n_time"));
    let cfg = parse(r#"{"experiment": "flow", "seeds": 0}"#).unwrap();
    assert!(cfg.validate().iter().any(|d| d.field == "seeds"));
}

#[test]
fn manifest_is_accepted_as_config() {
    let cfg = parse(r#"{"experiment": "peano", "seed": 7, "seeds": 3, "params": {"kappa": 0.25}}"#).unwrap();
    let manifest = serde_json::json!({
        "tool": "regnoise-lab",
        "outputs": [],
        "config": cfg.to_value(),
    });
    let back = parse(&manifest.to_string()).unwrap();
    assert_eq!(back, cfg);
    match back.params {
        Params::Peano(p) => assert_eq!(p.kappa, 0.25),
        other => panic!("wrong params {other:?}"),
    }
}

#[test]
fn shipped_configs_parse() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut count = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let cfg = ExperimentConfig::load(&path).unwrap();
        let valid = cfg.validate().is_empty();
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        assert_eq!(valid, !name.starts_with("invalid"), "{name}");
        count += 1;
    }
    assert!(count >= ExperimentKind::ALL.len());
}
