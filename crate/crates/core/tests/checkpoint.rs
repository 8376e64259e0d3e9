use std::path::Path;

use qmoe::checkpoint::{Checkpoint, CHECKPOINT_FORMAT};
use qmoe::experiments::{run_experiment, ExperimentConfig};
use qmoe::ErrorKind;
use serde_json::json;

fn train(dir: &Path) -> Checkpoint {
    let cfg = json!({
        "kind": "train_single",
        "dataset": {"source": "two_moons", "n_samples": 200},
        "models": [{"name": "q", "router": {"kind": "quantum", "n_layers": 2}}],
        "train": {"max_epochs": 4, "batch_size": 16},
        "seeds": [11],
        "output_dir": dir.to_str().unwrap()
    });
    let cfg = ExperimentConfig::from_json(&cfg.to_string(), Path::new("."), &[]).unwrap();
    run_experiment(&cfg).unwrap();
    Checkpoint::load(&dir.join("checkpoints/q_seed11.json")).unwrap()
}

#[test]
fn round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let ck = train(dir.path());
    assert_eq!(ck.format, CHECKPOINT_FORMAT);
    let again = dir.path().join("again.json");
    ck.save(&again).unwrap();
    let back = Checkpoint::load(&again).unwrap();
    assert_eq!(back, ck);
    let bits = |c: &Checkpoint| c.model.parameters().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&back), bits(&ck));
    assert_eq!(
        std::fs::read_to_string(&again).unwrap(),
        std::fs::read_to_string(dir.path().join("checkpoints/q_seed11.json")).unwrap()
    );
}

#[test]
fn preprocess_matches_training_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let ck = train(dir.path());
    let raw = [0.5, 0.25];
    assert_eq!(ck.preprocess(&raw), ck.scaler.transform(&raw));
    assert!(ck.provenance.iter().any(|s| s.starts_with("two_moons")));
}

#[test]
fn corrupt_checkpoints_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let ck = train(dir.path());
    let path = dir.path().join("bad.json");
    let mut v = serde_json::to_value(&ck).unwrap();
    v["format"] = json!("something-else/9");
    std::fs::write(&path, v.to_string()).unwrap();
    assert_eq!(Checkpoint::load(&path).unwrap_err().kind(), ErrorKind::Config);
    std::fs::write(&path, "{").unwrap();
    assert_eq!(Checkpoint::load(&path).unwrap_err().kind(), ErrorKind::Config);
}
