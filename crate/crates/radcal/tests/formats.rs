use radcal::checkpoint;
use radcal::config_io::{parse_config, ConfigFileError};
use radcal::dataset_io::{from_toml, load_dataset, to_toml, write_dataset, DatasetFile, LoadError};
use radcal_core::model::{init_weights, Encoding};
use radcal_core::simulator::{self, CircleScene, SceneSpec};

fn synthetic() -> DatasetFile {
    let mut spec = SceneSpec::circle(&CircleScene { frames: 4, ..CircleScene::default() }, 5);
    spec.samples_per_target = 3;
    let s = simulator::generate(&spec).unwrap();
    DatasetFile { dataset: s.dataset, ground_truth: Some(s.truth) }
}

#[test]
fn dataset_round_trips_through_a_file() {
    let file = synthetic();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.toml");
    write_dataset(&path, &file).unwrap();
    assert_eq!(load_dataset(&path).unwrap(), file);
    assert_eq!(to_toml(&from_toml(&to_toml(&file)).unwrap()), to_toml(&file));
}

#[test]
fn dataset_errors_are_specific() {
    let text = to_toml(&synthetic());
    assert!(matches!(from_toml(&text.replacen("version = 1", "version = 9", 1)), Err(LoadError::Format { version: 9, .. })));
    assert!(matches!(from_toml("format = \"radcal-dataset\"\n"), Err(LoadError::Schema(_))));
    let bad_energy = text.replacen("energy = 0", "energy = 7", 1);
    assert!(matches!(from_toml(&bad_energy), Err(LoadError::Invalid(_))), "{:?}", from_toml(&bad_energy).err());
    assert!(matches!(load_dataset(std::path::Path::new("/nonexistent/d.toml")), Err(LoadError::Io { .. })));
}

#[test]
fn config_dotted_overrides() {
    let text = "seed = 3\n[weights]\nray = 50.0\n";
    let c = parse_config(text, &["weights.ray=7".into(), "encoding.enabled=false".into(), "iterations=12".into()]).unwrap();
    assert_eq!(c.config.weights.ray, 7.0);
    assert_eq!(c.config.seed, 3);
    assert_eq!(c.config.iterations, 12);
    assert!(!c.config.pe_enabled);
    assert!(matches!(parse_config("", &["weights".into()]), Err(ConfigFileError::Override(_))));
    assert!(matches!(parse_config("", &["learning_rates.rotation=-1".into()]), Err(ConfigFileError::Invalid(_))));
    // the echoed config parses back to the same settings
    assert_eq!(parse_config(&c.to_toml(), &[]).unwrap().config, c.config);
}

#[test]
fn checkpoint_file_round_trip() {
    let w = init_weights(4, Encoding::sinusoidal(6).unwrap());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.txt");
    checkpoint::save(&path, &w).unwrap();
    assert_eq!(checkpoint::load(&path).unwrap(), w);
    assert!(checkpoint::from_text("radcal-mlp 2\n").is_err());
}
