use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use radcal_core::config::CalibConfig;
use radcal_core::dataset::CalibDataset;
use radcal_core::geometry::Extrinsics;
use radcal_core::losses::TargetGeometry;
use radcal_core::pipeline::*;
use radcal_core::simulator::{self, CircleScene, SceneSpec};

fn scene(frames: usize, seed: u64) -> (CalibDataset, Extrinsics) {
    let mut spec = SceneSpec::circle(&CircleScene { frames, ..CircleScene::default() }, seed);
    spec.samples_per_target = 4;
    let s = simulator::generate(&spec).unwrap();
    (s.dataset, s.truth)
}

#[test]
fn subsample_keeps_the_requested_share() {
    let (ds, _) = scene(10, 1);
    let n = ds.observation_count();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let half = subsample(&ds, 0.5, &mut rng);
    assert_eq!(half.observation_count(), n.div_ceil(2));
    half.validate().unwrap();
    for frame in &half.frames {
        assert!(frame.samples.iter().all(|s| frame.observations.iter().any(|o| o.target == s.target)));
        let original = ds.frames.iter().find(|f| f.id == frame.id).unwrap();
        assert_eq!(frame.poses, original.poses);
    }
    let again = subsample(&ds, 0.5, &mut ChaCha8Rng::seed_from_u64(3));
    assert_eq!(half, again);
    assert_eq!(subsample(&ds, 1.0, &mut rng).observation_count(), n);
}

#[test]
fn ablation_lists_every_configuration() {
    let (ds, truth) = scene(4, 2);
    let cfg = CalibConfig { iterations: 15, initial: simulator::perturb(&truth, 3.0, 0.05, 1), ..CalibConfig::default() };
    let table = run_ablation(&ds, &cfg).unwrap();
    let labels: Vec<&str> = table.rows.iter().map(|r| r.label.as_str()).collect();
    assert_eq!(labels, ["initial", "rep", "mlp", "mlp+ray", "rep+ray"]);
    assert_eq!(table.rows[0].parameters, cfg.initial.parameter_row());
    assert!(table.rows[0].loss.is_none());
    for row in &table.rows[1..] {
        let (start, end) = row.loss.unwrap();
        assert!(end.total <= start.total, "{}", row.label);
    }
}

#[test]
fn monte_carlo_is_seeded_and_summarized() {
    let (ds, truth) = scene(6, 3);
    let cfg = CalibConfig { iterations: 10, initial: simulator::perturb(&truth, 2.0, 0.03, 2), ..CalibConfig::default() };
    let cfg = Objective::Rep.config(&cfg);
    let a = monte_carlo(&ds, &cfg, 5, 0.5, 9).unwrap();
    let b = monte_carlo(&ds, &cfg, 5, 0.5, 9).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.completed().count(), 5);
    for p in 0..6 {
        let q = a.quantiles[p].unwrap();
        assert!(q.min <= q.q1 && q.q1 <= q.median && q.median <= q.q3 && q.q3 <= q.max);
    }
    assert!(monte_carlo(&ds, &cfg, 5, 0.0, 9).is_err());
}

#[test]
fn boundary_violations_grow_with_tilt() {
    let (ds, truth) = scene(30, 4);
    let geom = TargetGeometry { radius: 0.3 };
    let base = boundary_check(&truth, &ds, &geom).violation_fraction;
    let tilted = simulator::perturb(&truth, 6.0, 0.0, 5);
    assert!(boundary_check(&tilted, &ds, &geom).violation_fraction > base);
}
