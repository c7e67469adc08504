use radcal_core::config::{CalibConfig, LossWeights};
use radcal_core::dataset::CalibDataset;
use radcal_core::diff::Tape;
use radcal_core::geometry::{norm, sub, Extrinsics};
use radcal_core::losses::*;
use radcal_core::model::init_weights;
use radcal_core::simulator::{self, CircleScene, SceneSpec};

fn scene(frames: usize, seed: u64, noisy: bool) -> (CalibDataset, Extrinsics) {
    let layout = CircleScene { frames, ..CircleScene::default() };
    let mut spec = SceneSpec::circle(&layout, seed);
    spec.samples_per_target = 8;
    if !noisy {
        spec.lidar_noise = 0.0;
        spec.energy.noise = 0.0;
        spec.quantize = false;
    }
    let s = simulator::generate(&spec).unwrap();
    (s.dataset, s.truth)
}

fn tape_loss(problem: &LossProblem, ext: &Extrinsics, cfg: &CalibConfig) -> (LossBreakdown, Tape, ExtrinsicVars) {
    let net = init_weights(cfg.seed, cfg.encoding().unwrap());
    let mut tape = Tape::new();
    let vars = ExtrinsicVars::record(&mut tape, ext, true);
    let mlp = net.record(&mut tape, false);
    let terms = problem.record(&mut tape, vars, Some(&mlp)).unwrap();
    let b = terms.breakdown(&tape);
    tape.backward(terms.total).unwrap();
    (b, tape, vars)
}

#[test]
fn batched_loss_matches_record_by_record() {
    let (ds, truth) = scene(6, 1, true);
    let cfg = CalibConfig::default();
    let ext = simulator::perturb(&truth, 3.0, 0.05, 7);
    let problem = LossProblem::new(&ds, &cfg).unwrap();
    let (batched, _, _) = tape_loss(&problem, &ext, &cfg);
    let net = init_weights(cfg.seed, cfg.encoding().unwrap());
    let plain = total_loss(&ext, Some(&net), &ds, &cfg).unwrap();
    for (a, b) in [(batched.rep, plain.rep), (batched.mlp, plain.mlp), (batched.ray, plain.ray)] {
        let (a, b) = (a.unwrap(), b.unwrap());
        assert!((a - b).abs() <= 1e-10 * b.abs().max(1e-3), "{a} vs {b}");
    }
    assert!((batched.total - plain.total).abs() <= 1e-10 * plain.total);
    assert!((plain.recombine(&cfg.weights) - plain.total).abs() <= 1e-12);
}

#[test]
fn disabled_terms_are_not_evaluated() {
    let (ds, truth) = scene(4, 2, true);
    let cfg = CalibConfig { weights: LossWeights { mlp: 0.0, ray: 0.0, ..LossWeights::default() }, ..CalibConfig::default() };
    let b = total_loss(&truth, None, &ds, &cfg).unwrap();
    assert_eq!((b.mlp, b.ray), (None, None));
    assert_eq!(b.total, cfg.weights.rep * b.rep.unwrap());
    let with_mlp = CalibConfig::default();
    assert_eq!(total_loss(&truth, None, &ds, &with_mlp), Err(LossError::MissingNetwork));
}

#[test]
fn true_extrinsics_are_self_consistent() {
    let (ds, truth) = scene(30, 3, true);
    let spec = SceneSpec::circle(&CircleScene::default(), 3);
    let bound_r = spec.grid.range_bin / 2.0 + 3.0 * spec.lidar_noise * 3f64.sqrt();
    let bound_a = spec.grid.azimuth_bin_deg.to_radians() / 2.0 + 3.0 * spec.lidar_noise * 3f64.sqrt() / 4.0;
    let geom = TargetGeometry { radius: spec.target_radius };
    for frame in &ds.frames {
        for obs in &frame.observations {
            let (dr, da) = reprojection_residual(&truth, obs).unwrap();
            assert!(dr.abs() <= bound_r, "range residual {dr}");
            assert!(da.abs() <= bound_a, "azimuth residual {da}");
        }
    }
    let (clean, truth) = scene(30, 3, false);
    let mut hits = 0;
    for frame in &clean.frames {
        for obs in &frame.observations {
            let (dr, da) = reprojection_residual(&truth, obs).unwrap();
            assert!(dr.abs() < 1e-12 && da.abs() < 1e-12);
            let target = frame.poses.target_pose(obs.target).unwrap();
            let l = ray_pass_loss(&truth, &frame.poses.lidar, target, &detection_sample(obs), &geom);
            // Tilted frames can carry an in-plane ray past a raised target.
            let chain = radar_to_target(&truth, &frame.poses.lidar, target);
            let d = ray_distance(&chain.translation, &chain.rotate(&detection_sample(obs).direction));
            assert_eq!(l == 0.0, d <= geom.radius);
            hits += usize::from(l == 0.0);
        }
    }
    assert!(hits * 2 > clean.observation_count());
}

#[test]
fn hinge_inactive_means_zero_ray_gradient() {
    let (mut ds, truth) = scene(6, 4, false);
    let geom = TargetGeometry { radius: 0.3 };
    ds.frames.retain(|f| {
        f.observations.iter().all(|o| {
            let target = f.poses.target_pose(o.target).unwrap();
            ray_pass_loss(&truth, &f.poses.lidar, target, &detection_sample(o), &geom) == 0.0
        })
    });
    assert!(!ds.frames.is_empty());
    let cfg = CalibConfig { weights: LossWeights { rep: 0.0, mlp: 0.0, ..LossWeights::default() }, ..CalibConfig::default() };
    let problem = LossProblem::new(&ds, &cfg).unwrap();
    let mut tape = Tape::new();
    let vars = ExtrinsicVars::record(&mut tape, &truth, true);
    let terms = problem.record(&mut tape, vars, None).unwrap();
    assert_eq!(terms.breakdown(&tape).ray, Some(0.0));
    tape.backward(terms.total).unwrap();
    for v in [vars.rotation, vars.translation] {
        assert!(tape.grad_or_zeros(v).data().iter().all(|&g| g == 0.0));
    }
}

#[test]
fn target_frame_is_rigid() {
    let (ds, truth) = scene(3, 5, true);
    let ext = simulator::perturb(&truth, 5.0, 0.2, 1);
    for frame in &ds.frames {
        let local: Vec<_> = frame
            .samples
            .iter()
            .map(|s| to_target_frame(&ext, &frame.poses.lidar, frame.poses.target_pose(s.target).unwrap(), s))
            .collect();
        for (i, a) in local.iter().enumerate() {
            assert!((norm(&a.direction) - 1.0).abs() < 1e-9);
            for (j, b) in local.iter().enumerate().skip(i + 1) {
                if frame.samples[i].target != frame.samples[j].target {
                    continue;
                }
                let before = norm(&sub(&frame.samples[i].position, &frame.samples[j].position));
                assert!((norm(&sub(&a.position, &b.position)) - before).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn extrinsic_gradient_matches_finite_differences() {
    use radcal_core::diff::{grad_check, Tensor, Var};
    let (ds, truth) = scene(3, 6, true);
    let cfg = CalibConfig::default();
    let problem = LossProblem::new(&ds, &cfg).unwrap();
    let net = init_weights(cfg.seed, cfg.encoding().unwrap());
    let ext = simulator::perturb(&truth, 8.0, 0.4, 2);
    let point = [Tensor::row(&ext.rotation.vector()), Tensor::row(&ext.translation)];
    let r = grad_check(
        |t: &mut Tape, v: &[Var]| {
            let mlp = net.record(t, false);
            problem.record(t, ExtrinsicVars { rotation: v[0], translation: v[1] }, Some(&mlp)).unwrap().total
        },
        &point,
        1e-5,
    )
    .unwrap();
    assert!(r.max_relative_error < 1e-4, "{} at {:?}", r.max_relative_error, r.worst);
}
