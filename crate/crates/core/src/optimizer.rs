//! Adam with per-group learning rates and the joint calibration loop.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::config::{CalibConfig, ConfigError};
use crate::dataset::{CalibDataset, DatasetError};
use crate::diff::{DiffError, Tape, Tensor};
use crate::geometry::{AxisAngle, Extrinsics, Pose};
use crate::losses::{extrinsics_from_tensors, ExtrinsicVars, LossBreakdown, LossError, LossProblem};
use crate::math;
use crate::model::{forward_on_tape, init_weights, Encoding, MlpWeights, TargetLocalSample};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OptimizerError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error("non-finite gradient for `{param}`")]
    NonFiniteGradient { param: String },
    #[error("loss diverged at step {step} ({op})")]
    Diverged { step: usize, op: &'static str, last: Extrinsics },
    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// A tensor being optimized, with its name and learning rate.
pub struct Param<'a> {
    pub name: &'a str,
    pub lr: f64,
    pub value: &'a mut Tensor,
}

/// Moment estimates for a fixed list of parameters. Step counts are kept per
/// parameter so a group that joins late starts with fresh bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub hyper: AdamHyper,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub steps: Vec<u64>,
}

impl AdamState {
    pub fn new(shapes: &[(usize, usize)], hyper: AdamHyper) -> Self {
        Self {
            hyper,
            m: shapes.iter().map(|&(r, c)| Tensor::zeros(r, c)).collect(),
            v: shapes.iter().map(|&(r, c)| Tensor::zeros(r, c)).collect(),
            steps: alloc::vec![0; shapes.len()],
        }
    }

    /// Bias-corrected Adam update of `params[i]` with `grads[i]`. `None`
    /// gradients leave the parameter and its moments untouched. All
    /// gradients are checked before anything is modified.
    pub fn step(&mut self, params: &mut [Param<'_>], grads: &[Option<&Tensor>]) -> Result<(), OptimizerError> {
        if params.len() != self.m.len() || grads.len() != params.len() {
            return Err(OptimizerError::InvalidArgument("parameter count does not match optimizer state"));
        }
        for (p, g) in params.iter().zip(grads) {
            if let Some(g) = g {
                if g.shape() != p.value.shape() {
                    return Err(OptimizerError::InvalidArgument("gradient shape does not match parameter"));
                }
                if !g.is_finite() {
                    return Err(OptimizerError::NonFiniteGradient { param: String::from(p.name) });
                }
            }
        }
        let AdamHyper { beta1, beta2, eps } = self.hyper;
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let Some(g) = g else { continue };
            self.steps[i] += 1;
            let t = self.steps[i] as i32;
            let c1 = 1.0 - math::powi(beta1, t);
            let c2 = 1.0 - math::powi(beta2, t);
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            for (((x, &gk), mk), vk) in p.value.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
                *mk = beta1 * *mk + (1.0 - beta1) * gk;
                *vk = beta2 * *vk + (1.0 - beta2) * gk * gk;
                let denom = math::sqrt(*vk / c2) + eps;
                *x -= p.lr * (*mk / c1) / denom;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub loss: LossBreakdown,
    /// Parameters at which `loss` was evaluated.
    pub extrinsics: Extrinsics,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Iterations,
    Plateau,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationResult {
    pub initial: Extrinsics,
    pub extrinsics: Extrinsics,
    pub network: Option<MlpWeights>,
    pub trajectory: Vec<StepRecord>,
    /// Loss at the returned parameters.
    pub final_loss: LossBreakdown,
    pub stop: StopReason,
}

impl CalibrationResult {
    pub fn parameter_row(&self) -> [f64; 6] {
        self.extrinsics.parameter_row()
    }

    pub fn steps(&self) -> usize {
        self.trajectory.len()
    }
}

const ROTATION: &str = "rotation";
const TRANSLATION: &str = "translation";

fn layer_names(n: usize) -> Vec<String> {
    (0..n).flat_map(|k| [format!("mlp.layer{k}.weight"), format!("mlp.layer{k}.bias")]).collect()
}

/// Full-batch joint optimization of the extrinsics (and the network when
/// the regression term is enabled).
pub fn run_calibration(dataset: &CalibDataset, config: &CalibConfig) -> Result<CalibrationResult, OptimizerError> {
    config.validate_for_run()?;
    dataset.validate()?;
    let problem = LossProblem::new(dataset, config)?;
    let mut network = (config.weights.mlp > 0.0).then(|| init_weights(config.seed, config.encoding().expect("validated")));
    calibrate_problem(&problem, config, &mut network).map(|(ext, traj, final_loss, stop)| CalibrationResult {
        initial: config.initial,
        extrinsics: ext,
        network,
        trajectory: traj,
        final_loss,
        stop,
    })
}

type LoopOutput = (Extrinsics, Vec<StepRecord>, LossBreakdown, StopReason);

fn calibrate_problem(
    problem: &LossProblem,
    config: &CalibConfig,
    network: &mut Option<MlpWeights>,
) -> Result<LoopOutput, OptimizerError> {
    let mut rotation = Tensor::row(&config.initial.rotation.vector());
    let mut translation = Tensor::row(&config.initial.translation);
    let mut shapes = alloc::vec![rotation.shape(), translation.shape()];
    if let Some(net) = network.as_ref() {
        shapes.extend(net.tensors().iter().map(|t| t.shape()));
    }
    let names = network.as_ref().map(|n| layer_names(n.layers.len())).unwrap_or_default();
    let mut adam = AdamState::new(&shapes, AdamHyper::default());
    let lr = config.learning_rates;

    let mut trajectory = Vec::with_capacity(config.iterations);
    let mut best = f64::INFINITY;
    let mut best_state = (rotation.clone(), translation.clone(), network.clone());
    let mut best_history: Vec<f64> = Vec::with_capacity(config.iterations);
    let mut stop = StopReason::Iterations;

    for step in 0..config.iterations {
        let current = extrinsics_from_tensors(&rotation, &translation).expect("finite parameters");
        let mut tape = Tape::new();
        let ext = ExtrinsicVars::record(&mut tape, &current, true);
        let vars = network.as_ref().map(|n| n.record(&mut tape, true));
        let terms = problem.record(&mut tape, ext, vars.as_ref())?;
        let loss = terms.breakdown(&tape);
        if let Some(op) = tape.poisoned() {
            return Err(OptimizerError::Diverged { step, op, last: current });
        }
        trajectory.push(StepRecord { step, loss, extrinsics: current });
        match tape.backward(terms.total) {
            Ok(()) => {}
            Err(DiffError::Poisoned { op }) => return Err(OptimizerError::Diverged { step, op, last: current }),
            Err(e) => return Err(LossError::from(e).into()),
        }

        let extrinsics_active = step >= config.warmup_steps;
        let g_rot = tape.grad_or_zeros(ext.rotation);
        let g_trans = tape.grad_or_zeros(ext.translation);
        let mut grads: Vec<Tensor> = Vec::with_capacity(shapes.len());
        grads.push(g_rot);
        grads.push(g_trans);
        if let Some(v) = vars.as_ref() {
            grads.extend(v.vars().into_iter().map(|x| tape.grad_or_zeros(x)));
        }
        drop(tape);
        if loss.total < best {
            best = loss.total;
            best_state = (rotation.clone(), translation.clone(), network.clone());
        }

        let mut params: Vec<Param<'_>> = Vec::with_capacity(shapes.len());
        params.push(Param { name: ROTATION, lr: lr.rotation, value: &mut rotation });
        params.push(Param { name: TRANSLATION, lr: lr.translation, value: &mut translation });
        if let Some(net) = network.as_mut() {
            for (t, name) in net.tensors_mut().into_iter().zip(&names) {
                params.push(Param { name, lr: lr.mlp, value: t });
            }
        }
        let grad_refs: Vec<Option<&Tensor>> = grads
            .iter()
            .enumerate()
            .map(|(i, g)| if i < 2 && !extrinsics_active { None } else { Some(g) })
            .collect();
        adam.step(&mut params, &grad_refs)?;
        drop(params);
        canonicalize_rotation(&mut rotation);
        best_history.push(best);
        if plateaued(&best_history, config.plateau_window, config.plateau_tolerance) && extrinsics_active {
            stop = StopReason::Plateau;
            break;
        }
    }

    // Adam keeps stepping at roughly its learning rate near a minimum, so the
    // last iterate can sit well off the best point visited.
    let (rotation, translation, best_network) = best_state;
    *network = best_network;
    let final_ext = extrinsics_from_tensors(&rotation, &translation).expect("finite parameters");
    let mut tape = Tape::new();
    let ext = ExtrinsicVars::record(&mut tape, &final_ext, false);
    let vars = network.as_ref().map(|n| n.record(&mut tape, false));
    let terms = problem.record(&mut tape, ext, vars.as_ref())?;
    if let Some(op) = tape.poisoned() {
        let last = trajectory.last().map_or(config.initial, |r| r.extrinsics);
        return Err(OptimizerError::Diverged { step: trajectory.len(), op, last });
    }
    Ok((final_ext, trajectory, terms.breakdown(&tape), stop))
}

fn canonicalize_rotation(rotation: &mut Tensor) {
    let d = rotation.data();
    if let Ok(w) = AxisAngle::new([d[0], d[1], d[2]]) {
        rotation.data_mut().copy_from_slice(&w.vector());
    }
}

/// True when the best loss improved by less than `tol` (relative) over the
/// last `window` steps.
fn plateaued(best: &[f64], window: usize, tol: f64) -> bool {
    if window == 0 || best.len() <= window {
        return false;
    }
    let now = best[best.len() - 1];
    let then = best[best.len() - 1 - window];
    let scale = math::abs(then).max(f64::MIN_POSITIVE);
    (then - now) / scale < tol
}

/// Settings for fitting the network alone on fixed samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitConfig {
    pub encoding: Encoding,
    pub iterations: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub weights: MlpWeights,
    pub losses: Vec<f64>,
}

/// Trains a fresh network to regress `samples` with the mean absolute error
/// and returns the weights with the lowest loss seen.
pub fn fit_energy_field(samples: &[TargetLocalSample], config: &FitConfig) -> Result<FitResult, OptimizerError> {
    if samples.is_empty() {
        return Err(LossError::EmptyBatch("mlp").into());
    }
    if !(config.learning_rate >= 0.0) {
        return Err(OptimizerError::InvalidArgument("learning rate must be non-negative"));
    }
    let mut weights = init_weights(config.seed, config.encoding);
    let features = crate::model::features_of(samples, &config.encoding);
    let energies = Tensor::column(&samples.iter().map(|s| s.energy).collect::<Vec<_>>());
    let shapes: Vec<_> = weights.tensors().iter().map(|t| t.shape()).collect();
    let names = layer_names(weights.layers.len());
    let mut adam = AdamState::new(&shapes, AdamHyper::default());
    let mut losses = Vec::with_capacity(config.iterations);
    let mut best = (f64::INFINITY, weights.clone());
    for step in 0..config.iterations {
        let mut tape = Tape::new();
        let vars = weights.record(&mut tape, true);
        let x = tape.constant(features.clone());
        let y = forward_on_tape(&mut tape, &vars, x);
        let e = tape.constant(energies.clone());
        let d = tape.sub(y, e);
        let d = tape.abs(d);
        let loss = tape.mean(d);
        let value = tape.value(loss).item();
        if let Some(op) = tape.poisoned() {
            return Err(OptimizerError::Diverged { step, op, last: Pose::IDENTITY });
        }
        losses.push(value);
        if value < best.0 {
            best = (value, weights.clone());
        }
        tape.backward(loss).map_err(LossError::from)?;
        let grads: Vec<Tensor> = vars.vars().into_iter().map(|v| tape.grad_or_zeros(v)).collect();
        drop(tape);
        let mut params: Vec<Param<'_>> = weights
            .tensors_mut()
            .into_iter()
            .zip(&names)
            .map(|(t, name)| Param { name, lr: config.learning_rate, value: t })
            .collect();
        adam.step(&mut params, &grads.iter().map(Some).collect::<Vec<_>>())?;
    }
    Ok(FitResult { weights: best.1, losses })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut x = Tensor::row(&[1.0, -2.0]);
        let mut adam = AdamState::new(&[(1, 2)], AdamHyper::default());
        let g = Tensor::zeros(1, 2);
        adam.step(&mut [Param { name: "x", lr: 0.1, value: &mut x }], &[Some(&g)]).unwrap();
        assert_eq!(x.data(), &[1.0, -2.0]);
        assert_eq!(adam.steps[0], 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut x = Tensor::row(&[0.0, 0.0, 0.0]);
        let mut adam = AdamState::new(&[(1, 3)], AdamHyper::default());
        let g = Tensor::row(&[3.0, -0.02, 1e-3]);
        adam.step(&mut [Param { name: "x", lr: 0.01, value: &mut x }], &[Some(&g)]).unwrap();
        // bias-corrected m/√v = g/(|g|+ε)
        for (xi, gi) in x.data().iter().zip(g.data()) {
            let expected = -0.01 * gi / (gi.abs() + 1e-8);
            assert!((xi - expected).abs() < 1e-15);
            assert!((xi.abs() - 0.01).abs() < 0.01 * 0.01);
        }
    }

    #[test]
    fn nan_gradient_names_parameter() {
        let mut a = Tensor::row(&[0.0]);
        let mut b = Tensor::row(&[0.0]);
        let mut adam = AdamState::new(&[(1, 1), (1, 1)], AdamHyper::default());
        let ga = Tensor::row(&[1.0]);
        let gb = Tensor::row(&[f64::NAN]);
        let err = adam
            .step(
                &mut [Param { name: "a", lr: 0.1, value: &mut a }, Param { name: "translation", lr: 0.1, value: &mut b }],
                &[Some(&ga), Some(&gb)],
            )
            .unwrap_err();
        assert_eq!(err, OptimizerError::NonFiniteGradient { param: "translation".into() });
        assert_eq!(a.data(), &[0.0]);
    }

    #[test]
    fn skipped_parameter_keeps_state() {
        let mut a = Tensor::row(&[1.0]);
        let mut adam = AdamState::new(&[(1, 1)], AdamHyper::default());
        adam.step(&mut [Param { name: "a", lr: 0.1, value: &mut a }], &[None]).unwrap();
        assert_eq!((a.data()[0], adam.steps[0]), (1.0, 0));
    }

    #[test]
    fn plateau_rule() {
        let flat = alloc::vec![1.0; 60];
        assert!(plateaued(&flat, 50, 1e-7));
        let falling: Vec<f64> = (0..60).map(|k| 1.0 - 0.01 * k as f64).collect();
        assert!(!plateaued(&falling, 50, 1e-7));
        assert!(!plateaued(&flat[..50], 50, 1e-7));
        assert!(!plateaued(&flat, 0, 1e-7));
    }
}
