use alloc::vec::Vec;

use super::{DiffError, Tape, Tensor, Var};
use crate::math;

/// Outcome of comparing analytic and finite-difference gradients.
#[derive(Debug, Clone)]
pub struct GradCheck {
    /// max over coordinates of `|analytic − numeric| / max(1, |analytic|)`.
    pub max_relative_error: f64,
    /// `(input index, flat element index)` of the worst coordinate.
    pub worst: (usize, usize),
    /// Coordinates whose plain probes `x ± h` crossed a kink (see
    /// [`Tape::branch_pattern`]). Their numeric derivative is taken with the
    /// branches frozen at `x`, i.e. on the smooth piece the analytic
    /// gradient belongs to.
    pub kinked: usize,
    pub analytic: Vec<Tensor>,
    pub numeric: Vec<Tensor>,
}

fn evaluate<F>(f: &F, point: &[Tensor], frozen: Option<&[i8]>) -> Result<(f64, Vec<i8>), DiffError>
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    let mut tape = match frozen {
        Some(p) => Tape::with_frozen_branches(p.to_vec()),
        None => Tape::new(),
    };
    let vars: Vec<Var> = point.iter().map(|p| tape.leaf(p.clone())).collect();
    let out = f(&mut tape, &vars);
    tape.check()?;
    let v = tape.value(out);
    if !v.is_scalar() {
        return Err(DiffError::InvalidArgument("gradient check needs a scalar function"));
    }
    Ok((v.item(), tape.branch_pattern()))
}

/// Central differences. With a `base` pattern, probes that leave it are
/// re-evaluated with the branches frozen and the coordinate is counted.
fn probe<F>(f: &F, point: &[Tensor], h: f64, base: Option<&[i8]>) -> Result<(Vec<Tensor>, usize), DiffError>
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    let mut work: Vec<Tensor> = point.to_vec();
    let mut out = Vec::with_capacity(point.len());
    let mut kinked = 0;
    for i in 0..point.len() {
        let (r, c) = point[i].shape();
        let mut g = Tensor::zeros(r, c);
        for j in 0..point[i].len() {
            let x0 = point[i].data()[j];
            let side = |x: f64, work: &mut [Tensor]| -> Result<(f64, bool), DiffError> {
                work[i].data_mut()[j] = x;
                let (v, pattern) = evaluate(f, work, None)?;
                match base {
                    Some(b) if pattern != b => Ok((evaluate(f, work, Some(b))?.0, true)),
                    _ => Ok((v, false)),
                }
            };
            let (plus, kp) = side(x0 + h, &mut work)?;
            let (minus, km) = side(x0 - h, &mut work)?;
            work[i].data_mut()[j] = x0;
            g.data_mut()[j] = (plus - minus) / (2.0 * h);
            kinked += usize::from(kp || km);
        }
        out.push(g);
    }
    Ok((out, kinked))
}

/// Central differences `(f(x + h·eᵢ) − f(x − h·eᵢ)) / 2h` for every input
/// coordinate.
pub fn central_differences<F>(f: &F, point: &[Tensor], h: f64) -> Result<Vec<Tensor>, DiffError>
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    probe(f, point, h, None).map(|(g, _)| g)
}

/// Checks the tape gradient of `f` at `point` against central differences
/// with step `h`.
pub fn grad_check<F>(f: F, point: &[Tensor], h: f64) -> Result<GradCheck, DiffError>
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    if !(h > 0.0) {
        return Err(DiffError::InvalidArgument("finite-difference step must be positive"));
    }
    let mut tape = Tape::new();
    let vars: Vec<Var> = point.iter().map(|p| tape.leaf(p.clone())).collect();
    let out = f(&mut tape, &vars);
    tape.backward(out)?;
    let analytic: Vec<Tensor> = vars.iter().map(|v| tape.grad_or_zeros(*v)).collect();
    let base = tape.branch_pattern();
    let (numeric, kinked) = probe(&f, point, h, Some(&base))?;

    let mut max_relative_error = 0.0;
    let mut worst = (0, 0);
    for (i, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
        for (j, (&av, &nv)) in a.data().iter().zip(n.data()).enumerate() {
            let err = math::abs(av - nv) / math::abs(av).max(1.0);
            if err > max_relative_error {
                max_relative_error = err;
                worst = (i, j);
            }
        }
    }
    Ok(GradCheck { max_relative_error, worst, kinked, analytic, numeric })
}

