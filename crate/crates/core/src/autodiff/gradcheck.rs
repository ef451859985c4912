//! Central finite-difference checks of tape gradients.
//!
//! The function under test may return a tensor of any shape. It is reduced
//! to a scalar by a fixed pseudo-random projection `L = Σ rᵢ·outᵢ`, so every
//! output element contributes to the checked gradient.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::tensor::Tensor;

use super::{Param, Parameterized, Tape, Var};

/// Perturbation for central differences.
pub const FD_STEP: f64 = 1e-5;
/// Maximum accepted relative error.
pub const GRADCHECK_TOLERANCE: f64 = 1e-6;

const PROJECTION_SEED: u64 = 0x6772_6164;

/// `|a − b| / max(|a|, |b|, 1e-8)`.
pub fn rel_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

#[derive(Clone, Debug)]
pub struct GradCheck {
    pub name: String,
    pub max_rel_error: f64,
    /// Number of scalar entries compared.
    pub checked: usize,
    /// (parameter name, flat index, analytic, numeric) of the worst entry.
    pub worst: Option<(String, usize, f64, f64)>,
}

impl GradCheck {
    pub fn passed(&self) -> bool {
        self.max_rel_error < GRADCHECK_TOLERANCE
    }
}

fn projection(n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(PROJECTION_SEED ^ n as u64);
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn project(tape: &mut Tape, out: Var) -> Result<Var> {
    let v = tape.value(out);
    if v.numel() == 1 {
        return Ok(out);
    }
    let r = Tensor::from_vec(v.dims().to_vec(), projection(v.numel()))?;
    let r = tape.leaf(r);
    let prod = tape.mul(out, r)?;
    Ok(tape.sum(prod))
}

fn scalar_value(tape: &mut Tape, out: Var) -> Result<f64> {
    let l = project(tape, out)?;
    Ok(tape.value(l).item())
}

/// Checks the gradient of `f` with respect to every entry of every input.
/// Inputs are bound as parameters, so `f` sees one [`Var`] per input.
pub fn check_gradients<F>(name: &str, inputs: &[Tensor], f: F) -> Result<GradCheck>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let list = ParamList(
        inputs
            .iter()
            .enumerate()
            .map(|(i, t)| Param::new(format!("input{i}"), t.detached()))
            .collect(),
    );
    check_model_gradients(name, &list, |tape, l| {
        let vars: Vec<Var> = l.0.iter().map(|p| tape.param(p)).collect();
        f(tape, &vars)
    })
}

/// Checks the gradient of `f` with respect to every parameter of `model`.
pub fn check_model_gradients<M, F>(name: &str, model: &M, f: F) -> Result<GradCheck>
where
    M: Parameterized + Clone,
    F: Fn(&mut Tape, &M) -> Result<Var>,
{
    let mut work = model.clone();
    let analytic = {
        let mut tape = Tape::new();
        let out = f(&mut tape, &work)?;
        let loss = project(&mut tape, out)?;
        let grads = tape.backward(loss)?;
        work.params()
            .iter()
            .map(|p| {
                tape.param_var(&p.name)
                    .and_then(|v| grads.get(v))
                    .map(|g| g.data().to_vec())
                    .unwrap_or_else(|| vec![0.0; p.value.numel()])
            })
            .collect::<Vec<_>>()
    };

    let mut report = GradCheck {
        name: name.to_string(),
        max_rel_error: 0.0,
        checked: 0,
        worst: None,
    };
    let count = work.params().len();
    for pi in 0..count {
        let n = work.params()[pi].value.numel();
        for j in 0..n {
            let orig = work.params()[pi].value.data()[j];
            work.params_mut()[pi].value.data_mut()[j] = orig + FD_STEP;
            let plus = {
                let mut tape = Tape::new();
                let out = f(&mut tape, &work)?;
                scalar_value(&mut tape, out)?
            };
            work.params_mut()[pi].value.data_mut()[j] = orig - FD_STEP;
            let minus = {
                let mut tape = Tape::new();
                let out = f(&mut tape, &work)?;
                scalar_value(&mut tape, out)?
            };
            work.params_mut()[pi].value.data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            let a = analytic[pi][j];
            let err = rel_error(a, numeric);
            report.checked += 1;
            if report.worst.is_none() || err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = Some((work.params()[pi].name.clone(), j, a, numeric));
            }
        }
    }
    Ok(report)
}

#[derive(Clone)]
struct ParamList(Vec<Param>);

impl Parameterized for ParamList {
    fn params(&self) -> Vec<&Param> {
        self.0.iter().collect()
    }
    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.0.iter_mut().collect()
    }
}
