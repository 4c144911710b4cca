//! Central finite-difference gradient checking.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::svd::svd;
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Floor for the relative-error denominator.
pub const REL_ERROR_FLOOR: f64 = 1e-8;

/// Compares tape gradients of scalar `f` at `x` with central differences.
///
/// Returns the largest `|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`
/// over all coordinates.
pub fn grad_check<F>(f: F, x: &Tensor, eps: f64) -> Result<f64>
where
    F: for<'t> Fn(&'t Tape, Var<'t>) -> Result<Var<'t>>,
{
    grad_check_many(|tape, xs| f(tape, xs[0]), std::slice::from_ref(x), eps)
}

/// [`grad_check`] over several inputs at once.
pub fn grad_check_many<F>(f: F, inputs: &[Tensor], eps: f64) -> Result<f64>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    if !(1e-7..=1e-4).contains(&eps) {
        return Err(Error::Contract(format!(
            "finite-difference step {eps} outside [1e-7, 1e-4]"
        )));
    }
    let analytic = {
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
        let out = f(&tape, &vars)?;
        if out.value().len() != 1 {
            return Err(Error::Contract(format!(
                "grad_check needs a scalar-valued function, got shape {:?}",
                out.shape()
            )));
        }
        let grads = out.backward()?;
        vars.iter().map(|v| grads.wrt(*v)).collect::<Vec<_>>()
    };

    let eval = |xs: &[Tensor]| -> Result<f64> {
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = xs.iter().map(|t| tape.constant(t.clone())).collect();
        Ok(f(&tape, &vars)?.item())
    };

    let mut worst: f64 = 0.0;
    let mut probe: Vec<Tensor> = inputs.to_vec();
    for (which, grad) in analytic.iter().enumerate() {
        for i in 0..grad.len() {
            let orig = probe[which].data()[i];
            probe[which].data_mut()[i] = orig + eps;
            let plus = eval(&probe)?;
            probe[which].data_mut()[i] = orig - eps;
            let minus = eval(&probe)?;
            probe[which].data_mut()[i] = orig;

            let numeric = (plus - minus) / (2.0 * eps);
            let a = grad.data()[i];
            let denom = a.abs().max(numeric.abs()).max(REL_ERROR_FLOOR);
            worst = worst.max((a - numeric).abs() / denom);
        }
    }
    Ok(worst)
}

/// One row of a gradient-check report.
#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub max_rel_error: f64,
}

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.random_range(lo..hi)).collect();
    Tensor::matrix(rows, cols, data).expect("consistent shape")
}

/// Entries drawn from `±[lo, hi)` so elementwise kinks at zero are avoided.
fn away_from_zero(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Tensor {
    let data = (0..rows * cols)
        .map(|_| {
            let mag = rng.random_range(lo..hi);
            if rng.random::<bool>() {
                mag
            } else {
                -mag
            }
        })
        .collect();
    Tensor::matrix(rows, cols, data).expect("consistent shape")
}

/// Random 5×3 matrix whose singular values are pairwise at least `1e-3` apart.
fn well_separated(rng: &mut ChaCha8Rng) -> Tensor {
    loop {
        let m = uniform(rng, 5, 3, -1.0, 1.0);
        let s = svd(&m).expect("small dense svd").s;
        if s.windows(2).all(|w| w[0] - w[1] > 1e-3) && s[2] > 1e-3 {
            return m;
        }
    }
}

/// Gradient checks for every differentiable primitive on random inputs.
///
/// Each primitive with a matrix output is reduced to a scalar through a
/// fixed random projection `sum(R ⊙ op(x))`.
pub fn primitive_suite(seed: u64, eps: f64) -> Result<Vec<CheckResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();

    macro_rules! check {
        ($name:expr, $inputs:expr, $f:expr) => {{
            let inputs: Vec<Tensor> = $inputs;
            let err = grad_check_many($f, &inputs, eps)?;
            out.push(CheckResult {
                name: $name,
                max_rel_error: err,
            });
        }};
    }

    fn project<'t>(tape: &'t Tape, y: Var<'t>, r: &Tensor) -> Result<Var<'t>> {
        Ok(y.mul(tape.constant(r.clone()))?.sum())
    }

    let r34 = uniform(&mut rng, 3, 4, -1.0, 1.0);
    let r32 = uniform(&mut rng, 3, 2, -1.0, 1.0);
    let r45 = uniform(&mut rng, 4, 5, -1.0, 1.0);
    let r43 = uniform(&mut rng, 4, 3, -1.0, 1.0);
    let r15 = uniform(&mut rng, 1, 5, -1.0, 1.0);

    let a34 = uniform(&mut rng, 3, 4, -1.0, 1.0);
    let b34 = uniform(&mut rng, 3, 4, -1.0, 1.0);
    let b42 = uniform(&mut rng, 4, 2, -1.0, 1.0);
    let row = uniform(&mut rng, 1, 4, -1.0, 1.0);

    check!("matmul", vec![a34.clone(), b42], |t, x| project(t, x[0].matmul(x[1])?, &r32));
    check!("add", vec![a34.clone(), b34.clone()], |t, x| project(t, x[0].add(x[1])?, &r34));
    check!("sub", vec![a34.clone(), b34.clone()], |t, x| project(t, x[0].sub(x[1])?, &r34));
    check!("mul", vec![a34.clone(), b34.clone()], |t, x| project(t, x[0].mul(x[1])?, &r34));
    check!("add_row", vec![a34.clone(), row], |t, x| project(t, x[0].add_row(x[1])?, &r34));
    check!("scale", vec![a34.clone()], |t, x| project(t, x[0].scale(-1.7), &r34));
    check!(
        "relu",
        vec![away_from_zero(&mut rng, 3, 4, 0.1, 1.0)],
        |t, x| project(t, x[0].relu(), &r34)
    );
    check!(
        "log",
        vec![uniform(&mut rng, 3, 4, 0.5, 2.0)],
        |t, x| project(t, x[0].log(), &r34)
    );
    check!(
        "softmax_rows",
        vec![uniform(&mut rng, 4, 5, -2.0, 2.0)],
        |t, x| project(t, x[0].softmax_rows()?, &r45)
    );
    check!("sum", vec![a34.clone()], |_t, x| Ok(x[0].mul(x[0])?.sum()));
    check!("mean", vec![a34.clone()], |_t, x| Ok(x[0].mul(x[0])?.mean()));
    check!(
        "mean_rows",
        vec![uniform(&mut rng, 4, 5, -1.0, 1.0)],
        |t, x| project(t, x[0].mean_rows()?, &r15)
    );
    check!("transpose", vec![a34.clone()], |t, x| project(t, x[0].transpose()?, &r43));
    check!("concat_rows", vec![a34.clone(), uniform(&mut rng, 2, 4, -1.0, 1.0)], |t, x| {
        let c = t.concat_rows(&[x[0], x[1]])?;
        project(t, c, &uniform(&mut ChaCha8Rng::seed_from_u64(7), 5, 4, -1.0, 1.0))
    });
    check!("gather_rows", vec![a34], |t, x| {
        let g = x[0].gather_rows(&[2, 0, 2])?;
        project(t, g, &uniform(&mut ChaCha8Rng::seed_from_u64(11), 3, 4, -1.0, 1.0))
    });
    check!("nuclear_norm", vec![well_separated(&mut rng)], |_t, x| x[0].nuclear_norm());

    Ok(out)
}
