use rand::seq::index::sample;

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::rng::rng_from;

pub const REL_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// `(input, element)` where the maximum occurred.
    pub worst: (usize, usize),
    pub checked: usize,
}

/// Compares reverse-mode gradients of the scalar built by `f` against
/// central differences. When the inputs hold more than `max_coords`
/// elements a seeded random subset of that size is checked.
pub fn grad_check<F>(inputs: &[Tensor<f64>], eps: f64, max_coords: usize, seed: u64, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let eval = |vals: &[Tensor<f64>]| -> Result<(Tape<f64>, Vec<Var>, Var)> {
        let mut tape = Tape::new(true);
        tape.strict = true;
        let vars: Vec<Var> = vals.iter().map(|t| tape.leaf(t.clone())).collect();
        let out = f(&mut tape, &vars)?;
        tape.check_finite()?;
        if tape.value(out).len() != 1 {
            return Err(Error::Shape {
                op: "grad_check",
                lhs: tape.value(out).shape.clone(),
                rhs: vec![1],
            });
        }
        Ok((tape, vars, out))
    };
    let (tape, vars, out) = eval(inputs)?;
    let grads = tape.backward(out);
    let analytic: Vec<Tensor<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(v, t)| grads.get(*v).cloned().unwrap_or_else(|| Tensor::zeros(&t.shape)))
        .collect();
    if let Some(i) = analytic.iter().position(|g| !g.all_finite()) {
        return Err(Error::NonFinite(format!("gradient of input {i}")));
    }

    let coords: Vec<(usize, usize)> = inputs
        .iter()
        .enumerate()
        .flat_map(|(i, t)| (0..t.len()).map(move |j| (i, j)))
        .collect();
    let chosen: Vec<(usize, usize)> = if coords.len() <= max_coords {
        coords
    } else {
        let mut rng = rng_from(seed, &[]);
        let mut idx = sample(&mut rng, coords.len(), max_coords).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|k| coords[k]).collect()
    };

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst: (0, 0),
        checked: chosen.len(),
    };
    let mut work = inputs.to_vec();
    for &(i, j) in &chosen {
        let x0 = work[i].data[j];
        work[i].data[j] = x0 + eps;
        let (tp, _, o) = eval(&work)?;
        let fp = tp.value(o).data[0];
        work[i].data[j] = x0 - eps;
        let (tm, _, o) = eval(&work)?;
        let fm = tm.value(o).data[0];
        work[i].data[j] = x0;
        let numeric = (fp - fm) / (2.0 * eps);
        let a = analytic[i].data[j];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
        if rel > report.max_rel_err {
            report.max_rel_err = rel;
            report.worst = (i, j);
        }
    }
    Ok(report)
}
