use super::net::{Batch, Modulation, Model};
use crate::error::Result;
use crate::nn::{GradCheckReport, Tape};
use crate::rng::rng_from;
use rand::seq::index::sample;

/// Denominator floor. Biases feeding a train-mode batch norm have an exact
/// zero gradient, and central differences of an O(1) loss carry ~1e-10 of
/// round-off, so a tighter floor only measures noise.
pub const MODEL_REL_FLOOR: f64 = 1e-7;

/// Finite-difference check of the cross-entropy gradient with respect to a
/// seeded sample of `max_coords` parameter scalars (all of them if fewer).
pub fn grad_check_model(model: &mut Model<f64>, batch: &Batch<f64>, eps: f64, max_coords: usize, seed: u64) -> Result<GradCheckReport> {
    let loss_of = |model: &mut Model<f64>| -> Result<f64> {
        let mut tape = Tape::new(true);
        tape.strict = true;
        let fwd = model.forward(&mut tape, batch, Modulation::Predicted)?;
        let loss = tape.cross_entropy(fwd.logits, &batch.labels)?;
        tape.check_finite()?;
        Ok(tape.value(loss).data[0])
    };
    let mut tape = Tape::new(true);
    let fwd = model.forward(&mut tape, batch, Modulation::Predicted)?;
    let loss = tape.cross_entropy(fwd.logits, &batch.labels)?;
    let mut grads = tape.backward(loss);
    let analytic = fwd.bound.grads(&mut grads, &model.store);

    let coords: Vec<(usize, usize)> = model
        .store
        .params
        .iter()
        .enumerate()
        .flat_map(|(i, p)| (0..p.value.len()).map(move |j| (i, j)))
        .collect();
    let chosen: Vec<(usize, usize)> = if coords.len() <= max_coords {
        coords
    } else {
        let mut idx = sample(&mut rng_from(seed, &[]), coords.len(), max_coords).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|k| coords[k]).collect()
    };
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst: (0, 0),
        checked: chosen.len(),
    };
    for &(i, j) in &chosen {
        let x0 = model.store.params[i].value.data[j];
        model.store.params[i].value.data[j] = x0 + eps;
        let fp = loss_of(model)?;
        model.store.params[i].value.data[j] = x0 - eps;
        let fm = loss_of(model)?;
        model.store.params[i].value.data[j] = x0;
        let numeric = (fp - fm) / (2.0 * eps);
        let a = analytic[i].as_ref().map_or(0.0, |g| g.data[j]);
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(MODEL_REL_FLOOR);
        if rel > report.max_rel_err {
            report.max_rel_err = rel;
            report.worst = (i, j);
        }
    }
    Ok(report)
}
