//! Central finite-difference verification of every analytic gradient in a
//! cell, parameter group by parameter group.
//!
//! The probe task is a short random sequence scored with per-step
//! cross-entropy, so every parameter (including the output head at every
//! timestep) influences the loss. The oracle perturbs each scalar parameter
//! in both directions through the *full* forward pass; for the recurrent
//! parameter that includes rebuilding the orthogonal matrix from the
//! perturbed packed entries.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::harness::{lstm_batch_grads, lstm_batch_loss, sco_batch_grads, sco_batch_loss};
use crate::harness::{config::ModelKind, derive_stream_seed};
use crate::linalg::Matrix;
use crate::network::lstm::LstmCell;
use crate::network::ScoCell;
use crate::tasks::{LossKind, TaskBatch, Targets};

/// Fault injection for the oracle's sensitivity self-test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    None,
    /// Flips the sign of the analytic recurrent-parameter gradient. The
    /// report must light up, or the oracle is not actually checking.
    FlipSkewSign,
}

/// Per-group maximum relative errors of analytic vs. numeric gradients.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub model: ModelKind,
    pub n: usize,
    pub t: usize,
    pub seed: u64,
    pub step: f64,
    pub groups: Vec<(String, f64)>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.groups.iter().map(|(_, e)| *e).fold(0.0, f64::max)
    }

    pub fn group(&self, name: &str) -> Option<f64> {
        self.groups
            .iter()
            .find(|(g, _)| g == name)
            .map(|(_, e)| *e)
    }

    pub fn render(&self) -> String {
        let mut out = format!(
            "gradient check: model={} n={} t={} seed={} step={:e}\n",
            self.model.name(),
            self.n,
            self.t,
            self.seed,
            self.step
        );
        for (name, err) in &self.groups {
            out.push_str(&format!("  {name:<18} max rel error {err:.3e}\n"));
        }
        out
    }
}

fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

const PROBE_INPUT: usize = 3;
const PROBE_CLASSES: usize = 4;
const PROBE_BATCH: usize = 2;

fn probe_batch(t: usize, rng: &mut ChaCha8Rng) -> TaskBatch {
    let inputs = (0..t)
        .map(|_| Matrix::from_fn(PROBE_BATCH, PROBE_INPUT, |_, _| rng.gen_range(-1.0..1.0)))
        .collect();
    let targets = (0..t)
        .map(|_| {
            (0..PROBE_BATCH)
                .map(|_| rng.gen_range(0..PROBE_CLASSES))
                .collect()
        })
        .collect();
    TaskBatch {
        inputs,
        targets: Targets::PerStepClasses(targets),
        loss: LossKind::SequenceCrossEntropy,
    }
}

pub fn gradcheck(model: ModelKind, n: usize, t: usize, seed: u64, step: f64) -> Result<GradCheckReport> {
    gradcheck_with_fault(model, n, t, seed, step, Fault::None)
}

pub fn gradcheck_with_fault(
    model: ModelKind,
    n: usize,
    t: usize,
    seed: u64,
    step: f64,
    fault: Fault,
) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_stream_seed(seed, 0x6D));
    let batch = probe_batch(t, &mut rng);
    let groups = match model {
        ModelKind::Scornn => sco_gradcheck(n, &batch, &mut rng, step, fault)?,
        ModelKind::Lstm => lstm_gradcheck(n, &batch, &mut rng, step, fault)?,
    };
    Ok(GradCheckReport {
        model,
        n,
        t,
        seed,
        step,
        groups,
    })
}

fn sco_gradcheck(
    n: usize,
    batch: &TaskBatch,
    rng: &mut ChaCha8Rng,
    step: f64,
    fault: Fault,
) -> Result<Vec<(String, f64)>> {
    let cell = ScoCell::init(n, PROBE_INPUT, PROBE_CLASSES, n / 2, rng)?;
    let (_, grads) = sco_batch_grads(&cell, batch, false)?;
    let skew_sign = if fault == Fault::FlipSkewSign { -1.0 } else { 1.0 };

    let mut report = Vec::new();

    let mut worst = 0.0f64;
    for k in 0..cell.skew().packed().len() {
        let numeric = {
            let perturbed = |delta: f64| -> Result<f64> {
                let mut c = cell.clone();
                let mut s = c.skew().clone();
                s.packed_mut()[k] += delta;
                c.set_skew(s)?;
                sco_batch_loss(&c, batch)
            };
            (perturbed(step)? - perturbed(-step)?) / (2.0 * step)
        };
        worst = worst.max(rel_error(skew_sign * grads.d_skew.packed()[k], numeric));
    }
    report.push(("skew".to_string(), worst));

    let mut worst = 0.0f64;
    for idx in 0..n * PROBE_INPUT {
        let numeric = {
            let perturbed = |delta: f64| -> Result<f64> {
                let mut c = cell.clone();
                c.input_weights_mut().as_mut_slice()[idx] += delta;
                sco_batch_loss(&c, batch)
            };
            (perturbed(step)? - perturbed(-step)?) / (2.0 * step)
        };
        worst = worst.max(rel_error(grads.d_input_weights.as_slice()[idx], numeric));
    }
    report.push(("input_weights".to_string(), worst));

    let mut worst = 0.0f64;
    for idx in 0..n {
        let numeric = {
            let perturbed = |delta: f64| -> Result<f64> {
                let mut c = cell.clone();
                c.modrelu_bias_mut()[idx] += delta;
                sco_batch_loss(&c, batch)
            };
            (perturbed(step)? - perturbed(-step)?) / (2.0 * step)
        };
        worst = worst.max(rel_error(grads.d_modrelu_bias[idx], numeric));
    }
    report.push(("modrelu_bias".to_string(), worst));

    let mut worst = 0.0f64;
    for idx in 0..PROBE_CLASSES * n {
        let numeric = {
            let perturbed = |delta: f64| -> Result<f64> {
                let mut c = cell.clone();
                c.output_weights_mut().as_mut_slice()[idx] += delta;
                sco_batch_loss(&c, batch)
            };
            (perturbed(step)? - perturbed(-step)?) / (2.0 * step)
        };
        worst = worst.max(rel_error(grads.d_output_weights.as_slice()[idx], numeric));
    }
    report.push(("output_weights".to_string(), worst));

    let mut worst = 0.0f64;
    for idx in 0..PROBE_CLASSES {
        let numeric = {
            let perturbed = |delta: f64| -> Result<f64> {
                let mut c = cell.clone();
                c.output_bias_mut()[idx] += delta;
                sco_batch_loss(&c, batch)
            };
            (perturbed(step)? - perturbed(-step)?) / (2.0 * step)
        };
        worst = worst.max(rel_error(grads.d_output_bias[idx], numeric));
    }
    report.push(("output_bias".to_string(), worst));

    Ok(report)
}

fn lstm_gradcheck(
    n: usize,
    batch: &TaskBatch,
    rng: &mut ChaCha8Rng,
    step: f64,
    fault: Fault,
) -> Result<Vec<(String, f64)>> {
    let cell = LstmCell::init(n, PROBE_INPUT, PROBE_CLASSES, 1.0, rng)?;
    let (_, grads) = lstm_batch_grads(&cell, batch, false)?;
    let recurrent_sign = if fault == Fault::FlipSkewSign { -1.0 } else { 1.0 };

    let mut report = Vec::new();

    let mut worst = 0.0f64;
    for idx in 0..4 * n * PROBE_INPUT {
        let numeric = {
            let perturbed = |delta: f64| -> Result<f64> {
                let mut c = cell.clone();
                c.input_weights_mut().as_mut_slice()[idx] += delta;
                lstm_batch_loss(&c, batch)
            };
            (perturbed(step)? - perturbed(-step)?) / (2.0 * step)
        };
        worst = worst.max(rel_error(grads.d_input_weights.as_slice()[idx], numeric));
    }
    report.push(("input_weights".to_string(), worst));

    let mut worst = 0.0f64;
    for idx in 0..4 * n * n {
        let numeric = {
            let perturbed = |delta: f64| -> Result<f64> {
                let mut c = cell.clone();
                c.recurrent_weights_mut().as_mut_slice()[idx] += delta;
                lstm_batch_loss(&c, batch)
            };
            (perturbed(step)? - perturbed(-step)?) / (2.0 * step)
        };
        worst = worst.max(rel_error(
            recurrent_sign * grads.d_recurrent_weights.as_slice()[idx],
            numeric,
        ));
    }
    report.push(("recurrent_weights".to_string(), worst));

    let mut worst = 0.0f64;
    for idx in 0..4 * n {
        let numeric = {
            let perturbed = |delta: f64| -> Result<f64> {
                let mut c = cell.clone();
                c.gate_bias_mut()[idx] += delta;
                lstm_batch_loss(&c, batch)
            };
            (perturbed(step)? - perturbed(-step)?) / (2.0 * step)
        };
        worst = worst.max(rel_error(grads.d_gate_bias[idx], numeric));
    }
    report.push(("gate_bias".to_string(), worst));

    let mut worst = 0.0f64;
    for idx in 0..PROBE_CLASSES * n {
        let numeric = {
            let perturbed = |delta: f64| -> Result<f64> {
                let mut c = cell.clone();
                c.output_weights_mut().as_mut_slice()[idx] += delta;
                lstm_batch_loss(&c, batch)
            };
            (perturbed(step)? - perturbed(-step)?) / (2.0 * step)
        };
        worst = worst.max(rel_error(grads.d_output_weights.as_slice()[idx], numeric));
    }
    report.push(("output_weights".to_string(), worst));

    let mut worst = 0.0f64;
    for idx in 0..PROBE_CLASSES {
        let numeric = {
            let perturbed = |delta: f64| -> Result<f64> {
                let mut c = cell.clone();
                c.output_bias_mut()[idx] += delta;
                lstm_batch_loss(&c, batch)
            };
            (perturbed(step)? - perturbed(-step)?) / (2.0 * step)
        };
        worst = worst.max(rel_error(grads.d_output_bias[idx], numeric));
    }
    report.push(("output_bias".to_string(), worst));

    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sco_gradcheck_passes_at_small_scale() {
        let report = gradcheck(ModelKind::Scornn, 6, 3, 42, 1e-6).unwrap();
        assert!(
            report.max_rel_error() < 1e-5,
            "{}",
            report.render()
        );
    }

    #[test]
    fn lstm_gradcheck_passes_at_small_scale() {
        let report = gradcheck(ModelKind::Lstm, 5, 2, 42, 1e-6).unwrap();
        assert!(report.max_rel_error() < 1e-5, "{}", report.render());
    }

    #[test]
    fn corrupted_gradient_is_detected() {
        let report =
            gradcheck_with_fault(ModelKind::Scornn, 6, 3, 42, 1e-6, Fault::FlipSkewSign).unwrap();
        assert!(report.group("skew").unwrap() > 1e-1, "{}", report.render());
        // the untouched groups still pass
        assert!(report.group("output_bias").unwrap() < 1e-5);
    }
}
