//! SGD, RMSprop, and Adam over named parameter groups.
//!
//! Each group carries its own learning rate and optimizer kind, matching the
//! training setup where input/output weights and the recurrent parameter use
//! different rates. The recurrent group steps in packed skew space, which is
//! closed under addition, so every optimizer keeps the materialized matrix
//! exactly skew-symmetric by construction.

use crate::cayley::{self, ScalingMatrix, SkewParams};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Sgd,
    RmsProp,
    Adam,
}

impl OptimizerKind {
    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::RmsProp => "rmsprop",
            OptimizerKind::Adam => "adam",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(OptimizerKind::Sgd),
            "rmsprop" => Ok(OptimizerKind::RmsProp),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(Error::Config(format!("unknown optimizer '{other}'"))),
        }
    }
}

/// Optimizer hyperparameters. Defaults: RMSprop decay 0.9, Adam
/// beta1/beta2 = 0.9/0.999, epsilon 1e-8.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerHyper {
    pub rms_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for OptimizerHyper {
    fn default() -> Self {
        OptimizerHyper {
            rms_decay: 0.9,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// One named parameter group: learning rate, optimizer kind, and moment
/// accumulators sized to the flat parameter vector it steps.
#[derive(Debug, Clone)]
pub struct ParamGroup<T: Scalar = f64> {
    name: String,
    kind: OptimizerKind,
    lr: T,
    hyper: OptimizerHyper,
    first_moment: Vec<T>,
    second_moment: Vec<T>,
    step_count: u64,
}

impl<T: Scalar> ParamGroup<T> {
    pub fn new(name: impl Into<String>, kind: OptimizerKind, lr: f64) -> Result<Self> {
        Self::with_hyper(name, kind, lr, OptimizerHyper::default())
    }

    pub fn with_hyper(
        name: impl Into<String>,
        kind: OptimizerKind,
        lr: f64,
        hyper: OptimizerHyper,
    ) -> Result<Self> {
        if !(lr > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be positive, got {lr}"
            )));
        }
        Ok(ParamGroup {
            name: name.into(),
            kind,
            lr: T::from_f64(lr),
            hyper,
            first_moment: Vec::new(),
            second_moment: Vec::new(),
            step_count: 0,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn learning_rate(&self) -> f64 {
        self.lr.to_f64()
    }

    pub fn hyper(&self) -> OptimizerHyper {
        self.hyper
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn state(&self) -> (&[T], &[T]) {
        (&self.first_moment, &self.second_moment)
    }

    /// Rebuilds a group from checkpointed state.
    pub fn restore(
        name: String,
        kind: OptimizerKind,
        lr: f64,
        hyper: OptimizerHyper,
        first_moment: Vec<T>,
        second_moment: Vec<T>,
        step_count: u64,
    ) -> Result<Self> {
        let mut g = Self::with_hyper(name, kind, lr, hyper)?;
        g.first_moment = first_moment;
        g.second_moment = second_moment;
        g.step_count = step_count;
        Ok(g)
    }

    fn ensure_state(&mut self, len: usize) -> Result<()> {
        let need_first = matches!(self.kind, OptimizerKind::Adam);
        let need_second = matches!(self.kind, OptimizerKind::RmsProp | OptimizerKind::Adam);
        if need_first && self.first_moment.is_empty() {
            self.first_moment = vec![T::zero(); len];
        }
        if need_second && self.second_moment.is_empty() {
            self.second_moment = vec![T::zero(); len];
        }
        if (need_first && self.first_moment.len() != len)
            || (need_second && self.second_moment.len() != len)
        {
            return Err(Error::shape(
                "optimizer_step",
                format!(
                    "group '{}': state sized for {} parameters, got {len}",
                    self.name,
                    self.second_moment.len().max(self.first_moment.len())
                ),
            ));
        }
        Ok(())
    }

    /// Applies one optimizer step to `params` in place.
    pub fn step(&mut self, params: &mut [T], grads: &[T]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::shape(
                "optimizer_step",
                format!(
                    "group '{}': {} parameters vs {} gradients",
                    self.name,
                    params.len(),
                    grads.len()
                ),
            ));
        }
        if !grads.iter().all(|g| g.is_finite()) {
            return Err(Error::NonFiniteGradient {
                group: self.name.clone(),
                step: self.step_count,
            });
        }
        self.ensure_state(params.len())?;
        self.step_count += 1;
        let lr = self.lr;
        let eps = T::from_f64(self.hyper.epsilon);
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, &g) in params.iter_mut().zip(grads) {
                    *p = *p - lr * g;
                }
            }
            OptimizerKind::RmsProp => {
                let decay = T::from_f64(self.hyper.rms_decay);
                let one_minus = T::one() - decay;
                for ((p, &g), v) in params.iter_mut().zip(grads).zip(&mut self.second_moment) {
                    *v = decay * *v + one_minus * g * g;
                    *p = *p - lr * g / (v.sqrt() + eps);
                }
            }
            OptimizerKind::Adam => {
                let b1 = T::from_f64(self.hyper.beta1);
                let b2 = T::from_f64(self.hyper.beta2);
                let t = self.step_count as i32;
                let corr1 = T::one() - b1.powi(t);
                let corr2 = T::one() - b2.powi(t);
                for (((p, &g), m), v) in params
                    .iter_mut()
                    .zip(grads)
                    .zip(&mut self.first_moment)
                    .zip(&mut self.second_moment)
                {
                    *m = b1 * *m + (T::one() - b1) * g;
                    *v = b2 * *v + (T::one() - b2) * g * g;
                    let m_hat = *m / corr1;
                    let v_hat = *v / corr2;
                    *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
        Ok(())
    }
}

/// Steps the packed skew parameter and reconstructs the orthogonal matrix
/// from the updated value. Returns the refreshed `W`; the caller stores it
/// so the cache stays coherent with the parameter.
pub fn step_skew<T: Scalar>(
    group: &mut ParamGroup<T>,
    skew: &mut SkewParams<T>,
    scaling: &ScalingMatrix,
    grads: &SkewParams<T>,
) -> Result<Matrix<T>> {
    if grads.dim() != skew.dim() {
        return Err(Error::shape(
            "step_skew",
            format!("gradient dim {} vs parameter dim {}", grads.dim(), skew.dim()),
        ));
    }
    group.step(skew.packed_mut(), grads.packed())?;
    cayley::scaled_cayley(skew, scaling)
}
