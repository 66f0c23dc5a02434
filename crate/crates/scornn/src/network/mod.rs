//! Recurrent cells with full backpropagation through time.
//!
//! The main cell keeps its recurrent matrix orthogonal through the scaled
//! Cayley parametrization; a standard LSTM lives in [`lstm`] as the
//! comparison baseline. Both backward passes can record the per-timestep
//! hidden-state gradient norms `||dL/dh_t||`, the instrumented quantity for
//! the vanishing-gradient experiments.

pub mod lstm;

pub use lstm::{LstmCell, LstmGrads, LstmTape};

use rand::Rng;

use crate::activations::{modrelu_backward_batch, modrelu_batch};
use crate::cayley::{self, ScalingMatrix, SkewParams};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::optim::{self, ParamGroup};

/// Whether the output head is applied at every timestep or only at the last.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputMode {
    PerStep,
    LastStep,
}

/// Uniform Glorot initialization for a `rows x cols` weight matrix.
pub(crate) fn glorot_uniform(rng: &mut impl Rng, rows: usize, cols: usize) -> Matrix {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-limit..limit))
}

/// Full parameter set of one cell: input map `U`, recurrent parameter
/// `(A, D)` with the cached orthogonal `W`, the modReLU bias, and the output
/// head `(V, c)`.
///
/// The cached matrix is refreshed from the parameter on every update, so
/// `W = scaled_cayley(A, D)` holds bitwise at all times.
#[derive(Debug, Clone)]
pub struct ScoCell {
    input_weights: Matrix,   // n x m
    skew: SkewParams,        // packed A
    scaling: ScalingMatrix,  // D
    recurrent: Matrix,       // cached W, n x n
    modrelu_bias: Vec<f64>,  // n
    output_weights: Matrix,  // p x n
    output_bias: Vec<f64>,   // p
}

/// Gradients for every parameter group of a [`ScoCell`], plus the optional
/// per-timestep hidden gradient norms.
#[derive(Debug, Clone)]
pub struct ParamGrads {
    pub d_input_weights: Matrix,
    pub d_skew: SkewParams,
    pub d_modrelu_bias: Vec<f64>,
    pub d_output_weights: Matrix,
    pub d_output_bias: Vec<f64>,
    /// `||dL/dh_t||_F` for t = 1..=T when capture was requested.
    pub hidden_grad_norms: Option<Vec<f64>>,
}

/// Everything the backward pass needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTape {
    inputs: Vec<Matrix>,   // T of batch x m
    preacts: Vec<Matrix>,  // T of batch x n
    hidden: Vec<Matrix>,   // T+1 of batch x n, including h_0
    mode: OutputMode,
}

impl ForwardTape {
    pub fn seq_len(&self) -> usize {
        self.inputs.len()
    }

    pub fn hidden_state(&self, t: usize) -> &Matrix {
        &self.hidden[t]
    }
}

impl ScoCell {
    /// Fresh cell: Glorot-uniform input/output maps, zero biases, and the
    /// block-diagonal rotation initializer for the recurrent parameter.
    pub fn init(
        hidden: usize,
        input: usize,
        output: usize,
        rho: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let input_weights = glorot_uniform(rng, hidden, input);
        let output_weights = glorot_uniform(rng, output, hidden);
        let (skew, scaling) = cayley::init_block_diag(hidden, rho, rng)?;
        let recurrent = cayley::scaled_cayley(&skew, &scaling)?;
        Ok(ScoCell {
            input_weights,
            skew,
            scaling,
            recurrent,
            modrelu_bias: vec![0.0; hidden],
            output_weights,
            output_bias: vec![0.0; output],
        })
    }

    pub fn from_parts(
        input_weights: Matrix,
        skew: SkewParams,
        scaling: ScalingMatrix,
        modrelu_bias: Vec<f64>,
        output_weights: Matrix,
        output_bias: Vec<f64>,
    ) -> Result<Self> {
        let n = skew.dim();
        if input_weights.rows() != n
            || scaling.dim() != n
            || modrelu_bias.len() != n
            || output_weights.cols() != n
            || output_bias.len() != output_weights.rows()
        {
            return Err(Error::shape(
                "sco_cell_from_parts",
                "parameter shapes disagree".to_string(),
            ));
        }
        let recurrent = cayley::scaled_cayley(&skew, &scaling)?;
        Ok(ScoCell {
            input_weights,
            skew,
            scaling,
            recurrent,
            modrelu_bias,
            output_weights,
            output_bias,
        })
    }

    pub fn hidden_size(&self) -> usize {
        self.skew.dim()
    }

    pub fn input_size(&self) -> usize {
        self.input_weights.cols()
    }

    pub fn output_size(&self) -> usize {
        self.output_weights.rows()
    }

    pub fn num_params(&self) -> usize {
        self.input_weights.rows() * self.input_weights.cols()
            + self.skew.packed().len()
            + self.modrelu_bias.len()
            + self.output_weights.rows() * self.output_weights.cols()
            + self.output_bias.len()
    }

    pub fn input_weights(&self) -> &Matrix {
        &self.input_weights
    }

    pub fn input_weights_mut(&mut self) -> &mut Matrix {
        &mut self.input_weights
    }

    pub fn skew(&self) -> &SkewParams {
        &self.skew
    }

    pub fn scaling(&self) -> &ScalingMatrix {
        &self.scaling
    }

    pub fn recurrent(&self) -> &Matrix {
        &self.recurrent
    }

    pub fn modrelu_bias(&self) -> &[f64] {
        &self.modrelu_bias
    }

    pub fn modrelu_bias_mut(&mut self) -> &mut [f64] {
        &mut self.modrelu_bias
    }

    pub fn output_weights(&self) -> &Matrix {
        &self.output_weights
    }

    pub fn output_weights_mut(&mut self) -> &mut Matrix {
        &mut self.output_weights
    }

    pub fn output_bias(&self) -> &[f64] {
        &self.output_bias
    }

    pub fn output_bias_mut(&mut self) -> &mut [f64] {
        &mut self.output_bias
    }

    /// Mutates the packed recurrent parameter and recomputes the cached
    /// matrix. Used by the finite-difference checks; optimizer steps go
    /// through [`apply_gradients`](Self::apply_gradients).
    pub fn set_skew(&mut self, skew: SkewParams) -> Result<()> {
        if skew.dim() != self.scaling.dim() {
            return Err(Error::shape(
                "set_skew",
                format!("dim {} vs {}", skew.dim(), self.scaling.dim()),
            ));
        }
        self.recurrent = cayley::scaled_cayley(&skew, &self.scaling)?;
        self.skew = skew;
        Ok(())
    }

    /// Steps every parameter group with its optimizer and refreshes `W`.
    pub fn apply_gradients(
        &mut self,
        opt: &mut ScoOptimizers,
        grads: &ParamGrads,
    ) -> Result<()> {
        opt.input
            .step(self.input_weights.as_mut_slice(), grads.d_input_weights.as_slice())?;
        opt.modrelu_bias
            .step(&mut self.modrelu_bias, &grads.d_modrelu_bias)?;
        opt.output
            .step(self.output_weights.as_mut_slice(), grads.d_output_weights.as_slice())?;
        opt.output_bias
            .step(&mut self.output_bias, &grads.d_output_bias)?;
        self.recurrent =
            optim::step_skew(&mut opt.skew, &mut self.skew, &self.scaling, &grads.d_skew)?;
        Ok(())
    }
}

/// The five optimizer groups of a [`ScoCell`]. Input/output parameters and
/// the recurrent parameter typically run at different learning rates.
#[derive(Debug, Clone)]
pub struct ScoOptimizers {
    pub input: ParamGroup,
    pub skew: ParamGroup,
    pub modrelu_bias: ParamGroup,
    pub output: ParamGroup,
    pub output_bias: ParamGroup,
}

impl ScoOptimizers {
    pub fn groups(&self) -> [&ParamGroup; 5] {
        [
            &self.input,
            &self.skew,
            &self.modrelu_bias,
            &self.output,
            &self.output_bias,
        ]
    }
}

/// Runs the recurrence `h_t = modrelu(U x_t + W h_{t-1}, b)` from `h_0 = 0`
/// and applies the output head per [`OutputMode`].
pub fn sco_forward(
    cell: &ScoCell,
    inputs: &[Matrix],
    mode: OutputMode,
) -> Result<(Vec<Matrix>, ForwardTape)> {
    let batch = inputs
        .first()
        .map(Matrix::rows)
        .ok_or_else(|| Error::InvalidArgument("empty input sequence".into()))?;
    sco_forward_from(cell, &Matrix::zeros(batch, cell.hidden_size()), inputs, mode)
}

/// Same as [`sco_forward`] but from an explicit initial hidden state.
pub fn sco_forward_from(
    cell: &ScoCell,
    h0: &Matrix,
    inputs: &[Matrix],
    mode: OutputMode,
) -> Result<(Vec<Matrix>, ForwardTape)> {
    let (n, m) = (cell.hidden_size(), cell.input_size());
    let batch = h0.rows();
    if h0.cols() != n {
        return Err(Error::shape(
            "sco_forward",
            format!("initial state {}x{}, hidden size {n}", h0.rows(), h0.cols()),
        ));
    }
    let seq_len = inputs.len();
    let mut preacts = Vec::with_capacity(seq_len);
    let mut hidden = Vec::with_capacity(seq_len + 1);
    hidden.push(h0.clone());

    let u_t = cell.input_weights.transpose();
    let w_t = cell.recurrent.transpose();
    for x in inputs {
        if x.rows() != batch || x.cols() != m {
            return Err(Error::shape(
                "sco_forward",
                format!("input step {}x{}, expected {batch}x{m}", x.rows(), x.cols()),
            ));
        }
        let mut z = x.matmul(&u_t)?;
        z.add_assign(&hidden.last().unwrap().matmul(&w_t)?)?;
        let h = modrelu_batch(&z, &cell.modrelu_bias);
        preacts.push(z);
        hidden.push(h);
    }

    let head = |h: &Matrix| -> Result<Matrix> {
        let mut y = h.matmul_nt(&cell.output_weights)?;
        for r in 0..y.rows() {
            for (v, &c) in y.row_mut(r).iter_mut().zip(&cell.output_bias) {
                *v += c;
            }
        }
        Ok(y)
    };
    let outputs = match mode {
        OutputMode::PerStep => hidden[1..].iter().map(head).collect::<Result<Vec<_>>>()?,
        OutputMode::LastStep => vec![head(hidden.last().unwrap())?],
    };

    Ok((
        outputs,
        ForwardTape {
            inputs: inputs.to_vec(),
            preacts,
            hidden,
            mode,
        },
    ))
}

/// Backpropagation through time. `loss_grads` holds `dL/dy_t` for every
/// emitted output (length T in per-step mode, length 1 in last-step mode).
/// The accumulated `dL/dW` is converted to the packed skew gradient through
/// the transform gradient at the cell's current parameter.
pub fn sco_backward(
    cell: &ScoCell,
    tape: &ForwardTape,
    loss_grads: &[Matrix],
    capture_hidden_norms: bool,
) -> Result<ParamGrads> {
    let seq_len = tape.seq_len();
    let expected = match tape.mode {
        OutputMode::PerStep => seq_len,
        OutputMode::LastStep => 1,
    };
    if loss_grads.len() != expected {
        return Err(Error::shape(
            "sco_backward",
            format!("{} output gradients, expected {expected}", loss_grads.len()),
        ));
    }
    let (n, m, p) = (cell.hidden_size(), cell.input_size(), cell.output_size());
    let batch = tape.hidden[0].rows();

    let mut d_input_weights = Matrix::zeros(n, m);
    let mut d_recurrent = Matrix::zeros(n, n);
    let mut d_modrelu_bias = vec![0.0; n];
    let mut d_output_weights = Matrix::zeros(p, n);
    let mut d_output_bias = vec![0.0; p];
    let mut norms = capture_hidden_norms.then(|| vec![0.0; seq_len]);

    let mut d_hidden = Matrix::zeros(batch, n);
    for t in (1..=seq_len).rev() {
        let emits_output = tape.mode == OutputMode::PerStep || t == seq_len;
        if emits_output {
            let dy = match tape.mode {
                OutputMode::PerStep => &loss_grads[t - 1],
                OutputMode::LastStep => &loss_grads[0],
            };
            if dy.rows() != batch || dy.cols() != p {
                return Err(Error::shape(
                    "sco_backward",
                    format!("output gradient {}x{}, expected {batch}x{p}", dy.rows(), dy.cols()),
                ));
            }
            d_hidden.add_assign(&dy.matmul(&cell.output_weights)?)?;
            d_output_weights.add_assign(&dy.matmul_tn(&tape.hidden[t])?)?;
            for r in 0..batch {
                for (acc, &g) in d_output_bias.iter_mut().zip(dy.row(r)) {
                    *acc += g;
                }
            }
        }
        if let Some(norms) = norms.as_mut() {
            norms[t - 1] = d_hidden.fro_norm();
        }
        let dz = modrelu_backward_batch(
            &tape.preacts[t - 1],
            &cell.modrelu_bias,
            &d_hidden,
            &mut d_modrelu_bias,
        );
        d_input_weights.add_assign(&dz.matmul_tn(&tape.inputs[t - 1])?)?;
        d_recurrent.add_assign(&dz.matmul_tn(&tape.hidden[t - 1])?)?;
        d_hidden = dz.matmul(&cell.recurrent)?;
    }

    let d_skew = cayley::grad_skew(&d_recurrent, &cell.skew, &cell.recurrent, &cell.scaling)?;
    Ok(ParamGrads {
        d_input_weights,
        d_skew,
        d_modrelu_bias,
        d_output_weights,
        d_output_bias,
        hidden_grad_norms: norms,
    })
}
