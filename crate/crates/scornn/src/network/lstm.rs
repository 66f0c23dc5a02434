//! Minimal LSTM baseline with the same batch layout, output head, and
//! instrumentation hooks as the orthogonal cell.

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::network::{glorot_uniform, OutputMode};
use crate::optim::ParamGroup;

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Standard 4-gate LSTM. Gate weights are stacked row-blocks in the order
/// input, forget, cell, output, so one matmul per step computes all four
/// pre-activations.
#[derive(Debug, Clone)]
pub struct LstmCell {
    hidden: usize,
    input_weights: Matrix,     // 4n x m
    recurrent_weights: Matrix, // 4n x n
    gate_bias: Vec<f64>,       // 4n
    output_weights: Matrix,    // p x n
    output_bias: Vec<f64>,     // p
    forget_bias_init: f64,
}

#[derive(Debug, Clone)]
pub struct LstmGrads {
    pub d_input_weights: Matrix,
    pub d_recurrent_weights: Matrix,
    pub d_gate_bias: Vec<f64>,
    pub d_output_weights: Matrix,
    pub d_output_bias: Vec<f64>,
    pub hidden_grad_norms: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct LstmTape {
    inputs: Vec<Matrix>,
    gates: Vec<Matrix>,  // T of batch x 4n, post-activation
    cells: Vec<Matrix>,  // T+1 of batch x n, including c_0
    hidden: Vec<Matrix>, // T+1 of batch x n, including h_0
    tanh_c: Vec<Matrix>, // T of batch x n
    mode: OutputMode,
}

impl LstmTape {
    pub fn seq_len(&self) -> usize {
        self.inputs.len()
    }

    pub fn gates(&self, t: usize) -> &Matrix {
        &self.gates[t]
    }
}

impl LstmCell {
    /// Glorot-uniform gate weights, zero biases except the forget-gate
    /// section, which starts at `forget_bias_init` (default 1.0).
    pub fn init(
        hidden: usize,
        input: usize,
        output: usize,
        forget_bias_init: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let mut stack = |cols: usize| -> Matrix {
            let blocks: Vec<Matrix> = (0..4).map(|_| glorot_uniform(rng, hidden, cols)).collect();
            Matrix::from_fn(4 * hidden, cols, |r, c| blocks[r / hidden][(r % hidden, c)])
        };
        let input_weights = stack(input);
        let recurrent_weights = stack(hidden);
        let mut gate_bias = vec![0.0; 4 * hidden];
        gate_bias[hidden..2 * hidden]
            .iter_mut()
            .for_each(|b| *b = forget_bias_init);
        Ok(LstmCell {
            hidden,
            input_weights,
            recurrent_weights,
            gate_bias,
            output_weights: glorot_uniform(rng, output, hidden),
            output_bias: vec![0.0; output],
            forget_bias_init,
        })
    }

    pub fn from_parts(
        input_weights: Matrix,
        recurrent_weights: Matrix,
        gate_bias: Vec<f64>,
        output_weights: Matrix,
        output_bias: Vec<f64>,
        forget_bias_init: f64,
    ) -> Result<Self> {
        let hidden = recurrent_weights.cols();
        if input_weights.rows() != 4 * hidden
            || recurrent_weights.rows() != 4 * hidden
            || gate_bias.len() != 4 * hidden
            || output_weights.cols() != hidden
            || output_bias.len() != output_weights.rows()
        {
            return Err(Error::shape(
                "lstm_from_parts",
                "parameter shapes disagree".to_string(),
            ));
        }
        Ok(LstmCell {
            hidden,
            input_weights,
            recurrent_weights,
            gate_bias,
            output_weights,
            output_bias,
            forget_bias_init,
        })
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden
    }

    pub fn input_size(&self) -> usize {
        self.input_weights.cols()
    }

    pub fn output_size(&self) -> usize {
        self.output_weights.rows()
    }

    pub fn forget_bias_init(&self) -> f64 {
        self.forget_bias_init
    }

    pub fn num_params(&self) -> usize {
        self.input_weights.rows() * self.input_weights.cols()
            + self.recurrent_weights.rows() * self.recurrent_weights.cols()
            + self.gate_bias.len()
            + self.output_weights.rows() * self.output_weights.cols()
            + self.output_bias.len()
    }

    pub fn input_weights(&self) -> &Matrix {
        &self.input_weights
    }

    pub fn input_weights_mut(&mut self) -> &mut Matrix {
        &mut self.input_weights
    }

    pub fn recurrent_weights(&self) -> &Matrix {
        &self.recurrent_weights
    }

    pub fn recurrent_weights_mut(&mut self) -> &mut Matrix {
        &mut self.recurrent_weights
    }

    pub fn gate_bias(&self) -> &[f64] {
        &self.gate_bias
    }

    pub fn gate_bias_mut(&mut self) -> &mut [f64] {
        &mut self.gate_bias
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

    pub fn apply_gradients(&mut self, opt: &mut LstmOptimizers, grads: &LstmGrads) -> Result<()> {
        opt.input
            .step(self.input_weights.as_mut_slice(), grads.d_input_weights.as_slice())?;
        opt.recurrent.step(
            self.recurrent_weights.as_mut_slice(),
            grads.d_recurrent_weights.as_slice(),
        )?;
        opt.gate_bias.step(&mut self.gate_bias, &grads.d_gate_bias)?;
        opt.output
            .step(self.output_weights.as_mut_slice(), grads.d_output_weights.as_slice())?;
        opt.output_bias
            .step(&mut self.output_bias, &grads.d_output_bias)?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct LstmOptimizers {
    pub input: ParamGroup,
    pub recurrent: ParamGroup,
    pub gate_bias: ParamGroup,
    pub output: ParamGroup,
    pub output_bias: ParamGroup,
}

impl LstmOptimizers {
    pub fn groups(&self) -> [&ParamGroup; 5] {
        [
            &self.input,
            &self.recurrent,
            &self.gate_bias,
            &self.output,
            &self.output_bias,
        ]
    }
}

pub fn lstm_forward(
    cell: &LstmCell,
    inputs: &[Matrix],
    mode: OutputMode,
) -> Result<(Vec<Matrix>, LstmTape)> {
    let n = cell.hidden;
    let m = cell.input_size();
    let batch = inputs
        .first()
        .map(Matrix::rows)
        .ok_or_else(|| Error::InvalidArgument("empty input sequence".into()))?;
    let seq_len = inputs.len();

    let wx_t = cell.input_weights.transpose();
    let wh_t = cell.recurrent_weights.transpose();
    let mut gates: Vec<Matrix> = Vec::with_capacity(seq_len);
    let mut cells: Vec<Matrix> = Vec::with_capacity(seq_len + 1);
    let mut hidden: Vec<Matrix> = Vec::with_capacity(seq_len + 1);
    let mut tanh_c: Vec<Matrix> = Vec::with_capacity(seq_len);
    cells.push(Matrix::zeros(batch, n));
    hidden.push(Matrix::zeros(batch, n));

    for x in inputs {
        if x.rows() != batch || x.cols() != m {
            return Err(Error::shape(
                "lstm_forward",
                format!("input step {}x{}, expected {batch}x{m}", x.rows(), x.cols()),
            ));
        }
        let mut pre = x.matmul(&wx_t)?;
        pre.add_assign(&hidden.last().unwrap().matmul(&wh_t)?)?;
        let mut gate: Matrix = Matrix::zeros(batch, 4 * n);
        let c_prev = cells.last().unwrap();
        let mut c: Matrix = Matrix::zeros(batch, n);
        let mut tc: Matrix = Matrix::zeros(batch, n);
        let mut h: Matrix = Matrix::zeros(batch, n);
        for r in 0..batch {
            let prow = pre.row(r);
            let grow = gate.row_mut(r);
            for j in 0..n {
                grow[j] = sigmoid(prow[j] + cell.gate_bias[j]);
                grow[n + j] = sigmoid(prow[n + j] + cell.gate_bias[n + j]);
                grow[2 * n + j] = (prow[2 * n + j] + cell.gate_bias[2 * n + j]).tanh();
                grow[3 * n + j] = sigmoid(prow[3 * n + j] + cell.gate_bias[3 * n + j]);
            }
            let cp = c_prev.row(r);
            let crow = c.row_mut(r);
            let trow = tc.row_mut(r);
            let hrow = h.row_mut(r);
            for j in 0..n {
                crow[j] = grow[n + j] * cp[j] + grow[j] * grow[2 * n + j];
                trow[j] = crow[j].tanh();
                hrow[j] = grow[3 * n + j] * trow[j];
            }
        }
        gates.push(gate);
        cells.push(c);
        tanh_c.push(tc);
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
        LstmTape {
            inputs: inputs.to_vec(),
            gates,
            cells,
            hidden,
            tanh_c,
            mode,
        },
    ))
}

pub fn lstm_backward(
    cell: &LstmCell,
    tape: &LstmTape,
    loss_grads: &[Matrix],
    capture_hidden_norms: bool,
) -> Result<LstmGrads> {
    let seq_len = tape.seq_len();
    let expected = match tape.mode {
        OutputMode::PerStep => seq_len,
        OutputMode::LastStep => 1,
    };
    if loss_grads.len() != expected {
        return Err(Error::shape(
            "lstm_backward",
            format!("{} output gradients, expected {expected}", loss_grads.len()),
        ));
    }
    let n = cell.hidden;
    let (m, p) = (cell.input_size(), cell.output_size());
    let batch = tape.hidden[0].rows();

    let mut d_input_weights = Matrix::zeros(4 * n, m);
    let mut d_recurrent_weights = Matrix::zeros(4 * n, n);
    let mut d_gate_bias = vec![0.0; 4 * n];
    let mut d_output_weights = Matrix::zeros(p, n);
    let mut d_output_bias = vec![0.0; p];
    let mut norms = capture_hidden_norms.then(|| vec![0.0; seq_len]);

    let mut d_hidden: Matrix = Matrix::zeros(batch, n);
    let mut d_cell: Matrix = Matrix::zeros(batch, n);
    for t in (1..=seq_len).rev() {
        let emits_output = tape.mode == OutputMode::PerStep || t == seq_len;
        if emits_output {
            let dy = match tape.mode {
                OutputMode::PerStep => &loss_grads[t - 1],
                OutputMode::LastStep => &loss_grads[0],
            };
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
        // pre-activation gradients for all four gates
        let mut d_pre: Matrix = Matrix::zeros(batch, 4 * n);
        for r in 0..batch {
            let grow = tape.gates[t - 1].row(r);
            let trow = tape.tanh_c[t - 1].row(r);
            let cprev = tape.cells[t - 1].row(r);
            let dh = d_hidden.row(r);
            let dc_in = d_cell.row_mut(r);
            let dp = d_pre.row_mut(r);
            for j in 0..n {
                let (i, f, g, o) = (grow[j], grow[n + j], grow[2 * n + j], grow[3 * n + j]);
                let tc = trow[j];
                let d_o = dh[j] * tc;
                let dc = dc_in[j] + dh[j] * o * (1.0 - tc * tc);
                dp[j] = dc * g * i * (1.0 - i);
                dp[n + j] = dc * cprev[j] * f * (1.0 - f);
                dp[2 * n + j] = dc * i * (1.0 - g * g);
                dp[3 * n + j] = d_o * o * (1.0 - o);
                dc_in[j] = dc * f; // carried to t-1
            }
        }
        for r in 0..batch {
            for (acc, &g) in d_gate_bias.iter_mut().zip(d_pre.row(r)) {
                *acc += g;
            }
        }
        d_input_weights.add_assign(&d_pre.matmul_tn(&tape.inputs[t - 1])?)?;
        d_recurrent_weights.add_assign(&d_pre.matmul_tn(&tape.hidden[t - 1])?)?;
        d_hidden = d_pre.matmul(&cell.recurrent_weights)?;
    }

    Ok(LstmGrads {
        d_input_weights,
        d_recurrent_weights,
        d_gate_bias,
        d_output_weights,
        d_output_bias,
        hidden_grad_norms: norms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activations::mse;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_input_zero_state_gate_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let n = 4;
        let cell = LstmCell::init(n, 2, 1, 1.0, &mut rng).unwrap();
        let (_, tape) = lstm_forward(&cell, &[Matrix::zeros(1, 2)], OutputMode::LastStep).unwrap();
        let gate = tape.gates(0);
        for j in 0..n {
            assert!((gate[(0, j)] - 0.5).abs() < 1e-15); // input gate, sigmoid(0)
            assert!((gate[(0, n + j)] - sigmoid(1.0)).abs() < 1e-15); // forget
            assert_eq!(gate[(0, 2 * n + j)], 0.0); // cell candidate, tanh(0)
            assert!((gate[(0, 3 * n + j)] - 0.5).abs() < 1e-15); // output
        }
        assert_eq!(tape.cells[1].fro_norm(), 0.0);
        assert_eq!(tape.hidden[1].fro_norm(), 0.0);
    }

    fn last_step_mse_loss(cell: &LstmCell, inputs: &[Matrix], targets: &[f64]) -> f64 {
        let (outputs, _) = lstm_forward(cell, inputs, OutputMode::LastStep).unwrap();
        let preds: Vec<f64> = (0..outputs[0].rows()).map(|r| outputs[0][(r, 0)]).collect();
        mse(&preds, targets).unwrap().0
    }

    #[test]
    fn lstm_bptt_matches_finite_differences() {
        let step = 1e-6;
        let tol = 1e-5;
        for seed in 0..5u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
            let (n, m, t, batch) = (5, 3, 2, 2);
            let cell = LstmCell::init(n, m, 1, 1.0, &mut rng).unwrap();
            let inputs: Vec<Matrix> = (0..t)
                .map(|_| Matrix::from_fn(batch, m, |_, _| rng.gen_range(-1.0..1.0)))
                .collect();
            let targets: Vec<f64> = (0..batch).map(|_| rng.gen_range(-1.0..1.0)).collect();

            let (outputs, tape) = lstm_forward(&cell, &inputs, OutputMode::LastStep).unwrap();
            let preds: Vec<f64> = (0..batch).map(|r| outputs[0][(r, 0)]).collect();
            let (_, dpred) = mse(&preds, &targets).unwrap();
            let dy = Matrix::from_fn(batch, 1, |r, _| dpred[r]);
            let analytic = lstm_backward(&cell, &tape, &[dy], false).unwrap();

            let rel = |a: f64, nm: f64| (a - nm).abs() / a.abs().max(nm.abs()).max(1e-6);
            let fd = |plus: &LstmCell, minus: &LstmCell| {
                (last_step_mse_loss(plus, &inputs, &targets)
                    - last_step_mse_loss(minus, &inputs, &targets))
                    / (2.0 * step)
            };

            for idx in (0..4 * n * m).step_by(3) {
                let mut plus = cell.clone();
                plus.input_weights_mut().as_mut_slice()[idx] += step;
                let mut minus = cell.clone();
                minus.input_weights_mut().as_mut_slice()[idx] -= step;
                let r = rel(analytic.d_input_weights.as_slice()[idx], fd(&plus, &minus));
                assert!(r < tol, "seed {seed} Wx[{idx}] rel {r}");
            }
            for idx in (0..4 * n * n).step_by(5) {
                let mut plus = cell.clone();
                plus.recurrent_weights_mut().as_mut_slice()[idx] += step;
                let mut minus = cell.clone();
                minus.recurrent_weights_mut().as_mut_slice()[idx] -= step;
                let r = rel(analytic.d_recurrent_weights.as_slice()[idx], fd(&plus, &minus));
                assert!(r < tol, "seed {seed} Wh[{idx}] rel {r}");
            }
            for idx in 0..4 * n {
                let mut plus = cell.clone();
                plus.gate_bias_mut()[idx] += step;
                let mut minus = cell.clone();
                minus.gate_bias_mut()[idx] -= step;
                let r = rel(analytic.d_gate_bias[idx], fd(&plus, &minus));
                assert!(r < tol, "seed {seed} b[{idx}] rel {r}");
            }
            for idx in 0..n {
                let mut plus = cell.clone();
                plus.output_weights_mut().as_mut_slice()[idx] += step;
                let mut minus = cell.clone();
                minus.output_weights_mut().as_mut_slice()[idx] -= step;
                let r = rel(analytic.d_output_weights.as_slice()[idx], fd(&plus, &minus));
                assert!(r < tol, "seed {seed} V[{idx}] rel {r}");
            }
        }
    }

    #[test]
    fn hidden_norms_decay_from_sequence_end() {
        let mut rng = ChaCha8Rng::seed_from_u64(52);
        let cell = LstmCell::init(8, 2, 1, 1.0, &mut rng).unwrap();
        let t = 60;
        let inputs: Vec<Matrix> = (0..t)
            .map(|_| Matrix::from_fn(4, 2, |_, _| rng.gen_range(0.0..1.0)))
            .collect();
        let (_, tape) = lstm_forward(&cell, &inputs, OutputMode::LastStep).unwrap();
        let dy = Matrix::from_fn(4, 1, |_, _| 1.0);
        let grads = lstm_backward(&cell, &tape, &[dy], true).unwrap();
        let norms = grads.hidden_grad_norms.unwrap();
        // gradient norms shrink as we move toward the start of the sequence
        assert!(norms[0] < norms[t - 1] / 10.0, "start {} end {}", norms[0], norms[t - 1]);
    }
}
