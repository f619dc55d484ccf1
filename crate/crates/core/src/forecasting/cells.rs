//! GRU and LSTM cells with full backpropagation through time.
//!
//! Conventions fixed here because they define every numeric expectation:
//! - GRU blend: `h' = (1 - z) .* h + z .* h_tilde` — the update gate scales
//!   the candidate.
//! - LSTM: `c' = f .* c + i .* g`, `h' = o .* tanh(c')`.
//! - The scalar prediction is a linear readout of the final hidden state.

use super::ForecastError;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

fn logistic(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Weights of one gate: input projection, recurrent projection, bias.
#[derive(Debug, Clone, PartialEq)]
pub struct GateParams {
    /// hidden x input
    pub input: DMatrix<f64>,
    /// hidden x hidden
    pub recurrent: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl GateParams {
    fn zeros(hidden: usize, input: usize) -> Self {
        GateParams {
            input: DMatrix::zeros(hidden, input),
            recurrent: DMatrix::zeros(hidden, hidden),
            bias: DVector::zeros(hidden),
        }
    }

    fn pre_activation(&self, x: &DVector<f64>, h: &DVector<f64>) -> DVector<f64> {
        &self.input * x + &self.recurrent * h + &self.bias
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GruParams {
    pub update: GateParams,
    pub reset: GateParams,
    pub candidate: GateParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub input: GateParams,
    pub forget: GateParams,
    pub output: GateParams,
    pub cell: GateParams,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CellParams {
    Gru(GruParams),
    Lstm(LstmParams),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Gru,
    Lstm,
}

/// Full parameter set of one recurrent forecaster: the gated cell plus the
/// scalar output projection. Also reused as its own gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentParams {
    pub input_size: usize,
    pub hidden_size: usize,
    pub cell: CellParams,
    pub output_weights: DVector<f64>,
    pub output_bias: f64,
}

impl RecurrentParams {
    pub fn kind(&self) -> CellKind {
        match self.cell {
            CellParams::Gru(_) => CellKind::Gru,
            CellParams::Lstm(_) => CellKind::Lstm,
        }
    }

    pub fn zeros(kind: CellKind, input_size: usize, hidden_size: usize) -> Self {
        let gate = || GateParams::zeros(hidden_size, input_size);
        let cell = match kind {
            CellKind::Gru => {
                CellParams::Gru(GruParams { update: gate(), reset: gate(), candidate: gate() })
            }
            CellKind::Lstm => CellParams::Lstm(LstmParams {
                input: gate(),
                forget: gate(),
                output: gate(),
                cell: gate(),
            }),
        };
        RecurrentParams {
            input_size,
            hidden_size,
            cell,
            output_weights: DVector::zeros(hidden_size),
            output_bias: 0.0,
        }
    }

    /// Uniform init in +-sqrt(1/hidden) for every parameter, drawn in the
    /// fixed visit order from the given generator.
    pub fn init(kind: CellKind, input_size: usize, hidden_size: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = (1.0 / hidden_size as f64).sqrt();
        let mut params = Self::zeros(kind, input_size, hidden_size);
        params.visit_mut(&mut |v| *v = rng.random_range(-bound..bound));
        params
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.kind(), self.input_size, self.hidden_size)
    }

    fn gates(&self) -> Vec<&GateParams> {
        match &self.cell {
            CellParams::Gru(g) => vec![&g.update, &g.reset, &g.candidate],
            CellParams::Lstm(l) => vec![&l.input, &l.forget, &l.output, &l.cell],
        }
    }

    fn gates_mut(&mut self) -> Vec<&mut GateParams> {
        match &mut self.cell {
            CellParams::Gru(g) => vec![&mut g.update, &mut g.reset, &mut g.candidate],
            CellParams::Lstm(l) => vec![&mut l.input, &mut l.forget, &mut l.output, &mut l.cell],
        }
    }

    pub fn param_count(&self) -> usize {
        let per_gate = self.hidden_size * self.input_size
            + self.hidden_size * self.hidden_size
            + self.hidden_size;
        let n_gates = match self.cell {
            CellParams::Gru(_) => 3,
            CellParams::Lstm(_) => 4,
        };
        n_gates * per_gate + self.hidden_size + 1
    }

    /// Visit every parameter in a fixed order: gates (input, recurrent, bias
    /// each), then the output projection, then the output bias.
    pub fn visit(&self, f: &mut impl FnMut(f64)) {
        for gate in self.gates() {
            gate.input.iter().for_each(|&v| f(v));
            gate.recurrent.iter().for_each(|&v| f(v));
            gate.bias.iter().for_each(|&v| f(v));
        }
        self.output_weights.iter().for_each(|&v| f(v));
        f(self.output_bias);
    }

    /// In-place `self += other * factor`, e.g. for mini-batch gradient
    /// accumulation; layouts must match.
    pub fn add_scaled(&mut self, other: &RecurrentParams, factor: f64) {
        let mut flat = Vec::with_capacity(other.param_count());
        other.visit(&mut |v| flat.push(v));
        let mut k = 0;
        self.visit_mut(&mut |v| {
            *v += factor * flat[k];
            k += 1;
        });
        debug_assert_eq!(k, flat.len());
    }

    /// Mutable twin of [`RecurrentParams::visit`], same order.
    pub fn visit_mut(&mut self, f: &mut impl FnMut(&mut f64)) {
        for gate in self.gates_mut() {
            gate.input.iter_mut().for_each(&mut *f);
            gate.recurrent.iter_mut().for_each(&mut *f);
            gate.bias.iter_mut().for_each(&mut *f);
        }
        self.output_weights.iter_mut().for_each(&mut *f);
        f(&mut self.output_bias);
    }
}

fn check_shapes(
    what: &'static str,
    expected: usize,
    actual: usize,
) -> Result<(), ForecastError> {
    if expected != actual {
        return Err(ForecastError::ShapeMismatch { what, expected, actual });
    }
    Ok(())
}

struct GruStep {
    x: DVector<f64>,
    h_prev: DVector<f64>,
    update: DVector<f64>,
    reset: DVector<f64>,
    candidate: DVector<f64>,
}

fn gru_forward(p: &GruParams, x: &DVector<f64>, h: &DVector<f64>) -> (DVector<f64>, GruStep) {
    let update = p.update.pre_activation(x, h).map(logistic);
    let reset = p.reset.pre_activation(x, h).map(logistic);
    let gated = reset.component_mul(h);
    let candidate = (&p.candidate.input * x + &p.candidate.recurrent * &gated + &p.candidate.bias)
        .map(f64::tanh);
    let ones = DVector::from_element(h.len(), 1.0);
    let h_next = (ones - &update).component_mul(h) + update.component_mul(&candidate);
    (h_next, GruStep { x: x.clone(), h_prev: h.clone(), update, reset, candidate })
}

/// One GRU step:
/// z = logistic(Wz x + Uz h + bz), r = logistic(Wr x + Ur h + br),
/// h~ = tanh(Wh x + Uh (r .* h) + bh), h' = (1 - z) .* h + z .* h~.
pub fn gru_cell(
    p: &GruParams,
    x: &DVector<f64>,
    h: &DVector<f64>,
) -> Result<DVector<f64>, ForecastError> {
    check_shapes("gru input", p.update.input.ncols(), x.len())?;
    check_shapes("gru hidden", p.update.recurrent.ncols(), h.len())?;
    Ok(gru_forward(p, x, h).0)
}

struct LstmStep {
    x: DVector<f64>,
    h_prev: DVector<f64>,
    c_prev: DVector<f64>,
    input: DVector<f64>,
    forget: DVector<f64>,
    output: DVector<f64>,
    cand: DVector<f64>,
    tanh_c: DVector<f64>,
}

fn lstm_forward(
    p: &LstmParams,
    x: &DVector<f64>,
    h: &DVector<f64>,
    c: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>, LstmStep) {
    let input = p.input.pre_activation(x, h).map(logistic);
    let forget = p.forget.pre_activation(x, h).map(logistic);
    let output = p.output.pre_activation(x, h).map(logistic);
    let cand = p.cell.pre_activation(x, h).map(f64::tanh);
    let c_next = forget.component_mul(c) + input.component_mul(&cand);
    let tanh_c = c_next.map(f64::tanh);
    let h_next = output.component_mul(&tanh_c);
    let step = LstmStep {
        x: x.clone(),
        h_prev: h.clone(),
        c_prev: c.clone(),
        input,
        forget,
        output,
        cand,
        tanh_c,
    };
    (h_next, c_next, step)
}

/// One LSTM step: logistic input/forget/output gates, tanh candidate,
/// c' = f .* c + i .* g, h' = o .* tanh(c').
pub fn lstm_cell(
    p: &LstmParams,
    x: &DVector<f64>,
    h: &DVector<f64>,
    c: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>), ForecastError> {
    check_shapes("lstm input", p.input.input.ncols(), x.len())?;
    check_shapes("lstm hidden", p.input.recurrent.ncols(), h.len())?;
    check_shapes("lstm cell state", p.input.recurrent.ncols(), c.len())?;
    let (h_next, c_next, _) = lstm_forward(p, x, h, c);
    Ok((h_next, c_next))
}

/// Run the whole window and return the scalar prediction.
pub fn forward_window(params: &RecurrentParams, window: &[DVector<f64>]) -> Result<f64, ForecastError> {
    let hidden = params.hidden_size;
    let mut h = DVector::zeros(hidden);
    match &params.cell {
        CellParams::Gru(p) => {
            for x in window {
                h = gru_cell(p, x, &h)?;
            }
        }
        CellParams::Lstm(p) => {
            let mut c = DVector::zeros(hidden);
            for x in window {
                let (hn, cn) = lstm_cell(p, x, &h, &c)?;
                h = hn;
                c = cn;
            }
        }
    }
    Ok(params.output_weights.dot(&h) + params.output_bias)
}

fn accumulate_gate(
    grad: &mut GateParams,
    d_pre: &DVector<f64>,
    x: &DVector<f64>,
    h_prev: &DVector<f64>,
) {
    grad.input += d_pre * x.transpose();
    grad.recurrent += d_pre * h_prev.transpose();
    grad.bias += d_pre;
}

/// Squared-error loss of the window prediction against a scalar target, with
/// gradients for every parameter computed by backpropagation through time.
pub fn loss_and_gradients(
    params: &RecurrentParams,
    window: &[DVector<f64>],
    target: f64,
) -> Result<(f64, RecurrentParams), ForecastError> {
    let hidden = params.hidden_size;
    for x in window {
        check_shapes("window input", params.input_size, x.len())?;
    }

    let mut grads = params.zeros_like();
    match &params.cell {
        CellParams::Gru(p) => {
            let mut h = DVector::zeros(hidden);
            let mut steps = Vec::with_capacity(window.len());
            for x in window {
                let (h_next, step) = gru_forward(p, x, &h);
                steps.push(step);
                h = h_next;
            }
            let prediction = params.output_weights.dot(&h) + params.output_bias;
            let residual = prediction - target;
            let loss = residual * residual;
            let d_pred = 2.0 * residual;

            grads.output_weights = d_pred * &h;
            grads.output_bias = d_pred;
            let mut dh: DVector<f64> = d_pred * &params.output_weights;

            let gru_grads = match &mut grads.cell {
                CellParams::Gru(back) => back,
                CellParams::Lstm(_) => unreachable!("gradient container mirrors params"),
            };
            for step in steps.iter().rev() {
                let GruStep { x, h_prev, update, reset, candidate } = step;
                let ones = DVector::from_element(hidden, 1.0);

                // Candidate branch.
                let d_candidate = dh.component_mul(update);
                let d_pre_candidate = d_candidate
                    .component_mul(&(ones.clone() - candidate.component_mul(candidate)));
                let gated = reset.component_mul(h_prev);
                gru_grads.candidate.input += &d_pre_candidate * x.transpose();
                gru_grads.candidate.recurrent += &d_pre_candidate * gated.transpose();
                gru_grads.candidate.bias += &d_pre_candidate;
                let d_gated = p.candidate.recurrent.transpose() * &d_pre_candidate;

                // Reset branch.
                let d_reset = d_gated.component_mul(h_prev);
                let d_pre_reset = d_reset
                    .component_mul(reset)
                    .component_mul(&(ones.clone() - reset));
                accumulate_gate(&mut gru_grads.reset, &d_pre_reset, x, h_prev);

                // Update branch.
                let d_update = dh.component_mul(&(candidate - h_prev));
                let d_pre_update = d_update
                    .component_mul(update)
                    .component_mul(&(ones.clone() - update));
                accumulate_gate(&mut gru_grads.update, &d_pre_update, x, h_prev);

                dh = dh.component_mul(&(ones - update))
                    + d_gated.component_mul(reset)
                    + p.reset.recurrent.transpose() * &d_pre_reset
                    + p.update.recurrent.transpose() * &d_pre_update;
            }
            Ok((loss, grads))
        }
        CellParams::Lstm(p) => {
            let mut h = DVector::zeros(hidden);
            let mut c = DVector::zeros(hidden);
            let mut steps = Vec::with_capacity(window.len());
            for x in window {
                let (h_next, c_next, step) = lstm_forward(p, x, &h, &c);
                steps.push(step);
                h = h_next;
                c = c_next;
            }
            let prediction = params.output_weights.dot(&h) + params.output_bias;
            let residual = prediction - target;
            let loss = residual * residual;
            let d_pred = 2.0 * residual;

            grads.output_weights = d_pred * &h;
            grads.output_bias = d_pred;
            let mut dh: DVector<f64> = d_pred * &params.output_weights;
            let mut dc: DVector<f64> = DVector::zeros(hidden);

            let lstm_grads = match &mut grads.cell {
                CellParams::Lstm(back) => back,
                CellParams::Gru(_) => unreachable!("gradient container mirrors params"),
            };
            for step in steps.iter().rev() {
                let LstmStep { x, h_prev, c_prev, input, forget, output, cand, tanh_c } = step;
                let ones = DVector::from_element(hidden, 1.0);

                dc += dh
                    .component_mul(output)
                    .component_mul(&(ones.clone() - tanh_c.component_mul(tanh_c)));

                let d_output = dh.component_mul(tanh_c);
                let d_pre_output = d_output
                    .component_mul(output)
                    .component_mul(&(ones.clone() - output));
                accumulate_gate(&mut lstm_grads.output, &d_pre_output, x, h_prev);

                let d_forget = dc.component_mul(c_prev);
                let d_pre_forget = d_forget
                    .component_mul(forget)
                    .component_mul(&(ones.clone() - forget));
                accumulate_gate(&mut lstm_grads.forget, &d_pre_forget, x, h_prev);

                let d_input = dc.component_mul(cand);
                let d_pre_input = d_input
                    .component_mul(input)
                    .component_mul(&(ones.clone() - input));
                accumulate_gate(&mut lstm_grads.input, &d_pre_input, x, h_prev);

                let d_cand = dc.component_mul(input);
                let d_pre_cand =
                    d_cand.component_mul(&(ones - cand.component_mul(cand)));
                accumulate_gate(&mut lstm_grads.cell, &d_pre_cand, x, h_prev);

                dh = p.input.recurrent.transpose() * &d_pre_input
                    + p.forget.recurrent.transpose() * &d_pre_forget
                    + p.output.recurrent.transpose() * &d_pre_output
                    + p.cell.recurrent.transpose() * &d_pre_cand;
                dc = dc.component_mul(forget);
            }
            Ok((loss, grads))
        }
    }
}
