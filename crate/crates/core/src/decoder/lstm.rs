//! Projected LSTM cell (LSTMP) used by the baseline prediction network.

use super::state::LstmCellState;
use super::weights::LstmLayer;
use crate::math::{mat_vec_acc, outer_acc, sigmoid, vec_mat, vec_mat_acc};

/// Activations of one LSTM step, kept for backprop through time.
#[derive(Clone, Debug)]
pub struct LstmStepCache {
    input: Vec<f64>,
    prev: LstmCellState,
    in_gate: Vec<f64>,
    forget_gate: Vec<f64>,
    cell_gate: Vec<f64>,
    out_gate: Vec<f64>,
    cell_tanh: Vec<f64>,
    hidden: Vec<f64>,
}

/// One step of a projected LSTM layer.
pub fn lstm_step(layer: &LstmLayer, x: &[f64], prev: &LstmCellState) -> (LstmCellState, LstmStepCache) {
    let units = layer.projection.rows();
    let mut gates = layer.bias.row(0).to_vec();
    vec_mat_acc(x, &layer.input, &mut gates);
    vec_mat_acc(&prev.output, &layer.recurrent, &mut gates);

    let in_gate: Vec<f64> = gates[..units].iter().map(|&v| sigmoid(v)).collect();
    let forget_gate: Vec<f64> = gates[units..2 * units].iter().map(|&v| sigmoid(v)).collect();
    let cell_gate: Vec<f64> = gates[2 * units..3 * units].iter().map(|v| v.tanh()).collect();
    let out_gate: Vec<f64> = gates[3 * units..].iter().map(|&v| sigmoid(v)).collect();

    let cell: Vec<f64> = (0..units)
        .map(|k| forget_gate[k] * prev.cell[k] + in_gate[k] * cell_gate[k])
        .collect();
    let cell_tanh: Vec<f64> = cell.iter().map(|c| c.tanh()).collect();
    let hidden: Vec<f64> = (0..units).map(|k| out_gate[k] * cell_tanh[k]).collect();
    let output = vec_mat(&hidden, &layer.projection);

    let cache = LstmStepCache {
        input: x.to_vec(),
        prev: prev.clone(),
        in_gate,
        forget_gate,
        cell_gate,
        out_gate,
        cell_tanh,
        hidden,
    };
    (LstmCellState { output, cell }, cache)
}

/// Gradients flowing out of one LSTM step.
pub struct LstmStepGrads {
    pub d_input: Vec<f64>,
    pub d_prev_output: Vec<f64>,
    pub d_prev_cell: Vec<f64>,
}

/// Backward pass of [`lstm_step`]. `d_output` and `d_cell` are the total
/// gradients reaching this step's projected output and cell state.
pub fn lstm_step_backward(
    layer: &LstmLayer,
    cache: &LstmStepCache,
    d_output: &[f64],
    d_cell: &[f64],
    grad: &mut LstmLayer,
) -> LstmStepGrads {
    let units = layer.projection.rows();
    outer_acc(&mut grad.projection, &cache.hidden, d_output);
    let mut d_hidden = vec![0.0; units];
    mat_vec_acc(&layer.projection, d_output, &mut d_hidden);

    let mut d_gates = vec![0.0; 4 * units];
    let mut d_prev_cell = vec![0.0; units];
    for k in 0..units {
        let o = cache.out_gate[k];
        let ct = cache.cell_tanh[k];
        let i = cache.in_gate[k];
        let f = cache.forget_gate[k];
        let g = cache.cell_gate[k];
        let d_o = d_hidden[k] * ct;
        let dc = d_cell[k] + d_hidden[k] * o * (1.0 - ct * ct);
        d_prev_cell[k] = dc * f;
        d_gates[k] = dc * g * i * (1.0 - i);
        d_gates[units + k] = dc * cache.prev.cell[k] * f * (1.0 - f);
        d_gates[2 * units + k] = dc * i * (1.0 - g * g);
        d_gates[3 * units + k] = d_o * o * (1.0 - o);
    }

    outer_acc(&mut grad.input, &cache.input, &d_gates);
    outer_acc(&mut grad.recurrent, &cache.prev.output, &d_gates);
    crate::math::add_assign(grad.bias.row_mut(0), &d_gates);

    let mut d_input = vec![0.0; cache.input.len()];
    mat_vec_acc(&layer.input, &d_gates, &mut d_input);
    let mut d_prev_output = vec![0.0; cache.prev.output.len()];
    mat_vec_acc(&layer.recurrent, &d_gates, &mut d_prev_output);
    LstmStepGrads { d_input, d_prev_output, d_prev_cell }
}
