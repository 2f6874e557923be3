use super::head::sigmoid;
use super::params::LstmLayerParams;
use crate::matrix::{vec_matmul_acc, Matrix};

/// Column block of a gate inside the fused `4H` gate layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Input = 0,
    Forget = 1,
    Cell = 2,
    Output = 3,
}

/// Activations of one LSTM layer over a whole sequence, kept for BPTT.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCache {
    /// `T × d_in`
    pub input: Matrix,
    /// `T × 4H`, post-activation `[i | f | g | o]`.
    pub gates: Matrix,
    /// `T × H` cell states.
    pub cells: Matrix,
    /// `T × H` tanh of the cell states.
    pub cells_tanh: Matrix,
    /// `T × H` hidden states.
    pub hidden: Matrix,
}

/// Turns gate pre-activations (in place) into activations and writes the new
/// cell state, its tanh and the hidden state.
fn activate(gates: &mut [f64], c_prev: &[f64], c: &mut [f64], c_tanh: &mut [f64], h: &mut [f64]) {
    let n = c.len();
    for j in 0..n {
        let i = sigmoid(gates[j]);
        let f = sigmoid(gates[n + j]);
        let g = gates[2 * n + j].tanh();
        let o = sigmoid(gates[3 * n + j]);
        gates[j] = i;
        gates[n + j] = f;
        gates[2 * n + j] = g;
        gates[3 * n + j] = o;
        c[j] = f * c_prev[j] + i * g;
        c_tanh[j] = c[j].tanh();
        h[j] = o * c_tanh[j];
    }
}

/// One LSTM step: returns `(h', c')`.
pub fn lstm_cell_step(
    x: &[f64],
    h: &[f64],
    c: &[f64],
    params: &LstmLayerParams,
) -> (Vec<f64>, Vec<f64>) {
    let n = params.hidden();
    let mut gates = params.bias.as_slice().to_vec();
    vec_matmul_acc(x, &params.w_input, &mut gates);
    vec_matmul_acc(h, &params.w_recurrent, &mut gates);
    let (mut c_new, mut c_tanh, mut h_new) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    activate(&mut gates, c, &mut c_new, &mut c_tanh, &mut h_new);
    (h_new, c_new)
}

/// Runs one layer from zero initial state over the rows of `input`.
pub fn lstm_layer_forward(input: &Matrix, params: &LstmLayerParams) -> LstmCache {
    let t_len = input.rows();
    let n = params.hidden();
    let mut gates = input.matmul(&params.w_input);
    for t in 0..t_len {
        crate::matrix::axpy(1.0, params.bias.as_slice(), gates.row_mut(t));
    }
    let mut cells = Matrix::zeros(t_len, n);
    let mut cells_tanh = Matrix::zeros(t_len, n);
    let mut hidden = Matrix::zeros(t_len, n);
    let zeros = vec![0.0; n];
    for t in 0..t_len {
        let (c_prev, h_prev) = if t == 0 {
            (zeros.clone(), zeros.clone())
        } else {
            (cells.row(t - 1).to_vec(), hidden.row(t - 1).to_vec())
        };
        vec_matmul_acc(&h_prev, &params.w_recurrent, gates.row_mut(t));
        let mut c = vec![0.0; n];
        let mut ct = vec![0.0; n];
        let mut h = vec![0.0; n];
        activate(gates.row_mut(t), &c_prev, &mut c, &mut ct, &mut h);
        cells.row_mut(t).copy_from_slice(&c);
        cells_tanh.row_mut(t).copy_from_slice(&ct);
        hidden.row_mut(t).copy_from_slice(&h);
    }
    LstmCache {
        input: input.clone(),
        gates,
        cells,
        cells_tanh,
        hidden,
    }
}

/// Layer `l` consumes layer `l-1`'s hidden sequence; the top layer's
/// `hidden` is the network's `H`.
pub fn stacked_lstm_forward(input: &Matrix, layers: &[LstmLayerParams]) -> Vec<LstmCache> {
    let mut caches: Vec<LstmCache> = Vec::with_capacity(layers.len());
    for layer in layers {
        let x = caches.last().map_or(input, |c| &c.hidden);
        let cache = lstm_layer_forward(x, layer);
        caches.push(cache);
    }
    caches
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Architecture, ModelParams};

    #[test]
    fn zero_params_zero_state() {
        let p = LstmLayerParams::zeros(3, 2);
        let (h, c) = lstm_cell_step(&[1.0, -2.0, 0.5], &[0.0; 2], &[0.0; 2], &p);
        assert_eq!(h, vec![0.0; 2]);
        assert_eq!(c, vec![0.0; 2]);
    }

    #[test]
    fn zero_params_unit_cell() {
        let p = LstmLayerParams::zeros(1, 1);
        let (h, c) = lstm_cell_step(&[0.7], &[0.3], &[1.0], &p);
        // gates all 0.5, candidate 0: c' = 0.5·1, h' = 0.5·tanh(0.5)
        assert_eq!(c, vec![0.5]);
        assert!((h[0] - 0.5 * 0.5f64.tanh()).abs() < 1e-15);
        assert!((h[0] - 0.23106).abs() < 1e-5);
    }

    fn layers(d_in: usize, hidden: &[usize]) -> Vec<LstmLayerParams> {
        let mut arch = Architecture::new(d_in, 2);
        arch.hidden = hidden.to_vec();
        arch.heads = 1;
        ModelParams::init(&arch, 42).unwrap().lstm
    }

    #[test]
    fn single_step_layer_equals_cell() {
        let ls = layers(3, &[4]);
        let x = Matrix::from_vec(1, 3, vec![0.2, -0.4, 0.9]);
        let caches = stacked_lstm_forward(&x, &ls);
        let (h, _) = lstm_cell_step(x.row(0), &[0.0; 4], &[0.0; 4], &ls[0]);
        for (a, b) in caches[0].hidden.row(0).iter().zip(&h) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn stacking_equals_manual_chaining_of_cells() {
        let ls = layers(3, &[4, 5]);
        let x = Matrix::from_fn(6, 3, |t, j| ((t * 3 + j) as f64 * 0.37).sin());
        let stacked = stacked_lstm_forward(&x, &ls);
        let top = &stacked[1].hidden;

        // oracle: drive each layer step by step through lstm_cell_step
        let mut state = [(vec![0.0; 4], vec![0.0; 4]), (vec![0.0; 5], vec![0.0; 5])];
        for t in 0..6 {
            let (h1, c1) = lstm_cell_step(x.row(t), &state[0].0, &state[0].1, &ls[0]);
            let (h2, c2) = lstm_cell_step(&h1, &state[1].0, &state[1].1, &ls[1]);
            for (a, b) in top.row(t).iter().zip(&h2) {
                assert!((a - b).abs() < 1e-14);
            }
            state = [(h1, c1), (h2, c2)];
        }
    }

    #[test]
    fn zero_input_zero_params_gives_zero_output() {
        let ls = vec![LstmLayerParams::zeros(3, 4), LstmLayerParams::zeros(4, 4)];
        let caches = stacked_lstm_forward(&Matrix::zeros(5, 3), &ls);
        assert!(caches[1].hidden.as_slice().iter().all(|&x| x == 0.0));
        assert_eq!(caches[1].hidden.shape(), (5, 4));
    }
}
