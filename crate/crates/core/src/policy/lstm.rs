use super::params::{LstmLayer, PolicyParams};

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Hidden and cell state of every layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmState {
    pub hidden: Vec<Vec<f64>>,
    pub cell: Vec<Vec<f64>>,
}

impl LstmState {
    pub fn zeros(layers: usize, width: usize) -> Self {
        Self {
            hidden: vec![vec![0.0; width]; layers],
            cell: vec![vec![0.0; width]; layers],
        }
    }

    pub fn top(&self) -> &[f64] {
        self.hidden.last().expect("at least one layer")
    }
}

/// Forward values of one layer at one step, kept for backpropagation.
#[derive(Clone, Debug)]
pub struct LstmCache {
    pub input: Vec<f64>,
    pub hidden_prev: Vec<f64>,
    pub cell_prev: Vec<f64>,
    /// Activated gates `[i | f | g | o]`.
    pub gates: Vec<f64>,
    pub cell: Vec<f64>,
    pub tanh_cell: Vec<f64>,
    pub hidden: Vec<f64>,
}

impl LstmLayer {
    pub fn forward(&self, input: &[f64], hidden_prev: &[f64], cell_prev: &[f64]) -> LstmCache {
        let h = self.hidden_dim();
        let mut gates = vec![0.0; 4 * h];
        self.w_input.matvec(input, &mut gates);
        let mut rec = vec![0.0; 4 * h];
        self.w_hidden.matvec(hidden_prev, &mut rec);
        for ((g, r), b) in gates.iter_mut().zip(&rec).zip(&self.bias) {
            *g += r + b;
        }
        for (k, g) in gates.iter_mut().enumerate() {
            *g = if (2 * h..3 * h).contains(&k) {
                g.tanh()
            } else {
                sigmoid(*g)
            };
        }
        let mut cell = vec![0.0; h];
        let mut tanh_cell = vec![0.0; h];
        let mut hidden = vec![0.0; h];
        for j in 0..h {
            let (i, f, g, o) = (gates[j], gates[h + j], gates[2 * h + j], gates[3 * h + j]);
            cell[j] = f * cell_prev[j] + i * g;
            tanh_cell[j] = cell[j].tanh();
            hidden[j] = o * tanh_cell[j];
        }
        LstmCache {
            input: input.to_vec(),
            hidden_prev: hidden_prev.to_vec(),
            cell_prev: cell_prev.to_vec(),
            gates,
            cell,
            tanh_cell,
            hidden,
        }
    }

    /// Backpropagates `d_hidden`/`d_cell` through one step, accumulating into
    /// `grad` and returning `(d_input, d_hidden_prev, d_cell_prev)`.
    pub fn backward(
        &self,
        cache: &LstmCache,
        d_hidden: &[f64],
        d_cell: &[f64],
        grad: &mut LstmLayer,
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let h = self.hidden_dim();
        let g = &cache.gates;
        let mut d_pre = vec![0.0; 4 * h];
        let mut d_cell_prev = vec![0.0; h];
        for j in 0..h {
            let (i, f, gg, o) = (g[j], g[h + j], g[2 * h + j], g[3 * h + j]);
            let tc = cache.tanh_cell[j];
            let d_o = d_hidden[j] * tc;
            let dc = d_cell[j] + d_hidden[j] * o * (1.0 - tc * tc);
            d_pre[j] = dc * gg * i * (1.0 - i);
            d_pre[h + j] = dc * cache.cell_prev[j] * f * (1.0 - f);
            d_pre[2 * h + j] = dc * i * (1.0 - gg * gg);
            d_pre[3 * h + j] = d_o * o * (1.0 - o);
            d_cell_prev[j] = dc * f;
        }
        grad.w_input.add_outer(&d_pre, &cache.input);
        grad.w_hidden.add_outer(&d_pre, &cache.hidden_prev);
        for (b, d) in grad.bias.iter_mut().zip(&d_pre) {
            *b += d;
        }
        let mut d_input = vec![0.0; self.input_dim()];
        self.w_input.matvec_t_add(&d_pre, &mut d_input);
        let mut d_hidden_prev = vec![0.0; h];
        self.w_hidden.matvec_t_add(&d_pre, &mut d_hidden_prev);
        (d_input, d_hidden_prev, d_cell_prev)
    }
}

/// One step of the stacked LSTM: feeds `input` to the bottom layer and each
/// layer's new hidden state to the layer above.
pub fn lstm_step(
    params: &PolicyParams,
    state: &LstmState,
    input: &[f64],
) -> (LstmState, Vec<LstmCache>) {
    let mut caches = Vec::with_capacity(params.lstm.len());
    let mut next = LstmState {
        hidden: Vec::with_capacity(params.lstm.len()),
        cell: Vec::with_capacity(params.lstm.len()),
    };
    let mut x = input.to_vec();
    for (k, layer) in params.lstm.iter().enumerate() {
        let cache = layer.forward(&x, &state.hidden[k], &state.cell[k]);
        x.clone_from(&cache.hidden);
        next.hidden.push(cache.hidden.clone());
        next.cell.push(cache.cell.clone());
        caches.push(cache);
    }
    (next, caches)
}
