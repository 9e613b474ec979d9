//! LSTM cells built on the tape. Gate layout inside the fused projection is
//! i, f, o, g (input, forget, output, candidate); the forget-gate bias is
//! started at +1 so memory persists early in training.

use rand_chacha::ChaCha8Rng;

use super::params::ParamStore;
use super::tape::{NodeId, Tape};

#[derive(Debug, Clone)]
pub struct LstmLayer {
    pub prefix: String,
    pub in_dim: usize,
    pub hidden: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct LstmState {
    pub h: NodeId,
    pub c: NodeId,
}

impl LstmLayer {
    /// Register this layer's parameters: one fused weight matrix over
    /// [x; h_prev] and one fused bias.
    pub fn register(prefix: &str, in_dim: usize, hidden: usize, store: &mut ParamStore, rng: &mut ChaCha8Rng) -> Self {
        store.add_matrix(&format!("{prefix}.w"), 4 * hidden, in_dim + hidden, rng);
        store.add_zero_vector(&format!("{prefix}.b"), 4 * hidden);
        // forget gate bias = +1
        let idx = store.index_of(&format!("{prefix}.b")).unwrap();
        for v in store.entry_mut(idx).data[hidden..2 * hidden].iter_mut() {
            *v = 1.0;
        }
        LstmLayer {
            prefix: prefix.to_string(),
            in_dim,
            hidden,
        }
    }

    /// Wrap an already-loaded layer (checkpoint path).
    pub fn attach(prefix: &str, in_dim: usize, hidden: usize) -> Self {
        LstmLayer {
            prefix: prefix.to_string(),
            in_dim,
            hidden,
        }
    }

    pub fn zero_state(&self, tape: &mut Tape) -> LstmState {
        LstmState {
            h: tape.zeros(self.hidden),
            c: tape.zeros(self.hidden),
        }
    }

    pub fn step(&self, tape: &mut Tape, x: NodeId, state: LstmState) -> LstmState {
        let joined = tape.concat(x, state.h);
        let proj = tape.matvec(&format!("{}.w", self.prefix), joined);
        let bias = tape.param(&format!("{}.b", self.prefix));
        let z = tape.add(proj, bias);
        let h = self.hidden;
        let i_raw = tape.slice(z, 0, h);
        let f_raw = tape.slice(z, h, h);
        let o_raw = tape.slice(z, 2 * h, h);
        let g_raw = tape.slice(z, 3 * h, h);
        let i = tape.sigmoid(i_raw);
        let f = tape.sigmoid(f_raw);
        let o = tape.sigmoid(o_raw);
        let g = tape.tanh(g_raw);
        let fc = tape.mul(f, state.c);
        let ig = tape.mul(i, g);
        let c = tape.add(fc, ig);
        let ct = tape.tanh(c);
        let h_out = tape.mul(o, ct);
        LstmState { h: h_out, c }
    }
}

/// A stack of LSTM layers; layer l feeds its hidden state to layer l+1.
#[derive(Debug, Clone)]
pub struct LstmStack {
    pub layers: Vec<LstmLayer>,
}

impl LstmStack {
    pub fn register(prefix: &str, in_dim: usize, hidden: usize, depth: usize, store: &mut ParamStore, rng: &mut ChaCha8Rng) -> Self {
        let layers = (0..depth)
            .map(|l| {
                let d = if l == 0 { in_dim } else { hidden };
                LstmLayer::register(&format!("{prefix}.l{l}"), d, hidden, store, rng)
            })
            .collect();
        LstmStack { layers }
    }

    pub fn attach(prefix: &str, in_dim: usize, hidden: usize, depth: usize) -> Self {
        let layers = (0..depth)
            .map(|l| {
                let d = if l == 0 { in_dim } else { hidden };
                LstmLayer::attach(&format!("{prefix}.l{l}"), d, hidden)
            })
            .collect();
        LstmStack { layers }
    }

    pub fn zero_state(&self, tape: &mut Tape) -> Vec<LstmState> {
        self.layers.iter().map(|l| l.zero_state(tape)).collect()
    }

    /// Returns the per-layer states; the top layer's h is the stack output.
    pub fn step(&self, tape: &mut Tape, x: NodeId, states: &[LstmState]) -> Vec<LstmState> {
        let mut out = Vec::with_capacity(self.layers.len());
        let mut input = x;
        for (layer, state) in self.layers.iter().zip(states.iter()) {
            let next = layer.step(tape, input, *state);
            input = next.h;
            out.push(next);
        }
        out
    }

    pub fn hidden(&self) -> usize {
        self.layers.last().map(|l| l.hidden).unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::tape::max_rel_error;
    use rand::SeedableRng;

    #[test]
    fn forget_bias_initialized_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        let layer = LstmLayer::register("enc", 3, 4, &mut store, &mut rng);
        let b = store.get("enc.b").unwrap();
        assert!(b.data[0..4].iter().all(|&v| v == 0.0));
        assert!(b.data[4..8].iter().all(|&v| v == 1.0));
        assert!(b.data[8..16].iter().all(|&v| v == 0.0));
        assert_eq!(layer.hidden, 4);
    }

    #[test]
    fn cell_recurrence_matches_reference() {
        // hand-computed single step with identity-ish weights
        let mut store = ParamStore::new();
        let h = 1;
        let in_dim = 1;
        // w rows: i, f, o, g over [x, h_prev]
        store.insert(
            "cell.w",
            super::super::params::Param {
                data: vec![1.0, 0.0, 0.5, 0.0, 0.25, 0.0, 2.0, 0.0],
                rows: 4 * h,
                cols: in_dim + h,
            },
        );
        store.insert("cell.b", super::super::params::Param::zeros(4 * h, 1));
        let layer = LstmLayer::attach("cell", in_dim, h);
        let mut tape = Tape::new(&store);
        let x = tape.input(vec![1.0]);
        let s0 = layer.zero_state(&mut tape);
        let s1 = layer.step(&mut tape, x, s0);
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let i = sig(1.0);
        let f = sig(0.5);
        let o = sig(0.25);
        let g = (2.0f64).tanh();
        let c = f * 0.0 + i * g;
        let expect_h = o * c.tanh();
        assert!((tape.value(s1.c)[0] - c).abs() < 1e-12);
        assert!((tape.value(s1.h)[0] - expect_h).abs() < 1e-12);
    }

    #[test]
    fn three_step_unroll_gradients_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut store = ParamStore::new();
        let layer = LstmLayer::register("g", 2, 3, &mut store, &mut rng);
        let err = max_rel_error(
            &mut store,
            |t| {
                let mut state = layer.zero_state(t);
                for step in 0..3 {
                    let x = t.input(vec![0.3 * step as f64, -0.1]);
                    state = layer.step(t, x, state);
                }
                let ones = t.input(vec![1.0, 1.0, 1.0]);
                t.dot(state.h, ones)
            },
            1e-5,
        );
        assert!(err < 1e-7, "rel err {err}");
    }

    #[test]
    fn stacked_layers_gradients_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut store = ParamStore::new();
        let stack = LstmStack::register("s", 2, 3, 2, &mut store, &mut rng);
        assert_eq!(store.len(), 4);
        let err = max_rel_error(
            &mut store,
            |t| {
                let mut states = stack.zero_state(t);
                for step in 0..2 {
                    let x = t.input(vec![0.5, 0.2 * step as f64]);
                    states = stack.step(t, x, &states);
                }
                let ones = t.input(vec![1.0, 1.0, 1.0]);
                t.dot(states.last().unwrap().h, ones)
            },
            1e-5,
        );
        assert!(err < 1e-7, "rel err {err}");
    }
}
