use ndarray::{ArrayD, IxDyn};

use super::{uniform_fan_in, ParamStore, Session};
use crate::autograd::Var;
use crate::rng::StageRng;

/// Single-layer LSTM with PyTorch gate layout (input, forget, cell, output).
#[derive(Debug, Clone)]
pub struct Lstm {
    pub prefix: String,
    pub input_size: usize,
    pub hidden_size: usize,
}

impl Lstm {
    pub fn new(prefix: impl Into<String>, input_size: usize, hidden_size: usize) -> Self {
        Lstm {
            prefix: prefix.into(),
            input_size,
            hidden_size,
        }
    }

    fn name(&self, part: &str) -> String {
        format!("{}.{part}", self.prefix)
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut StageRng) {
        let h = self.hidden_size;
        store.insert_param(self.name("weight_ih"), uniform_fan_in(&[4 * h, self.input_size], h, rng));
        store.insert_param(self.name("weight_hh"), uniform_fan_in(&[4 * h, h], h, rng));
        store.insert_param(self.name("bias_ih"), uniform_fan_in(&[4 * h], h, rng));
        store.insert_param(self.name("bias_hh"), uniform_fan_in(&[4 * h], h, rng));
    }

    /// Runs the cell over `steps` (each `[B, input]`, in time order) and
    /// returns the hidden state per step, in time order. With `reverse` the
    /// sequence is consumed back to front.
    pub fn forward(&self, s: &Session, steps: &[Var], reverse: bool) -> Vec<Var> {
        let t_len = steps.len();
        if t_len == 0 {
            return Vec::new();
        }
        let b = steps[0].shape()[0];
        let h = self.hidden_size;
        let w_ih_t = s.var(&self.name("weight_ih")).t();
        let w_hh_t = s.var(&self.name("weight_hh")).t();
        let bias = s.var(&self.name("bias_ih")).add(s.var(&self.name("bias_hh")));
        // One projection for the whole sequence: [T*B, input] -> [T*B, 4H].
        let projected = Var::concat(steps, 0).matmul(&w_ih_t).add(&bias);

        let mut hidden = Var::constant(ArrayD::zeros(IxDyn(&[b, h])));
        let mut cell = Var::constant(ArrayD::zeros(IxDyn(&[b, h])));
        let mut out = vec![None; t_len];
        let order: Box<dyn Iterator<Item = usize>> = if reverse {
            Box::new((0..t_len).rev())
        } else {
            Box::new(0..t_len)
        };
        for t in order {
            let gates = projected.narrow(0, t * b, b).add(&hidden.matmul(&w_hh_t));
            let i = gates.narrow(1, 0, h).sigmoid();
            let f = gates.narrow(1, h, h).sigmoid();
            let g = gates.narrow(1, 2 * h, h).tanh();
            let o = gates.narrow(1, 3 * h, h).sigmoid();
            cell = f.mul(&cell).add(&i.mul(&g));
            hidden = o.mul(&cell.tanh());
            out[t] = Some(hidden.clone());
        }
        out.into_iter().map(Option::unwrap).collect()
    }
}
