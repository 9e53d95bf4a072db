//! LSTM cell without peepholes and a many-to-one recurrent layer.
//!
//! Every gate reads the concatenation `[a_prev, x]` (hidden state first):
//!
//! ```text
//! c~  = tanh(W_c [a_prev, x] + b_c)
//! Γu  = σ(W_u [a_prev, x] + b_u)
//! Γf  = σ(W_f [a_prev, x] + b_f)
//! Γo  = σ(W_o [a_prev, x] + b_o)
//! c   = Γu ∘ c~ + Γf ∘ c_prev
//! a   = Γo ∘ tanh(c)
//! ```

use rand::Rng;

use super::dense::sigmoid;
use super::{Layer, Param, Tensor};
use crate::error::{Error, Result};

/// Plain weights of one cell. Each matrix is `[hidden, hidden + input]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCell {
    pub hidden_size: usize,
    pub input_size: usize,
    pub w_c: Vec<f64>,
    pub w_u: Vec<f64>,
    pub w_f: Vec<f64>,
    pub w_o: Vec<f64>,
    pub b_c: Vec<f64>,
    pub b_u: Vec<f64>,
    pub b_f: Vec<f64>,
    pub b_o: Vec<f64>,
}

impl LstmCell {
    pub fn zeros(hidden_size: usize, input_size: usize) -> Self {
        let m = vec![0.0; hidden_size * (hidden_size + input_size)];
        let b = vec![0.0; hidden_size];
        Self {
            hidden_size,
            input_size,
            w_c: m.clone(),
            w_u: m.clone(),
            w_f: m.clone(),
            w_o: m,
            b_c: b.clone(),
            b_u: b.clone(),
            b_f: b.clone(),
            b_o: b,
        }
    }

    fn validate(&self) -> Result<()> {
        let cols = self.hidden_size + self.input_size;
        let m = self.hidden_size * cols;
        for w in [&self.w_c, &self.w_u, &self.w_f, &self.w_o] {
            if w.len() != m {
                return Err(Error::shape(format!(
                    "LSTM weight has {} entries, expected {}x{}",
                    w.len(),
                    self.hidden_size,
                    cols
                )));
            }
        }
        for b in [&self.b_c, &self.b_u, &self.b_f, &self.b_o] {
            if b.len() != self.hidden_size {
                return Err(Error::shape(format!(
                    "LSTM bias has {} entries, expected {}",
                    b.len(),
                    self.hidden_size
                )));
            }
        }
        Ok(())
    }
}

/// Intermediate values of one step; kept for backpropagation.
#[derive(Debug, Clone, PartialEq)]
pub struct StepState {
    pub concat: Vec<f64>,
    pub candidate: Vec<f64>,
    pub update: Vec<f64>,
    pub forget: Vec<f64>,
    pub output: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
    pub a: Vec<f64>,
}

fn affine_row(w: &[f64], b: f64, v: &[f64]) -> f64 {
    b + w.iter().zip(v).map(|(x, y)| x * y).sum::<f64>()
}

fn step(
    hidden: usize,
    weights: [&[f64]; 4],
    biases: [&[f64]; 4],
    a_prev: &[f64],
    c_prev: &[f64],
    x: &[f64],
) -> StepState {
    let cols = a_prev.len() + x.len();
    let mut concat = Vec::with_capacity(cols);
    concat.extend_from_slice(a_prev);
    concat.extend_from_slice(x);
    let [wc, wu, wf, wo] = weights;
    let [bc, bu, bf, bo] = biases;
    let mut s = StepState {
        candidate: Vec::with_capacity(hidden),
        update: Vec::with_capacity(hidden),
        forget: Vec::with_capacity(hidden),
        output: Vec::with_capacity(hidden),
        c_prev: c_prev.to_vec(),
        c: Vec::with_capacity(hidden),
        tanh_c: Vec::with_capacity(hidden),
        a: Vec::with_capacity(hidden),
        concat,
    };
    for h in 0..hidden {
        let row = h * cols..(h + 1) * cols;
        let ct = affine_row(&wc[row.clone()], bc[h], &s.concat).tanh();
        let gu = sigmoid(affine_row(&wu[row.clone()], bu[h], &s.concat));
        let gf = sigmoid(affine_row(&wf[row.clone()], bf[h], &s.concat));
        let go = sigmoid(affine_row(&wo[row], bo[h], &s.concat));
        let c = gu * ct + gf * c_prev[h];
        let tc = c.tanh();
        s.candidate.push(ct);
        s.update.push(gu);
        s.forget.push(gf);
        s.output.push(go);
        s.c.push(c);
        s.tanh_c.push(tc);
        s.a.push(go * tc);
    }
    s
}

/// One recurrence step; returns `(a, c)` plus the gate values.
pub fn lstm_step_full(cell: &LstmCell, a_prev: &[f64], c_prev: &[f64], x: &[f64]) -> Result<StepState> {
    cell.validate()?;
    if a_prev.len() != cell.hidden_size || c_prev.len() != cell.hidden_size || x.len() != cell.input_size {
        return Err(Error::shape(format!(
            "LSTM step with hidden {} / input {} given a {}, c {}, x {}",
            cell.hidden_size,
            cell.input_size,
            a_prev.len(),
            c_prev.len(),
            x.len()
        )));
    }
    Ok(step(
        cell.hidden_size,
        [&cell.w_c, &cell.w_u, &cell.w_f, &cell.w_o],
        [&cell.b_c, &cell.b_u, &cell.b_f, &cell.b_o],
        a_prev,
        c_prev,
        x,
    ))
}

pub fn lstm_step(cell: &LstmCell, a_prev: &[f64], c_prev: &[f64], x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let s = lstm_step_full(cell, a_prev, c_prev, x)?;
    Ok((s.a, s.c))
}

/// Runs the sequence from zero states and returns the final hidden state.
pub fn lstm_many_to_one(cell: &LstmCell, sequence: &[Vec<f64>]) -> Result<Vec<f64>> {
    if sequence.is_empty() {
        return Err(Error::invalid("LSTM sequence is empty"));
    }
    let mut a = vec![0.0; cell.hidden_size];
    let mut c = vec![0.0; cell.hidden_size];
    for x in sequence {
        (a, c) = lstm_step(cell, &a, &c, x)?;
    }
    Ok(a)
}

/// Many-to-one LSTM over `[N, T, input]` producing `[N, hidden]`.
pub struct Lstm {
    pub hidden_size: usize,
    pub input_size: usize,
    pub w_c: Param,
    pub w_u: Param,
    pub w_f: Param,
    pub w_o: Param,
    pub b_c: Param,
    pub b_u: Param,
    pub b_f: Param,
    pub b_o: Param,
    cache: Option<Vec<Vec<StepState>>>,
}

impl Lstm {
    /// Xavier weights, zero biases except the forget bias at 1.
    pub fn new(name: &str, input_size: usize, hidden_size: usize, rng: &mut impl Rng) -> Self {
        let shape = [hidden_size, hidden_size + input_size];
        let fan_in = hidden_size + input_size;
        let mut w = |gate: &str| Param::xavier(format!("{name}.w_{gate}"), &shape, fan_in, hidden_size, rng);
        let (w_c, w_u, w_f, w_o) = (w("c"), w("u"), w("f"), w("o"));
        let b = |gate: &str, v: f64| Param::new(format!("{name}.b_{gate}"), Tensor::full(&[hidden_size], v));
        Self {
            hidden_size,
            input_size,
            w_c,
            w_u,
            w_f,
            w_o,
            b_c: b("c", 0.0),
            b_u: b("u", 0.0),
            b_f: b("f", 1.0),
            b_o: b("o", 0.0),
            cache: None,
        }
    }

    pub fn cell(&self) -> LstmCell {
        LstmCell {
            hidden_size: self.hidden_size,
            input_size: self.input_size,
            w_c: self.w_c.value.data().to_vec(),
            w_u: self.w_u.value.data().to_vec(),
            w_f: self.w_f.value.data().to_vec(),
            w_o: self.w_o.value.data().to_vec(),
            b_c: self.b_c.value.data().to_vec(),
            b_u: self.b_u.value.data().to_vec(),
            b_f: self.b_f.value.data().to_vec(),
            b_o: self.b_o.value.data().to_vec(),
        }
    }

    pub fn set_cell(&mut self, cell: &LstmCell) -> Result<()> {
        cell.validate()?;
        if cell.hidden_size != self.hidden_size || cell.input_size != self.input_size {
            return Err(Error::shape("LSTM cell dimensions differ from layer"));
        }
        let set = |p: &mut Param, v: &[f64]| p.value.data_mut().copy_from_slice(v);
        set(&mut self.w_c, &cell.w_c);
        set(&mut self.w_u, &cell.w_u);
        set(&mut self.w_f, &cell.w_f);
        set(&mut self.w_o, &cell.w_o);
        set(&mut self.b_c, &cell.b_c);
        set(&mut self.b_u, &cell.b_u);
        set(&mut self.b_f, &cell.b_f);
        set(&mut self.b_o, &cell.b_o);
        Ok(())
    }
}

impl Layer for Lstm {
    fn kind(&self) -> &'static str {
        "lstm"
    }

    fn forward(&mut self, input: &Tensor, _training: bool) -> Result<Tensor> {
        let [n, t, f] = input.shape() else {
            return Err(Error::shape(format!("LSTM expects [N, T, F], got {:?}", input.shape())));
        };
        let (n, t, f) = (*n, *t, *f);
        if f != self.input_size || t == 0 {
            return Err(Error::shape(format!(
                "LSTM expects [N, T>0, {}], got {:?}",
                self.input_size,
                input.shape()
            )));
        }
        let h = self.hidden_size;
        let weights = [
            self.w_c.value.data(),
            self.w_u.value.data(),
            self.w_f.value.data(),
            self.w_o.value.data(),
        ];
        let biases = [
            self.b_c.value.data(),
            self.b_u.value.data(),
            self.b_f.value.data(),
            self.b_o.value.data(),
        ];
        let mut out = Vec::with_capacity(n * h);
        let mut cache = Vec::with_capacity(n);
        for s in 0..n {
            let mut states: Vec<StepState> = Vec::with_capacity(t);
            let zeros = vec![0.0; h];
            for step_idx in 0..t {
                let x = &input.data()[(s * t + step_idx) * f..][..f];
                let (a_prev, c_prev) = match states.last() {
                    Some(p) => (p.a.as_slice(), p.c.as_slice()),
                    None => (zeros.as_slice(), zeros.as_slice()),
                };
                let st = step(h, weights, biases, a_prev, c_prev, x);
                states.push(st);
            }
            out.extend_from_slice(&states.last().expect("t > 0").a);
            cache.push(states);
        }
        self.cache = Some(cache);
        Tensor::new(vec![n, h], out)
    }

    fn backward(&mut self, grad_output: &Tensor) -> Result<Tensor> {
        let cache = self.cache.take().ok_or(Error::BackwardBeforeForward("lstm"))?;
        let h = self.hidden_size;
        let f = self.input_size;
        let cols = h + f;
        let n = cache.len();
        let t = cache.first().map_or(0, Vec::len);
        grad_output.expect_shape(&[n, h], "lstm grad")?;

        let mut gx = vec![0.0; n * t * f];
        let mut dz = [vec![0.0; h], vec![0.0; h], vec![0.0; h], vec![0.0; h]];
        for (s, states) in cache.iter().enumerate() {
            let mut da = grad_output.data()[s * h..][..h].to_vec();
            let mut dc = vec![0.0; h];
            for (step_idx, st) in states.iter().enumerate().rev() {
                for k in 0..h {
                    let d_out_gate = da[k] * st.tanh_c[k];
                    dc[k] += da[k] * st.output[k] * (1.0 - st.tanh_c[k] * st.tanh_c[k]);
                    let d_cand = dc[k] * st.update[k];
                    let d_upd = dc[k] * st.candidate[k];
                    let d_fgt = dc[k] * st.c_prev[k];
                    dz[0][k] = d_cand * (1.0 - st.candidate[k] * st.candidate[k]);
                    dz[1][k] = d_upd * st.update[k] * (1.0 - st.update[k]);
                    dz[2][k] = d_fgt * st.forget[k] * (1.0 - st.forget[k]);
                    dz[3][k] = d_out_gate * st.output[k] * (1.0 - st.output[k]);
                    dc[k] *= st.forget[k];
                }
                let mut dv = vec![0.0; cols];
                let params = [&mut self.w_c, &mut self.w_u, &mut self.w_f, &mut self.w_o];
                let biases = [&mut self.b_c, &mut self.b_u, &mut self.b_f, &mut self.b_o];
                for ((w, b), dzg) in params.into_iter().zip(biases).zip(&dz) {
                    let wv = w.value.data();
                    let gw = w.grad.data_mut();
                    let gb = b.grad.data_mut();
                    for k in 0..h {
                        let g = dzg[k];
                        gb[k] += g;
                        let row = k * cols;
                        for j in 0..cols {
                            gw[row + j] += g * st.concat[j];
                            dv[j] += g * wv[row + j];
                        }
                    }
                }
                da.copy_from_slice(&dv[..h]);
                gx[(s * t + step_idx) * f..][..f].copy_from_slice(&dv[h..]);
            }
        }
        Tensor::new(vec![n, t, f], gx)
    }

    fn params(&self) -> Vec<&Param> {
        vec![
            &self.w_c, &self.w_u, &self.w_f, &self.w_o, &self.b_c, &self.b_u, &self.b_f, &self.b_o,
        ]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![
            &mut self.w_c,
            &mut self.w_u,
            &mut self.w_f,
            &mut self.w_o,
            &mut self.b_c,
            &mut self.b_u,
            &mut self.b_f,
            &mut self.b_o,
        ]
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match input {
            [n, t, f] if *f == self.input_size && *t > 0 => Ok(vec![*n, self.hidden_size]),
            other => Err(Error::shape(format!("LSTM cannot take {other:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_cell_from_zero_state() {
        let cell = LstmCell::zeros(3, 2);
        let (a, c) = lstm_step(&cell, &[0.0; 3], &[0.0; 3], &[1.0, -1.0]).unwrap();
        assert_eq!(a, vec![0.0; 3]);
        assert_eq!(c, vec![0.0; 3]);
    }

    #[test]
    fn zero_cell_halves_memory() {
        // Gates all 0.5, candidate 0: c = 0.5 * c_prev, a = 0.5 * tanh(c).
        let cell = LstmCell::zeros(1, 1);
        let (a, c) = lstm_step(&cell, &[0.0], &[1.0], &[0.3]).unwrap();
        assert_eq!(c, vec![0.5]);
        assert_eq!(a, vec![0.5 * 0.5f64.tanh()]);
        assert!((a[0] - 0.23106).abs() < 1e-5);
    }

    #[test]
    fn saturated_forget_gate_keeps_memory() {
        let mut cell = LstmCell::zeros(1, 1);
        cell.b_f = vec![50.0];
        cell.w_c = vec![0.0, 2.0];
        let x = [0.4];
        let s = lstm_step_full(&cell, &[0.0], &[1.7], &x).unwrap();
        let expected = s.update[0] * s.candidate[0] + 1.7;
        assert!((s.c[0] - expected).abs() < 1e-12);
        assert!(s.forget[0] > 1.0 - 1e-15);
    }

    #[test]
    fn output_length_is_hidden_size() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let layer = Lstm::new("lstm", 24, 20, &mut rng);
        let seq: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64 * 0.1; 24]).collect();
        assert_eq!(lstm_many_to_one(&layer.cell(), &seq).unwrap().len(), 20);
        assert!(lstm_many_to_one(&layer.cell(), &[]).is_err());
    }

    #[test]
    fn single_step_sequence_equals_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cell = Lstm::new("lstm", 3, 4, &mut rng).cell();
        let x = vec![0.2, -0.1, 0.5];
        let (a, _) = lstm_step(&cell, &[0.0; 4], &[0.0; 4], &x).unwrap();
        assert_eq!(lstm_many_to_one(&cell, &[x]).unwrap(), a);
    }

    #[test]
    fn layer_matches_functional_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut layer = Lstm::new("lstm", 2, 3, &mut rng);
        let data: Vec<f64> = (0..2 * 4 * 2).map(|_| rng.random_range(-1.0..1.0)).collect();
        let input = Tensor::new(vec![2, 4, 2], data.clone()).unwrap();
        let out = layer.forward(&input, false).unwrap();
        let cell = layer.cell();
        for s in 0..2 {
            let seq: Vec<Vec<f64>> = (0..4).map(|t| data[(s * 4 + t) * 2..][..2].to_vec()).collect();
            assert_eq!(&out.data()[s * 3..][..3], lstm_many_to_one(&cell, &seq).unwrap().as_slice());
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let cell = LstmCell::zeros(2, 2);
        assert!(lstm_step(&cell, &[0.0; 2], &[0.0; 2], &[0.0; 3]).is_err());
    }
}
