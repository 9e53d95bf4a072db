//! Conv -> LSTM -> dense direction classifier.
//!
//! Three branches (raw OHLCV, price-like code, non-price-like code) each run
//! `MaxPool(3,3) -> Conv -> ReLU -> Conv -> ReLU`, shrinking the width to a
//! third. Branch outputs are stacked on channels and read as a sequence of
//! `width / 3` channel vectors by a many-to-one LSTM, whose final hidden
//! state feeds `Dense -> ReLU -> Dropout -> Dense` producing one logit.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{
    sigmoid, Activation, Checkpoint, Conv1d, ConvSpec, Dense, Dropout, Layer, Lstm, MaxPool1d, Param, Sequential,
    Tensor,
};

pub const POOL: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub conv_channels: [usize; 2],
    pub kernel_size: usize,
    pub hidden_size: usize,
    pub head_hidden: usize,
    pub dropout: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            conv_channels: [8, 8],
            kernel_size: 3,
            hidden_size: 20,
            head_hidden: 10,
            dropout: 0.3,
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        if self.conv_channels.contains(&0) || self.hidden_size == 0 || self.head_hidden == 0 {
            return Err(Error::invalid("classifier layer sizes must be >= 1"));
        }
        if self.kernel_size.is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "classifier kernel {} must be odd to preserve width",
                self.kernel_size
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid("dropout rate must be in [0, 1)"));
        }
        Ok(())
    }
}

/// The three input groups, instance-aligned, each `[N, C_g, 1, width]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierInput {
    pub ohlcv: Tensor,
    pub price_code: Tensor,
    pub non_price_code: Tensor,
}

impl ClassifierInput {
    pub fn len(&self) -> usize {
        self.ohlcv.dim(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn groups(&self) -> [&Tensor; 3] {
        [&self.ohlcv, &self.price_code, &self.non_price_code]
    }

    pub fn gather(&self, rows: &[usize]) -> Result<ClassifierInput> {
        Ok(ClassifierInput {
            ohlcv: self.ohlcv.gather_outer(rows)?,
            price_code: self.price_code.gather_outer(rows)?,
            non_price_code: self.non_price_code.gather_outer(rows)?,
        })
    }
}

pub struct ClassifierModel {
    pub config: ClassifierConfig,
    pub group_channels: [usize; 3],
    pub window: usize,
    pub branches: [Sequential; 3],
    pub lstm: Lstm,
    pub head: Sequential,
    trained: bool,
    seq_shape: Option<[usize; 3]>,
}

fn branch(name: &str, ci: usize, cfg: &ClassifierConfig, rng: &mut ChaCha8Rng) -> Result<Sequential> {
    let [c1, c2] = cfg.conv_channels;
    let k = cfg.kernel_size;
    Ok(Sequential::new(vec![
        Box::new(MaxPool1d::new(POOL, POOL)),
        Box::new(Conv1d::new(&format!("{name}.conv0"), ConvSpec::same(ci, c1, k), rng)?),
        Box::new(Activation::relu()),
        Box::new(Conv1d::new(&format!("{name}.conv1"), ConvSpec::same(c1, c2, k), rng)?),
        Box::new(Activation::relu()),
    ]))
}

/// `[N, C, 1, L]` to `[N, L, C]`.
fn to_sequence(x: &Tensor) -> Result<Tensor> {
    let [n, c, 1, l] = *x.shape() else {
        return Err(Error::shape(format!("expected [N, C, 1, L], got {:?}", x.shape())));
    };
    let src = x.data();
    let mut out = vec![0.0; src.len()];
    for s in 0..n {
        for ch in 0..c {
            for t in 0..l {
                out[(s * l + t) * c + ch] = src[(s * c + ch) * l + t];
            }
        }
    }
    Tensor::new(vec![n, l, c], out)
}

/// `[N, L, C]` back to `[N, C, 1, L]`.
fn from_sequence(x: &Tensor) -> Result<Tensor> {
    let [n, l, c] = *x.shape() else {
        return Err(Error::shape(format!("expected [N, L, C], got {:?}", x.shape())));
    };
    let src = x.data();
    let mut out = vec![0.0; src.len()];
    for s in 0..n {
        for t in 0..l {
            for ch in 0..c {
                out[(s * c + ch) * l + t] = src[(s * l + t) * c + ch];
            }
        }
    }
    Tensor::new(vec![n, c, 1, l], out)
}

impl ClassifierModel {
    pub fn new(group_channels: [usize; 3], window: usize, config: ClassifierConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        if group_channels.contains(&0) {
            return Err(Error::invalid("every classifier branch needs at least one channel"));
        }
        if window < POOL || !window.is_multiple_of(POOL) {
            return Err(Error::invalid(format!(
                "window {window} must be a positive multiple of {POOL}; pick e.g. 24"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let names = ["ohlcv", "price", "non_price"];
        let branches = [
            branch(names[0], group_channels[0], &config, &mut rng)?,
            branch(names[1], group_channels[1], &config, &mut rng)?,
            branch(names[2], group_channels[2], &config, &mut rng)?,
        ];
        let features = 3 * config.conv_channels[1];
        let lstm = Lstm::new("lstm", features, config.hidden_size, &mut rng);
        let head = Sequential::new(vec![
            Box::new(Dense::new("fc0", config.hidden_size, config.head_hidden, &mut rng)),
            Box::new(Activation::relu()),
            Box::new(Dropout::new(config.dropout, seed ^ 0x9e37_79b9_7f4a_7c15)?),
            Box::new(Dense::new("fc1", config.head_hidden, 1, &mut rng)),
        ]);
        Ok(Self {
            config,
            group_channels,
            window,
            branches,
            lstm,
            head,
            trained: false,
            seq_shape: None,
        })
    }

    pub fn sequence_len(&self) -> usize {
        self.window / POOL
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    pub fn mark_trained(&mut self) {
        self.trained = true;
    }

    fn check(&self, input: &ClassifierInput) -> Result<usize> {
        let n = input.len();
        for (g, t) in input.groups().into_iter().enumerate() {
            match t.shape() {
                [m, c, 1, w] if *m == n && *c == self.group_channels[g] && *w == self.window => {}
                other => {
                    return Err(Error::shape(format!(
                        "branch {g} expects [{n}, {}, 1, {}], got {other:?}",
                        self.group_channels[g], self.window
                    )))
                }
            }
        }
        Ok(n)
    }

    /// Logits `[N, 1]`, caching state for [`ClassifierModel::backward_logits`].
    pub fn forward_logits(&mut self, input: &ClassifierInput, training: bool) -> Result<Tensor> {
        self.check(input)?;
        let mut outs = Vec::with_capacity(3);
        for (b, x) in self.branches.iter_mut().zip(input.groups()) {
            outs.push(b.forward(x, training)?);
        }
        let stacked = Tensor::concat_channels(&outs.iter().collect::<Vec<_>>())?;
        let seq = to_sequence(&stacked)?;
        let s = seq.shape();
        self.seq_shape = Some([s[0], s[1], s[2]]);
        let h = self.lstm.forward(&seq, training)?;
        let logits = self.head.forward(&h, training)?;
        logits.ensure_finite("classifier logits")?;
        Ok(logits)
    }

    /// Back-propagates `d loss / d logits`; returns input gradients per group.
    pub fn backward_logits(&mut self, grad: &Tensor) -> Result<[Tensor; 3]> {
        self.seq_shape.take().ok_or(Error::BackwardBeforeForward("classifier"))?;
        let g = self.head.backward(grad)?;
        let g = self.lstm.backward(&g)?;
        let g = from_sequence(&g)?;
        let c2 = self.config.conv_channels[1];
        let parts = g.split_channels(&[c2, c2, c2])?;
        let mut grads = Vec::with_capacity(3);
        for (b, gp) in self.branches.iter_mut().zip(&parts) {
            grads.push(b.backward(gp)?);
        }
        let mut it = grads.into_iter();
        Ok([it.next().unwrap(), it.next().unwrap(), it.next().unwrap()])
    }

    /// σ per instance.
    pub fn forward(&mut self, input: &ClassifierInput, training: bool) -> Result<Vec<f64>> {
        Ok(self
            .forward_logits(input, training)?
            .data()
            .iter()
            .map(|&z| sigmoid(z))
            .collect())
    }

    /// Dropout-free σ for every instance, in chunks of `chunk` instances.
    pub fn predict_batch(&mut self, input: &ClassifierInput, chunk: usize) -> Result<Vec<f64>> {
        if !self.trained {
            return Err(Error::invalid("classifier has not been trained"));
        }
        let n = self.check(input)?;
        let mut out = Vec::with_capacity(n);
        let chunk = chunk.max(1);
        for start in (0..n).step_by(chunk) {
            let rows: Vec<usize> = (start..(start + chunk).min(n)).collect();
            out.extend(self.forward(&input.gather(&rows)?, false)?);
        }
        self.seq_shape = None;
        Ok(out)
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut p: Vec<&Param> = self.branches.iter().flat_map(|b| b.params()).collect();
        p.extend(self.lstm.params());
        p.extend(self.head.params());
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p: Vec<&mut Param> = self.branches.iter_mut().flat_map(|b| b.params_mut()).collect();
        p.extend(self.lstm.params_mut());
        p.extend(self.head.params_mut());
        p
    }

    /// Intermediate shapes for one instance batch of size `n`.
    pub fn shape_trace(&self, n: usize) -> Result<Vec<(String, Vec<usize>)>> {
        let mut out = Vec::new();
        for (g, b) in self.branches.iter().enumerate() {
            for (kind, shape) in b.shape_trace(&[n, self.group_channels[g], 1, self.window])? {
                out.push((format!("branch{g}.{kind}"), shape));
            }
        }
        let seq = vec![n, self.sequence_len(), 3 * self.config.conv_channels[1]];
        out.push(("sequence".into(), seq.clone()));
        let h = self.lstm.output_shape(&seq)?;
        out.push(("lstm".into(), h.clone()));
        for (kind, shape) in self.head.shape_trace(&h)? {
            out.push((format!("head.{kind}"), shape));
        }
        Ok(out)
    }

    pub fn to_checkpoint(&self, mut meta: BTreeMap<String, String>) -> Result<Checkpoint> {
        meta.insert("model".into(), "classifier".into());
        meta.insert(
            "classifier_config".into(),
            serde_json::to_string(&self.config).map_err(|e| Error::Format(e.to_string()))?,
        );
        meta.insert(
            "group_channels".into(),
            self.group_channels.map(|c| c.to_string()).join(","),
        );
        meta.insert("window".into(), self.window.to_string());
        meta.insert("trained".into(), self.trained.to_string());
        Ok(Checkpoint::from_params(meta, &self.params()))
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let get = |k: &str| {
            ckpt.meta
                .get(k)
                .ok_or_else(|| Error::Format(format!("classifier checkpoint lacks `{k}`")))
        };
        if get("model")? != "classifier" {
            return Err(Error::Format("checkpoint is not a classifier".into()));
        }
        let config: ClassifierConfig =
            serde_json::from_str(get("classifier_config")?).map_err(|e| Error::Format(e.to_string()))?;
        let groups: Vec<usize> = get("group_channels")?
            .split(',')
            .map(|s| s.parse().map_err(|_| Error::Format("bad group_channels".into())))
            .collect::<Result<_>>()?;
        let [a, b, c] = groups[..] else {
            return Err(Error::Format("group_channels needs three entries".into()));
        };
        let window = get("window")?
            .parse()
            .map_err(|_| Error::Format("bad window".into()))?;
        let mut model = Self::new([a, b, c], window, config, 0)?;
        ckpt.restore(&mut model.params_mut())?;
        model.trained = get("trained")? == "true";
        Ok(model)
    }
}

/// The whole classifier as one layer over channel-concatenated input
/// `[N, C_ohlcv + C_price + C_non_price, 1, width]`, emitting logits.
impl Layer for ClassifierModel {
    fn kind(&self) -> &'static str {
        "classifier"
    }

    fn forward(&mut self, input: &Tensor, training: bool) -> Result<Tensor> {
        let mut parts = input.split_channels(&self.group_channels)?.into_iter();
        let input = ClassifierInput {
            ohlcv: parts.next().unwrap(),
            price_code: parts.next().unwrap(),
            non_price_code: parts.next().unwrap(),
        };
        self.forward_logits(&input, training)
    }

    fn backward(&mut self, grad_output: &Tensor) -> Result<Tensor> {
        let [a, b, c] = self.backward_logits(grad_output)?;
        Tensor::concat_channels(&[&a, &b, &c])
    }

    fn params(&self) -> Vec<&Param> {
        ClassifierModel::params(self)
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        ClassifierModel::params_mut(self)
    }

    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let total: usize = self.group_channels.iter().sum();
        match input {
            [n, c, 1, w] if *c == total && *w == self.window => Ok(vec![*n, 1]),
            other => Err(Error::shape(format!("classifier cannot take {other:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_input(n: usize, groups: [usize; 3], w: usize, seed: u64) -> ClassifierInput {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = |c: usize| {
            Tensor::new(vec![n, c, 1, w], (0..n * c * w).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
        };
        ClassifierInput {
            ohlcv: t(groups[0]),
            price_code: t(groups[1]),
            non_price_code: t(groups[2]),
        }
    }

    #[test]
    fn shape_audit_window_24() {
        let m = ClassifierModel::new([5, 5, 5], 24, ClassifierConfig::default(), 1).unwrap();
        assert_eq!(m.sequence_len(), 8);
        let trace = m.shape_trace(4).unwrap();
        let get = |k: &str| trace.iter().find(|(n, _)| n == k).unwrap().1.clone();
        assert_eq!(get("branch0.maxpool1d"), vec![4, 5, 1, 8]);
        assert_eq!(get("sequence"), vec![4, 8, 24]);
        assert_eq!(get("lstm"), vec![4, 20]);
        assert_eq!(trace.last().unwrap().1, vec![4, 1]);
    }

    #[test]
    fn output_in_unit_interval() {
        let mut m = ClassifierModel::new([5, 3, 4], 24, ClassifierConfig::default(), 2).unwrap();
        let x = random_input(6, [5, 3, 4], 24, 3);
        let s = m.forward(&x, false).unwrap();
        assert_eq!(s.len(), 6);
        assert!(s.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn zero_head_gives_half() {
        let mut m = ClassifierModel::new([2, 2, 2], 6, ClassifierConfig::default(), 2).unwrap();
        for p in m.head.params_mut() {
            p.value.fill(0.0);
        }
        let x = random_input(3, [2, 2, 2], 6, 1);
        assert_eq!(m.forward(&x, true).unwrap(), vec![0.5; 3]);
    }

    #[test]
    fn rejects_bad_windows() {
        let err = ClassifierModel::new([2, 2, 2], 25, ClassifierConfig::default(), 0).err().unwrap();
        assert!(err.to_string().contains("multiple of 3"));
        let mut m = ClassifierModel::new([2, 2, 2], 6, ClassifierConfig::default(), 0).unwrap();
        let mut x = random_input(2, [2, 2, 2], 6, 0);
        x.price_code = random_input(2, [2, 2, 2], 9, 0).price_code;
        assert!(m.forward(&x, false).is_err());
    }

    #[test]
    fn predict_requires_training_and_is_permutation_equivariant() {
        let mut m = ClassifierModel::new([2, 2, 2], 6, ClassifierConfig::default(), 4).unwrap();
        let x = random_input(5, [2, 2, 2], 6, 9);
        assert!(m.predict_batch(&x, 2).is_err());
        m.mark_trained();
        let a = m.predict_batch(&x, 2).unwrap();
        let perm = [4, 2, 0, 3, 1];
        let b = m.predict_batch(&x.gather(&perm).unwrap(), 3).unwrap();
        for (i, &p) in perm.iter().enumerate() {
            assert_eq!(a[p], b[i]);
        }
        let dup = m.predict_batch(&x.gather(&[1, 1]).unwrap(), 64).unwrap();
        assert_eq!(dup[0], dup[1]);
    }

    #[test]
    fn checkpoint_roundtrip() {
        let mut m = ClassifierModel::new([2, 3, 2], 6, ClassifierConfig::default(), 4).unwrap();
        m.mark_trained();
        let bytes = m.to_checkpoint(BTreeMap::new()).unwrap().to_bytes();
        let mut back = ClassifierModel::from_checkpoint(&Checkpoint::from_bytes(&bytes).unwrap()).unwrap();
        assert!(back.is_trained());
        let x = random_input(3, [2, 3, 2], 6, 1);
        assert_eq!(back.predict_batch(&x, 8).unwrap(), m.predict_batch(&x, 8).unwrap());
    }

    #[test]
    fn sequence_transpose_roundtrip() {
        let x = random_input(2, [3, 1, 1], 6, 5).ohlcv;
        let s = to_sequence(&x).unwrap();
        assert_eq!(s.shape(), &[2, 6, 3]);
        assert_eq!(s.data()[(6 + 4) * 3 + 2], x.data()[(3 + 2) * 6 + 4]);
        assert_eq!(from_sequence(&s).unwrap(), x);
    }
}
