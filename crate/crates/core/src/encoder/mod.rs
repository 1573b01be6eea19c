//! 1D residual network mapping a multi-lead signal to a `channels × K` feature map.

mod normalize;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::SignalTensor;
use crate::error::{Error, Result};
use crate::nn::{fan_in_uniform, Graph, Matrix, ParamGroup, ParamId, ParamStore, Var};

pub use normalize::{normalize_signal, SignalNormalization, SignalStats};

/// Stem stride times max-pool stride times the three strided stages.
pub const DOWNSAMPLING: usize = 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    /// 18 or 34.
    pub depth: usize,
    pub input_leads: usize,
    pub stem_kernel: usize,
    pub stage_kernels: [usize; 4],
    /// Stage output widths; the last one is the embedding width.
    pub stage_widths: [usize; 4],
    /// Temporal positions after adaptive pooling.
    pub output_positions: usize,
    #[serde(default)]
    pub pretrain_classes: Option<usize>,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            depth: 34,
            input_leads: 12,
            stem_kernel: 9,
            stage_kernels: [9, 7, 7, 5],
            stage_widths: [64, 128, 256, 512],
            output_positions: 1,
            pretrain_classes: None,
        }
    }
}

impl EncoderConfig {
    pub fn blocks_per_stage(&self) -> [usize; 4] {
        match self.depth {
            18 => [2, 2, 2, 2],
            _ => [3, 4, 6, 3],
        }
    }

    pub fn output_channels(&self) -> usize {
        self.stage_widths[3]
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.depth != 18 && self.depth != 34 {
            problems.push(format!("encoder depth must be 18 or 34, got {}", self.depth));
        }
        if self.input_leads == 0 {
            problems.push("encoder input_leads must be at least 1".into());
        }
        for k in std::iter::once(self.stem_kernel).chain(self.stage_kernels) {
            if k % 2 == 0 {
                problems.push(format!("encoder kernels must be odd, got {k}"));
            }
        }
        if self.stage_widths.contains(&0) {
            problems.push("encoder stage widths must be positive".into());
        }
        if self.output_positions == 0 {
            problems.push("encoder output_positions (K) must be at least 1".into());
        }
        if self.pretrain_classes == Some(0) {
            problems.push("pretrain_classes must be positive when set".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }

    /// Exact trainable scalar count of the network built by [`Encoder::new`].
    pub fn parameter_count(&self) -> usize {
        let mut total = self.stem_kernel * self.input_leads * self.stage_widths[0];
        let mut c_in = self.stage_widths[0];
        for (stage, &blocks) in self.blocks_per_stage().iter().enumerate() {
            let (w, k) = (self.stage_widths[stage], self.stage_kernels[stage]);
            for b in 0..blocks {
                let stride = if stage > 0 && b == 0 { 2 } else { 1 };
                total += k * c_in * w + k * w * w;
                if stride != 1 || c_in != w {
                    total += c_in * w;
                }
                c_in = w;
            }
        }
        if let Some(classes) = self.pretrain_classes {
            total += c_in * classes + classes;
        }
        total
    }
}

struct Block {
    conv1: ParamId,
    conv2: ParamId,
    shortcut: Option<ParamId>,
    kernel: usize,
    stride: usize,
}

pub struct Encoder {
    config: EncoderConfig,
    stem: ParamId,
    blocks: Vec<Block>,
    head: Option<(ParamId, ParamId)>,
}

/// Encoder output; column `k` is the feature vector of the k-th temporal segment.
#[derive(Clone, Debug, PartialEq)]
pub struct EcgEmbedding {
    pub features: Matrix,
}

impl Encoder {
    /// Registers all encoder parameters in `store` with fan-in uniform initialization;
    /// the pre-training head starts at zero.
    pub fn new(config: EncoderConfig, store: &mut ParamStore, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let mut conv = |store: &mut ParamStore, name: String, c_out: usize, c_in: usize, k: usize| {
            store.add(name, ParamGroup::Encoder, fan_in_uniform(rng, c_out, c_in * k, c_in * k))
        };
        let stem = conv(store, "encoder.stem".into(), config.stage_widths[0], config.input_leads, config.stem_kernel);
        let mut blocks = Vec::new();
        let mut c_in = config.stage_widths[0];
        for (stage, &n) in config.blocks_per_stage().iter().enumerate() {
            let (w, k) = (config.stage_widths[stage], config.stage_kernels[stage]);
            for b in 0..n {
                let stride = if stage > 0 && b == 0 { 2 } else { 1 };
                let prefix = format!("encoder.stage{}.block{b}", stage + 1);
                let conv1 = conv(store, format!("{prefix}.conv1"), w, c_in, k);
                let conv2 = conv(store, format!("{prefix}.conv2"), w, w, k);
                let shortcut = (stride != 1 || c_in != w).then(|| conv(store, format!("{prefix}.shortcut"), w, c_in, 1));
                blocks.push(Block { conv1, conv2, shortcut, kernel: k, stride });
                c_in = w;
            }
        }
        let head = config.pretrain_classes.map(|classes| {
            (
                store.add("encoder.head.weight", ParamGroup::Encoder, Matrix::zeros(c_in, classes)),
                store.add("encoder.head.bias", ParamGroup::Encoder, Matrix::zeros(1, classes)),
            )
        });
        Ok(Self { config, stem, blocks, head })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn has_head(&self) -> bool {
        self.head.is_some()
    }

    /// `true` when parameter `id` belongs to the pre-training head.
    pub fn is_head_param(&self, id: ParamId) -> bool {
        self.head.is_some_and(|(w, b)| w == id || b == id)
    }

    fn check_input(&self, shape: (usize, usize)) -> Result<()> {
        let (leads, samples) = shape;
        if leads != self.config.input_leads {
            return Err(Error::Shape(format!("encoder expects {} leads, signal has {leads}", self.config.input_leads)));
        }
        if samples < DOWNSAMPLING {
            return Err(Error::Shape(format!("signal has {samples} samples, the encoder needs at least {DOWNSAMPLING}")));
        }
        Ok(())
    }

    /// Feature map of shape `output_channels × K` for a `leads × samples` input.
    pub fn forward(&self, g: &mut Graph, signal: Var) -> Result<Var> {
        self.check_input(g.shape(signal))?;
        let w = g.param(self.stem);
        let k = self.config.stem_kernel;
        let x = g.conv1d(signal, w, k, 2, k / 2);
        let x = g.relu(x);
        let mut x = g.max_pool1d(x, 3, 2, 1);
        for i in 0..self.blocks.len() {
            x = self.residual_block(g, i, x);
        }
        let len = g.shape(x).1;
        let pool = g.input(adaptive_pool_matrix(len, self.config.output_positions));
        Ok(g.matmul(x, pool))
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    /// `relu(conv2(relu(conv1(x))) + shortcut(x))` for block `index`.
    pub fn residual_block(&self, g: &mut Graph, index: usize, x: Var) -> Var {
        let b = &self.blocks[index];
        let w1 = g.param(b.conv1);
        let w2 = g.param(b.conv2);
        let h = g.conv1d(x, w1, b.kernel, b.stride, b.kernel / 2);
        let h = g.relu(h);
        let h = g.conv1d(h, w2, b.kernel, 1, b.kernel / 2);
        let skip = match b.shortcut {
            Some(id) => {
                let ws = g.param(id);
                g.conv1d(x, ws, 1, b.stride, 0)
            }
            None => x,
        };
        let sum = g.add(h, skip);
        g.relu(sum)
    }

    /// Class scores (`1 × classes`) from the mean feature column.
    pub fn pretrain_forward(&self, g: &mut Graph, features: Var) -> Result<Var> {
        let (w, b) = self.head.ok_or_else(|| Error::Unsupported("encoder has no pre-training head".into()))?;
        let ft = g.transpose(features);
        let mean = g.mean_rows(ft);
        let w = g.param(w);
        let b = g.param(b);
        let scores = g.matmul(mean, w);
        Ok(g.add_row(scores, b))
    }

    /// Frozen-parameter forward pass outside any training graph.
    pub fn embed(&self, store: &ParamStore, signal: &SignalTensor) -> Result<EcgEmbedding> {
        let mut g = Graph::new(store);
        let x = g.input(signal.to_matrix());
        let f = self.forward(&mut g, x)?;
        let features = g.value(f).clone();
        if !features.is_finite() {
            return Err(Error::NonFinite("encoder output".into()));
        }
        Ok(EcgEmbedding { features })
    }
}

/// `len × k` averaging matrix splitting `[0, len)` into `k` equal continuous bins.
/// Sample `i` covers `[i, i + 1)`; its weight in bin `j` is the overlap length
/// divided by the bin width `len / k`.
pub fn adaptive_pool_matrix(len: usize, k: usize) -> Matrix {
    let width = len as f64 / k as f64;
    let mut m = Matrix::zeros(len, k);
    for j in 0..k {
        let (lo, hi) = (j as f64 * width, (j + 1) as f64 * width);
        let first = lo.floor() as usize;
        let last = (hi.ceil() as usize).min(len);
        for i in first..last {
            let overlap = (hi.min(i as f64 + 1.0) - lo.max(i as f64)).max(0.0);
            if overlap > 0.0 {
                m.set(i, j, overlap / width);
            }
        }
    }
    m
}
