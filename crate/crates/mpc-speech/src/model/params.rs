//! Named parameter trees and their initialization.

use std::collections::BTreeMap;

use crate::numerics::{Graph, NodeId, Rng, Tensor};

use super::config::{ModelConfig, Vocab};
use super::ModelError;

/// A named, ordered tree of parameter tensors. Iteration order is the sorted
/// name order, which checkpointing and the optimizer rely on.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ModelParams {
    pub tensors: BTreeMap<String, Tensor>,
}

impl ModelParams {
    pub fn get(&self, name: &str) -> &Tensor {
        self.tensors
            .get(name)
            .unwrap_or_else(|| panic!("missing parameter tensor {name:?}"))
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) {
        let name = name.into();
        assert!(self.tensors.insert(name.clone(), t).is_none(), "duplicate tensor {name:?}");
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    /// Total scalar parameter count.
    pub fn num_params(&self) -> usize {
        self.tensors.values().map(Tensor::numel).sum()
    }
}

/// Graph handles for every tensor of a parameter tree.
pub struct BoundParams {
    nodes: BTreeMap<String, NodeId>,
}

impl BoundParams {
    pub fn n(&self, name: &str) -> NodeId {
        *self
            .nodes
            .get(name)
            .unwrap_or_else(|| panic!("parameter {name:?} not bound in this graph"))
    }
}

/// Register every tensor as a named leaf of `g`.
pub fn bind_all(g: &mut Graph, params: &ModelParams) -> BoundParams {
    let mut nodes = BTreeMap::new();
    for (name, t) in &params.tensors {
        nodes.insert(name.clone(), g.param(name, t.clone()));
    }
    BoundParams { nodes }
}

/// Xavier-uniform weight: entries drawn from
/// `U(-sqrt(6 / (fan_in + fan_out)), +sqrt(6 / (fan_in + fan_out)))`.
pub fn xavier(rows: usize, cols: usize, rng: &mut Rng) -> Tensor {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Tensor::new([rows, cols], (0..rows * cols).map(|_| rng.uniform(-limit, limit)).collect())
}

struct Builder<'r> {
    params: ModelParams,
    rng: &'r mut Rng,
}

impl Builder<'_> {
    fn weight(&mut self, name: &str, rows: usize, cols: usize) {
        let t = xavier(rows, cols, self.rng);
        self.params.insert(name, t);
    }

    fn bias(&mut self, name: &str, d: usize) {
        self.params.insert(name, Tensor::zeros([1, d]));
    }

    fn norm(&mut self, prefix: &str, d: usize) {
        self.params.insert(format!("{prefix}.g"), Tensor::full([1, d], 1.0));
        self.params.insert(format!("{prefix}.b"), Tensor::zeros([1, d]));
    }

    fn attention(&mut self, prefix: &str, d: usize) {
        // no key bias: a per-key constant shifts every logit in a row by the
        // same amount and cancels in the row softmax
        for part in ["q", "k", "v", "o"] {
            self.weight(&format!("{prefix}.w{part}"), d, d);
            if part != "k" {
                self.bias(&format!("{prefix}.b{part}"), d);
            }
        }
    }

    fn encoder_block(&mut self, prefix: &str, d: usize, ff: usize) {
        self.norm(&format!("{prefix}.ln1"), d);
        self.attention(&format!("{prefix}.att"), d);
        self.norm(&format!("{prefix}.ln2"), d);
        self.weight(&format!("{prefix}.ff.w1"), d, ff);
        self.bias(&format!("{prefix}.ff.b1"), ff);
        self.weight(&format!("{prefix}.ff.w2"), ff, d);
        self.bias(&format!("{prefix}.ff.b2"), d);
    }

    fn gru(&mut self, prefix: &str, input: usize, hidden: usize) {
        for gate in ["z", "r", "h"] {
            self.weight(&format!("{prefix}.wx{gate}"), input, hidden);
            self.weight(&format!("{prefix}.wh{gate}"), hidden, hidden);
            self.bias(&format!("{prefix}.b{gate}"), hidden);
        }
    }
}

fn encoder_trunk(b: &mut Builder, cfg: &ModelConfig) {
    let d = cfg.encoder.d_model;
    for i in 1..=cfg.encoder.num_blocks {
        b.encoder_block(&format!("enc.block{i}"), d, cfg.encoder.d_ff);
    }
    b.norm("enc.norm", d);
}

/// Parameters for masked-reconstruction pre-training: input projection from
/// stacked frames, encoder trunk, reconstruction head back to stacked-frame
/// width.
pub fn init_mpc_pretrain(cfg: &ModelConfig, rng: &mut Rng) -> ModelParams {
    let mut b = Builder { params: ModelParams::default(), rng };
    let d = cfg.encoder.d_model;
    let input = cfg.pretrain_input_dim();
    b.weight("enc.in_proj.w", input, d);
    b.bias("enc.in_proj.b", d);
    encoder_trunk(&mut b, cfg);
    b.weight("recon.w", d, input);
    b.bias("recon.b", input);
    b.params
}

/// The scalar count [`init_mpc_pretrain`] must produce, written out from the
/// shape rules: per block `4 d^2 + 2 d ff + ff + 8 d` (attention weights with
/// q/v/o biases, feed-forward weights and biases, two layer norms), plus the
/// input projection, final norm, and reconstruction head.
pub fn mpc_pretrain_param_count(cfg: &ModelConfig) -> usize {
    let d = cfg.encoder.d_model;
    let ff = cfg.encoder.d_ff;
    let input = cfg.pretrain_input_dim();
    let per_block = 4 * d * d + 3 * d      // wq/wk/wv/wo, biases for q/v/o
        + 2 * d * ff + ff + d              // ff.w1/b1/w2/b2
        + 4 * d;                           // ln1, ln2 scale and shift
    cfg.encoder.num_blocks * per_block
        + (input * d + d)                  // input projection
        + 2 * d                            // final norm
        + (d * input + input)              // reconstruction head
}

/// Parameters for the fine-tuning recognizer: raw-frame input projection,
/// encoder trunk, internal downsampling projections, Transformer decoder,
/// and the CTC head. No reconstruction head.
pub fn init_finetune_random(cfg: &ModelConfig, vocab: &Vocab, rng: &mut Rng) -> ModelParams {
    let mut b = Builder { params: ModelParams::default(), rng };
    let d = cfg.encoder.d_model;
    let v = vocab.size();
    b.weight("enc.in_proj.w", cfg.d_mel, d);
    b.bias("enc.in_proj.b", d);
    encoder_trunk(&mut b, cfg);
    for &pos in &cfg.encoder.downsample_after {
        b.weight(&format!("enc.ds{pos}.w"), 2 * d, d);
        b.bias(&format!("enc.ds{pos}.b"), d);
    }
    b.weight("dec.embed", v, d);
    for j in 1..=cfg.decoder_blocks {
        let p = format!("dec.block{j}");
        b.norm(&format!("{p}.ln1"), d);
        b.attention(&format!("{p}.self"), d);
        b.norm(&format!("{p}.ln2"), d);
        b.attention(&format!("{p}.cross"), d);
        b.norm(&format!("{p}.ln3"), d);
        b.weight(&format!("{p}.ff.w1"), d, cfg.encoder.d_ff);
        b.bias(&format!("{p}.ff.b1"), cfg.encoder.d_ff);
        b.weight(&format!("{p}.ff.w2"), cfg.encoder.d_ff, d);
        b.bias(&format!("{p}.ff.b2"), d);
    }
    b.norm("dec.norm", d);
    b.weight("dec.out.w", d, v);
    b.bias("dec.out.b", v);
    b.weight("ctc.w", d, v);
    b.bias("ctc.b", v);
    b.params
}

/// Recurrent predictor for the autoregressive objective: GRU over raw frames
/// plus a projection back to frame width.
pub fn init_apc(cfg: &ModelConfig, rng: &mut Rng) -> ModelParams {
    let mut b = Builder { params: ModelParams::default(), rng };
    let h = cfg.encoder.d_model;
    b.gru("apc.gru", cfg.d_mel, h);
    b.weight("apc.out.w", h, cfg.d_mel);
    b.bias("apc.out.b", cfg.d_mel);
    b.params
}

/// Contrastive model: frame encoder to the latent space, GRU context
/// aggregator, and one bilinear score per prediction offset.
pub fn init_cpc(cfg: &ModelConfig, num_offsets: usize, rng: &mut Rng) -> ModelParams {
    let mut b = Builder { params: ModelParams::default(), rng };
    let (z, h) = (cfg.encoder.d_model, cfg.encoder.d_model);
    b.weight("cpc.enc.w", cfg.d_mel, z);
    b.bias("cpc.enc.b", z);
    b.gru("cpc.gru", z, h);
    for k in 1..=num_offsets {
        b.weight(&format!("cpc.offset{k}.w"), z, h);
    }
    b.params
}

/// Head swap: start from fresh fine-tune parameters, then copy the encoder
/// trunk (blocks and final norm) from the pre-trained checkpoint. The
/// reconstruction head is dropped; internal downsampling projections, the
/// decoder, and the CTC head stay freshly initialized.
///
/// The raw-frame input projection is derived from the pre-trained
/// stacked-frame projection by summing over chunk slots:
/// `W[j] = sum_k W_pre[k * d_mel + j]`. On a chunk of equal frames this
/// reproduces the pre-trained projection exactly, so the transferred blocks
/// keep seeing the input basis they were trained in. A freshly drawn
/// projection instead feeds them an uncorrelated basis, which measurably
/// erases the pre-trained features.
pub fn init_finetune_model(
    pretrained: &ModelParams,
    cfg: &ModelConfig,
    vocab: &Vocab,
    rng: &mut Rng,
) -> Result<ModelParams, ModelError> {
    let mut fresh = init_finetune_random(cfg, vocab, rng);
    let mut report = Vec::new();
    let transferable: Vec<String> = fresh
        .tensors
        .keys()
        .filter(|n| n.starts_with("enc.block") || n.starts_with("enc.norm."))
        .cloned()
        .collect();
    for name in transferable {
        match pretrained.tensors.get(&name) {
            Some(src) if src.shape() == fresh.get(&name).shape() => {
                fresh.tensors.insert(name, src.clone());
            }
            Some(src) => report.push(format!(
                "{name}: checkpoint shape {:?} vs configured {:?}",
                src.shape(),
                fresh.get(&name).shape()
            )),
            None => report.push(format!("{name}: missing from checkpoint")),
        }
    }

    // downsampling starts as the average of each frame pair: content flows
    // through to the transferred blocks above it instead of being remixed by
    // a random projection
    let d = cfg.encoder.d_model;
    for &pos in &cfg.encoder.downsample_after {
        let mut w = Tensor::zeros([2 * d, d]);
        for c in 0..d {
            w.set(c, c, 0.5);
            w.set(d + c, c, 0.5);
        }
        fresh.tensors.insert(format!("enc.ds{pos}.w"), w);
        fresh.tensors.insert(format!("enc.ds{pos}.b"), Tensor::zeros([1, d]));
    }

    match (pretrained.tensors.get("enc.in_proj.w"), pretrained.tensors.get("enc.in_proj.b")) {
        (Some(w_pre), Some(b_pre)) => {
            let d_mel = cfg.d_mel;
            let d = cfg.encoder.d_model;
            if w_pre.cols() == d && w_pre.rows() % d_mel == 0 {
                let slots = w_pre.rows() / d_mel;
                let mut w = Tensor::zeros([d_mel, d]);
                for k in 0..slots {
                    for j in 0..d_mel {
                        for c in 0..d {
                            let cur = w.at(j, c);
                            w.set(j, c, cur + w_pre.at(k * d_mel + j, c));
                        }
                    }
                }
                fresh.tensors.insert("enc.in_proj.w".into(), w);
                fresh.tensors.insert("enc.in_proj.b".into(), b_pre.clone());
            } else {
                report.push(format!(
                    "enc.in_proj.w: checkpoint shape {:?} is not a stack of [{d_mel}, {d}] slots",
                    w_pre.shape()
                ));
            }
        }
        _ => report.push("enc.in_proj.w: missing from checkpoint".into()),
    }

    if report.is_empty() {
        Ok(fresh)
    } else {
        Err(ModelError::TransferMismatch { details: report.join("; ") })
    }
}
