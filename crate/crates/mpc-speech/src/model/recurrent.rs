//! Strictly causal gated recurrence, the context aggregator for the
//! autoregressive and contrastive objectives.

use crate::numerics::{Graph, NodeId, Tensor};

use super::params::BoundParams;

/// Run a GRU left to right and return all hidden states `[T, H]`. The state
/// at position `t` depends only on inputs up to `t`. The initial state is
/// zero, so a model with all-zero weights and biases outputs zeros at every
/// step.
pub fn gru_forward(
    g: &mut Graph,
    bp: &BoundParams,
    prefix: &str,
    input: NodeId,
    hidden: usize,
) -> NodeId {
    let t = g.value(input).rows();
    assert!(t >= 1, "recurrence over an empty sequence");
    let wxz = bp.n(&format!("{prefix}.wxz"));
    let whz = bp.n(&format!("{prefix}.whz"));
    let bz = bp.n(&format!("{prefix}.bz"));
    let wxr = bp.n(&format!("{prefix}.wxr"));
    let whr = bp.n(&format!("{prefix}.whr"));
    let br = bp.n(&format!("{prefix}.br"));
    let wxh = bp.n(&format!("{prefix}.wxh"));
    let whh = bp.n(&format!("{prefix}.whh"));
    let bh = bp.n(&format!("{prefix}.bh"));

    let ones = g.constant(Tensor::full([1, hidden], 1.0));
    let mut h = g.constant(Tensor::zeros([1, hidden]));
    let mut states = Vec::with_capacity(t);
    for ti in 0..t {
        let x = g.row(input, ti);
        let xz = g.matmul(x, wxz);
        let hz = g.matmul(h, whz);
        let zs = g.add(xz, hz);
        let zb = g.add_row(zs, bz);
        let z = g.sigmoid(zb);

        let xr = g.matmul(x, wxr);
        let hr = g.matmul(h, whr);
        let rs = g.add(xr, hr);
        let rb = g.add_row(rs, br);
        let r = g.sigmoid(rb);

        let gated = g.mul(r, h);
        let xh = g.matmul(x, wxh);
        let hh = g.matmul(gated, whh);
        let cs = g.add(xh, hh);
        let cb = g.add_row(cs, bh);
        let cand = g.tanh(cb);

        let keep = g.sub(ones, z);
        let kept = g.mul(keep, h);
        let new = g.mul(z, cand);
        h = g.add(kept, new);
        states.push(h);
    }
    g.concat_rows(&states)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::config::ModelConfig;
    use crate::model::params::{bind_all, init_apc, ModelParams};
    use crate::numerics::{finite_diff_check, Rng};

    fn run(params: &ModelParams, input: &Tensor, hidden: usize) -> Tensor {
        let mut g = Graph::new();
        let bp = bind_all(&mut g, params);
        let x = g.constant(input.clone());
        let out = gru_forward(&mut g, &bp, "apc.gru", x, hidden);
        g.value(out).clone()
    }

    #[test]
    fn causality_future_inputs_do_not_leak_backward() {
        let cfg = ModelConfig::toy();
        let mut rng = Rng::new(31);
        let params = init_apc(&cfg, &mut rng);
        let h = cfg.encoder.d_model;
        let t = 9;
        let input = Tensor::new(
            [t, cfg.d_mel],
            (0..t * cfg.d_mel).map(|_| rng.uniform(-1.0, 1.0)).collect(),
        );
        let mut perturbed = input.clone();
        for j in 0..cfg.d_mel {
            perturbed.set(6, j, rng.uniform(-5.0, 5.0));
        }
        let a = run(&params, &input, h);
        let b = run(&params, &perturbed, h);
        for ti in 0..6 {
            for j in 0..h {
                assert_eq!(a.at(ti, j).to_bits(), b.at(ti, j).to_bits(), "leak at t={ti}");
            }
        }
        assert_ne!(a.row_slice(6), b.row_slice(6));
    }

    #[test]
    fn zero_weights_give_constant_zero_output() {
        let cfg = ModelConfig::toy();
        let h = cfg.encoder.d_model;
        let mut params = init_apc(&cfg, &mut Rng::new(32));
        for (_, t) in params.tensors.iter_mut() {
            *t = Tensor::zeros(t.shape().to_vec());
        }
        let input = Tensor::full([5, cfg.d_mel], 0.9);
        let out = run(&params, &input, h);
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradient_passes_finite_differences() {
        let cfg = ModelConfig {
            d_mel: 3,
            stack_factor: 2,
            encoder: crate::model::EncoderConfig {
                num_blocks: 1,
                d_model: 4,
                d_ff: 4,
                num_heads: 1,
                downsample_after: vec![],
            },
            decoder_blocks: 1,
            dropout: 0.0,
        };
        let mut rng = Rng::new(33);
        let params = init_apc(&cfg, &mut rng);
        let input = Tensor::new([4, 3], (0..12).map(|_| rng.uniform(-1.0, 1.0)).collect());
        let err = finite_diff_check(
            |g, p| {
                let mut mp = ModelParams::default();
                for (k, v) in p {
                    mp.tensors.insert(k.clone(), v.clone());
                }
                let bp = bind_all(g, &mp);
                let x = g.constant(input.clone());
                let states = gru_forward(g, &bp, "apc.gru", x, 4);
                let proj = g.affine(states, bp.n("apc.out.w"), bp.n("apc.out.b"));
                let sq = g.mul(proj, proj);
                g.mean_all(sq)
            },
            &params.tensors,
            1e-5,
        )
        .unwrap();
        assert!(err <= 1e-4, "fd error {err}");
    }
}
