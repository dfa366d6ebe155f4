//! Finite-difference verification of reverse-mode gradients.

use std::collections::BTreeMap;

use super::graph::{Graph, NodeId};
use super::tensor::Tensor;
use super::NumericsError;

/// Named parameter values handed to a graph builder.
pub type ParamValues = BTreeMap<String, Tensor>;

/// Build a [`ParamValues`] map from `(name, tensor)` pairs.
pub fn param_values<const N: usize>(pairs: [(&str, Tensor); N]) -> ParamValues {
    pairs.into_iter().map(|(n, t)| (n.to_string(), t)).collect()
}

/// Compare reverse-mode gradients against central finite differences.
///
/// `build` constructs the loss graph from the given parameter values and
/// returns the scalar loss node; it must register the parameters it uses via
/// [`Graph::param`] under the same names as in `params`, and it must be
/// deterministic (any randomness frozen before the check). The returned value
/// is the maximum relative error over all parameter elements, with
/// `max(|fd|, |grad|, 1e-8)` as the denominator.
pub fn finite_diff_check<F>(
    build: F,
    params: &ParamValues,
    step: f64,
) -> Result<f64, NumericsError>
where
    F: Fn(&mut Graph, &ParamValues) -> NodeId,
{
    assert!(step > 0.0, "finite-difference step must be positive, got {step}");

    let eval = |p: &ParamValues| -> f64 {
        let mut g = Graph::new();
        let loss = build(&mut g, p);
        g.value(loss).item()
    };

    let base_a = eval(params);
    let base_b = eval(params);
    if base_a.to_bits() != base_b.to_bits() {
        return Err(NumericsError::NonDeterministic { first: base_a, second: base_b });
    }

    let mut g = Graph::new();
    let loss = build(&mut g, params);
    let grads = g.backward(loss)?;

    let mut max_rel: f64 = 0.0;
    for (name, tensor) in params {
        let analytic = grads.get(name);
        for i in 0..tensor.numel() {
            let mut plus = params.clone();
            plus.get_mut(name).unwrap().data_mut()[i] += step;
            let mut minus = params.clone();
            minus.get_mut(name).unwrap().data_mut()[i] -= step;
            let fd = (eval(&plus) - eval(&minus)) / (2.0 * step);
            let an = analytic.map_or(0.0, |t| t.data()[i]);
            let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-8);
            if rel > max_rel {
                max_rel = rel;
            }
        }
    }
    Ok(max_rel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    #[test]
    fn quadratic_is_exact_to_roundoff() {
        let params = param_values([("p", Tensor::row(vec![1.5, -2.0, 0.25]))]);
        let err = finite_diff_check(
            |g, p| {
                let x = g.param("p", p["p"].clone());
                let sq = g.mul(x, x);
                g.sum_all(sq)
            },
            &params,
            1e-5,
        )
        .unwrap();
        assert!(err <= 1e-9, "quadratic error {err}");
    }

    #[test]
    fn linear_is_exact() {
        let params = param_values([("p", Tensor::row(vec![0.5, 2.0, -3.0, 1.0]))]);
        let err = finite_diff_check(
            |g, p| {
                let x = g.param("p", p["p"].clone());
                let w = g.constant(Tensor::new([4, 1], vec![2.0, -1.0, 0.5, 3.0]));
                let y = g.matmul(x, w);
                g.sum_all(y)
            },
            &params,
            1e-5,
        )
        .unwrap();
        assert!(err <= 1e-10, "linear error {err}");
    }

    #[test]
    fn nondeterministic_function_is_rejected() {
        use std::cell::Cell;
        let calls = Cell::new(0.0_f64);
        let params = param_values([("p", Tensor::row(vec![1.0]))]);
        let err = finite_diff_check(
            |g, p| {
                calls.set(calls.get() + 1.0);
                let x = g.param("p", p["p"].clone());
                let noise = g.constant(Tensor::row(vec![calls.get()]));
                let y = g.mul(x, noise);
                g.sum_all(y)
            },
            &params,
            1e-5,
        )
        .unwrap_err();
        assert!(matches!(err, NumericsError::NonDeterministic { .. }));
    }

    #[test]
    fn every_op_passes_fd_on_random_small_tensors() {
        // One mixed graph touching each differentiable op, 20 seeds.
        for seed in 0..20 {
            let mut rng = Rng::new(seed);
            let t = 2 + rng.below(4);
            let d = 2 + rng.below(4);
            let x = Tensor::new([t, d], (0..t * d).map(|_| rng.uniform(-1.5, 1.5)).collect());
            let w = Tensor::new([d, d], (0..d * d).map(|_| rng.uniform(-0.8, 0.8)).collect());
            let gamma = Tensor::new([1, d], (0..d).map(|_| rng.uniform(0.5, 1.5)).collect());
            let beta = Tensor::new([1, d], (0..d).map(|_| rng.uniform(-0.3, 0.3)).collect());
            let params = param_values([
                ("x", x),
                ("w", w),
                ("gamma", gamma),
                ("beta", beta),
            ]);
            let picks: Vec<usize> = (0..t).map(|i| i % d).collect();
            let err = finite_diff_check(
                |g, p| {
                    let x = g.param("x", p["x"].clone());
                    let w = g.param("w", p["w"].clone());
                    let gamma = g.param("gamma", p["gamma"].clone());
                    let beta = g.param("beta", p["beta"].clone());
                    let h = g.matmul(x, w);
                    let hb = g.add_row(h, beta);
                    let ln = g.layer_norm(hb, gamma, beta, 1e-5);
                    let sm = g.softmax_rows(ln);
                    let lsm = g.log_softmax_rows(h);
                    let mixed = g.add(sm, lsm);
                    let r = g.relu(mixed);
                    let s = g.sigmoid(mixed);
                    let th = g.tanh(mixed);
                    let e = g.exp(th);
                    let l = g.ln(e);
                    let a = g.abs(mixed);
                    let tr = g.transpose(mixed);
                    let tr2 = g.transpose(tr);
                    let lae = g.logaddexp(r, s);
                    let cat = g.concat_cols(&[lae, l, a, tr2]);
                    let sl = g.slice_cols(cat, 1, 2 * d);
                    let rows = g.slice_rows(sl, 0, t.min(2));
                    let gat = g.gather_rows(cat, &[0, t - 1, 0]);
                    let pick = g.pick_per_row(mixed, &picks);
                    let pr = g.pair_rows(cat);
                    let s1 = g.sum_all(rows);
                    let s2 = g.sum_all(gat);
                    let s3 = g.sum_all(pick);
                    let s4 = g.sum_all(pr);
                    let s5 = g.mean_all(cat);
                    let t1 = g.add(s1, s2);
                    let t2 = g.add(s3, s4);
                    let t3 = g.add(t1, t2);
                    let diff = g.sub(t3, s5);
                    let sc = g.scale(diff, 0.35);
                    let m = g.mul(sc, sc);
                    g.sum_all(m)
                },
                &params,
                1e-5,
            )
            .unwrap();
            assert!(err <= 1e-4, "seed {seed}: relative error {err}");
        }
    }
}
