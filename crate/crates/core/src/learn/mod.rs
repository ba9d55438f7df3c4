//! Convolutional encoder-decoder surrogate for the ray-traced maps:
//! from-scratch forward/backward passes, SGD-momentum training, inference,
//! and evaluation metrics.
//!
//! The network maps a normalized elevation window (transmitter centered) to
//! a normalized gain map of the same size. All arithmetic is `f64`; every
//! layer's backward pass is hand-written and verified against central finite
//! differences. Weights persist as a JSON header plus `f32le` blob, the same
//! two-file pattern the raster containers use.

mod eval;
mod layers;
mod network;
mod tensor;
mod train;

pub use eval::{evaluate, metrics_from_predictions, predict_radio_map, EvalMetrics, PredictionPair};
pub use layers::masked_mse;
pub(crate) use network::{backward, forward_cached};
pub use network::{
    build_network, forward, forward_values, load_weights, save_weights, DecoderStage,
    EncoderBlock, EncoderStage, NetworkSpec, TensorInfo, Weights, WeightsHeader, ASPP_DILATIONS,
};
pub use tensor::Tensor;
pub use train::{
    fit, load_split_samples, train, train_step, write_history_csv, EpochRow, TrainConfig,
    TrainSample,
};

#[cfg(test)]
mod gradcheck {
    //! Whole-network gradient check: analytic gradients of the masked loss
    //! against central finite differences on a spec that exercises every
    //! layer kind.

    use super::layers::masked_mse;
    use super::network::{backward, build_network, forward_cached, NetworkSpec};
    use super::tensor::Tensor;
    use rand::Rng;

    #[test]
    fn toy_network_gradients_match_finite_differences() {
        let spec = NetworkSpec::toy();
        let w = build_network(&spec, 0xfd).unwrap();
        let px = spec.input_px;
        let mut rng = crate::rng::stream_rng(0xfd, "gradcheck-data", 0);
        let input = Tensor::from_vec(
            1,
            px,
            px,
            (0..px * px).map(|_| rng.gen_range(0.0..1.0)).collect(),
        );
        let target: Vec<f64> = (0..px * px).map(|_| rng.gen_range(0.1..0.9)).collect();
        let mut mask = vec![true; px * px];
        for i in 0..px {
            mask[i * px] = false;
        }

        let (out, caches) = forward_cached(&w, &input).unwrap();
        let (_, d_pred) = masked_mse(&out.data, &target, &mask).unwrap();
        let mut grad = vec![0.0; w.data.len()];
        backward(
            &w,
            &caches,
            Tensor::from_vec(1, px, px, d_pred),
            &mut grad,
        )
        .unwrap();

        // Spot-check a deterministic spread of parameters across the whole
        // vector; the acceptance suite sweeps every parameter.
        let stride = (w.data.len() / 257).max(1);
        let mut data = w.data.clone();
        let picked: Vec<usize> = (0..w.data.len()).step_by(stride).collect();
        let mut f = |values: &[f64]| {
            let mut probe = w.clone();
            probe.data.copy_from_slice(values);
            let (o, _) = forward_cached(&probe, &input).unwrap();
            masked_mse(&o.data, &target, &mask).unwrap().0
        };
        for &i in &picked {
            let keep = data[i];
            data[i] = keep + 1e-3;
            let up = f(&data);
            data[i] = keep - 1e-3;
            let down = f(&data);
            data[i] = keep;
            let fd_grad = (up - down) / 2e-3;
            let a = grad[i];
            let tol = 1e-2 * fd_grad.abs().max(a.abs()) + 1e-7;
            assert!(
                (fd_grad - a).abs() <= tol,
                "param {i}: analytic {a:.9} vs fd {fd_grad:.9}"
            );
        }
    }
}
