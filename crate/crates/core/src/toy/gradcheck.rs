use ndarray::ArrayView2;

use super::model::DualEncoder;

#[derive(Debug, Clone, PartialEq)]
pub struct TensorCheck {
    pub name: String,
    pub analytic_norm: f64,
    pub rel_error: f64,
}

/// Compare backprop gradients with central differences, tensor by tensor.
///
/// The relative error is `‖g − ĝ‖ / max(‖g‖, ‖ĝ‖)`, taken as zero when both
/// norms are negligible (the bias of the softmax flavor).
pub fn gradient_check(
    model: &DualEncoder,
    images: ArrayView2<f64>,
    labels: &[usize],
    weights: &[f64],
    h: f64,
) -> Vec<TensorCheck> {
    let analytic = model.loss_and_grad(images, labels, weights).grad;
    let names = model.tensor_names();
    let grads: Vec<Vec<f64>> = analytic.tensors().iter().map(|t| t.to_vec()).collect();
    let mut probe = model.clone();
    let mut out = Vec::with_capacity(names.len());
    for (t, (name, g)) in names.into_iter().zip(&grads).enumerate() {
        let mut diff = 0.0;
        let mut na = 0.0;
        let mut nf = 0.0;
        for (i, &ga) in g.iter().enumerate() {
            let orig = probe.tensors()[t][i];
            probe.tensors_mut()[t][i] = orig + h;
            let up = probe.loss(images, labels, weights);
            probe.tensors_mut()[t][i] = orig - h;
            let down = probe.loss(images, labels, weights);
            probe.tensors_mut()[t][i] = orig;
            let fd = (up - down) / (2.0 * h);
            diff += (ga - fd) * (ga - fd);
            na += ga * ga;
            nf += fd * fd;
        }
        let (diff, na, nf) = (diff.sqrt(), na.sqrt(), nf.sqrt());
        let denom = na.max(nf);
        let rel_error = if denom < 1e-10 { 0.0 } else { diff / denom };
        out.push(TensorCheck { name, analytic_norm: na, rel_error });
    }
    out
}
