//! Three-layer tanh MLP whose output rows are projected onto the unit sphere.
//! Forward keeps the activations needed for a hand-written backward pass.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub w: [Array2<f64>; 3],
    pub b: [Array1<f64>; 3],
}

/// Activations from a forward pass.
pub struct Forward {
    input: Array2<f64>,
    a1: Array2<f64>,
    a2: Array2<f64>,
    norms: Array1<f64>,
    /// Unit-norm outputs, one row per input.
    pub out: Array2<f64>,
}

impl Mlp {
    pub fn init<R: Rng>(rng: &mut R, dims: [usize; 4]) -> Self {
        let layer = |rng: &mut R, fan_in: usize, fan_out: usize| {
            let sd = 1.0 / (fan_in as f64).sqrt();
            Array2::from_shape_fn((fan_in, fan_out), |_| {
                let z: f64 = StandardNormal.sample(rng);
                sd * z
            })
        };
        let w0 = layer(rng, dims[0], dims[1]);
        let w1 = layer(rng, dims[1], dims[2]);
        let w2 = layer(rng, dims[2], dims[3]);
        Self {
            w: [w0, w1, w2],
            b: [Array1::zeros(dims[1]), Array1::zeros(dims[2]), Array1::zeros(dims[3])],
        }
    }

    pub fn zeros(dims: [usize; 4]) -> Self {
        Self {
            w: [
                Array2::zeros((dims[0], dims[1])),
                Array2::zeros((dims[1], dims[2])),
                Array2::zeros((dims[2], dims[3])),
            ],
            b: [Array1::zeros(dims[1]), Array1::zeros(dims[2]), Array1::zeros(dims[3])],
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            w: self.w.clone().map(|w| Array2::zeros(w.raw_dim())),
            b: self.b.clone().map(|b| Array1::zeros(b.raw_dim())),
        }
    }

    pub fn dims(&self) -> [usize; 4] {
        [self.w[0].nrows(), self.w[0].ncols(), self.w[1].ncols(), self.w[2].ncols()]
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Forward {
        let a1 = (x.dot(&self.w[0]) + &self.b[0]).mapv(f64::tanh);
        let a2 = (a1.dot(&self.w[1]) + &self.b[1]).mapv(f64::tanh);
        let z3 = a2.dot(&self.w[2]) + &self.b[2];
        let norms = z3.map_axis(Axis(1), |r| r.dot(&r).sqrt().max(1e-300));
        let out = &z3 / &norms.view().insert_axis(Axis(1));
        Forward { input: x.to_owned(), a1, a2, norms, out }
    }

    /// Gradients of the parameters given `∂L/∂out`.
    pub fn backward(&self, fwd: &Forward, d_out: &Array2<f64>) -> Mlp {
        // through the projection: (g − e⟨e, g⟩) / ‖z‖
        let proj = (&fwd.out * d_out).sum_axis(Axis(1));
        let dz3 = (d_out - &fwd.out * &proj.view().insert_axis(Axis(1)))
            / fwd.norms.view().insert_axis(Axis(1));
        let dw2 = fwd.a2.t().dot(&dz3);
        let db2 = dz3.sum_axis(Axis(0));
        let dz2 = dz3.dot(&self.w[2].t()) * fwd.a2.mapv(|a| 1.0 - a * a);
        let dw1 = fwd.a1.t().dot(&dz2);
        let db1 = dz2.sum_axis(Axis(0));
        let dz1 = dz2.dot(&self.w[1].t()) * fwd.a1.mapv(|a| 1.0 - a * a);
        let dw0 = fwd.input.t().dot(&dz1);
        let db0 = dz1.sum_axis(Axis(0));
        Mlp { w: [dw0, dw1, dw2], b: [db0, db1, db2] }
    }

    /// Tensors in a fixed order: `w0, b0, w1, b1, w2, b2`.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut v = Vec::with_capacity(6);
        for l in 0..3 {
            v.push(self.w[l].as_slice().expect("standard layout"));
            v.push(self.b[l].as_slice().expect("standard layout"));
        }
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = Vec::with_capacity(6);
        for (w, b) in self.w.iter_mut().zip(self.b.iter_mut()) {
            v.push(w.as_slice_mut().expect("standard layout"));
            v.push(b.as_slice_mut().expect("standard layout"));
        }
        v
    }

    pub fn shapes(&self) -> Vec<Vec<usize>> {
        let mut v = Vec::with_capacity(6);
        for l in 0..3 {
            v.push(self.w[l].shape().to_vec());
            v.push(self.b[l].shape().to_vec());
        }
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn outputs_are_unit() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mlp = Mlp::init(&mut rng, [3, 8, 8, 4]);
        let x = Array2::from_shape_fn((5, 3), |(i, j)| (i as f64 - j as f64) * 0.3);
        let f = mlp.forward(x.view());
        for r in f.out.outer_iter() {
            assert!((r.dot(&r) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut mlp = Mlp::init(&mut rng, [3, 5, 4, 3]);
        let x = Array2::from_shape_fn((4, 3), |(i, j)| ((i * 3 + j) as f64).sin());
        let g = Array2::from_shape_fn((4, 3), |(i, j)| ((i + 2 * j) as f64).cos());
        let objective = |m: &Mlp| (&m.forward(x.view()).out * &g).sum();
        let grads = mlp.backward(&mlp.forward(x.view()), &g);
        let h = 1e-6;
        let analytic: Vec<Vec<f64>> = grads.tensors().iter().map(|t| t.to_vec()).collect();
        for (t, a) in analytic.iter().enumerate() {
            for (i, &ai) in a.iter().enumerate() {
                let orig = mlp.tensors()[t][i];
                mlp.tensors_mut()[t][i] = orig + h;
                let up = objective(&mlp);
                mlp.tensors_mut()[t][i] = orig - h;
                let down = objective(&mlp);
                mlp.tensors_mut()[t][i] = orig;
                let fd = (up - down) / (2.0 * h);
                assert!((fd - ai).abs() < 1e-7, "tensor {t} entry {i}: {fd} vs {ai}");
            }
        }
    }
}
