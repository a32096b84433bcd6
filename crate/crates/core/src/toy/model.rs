use std::io::{Read, Write};

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::loss::{contrastive, LossGrad};
use super::mlp::Mlp;
use crate::error::{Error, Result};
use crate::ratio::Flavor;

const MAGIC: &[u8; 4] = b"TOY1";
/// Upper bound on the learned logit scale.
pub const MAX_LOGIT_SCALE: f64 = 100.0;

/// Shape and calibration metadata for a dual encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelHeader {
    pub flavor: Flavor,
    pub k: usize,
    pub d: usize,
    pub hidden: usize,
    pub embed_dim: usize,
    /// Image inputs are divided by this before the first layer.
    pub input_scale: f64,
    /// Negatives per positive seen in training (batch − 1).
    pub nu: f64,
    pub tensors: Vec<TensorInfo>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub shape: Vec<usize>,
}

/// Image MLP, label MLP, log logit scale and logit bias.
#[derive(Debug, Clone, PartialEq)]
pub struct DualEncoder {
    pub flavor: Flavor,
    pub k: usize,
    pub input_scale: f64,
    pub nu: f64,
    pub image: Mlp,
    pub text: Mlp,
    pub log_scale: f64,
    pub bias: f64,
}

/// Output of a full forward/backward pass on one batch.
pub struct BatchGrad {
    pub loss: f64,
    pub grad: DualEncoder,
}

impl DualEncoder {
    #[allow(clippy::too_many_arguments)]
    pub fn init<R: Rng>(
        rng: &mut R,
        flavor: Flavor,
        k: usize,
        d: usize,
        hidden: usize,
        embed_dim: usize,
        input_scale: f64,
        init_scale: f64,
        init_bias: f64,
    ) -> Self {
        let image = Mlp::init(rng, [d, hidden, hidden, embed_dim]);
        let text = Mlp::init(rng, [k, hidden, hidden, embed_dim]);
        Self {
            flavor,
            k,
            input_scale,
            nu: 1.0,
            image,
            text,
            log_scale: init_scale.ln(),
            bias: if flavor == Flavor::SigmoidContrastive { init_bias } else { 0.0 },
        }
    }

    pub fn d(&self) -> usize {
        self.image.dims()[0]
    }

    pub fn logit_scale(&self) -> f64 {
        self.log_scale.exp()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            image: self.image.zeros_like(),
            text: self.text.zeros_like(),
            log_scale: 0.0,
            bias: 0.0,
            ..self.clone()
        }
    }

    fn one_hot(&self, labels: &[usize]) -> Array2<f64> {
        let mut x = Array2::zeros((labels.len(), self.k));
        for (r, &l) in labels.iter().enumerate() {
            x[[r, l]] = 1.0;
        }
        x
    }

    pub fn embed_images(&self, images: ArrayView2<f64>) -> Array2<f64> {
        let x = &images / self.input_scale;
        self.image.forward(x.view()).out
    }

    pub fn embed_labels(&self, labels: &[usize]) -> Array2<f64> {
        self.text.forward(self.one_hot(labels).view()).out
    }

    /// Unit embeddings of every label, row `k` for label `k`.
    pub fn label_table(&self) -> Array2<f64> {
        let all: Vec<usize> = (0..self.k).collect();
        self.embed_labels(&all)
    }

    /// Loss on aligned `(labels, images)` and gradients of every parameter.
    pub fn loss_and_grad(&self, images: ArrayView2<f64>, labels: &[usize], weights: &[f64]) -> BatchGrad {
        let x = &images / self.input_scale;
        let fi = self.image.forward(x.view());
        let ft = self.text.forward(self.one_hot(labels).view());
        let LossGrad { loss, d_images, d_texts, d_log_scale, d_bias } =
            contrastive(&fi.out, &ft.out, self.log_scale, self.bias, self.flavor, weights);
        let grad = DualEncoder {
            image: self.image.backward(&fi, &d_images),
            text: self.text.backward(&ft, &d_texts),
            log_scale: d_log_scale,
            bias: if self.flavor == Flavor::SigmoidContrastive { d_bias } else { 0.0 },
            ..self.clone()
        };
        BatchGrad { loss, grad }
    }

    pub fn loss(&self, images: ArrayView2<f64>, labels: &[usize], weights: &[f64]) -> f64 {
        let fi = self.embed_images(images);
        let ft = self.embed_labels(labels);
        contrastive(&fi, &ft, self.log_scale, self.bias, self.flavor, weights).loss
    }

    /// Named tensors in serialization order.
    pub fn tensor_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for tower in ["image", "text"] {
            for l in 0..3 {
                names.push(format!("{tower}.w{l}"));
                names.push(format!("{tower}.b{l}"));
            }
        }
        names.push("log_scale".into());
        names.push("bias".into());
        names
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut v = self.image.tensors();
        v.extend(self.text.tensors());
        v.push(std::slice::from_ref(&self.log_scale));
        v.push(std::slice::from_ref(&self.bias));
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.image.tensors_mut();
        v.extend(self.text.tensors_mut());
        v.push(std::slice::from_mut(&mut self.log_scale));
        v.push(std::slice::from_mut(&mut self.bias));
        v
    }

    pub fn header(&self) -> ModelHeader {
        let mut shapes = self.image.shapes();
        shapes.extend(self.text.shapes());
        shapes.push(vec![1]);
        shapes.push(vec![1]);
        let dims = self.image.dims();
        ModelHeader {
            flavor: self.flavor,
            k: self.k,
            d: dims[0],
            hidden: dims[1],
            embed_dim: dims[3],
            input_scale: self.input_scale,
            nu: self.nu,
            tensors: self
                .tensor_names()
                .into_iter()
                .zip(shapes)
                .map(|(name, shape)| TensorInfo { name, shape })
                .collect(),
        }
    }

    /// `TOY1`, u64 LE header length, JSON header, then every tensor as f64 LE.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let header = serde_json::to_vec(&self.header())?;
        w.write_all(MAGIC)?;
        w.write_all(&(header.len() as u64).to_le_bytes())?;
        w.write_all(&header)?;
        for t in self.tensors() {
            for v in t {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::format("not a toy parameter file"));
        }
        let mut len = [0u8; 8];
        r.read_exact(&mut len)?;
        let len = u64::from_le_bytes(len) as usize;
        if len > 1 << 24 {
            return Err(Error::format("parameter header too large"));
        }
        let mut header = vec![0u8; len];
        r.read_exact(&mut header)?;
        let h: ModelHeader = serde_json::from_slice(&header)?;
        if h.k == 0 || h.d == 0 || h.hidden == 0 || h.embed_dim == 0 {
            return Err(Error::format("parameter header has a zero dimension"));
        }
        let mut model = Self {
            flavor: h.flavor,
            k: h.k,
            input_scale: h.input_scale,
            nu: h.nu,
            image: Mlp::zeros([h.d, h.hidden, h.hidden, h.embed_dim]),
            text: Mlp::zeros([h.k, h.hidden, h.hidden, h.embed_dim]),
            log_scale: 0.0,
            bias: 0.0,
        };
        if model.header() != h {
            return Err(Error::format("parameter header tensor list is inconsistent"));
        }
        let mut buf = [0u8; 8];
        for t in model.tensors_mut() {
            for v in t.iter_mut() {
                r.read_exact(&mut buf)?;
                *v = f64::from_le_bytes(buf);
            }
        }
        if model.tensors().iter().any(|t| t.iter().any(|v| !v.is_finite())) {
            return Err(Error::format("non-finite parameter"));
        }
        Ok(model)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model(flavor: Flavor, seed: u64) -> DualEncoder {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DualEncoder::init(&mut rng, flavor, 4, 3, 6, 5, 2.0, 10.0, -10.0)
    }

    #[test]
    fn round_trip_is_exact() {
        let m = model(Flavor::SigmoidContrastive, 3);
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        let back = DualEncoder::read_from(buf.as_slice()).unwrap();
        assert_eq!(m, back);
        let mut again = Vec::new();
        back.write_to(&mut again).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn corrupt_files_are_format_errors() {
        let m = model(Flavor::SoftmaxContrastive, 0);
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(DualEncoder::read_from(bad.as_slice()), Err(Error::Format(_))));
        assert!(DualEncoder::read_from(&buf[..buf.len() - 3]).is_err());
    }

    #[test]
    fn softmax_flavor_has_no_bias_gradient() {
        let m = model(Flavor::SoftmaxContrastive, 1);
        let imgs = Array2::from_shape_fn((4, 3), |(i, j)| (i + j) as f64);
        let g = m.loss_and_grad(imgs.view(), &[0, 1, 2, 3], &[1.0; 4]);
        assert_eq!(g.grad.bias, 0.0);
        assert_eq!(m.bias, 0.0);
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(32))]

        #[test]
        fn embeddings_are_unit_norm(
            seed in 0u64..1000,
            sigmoid: bool,
            x in proptest::collection::vec(-1e3f64..1e3, 15),
        ) {
            let flavor = if sigmoid { Flavor::SigmoidContrastive } else { Flavor::SoftmaxContrastive };
            let m = model(flavor, seed);
            let images = ndarray::Array2::from_shape_vec((5, 3), x).unwrap();
            let e = m.embed_images(images.view());
            for row in e.outer_iter().chain(m.label_table().outer_iter()) {
                proptest::prop_assert!((row.dot(&row).sqrt() - 1.0).abs() <= 1e-12);
            }
        }
    }
}
