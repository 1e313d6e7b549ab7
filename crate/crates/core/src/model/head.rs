use alloc::vec::Vec;

use crate::datamodel::ClassCatalog;
use crate::linalg::{self, Matrix};
use crate::{Error, Result};

/// Which parameter block a gradient is taken with respect to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Param {
    /// Stage 1: the encoder projection, adapter frozen.
    EncoderProj,
    /// Stage 2: the adapter, encoder projection frozen.
    Adapter,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpochRecord {
    pub stage: u8,
    pub epoch: usize,
    pub train_loss: f64,
    /// Top-1 accuracy on the validation set in percent, if one was given.
    pub val_accuracy: Option<f64>,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedHead {
    /// Adapter `W`, identity at initialisation.
    pub adapter: Matrix,
    /// Trainable stand-in for the image encoder, identity at initialisation.
    pub encoder_proj: Matrix,
    pub logit_scale: f64,
    pub history: Vec<EpochRecord>,
}

/// Intermediate values of one forward pass, kept for backprop.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// `encoder_proj · b`
    pub projected: Vec<f64>,
    /// `W · projected`
    pub adapted: Vec<f64>,
    /// `‖adapted‖`
    pub norm: f64,
    /// `adapted / norm`
    pub unit: Vec<f64>,
}

impl TrainedHead {
    /// Identity maps everywhere: plain zero-shot cosine classification.
    pub fn zero_shot(dim: usize, logit_scale: f64) -> Self {
        Self {
            adapter: Matrix::identity(dim),
            encoder_proj: Matrix::identity(dim),
            logit_scale,
            history: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.adapter.rows()
    }

    pub fn trace(&self, base: &[f64]) -> Result<ForwardTrace> {
        if base.len() != self.dim() {
            return Err(Error::DimMismatch {
                expected: self.dim(),
                got: base.len(),
            });
        }
        if base.iter().any(|x| !x.is_finite()) {
            return Err(Error::DegenerateVector);
        }
        let projected = self.encoder_proj.matvec(base);
        let adapted = self.adapter.matvec(&projected);
        let (unit, norm) = linalg::normalize(&adapted)?;
        Ok(ForwardTrace {
            projected,
            adapted,
            norm,
            unit,
        })
    }

    /// `normalize(W · encoder_proj · b)`
    pub fn forward(&self, base: &[f64]) -> Result<Vec<f64>> {
        Ok(self.trace(base)?.unit)
    }

    pub fn logits(&self, base: &[f64], text: &Matrix) -> Result<Vec<f64>> {
        Ok(cosine_logits(&self.forward(base)?, text, self.logit_scale))
    }

    pub fn predict(&self, base: &[f64], text: &Matrix) -> Result<usize> {
        Ok(argmax(&self.logits(base, text)?))
    }

    pub fn predict_with_catalog(&self, base: &[f64], catalog: &ClassCatalog) -> Result<usize> {
        self.predict(base, &catalog.text_matrix())
    }

    /// Loss and gradient for one example, accumulated into `grad` (which must
    /// be `d × d`). `adjust` is added to the logits before the softmax, as the
    /// balanced loss does.
    ///
    /// Backprop through `f = v / ‖v‖` uses `∂L/∂v = (I − f fᵀ) ∂L/∂f / ‖v‖`.
    pub fn accumulate_grad(
        &self,
        base: &[f64],
        target: &[f64],
        text: &Matrix,
        adjust: Option<&[f64]>,
        param: Param,
        grad: &mut Matrix,
    ) -> Result<f64> {
        let tr = self.trace(base)?;
        let mut logits = cosine_logits(&tr.unit, text, self.logit_scale);
        if let Some(adj) = adjust {
            logits.iter_mut().zip(adj).for_each(|(z, a)| *z += a);
        }
        let (loss, d_logits) = super::soft_ce_loss(&logits, target);

        let mut d_unit = text.matvec_t(&d_logits);
        d_unit.iter_mut().for_each(|g| *g *= self.logit_scale);
        let radial = linalg::dot(&tr.unit, &d_unit);
        let d_adapted: Vec<f64> = d_unit
            .iter()
            .zip(&tr.unit)
            .map(|(g, f)| (g - radial * f) / tr.norm)
            .collect();

        match param {
            Param::Adapter => grad.add_outer(1.0, &d_adapted, &tr.projected),
            Param::EncoderProj => {
                let d_projected = self.adapter.matvec_t(&d_adapted);
                grad.add_outer(1.0, &d_projected, base);
            }
        }
        Ok(loss)
    }

    pub fn param(&self, which: Param) -> &Matrix {
        match which {
            Param::Adapter => &self.adapter,
            Param::EncoderProj => &self.encoder_proj,
        }
    }

    pub fn param_mut(&mut self, which: Param) -> &mut Matrix {
        match which {
            Param::Adapter => &mut self.adapter,
            Param::EncoderProj => &mut self.encoder_proj,
        }
    }
}

/// `s · (f · t_k)` for each text feature row `t_k`.
pub fn cosine_logits(unit: &[f64], text: &Matrix, scale: f64) -> Vec<f64> {
    text.matvec(unit).into_iter().map(|c| scale * c).collect()
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = k;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use alloc::vec;
    use rand::Rng;

    fn random_matrix(d: usize, rng: &mut impl Rng) -> Matrix {
        Matrix::from_row_major(
            d,
            d,
            (0..d * d).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn identity_head_is_identity() {
        let h = TrainedHead::zero_shot(3, 30.0);
        let x = [0.6, 0.0, 0.8];
        assert_eq!(h.forward(&x).unwrap(), x.to_vec());
    }

    #[test]
    fn positive_scaling_cancels() {
        let mut h = TrainedHead::zero_shot(3, 30.0);
        h.adapter.scale(2.0);
        let x = [0.6, 0.0, 0.8];
        for (a, b) in h.forward(&x).unwrap().iter().zip(x) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn random_head_output_is_unit() {
        let mut rng = seed::rng(1);
        let h = TrainedHead {
            adapter: random_matrix(8, &mut rng),
            encoder_proj: random_matrix(8, &mut rng),
            ..TrainedHead::zero_shot(8, 30.0)
        };
        let x: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        assert!(linalg::is_unit(&h.forward(&x).unwrap(), 1e-12));
    }

    #[test]
    fn zero_and_nan_inputs_fail() {
        let h = TrainedHead::zero_shot(2, 1.0);
        assert_eq!(h.forward(&[0.0, 0.0]), Err(Error::DegenerateVector));
        assert_eq!(
            h.forward(&[f64::INFINITY, 0.0]),
            Err(Error::DegenerateVector)
        );
        assert!(matches!(h.forward(&[1.0]), Err(Error::DimMismatch { .. })));
    }

    #[test]
    fn logits_by_definition() {
        let text = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(cosine_logits(&[1.0, 0.0], &text, 1.0), vec![1.0, 0.0]);
        let text3 = Matrix::from_rows(&[vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]).unwrap();
        assert_eq!(
            cosine_logits(&[1.0, 0.0, 0.0], &text3, 30.0),
            vec![0.0, 0.0]
        );
        let l = cosine_logits(&[0.5, libm::sqrt(0.75)], &text, 30.0);
        assert!((l[0] - 15.0).abs() < 1e-12);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        assert_eq!(argmax(&[0.1, 0.5, 0.5]), 1);
        assert_eq!(argmax(&[0.0, 0.0]), 0);
    }

    #[test]
    fn prediction_ignores_logit_scale_and_adapter_scale() {
        let mut rng = seed::rng(4);
        let text = Matrix::from_rows(&[
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ])
        .unwrap();
        let mut h = TrainedHead {
            adapter: random_matrix(3, &mut rng),
            ..TrainedHead::zero_shot(3, 1.0)
        };
        let x = [0.2, -0.5, 0.3];
        let p = h.predict(&x, &text).unwrap();
        h.logit_scale = 55.0;
        assert_eq!(h.predict(&x, &text).unwrap(), p);
        h.adapter.scale(7.5);
        assert_eq!(h.predict(&x, &text).unwrap(), p);
    }
}
