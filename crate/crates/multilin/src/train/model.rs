//! Layer stacks with a shared forward/backward/update protocol.
//!
//! A [`Model`] is an ordered list of layers through which batch tensors
//! flow. Training is plain SGD: `train_batch` runs the forward pass with
//! caches, derives the squared-loss gradient, backpropagates, and applies
//! the update in place. Parameter groups are addressable by index so
//! finite-difference checks can probe any single scalar.

use crate::error::{Error, Result};
use crate::layers::{
    fc_backward, fc_forward, normalize_trl_factors, tcl_backward, tcl_forward, trl_backward,
    trl_forward, FcGradients, FcLayer, TclGradients, TclLayer, TrlGradients, TrlLayer,
};
use crate::tensor::{DenseTensor, Matrix};

use super::batchnorm::{
    batch_norm_backward, batch_norm_forward_eval, batch_norm_forward_train, BatchNorm, BnCache,
    BnGradients,
};

#[derive(Debug, Clone)]
pub enum ModelLayer {
    BatchNorm(BatchNorm),
    Tcl(TclLayer),
    Trl(TrlLayer),
    Fc(FcLayer),
}

#[derive(Debug)]
pub enum LayerCache {
    Bn(BnCache),
    Input(DenseTensor),
}

#[derive(Debug)]
pub enum LayerGrads {
    Bn(BnGradients),
    Tcl(TclGradients),
    Trl(TrlGradients),
    Fc(FcGradients),
}

/// Identifies one parameter array inside a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamSlot {
    BnGamma,
    BnBeta,
    TclFactor(usize),
    TrlCore,
    TrlInputFactor(usize),
    TrlOutputFactor,
    TrlBias,
    FcWeight,
    FcBias,
}

impl ParamSlot {
    /// Reporting key shared by all instances of this parameter kind.
    pub fn kind_name(&self) -> &'static str {
        match self {
            ParamSlot::BnGamma => "bn_gamma",
            ParamSlot::BnBeta => "bn_beta",
            ParamSlot::TclFactor(_) => "tcl_factors",
            ParamSlot::TrlCore => "trl_core",
            ParamSlot::TrlInputFactor(_) => "trl_input_factors",
            ParamSlot::TrlOutputFactor => "trl_output_factor",
            ParamSlot::TrlBias => "trl_bias",
            ParamSlot::FcWeight => "fc_weight",
            ParamSlot::FcBias => "fc_bias",
        }
    }

    /// Weight-like slots receive l2 weight decay; biases and batch-norm
    /// parameters do not.
    fn decays(&self) -> bool {
        matches!(
            self,
            ParamSlot::TclFactor(_)
                | ParamSlot::TrlCore
                | ParamSlot::TrlInputFactor(_)
                | ParamSlot::TrlOutputFactor
                | ParamSlot::FcWeight
        )
    }
}

#[derive(Debug, Clone)]
pub struct ParamGroup {
    pub layer: usize,
    pub slot: ParamSlot,
    pub len: usize,
}

#[derive(Debug, Clone)]
pub struct Model {
    pub layers: Vec<ModelLayer>,
}

impl Model {
    pub fn new(layers: Vec<ModelLayer>) -> Self {
        Self { layers }
    }

    /// Total trainable scalars, biases and batch-norm parameters included.
    pub fn param_len(&self) -> usize {
        self.param_groups().iter().map(|g| g.len).sum()
    }

    pub fn param_groups(&self) -> Vec<ParamGroup> {
        let mut groups = Vec::new();
        for (layer, l) in self.layers.iter().enumerate() {
            match l {
                ModelLayer::BatchNorm(bn) => {
                    groups.push(ParamGroup { layer, slot: ParamSlot::BnGamma, len: bn.gamma.len() });
                    groups.push(ParamGroup { layer, slot: ParamSlot::BnBeta, len: bn.beta.len() });
                }
                ModelLayer::Tcl(t) => {
                    for (k, f) in t.factors().iter().enumerate() {
                        groups.push(ParamGroup {
                            layer,
                            slot: ParamSlot::TclFactor(k),
                            len: f.data().len(),
                        });
                    }
                }
                ModelLayer::Trl(t) => {
                    groups.push(ParamGroup { layer, slot: ParamSlot::TrlCore, len: t.core().len() });
                    for (k, f) in t.input_factors().iter().enumerate() {
                        groups.push(ParamGroup {
                            layer,
                            slot: ParamSlot::TrlInputFactor(k),
                            len: f.data().len(),
                        });
                    }
                    groups.push(ParamGroup {
                        layer,
                        slot: ParamSlot::TrlOutputFactor,
                        len: t.output_factor().data().len(),
                    });
                    groups.push(ParamGroup { layer, slot: ParamSlot::TrlBias, len: t.bias().len() });
                }
                ModelLayer::Fc(f) => {
                    groups.push(ParamGroup {
                        layer,
                        slot: ParamSlot::FcWeight,
                        len: f.weight().data().len(),
                    });
                    groups.push(ParamGroup { layer, slot: ParamSlot::FcBias, len: f.bias().len() });
                }
            }
        }
        groups
    }

    pub fn param_slice(&self, group: &ParamGroup) -> &[f64] {
        match (&self.layers[group.layer], group.slot) {
            (ModelLayer::BatchNorm(bn), ParamSlot::BnGamma) => &bn.gamma,
            (ModelLayer::BatchNorm(bn), ParamSlot::BnBeta) => &bn.beta,
            (ModelLayer::Tcl(t), ParamSlot::TclFactor(k)) => t.factors()[k].data(),
            (ModelLayer::Trl(t), ParamSlot::TrlCore) => t.core().data(),
            (ModelLayer::Trl(t), ParamSlot::TrlInputFactor(k)) => t.input_factors()[k].data(),
            (ModelLayer::Trl(t), ParamSlot::TrlOutputFactor) => t.output_factor().data(),
            (ModelLayer::Trl(t), ParamSlot::TrlBias) => t.bias(),
            (ModelLayer::Fc(f), ParamSlot::FcWeight) => f.weight().data(),
            (ModelLayer::Fc(f), ParamSlot::FcBias) => f.bias(),
            _ => panic!("parameter group does not match layer kind"),
        }
    }

    pub fn param_slice_mut(&mut self, group: &ParamGroup) -> &mut [f64] {
        match (&mut self.layers[group.layer], group.slot) {
            (ModelLayer::BatchNorm(bn), ParamSlot::BnGamma) => &mut bn.gamma,
            (ModelLayer::BatchNorm(bn), ParamSlot::BnBeta) => &mut bn.beta,
            (ModelLayer::Tcl(t), ParamSlot::TclFactor(k)) => t.factors_mut()[k].data_mut(),
            (ModelLayer::Trl(t), ParamSlot::TrlCore) => t.core_mut().data_mut(),
            (ModelLayer::Trl(t), ParamSlot::TrlInputFactor(k)) => {
                t.input_factors_mut()[k].data_mut()
            }
            (ModelLayer::Trl(t), ParamSlot::TrlOutputFactor) => t.output_factor_mut().data_mut(),
            (ModelLayer::Trl(t), ParamSlot::TrlBias) => t.bias_mut(),
            (ModelLayer::Fc(f), ParamSlot::FcWeight) => f.weight_mut().data_mut(),
            (ModelLayer::Fc(f), ParamSlot::FcBias) => f.bias_mut(),
            _ => panic!("parameter group does not match layer kind"),
        }
    }

    /// Training-mode forward pass. Pure: batch-norm running statistics are
    /// not touched; fold them in later with the returned caches.
    pub fn forward_train(&self, x: &DenseTensor) -> Result<(DenseTensor, Vec<LayerCache>)> {
        let mut cur = x.clone();
        let mut caches = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            match l {
                ModelLayer::BatchNorm(bn) => {
                    let (y, cache) = batch_norm_forward_train(bn, &cur)?;
                    caches.push(LayerCache::Bn(cache));
                    cur = y;
                }
                ModelLayer::Tcl(t) => {
                    let y = tcl_forward(t, &cur)?;
                    caches.push(LayerCache::Input(cur));
                    cur = y;
                }
                ModelLayer::Trl(t) => {
                    let y = trl_forward(t, &cur)?;
                    caches.push(LayerCache::Input(cur));
                    cur = y.into_tensor();
                }
                ModelLayer::Fc(f) => {
                    let y = fc_forward(f, &cur)?;
                    caches.push(LayerCache::Input(cur));
                    cur = y.into_tensor();
                }
            }
        }
        Ok((cur, caches))
    }

    /// Evaluation-mode forward pass (batch norm uses running statistics).
    pub fn forward_eval(&self, x: &DenseTensor) -> Result<DenseTensor> {
        let mut cur = x.clone();
        for l in &self.layers {
            cur = match l {
                ModelLayer::BatchNorm(bn) => batch_norm_forward_eval(bn, &cur)?,
                ModelLayer::Tcl(t) => tcl_forward(t, &cur)?,
                ModelLayer::Trl(t) => trl_forward(t, &cur)?.into_tensor(),
                ModelLayer::Fc(f) => fc_forward(f, &cur)?.into_tensor(),
            };
        }
        Ok(cur)
    }

    /// Backpropagates `upstream` through the stack, returning per-layer
    /// parameter gradients (aligned with `layers`) and the input gradient.
    pub fn backward(
        &self,
        caches: &[LayerCache],
        upstream: &DenseTensor,
    ) -> Result<(Vec<LayerGrads>, DenseTensor)> {
        if caches.len() != self.layers.len() {
            return Err(Error::InvalidArgument(
                "cache list does not match layer list".into(),
            ));
        }
        let mut grad = upstream.clone();
        let mut grads: Vec<Option<LayerGrads>> = (0..self.layers.len()).map(|_| None).collect();
        for (i, l) in self.layers.iter().enumerate().rev() {
            match (l, &caches[i]) {
                (ModelLayer::BatchNorm(bn), LayerCache::Bn(cache)) => {
                    let g = batch_norm_backward(bn, cache, &grad)?;
                    grad = g.input.clone();
                    grads[i] = Some(LayerGrads::Bn(g));
                }
                (ModelLayer::Tcl(t), LayerCache::Input(x)) => {
                    let g = tcl_backward(t, x, &grad)?;
                    grad = g.input.clone();
                    grads[i] = Some(LayerGrads::Tcl(g));
                }
                (ModelLayer::Trl(t), LayerCache::Input(x)) => {
                    let up = Matrix::from_tensor(grad)?;
                    let g = trl_backward(t, x, &up)?;
                    grad = g.input.clone();
                    grads[i] = Some(LayerGrads::Trl(g));
                }
                (ModelLayer::Fc(f), LayerCache::Input(x)) => {
                    let up = Matrix::from_tensor(grad)?;
                    let g = fc_backward(f, x, &up)?;
                    grad = g.input.clone();
                    grads[i] = Some(LayerGrads::Fc(g));
                }
                _ => {
                    return Err(Error::InvalidArgument(
                        "cache kind does not match layer kind".into(),
                    ))
                }
            }
        }
        Ok((grads.into_iter().map(Option::unwrap).collect(), grad))
    }

    /// The gradient values for one parameter group, flattened in the same
    /// order as [`Model::param_slice`].
    pub fn grads_for_group(grads: &[LayerGrads], group: &ParamGroup) -> Vec<f64> {
        match (&grads[group.layer], group.slot) {
            (LayerGrads::Bn(g), ParamSlot::BnGamma) => g.gamma.clone(),
            (LayerGrads::Bn(g), ParamSlot::BnBeta) => g.beta.clone(),
            (LayerGrads::Tcl(g), ParamSlot::TclFactor(k)) => g.factors[k].data().to_vec(),
            (LayerGrads::Trl(g), ParamSlot::TrlCore) => g.core.data().to_vec(),
            (LayerGrads::Trl(g), ParamSlot::TrlInputFactor(k)) => {
                g.input_factors[k].data().to_vec()
            }
            (LayerGrads::Trl(g), ParamSlot::TrlOutputFactor) => g.output_factor.data().to_vec(),
            (LayerGrads::Trl(g), ParamSlot::TrlBias) => g.bias.clone(),
            (LayerGrads::Fc(g), ParamSlot::FcWeight) => g.weight.data().to_vec(),
            (LayerGrads::Fc(g), ParamSlot::FcBias) => g.bias.clone(),
            _ => panic!("gradient group does not match layer kind"),
        }
    }

    fn apply_update(&mut self, grads: &[LayerGrads], lr: f64, weight_decay: f64) {
        for group in self.param_groups() {
            let g = Model::grads_for_group(grads, &group);
            let wd = if group.slot.decays() { weight_decay } else { 0.0 };
            let params = self.param_slice_mut(&group);
            for (p, gv) in params.iter_mut().zip(&g) {
                *p -= lr * (gv + wd * *p);
            }
        }
    }

    /// One SGD step on squared loss `|Y - Yhat|^2 / (2 * batch)`. Returns
    /// the pre-update loss. Folds batch statistics into batch-norm running
    /// estimates.
    pub fn train_batch(
        &mut self,
        x: &DenseTensor,
        y: &Matrix,
        lr: f64,
        weight_decay: f64,
    ) -> Result<f64> {
        let batch = x.shape()[0];
        let (pred, caches) = self.forward_train(x)?;
        if pred.shape() != y.as_tensor().shape() {
            return Err(Error::ShapeMismatch(format!(
                "predictions {:?} vs labels {:?}",
                pred.shape(),
                y.as_tensor().shape()
            )));
        }
        let inv = 1.0 / batch as f64;
        let mut loss = 0.0;
        let mut upstream = DenseTensor::zeros(pred.shape());
        for (i, (&p, &t)) in pred.data().iter().zip(y.data()).enumerate() {
            let d = p - t;
            loss += d * d;
            upstream.data_mut()[i] = d * inv;
        }
        loss *= 0.5 * inv;

        let (grads, _) = self.backward(&caches, &upstream)?;
        self.apply_update(&grads, lr, weight_decay);
        for (l, c) in self.layers.iter_mut().zip(&caches) {
            if let (ModelLayer::BatchNorm(bn), LayerCache::Bn(cache)) = (l, c) {
                bn.update_running(cache);
            }
        }
        Ok(loss)
    }

    /// Rescales every tensor-regression factor to unit column norm,
    /// absorbing the scales into the cores.
    pub fn normalize_trl_layers(&mut self) -> Result<()> {
        for l in &mut self.layers {
            if let ModelLayer::Trl(t) = l {
                normalize_trl_factors(t)?;
            }
        }
        Ok(())
    }
}
