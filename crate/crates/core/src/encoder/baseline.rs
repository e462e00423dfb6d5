use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::conv::{lookup, ConvStack, ConvTrace};
use crate::error::{Error, Result};
use crate::nn::{
    dense_backward, dense_forward, glorot_uniform, relu_backward, softmax, GradBuffer, ParamId,
    ParamSet, Tensor,
};

pub const HIDDEN_UNITS: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineVariant {
    /// Dense block applied to the raw embedding.
    Fcn,
    /// Conv stack, then the same dense block.
    Cnn,
}

impl fmt::Display for BaselineVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BaselineVariant::Fcn => "fcn",
            BaselineVariant::Cnn => "cnn",
        })
    }
}

impl FromStr for BaselineVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fcn" => Ok(Self::Fcn),
            "cnn" => Ok(Self::Cnn),
            other => Err(Error::InvalidInput(format!("unknown baseline variant {other:?}"))),
        }
    }
}

/// Dense(128) → ReLU → Dense(N) → softmax, optionally behind the conv stack.
#[derive(Debug, Clone)]
pub struct Baseline {
    variant: BaselineVariant,
    input_dim: usize,
    classes: usize,
    conv: Option<ConvStack>,
    hidden_w: ParamId,
    hidden_b: ParamId,
    out_w: ParamId,
    out_b: ParamId,
}

#[derive(Debug, Clone)]
pub struct BaselineTrace {
    conv: Option<ConvTrace>,
    features: Vec<f64>,
    hidden_pre: Vec<f64>,
    hidden: Vec<f64>,
    pub probs: Vec<f64>,
}

impl BaselineTrace {
    /// Hidden ReLU signs after the conv stack's pattern (CNN only).
    pub fn activation_pattern(&self) -> Vec<usize> {
        let mut out = self.conv.as_ref().map(ConvTrace::activation_pattern).unwrap_or_default();
        out.extend(self.hidden_pre.iter().map(|&v| usize::from(v > 0.0)));
        out
    }
}

impl Baseline {
    pub fn init<R: Rng + ?Sized>(
        params: &mut ParamSet,
        variant: BaselineVariant,
        input_dim: usize,
        classes: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if classes < 2 {
            return Err(Error::InvalidConfig(format!("need at least 2 classes, got {classes}")));
        }
        if input_dim == 0 {
            return Err(Error::InvalidConfig("input dimension must be positive".into()));
        }
        let conv = match variant {
            BaselineVariant::Cnn => Some(ConvStack::init(params, "baseline", input_dim, rng)?),
            BaselineVariant::Fcn => None,
        };
        let features = conv.as_ref().map_or(input_dim, |c| c.shape.flat);
        let hidden_w = params.add(
            "baseline.hidden.weight",
            glorot_uniform(vec![HIDDEN_UNITS, features], features, HIDDEN_UNITS, rng),
        )?;
        let hidden_b = params.add("baseline.hidden.bias", Tensor::zeros(vec![HIDDEN_UNITS]))?;
        let out_w = params.add(
            "baseline.out.weight",
            glorot_uniform(vec![classes, HIDDEN_UNITS], HIDDEN_UNITS, classes, rng),
        )?;
        let out_b = params.add("baseline.out.bias", Tensor::zeros(vec![classes]))?;
        Ok(Self {
            variant,
            input_dim,
            classes,
            conv,
            hidden_w,
            hidden_b,
            out_w,
            out_b,
        })
    }

    pub fn bind(
        params: &ParamSet,
        variant: BaselineVariant,
        input_dim: usize,
        classes: usize,
    ) -> Result<Self> {
        let conv = match variant {
            BaselineVariant::Cnn => Some(ConvStack::bind(params, "baseline", input_dim)?),
            BaselineVariant::Fcn => None,
        };
        let features = conv.as_ref().map_or(input_dim, |c| c.shape.flat);
        Ok(Self {
            variant,
            input_dim,
            classes,
            conv,
            hidden_w: lookup(params, "baseline.hidden.weight", &[HIDDEN_UNITS, features])?,
            hidden_b: lookup(params, "baseline.hidden.bias", &[HIDDEN_UNITS])?,
            out_w: lookup(params, "baseline.out.weight", &[classes, HIDDEN_UNITS])?,
            out_b: lookup(params, "baseline.out.bias", &[classes])?,
        })
    }

    pub fn variant(&self) -> BaselineVariant {
        self.variant
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn predict(&self, params: &ParamSet, z0: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(params, z0)?.probs)
    }

    pub fn forward(&self, params: &ParamSet, z0: &[f64]) -> Result<BaselineTrace> {
        if z0.len() != self.input_dim {
            return Err(Error::Shape(format!(
                "baseline expects input length {}, got {}",
                self.input_dim,
                z0.len()
            )));
        }
        let conv = self.conv.as_ref().map(|c| c.forward(params, z0)).transpose()?;
        let features = conv.as_ref().map_or_else(|| z0.to_vec(), |t| t.flat().to_vec());
        let hidden_pre = dense_forward(
            &features,
            params.value(self.hidden_w),
            params.value(self.hidden_b).data(),
        )?;
        let hidden: Vec<f64> = hidden_pre.iter().map(|v| v.max(0.0)).collect();
        let logits = dense_forward(
            &hidden,
            params.value(self.out_w),
            params.value(self.out_b).data(),
        )?;
        let probs = softmax(&logits);
        Ok(BaselineTrace {
            conv,
            features,
            hidden_pre,
            hidden,
            probs,
        })
    }

    /// Accumulates gradients given `∂L/∂logits`.
    pub fn backward(
        &self,
        params: &ParamSet,
        trace: &BaselineTrace,
        grad_logits: &[f64],
        grads: &mut GradBuffer,
    ) {
        let [gw, gb] = grads.many_mut([self.out_w, self.out_b]);
        let mut g_hidden = dense_backward(
            &trace.hidden,
            params.value(self.out_w),
            grad_logits,
            gw,
            gb,
            true,
        )
        .expect("input gradient requested");
        relu_backward(&trace.hidden_pre, &mut g_hidden);
        let [gw, gb] = grads.many_mut([self.hidden_w, self.hidden_b]);
        let g_features = dense_backward(
            &trace.features,
            params.value(self.hidden_w),
            &g_hidden,
            gw,
            gb,
            self.conv.is_some(),
        );
        if let (Some(conv), Some(conv_trace), Some(g)) = (&self.conv, &trace.conv, g_features) {
            conv.backward(params, conv_trace, &g, grads);
        }
    }
}
