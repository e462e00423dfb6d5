use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{
    conv1d_backward, conv1d_forward, glorot_uniform, maxpool1d, maxpool1d_backward, relu,
    relu_backward, GradBuffer, ParamId, ParamSet, Pooled, Tensor,
};

pub const CONV1_FILTERS: usize = 64;
pub const CONV2_FILTERS: usize = 128;
pub const KERNEL: usize = 3;
pub const POOL: usize = 2;
/// Shortest embedding the two conv/pool stages can consume.
pub const MIN_INPUT_DIM: usize = 10;

/// Sequence lengths through conv1 → pool → conv2 → pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvShape {
    pub input: usize,
    pub conv1: usize,
    pub pool1: usize,
    pub conv2: usize,
    pub pool2: usize,
    pub flat: usize,
}

impl ConvShape {
    pub fn for_input(input: usize) -> Result<Self> {
        if input < MIN_INPUT_DIM {
            return Err(Error::InputTooShort {
                len: input,
                min: MIN_INPUT_DIM,
            });
        }
        let conv1 = input - (KERNEL - 1);
        let pool1 = conv1 / POOL;
        let conv2 = pool1 - (KERNEL - 1);
        let pool2 = conv2 / POOL;
        Ok(Self {
            input,
            conv1,
            pool1,
            conv2,
            pool2,
            flat: CONV2_FILTERS * pool2,
        })
    }
}

/// Two conv → ReLU → max-pool stages over a 1-channel sequence.
#[derive(Debug, Clone)]
pub struct ConvStack {
    pub shape: ConvShape,
    conv1_w: ParamId,
    conv1_b: ParamId,
    conv2_w: ParamId,
    conv2_b: ParamId,
}

/// Forward intermediates of a [`ConvStack`].
#[derive(Debug, Clone)]
pub struct ConvTrace {
    input: Tensor,
    pre1: Tensor,
    pool1: Pooled,
    pre2: Tensor,
    pool2: Pooled,
}

impl ConvTrace {
    /// Flattened `[128 · pool2]` output, channel-major.
    pub fn flat(&self) -> &[f64] {
        self.pool2.output.data()
    }

    /// ReLU sign pattern and pooling argmax indices; two points with equal
    /// patterns lie in the same smooth region of the stack.
    pub fn activation_pattern(&self) -> Vec<usize> {
        let signs = |t: &Tensor| t.data().iter().map(|&v| usize::from(v > 0.0)).collect::<Vec<_>>();
        let mut out = signs(&self.pre1);
        out.extend(&self.pool1.argmax);
        out.extend(signs(&self.pre2));
        out.extend(&self.pool2.argmax);
        out
    }
}

impl ConvStack {
    pub fn init<R: Rng + ?Sized>(
        params: &mut ParamSet,
        prefix: &str,
        input: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let shape = ConvShape::for_input(input)?;
        let conv1_w = params.add(
            format!("{prefix}.conv1.weight"),
            glorot_uniform(
                vec![CONV1_FILTERS, 1, KERNEL],
                KERNEL,
                CONV1_FILTERS * KERNEL,
                rng,
            ),
        )?;
        let conv1_b = params.add(
            format!("{prefix}.conv1.bias"),
            Tensor::zeros(vec![CONV1_FILTERS]),
        )?;
        let conv2_w = params.add(
            format!("{prefix}.conv2.weight"),
            glorot_uniform(
                vec![CONV2_FILTERS, CONV1_FILTERS, KERNEL],
                CONV1_FILTERS * KERNEL,
                CONV2_FILTERS * KERNEL,
                rng,
            ),
        )?;
        let conv2_b = params.add(
            format!("{prefix}.conv2.bias"),
            Tensor::zeros(vec![CONV2_FILTERS]),
        )?;
        Ok(Self {
            shape,
            conv1_w,
            conv1_b,
            conv2_w,
            conv2_b,
        })
    }

    pub fn bind(params: &ParamSet, prefix: &str, input: usize) -> Result<Self> {
        let shape = ConvShape::for_input(input)?;
        Ok(Self {
            shape,
            conv1_w: lookup(params, &format!("{prefix}.conv1.weight"), &[CONV1_FILTERS, 1, KERNEL])?,
            conv1_b: lookup(params, &format!("{prefix}.conv1.bias"), &[CONV1_FILTERS])?,
            conv2_w: lookup(
                params,
                &format!("{prefix}.conv2.weight"),
                &[CONV2_FILTERS, CONV1_FILTERS, KERNEL],
            )?,
            conv2_b: lookup(params, &format!("{prefix}.conv2.bias"), &[CONV2_FILTERS])?,
        })
    }

    pub fn forward(&self, params: &ParamSet, z0: &[f64]) -> Result<ConvTrace> {
        if z0.len() != self.shape.input {
            return Err(Error::Shape(format!(
                "conv stack built for input length {}, got {}",
                self.shape.input,
                z0.len()
            )));
        }
        let input = Tensor::matrix(1, z0.len(), z0.to_vec())?;
        let pre1 = conv1d_forward(
            &input,
            params.value(self.conv1_w),
            params.value(self.conv1_b).data(),
        )?;
        let pool1 = maxpool1d(&relu(&pre1), POOL)?;
        let pre2 = conv1d_forward(
            &pool1.output,
            params.value(self.conv2_w),
            params.value(self.conv2_b).data(),
        )?;
        let pool2 = maxpool1d(&relu(&pre2), POOL)?;
        Ok(ConvTrace {
            input,
            pre1,
            pool1,
            pre2,
            pool2,
        })
    }

    pub fn backward(
        &self,
        params: &ParamSet,
        trace: &ConvTrace,
        grad_flat: &[f64],
        grads: &mut GradBuffer,
    ) {
        let mut g = maxpool1d_backward(&trace.pool2, grad_flat, trace.pre2.dims());
        relu_backward(trace.pre2.data(), g.data_mut());
        let [gw2, gb2] = grads.many_mut([self.conv2_w, self.conv2_b]);
        let g_pool1 = conv1d_backward(
            &trace.pool1.output,
            params.value(self.conv2_w),
            &g,
            gw2,
            gb2,
            true,
        )
        .expect("input gradient requested");
        let mut g = maxpool1d_backward(&trace.pool1, g_pool1.data(), trace.pre1.dims());
        relu_backward(trace.pre1.data(), g.data_mut());
        let [gw1, gb1] = grads.many_mut([self.conv1_w, self.conv1_b]);
        conv1d_backward(
            &trace.input,
            params.value(self.conv1_w),
            &g,
            gw1,
            gb1,
            false,
        );
    }
}

pub(crate) fn lookup(params: &ParamSet, name: &str, dims: &[usize]) -> Result<ParamId> {
    let id = params
        .id(name)
        .ok_or_else(|| Error::Inconsistent(format!("missing tensor {name:?}")))?;
    params.value(id).expect_dims(name, dims)?;
    Ok(id)
}
