use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::arch::{ArchitectureSpec, FeatureActivation, LayerSpec, EMBED_DIM};
use crate::dataio::{load_checkpoint_into, save_checkpoint, ParameterSet};
use crate::error::{Error, Result};
use crate::nnkernel::{
    batchnorm_backward, batchnorm_infer, batchnorm_train, conv2d_backward, conv2d_forward,
    dense_backward, dense_forward, maxpool2_backward, maxpool2_forward, relu, relu_backward,
    BatchNormState, BnCache, Mode, Tensor,
};
use crate::prep::CANVAS;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct ConvBlock<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub bn: BatchNormState<T>,
    pub pool_after: bool,
}

/// `p = σ(w · |f1 − f2| + b)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityHead<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> SimilarityHead<T> {
    pub fn zeros() -> Self {
        SimilarityHead {
            weight: Tensor::zeros(&[EMBED_DIM]),
            bias: Tensor::zeros(&[1]),
        }
    }

    pub fn new(weight: Vec<T>, bias: T) -> Result<Self> {
        Ok(SimilarityHead {
            weight: Tensor::new(&[weight.len()], weight)?,
            bias: Tensor::new(&[1], vec![bias])?,
        })
    }

    pub fn dim(&self) -> usize {
        self.weight.len()
    }
}

/// The shared embedder and its similarity head. Both siamese branches run
/// through this single parameter set.
#[derive(Clone, Debug, PartialEq)]
pub struct Model<T> {
    pub arch: ArchitectureSpec,
    pub blocks: Vec<ConvBlock<T>>,
    pub dense_weight: Tensor<T>,
    pub dense_bias: Tensor<T>,
    pub head: SimilarityHead<T>,
}

fn he_normal<T: Scalar>(shape: &[usize], fan_in: usize, rng: &mut ChaCha8Rng) -> Tensor<T> {
    let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
    let len = shape.iter().product();
    let data = (0..len).map(|_| T::lit(normal.sample(rng))).collect();
    Tensor::new(shape, data).expect("shape/len agree")
}

/// Deterministic He-initialized model. Batch-norm scale 1 and shift 0; the
/// similarity head starts at `w = 0, b = 0`, so every pair scores 0.5.
pub fn build_model<T: Scalar>(arch: &ArchitectureSpec, seed: u64) -> Result<Model<T>> {
    arch.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut blocks: Vec<ConvBlock<T>> = Vec::new();
    let mut in_channels = 1;
    for layer in &arch.layers {
        match *layer {
            LayerSpec::Conv {
                out_channels,
                kernel,
            } => {
                let fan_in = in_channels * kernel * kernel;
                blocks.push(ConvBlock {
                    weight: he_normal(
                        &[out_channels, in_channels, kernel, kernel],
                        fan_in,
                        &mut rng,
                    ),
                    bias: Tensor::zeros(&[out_channels]),
                    bn: BatchNormState::new(out_channels),
                    pool_after: false,
                });
                in_channels = out_channels;
            }
            LayerSpec::Pool => {
                blocks.last_mut().expect("validated: conv first").pool_after = true;
            }
        }
    }
    let flat = arch.flat_dim();
    Ok(Model {
        arch: arch.clone(),
        blocks,
        dense_weight: he_normal(&[EMBED_DIM, flat], flat, &mut rng),
        dense_bias: Tensor::zeros(&[EMBED_DIM]),
        head: SimilarityHead::zeros(),
    })
}

struct BlockTrace<T> {
    input: Tensor<T>,
    bn_cache: BnCache<T>,
    bn_out: Tensor<T>,
    pool: Option<(Vec<usize>, Vec<usize>)>,
}

/// Activations saved by [`Model::forward_train`] for [`Model::backward`].
pub struct Trace<T> {
    blocks: Vec<BlockTrace<T>>,
    flat: Tensor<T>,
    dense_out: Tensor<T>,
    activation: FeatureActivation,
}

impl<T: Scalar> Trace<T> {
    /// Which branch every piecewise operator took: the sign of each ReLU
    /// input and the winning cell of each pooling window. Two passes with
    /// equal patterns lie in one smooth region of the network.
    pub fn branch_pattern(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for b in &self.blocks {
            out.extend(b.bn_out.data().iter().map(|&v| usize::from(v > T::zero())));
            if let Some((arg, _)) = &b.pool {
                out.extend_from_slice(arg);
            }
        }
        if let FeatureActivation::Relu = self.activation {
            out.extend(
                self.dense_out
                    .data()
                    .iter()
                    .map(|&v| usize::from(v > T::zero())),
            );
        }
        out
    }
}

impl<T: Scalar> Model<T> {
    fn check_input(&self, x: &Tensor<T>) -> Result<usize> {
        let (n, c, h, w) = x.dims4()?;
        if (c, h, w) != (1, CANVAS, CANVAS) {
            return Err(Error::Shape(format!(
                "embedder expects [N, 1, {CANVAS}, {CANVAS}], got {:?}",
                x.shape()
            )));
        }
        if n == 0 {
            return Err(Error::EmptyBatch);
        }
        Ok(n)
    }

    fn finish_features(&self, dense_out: &Tensor<T>) -> Tensor<T> {
        match self.arch.feature_activation {
            FeatureActivation::None => dense_out.clone(),
            FeatureActivation::Relu => relu(dense_out),
        }
    }

    /// Inference-mode embedding of an `[N, 1, 64, 64]` batch into `[N, 128]`.
    /// Each row depends only on its own input.
    pub fn embed(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let n = self.check_input(x)?;
        let mut h = x.clone();
        for block in &self.blocks {
            let y = conv2d_forward(&h, &block.weight, &block.bias)?;
            let y = relu(&batchnorm_infer(&y, &block.bn)?);
            h = if block.pool_after {
                maxpool2_forward(&y)?.0
            } else {
                y
            };
        }
        let flat = h.reshape(&[n, self.arch.flat_dim()])?;
        let out = dense_forward(&flat, &self.dense_weight, &self.dense_bias)?;
        Ok(self.finish_features(&out))
    }

    /// Embedding with an explicit batch-norm mode. Train mode uses batch
    /// statistics and updates the running statistics.
    pub fn embed_with_mode(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        match mode {
            Mode::Infer => self.embed(x),
            Mode::Train => self.forward_train(x).map(|(f, _)| f),
        }
    }

    pub fn forward_train(&mut self, x: &Tensor<T>) -> Result<(Tensor<T>, Trace<T>)> {
        let n = self.check_input(x)?;
        let mut traces = Vec::with_capacity(self.blocks.len());
        let mut h = x.clone();
        for block in &mut self.blocks {
            let y = conv2d_forward(&h, &block.weight, &block.bias)?;
            let (bn_out, bn_cache) = batchnorm_train(&y, &mut block.bn)?;
            let act = relu(&bn_out);
            let (next, pool) = if block.pool_after {
                let (p, arg) = maxpool2_forward(&act)?;
                (p, Some((arg, act.shape().to_vec())))
            } else {
                (act, None)
            };
            traces.push(BlockTrace {
                input: std::mem::replace(&mut h, next),
                bn_cache,
                bn_out,
                pool,
            });
        }
        let flat = h.reshape(&[n, self.arch.flat_dim()])?;
        let dense_out = dense_forward(&flat, &self.dense_weight, &self.dense_bias)?;
        let features = self.finish_features(&dense_out);
        Ok((
            features,
            Trace {
                blocks: traces,
                flat,
                dense_out,
                activation: self.arch.feature_activation,
            },
        ))
    }

    /// Back-propagates `dfeat` (`[N, 128]`) through the embedder, adding into
    /// the parameter gradient buffers.
    pub fn backward(&mut self, trace: &Trace<T>, dfeat: &Tensor<T>) -> Result<()> {
        let g = match self.arch.feature_activation {
            FeatureActivation::None => dfeat.clone(),
            FeatureActivation::Relu => relu_backward(&trace.dense_out, dfeat)?,
        };
        let dense = dense_backward(&trace.flat, &self.dense_weight, &g)?;
        self.dense_weight.accumulate_grad(dense.dw.data())?;
        self.dense_bias.accumulate_grad(dense.db.data())?;
        let last_shape = match trace.blocks.last() {
            Some(b) => match &b.pool {
                Some((_, shape)) => {
                    let mut s = shape.clone();
                    s[2] /= 2;
                    s[3] /= 2;
                    s
                }
                None => b.bn_out.shape().to_vec(),
            },
            None => return Err(Error::Shape("empty trace".into())),
        };
        let mut grad = dense.dx.reshape(&last_shape)?;
        for (block, bt) in self.blocks.iter_mut().zip(&trace.blocks).rev() {
            if let Some((arg, shape)) = &bt.pool {
                grad = maxpool2_backward(&grad, arg, shape)?;
            }
            grad = relu_backward(&bt.bn_out, &grad)?;
            let bn = batchnorm_backward(&grad, &bt.bn_cache, &block.bn)?;
            block.bn.gamma.accumulate_grad(bn.dgamma.data())?;
            block.bn.beta.accumulate_grad(bn.dbeta.data())?;
            let conv = conv2d_backward(&bt.input, &block.weight, &bn.dx)?;
            block.weight.accumulate_grad(conv.dw.data())?;
            block.bias.accumulate_grad(conv.db.data())?;
            grad = conv.dx;
        }
        Ok(())
    }

    /// Learnable tensors in a fixed order (running statistics excluded).
    pub fn trainable_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = Vec::new();
        for b in &mut self.blocks {
            out.push(&mut b.weight);
            out.push(&mut b.bias);
            out.push(&mut b.bn.gamma);
            out.push(&mut b.bn.beta);
        }
        out.push(&mut self.dense_weight);
        out.push(&mut self.dense_bias);
        out.push(&mut self.head.weight);
        out.push(&mut self.head.bias);
        out
    }

    pub fn zero_grad(&mut self) {
        for t in self.trainable_mut() {
            t.zero_grad();
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        save_checkpoint(self, path)
    }

    /// Loads a checkpoint written for `arch`.
    pub fn load(path: impl AsRef<Path>, arch: &ArchitectureSpec) -> Result<Self> {
        let mut model = build_model(arch, 0)?;
        load_checkpoint_into(&mut model, path)?;
        Ok(model)
    }
}

impl<T: Scalar> ParameterSet<T> for Model<T> {
    fn named_tensors(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        for (i, b) in self.blocks.iter().enumerate() {
            out.push((format!("conv{i}.weight"), &b.weight));
            out.push((format!("conv{i}.bias"), &b.bias));
            out.push((format!("conv{i}.bn.gamma"), &b.bn.gamma));
            out.push((format!("conv{i}.bn.beta"), &b.bn.beta));
            out.push((format!("conv{i}.bn.running_mean"), &b.bn.running_mean));
            out.push((format!("conv{i}.bn.running_var"), &b.bn.running_var));
        }
        out.push(("dense.weight".into(), &self.dense_weight));
        out.push(("dense.bias".into(), &self.dense_bias));
        out.push(("head.weight".into(), &self.head.weight));
        out.push(("head.bias".into(), &self.head.bias));
        out
    }

    fn named_tensors_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let mut out = Vec::new();
        for (i, b) in self.blocks.iter_mut().enumerate() {
            out.push((format!("conv{i}.weight"), &mut b.weight));
            out.push((format!("conv{i}.bias"), &mut b.bias));
            out.push((format!("conv{i}.bn.gamma"), &mut b.bn.gamma));
            out.push((format!("conv{i}.bn.beta"), &mut b.bn.beta));
            out.push((format!("conv{i}.bn.running_mean"), &mut b.bn.running_mean));
            out.push((format!("conv{i}.bn.running_var"), &mut b.bn.running_var));
        }
        out.push(("dense.weight".into(), &mut self.dense_weight));
        out.push(("dense.bias".into(), &mut self.dense_bias));
        out.push(("head.weight".into(), &mut self.head.weight));
        out.push(("head.bias".into(), &mut self.head.bias));
        out
    }
}
