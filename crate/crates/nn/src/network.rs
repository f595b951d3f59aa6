//! The full network: stem, three stages of Inception-ResNet blocks each
//! followed by a reduction block, global average pooling, a dense layer and
//! the output head.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::blocks::{InceptionResNetBlock, ReductionBlock};
use crate::layers::{Conv2d, Dense, GlobalAvgPool, Padding, Param};
use crate::tensor::{Scalar, Tensor};
use crate::NnError;

pub const STAGES: usize = 3;
pub const MIN_INPUT_SIZE: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Head {
    Sigmoid,
    Linear,
}

/// Architecture "T{depth}_F{filters}" with blocks per stage and filters per conv.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Arch {
    pub depth: usize,
    pub filters: usize,
}

impl FromStr for Arch {
    type Err = NnError;

    fn from_str(s: &str) -> Result<Arch, NnError> {
        let bad = || NnError::Config(format!("architecture {s:?} does not match T<depth>_F<filters>"));
        let (t, f) = s.split_once('_').ok_or_else(bad)?;
        let num = |part: &str, prefix: char| {
            part.strip_prefix(prefix)
                .filter(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()))
                .and_then(|d| d.parse::<usize>().ok())
        };
        let depth = num(t, 'T').ok_or_else(bad)?;
        let filters = num(f, 'F').ok_or_else(bad)?;
        if depth == 0 || filters == 0 {
            return Err(NnError::Config(format!("architecture {s:?} needs depth and filters ≥ 1")));
        }
        Ok(Arch { depth, filters })
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "T{}_F{}", self.depth, self.filters)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub depth: usize,
    pub filters: usize,
    pub input_channels: usize,
    pub input_height: usize,
    pub input_width: usize,
    pub tasks: usize,
    pub head: Head,
    pub residual_scale: f64,
    pub seed: u64,
}

impl NetworkConfig {
    pub fn new(arch: Arch, input_channels: usize, tasks: usize, head: Head) -> NetworkConfig {
        NetworkConfig {
            depth: arch.depth,
            filters: arch.filters,
            input_channels,
            input_height: 80,
            input_width: 80,
            tasks,
            head,
            residual_scale: 1.0,
            seed: 0,
        }
    }

    pub fn arch(&self) -> Arch {
        Arch {
            depth: self.depth,
            filters: self.filters,
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        let err = |m: String| Err(NnError::Config(m));
        if self.depth == 0 || self.filters == 0 {
            return err(format!("{} needs depth and filters ≥ 1", self.arch()));
        }
        if ![1, 4].contains(&self.input_channels) {
            return err(format!("input channels must be 1 or 4, got {}", self.input_channels));
        }
        if self.tasks == 0 {
            return err("at least one task is required".into());
        }
        if self.input_height < MIN_INPUT_SIZE || self.input_width < MIN_INPUT_SIZE {
            return err(format!(
                "input {}×{} is below the {MIN_INPUT_SIZE}×{MIN_INPUT_SIZE} minimum",
                self.input_height, self.input_width
            ));
        }
        if !self.residual_scale.is_finite() {
            return err("residual scale must be finite".into());
        }
        Ok(())
    }

    /// Channels entering the pooling layer.
    pub fn feature_channels(&self) -> usize {
        (STAGES + 1) * self.filters
    }
}

#[derive(Debug, Clone)]
pub struct Stage<T> {
    pub blocks: Vec<InceptionResNetBlock<T>>,
    pub reduction: ReductionBlock<T>,
}

#[derive(Debug, Clone)]
pub struct Network<T> {
    pub config: NetworkConfig,
    pub stem: Conv2d<T>,
    pub stages: Vec<Stage<T>>,
    pub dense: Dense<T>,
    pool: GlobalAvgPool,
}

impl<T: Scalar> Network<T> {
    /// Weights are drawn in parameter order from a generator seeded with
    /// `config.seed`.
    pub fn build(config: &NetworkConfig) -> Result<Network<T>, NnError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let f = config.filters;
        let stem = Conv2d::new(config.input_channels, f, (4, 4), 2, Padding::Same, true, &mut rng);
        let mut channels = f;
        let mut stages = Vec::with_capacity(STAGES);
        for _ in 0..STAGES {
            let blocks = (0..config.depth)
                .map(|_| InceptionResNetBlock::new(channels, f, config.residual_scale, &mut rng))
                .collect();
            let reduction = ReductionBlock::new(channels, f, &mut rng);
            channels = reduction.out_channels();
            stages.push(Stage { blocks, reduction });
        }
        let dense = Dense::new(channels, config.tasks, &mut rng);
        Ok(Network {
            config: config.clone(),
            stem,
            stages,
            dense,
            pool: GlobalAvgPool::default(),
        })
    }

    /// Raw outputs before the head activation, shape (N, tasks, 1, 1).
    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let c = &self.config;
        if x.c() != c.input_channels || x.h() != c.input_height || x.w() != c.input_width {
            return Err(NnError::ShapeMismatch(format!(
                "network expects (N, {}, {}, {}), got {:?}",
                c.input_channels, c.input_height, c.input_width, x.shape
            )));
        }
        let mut h = self.stem.forward(x)?;
        for stage in self.stages.iter_mut() {
            for block in stage.blocks.iter_mut() {
                h = block.forward(&h)?;
            }
            h = stage.reduction.forward(&h)?;
        }
        let pooled = self.pool.forward(&h);
        let out = self.dense.forward(&pooled)?;
        debug_assert!(out.all_finite(), "non-finite network output");
        Ok(out)
    }

    /// Gradient of the loss with respect to the input, given its gradient with
    /// respect to the raw outputs. Parameter gradients accumulate.
    pub fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let d = self.dense.backward(dy)?;
        let mut d = self.pool.backward(&d)?;
        for stage in self.stages.iter_mut().rev() {
            d = stage.reduction.backward(&d)?;
            for block in stage.blocks.iter_mut().rev() {
                d = block.backward(&d)?;
            }
        }
        self.stem.backward(&d)
    }

    /// Head activation applied to raw outputs.
    pub fn activate(&self, raw: T) -> T {
        match self.config.head {
            Head::Sigmoid => T::one() / (T::one() + (-raw).exp()),
            Head::Linear => raw,
        }
    }

    /// Parameters in a fixed order: stem, stages (blocks then reduction), dense.
    pub fn params(&self) -> Vec<&Param<T>> {
        let mut out: Vec<&Param<T>> = self.stem.params().to_vec();
        for stage in &self.stages {
            for block in &stage.blocks {
                out.extend(block.params());
            }
            out.extend(stage.reduction.params());
        }
        out.extend(self.dense.params());
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut out: Vec<&mut Param<T>> = self.stem.params_mut().into_iter().collect();
        for stage in self.stages.iter_mut() {
            for block in stage.blocks.iter_mut() {
                out.extend(block.params_mut());
            }
            out.extend(stage.reduction.params_mut());
        }
        out.extend(self.dense.params_mut());
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(Param::zero_grad);
    }

    pub fn snapshot(&self) -> Vec<Vec<T>> {
        self.params().iter().map(|p| p.value.clone()).collect()
    }

    pub fn restore(&mut self, values: &[Vec<T>]) -> Result<(), NnError> {
        let mut params = self.params_mut();
        if params.len() != values.len() {
            return Err(NnError::ShapeMismatch(format!(
                "{} parameter tensors, snapshot has {}",
                params.len(),
                values.len()
            )));
        }
        for (p, v) in params.iter_mut().zip(values) {
            if p.value.len() != v.len() {
                return Err(NnError::ShapeMismatch(format!("parameter {:?} vs {} values", p.shape, v.len())));
            }
            p.value.copy_from_slice(v);
        }
        Ok(())
    }
}
