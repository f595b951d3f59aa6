//! Inception-ResNet and reduction blocks.

use rand::Rng;

use crate::layers::{Conv2d, MaxPool2d, Padding, Param};
use crate::tensor::{concat_channels, split_channels, Scalar, Tensor};
use crate::NnError;

/// Three same-padded branches of widths F, (F→F) and (F→F→F) with ReLU
/// after every conv, concatenated, projected linearly back to the input
/// width, scaled, added to the input and passed through a final ReLU.
#[derive(Debug, Clone)]
pub struct InceptionResNetBlock<T> {
    pub branch1: Conv2d<T>,
    pub branch2: [Conv2d<T>; 2],
    pub branch3: [Conv2d<T>; 3],
    pub projection: Conv2d<T>,
    pub residual_scale: T,
    filters: usize,
    output: Option<Tensor<T>>,
}

impl<T: Scalar> InceptionResNetBlock<T> {
    pub fn new(channels: usize, filters: usize, residual_scale: f64, rng: &mut impl Rng) -> Self {
        let pw = |c_in, rng: &mut _| Conv2d::new(c_in, filters, (1, 1), 1, Padding::Same, true, rng);
        let k3 = |rng: &mut _| Conv2d::new(filters, filters, (3, 3), 1, Padding::Same, true, rng);
        let branch1 = pw(channels, rng);
        let branch2 = [pw(channels, rng), k3(rng)];
        let branch3 = [pw(channels, rng), k3(rng), k3(rng)];
        let projection = Conv2d::new(3 * filters, channels, (1, 1), 1, Padding::Same, false, rng);
        InceptionResNetBlock {
            branch1,
            branch2,
            branch3,
            projection,
            residual_scale: T::of(residual_scale),
            filters,
            output: None,
        }
    }

    pub fn channels(&self) -> usize {
        self.projection.out_channels
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        if x.c() != self.channels() {
            return Err(NnError::ShapeMismatch(format!(
                "block expects {} channels, got {:?}",
                self.channels(),
                x.shape
            )));
        }
        let y1 = self.branch1.forward(x)?;
        let y2 = self.branch2[0].forward(x)?;
        let y2 = self.branch2[1].forward(&y2)?;
        let y3 = self.branch3[0].forward(x)?;
        let y3 = self.branch3[1].forward(&y3)?;
        let y3 = self.branch3[2].forward(&y3)?;
        let cat = concat_channels(&[&y1, &y2, &y3])?;
        let p = self.projection.forward(&cat)?;
        let mut out = x.clone();
        for (o, &v) in out.data.iter_mut().zip(&p.data) {
            *o = (*o + self.residual_scale * v).max(T::zero());
        }
        self.output = Some(out.clone());
        Ok(out)
    }

    pub fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let out = self.output.as_ref().ok_or(NnError::NoForward)?;
        if dy.shape != out.shape {
            return Err(NnError::ShapeMismatch(format!("block gradient {:?}", dy.shape)));
        }
        let mut dz = dy.clone();
        for (d, &o) in dz.data.iter_mut().zip(&out.data) {
            if o <= T::zero() {
                *d = T::zero();
            }
        }
        let mut dp = dz.clone();
        dp.data.iter_mut().for_each(|v| *v = *v * self.residual_scale);
        let dcat = self.projection.backward(&dp)?;
        let f = self.filters;
        let [d1, d2, d3]: [Tensor<T>; 3] = split_channels(&dcat, &[f, f, f])?.try_into().unwrap();
        let mut dx = dz;
        dx.add_assign(&self.branch1.backward(&d1)?)?;
        let d2 = self.branch2[1].backward(&d2)?;
        dx.add_assign(&self.branch2[0].backward(&d2)?)?;
        let d3 = self.branch3[2].backward(&d3)?;
        let d3 = self.branch3[1].backward(&d3)?;
        dx.add_assign(&self.branch3[0].backward(&d3)?)?;
        Ok(dx)
    }

    fn convs(&self) -> [&Conv2d<T>; 7] {
        let [b2a, b2b] = &self.branch2;
        let [b3a, b3b, b3c] = &self.branch3;
        [&self.branch1, b2a, b2b, b3a, b3b, b3c, &self.projection]
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        self.convs().into_iter().flat_map(|c| c.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let [b2a, b2b] = &mut self.branch2;
        let [b3a, b3b, b3c] = &mut self.branch3;
        [&mut self.branch1, b2a, b2b, b3a, b3b, b3c, &mut self.projection]
            .into_iter()
            .flat_map(|c| c.params_mut())
            .collect()
    }
}

/// Halves the spatial size: a 3×3 stride-2 conv (F channels, ReLU)
/// concatenated with a 3×3 stride-2 max pool of the input.
#[derive(Debug, Clone)]
pub struct ReductionBlock<T> {
    pub conv: Conv2d<T>,
    pool: MaxPool2d,
}

impl<T: Scalar> ReductionBlock<T> {
    pub fn new(channels: usize, filters: usize, rng: &mut impl Rng) -> Self {
        ReductionBlock {
            conv: Conv2d::new(channels, filters, (3, 3), 2, Padding::Same, true, rng),
            pool: MaxPool2d::new(3, 2, Padding::Same),
        }
    }

    pub fn out_channels(&self) -> usize {
        self.conv.out_channels + self.conv.in_channels
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        // a 16×16 network input reaches the last reduction at 2×2
        if x.h() < 2 || x.w() < 2 {
            return Err(NnError::ShapeMismatch(format!("reduction needs at least 2×2, got {:?}", x.shape)));
        }
        let a = self.conv.forward(x)?;
        let b = self.pool.forward(x)?;
        concat_channels(&[&a, &b])
    }

    pub fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let [da, db]: [Tensor<T>; 2] = split_channels(dy, &[self.conv.out_channels, self.conv.in_channels])?
            .try_into()
            .unwrap();
        let mut dx = self.conv.backward(&da)?;
        dx.add_assign(&self.pool.backward(&db)?)?;
        Ok(dx)
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        self.conv.params().to_vec()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        self.conv.params_mut().into_iter().collect()
    }
}
