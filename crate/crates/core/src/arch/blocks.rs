//! Network building blocks: a closed set of layers with uniform
//! forward/backward/summary dispatch.

use crate::error::{Error, Result};
use crate::nn::{Conv2d, Conv3d, Linear, MaxPool2d, MaxPool3d, Param, Relu, Sigmoid};
use crate::tensor::Tensor;
use serde::Serialize;

/// One row of a network description.
#[derive(Clone, Debug, Serialize)]
pub struct LayerSummary {
    pub name: String,
    pub kind: String,
    pub output_shape: Vec<usize>,
    pub param_count: usize,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<LayerSummary>,
}

#[derive(Clone, Debug)]
pub enum Block {
    Conv2d(String, Conv2d),
    Conv3d(String, Conv3d),
    MaxPool2d(String, MaxPool2d),
    MaxPool3d(String, MaxPool3d),
    Relu(String, Relu),
    Sigmoid(String, Sigmoid),
    Flatten(String, Flatten),
    GlobalAvgPool(String, GlobalAvgPool2d),
    Linear(String, Linear),
    Residual(String, ResidualBlock),
    Inception(String, InceptionBlock),
}

impl Block {
    pub fn forward(&mut self, input: &Tensor, cache: bool) -> Result<Tensor> {
        match self {
            Block::Conv2d(_, l) => l.forward(input, cache),
            Block::Conv3d(_, l) => l.forward(input, cache),
            Block::MaxPool2d(_, l) => l.forward(input, cache),
            Block::MaxPool3d(_, l) => l.forward(input, cache),
            Block::Relu(_, l) => Ok(l.forward(input, cache)),
            Block::Sigmoid(_, l) => Ok(l.forward(input, cache)),
            Block::Flatten(_, l) => l.forward(input),
            Block::GlobalAvgPool(_, l) => l.forward(input),
            Block::Linear(_, l) => l.forward(input, cache),
            Block::Residual(_, l) => l.forward(input, cache),
            Block::Inception(_, l) => l.forward(input, cache),
        }
    }

    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        match self {
            Block::Conv2d(_, l) => l.backward(grad),
            Block::Conv3d(_, l) => l.backward(grad),
            Block::MaxPool2d(_, l) => l.backward(grad),
            Block::MaxPool3d(_, l) => l.backward(grad),
            Block::Relu(_, l) => Ok(l.backward(grad)),
            Block::Sigmoid(_, l) => Ok(l.backward(grad)),
            Block::Flatten(_, l) => l.backward(grad),
            Block::GlobalAvgPool(_, l) => l.backward(grad),
            Block::Linear(_, l) => l.backward(grad),
            Block::Residual(_, l) => l.backward(grad),
            Block::Inception(_, l) => l.backward(grad),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        match self {
            Block::Conv2d(_, l) => vec![&mut l.weight, &mut l.bias],
            Block::Conv3d(_, l) => vec![&mut l.weight, &mut l.bias],
            Block::Linear(_, l) => vec![&mut l.weight, &mut l.bias],
            Block::Residual(_, l) => l.params_mut(),
            Block::Inception(_, l) => l.params_mut(),
            _ => vec![],
        }
    }

    pub fn params(&self) -> Vec<&Param> {
        match self {
            Block::Conv2d(_, l) => vec![&l.weight, &l.bias],
            Block::Conv3d(_, l) => vec![&l.weight, &l.bias],
            Block::Linear(_, l) => vec![&l.weight, &l.bias],
            Block::Residual(_, l) => l.params(),
            Block::Inception(_, l) => l.params(),
            _ => vec![],
        }
    }

    pub fn name(&self) -> &str {
        match self {
            Block::Conv2d(n, _)
            | Block::Conv3d(n, _)
            | Block::MaxPool2d(n, _)
            | Block::MaxPool3d(n, _)
            | Block::Relu(n, _)
            | Block::Sigmoid(n, _)
            | Block::Flatten(n, _)
            | Block::GlobalAvgPool(n, _)
            | Block::Linear(n, _)
            | Block::Residual(n, _)
            | Block::Inception(n, _) => n,
        }
    }

    pub fn kind_str(&self) -> &'static str {
        match self {
            Block::Conv2d(..) => "conv2d",
            Block::Conv3d(..) => "conv3d",
            Block::MaxPool2d(..) => "maxpool2d",
            Block::MaxPool3d(..) => "maxpool3d",
            Block::Relu(..) => "relu",
            Block::Sigmoid(..) => "sigmoid",
            Block::Flatten(..) => "flatten",
            Block::GlobalAvgPool(..) => "global_avg_pool",
            Block::Linear(..) => "linear",
            Block::Residual(..) => "residual",
            Block::Inception(..) => "inception",
        }
    }

    /// Output shape plus a summary row for the given input shape.
    pub fn summarize(&self, in_shape: &[usize]) -> Result<(LayerSummary, Vec<usize>)> {
        let param_count = self.params().iter().map(|p| p.count()).sum();
        let (children, out_shape) = match self {
            Block::Conv2d(_, l) => (vec![], l.out_shape(in_shape)?),
            Block::Conv3d(_, l) => (vec![], l.out_shape(in_shape)?),
            Block::MaxPool2d(_, l) => (vec![], l.out_shape(in_shape)?),
            Block::MaxPool3d(_, l) => (vec![], l.out_shape(in_shape)?),
            Block::Relu(..) | Block::Sigmoid(..) => (vec![], in_shape.to_vec()),
            Block::Flatten(..) => (
                vec![],
                vec![in_shape[0], in_shape[1..].iter().product()],
            ),
            Block::GlobalAvgPool(..) => (vec![], vec![in_shape[0], in_shape[1]]),
            Block::Linear(_, l) => (
                vec![],
                vec![in_shape[0], l.weight.value.shape()[1]],
            ),
            Block::Residual(_, l) => l.summarize(in_shape)?,
            Block::Inception(_, l) => l.summarize(in_shape)?,
        };
        Ok((
            LayerSummary {
                name: self.name().to_string(),
                kind: self.kind_str().to_string(),
                output_shape: out_shape.clone(),
                param_count,
                children,
            },
            out_shape,
        ))
    }
}

/// Collapses everything after the batch axis.
#[derive(Clone, Debug, Default)]
pub struct Flatten {
    in_shape: Option<Vec<usize>>,
}

impl Flatten {
    pub fn new() -> Flatten {
        Flatten::default()
    }

    pub fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        self.in_shape = Some(input.shape().to_vec());
        let b = input.shape()[0];
        let rest: usize = input.shape()[1..].iter().product();
        input.clone().reshape(&[b, rest])
    }

    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let shape = self.in_shape.as_ref().expect("backward before forward");
        grad.clone().reshape(shape)
    }
}

/// Spatial mean per channel: `B×C×H×W` → `B×C`.
#[derive(Clone, Debug, Default)]
pub struct GlobalAvgPool2d {
    in_shape: Option<Vec<usize>>,
}

impl GlobalAvgPool2d {
    pub fn new() -> GlobalAvgPool2d {
        GlobalAvgPool2d::default()
    }

    pub fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        let [b, c, h, w]: [usize; 4] = input
            .shape()
            .try_into()
            .map_err(|_| Error::config("global average pool expects 4-d input"))?;
        self.in_shape = Some(input.shape().to_vec());
        let mut out = Tensor::zeros(&[b, c]);
        let od = out.data_mut();
        let plane = h * w;
        for (i, chunk) in input.data().chunks(plane).enumerate() {
            od[i] = chunk.iter().sum::<f32>() / plane as f32;
        }
        Ok(out)
    }

    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let shape = self.in_shape.as_ref().expect("backward before forward");
        let plane: usize = shape[2] * shape[3];
        let mut d_input = Tensor::zeros(shape);
        for (i, chunk) in d_input.data_mut().chunks_mut(plane).enumerate() {
            let g = grad.data()[i] / plane as f32;
            chunk.iter_mut().for_each(|v| *v = g);
        }
        Ok(d_input)
    }
}

/// Two 3×3 convolutions with a 1×1 projection shortcut; the addition feeds
/// the block's final ReLU.
#[derive(Clone, Debug)]
pub struct ResidualBlock {
    pub conv1: Conv2d,
    pub conv2: Conv2d,
    pub proj: Conv2d,
    relu_mid: Relu,
    sum_mask: Option<Vec<bool>>,
}

impl ResidualBlock {
    pub fn new<R: rand::Rng>(name: &str, in_ch: usize, out_ch: usize, rng: &mut R) -> ResidualBlock {
        ResidualBlock {
            conv1: Conv2d::new(&format!("{name}.conv1"), in_ch, out_ch, (3, 3), 1, rng),
            conv2: Conv2d::new(&format!("{name}.conv2"), out_ch, out_ch, (3, 3), 1, rng),
            proj: Conv2d::new(&format!("{name}.proj"), in_ch, out_ch, (1, 1), 0, rng),
            relu_mid: Relu::new(),
            sum_mask: None,
        }
    }

    pub fn forward(&mut self, input: &Tensor, cache: bool) -> Result<Tensor> {
        let a = self.conv1.forward(input, cache)?;
        let a = self.relu_mid.forward(&a, cache);
        let main = self.conv2.forward(&a, cache)?;
        let shortcut = self.proj.forward(input, cache)?;
        if main.shape() != shortcut.shape() {
            return Err(Error::config("residual branch shape mismatch"));
        }
        let mut sum = main;
        for (s, &p) in sum.data_mut().iter_mut().zip(shortcut.data()) {
            *s += p;
        }
        if cache {
            self.sum_mask = Some(sum.data().iter().map(|&v| v > 0.0).collect());
        }
        Ok(crate::nn::relu(&sum))
    }

    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let mask = self.sum_mask.as_ref().expect("backward before forward");
        let masked: Vec<f32> = grad
            .data()
            .iter()
            .zip(mask)
            .map(|(&g, &m)| if m { g } else { 0.0 })
            .collect();
        let d_sum = Tensor::from_vec(grad.shape(), masked)?;
        let d_shortcut_in = self.proj.backward(&d_sum)?;
        let d_a = self.conv2.backward(&d_sum)?;
        let d_a = self.relu_mid.backward(&d_a);
        let mut d_input = self.conv1.backward(&d_a)?;
        for (d, &s) in d_input.data_mut().iter_mut().zip(d_shortcut_in.data()) {
            *d += s;
        }
        Ok(d_input)
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![
            &mut self.conv1.weight,
            &mut self.conv1.bias,
            &mut self.conv2.weight,
            &mut self.conv2.bias,
            &mut self.proj.weight,
            &mut self.proj.bias,
        ]
    }

    pub fn params(&self) -> Vec<&Param> {
        vec![
            &self.conv1.weight,
            &self.conv1.bias,
            &self.conv2.weight,
            &self.conv2.bias,
            &self.proj.weight,
            &self.proj.bias,
        ]
    }

    pub fn summarize(&self, in_shape: &[usize]) -> Result<(Vec<LayerSummary>, Vec<usize>)> {
        let mid = self.conv1.out_shape(in_shape)?;
        let out = self.conv2.out_shape(&mid)?;
        let children = vec![
            LayerSummary {
                name: "conv1".into(),
                kind: "conv2d".into(),
                output_shape: mid.clone(),
                param_count: self.conv1.weight.count() + self.conv1.bias.count(),
                children: vec![],
            },
            LayerSummary {
                name: "conv2".into(),
                kind: "conv2d".into(),
                output_shape: out.clone(),
                param_count: self.conv2.weight.count() + self.conv2.bias.count(),
                children: vec![],
            },
            LayerSummary {
                name: "proj".into(),
                kind: "conv2d".into(),
                output_shape: self.proj.out_shape(in_shape)?,
                param_count: self.proj.weight.count() + self.proj.bias.count(),
                children: vec![],
            },
        ];
        Ok((children, out))
    }
}

/// Four parallel branches concatenated along channels, 8 channels each:
/// 1×1, 1×1→3×3, 1×1→5×5 and 3×3-maxpool→1×1.
#[derive(Clone, Debug)]
pub struct InceptionBlock {
    pub b1: Conv2d,
    pub b2_reduce: Conv2d,
    pub b2: Conv2d,
    pub b3_reduce: Conv2d,
    pub b3: Conv2d,
    pub pool: MaxPool2d,
    pub b4: Conv2d,
    relus: [Relu; 6],
    branch_ch: usize,
}

impl InceptionBlock {
    pub fn new<R: rand::Rng>(name: &str, in_ch: usize, rng: &mut R) -> InceptionBlock {
        let ch = 8;
        InceptionBlock {
            b1: Conv2d::new(&format!("{name}.b1"), in_ch, ch, (1, 1), 0, rng),
            b2_reduce: Conv2d::new(&format!("{name}.b2_reduce"), in_ch, ch, (1, 1), 0, rng),
            b2: Conv2d::new(&format!("{name}.b2"), ch, ch, (3, 3), 1, rng),
            b3_reduce: Conv2d::new(&format!("{name}.b3_reduce"), in_ch, ch, (1, 1), 0, rng),
            b3: Conv2d::new(&format!("{name}.b3"), ch, ch, (5, 5), 2, rng),
            pool: MaxPool2d::new((3, 3), (1, 1)).with_padding(1),
            b4: Conv2d::new(&format!("{name}.b4"), in_ch, ch, (1, 1), 0, rng),
            relus: Default::default(),
            branch_ch: ch,
        }
    }

    pub fn out_channels(&self) -> usize {
        4 * self.branch_ch
    }

    pub fn forward(&mut self, input: &Tensor, cache: bool) -> Result<Tensor> {
        let y1 = self.b1.forward(input, cache)?;
        let y1 = self.relus[0].forward(&y1, cache);

        let y2 = self.b2_reduce.forward(input, cache)?;
        let y2 = self.relus[1].forward(&y2, cache);
        let y2 = self.b2.forward(&y2, cache)?;
        let y2 = self.relus[2].forward(&y2, cache);

        let y3 = self.b3_reduce.forward(input, cache)?;
        let y3 = self.relus[3].forward(&y3, cache);
        let y3 = self.b3.forward(&y3, cache)?;
        let y3 = self.relus[4].forward(&y3, cache);

        let y4 = self.pool.forward(input, cache)?;
        let y4 = self.b4.forward(&y4, cache)?;
        let y4 = self.relus[5].forward(&y4, cache);

        concat_channels(&[&y1, &y2, &y3, &y4])
    }

    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let parts = split_channels(grad, 4)?;

        let d1 = self.relus[0].backward(&parts[0]);
        let d1 = self.b1.backward(&d1)?;

        let d2 = self.relus[2].backward(&parts[1]);
        let d2 = self.b2.backward(&d2)?;
        let d2 = self.relus[1].backward(&d2);
        let d2 = self.b2_reduce.backward(&d2)?;

        let d3 = self.relus[4].backward(&parts[2]);
        let d3 = self.b3.backward(&d3)?;
        let d3 = self.relus[3].backward(&d3);
        let d3 = self.b3_reduce.backward(&d3)?;

        let d4 = self.relus[5].backward(&parts[3]);
        let d4 = self.b4.backward(&d4)?;
        let d4 = self.pool.backward(&d4)?;

        let mut d_input = d1;
        for other in [&d2, &d3, &d4] {
            for (a, &b) in d_input.data_mut().iter_mut().zip(other.data()) {
                *a += b;
            }
        }
        Ok(d_input)
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![
            &mut self.b1.weight,
            &mut self.b1.bias,
            &mut self.b2_reduce.weight,
            &mut self.b2_reduce.bias,
            &mut self.b2.weight,
            &mut self.b2.bias,
            &mut self.b3_reduce.weight,
            &mut self.b3_reduce.bias,
            &mut self.b3.weight,
            &mut self.b3.bias,
            &mut self.b4.weight,
            &mut self.b4.bias,
        ]
    }

    pub fn params(&self) -> Vec<&Param> {
        vec![
            &self.b1.weight,
            &self.b1.bias,
            &self.b2_reduce.weight,
            &self.b2_reduce.bias,
            &self.b2.weight,
            &self.b2.bias,
            &self.b3_reduce.weight,
            &self.b3_reduce.bias,
            &self.b3.weight,
            &self.b3.bias,
            &self.b4.weight,
            &self.b4.bias,
        ]
    }

    pub fn summarize(&self, in_shape: &[usize]) -> Result<(Vec<LayerSummary>, Vec<usize>)> {
        let out = vec![
            in_shape[0],
            self.out_channels(),
            in_shape[2],
            in_shape[3],
        ];
        let branch = |name: &str, convs: Vec<&Conv2d>| -> LayerSummary {
            LayerSummary {
                name: name.into(),
                kind: "branch".into(),
                output_shape: vec![in_shape[0], self.branch_ch, in_shape[2], in_shape[3]],
                param_count: convs
                    .iter()
                    .map(|c| c.weight.count() + c.bias.count())
                    .sum(),
                children: vec![],
            }
        };
        let children = vec![
            branch("1x1", vec![&self.b1]),
            branch("1x1-3x3", vec![&self.b2_reduce, &self.b2]),
            branch("1x1-5x5", vec![&self.b3_reduce, &self.b3]),
            branch("pool-1x1", vec![&self.b4]),
        ];
        Ok((children, out))
    }
}

fn concat_channels(parts: &[&Tensor]) -> Result<Tensor> {
    let [b, c0, h, w]: [usize; 4] = parts[0]
        .shape()
        .try_into()
        .map_err(|_| Error::config("channel concat expects 4-d tensors"))?;
    for p in parts {
        let s = p.shape();
        if s.len() != 4 || s[0] != b || s[1] != c0 || s[2] != h || s[3] != w {
            return Err(Error::config("channel concat shape mismatch"));
        }
    }
    let c_total = c0 * parts.len();
    let plane = h * w;
    let mut out = Tensor::zeros(&[b, c_total, h, w]);
    let od = out.data_mut();
    for bi in 0..b {
        for (pi, p) in parts.iter().enumerate() {
            let src = &p.data()[bi * c0 * plane..(bi + 1) * c0 * plane];
            let dst_start = (bi * c_total + pi * c0) * plane;
            od[dst_start..dst_start + c0 * plane].copy_from_slice(src);
        }
    }
    Ok(out)
}

fn split_channels(t: &Tensor, n_parts: usize) -> Result<Vec<Tensor>> {
    let [b, c, h, w]: [usize; 4] = t
        .shape()
        .try_into()
        .map_err(|_| Error::config("channel split expects 4-d tensors"))?;
    if c % n_parts != 0 {
        return Err(Error::config("channel split must divide evenly"));
    }
    let c0 = c / n_parts;
    let plane = h * w;
    let mut parts = Vec::with_capacity(n_parts);
    for pi in 0..n_parts {
        let mut part = Tensor::zeros(&[b, c0, h, w]);
        let pd = part.data_mut();
        for bi in 0..b {
            let src_start = (bi * c + pi * c0) * plane;
            pd[bi * c0 * plane..(bi + 1) * c0 * plane]
                .copy_from_slice(&t.data()[src_start..src_start + c0 * plane]);
        }
        parts.push(part);
    }
    Ok(parts)
}
