//! The five patch classifiers, assembled for a given patch geometry.
//!
//! All of them output one sigmoid score per patch:
//!
//! * `BaseN` — six 3×3 convolutions (channels 16,16,32,32,64,64), ReLU after
//!   each, 2×2 max pool after every second conv while the spatial size
//!   permits, then flatten → linear → sigmoid. Time enters as input
//!   channels.
//! * `ResN` — the same backbone grouped into three residual blocks with 1×1
//!   projection shortcuts.
//! * `IncpN` — a 16-channel 3×3 stem followed by two inception modules
//!   (1×1 / 1×1→3×3 / 1×1→5×5 / pool→1×1 branches, 8 channels each), global
//!   average pooling and a linear head.
//! * `Conv3` — the 3D mirror of BaseN with 5×3×3 kernels on a single-channel
//!   t×h×w volume; temporal pooling stops once the depth would drop under
//!   the kernel reach.
//! * `Lstm` — two LSTM layers with hidden size 100 over the t flattened
//!   frames; the last hidden state feeds the linear head.

pub mod blocks;
pub mod weights;

pub use blocks::{Block, LayerSummary};
pub use weights::{load_weights, save_weights};

use crate::error::{Error, Result};
use crate::nn::{bce_loss, Fragment, Linear, LstmLayer, MaxPool2d, MaxPool3d, Param, Relu, Sigmoid};
use crate::patch::PatchBatch;
use crate::rng::seeded_rng;
use crate::tensor::Tensor;
use blocks::{Flatten, GlobalAvgPool2d, InceptionBlock, ResidualBlock};
use serde::{Deserialize, Serialize};

pub const LSTM_HIDDEN: usize = 100;
pub const SUPPORTED_SPATIAL: [usize; 4] = [8, 16, 32, 64];
pub const SWEEP_TEMPORAL: [usize; 4] = [5, 10, 50, 100];

const CHANNELS: [usize; 6] = [16, 16, 32, 32, 64, 64];
const CONV3_KERNEL: (usize, usize, usize) = (5, 3, 3);
const CONV3_PADDING: (usize, usize, usize) = (2, 1, 1);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchKind {
    BaseN,
    ResN,
    IncpN,
    Conv3,
    Lstm,
}

impl ArchKind {
    pub const ALL: [ArchKind; 5] = [
        ArchKind::BaseN,
        ArchKind::ResN,
        ArchKind::IncpN,
        ArchKind::Conv3,
        ArchKind::Lstm,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ArchKind::BaseN => "basen",
            ArchKind::ResN => "resn",
            ArchKind::IncpN => "incpn",
            ArchKind::Conv3 => "conv3",
            ArchKind::Lstm => "lstm",
        }
    }
}

impl std::fmt::Display for ArchKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ArchKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<ArchKind> {
        match s.to_ascii_lowercase().as_str() {
            "basen" => Ok(ArchKind::BaseN),
            "resn" => Ok(ArchKind::ResN),
            "incpn" => Ok(ArchKind::IncpN),
            "conv3" => Ok(ArchKind::Conv3),
            "lstm" => Ok(ArchKind::Lstm),
            other => Err(Error::config(format!(
                "unknown architecture '{other}' (expected basen|resn|incpn|conv3|lstm)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchGeometry {
    pub h: usize,
    pub w: usize,
    pub t: usize,
}

impl PatchGeometry {
    pub fn new(h: usize, w: usize, t: usize) -> PatchGeometry {
        PatchGeometry { h, w, t }
    }

    pub fn validate(&self) -> Result<()> {
        if !SUPPORTED_SPATIAL.contains(&self.h) || !SUPPORTED_SPATIAL.contains(&self.w) {
            return Err(Error::config(format!(
                "unsupported spatial patch size {}x{} (supported: {:?})",
                self.h, self.w, SUPPORTED_SPATIAL
            )));
        }
        if self.t == 0 {
            return Err(Error::config("temporal patch size must be >= 1"));
        }
        Ok(())
    }
}

impl std::fmt::Display for PatchGeometry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.h, self.w, self.t)
    }
}

/// Patch tensors in the layout one architecture family consumes.
#[derive(Clone, Debug)]
pub enum PatchView {
    /// `N×t×h×w`, time as channels (BaseN, ResN, IncpN).
    Planar(Tensor),
    /// `N×1×t×h×w` (Conv3).
    Volumetric(Tensor),
    /// `t` tensors of `N×(h·w)` (Lstm).
    Sequence(Vec<Tensor>),
}

impl PatchView {
    /// Builds the view `kind` expects from a patch batch.
    pub fn for_kind(kind: ArchKind, batch: &PatchBatch) -> PatchView {
        match kind {
            ArchKind::BaseN | ArchKind::ResN | ArchKind::IncpN => {
                PatchView::Planar(crate::patch::to_2d_view(batch))
            }
            ArchKind::Conv3 => PatchView::Volumetric(crate::patch::to_3d_view(batch)),
            ArchKind::Lstm => PatchView::Sequence(crate::patch::to_sequence(batch)),
        }
    }

    pub fn batch_len(&self) -> usize {
        match self {
            PatchView::Planar(t) => t.shape()[0],
            PatchView::Volumetric(t) => t.shape()[0],
            PatchView::Sequence(seq) => seq.first().map_or(0, |t| t.shape()[0]),
        }
    }
}

#[derive(Clone, Debug)]
struct LstmNet {
    layer1: LstmLayer,
    layer2: LstmLayer,
    head: Linear,
    out: Sigmoid,
    seq_len: Option<usize>,
}

#[derive(Clone, Debug)]
enum Body {
    Stack(Vec<Block>),
    Lstm(Box<LstmNet>),
}

/// An assembled architecture: layer graph plus parameter store.
#[derive(Clone, Debug)]
pub struct Network {
    pub kind: ArchKind,
    pub geometry: PatchGeometry,
    body: Body,
}

/// Serializable layer-by-layer description.
#[derive(Clone, Debug, Serialize)]
pub struct NetworkSummary {
    pub arch: ArchKind,
    pub geometry: PatchGeometry,
    pub total_params: usize,
    pub layers: Vec<LayerSummary>,
}

/// Assembles a network of the given kind for the patch geometry, with
/// weights drawn from the seed.
pub fn build(kind: ArchKind, h: usize, w: usize, t: usize, seed: u64) -> Result<Network> {
    let geometry = PatchGeometry::new(h, w, t);
    geometry.validate()?;
    let mut rng = seeded_rng(seed, "arch-init", kind as u64);
    let body = match kind {
        ArchKind::BaseN => Body::Stack(build_basen(h, w, t, &mut rng)),
        ArchKind::ResN => Body::Stack(build_resn(h, w, t, &mut rng)),
        ArchKind::IncpN => Body::Stack(build_incpn(t, &mut rng)),
        ArchKind::Conv3 => Body::Stack(build_conv3(h, w, t, &mut rng)),
        ArchKind::Lstm => Body::Lstm(Box::new(LstmNet {
            layer1: LstmLayer::new("lstm1", h * w, LSTM_HIDDEN, &mut rng),
            layer2: LstmLayer::new("lstm2", LSTM_HIDDEN, LSTM_HIDDEN, &mut rng),
            head: Linear::new("head", LSTM_HIDDEN, 1, &mut rng),
            out: Sigmoid::new(),
            seq_len: None,
        })),
    };
    Ok(Network {
        kind,
        geometry,
        body,
    })
}

/// Pool only while the pooled spatial extent stays >= 2.
fn spatial_pool_applies(h: usize, w: usize) -> bool {
    h >= 4 && w >= 4
}

/// Temporal pooling stops once the pooled depth would drop under the
/// kernel's depth reach (kd = 5).
fn temporal_pool_applies(t: usize) -> bool {
    t >= 2 && (t - 2) / 2 + 1 >= CONV3_KERNEL.0
}

fn build_basen<R: rand::Rng>(h: usize, w: usize, t: usize, rng: &mut R) -> Vec<Block> {
    let mut layers = Vec::new();
    let (mut ch, mut sh, mut sw) = (t, h, w);
    for (i, &out_ch) in CHANNELS.iter().enumerate() {
        layers.push(Block::Conv2d(
            format!("conv{}", i + 1),
            crate::nn::Conv2d::new(&format!("conv{}", i + 1), ch, out_ch, (3, 3), 1, rng),
        ));
        layers.push(Block::Relu(format!("relu{}", i + 1), Relu::new()));
        if i % 2 == 1 && spatial_pool_applies(sh, sw) {
            layers.push(Block::MaxPool2d(
                format!("pool{}", i / 2 + 1),
                MaxPool2d::new((2, 2), (2, 2)),
            ));
            sh /= 2;
            sw /= 2;
        }
        ch = out_ch;
    }
    layers.push(Block::Flatten("flatten".into(), Flatten::new()));
    layers.push(Block::Linear(
        "head".into(),
        Linear::new("head", ch * sh * sw, 1, rng),
    ));
    layers.push(Block::Sigmoid("sigmoid".into(), Sigmoid::new()));
    layers
}

fn build_resn<R: rand::Rng>(h: usize, w: usize, t: usize, rng: &mut R) -> Vec<Block> {
    let mut layers = Vec::new();
    let (mut ch, mut sh, mut sw) = (t, h, w);
    for (i, out_ch) in [16usize, 32, 64].into_iter().enumerate() {
        layers.push(Block::Residual(
            format!("block{}", i + 1),
            ResidualBlock::new(&format!("block{}", i + 1), ch, out_ch, rng),
        ));
        if spatial_pool_applies(sh, sw) {
            layers.push(Block::MaxPool2d(
                format!("pool{}", i + 1),
                MaxPool2d::new((2, 2), (2, 2)),
            ));
            sh /= 2;
            sw /= 2;
        }
        ch = out_ch;
    }
    layers.push(Block::Flatten("flatten".into(), Flatten::new()));
    layers.push(Block::Linear(
        "head".into(),
        Linear::new("head", ch * sh * sw, 1, rng),
    ));
    layers.push(Block::Sigmoid("sigmoid".into(), Sigmoid::new()));
    layers
}

fn build_incpn<R: rand::Rng>(t: usize, rng: &mut R) -> Vec<Block> {
    let mut layers = Vec::new();
    layers.push(Block::Conv2d(
        "stem".into(),
        crate::nn::Conv2d::new("stem", t, 16, (3, 3), 1, rng),
    ));
    layers.push(Block::Relu("stem_relu".into(), Relu::new()));
    let incp1 = InceptionBlock::new("incp1", 16, rng);
    let mid_ch = incp1.out_channels();
    layers.push(Block::Inception("incp1".into(), incp1));
    let incp2 = InceptionBlock::new("incp2", mid_ch, rng);
    let out_ch = incp2.out_channels();
    layers.push(Block::Inception("incp2".into(), incp2));
    layers.push(Block::GlobalAvgPool("gap".into(), GlobalAvgPool2d::new()));
    layers.push(Block::Linear(
        "head".into(),
        Linear::new("head", out_ch, 1, rng),
    ));
    layers.push(Block::Sigmoid("sigmoid".into(), Sigmoid::new()));
    layers
}

fn build_conv3<R: rand::Rng>(h: usize, w: usize, t: usize, rng: &mut R) -> Vec<Block> {
    let mut layers = Vec::new();
    let (mut ch, mut sd, mut sh, mut sw) = (1usize, t, h, w);
    for (i, &out_ch) in CHANNELS.iter().enumerate() {
        layers.push(Block::Conv3d(
            format!("conv{}", i + 1),
            crate::nn::Conv3d::new(
                &format!("conv{}", i + 1),
                ch,
                out_ch,
                CONV3_KERNEL,
                CONV3_PADDING,
                rng,
            ),
        ));
        layers.push(Block::Relu(format!("relu{}", i + 1), Relu::new()));
        if i % 2 == 1 {
            let wt = if temporal_pool_applies(sd) { 2 } else { 1 };
            let wsp = if spatial_pool_applies(sh, sw) { 2 } else { 1 };
            if wt > 1 || wsp > 1 {
                layers.push(Block::MaxPool3d(
                    format!("pool{}", i / 2 + 1),
                    MaxPool3d::new((wt, wsp, wsp), (wt, wsp, wsp)),
                ));
                sd = (sd - wt) / wt + 1;
                sh = (sh - wsp) / wsp + 1;
                sw = (sw - wsp) / wsp + 1;
            }
        }
        ch = out_ch;
    }
    layers.push(Block::Flatten("flatten".into(), Flatten::new()));
    layers.push(Block::Linear(
        "head".into(),
        Linear::new("head", ch * sd * sh * sw, 1, rng),
    ));
    layers.push(Block::Sigmoid("sigmoid".into(), Sigmoid::new()));
    layers
}

impl Network {
    /// Forward to one score per patch, in `[0,1]`. `cache` retains what the
    /// backward pass needs and is only required when training.
    pub fn forward_scores(&mut self, view: &PatchView, cache: bool) -> Result<Tensor> {
        self.check_view(view)?;
        match (&mut self.body, view) {
            (Body::Stack(blocks), PatchView::Planar(x))
            | (Body::Stack(blocks), PatchView::Volumetric(x)) => {
                let mut cur = x.clone();
                for b in blocks.iter_mut() {
                    cur = b.forward(&cur, cache)?;
                }
                let n = cur.shape()[0];
                cur.reshape(&[n])
            }
            (Body::Lstm(net), PatchView::Sequence(xs)) => {
                let b = xs[0].shape()[0];
                let zeros = Tensor::zeros(&[b, LSTM_HIDDEN]);
                let (hs1, _, _) = net.layer1.forward(xs, &zeros, &zeros, cache)?;
                let (hs2, last_h, _) = net.layer2.forward(&hs1, &zeros, &zeros, cache)?;
                net.seq_len = Some(hs2.len());
                let z = net.head.forward(&last_h, cache)?;
                let s = net.out.forward(&z, cache);
                s.reshape(&[b])
            }
            _ => unreachable!("check_view filters mismatches"),
        }
    }

    /// Backward from the per-patch score gradient; parameter gradients
    /// accumulate into the param store.
    pub fn backward_scores(&mut self, grad_scores: &Tensor) -> Result<()> {
        let n = grad_scores.len();
        match &mut self.body {
            Body::Stack(blocks) => {
                let mut grad = grad_scores.clone().reshape(&[n, 1])?;
                for b in blocks.iter_mut().rev() {
                    grad = b.backward(&grad)?;
                }
                Ok(())
            }
            Body::Lstm(net) => {
                let t = net
                    .seq_len
                    .ok_or_else(|| Error::config("backward before forward"))?;
                let grad = grad_scores.clone().reshape(&[n, 1])?;
                let dz = net.out.backward(&grad);
                let d_last = net.head.backward(&dz)?;
                let mut grad_hs2 = vec![Tensor::zeros(&[n, LSTM_HIDDEN]); t - 1];
                grad_hs2.push(d_last);
                let grad_hs1 = net.layer2.backward(&grad_hs2)?;
                net.layer1.backward(&grad_hs1)?;
                Ok(())
            }
        }
    }

    fn check_view(&self, view: &PatchView) -> Result<()> {
        let g = &self.geometry;
        let ok = match (self.kind, view) {
            (ArchKind::BaseN | ArchKind::ResN | ArchKind::IncpN, PatchView::Planar(x)) => {
                x.shape().len() == 4 && x.shape()[1..] == [g.t, g.h, g.w]
            }
            (ArchKind::Conv3, PatchView::Volumetric(x)) => {
                x.shape().len() == 5 && x.shape()[1..] == [1, g.t, g.h, g.w]
            }
            (ArchKind::Lstm, PatchView::Sequence(xs)) => {
                xs.len() == g.t && xs.iter().all(|x| {
                    x.shape().len() == 2 && x.shape()[1] == g.h * g.w
                })
            }
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!(
                "patch view does not match {} with geometry {}x{}x{}",
                self.kind, g.h, g.w, g.t
            )))
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        match &mut self.body {
            Body::Stack(blocks) => blocks.iter_mut().flat_map(|b| b.params_mut()).collect(),
            Body::Lstm(net) => vec![
                &mut net.layer1.w_ih,
                &mut net.layer1.w_hh,
                &mut net.layer1.bias,
                &mut net.layer2.w_ih,
                &mut net.layer2.w_hh,
                &mut net.layer2.bias,
                &mut net.head.weight,
                &mut net.head.bias,
            ],
        }
    }

    pub fn params(&self) -> Vec<&Param> {
        match &self.body {
            Body::Stack(blocks) => blocks.iter().flat_map(|b| b.params()).collect(),
            Body::Lstm(net) => vec![
                &net.layer1.w_ih,
                &net.layer1.w_hh,
                &net.layer1.bias,
                &net.layer2.w_ih,
                &net.layer2.w_hh,
                &net.layer2.bias,
                &net.head.weight,
                &net.head.bias,
            ],
        }
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.count()).sum()
    }

    pub fn zero_grads(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    /// Snapshot of all parameter values in traversal order.
    pub fn snapshot(&self) -> Vec<Vec<f32>> {
        self.params().iter().map(|p| p.value.data().to_vec()).collect()
    }

    pub fn restore(&mut self, snapshot: &[Vec<f32>]) -> Result<()> {
        let mut params = self.params_mut();
        if params.len() != snapshot.len() {
            return Err(Error::config("snapshot does not match parameter layout"));
        }
        for (p, s) in params.iter_mut().zip(snapshot) {
            if p.value.len() != s.len() {
                return Err(Error::config("snapshot does not match parameter shapes"));
            }
            p.value.data_mut().copy_from_slice(s);
        }
        Ok(())
    }

    /// Layer-by-layer shapes and parameter counts.
    pub fn describe(&self) -> Result<NetworkSummary> {
        let g = &self.geometry;
        let mut layers = Vec::new();
        match &self.body {
            Body::Stack(blocks) => {
                let mut shape = match self.kind {
                    ArchKind::Conv3 => vec![1, 1, g.t, g.h, g.w],
                    _ => vec![1, g.t, g.h, g.w],
                };
                for b in blocks {
                    let (summary, out_shape) = b.summarize(&shape)?;
                    layers.push(summary);
                    shape = out_shape;
                }
            }
            Body::Lstm(net) => {
                for (name, layer) in [("lstm1", &net.layer1), ("lstm2", &net.layer2)] {
                    layers.push(LayerSummary {
                        name: name.into(),
                        kind: "lstm".into(),
                        output_shape: vec![1, LSTM_HIDDEN],
                        param_count: layer.param_count(),
                        children: vec![],
                    });
                }
                layers.push(LayerSummary {
                    name: "head".into(),
                    kind: "linear".into(),
                    output_shape: vec![1, 1],
                    param_count: net.head.weight.count() + net.head.bias.count(),
                    children: vec![],
                });
                layers.push(LayerSummary {
                    name: "sigmoid".into(),
                    kind: "sigmoid".into(),
                    output_shape: vec![1, 1],
                    param_count: 0,
                    children: vec![],
                });
            }
        }
        Ok(NetworkSummary {
            arch: self.kind,
            geometry: self.geometry,
            total_params: self.param_count(),
            layers,
        })
    }
}

/// A network pinned to one input and target batch, for gradient checking.
pub struct NetFragment {
    pub net: Network,
    pub view: PatchView,
    pub targets: Tensor,
}

impl Fragment for NetFragment {
    fn loss(&mut self) -> Result<f32> {
        let scores = self.net.forward_scores(&self.view, false)?;
        Ok(bce_loss(&scores, &self.targets)?.0)
    }

    fn loss_and_grads(&mut self) -> Result<f32> {
        let scores = self.net.forward_scores(&self.view, true)?;
        let (loss, grad) = bce_loss(&scores, &self.targets)?;
        self.net.backward_scores(&grad)?;
        Ok(loss)
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.net.params_mut()
    }
}
