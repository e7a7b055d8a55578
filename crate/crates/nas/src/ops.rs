//! The twelve candidate operations of the fusion cell.

use std::fmt;
use std::str::FromStr;

use gaitfield_autodiff::{Conv3dSpec, Graph, Pool3dSpec, Result, Tensor, TensorError, Var};

use crate::params::{Init, ParamLookup, ParamSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum OpKind {
    DepthwiseSepConv3,
    DepthwiseSepConv5,
    AtrousConv3Rate2,
    AtrousConv5Rate2,
    AvgPool3,
    MaxPool3,
    SkipConnect,
    Zero,
    ChannelAttention,
    SpatialAttention,
    TemporalAttention,
    SelfAttention,
}

pub const NUM_OPS: usize = 12;

impl OpKind {
    pub const ALL: [OpKind; NUM_OPS] = [
        OpKind::DepthwiseSepConv3,
        OpKind::DepthwiseSepConv5,
        OpKind::AtrousConv3Rate2,
        OpKind::AtrousConv5Rate2,
        OpKind::AvgPool3,
        OpKind::MaxPool3,
        OpKind::SkipConnect,
        OpKind::Zero,
        OpKind::ChannelAttention,
        OpKind::SpatialAttention,
        OpKind::TemporalAttention,
        OpKind::SelfAttention,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<OpKind> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            OpKind::DepthwiseSepConv3 => "DepthwiseSepConv3",
            OpKind::DepthwiseSepConv5 => "DepthwiseSepConv5",
            OpKind::AtrousConv3Rate2 => "AtrousConv3Rate2",
            OpKind::AtrousConv5Rate2 => "AtrousConv5Rate2",
            OpKind::AvgPool3 => "AvgPool3",
            OpKind::MaxPool3 => "MaxPool3",
            OpKind::SkipConnect => "SkipConnect",
            OpKind::Zero => "Zero",
            OpKind::ChannelAttention => "ChannelAttention",
            OpKind::SpatialAttention => "SpatialAttention",
            OpKind::TemporalAttention => "TemporalAttention",
            OpKind::SelfAttention => "SelfAttention",
        }
    }

    /// Kernel extent and dilation of the convolutional kinds.
    fn conv_geometry(self) -> Option<(usize, usize)> {
        match self {
            OpKind::DepthwiseSepConv3 => Some((3, 1)),
            OpKind::DepthwiseSepConv5 => Some((5, 1)),
            OpKind::AtrousConv3Rate2 => Some((3, 2)),
            OpKind::AtrousConv5Rate2 => Some((5, 2)),
            _ => None,
        }
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UnknownOp(pub String);

impl fmt::Display for UnknownOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unknown operation `{}`", self.0)
    }
}

impl std::error::Error for UnknownOp {}

impl FromStr for OpKind {
    type Err = UnknownOp;

    fn from_str(s: &str) -> std::result::Result<Self, UnknownOp> {
        OpKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| UnknownOp(s.to_string()))
    }
}

/// Feature geometry the parameterized operations are built for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OpContext {
    pub channels: usize,
    /// Temporal extent; the temporal attention bottleneck is sized from it.
    pub frames: usize,
    /// Bottleneck reduction of the attention projections.
    pub reduction: usize,
}

impl OpContext {
    pub fn new(channels: usize, frames: usize) -> Self {
        OpContext {
            channels,
            frames,
            reduction: 4,
        }
    }

    fn reduced(&self, n: usize) -> usize {
        (n / self.reduction.max(1)).max(1)
    }
}

const SPATIAL_KERNEL: usize = 7;

/// Parameters of `kind`, named relative to the operation.
pub fn op_params(kind: OpKind, ctx: OpContext) -> Vec<ParamSpec> {
    let c = ctx.channels;
    if let Some((k, _)) = kind.conv_geometry() {
        return vec![
            ParamSpec::new("dw.weight", &[c, 1, k, k, k], Init::FanIn(k * k * k)),
            ParamSpec::new("pw.weight", &[c, c, 1, 1, 1], Init::FanIn(c)),
            ParamSpec::new("pw.bias", &[c], Init::Zeros),
        ];
    }
    match kind {
        OpKind::ChannelAttention => bottleneck(c, ctx.reduced(c)),
        OpKind::TemporalAttention => bottleneck(ctx.frames, ctx.reduced(ctx.frames)),
        OpKind::SpatialAttention => {
            let k = SPATIAL_KERNEL;
            vec![
                ParamSpec::new("conv.weight", &[1, 2, 1, k, k], Init::FanIn(2 * k * k)),
                ParamSpec::new("conv.bias", &[1], Init::Zeros),
            ]
        }
        OpKind::SelfAttention => {
            let r = ctx.reduced(c);
            vec![
                ParamSpec::new("query.weight", &[c, r], Init::FanIn(c)),
                ParamSpec::new("query.bias", &[r], Init::Zeros),
                ParamSpec::new("key.weight", &[c, r], Init::FanIn(c)),
                ParamSpec::new("key.bias", &[r], Init::Zeros),
                ParamSpec::new("value.weight", &[c, c], Init::FanIn(c)),
                ParamSpec::new("value.bias", &[c], Init::Zeros),
            ]
        }
        _ => Vec::new(),
    }
}

fn bottleneck(n: usize, hidden: usize) -> Vec<ParamSpec> {
    vec![
        ParamSpec::new("fc1.weight", &[n, hidden], Init::FanIn(n)),
        ParamSpec::new("fc1.bias", &[hidden], Init::Zeros),
        ParamSpec::new("fc2.weight", &[hidden, n], Init::FanIn(hidden)),
        ParamSpec::new("fc2.bias", &[n], Init::Zeros),
    ]
}

fn dims5(g: &Graph, x: Var) -> Result<[usize; 5]> {
    <[usize; 5]>::try_from(g.shape(x)).map_err(|_| TensorError::InvalidArgument {
        op: "apply_op",
        msg: format!("expected (B, C, T, H, W), got {:?}", g.shape(x)),
    })
}

/// `sigmoid(fc2(relu(fc1(v))))` over the last axis of a `(B, n)` matrix.
fn gate(g: &mut Graph, v: Var, p: &dyn ParamLookup) -> Result<Var> {
    let h = g.matmul(v, p.param("fc1.weight"))?;
    let h = g.add(h, p.param("fc1.bias"))?;
    let h = g.relu(h);
    let o = g.matmul(h, p.param("fc2.weight"))?;
    let o = g.add(o, p.param("fc2.bias"))?;
    Ok(g.sigmoid(o))
}

/// Applies one candidate operation; every kind preserves the `(B, C, T, H, W)` shape.
pub fn apply_op(g: &mut Graph, kind: OpKind, x: Var, p: &dyn ParamLookup) -> Result<Var> {
    let [b, c, t, h, w] = dims5(g, x)?;
    if let Some((_, d)) = kind.conv_geometry() {
        let dw = g.conv3d(x, p.param("dw.weight"), None, Conv3dSpec::dilated(d).grouped(c))?;
        return g.conv3d(
            dw,
            p.param("pw.weight"),
            Some(p.param("pw.bias")),
            Conv3dSpec::default(),
        );
    }
    match kind {
        OpKind::AvgPool3 => g.avgpool3d(x, Pool3dSpec::same(3)),
        OpKind::MaxPool3 => g.maxpool3d(x, Pool3dSpec::same(3)),
        OpKind::SkipConnect => Ok(x),
        OpKind::Zero => Ok(g.constant(Tensor::zeros(&[b, c, t, h, w]))),
        OpKind::ChannelAttention => {
            let m = g.mean_axes(x, &[2, 3, 4])?;
            let m = g.reshape(m, &[b, c])?;
            let s = gate(g, m, p)?;
            let s = g.reshape(s, &[b, c, 1, 1, 1])?;
            g.mul(x, s)
        }
        OpKind::TemporalAttention => {
            let m = g.mean_axes(x, &[1, 3, 4])?;
            let m = g.reshape(m, &[b, t])?;
            let s = gate(g, m, p)?;
            let s = g.reshape(s, &[b, 1, t, 1, 1])?;
            g.mul(x, s)
        }
        OpKind::SpatialAttention => {
            let mean = g.mean_axes(x, &[1])?;
            let max = g.max_axes(x, &[1])?;
            let maps = g.concat(&[mean, max], 1)?;
            let a = g.conv3d(
                maps,
                p.param("conv.weight"),
                Some(p.param("conv.bias")),
                Conv3dSpec::default(),
            )?;
            let a = g.sigmoid(a);
            g.mul(x, a)
        }
        OpKind::SelfAttention => {
            let n = t * h * w;
            let flat = g.reshape(x, &[b, c, n])?;
            let tokens = g.permute(flat, &[0, 2, 1])?;
            let proj = |g: &mut Graph, name: &str| -> Result<Var> {
                let y = g.matmul(tokens, p.param(&format!("{name}.weight")))?;
                g.add(y, p.param(&format!("{name}.bias")))
            };
            let q = proj(g, "query")?;
            let k = proj(g, "key")?;
            let v = proj(g, "value")?;
            let r = g.shape(q)[2];
            let kt = g.permute(k, &[0, 2, 1])?;
            let scores = g.matmul(q, kt)?;
            let scores = g.scale(scores, 1.0 / (r as f64).sqrt());
            let attn = g.softmax(scores, 2)?;
            let out = g.matmul(attn, v)?;
            let out = g.permute(out, &[0, 2, 1])?;
            let out = g.reshape(out, &[b, c, t, h, w])?;
            g.add(x, out)
        }
        _ => unreachable!("convolutional kinds handled above"),
    }
}
