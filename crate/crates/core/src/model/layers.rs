//! Building blocks: convolution stacks, the attention gate, the multi-input
//! attention module (MAM) and the attention fusion module (AFM).

use crate::error::{Error, Result};
use crate::graph::{BatchNormRef, Tape, Var};
use crate::params::{ParamBuilder, ParamId};
use crate::scalar::Scalar;

use super::spec::AttentionGateSpec;

#[derive(Clone, Copy, Debug)]
pub struct Conv {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
}

impl Conv {
    pub fn new<T: Scalar>(
        b: &mut ParamBuilder<T>,
        prefix: &str,
        block: &str,
        cin: usize,
        cout: usize,
        k: usize,
        bias: bool,
    ) -> Self {
        let weight = b.conv_weight(format!("{prefix}.weight"), block, cout, cin, k);
        let bias = bias.then(|| b.constant(format!("{prefix}.bias"), block, cout, 0.0));
        Conv { weight, bias }
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<'_, T>, x: Var) -> Result<Var> {
        tape.conv2d(x, self.weight, self.bias)
    }
}

fn batch_norm<T: Scalar>(b: &mut ParamBuilder<T>, prefix: &str, block: &str, c: usize) -> BatchNormRef {
    BatchNormRef {
        gamma: b.constant(format!("{prefix}.gamma"), block, c, 1.0),
        beta: b.constant(format!("{prefix}.beta"), block, c, 0.0),
        running_mean: b.buffer(format!("{prefix}.running_mean"), block, c, 0.0),
        running_var: b.buffer(format!("{prefix}.running_var"), block, c, 1.0),
    }
}

/// conv -> batch norm -> ReLU. The convolution has no bias since the
/// normalisation shift subsumes it.
#[derive(Clone, Copy, Debug)]
pub struct ConvBnRelu {
    pub conv: Conv,
    pub norm: BatchNormRef,
}

impl ConvBnRelu {
    pub fn new<T: Scalar>(
        b: &mut ParamBuilder<T>,
        prefix: &str,
        block: &str,
        cin: usize,
        cout: usize,
        k: usize,
        suffix: &str,
    ) -> Self {
        ConvBnRelu {
            conv: Conv::new(b, &format!("{prefix}.conv{suffix}"), block, cin, cout, k, false),
            norm: batch_norm(b, &format!("{prefix}.bn{suffix}"), block, cout),
        }
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<'_, T>, x: Var) -> Result<Var> {
        let y = self.conv.forward(tape, x)?;
        let y = tape.batch_norm(y, self.norm)?;
        Ok(tape.relu(y))
    }
}

/// Two consecutive conv-BN-ReLU units.
#[derive(Clone, Copy, Debug)]
pub struct DoubleConv {
    pub first: ConvBnRelu,
    pub second: ConvBnRelu,
}

impl DoubleConv {
    pub fn new<T: Scalar>(b: &mut ParamBuilder<T>, prefix: &str, cin: usize, cout: usize, k: usize) -> Self {
        DoubleConv {
            first: ConvBnRelu::new(b, prefix, prefix, cin, cout, k, "1"),
            second: ConvBnRelu::new(b, prefix, prefix, cout, cout, k, "2"),
        }
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<'_, T>, x: Var) -> Result<Var> {
        let y = self.first.forward(tape, x)?;
        self.second.forward(tape, y)
    }
}

/// Bilinear 2x upsampling followed by conv-BN-ReLU.
#[derive(Clone, Copy, Debug)]
pub struct UpConv {
    pub unit: ConvBnRelu,
}

impl UpConv {
    pub fn new<T: Scalar>(b: &mut ParamBuilder<T>, prefix: &str, cin: usize, cout: usize, k: usize) -> Self {
        UpConv {
            unit: ConvBnRelu::new(b, prefix, prefix, cin, cout, k, ""),
        }
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<'_, T>, x: Var) -> Result<Var> {
        let up = tape.upsample2(x);
        self.unit.forward(tape, up)
    }
}

/// Additive attention gate.
///
/// `alpha = sigmoid(W_att * relu(W_x * x + W_g * g + b_g) + b_att)` with all
/// products being 1x1 convolutions; the gate returns `alpha` and `alpha * x`.
#[derive(Clone, Copy, Debug)]
pub struct AttentionGate {
    pub spec: AttentionGateSpec,
    pub w_x: Conv,
    pub w_g: Conv,
    pub w_att: Conv,
}

#[derive(Clone, Copy, Debug)]
pub struct GateOutput {
    pub alpha: Var,
    pub attended: Var,
}

impl AttentionGate {
    pub fn new<T: Scalar>(b: &mut ParamBuilder<T>, prefix: &str, spec: AttentionGateSpec) -> Result<Self> {
        spec.validate()?;
        Ok(AttentionGate {
            spec,
            w_x: Conv::new(b, &format!("{prefix}.w_x"), prefix, spec.f_x, spec.f_int, 1, false),
            w_g: Conv::new(b, &format!("{prefix}.w_g"), prefix, spec.f_g, spec.f_int, 1, true),
            w_att: Conv::new(b, &format!("{prefix}.w_att"), prefix, spec.f_int, 1, 1, true),
        })
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<'_, T>, x: Var, g: Var) -> Result<GateOutput> {
        let (xs, gs) = (tape.shape(x), tape.shape(g));
        if xs[0] != gs[0] || xs[2..] != gs[2..] {
            return Err(Error::Shape(format!(
                "attention gate input {xs:?} and gating signal {gs:?} are not aligned"
            )));
        }
        let theta = self.w_x.forward(tape, x)?;
        let phi = self.w_g.forward(tape, g)?;
        let sum = tape.add(theta, phi)?;
        let act = tape.relu(sum);
        let q = self.w_att.forward(tape, act)?;
        let alpha = tape.sigmoid(q);
        let attended = tape.mul(x, alpha)?;
        Ok(GateOutput { alpha, attended })
    }
}

/// Multi-input attention: one gate per path sharing the decoder gating
/// signal, attended features summed.
#[derive(Clone, Copy, Debug)]
pub struct Mam {
    pub seg_gate: AttentionGate,
    /// 1x1 projection of atlas features when their width differs.
    pub atlas_proj: Option<Conv>,
    pub atlas_gate: AttentionGate,
}

#[derive(Clone, Copy, Debug)]
pub struct MamOutput {
    pub output: Var,
    pub seg: GateOutput,
    pub atlas: GateOutput,
}

impl Mam {
    pub fn new<T: Scalar>(
        b: &mut ParamBuilder<T>,
        prefix: &str,
        seg_channels: usize,
        atlas_channels: usize,
        gate_channels: usize,
    ) -> Result<Self> {
        let spec = AttentionGateSpec::halving(seg_channels, gate_channels);
        let atlas_proj = (atlas_channels != seg_channels).then(|| {
            let p = format!("{prefix}.atlas_proj");
            Conv::new(b, &p, prefix, atlas_channels, seg_channels, 1, true)
        });
        Ok(Mam {
            seg_gate: AttentionGate::new(b, &format!("{prefix}.seg_gate"), spec)?,
            atlas_proj,
            atlas_gate: AttentionGate::new(b, &format!("{prefix}.atlas_gate"), spec)?,
        })
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<'_, T>, x_seg: Var, x_atlas: Var, g: Var) -> Result<MamOutput> {
        let (ss, sa) = (tape.shape(x_seg), tape.shape(x_atlas));
        if ss[0] != sa[0] || ss[2..] != sa[2..] {
            return Err(Error::Shape(format!(
                "MAM inputs {ss:?} and {sa:?} are not spatially aligned"
            )));
        }
        let x_atlas = match &self.atlas_proj {
            Some(p) => p.forward(tape, x_atlas)?,
            None => x_atlas,
        };
        let seg = self.seg_gate.forward(tape, x_seg, g)?;
        let atlas = self.atlas_gate.forward(tape, x_atlas, g)?;
        let output = tape.add(seg.attended, atlas.attended)?;
        Ok(MamOutput { output, seg, atlas })
    }
}

/// Attention fusion head: channel weights from pooled atlas features
/// modulate the segmentation features, and a 1x1 convolution over
/// `[weighted, f_seg]` produces the logits.
#[derive(Clone, Copy, Debug)]
pub struct Afm {
    pub squeeze: Conv,
    pub excite: Conv,
    pub head: Conv,
}

#[derive(Clone, Copy, Debug)]
pub struct AfmOutput {
    pub weights: Var,
    pub fused: Var,
    pub logits: Var,
}

pub const AFM_REDUCTION: usize = 4;

impl Afm {
    pub fn new<T: Scalar>(b: &mut ParamBuilder<T>, prefix: &str, channels: usize) -> Self {
        let hidden = (channels / AFM_REDUCTION).max(1);
        Afm {
            squeeze: Conv::new(b, &format!("{prefix}.squeeze"), prefix, channels, hidden, 1, true),
            excite: Conv::new(b, &format!("{prefix}.excite"), prefix, hidden, channels, 1, true),
            head: Conv::new(b, &format!("{prefix}.head"), prefix, 2 * channels, 1, 1, true),
        }
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<'_, T>, f_seg: Var, f_atlas: Var) -> Result<AfmOutput> {
        if tape.shape(f_seg) != tape.shape(f_atlas) {
            return Err(Error::Shape(format!(
                "AFM inputs {:?} and {:?} differ",
                tape.shape(f_seg),
                tape.shape(f_atlas)
            )));
        }
        let pooled = tape.global_avg_pool(f_atlas);
        let hidden = self.squeeze.forward(tape, pooled)?;
        let hidden = tape.relu(hidden);
        let q = self.excite.forward(tape, hidden)?;
        let weights = tape.sigmoid(q);
        let fused = tape.mul(f_seg, weights)?;
        let cat = tape.concat(&[fused, f_seg])?;
        let logits = self.head.forward(tape, cat)?;
        Ok(AfmOutput { weights, fused, logits })
    }
}
