//! The dual-path network and its variants.

use crate::error::{Error, Result};
use crate::graph::{NormMode, NormStats, Tape, Var};
use crate::params::{ParamBuilder, ParameterSet};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::layers::{Afm, Conv, DoubleConv, Mam, UpConv};
use super::spec::{ModelSpec, Variant};

/// Encoder-decoder topology shared by both paths. Level `l` runs at
/// resolution `canvas / 2^l`; level 4 is the bottleneck.
#[derive(Clone, Debug)]
struct PathLayout {
    enc: Vec<DoubleConv>,
    bottleneck: DoubleConv,
    /// `up[l]` lifts level `l + 1` to level `l`.
    up: Vec<UpConv>,
    dec: Vec<DoubleConv>,
}

impl PathLayout {
    fn new<T: Scalar>(
        b: &mut ParamBuilder<T>,
        prefix: &str,
        in_channels: usize,
        ch: &[usize; 5],
        k: usize,
        dec_in: impl Fn(usize) -> usize,
    ) -> Self {
        let mut enc = Vec::new();
        let mut cin = in_channels;
        for (l, &c) in ch[..4].iter().enumerate() {
            enc.push(DoubleConv::new(b, &format!("{prefix}.enc{l}"), cin, c, k));
            cin = c;
        }
        let bottleneck = DoubleConv::new(b, &format!("{prefix}.bottleneck"), ch[3], ch[4], k);
        let mut up = Vec::new();
        let mut dec = Vec::new();
        for l in 0..4 {
            up.push(UpConv::new(b, &format!("{prefix}.up{l}"), ch[l + 1], ch[l], k));
            dec.push(DoubleConv::new(b, &format!("{prefix}.dec{l}"), dec_in(ch[l]), ch[l], k));
        }
        PathLayout {
            enc,
            bottleneck,
            up,
            dec,
        }
    }

    /// Encoder features per level and the bottleneck output.
    fn encode<T: Scalar>(&self, tape: &mut Tape<'_, T>, x: Var) -> Result<(Vec<Var>, Var)> {
        let mut skips = Vec::with_capacity(4);
        let mut h = x;
        for block in &self.enc {
            let e = block.forward(tape, h)?;
            skips.push(e);
            h = tape.max_pool2(e)?;
        }
        let bottom = self.bottleneck.forward(tape, h)?;
        Ok((skips, bottom))
    }
}

#[derive(Clone, Debug)]
enum Skip {
    /// Segmentation skip only.
    Plain,
    /// Segmentation skip and atlas feature concatenated.
    TwoPath,
    Mam(Vec<Mam>),
}

#[derive(Clone, Debug)]
enum Head {
    Conv(Conv),
    Afm(Afm),
}

#[derive(Clone, Debug)]
struct Layout {
    seg: PathLayout,
    atlas: Option<PathLayout>,
    skip: Skip,
    head: Head,
}

/// Vars produced by one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardOutput {
    pub probs: Var,
    pub logits: Var,
    /// Every attention map (MAM gates, coarsest level first) of the pass.
    pub attention: Vec<Var>,
    /// AFM channel weights, when the variant has an AFM.
    pub channel_weights: Option<Var>,
}

/// An instantiated variant: its wiring plus all parameters.
#[derive(Clone, Debug)]
pub struct Network<T> {
    spec: ModelSpec,
    layout: Layout,
    params: ParameterSet<T>,
}

impl<T: Scalar> Network<T> {
    /// Builds the variant described by `spec` with seeded initialisation.
    pub fn build(spec: &ModelSpec) -> Result<Self> {
        spec.validate()?;
        let mut b = ParamBuilder::<T>::new(spec.init_seed);
        let ch = &spec.channels;
        let variant = spec.variant;
        let seg_dec_in: fn(usize) -> usize = match variant {
            Variant::BagauNoMam | Variant::BagauPlain => |c| 3 * c,
            _ => |c| 2 * c,
        };
        let seg = PathLayout::new(&mut b, "seg", variant.input_channels(), ch, spec.seg_kernel, seg_dec_in);
        let atlas = variant
            .has_atlas_path()
            .then(|| PathLayout::new(&mut b, "atlas", 1, ch, spec.atlas_kernel, |c| c));
        let skip = if variant.uses_mam() {
            let mams = (0..4)
                .map(|l| Mam::new(&mut b, &format!("mam{l}"), ch[l], ch[l], ch[l]))
                .collect::<Result<Vec<_>>>()?;
            Skip::Mam(mams)
        } else if variant.has_atlas_path() {
            Skip::TwoPath
        } else {
            Skip::Plain
        };
        let head = if variant.uses_afm() {
            Head::Afm(Afm::new(&mut b, "afm", ch[0]))
        } else {
            Head::Conv(Conv::new(&mut b, "head", "head", ch[0], 1, 1, true))
        };
        Ok(Network {
            spec: spec.clone(),
            layout: Layout { seg, atlas, skip, head },
            params: b.finish(),
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParameterSet<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParameterSet<T> {
        &mut self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.scalar_count()
    }

    /// Records a forward pass on `tape`, which must have been created over
    /// this network's parameters. Inputs are `(N, 1, h, w)` slices at the
    /// configured canvas.
    pub fn forward(&self, tape: &mut Tape<'_, T>, flair: Var, atlas: Var) -> Result<ForwardOutput> {
        if !std::ptr::eq(tape.params(), &self.params) {
            return Err(Error::Config("tape was created over a different parameter set".into()));
        }
        let [h, w] = self.spec.canvas;
        for (name, v) in [("flair", flair), ("atlas", atlas)] {
            let s = tape.shape(v);
            if s[1] != 1 || s[2] != h || s[3] != w {
                return Err(Error::Shape(format!(
                    "{name} input {s:?} does not match canvas (N, 1, {h}, {w})"
                )));
            }
        }
        if tape.shape(flair)[0] != tape.shape(atlas)[0] {
            return Err(Error::Shape("flair and atlas batch sizes differ".into()));
        }
        if !self.params.all_finite() {
            return Err(Error::Numerical("non-finite value in parameters".into()));
        }
        let layout = &self.layout;
        let input = match self.spec.variant {
            Variant::UnetFlairAtlasChannel => tape.concat(&[flair, atlas])?,
            _ => flair,
        };

        let atlas_feats = match &layout.atlas {
            Some(path) => {
                let (skips, bottom) = path.encode(tape, atlas)?;
                let mut feats = vec![bottom; 4];
                let mut d = bottom;
                for l in (0..4).rev() {
                    let up = path.up[l].forward(tape, d)?;
                    let joined = tape.add(up, skips[l])?;
                    d = path.dec[l].forward(tape, joined)?;
                    feats[l] = d;
                }
                Some(feats)
            }
            None => None,
        };

        let (skips, mut d) = layout.seg.encode(tape, input)?;
        let mut attention = Vec::new();
        for l in (0..4).rev() {
            let up = layout.seg.up[l].forward(tape, d)?;
            let merged = match (&layout.skip, &atlas_feats) {
                (Skip::Plain, _) => tape.concat(&[skips[l], up])?,
                (Skip::TwoPath, Some(a)) => tape.concat(&[skips[l], a[l], up])?,
                (Skip::Mam(mams), Some(a)) => {
                    let m = mams[l].forward(tape, skips[l], a[l], up)?;
                    attention.push(m.seg.alpha);
                    attention.push(m.atlas.alpha);
                    tape.concat(&[m.output, up])?
                }
                _ => unreachable!("atlas features exist whenever the skip needs them"),
            };
            d = layout.seg.dec[l].forward(tape, merged)?;
        }

        let (logits, channel_weights) = match (&layout.head, &atlas_feats) {
            (Head::Conv(c), _) => (c.forward(tape, d)?, None),
            (Head::Afm(afm), Some(a)) => {
                let out = afm.forward(tape, d, a[0])?;
                (out.logits, Some(out.weights))
            }
            (Head::Afm(_), None) => unreachable!("AFM variants have an atlas path"),
        };
        let probs = tape.sigmoid(logits);
        Ok(ForwardOutput {
            probs,
            logits,
            attention,
            channel_weights,
        })
    }

    /// Evaluation-mode probabilities for a batch of slices.
    pub fn predict(&self, flair: &Tensor<T>, atlas: &Tensor<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::new(&self.params, NormMode::Running);
        let f = tape.input(flair.clone());
        let a = tape.input(atlas.clone());
        let out = self.forward(&mut tape, f, a)?;
        Ok(tape.value(out.probs).clone())
    }

    /// Folds batch statistics from a training pass into the running averages.
    pub fn update_running_stats(&mut self, stats: &[NormStats<T>], momentum: f64) {
        update_running_stats(&mut self.params, stats, momentum);
    }
}

/// `running = (1 - m) * running + m * batch`, using the unbiased batch variance.
pub fn update_running_stats<T: Scalar>(params: &mut ParameterSet<T>, stats: &[NormStats<T>], momentum: f64) {
    let m = T::from_f64_lossy(momentum);
    let keep = T::one() - m;
    for s in stats {
        let n = s.count as f64;
        let unbias = T::from_f64_lossy(if n > 1.0 { n / (n - 1.0) } else { 1.0 });
        for (r, &v) in params
            .buffer_mut(s.layer.running_mean)
            .data_mut()
            .iter_mut()
            .zip(&s.mean)
        {
            *r = keep * *r + m * v;
        }
        for (r, &v) in params.buffer_mut(s.layer.running_var).data_mut().iter_mut().zip(&s.var) {
            *r = keep * *r + m * v * unbias;
        }
    }
}
