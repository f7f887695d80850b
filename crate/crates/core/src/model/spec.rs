use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architecture variants: the full model, its ablations, and the two
/// single-path baselines.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Bagau,
    BagauNoMam,
    BagauNoAfm,
    /// Neither MAM nor AFM: atlas features join by plain concatenation.
    BagauPlain,
    UnetFlair,
    /// Single-path U-Net with the atlas as a second input channel.
    UnetFlairAtlasChannel,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Bagau,
        Variant::BagauNoMam,
        Variant::BagauNoAfm,
        Variant::BagauPlain,
        Variant::UnetFlair,
        Variant::UnetFlairAtlasChannel,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Bagau => "bagau",
            Variant::BagauNoMam => "bagau_no_mam",
            Variant::BagauNoAfm => "bagau_no_afm",
            Variant::BagauPlain => "bagau_plain",
            Variant::UnetFlair => "unet_flair",
            Variant::UnetFlairAtlasChannel => "unet_flair_atlas_channel",
        }
    }

    /// Human-readable row label for report tables.
    pub fn label(self) -> &'static str {
        match self {
            Variant::Bagau => "BAGAU-Net",
            Variant::BagauNoMam => "BAGAU-Net (without MAM)",
            Variant::BagauNoAfm => "BAGAU-Net (without AFM)",
            Variant::BagauPlain => "BAGAU-Net (without MAM and AFM)",
            Variant::UnetFlair => "U-Net (FLAIR)",
            Variant::UnetFlairAtlasChannel => "U-Net (FLAIR + Atlas)",
        }
    }

    pub fn parse(s: &str) -> Result<Variant> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant {s:?}")))
    }

    pub fn has_atlas_path(self) -> bool {
        matches!(
            self,
            Variant::Bagau | Variant::BagauNoMam | Variant::BagauNoAfm | Variant::BagauPlain
        )
    }

    pub fn uses_mam(self) -> bool {
        matches!(self, Variant::Bagau | Variant::BagauNoAfm)
    }

    pub fn uses_afm(self) -> bool {
        matches!(self, Variant::Bagau | Variant::BagauNoMam)
    }

    pub fn input_channels(self) -> usize {
        match self {
            Variant::UnetFlairAtlasChannel => 2,
            _ => 1,
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    /// Widths of the four encoder levels followed by the bottleneck.
    pub channels: [usize; 5],
    pub seg_kernel: usize,
    pub atlas_kernel: usize,
    pub variant: Variant,
    /// Input slice size `(h, w)`.
    pub canvas: [usize; 2],
    pub init_seed: u64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec {
            channels: [64, 96, 128, 256, 512],
            seg_kernel: 3,
            atlas_kernel: 5,
            variant: Variant::Bagau,
            canvas: [128, 128],
            init_seed: 0,
        }
    }
}

impl ModelSpec {
    pub fn with_variant(&self, variant: Variant) -> ModelSpec {
        ModelSpec {
            variant,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels[0] == 0 || self.channels.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config(format!(
                "channels must be positive and strictly increasing, got {:?}",
                self.channels
            )));
        }
        for (name, k) in [("seg_kernel", self.seg_kernel), ("atlas_kernel", self.atlas_kernel)] {
            if k % 2 == 0 {
                return Err(Error::Config(format!("{name} must be odd, got {k}")));
            }
        }
        let [h, w] = self.canvas;
        if h == 0 || w == 0 || h % 16 != 0 || w % 16 != 0 {
            return Err(Error::Config(format!(
                "canvas {h}x{w} must be nonzero and divisible by 16"
            )));
        }
        Ok(())
    }
}

/// Channel widths of one attention gate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttentionGateSpec {
    pub f_x: usize,
    pub f_g: usize,
    pub f_int: usize,
}

impl AttentionGateSpec {
    /// Gate for `f_x` skip channels gated by `f_g` channels, with the
    /// intermediate width set to half the skip width.
    pub fn halving(f_x: usize, f_g: usize) -> Self {
        AttentionGateSpec {
            f_x,
            f_g,
            f_int: (f_x / 2).max(1),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.f_int == 0 || self.f_x == 0 || self.f_g == 0 {
            return Err(Error::Config(format!("attention gate widths must be >= 1: {self:?}")));
        }
        Ok(())
    }
}
