use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::prep::CANVAS;

/// Width of the embedding produced by the final dense layer.
pub const EMBED_DIM: usize = 128;
pub const CONV_LAYERS: usize = 7;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerSpec {
    Conv { out_channels: usize, kernel: usize },
    Pool,
}

/// Activation applied to the dense output before the L1 comparison.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum FeatureActivation {
    #[default]
    None,
    Relu,
}

impl FromStr for FeatureActivation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(FeatureActivation::None),
            "relu" => Ok(FeatureActivation::Relu),
            other => Err(Error::Architecture(format!(
                "unknown feature activation {other:?}"
            ))),
        }
    }
}

impl fmt::Display for FeatureActivation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureActivation::None => "none",
            FeatureActivation::Relu => "relu",
        })
    }
}

/// Layer list of the embedder: seven conv blocks (conv → batch norm → relu)
/// with interleaved 2×2 max-pools, then one dense layer of width 128.
///
/// Text form: comma-separated items, each either `<channels>x<kernel>` or
/// `pool`, e.g. `32x3,pool,32x3,pool,64x3,pool,64x3,128x3,pool,128x3,128x3`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ArchitectureSpec {
    pub layers: Vec<LayerSpec>,
    pub feature_activation: FeatureActivation,
}

impl Default for ArchitectureSpec {
    fn default() -> Self {
        "32x3,pool,32x3,pool,64x3,pool,64x3,128x3,pool,128x3,128x3"
            .parse()
            .expect("default architecture parses")
    }
}

impl ArchitectureSpec {
    /// Same layout with every channel count divided by `divisor` (minimum 1).
    pub fn narrowed(&self, divisor: usize) -> Self {
        let layers = self
            .layers
            .iter()
            .map(|l| match *l {
                LayerSpec::Conv {
                    out_channels,
                    kernel,
                } => LayerSpec::Conv {
                    out_channels: (out_channels / divisor).max(1),
                    kernel,
                },
                LayerSpec::Pool => LayerSpec::Pool,
            })
            .collect();
        ArchitectureSpec {
            layers,
            feature_activation: self.feature_activation,
        }
    }

    pub fn conv_count(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| matches!(l, LayerSpec::Conv { .. }))
            .count()
    }

    pub fn validate(&self) -> Result<()> {
        let convs = self.conv_count();
        if convs != CONV_LAYERS {
            return Err(Error::Architecture(format!(
                "expected {CONV_LAYERS} conv layers, found {convs}"
            )));
        }
        if !matches!(self.layers.first(), Some(LayerSpec::Conv { .. })) {
            return Err(Error::Architecture(
                "first layer must be a convolution".into(),
            ));
        }
        let mut side = CANVAS;
        for layer in &self.layers {
            match *layer {
                LayerSpec::Conv {
                    out_channels,
                    kernel,
                } => {
                    if out_channels == 0 {
                        return Err(Error::Architecture("conv layer with zero channels".into()));
                    }
                    if kernel % 2 == 0 {
                        return Err(Error::Architecture(format!(
                            "kernel size {kernel} is not odd"
                        )));
                    }
                }
                LayerSpec::Pool => {
                    if !side.is_multiple_of(2) || side < 2 {
                        return Err(Error::Architecture(format!(
                            "cannot pool a {side}x{side} map"
                        )));
                    }
                    side /= 2;
                }
            }
        }
        Ok(())
    }

    /// Spatial side and channel count entering the dense layer.
    pub fn final_map(&self) -> (usize, usize) {
        let mut side = CANVAS;
        let mut channels = 1;
        for layer in &self.layers {
            match *layer {
                LayerSpec::Conv { out_channels, .. } => channels = out_channels,
                LayerSpec::Pool => side /= 2,
            }
        }
        (side, channels)
    }

    pub fn flat_dim(&self) -> usize {
        let (side, channels) = self.final_map();
        side * side * channels
    }

    pub fn grammar(&self) -> String {
        self.layers
            .iter()
            .map(|l| match l {
                LayerSpec::Conv {
                    out_channels,
                    kernel,
                } => format!("{out_channels}x{kernel}"),
                LayerSpec::Pool => "pool".to_string(),
            })
            .collect::<Vec<_>>()
            .join(",")
    }
}

impl FromStr for ArchitectureSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut layers = Vec::new();
        for item in s.split(',').map(str::trim) {
            if item == "pool" {
                layers.push(LayerSpec::Pool);
                continue;
            }
            let (c, k) = item
                .split_once('x')
                .ok_or_else(|| Error::Architecture(format!("bad layer {item:?}")))?;
            let out_channels = c
                .parse()
                .map_err(|_| Error::Architecture(format!("bad channel count in {item:?}")))?;
            let kernel = k
                .parse()
                .map_err(|_| Error::Architecture(format!("bad kernel size in {item:?}")))?;
            layers.push(LayerSpec::Conv {
                out_channels,
                kernel,
            });
        }
        let spec = ArchitectureSpec {
            layers,
            feature_activation: FeatureActivation::None,
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl fmt::Display for ArchitectureSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.grammar())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_reaches_four_by_four() {
        let spec = ArchitectureSpec::default();
        assert_eq!(spec.conv_count(), 7);
        assert_eq!(spec.final_map(), (4, 128));
        assert_eq!(spec.flat_dim(), 2048);
        assert_eq!(spec.grammar().parse::<ArchitectureSpec>().unwrap(), spec);
    }

    #[test]
    fn six_convs_rejected() {
        assert!("32x3,pool,32x3,pool,64x3,pool,64x3,128x3,pool,128x3"
            .parse::<ArchitectureSpec>()
            .is_err());
    }

    #[test]
    fn too_many_pools_rejected() {
        let s = "8x3,pool,8x3,pool,8x3,pool,8x3,pool,8x3,pool,8x3,pool,8x3,pool";
        assert!(s.parse::<ArchitectureSpec>().is_err());
    }

    #[test]
    fn even_kernel_and_garbage_rejected() {
        assert!("32x2,32x3,32x3,32x3,32x3,32x3,32x3"
            .parse::<ArchitectureSpec>()
            .is_err());
        assert!("32y3".parse::<ArchitectureSpec>().is_err());
    }

    #[test]
    fn narrowed_keeps_layout() {
        let n = ArchitectureSpec::default().narrowed(4);
        assert_eq!(
            n.grammar(),
            "8x3,pool,8x3,pool,16x3,pool,16x3,32x3,pool,32x3,32x3"
        );
        assert!(n.validate().is_ok());
    }
}
