use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    /// Fully connected layer over the flattened input.
    Dense,
    /// 3×3 same-padded convolution.
    Conv2d,
    /// 2×2 average pool followed by a 3×3 convolution.
    Downsample,
    /// 2× nearest-neighbour upsample followed by a 3×3 convolution.
    Upsample,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    /// Parametric ReLU with one learnable slope per output channel.
    Prelu,
    Identity,
}

/// One block position of a template architecture.
///
/// `skip` names an earlier activation that is concatenated (channel axis) to
/// the block input after the resampling step: `0` is the model input and
/// `j + 1` is the output of position `j`. Routing is fixed by the
/// architecture, so swapping candidates never changes it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub kind: BlockKind,
    pub in_channels: usize,
    pub out_channels: usize,
    pub activation: Activation,
    #[serde(default)]
    pub residual: bool,
    #[serde(default)]
    pub skip: Option<usize>,
}

impl BlockSpec {
    pub fn new(kind: BlockKind, in_channels: usize, out_channels: usize) -> Self {
        BlockSpec { kind, in_channels, out_channels, activation: Activation::Prelu, residual: false, skip: None }
    }

    pub fn dense(in_features: usize, out_features: usize) -> Self {
        Self::new(BlockKind::Dense, in_features, out_features)
    }

    pub fn conv(in_channels: usize, out_channels: usize) -> Self {
        Self::new(BlockKind::Conv2d, in_channels, out_channels)
    }

    pub fn down(in_channels: usize, out_channels: usize) -> Self {
        Self::new(BlockKind::Downsample, in_channels, out_channels)
    }

    pub fn up(in_channels: usize, out_channels: usize) -> Self {
        Self::new(BlockKind::Upsample, in_channels, out_channels)
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn with_residual(mut self) -> Self {
        self.residual = true;
        self
    }

    pub fn with_skip(mut self, activation_index: usize) -> Self {
        self.skip = Some(activation_index);
        self
    }
}

/// Parameter extents of a block's single linear layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerDims {
    pub kind: BlockKind,
    /// Input channels (conv) or features (dense), including any skip concat.
    pub linear_in: usize,
    pub out: usize,
}

impl LayerDims {
    pub fn weight_shape(&self) -> Vec<usize> {
        match self.kind {
            BlockKind::Dense => vec![self.out, self.linear_in],
            _ => vec![self.out, self.linear_in, 3, 3],
        }
    }

    pub fn fan_in(&self) -> usize {
        match self.kind {
            BlockKind::Dense => self.linear_in,
            _ => self.linear_in * 9,
        }
    }
}

/// Input extents plus the ordered block specs of a template model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_shape: Vec<usize>,
    pub blocks: Vec<BlockSpec>,
}

/// Result of propagating shapes through an architecture.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShapePlan {
    /// `activations[0]` is the input, `activations[j + 1]` the output of position `j`.
    pub activations: Vec<Vec<usize>>,
    pub layers: Vec<LayerDims>,
}

fn arch_err(j: usize, msg: impl std::fmt::Display) -> Error {
    Error::Architecture(format!("position {j}: {msg}"))
}

impl Architecture {
    pub fn new(input_shape: Vec<usize>, blocks: Vec<BlockSpec>) -> Result<Self> {
        let arch = Architecture { input_shape, blocks };
        arch.plan()?;
        Ok(arch)
    }

    pub fn positions(&self) -> usize {
        self.blocks.len()
    }

    /// Check every block against its neighbours and derive all extents.
    pub fn plan(&self) -> Result<ShapePlan> {
        if self.blocks.is_empty() {
            return Err(Error::Architecture("architecture has no blocks".into()));
        }
        if self.input_shape.is_empty() || self.input_shape.contains(&0) {
            return Err(Error::Architecture(format!("invalid input shape {:?}", self.input_shape)));
        }
        let mut acts = vec![self.input_shape.clone()];
        let mut layers = Vec::with_capacity(self.blocks.len());
        for (j, b) in self.blocks.iter().enumerate() {
            if b.in_channels == 0 || b.out_channels == 0 {
                return Err(arch_err(j, "channel counts must be positive"));
            }
            let input = &acts[j];
            let skip_shape = match b.skip {
                Some(s) if s > j => return Err(arch_err(j, format!("skip source {s} is not an earlier activation"))),
                Some(s) => Some(acts[s].clone()),
                None => None,
            };
            let (assembled, out_shape, linear_in) = match b.kind {
                BlockKind::Dense => {
                    let main: usize = input.iter().product();
                    if main != b.in_channels {
                        return Err(arch_err(
                            j,
                            format!("dense block expects {} features, input has {main}", b.in_channels),
                        ));
                    }
                    let extra: usize = skip_shape.map_or(0, |s| s.iter().product());
                    (vec![main + extra], vec![b.out_channels], main + extra)
                }
                kind => {
                    let &[c, h, w] = input.as_slice() else {
                        return Err(arch_err(j, format!("conv block needs [C,H,W] input, got {input:?}")));
                    };
                    if c != b.in_channels {
                        return Err(arch_err(
                            j,
                            format!("expects {} input channels, previous output has {c}", b.in_channels),
                        ));
                    }
                    let (h2, w2) = match kind {
                        BlockKind::Downsample => {
                            if h % 2 != 0 || w % 2 != 0 {
                                return Err(arch_err(j, format!("cannot downsample odd extent {h}x{w}")));
                            }
                            (h / 2, w / 2)
                        }
                        BlockKind::Upsample => (h * 2, w * 2),
                        _ => (h, w),
                    };
                    let mut lin = c;
                    if let Some(s) = &skip_shape {
                        match s.as_slice() {
                            &[sc, sh, sw] if sh == h2 && sw == w2 => lin += sc,
                            other => {
                                return Err(arch_err(
                                    j,
                                    format!("skip tensor {other:?} does not match resampled extent {h2}x{w2}"),
                                ))
                            }
                        }
                    }
                    (vec![lin, h2, w2], vec![b.out_channels, h2, w2], lin)
                }
            };
            if b.residual && assembled != out_shape {
                return Err(arch_err(
                    j,
                    format!("residual needs matching shapes, block input {assembled:?} vs output {out_shape:?}"),
                ));
            }
            layers.push(LayerDims { kind: b.kind, linear_in, out: b.out_channels });
            acts.push(out_shape);
        }
        Ok(ShapePlan { activations: acts, layers })
    }

    pub fn output_shape(&self) -> Result<Vec<usize>> {
        Ok(self.plan()?.activations.pop().expect("non-empty plan"))
    }

    /// Stable hex digest of the architecture descriptor.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("architecture serializes");
        hex::encode(Sha256::digest(&json))
    }

    /// Chain of PReLU dense blocks; the last block is linear.
    pub fn dense_chain(dims: &[usize]) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::Architecture("dense chain needs at least two extents".into()));
        }
        let n = dims.len() - 1;
        let blocks = (0..n)
            .map(|i| {
                let b = BlockSpec::dense(dims[i], dims[i + 1]);
                if i + 1 == n {
                    b.with_activation(Activation::Identity)
                } else {
                    b
                }
            })
            .collect();
        Architecture::new(vec![dims[0]], blocks)
    }

    /// Three-position encoder / bottleneck / decoder network.
    pub fn unet3(size: usize, in_ch: usize, width: usize, out_ch: usize) -> Result<Self> {
        Architecture::new(
            vec![in_ch, size, size],
            vec![
                BlockSpec::conv(in_ch, width),
                BlockSpec::down(width, width),
                BlockSpec::up(width, out_ch).with_skip(1).with_activation(Activation::Identity),
            ],
        )
    }

    /// Seven-position U-Net miniature: three encoder blocks, a down-sampling
    /// bottleneck and three decoder blocks with skip concatenation.
    ///
    /// ```text
    /// E1 conv   @S      E2 down @S/2     E3 down @S/4     B down @S/8
    /// D3 up+E3  @S/4    D2 up+E2 @S/2    D1 up+E1 @S (linear output)
    /// ```
    pub fn unet7(size: usize, in_ch: usize, width: usize, out_ch: usize) -> Result<Self> {
        Architecture::new(
            vec![in_ch, size, size],
            vec![
                BlockSpec::conv(in_ch, width),
                BlockSpec::down(width, width),
                BlockSpec::down(width, width),
                BlockSpec::down(width, width),
                BlockSpec::up(width, width).with_skip(3),
                BlockSpec::up(width, width).with_skip(2),
                BlockSpec::up(width, out_ch).with_skip(1).with_activation(Activation::Identity),
            ],
        )
    }

    /// Look up a named preset.
    pub fn preset(name: &str, size: usize, in_ch: usize, width: usize, out_ch: usize) -> Result<Self> {
        match name {
            "unet7" => Self::unet7(size, in_ch, width, out_ch),
            "unet3" => Self::unet3(size, in_ch, width, out_ch),
            other => Err(Error::Configuration(format!("unknown architecture preset `{other}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unet7_propagates_16x16() {
        let arch = Architecture::unet7(16, 1, 4, 1).unwrap();
        let plan = arch.plan().unwrap();
        let expect: Vec<Vec<usize>> = vec![
            vec![1, 16, 16],
            vec![4, 16, 16],
            vec![4, 8, 8],
            vec![4, 4, 4],
            vec![4, 2, 2],
            vec![4, 4, 4],
            vec![4, 8, 8],
            vec![1, 16, 16],
        ];
        assert_eq!(plan.activations, expect);
        // decoder layers see main + skip channels
        assert_eq!(plan.layers[4].linear_in, 8);
        assert_eq!(plan.layers[6].linear_in, 8);
    }

    #[test]
    fn rejects_channel_mismatch() {
        let err = Architecture::new(vec![4], vec![BlockSpec::dense(4, 3), BlockSpec::dense(2, 1)]);
        assert!(matches!(err, Err(Error::Architecture(_))));
    }

    #[test]
    fn rejects_bad_skip_and_residual() {
        let bad_skip =
            Architecture::new(vec![1, 8, 8], vec![BlockSpec::conv(1, 2), BlockSpec::down(2, 2).with_skip(1)]);
        assert!(bad_skip.is_err());
        let bad_res = Architecture::new(vec![1, 8, 8], vec![BlockSpec::conv(1, 2).with_residual()]);
        assert!(bad_res.is_err());
        let future_skip = Architecture::new(vec![3], vec![BlockSpec::dense(3, 3).with_skip(1)]);
        assert!(future_skip.is_err());
        assert!(Architecture::new(vec![3], vec![]).is_err());
    }

    #[test]
    fn odd_extent_cannot_downsample() {
        assert!(Architecture::unet7(18, 1, 2, 1).is_err());
    }

    #[test]
    fn hash_depends_on_blocks() {
        let a = Architecture::dense_chain(&[3, 4, 2]).unwrap();
        let b = Architecture::dense_chain(&[3, 5, 2]).unwrap();
        assert_eq!(a.hash(), a.clone().hash());
        assert_ne!(a.hash(), b.hash());
    }
}
