use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::features::FEAT_DIM;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Tdnn,
    Pooling,
    Fc,
}

/// One layer of the embedding network. TDNN and FC layers are affine maps
/// followed by batch normalization and, when `relu` is set, a ReLU.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_dim: usize,
    pub out_dim: usize,
    /// Frame offsets spliced together (TDNN), `[0]` for FC, empty for pooling.
    pub context: Vec<i32>,
    pub relu: bool,
}

impl LayerSpec {
    pub fn tdnn(in_dim: usize, out_dim: usize, context: Vec<i32>) -> Self {
        Self { kind: LayerKind::Tdnn, in_dim, out_dim, context, relu: true }
    }

    pub fn pooling(in_dim: usize) -> Self {
        Self { kind: LayerKind::Pooling, in_dim, out_dim: 2 * in_dim, context: Vec::new(), relu: false }
    }

    pub fn fc(in_dim: usize, out_dim: usize, relu: bool) -> Self {
        Self { kind: LayerKind::Fc, in_dim, out_dim, context: vec![0], relu }
    }

    pub fn is_affine(&self) -> bool {
        self.kind != LayerKind::Pooling
    }

    /// Frames consumed by the context window.
    pub fn span(&self) -> usize {
        match (self.context.first(), self.context.last()) {
            (Some(a), Some(b)) => (b - a) as usize,
            _ => 0,
        }
    }

    /// Rows of the spliced weight matrix.
    pub fn fan_in(&self) -> usize {
        self.context.len() * self.in_dim
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    pub layers: Vec<LayerSpec>,
}

const TABLE1_CONTEXTS: [&[i32]; 5] = [&[-2, -1, 0, 1, 2], &[-1, 0, 1], &[-1, 0, 1], &[0], &[0]];

impl Architecture {
    /// Five TDNN layers, mean+std pooling, FC 3000->512 and the 300-dim
    /// embedding layer.
    pub fn table1() -> Self {
        Self::from_widths(FEAT_DIM, [512, 512, 512, 512, 1500], 512, 300)
    }

    /// Table 1 with every width divided by `div`.
    pub fn scaled(div: usize) -> Self {
        let d = div.max(1);
        Self::from_widths(FEAT_DIM, [512 / d, 512 / d, 512 / d, 512 / d, 1500 / d], 512 / d, 300 / d)
    }

    /// Table-1 topology and contexts with arbitrary widths.
    pub fn from_widths(input_dim: usize, tdnn: [usize; 5], fc1: usize, embed: usize) -> Self {
        let mut layers = Vec::with_capacity(8);
        let mut prev = input_dim;
        for (w, ctx) in tdnn.iter().zip(TABLE1_CONTEXTS) {
            layers.push(LayerSpec::tdnn(prev, *w, ctx.to_vec()));
            prev = *w;
        }
        layers.push(LayerSpec::pooling(prev));
        layers.push(LayerSpec::fc(2 * prev, fc1, true));
        // The embedding is taken after batch norm, before any ReLU.
        layers.push(LayerSpec::fc(fc1, embed, false));
        Self { layers }
    }

    /// Replaces the contexts of the TDNN layers, e.g. with dilated offsets.
    pub fn with_contexts(mut self, contexts: &[Vec<i32>]) -> Result<Self> {
        let tdnn: Vec<&mut LayerSpec> =
            self.layers.iter_mut().filter(|l| l.kind == LayerKind::Tdnn).collect();
        if tdnn.len() != contexts.len() {
            return Err(Error::InvalidArchitecture(format!(
                "{} contexts for {} TDNN layers",
                contexts.len(),
                tdnn.len()
            )));
        }
        for (layer, ctx) in tdnn.into_iter().zip(contexts) {
            layer.context = ctx.clone();
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArchitecture(msg.into()));
        let pool = self.layers.iter().filter(|l| l.kind == LayerKind::Pooling).count();
        if pool != 1 {
            return bad("exactly one pooling layer is required");
        }
        let mut pooled = false;
        for (i, l) in self.layers.iter().enumerate() {
            if l.in_dim == 0 || l.out_dim == 0 {
                return bad("zero width");
            }
            if i > 0 && self.layers[i - 1].out_dim != l.in_dim {
                return Err(Error::InvalidArchitecture(format!("layer {i} input width mismatch")));
            }
            match l.kind {
                LayerKind::Tdnn => {
                    if pooled {
                        return bad("TDNN layer after pooling");
                    }
                    if l.context.is_empty() || l.context.windows(2).any(|w| w[0] >= w[1]) {
                        return bad("TDNN context must be non-empty and strictly increasing");
                    }
                }
                LayerKind::Pooling => {
                    if l.out_dim != 2 * l.in_dim {
                        return bad("pooling output must be twice its input");
                    }
                    pooled = true;
                }
                LayerKind::Fc => {
                    if !pooled {
                        return bad("FC layer before pooling");
                    }
                    if l.context != [0] {
                        return bad("FC context must be [0]");
                    }
                }
            }
        }
        if self.layers.last().map(|l| l.kind) != Some(LayerKind::Fc) {
            return bad("the last layer must be FC");
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn embed_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_dim)
    }

    /// Shortest input that leaves one frame at the pooling layer.
    pub fn min_frames(&self) -> usize {
        1 + self.layers.iter().filter(|l| l.kind == LayerKind::Tdnn).map(LayerSpec::span).sum::<usize>()
    }

    /// Frames after each TDNN layer for a `t`-frame input.
    pub fn frames_after(&self, t: usize) -> Vec<usize> {
        let mut t = t;
        self.layers
            .iter()
            .filter(|l| l.kind == LayerKind::Tdnn)
            .map(|l| {
                t = t.saturating_sub(l.span());
                t
            })
            .collect()
    }
}
