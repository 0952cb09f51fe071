//! The multi-hop graph transformer network.
//!
//! ```text
//! S (N×2×T) ─ flatten ─> N×2T ─ embedding (hop conv) ─> X (N×F)
//!   └─ L × [ graph attention block ─> multi-hop conv block ]
//!   └─ output hop conv (identity activation) ─> N×3
//! ```
//!
//! Graph attention block: `y = x + Dropout(LayerNorm(LAM₂(LAM₁(MSA(x)))))`.
//! Multi-hop conv block: two sub-blocks `z = ReLU(HopConv(x)); z + DCL(z)`.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{ModelError, TensorError};
use crate::layers::{Activation, DilatedConv, GraphConvKind, HopGraphConv, LamGConv, MultiHeadSelfAttention};
use crate::params::{Bindings, ParamId, ParamStore};
use crate::skeleton::{normalized_adjacency, normalized_adjacency_powers, DisentangledAdjacencySet, SkeletonGraph};
use crate::tensor::Tensor;

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Factor applied to the Glorot initialisation of the output layer, so that
/// initial predictions start close to the origin.
pub const HEAD_INIT_SCALE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub joints: usize,
    pub frames: usize,
    pub hidden: usize,
    pub layers: usize,
    pub heads: usize,
    pub hops: usize,
    pub dropout: f64,
    pub dilation: usize,
    pub kernel_half_width: usize,
    pub use_dcl: bool,
    pub graph_conv: GraphConvKind,
}

impl ModelConfig {
    /// L=5, h=4, F=256, T=243, K=2 on the 17-joint skeleton.
    pub fn paper_default() -> Self {
        Self {
            joints: 17,
            frames: 243,
            hidden: 256,
            layers: 5,
            heads: 4,
            hops: 2,
            dropout: 0.1,
            dilation: 2,
            kernel_half_width: 1,
            use_dcl: true,
            graph_conv: GraphConvKind::MultiHop,
        }
    }

    /// The ablation configuration: as [`ModelConfig::paper_default`] with F=128.
    pub fn gt_ablation() -> Self {
        Self {
            hidden: 128,
            ..Self::paper_default()
        }
    }

    /// Small enough for finite-difference checks: T=3, F=8, L=2, h=2, K=2.
    pub fn toy() -> Self {
        Self {
            frames: 3,
            hidden: 8,
            layers: 2,
            heads: 2,
            dropout: 0.0,
            ..Self::paper_default()
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "paper-default" => Some(Self::paper_default()),
            "gt-ablation" => Some(Self::gt_ablation()),
            "toy" => Some(Self::toy()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let counts = [
            ("joints", self.joints),
            ("frames", self.frames),
            ("hidden", self.hidden),
            ("layers", self.layers),
            ("heads", self.heads),
            ("dilation", self.dilation),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(ModelError::Config(format!("`{name}` must be positive")));
        }
        if !self.hidden.is_multiple_of(self.heads) {
            return Err(ModelError::Config(format!(
                "hidden width {} is not divisible by {} heads",
                self.hidden, self.heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ModelError::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

/// Whether a forward pass is for training (dropout active) or evaluation.
pub enum ForwardMode<'a> {
    Eval,
    Train(&'a mut dyn RngCore),
}

impl ForwardMode<'_> {
    pub fn is_train(&self) -> bool {
        matches!(self, ForwardMode::Train(_))
    }
}

/// Reorders `S ∈ R^{N×2×T}` into `N×2T` with per-joint columns
/// `(x₀, y₀, x₁, y₁, …)`.
pub fn flatten_sequence(s: &Tensor) -> Result<Tensor, TensorError> {
    let [n, c, t] = *s.shape() else {
        return Err(TensorError::Rank {
            op: "flatten_sequence",
            expected: 3,
            shape: s.shape().to_vec(),
        });
    };
    let mut out = vec![0.0; n * c * t];
    for j in 0..n {
        for ci in 0..c {
            for f in 0..t {
                out[j * c * t + f * c + ci] = s.data()[(j * c + ci) * t + f];
            }
        }
    }
    Tensor::new(&[n, c * t], out)
}

#[derive(Debug, Clone)]
pub struct GraphAttentionBlock {
    pub msa: MultiHeadSelfAttention,
    pub gconv1: LamGConv,
    pub gconv2: LamGConv,
    pub norm_gain: ParamId,
    pub norm_bias: ParamId,
    pub dropout: f64,
}

impl GraphAttentionBlock {
    pub fn new<R: rand::Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        adjacency: &Tensor,
        features: usize,
        heads: usize,
        dropout: f64,
        rng: &mut R,
    ) -> Result<Self, ModelError> {
        let msa = MultiHeadSelfAttention::new(store, &format!("{name}.msa"), features, heads, rng)?;
        let gconv1 = LamGConv::new(
            store,
            &format!("{name}.gconv1"),
            adjacency.clone(),
            features,
            features,
            Activation::Relu,
            rng,
        );
        let gconv2 = LamGConv::new(
            store,
            &format!("{name}.gconv2"),
            adjacency.clone(),
            features,
            features,
            Activation::Relu,
            rng,
        );
        let norm_gain = store.add(format!("{name}.norm.gain"), Tensor::filled(&[features], 1.0));
        let norm_bias = store.add(format!("{name}.norm.bias"), Tensor::zeros(&[features]));
        Ok(Self {
            msa,
            gconv1,
            gconv2,
            norm_gain,
            norm_bias,
            dropout,
        })
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        params: &Bindings,
        x: Var,
        mode: &mut ForwardMode<'_>,
    ) -> Result<Var, TensorError> {
        let y = self.msa.forward(tape, params, x)?;
        let y = self.gconv1.forward(tape, params, y)?;
        let y = self.gconv2.forward(tape, params, y)?;
        let y = tape.layer_norm(y, params[self.norm_gain], params[self.norm_bias], LAYER_NORM_EPS)?;
        let y = match mode {
            ForwardMode::Train(rng) => tape.dropout(y, self.dropout, &mut **rng)?,
            ForwardMode::Eval => y,
        };
        tape.add(x, y)
    }
}

#[derive(Debug, Clone)]
pub struct HopSubBlock {
    pub gconv: HopGraphConv,
    pub dcl: Option<DilatedConv>,
}

/// Two `(multi-hop conv, dilated conv)` subblocks inside one skip connection.
#[derive(Debug, Clone)]
pub struct MultiHopConvBlock {
    pub subblocks: [HopSubBlock; 2],
}

impl MultiHopConvBlock {
    pub fn forward(&self, tape: &mut Tape, params: &Bindings, x: Var) -> Result<Var, TensorError> {
        let mut h = x;
        for sub in &self.subblocks {
            let z = sub.gconv.forward(tape, params, h)?;
            h = match &sub.dcl {
                Some(dcl) => {
                    let c = dcl.forward(tape, params, z)?;
                    tape.add(z, c)?
                }
                None => z,
            };
        }
        tape.add(x, h)
    }
}

#[derive(Debug, Clone)]
pub struct StackLayer {
    pub attention: GraphAttentionBlock,
    pub hop: MultiHopConvBlock,
}

#[derive(Debug, Clone)]
pub struct MgtNet {
    config: ModelConfig,
    skeleton: SkeletonGraph,
    params: ParamStore,
    embedding: HopGraphConv,
    blocks: Vec<StackLayer>,
    head: HopGraphConv,
}

impl MgtNet {
    /// Builds a freshly initialised network; identical `(config, skeleton, seed)`
    /// give identical parameters.
    pub fn new(config: ModelConfig, skeleton: &SkeletonGraph, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        if skeleton.num_joints() != config.joints {
            return Err(ModelError::Config(format!(
                "config has {} joints but the skeleton has {}",
                config.joints,
                skeleton.num_joints()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let supports = match config.graph_conv {
            GraphConvKind::MultiHop => DisentangledAdjacencySet::new(skeleton, config.hops).normalized().to_vec(),
            GraphConvKind::HighOrder => normalized_adjacency_powers(skeleton, config.hops),
        };
        let a_hat = normalized_adjacency(skeleton);
        let f = config.hidden;
        let hop_conv = |store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, fin, fout, act| {
            HopGraphConv::new(store, name, config.graph_conv, supports.clone(), fin, fout, true, act, rng)
        };

        let embedding = hop_conv(&mut store, &mut rng, "embedding", 2 * config.frames, f, Activation::Relu);
        let mut blocks = Vec::with_capacity(config.layers);
        for l in 0..config.layers {
            let attention = GraphAttentionBlock::new(
                &mut store,
                &format!("blocks.{l}.attention"),
                &a_hat,
                f,
                config.heads,
                config.dropout,
                &mut rng,
            )?;
            let mut sub = |s: usize| -> Result<HopSubBlock, ModelError> {
                let name = format!("blocks.{l}.hop.{s}");
                let gconv = hop_conv(&mut store, &mut rng, &format!("{name}.gconv"), f, f, Activation::Relu);
                let dcl = if config.use_dcl {
                    Some(DilatedConv::new(
                        &mut store,
                        &format!("{name}.dcl"),
                        config.kernel_half_width,
                        config.dilation,
                        &mut rng,
                    )?)
                } else {
                    None
                };
                Ok(HopSubBlock { gconv, dcl })
            };
            let hop = MultiHopConvBlock {
                subblocks: [sub(0)?, sub(1)?],
            };
            blocks.push(StackLayer { attention, hop });
        }
        let head = hop_conv(&mut store, &mut rng, "head", f, 3, Activation::Identity);
        for &w in head.weights() {
            store.get_mut(w).data_mut().iter_mut().for_each(|x| *x *= HEAD_INIT_SCALE);
        }
        Ok(Self {
            config,
            skeleton: skeleton.clone(),
            params: store,
            embedding,
            blocks,
            head,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn skeleton(&self) -> &SkeletonGraph {
        &self.skeleton
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn embedding(&self) -> &HopGraphConv {
        &self.embedding
    }

    pub fn blocks(&self) -> &[StackLayer] {
        &self.blocks
    }

    pub fn head(&self) -> &HopGraphConv {
        &self.head
    }

    /// Exact number of trainable scalars.
    pub fn param_count(&self) -> usize {
        self.params.num_scalars()
    }

    fn check_input(&self, s: &Tensor) -> Result<(), ModelError> {
        let want = [self.config.joints, 2, self.config.frames];
        if s.shape() != want {
            return Err(TensorError::Shape {
                op: "forward",
                left: want.to_vec(),
                right: s.shape().to_vec(),
            }
            .into());
        }
        Ok(())
    }

    fn check_finite(tape: &Tape, v: Var, layer: impl FnOnce() -> String) -> Result<(), ModelError> {
        if cfg!(debug_assertions) && tape.value(v).iter().any(|x| !x.is_finite()) {
            return Err(ModelError::NonFinite { layer: layer() });
        }
        Ok(())
    }

    /// Skeleton embedding: flatten the sequence and apply the first hop conv.
    pub fn embed(&self, tape: &mut Tape, params: &Bindings, s: &Tensor) -> Result<Var, ModelError> {
        self.check_input(s)?;
        let x = tape.constant(flatten_sequence(s)?);
        let h = self.embedding.forward(tape, params, x)?;
        Self::check_finite(tape, h, || "embedding".into())?;
        Ok(h)
    }

    /// `N×2×T` input to `N×3` prediction, recorded on `tape`.
    pub fn forward(
        &self,
        tape: &mut Tape,
        params: &Bindings,
        s: &Tensor,
        mode: &mut ForwardMode<'_>,
    ) -> Result<Var, ModelError> {
        let mut h = self.embed(tape, params, s)?;
        for (l, block) in self.blocks.iter().enumerate() {
            h = block.attention.forward(tape, params, h, mode)?;
            Self::check_finite(tape, h, || format!("blocks.{l}.attention"))?;
            h = block.hop.forward(tape, params, h)?;
            Self::check_finite(tape, h, || format!("blocks.{l}.hop"))?;
        }
        let out = self.head.forward(tape, params, h)?;
        Self::check_finite(tape, out, || "head".into())?;
        Ok(out)
    }

    /// Evaluation-mode prediction for one sequence.
    pub fn predict(&self, s: &Tensor) -> Result<Tensor, ModelError> {
        let mut tape = Tape::new();
        let params = self.params.bind(&mut tape);
        let out = self.forward(&mut tape, &params, s, &mut ForwardMode::Eval)?;
        Ok(tape.tensor(out))
    }
}
