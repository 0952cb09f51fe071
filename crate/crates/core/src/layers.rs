//! Graph convolution, self-attention and dilated convolution layers.
//!
//! Layers hold [`ParamId`]s into a [`ParamStore`] plus any frozen structure
//! (adjacency supports, kernel geometry). A forward pass takes the
//! [`Bindings`] produced by [`ParamStore::bind`] for the current tape.

use rand::Rng;

use crate::autodiff::{Tape, Var};
use crate::error::{ModelError, TensorError};
use crate::params::{glorot, Bindings, ParamId, ParamStore};
use crate::skeleton::DisentangledAdjacencySet;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    pub fn apply(self, tape: &mut Tape, x: Var) -> Var {
        match self {
            Activation::Relu => tape.relu(x),
            Activation::Identity => x,
        }
    }
}

/// Plain graph convolution `σ(Â·H·W)`.
#[derive(Debug, Clone)]
pub struct GraphConv {
    adjacency: Tensor,
    weight: ParamId,
    activation: Activation,
}

impl GraphConv {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        adjacency: Tensor,
        in_features: usize,
        out_features: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let weight = store.add(format!("{name}.weight"), glorot(rng, in_features, out_features));
        Self {
            adjacency,
            weight,
            activation,
        }
    }

    pub fn weight(&self) -> ParamId {
        self.weight
    }

    pub fn forward(&self, tape: &mut Tape, params: &Bindings, h: Var) -> Result<Var, TensorError> {
        let a = tape.constant(self.adjacency.clone());
        let ah = tape.matmul(a, h)?;
        let z = tape.matmul(ah, params[self.weight])?;
        Ok(self.activation.apply(tape, z))
    }
}

/// How the per-hop supports of a [`HopGraphConv`] are built.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GraphConvKind {
    /// Normalised k-adjacency matrices `Â_k` (disentangled neighbourhoods).
    #[default]
    MultiHop,
    /// Powers `Â^k` of the normalised adjacency.
    HighOrder,
}

/// `σ(Σ_k S_k·H·W_k + b)` over a stack of frozen supports `S_0..S_K`.
///
/// With [`GraphConvKind::MultiHop`] the supports are the normalised
/// k-adjacency matrices; with [`GraphConvKind::HighOrder`] they are the
/// powers of the normalised adjacency.
#[derive(Debug, Clone)]
pub struct HopGraphConv {
    kind: GraphConvKind,
    supports: Vec<Tensor>,
    weights: Vec<ParamId>,
    bias: Option<ParamId>,
    activation: Activation,
}

impl HopGraphConv {
    /// Allocates one `in×out` weight per support and an optional zero bias.
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        kind: GraphConvKind,
        supports: Vec<Tensor>,
        in_features: usize,
        out_features: usize,
        bias: bool,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let weights = (0..supports.len())
            .map(|k| store.add(format!("{name}.weight.{k}"), glorot(rng, in_features, out_features)))
            .collect();
        let bias = bias.then(|| store.add(format!("{name}.bias"), Tensor::zeros(&[out_features])));
        Self {
            kind,
            supports,
            weights,
            bias,
            activation,
        }
    }

    /// Multi-hop layer over an existing adjacency set and existing weights.
    pub fn multi_hop(
        adjacency: &DisentangledAdjacencySet,
        weights: Vec<ParamId>,
        bias: Option<ParamId>,
        activation: Activation,
    ) -> Result<Self, ModelError> {
        Self::from_parts(
            GraphConvKind::MultiHop,
            adjacency.normalized().to_vec(),
            weights,
            bias,
            activation,
        )
    }

    pub fn from_parts(
        kind: GraphConvKind,
        supports: Vec<Tensor>,
        weights: Vec<ParamId>,
        bias: Option<ParamId>,
        activation: Activation,
    ) -> Result<Self, ModelError> {
        if supports.len() != weights.len() {
            return Err(ModelError::Config(format!(
                "{} supports (K = {}) but {} weight matrices",
                supports.len(),
                supports.len().saturating_sub(1),
                weights.len()
            )));
        }
        Ok(Self {
            kind,
            supports,
            weights,
            bias,
            activation,
        })
    }

    pub fn kind(&self) -> GraphConvKind {
        self.kind
    }

    pub fn max_hops(&self) -> usize {
        self.supports.len() - 1
    }

    pub fn supports(&self) -> &[Tensor] {
        &self.supports
    }

    pub fn weights(&self) -> &[ParamId] {
        &self.weights
    }

    pub fn bias(&self) -> Option<ParamId> {
        self.bias
    }

    pub fn forward(&self, tape: &mut Tape, params: &Bindings, h: Var) -> Result<Var, TensorError> {
        let mut acc: Option<Var> = None;
        for (support, &w) in self.supports.iter().zip(&self.weights) {
            let s = tape.constant(support.clone());
            let sh = tape.matmul(s, h)?;
            let term = tape.matmul(sh, params[w])?;
            acc = Some(match acc {
                Some(sum) => tape.add(sum, term)?,
                None => term,
            });
        }
        let mut z = acc.ok_or_else(|| TensorError::Contract("graph convolution without supports".into()))?;
        if let Some(b) = self.bias {
            z = tape.add_row(z, params[b])?;
        }
        Ok(self.activation.apply(tape, z))
    }
}

/// Graph convolution whose `N×N` adjacency is itself trainable.
#[derive(Debug, Clone)]
pub struct LamGConv {
    adjacency: ParamId,
    weight: ParamId,
    activation: Activation,
}

impl LamGConv {
    /// The adjacency starts as `initial` (normally the skeleton's `Â`) and
    /// is left unconstrained during training.
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        initial: Tensor,
        in_features: usize,
        out_features: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let adjacency = store.add(format!("{name}.adjacency"), initial);
        let weight = store.add(format!("{name}.weight"), glorot(rng, in_features, out_features));
        Self {
            adjacency,
            weight,
            activation,
        }
    }

    pub fn from_parts(adjacency: ParamId, weight: ParamId, activation: Activation) -> Self {
        Self {
            adjacency,
            weight,
            activation,
        }
    }

    pub fn adjacency(&self) -> ParamId {
        self.adjacency
    }

    pub fn weight(&self) -> ParamId {
        self.weight
    }

    pub fn forward(&self, tape: &mut Tape, params: &Bindings, h: Var) -> Result<Var, TensorError> {
        let ah = tape.matmul(params[self.adjacency], h)?;
        let z = tape.matmul(ah, params[self.weight])?;
        Ok(self.activation.apply(tape, z))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AttentionHead {
    pub query: ParamId,
    pub key: ParamId,
    pub value: ParamId,
}

/// Multi-head self-attention over the rows of an `N×F` matrix. Each head
/// projects to `F/h` columns with its own query/key/value matrices; the
/// concatenated heads go through an `F×F` output projection.
#[derive(Debug, Clone)]
pub struct MultiHeadSelfAttention {
    heads: Vec<AttentionHead>,
    output: ParamId,
    features: usize,
}

impl MultiHeadSelfAttention {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        features: usize,
        num_heads: usize,
        rng: &mut R,
    ) -> Result<Self, ModelError> {
        if num_heads == 0 || !features.is_multiple_of(num_heads) {
            return Err(ModelError::Config(format!(
                "feature width {features} is not divisible by {num_heads} heads"
            )));
        }
        let d = features / num_heads;
        let heads = (0..num_heads)
            .map(|i| AttentionHead {
                query: store.add(format!("{name}.head.{i}.query"), glorot(rng, features, d)),
                key: store.add(format!("{name}.head.{i}.key"), glorot(rng, features, d)),
                value: store.add(format!("{name}.head.{i}.value"), glorot(rng, features, d)),
            })
            .collect();
        let output = store.add(format!("{name}.output"), glorot(rng, features, features));
        Ok(Self {
            heads,
            output,
            features,
        })
    }

    pub fn heads(&self) -> &[AttentionHead] {
        &self.heads
    }

    pub fn output(&self) -> ParamId {
        self.output
    }

    pub fn head_dim(&self) -> usize {
        self.features / self.heads.len()
    }

    pub fn forward(&self, tape: &mut Tape, params: &Bindings, x: Var) -> Result<Var, TensorError> {
        Ok(self.forward_with_attention(tape, params, x)?.0)
    }

    /// Also returns each head's `N×N` attention matrix.
    pub fn forward_with_attention(
        &self,
        tape: &mut Tape,
        params: &Bindings,
        x: Var,
    ) -> Result<(Var, Vec<Var>), TensorError> {
        let scale = 1.0 / (self.head_dim() as f64).sqrt();
        let mut outputs = Vec::with_capacity(self.heads.len());
        let mut maps = Vec::with_capacity(self.heads.len());
        for head in &self.heads {
            let q = tape.matmul(x, params[head.query])?;
            let k = tape.matmul(x, params[head.key])?;
            let v = tape.matmul(x, params[head.value])?;
            let kt = tape.transpose(k)?;
            let scores = tape.matmul(q, kt)?;
            let scores = tape.scale(scores, scale);
            let attn = tape.softmax_rows(scores)?;
            outputs.push(tape.matmul(attn, v)?);
            maps.push(attn);
        }
        let cat = tape.concat_cols(&outputs)?;
        Ok((tape.matmul(cat, params[self.output])?, maps))
    }
}

/// Single-channel dilated convolution over the joint×feature grid.
#[derive(Debug, Clone)]
pub struct DilatedConv {
    kernel: ParamId,
    half_width: usize,
    dilation: usize,
}

impl DilatedConv {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        half_width: usize,
        dilation: usize,
        rng: &mut R,
    ) -> Result<Self, ModelError> {
        if dilation == 0 {
            return Err(ModelError::Config("dilation rate must be at least 1".into()));
        }
        let k = 2 * half_width + 1;
        let limit = 1.0 / (k * k) as f64;
        let data = (0..k * k).map(|_| rng.random_range(-limit..limit)).collect();
        let kernel = store.add(format!("{name}.kernel"), Tensor::new(&[k, k], data)?);
        Ok(Self {
            kernel,
            half_width,
            dilation,
        })
    }

    pub fn from_parts(kernel: ParamId, half_width: usize, dilation: usize) -> Self {
        Self {
            kernel,
            half_width,
            dilation,
        }
    }

    pub fn kernel(&self) -> ParamId {
        self.kernel
    }

    pub fn receptive_field(&self) -> usize {
        receptive_field(self.half_width, self.dilation)
    }

    pub fn forward(&self, tape: &mut Tape, params: &Bindings, x: Var) -> Result<Var, TensorError> {
        tape.dilated_conv2d(x, params[self.kernel], self.half_width, self.dilation)
    }
}

/// Span covered along one axis by a `(2m+1)`-tap kernel with dilation `d`.
pub fn receptive_field(half_width: usize, dilation: usize) -> usize {
    2 * dilation * half_width + 1
}
