//! Token-level multi-head graph attention network: forward pass, analytic
//! backward pass, parameter initialization and checkpointing.
//!
//! The query always comes from the parent comment's token embeddings; every
//! selected context node (the parent included) supplies keys and values. Head
//! outputs are concatenated, projected, mean-pooled per node and averaged
//! into the context vector `v`.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::{
    embed_tokens, mean_pool, mix_seed, tokenize, Encoder, EmbeddingProvider, TokenSequence,
    SEP_TOKEN,
};
use crate::graph::{Discussion, NodeId};
use crate::tensor::Matrix;
use crate::walks::ContextSelection;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("empty key matrix (node has no tokens)")]
    EmptyKeys,
    #[error("all context nodes are empty")]
    EmptyContext,
    #[error("target has no tokens and no usable context")]
    EmptyExample,
    #[error("feature dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("invalid dims: {0}")]
    BadDims(String),
    #[error("bad checkpoint: {0}")]
    BadCheckpoint(String),
    #[error("embedding error: {0}")]
    Embed(#[from] crate::embed::EmbedError),
    #[error("graph error: {0}")]
    Graph(#[from] crate::graph::GraphError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Classification task. Polarity enables the cross-attention feature block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskMode {
    Polarity,
    Hate,
}

impl TaskMode {
    pub fn with_cross(self) -> bool {
        matches!(self, TaskMode::Polarity)
    }
}

impl std::str::FromStr for TaskMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "polarity" => Ok(TaskMode::Polarity),
            "hate" => Ok(TaskMode::Hate),
            other => Err(format!("unknown task {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub d_model: usize,
    pub heads: usize,
    pub d_head: usize,
    pub with_cross: bool,
}

impl ModelDims {
    /// d_head = floor(d_model / heads); heads need not divide d_model.
    pub fn new(d_model: usize, heads: usize, with_cross: bool) -> Result<ModelDims, ModelError> {
        if d_model == 0 || heads == 0 || d_model < heads {
            return Err(ModelError::BadDims(format!(
                "d_model={d_model}, heads={heads}"
            )));
        }
        Ok(ModelDims {
            d_model,
            heads,
            d_head: d_model / heads,
            with_cross,
        })
    }

    pub fn feature_dim(&self) -> usize {
        if self.with_cross {
            4 * self.d_model
        } else {
            3 * self.d_model
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub dims: ModelDims,
    pub wq: Vec<Matrix>,
    pub wk: Vec<Matrix>,
    pub wv: Vec<Matrix>,
    pub wo: Matrix,
    pub cls_w: Matrix,
    pub cls_b: Vec<f64>,
}

/// Scaled uniform (Xavier) initialization, deterministic per seed.
pub fn init_params(seed: u64, dims: ModelDims) -> ModelParams {
    let xavier = |name: &str, rows: usize, cols: usize| -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, name));
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        let data = (0..rows * cols)
            .map(|_| rng.random_range(-limit..limit))
            .collect();
        Matrix::from_vec(rows, cols, data)
    };
    let mut wq = Vec::new();
    let mut wk = Vec::new();
    let mut wv = Vec::new();
    for j in 0..dims.heads {
        wq.push(xavier(&format!("wq.{j}"), dims.d_model, dims.d_head));
        wk.push(xavier(&format!("wk.{j}"), dims.d_model, dims.d_head));
        wv.push(xavier(&format!("wv.{j}"), dims.d_model, dims.d_head));
    }
    ModelParams {
        dims,
        wq,
        wk,
        wv,
        wo: xavier("wo", dims.heads * dims.d_head, dims.d_model),
        cls_w: xavier("cls.w", dims.feature_dim(), 2),
        cls_b: vec![0.0; 2],
    }
}

/// weights = row-softmax(Q K^T / sqrt(d_k)); output = weights * V.
pub fn scaled_dot_attention(
    q: &Matrix,
    k: &Matrix,
    v: &Matrix,
) -> Result<(Matrix, Matrix), ModelError> {
    if k.rows() == 0 {
        return Err(ModelError::EmptyKeys);
    }
    assert_eq!(q.cols(), k.cols(), "query/key dim mismatch");
    assert_eq!(k.rows(), v.rows(), "key/value row mismatch");
    let d_k = k.cols() as f64;
    let mut weights = q.matmul_transpose(k).scale(1.0 / d_k.sqrt());
    weights.softmax_rows();
    let output = weights.matmul(v);
    Ok((output, weights))
}

/// Per-head attention state retained for the backward pass.
#[derive(Debug, Clone)]
struct HeadState {
    k: Matrix,
    v: Matrix,
    a: Matrix,
}

#[derive(Debug, Clone)]
struct NodeState {
    node: NodeId,
    tokens: Vec<u32>,
    e: Matrix,
    heads: Vec<HeadState>,
    concat: Matrix,
    s: Vec<f64>,
}

/// Per-context-node, per-head attention weights (rows sum to 1).
#[derive(Debug, Clone, Serialize)]
pub struct AttentionTrace {
    pub nodes: Vec<NodeTrace>,
}

#[derive(Debug, Clone, Serialize)]
pub struct NodeTrace {
    pub node: NodeId,
    /// One T_query x T_key weight matrix per head.
    pub per_head: Vec<Matrix>,
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub logits: [f64; 2],
    pub probabilities: [f64; 2],
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub w: Option<Vec<f64>>,
    pub sentence_vectors: Vec<(NodeId, Vec<f64>)>,
    pub trace: AttentionTrace,
}

/// Everything the backward pass needs, retained from forward.
pub struct ForwardState {
    target_tokens: Vec<u32>,
    e_target: Matrix,
    parent_tokens: Vec<u32>,
    e_parent: Matrix,
    qs: Vec<Matrix>,
    context: Vec<NodeState>,
    cross_tokens: Vec<u32>,
    cross_len: usize,
    features: Vec<f64>,
    u: Vec<f64>,
    v: Vec<f64>,
}

/// Gradients for every trainable tensor. The embedding entries are sparse,
/// keyed by token id.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub wq: Vec<Matrix>,
    pub wk: Vec<Matrix>,
    pub wv: Vec<Matrix>,
    pub wo: Matrix,
    pub cls_w: Matrix,
    pub cls_b: Vec<f64>,
    pub emb: BTreeMap<u32, Vec<f64>>,
}

impl Gradients {
    pub fn zeros(dims: &ModelDims) -> Gradients {
        Gradients {
            wq: (0..dims.heads)
                .map(|_| Matrix::zeros(dims.d_model, dims.d_head))
                .collect(),
            wk: (0..dims.heads)
                .map(|_| Matrix::zeros(dims.d_model, dims.d_head))
                .collect(),
            wv: (0..dims.heads)
                .map(|_| Matrix::zeros(dims.d_model, dims.d_head))
                .collect(),
            wo: Matrix::zeros(dims.heads * dims.d_head, dims.d_model),
            cls_w: Matrix::zeros(dims.feature_dim(), 2),
            cls_b: vec![0.0; 2],
            emb: BTreeMap::new(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.wq.iter_mut().zip(&other.wq) {
            a.add_assign(b);
        }
        for (a, b) in self.wk.iter_mut().zip(&other.wk) {
            a.add_assign(b);
        }
        for (a, b) in self.wv.iter_mut().zip(&other.wv) {
            a.add_assign(b);
        }
        self.wo.add_assign(&other.wo);
        self.cls_w.add_assign(&other.cls_w);
        for (a, b) in self.cls_b.iter_mut().zip(&other.cls_b) {
            *a += b;
        }
        for (tok, g) in &other.emb {
            let entry = self
                .emb
                .entry(*tok)
                .or_insert_with(|| vec![0.0; g.len()]);
            for (a, b) in entry.iter_mut().zip(g) {
                *a += b;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for m in self
            .wq
            .iter_mut()
            .chain(self.wk.iter_mut())
            .chain(self.wv.iter_mut())
        {
            for v in m.data_mut() {
                *v *= s;
            }
        }
        for v in self.wo.data_mut() {
            *v *= s;
        }
        for v in self.cls_w.data_mut() {
            *v *= s;
        }
        for v in &mut self.cls_b {
            *v *= s;
        }
        for g in self.emb.values_mut() {
            for v in g {
                *v *= s;
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.wq.iter().all(Matrix::all_finite)
            && self.wk.iter().all(Matrix::all_finite)
            && self.wv.iter().all(Matrix::all_finite)
            && self.wo.all_finite()
            && self.cls_w.all_finite()
            && self.cls_b.iter().all(|v| v.is_finite())
            && self.emb.values().flatten().all(|v| v.is_finite())
    }
}

/// One head of graph attention between the parent (query) and a context node.
fn attend_head(
    params: &ModelParams,
    j: usize,
    q: &Matrix,
    e_i: &Matrix,
) -> Result<(Matrix, HeadState), ModelError> {
    let k = e_i.matmul(&params.wk[j]);
    let v = e_i.matmul(&params.wv[j]);
    let (h, a) = scaled_dot_attention(q, &k, &v)?;
    Ok((h, HeadState { k, v, a }))
}

/// Multi-head graph attention for one context node: per-head scaled dot
/// attention, concatenation, output projection. Returns the projected output
/// (T_parent x d_model) and the per-head weight matrices.
pub fn multi_head_graph_attention(
    params: &ModelParams,
    e_parent: &Matrix,
    e_i: &Matrix,
) -> Result<(Matrix, Vec<Matrix>), ModelError> {
    if e_parent.rows() == 0 || e_i.rows() == 0 {
        return Err(ModelError::EmptyKeys);
    }
    let qs: Vec<Matrix> = (0..params.dims.heads)
        .map(|j| e_parent.matmul(&params.wq[j]))
        .collect();
    let mut outputs = Vec::new();
    let mut weights = Vec::new();
    for j in 0..params.dims.heads {
        let (h, st) = attend_head(params, j, &qs[j], e_i)?;
        outputs.push(h);
        weights.push(st.a);
    }
    let refs: Vec<&Matrix> = outputs.iter().collect();
    let concat = Matrix::hstack(&refs);
    Ok((concat.matmul(&params.wo), weights))
}

/// Scalar relevance of a candidate to a parent: the attention-weight tensor
/// averaged over heads, query tokens and key tokens. Empty inputs score 0.
pub fn node_attention_score(
    params: &ModelParams,
    e_parent: &Matrix,
    e_candidate: &Matrix,
) -> f64 {
    if e_parent.rows() == 0 || e_candidate.rows() == 0 {
        return 0.0;
    }
    let (_, weights) = multi_head_graph_attention(params, e_parent, e_candidate)
        .expect("non-empty inputs");
    let mut sum = 0.0;
    let mut count = 0usize;
    for w in &weights {
        sum += w.data().iter().sum::<f64>();
        count += w.rows() * w.cols();
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// Concatenation [u; v; |u - v|] and optionally w.
pub fn build_features(
    u: &[f64],
    v: &[f64],
    w: Option<&[f64]>,
) -> Result<Vec<f64>, ModelError> {
    if u.len() != v.len() {
        return Err(ModelError::DimMismatch(format!(
            "u has {} dims, v has {}",
            u.len(),
            v.len()
        )));
    }
    let mut f = Vec::with_capacity(u.len() * 4);
    f.extend_from_slice(u);
    f.extend_from_slice(v);
    f.extend(u.iter().zip(v).map(|(a, b)| (a - b).abs()));
    if let Some(w) = w {
        if w.len() != u.len() {
            return Err(ModelError::DimMismatch(format!(
                "w has {} dims, expected {}",
                w.len(),
                u.len()
            )));
        }
        f.extend_from_slice(w);
    }
    Ok(f)
}

/// Cross-attention input: target tokens, separator, parent tokens, truncated
/// to `t_max`, then embedded and mean-pooled.
pub fn cross_attention_tokens(target_text: &str, parent_text: &str, t_max: usize) -> Vec<u32> {
    let mut toks = tokenize(target_text, t_max).tokens;
    toks.push(SEP_TOKEN);
    toks.extend(tokenize(parent_text, t_max).tokens);
    toks.truncate(t_max);
    toks
}

pub fn cross_attention_embedding(
    provider: &dyn EmbeddingProvider,
    target_text: &str,
    parent_text: &str,
    t_max: usize,
) -> Result<Vec<f64>, ModelError> {
    let tokens = cross_attention_tokens(target_text, parent_text, t_max);
    let m = embed_tokens(provider, &TokenSequence { tokens })?;
    Ok(mean_pool(&m))
}

fn softmax2(logits: [f64; 2]) -> [f64; 2] {
    let m = logits[0].max(logits[1]);
    let e0 = (logits[0] - m).exp();
    let e1 = (logits[1] - m).exp();
    let s = e0 + e1;
    [e0 / s, e1 / s]
}

/// Full forward pass for one labeled example.
///
/// The query node is the selection's first entry (the walk start). When the
/// selection is empty (a root target with no recordable context) the target
/// stands in as its own context.
pub fn forward(
    params: &ModelParams,
    provider: &dyn EmbeddingProvider,
    discussion: &Discussion,
    target: &NodeId,
    selection: &ContextSelection,
    task: TaskMode,
    t_max: usize,
) -> Result<(ForwardOutput, ForwardState), ModelError> {
    let target_node = discussion.node(target)?;
    let target_seq = tokenize(&target_node.text, t_max);
    let e_target = embed_tokens(provider, &target_seq)?;
    let u = mean_pool(&e_target);

    let context_ids: Vec<NodeId> = if selection.ordered_nodes.is_empty() {
        vec![target.clone()]
    } else {
        selection.ordered_nodes.iter().map(|(n, _)| n.clone()).collect()
    };
    let parent_id = &context_ids[0];
    let parent_node = discussion.node(parent_id)?;
    let parent_seq = tokenize(&parent_node.text, t_max);
    let mut e_parent = embed_tokens(provider, &parent_seq)?;
    let mut parent_tokens = parent_seq.tokens.clone();
    if e_parent.rows() == 0 {
        // empty parent post: fall back to the target as the query source
        parent_tokens = target_seq.tokens.clone();
        e_parent = e_target.clone();
    }

    let qs: Vec<Matrix> = (0..params.dims.heads)
        .map(|j| e_parent.matmul(&params.wq[j]))
        .collect();

    let mut context = Vec::new();
    if e_parent.rows() > 0 {
        for id in &context_ids {
            let node = discussion.node(id)?;
            let seq = tokenize(&node.text, t_max);
            if seq.is_empty() {
                continue; // empty posts are skipped, not zero-padded
            }
            let e_i = embed_tokens(provider, &seq)?;
            let mut heads = Vec::new();
            let mut outputs = Vec::new();
            for j in 0..params.dims.heads {
                let (h, st) = attend_head(params, j, &qs[j], &e_i)?;
                outputs.push(h);
                heads.push(st);
            }
            let refs: Vec<&Matrix> = outputs.iter().collect();
            let concat = Matrix::hstack(&refs);
            let o = concat.matmul(&params.wo);
            let s = mean_pool(&o);
            context.push(NodeState {
                node: id.clone(),
                tokens: seq.tokens,
                e: e_i,
                heads,
                concat,
                s,
            });
        }
    }

    let d = params.dims.d_model;
    let v = if context.is_empty() {
        if u.iter().all(|x| *x == 0.0) {
            return Err(ModelError::EmptyExample);
        }
        vec![0.0; d]
    } else {
        let mut acc = vec![0.0; d];
        for st in &context {
            for (a, b) in acc.iter_mut().zip(&st.s) {
                *a += b;
            }
        }
        let inv = 1.0 / context.len() as f64;
        acc.iter_mut().for_each(|x| *x *= inv);
        acc
    };

    let (w, cross_tokens) = if task.with_cross() {
        let real_parent_text = discussion
            .parent(target)
            .map(|p| discussion.node(p).map(|n| n.text.clone()))
            .transpose()?
            .unwrap_or_default();
        let tokens = cross_attention_tokens(&target_node.text, &real_parent_text, t_max);
        let m = embed_tokens(provider, &TokenSequence { tokens: tokens.clone() })?;
        (Some(mean_pool(&m)), tokens)
    } else {
        (None, Vec::new())
    };

    let features = build_features(&u, &v, w.as_deref())?;
    let mut logits = [params.cls_b[0], params.cls_b[1]];
    for (k, f) in features.iter().enumerate() {
        logits[0] += f * params.cls_w.get(k, 0);
        logits[1] += f * params.cls_w.get(k, 1);
    }
    let probabilities = softmax2(logits);

    let output = ForwardOutput {
        logits,
        probabilities,
        u: u.clone(),
        v: v.clone(),
        w,
        sentence_vectors: context.iter().map(|c| (c.node.clone(), c.s.clone())).collect(),
        trace: AttentionTrace {
            nodes: context
                .iter()
                .map(|c| NodeTrace {
                    node: c.node.clone(),
                    per_head: c.heads.iter().map(|h| h.a.clone()).collect(),
                })
                .collect(),
        },
    };
    let cross_len = cross_tokens.len();
    let state = ForwardState {
        target_tokens: target_seq.tokens,
        e_target,
        parent_tokens,
        e_parent,
        qs,
        context,
        cross_tokens,
        cross_len,
        features,
        u,
        v,
    };
    Ok((output, state))
}

fn accumulate_token_grads(
    emb: &mut BTreeMap<u32, Vec<f64>>,
    tokens: &[u32],
    de: &Matrix,
) {
    for (r, &tok) in tokens.iter().enumerate() {
        let entry = emb.entry(tok).or_insert_with(|| vec![0.0; de.cols()]);
        for (a, b) in entry.iter_mut().zip(de.row(r)) {
            *a += b;
        }
    }
}

/// Exact analytic gradients of the loss w.r.t. every parameter tensor and the
/// token embeddings touched by this example, given d(loss)/d(logits).
pub fn backward(
    params: &ModelParams,
    state: &ForwardState,
    dlogits: [f64; 2],
) -> Gradients {
    let dims = &params.dims;
    let d = dims.d_model;
    let mut g = Gradients::zeros(dims);

    // classifier
    for c in 0..2 {
        g.cls_b[c] = dlogits[c];
    }
    let mut dfeat = vec![0.0; state.features.len()];
    for (k, f) in state.features.iter().enumerate() {
        for c in 0..2 {
            let cur = g.cls_w.get(k, c) + f * dlogits[c];
            g.cls_w.set(k, c, cur);
            dfeat[k] += params.cls_w.get(k, c) * dlogits[c];
        }
    }

    // split the feature gradient; |u-v| uses subgradient 0 at the kink
    let mut du = vec![0.0; d];
    let mut dv = vec![0.0; d];
    for i in 0..d {
        let sign = (state.u[i] - state.v[i]).signum() * f64::from(state.u[i] != state.v[i]);
        du[i] = dfeat[i] + sign * dfeat[2 * d + i];
        dv[i] = dfeat[d + i] - sign * dfeat[2 * d + i];
    }
    if dims.with_cross && state.cross_len > 0 {
        let dw = &dfeat[3 * d..4 * d];
        let inv = 1.0 / state.cross_len as f64;
        let mut de = Matrix::zeros(state.cross_len, d);
        for r in 0..state.cross_len {
            for c in 0..d {
                de.set(r, c, dw[c] * inv);
            }
        }
        accumulate_token_grads(&mut g.emb, &state.cross_tokens, &de);
    }

    // u = mean_pool(E_target)
    let t_t = state.e_target.rows();
    if t_t > 0 {
        let inv = 1.0 / t_t as f64;
        let mut de = Matrix::zeros(t_t, d);
        for r in 0..t_t {
            for c in 0..d {
                de.set(r, c, du[c] * inv);
            }
        }
        accumulate_token_grads(&mut g.emb, &state.target_tokens, &de);
    }

    // v = mean over context sentence vectors
    if state.context.is_empty() {
        return g;
    }
    let m = state.context.len() as f64;
    let t_p = state.e_parent.rows();
    let mut dqs: Vec<Matrix> = (0..dims.heads)
        .map(|_| Matrix::zeros(t_p, dims.d_head))
        .collect();
    let inv_tp = 1.0 / t_p as f64;
    let scale = 1.0 / (dims.d_head as f64).sqrt();

    for st in &state.context {
        // dS_i = dv / m; dO_i rows = dS_i / T_p
        let mut do_i = Matrix::zeros(t_p, d);
        for r in 0..t_p {
            for c in 0..d {
                do_i.set(r, c, dv[c] / m * inv_tp);
            }
        }
        // O_i = Concat_i * W_O
        g.wo.add_assign(&st.concat.transpose_matmul(&do_i));
        let dconcat = do_i.matmul_transpose(&params.wo);
        let mut de_i = Matrix::zeros(st.e.rows(), d);
        for j in 0..dims.heads {
            let dh = dconcat.columns(j * dims.d_head, (j + 1) * dims.d_head);
            let hs = &st.heads[j];
            // H = A * V
            let da = dh.matmul_transpose(&hs.v);
            let dv_j = hs.a.transpose_matmul(&dh);
            // softmax backward: dZ = A o (dA - rowdot(dA, A))
            let mut dz = Matrix::zeros(da.rows(), da.cols());
            for r in 0..da.rows() {
                let arow = hs.a.row(r);
                let darow = da.row(r);
                let rowdot: f64 = arow.iter().zip(darow).map(|(a, b)| a * b).sum();
                for c in 0..da.cols() {
                    dz.set(r, c, arow[c] * (darow[c] - rowdot) * scale);
                }
            }
            // Z = (Q K^T) * scale
            dqs[j].add_assign(&dz.matmul(&hs.k));
            let dk = dz.transpose_matmul(&state.qs[j]);
            // K = E_i Wk, V = E_i Wv
            g.wk[j].add_assign(&st.e.transpose_matmul(&dk));
            g.wv[j].add_assign(&st.e.transpose_matmul(&dv_j));
            de_i.add_assign(&dk.matmul_transpose(&params.wk[j]));
            de_i.add_assign(&dv_j.matmul_transpose(&params.wv[j]));
        }
        accumulate_token_grads(&mut g.emb, &st.tokens, &de_i);
    }

    // Q_j = E_parent Wq_j, shared across context nodes
    let mut de_p = Matrix::zeros(t_p, d);
    for j in 0..dims.heads {
        g.wq[j].add_assign(&state.e_parent.transpose_matmul(&dqs[j]));
        de_p.add_assign(&dqs[j].matmul_transpose(&params.wq[j]));
    }
    accumulate_token_grads(&mut g.emb, &state.parent_tokens, &de_p);
    g
}

// ---------------------------------------------------------------------------
// Checkpoint archive
// ---------------------------------------------------------------------------

/// Trained model plus everything needed to run it: dims, task, encoder.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub encoder: Encoder,
    pub task: TaskMode,
    pub t_max: usize,
}

const CHECKPOINT_MAGIC: &str = "gascom-checkpoint v1";

impl Checkpoint {
    pub fn save<W: Write>(&self, w: &mut W) -> Result<(), ModelError> {
        writeln!(w, "{CHECKPOINT_MAGIC}")?;
        let dims = &self.params.dims;
        let task = match self.task {
            TaskMode::Polarity => "polarity",
            TaskMode::Hate => "hate",
        };
        writeln!(
            w,
            "d_model={} heads={} d_head={} with_cross={} t_max={} task={}",
            dims.d_model, dims.heads, dims.d_head, dims.with_cross as u8, self.t_max, task
        )?;
        match &self.encoder {
            Encoder::Toy(t) => writeln!(
                w,
                "encoder=toy seed={} trainable={}",
                t.seed, t.trainable as u8
            )?,
            Encoder::File(f) => writeln!(w, "encoder=file dim={}", f.d_model)?,
        }
        let write_tensor = |w: &mut W, name: &str, m: &Matrix| -> std::io::Result<()> {
            writeln!(w, "tensor {name} {} {}", m.rows(), m.cols())?;
            for r in 0..m.rows() {
                let row: Vec<String> = m.row(r).iter().map(|v| v.to_string()).collect();
                writeln!(w, "{}", row.join(" "))?;
            }
            Ok(())
        };
        for j in 0..dims.heads {
            write_tensor(w, &format!("wq.{j}"), &self.params.wq[j])?;
            write_tensor(w, &format!("wk.{j}"), &self.params.wk[j])?;
            write_tensor(w, &format!("wv.{j}"), &self.params.wv[j])?;
        }
        write_tensor(w, "wo", &self.params.wo)?;
        write_tensor(w, "cls.w", &self.params.cls_w)?;
        write_tensor(
            w,
            "cls.b",
            &Matrix::from_vec(1, 2, self.params.cls_b.clone()),
        )?;
        let table: &BTreeMap<u32, Vec<f64>> = match &self.encoder {
            Encoder::Toy(t) => &t.overrides,
            Encoder::File(f) => &f.table,
        };
        writeln!(w, "tokens emb.table {} {}", table.len(), dims.d_model)?;
        for (tok, vec) in table {
            let row: Vec<String> = vec.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{tok} {}", row.join(" "))?;
        }
        Ok(())
    }

    pub fn save_to_path(&self, path: &std::path::Path) -> Result<(), ModelError> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.save(&mut f)
    }

    pub fn load<R: BufRead>(r: &mut R) -> Result<Checkpoint, ModelError> {
        let bad = |msg: &str| ModelError::BadCheckpoint(msg.to_string());
        let mut lines = r.lines();
        let mut next = |what: &str| -> Result<String, ModelError> {
            lines
                .next()
                .transpose()?
                .ok_or_else(|| ModelError::BadCheckpoint(format!("missing {what}")))
        };
        if next("magic")? != CHECKPOINT_MAGIC {
            return Err(bad("wrong magic line"));
        }
        let header = next("dims header")?;
        let mut fields = BTreeMap::new();
        for part in header.split_whitespace() {
            if let Some((k, v)) = part.split_once('=') {
                fields.insert(k.to_string(), v.to_string());
            }
        }
        let get = |k: &str| -> Result<String, ModelError> {
            fields
                .get(k)
                .cloned()
                .ok_or_else(|| ModelError::BadCheckpoint(format!("missing field {k}")))
        };
        let d_model: usize = get("d_model")?.parse().map_err(|_| bad("d_model"))?;
        let heads: usize = get("heads")?.parse().map_err(|_| bad("heads"))?;
        let d_head: usize = get("d_head")?.parse().map_err(|_| bad("d_head"))?;
        let with_cross = get("with_cross")? == "1";
        let t_max: usize = get("t_max")?.parse().map_err(|_| bad("t_max"))?;
        let task = match get("task")?.as_str() {
            "polarity" => TaskMode::Polarity,
            "hate" => TaskMode::Hate,
            _ => return Err(bad("task")),
        };
        let dims = ModelDims {
            d_model,
            heads,
            d_head,
            with_cross,
        };
        let enc_line = next("encoder header")?;
        let mut enc_fields = BTreeMap::new();
        for part in enc_line.split_whitespace() {
            if let Some((k, v)) = part.split_once('=') {
                enc_fields.insert(k.to_string(), v.to_string());
            }
        }
        let mut read_tensor = |name: &str| -> Result<Matrix, ModelError> {
            let head = lines
                .next()
                .transpose()?
                .ok_or_else(|| ModelError::BadCheckpoint(format!("missing tensor {name}")))?;
            let parts: Vec<&str> = head.split_whitespace().collect();
            if parts.len() != 4 || parts[0] != "tensor" || parts[1] != name {
                return Err(ModelError::BadCheckpoint(format!(
                    "expected tensor {name}, got {head:?}"
                )));
            }
            let rows: usize = parts[2].parse().map_err(|_| bad("tensor rows"))?;
            let cols: usize = parts[3].parse().map_err(|_| bad("tensor cols"))?;
            let mut data = Vec::with_capacity(rows * cols);
            for _ in 0..rows {
                let line = lines
                    .next()
                    .transpose()?
                    .ok_or_else(|| ModelError::BadCheckpoint(format!("truncated tensor {name}")))?;
                for v in line.split_whitespace() {
                    data.push(v.parse::<f64>().map_err(|_| bad("tensor value"))?);
                }
            }
            if data.len() != rows * cols {
                return Err(ModelError::BadCheckpoint(format!("tensor {name} size")));
            }
            Ok(Matrix::from_vec(rows, cols, data))
        };
        let mut wq = Vec::new();
        let mut wk = Vec::new();
        let mut wv = Vec::new();
        for j in 0..heads {
            wq.push(read_tensor(&format!("wq.{j}"))?);
            wk.push(read_tensor(&format!("wk.{j}"))?);
            wv.push(read_tensor(&format!("wv.{j}"))?);
        }
        let wo = read_tensor("wo")?;
        let cls_w = read_tensor("cls.w")?;
        let cls_b_m = read_tensor("cls.b")?;
        let cls_b = cls_b_m.data().to_vec();
        let table_head = lines.next().transpose()?.ok_or_else(|| bad("emb.table"))?;
        let parts: Vec<&str> = table_head.split_whitespace().collect();
        if parts.len() != 4 || parts[0] != "tokens" || parts[1] != "emb.table" {
            return Err(bad("emb.table header"));
        }
        let count: usize = parts[2].parse().map_err(|_| bad("emb count"))?;
        let mut table = BTreeMap::new();
        for _ in 0..count {
            let line = lines.next().transpose()?.ok_or_else(|| bad("emb row"))?;
            let mut it = line.split_whitespace();
            let tok: u32 = it
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| bad("emb token"))?;
            let vec: Vec<f64> = it
                .map(|v| v.parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|_| bad("emb value"))?;
            if vec.len() != d_model {
                return Err(bad("emb row width"));
            }
            table.insert(tok, vec);
        }
        let encoder = match enc_fields.get("encoder").map(String::as_str) {
            Some("toy") => {
                let seed: u64 = enc_fields
                    .get("seed")
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| bad("encoder seed"))?;
                let trainable = enc_fields.get("trainable").map(String::as_str) == Some("1");
                Encoder::Toy(crate::embed::ToyProvider {
                    seed,
                    d_model,
                    trainable,
                    overrides: table,
                })
            }
            Some("file") => Encoder::File(crate::embed::FileProvider {
                d_model,
                table,
            }),
            _ => return Err(bad("encoder kind")),
        };
        Ok(Checkpoint {
            params: ModelParams {
                dims,
                wq,
                wk,
                wv,
                wo,
                cls_w,
                cls_b,
            },
            encoder,
            task,
            t_max,
        })
    }

    pub fn load_from_path(path: &std::path::Path) -> Result<Checkpoint, ModelError> {
        let f = std::fs::File::open(path)?;
        Checkpoint::load(&mut std::io::BufReader::new(f))
    }
}
