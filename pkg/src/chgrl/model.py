"""Causal heterogeneous graph model with hand-derived gradients.

Pipeline per forward pass:

1. relation-wise convolution  h_i = relu(sum_r sum_{j in N_r(i)} W_r x_j)
2. causal strength per edge   cs = sigmoid(W2 relu(W1 [h_i; h_j] + b1) + b2)
3. causal attention per edge  alpha = sigmoid(W4 relu(W3 [h_i; h_j; cs] + b3) + b4)
4. message passing            h_cs[j] = sum_{i -> j} alpha * h_i
5. fusion                     h_f = h + h_cs
6. intervention (patients)    h_in = M3 relu(M2 relu(M1 h) + b5) + b6
7. linear + softmax head over fused states

Loss = cross-entropy of the factual branch
     + KL(intervened-branch prediction || uniform)
     + lambda * mean causal strength over edges.

Attention is applied per edge with no neighborhood normalization, and the
convolution is a pure neighbor sum (optional mean aggregation behind a
flag). The rgcn baseline is the same convolution + head with the causal
branch removed (h_f = h, counterfactual and regularization terms zero).

All gradients are computed in closed form by reverse accumulation; tests
check them against central finite differences.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse

from .errors import NumericalError
from .graph import DISEASE, PATIENT, NODE_TYPES, HeteroGraph, Relation

PARAMS_FORMAT = "chgrl-params"
PARAMS_VERSION = 1

PROB_FLOOR = 1e-12  # cross-entropy probability clamp

_INTERVENED_INCLUDES_HCS = True  # experiment flag, resolved below
_MESSAGES_GATED_BY_CS = False  # experiment flag, resolved below


class ModelError(ValueError):
    pass


def relu(x):
    return np.maximum(x, 0.0)


def sigmoid(x):
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def log_softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def softmax(z: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(z))


# -- graph index structures ---------------------------------------------------


class GraphTensors:
    """Sparse aggregation/scatter operators derived once per graph.

    Edge arrays are flattened over relations in declaration order; the
    per-type selector matrices turn per-edge quantities into per-node sums
    (and, transposed, per-node values into per-edge gathers).
    """

    def __init__(self, g: HeteroGraph):
        self.graph = g
        self.node_counts = {t: g.node_count(t) for t in NODE_TYPES}
        self.relations = g.relations

        self.agg = {}
        for r in g.relations:
            e = g.directed[r.name]
            self.agg[r.name] = sparse.csr_matrix(
                (np.ones(len(e)), (e[:, 1], e[:, 0])),
                shape=(g.node_count(r.dst_type), g.node_count(r.src_type)),
            )

        srcs, dsts, src_t, dst_t = [], [], [], []
        self.rel_slices: dict[str, slice] = {}
        offset = 0
        for r in g.relations:
            e = g.directed[r.name]
            self.rel_slices[r.name] = slice(offset, offset + len(e))
            offset += len(e)
            srcs.append(e[:, 0])
            dsts.append(e[:, 1])
            src_t.append(np.full(len(e), NODE_TYPES.index(r.src_type), dtype=np.int8))
            dst_t.append(np.full(len(e), NODE_TYPES.index(r.dst_type), dtype=np.int8))
        self.edge_src = np.concatenate(srcs) if srcs else np.zeros(0, np.int64)
        self.edge_dst = np.concatenate(dsts) if dsts else np.zeros(0, np.int64)
        self.edge_src_type = np.concatenate(src_t) if src_t else np.zeros(0, np.int8)
        self.edge_dst_type = np.concatenate(dst_t) if dst_t else np.zeros(0, np.int8)
        self.num_edges = len(self.edge_src)

        self.src_mask = {}
        self.dst_mask = {}
        self.scatter_src = {}
        self.scatter_dst = {}
        eye = np.ones(self.num_edges)
        edge_ids = np.arange(self.num_edges)
        for ti, t in enumerate(NODE_TYPES):
            ms = self.edge_src_type == ti
            md = self.edge_dst_type == ti
            self.src_mask[t] = ms
            self.dst_mask[t] = md
            self.scatter_src[t] = sparse.csr_matrix(
                (eye[ms], (self.edge_src[ms], edge_ids[ms])),
                shape=(self.node_counts[t], self.num_edges),
            )
            self.scatter_dst[t] = sparse.csr_matrix(
                (eye[md], (self.edge_dst[md], edge_ids[md])),
                shape=(self.node_counts[t], self.num_edges),
            )

    def gather(self, h: dict[str, np.ndarray], side: str) -> np.ndarray:
        """Per-edge endpoint states, [E, hl]."""
        idx = self.edge_src if side == "src" else self.edge_dst
        masks = self.src_mask if side == "src" else self.dst_mask
        width = next(iter(h.values())).shape[1]
        out = np.empty((self.num_edges, width))
        for t in NODE_TYPES:
            m = masks[t]
            if m.any():
                out[m] = h[t][idx[m]]
        return out


def as_tensors(g) -> GraphTensors:
    return g if isinstance(g, GraphTensors) else GraphTensors(g)


# -- parameters ---------------------------------------------------------------


@dataclass
class ChgrlParams:
    """All trainable tensors. Also reused, zero-filled, as the gradient holder."""

    hidden: int
    in_dims: dict[str, int]
    w_rel: dict[str, np.ndarray]  # relation name -> [hl, in_dim(src type)]
    w1: np.ndarray  # [hl, 2*hl]   causal-strength MLP
    b1: np.ndarray  # [hl]
    w2: np.ndarray  # [1, hl]
    b2: np.ndarray  # [1]
    w3: np.ndarray  # [hl, 2*hl+1] attention MLP
    b3: np.ndarray  # [hl]
    w4: np.ndarray  # [1, hl]
    b4: np.ndarray  # [1]
    m1: np.ndarray  # [hl, hl]     intervention stack
    m2: np.ndarray  # [hl, hl]
    m3: np.ndarray  # [hl, hl]
    b5: np.ndarray  # [hl]
    b6: np.ndarray  # [hl]
    w_cls: np.ndarray  # [2, hl]
    b_cls: np.ndarray  # [2]

    _FIXED = ("w1", "b1", "w2", "b2", "w3", "b3", "w4", "b4",
              "m1", "m2", "m3", "b5", "b6", "w_cls", "b_cls")

    def named_tensors(self):
        for name, arr in self.w_rel.items():
            yield f"w_rel/{name}", arr
        for name in self._FIXED:
            yield name, getattr(self, name)

    def copy(self) -> "ChgrlParams":
        return ChgrlParams(
            hidden=self.hidden,
            in_dims=dict(self.in_dims),
            w_rel={k: v.copy() for k, v in self.w_rel.items()},
            **{name: getattr(self, name).copy() for name in self._FIXED},
        )


def _xavier(rng, shape) -> np.ndarray:
    a = np.sqrt(6.0 / (shape[0] + shape[1]))
    return rng.uniform(-a, a, size=shape)


def init_params(
    relations: tuple[Relation, ...],
    in_dims: dict[str, int],
    hidden: int,
    seed: int,
) -> ChgrlParams:
    rng = np.random.default_rng(seed)
    hl = hidden
    w_rel = {r.name: _xavier(rng, (hl, in_dims[r.src_type])) for r in relations}
    return ChgrlParams(
        hidden=hl,
        in_dims=dict(in_dims),
        w_rel=w_rel,
        w1=_xavier(rng, (hl, 2 * hl)),
        b1=np.zeros(hl),
        w2=_xavier(rng, (1, hl)),
        b2=np.zeros(1),
        w3=_xavier(rng, (hl, 2 * hl + 1)),
        b3=np.zeros(hl),
        w4=_xavier(rng, (1, hl)),
        b4=np.zeros(1),
        m1=_xavier(rng, (hl, hl)),
        m2=_xavier(rng, (hl, hl)),
        m3=_xavier(rng, (hl, hl)),
        b5=np.zeros(hl),
        b6=np.zeros(hl),
        w_cls=_xavier(rng, (2, hl)),
        b_cls=np.zeros(2),
    )


def zeros_like_params(p: ChgrlParams) -> ChgrlParams:
    return ChgrlParams(
        hidden=p.hidden,
        in_dims=dict(p.in_dims),
        w_rel={k: np.zeros_like(v) for k, v in p.w_rel.items()},
        **{name: np.zeros_like(getattr(p, name)) for name in p._FIXED},
    )


def apply_update(params: ChgrlParams, grads: ChgrlParams, lr: float) -> None:
    for (_, t), (_, g) in zip(params.named_tensors(), grads.named_tensors()):
        t -= lr * g


# -- forward operations -------------------------------------------------------


def hetero_conv(
    g, inputs: dict[str, np.ndarray], params: ChgrlParams, mean_aggregate: bool = False
) -> dict[str, np.ndarray]:
    """Relation-wise convolution; isolated nodes get the zero vector."""
    h, _, _ = _conv_forward(as_tensors(g), inputs, params, mean_aggregate)
    return h


def _conv_forward(gt, inputs, params, mean_aggregate=False):
    hl = params.hidden
    z = {t: np.zeros((gt.node_counts[t], hl)) for t in NODE_TYPES}
    agg_cache = {}
    for r in gt.relations:
        w = params.w_rel[r.name]
        x = np.asarray(inputs[r.src_type], dtype=np.float64)
        if x.shape != (gt.node_counts[r.src_type], w.shape[1]):
            raise ModelError(
                f"relation {r.name!r}: input of shape {x.shape} does not match "
                f"weight [{w.shape[0]} x {w.shape[1]}] over "
                f"{gt.node_counts[r.src_type]} {r.src_type} nodes"
            )
        s = gt.agg[r.name] @ x
        if mean_aggregate:
            deg = np.maximum(np.asarray(gt.agg[r.name].sum(axis=1)).ravel(), 1.0)
            s = s / deg[:, None]
        agg_cache[r.name] = s
        z[r.dst_type] += s @ w.T
    h = {t: relu(z[t]) for t in NODE_TYPES}
    return h, z, agg_cache


def _cs_forward(params, u):
    a = u @ params.w1.T + params.b1
    ra = relu(a)
    c = ra @ params.w2[0] + params.b2[0]
    return a, ra, c, sigmoid(c)


def _attn_forward(params, v):
    g = v @ params.w3.T + params.b3
    rg = relu(g)
    q = rg @ params.w4[0] + params.b4[0]
    return g, rg, q, sigmoid(q)


def _intervention_forward(params, h):
    t1 = h @ params.m1.T
    r1 = relu(t1)
    t2 = r1 @ params.m2.T + params.b5
    r2 = relu(t2)
    h_in = r2 @ params.m3.T + params.b6
    return t1, r1, t2, r2, h_in


def causal_strength(h_i, h_j, params: ChgrlParams) -> float:
    """Learned edge causality score in (0,1)."""
    u = np.concatenate([h_i, h_j])[None, :]
    return float(_cs_forward(params, u)[3][0])


def causal_attention(h_i, h_j, cs: float, params: ChgrlParams) -> float:
    """Edge attention in (0,1); the causal strength enters as an extra slot."""
    v = np.concatenate([h_i, h_j, [cs]])[None, :]
    return float(_attn_forward(params, v)[3][0])


def intervene(h_i, params: ChgrlParams) -> np.ndarray:
    """Counterfactual do-style transform of a node state."""
    return _intervention_forward(params, np.asarray(h_i, dtype=np.float64)[None, :])[4][0]


def propagate_and_aggregate(
    g, h: dict[str, np.ndarray], alpha: np.ndarray
) -> dict[str, np.ndarray]:
    """h_cs[j] = sum over incoming edges of alpha * h_src; isolated nodes zero."""
    gt = as_tensors(g)
    if len(alpha) != gt.num_edges:
        raise ModelError(f"expected {gt.num_edges} attention weights, got {len(alpha)}")
    m = np.asarray(alpha, dtype=np.float64)[:, None] * gt.gather(h, "src")
    return {t: gt.scatter_dst[t] @ m for t in NODE_TYPES}


def fuse(h: np.ndarray, h_cs: np.ndarray) -> np.ndarray:
    h = np.asarray(h, dtype=np.float64)
    h_cs = np.asarray(h_cs, dtype=np.float64)
    if h.shape != h_cs.shape:
        raise ModelError(f"fuse shape mismatch: {h.shape} vs {h_cs.shape}")
    return h + h_cs


def classify(h_rows: np.ndarray, params: ChgrlParams) -> np.ndarray:
    """Softmax probabilities over the two classes, one row per input state."""
    logits = np.asarray(h_rows, dtype=np.float64) @ params.w_cls.T + params.b_cls
    return softmax(logits)


@dataclass
class ForwardCache:
    """Every intermediate the backward pass needs."""

    causal: bool
    inputs: dict
    z: dict
    h: dict
    conv_agg: dict
    h_f: dict
    # causal branch (None when disabled or edgeless)
    u: np.ndarray | None = None
    a: np.ndarray | None = None
    ra: np.ndarray | None = None
    cs: np.ndarray | None = None
    v: np.ndarray | None = None
    g_pre: np.ndarray | None = None
    rg: np.ndarray | None = None
    alpha: np.ndarray | None = None
    h_src: np.ndarray | None = None
    h_cs: dict | None = None
    t1: np.ndarray | None = None
    r1: np.ndarray | None = None
    t2: np.ndarray | None = None
    r2: np.ndarray | None = None
    h_in: np.ndarray | None = None
    h_f_in: np.ndarray | None = None
    # classifier pieces, filled by total_loss
    labeled_idx: np.ndarray | None = None
    log_probs: np.ndarray | None = None
    log_p_in: np.ndarray | None = None


def forward_full(gt, inputs, params: ChgrlParams, causal: bool = True) -> ForwardCache:
    gt = as_tensors(gt)
    h, z, agg = _conv_forward(gt, inputs, params)
    cache = ForwardCache(causal=causal, inputs=inputs, z=z, h=h, conv_agg=agg, h_f={})
    if not causal:
        cache.h_f = {t: h[t] for t in NODE_TYPES}
        return cache

    if gt.num_edges:
        h_src = gt.gather(h, "src")
        h_dst = gt.gather(h, "dst")
        cache.u = np.concatenate([h_src, h_dst], axis=1)
        cache.a, cache.ra, _, cache.cs = _cs_forward(params, cache.u)
        cache.v = np.concatenate([h_src, h_dst, cache.cs[:, None]], axis=1)
        cache.g_pre, cache.rg, _, cache.alpha = _attn_forward(params, cache.v)
        cache.h_src = h_src
        gate = cache.alpha * cache.cs if _MESSAGES_GATED_BY_CS else cache.alpha
        m = gate[:, None] * h_src
        cache.h_cs = {t: gt.scatter_dst[t] @ m for t in NODE_TYPES}
    else:
        cache.cs = np.zeros(0)
        cache.alpha = np.zeros(0)
        cache.h_cs = {t: np.zeros_like(h[t]) for t in NODE_TYPES}
    cache.h_f = {t: fuse(h[t], cache.h_cs[t]) for t in NODE_TYPES}

    cache.t1, cache.r1, cache.t2, cache.r2, cache.h_in = _intervention_forward(
        params, h[PATIENT]
    )
    if _INTERVENED_INCLUDES_HCS:
        cache.h_f_in = cache.h_in + cache.h_cs[PATIENT]
    else:
        cache.h_f_in = cache.h_in
    return cache


def forward_baseline_rgcn(gt, inputs, params: ChgrlParams) -> np.ndarray:
    """Patient class probabilities with the causal branch disabled."""
    cache = forward_full(gt, inputs, params, causal=False)
    return classify(cache.h_f[PATIENT], params)


def predict_proba(gt, inputs, params: ChgrlParams, causal: bool = True) -> np.ndarray:
    cache = forward_full(gt, inputs, params, causal=causal)
    return classify(cache.h_f[PATIENT], params)


# -- loss and gradients -------------------------------------------------------


@dataclass
class LossBreakdown:
    total: float
    main: float
    counterfactual: float
    causal_reg: float
    lam: float


def total_loss(
    gt,
    inputs,
    params: ChgrlParams,
    labels: np.ndarray,
    labeled_idx: np.ndarray,
    lam: float,
    causal: bool = True,
) -> tuple[LossBreakdown, ForwardCache]:
    gt = as_tensors(gt)
    labeled_idx = np.asarray(labeled_idx, dtype=np.int64)
    if labeled_idx.size == 0:
        raise ModelError("labeled set is empty")
    cache = forward_full(gt, inputs, params, causal=causal)
    cache.labeled_idx = labeled_idx
    y = np.asarray(labels, dtype=np.int64)[labeled_idx]

    logits = cache.h_f[PATIENT][labeled_idx] @ params.w_cls.T + params.b_cls
    cache.log_probs = np.maximum(log_softmax(logits), np.log(PROB_FLOOR))
    main = float(-cache.log_probs[np.arange(len(y)), y].mean())

    if causal:
        logits_in = cache.h_f_in[labeled_idx] @ params.w_cls.T + params.b_cls
        cache.log_p_in = log_softmax(logits_in)
        p_in = np.exp(cache.log_p_in)
        # KL(p || uniform) over 2 classes = sum p log p + log 2
        kl = (p_in * cache.log_p_in).sum(axis=1) + np.log(2.0)
        counterfactual = float(kl.mean())
        causal_reg = float(cache.cs.mean()) if cache.cs.size else 0.0
    else:
        counterfactual = 0.0
        causal_reg = 0.0

    total = main + counterfactual + lam * causal_reg
    return LossBreakdown(total, main, counterfactual, causal_reg, lam), cache


def backward(
    gt,
    params: ChgrlParams,
    cache: ForwardCache,
    labels: np.ndarray,
    lam: float,
) -> ChgrlParams:
    """Gradient of LossBreakdown.total for every parameter tensor."""
    gt = as_tensors(gt)
    hl = params.hidden
    idx = cache.labeled_idx
    if idx is None:
        raise ModelError("total_loss must run before backward")
    n = len(idx)
    y = np.asarray(labels, dtype=np.int64)[idx]
    grads = zeros_like_params(params)
    causal = cache.causal

    dh = {t: np.zeros_like(cache.h[t]) for t in NODE_TYPES}

    # factual cross-entropy head
    probs = np.exp(cache.log_probs)
    dlogits = probs.copy()
    dlogits[np.arange(n), y] -= 1.0
    dlogits /= n
    hf_rows = cache.h_f[PATIENT][idx]
    grads.w_cls += dlogits.T @ hf_rows
    grads.b_cls += dlogits.sum(axis=0)
    dh_f_p = np.zeros_like(cache.h_f[PATIENT])
    dh_f_p[idx] = dlogits @ params.w_cls

    if not causal:
        dh[PATIENT] += dh_f_p
        _conv_backward(gt, params, cache, dh, grads)
        _check_finite(grads)
        return grads

    dh_cs_p = np.zeros_like(cache.h_f[PATIENT])
    dh[PATIENT] += dh_f_p
    dh_cs_p += dh_f_p

    # counterfactual head: d/dz of sum_c p_c log p_c is p_j (log p_j - sum p log p)
    p_in = np.exp(cache.log_p_in)
    neg_ent = (p_in * cache.log_p_in).sum(axis=1, keepdims=True)
    dlogits_in = p_in * (cache.log_p_in - neg_ent) / n
    hfin_rows = cache.h_f_in[idx]
    grads.w_cls += dlogits_in.T @ hfin_rows
    grads.b_cls += dlogits_in.sum(axis=0)
    dh_f_in = np.zeros_like(cache.h_f_in)
    dh_f_in[idx] = dlogits_in @ params.w_cls
    if _INTERVENED_INCLUDES_HCS:
        dh_cs_p += dh_f_in

    # intervention stack
    dh_in = dh_f_in
    grads.b6 += dh_in.sum(axis=0)
    grads.m3 += dh_in.T @ cache.r2
    dt2 = (dh_in @ params.m3) * (cache.t2 > 0)
    grads.b5 += dt2.sum(axis=0)
    grads.m2 += dt2.T @ cache.r1
    dt1 = (dt2 @ params.m2) * (cache.t1 > 0)
    grads.m1 += dt1.T @ cache.h[PATIENT]
    dh[PATIENT] += dt1 @ params.m1

    if gt.num_edges:
        dh_cs = {t: np.zeros_like(cache.h_cs[t]) for t in NODE_TYPES}
        dh_cs[PATIENT] += dh_cs_p

        # aggregation: h_cs[t] = scatter_dst[t] @ (gate * h_src)
        dm = np.zeros((gt.num_edges, hl))
        for t in NODE_TYPES:
            dm += gt.scatter_dst[t].T @ dh_cs[t]
        dm_dot_h = (dm * cache.h_src).sum(axis=1)

        # lambda * mean(cs) over edges
        dcs = np.full(gt.num_edges, lam / gt.num_edges)

        if _MESSAGES_GATED_BY_CS:
            dalpha = dm_dot_h * cache.cs
            dcs += dm_dot_h * cache.alpha
            dh_src = dm * (cache.alpha * cache.cs)[:, None]
        else:
            dalpha = dm_dot_h
            dh_src = dm * cache.alpha[:, None]

        # attention MLP
        dq = dalpha * cache.alpha * (1.0 - cache.alpha)
        grads.w4[0] += dq @ cache.rg
        grads.b4[0] += dq.sum()
        dg = (dq[:, None] * params.w4[0]) * (cache.g_pre > 0)
        grads.w3 += dg.T @ cache.v
        grads.b3 += dg.sum(axis=0)
        dv = dg @ params.w3
        dh_src += dv[:, :hl]
        dh_dst = dv[:, hl : 2 * hl].copy()
        dcs += dv[:, 2 * hl]

        # causal-strength MLP
        dc = dcs * cache.cs * (1.0 - cache.cs)
        grads.w2[0] += dc @ cache.ra
        grads.b2[0] += dc.sum()
        da = (dc[:, None] * params.w2[0]) * (cache.a > 0)
        grads.w1 += da.T @ cache.u
        grads.b1 += da.sum(axis=0)
        du = da @ params.w1
        dh_src += du[:, :hl]
        dh_dst += du[:, hl:]

        for t in NODE_TYPES:
            dh[t] += gt.scatter_src[t] @ dh_src
            dh[t] += gt.scatter_dst[t] @ dh_dst

    _conv_backward(gt, params, cache, dh, grads)
    _check_finite(grads)
    return grads


def _conv_backward(gt, params, cache, dh, grads):
    for t in NODE_TYPES:
        dz = dh[t] * (cache.z[t] > 0)
        for r in gt.relations:
            if r.dst_type == t:
                grads.w_rel[r.name] += dz.T @ cache.conv_agg[r.name]


def _check_finite(grads: ChgrlParams):
    for name, g in grads.named_tensors():
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient in tensor {name!r}")


# -- checkpoint serialization -------------------------------------------------


def params_to_dict(params: ChgrlParams) -> dict:
    return {
        "format": PARAMS_FORMAT,
        "version": PARAMS_VERSION,
        "hidden": params.hidden,
        "in_dims": {t: int(params.in_dims[t]) for t in NODE_TYPES if t in params.in_dims},
        "tensors": {
            name: {"shape": list(arr.shape), "data": arr.ravel().tolist()}
            for name, arr in params.named_tensors()
        },
    }


def params_from_dict(d: dict) -> ChgrlParams:
    if d.get("format") != PARAMS_FORMAT:
        raise ModelError(f"not a parameter checkpoint (format={d.get('format')!r})")
    if d.get("version") != PARAMS_VERSION:
        raise ModelError(f"unsupported checkpoint version {d.get('version')!r}")
    tensors = {}
    for name, spec in d["tensors"].items():
        arr = np.asarray(spec["data"], dtype=np.float64).reshape(spec["shape"])
        tensors[name] = arr
    w_rel = {
        name.split("/", 1)[1]: arr
        for name, arr in tensors.items()
        if name.startswith("w_rel/")
    }
    fixed = {name: tensors[name] for name in ChgrlParams._FIXED}
    return ChgrlParams(hidden=int(d["hidden"]), in_dims=dict(d["in_dims"]),
                       w_rel=w_rel, **fixed)


def save_params(params: ChgrlParams, path: str | Path, extra: dict | None = None) -> None:
    doc = params_to_dict(params)
    if extra is not None:
        doc["extra"] = extra
    Path(path).write_text(json.dumps(doc))


def load_params(path: str | Path) -> tuple[ChgrlParams, dict]:
    doc = json.loads(Path(path).read_text())
    return params_from_dict(doc), doc.get("extra", {})


def expected_shapes(
    relations: tuple[Relation, ...], in_dims: dict[str, int], hidden: int
) -> dict[str, tuple]:
    hl = hidden
    shapes = {f"w_rel/{r.name}": (hl, in_dims[r.src_type]) for r in relations}
    shapes.update(
        w1=(hl, 2 * hl), b1=(hl,), w2=(1, hl), b2=(1,),
        w3=(hl, 2 * hl + 1), b3=(hl,), w4=(1, hl), b4=(1,),
        m1=(hl, hl), m2=(hl, hl), m3=(hl, hl), b5=(hl,), b6=(hl,),
        w_cls=(2, hl), b_cls=(2,),
    )
    return shapes


def check_shapes(
    params: ChgrlParams,
    relations: tuple[Relation, ...],
    in_dims: dict[str, int],
    hidden: int,
) -> None:
    """Raise listing every tensor whose shape disagrees with the graph/config."""
    want = expected_shapes(relations, in_dims, hidden)
    have = {name: arr.shape for name, arr in params.named_tensors()}
    bad = []
    for name in sorted(set(want) | set(have)):
        if want.get(name) != have.get(name):
            bad.append(f"{name}: checkpoint {have.get(name)}, expected {want.get(name)}")
    if bad:
        raise ModelError("checkpoint shape mismatch: " + "; ".join(bad))
