"""Sentence encoders: linear (bi-)LSTMs and binary tree-LSTMs.

States travel packed as ``[h, c]`` rows.  Tree encoders evaluate every
internal node of a batch grouped by height, so one fused cell call covers
all nodes whose children are ready.
"""

from dataclasses import dataclass, field

import numpy as np

from . import trees
from .autodiff import Init, ParamSet, Tensor, lstm_gates, lstm_step, ops, tree_gates, tree_step
from .pooling import POOLINGS, AttentionPooling, pool_states

TREE_LAYOUTS = ("parsed", "balanced", "left", "right", "random", "gumbel")
LINEAR_LAYOUTS = ("linear", "linear-bidirectional")
LAYOUTS = TREE_LAYOUTS + LINEAR_LAYOUTS
LEAF_RNNS = ("none", "bidirectional")


class EncoderError(ValueError):
    pass


@dataclass
class EncoderConfig:
    layout: str = "balanced"
    rho: float = 0.5
    leaf_rnn: str = "none"
    embed_dim: int = 300
    leaf_rnn_dim: int = 300
    hidden_dim: int = 300
    pooling: str = "none"
    attention_dim: int = 128
    temperature: float = 1.0
    gumbel_extract: str = "argmax"
    freeze_embeddings: bool = False
    vocab_size: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.layout not in LAYOUTS:
            raise EncoderError(f"unknown layout {self.layout!r}; expected one of {LAYOUTS}")
        if self.leaf_rnn not in LEAF_RNNS:
            raise EncoderError(f"unknown leaf_rnn {self.leaf_rnn!r}")
        if self.pooling not in POOLINGS:
            raise EncoderError(f"unknown pooling {self.pooling!r}; expected one of {POOLINGS}")
        if self.layout in LINEAR_LAYOUTS and self.leaf_rnn != "none":
            raise EncoderError("linear encoders take no leaf RNN")
        if not 0.0 <= self.rho <= 1.0:
            raise EncoderError(f"rho must lie in [0, 1], got {self.rho}")
        if self.temperature <= 0:
            raise EncoderError("gumbel temperature must be positive")
        if self.gumbel_extract not in ("argmax", "sample"):
            raise EncoderError("gumbel_extract is 'argmax' or 'sample'")
        for name in ("embed_dim", "leaf_rnn_dim", "hidden_dim", "attention_dim"):
            if getattr(self, name) <= 0:
                raise EncoderError(f"{name} must be positive")

    @property
    def is_tree(self):
        return self.layout in TREE_LAYOUTS

    @property
    def tree_dim(self):
        """Hidden size of the tree cell; twice the leaf RNN size with a bi-leaf-RNN."""
        return 2 * self.leaf_rnn_dim if self.leaf_rnn == "bidirectional" else self.hidden_dim

    @property
    def state_dim(self):
        """Width of one pooled state (tree node, or linear position)."""
        if self.is_tree:
            return self.tree_dim
        return self.hidden_dim * (2 if self.layout == "linear-bidirectional" else 1)

    @property
    def output_dim(self):
        return self.state_dim


@dataclass
class EncoderOutput:
    """Sentence encodings plus the states they were built from.

    ``states`` (B, M, D) lists hidden states per sentence: for trees the n
    leaf states followed by the internal nodes in evaluation order
    (M = 2n - 1 per sentence), for linear encoders one per position.
    """

    encoding: Tensor
    states: Tensor = None
    mask: np.ndarray = None
    layouts: list = None
    embedded: Tensor = None
    attention: Tensor = None
    extras: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# cells (stand-alone forms; encoders use the fused step ops)


@dataclass
class LSTMCellParams:
    """Stacked weights: ``w`` is (H + D, 4H) acting on ``[h_prev, x]``,
    column blocks ``[f, i, c~, o]``; ``b`` is (4H,)."""

    w: Tensor
    b: Tensor

    @property
    def hidden(self):
        return self.b.shape[0] // 4

    def gate(self, name):
        """(W, b) of one gate in the row-vector convention ``[h, x] @ W``."""
        k = "fico".index(name)
        h = self.hidden
        return self.w.data[:, k * h:(k + 1) * h], self.b.data[k * h:(k + 1) * h]


@dataclass
class TreeLSTMCellParams:
    """``w`` is (2H, 5H) acting on ``[h_l, h_r]``, blocks ``[f_l, f_r, i, c~, o]``."""

    w: Tensor
    b: Tensor

    @property
    def hidden(self):
        return self.b.shape[0] // 5

    def gate(self, name):
        k = ["fl", "fr", "i", "c", "o"].index(name)
        h = self.hidden
        return self.w.data[:, k * h:(k + 1) * h], self.b.data[k * h:(k + 1) * h]


def lstm_cell(p, h_prev, c_prev, x):
    """Sequential LSTM cell; returns ``(h, c)``."""
    h = p.hidden
    if h_prev.shape[-1] != h or c_prev.shape[-1] != h or x.shape[-1] + h != p.w.shape[0]:
        raise ops.ShapeError(f"lstm_cell: state {h_prev.shape}/{c_prev.shape} and input {x.shape} "
                             f"do not fit weights {p.w.shape}")
    z = ops.add(ops.matmul(ops.concat([h_prev, x], axis=-1), p.w), p.b)
    hc = lstm_gates(z, c_prev)
    return hc[:, :h], hc[:, h:]


def tree_lstm_cell(p, left, right):
    """Binary tree-LSTM cell over ``left=(h_l, c_l)``, ``right=(h_r, c_r)``."""
    (hl, cl), (hr, cr) = left, right
    h = p.hidden
    for t in (hl, cl, hr, cr):
        if t.shape[-1] != h:
            raise ops.ShapeError(f"tree_lstm_cell: child state {t.shape} does not fit weights {p.w.shape}")
    z = ops.add(ops.matmul(ops.concat([hl, hr], axis=-1), p.w), p.b)
    hc = tree_gates(z, cl, cr)
    return hc[:, :h], hc[:, h:]


def add_lstm_params(params, prefix, in_dim, hidden, rng):
    """Register a sequential LSTM (forget bias 1) and return its params."""
    w = params.add(f"{prefix}.w", (hidden + in_dim, 4 * hidden), Init(), rng)
    b = params.add(f"{prefix}.b", (4 * hidden,), Init("zeros", blocks=((0, hidden, 1.0),)), rng)
    return LSTMCellParams(w, b)


def add_tree_params(params, prefix, hidden, rng):
    """Register a binary tree-LSTM cell (both forget biases 1)."""
    w = params.add(f"{prefix}.w", (2 * hidden, 5 * hidden), Init(), rng)
    b = params.add(f"{prefix}.b", (5 * hidden,), Init("zeros", blocks=((0, 2 * hidden, 1.0),)), rng)
    return TreeLSTMCellParams(w, b)


# ---------------------------------------------------------------------------
# sequence runners


def run_lstm(p, x, lengths, reverse=False, h0=None):
    """Masked LSTM over padded inputs ``x`` (B, T, D).

    Returns ``(final, packed)``: ``final`` is the packed ``[h, c]`` after
    each sentence's last real token and ``packed`` is (B, T, 2H) with the
    state at every original position (zero rows at padding).  With
    ``reverse`` each sentence is read from its last token backwards.
    """
    b_size, t_max, _ = x.shape
    h = p.hidden
    lengths = np.asarray(lengths)
    if reverse:
        perm = _reverse_index(lengths, t_max)
        x = ops.reshape(ops.getitem(ops.reshape(x, (b_size * t_max, -1)), perm), (b_size, t_max, -1))
    w_h = ops.getitem(p.w, slice(0, h))
    w_x = ops.getitem(p.w, slice(h, None))
    xz = ops.add(ops.matmul(x, w_x), p.b)
    state = h0 if h0 is not None else Tensor(np.zeros((b_size, 2 * h), dtype=x.dtype))
    steps = []
    for t in range(t_max):
        mask = t < lengths
        state = lstm_step(ops.getitem(xz, (slice(None), t)), state, w_h, mask)
        steps.append(state)
    packed = ops.stack(steps, axis=1)
    valid = np.arange(t_max)[None, :] < lengths[:, None]
    packed = ops.where(valid[:, :, None], packed, 0.0)
    if reverse:
        packed = ops.reshape(ops.getitem(ops.reshape(packed, (b_size * t_max, -1)), perm),
                             (b_size, t_max, -1))
    return state, packed


def _reverse_index(lengths, t_max):
    """Flat row permutation reversing each sentence's real tokens in place."""
    b_size = len(lengths)
    pos = np.tile(np.arange(t_max), (b_size, 1))
    rev = np.where(pos < lengths[:, None], lengths[:, None] - 1 - pos, pos)
    return (rev + np.arange(b_size)[:, None] * t_max).reshape(-1)


# ---------------------------------------------------------------------------
# batched tree plans


@dataclass
class TreePlan:
    """Gather indices that evaluate a batch of layouts level by level.

    Source 0 is the flattened leaf matrix (row ``b*T + j``); source ``k``
    holds the nodes of height ``k``.
    """

    children_src: list
    children_row: list
    root_src: np.ndarray
    root_row: np.ndarray
    node_src: np.ndarray
    node_row: np.ndarray
    node_mask: np.ndarray


_NODE_INFO = {}


def _node_info(lay):
    """Per internal node: level (height - 1), rank within the level, children."""
    info = _NODE_INFO.get(lay)
    if info is None:
        level = np.array(lay.heights(), dtype=np.int64) - 1
        rank = np.zeros(len(level), dtype=np.int64)
        counts = np.bincount(level) if len(level) else np.zeros(0, dtype=np.int64)
        seen = np.zeros(len(counts), dtype=np.int64)
        for k, lv in enumerate(level):
            rank[k] = seen[lv]
            seen[lv] += 1
        info = (level, rank, counts, np.array(lay.left, dtype=np.int64), np.array(lay.right, dtype=np.int64))
        if len(_NODE_INFO) >= 8192:
            _NODE_INFO.clear()
        _NODE_INFO[lay] = info
    return info


def compile_plan(layouts, t_max):
    b_size = len(layouts)
    m_max = 2 * t_max - 1
    infos = [_node_info(lay) for lay in layouts]
    n_levels = max((len(i[2]) for i in infos), default=0)
    counts = np.zeros((b_size, n_levels), dtype=np.int64)
    for b, info in enumerate(infos):
        counts[b, :len(info[2])] = info[2]
    offsets = np.cumsum(counts, axis=0) - counts
    node_src = np.full((b_size, m_max), -1, dtype=np.int64)
    node_row = np.zeros((b_size, m_max), dtype=np.int64)
    keys, lsrc, lrow, rsrc, rrow = [], [], [], [], []
    for b, (lay, (level, rank, _, left, right)) in enumerate(zip(layouts, infos)):
        n = lay.n_leaves
        node_src[b, :n] = 0
        node_row[b, :n] = b * t_max + np.arange(n)
        node_src[b, n:2 * n - 1] = level + 1
        node_row[b, n:2 * n - 1] = offsets[b, level] + rank
        keys.append(level * b_size * m_max + b * m_max + rank)
        lsrc.append(node_src[b, left])
        lrow.append(node_row[b, left])
        rsrc.append(node_src[b, right])
        rrow.append(node_row[b, right])
    children_src, children_row = [], []
    if n_levels:
        order = np.argsort(np.concatenate(keys), kind="stable")
        pair_src = np.stack([np.concatenate(lsrc)[order], np.concatenate(rsrc)[order]], axis=1).reshape(-1)
        pair_row = np.stack([np.concatenate(lrow)[order], np.concatenate(rrow)[order]], axis=1).reshape(-1)
        bounds = np.concatenate([[0], np.cumsum(2 * counts.sum(axis=0))])
        for lv in range(n_levels):
            children_src.append(pair_src[bounds[lv]:bounds[lv + 1]])
            children_row.append(pair_row[bounds[lv]:bounds[lv + 1]])
    roots = np.array([2 * lay.n_leaves - 2 for lay in layouts])
    root_src = node_src[np.arange(b_size), roots]
    root_row = node_row[np.arange(b_size), roots]
    return TreePlan(children_src, children_row, root_src, root_row, node_src, node_row, node_src >= 0)


def run_tree(cell, leaf_hc, layouts, t_max, plan=None):
    """Evaluate ``layouts`` bottom-up from packed leaves (B*T, 2H).

    Returns ``(root_hc (B, 2H), sources, plan)``.
    """
    if plan is None:
        plan = compile_plan(layouts, t_max)
    sources = [leaf_hc]
    h2 = leaf_hc.shape[1]
    for src, row in zip(plan.children_src, plan.children_row):
        pairs = ops.gather_rows(sources, src, row, unique=True)
        children = ops.reshape(pairs, (len(src) // 2, 2 * h2))
        sources.append(tree_step(children, cell.w, cell.b))
    root = ops.gather_rows(sources, plan.root_src, plan.root_row, unique=True)
    return root, sources, plan


# ---------------------------------------------------------------------------
# the encoder


class Encoder:
    """Embeddings, optional leaf RNN, composition and optional pooling."""

    def __init__(self, config, params=None, rng=None, prefix="enc"):
        self.config = config
        self.params = params if params is not None else ParamSet()
        self.prefix = prefix
        rng = rng if rng is not None else np.random.default_rng(0)
        c = config
        if c.vocab_size <= 0:
            raise EncoderError("vocab_size must be set")
        self.embedding = self.params.add(f"{prefix}.embed", (c.vocab_size, c.embed_dim),
                                         Init("uniform", scale=0.5), rng)
        if c.freeze_embeddings:
            self.embedding.requires_grad = False
        p = self.params
        if c.is_tree:
            d = c.tree_dim
            if c.leaf_rnn == "bidirectional":
                self.leaf_fwd = add_lstm_params(p, f"{prefix}.leaf_fwd", c.embed_dim, c.leaf_rnn_dim, rng)
                self.leaf_bwd = add_lstm_params(p, f"{prefix}.leaf_bwd", c.embed_dim, c.leaf_rnn_dim, rng)
            else:
                self.leaf_w = p.add(f"{prefix}.leaf.w", (c.embed_dim, 2 * d), Init(), rng)
                self.leaf_b = p.add(f"{prefix}.leaf.b", (2 * d,), Init("zeros"), rng)
            self.tree = add_tree_params(p, f"{prefix}.tree", d, rng)
            if c.layout == "gumbel":
                self.query = p.add(f"{prefix}.gumbel.query", (d,), Init("uniform", scale=1.0 / np.sqrt(d)), rng)
        else:
            self.fwd = add_lstm_params(p, f"{prefix}.lstm_fwd", c.embed_dim, c.hidden_dim, rng)
            if c.layout == "linear-bidirectional":
                self.bwd = add_lstm_params(p, f"{prefix}.lstm_bwd", c.embed_dim, c.hidden_dim, rng)
        self._plans = {}
        self.attention = None
        if c.pooling == "self-attention":
            self.attention = AttentionPooling(p, f"{prefix}.attn", c.state_dim, c.attention_dim, rng)

    # -- pieces ------------------------------------------------------------

    def embed(self, ids):
        return ops.embedding(self.embedding, ids)

    def leaf_transform(self, embedded, lengths):
        """Packed leaf states (B, T, 2D) from embeddings (B, T, E)."""
        lengths = np.asarray(lengths)
        if (lengths < 1).any():
            raise EncoderError("leaf_transform: empty sentence")
        if self.config.leaf_rnn == "bidirectional":
            _, fwd = run_lstm(self.leaf_fwd, embedded, lengths)
            _, bwd = run_lstm(self.leaf_bwd, embedded, lengths, reverse=True)
            hl = self.config.leaf_rnn_dim
            return ops.concat([fwd[:, :, :hl], bwd[:, :, :hl], fwd[:, :, hl:], bwd[:, :, hl:]], axis=-1)
        return ops.add(ops.matmul(embedded, self.leaf_w), self.leaf_b)

    def layouts_for(self, lengths, layouts=None, rng=None):
        """Layouts for a batch: given ones (parsed), built ones, or sampled."""
        kind = self.config.layout
        if kind == "parsed":
            if layouts is None:
                raise EncoderError("parsed layout needs trees for every sentence")
            for lay, n in zip(layouts, lengths):
                if lay.n_leaves != n:
                    raise EncoderError(f"tree has {lay.n_leaves} leaves for a {n}-token sentence")
            return list(layouts)
        if layouts is not None:
            for lay, n in zip(layouts, lengths):
                if lay.n_leaves != n:
                    raise EncoderError(f"tree has {lay.n_leaves} leaves for a {n}-token sentence")
            return list(layouts)
        if kind == "random":
            rng = rng if rng is not None else np.random.default_rng(0)
            return [trees.build_random(int(n), self.config.rho, rng) for n in lengths]
        builder = trees.BUILDERS[kind]
        return [_cached_layout(builder, int(n)) for n in lengths]

    def _plan_for(self, layouts, lengths, t_max, built):
        """Plans of builder-made layouts depend only on lengths, so they are reused."""
        if not built or self.config.layout not in trees.BUILDERS:
            return compile_plan(layouts, t_max)
        key = (tuple(int(n) for n in lengths), t_max)
        plan = self._plans.get(key)
        if plan is None:
            if len(self._plans) >= 4096:
                self._plans.clear()
            plan = self._plans[key] = compile_plan(layouts, t_max)
        return plan

    # -- entry points ------------------------------------------------------

    def encode(self, ids, lengths, layouts=None, rng=None, training=False, states=False, embedded=None):
        """Encode a padded id matrix (B, T); see :class:`EncoderOutput`.

        ``embedded`` (B, T, E) replaces the table lookup when given.
        """
        ids = np.asarray(ids)
        lengths = np.asarray(lengths)
        if ids.ndim != 2 or len(lengths) != len(ids):
            raise EncoderError(f"ids must be (B, T) with one length per row, got {ids.shape}")
        if (lengths < 1).any():
            raise EncoderError("cannot encode an empty sentence")
        if lengths.max() > ids.shape[1]:
            raise EncoderError("a length exceeds the padded width")
        if embedded is None:
            embedded = self.embed(ids)
        elif embedded.shape[:2] != ids.shape:
            raise EncoderError(f"embedded shape {embedded.shape} does not match ids {ids.shape}")
        need_states = states or self.config.pooling != "none"
        if self.config.layout == "gumbel":
            out = self._encode_gumbel(embedded, lengths, rng, training)
        elif self.config.is_tree:
            out = self._encode_tree(embedded, lengths, layouts, rng, need_states)
        else:
            out = self._encode_linear(embedded, lengths)
        out.embedded = embedded
        if self.config.pooling != "none":
            out.encoding, out.attention = pool_states(self.config.pooling, out.states, out.mask, self.attention)
        return out

    def _encode_tree(self, embedded, lengths, layouts, rng, need_states):
        b_size, t_max, _ = embedded.shape
        d = self.config.tree_dim
        lays = self.layouts_for(lengths, layouts, rng)
        leaves = ops.reshape(self.leaf_transform(embedded, lengths), (b_size * t_max, 2 * d))
        root, sources, plan = run_tree(self.tree, leaves, lays, t_max, self._plan_for(lays, lengths, t_max, layouts is None))
        out = EncoderOutput(ops.getitem(root, (slice(None), slice(0, d))), layouts=lays)
        out.extras["root_hc"] = root
        if need_states:
            nodes = ops.gather_rows(sources, plan.node_src.reshape(-1), plan.node_row.reshape(-1), unique=True)
            nodes = ops.reshape(nodes, (b_size, 2 * t_max - 1, 2 * d))
            out.states = ops.getitem(nodes, (slice(None), slice(None), slice(0, d)))
            out.mask = plan.node_mask
        return out

    def _encode_linear(self, embedded, lengths):
        hd = self.config.hidden_dim
        final, packed = run_lstm(self.fwd, embedded, lengths)
        enc = ops.getitem(final, (slice(None), slice(0, hd)))
        hs = ops.getitem(packed, (slice(None), slice(None), slice(0, hd)))
        if self.config.layout == "linear-bidirectional":
            final_b, packed_b = run_lstm(self.bwd, embedded, lengths, reverse=True)
            enc = ops.concat([enc, ops.getitem(final_b, (slice(None), slice(0, hd)))], axis=-1)
            hs = ops.concat([hs, ops.getitem(packed_b, (slice(None), slice(None), slice(0, hd)))], axis=-1)
        t_max = embedded.shape[1]
        mask = np.arange(t_max)[None, :] < np.asarray(lengths)[:, None]
        return EncoderOutput(enc, states=hs, mask=mask)

    def _encode_gumbel(self, embedded, lengths, rng, training):
        """Greedy latent-tree composition with straight-through Gumbel selection.

        At each step all adjacent pairs of the current top-level states are
        composed; the query vector scores them and one merge is selected.
        """
        c = self.config
        d = c.tree_dim
        b_size, t_max, _ = embedded.shape
        lengths = np.asarray(lengths)
        if (training or c.gumbel_extract == "sample") and rng is None:
            rng = np.random.default_rng(0)
        leaves = states = self.leaf_transform(embedded, lengths)
        builders = [trees._Builder(int(n)) for n in lengths]
        positions = [list(range(int(n))) for n in lengths]
        picked = []
        q = ops.reshape(self.query, (d, 1))
        for step in range(t_max - 1):
            k = t_max - step
            left = ops.getitem(states, (slice(None), slice(0, k - 1)))
            right = ops.getitem(states, (slice(None), slice(1, k)))
            pairs = ops.reshape(ops.concat([left, right], axis=-1), (b_size * (k - 1), 4 * d))
            cand = ops.reshape(tree_step(pairs, self.tree.w, self.tree.b), (b_size, k - 1, 2 * d))
            scores = ops.reshape(ops.matmul(ops.getitem(cand, (slice(None), slice(None), slice(0, d))), q),
                                 (b_size, k - 1))
            n_valid = lengths - 1 - step
            done = n_valid <= 0
            valid = np.arange(k - 1)[None, :] < np.maximum(n_valid, 1)[:, None]
            if training or c.gumbel_extract == "sample":
                u = rng.random(scores.shape)
                noise = -np.log(-np.log(np.clip(u, 1e-20, 1.0 - 1e-12)))
                logits = ops.scale(ops.add(scores, noise.astype(scores.dtype)), 1.0 / c.temperature)
                soft = ops.masked_softmax(logits, valid)
                sel = np.where(valid, logits.data, -np.inf).argmax(axis=1)
                hard = np.zeros(scores.shape, dtype=scores.dtype)
                hard[np.arange(b_size), sel] = 1.0
                y = ops.straight_through(soft, hard) if training else Tensor(hard)
            else:
                sel = np.where(valid, scores.data, -np.inf).argmax(axis=1)
                hard = np.zeros(scores.shape, dtype=scores.dtype)
                hard[np.arange(b_size), sel] = 1.0
                y = Tensor(hard)
            cum = ops.cumsum(y, axis=1)
            before = ops.sub(1.0, cum)
            after = ops.sub(cum, y)
            merged = ops.add(ops.add(ops.mul(ops.reshape(before, (b_size, k - 1, 1)), left),
                                     ops.mul(ops.reshape(y, (b_size, k - 1, 1)), cand)),
                             ops.mul(ops.reshape(after, (b_size, k - 1, 1)), right))
            states = ops.where(done[:, None, None], left, merged)
            picked.append(ops.getitem(states, (np.arange(b_size), np.where(done, 0, sel))))
            for b in np.nonzero(~done)[0]:
                s = int(sel[b])
                pos = positions[b]
                pos[s:s + 2] = [builders[b].merge(pos[s], pos[s + 1])]
        layouts = [bld.layout() for bld in builders]
        root = ops.getitem(states, (slice(None), 0))
        out = EncoderOutput(ops.getitem(root, (slice(None), slice(0, d))), layouts=layouts)
        out.extras["root_hc"] = root
        nodes = ops.concat([leaves, ops.stack(picked, axis=1)], axis=1) if picked else leaves
        out.states = ops.getitem(nodes, (slice(None), slice(None), slice(0, d)))
        pos = np.arange(t_max)
        out.mask = np.concatenate([pos[None, :] < lengths[:, None],
                                   pos[None, :-1] < (lengths - 1)[:, None]], axis=1)
        return out


_LAYOUT_CACHE = {}


def _cached_layout(builder, n):
    key = (builder.__name__, n)
    lay = _LAYOUT_CACHE.get(key)
    if lay is None:
        lay = _LAYOUT_CACHE[key] = builder(n)
    return lay
