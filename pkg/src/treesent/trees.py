"""Binary composition layouts over a sentence's leaves.

A layout lists internal nodes in evaluation order.  Child references are
integers: ``0 <= ref < n`` is a leaf, ``ref >= n`` is internal node
``ref - n``.
"""

import math
import re
from dataclasses import dataclass

import numpy as np


class TreeError(ValueError):
    pass


@dataclass(frozen=True)
class TreeLayout:
    n_leaves: int
    left: tuple
    right: tuple
    lo: tuple
    hi: tuple

    @property
    def n_internal(self):
        return len(self.left)

    @property
    def root(self):
        """Reference of the root node (leaf 0 for a one-word sentence)."""
        return self.n_leaves + self.n_internal - 1 if self.n_internal else 0

    def span(self, ref):
        if ref < self.n_leaves:
            return ref, ref
        k = ref - self.n_leaves
        return self.lo[k], self.hi[k]

    def children(self, k):
        return self.left[k], self.right[k]

    def heights(self):
        """Per internal node: 1 + max height of its children (leaves are 0)."""
        n = self.n_leaves
        h = []
        for left, right in zip(self.left, self.right):
            hl = 0 if left < n else h[left - n]
            hr = 0 if right < n else h[right - n]
            h.append(1 + max(hl, hr))
        return h

    def leaf_depths(self):
        n = self.n_leaves
        depth = [0] * (n + self.n_internal)
        for k in range(self.n_internal - 1, -1, -1):
            d = depth[n + k] + 1
            depth[self.left[k]] = d
            depth[self.right[k]] = d
        return depth[:n]

    def validate(self):
        n = self.n_leaves
        if n < 1:
            raise TreeError("layout needs at least one leaf")
        if self.n_internal != n - 1:
            raise TreeError(f"{n} leaves need {n - 1} internal nodes, got {self.n_internal}")
        if not (len(self.right) == len(self.lo) == len(self.hi) == self.n_internal):
            raise TreeError("ragged layout fields")
        used = [0] * (n + self.n_internal)
        for k, (left, right) in enumerate(zip(self.left, self.right)):
            for ref in (left, right):
                if not 0 <= ref < n + k:
                    raise TreeError(f"node {k} references {ref}, which is not evaluated before it")
                used[ref] += 1
            (llo, lhi), (rlo, rhi) = self.span(left), self.span(right)
            if lhi + 1 != rlo:
                raise TreeError(f"node {k}: child spans [{llo},{lhi}] and [{rlo},{rhi}] are not adjacent")
            if (self.lo[k], self.hi[k]) != (llo, rhi):
                raise TreeError(f"node {k}: span [{self.lo[k]},{self.hi[k]}] is not the union of its children")
        root = n + self.n_internal - 1
        for ref, count in enumerate(used):
            expected = 0 if (ref == root and self.n_internal) else 1
            if n == 1:
                expected = 0
            if count != expected:
                raise TreeError(f"node {ref} referenced {count} times")
        if self.n_internal and (self.lo[-1], self.hi[-1]) != (0, n - 1):
            raise TreeError("root does not span the sentence")
        return self

    def render(self, tokens=None):
        """Canonical bracketing, e.g. ``(( t0 t1 ) ( t2 t3 ))``."""
        n = self.n_leaves
        tokens = [f"t{i}" for i in range(n)] if tokens is None else list(tokens)
        if len(tokens) != n:
            raise TreeError(f"{len(tokens)} tokens for a {n}-leaf layout")
        pieces = [None] * (n + self.n_internal)
        pieces[:n] = [[t] for t in tokens]
        for k, (left, right) in enumerate(zip(self.left, self.right)):
            pieces[n + k] = ["("] + pieces[left] + pieces[right] + [")"]
            pieces[left] = pieces[right] = None
        parts = pieces[self.root]
        out = [parts[0]]
        for prev, cur in zip(parts, parts[1:]):
            if not (prev == cur == "(" or prev == cur == ")"):
                out.append(" ")
            out.append(cur)
        return "".join(out)


@dataclass(frozen=True)
class DepthStats:
    max_depth: int
    mean_leaf_depth: float


def depth_stats(layout):
    depths = layout.leaf_depths()
    return DepthStats(max(depths), sum(depths) / len(depths))


class _Builder:
    def __init__(self, n):
        if n < 1:
            raise TreeError("a layout needs n >= 1 leaves")
        self.n = n
        self.left, self.right, self.lo, self.hi = [], [], [], []

    def merge(self, a, b):
        lo = a if a < self.n else self.lo[a - self.n]
        hi = b if b < self.n else self.hi[b - self.n]
        self.left.append(a)
        self.right.append(b)
        self.lo.append(lo)
        self.hi.append(hi)
        return self.n + len(self.left) - 1

    def build_split(self, lo, hi, split):
        """Split [lo, hi] top-down; ``split(k)`` gives the left-part size.

        Nodes are emitted in post-order and ``split`` is called in
        depth-first, left-to-right order.
        """
        stack = [(lo, hi, None)]
        done = []
        while stack:
            lo, hi, m = stack.pop()
            if m is None:
                if lo == hi:
                    done.append(lo)
                    continue
                m = split(hi - lo + 1)
                stack.append((lo, hi, m))
                stack.append((lo + m, hi, None))
                stack.append((lo, lo + m - 1, None))
            else:
                right = done.pop()
                done.append(self.merge(done.pop(), right))
        return done[0]

    def layout(self):
        return TreeLayout(self.n, tuple(self.left), tuple(self.right), tuple(self.lo), tuple(self.hi))


def build_balanced(n):
    b = _Builder(n)
    b.build_split(0, n - 1, lambda k: (k + 1) // 2)
    return b.layout()


def build_left(n):
    b = _Builder(n)
    node = 0
    for j in range(1, n):
        node = b.merge(node, j)
    return b.layout()


def build_right(n):
    b = _Builder(n)
    node = n - 1
    for j in range(n - 2, -1, -1):
        node = b.merge(j, node)
    return b.layout()


def build_random(n, rho, rng):
    """Split balanced with probability ``rho``, else as (k-1, 1), per step.

    ``rng`` is a ``numpy.random.Generator``; one coin is drawn for every
    span of two or more leaves, in depth-first left-to-right order.
    """
    if not 0.0 <= rho <= 1.0 or math.isnan(rho):
        raise TreeError(f"rho must lie in [0, 1], got {rho}")
    b = _Builder(n)

    def split(k):
        return (k + 1) // 2 if rng.random() < rho else k - 1

    b.build_split(0, n - 1, split)
    return b.layout()


BUILDERS = {"balanced": build_balanced, "left": build_left, "right": build_right}


_TOKEN = re.compile(r"\(|\)|[^\s()]+")


def parse_bracketed(text, strict=True):
    """Read a fully bracketed binary tree into ``(tokens, layout)``.

    With ``strict=False`` nodes with more than two children are
    left-binarized and single-child nodes are collapsed.
    """
    tokens = []
    merges = []  # (left, right); leaves as j >= 0, internal node k as -(k + 1)
    stack = []
    root = None
    for m in _TOKEN.finditer(text):
        tok, off = m.group(), m.start()
        if root is not None:
            raise TreeError(f"trailing input at offset {off}")
        if tok == "(":
            stack.append((off, []))
            continue
        if tok == ")":
            if not stack:
                raise TreeError(f"unbalanced ')' at offset {off}")
            open_off, kids = stack.pop()
            if len(kids) != 2 and (strict or not kids):
                raise TreeError(f"node at offset {open_off} has {len(kids)} children; "
                                "only binary nodes are accepted")
            node = kids[0]
            for kid in kids[1:]:
                merges.append((node, kid))
                node = -len(merges)
        else:
            tokens.append(tok)
            node = len(tokens) - 1
        if stack:
            stack[-1][1].append(node)
        else:
            root = node
    if stack:
        raise TreeError(f"unbalanced '(' at offset {stack[-1][0]}")
    if root is None:
        raise TreeError("empty tree at offset 0")

    n = len(tokens)
    b = _Builder(n)
    for left, right in merges:
        b.merge(left if left >= 0 else n - left - 1, right if right >= 0 else n - right - 1)
    return tokens, b.layout()


def read_tree_file(path, strict=True):
    """One bracketed tree per line; tab-separated trees give tuples per line."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            try:
                parsed = [parse_bracketed(part, strict) for part in line.split("\t")]
            except TreeError as exc:
                raise TreeError(f"{path}:{lineno}: {exc}") from None
            out.append(parsed[0] if len(parsed) == 1 else tuple(parsed))
    return out


def mean_leaf_depth_mc(n, rho, samples, seed=0):
    """Monte-Carlo mean leaf depth of ``build_random`` trees."""
    rng = np.random.default_rng(seed)
    total = 0.0
    for _ in range(samples):
        total += depth_stats(build_random(n, rho, rng)).mean_leaf_depth
    return total / samples
