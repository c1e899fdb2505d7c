"""Dense tensors and the tape that records operations on them.

A :class:`Tape` is active inside a ``with`` block.  Every primitive that
touches a tensor requiring gradients appends ``(output, inputs, rule)`` to
the active tape; outside any tape the primitives run as plain numpy.
"""

import contextlib
import threading

import numpy as np

_PRECISIONS = {"single": np.float32, "double": np.float64}

_local = threading.local()


def _get(attr, default):
    return getattr(_local, attr, default)


def default_dtype():
    return _get("dtype", np.float32)


def set_precision(name):
    """Set the thread's working precision (``"single"`` or ``"double"``)."""
    try:
        _local.dtype = _PRECISIONS[name]
    except KeyError:
        raise ValueError(f"unknown precision {name!r}; expected one of {sorted(_PRECISIONS)}") from None


def current_precision():
    return "double" if default_dtype() == np.float64 else "single"


@contextlib.contextmanager
def precision(name):
    previous = current_precision()
    set_precision(name)
    try:
        yield
    finally:
        set_precision(previous)


class Tensor:
    """A dense row-major array plus bookkeeping for reverse-mode gradients."""

    __slots__ = ("data", "requires_grad", "name", "grad", "is_leaf")

    def __init__(self, data, requires_grad=False, name=None, dtype=None):
        arr = np.asarray(data, dtype=dtype or default_dtype())
        self.data = arr
        self.requires_grad = requires_grad
        self.name = name
        self.grad = None
        self.is_leaf = True

    @classmethod
    def _result(cls, data, requires_grad):
        t = cls.__new__(cls)
        t.data = data
        t.requires_grad = requires_grad
        t.name = None
        t.grad = None
        t.is_leaf = not requires_grad
        return t

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self):
        return self.data

    def item(self):
        return self.data.item()

    def __len__(self):
        return len(self.data)

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    # Operator sugar; implementations live in ops.
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from . import ops
        return ops.neg(self)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def __getitem__(self, index):
        from . import ops
        return ops.getitem(self, index)

    def reshape(self, *shape):
        from . import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)


def as_tensor(x):
    if isinstance(x, Tensor):
        return x
    return Tensor(x)


class Scatter:
    """A sparse gradient contribution: ``grad[index] += value``.

    ``accumulate_at`` selects ``np.add.at`` for indices that may repeat.
    """

    __slots__ = ("index", "value", "accumulate_at")

    def __init__(self, index, value, accumulate_at=False):
        self.index = index
        self.value = value
        self.accumulate_at = accumulate_at


class Tape:
    """Ordered record of differentiable operations.

    Use as a context manager; tapes nest, and only the innermost records.
    """

    def __init__(self):
        self.nodes = []

    def __enter__(self):
        stack = _get("tapes", None)
        if stack is None:
            stack = _local.tapes = []
        stack.append(self)
        return self

    def __exit__(self, *exc):
        _local.tapes.pop()
        return False

    def __len__(self):
        return len(self.nodes)

    def record(self, out, inputs, rule):
        self.nodes.append((out, inputs, rule))

    def leaves(self):
        seen = {}
        for _, inputs, _ in self.nodes:
            for t in inputs:
                if t.is_leaf and t.requires_grad:
                    seen.setdefault(id(t), t)
        return list(seen.values())

    def gradients(self, output, seed=None, wrt=()):
        """Propagate adjoints from ``output`` back through the tape.

        Returns a dict ``id(tensor) -> gradient array`` covering every leaf
        reached plus any tensor listed in ``wrt``.  ``seed`` defaults to ones
        (only sensible for scalars; :func:`backward` enforces that).
        """
        keep = {id(t) for t in wrt}
        grads = {}
        owned = set()
        if seed is None:
            seed = np.ones_like(output.data)
        grads[id(output)] = np.asarray(seed, dtype=output.data.dtype)
        result = {}

        for out, inputs, rule in reversed(self.nodes):
            key = id(out)
            g = grads.pop(key, None)
            if g is None:
                continue
            owned.discard(key)
            if key in keep:
                result[key] = g
            contributions = rule(g)
            for inp, gi in zip(inputs, contributions):
                if gi is None or not inp.requires_grad:
                    continue
                _accumulate(grads, owned, inp, gi)

        for key, g in grads.items():
            result[key] = g
        return result


def _accumulate(grads, owned, tensor, contribution):
    key = id(tensor)
    if isinstance(contribution, Scatter):
        buf = grads.get(key)
        if buf is None:
            buf = np.zeros(tensor.data.shape, dtype=tensor.data.dtype)
            grads[key] = buf
            owned.add(key)
        elif key not in owned:
            buf = buf.copy()
            grads[key] = buf
            owned.add(key)
        if contribution.accumulate_at:
            np.add.at(buf, contribution.index, contribution.value)
        else:
            buf[contribution.index] += contribution.value
        return
    existing = grads.get(key)
    if existing is None:
        grads[key] = contribution
    elif key in owned:
        existing += contribution
    else:
        grads[key] = existing + contribution
        owned.add(key)


def active_tape():
    stack = _get("tapes", None)
    if stack:
        return stack[-1]
    return None


@contextlib.contextmanager
def no_tape():
    """Suspend recording (evaluation, decoding)."""
    stack = _get("tapes", None)
    saved = list(stack) if stack else []
    _local.tapes = []
    try:
        yield
    finally:
        _local.tapes = saved


def make_result(data, inputs, rule):
    """Wrap ``data`` as an op output and record it if any input needs grad."""
    tape = active_tape()
    needs = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor._result(data, needs)
    if needs:
        tape.record(out, inputs, rule)
    return out


def backward(tape, output, params=None):
    """Gradients of scalar ``output`` for every gradient-requiring leaf.

    Returns ``name -> gradient``.  With ``params`` (a ParamSet), every
    parameter gets an entry, zero when the output does not depend on it.
    Gradients are also stored on the leaves' ``.grad``.
    """
    if output.data.size != 1:
        raise ValueError(f"backward needs a scalar output, got shape {output.shape}")
    raw = tape.gradients(output)
    named = {}
    leaves = list(params.tensors()) if params is not None else tape.leaves()
    for i, leaf in enumerate(leaves):
        g = raw.get(id(leaf))
        if g is None:
            g = np.zeros_like(leaf.data)
        leaf.grad = g
        named[leaf.name if leaf.name is not None else f"leaf{i}"] = g
    return named
