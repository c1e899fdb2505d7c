"""Named parameter collections."""

from dataclasses import dataclass

import numpy as np

from .tensor import Tensor, default_dtype


@dataclass(frozen=True)
class Init:
    """How a parameter is initialized.

    ``kind`` is ``"uniform"`` (range ``+-scale``; ``scale=None`` means
    ``1/sqrt(fan_in)`` with fan_in the first dimension), ``"zeros"`` or
    ``"constant"``.  ``blocks`` optionally overrides column blocks of a bias
    with constants, e.g. forget-gate biases of 1.
    """

    kind: str = "uniform"
    scale: float = None
    value: float = 0.0
    blocks: tuple = ()

    def sample(self, shape, rng, dtype):
        if self.kind == "zeros":
            arr = np.zeros(shape, dtype=dtype)
        elif self.kind == "constant":
            arr = np.full(shape, self.value, dtype=dtype)
        elif self.kind == "uniform":
            bound = self.scale if self.scale is not None else 1.0 / np.sqrt(shape[0])
            arr = rng.uniform(-bound, bound, size=shape).astype(dtype)
        else:
            raise ValueError(f"unknown initializer {self.kind!r}")
        for lo, hi, value in self.blocks:
            arr[..., lo:hi] = value
        return arr


ZEROS = Init("zeros")


class ParamSet:
    """Ordered map of unique parameter names to gradient-requiring tensors."""

    def __init__(self):
        self._tensors = {}
        self._inits = {}

    def add(self, name, shape, init=None, rng=None):
        if name in self._tensors:
            raise KeyError(f"duplicate parameter name {name!r}")
        init = init or Init()
        rng = rng if rng is not None else np.random.default_rng(0)
        t = Tensor(init.sample(tuple(shape), rng, default_dtype()), requires_grad=True, name=name)
        self._tensors[name] = t
        self._inits[name] = init
        return t

    def __getitem__(self, name):
        return self._tensors[name]

    def __contains__(self, name):
        return name in self._tensors

    def __iter__(self):
        return iter(self._tensors)

    def __len__(self):
        return len(self._tensors)

    def names(self):
        return list(self._tensors)

    def tensors(self):
        return list(self._tensors.values())

    def items(self):
        return self._tensors.items()

    def init_spec(self, name):
        return self._inits[name]

    def size(self):
        return int(sum(t.data.size for t in self._tensors.values()))

    def state(self):
        """Copy of all values, ``name -> ndarray``."""
        return {k: t.data.copy() for k, t in self._tensors.items()}

    def load_state(self, values, strict=True):
        """Copy ``values`` in; without ``strict``, names not held here are skipped."""
        if strict and set(values) != set(self._tensors):
            missing = set(self._tensors) - set(values)
            extra = set(values) - set(self._tensors)
            raise KeyError(f"parameter mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for k, v in values.items():
            t = self._tensors.get(k)
            if t is None:
                continue
            v = np.asarray(v)
            if v.shape != t.data.shape:
                raise ValueError(f"{k}: shape {v.shape} does not match {t.data.shape}")
            t.data = v.astype(t.data.dtype, copy=True)

    def cast(self, dtype):
        for t in self._tensors.values():
            t.data = t.data.astype(dtype)

    def check_finite(self):
        """Raise FloatingPointError naming the first non-finite parameter."""
        for k, t in self._tensors.items():
            if not np.isfinite(t.data).all():
                raise FloatingPointError(f"non-finite values in parameter {k!r}")
