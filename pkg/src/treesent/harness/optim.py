"""Adam with bias-corrected moment estimates."""

import numpy as np


class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        if lr <= 0:
            raise ValueError("learning rate must be positive")
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = {name: np.zeros_like(t.data) for name, t in params.items()}
        self.v = {name: np.zeros_like(t.data) for name, t in params.items()}

    def step(self, grads):
        """Apply one update; ``grads`` maps every trainable name to an array."""
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for name, t in self.params.items():
            if not t.requires_grad:
                continue
            g = grads.get(name)
            if g is None:
                raise KeyError(f"no gradient for parameter {name!r}")
            m, v = self.m[name], self.v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            t.data -= (self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(t.data.dtype)

    def state(self):
        out = {"t": self.t}
        for name in self.m:
            out[f"m.{name}"] = self.m[name]
            out[f"v.{name}"] = self.v[name]
        return out

    def load_state(self, state):
        self.t = int(state["t"])
        for name in self.m:
            self.m[name] = np.array(state[f"m.{name}"], dtype=self.m[name].dtype)
            self.v[name] = np.array(state[f"v.{name}"], dtype=self.v[name].dtype)
