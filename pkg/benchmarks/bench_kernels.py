"""Compare the compiled gate kernels with the numpy fallback.

Kernel timings import both implementations directly.  The encoder rows run
one training step (forward and backward) in a child process per backend,
since the backend is chosen once at import.

    python benchmarks/bench_kernels.py --sizes 64x32,256x128 --repeat 50
"""

import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np


def _best(fn, repeat):
    fn()
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def kernel_rows(sizes, repeat, dtype):
    from treesent.kernels import _pure

    try:
        from treesent.kernels import _fast
    except ImportError:
        sys.exit("compiled kernels are not built; run `pip install -e . --no-build-isolation` first")
    rows = []
    rng = np.random.default_rng(0)
    for n, h in sizes:
        z4 = rng.normal(size=(n, 4 * h)).astype(dtype)
        z5 = rng.normal(size=(n, 5 * h)).astype(dtype)
        c1, c2 = (rng.normal(size=(n, h)).astype(dtype) for _ in range(2))
        g = rng.normal(size=(n, 2 * h)).astype(dtype)
        _, la, lt = _pure.lstm_forward(z4, c1)
        _, ta, tt = _pure.tree_forward(z5, c1, c2)
        cases = {
            "lstm_forward": lambda m: m.lstm_forward(z4, c1),
            "lstm_backward": lambda m: m.lstm_backward(la, c1, lt, g),
            "tree_forward": lambda m: m.tree_forward(z5, c1, c2),
            "tree_backward": lambda m: m.tree_backward(ta, c1, c2, tt, g),
        }
        for name, call in cases.items():
            t_pure = _best(lambda: call(_pure), repeat)
            t_fast = _best(lambda: call(_fast), repeat)
            rows.append((f"{name} {n}x{h}", t_pure, t_fast))
    return rows


def encoder_step(layout, batch, length, dim, repeat):
    """Seconds per forward+backward step of one encoder, current backend."""
    from treesent.autodiff import Tape, backward, ops
    from treesent.encoders import Encoder, EncoderConfig

    rng = np.random.default_rng(0)
    cfg = EncoderConfig(layout=layout, embed_dim=dim, hidden_dim=dim, leaf_rnn_dim=dim // 2,
                        vocab_size=100, leaf_rnn="bidirectional" if layout == "balanced" else "none")
    enc = Encoder(cfg, rng=rng)
    ids = rng.integers(4, 100, (batch, length))
    lengths = rng.integers(length // 2, length + 1, batch)

    def step():
        with Tape() as tape:
            loss = ops.sum(enc.encode(ids, lengths).encoding)
        backward(tape, loss, enc.params)

    return _best(step, repeat)


def encoder_rows(layouts, batch, length, dim, repeat):
    rows = []
    for layout in layouts:
        times = []
        for pure in ("1", "0"):
            env = dict(os.environ, TREESENT_PURE_PYTHON=pure)
            args = [sys.executable, __file__, "--child", layout, str(batch), str(length), str(dim), str(repeat)]
            out = subprocess.run(args, env=env, capture_output=True, text=True, check=True)
            times.append(json.loads(out.stdout)["seconds"])
        rows.append((f"encoder {layout} b{batch} t{length} d{dim}", times[0], times[1]))
    return rows


def _size(text):
    n, h = text.lower().split("x")
    return int(n), int(h)


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--sizes", default="64x32,256x128,1024x300",
                   help="comma-separated NxH kernel shapes")
    p.add_argument("--repeat", type=int, default=30)
    p.add_argument("--dtype", choices=["float32", "float64"], default="float32")
    p.add_argument("--layouts", default="balanced,right,linear")
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--length", type=int, default=20)
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--child", nargs=5, help=argparse.SUPPRESS)
    args = p.parse_args(argv)

    if args.child:
        layout, batch, length, dim, repeat = args.child
        secs = encoder_step(layout, int(batch), int(length), int(dim), int(repeat))
        print(json.dumps({"seconds": secs}))
        return

    sizes = [_size(s) for s in args.sizes.split(",") if s]
    rows = kernel_rows(sizes, args.repeat, np.dtype(args.dtype))
    rows += encoder_rows(args.layouts.split(","), args.batch, args.length, args.dim, max(3, args.repeat // 5))
    width = max(len(r[0]) for r in rows)
    print(f"{'case':<{width}}  {'numpy us':>10}  {'cython us':>10}  {'speedup':>7}")
    for name, t_pure, t_fast in rows:
        print(f"{name:<{width}}  {t_pure * 1e6:10.1f}  {t_fast * 1e6:10.1f}  {t_pure / t_fast:7.2f}")


if __name__ == "__main__":
    main()
