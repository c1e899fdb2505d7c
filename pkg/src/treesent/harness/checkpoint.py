"""Versioned binary checkpoints.

Layout: 8 magic bytes, a little-endian uint32 format version, a uint64
header length, a UTF-8 JSON header, then raw C-order arrays in header
order.  The header lists every array as ``[name, dtype, shape]``.
"""

import json
import struct
from dataclasses import asdict

import numpy as np

from ..encoders import EncoderConfig
from ..vocab import SPECIALS, Vocab
from .errors import DataError
from .model import HeadConfig, Model

MAGIC = b"TREESNT\x00"
VERSION = 1


class CheckpointError(DataError):
    pass


def save_arrays(path, meta, arrays):
    entries = [[name, arr.dtype.str, list(arr.shape)] for name, arr in arrays.items()]
    header = json.dumps({"meta": meta, "arrays": entries}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", VERSION, len(header)))
        fh.write(header)
        for arr in arrays.values():
            fh.write(np.ascontiguousarray(arr).tobytes())


def load_arrays(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic bytes)")
    if len(blob) < 20:
        raise CheckpointError(f"{path}: truncated header")
    version, hlen = struct.unpack("<IQ", blob[8:20])
    if version != VERSION:
        raise CheckpointError(f"{path}: format version {version}, this build reads {VERSION}")
    if len(blob) < 20 + hlen:
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(blob[20:20 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header ({exc})") from None
    pos = 20 + hlen
    arrays = {}
    for name, dtype, shape in header["arrays"]:
        dt = np.dtype(dtype)
        nbytes = dt.itemsize * int(np.prod(shape, dtype=np.int64))
        if pos + nbytes > len(blob):
            raise CheckpointError(f"{path}: truncated at array {name!r}")
        arrays[name] = np.frombuffer(blob, dtype=dt, count=nbytes // dt.itemsize, offset=pos).reshape(shape).copy()
        pos += nbytes
    if pos != len(blob):
        raise CheckpointError(f"{path}: {len(blob) - pos} trailing bytes")
    return header["meta"], arrays


def _vocab_list(v):
    return None if v is None else v.itos[len(SPECIALS):]


def save_checkpoint(path, model, train_config=None, optimizer=None, extra=None):
    meta = {
        "task": model.task,
        "encoder": asdict(model.enc_config),
        "head": asdict(model.head_config),
        "train": asdict(train_config) if train_config is not None else None,
        "vocab": _vocab_list(model.vocab),
        "tgt_vocab": _vocab_list(model.tgt_vocab),
        "n_classes": model.n_classes,
        "seed": model.seed,
        "extra": extra or {},
    }
    arrays = {f"param.{k}": v for k, v in model.params.state().items()}
    if optimizer is not None:
        state = optimizer.state()
        meta["optimizer_t"] = state.pop("t")
        arrays.update({f"adam.{k}": v for k, v in state.items()})
    save_arrays(path, meta, arrays)


def load_checkpoint(path):
    """``(model, meta, optimizer_state)``; the model evaluates exactly as saved."""
    meta, arrays = load_arrays(path)
    try:
        enc_cfg = EncoderConfig(**meta["encoder"])
        head_cfg = HeadConfig(**meta["head"])
        tgt = meta["tgt_vocab"]
        model = Model(meta["task"], enc_cfg, head_cfg, Vocab(meta["vocab"]),
                      None if tgt is None else Vocab(tgt), meta["n_classes"], meta["seed"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"{path}: inconsistent metadata ({exc})") from None
    params = {k[6:]: v for k, v in arrays.items() if k.startswith("param.")}
    try:
        model.params.load_state(params)
    except (KeyError, ValueError) as exc:
        raise CheckpointError(f"{path}: {exc}") from None
    for name, arr in params.items():
        model.params[name].data = arr
    opt = None
    if "optimizer_t" in meta:
        opt = {k[5:]: v for k, v in arrays.items() if k.startswith("adam.")}
        opt["t"] = meta["optimizer_t"]
    return model, meta, opt
