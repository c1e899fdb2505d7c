"""Plain-text ``key = value`` run configuration.

Keys are dotted (``train.lr``); a ``[section]`` line prefixes the keys after
it.  ``#`` starts a comment.  Values are parsed as bool, int, float or
string, then coerced to the type of the dataclass field they set.
"""

import dataclasses

from .encoders import EncoderConfig
from .harness.model import HeadConfig
from .harness.train import TrainConfig

SECTIONS = {"encoder": EncoderConfig, "head": HeadConfig, "train": TrainConfig}
FREE_SECTIONS = ("data",)


class ConfigError(ValueError):
    pass


def parse_value(text):
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    for kind in (int, float):
        try:
            return kind(text)
        except ValueError:
            pass
    return text


def parse_lines(lines, source="<config>"):
    out = {}
    section = ""
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value")
        key, value = (p.strip() for p in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        out[f"{section}.{key}" if section else key] = parse_value(value)
    return out


def read_config(path):
    with open(path, encoding="utf-8") as fh:
        return parse_lines(fh, path)


def parse_overrides(items):
    """``["train.lr=0.01", ...]`` to a flat dict."""
    out = {}
    for item in items:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, value = item.split("=", 1)
        out[key.strip()] = parse_value(value.strip())
    return out


def _coerce(cls, name, value):
    field = next((f for f in dataclasses.fields(cls) if f.name == name), None)
    if field is None:
        raise ConfigError(f"unknown key {name!r} for {cls.__name__}")
    kind = field.type if isinstance(field.type, type) else type(field.default)
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if kind is str and not isinstance(value, str):
        return str(value)
    if not isinstance(value, kind) or (kind is int and isinstance(value, bool)):
        raise ConfigError(f"{name}: expected {kind.__name__}, got {value!r}")
    return value


def build(flat, **defaults):
    """Split a flat dict into the section dataclasses plus free ``data`` keys.

    ``defaults`` (e.g. ``encoder={"vocab_size": 40}``) fill keys the
    config does not set.
    """
    grouped = {name: dict(defaults.get(name, {})) for name in SECTIONS}
    data = {}
    for key, value in flat.items():
        section, _, name = key.partition(".")
        if section in FREE_SECTIONS and name:
            data[name] = value
        elif section in SECTIONS and name:
            grouped[section][name] = _coerce(SECTIONS[section], name, value)
        else:
            raise ConfigError(f"unknown key {key!r}")
    try:
        objs = {name: cls(**grouped[name]) for name, cls in SECTIONS.items()}
        objs["head"].validate()
        objs["train"].validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return objs["encoder"], objs["head"], objs["train"], data


def dump(flat):
    """Canonical text form: sorted ``key = value`` lines."""
    return "".join(f"{k} = {_fmt(v)}\n" for k, v in sorted(flat.items()))


def effective(enc, head, train, data):
    flat = {f"data.{k}": v for k, v in data.items()}
    for section, obj in (("encoder", enc), ("head", head), ("train", train)):
        flat.update({f"{section}.{k}": v for k, v in dataclasses.asdict(obj).items()})
    return flat


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    return repr(v) if isinstance(v, float) else str(v)
