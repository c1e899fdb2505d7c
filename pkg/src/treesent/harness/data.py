"""Datasets: tab-separated split files, parallel tree files, synthetic tasks
and pretrained embedding text files."""

import os
from dataclasses import dataclass, field

import numpy as np

from ..trees import TreeError, read_tree_file
from ..vocab import BOS, EOS, PAD, Vocab
from .errors import DataError

TASKS = ("classify", "pair-classify", "seq2seq")
HEADERS = {
    "classify": ("text", "label"),
    "pair-classify": ("text1", "text2", "label"),
    "seq2seq": ("src", "tgt"),
}
SPLITS = ("train", "dev", "test")
SYNTH_TASKS = ("copy", "reverse", "first-token-class", "last-token-class")


@dataclass
class Example:
    tokens: list
    label: int = None
    tokens2: list = None
    target: list = None
    tree: object = None
    tree2: object = None

    def max_length(self):
        return max(len(self.tokens), len(self.tokens2 or ()), len(self.target or ()))


@dataclass
class Dataset:
    task: str
    train: list
    dev: list
    test: list
    vocab: Vocab
    tgt_vocab: Vocab = None
    labels: list = field(default_factory=list)

    @property
    def n_classes(self):
        return len(self.labels)

    def split(self, name):
        if name not in SPLITS:
            raise DataError(f"unknown split {name!r}; expected one of {SPLITS}")
        return getattr(self, name)

    def validate(self):
        if self.task not in TASKS:
            raise DataError(f"unknown task {self.task!r}")
        for name in SPLITS:
            for i, ex in enumerate(getattr(self, name)):
                if not ex.tokens or (self.task == "pair-classify" and not ex.tokens2):
                    raise DataError(f"{name} example {i}: empty sentence")
                if self.task != "seq2seq" and not 0 <= ex.label < self.n_classes:
                    raise DataError(f"{name} example {i}: label {ex.label} outside [0, {self.n_classes})")
                for toks, tree in ((ex.tokens, ex.tree), (ex.tokens2, ex.tree2)):
                    if tree is not None and tree.n_leaves != len(toks):
                        raise DataError(f"{name} example {i}: tree has {tree.n_leaves} leaves "
                                        f"for {len(toks)} tokens")
        return self


# -- files -----------------------------------------------------------------


def _read_tsv(path):
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        task = next((t for t, h in HEADERS.items() if tuple(header) == h), None)
        if task is None:
            raise DataError(f"{path}:1: unrecognized header {header}")
        rows = []
        for lineno, line in enumerate(fh, 2):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(fields)}")
            rows.append(fields)
    return task, rows


def _label_index(raw_labels):
    """Integer labels stay as they are; string labels map in sorted order."""
    try:
        ints = sorted({int(x) for x in raw_labels})
    except ValueError:
        names = sorted(set(raw_labels))
        return names, {n: i for i, n in enumerate(names)}
    if ints and ints[0] < 0:
        raise DataError("integer labels must be nonnegative")
    names = [str(i) for i in range(ints[-1] + 1)] if ints else []
    return names, {str(i): i for i in range(len(names))}


def load_dataset(directory):
    """Read ``train.tsv``, ``dev.tsv`` and ``test.tsv`` from ``directory``.

    ``<split>.trees`` files, when present, hold one bracketed tree per line
    (two tab-separated trees per line for sentence pairs).
    """
    parts = {}
    task = None
    for name in SPLITS:
        path = os.path.join(directory, f"{name}.tsv")
        if not os.path.exists(path):
            raise DataError(f"missing split file {path}")
        t, rows = _read_tsv(path)
        if task is not None and t != task:
            raise DataError(f"{path}: header does not match the train split")
        task = t
        parts[name] = rows
    labels, index = [], {}
    if task != "seq2seq":
        labels, index = _label_index([r[-1] for rows in parts.values() for r in rows])
    out = {}
    for name, rows in parts.items():
        exs = []
        for fields in rows:
            if task == "classify":
                exs.append(Example(fields[0].split(), index[fields[1]]))
            elif task == "pair-classify":
                exs.append(Example(fields[0].split(), index[fields[2]], tokens2=fields[1].split()))
            else:
                exs.append(Example(fields[0].split(), target=fields[1].split()))
        _attach_trees(os.path.join(directory, f"{name}.trees"), exs, task)
        out[name] = exs
    vocab = Vocab.build(ex.tokens + (ex.tokens2 or []) for ex in out["train"])
    tgt_vocab = Vocab.build(ex.target for ex in out["train"]) if task == "seq2seq" else None
    return Dataset(task, out["train"], out["dev"], out["test"], vocab, tgt_vocab, labels).validate()


def _attach_trees(path, examples, task):
    if not os.path.exists(path):
        return
    try:
        parsed = read_tree_file(path)
    except (TreeError, OSError) as exc:
        raise DataError(str(exc)) from None
    if len(parsed) != len(examples):
        raise DataError(f"{path}: {len(parsed)} trees for {len(examples)} examples")
    for lineno, (ex, entry) in enumerate(zip(examples, parsed), 1):
        pair = entry if isinstance(entry, tuple) else (entry,)
        if len(pair) != (2 if task == "pair-classify" else 1):
            raise DataError(f"{path}:{lineno}: wrong number of trees on the line")
        for (tokens, layout), sent in zip(pair, (ex.tokens, ex.tokens2)):
            if tokens != sent:
                raise DataError(f"{path}:{lineno}: tree leaves do not match the sentence")
        ex.tree = pair[0][1]
        if len(pair) == 2:
            ex.tree2 = pair[1][1]


def write_dataset(dataset, directory):
    os.makedirs(directory, exist_ok=True)
    header = HEADERS[dataset.task]
    for name in SPLITS:
        with open(os.path.join(directory, f"{name}.tsv"), "w", encoding="utf-8") as fh:
            fh.write("\t".join(header) + "\n")
            for ex in dataset.split(name):
                if dataset.task == "classify":
                    fields = [" ".join(ex.tokens), dataset.labels[ex.label]]
                elif dataset.task == "pair-classify":
                    fields = [" ".join(ex.tokens), " ".join(ex.tokens2), dataset.labels[ex.label]]
                else:
                    fields = [" ".join(ex.tokens), " ".join(ex.target)]
                fh.write("\t".join(fields) + "\n")


# -- synthetic tasks ---------------------------------------------------------


def synth_generate(task, vocab_size, min_len, max_len, sizes, seed=0, n_classes=2):
    """Reproducible toy dataset.

    ``copy`` and ``reverse`` are generation tasks; the ``*-token-class``
    tasks label a sentence with ``id % n_classes`` of its first or last word.
    ``sizes`` gives (train, dev, test) counts.
    """
    if task not in SYNTH_TASKS:
        raise DataError(f"unknown synthetic task {task!r}; expected one of {SYNTH_TASKS}")
    if len(sizes) != 3 or min(sizes) <= 0:
        raise DataError("sizes must be three positive counts")
    if not 1 <= min_len <= max_len:
        raise DataError("need 1 <= min_len <= max_len")
    if vocab_size < 1:
        raise DataError("vocab_size must be positive")
    is_class = task.endswith("class")
    if is_class and vocab_size < n_classes:
        raise DataError(f"vocab of {vocab_size} words cannot cover {n_classes} classes")
    rng = np.random.default_rng(seed)
    words = [f"w{i}" for i in range(vocab_size)]
    splits = []
    for size in sizes:
        exs = []
        lengths = rng.integers(min_len, max_len + 1, size=size)
        for n in lengths:
            ids = rng.integers(0, vocab_size, size=int(n))
            toks = [words[i] for i in ids]
            if task == "copy":
                exs.append(Example(toks, target=list(toks)))
            elif task == "reverse":
                exs.append(Example(toks, target=toks[::-1]))
            else:
                key = ids[0] if task == "first-token-class" else ids[-1]
                exs.append(Example(toks, int(key % n_classes)))
        splits.append(exs)
    vocab = Vocab(words)
    if is_class:
        return Dataset("classify", *splits, vocab, labels=[str(i) for i in range(n_classes)])
    return Dataset("seq2seq", *splits, vocab, tgt_vocab=Vocab(words))


# -- embeddings --------------------------------------------------------------


@dataclass
class Coverage:
    found: int
    total: int

    @property
    def fraction(self):
        return self.found / self.total if self.total else 0.0


def load_embeddings(path, vocab, rng=None, scale=0.5, dtype=np.float32):
    """Embedding table for ``vocab`` from a whitespace-separated text file.

    Rows of words absent from the file keep a uniform(-scale, scale) draw.
    Coverage counts non-special vocabulary words found in the file.  A
    leading ``count dim`` header line is skipped.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    vectors = {}
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if lineno == 1 and len(parts) == 2 and all(p.isdigit() for p in parts):
                continue
            if len(parts) < 2:
                raise DataError(f"{path}:{lineno}: a word needs at least one value")
            if dim is None:
                dim = len(parts) - 1
            elif len(parts) - 1 != dim:
                raise DataError(f"{path}:{lineno}: expected {dim} values, got {len(parts) - 1}")
            try:
                vec = np.array(parts[1:], dtype=np.float64)
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric value") from None
            if parts[0] in vocab and parts[0] not in vectors:
                vectors[parts[0]] = vec
    if dim is None:
        raise DataError(f"{path}: no vectors")
    table = rng.uniform(-scale, scale, size=(len(vocab), dim)).astype(dtype)
    for word, vec in vectors.items():
        table[vocab.stoi[word]] = vec
    specials = 4
    found = sum(1 for w in vectors if vocab.stoi[w] >= specials)
    return table, Coverage(found, len(vocab) - specials)


# -- batching ----------------------------------------------------------------


def filter_length(examples, max_len):
    return [ex for ex in examples if ex.max_length() <= max_len]


def pad_ids(seqs, vocab):
    lengths = np.array([len(s) for s in seqs], dtype=np.int64)
    ids = np.full((len(seqs), int(lengths.max())), PAD, dtype=np.int64)
    for b, s in enumerate(seqs):
        ids[b, :len(s)] = vocab.encode(s)
    return ids, lengths


def target_ids(seqs, vocab):
    """``[BOS] + ids + [EOS]`` rows padded with PAD."""
    width = max(len(s) for s in seqs) + 2
    out = np.full((len(seqs), width), PAD, dtype=np.int64)
    for b, s in enumerate(seqs):
        out[b, :len(s) + 2] = [BOS] + vocab.encode(s) + [EOS]
    return out
