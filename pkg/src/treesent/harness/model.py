"""An encoder plus the head for one of the three task framings."""

from dataclasses import dataclass

import numpy as np

from ..autodiff import ParamSet, no_tape, ops
from ..encoders import Encoder
from ..heads import Classifier, Decoder, relation_features
from .data import pad_ids, target_ids


@dataclass
class HeadConfig:
    mlp_hidden: int = 1024
    dropout: float = 0.0
    decoder_embed_dim: int = 0  # 0 means the encoding width
    decode_extra: int = 10  # greedy decoding stops after source length + this

    def validate(self):
        if self.mlp_hidden <= 0 or self.decoder_embed_dim < 0 or self.decode_extra < 0:
            raise ValueError("head sizes must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        return self


class Model:
    """Parameters live in one :class:`ParamSet` shared by encoder and head."""

    def __init__(self, task, enc_config, head_config, vocab, tgt_vocab=None, n_classes=0, seed=0):
        self.task = task
        self.enc_config = enc_config
        self.head_config = head_config.validate()
        self.vocab, self.tgt_vocab, self.n_classes = vocab, tgt_vocab, n_classes
        self.seed = seed
        rng = np.random.default_rng(seed)
        self.params = ParamSet()
        self.encoder = Encoder(enc_config, self.params, rng)
        d = enc_config.output_dim
        hc = head_config
        if task == "seq2seq":
            self.head = Decoder(self.params, "dec", d, len(tgt_vocab), hc.decoder_embed_dim or None, rng)
        else:
            width = 4 * d if task == "pair-classify" else d
            self.head = Classifier(self.params, "clf", width, n_classes, hc.mlp_hidden, hc.dropout, rng)

    def _eval_rng(self):
        # random layouts at evaluation are fixed by the model seed
        return np.random.default_rng([self.seed, 2])

    def encode(self, examples, rng=None, training=False, second=False):
        toks = [ex.tokens2 if second else ex.tokens for ex in examples]
        ids, lengths = pad_ids(toks, self.vocab)
        layouts = None
        if self.enc_config.layout == "parsed":
            layouts = [ex.tree2 if second else ex.tree for ex in examples]
        return self.encoder.encode(ids, lengths, layouts, rng, training).encoding

    def _features(self, examples, rng, training):
        s1 = self.encode(examples, rng, training)
        if self.task == "pair-classify":
            return relation_features(s1, self.encode(examples, rng, training, second=True))
        return s1

    def loss(self, examples, rng=None, training=False):
        if self.task == "seq2seq":
            enc = self.encode(examples, rng, training)
            return self.head.teacher_forced(enc, target_ids([ex.target for ex in examples], self.tgt_vocab))[1]
        logits = self.head(self._features(examples, rng, training), training, rng)
        return ops.cross_entropy(logits, np.array([ex.label for ex in examples]))

    def predict(self, examples, rng=None):
        """Labels (classification) or token lists (generation)."""
        rng = rng if rng is not None else self._eval_rng()
        with no_tape():
            if self.task == "seq2seq":
                enc = self.encode(examples, rng)
                limit = max(len(ex.tokens) for ex in examples) + self.head_config.decode_extra
                return [self.tgt_vocab.decode(seq) for seq in self.head.greedy(enc, limit)]
            logits = self.head(self._features(examples, rng, False))
            return [int(k) for k in logits.data.argmax(axis=1)]
