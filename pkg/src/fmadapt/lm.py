"""Backoff n-gram LM, n-best rescoring and the shallow-fusion adapter for beam search.

Smoothing: a history h seen in training gives each continuation w it was
followed by P(w|h) = (c(h,w) + k) / (c(h) + k|V|); the remaining mass goes
to unseen continuations in proportion to the next-lower order, scaled by
the backoff weight alpha(h).  The unigram level is plain add-k over the
vocabulary (observed tokens plus end-of-sentence).  Sentences are padded
with a single start symbol.

The trained model is held as a table of log10 probabilities and log10
backoff weights, the same numbers the text format stores, so save/load is
exact.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, replace
from pathlib import Path

from .decoders import Hypothesis

BOS = "<s>"
EOS = "</s>"
LN10 = math.log(10.0)


class NGramLm:
    def __init__(self, order: int, probs: dict[tuple, float], backoffs: dict[tuple, float], oov_log10: float):
        self.order = order
        self.probs = probs  # ngram tuple -> log10 P(last | rest)
        self.backoffs = backoffs  # history tuple -> log10 alpha
        self.oov_log10 = oov_log10
        self.vocab = sorted(w for (w,) in (g for g in probs if len(g) == 1))

    # --------------------------------------------------------------- scoring
    def _log10_cond(self, history: tuple, w) -> float:
        h = history[len(history) - (self.order - 1):] if self.order > 1 else ()
        acc = 0.0
        while True:
            p = self.probs.get(h + (w,))
            if p is not None:
                return acc + p
            if not h:
                return acc + self.oov_log10
            acc += self.backoffs.get(h, 0.0)
            if acc == -math.inf:
                return acc
            h = h[1:]

    def cond_logprob(self, history, w) -> float:
        """Natural-log P(w | history); history excludes the start symbol."""
        return self._log10_cond((BOS,) + tuple(history), w) * LN10

    def eos_logprob(self, history) -> float:
        return self.cond_logprob(history, EOS)

    # ------------------------------------------------------------------- I/O
    def to_text(self) -> str:
        lines = [f"# order {self.order}", f"# oov_log10 {self.oov_log10!r}"]
        # contexts that are never predicted (the start symbol) get a -inf probability
        for g in sorted(set(self.probs) | set(self.backoffs), key=lambda g: (len(g), g)):
            lines.append(f"{_join(g)}\t{self.probs.get(g, -math.inf)!r}\t{self.backoffs.get(g, 0.0)!r}")
        return "\n".join(lines) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")

    @classmethod
    def from_text(cls, text: str) -> "NGramLm":
        order = None
        oov = None
        probs, backoffs = {}, {}
        for n, line in enumerate(text.split("\n"), 1):
            if not line:
                continue
            if line.startswith("# order "):
                order = int(line[8:])
                continue
            if line.startswith("# oov_log10 "):
                oov = float(line[12:])
                continue
            try:
                g, p, b = line.split("\t")
                g = _split(g)
                if float(p) != -math.inf:
                    probs[g] = float(p)
                if float(b) != 0.0:
                    backoffs[g] = float(b)
            except ValueError:
                raise ValueError(f"line {n}: malformed n-gram entry") from None
        if order is None or oov is None:
            raise ValueError("missing '# order' or '# oov_log10' header")
        return cls(order, probs, backoffs, oov)

    @classmethod
    def load(cls, path: str | Path) -> "NGramLm":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))


def _esc(tok: str) -> str:
    return str(tok).replace("\\", "\\\\").replace(" ", "\\s").replace("\t", "\\t").replace("\n", "\\n")


def _unesc(tok: str) -> str:
    out, i = [], 0
    while i < len(tok):
        if tok[i] == "\\" and i + 1 < len(tok):
            out.append({"\\": "\\", "s": " ", "t": "\t", "n": "\n"}[tok[i + 1]])
            i += 2
        else:
            out.append(tok[i])
            i += 1
    return "".join(out)


def _join(g):
    return " ".join(_esc(t) for t in g)


def _split(s):
    return tuple(_unesc(t) for t in s.split(" "))


def train_lm(sentences, order: int = 3, k: float = 0.1) -> NGramLm:
    """Train on an iterable of token sequences (lists of strings)."""
    sentences = [list(s) for s in sentences]
    if not sentences:
        raise ValueError("empty corpus")
    if order < 1:
        raise ValueError("order must be >= 1")
    counts: dict[tuple, int] = defaultdict(int)
    for s in sentences:
        padded = [BOS] + s + [EOS]
        for i in range(1, len(padded)):
            for m in range(1, order + 1):
                if i - m + 1 < 0:
                    break
                counts[tuple(padded[i - m + 1: i + 1])] += 1
    vocab = sorted({g[0] for g in counts if len(g) == 1})
    V = len(vocab)
    total = sum(c for g, c in counts.items() if len(g) == 1)
    ctx_count: dict[tuple, int] = defaultdict(int)
    followers: dict[tuple, list] = defaultdict(list)
    for g, c in counts.items():
        if len(g) > 1:
            ctx_count[g[:-1]] += c
            followers[g[:-1]].append(g[-1])

    prob: dict[tuple, float] = {}  # linear probabilities of stored n-grams
    for w in vocab:
        prob[(w,)] = (counts[(w,)] + k) / (total + k * V)
    oov = k / (total + k * V)
    alpha: dict[tuple, float] = {}

    def lower(h, w):
        """Linear P(w | h) using already-built lower orders."""
        p = prob.get(h + (w,))
        if p is not None:
            return p
        if not h:
            return oov
        return alpha.get(h, 1.0) * lower(h[1:], w)

    for m in range(2, order + 1):
        for h in sorted(x for x in ctx_count if len(x) == m - 1):
            ch = ctx_count[h]
            seen = followers[h]
            for w in seen:
                prob[h + (w,)] = (counts[h + (w,)] + k) / (ch + k * V)
            left = k * (V - len(seen)) / (ch + k * V)
            denom = 1.0 - sum(lower(h[1:], w) for w in seen)
            alpha[h] = left / denom if left > 0 and denom > 0 else 0.0

    def log10(p):
        return math.log10(p) if p > 0 else -math.inf

    return NGramLm(
        order,
        {g: log10(p) for g, p in prob.items()},
        {h: log10(a) for h, a in alpha.items() if a != 1.0},
        log10(oov),
    )


def lm_logprob(lm: NGramLm, tokens) -> float:
    """Natural-log probability of a token sequence including end-of-sentence."""
    tokens = list(tokens)
    total = 0.0
    for i, w in enumerate(tokens):
        total += lm.cond_logprob(tokens[:i], w)
    return total + lm.eos_logprob(tokens)


def _id_mapper(vocab):
    if vocab is None:
        return lambda ids: [str(i) for i in ids]

    def to_tokens(ids):
        return ["<unk>" if i == 1 else vocab.pieces[i - 2] for i in ids]

    return to_tokens


@dataclass
class FusionConfig:
    """Shallow-fusion settings; ``vocab`` maps decoder ids to LM tokens."""

    lm: NGramLm
    lam: float = 0.3
    length_bonus: float = 0.0
    vocab: object = None

    def __post_init__(self):
        if not math.isfinite(self.lam) or self.lam < 0:
            raise ValueError("fusion lambda must be finite and >= 0")
        self._tok = _id_mapper(self.vocab)

    def next_logprob(self, prefix_ids, token_id) -> float:
        return self.lm.cond_logprob(self._tok(prefix_ids), self._tok([token_id])[0])

    def eos_logprob(self, prefix_ids) -> float:
        return self.lm.eos_logprob(self._tok(prefix_ids))


@dataclass(frozen=True)
class RescoreConfig:
    lm_weight: float = 0.3

    def __post_init__(self):
        if not math.isfinite(self.lm_weight) or self.lm_weight < 0:
            raise ValueError("lm_weight must be finite and >= 0")


def rescore(nbest: list[Hypothesis], lm: NGramLm, cfg: RescoreConfig, vocab=None) -> list[Hypothesis]:
    """Re-rank by acoustic + lm_weight * LM log-prob (stable, descending)."""
    if not nbest:
        raise ValueError("nbest must be nonempty")
    to_tokens = _id_mapper(vocab)
    out = []
    for h in nbest:
        lmv = lm_logprob(lm, to_tokens(h.tokens))
        out.append(replace(h, lm=lmv, combined=h.acoustic + cfg.lm_weight * lmv))
    return sorted(out, key=lambda h: -h.combined)
