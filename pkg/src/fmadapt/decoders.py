"""CTC, RNN-T and LAS decoder heads.

Training paths build autodiff graphs; inference paths (greedy and beam
search) run on plain numpy copies of the same weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor, make, name_scope, ops
from .kernels import ctc_kernel, rnnt_kernel
from .vocab import SPECIAL

DECODER_KINDS = ("rnnt", "ctc", "las")
MAX_SYMBOLS_PER_FRAME = 4


@dataclass(frozen=True)
class DecoderConfig:
    kind: str = "rnnt"
    n_layers: int = 1
    cell_dim: int = 8  # LSTM output (projected) width; also the embedding width
    hidden_dim: int = 16  # LSTM cell-state width
    joint_dim: int = 16
    att_dim: int = 16

    def __post_init__(self):
        if self.kind not in DECODER_KINDS:
            raise ValueError(f"unknown decoder kind {self.kind!r}")


PAPER_RNNT = DecoderConfig("rnnt", n_layers=6, cell_dim=768, hidden_dim=3072, joint_dim=768)
PAPER_LAS = DecoderConfig("las", n_layers=6, cell_dim=768, hidden_dim=3072, att_dim=768)
PAPER_CTC = DecoderConfig("ctc", n_layers=0)


def _lstm_shapes(prefix, n_layers, in_dim, c, h):
    out = []
    for layer in range(n_layers):
        p = f"{prefix}.lstm{layer}"
        d_in = in_dim if layer == 0 else c
        out += [
            (f"{p}.wx", (d_in, 4 * h), "decoder", "normal"),
            (f"{p}.wh", (c, 4 * h), "decoder", "normal"),
            (f"{p}.b", (4 * h,), "decoder", "lstm_bias"),
        ]
        if h != c:
            out.append((f"{p}.proj", (h, c), "decoder", "normal"))
    return out


def decoder_param_shapes(cfg: DecoderConfig, enc_dim: int, vocab_size: int) -> list[tuple[str, tuple, str, str]]:
    K = vocab_size + 1
    c = cfg.cell_dim
    if cfg.kind == "ctc":
        return [("decoder.ctc.w", (enc_dim, K), "decoder", "normal"), ("decoder.ctc.b", (K,), "decoder", "zeros")]
    out = [("decoder.embed", (K, c), "decoder", "embed")]
    if cfg.kind == "rnnt":
        out += _lstm_shapes("decoder", cfg.n_layers, c, c, cfg.hidden_dim)
        J = cfg.joint_dim
        out += [
            ("decoder.joint.enc", (enc_dim, J), "decoder", "normal"),
            ("decoder.joint.pred", (c, J), "decoder", "normal"),
            ("decoder.joint.b", (J,), "decoder", "zeros"),
            ("decoder.joint.out.w", (J, K), "decoder", "normal"),
            ("decoder.joint.out.b", (K,), "decoder", "zeros"),
        ]
    else:
        A = cfg.att_dim
        out += _lstm_shapes("decoder", cfg.n_layers, c + enc_dim, c, cfg.hidden_dim)
        out += [
            ("decoder.att.q", (c, A), "decoder", "normal"),
            ("decoder.att.k", (enc_dim, A), "decoder", "normal"),
            ("decoder.out.w", (c + enc_dim, K), "decoder", "normal"),
            ("decoder.out.b", (K,), "decoder", "zeros"),
        ]
    return out


# ===================================================================== training

def _lstm_cell(x_proj, h_prev, c_prev, P, p, hdim):
    g = ops.add(x_proj, ops.matmul(h_prev, P[f"{p}.wh"]))
    i = ops.sigmoid(g[:, :hdim])
    f = ops.sigmoid(g[:, hdim:2 * hdim])
    cand = ops.tanh(g[:, 2 * hdim:3 * hdim])
    o = ops.sigmoid(g[:, 3 * hdim:])
    c = ops.add(ops.mul(f, c_prev), ops.mul(i, cand))
    h = ops.mul(o, ops.tanh(c))
    if f"{p}.proj" in P:
        h = ops.matmul(h, P[f"{p}.proj"])
    return h, c


def prediction_network(P, cfg: DecoderConfig, prev_tokens: np.ndarray) -> Tensor:
    """(B, U+1) ids starting with the special symbol -> (B, U+1, cell_dim)."""
    B, L = prev_tokens.shape
    with name_scope("decoder.prediction"):
        x = ops.take(P["decoder.embed"], prev_tokens, axis=0)  # (B, L, c)
        for layer in range(cfg.n_layers):
            p = f"decoder.lstm{layer}"
            xp = ops.add(ops.matmul(x, P[f"{p}.wx"]), P[f"{p}.b"])
            h = Tensor(np.zeros((B, cfg.cell_dim)))
            c = Tensor(np.zeros((B, cfg.hidden_dim)))
            outs = []
            for t in range(L):
                h, c = _lstm_cell(xp[:, t, :], h, c, P, p, cfg.hidden_dim)
                outs.append(h)
            x = ops.stack(outs, axis=1)
    return x


def joint_logprobs(P, enc: Tensor, pred: Tensor) -> Tensor:
    """enc (B, T, De), pred (B, U+1, c) -> log-probs (B, T, U+1, V+1)."""
    with name_scope("decoder.joint"):
        a = ops.matmul(enc, P["decoder.joint.enc"])  # (B, T, J)
        b = ops.add(ops.matmul(pred, P["decoder.joint.pred"]), P["decoder.joint.b"])  # (B, U1, J)
        B, T, J = a.shape
        U1 = b.shape[1]
        z = ops.tanh(ops.add(ops.reshape(a, (B, T, 1, J)), ops.reshape(b, (B, 1, U1, J))))
        logits = ops.add(ops.matmul(z, P["decoder.joint.out.w"]), P["decoder.joint.out.b"])
        return ops.log_softmax(logits, axis=-1)


def _pad_labels(labels, pad=0):
    U = max((len(y) for y in labels), default=0)
    out = np.full((len(labels), U), pad, dtype=np.int64)
    for i, y in enumerate(labels):
        out[i, : len(y)] = y
    return out


def rnnt_lattice_loss(blank: Tensor, emit: Tensor, t_lens, u_lens) -> Tensor:
    """Per-utterance RNN-T negative log-likelihood from lattice log-probs.

    blank: (B, T, U+1) log P(blank | t, u); emit: (B, T, U) log P(y_{u+1} | t, u).
    """
    B = blank.shape[0]
    nll = np.zeros(B)
    gb = np.zeros(blank.shape)
    ge = np.zeros(emit.shape)
    for i in range(B):
        T, U = int(t_lens[i]), int(u_lens[i])
        nll[i], g1, g2 = rnnt_kernel(blank.data[i, :T, : U + 1], emit.data[i, :T, :U])
        gb[i, :T, : U + 1] = g1
        ge[i, :T, :U] = g2

    def back(g):
        g = g.reshape(B, 1, 1)
        return gb * g, ge * g

    return make(nll, (blank, emit), back, "rnnt_loss")


def rnnt_loss(P, cfg: DecoderConfig, enc: Tensor, enc_lens, labels) -> Tensor:
    """Per-utterance RNN-T loss (B,) for a padded encoder batch and label lists."""
    B = enc.shape[0]
    lab = _pad_labels(labels)
    prev = np.concatenate([np.full((B, 1), SPECIAL, dtype=np.int64), lab], axis=1)
    pred = prediction_network(P, cfg, prev)
    lp = joint_logprobs(P, enc, pred)  # (B, T, U1, K)
    T, U1 = lp.shape[1], lp.shape[2]
    blank = lp[:, :, :, 0]
    if U1 > 1:
        idx = np.broadcast_to(lab[:, None, :, None], (B, T, U1 - 1, 1))
        emit = ops.reshape(ops.take_along_axis(lp[:, :, : U1 - 1, :], idx, axis=-1), (B, T, U1 - 1))
    else:
        emit = Tensor(np.zeros((B, T, 0)))
    return rnnt_lattice_loss(blank, emit, enc_lens, [len(y) for y in labels])


def ctc_logprobs(P, enc: Tensor) -> Tensor:
    with name_scope("decoder.ctc"):
        return ops.log_softmax(ops.add(ops.matmul(enc, P["decoder.ctc.w"]), P["decoder.ctc.b"]), axis=-1)


def ctc_loss(logp, labels, lengths=None, blank: int = SPECIAL) -> Tensor:
    """CTC negative log-likelihood.

    ``logp`` is (T, V+1) for one utterance (returns a scalar) or (B, T, V+1)
    with ``labels`` a list of sequences and ``lengths`` the valid frames
    (returns (B,)).  Impossible alignments give +inf with a zero gradient.
    """
    logp = logp if isinstance(logp, Tensor) else Tensor(logp)
    single = logp.ndim == 2
    if single:
        logp = ops.reshape(logp, (1,) + logp.shape)
        labels = [labels]
    B, T, _ = logp.shape
    lengths = np.full(B, T) if lengths is None else np.asarray(lengths)
    nll = np.zeros(B)
    grad = np.zeros(logp.shape)
    for i in range(B):
        n = int(lengths[i])
        nll[i], grad[i, :n] = ctc_kernel(logp.data[i, :n], np.asarray(labels[i], dtype=np.int64), blank)

    def back(g):
        g = np.where(np.isfinite(nll), g, 0.0)
        return (grad * g.reshape(B, 1, 1),)

    out = make(nll, (logp,), back, "ctc_loss")
    return ops.reshape(out, ()) if single else out


def ctc_feasible(T: int, labels) -> bool:
    repeats = sum(1 for a, b in zip(labels[:-1], labels[1:]) if a == b)
    return len(labels) + repeats <= T


def _attend(P, s, keys, enc, key_mask, att_dim):
    """s (B, c); keys (B, T, A); enc (B, T, De) -> context (B, De)."""
    q = ops.matmul(s, P["decoder.att.q"])  # (B, A)
    B = q.shape[0]
    scores = ops.mul(ops.reshape(ops.matmul(keys, ops.reshape(q, (B, -1, 1))), (B, -1)), 1.0 / math.sqrt(att_dim))
    w = ops.softmax(ops.masked_fill(scores, ~key_mask), axis=-1)
    return ops.reshape(ops.matmul(ops.reshape(w, (B, 1, -1)), enc), (B, -1))


def las_loss(P, cfg: DecoderConfig, enc: Tensor, enc_lens, labels) -> Tensor:
    """Teacher-forced mean cross-entropy per utterance, (B,).  Targets end with eos."""
    B, T, De = enc.shape
    lab = _pad_labels(labels)
    U = lab.shape[1]
    prev = np.concatenate([np.full((B, 1), SPECIAL, dtype=np.int64), lab], axis=1)  # sos, y1..yU
    target = np.concatenate([lab, np.zeros((B, 1), dtype=np.int64)], axis=1)
    for i, y in enumerate(labels):
        target[i, len(y)] = SPECIAL  # eos
    step_mask = (np.arange(U + 1)[None, :] <= np.array([len(y) for y in labels])[:, None]).astype(np.float64)
    key_mask = np.arange(T)[None, :] < np.asarray(enc_lens)[:, None]
    with name_scope("decoder.las"):
        emb = ops.take(P["decoder.embed"], prev, axis=0)  # (B, U+1, c)
        keys = ops.matmul(enc, P["decoder.att.k"])
        hs = [Tensor(np.zeros((B, cfg.cell_dim))) for _ in range(cfg.n_layers)]
        cs = [Tensor(np.zeros((B, cfg.hidden_dim))) for _ in range(cfg.n_layers)]
        ctx = Tensor(np.zeros((B, De)))
        step_lp = []
        for t in range(U + 1):
            x = ops.concat([emb[:, t, :], ctx], axis=1)
            for layer in range(cfg.n_layers):
                p = f"decoder.lstm{layer}"
                xp = ops.add(ops.matmul(x, P[f"{p}.wx"]), P[f"{p}.b"])
                hs[layer], cs[layer] = _lstm_cell(xp, hs[layer], cs[layer], P, p, cfg.hidden_dim)
                x = hs[layer]
            ctx = _attend(P, x, keys, enc, key_mask, cfg.att_dim)
            logits = ops.add(ops.matmul(ops.concat([x, ctx], axis=1), P["decoder.out.w"]), P["decoder.out.b"])
            lp = ops.log_softmax(logits, axis=-1)
            step_lp.append(ops.reshape(ops.take_along_axis(lp, target[:, t:t + 1], axis=-1), (B,)))
        nll = ops.neg(ops.stack(step_lp, axis=1))  # (B, U+1)
        return ops.div(ops.masked_sum(nll, step_mask, axis=1), step_mask.sum(axis=1))


def decoder_loss(P, cfg: DecoderConfig, enc: Tensor, enc_lens, labels) -> Tensor:
    """Per-utterance supervised loss (B,) for the configured decoder kind."""
    if cfg.kind == "rnnt":
        return rnnt_loss(P, cfg, enc, enc_lens, labels)
    if cfg.kind == "ctc":
        return ctc_loss(ctc_logprobs(P, enc), labels, enc_lens)
    return las_loss(P, cfg, enc, enc_lens, labels)


# ===================================================================== inference

@dataclass
class Hypothesis:
    tokens: tuple[int, ...]
    acoustic: float
    lm: float = 0.0
    combined: float = 0.0
    state: object = field(default=None, repr=False, compare=False)

    def sort_key(self):
        return (-self.combined, self.tokens)


def _log_softmax_np(z):
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def _sigmoid_np(v):
    return 0.5 * (1.0 + np.tanh(0.5 * v))


def _lstm_stack_step(W, cfg, x, state):
    """One step of the stacked LSTM on numpy vectors; state is a list of (h, c)."""
    new = []
    hd = cfg.hidden_dim
    for layer in range(cfg.n_layers):
        p = f"decoder.lstm{layer}"
        h, c = state[layer]
        g = x @ W[f"{p}.wx"] + W[f"{p}.b"] + h @ W[f"{p}.wh"]
        i = _sigmoid_np(g[:hd])
        f = _sigmoid_np(g[hd:2 * hd])
        cand = np.tanh(g[2 * hd:3 * hd])
        o = _sigmoid_np(g[3 * hd:])
        c = f * c + i * cand
        h = o * np.tanh(c)
        if f"{p}.proj" in W:
            h = h @ W[f"{p}.proj"]
        new.append((h, c))
        x = h
    return x, new


def _zero_state(cfg):
    return [(np.zeros(cfg.cell_dim), np.zeros(cfg.hidden_dim)) for _ in range(cfg.n_layers)]


class _Fusion:
    """Adapter around an optional fusion config: tracks LM scores per prefix."""

    def __init__(self, fusion):
        self.f = fusion
        self.lam = 0.0 if fusion is None else float(fusion.lam)
        self.bonus = 0.0 if fusion is None else float(fusion.length_bonus)
        self._cache: dict[tuple[int, ...], float] = {(): 0.0}

    def lm(self, tokens: tuple[int, ...]) -> float:
        """LM log-prob of the prefix (no end-of-sentence term)."""
        if self.f is None:
            return 0.0
        got = self._cache.get(tokens)
        if got is None:
            got = self.lm(tokens[:-1]) + self.f.next_logprob(tokens[:-1], tokens[-1])
            self._cache[tokens] = got
        return got

    def final_lm(self, tokens) -> float:
        if self.f is None:
            return 0.0
        return self.lm(tokens) + self.f.eos_logprob(tokens)

    def combine(self, acoustic, lm, n):
        return acoustic + self.lam * lm + self.bonus * n

    def finish(self, tokens, acoustic) -> Hypothesis:
        acoustic = float(acoustic)
        lm = float(self.final_lm(tokens))
        return Hypothesis(tokens, acoustic, lm, self.combine(acoustic, lm, len(tokens)))


def _prune(items, k):
    """items: list of (combined, tokens, payload). Keep best k by (-score, tokens)."""
    items.sort(key=lambda it: (-it[0], it[1]))
    return items[:k]


def decode_greedy_ctc(logp) -> list[int]:
    best = np.argmax(np.asarray(logp.data if isinstance(logp, Tensor) else logp), axis=-1)
    out, prev = [], None
    for k in best:
        k = int(k)
        if k != prev and k != SPECIAL:
            out.append(k)
        prev = k
    return out


def beam_ctc(logp, beam_size: int, fusion=None) -> list[Hypothesis]:
    """Prefix beam search over CTC frame posteriors (T, V+1)."""
    logp = np.asarray(logp)
    T, K = logp.shape
    fz = _Fusion(fusion)
    ninf = -np.inf
    beams = {(): (0.0, ninf)}  # prefix -> (log p ending in blank, log p ending in non-blank)
    for t in range(T):
        nxt: dict[tuple, list] = {}

        def acc(prefix, pb, pnb):
            cur = nxt.setdefault(prefix, [ninf, ninf])
            cur[0] = np.logaddexp(cur[0], pb)
            cur[1] = np.logaddexp(cur[1], pnb)

        for prefix, (pb, pnb) in beams.items():
            tot = np.logaddexp(pb, pnb)
            acc(prefix, tot + logp[t, SPECIAL], ninf)
            last = prefix[-1] if prefix else None
            for k in range(1, K):
                p = logp[t, k]
                if k == last:
                    acc(prefix, ninf, pnb + p)
                    acc(prefix + (k,), ninf, pb + p)
                else:
                    acc(prefix + (k,), ninf, tot + p)
        scored = []
        for prefix, (pb, pnb) in nxt.items():
            ac = float(np.logaddexp(pb, pnb))
            scored.append((fz.combine(ac, fz.lm(prefix), len(prefix)), prefix, (pb, pnb)))
        beams = {pre: tuple(v) for _, pre, v in _prune(scored, beam_size)}
    hyps = [fz.finish(pre, float(np.logaddexp(pb, pnb))) for pre, (pb, pnb) in beams.items()]
    hyps.sort(key=Hypothesis.sort_key)
    return hyps


class RnntScorer:
    """Numpy RNN-T scorer with a prefix -> prediction-network cache."""

    def __init__(self, W, cfg: DecoderConfig, enc: np.ndarray):
        self.W = W
        self.cfg = cfg
        self.enc_proj = enc @ W["decoder.joint.enc"]
        self._pred: dict[tuple[int, ...], tuple[np.ndarray, list]] = {}

    def pred(self, tokens: tuple[int, ...]):
        got = self._pred.get(tokens)
        if got is None:
            if tokens:
                _, state = self.pred(tokens[:-1])
                last = tokens[-1]
            else:
                state, last = _zero_state(self.cfg), SPECIAL
            out, state = _lstm_stack_step(self.W, self.cfg, self.W["decoder.embed"][last], state)
            got = (out @ self.W["decoder.joint.pred"] + self.W["decoder.joint.b"], state)
            self._pred[tokens] = got
        return got

    def logprobs(self, t: int, tokens: tuple[int, ...]) -> np.ndarray:
        z = np.tanh(self.enc_proj[t] + self.pred(tokens)[0])
        return _log_softmax_np(z @ self.W["decoder.joint.out.w"] + self.W["decoder.joint.out.b"])


def greedy_rnnt(W, cfg: DecoderConfig, enc: np.ndarray, max_symbols: int = MAX_SYMBOLS_PER_FRAME) -> list[int]:
    sc = RnntScorer(W, cfg, enc)
    y: tuple[int, ...] = ()
    for t in range(enc.shape[0]):
        for _ in range(max_symbols):
            k = int(np.argmax(sc.logprobs(t, y)))
            if k == SPECIAL:
                break
            y = y + (k,)
    return list(y)


def beam_rnnt(W, cfg: DecoderConfig, enc: np.ndarray, beam_size: int, fusion=None, max_symbols: int | None = None):
    """Time-synchronous RNN-T beam search.

    Within a frame, each expansion step pools "end the frame" (blank) and
    "emit a label" candidates, merges identical prefixes by log-sum-exp and
    keeps the best ``beam_size``.  At most ``max_symbols`` labels are
    emitted per frame, the same cap greedy decoding uses, so a beam of one
    reproduces greedy decoding.
    """
    cap = MAX_SYMBOLS_PER_FRAME if max_symbols is None else max_symbols
    sc = RnntScorer(W, cfg, enc)
    fz = _Fusion(fusion)
    K = W["decoder.joint.out.b"].shape[0]
    beams: dict[tuple, float] = {(): 0.0}
    for t in range(enc.shape[0]):
        ended: dict[tuple, float] = {}
        frontier = beams
        for k in range(cap + 1):
            end_pool: dict[tuple, float] = {}
            cont_pool: dict[tuple, float] = {}
            for y, ac in frontier.items():
                lp = sc.logprobs(t, y)
                end_pool[y] = np.logaddexp(end_pool.get(y, -np.inf), ac + lp[SPECIAL])
                if k < cap:
                    for v in range(1, K):
                        z = y + (v,)
                        cont_pool[z] = np.logaddexp(cont_pool.get(z, -np.inf), ac + lp[v])
            cands = [(fz.combine(ac, fz.lm(y), len(y)), y, (0, ac)) for y, ac in end_pool.items()]
            cands += [(fz.combine(ac, fz.lm(y), len(y)), y, (1, ac)) for y, ac in cont_pool.items()]
            cands.sort(key=lambda it: (-it[0], it[1], it[2][0]))
            frontier = {}
            for _, y, (kind, ac) in cands[:beam_size]:
                if kind == 0:
                    ended[y] = float(np.logaddexp(ended.get(y, -np.inf), ac))
                else:
                    frontier[y] = float(ac)
            if not frontier:
                break
        scored = [(fz.combine(ac, fz.lm(y), len(y)), y, ac) for y, ac in ended.items()]
        beams = {y: ac for _, y, ac in _prune(scored, beam_size)}
    hyps = [fz.finish(y, ac) for y, ac in beams.items()]
    hyps.sort(key=Hypothesis.sort_key)
    return hyps


def beam_las(W, cfg: DecoderConfig, enc: np.ndarray, beam_size: int, fusion=None, max_steps: int | None = None):
    """Label-synchronous LAS beam search; eos ends a hypothesis and is never stored."""
    T = enc.shape[0]
    max_steps = 2 * T + 10 if max_steps is None else max_steps
    fz = _Fusion(fusion)
    keys = enc @ W["decoder.att.k"]
    scale = 1.0 / math.sqrt(cfg.att_dim)

    def step(tokens, state, ctx):
        last = tokens[-1] if tokens else SPECIAL
        x = np.concatenate([W["decoder.embed"][last], ctx])
        out, state = _lstm_stack_step(W, cfg, x, state)
        s = (keys @ (out @ W["decoder.att.q"])) * scale
        a = np.exp(s - s.max())
        a /= a.sum()
        ctx = a @ enc
        lp = _log_softmax_np(np.concatenate([out, ctx]) @ W["decoder.out.w"] + W["decoder.out.b"])
        return lp, state, ctx

    live = [((), 0.0, _zero_state(cfg), np.zeros(enc.shape[1]))]
    finished: list[Hypothesis] = []
    for n in range(max_steps):
        cands = []
        for tokens, ac, state, ctx in live:
            lp, st, cx = step(tokens, state, ctx)
            hyp = fz.finish(tokens, ac + lp[SPECIAL])
            cands.append((hyp.combined, tokens, ("end", hyp)))
            if n < max_steps - 1:
                for v in range(1, lp.shape[0]):
                    z = tokens + (v,)
                    a = ac + lp[v]
                    cands.append((fz.combine(a, fz.lm(z), len(z)), z, ("go", a, st, cx)))
        live = []
        for _, z, payload in _prune(cands, beam_size):
            if payload[0] == "end":
                finished.append(payload[1])
            else:
                live.append((z, payload[1], payload[2], payload[3]))
        if not live or (len(finished) >= beam_size and min(
            h.combined for h in sorted(finished, key=Hypothesis.sort_key)[:beam_size]
        ) > max(fz.combine(a, fz.lm(z), len(z)) for z, a, _, _ in live)):
            break
    finished.sort(key=Hypothesis.sort_key)
    return finished[:beam_size]


def decode_beam(W, cfg: DecoderConfig, enc: np.ndarray, beam_size: int, fusion=None, max_symbols=None):
    """Ranked hypotheses for one utterance's encoder output (T', De)."""
    if beam_size < 1:
        raise ValueError("beam_size must be >= 1")
    enc = np.asarray(enc)
    if cfg.kind == "rnnt":
        return beam_rnnt(W, cfg, enc, beam_size, fusion, max_symbols)
    if cfg.kind == "ctc":
        lp = _log_softmax_np(enc @ W["decoder.ctc.w"] + W["decoder.ctc.b"])
        return beam_ctc(lp, beam_size, fusion)
    return beam_las(W, cfg, enc, beam_size, fusion)


def decode_greedy(W, cfg: DecoderConfig, enc: np.ndarray, max_symbols: int = MAX_SYMBOLS_PER_FRAME) -> list[int]:
    enc = np.asarray(enc)
    if cfg.kind == "rnnt":
        return greedy_rnnt(W, cfg, enc, max_symbols)
    if cfg.kind == "ctc":
        return decode_greedy_ctc(enc @ W["decoder.ctc.w"] + W["decoder.ctc.b"])
    hyps = beam_las(W, cfg, enc, 1)
    return list(hyps[0].tokens) if hyps else []
