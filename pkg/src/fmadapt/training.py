"""Optimizer, schedules, regimes, joint (JUST) loss, noisy-student labeling and the stage trainer."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Parameter, Tensor, grad, no_grad, ops
from .bestrq import MaskSpec, apply_mask, bestrq_loss, downsample_targets, head_logits, quantize
from .corpus import Manifest, UtteranceRecord, ceil_count, load_features
from .decoders import decode_beam, decoder_loss
from .encoder import encode
from .frontend import SpecAugmentPolicy, spec_augment
from .model import Model, ModelSpec, count_params
from .rng import derive_seed, generator

REGIMES: dict[str, tuple[str, ...]] = {
    "full_model": ("encoder", "adapter", "decoder"),
    "decoder_only": ("decoder",),
    "adapter_only": ("adapter",),
    "adapter_plus_decoder": ("adapter", "decoder"),
    "pretrain": ("encoder", "decoder"),
}
REGIME_ALIASES = {"E1": "full_model", "E2": "decoder_only", "E3": "adapter_only", "E4": "adapter_plus_decoder"}


def regime_groups(regime: str) -> tuple[str, ...]:
    regime = REGIME_ALIASES.get(regime, regime)
    if regime not in REGIMES:
        raise ValueError(f"unknown regime {regime!r}; choose from {sorted(REGIMES)}")
    return REGIMES[regime]


def trainable_count(spec: ModelSpec, regime: str) -> int:
    counts = count_params(spec)
    return sum(counts[g] for g in regime_groups(regime))


class TrainingDiverged(RuntimeError):
    def __init__(self, step: int, loss: float, detail: str = ""):
        super().__init__(f"training diverged at step {step}: loss {loss}" + (f" ({detail})" if detail else ""))
        self.step = step


# ===================================================================== schedule

@dataclass(frozen=True)
class LrSchedule:
    peak: float = 3e-4
    warmup_steps: int = 10000

    def __post_init__(self):
        if self.peak <= 0 or self.warmup_steps < 1:
            raise ValueError("need peak > 0 and warmup_steps >= 1")


def lr_at(schedule: LrSchedule, step: int) -> float:
    """Linear warmup then inverse square-root decay; steps count from 1."""
    if step < 1:
        raise ValueError("step must be >= 1")
    w = schedule.warmup_steps
    return schedule.peak * min(step / w, math.sqrt(w / step))


# ===================================================================== Adafactor

@dataclass(frozen=True)
class AdafactorConfig:
    beta1: float = 0.9
    beta2: float = 0.99
    eps: float = 1e-30
    clip_threshold: float = 1.0


@dataclass
class AdafactorState:
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    row: dict[str, np.ndarray] = field(default_factory=dict)
    col: dict[str, np.ndarray] = field(default_factory=dict)
    full: dict[str, np.ndarray] = field(default_factory=dict)


def _second_moment(name, g2, state, b2, t):
    """Bias-corrected second-moment estimate, factored over the last two axes for rank >= 2."""
    corr = 1.0 - b2 ** t
    if g2.ndim >= 2:
        r = state.row.get(name, np.zeros(g2.shape[:-1]))
        c = state.col.get(name, np.zeros(g2.shape[:-2] + g2.shape[-1:]))
        r = b2 * r + (1 - b2) * g2.mean(axis=-1)
        c = b2 * c + (1 - b2) * g2.mean(axis=-2)
        state.row[name], state.col[name] = r, c
        rh, ch = r / corr, c / corr
        return rh[..., :, None] * ch[..., None, :] / rh.mean(axis=-1)[..., None, None]
    v = state.full.get(name, np.zeros(g2.shape))
    v = b2 * v + (1 - b2) * g2
    state.full[name] = v
    return v / corr


def adafactor_step(params, grads, state: AdafactorState, lr: float, selection, cfg: AdafactorConfig = AdafactorConfig()):
    """One update of every selected trainable parameter; others are left untouched.

    ``params`` maps names to Parameters and is updated in place with fresh
    value arrays.  ``grads`` must cover exactly the selected trainable names.
    """
    selected = {n for n, p in params.items() if p.trainable and p.group in set(selection)}
    if set(grads) != selected:
        raise ValueError(f"gradients for {sorted(set(grads) ^ selected)[:3]} do not match the selection")
    state.step += 1
    t = state.step
    for name in sorted(selected):
        p = params[name]
        g = np.asarray(grads[name], dtype=np.float64)
        if g.shape != p.value.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.value.shape} for {name}")
        vhat = _second_moment(name, g * g + cfg.eps, state, cfg.beta2, t)
        u = g / np.sqrt(vhat)
        rms = math.sqrt(float(np.mean(u * u))) if u.size else 0.0
        u = u / max(1.0, rms / cfg.clip_threshold)
        m = cfg.beta1 * state.m.get(name, np.zeros_like(g)) + (1 - cfg.beta1) * u
        state.m[name] = m
        p.value = p.value - lr * m
    return params, state


# ===================================================================== EMA

@dataclass
class EmaState:
    decay: float
    shadow: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= self.decay < 1.0:
            raise ValueError("decay must be in [0, 1)")


def ema_update(state: EmaState, params: dict[str, np.ndarray]) -> EmaState:
    """shadow <- decay * shadow + (1 - decay) * value for every tracked name."""
    d = state.decay
    for name in state.shadow:
        state.shadow[name] = d * state.shadow[name] + (1.0 - d) * params[name]
    return state


# ===================================================================== data

@dataclass
class Utterance:
    id: str
    feats: np.ndarray  # normalized (T, n_mels)
    labels: list[int] | None
    transcript: str | None


def prepare(manifest: Manifest, model: Model, with_labels: bool = True) -> list[Utterance]:
    stats = model.norm_stats()
    out = []
    for r in manifest.records:
        x = stats.apply(load_features(r, manifest.base_dir))
        labels = None
        if with_labels and r.transcript is not None:
            if model.vocab is None:
                raise ValueError("model has no vocabulary for supervised data")
            labels = model.vocab.tokenize(r.transcript)
        out.append(Utterance(r.id, x, labels, r.transcript))
    return out


def pad(feats: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    T = max(f.shape[0] for f in feats)
    out = np.zeros((len(feats), T, feats[0].shape[1]))
    for i, f in enumerate(feats):
        out[i, : len(f)] = f
    return out, np.array([len(f) for f in feats], dtype=np.int64)


@dataclass
class SupervisedBatch:
    feats: np.ndarray
    lengths: np.ndarray
    labels: list[list[int]]


@dataclass
class MaskedBatch:
    feats: np.ndarray  # masked, padded
    lengths: np.ndarray
    targets: np.ndarray  # (B, T') codebook ids at the encoder rate
    mask: np.ndarray  # (B, T') masked and valid


def supervised_batch(utts: list[Utterance], specaug: SpecAugmentPolicy | None = None, seed: int = 0) -> SupervisedBatch:
    feats = []
    for u in utts:
        x = u.feats
        if specaug is not None:
            x = spec_augment(x, specaug, derive_seed(seed, "specaug", u.id))
        feats.append(x)
    x, lens = pad(feats)
    return SupervisedBatch(x, lens, [u.labels for u in utts])


def masked_batch(utts: list[Utterance], model: Model, mask_spec: MaskSpec, seed: int) -> MaskedBatch:
    q = model.quantizer()
    feats, targets, masks = [], [], []
    for u in utts:
        labels = quantize(u.feats, q)
        x, m = apply_mask(u.feats, mask_spec, derive_seed(seed, "mask", u.id))
        lab40, m40 = downsample_targets(labels, m)
        feats.append(x)
        targets.append(lab40)
        masks.append(m40)
    x, lens = pad(feats)
    T2 = max(len(t) for t in targets)
    tg = np.zeros((len(utts), T2), dtype=np.int64)
    mk = np.zeros((len(utts), T2), dtype=bool)
    for i, (t, m) in enumerate(zip(targets, masks)):
        tg[i, : len(t)] = t
        mk[i, : len(m)] = m
    return MaskedBatch(x, lens, tg, mk)


# ===================================================================== losses

def supervised_loss(P, spec: ModelSpec, batch: SupervisedBatch) -> Tensor:
    enc, lens = encode(P, batch.feats, batch.lengths, spec.encoder, train_mode=True)
    return ops.mean(decoder_loss(P, spec.decoder, enc, lens, batch.labels))


def pretrain_loss(P, spec: ModelSpec, batch: MaskedBatch) -> Tensor:
    enc, _ = encode(P, batch.feats, batch.lengths, spec.encoder, train_mode=True)
    return bestrq_loss(head_logits(P, enc), batch.targets, batch.mask)


@dataclass(frozen=True)
class JustConfig:
    alpha: float = 0.3
    supervised_per_batch: int = 4
    unsupervised_per_batch: int = 4

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.supervised_per_batch < 0 or self.unsupervised_per_batch < 0:
            raise ValueError("mix counts must be >= 0")
        if self.supervised_per_batch == 0 and self.unsupervised_per_batch == 0:
            raise ValueError("mix counts cannot both be zero")


def just_loss(P, spec: ModelSpec, sup: SupervisedBatch | None, unsup: MaskedBatch | None, cfg: JustConfig) -> Tensor:
    """Supervised decoder loss plus alpha times the masked-prediction loss on unlabeled audio."""
    has_sup = sup is not None and len(sup.labels) > 0
    has_unsup = unsup is not None and len(unsup.lengths) > 0
    if not has_sup and not has_unsup:
        raise ValueError("both batches are empty")
    total = supervised_loss(P, spec, sup) if has_sup else Tensor(np.array(0.0))
    if has_unsup and cfg.alpha != 0.0:
        total = ops.add(total, ops.mul(pretrain_loss(P, spec, unsup), cfg.alpha))
    return total


# ===================================================================== trainer

@dataclass(frozen=True)
class TrainConfig:
    steps: int = 50
    batch_size: int = 8
    lr: LrSchedule = LrSchedule(peak=3e-3, warmup_steps=10)
    adafactor: AdafactorConfig = AdafactorConfig()
    ema_decay: float | None = None
    specaug: SpecAugmentPolicy | None = None
    mask: MaskSpec = MaskSpec(mask_prob=0.05, span_frames=4)
    just: JustConfig = JustConfig()


@dataclass
class StageResult:
    model: Model
    metrics: list[dict]
    trainable: int


def _pick(pool, k, rng):
    if not pool or k == 0:
        return []
    if k >= len(pool):
        return [pool[i] for i in rng.permutation(len(pool))]
    return [pool[i] for i in rng.choice(len(pool), size=k, replace=False)]


def train_stage(
    model: Model,
    objective: str,
    regime: str,
    cfg: TrainConfig,
    seed: int,
    supervised: list[Utterance] = (),
    unsupervised: list[Utterance] = (),
) -> StageResult:
    """Train ``model`` in place for ``cfg.steps`` steps and return it with per-step metrics.

    ``objective`` is "supervised", "pretrain" or "just".  Only groups of the
    regime are updated; EMA shadows (when enabled) exist only for them.
    Training starts from the model's inference weights: shadows left by an
    earlier stage are folded into the parameters first.
    """
    for n, v in model.ema.items():
        model.params[n] = Parameter(n, v.copy(), model.params[n].group)
    model.ema = {}
    groups = regime_groups(regime)
    selected = [n for n, p in model.params.items() if p.trainable and p.group in groups]
    trainable = sum(model.params[n].size for n in selected)
    state = AdafactorState()
    ema = None
    if cfg.ema_decay is not None:
        ema = EmaState(cfg.ema_decay, {n: model.params[n].value.copy() for n in selected})
    supervised, unsupervised = list(supervised), list(unsupervised)
    if objective == "supervised" and not supervised:
        raise ValueError("supervised objective needs labeled utterances")
    if objective == "pretrain" and not unsupervised:
        raise ValueError("pretrain objective needs utterances")
    metrics = []
    for step in range(1, cfg.steps + 1):
        t0 = time.perf_counter()
        rng = generator(seed, "batch", step)
        P = model.tensors(groups)
        try:
            if objective == "supervised":
                loss = supervised_loss(P, model.spec, supervised_batch(_pick(supervised, cfg.batch_size, rng), cfg.specaug, derive_seed(seed, step)))
            elif objective == "pretrain":
                loss = pretrain_loss(P, model.spec, masked_batch(_pick(unsupervised, cfg.batch_size, rng), model, cfg.mask, derive_seed(seed, step)))
            elif objective == "just":
                s = _pick(supervised, cfg.just.supervised_per_batch, rng)
                u = _pick(unsupervised, cfg.just.unsupervised_per_batch, rng)
                sb = supervised_batch(s, cfg.specaug, derive_seed(seed, step)) if s else None
                ub = masked_batch(u, model, cfg.mask, derive_seed(seed, step)) if u else None
                loss = just_loss(P, model.spec, sb, ub, cfg.just)
            else:
                raise ValueError(f"unknown objective {objective!r}")
            value = float(loss.data)
            if not math.isfinite(value):
                raise TrainingDiverged(step, value)
            g = grad(loss, wrt=[P[n] for n in selected])
        except FloatingPointError as e:
            raise TrainingDiverged(step, math.nan, str(e)) from None
        grads = {n: g[id(P[n])] for n in selected}
        bad = [n for n, v in grads.items() if not np.all(np.isfinite(v))]
        if bad:
            raise TrainingDiverged(step, value, f"non-finite gradient for {bad[0]}")
        lr = lr_at(cfg.lr, step)
        adafactor_step(model.params, grads, state, lr, groups, cfg.adafactor)
        if ema is not None:
            ema_update(ema, {n: model.params[n].value for n in selected})
        rec = {"step": step, "loss": value, "lr": lr, "wall_ms": round(1000 * (time.perf_counter() - t0), 3)}
        metrics.append(rec)
    if ema is not None:
        model.ema = dict(ema.shadow)
    return StageResult(model, metrics, trainable)


# ===================================================================== inference

def transcribe(model: Model, utts: list[Utterance], beam_size: int = 4, fusion=None, batch_size: int = 16):
    """Top hypothesis per utterance (EMA weights when available)."""
    W = model.eval_weights()
    P = {n: Tensor(v) for n, v in W.items()}
    hyps = []
    with no_grad():
        for i in range(0, len(utts), batch_size):
            chunk = utts[i:i + batch_size]
            x, lens = pad([u.feats for u in chunk])
            enc, out_len = encode(P, x, lens, model.spec.encoder)
            for j in range(len(chunk)):
                ranked = decode_beam(W, model.spec.decoder, enc.data[j, : out_len[j]], beam_size, fusion)
                hyps.append(ranked[0] if ranked else None)
    return hyps


@dataclass(frozen=True)
class NstConfig:
    teacher: str = "teacher"
    confidence_threshold: float = 0.0
    data_ratio: float = 1.0
    seed: int = 0
    beam_size: int = 4

    def __post_init__(self):
        if not 0.0 < self.data_ratio <= 1.0:
            raise ValueError("data_ratio must be in (0, 1]")
        if self.confidence_threshold < 0:
            raise ValueError("confidence_threshold must be >= 0")


def nst_subsample(n: int, cfg: NstConfig) -> list[int]:
    """Indices of the ceil(ratio * n) records chosen by a seeded shuffle, in input order."""
    k = ceil_count(cfg.data_ratio, n)
    perm = generator(cfg.seed, "nst-subsample").permutation(n)
    return sorted(int(i) for i in perm[:k])


def hypothesis_confidence(h) -> float:
    """exp of the mean per-token combined log-prob (an empty hypothesis counts one token)."""
    return min(1.0, math.exp(h.combined / max(1, len(h.tokens))))


def nst_generate(teacher: Model, manifest: Manifest, cfg: NstConfig, fusion=None) -> Manifest:
    idx = nst_subsample(len(manifest), cfg)
    chosen = [manifest.records[i] for i in idx]
    utts = prepare(Manifest(chosen, [], manifest.base_dir), teacher, with_labels=False)
    hyps = transcribe(teacher, utts, cfg.beam_size, fusion)
    kept = []
    for rec, h in zip(chosen, hyps):
        conf = hypothesis_confidence(h)
        if conf >= cfg.confidence_threshold:
            kept.append(UtteranceRecord(
                id=rec.id,
                features=rec.features,
                audio=rec.audio,
                transcript=teacher.vocab.detokenize(h.tokens),
                domain=rec.domain,
                speaker_embeddings=rec.speaker_embeddings,
                supervision="pseudo",
                confidence=conf,
                teacher=cfg.teacher,
            ))
    note = (f"nst teacher={cfg.teacher} ratio={cfg.data_ratio!r} threshold={cfg.confidence_threshold!r} "
            f"transcribed={len(chosen)} kept={len(kept)}")
    return manifest.derive(kept, note)
