"""Model specification, analytic parameter accounting, initialization and persistence."""

from __future__ import annotations

import configparser
import dataclasses
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import GROUPS, Parameter, Tensor
from .autodiff import checkpoint as ckpt
from .bestrq import QuantizerConfig, RandomQuantizer, make_quantizer
from .decoders import PAPER_RNNT, DecoderConfig, decoder_param_shapes
from .encoder import PAPER_ENCODER, EncoderConfig, adapter_param_shapes, encoder_param_shapes
from .frontend import NormalizationStats
from .rng import derive_seed, generator
from .vocab import Vocabulary


@dataclass(frozen=True)
class ModelSpec:
    encoder: EncoderConfig = EncoderConfig()
    decoder: DecoderConfig | None = DecoderConfig()
    vocab_size: int = 8
    quantizer: QuantizerConfig | None = None
    pretrain_head: bool = False


PAPER_SPEC = ModelSpec(encoder=PAPER_ENCODER, decoder=PAPER_RNNT, vocab_size=4096)


def param_shapes(spec: ModelSpec) -> list[tuple[str, tuple, str, str]]:
    """(name, shape, group, init) for every parameter of ``spec``, in canonical order."""
    e = spec.encoder
    out = [
        ("frontend.mean", (e.n_mels,), "frontend-stats", "zeros"),
        ("frontend.std", (e.n_mels,), "frontend-stats", "ones"),
    ]
    out += encoder_param_shapes(e)
    out += adapter_param_shapes(e)
    if spec.decoder is not None:
        out += decoder_param_shapes(spec.decoder, e.output_dim, spec.vocab_size)
    if spec.quantizer is not None:
        q = spec.quantizer
        out += [
            ("quantizer.projection", (e.n_mels, q.proj_dim), "quantizer", "quantizer"),
            ("quantizer.codebook", (q.codebook_size, q.proj_dim), "quantizer", "quantizer"),
        ]
        if spec.pretrain_head:
            out += [
                ("bestrq.head.w", (e.output_dim, q.codebook_size), "decoder", "normal"),
                ("bestrq.head.b", (q.codebook_size,), "decoder", "zeros"),
            ]
    return out


def count_params(spec: ModelSpec) -> dict[str, int]:
    """Per-group parameter counts from shapes alone, plus ``total``."""
    counts = {g: 0 for g in GROUPS}
    for _, shape, group, _ in param_shapes(spec):
        counts[group] += int(np.prod(shape, dtype=np.int64))
    counts["total"] = sum(counts[g] for g in GROUPS)
    return counts


def group_of(name: str) -> str:
    if name.startswith("encoder."):
        return "encoder"
    if name.startswith("adapter."):
        return "adapter"
    if name.startswith(("decoder.", "bestrq.")):
        return "decoder"
    if name.startswith("quantizer."):
        return "quantizer"
    if name.startswith("frontend."):
        return "frontend-stats"
    raise ValueError(f"cannot infer parameter group for {name!r}")


def _init_value(name, shape, kind, seed):
    if kind == "zeros":
        return np.zeros(shape)
    if kind == "ones":
        return np.ones(shape)
    if kind == "lstm_bias":
        b = np.zeros(shape)
        h = shape[0] // 4
        b[h:2 * h] = 1.0  # forget gate
        return b
    rng = generator(seed, "init", name)
    if kind == "embed":
        return rng.standard_normal(shape)
    if len(shape) == 4:
        fan_in = shape[1] * shape[2] * shape[3]
    else:
        fan_in = shape[0]
    return rng.standard_normal(shape) / np.sqrt(fan_in)


@dataclass
class Model:
    spec: ModelSpec
    params: dict[str, Parameter]
    vocab: Vocabulary | None = None
    ema: dict[str, np.ndarray] = field(default_factory=dict)

    # ----------------------------------------------------------- construction
    @classmethod
    def init(cls, spec: ModelSpec, seed: int, vocab: Vocabulary | None = None) -> "Model":
        if vocab is not None and vocab.size != spec.vocab_size:
            raise ValueError("vocabulary size does not match the model spec")
        params = {}
        quant = None
        if spec.quantizer is not None:
            quant = make_quantizer(spec.encoder.n_mels, spec.quantizer, derive_seed(seed, "bestrq"))
        for name, shape, group, kind in param_shapes(spec):
            if kind == "quantizer":
                value = quant.projection if name.endswith("projection") else quant.codebook
            else:
                value = _init_value(name, shape, kind, seed)
            params[name] = Parameter(name, value, group)
        return cls(spec, params, vocab)

    def derive(self, spec: ModelSpec, seed: int) -> "Model":
        """A model for ``spec`` that reuses every same-named, same-shaped weight of this one.

        New weights are freshly initialized from ``seed``; weights absent from
        ``spec`` (e.g. the pretraining head when an ASR decoder is attached)
        are dropped along with their EMA shadows.
        """
        fresh = Model.init(spec, seed, self.vocab if self.vocab is None or self.vocab.size == spec.vocab_size else None)
        for name, p in fresh.params.items():
            old = self.params.get(name)
            if old is not None and old.value.shape == p.value.shape:
                fresh.params[name] = Parameter(name, old.value.copy(), p.group)
        fresh.ema = {k: v.copy() for k, v in self.ema.items() if k in fresh.params}
        return fresh

    # ----------------------------------------------------------------- access
    def weights(self) -> dict[str, np.ndarray]:
        return {n: p.value for n, p in self.params.items()}

    def tensors(self, selection=None) -> dict[str, Tensor]:
        """Tensors for a forward pass; only trainable params in ``selection`` track gradients."""
        sel = set(selection or ())
        return {n: p.tensor(requires_grad=p.trainable and p.group in sel) for n, p in self.params.items()}

    def group_counts(self) -> dict[str, int]:
        counts = {g: 0 for g in GROUPS}
        for p in self.params.values():
            counts[p.group] += p.size
        counts["total"] = sum(counts[g] for g in GROUPS)
        return counts

    def quantizer(self) -> RandomQuantizer:
        q = self.spec.quantizer
        if q is None:
            raise ValueError("model has no quantizer")
        return RandomQuantizer(self.params["quantizer.projection"].value, self.params["quantizer.codebook"].value, q.normalize)

    def norm_stats(self) -> NormalizationStats:
        return NormalizationStats(self.params["frontend.mean"].value, self.params["frontend.std"].value)

    def set_norm_stats(self, stats: NormalizationStats) -> None:
        self.params["frontend.mean"] = Parameter("frontend.mean", np.asarray(stats.mean, dtype=np.float64), "frontend-stats")
        self.params["frontend.std"] = Parameter("frontend.std", np.asarray(stats.std, dtype=np.float64), "frontend-stats")

    def eval_weights(self) -> dict[str, np.ndarray]:
        """Weights for inference: EMA shadows where present."""
        w = self.weights()
        w.update({k: v for k, v in self.ema.items() if k in w})
        return w

    # ------------------------------------------------------------ persistence
    def state(self) -> dict[str, np.ndarray]:
        out = {n: p.value for n, p in self.params.items()}
        out.update({f"ema.{n}": v for n, v in self.ema.items()})
        return out

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        ckpt.save(path, self.state())
        path.with_suffix(".conf").write_text(spec_to_conf(self.spec, self.vocab), encoding="utf-8")
        return path

    @classmethod
    def load(cls, path: str | Path) -> "Model":
        path = Path(path)
        spec, vocab = spec_from_conf(path.with_suffix(".conf").read_text(encoding="utf-8"))
        tensors = ckpt.load(path)
        expected = {n: shape for n, shape, _, _ in param_shapes(spec)}
        params, ema = {}, {}
        for name, value in tensors.items():
            if name.startswith("ema."):
                ema[name[4:]] = value
                continue
            if name not in expected:
                raise ckpt.CheckpointError(f"unexpected tensor {name!r} for this model spec")
            if tuple(value.shape) != tuple(expected[name]):
                raise ckpt.CheckpointError(f"shape mismatch for {name}: {value.shape} vs {expected[name]}")
            params[name] = Parameter(name, value, group_of(name))
        missing = set(expected) - set(params)
        if missing:
            raise ckpt.CheckpointError(f"checkpoint lacks {sorted(missing)[:3]}")
        return cls(spec, {n: params[n] for n in expected}, vocab, ema)


def _section(cfg, obj):
    out = {}
    for f in dataclasses.fields(obj):
        v = getattr(obj, f.name)
        out[f.name] = "none" if v is None else str(v).lower() if isinstance(v, bool) else str(v)
    return out


def spec_to_conf(spec: ModelSpec, vocab: Vocabulary | None = None) -> str:
    cp = configparser.ConfigParser(interpolation=None)
    cp["model"] = {
        "vocab_size": str(spec.vocab_size),
        "pretrain_head": str(spec.pretrain_head).lower(),
        "vocab": json.dumps(vocab.pieces if vocab else None, ensure_ascii=False),
    }
    cp["encoder"] = _section(cp, spec.encoder)
    if spec.decoder is not None:
        cp["decoder"] = _section(cp, spec.decoder)
    if spec.quantizer is not None:
        cp["quantizer"] = _section(cp, spec.quantizer)
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def _coerce(cls, items):
    kwargs = {}
    types = {f.name: f.type for f in dataclasses.fields(cls)}
    for k, v in items.items():
        if k not in types:
            raise ValueError(f"unknown key {k!r} for {cls.__name__}")
        t = str(types[k])
        if v == "none":
            kwargs[k] = None
        elif "bool" in t:
            kwargs[k] = v in ("true", "1", "yes", "on")
        elif "int" in t:
            kwargs[k] = int(v)
        elif "float" in t:
            kwargs[k] = float(v)
        else:
            kwargs[k] = v
    return cls(**kwargs)


def spec_from_sections(sections) -> ModelSpec:
    """Build a ModelSpec from mapping-like ``[model]``, ``[encoder]``, ``[decoder]``, ``[quantizer]`` sections."""
    m = dict(sections.get("model", {}))
    m.pop("vocab", None)
    enc = _coerce(EncoderConfig, dict(sections.get("encoder", {})))
    dec = _coerce(DecoderConfig, dict(sections["decoder"])) if "decoder" in sections else None
    q = _coerce(QuantizerConfig, dict(sections["quantizer"])) if "quantizer" in sections else None
    return ModelSpec(
        encoder=enc,
        decoder=dec,
        vocab_size=int(m.get("vocab_size", 8)),
        quantizer=q,
        pretrain_head=m.get("pretrain_head", "false") in ("true", "1", "yes", "on"),
    )


def spec_from_conf(text: str) -> tuple[ModelSpec, Vocabulary | None]:
    cp = configparser.ConfigParser(interpolation=None)
    cp.read_string(text)
    sections = {s: dict(cp[s]) for s in cp.sections()}
    pieces = json.loads(sections.get("model", {}).get("vocab", "null"))
    return spec_from_sections(sections), (Vocabulary(pieces) if pieces is not None else None)
