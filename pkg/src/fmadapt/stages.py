"""Config-driven stages: each one reads a stage config, writes artifacts and a report.

``report.json`` holds only deterministic content (WER, parameter counts,
record counts, config hash) so identical runs give identical bytes; wall
clock and throughput go to ``timing.json`` next to it.
"""

from __future__ import annotations

import dataclasses
import json
import time
from pathlib import Path

from .bestrq import MaskSpec, QuantizerConfig
from .config import Config, ConfigError, load_config
from .corpus import (
    Manifest,
    SyntheticTaskSpec,
    VerbalizationRules,
    ceil_count,
    corpus_wer,
    filter_single_speaker,
    filter_written_spoken,
    generate_synthetic_corpus,
    load_features,
)
from .decoders import PAPER_CTC, PAPER_LAS, PAPER_RNNT, DecoderConfig, decode_beam
from .autodiff import Tensor, no_grad
from .encoder import PAPER_ENCODER, EncoderConfig, encode
from .frontend import SpecAugmentPolicy, fit_normalization
from .lm import FusionConfig, NGramLm, train_lm
from .model import Model, ModelSpec, count_params, spec_from_sections
from .rng import derive_seed
from .training import (
    REGIME_ALIASES,
    REGIMES,
    JustConfig,
    LrSchedule,
    NstConfig,
    TrainConfig,
    nst_generate,
    prepare,
    regime_groups,
    train_stage,
    transcribe,
)
from .vocab import Vocabulary

STAGE_KINDS = (
    "gen-corpus", "pretrain", "finetune", "just", "nst", "adapt",
    "filter", "lm-train", "decode", "evaluate", "count-params",
)
KIND_ALIASES = {
    "just-train": "just", "pseudo-label": "nst", "filter-data": "filter",
}


# ===================================================================== helpers

class Context:
    def __init__(self, cfg: Config, out: Path, seed: int | None, oracle_decoder: bool):
        self.cfg = cfg
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.seed = int(seed if seed is not None else cfg.get("stage", "seed", 0, int))
        root = cfg.get("stage", "root", None)
        self.root = Path(root) if root else Path.cwd()
        self.oracle_decoder = oracle_decoder
        self.kind = KIND_ALIASES.get(cfg.get("stage", "kind"), cfg.get("stage", "kind"))
        if self.kind not in STAGE_KINDS:
            raise cfg.error(f"unknown stage kind {self.kind!r}", "stage", "kind")
        self.id = cfg.get("stage", "id", self.kind)
        self.timing: dict = {}

    def path(self, section, key, default=...):
        raw = self.cfg.get(section, key, default)
        if raw is None:
            return None
        p = Path(raw)
        p = p if p.is_absolute() else self.root / p
        return p

    def existing(self, section, key, default=...):
        p = self.path(section, key, default)
        if p is not None and not p.exists():
            raise self.cfg.error(f"[{section}] {key}: file {str(p)!r} does not exist", section, key)
        return p

    def manifests(self, key, required=True) -> Manifest | None:
        raw = self.cfg.get("data", key, None if not required else ...)
        if raw is None:
            return None
        merged = None
        for part in [p for p in raw.replace(",", " ").split() if p]:
            p = Path(part) if Path(part).is_absolute() else self.root / part
            if not p.exists():
                raise self.cfg.error(f"[data] {key}: manifest {part!r} does not exist", "data", key)
            m = Manifest.read(p)
            m = Manifest([dataclasses.replace(r, features=_abs(r.features, m.base_dir), audio=_abs(r.audio, m.base_dir))
                          for r in m.records], m.provenance, Path("/"))
            merged = m if merged is None else Manifest(merged.records + m.records, merged.provenance + m.provenance, Path("/"))
        return merged


def _abs(p, base):
    return None if p is None else str((Path(base) / p).resolve())


def _dataclass_from_section(cls, cfg: Config, section: str, base=None, skip=(), extra=()):
    """Dataclass ``cls`` with fields overridden by ``[section]``; unknown keys are errors."""
    base = base if base is not None else cls()
    fields = {f.name: str(f.type) for f in dataclasses.fields(cls)}
    values = {}
    for key, raw in cfg.section(section).items():
        if key in extra or key in skip:
            continue
        if key not in fields:
            raise cfg.error(f"[{section}] unknown key {key!r}", section, key)
        t = fields[key]
        if raw.strip().lower() == "none":
            values[key] = None
        elif "tuple" in t:
            values[key] = tuple(float(v) for v in cfg.get(section, key, kind=list))
        elif "bool" in t:
            values[key] = cfg.get(section, key, kind=bool)
        elif "int" in t and "float" not in t:
            values[key] = cfg.get(section, key, kind=int)
        elif "float" in t:
            values[key] = cfg.get(section, key, kind=float)
        else:
            values[key] = raw.strip()
    try:
        return dataclasses.replace(base, **values)
    except (TypeError, ValueError) as e:
        raise cfg.error(f"[{section}]: {e}", section) from None


def _vocab(ctx: Context) -> Vocabulary | None:
    p = ctx.path("model", "vocab", None)
    if p is None:
        return None
    if not p.exists():
        raise ctx.cfg.error(f"[model] vocab: file {str(p)!r} does not exist", "model", "vocab")
    return Vocabulary.from_file(p)


def _base_model(ctx: Context) -> Model:
    init = ctx.existing("model", "init_from", None)
    if init is not None:
        return Model.load(init)
    vocab = _vocab(ctx)
    enc = _dataclass_from_section(EncoderConfig, ctx.cfg, "encoder")
    dec = _dataclass_from_section(DecoderConfig, ctx.cfg, "decoder") if ctx.cfg.has("decoder") else None
    q = _dataclass_from_section(QuantizerConfig, ctx.cfg, "quantizer") if ctx.cfg.has("quantizer") else None
    spec = ModelSpec(
        encoder=enc,
        decoder=dec,
        vocab_size=vocab.size if vocab else ctx.cfg.get("model", "vocab_size", 8, int),
        quantizer=q,
        pretrain_head=ctx.cfg.get("model", "pretrain_head", q is not None, bool),
    )
    return Model.init(spec, derive_seed(ctx.seed, "model", ctx.id), vocab)


def _respec(ctx: Context, model: Model, keep_head: bool, need_decoder: bool) -> Model:
    spec = model.spec
    enc = _dataclass_from_section(EncoderConfig, ctx.cfg, "encoder", base=spec.encoder)
    dec = _dataclass_from_section(DecoderConfig, ctx.cfg, "decoder", base=spec.decoder or DecoderConfig()) \
        if ctx.cfg.has("decoder") else spec.decoder
    if need_decoder and dec is None:
        raise ctx.cfg.error("stage needs a [decoder] section (the input model has no decoder)", "stage", "kind")
    if enc.n_mels != spec.encoder.n_mels or enc.model_dim != spec.encoder.model_dim:
        raise ctx.cfg.error("[encoder] cannot change n_mels or model_dim of a trained model", "encoder")
    new = ModelSpec(
        encoder=enc,
        decoder=dec,
        vocab_size=spec.vocab_size,
        quantizer=spec.quantizer if keep_head else None,
        pretrain_head=spec.pretrain_head and keep_head,
    )
    if new == spec:
        return model
    return model.derive(new, derive_seed(ctx.seed, "model", ctx.id))


def _train_config(ctx: Context) -> TrainConfig:
    c = ctx.cfg
    base = TrainConfig()
    specaug = None
    if c.get("train", "specaug", False, bool):
        specaug = _dataclass_from_section(SpecAugmentPolicy, c, "specaug")
    ema = c.get("train", "ema_decay", "none")
    return TrainConfig(
        steps=c.get("train", "steps", base.steps, int),
        batch_size=c.get("train", "batch_size", base.batch_size, int),
        lr=LrSchedule(c.get("train", "lr_peak", base.lr.peak, float), c.get("train", "warmup_steps", base.lr.warmup_steps, int)),
        ema_decay=None if str(ema).lower() == "none" else float(ema),
        specaug=specaug,
        mask=_dataclass_from_section(MaskSpec, c, "mask", base=base.mask),
        just=_dataclass_from_section(JustConfig, c, "just", base=base.just),
    )


def _fusion(ctx: Context, vocab) -> FusionConfig | None:
    lm_path = ctx.existing("decode", "lm", None)
    if lm_path is None:
        return None
    return FusionConfig(
        NGramLm.load(lm_path),
        ctx.cfg.get("decode", "lambda", 0.3, float),
        ctx.cfg.get("decode", "length_bonus", 0.0, float),
        vocab,
    )


def _param_report(model: Model, trainable: int | None = None) -> dict:
    counts = model.group_counts()
    out = {"groups": {g: counts[g] for g in counts if g != "total"}, "total": counts["total"]}
    if trainable is not None:
        out["trainable"] = trainable
    return out


def _evaluate(ctx: Context, model: Model, manifest: Manifest) -> dict:
    refs = [r.transcript or "" for r in manifest.records]
    t0 = time.perf_counter()
    if ctx.oracle_decoder:
        hyps = list(refs)
    else:
        utts = prepare(manifest, model, with_labels=False)
        beam = ctx.cfg.get("decode", "beam_size", 4, int)
        hs = transcribe(model, utts, beam, _fusion(ctx, model.vocab))
        hyps = [model.vocab.detokenize(h.tokens) for h in hs]
    ctx.timing["eval_seconds"] = time.perf_counter() - t0
    ctx.timing["eval_utts_per_second"] = len(refs) / max(ctx.timing["eval_seconds"], 1e-9)
    w = corpus_wer(refs, hyps)
    with open(ctx.out / "hypotheses.tsv", "w", encoding="utf-8") as f:
        for r, ref, hyp in zip(manifest.records, refs, hyps):
            f.write(f"{r.id}\t{ref}\t{hyp}\n")
    return {"rate": w.rate, "substitutions": w.substitutions, "insertions": w.insertions,
            "deletions": w.deletions, "utterances": len(refs)}


# ===================================================================== stage bodies

def _stage_gen_corpus(ctx: Context) -> dict:
    spec = _dataclass_from_section(SyntheticTaskSpec, ctx.cfg, "corpus", skip=("seed",), extra=("splits",))
    spec = dataclasses.replace(spec, seed=ctx.seed)
    splits = ctx.cfg.get("corpus", "splits", kind=list)
    written = {}
    for item in splits:
        parts = item.split("/")
        if len(parts) not in (3, 4):
            raise ctx.cfg.error(f"[corpus] splits: bad item {item!r} (domain/split/count[/supervision])", "corpus", "splits")
        domain, split, count = parts[0], parts[1], int(parts[2])
        sup = parts[3] if len(parts) == 4 else "human"
        m = generate_synthetic_corpus(spec, count, ctx.out, domain, split, sup)
        written[f"{domain}-{split}"] = len(m)
    vocab = Vocabulary(list(spec.tokens))
    (ctx.out / "vocab.txt").write_text(vocab.to_text(), encoding="utf-8")
    return {"records": written}


def _train_common(ctx: Context, model: Model, objective: str, regime: str, sup: Manifest | None, unsup: Manifest | None):
    cfg = _train_config(ctx)
    sup_utts = prepare(sup, model) if sup is not None else []
    unsup_utts = prepare(unsup, model, with_labels=False) if unsup is not None else []
    t0 = time.perf_counter()
    res = train_stage(model, objective, regime, cfg, derive_seed(ctx.seed, "train", ctx.id), sup_utts, unsup_utts)
    secs = time.perf_counter() - t0
    with open(ctx.out / "metrics.jsonl", "w", encoding="utf-8") as f:
        for rec in res.metrics:
            f.write(json.dumps({"step": rec["step"], "loss": rec["loss"], "lr": rec["lr"]}) + "\n")
    n_seen = cfg.steps * cfg.batch_size
    ctx.timing.update({
        "train_seconds": secs,
        "train_utts_per_second": n_seen / max(secs, 1e-9),
        "step_wall_ms": [rec["wall_ms"] for rec in res.metrics],
    })
    model.save(ctx.out / "model.ckpt")
    report = {"params": _param_report(model, res.trainable), "regime": REGIME_ALIASES.get(regime, regime),
              "steps": cfg.steps}
    if res.metrics:
        report["final_loss"] = res.metrics[-1]["loss"]
    test = ctx.manifests("test", required=False)
    if test is not None:
        report["wer"] = _evaluate(ctx, model, test)
    return report


def _fit_norm_if_fresh(ctx: Context, model: Model, data: Manifest) -> None:
    """Fit feature statistics on this stage's training data.

    Loaded models keep the statistics they were trained with unless
    ``[frontend] refit`` is true; models built from sections always fit.
    """
    if ctx.cfg.get("model", "init_from", None) is None or ctx.cfg.get("frontend", "refit", False, bool):
        model.set_norm_stats(fit_normalization(load_features(r, data.base_dir) for r in data.records))


def _with_vocab(ctx: Context, model: Model) -> Model:
    if model.vocab is None:
        model = dataclasses.replace(model, vocab=_vocab(ctx))
    if model.vocab is None:
        raise ctx.cfg.error("training a decoder needs [model] vocab", "model")
    return model


def _stage_pretrain(ctx: Context) -> dict:
    model = _base_model(ctx)
    if model.spec.quantizer is None or not model.spec.pretrain_head:
        raise ctx.cfg.error("pretrain needs a [quantizer] section", "stage", "kind")
    data = ctx.manifests("train")
    _fit_norm_if_fresh(ctx, model, data)
    return _train_common(ctx, model, "pretrain", "pretrain", None, data)


def _stage_finetune(ctx: Context) -> dict:
    model = _with_vocab(ctx, _respec(ctx, _base_model(ctx), keep_head=False, need_decoder=True))
    regime = ctx.cfg.get("train", "regime", "full_model")
    _check_regime(ctx, regime)
    data = ctx.manifests("train")
    _fit_norm_if_fresh(ctx, model, data)
    return _train_common(ctx, model, "supervised", regime, data, None)


def _stage_adapt(ctx: Context) -> dict:
    model = _with_vocab(ctx, _respec(ctx, _base_model(ctx), keep_head=False, need_decoder=True))
    regime = ctx.cfg.get("train", "regime", "adapter_plus_decoder")
    _check_regime(ctx, regime)
    if "adapter" in regime_groups(regime) and not model.spec.encoder.adapter_dim:
        raise ctx.cfg.error("regime trains adapters but [encoder] adapter_dim is not set", "train", "regime")
    data = ctx.manifests("train")
    _fit_norm_if_fresh(ctx, model, data)
    return _train_common(ctx, model, "supervised", regime, data, None)


def _stage_just(ctx: Context) -> dict:
    model = _respec(ctx, _base_model(ctx), keep_head=True, need_decoder=True)
    if model.spec.quantizer is None or not model.spec.pretrain_head:
        raise ctx.cfg.error("joint training needs a model with the pretraining head (run pretrain first)", "model", "init_from")
    model = _with_vocab(ctx, model)
    regime = ctx.cfg.get("train", "regime", "full_model")
    _check_regime(ctx, regime)
    data = ctx.manifests("train")
    _fit_norm_if_fresh(ctx, model, data)
    return _train_common(ctx, model, "just", regime, data, ctx.manifests("unlabeled"))


def _check_regime(ctx, regime):
    if REGIME_ALIASES.get(regime, regime) not in REGIMES:
        raise ctx.cfg.error(f"unknown regime {regime!r}", "train", "regime")


def _stage_nst(ctx: Context) -> dict:
    teacher = Model.load(ctx.existing("nst", "teacher"))
    data = ctx.manifests("unlabeled")
    cfg = NstConfig(
        teacher=ctx.cfg.get("nst", "teacher_id", ctx.cfg.get("nst", "teacher")),
        confidence_threshold=ctx.cfg.get("nst", "threshold", 0.0, float),
        data_ratio=ctx.cfg.get("nst", "data_ratio", 1.0, float),
        seed=derive_seed(ctx.seed, "nst", ctx.id),
        beam_size=ctx.cfg.get("decode", "beam_size", 4, int),
    )
    t0 = time.perf_counter()
    out = nst_generate(teacher, data, cfg, _fusion(ctx, teacher.vocab))
    secs = time.perf_counter() - t0
    transcribed = ceil_count(cfg.data_ratio, len(data))
    ctx.timing.update({"label_seconds": secs, "label_utts_per_second": transcribed / max(secs, 1e-9)})
    out.write(ctx.out / "pseudo.jsonl")
    return {"input_records": len(data), "transcribed": transcribed, "kept": len(out)}


def _stage_filter(ctx: Context) -> dict:
    data = ctx.manifests("train")
    n = len(data)
    out = data
    if ctx.cfg.has("filter", "cosine_threshold"):
        out = filter_single_speaker(out, ctx.cfg.get("filter", "cosine_threshold", kind=float))
    if ctx.cfg.get("filter", "written_equals_spoken", False, bool):
        rules_path = ctx.existing("filter", "rules", None)
        out = filter_written_spoken(out, VerbalizationRules.load(rules_path))
    out.write(ctx.out / "filtered.jsonl")
    return {"input_records": n, "kept": len(out), "provenance": out.provenance[len(data.provenance):]}


def _stage_lm_train(ctx: Context) -> dict:
    vocab = _vocab(ctx)
    order = ctx.cfg.get("lm", "order", 3, int)
    k = ctx.cfg.get("lm", "k", 0.1, float)
    texts = []
    data = ctx.manifests("text", required=False)
    if data is not None:
        texts += [r.transcript for r in data.records if r.transcript is not None]
    text_file = ctx.existing("lm", "text_file", None)
    if text_file is not None:
        texts += [ln for ln in text_file.read_text(encoding="utf-8").splitlines() if ln.strip()]
    mode = ctx.cfg.get("lm", "tokens", "pieces")
    if mode == "words":
        sents = [t.split() for t in texts]
    elif vocab is not None:
        sents = [["<unk>" if i == 1 else vocab.pieces[i - 2] for i in vocab.tokenize(t)] for t in texts]
    else:
        sents = [list(t) for t in texts]
    if not sents:
        raise ctx.cfg.error("no LM training text ([data] text or [lm] text_file)", "lm")
    lm = train_lm(sents, order, k)
    lm.save(ctx.out / "lm.ngram")
    return {"sentences": len(sents), "order": order, "ngrams": len(lm.probs)}


def _stage_decode(ctx: Context) -> dict:
    model = Model.load(ctx.existing("model", "checkpoint"))
    data = ctx.manifests("test")
    beam = ctx.cfg.get("decode", "beam_size", 4, int)
    fusion = _fusion(ctx, model.vocab)
    utts = prepare(data, model, with_labels=False)
    W = model.eval_weights()
    P = {n: Tensor(v) for n, v in W.items()}
    n_lines = 0
    t0 = time.perf_counter()
    with open(ctx.out / "nbest.jsonl", "w", encoding="utf-8") as f, no_grad():
        for u in utts:
            enc, lens = encode(P, u.feats[None], [len(u.feats)], model.spec.encoder)
            for rank, h in enumerate(decode_beam(W, model.spec.decoder, enc.data[0, : lens[0]], beam, fusion), 1):
                f.write(json.dumps({"id": u.id, "rank": rank, "text": model.vocab.detokenize(h.tokens),
                                    "acoustic": h.acoustic, "lm": h.lm, "combined": h.combined},
                                   ensure_ascii=False) + "\n")
                n_lines += 1
    ctx.timing["decode_seconds"] = time.perf_counter() - t0
    return {"utterances": len(utts), "hypotheses": n_lines}


def _stage_evaluate(ctx: Context) -> dict:
    data = ctx.manifests("test")
    if ctx.oracle_decoder:
        return {"wer": _evaluate(ctx, None, data)}
    model = Model.load(ctx.existing("model", "checkpoint"))
    return {"wer": _evaluate(ctx, model, data), "params": _param_report(model)}


PRESETS = {
    "paper-rnnt": ModelSpec(encoder=PAPER_ENCODER, decoder=PAPER_RNNT, vocab_size=4096),
    "paper-ctc": ModelSpec(encoder=PAPER_ENCODER, decoder=PAPER_CTC, vocab_size=4096),
    "paper-las": ModelSpec(encoder=PAPER_ENCODER, decoder=PAPER_LAS, vocab_size=4096),
}


def _stage_count_params(ctx: Context) -> dict:
    preset = ctx.cfg.get("model", "preset", None)
    if preset is not None:
        if preset not in PRESETS:
            raise ctx.cfg.error(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}", "model", "preset")
        spec = PRESETS[preset]
    else:
        spec = spec_from_sections(ctx.cfg.sections)
    counts = count_params(spec)
    trainable = {alias: sum(counts[g] for g in REGIMES[name]) for alias, name in REGIME_ALIASES.items()}
    return {"params": {"groups": {g: v for g, v in counts.items() if g != "total"}, "total": counts["total"]},
            "trainable_by_regime": trainable}


STAGES = {
    "gen-corpus": _stage_gen_corpus,
    "pretrain": _stage_pretrain,
    "finetune": _stage_finetune,
    "just": _stage_just,
    "nst": _stage_nst,
    "adapt": _stage_adapt,
    "filter": _stage_filter,
    "lm-train": _stage_lm_train,
    "decode": _stage_decode,
    "evaluate": _stage_evaluate,
    "count-params": _stage_count_params,
}


def run_stage(cfg: Config | str | Path, out: str | Path, seed: int | None = None,
              oracle_decoder: bool = False, expect_kind: str | None = None) -> dict:
    """Run one stage; returns the report that is also written to ``out/report.json``."""
    if not isinstance(cfg, Config):
        cfg = load_config(cfg)
    ctx = Context(cfg, Path(out), seed, oracle_decoder)
    if expect_kind is not None and KIND_ALIASES.get(expect_kind, expect_kind) != ctx.kind:
        raise cfg.error(f"config describes a {ctx.kind!r} stage, not {expect_kind!r}", "stage", "kind")
    t0 = time.perf_counter()
    body = STAGES[ctx.kind](ctx)
    eff = cfg.copy()
    eff.set("stage", "seed", ctx.seed)
    eff.sections["stage"].pop("root", None)
    report = {"stage": ctx.id, "kind": ctx.kind, "seed": ctx.seed, "config_hash": eff.hash(), **body}
    (ctx.out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    ctx.timing["wall_seconds"] = time.perf_counter() - t0
    (ctx.out / "timing.json").write_text(json.dumps(ctx.timing, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return report


# ===================================================================== recipes and sweeps

def run_recipe(path: str | Path, out: str | Path, seed: int | None = None, overrides=()) -> dict:
    """Run the stage files listed in ``[recipe] stages`` in order, each into ``out/<stage id>``.

    Stage files resolve relative paths against ``out``, so later stages can
    refer to earlier artifacts as ``<stage id>/model.ckpt``.
    """
    path = Path(path)
    rcfg = load_config(path)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    reports = {}
    for name in rcfg.get("recipe", "stages", kind=list):
        stage_path = path.parent / name
        if not stage_path.exists():
            raise rcfg.error(f"[recipe] stages: {name!r} not found", "recipe", "stages")
        cfg = load_config(stage_path)
        cfg.set("stage", "root", str(out))
        for key, value in overrides:
            sec, _, k = key.partition(".")
            cfg.set(sec, k, value)
        sid = cfg.get("stage", "id", cfg.get("stage", "kind"))
        reports[sid] = run_stage(cfg, out / sid, seed)
    summary = {"recipe": path.name, "seed": seed, "stages": reports}
    (out / "recipe_report.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return summary


def _lookup(report: dict, dotted: str):
    cur = report
    for part in dotted.split("."):
        if not isinstance(cur, dict) or part not in cur:
            return None
        cur = cur[part]
    return cur


def sweep(cfg: Config | str | Path, param: str, values, out: str | Path, seed: int | None = None,
          oracle_decoder: bool = False) -> list[dict]:
    """One run per value of ``section.key``; writes ``summary.tsv`` and returns the reports."""
    base = cfg if isinstance(cfg, Config) else load_config(cfg)
    sec, _, key = param.partition(".")
    if not sec or not key:
        raise ConfigError(f"parameter {param!r} must look like section.key", base.source)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for i, v in enumerate(values):
        cfg = base.copy()
        cfg.set(sec, key, v)
        rep = run_stage(cfg, out / f"{i:02d}-{v}", seed, oracle_decoder)
        rows.append({"value": v, "report": rep})
    cols = ["wer.rate", "params.trainable", "transcribed", "kept", "config_hash"]
    lines = ["\t".join([param] + cols)]
    for r in rows:
        lines.append("\t".join([str(r["value"])] + ["" if _lookup(r["report"], c) is None else str(_lookup(r["report"], c))
                                                      for c in cols]))
    (out / "summary.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return [r["report"] for r in rows]


__all__ = ["STAGE_KINDS", "run_recipe", "run_stage", "sweep"]
