"""Manifests, word error rate, source-data filters and the synthetic two-domain corpus."""

from __future__ import annotations

import json
import logging
import math
import re
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .frontend import FrontendConfig, compute_logmel, read_wav
from .rng import generator

log = logging.getLogger(__name__)

DOMAINS = ("source", "target")
SUPERVISION = ("human", "pseudo", "none")


# ===================================================================== manifests

@dataclass
class UtteranceRecord:
    id: str
    features: str | None = None
    audio: str | None = None
    transcript: str | None = None
    domain: str = "source"
    speaker_embeddings: list[list[float]] = field(default_factory=list)
    supervision: str = "human"
    confidence: float | None = None
    teacher: str | None = None

    def __post_init__(self):
        if self.domain not in DOMAINS:
            raise ValueError(f"{self.id}: unknown domain {self.domain!r}")
        if self.supervision not in SUPERVISION:
            raise ValueError(f"{self.id}: unknown supervision {self.supervision!r}")
        if self.supervision == "none" and self.transcript is not None:
            raise ValueError(f"{self.id}: unsupervised record carries a transcript")
        if self.supervision == "pseudo" and self.confidence is None:
            raise ValueError(f"{self.id}: pseudo-labeled record needs a confidence")
        if self.features is None and self.audio is None:
            raise ValueError(f"{self.id}: record needs features or audio")


@dataclass
class Manifest:
    records: list[UtteranceRecord]
    provenance: list[str] = field(default_factory=list)
    base_dir: Path = field(default=Path("."), compare=False)

    def __post_init__(self):
        ids = [r.id for r in self.records]
        if len(set(ids)) != len(ids):
            raise ValueError("manifest ids must be unique")

    def __len__(self):
        return len(self.records)

    def derive(self, records, note: str) -> "Manifest":
        return Manifest(list(records), self.provenance + [note], self.base_dir)

    def to_text(self) -> str:
        lines = [f"# provenance: {p}" for p in self.provenance]
        lines += [json.dumps(asdict(r), ensure_ascii=False, sort_keys=True) for r in self.records]
        return "\n".join(lines) + "\n"

    def write(self, path: str | Path) -> Path:
        """Write JSONL; feature/audio paths are rewritten relative to the new location."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        recs = []
        for r in self.records:
            recs.append(replace(
                r,
                features=_rebase(r.features, self.base_dir, path.parent),
                audio=_rebase(r.audio, self.base_dir, path.parent),
            ))
        path.write_text(Manifest(recs, self.provenance).to_text(), encoding="utf-8")
        return path

    @classmethod
    def read(cls, path: str | Path) -> "Manifest":
        path = Path(path)
        prov, recs = [], []
        for n, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
            if not line.strip():
                continue
            if line.startswith("#"):
                if line.startswith("# provenance: "):
                    prov.append(line[len("# provenance: "):])
                continue
            try:
                recs.append(UtteranceRecord(**json.loads(line)))
            except (TypeError, ValueError) as e:
                raise ValueError(f"{path}:{n}: {e}") from None
        return cls(recs, prov, path.parent)


def _rebase(p, old_base: Path, new_base: Path):
    if p is None:
        return None
    absolute = (Path(old_base) / p).resolve()
    try:
        return str(absolute.relative_to(new_base.resolve()))
    except ValueError:
        return str(absolute)


def load_features(record: UtteranceRecord, base_dir: Path, frontend: FrontendConfig | None = None) -> np.ndarray:
    """(T, n_mels) log-mel frames from a feature file or, failing that, from audio."""
    if record.features is not None:
        return np.load(Path(base_dir) / record.features)
    frontend = frontend or FrontendConfig()
    return compute_logmel(read_wav(Path(base_dir) / record.audio, frontend), frontend).frames


# ===================================================================== WER

@dataclass(frozen=True)
class WerResult:
    rate: float
    substitutions: int
    insertions: int
    deletions: int

    @property
    def errors(self) -> int:
        return self.substitutions + self.insertions + self.deletions


def edit_ops(ref: list[str], hyp: list[str]) -> tuple[int, int, int]:
    """(S, I, D) of one minimum-cost alignment; ties prefer substitution, then insertion."""
    n, m = len(ref), len(hyp)
    d = np.zeros((n + 1, m + 1), dtype=np.int64)
    d[:, 0] = np.arange(n + 1)
    d[0, :] = np.arange(m + 1)
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            d[i, j] = min(d[i - 1, j - 1] + (ref[i - 1] != hyp[j - 1]), d[i, j - 1] + 1, d[i - 1, j] + 1)
    s = ins = dele = 0
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and d[i, j] == d[i - 1, j - 1] + (ref[i - 1] != hyp[j - 1]):
            s += ref[i - 1] != hyp[j - 1]
            i, j = i - 1, j - 1
        elif j > 0 and d[i, j] == d[i, j - 1] + 1:
            ins += 1
            j -= 1
        else:
            dele += 1
            i -= 1
    return int(s), ins, dele


def wer(reference: str, hypothesis: str) -> WerResult:
    ref, hyp = reference.split(), hypothesis.split()
    s, i, d = edit_ops(ref, hyp)
    return WerResult((s + i + d) / max(1, len(ref)), s, i, d)


def corpus_wer(references, hypotheses) -> WerResult:
    """Pooled WER: total edits over total reference words."""
    S = I = D = N = 0
    for r, h in zip(references, hypotheses, strict=True):
        s, i, d = edit_ops(r.split(), h.split())
        S, I, D, N = S + s, I + i, D + d, N + len(r.split())
    return WerResult((S + I + D) / max(1, N), S, I, D)


# ===================================================================== speaker filter

def speaker_clusters(embeddings, threshold: float) -> int:
    """Number of single-linkage clusters: segments join when cosine >= threshold."""
    E = np.asarray(embeddings, dtype=np.float64)
    n = len(E)
    E = E / np.maximum(np.linalg.norm(E, axis=1, keepdims=True), 1e-12)
    sim = E @ E.T
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a in range(n):
        for b in range(a + 1, n):
            if sim[a, b] >= threshold:
                parent[find(a)] = find(b)
    return len({find(a) for a in range(n)})


def filter_single_speaker(manifest: Manifest, cosine_threshold: float) -> Manifest:
    kept = []
    for r in manifest.records:
        if not r.speaker_embeddings:
            log.warning("record %s has no speaker embeddings; skipped", r.id)
            continue
        if speaker_clusters(r.speaker_embeddings, cosine_threshold) == 1:
            kept.append(r)
    return manifest.derive(kept, f"filter_single_speaker threshold={cosine_threshold!r} kept={len(kept)}/{len(manifest)}")


# ===================================================================== verbalization

@dataclass
class VerbalizationRules:
    sections: dict[str, dict[str, str]]

    @classmethod
    def parse(cls, text: str) -> "VerbalizationRules":
        sections: dict[str, dict[str, str]] = {}
        cur = None
        for n, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if line.startswith("[") and line.endswith("]"):
                cur = sections.setdefault(line[1:-1], {})
                continue
            if cur is None:
                raise ValueError(f"line {n}: entry outside a section")
            key, _, val = line.partition(" ")
            cur[key] = val.strip()
        return cls(sections)

    @classmethod
    def load(cls, path: str | Path | None = None) -> "VerbalizationRules":
        if path is None:
            text = resources.files("fmadapt").joinpath("data/verbalization.rules").read_text(encoding="utf-8")
        else:
            text = Path(path).read_text(encoding="utf-8")
        return cls.parse(text)

    def get(self, name):
        return self.sections.get(name, {})

    def number_words(self, n: int) -> list[str]:
        units, teens, tens, scale = self.get("units"), self.get("teens"), self.get("tens"), self.get("scale")
        if n < 10:
            return [units[str(n)]]
        if n < 20:
            return [teens[str(n)]]
        if n < 100:
            t, u = divmod(n, 10)
            return [tens[str(10 * t)]] + ([units[str(u)]] if u else [])
        if n < 1000:
            h, rest = divmod(n, 100)
            return [units[str(h)], scale["100"]] + (self.number_words(rest) if rest else [])
        th, rest = divmod(n, 1000)
        return self.number_words(th) + [scale["1000"]] + (self.number_words(rest) if rest else [])


_NUM = re.compile(r"^(\D*?)(\d+)(\D*)$")


def _strip_punct(word: str, rules: VerbalizationRules) -> str:
    punct = set(rules.get("punctuation"))
    return "".join(c for c in word if c not in punct)


def normalize_text(text: str, rules: VerbalizationRules) -> str:
    """Case fold, drop punctuation, collapse whitespace."""
    words = (_strip_punct(w, rules) for w in text.casefold().split())
    return " ".join(w for w in words if w)


def verbalize(text: str, rules: VerbalizationRules) -> str:
    cur, pct, abbr = rules.get("currency"), rules.get("percent"), rules.get("abbreviations")
    out: list[str] = []
    for raw in text.casefold().split():
        word = _strip_punct(raw, rules)
        if word in abbr:
            out.append(abbr[word])
            continue
        m = _NUM.match(word)
        if not m:
            out.append(word)
            continue
        pre, digits, post = m.groups()
        n = int(digits)
        spoken = rules.number_words(n) if n <= 9999 else [rules.get("units")[c] for c in digits]
        if pre and pre not in cur:
            out.append(pre)
        out.extend(spoken)
        if pre in cur:
            out.append(cur[pre])
        if post:
            out.append(pct[post] if post in pct else post)
    return " ".join(out)


def written_equals_spoken(transcript: str, rules: VerbalizationRules) -> bool:
    return normalize_text(verbalize(transcript, rules), rules) == normalize_text(transcript, rules)


def filter_written_spoken(manifest: Manifest, rules: VerbalizationRules) -> Manifest:
    kept = [r for r in manifest.records if r.transcript is None or written_equals_spoken(r.transcript, rules)]
    return manifest.derive(kept, f"filter_written_spoken kept={len(kept)}/{len(manifest)}")


# ===================================================================== synthetic corpus

@dataclass(frozen=True)
class SyntheticTaskSpec:
    """Two-domain synthetic ASR task generated directly as log-mel-like frames.

    Every token has an onset frame template and a steady-state template
    (shared by both domains), so repeated letters stay separable.  Domains
    differ in their letter prior and in a channel: an additive spectral tilt,
    a constant offset and a noise level.
    """

    letters: str = "abcdefgh"
    n_mels: int = 16
    template_scale: float = 1.5
    min_token_frames: int = 3
    max_token_frames: int = 6
    min_words: int = 2
    max_words: int = 4
    max_word_len: int = 3
    source_prior: tuple = ()
    target_prior: tuple = ()
    source_noise: float = 0.3
    target_noise: float = 0.3
    source_tilt: float = 0.0
    target_tilt: float = 1.5
    source_offset: float = 0.0
    target_offset: float = 0.5
    embedding_dim: int = 8
    multi_speaker_rate: float = 0.0
    written_form_rate: float = 0.0
    lexicon_size: int = 0
    seed: int = 0

    @property
    def tokens(self) -> str:
        return self.letters + " "

    def prior(self, domain: str) -> np.ndarray:
        p = self.source_prior if domain == "source" else self.target_prior
        p = np.ones(len(self.letters)) if not p else np.asarray(p, dtype=np.float64)
        if p.shape != (len(self.letters),) or np.any(p < 0) or p.sum() <= 0:
            raise ValueError(f"bad {domain} prior")
        return p / p.sum()

    def channel(self, domain: str) -> tuple[float, float, float]:
        if domain == "source":
            return self.source_noise, self.source_tilt, self.source_offset
        return self.target_noise, self.target_tilt, self.target_offset


def token_templates(spec: SyntheticTaskSpec) -> tuple[np.ndarray, np.ndarray]:
    """(onset, steady) templates, each (n_tokens, n_mels); the space token is a low-energy pause."""
    rng = generator(spec.seed, "synthetic", "templates")
    n = len(spec.tokens)
    onset = rng.standard_normal((n, spec.n_mels)) * spec.template_scale
    steady = rng.standard_normal((n, spec.n_mels)) * spec.template_scale
    steady[-1] = -2.0
    onset[-1] = -2.0 + rng.standard_normal(spec.n_mels) * 0.5
    return onset, steady


def _random_word(spec: SyntheticTaskSpec, p: np.ndarray, rng: np.random.Generator) -> str:
    n = int(rng.integers(1, spec.max_word_len + 1))
    return "".join(spec.letters[i] for i in rng.choice(len(spec.letters), size=n, p=p))


def domain_lexicon(spec: SyntheticTaskSpec, domain: str) -> tuple[list[str], np.ndarray]:
    """``lexicon_size`` distinct words spelled with the domain letter prior, with 1/rank frequencies."""
    rng = generator(spec.seed, "synthetic", "lexicon", domain)
    p = spec.prior(domain)
    words: list[str] = []
    for _ in range(1000 * spec.lexicon_size):
        if len(words) == spec.lexicon_size:
            break
        w = _random_word(spec, p, rng)
        if w not in words:
            words.append(w)
    freq = 1.0 / np.arange(1, len(words) + 1)
    return words, freq / freq.sum()


def sample_transcript(spec: SyntheticTaskSpec, domain: str, rng: np.random.Generator) -> str:
    """Words spelled letter by letter from the domain prior, or drawn from the domain lexicon."""
    p = spec.prior(domain)
    lexicon = domain_lexicon(spec, domain) if spec.lexicon_size else None
    words = []
    for _ in range(int(rng.integers(spec.min_words, spec.max_words + 1))):
        if lexicon:
            words.append(lexicon[0][int(rng.choice(len(lexicon[0]), p=lexicon[1]))])
        else:
            words.append(_random_word(spec, p, rng))
    return " ".join(words)


def render_features(spec: SyntheticTaskSpec, transcript: str, domain: str, rng: np.random.Generator) -> np.ndarray:
    onset, steady = token_templates(spec)
    noise, tilt, offset = spec.channel(domain)
    ramp = np.linspace(-1.0, 1.0, spec.n_mels) * tilt + offset
    frames = []
    for ch in transcript:
        k = spec.tokens.index(ch)
        dur = int(rng.integers(spec.min_token_frames, spec.max_token_frames + 1))
        frames.append(onset[k])
        frames.extend([steady[k]] * (dur - 1))
    x = np.asarray(frames) + ramp
    if noise > 0:
        x = x + rng.standard_normal(x.shape) * noise
    return x


def _embeddings(spec, rng, multi):
    def unit(v):
        return v / np.linalg.norm(v)

    base = unit(rng.standard_normal(spec.embedding_dim))
    n = int(rng.integers(1, 4)) + (1 if multi else 0)
    other = unit(rng.standard_normal(spec.embedding_dim))
    segs = []
    for i in range(n):
        center = other if multi and i == n - 1 else base
        segs.append(unit(center + rng.standard_normal(spec.embedding_dim) * 0.05).tolist())
    return segs


def generate_synthetic_corpus(
    spec: SyntheticTaskSpec,
    count: int,
    out_dir: str | Path,
    domain: str = "source",
    split: str = "train",
    supervision: str = "human",
) -> Manifest:
    """Write ``count`` utterances (feature .npy files + manifest) under ``out_dir``."""
    if count < 1:
        raise ValueError("count must be >= 1")
    out_dir = Path(out_dir)
    feat_dir = out_dir / "feats"
    feat_dir.mkdir(parents=True, exist_ok=True)
    records = []
    for i in range(count):
        uid = f"{domain}-{split}-{i:05d}"
        rng = generator(spec.seed, "synthetic", uid)
        text = sample_transcript(spec, domain, rng)
        feats = render_features(spec, text, domain, rng)
        multi = bool(rng.random() < spec.multi_speaker_rate)
        emb = _embeddings(spec, rng, multi)
        if rng.random() < spec.written_form_rate:
            words = text.split()
            words[int(rng.integers(len(words)))] = str(int(rng.integers(0, 100)))
            text = " ".join(words)
        np.save(feat_dir / f"{uid}.npy", feats)
        records.append(UtteranceRecord(
            id=uid,
            features=f"feats/{uid}.npy",
            transcript=text if supervision != "none" else None,
            domain=domain,
            speaker_embeddings=emb,
            supervision=supervision,
            confidence=1.0 if supervision == "pseudo" else None,
        ))
    m = Manifest(records, [f"synthetic domain={domain} split={split} count={count} seed={spec.seed}"], out_dir)
    m.write(out_dir / f"{domain}-{split}.jsonl")
    return Manifest.read(out_dir / f"{domain}-{split}.jsonl")


def template_oracle_transcribe(spec: SyntheticTaskSpec, feats: np.ndarray, domain: str = "source") -> str:
    """Nearest-template transcription for noise-free features: every onset frame starts a token."""
    onset, steady = token_templates(spec)
    _, tilt, offset = spec.channel(domain)
    x = feats - (np.linspace(-1.0, 1.0, spec.n_mels) * tilt + offset)
    both = np.concatenate([onset, steady])
    n = len(spec.tokens)
    out = []
    for frame in x:
        k = int(np.argmin(((both - frame) ** 2).sum(axis=1)))
        if k < n:
            out.append(spec.tokens[k])
    return "".join(out)


def ceil_count(ratio: float, n: int) -> int:
    return min(n, int(math.ceil(ratio * n - 1e-12)))
