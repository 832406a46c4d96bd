"""Token inventory and tokenization.

Id layout shared by every decoder: id 0 is the special symbol (CTC/RNN-T
blank, LAS start/end of sentence), id 1 is ``<unk>``, ids 2.. are the
inventory pieces.  ``size`` (V) counts unk plus the pieces, so output
layers have V + 1 units.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

UNK_GLYPH = "⁇"
SPECIAL = 0
UNK = 1


@dataclass
class Vocabulary:
    pieces: list[str]
    _index: dict[str, int] = field(init=False, repr=False)
    _maxlen: int = field(init=False, repr=False)

    def __post_init__(self):
        if len(set(self.pieces)) != len(self.pieces):
            raise ValueError("duplicate pieces in vocabulary")
        if any(not p for p in self.pieces):
            raise ValueError("empty piece in vocabulary")
        self._index = {p: i + 2 for i, p in enumerate(self.pieces)}
        self._maxlen = max((len(p) for p in self.pieces), default=1)

    @classmethod
    def from_characters(cls, chars: str) -> "Vocabulary":
        seen: list[str] = []
        for c in chars:
            if c not in seen:
                seen.append(c)
        return cls(seen)

    @classmethod
    def from_file(cls, path: str | Path) -> "Vocabulary":
        """One piece per line (word-piece inventory); whitespace-only lines denote a space."""
        lines = Path(path).read_text(encoding="utf-8").split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        return cls([ln if ln.strip() else " " for ln in lines])

    @property
    def size(self) -> int:
        return len(self.pieces) + 1

    @property
    def blank(self) -> int:
        return SPECIAL

    @property
    def sos(self) -> int:
        return SPECIAL

    @property
    def eos(self) -> int:
        return SPECIAL

    @property
    def unk(self) -> int:
        return UNK

    def tokenize(self, text: str) -> list[int]:
        """Greedy longest-match over the inventory; unmatched characters become unk."""
        ids: list[int] = []
        i = 0
        while i < len(text):
            for n in range(min(self._maxlen, len(text) - i), 0, -1):
                tid = self._index.get(text[i:i + n])
                if tid is not None:
                    ids.append(tid)
                    i += n
                    break
            else:
                ids.append(UNK)
                i += 1
        return ids

    def detokenize(self, ids) -> str:
        out = []
        for t in ids:
            t = int(t)
            if t == UNK:
                out.append(UNK_GLYPH)
            elif t >= 2:
                out.append(self.pieces[t - 2])
        return "".join(out)

    def to_text(self) -> str:
        return "\n".join(self.pieces) + "\n"


def tokenize(text: str, vocabulary: Vocabulary) -> list[int]:
    return vocabulary.tokenize(text)


def detokenize(ids, vocabulary: Vocabulary) -> str:
    return vocabulary.detokenize(ids)
