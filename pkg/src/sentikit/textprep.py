"""Text cleaning, vocabulary construction, fixed-length integer encoding.

Cleaning applies the enabled rules in a fixed order: lowercase, URLs,
mentions, hash marks (keep the tag word), punctuation, standalone digit
tokens, stopwords, whitespace collapse. Every rule only deletes characters
or tokens, so a cleaned string is a fixed point of the pipeline.

Token ids: 0 is padding, 1 is the out-of-vocabulary token, real tokens get
contiguous ids from 2 by descending corpus frequency (ties lexicographic).
Sequences are brought to a fixed length d by zero-padding at the end or
truncating from the end.
"""

import re
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from sentikit.errors import DataError

PAD_ID = 0
UNK_ID = 1

_URL_RE = re.compile(r"(?:https?://|www\.)\S+")
_MENTION_RE = re.compile(r"@\w+")


def default_stopwords() -> frozenset[str]:
    """The bundled English stopword list (one token per line)."""
    text = resources.files("sentikit.data").joinpath("stopwords_en.txt").read_text("utf-8")
    return frozenset(line.strip() for line in text.splitlines() if line.strip())


def load_stopwords(path) -> frozenset[str]:
    """Read a stopword file: one token per line, blank lines ignored."""
    try:
        with open(path, encoding="utf-8") as fh:
            return frozenset(line.strip() for line in fh if line.strip())
    except FileNotFoundError:
        raise DataError(f"stopword file not found: {path}")


@dataclass(frozen=True)
class CleaningConfig:
    lowercase: bool = True
    strip_urls: bool = True
    strip_mentions: bool = True
    strip_hashmarks: bool = True
    strip_punctuation: bool = True
    strip_digits: bool = True
    remove_stopwords: bool = True
    stopword_list: frozenset[str] = field(default_factory=default_stopwords)


def clean_text(raw: str, cfg: CleaningConfig | None = None) -> str:
    """Apply the enabled cleaning rules in the documented order.

    Idempotent: cleaning an already-cleaned string returns it unchanged.
    """
    if cfg is None:
        cfg = CleaningConfig()
    s = raw
    if cfg.lowercase:
        s = s.lower()
    if cfg.strip_urls:
        s = _URL_RE.sub(" ", s)
    if cfg.strip_mentions:
        s = _MENTION_RE.sub(" ", s)
    if cfg.strip_hashmarks:
        s = s.replace("#", " ")  # space, not empty: avoids merging text into new matches
    if cfg.strip_punctuation:
        s = "".join(c if c.isalnum() or c.isspace() else " " for c in s)
    tokens = s.split()
    if cfg.strip_digits:
        tokens = [t for t in tokens if not t.isdigit()]
    if cfg.remove_stopwords:
        tokens = [t for t in tokens if t not in cfg.stopword_list]
    return " ".join(tokens)


@dataclass(frozen=True)
class Vocabulary:
    """Token-to-id map; id 0 is padding, id 1 is unknown, ids are contiguous."""

    token_to_id: dict[str, int]
    size: int
    unk_id: int = UNK_ID
    pad_id: int = PAD_ID

    def id_of(self, token: str) -> int:
        return self.token_to_id.get(token, self.unk_id)

    def tokens_by_id(self) -> list[str | None]:
        """Length-``size`` list; slots 0 and 1 are None (pad/unk sentinels)."""
        out: list[str | None] = [None] * self.size
        for tok, i in self.token_to_id.items():
            out[i] = tok
        return out

    def to_tsv(self) -> str:
        lines = [f"{tok}\t{i}" for tok, i in sorted(self.token_to_id.items(), key=lambda kv: kv[1])]
        return "\n".join(lines) + ("\n" if lines else "")

    @classmethod
    def from_tsv(cls, text: str) -> "Vocabulary":
        mapping: dict[str, int] = {}
        top = 1
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                tok, raw_id = line.rsplit("\t", 1)
                i = int(raw_id)
            except ValueError:
                raise DataError(f"vocabulary line {lineno}: expected 'token<TAB>id'")
            if i < 2:
                raise DataError(f"vocabulary line {lineno}: id {i} collides with pad/unk")
            if tok in mapping:
                raise DataError(f"vocabulary line {lineno}: duplicate token {tok!r}")
            mapping[tok] = i
            top = max(top, i)
        vocab = cls(token_to_id=mapping, size=top + 1)
        ids = sorted(mapping.values())
        if ids != list(range(2, vocab.size)):
            raise DataError("vocabulary ids are not contiguous starting at 2")
        return vocab


def build_vocab(corpus, min_count: int = 1) -> Vocabulary:
    """Assign ids by descending corpus frequency; ties break lexicographically."""
    if min_count < 1:
        raise DataError(f"min_count must be >= 1, got {min_count}")
    counts = Counter()
    for text in corpus:
        counts.update(text.split())
    kept = sorted(
        (tok for tok, c in counts.items() if c >= min_count),
        key=lambda tok: (-counts[tok], tok),
    )
    token_to_id = {tok: i for i, tok in enumerate(kept, start=2)}
    return Vocabulary(token_to_id=token_to_id, size=len(kept) + 2)


@dataclass(frozen=True)
class TokenSequence:
    ids: np.ndarray  # (d,) int64
    true_length: int


def encode_pad(text: str, vocab: Vocabulary, d: int) -> TokenSequence:
    """Map tokens to ids, pad with zeros at the end or truncate from the end."""
    if d < 1:
        raise DataError(f"sequence length d must be >= 1, got {d}")
    tokens = text.split()
    kept = tokens[:d]
    ids = np.zeros(d, dtype=np.int64)
    for pos, tok in enumerate(kept):
        ids[pos] = vocab.id_of(tok)
    return TokenSequence(ids=ids, true_length=len(kept))
