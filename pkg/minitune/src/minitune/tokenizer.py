"""Word-level tokenizer built from the tuning corpus.

Text is split into alphabetic words, single digits, and single punctuation
marks. Splitting digits one at a time keeps the vocabulary closed over
numbers: any clock time or distance the model will ever see is spelled from
the ten digit tokens plus ``.`` and ``:``, so unseen values never map to
``<unk>``. Whitespace is not preserved; downstream consumers work on token
sequences, not detokenized strings.
"""

import json
import re

from .errors import ArtifactError

TOKEN_PATTERN = re.compile(r"[A-Za-z]+|\d|[^\sA-Za-z\d]")

PAD, BOS, SEP, EOS, UNK = "<pad>", "<bos>", "<sep>", "<eos>", "<unk>"
SPECIAL_TOKENS = (PAD, BOS, SEP, EOS, UNK)

TOKENIZER_FORMAT_VERSION = 1


def word_tokens(text: str) -> list:
    """Split ``text`` into word/digit/punctuation tokens."""
    return TOKEN_PATTERN.findall(text)


class WordTokenizer:
    """Bidirectional token <-> id mapping with fixed special tokens."""

    def __init__(self, tokens):
        tokens = list(tokens)
        if tokens[: len(SPECIAL_TOKENS)] != list(SPECIAL_TOKENS):
            raise ArtifactError("token table must start with the special tokens")
        if len(set(tokens)) != len(tokens):
            raise ArtifactError("token table contains duplicates")
        self._tokens = tokens
        self._ids = {t: i for i, t in enumerate(tokens)}

    @classmethod
    def build(cls, texts) -> "WordTokenizer":
        """Collect the sorted set of token types occurring in ``texts``."""
        types = set()
        for text in texts:
            types.update(word_tokens(text))
        return cls(list(SPECIAL_TOKENS) + sorted(types))

    @property
    def vocab_size(self) -> int:
        return len(self._tokens)

    @property
    def pad_id(self) -> int:
        return self._ids[PAD]

    @property
    def bos_id(self) -> int:
        return self._ids[BOS]

    @property
    def sep_id(self) -> int:
        return self._ids[SEP]

    @property
    def eos_id(self) -> int:
        return self._ids[EOS]

    @property
    def unk_id(self) -> int:
        return self._ids[UNK]

    def encode(self, text: str) -> list:
        unk = self._ids[UNK]
        return [self._ids.get(t, unk) for t in word_tokens(text)]

    def decode_tokens(self, ids) -> list:
        """Ids back to token strings, special tokens dropped."""
        specials = set(range(len(SPECIAL_TOKENS)))
        return [self._tokens[i] for i in ids if i not in specials]

    def decode(self, ids) -> str:
        return " ".join(self.decode_tokens(ids))

    def token_of(self, token_id: int) -> str:
        return self._tokens[token_id]

    def save(self, path) -> None:
        payload = {
            "format_version": TOKENIZER_FORMAT_VERSION,
            "tokens": self._tokens,
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=1)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "WordTokenizer":
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
        if payload.get("format_version") != TOKENIZER_FORMAT_VERSION:
            raise ArtifactError(
                f"unsupported tokenizer version {payload.get('format_version')!r}"
            )
        return cls(payload["tokens"])
