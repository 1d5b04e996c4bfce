"""Token vocabulary with reserved PAD/UNK ids, built from the training split only."""

from __future__ import annotations

from collections import Counter
from pathlib import Path

PAD, UNK = "<pad>", "<unk>"
PAD_ID, UNK_ID = 0, 1
_RESERVED = [PAD, UNK]


class Vocab:
    def __init__(self, tokens_with_freq: list[tuple[str, int]]):
        self.freqs = dict(tokens_with_freq)
        self.id_to_token = list(_RESERVED) + [t for t, _ in tokens_with_freq]
        self.token_to_id = {t: i for i, t in enumerate(self.id_to_token)}
        if len(self.token_to_id) != len(self.id_to_token):
            raise ValueError("duplicate tokens in vocabulary")

    def __len__(self) -> int:
        return len(self.id_to_token)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_id

    def id(self, token: str) -> int:
        return self.token_to_id.get(token, UNK_ID)

    def token(self, i: int) -> str:
        return self.id_to_token[i]

    def encode(self, tokens: list[str]) -> list[int]:
        return [self.id(t) for t in tokens]

    @classmethod
    def build(cls, sentences, min_freq: int = 1) -> "Vocab":
        counts = Counter(tok for s in sentences for tok in s.tokens)
        kept = sorted(
            ((t, c) for t, c in counts.items() if c >= min_freq and t not in _RESERVED),
            key=lambda tc: (-tc[1], tc[0]),
        )
        return cls(kept)

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for token in self.id_to_token[len(_RESERVED):]:
                fh.write(f"{token}\t{self.freqs[token]}\n")

    @classmethod
    def load(cls, path: str | Path) -> "Vocab":
        entries = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.rstrip("\n")
                if not line:
                    continue
                token, freq = line.split("\t")
                entries.append((token, int(freq)))
        return cls(entries)
