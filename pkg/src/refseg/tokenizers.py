"""Referring-expression tokenizers.

Two interchangeable implementations sit behind the same interface:

* ``BPETokenizer`` — byte-level BPE compatible with the merge tables shipped
  with CLIP checkpoints, for runs that load pretrained text weights.
* ``WordTokenizer`` — lowercase word-level tokenizer with a vocabulary built
  from the dataset itself, for from-scratch desk-scale runs where a 49k-entry
  merge table would be dead weight.

Both expose ``encode`` (body ids only), the special ids, and ``vocab_size``;
``tokenize`` wraps either into the fixed-length id sequence the text encoder
consumes.
"""

from __future__ import annotations

import gzip
import html
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import regex as re


@dataclass
class TextQuery:
    """A referring expression after tokenization.

    token_ids starts with SOS; the last non-padding token is EOS; length
    counts the non-padding tokens.
    """

    raw: str
    token_ids: list[int]
    length: int


def tokenize(raw: str, tokenizer, max_len: int = 20) -> TextQuery:
    """Encode ``raw`` as SOS + body + EOS, truncated to ``max_len``, padded.

    Truncation keeps the first max_len - 1 tokens and forces EOS last, so
    the position the encoder reads always exists.
    """
    if max_len < 2:
        raise ValueError("max_len must be at least 2 to hold SOS and EOS")
    body = tokenizer.encode(raw)
    ids = [tokenizer.sos_id] + body + [tokenizer.eos_id]
    if len(ids) > max_len:
        ids = ids[: max_len - 1] + [tokenizer.eos_id]
    length = len(ids)
    ids = ids + [tokenizer.pad_id] * (max_len - len(ids))
    return TextQuery(raw=raw, token_ids=ids, length=length)


def _clean(text: str) -> str:
    text = html.unescape(html.unescape(text))
    text = re.sub(r"\s+", " ", text)
    return text.strip().lower()


@lru_cache()
def _bytes_to_unicode() -> dict[int, str]:
    # Reversible byte -> printable-unicode map (the GPT-2 construction);
    # keeps every byte sequence encodable without control characters.
    bs = list(range(ord("!"), ord("~") + 1)) + list(range(ord("¡"), ord("¬") + 1)) + list(range(ord("®"), ord("ÿ") + 1))
    cs = bs[:]
    n = 0
    for b in range(256):
        if b not in bs:
            bs.append(b)
            cs.append(256 + n)
            n += 1
    return dict(zip(bs, [chr(c) for c in cs]))


def _get_pairs(word: tuple[str, ...]) -> set[tuple[str, str]]:
    return set(zip(word[:-1], word[1:]))


class BPETokenizer:
    """Byte-level BPE over a merge table in the CLIP text file format.

    The merge file is plain text (optionally gzipped): one header line,
    then one merge per line ("left right"). The derived vocabulary is
    256 byte symbols + 256 end-of-word variants + one token per merge +
    the two sentinel tokens, in that order, so ids line up with CLIP's.
    """

    SOS_TOKEN = "<|startoftext|>"
    EOS_TOKEN = "<|endoftext|>"

    _pattern = re.compile(
        r"""<\|startoftext\|>|<\|endoftext\|>|'s|'t|'re|'ve|'m|'ll|'d|[\p{L}]+|[\p{N}]|[^\s\p{L}\p{N}]+""",
        re.IGNORECASE,
    )

    def __init__(self, merges_path: str | Path):
        merges_path = Path(merges_path)
        opener = gzip.open if merges_path.suffix == ".gz" else open
        with opener(merges_path, "rt", encoding="utf-8") as fh:
            lines = fh.read().split("\n")
        merges = [tuple(line.split()) for line in lines[1:] if len(line.split()) == 2]

        self.byte_encoder = _bytes_to_unicode()
        self.byte_decoder = {v: k for k, v in self.byte_encoder.items()}
        vocab = list(self.byte_encoder.values())
        vocab = vocab + [v + "</w>" for v in vocab]
        vocab.extend("".join(m) for m in merges)
        vocab.extend([self.SOS_TOKEN, self.EOS_TOKEN])
        self.encoder = {tok: i for i, tok in enumerate(vocab)}
        self.decoder = {i: tok for tok, i in self.encoder.items()}
        self.bpe_ranks = dict(zip(merges, range(len(merges))))
        self._cache: dict[str, str] = {}

    @property
    def vocab_size(self) -> int:
        return len(self.encoder)

    @property
    def sos_id(self) -> int:
        return self.encoder[self.SOS_TOKEN]

    @property
    def eos_id(self) -> int:
        return self.encoder[self.EOS_TOKEN]

    @property
    def pad_id(self) -> int:
        return 0

    def _bpe(self, token: str) -> str:
        if token in self._cache:
            return self._cache[token]
        word = tuple(token[:-1]) + (token[-1] + "</w>",)
        pairs = _get_pairs(word)
        if not pairs:
            return token + "</w>"
        while True:
            bigram = min(pairs, key=lambda p: self.bpe_ranks.get(p, float("inf")))
            if bigram not in self.bpe_ranks:
                break
            first, second = bigram
            new_word: list[str] = []
            i = 0
            while i < len(word):
                try:
                    j = word.index(first, i)
                except ValueError:
                    new_word.extend(word[i:])
                    break
                new_word.extend(word[i:j])
                i = j
                if i < len(word) - 1 and word[i + 1] == second:
                    new_word.append(first + second)
                    i += 2
                else:
                    new_word.append(word[i])
                    i += 1
            word = tuple(new_word)
            if len(word) == 1:
                break
            pairs = _get_pairs(word)
        out = " ".join(word)
        self._cache[token] = out
        return out

    def encode(self, text: str) -> list[int]:
        ids: list[int] = []
        for token in self._pattern.findall(_clean(text)):
            token = "".join(self.byte_encoder[b] for b in token.encode("utf-8"))
            ids.extend(self.encoder[piece] for piece in self._bpe(token).split(" "))
        return ids

    def decode(self, ids: list[int]) -> str:
        text = "".join(self.decoder[i] for i in ids if i in self.decoder)
        data = bytearray(self.byte_decoder[ch] for ch in text if ch in self.byte_decoder)
        return data.decode("utf-8", errors="replace").replace("</w>", " ").strip()


class WordTokenizer:
    """Lowercase word-level tokenizer with a dataset-built vocabulary."""

    PAD_TOKEN = "<pad>"
    SOS_TOKEN = "<sos>"
    EOS_TOKEN = "<eos>"
    UNK_TOKEN = "<unk>"
    _specials = (PAD_TOKEN, SOS_TOKEN, EOS_TOKEN, UNK_TOKEN)

    _word_re = re.compile(r"[a-z0-9]+")

    def __init__(self, words: list[str]):
        self._tokens = list(self._specials) + [w for w in words if w not in self._specials]
        self._ids = {tok: i for i, tok in enumerate(self._tokens)}

    @classmethod
    def from_texts(cls, texts) -> "WordTokenizer":
        words = sorted({w for text in texts for w in cls._word_re.findall(text.lower())})
        return cls(words)

    @property
    def vocab_size(self) -> int:
        return len(self._tokens)

    @property
    def pad_id(self) -> int:
        return self._ids[self.PAD_TOKEN]

    @property
    def sos_id(self) -> int:
        return self._ids[self.SOS_TOKEN]

    @property
    def eos_id(self) -> int:
        return self._ids[self.EOS_TOKEN]

    @property
    def unk_id(self) -> int:
        return self._ids[self.UNK_TOKEN]

    def encode(self, text: str) -> list[int]:
        return [self._ids.get(w, self.unk_id) for w in self._word_re.findall(text.lower())]

    def decode(self, ids: list[int]) -> str:
        words = [self._tokens[i] for i in ids if 0 <= i < len(self._tokens)]
        return " ".join(w for w in words if w not in self._specials)

    def save(self, path: str | Path) -> None:
        """Newline-delimited token list; the header line pins the special ids."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        header = f"#pad={self.pad_id} sos={self.sos_id} eos={self.eos_id} unk={self.unk_id}\n"
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(header)
            fh.write("\n".join(self._tokens) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "WordTokenizer":
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
        if not lines or not lines[0].startswith("#"):
            raise ValueError(f"{path}: missing vocabulary header line")
        declared = dict(part.split("=") for part in lines[0][1:].split())
        tokens = lines[1:]
        tok = cls.__new__(cls)
        tok._tokens = tokens
        tok._ids = {t: i for i, t in enumerate(tokens)}
        for name, attr in (("pad", "pad_id"), ("sos", "sos_id"), ("eos", "eos_id"), ("unk", "unk_id")):
            if int(declared[name]) != getattr(tok, attr):
                raise ValueError(f"{path}: header {name}={declared[name]} disagrees with token list")
        return tok


def build_tokenizer(cfg) -> BPETokenizer | WordTokenizer:
    """Instantiate the tokenizer a RunConfig names."""
    if cfg.tokenizer == "bpe":
        if not cfg.merges_path:
            raise ValueError("tokenizer 'bpe' requires merges_path")
        return BPETokenizer(cfg.merges_path)
    if not cfg.vocab_path:
        raise ValueError("tokenizer 'word' requires vocab_path")
    return WordTokenizer.load(cfg.vocab_path)
