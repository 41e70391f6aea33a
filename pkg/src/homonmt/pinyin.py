"""Character-to-syllable conversion and homophone lookup.

The table file is UTF-8, one ``<character>\\t<syllable>`` record per line, ``#`` lines
are comments. Syllables are toneless lowercase pinyin with ``ü`` written ``v``.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence, Union

SYLLABLE_RE = re.compile(r"[a-z]{1,6}")


class TableError(ValueError):
    """Malformed table file."""


class DuplicateEntryError(TableError):
    pass


class UnmappedCharacterError(KeyError):
    def __init__(self, char: str, position: int | None = None):
        self.char = char
        self.position = position
        where = "" if position is None else f" at position {position}"
        super().__init__(f"character {char!r}{where} is not in the syllable table")

    def __str__(self) -> str:
        return self.args[0]


def is_cjk(ch: str) -> bool:
    """CJK Unified Ideographs plus Extension A."""
    cp = ord(ch)
    return 0x4E00 <= cp <= 0x9FFF or 0x3400 <= cp <= 0x4DBF


def is_syllable(s: str) -> bool:
    return SYLLABLE_RE.fullmatch(s) is not None


@dataclass(frozen=True)
class HanChar:
    char: str

    def __post_init__(self):
        if len(self.char) != 1 or not is_cjk(self.char):
            raise ValueError(f"not a CJK ideograph: {self.char!r}")

    @property
    def text(self) -> str:
        return self.char


@dataclass(frozen=True)
class Syllable:
    syllable: str

    def __post_init__(self):
        if not is_syllable(self.syllable):
            raise ValueError(f"invalid syllable: {self.syllable!r}")

    @property
    def text(self) -> str:
        return self.syllable


@dataclass(frozen=True)
class Foreign:
    run: str

    def __post_init__(self):
        if not self.run or any(is_cjk(c) for c in self.run):
            raise ValueError(f"invalid foreign run: {self.run!r}")

    @property
    def text(self) -> str:
        return self.run


Token = Union[HanChar, Syllable, Foreign]


@dataclass(frozen=True)
class SyllableTable:
    char_to_syllable: Mapping[str, str]
    syllable_to_chars: Mapping[str, tuple[str, ...]] = field(repr=False)

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[str, str]]) -> "SyllableTable":
        c2s: dict[str, str] = {}
        s2c: dict[str, list[str]] = {}
        for char, syl in pairs:
            if len(char) != 1 or not is_cjk(char):
                raise TableError(f"key must be a single CJK ideograph: {char!r}")
            if not is_syllable(syl):
                raise TableError(f"invalid syllable {syl!r} for {char!r}")
            if char in c2s:
                raise DuplicateEntryError(f"duplicate entry for {char!r}")
            c2s[char] = syl
            s2c.setdefault(syl, []).append(char)
        return cls(MappingProxyType(c2s), MappingProxyType({s: tuple(cs) for s, cs in s2c.items()}))

    def __len__(self) -> int:
        return len(self.char_to_syllable)

    def __contains__(self, char: object) -> bool:
        return char in self.char_to_syllable

    @property
    def syllables(self) -> list[str]:
        """Distinct syllables, sorted."""
        return sorted(self.syllable_to_chars)

    @property
    def chars(self) -> list[str]:
        """Characters in insertion order."""
        return list(self.char_to_syllable)

    def syllable_of(self, char: str, position: int | None = None) -> str:
        try:
            return self.char_to_syllable[char]
        except KeyError:
            raise UnmappedCharacterError(char, position) from None


def parse_table(lines: Iterable[str]) -> SyllableTable:
    pairs = []
    seen: dict[str, int] = {}
    for lineno, raw in enumerate(lines, 1):
        line = raw.rstrip("\n")
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 2:
            raise TableError(f"line {lineno}: expected 2 tab-separated fields, got {len(fields)}")
        char, syl = fields
        if len(char) != 1 or not is_cjk(char):
            raise TableError(f"line {lineno}: key must be a single CJK ideograph, got {char!r}")
        if not is_syllable(syl):
            raise TableError(f"line {lineno}: invalid syllable {syl!r}")
        if char in seen:
            raise DuplicateEntryError(f"line {lineno}: duplicate entry for {char!r} (first on line {seen[char]})")
        seen[char] = lineno
        pairs.append((char, syl))
    return SyllableTable.from_pairs(pairs)


def load_table(path) -> SyllableTable:
    with open(path, encoding="utf-8") as fh:
        return parse_table(fh)


def save_table(table: SyllableTable, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for char, syl in table.char_to_syllable.items():
            fh.write(f"{char}\t{syl}\n")


def default_table() -> SyllableTable:
    """The shipped GB2312 level-1 table (3,755 characters)."""
    ref = resources.files("homonmt") / "data" / "syllables.tsv"
    with ref.open(encoding="utf-8") as fh:
        return parse_table(fh)


def tokenize(text: str | bytes) -> list[Token]:
    """One HanChar per ideograph; maximal non-CJK runs become single Foreign tokens."""
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    tokens: list[Token] = []
    run: list[str] = []
    for ch in text:
        if is_cjk(ch):
            if run:
                tokens.append(Foreign("".join(run)))
                run = []
            tokens.append(HanChar(ch))
        else:
            run.append(ch)
    if run:
        tokens.append(Foreign("".join(run)))
    return tokens


def render_plain(tokens: Sequence[Token]) -> str:
    return "".join(t.text for t in tokens)


def transcribe(table: SyllableTable, tokens: Sequence[Token]) -> list[Token]:
    """Replace every HanChar by its Syllable; other tokens pass through."""
    out: list[Token] = []
    for i, tok in enumerate(tokens):
        if isinstance(tok, HanChar):
            out.append(Syllable(table.syllable_of(tok.char, i)))
        else:
            out.append(tok)
    return out


def homophones(table: SyllableTable, char: str) -> tuple[str, ...]:
    syl = table.syllable_of(char)
    return tuple(c for c in table.syllable_to_chars[syl] if c != char)


def render_mixed(tokens: Sequence[Token]) -> str:
    """Characters run together; every syllable is set off from its neighbours by one space."""
    out: list[str] = []
    prev: Token | None = None
    for tok in tokens:
        if prev is not None and (isinstance(tok, Syllable) or isinstance(prev, Syllable)):
            out.append(" ")
        out.append(tok.text)
        prev = tok
    return "".join(out)


_PIECE_RE = re.compile(r"\S+|\s+")


def parse_mixed(text: str | bytes, table: SyllableTable) -> list[Token]:
    """Inverse of render_mixed.

    Whitespace-delimited lowercase words found in the table's syllable inventory become
    Syllable tokens; everything else that is not an ideograph is Foreign. One space on
    each side of a syllable is treated as a delimiter.
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    tokens: list[Token] = []
    run: list[str] = []

    def flush_run():
        if not run:
            return
        parts = _PIECE_RE.findall("".join(run))
        run.clear()
        flags = [p in table.syllable_to_chars for p in parts]
        buf = ""
        for k, part in enumerate(parts):
            if flags[k]:
                if buf:
                    tokens.append(Foreign(buf))
                    buf = ""
                tokens.append(Syllable(part))
            elif part.isspace():
                after_syl = k > 0 and flags[k - 1]
                before_syl = flags[k + 1] if k + 1 < len(parts) else False
                if after_syl:
                    part = part[1:]
                if before_syl and part:
                    part = part[:-1]
                buf += part
            else:
                buf += part
        if buf:
            tokens.append(Foreign(buf))

    for ch in text:
        if is_cjk(ch):
            flush_run()
            tokens.append(HanChar(ch))
        else:
            run.append(ch)
    flush_run()
    return tokens
