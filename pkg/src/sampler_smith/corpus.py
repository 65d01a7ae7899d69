"""Bundled corpus of hand-written samplers, target families and CSV ingestion."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from importlib import resources

from .expr import Lambda, parse_program


@dataclass(frozen=True)
class CorpusEntry:
    name: str
    program: Lambda
    family: str
    # one item per program parameter: a family-parameter name, or a literal
    # value (the initial stack_level of the loop-style samplers)
    arg_convention: tuple
    text: str

    def args(self, params) -> list[float]:
        """Program arguments for family parameters ``params`` (positional)."""
        params = list(params)
        out = []
        for a in self.arg_convention:
            if isinstance(a, str):
                out.append(float(params.pop(0)))
            else:
                out.append(float(a))
        return out


_ENTRIES = (
    ("bernoulli", "bernoulli", ("p",)),
    ("geometric", "geometric", ("p",)),
    ("std-normal", "normal", (0.0,)),
    ("normal", "normal", ("mean", "std", 0.0)),
    ("poisson", "poisson", ("rate",)),
    ("gamma", "gamma", ("alpha", 0.0)),
    ("beta-a-b", "beta", ("alpha", "beta")),
    ("beta-a-1", "beta", ("alpha",)),
)

_cache: tuple[CorpusEntry, ...] | None = None


def load_corpus() -> list[CorpusEntry]:
    global _cache
    if _cache is None:
        pkg = resources.files("sampler_smith") / "corpus"
        entries = []
        for name, family, conv in _ENTRIES:
            text = (pkg / f"{name}.psmp").read_text(encoding="utf-8")
            entries.append(CorpusEntry(name, parse_program(text), family, conv, text))
        _cache = tuple(entries)
    return list(_cache)


def corpus_entry(name: str) -> CorpusEntry:
    for e in load_corpus():
        if e.name == name:
            return e
    raise KeyError(f"no corpus entry named {name!r}")


def holdout(corpus: list[CorpusEntry], names) -> list[CorpusEntry]:
    """Drop the named entries; unknown names are an error."""
    known = {e.name for e in corpus}
    unknown = [n for n in names if n not in known]
    if unknown:
        raise KeyError(f"unknown corpus entries: {', '.join(unknown)}")
    drop = set(names)
    return [e for e in corpus if e.name not in drop]


def family_holdout(family: str) -> list[str]:
    """Names held out when learning ``family`` (every entry of that family)."""
    return [e.name for e in load_corpus() if e.family == family]


def load_programs(directory) -> list[Lambda]:
    """Parse every ``.psmp`` file in a directory, sorted by file name."""
    from pathlib import Path

    return [parse_program(p.read_text(encoding="utf-8")) for p in sorted(Path(directory).glob("*.psmp"))]


# ---------------------------------------------------------------------------
# CSV


class CsvColumnError(ValueError):
    pass


@dataclass
class Column:
    values: list[float]
    skipped: int


MISSING = {"", "?"}


def load_csv_column(path, column: str) -> Column:
    """Finite numeric cells of one column, in file order.

    ``?``, empty and non-numeric cells are skipped and counted.
    """
    values, skipped = [], 0
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or column not in [h.strip() for h in header]:
            raise CsvColumnError(f"column {column!r} not found in {path}")
        idx = [h.strip() for h in header].index(column)
        for row in reader:
            cell = row[idx].strip() if idx < len(row) else ""
            if cell in MISSING:
                skipped += 1
                continue
            try:
                x = float(cell)
            except ValueError:
                skipped += 1
                continue
            if not math.isfinite(x):
                skipped += 1
                continue
            values.append(x)
    if not values:
        raise CsvColumnError(f"column {column!r} in {path} has no numeric values")
    return Column(values, skipped)
