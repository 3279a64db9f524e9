"""
Text formats used by the CLI.

- Point files: one point per line, comma or whitespace delimited, optional
  single non-numeric header line.
- Linkage files: ``left right height size`` per internal node.
- Stats reports: ``key value`` lines followed by a per-round table.

Reals are written with the shortest repr that round-trips a 64-bit float.
"""
import io
import math
import os
import re
from contextlib import contextmanager
from typing import IO, Iterator, List, Optional, Sequence, Union

import numpy as np

from core.chain_engine import RunStats
from core.dendrogram import Dendrogram
from core.errors import InvalidInputError, ParseError
from core.spatial import PointSet

Source = Union[str, os.PathLike, IO[str]]

_DELIMITERS = re.compile(r"[,\s]+")


def format_real(value: float) -> str:
    """Shortest exact text form; integral values drop the trailing ``.0``."""
    text = repr(float(value))
    return text[:-2] if text.endswith(".0") else text


@contextmanager
def _reader(source: Source) -> Iterator[IO[str]]:
    if hasattr(source, "read"):
        yield source
        return
    try:
        with open(source, "r", encoding="utf-8") as handle:
            yield handle
    except OSError as e:
        raise InvalidInputError(f"cannot read {source}: {e.strerror or e}") from e
    except UnicodeDecodeError as e:
        raise InvalidInputError(f"cannot read {source}: not UTF-8 text (byte {e.start})") from e


@contextmanager
def _writer(target: Source) -> Iterator[IO[str]]:
    if hasattr(target, "write"):
        yield target
        return
    directory = os.path.dirname(os.fspath(target))
    try:
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(target, "w", encoding="utf-8") as handle:
            yield handle
    except OSError as e:
        raise InvalidInputError(f"cannot write {target}: {e.strerror or e}") from e


def _tokens(line: str) -> List[str]:
    return [tok for tok in _DELIMITERS.split(line.strip()) if tok]


def _parse_row(tokens: Sequence[str], line_no: int) -> List[float]:
    values = []
    for tok in tokens:
        try:
            value = float(tok)
        except ValueError:
            raise ParseError(f"not a number: '{tok}'", line=line_no) from None
        if not math.isfinite(value):
            raise ParseError(f"non-finite value '{tok}'", line=line_no)
        values.append(value)
    return values


def parse_points(source: Source) -> PointSet:
    """Read a point file.

    Raises:
        ParseError: Ragged rows or non-numeric / non-finite values (with line number)
        InvalidInputError: Empty input or unreadable file
    """
    rows: List[List[float]] = []
    width: Optional[int] = None
    first = True
    with _reader(source) as handle:
        for line_no, line in enumerate(handle, start=1):
            tokens = _tokens(line)
            if not tokens:
                continue
            if first:
                first = False
                if any(_is_header_token(tok) for tok in tokens):
                    continue
            values = _parse_row(tokens, line_no)
            if width is None:
                width = len(values)
            elif len(values) != width:
                raise ParseError(f"expected {width} values, found {len(values)}", line=line_no)
            rows.append(values)
    if not rows:
        raise InvalidInputError("point file contains no points")
    return PointSet(np.array(rows, dtype=np.float64))


def _is_header_token(token: str) -> bool:
    try:
        float(token)
    except ValueError:
        return True
    return False


def parse_points_text(text: str) -> PointSet:
    return parse_points(io.StringIO(text))


def write_points(target: Source, points: PointSet, header: Optional[Sequence[str]] = None) -> None:
    """Write one point per line, space delimited."""
    with _writer(target) as out:
        if header:
            out.write(" ".join(header) + "\n")
        for row in points.points:
            out.write(" ".join(format_real(v) for v in row) + "\n")


def write_labels(target: Source, labels: np.ndarray) -> None:
    with _writer(target) as out:
        for label in np.asarray(labels).tolist():
            out.write(f"{int(label)}\n")


def linkage_text(dendrogram: Dendrogram) -> str:
    lines = [f"{int(l)} {int(r)} {format_real(h)} {int(s)}" for l, r, h, s in dendrogram.linkage_matrix()]
    return "".join(line + "\n" for line in lines)


def write_linkage(target: Source, dendrogram: Dendrogram) -> None:
    """Write the dendrogram in export order."""
    with _writer(target) as out:
        out.write(linkage_text(dendrogram))


def read_linkage(source: Source, n: Optional[int] = None) -> Dendrogram:
    """Read a linkage file written by :func:`write_linkage`.

    Raises:
        ParseError: A row is not four numbers
        InvalidInputError: The rows do not form a valid dendrogram
    """
    rows: List[List[float]] = []
    with _reader(source) as handle:
        for line_no, line in enumerate(handle, start=1):
            tokens = _tokens(line)
            if not tokens:
                continue
            if len(tokens) != 4:
                raise ParseError(f"expected 4 values, found {len(tokens)}", line=line_no)
            rows.append(_parse_row(tokens, line_no))
    if n is None and not rows:
        raise InvalidInputError("linkage file is empty; pass n for a single-point dendrogram")
    return Dendrogram.from_linkage_matrix(rows, n)


def stats_text(stats: RunStats) -> str:
    """Line-oriented ``key value`` report plus a per-round table."""
    lines = ["# run"]
    for key, value in stats.as_dict().items():
        text = format_real(value) if isinstance(value, float) else str(value)
        lines.append(f"{key} {text}")
    lines.append("# rounds")
    lines.append("round terminals active merges")
    for record in stats.per_round:
        lines.append(f"{record.index} {record.terminals} {record.active} {record.merges}")
    return "\n".join(lines) + "\n"


def write_stats(target: Source, stats: RunStats) -> None:
    with _writer(target) as out:
        out.write(stats_text(stats))
