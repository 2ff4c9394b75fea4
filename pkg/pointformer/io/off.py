"""OFF mesh reader. Vertices only; faces are ignored."""

from __future__ import annotations

import math
from collections.abc import Iterator
from pathlib import Path

import numpy as np

from pointformer.core.errors import ParseError
from pointformer.geometry.pointcloud import PointCloud

_FLOAT32_MAX = float(np.finfo(np.float32).max)


def _significant_lines(text: str) -> Iterator[tuple[int, str]]:
    """(1-based line number, content) with comments and blank lines dropped."""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        content = raw.split("#", 1)[0].strip()
        if content:
            yield lineno, content


def _parse_counts(tokens: list[str], lineno: int) -> int:
    if len(tokens) not in (2, 3):
        raise ParseError(
            f"expected 'vertices faces [edges]' counts, got {len(tokens)} fields", lineno
        )
    try:
        counts = [int(t) for t in tokens]
    except ValueError as exc:
        raise ParseError(f"non-integer count in {' '.join(tokens)!r}", lineno) from exc
    if any(c < 0 for c in counts):
        raise ParseError("counts must be non-negative", lineno)
    if counts[0] == 0:
        raise ParseError("the mesh declares no vertices", lineno)
    return counts[0]


def parse_off(text: str) -> PointCloud:
    """Parse OFF text into a cloud of exactly the declared vertex count.

    Accepts the ``OFF`` keyword on its own line or glued to the counts
    (``OFF4 0 0``). Any malformed input raises :class:`ParseError`.
    """
    lines = _significant_lines(text)
    header = next(lines, None)
    if header is None:
        raise ParseError("empty file, expected 'OFF' header", 1)
    lineno, content = header
    if not content.startswith("OFF"):
        raise ParseError(f"expected 'OFF' header, got {content[:20]!r}", lineno)
    rest = content[3:].split()
    if not rest:
        counts_line = next(lines, None)
        if counts_line is None:
            raise ParseError("missing vertex/face counts", lineno + 1)
        lineno, content = counts_line
        rest = content.split()
    n_vertices = _parse_counts(rest, lineno)

    vertices = []
    last_line = lineno
    for _ in range(n_vertices):
        entry = next(lines, None)
        if entry is None:
            raise ParseError(
                f"declared {n_vertices} vertices, found {len(vertices)}",
                _line_after(text, last_line),
            )
        last_line, content = entry
        tokens = content.split()
        if len(tokens) < 3:
            raise ParseError(f"vertex needs 3 coordinates, got {len(tokens)}", last_line)
        try:
            xyz = [float(t) for t in tokens[:3]]
        except ValueError as exc:
            raise ParseError(f"non-numeric vertex {content[:40]!r}", last_line) from exc
        if not all(math.isfinite(v) and abs(v) <= _FLOAT32_MAX for v in xyz):
            raise ParseError("vertex coordinates must be finite 32-bit floats", last_line)
        vertices.append(xyz)
    return PointCloud(np.asarray(vertices, dtype=np.float32))


def _line_after(text: str, lineno: int) -> int:
    """Number of the line following *lineno* that would have held the next vertex."""
    total = len(text.splitlines())
    return max(lineno, total) + 1


def read_off(path: str | Path) -> PointCloud:
    try:
        text = Path(path).read_bytes().decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"{path}: not UTF-8 text") from exc
    return parse_off(text)
