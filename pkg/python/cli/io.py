"""CSV/word/profile ingestion and table emission for the mpbridge CLI."""

import csv
from pathlib import Path
from typing import IO, Any, Iterable, Sequence

import numpy as np
import yaml
from numpy.typing import NDArray

from mpbridge.exceptions import InvalidWord, ValidationError
from mpbridge.rational import Word


def fmt(value: Any) -> str:
    """Locale-independent text for a table cell."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    return str(value)


def emit_table(
    stream: IO[str], header: Sequence[str], rows: Iterable[Sequence[Any]]
) -> None:
    stream.write(",".join(header) + "\n")
    for row in rows:
        if len(row) != len(header):
            raise ValueError(f"row has {len(row)} cells, header has {len(header)}")
        stream.write(",".join(fmt(cell) for cell in row) + "\n")


def _rows(path: Path, expected: Sequence[str]) -> list[dict[str, str]]:
    try:
        with path.open(newline="") as handle:
            reader = csv.DictReader(handle)
            header = [name.strip() for name in (reader.fieldnames or [])]
            if header[: len(expected)] != list(expected):
                raise ValidationError(
                    f"{path}: header must start with {','.join(expected)}, got {','.join(header)}"
                )
            return [{k.strip(): (v or "").strip() for k, v in row.items()} for row in reader]
    except OSError as e:
        raise ValidationError(f"{path}: {e.strerror}") from None


def read_words(path: str | Path, alphabet_size: int = 2) -> list[Word]:
    """Words from a CSV with header `word`, one compact digit string per row."""
    rows = _rows(Path(path), ["word"])
    if not rows:
        raise InvalidWord(f"{path}: no words")
    return [Word.parse(row["word"], alphabet_size) for row in rows]


def read_profile(path: str | Path) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """(x, rho) from a CSV with header `x,rho`, rows ordered by x."""
    rows = _rows(Path(path), ["x", "rho"])
    if not rows:
        raise ValidationError(f"{path}: profile is empty")
    try:
        x = np.array([float(row["x"]) for row in rows])
        rho = np.array([float(row["rho"]) for row in rows])
    except ValueError as e:
        raise ValidationError(f"{path}: {e}") from None
    if np.any(np.diff(x) <= 0):
        raise ValidationError(f"{path}: x must be strictly increasing")
    return x, rho


def resample_profile(rho: NDArray[np.float64], grid: int) -> NDArray[np.float64]:
    """Piecewise-constant resampling of L cell values onto `grid` cells."""
    L = rho.size
    if grid == L:
        return rho
    centers = (np.arange(grid) + 0.5) / grid
    return np.asarray(rho[np.minimum((centers * L).astype(int), L - 1)])


def read_pair_measure(path: str | Path) -> NDArray[np.float64]:
    """ν² grid from a YAML document `nu2: [[...], ...]`."""
    try:
        document = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as e:
        raise ValidationError(f"{path}: {e}") from None
    if not isinstance(document, dict) or "nu2" not in document:
        raise ValidationError(f"{path}: expected a mapping with key 'nu2'")
    try:
        grid = np.array(document["nu2"], dtype=float)
    except (TypeError, ValueError) as e:
        raise ValidationError(f"{path}: nu2 must be a numeric grid ({e})") from None
    if grid.ndim != 2 or grid.shape[0] != grid.shape[1]:
        raise ValidationError(f"{path}: nu2 must be a square grid, got shape {grid.shape}")
    return grid


def parse_floats(text: str) -> NDArray[np.float64]:
    try:
        return np.array([float(part) for part in text.split(",") if part.strip()])
    except ValueError as e:
        raise ValidationError(f"expected comma-separated numbers: {e}") from None


def parse_ints(text: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise ValidationError(f"expected comma-separated integers: {e}") from None
