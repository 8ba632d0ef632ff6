"""Output emission: CSV, JSON, and plot scripts with provenance stamps.

Every text output starts with comment lines carrying the tool version and
the configuration hash, so a file can always be traced back to the exact
experiment that produced it.  Floats are written in their shortest
round-trip decimal form — two runs that compute the same numbers emit
byte-identical files.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

TOOL_NAME = "carpetmf"
TOOL_VERSION = "0.1.0"

__all__ = [
    "TOOL_NAME",
    "TOOL_VERSION",
    "format_value",
    "provenance_comments",
    "provenance_meta",
    "jsonable",
    "write_csv",
    "write_json",
    "write_plot_script",
]


def provenance_comments(config_sha: str | None = None) -> list[str]:
    """Header comment lines naming the tool, version, and config hash."""
    lines = [f"{TOOL_NAME} {TOOL_VERSION}"]
    if config_sha:
        lines.append(f"config {config_sha}")
    return lines


def provenance_meta(config_sha: str | None = None) -> dict:
    """The same provenance as a JSON-embeddable object."""
    meta = {"tool": TOOL_NAME, "version": TOOL_VERSION}
    if config_sha:
        meta["configSha256"] = config_sha
    return meta


def format_value(value) -> str:
    """Shortest round-trip text for a table cell."""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def write_csv(
    path: str | Path,
    header: Sequence[str],
    rows: Iterable[Sequence],
    comments: Sequence[str] = (),
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for line in comments:
            fh.write(f"# {line}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(format_value(v) for v in row) + "\n")
    return path


def jsonable(value):
    """Recursively convert numpy scalars/arrays to plain JSON types."""
    if isinstance(value, Mapping):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, np.ndarray):
        return [jsonable(v) for v in value.tolist()]
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.bool_,)):
        return bool(value)
    return value


def write_json(
    path: str | Path, payload: Mapping, config_sha: str | None = None
) -> Path:
    """Write a payload with an embedded ``meta`` provenance object."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    document = {"meta": provenance_meta(config_sha)}
    document.update(jsonable(payload))
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(document, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def write_plot_script(
    path: str | Path,
    plots: Sequence[tuple[str, int, int, str]],
    title: str,
    xlabel: str,
    ylabel: str,
    comments: Sequence[str] = (),
) -> Path:
    """Emit a gnuplot script rendering columns of the emitted CSV files.

    ``plots`` lists ``(csv_filename, x_column, y_column, label)`` with
    1-based column indices, matching gnuplot's ``using`` convention.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"# {line}" for line in comments]
    lines += [
        "set datafile separator ','",
        "set datafile commentschars '#'",
        f"set title '{title}'",
        f"set xlabel '{xlabel}'",
        f"set ylabel '{ylabel}'",
        "set key outside",
    ]
    clauses = [
        f"'{name}' using {xcol}:{ycol} with linespoints title '{label}'"
        for name, xcol, ycol, label in plots
    ]
    lines.append("plot " + ", \\\n     ".join(clauses))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path
