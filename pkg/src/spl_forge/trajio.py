"""Trajectory container and its CSV form.

One row per sample; first column is time, strictly increasing.  Chemical
runs emit ``time,<species...>,pool,injected,leaked`` with species columns in
catalog order.  Physical runs share the same container and conventions with
their own state columns.  Numbers are written in full precision (shortest
round-trip decimal), so identical runs produce byte-identical files.
"""
from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

__all__ = ["Trajectory", "write_trajectory_csv", "read_trajectory_csv", "atomic_write_text"]


def atomic_write_text(path: str, text: str) -> None:
    """Whole-file atomic write (temp file + rename)."""
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@dataclass
class Trajectory:
    columns: list[str]
    rows: np.ndarray                      # shape (n_samples, n_columns)
    int_columns: set[str] = field(default_factory=set)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=float)
        if self.rows.ndim != 2 or self.rows.shape[1] != len(self.columns):
            raise ValueError("row shape does not match columns")
        t = self.rows[:, 0]
        if len(t) > 1 and not np.all(np.diff(t) > 0):
            raise ValueError("times must be strictly increasing")

    def column(self, name: str) -> np.ndarray:
        return self.rows[:, self.columns.index(name)]

    @property
    def times(self) -> np.ndarray:
        return self.rows[:, 0]

    @property
    def duration(self) -> float:
        return float(self.rows[-1, 0] - self.rows[0, 0])

    def sample_interval(self) -> float:
        if len(self.rows) < 2:
            return 0.0
        return float(np.median(np.diff(self.times)))

    def to_csv(self) -> str:
        def fmt(name: str, x: float) -> str:
            if name in self.int_columns:
                return str(int(round(x)))
            return repr(float(x))

        lines = [",".join(self.columns)]
        for row in self.rows:
            lines.append(",".join(fmt(c, x) for c, x in zip(self.columns, row)))
        return "\n".join(lines) + "\n"


def write_trajectory_csv(traj: Trajectory, path: str) -> None:
    atomic_write_text(path, traj.to_csv())


def read_trajectory_csv(path: str) -> Trajectory:
    with open(path) as fh:
        header = fh.readline().strip()
        if not header:
            raise ValueError(f"{path}: empty trajectory file")
        columns = header.split(",")
        rows = []
        float_written = [False] * len(columns)  # saw a '.' or exponent in this column
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != len(columns):
                raise ValueError(f"{path}:{lineno}: expected {len(columns)} fields")
            rows.append([float(p) for p in parts])
            for j, p in enumerate(parts):
                if "." in p or "e" in p or "E" in p or "inf" in p or "nan" in p:
                    float_written[j] = True
    arr = np.array(rows, dtype=float) if rows else np.zeros((0, len(columns)))
    int_columns = {c for j, c in enumerate(columns) if rows and not float_written[j]}
    return Trajectory(columns=columns, rows=arr, int_columns=int_columns)
