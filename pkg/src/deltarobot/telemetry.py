"""Column-oriented run log with a deterministic CSV form."""

from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np

COLUMNS = (
    "t",
    "mode",
    "contact",
    "x", "y", "z",
    "vx", "vy", "vz",
    "qw", "qx", "qy", "qz",
    "wx", "wy", "wz",
    "q1", "q2",
    "yaw", "tilt", "rolling",
    "ex", "ey", "ez",
    "e_roll", "e_pitch", "e_yaw",
    "e_tilt", "e_rolling",
    "lam_y1", "lam_z1", "lam_y2", "lam_z2", "lam_y3", "lam_z3",
    "thrust1", "thrust2", "thrust3",
    "phi1", "phi2", "phi3",
    "thrust_act1", "thrust_act2", "thrust_act3",
    "phi_act1", "phi_act2", "phi_act3",
    "normal_force",
    "slip",
    "slip_speed",
    "penetration",
    "joint_torque1", "joint_torque2",
    "qp_status",
    "qp_iter",
    "degraded",
)

TEXT_COLUMNS = frozenset({"mode", "contact", "qp_status"})
INT_COLUMNS = frozenset({"slip", "qp_iter", "degraded"})


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    # repr of a Python float round-trips exactly
    return repr(float(v))


def _parse(column: str, text: str):
    if column in TEXT_COLUMNS:
        return text
    if column in INT_COLUMNS:
        return int(text)
    return float(text)


class TelemetryLog:
    def __init__(self, columns=COLUMNS):
        self.columns = tuple(columns)
        self._index = {c: i for i, c in enumerate(self.columns)}
        self.rows: list[tuple] = []

    def __len__(self) -> int:
        return len(self.rows)

    def append(self, row: dict) -> None:
        missing = set(self.columns) - row.keys()
        if missing:
            raise KeyError(f"missing log columns: {sorted(missing)}")
        self.rows.append(tuple(row[c] for c in self.columns))

    def column(self, name: str) -> np.ndarray:
        i = self._index[name]
        values = [r[i] for r in self.rows]
        if name in TEXT_COLUMNS:
            return np.array(values, dtype=object)
        return np.array(values, dtype=float)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([_fmt(v) for v in r])
        return buf.getvalue()

    def write(self, path) -> Path:
        path = Path(path)
        path.write_text(self.to_csv())
        return path

    @classmethod
    def read(cls, path) -> "TelemetryLog":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            log = cls(header)
            for rec in reader:
                log.rows.append(tuple(_parse(c, v) for c, v in zip(header, rec)))
        return log
