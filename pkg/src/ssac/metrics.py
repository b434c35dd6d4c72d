"""CSV emission for training metrics and per-episode safety probes."""

from __future__ import annotations

import csv
from dataclasses import astuple, fields

from .learner import METRICS_HEADER, MetricsRow, TrajectoryProbe

PROBE_HEADER = ["step", "phi_max", "transition_cost", "in_safe_subset"]


def _cell(v):
    # repr round-trips floats exactly.
    return repr(v) if isinstance(v, float) else str(v)


def write_metrics(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRICS_HEADER)
        for row in rows:
            w.writerow([_cell(v) for v in astuple(row)])


class MetricsWriter:
    """Appends rows as they arrive so partial runs leave a usable file."""

    def __init__(self, path):
        self._fh = open(path, "w", newline="")
        self._w = csv.writer(self._fh, lineterminator="\n")
        self._w.writerow(METRICS_HEADER)
        self._fh.flush()

    def write(self, row: MetricsRow) -> None:
        self._w.writerow([_cell(v) for v in astuple(row)])
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_metrics(path) -> list[MetricsRow]:
    kinds = {f.name: f.type for f in fields(MetricsRow)}
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != METRICS_HEADER:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        for rec in reader:
            out.append(MetricsRow(**{k: (int(v) if kinds[k] in (int, "int") else float(v)) for k, v in rec.items()}))
    return out


def write_probe(path, probe: TrajectoryProbe) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PROBE_HEADER)
        for i, (p, c, s) in enumerate(zip(probe.phi_max, probe.transition_cost, probe.in_safe_subset)):
            w.writerow([i, _cell(p), _cell(c), int(s)])
