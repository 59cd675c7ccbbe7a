"""Timestamped trace records, emitted in simulation order."""

from __future__ import annotations

import csv
from dataclasses import dataclass


@dataclass(frozen=True)
class TraceRecord:
    time: int
    component: str
    event: str
    detail: str = ""


class TraceRecorder:
    def __init__(self, sim) -> None:
        self.sim = sim
        self.records: list[TraceRecord] = []

    def record(self, component: str, event: str, detail: str = "") -> None:
        self.records.append(TraceRecord(self.sim.now, component, event, detail))


def emit_trace(records, path) -> None:
    """CSV with a fixed header; details are quoted only when needed."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["time_ps", "component", "event", "detail"])
        for rec in records:
            writer.writerow([rec.time, rec.component, rec.event, rec.detail])
