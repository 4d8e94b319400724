"""A finished (or running) evolution: scheduled snapshots plus streaming probes.

Diagnostics that need every time sample (time integrals, balance laws) are
written as probes: callables fed (t, field, du/dt) during the run that keep
only scalars. Diagnostics that need whole fields at given times read
``RunRecord.snapshots``.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Iterable, Sequence

from .grid import ComplexField
from .integrator import History, StepperConfig, evolve_to


@dataclass
class RunRecord:
    initial: ComplexField
    cfg: StepperConfig
    final: ComplexField | None = None
    snapshots: dict = dc_field(default_factory=dict)
    probes: list = dc_field(default_factory=list)
    history: History = dc_field(default_factory=History)

    @property
    def grid(self):
        return self.initial.grid

    @property
    def t_end(self) -> float:
        return self.final.t if self.final is not None else self.initial.t

    def snapshot(self, t: float, tol: float | None = None) -> ComplexField:
        """Stored snapshot at time ``t`` (within ``tol``, default dt/100)."""
        tol = self.cfg.dt * 1e-2 if tol is None else tol
        best = min(self.snapshots, key=lambda s: abs(s - t), default=None)
        if best is None or abs(best - t) > tol:
            raise KeyError(f"no snapshot at t={t:.10g}; schedule it before running")
        return self.snapshots[best]

    def probe(self, kind: type, **match):
        for p in self.probes:
            if isinstance(p, kind) and all(getattr(p, k) == v for k, v in match.items()):
                return p
        raise KeyError(f"run has no {kind.__name__} probe matching {match}")


class SnapshotKeeper:
    def __init__(self, record: RunRecord, times: Iterable[float]):
        self.record = record
        self.times = sorted(times)

    def __call__(self, t, field, du):
        for s in self.times:
            if abs(s - t) <= 1e-9 * max(1.0, abs(s)):
                self.record.snapshots[s] = field


def simulate(initial: ComplexField, cfg: StepperConfig, t_end: float,
             snapshot_times: Sequence[float] = (), probes: Sequence = (),
             record_history: bool = True) -> RunRecord:
    """Evolve ``initial`` to ``t_end`` landing exactly on every snapshot time."""
    rec = RunRecord(initial, cfg, probes=list(probes))
    times = sorted({float(t) for t in snapshot_times})
    bad = [t for t in times if t < initial.t - 1e-12 or t > t_end + 1e-12]
    if bad:
        raise ValueError(f"snapshot times outside [{initial.t}, {t_end}]: {bad}")
    keeper = SnapshotKeeper(rec, times)
    rec.final = evolve_to(initial, t_end, cfg, callbacks=[keeper, *rec.probes], stops=times,
                          history=rec.history if record_history else None)
    return rec
