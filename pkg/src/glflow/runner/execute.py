"""Single runs: build, evolve in checkpointed segments, evaluate diagnostics."""

from __future__ import annotations

import logging
import math
import time
from pathlib import Path

import numpy as np

from .. import energy, integrator, mcf, phase, seeds, vortex
from ..grid import GridSpec, gradient
from ..record import RunRecord, SnapshotKeeper
from ..snapshot import write_snapshot
from . import checkpoint
from .config import RunConfig
from .report import ExperimentReport, ReportLine, check

log = logging.getLogger(__name__)

CHECKPOINT_NAME = "checkpoint.glck"


def build_grid(v: dict) -> GridSpec:
    return GridSpec.from_length(v["grid.dim"], v["grid.n"], v["grid.length"], v["grid.epsilon"])


def build_initial(grid: GridSpec, v: dict):
    kind = v["init.kind"]
    if kind == "vacuum":
        return seeds.vacuum(grid)
    if kind == "vortices":
        spec = [((row[0], row[1]), int(row[2])) for row in v["init.vortices"]]
        return seeds.seed_vortex_configuration(grid, spec)
    if kind == "ring":
        radius = v["init.radius"] or grid.lengths[0] / 4
        return seeds.seed_vortex_ring(grid, radius)
    if kind == "random_phase":
        return seeds.random_phase(grid, v["init.amplitude"], v["init.correlation"], v["seed"])
    if kind == "perturbation":
        return seeds.random_perturbation(grid, v["init.amplitude"], v["init.correlation"], v["seed"])
    if kind == "plane_wave":
        return seeds.plane_wave(grid, v["init.modes"])
    raise ValueError(f"unknown init.kind {kind!r}")


def build_stepper(grid: GridSpec, v: dict, sup: float = 1.0) -> integrator.StepperConfig:
    """``sup`` is sup|u| of the initial data, which bounds it for all later times."""
    probe = integrator.StepperConfig(dt=1.0, scheme=v["stepper.scheme"], order=v["stepper.order"])
    dt = v["stepper.dt"] or v["stepper.dt_fraction"] * probe.max_dt(grid, sup)
    cfg = integrator.StepperConfig(dt=dt, scheme=v["stepper.scheme"], order=v["stepper.order"],
                                   t_end=v["stepper.t_end"], cadence=v["stepper.cadence"])
    cfg.validate(grid, sup)
    return cfg


def _center(grid: GridSpec) -> tuple:
    return tuple(0.5 * L for L in grid.lengths)


def snapshot_schedule(v: dict) -> list[float]:
    """Every time some diagnostic needs a whole field."""
    t_end = v["stepper.t_end"]
    times = set(v["output.snapshots"])
    if v["diag.monotonicity.points"]:
        ts = v["diag.monotonicity.t_star"]
        times.update(ts - r * r for r in v["diag.monotonicity.radii"])
    if v["diag.phase.t0"] >= 0:
        times.update((v["diag.phase.t0"], v["diag.phase.t1"]))
    bad = sorted(t for t in times if t < -1e-12 or t > t_end + 1e-12)
    if bad:
        raise ValueError(f"scheduled times outside [0, t_end={t_end:g}]: {bad}")
    return sorted(times)


def stress_field(grid: GridSpec, v: dict) -> list:
    """X = grad chi for a Gaussian bump; place it off any symmetry axis of the data,
    otherwise both sides of the stress identity vanish identically."""
    c = tuple(v["diag.stress.center"]) or _center(grid)
    return gradient(grid, energy.bump(grid, c, v["diag.balance.width"]))


def build_probes(grid: GridSpec, v: dict, initial) -> dict:
    p = {"energy": energy.DissipationProbe()}
    if v["diag.xi.points"]:
        p["xi"] = [energy.XiIdentityProbe(pt, v["diag.xi.t_star"]) for pt in v["diag.xi.points"]]
    if v["diag.balance"]:
        c = tuple(v["diag.balance.center"]) or _center(grid)
        p["balance"] = energy.EnergyBalanceProbe(energy.bump(grid, c, v["diag.balance.width"]), "bump")
    if v["diag.stress"]:
        p["stress"] = energy.StressProbe(stress_field(grid, v), v["diag.stress.every"])
    if v["diag.track"]:
        r_mass = v["diag.track.r_mass"] or 10 * grid.epsilon
        p["track"] = vortex.VortexProbe(v["diag.track.every"], r_mass)
    if v["diag.filament"]:
        p["filament"] = vortex.FilamentProbe(v["diag.filament.every"])
    if v["diag.clearing.point"]:
        eta_cfg = v["thresholds.eta_cfg"] or None
        p["clearing"] = vortex.ClearingOutProbe(v["diag.clearing.point"], v["diag.clearing.time"],
                                                v["diag.clearing.radius"], v["thresholds.lambda"],
                                                eta_cfg, track_core=v["diag.clearing.core"])
    return p


def _flat(probes: dict) -> list:
    out = []
    for val in probes.values():
        out.extend(val if isinstance(val, list) else [val])
    return out


def segment_ends(cfg: integrator.StepperConfig, t_end: float, segment_steps: int) -> list[float]:
    if segment_steps <= 0:
        return [t_end]
    span = segment_steps * cfg.dt
    n = max(1, math.ceil(t_end / span - 1e-9))
    return [min((k + 1) * span, t_end) for k in range(n)]


class Run:
    """Evolution state that can be checkpointed between segments."""

    def __init__(self, config: RunConfig):
        self.config = config
        self.v = config.values()
        self.grid = build_grid(self.v)
        self.initial = build_initial(self.grid, self.v)
        self.cfg = build_stepper(self.grid, self.v, self.initial.sup())
        self.field = self.initial
        self.segment = 0
        self.times = snapshot_schedule(self.v)
        self.record = RunRecord(self.initial, self.cfg)
        self.probes = build_probes(self.grid, self.v, self.initial)
        self.record.probes = _flat(self.probes)
        self.ends = segment_ends(self.cfg, self.v["stepper.t_end"], self.v["checkpoint.segment_steps"])

    @property
    def done(self) -> bool:
        return self.segment >= len(self.ends)

    def advance(self) -> None:
        t_target = self.ends[self.segment]
        keeper = SnapshotKeeper(self.record, self.times)
        self.field = integrator.evolve_to(self.field, t_target, self.cfg,
                                          callbacks=[keeper, *self.record.probes], stops=self.times,
                                          history=self.record.history, emit_start=self.segment == 0)
        self.segment += 1
        if self.done:
            self.record.final = self.field

    # checkpoint state ----------------------------------------------------------

    def state(self) -> dict:
        return {"config": self.config.text, "segment": self.segment, "t": self.field.t,
                "seed": self.v["seed"], "config_sha256": self.config.sha256}

    def save(self, path) -> None:
        diag = {"probes": self.probes, "snapshots": self.record.snapshots, "history": self.record.history}
        checkpoint.write(path, self.state(), self.field, diag)

    @classmethod
    def load(cls, path) -> Run:
        state, field, diag = checkpoint.read(path)
        run = cls(RunConfig.from_text(state["config"]))
        if run.config.sha256 != state["config_sha256"]:
            raise checkpoint.CheckpointError("config hash mismatch")
        run.segment = state["segment"]
        run.field = field
        run.probes = diag["probes"]
        run.record.probes = _flat(run.probes)
        run.record.snapshots = diag["snapshots"]
        run.record.history = diag["history"]
        if run.done:
            run.record.final = field
        return run


# Diagnostics -> report lines ---------------------------------------------------------


def _energy_lines(run: Run, rep: ExperimentReport) -> None:
    E = np.asarray(run.probes["energy"].energy)
    scale = max(float(np.max(np.abs(E))), 1e-300) if E.size else 1.0
    rise = float(max(0.0, np.max(np.diff(E)))) / scale if E.size > 1 else 0.0
    rep.add(check("energy_nonincreasing", rise, run.v["thresholds.energy"],
                  f"E0={E[0]:.6g};E1={E[-1]:.6g}" if E.size else ""))


def _tracking_lines(run: Run, rep: ExperimentReport, out: Path | None) -> None:
    g, v = run.grid, run.v
    frames = run.probes["track"].frames
    gate = v["thresholds.gate"] or None
    tracks = vortex.track(frames, g, gate)
    if out is not None:
        vortex.write_tracks_csv(tracks, out / "tracks.csv")
    rep.add(ReportLine("track_count", "INFO", len(tracks), "", f"frames={len(frames)}"))
    disp = max((tr.max_displacement(g) for tr in tracks), default=0.0)
    rep.add(ReportLine("max_displacement", "INFO", disp, "", ""))
    t_min = v["diag.track.t_min"] or 10 * g.epsilon ** 2
    worst = 0.0
    for tr in tracks:
        s = np.array([r.sigma for r in tr.records if r.t >= t_min - 1e-12])
        s = s[np.isfinite(s)]
        if s.size > 1:
            run_min = np.minimum.accumulate(s)
            worst = max(worst, float(np.max((s[1:] - run_min[:-1]) / np.abs(run_min[:-1]))))
    rep.add(check("mass_nonincreasing", worst, v["thresholds.mass"], f"t_min={t_min:.6g}"))


def _filament_lines(run: Run, rep: ExperimentReport, out: Path | None) -> None:
    g, v = run.grid, run.v
    frames = run.probes["filament"].frames
    if v["init.kind"] == "ring":
        meta = run.initial.meta
        oracle = mcf.CircleOracle(meta["radius"], tuple(meta["center"]), tuple(meta["axis"]))
        cmp = mcf.compare_flow(frames, oracle, box=g.lengths, h=g.h)
        if out is not None:
            cmp.write_csv(out / "flow.csv")
        if cmp.note:
            rep.add(ReportLine("flow_comparison", "INFO", cmp.note, "", ""))
        else:
            slope = cmp.radius_sq_slope()
            rep.add(check("ring_slope", abs(slope / -2.0 - 1.0), v["thresholds.slope"], f"slope={slope:.17g}"))
            rep.add(check("ring_hausdorff", cmp.max_hausdorff / g.h, v["thresholds.hausdorff"],
                          "units of h"))
            rep.add(ReportLine("ring_radius_sq_gap", "INFO", cmp.max_radius_sq_gap() / meta["radius"] ** 2,
                               "", "max |R_fit^2 - R_oracle^2| / R0^2"))
    chis = [mcf.constant_chi()] + [mcf.bump_chi(b[:3], b[3], g.lengths, f"bump{i}")
                                   for i, b in enumerate(v["diag.brakke.bumps"])]
    for chi in chis:
        r = mcf.brakke_inequality_check(frames, chi, slack=v["thresholds.slack"])
        rep.add(check(f"brakke_{chi.name}", r.slack_needed, v["thresholds.slack"],
                      f"pairs={len(r.pairs)};worst_margin={r.worst_margin:.6g}"))


def evaluate(run: Run, out: Path | None = None) -> ExperimentReport:
    v, g, rec = run.v, run.grid, run.record
    rep = ExperimentReport(v["name"], run.config.sha256)
    _energy_lines(run, rep)
    if v["diag.supersolution"]:
        s = integrator.supersolution_check(rec.history, g.epsilon)
        rep.add(check("supersolution", -s.worst_margin, s.tol, "bound - (sup|u|^2 - 1)"))
    if v["diag.monotonicity.points"]:
        worst, ncurves = 0.0, 0
        lines = ["x_star,R,E_w"]
        for pt in v["diag.monotonicity.points"]:
            c = energy.monotonicity_scan(rec, pt, v["diag.monotonicity.t_star"], v["diag.monotonicity.radii"],
                                         tol=v["thresholds.tol_mono"], images=v["diag.monotonicity.images"])
            scale = float(np.max(np.abs(c.E))) or 1.0
            worst = max(worst, c.worst_drop / scale)
            ncurves += 1
            lines += [f"{' '.join(f'{x:.17g}' for x in pt)},{r:.17g},{e:.17g}" for r, e in zip(c.R, c.E)]
        if out is not None:
            (out / "monotonicity.csv").write_text("\n".join(lines) + "\n")
        rep.add(check("monotonicity", worst, v["thresholds.tol_mono"], f"curves={ncurves}"))
    if "xi" in run.probes:
        res = [p.residual() for p in run.probes["xi"]]
        rep.add(check("xi_identity", max(res), v["thresholds.xi"],
                      "residuals=" + " ".join(f"{r:.6g}" for r in res)))
    if "balance" in run.probes:
        t_min = v["diag.balance.t_min"]
        rep.add(check("energy_balance", run.probes["balance"].relative_residual(t_min),
                      v["thresholds.balance"], f"t_min={t_min:.6g}"))
    if "stress" in run.probes:
        rep.add(check("stress_identity", run.probes["stress"].worst(), v["thresholds.stress"],
                      f"samples={len(run.probes['stress'].t)}"))
    if "track" in run.probes:
        _tracking_lines(run, rep, out)
    if "filament" in run.probes:
        _filament_lines(run, rep, out)
    if "clearing" in run.probes:
        r = run.probes["clearing"].result(v["diag.clearing.sigma"])
        core = "" if r.core_persistent is None else f";core={str(r.core_persistent).lower()}"
        rep.add(ReportLine("clearing_out", "INFO", r.eta, "",
                           f"verdict={r.verdict};min_modulus={r.min_modulus:.6g}{core}"))
    if v["diag.phase.t0"] >= 0:
        pr = phase.extract_heat_phase(rec, v["diag.phase.t0"], v["diag.phase.t1"])
        rep.add(ReportLine("kappa_ratio", "INFO", pr.kappa_ratio, "", f"gap={pr.gradient_gap_sup:.6g}"))
        worst = max(phase.hodge_decompose(rec.snapshot(t)).residual
                    for t in (v["diag.phase.t0"], v["diag.phase.t1"]))
        rep.add(check("hodge_residual", worst, v["thresholds.hodge"], ""))
    return rep


def _write_outputs(run: Run, out: Path) -> None:
    v = run.v
    if v["output.snapshots"]:
        d = out / "snapshots"
        d.mkdir(parents=True, exist_ok=True)
        for i, t in enumerate(sorted(v["output.snapshots"])):
            with open(d / f"snap_{i:03d}.glf", "wb") as fh:
                write_snapshot(run.record.snapshot(t), fh, v["output.precision"])
    ep = run.probes["energy"]
    rows = ["t,energy,dissipation"] + [f"{t:.17g},{e:.17g},{d:.17g}" for t, e, d in
                                       zip(ep.t, ep.energy, ep.dissipation)]
    (out / "energy.csv").write_text("\n".join(rows) + "\n")


def _drive(run: Run, out: Path | None, stop_after: int | None, t_start: float,
           extras=()) -> ExperimentReport | None:
    segments = 0
    try:
        while not run.done:
            run.advance()
            segments += 1
            if out is not None and run.v["checkpoint.segment_steps"] > 0 and not run.done:
                run.save(out / CHECKPOINT_NAME)
            if stop_after is not None and segments >= stop_after and not run.done:
                return None
        rep = evaluate(run, out)
        for fn in extras:
            for line in fn(run):
                rep.add(line)
        if out is not None:
            _write_outputs(run, out)
    except Exception as exc:  # noqa: BLE001 - reported, then re-raised by the caller if wanted
        log.exception("run %s aborted", run.v["name"])
        rep = ExperimentReport(run.v["name"], run.config.sha256, failed=f"{type(exc).__name__}: {exc}")
    rep.wall_clock = time.perf_counter() - t_start
    if out is not None:
        rep.write(out)
    return rep


def run(config: RunConfig, out=None, stop_after: int | None = None, extras=()) -> ExperimentReport | None:
    """Execute a configured run; returns None when halted early by ``stop_after``.

    With ``checkpoint.segment_steps`` > 0 a checkpoint is written to
    ``out/checkpoint.glck`` after every segment but the last.
    """
    t0 = time.perf_counter()
    out = Path(out) if out is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    try:
        r = Run(config)
    except Exception as exc:  # noqa: BLE001
        rep = ExperimentReport(config.values().get("name", "run"), config.sha256,
                               failed=f"{type(exc).__name__}: {exc}")
        if out is not None:
            rep.write(out)
        return rep
    return _drive(r, out, stop_after, t0, extras)


def resume(path, out=None, stop_after: int | None = None) -> ExperimentReport | None:
    t0 = time.perf_counter()
    out = Path(out) if out is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    return _drive(Run.load(path), out, stop_after, t0)
