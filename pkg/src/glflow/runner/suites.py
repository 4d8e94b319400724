"""Canonical experiment suites.

A suite is a directory of config files under ``configs/<name>``; each file
may sweep keys, expanding to several runs. Runs execute independently
(optionally in a process pool) and an aggregator turns their report lines
into the suite's criterion lines.
"""

from __future__ import annotations

import hashlib
import math
import time
from concurrent.futures import ProcessPoolExecutor
from importlib import resources
from pathlib import Path


from .. import energy, integrator
from .config import RunConfig, expand
from .execute import Run, run as run_config, stress_field
from .report import ExperimentReport, ReportLine, check

SUITES = ("monotonicity", "identities", "nonmotion2d", "clearing_out", "ring3d", "phase")


def suite_configs(name: str, config_dir=None) -> list[RunConfig]:
    if name not in SUITES:
        raise ValueError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
    base = Path(config_dir) if config_dir else Path(str(resources.files("glflow.runner") / "configs"))
    files = sorted((base / name).glob("*.cfg"))
    if not files:
        raise FileNotFoundError(f"no config files in {base / name}")
    out = []
    for f in files:
        cfgs = expand(f.read_text())
        if len(cfgs) > 1:
            cfgs = [c.override(name=f"{c['name']}-{i:02d}") for i, c in enumerate(cfgs)]
        out.extend(cfgs)
    names = [c["name"] for c in out]
    if len(set(names)) != len(names):
        raise ValueError(f"duplicate run names in suite {name}")
    return out


def _stress_fd(run: Run) -> list[ReportLine]:
    """Stress identity with second-order differences on the final field."""
    g, f = run.grid, run.field
    du = integrator.dudt(f, run.cfg.scheme)
    r = energy.stress_identity_residual(f, du, stress_field(g, run.v), spectral=False)
    return [ReportLine("stress_fd", "INFO", r["residual"], "", f"h={g.h:.6g}")]


EXTRAS = {"identities": [_stress_fd]}


def _execute(args):
    name, text, out = args
    return run_config(RunConfig.from_text(text), out, extras=EXTRAS.get(name, ()))


def _line(rep: ExperimentReport, name: str) -> ReportLine:
    for l in rep.lines:
        if l.name == name:
            return l
    raise KeyError(f"run {rep.name} has no {name} line")


def _detail(line: ReportLine, key: str) -> str:
    for part in line.detail.split(";"):
        k, _, v = part.partition("=")
        if k == key:
            return v
    raise KeyError(key)


# an observed order counts as nominal order p when it is >= p - ORDER_SLACK
ORDER_SLACK = 0.05


def _order(coarse: float, fine: float) -> float:
    return math.log2(coarse / fine) if coarse > 0 and fine > 0 else math.inf


# Aggregators ---------------------------------------------------------------------------


def _agg_all(line_name):
    def agg(reps, cfgs):
        lines = [_line(r, line_name) for r in reps]
        worst = max(l.measured for l in lines)
        ok = all(l.status == "PASS" for l in lines)
        return [ReportLine(line_name, "PASS" if ok else "FAIL", worst, lines[0].tolerance,
                           f"runs={len(lines)}")]
    return agg


def _by_role(reps, cfgs) -> dict:
    out: dict = {}
    for r, c in zip(reps, cfgs):
        out.setdefault(c["suite.role"], []).append((r, c))
    return out


def _agg_identities(reps, cfgs):
    roles = _by_role(reps, cfgs)
    (base, bc), = roles["base"]
    (fine_t, _), = roles["fine_dt"]
    (fine_h, _), = roles["fine_h"]
    out = []
    xi_c, xi_f = _line(base, "xi_identity").measured, _line(fine_t, "xi_identity").measured
    out.append(check("xi_identity", xi_c, bc["thresholds.xi"], "base run"))
    out.append(check("xi_refinement_ratio", xi_f / xi_c, 0.5, "residual ratio after halving dt"))
    b_c, b_f = _line(base, "energy_balance").measured, _line(fine_t, "energy_balance").measured
    out.append(check("energy_balance", b_f, bc["thresholds.balance"], "after dt refinement"))
    out.append(check("energy_balance_dt_order", _order(b_c, b_f), 1.0 - ORDER_SLACK, "nominal 1",
                     below=False))
    s = max(_line(r, "stress_identity").measured for r in (base, fine_t, fine_h))
    out.append(check("stress_identity", s, bc["thresholds.stress"], "spectral derivatives"))
    fd_c, fd_f = _line(base, "stress_fd").measured, _line(fine_h, "stress_fd").measured
    out.append(check("stress_h_order", _order(fd_c, fd_f), 2.0 - ORDER_SLACK,
                     f"nominal 2, fd residuals {fd_c:.3g} {fd_f:.3g}",
                     below=False))
    return out


def _agg_nonmotion(reps, cfgs):
    pairs = sorted(((c["grid.epsilon"], _line(r, "max_displacement").measured) for r, c in zip(reps, cfgs)),
                   reverse=True)
    out = [ReportLine(f"displacement_eps_{e:g}", "INFO", d, "", "") for e, d in pairs]
    for (e0, d0), (e1, d1) in zip(pairs, pairs[1:]):
        out.append(check(f"displacement_ratio_{e1:g}_{e0:g}", d1 / d0, 0.9, "must be < 0.9"))
    out.extend(_agg_all("mass_nonincreasing")(reps, cfgs))
    return out


def _agg_ring(reps, cfgs):
    out = []
    gaps = []
    for r, c in zip(reps, cfgs):
        eh = c["grid.epsilon"] * c["grid.n"] / c["grid.length"]
        slope = float(_detail(_line(r, "ring_slope"), "slope"))
        gap = _line(r, "ring_radius_sq_gap").measured
        gaps.append((eh, gap))
        out.append(ReportLine(f"slope_eps_{eh:g}h", "INFO", slope, -2.0, f"radius_sq_gap={gap:.6g}"))
        if c["suite.role"] == "headline":
            out += [l for l in r.lines if l.name in ("ring_slope", "ring_hausdorff") or l.name.startswith("brakke_")]
    gaps.sort(reverse=True)
    ok = all(b[1] < a[1] for a, b in zip(gaps, gaps[1:]))
    out.append(ReportLine("radius_gap_trend", "PASS" if ok else "FAIL",
                          " ".join(f"{g:.4g}" for _, g in gaps), "decreasing", "eps/h " +
                          " ".join(f"{e:g}" for e, _ in gaps)))
    return out


def _agg_phase(reps, cfgs):
    pairs = sorted(((c["grid.epsilon"], _line(r, "kappa_ratio").measured) for r, c in zip(reps, cfgs)),
                   reverse=True)
    out = [ReportLine(f"kappa_ratio_eps_{e:g}", "INFO", k, "", "") for e, k in pairs]
    ok = all(b[1] < a[1] for a, b in zip(pairs, pairs[1:]))
    out.append(ReportLine("kappa_decreasing", "PASS" if ok else "FAIL",
                          " ".join(f"{k:.4g}" for _, k in pairs), "decreasing", ""))
    out.extend(_agg_all("hodge_residual")(reps, cfgs))
    return out


def clearing_bracket(rows: list[tuple]) -> tuple[float, float]:
    """(largest passing eta below the smallest failing eta, smallest failing eta)."""
    fails = [e for e, verdict in rows if verdict == "FAIL"]
    if not fails:
        return (max((e for e, _ in rows), default=math.nan), math.inf)
    crit = min(fails)
    below = [e for e, v in rows if v == "PASS" and e < crit]
    return (max(below) if below else math.nan, crit)


def _agg_clearing(reps, cfgs):
    roles = _by_role(reps, cfgs)

    def rows(role):
        out = []
        for r, _ in roles.get(role, []):
            l = _line(r, "clearing_out")
            core = _detail(l, "core") if "core=" in l.detail else ""
            out.append((l.measured, _detail(l, "verdict"), core, r.name))
        return out

    cal = rows("calibration")
    lo_eta, crit = clearing_bracket([(e, v) for e, v, _, _ in cal])
    out = [ReportLine("eta_bracket", "INFO", f"{lo_eta:.6g} {crit:.6g}", "", f"calibration runs={len(cal)}")]
    low = [x for x in rows("low") + cal if x[0] <= 0.25 * crit]
    high = [x for x in rows("high") + cal if x[0] >= 4 * crit and x[2]]
    bad_low = [x[3] for x in low if x[1] != "PASS"]
    bad_high = [x[3] for x in high if x[2] != "true"]
    out.append(ReportLine("clearing_low_energy", "PASS" if low and not bad_low else "FAIL",
                          len(low), f"eta<={0.25 * crit:.6g}", "failed: " + " ".join(bad_low) if bad_low else ""))
    out.append(ReportLine("core_persistence_high_energy", "PASS" if high and not bad_high else "FAIL",
                          len(high), f"eta>={4 * crit:.6g}",
                          "failed: " + " ".join(bad_high) if bad_high else ""))
    return out


AGGREGATORS = {
    "monotonicity": _agg_all("monotonicity"),
    "identities": _agg_identities,
    "nonmotion2d": _agg_nonmotion,
    "clearing_out": _agg_clearing,
    "ring3d": _agg_ring,
    "phase": _agg_phase,
}


def suite(name: str, out=None, workers: int = 1, config_dir=None) -> ExperimentReport:
    t0 = time.perf_counter()
    cfgs = suite_configs(name, config_dir)
    out = Path(out) if out is not None else None
    jobs = [(name, c.text, (out / c["name"]) if out is not None else None) for c in cfgs]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            reps = list(pool.map(_execute, jobs))
    else:
        reps = [_execute(j) for j in jobs]
    digest = "".join(c.sha256 for c in cfgs)
    rep = ExperimentReport(f"suite-{name}", hashlib.sha256(digest.encode()).hexdigest())
    try:
        for line in AGGREGATORS[name](reps, cfgs):
            rep.add(line)
    except (KeyError, ValueError) as exc:
        rep.failed = f"aggregation failed: {exc}"
    failed_runs = [r.name for r in reps if r.failed]
    if failed_runs:
        rep.failed = (rep.failed + "; " if rep.failed else "") + "runs aborted: " + " ".join(failed_runs)
    rep.runs = reps
    rep.wall_clock = time.perf_counter() - t0
    if out is not None:
        rep.write(out)
    return rep
