"""Flat ``dotted.key = value`` run configuration.

Every key must appear in SCHEMA; unknown keys are an error rather than
being silently ignored. Lines starting with ``#`` are comments. A suite file
may also hold ``sweep.<key> = a | b | c`` lines, expanded by ``expand``.
"""

from __future__ import annotations

import hashlib
import itertools
from dataclasses import dataclass
from pathlib import Path


class ConfigError(ValueError):
    pass


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {s!r}")


def _floats(s: str) -> tuple:
    return tuple(float(x) for x in s.replace(",", " ").split()) if s.strip() else ()


def _ints(s: str) -> tuple:
    return tuple(int(x) for x in s.replace(",", " ").split()) if s.strip() else ()


def _rows(s: str) -> tuple:
    """'a,b,c; d,e,f' -> ((a, b, c), (d, e, f)) as floats."""
    return tuple(_floats(r) for r in s.split(";") if r.strip())


# key -> (parser, default, description)
SCHEMA: dict = {
    "name": (str, "run", "label used in reports"),
    "seed": (int, 0, "seed for random initial data"),
    "grid.dim": (int, 2, "2 or 3"),
    "grid.n": (int, 128, "points per axis"),
    "grid.length": (float, 4.0, "box side"),
    "grid.epsilon": (float, 0.1, "coherence length"),
    "init.kind": (str, "vacuum", "vacuum | vortices | ring | random_phase | perturbation | plane_wave"),
    "init.vortices": (_rows, (), "x,y,degree; ... (3D: extruded along z)"),
    "init.radius": (float, 0.0, "ring radius; 0 means L/4"),
    "init.amplitude": (float, 1.0, "random data amplitude"),
    "init.correlation": (float, 0.4, "random data correlation length"),
    "init.modes": (_ints, (), "plane wave integer modes"),
    "stepper.scheme": (str, "spectral_if", "spectral_if | explicit_fd"),
    "stepper.order": (int, 1, "1 or 2"),
    "stepper.dt": (float, 0.0, "time step; 0 means dt_fraction * stability bound"),
    "stepper.dt_fraction": (float, 1.0, "used when stepper.dt = 0"),
    "stepper.t_end": (float, 0.1, "final time"),
    "stepper.cadence": (int, 1, "steps between diagnostic samples"),
    "diag.supersolution": (_bool, False, "check sup|u| against the comparison function"),
    "diag.monotonicity.points": (_rows, (), "x,y[,z]; ... centres z* for weighted-energy scans"),
    "diag.monotonicity.t_star": (float, 0.0, "t* of the scans"),
    "diag.monotonicity.radii": (_floats, (), "radii R (each <= sqrt(t*))"),
    "diag.monotonicity.images": (_bool, True, "exact periodic image sum instead of truncated Gaussians"),
    "diag.xi.points": (_rows, (), "centres for the space-time identity"),
    "diag.xi.t_star": (float, 0.0, "t* of the identity"),
    "diag.balance": (_bool, False, "localized energy balance"),
    "diag.balance.width": (float, 0.5, "Gaussian test function width"),
    "diag.balance.center": (_floats, (), "test function centre; empty means box centre"),
    "diag.balance.t_min": (float, 0.0, "ignore intervals before this time"),
    "diag.stress": (_bool, False, "stress-energy identity at every sample"),
    "diag.stress.every": (int, 1, "samples between stress checks"),
    "diag.stress.center": (_floats, (), "centre of the bump whose gradient is X; empty means box centre"),
    "diag.track": (_bool, False, "2D vortex detection and tracking"),
    "diag.track.every": (int, 1, "samples between detections"),
    "diag.track.r_mass": (float, 0.0, "mass radius; 0 means 10 epsilon"),
    "diag.track.t_min": (float, 0.0, "mass monotonicity transient; 0 means 10 epsilon^2"),
    "diag.filament": (_bool, False, "3D filament extraction and flow comparison"),
    "diag.filament.every": (int, 1, "samples between extractions"),
    "diag.brakke.bumps": (_rows, (), "x,y,z,width; ... Gaussian test functions besides chi = 1"),
    "diag.clearing.point": (_floats, (), "x_T; empty disables the clearing-out probe"),
    "diag.clearing.time": (float, 0.0, "T"),
    "diag.clearing.radius": (float, 0.5, "R"),
    "diag.clearing.sigma": (float, 0.1, "modulus margin"),
    "diag.clearing.core": (_bool, False, "also record vortex core persistence"),
    "diag.phase.t0": (float, -1.0, "phase extraction start; negative disables"),
    "diag.phase.t1": (float, -1.0, "phase extraction end"),
    "thresholds.tol_mono": (float, 1e-3, "relative monotonicity tolerance"),
    "thresholds.xi": (float, 0.02, "space-time identity residual"),
    "thresholds.balance": (float, 0.01, "energy balance residual"),
    "thresholds.stress": (float, 0.01, "stress identity residual"),
    "thresholds.mass": (float, 0.02, "relative mass increase allowed"),
    "thresholds.energy": (float, 1e-9, "relative energy increase allowed"),
    "thresholds.eta_cfg": (float, 0.0, "clearing-out eta; 0 means unset"),
    "thresholds.lambda": (float, 4.0, "clearing-out ball enlargement"),
    "thresholds.gate": (float, 0.0, "tracking gate; 0 means 3h"),
    "thresholds.slack": (float, 0.15, "Brakke slack"),
    "thresholds.slope": (float, 0.15, "relative tolerance on the R^2 slope"),
    "thresholds.hausdorff": (float, 4.0, "Hausdorff tolerance in units of h"),
    "thresholds.hodge": (float, 1e-6, "Hodge reconstruction residual"),
    "output.snapshots": (_floats, (), "times written as snapshot files"),
    "output.precision": (int, 128, "64 or 128 bit complex snapshots"),
    "checkpoint.segment_steps": (int, 0, "steps per segment, checkpointed after each; 0 = one segment"),
    "suite.role": (str, "", "role of the run inside a suite"),
}


def _text(v) -> str:
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, (tuple, list)):
        if v and isinstance(v[0], (tuple, list)):
            return "; ".join(",".join(map(str, row)) for row in v)
        return ",".join(map(str, v))
    return str(v)


def parse_lines(text: str, allow_sweep: bool = False) -> dict:
    raw = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected key = value")
        key, val = (p.strip() for p in line.split("=", 1))
        base = key[len("sweep."):] if key.startswith("sweep.") else key
        if key.startswith("sweep.") and not allow_sweep:
            raise ConfigError(f"line {n}: sweep keys are only allowed in suite files")
        if base not in SCHEMA:
            raise ConfigError(f"line {n}: unknown key {base!r}")
        if key in raw:
            raise ConfigError(f"line {n}: duplicate key {key!r}")
        raw[key] = val
    return raw


@dataclass(frozen=True)
class RunConfig:
    raw: tuple  # sorted (key, text) pairs, the canonical form

    @classmethod
    def from_text(cls, text: str) -> RunConfig:
        raw = parse_lines(text)
        cfg = cls(tuple(sorted(raw.items())))
        cfg.values()  # validate types now
        return cfg

    @classmethod
    def from_file(cls, path) -> RunConfig:
        return cls.from_text(Path(path).read_text())

    @classmethod
    def from_dict(cls, d: dict) -> RunConfig:
        return cls.from_text("\n".join(f"{k} = {v}" for k, v in d.items()))

    def values(self) -> dict:
        out = {k: spec[1] for k, spec in SCHEMA.items()}
        for k, v in self.raw:
            try:
                out[k] = SCHEMA[k][0](v)
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"bad value for {k}: {v!r} ({exc})") from None
        return out

    def override(self, **kv) -> RunConfig:
        """Keys spell dots as ``__``; values may be text or Python values."""
        d = dict(self.raw)
        for k, v in kv.items():
            d[k.replace("__", ".")] = _text(v)
        return RunConfig.from_dict(d)

    @property
    def text(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in self.raw)

    @property
    def sha256(self) -> str:
        return hashlib.sha256(self.text.encode()).hexdigest()

    def __getitem__(self, key):
        return self.values()[key]


def expand(text: str) -> list[RunConfig]:
    """Cartesian product over ``sweep.key = a | b`` lines, in file order."""
    raw = parse_lines(text, allow_sweep=True)
    fixed = {k: v for k, v in raw.items() if not k.startswith("sweep.")}
    sweeps = [(k[len("sweep."):], [x.strip() for x in v.split("|")]) for k, v in raw.items()
              if k.startswith("sweep.")]
    for k, _ in sweeps:
        if k in fixed:
            raise ConfigError(f"{k} is both fixed and swept")
    out = []
    for combo in itertools.product(*[vals for _, vals in sweeps]):
        d = dict(fixed)
        d.update({k: v for (k, _), v in zip(sweeps, combo)})
        out.append(RunConfig.from_dict(d))
    return out


def describe() -> str:
    return "\n".join(f"{k:32s} {spec[2]} (default {spec[1]!r})" for k, spec in SCHEMA.items())
