import struct
import zlib

import pytest

from glflow.grid import set_workers
from glflow.runner import checkpoint
from glflow.runner.cli import main
from glflow.runner.config import ConfigError, RunConfig, expand
from glflow.runner.execute import resume, run

DIPOLE = """\
name = dipole
grid.n = 64
grid.length = 4.0
grid.epsilon = 0.1875
init.kind = vortices
init.vortices = 1.02,2.02,1; 3.02,2.02,-1
stepper.t_end = 0.05
stepper.order = 2
diag.balance = true
diag.balance.t_min = 0.01
thresholds.balance = 0.1
diag.track = true
diag.track.every = 5
output.snapshots = 0, 0.05
"""


def dipole(**kv):
    return RunConfig.from_text(DIPOLE).override(**kv)


def files(out):
    return {p.name: p.read_bytes() for p in sorted(out.iterdir()) if p.suffix == ".csv"}


# config ------------------------------------------------------------------------------


@pytest.mark.parametrize("text, msg", [
    ("grid.nn = 3", "unknown"),
    ("grid.n = 64\ngrid.n = 32", "duplicate"),
    ("grid.n = many", "grid.n"),
    ("grid.n 64", "="),
    ("sweep.grid.n = 32 | 64", "sweep"),
])
def test_config_errors(text, msg):
    with pytest.raises(ConfigError, match=msg):
        RunConfig.from_text(text)


def test_config_expand_override_and_hash():
    cfgs = expand("name = a\nsweep.grid.epsilon = 0.1 | 0.05\n")
    assert [c["grid.epsilon"] for c in cfgs] == [0.1, 0.05]
    a = RunConfig.from_text("grid.n = 64\n# comment\nname = a\n")
    b = RunConfig.from_text("name = a\ngrid.n = 64\n")
    assert a.sha256 == b.sha256
    assert a.override(grid__n=32)["grid.n"] == 32 and a.override(grid__n=32).sha256 != a.sha256
    assert dipole(diag__stress__center=(1.5, 2.25))["diag.stress.center"] == (1.5, 2.25)


def test_times_outside_run_are_rejected(tmp_path):
    rep = run(dipole(output__snapshots=(0.2,)), tmp_path)
    assert not rep.all_pass and "t_end" in rep.failed
    assert (tmp_path / "FAILED").exists()


# runs --------------------------------------------------------------------------------


def test_vacuum_run_passes(tmp_path):
    rep = run(RunConfig.from_text("grid.n = 64\ngrid.epsilon = 0.1875\nstepper.t_end = 0.01\n"), tmp_path)
    assert rep.all_pass
    assert (tmp_path / "report.csv").exists() and (tmp_path / "energy.csv").exists()
    assert not (tmp_path / "FAILED").exists()
    assert "wall" not in (tmp_path / "report.csv").read_text()


def test_dipole_run_outputs(tmp_path):
    rep = run(dipole(), tmp_path)
    assert rep.all_pass, rep.summary_text()
    assert {"report.csv", "energy.csv", "tracks.csv"} <= set(files(tmp_path))
    assert len(list((tmp_path / "snapshots").glob("*.glf"))) == 2
    assert [l.measured for l in rep.lines if l.name == "track_count"] == [2]


def test_resume_is_byte_identical(tmp_path):
    cfg = dipole(checkpoint__segment_steps=2)
    assert run(cfg, tmp_path / "whole") is not None
    assert run(cfg, tmp_path / "part", stop_after=1) is None
    ck = tmp_path / "part" / "checkpoint.glck"
    assert ck.exists()
    # resume twice more in single segments
    assert resume(ck, tmp_path / "part", stop_after=1) is None
    rep = resume(ck, tmp_path / "part")
    assert rep.all_pass
    assert files(tmp_path / "part") == files(tmp_path / "whole")
    snaps = lambda d: [p.read_bytes() for p in sorted((d / "snapshots").iterdir())]
    assert snaps(tmp_path / "part") == snaps(tmp_path / "whole")


def test_corrupt_and_foreign_checkpoints(tmp_path):
    cfg = dipole(checkpoint__segment_steps=2)
    run(cfg, tmp_path, stop_after=1)
    data = (tmp_path / "checkpoint.glck").read_bytes()
    bad = bytearray(data)
    bad[len(bad) // 2] ^= 0xFF
    with pytest.raises(checkpoint.CheckpointError, match="CRC"):
        checkpoint.loads(bytes(bad))
    body = bytearray(data[:-4])
    struct.pack_into("<I", body, len(checkpoint.MAGIC), checkpoint.VERSION + 1)
    other = bytes(body) + struct.pack("<I", zlib.crc32(body))
    with pytest.raises(checkpoint.CheckpointError, match="version"):
        checkpoint.loads(other)
    with pytest.raises(checkpoint.CheckpointError, match="magic"):
        checkpoint.loads(b"GLSNAP" + data[6:])
    with pytest.raises(checkpoint.CheckpointError, match="trailing"):
        extra = data[:-4] + b"\0"
        checkpoint.loads(extra + struct.pack("<I", zlib.crc32(extra)))
    path = tmp_path / "bad.glck"
    path.write_bytes(bytes(bad))
    assert main(["run", "--resume", str(path), "--out", str(tmp_path / "r")]) == 2


def test_thread_count_does_not_change_outputs(tmp_path):
    try:
        for w in (1, 2):
            set_workers(w)
            run(dipole(), tmp_path / str(w))
    finally:
        set_workers(None)
    assert files(tmp_path / "1") == files(tmp_path / "2")


# command line ------------------------------------------------------------------------


def test_cli(tmp_path, capsys):
    assert main(["keys"]) == 0
    assert "grid.epsilon" in capsys.readouterr().out
    good = tmp_path / "good.cfg"
    good.write_text(DIPOLE)
    assert main(["run", "--config", str(good), "--out", str(tmp_path / "g"), "--threads", "1"]) == 0
    assert "dipole: PASS" in capsys.readouterr().out
    failing = tmp_path / "fail.cfg"
    failing.write_text(DIPOLE + "thresholds.mass = -1\n")
    assert main(["run", "--config", str(failing), "--out", str(tmp_path / "f")]) == 1
    unknown = tmp_path / "unknown.cfg"
    unknown.write_text(DIPOLE + "grid.nn = 1\n")
    assert main(["run", "--config", str(unknown), "--out", str(tmp_path / "u")]) == 2
    assert "unknown" in capsys.readouterr().err

    snaps = sorted(str(p) for p in (tmp_path / "g" / "snapshots").iterdir())
    assert main(["analyze", *snaps, "--out", str(tmp_path / "a")]) == 0
    rows = (tmp_path / "a" / "analysis.csv").read_text().splitlines()
    assert len(rows) == 3 and rows[1].split(",")[4:6] == ["2", "0"]
    capsys.readouterr()
    assert main(["inspect", snaps[0]]) == 0
    assert "epsilon 0.1875" in capsys.readouterr().out


def test_cli_inspect_checkpoint(tmp_path, capsys):
    run(dipole(checkpoint__segment_steps=2), tmp_path, stop_after=1)
    assert main(["inspect", str(tmp_path / "checkpoint.glck")]) == 0
    out = capsys.readouterr().out
    assert "checkpoint version 1" in out and "segment: 1" in out
    junk = tmp_path / "junk.bin"
    junk.write_bytes(b"hello")
    with pytest.raises(SystemExit):
        main(["inspect", str(junk)])
