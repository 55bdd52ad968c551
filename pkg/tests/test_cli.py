import math

import numpy as np
import pytest

from spheroscat import Kind
from spheroscat.cli import (
    EXIT_FAILED,
    EXIT_NUMERIC,
    EXIT_OK,
    EXIT_USAGE,
    GridSpec,
    RunConfig,
    UsageError,
    format_csv,
    inside_mask,
    main,
    parse_number,
    read_points,
    write_pgm,
)


@pytest.mark.parametrize("text,value", [
    ("pi", math.pi), ("2*pi/3", 2 * math.pi / 3), ("-1.5e-3", -1.5e-3), ("pi/2 + 1", math.pi / 2 + 1),
])
def test_parse_number(text, value):
    assert parse_number(text) == pytest.approx(value, rel=1e-15)


@pytest.mark.parametrize("text", ["__import__('os')", "pi ** 2 ** 99", "e", "1/0", "", "nan"])
def test_parse_number_rejects(text):
    with pytest.raises(Exception):
        parse_number(text)


def test_format_csv_round_trips_exactly():
    pts = np.array([[0.1, -2.0, 1 / 3]])
    vals = np.array([complex(math.pi, -1e-300)])
    text = format_csv(pts, vals)
    head, row = text.strip().split("\n")
    assert head == "x,y,z,re,im"
    nums = [float(v) for v in row.split(",")]
    assert nums == [0.1, -2.0, 1 / 3, math.pi, -1e-300]


def test_write_pgm(tmp_path):
    img = np.array([[0.0, 1.0], [2.0, np.nan]])
    mask = np.array([[True, False], [False, False]])
    path = tmp_path / "a.pgm"
    write_pgm(path, img, mask)
    blob = path.read_bytes()
    assert blob.startswith(b"P5\n2 2\n255\n")
    pix = np.frombuffer(blob[len(b"P5\n2 2\n255\n"):], dtype=np.uint8).reshape(2, 2)
    # row 0 of the file is the top (largest v); masked and non-finite pixels are black
    assert pix.tolist() == [[255, 0], [0, 1]]


def test_grid_and_mask():
    cfg = RunConfig(Kind.OBLATE, 5.0)
    grid = GridSpec(resolution=(5, 7)).with_default_window(cfg)
    pts = grid.points()
    assert pts.shape == (35, 3)
    assert np.all(pts[:, 1] == 0.0)
    assert pts[1, 0] > pts[0, 0] and pts[0, 2] == pts[1, 2]
    mask = inside_mask(cfg, np.array([[0.0, 0.0, 0.0], [3.0, 0.0, 0.0]]))
    assert mask.tolist() == [True, False]
    disk = RunConfig(Kind.DISK, 5.0)
    assert inside_mask(disk, np.array([[0.5, 0.0, 0.0], [0.5, 0.0, 0.01], [1.5, 0.0, 0.0]])).tolist() == [
        True, False, False]
    with pytest.raises(UsageError):
        GridSpec(extents=(1.0, 0.0, 0.0, 1.0))


def test_read_points(tmp_path):
    f = tmp_path / "p.csv"
    f.write_text("x,y,z\n1,2,3\n# note\n4 5 6\n")
    assert read_points(f).tolist() == [[1, 2, 3], [4, 5, 6]]
    f.write_text("1,2\n")
    with pytest.raises(UsageError):
        read_points(f)


def test_field_with_point_file_and_incident(tmp_path, capsys):
    f = tmp_path / "p.csv"
    f.write_text("0,0,0\n2,0,1\n")
    code = main(["field", "--kind", "prolate", "--k", "2", "--which", "incident", "--points", str(f)])
    assert code == EXIT_OK
    rows = capsys.readouterr().out.strip().split("\n")[1:]
    vals = [complex(float(r.split(",")[3]), float(r.split(",")[4])) for r in rows]
    # incident field along -z: exp(-i k z)
    assert vals[0] == pytest.approx(1.0)
    assert vals[1] == pytest.approx(complex(math.cos(2.0), -math.sin(2.0)))


def test_field_masks_inside_points(tmp_path, capsys):
    f = tmp_path / "p.csv"
    f.write_text("0,0,0\n2,0,1\n")
    assert main(["field", "--kind", "prolate", "--k", "2", "--points", str(f)]) == EXIT_OK
    captured = capsys.readouterr()
    rows = captured.out.strip().split("\n")[1:]
    assert rows[0].endswith("nan,nan")
    assert "masked 1" in captured.err


def test_validate_passes_and_truncated_run_fails(capsys):
    assert main(["validate", "--kind", "oblate", "--k", "3", "--bc", "robin", "--alpha", "0.5"]) == EXIT_OK
    assert capsys.readouterr().out.strip().endswith("PASS")
    # one azimuthal order cannot satisfy the boundary condition for oblique incidence
    code = main(["validate", "--kind", "prolate", "--k", "10", "--theta0", "2*pi/3", "--max-m", "1"])
    assert code == EXIT_FAILED
    assert capsys.readouterr().out.strip().endswith("FAIL")


def test_validate_with_oracle(capsys):
    code = main(["validate", "--kind", "prolate", "--k", "4", "--bc", "hard", "--oracle"])
    out = capsys.readouterr().out
    assert code == EXIT_OK
    assert out.count("PASS") >= 5


def test_usage_errors(capsys):
    assert main(["field", "--kind", "disk", "--k", "2", "--xi1", "0.3"]) == EXIT_USAGE
    assert main(["field", "--kind", "prolate", "--k", "2", "--xi1", "0.5"]) == EXIT_USAGE
    assert main(["precompute", "--kind", "prolate", "--c", "2"]) == EXIT_USAGE
    with pytest.raises(SystemExit):
        main(["field", "--kind", "cube", "--k", "1"])
    assert "error" in capsys.readouterr().err


def test_point_source_inside_body_is_usage_error():
    assert main(["validate", "--kind", "prolate", "--k", "2", "--source", "point", "--xi0", "1.2"]) == EXIT_USAGE


def test_precompute_then_cached_run(tmp_path, capsys):
    d = str(tmp_path)
    assert main(["precompute", "--kind", "oblate", "--c", "3", "--max-m", "3", "--max-n-excess", "5",
                 "--cache-dir", d]) == EXIT_OK
    assert "24" in capsys.readouterr().out
    # second run finds everything already stored
    assert main(["precompute", "--kind", "oblate", "--c", "3", "--max-m", "3", "--max-n-excess", "5",
                 "--cache-dir", d]) == EXIT_OK
    assert main(["validate", "--kind", "disk", "--k", "3", "--cache-dir", d]) == EXIT_OK


def test_modes_table(capsys):
    assert main(["modes", "--kind", "oblate", "--c", "2", "--m", "1", "--n", "2", "--xi", "0", "1.5",
                 "--eta", "0.3"]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[1].startswith("lambda ")
    eta_row = lines[lines.index("eta,S,dS") + 1]
    assert float(eta_row.split(",")[0]) == 0.3
    assert float(lines[-1].split(",")[0]) == 1.5


def test_numeric_failure_exit_code(monkeypatch):
    from spheroscat import cli
    from spheroscat.errors import AccuracyError

    def boom(*args, **kwargs):
        raise AccuracyError("forced")

    monkeypatch.setattr(cli, "solve_scattering", boom)
    assert main(["validate", "--kind", "prolate", "--k", "2"]) == EXIT_NUMERIC
