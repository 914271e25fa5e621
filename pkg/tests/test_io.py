import numpy as np
import pytest

from phaselab.fields import ComplexField2D, Grid, JPD2
from phaselab.io import (GridFormatError, read_csv, read_grid, read_pgm, read_report, write_csv,
                         write_grid, write_pgm, write_report)


def test_real_grid_round_trip(tmp_path, rng):
    g = Grid(5, 7, 1e-6, 2e-6, -3e-6, 4e-6)
    rho = JPD2(g, rng.normal(size=(5, 7)))
    write_grid(rho, tmp_path / "a.bpg")
    back = read_grid(tmp_path / "a.bpg")
    assert isinstance(back, JPD2)
    assert back.grid == g
    assert np.array_equal(back.values, rho.values)


def test_complex_grid_round_trip(tmp_path, rng):
    g = Grid.centered(6, 1.0)
    f = ComplexField2D(g, rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6)))
    write_grid(f, tmp_path / "c.bpg")
    back = read_grid(tmp_path / "c.bpg")
    assert isinstance(back, ComplexField2D)
    assert np.array_equal(back.values, f.values)


def test_grid_header_layout(tmp_path):
    g = Grid(2, 3, 0.5, 0.25, 1.0, -1.0)
    write_grid((g, np.zeros((2, 3))), tmp_path / "h.bpg")
    raw = (tmp_path / "h.bpg").read_bytes()
    assert raw[:4] == b"BPG1"
    assert int.from_bytes(raw[4:8], "little") == 2
    assert int.from_bytes(raw[8:12], "little") == 3
    assert np.frombuffer(raw[12:44], "<f8").tolist() == [0.5, 0.25, 1.0, -1.0]
    assert raw[44] == 0
    assert len(raw) == 45 + 6 * 8


def test_grid_shape_mismatch_on_write(tmp_path):
    with pytest.raises(ValueError):
        write_grid((Grid.centered(2, 1.0), np.zeros((3, 3))), tmp_path / "x.bpg")


@pytest.mark.parametrize("damage, match", [
    (lambda raw: b"XPG1" + raw[4:], "magic"),
    (lambda raw: raw[:20], "truncated"),
    (lambda raw: raw[:-3], "payload"),
    (lambda raw: raw[:44] + b"\x07" + raw[45:], "dtype"),
])
def test_grid_format_errors(tmp_path, damage, match):
    p = tmp_path / "g.bpg"
    write_grid((Grid.centered(4, 1.0), np.ones((4, 4))), p)
    p.write_bytes(damage(p.read_bytes()))
    with pytest.raises(GridFormatError, match=match):
        read_grid(p)


def test_pgm_round_trip(tmp_path):
    v = np.array([[0.0, 1.0, 2.0], [3.0, 4.0, -4.0]])
    write_pgm(v, tmp_path / "p.pgm")
    img = read_pgm(tmp_path / "p.pgm")
    assert img.shape == (2, 3)
    assert img.min() == 0 and img.max() == 65535
    assert img[0, 0] == round(4 / 8 * 65535)
    write_pgm(np.ones((2, 2)), tmp_path / "flat.pgm")
    assert read_pgm(tmp_path / "flat.pgm").max() == 0


def test_csv_and_report_round_trip(tmp_path):
    write_csv(tmp_path / "c.csv", ["a", "b"], [[1, "x"], [2.5, "y"]], comments=["hello"])
    text = (tmp_path / "c.csv").read_text()
    assert text.startswith("# hello\n")
    header, rows = read_csv(tmp_path / "c.csv")
    assert header == ["a", "b"] and rows == [["1", "x"], ["2.5", "y"]]
    write_report(tmp_path / "r.txt", [("k", 1.5), ("name", "v=w")], comments=["prov"])
    assert read_report(tmp_path / "r.txt") == {"k": "1.5", "name": "v=w"}
