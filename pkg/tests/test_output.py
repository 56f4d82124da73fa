import numpy as np
import pytest

from crowdflow.fields import ScalarField
from crowdflow.geometry import CellKind, Domain, build_grid
from crowdflow.output import read_snapshot, write_snapshot, write_series
from crowdflow.simulator import DiagnosticsRecord


def full_box(h=0.25, size=2.0):
    dom = Domain.rectangle((0.0, size, 0.0, size))
    return build_grid(dom, h)


def read_pgm(path):
    raw = path.read_bytes()
    magic, dims, maxval, rest = raw.split(b"\n", 3)
    assert magic == b"P5"
    nx, ny = (int(v) for v in dims.split())
    assert maxval == b"255"
    raster = np.frombuffer(rest, dtype=np.uint8, count=nx * ny).reshape(ny, nx)
    return raster, nx, ny


def test_snapshot_roundtrip(tmp_path):
    grid, mask = full_box()
    rng = np.random.default_rng(6)
    field = ScalarField(grid, rng.uniform(0, 3, grid.shape))
    csv_path, pgm_path = write_snapshot(field, mask, 0.375, tmp_path / "snap")
    assert csv_path.exists() and pgm_path.exists()
    values, meta = read_snapshot(csv_path)
    assert np.array_equal(values, field.values)
    assert meta["nx"] == 8 and meta["ny"] == 8
    assert meta["h"] == 0.25
    assert meta["t"] == 0.375


def test_snapshot_csv_layout(tmp_path):
    grid, mask = full_box()
    xm, _ = grid.center_mesh()
    field = ScalarField(grid, xm.copy())
    csv_path, _ = write_snapshot(field, mask, 0.0, tmp_path / "snap")
    lines = csv_path.read_text().strip().splitlines()
    assert lines[0] == "nx,ny,h,t"
    assert len(lines) == 2 + grid.nx  # header, meta, one row per x-index
    first_row = [float(v) for v in lines[2].split(",")]
    assert len(first_row) == grid.ny
    assert np.allclose(first_row, field.values[0, :])


def test_pgm_encoding(tmp_path):
    grid, mask = full_box()
    const = ScalarField(grid, np.full(grid.shape, 1.3))
    _, pgm = write_snapshot(const, mask, 0.0, tmp_path / "const")
    raster, nx, ny = read_pgm(pgm)
    assert (nx, ny) == grid.shape
    assert np.all(raster == 0)  # the maximum is black
    _, pgm0 = write_snapshot(ScalarField.zeros(grid), mask, 0.0, tmp_path / "zero")
    raster0, _, _ = read_pgm(pgm0)
    assert np.all(raster0 == 255)


def test_pgm_marks_obstacles_and_orientation(tmp_path):
    dom = Domain.rectangle(
        (0.0, 2.0, 0.0, 2.0), obstacles=[(0.75, 1.25, 0.75, 1.25)]
    )
    grid, mask = build_grid(dom, 0.25)
    vals = np.where(mask.interior, 1.0, 0.0)
    # make the top row of the domain the brightest cells
    vals[:, -1] = 0.0
    field = ScalarField(grid, vals)
    _, pgm = write_snapshot(field, mask, 0.0, tmp_path / "obst")
    raster, _, _ = read_pgm(pgm)
    obstacle = (mask.cells == CellKind.OBSTACLE).T[::-1, :]
    assert np.all(raster[obstacle] == 128)
    assert np.all(raster[0, :] == 255)  # top raster row = top of the domain = 0


def test_read_snapshot_rejects_ragged_rows(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("nx,ny,h,t\n2,2,0.5,0.0\n1.0,2.0\n3.0\n")
    with pytest.raises(ValueError):
        read_snapshot(path)


def test_series_layout(tmp_path):
    records = [
        DiagnosticsRecord(
            t=0.0, mass=(4.0, 2.0), sup=(1.0, 1.0), tv=(0.5, 0.25),
            outflux=(0.0, 0.0), wallflux=(0.0, 0.0),
        ),
        DiagnosticsRecord(
            t=0.5, mass=(3.5, 1.75), sup=(0.9, 0.95), tv=(0.4, 0.2),
            outflux=(0.5, 0.25), wallflux=(0.0, 0.0),
        ),
    ]
    path = write_series(records, tmp_path / "series.csv")
    lines = path.read_text().strip().splitlines()
    assert lines[0] == (
        "t,mass_1,sup_1,tv_1,outflux_1,wallflux_1,"
        "mass_2,sup_2,tv_2,outflux_2,wallflux_2"
    )
    assert len(lines) == 3
    row = lines[2].split(",")
    assert float(row[0]) == 0.5
    assert float(row[1]) == 3.5
    assert float(row[10]) == 0.0


def test_series_requires_records(tmp_path):
    with pytest.raises(ValueError):
        write_series([], tmp_path / "series.csv")
