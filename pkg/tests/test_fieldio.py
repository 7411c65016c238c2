from __future__ import annotations

import csv

import numpy as np
import pytest

from magreen.errors import ConfigurationError
from magreen.fieldio import load_state, read_fields, save_state, write_csv, write_fields


def test_state_roundtrip(tmp_path, osc2):
    path = tmp_path / "state.bin"
    save_state(path, osc2)
    st = load_state(path)
    assert st.grid.shape == osc2.grid.shape and st.grid.h == osc2.grid.h
    assert np.array_equal(st.u, osc2.u, equal_nan=True)
    assert np.array_equal(st.hess, osc2.hess, equal_nan=True)
    assert np.allclose(st.cof[osc2.grid.inside], osc2.cof[osc2.grid.inside])
    assert st.residual == osc2.residual and st.newton_iters == osc2.newton_iters
    assert st.density.source == osc2.density.source


def test_header_and_payload(tmp_path, quad2_coarse):
    g = quad2_coarse.grid
    path = tmp_path / "f.bin"
    write_fields(path, g, {"a": np.arange(np.prod(g.shape), dtype=float).reshape(g.shape)}, {"note": "x"})
    raw = path.read_bytes()
    assert raw[:8] == b"MAGFLD1\0"
    grid, fields, meta = read_fields(path)
    assert meta == {"note": "x"}
    assert fields["a"][1, 2] == g.shape[1] + 2  # row-major


def test_bad_file(tmp_path):
    p = tmp_path / "junk.bin"
    p.write_bytes(b"not a field file")
    with pytest.raises(ConfigurationError):
        read_fields(p)


def test_shape_mismatch(tmp_path, quad2_coarse):
    with pytest.raises(ConfigurationError):
        write_fields(tmp_path / "f.bin", quad2_coarse.grid, {"a": np.zeros((3, 3))})


def test_csv_columns(tmp_path, quad3):
    p = tmp_path / "u.csv"
    write_csv(p, quad3.grid, quad3.u)
    rows = list(csv.reader(open(p)))
    assert rows[0] == ["x", "y", "z", "value"]
    assert len(rows) - 1 == quad3.grid.inside.sum()
