import json

import numpy as np
import pytest

from robust_reserving.errors import DataError
from robust_reserving.triangle import (
    Triangle,
    TrianglePanel,
    development_factors,
    factor_shift,
    load_manifest,
    load_triangle_csv,
    staircase_mask,
    to_cumulative,
    to_incremental,
    write_triangle_csv,
    zero_negatives,
)


def small(values=None, kind="incremental"):
    if values is None:
        values = [[10, 5, 2], [12, 6, np.nan], [11, np.nan, np.nan]]
    return Triangle(np.array(values, dtype=float), kind, "t")


def test_staircase_mask_counts():
    m = staircase_mask(4, 4)
    assert m.sum() == 10
    assert m[0].all() and m[3, 0] and not m[3, 1]


def test_example_panel_shape(example_panel):
    assert example_panel.p == 2
    assert example_panel.shape == (10, 10)
    assert example_panel.n == 55
    assert example_panel.labels == ["personal_auto", "commercial_auto"]


def test_cell_index_row_major(example_panel):
    cells = example_panel.cells
    assert (cells[0].i, cells[0].j) == (1, 1)
    assert (cells[10].i, cells[10].j) == (2, 1)
    assert example_panel.row_of(9, 1) == 52
    assert cells[52].label == "X[9,1]"


def test_cumulative_round_trip():
    t = small()
    back = to_incremental(to_cumulative(t))
    assert back == t


def test_cumulative_must_be_monotone():
    with pytest.raises(DataError):
        Triangle(np.array([[10, 8], [5, np.nan]]), "cumulative")


def test_values_in_lower_right_rejected():
    with pytest.raises(DataError):
        small([[1, 2], [3, 4]])


def test_missing_observed_cell_rejected():
    with pytest.raises(DataError):
        small([[1, np.nan], [3, np.nan]])


def test_development_factors_match_hand_computation():
    f = development_factors(to_cumulative(small()))
    assert f[0] == pytest.approx((15 + 18) / (10 + 12))
    assert f[1] == pytest.approx(17 / 15)


def test_zero_negatives_counts_and_shift():
    t = small([[10, -1, 2], [12, 6, np.nan], [11, np.nan, np.nan]])
    z, count = zero_negatives(t)
    assert count == 1
    assert z.values[0, 1] == 0
    assert factor_shift(t, z) > 0
    same, none = zero_negatives(z)
    assert none == 0 and same is z


def test_csv_round_trip(tmp_path):
    t = small([[1.5, 2.25, 3e6], [4, 5, np.nan], [7, np.nan, np.nan]])
    path = tmp_path / "t.csv"
    write_triangle_csv(t, path)
    back = load_triangle_csv(path, label="t")
    assert back == t


@pytest.mark.parametrize("cell", ["1,000", "abc", "1.2.3"])
def test_csv_rejects_non_numeric(tmp_path, cell):
    path = tmp_path / "bad.csv"
    path.write_text(f'"{cell}",2\n3,\n', encoding="utf-8")
    with pytest.raises(DataError):
        load_triangle_csv(path)


def test_csv_rejects_ragged_rows(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("1,2\n3\n", encoding="utf-8")
    with pytest.raises(DataError):
        load_triangle_csv(path)


def test_panel_requires_matching_shapes():
    a = small()
    b = Triangle(np.array([[1.0, 2.0], [3.0, np.nan]]), "incremental", "b")
    with pytest.raises(DataError):
        TrianglePanel((a, b))


def test_manifest_resolves_relative_paths(tmp_path):
    write_triangle_csv(small(), tmp_path / "a.csv")
    (tmp_path / "m.json").write_text(json.dumps({"triangles": [{"path": "a.csv", "label": "A"}]}))
    panel = load_manifest(tmp_path / "m.json")
    assert panel.labels == ["A"] and panel.p == 1


def test_manifest_errors(tmp_path):
    (tmp_path / "m.json").write_text("{not json")
    with pytest.raises(DataError):
        load_manifest(tmp_path / "m.json")
    (tmp_path / "m.json").write_text(json.dumps({"triangles": []}))
    with pytest.raises(DataError):
        load_manifest(tmp_path / "m.json")
