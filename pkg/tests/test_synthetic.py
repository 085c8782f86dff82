import numpy as np
import pytest

from robust_reserving.errors import DataError
from robust_reserving.synthetic import SyntheticSpec, generate_synthetic_panel


def test_shape_and_labels():
    s = generate_synthetic_panel(n_triangles=3, size=10, seed=1)
    assert s.panel.p == 3 and s.panel.n == 55
    assert s.panel.labels == ["line_1", "line_2", "line_3"]
    assert s.mean.shape == (3, 10, 10)
    assert not s.truth().any()


def test_seeded_generation_is_reproducible():
    a = generate_synthetic_panel(seed=7, n_outliers=3)
    b = generate_synthetic_panel(SyntheticSpec(seed=7, n_outliers=3))
    for ta, tb in zip(a.panel, b.panel):
        np.testing.assert_array_equal(ta.values, tb.values)
    assert a.outliers == b.outliers


def test_planted_outliers_are_far_from_mean():
    s = generate_synthetic_panel(size=12, n_outliers=3, seed=2)
    assert s.truth().sum() == 3
    for i, j in s.outliers:
        for k, t in enumerate(s.panel):
            mu = s.mean[k, i - 1, j - 1]
            sd = np.sqrt(s.spec.noise_cv**2 * s.mean[k][t.mask].min() * mu)
            assert abs(t.values[i - 1, j - 1] - mu) > 5 * sd


def test_noise_correlation_follows_spec():
    s = generate_synthetic_panel(n_triangles=2, size=40, correlation=0.7, seed=3)
    z = []
    for k, t in enumerate(s.panel):
        mu = s.mean[k][t.mask]
        z.append((t.values[t.mask] - mu) / np.sqrt(mu))
    assert np.corrcoef(z)[0, 1] == pytest.approx(0.7, abs=0.1)


def test_skewed_noise_is_right_skewed():
    s = generate_synthetic_panel(n_triangles=1, size=40, skewness=0.8, seed=4)
    t = s.panel[0]
    mu = s.mean[0][t.mask]
    z = (t.values[t.mask] - mu) / np.sqrt(mu)
    assert np.mean((z - z.mean()) ** 3) > 0


@pytest.mark.parametrize(
    "kwargs",
    [
        {"n_triangles": 0},
        {"size": 2},
        {"correlation": 1.0},
        {"correlation": -0.9, "n_triangles": 3},
        {"skewness": -1.0},
        {"n_outliers": 50, "size": 10},
        {"outlier_sigma": 30.0},
    ],
)
def test_infeasible_specs_rejected(kwargs):
    with pytest.raises(DataError):
        generate_synthetic_panel(**kwargs)
