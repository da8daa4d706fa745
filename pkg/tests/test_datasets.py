import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import quad
from scipy.spatial import cKDTree
from sklearn.svm import LinearSVC

from mtssl import datasets as ds
from mtssl.datasets import DatasetSpec, FixedPoints, RandomCount, RandomFraction


@pytest.mark.parametrize("kw", [dict(kind="spiral"), dict(size=0), dict(noise=-1.0),
                                dict(kind="swiss_chessboard", granularity=0.0), dict(embed="torus"),
                                dict(embed_scale=0.0)])
def test_spec_validation(kw):
    with pytest.raises(ValueError):
        DatasetSpec(**kw)


def test_moon_arc_formulas():
    np.testing.assert_allclose(ds.moon_point(0.0, 1), [1.0, 0.0])
    np.testing.assert_allclose(ds.moon_point(math.pi / 2, -1), [1.0, -0.5], atol=1e-15)


@pytest.mark.parametrize("kind", ds.KINDS)
def test_generators_deterministic(kind):
    spec = DatasetSpec(kind, size=200, seed=11)
    a, b = ds.generate(spec), ds.generate(spec)
    assert all(np.array_equal(p.x, q.x) and p.z_true == q.z_true and p.z == q.z for p, q in zip(a, b))
    c = ds.generate(DatasetSpec(kind, size=200, seed=12))
    assert any(not np.array_equal(p.x, q.x) for p, q in zip(a, c))


@pytest.mark.parametrize("kind", ds.KINDS)
def test_lifted_inputs_on_unit_sphere(kind):
    spec = DatasetSpec(kind, size=300, seed=1)
    X = ds.stack_inputs(ds.generate(spec))
    assert X.shape[1] == spec.input_dim
    np.testing.assert_allclose(np.linalg.norm(X, axis=1), 1.0, atol=1e-12)


def test_sphere_lift_maps_balls_to_caps(rng):
    # |a - b|^2 in the plane fixes the chord between lifted points
    a, b = rng.normal(size=(2, 2))
    la, lb = ds.sphere_lift(np.vstack([a, b]), 1.0)
    chord2 = np.sum((la - lb) ** 2)
    want = 4 * np.sum((a - b) ** 2) / ((1 + a @ a) * (1 + b @ b))
    assert chord2 == pytest.approx(want)


def test_two_moons_balanced_and_centred():
    X, labels = ds.two_moons_raw(DatasetSpec("two_moons", size=2001, seed=0))
    assert np.count_nonzero(labels == 1) == 1001 and np.count_nonzero(labels == -1) == 1000
    assert np.abs(X.mean(axis=0)).max() < 0.05


def test_two_moons_not_linearly_separable():
    X, labels = ds.two_moons_raw(DatasetSpec("two_moons", size=2000, seed=0))
    clf = LinearSVC(C=10.0, max_iter=20000).fit(X, labels)
    assert np.mean(clf.predict(X) != labels) > 0.10


def test_two_moons_manifold_gap():
    X, labels = ds.two_moons_raw(DatasetSpec("two_moons", size=2000, seed=0, noise=0.0))
    A, B = X[labels == 1], X[labels == -1]
    gap = cKDTree(A).query(B)[0].min()
    nn = np.concatenate([cKDTree(P).query(P, k=2)[0][:, 1] for P in (A, B)])
    assert gap > np.percentile(nn, 95)


def test_roll_arc_fraction_against_quadrature():
    def speed(s):
        phi = ds.ROLL_PHI0 * (1 + 2 * s)
        return math.sqrt(1 + phi * phi) * 2 * ds.ROLL_PHI0

    total = quad(speed, 0, 1)[0]
    for s in (0.0, 0.13, 0.5, 0.77, 1.0):
        assert ds.roll_arc_fraction(s) == pytest.approx(quad(speed, 0, s)[0] / total, abs=1e-10)


def test_roll_point_scale():
    pts = ds.roll_point(np.linspace(0, 1, 50), np.linspace(0, 1, 50))
    assert np.abs(pts).max() <= 1.0 + 1e-12


def test_chessboard_parity():
    assert ds.chessboard_label(0.6, 0.1, 0.5) == -1
    assert ds.chessboard_label(0.2, 0.1, 0.5) == 1
    assert ds.chessboard_label(0.6, 0.7, 0.5) == 1


def test_chessboard_single_square():
    spec = DatasetSpec("swiss_chessboard", size=500, seed=2, granularity=1.0)
    assert all(s.z_true == 1 for s in ds.generate(spec))


def test_chessboard_balance():
    for g in (0.5, 0.25, 0.125):
        labels = np.array([s.z_true for s in ds.generate(DatasetSpec("swiss_chessboard", size=2000, seed=3, granularity=g))])
        assert abs(np.mean(labels == 1) - 0.5) <= 0.05


def test_chessboard_labels_follow_intrinsic_coords():
    spec = DatasetSpec("swiss_chessboard", size=300, seed=4, granularity=0.25)
    X, labels, uv = ds.swiss_chessboard_raw(spec)
    np.testing.assert_array_equal(labels, ds.chessboard_label(uv[:, 0], uv[:, 1], 0.25))


def test_unit_square_contract():
    spec = DatasetSpec("unit_square", size=2000, seed=5)
    X, labels, z = ds.unit_square_raw(spec)
    assert len(X) == 2002
    lab = np.flatnonzero(z)
    assert lab.tolist() == [10, 20]
    P = X + 0.5
    assert np.linalg.norm(P[10] - [0, 0]) < 0.1 and z[10] == 1
    assert np.linalg.norm(P[20] - [1, 1]) < 0.1 and z[20] == -1
    rest = np.delete(P, lab, axis=0)
    for qx in (0, 1):
        for qy in (0, 1):
            frac = np.mean(((rest[:, 0] >= 0.5) == qx) & ((rest[:, 1] >= 0.5) == qy))
            assert abs(frac - 0.25) <= 0.05


def test_unit_square_samples_masking():
    samples = ds.generate(DatasetSpec("unit_square", size=100, seed=0))
    labeled = [s for s in samples if s.z != 0]
    assert [s.z for s in labeled] == [1, -1]


# -- masking -------------------------------------------------------------------

def _stream(T=2000, seed=0):
    return ds.generate(DatasetSpec("two_moons", size=T, seed=seed))


def test_mask_fraction_edges():
    s = _stream(200)
    assert all(q.z == 0 for q in ds.mask_labels(s, RandomFraction(0.0), 1))
    assert all(q.z == q.z_true for q in ds.mask_labels(s, RandomFraction(1.0), 1))


def test_mask_fraction_exact_count():
    out = ds.mask_labels(_stream(), RandomFraction(0.05), 3)
    assert sum(q.z != 0 for q in out) == 100


def test_mask_count_and_fixed():
    s = _stream(300)
    assert sum(q.z != 0 for q in ds.mask_labels(s, RandomCount(37), 0)) == 37
    out = ds.mask_labels(s, FixedPoints((3, 7, 7)))
    assert [i for i, q in enumerate(out) if q.z] == [3, 7]


@pytest.mark.parametrize("policy, exc", [(RandomFraction(1.5), ValueError), (RandomFraction(-0.1), ValueError),
                                         (RandomCount(301), ValueError), (FixedPoints((300,)), IndexError),
                                         (FixedPoints((-1,)), IndexError), ("half", TypeError)])
def test_mask_rejects_bad_policies(policy, exc):
    with pytest.raises(exc):
        ds.mask_labels(_stream(300), policy, 0)


@given(st.floats(0.0, 1.0), st.integers(0, 2**32 - 1))
def test_mask_never_flips(p, seed):
    for q in ds.mask_labels(_stream(150, seed % 7), RandomFraction(p), seed):
        assert q.z in (0, q.z_true)


def test_early_per_class():
    s = _stream()
    pol = ds.early_per_class(s)
    i, j = pol.indices
    assert i >= 10 and j >= 20
    assert s[i].z_true == 1 and s[j].z_true == -1
    assert all(q.z_true != 1 for q in s[10:i]) and all(q.z_true != -1 for q in s[20:j])
    with pytest.raises(ValueError):
        ds.early_per_class(s[:15], starts=(10, 14), classes=(1, 2))


def test_csv_roundtrip(tmp_path):
    s = ds.mask_labels(_stream(50), RandomFraction(0.3), 2)
    path = tmp_path / "d.csv"
    ds.write_csv(path, s)
    back = ds.read_csv(path)
    assert path.read_text().splitlines()[0] == "index,x0,x1,x2,z_true,z"
    assert all(np.array_equal(a.x, b.x) and (a.z_true, a.z, a.index) == (b.z_true, b.z, b.index)
               for a, b in zip(s, back))


def test_csv_rejects_foreign_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b,c\n1,2,3\n")
    with pytest.raises(ValueError):
        ds.read_csv(path)
