import numpy as np
import pytest

from votecrest import base_attacks as ba
from votecrest import datasets as dg
from votecrest import netcore as nc
from votecrest.errors import ConfigurationError


def test_deterministic_generation():
    a = dg.gen_dataset("gaussian-blobs", 3, 2, 15, 0.25, seed=42)
    b = dg.gen_dataset("gaussian-blobs", 3, 2, 15, 0.25, seed=42)
    assert np.array_equal(a.X, b.X) and np.array_equal(a.y, b.y)
    c = dg.gen_dataset("gaussian-blobs", 3, 2, 15, 0.25, seed=43)
    assert not np.array_equal(a.X, c.X)


def test_splits_share_geometry_differ_in_points():
    a = dg.gen_dataset("gaussian-blobs", 2, 3, 10, 0.2, seed=4, split=0)
    b = dg.gen_dataset("gaussian-blobs", 2, 3, 10, 0.2, seed=4, split=1)
    assert np.array_equal(a.centers, b.centers)
    assert not np.array_equal(a.X, b.X)


def test_empty_class_rejected():
    with pytest.raises(ConfigurationError):
        dg.gen_dataset("gaussian-blobs", 2, 2, 0, 0.3, seed=1)
    with pytest.raises(ConfigurationError):
        dg.gen_dataset("mnist", 2, 2, 5, 0.3, seed=1)


def test_blob_support_separation_and_box():
    ds = dg.gen_dataset("gaussian-blobs", 2, 3, 50, 0.2, seed=7)
    assert (ds.X >= 0).all() and (ds.X <= 1).all()
    # any cross-class point pair is at least `margin` apart in l-inf
    for a in range(3):
        for b in range(a + 1, 3):
            xa = ds.X[ds.y == a]
            xb = ds.X[ds.y == b]
            gaps = np.abs(xa[:, None, :] - xb[None, :, :]).max(axis=2)
            assert gaps.min() >= ds.margin - 1e-12


def test_blob_infeasible_margin_rejected():
    with pytest.raises(ConfigurationError):
        dg.gen_dataset("gaussian-blobs", 2, 2, 5, 1.0, seed=1)
    with pytest.raises(ConfigurationError):
        # the box cannot hold two supports this wide this far apart
        dg.gen_dataset("gaussian-blobs", 2, 2, 5, 0.4, seed=1, support_radius=0.25)


def test_ring_dataset_basics():
    ds = dg.gen_dataset("ring", 2, 3, 40, 0.06, seed=3)
    assert len(ds) == 120
    assert (ds.X >= 0).all() and (ds.X <= 1).all()
    radii = np.linalg.norm(ds.X - 0.5, axis=1)
    # consecutive class annuli keep a radial gap of at least margin
    for c in range(2):
        outer_of_inner = radii[ds.y == c].max()
        inner_of_outer = radii[ds.y == c + 1].min()
        assert inner_of_outer - outer_of_inner >= ds.margin - 1e-9
    with pytest.raises(ConfigurationError):
        dg.gen_dataset("ring", 3, 2, 5, 0.1, seed=1)


def test_take_and_iteration():
    ds = dg.gen_dataset("gaussian-blobs", 2, 2, 5, 0.3, seed=2)
    sub = ds.take(4)
    assert len(sub) == 4
    pairs = list(sub)
    assert len(pairs) == 4
    assert all(len(x) == 2 and isinstance(y, int) for x, y in pairs)


def test_nearest_centroid_robust_below_half_margin():
    # margin 0.4 with eps 0.1: the analytic bound guarantees a nearest-centroid
    # decision survives any attack, so the projected-gradient attack finds none
    margin, eps = 0.4, 0.1
    ds = dg.gen_dataset("gaussian-blobs", 2, 2, 40, margin, seed=11)
    c = ds.centers
    # nearest centroid as a 1-layer linear net: logits_k = 2 c_k . x - |c_k|^2
    net = nc.Network((2.0 * c,), (-np.array([c[0] @ c[0], c[1] @ c[1]]),))
    clean = np.mean([nc.predict_label(net, x) == y for x, y in ds])
    assert clean == 1.0
    budget = ba.PerturbationBudget(eps)
    schedule = ba.AttackSchedule(steps=60, step_size=eps / 10, restarts=2,
                                 random_start=True, seed=5)
    for name in ("pgd-ce", "pgd-cw"):
        attack = ba.make_single_model_attack(name, budget, schedule)
        ra = ba.robust_accuracy(lambda z: nc.predict_label(net, z), ds,
                                lambda x, y: attack(net, x, y))
        assert ra == 1.0
