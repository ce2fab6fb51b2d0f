import numpy as np
import pytest

from votecrest import base_attacks as ba
from votecrest import diversity as dv
from votecrest import netcore as nc
from votecrest import training as tr
from votecrest.datasets import gen_dataset
from votecrest.errors import InputError


def test_perturbation_cosine_examples():
    v = np.array([0.1, -0.2, 0.3])
    assert dv.perturbation_cosine(v, v) == pytest.approx(1.0)
    assert dv.perturbation_cosine(v, -v) == pytest.approx(-1.0)
    assert dv.perturbation_cosine(np.array([1.0, 0.0]), np.array([0.0, 2.0])) == 0.0


def test_perturbation_cosine_rejects_zero():
    with pytest.raises(InputError):
        dv.perturbation_cosine(np.zeros(3), np.ones(3))
    with pytest.raises(InputError):
        dv.perturbation_cosine(np.ones(3), np.zeros(3))


def test_cosine_scale_invariance():
    rng = np.random.default_rng(1)
    for _ in range(30):
        a = rng.normal(size=4)
        b = rng.normal(size=4)
        c = float(rng.uniform(0.01, 100.0))
        assert dv.perturbation_cosine(c * a, b) == pytest.approx(
            dv.perturbation_cosine(a, b), abs=1e-12)


@pytest.fixture(scope="module")
def attack_setup():
    ds = gen_dataset("gaussian-blobs", 2, 2, 25, 0.25, seed=21)
    net = tr.train(nc.init_network([2, 10, 2], 2), ds, tr.TrainObjective("standard"),
                   tr.TrainSchedule(epochs=30, batch_size=16, learning_rate=0.4, seed=0))
    other = tr.train(nc.init_network([2, 10, 2], 5), ds, tr.TrainObjective("standard"),
                     tr.TrainSchedule(epochs=30, batch_size=16, learning_rate=0.4, seed=1))
    eps = 0.12
    attack = ba.make_single_model_attack(
        "pgd-ce", ba.PerturbationBudget(eps), ba.AttackSchedule(steps=15, step_size=eps / 6, seed=4))
    return ds, net, other, attack


def test_matrix_single_model_self_pair(attack_setup):
    ds, net, _, attack = attack_setup
    mat = dv.pairwise_cosine_matrix([net], attack, list(ds)[:10])
    assert mat.values.shape == (1, 1)
    assert mat.values[0, 0] == pytest.approx(1.0)


def test_matrix_identical_models_full_agreement(attack_setup):
    ds, net, _, attack = attack_setup
    mat = dv.pairwise_cosine_matrix([net, net], attack, list(ds)[:10])
    assert mat.values[0, 1] == pytest.approx(1.0)


def test_matrix_symmetry_diagonal_and_range(attack_setup):
    ds, net, other, attack = attack_setup
    mat = dv.pairwise_cosine_matrix([net, other], attack, list(ds)[:15])
    assert np.array_equal(mat.values, mat.values.T)
    assert np.array_equal(mat.skipped, mat.skipped.T)
    for i in range(2):
        if mat.skipped[i, i] < mat.n_points:
            assert mat.values[i, i] == pytest.approx(1.0)
    finite = mat.values[np.isfinite(mat.values)]
    assert (finite >= -1 - 1e-12).all() and (finite <= 1 + 1e-12).all()


def test_matrix_skips_zero_perturbations(attack_setup):
    ds, net, other, attack = attack_setup
    # find a point the model already misclassifies: early exit, delta = 0
    flipped = [(x, (y + 1) % 2) for x, y in list(ds)[:6]]
    mat = dv.pairwise_cosine_matrix([net, other], attack, flipped)
    assert mat.skipped.max() > 0


def test_matrix_all_skipped_reports_missing():
    # a constant network misclassifies label-1 points everywhere: both attacks
    # exit immediately, every point is skipped, the entry is missing not 0
    const = nc.Network((np.zeros((2, 2)),), (np.array([1.0, 0.0]),))
    points = [(np.array([0.4, 0.6]), 1), (np.array([0.2, 0.1]), 1)]
    attack = ba.make_single_model_attack(
        "pgd-ce", ba.PerturbationBudget(0.05), ba.AttackSchedule(steps=3, step_size=0.01))
    mat = dv.pairwise_cosine_matrix([const, const], attack, points)
    assert np.isnan(mat.values).all()
    assert (mat.skipped == 2).all()


def test_group_means_split(attack_setup):
    ds, net, other, attack = attack_setup
    mat = dv.pairwise_cosine_matrix([net, net, other], attack, list(ds)[:10])
    same, cross = dv.group_means(mat, ["a", "a", "b"])
    assert same == pytest.approx(1.0)  # identical models in group "a"
    assert -1 <= cross <= 1
    with pytest.raises(InputError):
        dv.group_means(mat, ["a", "a"])


def test_cosine_csv_output(tmp_path, attack_setup):
    ds, net, other, attack = attack_setup
    mat = dv.pairwise_cosine_matrix([net, other], attack, list(ds)[:8])
    path = tmp_path / "div.csv"
    dv.write_cosine_csv(mat, ["m0", "m1"], path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "model,m0,m1,skipped_points"
    assert len(lines) == 3
    first = lines[1].split(",")
    assert first[0] == "m0" and float(first[1]) == pytest.approx(1.0)
