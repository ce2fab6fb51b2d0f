import numpy as np
import pytest

from votecrest import ensemble as en
from votecrest import netcore as nc
from votecrest.errors import ConfigurationError


def const_net(logits):
    """A network whose output is the given logits for every input (zero weights)."""
    logits = np.asarray(logits, dtype=float)
    return nc.Network((np.zeros((len(logits), 2)),), (logits,))


def test_ensemble_validation():
    with pytest.raises(ConfigurationError):
        en.Ensemble(())
    with pytest.raises(ConfigurationError):
        en.Ensemble((const_net([1, 0]), const_net([1, 0, 0])))
    with pytest.raises(ConfigurationError):
        en.Ensemble((const_net([1, 0]),), tie_policy="coin-flip")


def test_logits_sum_examples():
    x = np.array([0.5, 0.5])
    a = const_net([1.0, 0.0])
    b = const_net([0.0, 2.0])
    assert np.array_equal(en.logits_sum(en.Ensemble((a, b)), x), [1.0, 2.0])
    # two identical members double the logits exactly
    two = en.Ensemble((a, a))
    assert np.array_equal(en.logits_sum(two, x), 2 * nc.forward_logits(a, x))
    # n = 1 reduces to the member's own logits
    one = en.Ensemble((a,))
    assert np.array_equal(en.logits_sum(one, x), nc.forward_logits(a, x))


def test_vote_counts_examples():
    x = np.array([0.1, 0.9])
    m0 = const_net([5.0, 0.0, 0.0])
    m1 = const_net([0.0, 5.0, 0.0])
    m2 = const_net([0.0, 0.0, 5.0])
    counts = en.vote_counts(en.Ensemble((m0, m1, m1)), x)
    assert np.array_equal(counts, [1, 2, 0])
    assert counts.sum() == 3
    assert np.array_equal(en.vote_counts(en.Ensemble((m0, m1, m2)), x), [1, 1, 1])
    four = const_net([0.0, 0.0, 5.0, 0.0])
    assert np.array_equal(en.vote_counts(en.Ensemble((four,)), x), [0, 0, 1, 0])


def test_majority_vote_and_ties():
    x = np.array([0.1, 0.9])
    m0 = const_net([5.0, 0.0, 0.0])
    m1 = const_net([0.0, 5.0, 0.0])
    m2 = const_net([0.0, 0.0, 5.0])
    assert en.majority_vote(en.Ensemble((m0, m1, m1)), x) == 1
    # full tie resolves to the lowest index under the default policy
    assert en.majority_vote(en.Ensemble((m0, m1, m2)), x) == 0
    # seeded-random ties are reproducible call to call
    seeded = en.Ensemble((m0, m1, m2), tie_policy="seeded-random", tie_seed=123)
    picks = {en.majority_vote(seeded, x) for _ in range(5)}
    assert len(picks) == 1
    # and different seeds can pick differently; the winner has a maximal count
    winners = {en.majority_vote(
        en.Ensemble((m0, m1, m2), tie_policy="seeded-random", tie_seed=s), x)
        for s in range(30)}
    assert winners <= {0, 1, 2} and len(winners) > 1


def test_majority_vote_always_maximal_count():
    rng = np.random.default_rng(8)
    for _ in range(30):
        members = tuple(nc.init_network([2, 4, 3], int(rng.integers(0, 2 ** 32)))
                        for _ in range(int(rng.integers(1, 6))))
        ens = en.Ensemble(members)
        x = rng.uniform(0, 1, size=2)
        counts = en.vote_counts(ens, x)
        assert counts[en.majority_vote(ens, x)] == counts.max()


def test_single_member_degenerate():
    net = nc.init_network([2, 5, 3], 4)
    ens = en.Ensemble((net,))
    rng = np.random.default_rng(1)
    for _ in range(10):
        x = rng.uniform(0, 1, size=2)
        label = nc.predict_label(net, x)
        assert en.majority_vote(ens, x) == label
        assert int(np.argmax(en.logits_sum(ens, x))) == label


def test_identical_members_agree_with_member():
    net = nc.init_network([2, 5, 3], 4)
    ens = en.Ensemble((net, net, net))
    x = np.array([0.3, 0.8])
    label = nc.predict_label(net, x)
    assert en.majority_vote(ens, x) == label
    assert int(np.argmax(en.logits_sum(ens, x))) == label


def test_member_permutation_invariance():
    rng = np.random.default_rng(77)
    members = tuple(nc.init_network([2, 4, 3], s) for s in (1, 2, 3, 4, 5))
    for _ in range(10):
        x = rng.uniform(0, 1, size=2)
        perm = rng.permutation(5)
        a = en.Ensemble(members)
        b = en.Ensemble(tuple(members[i] for i in perm))
        assert np.array_equal(en.vote_counts(a, x), en.vote_counts(b, x))
        assert en.majority_vote(a, x) == en.majority_vote(b, x)


def test_manifest_round_trip(tmp_path):
    members = [nc.init_network([2, 3, 2], s) for s in (10, 11)]
    paths = []
    for i, m in enumerate(members):
        p = tmp_path / f"m{i}.net"
        nc.save_network(m, p)
        paths.append(p.name)  # relative paths resolve against the manifest
    manifest = tmp_path / "ens.manifest"
    en.save_manifest(manifest, paths, tie_policy="seeded-random", tie_seed=9)
    loaded = en.load_manifest(manifest)
    assert loaded.n_members == 2
    assert loaded.tie_policy == "seeded-random"
    assert loaded.tie_seed == 9
    for a, b in zip(loaded.members, members):
        for wa, wb in zip(a.weights, b.weights):
            assert np.array_equal(wa, wb)


def test_manifest_rejects_garbage(tmp_path):
    p = tmp_path / "bad.manifest"
    p.write_text("something else\n")
    with pytest.raises(ConfigurationError):
        en.load_manifest(p)
