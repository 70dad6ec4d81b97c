import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from slatefree.catalog import RandomizedPolicy, enumerate_slates
from slatefree.errors import ConfigError
from slatefree.users import (
    UserModel,
    choice_distribution,
    rejection_probability,
    sample_next_state,
    transition_matrix_for_policy,
)

from conftest import three_users


def test_user1_formula():
    u = UserModel.user1(10, 0.75)
    p = choice_distribution(u, 0, (1, 2, 3, 4))
    assert p[1] == pytest.approx(0.2125, abs=1e-15)
    assert p[0] == pytest.approx(0.025) and p[9] == pytest.approx(0.025)
    strict = choice_distribution(UserModel.user1(10, 1.0), 0, (1, 2, 3, 4))
    assert strict[5] == 0.0


def test_user2_formula():
    u = UserModel.user2(10, 0.75, (0, 1, 8))
    p = choice_distribution(u, 2, (0, 3, 4, 8))
    assert p[[0, 1, 8]].tolist() == [0.0, 0.0, 0.0]
    assert p[3] == pytest.approx(0.75 / 2 + 0.25 / 7)
    assert p[5] == pytest.approx(0.25 / 7)
    # every recommended item undesired: the whole mass goes to the library branch
    q = choice_distribution(u, 2, (0, 1, 8))
    assert q[3] == pytest.approx(1 / 7) and q[8] == 0.0


def test_user3_formula():
    u = UserModel.user3(10, (0, 1, 8))
    p = choice_distribution(u, 2, (3, 4, 5, 8))
    np.testing.assert_allclose(p[[3, 4, 5, 8]], 0.25)
    assert p.sum() == pytest.approx(1.0) and p[0] == 0.0
    np.testing.assert_allclose(choice_distribution(u, 2, (3, 4, 5, 6)), 0.1)
    narrow = UserModel.user3(10, (0, 1, 8), reject_full_catalog=False)
    r = choice_distribution(narrow, 2, (3, 4, 5, 6))
    assert r[[0, 1, 8]].tolist() == [0.0, 0.0, 0.0]
    assert r[2] == pytest.approx(1 / 7)


@pytest.mark.parametrize(
    "factory",
    [
        lambda: UserModel.user1(10, 1.5),
        lambda: UserModel.user2(3, 0.5, (0, 1, 2)),
        lambda: UserModel.user2(3, 0.5, (5,)),
        lambda: UserModel.user3(5, ()),
        lambda: UserModel.user3(2, (0, 1), reject_full_catalog=False),
    ],
)
def test_invalid_models(factory):
    with pytest.raises(ConfigError):
        factory()


def test_exhaustive_probability_vectors():
    for k in (4, 7, 10):
        for name, user in three_users(k, x=(0, 1)).items():
            for n in range(1, min(4, k - 1) + 1):
                for s in range(k):
                    for w in enumerate_slates(k, s, n):
                        p = choice_distribution(user, s, w)
                        assert p.min() >= 0 and abs(p.sum() - 1) <= 1e-12
                        if name == "user2":
                            assert p[0] == 0.0 and p[1] == 0.0
                        if name == "user3" and set(w) & {0, 1}:
                            outside = np.ones(k, bool)
                            outside[list(w)] = False
                            assert np.all(p[outside] == 0.0)


@settings(max_examples=60, deadline=None)
@given(
    alpha=st.floats(0, 1),
    k=st.integers(3, 12),
    data=st.data(),
)
def test_user2_properties(alpha, k, data):
    x = data.draw(st.sets(st.integers(0, k - 1), max_size=k - 1))
    s = data.draw(st.integers(0, k - 1))
    n = data.draw(st.integers(1, k - 1))
    w = data.draw(st.permutations([i for i in range(k) if i != s]))[:n]
    p = choice_distribution(UserModel.user2(k, alpha, x), s, w)
    assert abs(p.sum() - 1) <= 1e-12
    assert all(p[i] == 0.0 for i in x)


def test_sampler_matches_distribution():
    rng = np.random.default_rng(5)
    for user in three_users().values():
        w = (2, 3, 8, 9)
        p = choice_distribution(user, 0, w)
        draws = np.array([sample_next_state(user, 0, w, rng) for _ in range(200_000)])
        freq = np.bincount(draws, minlength=10) / draws.size
        assert np.max(np.abs(freq - p)) <= 5e-3


def test_sampler_deterministic_cases():
    rng = np.random.default_rng(0)
    u = UserModel.user1(6, 1.0)
    assert {sample_next_state(u, 0, (3,), rng) for _ in range(100)} == {3}
    a = [sample_next_state(UserModel.user1(10, 0.75), 1, (2, 3), np.random.default_rng(9)) for _ in range(3)]
    assert len(set(a)) == 1


def test_transition_matrix_for_policy():
    k, n, alpha = 8, 3, 0.75
    u = UserModel.user1(k, alpha)
    uni = transition_matrix_for_policy(u, RandomizedPolicy.uniform(k, n))
    r = n / (k - 1)
    for s in range(k):
        for t in range(k):
            expected = (1 - alpha) / k + (alpha / n * r if t != s else 0.0)
            assert uni[s, t] == pytest.approx(expected, abs=1e-12)
    np.testing.assert_allclose(uni.sum(axis=1), 1.0, atol=1e-12)
    slates = [tuple(sorted({(s + 1) % k, (s + 2) % k, (s + 3) % k})) for s in range(k)]
    det = transition_matrix_for_policy(u, RandomizedPolicy.deterministic(k, slates))
    for s in range(k):
        np.testing.assert_array_equal(det[s], choice_distribution(u, s, slates[s]))


def test_rejection_probability():
    u = UserModel.user1(10, 0.75)
    p = choice_distribution(u, 0, (1, 2, 3, 4))
    assert rejection_probability(p, (1, 2, 3, 4)) == pytest.approx(1 - 4 * 0.2125)
