import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from scorefold.conditioning import assemble
from scorefold.errors import InvalidInputError
from scorefold.geometry import Structure, distance_matrix
from scorefold.noise import geometric_schedule, true_score
from scorefold.score import chain_rule_backward, chain_rule_gradients, dsm_loss, net_score, oracle_score
from scorefold.toy import helix
from scorefold.training import make_net

from .conftest import random_rotation

SCHEDULE = geometric_schedule()


def bilinear(H, X):
    return float((H * distance_matrix(X)).sum())


def finite_difference(H, X, step=1e-4):
    G = np.zeros_like(X)
    for i in range(X.shape[0]):
        for a in range(3):
            Xp, Xm = X.copy(), X.copy()
            Xp[i, a] += step
            Xm[i, a] -= step
            G[i, a] = (bilinear(H, Xp) - bilinear(H, Xm)) / (2 * step)
    return G


class ZeroModel:
    def evaluate(self, X, bundle, level):
        return np.zeros_like(X)


def test_zero_field_gives_zero_gradient(rng):
    assert not chain_rule_gradients(np.zeros((5, 5)), rng.normal(size=(5, 3))).any()


def test_two_residue_example():
    H = np.array([[0.0, 1.0], [1.0, 0.0]])
    X = np.array([[1.0, 0, 0], [0.0, 0, 0]])
    assert chain_rule_gradients(H, X).tolist() == [[4.0, 0, 0], [-4.0, 0, 0]]


def test_chain_rule_shape_mismatch():
    with pytest.raises(InvalidInputError):
        chain_rule_gradients(np.zeros((4, 4)), np.zeros((5, 3)))


@given(st.integers(0, 2**32 - 1), st.integers(2, 10))
def test_chain_rule_matches_finite_differences(seed, L):
    rng = np.random.default_rng(seed)
    H, X = rng.normal(size=(L, L)), rng.normal(size=(L, 3)) * 3
    G, ref = chain_rule_gradients(H, X), finite_difference(H, X)
    assert np.abs(G - ref).max() <= 1e-5 * np.abs(ref).max()


@given(st.integers(0, 2**32 - 1), st.integers(2, 12))
def test_chain_rule_equivariant_and_balanced(seed, L):
    rng = np.random.default_rng(seed)
    H, X = rng.normal(size=(L, L)), rng.normal(size=(L, 3)) * 5
    R, t = random_rotation(rng), rng.normal(size=3) * 10
    G = chain_rule_gradients(H, X)
    assert np.abs(chain_rule_gradients(H, X @ R.T + t) - G @ R.T).max() <= 1e-9 * max(1.0, np.abs(G).max())
    assert np.linalg.norm(G.sum(axis=0)) <= 1e-9 * np.linalg.norm(G)


@given(st.integers(0, 2**32 - 1), st.integers(2, 9))
def test_backward_is_adjoint(seed, L):
    rng = np.random.default_rng(seed)
    H, X, U = rng.normal(size=(L, L)), rng.normal(size=(L, 3)), rng.normal(size=(L, 3))
    lhs = float((chain_rule_gradients(H, X) * U).sum())
    rhs = float((H * chain_rule_backward(U, X)).sum())
    assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-10)


def test_oracle_examples():
    native = Structure("AAAAA", np.arange(15.0).reshape(5, 3))
    model = oracle_score(native, SCHEDULE)
    assert not model.evaluate(native.coords, None, 3).any()
    k = int(np.argmin(np.abs(SCHEDULE.as_array() - 1.0)))
    one = oracle_score(native, geometric_schedule(10.0, 1.0, 2))
    assert np.array_equal(one.evaluate(native.coords - 1.0, None, 1), np.ones((5, 3)))
    assert model.evaluate(native.coords - 1.0, None, k).shape == (5, 3)
    with pytest.raises(InvalidInputError):
        model.evaluate(np.zeros((4, 3)), None, 0)


def test_dsm_loss_of_oracle_is_exactly_zero(rng):
    s = helix(20)
    batch = [(s, None)] * 4

    class Stub:
        # returns exactly the denoising target for the noisy input it was given
        def evaluate(self, X_tilde, bundle, level):
            return true_score(s.coords, X_tilde, SCHEDULE[level])

    for _ in range(25):
        assert dsm_loss(Stub(), batch, SCHEDULE, rng) == 0.0


def test_dsm_loss_of_zero_model_matches_closed_form(rng):
    L = 20
    batch = [(helix(L), None)] * 50
    loss = np.mean([dsm_loss(ZeroModel(), batch, SCHEDULE, rng) for _ in range(40)])
    assert loss == pytest.approx(1.5 * L, rel=0.05)
    assert loss >= 0


def test_dsm_loss_rejects_empty_batch(rng):
    with pytest.raises(InvalidInputError):
        dsm_loss(ZeroModel(), [], SCHEDULE, rng)


def test_fresh_net_score_is_zero(rng):
    s = helix(12)
    model = net_score(make_net(width=8, blocks=1), SCHEDULE)
    bundle = assemble(s.sequence)
    for k in (0, 15, 31):
        assert not model.evaluate(rng.normal(size=(12, 3)) * 5, bundle, k).any()


def trained_like_net(seed=3):
    net = make_net(width=8, blocks=2, seed=seed)
    rng = np.random.default_rng(seed)
    for name in ("stiff_w", "stiff_sep", "target_w"):
        net.params[name] = rng.normal(0, 0.5, net.params[name].shape)
    return net


def test_net_score_is_rigid_motion_equivariant(rng):
    s = helix(14)
    bundle = assemble(s.sequence)
    model = net_score(trained_like_net(), SCHEDULE)
    X = s.coords + rng.normal(size=s.coords.shape)
    R, t = random_rotation(rng), rng.normal(size=3) * 20
    G = model.evaluate(X, bundle, 20)
    assert np.abs(G).max() > 0
    assert np.allclose(model.field(X @ R.T + t, bundle, 20), model.field(X, bundle, 20), rtol=0, atol=1e-9)
    assert np.abs(model.evaluate(X @ R.T + t, bundle, 20) - G @ R.T).max() <= 1e-8 * np.abs(G).max()


def test_net_score_is_deterministic(rng):
    s = helix(10)
    bundle = assemble(s.sequence)
    model = net_score(trained_like_net(), SCHEDULE)
    X = rng.normal(size=(10, 3)) * 4
    assert np.array_equal(model.field(X, bundle, 5), model.field(X, bundle, 5))


def test_net_score_swapped_identical_residues():
    # three residues symmetric under reversal: residues 0 and 2 are interchangeable
    net = trained_like_net()
    rng = np.random.default_rng(7)
    F = rng.normal(size=(3, 3, net.channels))
    F = 0.5 * (F + F[::-1, ::-1])
    X = np.array([[-2.0, 0.0, 0.0], [0.0, 2.5, 0.3], [2.0, 0.0, 0.0]])
    H = net.field(distance_matrix(X), F, 0.7)
    assert np.allclose(H[::-1, ::-1], H, rtol=0, atol=1e-12)


def test_net_score_length_mismatch():
    model = net_score(make_net(width=8, blocks=1), SCHEDULE)
    with pytest.raises(InvalidInputError):
        model.evaluate(np.zeros((6, 3)), assemble("AAAAA"), 0)
