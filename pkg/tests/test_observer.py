import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lagsync import _kernel
from lagsync.errors import GainConditionViolated, IsolatedAgent, ValidationError
from lagsync.network import Digraph, chain_with_shortcut, laplacian
from lagsync.numerics import OddRational, sigpow
from lagsync.observer import (
    PUBLISHED_OBSERVER, ObserverGains, finite_time_bound, fixed_time_bound, innovation, lyapunov_V,
    observer_constants, observer_rhs, stacked_innovation,
)
from lagsync.simulation import rk4_step

S = np.array([[0.0, 1.0], [-1.0, 0.0]])
D8 = 8 * np.eye(6)
G = chain_with_shortcut(6, 4)


def test_innovation_consensus():
    eta = np.tile([0.3, -0.7], (7, 1))
    for i in range(1, 7):
        np.testing.assert_array_equal(innovation(i, eta, G), 0.0)


def test_innovation_chain():
    g = Digraph(1, ((0, 1, 1.0),))
    np.testing.assert_array_equal(innovation(1, [[0.0, 0.0], [1.0, 0.0]], g), [1.0, 0.0])


def test_isolated_agent():
    g = Digraph(2, ((0, 1, 1.0),))
    with pytest.raises(IsolatedAgent):
        innovation(2, np.zeros((3, 2)), g)


def test_innovation_uses_in_neighbours_only(rng):
    eta = rng.normal(size=(7, 2))
    y1 = innovation(1, eta, G)
    eta2 = eta.copy()
    eta2[3] += 100.0   # node 3 is not an in-neighbour of node 1
    np.testing.assert_array_equal(innovation(1, eta2, G), y1)


def test_stacked_kronecker(rng):
    H = laplacian(G)
    for _ in range(20):
        eta = rng.normal(size=(7, 2)) * 10
        bar = (eta[1:] - eta[0]).ravel()
        y = stacked_innovation(eta, G.adjacency())
        np.testing.assert_allclose(y.ravel(), np.kron(H, np.eye(2)) @ bar, atol=1e-12)
        per_agent = np.array([innovation(i, eta, G) for i in range(1, 7)])
        np.testing.assert_allclose(per_agent, y, atol=1e-12)


def test_rhs_zero_innovation():
    eta = np.array([0.4, -2.0])
    np.testing.assert_array_equal(observer_rhs(eta, np.zeros(2), PUBLISHED_OBSERVER, S), S @ eta)


def test_rhs_unit_innovation():
    out = observer_rhs(np.zeros(2), np.ones(2), PUBLISHED_OBSERVER, S)
    np.testing.assert_allclose(out, -(8.4 + 1 + 1) * np.ones(2))


def test_finite_variant_rhs_drops_cubic():
    g = PUBLISHED_OBSERVER.finite_variant()
    y = np.array([0.5, -2.0])
    np.testing.assert_allclose(observer_rhs(np.zeros(2), y, g, S),
                               -8.4 * y - sigpow(y, OddRational(3, 5)))


@pytest.mark.parametrize("kw,key", [
    (dict(a=OddRational(5, 3)), "observer.a"),
    (dict(c2=0.0), "observer.c2"),
    (dict(c3=-1.0), "observer.c3"),
    (dict(b=OddRational(1, 1)), "observer.b"),
])
def test_gain_validation(kw, key):
    base = dict(c1=8.4, c2=1.0, c3=1.0, a=OddRational(3, 5), b=OddRational(3, 1))
    with pytest.raises(ValidationError) as info:
        ObserverGains(**{**base, **kw})
    assert info.value.key == key


class TestConstants:
    def test_published_c_hat1(self):
        c = observer_constants(PUBLISHED_OBSERVER, D8, S, 2, 6)
        # min{(8.4^2 - 8^2)/2, 1/2, 1/(2 * 12^2)}
        assert (8.4**2 - 64) / 2 == pytest.approx(3.28)
        assert c.c_hat1 == pytest.approx(1 / 288, rel=1e-14)
        assert c.coupling == 8.0 and c.d_max == 8.0

    def test_published_c_hat2_c_hat3_T1(self):
        c = observer_constants(PUBLISHED_OBSERVER, D8, S, 2, 6)
        a, b, d, nN = 0.6, 3.0, 8.0, 12
        r, s = 2 * a / (1 + a), 2 * b / (1 + b)
        c2 = max((8.4 * d / 2) ** r * nN ** (1 - r), (d / 1.6) ** r * nN ** (1 - a), (d / 4) ** r)
        c3 = max((8.4 * d / 2) ** s, (d / 1.6) ** s, (d / 4) ** s) * (3 * nN) ** (2 / 4)
        T1 = 4 * c2 * 1.6 / (c.c_hat1 * 0.4) + 4 * c3 * 4 / (c.c_hat1 * 2)
        assert c.c_hat2 == pytest.approx(c2, rel=1e-12)
        assert c.c_hat3 == pytest.approx(c3, rel=1e-12)
        assert c.T1_star == pytest.approx(T1, rel=1e-12)

    def test_c1_saturation(self):
        vals = [observer_constants(ObserverGains(c1, 1.0, 1.0, OddRational(3, 5), OddRational(3, 1)),
                                   D8, S, 2, 6).c_hat1 for c1 in (9.0, 50.0, 1e4)]
        assert vals == pytest.approx([min(0.5, 1 / 288)] * 3)

    @given(st.floats(1e-3, 10), st.floats(1e-3, 10), st.floats(0.1, 100), st.floats(0.1, 100))
    def test_T1_monotone_in_c_hat1(self, c1, dc, c2, c3):
        a, b = 0.6, 3.0
        assert fixed_time_bound(c1 + dc, c2, c3, a, b) < fixed_time_bound(c1, c2, c3, a, b)

    def test_c1_too_small(self):
        g = ObserverGains(8.0, 1.0, 1.0, OddRational(3, 5), OddRational(3, 1))
        with pytest.raises(GainConditionViolated):
            observer_constants(g, D8, S, 2, 6)

    def test_finite_constants(self):
        c = observer_constants(PUBLISHED_OBSERVER.finite_variant(), D8, S, 2, 6)
        assert c.finite_time and c.c_hat1 == 0.5 and np.isnan(c.T1_star)
        assert finite_time_bound(c, PUBLISHED_OBSERVER, 0.0) == 0.0


class TestLyapunov:
    def test_zero(self):
        assert lyapunov_V(np.zeros((6, 2)), PUBLISHED_OBSERVER, D8) == 0.0

    @given(st.lists(st.floats(-10, 10), min_size=12, max_size=12))
    def test_positive_and_scaling(self, ys):
        y = np.array(ys).reshape(6, 2)
        if np.abs(y).max() < 1e-100:   # below this the quadratic term underflows
            return
        v = lyapunov_V(y, PUBLISHED_OBSERVER, D8)
        assert v > 0
        assert lyapunov_V(2 * y, PUBLISHED_OBSERVER, D8) > v

    def test_hand_value(self):
        y = np.zeros((6, 2))
        y[0] = [1.0, -1.0]
        # d=8: 8 * (2/1.6 + 2/4) + 8.4/2 * 8 * 2
        assert lyapunov_V(y, PUBLISHED_OBSERVER, D8) == pytest.approx(8 * (2 / 1.6 + 0.5) + 8.4 * 8)

    def test_matches_kernel(self, rng):
        A = G.adjacency()
        obs = np.array([8.4, 1.0, 1.0, 0.6, 3.0])
        for _ in range(5):
            x = rng.normal(size=2 + 12 + 24)
            eta_all = x[:14].reshape(7, 2)
            y = stacked_innovation(eta_all, A)
            ref = lyapunov_V(y, PUBLISHED_OBSERVER, D8)
            assert _kernel.lyapunov(x, 2, 6, A, obs, np.full(6, 8.0)) == pytest.approx(ref, rel=1e-12)


def _agentwise(eta_all, A, gains):
    y = stacked_innovation(eta_all, A)
    out = np.empty_like(eta_all)
    out[0] = S @ eta_all[0]
    out[1:] = observer_rhs(eta_all[1:], y, gains, S)
    return out


def _stacked_y(y, H, gains):
    # Error dynamics in innovation coordinates: y' = (I (x) S) y - (H (x) I) g(y).
    g = gains.c1 * y + gains.c2 * sigpow(y, gains.a) + gains.c3 * sigpow(y, gains.b)
    return y @ S.T - H @ g


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from([1e-4, 1e-3]))
def test_agentwise_equals_stacked(seed, h):
    rng = np.random.default_rng(seed)
    A, H = G.adjacency(), laplacian(G)
    eta = rng.normal(size=(7, 2)) * rng.uniform(0.01, 10)
    y = stacked_innovation(eta, A)
    eta_next = rk4_step(lambda t, x: _agentwise(x.reshape(7, 2), A, PUBLISHED_OBSERVER).ravel(), eta.ravel(), 0.0, h)
    y_next = rk4_step(lambda t, v: _stacked_y(v.reshape(6, 2), H, PUBLISHED_OBSERVER).ravel(), y.ravel(), 0.0, h)
    y_from_eta = stacked_innovation(eta_next.reshape(7, 2), A).ravel()
    np.testing.assert_allclose(y_from_eta, y_next, atol=1e-10 * max(1.0, np.abs(y).max()))
