import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crowdpref import kernels
from crowdpref.kernels import _pykernels as py

ck = pytest.importorskip("crowdpref.kernels._ckernels")


def _cum(rng, *shape):
    p = rng.random(shape) ** 3
    p /= p.sum(axis=-1, keepdims=True)
    return np.ascontiguousarray(np.cumsum(p, axis=-1))


def _problem(seed, S=6, A=3):
    rng = np.random.default_rng(seed)
    return rng, _cum(rng, S), _cum(rng, S, A), _cum(rng, S, A, S)


def test_backend_is_reported():
    assert kernels.BACKEND in ("cython", "python")


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10 ** 6), st.integers(1, 40))
def test_sample_path_backends_agree(seed, horizon):
    rng, cs, cp, ct = _problem(seed)
    u = rng.random(1 + 2 * horizon)
    s1, a1 = py.sample_path(cs, cp, ct, u, horizon)
    s2, a2 = ck.sample_path(cs, cp, ct, u, horizon)
    assert np.array_equal(s1, s2) and np.array_equal(a1, a2)


def test_sample_path_edge_uniforms():
    _, cs, cp, ct = _problem(0)
    for u0 in (0.0, np.nextafter(1.0, 0.0)):
        u = np.full(9, u0)
        assert np.array_equal(py.sample_path(cs, cp, ct, u, 4)[0], ck.sample_path(cs, cp, ct, u, 4)[0])


def test_sample_path_inverse_cdf():
    cs = np.array([0.25, 0.25, 1.0])  # state 1 has zero mass
    cp = np.array([[1.0]] * 3)
    ct = np.array([[[0.0, 0.0, 1.0]]] * 3)
    for mod in (py, ck):
        assert mod.sample_path(cs, cp, ct, np.array([0.1, 0.5, 0.5]), 1)[0].tolist() == [0]
        assert mod.sample_path(cs, cp, ct, np.array([0.25, 0.5, 0.5]), 1)[0].tolist() == [2]


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10 ** 6), st.integers(1, 60), st.integers(1, 5))
def test_q_sweeps_backends_agree(seed, n, sweeps):
    rng = np.random.default_rng(seed)
    S, A = 5, 3
    s, a, s2 = rng.integers(S, size=n), rng.integers(A, size=n), rng.integers(S, size=n)
    r = rng.standard_normal(n)
    term = (rng.random(n) < 0.2).astype(np.uint8)
    lrs = rng.random(sweeps)
    q1 = py.q_sweeps(s, a, r, s2, term, np.zeros((S, A)), 0.9, lrs)
    q2 = ck.q_sweeps(s, a, r, s2, term, np.zeros((S, A)), 0.9, lrs)
    assert np.array_equal(q1, q2)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10 ** 6), st.integers(1, 8), st.integers(1, 30))
def test_greedy_returns_backends_agree(seed, episodes, horizon):
    rng, cs, _, ct = _problem(seed)
    reward = rng.standard_normal((6, 3))
    greedy = rng.integers(3, size=6)
    u = rng.random((episodes, 1 + horizon))
    assert np.array_equal(py.greedy_returns(cs, ct, reward, greedy, u), ck.greedy_returns(cs, ct, reward, greedy, u))


def test_q_sweeps_updates_in_place():
    q = np.zeros((2, 1))
    out = kernels.q_sweeps(np.array([0]), np.array([0]), np.array([1.0]), np.array([1]),
                           np.array([1], dtype=np.uint8), q, 0.9, np.array([0.5, 0.5]))
    assert q[0, 0] == 0.75 and np.shares_memory(out, q)


def test_env_var_forces_fallback():
    env = dict(os.environ, CROWDPREF_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "from crowdpref import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
