import math

import numpy as np
import pytest

from uav_isac import solver as sv
from uav_isac.feasibility import fp4_covariance
from conftest import make_scenario


def max_eig_problem(C):
    M = C.shape[0]
    p = sv.ConvexProblem()
    p.add_psd("X", M)
    p.add_eq(sv.Affine({"X": np.eye(M)}), 1.0)
    p.add_linear_objective(sv.Affine({"X": C}))
    return p


def test_max_eigenvalue_sdp():
    vals, rep = sv.solve(max_eig_problem(np.diag([3.0, 1.0]).astype(complex)))
    assert rep.status == sv.OPTIMAL
    assert rep.objective == pytest.approx(3.0, abs=1e-6 * 4)
    assert np.allclose(vals["X"], np.diag([1.0, 0.0]), atol=1e-5)


def test_max_eigenvalue_complex(rng):
    B = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    C = B + B.conj().T
    vals, rep = sv.solve(max_eig_problem(C))
    lam = np.linalg.eigvalsh(C)[-1]
    assert abs(rep.objective - lam) <= 1e-6 * (1 + abs(lam))
    assert np.allclose(vals["X"], vals["X"].conj().T)
    assert np.linalg.eigvalsh(vals["X"])[0] >= -1e-7


def test_log_cap():
    p = sv.ConvexProblem()
    p.add_vector("x", 1)
    p.add_log_objective(sv.Affine({"x": np.array([1.0])}))
    p.add_le(sv.Affine({"x": np.array([1.0])}), 5.0)
    vals, rep = sv.solve(p)
    assert rep.objective == pytest.approx(math.log(5), abs=1e-6 * (1 + math.log(5)))
    assert vals["x"][0] == pytest.approx(5.0, abs=1e-5)


def test_trust_region_step():
    c = np.array([3.0, -4.0])
    q0 = np.array([1.0, 2.0])
    p = sv.ConvexProblem()
    p.add_vector("q", 2)
    p.add_linear_objective(sv.Affine({"q": c}))
    p.add_norm("q", np.eye(2), -q0, 2.0)
    vals, rep = sv.solve(p)
    expect = q0 + 2.0 * c / np.linalg.norm(c)
    assert np.allclose(vals["q"], expect, atol=1e-5)
    assert rep.objective == pytest.approx(c @ expect, abs=1e-6 * (1 + abs(c @ expect)))


def test_phase1_feasible_and_infeasible():
    p = sv.ConvexProblem()
    p.add_vector("x", 1)
    p.add_ge(sv.Affine({"x": np.array([1.0])}), 1.0)
    p.add_le(sv.Affine({"x": np.array([1.0])}), 2.0)
    vals, rep = sv.phase1_feasible_point(p)
    assert 1.0 < vals["x"][0] < 2.0
    q = sv.ConvexProblem()
    q.add_vector("x", 1)
    q.add_ge(sv.Affine({"x": np.array([1.0])}), 2.0)
    q.add_le(sv.Affine({"x": np.array([1.0])}), 1.0)
    vals, rep = sv.phase1_feasible_point(q)
    assert vals is None and rep.status == sv.INFEASIBLE


def test_fp4_zero_threshold_is_feasible():
    sc = make_scenario(gamma=0.0)
    R = fp4_covariance((0, 0), sc)
    assert np.allclose(R, np.eye(4) * 0.5 / 4)


def test_determinism(rng):
    B = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    C = B + B.conj().T
    r1 = sv.solve(max_eig_problem(C))[1]
    r2 = sv.solve(max_eig_problem(C))[1]
    assert r1.status == r2.status
    assert r1.objective == r2.objective


def test_barrier_trace_monotone(rng):
    B = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    rep = sv.solve(max_eig_problem(B + B.conj().T))[1]
    obj = [t for t in rep.trace]
    obj = [o if not isinstance(o, (tuple, list)) else o[1] for o in obj]
    assert all(b >= a - 1e-9 for a, b in zip(obj, obj[1:]))


def test_rejects_bad_inputs():
    p = sv.ConvexProblem()
    p.add_vector("x", 1)
    with pytest.raises(ValueError):
        p.add_vector("x", 2)
    with pytest.raises(ValueError):
        p.add_log_objective(sv.Affine({"x": np.array([1.0])}), -1.0)
    with pytest.raises(ValueError):
        sv.solve(p, tol=0)


def test_dump_problem():
    text = sv.dump_problem(max_eig_problem(np.eye(2, dtype=complex)))
    assert "X" in text
