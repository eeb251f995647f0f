import math

import numpy as np
import pytest

from uav_isac.channel import rates_from_channels, user_channels
from uav_isac.static_design import (DegenerateDirectionError, LOG2E, is_valid_solution,
                                    rank_one_reconstruct, sca_bound, sca_coefficients,
                                    sensing_violation, solve_fixed_location, solve_p1, solve_p9,
                                    solve_sdr_subproblem, solve_sensing_max_min)
from conftest import make_scenario, random_hermitian

THREE = ((300.0, 300.0), (420.0, 250.0), (200.0, 380.0))


def mrt_rate(q, u, sc):
    d2 = sc.uav.altitude ** 2 + np.sum((np.asarray(q) - np.asarray(u)) ** 2)
    return math.log2(1 + sc.uav.max_power * sc.uav.num_antennas * sc.uav.channel_gain_ref
                     / (d2 * sc.users[0].noise_power))


def test_sca_coefficients_at_zero(rng):
    sc = make_scenario(users=THREE)
    q = (350.0, 320.0)
    Hc = user_channels(q, sc)
    c = sca_coefficients(np.zeros((3, 4, 4), complex), np.zeros((4, 4), complex), q, sc)
    assert np.allclose(c.a, math.log2(1e-14))
    for k in range(3):
        assert np.allclose(c.B[k], LOG2E * np.outer(Hc[k], Hc[k].conj()) / 1e-14)


def _random_local(rng, K, M, scale=1e-2):
    W = np.stack([random_hermitian(rng, M, psd=True, rank=1) * scale for _ in range(K)])
    R = random_hermitian(rng, M, psd=True) * scale
    return W, R


def test_sca_bound_tight_and_global(rng):
    sc = make_scenario(users=THREE)
    q = (350.0, 320.0)
    Hc = user_channels(q, sc)
    Wl, Rl = _random_local(rng, 3, 4)
    c = sca_coefficients(Wl, Rl, q, sc)
    at = sca_bound(Wl, Rl, c, Wl, Rl, q, sc)
    # the true rate written with covariances
    true = []
    for k, h in enumerate(Hc):
        G = Wl.sum(0) + Rl
        tot = np.vdot(h, G @ h).real + 1e-14
        true.append(math.log2(tot) - math.log2(tot - np.vdot(h, Wl[k] @ h).real))
    assert np.allclose(at, true, rtol=1e-12)
    for _ in range(1000):
        W, R = _random_local(rng, 3, 4, scale=10 ** rng.uniform(-4, 0))
        b = sca_bound(W, R, c, Wl, Rl, q, sc)
        G = W.sum(0) + R
        for k, h in enumerate(Hc):
            tot = np.vdot(h, G @ h).real + 1e-14
            r = math.log2(tot) - math.log2(tot - np.vdot(h, W[k] @ h).real)
            assert b[k] <= r + 1e-9


def test_sdr_single_user_full_power():
    sc = make_scenario(users=((300.0, 300.0),))
    q = (330.0, 290.0)
    Hc = user_channels(q, sc)
    c = sca_coefficients(np.zeros((1, 4, 4), complex), np.zeros((4, 4), complex), q, sc)
    W, R, _, _ = solve_sdr_subproblem(c, q, sc)
    h = Hc[0]
    assert np.vdot(h, W[0] @ h).real == pytest.approx(0.5 * np.vdot(h, h).real, rel=1e-5)


def test_sdr_no_sensing_power_without_threshold(rng):
    sc = make_scenario(users=THREE)
    q = (350.0, 320.0)
    Wl, Rl = _random_local(rng, 3, 4)
    W, R, _, _ = solve_sdr_subproblem(sca_coefficients(Wl, Rl, q, sc), q, sc)
    assert np.real(np.trace(R)) <= 1e-6 * 0.5


def test_zero_power():
    sc = make_scenario(users=THREE).with_max_power(0.0)
    sol = solve_fixed_location((350, 320), sc)
    assert sol.objective == 0.0
    assert not sol.beams.info_beams.any()
    assert solve_fixed_location((350, 320), sc.with_gamma(1e-9)).status != "optimal"


def test_rank_one_idempotent(rng):
    sc = make_scenario(users=THREE)
    q = (350.0, 320.0)
    w = (rng.normal(size=(3, 4)) + 1j * rng.normal(size=(3, 4))) * 0.1
    W = w[:, :, None] * w[:, None, :].conj()
    b = rank_one_reconstruct(W, np.zeros((4, 4), complex), q, sc)
    assert np.allclose(b.info_covariances, W, atol=1e-14)


def test_rank_one_preserves_everything(rng):
    sc = make_scenario(users=THREE)
    q = (350.0, 320.0)
    Hc = user_channels(q, sc)
    W = np.stack([random_hermitian(rng, 4, psd=True, rank=3) * 1e-2 for _ in range(3)])
    R = random_hermitian(rng, 4, psd=True) * 1e-2
    b = rank_one_reconstruct(W, R, q, sc)
    for k, h in enumerate(Hc):
        wk = b.info_beams[k]
        assert abs(np.vdot(h, wk)) ** 2 == pytest.approx(np.vdot(h, W[k] @ h).real, rel=1e-10)
    assert np.array_equal(b.total_covariance, b.info_beams.T @ b.info_beams.conj() + b.sensing_cov)
    assert np.allclose(b.total_covariance, W.sum(0) + R, rtol=0, atol=1e-15)
    assert np.linalg.eigvalsh(b.sensing_cov)[0] >= -1e-8 * np.trace(b.sensing_cov).real


def test_rank_one_degenerate_direction():
    sc = make_scenario(users=((300.0, 300.0),))
    q = (350.0, 320.0)
    h = user_channels(q, sc)[0]
    v = np.array([1, 0, 0, 0], complex)
    v = v - h * np.vdot(h, v) / np.vdot(h, h)
    W = np.outer(v, v.conj())[None]
    with pytest.raises(DegenerateDirectionError):
        rank_one_reconstruct(W, np.zeros((4, 4), complex), q, sc)
    # negligible allocations are simply dropped
    b = rank_one_reconstruct(W * 1e-14, np.zeros((4, 4), complex), q, sc)
    assert not b.info_beams.any()


@pytest.mark.parametrize("q", [(300.0, 300.0), (420.0, 380.0), (150.0, 600.0)])
def test_single_user_closed_form(q):
    sc = make_scenario(users=((300.0, 300.0),), M=4)
    sol = solve_fixed_location(q, sc)
    assert sol.objective == pytest.approx(mrt_rate(q, (300, 300), sc), abs=1e-3)


def test_fixed_location_monotone_and_valid():
    sc = make_scenario(users=THREE, points=((500, 500), (540, 500)), gamma=2e-9)
    sol = solve_fixed_location((380.0, 360.0), sc)
    assert sol.feasible
    tr = sol.objective_trace
    assert all(b >= a - 1e-6 for a, b in zip(tr, tr[1:]))
    assert is_valid_solution(sol, sc)
    assert sensing_violation(sol.location, sol.beams, sc) <= 1e-7
    assert sol.bound_trace[-1] <= sol.objective + 1e-4
    rep = rates_from_channels(user_channels(sol.location, sc), sol.beams, sc.noise_powers,
                              sc.weights)
    assert rep.weighted_sum == pytest.approx(sol.objective, abs=1e-12)


def test_fixed_location_infeasible_above_breakpoint():
    sc = make_scenario(points=((500, 500),), gamma=0.5 * 4 / 1e4 * 1.01)
    assert not solve_fixed_location((500, 500), sc).feasible


def test_colocated_users_symmetric():
    sc = make_scenario(users=((300.0, 300.0), (300.0, 300.0)))
    sol = solve_fixed_location((320.0, 310.0), sc)
    h = user_channels((320.0, 310.0), sc)[0]
    g = np.abs(sol.beams.info_beams.conj() @ h) ** 2
    r = sol.rates.per_user_rate
    # either symmetric beams or the regression value of the time-sharing-like split
    assert abs(g[0] - g[1]) <= 1e-4 * g.max() or sol.objective == pytest.approx(r.sum())


def test_p1_single_user_nadir():
    sc = make_scenario(users=((300.0, 300.0),), area=((200.0, 400.0), (200.0, 400.0)))
    sol = solve_p1(sc, 50.0)
    assert np.linalg.norm(np.asarray(sol.location) - (300, 300)) <= 50.0


def test_p1_tie_break_and_infeasible():
    sc = make_scenario(users=((200.0, 300.0), (400.0, 300.0)), area=((250.0, 350.0), (300.0, 320.0)))
    sol = solve_p1(sc, 50.0)
    vals = sol.grid_values
    assert vals[(250.0, 300.0)] == pytest.approx(vals[(350.0, 300.0)], rel=1e-5)
    assert sol.location in [(250.0, 300.0), (300.0, 300.0)]
    bad = solve_p1(sc.with_gamma(1e6), 50.0)
    assert not bad.feasible


def test_sensing_max_min_single_point():
    sc = make_scenario(points=((500, 500),), M=4)
    t, R = solve_sensing_max_min((500, 500), sc)
    assert t == pytest.approx(0.5 * 4 / 100.0 ** 2, rel=1e-6)
    assert np.linalg.eigvalsh(R)[-1] == pytest.approx(np.trace(R).real, rel=1e-4)


def test_p9_center_of_square():
    pts = [(x, y) for x in (450, 500, 550) for y in (450, 500, 550)]
    sc = make_scenario(points=pts, M=4, area=((400.0, 600.0), (400.0, 600.0)))
    sol = solve_p9(sc, 50.0)
    assert sol.location == (500.0, 500.0)
    assert not sol.beams.info_beams.any()
