import math

import numpy as np
import pytest

from uav_isac import mobile_design as md
from uav_isac.channel import BeamformerSet, beampattern_gain, sinr_and_rates
from uav_isac.scenario import MissionPlan, Trajectory
from uav_isac.static_design import solve_sensing_max_min
from conftest import make_mission, make_scenario, random_hermitian


def random_beams(rng, K, M, scale=0.05):
    w = (rng.normal(size=(K, M)) + 1j * rng.normal(size=(K, M))) * scale
    return BeamformerSet(w, random_hermitian(rng, M, psd=True) * scale ** 2)


def fd(fun, q, h=0.01):
    q = np.asarray(q, float)
    out = []
    for k in range(2):
        e = np.zeros(2)
        e[k] = h
        out.append((fun(q + e) - fun(q - e)) / (2 * h))
    return np.array(out).T


@pytest.mark.parametrize("M", [2, 8, 12])
def test_rate_gradient_finite_difference(rng, M):
    for _ in range(10):
        users = rng.uniform(0, 1000, size=(3, 2))
        sc = make_scenario(users=users, M=M)
        q = rng.uniform(0, 1000, size=2)
        b = random_beams(rng, 3, M)
        c, d, e, f = md.linearize_rate(q, b, sc)
        assert np.allclose(c, sinr_and_rates(q, b, sc).per_user_rate, rtol=1e-12, atol=1e-13)
        num = fd(lambda x: sinr_and_rates(x, b, sc).per_user_rate, q)
        scale = np.abs(num).max()
        assert np.abs(d - num).max() <= 1e-4 * scale


def test_rate_gradient_isotropic_is_path_loss_only(rng):
    sc = make_scenario(users=((100.0, 200.0), (600.0, 300.0)), M=4)
    b = BeamformerSet(np.zeros((2, 4)), np.diag([0.01, 0.02, 0.03, 0.04]))
    q = np.array([300.0, 250.0])
    # sensing power only: no rate, so no gradient
    c, d, e, f = md.linearize_rate(q, b, sc)
    assert np.allclose(c, 0.0)
    assert np.allclose(d, 0.0, atol=1e-15)
    # single user with a diagonal own covariance: closed form in the distance only
    sc1 = make_scenario(users=((100.0, 200.0),), M=4)
    w = BeamformerSet(np.array([[0.3, 0, 0, 0]]), np.zeros((4, 4)))
    c, d, e, f = md.linearize_rate(q, w, sc1)
    u = np.array([100.0, 200.0])
    D = 1e4 + np.sum((q - u) ** 2)
    s = 0.09 * 1e-6 / 1e-14
    expect = -math.log2(math.e) * s / (D * (D + s)) * 2 * (q - u)
    assert np.allclose(d[0], expect, rtol=1e-9)


@pytest.mark.parametrize("M", [2, 8, 12])
def test_sensing_gradient_finite_difference(rng, M):
    sc = make_scenario(M=M)
    for _ in range(10):
        q = rng.uniform(0, 1000, size=2)
        m = rng.uniform(0, 1000, size=2)
        b = random_beams(rng, 1, M)
        v, g = md.linearize_sensing(q, b, m, sc)
        assert v == pytest.approx(beampattern_gain(q, m, b, sc.uav), rel=1e-10)
        num = fd(lambda x: beampattern_gain(x, m, b, sc.uav), q)
        assert np.abs(g - num).max() <= 1e-4 * np.abs(num).max()


def test_sensing_diagonal_covariance():
    sc = make_scenario(M=4)
    b = BeamformerSet(np.zeros((1, 4)), np.diag([1.0, 2.0, 3.0, 4.0]))
    v, g = md.linearize_sensing((100, 100), b, (300, 400), sc)
    assert v == pytest.approx(10.0)
    assert np.allclose(g, 0.0)


def test_p6_identical_slots_and_mrt():
    sc = make_scenario(users=((300.0, 300.0),), M=4,
                       mission=make_mission(N=3, start=(300, 300), end=(300, 300)))
    traj = Trajectory([[300, 300], [300, 300], [300, 300]])
    sols = md.solve_p6(traj, sc)
    assert all(np.array_equal(s.beams.info_beams, sols[0].beams.info_beams) for s in sols)
    traj2 = Trajectory([[300, 300], [350, 300], [420, 330]])
    for q, s in zip(traj2.positions, md.solve_p6(traj2, sc)):
        d2 = 1e4 + np.sum((q - 300.0) ** 2)
        assert s.objective == pytest.approx(math.log2(1 + 0.5 * 4 * 1e-6 / (d2 * 1e-14)), abs=1e-3)


def test_p6_infeasible_slot_named():
    sc = make_scenario(points=((500, 500),), gamma=1.5e-4, M=4)
    traj = Trajectory([[500, 500], [500, 500], [900, 900]])
    with pytest.raises(md.SlotInfeasibleError, match="slot 3"):
        md.solve_p6(traj, sc)


def _coeffs(traj, beams, sc):
    return md.linearize_trajectory(traj, beams, sc)


def test_p8l_degenerate_cases(rng):
    sc = make_scenario(users=((300.0, 300.0),), M=4,
                       mission=make_mission(N=4, start=(0, 0), end=(0, 0), speed=20.0))
    traj = Trajectory([[0, 0], [10, 0], [10, 10], [0, 0]])
    beams = [random_beams(rng, 1, 4) for _ in range(4)]
    co = _coeffs(traj, beams, sc)
    assert md.solve_p8l(traj, co, 0.0, sc) is traj
    zero = md.LinearizationCoefficients(co.c, np.zeros_like(co.d_grad), co.h_val, co.i_grad,
                                        co.e, co.f)
    out = md.solve_p8l(traj, zero, 50.0, sc)
    assert np.allclose(out.positions, traj.positions)


def test_p8l_moves_towards_user():
    u = np.array([60.0, 0.0])
    sc = make_scenario(users=(tuple(u),), M=4,
                       mission=make_mission(N=5, start=(0, 0), end=(0, 0), speed=10.0, dt=1.0))
    traj = Trajectory([[0, 0]] * 5)
    beams = [md.solve_p6(traj, sc)[0].beams] * 5
    out = md.solve_p8l(traj, _coeffs(traj, beams, sc), 1e6, sc)
    p = out.positions
    assert np.allclose(p[[0, -1]], 0.0)
    # every free slot moves along +x, as far as the speed limit allows
    assert np.all(p[1:-1, 0] > 0)
    assert np.allclose(p[1:-1, 1], 0.0, atol=1e-3)
    assert p[1, 0] == pytest.approx(10.0, abs=1e-3)
    assert p[2, 0] <= 20.0 + 1e-6
    assert np.all(np.linalg.norm(np.diff(p, axis=0), axis=1) <= 10.0 + 1e-6)


def test_optimize_trajectory_improves_single_user():
    sc = make_scenario(users=((200.0, 40.0),), M=2,
                       mission=make_mission(N=4, start=(0, 0), end=(300, 0), speed=30.0))
    traj = Trajectory([[0, 0], [100, 0], [200, 0], [300, 0]])
    beams = [s.beams for s in md.solve_p6(traj, sc)]
    obj0 = float(np.sum(md.slot_rates(traj, beams, sc) @ sc.weights))
    out, obj, steps = md.optimize_trajectory(traj, beams, md.TrustRegionConfig(), sc)
    assert steps >= 1 and obj > obj0
    assert out.satisfies(sc.mission, atol=1e-6)


def test_all_rejected_radius_decay(monkeypatch, rng):
    sc = make_scenario(users=((200.0, 40.0),), M=2,
                       mission=make_mission(N=3, start=(0, 0), end=(200, 0), speed=30.0))
    traj = Trajectory([[0, 0], [100, 0], [200, 0]])
    beams = [random_beams(rng, 1, 2)] * 3
    calls = []
    monkeypatch.setattr(md, "solve_p8l", lambda *a, **k: calls.append(1))
    trc = md.TrustRegionConfig(initial_radius=150.0, radius_floor=0.1)
    out, _, steps = md.optimize_trajectory(traj, beams, trc, sc)
    assert out is traj and steps == 0
    assert len(calls) == math.ceil(math.log2(150.0 / 0.1))


def test_trust_region_config_validation():
    with pytest.raises(ValueError):
        md.TrustRegionConfig(initial_radius=-1.0)
    with pytest.raises(ValueError):
        md.TrustRegionConfig(initial_radius=1.0, radius_floor=2.0)
    m = make_mission(speed=30.0, dt=5.0)
    assert md.TrustRegionConfig().radius0(m) == 150.0


SMALL = dict(users=((150.0, 100.0), (350.0, 120.0)), points=((250.0, 300.0), (270.0, 300.0)),
             M=4, area=((0.0, 400.0), (0.0, 400.0)))


def small_mobile(gamma=2e-9, N=4):
    return make_scenario(gamma=gamma, mission=make_mission(N=N, start=(0, 200), end=(400, 200),
                                                             speed=30.0, dt=5.0), **SMALL)


def test_p2_two_slots_equals_p6():
    sc = small_mobile(N=2)
    sc = sc.with_mission(MissionPlan(2, 5.0, (100, 200), (200, 200), 30.0))
    sol = md.solve_p2(sc, init=Trajectory([[100, 200], [200, 200]]))
    ref = md.solve_p6(sol.trajectory, sc)
    assert sol.avg_weighted_sum_rate == pytest.approx(np.mean([s.objective for s in ref]), abs=1e-5)
    assert np.allclose(sol.trajectory.positions, [[100, 200], [200, 200]])


def test_p2_monotone_and_comm_only_bound():
    sc = small_mobile()
    init = md.sf_trajectory(sc.mission)
    sol = md.solve_p2(sc, md.TrustRegionConfig(max_outer=4), init=init)
    tr = sol.trace
    assert all(b >= a - 1e-6 for a, b in zip(tr, tr[1:]))
    assert len(tr) - 1 <= 4 and tr[-1] > tr[0]
    assert sol.trajectory.satisfies(sc.mission, atol=1e-6)
    assert md.max_sensing_violation(sol.trajectory, sol.beams, sc) <= 1e-7
    assert sol.avg_weighted_sum_rate == pytest.approx(
        md.average_weighted_sum_rate(sol.trajectory, sol.beams, sc), abs=1e-12)
    comm = md.solve_p2(sc.with_gamma(0.0), md.TrustRegionConfig(max_outer=2),
                       init=sol.trajectory, init_beams=sol.beams)
    assert comm.avg_weighted_sum_rate >= sol.avg_weighted_sum_rate - 1e-6


def test_p10_two_slots_and_drift():
    sc = small_mobile(N=2).with_mission(MissionPlan(2, 5.0, (100, 200), (200, 200), 30.0))
    sol = md.solve_p10(sc)
    expect = np.mean([solve_sensing_max_min(q, sc)[0] for q in sol.trajectory.positions])
    assert sol.avg_weighted_sum_rate == pytest.approx(expect, rel=1e-9)
    sc = small_mobile(N=6)
    sf = md.sf_trajectory(sc.mission)
    sol = md.solve_p10(sc)
    centre = sc.sensing.centroid
    d_sf = np.linalg.norm(sf.positions[1:-1] - centre, axis=1).mean()
    d_p10 = np.linalg.norm(sol.trajectory.positions[1:-1] - centre, axis=1).mean()
    assert d_p10 < d_sf
    assert not any(b.info_beams.any() for b in sol.beams)


def test_sf_trajectory():
    m = MissionPlan(5, 1.0, (0, 0), (40, 30), 20.0)
    t = md.sf_trajectory(m)
    assert np.allclose(t.steps, 50.0 / 4)
    same = md.sf_trajectory(MissionPlan(4, 1.0, (5, 5), (5, 5), 1.0))
    assert np.allclose(same.positions, 5.0)
    with pytest.raises(ValueError):
        md.sf_trajectory(MissionPlan(3, 1.0, (0, 0), (100, 0), 10.0))


def test_fhf_trajectory_counts():
    m = MissionPlan(12, 5.0, (0, 500), (1000, 500), 30.0)
    hover = (500.0, 300.0)
    t = md.fhf_trajectory(m, hover)
    legs1 = math.ceil(math.hypot(500, 200) / 150)
    legs2 = math.ceil(math.hypot(500, 200) / 150)
    assert md.fhf_hover_slots(m, hover) == 12 - legs1 - legs2 == 4
    assert t.satisfies(m, atol=1e-9)
    assert np.allclose(t.steps[:legs1 - 1], 150.0)
    with pytest.raises(ValueError):
        md.fhf_trajectory(m, (500.0, -900.0))
