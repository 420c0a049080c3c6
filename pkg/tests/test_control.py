import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from jbrl.control import (ControllerGains, ControllerState, LoopParams, PlantParams,
                          PlantState, ReferenceSample, SimulationFault, SineSum, TanhTerm,
                          adaptive_rates, control_law, plant_step, regulate, run_loop,
                          track_trajectory, tracking_transform, update_adaptive)
from jbrl.jbtg import PAPER_LIMITS, plan_step, reaching_profile

G = ControllerGains()
H = 1 / 2000


def test_tracking_transform_examples():
    z = tracking_transform(PlantState(0.3, 0.1), ReferenceSample(0.3, 0.1), G, ControllerState())
    assert (z.e1, z.e2, z.z1, z.z2, z.u_v) == (0.0, 0.0, 0.0, 0.0, 0.0)
    g = ControllerGains(k1=2, k2=1)
    z = tracking_transform(PlantState(0.1, 0.0), ReferenceSample(0.0, 0.0), g, ControllerState(0.5, 0))
    assert z.u_v == pytest.approx(-0.125)
    assert z.z2 == pytest.approx(0.125)
    z = tracking_transform(PlantState(0.1, 0.0), ReferenceSample(0.0, 0.0), g, ControllerState())
    assert z.u_v == pytest.approx(-g.k1 / 2 * 0.1)


def test_control_law_examples():
    assert control_law(0.0, 0.0, G, ControllerState()) == 0.0
    g = ControllerGains(k5=4, k6=2)
    assert control_law(0.05, -0.1, g, ControllerState(0, 1.0)) == pytest.approx(0.25)
    u1 = control_law(0.05, -0.1, g, ControllerState(0, 1.0))
    assert control_law(0.1, -0.2, g, ControllerState(0, 1.0)) == pytest.approx(2 * u1)


def test_adaptive_rate_example():
    g = ControllerGains(k2=1, k3=1, k4=1)
    r1, _ = adaptive_rates(ControllerState(0.2, 0.0), 0.3, 0.0, g)
    assert r1 == pytest.approx(-0.155)


def test_adaptive_pure_decay():
    c = update_adaptive(ControllerState(1.0, 2.0), 0.0, 0.0, G, 0.01)
    assert c.phi1_hat == pytest.approx(math.exp(-G.k3 * G.k4 * 0.01), rel=1e-14)
    assert c.phi2_hat == pytest.approx(2 * math.exp(-G.k7 * G.k8 * 0.01), rel=1e-14)


def test_adaptive_stays_nonnegative():
    rng = np.random.default_rng(0)
    c = ControllerState()
    for z1, z2 in rng.normal(size=(1000, 2)):
        c = update_adaptive(c, z1, z2, G, H)
        assert c.phi1_hat >= 0 and c.phi2_hat >= 0
    with pytest.raises(ValueError):
        update_adaptive(c, 0, 0, G, 0.0)


def test_adaptive_matches_ode_for_held_error():
    g = ControllerGains(k2=3, k3=2, k4=0.5)
    c = update_adaptive(ControllerState(0.1, 0.0), 0.2, 0.0, g, 0.3)
    sol = solve_ivp(lambda t, y: [-g.k3 * g.k4 * y[0] + 0.5 * g.k2 * g.k3 * 0.04], (0, 0.3),
                    [0.1], rtol=1e-12, atol=1e-14)
    assert c.phi1_hat == pytest.approx(sol.y[0, -1], rel=1e-9)


def test_plant_ballistic_and_constant_input():
    s = plant_step(PlantState(0.0, 1.0), 0.0, PlantParams(), 0.1)
    assert (s.chi1, s.chi2) == pytest.approx((0.1, 1.0), abs=1e-15)
    s = plant_step(PlantState(0.0, 0.0), 1.0, PlantParams(), 0.1)
    assert (s.chi1, s.chi2) == pytest.approx((0.005, 0.1), abs=1e-15)


def _open_loop(params, h, T=1.0, u=0.3):
    s = PlantState(0.1, 0.0)
    for k in range(int(round(T / h))):
        s = plant_step(s, u, params, h, t=k * h)
    return s


def test_plant_with_sine_disturbance_matches_fine_oracle():
    params = PlantParams(d2=SineSum(0.5, seed=1, n_terms=1, f_lo=1.0, f_hi=1.0))
    coarse = _open_loop(params, 1e-3)
    fine = _open_loop(params, 1e-4)
    assert coarse.chi1 == pytest.approx(fine.chi1, abs=1e-8)
    assert coarse.chi2 == pytest.approx(fine.chi2, abs=1e-8)
    # and against an adaptive high-accuracy integrator
    amps, om, ph = params.d2.terms
    sol = solve_ivp(lambda t, y: [y[1], 0.3 + amps[0] * math.sin(om[0] * t + ph[0])],
                    (0, 1.0), [0.1, 0.0], rtol=1e-12, atol=1e-14)
    assert coarse.chi1 == pytest.approx(sol.y[0, -1], abs=1e-8)


def test_plant_halving_step_converges():
    params = PlantParams.disturbed(seed=3)
    a = _open_loop(params, 1e-3)
    b = _open_loop(params, 5e-4)
    assert abs(a.chi1 - b.chi1) < 1e-8 and abs(a.chi2 - b.chi2) < 1e-8


def test_plant_rejects_bad_step():
    with pytest.raises(ValueError):
        plant_step(PlantState(0, 0), 0, PlantParams(), 0.0)
    with pytest.raises(SimulationFault):
        PlantState(float("nan"), 0.0)


def test_disturbance_generators_bounded():
    s = SineSum(0.7, seed=5)
    t = np.linspace(0, 100, 20001)
    assert max(abs(s(x)) for x in t) <= 0.7
    assert abs(TanhTerm(0.2, 50.0)(1e3)) <= 0.2
    assert SineSum(0.7, seed=5).terms[1] == pytest.approx(s.terms[1])
    p = PlantParams.disturbed(2)
    assert PlantParams.from_dict(p.to_dict()) == p
    with pytest.raises(ValueError):
        PlantParams(A=0.0)
    with pytest.raises(ValueError):
        ControllerGains(k3=0.0)


def test_compiled_loop_matches_scalar_reference():
    params = PlantParams.disturbed(seed=1)
    g = ControllerGains(k1=200, k5=200)
    rng = np.random.default_rng(1)
    m = 400
    xr = 0.3 + 0.01 * np.sin(np.arange(m) * H * 7)
    xrd = 0.07 * np.cos(np.arange(m) * H * 7)
    s, c = PlantState(0.31, 0.0), ControllerState(0.01, 0.02)
    for k in range(m):
        z = tracking_transform(s, ReferenceSample(xr[k], xrd[k]), g, c)
        u = control_law(z.z1, z.z2, g, c)
        c = update_adaptive(c, z.z1, z.z2, g, H)
        s = plant_step(s, u, params, H, t=0.2 + k * H)
    chi = np.array([[0.31, 0.0]])
    phi = np.array([[0.01, 0.02]])
    run_loop(chi, phi, xr[None], xrd[None], 0.2, H, LoopParams.build([g], [params]))
    assert chi[0] == pytest.approx([s.chi1, s.chi2], abs=1e-12)
    assert phi[0] == pytest.approx([c.phi1_hat, c.phi2_hat], abs=1e-12)
    del rng


def _sampled_loop(g, h=H):
    # exact zero-order-hold discretisation of the double integrator, adaptive gains at 0
    Ad = np.array([[1.0, h], [0.0, 1.0]])
    Bd = np.array([[h * h / 2], [h]])
    K = np.array([[1 + g.k1 * g.k5 / 4, g.k5 / 2]])
    return Ad - Bd @ K


def test_nominal_poles_stable():
    assert np.all(G.nominal_poles().real < 0)
    assert np.abs(np.linalg.eigvals(_sampled_loop(G))).max() < 1
    # the compiled loop follows the discrete closed loop exactly
    for g in (ControllerGains(k2=1e-12, k6=1e-12),
              ControllerGains(k1=1000, k2=1e-12, k5=1000, k6=1e-12)):
        lg = regulate((1e-3, 0.0), 0.05, g, PlantParams())
        M = _sampled_loop(g)
        x = np.array([1e-3, 0.0])
        ref = []
        for _ in range(len(lg)):
            ref.append(x[0])
            x = M @ x
        assert np.abs(lg.e1 - np.array(ref)).max() < 1e-12


def test_equilibrium_stays_put():
    lg = regulate((0.0, 0.0), 1.0, G, PlantParams(), x_hold=0.25)
    assert np.abs(lg.e1).max() < 1e-12 and np.abs(lg.e2).max() < 1e-12


def test_regulation_decays_exponentially():
    rng = np.random.default_rng(7)
    for e0 in rng.uniform(-0.1, 0.1, size=(100, 2)):
        lg = regulate(tuple(e0), 0.1, G, PlantParams())
        z1 = lg.e1
        z2 = lg.e2 + 0.5 * (G.k1 + G.k2 * lg.phi1) * z1
        norm = np.hypot(z1, z2)
        # past a 5 ms transient the norm falls monotonically until round-off
        keep = norm > 1e-12
        tail = norm[10:][keep[10:]]
        assert np.all(np.diff(tail) < 0)
        slope = np.polyfit(lg.t[keep], np.log(norm[keep]), 1)[0]
        assert slope < 0
        assert lg.phi1.min() >= 0 and lg.phi2.min() >= 0


def test_held_joint_under_disturbance():
    for seed in range(5):
        lg = regulate((0.0, 0.0), 10.0, G, PlantParams.disturbed(seed), x_hold=0.3)
        assert np.abs(lg.e1).max() < 3e-3
        assert lg.phi1.min() >= 0 and lg.phi2.min() >= 0


def test_tracking_reaching_profile_nominal():
    tr = reaching_profile(0.16, 0.48, PAPER_LIMITS, duration=15.0)
    lg = track_trajectory(tr, PlantState(0.16, 0.0), ControllerState(), G, PlantParams())
    assert len(lg) == 30000
    assert np.abs(lg.e1).max() < 1e-4
    assert np.abs(lg.e2).max() < 1e-3


def test_track_rejects_slow_controller():
    tr = plan_step(0.3, 0.0, 0.1, PAPER_LIMITS, 0.05)
    with pytest.raises(ValueError):
        track_trajectory(tr, PlantState(0.3, 0), ControllerState(), G, PlantParams(), rate=1500)


def test_track_faults_on_divergence():
    tr = plan_step(0.3, 0.0, 0.1, PAPER_LIMITS, 0.5)
    wild = ControllerGains(k1=1e9, k5=1e9)
    with pytest.raises(SimulationFault, match="non-finite"):
        track_trajectory(tr, PlantState(0.31, 0), ControllerState(), wild, PlantParams())
