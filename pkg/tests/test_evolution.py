import math

import numpy as np
import pytest

from kpburgers.errors import DivergenceError, ZeroModeViolation
from kpburgers.evolution import (
    E0_functional,
    SimConfig,
    apply_semigroup,
    energy_balance_check,
    l2_monotone_violation,
    make_initial_data,
    nonlinear_term,
    richardson_ratio,
    run_simulation,
    step,
    zero_mode_ratio,
)
from kpburgers.kernels import amplitude_Q, moment_profile
from kpburgers.spectral import Field, make_grid

G2PI = make_grid(32, 32, 2 * math.pi, 2 * math.pi)
BOX = dict(nx=64, ny=64, Lx=16 * math.pi, Ly=16 * math.pi)


def smooth_state(grid=G2PI, amplitude=0.5, seed=3, k0=1.5):
    return make_initial_data("random-zero-mass", grid, amplitude, seed=seed, k0=k0, budget=np.inf)


# --- linear semigroup -----------------------------------------------------------


@pytest.mark.parametrize("which", ["full-S", "dissipative-K"])
def test_semigroup_at_zero_is_identity(which):
    u = smooth_state()
    out = apply_semigroup(u, 0.0, which)
    assert np.max(np.abs(out.physical - u.physical)) < 1e-14


@pytest.mark.parametrize("which", ["full-S", "dissipative-K"])
@pytest.mark.parametrize("eps", [-1, 1])
def test_semigroup_property(which, eps):
    u = smooth_state()
    a = apply_semigroup(apply_semigroup(u, 0.5, which, eps=eps), 0.7, which, eps=eps)
    b = apply_semigroup(u, 1.2, which, eps=eps)
    assert np.max(np.abs(a.physical - b.physical)) <= 1e-11


def test_semigroup_rejects_mass():
    f = Field(G2PI, physical=np.ones((32, 32)))
    with pytest.raises(ZeroModeViolation):
        apply_semigroup(f, 1.0)


def test_semigroup_rejects_negative_time():
    with pytest.raises(ValueError):
        apply_semigroup(smooth_state(), -1.0)


# --- nonlinear term ---------------------------------------------------------------


def test_nonlinear_term_of_zero():
    out = nonlinear_term(Field(G2PI, physical=np.zeros((32, 32))), 2)
    assert np.all(out.physical == 0)


def test_nonlinear_term_single_mode():
    X, _ = G2PI.meshgrid()
    out = nonlinear_term(Field(G2PI, physical=np.sin(X)), 1)
    assert np.max(np.abs(out.physical + 0.5 * np.sin(2 * X))) < 1e-13


@pytest.mark.parametrize("p", [1, 2, 3])
def test_nonlinear_term_integrates_to_zero(p):
    u = Field(G2PI, physical=np.random.default_rng(p).standard_normal((32, 32)))
    out = nonlinear_term(u, p)
    assert abs(out.physical.sum()) * G2PI.dx * G2PI.dy < 1e-12
    assert np.all(out.spectral[0, :] == 0)


def test_nonlinear_term_overflow_guard():
    with pytest.raises(DivergenceError):
        nonlinear_term(Field(G2PI, physical=np.full((32, 32), 1e200)), 3)


# --- stepping ------------------------------------------------------------------------


def test_linear_step_matches_semigroup():
    cfg = SimConfig(nx=32, ny=32, Lx=2 * math.pi, Ly=2 * math.pi, dt=0.05, t_end=0.05,
                    nonlinear=False)
    u = smooth_state()
    a = step(u, 0.05, cfg)
    b = apply_semigroup(u, 0.05)
    assert np.max(np.abs(a.physical - b.physical)) <= 1e-10


def test_linear_step_never_increases_l2():
    cfg = SimConfig(nx=32, ny=32, Lx=2 * math.pi, Ly=2 * math.pi, dt=0.1, t_end=0.1,
                    nonlinear=False)
    u = smooth_state()
    for _ in range(20):
        nxt = step(u, 0.1, cfg)
        assert nxt.l2_norm() <= u.l2_norm() * (1 + 1e-14)
        u = nxt


def test_step_rejects_mass():
    cfg = SimConfig(nx=32, ny=32, Lx=2 * math.pi, Ly=2 * math.pi, dt=0.1, t_end=0.1)
    with pytest.raises(ZeroModeViolation):
        step(Field(G2PI, physical=np.ones((32, 32))), 0.1, cfg)


def test_richardson_ratio_is_fourth_order():
    cfg = SimConfig(p=1, nx=32, ny=32, Lx=2 * math.pi, Ly=2 * math.pi, dt=0.02, t_end=0.2,
                    cfl_safety=1.0)
    u = make_initial_data("random-zero-mass", G2PI, 1.0, seed=3, k0=2.0, budget=np.inf)
    ratio = richardson_ratio(u, 0.02, cfg, horizon=0.2)
    assert abs(ratio - 16) <= 3


# --- initial data -------------------------------------------------------------------


def test_dipole_first_moment():
    g = make_grid(128, 128, 16.0, 16.0)
    c = 0.3
    u = make_initial_data("gaussian-dipole", g, c, budget=np.inf)
    X, _ = g.meshgrid()
    assert np.sum(X * u.physical) * g.dx * g.dy == pytest.approx(c * math.pi / 2, rel=1e-12)


def test_dipole_is_odd_rowwise():
    g = make_grid(64, 32, 16.0, 16.0)
    X, Y = g.meshgrid()
    raw = 0.1 * X * np.exp(-(X**2 + Y**2))
    # index 0 sits on the edge x = -L/2 where the Gaussian has underflowed
    assert np.max(np.abs(raw[1:] + raw[1:][::-1])) < 1e-17
    assert np.max(np.abs(raw.sum(axis=0))) < 1e-15
    u = make_initial_data("gaussian-dipole", g, 0.1)
    assert np.max(np.abs(u.physical - raw)) < 1e-15


def test_random_data_is_reproducible():
    a = make_initial_data("random-zero-mass", G2PI, 0.1, seed=42, budget=np.inf)
    b = make_initial_data("random-zero-mass", G2PI, 0.1, seed=42, budget=np.inf)
    c = make_initial_data("random-zero-mass", G2PI, 0.1, seed=43, budget=np.inf)
    assert np.array_equal(a.physical, b.physical)
    assert not np.array_equal(a.physical, c.physical)
    assert a.linf_norm() == pytest.approx(0.1)


def test_budget_rejects_large_data():
    g = make_grid(64, 64, 16.0, 16.0)
    with pytest.raises(ValueError, match="budget"):
        make_initial_data("gaussian-dipole", g, 10.0, budget=1.0)


def test_unknown_kind():
    with pytest.raises(ValueError):
        make_initial_data("plane-wave", G2PI)


def test_E0_is_positive_and_scales():
    g = make_grid(64, 64, 16.0, 16.0)
    a = E0_functional(make_initial_data("gaussian-dipole", g, 0.1))
    b = E0_functional(make_initial_data("gaussian-dipole", g, 0.2))
    assert 0 < a < b


# --- config ---------------------------------------------------------------------------


@pytest.mark.parametrize("kw", [dict(nu=0.0), dict(nu=-1.0), dict(eps=0), dict(dt=0.0),
                                dict(p=0), dict(cfl_safety=1.5), dict(t_end=-1.0),
                                dict(t_end=4.0, snapshot_times=(2.0, 1.0)),
                                dict(t_end=4.0, snapshot_times=(8.0,)),
                                dict(init_kind="square"), dict(smallness_budget=0.0)])
def test_config_rejects_bad_values(kw):
    with pytest.raises(ValueError):
        SimConfig(**kw)


# --- runs -------------------------------------------------------------------------------


def test_zero_data_stays_zero():
    cfg = SimConfig(p=2, t_end=1.0, dt=0.1, **BOX)
    r = run_simulation(cfg, Field(cfg.grid, physical=np.zeros((64, 64))))
    s = r.series
    for name in ("linf_norm", "l2_norm", "l2_ux", "B_of_u", "H_of_t", "N0_partial",
                 "balance_residual", "zero_mode_max"):
        assert np.all(getattr(s, name) == 0), name
    assert np.all(r.final.physical == 0)


def test_linear_run_balance_and_constant_N0():
    cfg = SimConfig(p=2, t_end=8.0, dt=0.05, nonlinear=False, **BOX)
    u0 = make_initial_data("gaussian-dipole", cfg.grid, 0.1)
    s = run_simulation(cfg, u0).series
    assert energy_balance_check(s) <= 1e-8
    m1 = -np.sum(cfg.grid.x[:, None] * u0.physical) * cfg.grid.dx * cfg.grid.dy
    assert np.max(np.abs(s.N0_partial - m1)) <= 1e-8 * abs(m1)
    # the Nyquist-free state drops a sliver of the Gaussian at dx = pi/4
    assert s.N0_partial[0] == pytest.approx(-0.1 * math.pi / 2, rel=1e-4)


def test_balance_residual_is_fourth_order_in_dt():
    res = []
    for dt in (0.02, 0.01, 0.005):
        cfg = SimConfig(p=2, nx=32, ny=32, Lx=2 * math.pi, Ly=2 * math.pi, dt=dt, t_end=1.0)
        s = run_simulation(cfg, smooth_state()).series
        res.append(energy_balance_check(s))
    ratios = [res[0] / res[1], res[1] / res[2]]
    assert all(abs(r - 16) <= 3 for r in ratios), ratios


def test_nonlinear_run_invariants():
    cfg = SimConfig(p=2, t_end=8.0, dt=0.05, **BOX)
    u0 = make_initial_data("gaussian-dipole", cfg.grid, 0.1)
    r = run_simulation(cfg, u0)
    s = r.series
    assert energy_balance_check(s) <= 1e-6
    assert l2_monotone_violation(s) <= 1e-8
    assert zero_mode_ratio(s) <= 1e-12
    assert np.all(np.diff(s.H_of_t) >= 0)
    assert np.all(np.isfinite(s.N0_partial))
    assert len(s) == 161 and s.t[-1] == pytest.approx(8.0)


def test_N0_equals_integral_of_Q():
    cfg = SimConfig(p=2, t_end=4.0, dt=0.05, **BOX)
    u0 = make_initial_data("gaussian-dipole", cfg.grid, 0.2)
    s = run_simulation(cfg, u0).series
    Q = amplitude_Q(moment_profile(u0, 1), s.U_profile)
    assert np.sum(Q.values) * cfg.grid.dy == pytest.approx(s.N0_partial[-1], rel=1e-12)


def test_odd_power_makes_N0_more_negative():
    cfg = SimConfig(p=1, t_end=8.0, dt=0.05, **BOX)
    u0 = make_initial_data("gaussian-dipole", cfg.grid, 0.5, budget=np.inf)
    s = run_simulation(cfg, u0).series
    assert s.N0_partial[-1] < s.N0_partial[0] < 0


def test_snapshots_land_on_requested_times():
    cfg = SimConfig(p=2, t_end=2.0, dt=0.1, snapshot_times=(0.0, 0.5, 2.0), **BOX)
    u0 = make_initial_data("gaussian-dipole", cfg.grid, 0.1)
    r = run_simulation(cfg, u0)
    assert sorted(r.snapshots) == [0.0, 0.5, 2.0]
    assert np.array_equal(r.snapshots[2.0].physical, r.final.physical)


def test_step_limit_violation_raises():
    cfg = SimConfig(p=2, t_end=1.0, dt=0.5, **BOX)
    u0 = make_initial_data("gaussian-dipole", cfg.grid, 1.0, budget=np.inf)
    with pytest.raises(DivergenceError) as exc:
        run_simulation(cfg, u0)
    assert exc.value.last_valid_time == 0.0


def test_run_rejects_wrong_grid():
    cfg = SimConfig(p=2, t_end=1.0, dt=0.1, **BOX)
    with pytest.raises(ValueError):
        run_simulation(cfg, smooth_state())


def test_sponge_energy_is_booked():
    cfg = SimConfig(p=2, t_end=16.0, dt=0.05, sponge_strength=2.0, sponge_width=8.0, **BOX)
    u0 = make_initial_data("gaussian-dipole", cfg.grid, 0.1)
    s = run_simulation(cfg, u0).series
    assert s.sponge_loss[-1] > 0
    assert np.all(np.diff(s.sponge_loss) >= 0)
    assert energy_balance_check(s) <= 1e-6
