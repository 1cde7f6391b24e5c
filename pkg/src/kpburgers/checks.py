"""Numbered acceptance checks with their pass thresholds.

Each ``check_*`` function measures one criterion and returns a
:class:`CheckResult`.  The thresholds live in :data:`LIMITS` so that the CLI
verdicts and the test-suite read the same numbers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gamma

from .asymptotics import (
    compare_profile,
    duhamel_bound_check,
    fit_decay_rate,
    is_decreasing,
    lower_bound_certificate,
    lower_bound_constant,
    verify_linear_expansion,
)
from .evolution import (
    SimConfig,
    energy_balance_check,
    l2_monotone_violation,
    make_initial_data,
    richardson_ratio,
    zero_mode_ratio,
)
from .kernels import (
    KernelEvaluator,
    free_space_convolve,
    kernel_K,
    kernel_K_spectral,
    kernel_K_sup,
    kernel_S_sup,
    kstar,
    kstar_sup,
    taylor_remainder_bound,
    taylor_remainder_sup,
)
from .spectral import Field, make_grid

LIMITS = {
    "kernel_abs": 1e-6,
    "kernel_rel": 1e-4,
    "origin_abs": 1e-8,
    "kernel_slope_tol": 0.05,
    "kernel_exact_rel": 1e-6,
    "linear_slope_tol": 0.1,
    "balance": 1e-6,
    "zero_mode": 1e-12,
    "l2_increase": 1e-8,
    "decay_slope_tol": 0.15,
    "H_over_E0": 3.0,
    "n0_tail": 0.05,
    "n0_linear_rel": 1e-8,
    "profile_ratio": 0.5,
    "lower_bound": 0.9,
    "duhamel": 1.0,
    "richardson": 16.0,
    "richardson_tol": 3.0,
}

NAMES = {
    1: "kernel cross-validation",
    2: "linear kernel decay",
    3: "Taylor remainder bound",
    4: "linear decay under zero mass",
    5: "L2 balance and zero mass",
    6: "nonlinear decay rate",
    7: "N0 convergence and sign",
    8: "profile convergence",
    9: "lower-bound certificate",
    10: "Duhamel bound",
    11: "scheme order",
}


@dataclass
class CheckResult:
    number: int
    passed: bool
    measured: dict = field(default_factory=dict)
    detail: str = ""

    @property
    def name(self):
        return NAMES[self.number]

    def line(self):
        tag = "PASS" if self.passed else "FAIL"
        return f"{tag} {self.number:>2} {self.name}: {self.detail}"


def _fmt(x):
    return f"{x:.4g}"


# ---------------------------------------------------------------------------
# kernels


def kernel_sample(t, nu):
    """The 21 x 21 comparison lattice, scaled with the self-similar variables."""
    s = math.sqrt(nu * t)
    x = s * np.linspace(-8.0, 8.0, 21)
    y = (nu * t) ** 0.75 * np.linspace(-3.0, 3.0, 21)
    return x, y


def kernel_crossval_samples(nus=(0.5, 1.0, 2.0), epss=(-1, 1), ts=(1.0, 4.0), ls=(0, 1)):
    """Yield ``(nu, eps, t, l, x, y, quad, lt)`` on the comparison lattice."""
    for nu in nus:
        for eps in epss:
            ev = KernelEvaluator(nu, eps)
            for t in ts:
                x, y = kernel_sample(t, nu)
                for l in ls:
                    quad = kernel_K(ev, l, x[:, None], y[None, :], t)
                    lt = np.column_stack([kernel_K_spectral(ev, t, yy, x, l) for yy in y])
                    yield nu, eps, t, l, x, y, quad, lt


def kernel_crossval_table(samples=None):
    """Rows ``(nu, eps, t, l, max |quad - spectral|, worst ratio to the tolerance)``."""
    rows = []
    for nu, eps, t, l, _, _, quad, lt in samples or kernel_crossval_samples():
        diff = np.abs(quad - lt)
        tol = np.maximum(LIMITS["kernel_abs"], LIMITS["kernel_rel"] * np.abs(lt))
        rows.append((nu, eps, t, l, float(diff.max()), float(np.max(diff / tol))))
    return rows


def kernel_point_rows(samples):
    """Long-format rows ``(nu, eps, t, x, y, l, value, method, abs_diff)``."""
    out = []
    for nu, eps, t, l, x, y, quad, lt in samples:
        diff = np.abs(quad - lt)
        for i, xx in enumerate(x):
            for j, yy in enumerate(y):
                out.append((nu, eps, t, xx, yy, l, quad[i, j], "quad", diff[i, j]))
                out.append((nu, eps, t, xx, yy, l, lt[i, j], "spectral", diff[i, j]))
    return out


def origin_values(nus=(0.5, 1.0, 2.0)):
    """``(nu, quantity, computed, closed form)`` for the kernel at the origin."""
    out = []
    k0 = gamma(0.75) * math.cos(math.pi / 4) / (4 * math.pi**1.5)
    out.append((1.0, "K*(0,0)", kstar(KernelEvaluator(1.0, 1), 0, 0.0, 0.0), k0))
    for nu in nus:
        for eps in (-1, 1):
            val = abs(kstar(KernelEvaluator(nu, eps), 1, 0.0, 0.0))
            out.append((nu, f"|dxK*(0,0)| eps={eps:+d}", val, lower_bound_constant(nu)))
    return out


def check_kernel_crossval():
    samples = list(kernel_crossval_samples())
    rows = kernel_crossval_table(samples)
    origin = origin_values()
    worst = max(r[5] for r in rows)
    oerr = max(abs(c - e) for _, _, c, e in origin)
    ok = worst <= 1.0 and oerr <= LIMITS["origin_abs"]
    return CheckResult(
        1, ok, {"worst_ratio": worst, "origin_error": oerr, "rows": rows, "origin": origin,
                "points": kernel_point_rows(samples)},
        f"worst |quad-spectral|/tol = {_fmt(worst)} (limit 1), origin error {_fmt(oerr)} "
        f"(limit {LIMITS['origin_abs']:g})",
    )


def kernel_decay_table(ts=(1, 2, 4, 8, 16, 32, 64), nu=1.0, eps=1):
    """Sup norms of ``d^l S(t)`` and ``d^l K(t)`` and the self-similar prediction."""
    ev = KernelEvaluator(nu, eps)
    rows = []
    for l in (0, 1):
        ks, _ = kstar_sup(ev, l)
        for t in ts:
            rows.append((l, float(t), kernel_S_sup(ev, t, l), kernel_K_sup(ev, l, t),
                         ks * t ** (-1.25 - 0.5 * l)))
    return rows


def check_kernel_decay():
    rows = kernel_decay_table()
    tol = LIMITS["kernel_slope_tol"]
    meas, ok, parts = {}, True, []
    for l in (0, 1):
        sel = [r for r in rows if r[0] == l]
        t = np.array([r[1] for r in sel])
        target = -1.25 - 0.5 * l
        s_slope = fit_decay_rate((t, np.array([r[2] for r in sel])), (1, 64))[0]
        k_slope = fit_decay_rate((t, np.array([r[3] for r in sel])), (1, 64))[0]
        s_late = fit_decay_rate((t, np.array([r[2] for r in sel])), (4, 64))[0]
        exact = max(abs(r[3] / r[4] - 1) for r in sel)
        meas[f"S_slope_l{l}"] = s_slope
        meas[f"S_slope_late_l{l}"] = s_late
        meas[f"K_slope_l{l}"] = k_slope
        meas[f"K_exact_rel_l{l}"] = exact
        ok &= abs(s_slope - target) <= tol and abs(k_slope - target) <= tol
        ok &= exact <= LIMITS["kernel_exact_rel"]
        parts.append(f"l={l}: S {_fmt(s_slope)}, K {_fmt(k_slope)} vs {target:g}+-{tol:g}, "
                     f"K self-similar rel {_fmt(exact)} (S on [4, 64], not gating: {_fmt(s_late)})")
    meas["rows"] = rows
    return CheckResult(2, bool(ok), meas, "; ".join(parts))


def taylor_table(ts=(1, 2, 4, 8), nu=1.0, eps=1):
    """Rows ``(l, m, t, measured, bound)``."""
    ev = KernelEvaluator(nu, eps)
    return [
        (l, m, float(t), taylor_remainder_sup(ev, l, m, t), taylor_remainder_bound(ev, l, m, t))
        for l in (0, 1) for m in (0, 1) for t in ts
    ]


def check_taylor():
    rows = taylor_table()
    worst = max(r[3] / r[4] for r in rows)
    return CheckResult(3, worst <= 1.0, {"worst_ratio": worst, "rows": rows},
                       f"max measured/bound = {_fmt(worst)} (margin {_fmt(1 / worst)}x)")


# ---------------------------------------------------------------------------
# linear solutions


def dipole_source(n=128, L=16.0, amplitude=0.1):
    """Dipole data on a fine box; the whole-plane evaluation needs only its support."""
    return make_initial_data("gaussian-dipole", make_grid(n, n, L, L), amplitude)


def linear_decay_table(u0, ts=(4, 8, 16, 32, 64, 128, 256), nu=1.0, eps=1):
    ev = KernelEvaluator(nu, eps)
    return [
        (float(t), free_space_convolve(
            ev, t, u0, lambda xi, t=t: np.exp(-nu * t * xi**2 + 1j * t * xi**3)).sup())
        for t in ts
    ]


def check_linear_decay(u0=None):
    u0 = u0 if u0 is not None else dipole_source()
    rows = linear_decay_table(u0)
    t = np.array([r[0] for r in rows])
    slope, stderr = fit_decay_rate((t, np.array([r[1] for r in rows])), (4, 256))
    comb = verify_linear_expansion(u0, [8, 16, 32, 64], l_max=0, m_max=0).combination
    scaled = [c.scaled_error for c in comb]
    ok = abs(slope + 1.75) <= LIMITS["linear_slope_tol"] and is_decreasing(scaled)
    return CheckResult(
        4, ok, {"slope": slope, "stderr": stderr, "rows": rows, "combination": scaled},
        f"slope {_fmt(slope)} vs -1.75+-{LIMITS['linear_slope_tol']:g}; scaled profile error "
        + ", ".join(_fmt(s) for s in scaled) + (" decreasing" if is_decreasing(scaled) else " not decreasing"),
    )


def duhamel_cases(n=128, L=16 * math.pi, nt=201):
    """Three regression sources on ``tau in [0, 1]``."""
    g = make_grid(n, n, L, L)
    X, Y = g.meshgrid()
    bump = np.exp(-(X**2 + Y**2))
    taus = np.linspace(0.0, 1.0, nt)
    return {
        "steady-bump": [(t, Field(g, physical=bump)) for t in taus],
        "decaying-dipole": [(t, Field(g, physical=X * bump * np.exp(-t))) for t in taus],
        "growing-wavepacket": [
            (t, Field(g, physical=np.cos(2 * X) * np.exp(-X**2 / 4 - Y**2) * (1 + t))) for t in taus
        ],
    }


def check_duhamel():
    margins = {k: duhamel_bound_check(v) for k, v in duhamel_cases().items()}
    worst = max(margins.values())
    return CheckResult(10, worst <= LIMITS["duhamel"], {"margins": margins},
                       ", ".join(f"{k} {_fmt(v)}" for k, v in margins.items()) + " (limit 1)")


def check_scheme_order(p=1, nu=1.0, eps=1, dt=0.02, horizon=0.2):
    """Refinement ratio on a smooth O(1) state in a small box."""
    cfg = SimConfig(p=p, nu=nu, eps=eps, nx=32, ny=32, Lx=2 * math.pi, Ly=2 * math.pi,
                    dt=dt, t_end=horizon)
    u0 = make_initial_data("random-zero-mass", cfg.grid, 1.0, seed=3, k0=2.0, budget=math.inf)
    ratio = richardson_ratio(u0, dt, cfg, horizon=horizon)
    ok = abs(ratio - LIMITS["richardson"]) <= LIMITS["richardson_tol"]
    return CheckResult(11, ok, {"ratio": ratio},
                       f"ratio {_fmt(ratio)} vs 16+-3 (dt {dt:g}/{dt / 2:g}/{dt / 4:g}, horizon {horizon:g})")


# ---------------------------------------------------------------------------
# nonlinear runs


def check_balance(series):
    resid = energy_balance_check(series)
    mono = l2_monotone_violation(series)
    zm = zero_mode_ratio(series)
    ok = resid <= LIMITS["balance"] and mono <= LIMITS["l2_increase"] and zm <= LIMITS["zero_mode"]
    return CheckResult(5, ok, {"residual": resid, "l2_increase": mono, "zero_mode_ratio": zm},
                       f"residual {_fmt(resid)} (limit 1e-06), largest L2 increase {_fmt(mono)}, "
                       f"zero-mode ratio {_fmt(zm)} (limit 1e-12)")


def check_nonlinear_decay(series, window=None):
    t = np.asarray(series.t)
    window = window or (t[-1] / 4, t[-1])
    slope, stderr = fit_decay_rate((t, np.asarray(series.linf_norm)), window)
    pos = t > 0
    h = float(np.max(t[pos] ** 1.75 * np.asarray(series.linf_norm)[pos]) / series.E0)
    ok = abs(slope + 1.75) <= LIMITS["decay_slope_tol"] and h <= LIMITS["H_over_E0"]
    return CheckResult(6, ok, {"slope": slope, "stderr": stderr, "H_over_E0": h, "window": window},
                       f"slope {_fmt(slope)} on [{window[0]:g}, {window[1]:g}] vs -1.75+-0.15; "
                       f"max t^1.75|u|/E0 {_fmt(h)} (limit 3)")


def n0_tail(series):
    t = np.asarray(series.t)
    n0 = np.asarray(series.N0_partial)
    T = t[-1]
    return float(n0[-1]), float(n0[int(np.argmin(np.abs(t - T / 2)))])


def check_n0(series, cfg, odd_series=None):
    """Cauchy tail, sign for odd ``p`` and the linear identity.

    ``odd_series`` is an optional companion run with odd ``p`` used for the
    sign test when the main run has even ``p``.
    """
    nT, nh = n0_tail(series)
    tail = abs(nT - nh) / abs(nT)
    ok = tail <= LIMITS["n0_tail"]
    parts = [f"N0(T)={nT:.9g}, tail {_fmt(tail)} (limit 0.05)"]
    meas = {"N0": nT, "N0_half": nh, "tail": tail}
    sign_src = series if cfg.p % 2 else odd_series
    if sign_src is not None:
        sv = float(np.asarray(sign_src.N0_partial)[-1])
        meas["odd_p_N0"] = sv
        ok &= sv < 0
        parts.append(f"odd-p N0 {sv:.6g} {'<' if sv < 0 else '>='} 0")
    if not cfg.nonlinear:
        rel = abs(nT - series.M1_integral) / abs(series.M1_integral)
        meas["linear_rel"] = rel
        ok &= rel <= LIMITS["n0_linear_rel"]
        parts.append(f"linear N0 vs int(-x)u0 rel {_fmt(rel)}")
    return CheckResult(7, bool(ok), meas, "; ".join(parts))


def check_profile(snapshots, N0, y_window=5.0, nu=1.0, eps=1):
    rows = compare_profile({t: f for t, f in snapshots.items() if t > 0}, N0, y_window, nu, eps)
    ratio = rows[-1].scaled_error / rows[0].scaled_error
    ok = ratio <= LIMITS["profile_ratio"]
    return CheckResult(8, ok, {"ratio": ratio, "rows": rows},
                       f"t^1.75 sup|u-N0 dxK| {_fmt(rows[0].scaled_error)} at t={rows[0].t:g} -> "
                       f"{_fmt(rows[-1].scaled_error)} at t={rows[-1].t:g}, ratio {_fmt(ratio)} (limit 0.5)")


def check_lower_bound(series, N0, nu=1.0, window=None):
    t = np.asarray(series.t)
    window = window or (t[-1] / 2, t[-1])
    margin = lower_bound_certificate(series, N0, nu, window)
    return CheckResult(9, margin >= LIMITS["lower_bound"], {"margin": margin, "window": window},
                       f"min t^1.75|u| / (C|N0|) on [{window[0]:g}, {window[1]:g}] = {_fmt(margin)} "
                       "(limit 0.9)")


def run_monitors(series):
    """Non-gating invariants: Linf sentinel, late-time L2 decay and boundary energy."""
    t = np.asarray(series.t)
    linf = np.asarray(series.linf_norm)
    late = t >= t[-1] / 2
    q = t * (np.asarray(series.l2_norm) ** 2 + np.asarray(series.l2_uy) ** 2)
    return {
        "linf_growth": float(linf.max() / linf[0]) if linf[0] > 0 else 0.0,
        "late_l2_decreasing": bool(np.all(np.diff(q[late]) <= 0)),
        "boundary_contamination": float(np.max(series.boundary_contamination)),
    }
