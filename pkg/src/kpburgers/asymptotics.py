"""Decay-rate fits, linear expansion checks, profile comparison and certificates."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gamma
from scipy.stats import linregress

from .errors import InsufficientSamples, NonPositiveValue, UndefinedMargin
from .kernels import (
    KernelEvaluator,
    free_space_convolve,
    kernel_K_spectral,
    linear_symbol,
    moment_profile,
    taylor_remainder_bound,
    taylor_remainder_sup,
)
from .spectral import Field, hermitian_part


@dataclass
class AsymptoticsReport:
    """Collected measurements; every stored error is non-negative."""

    fitted_slopes: dict = field(default_factory=dict)
    expansion_errors: list = field(default_factory=list)
    profile_error_series: list = field(default_factory=list)
    lower_bound_margin: float | None = None
    duhamel_margins: list = field(default_factory=list)


def _as_arrays(series):
    if isinstance(series, tuple) and len(series) == 2 and np.ndim(series[0]) == 1:
        t, v = series
    else:
        arr = np.asarray(list(series), dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise ValueError("series must be (t, value) pairs or a (t, values) tuple")
        t, v = arr[:, 0], arr[:, 1]
    return np.asarray(t, dtype=float), np.asarray(v, dtype=float)


def fit_decay_rate(series, window, min_samples=5, min_span=4.0):
    """Least-squares slope of ``log value`` against ``log t`` on a window.

    Parameters
    ----------
    series : iterable of (t, value) or tuple (t_array, value_array)
    window : (t_lo, t_hi)

    Returns
    -------
    slope, stderr : float

    Raises
    ------
    InsufficientSamples
        Fewer than ``min_samples`` points or a span below ``min_span``.
    NonPositiveValue
        A value in the window is not strictly positive.
    """
    t, v = _as_arrays(series)
    lo, hi = window
    sel = (t >= lo * (1 - 1e-12)) & (t <= hi * (1 + 1e-12))
    t, v = t[sel], v[sel]
    if t.size < min_samples:
        raise InsufficientSamples(f"{t.size} samples in [{lo:g}, {hi:g}], need {min_samples}")
    if t.min() <= 0 or t.max() / t.min() < min_span * (1 - 1e-12):
        raise InsufficientSamples(f"window [{t.min():g}, {t.max():g}] spans less than x{min_span:g}")
    if np.any(v <= 0) or not np.all(np.isfinite(v)):
        raise NonPositiveValue("decay fit needs strictly positive finite values")
    lt, lv = np.log(t), np.log(v)
    if np.ptp(lv) == 0:
        return 0.0, 0.0
    fit = linregress(lt, lv)
    return float(fit.slope), float(fit.stderr)


@dataclass(frozen=True)
class ExpansionRow:
    l: int
    m: int
    t: float
    measured: float
    bound: float
    kernel_measured: float


@dataclass(frozen=True)
class CombinationRow:
    l: int
    t: float
    scaled_error: float


@dataclass
class ExpansionTable:
    rows: list
    combination: list
    slopes: dict
    data_slopes: dict


def verify_linear_expansion(u0, ts, l_max=1, m_max=1, nu=1.0, eps=1):
    """Whole-plane Taylor remainders of ``S(t) * u0`` and the first-order profile error.

    For each ``(l, m, t)`` the measured quantity is
    ``||d^l (S(t)*u0 - sum_{n<=m} (-t)^n/n! d^{3n} K(t)*u0)||_inf`` with the
    bound ``taylor_remainder_bound * ||u0||_1``.  ``kernel_measured`` is the
    same remainder for the kernel itself, with bound ``taylor_remainder_bound``.
    The combination rows hold ``t^(7/4 + l/2) ||d^l (S(t)*u0 - K_1(t))||_inf``
    where ``K_1 = int d_x K(x, y-w, t) M_1(w) dw`` (the zero-mass case).

    ``slopes`` are fitted to the kernel remainders, whose exponent is
    ``-7/4 - (l+m)/2``.  ``data_slopes`` are fitted to the remainders applied
    to ``u0``; zero mass makes these decay faster by about ``t^(-1/2)``.
    """
    u0.check_zero_mass()
    ev = KernelEvaluator(nu, eps)
    g = u0.grid
    l1 = float(np.sum(np.abs(u0.physical)) * g.dx * g.dy)
    m1 = moment_profile(u0, 1).values
    rows, comb = [], []
    for t in ts:
        for l in range(l_max + 1):
            for m in range(m_max + 1):

                def sym(xi, l=l, m=m, t=t):
                    z = 1j * t * xi**3
                    tail = np.exp(z)
                    term = np.ones_like(z)
                    for n in range(m + 1):
                        if n:
                            term = term * z / n
                        tail = tail - term
                    return (1j * xi) ** l * np.exp(-nu * t * xi**2) * tail

                val = free_space_convolve(ev, t, u0, sym).sup()
                bound = taylor_remainder_bound(ev, l, m, t)
                kval = taylor_remainder_sup(ev, l, m, t)
                rows.append(ExpansionRow(l, m, float(t), val, bound * l1, kval))
            full = lambda xi, l=l, t=t: (1j * xi) ** l * np.exp(-nu * t * xi**2 + 1j * t * xi**3)
            k1 = lambda xi, l=l, t=t: -((1j * xi) ** (l + 1)) * np.exp(-nu * t * xi**2)
            err = free_space_convolve(ev, t, u0, full, moment_terms=[(k1, m1)]).sup()
            comb.append(CombinationRow(l, float(t), t ** (1.75 + 0.5 * l) * err))
    slopes, data_slopes = {}, {}
    if len(ts) >= 5:
        for l in range(l_max + 1):
            for m in range(m_max + 1):
                sel = [r for r in rows if r.l == l and r.m == m]
                window = (min(ts), max(ts))
                slopes[(l, m)] = fit_decay_rate([(r.t, r.kernel_measured) for r in sel], window)
                data_slopes[(l, m)] = fit_decay_rate([(r.t, r.measured) for r in sel], window)
    return ExpansionTable(rows, comb, slopes, data_slopes)


def is_decreasing(values):
    v = np.asarray(values, dtype=float)
    return bool(np.all(np.diff(v) < 0))


@dataclass(frozen=True)
class ProfileErrorRow:
    t: float
    scaled_error: float
    envelope_coefficient: float


def compare_profile(snapshots, N0, y_window=5.0, nu=1.0, eps=1):
    """``t^(7/4) max_{|y| <= L} |u - N0 d_x K|`` for each snapshot.

    ``snapshots`` maps time to a periodic :class:`~kpburgers.spectral.Field`
    or to a whole-plane :class:`~kpburgers.kernels.PlaneSample`.  The
    envelope coefficient is the smallest ``C`` with
    ``max |u - N0 d_x K| <= C L^2 t^(-13/4)`` on the window.
    """
    if len(snapshots) < 4:
        raise InsufficientSamples("profile comparison needs at least four snapshots")
    ev = KernelEvaluator(nu, eps)
    out = []
    for t in sorted(snapshots):
        if t <= 0:
            continue
        f = snapshots[t]
        if isinstance(f, Field):
            x, y, vals, half = f.grid.x, f.grid.y, f.physical, 0.5 * f.grid.Ly
        else:
            x, y, vals = f.x, f.y, f.values
            half = float(np.max(np.abs(y)))
        if y_window > half:
            raise ValueError("y_window exceeds the sampled rows")
        rows = np.nonzero(np.abs(y) <= y_window)[0]
        diff = 0.0
        for j in rows:
            # one FFT per row; x is a uniform lattice for both snapshot kinds
            prof = N0 * kernel_K_spectral(ev, t, y[j], x, 1) if N0 != 0 else 0.0
            diff = max(diff, float(np.max(np.abs(vals[:, j] - prof))))
        env = diff / (y_window**2 * t ** (-3.25)) if y_window > 0 else math.inf
        out.append(ProfileErrorRow(float(t), t**1.75 * diff, env))
    return out


def lower_bound_constant(nu):
    return gamma(1.25) / (2**2.5 * math.pi**1.5 * nu**1.25)


def lower_bound_certificate(series, N0, nu, window=None):
    """``min_t t^(7/4) ||u||_inf / (C |N0|)`` over a late-time window.

    ``series`` is a diagnostics series (with ``t`` and ``linf_norm``) or a
    ``(t, linf)`` tuple.  The default window is the last decade of recorded
    times.
    """
    if abs(N0) < 1e-14:
        raise UndefinedMargin("|N0| below 1e-14")
    if hasattr(series, "linf_norm"):
        t, v = np.asarray(series.t), np.asarray(series.linf_norm)
    else:
        t, v = _as_arrays(series)
    if window is None:
        window = (t.max() / 10, t.max())
    sel = (t >= window[0]) & (t <= window[1]) & (t > 0)
    if not np.any(sel):
        raise InsufficientSamples("no samples in the certificate window")
    return float(np.min(t[sel] ** 1.75 * v[sel]) / (lower_bound_constant(nu) * abs(N0)))


def duhamel_constant(nu):
    return 1.0 / (2**1.25 * math.pi**0.25 * nu**0.75)


def _singular_weights(tau, t):
    """Weights ``w_j`` with ``sum w_j f_j = int (t - s)^(-3/4) f(s) ds`` for piecewise-linear f."""
    s = t - np.asarray(tau, dtype=float)
    w = np.zeros(s.size)
    for j in range(s.size - 1):
        s0, s1 = s[j], s[j + 1]
        d = s0 - s1
        if d <= 0:
            raise ValueError("tau samples must increase")
        i0 = 4 * (s0**0.25 - s1**0.25)
        i1 = 0.8 * (s0**1.25 - s1**1.25)
        # f is linear in s between the nodes: f = f_j (s - s1)/d + f_{j+1} (s0 - s)/d
        w[j] += (i1 - s1 * i0) / d
        w[j + 1] += (s0 * i0 - i1) / d
    return w


def duhamel_bound_check(g_series, t=None, nu=1.0, eps=1):
    """Ratio of ``||int_a^t d_x S(t - tau) * g dtau||_inf`` to its explicit bound.

    ``g_series`` is a list of ``(tau, Field)`` with increasing ``tau``; the
    last time is ``t`` unless given.  The left side uses the trapezoid rule
    in ``tau``; the right side integrates the ``(t - tau)^(-3/4)``
    singularity exactly against the piecewise-linear interpolant of
    ``(||g||^2 + ||g_y||^2)^(1/2)``.
    """
    if len(g_series) < 2:
        raise InsufficientSamples("need at least two tau samples")
    taus = np.array([tau for tau, _ in g_series], dtype=float)
    t = float(taus[-1] if t is None else t)
    ev = KernelEvaluator(nu, eps)
    grid = g_series[0][1].grid
    XI, ETA = grid.XI, grid.ETA
    L = linear_symbol(ev, XI, ETA)
    wt = np.zeros(taus.size)
    dt = np.diff(taus)
    wt[:-1] += 0.5 * dt
    wt[1:] += 0.5 * dt
    acc = np.zeros((grid.nx, grid.ny), dtype=complex)
    norms = np.zeros(taus.size)
    for j, (tau, gf) in enumerate(g_series):
        sym = (1j * XI) * np.exp((t - tau) * L)
        sym[0, :] = 0.0
        acc += wt[j] * hermitian_part(sym) * gf.spectral
        e = np.abs(gf.spectral) ** 2 * grid.l2_weight
        norms[j] = math.sqrt(float(np.sum(e * (1 + ETA**2))))
    lhs = Field(grid, spectral=acc).linf_norm()
    rhs = duhamel_constant(nu) * float(np.dot(_singular_weights(taus, t), norms))
    if rhs == 0:
        return 0.0
    return lhs / rhs
