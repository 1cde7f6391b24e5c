"""Kernels K*, K, S, Taylor remainders and the profiles built from them.

Conventions
-----------
The two-dimensional Fourier transform carries the factor ``1/(2 pi)``, so the
kernel of the full linear flow is

    S(x, y, t) = (1/(4 pi^2)) int int exp(t L(xi, eta) + i(x xi + y eta)) dxi deta,
    L(xi, eta) = -nu xi^2 + i (xi^3 - eps eta^2 / xi),

and ``K`` is the same object without the ``xi^3`` term.  Doing the ``eta``
integral in closed form leaves a one-dimensional transform in ``xi``:

    S(x, y, t) = t^(-1/2) / (4 pi^(3/2)) int |xi|^(1/2)
                 exp(-nu t xi^2 + i t xi^3 + i xi y^2/(4 t eps)
                     - i (pi/4) eps sgn(xi)) exp(i x xi) dxi.

Hence ``S`` and ``K`` depend on ``(x, y)`` only through ``x + eps y^2/(4t)``
and their sup norms are one-dimensional maxima.  The same closed form turns
any y-convolution against these kernels into a direct sum over ``w`` with an
explicit Fresnel factor (:func:`free_space_rows`), which is how the profiles
are evaluated on the whole plane rather than on a torus.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft
from scipy.optimize import minimize_scalar
from scipy.signal import resample
from scipy.special import gamma

from .errors import QuadratureError
from .spectral import Field, fft_workers, hermitian_part

_GL_X, _GL_W = np.polynomial.legendre.leggauss(20)
_MAX_PANELS = 2**18
_CHUNK = 2_000_000


@dataclass(frozen=True)
class KernelEvaluator:
    """Physical parameters and quadrature controls for kernel evaluation.

    Attributes
    ----------
    nu : float
        Dissipation coefficient, ``nu > 0``.
    eps : int
        Transverse sign, ``+1`` or ``-1``.
    quad_rel_tol : float
        Target error of the r-integral relative to its absolute mass.
    quad_cutoff : float
        Upper truncation of the r-integral.
    """

    nu: float = 1.0
    eps: int = 1
    quad_rel_tol: float = 1e-11
    quad_cutoff: float = 45.0

    def __post_init__(self):
        if not self.nu > 0:
            raise ValueError("nu must be positive")
        if self.eps not in (-1, 1):
            raise ValueError("eps must be +1 or -1")
        if not 0 < self.quad_rel_tol <= 1e-3:
            raise ValueError("quad_rel_tol must lie in (0, 1e-3]")
        if not math.exp(-self.quad_cutoff) < self.quad_rel_tol / 100:
            raise ValueError("quad_cutoff too small for the requested tolerance")

    @property
    def c0(self):
        return 1.0 / (4 * math.pi**1.5 * self.nu**0.75)


# ---------------------------------------------------------------------------
# quadrature for K*


def _panel_sum(omega, phase, l, qmax, npanel):
    """Composite Gauss-Legendre sum of 4 q^(2+2l) e^(-q^4) cos(omega q^2 + phase)."""
    edges = np.linspace(0.0, qmax, npanel + 1)
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * (edges[1:] - edges[:-1])
    q = (mid[:, None] + half[:, None] * _GL_X[None, :]).ravel()
    wq = (half[:, None] * _GL_W[None, :]).ravel()
    base = 4.0 * q ** (2 + 2 * l) * np.exp(-(q**4)) * wq
    q2 = q * q
    out = np.empty(omega.size)
    step = max(1, _CHUNK // q.size)
    for s in range(0, omega.size, step):
        out[s : s + step] = np.cos(omega[s : s + step, None] * q2[None, :] + phase) @ base
    return out


def _radial_integral(ev, l, omega):
    """``int_0^inf r^(l/2-1/4) e^(-r) cos(omega sqrt(r) + phase) dr`` for an array of omega.

    The substitution ``r = q^4`` gives a smooth integrand; panels are refined
    until the phase advance per panel is below pi and two successive
    refinements agree.
    """
    phase = -0.25 * math.pi * ev.eps + 0.5 * math.pi * l
    qmax = ev.quad_cutoff**0.25
    scale = gamma(0.75 + 0.5 * l)
    tol = ev.quad_rel_tol * scale
    omega = np.asarray(omega, dtype=float)
    flat = omega.ravel()
    result = np.empty(flat.size)
    need = np.maximum(8, np.ceil(2 * np.abs(flat) * qmax**2 / math.pi))
    start = 2 ** np.ceil(np.log2(need)).astype(int)
    if start.size and start.max() > _MAX_PANELS // 2:
        raise QuadratureError(math.inf, tol)
    for n0 in np.unique(start):
        idx = np.nonzero(start == n0)[0]
        n = int(n0)
        coarse = _panel_sum(flat[idx], phase, l, qmax, n)
        while True:
            fine = _panel_sum(flat[idx], phase, l, qmax, 2 * n)
            err = np.abs(fine - coarse)
            done = err <= tol
            result[idx[done]] = fine[done]
            idx, coarse = idx[~done], fine[~done]
            if idx.size == 0:
                break
            n *= 2
            if 2 * n > _MAX_PANELS:
                raise QuadratureError(float(err[~done].max()), tol)
    return result.reshape(omega.shape)


def kstar(ev, l, x, y):
    """Evaluate ``d^l/dx^l K*(x, y)`` by quadrature.

    Accepts scalars or broadcastable arrays and returns the same shape.
    """
    if l < 0:
        raise ValueError("l must be non-negative")
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    a = x + ev.eps * y**2 / 4.0
    val = ev.c0 * ev.nu ** (-0.5 * l) * _radial_integral(ev, l, a / math.sqrt(ev.nu))
    return float(val) if val.ndim == 0 else val


def kernel_K(ev, l, x, y, t):
    """``d^l/dx^l K(x, y, t)`` via the self-similar form of ``K*``."""
    if not t > 0:
        raise ValueError("t must be positive")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return t ** (-1.25 - 0.5 * l) * kstar(ev, l, x * t**-0.5, y * t**-0.75)


def kstar_sup(ev, l, a_range=40.0, da=0.05):
    """Sup norm of ``d^l K*`` and the location ``a`` where it is attained.

    Because ``K*`` is a function of ``a = x + eps y^2/4`` alone, the maximum
    over the plane is a maximum over ``a`` on the line ``y = 0``.
    """
    a = np.arange(-a_range, a_range + da / 2, da)
    v = np.abs(kstar(ev, l, a, 0.0))
    i = int(np.argmax(v))
    res = minimize_scalar(
        lambda s: -abs(kstar(ev, l, s, 0.0)),
        bounds=(a[max(i - 1, 0)], a[min(i + 1, a.size - 1)]),
        method="bounded",
        options={"xatol": 1e-10},
    )
    return float(-res.fun), float(res.x)


def kernel_K_sup(ev, l, t):
    """Grid maximization of ``|d^l K(., ., t)|`` along ``y = 0``."""
    s = math.sqrt(t)
    x = np.arange(-40 * s, 40 * s, 0.05 * s)
    v = np.abs(kernel_K(ev, l, x, 0.0, t))
    i = int(np.argmax(v))
    res = minimize_scalar(
        lambda z: -abs(kernel_K(ev, l, z, 0.0, t)),
        bounds=(x[max(i - 1, 0)], x[min(i + 1, x.size - 1)]),
        method="bounded",
        options={"xatol": 1e-10 * s},
    )
    return float(-res.fun)


def taylor_remainder_bound(ev, l, m, t):
    """Explicit bound on ``||d^l (S - sum_{n<=m} (-t)^n/n! d^{3n} K)||_inf``."""
    k = 0.5 * (l + 3 * m) + 2.25
    c = gamma(k) / (4 * math.pi**1.5 * ev.nu**k * math.factorial(m + 1))
    return c * t ** (-1.75 - 0.5 * (l + m))


# ---------------------------------------------------------------------------
# one-dimensional spectral form


def _xi_lattice(n, h):
    return 2 * math.pi * sfft.fftfreq(n, h)


def _line_symbol(ev, t, y, xi, l, dispersive, remainder_order):
    """Integrand of the 1D representation, without the ``exp(i x xi)`` factor."""
    axi = np.abs(xi)
    g = np.sqrt(axi) * np.exp(
        -ev.nu * t * xi**2
        + 1j * xi * (y * y / (4 * t * ev.eps))
        - 0.25j * math.pi * ev.eps * np.sign(xi)
    )
    if l:
        g = g * (1j * xi) ** l
    if remainder_order is not None:
        z = 1j * t * xi**3
        tail = np.exp(z)
        term = np.ones_like(z)
        for n in range(remainder_order + 1):
            if n:
                term = term * z / n
            tail = tail - term
        g = g * tail
    elif dispersive:
        g = g * np.exp(1j * t * xi**3)
    return g


def _line_transform(ev, t, y, x, l=0, dispersive=False, remainder_order=None):
    """Sample the 1D representation on a uniform x-array."""
    if not t > 0:
        raise ValueError("t must be positive")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    h_req = math.pi * math.sqrt(ev.nu * t / 45.0)
    if x.size > 1:
        dx = x[1] - x[0]
        if not np.allclose(np.diff(x), dx, rtol=1e-9, atol=0):
            raise ValueError("x must be a uniform lattice")
        r = max(1, math.ceil(abs(dx) / h_req))
        h = dx / r
    else:
        r, h = 1, h_req
    span = abs(x[-1] - x[0])
    shift = y * y / (4 * t)
    period = 4 * (span + shift) + 16000.0 * max(1.0, math.sqrt(ev.nu * t))
    n = int(2 ** math.ceil(math.log2(max(period / abs(h), 4096))))
    xi = _xi_lattice(n, abs(h)) * np.sign(h)
    g = _line_symbol(ev, t, y, xi, l, dispersive, remainder_order)
    g[n // 2] = 0.0
    vals = sfft.ifft(g * np.exp(1j * xi * x[0]), workers=fft_workers())
    vals *= (2 * math.pi / h) * t**-0.5 / (4 * math.pi**1.5)
    return vals[: (x.size - 1) * r + 1 : r].real


def kernel_K_spectral(ev, t, y, x, l=0):
    """``d^l K(x, y, t)`` on a uniform x-lattice from the 1D spectral form."""
    return _line_transform(ev, t, y, x, l)


def kernel_S_line(ev, t, x, y=0.0, l=0):
    """``d^l S(x, y, t)`` on a uniform x-lattice (whole-plane kernel)."""
    return _line_transform(ev, t, y, x, l, dispersive=True)


def taylor_remainder_line(ev, l, m, t, x, y=0.0):
    """``d^l (S - sum_{n<=m} (-t)^n/n! d^{3n} K)`` on a uniform x-lattice."""
    return _line_transform(ev, t, y, x, l, remainder_order=m)


def refined_max(values, x):
    """Maximum of ``|values|`` with a parabolic correction at the peak."""
    v = np.abs(np.asarray(values))
    i = int(np.argmax(v))
    if 0 < i < v.size - 1:
        a, b, c = v[i - 1], v[i], v[i + 1]
        den = a - 2 * b + c
        if den < 0:
            return float(b - 0.125 * (a - c) ** 2 / den)
    return float(v[i])


def _line_window(ev, t, dispersive):
    """Uniform x-window covering the bulk of the 1D kernel at time t."""
    s = math.sqrt(ev.nu * t)
    left = 40 * s + (8 * t / (ev.nu * 1.0) if dispersive else 0.0)
    h = 0.02 * s
    return np.arange(-left, 40 * s, h)


def kernel_S_sup(ev, t, l=0):
    """``||d^l S(t)||_inf`` over the plane, via the 1D reduction."""
    x = _line_window(ev, t, True)
    return refined_max(kernel_S_line(ev, t, x, 0.0, l), x)


def kernel_K_line_sup(ev, t, l=0):
    x = _line_window(ev, t, False)
    return refined_max(kernel_K_spectral(ev, t, 0.0, x, l), x)


def taylor_remainder_sup(ev, l, m, t):
    """Measured sup norm of the Taylor remainder over the plane."""
    x = _line_window(ev, t, True)
    return refined_max(taylor_remainder_line(ev, l, m, t, x), x)


def linear_symbol(ev, xi, eta, dispersive=True):
    """``-nu xi^2 + i(xi^3 - eps eta^2/xi)``, zero on ``xi = 0``."""
    xi, eta = np.broadcast_arrays(xi, eta)
    out = np.zeros(xi.shape, dtype=complex)
    nz = xi != 0
    x, e = xi[nz], eta[nz]
    disp = x**3 if dispersive else 0.0
    out[nz] = -ev.nu * x**2 + 1j * (disp - ev.eps * e**2 / x)
    return out


def kernel_S_field(ev, t, grid, l=0, dispersive=True):
    """``d^l S(., ., t)`` sampled on the periodic grid (the periodized kernel).

    Its coefficients are ``exp(t L)`` with the xi = 0 column forced to zero,
    scaled so that a discrete convolution ``sum S(x - x') u(x') dx dy``
    reproduces the multiplier ``exp(t L)``.
    """
    sym = np.exp(t * linear_symbol(ev, grid.XI, grid.ETA, dispersive))
    sym[0, :] = 0.0
    if l:
        sym = sym * (1j * grid.XI) ** l
    phase = np.exp(1j * (grid.XI * grid.x[0] + grid.ETA * grid.y[0]))
    hat = hermitian_part(sym * phase) / (grid.dx * grid.dy)
    return Field(grid, spectral=hat)


# ---------------------------------------------------------------------------
# moment profiles and whole-plane y-convolutions


@dataclass(frozen=True)
class MomentProfile:
    """``M_n(y) = ((-1)^n/n!) int x^n u0(x, y) dx`` on the y-lattice."""

    n: int
    values: np.ndarray
    y: np.ndarray


@dataclass(frozen=True)
class AmplitudeFunctionQ:
    """``Q(w) = M_1(w) + int_0^inf U(w, tau) dtau`` on the y-lattice."""

    values: np.ndarray
    y: np.ndarray

    @property
    def integral_of_Q(self):
        return float(np.sum(self.values) * (self.y[1] - self.y[0]))


def moment_profile(u0, n):
    """Weighted x-quadrature of ``u0`` with box-centred coordinates."""
    if n < 0:
        raise ValueError("n must be non-negative")
    g = u0.grid
    w = ((-1) ** n / math.factorial(n)) * g.x**n * g.dx
    return MomentProfile(n, w @ u0.physical, g.y.copy())


def amplitude_Q(m1, U_accumulated):
    """Assemble ``Q`` from ``M_1`` and the time-integrated ``U``."""
    return AmplitudeFunctionQ(np.asarray(m1.values) + np.asarray(U_accumulated), m1.y.copy())


def fresnel_factor(ev, t, xi, s):
    """``(1/2pi) int exp(-i t eps eta^2/xi + i s eta) deta`` for ``xi != 0``."""
    return np.sqrt(np.abs(xi) / (4 * math.pi * t)) * np.exp(
        1j * xi * s * s / (4 * t * ev.eps) - 0.25j * math.pi * ev.eps * np.sign(xi)
    )


def free_space_rows(ev, t, xi, B, w, ys, h, x0):
    """Whole-plane evaluation of ``(1/2pi) int e^{i x xi} sum_w G(xi, y-w) B(xi, w) dxi``.

    Parameters
    ----------
    xi : (N,) array
        FFT lattice for spacing ``h``.
    B : (N, W) complex array
        x-symbol times the x-transform of the source at each ``w``; rows
        that are identically zero are skipped.
    w : (W,) uniform array
        Source rows (``dw`` is taken from it).
    ys : (Y,) array
        Output rows.
    h, x0 : float
        Output lattice ``x0 + j h`` for ``j < N``.

    Returns
    -------
    (N, Y) real array
    """
    n = xi.size
    dw = w[1] - w[0] if w.size > 1 else 1.0
    active = np.nonzero(np.any(B != 0, axis=1) & (xi != 0))[0]
    A = np.zeros((n, ys.size), dtype=complex)
    if active.size:
        xa = xi[active]
        Ba = B[active] * np.exp(1j * xa[:, None] * w[None, :] ** 2 / (4 * t * ev.eps))
        pref = np.sqrt(np.abs(xa) / (4 * math.pi * t)) * np.exp(-0.25j * math.pi * ev.eps * np.sign(xa))
        step = max(1, _CHUNK // max(1, w.size * active.size))
        for s in range(0, ys.size, step):
            yy = ys[s : s + step]
            kern = np.exp(-1j * (xa[:, None, None] / (2 * t * ev.eps)) * yy[None, :, None] * w[None, None, :])
            acc = np.einsum("kyw,kw->ky", kern, Ba)
            chirp = np.exp(1j * xa[:, None] * yy[None, :] ** 2 / (4 * t * ev.eps))
            A[active, s : s + step] = dw * pref[:, None] * chirp * acc
    A *= np.exp(1j * xi * x0)[:, None]
    return (sfft.ifft(A, axis=0, workers=fft_workers()) / h).real


def w_refinement(ev, t, xi_max, y_extent, w_extent, dw, data_band=0.0):
    """Integer refinement of the source lattice resolving the Fresnel chirp."""
    freq = xi_max * (y_extent + w_extent) / (2 * t) + data_band
    return max(1, math.ceil(freq * dw / (0.5 * math.pi)))


def effective_xi_max(ev, t, cap=np.inf):
    """Wavenumber beyond which ``exp(-nu t xi^2)`` is below about 1e-18."""
    return min(cap, math.sqrt(42.0 / (ev.nu * t)))


def profile_field(ev, t, profile, grid):
    """Whole-plane profile sampled on the grid.

    ``profile`` is a :class:`MomentProfile` (giving ``int d^n K(x, y-w, t) M_n(w) dw``)
    or an :class:`AmplitudeFunctionQ` (giving ``int d_x K(x, y-w, t) Q(w) dw``).
    The profile is treated as a function on the y-lattice; the Fresnel chirp
    is resolved by periodic Fourier interpolation of the profile in ``w``.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    if isinstance(profile, MomentProfile):
        order, vals = profile.n, np.asarray(profile.values, dtype=float)
    elif isinstance(profile, AmplitudeFunctionQ):
        order, vals = 1, np.asarray(profile.values, dtype=float)
    else:
        raise TypeError("profile must be a MomentProfile or AmplitudeFunctionQ")
    if vals.shape != (grid.ny,):
        raise ValueError("profile must live on the grid's y-lattice")
    xi_eff = effective_xi_max(ev, t)
    r = max(1, math.ceil(grid.dx * xi_eff / math.pi))
    h = grid.dx / r
    y_ext = float(np.max(np.abs(grid.y))) + grid.dy
    shift = y_ext**2 / (2 * t)
    period = 2 * (grid.Lx + shift) + 2000.0 * max(1.0, math.sqrt(ev.nu * t))
    n = int(2 ** math.ceil(math.log2(period / h)))
    xi = _xi_lattice(n, h)
    q = w_refinement(ev, t, xi_eff, y_ext, y_ext, grid.dy)
    if q > 1:
        vals = resample(vals, grid.ny * q)
    w = grid.y[0] + (grid.dy / q) * np.arange(vals.size)
    sym = np.exp(-ev.nu * t * xi**2) * (1j * xi) ** order
    sym[np.abs(xi) > xi_eff] = 0.0
    B = sym[:, None] * vals[None, :]
    rows = free_space_rows(ev, t, xi, B, w, grid.y, h, grid.x[0])
    return Field(grid, physical=rows[: grid.nx * r : r, :])


@dataclass(frozen=True)
class PlaneSample:
    """Values of a whole-plane field on a rectangular window."""

    x: np.ndarray
    y: np.ndarray
    values: np.ndarray

    def sup(self):
        return float(np.max(np.abs(self.values)))


def default_rows(ev, t, half_width):
    """Output rows covering the transverse scale ``t^(3/4)`` around the source."""
    Y = 4.0 * (ev.nu * t) ** 0.75 + half_width
    step = 0.0625 * (ev.nu * t) ** 0.75
    n = int(math.ceil(Y / step))
    return step * np.arange(-n, n + 1)


def free_space_convolve(ev, t, u0=None, x_symbol=None, moment_terms=(), ys=None, grid=None):
    """Whole-plane evaluation of linear flows applied to compactly supported data.

    The result is

        (1/2pi) int e^{i x xi} sum_w G(xi, y - w) B(xi, w) dxi,
        B = x_symbol(xi) * F(xi, w) + sum_n sym_n(xi) * M_n(w),

    where ``F`` is the x-transform of ``u0`` rows and ``G`` the Fresnel
    factor of the transverse term.  The data is read as a band-limited
    function on its own grid, so no periodic images of the solution occur.

    Parameters
    ----------
    u0 : Field or None
        Source data; its grid fixes the x spacing and source rows.
    x_symbol : callable(xi) -> complex array
        Multiplier applied to ``F``.
    moment_terms : sequence of (callable(xi), values on the y-lattice)
        Extra sources that are pure functions of ``w``.
    ys : array, optional
        Output rows; by default a symmetric window sized by ``t^(3/4)``.
    grid : SpectralGrid, optional
        Needed when ``u0`` is None.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    g = u0.grid if u0 is not None else grid
    h = g.dx
    xi_eff = effective_xi_max(ev, t, cap=math.pi / h)
    if ys is None:
        ys = default_rows(ev, t, 0.5 * g.Ly)
    ys = np.asarray(ys, dtype=float)
    y_ext = float(np.max(np.abs(ys)))
    w_ext = 0.5 * g.Ly
    shift = (y_ext + w_ext) ** 2 / (4 * t)
    reach = shift + 60.0 * math.sqrt(ev.nu * t) + 0.5 * g.Lx
    pad = int(math.ceil(reach / h))
    n = int(2 ** math.ceil(math.log2((2 * reach + g.Lx + 500.0) / h)))
    x0 = g.x[0] - pad * h
    xi = _xi_lattice(n, h)
    keep = (np.abs(xi) <= xi_eff) & (xi != 0)
    q = w_refinement(ev, t, xi_eff, y_ext, w_ext, g.dy)
    w = g.y[0] + (g.dy / q) * np.arange(g.ny * q)
    B = np.zeros((n, w.size), dtype=complex)
    if u0 is not None and x_symbol is not None:
        rows = np.zeros((n, g.ny))
        rows[pad : pad + g.nx] = u0.physical
        F = h * np.exp(-1j * xi * x0)[:, None] * sfft.fft(rows, axis=0, workers=fft_workers())
        if q > 1:
            F = resample(F, g.ny * q, axis=1)
        B += np.where(keep, x_symbol(xi), 0.0)[:, None] * F
    for sym, vals in moment_terms:
        vals = np.asarray(vals, dtype=float)
        if q > 1:
            vals = resample(vals, g.ny * q)
        B += np.where(keep, sym(xi), 0.0)[:, None] * vals[None, :]
    B[~keep] = 0.0
    out = free_space_rows(ev, t, xi, B, w, ys, h, x0)
    lo = max(0, pad - int(math.ceil((shift + 60 * math.sqrt(ev.nu * t)) / h)))
    hi = min(n, pad + g.nx + int(math.ceil((shift + 60 * math.sqrt(ev.nu * t)) / h)))
    x = x0 + h * np.arange(lo, hi)
    return PlaneSample(x, ys, out[lo:hi])
