"""Periodic-box discretization and Fourier multipliers.

The box is ``[-Lx/2, Lx/2) x [-Ly/2, Ly/2)`` sampled on ``nx x ny`` points.
Arrays are indexed ``[i, j]`` with ``i`` along x and ``j`` along y.  Spectral
coefficients use the unnormalized discrete transform (``scipy.fft.fft2``) in
standard FFT ordering.

Odd symbols such as ``i*xi`` cannot be represented on the self-conjugate
Nyquist modes of a real field.  :func:`apply_multiplier` therefore uses the
Hermitian part of every symbol, which leaves all non-Nyquist modes untouched
and takes the real part on Nyquist modes.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
import scipy.fft as sfft

from .errors import ZeroModeViolation

DEFAULT_ZERO_MODE_TOL = 1e-12

POLICIES = ("force-zero", "finite-value", "error")


def fft_workers():
    """Worker count for ``scipy.fft``, capped by ``KPB_THREADS`` if set."""
    env = os.environ.get("KPB_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return 1


def fft2(a):
    return sfft.fft2(a, workers=fft_workers())


def ifft2(a):
    return sfft.ifft2(a, workers=fft_workers())


@dataclass(frozen=True)
class SpectralGrid:
    """Uniform periodic grid with its wavenumber lattices.

    Attributes
    ----------
    nx, ny : int
        Even mode counts (at least 8).
    Lx, Ly : float
        Box periods.
    """

    nx: int
    ny: int
    Lx: float
    Ly: float

    def __post_init__(self):
        for name in ("nx", "ny"):
            n = getattr(self, name)
            if int(n) != n or n < 8 or n % 2:
                raise ValueError(f"{name}={n} must be an even integer >= 8")
        for name in ("Lx", "Ly"):
            L = getattr(self, name)
            if not np.isfinite(L) or L <= 0:
                raise ValueError(f"{name}={L} must be positive")

    @property
    def dx(self):
        return self.Lx / self.nx

    @property
    def dy(self):
        return self.Ly / self.ny

    @property
    def area(self):
        return self.Lx * self.Ly

    @cached_property
    def x(self):
        return -0.5 * self.Lx + self.dx * np.arange(self.nx)

    @cached_property
    def y(self):
        return -0.5 * self.Ly + self.dy * np.arange(self.ny)

    @cached_property
    def mx(self):
        """Integer x mode indices in FFT order."""
        return np.fft.fftfreq(self.nx, 1.0 / self.nx).astype(int)

    @cached_property
    def my(self):
        return np.fft.fftfreq(self.ny, 1.0 / self.ny).astype(int)

    @cached_property
    def xi(self):
        return 2 * np.pi * self.mx / self.Lx

    @cached_property
    def eta(self):
        return 2 * np.pi * self.my / self.Ly

    @cached_property
    def XI(self):
        return np.broadcast_to(self.xi[:, None], (self.nx, self.ny))

    @cached_property
    def ETA(self):
        return np.broadcast_to(self.eta[None, :], (self.nx, self.ny))

    @cached_property
    def nyquist_mask(self):
        """True on modes that are not Nyquist in either direction."""
        keep = np.ones((self.nx, self.ny), dtype=bool)
        keep[self.nx // 2, :] = False
        keep[:, self.ny // 2] = False
        return keep

    @cached_property
    def l2_weight(self):
        """Factor turning ``sum |fft2(u)|**2`` into ``int u**2 dx dy``."""
        return self.area / (self.nx * self.ny) ** 2

    def meshgrid(self):
        return np.meshgrid(self.x, self.y, indexing="ij")


def make_grid(nx, ny, Lx, Ly):
    """Build a :class:`SpectralGrid`, validating mode counts and lengths."""
    return SpectralGrid(int(nx), int(ny), float(Lx), float(Ly))


def _reflect(a):
    """Return ``a[-m]`` on the FFT lattice along both axes."""
    return np.roll(a[::-1, ::-1], 1, axis=(0, 1))


def hermitian_part(s):
    """Symmetrize a spectral array so that it maps real fields to real fields."""
    return 0.5 * (s + np.conj(_reflect(s)))


class Field:
    """Immutable real field on a :class:`SpectralGrid`.

    Either representation may be supplied; the other is computed on demand
    and cached.  Stored arrays are marked read-only.
    """

    __slots__ = ("grid", "_physical", "_spectral", "__weakref__")

    def __init__(self, grid, physical=None, spectral=None):
        if (physical is None) == (spectral is None):
            raise ValueError("supply exactly one of physical or spectral")
        self.grid = grid
        self._physical = None
        self._spectral = None
        shape = (grid.nx, grid.ny)
        if physical is not None:
            a = np.array(physical, dtype=float)
            if a.shape != shape:
                raise ValueError(f"physical shape {a.shape} != {shape}")
            if not np.all(np.isfinite(a)):
                raise ValueError("physical values must be finite")
            a.flags.writeable = False
            self._physical = a
        else:
            s = np.array(spectral, dtype=complex)
            if s.shape != shape:
                raise ValueError(f"spectral shape {s.shape} != {shape}")
            s.flags.writeable = False
            self._spectral = s

    @property
    def physical(self):
        if self._physical is None:
            a = ifft2(self._spectral).real
            if not np.all(np.isfinite(a)):
                raise ValueError("physical values must be finite")
            a.flags.writeable = False
            self._physical = a
        return self._physical

    @property
    def spectral(self):
        if self._spectral is None:
            s = fft2(self._physical)
            s.flags.writeable = False
            self._spectral = s
        return self._spectral

    def l2_norm(self):
        """Physical L2 norm with the ``dx*dy`` weight."""
        g = self.grid
        return float(np.sqrt(np.sum(self.physical**2) * g.dx * g.dy))

    def spectral_l2_norm(self):
        g = self.grid
        return float(np.sqrt(np.sum(np.abs(self.spectral) ** 2) * g.l2_weight))

    def linf_norm(self):
        return float(np.max(np.abs(self.physical)))

    def zero_mode_max(self):
        """Largest L2 weight carried by a single xi = 0 mode."""
        g = self.grid
        return float(np.max(np.abs(self.spectral[0, :])) * np.sqrt(g.l2_weight))

    def check_zero_mass(self, rel_tol=DEFAULT_ZERO_MODE_TOL):
        """Raise :class:`ZeroModeViolation` if the xi = 0 column is not empty."""
        tol = rel_tol * self.l2_norm()
        zm = self.zero_mode_max()
        if zm > tol:
            raise ZeroModeViolation(zm, tol)

    def is_zero_mass(self, rel_tol=DEFAULT_ZERO_MODE_TOL):
        return self.zero_mode_max() <= rel_tol * self.l2_norm()

    def __add__(self, other):
        return Field(self.grid, physical=self.physical + other.physical)

    def __sub__(self, other):
        return Field(self.grid, physical=self.physical - other.physical)

    def __mul__(self, c):
        return Field(self.grid, physical=self.physical * float(c))

    __rmul__ = __mul__

    def __repr__(self):
        g = self.grid
        return f"Field({g.nx}x{g.ny}, L=({g.Lx:g}, {g.Ly:g}))"


@dataclass(frozen=True)
class MultiplierSymbol:
    """A Fourier multiplier ``m(xi, eta)`` with a policy for ``xi = 0``.

    ``func`` receives broadcastable arrays.  Under ``force-zero`` and
    ``error`` it is only called on the ``xi != 0`` part of the lattice.
    """

    func: Callable
    policy: str = "force-zero"
    name: str = field(default="", compare=False)

    def __post_init__(self):
        if self.policy not in POLICIES:
            raise ValueError(f"unknown singularity policy {self.policy!r}")

    def evaluate(self, grid):
        """Symbol values on the grid lattice (raw, before symmetrization)."""
        XI, ETA = grid.XI, grid.ETA
        out = np.zeros((grid.nx, grid.ny), dtype=complex)
        if self.policy == "finite-value":
            out[...] = self.func(XI, ETA)
        else:
            out[1:, :] = self.func(XI[1:, :], ETA[1:, :])
        if not np.all(np.isfinite(out)):
            raise ValueError(f"symbol {self.name or self.func} is not finite on the lattice")
        return out


def apply_multiplier(f, sym, zero_mode_tol=DEFAULT_ZERO_MODE_TOL):
    """Return the field with coefficients ``sym(xi, eta) * f_hat``.

    The Hermitian part of the symbol is used so the output is exactly real.
    """
    if sym.policy == "error":
        f.check_zero_mass(zero_mode_tol)
    s = hermitian_part(sym.evaluate(f.grid))
    return Field(f.grid, spectral=s * f.spectral)


def multiplier(func, policy="force-zero", name=""):
    return MultiplierSymbol(func, policy, name)


def derivative_x(f, order=1):
    """Spectral x-derivative of the given order."""
    return apply_multiplier(
        f, MultiplierSymbol(lambda xi, eta: (1j * xi) ** order, "finite-value", "dx")
    )


def derivative_y(f, order=1):
    return apply_multiplier(
        f, MultiplierSymbol(lambda xi, eta: (1j * eta) ** order, "finite-value", "dy")
    )


def antiderivative_x(f, zero_mode_tol=DEFAULT_ZERO_MODE_TOL):
    """Apply ``1/(i xi)`` on ``xi != 0`` and zero the ``xi = 0`` column.

    Raises
    ------
    ZeroModeViolation
        If ``f`` is not zero-mass within ``zero_mode_tol``.
    """
    return apply_multiplier(
        f, MultiplierSymbol(lambda xi, eta: 1.0 / (1j * xi), "error", "dx^-1"), zero_mode_tol
    )


def project_zero_mass(f):
    """Set every ``xi = 0`` coefficient to exactly zero."""
    s = np.array(f.spectral)
    s[0, :] = 0.0
    return Field(f.grid, spectral=s)


def dealias_mask(grid, degree):
    """Boolean mask keeping ``|m| <= n/(degree+1)`` in each direction."""
    if degree < 2:
        raise ValueError("dealias degree must be >= 2")
    kx = grid.nx // (degree + 1)
    ky = grid.ny // (degree + 1)
    return (np.abs(grid.mx)[:, None] <= kx) & (np.abs(grid.my)[None, :] <= ky)


def dealias(f, degree):
    """Zero coefficients outside the generalized two-thirds band."""
    return Field(f.grid, spectral=np.where(dealias_mask(f.grid, degree), f.spectral, 0.0))


def write_snapshot(path, f):
    """Write a field in the ``KPBFIELD v1`` format."""
    g = f.grid
    header = f"KPBFIELD v1 {g.nx} {g.ny} {g.Lx!r} {g.Ly!r}\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(f.physical, dtype="<f8").tobytes())


def read_snapshot(path):
    """Read a ``KPBFIELD v1`` file back into a :class:`Field`."""
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").split()
        if len(header) != 6 or header[:2] != ["KPBFIELD", "v1"]:
            raise ValueError(f"{path}: not a KPBFIELD v1 file")
        nx, ny = int(header[2]), int(header[3])
        Lx, Ly = float(header[4]), float(header[5])
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != nx * ny:
        raise ValueError(f"{path}: expected {nx * ny} values, found {data.size}")
    return Field(make_grid(nx, ny, Lx, Ly), physical=data.reshape(nx, ny))
