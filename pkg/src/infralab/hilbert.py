"""Discretized one-particle momentum space.

Vectors of ``K = L^2(R^3, d^3k)`` are stored in a separated basis: a radial
frequency grid ``omega_j`` times complex spherical harmonics ``Y_lm``.  A
:class:`WaveFunction` holds the coefficient array ``v[mode, node]`` with

.. math:: v(k) = \\sum_{lm} v_{lm}(|k|) \\, Y_{lm}(\\hat k).

Conventions
-----------
* Spherical harmonics are the complex, orthonormal ``Y_lm`` with the
  Condon--Shortley phase (``scipy.special.sph_harm_y``).
* The Fourier transform is the non-unitary ``\\hat h(k) = \\int d^3x
  e^{-ik.x} h(x)``.  With it ``\\int d^3k e^{ik.x} / |k|^2 = 2\\pi^2/|x|``
  holds without extra factors, ``\\hat\\rho(0) = \\int \\rho`` and
  ``\\int d^3k \\bar{\\hat a} \\hat b = (2\\pi)^3 \\int d^3x \\bar a b``.
* For an angular sector ``H(r) Y_lm(\\hat x)`` the transform is
  ``\\hat H_l(\\omega) Y_lm(\\hat k)`` with
  ``\\hat H_l(\\omega) = 4\\pi (-i)^l \\int_0^\\infty H(r) j_l(\\omega r) r^2 dr``.

Radial grid
-----------
The log grid is built from cells ``[e_k, e_{k+1}]`` with ``e_k = lo e^{kh}``.
Each cell carries one node ``omega_k = e_k e^{\\delta}`` with
``\\delta = \\ln((e^{3h}-1)/(3h))/3`` and weight ``w_k = h omega_k^3``, which
equals the exact cell integral ``\\int \\omega^2 d\\omega``.  This choice makes
three things exact at once: the integral of constants against
``\\omega^2 d\\omega``, the per-cell integral of ``\\omega^{-3}`` (shell norms
``\\ln(\\varepsilon_i/\\varepsilon_{i+1})``), and constant node ratios, while
the sum remains a trapezoid rule in ``\\ln\\omega`` (spectrally accurate for
smooth decaying integrands).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.special import roots_legendre, sph_harm_y, spherical_jn

__all__ = [
    "IncompatibleBasisError",
    "ResolutionWarning",
    "RadialGrid",
    "ModeSet",
    "WaveFunction",
    "TestVector",
    "AngularQuadrature",
    "inner_product",
    "symplectic_form",
    "apply_gamma",
    "dilate",
    "dilate_test_vector",
    "shell_project",
    "radial_fourier",
    "inverse_radial_fourier",
    "infrared_tail",
    "real_space_gamma_check",
    "zero_limit",
    "spherical_jn_table",
    "legendre_table",
    "bessel_moments",
]


class IncompatibleBasisError(ValueError):
    """Raised when two vectors do not share grid and mode set."""


class ResolutionWarning(UserWarning):
    """Emitted when a dilation moves content outside the resolvable band."""


# ---------------------------------------------------------------------------
# Radial grid
# ---------------------------------------------------------------------------


def _node_offset(h: float) -> float:
    """Log offset of the node inside a cell of log-width ``h``."""
    return np.log(np.expm1(3.0 * h) / (3.0 * h)) / 3.0


@dataclass(frozen=True, eq=False)
class RadialGrid:
    """Radial frequency grid with ``omega^2 d omega`` quadrature weights.

    Parameters
    ----------
    nodes : ndarray
        Strictly increasing positive frequencies ``omega_j``.
    weights : ndarray
        Quadrature weights ``w_j`` approximating ``\\int \\omega^2 d\\omega``.
    edges : ndarray
        Cell edges, ``len(nodes) + 1`` values; the grid integrates over
        ``[edges[0], edges[-1]]``.
    kind : {"log", "linear"}
        Grid family.
    h : float
        Cell width in ``ln(omega)`` (log kind) or in ``omega`` (linear kind).
    """

    nodes: np.ndarray
    weights: np.ndarray
    edges: np.ndarray
    kind: str
    h: float

    def __post_init__(self):
        for name in ("nodes", "weights", "edges"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.nodes.ndim != 1 or self.nodes.size < 3:
            raise ValueError("a radial grid needs at least three nodes")
        if self.edges.size != self.nodes.size + 1:
            raise ValueError("edges must have len(nodes) + 1 entries")
        if np.any(self.nodes <= 0) or np.any(np.diff(self.nodes) <= 0):
            raise ValueError("nodes must be positive and strictly increasing")
        if np.any(self.weights <= 0):
            raise ValueError("weights must be strictly positive")
        if self.kind not in ("log", "linear"):
            raise ValueError(f"unknown grid kind {self.kind!r}")

    # -- constructors -----------------------------------------------------
    @classmethod
    def log(cls, count: int = 2048, wmin: float = 1e-4, wmax: float = 1e2,
            align: float | None = 2.0) -> "RadialGrid":
        """Log-spaced cell grid.

        Parameters
        ----------
        count : int
            Number of cells (= nodes).
        wmin, wmax : float
            Requested band.  With ``align`` set, the band actually covered is
            the smallest aligned one containing ``[wmin, wmax]`` as far as
            ``count`` allows (it always contains ``wmin``).
        align : float or None
            If given (default 2), the cell width is ``ln(align)/M`` with an
            integer number ``M`` of cells per factor ``align``, and every
            power of ``align`` is a cell edge.  Dyadic shell boundaries
            ``2^{-i}`` then never split a cell.
        """
        if not (0 < wmin < wmax):
            raise ValueError("need 0 < wmin < wmax")
        count = int(count)
        span = np.log(wmax / wmin)
        if align is None:
            h = span / count
            lo = wmin
        else:
            per = int(np.floor(count * np.log(align) / span))
            if per < 1:
                raise ValueError("count too small for the requested alignment")
            h = np.log(align) / per
            k0 = np.floor(per * np.log(wmin) / np.log(align) + 1e-12)
            lo = float(align) ** (k0 / per)
        edges = lo * np.exp(h * np.arange(count + 1))
        return cls._from_log_edges(edges, h)

    @classmethod
    def dyadic(cls, per_octave: int, lo_exp: int, hi_exp: int) -> "RadialGrid":
        """Log grid over ``[2^lo_exp, 2^hi_exp]`` with ``per_octave`` cells per octave."""
        if hi_exp <= lo_exp or per_octave < 1:
            raise ValueError("need hi_exp > lo_exp and per_octave >= 1")
        count = per_octave * (hi_exp - lo_exp)
        h = np.log(2.0) / per_octave
        edges = 2.0 ** (lo_exp + np.arange(count + 1) / per_octave)
        return cls._from_log_edges(edges, h)

    @classmethod
    def _from_log_edges(cls, edges, h):
        nodes = edges[:-1] * np.exp(_node_offset(h))
        weights = h * nodes ** 3
        return cls(nodes=nodes, weights=weights, edges=edges, kind="log", h=float(h))

    @classmethod
    def linear(cls, count: int, wmin: float, wmax: float) -> "RadialGrid":
        """Uniform cell grid with exact cell weights ``(e_{k+1}^3-e_k^3)/3``."""
        edges = np.linspace(wmin, wmax, int(count) + 1)
        if edges[0] <= 0:
            raise ValueError("linear grid must start above zero")
        nodes = 0.5 * (edges[1:] + edges[:-1])
        weights = (edges[1:] ** 3 - edges[:-1] ** 3) / 3.0
        return cls(nodes=nodes, weights=weights, edges=edges, kind="linear",
                   h=float(edges[1] - edges[0]))

    @classmethod
    def from_config(cls, cfg: dict) -> "RadialGrid":
        """Build from a ``radial`` config block (keys count, min, max, kind)."""
        kind = cfg.get("kind", "log")
        count = int(cfg.get("count", 2048))
        wmin = float(cfg.get("min", 1e-4))
        wmax = float(cfg.get("max", 1e2))
        if kind == "log":
            return cls.log(count, wmin, wmax, align=cfg.get("align", 2.0))
        if kind == "dyadic":
            return cls.dyadic(int(cfg["per_octave"]), int(cfg["lo_exp"]), int(cfg["hi_exp"]))
        if kind == "linear":
            return cls.linear(count, wmin, wmax)
        raise ValueError(f"radial.kind: unknown grid kind {kind!r}")

    # -- derived quantities -------------------------------------------------
    @property
    def size(self) -> int:
        return self.nodes.size

    @property
    def wmin(self) -> float:
        return float(self.edges[0])

    @property
    def wmax(self) -> float:
        return float(self.edges[-1])

    def integrate(self, values, power: float = 0.0):
        """Integrate ``values(omega) * omega^(2+power) d omega`` over the band."""
        return np.asarray(values) @ (self.weights * self.nodes ** power)

    def check_invariants(self) -> dict:
        """Return the numerical invariant diagnostics of the grid."""
        exact = (self.wmax ** 3 - self.wmin ** 3) / 3.0
        out = {"constant_integral_relerr": abs(self.weights.sum() - exact) / exact}
        if self.kind == "log":
            ratios = self.nodes[1:] / self.nodes[:-1]
            out["ratio_spread"] = float(np.ptp(ratios) / ratios.mean())
        return out

    def same_as(self, other: "RadialGrid") -> bool:
        return self is other or (
            self.kind == other.kind and self.size == other.size
            and np.array_equal(self.nodes, other.nodes)
            and np.array_equal(self.weights, other.weights)
        )

    def index_shift(self, lam: float, tol: float = 1e-9) -> int | None:
        """Return ``k`` if ``lam = exp(k h)`` on a log grid, else ``None``."""
        if self.kind != "log":
            return None
        k = np.log(lam) / self.h
        kr = round(k)
        return int(kr) if abs(k - kr) < tol else None


# ---------------------------------------------------------------------------
# Angular modes
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ModeSet:
    """Ordered spherical-harmonic index set.

    Parameters
    ----------
    ell_max : int
        Largest angular momentum.
    zonal : bool
        If True only the ``m = 0`` modes are kept (``ell_max + 1`` entries).
        This sub-basis is closed under every operator of the package and is
        used for axisymmetric problems; the default full set holds
        ``(ell_max + 1)^2`` modes ordered ``l``-major, then ``m`` ascending.
    """

    ell_max: int
    zonal: bool = False

    def __post_init__(self):
        if int(self.ell_max) != self.ell_max or self.ell_max < 0:
            raise ValueError("ell_max must be a non-negative integer")

    @cached_property
    def modes(self) -> tuple:
        if self.zonal:
            return tuple((l, 0) for l in range(self.ell_max + 1))
        return tuple((l, m) for l in range(self.ell_max + 1) for m in range(-l, l + 1))

    @cached_property
    def ells(self) -> np.ndarray:
        a = np.array([l for l, _ in self.modes], dtype=int)
        a.setflags(write=False)
        return a

    @cached_property
    def ms(self) -> np.ndarray:
        a = np.array([m for _, m in self.modes], dtype=int)
        a.setflags(write=False)
        return a

    @cached_property
    def _lookup(self) -> dict:
        return {lm: i for i, lm in enumerate(self.modes)}

    @cached_property
    def mirror(self) -> np.ndarray:
        """Index of ``(l, -m)`` for every mode."""
        a = np.array([self._lookup[(l, -m)] for l, m in self.modes], dtype=int)
        a.setflags(write=False)
        return a

    def __len__(self) -> int:
        return len(self.modes)

    def index(self, l: int, m: int) -> int:
        """Row index of mode ``(l, m)``."""
        try:
            return self._lookup[(l, m)]
        except KeyError:
            raise KeyError(f"mode ({l}, {m}) not in this mode set") from None

    def same_as(self, other: "ModeSet") -> bool:
        return self.ell_max == other.ell_max and self.zonal == other.zonal


# ---------------------------------------------------------------------------
# Vectors
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class WaveFunction:
    """Vector of the discretized one-particle space.

    Parameters
    ----------
    grid : RadialGrid
    modes : ModeSet
    coeffs : ndarray, complex, shape ``(len(modes), grid.size)``
    """

    grid: RadialGrid
    modes: ModeSet
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=complex)
        if c.shape != (len(self.modes), self.grid.size):
            raise IncompatibleBasisError(
                f"coefficient shape {c.shape} does not match "
                f"({len(self.modes)}, {self.grid.size})")
        if not np.all(np.isfinite(c)):
            raise ValueError("coefficients must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, grid: RadialGrid, modes: ModeSet) -> "WaveFunction":
        return cls(grid, modes, np.zeros((len(modes), grid.size), complex))

    @classmethod
    def from_mode(cls, grid, modes, l, m, profile) -> "WaveFunction":
        """Vector with a single angular mode and radial ``profile``."""
        c = np.zeros((len(modes), grid.size), complex)
        c[modes.index(l, m)] = profile
        return cls(grid, modes, c)

    def with_coeffs(self, coeffs) -> "WaveFunction":
        return WaveFunction(self.grid, self.modes, coeffs)

    def compatible(self, other: "WaveFunction") -> bool:
        return self.grid.same_as(other.grid) and self.modes.same_as(other.modes)

    def _check(self, other):
        if not isinstance(other, WaveFunction) or not self.compatible(other):
            raise IncompatibleBasisError("vectors live on different grids or mode sets")

    def __add__(self, other):
        self._check(other)
        return self.with_coeffs(self.coeffs + other.coeffs)

    def __sub__(self, other):
        self._check(other)
        return self.with_coeffs(self.coeffs - other.coeffs)

    def __neg__(self):
        return self.with_coeffs(-self.coeffs)

    def __mul__(self, scalar):
        if isinstance(scalar, np.ndarray) and scalar.shape == (self.grid.size,):
            return self.with_coeffs(self.coeffs * scalar[None, :])
        return self.with_coeffs(self.coeffs * scalar)

    __rmul__ = __mul__

    def norm_squared(self) -> float:
        return float(np.sum(np.abs(self.coeffs) ** 2 * self.grid.weights[None, :]))

    def norm(self) -> float:
        return float(np.sqrt(self.norm_squared()))

    def radial_multiply(self, profile) -> "WaveFunction":
        """Multiply every mode by the radial function sampled at the nodes."""
        return self.with_coeffs(self.coeffs * np.asarray(profile)[None, :])


def _gamma_coeffs(coeffs, modes: ModeSet, hat: bool = False):
    sign = np.where((modes.ells + modes.ms) % 2 == 0, 1.0, -1.0)
    if hat:
        sign = sign * np.where(modes.ells % 2 == 0, 1.0, -1.0)
    return sign[:, None] * np.conj(coeffs[modes.mirror])


@dataclass(frozen=True, eq=False)
class TestVector:
    """Test function ``f = omega^{-1/2} h_hat + i omega^{1/2} g_hat``.

    ``h_hat`` and ``g_hat`` are the mode arrays of the Fourier transforms of
    real position-space functions ``h`` and ``g``; they satisfy the reality
    condition ``X_lm = (-1)^{l+m} conj(X_{l,-m})``.

    Parameters
    ----------
    wf : WaveFunction
    h_hat, g_hat : ndarray, complex, same shape as ``wf.coeffs``
    locality : object, optional
        Free-form region descriptor (support certificate) for the probe.
    generators : object, optional
        Position-space description of ``h`` and ``g`` (e.g. a dict of
        profile specs) used by independent position-space checks.
    """

    __test__ = False  # not a pytest class

    wf: WaveFunction
    h_hat: np.ndarray
    g_hat: np.ndarray
    locality: object = None
    generators: object = None

    def __post_init__(self):
        for name in ("h_hat", "g_hat"):
            arr = np.array(getattr(self, name), dtype=complex)
            if arr.shape != self.wf.coeffs.shape:
                raise IncompatibleBasisError(f"{name} shape mismatch")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_parts(cls, grid, modes, h_hat=None, g_hat=None, locality=None,
                   generators=None) -> "TestVector":
        shape = (len(modes), grid.size)
        h_hat = np.zeros(shape, complex) if h_hat is None else np.asarray(h_hat, complex)
        g_hat = np.zeros(shape, complex) if g_hat is None else np.asarray(g_hat, complex)
        w = grid.nodes[None, :]
        coeffs = h_hat / np.sqrt(w) + 1j * np.sqrt(w) * g_hat
        return cls(WaveFunction(grid, modes, coeffs), h_hat, g_hat, locality, generators)

    @property
    def grid(self):
        return self.wf.grid

    @property
    def modes(self):
        return self.wf.modes

    def reconstruction_error(self) -> float:
        """Relative mismatch between ``wf`` and the rebuilt ``(h, g)`` form."""
        w = self.grid.nodes[None, :]
        rebuilt = self.h_hat / np.sqrt(w) + 1j * np.sqrt(w) * self.g_hat
        scale = max(np.max(np.abs(self.wf.coeffs)), 1e-300)
        return float(np.max(np.abs(rebuilt - self.wf.coeffs)) / scale)

    def reality_defect(self) -> float:
        """Largest violation of the reality condition of ``h_hat``, ``g_hat``."""
        out = 0.0
        for arr in (self.h_hat, self.g_hat):
            d = np.max(np.abs(arr - _gamma_coeffs(arr, self.modes)), initial=0.0)
            out = max(out, float(d))
        return out

    def scaled(self, s: float) -> "TestVector":
        gens = None if self.generators is None else {
            k: (None if v is None else v.scaled(s, 1.0)) for k, v in self.generators.items()}
        return TestVector.from_parts(self.grid, self.modes, s * self.h_hat,
                                     s * self.g_hat, self.locality, gens)

    def __add__(self, other: "TestVector") -> "TestVector":
        return TestVector.from_parts(self.grid, self.modes, self.h_hat + other.h_hat,
                                     self.g_hat + other.g_hat, self.locality)


# ---------------------------------------------------------------------------
# Basic operations
# ---------------------------------------------------------------------------


def _wf(x) -> WaveFunction:
    return x.wf if isinstance(x, TestVector) else x


def inner_product(u, v) -> complex:
    """``<u, v> = sum_lm sum_j w_j conj(u_lm(omega_j)) v_lm(omega_j)``.

    Parameters
    ----------
    u, v : WaveFunction or TestVector
        Must share grid and mode set.

    Returns
    -------
    complex
    """
    u, v = _wf(u), _wf(v)
    u._check(v)
    return complex(np.sum(np.conj(u.coeffs) * v.coeffs * u.grid.weights[None, :]))


def symplectic_form(f, g) -> float:
    """``sigma(f, g) = -Im <f, g>``."""
    return -inner_product(f, g).imag


def apply_gamma(v, hat: bool = False) -> WaveFunction:
    """Position-space complex conjugation in the mode basis.

    ``(Gamma v)_lm = (-1)^{l+m} conj(v_{l,-m})``.  With ``hat=True`` the
    momentum-space conjugation ``Gamma o (-1)^l`` is applied instead, i.e.
    ``(-1)^m conj(v_{l,-m})``.
    """
    v = _wf(v)
    return v.with_coeffs(_gamma_coeffs(v.coeffs, v.modes, hat=hat))


def shell_project(v, eps: float) -> WaveFunction:
    """Keep the coefficients at nodes ``omega_j >= eps`` (``P_eps``)."""
    v = _wf(v)
    keep = v.grid.nodes >= eps
    return v.with_coeffs(np.where(keep[None, :], v.coeffs, 0.0))


def _interp_log(values, grid: RadialGrid, targets):
    """Monotone cubic interpolation of complex rows in ``ln omega``.

    Modulus and unwrapped phase are interpolated separately.  Targets above
    the band give zero; targets below the band use a power-law continuation
    of the modulus through the two lowest nodes and a constant phase.
    """
    values = np.asarray(values, complex)
    t = np.log(grid.nodes)
    tt = np.log(targets)
    mod = np.abs(values)
    phase = np.unwrap(np.angle(values), axis=1)
    out = np.zeros((values.shape[0], tt.size), complex)
    inside = (tt >= t[0]) & (tt <= t[-1])
    if np.any(inside):
        # tiny secant slopes overflow the harmonic mean inside PCHIP; the limit slope 0 is correct
        with np.errstate(over="ignore"):
            pm = PchipInterpolator(t, mod.T, axis=0, extrapolate=False)(tt[inside]).T
            pp = PchipInterpolator(t, phase.T, axis=0, extrapolate=False)(tt[inside]).T
        out[:, inside] = pm * np.exp(1j * pp)
    below = tt < t[0]
    if np.any(below):
        with np.errstate(divide="ignore", invalid="ignore"):
            slope = np.where((mod[:, 0] > 0) & (mod[:, 1] > 0),
                             np.log(mod[:, 1] / np.where(mod[:, 0] > 0, mod[:, 0], 1.0))
                             / (t[1] - t[0]), 0.0)
        # square integrability against omega^2 d omega bounds the exponent below
        slope = np.clip(slope, -1.5, 8.0)
        pm = mod[:, :1] * np.exp(slope[:, None] * (tt[below] - t[0])[None, :])
        out[:, below] = pm * np.exp(1j * phase[:, :1])
    return out


def _dilate_rows(values, grid: RadialGrid, lam: float, power: float, warn: bool = True):
    """Return ``lam^power * values(lam * omega)`` sampled on the grid."""
    k = grid.index_shift(lam)
    values = np.asarray(values, complex)
    if k is not None:
        out = np.zeros_like(values)
        n = grid.size
        if k >= 0:
            out[:, : n - k] = values[:, k:]
        else:
            out[:, -k:] = values[:, : n + k]
            if np.any(values[:, 0] != 0):
                out[:, :-k] = _interp_log(values, grid, grid.nodes[:-k] * lam)
        result = lam ** power * out
    else:
        result = lam ** power * _interp_log(values, grid, lam * grid.nodes)
    if warn:
        lost = lam * grid.nodes[-1] > grid.nodes[-1] and np.any(
            np.abs(values[:, -1]) > 1e-8 * max(np.abs(values).max(), 1e-300))
        extrap = lam * grid.nodes[0] < grid.nodes[0] and np.any(values[:, 0] != 0)
        if lost or extrap:
            warnings.warn(
                f"dilation by {lam:g} leaves the resolvable band "
                f"[{grid.wmin:.3g}, {grid.wmax:.3g}]", ResolutionWarning, stacklevel=3)
    return result


def dilate(f, lam: float):
    """Dilation ``f_lam(k) = lam^{3/2} f(lam k)``.

    Parameters
    ----------
    f : WaveFunction or TestVector
        A :class:`TestVector` is dilated through its parts,
        ``h_lam(omega) = lam h(lam omega)``, ``g_lam(omega) = lam^2 g(lam omega)``.
    lam : float
        Positive dilation factor.  Exact index shifts are used whenever
        ``lam`` is an integer power of the grid ratio.

    Returns
    -------
    WaveFunction or TestVector
    """
    if not lam > 0:
        raise ValueError("dilation factor must be positive")
    if isinstance(f, TestVector):
        return dilate_test_vector(f, lam)
    if lam == 1:
        return f
    return f.with_coeffs(_dilate_rows(f.coeffs, f.grid, lam, 1.5))


def dilate_test_vector(f: TestVector, lam: float) -> TestVector:
    """Dilate a :class:`TestVector` part by part (see :func:`dilate`)."""
    if not lam > 0:
        raise ValueError("dilation factor must be positive")
    if lam == 1:
        return f
    h = _dilate_rows(f.h_hat, f.grid, lam, 1.0)
    g = _dilate_rows(f.g_hat, f.grid, lam, 2.0)
    gens = None
    if f.generators is not None:
        # h_lam(x) = lam^-2 h(x/lam),  g_lam(x) = lam^-1 g(x/lam)
        powers = {"h": -2.0, "g": -1.0}
        gens = {k: (None if v is None else v.scaled(lam ** powers[k], lam))
                for k, v in f.generators.items()}
    return TestVector.from_parts(f.grid, f.modes, h, g, f.locality, gens)


def infrared_tail(values, grid: RadialGrid):
    """Integral of ``values(omega) d omega`` over ``[0, omega_min]``.

    The integrand (last axis over nodes) is modelled as the even polynomial
    ``a + b omega^2 + c omega^4`` through the three lowest nodes.  This closes
    the band for pairings with a finite, non-zero ``omega -> 0`` limit such as
    ``\\int d^3k \\hat\\rho \\hat h/\\omega^2``.
    """
    values = np.asarray(values)
    w = grid.nodes[:3]
    V = np.vstack([np.ones(3), w ** 2, w ** 4]).T
    coef = np.linalg.solve(V, values[..., :3].T if values.ndim > 1 else values[:3])
    x0 = grid.wmin
    moments = np.array([x0, x0 ** 3 / 3.0, x0 ** 5 / 5.0])
    return moments @ coef


def zero_limit(values, grid: RadialGrid):
    """Richardson value at ``omega = 0`` of a smooth even radial function."""
    values = np.asarray(values)
    w = grid.nodes[:3]
    V = np.vstack([np.ones(3), w ** 2, w ** 4]).T
    return np.linalg.solve(V, values[..., :3].T if values.ndim > 1 else values[:3])[0]


# ---------------------------------------------------------------------------
# Radial Fourier transforms
# ---------------------------------------------------------------------------


def _check_ell(ell, ell_max=None):
    if int(ell) != ell or ell < 0 or (ell_max is not None and ell > ell_max):
        raise ValueError(f"angular momentum {ell} out of range")


def radial_fourier(H, r, ell: int, omega, r_weights=None, ell_max: int | None = None):
    """Radial part of the 3D Fourier transform of ``H(r) Y_lm``.

    Parameters
    ----------
    H : array_like
        Profile samples; a 2D array transforms several profiles at once
        (last axis over ``r``).
    r : array_like
        Position radii.  Without ``r_weights`` they must be uniform and start
        at 0 (trapezoid rule, spectrally accurate for smooth 3D functions).
    ell : int
    omega : array_like
        Output frequencies.
    r_weights : array_like, optional
        Custom quadrature weights for ``\\int dr`` (e.g. Gauss--Legendre).

    Returns
    -------
    ndarray
        ``4 pi (-i)^l \\int H(r) j_l(omega r) r^2 dr``.
    """
    _check_ell(ell, ell_max)
    r = np.asarray(r, float)
    H = np.asarray(H)
    if r_weights is None:
        dr = np.diff(r)
        if abs(r[0]) > 1e-14 or np.ptp(dr) > 1e-9 * dr.mean():
            raise ValueError("default rule needs a uniform radial grid starting at 0")
        r_weights = np.full(r.size, dr[0])
        r_weights[0] *= 0.5
        r_weights[-1] *= 0.5
    if not np.any(H):
        return np.zeros(H.shape[:-1] + (np.size(omega),), complex)
    kern = spherical_jn(ell, np.outer(r, omega)) * (r ** 2 * r_weights)[:, None]
    return 4.0 * np.pi * (-1j) ** ell * (H @ kern)


def inverse_radial_fourier(Hhat, grid: RadialGrid, ell: int, r):
    """Inverse of :func:`radial_fourier` on a momentum grid.

    ``H(r) = (i^l / 2 pi^2) \\int \\hat H(omega) j_l(omega r) omega^2 d omega``.
    """
    _check_ell(ell)
    r = np.asarray(r, float)
    kern = spherical_jn(ell, np.outer(grid.nodes, r)) * grid.weights[:, None]
    return (1j) ** ell / (2.0 * np.pi ** 2) * (np.asarray(Hhat) @ kern)


# ---------------------------------------------------------------------------
# Angular quadrature
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class AngularQuadrature:
    """Gauss--Legendre in ``cos theta`` times uniform azimuth.

    Integrates products of two harmonics up to degree ``ell_max`` exactly.
    """

    ell_max: int
    n_theta: int = field(default=0)
    n_phi: int = field(default=0)

    def __post_init__(self):
        if self.n_theta == 0:
            object.__setattr__(self, "n_theta", self.ell_max + 2)
        if self.n_phi == 0:
            object.__setattr__(self, "n_phi", 2 * self.ell_max + 3)

    @cached_property
    def points(self):
        x, wx = roots_legendre(self.n_theta)
        phi = 2.0 * np.pi * np.arange(self.n_phi) / self.n_phi
        theta = np.arccos(x)
        T, P = np.meshgrid(theta, phi, indexing="ij")
        W = np.repeat(wx[:, None], self.n_phi, axis=1) * (2.0 * np.pi / self.n_phi)
        return T.ravel(), P.ravel(), W.ravel()

    def unit_vectors(self):
        T, P, _ = self.points
        return np.stack([np.sin(T) * np.cos(P), np.sin(T) * np.sin(P), np.cos(T)], axis=1)

    def harmonics(self, modes: ModeSet) -> np.ndarray:
        """Matrix ``Y[mode, point]``."""
        T, P, _ = self.points
        return np.array([sph_harm_y(l, m, T, P) for l, m in modes.modes])

    def project(self, samples, modes: ModeSet):
        """Mode coefficients of angular samples (last axis over points)."""
        _, _, W = self.points
        return (np.asarray(samples) * W) @ np.conj(self.harmonics(modes)).T

    def synthesize(self, coeffs, modes: ModeSet):
        return np.asarray(coeffs).T @ self.harmonics(modes) if np.ndim(coeffs) == 2 \
            else np.asarray(coeffs) @ self.harmonics(modes)


def real_space_gamma_check(v: WaveFunction, node: int = 0, quad: AngularQuadrature | None = None):
    """Independent check of the coefficient form of ``Gamma``.

    Samples ``conj(v(-k))`` on an angular quadrature at radial ``node`` and
    projects it back onto the modes.

    Returns
    -------
    ndarray
        Mode coefficients of ``conj(v(-k))`` at the node.
    """
    quad = quad or AngularQuadrature(v.modes.ell_max)
    T, P, _ = quad.points
    Tm, Pm = np.pi - T, np.mod(P + np.pi, 2 * np.pi)
    Ym = np.array([sph_harm_y(l, m, Tm, Pm) for l, m in v.modes.modes])
    samples = np.conj(v.coeffs[:, node] @ Ym)
    return quad.project(samples, v.modes)


# ---------------------------------------------------------------------------
# Batched special-function tables
# ---------------------------------------------------------------------------


def spherical_jn_table(ell_max: int, x, chunk: int = 4096) -> np.ndarray:
    """``j_l(x)`` for all ``0 <= l <= ell_max`` at once.

    Miller's downward recurrence ``j_{l-1} = (2l+1)/x j_l - j_{l+1}``,
    normalized with ``sum_l (2l+1) j_l(x)^2 = 1``.  This is stable for every
    ``x > 0`` and much faster than per-order library calls when a whole table
    of orders is needed.

    Parameters
    ----------
    ell_max : int
    x : array_like
        Non-negative arguments (any shape).

    Returns
    -------
    ndarray, shape ``(ell_max + 1,) + x.shape``
    """
    x = np.asarray(x, float)
    flat = x.ravel()
    out = np.zeros((ell_max + 1, flat.size))
    for s in range(0, flat.size, chunk):
        out[:, s:s + chunk] = _jn_chunk(ell_max, flat[s:s + chunk])
    return out.reshape((ell_max + 1,) + x.shape)


def _jn_chunk(L, x):
    res = np.zeros((L + 1, x.size))
    small = x < 1e-4
    if np.any(small):
        # j_l(x) = x^l / (2l+1)!! (1 - x^2 / (2 (2l+3))) + O(x^4 relative)
        xs = x[small]
        ls = np.arange(L + 1)[:, None]
        logdf = np.concatenate([[0.0], np.cumsum(np.log(2 * np.arange(1, L + 1) + 1.0))])[:, None]
        with np.errstate(divide="ignore"):
            lx = np.log(np.where(xs > 0, xs, 1.0))[None, :]
            val = np.exp(ls * lx - logdf) * (1 - xs[None, :] ** 2 / (2 * (2 * ls + 3)))
        val[1:, xs == 0] = 0.0
        val[0, xs == 0] = 1.0
        res[:, small] = val
    big_x = ~small
    if not np.any(big_x):
        return res
    xs = x[big_x]
    m = max(L, int(np.ceil(xs.max())))
    start = m + int(np.sqrt(60.0 * m)) + 12
    sub = np.zeros((L + 1, xs.size))
    logs = np.zeros((L + 1, xs.size))   # accumulated rescaling when each row was stored
    cum = np.zeros(xs.size)
    jp1 = np.zeros(xs.size)          # j_{l+1}
    j = np.ones(xs.size)             # j_l at l = start (arbitrary scale; rows are rescaled below)
    norm = (2 * start + 1) * j ** 2
    inv = 1.0 / xs
    for l in range(start, 0, -1):
        jm1 = (2 * l + 1) * inv * j - jp1
        jp1, j = j, jm1
        if l - 1 <= L:
            sub[l - 1] = j
            logs[l - 1] = cum
        norm += (2 * (l - 1) + 1) * j * j
        if (l & 3) == 0:
            big = np.abs(j) > 1e60
            if big.any():
                f = np.where(big, 1e-60, 1.0)
                j *= f
                jp1 *= f
                norm *= f * f
                cum += np.where(big, -60.0 * np.log(10.0), 0.0)
    sub *= np.exp(cum[None, :] - logs) / np.sqrt(norm)[None, :]
    res[:, big_x] = sub
    return res


def legendre_table(ell_max: int, x) -> np.ndarray:
    """Legendre polynomials ``P_l(x)`` for ``0 <= l <= ell_max`` (upward recurrence)."""
    x = np.asarray(x, float)
    out = np.empty((ell_max + 1,) + x.shape)
    out[0] = 1.0
    if ell_max >= 1:
        out[1] = x
    for l in range(1, ell_max):
        out[l + 1] = ((2 * l + 1) * x * out[l] - l * out[l - 1]) / (l + 1)
    return out


def bessel_moments(ell_max: int, omega, r, W, chunk_points: int = 8192) -> np.ndarray:
    """Weighted Bessel sums ``M[p, l, j] = sum_k W[p, k] j_l(omega_j r_k)``.

    Used for radial transforms of many angular sectors at once; memory is
    bounded by processing ``omega`` in chunks.

    Parameters
    ----------
    ell_max : int
    omega : array_like, shape (n_omega,)
    r : array_like, shape (n_r,)
    W : array_like, shape (P, n_r)

    Returns
    -------
    ndarray, shape (P, ell_max + 1, n_omega)
    """
    omega = np.asarray(omega, float)
    r = np.asarray(r, float)
    W = np.atleast_2d(np.asarray(W, float))
    out = np.zeros((W.shape[0], ell_max + 1, omega.size))
    step = max(1, chunk_points // max(r.size, 1))
    for s in range(0, omega.size, step):
        om = omega[s:s + step]
        tab = spherical_jn_table(ell_max, np.outer(om, r))      # (L+1, c, n_r)
        out[:, :, s:s + step] = np.einsum("lcr,pr->plc", tab, W, optimize=True)
    return out
