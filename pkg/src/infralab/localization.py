"""Charges localized in spacelike cones in front of a KPR background.

Pipeline
--------
1. :func:`build_chi` builds an angular profile ``chi^C = 1 - a phi`` with a
   smooth bump ``phi`` supported strictly inside the cone ``C`` and ``a``
   chosen so that ``<Y_00, chi^C> = 0``; hence ``chi^C = 1`` outside ``C``.
2. :func:`build_u_c` forms ``Phi^C(x) = Phi(|x|) chi^C(x_hat)`` from a
   spherically symmetric potential ``Phi`` (:class:`RadialChargeProfile`)
   and transforms ``u^C = FT[-Laplace Phi^C]`` per angular sector.  With
   ``-Laplace Phi^C = rho chi^C + Phi L^2 chi^C / r^2`` and
   ``Phi = q/(4 pi r)`` outside ``r2`` the transform splits into the
   degree-zero homogeneous part

   ``eta_lm = q l(l+1) chi_lm (-i)^l I_l``,
   ``I_l = \\int_0^inf j_l(x)/x dx = sqrt(pi) Gamma(l/2) / (4 Gamma((l+3)/2))``

   and the transform ``R`` of a compactly supported remainder,

   ``R_lm(w) = chi_lm 4 pi (-i)^l \\int_0^{r2} [rho r^2 + l(l+1)(Phi - q/(4 pi r))] j_l(w r) dr``,

   evaluated by Gauss--Legendre quadrature on ``[0, r1]`` and ``[r1, r2]``.
3. ``v_n = i omega^{-3/2} P_{eps_n} u^C`` approximates the charge on test
   functions supported outside ``C`` (:func:`approx_linear_form`), and
   ``v_T = lim T v_n`` (:func:`build_intertwiner`) satisfies
   ``Im<v_T, T f> = -l_gamma(f)`` on such test functions
   (:func:`verify_intertwining`).

The angular problems used here are axisymmetric about the cone axis, so the
default mode set is the zonal one (``m = 0`` only, axis ``+z``).  Full mode
sets and arbitrary axes are supported through the addition theorem.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, roots_legendre, sph_harm_y

from .charges import (Charge, RadialChargeProfile, ShellProfile, kappa, linear_form,
                      scaling_sequence)
from .hilbert import (ModeSet, RadialGrid, TestVector, WaveFunction, _gamma_coeffs,
                      bessel_moments, inner_product, legendre_table, shell_project)
from .kpr import KprOperator, KprSchedule, decay_verdict

__all__ = [
    "ConstructionError",
    "TruncationError",
    "RadialChargeProfile",
    "BumpSpec",
    "ConeProfile",
    "USplit",
    "ErrorTable",
    "ConvergenceTrace",
    "IntertwinerResult",
    "ResidualTable",
    "VerdictReport",
    "ObstructionReport",
    "ShellBandProbe",
    "build_chi",
    "build_u_c",
    "direct_low_frequency_sample",
    "approx_linear_form",
    "build_intertwiner",
    "verify_intertwining",
    "opposite_cone_experiment",
    "vacuum_obstruction",
    "standard_probes",
    "negative_control_probe",
    "probe_vectors",
    "inverse_r_moments",
    "default_localization_setup",
]

SQRT4PI = math.sqrt(4.0 * math.pi)
Z_AXIS = (0.0, 0.0, 1.0)


class ConstructionError(ValueError):
    """A cone profile cannot be built with the requested bump."""


class TruncationError(ValueError):
    """The angular truncation does not resolve ``L^2 chi``."""


# ---------------------------------------------------------------------------
# Angular helpers
# ---------------------------------------------------------------------------


def _unit(axis) -> np.ndarray:
    a = np.asarray(axis, float)
    n = np.linalg.norm(a)
    if a.shape != (3,) or n == 0:
        raise ValueError("axis must be a non-zero 3-vector")
    return a / n


def _is_z(axis) -> bool:
    return bool(np.allclose(_unit(axis), Z_AXIS, atol=1e-14))


def _y_l0(ell_max: int, theta) -> np.ndarray:
    """``Y_l0(theta)`` for ``l = 0..ell_max`` (shape ``(L+1,) + theta.shape``)."""
    P = legendre_table(ell_max, np.cos(theta))
    norm = np.sqrt((2 * np.arange(ell_max + 1) + 1) / (4 * np.pi))
    return P * norm.reshape((-1,) + (1,) * np.ndim(theta))


def zonal_coefficients(func, ell_max: int, theta_lo: float = 0.0, theta_hi: float = np.pi,
                       n: int | None = None) -> np.ndarray:
    """``c_l = 2 pi \\int func(theta) Y_l0(theta) sin(theta) d theta`` over ``[lo, hi]``.

    ``func`` must vanish outside ``[theta_lo, theta_hi]``.  Gauss--Legendre in
    ``theta`` with ``n`` nodes (default ``2 ell_max + 200``).
    """
    n = n or 2 * ell_max + 200
    x, w = roots_legendre(n)
    half = 0.5 * (theta_hi - theta_lo)
    th = theta_lo + half * (x + 1.0)
    vals = func(th) * np.sin(th) * w * half * 2 * np.pi
    return _y_l0(ell_max, th) @ vals


def _axis_map(c_ell, axis, modes: ModeSet) -> np.ndarray:
    """Mode array of the zonal function with coefficients ``c_ell`` about ``axis``.

    Addition theorem: ``<Y_lm, F> = c_l sqrt(4 pi/(2l+1)) conj(Y_lm(n))``.
    """
    c = np.asarray(c_ell)
    out = np.zeros(len(modes), complex)
    L = min(modes.ell_max, c.size - 1)
    if modes.zonal or _is_z(axis):
        if not _is_z(axis):
            raise ValueError("a zonal mode set only represents profiles about +z")
        for l in range(L + 1):
            out[modes.index(l, 0)] = c[l]
        return out
    n = _unit(axis)
    th, ph = math.acos(np.clip(n[2], -1, 1)), math.atan2(n[1], n[0])
    for i, (l, m) in enumerate(modes.modes):
        if l <= L:
            out[i] = c[l] * math.sqrt(4 * np.pi / (2 * l + 1)) * np.conj(sph_harm_y(l, m, th, ph))
    return out


def _angle_to(axis, points) -> np.ndarray:
    p = np.atleast_2d(np.asarray(points, float))
    r = np.linalg.norm(p, axis=1)
    c = p @ _unit(axis) / np.where(r > 0, r, 1.0)
    return np.arccos(np.clip(c, -1.0, 1.0))


def _bump(t) -> np.ndarray:
    """``exp(-1/(1 - t^2))`` for ``|t| < 1``, else 0."""
    t = np.asarray(t, float)
    inside = np.abs(t) < 1
    tt = np.where(inside, t, 0.0)
    return np.where(inside, np.exp(-1.0 / (1.0 - tt ** 2)), 0.0)


# ---------------------------------------------------------------------------
# Cone profile
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BumpSpec:
    """Interior bump ``phi(theta) = amplitude exp(-1/(1 - (theta/theta_s)^2))``.

    Parameters
    ----------
    support_fraction : float
        ``theta_s / opening``; must lie in ``(0, 1)`` so that the bump is
        supported strictly inside the cone.
    amplitude : float
        Overall factor ``c``; ``0`` is rejected (no mean to normalize).
    """

    support_fraction: float = 0.95
    amplitude: float = 1.0

    @classmethod
    def from_dict(cls, d: dict | None) -> "BumpSpec":
        d = dict(d or {})
        return cls(float(d.get("support_fraction", 0.95)), float(d.get("amplitude", 1.0)))

    def to_dict(self) -> dict:
        return {"support_fraction": self.support_fraction, "amplitude": self.amplitude}


@dataclass(frozen=True, eq=False)
class ConeProfile:
    """Angular profile ``chi^C`` of a spacelike cone.

    Parameters
    ----------
    axis : ndarray, shape (3,)
    opening : float
        Half-angle in radians.
    chi : ndarray, complex, shape (len(modes),)
        ``Y_lm`` coefficients up to ``modes.ell_max``.
    bump : BumpSpec
    modes : ModeSet
    a : float
        Normalization of ``chi = 1 - a phi``.
    spectrum : ndarray
        Zonal coefficients of ``chi`` about the axis up to a check order
        beyond ``modes.ell_max`` (used for truncation control).
    parity : {None, "even"}
        ``"even"`` marks the even part ``chi^{+-C}`` (profile of ``C u -C``).
    """

    axis: np.ndarray
    opening: float
    chi: np.ndarray
    bump: BumpSpec
    modes: ModeSet
    a: float
    spectrum: np.ndarray
    parity: str | None = None

    @property
    def theta_support(self) -> float:
        return self.bump.support_fraction * self.opening

    def phi(self, theta) -> np.ndarray:
        return self.bump.amplitude * _bump(np.asarray(theta, float) / self.theta_support)

    def value_at_angle(self, theta) -> np.ndarray:
        """Exact ``chi`` as a function of the angle to the axis."""
        theta = np.asarray(theta, float)
        v = 1.0 - self.a * self.phi(theta)
        if self.parity == "even":
            v = 0.5 * (v + 1.0 - self.a * self.phi(np.pi - theta))
        return v

    def value(self, points) -> np.ndarray:
        """Exact ``chi`` at directions (Cartesian points, shape ``(N, 3)``)."""
        return self.value_at_angle(_angle_to(self.axis, points))

    def series(self, points) -> np.ndarray:
        """Truncated ``sum_lm chi_lm Y_lm`` at directions (real part)."""
        p = np.atleast_2d(np.asarray(points, float))
        r = np.linalg.norm(p, axis=1)
        th = np.arccos(np.clip(p[:, 2] / r, -1, 1))
        ph = np.arctan2(p[:, 1], p[:, 0])
        if self.modes.zonal:
            Y = _y_l0(self.modes.ell_max, th)
        else:
            Y = np.array([sph_harm_y(l, m, th, ph) for l, m in self.modes.modes])
        return (self.chi @ Y).real

    def even_part(self) -> "ConeProfile":
        """``chi^{+-C}(k) = (chi(k) + chi(-k))/2``: odd ``l`` removed."""
        odd = self.modes.ells % 2 == 1
        chi = np.where(odd, 0.0, self.chi)
        spec = np.array(self.spectrum, copy=True)
        spec[1::2] = 0.0
        return ConeProfile(self.axis, self.opening, chi, self.bump, self.modes, self.a, spec, "even")

    def l2_tail_mass(self, ell_max: int | None = None) -> float:
        """Squared relative mass of ``L^2 chi`` above ``ell_max``."""
        L = self.modes.ell_max if ell_max is None else ell_max
        l = np.arange(self.spectrum.size)
        p = np.abs(l * (l + 1) * self.spectrum) ** 2
        tot = p.sum()
        return float(p[L + 1:].sum() / tot) if tot > 0 else 0.0

    def diagnostics(self, n_check: int = 64) -> dict:
        """Invariant checks.

        Returns
        -------
        dict
            ``y00``: ``|<Y_00, chi>|`` by an independent two-panel quadrature
            of the exact profile; ``y00_coefficient``: the stored coefficient;
            ``outside_exact``: ``max |chi - 1|`` of the exact profile on
            angular nodes outside the cone(s); ``outside_series``: the same
            for the truncated series; ``tail_mass``: :meth:`l2_tail_mass`;
            ``reality``: largest violation of the real-function condition;
            ``decay_ratio``: ratio of the coefficient tail norms at
            ``L`` and ``L/2`` (tiny for smooth profiles).
        """
        ts = self.theta_support
        y00 = 0.0
        for lo, hi in ((0.0, ts), (ts, np.pi - ts), (np.pi - ts, np.pi)):
            x, w = roots_legendre(401)
            th = lo + 0.5 * (hi - lo) * (x + 1)
            y00 += float(np.sum(self.value_at_angle(th) * np.sin(th) * w) * 0.5 * (hi - lo))
        y00 = abs(y00 * 2 * np.pi / SQRT4PI)
        th = np.linspace(0.0, np.pi, 4 * n_check + 1)
        outside = th > self.opening
        if self.parity == "even":
            outside &= th < np.pi - self.opening
        ex = float(np.max(np.abs(self.value_at_angle(th[outside]) - 1.0)))
        pts = np.stack([np.sin(th), 0 * th, np.cos(th)], axis=1)
        if not _is_z(self.axis):
            pts = _rotate_to(self.axis, pts)
        ser = float(np.max(np.abs(self.series(pts[outside]) - 1.0)))
        mods = self.modes
        real_def = float(np.max(np.abs(self.chi - _gamma_coeffs(self.chi[:, None], mods,
                                                                hat=True)[:, 0])))
        spec = np.abs(self.spectrum[: mods.ell_max + 1])
        L = mods.ell_max
        t_half = np.sqrt(np.sum(spec[L // 2:] ** 2))
        t_full = np.sqrt(np.sum(np.abs(self.spectrum[L:]) ** 2))
        return {"y00": y00, "y00_coefficient": float(abs(self.chi[0])),
                "outside_exact": ex, "outside_series": ser, "tail_mass": self.l2_tail_mass(),
                "reality": real_def,
                "decay_ratio": float(t_full / t_half) if t_half > 0 else 0.0}


def _rotate_to(axis, pts) -> np.ndarray:
    """Rotate points so that ``+z`` goes to ``axis`` (Rodrigues)."""
    n = _unit(axis)
    z = np.array(Z_AXIS)
    v = np.cross(z, n)
    s, c = np.linalg.norm(v), float(z @ n)
    if s < 1e-15:
        return pts if c > 0 else pts * np.array([1, -1, -1])
    K = np.array([[0, -v[2], v[1]], [v[2], 0, -v[0]], [-v[1], v[0], 0]]) / s
    Rm = np.eye(3) + s * K + (1 - c) * K @ K
    return pts @ Rm.T


def build_chi(axis=Z_AXIS, opening: float = math.radians(30.0), bump_params=None,
              modes: ModeSet | None = None, ell_check: int | None = None) -> ConeProfile:
    """Cone profile ``chi^C = 1 - a phi`` with ``<Y_00, chi^C> = 0``.

    Parameters
    ----------
    axis : array_like, shape (3,)
    opening : float
        Half-angle in radians, in ``(0, pi/2)``.
    bump_params : BumpSpec or dict, optional
    modes : ModeSet, optional
        Default ``ModeSet(400, zonal=True)``.
    ell_check : int, optional
        Order up to which the spectrum is computed for truncation control
        (default ``2 * ell_max``).

    Returns
    -------
    ConeProfile

    Raises
    ------
    ConstructionError
        If the bump would leak outside the cone (``support_fraction >= 1``)
        or vanishes identically.
    """
    if not (0.0 < opening < np.pi / 2):
        raise ConstructionError("opening must lie in (0, pi/2)")
    bump = bump_params if isinstance(bump_params, BumpSpec) else BumpSpec.from_dict(bump_params)
    if not (0.0 < bump.support_fraction < 1.0):
        raise ConstructionError("bump support leaks outside the cone "
                                f"(support fraction {bump.support_fraction} not in (0, 1))")
    if bump.amplitude == 0.0:
        raise ConstructionError("bump vanishes identically: <Y_00, phi> = 0")
    modes = modes or ModeSet(400, zonal=True)
    L2 = ell_check or 2 * modes.ell_max
    ts = bump.support_fraction * opening
    phi = lambda th: bump.amplitude * _bump(th / ts)              # noqa: E731
    p = zonal_coefficients(phi, L2, 0.0, ts)
    a = SQRT4PI / p[0]
    spectrum = -a * p
    spectrum[0] = 0.0          # sqrt(4 pi) - a p_0 = 0 by the choice of a
    chi = _axis_map(spectrum, axis, modes)
    return ConeProfile(_unit(axis), float(opening), chi, bump, modes, float(a), spectrum)


# ---------------------------------------------------------------------------
# u^C and its split
# ---------------------------------------------------------------------------


def inverse_r_moments(ell_max: int) -> np.ndarray:
    """``I_l = \\int_0^inf j_l(x)/x dx = sqrt(pi) Gamma(l/2) / (4 Gamma((l+3)/2))``, ``I_0 = 0`` (unused)."""
    l = np.arange(ell_max + 1, dtype=float)
    out = np.zeros(ell_max + 1)
    out[1:] = math.sqrt(math.pi) / 4 * np.exp(gammaln(l[1:] / 2) - gammaln((l[1:] + 3) / 2))
    return out


def _chi_per_ell(chi, modes: ModeSet, ell: int):
    return chi[modes.ells == ell]


@dataclass(frozen=True, eq=False)
class USplit:
    """``u^C = eta(k_hat) + R(k)`` on a grid.

    Attributes
    ----------
    u_c : WaveFunction
        ``u^C`` sampled at the grid nodes.
    eta : ndarray, complex, shape (len(modes),)
        Mode coefficients of the homogeneous part.
    R : ndarray, complex, shape (len(modes), grid.size)
        Remainder at the nodes.
    R_at_0 : float
        ``R(0) = \\int rho chi d^3x`` (the ``l = 0`` coefficient at ``omega = 0``).
    tail_mass : float
        Squared relative mass of ``L^2 chi`` beyond the truncation.
    """

    u_c: WaveFunction
    eta: np.ndarray
    R: np.ndarray
    R_at_0: float
    tail_mass: float
    profile: RadialChargeProfile
    cone: ConeProfile | None

    def split_defect(self, n_nodes: int = 3, n_theta: int = 181) -> dict:
        """``max_theta |u(omega_j) - eta - R(0)|`` at the lowest nodes and a fitted ``c``."""
        modes, grid = self.u_c.modes, self.u_c.grid
        th = np.linspace(0, np.pi, n_theta)
        if not modes.zonal:
            raise ValueError("split_defect is implemented for zonal mode sets")
        Y = _y_l0(modes.ell_max, th)
        d = []
        for j in range(n_nodes):
            # u - eta = R exactly; R is used directly to avoid cancellation
            diff = self.R[:, j] @ Y - self.R_at_0 / SQRT4PI
            d.append(float(np.max(np.abs(diff))))
        w = grid.nodes[:n_nodes]
        c = float(np.max(np.array(d) / w))
        return {"omega": w.tolist(), "defect": d, "c": c}


def _radial_rules(profile: RadialChargeProfile, n_inner: int, n_shell: int):
    x, w = roots_legendre(n_inner)
    r_in = 0.5 * profile.r1 * (x + 1)
    w_in = 0.5 * profile.r1 * w
    r_sh, w_sh = profile.radial_rule(n_shell)
    return r_in, w_in, r_sh, w_sh


def build_u_c(profile: RadialChargeProfile, cone: ConeProfile | None, grid: RadialGrid,
              modes: ModeSet | None = None, n_inner: int = 64, n_shell: int = 160,
              tail_tol: float = 1e-6, chi_override=None) -> USplit:
    """Transform ``-Laplace(Phi chi^C)`` per angular sector and split it.

    Parameters
    ----------
    profile : RadialChargeProfile
    cone : ConeProfile or None
        ``None`` is allowed only together with ``chi_override``.
    grid : RadialGrid
    modes : ModeSet, optional
        Defaults to ``cone.modes``.
    n_inner, n_shell : int
        Gauss--Legendre orders on ``[0, r1]`` and ``[r1, r2]``.
    tail_tol : float
        Largest admissible squared relative mass of ``L^2 chi`` above
        ``ell_max``.
    chi_override : ndarray, optional
        Test-only angular coefficients replacing the cone profile (e.g. the
        non-admissible ``chi = 1``: ``{(0, 0): sqrt(4 pi)}``); bypasses the
        cone checks.

    Returns
    -------
    USplit

    Raises
    ------
    TruncationError
        If the tail mass exceeds ``tail_tol``.
    """
    modes = modes or (cone.modes if cone is not None else None)
    if modes is None:
        raise ValueError("a mode set is required")
    if chi_override is not None:
        chi = np.zeros(len(modes), complex)
        if isinstance(chi_override, dict):
            for (l, m), c in chi_override.items():
                chi[modes.index(l, m)] = c
        else:
            chi[:] = chi_override
        tail = 0.0
    else:
        if cone is None:
            raise ValueError("need a cone profile")
        if not cone.modes.same_as(modes):
            raise ValueError("cone profile and mode set differ")
        chi = cone.chi
        tail = cone.l2_tail_mass(modes.ell_max)
        if tail > tail_tol:
            raise TruncationError(
                f"tail mass of L^2 chi above ell_max={modes.ell_max} is {tail:.3g} > {tail_tol:.3g}")
    L = modes.ell_max
    ells = np.arange(L + 1)
    q = profile.q
    # homogeneous part
    I = inverse_r_moments(L)
    eta_l = q * ells * (ells + 1) * I * (-1j) ** ells
    eta = chi * eta_l[modes.ells]
    # remainder: two weight vectors (rho r^2 and Phi - q/(4 pi r)) on the joint rule
    r_in, w_in, r_sh, w_sh = _radial_rules(profile, n_inner, n_shell)
    r = np.concatenate([r_in, r_sh])
    WA = np.concatenate([0 * w_in, w_sh * profile.rho(r_sh) * r_sh ** 2])
    WB = np.concatenate([w_in * (-q / (4 * np.pi * r_in)),
                         w_sh * (profile.phi(r_sh) - q / (4 * np.pi * r_sh))])
    M = bessel_moments(L, grid.nodes, r, np.stack([WA, WB]))     # (2, L+1, n)
    Rl = 4 * np.pi * ((-1j) ** ells)[:, None] * (M[0] + (ells * (ells + 1))[:, None] * M[1])
    R = chi[:, None] * Rl[modes.ells]
    # R(0): only l = 0 survives (j_l(0) = 0 for l >= 1)
    i00 = modes.index(0, 0)
    R_at_0 = float((chi[i00] * 4 * np.pi * np.sum(WA)).real / SQRT4PI)
    coeffs = eta[:, None] + R
    u = WaveFunction(grid, modes, coeffs)
    return USplit(u, eta, R, R_at_0, tail, profile, cone)


def direct_low_frequency_sample(profile: RadialChargeProfile, cone: ConeProfile, omega: float,
                                x_max: float = 4000.0, panel: float = 2.0, n_panel: int = 16):
    """Independent ``u^C_l(omega)`` from the unsplit radial integral.

    ``4 pi (-i)^l chi_l [\\int rho r^2 j_l + l(l+1) \\int_{r1}^{r2} Phi j_l
    + l(l+1) q/(4 pi) \\int_{omega r2}^{inf} j_l(x)/x dx]``; the last
    integral is done by composite Gauss--Legendre up to ``x_max`` plus the
    leading asymptotic tail ``cos(X - l pi/2)/X^2``.  No closed form of the
    split is used.

    Returns
    -------
    ndarray
        Coefficients per ``l = 0..ell_max`` (zonal, axis frame).
    """
    L = cone.modes.ell_max
    ells = np.arange(L + 1)
    q = profile.q
    r, w = profile.radial_rule(256)
    A = bessel_moments(L, [omega], r, np.stack([w * profile.rho(r) * r ** 2, w * profile.phi(r)]))
    x0 = omega * profile.r2
    edges = np.arange(x0, x_max + panel, panel)
    edges[-1] = max(edges[-1], x_max)
    xg, wg = roots_legendre(n_panel)
    xs = (0.5 * (edges[1:] - edges[:-1])[:, None] * (xg[None, :] + 1) + edges[:-1, None]).ravel()
    ws = (0.5 * (edges[1:] - edges[:-1])[:, None] * wg[None, :]).ravel()
    T = bessel_moments(L, [1.0], xs, (ws / xs)[None, :])[0, :, 0]
    X = edges[-1]
    T += np.cos(X - ells * np.pi / 2) / X ** 2
    tail = q / (4 * np.pi) * T
    lam = ells * (ells + 1)
    val = 4 * np.pi * (-1j) ** ells * (A[0, :, 0] + lam * (A[1, :, 0] + tail))
    return cone.spectrum[: L + 1] * val


# ---------------------------------------------------------------------------
# Approximating sequence and intertwiner
# ---------------------------------------------------------------------------


def _v_n(u: WaveFunction, eps: float) -> WaveFunction:
    return shell_project(u, eps).radial_multiply(1j * u.grid.nodes ** -1.5)


@dataclass
class ErrorTable:
    """``|l_gamma(f) + Im<v_n, f>|`` per cutoff."""

    eps: list
    errors: list
    pairings: list
    l_gamma: float

    def rows(self):
        return list(zip(self.eps, self.errors, self.pairings))


def approx_linear_form(u_c, eps_n, f: TestVector, gamma: Charge) -> ErrorTable:
    """Errors of the approximation ``l_gamma(f) ~ -Im<v_n^C, f>``.

    Parameters
    ----------
    u_c : USplit or WaveFunction
    eps_n : sequence of float
        Infrared cutoffs ``eps_n``.
    f : TestVector
        Supported outside the closed cone.
    gamma : Charge
        The spherically symmetric charge generating ``u_c``.

    Returns
    -------
    ErrorTable
    """
    u = u_c.u_c if isinstance(u_c, USplit) else u_c
    lg = linear_form(gamma, f)
    errs, pairs = [], []
    for e in eps_n:
        p = inner_product(_v_n(u, float(e)), f.wf).imag
        pairs.append(float(p))
        errs.append(abs(lg + p))
    return ErrorTable([float(e) for e in eps_n], errs, pairs, float(lg))


@dataclass
class ConvergenceTrace:
    """Increments ``|T v_{n+1} - T v_n|`` with the decay verdict."""

    n: list
    increments: list
    partial_norms: list
    decay_exponent: float
    verdict: str
    ratio_last_first: float

    def csv_rows(self):
        return list(zip(self.n, self.partial_norms, self.increments))


@dataclass
class IntertwinerResult:
    """Outcome of :func:`build_intertwiner`.

    ``v_T`` is ``None`` when divergence is detected (the trace is the
    divergence report).
    """

    v_T: WaveFunction | None
    trace: ConvergenceTrace
    which: str
    gamma_odd_defect: float
    branch_defect: float

    @property
    def verdict(self) -> str:
        return self.trace.verdict


def build_intertwiner(op: KprOperator, u_c, n_range=(5, 35), which: str = "T") -> IntertwinerResult:
    """``v_T = lim T v_n`` with ``v_n = i omega^{-3/2} P_{eps_n} u^C``.

    Parameters
    ----------
    op : KprOperator
    u_c : USplit or WaveFunction
    n_range : (int, int)
        Shells ``n0..n1`` whose increments are traced; the returned vector
        is ``T v_{n1+1}``.
    which : {"T", "T_hat"}
        Operator variant.

    Returns
    -------
    IntertwinerResult
        ``gamma_odd_defect = max|Gamma v + v|`` (``Gamma_hat`` for
        ``T_hat``) over the iterates, ``branch_defect = |T v - T_1 v|`` at
        the last iterate (zero when only the ``T_1`` branch is exercised).
    """
    u = u_c.u_c if isinstance(u_c, USplit) else u_c
    s = op.schedule
    n0, n1 = int(n_range[0]), int(n_range[1])
    if not (1 <= n0 <= n1 < s.N):
        raise ValueError(f"n_range {n_range} must satisfy 1 <= n0 <= n1 < N = {s.N}")
    for i in range(n0, n1 + 1):
        if not op._shell_resolved(i):
            raise ValueError(f"shell {i} is not resolved by the radial grid")
    if not (u.grid.same_as(op.grid) and u.modes.same_as(op.modes)):
        raise ValueError("u_c and operator live on different bases")
    hat = which == "T_hat"
    g = op.grid
    v_full = u.radial_multiply(1j * g.nodes ** -1.5)
    eps_last = math.exp(s.log_eps[n1])           # eps_{n1+1}
    v_last = shell_project(v_full, eps_last)
    gv = _gamma_coeffs(v_last.coeffs, v_last.modes, hat=hat)
    scale = max(np.max(np.abs(v_last.coeffs)), 1e-300)
    odd_def = float(np.max(np.abs(gv + v_last.coeffs)) / scale)
    ns, inc = [], []
    for n in range(n0, n1 + 1):
        m = op.shell_index == n
        c = np.zeros_like(v_full.coeffs)
        c[:, m] = v_full.coeffs[:, m]
        inc.append(op.apply(v_full.with_coeffs(c), which).norm())
        ns.append(n)
    inc_a = np.array(inc)
    p, verdict = decay_verdict(ns, inc_a)
    trace = ConvergenceTrace(ns, inc, np.sqrt(np.cumsum(inc_a ** 2)).tolist(), p, verdict,
                             float(inc_a[-1] / inc_a[0]) if inc_a[0] else float("inf"))
    Tv = op.apply(v_last, which)
    branch = float((Tv - op.apply(v_last, "T1")).norm())
    return IntertwinerResult(Tv if verdict != "divergent" else None, trace, which, odd_def, branch)


# ---------------------------------------------------------------------------
# Probes supported outside (or inside) the cone
# ---------------------------------------------------------------------------


_MOMENT_CACHE: dict = {}


def _radial_moments(rc: float, width: float, n_radial: int, ell_max: int, grid: RadialGrid):
    """``\\int exp(-(r-rc)^2/w^2) j_l(omega r) r^2 dr`` on the grid (cached per shape)."""
    key = (rc, width, n_radial, ell_max, grid.size, float(grid.nodes[0]), float(grid.nodes[-1]))
    if key not in _MOMENT_CACHE:
        if len(_MOMENT_CACHE) > 16:
            _MOMENT_CACHE.clear()
        probe = ShellBandProbe(rc, width)
        r, w = probe.radial_rule(n_radial)
        _MOMENT_CACHE[key] = bessel_moments(ell_max, grid.nodes, r,
                                            (w * r ** 2 * probe.radial(r))[None, :])[0]
    return _MOMENT_CACHE[key]


@dataclass(frozen=True)
class ShellBandProbe:
    """Zonal probe ``h(x) = A exp(-(r - rc)^2/w^2) B(theta)``, ``g = amp_g h / A``.

    ``B(theta) = exp(-1/(1 - ((theta - theta_c)/delta)^2))`` is a smooth band
    around the polar angle ``theta_c`` (measured from the cone axis, which is
    ``+z``); ``theta_c = pi`` gives a cap around ``-z``.
    """

    rc: float = 3.0
    width: float = 0.5
    theta_c: float = math.radians(100.0)
    delta: float = math.radians(20.0)
    amp_h: float = 1.0
    amp_g: float = 0.0
    name: str = ""

    def radial(self, r):
        return np.exp(-((np.asarray(r, float) - self.rc) / self.width) ** 2)

    def angular(self, theta):
        return _bump((np.asarray(theta, float) - self.theta_c) / self.delta)

    def evaluate(self, points) -> np.ndarray:
        p = np.atleast_2d(points)
        r = np.linalg.norm(p, axis=1)
        return self.amp_h * self.radial(r) * self.angular(_angle_to(Z_AXIS, p))

    def angular_interval(self):
        return max(0.0, self.theta_c - self.delta), min(np.pi, self.theta_c + self.delta)

    def radial_rule(self, n: int = 160):
        lo = max(0.0, self.rc - 7 * self.width)
        hi = self.rc + 7 * self.width
        x, w = roots_legendre(n)
        return lo + 0.5 * (hi - lo) * (x + 1), 0.5 * (hi - lo) * w

    def shape_hat(self, grid: RadialGrid, modes: ModeSet, n_radial: int = 160) -> np.ndarray:
        """Mode array of the transform of ``radial * angular`` (unit amplitude)."""
        if not modes.zonal and modes.ell_max > 60:
            raise ValueError("full mode sets above ell_max=60 are not supported for probes")
        L = modes.ell_max
        lo, hi = self.angular_interval()
        B = zonal_coefficients(self.angular, L, lo, hi)
        M = _radial_moments(self.rc, self.width, n_radial, L, grid)
        ells = np.arange(L + 1)
        rows = 4 * np.pi * ((-1j) ** ells)[:, None] * M * B[:, None]
        return rows[modes.ells] * np.where(modes.ms == 0, 1.0, 0.0)[:, None]

    def certificate(self, opening: float, n: int = 400) -> dict:
        """Fraction of the position-space mass of ``h^2`` inside the cone ``theta <= opening``.

        Angular quadrature of ``B^2`` over ``[0, opening]`` against the whole
        sphere (the radial factor cancels).
        """
        x, w = roots_legendre(n)
        th_in = 0.5 * opening * (x + 1)
        inside = float(np.sum(self.angular(th_in) ** 2 * np.sin(th_in) * w) * 0.5 * opening)
        lo, hi = self.angular_interval()
        th = lo + 0.5 * (hi - lo) * (x + 1)
        total = float(np.sum(self.angular(th) ** 2 * np.sin(th) * w) * 0.5 * (hi - lo))
        frac = inside / total if total > 0 else 0.0
        return {"region": "outside" if frac <= 1e-10 else "inside", "inside_fraction": frac,
                "opening": opening, "band_deg": [math.degrees(lo), math.degrees(hi)]}

    def test_vector(self, grid: RadialGrid, modes: ModeSet, opening: float,
                    normalize: bool = True) -> TestVector:
        """The probe as a :class:`TestVector` (unit norm if ``normalize``)."""
        shape = self.shape_hat(grid, modes)
        f = TestVector.from_parts(grid, modes, self.amp_h * shape, self.amp_g * shape,
                                  self.certificate(opening), {"probe": self})
        if normalize:
            n = f.wf.norm()
            if n > 0:
                f = TestVector.from_parts(grid, modes, f.h_hat / n, f.g_hat / n, f.locality,
                                          f.generators)
        return f


def standard_probes() -> list:
    """Eight probes supported outside a cone of half-angle up to 30 degrees about ``+z``.

    Two shell radii times four angular bands (three belts and a cap around
    ``-z``); half of them carry a ``g`` component.
    """
    out = []
    bands = [(70.0, 20.0), (100.0, 20.0), (130.0, 20.0), (180.0, 25.0)]
    for rc, amp_g in ((3.0, 0.0), (4.5, 0.5)):
        for tc, dl in bands:
            out.append(ShellBandProbe(rc, 0.5, math.radians(tc), math.radians(dl), 1.0, amp_g,
                                      f"shell{rc:g}_band{tc:g}"))
    return out


def negative_control_probe() -> ShellBandProbe:
    """A cap around ``+z`` inside the cone (where ``chi != 1``)."""
    return ShellBandProbe(3.0, 0.5, 0.0, math.radians(25.0), 1.0, 0.0, "inside_cap")


def probe_vectors(probes, grid: RadialGrid, modes: ModeSet, opening: float) -> list:
    return [p.test_vector(grid, modes, opening) for p in probes]


# ---------------------------------------------------------------------------
# Intertwining check
# ---------------------------------------------------------------------------


@dataclass
class ResidualTable:
    """``|Im<v_T, T f> + l_gamma(f)|`` per probe."""

    names: list
    l_gamma: list
    pairings: list
    residuals: list
    regions: list
    status: list
    tol: float

    def rows(self):
        return list(zip(self.names, self.regions, self.l_gamma, self.pairings,
                        self.residuals, self.status))

    def max_residual(self, region: str = "outside") -> float:
        vals = [r for r, g in zip(self.residuals, self.regions) if g == region]
        return max(vals) if vals else 0.0


def verify_intertwining(op: KprOperator, v_T: WaveFunction, gamma: Charge, probes,
                        tol: float = 1e-4) -> ResidualTable:
    """Residuals of ``Im<v_T, T f> = -l_gamma(f)`` over probes.

    Parameters
    ----------
    op : KprOperator
    v_T : WaveFunction
    gamma : Charge
    probes : list of TestVector
        ``locality`` should carry a certificate dict (``region`` key).
    tol : float
        Residuals above ``tol`` are flagged ``NOT-LOCALIZED``.

    Returns
    -------
    ResidualTable
    """
    names, lg, pr, res, reg, st = [], [], [], [], [], []
    for k, f in enumerate(probes):
        gen = (f.generators or {}).get("probe")
        names.append(getattr(gen, "name", "") or f"probe{k}")
        loc = f.locality if isinstance(f.locality, dict) else {}
        reg.append(loc.get("region", "unknown"))
        l = linear_form(gamma, f)
        p = inner_product(v_T, op.apply(f.wf, "T")).imag
        r = abs(p + l)
        lg.append(float(l))
        pr.append(float(p))
        res.append(float(r))
        st.append("LOCALIZED" if r <= tol else "NOT-LOCALIZED")
    return ResidualTable(names, lg, pr, res, reg, st, tol)


# ---------------------------------------------------------------------------
# Variants
# ---------------------------------------------------------------------------


@dataclass
class VerdictReport:
    """Per-variant convergence verdicts."""

    variants: dict

    def verdicts(self) -> dict:
        return {k: v["verdict"] for k, v in self.variants.items()}

    def all_as_expected(self) -> bool:
        return all(v["verdict"] == v["expected"] for v in self.variants.values())


VARIANTS = {
    # name: (operator, chi part, schedule parity, expected verdict)
    "gamma_hat_with_even_chi": ("T_hat", "even", None, "Cauchy"),
    "gamma_hat_with_full_chi": ("T_hat", "full", None, "divergent"),
    "gamma_with_odd_ell_schedule": ("T", "even", "odd", "Cauchy"),
    "gamma_with_even_ell_schedule": ("T", "even", "even", "Cauchy"),
}


def default_localization_setup(opening_deg: float = 30.0, ell_max: int = 400,
                               per_octave: int = 16, lo_exp: int = -40, hi_exp: int = 6,
                               q: float = 1.0, r1: float = 0.5, r2: float = 1.5,
                               bump_params=None):
    """Grid, modes, cone, charge profile and charge used by the cone pipelines."""
    grid = RadialGrid.dyadic(per_octave, lo_exp, hi_exp)
    modes = ModeSet(ell_max, zonal=True)
    cone = build_chi(Z_AXIS, math.radians(opening_deg), bump_params, modes)
    profile = RadialChargeProfile(q, r1, r2)
    gamma = Charge.from_profiles(grid, modes, rho=ShellProfile(q, r1, r2)) if q != 0 else \
        Charge.zero(grid, modes)
    return grid, modes, cone, profile, gamma


def opposite_cone_experiment(op_variant, cone: ConeProfile, profile: RadialChargeProfile | None = None,
                             grid: RadialGrid | None = None, schedule: KprSchedule | None = None,
                             n_range=(5, 35)) -> VerdictReport:
    """Run :func:`build_intertwiner` under operator/profile variants.

    Parameters
    ----------
    op_variant : str or sequence of str
        Keys of ``VARIANTS`` (``"all"`` runs every variant):
        ``gamma_hat_with_even_chi``, ``gamma_hat_with_full_chi``,
        ``gamma_with_odd_ell_schedule`` and the supplementary
        ``gamma_with_even_ell_schedule``.
    cone : ConeProfile
    profile : RadialChargeProfile, optional
    grid : RadialGrid, optional
    schedule : KprSchedule, optional
        Base schedule (default :meth:`KprSchedule.default`).

    Returns
    -------
    VerdictReport
        ``expected`` records the verdict stated for each variant in the
        construction; ``verdict`` is the measured one.
    """
    names = list(VARIANTS) if op_variant == "all" else \
        ([op_variant] if isinstance(op_variant, str) else list(op_variant))
    for n in names:
        if n not in VARIANTS:
            raise ValueError(f"unknown variant {n!r}; choose from {sorted(VARIANTS)}")
    profile = profile or RadialChargeProfile(1.0, 0.5, 1.5)
    grid = grid or RadialGrid.dyadic(16, -40, 6)
    base = schedule or KprSchedule.default()
    splits = {}
    out = {}
    for n in names:
        which, part, parity, expected = VARIANTS[n]
        if part not in splits:
            c = cone if part == "full" else cone.even_part()
            splits[part] = build_u_c(profile, c, grid)
        sched = base if parity is None else base.with_parity(parity)
        op = KprOperator(sched, grid, cone.modes)
        res = build_intertwiner(op, splits[part], n_range, which)
        tr = res.trace
        out[n] = {"verdict": tr.verdict, "expected": expected, "operator": which,
                  "chi": part, "parity": parity, "decay_exponent": tr.decay_exponent,
                  "ratio_last_first": tr.ratio_last_first,
                  "first_increment": tr.increments[0], "last_increment": tr.increments[-1]}
    return VerdictReport(out)


# ---------------------------------------------------------------------------
# Vacuum obstruction
# ---------------------------------------------------------------------------


@dataclass
class ObstructionReport:
    """Scaling table ``(lambda, |f_lambda|, l_gamma(f_lambda))`` with the verdict."""

    lambdas: list
    norms: list
    values: list
    limit: float
    deviation: float
    verdict: str
    notes: list = field(default_factory=list)

    def rows(self):
        return list(zip(self.lambdas, self.norms, self.values))


def vacuum_obstruction(gamma: Charge, f: TestVector, lambdas, op: KprOperator | None = None,
                       tol: float = 1e-3, map_fn=map) -> ObstructionReport:
    """Separate the charged sector from the background along ``f_lambda``.

    ``l_gamma(f_lambda) -> q kappa_f`` while ``|f_lambda|`` is constant, so
    ``exp(i q kappa_f) exp(-|f|^2/4)`` and ``exp(-|f|^2/4)`` are different
    weak limits unless ``q kappa_f`` vanishes (mod ``2 pi``).

    Parameters
    ----------
    gamma : Charge
    f : TestVector
    lambdas : sequence of float
    op : KprOperator, optional
        If given and ``f`` is rotation invariant, checks ``T f_lambda = f_lambda``
        bit for bit and reports ``SECTOR-DISTINGUISHED``.
    tol : float
        Relative deviation allowed between the last value and the limit.

    Returns
    -------
    ObstructionReport
    """
    from .hilbert import dilate_test_vector
    res = scaling_sequence(gamma, f, lambdas, map_fn=map_fn)
    norms = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        fls = [dilate_test_vector(f, l) for l in res.lambdas]
    norms = [fl.wf.norm() for fl in fls]
    limit = gamma.q * kappa(f)
    dev = abs(res.values[-1] - limit) / abs(limit) if limit else abs(res.values[-1])
    notes = [f"phase limit q*kappa = {limit:.12g} (mod 2 pi: {math.remainder(limit, 2 * math.pi):.6g})"]
    if abs(limit) <= 1e-12 or abs(math.remainder(limit, 2 * math.pi)) <= 1e-12:
        verdict = "NOT-OBSTRUCTED"
    elif dev <= tol:
        verdict = "OBSTRUCTED"
        if op is not None:
            rot_inv = not np.any(f.wf.coeffs[f.modes.ells > 0])
            if rot_inv and all(np.array_equal(op.apply(fl.wf, "T").coeffs, fl.wf.coeffs)
                               for fl in fls):
                verdict = "SECTOR-DISTINGUISHED"
                notes.append("T f_lambda = f_lambda exactly for every lambda")
    else:
        verdict = "UNRESOLVED"
        notes.append(f"last value deviates from the limit by {dev:.3g} > {tol:.3g}")
    return ObstructionReport(res.lambdas, norms, list(res.values), float(limit), float(dev),
                             verdict, notes + res.warnings)
