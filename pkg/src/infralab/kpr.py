"""KPR-like symplectic operators on the discretized one-particle space.

Momentum space is cut into shells ``eps_{i+1} <= omega < eps_i``
(``i = 1..N``); shell ``0`` is ``omega >= eps_1`` and everything below
``eps_{N+1}`` is left untouched (truncation).  On shell ``i`` the projection

.. math:: Q_i = \\frac{|\\xi_i\\rangle\\langle\\xi_i|}{\\langle\\xi_i|\\xi_i\\rangle}
          \\otimes \\tilde Q_i, \\qquad \\xi_i(\\omega) = \\omega^{-3/2},

acts as the rank-one radial projection onto ``xi_i`` in every angular mode
``Y_lm`` kept by ``tilde Q_i`` (``1 <= l <= ell_cut(i)``; never ``l = 0``).
With amplitudes ``b_i`` in ``(0, 1)``

.. math:: T_1 = 1 + \\sum_i (b_i - 1) Q_i, \\qquad
          T_2 = 1 + \\sum_i (1/b_i - 1) Q_i, \\qquad
          T = T_2 \\tfrac{1 + \\Gamma}{2} + T_1 \\tfrac{1 - \\Gamma}{2}.

Since ``Q_i`` commutes with ``Gamma`` and ``T_1^* T_2 = 1``, ``T`` is
symplectic: ``Im<Tf, Tg> = Im<f, g>``.  The variant ``T_hat`` uses
``Gamma_hat = Gamma o (-1)^l`` instead of ``Gamma``.

On grids whose cell edges contain the shell boundaries (dyadic grids for
``eps_i = 2^{-i}``) the discrete norms ``<xi_i|xi_i>`` equal
``ln(eps_i/eps_{i+1})`` exactly, because each cell integrates ``omega^{-3}``
exactly (see :class:`infralab.hilbert.RadialGrid`).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .hilbert import ModeSet, RadialGrid, WaveFunction, _gamma_coeffs

__all__ = [
    "ScheduleError",
    "TruncationWarning",
    "KprSchedule",
    "ValidationReport",
    "KprOperator",
    "ProbeReport",
    "validate_schedule",
    "apply_t",
    "t2_bound",
    "omega_r",
    "convergence_probe",
    "decay_verdict",
    "power_norm",
]


class ScheduleError(ValueError):
    """A schedule violates the admissibility conditions."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("invalid KPR schedule: " + "; ".join(self.violations))


class TruncationWarning(UserWarning):
    """A vector has content below the last shell, where the operator is the identity."""


# ---------------------------------------------------------------------------
# Schedules
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class KprSchedule:
    """Shell boundaries, amplitudes and angular cutoffs.

    Parameters
    ----------
    log_eps : ndarray, shape (N + 1,)
        Natural logarithms of ``eps_1 > ... > eps_{N+1}`` (logarithms keep
        very deep schedules representable).
    bs : ndarray, shape (N,)
        Amplitudes ``b_i``.
    ell_cut : ndarray of int, shape (N,)
        Largest angular momentum kept by ``tilde Q_i``.
    parity : {None, "odd", "even"}
        Restrict ``tilde Q_i`` to odd or even ``l``.
    include_l0 : bool
        Test-only: also project the ``l = 0`` mode (not admissible).
    """

    log_eps: np.ndarray
    bs: np.ndarray
    ell_cut: np.ndarray
    parity: str | None = None
    include_l0: bool = False

    def __post_init__(self):
        le = np.array(self.log_eps, dtype=float)
        b = np.array(self.bs, dtype=float)
        lc = np.array(self.ell_cut, dtype=int)
        if le.ndim != 1 or b.ndim != 1 or le.size != b.size + 1 or lc.shape != b.shape:
            raise ValueError("need len(log_eps) == len(bs) + 1 == len(ell_cut) + 1")
        if self.parity not in (None, "odd", "even"):
            raise ValueError(f"unknown parity filter {self.parity!r}")
        for name, arr in (("log_eps", le), ("bs", b), ("ell_cut", lc)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    # -- constructors -----------------------------------------------------
    @classmethod
    def geometric(cls, shells: int = 40, ratio: float = 2.0, b_exponent: float = 1.0,
                  b_offset: float = 1.0, ell_slope: int = 1, **kw) -> "KprSchedule":
        """``eps_i = ratio^{-i}``, ``b_i = (i + b_offset)^{-b_exponent}``, ``ell_cut(i) = ell_slope * i``."""
        i = np.arange(1, shells + 2, dtype=float)
        idx = np.arange(1, shells + 1)
        return cls(-i * math.log(ratio), (idx + b_offset) ** (-float(b_exponent)),
                   ell_slope * idx, **kw)

    @classmethod
    def default(cls, **kw) -> "KprSchedule":
        """``eps_i = 2^{-i}``, ``b_i = 1/(i+1)``, ``ell_cut(i) = i``, ``N = 40``."""
        return cls.geometric(40, 2.0, 1.0, 1.0, 1, **kw)

    @classmethod
    def from_dict(cls, d: dict) -> "KprSchedule":
        """Parse the schedule JSON schema.

        ``{"epsilon": {"kind": "geometric", "ratio": 2} | {"kind": "explicit", "values": [...]},
        "b": {"kind": "power", "exponent": 1, "offset": 1} | {"kind": "explicit", "values": [...]},
        "ell_cut": {"kind": "linear", "slope": 1} | {"kind": "explicit", "values": [...]},
        "shells": N, "parity": null}``
        """
        try:
            N = int(d["shells"])
            e, b, lc = d["epsilon"], d["b"], d.get("ell_cut", {"kind": "linear"})
        except KeyError as exc:
            raise ValueError(f"schedule: missing key {exc.args[0]!r}") from None
        if e["kind"] == "geometric":
            log_eps = -np.arange(1, N + 2) * math.log(float(e.get("ratio", 2.0)))
        elif e["kind"] == "explicit":
            vals = np.asarray(e["values"], float)
            if vals.size != N + 1 or np.any(vals <= 0):
                raise ValueError("schedule.epsilon.values: need N+1 positive values")
            log_eps = np.log(vals)
        else:
            raise ValueError(f"schedule.epsilon.kind: unknown {e['kind']!r}")
        idx = np.arange(1, N + 1)
        if b["kind"] == "power":
            bs = (idx + float(b.get("offset", 1.0))) ** (-float(b.get("exponent", 1.0)))
        elif b["kind"] == "explicit":
            bs = np.asarray(b["values"], float)
            if bs.size != N:
                raise ValueError("schedule.b.values: need N values")
        else:
            raise ValueError(f"schedule.b.kind: unknown {b['kind']!r}")
        if lc["kind"] == "linear":
            cut = int(lc.get("slope", 1)) * idx
        elif lc["kind"] == "explicit":
            cut = np.asarray(lc["values"], int)
            if cut.size != N:
                raise ValueError("schedule.ell_cut.values: need N values")
        else:
            raise ValueError(f"schedule.ell_cut.kind: unknown {lc['kind']!r}")
        return cls(log_eps, bs, cut, parity=d.get("parity"))

    # -- derived ----------------------------------------------------------
    @property
    def N(self) -> int:
        return self.bs.size

    @property
    def epsilons(self) -> np.ndarray:
        return np.exp(self.log_eps)

    def log_ratios(self) -> np.ndarray:
        """``ln(eps_i / eps_{i+1})``."""
        return self.log_eps[:-1] - self.log_eps[1:]

    def ells_kept(self, i: int) -> np.ndarray:
        """Angular momenta kept by ``tilde Q_i`` (``i`` is 1-based)."""
        lo = 0 if self.include_l0 else 1
        ells = np.arange(lo, int(self.ell_cut[i - 1]) + 1)
        if self.parity == "odd":
            ells = ells[ells % 2 == 1]
        elif self.parity == "even":
            ells = ells[ells % 2 == 0]
        return ells

    def ranks(self) -> np.ndarray:
        """``rk tilde Q_i = sum (2l + 1)`` over the kept ``l``."""
        return np.array([int(np.sum(2 * self.ells_kept(i) + 1)) for i in range(1, self.N + 1)])

    def energies(self) -> np.ndarray:
        """Per-shell energies ``eps_i / b_i^2 * rk Q_i``."""
        return np.exp(self.log_eps[:-1]) / self.bs ** 2 * self.ranks()

    def with_parity(self, parity) -> "KprSchedule":
        return KprSchedule(self.log_eps, self.bs, self.ell_cut, parity, self.include_l0)

    def with_l0(self) -> "KprSchedule":
        return KprSchedule(self.log_eps, self.bs, self.ell_cut, self.parity, True)


@dataclass
class ValidationReport:
    """Result of :func:`validate_schedule`."""

    ok: bool
    violations: list
    eps_decreasing: bool
    b_in_unit_interval: bool
    b_tail_decreasing: bool
    ranks: list
    energy_terms: list
    energy_partial_sums: list
    energy_increments: list
    kpr_partial_sums: list
    kpr_cauchy: bool
    log_ratio_poly_degree: int
    notes: list = field(default_factory=list)

    def summary(self) -> dict:
        return {"ok": self.ok, "violations": self.violations,
                "energy_total": self.energy_partial_sums[-1] if self.energy_partial_sums else 0.0,
                "kpr_total": self.kpr_partial_sums[-1] if self.kpr_partial_sums else 0.0,
                "kpr_cauchy": self.kpr_cauchy}


def validate_schedule(s: KprSchedule, cauchy_tol: float = 1e-2, max_poly_degree: int = 4) -> ValidationReport:
    """Check a schedule against the admissibility and KPR-like conditions.

    Parameters
    ----------
    s : KprSchedule
    cauchy_tol : float
        Tolerance on the last-quartile increments of the partial sums of
        ``b_i^2 ln(eps_i/eps_{i+1})`` (relative to the total).
    max_poly_degree : int
        Largest degree tried when bounding ``ln(eps_i/eps_{i+1})`` by a
        polynomial in ``i``.

    Returns
    -------
    ValidationReport
        All tables are computed even when a violation is found.
    """
    violations = []
    lr = s.log_ratios()
    eps_dec = bool(np.all(lr > 0) and np.all(np.isfinite(s.log_eps)))
    if not eps_dec:
        bad = int(np.argmax(lr <= 0)) + 1
        violations.append(f"epsilon not strictly decreasing at i={bad}")
    b_ok = bool(np.all((s.bs > 0) & (s.bs < 1)))
    if not b_ok:
        bad = [int(i) + 1 for i in np.flatnonzero(~((s.bs > 0) & (s.bs < 1)))]
        violations.append(f"b_i outside (0,1) at i={bad[:8]}{'...' if len(bad) > 8 else ''}")
    q = max(1, s.N // 4)
    b_tail = bool(s.bs[-q:].mean() < s.bs[:q].mean()) if s.N >= 4 else True
    if not b_tail:
        violations.append("b_i show no decreasing trend (last-quartile mean >= first-quartile mean)")
    if s.include_l0:
        violations.append("tilde Q_i includes l = 0 (test-only schedule)")
    ranks = s.ranks()
    with np.errstate(under="ignore", divide="ignore"):   # b_i = 0 is reported above
        terms = np.exp(s.log_eps[:-1]) / s.bs ** 2 * ranks
    psums = np.cumsum(terms)
    incs = np.diff(psums, prepend=0.0)
    kterms = s.bs ** 2 * lr
    ksums = np.cumsum(kterms)
    tail = kterms[-q:]
    kpr_cauchy = bool(np.all(np.isfinite(ksums)) and ksums[-1] > 0
                      and tail.max(initial=0.0) <= cauchy_tol * ksums[-1])
    # smallest degree d with ln(eps_i/eps_{i+1}) / (1+i)^d not growing
    i = np.arange(1, s.N + 1, dtype=float)
    half = max(1, s.N // 2)
    deg = -1
    for d in range(max_poly_degree + 1):
        r = lr / (1 + i) ** d
        if np.max(r[half:], initial=0.0) <= np.max(r[:half]) * (1 + 1e-12):
            deg = d
            break
    if deg < 0:
        violations.append("ln(eps_i/eps_{i+1}) not bounded by a polynomial of degree <= %d" % max_poly_degree)
    return ValidationReport(
        ok=not violations, violations=violations, eps_decreasing=eps_dec,
        b_in_unit_interval=b_ok, b_tail_decreasing=b_tail, ranks=ranks.tolist(),
        energy_terms=terms.tolist(), energy_partial_sums=psums.tolist(),
        energy_increments=incs.tolist(), kpr_partial_sums=ksums.tolist(),
        kpr_cauchy=kpr_cauchy, log_ratio_poly_degree=deg)


# ---------------------------------------------------------------------------
# Operator
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class KprOperator:
    """The operators ``T_1``, ``T_2``, ``T`` and ``T_hat`` for a schedule on a basis.

    Parameters
    ----------
    schedule : KprSchedule
    grid : RadialGrid
    modes : ModeSet
    validate : bool
        Reject schedules that fail :func:`validate_schedule` (default True).
    """

    schedule: KprSchedule
    grid: RadialGrid
    modes: ModeSet
    validate: bool = True

    def __post_init__(self):
        if self.validate:
            rep = validate_schedule(self.schedule)
            if not rep.ok:
                raise ScheduleError(rep.violations)
        s, g = self.schedule, self.grid
        logw = np.log(g.nodes)
        # shell i: eps_{i+1} <= omega < eps_i ; 0 above eps_1 ; -1 below eps_{N+1}
        idx = np.searchsorted(-s.log_eps, -logw, side="left")    # number of eps_k > omega
        shell = np.where(idx > s.N, -1, idx)
        object.__setattr__(self, "shell_index", shell)
        xi = g.nodes ** -1.5
        wxi = g.weights * xi
        norms = np.zeros(s.N + 1)
        np.add.at(norms, shell[shell > 0], (g.weights * xi ** 2)[shell > 0])
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "wxi", wxi)
        object.__setattr__(self, "xi_norms", norms[1:])
        # mode mask per shell: keep[i-1, mode]
        ells = self.modes.ells
        keep = np.zeros((s.N, len(self.modes)), bool)
        for i in range(1, s.N + 1):
            keep[i - 1] = np.isin(ells, s.ells_kept(i))
        object.__setattr__(self, "keep", keep)
        rows = np.flatnonzero(keep.any(axis=0))
        object.__setattr__(self, "active_rows", rows)
        # check alignment of shell boundaries with cell edges
        edges = np.log(g.edges)
        inside = (s.log_eps > edges[0]) & (s.log_eps < edges[-1])
        mis = [float(le) for le in s.log_eps[inside]
               if np.min(np.abs(edges - le)) > 1e-9]
        object.__setattr__(self, "misaligned", mis)
        empty = [i for i in range(1, s.N + 1) if norms[i] == 0]
        object.__setattr__(self, "empty_shells", empty)

    # -- diagnostics ------------------------------------------------------
    def xi_norm_closed_form(self) -> np.ndarray:
        """``ln(eps_i/eps_{i+1})`` for the shells resolved by the grid."""
        return self.schedule.log_ratios()

    def xi_norm_defect(self) -> float:
        """Largest relative mismatch of discrete ``<xi_i|xi_i>`` vs the closed form (resolved shells)."""
        full = np.array([i for i in range(1, self.schedule.N + 1) if self._shell_resolved(i)], int)
        if full.size == 0:
            return 0.0
        a = self.xi_norms[full - 1]
        b = self.xi_norm_closed_form()[full - 1]
        return float(np.max(np.abs(a - b) / b))

    def _shell_resolved(self, i: int) -> bool:
        lo, hi = self.schedule.log_eps[i], self.schedule.log_eps[i - 1]
        e = np.log(self.grid.edges)
        return lo >= e[0] - 1e-12 and hi <= e[-1] + 1e-12

    def shell_mask(self, i: int) -> np.ndarray:
        return self.shell_index == i

    # -- core -------------------------------------------------------------
    def _multiplier_correction(self, coeffs, factors, rows):
        """``sum_i (factors_i - 1) Q_i`` applied to ``coeffs[rows]``."""
        sh = self.shell_index
        act = np.flatnonzero(sh > 0)
        out = np.zeros((rows.size, coeffs.shape[1]), complex)
        if act.size == 0:
            return out
        # shells occupy contiguous node ranges (nodes ascend, shells descend)
        a0, a1 = act[0], act[-1] + 1
        sh_act = sh[a0:a1]
        starts = np.flatnonzero(np.r_[True, sh_act[1:] != sh_act[:-1]])
        seg_shell = sh_act[starts]
        sub = coeffs[rows, a0:a1]
        proj = np.add.reduceat(sub * self.wxi[a0:a1], starts, axis=1)      # (rows, segments)
        with np.errstate(divide="ignore", invalid="ignore"):
            coef = np.where(self.xi_norms > 0, (np.asarray(factors) - 1.0) / self.xi_norms, 0.0)
        coefm = coef[seg_shell - 1][None, :] * self.keep[seg_shell - 1][:, rows].T
        lengths = np.diff(np.r_[starts, sh_act.size])
        out[:, a0:a1] = np.repeat(coefm * proj, lengths, axis=1) * self.xi[a0:a1][None, :]
        return out

    def q_project(self, v: WaveFunction, i: int) -> WaveFunction:
        """``Q_i v``."""
        factors = np.zeros(self.schedule.N)          # (f - 1) = -1 on shell i only ...
        factors[:] = 1.0
        factors[i - 1] = 2.0                           # ... gives +Q_i
        rows = self.active_rows
        c = np.zeros_like(v.coeffs)
        c[rows] = self._multiplier_correction(v.coeffs, factors, rows)
        return v.with_coeffs(c)

    def truncation_flag(self, v: WaveFunction) -> bool:
        """True when ``v`` has content on kept modes below ``eps_{N+1}``."""
        below = self.shell_index < 0
        return bool(np.any(v.coeffs[np.ix_(self.active_rows, below)] != 0))

    def apply(self, v: WaveFunction, which: str = "T", warn: bool = False) -> WaveFunction:
        """Apply ``T1``, ``T2``, ``T`` or ``T_hat`` (see :func:`apply_t`)."""
        if not (v.grid.same_as(self.grid) and v.modes.same_as(self.modes)):
            from .hilbert import IncompatibleBasisError
            raise IncompatibleBasisError("vector not on the operator's basis")
        if warn and self.truncation_flag(v):
            warnings.warn("content below the last shell is left unchanged", TruncationWarning,
                          stacklevel=2)
        b = self.schedule.bs
        rows = self.active_rows
        out = np.array(v.coeffs, copy=True)
        if rows.size == 0:
            return v.with_coeffs(out)
        if which == "T1":
            out[rows] += self._multiplier_correction(v.coeffs, b, rows)
        elif which == "T2":
            out[rows] += self._multiplier_correction(v.coeffs, 1.0 / b, rows)
        elif which in ("T", "T_hat"):
            gv = _gamma_coeffs(v.coeffs, self.modes, hat=(which == "T_hat"))
            even = 0.5 * (v.coeffs + gv)
            odd = 0.5 * (v.coeffs - gv)
            out[rows] += (self._multiplier_correction(even, 1.0 / b, rows)
                          + self._multiplier_correction(odd, b, rows))
        else:
            raise ValueError(f"unknown selector {which!r}; use T1, T2, T or T_hat")
        return v.with_coeffs(out)


def apply_t(op: KprOperator, v: WaveFunction, which: str = "T", return_flag: bool = False):
    """Apply a KPR operator.

    Parameters
    ----------
    op : KprOperator
    v : WaveFunction
    which : {"T1", "T2", "T", "T_hat"}
        ``T1``/``T2`` multiply the ``Q_i`` components by ``b_i``/``1/b_i``;
        ``T`` sends the ``Gamma``-even part through ``T2`` and the odd part
        through ``T1``; ``T_hat`` does the same with ``Gamma_hat``.
    return_flag : bool
        Also return the truncation flag (content below ``eps_{N+1}``).

    Returns
    -------
    WaveFunction or (WaveFunction, bool)
        Rows outside every ``tilde Q_i`` (in particular ``l = 0``) are
        copied bit for bit.
    """
    out = op.apply(v, which)
    return (out, op.truncation_flag(v)) if return_flag else out


def omega_r(op: KprOperator, v: WaveFunction, power: float = 1.0) -> WaveFunction:
    """Regularized energy ``omega_r = omega (1 - P_0) + eps_1 P_0`` to a power."""
    eps1 = math.exp(op.schedule.log_eps[0])
    w = op.grid.nodes
    mult = np.where(w >= eps1, eps1, w) ** power
    return v.radial_multiply(mult)


def power_norm(apply_fn, shape, iterations: int = 300, seed: int = 0, adjoint=None,
               tol: float = 0.0):
    """Operator norm estimate by power iteration on ``A^* A``.

    Parameters
    ----------
    apply_fn : callable
        ``x -> A x`` on complex arrays of ``shape``.
    adjoint : callable, optional
        ``y -> A^* y``; defaults to ``apply_fn`` (self-adjoint ``A``).
    """
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    adjoint = adjoint or apply_fn
    est = 0.0
    for _ in range(iterations):
        nx = np.linalg.norm(x)
        if nx == 0:
            return 0.0
        x = x / nx
        y = adjoint(apply_fn(x))
        new = math.sqrt(max(np.vdot(x, y).real, 0.0))
        x = y
        if tol and abs(new - est) <= tol * max(new, 1e-300):
            est = new
            break
        est = new
    return est


def t2_bound(op: KprOperator, iterations: int = 400, seed: int = 0):
    """Norm of ``(T_2 - 1) omega_r^{1/2}`` versus its analytic bound.

    Returns
    -------
    computed_norm : float
        Power iteration on the weighted coefficient space.
    analytic_bound : float
        ``sqrt(sum_i (1/b_i - 1)^2 rk Q_i eps_i)``.
    block_norms : ndarray
        Exact per-shell norms ``(1/b_i - 1) sqrt(sum w omega^{-2} / sum w omega^{-3})``
        of the rank-one blocks (``omega_r`` on shells below ``eps_1``).
    """
    s = op.schedule
    g = op.grid
    sqw = np.sqrt(g.weights)
    rows = op.active_rows
    mult = np.where(g.nodes >= math.exp(s.log_eps[0]), math.exp(s.log_eps[0]), g.nodes) ** 0.5
    shape = (len(op.modes), g.size)

    def A(x):  # x in orthonormal coordinates  (sqrt(w) * coeffs)
        c = x / sqw[None, :] * mult[None, :]
        out = np.zeros(shape, complex)
        out[rows] = op._multiplier_correction(c, 1.0 / s.bs, rows)
        return out * sqw[None, :]

    def At(y):  # adjoint: omega_r^{1/2} (T2 - 1)  ((T2 - 1) is self-adjoint)
        c = y / sqw[None, :]
        out = np.zeros(shape, complex)
        out[rows] = op._multiplier_correction(c, 1.0 / s.bs, rows)
        return out * mult[None, :] * sqw[None, :]

    computed = power_norm(A, shape, iterations, seed, adjoint=At) if rows.size else 0.0
    with np.errstate(under="ignore"):
        analytic = math.sqrt(float(np.sum((1 / s.bs - 1) ** 2 * s.ranks() * np.exp(s.log_eps[:-1]))))
    blocks = np.zeros(s.N)
    sh = op.shell_index
    for i in range(1, s.N + 1):
        m = sh == i
        if m.any() and op.keep[i - 1].any():
            blocks[i - 1] = (1 / s.bs[i - 1] - 1) * math.sqrt(
                np.sum(g.weights[m] * g.nodes[m] ** -3 * mult[m] ** 2) / np.sum(g.weights[m] * g.nodes[m] ** -3))
    return computed, analytic, blocks


# ---------------------------------------------------------------------------
# Convergence probe
# ---------------------------------------------------------------------------


@dataclass
class ProbeReport:
    """Increments of ``T_1 omega^{-3/2} P_{eps_n} u`` over consecutive shells."""

    n: list
    increments: list
    partial_norms: list
    bounds: list
    decay_exponent: float
    verdict: str
    ratio_last_first: float
    truncated: bool = False

    def csv_rows(self):
        return [(n, p, d, b) for n, p, d, b in zip(self.n, self.partial_norms, self.increments, self.bounds)]


def _eta_coeffs(eta, modes: ModeSet) -> np.ndarray:
    if isinstance(eta, dict):
        c = np.zeros(len(modes), complex)
        for (l, m), val in eta.items():
            c[modes.index(l, m)] = val
        return c
    c = np.asarray(eta, complex)
    if c.shape != (len(modes),):
        raise ValueError("eta must hold one coefficient per mode")
    return c


def decay_verdict(ns, increments):
    """Classify a sequence of shell increments.

    Parameters
    ----------
    ns : array_like of int
        Shell indices.
    increments : array_like of float
        Norms of the consecutive differences.

    Returns
    -------
    (float, str)
        Fitted decay exponent ``p`` of the squared increments
        (``d_n^2 ~ n^{-p}``) and the verdict ``"Cauchy"`` when ``p > 1`` and
        the last quartile is non-increasing, ``"divergent"`` otherwise,
        ``"zero"`` when every increment vanishes.
    """
    inc = np.asarray(increments, float)
    if not np.any(inc):
        return float("inf"), "zero"
    x = np.log(np.asarray(ns, float))
    y = np.log(np.maximum(inc ** 2, 1e-300))
    p = -float(np.polyfit(x, y, 1)[0]) if len(inc) >= 2 else 0.0
    q = max(2, len(inc) // 4)
    tail = inc[-q:]
    decreasing = bool(np.all(np.diff(tail) <= 1e-12 * tail.max()))
    return p, ("Cauchy" if (p > 1.0 and decreasing) else "divergent")


def convergence_probe(op: KprOperator, eta, n_range, which: str = "T1") -> ProbeReport:
    """Probe the Cauchy property of ``T_1 omega^{-3/2} P_{eps_n} u``.

    ``u(k) = eta(k_hat)`` below ``eps_1``.  Increment ``n`` is the norm of
    ``T_1 omega^{-3/2} (P_{eps_{n+1}} - P_{eps_n}) u``, i.e. of the shell-``n``
    piece; partial norms accumulate from the first shell of ``n_range``.

    Parameters
    ----------
    op : KprOperator
    eta : dict or ndarray
        Angular profile as ``{(l, m): coefficient}`` or a mode array.
    n_range : (int, int)
        First and last shell index (inclusive).
    which : str
        Operator selector (default ``T1``).

    Returns
    -------
    ProbeReport
        ``verdict`` is ``"Cauchy"`` when the squared increments decay faster
        than ``1/n`` (fitted exponent > 1) and are non-increasing over the
        last quartile; ``"divergent"`` otherwise; ``"zero"`` for ``eta = 0``.

    Raises
    ------
    ValueError
        If ``n_range`` leaves ``1..N`` or a shell is not resolved by the grid.
    """
    n0, n1 = int(n_range[0]), int(n_range[1])
    s = op.schedule
    if not (1 <= n0 <= n1 <= s.N):
        raise ValueError(f"n_range {n_range} outside the truncation 1..{s.N}")
    for i in range(n0, n1 + 1):
        if not op._shell_resolved(i):
            raise ValueError(f"shell {i} is not resolved by the radial grid")
    c = _eta_coeffs(eta, op.modes)
    g = op.grid
    xi = g.nodes ** -1.5
    ns, inc, bnd = [], [], []
    lr = s.log_ratios()
    norm_eta2 = float(np.sum(np.abs(c) ** 2))
    for n in range(n0, n1 + 1):
        m = op.shell_index == n
        coeffs = np.zeros((len(op.modes), g.size), complex)
        coeffs[:, m] = c[:, None] * xi[None, m]
        piece = op.apply(WaveFunction(g, op.modes, coeffs), which)
        ns.append(n)
        inc.append(piece.norm())
        kept = op.keep[n - 1]
        out_mass = float(np.sum(np.abs(c[~kept]) ** 2))
        bnd.append(math.sqrt(lr[n - 1] * (out_mass + s.bs[n - 1] ** 2 * norm_eta2)))
    inc_a = np.array(inc)
    partial = np.sqrt(np.cumsum(inc_a ** 2))
    if not np.any(inc_a):
        return ProbeReport(ns, inc, partial.tolist(), bnd, float("inf"), "zero", 0.0)
    p, verdict = decay_verdict(ns, inc_a)
    return ProbeReport(ns, inc, partial.tolist(), bnd, p, verdict,
                       float(inc_a[-1] / inc_a[0]) if inc_a[0] else float("inf"))
