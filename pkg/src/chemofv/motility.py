"""Signal-dependent motility functions and checks of their structural hypotheses.

Two families are supported: the power law ``phi(s) = s**alpha`` and a custom
triple ``(phi, phi', phi'')`` given either as Python callables or as
expression strings (see :mod:`chemofv.expr`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import mpmath
import numpy as np

from .errors import ConfigError, ConsistencyError, DomainError
from .expr import parse_expression

# Working precision (decimal digits) of the hypothesis checks.
HP_DPS = 50


class MotilitySpec:
    """Common interface: ``phi``, ``dphi`` and ``d2phi`` evaluated elementwise.

    Subclasses are immutable; the methods accept floats, numpy arrays or
    ``mpmath.mpf`` values and perform no domain checking (use
    :func:`phi_eval` and friends for checked scalar evaluation).
    """

    family: str = ""
    alpha: float
    s0: float | None

    def phi(self, s):
        raise NotImplementedError

    def dphi(self, s):
        raise NotImplementedError

    def d2phi(self, s):
        raise NotImplementedError

    def includes_zero(self) -> bool:
        return True

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class PowerLaw(MotilitySpec):
    """``phi(s) = s**alpha`` with ``0**alpha := 0``."""

    alpha: float
    s0: float | None = None
    family: str = field(default="power", init=False)

    def __post_init__(self):
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise ConfigError(f"power-law exponent must be positive, got {self.alpha}")
        if self.s0 is not None and not self.s0 > 0:
            raise ConfigError(f"s0 must be positive, got {self.s0}")

    def phi(self, s):
        if isinstance(s, np.ndarray):
            return np.power(s, self.alpha)
        return s ** self.alpha

    def _exponent(self, s):
        # exact exponent arithmetic in the working precision of s
        return mpmath.mpf(self.alpha) if isinstance(s, mpmath.mpf) else self.alpha

    def dphi(self, s):
        a = self._exponent(s)
        if isinstance(s, np.ndarray):
            return a * np.power(s, a - 1.0)
        return a * s ** (a - 1)

    def d2phi(self, s):
        a = self._exponent(s)
        if isinstance(s, np.ndarray):
            return a * (a - 1.0) * np.power(s, a - 2.0)
        return a * (a - 1) * s ** (a - 2)

    def to_dict(self):
        d = {"family": "power", "alpha": self.alpha}
        if self.s0 is not None:
            d["s0"] = self.s0
        return d


@dataclass(frozen=True)
class CustomMotility(MotilitySpec):
    """User-supplied triple ``phi, phi', phi''`` with a declared exponent.

    ``domain`` is ``(lo, hi, closed_at_lo)``; by default ``[0, inf)``.
    ``source`` keeps the expression strings when built from a config file.
    """

    phi_fn: Callable
    dphi_fn: Callable
    d2phi_fn: Callable
    alpha: float
    s0: float | None = None
    domain: tuple = (0.0, math.inf, True)
    source: tuple | None = None
    family: str = field(default="custom", init=False)

    def __post_init__(self):
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise ConfigError(f"declared alpha must be positive, got {self.alpha}")
        if self.s0 is not None and not self.s0 > 0:
            raise ConfigError(f"s0 must be positive, got {self.s0}")
        for fn in (self.phi_fn, self.dphi_fn, self.d2phi_fn):
            if not callable(fn):
                raise ConfigError("custom motility needs callables for phi, phi' and phi''")
        dom = tuple(self.domain)
        if len(dom) == 2:
            dom = (*dom, True)
        if len(dom) != 3 or not float(dom[0]) < float(dom[1]):
            raise ConfigError(f"domain must be (lo, hi) or (lo, hi, closed_at_lo) with lo < hi, got {self.domain}")
        object.__setattr__(self, "domain", (float(dom[0]), float(dom[1]), bool(dom[2])))

    @classmethod
    def from_expressions(cls, phi: str, dphi: str, d2phi: str, alpha: float, s0=None, domain=None):
        exprs = tuple(parse_expression(e) for e in (phi, dphi, d2phi))
        kw = {} if domain is None else {"domain": domain}
        return cls(*exprs, alpha=alpha, s0=s0, source=tuple(str(e) for e in exprs), **kw)

    def phi(self, s):
        return self.phi_fn(s)

    def dphi(self, s):
        return self.dphi_fn(s)

    def d2phi(self, s):
        return self.d2phi_fn(s)

    def includes_zero(self):
        lo, _, closed = self.domain
        return lo <= 0 and closed

    def in_domain(self, s) -> bool:
        lo, hi, closed = self.domain
        return (s >= lo if closed else s > lo) and s <= hi

    def to_dict(self):
        if self.source is None:
            raise ConfigError("custom motility built from callables cannot be serialized")
        d = {
            "family": "custom",
            "alpha": self.alpha,
            "phi": self.source[0],
            "dphi": self.source[1],
            "d2phi": self.source[2],
        }
        if self.s0 is not None:
            d["s0"] = self.s0
        return d


def motility_from_dict(d: dict) -> MotilitySpec:
    family = d.get("family")
    if family == "power":
        return PowerLaw(float(d["alpha"]), s0=d.get("s0"))
    if family == "custom":
        return CustomMotility.from_expressions(
            d["phi"], d["dphi"], d["d2phi"], alpha=float(d["alpha"]), s0=d.get("s0")
        )
    raise ConfigError(f"unknown motility family {family!r}; expected 'power' or 'custom'")


def _check_arg(spec, s, allow_zero=True):
    if not math.isfinite(s):
        raise DomainError(f"argument must be finite, got {s}")
    if s < 0 or (s == 0 and not allow_zero):
        raise DomainError(f"argument must be {'nonnegative' if allow_zero else 'positive'}, got {s}")
    if isinstance(spec, CustomMotility) and not spec.in_domain(s):
        raise DomainError(f"s={s} outside the declared domain {spec.domain[:2]}")


def phi_eval(spec: MotilitySpec, s: float) -> float:
    """Return ``phi(s)`` for ``s >= 0``."""
    _check_arg(spec, s)
    return float(spec.phi(float(s)))


def phi_eps_eval(spec: MotilitySpec, eps: float, s: float) -> float:
    """Return the regularized motility ``phi(s) + eps`` for ``eps`` in (0, 1)."""
    if not 0 < eps < 1:
        raise ConfigError(f"eps must lie in (0, 1), got {eps}")
    return phi_eval(spec, s) + eps


def phi_derivatives(spec: MotilitySpec, s: float) -> tuple[float, float]:
    """Return ``(phi'(s), phi''(s))``; ``s`` must be positive."""
    _check_arg(spec, s, allow_zero=False)
    s = float(s)
    return float(spec.dphi(s)), float(spec.d2phi(s))


# ---------------------------------------------------------------------------
# consistency of declared derivatives


def verify_consistency(spec: MotilitySpec, points=None, rel_tol: float = 1e-6) -> float:
    """Cross-check ``phi'`` and ``phi''`` against central differences.

    ``phi'`` is compared with the difference quotient of ``phi`` and ``phi''``
    with that of ``phi'``, step ``1e-5 * s``.  The error is scaled by the
    natural magnitude of each derivative (``|phi|/s`` resp. ``|phi'|/s``) so
    that vanishing derivatives are handled.  Returns the worst scaled error;
    raises :class:`ConsistencyError` above ``rel_tol``.
    """
    if points is None:
        points = np.geomspace(1e-4, 10.0, 41)
    worst = 0.0
    for s in points:
        s = float(s)
        if isinstance(spec, CustomMotility) and not (spec.in_domain(s * (1 - 1e-5)) and spec.in_domain(s * (1 + 1e-5))):
            continue
        h = 1e-5 * s
        f0 = float(spec.phi(s))
        d1 = float(spec.dphi(s))
        d2 = float(spec.d2phi(s))
        fd1 = (float(spec.phi(s + h)) - float(spec.phi(s - h))) / (2 * h)
        fd2 = (float(spec.dphi(s + h)) - float(spec.dphi(s - h))) / (2 * h)
        vals = (f0, d1, d2, fd1, fd2)
        if not all(math.isfinite(v) for v in vals):
            raise ConsistencyError(f"motility or its derivatives are not finite at s={s:g}")
        e1 = abs(fd1 - d1) / max(abs(d1), abs(f0) / s, 1e-300)
        e2 = abs(fd2 - d2) / max(abs(d2), abs(d1) / s, 1e-300)
        worst = max(worst, e1, e2)
        if e1 > rel_tol:
            raise ConsistencyError(
                f"declared phi'({s:g}) = {d1:.12g} but finite differences give {fd1:.12g} "
                f"(relative error {e1:.2e})"
            )
        if e2 > rel_tol:
            raise ConsistencyError(
                f"declared phi''({s:g}) = {d2:.12g} but finite differences give {fd2:.12g} "
                f"(relative error {e2:.2e})"
            )
    return worst


# ---------------------------------------------------------------------------
# hypothesis checks on a geometric ladder


@dataclass(frozen=True)
class SampleLadder:
    """Geometric points ``s_max * ratio**k`` down to (just below) ``s_min``."""

    s_max: float = 1.0
    s_min: float = 1e-8
    ratio: float = 0.5
    tail_fraction: float = 0.5

    def points(self) -> tuple[float, ...]:
        if not 0 < self.ratio < 1:
            raise ConfigError(f"ladder ratio must be in (0,1), got {self.ratio}")
        if not 0 < self.s_min < self.s_max:
            raise ConfigError("ladder needs 0 < s_min < s_max")
        k = math.ceil(math.log(self.s_min / self.s_max) / math.log(self.ratio))
        return tuple(self.s_max * self.ratio ** i for i in range(k + 1))

    def tail(self) -> tuple[float, ...]:
        pts = self.points()
        n = max(1, int(round(len(pts) * self.tail_fraction)))
        return pts[-n:]


@dataclass(frozen=True)
class HypothesisEntry:
    id: str
    description: str
    samples: tuple
    observed: float
    verdict: bool
    margin: float

    def to_dict(self):
        return {
            "id": self.id,
            "description": self.description,
            "samples": list(self.samples),
            "observed": self.observed,
            "verdict": "pass" if self.verdict else "fail",
            "margin": self.margin,
        }


@dataclass(frozen=True)
class HypothesisReport:
    motility: dict
    mode: str
    precision: str
    entries: tuple

    @property
    def passed(self) -> bool:
        return all(e.verdict for e in self.entries)

    def entry(self, hid: str) -> HypothesisEntry:
        for e in self.entries:
            if e.id == hid:
                return e
        raise KeyError(hid)

    def has(self, hid: str) -> bool:
        return any(e.id == hid for e in self.entries)

    def to_dict(self):
        return {
            "motility": self.motility,
            "mode": self.mode,
            "precision": self.precision,
            "passed": self.passed,
            "entries": [e.to_dict() for e in self.entries],
        }


def root_second_derivative(alpha, f, df, d2f):
    """``(phi**(1/alpha))''`` from ``phi, phi', phi''`` by the chain rule."""
    r = 1 / alpha if not isinstance(f, mpmath.mpf) else mpmath.mpf(1) / mpmath.mpf(alpha)
    return r * f ** (r - 2) * ((r - 1) * df * df + f * d2f)


def _hp_values(spec, points):
    """Evaluate the triple in 50-digit arithmetic when the motility supports it."""
    try:
        with mpmath.workdps(HP_DPS):
            out = []
            for s in points:
                sm = mpmath.mpf(s)
                vals = (spec.phi(sm), spec.dphi(sm), spec.d2phi(sm))
                if not all(isinstance(v, mpmath.mpf) for v in vals):
                    raise TypeError("non-mpf result")
                out.append(vals)
            return out, "mp%d" % HP_DPS
    except (TypeError, ValueError, AttributeError):
        out = [(float(spec.phi(s)), float(spec.dphi(s)), float(spec.d2phi(s))) for s in points]
        return out, "double"


def check_hypotheses(
    spec: MotilitySpec,
    mode: str = "classical",
    ladder: SampleLadder | None = None,
    floor: float = 1e-6,
    ceiling: float = 1e6,
    tol: float = 1e-10,
) -> HypothesisReport:
    """Evaluate the small-``s`` hypotheses on ``phi`` along a geometric ladder.

    mode ``"classical"`` checks positivity, the lower power bound
    ``phi(s)/s**alpha`` and the derivative bound ``|phi'(s)|/s**(alpha-1)``.
    mode ``"weak"`` additionally checks ``phi(0) = 0`` and, when ``s0`` is
    set, concavity of ``phi**(1/alpha)`` on ``(0, s0)``; ``s0`` is required
    there when ``alpha < 1/2``.
    """
    if mode not in ("classical", "weak"):
        raise ConfigError(f"mode must be 'classical' or 'weak', got {mode!r}")
    ladder = ladder or SampleLadder()
    if ladder.s_min > 1e-8:
        raise ConfigError(f"ladder must reach s_min <= 1e-8, got {ladder.s_min}")
    alpha = spec.alpha
    if mode == "weak" and alpha < 0.5 and spec.s0 is None:
        raise ConfigError("weak mode with alpha in (0, 1/2) requires s0")

    if isinstance(spec, CustomMotility):
        verify_consistency(spec)

    pts = ladder.points()
    tail = ladder.tail()
    if isinstance(spec, CustomMotility):
        pts = tuple(s for s in pts if spec.in_domain(s))
        tail = tuple(s for s in tail if spec.in_domain(s))
        if not tail:
            raise ConfigError("ladder tail lies outside the declared motility domain")
    values, precision = _hp_values(spec, pts)
    table = dict(zip(pts, values))
    entries = []

    with mpmath.workdps(HP_DPS):
        phis = [table[s][0] for s in pts]
        lowest = min(phis)
        entries.append(HypothesisEntry(
            "positivity", "phi(s) > 0 on the ladder", pts,
            float(lowest), bool(lowest > 0), float(lowest),
        ))

        ratios = [table[s][0] / mpmath.mpf(s) ** alpha for s in tail]
        rmin = float(min(ratios))
        entries.append(HypothesisEntry(
            "lower_power_bound", "min over tail of phi(s)/s^alpha >= floor", tail,
            rmin, rmin >= floor, rmin - floor,
        ))

        dratios = [abs(table[s][1]) / mpmath.mpf(s) ** (alpha - 1) for s in tail]
        rmax = float(max(dratios))
        entries.append(HypothesisEntry(
            "derivative_power_bound", "max over tail of |phi'(s)|/s^(alpha-1) <= ceiling", tail,
            rmax, rmax <= ceiling, ceiling - rmax,
        ))

        if mode == "weak":
            if spec.includes_zero():
                at0 = float(spec.phi(0.0))
            else:
                at0 = float("nan")
            entries.append(HypothesisEntry(
                "vanishes_at_zero", "phi(0) = 0", (0.0,), at0, at0 == 0.0, -abs(at0),
            ))

        if spec.s0 is not None:
            below = tuple(s for s in pts if s < spec.s0)
            if not below:
                raise ConfigError(f"no ladder point lies below s0={spec.s0}")
            g2 = [root_second_derivative(alpha, *table[s]) for s in below]
            gmax = float(max(g2))
            entries.append(HypothesisEntry(
                "root_concavity", "(phi^(1/alpha))'' <= tol on ladder points below s0", below,
                gmax, gmax <= tol, tol - gmax,
            ))

    return HypothesisReport(_describe(spec), mode, precision, tuple(entries))


def _describe(spec):
    try:
        return spec.to_dict()
    except ConfigError:
        return {"family": spec.family, "alpha": spec.alpha}
