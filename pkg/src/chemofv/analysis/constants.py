"""Explicit constants, the quadratic-degradation b-threshold and regime verdicts."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

from ..errors import ConfigError, DomainError
from ..motility import PowerLaw, check_hypotheses


def kappa1(p: float, n: int) -> float:
    """``(p-1)**((p+1)/p) * (2p + sqrt n)**(2/p) * (2p-1)**(-1/p)``."""
    if not p > 1:
        raise DomainError(f"kappa1 needs p > 1, got {p}")
    if n < 1:
        raise DomainError(f"kappa1 needs n >= 1, got {n}")
    rn = math.sqrt(n)
    return (p - 1) ** ((p + 1) / p) * (2 * p + rn) ** (2 / p) * (2 * p - 1) ** (-1 / p)


def kappa2(p: float, n: int) -> float:
    """``2**(3p+2) (2p + sqrt n + 1)**(2p) (2p - 2 + sqrt n)**(p+1) / (2p-1)**p``."""
    if not p > 1:
        raise DomainError(f"kappa2 needs p > 1, got {p}")
    if n < 1:
        raise DomainError(f"kappa2 needs n >= 1, got {n}")
    rn = math.sqrt(n)
    try:
        val = (2.0 ** (3 * p + 2) * (2 * p + rn + 1) ** (2 * p) * (2 * p - 2 + rn) ** (p + 1)
               / (2 * p - 1) ** p)
    except OverflowError:
        return math.inf
    return val


def default_lambda_phi(alpha: float) -> float:
    """Power-law value ``c2**2 / c1 = alpha**2`` (``c1 = 1``, ``c2 = alpha``)."""
    return alpha * alpha


@dataclass(frozen=True)
class Threshold:
    value: float
    vacuous: bool


def b_threshold(n: int, alpha: float, v0_linf: float, lambda_phi: float | None = None) -> Threshold:
    """Smallest excluded ``b`` for classical existence at ``gamma = 2``.

    ``kappa1(n/2, n) lam**((n+2)/n) V**(((n+2) alpha - 2)/n) + kappa2(n/2, n) V``
    for ``n >= 3``; vacuous (value 0) for ``n <= 2``.
    """
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    if not alpha > 0:
        raise DomainError(f"alpha must be positive, got {alpha}")
    if not v0_linf > 0:
        raise DomainError(f"v0_linf must be positive, got {v0_linf}")
    lam = default_lambda_phi(alpha) if lambda_phi is None else lambda_phi
    if not lam > 0:
        raise DomainError(f"lambda_phi must be positive, got {lam}")
    if n <= 2:
        return Threshold(0.0, True)
    p = n / 2
    val = (kappa1(p, n) * lam ** ((n + 2) / n) * v0_linf ** (((n + 2) * alpha - 2) / n)
           + kappa2(p, n) * v0_linf)
    return Threshold(val, False)


def ode_comparison_bound(y0: float, c1: float, c2: float, kappa: float) -> float:
    """``max(y0 e**c2, (c1 (kappa-1))**(-1/(kappa-1)) e**c2)``.

    Bounds ``y`` obeying ``y' + c1 y**kappa <= h`` with ``int_t^(t+1) h <= c2``.
    """
    if not kappa > 1:
        raise DomainError(f"kappa must exceed 1, got {kappa}")
    if not (y0 > 0 and c1 > 0 and c2 >= 0):
        raise DomainError("need y0 > 0, c1 > 0 and c2 >= 0")
    e = math.exp(c2)
    return max(y0 * e, (c1 * (kappa - 1)) ** (-1.0 / (kappa - 1)) * e)


def eventual_delta(p: float, n: int, alpha: float, b: float, lambda_phi: float | None = None,
                   iterations: int = 200) -> float:
    """Largest ``delta`` with ``kappa1(p,n) lam**((p+1)/p) delta**e + kappa2(p,n) delta <= b``.

    ``e = (alpha (p+1) - 1)/p`` must be positive so the left side increases
    from 0; solved by bisection.
    """
    if not b > 0:
        raise DomainError(f"b must be positive, got {b}")
    e = (alpha * (p + 1) - 1) / p
    if not e > 0:
        raise DomainError(f"exponent (alpha(p+1)-1)/p must be positive, got {e}")
    lam = default_lambda_phi(alpha) if lambda_phi is None else lambda_phi
    k1 = kappa1(p, n) * lam ** ((p + 1) / p)
    k2 = kappa2(p, n)

    def lhs(d):
        return k1 * d ** e + k2 * d

    lo, hi = 0.0, 1.0
    while lhs(hi) <= b:
        lo, hi = hi, 2 * hi
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        if lhs(mid) <= b:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * hi:
            break
    return lo


GUARANTEED_CLASSICAL_I = "guaranteed (superquadratic degradation)"
GUARANTEED_CLASSICAL_II = "guaranteed (quadratic degradation, b above threshold)"
GUARANTEED_CLASSICAL_LOWDIM = "guaranteed (quadratic degradation, n <= 2)"
GUARANTEED_WEAK_SMALL = "guaranteed (alpha < 1/2 with root concavity)"
GUARANTEED_WEAK_LARGE = "guaranteed (alpha >= 1/2)"
GUARANTEED_EVENTUAL = "guaranteed (alpha > 1, n >= 3)"
NO_GUARANTEE = "no guarantee"


@dataclass(frozen=True)
class ThresholdReport:
    n: int
    alpha: float
    gamma: float
    v0_linf: float
    lambda_phi: float
    lambda_source: str
    kappa1_val: float | None
    kappa2_val: float | None
    b_threshold: float
    threshold_vacuous: bool
    b_given: float
    classical_guarantee: str
    weak_guarantee: str
    eventual_smoothness: str
    notes: tuple = ()

    @property
    def classical(self) -> bool:
        return self.classical_guarantee.startswith("guaranteed")

    @property
    def weak(self) -> bool:
        return self.weak_guarantee.startswith("guaranteed")

    @property
    def eventual(self) -> bool:
        return self.eventual_smoothness.startswith("guaranteed")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["notes"] = list(self.notes)
        return d


def classify_regime(params, n: int, v0_linf: float, lambda_phi: float | None = None,
                    classical_report=None, weak_report=None) -> ThresholdReport:
    """Fill every existence verdict for ``params`` in dimension ``n``.

    Hypothesis reports are computed on the default ladder when not supplied.
    Verdicts only ever assert sufficiency; anything else is "no guarantee".
    """
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    mot = params.motility
    alpha = mot.alpha
    gam = params.gamma
    notes = []
    if lambda_phi is None:
        lam = default_lambda_phi(alpha)
        source = "default alpha^2" + ("" if isinstance(mot, PowerLaw) else " (custom motility: supply lambda_phi)")
    else:
        lam = float(lambda_phi)
        source = "user supplied"

    if classical_report is None:
        classical_report = check_hypotheses(mot, "classical")
    if weak_report is None and gam == 2:
        try:
            weak_report = check_hypotheses(mot, "weak")
        except ConfigError as exc:
            notes.append(f"weak hypotheses not evaluated: {exc}")
            weak_report = None

    thr = b_threshold(n, alpha, v0_linf, lam)
    k1 = kappa1(n / 2, n) if n >= 3 else None
    k2 = kappa2(n / 2, n) if n >= 3 else None

    classical = NO_GUARANTEE
    if alpha >= 1 and classical_report.passed:
        if gam > 2:
            classical = GUARANTEED_CLASSICAL_I
        elif gam == 2 and n <= 2:
            classical = GUARANTEED_CLASSICAL_LOWDIM
        elif gam == 2 and params.b > thr.value:
            classical = GUARANTEED_CLASSICAL_II
    elif not classical_report.passed:
        notes.append("classical hypotheses on phi failed")

    weak = NO_GUARANTEE
    if gam == 2 and weak_report is not None and weak_report.passed:
        if alpha >= 0.5:
            weak = GUARANTEED_WEAK_LARGE
        elif weak_report.has("root_concavity"):
            weak = GUARANTEED_WEAK_SMALL

    eventual = NO_GUARANTEE
    if gam == 2 and alpha > 1 and n >= 3 and classical_report.passed:
        eventual = GUARANTEED_EVENTUAL

    return ThresholdReport(
        n=n, alpha=alpha, gamma=gam, v0_linf=float(v0_linf), lambda_phi=lam, lambda_source=source,
        kappa1_val=k1, kappa2_val=k2, b_threshold=thr.value, threshold_vacuous=thr.vacuous,
        b_given=params.b, classical_guarantee=classical, weak_guarantee=weak,
        eventual_smoothness=eventual, notes=tuple(notes),
    )
