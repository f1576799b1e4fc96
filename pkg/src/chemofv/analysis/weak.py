"""Space-time integral identities evaluated on stored trajectories.

For a test function ``psi`` with ``d psi / d nu = 0`` on the boundary and
support in ``[0, T)``::

    -int int u psi_t - int u0 psi(0) = -int int grad(u phi_eps(v)).grad psi
                                       + a int int u psi - b int int u**gamma psi
    -int int v psi_t - int v0 psi(0) = -int int grad v.grad psi
                                       - int int u v/(1 + eps u) psi

Space integrals use the midpoint rule (gradients on interior faces), time
integrals the trapezoid rule over the stored snapshots.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import SamplingError
from ..grid import Grid, _sl

MIN_RECORDS_IN_SUPPORT = 16


def time_bump(tau):
    """``exp(1 - 1/(1 - tau**2))`` on ``[0, 1)``, zero beyond; equals 1 at 0."""
    tau = np.asarray(tau, dtype=float)
    out = np.zeros_like(tau)
    inside = np.abs(tau) < 1
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - tau[inside] ** 2))
    return out


def time_bump_derivative(tau):
    tau = np.asarray(tau, dtype=float)
    out = np.zeros_like(tau)
    inside = np.abs(tau) < 1
    ti = tau[inside]
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - ti ** 2)) * (-2.0 * ti / (1.0 - ti ** 2) ** 2)
    return out


@dataclass(frozen=True)
class TestFunction:
    """``amplitude * prod_k cos(m_k pi x_k / L_k) * bump(t / support)``."""

    __test__ = False  # not a pytest class

    modes: tuple
    support: float
    amplitude: float = 1.0

    def _space(self, grid: Grid, coords):
        val = np.ones(np.broadcast(*coords).shape) if coords else 1.0
        for m, L, x in zip(self.modes, grid.lengths, coords):
            val = val * np.cos(m * math.pi * x / L)
        return val

    def space_values(self, grid: Grid) -> np.ndarray:
        return self.amplitude * np.broadcast_to(self._space(grid, grid.mesh()), grid.shape)

    def space_face_gradient(self, grid: Grid, axis: int) -> np.ndarray:
        """Exact ``d/dx_axis`` of the spatial factor on interior faces."""
        coords = list(grid.face_mesh(axis))
        coords = [c[_sl(grid.dim, axis, slice(1, -1))] for c in coords]
        val = np.ones(coords[0].shape)
        for k, (m, L, x) in enumerate(zip(self.modes, grid.lengths, coords)):
            w = m * math.pi / L
            val = val * (-w * np.sin(w * x) if k == axis else np.cos(w * x))
        return self.amplitude * val

    def time_values(self, t):
        return time_bump(np.asarray(t) / self.support)

    def time_derivative(self, t):
        return time_bump_derivative(np.asarray(t) / self.support) / self.support


def test_function_family(dim: int, t_end: float, count: int = 5, seed: int = 0,
                         max_mode: int = 3) -> list[TestFunction]:
    """Seeded cosine-times-bump test functions with support inside ``(0, t_end]``."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        modes = tuple(int(m) for m in rng.integers(0, max_mode + 1, size=dim))
        support = float(t_end * rng.uniform(0.6, 1.0))
        amp = float(rng.uniform(0.5, 1.5))
        out.append(TestFunction(modes, support, amp))
    return out


def _trapezoid(t, f):
    return float(np.sum(0.5 * np.diff(t) * (f[1:] + f[:-1])))


def _face_dot(f: np.ndarray, tf: TestFunction, grid: Grid) -> float:
    """``int grad f . grad X`` over interior faces."""
    total = 0.0
    for axis, hx in enumerate(grid.h):
        df = np.diff(f, axis=axis) / hx
        total += float(np.sum(df * tf.space_face_gradient(grid, axis)))
    return total * grid.cell_volume


def weak_residual(trajectory, test_fn: TestFunction, params) -> tuple[float, float]:
    """Absolute residuals ``(r_u, r_v)`` of both integral identities."""
    if test_fn.amplitude == 0:
        return 0.0, 0.0
    t = np.asarray(trajectory.snapshot_times, dtype=float)
    if t.size == 0:
        raise SamplingError("trajectory has no field snapshots; run with snapshots enabled")
    if t[0] != 0.0:
        raise SamplingError("snapshots must start at t = 0")
    if test_fn.support > t[-1] * (1 + 1e-12):
        raise SamplingError(
            f"test-function support {test_fn.support:g} extends past the last snapshot {t[-1]:g}")
    inside = t <= test_fn.support
    if int(np.count_nonzero(inside)) < MIN_RECORDS_IN_SUPPORT:
        raise SamplingError(
            f"only {int(np.count_nonzero(inside))} snapshots inside the test-function support; "
            f"need at least {MIN_RECORDS_IN_SUPPORT}")
    k_last = int(np.nonzero(inside)[0][-1])
    # include the first snapshot past the support so the trapezoid reaches it
    k_stop = min(k_last + 2, t.size)
    t = t[:k_stop]

    g = trajectory.grid
    cv = g.cell_volume
    eps = trajectory.eps
    a, b, gam = params.a, params.b, params.gamma
    mot = params.motility
    X = test_fn.space_values(g)
    eta = test_fn.time_values(t)
    deta = test_fn.time_derivative(t)

    n = t.size
    u_time = np.empty(n)      # int u X
    u_grad = np.empty(n)      # int grad(u phi_eps(v)) . grad X
    u_reac = np.empty(n)      # int (a u - b u^gamma) X
    v_time = np.empty(n)
    v_grad = np.empty(n)
    v_cons = np.empty(n)
    for k in range(n):
        u = trajectory.u_snapshots[k]
        v = trajectory.v_snapshots[k]
        u_time[k] = float(np.sum(u * X)) * cv
        u_grad[k] = _face_dot(u * (mot.phi(v) + eps), test_fn, g)
        u_reac[k] = float(np.sum((a * u - b * u ** gam) * X)) * cv
        v_time[k] = float(np.sum(v * X)) * cv
        v_grad[k] = _face_dot(v, test_fn, g)
        v_cons[k] = float(np.sum(u * v / (1.0 + eps * u) * X)) * cv

    lhs_u = -_trapezoid(t, u_time * deta) - u_time[0] * eta[0]
    rhs_u = _trapezoid(t, (-u_grad + u_reac) * eta)
    lhs_v = -_trapezoid(t, v_time * deta) - v_time[0] * eta[0]
    rhs_v = _trapezoid(t, (-v_grad - v_cons) * eta)
    return abs(lhs_u - rhs_u), abs(lhs_v - rhs_v)
