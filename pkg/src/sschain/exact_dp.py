"""Exact absorption-time distributions, moments, and marginals.

First-step analysis over the transition rows: no Monte Carlo anywhere in
this module, so its outputs serve as the independent oracle against which
both simulation and the asymptotic predictions are validated.  The only
self-referential term in the moment recursion (the diagonal self-loop) is
solved algebraically, which keeps the tables exact even for kernels with
heavy diagonals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

from .kernels import BarrierKernel, Kernel


class DPError(RuntimeError):
    pass


class CostGuardError(DPError):
    """Requested computation exceeds the configured operation budget."""


@dataclass(frozen=True)
class MomentTable:
    """values[n, p] = E[A_n ** p] for n = 0..n_max, p = 0..p_max."""
    kernel_name: str
    values: np.ndarray

    @property
    def n_max(self) -> int:
        return self.values.shape[0] - 1

    @property
    def p_max(self) -> int:
        return self.values.shape[1] - 1

    def moment(self, n: int, p: int) -> float:
        return float(self.values[n, p])

    def to_csv(self, kernel: Kernel | None = None) -> str:
        lines = ["n,p,moment,normalized"]
        for n in range(self.n_max + 1):
            a = kernel.scaling(n) if kernel is not None else math.nan
            for p in range(self.p_max + 1):
                v = float(self.values[n, p])
                lines.append(f"{n},{p},{v!r},{float(v / a ** p)!r}")
        return "\n".join(lines) + "\n"


def _check_not_stuck(row: np.ndarray, n: int):
    if n >= 1 and row[n] >= 1.0 - 1e-12:
        raise DPError(
            f"state {n} is absorbing; collapse the kernel (collapse_absorbing) "
            "so 0 is the only absorbing state")


def absorption_moments(kernel: Kernel, n_max: int, p_max: int = 1) -> MomentTable:
    """E[A_n^p] for every start n <= n_max and order p <= p_max.

    Requires a kernel whose only absorbing state is 0.  O(n_max^2 * p_max)
    time, O(n_max * p_max) memory; rows are built once and discarded.
    """
    if p_max < 0:
        raise ValueError("p_max must be >= 0")
    values = np.zeros((n_max + 1, p_max + 1))
    values[:, 0] = 1.0
    # W[j, p] = E[(1 + A_j)^p]
    W = np.zeros((n_max + 1, p_max + 1))
    W[0, :] = 1.0
    choose = [[math.comb(p, r) for r in range(p + 1)] for p in range(p_max + 1)]
    for n in range(1, n_max + 1):
        row = kernel.build_row(n)
        _check_not_stuck(row, n)
        pnn = float(row[n])
        for p in range(1, p_max + 1):
            s = float(np.dot(row[:n], W[:n, p]))
            lower = math.fsum(choose[p][r] * values[n, r] for r in range(p))
            values[n, p] = (s + pnn * lower) / (1.0 - pnn)
        for p in range(p_max + 1):
            W[n, p] = math.fsum(choose[p][r] * values[n, r] for r in range(p)) \
                + values[n, p]
    return MomentTable(kernel.name, values)


# ---------------------------------------------------------------------------
# pmf evolution
# ---------------------------------------------------------------------------

class _PmfStepper:
    """One-step pushforward pi -> pi P with the rows of a kernel."""

    def __init__(self, kernel: Kernel, n: int, budget_ops: float):
        self.kernel = kernel
        self.n = n
        self._matrix = None
        self._barrier = isinstance(kernel, BarrierKernel)
        if self._barrier:
            kernel.q._ensure(n)
            self._q = kernel.q._q[:n + 1].copy()
            self._qbar = kernel.q._qbar[:n + 1].copy()
            if np.any(self._qbar[1:] >= 1.0):
                raise DPError("states above 0 are absorbing; collapse the kernel")
            nz = np.nonzero(self._q)[0]
            self._support = int(nz[-1]) if nz.size else 0
        else:
            if (n + 1) ** 2 > budget_ops:
                raise CostGuardError(
                    f"dense pushforward at n={n} exceeds the operation budget")
            m = np.zeros((n + 1, n + 1))
            for j in range(n + 1):
                m[j, :j + 1] = kernel.build_row(j)
            self._matrix = m

    def step(self, pi: np.ndarray) -> np.ndarray:
        if not self._barrier:
            return pi @ self._matrix
        n = self.n
        live = self._qbar < 1.0
        rho = np.where(live, pi / np.where(live, 1.0 - self._qbar, 1.0), 0.0)
        w = self._support
        if w <= 256:
            out = np.zeros_like(pi)
            for z in range(min(w, n) + 1):
                if self._q[z] != 0.0:
                    out[:n + 1 - z] += self._q[z] * rho[z:]
        else:
            conv = fftconvolve(rho[::-1], self._q)[:n + 1]
            out = conv[::-1].copy()
            np.clip(out, 0.0, None, out=out)
        out[~live] += pi[~live]
        return out


def absorption_distribution(kernel: Kernel, n: int, k_max: int | None = None,
                            budget_ops: float = 4e9):
    """pmf of A_n truncated at k_max, plus the unaccounted tail mass.

    The state pmf is pushed forward step by step; the newly absorbed mass
    at 0 after each step is recorded.  Requires a collapsed kernel.
    Returns (pmf, tail_mass) with pmf[k] = P(A_n = k) for k <= k_max.
    """
    if k_max is None:
        k_max = int(math.ceil(50.0 * kernel.scaling(n)))
    pmf = np.zeros(k_max + 1)
    if n == 0:
        pmf[0] = 1.0
        return pmf, 0.0
    pi = np.zeros(n + 1)
    pi[n] = 1.0
    stepper = _PmfStepper(kernel, n, budget_ops / max(1, k_max))
    if stepper._matrix is not None:
        for j in range(1, n + 1):
            _check_not_stuck(stepper._matrix[j, :j + 1], j)
    absorbed = 0.0
    prev_total = 1.0
    for k in range(1, k_max + 1):
        pi = stepper.step(pi)
        total = float(math.fsum(pi))
        if abs(total - prev_total) > 1e-12:
            raise DPError(f"pmf mass drifted by {total - prev_total!r} at step {k}")
        prev_total = total
        newly = float(pi[0]) - absorbed
        pmf[k] = max(newly, 0.0)
        absorbed = float(pi[0])
    return pmf, 1.0 - absorbed


def marginal_moment(kernel: Kernel, n: int, t: float, lam: float,
                    budget_ops: float = 4e9) -> float:
    """Exact E[(X_n(floor(a_n t)) / n) ** lam] by pmf evolution."""
    if t < 0.0:
        raise ValueError("t must be >= 0")
    steps = int(math.floor(kernel.scaling(n) * t))
    if n == 0:
        return 0.0 if lam > 0 else 1.0
    if steps == 0:
        return 1.0
    stepper = _PmfStepper(kernel, n, budget_ops / steps)
    pi = np.zeros(n + 1)
    pi[n] = 1.0
    for _ in range(steps):
        pi = stepper.step(pi)
    grid = (np.arange(n + 1) / n) ** lam if lam > 0 else np.ones(n + 1)
    if lam > 0:
        grid[0] = 0.0
    return float(np.dot(pi, grid))
