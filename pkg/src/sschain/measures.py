"""Finite measures on [0, 1] and their subordinator-side descriptions.

A measure is stored as two exact atoms (at 0 and at 1), an optional list
of interior atoms, and a density on (0, 1) with declared endpoint
singularity orders.  The atoms at the endpoints map to the killing rate
and drift of a subordinator, the rest maps to its jump measure; keeping
them separate means those two numbers are never quadrature artifacts.

Densities built through the named constructors (``barrier_measure``,
``lebesgue``, ``beta_density``) additionally carry a structured
beta-mixture form ``sum_i c_i x^(a_i-1) (1-x)^(b_i-1)`` which downstream
code uses for closed-form Gamma-function evaluation; a plain callable
density falls back to adaptive quadrature with endpoint substitutions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import integrate as _sciint
from scipy.special import betaln, digamma

from .special import gamma_ratio

#: absolute / relative quadrature targets used throughout the package
QUAD_ABS_TOL = 1e-10
QUAD_REL_TOL = 1e-9

_CHECK_GRID = np.linspace(1e-4, 1.0 - 1e-4, 41)


class QuadratureError(RuntimeError):
    """Adaptive quadrature failed to reach the requested accuracy."""

    def __init__(self, message: str, value: float = math.nan, error: float = math.nan):
        super().__init__(f"{message} (value={value!r}, error estimate={error!r})")
        self.value = value
        self.error = error


class MeasureError(ValueError):
    """Invalid measure specification."""


# ---------------------------------------------------------------------------
# quadrature on (0, 1) with endpoint-singularity substitutions
# ---------------------------------------------------------------------------

def quad_unit(fn, sing0: float = 0.0, sing1: float = 0.0, upper: float = 1.0,
              abs_tol: float = QUAD_ABS_TOL, rel_tol: float = QUAD_REL_TOL):
    """Integrate ``fn`` over (0, upper) <= (0, 1).

    ``sing0`` and ``sing1`` declare integrable algebraic blow-ups:
    fn(x) ~ x**-sing0 near 0 and fn(x) ~ (1-x)**-sing1 near 1, both < 1.
    The substitutions u = x**(1-sing0) and v = (1-x)**(1-sing1) make the
    transformed integrands bounded before handing them to the adaptive
    routine.  Returns (value, error_estimate).
    """
    if not (sing0 < 1.0 and sing1 < 1.0):
        raise MeasureError(f"non-integrable endpoint orders ({sing0}, {sing1})")
    if upper <= 0.0:
        return 0.0, 0.0
    upper = min(upper, 1.0)
    split = min(0.5, upper)

    total = 0.0
    err = 0.0

    # left piece, substitution x = u**p0
    p0 = 1.0 / (1.0 - sing0) if sing0 > 0.0 else 1.0

    def left(u):
        x = u ** p0
        return fn(x) * p0 * u ** (p0 - 1.0) if p0 != 1.0 else fn(u)

    v, e = _sciint.quad(left, 0.0, split ** (1.0 / p0),
                        epsabs=abs_tol, epsrel=rel_tol, limit=200)
    total += v
    err += e

    if upper > split:
        # right piece, substitution 1 - x = w**p1
        p1 = 1.0 / (1.0 - sing1) if sing1 > 0.0 else 1.0

        def right(w):
            x = 1.0 - w ** p1
            return fn(x) * p1 * w ** (p1 - 1.0) if p1 != 1.0 else fn(1.0 - w)

        lo = (1.0 - upper) ** (1.0 / p1)
        v, e = _sciint.quad(right, lo, split ** (1.0 / p1),
                            epsabs=abs_tol, epsrel=rel_tol, limit=200)
        total += v
        err += e

    if err > 10.0 * max(abs_tol, rel_tol * abs(total)):
        raise QuadratureError("quadrature did not converge", total, err)
    return total, err


# ---------------------------------------------------------------------------
# the bracket function and its closed-form beta integrals
# ---------------------------------------------------------------------------

def bracket(lam: float, x):
    """(1 - x**lam) / (1 - x) on [0, 1), continued by the value lam at x = 1.

    Non-decreasing in lam for fixed x and squeezed between min(1, lam)
    and max(1, lam).  Vectorized in ``x``.
    """
    if not lam > 0.0:
        raise ValueError(f"bracket requires lam > 0, got {lam}")
    xa = np.asarray(x, dtype=float)
    if np.any((xa < 0.0) | (xa > 1.0)):
        raise ValueError("bracket requires x in [0, 1]")
    scalar = xa.ndim == 0
    xa = np.atleast_1d(xa)
    out = np.empty_like(xa)
    at_one = xa == 1.0
    at_zero = xa == 0.0
    mid = ~(at_one | at_zero)
    out[at_one] = lam
    out[at_zero] = 1.0
    xm = xa[mid]
    # -expm1(lam*log(x)) keeps full precision when x is close to 1
    out[mid] = -np.expm1(lam * np.log(xm)) / (1.0 - xm)
    return float(out[0]) if scalar else out


def bracket_beta_integral(lam: float, a: float, b: float) -> float:
    """Exact value of the integral of (1 - x**lam) x**(a-1) (1-x)**(b-2) dx on (0, 1).

    This is the bracket function integrated against the beta-type density
    x**(a-1) (1-x)**(b-1); it is finite for every a > 0, b > 0, lam > 0.
    Evaluated by analytic continuation of B(a, b-1) - B(a+lam, b-1) across
    b = 1, where it degenerates to a digamma difference.
    """
    if not (a > 0.0 and b > 0.0 and lam > 0.0):
        raise ValueError("bracket_beta_integral needs a, b, lam > 0")
    if abs(b - 1.0) < 1e-7:
        return float(digamma(a + lam) - digamma(a))
    if b > 1.0:
        return float(math.exp(betaln(a, b - 1.0)) - math.exp(betaln(a + lam, b - 1.0)))
    # 0 < b < 1: Gamma(b-1) is finite here (argument in (-1, 0))
    gb1 = gamma_ratio(b + 1.0, 1.0) / ((b - 1.0) * b)
    return float(gb1 * (gamma_ratio(a, a + b - 1.0) - gamma_ratio(a + lam, a + lam + b - 1.0)))


# ---------------------------------------------------------------------------
# FiniteMeasure
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BetaTerm:
    """One term c * x**(a-1) * (1-x)**(b-1) of a structured density."""
    coef: float
    a: float
    b: float

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return self.coef * x ** (self.a - 1.0) * (1.0 - x) ** (self.b - 1.0)

    @property
    def mass(self) -> float:
        return self.coef * math.exp(betaln(self.a, self.b))


class FiniteMeasure:
    """A finite non-negative measure on [0, 1].

    Parameters
    ----------
    atom0, atom1 : float
        Point masses at x = 0 and x = 1.
    density : callable, optional
        Density on (0, 1); must be evaluable on numpy arrays.
    sing0, sing1 : float
        Declared algebraic orders of the density at the endpoints
        (density ~ x**-sing0 near 0 and ~ (1-x)**-sing1 near 1), both < 1.
    interior_atoms : sequence of (location, mass)
        Extra atoms strictly inside (0, 1).
    beta_terms : sequence of BetaTerm
        Structured form of ``density``.  When given and ``density`` is
        None, the callable is synthesized from the terms.
    """

    def __init__(self, atom0: float = 0.0, atom1: float = 0.0,
                 density: Callable | None = None,
                 sing0: float = 0.0, sing1: float = 0.0,
                 interior_atoms: Sequence[tuple[float, float]] = (),
                 beta_terms: Sequence[BetaTerm] = ()):
        if atom0 < 0.0 or atom1 < 0.0:
            raise MeasureError("atom masses must be non-negative")
        beta_terms = tuple(beta_terms)
        if beta_terms and density is None:
            density = _beta_mixture(beta_terms)
            sing0 = max(0.0, max(1.0 - t.a for t in beta_terms))
            sing1 = max(0.0, max(1.0 - t.b for t in beta_terms))
        if not (sing0 < 1.0 and sing1 < 1.0):
            raise MeasureError("endpoint singularity orders must be < 1")
        for loc, mass in interior_atoms:
            if not (0.0 < loc < 1.0):
                raise MeasureError(f"interior atom at {loc} not inside (0, 1)")
            if mass <= 0.0:
                raise MeasureError("interior atom masses must be positive")
        if density is not None:
            vals = density(_CHECK_GRID)
            if np.any(np.asarray(vals) < 0.0):
                raise MeasureError("density takes negative values")
        self.atom0 = float(atom0)
        self.atom1 = float(atom1)
        self.density = density
        self.sing0 = float(sing0)
        self.sing1 = float(sing1)
        self.interior_atoms = tuple((float(l), float(m)) for l, m in interior_atoms)
        self.beta_terms = beta_terms
        self.total_mass = self._compute_mass()
        if not (self.total_mass > 0.0 and math.isfinite(self.total_mass)):
            raise MeasureError("measure must be non-zero and finite")

    def _compute_mass(self) -> float:
        mass = self.atom0 + self.atom1 + sum(m for _, m in self.interior_atoms)
        if self.beta_terms:
            mass += sum(t.mass for t in self.beta_terms)
        elif self.density is not None:
            val, _ = quad_unit(self.density, self.sing0, self.sing1)
            mass += val
        return mass

    def density_integral(self, fn, upper: float = 1.0, extra_sing1: float = 0.0) -> float:
        """Integral of fn(x) * density(x) over (0, upper).

        ``extra_sing1`` declares an additional (1-x) blow-up carried by
        ``fn`` itself, so the substitution order stays correct.
        """
        if self.density is None:
            return 0.0
        val, _ = quad_unit(lambda x: fn(x) * self.density(x),
                           self.sing0, min(0.999, self.sing1 + extra_sing1), upper)
        return val

    def scaled(self, c: float) -> "FiniteMeasure":
        """The measure c * mu."""
        if c <= 0.0:
            raise MeasureError("scale factor must be positive")
        dens = None
        if self.density is not None and not self.beta_terms:
            base = self.density
            dens = lambda x, _b=base: c * _b(x)
        return FiniteMeasure(
            atom0=c * self.atom0, atom1=c * self.atom1,
            density=dens, sing0=self.sing0, sing1=self.sing1,
            interior_atoms=tuple((l, c * m) for l, m in self.interior_atoms),
            beta_terms=tuple(BetaTerm(c * t.coef, t.a, t.b) for t in self.beta_terms),
        )

    def __add__(self, other: "FiniteMeasure") -> "FiniteMeasure":
        if not isinstance(other, FiniteMeasure):
            return NotImplemented
        dens = None
        terms = ()
        if self.beta_terms or other.beta_terms:
            if (self.density is None or self.beta_terms) and \
               (other.density is None or other.beta_terms):
                terms = self.beta_terms + other.beta_terms
        if not terms and (self.density is not None or other.density is not None):
            d1, d2 = self.density, other.density
            if d1 is None:
                dens = d2
            elif d2 is None:
                dens = d1
            else:
                dens = lambda x: d1(x) + d2(x)
        return FiniteMeasure(
            atom0=self.atom0 + other.atom0, atom1=self.atom1 + other.atom1,
            density=dens, sing0=max(self.sing0, other.sing0),
            sing1=max(self.sing1, other.sing1),
            interior_atoms=self.interior_atoms + other.interior_atoms,
            beta_terms=terms,
        )

    def __repr__(self):
        parts = []
        if self.atom0:
            parts.append(f"atom0={self.atom0:g}")
        if self.atom1:
            parts.append(f"atom1={self.atom1:g}")
        for loc, m in self.interior_atoms:
            parts.append(f"atom({m:g}@{loc:g})")
        if self.beta_terms:
            parts.append("beta_terms=" + ",".join(
                f"({t.coef:g},{t.a:g},{t.b:g})" for t in self.beta_terms))
        elif self.density is not None:
            parts.append("density=<callable>")
        return f"FiniteMeasure({', '.join(parts)})"


def _beta_mixture(terms):
    def dens(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for t in terms:
            out = out + t(x)
        return out
    return dens


# named constructors used by the experiment configs -------------------------

def atom(mass: float, x: float) -> FiniteMeasure:
    """Point mass at x in [0, 1]."""
    if mass <= 0.0:
        raise MeasureError("atom mass must be positive")
    if x == 0.0:
        return FiniteMeasure(atom0=mass)
    if x == 1.0:
        return FiniteMeasure(atom1=mass)
    return FiniteMeasure(interior_atoms=((x, mass),))


def barrier_measure(gamma: float) -> FiniteMeasure:
    """The density gamma * (1-x)**-gamma on (0, 1); total mass gamma/(1-gamma)."""
    if not 0.0 < gamma < 1.0:
        raise MeasureError("barrier_measure requires gamma in (0, 1)")
    return FiniteMeasure(beta_terms=(BetaTerm(gamma, 1.0, 1.0 - gamma),))


def lebesgue(scale: float = 1.0) -> FiniteMeasure:
    """scale * Lebesgue measure on (0, 1)."""
    return FiniteMeasure(beta_terms=(BetaTerm(scale, 1.0, 1.0),))


def beta_density(a: float, b: float, scale: float = 1.0) -> FiniteMeasure:
    """scale * Beta(a, b) probability density on (0, 1)."""
    if a <= 0.0 or b <= 0.0:
        raise MeasureError("beta_density requires a, b > 0")
    coef = scale * math.exp(-betaln(a, b))
    return FiniteMeasure(beta_terms=(BetaTerm(coef, a, b),))


# ---------------------------------------------------------------------------
# Laplace exponent
# ---------------------------------------------------------------------------

def laplace_exponent(mu: FiniteMeasure, lam: float) -> float:
    """Integral of the bracket function against mu: the subordinator exponent.

    Non-negative, non-decreasing and concave in lam.  At lam = 0 the
    continuity extension returns the mass at 0 directly; no quadrature of
    a 0/0 integrand happens there.
    """
    if lam < 0.0:
        raise ValueError("laplace_exponent requires lam >= 0")
    if lam == 0.0:
        return mu.atom0
    val = mu.atom0 + mu.atom1 * lam
    for loc, mass in mu.interior_atoms:
        val += mass * bracket(lam, loc)
    if mu.beta_terms:
        for t in mu.beta_terms:
            val += t.coef * bracket_beta_integral(lam, t.a, t.b)
    elif mu.density is not None:
        val += mu.density_integral(lambda x: bracket(lam, x), extra_sing1=0.0)
    return val


def integrate(mu: FiniteMeasure, fn) -> float:
    """Integral of a bounded continuous function against mu; atoms handled exactly."""
    val = 0.0
    if mu.atom0:
        val += mu.atom0 * float(fn(0.0))
    if mu.atom1:
        val += mu.atom1 * float(fn(1.0))
    for loc, mass in mu.interior_atoms:
        val += mass * float(fn(loc))
    if mu.density is not None:
        val += mu.density_integral(fn)
    return val


# ---------------------------------------------------------------------------
# Levy measures on (0, infinity) and the triple (killing, drift, jumps)
# ---------------------------------------------------------------------------

class LevyMeasure:
    """Measure on (0, inf) integrating y ^ 1, as (density, atoms).

    ``small_order`` declares density(y) ~ y**-small_order as y -> 0
    (must be < 2).  ``tail`` and ``tail_inverse``, when supplied, are the
    exact upper tail and its inverse, used by the path sampler; otherwise
    the tail is integrated numerically and inverted through a monotone
    log-grid interpolant.
    """

    def __init__(self, density: Callable | None = None,
                 atoms: Sequence[tuple[float, float]] = (),
                 small_order: float = 0.0,
                 tail: Callable | None = None,
                 tail_inverse: Callable | None = None,
                 unit_beta_terms: Sequence[BetaTerm] = (),
                 tail_index: float | None = None):
        if small_order >= 2.0:
            raise MeasureError("jump density order at 0 must be < 2")
        for y, m in atoms:
            if y <= 0.0 or m <= 0.0:
                raise MeasureError("levy atoms need positive location and mass")
        self.density = density
        self.atoms = tuple((float(y), float(m)) for y, m in atoms)
        self.small_order = float(small_order)
        self._tail = tail
        self.tail_inverse = tail_inverse
        # image of the measure under x = e^-y, when it has beta-mixture form
        # (the b exponents may lie in (-1, 0]: the image need not be finite)
        self.unit_beta_terms = tuple(unit_beta_terms)
        # regular-variation index -tail_index of the tail at 0, when known
        self.tail_index = tail_index

    @property
    def is_zero(self) -> bool:
        return self.density is None and not self.atoms

    def tail(self, y: float) -> float:
        """Mass above level y > 0."""
        if y <= 0.0:
            raise ValueError("tail is defined for y > 0")
        val = sum(m for loc, m in self.atoms if loc > y)
        if self.density is None:
            return val
        if self._tail is not None:
            return val + self._tail(y)
        if y < 1.0:
            v, _ = _sciint.quad(self.density, y, 1.0,
                                epsabs=QUAD_ABS_TOL, epsrel=QUAD_REL_TOL, limit=200)
            val += v
            y = 1.0
        v, _ = _sciint.quad(self.density, y, np.inf,
                            epsabs=QUAD_ABS_TOL, epsrel=QUAD_REL_TOL, limit=200)
        return val + v

    def _moment_below(self, eps: float, power: int) -> float:
        """Integral of y**power over (0, eps); power >= 1."""
        val = sum(loc ** power * m for loc, m in self.atoms if loc <= eps)
        if self.density is None or eps <= 0.0:
            return val
        order = self.small_order - power
        if order > 0.0:
            # substitution y = u**p flattens the residual blow-up
            p = 1.0 / (1.0 - order) if order < 1.0 else None
            if p is None:
                raise MeasureError("moment does not exist near 0")

            def f(u):
                y = u ** p
                return y ** power * self.density(y) * p * u ** (p - 1.0)

            v, _ = _sciint.quad(f, 0.0, eps ** (1.0 / p),
                                epsabs=QUAD_ABS_TOL, epsrel=QUAD_REL_TOL, limit=200)
        else:
            v, _ = _sciint.quad(lambda y: y ** power * self.density(y), 0.0, eps,
                                epsabs=QUAD_ABS_TOL, epsrel=QUAD_REL_TOL, limit=200)
        return val + v

    def mean_below(self, eps: float) -> float:
        return self._moment_below(eps, 1)

    def variance_below(self, eps: float) -> float:
        return self._moment_below(eps, 2)

    def exponent_integral(self, lam: float) -> float:
        """Integral of (1 - exp(-lam*y)) against the measure."""
        val = sum(m * -math.expm1(-lam * y) for y, m in self.atoms)
        if self.density is None:
            return val
        order = self.small_order - 1.0  # (1 - e^{-lam y}) ~ lam*y near 0

        def f(y):
            return -np.expm1(-lam * y) * self.density(y)

        if order > 0.0:
            p = 1.0 / (1.0 - order)

            def g(u):
                y = u ** p
                return f(y) * p * u ** (p - 1.0)

            v, _ = _sciint.quad(g, 0.0, 1.0, epsabs=QUAD_ABS_TOL,
                                epsrel=QUAD_REL_TOL, limit=200)
        else:
            v, _ = _sciint.quad(f, 0.0, 1.0, epsabs=QUAD_ABS_TOL,
                                epsrel=QUAD_REL_TOL, limit=200)
        val += v
        v, _ = _sciint.quad(f, 1.0, np.inf, epsabs=QUAD_ABS_TOL,
                            epsrel=QUAD_REL_TOL, limit=200)
        return val + v


def levy_atom(mass: float, y0: float) -> LevyMeasure:
    """Compound-Poisson jump measure: one atom of the given mass at y0 > 0."""
    return LevyMeasure(atoms=((y0, mass),))


def barrier_levy_measure(gamma: float) -> LevyMeasure:
    """Jump density gamma * e**-y * (1 - e**-y)**-(gamma+1) with closed-form tail."""
    if not 0.0 < gamma < 1.0:
        raise MeasureError("requires gamma in (0, 1)")

    def dens(y):
        y = np.asarray(y, dtype=float)
        em = -np.expm1(-y)  # 1 - e^-y
        return gamma * np.exp(-y) * em ** (-gamma - 1.0)

    def tail(y):
        return (-np.expm1(-y)) ** -gamma - 1.0

    def tail_inverse(v):
        # solves tail(y) = v
        return -np.log1p(-(1.0 + np.asarray(v, dtype=float)) ** (-1.0 / gamma))

    return LevyMeasure(density=dens, small_order=1.0 + gamma,
                       tail=tail, tail_inverse=tail_inverse,
                       unit_beta_terms=(BetaTerm(gamma, 1.0, -gamma),),
                       tail_index=gamma)


@dataclass(frozen=True)
class LevyTriple:
    """Killing rate, drift, and jump measure of a subordinator."""
    killing: float
    drift: float
    levy: LevyMeasure

    def laplace_exponent(self, lam: float) -> float:
        """killing + drift*lam + integral of (1 - e**(-lam*y)) against the jumps.

        Computed in the y coordinate, independently of any [0,1]-side
        representation, so it can serve as a round-trip check.
        """
        if lam < 0.0:
            raise ValueError("needs lam >= 0")
        if lam == 0.0:
            return self.killing
        val = self.killing + self.drift * lam
        if not self.levy.is_zero:
            val += self.levy.exponent_integral(lam)
        return val


def levy_triple(mu: FiniteMeasure) -> LevyTriple:
    """Decompose mu into (killing, drift, jump measure).

    killing = mu({0}), drift = mu({1}); the jump measure is the image of
    (1-x)**-1 mu(dx) restricted to (0,1) under y = -log x.
    """
    atoms = tuple((-math.log(loc), mass / (1.0 - loc)) for loc, mass in mu.interior_atoms)
    if mu.density is None:
        levy = LevyMeasure(atoms=atoms)
        return LevyTriple(mu.atom0, mu.atom1, levy)

    # single beta term with a == 1 admits a closed-form tail
    if len(mu.beta_terms) == 1 and not atoms:
        t = mu.beta_terms[0]
        if t.a == 1.0 and t.b < 1.0:
            g = 1.0 - t.b
            base = barrier_levy_measure(g)
            if t.coef == g:
                return LevyTriple(mu.atom0, mu.atom1, base)
            c = t.coef / g
            dens0 = base.density
            tail0 = base._tail
            levy = LevyMeasure(density=lambda y: c * dens0(y),
                               small_order=base.small_order,
                               tail=lambda y: c * tail0(y),
                               tail_inverse=lambda v: base.tail_inverse(np.asarray(v) / c),
                               unit_beta_terms=(BetaTerm(t.coef, 1.0, t.b - 1.0),),
                               tail_index=g)
            return LevyTriple(mu.atom0, mu.atom1, levy)

    rho = mu.density

    def dens(y):
        y = np.asarray(y, dtype=float)
        x = np.exp(-y)
        return rho(x) * x / (-np.expm1(-y))

    def tail(y0):
        # mass above y0 equals the (1-x)^-1-weighted mass of rho below e^-y0
        upper = math.exp(-y0)
        val, _ = quad_unit(lambda x: rho(x) / (1.0 - x), mu.sing0,
                           min(0.999, mu.sing1 + 1.0), upper=upper)
        return val

    levy = LevyMeasure(density=dens, atoms=atoms,
                       small_order=1.0 + mu.sing1, tail=tail)
    return LevyTriple(mu.atom0, mu.atom1, levy)
