"""Polynomial bistable reaction terms, their potentials and Taylor drifts."""
from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.polynomial import Polynomial


class ReactionError(ValueError):
    pass


class BistableReaction:
    """Reaction term ``f`` given by polynomial coefficients (ascending powers).

    The three consecutive real zeros ``rho_minus < rho_star < rho_plus`` with
    ``f'(rho_pm) < 0 < f'(rho_star)`` are located on construction.  The
    potential is ``V(u) = -int_{rho_minus}^u f``, so that ``V(rho_minus) = 0``
    and, for a balanced reaction, ``V(rho_plus) = 0`` as well.
    """

    def __init__(self, coeffs, name=None, window=None):
        coeffs = np.trim_zeros(np.asarray(coeffs, dtype=float), "b")
        if coeffs.size < 4:
            raise ReactionError("a bistable reaction needs degree >= 3")
        self.coeffs = tuple(float(c) for c in coeffs)
        self.name = name or "poly"
        self.poly = Polynomial(coeffs)
        self._derivs = [self.poly]
        for _ in range(coeffs.size):
            self._derivs.append(self._derivs[-1].deriv())
        self.rho_minus, self.rho_star, self.rho_plus = self._find_zeros(window)
        antideriv = -self.poly.integ()
        self.potential_poly = antideriv - antideriv(self.rho_minus)

    def _find_zeros(self, window):
        r = self.poly.roots()
        r = np.sort(r[np.abs(r.imag) < 1e-9].real)
        if window is not None:
            r = r[(r >= window[0] - 1e-12) & (r <= window[1] + 1e-12)]
        r = np.array([self._polish(x) for x in r])
        d1 = self._derivs[1]
        for i in range(len(r) - 2):
            a, b, c = r[i:i + 3]
            if d1(a) < 0 < d1(b) and d1(c) < 0:
                return float(a), float(b), float(c)
        raise ReactionError(f"no bistable triple of zeros among {r}")

    def _polish(self, x):
        p, dp = self.poly, self._derivs[1]
        for _ in range(6):
            step = p(x) / dp(x)
            x = x - step
            if abs(step) < 1e-17:
                break
        return x

    def __repr__(self):
        return (f"BistableReaction({self.name}, zeros=({self.rho_minus:.6g}, "
                f"{self.rho_star:.6g}, {self.rho_plus:.6g}))")

    @property
    def zeros(self):
        return self.rho_minus, self.rho_star, self.rho_plus

    def f(self, u):
        return self.poly(u)

    __call__ = f

    def df(self, u, k=1):
        """k-th derivative of f."""
        if k >= len(self._derivs):
            return np.zeros_like(np.asarray(u, dtype=float))
        return self._derivs[k](u)

    def potential(self, u):
        return self.potential_poly(u)

    def imbalance(self):
        """int_{rho_-}^{rho_+} f; zero for a balanced reaction."""
        return float(-self.potential_poly(self.rho_plus))

    def is_balanced(self, tol=1e-10):
        return abs(self.imbalance()) <= tol

    def local_potential(self, root):
        """Coefficients of s -> V(root + s) - V(root) as a Polynomial in s.

        The constant and linear terms vanish exactly at a zero of f and are
        set to zero so that tiny offsets keep full relative precision.
        """
        shifted = self.potential_poly(Polynomial([root, 1.0]))
        c = np.array(shifted.coef, dtype=float)
        c[:2] = 0.0
        return Polynomial(c)

    def local_reaction(self, root):
        """Coefficients of s -> f(root + s) with the constant term zeroed."""
        c = np.array(self.poly(Polynomial([root, 1.0])).coef, dtype=float)
        c[0] = 0.0
        return Polynomial(c)

    def sqrt_2v(self, u):
        return np.sqrt(np.maximum(2.0 * self.potential(u), 0.0))

    def taylor_drift(self, u, phi, n=3, N=1, d=1):
        """Truncated expansion sum_k N^{-(k-1)d/2} / k! f^(k)(u) phi^k, k=1..n."""
        if n not in (1, 2, 3):
            raise ReactionError("order n must be 1, 2 or 3")
        u = np.asarray(u, dtype=float)
        phi = np.asarray(phi, dtype=float)
        out = np.zeros(np.broadcast(u, phi).shape)
        scale = float(N) ** (-d / 2.0)
        fact = 1.0
        for k in range(1, n + 1):
            fact *= k
            out = out + scale ** (k - 1) / fact * self.df(u, k) * phi ** k
        return out

    def to_dict(self):
        return {"name": self.name, "coeffs": list(self.coeffs),
                "zeros": [self.rho_minus, self.rho_star, self.rho_plus]}


def check_balance(reaction):
    """int_{rho_-}^{rho_+} f(u) du."""
    return reaction.imbalance()


def make_cubic():
    """f(u) = u - u^3 with zeros -1, 0, 1."""
    return BistableReaction([0.0, 1.0, 0.0, -1.0], name="cubic")


def make_tilted_cubic(delta):
    """Unbalanced cubic (1 - u^2)(u + delta); zeros -1, -delta, 1."""
    if not abs(delta) < 1:
        raise ReactionError("need |delta| < 1")
    p = Polynomial([1.0, 0.0, -1.0]) * Polynomial([delta, 1.0])
    return BistableReaction(p.coef, name=f"tilted_cubic({delta:g})")


def make_skewed_balanced(a=0.1):
    """Balanced quartic (1 - u^2)(u - a)(1 + 5 a u), not odd for a != 0."""
    if not abs(a) < 0.2:
        raise ReactionError("need |a| < 0.2 for the weight to stay positive")
    p = Polynomial([1.0, 0.0, -1.0]) * Polynomial([-a, 1.0]) * Polynomial([1.0, 5 * a])
    return BistableReaction(p.coef, name=f"skewed_balanced({a:g})")


def reaction_from_config(spec):
    """Build a reaction from a config value: a known id or a coefficient list."""
    if isinstance(spec, BistableReaction):
        return spec
    if isinstance(spec, str):
        key = spec.strip().lower()
        if key == "cubic":
            return make_cubic()
        if key.startswith("skewed"):
            return make_skewed_balanced()
        raise ReactionError(f"unknown reaction id {spec!r}")
    return BistableReaction(list(spec))


@dataclass(frozen=True)
class NoiseAmplitudes:
    """Noise coefficients g1 (conservative channel) and g2 (flip channel)."""
    g1: Callable
    g2: Callable
    name: str = "custom"


def constant_amplitudes(a1=1.0, a2=1.0):
    return NoiseAmplitudes(lambda u: a1 + 0.0 * np.asarray(u, dtype=float),
                           lambda u: a2 + 0.0 * np.asarray(u, dtype=float),
                           name=f"constant({a1:g},{a2:g})")
