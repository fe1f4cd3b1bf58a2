"""Spatial spectra of the driving noise and the exponents they induce.

The noise covariance on the circle is ``Q(x) = sum_n q_n cos(n x)``.  Four
families are supported:

``white``        q_n = 1
``riesz:g``      Fourier coefficients of ``|x|**(-g)`` on (-pi, pi)
``fracspace:K``  q_n = n**(1 - 2K)
``powerlaw:a``   q_n = n**(4H - 2a - 1)

Each family satisfies ``q_n ~ n**(4H - 2 alpha - 1)`` for a spatial
regularity exponent ``alpha``; the hitting-probability dimension is
``beta = 1/alpha + max(2/alpha, 1/H)``.
"""
from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

from ._numerics import QuadratureError

KINDS = ("white", "riesz", "fracspace", "powerlaw")

RIESZ_CAP = 100_000


class ModelDomainError(ValueError):
    """The requested model is outside the domain where the theory applies."""


@dataclass(frozen=True)
class ExponentPair:
    alpha: float
    beta: float


class _RieszTable:
    """Memoized cumulative sums of the alternating terms r(k) for one gamma."""

    def __init__(self, gamma: float):
        self.gamma = gamma
        self._r = np.empty(0)
        self._c = np.empty(0)
        self._lock = threading.Lock()

    def _term(self, k: int) -> float:
        g = self.gamma
        if k == 0:
            # x = u**(1/(1-g)) removes the x**(-g) endpoint singularity
            e = 1.0 / (1.0 - g)

            def f(u):
                if u == 0.0:
                    return e
                x = u ** e
                return e * math.sin(x) * x ** (-g - 1.0) * u ** (e - 1.0)

            val, err = integrate.quad(f, 0.0, math.pi ** (1.0 - g), epsabs=1e-13, epsrel=1e-12, limit=200)
        else:
            a, b = k * math.pi, (k + 1) * math.pi
            val, err = integrate.quad(lambda x: x ** (-g - 1.0) * abs(math.sin(x)), a, b,
                                      epsabs=1e-15, epsrel=1e-12, limit=200)
        if err > 1e-10:
            raise QuadratureError(f"Riesz term r({k}) did not converge", residual=err)
        return 2.0 * g * (-1.0) ** k * val

    def cumulative(self, n_max: int) -> np.ndarray:
        """c(n) = sum_{k<n} r(k) for n = 1..n_max (index n-1)."""
        n_max = min(int(n_max), RIESZ_CAP)
        if self._c.size < n_max:
            with self._lock:
                start = self._r.size
                if start < n_max:
                    new = np.array([self._term(k) for k in range(start, n_max)])
                    r = np.concatenate([self._r, new])
                    self._c = np.cumsum(r)
                    self._r = r
        return self._c[:n_max]


_RIESZ_TABLES: dict[float, _RieszTable] = {}
_RIESZ_LOCK = threading.Lock()


def _riesz_table(gamma: float) -> _RieszTable:
    with _RIESZ_LOCK:
        tab = _RIESZ_TABLES.get(gamma)
        if tab is None:
            tab = _RIESZ_TABLES[gamma] = _RieszTable(gamma)
    return tab


def riesz_limit(gamma: float) -> float:
    """lim c(n) = 2 * int_0^inf cos(x) x**(-gamma) dx."""
    return 2.0 * special.gamma(1.0 - gamma) * math.sin(math.pi * gamma / 2.0)


@dataclass(frozen=True)
class SpectrumModel:
    kind: str
    H: float
    param: float | None = None
    q0: float | None = field(default=None, compare=True)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ModelDomainError(f"unknown spectrum kind {self.kind!r}")
        if not 0.0 < self.H < 1.0:
            raise ModelDomainError(f"Hurst parameter must lie in (0, 1), got {self.H}")
        if self.kind == "white":
            if self.param is not None:
                raise ModelDomainError("white spectrum takes no parameter")
        else:
            if self.param is None:
                raise ModelDomainError(f"{self.kind} spectrum needs a parameter")
        if self.kind == "riesz" and not 0.0 < self.param < 1.0:
            raise ModelDomainError("Riesz gamma must lie strictly in (0, 1)")
        if self.kind == "fracspace" and not 0.0 < self.param < 1.0:
            raise ModelDomainError("fractional-space K must lie in (0, 1)")
        if self.kind == "powerlaw":
            if not 0.0 < self.param <= 1.0:
                raise ModelDomainError("power-law alpha must lie in (0, 1]")
            if abs(self.param - 2.0 * self.H) < 1e-12:
                raise ModelDomainError("power-law alpha must differ from 2H")
        if self.q0 is not None and self.q0 < 0:
            raise ModelDomainError("q_0 must be non-negative")

    # ------------------------------------------------------------------ spec
    @classmethod
    def parse(cls, text: str, H: float, q0: float | None = None) -> "SpectrumModel":
        """Parse ``white``, ``riesz:<g>``, ``fracspace:<K>`` or ``powerlaw:<a>``."""
        text = text.strip().lower()
        if ":" in text:
            kind, _, arg = text.partition(":")
            try:
                param = float(arg)
            except ValueError:
                raise ModelDomainError(f"bad spectrum parameter in {text!r}") from None
        else:
            kind, param = text, None
        return cls(kind=kind, H=float(H), param=param, q0=q0)

    def spec_string(self) -> str:
        if self.kind == "white":
            return "white"
        return f"{self.kind}:{self.param!r}"

    # ---------------------------------------------------------- coefficients
    @property
    def q_zero(self) -> float:
        if self.q0 is not None:
            return float(self.q0)
        return 1.0 if self.kind == "white" else 0.0

    @property
    def growth(self) -> float:
        """Exponent e with q_n ~ n**e."""
        if self.kind == "white":
            return 0.0
        if self.kind == "riesz":
            return self.param - 1.0
        if self.kind == "fracspace":
            return 1.0 - 2.0 * self.param
        return 4.0 * self.H - 2.0 * self.param - 1.0

    @property
    def alpha(self) -> float:
        """Spatial exponent alpha = (4H - 1 - e) / 2 (not range-checked)."""
        if self.kind == "powerlaw":
            return float(self.param)
        return (4.0 * self.H - 1.0 - self.growth) / 2.0

    def q(self, n) -> np.ndarray:
        """Coefficients q_n for integer ``n >= 1`` (vectorized)."""
        n_arr = np.atleast_1d(np.asarray(n))
        if n_arr.size and (np.any(n_arr < 1) or np.any(n_arr != np.floor(n_arr))):
            raise ValueError("q_n is defined here for integer n >= 1; q_0 is the q_zero field")
        nf = n_arr.astype(float)
        if self.kind == "white":
            out = np.ones_like(nf)
        elif self.kind == "riesz":
            out = nf ** (self.param - 1.0) * self._riesz_c(n_arr.astype(np.int64))
        else:
            out = nf ** self.growth
        return out if np.ndim(n) else out[0]

    def _riesz_c(self, n: np.ndarray) -> np.ndarray:
        g = self.param
        out = np.empty(n.shape, dtype=float)
        small = n <= RIESZ_CAP
        if np.any(small):
            table = _riesz_table(g).cumulative(int(n[small].max()))
            out[small] = table[n[small] - 1]
        if np.any(~small):
            # beyond the memo cap: two-term tail of the alternating series
            nb = n[~small].astype(float)
            out[~small] = riesz_limit(g) - 2.0 * g * (-1.0) ** n[~small] * (nb * math.pi) ** (-g - 1.0)
        return out

    def q_asymptotic(self):
        """Terms ``(coef, power, theta)`` with ``q_n ~ sum coef n**power cos(n theta)``.

        The neglected remainder is O(n**-4) for Riesz and zero otherwise.
        """
        if self.kind == "riesz":
            g = self.param
            return [(riesz_limit(g), g - 1.0, 0.0),
                    (-2.0 * g * math.pi ** (-g - 1.0), -2.0, math.pi)]
        return [(1.0, self.growth, 0.0)]

    def __repr__(self):
        return f"SpectrumModel({self.spec_string()!r}, H={self.H!r})"


def q_coeff(model: SpectrumModel, n: int) -> float:
    """q_n for a single positive integer n."""
    if int(n) != n or n < 1:
        raise ValueError("n must be a positive integer")
    return float(model.q(int(n)))


def existence_margin(model: SpectrumModel, cap: int = 4096) -> dict:
    """Whether ``sum q_n n**(-4H)`` converges, with partial sums for diagnostics."""
    exponent = model.growth - 4.0 * model.H
    n = np.arange(1, cap + 1)
    terms = model.q(n) * n.astype(float) ** (-4.0 * model.H)
    checkpoints = 2 ** np.arange(0, int(np.log2(cap)) + 1)
    partial = np.cumsum(terms)[checkpoints - 1]
    return {
        "convergent": bool(exponent < -1.0),
        "exponent": exponent,
        "partial_sums": list(zip(checkpoints.tolist(), partial.tolist())),
    }


def _closed_form_beta(model: SpectrumModel) -> float | None:
    H = model.H
    if model.kind == "white":
        return 6.0 / (4.0 * H - 1.0)
    if model.kind == "riesz":
        return 6.0 / (4.0 * H - model.param)
    if model.kind == "fracspace":
        return 3.0 / (2.0 * H + model.param - 1.0)
    return None


def beta_from(alpha: float, H: float) -> float:
    return 1.0 / alpha + max(2.0 / alpha, 1.0 / H)


def exponents(model: SpectrumModel) -> ExponentPair:
    """Spatial exponent alpha and dimension exponent beta of the solution."""
    if not existence_margin(model, cap=2)["convergent"]:
        raise ModelDomainError(f"{model!r}: no solution (sum q_n n^-4H diverges)")
    alpha = model.alpha
    if alpha <= 0:
        raise ModelDomainError(f"{model!r}: alpha = {alpha} <= 0, no Holder regularity")
    if alpha > 1.0 + 1e-12:
        raise ModelDomainError(f"{model!r}: alpha = {alpha} > 1 is outside (0, 1]")
    if abs(alpha - 2.0 * model.H) < 1e-12:
        raise ModelDomainError(f"{model!r}: alpha = 2H is excluded")
    beta = beta_from(alpha, model.H)
    closed = _closed_form_beta(model)
    if closed is not None and abs(closed - beta) > 1e-12 * max(1.0, beta):
        raise ArithmeticError(f"closed-form beta {closed} disagrees with {beta}")
    return ExponentPair(alpha=alpha, beta=beta)
