"""Density-suppressed motility functions gamma(v) and their constants."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

KINDS = ("exp", "power", "gauss", "double_exp", "power_log")
SINGULAR_KINDS = ("power", "power_log")
DEFAULT_S_MIN = 1e-8


class MotilityDomainError(ValueError):
    """Evaluation below the cutoff of a motility that is singular at 0."""


@dataclass(frozen=True)
class Motility:
    """One member of the motility family.

    kinds: ``exp`` e^{-s}; ``power`` c0 s^{-k}; ``gauss`` e^{-s^2};
    ``double_exp`` e^{-e^s}; ``power_log`` c0 / (s^k log(1+s)).
    ``c0`` and ``k`` are ignored by the kinds that do not use them.
    """

    kind: str = "exp"
    c0: float = 1.0
    k: float = 1.0
    s_min: float = DEFAULT_S_MIN

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown motility kind {self.kind!r}; expected one of {KINDS}")
        if self.kind in SINGULAR_KINDS:
            if self.c0 <= 0 or self.k <= 0:
                raise ValueError("c0 and k must be positive")
            if self.s_min <= 0:
                raise ValueError("singular motilities need s_min > 0")

    @property
    def singular(self) -> bool:
        return self.kind in SINGULAR_KINDS

    @property
    def lower_cutoff(self) -> float:
        return self.s_min if self.singular else 0.0

    def _check(self, s):
        s = np.asarray(s, dtype=float)
        if self.singular and np.any(s < self.s_min):
            raise MotilityDomainError(
                f"{self.kind} motility evaluated at {np.min(s):.3g} < s_min={self.s_min:g}")
        return s

    def gamma(self, s):
        return self.eval(s)[0]

    def eval(self, s):
        """Return ``(gamma, gamma', gamma'')`` at ``s`` (scalar or array)."""
        s = self._check(s)
        kind = self.kind
        if kind == "exp":
            e = np.exp(-s)
            return e, -e, e
        if kind == "power":
            c0, k = self.c0, self.k
            g = c0 * s ** (-k)
            return g, -k * g / s, k * (k + 1) * g / s**2
        if kind == "gauss":
            e = np.exp(-s * s)
            return e, -2 * s * e, (4 * s * s - 2) * e
        if kind == "double_exp":
            es = np.exp(s)
            e = np.exp(-es)
            return e, -es * e, (es * es - es) * e
        # power_log
        c0, k = self.c0, self.k
        lg = np.log1p(s)
        h = s**k * lg
        h1 = k * s ** (k - 1) * lg + s**k / (1 + s)
        h2 = k * (k - 1) * s ** (k - 2) * lg + 2 * k * s ** (k - 1) / (1 + s) - s**k / (1 + s) ** 2
        g = c0 / h
        return g, -c0 * h1 / h**2, c0 * (2 * h1**2 / h**3 - h2 / h**2)

    def log_gamma(self, s):
        """``log gamma(s)`` without underflow, for large-argument limits."""
        s = self._check(s)
        kind = self.kind
        if kind == "exp":
            return -s
        if kind == "power":
            return np.log(self.c0) - self.k * np.log(s)
        if kind == "gauss":
            return -s * s
        if kind == "double_exp":
            return -np.exp(s)
        return np.log(self.c0) - self.k * np.log(s) - np.log(np.log1p(s))

    def ratio(self, s):
        """``|gamma'(s)|^2 / gamma(s)``."""
        g, g1, _ = self.eval(s)
        return g1 * g1 / g


def compute_K0(m: Motility, s_max: float = 50.0, n_samples: int = 4096) -> float:
    """``K0 = sup_{s >= 0} |gamma'|^2 / gamma``, or ``inf`` when it diverges.

    Every provided kind has ratio -> 0 as s -> inf, so the sup is attained on
    ``[0, s_max]`` once ``s_max`` is past the bump; the singular kinds diverge
    as s -> 0.
    """
    if n_samples < 1000:
        raise ValueError("n_samples must be at least 1000")
    if m.singular:
        return float("inf")
    s = np.linspace(0.0, s_max, n_samples)
    with np.errstate(over="ignore", invalid="ignore", under="ignore"):
        r = np.nan_to_num(m.ratio(s), nan=0.0)
    i = int(np.argmax(r))
    best = float(r[i])
    lo, hi = s[max(i - 1, 0)], s[min(i + 1, s.size - 1)]
    if hi > lo:
        res = minimize_scalar(lambda x: -float(m.ratio(x)), bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-12})
        best = max(best, -float(res.fun))
    return best


def check_A2(m: Motility, k_witness: float, s_probe) -> bool:
    """Numerical witness that ``s^k gamma(s) -> +inf`` along the probes.

    True when ``k log s + log gamma(s)`` strictly increases across the probes
    and gains at least one unit (a factor e) between the first and last.
    """
    s = np.asarray(s_probe, dtype=float)
    if s.size < 2 or np.any(np.diff(s) <= 0):
        raise ValueError("probes must be strictly increasing")
    if s[-1] < 1e6:
        raise ValueError("last probe must be >= 1e6")
    vals = k_witness * np.log(s) + m.log_gamma(s)
    return bool(np.all(np.diff(vals) > 0) and vals[-1] - vals[0] >= 1.0)
