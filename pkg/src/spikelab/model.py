"""Domain types for the spiky spot-price model.

The observed price (or log-price) is X_t = Xc_t + Z_t, where Xc is a
continuous Ito semimartingale and Z is a shot-noise spike process

    Z_t = sum_{T_q <= t} J_q * exp(-beta * (t - T_q)),

with jump times T_q arriving at Poisson intensity ``lambda`` and jump sizes
J_q drawn i.i.d. from a law ``nu`` with no atom at zero and finite second
moment.  All rates are per unit of normalized time (the horizon maps to 1).

This module holds the jump-size laws (sampling, polynomial and exponential
moments), the observation grid, the spike/continuous parameter bundles and
the asymptotic-regime diagnostics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

__all__ = [
    "GridSpec",
    "SampledPath",
    "JumpLaw",
    "SignedExponentialMixture",
    "Empirical",
    "PointMass",
    "SpikeParams",
    "ExpOU",
    "Flat",
    "ContinuousSpec",
    "ModelSpec",
    "AssumptionReport",
    "sample_jump",
    "law_moment",
    "law_exp_moment",
    "check_assumptions",
    "sign",
]


def sign(x):
    """Sign convention used by the slope estimator: sign(x) = 1 if x >= 0 else -1."""
    return np.where(np.asarray(x) >= 0, 1.0, -1.0)[()]


@dataclass(frozen=True)
class GridSpec:
    """Regular observation grid: n increments of width mesh = horizon / n."""

    n: int
    horizon: float = 1.0

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"grid needs n >= 2 increments, got n={self.n}")
        if not (self.horizon > 0 and math.isfinite(self.horizon)):
            raise ValueError(f"horizon must be positive and finite, got {self.horizon}")

    @property
    def mesh(self) -> float:
        return self.horizon / self.n

    def times(self) -> np.ndarray:
        """Observation times t_i = i * mesh, i = 0..n."""
        return np.arange(self.n + 1) * self.mesh


@dataclass(frozen=True)
class SampledPath:
    """Values of a process on a GridSpec: (n + 1) observations X_0 .. X_T."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if values.shape != (self.grid.n + 1,):
            raise ValueError(
                f"expected {self.grid.n + 1} observations, got shape {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("path contains non-finite values")

    def increments(self) -> np.ndarray:
        """Increments D_i X = X_{t_i} - X_{t_{i-1}}, i = 1..n (0-based array)."""
        return np.diff(self.values)


# ---------------------------------------------------------------------------
# Jump-size laws
# ---------------------------------------------------------------------------


class JumpLaw:
    """Base class for jump-size distributions (no atom at zero)."""

    def sample(self, rng: np.random.Generator, size: Optional[int] = None):
        raise NotImplementedError

    def moment(self, m: int = 1, kind: str = "signed") -> float:
        raise NotImplementedError

    def exp_moment(self, u: float) -> float:
        raise NotImplementedError

    def mean(self) -> float:
        return self.moment(1, "signed")


def _never_zero(draws: np.ndarray, rng: np.random.Generator, redraw) -> np.ndarray:
    # nu({0}) = 0: a zero draw is an RNG boundary artifact, redraw it.
    bad = draws == 0.0
    while np.any(bad):
        draws[bad] = redraw(int(bad.sum()))
        bad = draws == 0.0
    return draws


@dataclass(frozen=True)
class SignedExponentialMixture(JumpLaw):
    """Mixture of signed exponential components.

    Component i draws sign_i * E where E ~ Exponential(rate_i) (mean
    1 / rate_i); sign -1 means the law of the negated exponential.  For
    example weights (0.4, 0.6), rates (15, 10), signs (-1, +1) is the
    mixture 0.4 * (-Exp(15)) + 0.6 * Exp(10).
    """

    weights: tuple
    rates: tuple
    signs: tuple

    def __post_init__(self):
        w = tuple(float(x) for x in self.weights)
        b = tuple(float(x) for x in self.rates)
        s = tuple(int(x) for x in self.signs)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "rates", b)
        object.__setattr__(self, "signs", s)
        if not (len(w) == len(b) == len(s)) or len(w) == 0:
            raise ValueError("weights, rates and signs must have equal nonzero length")
        if abs(sum(w) - 1.0) > 1e-12 or any(x < 0 for x in w):
            raise ValueError(f"weights must be a probability vector, got {w}")
        if any(x <= 0 for x in b):
            raise ValueError(f"rates must be positive, got {b}")
        if any(x not in (-1, 1) for x in s):
            raise ValueError(f"signs must be +-1, got {s}")

    def sample(self, rng, size=None):
        k = 1 if size is None else int(size)
        comp = rng.choice(len(self.weights), size=k, p=self.weights)
        rates = np.asarray(self.rates)[comp]
        signs = np.asarray(self.signs, dtype=float)[comp]
        draws = signs * rng.exponential(1.0, k) / rates

        def redraw(m):
            c = rng.choice(len(self.weights), size=m, p=self.weights)
            return (
                np.asarray(self.signs, dtype=float)[c]
                * rng.exponential(1.0, m)
                / np.asarray(self.rates)[c]
            )

        draws = _never_zero(draws, rng, redraw)
        return float(draws[0]) if size is None else draws

    def moment(self, m=1, kind="signed"):
        if kind == "sign":
            return float(sum(w * s for w, s in zip(self.weights, self.signs)))
        if m < 0:
            raise ValueError("moment order must be nonnegative")
        # E[(sE)^m] = s^m * m! / rate^m for an Exponential(rate) component.
        total = 0.0
        for w, b, s in zip(self.weights, self.rates, self.signs):
            absolute = math.factorial(m) / b**m
            total += w * (absolute if kind == "absolute" else s**m * absolute)
        if kind not in ("signed", "absolute"):
            raise ValueError(f"unknown moment kind {kind!r}")
        return total

    def exp_moment(self, u):
        # E[exp(u * s * E)] = rate / (rate - s*u), finite iff s*u < rate.
        total = 0.0
        for i, (w, b, s) in enumerate(zip(self.weights, self.rates, self.signs)):
            if s * u >= b:
                raise ValueError(
                    f"exponential moment diverges at u={u}: component {i} "
                    f"(sign {s:+d}, rate {b}) requires u*sign < rate"
                )
            total += w * b / (b - s * u)
        return total


@dataclass(frozen=True)
class Empirical(JumpLaw):
    """Resampling law: each stored jump size with equal probability."""

    samples: np.ndarray

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        object.__setattr__(self, "samples", samples)
        if samples.ndim != 1 or samples.size == 0:
            raise ValueError("need a nonempty 1-d sample of jump sizes")
        if not np.all(np.isfinite(samples)) or np.any(samples == 0.0):
            raise ValueError("samples must be finite and nonzero")

    def sample(self, rng, size=None):
        draws = rng.choice(self.samples, size=1 if size is None else int(size))
        return float(draws[0]) if size is None else draws

    def moment(self, m=1, kind="signed"):
        if kind == "sign":
            return float(np.mean(sign(self.samples)))
        if kind == "signed":
            return float(np.mean(self.samples**m))
        if kind == "absolute":
            return float(np.mean(np.abs(self.samples) ** m))
        raise ValueError(f"unknown moment kind {kind!r}")

    def exp_moment(self, u):
        vals = np.exp(u * self.samples)
        if not np.all(np.isfinite(vals)):
            raise ValueError(f"exponential moment overflows at u={u} for empirical law")
        return float(np.mean(vals))


@dataclass(frozen=True)
class PointMass(JumpLaw):
    """Degenerate law: every jump has the same nonzero size."""

    size: float

    def __post_init__(self):
        if self.size == 0 or not math.isfinite(self.size):
            raise ValueError("point mass must sit at a finite nonzero size")

    def sample(self, rng, size=None):
        if size is None:
            return self.size
        return np.full(int(size), self.size)

    def moment(self, m=1, kind="signed"):
        if kind == "sign":
            return float(sign(self.size))
        if kind == "signed":
            return float(self.size**m)
        if kind == "absolute":
            return float(abs(self.size) ** m)
        raise ValueError(f"unknown moment kind {kind!r}")

    def exp_moment(self, u):
        return float(math.exp(u * self.size))


def sample_jump(law: JumpLaw, rng: np.random.Generator) -> float:
    """Draw one jump size from the law; never exactly zero."""
    return law.sample(rng)


def law_moment(law: JumpLaw, m: int = 1, kind: str = "signed") -> float:
    """Moment of the jump law: kind in {'signed', 'absolute', 'sign'}.

    'signed' returns x^m integrated against the law, 'absolute' |x|^m, and
    'sign' the sign mass (m is ignored).  Closed form for mixtures and point
    masses, exact sample average for empirical laws.
    """
    return law.moment(m, kind)


def law_exp_moment(law: JumpLaw, u: float) -> float:
    """Exponential moment: integral of exp(u * x) against the law.

    Raises ValueError naming the offending component when u falls outside
    the convergence strip.
    """
    return law.exp_moment(u)


# ---------------------------------------------------------------------------
# Parameter bundles
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SpikeParams:
    """Spike process parameters: arrival intensity, reversion speed, size law."""

    intensity: float
    reversion: float
    law: JumpLaw

    def __post_init__(self):
        if not (self.intensity > 0 and math.isfinite(self.intensity)):
            raise ValueError(f"intensity must be positive, got {self.intensity}")
        if not (self.reversion > 0 and math.isfinite(self.reversion)):
            raise ValueError(f"reversion must be positive, got {self.reversion}")


@dataclass(frozen=True)
class ExpOU:
    """Exponential of an Ornstein-Uhlenbeck process.

    The log-price Y = log Xc follows dY = -reversion * Y dt + vol dW, so Xc
    solves dXc = Xc * ((vol^2 / 2 - reversion * log Xc) dt + vol dW).
    """

    reversion: float
    vol: float
    initial: float = 1.0

    def __post_init__(self):
        if not self.vol > 0:
            raise ValueError(f"vol must be positive, got {self.vol}")
        if not self.initial > 0:
            raise ValueError(f"initial must be positive, got {self.initial}")


@dataclass(frozen=True)
class Flat:
    """Constant continuous part (useful for synthetic tests)."""

    level: float = 0.0


# The two-factor variant lives in spikelab.pricing (TwoFactorDynamics); any of
# the three can be used as the continuous leg of a ModelSpec.
ContinuousSpec = Union[ExpOU, Flat, "object"]


@dataclass(frozen=True)
class ModelSpec:
    """Full price model: continuous part plus spike parameters."""

    continuous: ContinuousSpec
    spikes: SpikeParams


# ---------------------------------------------------------------------------
# Assumption diagnostics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AssumptionReport:
    """Magnitudes and regime suggestion for the sampling-asymptotics conditions.

    Diagnostics only: nothing here refuses to proceed.  Regime I is the plain
    threshold setting (needs lambda^2 * mesh small and beta * mesh well below
    one); regime II is the sign-filtered setting for fast reversion (needs the
    per-step relaxation to dominate the Brownian scale sqrt(mesh)).
    """

    lambda_mesh: float
    beta_mesh: float
    intensity_ratio: float  # lambda / beta
    lambda_sq_mesh: float
    beta_mesh_over_brownian: float  # beta * mesh^(1/2 - varpi)
    lambda_sq_mesh_window: Optional[float]  # lambda^2 * mesh * k^2, if k given
    regime_i_ok: bool
    regime_ii_ok: bool
    stability_ok: bool  # lambda <~ beta
    regime: str  # "I", "II" or "neither"
    thresholds: dict = field(default_factory=dict)


def check_assumptions(
    params: SpikeParams,
    grid: GridSpec,
    varpi: float,
    window: Optional[int] = None,
    small: float = 0.1,
    large: float = 10.0,
) -> AssumptionReport:
    """Report the asymptotic-regime magnitudes for (intensity, reversion, mesh).

    ``small`` and ``large`` are the configurable cutoffs standing in for the
    asymptotic orders; ``window`` is the optional regime-II spacing k (purely
    diagnostic, it enters no estimator).
    """
    if not (0 < varpi < 0.5):
        raise ValueError(f"varpi must lie in (0, 1/2), got {varpi}")
    lam, beta, mesh = params.intensity, params.reversion, grid.mesh
    lam_mesh = lam * mesh
    beta_mesh = beta * mesh
    lam_sq_mesh = lam * lam * mesh
    ratio = lam / beta
    # beta * mesh vs the Brownian increment scale sqrt(mesh), at the detection
    # exponent: beta * mesh^(1 - varpi) / sqrt(mesh).
    beta_vs_brownian = beta * mesh ** (0.5 - varpi)
    window_mag = None if window is None else lam_sq_mesh * window**2

    regime_i = (lam_sq_mesh < small) and (beta_mesh < 1.0)
    regime_ii = beta_vs_brownian >= 1.0
    stability = ratio <= large

    if regime_ii:
        regime = "II"  # preferred where available: robust to reversion artifacts
    elif regime_i:
        regime = "I"
    else:
        regime = "neither"

    return AssumptionReport(
        lambda_mesh=lam_mesh,
        beta_mesh=beta_mesh,
        intensity_ratio=ratio,
        lambda_sq_mesh=lam_sq_mesh,
        beta_mesh_over_brownian=beta_vs_brownian,
        lambda_sq_mesh_window=window_mag,
        regime_i_ok=regime_i,
        regime_ii_ok=regime_ii,
        stability_ok=stability,
        regime=regime,
        thresholds={"small": small, "large": large, "varpi": varpi},
    )
