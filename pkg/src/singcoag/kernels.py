"""Coagulation kernel families, cut-off truncation, and singularity envelopes.

A kernel K(x, y) is the rate at which particles of sizes x and y coalesce.
All built-in families are symmetric and nonnegative on ]0, inf[^2; several
are singular on the axes (they blow up as x or y -> 0), which is why the
solver works with the truncated kernel produced by :func:`kernel_cutoff_eval`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

FAMILIES = ("constant", "smoluchowski", "eke", "granulation", "custom")

__all__ = [
    "FAMILIES",
    "KernelSpec",
    "Cutoff",
    "SingularBound",
    "BoundCertificate",
    "make_kernel",
    "kernel_eval",
    "kernel_cutoff_eval",
    "default_bound",
    "envelope_eval",
    "verify_bound",
]


@dataclass(frozen=True)
class KernelSpec:
    """A symmetric nonnegative coagulation rate K(x, y).

    Instances are immutable; evaluation is pure and safe to share across
    concurrent workers.  Use :func:`make_kernel` to construct one with
    parameter validation.
    """

    family: str
    kappa0: float = 1.0  # constant family: K == kappa0
    a: float = 1.0       # granulation family: K = (x+y)^a / (xy)^b
    b: float = 0.25
    func: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise ValueError(
                f"unknown kernel family {self.family!r}; expected one of {FAMILIES}"
            )
        if self.family == "constant" and not self.kappa0 >= 0.0:
            raise ValueError(f"constant kernel needs kappa0 >= 0, got {self.kappa0}")
        if self.family == "granulation":
            if not (np.isfinite(self.a) and self.a >= 0.0):
                raise ValueError(f"granulation exponent a must be >= 0, got {self.a}")
            if not (np.isfinite(self.b) and self.b >= 0.0):
                raise ValueError(f"granulation exponent b must be >= 0, got {self.b}")
        if self.family == "custom" and self.func is None:
            raise ValueError("custom kernel needs a binary rate function")

    @property
    def label(self) -> str:
        if self.family == "constant":
            return f"constant(kappa0={self.kappa0:g})"
        if self.family == "granulation":
            return f"granulation(a={self.a:g}, b={self.b:g})"
        return self.family


def make_kernel(family: str, **params) -> KernelSpec:
    """Build a validated KernelSpec for one of the built-in families.

    Parameters
    ----------
    family : str
        One of ``constant``, ``smoluchowski``, ``eke``, ``granulation``,
        ``custom``.
    params
        ``kappa0`` for the constant family, ``a``/``b`` for granulation,
        ``func`` for custom.  Unknown or inapplicable keys are rejected.
    """
    allowed = {
        "constant": {"kappa0"},
        "smoluchowski": set(),
        "eke": set(),
        "granulation": {"a", "b"},
        "custom": {"func"},
    }.get(family)
    if allowed is None:
        raise ValueError(
            f"unknown kernel family {family!r}; expected one of {FAMILIES}"
        )
    extra = set(params) - allowed
    if extra:
        raise ValueError(
            f"parameters {sorted(extra)} do not apply to the {family!r} family"
        )
    return KernelSpec(family=family, **params)


def _as_positive_sizes(x, y) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(x <= 0.0) or np.any(y <= 0.0):
        raise ValueError("kernel arguments must be positive sizes")
    return x, y


def kernel_eval(spec: KernelSpec, x, y):
    """Evaluate K(x, y) for positive sizes; vectorized over array inputs.

    The built-in families are written in terms of commutative numpy ops, so
    evaluation order does not matter: K(x, y) == K(y, x) bit for bit.
    """
    x, y = _as_positive_sizes(x, y)
    if spec.family == "constant":
        out = np.broadcast_to(np.float64(spec.kappa0), np.broadcast_shapes(x.shape, y.shape)).copy()
    elif spec.family == "smoluchowski":
        cx, cy = np.cbrt(x), np.cbrt(y)
        out = (cx + cy) * (1.0 / cx + 1.0 / cy)
    elif spec.family == "eke":
        out = (np.cbrt(x) + np.cbrt(y)) ** 2 * np.sqrt(1.0 / x + 1.0 / y)
    elif spec.family == "granulation":
        out = (x + y) ** spec.a / (x * y) ** spec.b
    else:
        out = np.asarray(spec.func(x, y), dtype=float)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class Cutoff:
    """Truncation level n confining interactions to x, y >= 1/n with x + y <= n."""

    n: float

    def __post_init__(self) -> None:
        if not (np.isfinite(self.n) and self.n >= 2.0):
            raise ValueError(f"cutoff level must satisfy n >= 2, got {self.n}")


def kernel_cutoff_eval(spec: KernelSpec, cutoff: Cutoff, x, y):
    """Evaluate the truncated kernel: K(x, y) inside the cut-off support, else 0.

    The support is {x + y <= n, x >= 1/n, y >= 1/n}; outside it the rate is
    exactly zero, which removes the axis singularities and caps the largest
    coalesced size at n.
    """
    x, y = _as_positive_sizes(x, y)
    rate = np.asarray(kernel_eval(spec, x, y), dtype=float)
    lo = 1.0 / cutoff.n
    inside = (x + y <= cutoff.n) & (x >= lo) & (y >= lo)
    out = np.where(inside, rate, 0.0)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class SingularBound:
    """Envelope kappa * (1 + x + y)**lam * (x*y)**(-sigma) dominating a kernel.

    The admissible exponent range is sigma in [0, 1/2] and lam - sigma in
    [0, 1); outside it the truncation scheme's a-priori estimates do not
    apply, so construction is rejected.
    """

    kappa: float
    lam: float
    sigma: float

    def __post_init__(self) -> None:
        if not (np.isfinite(self.kappa) and self.kappa > 0.0):
            raise ValueError(f"envelope constant kappa must be positive, got {self.kappa}")
        if not 0.0 <= self.sigma <= 0.5:
            raise ValueError(f"sigma must lie in [0, 1/2], got {self.sigma}")
        growth = self.lam - self.sigma
        if not 0.0 <= growth < 1.0:
            raise ValueError(f"lam - sigma must lie in [0, 1), got {growth}")


def envelope_eval(bound: SingularBound, x, y):
    """Evaluate the envelope kappa (1+x+y)^lam (xy)^(-sigma)."""
    x, y = _as_positive_sizes(x, y)
    out = bound.kappa * (1.0 + x + y) ** bound.lam * (x * y) ** (-bound.sigma)
    return out if out.ndim else float(out)


def default_bound(spec: KernelSpec) -> SingularBound:
    """Shipped envelope certificate for a built-in family.

    The constants are not prescribed anywhere; they are derived and then
    confirmed by :func:`verify_bound` in the test suite:

    * constant kappa0:  (kappa0, 0, 0) -- equality, exact.
    * smoluchowski:     (3, 2/3, 1/3) -- the ratio is at most 2^(4/3) < 3
      (pair the 2(xy)^(1/3) cross term against x^(2/3) + y^(2/3)).
    * eke:              (3, 7/6, 1/2) -- (x^(1/3)+y^(1/3))^2 <= 2^(4/3)(x+y)^(2/3).
    * granulation:      (1, a, b) -- pointwise, since x + y <= 1 + x + y.
    """
    if spec.family == "constant":
        return SingularBound(kappa=spec.kappa0 if spec.kappa0 > 0 else 1.0, lam=0.0, sigma=0.0)
    if spec.family == "smoluchowski":
        return SingularBound(kappa=3.0, lam=2.0 / 3.0, sigma=1.0 / 3.0)
    if spec.family == "eke":
        return SingularBound(kappa=3.0, lam=7.0 / 6.0, sigma=0.5)
    if spec.family == "granulation":
        return SingularBound(kappa=1.0, lam=spec.a, sigma=spec.b)
    raise ValueError("custom kernels carry no shipped envelope; supply one explicitly")


@dataclass(frozen=True)
class BoundCertificate:
    """Outcome of sampling-based envelope verification.

    ``ratio`` is the largest sampled K/envelope; on failure ``witness_x`` and
    ``witness_y`` locate it.  A certificate is evidence for the sampled
    region, not a proof.
    """

    passed: bool
    witness_x: float
    witness_y: float
    ratio: float
    samples: int


def verify_bound(
    spec: KernelSpec,
    bound: SingularBound,
    domain: tuple[tuple[float, float], tuple[float, float]] = ((1e-6, 1e6), (1e-6, 1e6)),
    samples: int = 256,
) -> BoundCertificate:
    """Check K <= envelope on a log-spaced grid plus a diagonal refinement.

    Parameters
    ----------
    spec, bound
        Kernel and candidate envelope (the envelope is validated on
        construction, before any sampling happens).
    domain
        ((x_lo, x_hi), (y_lo, y_hi)) rectangle inside ]0, inf[^2.
    samples
        Points per axis of the log-spaced grid; the diagonal x == y gets a
        4x denser sweep because several families peak there.

    Returns
    -------
    BoundCertificate
        ``passed`` is True iff every sampled ratio K/envelope is <= 1; on
        failure the worst-ratio witness point is reported.
    """
    (x_lo, x_hi), (y_lo, y_hi) = domain
    for lo, hi in ((x_lo, x_hi), (y_lo, y_hi)):
        if not (0.0 < lo <= hi and np.isfinite(hi)):
            raise ValueError(f"domain range ({lo}, {hi}) must satisfy 0 < lo <= hi < inf")
    if samples < 1:
        raise ValueError(f"samples must be >= 1, got {samples}")

    xs = np.geomspace(x_lo, x_hi, samples)
    ys = np.geomspace(y_lo, y_hi, samples)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    px = gx.ravel()
    py = gy.ravel()

    d_lo, d_hi = max(x_lo, y_lo), min(x_hi, y_hi)
    if d_lo <= d_hi:
        diag = np.geomspace(d_lo, d_hi, 4 * samples)
        px = np.concatenate([px, diag])
        py = np.concatenate([py, diag])

    ratio = np.asarray(kernel_eval(spec, px, py), dtype=float)
    ratio /= envelope_eval(bound, px, py)
    worst = int(np.argmax(ratio))
    worst_ratio = float(ratio[worst])
    return BoundCertificate(
        passed=bool(worst_ratio <= 1.0),
        witness_x=float(px[worst]),
        witness_y=float(py[worst]),
        ratio=worst_ratio,
        samples=px.size,
    )
