"""Low-order surrogates over the (b, h) design space.

Latency and power use a full quadratic in ``(b, h)``; mIoU uses the
bilinear-over-bilinear rational form

    m(b, h) = (a3 + a4*b + a5*h + a6*b*h) / (a0 + a1*b + a2*h + b*h)

with the ``b*h`` denominator coefficient pinned to 1.

Predictions are written as explicit elementwise arithmetic rather than
``features @ coeffs`` so scalar and vectorised calls agree bit-for-bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .designspace import Box, ContinuousPoint, SampleSet
from .errors import LooError, PoleError, RankError, TuneError, UnderdeterminedError

QUAD_TERMS = ("1", "b", "h", "b^2", "b*h", "h^2")
RATIONAL_TERMS = ("a0", "a1", "a2", "a3", "a4", "a5", "a6")
QUAD_TARGETS = ("latency_ms", "power_w")

MIN_QUAD_CONFIGS = 6
MIN_RATIONAL_CONFIGS = 7

POLE_EPS = 1e-9
POSITIVITY_GRID = (65, 57)

LM_MAX_ITER = 200
LM_RTOL = 1e-10
LM_LAMBDA0 = 1e-3
LM_LAMBDA_MIN = 1e-12
LM_LAMBDA_MAX = 1e12


def quad_features(b, h) -> np.ndarray:
    """``[1, b, h, b^2, b*h, h^2]``; array inputs give one row per point."""
    b = np.asarray(b, dtype=float)
    h = np.asarray(h, dtype=float)
    return np.stack([np.ones_like(b), b, h, b * b, b * h, h * h], axis=-1)


@dataclass(frozen=True)
class QuadraticSurrogate:
    coeffs: tuple[float, ...]
    target_label: str = "latency_ms"

    def __post_init__(self):
        coeffs = tuple(float(c) for c in self.coeffs)
        if len(coeffs) != 6:
            raise ValueError(f"quadratic surrogate needs 6 coefficients, got {len(coeffs)}")
        if not all(math.isfinite(c) for c in coeffs):
            raise ValueError(f"non-finite coefficient in {coeffs}")
        object.__setattr__(self, "coeffs", coeffs)

    def predict(self, b, h):
        c0, c1, c2, c3, c4, c5 = self.coeffs
        return c0 + c1 * b + c2 * h + c3 * b * b + c4 * b * h + c5 * h * h

    def gradient(self, b, h):
        _, c1, c2, c3, c4, c5 = self.coeffs
        return c1 + 2.0 * c3 * b + c4 * h, c2 + c4 * b + 2.0 * c5 * h


def _near_pole(den) -> bool:
    if isinstance(den, float):
        return abs(den) < POLE_EPS
    return bool(np.any(np.abs(den) < POLE_EPS))


@dataclass(frozen=True)
class RationalSurrogate:
    numerator: tuple[float, float, float, float]  # a3, a4, a5, a6 on [1, b, h, b*h]
    denominator: tuple[float, float, float]  # a0, a1, a2 on [1, b, h]; b*h coefficient is 1

    def __post_init__(self):
        num = tuple(float(c) for c in self.numerator)
        den = tuple(float(c) for c in self.denominator)
        if len(num) != 4 or len(den) != 3:
            raise ValueError("rational surrogate needs 4 numerator and 3 denominator coefficients")
        if not all(math.isfinite(c) for c in num + den):
            raise ValueError(f"non-finite coefficient in {num + den}")
        object.__setattr__(self, "numerator", num)
        object.__setattr__(self, "denominator", den)

    @classmethod
    def from_params(cls, theta) -> RationalSurrogate:
        """Build from ``(a0, a1, ..., a6)``."""
        theta = [float(t) for t in theta]
        return cls(numerator=tuple(theta[3:7]), denominator=tuple(theta[0:3]))

    @property
    def params(self) -> tuple[float, ...]:
        return self.denominator + self.numerator

    def parts(self, b, h):
        a3, a4, a5, a6 = self.numerator
        a0, a1, a2 = self.denominator
        return a3 + a4 * b + a5 * h + a6 * b * h, a0 + a1 * b + a2 * h + b * h

    def predict(self, b, h):
        num, den = self.parts(b, h)
        if _near_pole(den):
            raise PoleError(f"denominator vanishes near ({b}, {h})")
        return num / den

    def gradient(self, b, h):
        a3, a4, a5, a6 = self.numerator
        a0, a1, a2 = self.denominator
        num, den = self.parts(b, h)
        if _near_pole(den):
            raise PoleError(f"denominator vanishes near ({b}, {h})")
        dnum_b, dnum_h = a4 + a6 * h, a5 + a6 * b
        dden_b, dden_h = a1 + h, a2 + b
        den2 = den * den
        return (dnum_b * den - num * dden_b) / den2, (dnum_h * den - num * dden_h) / den2


@dataclass(frozen=True)
class FitDiagnostics:
    r_squared: float
    rmse: float
    residuals: tuple[float, ...]
    fitted: tuple[float, ...]
    loo_press: float | None = None
    loo_q_squared: float | None = None
    loo_residuals: tuple[float, ...] | None = None

    @property
    def n(self) -> int:
        return len(self.residuals)

    @property
    def ss_res(self) -> float:
        return math.fsum(r * r for r in self.residuals)


def _ss_tot(y: np.ndarray) -> float:
    mean = math.fsum(y) / len(y)
    return math.fsum((v - mean) ** 2 for v in y)


def _score(ss_err: float, y: np.ndarray) -> float:
    # zero-variance targets: 1 for a perfect fit, else 0
    if np.ptp(y) == 0:
        return 1.0 if ss_err == 0 else 0.0
    return 1.0 - ss_err / _ss_tot(y)


def diagnostics(y, fitted) -> FitDiagnostics:
    y = np.asarray(y, dtype=float)
    fitted = np.asarray(fitted, dtype=float)
    res = y - fitted
    ss_res = math.fsum(res * res)
    return FitDiagnostics(
        r_squared=_score(ss_res, y),
        rmse=math.sqrt(ss_res / len(y)),
        residuals=tuple(float(r) for r in res),
        fitted=tuple(float(f) for f in fitted),
    )


def _describe_direction(vec: np.ndarray, names) -> str:
    big = np.abs(vec) > 0.1 * np.abs(vec).max()
    return " ".join(f"{v:+.3g}*{n}" for v, n, keep in zip(vec, names, big) if keep)


def lstsq_qr(X: np.ndarray, y: np.ndarray, names, rcond: float = 1e-10) -> np.ndarray:
    """Ordinary least squares through a Householder QR of the column-scaled design.

    Raises RankError naming the null-space directions when the scaled
    design has a singular value below ``rcond`` relative to the largest.
    """
    norms = np.linalg.norm(X, axis=0)
    norms[norms == 0] = 1.0
    Xs = X / norms
    _, s, vt = np.linalg.svd(Xs, full_matrices=False)
    deficient = np.nonzero(s < rcond * s[0])[0]
    if deficient.size:
        # back to unscaled coefficient space
        dirs = [_describe_direction(vt[i] / norms, names) for i in deficient]
        raise RankError(
            f"rank-deficient design (rank {X.shape[1] - deficient.size} of {X.shape[1]}); "
            f"deficient directions: " + "; ".join(f"[{d}]" for d in dirs),
            directions=dirs,
        )
    q, r = np.linalg.qr(Xs)
    z = np.linalg.solve(r, q.T @ y)
    # one step of iterative refinement on the residual
    z += np.linalg.solve(r, q.T @ (y - Xs @ z))
    return z / norms


def _target_column(data: SampleSet, target: str) -> np.ndarray:
    return data.column(target)


def fit_quadratic(data: SampleSet, target: str = "latency_ms") -> tuple[QuadraticSurrogate, FitDiagnostics]:
    if target not in QUAD_TARGETS:
        raise ValueError(f"quadratic target must be one of {QUAD_TARGETS}, got {target!r}")
    if data.n_configs < MIN_QUAD_CONFIGS:
        raise UnderdeterminedError(
            f"quadratic fit needs >= {MIN_QUAD_CONFIGS} distinct configs, got {data.n_configs}"
        )
    b, h = data.column("b"), data.column("h")
    y = _target_column(data, target)
    coeffs = lstsq_qr(quad_features(b, h), y, QUAD_TERMS)
    if np.ptp(y) == 0:
        coeffs = np.array([y[0], 0, 0, 0, 0, 0], dtype=float)
    model = QuadraticSurrogate(tuple(coeffs), target)
    return model, diagnostics(y, model.predict(b, h))


def predict_quadratic(model: QuadraticSurrogate, p: ContinuousPoint) -> float:
    return float(model.predict(p.b, p.h))


def quad_gradient(model: QuadraticSurrogate, p: ContinuousPoint) -> np.ndarray:
    return np.array(model.gradient(p.b, p.h), dtype=float)


# -- rational ---------------------------------------------------------------


def denominator_range(model: RationalSurrogate, box: Box, resolution=POSITIVITY_GRID) -> tuple[float, float]:
    """Min and max of the denominator on an even grid spanning ``box``.

    The denominator is bilinear, so its extremes sit at the box corners,
    which the grid always includes.
    """
    bs = np.linspace(box.b_lo, box.b_hi, resolution[0])
    hs = np.linspace(box.h_lo, box.h_hi, resolution[1])
    B, H = np.meshgrid(bs, hs, indexing="ij")
    _, den = model.parts(B, H)
    return float(den.min()), float(den.max())


def check_denominator(model: RationalSurrogate, box: Box, resolution=POSITIVITY_GRID) -> None:
    lo, hi = denominator_range(model, box, resolution)
    if lo <= POLE_EPS:
        raise PoleError(
            f"denominator not strictly positive over box "
            f"[{box.b_lo:g},{box.b_hi:g}]x[{box.h_lo:g},{box.h_hi:g}] (range {lo:.6g} .. {hi:.6g})"
        )


def _corners_positive(theta: np.ndarray, box: Box) -> bool:
    a0, a1, a2 = theta[:3]
    return all(a0 + a1 * b + a2 * h + b * h > POLE_EPS for b, h in box.corners())


def _rational_sse(theta: np.ndarray, b, h, m) -> float:
    num = theta[3] + theta[4] * b + theta[5] * h + theta[6] * b * h
    den = theta[0] + theta[1] * b + theta[2] * h + b * h
    if np.any(np.abs(den) < POLE_EPS):
        return math.inf
    r = m - num / den
    return math.fsum(r * r)


def init_rational(data: SampleSet) -> np.ndarray:
    """Linearized fit: multiply through by the denominator and solve OLS.

    Returns ``(a0, ..., a6)``.  Constant data is rank-deficient in this
    system (any denominator works), so it maps straight to ``den = b*h``.
    """
    if data.n_configs < MIN_RATIONAL_CONFIGS:
        raise UnderdeterminedError(
            f"rational fit needs >= {MIN_RATIONAL_CONFIGS} distinct configs, got {data.n_configs}"
        )
    b, h, m = data.column("b"), data.column("h"), data.column("miou")
    if np.ptp(m) == 0:
        return np.array([0, 0, 0, 0, 0, 0, m[0]], dtype=float)
    one = np.ones_like(b)
    A = np.column_stack([m, m * b, m * h, -one, -b, -h, -b * h])
    return lstsq_qr(A, -m * b * h, RATIONAL_TERMS)


def refine_rational(data: SampleSet, theta0, box: Box) -> tuple[np.ndarray, int]:
    """Levenberg-Marquardt on the true residuals ``m - m_hat``.

    Steps are only accepted if they lower the SSE; when the start point
    has a positive denominator over ``box`` that property is kept too.
    Returns the refined parameters and the iteration count.
    """
    b, h, m = data.column("b"), data.column("h"), data.column("miou")
    theta = np.asarray(theta0, dtype=float).copy()
    sse = _rational_sse(theta, b, h, m)
    if not math.isfinite(sse) or sse == 0.0:
        return theta, 0
    keep_feasible = _corners_positive(theta, box)
    lam = LM_LAMBDA0
    it = 0
    while it < LM_MAX_ITER:
        it += 1
        num = theta[3] + theta[4] * b + theta[5] * h + theta[6] * b * h
        den = theta[0] + theta[1] * b + theta[2] * h + b * h
        pred = num / den
        r = m - pred
        # Jacobian of the residual, columns in a0..a6 order
        J = np.column_stack([pred / den, pred * b / den, pred * h / den, -1 / den, -b / den, -h / den, -b * h / den])
        scale = np.sqrt(np.einsum("ij,ij->j", J, J))
        scale[scale == 0] = 1.0
        A = np.vstack([J, math.sqrt(lam) * np.diag(scale)])
        rhs = np.concatenate([-r, np.zeros(7)])
        step = np.linalg.lstsq(A, rhs, rcond=None)[0]
        cand = theta + step
        cand_sse = _rational_sse(cand, b, h, m) if np.all(np.isfinite(cand)) else math.inf
        if cand_sse < sse and (not keep_feasible or _corners_positive(cand, box)):
            improvement = (math.sqrt(sse) - math.sqrt(cand_sse)) / math.sqrt(sse)
            theta, sse = cand, cand_sse
            lam = max(lam / 10, LM_LAMBDA_MIN)
            if improvement < LM_RTOL or sse == 0.0:
                break
        else:
            if lam >= LM_LAMBDA_MAX:
                break
            lam = min(lam * 10, LM_LAMBDA_MAX)
    return theta, it


def _numerator_given_denominator(b, h, m, den_coeffs) -> np.ndarray:
    # with the denominator fixed the true residual is linear in a3..a6
    a0, a1, a2 = den_coeffs
    den = a0 + a1 * b + a2 * h + b * h
    X = np.column_stack([np.ones_like(b), b, h, b * h]) / den[:, None]
    num = np.linalg.lstsq(X, m, rcond=None)[0]
    return np.concatenate([[a0, a1, a2], num])


SEED_SHIFTS = (0.0, 0.125, 0.5, 2.0, 8.0, 32.0)


def feasible_starts(data: SampleSet, box: Box, keep: int = 3) -> list[np.ndarray]:
    """Pole-free starting points built from separable denominators.

    ``(b + beta) * (h + gamma)`` has the required unit ``b*h`` coefficient;
    shifts are multiples of the box's upper bounds.  Returns the ``keep``
    lowest-SSE candidates that are positive over ``box``.
    """
    b, h, m = data.column("b"), data.column("h"), data.column("miou")
    scored = []
    for kb in SEED_SHIFTS:
        for kh in SEED_SHIFTS:
            beta, gamma = kb * box.b_hi, kh * box.h_hi
            theta = _numerator_given_denominator(b, h, m, (beta * gamma, gamma, beta))
            if _corners_positive(theta, box):
                scored.append((_rational_sse(theta, b, h, m), len(scored), theta))
    scored.sort(key=lambda t: (t[0], t[1]))
    return [t[2] for t in scored[:keep]]


def fit_rational(data: SampleSet, box: Box | None = None) -> tuple[RationalSurrogate, FitDiagnostics]:
    """Two-stage rational fit; ``box`` defaults to the bounding box of the data.

    The linearized solution seeds Levenberg-Marquardt on the true
    residuals.  If that solution already has a pole inside ``box`` it is
    not a usable model, so refinement restarts from pole-free separable
    denominators instead and keeps the best result.
    """
    if box is None:
        box = Box.around(data.configs)
    b, h, m = data.column("b"), data.column("h"), data.column("miou")
    theta1 = init_rational(data)
    if _corners_positive(theta1, box):
        theta2, _ = refine_rational(data, theta1, box)
        if _rational_sse(theta2, b, h, m) > _rational_sse(theta1, b, h, m):
            theta2 = theta1
    else:
        best = None
        for start in feasible_starts(data, box):
            cand, _ = refine_rational(data, start, box)
            sse = _rational_sse(cand, b, h, m)
            if best is None or sse < best[0]:
                best = (sse, cand)
        theta2 = theta1 if best is None else best[1]
    model = RationalSurrogate.from_params(theta2)
    check_denominator(model, box)
    return model, diagnostics(m, model.predict(b, h))


def predict_rational(model: RationalSurrogate, p: ContinuousPoint) -> float:
    return float(model.predict(p.b, p.h))


def rational_gradient(model: RationalSurrogate, p: ContinuousPoint) -> np.ndarray:
    return np.array(model.gradient(p.b, p.h), dtype=float)


# -- leave-one-out ----------------------------------------------------------


def fitter_for(target: str, box: Box | None = None) -> Callable[[SampleSet], tuple]:
    if target in QUAD_TARGETS:
        return lambda d: fit_quadratic(d, target)
    if target == "miou":
        return lambda d: fit_rational(d, box)
    raise ValueError(f"unknown target {target!r}")


def loo_cross_validate(data: SampleSet, target: str, box: Box | None = None) -> FitDiagnostics:
    """Full-data diagnostics plus leave-one-out PRESS and Q^2 for one target."""
    min_n = MIN_RATIONAL_CONFIGS if target == "miou" else MIN_QUAD_CONFIGS
    if len(data) < min_n + 1:
        raise UnderdeterminedError(f"leave-one-out for {target} needs >= {min_n + 1} samples, got {len(data)}")
    if target == "miou" and box is None:
        # held-out fits must be checked against the full support
        box = Box.around(data.configs)
    fit = fitter_for(target, box)
    _, diag = fit(data)
    y = data.column(target)
    errs = []
    for i, s in enumerate(data):
        try:
            model_i, _ = fit(data.without(i))
            pred = float(model_i.predict(float(s.config.b), float(s.config.h)))
        except TuneError as exc:
            raise LooError(i, exc) from exc
        errs.append(y[i] - pred)
    press = math.fsum(e * e for e in errs)
    return replace(
        diag,
        loo_press=press,
        loo_q_squared=_score(press, y),
        loo_residuals=tuple(float(e) for e in errs),
    )
