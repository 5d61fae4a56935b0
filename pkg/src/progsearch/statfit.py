"""Self-contained statistical fitters used by the guarantee estimators.

Everything here is deliberately small and explicit: ordinary least squares
with t-based prediction intervals, ridge-stabilized logistic regression,
quantile regression via IRLS on a smoothed check loss, and Gaussian
product-kernel density estimation evaluated on fixed grids.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import expit
from scipy.stats import t as student_t

DEFAULT_RIDGE = 1e-6
DEFAULT_CHECK_SMOOTHING = 1e-6
GRID_2D = (200, 200)
GRID_3D = (60, 180, 180)


def _design(xs: np.ndarray | None, rows: int | None = None) -> np.ndarray:
    if xs is None:
        if rows is None:
            raise ValueError("intercept-only design needs an explicit row count")
        return np.ones((rows, 1))
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim == 1:
        xs = xs[:, None]
    return np.column_stack([np.ones(xs.shape[0]), xs])


def _check_full_rank(design: np.ndarray) -> None:
    """Raise naming the first predictor that adds no rank to the design."""
    n, cols = design.shape
    rank = np.linalg.matrix_rank(design)
    if rank == cols:
        return
    prev = 0
    for j in range(cols):
        r = np.linalg.matrix_rank(design[:, : j + 1])
        if r == prev:
            which = "intercept" if j == 0 else f"predictor {j - 1}"
            raise ValueError(f"singular design: {which} is collinear with earlier columns")
        prev = r
    raise ValueError("singular design")


@dataclass(frozen=True)
class LinearModel:
    coefficients: np.ndarray
    intercept: float
    residual_sigma: float
    training_count: int
    xtx_inv: np.ndarray

    @property
    def df(self) -> int:
        return self.training_count - self.coefficients.size - 1

    def predict(self, xs: np.ndarray) -> np.ndarray:
        xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
        return xs @ self.coefficients + self.intercept

    def to_dict(self) -> dict:
        return {
            "coefficients": self.coefficients.tolist(),
            "intercept": self.intercept,
            "residual_sigma": self.residual_sigma,
            "training_count": self.training_count,
            "xtx_inv": self.xtx_inv.tolist(),
        }

    @staticmethod
    def from_dict(doc: dict) -> "LinearModel":
        return LinearModel(
            coefficients=np.asarray(doc["coefficients"]),
            intercept=float(doc["intercept"]),
            residual_sigma=float(doc["residual_sigma"]),
            training_count=int(doc["training_count"]),
            xtx_inv=np.asarray(doc["xtx_inv"]),
        )


def ols_fit(xs: np.ndarray, ys: np.ndarray) -> LinearModel:
    ys = np.asarray(ys, dtype=np.float64)
    design = _design(xs)
    n, cols = design.shape
    p = cols - 1
    if n < p + 2:
        raise ValueError(f"need at least {p + 2} rows to fit {p} predictors")
    _check_full_rank(design)
    beta, *_ = np.linalg.lstsq(design, ys, rcond=None)
    residuals = ys - design @ beta
    sse = float(residuals @ residuals)
    sigma = np.sqrt(sse / (n - p - 1))
    return LinearModel(
        coefficients=beta[1:],
        intercept=float(beta[0]),
        residual_sigma=float(sigma),
        training_count=n,
        xtx_inv=np.linalg.inv(design.T @ design),
    )


def ols_predict_interval(model: LinearModel, x0, theta: float,
                         sidedness: str = "two_sided") -> tuple[float, tuple[float, float]]:
    """Predictive interval at a new point, including the leverage term.

    ``two_sided`` puts theta/2 in each tail; ``lower_only`` returns the
    theta-quantile lower bound and leaves the upper side to the caller's
    hard bound.
    """
    if not 0 < theta < 1:
        raise ValueError("theta must be in (0, 1)")
    if sidedness not in ("two_sided", "lower_only"):
        raise ValueError(f"unknown sidedness {sidedness!r}")
    x0 = np.atleast_1d(np.asarray(x0, dtype=np.float64))
    row = np.concatenate(([1.0], x0))
    point = float(row[1:] @ model.coefficients + model.intercept)
    se = model.residual_sigma * np.sqrt(1.0 + row @ model.xtx_inv @ row)
    if se == 0.0:
        return point, (point, point)
    if sidedness == "two_sided":
        half = float(student_t.ppf(1 - theta / 2, model.df) * se)
        return point, (point - half, point + half)
    lower = point + float(student_t.ppf(theta, model.df) * se)
    return point, (lower, np.inf)


@dataclass(frozen=True)
class LogisticModel:
    coefficients: np.ndarray
    intercept: float
    ridge_penalty: float

    def predict_proba(self, xs: np.ndarray) -> np.ndarray:
        xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
        z = xs @ self.coefficients + self.intercept
        return np.clip(expit(z), 1e-12, 1 - 1e-12)

    def to_dict(self) -> dict:
        return {
            "coefficients": self.coefficients.tolist(),
            "intercept": self.intercept,
            "ridge_penalty": self.ridge_penalty,
        }

    @staticmethod
    def from_dict(doc: dict) -> "LogisticModel":
        return LogisticModel(
            coefficients=np.asarray(doc["coefficients"]),
            intercept=float(doc["intercept"]),
            ridge_penalty=float(doc["ridge_penalty"]),
        )


def logistic_log_likelihood(design: np.ndarray, ys: np.ndarray, w: np.ndarray,
                            ridge: float) -> float:
    z = design @ w
    # log(sigmoid) written with logaddexp for stability at large |z|
    ll = float(np.sum(ys * z - np.logaddexp(0.0, z)))
    return ll - 0.5 * ridge * float(w[1:] @ w[1:])


def logistic_gradient(design: np.ndarray, ys: np.ndarray, w: np.ndarray,
                      ridge: float) -> np.ndarray:
    p = expit(design @ w)
    grad = design.T @ (ys - p)
    grad[1:] -= ridge * w[1:]
    return grad


def logistic_fit(xs: np.ndarray, labels: np.ndarray, ridge: float = DEFAULT_RIDGE,
                 tol: float = 1e-8, max_iter: int = 200) -> LogisticModel:
    """Penalized maximum likelihood via damped Newton iterations.

    The small ridge keeps coefficients finite on perfectly separable data.
    """
    ys = np.asarray(labels, dtype=np.float64)
    if set(np.unique(ys)) != {0.0, 1.0}:
        raise ValueError("labels must contain both classes, coded 0/1")
    design = _design(xs)
    w = np.zeros(design.shape[1])
    ll = logistic_log_likelihood(design, ys, w, ridge)
    for _ in range(max_iter):
        grad = logistic_gradient(design, ys, w, ridge)
        if np.max(np.abs(grad)) <= tol:
            return LogisticModel(coefficients=w[1:].copy(), intercept=float(w[0]),
                                 ridge_penalty=ridge)
        p = expit(design @ w)
        weights = np.maximum(p * (1 - p), 1e-12)
        hess = design.T @ (design * weights[:, None])
        hess[np.arange(1, len(w)), np.arange(1, len(w))] += ridge
        hess[np.arange(len(w)), np.arange(len(w))] += 1e-12
        step = np.linalg.solve(hess, grad)
        scale = 1.0
        while scale > 1e-8:
            candidate = w + scale * step
            cand_ll = logistic_log_likelihood(design, ys, candidate, ridge)
            if cand_ll >= ll - 1e-14:
                w = candidate
                ll = cand_ll
                break
            scale *= 0.5
        else:
            break
    grad = logistic_gradient(design, ys, w, ridge)
    if np.max(np.abs(grad)) <= tol:
        return LogisticModel(coefficients=w[1:].copy(), intercept=float(w[0]),
                             ridge_penalty=ridge)
    raise RuntimeError(f"logistic fit did not converge (|grad|={np.max(np.abs(grad)):.2e})")


@dataclass(frozen=True)
class QuantileModel:
    coefficients: np.ndarray
    intercept: float
    tau: float

    def predict(self, xs: np.ndarray | None) -> np.ndarray:
        if self.coefficients.size == 0:
            return np.atleast_1d(np.asarray(self.intercept))
        xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
        return xs @ self.coefficients + self.intercept

    def to_dict(self) -> dict:
        return {
            "coefficients": self.coefficients.tolist(),
            "intercept": self.intercept,
            "tau": self.tau,
        }

    @staticmethod
    def from_dict(doc: dict) -> "QuantileModel":
        return QuantileModel(
            coefficients=np.asarray(doc["coefficients"]),
            intercept=float(doc["intercept"]),
            tau=float(doc["tau"]),
        )


def check_loss(residuals: np.ndarray, tau: float) -> float:
    r = np.asarray(residuals, dtype=np.float64)
    return float(np.sum(r * (tau - (r < 0))))


def quantile_fit(xs: np.ndarray | None, ys: np.ndarray, tau: float,
                 smoothing: float = DEFAULT_CHECK_SMOOTHING,
                 max_iter: int = 200) -> QuantileModel:
    """Check-loss minimizer: IRLS on a smoothed loss, polished onto a vertex.

    The optimum of the exact loss interpolates p+1 data points; after the
    smoothed solve we test the nearby interpolating fits and keep the best,
    which lands on the LP solution for small designs.
    """
    ys = np.asarray(ys, dtype=np.float64)
    n = ys.shape[0]
    if n < 3:
        raise ValueError("need at least 3 rows")
    if not 0 < tau < 1:
        raise ValueError("tau must be in (0, 1)")
    design = _design(xs, rows=n)
    _check_full_rank(design)
    cols = design.shape[1]

    w, *_ = np.linalg.lstsq(design, ys, rcond=None)
    delta = 1e-2
    while True:
        for _ in range(max_iter):
            r = ys - design @ w
            scale = np.sqrt(r * r + delta * delta)
            side = np.where(r >= 0, tau, 1 - tau)
            weights = side / scale
            wd = design * weights[:, None]
            try:
                new = np.linalg.solve(design.T @ wd, wd.T @ ys)
            except np.linalg.LinAlgError:
                break
            if np.max(np.abs(new - w)) < 1e-12:
                w = new
                break
            w = new
        if delta <= smoothing:
            break
        delta = max(delta / 10.0, smoothing)

    best_w = w
    best_loss = check_loss(ys - design @ w, tau)
    if cols <= 4:
        r = np.abs(ys - design @ w)
        nearest = np.argsort(r, kind="stable")[: min(n, 2 * cols + 2)]
        for subset in itertools.combinations(nearest, cols):
            sub = design[list(subset)]
            if np.linalg.matrix_rank(sub) < cols:
                continue
            cand = np.linalg.solve(sub, ys[list(subset)])
            loss = check_loss(ys - design @ cand, tau)
            if loss < best_loss - 1e-12:
                best_loss = loss
                best_w = cand
    return QuantileModel(coefficients=best_w[1:].copy(), intercept=float(best_w[0]), tau=tau)


@dataclass(frozen=True)
class KdeGrid:
    """Gaussian product-kernel density evaluated on a fixed grid.

    Axis 0 is the estimation target; the remaining axes are conditioned on.
    Training points are retained so serialization can rebuild the grid.
    """

    axes: tuple[np.ndarray, ...]
    density: np.ndarray
    bandwidth: np.ndarray
    points: np.ndarray

    @property
    def ndim(self) -> int:
        return len(self.axes)

    def cell_volume(self) -> float:
        return float(np.prod([ax[1] - ax[0] for ax in self.axes]))

    def riemann_sum(self) -> float:
        return float(self.density.sum() * self.cell_volume())

    def to_dict(self) -> dict:
        return {
            "points": self.points.tolist(),
            "bandwidth": self.bandwidth.tolist(),
            "grid_shape": [int(ax.size) for ax in self.axes],
        }

    @staticmethod
    def from_dict(doc: dict) -> "KdeGrid":
        return kde_fit(np.asarray(doc["points"]),
                       grid_shape=tuple(doc["grid_shape"]),
                       bandwidth=np.asarray(doc["bandwidth"]))


def normal_reference_bandwidth(points: np.ndarray, scale: float = 1.0) -> np.ndarray:
    """Scott-style per-axis rule; zero-variance axes get a floor and a warning."""
    n, d = points.shape
    sigma = points.std(axis=0)
    h = sigma * n ** (-1.0 / (d + 4))
    floor = 1e-6 + 1e-3 * np.maximum(1.0, np.abs(points).mean(axis=0))
    flat = h < 1e-12
    if np.any(flat):
        warnings.warn("zero-variance axis in KDE input; bandwidth floor applied")
        h = np.where(flat, floor, h)
    return h * scale


def kde_fit(points: np.ndarray, grid_shape: tuple[int, ...] | None = None,
            bandwidth: np.ndarray | None = None,
            bandwidth_scale: float = 1.0) -> KdeGrid:
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] not in (2, 3):
        raise ValueError("points must be (n, 2) or (n, 3)")
    n, d = points.shape
    if n < 2:
        raise ValueError("need at least 2 points")
    if grid_shape is None:
        grid_shape = GRID_2D if d == 2 else GRID_3D
    if len(grid_shape) != d:
        raise ValueError("grid shape does not match dimensionality")
    if bandwidth is None:
        bandwidth = normal_reference_bandwidth(points, scale=bandwidth_scale)
    else:
        bandwidth = np.asarray(bandwidth, dtype=np.float64)
    axes = []
    kernels = []
    for j in range(d):
        lo = points[:, j].min() - 3 * bandwidth[j]
        hi = points[:, j].max() + 3 * bandwidth[j]
        ax = np.linspace(lo, hi, grid_shape[j])
        axes.append(ax)
        z = (ax[None, :] - points[:, j][:, None]) / bandwidth[j]
        kernels.append(np.exp(-0.5 * z * z) / (bandwidth[j] * np.sqrt(2 * np.pi)))
    if d == 2:
        density = kernels[0].T @ kernels[1] / n
    else:
        density = np.einsum("pi,pj,pk->ijk", *kernels) / n
    return KdeGrid(axes=tuple(axes), density=density, bandwidth=bandwidth, points=points)


@dataclass(frozen=True)
class Conditional1D:
    xs: np.ndarray
    pdf: np.ndarray          # normalized to sum 1
    clamped: bool

    def mean(self) -> float:
        return float(self.xs @ self.pdf)

    def quantile(self, q: float) -> float:
        if not 0 <= q <= 1:
            raise ValueError("quantile level must be in [0, 1]")
        support = np.nonzero(self.pdf > 0)[0]
        if q == 0:
            return float(self.xs[support[0]])
        if q == 1:
            return float(self.xs[support[-1]])
        cum = np.cumsum(self.pdf)
        idx = int(np.searchsorted(cum, q, side="left"))
        return float(self.xs[min(idx, self.xs.size - 1)])


def kde_conditional(grid: KdeGrid, fixed_coords) -> Conditional1D:
    """Density of axis 0 given fixed values for every other axis.

    Picks the grid slice nearest to the conditioning values; values outside
    the grid range are clamped to the edge and flagged.
    """
    fixed = np.atleast_1d(np.asarray(fixed_coords, dtype=np.float64))
    if fixed.size != grid.ndim - 1:
        raise ValueError(f"expected {grid.ndim - 1} conditioning values, got {fixed.size}")
    clamped = False
    indexer: list = [slice(None)]
    for j, value in enumerate(fixed, start=1):
        ax = grid.axes[j]
        if value < ax[0] or value > ax[-1]:
            clamped = True
        idx = int(np.clip(np.searchsorted(ax, value), 0, ax.size - 1))
        if idx > 0 and abs(ax[idx - 1] - value) <= abs(ax[idx] - value):
            idx -= 1
        indexer.append(idx)
    slice_pdf = np.asarray(grid.density[tuple(indexer)], dtype=np.float64)
    total = slice_pdf.sum()
    if total <= 0:
        raise ValueError("no density support at the conditioning value")
    return Conditional1D(xs=grid.axes[0], pdf=slice_pdf / total, clamped=clamped)


def empirical_quantile(samples: np.ndarray, q: float) -> float:
    """Order-statistic quantile with linear interpolation."""
    x = np.asarray(samples, dtype=np.float64)
    if x.size == 0:
        raise ValueError("empty sample")
    if not 0 <= q <= 1:
        raise ValueError("quantile level must be in [0, 1]")
    return float(np.quantile(x, q, method="linear"))
