"""Model catalog: parameter regions, priors, regression maps, true processes.

A model is a smooth parametric regression map r(x, w) on a compact parameter
region with a prior that is positive on the region's interior.  The data
generating process is y = r0(x) + N(0, sigma^2 I) with x drawn from a known
input law q.  Two scalar functionals drive everything downstream:

* ``empirical_square_error``  H(w) = 1/2 * sum_i |y_i - r(x_i, w)|^2
* ``population_k``            K(w) = 1/2 * E_X |r(X, w) - r0(X)|^2

Built-in models: ``linear-<d>`` (regular, r(x, w) = w . x), ``sinmix``
(singular, a*sin(b*x) + c*sin(d*x) on the unit ball), and ``tanh-1``
(singular, a*tanh(b*x), a small extension point exercised only by tests).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ValidationError
from . import seeds

__all__ = [
    "ParameterRegion",
    "PriorSpec",
    "ModelSpec",
    "TrueProcess",
    "XQuadrature",
    "empirical_square_error",
    "empirical_square_error_many",
    "population_k",
    "population_k_many",
    "available_models",
    "make_model",
    "make_truth",
    "model_info",
    "ModelInfo",
]


# --------------------------------------------------------------------------
# parameter region


@dataclass(frozen=True)
class ParameterRegion:
    """Compact subset of R^d: an axis-aligned box or a centered ball.

    Membership is exact (no tolerance): boxes compare coordinatewise with
    closed bounds, balls compare |w|^2 <= radius^2.
    """

    kind: str
    bounds: tuple[tuple[float, float], ...] | None = None
    radius: float | None = None
    dim: int | None = None

    def __post_init__(self) -> None:
        if self.kind == "box":
            if not self.bounds:
                raise ValidationError("box region needs bounds")
            for lo, hi in self.bounds:
                if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                    raise ValidationError(f"box bounds must satisfy lo < hi, got ({lo}, {hi})")
            object.__setattr__(self, "dim", len(self.bounds))
        elif self.kind == "ball":
            if self.radius is None or not (math.isfinite(self.radius) and self.radius > 0):
                raise ValidationError("ball region needs a positive radius")
            if self.dim is None or self.dim < 1:
                raise ValidationError("ball region needs an explicit dim >= 1")
        else:
            raise ValidationError(f"unknown region kind {self.kind!r}")

    @property
    def d(self) -> int:
        assert self.dim is not None
        return self.dim

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        if self.kind == "box":
            arr = np.asarray(self.bounds, dtype=np.float64)
            return arr[:, 0].copy(), arr[:, 1].copy()
        r = float(self.radius)  # type: ignore[arg-type]
        return np.full(self.d, -r), np.full(self.d, r)

    def widths(self) -> np.ndarray:
        lo, hi = self.bounding_box()
        return hi - lo

    def volume(self) -> float:
        if self.kind == "box":
            return float(np.prod(self.widths()))
        r, d = float(self.radius), self.d  # type: ignore[arg-type]
        return math.pi ** (d / 2) / math.gamma(d / 2 + 1) * r**d

    def contains_many(self, ws: np.ndarray) -> np.ndarray:
        ws = np.asarray(ws, dtype=np.float64)
        if ws.ndim != 2 or ws.shape[1] != self.d:
            raise ValidationError(f"expected points of shape (J, {self.d})")
        if self.kind == "box":
            lo, hi = self.bounding_box()
            return np.all((ws >= lo) & (ws <= hi), axis=1)
        r = float(self.radius)  # type: ignore[arg-type]
        return np.einsum("jd,jd->j", ws, ws) <= r * r

    def contains(self, w: np.ndarray) -> bool:
        return bool(self.contains_many(np.asarray(w, dtype=np.float64)[None, :])[0])


# --------------------------------------------------------------------------
# prior


# priors whose normalization already passed the build-time integral check
_NORMALIZATION_CHECKED: set = set()


def _gauss_box_log_norm(bounds: tuple[tuple[float, float], ...], scale: float) -> float:
    # integral of exp(-|w|^2 / (2 s^2)) over the box factorizes per axis
    total = 0.0
    root2 = math.sqrt(2.0)
    for lo, hi in bounds:
        mass = math.erf(hi / (scale * root2)) - math.erf(lo / (scale * root2))
        total += math.log(scale * math.sqrt(math.pi / 2.0) * mass)
    return total


def _gauss_ball_log_norm(radius: float, d: int, scale: float) -> float:
    # radial form: S_{d-1} * int_0^R r^{d-1} exp(-r^2/(2 s^2)) dr, Gauss-Legendre
    nodes, weights = np.polynomial.legendre.leggauss(128)
    r = 0.5 * radius * (nodes + 1.0)
    w = 0.5 * radius * weights
    integral = float(np.sum(w * r ** (d - 1) * np.exp(-0.5 * (r / scale) ** 2)))
    surface = 2.0 * math.pi ** (d / 2) / math.gamma(d / 2)
    return math.log(surface * integral)


@dataclass(frozen=True)
class PriorSpec:
    """Prior on a parameter region: uniform or a centered truncated gaussian.

    The density is normalized over the region and strictly positive on its
    interior.  Construction numerically verifies the normalization for d <= 3.
    """

    kind: str
    region: ParameterRegion
    scale: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("uniform", "truncated-gaussian"):
            raise ValidationError(f"unknown prior kind {self.kind!r}")
        if self.kind == "truncated-gaussian":
            if self.scale is None or not (math.isfinite(self.scale) and self.scale > 0):
                raise ValidationError("truncated-gaussian prior needs a positive scale")
        elif self.scale is not None:
            raise ValidationError("scale is only meaningful for the truncated-gaussian prior")
        key = (self.kind, self.scale, self.region)
        if self.region.d <= 3 and key not in _NORMALIZATION_CHECKED:
            self._check_normalization()
            _NORMALIZATION_CHECKED.add(key)

    @property
    def _log_norm(self) -> float:
        region = self.region
        if self.kind == "uniform":
            return math.log(region.volume())
        scale = float(self.scale)  # type: ignore[arg-type]
        if region.kind == "box":
            return _gauss_box_log_norm(region.bounds, scale)  # type: ignore[arg-type]
        return _gauss_ball_log_norm(float(region.radius), region.d, scale)  # type: ignore[arg-type]

    def log_density_many(self, ws: np.ndarray) -> np.ndarray:
        """Log density at each row of ws; -inf outside the region."""
        ws = np.asarray(ws, dtype=np.float64)
        inside = self.region.contains_many(ws)
        out = np.full(ws.shape[0], -np.inf)
        if self.kind == "uniform":
            out[inside] = -self._log_norm
        else:
            scale = float(self.scale)  # type: ignore[arg-type]
            sq = np.einsum("jd,jd->j", ws[inside], ws[inside])
            out[inside] = -0.5 * sq / (scale * scale) - self._log_norm
        return out

    def log_density(self, w: np.ndarray) -> float:
        return float(self.log_density_many(np.asarray(w, dtype=np.float64)[None, :])[0])

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draw ``size`` points from the prior, shape (size, d)."""
        if size < 1:
            raise ValidationError("size must be >= 1")
        region, d = self.region, self.region.d
        if self.kind == "uniform":
            if region.kind == "box":
                lo, hi = region.bounding_box()
                return rng.uniform(lo, hi, size=(size, d))
            g = rng.standard_normal((size, d))
            g /= np.linalg.norm(g, axis=1, keepdims=True)
            r = float(region.radius) * rng.random(size) ** (1.0 / d)  # type: ignore[arg-type]
            return g * r[:, None]
        return self._sample_truncated_gaussian(rng, size)

    def _sample_truncated_gaussian(self, rng: np.random.Generator, size: int) -> np.ndarray:
        scale = float(self.scale)  # type: ignore[arg-type]
        out = np.empty((size, self.region.d))
        filled = 0
        for _ in range(1000):
            draw = rng.standard_normal((max(size, 64), self.region.d)) * scale
            keep = draw[self.region.contains_many(draw)]
            take = min(size - filled, keep.shape[0])
            out[filled : filled + take] = keep[:take]
            filled += take
            if filled == size:
                return out
        raise ValidationError("truncated-gaussian rejection sampling failed to fill; scale far too large for region")

    def _check_normalization(self) -> None:
        region = self.region
        if region.kind == "ball":
            # both prior kinds are isotropic, so integrate radially (exact boundary)
            nodes, weights = np.polynomial.legendre.leggauss(256)
            radius = float(region.radius)  # type: ignore[arg-type]
            r = 0.5 * radius * (nodes + 1.0)
            w = 0.5 * radius * weights
            dens = np.exp(self.log_density_many(np.pad(r[:, None], ((0, 0), (0, region.d - 1)))))
            surface = 2.0 * math.pi ** (region.d / 2) / math.gamma(region.d / 2)
            total = float(np.sum(w * r ** (region.d - 1) * dens)) * surface
        else:
            per_axis = {1: 20001, 2: 641, 3: 129}[region.d]
            lo, hi = region.bounding_box()
            axes = [np.linspace(lo[j], hi[j], 2 * per_axis + 1)[1::2] for j in range(region.d)]
            cell = float(np.prod((hi - lo) / per_axis))
            mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, region.d)
            total = float(np.sum(np.exp(self.log_density_many(mesh)))) * cell
        if abs(total - 1.0) > 1e-3:
            raise ValidationError(f"prior normalization check failed: integral {total:.6f}")


# --------------------------------------------------------------------------
# model and truth


@dataclass(frozen=True)
class ModelSpec:
    """A parametric regression map with its region and prior."""

    id: str
    d: int
    m_in: int
    n_out: int
    region: ParameterRegion
    prior: PriorSpec
    _eval_many: Callable[[np.ndarray, np.ndarray], np.ndarray] = field(repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.region.d != self.d:
            raise ValidationError("region dimension does not match model dimension")
        if self.prior.region != self.region:
            raise ValidationError("prior region does not match model region")

    def evaluate_many(self, ws: np.ndarray, xs: np.ndarray) -> np.ndarray:
        """Evaluate r at every (parameter row, input row) pair.

        ws: (J, d), xs: (K, M) -> (J, K, N).
        """
        ws = np.asarray(ws, dtype=np.float64)
        xs = np.asarray(xs, dtype=np.float64)
        if ws.ndim != 2 or ws.shape[1] != self.d:
            raise ValidationError(f"parameters must have shape (J, {self.d})")
        if xs.ndim != 2 or xs.shape[1] != self.m_in:
            raise ValidationError(f"inputs must have shape (K, {self.m_in})")
        out = self._eval_many(ws, xs)
        assert out.shape == (ws.shape[0], xs.shape[0], self.n_out)
        return out

    def evaluate(self, x: np.ndarray, w: np.ndarray) -> np.ndarray:
        """Evaluate r at one input and one parameter, shape (N,)."""
        x = np.asarray(x, dtype=np.float64).reshape(1, self.m_in)
        w = np.asarray(w, dtype=np.float64).reshape(1, self.d)
        return self.evaluate_many(w, x)[0, 0]


@dataclass(frozen=True)
class TrueProcess:
    """Data generating process: x ~ uniform on a box, y = r0(x) + N(0, sigma^2 I)."""

    m_in: int
    n_out: int
    sigma: float
    q_low: tuple[float, ...]
    q_high: tuple[float, ...]
    _r0: Callable[[np.ndarray], np.ndarray] = field(repr=False, compare=False)

    def __post_init__(self) -> None:
        if not (math.isfinite(self.sigma) and self.sigma >= 0):
            raise ValidationError("sigma must be >= 0")
        if len(self.q_low) != self.m_in or len(self.q_high) != self.m_in:
            raise ValidationError("input law bounds must match the input dimension")
        if any(l >= h for l, h in zip(self.q_low, self.q_high)):
            raise ValidationError("input law bounds must satisfy low < high")

    @property
    def s_value(self) -> float:
        """Bayes floor of the generalization error: N * sigma^2 / 2."""
        return 0.5 * self.n_out * self.sigma**2

    def r0(self, xs: np.ndarray) -> np.ndarray:
        """Noiseless response at each input row, shape (K, N)."""
        xs = np.asarray(xs, dtype=np.float64)
        if xs.ndim != 2 or xs.shape[1] != self.m_in:
            raise ValidationError(f"inputs must have shape (K, {self.m_in})")
        out = self._r0(xs)
        assert out.shape == (xs.shape[0], self.n_out)
        return out

    def q_sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        lo = np.asarray(self.q_low)
        hi = np.asarray(self.q_high)
        return rng.uniform(lo, hi, size=(size, self.m_in))

    def q_density(self, xs: np.ndarray) -> np.ndarray:
        xs = np.asarray(xs, dtype=np.float64)
        lo = np.asarray(self.q_low)
        hi = np.asarray(self.q_high)
        inside = np.all((xs >= lo) & (xs <= hi), axis=1)
        return np.where(inside, 1.0 / float(np.prod(hi - lo)), 0.0)

    def self_test(self, seed: int = 0, size: int = 65536) -> None:
        """Smoke check that sampling matches the stated density (moments)."""
        rng = seeds.generator(seed)
        xs = self.q_sample(rng, size)
        if not np.all(self.q_density(xs) > 0):
            raise ValidationError("q_sample produced points outside the density support")
        lo = np.asarray(self.q_low)
        hi = np.asarray(self.q_high)
        mean_tol = 6.0 * (hi - lo) / math.sqrt(12.0 * size)
        if np.any(np.abs(xs.mean(axis=0) - 0.5 * (lo + hi)) > mean_tol):
            raise ValidationError("q_sample mean disagrees with the density")
        var_ref = (hi - lo) ** 2 / 12.0
        if np.any(np.abs(xs.var(axis=0) - var_ref) > 8.0 * var_ref / math.sqrt(size)):
            raise ValidationError("q_sample variance disagrees with the density")
        ys = self.r0(xs)
        if not np.all(np.isfinite(ys)):
            raise ValidationError("r0 produced non-finite values on the input support")


@dataclass(frozen=True, eq=False)
class XQuadrature:
    """Monte Carlo discretization of expectations over the input law.

    Nodes are i.i.d. draws from q, fixed once per experiment so that every
    replication integrates against the same node set.
    """

    nodes: np.ndarray
    seed: int

    def __post_init__(self) -> None:
        if self.nodes.ndim != 2 or self.nodes.shape[0] < 1:
            raise ValidationError("quadrature nodes must have shape (Q, M), Q >= 1")
        self.nodes.setflags(write=False)

    @property
    def size(self) -> int:
        return self.nodes.shape[0]

    @classmethod
    def draw(cls, truth: TrueProcess, size: int, seed: int) -> "XQuadrature":
        if size < 1:
            raise ValidationError("quadrature size must be >= 1")
        rng = seeds.generator(seed)
        return cls(nodes=truth.q_sample(rng, size), seed=int(seed))


# --------------------------------------------------------------------------
# error functionals


def empirical_square_error_many(model: ModelSpec, xs: np.ndarray, ys: np.ndarray, ws: np.ndarray, chunk: int = 1024) -> np.ndarray:
    """H(w) = 1/2 sum_i |y_i - r(x_i, w)|^2 for each parameter row, shape (J,)."""
    ws = np.asarray(ws, dtype=np.float64)
    out = np.empty(ws.shape[0])
    for start in range(0, ws.shape[0], chunk):
        block = ws[start : start + chunk]
        resid = ys[None, :, :] - model.evaluate_many(block, xs)
        out[start : start + block.shape[0]] = 0.5 * np.einsum("jkn,jkn->j", resid, resid)
    return out


def empirical_square_error(model: ModelSpec, dataset, w: np.ndarray) -> float:
    """Empirical square error of one parameter on one dataset."""
    w = np.asarray(w, dtype=np.float64).reshape(1, model.d)
    return float(empirical_square_error_many(model, dataset.xs, dataset.ys, w)[0])


def population_k_many(model: ModelSpec, truth: TrueProcess, ws: np.ndarray, xq: XQuadrature, chunk: int = 256) -> np.ndarray:
    """K(w) = 1/2 E_X |r(X, w) - r0(X)|^2 under the quadrature, shape (J,)."""
    ws = np.asarray(ws, dtype=np.float64)
    ref = truth.r0(xq.nodes)
    out = np.empty(ws.shape[0])
    for start in range(0, ws.shape[0], chunk):
        block = ws[start : start + chunk]
        f = model.evaluate_many(block, xq.nodes) - ref[None, :, :]
        out[start : start + block.shape[0]] = 0.5 * np.einsum("jkn,jkn->j", f, f) / xq.size
    return out


def population_k(model: ModelSpec, truth: TrueProcess, w: np.ndarray, xq: XQuadrature) -> float:
    """Population square error of one parameter against the truth."""
    w = np.asarray(w, dtype=np.float64).reshape(1, model.d)
    return float(population_k_many(model, truth, w, xq)[0])


# --------------------------------------------------------------------------
# catalog


@dataclass(frozen=True)
class ModelInfo:
    """Catalog metadata: dimensions and, for regular models, the known invariants."""

    id: str
    d: int
    m_in: int
    n_out: int
    regular: bool
    known_lambda: float | None
    known_nu: float | None


_LINEAR = re.compile(r"^linear-([1-9][0-9]?)$")


def _linear_eval(ws: np.ndarray, xs: np.ndarray) -> np.ndarray:
    return (ws @ xs.T)[:, :, None]


def _sinmix_eval(ws: np.ndarray, xs: np.ndarray) -> np.ndarray:
    x = xs[:, 0]
    a, b, c, d = ws.T
    out = a[:, None] * np.sin(np.outer(b, x)) + c[:, None] * np.sin(np.outer(d, x))
    return out[:, :, None]


def _tanh_eval(ws: np.ndarray, xs: np.ndarray) -> np.ndarray:
    x = xs[:, 0]
    a, b = ws.T
    return (a[:, None] * np.tanh(np.outer(b, x)))[:, :, None]


def _zero_r0(n_out: int) -> Callable[[np.ndarray], np.ndarray]:
    def r0(xs: np.ndarray) -> np.ndarray:
        return np.zeros((xs.shape[0], n_out))

    return r0


def available_models() -> list[str]:
    return ["linear-<d>", "sinmix", "tanh-1"]


def model_info(model_id: str) -> ModelInfo:
    m = _LINEAR.match(model_id)
    if m:
        d = int(m.group(1))
        return ModelInfo(model_id, d=d, m_in=d, n_out=1, regular=True, known_lambda=d / 2.0, known_nu=d / 2.0)
    if model_id == "sinmix":
        return ModelInfo(model_id, d=4, m_in=1, n_out=1, regular=False, known_lambda=None, known_nu=None)
    if model_id == "tanh-1":
        return ModelInfo(model_id, d=2, m_in=1, n_out=1, regular=False, known_lambda=None, known_nu=None)
    raise ValidationError(f"unknown model id {model_id!r}; available: {available_models()}")


def make_model(model_id: str, prior: str = "uniform", prior_scale: float | None = None) -> ModelSpec:
    """Build a catalog model with the requested prior."""
    info = model_info(model_id)
    if _LINEAR.match(model_id):
        region = ParameterRegion(kind="box", bounds=((-1.0, 1.0),) * info.d)
        ev = _linear_eval
    elif model_id == "sinmix":
        region = ParameterRegion(kind="ball", radius=1.0, dim=4)
        ev = _sinmix_eval
    else:
        region = ParameterRegion(kind="box", bounds=((-1.0, 1.0), (-1.0, 1.0)))
        ev = _tanh_eval
    if prior == "truncated-gaussian" and prior_scale is None:
        prior_scale = 1.0
    prior_spec = PriorSpec(kind=prior, region=region, scale=prior_scale)
    return ModelSpec(
        id=model_id,
        d=info.d,
        m_in=info.m_in,
        n_out=info.n_out,
        region=region,
        prior=prior_spec,
        _eval_many=ev,
    )


def make_truth(model_id: str, sigma: float) -> TrueProcess:
    """True process for a catalog model: r0 = 0 with the model's input law."""
    info = model_info(model_id)
    if _LINEAR.match(model_id):
        low, high = (-1.0,) * info.m_in, (1.0,) * info.m_in
    elif model_id == "sinmix":
        low, high = (-math.pi,), (math.pi,)
    else:
        low, high = (-1.0,), (1.0,)
    return TrueProcess(
        m_in=info.m_in,
        n_out=info.n_out,
        sigma=float(sigma),
        q_low=low,
        q_high=high,
        _r0=_zero_r0(info.n_out),
    )
