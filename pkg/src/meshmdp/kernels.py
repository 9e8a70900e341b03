"""Transition kernels: log-density evaluators paired with samplers.

Step convention: ``h`` in ``[0, H)`` indexes the transition from state
``S_h`` to ``S_{h+1}``. A kernel built from a list of ``H`` scales uses
``sigmas[h]`` for that transition.

All kernels accept batched inputs. ``x``, ``a`` and ``y`` are arrays whose
last axis has length ``dim``; leading axes broadcast against each other.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaincc, gammaln, ndtr, ndtri

from .errors import DomainError, InvalidArgumentError, NumericError

logger = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)


def _as_points(v, dim: int, name: str) -> np.ndarray:
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim == 0 or arr.shape[-1] != dim:
        raise InvalidArgumentError(f"{name} must have trailing dimension {dim}, got shape {arr.shape}")
    return arr


class TransitionKernel:
    """Base class for ``p_h^a(y | x)`` with a matching sampler.

    Subclasses implement :meth:`log_density` and :meth:`transition`. The
    latter is the random iterative function ``y = K_h(x, a, u)`` driven by
    ``noise_width`` independent uniforms, which is what makes mesh
    simulation reproducible path by path.
    """

    dim: int
    noise_width: int

    def log_density(self, h: int, x, a, y) -> np.ndarray:
        raise NotImplementedError

    def transition(self, h: int, x, a, u) -> np.ndarray:
        raise NotImplementedError

    def sample(self, h: int, x, a, rng: np.random.Generator) -> np.ndarray:
        x = _as_points(x, self.dim, "x")
        a = np.asarray(a, dtype=np.float64)
        shape = np.broadcast_shapes(x.shape[:-1], a.shape[:-1])
        return self.transition(h, x, a, rng.random(shape + (self.noise_width,)))

    def log_density_grid(self, h: int, x, a, y, y_offset=None) -> np.ndarray:
        """Log-densities for every combination, shape ``(M, K, N)``.

        ``x`` is ``(M, dim)``, ``a`` is ``(K, dim)`` and ``y`` is ``(N, dim)``.
        ``y_offset`` (shape ``(N,)``) is added along the last axis; the solver
        uses it to fold in the negated log-denominators without an extra pass.
        """
        x = _as_points(x, self.dim, "x")
        a = _as_points(a, self.dim, "a")
        y = _as_points(y, self.dim, "y")
        out = self.log_density(h, x[:, None, None, :], a[None, :, None, :], y[None, None, :, :])
        if y_offset is not None:
            with np.errstate(invalid="ignore"):
                out = out + y_offset
        return out

    def exit_probability(self, h: int, x, a, radius: float) -> np.ndarray:
        """``P(|Y| > radius)`` for ``Y ~ p_h^a(. | x)``; needed by :class:`ReflectedKernel`."""
        raise NotImplementedError(f"{type(self).__name__} has no analytic ball exit probability")


@dataclass(frozen=True)
class GaussianShiftKernel(TransitionKernel):
    """Isotropic Gaussian step ``y = x + a + sigma_h * z``.

    The density is ``(2 pi sigma_h^2)^(-d/2) exp(-|y - x - a|^2 / (2 sigma_h^2))``.
    """

    sigmas: tuple[float, ...]
    dim: int = 1
    noise_width: int = field(init=False)

    def __post_init__(self):
        sig = tuple(float(s) for s in self.sigmas)
        if not sig:
            raise InvalidArgumentError("sigmas must be non-empty")
        if not all(math.isfinite(s) and s > 0 for s in sig):
            raise InvalidArgumentError(f"sigmas must be finite and positive, got {sig}")
        if int(self.dim) < 1:
            raise InvalidArgumentError("dim must be >= 1")
        object.__setattr__(self, "sigmas", sig)
        object.__setattr__(self, "dim", int(self.dim))
        object.__setattr__(self, "noise_width", int(self.dim))

    @property
    def horizon(self) -> int:
        return len(self.sigmas)

    @property
    def sigma_min(self) -> float:
        return min(self.sigmas)

    @property
    def sigma_max(self) -> float:
        return max(self.sigmas)

    def sigma(self, h: int) -> float:
        if not 0 <= h < len(self.sigmas):
            raise InvalidArgumentError(f"step {h} outside [0, {len(self.sigmas)})")
        return self.sigmas[h]

    def log_normalizer(self, h: int) -> float:
        return -0.5 * self.dim * (LOG_2PI + 2.0 * math.log(self.sigma(h)))

    def log_density(self, h, x, a, y):
        s = self.sigma(h)
        x = _as_points(x, self.dim, "x")
        a = _as_points(a, self.dim, "a")
        y = _as_points(y, self.dim, "y")
        r = y - x - a
        return self.log_normalizer(h) - np.einsum("...i,...i->...", r, r) / (2.0 * s * s)

    def log_density_grid(self, h, x, a, y, y_offset=None):
        # -|y - m|^2 / 2s^2 split into a BLAS cross term plus row and column terms
        s2 = self.sigma(h) ** 2
        x = _as_points(x, self.dim, "x")
        a = _as_points(a, self.dim, "a")
        y = _as_points(y, self.dim, "y")
        m = (x[:, None, :] + a[None, :, :]).reshape(-1, self.dim)
        col = -0.5 / s2 * (y * y).sum(1)
        if y_offset is not None:
            col = col + y_offset
        row = self.log_normalizer(h) - 0.5 / s2 * (m * m).sum(1)
        out = m @ (y.T / s2)
        out += col
        out += row[:, None]
        return out.reshape(x.shape[0], a.shape[0], y.shape[0])

    def transition(self, h, x, a, u):
        x = _as_points(x, self.dim, "x")
        a = _as_points(a, self.dim, "a")
        u = np.asarray(u, dtype=np.float64)
        return x + a + self.sigma(h) * ndtri(u[..., : self.dim])

    def exit_probability(self, h, x, a, radius):
        x = _as_points(x, self.dim, "x")
        a = _as_points(a, self.dim, "a")
        shift = np.linalg.norm(x + a, axis=-1)
        return _ball_tail_mass_v(shift, self.sigma(h), float(radius), self.dim)


def gaussian_log_density(h: int, x, a, y, kernel: GaussianShiftKernel) -> np.ndarray:
    """Log of the Gaussian shift density, never exponentiated internally."""
    return kernel.log_density(h, x, a, y)


def gaussian_sample(h: int, x, a, kernel: GaussianShiftKernel, rng: np.random.Generator) -> np.ndarray:
    return kernel.sample(h, x, a, rng)


_SERIES_CUTOFF = 1e-14
_SERIES_MAX_TERMS = 200_000
_NORMAL_APPROX_DIM = 200


def ball_tail_mass(x_shifted_norm: float, sigma: float, R: float, d: int) -> float:
    """Probability that ``N(mu, sigma^2 I_d)`` lands outside the ball ``B_R``.

    ``x_shifted_norm`` is ``|mu|``. Equivalent to the survival function of a
    noncentral chi-square with ``d`` degrees of freedom and noncentrality
    ``|mu|^2 / sigma^2``, evaluated at ``R^2 / sigma^2``. Summed as a Poisson
    mixture of central tails, outward from the Poisson mode, until the
    remaining Poisson mass drops below 1e-14.
    """
    if not (sigma > 0 and R > 0):
        raise InvalidArgumentError(f"need sigma > 0 and R > 0, got sigma={sigma}, R={R}")
    if d < 1:
        raise InvalidArgumentError(f"d must be >= 1, got {d}")
    nc = (float(x_shifted_norm) / sigma) ** 2
    xq = (float(R) / sigma) ** 2
    if not math.isfinite(xq):
        return 0.0
    if d > _NORMAL_APPROX_DIM:
        mean = d + nc
        sd = math.sqrt(2.0 * (d + 2.0 * nc))
        return float(ndtr(-(xq - mean) / sd))
    half_k = 0.5 * d
    if nc == 0.0:
        return float(gammaincc(half_k, 0.5 * xq))

    mu = 0.5 * nc
    j0 = int(math.floor(mu))

    def log_pois(j):
        return -mu + j * math.log(mu) - gammaln(j + 1.0)

    total = 0.0
    n_terms = 0
    # upward from the mode
    j = j0
    while True:
        w = math.exp(log_pois(j))
        total += w * gammaincc(half_k + j, 0.5 * xq)
        n_terms += 1
        ratio = mu / (j + 1.0)
        if ratio < 1.0 and w * ratio / (1.0 - ratio) < _SERIES_CUTOFF:
            break
        j += 1
        if n_terms > _SERIES_MAX_TERMS:
            raise NumericError(
                f"ball_tail_mass series did not converge: nc={nc}, x={xq}, d={d}, terms={n_terms}, partial={total}"
            )
    # downward from the mode
    j = j0 - 1
    while j >= 0:
        w = math.exp(log_pois(j))
        total += w * gammaincc(half_k + j, 0.5 * xq)
        n_terms += 1
        ratio = j / mu
        if ratio < 1.0 and w * ratio / (1.0 - ratio) < _SERIES_CUTOFF:
            break
        j -= 1
        if n_terms > _SERIES_MAX_TERMS:
            raise NumericError(
                f"ball_tail_mass series did not converge: nc={nc}, x={xq}, d={d}, terms={n_terms}, partial={total}"
            )
    return float(min(max(total, 0.0), 1.0))


def _ball_tail_mass_v(shift, sigma, R, d):
    shift = np.asarray(shift, dtype=np.float64)
    flat = np.fromiter((ball_tail_mass(s, sigma, R, d) for s in shift.ravel()), float, shift.size)
    return flat.reshape(shift.shape)


def ball_log_volume(R: float, d: int) -> float:
    return 0.5 * d * math.log(math.pi) + d * math.log(R) - gammaln(0.5 * d + 1.0)


@dataclass(frozen=True)
class ReflectedKernel(TransitionKernel):
    """Confine ``inner`` to the origin-centred ball of radius ``domain_radius``.

    A step that would leave the ball is replaced by a uniform draw from it,
    so the density on the ball is the inner density plus the exit
    probability spread evenly over the ball's volume.
    """

    inner: TransitionKernel
    domain_radius: float
    dim: int = field(init=False)
    noise_width: int = field(init=False)

    def __post_init__(self):
        if not self.domain_radius > 0:
            raise InvalidArgumentError("domain_radius must be positive")
        object.__setattr__(self, "dim", self.inner.dim)
        object.__setattr__(self, "noise_width", self.inner.noise_width + self.inner.dim + 1)

    def _check_inside(self, pts, name):
        r = np.linalg.norm(pts, axis=-1)
        if np.any(r > self.domain_radius * (1.0 + 1e-12)):
            raise DomainError(f"{name} outside the ball of radius {self.domain_radius} (max |{name}| = {r.max()})")

    def log_density(self, h, x, a, y):
        x = _as_points(x, self.dim, "x")
        a = _as_points(a, self.dim, "a")
        y = _as_points(y, self.dim, "y")
        self._check_inside(x, "x")
        self._check_inside(y, "y")
        inner = self.inner.log_density(h, x, a, y)
        x_b, a_b = np.broadcast_arrays(x, a)
        tail = self.inner.exit_probability(h, x_b, a_b, self.domain_radius)
        with np.errstate(divide="ignore"):
            log_corr = np.log(tail) - ball_log_volume(self.domain_radius, self.dim)
        return np.logaddexp(inner, log_corr)

    def log_density_grid(self, h, x, a, y, y_offset=None):
        x = _as_points(x, self.dim, "x")
        a = _as_points(a, self.dim, "a")
        y = _as_points(y, self.dim, "y")
        self._check_inside(x, "x")
        self._check_inside(y, "y")
        inner = self.inner.log_density_grid(h, x, a, y)
        tail = self.inner.exit_probability(h, x[:, None, :], a[None, :, :], self.domain_radius)
        with np.errstate(divide="ignore"):
            log_corr = np.log(tail) - ball_log_volume(self.domain_radius, self.dim)
        out = np.logaddexp(inner, log_corr[:, :, None])
        if y_offset is not None:
            with np.errstate(invalid="ignore"):
                out += y_offset
        return out

    def transition(self, h, x, a, u):
        u = np.asarray(u, dtype=np.float64)
        w = self.inner.noise_width
        y = self.inner.transition(h, x, a, u[..., :w])
        out = np.linalg.norm(y, axis=-1) > self.domain_radius
        if np.any(out):
            z = ndtri(u[..., w : w + self.dim])
            direction = z / np.linalg.norm(z, axis=-1, keepdims=True)
            radius = self.domain_radius * u[..., -1] ** (1.0 / self.dim)
            q = direction * radius[..., None]
            y = np.where(out[..., None], q, y)
        return y


def reflected_log_density(h: int, x, a, y, rk: ReflectedKernel) -> np.ndarray:
    return rk.log_density(h, x, a, y)


def reflected_sample(h: int, x, a, rk: ReflectedKernel, rng: np.random.Generator) -> np.ndarray:
    x = _as_points(x, rk.dim, "x")
    rk._check_inside(x, "x")
    return rk.sample(h, x, a, rng)


@dataclass(frozen=True)
class KernelDiagnostics:
    """Bounds for a Gaussian shift kernel restricted to ``B_{R_N}``.

    ``lipschitz`` is reported only; nothing in the solver consumes it.
    """

    delta_D: float
    Lambda: float
    R_N: float
    tail_mass_bound: float
    lipschitz: float
    gamma: float
    n_paths: int

    def as_dict(self) -> dict:
        return {
            "delta_D": self.delta_D,
            "Lambda": self.Lambda,
            "R_N": self.R_N,
            "tail_mass_bound": self.tail_mass_bound,
            "lipschitz": self.lipschitz,
            "gamma": self.gamma,
            "n_paths": self.n_paths,
        }


def diagnostics_for_schedule(kernel: GaussianShiftKernel, A: float, N: int, gamma: float) -> KernelDiagnostics:
    """Density bounds on the truncation ball ``B_{R_N}``, ``R_N = sqrt(gamma sigma_min^2 log N / 4)``.

    Informational only: the values are logged and returned, never fed back
    into a solve.
    """
    if not 0.0 < gamma < 0.25:
        raise InvalidArgumentError(f"gamma must lie in (0, 1/4), got {gamma}")
    if N < 2:
        raise InvalidArgumentError(f"N must be >= 2, got {N}")
    d = kernel.dim
    smin, smax = kernel.sigma_min, kernel.sigma_max
    R_N = math.sqrt(gamma * smin**2 * math.log(N) / 4.0)
    delta = (2.0 * math.pi * smax**2) ** (-d / 2.0) * math.exp(-(A**2) / smin**2) * N ** (-gamma)
    Lam = (2.0 * math.pi * smin**2) ** (-d / 2.0)
    lip = 2.0 * (1.0 + 2.0 ** ((d + 3) / 2.0)) / (smin ** (d + 2) * math.pi ** (d / 2.0)) * R_N
    var_H = sum(s * s for s in kernel.sigmas)
    tail = float(gammaincc(d / 2.0, R_N**2 / (8.0 * var_H)))
    diag = KernelDiagnostics(delta, Lam, R_N, tail, lip, gamma, N)
    logger.info("kernel diagnostics: %s", diag)
    return diag
