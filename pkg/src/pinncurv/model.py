"""Tanh MLP regressor and the 1-D linear advection PINN problem.

The PDE is ``u_t + beta * u_x = 0`` on ``x in [0, 2pi)``, ``t in [0, 1]`` with
``u(x, 0) = sin(x)`` and periodic boundaries; its exact solution is
``sin(x - beta * t)``.

Two evaluation routes exist for the loss:

* :func:`pinn_loss` / :func:`pinn_loss_and_grad` run a batched numpy kernel
  (forward tangent along ``(beta, 1)`` plus a hand-written reverse sweep).
  This is what training uses.
* :func:`pinn_loss_reference` is written in scalar arithmetic on top of
  :mod:`pinncurv.autodiff` and can be fed to :func:`~pinncurv.autodiff.grad_params`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import autodiff as ad
from .errors import ConfigurationError, DivergenceError
from .rng import stream

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class MlpArchitecture:
    layer_sizes: tuple[int, ...]

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        if len(sizes) < 2 or sizes[0] != 2 or sizes[-1] != 1 or min(sizes) < 1:
            raise ConfigurationError(f"invalid architecture {list(sizes)}")
        object.__setattr__(self, "layer_sizes", sizes)

    @property
    def n_params(self) -> int:
        return param_count(self)


ARCHITECTURES = {
    "S": MlpArchitecture((2, 25, 25, 1)),
    "L": MlpArchitecture((2, 50, 50, 50, 50, 1)),
}


def as_architecture(arch) -> MlpArchitecture:
    if isinstance(arch, MlpArchitecture):
        return arch
    if isinstance(arch, str):
        if arch in ARCHITECTURES:
            return ARCHITECTURES[arch]
        try:
            return MlpArchitecture(tuple(int(s) for s in arch.split("-")))
        except ValueError:
            raise ConfigurationError(f"unknown architecture {arch!r}") from None
    return MlpArchitecture(tuple(arch))


def arch_label(arch) -> str:
    """``"S"``/``"L"`` for the named networks, else sizes joined by dashes."""
    arch = as_architecture(arch)
    for name, known in ARCHITECTURES.items():
        if known == arch:
            return name
    return "-".join(str(s) for s in arch.layer_sizes)


def param_count(arch) -> int:
    sizes = as_architecture(arch).layer_sizes
    return sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:]))


def _layers(arch: MlpArchitecture, params: np.ndarray):
    if params.ndim != 1 or params.size != param_count(arch):
        raise ConfigurationError(
            f"expected {param_count(arch)} parameters, got shape {params.shape}"
        )
    sizes = arch.layer_sizes
    out = []
    pos = 0
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        w = params[pos : pos + n_in * n_out].reshape(n_out, n_in)
        pos += n_in * n_out
        out.append((w, params[pos : pos + n_out]))
        pos += n_out
    return out


def init_params(arch, seed: int) -> np.ndarray:
    """Glorot-uniform weights, zero biases."""
    arch = as_architecture(arch)
    rng = stream(seed, "init")
    chunks = []
    for n_in, n_out in zip(arch.layer_sizes[:-1], arch.layer_sizes[1:]):
        bound = math.sqrt(6.0 / (n_in + n_out))
        chunks.append(rng.uniform(-bound, bound, size=n_in * n_out))
        chunks.append(np.zeros(n_out))
    return np.concatenate(chunks)


def _first_affine(w, b, x, t):
    # inner dimension 2 is a slow path for BLAS; broadcast instead
    z = np.multiply.outer(x, w[:, 0])
    z += np.multiply.outer(t, w[:, 1])
    z += b
    return z


def _forward_values(layers, x, t):
    w, b = layers[0]
    a = _first_affine(w, b, x, t)
    if len(layers) == 1:
        return a[:, 0]
    np.tanh(a, out=a)
    for w, b in layers[1:-1]:
        a = a @ w.T
        a += b
        np.tanh(a, out=a)
    w, b = layers[-1]
    return a @ w[0] + b[0]


def forward(arch, params, x, t):
    """Network output at scalar or array-valued ``(x, t)``."""
    arch = as_architecture(arch)
    layers = _layers(arch, np.asarray(params, dtype=np.float64))
    xs = np.atleast_1d(np.asarray(x, dtype=np.float64))
    ts = np.broadcast_to(np.asarray(t, dtype=np.float64), xs.shape)
    u = _forward_values(layers, xs.ravel(), ts.ravel()).reshape(xs.shape)
    if np.ndim(x) == 0 and np.ndim(t) == 0:
        return float(u[0])
    return u


class _Jet:
    """Batched forward pass carrying one input-space tangent, with its adjoint.

    Layer 0 is handled separately: its inputs are ``(x, t)`` columns and its
    tangent pre-activation is the same row for every point.
    """

    def __init__(self, layers, x, t, direction):
        self.layers = layers
        self.x, self.t = x, t
        self.direction = direction
        n = x.size
        w, b = layers[0]
        z = _first_affine(w, b, x, t)
        zd = direction[0] * w[:, 0] + direction[1] * w[:, 1]
        if len(layers) == 1:
            self.u = z[:, 0]
            self.du = np.full(n, zd[0])
            self.cache = []
            return
        a = np.tanh(z, out=z)
        s = 1.0 - a * a
        ad_ = s * zd
        self.cache = [(a, ad_, zd, s)]
        for w, b in layers[1:-1]:
            a = a @ w.T
            a += b
            np.tanh(a, out=a)
            zd = ad_ @ w.T
            s = 1.0 - a * a
            ad_ = s * zd
            self.cache.append((a, ad_, zd, s))
        w, b = layers[-1]
        self.u = a @ w[0] + b[0]
        self.du = ad_ @ w[0]

    def backward(self, u_bar, du_bar):
        grads = []
        w, _ = self.layers[-1]
        d0, d1 = self.direction
        if not self.cache:
            gw = np.array([u_bar @ self.x + d0 * du_bar.sum(), u_bar @ self.t + d1 * du_bar.sum()])
            return np.concatenate((gw, [u_bar.sum()]))
        a, ad_, _, _ = self.cache[-1]
        grads.append((u_bar @ a + du_bar @ ad_, np.array([u_bar.sum()])))
        a_bar = np.multiply.outer(u_bar, w[0])
        ad_bar = np.multiply.outer(du_bar, w[0])
        for layer in range(len(self.layers) - 2, -1, -1):
            w, _ = self.layers[layer]
            a, _, zd, s = self.cache[layer]
            zd_bar = ad_bar * s
            z_bar = ad_bar * zd
            z_bar *= a
            z_bar *= -2.0
            z_bar += a_bar
            z_bar *= s
            if layer:
                a_prev, ad_prev = self.cache[layer - 1][:2]
                grads.append((z_bar.T @ a_prev + zd_bar.T @ ad_prev, z_bar.sum(axis=0)))
                a_bar = z_bar @ w
                ad_bar = zd_bar @ w
            else:
                zd_sum = zd_bar.sum(axis=0)
                gw = np.column_stack((z_bar.T @ self.x + d0 * zd_sum, z_bar.T @ self.t + d1 * zd_sum))
                grads.append((gw, z_bar.sum(axis=0)))
        grads.reverse()
        return np.concatenate([np.concatenate((gw.ravel(), gb)) for gw, gb in grads])


def exact_solution(beta, x, t):
    if np.ndim(x) == 0 and np.ndim(t) == 0:
        return math.sin(x - beta * t)
    return np.sin(np.subtract(x, np.multiply(beta, t)))


@dataclass(frozen=True)
class AdvectionProblem:
    beta: float

    def __post_init__(self):
        if not self.beta > 0:
            raise ConfigurationError(f"wave speed must be positive, got {self.beta}")

    @staticmethod
    def u0(x):
        return np.sin(x)

    def exact(self, x, t):
        return exact_solution(self.beta, x, t)


@dataclass(frozen=True)
class PointSet:
    """Collocation points of one split (train or test)."""

    ic_x: np.ndarray
    ic_u: np.ndarray
    bulk_x: np.ndarray
    bulk_t: np.ndarray
    bc_t: np.ndarray

    @property
    def sizes(self) -> tuple[int, int, int]:
        return self.ic_x.size, self.bulk_x.size, self.bc_t.size

    def take(self, ic_idx, bulk_idx, bc_idx) -> "PointSet":
        return PointSet(
            self.ic_x[ic_idx], self.ic_u[ic_idx],
            self.bulk_x[bulk_idx], self.bulk_t[bulk_idx],
            self.bc_t[bc_idx],
        )


@dataclass(frozen=True)
class TrainingSet:
    train: PointSet
    test: PointSet
    seed: int


def uniform_grid(nx: int = 256, nt: int = 100):
    """Equispaced periodic x grid (endpoint excluded) and closed t grid."""
    return TWO_PI * np.arange(nx) / nx, np.linspace(0.0, 1.0, nt)


def _split(n: int, frac: float = 0.8) -> int:
    return int(round(frac * n))


def sample_dataset(problem: AdvectionProblem, seed: int, grid_nx=256, grid_nt=100,
                   n_u=100, n_f=2000, n_b=80) -> TrainingSet:
    if n_u > grid_nx or n_f > grid_nx * grid_nt or n_b > grid_nt or min(n_u, n_f, n_b) < 2:
        raise ConfigurationError(
            f"counts (n_u={n_u}, n_f={n_f}, n_b={n_b}) do not fit a {grid_nx}x{grid_nt} grid"
        )
    rng = stream(seed, "data")
    xg, tg = uniform_grid(grid_nx, grid_nt)
    # choice without replacement returns a random order, so slicing is a random split
    ic_x = xg[rng.choice(grid_nx, n_u, replace=False)]
    flat = rng.choice(grid_nx * grid_nt, n_f, replace=False)
    bulk_x, bulk_t = xg[flat % grid_nx], tg[flat // grid_nx]
    bc_t = tg[rng.choice(grid_nt, n_b, replace=False)]
    ku, kf, kb = _split(n_u), _split(n_f), _split(n_b)
    ic_u = problem.u0(ic_x)
    train = PointSet(ic_x[:ku], ic_u[:ku], bulk_x[:kf], bulk_t[:kf], bc_t[:kb])
    test = PointSet(ic_x[ku:], ic_u[ku:], bulk_x[kf:], bulk_t[kf:], bc_t[kb:])
    return TrainingSet(train, test, seed)


@dataclass(frozen=True)
class LossBreakdown:
    ic: float
    bulk: float
    bc: float
    total: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "total", self.ic + self.bulk + self.bc)


def _check_nonempty(points: PointSet):
    if min(points.sizes) < 1:
        raise ConfigurationError(f"every loss category needs points, got sizes {points.sizes}")


def _stack_inputs(points: PointSet):
    ni, nf, nb = points.sizes
    x = np.concatenate((points.ic_x, points.bulk_x, np.zeros(nb), np.full(nb, TWO_PI)))
    t = np.concatenate((np.zeros(ni), points.bulk_t, points.bc_t, points.bc_t))
    return x, t


def _mean_sq(v: np.ndarray) -> float:
    return math.fsum((v * v).tolist()) / v.size


def _breakdown(e_ic, resid, e_bc) -> LossBreakdown:
    out = LossBreakdown(_mean_sq(e_ic), _mean_sq(resid), _mean_sq(e_bc))
    if not math.isfinite(out.total):
        raise DivergenceError(f"non-finite loss {out}", value=out.total)
    return out


def pinn_loss_and_grad(arch, params, problem: AdvectionProblem, points: PointSet):
    """Three-term PINN loss and its gradient with respect to all parameters."""
    arch = as_architecture(arch)
    _check_nonempty(points)
    layers = _layers(arch, np.asarray(params, dtype=np.float64))
    ni, nf, nb = points.sizes
    x, t = _stack_inputs(points)
    # tangent along (beta, 1) gives u_t + beta * u_x in one channel
    jet = _Jet(layers, x, t, (problem.beta, 1.0))
    e_ic = jet.u[:ni] - points.ic_u
    resid = jet.du[ni : ni + nf]
    e_bc = jet.u[ni + nf : ni + nf + nb] - jet.u[ni + nf + nb :]
    loss = _breakdown(e_ic, resid, e_bc)
    u_bar = np.zeros_like(x)
    du_bar = np.zeros_like(x)
    u_bar[:ni] = 2.0 * e_ic / ni
    du_bar[ni : ni + nf] = 2.0 * resid / nf
    u_bar[ni + nf : ni + nf + nb] = 2.0 * e_bc / nb
    u_bar[ni + nf + nb :] = -2.0 * e_bc / nb
    grad = jet.backward(u_bar, du_bar)
    if not np.all(np.isfinite(grad)):
        raise DivergenceError("non-finite gradient", value=loss.total)
    return loss, grad


def pinn_loss(arch, params, problem: AdvectionProblem, points: PointSet) -> LossBreakdown:
    arch = as_architecture(arch)
    _check_nonempty(points)
    layers = _layers(arch, np.asarray(params, dtype=np.float64))
    ni, nf, nb = points.sizes
    x, t = _stack_inputs(points)
    jet = _Jet(layers, x, t, (problem.beta, 1.0))
    return _breakdown(
        jet.u[:ni] - points.ic_u,
        jet.du[ni : ni + nf],
        jet.u[ni + nf : ni + nf + nb] - jet.u[ni + nf + nb :],
    )


def pinn_loss_reference(arch, params, problem: AdvectionProblem, points: PointSet):
    """Total loss in scalar arithmetic; differentiable by :func:`autodiff.grad_params`."""
    arch = as_architecture(arch)
    _check_nonempty(points)
    beta = problem.beta
    ic = ad.mean(
        ad.square(ad.eval_with_input_derivs(arch, params, float(x), 0.0)[0] - float(u))
        for x, u in zip(points.ic_x, points.ic_u)
    )
    bulk_terms = []
    for x, t in zip(points.bulk_x, points.bulk_t):
        _, ux, ut = ad.eval_with_input_derivs(arch, params, float(x), float(t))
        bulk_terms.append(ad.square(ut + beta * ux))
    bc = ad.mean(
        ad.square(
            ad.eval_with_input_derivs(arch, params, 0.0, float(t))[0]
            - ad.eval_with_input_derivs(arch, params, TWO_PI, float(t))[0]
        )
        for t in points.bc_t
    )
    return ic + ad.mean(bulk_terms) + bc


@lru_cache(maxsize=16)
def _grid_targets(beta, grid_nx, grid_nt):
    xg, tg = uniform_grid(grid_nx, grid_nt)
    u = exact_solution(beta, xg[None, :], tg[:, None]).ravel()
    u.flags.writeable = False
    return xg, tg, u


def _grid_forward(layers, xg, tg, rows=16):
    """Network on the tensor grid, t-major; first layer as an outer sum, in
    cache-sized blocks of ``rows`` time levels."""
    w, b = layers[0]
    px = np.multiply.outer(xg, w[:, 0])
    pt = np.multiply.outer(tg, w[:, 1]) + b
    out = np.empty((tg.size, xg.size))
    for i in range(0, tg.size, rows):
        a = (pt[i : i + rows, None, :] + px[None, :, :]).reshape(-1, w.shape[0])
        if len(layers) == 1:
            out[i : i + rows] = a[:, 0].reshape(-1, xg.size)
            continue
        np.tanh(a, out=a)
        for w2, b2 in layers[1:-1]:
            a = a @ w2.T
            a += b2
            np.tanh(a, out=a)
        wl, bl = layers[-1]
        out[i : i + rows] = (a @ wl[0] + bl[0]).reshape(-1, xg.size)
    return out.ravel()


def grid_mse(arch, params, problem: AdvectionProblem, grid_nx=256, grid_nt=100) -> float:
    """Mean squared error against the exact solution over the full uniform grid."""
    arch = as_architecture(arch)
    layers = _layers(arch, np.asarray(params, dtype=np.float64))
    xg, tg, _ = _grid_targets(float(problem.beta), grid_nx, grid_nt)
    return grid_mse_of(_grid_forward(layers, xg, tg), problem, grid_nx, grid_nt)


def grid_mse_of(values, problem: AdvectionProblem, grid_nx=256, grid_nt=100) -> float:
    """MSE of predictions given on the grid in t-major order (any predictor)."""
    u = _grid_targets(float(problem.beta), grid_nx, grid_nt)[2]
    err = np.asarray(values, dtype=np.float64).ravel() - u
    # fsum is exactly rounded, hence independent of evaluation order
    mse = math.fsum((err * err).tolist()) / err.size
    if not math.isfinite(mse):
        raise DivergenceError(f"non-finite grid MSE {mse}", value=mse)
    return mse


def grid_points(grid_nx=256, grid_nt=100):
    """Flattened ``(x, t)`` of the evaluation grid, t-major."""
    xg, tg = uniform_grid(grid_nx, grid_nt)
    return np.tile(xg, grid_nt), np.repeat(tg, grid_nx)
