"""Deterministic-seeded Wiener noise, Euler-Maruyama stepping, and the time
changes shared by the different process parameterizations.

Randomness is counter-based (Philox keyed by the ``(seed, stream_id)`` pair),
so each path is a pure function of its seed and stream id: how many other
paths are drawn, and on how many workers, never changes the result.  Distinct
stream ids are independent by construction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Callable, Iterable, Union

import numpy as np

from .targets import GaussianMeasure

SALT_NOISE = 0
SALT_INIT = 1
_U64 = 0xFFFFFFFFFFFFFFFF


class NonFiniteStateError(RuntimeError):
    """An integration step produced a non-finite state."""

    def __init__(self, step: int, t: float):
        self.step = step
        self.t = t
        super().__init__(f"non-finite state at step {step} (time {t!r})")


def generator(seed: int, stream_id: int, salt: int = SALT_NOISE) -> np.random.Generator:
    """Counter-based generator for one (seed, stream) pair.

    ``salt`` selects disjoint counter blocks within a stream so that, for
    example, noise increments and initial-condition draws never overlap.
    """
    key = np.array([seed & _U64, stream_id & _U64], dtype=np.uint64)
    counter = np.array([0, salt & _U64, 0, 0], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def map_chunks(run_chunk, n: int, chunk: int, workers: int = 1) -> None:
    """Apply ``run_chunk(lo, hi)`` over consecutive index ranges.

    Chunks write into disjoint, stream-keyed output slices, so results are
    identical for any worker count or scheduling order.
    """
    ranges = [(lo, min(lo + chunk, n)) for lo in range(0, n, chunk)]
    if workers <= 1 or len(ranges) <= 1:
        for lo, hi in ranges:
            run_chunk(lo, hi)
        return
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=workers) as pool:
        list(pool.map(lambda r: run_chunk(*r), ranges))


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing, finite, nonnegative time points."""

    times: np.ndarray

    def __post_init__(self):
        t = np.atleast_1d(np.asarray(self.times, dtype=float))
        if t.size < 1 or not np.all(np.isfinite(t)):
            raise ValueError("grid needs at least one finite time")
        if t[0] < 0.0:
            raise ValueError("grid times must be nonnegative")
        if t.size > 1 and not np.all(np.diff(t) > 0.0):
            raise ValueError("grid times must be strictly increasing")
        t = t.copy()
        t.setflags(write=False)
        object.__setattr__(self, "times", t)

    @classmethod
    def uniform(cls, start: float, stop: float, steps: int) -> "TimeGrid":
        return cls(np.linspace(start, stop, steps + 1))

    @classmethod
    def geometric(cls, start: float, stop: float, steps: int) -> "TimeGrid":
        if start <= 0.0:
            raise ValueError("geometric grids need a positive start")
        return cls(np.geomspace(start, stop, steps + 1))

    def including(self, *points: float) -> "TimeGrid":
        """Union of this grid with extra time points, for exact snapshots."""
        return TimeGrid(np.unique(np.concatenate([self.times, np.asarray(points, float)])))

    @property
    def dts(self) -> np.ndarray:
        return np.diff(self.times)

    @property
    def steps(self) -> int:
        return self.times.size - 1

    def __len__(self) -> int:
        return self.times.size

    def index_of(self, t: float) -> int:
        """Index of a grid point equal to ``t`` up to round-off."""
        idx = int(np.argmin(np.abs(self.times - t)))
        if not math.isclose(self.times[idx], t, rel_tol=1e-12, abs_tol=1e-12):
            raise ValueError(f"time {t!r} is not a grid point")
        return idx


@dataclass(frozen=True)
class SamplePath:
    """A discretized trajectory on a grid together with its noise identity."""

    grid: TimeGrid
    states: np.ndarray
    seed: int
    stream_id: int

    def __post_init__(self):
        states = np.asarray(self.states, dtype=float)
        if states.ndim == 1:
            states = states[:, None]
        if states.shape[0] != len(self.grid):
            raise ValueError(
                f"states have {states.shape[0]} rows for a grid of {len(self.grid)} points"
            )
        states = states.copy()
        states.setflags(write=False)
        object.__setattr__(self, "states", states)

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    def increments(self) -> np.ndarray:
        return np.diff(self.states, axis=0)

    def terminal(self) -> np.ndarray:
        return self.states[-1]


def wiener_increment_array(grid: TimeGrid, d: int, seed: int, stream_id: int) -> np.ndarray:
    """Raw Wiener increments over the grid intervals, shape ``(steps, d)``."""
    g = generator(seed, stream_id, SALT_NOISE)
    return g.standard_normal((grid.steps, d)) * np.sqrt(grid.dts)[:, None]


def wiener_increments(grid: TimeGrid, d: int, seed: int, stream_id: int = 0) -> SamplePath:
    """A Wiener path on ``grid``, relative to the grid start (state 0 there).

    Increments over ``[t_k, t_{k+1}]`` are independent ``N(0, dt * I)``;
    reproducible per ``(seed, stream_id)``.
    """
    if d < 1:
        raise ValueError("dimension must be at least 1")
    dw = wiener_increment_array(grid, d, seed, stream_id)
    states = np.vstack([np.zeros((1, d)), np.cumsum(dw, axis=0)])
    return SamplePath(grid, states, seed, stream_id)


def draw_initial(
    initial: Union[np.ndarray, GaussianMeasure], seed: int, stream_id: int
) -> np.ndarray:
    """Initial condition: a point is returned as-is, a Gaussian law is sampled
    from the stream's dedicated counter block."""
    if isinstance(initial, GaussianMeasure):
        g = generator(seed, stream_id, SALT_INIT)
        return initial.mean + initial.chol @ g.standard_normal(initial.dim)
    return np.atleast_1d(np.asarray(initial, dtype=float)).copy()


@dataclass(frozen=True)
class DriftDiffusionSpec:
    """dx = drift(x, t) dt + diffusion_scale(t) dW with a point or Gaussian start."""

    drift: Callable[[np.ndarray, float], np.ndarray]
    diffusion_scale: Callable[[float], Union[float, np.ndarray]]
    initial: Union[np.ndarray, GaussianMeasure]


def euler_maruyama(spec: DriftDiffusionSpec, grid: TimeGrid, noise: SamplePath) -> SamplePath:
    """Explicit Euler-Maruyama driven by the provided noise path.

    The noise path must live on the integration grid with matching dimension.
    Raises ``NonFiniteStateError`` (with the step index) if a state blows up.
    """
    if not np.array_equal(noise.grid.times, grid.times):
        raise ValueError("noise path must live on the integration grid")
    d = noise.dim
    x = draw_initial(spec.initial, noise.seed, noise.stream_id)
    if x.size != d:
        raise ValueError("initial condition dimension does not match the noise")
    dw = noise.increments()
    out = np.empty((len(grid), d))
    out[0] = x
    checked_scale = False
    for k in range(grid.steps):
        t = grid.times[k]
        drift = np.asarray(spec.drift(x, t), dtype=float)
        scale = spec.diffusion_scale(t)
        if np.ndim(scale) == 2:
            scale = np.asarray(scale, dtype=float)
            if not checked_scale:
                eigs = np.linalg.eigvalsh(0.5 * (scale + scale.T))
                if np.abs(scale - scale.T).max() > 1e-10 or eigs.min() < -1e-12:
                    raise ValueError("matrix diffusion scale must be symmetric PSD")
                checked_scale = True
            kick = scale @ dw[k]
        else:
            kick = float(scale) * dw[k]
        x = x + drift * grid.dts[k] + kick
        if not np.all(np.isfinite(x)):
            raise NonFiniteStateError(k + 1, float(grid.times[k + 1]))
        out[k + 1] = x
    return SamplePath(grid, out, noise.seed, noise.stream_id)


@dataclass(frozen=True)
class TimeChangeMap:
    """A monotone reparameterization of process time.

    ``forward`` and ``inverse`` are mutually inverse; ``inverse_deriv`` is the
    signed derivative of the inverse map, negative exactly when the map is
    declared decreasing.
    """

    forward: Callable[[np.ndarray], np.ndarray]
    inverse: Callable[[np.ndarray], np.ndarray]
    inverse_deriv: Callable[[np.ndarray], np.ndarray]
    decreasing: bool = False


#: Flow time tau in [0, 1) versus tilt time t in [0, inf): t = tau / (1 - tau).
POLCHINSKI_TO_TILT = TimeChangeMap(
    forward=lambda tau: tau / (1.0 - tau),
    inverse=lambda t: t / (1.0 + t),
    inverse_deriv=lambda t: 1.0 / (1.0 + t) ** 2,
    decreasing=False,
)

#: Forward OU time t versus backward time u: u = 1 / (e^{2t} - 1), decreasing,
#: with inverse t = 0.5 * log((u + 1) / u).
OU_TO_BACKWARD = TimeChangeMap(
    forward=lambda t: 1.0 / np.expm1(2.0 * t),
    inverse=lambda u: 0.5 * np.log((u + 1.0) / u),
    inverse_deriv=lambda u: -1.0 / (2.0 * u * (u + 1.0)),
    decreasing=True,
)


def finite_horizon_map(horizon: float) -> TimeChangeMap:
    """Plain reversal u = T - t on [0, T], the finite-horizon alternative to
    the unbounded backward parameterization."""
    if not horizon > 0.0:
        raise ValueError("horizon must be positive")
    return TimeChangeMap(
        forward=lambda t: horizon - np.asarray(t, dtype=float),
        inverse=lambda u: horizon - np.asarray(u, dtype=float),
        inverse_deriv=lambda u: -np.ones_like(np.asarray(u, dtype=float)),
        decreasing=True,
    )


def time_change_grid(grid: TimeGrid, tmap: TimeChangeMap, direction: str = "forward") -> TimeGrid:
    """Apply the map (or its inverse) pointwise; the result is re-sorted increasing.

    Raises ValueError if the map is undefined (non-finite) at a grid endpoint;
    the caller must clip the grid away from singular endpoints first.
    """
    if direction not in ("forward", "inverse"):
        raise ValueError("direction must be 'forward' or 'inverse'")
    fn = tmap.forward if direction == "forward" else tmap.inverse
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = np.asarray(fn(np.asarray(grid.times, dtype=float)), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise ValueError(
            "time change is undefined at a grid endpoint; clip the grid away from it"
        )
    if vals.size > 1 and vals[0] > vals[-1]:
        vals = vals[::-1]
    return TimeGrid(vals)


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_paths_csv(paths: Iterable[SamplePath], out: Union[str, Path, IO[str]]) -> None:
    """Export paths as CSV with columns stream_id, time, x_1..x_d."""
    paths = list(paths)
    if not paths:
        raise ValueError("no paths to write")
    d = paths[0].dim
    header = "stream_id,time," + ",".join(f"x_{k + 1}" for k in range(d))
    lines = [header]
    for path in paths:
        for t, row in zip(path.grid.times, path.states):
            lines.append(
                ",".join([str(path.stream_id), _fmt(t)] + [_fmt(v) for v in row])
            )
    text = "\n".join(lines) + "\n"
    if hasattr(out, "write"):
        out.write(text)
    else:
        Path(out).write_text(text)
