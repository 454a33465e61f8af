"""Background-estimation experiments on synthetic video.

Frames are stored as columns of a ``(height*width) x num_frames`` matrix.
The generator mimics a surveillance sequence: a low-rank background with
slow illumination changes, moving foreground rectangles, an optional
object that parks for a window of frames, and a set of frames with no
foreground at all.
"""
import enum
import math
import threading
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels, rpca, swlr
from .closedform import PartitionedMatrix


class SceneConfigError(ValueError):
    pass


def _default_layout_frames(n):
    # no-foreground windows at the same relative positions as a 600-frame
    # sequence with clean frames 6-12 and 483-528 (1-based)
    first = range(math.floor(5 * n / 600), math.ceil(12 * n / 600))
    second = range(math.floor(482 * n / 600), math.ceil(528 * n / 600))
    return sorted(set(first) | set(second))


def _late_static_window(n):
    # frames 551-600 of 600
    return (math.floor(550 * n / 600), n)


@dataclass(frozen=True)
class SyntheticSceneConfig:
    height: int = 64
    width: int = 64
    num_frames: int = 120
    bg_rank: int = 3
    fg_objects: int = 3
    fg_size: int = 10
    fg_magnitude: float = 90.0
    noise_sigma: float = 2.0
    # (start, stop) half-open; None disables the parked object
    static_fg_window: tuple | None = None
    static_fg_size: int = 16
    # None means the default clean-frame layout for num_frames
    pure_bg_frames: tuple | None = None
    seed: int = 0

    def resolved_pure_bg(self):
        if self.pure_bg_frames is None:
            return _default_layout_frames(self.num_frames)
        return sorted(set(self.pure_bg_frames))

    def validate(self):
        if self.height < 1 or self.width < 1 or self.num_frames < 1:
            raise SceneConfigError("frame dimensions and count must be positive")
        if not 1 <= self.bg_rank <= min(self.height * self.width, self.num_frames):
            raise SceneConfigError(f"bg_rank={self.bg_rank} out of range")
        checks = [(self.fg_size, "fg_size", self.fg_objects > 0),
                  (self.static_fg_size, "static_fg_size", self.static_fg_window is not None)]
        for size, name, used in checks:
            if used:
                if not 1 <= size <= min(self.height, self.width):
                    raise SceneConfigError(f"{name}={size} does not fit a {self.height}x{self.width} frame")
        if self.fg_objects < 0 or self.noise_sigma < 0:
            raise SceneConfigError("fg_objects and noise_sigma must be nonnegative")
        for j in self.resolved_pure_bg():
            if not 0 <= j < self.num_frames:
                raise SceneConfigError(f"pure background frame {j} outside [0, {self.num_frames})")
        if self.static_fg_window is not None:
            start, stop = self.static_fg_window
            if not 0 <= start < stop <= self.num_frames:
                raise SceneConfigError(f"static window {self.static_fg_window} out of range")


def with_late_static_window(cfg):
    return replace(cfg, static_fg_window=_late_static_window(cfg.num_frames))


@dataclass
class Scene:
    frames: np.ndarray
    background: np.ndarray
    masks: np.ndarray
    dims: tuple
    config: SyntheticSceneConfig

    @property
    def pure_bg_frames(self):
        return self.config.resolved_pure_bg()

    @property
    def static_frames(self):
        if self.config.static_fg_window is None:
            return []
        return list(range(*self.config.static_fg_window))


def _smooth_texture(rng, h, w, terms=6):
    yy, xx = np.mgrid[0:h, 0:w]
    img = np.zeros((h, w))
    for _ in range(terms):
        fy, fx = rng.uniform(0.5, 3.0, size=2) * 2 * np.pi
        phase = rng.uniform(0, 2 * np.pi)
        img += rng.uniform(0.5, 1.0) * np.cos(fy * yy / h + fx * xx / w + phase)
    img -= img.mean()
    return img / np.abs(img).max()


def generate_scene(cfg=SyntheticSceneConfig()):
    """Synthesize ``frames = background + foreground + noise``.

    The background is a sum of ``bg_rank`` separable terms
    (spatial texture x temporal profile). Moving rectangles bounce around
    the frame and are hidden in the pure background frames; the parked
    rectangle occupies a fixed spot through ``static_fg_window``.
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    h, w, n = cfg.height, cfg.width, cfg.num_frames
    t = np.arange(n) / max(n - 1, 1)

    spatial = [110.0 + 50.0 * _smooth_texture(rng, h, w)]
    temporal = [1.0 + 0.08 * np.sin(2 * np.pi * t + rng.uniform(0, 2 * np.pi))]
    for _ in range(cfg.bg_rank - 1):
        spatial.append(15.0 * _smooth_texture(rng, h, w))
        temporal.append(np.sin(2 * np.pi * rng.uniform(0.5, 2.0) * t + rng.uniform(0, 2 * np.pi)))
    background = np.stack([s.ravel() for s in spatial], axis=1) @ np.stack(temporal)

    fg = np.zeros((h, w, n))
    masks = np.zeros((h, w, n), dtype=bool)
    pure = set(cfg.resolved_pure_bg())
    size = cfg.fg_size
    for _ in range(cfg.fg_objects):
        pos = rng.uniform([0, 0], [h - size, w - size])
        vel = rng.uniform(1.0, 2.5, size=2) * rng.choice([-1, 1], size=2)
        sign = rng.choice([-1.0, 1.0])
        for j in range(n):
            for ax, lim in enumerate((h - size, w - size)):
                pos[ax] += vel[ax]
                if pos[ax] < 0 or pos[ax] > lim:
                    vel[ax] = -vel[ax]
                    pos[ax] = min(max(pos[ax], 0), lim)
            if j in pure:
                continue
            y0, x0 = int(round(pos[0])), int(round(pos[1]))
            fg[y0:y0 + size, x0:x0 + size, j] = sign * cfg.fg_magnitude
            masks[y0:y0 + size, x0:x0 + size, j] = True
    if cfg.static_fg_window is not None:
        s = cfg.static_fg_size
        y0 = int(rng.integers(0, h - s + 1))
        x0 = int(rng.integers(0, w - s + 1))
        for j in range(*cfg.static_fg_window):
            if j in pure:
                continue
            fg[y0:y0 + s, x0:x0 + s, j] = -cfg.fg_magnitude
            masks[y0:y0 + s, x0:x0 + s, j] = True

    noise = cfg.noise_sigma * rng.standard_normal((h * w, n)) if cfg.noise_sigma else 0.0
    frames = background + fg.reshape(h * w, n) + noise
    return Scene(frames, background, masks.reshape(h * w, n), (h, w), cfg)


@dataclass(frozen=True)
class MetricConfig:
    ssim_window: int = 11
    ssim_k1: float = 0.01
    ssim_k2: float = 0.03
    dynamic_range: float = 255.0

    def __post_init__(self):
        if self.ssim_window < 3 or self.ssim_window % 2 == 0:
            raise ValueError("ssim_window must be odd and >= 3")


def ssim(x, y, cfg=MetricConfig()):
    """Mean SSIM of two images over all ``win x win`` windows (uniform weights)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"image shapes differ: {x.shape} vs {y.shape}")
    c1 = (cfg.ssim_k1 * cfg.dynamic_range) ** 2
    c2 = (cfg.ssim_k2 * cfg.dynamic_range) ** 2
    win = cfg.ssim_window
    mx = kernels.box_mean(x, win)
    my = kernels.box_mean(y, win)
    vx = kernels.box_mean(x * x, win) - mx * mx
    vy = kernels.box_mean(y * y, win) - my * my
    cxy = kernels.box_mean(x * y, win) - mx * my
    smap = ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
    return float(smap.mean())


def ssim_per_frame(estimate, truth, dims, cfg=MetricConfig()):
    estimate = np.asarray(estimate, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if estimate.shape != truth.shape:
        raise ValueError(f"shapes differ: {estimate.shape} vs {truth.shape}")
    if estimate.shape[0] != dims[0] * dims[1]:
        raise ValueError(f"{estimate.shape[0]} rows cannot reshape to {dims}")
    return np.array([
        ssim(estimate[:, j].reshape(dims), truth[:, j].reshape(dims), cfg)
        for j in range(estimate.shape[1])
    ])


def mean_ssim(estimate, truth, dims, cfg=MetricConfig()):
    """Average over frames (columns) of the per-frame SSIM."""
    return float(ssim_per_frame(estimate, truth, dims, cfg).mean())


class Solver(enum.Enum):
    SWLR = "swlr"
    IEALM = "iealm"
    APG = "apg"


@dataclass
class ExperimentReport:
    solver: Solver
    background: np.ndarray
    ssim: np.ndarray | None
    trace: swlr.ConvergenceTrace
    wall_time: float
    bg_columns: list = field(default_factory=list)
    state: swlr.SwlrState | None = None
    partition: PartitionedMatrix | None = None
    weights: swlr.WeightMask | None = None

    def x1_deviation(self):
        """``||X1 - A1||_F`` for an sWLR run."""
        return float(np.linalg.norm(self.state.x1 - self.partition.a1))

    def mean_ssim_on(self, frames):
        return float(self.ssim[list(frames)].mean())


def default_k(num_bg_frames, i1=1):
    """``ceil(num_bg_frames / i1)`` for ``i1`` in 1..4."""
    if i1 not in (1, 2, 3, 4):
        raise ValueError("i1 must be one of 1, 2, 3, 4")
    return math.ceil(num_bg_frames / i1)


def run_background_experiment(
    frames,
    bg_frame_indices,
    weight_range=(500.0, 1000.0),
    k=None,
    r=None,
    solver=Solver.SWLR,
    seed=0,
    swlr_config=None,
    rpca_config=None,
    truth=None,
    dims=None,
    metric=MetricConfig(),
):
    """Estimate the background of ``frames`` with one solver.

    For sWLR, ``k`` columns are sampled from ``bg_frame_indices``, moved to
    the front as ``A1`` with i.i.d. uniform weights on ``weight_range``, and
    the result is returned in the original column order. ``k`` defaults to
    all supplied background frames and ``r`` to ``k + 1``. Per-frame SSIM is
    computed when ``truth`` and ``dims`` are given.
    """
    frames = np.asarray(frames, dtype=np.float64)
    m, n = frames.shape
    solver = Solver(solver)
    rng = np.random.default_rng(seed)
    trace_state = partition = weights = None
    bg_cols = []
    if solver is Solver.SWLR:
        bg_frame_indices = sorted(set(int(j) for j in bg_frame_indices))
        if not bg_frame_indices:
            raise SceneConfigError("sWLR needs at least one background frame")
        k = len(bg_frame_indices) if k is None else k
        if k > len(bg_frame_indices):
            raise SceneConfigError(f"k={k} exceeds the {len(bg_frame_indices)} background frames")
        r = k + 1 if r is None else r
        bg_cols = sorted(rng.choice(bg_frame_indices, size=k, replace=False).tolist())
        rest = [j for j in range(n) if j not in set(bg_cols)]
        order = np.array(bg_cols + rest)
        partition = PartitionedMatrix(frames[:, order], k, r)
        lo, hi = weight_range
        weights = swlr.WeightMask.uniform(m, k, lo, hi, rng)
        cfg = swlr_config or swlr.SwlrConfig(seed=seed)
        with _timing_lock:
            t0 = time.perf_counter()
            trace_state, trace = swlr.solve(partition, weights, cfg)
            wall = time.perf_counter() - t0
        background = np.empty_like(frames)
        background[:, order] = trace_state.assembled()
    else:
        cfg = rpca_config or rpca.RpcaConfig()
        fn = rpca.iealm if solver is Solver.IEALM else rpca.apg
        with _timing_lock:
            t0 = time.perf_counter()
            result = fn(frames, cfg)
            wall = time.perf_counter() - t0
        background, trace = result.low_rank, result.trace
    scores = None
    if truth is not None and dims is not None:
        scores = ssim_per_frame(background, truth, dims, metric)
    return ExperimentReport(solver, background, scores, trace, wall, bg_cols,
                            trace_state, partition, weights)


# timing runs never overlap
_timing_lock = threading.Lock()


WEIGHT_RANGES = ((5.0, 10.0), (50.0, 100.0), (500.0, 1000.0))


def weight_sweep(scene, k=None, ranges=WEIGHT_RANGES, seed=0, swlr_config=None):
    """``||X1 - A1||_F`` for each weight range on one scene and init seed."""
    out = []
    for lo, hi in ranges:
        rep = run_background_experiment(
            scene.frames, scene.pure_bg_frames, (lo, hi), k=k, seed=seed,
            swlr_config=swlr_config, truth=scene.background, dims=scene.dims,
        )
        out.append(((lo, hi), rep.x1_deviation(), rep))
    return out


def scaling_benchmark(
    frame_counts,
    scene_config=SyntheticSceneConfig(),
    solvers=(Solver.SWLR, Solver.IEALM, Solver.APG),
    k=15,
    weight_range=(500.0, 1000.0),
    seed=0,
    swlr_config=None,
    rpca_config=None,
):
    """Wall time per solver per frame count, as ``(solver, n, wall_ms)`` rows.

    sWLR runs with a fixed ``k`` and ``r = k + 1``; the first ``k`` frames of
    every scene are kept free of foreground so enough background frames exist.
    """
    counts = list(frame_counts)
    if any(b <= a for a, b in zip(counts, counts[1:])):
        raise ValueError("frame counts must be increasing")
    rows = []
    for n in counts:
        cfg = replace(
            scene_config,
            num_frames=n,
            pure_bg_frames=tuple(sorted(set(range(k)) | set(_default_layout_frames(n)))),
        )
        scene = generate_scene(cfg)
        for solver in solvers:
            rep = run_background_experiment(
                scene.frames, range(k), weight_range, k=k, r=k + 1, solver=solver,
                seed=seed, swlr_config=swlr_config, rpca_config=rpca_config,
            )
            rows.append((Solver(solver).value, n, rep.wall_time * 1e3))
    return rows


def growth_exponent(ns, times):
    """Slope of the least-squares line through ``(log n, log t)``."""
    slope, _ = np.polyfit(np.log(np.asarray(ns, float)), np.log(np.asarray(times, float)), 1)
    return float(slope)
