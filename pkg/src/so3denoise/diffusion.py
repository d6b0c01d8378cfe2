"""Desk-scale diffusion machinery: noising, matching losses, MLP training, DDIM.

The denoiser is a 2-layer tanh MLP on flattened coordinates with a
log-noise feature, trained by matching one of the estimator targets.
Gradients are computed by manual reverse-mode differentiation (targets
are constants; there is no gradient through the alignment/SVD).  A run
that produces non-finite losses or parameters terminates with a
``diverged`` status instead of crashing.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Callable, NamedTuple

import numpy as np

from .align import aligned_rmsd, rmsd
from .estimators import EstimatorKind, estimator_target
from .fisher import ExpansionSingularError
from .geom import center, rotate, sample_haar
from .quadrature import NoConvergenceError

_PARAM_FIELDS = ("w1", "b1", "w2", "b2")


@dataclass
class MlpDenoiser:
    """2-layer tanh MLP acting on flattened point coordinates.

    Input features: coordinates scaled by the dataset reference scale
    ``s_ref``, then log(sigma), then a constant 1.  The output is
    reshaped to (N, 3) and re-centered.
    """

    w1: np.ndarray  # (hidden, 3n + 2)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (3n, hidden)
    b2: np.ndarray  # (3n,)
    hidden: int
    n_points: int
    s_ref: float

    @classmethod
    def initialize(
        cls, n_points: int, hidden: int, s_ref: float, rng: np.random.Generator
    ) -> "MlpDenoiser":
        d_in = 3 * n_points + 2
        d_out = 3 * n_points
        return cls(
            w1=rng.standard_normal((hidden, d_in)) / np.sqrt(d_in),
            b1=np.zeros(hidden),
            w2=rng.standard_normal((d_out, hidden)) / np.sqrt(hidden),
            b2=np.zeros(d_out),
            hidden=hidden,
            n_points=n_points,
            s_ref=float(s_ref),
        )

    def params(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in _PARAM_FIELDS}


class StepMetrics(NamedTuple):
    step: int
    loss: float
    rmsd: float
    aligned_rmsd: float
    n_excluded: int


@dataclass(frozen=True)
class TrainConfig:
    sigma: float
    estimator: EstimatorKind
    steps: int
    batch: int = 32
    lr: float = 1e-3
    seed: int = 0
    dataset_mode: str = "all-frames"  # or "single-frame"
    hidden: int = 64

    def __post_init__(self):
        if self.sigma <= 0 or self.lr <= 0 or self.batch < 1 or self.hidden < 1:
            raise ValueError("sigma, lr, batch and hidden must be positive")
        if self.steps < 0:
            raise ValueError("steps must be non-negative")
        if self.dataset_mode not in ("all-frames", "single-frame"):
            raise ValueError(f"unknown dataset_mode {self.dataset_mode!r}")
        object.__setattr__(self, "estimator", EstimatorKind(self.estimator))


@dataclass
class TrainResult:
    model: MlpDenoiser
    metrics: list[StepMetrics]
    status: str  # "completed" | "diverged"
    diverged_at: int | None = None


@dataclass(frozen=True)
class DdimSchedule:
    """Strictly descending noise levels ending at exactly zero."""

    sigmas: tuple[float, ...]

    def __post_init__(self):
        sig = tuple(float(s) for s in self.sigmas)
        if len(sig) < 2 or sig[0] <= 0 or sig[-1] != 0.0:
            raise ValueError("schedule needs sigma_M > ... > sigma_0 = 0")
        if any(a <= b for a, b in zip(sig, sig[1:])):
            raise ValueError("schedule must be strictly descending")
        object.__setattr__(self, "sigmas", sig)


def noise_sample(
    x: np.ndarray, sigma: float, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Rotate by a Haar draw, add isotropic noise, re-center.

    Returns (y, r_aug).  Re-centering is required because the noise
    breaks the zero-centroid constraint the posterior formulas assume.
    """
    if sigma < 0:
        raise ValueError(f"sigma must be non-negative, got {sigma}")
    r_aug = sample_haar(rng)
    z = rotate(r_aug, np.asarray(x, dtype=float))
    if sigma == 0:
        return z, r_aug
    return center(z + sigma * rng.standard_normal(z.shape)), r_aug


def _features(m: MlpDenoiser, ys: np.ndarray, sigma: float) -> np.ndarray:
    b = ys.shape[0]
    feats = np.empty((b, 3 * m.n_points + 2))
    feats[:, : 3 * m.n_points] = ys.reshape(b, -1) / m.s_ref
    feats[:, -2] = np.log(sigma)
    feats[:, -1] = 1.0
    return feats


def _forward_batch(m: MlpDenoiser, ys: np.ndarray, sigma: float):
    feats = _features(m, ys, sigma)
    hidden = np.tanh(feats @ m.w1.T + m.b1)
    flat = hidden @ m.w2.T + m.b2
    out = flat.reshape(ys.shape[0], m.n_points, 3)
    out = out - out.mean(axis=1, keepdims=True)
    return out, (feats, hidden)


def mlp_forward(m: MlpDenoiser, y: np.ndarray, sigma: float) -> np.ndarray:
    """Denoised prediction for a single cloud at noise level sigma."""
    y = np.asarray(y, dtype=float)
    if y.shape != (m.n_points, 3):
        raise ValueError(f"expected shape {(m.n_points, 3)}, got {y.shape}")
    out, _ = _forward_batch(m, y[None], sigma)
    return out[0]


class LossAndGrad(NamedTuple):
    loss: float
    grads: dict[str, np.ndarray]
    n_excluded: int


def _batch_targets(batch, sigma: float, estimator: EstimatorKind, tol: float):
    """Estimator targets for a batch; failed samples are dropped and counted."""
    kept, targets = [], []
    for y, x, r_aug in batch:
        try:
            t = estimator_target(
                estimator, y, x, sigma,
                r_aug=r_aug if estimator is EstimatorKind.AUG else None, tol=tol,
            )
        except (ExpansionSingularError, NoConvergenceError):
            continue
        kept.append(y)
        targets.append(t)
    return kept, targets, len(batch) - len(kept)


def loss_and_grad(
    m: MlpDenoiser,
    batch: list[tuple[np.ndarray, np.ndarray, np.ndarray]],
    sigma: float,
    estimator: EstimatorKind,
    tol: float = 1e-8,
) -> LossAndGrad:
    """Mean matching loss over a batch and its parameter gradients.

    ``batch`` holds (y, x, r_aug) triples.  Targets are constants in the
    backward pass.  Samples whose target cannot be computed are excluded
    and counted; an entirely excluded batch raises ``ValueError``.
    """
    if not batch:
        raise ValueError("batch must be nonempty")
    kept, targets, n_excluded = _batch_targets(batch, sigma, estimator, tol)
    if not kept:
        raise ValueError("every sample in the batch was excluded")
    ys = np.stack(kept)
    ts = np.stack(targets)
    b = ys.shape[0]

    out, (feats, hidden) = _forward_batch(m, ys, sigma)
    diff = out - ts
    loss = float(np.sum(diff * diff) / b)

    g_out = 2.0 * diff / b
    g_out = g_out - g_out.mean(axis=1, keepdims=True)  # through re-centering
    g_flat = g_out.reshape(b, -1)
    g_hidden = g_flat @ m.w2
    g_pre = g_hidden * (1.0 - hidden * hidden)
    grads = {
        "w2": g_flat.T @ hidden,
        "b2": g_flat.sum(axis=0),
        "w1": g_pre.T @ feats,
        "b1": g_pre.sum(axis=0),
    }
    return LossAndGrad(loss, grads, n_excluded)


def _probe_metrics(m: MlpDenoiser, probe, sigma: float) -> tuple[float, float]:
    vals_rmsd, vals_aligned = [], []
    for y, x, r_aug in probe:
        pred = mlp_forward(m, y, sigma)
        vals_rmsd.append(rmsd(pred, rotate(r_aug, x)))
        vals_aligned.append(aligned_rmsd(pred, x))
    return float(np.mean(vals_rmsd)), float(np.mean(vals_aligned))


def _probe_loss(m: MlpDenoiser, kept_ys, targets, sigma: float) -> float:
    if not targets:
        return float("nan")
    preds = np.stack([mlp_forward(m, y, sigma) for y in kept_ys])
    ts = np.stack(targets)
    return float(np.sum((preds - ts) ** 2) / len(targets))


def train(
    cfg: TrainConfig,
    dataset: np.ndarray,
    probe_size: int = 16,
    tol: float = 1e-8,
) -> TrainResult:
    """Adam-train an MLP denoiser against the configured estimator target.

    Metrics are recorded per step on a fixed probe batch drawn before
    training: RMSD of the prediction to the rotated ground truth, and
    aligned RMSD to the clean frame.  Row 0 reports the pre-training
    state (its loss is evaluated on the probe batch).  Fully
    deterministic given the config seed.  Non-finite losses or
    parameters stop the run with status ``"diverged"``.
    """
    frames = np.asarray(dataset, dtype=float)
    if frames.ndim != 3 or frames.shape[0] < 1 or frames.shape[2] != 3:
        raise ValueError("dataset must be a nonempty (frames, N, 3) array")
    n_points = frames.shape[1]
    s_ref = float(np.sqrt(np.mean(np.sum(frames[0] ** 2, axis=1))))

    rng = np.random.default_rng(cfg.seed)
    model = MlpDenoiser.initialize(n_points, cfg.hidden, s_ref, rng)

    def draw_batch(size: int):
        items = []
        for _ in range(size):
            x = frames[0] if cfg.dataset_mode == "single-frame" else frames[rng.integers(len(frames))]
            y, r_aug = noise_sample(x, cfg.sigma, rng)
            items.append((y, x, r_aug))
        return items

    probe = draw_batch(probe_size)
    probe_kept, probe_targets, _ = _batch_targets(probe, cfg.sigma, cfg.estimator, tol)

    metrics = []
    r0, a0 = _probe_metrics(model, probe, cfg.sigma)
    metrics.append(
        StepMetrics(0, _probe_loss(model, probe_kept, probe_targets, cfg.sigma), r0, a0, 0)
    )

    beta1, beta2, eps = 0.9, 0.999, 1e-8
    moment1 = {k: np.zeros_like(v) for k, v in model.params().items()}
    moment2 = {k: np.zeros_like(v) for k, v in model.params().items()}

    # overflow inside a step is the divergence signal, surfaced via the status
    with np.errstate(over="ignore", invalid="ignore"):
        for step in range(1, cfg.steps + 1):
            batch = draw_batch(cfg.batch)
            try:
                loss, grads, n_excluded = loss_and_grad(model, batch, cfg.sigma, cfg.estimator, tol)
            except ValueError:
                return TrainResult(model, metrics, "diverged", step)
            if not np.isfinite(loss):
                return TrainResult(model, metrics, "diverged", step)
            for name, g in grads.items():
                moment1[name] = beta1 * moment1[name] + (1 - beta1) * g
                moment2[name] = beta2 * moment2[name] + (1 - beta2) * g * g
                m_hat = moment1[name] / (1 - beta1**step)
                v_hat = moment2[name] / (1 - beta2**step)
                setattr(model, name, getattr(model, name) - cfg.lr * m_hat / (np.sqrt(v_hat) + eps))
            if not all(np.all(np.isfinite(p)) for p in model.params().values()):
                return TrainResult(model, metrics, "diverged", step)
            r, a = _probe_metrics(model, probe, cfg.sigma)
            metrics.append(StepMetrics(step, loss, r, a, n_excluded))
    return TrainResult(model, metrics, "completed", None)


def ddim_sample(
    denoiser: Callable[[np.ndarray, float], np.ndarray],
    schedule: DdimSchedule,
    n_points: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Deterministic denoising walk from centered Gaussian noise.

    Each update moves the current sample toward the denoiser prediction
    by the relative noise decrement: y <- y + (1 - s_lo/s_hi) (D(y, s_hi) - y).
    """
    sig = schedule.sigmas
    y = center(sig[0] * rng.standard_normal((n_points, 3)))
    for s_hi, s_lo in zip(sig, sig[1:]):
        y = y + (1.0 - s_lo / s_hi) * (denoiser(y, s_hi) - y)
    return y


METRICS_CSV_HEADER = ["step", "loss", "rmsd", "aligned_rmsd", "n_excluded"]


def write_metrics_csv(metrics: list[StepMetrics], path) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(METRICS_CSV_HEADER)
        for row in metrics:
            writer.writerow([row.step, repr(row.loss), repr(row.rmsd),
                             repr(row.aligned_rmsd), row.n_excluded])


def read_metrics_csv(path) -> list[StepMetrics]:
    import csv

    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != METRICS_CSV_HEADER:
            raise ValueError(f"unexpected metrics CSV header: {header}")
        return [
            StepMetrics(int(r[0]), float(r[1]), float(r[2]), float(r[3]), int(r[4]))
            for r in reader
        ]


def save_denoiser(model: MlpDenoiser, path, seed: int | None = None,
                  config: TrainConfig | None = None) -> None:
    """Write a checkpoint: one JSON header line, then little-endian f64 params.

    The parameter block is the raveled w1, b1, w2, b2 in that order.
    """
    header = {
        "n_points": model.n_points,
        "hidden": model.hidden,
        "s_ref": model.s_ref,
        "seed": seed,
        "config": _config_dict(config),
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8") + b"\n")
        for name in _PARAM_FIELDS:
            fh.write(np.ascontiguousarray(getattr(model, name), dtype="<f8").tobytes())


def _config_dict(config: TrainConfig | None):
    if config is None:
        return None
    d = asdict(config)
    d["estimator"] = config.estimator.value
    return d


def load_denoiser(path) -> tuple[MlpDenoiser, dict]:
    """Read a checkpoint back; returns the model and its JSON header."""
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        n, h = header["n_points"], header["hidden"]
        shapes = {"w1": (h, 3 * n + 2), "b1": (h,), "w2": (3 * n, h), "b2": (3 * n,)}
        params = {}
        for name in _PARAM_FIELDS:
            count = int(np.prod(shapes[name]))
            buf = fh.read(8 * count)
            if len(buf) != 8 * count:
                raise ValueError(f"truncated checkpoint: {path}")
            params[name] = np.frombuffer(buf, dtype="<f8").reshape(shapes[name]).copy()
    return MlpDenoiser(hidden=h, n_points=n, s_ref=float(header["s_ref"]), **params), header
