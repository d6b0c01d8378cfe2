"""Denoiser-target estimators and the noise-level error sweep.

The estimator family approximates the posterior-mean denoiser target for
a noisy rotated observation ``y`` of a clean cloud ``x``:

* ``AUG``     -- the raw augmented ground truth ``r_aug`` applied to x,
* ``ORDER0``  -- alignment: the Kabsch rotation applied to x,
* ``ORDER1``  -- alignment plus the sigma^2 moment correction,
* ``ORDER2``  -- plus the sigma^4 correction,
* ``ORACLE``  -- the quadrature posterior mean (ground truth).

``error_sweep`` measures the mean squared error of each estimator
against the oracle across noise levels, reproducibly from a seed.
"""

from __future__ import annotations

import csv
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .align import kabsch
from .fisher import ExpansionSingularError, mf_from_observation, mf_mean_laplace
from .geom import center, frobenius_norm_sq, rotate, sample_haar
from .quadrature import NoConvergenceError, _mf_expect, oracle_conditional_denoiser

SWEEP_CSV_HEADER = ["sigma", "kind", "mean_mse", "stderr", "n_samples", "n_excluded", "seed"]


class EstimatorKind(str, Enum):
    AUG = "aug"
    ORDER0 = "order0"
    ORDER1 = "order1"
    ORDER2 = "order2"
    ORACLE = "oracle"


class DegenerateAlignmentWarning(UserWarning):
    """The alignment underlying an estimator target was rank-deficient."""


@dataclass(frozen=True)
class SweepRecord:
    sigma: float
    kind: EstimatorKind
    mean_mse: float
    stderr: float
    n_samples: int
    n_excluded: int
    seed: int


def estimator_target(
    kind: EstimatorKind,
    y: np.ndarray,
    x: np.ndarray,
    sigma: float,
    r_aug: np.ndarray | None = None,
    tol: float = 1e-8,
) -> np.ndarray:
    """Regression target of the chosen estimator for the pair (y, x).

    ``r_aug`` must be supplied exactly when ``kind`` is AUG: the
    augmentation rotation is not a function of (y, x, sigma) alone.
    Order-1/2 targets raise :class:`ExpansionSingularError` on
    near-degenerate spectra; a degenerate alignment is flagged with
    :class:`DegenerateAlignmentWarning`.
    """
    kind = EstimatorKind(kind)
    if (r_aug is not None) != (kind is EstimatorKind.AUG):
        raise ValueError("r_aug must be given for AUG and only for AUG")
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)

    if kind is EstimatorKind.AUG:
        return rotate(r_aug, x)
    if kind is EstimatorKind.ORACLE:
        return oracle_conditional_denoiser(y, x, sigma, tol)
    if kind is EstimatorKind.ORDER0:
        result = kabsch(y, x)
        if result.degenerate:
            warnings.warn("alignment is degenerate; target not unique", DegenerateAlignmentWarning)
        return rotate(result.rotation, x)
    order = 1 if kind is EstimatorKind.ORDER1 else 2
    return x @ mf_mean_laplace(y.T @ x, sigma, order).T


def mse_to_oracle(
    kind: EstimatorKind,
    y: np.ndarray,
    x: np.ndarray,
    sigma: float,
    r_aug: np.ndarray | None = None,
    tol: float = 1e-8,
) -> float:
    """Squared distance of an estimator target from the oracle target."""
    oracle = estimator_target(EstimatorKind.ORACLE, y, x, sigma, tol=tol)
    if EstimatorKind(kind) is EstimatorKind.ORACLE:
        target = oracle
    else:
        target = estimator_target(kind, y, x, sigma, r_aug=r_aug, tol=tol)
    return frobenius_norm_sq(target - oracle)


_SWEEP_KINDS = (
    EstimatorKind.AUG,
    EstimatorKind.ORDER0,
    EstimatorKind.ORDER1,
    EstimatorKind.ORDER2,
)


def _worker_count() -> int:
    raw = os.environ.get("SO3_DENOISE_THREADS", "").strip()
    if not raw:
        return 1
    n = int(raw)
    if n == 0:
        return os.cpu_count() or 1
    return max(1, n)


def _sweep_sample(x, sigma, seed, sigma_idx, sample_idx, tol):
    """One sweep draw: per-kind MSE to the oracle, or None where excluded.

    The RNG stream is derived from (seed, sigma index, sample index), so
    results are independent of scheduling order.
    """
    rng = np.random.default_rng([seed, sigma_idx, sample_idx])
    r_aug = sample_haar(rng)
    eta = rng.standard_normal(x.shape)
    y = center(rotate(r_aug, x) + sigma * eta)
    out: dict[EstimatorKind, float | None] = {}
    try:
        oracle = estimator_target(EstimatorKind.ORACLE, y, x, sigma, tol=tol)
    except NoConvergenceError:
        return {kind: None for kind in _SWEEP_KINDS}
    for kind in _SWEEP_KINDS:
        try:
            target = estimator_target(
                kind, y, x, sigma, r_aug=r_aug if kind is EstimatorKind.AUG else None, tol=tol
            )
            out[kind] = frobenius_norm_sq(target - oracle)
        except ExpansionSingularError:
            out[kind] = None
    return out


def error_sweep(
    x: np.ndarray,
    sigmas: list[float],
    n_noise: int,
    seed: int,
    tol: float = 1e-6,
) -> list[SweepRecord]:
    """Mean MSE to the oracle of each estimator over noisy rotated draws.

    For every noise level, ``n_noise`` pairs (Haar rotation, Gaussian
    noise) are drawn, the observation is re-centered, and the MSE of each
    estimator target against the oracle is averaged.  Samples whose
    target computation fails are excluded from the mean and counted in
    ``n_excluded``, never silently substituted.  Deterministic given
    ``seed``; worker threads (capped by SO3_DENOISE_THREADS) do not
    change the result.
    """
    x = np.asarray(x, dtype=float)
    if n_noise < 1:
        raise ValueError(f"n_noise must be >= 1, got {n_noise}")
    sig = [float(s) for s in sigmas]
    if any(s <= 0 for s in sig) or any(a >= b for a, b in zip(sig, sig[1:])):
        raise ValueError("sigmas must be positive and strictly ascending")

    records = []
    workers = _worker_count()
    for si, sigma in enumerate(sig):
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                samples = list(
                    pool.map(lambda j: _sweep_sample(x, sigma, seed, si, j, tol), range(n_noise))
                )
        else:
            samples = [_sweep_sample(x, sigma, seed, si, j, tol) for j in range(n_noise)]
        for kind in _SWEEP_KINDS:
            vals = np.array([s[kind] for s in samples if s[kind] is not None])
            n_ok = len(vals)
            mean = float(np.mean(vals)) if n_ok else float("nan")
            stderr = float(np.std(vals, ddof=1) / np.sqrt(n_ok)) if n_ok > 1 else 0.0
            records.append(
                SweepRecord(sigma, kind, mean, stderr, n_ok, n_noise - n_ok, seed)
            )
    return records


def sweep_aug_anomalies(records: list[SweepRecord]) -> list[float]:
    """Noise levels where the raw augmented target beats alignment.

    The mode is not guaranteed to dominate the raw rotation target at
    every noise level, so sweeps flag such records instead of failing.
    """
    by_sigma: dict[float, dict[EstimatorKind, float]] = {}
    for rec in records:
        by_sigma.setdefault(rec.sigma, {})[rec.kind] = rec.mean_mse
    flagged = []
    for sigma, kinds in by_sigma.items():
        aug = kinds.get(EstimatorKind.AUG)
        order0 = kinds.get(EstimatorKind.ORDER0)
        if aug is not None and order0 is not None and aug < order0:
            flagged.append(sigma)
    return flagged


def write_sweep_csv(records: list[SweepRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SWEEP_CSV_HEADER)
        for r in records:
            writer.writerow(
                [repr(r.sigma), r.kind.value, repr(r.mean_mse), repr(r.stderr),
                 r.n_samples, r.n_excluded, r.seed]
            )


def read_sweep_csv(path) -> list[SweepRecord]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != SWEEP_CSV_HEADER:
            raise ValueError(f"unexpected sweep CSV header: {header}")
        return [
            SweepRecord(float(row[0]), EstimatorKind(row[1]), float(row[2]),
                        float(row[3]), int(row[4]), int(row[5]), int(row[6]))
            for row in reader
        ]


def averaging_offset_check(
    y: np.ndarray,
    x: np.ndarray,
    sigma: float,
    probes: list[np.ndarray],
    tol: float = 1e-8,
) -> float:
    """Numerically verify that averaging a target only shifts the loss by a constant.

    For each probe output ``d`` computes, by posterior quadrature,
    ``delta(d) = E_R[||d - R x||^2] - ||d - E_R[R] x||^2`` and returns
    the maximum spread ``|delta(d_i) - delta(d_0)|``.  The averaging
    identity predicts the spread is zero (delta is the same constant for
    every d).  All expectations share one adaptive grid so the check is
    not polluted by independent quadrature error.
    """
    if not probes:
        raise ValueError("need at least one probe")
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    ds = [np.asarray(d, dtype=float) for d in probes]
    p = mf_from_observation(y, x, sigma)

    def stats(rot: np.ndarray) -> np.ndarray:
        # per node: the 9 entries of R, then ||d_i - R x||^2 for each probe
        rx = np.einsum("nij,kj->nki", rot, x)  # (B, N, 3)
        cols = [rot.reshape(-1, 9)]
        for d in ds:
            diff = d[None, :, :] - rx
            cols.append(np.sum(diff * diff, axis=(1, 2))[:, None])
        return np.concatenate(cols, axis=1)

    flat = _mf_expect(p, stats, 9 + len(ds), tol)
    mean_rot = flat[:9].reshape(3, 3)
    deltas = [
        flat[9 + i] - frobenius_norm_sq(d - x @ mean_rot.T) for i, d in enumerate(ds)
    ]
    return float(max(abs(dl - deltas[0]) for dl in deltas))
