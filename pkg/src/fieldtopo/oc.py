"""Multi-batch optimality-criterion update.

Targets rho_hat = clamp(rho * B^eta, max(0, rho - m), min(1, rho + m)) with
B = max(0, -s~) / lambda, where lambda is bisected (on log lambda) until the
pooled Monte Carlo volume estimate over all batches hits the target volume.
dV/drho is the constant 1 per unit volume; any global scale cancels into
lambda.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class OcParams:
    move_limit: float = 0.2
    damping: float = 0.5
    lambda_lo: float = 1e-12
    lambda_hi: float = 1e12
    volume_tol: float = 1e-4
    max_bisection_steps: int = 80

    def __post_init__(self):
        if not (0.0 < self.move_limit <= 1.0) or not (0.0 < self.damping <= 1.0):
            raise ValueError(f"bad OC parameters {self}")


def volume_estimate(rho_columns) -> float:
    """Pooled arithmetic mean over all samples of all batches."""
    pooled = np.concatenate([np.asarray(r).ravel() for r in rho_columns])
    if pooled.size == 0:
        raise ValueError("no samples to estimate volume from")
    return float(pooled.mean())


def _targets(rho, s_filtered, lam, params: OcParams, frozen_mask):
    b = np.maximum(0.0, -s_filtered) / lam
    raw = rho * b**params.damping
    lo = np.maximum(0.0, rho - params.move_limit)
    hi = np.minimum(1.0, rho + params.move_limit)
    out = np.clip(raw, lo, hi)
    if frozen_mask is not None:
        out = np.where(frozen_mask, rho, out)
    return out


def oc_targets(rho, s_filtered, target_volume: float, params: OcParams = OcParams(),
               frozen_mask=None):
    """Pooled OC update across batches.

    rho, s_filtered: arrays or lists of per-batch arrays (pooled internally).
    frozen_mask marks samples excluded from the update (hole constraints);
    they keep their density value but stay in the volume accounting.

    Returns (rho_hat pooled array, lambda*).
    """
    rho = np.concatenate([np.asarray(r).ravel() for r in rho]) \
        if isinstance(rho, (list, tuple)) else np.asarray(rho).ravel()
    s_filtered = np.concatenate([np.asarray(s).ravel() for s in s_filtered]) \
        if isinstance(s_filtered, (list, tuple)) else np.asarray(s_filtered).ravel()
    if frozen_mask is not None:
        frozen_mask = np.concatenate([np.asarray(m).ravel() for m in frozen_mask]) \
            if isinstance(frozen_mask, (list, tuple)) else np.asarray(frozen_mask).ravel()
    if not 0.0 < target_volume < 1.0:
        raise ValueError(f"target volume must be in (0, 1), got {target_volume}")
    if not np.all(np.isfinite(s_filtered)):
        raise ValueError("non-finite filtered sensitivities")

    movable = ~frozen_mask if frozen_mask is not None else np.ones(rho.size, dtype=bool)
    if not np.any(np.abs(s_filtered[movable]) > 0.0):
        # degenerate: no signal; scale uniformly toward the target volume
        # within move limits
        current = rho.mean()
        shift = np.clip(target_volume - current, -params.move_limit, params.move_limit)
        out = np.clip(rho + shift, 0.0, 1.0)
        if frozen_mask is not None:
            out = np.where(frozen_mask, rho, out)
        return out, float("nan")

    lo, hi = params.lambda_lo, params.lambda_hi
    # volume is monotone non-increasing in lambda
    for attempt in range(2):
        v_lo = _targets(rho, s_filtered, lo, params, frozen_mask).mean()
        v_hi = _targets(rho, s_filtered, hi, params, frozen_mask).mean()
        if v_lo >= target_volume >= v_hi:
            break
        lo, hi = lo * 1e-6, hi * 1e6
    else:
        raise RuntimeError(
            f"OC bracket cannot reach V={target_volume}: volume range [{v_hi}, {v_lo}]"
        )

    lam = np.sqrt(lo * hi)
    for _ in range(params.max_bisection_steps):
        lam = np.sqrt(lo * hi)  # bisection on log lambda
        v = _targets(rho, s_filtered, lam, params, frozen_mask).mean()
        if abs(v - target_volume) <= params.volume_tol:
            break
        if v > target_volume:
            lo = lam
        else:
            hi = lam
    else:
        v = _targets(rho, s_filtered, lam, params, frozen_mask).mean()
        if abs(v - target_volume) > params.volume_tol:
            raise RuntimeError(f"OC bisection did not converge: volume {v} vs {target_volume}")
    return _targets(rho, s_filtered, lam, params, frozen_mask), float(lam)
