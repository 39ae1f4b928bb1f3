"""Byzantine client behaviors.

All attacks are omniscient: crafted updates may depend on the current
round's honest sampled updates. Crafting is a pure, deterministic function
of its inputs.
"""

from __future__ import annotations

from statistics import NormalDist
from typing import Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

__all__ = ["AttackSpec", "craft_byzantine_updates", "alie_default_scale"]

ATTACK_KINDS = ("sign_flipping", "foe", "alie", "mimic", "takeover_zero")

_DEFAULT_SCALE = {"sign_flipping": 1.0, "foe": 3.0}


class AttackSpec(BaseModel):
    """One attack kind per run, with an optional scale parameter
    (lambda for sign flipping, epsilon for fall-of-empires, z for
    a-little-is-enough) and an optional mimic target index into the
    round's honest sampled updates."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: str = "sign_flipping"
    scale: Optional[float] = None
    target: Optional[int] = None

    @model_validator(mode="after")
    def _check(self) -> "AttackSpec":
        if self.kind not in ATTACK_KINDS:
            raise ValueError(f"unknown attack kind {self.kind!r}")
        if self.scale is not None and not np.isfinite(self.scale):
            raise ValueError("attack scale must be finite")
        return self


def alie_default_scale(n_hat: int, b_hat: int) -> float:
    """Percentile heuristic for the a-little-is-enough shift: push the
    crafted updates as far as possible while staying inside the range the
    trimming-style defenses keep."""
    good = n_hat - b_hat
    s = n_hat // 2 + 1 - b_hat
    if good <= 0 or s <= 0:
        return 0.0
    q = (good - s) / good
    if q <= 0.0:
        return 0.0
    return max(0.0, NormalDist().inv_cdf(q))


def craft_byzantine_updates(
    honest_updates: Sequence[np.ndarray] | np.ndarray,
    byz_count: int,
    spec: AttackSpec,
    round_index: int = 0,
) -> np.ndarray:
    """Produce the byz_count update vectors injected this round.

    round_index is part of the interface for attack variants that depend on
    time; the shipped attacks do not.
    """
    if byz_count < 0:
        raise ValueError("byz_count must be >= 0")
    honest = np.asarray(honest_updates, dtype=float)
    if honest.ndim == 1:
        honest = honest[:, None]
    if honest.shape[0] == 0:
        if spec.kind == "takeover_zero":
            raise ValueError("takeover_zero needs the update dimension from honest updates")
        raise ValueError(f"attack {spec.kind!r} needs at least one honest update")
    d = honest.shape[1]
    if byz_count == 0:
        return np.empty((0, d))

    if spec.kind == "takeover_zero":
        # Placeholder updates; the takeover itself is applied by the server
        # loop when the tolerated count is exceeded.
        return np.zeros((byz_count, d))

    mean = honest[0] + (honest - honest[0]).mean(axis=0)
    if spec.kind == "sign_flipping":
        lam = _DEFAULT_SCALE["sign_flipping"] if spec.scale is None else spec.scale
        vec = -lam * mean
    elif spec.kind == "foe":
        eps = _DEFAULT_SCALE["foe"] if spec.scale is None else spec.scale
        vec = -eps * mean
    elif spec.kind == "alie":
        if spec.scale is None:
            z = alie_default_scale(honest.shape[0] + byz_count, byz_count)
        else:
            z = spec.scale
        std = honest.std(axis=0)
        vec = mean + z * std
    elif spec.kind == "mimic":
        target = 0 if spec.target is None else spec.target
        if not (0 <= target < honest.shape[0]):
            raise ValueError("mimic target outside the honest sampled range")
        vec = honest[target]
    else:  # pragma: no cover - guarded by AttackSpec validation
        raise ValueError(f"unknown attack kind {spec.kind!r}")
    return np.tile(vec, (byz_count, 1))
