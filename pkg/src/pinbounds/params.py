"""Parameters of the quenched pinning/copolymer model."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DomainError


@dataclass(frozen=True)
class ModelParams:
    """``beta >= 0`` (pinning disorder), ``h`` (reward), ``lam >= 0`` and ``h_tilde >= 0`` (copolymer)."""

    beta: float = 0.0
    h: float = 0.0
    lam: float = 0.0
    h_tilde: float = 0.0

    def __post_init__(self):
        for name in ("beta", "h", "lam", "h_tilde"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise DomainError(f"{name} must be finite, got {v}")
        if self.beta < 0 or self.lam < 0 or self.h_tilde < 0:
            raise DomainError(f"beta, lam and h_tilde must be >= 0: {self}")

    @property
    def pinning_only(self):
        return self.lam == 0.0
