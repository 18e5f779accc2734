"""Run-level configuration with the experiment defaults."""
from __future__ import annotations

from dataclasses import dataclass, field, fields

from .embedder import TrainConfig
from .numeric import check_p


@dataclass
class RunConfig:
    seed: int = 0
    p_norm: float = 2.0
    margin: float = 1.0
    learning_rate: float = 1e-4
    epochs: int = 30
    batch_size: int = 32
    mining: str = "batch_hard"
    hidden: tuple[int, ...] = (32,)
    embed_dim: int = 16
    n_shots: int = 5
    k: int = 5
    vote_k: int | None = None
    bins: int = 50
    threshold_override: float | None = None

    def __post_init__(self):
        check_p(self.p_norm)
        if self.n_shots < 1 or self.k < 1 or self.bins < 1:
            raise ValueError("n_shots, k and bins must all be >= 1")
        if self.vote_k is not None and self.vote_k < 1:
            raise ValueError("vote_k must be >= 1")
        self.hidden = tuple(int(h) for h in self.hidden)

    def train_config(self) -> TrainConfig:
        return TrainConfig(margin=self.margin, learning_rate=self.learning_rate, epochs=self.epochs,
                           batch_size=self.batch_size, p_norm=self.p_norm, mining=self.mining,
                           seed=self.seed)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}
