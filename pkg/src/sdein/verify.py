"""Finite-difference verification of the full training loss."""
from __future__ import annotations

import contextlib
import time
from dataclasses import dataclass, replace

import numpy as np

from . import numerics as nx
from .model import ModelConfig, ModelState, forward
from .inference import prepare
from .synthetic import bundled
from .training import build_state, joint_loss

GRADCHECK_TOLERANCE = 1e-4


def gradcheck_config(**overrides) -> ModelConfig:
    """Default architecture at widths small enough to difference every coordinate."""
    base = dict(hidden_size=6, relation_size=3, general_dim=5, domain_dim=3, cnn_windows=(3, 5),
                gcn_layers=2, embedding_dropout=0.0, shared_dropout=0.0)
    base.update(overrides)
    base["precision"] = "verification"
    return ModelConfig(**base)


def jitter(state: ModelState, rng: np.random.Generator, scale: float = 0.1) -> None:
    """Move zero-initialised vectors off the ReLU kinks they start on."""
    for name, p in state.params.items():
        if p.data.ndim == 1:
            p.data += rng.uniform(-scale, scale, size=p.shape)


def loss_closure(state: ModelState, records):
    prepared = [prepare(state, r) for r in records]

    def closure():
        traces = [forward(state, enc, g) for enc, g in prepared]
        return joint_loss(traces, [enc for enc, _ in prepared]).total

    return closure


@dataclass
class GradcheckReport:
    errors: dict
    seconds: float
    tolerance: float = GRADCHECK_TOLERANCE

    @property
    def max_error(self) -> float:
        return max(self.errors.values())

    @property
    def passed(self) -> bool:
        return self.max_error < self.tolerance

    def lines(self) -> list[str]:
        out = [f"{name:<16} {err:.3e}" for name, err in sorted(self.errors.items())]
        verdict = "PASS" if self.passed else "FAIL"
        out.append(f"max relative error {self.max_error:.3e} (tolerance {self.tolerance:g}) "
                   f"in {self.seconds:.1f}s: {verdict}")
        return out


def run_gradcheck(config: ModelConfig | None = None, records=None, seed: int = 7) -> GradcheckReport:
    config = gradcheck_config() if config is None else replace(config, precision="verification",
                                                               embedding_dropout=0.0, shared_dropout=0.0)
    records = bundled("gradcheck2.jsonl") if records is None else records
    start = time.perf_counter()
    state = build_state(records, config, seed)
    jitter(state, np.random.default_rng(seed))
    errors = nx.grad_check(loss_closure(state, records), state.params, per_tensor=True)
    return GradcheckReport(errors, time.perf_counter() - start)


@contextlib.contextmanager
def corrupted_backward(factor: float = 1.5):
    """Test hook: ReLU passes a scaled gradient, so the check must fail."""
    original = nx.relu

    def bad_relu(a):
        out = original(a)
        if out._backward is not None:
            inner = out._backward
            out._backward = lambda g: [(t, pg * factor) for t, pg in inner(g)]
        return out

    nx.relu = bad_relu
    try:
        yield
    finally:
        nx.relu = original
