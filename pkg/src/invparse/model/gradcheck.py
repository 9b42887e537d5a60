"""Finite-difference check of the training objective's gradients."""

from __future__ import annotations

import dataclasses
import math
import random
from dataclasses import dataclass

import torch

from ..dataset import Sample
from ..inventory import Inventory
from .core import ModelConfig, collect_words, encode_pairs, init_model, loss

# Denominator floor for the relative error. Central differences at eps=1e-5
# in float64 carry ~1e-10 absolute roundoff (about 9e-11 observed on
# structurally zero gradients such as attention key biases), so entries
# below the floor are effectively compared in absolute terms.
ABS_FLOOR = 1e-5


class GradCheckRefused(ValueError):
    """The objective is not a deterministic function of the parameters."""


@dataclass(frozen=True)
class GradCheckResult:
    max_relative_error: float
    n_checked: int
    valid: bool
    worst: tuple[str, tuple[int, ...], float, float] | None = None  # name, index, analytic, numeric

    def passed(self, tol: float = 1e-4) -> bool:
        return self.valid and self.max_relative_error < tol


def relative_error(analytic: float, numeric: float, floor: float = ABS_FLOOR) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def grad_check(model_config: ModelConfig, sample: Sample, inventory: Inventory | None = None,
               epsilon: float = 1e-5, n_params: int = 200, seed: int = 0) -> GradCheckResult:
    """Compare autograd against central differences on ``n_params`` entries.

    Entries are drawn by picking a parameter tensor uniformly, then an
    element uniformly, so small tensors (biases, norms) are well covered.
    The model is built in float64 from ``model_config``; dropout must be 0.
    """
    if model_config.dropout > 0:
        raise GradCheckRefused("dropout makes the loss stochastic; set dropout=0")
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    config = dataclasses.replace(model_config, dtype="float64")
    inventories = {sample.domain: inventory} if inventory is not None else {}
    model = init_model(config, collect_words([sample], inventories.values()),
                       inventory.labels if inventory is not None else ())
    net = model.network
    net.eval()
    batch = encode_pairs([sample], inventories, model)

    net.zero_grad()
    loss(model, batch).backward()
    named = [(n, p) for n, p in net.named_parameters() if p.numel()]
    if n_params <= 0 or not named:
        return GradCheckResult(0.0, 0, False)

    rng = random.Random(seed)
    worst, max_err = None, 0.0
    with torch.no_grad():
        for _ in range(n_params):
            name, p = named[rng.randrange(len(named))]
            flat = rng.randrange(p.numel())
            index = tuple(int(i) for i in torch.unravel_index(torch.tensor(flat), p.shape))
            analytic = p.grad[index].item()
            original = p[index].item()
            p[index] = original + epsilon
            plus = loss(model, batch).item()
            p[index] = original - epsilon
            minus = loss(model, batch).item()
            p[index] = original
            numeric = (plus - minus) / (2 * epsilon)
            err = relative_error(analytic, numeric)
            if not math.isfinite(err):
                err = math.inf
            if worst is None or err > max_err:
                max_err, worst = err, (name, index, analytic, numeric)
    return GradCheckResult(max_err, n_params, True, worst)
