"""Elementwise losses in the separable form f1(a) + f2(b) - h1(a) h2(b)."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

KL_COST_FLOOR = 1e-12


def xlogy(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """x * log(y) with the convention that x == 0 yields 0."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = x * np.log(y)
    return np.where(x == 0.0, 0.0, out)


def _clamp_kl_rhs(b: np.ndarray) -> np.ndarray:
    b = np.asarray(b, dtype=float)
    if np.any(b < KL_COST_FLOOR):
        warnings.warn(
            "KL loss needs strictly positive cost entries; clamping below 1e-12",
            RuntimeWarning,
            stacklevel=3,
        )
        b = np.maximum(b, KL_COST_FLOOR)
    return b


@dataclass(frozen=True)
class LossSpec:
    """Separable elementwise loss L(a, b) = f1(a) + f2(b) - h1(a) h2(b).

    The four factor maps must reproduce ``elementwise`` to within 1e-10
    everywhere on the cost range; that identity is what lets the loss
    matrix collapse to three matrix products.
    """

    kind: str
    f1: Callable[[np.ndarray], np.ndarray]
    f2: Callable[[np.ndarray], np.ndarray]
    h1: Callable[[np.ndarray], np.ndarray]
    h2: Callable[[np.ndarray], np.ndarray]
    elementwise: Callable[[np.ndarray, np.ndarray], np.ndarray]


def mse_loss() -> LossSpec:
    """Squared difference, factored as a^2 + b^2 - a * 2b."""
    return LossSpec(
        kind="mse",
        f1=lambda a: np.asarray(a, float) ** 2,
        f2=lambda b: np.asarray(b, float) ** 2,
        h1=lambda a: np.asarray(a, float),
        h2=lambda b: 2.0 * np.asarray(b, float),
        elementwise=lambda a, b: (np.asarray(a, float) - np.asarray(b, float)) ** 2,
    )


def kl_loss() -> LossSpec:
    """KL divergence a log(a/b) - a + b; the b side is clamped at 1e-12."""

    def f1(a):
        a = np.asarray(a, float)
        return xlogy(a, a) - a

    def elementwise(a, b):
        a = np.asarray(a, float)
        b = _clamp_kl_rhs(b)
        return xlogy(a, a) - xlogy(a, b) - a + b

    return LossSpec(
        kind="kl",
        f1=f1,
        f2=lambda b: np.asarray(b, float),
        h1=lambda a: np.asarray(a, float),
        h2=lambda b: np.log(_clamp_kl_rhs(b)),
        elementwise=elementwise,
    )


_LOSSES = {"mse": mse_loss, "kl": kl_loss}


def get_loss(loss: str | LossSpec) -> LossSpec:
    """Resolve a loss name ("mse" or "kl") or pass a LossSpec through."""
    if isinstance(loss, LossSpec):
        return loss
    try:
        return _LOSSES[loss.lower()]()
    except (KeyError, AttributeError):
        raise ValueError(f"unknown loss {loss!r}; expected 'mse' or 'kl'") from None


def loss_gradient_lhs(loss: LossSpec, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Derivative of L(a, b) with respect to its first argument."""
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    if loss.kind == "mse":
        return 2.0 * (a - b)
    if loss.kind == "kl":
        return np.log(np.maximum(a, 1e-15)) - np.log(np.maximum(b, KL_COST_FLOOR))
    raise ValueError(f"no analytic gradient for loss kind {loss.kind!r}")
