"""Node embeddings: kernel distance matrices, the transport-guided
embedding objective, its analytic gradient, and a minibatch optimizer."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DivergedError, ShapeMismatchError, ZeroVectorError
from .losses import LossSpec, get_loss, loss_gradient_lhs

NORM_FLOOR = 1e-12
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
DIVERGENCE_FACTOR = 10.0


@dataclass(frozen=True)
class KernelSpec:
    """Embedding distance kernel: cosine or RBF, both mapping into [0, 1)."""

    kind: str
    sigma: float

    def __post_init__(self) -> None:
        if self.kind not in ("cosine", "rbf"):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if not (self.sigma > 0):
            raise ValueError("kernel sigma must be positive")

    @staticmethod
    def cosine(sigma: float = 10.0) -> "KernelSpec":
        return KernelSpec("cosine", sigma)

    @staticmethod
    def rbf(sigma: float) -> "KernelSpec":
        return KernelSpec("rbf", sigma)


@dataclass(frozen=True)
class EmbedOptConfig:
    """Optimizer settings for embedding updates (adaptive-moment descent)."""

    learning_rate: float = 0.001
    epochs: int = 5
    batch_size: int = 100
    beta: float = 10.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.learning_rate <= 0 or self.epochs < 1 or self.batch_size < 1:
            raise ValueError("learning_rate, epochs, and batch_size must be positive")
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")


@dataclass(frozen=True)
class EmbeddingUpdate:
    source: np.ndarray
    target: np.ndarray
    objective_before: float
    objective_after: float


def init_embeddings(dim: int, n_nodes: int, rng: np.random.Generator) -> np.ndarray:
    """Random init on [-1/sqrt(D), 1/sqrt(D)], keeping kernel arguments tame."""
    bound = 1.0 / math.sqrt(dim)
    return rng.uniform(-bound, bound, size=(dim, n_nodes))


def _column_norms(x: np.ndarray, what: str) -> np.ndarray:
    norms = np.linalg.norm(x, axis=0)
    if norms.min() < NORM_FLOOR:
        raise ZeroVectorError(f"cosine distance undefined for all-zero column in {what}")
    return norms


def kernel_matrix(emb_a: np.ndarray, emb_b: np.ndarray, spec: KernelSpec) -> np.ndarray:
    """Pairwise embedding distances, entries in [0, 1).

    Cosine: 1 - exp(-sigma * (1 - cos(x, y))). RBF: 1 - exp(-|x - y|^2 / sigma^2).
    Passing the same array for both sides yields an exactly symmetric
    matrix with a zero diagonal.
    """
    same = emb_a is emb_b
    a = np.asarray(emb_a, float)
    b = np.asarray(emb_b, float)
    if a.ndim != 2 or b.ndim != 2 or a.shape[0] != b.shape[0]:
        raise ShapeMismatchError(
            f"embeddings must share their dimension, got {a.shape} and {b.shape}"
        )
    if spec.kind == "cosine":
        norms_a = _column_norms(a, "first argument")
        norms_b = norms_a if same else _column_norms(b, "second argument")
        cos = np.clip((a / norms_a).T @ (b / norms_b), -1.0, 1.0)
        k = 1.0 - np.exp(-spec.sigma * (1.0 - cos))
    else:
        sq = (
            (a * a).sum(axis=0)[:, None]
            + (b * b).sum(axis=0)[None, :]
            - 2.0 * (a.T @ b)
        )
        np.maximum(sq, 0.0, out=sq)
        k = 1.0 - np.exp(-sq / (spec.sigma**2))
    if same:
        k = 0.5 * (k + k.T)
        np.fill_diagonal(k, 0.0)
    return k


def mixed_distance_matrix(
    cost_data: np.ndarray,
    embeddings: np.ndarray,
    spec: KernelSpec,
    alpha: float,
) -> np.ndarray:
    """Convex combination (1 - alpha) * data distance + alpha * kernel distance."""
    cost_data = np.asarray(cost_data, float)
    n = cost_data.shape[0]
    if cost_data.shape != (n, n):
        raise ShapeMismatchError("cost_data must be square")
    if np.asarray(embeddings).shape[1] != n:
        raise ShapeMismatchError("embedding column count must match cost_data size")
    if alpha == 0.0:
        return cost_data.copy()
    return (1.0 - alpha) * cost_data + alpha * kernel_matrix(embeddings, embeddings, spec)


def _check_embedding_shapes(emb_source, emb_target, coupling, cost_source, cost_target, cross_cost):
    ns = emb_source.shape[1]
    nt = emb_target.shape[1]
    if emb_source.shape[0] != emb_target.shape[0]:
        raise ShapeMismatchError("source and target embeddings must share their dimension")
    if coupling.shape != (ns, nt):
        raise ShapeMismatchError(f"coupling must have shape ({ns}, {nt})")
    if cost_source.shape != (ns, ns) or cost_target.shape != (nt, nt):
        raise ShapeMismatchError("cost matrix shapes do not match the embeddings")
    if cross_cost is not None and cross_cost.shape != (ns, nt):
        raise ShapeMismatchError(f"cross_cost must have shape ({ns}, {nt})")


def embedding_objective(
    emb_source: np.ndarray,
    emb_target: np.ndarray,
    coupling: np.ndarray,
    cost_source: np.ndarray,
    cost_target: np.ndarray,
    cross_cost: np.ndarray | None,
    alpha: float,
    beta: float,
    kernel: KernelSpec,
    loss: str | LossSpec = "mse",
) -> float:
    """Transport-guided embedding objective.

    ``alpha * <K(Xs, Xt), T>`` pulls embeddings of strongly coupled nodes
    together, while ``beta`` times the mean elementwise loss between each
    within-graph kernel matrix and its data distance matrix (plus the
    cross-graph term when observed cross costs exist) anchors the
    embeddings to the observed structure.
    """
    loss = get_loss(loss)
    xs = np.asarray(emb_source, float)
    xt = np.asarray(emb_target, float)
    t = np.asarray(coupling, float)
    cs = np.asarray(cost_source, float)
    ct = np.asarray(cost_target, float)
    cst = None if cross_cost is None else np.asarray(cross_cost, float)
    _check_embedding_shapes(xs, xt, t, cs, ct, cst)

    k_cross = kernel_matrix(emb_source, emb_target, kernel)
    total = alpha * float(np.sum(k_cross * t))
    if beta != 0.0:
        k_ss = kernel_matrix(emb_source, emb_source, kernel)
        k_tt = kernel_matrix(emb_target, emb_target, kernel)
        total += beta * float(np.mean(loss.elementwise(k_ss, cs)))
        total += beta * float(np.mean(loss.elementwise(k_tt, ct)))
        if cst is not None:
            total += beta * float(np.mean(loss.elementwise(k_cross, cst)))
    return total


def _kernel_backward(
    emb_a: np.ndarray,
    emb_b: np.ndarray,
    weights: np.ndarray,
    spec: KernelSpec,
) -> tuple[np.ndarray, np.ndarray]:
    """Backpropagate d(sum W * K)/d(embeddings) through the kernel."""
    same = emb_a is emb_b
    a = np.asarray(emb_a, float)
    b = np.asarray(emb_b, float)
    if spec.kind == "cosine":
        norms_a = _column_norms(a, "first argument")
        norms_b = norms_a if same else _column_norms(b, "second argument")
        unit_a = a / norms_a
        unit_b = b / norms_b
        cos = np.clip(unit_a.T @ unit_b, -1.0, 1.0)
        # dK/dcos = -sigma * exp(-sigma * (1 - cos))
        p = weights * (-spec.sigma * np.exp(-spec.sigma * (1.0 - cos)))
        pu = p * cos
        grad_a = (unit_b @ p.T - unit_a * pu.sum(axis=1)[None, :]) / norms_a[None, :]
        grad_b = (unit_a @ p - unit_b * pu.sum(axis=0)[None, :]) / norms_b[None, :]
    else:
        sq = (
            (a * a).sum(axis=0)[:, None]
            + (b * b).sum(axis=0)[None, :]
            - 2.0 * (a.T @ b)
        )
        np.maximum(sq, 0.0, out=sq)
        m = weights * np.exp(-sq / (spec.sigma**2)) * (2.0 / spec.sigma**2)
        grad_a = a * m.sum(axis=1)[None, :] - b @ m.T
        grad_b = b * m.sum(axis=0)[None, :] - a @ m
    return grad_a, grad_b


def embedding_gradient(
    emb_source: np.ndarray,
    emb_target: np.ndarray,
    coupling: np.ndarray,
    cost_source: np.ndarray,
    cost_target: np.ndarray,
    cross_cost: np.ndarray | None,
    alpha: float,
    beta: float,
    kernel: KernelSpec,
    loss: str | LossSpec = "mse",
) -> tuple[np.ndarray, np.ndarray]:
    """Exact gradients of :func:`embedding_objective` for both graphs.

    The diagonal of each within-graph kernel matrix is structurally zero,
    so its entries contribute nothing to the gradient and are masked.
    """
    loss = get_loss(loss)
    xs = np.asarray(emb_source, float)
    xt = np.asarray(emb_target, float)
    t = np.asarray(coupling, float)
    cs = np.asarray(cost_source, float)
    ct = np.asarray(cost_target, float)
    cst = None if cross_cost is None else np.asarray(cross_cost, float)
    _check_embedding_shapes(xs, xt, t, cs, ct, cst)

    weights_cross = alpha * t
    if beta != 0.0 and cst is not None:
        k_cross = kernel_matrix(emb_source, emb_target, kernel)
        weights_cross = weights_cross + (beta / cst.size) * loss_gradient_lhs(
            loss, k_cross, cst
        )
    grad_s, grad_t = _kernel_backward(emb_source, emb_target, weights_cross, kernel)

    if beta != 0.0:
        for emb, cost, grad in ((emb_source, cs, grad_s), (emb_target, ct, grad_t)):
            k_within = kernel_matrix(emb, emb, kernel)
            w = (beta / k_within.size) * loss_gradient_lhs(loss, k_within, cost)
            np.fill_diagonal(w, 0.0)
            part_a, part_b = _kernel_backward(emb, emb, w, kernel)
            grad += part_a + part_b
    return grad_s, grad_t


class _AdamState:
    """Adaptive-moment state for one embedding matrix."""

    def __init__(self, shape: tuple[int, ...]):
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.t = 0

    def step(self, x: np.ndarray, grad: np.ndarray, lr: float) -> None:
        self.t += 1
        self.m = ADAM_BETA1 * self.m + (1.0 - ADAM_BETA1) * grad
        self.v = ADAM_BETA2 * self.v + (1.0 - ADAM_BETA2) * grad**2
        m_hat = self.m / (1.0 - ADAM_BETA1**self.t)
        v_hat = self.v / (1.0 - ADAM_BETA2**self.t)
        x -= lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)


def _epoch_batches(perm: np.ndarray, steps: int) -> list[np.ndarray]:
    n = len(perm)
    if steps <= n:
        return np.array_split(perm, steps)
    # Degenerate side of a very lopsided pair: cycle single nodes.
    return [perm[[k % n]] for k in range(steps)]


def update_embeddings(
    emb_source: np.ndarray,
    emb_target: np.ndarray,
    coupling: np.ndarray,
    cost_source: np.ndarray,
    cost_target: np.ndarray,
    cross_cost: np.ndarray | None,
    alpha: float,
    config: EmbedOptConfig,
    kernel: KernelSpec,
    loss: str | LossSpec = "mse",
    rng: np.random.Generator | None = None,
) -> EmbeddingUpdate:
    """Run minibatch descent epochs on the embedding objective.

    Each epoch shuffles both node sets and walks them once in batches of
    roughly ``config.batch_size`` nodes per graph; every loss term is
    restricted to the sampled sub-blocks, with the transport-guidance term
    rescaled so its expectation matches the full objective. Raises
    DivergedError when the full objective exceeds ten times its initial
    value.
    """
    loss = get_loss(loss)
    rng = np.random.default_rng(config.seed) if rng is None else rng
    xs = np.asarray(emb_source, float).copy()
    xt = np.asarray(emb_target, float).copy()
    ns, nt = xs.shape[1], xt.shape[1]
    beta = config.beta

    def full_objective():
        return embedding_objective(
            xs, xt, coupling, cost_source, cost_target, cross_cost,
            alpha, beta, kernel, loss,
        )

    objective_before = full_objective()
    guard = DIVERGENCE_FACTOR * objective_before + 1e-12
    state_s = _AdamState(xs.shape)
    state_t = _AdamState(xt.shape)
    steps = max(1, math.ceil(max(ns, nt) / config.batch_size))
    cst = None if cross_cost is None else np.asarray(cross_cost, float)

    for _ in range(config.epochs):
        batches_s = _epoch_batches(rng.permutation(ns), steps)
        batches_t = _epoch_batches(rng.permutation(nt), steps)
        for batch_s, batch_t in zip(batches_s, batches_t):
            xs_b = xs[:, batch_s]
            xt_b = xt[:, batch_t]
            scale = (ns * nt) / (len(batch_s) * len(batch_t))
            grad_s_b, grad_t_b = embedding_gradient(
                xs_b,
                xt_b,
                coupling[np.ix_(batch_s, batch_t)],
                cost_source[np.ix_(batch_s, batch_s)],
                cost_target[np.ix_(batch_t, batch_t)],
                None if cst is None else cst[np.ix_(batch_s, batch_t)],
                alpha * scale,
                beta,
                kernel,
                loss,
            )
            grad_s = np.zeros_like(xs)
            grad_s[:, batch_s] = grad_s_b
            grad_t = np.zeros_like(xt)
            grad_t[:, batch_t] = grad_t_b
            state_s.step(xs, grad_s, config.learning_rate)
            state_t.step(xt, grad_t, config.learning_rate)
        objective_now = full_objective()
        if objective_now > guard:
            raise DivergedError(
                f"embedding objective grew from {objective_before:.6g} "
                f"to {objective_now:.6g}"
            )
    return EmbeddingUpdate(xs, xt, objective_before, full_objective())


def save_embeddings_csv(
    embeddings: np.ndarray, labels, path: str | Path
) -> None:
    """Write embeddings as ``node_label, x_1, ..., x_D`` rows."""
    x = np.asarray(embeddings, float)
    dim, n = x.shape
    if len(labels) != n:
        raise ShapeMismatchError("label count must match embedding columns")
    lines = ["node_label," + ",".join(f"x_{d + 1}" for d in range(dim))]
    for i in range(n):
        lines.append(str(labels[i]) + "," + ",".join(repr(float(v)) for v in x[:, i]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_embeddings_csv(path: str | Path) -> tuple[list[str], np.ndarray]:
    """Read embeddings written by :func:`save_embeddings_csv`."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ValueError(f"{path}: empty embeddings file")
    labels: list[str] = []
    columns: list[list[float]] = []
    for line in lines[1:]:
        if not line.strip():
            continue
        parts = line.split(",")
        labels.append(parts[0])
        columns.append([float(v) for v in parts[1:]])
    return labels, np.array(columns).T
