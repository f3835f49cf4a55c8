"""Optimal-transport machinery: Sinkhorn scaling, factorized loss tensors,
and proximal/entropic solvers for the relational matching sub-problem."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import NonFiniteError, ShapeMismatchError
from .losses import LossSpec, get_loss, xlogy

SCALE_MAX = 1e150
SCALE_MIN = 1e-150
EXPORT_THRESHOLD = 1e-12
EARLY_EXIT_REL_TOL = 1e-9
EARLY_EXIT_PATIENCE = 5


@dataclass(frozen=True)
class SinkhornInfo:
    """Diagnostics from one scaling solve."""

    scaling_left: np.ndarray
    scaling_right: np.ndarray
    stabilized: bool
    violation: float


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    objective: float
    marginal_violation: float
    entropy: float
    ms: float


@dataclass
class SolverTrace:
    """Per-iteration solver diagnostics, exportable as CSV."""

    records: list[TraceRecord] = field(default_factory=list)
    stabilized: bool = False
    unstable: bool = False

    def __len__(self) -> int:
        return len(self.records)

    def objectives(self) -> list[float]:
        return [r.objective for r in self.records]

    def to_csv(self, path: str | Path, zero_timing: bool = False) -> None:
        lines = ["iter,objective,marginal_violation,entropy,ms"]
        for r in self.records:
            ms = 0.0 if zero_timing else r.ms
            lines.append(
                f"{r.iteration},{r.objective!r},{r.marginal_violation!r},"
                f"{r.entropy!r},{ms!r}"
            )
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _check_square(c: np.ndarray, name: str) -> np.ndarray:
    c = np.asarray(c, float)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise ShapeMismatchError(f"{name} must be square, got shape {c.shape}")
    return c


def _check_distribution(mu: np.ndarray, size: int, name: str) -> np.ndarray:
    mu = np.asarray(mu, float)
    if mu.shape != (size,):
        raise ShapeMismatchError(f"{name} must have shape ({size},), got {mu.shape}")
    if not np.isfinite(mu).all() or np.any(mu <= 0):
        raise ValueError(f"{name} must be strictly positive and finite")
    return mu


def marginal_violation(
    coupling: np.ndarray, mu_source: np.ndarray, mu_target: np.ndarray
) -> float:
    """Largest absolute deviation of the coupling's marginals."""
    row = np.abs(coupling.sum(axis=1) - mu_source).max()
    col = np.abs(coupling.sum(axis=0) - mu_target).max()
    return float(max(row, col))


def coupling_entropy(coupling: np.ndarray) -> float:
    """Shannon entropy -sum T log T of a transport plan."""
    return float(-np.sum(xlogy(coupling, coupling)))


def loss_tensor_product(
    cost_source: np.ndarray,
    cost_target: np.ndarray,
    coupling: np.ndarray,
    mu_source: np.ndarray,
    mu_target: np.ndarray,
    loss: str | LossSpec = "mse",
) -> np.ndarray:
    """Loss matrix L(Cs, Ct, T) without forming the four-index tensor.

    Entry (j, j') aggregates the elementwise loss between source distances
    into node j and target distances into node j', weighted by the
    coupling. The separable form of the loss collapses the four-index
    contraction into three matrix products; the result equals the direct
    quadruple sum whenever ``mu_source``/``mu_target`` are the coupling's
    actual marginals.

    Parameters
    ----------
    cost_source : ndarray, shape (ns, ns)
    cost_target : ndarray, shape (nt, nt)
    coupling : ndarray, shape (ns, nt)
    mu_source : ndarray, shape (ns,)
    mu_target : ndarray, shape (nt,)
    loss : "mse", "kl", or a LossSpec

    Returns
    -------
    ndarray, shape (ns, nt)
    """
    loss = get_loss(loss)
    cs = _check_square(cost_source, "cost_source")
    ct = _check_square(cost_target, "cost_target")
    t = np.asarray(coupling, float)
    ns, nt = cs.shape[0], ct.shape[0]
    if t.shape != (ns, nt):
        raise ShapeMismatchError(
            f"coupling must have shape ({ns}, {nt}), got {t.shape}"
        )
    mu_s = np.asarray(mu_source, float)
    mu_t = np.asarray(mu_target, float)
    if mu_s.shape != (ns,) or mu_t.shape != (nt,):
        raise ShapeMismatchError("marginal shapes do not match the cost matrices")
    row = loss.f1(cs).T @ mu_s
    col = loss.f2(ct).T @ mu_t
    cross = loss.h1(cs).T @ t @ loss.h2(ct)
    return row[:, None] + col[None, :] - cross


def gw_discrepancy(
    cost_source: np.ndarray,
    cost_target: np.ndarray,
    coupling: np.ndarray,
    loss: str | LossSpec = "mse",
) -> float:
    """Relational transport discrepancy <L(Cs, Ct, T), T>.

    Marginals are taken from the coupling itself, so the value agrees with
    the direct four-index sum for any nonnegative plan, feasible or not.
    """
    t = np.asarray(coupling, float)
    tensor = loss_tensor_product(
        cost_source, cost_target, t, t.sum(axis=1), t.sum(axis=0), loss
    )
    return float(np.sum(tensor * t))


def _scaling_ok(a: np.ndarray, b: np.ndarray) -> bool:
    for v in (a, b):
        if not np.isfinite(v).all():
            return False
        mags = np.abs(v)
        if mags.max() > SCALE_MAX or mags.min() < SCALE_MIN:
            return False
    return True


def _logsumexp(m: np.ndarray, axis: int) -> np.ndarray:
    mx = np.max(m, axis=axis, keepdims=True)
    shift = np.where(np.isfinite(mx), mx, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(m - shift), axis=axis))
    return out + np.squeeze(shift, axis=axis)


def sinkhorn(
    cost: np.ndarray,
    mu_source: np.ndarray,
    mu_target: np.ndarray,
    gamma: float,
    rounds: int,
    kernel_factor: np.ndarray,
    scaling_init: np.ndarray | None = None,
    stabilized: bool = False,
) -> tuple[np.ndarray, SinkhornInfo]:
    """Alternating marginal scaling on the kernel exp(-cost / gamma) * factor.

    With the previous transport plan as ``kernel_factor`` this performs one
    KL-proximal update; with an all-ones factor it is plain entropic
    transport. Each round updates the right scaling from the target
    marginal and then the left scaling from the source marginal, so after
    any full round the row marginal is satisfied exactly and the column
    marginal approximately.

    When a scaling vector overflows past 1e150 (or underflows past
    1e-150), the solve transparently restarts in the log domain; pass
    ``stabilized=True`` to force log-domain scaling from the start.

    Parameters
    ----------
    cost : ndarray, shape (ns, nt)
    mu_source, mu_target : strictly positive marginals
    gamma : float
        Entropic regularization weight, > 0.
    rounds : int
        Number of scaling rounds (>= 1).
    kernel_factor : ndarray, shape (ns, nt)
        Multiplicative kernel factor; zeros are hard zeros of the support.
    scaling_init : ndarray, optional
        Warm start for the left scaling vector; defaults to ``mu_source``.

    Returns
    -------
    (coupling, SinkhornInfo)

    Raises
    ------
    NonFiniteError
        If even log-domain scaling yields non-finite values.
    """
    cost = np.asarray(cost, float)
    ns, nt = cost.shape
    mu_s = _check_distribution(mu_source, ns, "mu_source")
    mu_t = _check_distribution(mu_target, nt, "mu_target")
    factor = np.asarray(kernel_factor, float)
    if factor.shape != cost.shape:
        raise ShapeMismatchError("kernel_factor shape must match the cost matrix")
    if not np.isfinite(cost).all():
        raise NonFiniteError("cost matrix contains non-finite entries")
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    if rounds < 1:
        raise ValueError("rounds must be at least 1")
    a0 = mu_s if scaling_init is None else np.asarray(scaling_init, float)

    if not stabilized:
        with np.errstate(under="ignore"):
            kernel = np.exp(-cost / gamma) * factor
        a = a0.copy()
        b = np.ones(nt)
        ok = True
        for _ in range(rounds):
            with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
                b = mu_t / (kernel.T @ a)
                a = mu_s / (kernel @ b)
            if not _scaling_ok(a, b):
                ok = False
                break
        if ok:
            coupling = a[:, None] * kernel * b[None, :]
            if np.isfinite(coupling).all():
                info = SinkhornInfo(a, b, False, marginal_violation(coupling, mu_s, mu_t))
                return coupling, info

    with np.errstate(divide="ignore"):
        log_kernel = -cost / gamma + np.log(factor)
        log_a = np.log(a0)
    log_mu_s = np.log(mu_s)
    log_mu_t = np.log(mu_t)
    log_b = np.zeros(nt)
    with np.errstate(invalid="ignore", over="ignore"):
        for _ in range(rounds):
            log_b = log_mu_t - _logsumexp(log_kernel + log_a[:, None], axis=0)
            log_a = log_mu_s - _logsumexp(log_kernel + log_b[None, :], axis=1)
        coupling = np.exp(log_a[:, None] + log_kernel + log_b[None, :])
    if not np.isfinite(coupling).all():
        raise NonFiniteError(
            "scaling failed to stabilize; gamma is likely too small for this cost"
        )
    with np.errstate(over="ignore"):
        a_lin = np.exp(log_a)
        b_lin = np.exp(log_b)
    return coupling, SinkhornInfo(a_lin, b_lin, True, marginal_violation(coupling, mu_s, mu_t))


def _assemble_step_cost(
    cost_source,
    cost_target,
    coupling,
    mu_source,
    mu_target,
    alpha,
    cross_cost,
    gamma,
    loss,
):
    # The scalar +gamma shift does not change the argmin; kept for parity
    # with the update rule's stated cost.
    c = loss_tensor_product(cost_source, cost_target, coupling, mu_source, mu_target, loss)
    c = c + gamma
    if cross_cost is not None and alpha != 0.0:
        cross = np.asarray(cross_cost, float)
        if cross.shape != c.shape:
            raise ShapeMismatchError("cross_cost shape must match the coupling")
        c = c + alpha * cross
    return c


def proximal_gw_step(
    cost_source: np.ndarray,
    cost_target: np.ndarray,
    cross_cost: np.ndarray | None,
    mu_source: np.ndarray,
    mu_target: np.ndarray,
    alpha: float,
    gamma: float,
    coupling_prev: np.ndarray,
    loss: str | LossSpec = "mse",
    rounds: int = 1,
    scaling_init: np.ndarray | None = None,
) -> tuple[np.ndarray, SinkhornInfo]:
    """One KL-proximal update of the transport plan.

    Linearizes the quadratic relational objective at the previous plan and
    solves the resulting entropic problem with the previous plan as kernel
    factor, so zero entries of the previous plan stay zero.
    """
    loss = get_loss(loss)
    cost = _assemble_step_cost(
        cost_source, cost_target, coupling_prev, mu_source, mu_target,
        alpha, cross_cost, gamma, loss,
    )
    return sinkhorn(
        cost, mu_source, mu_target, gamma, rounds,
        kernel_factor=coupling_prev, scaling_init=scaling_init,
    )


def entropic_gw_step(
    cost_source: np.ndarray,
    cost_target: np.ndarray,
    cross_cost: np.ndarray | None,
    mu_source: np.ndarray,
    mu_target: np.ndarray,
    alpha: float,
    gamma: float,
    coupling_prev: np.ndarray,
    loss: str | LossSpec = "mse",
    rounds: int = 1,
    scaling_init: np.ndarray | None = None,
) -> tuple[np.ndarray, SinkhornInfo]:
    """One entropic-projection update (kernel without the previous-plan factor).

    More prone to instability at small gamma than the proximal update,
    since nothing anchors the kernel to the current support.
    """
    loss = get_loss(loss)
    cost = _assemble_step_cost(
        cost_source, cost_target, coupling_prev, mu_source, mu_target,
        alpha, cross_cost, gamma, loss,
    )
    return sinkhorn(
        cost, mu_source, mu_target, gamma, rounds,
        kernel_factor=np.ones_like(cost), scaling_init=scaling_init,
    )


def solve_ot_subproblem(
    cost_source: np.ndarray,
    cost_target: np.ndarray,
    cross_cost: np.ndarray | None,
    mu_source: np.ndarray,
    mu_target: np.ndarray,
    alpha: float,
    gamma: float,
    loss: str | LossSpec = "mse",
    n_steps: int = 200,
    sinkhorn_rounds: int = 1,
    coupling_init: np.ndarray | None = None,
    method: str = "proximal",
    early_exit_rel_tol: float = EARLY_EXIT_REL_TOL,
    early_exit_patience: int = EARLY_EXIT_PATIENCE,
) -> tuple[np.ndarray, SolverTrace]:
    """Iterate proximal (or entropic) updates for the transport sub-problem.

    The sub-problem objective is the relational discrepancy on the given
    cost matrices plus ``alpha`` times the linear cross-cost term. Each
    step linearizes at the current plan and runs ``sinkhorn_rounds``
    scaling rounds. The loop exits early once the relative objective
    change stays below ``early_exit_rel_tol`` for ``early_exit_patience``
    consecutive steps (set the patience to 0 to disable).

    Returns the final plan and a trace recording, per step, the
    sub-problem objective, marginal violation, plan entropy, and wall
    time. On a non-finite failure the partial trace is attached to the
    raised NonFiniteError.
    """
    loss = get_loss(loss)
    if method not in ("proximal", "entropic"):
        raise ValueError(f"unknown method {method!r}")
    mu_s = np.asarray(mu_source, float)
    mu_t = np.asarray(mu_target, float)
    coupling = (
        np.outer(mu_s, mu_t) if coupling_init is None
        else np.asarray(coupling_init, float).copy()
    )
    ones_factor = np.ones_like(coupling) if method == "entropic" else None
    scaling = mu_s.copy()
    trace = SolverTrace()
    prev_obj = None
    stall = 0
    for step in range(n_steps):
        t0 = time.perf_counter()
        cost = _assemble_step_cost(
            cost_source, cost_target, coupling, mu_s, mu_t,
            alpha, cross_cost, gamma, loss,
        )
        factor = coupling if method == "proximal" else ones_factor
        try:
            coupling_next, info = sinkhorn(
                cost, mu_s, mu_t, gamma, sinkhorn_rounds,
                kernel_factor=factor, scaling_init=scaling,
            )
        except NonFiniteError as err:
            trace.unstable = True
            raise NonFiniteError(str(err), trace=trace) from None
        scaling = (
            info.scaling_left
            if np.isfinite(info.scaling_left).all()
            else mu_s.copy()
        )
        objective = gw_discrepancy(cost_source, cost_target, coupling_next, loss)
        if cross_cost is not None and alpha != 0.0:
            objective += alpha * float(np.sum(np.asarray(cross_cost) * coupling_next))
        trace.stabilized = trace.stabilized or info.stabilized
        trace.records.append(
            TraceRecord(
                step,
                objective,
                info.violation,
                coupling_entropy(coupling_next),
                (time.perf_counter() - t0) * 1000.0,
            )
        )
        coupling = coupling_next
        if prev_obj is not None:
            if abs(objective - prev_obj) <= early_exit_rel_tol * max(abs(prev_obj), 1e-300):
                stall += 1
            else:
                stall = 0
            if early_exit_patience > 0 and stall >= early_exit_patience:
                break
        prev_obj = objective
    return coupling, trace


def save_coupling_csv(
    coupling: np.ndarray,
    path: str | Path,
    dense: bool = False,
    threshold: float = EXPORT_THRESHOLD,
) -> None:
    """Write a transport plan as sparse ``i,j,value`` triples or dense rows."""
    coupling = np.asarray(coupling, float)
    if dense:
        lines = [",".join(repr(float(v)) for v in row) for row in coupling]
    else:
        lines = ["i,j,value"]
        for i in range(coupling.shape[0]):
            for j in range(coupling.shape[1]):
                v = coupling[i, j]
                if v > threshold:
                    lines.append(f"{i},{j},{float(v)!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
