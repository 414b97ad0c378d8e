"""Training objectives with analytic gradients and a finite-difference check.

Two objective families:

* a temporal/semantic dual InfoNCE over paired embedding sequences, combined
  as lam*L_temporal + (1-lam)*L_semantic (cosine similarity, temperature-
  scaled softmax, symmetric anchor-both-ways form, positives on the
  diagonal, mean reduction);
* a dual MSE over a synthesized spectrogram and its forward time difference,
  alpha*MSE(d, d_gt) + (1-alpha)*MSE(diff d, diff d_gt).

All math runs in float64.  Every loss returns its value together with the
gradients with respect to its inputs; ``grad_check`` verifies those against
central differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .features import temporal_diff

DEFAULT_TAU = 0.07
DEFAULT_LAMBDA = 0.5
DEFAULT_ALPHA = 0.5


@dataclass
class LossValue:
    """Scalar loss plus gradients shaped exactly like the named inputs."""

    value: float
    gradients: dict
    components: dict = field(default_factory=dict)


def cosine_sim(a, b) -> float:
    """Cosine similarity a.b/(|a||b|); zero vectors are rejected."""
    a = _checked_vector(a, "a")
    b = _checked_vector(b, "b")
    s = float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))
    return min(1.0, max(-1.0, s))


def temporal_infonce(e_a: np.ndarray, e_v: np.ndarray,
                     tau: float = DEFAULT_TAU) -> LossValue:
    """Frame-level symmetric InfoNCE between two aligned n x D sequences.

    Positives are the matched frames (i, i); each direction's softmax runs
    over the n candidate frames of the other sequence, and the two halves
    are averaged, then reduced by mean over the n positives.
    """
    a = _checked_rows(e_a, "e_a")
    v = _checked_rows(e_v, "e_v")
    if a.shape[0] != v.shape[0]:
        raise ValueError("sequences must have the same number of rows")
    value, d_s, s, ah, vh, na, nv = _infonce_core(a, v, tau)
    g_a, g_v = _cosine_matrix_backprop(d_s, s, ah, vh, na, nv)
    return LossValue(value, {"e_a": g_a, "e_v": g_v})


def semantic_infonce(batch_a, batch_v, tau: float = DEFAULT_TAU) -> LossValue:
    """Sequence-level symmetric InfoNCE over a batch of embedding sequences.

    Each sequence is pooled to its time mean; the InfoNCE then contrasts the
    n_s pooled pairs against each other.
    """
    seqs_a, pack_a = _as_batch(batch_a, "batch_a")
    seqs_v, pack_v = _as_batch(batch_v, "batch_v")
    if len(seqs_a) != len(seqs_v):
        raise ValueError("batches must contain the same number of sequences")
    pa = np.stack([s.mean(axis=0) for s in seqs_a])
    pv = np.stack([s.mean(axis=0) for s in seqs_v])
    _require_nonzero_rows(pa, "pooled batch_a")
    _require_nonzero_rows(pv, "pooled batch_v")
    value, d_s, s, ah, vh, na, nv = _infonce_core(pa, pv, tau)
    g_pa, g_pv = _cosine_matrix_backprop(d_s, s, ah, vh, na, nv)
    grads_a = [np.broadcast_to(g_pa[i] / len(seq), seq.shape).copy()
               for i, seq in enumerate(seqs_a)]
    grads_v = [np.broadcast_to(g_pv[i] / len(seq), seq.shape).copy()
               for i, seq in enumerate(seqs_v)]
    return LossValue(value, {"batch_a": pack_a(grads_a), "batch_v": pack_v(grads_v)})


def contrastive_loss(batch_a, batch_v, tau: float = DEFAULT_TAU,
                     lam: float = DEFAULT_LAMBDA) -> LossValue:
    """Combined objective lam*L_temporal + (1-lam)*L_semantic.

    The temporal term is the mean frame-level InfoNCE over the batch pairs;
    the semantic term contrasts the pooled sequences across the batch.  A
    single (e_a, e_v) pair is accepted as a batch of one.
    """
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda must lie in [0, 1]")
    seqs_a, pack_a = _as_batch(batch_a, "batch_a")
    seqs_v, pack_v = _as_batch(batch_v, "batch_v")
    if len(seqs_a) != len(seqs_v):
        raise ValueError("batches must contain the same number of sequences")
    n_s = len(seqs_a)
    t_vals = []
    t_grads_a, t_grads_v = [], []
    for a_i, v_i in zip(seqs_a, seqs_v):
        part = temporal_infonce(a_i, v_i, tau)
        t_vals.append(part.value)
        t_grads_a.append(part.gradients["e_a"] / n_s)
        t_grads_v.append(part.gradients["e_v"] / n_s)
    l_temporal = float(np.mean(t_vals))
    sem = semantic_infonce(seqs_a, seqs_v, tau)
    grads_a = [lam * gt + (1.0 - lam) * gs
               for gt, gs in zip(t_grads_a, sem.gradients["batch_a"])]
    grads_v = [lam * gt + (1.0 - lam) * gs
               for gt, gs in zip(t_grads_v, sem.gradients["batch_v"])]
    value = lam * l_temporal + (1.0 - lam) * sem.value
    return LossValue(value,
                     {"batch_a": pack_a(grads_a), "batch_v": pack_v(grads_v)},
                     components={"temporal": l_temporal, "semantic": sem.value})


def dual_mse(d_syn: np.ndarray, d_gt: np.ndarray,
             alpha: float = DEFAULT_ALPHA) -> LossValue:
    """alpha*MSE(d_syn, d_gt) + (1-alpha)*MSE on the forward time differences."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    s = np.asarray(d_syn, dtype=np.float64)
    g = np.asarray(d_gt, dtype=np.float64)
    if s.shape != g.shape:
        raise ValueError(f"shape mismatch: {s.shape} vs {g.shape}")
    if s.ndim != 2 or s.shape[0] < 2:
        raise ValueError("inputs must be T x F with T >= 2")
    diff = s - g
    mse_spec = float(np.mean(diff ** 2))
    d_diff = temporal_diff(s) - temporal_diff(g)
    mse_delta = float(np.mean(d_diff ** 2))
    value = alpha * mse_spec + (1.0 - alpha) * mse_delta
    grad = alpha * 2.0 * diff / diff.size
    r = (1.0 - alpha) * 2.0 * d_diff / d_diff.size
    grad[:-1] -= r  # adjoint of the forward difference
    grad[1:] += r
    return LossValue(value, {"d_syn": grad, "d_gt": -grad},
                     components={"spec": mse_spec, "delta": mse_delta})


def grad_check(fn, inputs: dict, eps: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``fn(**inputs)`` must return a LossValue whose gradient keys name the
    entries of ``inputs`` being checked.  The per-coordinate relative error
    is |analytic - numeric| / max(1e-12, |analytic| + |numeric|).
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    base = fn(**inputs)
    if not np.isfinite(base.value):
        raise ValueError("loss is not finite at the probe point")
    work = {k: np.array(v, dtype=np.float64) for k, v in inputs.items()}
    worst = 0.0
    for name, analytic in base.gradients.items():
        if name not in work:
            continue
        x = work[name]
        a = np.asarray(analytic)
        for idx in np.ndindex(x.shape):
            orig = x[idx]
            x[idx] = orig + eps
            f_plus = fn(**work).value
            x[idx] = orig - eps
            f_minus = fn(**work).value
            x[idx] = orig
            numeric = (f_plus - f_minus) / (2.0 * eps)
            err = abs(a[idx] - numeric) / max(1e-12, abs(a[idx]) + abs(numeric))
            worst = max(worst, err)
    return worst


# -- internals ---------------------------------------------------------------

def _checked_vector(x, name: str) -> np.ndarray:
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError(f"{name} must be a vector")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} contains NaN/Inf")
    if np.linalg.norm(v) == 0.0:
        raise ValueError(f"{name} is a zero vector")
    return v


def _checked_rows(x, name: str) -> np.ndarray:
    m = np.asarray(x, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise ValueError(f"{name} must be a nonempty n x D matrix")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains NaN/Inf")
    _require_nonzero_rows(m, name)
    return m


def _require_nonzero_rows(m: np.ndarray, name: str) -> None:
    if np.any(np.linalg.norm(m, axis=1) == 0.0):
        raise ValueError(f"{name} contains a zero row; cosine similarity undefined")


def _as_batch(batch, name: str):
    """Normalize a batch argument to a list of 2-D arrays.

    Accepts a single n x D pair member, a sequence of 2-D arrays, or one
    3-D array.  Returns the list plus a packer restoring the input layout
    for the gradients.
    """
    if isinstance(batch, np.ndarray) and batch.ndim == 2:
        seqs = [_checked_rows(batch, name)]
        return seqs, lambda grads: [g for g in grads]
    if isinstance(batch, np.ndarray) and batch.ndim == 3:
        seqs = [_checked_rows(batch[i], f"{name}[{i}]") for i in range(batch.shape[0])]
        return seqs, lambda grads: np.stack(grads)
    try:
        items = list(batch)
    except TypeError:
        raise ValueError(f"{name} must be an array or a sequence of arrays")
    if not items:
        raise ValueError(f"{name} is empty")
    if all(isinstance(s, np.ndarray) or np.ndim(s) == 2 for s in items) and \
            np.ndim(items[0]) == 2:
        seqs = [_checked_rows(s, f"{name}[{i}]") for i, s in enumerate(items)]
        return seqs, lambda grads: list(grads)
    raise ValueError(f"{name} must be a 2-D/3-D array or a sequence of 2-D arrays")


def _infonce_core(a: np.ndarray, v: np.ndarray, tau: float):
    """Value and dL/dS of the symmetric diagonal-positive InfoNCE."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    na = np.linalg.norm(a, axis=1)
    nv = np.linalg.norm(v, axis=1)
    ah = a / na[:, None]
    vh = v / nv[:, None]
    s = ah @ vh.T
    c = s / tau
    n = c.shape[0]
    lse_rows = _logsumexp(c, axis=1)
    lse_cols = _logsumexp(c, axis=0)
    diag = np.diag(c)
    value = float(np.mean(0.5 * (lse_rows + lse_cols) - diag))
    p_rows = np.exp(c - lse_rows[:, None])
    p_cols = np.exp(c - lse_cols[None, :])
    d_c = (p_rows + p_cols) / (2.0 * n)
    d_c[np.diag_indices(n)] -= 1.0 / n
    return value, d_c / tau, s, ah, vh, na, nv


def _logsumexp(x: np.ndarray, axis: int) -> np.ndarray:
    m = np.max(x, axis=axis, keepdims=True)
    out = m + np.log(np.sum(np.exp(x - m), axis=axis, keepdims=True))
    return np.squeeze(out, axis=axis)


def _cosine_matrix_backprop(g_s, s, ah, vh, na, nv):
    """Push dL/dS through S = normalize(A) @ normalize(V).T."""
    row_gs = np.sum(g_s * s, axis=1)
    col_gs = np.sum(g_s * s, axis=0)
    g_a = (g_s @ vh - row_gs[:, None] * ah) / na[:, None]
    g_v = (g_s.T @ ah - col_gs[:, None] * vh) / nv[:, None]
    return g_a, g_v
