"""Quality-weighted DPP kernels and greedy / exhaustive MAP slate search.

The kernel is the Gram matrix L = V V^T with rows V_i = r_i^alpha * x_i,
where r_i = exp(theta . x_i) is the arm quality. MAP search maximizes
prod_i p_i * det(L_[S]) with p_i the engagement probability sigmoid(theta . x_i),
greedily via incremental Cholesky.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .catalog import ItemCatalog
from .exceptions import InputError, NumericError

# theta.x is clamped here before exponentiation; exp(60) still fits a double.
SCORE_CLAMP = 30.0

# residual mass below this is treated as linear dependence
RESIDUAL_FLOOR = 1e-12

EXHAUSTIVE_CAP = 15


@dataclass
class Kernel:
    """Immutable DPP kernel over a candidate item list.

    ``log_quality[i]`` holds log p_i = log sigmoid(theta . x_i) used in MAP
    scoring; ``L`` is the (n, n) Gram matrix.
    """

    L: np.ndarray
    log_quality: np.ndarray
    ids: tuple[int, ...]
    _log_det_LI: float | None = field(default=None, repr=False)

    def __post_init__(self):
        self.ids = tuple(int(i) for i in self.ids)
        self._index = {i: k for k, i in enumerate(self.ids)}

    @property
    def n(self) -> int:
        return len(self.ids)

    def index_of(self, item_id: int) -> int:
        try:
            return self._index[item_id]
        except KeyError:
            raise InputError(f"id {item_id} not in kernel") from None

    def log_det_L_plus_I(self) -> float:
        """log det(L + I), computed once and cached (constant w.r.t. S)."""
        if self._log_det_LI is None:
            sign, logdet = np.linalg.slogdet(self.L + np.eye(self.n))
            if sign <= 0:
                raise NumericError("det(L + I) not positive; kernel is not PSD")
            self._log_det_LI = float(logdet)
        return self._log_det_LI


@dataclass
class Slate:
    """An ordered selected super arm with its accumulated log score."""

    items: tuple[int, ...]
    objective: float

    def __post_init__(self):
        self.items = tuple(int(i) for i in self.items)
        if len(set(self.items)) != len(self.items):
            raise InputError("slate contains duplicate ids")

    def __len__(self) -> int:
        return len(self.items)


def build_kernel(theta, items: ItemCatalog, alpha: float, ids=None) -> Kernel:
    """Construct L = V V^T with V_i = r_i^alpha x_i over ``ids`` (default: all).

    Also stores log p_i = theta.x_i - log(1 + exp(theta.x_i)) for MAP scoring.
    """
    theta = np.asarray(theta, dtype=float).ravel()
    if alpha <= 0:
        raise InputError(f"alpha must be positive, got {alpha}")
    if theta.shape[0] != items.dim:
        raise InputError(
            f"theta dimension {theta.shape[0]} != feature dimension {items.dim}"
        )
    ids = tuple(items.ids if ids is None else ids)
    X = items.rows(ids)
    scores = X @ theta
    if not np.all(np.isfinite(scores)):
        bad = int(np.flatnonzero(~np.isfinite(scores))[0])
        raise NumericError(f"non-finite theta.x at item {ids[bad]}")
    scores = np.clip(scores, -SCORE_CLAMP, SCORE_CLAMP)
    V = np.exp(alpha * scores)[:, None] * X
    L = V @ V.T
    L = (L + L.T) / 2.0
    log_quality = scores - np.logaddexp(0.0, scores)
    return Kernel(L=L, log_quality=log_quality, ids=ids)


def subset_log_det(kernel: Kernel, subset) -> float:
    """log det(L_[S]) via Cholesky; -inf when the submatrix is singular."""
    idx = [kernel.index_of(i) for i in subset]
    if len(set(idx)) != len(idx):
        raise InputError("subset contains duplicate ids")
    if not idx:
        return 0.0
    sub = kernel.L[np.ix_(idx, idx)]
    try:
        chol = np.linalg.cholesky(sub)
    except np.linalg.LinAlgError:
        return -np.inf
    diag = np.diag(chol)
    if np.any(diag <= 0):
        return -np.inf
    return float(2.0 * np.sum(np.log(diag)))


def slate_probability(kernel: Kernel, subset) -> float:
    """DPP probability det(L_[S]) / det(L + I) of the given subset."""
    return float(np.exp(subset_log_det(kernel, subset) - kernel.log_det_L_plus_I()))


def greedy_map(
    kernel: Kernel,
    K: int,
    candidates=None,
    quality_weight: float = 1.0,
    det_weight: float = 1.0,
) -> Slate:
    """Greedy MAP search via incremental Cholesky.

    Each round picks argmax quality_weight * log p_i + det_weight * log d_i^2
    over unselected candidates, where d_i^2 is the residual after conditioning
    on the current selection. Ties break on smallest id. Candidates whose
    residual collapses below the floor are dropped; the slate may come back
    short if everything collapses.
    """
    if K < 1:
        raise InputError(f"slate size must be >= 1, got {K}")
    cand = sorted(kernel.ids if candidates is None else candidates)
    if not cand:
        raise InputError("empty candidate set")
    idx = np.array([kernel.index_of(i) for i in cand])
    L = kernel.L[np.ix_(idx, idx)]
    logq = kernel.log_quality[idx]
    n = len(cand)
    kmax = min(K, n)

    cis = np.zeros((kmax, n))
    di2 = np.diag(L).copy()
    taken = np.zeros(n, dtype=bool)
    picked: list[int] = []
    objective = 0.0

    for step in range(kmax):
        if det_weight > 0.0:
            with np.errstate(divide="ignore"):
                logd2 = np.where(
                    di2 > RESIDUAL_FLOOR, np.log(np.maximum(di2, RESIDUAL_FLOOR)), -np.inf
                )
            scores = quality_weight * logq + det_weight * logd2
        else:
            scores = quality_weight * logq.copy()
        scores[taken] = -np.inf
        j = int(np.argmax(scores))  # cand is id-sorted: first max = smallest id
        if not np.isfinite(scores[j]):
            break
        taken[j] = True
        picked.append(cand[j])
        objective += float(scores[j])
        if det_weight > 0.0 and step + 1 < kmax:
            dj = np.sqrt(di2[j])
            eis = (L[j, :] - cis[:step, :].T @ cis[:step, j]) / dj
            cis[step, :] = eis
            di2 = di2 - eis**2
    return Slate(items=tuple(picked), objective=objective)


def exhaustive_map(
    kernel: Kernel,
    K: int,
    candidates=None,
    quality_weight: float = 1.0,
    det_weight: float = 1.0,
) -> Slate:
    """Exact argmax of the MAP objective over all size-min(K, n) subsets.

    Test oracle for greedy_map; capped at 15 candidates. Ties break on
    lexicographic id order.
    """
    if K < 1:
        raise InputError(f"slate size must be >= 1, got {K}")
    cand = sorted(kernel.ids if candidates is None else candidates)
    if not cand:
        raise InputError("empty candidate set")
    if len(cand) > EXHAUSTIVE_CAP:
        raise InputError(
            f"{len(cand)} candidates exceed exhaustive cap {EXHAUSTIVE_CAP}"
        )
    k = min(K, len(cand))
    best: tuple[int, ...] | None = None
    best_obj = -np.inf
    for subset in itertools.combinations(cand, k):
        obj = quality_weight * sum(
            kernel.log_quality[kernel.index_of(i)] for i in subset
        ) + det_weight * subset_log_det(kernel, subset)
        if obj > best_obj:
            best_obj, best = obj, subset
    if best is None:  # all subsets singular; fall back to first lexicographic
        best = tuple(cand[:k])
        best_obj = -np.inf
    return Slate(items=best, objective=float(best_obj))


def check_psd(L: np.ndarray, tol: float = 1e-9) -> bool:
    """Symmetry within tol and all eigenvalues >= -tol."""
    if not np.allclose(L, L.T, atol=tol):
        return False
    return bool(np.min(np.linalg.eigvalsh((L + L.T) / 2.0)) >= -tol)
