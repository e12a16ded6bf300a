"""Multiclass logistic classifier with a weighted row-wise group-lasso penalty.

The objective for features ``Phi`` (l x d), labels ``y`` in ``1..C``,
weights ``W`` (d x C) and bias ``b`` (C,) is::

    (1/l) * sum_i log sum_c exp(M[i, c] - M[i, y_i]) + lam * sum_j gamma_j * ||W[j, :]||

with ``M = Phi @ W + b``. ``R`` is the residual matrix ``(softmax(M) - onehot(y)) / l``
and ``G = Phi.T @ R`` the gradient of the data term with respect to ``W``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import DimensionError, FileFormatError, MissingClassError, NotConvergedError
from .tensor import FeatureMatrix

TOL_KKT = 1e-6
#: Angular tolerance (radians) between -G_j and W_j for active rows.
TOL_ANGLE = 1e-4
DEFAULT_EPSILON = 1e-6


@dataclass
class ModelState:
    """Weights and regularization of a fitted classifier.

    ``means`` / ``norms`` are the frozen training statistics of each feature
    column and ``bank`` maps derived band ids to the descriptor producing them
    (hierarchical models only).
    """

    W: np.ndarray
    b: np.ndarray
    gamma: np.ndarray
    lam: float
    descriptors: tuple = ()
    epsilon: float = DEFAULT_EPSILON
    means: np.ndarray | None = None
    norms: np.ndarray | None = None
    bank: dict = field(default_factory=dict)
    converged: bool = True

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=np.float64).reshape(-1, np.size(self.b))
        self.b = np.asarray(self.b, dtype=np.float64).ravel()
        self.gamma = np.asarray(self.gamma, dtype=np.float64).ravel()
        self.descriptors = tuple(self.descriptors)
        d = self.W.shape[0]
        if self.gamma.shape != (d,):
            raise DimensionError(f"gamma has {self.gamma.size} entries for {d} rows")
        if self.descriptors and len(self.descriptors) != d:
            raise DimensionError("one descriptor per weight row is required")
        if np.any(self.gamma <= 0) or self.lam <= 0:
            raise ValueError("lambda and gamma must be positive")

    @property
    def n_features(self) -> int:
        return self.W.shape[0]

    @property
    def n_classes(self) -> int:
        return self.b.size

    def row_norms(self) -> np.ndarray:
        return np.linalg.norm(self.W, axis=1)

    def keep(self, index: Sequence[int]) -> "ModelState":
        index = list(index)
        return ModelState(
            self.W[index], self.b.copy(), self.gamma[index], self.lam,
            tuple(self.descriptors[i] for i in index) if self.descriptors else (),
            self.epsilon,
            None if self.means is None else self.means[index],
            None if self.norms is None else self.norms[index],
            dict(self.bank), self.converged,
        )


@dataclass
class FitReport:
    objective: float
    iterations: int
    converged: bool
    active_rows: set
    kkt_violation: float = 0.0
    history: list = field(default_factory=list)


def _values(phi) -> np.ndarray:
    return phi.values if isinstance(phi, FeatureMatrix) else np.asarray(phi, dtype=np.float64)


def _labels(y, n_classes: int | None = None) -> tuple[np.ndarray, int]:
    y = np.asarray(y, dtype=np.int64).ravel()
    if n_classes is None:
        n_classes = int(y.max())
    if y.size and (y.min() < 1 or y.max() > n_classes):
        raise ValueError(f"labels must lie in 1..{n_classes}")
    return y - 1, n_classes


def _check(X: np.ndarray, W: np.ndarray, b: np.ndarray, y0: np.ndarray) -> None:
    if X.ndim != 2 or X.shape[1] != W.shape[0] or W.shape[1] != b.size or X.shape[0] != y0.size:
        raise DimensionError(
            f"inconsistent shapes: Phi {X.shape}, W {W.shape}, b {b.shape}, y {y0.shape}")


# -- smooth part ---------------------------------------------------------------

def _data_loss_and_residual(X, W, b, y0, want_residual=True):
    l = X.shape[0]
    M = X @ W + b
    lse = logsumexp(M, axis=1)
    loss = float(np.mean(lse - M[np.arange(l), y0]))
    if not want_residual:
        return loss, None
    P = np.exp(M - lse[:, None])
    P[np.arange(l), y0] -= 1.0
    return loss, P / l


def data_loss(W: np.ndarray, b: np.ndarray, phi, y) -> float:
    X = _values(phi)
    y0, _ = _labels(y, np.size(b))
    W = np.asarray(W, dtype=np.float64).reshape(X.shape[1], np.size(b))
    _check(X, W, np.ravel(b), y0)
    return _data_loss_and_residual(X, W, np.ravel(b), y0, want_residual=False)[0]


def penalty(W: np.ndarray, lam: float, gamma: np.ndarray) -> float:
    return float(lam * np.dot(gamma, np.linalg.norm(W, axis=1))) if W.size else 0.0


def objective(state: ModelState, phi, y) -> float:
    """Softmax loss plus weighted group-lasso penalty (log-sum-exp stabilized)."""
    return data_loss(state.W, state.b, phi, y) + penalty(state.W, state.lam, state.gamma)


def residual_matrix(state: ModelState, phi, y) -> np.ndarray:
    """l x C residuals ``(softmax(M) - onehot(y)) / l``; every row sums to zero."""
    X = _values(phi)
    y0, _ = _labels(y, state.n_classes)
    _check(X, state.W, state.b, y0)
    return _data_loss_and_residual(X, state.W, state.b, y0)[1]


def gradient(phi, R: np.ndarray) -> np.ndarray:
    """Data-term gradient ``G = Phi.T @ R`` (d x C)."""
    X = _values(phi)
    R = np.asarray(R, dtype=np.float64)
    if X.shape[0] != R.shape[0]:
        raise DimensionError(f"Phi has {X.shape[0]} rows but R has {R.shape[0]}")
    return X.T @ R


def bias_gradient(R: np.ndarray) -> np.ndarray:
    return np.asarray(R).sum(axis=0)


def prox_group(V: np.ndarray, step: float, lam: float, gamma) -> np.ndarray:
    """Row-wise block soft-thresholding at level ``step * lam * gamma_j``."""
    V = np.asarray(V, dtype=np.float64)
    if V.size == 0:
        return V.copy()
    norms = np.linalg.norm(V, axis=1)
    thresh = step * lam * np.broadcast_to(np.asarray(gamma, dtype=np.float64), norms.shape)
    scale = np.zeros_like(norms)
    nz = norms > thresh
    scale[nz] = 1.0 - thresh[nz] / norms[nz]
    return V * scale[:, None]


# -- optimality ------------------------------------------------------------------

@dataclass
class KKTReport:
    active_gap: float      # max | ||G_j|| - lam*gamma_j | over nonzero rows
    active_angle: float    # max angle between -G_j and W_j over nonzero rows
    inactive_excess: float  # max (||G_j|| - lam*gamma_j) over zero rows, clipped at 0
    bias_norm: float

    def satisfied(self, tol: float = TOL_KKT, tol_angle: float = TOL_ANGLE) -> bool:
        return (self.active_gap <= tol and self.active_angle <= tol_angle
                and self.inactive_excess <= tol and self.bias_norm <= tol)

    @property
    def worst(self) -> float:
        return max(self.active_gap, self.inactive_excess, self.bias_norm)


def _kkt_from(W, G, gb, lam, gamma) -> KKTReport:
    wn = np.linalg.norm(W, axis=1)
    gn = np.linalg.norm(G, axis=1)
    thr = lam * gamma
    act = wn > 0
    gap = float(np.max(np.abs(gn[act] - thr[act]), initial=0.0))
    angle = 0.0
    if act.any():
        cos = -np.sum(G[act] * W[act], axis=1) / np.maximum(gn[act] * wn[act], 1e-300)
        # arccos is ill-conditioned near 1; use the perpendicular component
        perp = G[act] - (np.sum(G[act] * W[act], axis=1) / wn[act] ** 2)[:, None] * W[act]
        sin = np.linalg.norm(perp, axis=1) / np.maximum(gn[act], 1e-300)
        ang = np.arctan2(sin, cos)
        angle = float(ang.max())
    excess = float(np.max(gn[~act] - thr[~act], initial=0.0))
    return KKTReport(gap, angle, max(excess, 0.0), float(np.linalg.norm(gb)))


def kkt_report(state: ModelState, phi, y) -> KKTReport:
    R = residual_matrix(state, phi, y)
    return _kkt_from(state.W, gradient(phi, R), bias_gradient(R), state.lam, state.gamma)


# -- solver ----------------------------------------------------------------------

def _center(W: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Remove the class-mean of every weight row and of the bias.

    Adding a constant across classes to a row leaves the softmax loss
    unchanged, so this never raises the objective, and every minimizer has
    zero-sum rows. Only the penalty curves along that direction, weakly, so
    without this step round-off drifts the weights along it.
    """
    return W - W.mean(axis=1, keepdims=True), b - b.mean()


def _warm_start(warm: ModelState | None, descriptors, d: int, C: int, y0: np.ndarray):
    W = np.zeros((d, C))
    if warm is None:
        counts = np.bincount(y0, minlength=C).astype(np.float64)
        b = np.log(counts / counts.sum())
        return W, b - b.mean()
    if warm.n_classes != C:
        raise DimensionError("warm start has a different class count")
    if descriptors and warm.descriptors:
        rows = {desc: i for i, desc in enumerate(warm.descriptors)}
        for j, desc in enumerate(descriptors):
            if desc in rows:
                W[j] = warm.W[rows[desc]]
    else:
        k = min(d, warm.n_features)
        W[:k] = warm.W[:k]
    return _center(W, warm.b.copy())


def fit(phi, y, lam: float, gamma=None, warm: ModelState | None = None, *,
        n_classes: int | None = None, epsilon: float = DEFAULT_EPSILON,
        tol_kkt: float = TOL_KKT, max_iter: int = 10000, check_normalized: bool = True,
        record: bool = False) -> tuple[ModelState, FitReport]:
    """Minimize the group-lasso softmax objective by accelerated proximal gradient.

    FISTA with a halving backtracking line search (the step is also allowed
    to grow by 25% per iteration), function-value restarts, and a final
    Newton refinement on the support once it has settled. Stops when the
    optimality conditions hold within ``tol_kkt``, when the objective stalls
    (relative decrease below 1e-9 over 5 iterations) or after ``max_iter``
    iterations; the last case is reported through ``converged=False``.
    """
    X = _values(phi)
    descriptors = tuple(phi.descriptors) if isinstance(phi, FeatureMatrix) else ()
    y0, C = _labels(y, n_classes)
    l, d = X.shape
    if y0.size != l:
        raise DimensionError(f"{y0.size} labels for {l} samples")
    missing = [c + 1 for c in range(C) if not np.any(y0 == c)]
    if missing:
        raise MissingClassError(f"classes absent from training labels: {missing}")
    if check_normalized and d:
        norms = np.linalg.norm(X, axis=0)
        if np.max(np.abs(norms - 1.0)) > 1e-8:
            raise ValueError("feature columns must have unit norm")
    gamma = np.ones(d) if gamma is None else np.asarray(gamma, dtype=np.float64).ravel()
    if gamma.shape != (d,):
        raise DimensionError(f"gamma has {gamma.size} entries for {d} features")
    if lam <= 0 or np.any(gamma <= 0):
        raise ValueError("lambda and gamma must be positive")
    thr = lam * gamma

    W, b = _warm_start(warm, descriptors, d, C, y0)

    def smooth(W, b):
        return _data_loss_and_residual(X, W, b, y0)

    def full(W, b):
        return smooth(W, b)[0] + penalty(W, lam, gamma)

    def polish(W, b, F, kkt):
        """Newton refinement on the support, kept only if it helps."""
        out = _newton_polish(X, y0, W, b, lam, gamma)
        if out is None:
            return None
        pW, pb = out
        Fp = full(pW, pb)
        if Fp > F + 1e-14 * abs(F):
            return None
        R = smooth(pW, pb)[1]
        kp = _kkt_from(pW, X.T @ R, R.sum(axis=0), lam, gamma)
        if kp.worst > kkt.worst and not kp.satisfied(tol_kkt):
            return None
        return pW, pb, Fp, kp

    # Lipschitz bound of the smooth part: ||[X 1]||^2 / (2 l)
    lip = (np.linalg.norm(np.column_stack([X, np.ones(l)]), 2) ** 2) / (2.0 * l)
    step = 1.0 / lip

    x_W, x_b = W, b
    y_W, y_b = W.copy(), b.copy()
    t = 1.0
    F_x = full(x_W, x_b)
    history = [F_x]
    converged = False
    it = 0
    kkt = None
    for it in range(1, max_iter + 1):
        f_y, R = smooth(y_W, y_b)
        gW, gb = X.T @ R, R.sum(axis=0)
        step *= 1.25
        while True:
            n_W = prox_group(y_W - step * gW, step, lam, gamma)
            n_b = y_b - step * gb
            dW, db = n_W - y_W, n_b - y_b
            f_n = smooth(n_W, n_b)[0]
            quad = f_y + np.sum(gW * dW) + np.dot(gb, db) + (np.sum(dW * dW) + np.dot(db, db)) / (2 * step)
            if f_n <= quad + 1e-15 * abs(f_y) or step < 1e-12 / lip:
                break
            step *= 0.5
        F_n = f_n + penalty(n_W, lam, gamma)
        if F_n > F_x:
            # function-value restart: drop momentum and retry from the last iterate
            t = 1.0
            y_W, y_b = x_W.copy(), x_b.copy()
            if np.array_equal(y_W, n_W) and np.array_equal(y_b, n_b):
                break
            history.append(F_x)
            continue
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        mom = (t - 1.0) / t_next
        y_W = n_W + mom * (n_W - x_W)
        y_b = n_b + mom * (n_b - x_b)
        x_W, x_b, F_x, t = n_W, n_b, F_n, t_next
        history.append(F_x)

        if it % 10 == 0 or it == max_iter:
            R = smooth(x_W, x_b)[1]
            kkt = _kkt_from(x_W, X.T @ R, R.sum(axis=0), lam, gamma)
            met = kkt.satisfied(tol_kkt)
            stalled = (len(history) > 5 and history[-6] - history[-1] <= 1e-9 * abs(history[-1])
                       and kkt.worst < 10 * tol_kkt)
            # once the support has settled, Newton on it reaches round-off level,
            # which pins the weights far more tightly than the stopping tolerance
            if kkt.worst < 1e-3 and (met or stalled or it % 50 == 0):
                polished = polish(x_W, x_b, F_x, kkt)
                if polished is not None:
                    x_W, x_b, F_x, kkt = polished
                    y_W, y_b, t = x_W.copy(), x_b.copy(), 1.0
                    history.append(F_x)
            if kkt.satisfied(tol_kkt):
                converged = True
                break
            if stalled:
                break

    x_W, x_b = _center(x_W, x_b)
    F_x = full(x_W, x_b)
    R = smooth(x_W, x_b)[1]
    kkt = _kkt_from(x_W, X.T @ R, R.sum(axis=0), lam, gamma)
    converged = kkt.satisfied(tol_kkt)
    state = ModelState(x_W, x_b, gamma.copy(), lam, descriptors, epsilon,
                       None if not isinstance(phi, FeatureMatrix) else phi.means.copy(),
                       None if not isinstance(phi, FeatureMatrix) else phi.norms.copy(),
                       dict(warm.bank) if warm is not None else {}, converged)
    active = {j for j, n in enumerate(state.row_norms()) if n > 0}
    report = FitReport(F_x, max(it, 1), converged, active, kkt.worst,
                       history if record else [])
    return state, report


def _newton_polish(X, y0, W, b, lam, gamma, max_steps=50):
    """Damped Newton on the rows that are currently nonzero.

    Returns refined ``(W, b)`` or ``None`` when the support is empty or the
    iteration fails to improve. Rows outside the support stay at zero.
    """
    l, d = X.shape
    C = b.size
    S = np.flatnonzero(np.linalg.norm(W, axis=1) > 0)
    k = S.size
    Xs = np.column_stack([X[:, S], np.ones(l)])
    thr = lam * gamma[S]
    rows = np.arange(l)

    def pack(Ws, b):
        return np.concatenate([Ws.ravel(), b])

    def unpack(z):
        return z[:k * C].reshape(k, C), z[k * C:]

    def value(z):
        Ws, bb = unpack(z)
        M = Xs[:, :k] @ Ws + bb
        lse = logsumexp(M, axis=1)
        return float(np.mean(lse - M[rows, y0])) + float(np.dot(thr, np.linalg.norm(Ws, axis=1)))

    z = pack(W[S], b)
    f = value(z)
    for _ in range(max_steps):
        Ws, bb = unpack(z)
        M = Xs[:, :k] @ Ws + bb
        P = np.exp(M - logsumexp(M, axis=1)[:, None])
        Rm = P.copy()
        Rm[rows, y0] -= 1.0
        # gradient and Hessian of the data term over the (k+1) x C parameter block
        gmat = Xs.T @ Rm / l
        H = np.zeros(((k + 1) * C, (k + 1) * C))
        for c in range(C):
            for e in range(c, C):
                wts = P[:, c] * ((c == e) - P[:, e]) / l
                blk = (Xs * wts[:, None]).T @ Xs
                H[c::C, e::C] = blk
                H[e::C, c::C] = blk.T
        wn = np.linalg.norm(Ws, axis=1)
        if np.any(wn == 0):
            return None
        gmat[:k] += thr[:, None] * Ws / wn[:, None]
        for j in range(k):
            u = Ws[j] / wn[j]
            blk = thr[j] * (np.eye(C) - np.outer(u, u)) / wn[j]
            H[j * C:(j + 1) * C, j * C:(j + 1) * C] += blk
        g = gmat.ravel()
        # softmax invariance to a common class shift leaves a null direction in b
        H += 1e-12 * np.trace(H) / H.shape[0] * np.eye(H.shape[0])
        try:
            delta = np.linalg.solve(H, -g)
        except np.linalg.LinAlgError:
            return None
        if np.linalg.norm(g) < 1e-15:
            break
        # near the optimum objective differences drown in round-off, so a full
        # step within that noise is accepted and the gradient decides
        noise = 1e-14 * abs(f)
        s = 1.0
        while s > 1e-10:
            z_new = pack(*_center(*unpack(z + s * delta)))
            f_new = value(z_new)
            if f_new <= f + 1e-4 * s * np.dot(g, delta) or (s == 1.0 and f_new <= f + noise):
                break
            s *= 0.5
        else:
            break
        # a row crossing zero means the support is wrong; give up
        Wn, _ = unpack(z_new)
        if np.any(np.linalg.norm(Wn, axis=1) < 1e-12):
            return None
        step_size = np.linalg.norm(z_new - z)
        z, f = z_new, min(f, f_new)
        if step_size <= 1e-15 * (1.0 + np.linalg.norm(z)):
            break
    Ws, bb = unpack(z)
    out = np.zeros_like(W)
    out[S] = Ws
    return out, bb


def violation_scores(state: ModelState, phi_active, y, candidate_columns,
                     candidate_gammas=None) -> np.ndarray:
    """Optimality-violation score ``||g_j|| - lam*gamma_j - epsilon`` per candidate.

    ``candidate_columns`` is l x p (normalized candidate features). Positive
    scores mark candidates whose inclusion lowers the objective.
    """
    if not state.converged:
        raise NotConvergedError("scores need a converged fit; the residual is stale")
    R = residual_matrix(state, phi_active, y)
    cand = np.asarray(candidate_columns, dtype=np.float64)
    if cand.ndim == 1:
        cand = cand[:, None]
    if cand.shape[0] != R.shape[0]:
        raise DimensionError("candidate columns must have one entry per labeled sample")
    p = cand.shape[1]
    gam = np.ones(p) if candidate_gammas is None else np.broadcast_to(
        np.asarray(candidate_gammas, dtype=np.float64), (p,))
    g = cand.T @ R
    return np.linalg.norm(g, axis=1) - state.lam * gam - state.epsilon


def softmax_proba(logits: np.ndarray) -> np.ndarray:
    logits = np.asarray(logits, dtype=np.float64)
    return np.exp(logits - logsumexp(logits, axis=1, keepdims=True))


def predict(state: ModelState, phi_new) -> tuple[np.ndarray, np.ndarray]:
    """Class labels (``1..C``, ties to the lowest id) and class probabilities."""
    X = _values(phi_new)
    if X.ndim != 2 or X.shape[1] != state.n_features:
        raise DimensionError(f"expected {state.n_features} feature columns, got {X.shape}")
    P = softmax_proba(X @ state.W + state.b)
    return np.argmax(P, axis=1) + 1, P


# -- model file ------------------------------------------------------------------

MODEL_FORMAT = "aset-model/1"


def save_model(state: ModelState, path) -> None:
    """Write the model as JSON text; floats are stored with exact round-trip."""
    from pathlib import Path

    from .filters.descriptor import to_text

    doc = {
        "format": MODEL_FORMAT,
        "lambda": float(state.lam),
        "epsilon": float(state.epsilon),
        "n_classes": state.n_classes,
        "converged": bool(state.converged),
        "gamma": state.gamma.tolist(),
        "descriptors": [to_text(d) for d in state.descriptors],
        "W": state.W.tolist(),
        "b": state.b.tolist(),
        "column_means": None if state.means is None else state.means.tolist(),
        "column_norms": None if state.norms is None else state.norms.tolist(),
        "bank": {str(k): to_text(v) for k, v in sorted(state.bank.items())},
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def load_model(path) -> ModelState:
    from pathlib import Path

    from .filters.descriptor import from_text

    try:
        doc = json.loads(Path(path).read_text())
        if doc.get("format") != MODEL_FORMAT:
            raise FileFormatError(f"unsupported model format {doc.get('format')!r}")
        C = int(doc["n_classes"])
        d = len(doc["descriptors"])
        W = np.array(doc["W"], dtype=np.float64).reshape(d, C)
        return ModelState(
            W, np.array(doc["b"], dtype=np.float64), np.array(doc["gamma"], dtype=np.float64),
            float(doc["lambda"]), tuple(from_text(t) for t in doc["descriptors"]),
            float(doc["epsilon"]),
            None if doc["column_means"] is None else np.array(doc["column_means"], dtype=np.float64),
            None if doc["column_norms"] is None else np.array(doc["column_norms"], dtype=np.float64),
            {int(k): from_text(v) for k, v in doc.get("bank", {}).items()},
            bool(doc.get("converged", True)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, FileFormatError):
            raise
        raise FileFormatError(f"corrupt model file {path}: {exc}") from None
