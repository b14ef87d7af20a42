"""Fall detectors and their decision plumbing.

Two window classifiers: a minimum-variance detector that scores how
much effort it takes to merge the newest frame into the cluster of the
window's earlier frames, and a soft-margin RBF SVM trained from scratch
by pairwise working-set updates on the dual. A monitor vote turns
per-window verdicts into a single declaration, and a three-detector
pipeline switches between incipient and abrupt detectors behind a
latching fault-type identifier.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from ._core import _jit
from .dataset import ScalerParams, apply_scaler, fit_scaler
from .errors import InsufficientData, NoConvergence, SingularR
from .features import distance_correlation

DEFAULT_C = 10.0
DEFAULT_LAMBDA = 1e-6
DEFAULT_TOL = 1e-3
DEFAULT_MAX_ITER = 10_000_000
MODEL_FORMAT_VERSION = 1

KIND_NN = "nn"
KIND_SVM = "svm"
KIND_MULTICLASS = "multiclass"


def ward_effort(A: np.ndarray, b: np.ndarray, R_inv: np.ndarray) -> float:
    """Effort to merge point b into cluster A: the growth in weighted
    within-cluster squared error, in closed form k/(k+1) d(b, mu_A)^2.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    k = A.shape[0]
    if k < 2:
        raise ValueError("cluster A needs at least 2 rows")
    dv = b - A.mean(axis=0)
    return float(k / (k + 1.0) * dv @ R_inv @ dv)


def ward_effort_sse(A: np.ndarray, b: np.ndarray,
                    R_inv: np.ndarray) -> float:
    """Same effort from first principles: SSE of the union minus SSE
    of A, each summed around its own centroid. Slow reference route.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)

    def sse(rows):
        mu = rows.mean(axis=0)
        dv = rows - mu
        return float(np.einsum("nd,de,ne->", dv, R_inv, dv))

    union = np.vstack([A, b[None, :]])
    return sse(union) - sse(A)


def window_efforts(X: np.ndarray, R_inv: np.ndarray) -> np.ndarray:
    """Merge efforts for a batch of windows (n, m, d): cluster A is
    each window's first m-1 frames, b its last frame."""
    m = X.shape[1]
    if m < 3:
        raise ValueError("windows need at least 3 frames")
    diffs = X[:, -1, :] - X[:, :-1, :].mean(axis=1)
    scale = (m - 1.0) / m
    return scale * np.einsum("nd,de,ne->n", diffs, R_inv, diffs)


def dcor_matrix(frames: np.ndarray) -> np.ndarray:
    """Pairwise distance correlations between feature dimensions."""
    d = frames.shape[1]
    R = np.eye(d)
    for i in range(d):
        for j in range(i + 1, d):
            R[i, j] = R[j, i] = distance_correlation(frames[:, i],
                                                     frames[:, j])
    return R


def regularized_inverse(R: np.ndarray, lam: float = DEFAULT_LAMBDA
                        ) -> np.ndarray:
    try:
        inv = np.linalg.inv(R + lam * np.eye(R.shape[0]))
    except np.linalg.LinAlgError as exc:
        raise SingularR(f"correlation matrix not invertible: {exc}")
    if not np.all(np.isfinite(inv)):
        raise SingularR("correlation matrix inverse is not finite")
    return 0.5 * (inv + inv.T)


@dataclass
class NnModel:
    """Minimum-variance detector: feature correlation metric plus the
    largest effort seen on safe training windows."""

    R: np.ndarray
    R_inv: np.ndarray
    threshold: float
    n_window: int
    scaler: ScalerParams


def nn_train(X_safe: np.ndarray, lam: float = DEFAULT_LAMBDA,
             scaler: ScalerParams | None = None) -> NnModel:
    """Fit the detector on safe windows only (raw, unscaled).

    The feature metric comes from pairwise distance correlations over
    the safe frames; the threshold is the maximum merge effort over the
    same windows, so the training set itself never fires.
    """
    X_safe = np.asarray(X_safe, dtype=float)
    if X_safe.ndim != 3:
        raise ValueError("expected windows shaped (n, m, d)")
    if X_safe.shape[0] < 2:
        raise InsufficientData(
            f"need at least 2 safe windows, got {X_safe.shape[0]}")
    if scaler is None:
        scaler = fit_scaler(X_safe)
    Xs = apply_scaler(scaler, X_safe)
    frames = Xs.reshape(-1, Xs.shape[-1])
    R = dcor_matrix(frames)
    R_inv = regularized_inverse(R, lam)
    efforts = window_efforts(Xs, R_inv)
    return NnModel(R=R, R_inv=R_inv, threshold=float(efforts.max()),
                   n_window=int(X_safe.shape[1]), scaler=scaler)


def nn_decision_values(model: NnModel, X: np.ndarray) -> np.ndarray:
    """Merge efforts of raw windows (n, m, d) under the model."""
    Xs = apply_scaler(model.scaler, np.asarray(X, dtype=float))
    return window_efforts(Xs, model.R_inv)


def nn_score(model: NnModel, window: np.ndarray):
    """One raw window -> (effort, faulty?). Ties go to safe."""
    effort = float(nn_decision_values(model, window[None])[0])
    return effort, effort > model.threshold


@_jit
def _smo_solve(X, sq, y, C, gamma, tol, max_iter, cache,
               slot_of, sample_of, stamp):
    """Pairwise working-set dual ascent with an LRU kernel-row cache.

    cache (slots, n) plus its index arrays may carry rows from an
    earlier call on the same X and gamma; they are reused and updated
    in place. Returns (alpha, bias, iterations, kkt_gap).
    """
    n = X.shape[0]
    slots = cache.shape[0]
    alpha = np.zeros(n)
    grad = np.full(n, -1.0)
    tick = np.int64(0)
    for s in range(slots):
        if sample_of[s] >= 0 and stamp[s] > tick:
            tick = stamp[s]

    it = 0
    gap = np.inf
    up_best = -np.inf
    low_best = np.inf
    while it < max_iter:
        # maximal violating pair on y*grad over the feasible directions
        up_best = -np.inf
        low_best = np.inf
        i = -1
        j = -1
        for t in range(n):
            v = -y[t] * grad[t]
            if (y[t] > 0 and alpha[t] < C) or (y[t] < 0 and alpha[t] > 0):
                if v > up_best:
                    up_best = v
                    i = t
            if (y[t] > 0 and alpha[t] > 0) or (y[t] < 0 and alpha[t] < C):
                if v < low_best:
                    low_best = v
                    j = t
        gap = up_best - low_best
        if gap <= tol or i < 0 or j < 0:
            break

        # fetch kernel rows i and j, computing on cache miss
        row_i = np.empty(0)
        row_j = np.empty(0)
        for pick in range(2):
            t = i if pick == 0 else j
            s = slot_of[t]
            if s < 0:
                oldest = np.int64(2**62)
                s = 0
                for c in range(slots):
                    if sample_of[c] < 0:
                        s = c
                        oldest = -1
                        break
                    if stamp[c] < oldest:
                        oldest = stamp[c]
                        s = c
                if sample_of[s] >= 0:
                    slot_of[sample_of[s]] = -1
                prod = X @ X[t]
                for c in range(n):
                    cache[s, c] = np.exp(-gamma * (sq[c] + sq[t]
                                                   - 2.0 * prod[c]))
                sample_of[s] = t
                slot_of[t] = s
            tick += 1
            stamp[s] = tick
            if pick == 0:
                row_i = cache[s]
            else:
                row_j = cache[s]

        eta = row_i[i] + row_j[j] - 2.0 * row_i[j]
        if eta < 1e-12:
            eta = 1e-12
        delta = gap / eta
        # clip to the box along the feasible direction
        if y[i] > 0:
            if delta > C - alpha[i]:
                delta = C - alpha[i]
        else:
            if delta > alpha[i]:
                delta = alpha[i]
        if y[j] > 0:
            if delta > alpha[j]:
                delta = alpha[j]
        else:
            if delta > C - alpha[j]:
                delta = C - alpha[j]

        alpha[i] += y[i] * delta
        alpha[j] -= y[j] * delta
        for t in range(n):
            grad[t] += y[t] * delta * (row_i[t] - row_j[t])
        it += 1

    # bias from the violating-pair bounds; free vectors pin it exactly
    bias = 0.5 * (up_best + low_best)
    return alpha, bias, it, gap


class KernelCache:
    """Reusable LRU row cache for one scaled design matrix and gamma.

    Training several label vectors against the same windows (the lead
    time grid) shares kernel rows across solves.
    """

    def __init__(self, X_flat: np.ndarray, gamma: float,
                 max_bytes: int = 1 << 30):
        self.X = np.ascontiguousarray(X_flat, dtype=float)
        self.sq = np.einsum("np,np->n", self.X, self.X)
        self.gamma = float(gamma)
        n = self.X.shape[0]
        slots = max(2, min(n, int(max_bytes // max(1, 8 * n))))
        self.rows = np.zeros((slots, n))
        self.slot_of = np.full(n, -1, dtype=np.int64)
        self.sample_of = np.full(slots, -1, dtype=np.int64)
        self.stamp = np.zeros(slots, dtype=np.int64)


@dataclass
class SvmModel:
    """Soft-margin RBF classifier over flattened scaled windows."""

    support: np.ndarray
    coef: np.ndarray
    bias: float
    gamma: float
    C: float
    n_window: int
    dim: int
    scaler: ScalerParams
    iterations: int = 0
    kkt_gap: float = 0.0


def default_gamma(X_flat: np.ndarray) -> float:
    """1 / (p * var): var is the mean per-coordinate variance."""
    p = X_flat.shape[1]
    var = float(X_flat.var(axis=0).mean())
    if var <= 0.0:
        var = 1.0
    return 1.0 / (p * var)


def svm_train(X: np.ndarray, y: np.ndarray, C: float = DEFAULT_C,
              gamma: float | None = None, tol: float = DEFAULT_TOL,
              max_iter: int = DEFAULT_MAX_ITER,
              scaler: ScalerParams | None = None,
              cache: KernelCache | None = None) -> SvmModel:
    """Train on raw windows (n, m, d) with labels in {-1, +1}.

    A prebuilt KernelCache may be passed to share kernel rows across
    repeated trainings on the same windows; it must have been built
    from the identically scaled flattened X and the same gamma.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 3:
        raise ValueError("expected windows shaped (n, m, d)")
    if not (np.any(y > 0) and np.any(y < 0)):
        raise ValueError("training set needs both labels")
    if scaler is None:
        scaler = fit_scaler(X)
    Xs = apply_scaler(scaler, X)
    flat = np.ascontiguousarray(Xs.reshape(Xs.shape[0], -1))
    if gamma is None:
        gamma = default_gamma(flat)
    if cache is None:
        cache = KernelCache(flat, gamma)
    else:
        if cache.X.shape != flat.shape or cache.gamma != float(gamma):
            raise ValueError("kernel cache does not match this training set")
    alpha, bias, iters, gap = _smo_solve(
        cache.X, cache.sq, y, float(C), float(gamma), float(tol),
        int(max_iter), cache.rows, cache.slot_of, cache.sample_of,
        cache.stamp)
    if gap > tol:
        raise NoConvergence(
            f"working-set solver stopped after {iters} iterations "
            f"with KKT violation {gap:.3e} > tol {tol:.1e}")
    sv = alpha > 1e-12 * C
    return SvmModel(support=flat[sv].copy(),
                    coef=(alpha[sv] * y[sv]).copy(), bias=float(bias),
                    gamma=float(gamma), C=float(C),
                    n_window=int(X.shape[1]), dim=int(X.shape[2]),
                    scaler=scaler, iterations=int(iters),
                    kkt_gap=float(gap))


def svm_decision_values(model: SvmModel, X: np.ndarray) -> np.ndarray:
    """f(X) for raw windows (n, m, d); faulty means f < 0."""
    Xs = apply_scaler(model.scaler, np.asarray(X, dtype=float))
    flat = Xs.reshape(Xs.shape[0], -1)
    if model.support.shape[0] == 0:
        return np.full(flat.shape[0], model.bias)
    sq_sv = np.einsum("np,np->n", model.support, model.support)
    sq_x = np.einsum("np,np->n", flat, flat)
    d2 = sq_sv[:, None] + sq_x[None, :] - 2.0 * (model.support @ flat.T)
    K = np.exp(-model.gamma * np.maximum(d2, 0.0))
    return model.coef @ K + model.bias


def svm_score(model: SvmModel, window: np.ndarray):
    """One raw window -> (decision value, faulty?). Ties go to safe."""
    f = float(svm_decision_values(model, window[None])[0])
    return f, f < 0.0


def svm_qp_oracle(K: np.ndarray, y: np.ndarray, C: float,
                  max_iter: int = 200_000, step: float | None = None):
    """Projected-gradient reference solver for the SVM dual.

    Minimizes 0.5 a'Qa - sum(a) over the box [0, C] intersected with
    y'a = 0, projecting by bisection on the equality multiplier. Slow
    and simple; exists purely as an independent check of the
    working-set solver on small problems. Returns (alpha, bias).
    """
    y = np.asarray(y, dtype=float)
    Q = K * np.outer(y, y)
    n = y.size
    if step is None:
        step = 1.0 / max(np.linalg.eigvalsh(Q).max(), 1e-12)

    def project(v):
        # alpha = clip(v - nu*y, 0, C) with nu chosen so y'alpha = 0
        lo, hi = -1e12, 1e12
        for _ in range(200):
            nu = 0.5 * (lo + hi)
            a = np.clip(v - nu * y, 0.0, C)
            s = y @ a
            if s > 0:
                lo = nu
            else:
                hi = nu
        nu = 0.5 * (lo + hi)
        return np.clip(v - nu * y, 0.0, C)

    alpha = project(np.zeros(n))
    for _ in range(max_iter):
        grad = Q @ alpha - 1.0
        new = project(alpha - step * grad)
        if np.max(np.abs(new - alpha)) < 1e-14:
            alpha = new
            break
        alpha = new

    grad = Q @ alpha - 1.0
    free = (alpha > 1e-8 * C) & (alpha < C * (1 - 1e-8))
    if free.any():
        bias = float(np.mean(-y[free] * grad[free]))
    else:
        up = [(-y[t] * grad[t]) for t in range(n)
              if (y[t] > 0 and alpha[t] < C) or (y[t] < 0 and alpha[t] > 0)]
        low = [(-y[t] * grad[t]) for t in range(n)
               if (y[t] > 0 and alpha[t] > 0) or (y[t] < 0 and alpha[t] < C)]
        bias = 0.5 * (max(up) + min(low)) if up and low else 0.0
    return alpha, bias


def dual_objective(K: np.ndarray, y: np.ndarray,
                   alpha: np.ndarray) -> float:
    y = np.asarray(y, dtype=float)
    Q = K * np.outer(y, y)
    return float(0.5 * alpha @ Q @ alpha - alpha.sum())


def monitor(verdicts, n_monitor: int = 1, fire_threshold: int = 1,
            end_times=None):
    """First index (or end time) where the count of faulty verdicts
    among the last n_monitor windows reaches fire_threshold; None if
    the stream never fires. Causal: later verdicts cannot matter.
    """
    if n_monitor < 1:
        raise ValueError("n_monitor must be at least 1")
    if not 1 <= fire_threshold <= n_monitor:
        raise ValueError("fire_threshold must be in [1, n_monitor]")
    recent = []
    for k, v in enumerate(verdicts):
        recent.append(bool(v))
        if len(recent) > n_monitor:
            recent.pop(0)
        if sum(recent) >= fire_threshold:
            return end_times[k] if end_times is not None else k
    return None


@dataclass
class LatchState:
    """Per-trajectory identifier state: abrupt latches, never resets."""

    latched: bool = False
    latch_index: int | None = None
    latch_time: float | None = None


@dataclass
class MulticlassModel:
    """Identifier over joint velocities plus one detector per fault
    type; the identifier's abrupt verdict latches the switch."""

    identifier: SvmModel
    incipient_detector: object
    abrupt_detector: object


def detector_score(model, window: np.ndarray):
    """Dispatch one raw window to whichever detector kind."""
    if isinstance(model, NnModel):
        return nn_score(model, window)
    if isinstance(model, SvmModel):
        return svm_score(model, window)
    raise TypeError(f"not a detector model: {type(model)!r}")


def detector_decision_values(model, X: np.ndarray):
    if isinstance(model, NnModel):
        return nn_decision_values(model, X)
    if isinstance(model, SvmModel):
        return svm_decision_values(model, X)
    raise TypeError(f"not a detector model: {type(model)!r}")


def detector_faulty(model, values: np.ndarray) -> np.ndarray:
    """Vector verdicts from decision values, ties toward safe."""
    if isinstance(model, NnModel):
        return values > model.threshold
    if isinstance(model, SvmModel):
        return values < 0.0
    raise TypeError(f"not a detector model: {type(model)!r}")


def multiclass_step(model: MulticlassModel, latch: LatchState,
                    window: np.ndarray, velocity_window: np.ndarray,
                    index: int = 0, end_time: float = np.nan):
    """One streaming step of the three-detector pipeline.

    Returns (decision value, faulty?, latch). The incipient detector is
    the null hypothesis; a single abrupt verdict from the identifier
    switches to the abrupt detector for the rest of the trajectory.
    """
    if not latch.latched:
        _, is_abrupt = svm_score(model.identifier, velocity_window)
        if is_abrupt:
            latch.latched = True
            latch.latch_index = index
            latch.latch_time = end_time
    active = (model.abrupt_detector if latch.latched
              else model.incipient_detector)
    value, faulty = detector_score(active, window)
    return value, faulty, latch


@dataclass
class MulticlassTrace:
    """Batch result of streaming one trajectory through the pipeline,
    keeping every raw verdict stream for audit."""

    values: np.ndarray
    faulty: np.ndarray
    latch_index: int | None
    latch_time: float | None
    identifier_abrupt: np.ndarray
    incipient_faulty: np.ndarray
    abrupt_faulty: np.ndarray


def multiclass_stream(model: MulticlassModel, windows: np.ndarray,
                      velocity_windows: np.ndarray,
                      end_times: np.ndarray) -> MulticlassTrace:
    """Stream all windows of one trajectory through the pipeline."""
    n = windows.shape[0]
    id_vals = svm_decision_values(model.identifier, velocity_windows)
    id_abrupt = id_vals < 0.0
    inc_vals = detector_decision_values(model.incipient_detector, windows)
    abr_vals = detector_decision_values(model.abrupt_detector, windows)
    inc_faulty = detector_faulty(model.incipient_detector, inc_vals)
    abr_faulty = detector_faulty(model.abrupt_detector, abr_vals)

    fired = np.nonzero(id_abrupt)[0]
    latch_index = int(fired[0]) if fired.size else None
    values = inc_vals.copy()
    faulty = inc_faulty.copy()
    if latch_index is not None:
        values[latch_index:] = abr_vals[latch_index:]
        faulty[latch_index:] = abr_faulty[latch_index:]
    latch_time = (float(end_times[latch_index])
                  if latch_index is not None and n else None)
    return MulticlassTrace(values=values, faulty=faulty,
                           latch_index=latch_index, latch_time=latch_time,
                           identifier_abrupt=id_abrupt,
                           incipient_faulty=inc_faulty,
                           abrupt_faulty=abr_faulty)


def _scaler_arrays(prefix: str, scaler: ScalerParams) -> dict:
    return {prefix + "scaler_min": scaler.min_,
            prefix + "scaler_max": scaler.max_}


def _model_arrays(model, prefix: str = "") -> dict:
    if isinstance(model, NnModel):
        out = {prefix + "kind": np.array(KIND_NN),
               prefix + "R": model.R, prefix + "R_inv": model.R_inv,
               prefix + "threshold": np.array(model.threshold),
               prefix + "n_window": np.array(model.n_window)}
        out.update(_scaler_arrays(prefix, model.scaler))
        return out
    if isinstance(model, SvmModel):
        out = {prefix + "kind": np.array(KIND_SVM),
               prefix + "support": model.support,
               prefix + "coef": model.coef,
               prefix + "bias": np.array(model.bias),
               prefix + "gamma": np.array(model.gamma),
               prefix + "C": np.array(model.C),
               prefix + "n_window": np.array(model.n_window),
               prefix + "dim": np.array(model.dim),
               prefix + "iterations": np.array(model.iterations),
               prefix + "kkt_gap": np.array(model.kkt_gap)}
        out.update(_scaler_arrays(prefix, model.scaler))
        return out
    if isinstance(model, MulticlassModel):
        out = {prefix + "kind": np.array(KIND_MULTICLASS)}
        out.update(_model_arrays(model.identifier, prefix + "id__"))
        out.update(_model_arrays(model.incipient_detector, prefix + "inc__"))
        out.update(_model_arrays(model.abrupt_detector, prefix + "abr__"))
        return out
    raise TypeError(f"cannot serialize {type(model)!r}")


def _model_from_arrays(data, prefix: str = ""):
    kind = str(data[prefix + "kind"])
    if kind == KIND_NN:
        scaler = ScalerParams(min_=data[prefix + "scaler_min"],
                              max_=data[prefix + "scaler_max"])
        return NnModel(R=data[prefix + "R"], R_inv=data[prefix + "R_inv"],
                       threshold=float(data[prefix + "threshold"]),
                       n_window=int(data[prefix + "n_window"]),
                       scaler=scaler)
    if kind == KIND_SVM:
        scaler = ScalerParams(min_=data[prefix + "scaler_min"],
                              max_=data[prefix + "scaler_max"])
        return SvmModel(support=data[prefix + "support"],
                        coef=data[prefix + "coef"],
                        bias=float(data[prefix + "bias"]),
                        gamma=float(data[prefix + "gamma"]),
                        C=float(data[prefix + "C"]),
                        n_window=int(data[prefix + "n_window"]),
                        dim=int(data[prefix + "dim"]),
                        scaler=scaler,
                        iterations=int(data[prefix + "iterations"]),
                        kkt_gap=float(data[prefix + "kkt_gap"]))
    if kind == KIND_MULTICLASS:
        return MulticlassModel(
            identifier=_model_from_arrays(data, prefix + "id__"),
            incipient_detector=_model_from_arrays(data, prefix + "inc__"),
            abrupt_detector=_model_from_arrays(data, prefix + "abr__"))
    raise ValueError(f"unknown model kind {kind!r}")


def save_model(model, path, extra: dict | None = None) -> None:
    """Versioned container; float arrays round-trip bit-faithfully."""
    arrays = _model_arrays(model)
    arrays["format_version"] = np.array(MODEL_FORMAT_VERSION)
    arrays["extra_json"] = np.array(json.dumps(extra or {},
                                               sort_keys=True))
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_model(path):
    """Returns (model, extra dict saved alongside it)."""
    with np.load(path, allow_pickle=False) as data:
        arrays = {k: data[k] for k in data.files}
    version = int(arrays["format_version"])
    if version != MODEL_FORMAT_VERSION:
        raise ValueError(f"model format {version} not supported")
    extra = json.loads(str(arrays["extra_json"]))
    return _model_from_arrays(arrays), extra
