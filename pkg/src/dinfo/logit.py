"""Multinomial logistic models with shrinkage toward a low-variance target.

A model predicts a quantized class from lagged regressors.  The maximum
likelihood coefficients are combined with a target matrix (every class row
equal to one vector ``t``) as ``beta = lambda*target + (1-lambda)*beta_ml``;
because the target is identical across classes it cancels in the softmax,
so shrinking is exactly a flattening of the ML logits toward the uniform
distribution.  The mixing weight is chosen by minimizing a bootstrap
estimate of the estimator's mean squared error.

The batched solver at the bottom fits many resampled datasets in one call;
bootstrap and permutation loops elsewhere in the package route through it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    BadInput,
    BadLambda,
    DegenerateColumn,
    EmptyInput,
    NumericalError,
    ShapeError,
    TooFewTrials,
    TooShort,
)
from .signals import FeatureSequence, QuantizedSequence

COEF_CAP = 30.0
GRAD_TOL = 1e-6
MAX_ITER = 1000

LAMBDA_GRID_POINTS = 21
MIN_BOOTSTRAP_REPS = 20

# full Newton below this many free parameters, per-class block Newton above
_FULL_NEWTON_MAX_PARAMS = 64


@dataclass(frozen=True)
class ClassDistribution:
    """A probability vector over the model's classes."""

    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float).ravel()
        object.__setattr__(self, "probs", probs)
        if probs.size == 0:
            raise EmptyInput("empty distribution")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-9:
            raise BadInput("probabilities must be nonnegative and sum to 1")


@dataclass(frozen=True)
class ConditioningDesign:
    """Lagged-regressor rows for conditioning a class sequence.

    Row m holds (1, y_m, y_{m-1}, ..., y_{m-order}) when ``includes_current``
    and (1, y_{m-1}, ..., y_{m-order}) otherwise; the first ``order``
    time indices have incomplete lags and are dropped.
    """

    rows: np.ndarray
    order: int
    includes_current: bool

    def __post_init__(self):
        rows = np.ascontiguousarray(self.rows, dtype=float)
        object.__setattr__(self, "rows", rows)
        if rows.ndim != 2:
            raise ShapeError("design rows must be 2-D")
        expected = self.order + 2 if self.includes_current else self.order + 1
        if rows.shape[1] != expected:
            raise ShapeError(
                f"row width {rows.shape[1]} != expected {expected} for order "
                f"{self.order} (includes_current={self.includes_current})"
            )

    @property
    def n_rows(self) -> int:
        return self.rows.shape[0]

    @property
    def width(self) -> int:
        return self.rows.shape[1]


@dataclass(frozen=True)
class ShrinkageLogitModel:
    """ML coefficients, shrinkage target, and their convex combination.

    ``beta = lambda_ * target + (1 - lambda_) * beta_ml`` holds elementwise
    (validated to 1e-12); every row of ``target`` is the same vector.
    """

    beta_ml: np.ndarray
    target: np.ndarray
    lambda_: float
    beta: np.ndarray
    class_count: int
    regressor_dim: int

    def __post_init__(self):
        for name in ("beta_ml", "target", "beta"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), float))
        if not 0.0 <= self.lambda_ <= 1.0:
            raise BadLambda(f"lambda {self.lambda_} outside [0, 1]")
        shape = (self.class_count, self.regressor_dim)
        if self.beta_ml.shape != shape or self.target.shape != shape or self.beta.shape != shape:
            raise ShapeError(f"coefficient matrices must have shape {shape}")
        combined = self.lambda_ * self.target + (1.0 - self.lambda_) * self.beta_ml
        if np.max(np.abs(combined - self.beta)) > 1e-12:
            raise BadInput("beta is not the stated convex combination")

    @classmethod
    def combine(
        cls, beta_ml: np.ndarray, target_vector: np.ndarray, lambda_: float
    ) -> "ShrinkageLogitModel":
        """Build the model from ML coefficients and the shared target vector."""
        beta_ml = np.asarray(beta_ml, dtype=float)
        k, d = beta_ml.shape
        target = np.tile(np.asarray(target_vector, dtype=float), (k, 1))
        beta = shrink(beta_ml, target, lambda_)
        return cls(beta_ml, target, lambda_, beta, k, d)


def build_design(y, order: int, includes_current: bool) -> ConditioningDesign:
    """Build the lagged design for one conditioning channel.

    ``y`` is a FeatureSequence or 1-D array.  A sequence of length n yields
    n - order rows (times m = order .. n-1, zero-based).

    Raises TooShort when the sequence has no complete lag window.
    """
    values = y.values if isinstance(y, FeatureSequence) else np.asarray(y, float).ravel()
    if order < 1:
        raise BadInput("order must be >= 1")
    n = values.size
    if n <= order:
        raise TooShort(f"sequence length {n} needs more than order={order} samples")
    # windows[m - order] = (y_m, y_{m-1}, ..., y_{m-order})
    windows = np.lib.stride_tricks.sliding_window_view(values, order + 1)[:, ::-1]
    lagged = windows if includes_current else windows[:, 1:]
    rows = np.concatenate([np.ones((n - order, 1)), lagged], axis=1)
    return ConditioningDesign(rows, order, includes_current)


def fit_ml(x: QuantizedSequence, design: ConditioningDesign) -> np.ndarray:
    """Maximum-likelihood softmax coefficients for classes given the design.

    The last class row is pinned to zero for identifiability and every
    coefficient is capped at magnitude 30 so separable data cannot push the
    optimum to infinity.  Returns the full (class_count, width) matrix.
    """
    classes = x.symbols
    if design.n_rows == 0 or classes.size == 0:
        raise EmptyInput("no rows to fit")
    if classes.size != design.n_rows:
        raise ShapeError(
            f"{classes.size} class labels vs {design.n_rows} design rows"
        )
    if not np.all(np.isfinite(design.rows)):
        raise BadInput("design contains non-finite values")
    beta, _ = fit_softmax_batch(
        design.rows[None], classes[None], x.alphabet_size
    )
    return beta[0]


def shrinkage_target(design: ConditioningDesign) -> np.ndarray:
    """Target coefficient vector: 1/std of each regressor column.

    The intercept column gets 0 so shrinkage never pushes toward a biased
    base rate.  A zero-variance non-intercept column is an error.
    """
    rows = design.rows
    if rows.shape[0] < 2:
        raise TooShort("need at least 2 rows to estimate column variances")
    var = rows.var(axis=0, ddof=1)
    t = np.zeros(rows.shape[1])
    if np.any(var[1:] <= 0):
        raise DegenerateColumn("non-intercept regressor column has zero variance")
    t[1:] = 1.0 / np.sqrt(var[1:])
    return t


def shrink(beta_ml: np.ndarray, target: np.ndarray, lambda_: float) -> np.ndarray:
    """Convex combination lambda*target + (1-lambda)*beta_ml."""
    beta_ml = np.asarray(beta_ml, dtype=float)
    target = np.asarray(target, dtype=float)
    if beta_ml.shape != target.shape:
        raise ShapeError("beta_ml and target shapes differ")
    if not 0.0 <= lambda_ <= 1.0:
        raise BadLambda(f"lambda {lambda_} outside [0, 1]")
    return lambda_ * target + (1.0 - lambda_) * beta_ml


def predict(model: ShrinkageLogitModel, row) -> ClassDistribution:
    """Class probabilities for one regressor row under the combined coefficients."""
    row = np.asarray(row, dtype=float).ravel()
    if row.size != model.regressor_dim:
        raise ShapeError(f"row width {row.size} != {model.regressor_dim}")
    logits = model.beta @ row
    logits -= logits.max()
    expd = np.exp(logits)
    return ClassDistribution(expd / expd.sum())


# ---------------------------------------------------------------------------
# lambda selection
# ---------------------------------------------------------------------------


def entropy_of_logits(z: np.ndarray, lambda_: float) -> np.ndarray:
    """Per-row predictive entropy (nats) after shrinking logits by 1-lambda.

    Shrinking toward the shared target multiplies the ML logits by
    (1 - lambda); the target's own contribution is constant across classes
    and drops out of the softmax.
    """
    w = (1.0 - lambda_) * z
    w = w - w.max(axis=-1, keepdims=True)
    e = np.exp(w)
    s = e.sum(axis=-1)
    # H = ln(sum e) - sum(e * w) / sum(e)
    return np.log(s) - (e * w).sum(axis=-1) / s


def _bootstrap_indices(n: int, reps: int, seed: int) -> np.ndarray:
    """Row indices for iid resampling: replicate b uses stream seed + b."""
    out = np.empty((reps, n), dtype=np.intp)
    for b in range(reps):
        out[b] = np.random.default_rng(seed + b).integers(0, n, size=n)
    return out


class _PairFits:
    """Full-sample and replicate logits for a (past, with-current) design pair."""

    def __init__(self, classes, x_past, x_cur, class_count, reps, seed):
        n = classes.size
        self.n = n
        self.class_count = class_count
        beta_p, _ = fit_softmax_batch(x_past[None], classes[None], class_count)
        beta_c, _ = fit_softmax_batch(x_cur[None], classes[None], class_count)
        self.beta_past = beta_p[0]
        self.beta_cur = beta_c[0]
        self.z_past = x_past @ beta_p[0].T
        self.z_cur = x_cur @ beta_c[0].T
        if reps > 0:
            idx = _bootstrap_indices(n, reps, seed)
            cls_b = classes[idx]
            free = class_count - 1
            warm_p = np.broadcast_to(beta_p[0, :free], (reps, free, x_past.shape[1]))
            warm_c = np.broadcast_to(beta_c[0, :free], (reps, free, x_cur.shape[1]))
            bp, _ = fit_softmax_batch(x_past[idx], cls_b, class_count, init=warm_p)
            bc, _ = fit_softmax_batch(x_cur[idx], cls_b, class_count, init=warm_c)
            self.z_past_reps = x_past[idx] @ bp.transpose(0, 2, 1)
            self.z_cur_reps = x_cur[idx] @ bc.transpose(0, 2, 1)
        else:
            self.z_past_reps = np.empty((0, n, class_count))
            self.z_cur_reps = np.empty((0, n, class_count))

    def di_per_step(self, lambda_: float) -> float:
        h_p = entropy_of_logits(self.z_past, lambda_)
        h_c = entropy_of_logits(self.z_cur, lambda_)
        return float(np.mean(h_p - h_c))

    def replicate_di(self, lambda_: float) -> np.ndarray:
        h_p = entropy_of_logits(self.z_past_reps, lambda_)
        h_c = entropy_of_logits(self.z_cur_reps, lambda_)
        return (h_p - h_c).mean(axis=-1)


def marginal_logit_start(classes: np.ndarray, class_count: int, width: int):
    """Intercept-only warm start: class-frequency logits, zero slopes.

    Under a broken pairing the coupling vanishes, so the null optimum sits
    near the marginal class distribution; starting there cuts the
    permutation refits to a couple of Newton steps.
    """
    n = classes.size
    counts = np.bincount(classes, minlength=class_count).astype(float)
    floor = 0.5 / max(n, 1)
    freq = np.maximum(counts / max(n, 1), floor)
    logits = np.log(freq[:-1] / freq[-1])
    warm = np.zeros((class_count - 1, width))
    warm[:, 0] = np.clip(logits, -COEF_CAP, COEF_CAP)
    return warm


def null_di_distribution(
    classes: np.ndarray,
    x_past: np.ndarray,
    x_cur: np.ndarray,
    class_count: int,
    B: int,
    seed: int,
    lambda_value: float,
) -> np.ndarray:
    """Per-step DI of B pairing-permuted resamples (the no-interaction null).

    Replicate b permutes the class-to-row pairing with RNG stream seed + b,
    refits both models, and evaluates the shrunk plug-in DI.
    """
    n = classes.size
    perms = np.empty((B, n), dtype=np.intp)
    for b in range(B):
        perms[b] = np.random.default_rng(seed + b).permutation(n)
    cls_b = classes[perms]
    h = {}
    for name, x_design in (("past", x_past), ("cur", x_cur)):
        stacked = np.broadcast_to(x_design, (B, n, x_design.shape[1]))
        warm = marginal_logit_start(classes, class_count, x_design.shape[1])
        beta, _ = fit_softmax_batch(stacked, cls_b, class_count, init=warm)
        z = x_design @ beta.transpose(0, 2, 1)
        h[name] = entropy_of_logits(z, lambda_value).mean(axis=-1)
    return h["past"] - h["cur"]


def _mse_function(fits: _PairFits):
    """Bootstrap MSE estimate of the shrunk DI as a function of lambda.

    Variance is the replicate variance of the shrunk plug-in DI; the bias
    proxy is the gap between the replicate mean and the full-sample
    unshrunk (lambda = 0) estimate.
    """
    di0_full = fits.di_per_step(0.0)
    cache: dict[float, float] = {}

    def mse(lam: float) -> float:
        lam = min(max(float(lam), 0.0), 1.0)
        if lam not in cache:
            reps = fits.replicate_di(lam)
            bias = reps.mean() - di0_full
            var = float(reps.var(ddof=1)) if reps.size > 1 else 0.0
            cache[lam] = bias * bias + var
        return cache[lam]

    return mse


def _search_lambda(mse) -> tuple[float, list[tuple[float, float]]]:
    """Coarse grid then projected finite-difference descent with step halving.

    The grid brackets the global shape of the noisy bootstrap curve; the
    descent refines around the bracketed minimum and stops once the accepted
    move drops below 1e-3.  The returned lambda is the best point evaluated
    anywhere, so its MSE never exceeds the endpoints'.
    """
    curve: list[tuple[float, float]] = []
    for lam in np.linspace(0.0, 1.0, LAMBDA_GRID_POINTS):
        curve.append((float(lam), mse(float(lam))))
    best_lam, best_val = min(curve, key=lambda t: (t[1], t[0]))

    lam, val = best_lam, best_val
    h = 1e-3
    for _ in range(100):
        g = (mse(lam + h) - mse(lam - h)) / (2 * h)
        if g == 0.0:
            break
        direction = -1.0 if g > 0 else 1.0
        step = 0.05
        accepted = None
        while step >= 1e-6:
            trial = min(max(lam + direction * step, 0.0), 1.0)
            tval = mse(trial)
            curve.append((trial, tval))
            if tval < val and trial != lam:
                accepted = (trial, tval)
                break
            step /= 2.0
        if accepted is None:
            break
        delta = abs(accepted[0] - lam)
        lam, val = accepted
        if val < best_val:
            best_lam, best_val = lam, val
        if delta < 1e-3:
            break
    return best_lam, curve


def optimize_lambda(
    x: QuantizedSequence,
    designs: tuple[ConditioningDesign, ConditioningDesign],
    bootstrap_reps: int,
    seed: int,
) -> tuple[float, list[tuple[float, float]]]:
    """Pick the shrinkage weight minimizing the bootstrap MSE estimate.

    ``designs`` is the (past-only, with-current) pair, both aligned with
    ``x``.  Returns the minimizing lambda among all evaluated points plus
    the (lambda, mse) evaluations.
    """
    past, cur = designs
    if bootstrap_reps < MIN_BOOTSTRAP_REPS:
        raise TooFewTrials(f"bootstrap_reps must be >= {MIN_BOOTSTRAP_REPS}")
    if past.n_rows != cur.n_rows or past.n_rows != x.symbols.size:
        raise ShapeError("class sequence and designs must be row-aligned")
    if x.symbols.size < 4:
        raise TooFewTrials("too few rows to resample")
    fits = _PairFits(
        x.symbols, past.rows, cur.rows, x.alphabet_size, bootstrap_reps, seed
    )
    return _search_lambda(_mse_function(fits))


# ---------------------------------------------------------------------------
# batched capped-ML softmax solver
# ---------------------------------------------------------------------------


# The solver works with the K-1 free class rows only; the pinned class is
# an implicit zero logit handled inside the NLL/softmax helpers below.


def _picked_logit(z_free: np.ndarray, classes: np.ndarray) -> np.ndarray:
    b, n, fr = z_free.shape
    picked = z_free[
        np.arange(b)[:, None], np.arange(n)[None, :], np.minimum(classes, fr - 1)
    ]
    return np.where(classes < fr, picked, 0.0)


def _nll_free(z_free: np.ndarray, classes: np.ndarray) -> np.ndarray:
    """Negative log-likelihood per batch slice from free-class logits."""
    m = np.maximum(z_free.max(axis=-1), 0.0)
    s = np.exp(z_free - m[..., None]).sum(axis=-1) + np.exp(-m)
    lse = m + np.log(s)
    return (lse - _picked_logit(z_free, classes)).sum(axis=-1)


def _probs_free_and_nll(z_free: np.ndarray, classes: np.ndarray):
    """Free-class probabilities plus the NLL in one softmax pass."""
    m = np.maximum(z_free.max(axis=-1), 0.0)
    e = np.exp(z_free - m[..., None])
    s = e.sum(axis=-1) + np.exp(-m)
    p_free = e / s[..., None]
    nll = (m + np.log(s) - _picked_logit(z_free, classes)).sum(axis=-1)
    return p_free, nll


def _projected_grad(grad: np.ndarray, beta: np.ndarray, cap: float) -> np.ndarray:
    """Zero the gradient components that point out of the coefficient box."""
    pg = grad.copy()
    pg[(beta >= cap) & (grad < 0)] = 0.0
    pg[(beta <= -cap) & (grad > 0)] = 0.0
    return pg


class _GeneralKernels:
    """Linear-algebra kernels when each batch slice has its own design."""

    def __init__(self, x: np.ndarray, free: int):
        self.x = x
        self.free = free
        self.d = x.shape[2]

    def subset(self, idx) -> "_GeneralKernels":
        return _GeneralKernels(self.x[idx], self.free)

    def logits(self, bfree: np.ndarray) -> np.ndarray:
        return self.x @ bfree.transpose(0, 2, 1)

    def grad(self, resid_free: np.ndarray) -> np.ndarray:
        return resid_free.transpose(0, 2, 1) @ self.x

    def gram(self, weights: np.ndarray) -> np.ndarray:
        b = weights.shape[0]
        out = np.empty((b, self.free, self.d, self.d))
        xt = self.x.transpose(0, 2, 1)
        for c in range(self.free):
            out[:, c] = xt @ (weights[:, :, c : c + 1] * self.x)
        return out

    def cross(self, p_free: np.ndarray) -> np.ndarray:
        b, n, _ = p_free.shape
        a = (p_free[..., None] * self.x[:, :, None, :]).reshape(
            b, n, self.free * self.d
        )
        full = a.transpose(0, 2, 1) @ a
        # already laid out as (b, k, d1, j, d2)
        return full.reshape(b, self.free, self.d, self.free, self.d)


class _SharedKernels:
    """Kernels when every batch slice reuses one design matrix.

    Permutation and class-resampling fits hit this case (the batch axis of
    the regressors has stride zero); collapsing the batch into single GEMMs
    is much faster than many tiny ones.
    """

    def __init__(self, x0: np.ndarray, free: int):
        self.x0 = np.ascontiguousarray(x0)
        self.free = free
        self.d = x0.shape[1]
        self.xx = (self.x0[:, :, None] * self.x0[:, None, :]).reshape(
            x0.shape[0], -1
        )

    def subset(self, idx) -> "_SharedKernels":
        return self

    def logits(self, bfree: np.ndarray) -> np.ndarray:
        b = bfree.shape[0]
        n = self.x0.shape[0]
        z = (self.x0 @ bfree.reshape(b * self.free, self.d).T).reshape(
            n, b, self.free
        )
        return np.ascontiguousarray(z.transpose(1, 0, 2))

    def grad(self, resid_free: np.ndarray) -> np.ndarray:
        b, n, _ = resid_free.shape
        g = resid_free.transpose(0, 2, 1).reshape(b * self.free, n) @ self.x0
        return g.reshape(b, self.free, self.d)

    def gram(self, weights: np.ndarray) -> np.ndarray:
        b, n, _ = weights.shape
        g = weights.transpose(0, 2, 1).reshape(b * self.free, n) @ self.xx
        return g.reshape(b, self.free, self.d, self.d)

    def cross(self, p_free: np.ndarray) -> np.ndarray:
        b, n, _ = p_free.shape
        pp = p_free[:, :, :, None] * p_free[:, :, None, :]
        g = pp.transpose(0, 2, 3, 1).reshape(b * self.free**2, n) @ self.xx
        return g.reshape(b, self.free, self.free, self.d, self.d).transpose(
            0, 1, 3, 2, 4
        )


def _newton_direction(kern, p_free, grad):
    """Full damped Newton step from the per-batch Hessian."""
    free, d = kern.free, kern.d
    b = p_free.shape[0]
    hess = -kern.cross(p_free).reshape(b, free * d, free * d)
    idx = np.arange(free)
    view = hess.reshape(b, free, d, free, d)
    view[:, idx, :, idx, :] += kern.gram(p_free).transpose(1, 0, 2, 3)
    flat_g = grad.reshape(b, free * d)
    damp = 1e-10
    eye = np.eye(free * d)
    for _ in range(6):
        try:
            step = np.linalg.solve(hess + damp * eye, -flat_g[..., None])[..., 0]
            return step.reshape(b, free, d)
        except np.linalg.LinAlgError:
            damp = max(damp * 1e3, 1e-8)
    raise NumericalError("Newton system stayed singular under damping")


def _block_direction(kern, p_free, grad):
    """Per-class block Newton step (ignores cross-class Hessian blocks)."""
    blocks = kern.gram(p_free * (1.0 - p_free))
    blocks += 1e-9 * np.eye(kern.d)
    try:
        step = np.linalg.solve(blocks, -grad[..., None])[..., 0]
    except np.linalg.LinAlgError:
        blocks += 1e-6 * np.eye(kern.d)
        step = np.linalg.solve(blocks, -grad[..., None])[..., 0]
    return step


def fit_softmax_batch(
    x: np.ndarray,
    classes: np.ndarray,
    class_count: int,
    *,
    cap: float = COEF_CAP,
    tol: float = GRAD_TOL,
    max_iter: int = MAX_ITER,
    init: np.ndarray | None = None,
):
    """Fit softmax regressions for a batch of datasets at once.

    Parameters
    ----------
    x : (B, n, d) regressor rows per dataset.
    classes : (B, n) integer class labels in [0, class_count).
    class_count : size of the class alphabet (last class pinned to zero).
    cap : coefficient magnitude bound (separable-data guard).
    tol : convergence threshold on the projected-gradient max-norm.
    init : optional (B, class_count - 1, d) warm start for the free rows.

    Returns
    -------
    beta : (B, class_count, d) with the last class row zero.
    info : dict with per-slice iteration counts, convergence flags, and the
        per-iteration NLL trace (non-increasing by construction).
    """
    x = np.asarray(x, dtype=float)
    classes = np.asarray(classes)
    if x.ndim != 3 or classes.shape != x.shape[:2]:
        raise ShapeError("expected x (B, n, d) and classes (B, n)")
    b_total, n, d = x.shape
    if n == 0:
        raise EmptyInput("no rows to fit")
    shared = b_total > 1 and x.strides[0] == 0
    if not np.all(np.isfinite(x[0] if shared else x)):
        raise BadInput("non-finite regressors")
    if classes.size and (classes.min() < 0 or classes.max() >= class_count):
        raise BadInput("class labels outside [0, class_count)")
    free = class_count - 1
    if free == 0:
        beta = np.zeros((b_total, 1, d))
        return beta, {
            "n_iter": np.zeros(b_total, int),
            "converged": np.ones(b_total, bool),
            "nll_trace": [np.zeros(b_total)],
        }

    if init is None:
        beta = np.zeros((b_total, free, d))
    else:
        beta = np.array(np.broadcast_to(init, (b_total, free, d)), dtype=float)
        beta = np.clip(beta, -cap, cap)

    kernels = _SharedKernels(x[0], free) if shared else _GeneralKernels(x, free)
    use_full_newton = free * d <= _FULL_NEWTON_MAX_PARAMS

    nll = _nll_free(kernels.logits(beta), classes)
    converged = np.zeros(b_total, dtype=bool)
    n_iter = np.zeros(b_total, dtype=int)
    trace = [nll.copy()]

    for _ in range(max_iter):
        active = np.flatnonzero(~converged)
        if active.size == 0:
            break
        kern = kernels.subset(active)
        ca = classes[active]
        ba = beta[active]
        p_free, _ = _probs_free_and_nll(kern.logits(ba), ca)
        resid = p_free.copy()
        sub = ca < free
        bidx, nidx = np.nonzero(sub)
        resid[bidx, nidx, ca[sub]] -= 1.0
        grad = kern.grad(resid)

        pg = _projected_grad(grad, ba, cap)
        done = np.abs(pg).reshape(active.size, -1).max(axis=1) < tol
        if done.any():
            converged[active[done]] = True
            keep = ~done
            if not keep.any():
                trace.append(nll.copy())
                continue
            active = active[keep]
            kern = kernels.subset(active)
            ca, ba, p_free, grad = ca[keep], ba[keep], p_free[keep], grad[keep]

        if use_full_newton:
            step = _newton_direction(kern, p_free, grad)
        else:
            step = _block_direction(kern, p_free, grad)

        # backtracking line search on the clipped iterate; only strictly
        # improving steps are accepted, which keeps the NLL trace monotone
        t = np.ones(active.size)
        base = nll[active]
        improved = np.zeros(active.size, dtype=bool)
        # once t|grad.step| drops below NLL resolution no improvement can
        # register in float; such slices stall out immediately
        dir_deriv = np.abs((grad * step).sum(axis=(1, 2)))
        floor = 1e-12 * (1.0 + np.abs(base))
        cand = ba.copy()
        cand_nll = base.copy()
        for _ls in range(30):
            todo = np.flatnonzero(~improved & (t * dir_deriv >= floor))
            if todo.size == 0:
                break
            trial = np.clip(
                ba[todo] + t[todo, None, None] * step[todo], -cap, cap
            )
            trial_nll = _nll_free(kern.subset(todo).logits(trial), ca[todo])
            better = trial_nll < base[todo]
            sel = todo[better]
            cand[sel] = trial[better]
            cand_nll[sel] = trial_nll[better]
            improved[sel] = True
            t[todo[~better]] /= 2.0
        stalled = ~improved
        if stalled.any():
            converged[active[stalled]] = True
        beta[active] = cand
        if np.any(cand_nll > base + 1e-9 * np.abs(base)):
            raise NumericalError("log-likelihood decreased during fitting")
        nll[active] = cand_nll
        n_iter[active] += 1
        trace.append(nll.copy())

    beta_full = np.concatenate([beta, np.zeros((b_total, 1, d))], axis=1)
    return beta_full, {"n_iter": n_iter, "converged": converged, "nll_trace": trace}


def fit_softmax(
    x: np.ndarray, classes: np.ndarray, class_count: int, **kwargs
) -> np.ndarray:
    """Single-dataset convenience wrapper around fit_softmax_batch."""
    beta, _ = fit_softmax_batch(
        np.asarray(x, float)[None], np.asarray(classes)[None], class_count, **kwargs
    )
    return beta[0]
