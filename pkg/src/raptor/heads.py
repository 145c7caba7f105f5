"""Lightweight predictors over frozen embeddings, plus the metric suite.

Classification heads are multinomial logistic regression fitted by
quasi-Newton descent with an L2 penalty chosen on the validation split.
Regression heads are a small MLP trained with mini-batch adaptive-moment
steps and checkpointed on validation score.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from . import rng
from .errors import NoPositives, NonFinite, SingleClass, TooFewSamples

DEFAULT_RATIOS = (0.6, 0.2, 0.2)
DEFAULT_PENALTY_GRID = (0.01, 0.1, 1.0, 10.0, 100.0)


@dataclass(frozen=True)
class SplitPlan:
    """Deterministic train/val/test index partition."""

    seed: int
    ratios: tuple
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    @property
    def n(self):
        return len(self.train) + len(self.val) + len(self.test)


def make_split(n, ratios=DEFAULT_RATIOS, seed=0):
    """Shuffle by seed, then cut contiguously into train/val/test."""
    if n < 5:
        raise TooFewSamples(f"cannot split {n} samples")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {ratios}")
    perm = rng.permutation(seed, n)
    n_train = int(round(ratios[0] * n))
    n_val = int(round(ratios[1] * n))
    n_train = min(n_train, n - 2)
    n_val = min(n_val, n - n_train - 1)
    return SplitPlan(
        seed=seed,
        ratios=tuple(ratios),
        train=perm[:n_train],
        val=perm[n_train : n_train + n_val],
        test=perm[n_train + n_val :],
    )


# ---------------------------------------------------------------------------
# Standardization


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, x):
        x = np.asarray(x, dtype=np.float64)
        mean = x.mean(axis=0)
        std = x.std(axis=0)
        std = np.where(std > 0, std, 1.0)
        return cls(mean=mean, std=std)

    def apply(self, x):
        return (np.asarray(x, dtype=np.float64) - self.mean) / self.std


# ---------------------------------------------------------------------------
# Multinomial logistic regression


def softmax_loss_grad(packed, x, y_onehot, penalty):
    """Mean cross-entropy + penalty·‖W‖²/2 and its gradient (bias free)."""
    n, dim = x.shape
    n_classes = y_onehot.shape[1]
    w = packed[: n_classes * dim].reshape(n_classes, dim)
    b = packed[n_classes * dim :]
    logits = x @ w.T + b
    logits -= logits.max(axis=1, keepdims=True)
    exp = np.exp(logits)
    denom = exp.sum(axis=1, keepdims=True)
    log_probs = logits - np.log(denom)
    loss = -(y_onehot * log_probs).sum() / n + 0.5 * penalty * float(np.square(w).sum())
    probs = exp / denom
    diff = (probs - y_onehot) / n
    grad_w = diff.T @ x + penalty * w
    grad_b = diff.sum(axis=0)
    return loss, np.concatenate([grad_w.ravel(), grad_b])


@dataclass
class LogRegModel:
    """Fitted multinomial model with its preprocessing and chosen penalty."""

    weights: np.ndarray       # (classes, dim)
    bias: np.ndarray          # (classes,)
    penalty: float
    standardizer: Standardizer
    classes: np.ndarray
    val_score: float = 0.0

    def predict_proba(self, x):
        z = self.standardizer.apply(x) @ self.weights.T + self.bias
        z -= z.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)

    def predict(self, x):
        return self.classes[np.argmax(self.predict_proba(x), axis=1)]


def _fit_logreg_once(x_std, y_onehot, penalty, tol=1e-6, max_iter=500):
    n_classes = y_onehot.shape[1]
    dim = x_std.shape[1]
    x0 = np.zeros(n_classes * dim + n_classes)
    result = minimize(
        softmax_loss_grad,
        x0,
        args=(x_std, y_onehot, penalty),
        method="L-BFGS-B",
        jac=True,
        options={"maxiter": max_iter, "gtol": tol, "ftol": 0.0},
    )
    if not np.isfinite(result.fun) or not np.isfinite(result.x).all():
        raise NonFinite(f"optimizer diverged at penalty {penalty}")
    w = result.x[: n_classes * dim].reshape(n_classes, dim)
    b = result.x[n_classes * dim :]
    return w, b


def fit_logreg_arrays(x_train, y_train, x_val, y_val, grid=DEFAULT_PENALTY_GRID):
    """Fit one model per penalty; keep the best validation macro AUROC."""
    classes = np.unique(y_train)
    if classes.size < 2:
        raise SingleClass("training labels contain a single class")
    std = Standardizer.fit(x_train)
    xs = std.apply(x_train)
    onehot = (np.asarray(y_train)[:, None] == classes[None, :]).astype(np.float64)
    best = None
    for penalty in grid:
        w, b = _fit_logreg_once(xs, onehot, penalty)
        model = LogRegModel(
            weights=w, bias=b, penalty=float(penalty), standardizer=std, classes=classes
        )
        if x_val is not None and len(x_val):
            probs = model.predict_proba(x_val)
            try:
                score = auroc_macro(probs, np.asarray(y_val), classes)
            except SingleClass:
                # degenerate validation split; fall back to accuracy
                score = accuracy(probs, np.asarray(y_val), classes)
        else:
            score = 0.0
        if best is None or score > best.val_score:
            model.val_score = score
            best = model
    return best


def fit_logreg(x, y, grid=DEFAULT_PENALTY_GRID, split=None):
    """Grid-fit on the plan's train split, select on its validation split."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y)
    if split is None:
        return fit_logreg_arrays(x, y, None, None, grid)
    return fit_logreg_arrays(
        x[split.train], y[split.train], x[split.val], y[split.val], grid
    )


# ---------------------------------------------------------------------------
# MLP regressor


@dataclass(frozen=True)
class MlpConfig:
    hidden: int = 256
    learning_rate: float = 1e-3
    batch_size: int = 32
    max_epochs: int = 50
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5
    seed: int = 0


@dataclass
class MlpModel:
    params: dict
    running_mean: np.ndarray
    running_var: np.ndarray
    standardizer: Standardizer
    config: MlpConfig
    best_val_score: float
    epochs_run: int

    def predict(self, x):
        h = self.standardizer.apply(x)
        p = self.params
        z1 = h @ p["w1"] + p["b1"]
        z1n = (z1 - self.running_mean) / np.sqrt(self.running_var + self.config.bn_eps)
        a1 = np.maximum(p["gamma"] * z1n + p["beta"], 0.0)
        a2 = np.maximum(a1 @ p["w2"] + p["b2"], 0.0)
        return a2 @ p["w3"] + p["b3"]


def mlp_init(n_in, n_out, config):
    """He-scaled weights from the deterministic stream."""
    h = config.hidden

    def gauss(key, rows, cols, scale):
        flat = rng.gaussian(rng.derive_seed(config.seed, 17, key), rows * cols) * scale
        return flat.reshape(rows, cols)

    return {
        "w1": gauss(1, n_in, h, np.sqrt(2.0 / n_in)),
        "b1": np.zeros(h),
        "gamma": np.ones(h),
        "beta": np.zeros(h),
        "w2": gauss(2, h, h, np.sqrt(2.0 / h)),
        "b2": np.zeros(h),
        "w3": gauss(3, h, n_out, np.sqrt(2.0 / h)),
        "b3": np.zeros(n_out),
    }


def mlp_forward_backward(params, xb, yb, bn_eps=1e-5):
    """MSE loss, gradients, and the batch BN statistics (training mode)."""
    n = xb.shape[0]
    z1 = xb @ params["w1"] + params["b1"]
    mu = z1.mean(axis=0)
    var = z1.var(axis=0)
    inv = 1.0 / np.sqrt(var + bn_eps)
    z1n = (z1 - mu) * inv
    pre1 = params["gamma"] * z1n + params["beta"]
    a1 = np.maximum(pre1, 0.0)
    z2 = a1 @ params["w2"] + params["b2"]
    a2 = np.maximum(z2, 0.0)
    out = a2 @ params["w3"] + params["b3"]

    diff = out - yb
    loss = float(np.square(diff).mean())
    dout = 2.0 * diff / diff.size

    grads = {}
    grads["w3"] = a2.T @ dout
    grads["b3"] = dout.sum(axis=0)
    da2 = dout @ params["w3"].T
    dz2 = da2 * (z2 > 0)
    grads["w2"] = a1.T @ dz2
    grads["b2"] = dz2.sum(axis=0)
    da1 = dz2 @ params["w2"].T
    dpre1 = da1 * (pre1 > 0)
    grads["gamma"] = (dpre1 * z1n).sum(axis=0)
    grads["beta"] = dpre1.sum(axis=0)
    dz1n = dpre1 * params["gamma"]
    dz1 = inv * (dz1n - dz1n.mean(axis=0) - z1n * (dz1n * z1n).mean(axis=0))
    grads["w1"] = xb.T @ dz1
    grads["b1"] = dz1.sum(axis=0)
    return loss, grads, mu, var


def fit_mlp(x, y, split, config=MlpConfig()):
    """Train with adaptive-moment steps; keep the best-validation snapshot."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if y.ndim == 1:
        y = y[:, None]
    std = Standardizer.fit(x[split.train])
    x_train = std.apply(x[split.train])
    y_train = y[split.train]
    x_val = std.apply(x[split.val])
    y_val = y[split.val]
    n_train, n_in = x_train.shape
    n_out = y.shape[1]

    params = mlp_init(n_in, n_out, config)
    running_mean = np.zeros(config.hidden)
    running_var = np.ones(config.hidden)
    moment1 = {k: np.zeros_like(v) for k, v in params.items()}
    moment2 = {k: np.zeros_like(v) for k, v in params.items()}
    beta1, beta2, adam_eps = 0.9, 0.999, 1e-8
    step = 0

    best_params = {k: v.copy() for k, v in params.items()}
    best_stats = (running_mean.copy(), running_var.copy())
    best_score = -np.inf
    epochs_run = 0

    for epoch in range(config.max_epochs):
        order = rng.permutation(rng.derive_seed(config.seed, 23, epoch), n_train)
        for lo in range(0, n_train, config.batch_size):
            batch = order[lo : lo + config.batch_size]
            if len(batch) < 2:
                continue  # BN needs batch variance
            loss, grads, mu, var = mlp_forward_backward(
                params, x_train[batch], y_train[batch], config.bn_eps
            )
            if not np.isfinite(loss):
                raise NonFinite(f"loss diverged at epoch {epoch}")
            m = config.bn_momentum
            running_mean = (1 - m) * running_mean + m * mu
            running_var = (1 - m) * running_var + m * var
            step += 1
            for key in params:
                g = grads[key]
                moment1[key] = beta1 * moment1[key] + (1 - beta1) * g
                moment2[key] = beta2 * moment2[key] + (1 - beta2) * g * g
                m_hat = moment1[key] / (1 - beta1 ** step)
                v_hat = moment2[key] / (1 - beta2 ** step)
                params[key] = params[key] - config.learning_rate * m_hat / (
                    np.sqrt(v_hat) + adam_eps
                )
        epochs_run = epoch + 1
        snapshot = MlpModel(
            params=params,
            running_mean=running_mean,
            running_var=running_var,
            standardizer=Standardizer(mean=np.zeros(n_in), std=np.ones(n_in)),
            config=config,
            best_val_score=0.0,
            epochs_run=epochs_run,
        )
        val_pred = snapshot.predict(x_val)
        score = r2_mean(val_pred, y_val)
        if score > best_score:
            best_score = score
            best_params = {k: v.copy() for k, v in params.items()}
            best_stats = (running_mean.copy(), running_var.copy())

    return MlpModel(
        params=best_params,
        running_mean=best_stats[0],
        running_var=best_stats[1],
        standardizer=std,
        config=config,
        best_val_score=float(best_score),
        epochs_run=epochs_run,
    )


# ---------------------------------------------------------------------------
# Metrics


def auroc(scores, labels):
    """Rank probability that a positive outranks a negative (ties count ½)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClass("need both classes to rank")
    _, inverse, counts = np.unique(scores, return_inverse=True, return_counts=True)
    ends = np.cumsum(counts)
    starts = ends - counts + 1
    ranks = ((starts + ends) / 2.0)[inverse]
    pos_rank_sum = ranks[labels].sum()
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def auroc_macro(scores, labels, classes=None):
    """One-vs-rest mean AUROC; classes missing a side are skipped."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim == 1:
        return auroc(scores, labels)
    if classes is None:
        classes = np.unique(labels)
    values = []
    for idx, cls in enumerate(classes):
        mask = np.asarray(labels) == cls
        if 0 < mask.sum() < mask.size:
            values.append(auroc(scores[:, idx], mask))
    if not values:
        raise SingleClass("no class has both positives and negatives")
    return float(np.mean(values))


def auroc_micro(scores, labels, classes=None):
    """AUROC over the pooled (sample, class) decision matrix."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim == 1:
        return auroc(scores, labels)
    if classes is None:
        classes = np.unique(labels)
    onehot = np.asarray(labels)[:, None] == np.asarray(classes)[None, :]
    return auroc(scores.ravel(), onehot.ravel())


def aupr(scores, labels, averaging="macro"):
    """Area under the precision-recall step curve.

    1-D scores are treated as binary; (n, classes) scores are averaged
    one-vs-rest ("macro") or over pooled decisions ("micro").
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim > 1:
        if averaging == "macro":
            return aupr_macro(scores, labels)
        if averaging == "micro":
            return aupr_micro(scores, labels)
        raise ValueError(f"unknown averaging {averaging!r}")
    labels = np.asarray(labels).astype(bool)
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise NoPositives("precision-recall needs a positive")
    desc = np.argsort(scores, kind="mergesort")[::-1]
    s = scores[desc]
    hits = labels[desc].astype(np.float64)
    tp = np.cumsum(hits)
    found = np.arange(1, labels.size + 1, dtype=np.float64)
    boundary = np.nonzero(np.diff(s))[0]
    cut = np.concatenate([boundary, [labels.size - 1]])
    recall = tp[cut] / n_pos
    precision = tp[cut] / found[cut]
    prev_recall = np.concatenate([[0.0], recall[:-1]])
    return float(((recall - prev_recall) * precision).sum())


def aupr_macro(scores, labels, classes=None):
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim == 1:
        return aupr(scores, labels)
    if classes is None:
        classes = np.unique(labels)
    values = []
    for idx, cls in enumerate(classes):
        mask = np.asarray(labels) == cls
        if mask.any():
            values.append(aupr(scores[:, idx], mask))
    if not values:
        raise NoPositives("no class has a positive")
    return float(np.mean(values))


def aupr_micro(scores, labels, classes=None):
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim == 1:
        return aupr(scores, labels)
    if classes is None:
        classes = np.unique(labels)
    onehot = np.asarray(labels)[:, None] == np.asarray(classes)[None, :]
    return aupr(scores.ravel(), onehot.ravel())


def accuracy(scores, labels, classes=None):
    scores = np.asarray(scores)
    if scores.ndim == 1:
        predicted = (scores >= 0.5).astype(int)
        return float((predicted == np.asarray(labels).astype(int)).mean())
    if classes is None:
        classes = np.unique(labels)
    predicted = np.asarray(classes)[np.argmax(scores, axis=1)]
    return float((predicted == np.asarray(labels)).mean())


def pearson_r2(pred, target):
    """Squared Pearson correlation; 0 when either side is constant."""
    a = np.asarray(pred, dtype=np.float64).ravel()
    b = np.asarray(target, dtype=np.float64).ravel()
    if a.size < 2:
        raise ValueError("need at least two observations")
    da = a - a.mean()
    db = b - b.mean()
    var_a = float(da @ da)
    var_b = float(db @ db)
    if var_a == 0.0 or var_b == 0.0:
        return 0.0
    cov = float(da @ db)
    return min(cov * cov / (var_a * var_b), 1.0)


def r2_mean(pred, target):
    pred = np.atleast_2d(np.asarray(pred, dtype=np.float64).T).T
    target = np.atleast_2d(np.asarray(target, dtype=np.float64).T).T
    return float(np.mean([pearson_r2(pred[:, i], target[:, i]) for i in range(target.shape[1])]))


@dataclass
class MetricReport:
    """Full metric set; classification and regression fields as applicable."""

    auroc_macro: float | None = None
    auroc_micro: float | None = None
    accuracy: float | None = None
    aupr_macro: float | None = None
    aupr_micro: float | None = None
    r2_per_target: list = field(default_factory=list)
    r2_mean: float | None = None

    def as_dict(self):
        return {
            "auroc_macro": self.auroc_macro,
            "auroc_micro": self.auroc_micro,
            "accuracy": self.accuracy,
            "aupr_macro": self.aupr_macro,
            "aupr_micro": self.aupr_micro,
            "r2_per_target": list(self.r2_per_target),
            "r2_mean": self.r2_mean,
        }


def classification_report(probs, labels, classes=None):
    if classes is None:
        classes = np.unique(labels)
    return MetricReport(
        auroc_macro=auroc_macro(probs, labels, classes),
        auroc_micro=auroc_micro(probs, labels, classes),
        accuracy=accuracy(probs, labels, classes),
        aupr_macro=aupr_macro(probs, labels, classes),
        aupr_micro=aupr_micro(probs, labels, classes),
    )


def regression_report(pred, target):
    pred = np.atleast_2d(np.asarray(pred, dtype=np.float64).T).T
    target = np.atleast_2d(np.asarray(target, dtype=np.float64).T).T
    per_target = [pearson_r2(pred[:, i], target[:, i]) for i in range(target.shape[1])]
    return MetricReport(r2_per_target=per_target, r2_mean=float(np.mean(per_target)))


# ---------------------------------------------------------------------------
# Data-scarcity curves


def scarcity_curve(x, y, sizes=(10, 50, 100, 200, 500), repeats=5, seed=0,
                   grid=DEFAULT_PENALTY_GRID, split=None):
    """AUROC distribution per training-subset size on a fixed test split."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y)
    plan = split if split is not None else make_split(len(y), seed=seed)
    pool = plan.train
    if max(sizes) > len(pool):
        raise TooFewSamples(
            f"largest size {max(sizes)} exceeds the {len(pool)}-sample train pool"
        )
    rows = []
    for size in sizes:
        aucs = []
        for rep in range(repeats):
            if size >= len(pool):
                sub = pool
            else:
                pick = rng.choice(rng.derive_seed(seed, 31, size, rep), len(pool), size)
                sub = pool[pick]
            if np.unique(y[sub]).size < 2:
                continue  # degenerate draw; skip rather than fail the size
            model = fit_logreg_arrays(x[sub], y[sub], x[plan.val], y[plan.val], grid)
            probs = model.predict_proba(x[plan.test])
            aucs.append(auroc_macro(probs, y[plan.test], model.classes))
        aucs = np.asarray(aucs, dtype=np.float64)
        rows.append(
            {
                "size": int(size),
                "n_fits": int(aucs.size),
                "median_auc": float(np.median(aucs)) if aucs.size else float("nan"),
                "lo95": float(np.percentile(aucs, 2.5)) if aucs.size else float("nan"),
                "hi95": float(np.percentile(aucs, 97.5)) if aucs.size else float("nan"),
            }
        )
    return rows
