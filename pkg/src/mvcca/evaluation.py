"""Downstream classification protocol for learned multi-view projections.

Per fold: fit the projection method on the training views, project train
and test, concatenate the per-view projections, pick the SVM ``C`` on a
held-out 20% of the training set, refit on all training samples and score
the test set.
"""

import itertools
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import cca, deep
from .data import standardize_apply, standardize_fit
from .exceptions import ConfigError, DataError, MvccaError
from .linalg import DEFAULT_EPS, pca_fit

C_GRID = (0.1, 1.0, 10.0)


class LinearSVM:
    """One-vs-rest linear classifier with the L2-regularized squared hinge loss.

    Each binary problem minimizes
    ``0.5 ||w||^2 + (C / n) sum_i max(0, 1 - y_i (w . x_i + b))^2``
    (the bias is regularized too) by Newton's method on the generalized
    Hessian, which is exact once the active set settles.
    """

    def __init__(self, C=1.0, tol=1e-10, max_iter=100):
        if not C > 0:
            raise ConfigError(f"must be > 0, got {C}", "C")
        self.C = float(C)
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y):
        """``X`` is features x n, ``y`` integer-like labels of length n."""
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y)
        if X.ndim != 2 or X.shape[1] != len(y):
            raise DataError(f"features {X.shape} do not match {len(y)} labels")
        if np.isnan(X).any():
            raise DataError("features contain NaN")
        self.classes_ = np.unique(y)
        if len(self.classes_) < 2:
            raise DataError("need at least two classes")
        Xa = np.vstack([X, np.ones((1, X.shape[1]))]).T
        self.coef_ = np.array([self._fit_binary(Xa, np.where(y == c, 1.0, -1.0))
                               for c in self.classes_])
        return self

    def _objective(self, w, Xa, t):
        slack = np.maximum(0.0, 1.0 - t * (Xa @ w))
        return 0.5 * w @ w + self.C / len(t) * (slack @ slack)

    def _fit_binary(self, Xa, t):
        n, p = Xa.shape
        scale = 2.0 * self.C / n
        w = np.zeros(p)
        f = self._objective(w, Xa, t)
        for _ in range(self.max_iter):
            margin = 1.0 - t * (Xa @ w)
            active = margin > 0
            XI = Xa[active]
            grad = w - scale * XI.T @ (margin[active] * t[active])
            if np.linalg.norm(grad) <= self.tol * max(1.0, np.linalg.norm(w)):
                break
            H = np.eye(p) + scale * XI.T @ XI
            step = -np.linalg.solve(H, grad)
            slope = grad @ step
            alpha = 1.0
            while True:
                w_new = w + alpha * step
                f_new = self._objective(w_new, Xa, t)
                if f_new <= f + 1e-4 * alpha * slope or alpha < 1e-10:
                    break
                alpha *= 0.5
            converged = f - f_new <= 1e-16 * max(1.0, abs(f))
            w, f = w_new, f_new
            if converged:
                break
        return w

    def decision_function(self, X):
        X = np.asarray(X, dtype=np.float64)
        return self.coef_[:, :-1] @ X + self.coef_[:, -1:]

    def predict(self, X):
        # argmax keeps the lowest class index on ties
        return self.classes_[np.argmax(self.decision_function(X), axis=0)]

    def score(self, X, y):
        return float(np.mean(self.predict(X) == np.asarray(y)))


@dataclass
class SplitPlan:
    seed: int
    fold: int
    train: np.ndarray
    test: np.ndarray
    ratio: float


def _stratified_pick(labels, ratio, rng):
    chosen = []
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        take = int(np.ceil(ratio * len(idx)))
        chosen.append(rng.permutation(idx)[:take])
    return np.sort(np.concatenate(chosen))


def make_splits(labels, ratio, folds, seed=0):
    """Stratified random train/test splits, one per fold.

    Every class contributes ``ceil(ratio * n_c)`` training samples; the plan
    for fold ``f`` depends only on ``(seed, f)``.
    """
    labels = np.asarray(labels)
    if not 0.0 < ratio < 1.0:
        raise ConfigError(f"must lie in (0, 1), got {ratio}", "ratio")
    if folds < 1:
        raise ConfigError(f"must be >= 1, got {folds}", "folds")
    classes, counts = np.unique(labels, return_counts=True)
    if np.any(counts < 2):
        raise DataError(f"class {classes[np.argmin(counts)]} has fewer than 2 samples")
    plans = []
    for f in range(folds):
        rng = np.random.default_rng([seed, f])
        train = _stratified_pick(labels, ratio, rng)
        test = np.setdiff1d(np.arange(len(labels)), train)
        plans.append(SplitPlan(seed, f, train, test, ratio))
    return plans


def concat_projections(Z_list):
    Z_list = [np.asarray(Z, dtype=np.float64) for Z in Z_list]
    n = Z_list[0].shape[1]
    if any(Z.shape[1] != n for Z in Z_list):
        raise DataError("projections differ in sample count")
    return np.vstack(Z_list)


METHODS = ("cca2", "mcca", "lscca", "gcca", "tcca", "dgcca", "dtcca")


@dataclass
class MethodSpec:
    """A projection method plus its preprocessing.

    ``pca`` is ``None``, ``'energy'`` (keep ``pca_energy`` of the variance) or
    ``'maxdim'`` (keep at most ``pca_max_dim`` components). ``standardize``
    z-scores every input feature with training statistics first.
    """

    name: str
    pca: str = None
    pca_energy: float = 0.95
    pca_max_dim: int = 20
    standardize: bool = False
    eps: float = DEFAULT_EPS
    als_opts: dict = field(default_factory=dict)
    train: deep.TrainConfig = field(default_factory=deep.TrainConfig)
    label: str = None

    def __post_init__(self):
        if self.name not in METHODS:
            raise ConfigError(f"unknown method {self.name!r}; choose from {METHODS}",
                              "method")
        if self.pca not in (None, "energy", "maxdim"):
            raise ConfigError(f"unknown PCA policy {self.pca!r}", "pca")
        if self.label is None:
            self.label = self.name + ("_p" if self.pca else "")


def method_spec(name, **overrides):
    """Resolve a method name; a ``_p`` suffix selects the PCA variant used for
    the baselines (20 components for TCCA, 95% energy otherwise)."""
    label = name
    if name.endswith("_p"):
        name = name[:-2]
        overrides.setdefault("pca", "maxdim" if name == "tcca" else "energy")
    return MethodSpec(name=name, label=label, **overrides)


class Preprocessor:
    """Training-set standardization and per-view PCA, replayed on new data.

    ``stats`` holds per-view ``(mean, scale)`` pairs and ``pca`` per-view
    ``(mean, P)`` pairs with ``P`` of shape q x d; either may be ``None``.
    """

    def __init__(self, stats=None, pca=None):
        self.stats = stats
        self.pca = pca

    @classmethod
    def fit(cls, spec, views):
        prep = cls(standardize_fit(views) if spec.standardize else None)
        if spec.pca:
            prep.pca = []
            for V in prep._scale(views):
                mu = V.mean(axis=1)
                P = pca_fit(V - mu[:, None],
                            energy=spec.pca_energy if spec.pca == "energy" else None,
                            max_dim=spec.pca_max_dim if spec.pca == "maxdim" else None)
                prep.pca.append((mu, P))
        return prep

    def _scale(self, views):
        return views if self.stats is None else standardize_apply(views, self.stats)

    def __call__(self, views):
        views = self._scale(views)
        if self.pca is None:
            return views
        return [P @ (V - mu[:, None]) for V, (mu, P) in zip(views, self.pca)]


def fit_method(spec, views, m, seed=0):
    """Fit ``spec`` on already-preprocessed ``views``; returns a model with
    a ``transform(views)`` method."""
    if spec.name == "cca2":
        if len(views) != 2:
            raise ConfigError("cca2 needs exactly two views", "method")
        return cca.fit_cca2(views[0], views[1], m, spec.eps)
    if spec.name in ("mcca", "lscca"):
        return cca.fit_mcca_sumcor(views, m, spec.eps)
    if spec.name == "gcca":
        return cca.fit_gcca(views, m, spec.eps)
    if spec.name == "tcca":
        return cca.fit_tcca(views, m, spec.eps, {"seed": seed, **spec.als_opts})
    cfg = replace(spec.train, seed=seed, eps=spec.eps)
    if spec.name == "dgcca":
        return deep.dgcca_fit(views, m, cfg)
    return deep.dtcca_fit(views, m, cfg)


@dataclass
class FoldResult:
    fold: int
    accuracy: float
    best_C: float


def _scale_rows(train, test):
    mu = train.mean(axis=1, keepdims=True)
    sd = train.std(axis=1, keepdims=True)
    sd = np.where(sd > 0, sd, 1.0)
    return (train - mu) / sd, (test - mu) / sd


def select_C(X, y, C_grid, seed):
    """Pick ``C`` by accuracy on a stratified 20% hold-out of ``(X, y)``."""
    rng = np.random.default_rng(seed)
    val = _stratified_pick(y, 0.2, rng)
    fit = np.setdiff1d(np.arange(len(y)), val)
    if len(np.unique(y[fit])) < 2:
        return C_grid[0]
    scores = [LinearSVM(C).fit(X[:, fit], y[fit]).score(X[:, val], y[val]) for C in C_grid]
    return C_grid[int(np.argmax(scores))]


def evaluate_fold(dataset, spec, m, plan, C_grid=C_GRID, model_seed=0):
    if dataset.labels is None:
        raise DataError("the protocol needs class labels")
    train = dataset.take(plan.train)
    test = dataset.take(plan.test)
    prep = Preprocessor.fit(spec, train.views)
    train_views = prep(train.views)
    model = fit_method(spec, train_views, m, seed=model_seed)
    Ztr = concat_projections(model.transform(train_views))
    Zte = concat_projections(model.transform(prep(test.views)))
    Ztr, Zte = _scale_rows(Ztr, Zte)
    best_C = select_C(Ztr, train.labels, C_grid, seed=[plan.seed, plan.fold, 7])
    svm = LinearSVM(best_C).fit(Ztr, train.labels)
    return FoldResult(plan.fold, svm.score(Zte, test.labels), best_C)


@dataclass
class AccuracyReport:
    accuracies: list
    mean: float
    std: float
    config: dict
    best_C: list = field(default_factory=list)

    @classmethod
    def from_folds(cls, results, config):
        acc = [r.accuracy for r in results]
        return cls(acc, float(np.mean(acc)), float(np.std(acc)), config,
                   [r.best_C for r in results])


def cell_seed(seed, fold, cell_id):
    return int(np.random.SeedSequence([seed, fold, zlib.crc32(cell_id.encode())])
               .generate_state(1)[0])


def _fold_job(args):
    return evaluate_fold(*args)


def run_protocol(dataset, method, m, ratio=0.1, folds=10, seed=0, C_grid=C_GRID,
                 n_jobs=1, views=None):
    """Mean/std test accuracy of ``method`` over stratified random splits.

    ``method`` is a :class:`MethodSpec` or a name accepted by
    :func:`method_spec`; ``views`` optionally selects a subset of views.
    """
    spec = method if isinstance(method, MethodSpec) else method_spec(method)
    if views is not None:
        dataset = dataset.select_views(views)
    plans = make_splits(dataset.labels, ratio, folds, seed)
    cell_id = f"{spec.label}|{','.join(dataset.names)}|{m}|{ratio}"
    jobs = [(dataset, spec, m, p, tuple(C_grid), cell_seed(seed, p.fold, cell_id))
            for p in plans]
    if n_jobs > 1:
        with ProcessPoolExecutor(n_jobs) as pool:
            results = list(pool.map(_fold_job, jobs))
    else:
        results = [_fold_job(j) for j in jobs]
    config = {"method": spec.label, "m": m, "views": list(dataset.names),
              "ratio": ratio, "folds": folds, "seed": seed}
    return AccuracyReport.from_folds(results, config)


def view_combinations(n_views, min_size=3, max_size=None):
    """All view subsets with ``min_size <= size <= max_size``, in order."""
    max_size = n_views if max_size is None else max_size
    return [c for size in range(min_size, max_size + 1)
            for c in itertools.combinations(range(n_views), size)]


@dataclass
class SweepRow:
    method: str
    views: tuple
    m: int
    ratio: float
    report: AccuracyReport = None
    error: str = ""

    @property
    def key(self):
        return (self.method, "-".join(self.views), int(self.m), float(self.ratio))


def sweep(dataset, methods, m_values, view_combos=None, ratios=(0.1,), folds=10,
          seed=0, C_grid=C_GRID, skip=(), on_row=None, n_jobs=1):
    """Run the protocol on every grid cell; failing cells record their error.

    ``view_combos`` is a list of view-index tuples (default: all views).
    Cells whose ``SweepRow.key`` is in ``skip`` are not run. ``on_row`` is
    called with each finished row.
    """
    if not methods:
        raise ConfigError("at least one method is required", "methods")
    if not m_values or not ratios:
        raise ConfigError("grids must be non-empty")
    specs = [m if isinstance(m, MethodSpec) else method_spec(m) for m in methods]
    combos = view_combos or [tuple(range(dataset.n_views))]
    skip = set(skip)
    rows = []
    for spec, combo, m, ratio in itertools.product(specs, combos, m_values, ratios):
        names = tuple(dataset.names[i] for i in combo)
        row = SweepRow(spec.label, names, int(m), float(ratio))
        if row.key in skip:
            continue
        try:
            row.report = run_protocol(dataset, spec, m, ratio, folds, seed, C_grid,
                                      n_jobs=n_jobs, views=combo)
        except (MvccaError, ArithmeticError, ValueError) as exc:
            row.error = f"{type(exc).__name__}: {exc}"
        rows.append(row)
        if on_row is not None:
            on_row(row)
    return rows


def best_over_m(rows):
    """For each (method, views, ratio) keep the row with the highest mean."""
    best = {}
    for row in rows:
        if row.report is None:
            continue
        key = (row.method, row.views, row.ratio)
        if key not in best or row.report.mean > best[key].report.mean:
            best[key] = row
    return list(best.values())


def report_dict(report):
    return asdict(report)
