"""Deep multi-view trainers: DTCCA and DGCCA.

DTCCA trains one network per view so that the whitened covariance tensor of
the network outputs is well approximated by a rank-m CP decomposition. Each
epoch runs ALS on the current tensor, then takes an Adam step on
``||M - M_hat||_F^2`` with ``M_hat`` held fixed; gradients reach the
networks through the covariance tensor and, unless ``freeze_whitening`` is
set, through each whitening matrix as well.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from . import tensor as tl
from .cca import fit_gcca, tcc_objective
from .exceptions import ConfigError, DataError, TrainingDivergedError
from .linalg import DEFAULT_EPS, _regularized_eig, as_matrix, daleckii_krein
from .net import AdamState, adam_step, backward, forward, net_init


@dataclass
class TrainConfig:
    epochs: int = 100
    lr: float = 1e-3
    seed: int = 0
    eps: float = DEFAULT_EPS
    als_opts: dict = field(default_factory=lambda: {"max_iter": 200, "tol": 1e-8})
    freeze_whitening: bool = False
    activation: str = "sigmoid"
    hidden: tuple = (500, 500)
    dropout: float = 0.1
    linear_output: bool = False
    inner_steps: int = 1
    backend: str = "implicit"
    warm_start: bool = True
    min_grad_norm: float = 0.0
    max_elements: int = tl.DEFAULT_MAX_ELEMENTS

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError(f"must be >= 1, got {self.epochs}", "epochs")
        if self.eps < 0:
            raise ConfigError(f"must be >= 0, got {self.eps}", "eps")
        if self.inner_steps < 1:
            raise ConfigError(f"must be >= 1, got {self.inner_steps}", "inner_steps")
        if self.backend not in ("implicit", "dense"):
            raise ConfigError(f"unknown backend {self.backend!r}", "backend")
        self.hidden = tuple(int(h) for h in self.hidden)


@dataclass
class DtccaModel:
    networks: list
    whiteners: list
    factors: tl.CpFactors
    means: list
    history: list
    config: TrainConfig
    stopped: str = "completed"
    method: str = "dtcca"

    @property
    def projections(self):
        return [W @ U for W, U in zip(self.whiteners, self.factors.factors)]

    @property
    def n_components(self):
        return self.factors.rank

    @property
    def n_views(self):
        return len(self.networks)

    def transform(self, views, view=None):
        if view is not None:
            return dtcca_transform(self, view, views)
        if len(views) != self.n_views:
            raise DataError(f"model has {self.n_views} views, got {len(views)}")
        return [dtcca_transform(self, r, X) for r, X in enumerate(views)]


@dataclass
class DgccaModel:
    networks: list
    G: np.ndarray
    projections: list
    means: list
    history: list
    config: TrainConfig
    stopped: str = "completed"
    method: str = "dgcca"

    @property
    def n_components(self):
        return self.G.shape[0]

    @property
    def n_views(self):
        return len(self.networks)

    def transform(self, views, view=None):
        if view is not None:
            out, _ = forward(self.networks[view], as_matrix(views))
            return self.projections[view].T @ (out - self.means[view][:, None])
        if len(views) != self.n_views:
            raise DataError(f"model has {self.n_views} views, got {len(views)}")
        return [self.transform(X, r) for r, X in enumerate(views)]


class _Whitened:
    """Centered outputs, their regularized covariance eigensystems and ``Y = W F_hat``."""

    def __init__(self, outputs, eps):
        outputs = [as_matrix(F, f"output {r}") for r, F in enumerate(outputs)]
        n = outputs[0].shape[1]
        if any(F.shape[1] != n for F in outputs):
            raise DataError("all outputs must share the sample count")
        self.means = [F.mean(axis=1) for F in outputs]
        self.centered = [F - mu[:, None] for F, mu in zip(outputs, self.means)]
        self.eigs = [_regularized_eig(Fh @ Fh.T, eps) for Fh in self.centered]
        self.whiteners = [(V / np.sqrt(w)) @ V.T for w, V in self.eigs]
        self.Y = [W @ Fh for W, Fh in zip(self.whiteners, self.centered)]

    def tensor(self, backend="implicit", max_elements=tl.DEFAULT_MAX_ELEMENTS):
        if backend == "dense":
            return tl.outer_accumulate(self.Y, max_elements)
        return tl.OuterSumTensor(self.Y)


def _loss_grad_Y(Y, target):
    """Loss ``||M - target||^2`` with ``M = sum_i o_r y_r^i`` and ``dL/dY_r``."""
    k = len(Y)
    if isinstance(target, tl.CpFactors):
        if target.dims != tuple(y.shape[0] for y in Y):
            raise DataError(f"target dims {target.dims} do not match outputs")
        grams = [y.T @ y for y in Y]
        A = [U.T @ y for U, y in zip(target.factors, Y)]
        lam = target.weights[:, None]
        full = np.ones_like(grams[0])
        for G in grams:
            full *= G
        prod_A = np.ones_like(A[0])
        for a in A:
            prod_A = prod_A * a
        loss = full.sum() - 2.0 * float((lam * prod_A).sum()) + tl.cp_norm_sq(target)
        grads = []
        for r in range(k):
            H = np.ones_like(grams[0])
            P = np.ones_like(A[0])
            for s in range(k):
                if s != r:
                    H *= grams[s]
                    P = P * A[s]
            grads.append(2.0 * Y[r] @ H - 2.0 * target.factors[r] @ (lam * P))
        return float(loss), grads
    target = np.asarray(target, dtype=np.float64)
    M = tl.outer_accumulate(Y, None)
    if target.shape != M.shape:
        raise DataError(f"target shape {target.shape} does not match {M.shape}")
    D = 2.0 * (M - target)
    grads = [tl.unfold(D, r) @ tl.khatri_rao([Y[s] for s in range(k) if s != r])
             for r in range(k)]
    return float(np.sum((M - target) ** 2)), grads


def _backprop_whitening(state, dY, freeze_whitening):
    grads = []
    for (w, V), W, Fh, g in zip(state.eigs, state.whiteners, state.centered, dY):
        dFh = W @ g
        if not freeze_whitening:
            dS = daleckii_krein(w, V, g @ Fh.T)
            dFh = dFh + (dS + dS.T) @ Fh
        grads.append(dFh - dFh.mean(axis=1, keepdims=True))
    return grads


def dtcca_loss_and_grad(outputs, target, eps=DEFAULT_EPS, freeze_whitening=False):
    """DTCCA loss ``||M - target||_F^2`` and its gradient w.r.t. each output.

    Parameters
    ----------
    outputs : list of ndarray (m_r, n)
        Raw network outputs; centering is part of the differentiated map.
    target : CpFactors or ndarray
        ``M_hat``, held constant. ``CpFactors`` uses the factored evaluation,
        an array the dense one.
    freeze_whitening : bool
        Treat the whitening matrices as constants.

    Returns
    -------
    loss : float
    grads : list of ndarray, same shapes as ``outputs``
    """
    state = _Whitened(outputs, eps)
    loss, dY = _loss_grad_Y(state.Y, target)
    return loss, _backprop_whitening(state, dY, freeze_whitening)


def _seeds(seed, count):
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(count)]


def _init_networks(views, m, config):
    seeds = _seeds(config.seed, len(views) + 2)
    nets = [net_init([X.shape[0], *config.hidden, m], config.activation,
                     config.dropout, seed=s, linear_output=config.linear_output)
            for X, s in zip(views, seeds)]
    return nets, np.random.default_rng(seeds[-2]), seeds[-1]


def _check_views(views):
    views = [as_matrix(X, f"view {r}") for r, X in enumerate(views)]
    if len(views) < 2:
        raise DataError("need at least two views")
    n = views[0].shape[1]
    if any(X.shape[1] != n for X in views):
        raise DataError("all views must share the sample count")
    return views


def _grad_norm(grads):
    return float(np.sqrt(sum(np.sum(g * g) for gs in grads for g in gs)))


def dtcca_fit(views, m, config=None, sink=None):
    """Train DTCCA networks on ``views`` (list of d_r x n matrices).

    ``sink``, if given, receives one dict per epoch with keys ``epoch``,
    ``loss``, ``rho`` and ``grad_norm``.
    """
    config = config or TrainConfig()
    views = _check_views(views)
    if m < 1:
        raise ConfigError(f"must be >= 1, got {m}", "m")
    tl.check_size([m] * len(views), config.max_elements)
    nets, rng, als_seed = _init_networks(views, m, config)
    adams = [AdamState(lr=config.lr) for _ in nets]
    als_opts = {"seed": als_seed, **config.als_opts}
    history = []
    factors = None
    stopped = "completed"
    for epoch in range(config.epochs):
        outs, caches = zip(*(forward(net, X, train=True, rng=rng)
                             for net, X in zip(nets, views)))
        state = _Whitened(outs, config.eps)
        init = factors if (config.warm_start and factors is not None) else "random"
        factors = tl.cp_als(state.tensor(config.backend, config.max_elements), m,
                            **{**als_opts, "init": init})
        target = factors if config.backend == "implicit" else tl.cp_reconstruct(factors)
        for step in range(config.inner_steps):
            if step > 0:
                outs, caches = zip(*(forward(net, X, train=True, rng=rng)
                                     for net, X in zip(nets, views)))
                state = _Whitened(outs, config.eps)
            loss, dY = _loss_grad_Y(state.Y, target)
            if not np.isfinite(loss):
                raise TrainingDivergedError(epoch, epoch - 1)
            dF = _backprop_whitening(state, dY, config.freeze_whitening)
            grads = [backward(net, cache, g)[0] for net, cache, g in zip(nets, caches, dF)]
            gnorm = _grad_norm(grads)
            if step == 0:
                rho, _ = tcc_objective([U.T @ y for U, y in zip(factors.factors, state.Y)])
                record = {"epoch": epoch, "loss": loss, "rho": rho, "grad_norm": gnorm}
                history.append(record)
                if sink is not None:
                    sink(record)
            if not np.isfinite(gnorm):
                raise TrainingDivergedError(epoch, epoch - 1)
            if gnorm < config.min_grad_norm:
                stopped = "vanishing-gradient"
                break
            for net, g, adam in zip(nets, grads, adams):
                adam_step(net.params(), g, adam)
        if stopped != "completed":
            break

    outs = [forward(net, X)[0] for net, X in zip(nets, views)]
    state = _Whitened(outs, config.eps)
    init = factors if config.warm_start else "random"
    factors = tl.cp_als(state.tensor(config.backend, config.max_elements), m,
                        **{**als_opts, "init": init})
    return DtccaModel(nets, state.whiteners, factors, state.means, history, config,
                      stopped)


def dtcca_transform(model, r, X):
    """Canonical variables of view ``r``: ``U_r^T W_r (f_r(X) - mean_r)``."""
    X = as_matrix(X, f"view {r}")
    net = model.networks[r]
    if X.shape[0] != net.widths[0]:
        raise DataError(f"view {r} has {X.shape[0]} features, network expects "
                        f"{net.widths[0]}")
    out, _ = forward(net, X)
    return model.factors.factors[r].T @ (model.whiteners[r] @ (out - model.means[r][:, None]))


def training_rho(model, views):
    """High-order correlation of the model's projections of ``views``."""
    return tcc_objective(model.transform(views))[0]


def dgcca_loss_and_grad(outputs, G, projections):
    """``sum_r ||G - P_r^T F_r||^2`` and ``2 P_r P_r^T F_r - 2 P_r G`` per view.

    ``G`` and the ``P_r`` are held fixed.
    """
    loss = 0.0
    grads = []
    for F, P in zip(outputs, projections):
        R = G - P.T @ F
        loss += float(np.sum(R * R))
        grads.append(2.0 * P @ (P.T @ F) - 2.0 * P @ G)
    return loss, grads


def dgcca_fit(views, m, config=None, sink=None):
    """Train DGCCA networks; ``G`` and ``P_r`` are refreshed before every step."""
    config = config or TrainConfig()
    views = _check_views(views)
    if views[0].shape[1] < m:
        raise ConfigError(f"{m} exceeds the number of samples", "m")
    nets, rng, _ = _init_networks(views, m, config)
    adams = [AdamState(lr=config.lr) for _ in nets]
    history = []
    stopped = "completed"
    for epoch in range(config.epochs):
        outs, caches = zip(*(forward(net, X, train=True, rng=rng)
                             for net, X in zip(nets, views)))
        centered = [F - F.mean(axis=1, keepdims=True) for F in outs]
        gm = fit_gcca(centered, m, config.eps)
        loss, dFh = dgcca_loss_and_grad(centered, gm.G, gm.projections)
        if not np.isfinite(loss):
            raise TrainingDivergedError(epoch, epoch - 1)
        dF = [g - g.mean(axis=1, keepdims=True) for g in dFh]
        grads = [backward(net, cache, g)[0] for net, cache, g in zip(nets, caches, dF)]
        gnorm = _grad_norm(grads)
        record = {"epoch": epoch, "loss": loss, "rho": float(gm.eigenvalues.sum()),
                  "grad_norm": gnorm,
                  "orth_error": float(np.linalg.norm(gm.G @ gm.G.T - np.eye(m)))}
        history.append(record)
        if sink is not None:
            sink(record)
        if gnorm < config.min_grad_norm:
            stopped = "vanishing-gradient"
            break
        for net, g, adam in zip(nets, grads, adams):
            adam_step(net.params(), g, adam)

    outs = [forward(net, X)[0] for net, X in zip(nets, views)]
    gm = fit_gcca(outs, m, config.eps)
    return DgccaModel(nets, gm.G, gm.projections, gm.means, history, config, stopped)


@dataclass
class DepthResult:
    depth: int
    rho: float
    aborted: bool
    reason: str
    epochs_run: int


def depth_sweep(views, m, depths, activation="tanh", config=None, width=None):
    """Train one DTCCA model per depth (layers including the output layer).

    Failures are recorded in the returned rows rather than raised.
    """
    config = config or TrainConfig()
    width = width or (config.hidden[0] if config.hidden else 500)
    rows = []
    for depth in depths:
        if depth < 2:
            raise ConfigError(f"depth must be >= 2, got {depth}", "depths")
        cfg = replace(config, hidden=(width,) * (depth - 1), activation=activation,
                      min_grad_norm=max(config.min_grad_norm, 1e-12))
        try:
            model = dtcca_fit(views, m, cfg)
        except (TrainingDivergedError, ArithmeticError) as exc:
            rows.append(DepthResult(depth, float("nan"), True, str(exc),
                                    getattr(exc, "epoch", 0)))
            continue
        rho = training_rho(model, views)
        aborted = model.stopped != "completed" or not np.isfinite(rho)
        rows.append(DepthResult(depth, rho, aborted, model.stopped, len(model.history)))
    return rows
