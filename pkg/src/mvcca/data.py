"""Multi-view datasets: plain-text matrices, UCI Mfeat, JSON manifests and a
synthetic generator with a planted shared latent variable."""

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigError, DataError

MFEAT_VIEWS = ("fac", "fou", "kar", "mor", "pix", "zer")
MFEAT_DIMS = (216, 76, 64, 6, 240, 47)
MFEAT_ROWS = 2000


@dataclass
class MultiViewDataset:
    views: list
    labels: np.ndarray = None
    names: list = None
    note: str = ""

    def __post_init__(self):
        self.views = [np.asarray(V, dtype=np.float64) for V in self.views]
        if not self.views:
            raise DataError("a dataset needs at least one view")
        n = self.views[0].shape[1]
        for r, V in enumerate(self.views):
            if V.ndim != 2 or V.shape[1] != n:
                raise DataError(f"view {r} has shape {V.shape}, expected (d, {n})")
            if not np.all(np.isfinite(V)):
                raise DataError(f"view {r} contains non-finite entries")
        if self.labels is not None:
            self.labels = np.asarray(self.labels)
            if self.labels.shape != (n,):
                raise DataError(f"labels have shape {self.labels.shape}, expected ({n},)")
        if self.names is None:
            self.names = [f"view{r}" for r in range(len(self.views))]
        if len(self.names) != len(self.views):
            raise DataError("one name per view is required")

    @property
    def n_samples(self):
        return self.views[0].shape[1]

    @property
    def n_views(self):
        return len(self.views)

    @property
    def dims(self):
        return tuple(V.shape[0] for V in self.views)

    def select_views(self, indices):
        indices = list(indices)
        return MultiViewDataset([self.views[i] for i in indices], self.labels,
                                [self.names[i] for i in indices], self.note)

    def take(self, idx):
        idx = np.asarray(idx)
        labels = None if self.labels is None else self.labels[idx]
        return MultiViewDataset([V[:, idx] for V in self.views], labels,
                                list(self.names), self.note)


def _split_line(line, delimiter):
    if delimiter is None:
        return line.replace(",", " ").split()
    return [tok.strip() for tok in line.split(delimiter)]


def load_matrix(path, layout="samples-rows", delimiter=None):
    """Read a numeric text matrix and return it as features x samples.

    ``layout`` says how the file is stored: ``'samples-rows'`` (one sample per
    line) or ``'features-rows'``. With ``delimiter=None`` any run of
    whitespace or commas separates tokens. Blank lines and ``#`` comments are
    skipped.
    """
    if layout not in ("samples-rows", "features-rows"):
        raise ConfigError(f"unknown layout {layout!r}", "layout")
    rows = []
    width = None
    try:
        fh = open(path)
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc.strerror}") from exc
    with fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            tokens = _split_line(line, delimiter)
            try:
                values = [float(tok) for tok in tokens]
            except ValueError:
                bad = next(t for t in tokens if not _is_float(t))
                raise DataError(f"{path}:{lineno}: non-numeric token {bad!r}") from None
            if width is None:
                width = len(values)
            elif len(values) != width:
                raise DataError(f"{path}:{lineno}: expected {width} values, got "
                                f"{len(values)}")
            rows.append(values)
    if not rows:
        raise DataError(f"{path}: no data")
    A = np.array(rows, dtype=np.float64)
    if not np.all(np.isfinite(A)):
        raise DataError(f"{path}: non-finite values")
    return A.T.copy() if layout == "samples-rows" else A


def _is_float(token):
    try:
        float(token)
    except ValueError:
        return False
    return True


def save_matrix(path, X, layout="samples-rows", delimiter=" "):
    """Write ``X`` (features x samples) with full float precision."""
    A = np.asarray(X).T if layout == "samples-rows" else np.asarray(X)
    np.savetxt(path, A, fmt="%.17g", delimiter=delimiter)


def load_mfeat(directory):
    """Load the six UCI Mfeat views from ``mfeat-fac`` ... ``mfeat-zer``.

    Rows come in ten blocks of 200 per digit, giving labels 0..9.
    """
    paths = [os.path.join(directory, f"mfeat-{name}") for name in MFEAT_VIEWS]
    for name, path in zip(MFEAT_VIEWS, paths):
        if not os.path.exists(path):
            raise DataError(f"Mfeat view '{name}' not found at {path}")
    views = []
    for name, dim, path in zip(MFEAT_VIEWS, MFEAT_DIMS, paths):
        X = load_matrix(path, "samples-rows")
        if X.shape != (dim, MFEAT_ROWS):
            raise DataError(f"Mfeat view '{name}' has shape {X.T.shape}, expected "
                            f"({MFEAT_ROWS}, {dim})")
        views.append(X)
    labels = np.repeat(np.arange(10), MFEAT_ROWS // 10)
    return MultiViewDataset(views, labels, list(MFEAT_VIEWS), f"UCI Mfeat from {directory}")


def synth_multiview(k=3, latent_dim=5, dims=None, n=2000, nonlinear=True, noise=0.1,
                    classes=10, seed=0, class_spread=1.0):
    """Views sharing a latent class-mixture variable.

    Each sample draws a class ``c`` uniformly and a latent ``z = mu_c + s*e``
    (``s = 0.5 * class_spread``), with unit-variance class means ``mu_c``.
    View ``r`` observes ``x_r = A_r phi_r(z) + noise * e_r``, where ``phi_r``
    is the identity in linear mode and ``tanh(B_r z)`` (``B_r`` random with
    gain 2) otherwise.

    Returns
    -------
    MultiViewDataset
        ``views[r]`` has shape ``(dims[r], n)``; labels are the classes.
    """
    dims = tuple(dims) if dims is not None else (20,) * k
    if len(dims) != k:
        raise ConfigError(f"need {k} view dims, got {len(dims)}", "dims")
    if min(dims) < 1 or latent_dim < 1 or n < 1 or classes < 1:
        raise ConfigError("dimensions, n and classes must be positive")
    rng = np.random.default_rng(seed)
    means = rng.standard_normal((latent_dim, classes))
    labels = rng.integers(0, classes, size=n)
    z = means[:, labels] + 0.5 * class_spread * rng.standard_normal((latent_dim, n))
    views = []
    for d in dims:
        if nonlinear:
            B = 2.0 * rng.standard_normal((latent_dim, latent_dim)) / np.sqrt(latent_dim)
            phi = np.tanh(B @ z)
        else:
            phi = z
        A = rng.standard_normal((d, latent_dim)) / np.sqrt(latent_dim)
        views.append(A @ phi + noise * rng.standard_normal((d, n)))
    mode = "nonlinear" if nonlinear else "linear"
    return MultiViewDataset(views, labels, [f"synth{r}" for r in range(k)],
                            f"synthetic {mode}, k={k}, q={latent_dim}, seed={seed}")


def load_manifest(path):
    """Build a dataset from a JSON manifest.

    Accepted forms::

        {"mfeat": "<dir>", "views": ["fac", "zer"]}          # optional subset
        {"synthetic": {"k": 3, "n": 2000, ...}}
        {"views": [{"path": "a.txt", "name": "a", "layout": "samples-rows",
                    "delimiter": null}, ...], "labels": "y.txt"}

    Relative paths resolve against the manifest's directory.
    """
    try:
        with open(path) as fh:
            spec = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read manifest: {exc.strerror}", "dataset") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"manifest is not valid JSON: {exc}", "dataset") from exc
    return dataset_from_spec(spec, os.path.dirname(os.path.abspath(path)))


def dataset_from_spec(spec, base="."):
    if not isinstance(spec, dict):
        raise ConfigError("manifest must be a JSON object", "dataset")
    resolve = lambda p: p if os.path.isabs(p) else os.path.join(base, p)  # noqa: E731
    if "mfeat" in spec:
        ds = load_mfeat(resolve(spec["mfeat"]))
        subset = spec.get("views")
        if subset:
            try:
                ds = ds.select_views([MFEAT_VIEWS.index(v) for v in subset])
            except ValueError:
                raise ConfigError(f"unknown Mfeat view in {subset}", "views") from None
        return ds
    if "synthetic" in spec:
        opts = dict(spec["synthetic"])
        try:
            return synth_multiview(**opts)
        except TypeError as exc:
            raise ConfigError(str(exc), "synthetic") from exc
    if "views" not in spec:
        raise ConfigError("manifest needs 'views', 'mfeat' or 'synthetic'", "dataset")
    views, names = [], []
    for r, entry in enumerate(spec["views"]):
        if isinstance(entry, str):
            entry = {"path": entry}
        if "path" not in entry:
            raise ConfigError(f"view {r} has no path", "views")
        views.append(load_matrix(resolve(entry["path"]), entry.get("layout", "samples-rows"),
                                 entry.get("delimiter")))
        names.append(entry.get("name", os.path.splitext(os.path.basename(entry["path"]))[0]))
    labels = None
    if spec.get("labels"):
        lab = load_matrix(resolve(spec["labels"]), "samples-rows")
        if lab.shape[0] != 1:
            raise DataError("label file must hold one value per line")
        labels = lab[0].astype(np.int64)
    return MultiViewDataset(views, labels, names, spec.get("note", ""))


def standardize_fit(views):
    """Per-feature means and scales (zero-variance features keep scale 1)."""
    stats = []
    for V in views:
        mu = V.mean(axis=1)
        sd = V.std(axis=1)
        stats.append((mu, np.where(sd > 0, sd, 1.0)))
    return stats


def standardize_apply(views, stats):
    return [(V - mu[:, None]) / sd[:, None] for V, (mu, sd) in zip(views, stats)]
