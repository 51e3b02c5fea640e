"""Command-line front end: ``fit``, ``transform``, ``eval`` and ``sweep``.

Settings come from built-in defaults, then a flat JSON config file
(``--config``), then ``MVCCA_<FIELD>`` environment variables, then flags.
"""

import argparse
import csv
import json
import os
import sys
from dataclasses import dataclass, field, fields, replace

import numpy as np

from . import artifact, deep
from .data import load_manifest, save_matrix
from .evaluation import (METHODS, Preprocessor, SweepRow, concat_projections, fit_method,
                         method_spec, run_protocol, sweep, view_combinations)
from .exceptions import ConfigError, DataError, MvccaError, NumericalError, TensorSizeError

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

CSV_FIELDS = ("method", "views", "m", "ratio", "folds", "seed", "mean_pct", "std_pct",
              "accuracies_pct", "best_C", "error")

CSV_HELP = """\
CSV columns (eval and sweep):
  method          method label, '_p' marks PCA preprocessing
  views           view names joined by '-'
  m               number of components
  ratio           training fraction
  folds, seed     protocol settings
  mean_pct        mean test accuracy in percent, full precision
  std_pct         population std of the fold accuracies in percent
  accuracies_pct  per-fold accuracies in percent, ';'-separated
  best_C          per-fold selected SVM C, ';'-separated
  error           empty on success, else the failure message
"""


@dataclass
class RunConfig:
    dataset: str = None
    method: str = "tcca"
    m: int = 5
    hidden: tuple = (500, 500)
    activation: str = "sigmoid"
    dropout: float = 0.1
    epochs: int = 100
    lr: float = 1e-3
    eps: float = 1e-4
    seed: int = 0
    folds: int = 10
    ratio: float = 0.1
    pca: str = None
    pca_energy: float = 0.95
    pca_max_dim: int = 20
    standardize: bool = False
    freeze_whitening: bool = False
    linear_output: bool = False
    methods: list = field(default_factory=list)
    m_values: list = field(default_factory=list)
    ratios: list = field(default_factory=list)
    view_combos: object = None
    n_jobs: int = 1
    model: str = None
    log: str = None
    csv: str = None
    output: str = None

    def validate(self, command):
        if self.dataset is None:
            raise ConfigError("a dataset manifest is required", "dataset")
        if not os.path.exists(self.dataset):
            raise ConfigError(f"file not found: {self.dataset}", "dataset")
        if self.m < 1:
            raise ConfigError(f"must be >= 1, got {self.m}", "m")
        if any(v < 1 for v in self.m_values):
            raise ConfigError("all values must be >= 1", "m_values")
        for r in [self.ratio, *self.ratios]:
            if not 0.0 < r < 1.0:
                raise ConfigError(f"must lie in (0, 1), got {r}", "ratio")
        if self.folds < 1:
            raise ConfigError(f"must be >= 1, got {self.folds}", "folds")
        for name in [self.method, *self.methods]:
            base = name[:-2] if name.endswith("_p") else name
            if base not in METHODS:
                raise ConfigError(f"unknown method {name!r}", "method")
        if command == "fit" and not self.model:
            raise ConfigError("an output artifact path is required", "model")
        if command == "transform":
            if not self.model or not os.path.exists(self.model):
                raise ConfigError(f"artifact not found: {self.model}", "model")
            if not self.output:
                raise ConfigError("an output directory is required", "output")
        return self

    def train_config(self):
        return deep.TrainConfig(epochs=self.epochs, lr=self.lr, seed=self.seed,
                                eps=self.eps, activation=self.activation,
                                hidden=tuple(self.hidden), dropout=self.dropout,
                                freeze_whitening=self.freeze_whitening,
                                linear_output=self.linear_output)

    def spec(self, name=None):
        opts = dict(standardize=self.standardize, eps=self.eps,
                    pca_energy=self.pca_energy, pca_max_dim=self.pca_max_dim,
                    train=self.train_config())
        if self.pca is not None:
            opts["pca"] = self.pca
        return method_spec(name or self.method, **opts)


_TYPES = {f.name: f.type for f in fields(RunConfig)}
_LISTS = {"hidden": int, "methods": str, "m_values": int, "ratios": float}


def _coerce(name, value):
    """Convert ``value`` (JSON value or string) to the type of field ``name``."""
    if name not in _TYPES:
        raise ConfigError("unknown setting", name)
    kind = _TYPES[name]
    try:
        if name in _LISTS:
            if isinstance(value, str):
                value = [v for v in value.split(",") if v.strip()]
            return [_LISTS[name](v) for v in value]
        if name == "view_combos":
            if isinstance(value, str) and value.strip().startswith("["):
                return json.loads(value)
            return value
        if value is None or (name == "pca" and value in ("", "none")):
            return None
        if kind is bool:
            if isinstance(value, str):
                low = value.strip().lower()
                if low not in ("1", "0", "true", "false", "yes", "no"):
                    raise ValueError(value)
                return low in ("1", "true", "yes")
            return bool(value)
        if kind is int:
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(value)
            return int(value)
        if kind is float:
            return float(value)
        return str(value)
    except (TypeError, ValueError, json.JSONDecodeError):
        raise ConfigError(f"invalid value {value!r}", name) from None


def build_config(args, environ=None):
    """Merge defaults, config file, ``MVCCA_*`` environment and flags."""
    environ = os.environ if environ is None else environ
    values = {}
    if getattr(args, "config", None):
        try:
            with open(args.config) as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read {args.config}: {exc.strerror}", "config") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}", "config") from None
        if not isinstance(data, dict):
            raise ConfigError("config must be a flat JSON object", "config")
        for key, value in data.items():
            values[key] = _coerce(key, value)
    for key, value in environ.items():
        if key.startswith("MVCCA_"):
            name = key[len("MVCCA_"):].lower()
            if name in _TYPES:
                values[name] = _coerce(name, value)
    for name in _TYPES:
        value = getattr(args, name, None)
        if value is not None:
            values[name] = _coerce(name, value)
    cfg = RunConfig(**values)
    cfg.hidden = tuple(cfg.hidden)
    return cfg


def _resolve_combos(cfg, dataset):
    spec = cfg.view_combos
    if spec is None:
        return None
    if isinstance(spec, str):
        if spec in ("subsets", "all"):
            return view_combinations(dataset.n_views, 3)
        raise ConfigError(f"unknown view combination mode {spec!r}", "view_combos")
    combos = []
    for combo in spec:
        idx = []
        for v in combo:
            if isinstance(v, int) and 0 <= v < dataset.n_views:
                idx.append(v)
            elif v in dataset.names:
                idx.append(dataset.names.index(v))
            else:
                raise ConfigError(f"unknown view {v!r}", "view_combos")
        combos.append(tuple(idx))
    return combos


class _Log:
    def __init__(self, path):
        self.fh = open(path, "w") if path else None
        if self.fh:
            self.fh.write("# epoch loss rho grad_norm\n")

    def __call__(self, record):
        if self.fh:
            self.fh.write(f"{record['epoch']} {record['loss']!r} {record['rho']!r} "
                          f"{record['grad_norm']!r}\n")

    def note(self, text):
        if self.fh:
            self.fh.write(f"# {text}\n")

    def close(self):
        if self.fh:
            self.fh.close()


def cmd_fit(cfg, out=sys.stdout):
    dataset = load_manifest(cfg.dataset)
    spec = cfg.spec()
    prep = Preprocessor.fit(spec, dataset.views)
    views = prep(dataset.views)
    log = _Log(cfg.log)
    try:
        if spec.name in ("dtcca", "dgcca"):
            train = replace(spec.train, seed=cfg.seed, eps=spec.eps)
            fit = deep.dtcca_fit if spec.name == "dtcca" else deep.dgcca_fit
            model = fit(views, cfg.m, train, sink=log)
        else:
            model = fit_method(spec, views, cfg.m, seed=cfg.seed)
            log.note(f"objective {model.objective!r}" if hasattr(model, "objective")
                     else f"eigenvalue_sum {float(model.eigenvalues.sum())!r}")
    finally:
        log.close()
    meta = {"method": spec.label, "m": cfg.m, "seed": cfg.seed, "views": dataset.names}
    size = artifact.save(cfg.model, model, prep, meta)
    print(f"wrote {cfg.model} ({size} bytes)", file=out)
    return 0


def cmd_transform(cfg, out=sys.stdout):
    dataset = load_manifest(cfg.dataset)
    model, prep, _ = artifact.load(cfg.model)
    Z = model.transform(prep(dataset.views))
    os.makedirs(cfg.output, exist_ok=True)
    for name, z in zip(dataset.names, Z):
        save_matrix(os.path.join(cfg.output, f"{name}.txt"), z)
    save_matrix(os.path.join(cfg.output, "concat.txt"), concat_projections(Z))
    print(f"wrote {len(Z) + 1} files to {cfg.output}", file=out)
    return 0


def _pct(values):
    return ";".join(repr(100.0 * v) for v in values)


def row_to_csv(row, folds, seed):
    rep = row.report
    return {
        "method": row.method, "views": "-".join(row.views), "m": row.m,
        "ratio": repr(row.ratio), "folds": folds, "seed": seed,
        "mean_pct": repr(100.0 * rep.mean) if rep else "",
        "std_pct": repr(100.0 * rep.std) if rep else "",
        "accuracies_pct": _pct(rep.accuracies) if rep else "",
        "best_C": ";".join(repr(c) for c in rep.best_C) if rep else "",
        "error": row.error,
    }


def format_table(records):
    """Aligned text table of CSV records with two-decimal percentages."""
    head = ["method", "views", "m", "ratio", "accuracy", "error"]
    body = []
    for r in records:
        acc = (f"{float(r['mean_pct']):.2f} ± {float(r['std_pct']):.2f}"
               if r["mean_pct"] != "" else "-")
        body.append([r["method"], r["views"], str(r["m"]), f"{float(r['ratio']):g}", acc,
                     r["error"]])
    widths = [max(len(h), *(len(b[i]) for b in body)) if body else len(h)
              for i, h in enumerate(head)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(head, widths)).rstrip()]
    for b in body:
        lines.append("  ".join(c.ljust(w) for c, w in zip(b, widths)).rstrip())
    return "\n".join(lines)


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _csv_key(rec):
    return (rec["method"], rec["views"], int(rec["m"]), float(rec["ratio"]))


def cmd_eval(cfg, out=sys.stdout):
    cfg = replace(cfg, methods=[cfg.method], m_values=[cfg.m], ratios=[cfg.ratio])
    return _run_grid(cfg, out, resume=False, single=True)


def cmd_sweep(cfg, out=sys.stdout, resume=False):
    return _run_grid(cfg, out, resume=resume, single=False)


def _run_grid(cfg, out, resume, single):
    dataset = load_manifest(cfg.dataset)
    combos = _resolve_combos(cfg, dataset)
    methods = cfg.methods or [cfg.method]
    specs = [cfg.spec(name) for name in methods]
    previous = []
    if resume and cfg.csv and os.path.exists(cfg.csv):
        previous = [r for r in _read_csv(cfg.csv) if not r["error"]]
    done = {_csv_key(r) for r in previous}
    records = list(previous)
    fh = None
    writer = None
    if cfg.csv:
        fh = open(cfg.csv, "w", newline="")
        writer = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
        writer.writeheader()
        for r in previous:
            writer.writerow(r)
        fh.flush()

    def on_row(row):
        rec = row_to_csv(row, cfg.folds, cfg.seed)
        records.append(rec)
        if writer:
            writer.writerow(rec)
            fh.flush()

    try:
        if single:
            spec = specs[0]
            report = run_protocol(dataset, spec, cfg.m, cfg.ratio, cfg.folds, cfg.seed,
                                  n_jobs=cfg.n_jobs, views=combos[0] if combos else None)
            names = tuple(report.config["views"])
            on_row(SweepRow(spec.label, names, cfg.m, cfg.ratio, report))
        else:
            sweep(dataset, specs, cfg.m_values or [cfg.m], combos, cfg.ratios or [cfg.ratio],
                  cfg.folds, cfg.seed, skip=done, on_row=on_row, n_jobs=cfg.n_jobs)
    finally:
        if fh:
            fh.close()
    print(format_table(records), file=out)
    if records and all(r["error"] for r in records):
        return EXIT_NUMERIC
    return 0


def _add_flags(p):
    p.add_argument("--config", help="flat JSON file with any of the settings below")
    p.add_argument("--dataset", help="dataset manifest (JSON)")
    p.add_argument("--method", help=f"one of {', '.join(METHODS)}; append _p for PCA")
    p.add_argument("--m", type=int, help="number of components")
    p.add_argument("--hidden", help="hidden widths, comma-separated (e.g. 500,500)")
    p.add_argument("--activation", choices=("sigmoid", "tanh", "linear"))
    p.add_argument("--dropout", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--eps", type=float, help="covariance ridge")
    p.add_argument("--seed", type=int)
    p.add_argument("--folds", type=int)
    p.add_argument("--ratio", type=float, help="training fraction per fold")
    p.add_argument("--pca", choices=("none", "energy", "maxdim"))
    p.add_argument("--pca-energy", dest="pca_energy", type=float)
    p.add_argument("--pca-max-dim", dest="pca_max_dim", type=int)
    p.add_argument("--standardize", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--freeze-whitening", dest="freeze_whitening",
                   action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--linear-output", dest="linear_output",
                   action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--methods", help="sweep methods, comma-separated")
    p.add_argument("--m-values", dest="m_values", help="sweep m grid, comma-separated")
    p.add_argument("--ratios", help="sweep ratio grid, comma-separated")
    p.add_argument("--view-combos", dest="view_combos",
                   help="'subsets' for every subset of >= 3 views, or a JSON list of lists")
    p.add_argument("--n-jobs", dest="n_jobs", type=int, help="parallel fold workers")
    p.add_argument("--model", help="artifact path (written by fit, read by transform)")
    p.add_argument("--log", help="diagnostics log path (fit)")
    p.add_argument("--csv", help="CSV output path (eval, sweep)")
    p.add_argument("--output", help="output directory (transform)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="mvcca", description="Multi-view CCA: fit, transform, evaluate and sweep.",
        epilog="Environment variables MVCCA_<SETTING> (e.g. MVCCA_EPOCHS=50) override the "
               "config file; flags override both.\nExit codes: 2 config error, 3 data "
               "error, 4 numerical failure.\n\n" + CSV_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in [("fit", "train on the whole dataset and write an artifact"),
                       ("transform", "project a dataset with a saved artifact"),
                       ("eval", "run the classification protocol for one setting"),
                       ("sweep", "run the protocol over a grid")]:
        p = sub.add_parser(name, help=text, description=text, epilog=CSV_HELP,
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        _add_flags(p)
        if name == "sweep":
            p.add_argument("--resume", action="store_true",
                           help="keep successful rows of an existing CSV and skip them")
    return parser


def main(argv=None, out=sys.stdout, err=sys.stderr, environ=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = build_config(args, environ).validate(args.command)
        if args.command == "fit":
            return cmd_fit(cfg, out)
        if args.command == "transform":
            return cmd_transform(cfg, out)
        if args.command == "eval":
            return cmd_eval(cfg, out)
        return cmd_sweep(cfg, out, resume=args.resume)
    except (ConfigError, TensorSizeError) as exc:
        print(f"config error: {exc}", file=err)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=err)
        return EXIT_DATA
    except (NumericalError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=err)
        return EXIT_NUMERIC
    except MvccaError as exc:
        print(f"error: {exc}", file=err)
        return 1
