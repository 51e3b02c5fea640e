"""Binary model artifacts.

Layout (all little-endian)::

    b"MVCCA\\0"            6-byte magic
    version               1 byte
    header_len            uint64
    header                UTF-8 JSON, sorted keys, compact separators
    arrays                float64 data, concatenated in header order

The header records the model kind, scalar fields, the training-config echo
and each array's name and shape. Output bytes depend only on the model, so a
fixed seed gives identical files.
"""

import json
import struct
from dataclasses import asdict

import numpy as np

from . import cca, deep
from . import tensor as tl
from .evaluation import Preprocessor
from .exceptions import DataError
from .net import ViewNetwork

MAGIC = b"MVCCA\0"
VERSION = 1


class _Writer:
    def __init__(self):
        self.entries = []
        self.blobs = []

    def add(self, name, array):
        a = np.ascontiguousarray(array, dtype="<f8")
        self.entries.append({"name": name, "shape": list(a.shape)})
        self.blobs.append(a.tobytes())


class _Reader:
    def __init__(self, entries, payload):
        self.arrays = {}
        offset = 0
        for e in entries:
            count = int(np.prod(e["shape"], dtype=np.int64))
            nbytes = 8 * count
            if offset + nbytes > len(payload):
                raise DataError("artifact is truncated")
            a = np.frombuffer(payload, dtype="<f8", count=count, offset=offset)
            self.arrays[e["name"]] = a.reshape(e["shape"]).astype(np.float64)
            offset += nbytes

    def get(self, name):
        try:
            return self.arrays[name]
        except KeyError:
            raise DataError(f"artifact lacks array {name!r}") from None

    def series(self, prefix, count):
        return [self.get(f"{prefix}/{i}") for i in range(count)]


def _put_series(w, prefix, arrays):
    for i, a in enumerate(arrays):
        w.add(f"{prefix}/{i}", a)


def _put_networks(w, nets):
    meta = []
    for r, net in enumerate(nets):
        _put_series(w, f"net/{r}/W", net.weights)
        _put_series(w, f"net/{r}/b", net.biases)
        meta.append({"activation": net.activation, "dropout": net.dropout,
                     "linear_output": net.linear_output, "layers": net.n_layers})
    return meta


def _get_networks(rd, meta):
    return [ViewNetwork(rd.series(f"net/{r}/W", m["layers"]),
                        rd.series(f"net/{r}/b", m["layers"]),
                        m["activation"], m["dropout"], m["linear_output"])
            for r, m in enumerate(meta)]


def _put_cp(w, F, prefix="cp"):
    w.add(f"{prefix}/weights", F.weights)
    _put_series(w, f"{prefix}/factor", F.factors)
    return F.order


def _get_cp(rd, order, prefix="cp"):
    return tl.CpFactors(rd.get(f"{prefix}/weights"), rd.series(f"{prefix}/factor", order))


def encode(model, prep=None, meta=None):
    """Serialize ``model`` (plus an optional :class:`Preprocessor`) to bytes."""
    w = _Writer()
    k = model.n_views
    header = {"meta": meta or {}, "n_views": k, "method": model.method}
    if isinstance(model, cca.ProjectionModel):
        header["kind"] = "projection"
        header["eps"] = model.eps
        header["objective"] = model.objective
        _put_series(w, "means", model.means)
        _put_series(w, "proj", model.projections)
        for key in ("correlations", "eigenvalues"):
            if key in model.extra:
                w.add(f"extra/{key}", model.extra[key])
        if "cp" in model.extra:
            header["cp_order"] = _put_cp(w, model.extra["cp"])
            _put_series(w, "whiteners", model.extra["whiteners"])
    elif isinstance(model, cca.GccaModel):
        header["kind"] = "gcca"
        header["eps"] = model.eps
        w.add("G", model.G)
        w.add("eigenvalues", model.eigenvalues)
        _put_series(w, "means", model.means)
        _put_series(w, "proj", model.projections)
    elif isinstance(model, deep.DtccaModel):
        header["kind"] = "dtcca"
        header["networks"] = _put_networks(w, model.networks)
        header["cp_order"] = _put_cp(w, model.factors)
        _put_series(w, "whiteners", model.whiteners)
        _put_series(w, "means", model.means)
        header["config"] = asdict(model.config)
        header["history"] = model.history
        header["stopped"] = model.stopped
    elif isinstance(model, deep.DgccaModel):
        header["kind"] = "dgcca"
        header["networks"] = _put_networks(w, model.networks)
        w.add("G", model.G)
        _put_series(w, "proj", model.projections)
        _put_series(w, "means", model.means)
        header["config"] = asdict(model.config)
        header["history"] = model.history
        header["stopped"] = model.stopped
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    if prep is not None and prep.stats is not None:
        header["standardized"] = True
        _put_series(w, "pre/std/mean", [mu for mu, _ in prep.stats])
        _put_series(w, "pre/std/scale", [sd for _, sd in prep.stats])
    if prep is not None and prep.pca is not None:
        header["pca"] = True
        _put_series(w, "pre/pca/mean", [mu for mu, _ in prep.pca])
        _put_series(w, "pre/pca/P", [P for _, P in prep.pca])
    header["arrays"] = w.entries
    text = json.dumps(header, sort_keys=True, separators=(",", ":"), allow_nan=False)
    head = text.encode("utf-8")
    return MAGIC + bytes([VERSION]) + struct.pack("<Q", len(head)) + head + b"".join(w.blobs)


def decode(data):
    """Inverse of :func:`encode`; returns ``(model, prep, header)``."""
    if len(data) < len(MAGIC) + 9 or data[:len(MAGIC)] != MAGIC:
        raise DataError("not a model artifact (bad magic)")
    version = data[len(MAGIC)]
    if version > VERSION:
        raise DataError(f"artifact format version {version} is newer than supported "
                        f"version {VERSION}")
    start = len(MAGIC) + 1
    (hlen,) = struct.unpack("<Q", data[start:start + 8])
    start += 8
    try:
        header = json.loads(data[start:start + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataError(f"corrupt artifact header: {exc}") from None
    rd = _Reader(header["arrays"], memoryview(data)[start + hlen:])
    k = header["n_views"]
    kind = header["kind"]
    if kind == "projection":
        extra = {key: rd.arrays[f"extra/{key}"] for key in ("correlations", "eigenvalues")
                 if f"extra/{key}" in rd.arrays}
        if "cp_order" in header:
            extra["cp"] = _get_cp(rd, header["cp_order"])
            extra["whiteners"] = rd.series("whiteners", k)
        model = cca.ProjectionModel(header["method"], rd.series("means", k),
                                    rd.series("proj", k), header["eps"],
                                    header["objective"], extra)
    elif kind == "gcca":
        model = cca.GccaModel(rd.get("G"), rd.series("means", k), rd.series("proj", k),
                              header["eps"], rd.get("eigenvalues"))
    elif kind in ("dtcca", "dgcca"):
        nets = _get_networks(rd, header["networks"])
        config = deep.TrainConfig(**header["config"])
        if kind == "dtcca":
            model = deep.DtccaModel(nets, rd.series("whiteners", k),
                                    _get_cp(rd, header["cp_order"]), rd.series("means", k),
                                    header["history"], config, header["stopped"])
        else:
            model = deep.DgccaModel(nets, rd.get("G"), rd.series("proj", k),
                                    rd.series("means", k), header["history"], config,
                                    header["stopped"])
    else:
        raise DataError(f"unknown artifact kind {kind!r}")
    prep = Preprocessor()
    if header.get("standardized"):
        prep.stats = list(zip(rd.series("pre/std/mean", k), rd.series("pre/std/scale", k)))
    if header.get("pca"):
        prep.pca = list(zip(rd.series("pre/pca/mean", k), rd.series("pre/pca/P", k)))
    return model, prep, header


def save(path, model, prep=None, meta=None):
    data = encode(model, prep, meta)
    with open(path, "wb") as fh:
        fh.write(data)
    return len(data)


def load(path):
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read artifact {path}: {exc.strerror}") from exc
    return decode(data)
