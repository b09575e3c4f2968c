"""File formats: curve/covariate CSV parsing and JSON model artifacts.

Curves travel as CSV with one row per (subject, time): header
``subject,t,c11,c12,...,cmm`` listing the upper triangle row-major; the full
matrix is rebuilt by symmetry.  Covariates are ``subject,x1..xp``.  Numbers
are written with 17 significant digits so files round-trip bit-exactly.
Model artifacts are pretty-printed JSON with explicit array shapes and a
schema version; loaders refuse unknown major versions.
"""

from __future__ import annotations

import csv
import hashlib
import json

import numpy as np

from .cca import CCAModel
from .errors import ValidationError
from .fields import SPDCurve, TangentField, TimeGrid
from .pipeline import EuclideanFCCAModel, FunctionalCCAModel
from .rfpca import RFPCABasis
from .simgen import SimConfig, SimTruth

SCHEMA_VERSION = "1.0"

FLOAT_FMT = "{:.17g}"


def _fmt(x) -> str:
    return FLOAT_FMT.format(float(x))


def _upper_triangle_columns(m: int):
    return [f"c{i + 1}{j + 1}" for i in range(m) for j in range(i, m)]


def _dim_from_column_count(count: int) -> int:
    m = int((np.sqrt(8 * count + 1) - 1) / 2)
    if m * (m + 1) // 2 != count:
        raise ValidationError(
            f"{count} value columns do not form an upper triangle of any square matrix"
        )
    return m


def write_curves(path, ids, curves):
    if len(ids) != len(curves):
        raise ValidationError("one id per curve required")
    m = curves[0].dim
    header = ["subject", "t"] + _upper_triangle_columns(m)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for sid, curve in zip(ids, curves):
            for l, t in enumerate(curve.grid.points):
                vals = [curve.values[l, i, j]
                        for i in range(m) for j in range(i, m)]
                writer.writerow([sid, _fmt(t)] + [_fmt(v) for v in vals])


def load_curves(path):
    """Parse a curves CSV into (ids, list of SPDCurve)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path}: line 1: empty file") from None
        if len(header) < 3 or header[0] != "subject" or header[1] != "t":
            raise ValidationError(f"{path}: line 1: expected header subject,t,c11,...")
        m = _dim_from_column_count(len(header) - 2)
        expected = _upper_triangle_columns(m)
        if header[2:] != expected:
            raise ValidationError(
                f"{path}: line 1: value columns must be {','.join(expected)}"
            )
        order = []
        times = {}
        mats = {}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValidationError(f"{path}: line {lineno}: expected {len(header)} fields")
            sid = row[0]
            try:
                t = float(row[1])
                vals = [float(v) for v in row[2:]]
            except ValueError as exc:
                raise ValidationError(f"{path}: line {lineno}: {exc}") from None
            if sid not in mats:
                if order and order[-1] != sid and sid in set(order):
                    raise ValidationError(
                        f"{path}: line {lineno}: duplicate subject id {sid!r}"
                    )
                order.append(sid)
                times[sid] = []
                mats[sid] = []
            elif order[-1] != sid:
                raise ValidationError(
                    f"{path}: line {lineno}: duplicate subject id {sid!r}"
                )
            full = np.zeros((m, m))
            k = 0
            for i in range(m):
                for j in range(i, m):
                    full[i, j] = vals[k]
                    full[j, i] = vals[k]
                    k += 1
            times[sid].append(t)
            mats[sid].append(full)
    if not order:
        raise ValidationError(f"{path}: line 2: no data rows")
    ref = times[order[0]]
    grid = TimeGrid.from_points(ref)
    curves = []
    for sid in order:
        if times[sid] != ref:
            raise ValidationError(
                f"{path}: subject {sid!r}: time grid differs from subject {order[0]!r}"
            )
        try:
            curves.append(SPDCurve(grid=grid, values=np.stack(mats[sid])))
        except ValidationError as exc:
            raise ValidationError(f"{path}: subject {sid!r}: {exc}") from None
    return order, curves


def write_covariates(path, ids, x):
    x = np.asarray(x, dtype=float)
    header = ["subject"] + [f"x{j + 1}" for j in range(x.shape[1])]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for sid, row in zip(ids, x):
            writer.writerow([sid] + [_fmt(v) for v in row])


def load_covariates(path):
    """Parse a covariates CSV into (ids, X)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path}: line 1: empty file") from None
        if len(header) < 2 or header[0] != "subject":
            raise ValidationError(f"{path}: line 1: expected header subject,x1,...")
        p = len(header) - 1
        ids = []
        rows = []
        seen = set()
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != p + 1:
                raise ValidationError(f"{path}: line {lineno}: expected {p + 1} fields")
            sid = row[0]
            if sid in seen:
                raise ValidationError(f"{path}: line {lineno}: duplicate subject id {sid!r}")
            seen.add(sid)
            try:
                rows.append([float(v) for v in row[1:]])
            except ValueError as exc:
                raise ValidationError(f"{path}: line {lineno}: {exc}") from None
            ids.append(sid)
    if not ids:
        raise ValidationError(f"{path}: line 2: no data rows")
    return ids, np.asarray(rows, dtype=float)


def align_covariates(curve_ids, cov_ids, x):
    """Reorder covariate rows to the curve order; ids must match one-to-one."""
    index = {sid: i for i, sid in enumerate(cov_ids)}
    missing = [sid for sid in curve_ids if sid not in index]
    extra = [sid for sid in cov_ids if sid not in set(curve_ids)]
    if missing or extra:
        raise ValidationError(
            f"subject ids do not match one-to-one (missing {missing[:3]}, extra {extra[:3]})"
        )
    return x[[index[sid] for sid in curve_ids]]


def write_table(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([
                _fmt(v) if isinstance(v, float) else v for v in row
            ])


# ---------------------------------------------------------------------------
# JSON artifacts
# ---------------------------------------------------------------------------

def _arr(a):
    a = np.asarray(a, dtype=float)
    return {"shape": list(a.shape), "data": [float(v) for v in a.ravel()]}


def _unarr(obj):
    return np.asarray(obj["data"], dtype=float).reshape(obj["shape"])


def config_hash(config: dict) -> str:
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def _dump(payload, path):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_versioned(path, expected_kinds):
    with open(path) as fh:
        payload = json.load(fh)
    version = str(payload.get("schema_version", ""))
    if version.split(".")[0] != SCHEMA_VERSION.split(".")[0]:
        raise ValidationError(
            f"{path}: unsupported schema version {version!r} (supported {SCHEMA_VERSION})"
        )
    if payload.get("kind") not in expected_kinds:
        raise ValidationError(
            f"{path}: unexpected artifact kind {payload.get('kind')!r}"
        )
    return payload


def save_model(model, path, seed=None, config=None):
    config = config or {}
    common = {
        "schema_version": SCHEMA_VERSION,
        "seed": seed,
        "config_hash": config_hash(config),
        "config": config,
        "T": _arr(model.cca.T),
        "H": _arr(model.cca.H),
        "correlations": _arr(model.cca.correlations),
        "K": model.cca.K,
        "tied": model.cca.tied,
        "x_mean": _arr(model.x_mean),
        "x_scale": _arr(model.x_scale),
    }
    if isinstance(model, FunctionalCCAModel):
        mu = model.basis.mean_curve
        payload = {
            **common,
            "kind": "functional_cca",
            "grid_points": _arr(mu.grid.points),
            "grid_weights": _arr(mu.grid.weights),
            "mean_curve": _arr(mu.values),
            "components": _arr(np.stack([c.values for c in model.basis.components])),
            "eigenvalues": _arr(model.basis.eigenvalues),
            "canonical_functions": _arr(
                np.stack([f.values for f in model.canonical_functions])
                if model.K else np.zeros((0,) + mu.values.shape)
            ),
        }
    elif isinstance(model, EuclideanFCCAModel):
        payload = {
            **common,
            "kind": "euclidean_fcca",
            "grid_points": _arr(model.grid.points),
            "grid_weights": _arr(model.grid.weights),
            "mean": _arr(model.mean),
            "components": _arr(model.components),
            "eigenvalues": _arr(model.eigenvalues),
            "canonical_functions": _arr(model.canonical_functions),
        }
    else:
        raise ValidationError(f"cannot serialize model of type {type(model).__name__}")
    _dump(payload, path)


def load_model(path):
    payload = _load_versioned(path, ("functional_cca", "euclidean_fcca"))
    cca = CCAModel(
        T=_unarr(payload["T"]),
        H=_unarr(payload["H"]),
        correlations=_unarr(payload["correlations"]),
        K=int(payload["K"]),
        tied=bool(payload["tied"]),
    )
    grid = TimeGrid(points=_unarr(payload["grid_points"]),
                    weights=_unarr(payload["grid_weights"]))
    if payload["kind"] == "functional_cca":
        mu = SPDCurve(grid=grid, values=_unarr(payload["mean_curve"]))
        comps = tuple(
            TangentField(base=mu, values=v) for v in _unarr(payload["components"])
        )
        basis = RFPCABasis(mean_curve=mu, components=comps,
                           eigenvalues=_unarr(payload["eigenvalues"]))
        psis = tuple(
            TangentField(base=mu, values=v)
            for v in _unarr(payload["canonical_functions"])
        )
        return FunctionalCCAModel(
            basis=basis, cca=cca, canonical_functions=psis,
            x_mean=_unarr(payload["x_mean"]), x_scale=_unarr(payload["x_scale"]),
        )
    return EuclideanFCCAModel(
        grid=grid, mean=_unarr(payload["mean"]),
        components=_unarr(payload["components"]),
        eigenvalues=_unarr(payload["eigenvalues"]), cca=cca,
        canonical_functions=_unarr(payload["canonical_functions"]),
        x_mean=_unarr(payload["x_mean"]), x_scale=_unarr(payload["x_scale"]),
    )


def save_truth(truth: SimTruth, path):
    cfg = truth.config
    payload = {
        "schema_version": SCHEMA_VERSION,
        "kind": "sim_truth",
        "config": {
            "p": cfg.p, "d": cfg.d, "m": cfg.m, "L": cfg.L, "K": cfg.K,
            "k1": cfg.k1, "N": cfg.N, "gamma": list(cfg.gamma), "seed": cfg.seed,
        },
        "grid_points": _arr(truth.mu.grid.points),
        "grid_weights": _arr(truth.mu.grid.weights),
        "mean_curve": _arr(truth.mu.values),
        "phis": _arr(np.stack([f.values for f in truth.phis])),
        "etas": _arr(truth.etas),
        "thetas": _arr(truth.thetas),
        "support": {"shape": [len(truth.support)],
                    "data": [int(i) for i in truth.support]},
        "gammas": _arr(truth.gammas),
    }
    _dump(payload, path)


def load_truth(path) -> SimTruth:
    payload = _load_versioned(path, ("sim_truth",))
    cfgd = payload["config"]
    cfg = SimConfig(p=cfgd["p"], d=cfgd["d"], m=cfgd["m"], L=cfgd["L"],
                    K=cfgd["K"], k1=cfgd["k1"], N=cfgd["N"],
                    gamma=tuple(cfgd["gamma"]), seed=cfgd["seed"])
    grid = TimeGrid(points=_unarr(payload["grid_points"]),
                    weights=_unarr(payload["grid_weights"]))
    mu = SPDCurve(grid=grid, values=_unarr(payload["mean_curve"]))
    phis = tuple(TangentField(base=mu, values=v) for v in _unarr(payload["phis"]))
    etas = _unarr(payload["etas"])
    thetas = _unarr(payload["thetas"])
    support = np.asarray(payload["support"]["data"], dtype=int)
    n_heavy = cfg.k1 // 2
    sigma_xs = np.diag(np.concatenate([np.full(n_heavy, 2.0),
                                       np.ones(cfg.k1 - n_heavy)]))
    sigma_x = np.eye(cfg.p)
    sigma_x[:cfg.k1, :cfg.k1] = sigma_xs
    sigma_y = np.diag(np.arange(cfg.d, 0.0, -1.0))
    return SimTruth(config=cfg, mu=mu, phis=phis, etas=etas, thetas=thetas,
                    support=support, sigma_x=sigma_x, sigma_y=sigma_y,
                    gammas=_unarr(payload["gammas"]))
