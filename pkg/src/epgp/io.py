"""File formats: dataset, truth, prediction, trace and results CSVs, model
checkpoints and run manifests.

Floats are written in their shortest round-trip form (at most 17
significant digits) so that every stored value reads back bit-identically.
"""

from __future__ import annotations

import csv
import hashlib
import json
import subprocess
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .sepgp import Dataset, SpectralParams
from .truth import TruthField


class ParseError(ValueError):
    """Malformed input file; the message names the offending line."""


class ChecksumMismatch(ValueError):
    """Checkpoint contents do not match their recorded checksum."""


def fmt(x) -> str:
    return repr(float(x))


def _write_rows(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _read_rows(path):
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError(f"{path}: line 1: empty file")
    return rows[0], rows[1:]


# ---------------------------------------------------------------------------
# datasets
# ---------------------------------------------------------------------------


def write_dataset(path, data: Dataset):
    n = data.X.shape[1]
    header = [f"x{i + 1}" for i in range(n)] + ["component", "value"]
    rows = [
        [fmt(v) for v in data.X[p]] + [str(int(c)), fmt(y)]
        for p, c, y in zip(data.point, data.component, data.value)
    ]
    _write_rows(path, header, rows)


def read_dataset(path, n=None) -> Dataset:
    """Parse ``x1,...,xn,component,value`` rows. Rows sharing the same
    coordinates become observations of one point."""
    header, rows = _read_rows(path)
    k = len(header) - 2
    expect = [f"x{i + 1}" for i in range(k)] + ["component", "value"]
    if k < 1 or [h.strip() for h in header] != expect:
        raise ParseError(f"{path}: line 1: header must be x1,...,xn,component,value")
    if n is not None and k != n:
        raise ParseError(f"{path}: line 1: expected {n} coordinates, found {k}")
    index, X, point, comp, value = {}, [], [], [], []
    for lineno, row in enumerate(rows, start=2):
        if not row:
            continue
        if len(row) != k + 2:
            raise ParseError(f"{path}: line {lineno}: expected {k + 2} fields, got {len(row)}")
        try:
            x = tuple(float(v) for v in row[:k])
            c = int(row[k])
            y = float(row[k + 1])
        except ValueError as exc:
            raise ParseError(f"{path}: line {lineno}: {exc}") from None
        if not (np.all(np.isfinite(x)) and np.isfinite(y)) or c < 0:
            raise ParseError(f"{path}: line {lineno}: non-finite value or negative component")
        if x not in index:
            index[x] = len(X)
            X.append(x)
        point.append(index[x])
        comp.append(c)
        value.append(y)
    Xa = np.array(X, dtype=float).reshape(len(X), k)
    return Dataset(Xa, point, comp, value)


# ---------------------------------------------------------------------------
# truth fields and predictions
# ---------------------------------------------------------------------------


def write_truth(path, truth: TruthField):
    """CSV of every node plus a ``.json`` sidecar holding the grid."""
    path = Path(path)
    pts, vals = truth.points(), truth.flat_values()
    n = pts.shape[1]
    header = [f"x{i + 1}" for i in range(n)] + [f"u{j + 1}" for j in range(truth.out_dim)]
    _write_rows(path, header, ([fmt(v) for v in p] + [fmt(v) for v in u] for p, u in zip(pts, vals)))
    sidecar = {"grid": [list(g) for g in truth.grid], "provenance": truth.provenance,
               "out_dim": truth.out_dim}
    path.with_suffix(".json").write_text(json.dumps(sidecar, indent=1) + "\n")


def read_truth(path) -> TruthField:
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    grid = tuple((float(lo), float(hi), int(k)) for lo, hi, k in meta["grid"])
    _, rows = _read_rows(path)
    try:
        data = np.array(rows, dtype=float)
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from None
    shape = tuple(g[2] for g in grid) + (int(meta["out_dim"]),)
    return TruthField(grid, data[:, len(grid):].reshape(shape), meta["provenance"])


def write_prediction(path, Xq, mean, var=None):
    Xq = np.atleast_2d(Xq)
    n, out = Xq.shape[1], mean.shape[1]
    header = [f"x{i + 1}" for i in range(n)] + [f"mean{j + 1}" for j in range(out)]
    if var is not None:
        header += [f"var{j + 1}" for j in range(out)]
    rows = []
    for i in range(len(Xq)):
        row = [fmt(v) for v in Xq[i]] + [fmt(v) for v in mean[i]]
        if var is not None:
            row += [fmt(v) for v in var[i]]
        rows.append(row)
    _write_rows(path, header, rows)


def read_points(path) -> np.ndarray:
    """Query points from a CSV whose leading columns are ``x1..xn``; any
    further columns are ignored."""
    header, rows = _read_rows(path)
    k = 0
    while k < len(header) and header[k].strip() == f"x{k + 1}":
        k += 1
    if k == 0:
        raise ParseError(f"{path}: line 1: expected x1,... columns")
    out = np.empty((len(rows), k))
    for i, row in enumerate(rows):
        try:
            out[i] = [float(v) for v in row[:k]]
        except ValueError as exc:
            raise ParseError(f"{path}: line {i + 2}: {exc}") from None
    return out


# ---------------------------------------------------------------------------
# training traces and results
# ---------------------------------------------------------------------------


def write_trace(path, trace, with_timing=True):
    header = ["epoch", "nlml", "lr_multiplier", "wall_ms"]
    rows = [
        [str(r.epoch), fmt(r.nlml), fmt(r.lr_multiplier), fmt(r.wall_ms) if with_timing else ""]
        for r in trace
    ]
    _write_rows(path, header, rows)


@dataclass
class ResultRow:
    experiment: str
    system: str
    flavor: str
    features: int
    datapoints: int
    seed: int
    rmse: float
    nlml_final: float
    epochs: int
    wall_seconds: float


RESULT_FIELDS = tuple(f.name for f in fields(ResultRow))


def write_results(path, rows):
    """Rows sorted by (features, datapoints, flavor, seed)."""
    rows = sorted(rows, key=lambda r: (r.features, r.datapoints, r.flavor, r.seed))

    def cell(v):
        return fmt(v) if isinstance(v, float) else str(v)

    _write_rows(path, RESULT_FIELDS, ([cell(v) for v in asdict(r).values()] for r in rows))


def read_results(path):
    header, rows = _read_rows(path)
    if tuple(header) != RESULT_FIELDS:
        raise ParseError(f"{path}: line 1: unexpected results header")
    types = {f.name: f.type for f in fields(ResultRow)}
    conv = {"int": int, "float": float, "str": str}
    return [ResultRow(**{k: conv[types[k]](v) for k, v in zip(header, r)}) for r in rows]


# ---------------------------------------------------------------------------
# checkpoints and manifests
# ---------------------------------------------------------------------------


def _digest(payload) -> str:
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def params_to_dict(theta: SpectralParams) -> dict:
    return {
        "F": theta.F,
        "d": theta.d,
        "slot": theta.slot.tolist(),
        "Zre": theta.Zre.tolist(),
        "Zim": theta.Zim.tolist(),
        "logSigma": theta.log_sigma.tolist(),
        "logNoise": theta.log_noise,
        "imaginary": theta.imaginary.tolist(),
        "frozen": theta.frozen.tolist(),
        "noiseFrozen": theta.noise_frozen,
        "logScale": theta.log_scale,
    }


def params_from_dict(d) -> SpectralParams:
    F, dim = int(d["F"]), int(d["d"])
    return SpectralParams(
        slot=d["slot"],
        Zre=np.array(d["Zre"], dtype=float).reshape(F, dim),
        Zim=np.array(d["Zim"], dtype=float).reshape(F, dim),
        log_sigma=d["logSigma"],
        log_noise=d["logNoise"],
        imaginary=d["imaginary"],
        frozen=d["frozen"],
        noise_frozen=bool(d.get("noiseFrozen", False)),
        log_scale=d.get("logScale"),
    )


def write_checkpoint(path, system, flavor, theta: SpectralParams, data: Dataset | None = None,
                     seed=0, epoch=0, nlml=None):
    """JSON checkpoint with a SHA-256 checksum over its canonical content.

    The training data are embedded so that predictions can be made from the
    checkpoint alone.
    """
    payload = {"system": system, "flavor": flavor, **params_to_dict(theta),
               "seed": int(seed), "epoch": int(epoch),
               "nlml": None if nlml is None else float(nlml)}
    if data is not None:
        payload["data"] = {"X": data.X.tolist(), "point": data.point.tolist(),
                           "component": data.component.tolist(), "value": data.value.tolist()}
    payload["checksum"] = _digest(payload)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=1) + "\n")


def read_checkpoint(path):
    """Returns ``(payload, theta, data or None)``."""
    try:
        payload = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ChecksumMismatch(f"{path}: not valid JSON ({exc})") from None
    stored = payload.pop("checksum", None)
    if stored != _digest(payload):
        raise ChecksumMismatch(f"{path}: checksum does not match contents")
    theta = params_from_dict(payload)
    data = None
    if "data" in payload:
        dd = payload["data"]
        data = Dataset(np.array(dd["X"], dtype=float), dd["point"], dd["component"], dd["value"])
    return payload, theta, data


def version_string() -> str:
    """``git describe``-style version, falling back to the package version."""
    from . import __version__

    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=Path(__file__).resolve().parent, capture_output=True, text=True, timeout=5,
        )
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+g{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def write_manifest(path, config: dict, seeds):
    manifest = {"config": config, "version": version_string(), "seeds": list(seeds)}
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
