"""Snapshots, CSV moment export and run manifests.

Snapshot layout (all integers little-endian)::

    b"DGPCSNAP" | u32 version | u64 header length | header JSON |
    array payload | u32 CRC32 of everything before it

The JSON header lists scalars and, for each array, its dtype, shape and byte
offset into the payload. Arrays are stored as little-endian f8/i8.
"""

from __future__ import annotations

import csv
import json
import os
import platform
import struct
import zlib

import numpy as np

from .basis import ChaosBasis, MomentTable
from .errors import SnapshotError
from .kl import KLResult
from .multiindex import MultiIndexSet
from .sampling import SampleEnsemble
from .solver import RestartState, rel_l2

MAGIC = b"DGPCSNAP"
VERSION = 1


def _pack(arrays, scalars):
    header = {"scalars": scalars, "arrays": {}}
    chunks, offset = [], 0
    for name in sorted(arrays):
        arr = arrays[name]
        if arr is None:
            continue
        arr = np.asarray(arr)
        dt = "<i8" if np.issubdtype(arr.dtype, np.integer) else "<f8"
        raw = np.ascontiguousarray(arr, dtype=dt).tobytes()
        header["arrays"][name] = {"dtype": dt, "shape": list(arr.shape), "offset": offset,
                                  "nbytes": len(raw)}
        chunks.append(raw)
        offset += len(raw)
    hbytes = json.dumps(header, sort_keys=True).encode()
    body = MAGIC + struct.pack("<IQ", VERSION, len(hbytes)) + hbytes + b"".join(chunks)
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


def _unpack(data):
    if len(data) < len(MAGIC) + 16 or data[: len(MAGIC)] != MAGIC:
        raise SnapshotError("not a snapshot file (bad magic)")
    version, hlen = struct.unpack_from("<IQ", data, len(MAGIC))
    if version != VERSION:
        raise SnapshotError(f"snapshot version {version} is not supported (expected {VERSION})")
    (crc,) = struct.unpack_from("<I", data, len(data) - 4)
    if zlib.crc32(data[:-4]) & 0xFFFFFFFF != crc:
        raise SnapshotError("snapshot is truncated or corrupt (checksum mismatch)")
    start = len(MAGIC) + 12
    try:
        header = json.loads(data[start:start + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SnapshotError("corrupt snapshot header") from exc
    payload = data[start + hlen:-4]
    arrays = {}
    for name, desc in header["arrays"].items():
        lo = desc["offset"]
        hi = lo + desc["nbytes"]
        if hi > len(payload):
            raise SnapshotError(f"array {name} extends past the end of the file")
        arrays[name] = np.frombuffer(payload[lo:hi], dtype=desc["dtype"]).reshape(desc["shape"]).copy()
    return arrays, header["scalars"]


def state_to_records(state):
    b = state.basis
    arrays = {
        "index_set": b.index_set.indices,
        "a": b.a, "triple": b.triple, "forcing": b.forcing,
        "eta_patterns": b.moments.eta_patterns, "eta_values": b.moments.eta_values,
        "coeffs": state.coeffs,
        "z_coeffs": state.z_coeffs, "nu_coeffs": state.nu_coeffs,
    }
    scalars = {
        "t": state.t, "j": state.j, "dt_next": state.dt_next,
        "K": b.index_set.K, "D": b.index_set.D, "N": b.index_set.N,
        "kinds": list(b.kinds), "jitter": b.jitter, "dropped": list(b.dropped),
        "has_ensemble": state.ensemble is not None, "has_kl": state.kl is not None,
    }
    if state.ensemble is not None:
        arrays["ensemble"] = state.ensemble.values
        scalars["generation"] = state.ensemble.generation
        scalars["rng_seed"] = state.ensemble.rng_seed
    if state.kl is not None:
        arrays.update({"kl_eigenvalues": state.kl.eigenvalues, "kl_modes": state.kl.modes,
                       "kl_eta_pce": state.kl.eta_pce, "kl_mean": state.kl.mean})
        scalars["kl_weight"] = state.kl.weight
    return arrays, scalars


def records_to_state(arrays, s):
    iset = MultiIndexSet(arrays["index_set"], s["K"], s["D"], s["N"])
    table = MomentTable(s["kinds"], arrays["eta_patterns"], arrays["eta_values"])
    basis = ChaosBasis(iset, tuple(s["kinds"]), arrays["a"], arrays["triple"], arrays["forcing"],
                       table, s["jitter"], tuple(s.get("dropped", ())))
    ens = None
    if s["has_ensemble"]:
        ens = SampleEnsemble(arrays["ensemble"], s["generation"], s["rng_seed"])
    kl = None
    if s["has_kl"]:
        kl = KLResult(arrays["kl_eigenvalues"], arrays["kl_modes"], arrays["kl_eta_pce"],
                      arrays["kl_mean"], s["kl_weight"])
    return RestartState(s["t"], s["j"], basis, arrays["coeffs"], ens, arrays.get("z_coeffs"),
                        arrays.get("nu_coeffs"), kl, s["dt_next"])


def write_snapshot(state, path):
    arrays, scalars = state_to_records(state)
    data = _pack(arrays, scalars)
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def read_snapshot(path):
    with open(path, "rb") as fh:
        data = fh.read()
    return records_to_state(*_unpack(data))


# ---------------------------------------------------------------- CSV export

MOMENT_NAMES = ("mean", "variance", "third", "fourth")


def write_moment_csv(path, field, grid):
    """Columns x[,y][,component],value; one row per grid point (and component)."""
    field = np.asarray(field)
    comps = field.shape[: field.ndim - grid.d]
    ncomp = int(np.prod(comps)) if comps else 1
    flat = field.reshape(ncomp, *grid.shape)
    coords = grid.mesh()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        head = ["x", "y"][: grid.d] + (["component"] if ncomp > 1 else []) + ["value"]
        w.writerow(head)
        for c in range(ncomp):
            vals = flat[c].ravel()
            cols = [g.ravel() for g in coords]
            for i in range(vals.size):
                row = [repr(float(g[i])) for g in cols]
                if ncomp > 1:
                    row.append(c)
                row.append(repr(float(vals[i])))
                w.writerow(row)


def read_moment_csv(path):
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    return np.array([float(r["value"]) for r in rows])


def export_moments(out_dir, t, moments, grid, names=MOMENT_NAMES):
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for name in names:
        if name not in moments:
            continue
        path = os.path.join(out_dir, f"t{t:.6f}_{name}.csv")
        write_moment_csv(path, moments[name], grid)
        written.append(path)
    return written


def error_summary(moments, reference, names=MOMENT_NAMES):
    """Relative L2 errors per moment for every time present in both."""
    rows = []
    for t in sorted(set(moments) & set(reference)):
        row = {"t": t}
        for name in names:
            if name in moments[t] and name in reference[t]:
                row[name] = rel_l2(moments[t][name], reference[t][name])
        rows.append(row)
    return rows


def write_error_table(path, rows, names=MOMENT_NAMES):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + list(names))
        for r in rows:
            w.writerow([r["t"]] + [f"{r.get(n, float('nan')):.6e}" for n in names])


def load_moment_dir(path, names=MOMENT_NAMES):
    """Inverse of :func:`export_moments` for a whole directory: {t: {name: values}}."""
    out = {}
    for fname in sorted(os.listdir(path)):
        if not fname.startswith("t") or not fname.endswith(".csv"):
            continue
        stem = fname[1:-4]
        tstr, _, name = stem.partition("_")
        if name not in names:
            continue
        out.setdefault(round(float(tstr), 12), {})[name] = read_moment_csv(os.path.join(path, fname))
    return out


# ---------------------------------------------------------------- manifest

def versions():
    import scipy

    from . import __version__
    return {"python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "dgpc": __version__}


def write_manifest(out_dir, config_dict, extra=None):
    os.makedirs(out_dir, exist_ok=True)
    doc = {"config": config_dict, "seed": config_dict.get("seed"), "versions": versions()}
    if extra:
        doc.update(extra)
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
    return path


def read_manifest(out_dir):
    path = os.path.join(out_dir, "manifest.json")
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise SnapshotError(f"no run manifest at {path}") from exc
