"""Result persistence: VTK legacy fields, line-sample CSV, trajectory container, CSV logs, manifests.

Trajectory container layout (all little-endian)::

    offset  size  content
    0       8     magic b"MXTRJ1\\0\\0"
    8       4     uint32 format version (1)
    12      4     uint32 dtype code (1 = float64)
    16      8     uint64 N_t (number of time steps of the run)
    24      8     uint64 stride
    32      8     uint64 n_stored (number of stored states)
    40      8     uint64 n_edge (interior edge coefficients per state)
    48      8     uint64 n_face (face coefficients per state)
    56      8     float64 dt
    64      8*n_stored   uint64 stored step indices
    ...     per stored state: n_edge float64 (e), then n_face float64 (b)
"""
from __future__ import annotations

import csv
import hashlib
import json
import os
import struct
import tempfile

import numpy as np

from .assembly import cell_average, evaluate_field

__all__ = ["MAGIC", "write_trajectory", "read_trajectory", "write_vtk", "read_vtk_cell_data", "line_samples",
           "write_line_csv", "read_line_csv", "write_diagnostics_csv", "write_history_csv", "write_manifest",
           "summary_hash", "export_fields"]

MAGIC = b"MXTRJ1\0\0"
_HEADER = struct.Struct("<8sIIQQQQQd")
_DTYPES = {1: np.dtype("<f8")}


def _atomic_write(path, data, mode="wb"):
    d = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_trajectory(path, traj):
    """Write the stored nodal states of a :class:`StateTrajectory`."""
    steps = np.asarray(traj.steps_stored, dtype="<u8")
    n_edge = traj.e.shape[1]
    n_face = traj.b.shape[1]
    head = _HEADER.pack(MAGIC, 1, 1, traj.grid.steps, traj.stride, len(steps), n_edge, n_face, traj.grid.dt)
    body = [head, steps.tobytes()]
    for k in range(len(steps)):
        body.append(np.ascontiguousarray(traj.e[k], dtype="<f8").tobytes())
        body.append(np.ascontiguousarray(traj.b[k], dtype="<f8").tobytes())
    _atomic_write(path, b"".join(body))


def read_trajectory(path):
    """Read a trajectory container; returns a dict with header fields and ``steps``, ``e``, ``b``."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise ValueError("file too short for a trajectory header")
    magic, version, code, n_steps, stride, n_stored, n_edge, n_face, dt = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise ValueError("not a trajectory container (bad magic)")
    if version != 1 or code not in _DTYPES:
        raise ValueError(f"unsupported container version {version} / dtype code {code}")
    off = _HEADER.size
    steps = np.frombuffer(raw, dtype="<u8", count=n_stored, offset=off).astype(np.int64)
    off += 8 * n_stored
    per = n_edge + n_face
    expected = off + 8 * per * n_stored
    if len(raw) != expected:
        raise ValueError(f"payload size mismatch: {len(raw)} bytes, expected {expected}")
    data = np.frombuffer(raw, dtype=_DTYPES[code], count=per * n_stored, offset=off).reshape(n_stored, per)
    return {"n_steps": int(n_steps), "stride": int(stride), "dt": float(dt), "steps": steps,
            "e": data[:, :n_edge].copy(), "b": data[:, n_edge:].copy()}


# ---------------------------------------------------------------------------
# VTK legacy


def _fmt(a):
    return "\n".join(" ".join(repr(float(v)) for v in row) for row in np.atleast_2d(a))


def write_vtk(path, mesh, e_full, b_full, curl_z=None, title="maxcloak fields", time=None):
    """Legacy ASCII STRUCTURED_GRID with cell-averaged ``E``, ``B``, their magnitudes and ``|curl z|``.

    ``e_full`` is a full edge vector, ``b_full`` and ``curl_z`` full face vectors.
    """
    E = cell_average(mesh, e_full, "edge")
    B = cell_average(mesh, b_full, "face")
    CZ = np.zeros(mesh.n_cells) if curl_z is None else np.linalg.norm(cell_average(mesh, curl_z, "face"), axis=1)
    nx, ny, nz = mesh.counts
    ax = [mesh.origin[d] + mesh.spacing[d] * np.arange(mesh.counts[d] + 1) for d in range(3)]
    Z, Y, X = np.meshgrid(ax[2], ax[1], ax[0], indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)
    out = ["# vtk DataFile Version 3.0", title if time is None else f"{title} t={time!r}", "ASCII",
           "DATASET STRUCTURED_GRID", f"DIMENSIONS {nx + 1} {ny + 1} {nz + 1}", f"POINTS {len(pts)} double",
           _fmt(pts), f"CELL_DATA {mesh.n_cells}"]
    out += ["VECTORS E double", _fmt(E), "VECTORS B double", _fmt(B)]
    for name, arr in (("E_magnitude", np.linalg.norm(E, axis=1)), ("B_magnitude", np.linalg.norm(B, axis=1)),
                      ("curl_z_magnitude", CZ)):
        out += [f"SCALARS {name} double 1", "LOOKUP_TABLE default", "\n".join(repr(float(v)) for v in arr)]
    _atomic_write(path, ("\n".join(out) + "\n").encode("ascii"))


def read_vtk_cell_data(path):
    """Parse the cell arrays of a file written by :func:`write_vtk` (for tests and tooling)."""
    with open(path, encoding="ascii") as fh:
        tokens = fh.read().split("\n")
    out = {}
    i = 0
    n = None
    while i < len(tokens):
        line = tokens[i].strip()
        if line.startswith("CELL_DATA"):
            n = int(line.split()[1])
        elif line.startswith("VECTORS") and n is not None:
            name = line.split()[1]
            out[name] = np.array([[float(v) for v in tokens[i + 1 + k].split()] for k in range(n)])
            i += n
        elif line.startswith("SCALARS") and n is not None:
            name = line.split()[1]
            out[name] = np.array([float(tokens[i + 2 + k]) for k in range(n)])
            i += n + 1
        i += 1
    return out


# ---------------------------------------------------------------------------
# Line samples


def line_samples(mesh, axis, point, samples):
    lo, hi = mesh.bounds
    s = np.linspace(lo[axis], hi[axis], int(samples))
    pts = np.tile(np.asarray(point, dtype=float), (len(s), 1))
    pts[:, axis] = s
    return pts


def write_line_csv(path, mesh, e_full, b_full, axis, point, samples, curl_z=None):
    """Point values of ``E``, ``B`` (and ``curl z``) along a coordinate line; floats as ``repr``."""
    pts = line_samples(mesh, axis, point, samples)
    E = evaluate_field(mesh, e_full, "edge", pts)
    B = evaluate_field(mesh, b_full, "face", pts)
    cols = ["s", "Ex", "Ey", "Ez", "E_magnitude", "Bx", "By", "Bz", "B_magnitude"]
    data = [pts[:, axis], E[:, 0], E[:, 1], E[:, 2], np.linalg.norm(E, axis=1), B[:, 0], B[:, 1], B[:, 2],
            np.linalg.norm(B, axis=1)]
    if curl_z is not None:
        CZ = evaluate_field(mesh, curl_z, "face", pts)
        cols.append("curl_z_magnitude")
        data.append(np.linalg.norm(CZ, axis=1))
    rows = np.stack(data, axis=1)
    lines = [",".join(cols)] + [",".join(repr(float(v)) for v in r) for r in rows]
    _atomic_write(path, ("\n".join(lines) + "\n").encode("ascii"))
    return dict(zip(cols, (np.array(c) for c in data)))


def read_line_csv(path):
    with open(path, newline="", encoding="ascii") as fh:
        reader = csv.reader(fh)
        cols = next(reader)
        rows = [[float(v) for v in r] for r in reader if r]
    arr = np.array(rows, dtype=float).reshape(len(rows), len(cols))
    return {c: arr[:, i] for i, c in enumerate(cols)}


# ---------------------------------------------------------------------------
# Logs and manifests


def write_diagnostics_csv(path, diag, grid):
    lines = ["step,time,energy,balance_relative,gauss_e_relative,div_b_max,cg_iterations,cg_residual"]
    lines += [",".join(repr(v) for v in row) for row in diag.rows(grid)]
    _atomic_write(path, ("\n".join(lines) + "\n").encode("ascii"))


def write_history_csv(path, report):
    lines = ["iteration,J,tracking,control_l2,control_curl,grad_norm,step,backtracks,cg_iterations"]
    lines += [",".join(repr(v) for v in row) for row in report.rows()]
    _atomic_write(path, ("\n".join(lines) + "\n").encode("ascii"))


def summary_hash(summary):
    return hashlib.sha256(json.dumps(summary, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def write_manifest(path, config_hash, summary, started, finished, code_version=None, extra=None):
    """Write a run manifest atomically; ``summary`` must hold only reproducible numbers."""
    from . import __version__

    doc = {"config_hash": config_hash, "code_version": code_version or __version__, "started": started,
           "finished": finished, "summary": summary, "summary_hash": summary_hash(summary)}
    if extra:
        doc.update(extra)
    _atomic_write(path, (json.dumps(doc, sort_keys=True, indent=2) + "\n").encode("utf-8"))
    return doc


def export_fields(outdir, mesh, disc, container, stride=1, fmt="vtk", line=None, control=None):
    """Write VTK files or line CSVs for every ``stride``-th step of a trajectory container dict.

    ``stride`` must be a multiple of the stored stride. Returns the written paths.
    """
    if stride % container["stride"] != 0:
        raise ValueError(f"export stride {stride} is not a multiple of the stored stride {container['stride']}")
    os.makedirs(outdir, exist_ok=True)
    paths = []
    C = disc.ops.C
    for k, n in enumerate(container["steps"]):
        if n % stride != 0 and n != container["n_steps"]:
            continue
        e_full = disc.ops.extend_edges(container["e"][k], mesh.n_edges)
        b_full = container["b"][k]
        cz = None
        if control is not None and 0 < n <= control.shape[0]:
            zf = np.zeros(mesh.n_edges)
            zf[disc.ctrl_edges] = control[n - 1]
            cz = C @ zf
        t = n * container["dt"]
        if fmt == "vtk":
            p = os.path.join(outdir, f"fields_{n:06d}.vtk")
            write_vtk(p, mesh, e_full, b_full, cz, time=t)
        elif fmt == "csv":
            if line is None:
                raise ValueError("csv export needs a line specification")
            p = os.path.join(outdir, f"line_{n:06d}.csv")
            write_line_csv(p, mesh, e_full, b_full, line["axis"], line.get("point", [0.0, 0.0, 0.0]),
                           line.get("samples", mesh.counts[line["axis"]] + 1), cz)
        else:
            raise ValueError(f"unknown export format {fmt!r}")
        paths.append(p)
    return paths
