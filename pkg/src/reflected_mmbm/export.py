"""CSV and JSON writers shared by the command line tools.

Floats are written with 17 significant digits so that doubles round-trip.
"""
from __future__ import annotations

import json
import os
import tempfile

import numpy as np

FMT = "%.17g"


def fmt(v):
    return FMT % v


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) if isinstance(v, (float, np.floating)) else str(v)
                              for v in row) + "\n")
    return path


def _default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.integer):
        return int(o)
    raise TypeError(f"cannot serialise {type(o).__name__}")


def write_json(path, doc, atomic=False):
    text = json.dumps(doc, indent=2, default=_default, allow_nan=True) + "\n"
    if not atomic:
        with open(path, "w") as fh:
            fh.write(text)
        return path
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=".json")
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)
    return path


def phase_header(m, first="x"):
    return [first] + [f"phase_{i + 1}" for i in range(m)]


def write_density_csv(path, xs, dens):
    """``x,phase_1,...,phase_m`` rows; ``dens`` has shape ``(len(xs), m)``."""
    dens = np.atleast_2d(dens)
    rows = ([float(x)] + [float(v) for v in d] for x, d in zip(xs, dens))
    return write_csv(path, phase_header(dens.shape[1]), rows)


def write_histogram_csv(path, emp, collapse_to=None):
    hist = emp.hist
    if collapse_to is not None:
        hist = hist[:collapse_to] + hist[collapse_to:]
    edges = emp.edges
    header = ["bin_left", "bin_right"] + [f"phase_{i + 1}" for i in range(hist.shape[0])]
    rows = ([float(edges[k]), float(edges[k + 1])] + [float(v) for v in hist[:, k]]
            for k in range(hist.shape[1]))
    return write_csv(path, header, rows)


def density_sidecar(b, mass0, massb, c, eps=None, **extra):
    doc = {}
    if eps is None:
        doc["limit"] = True
    else:
        doc["eps"] = float(eps)
    doc.update({"b": float(b), "mass0": np.asarray(mass0).tolist(),
                "massb": np.asarray(massb).tolist(), "c": float(c)})
    doc.update(extra)
    return doc


def write_sweep_csv(path, report):
    rows = ([p.eps, p.distance, p.mass0, p.massb, p.cond_N] for p in report.points)
    return write_csv(path, ["eps", "distance", "mass0", "massb", "cond_N"], rows)
