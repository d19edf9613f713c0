"""Binary serialization for lattice data.

Layout (little-endian), documented here and mirrored in the JSON sidecar:

grid function (magic AVXG, version 1):
    4s magic | u8 version | u8 dtype (0=float64, 1=complex128) | u8 ndim
    per axis: u32 resolution | f64 lower | f64 upper
    raw values, C order

scale function (magic AVXS, version 1):
    4s magic | u8 version | u8 dtype | u8 ndim | i32 l_min | i32 l_max
    per axis: u32 resolution | f64 lower | f64 upper
    raw values, C order, scale index first

Every file gets a "<path>.json" sidecar with the same metadata.  Tent atom
sets are stored as a JSON manifest next to one stacked AVXS block per atom.
"""

import json
import struct

import numpy as np

from .grid import Grid, GridFunction

_DTYPES = {0: np.float64, 1: np.complex128}
_CODES = {np.dtype(np.float64): 0, np.dtype(np.complex128): 1}


def _dtype_code(values):
    try:
        return _CODES[values.dtype]
    except KeyError:
        raise ValueError(f"unsupported dtype {values.dtype}") from None


def _write_sidecar(path, meta):
    with open(str(path) + ".json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _grid_meta(grid):
    return {
        "resolution": list(grid.resolution),
        "lower": list(grid.lower),
        "upper": list(grid.upper),
    }


def save_grid_function(f, path):
    code = _dtype_code(f.values)
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sBBB", b"AVXG", 1, code, f.grid.n))
        for r, l, u in zip(f.grid.resolution, f.grid.lower, f.grid.upper):
            fh.write(struct.pack("<Idd", r, l, u))
        fh.write(np.ascontiguousarray(f.values).tobytes())
    _write_sidecar(path, {"kind": "grid_function", "dtype": int(code), **_grid_meta(f.grid)})


def load_grid_function(path):
    with open(path, "rb") as fh:
        magic, version, code, ndim = struct.unpack("<4sBBB", fh.read(7))
        if magic != b"AVXG" or version != 1:
            raise ValueError("not an AVXG v1 file")
        res, lower, upper = [], [], []
        for _ in range(ndim):
            r, l, u = struct.unpack("<Idd", fh.read(20))
            res.append(r)
            lower.append(l)
            upper.append(u)
        grid = Grid(tuple(lower), tuple(upper), tuple(res))
        values = np.frombuffer(fh.read(), dtype=_DTYPES[code]).reshape(res).copy()
    return GridFunction(grid, values)


def save_scale_function(sf, path):
    code = _dtype_code(sf.values)
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sBBBii", b"AVXS", 1, code, sf.grid.n, sf.l_min, sf.l_max))
        for r, l, u in zip(sf.grid.resolution, sf.grid.lower, sf.grid.upper):
            fh.write(struct.pack("<Idd", r, l, u))
        fh.write(np.ascontiguousarray(sf.values).tobytes())
    _write_sidecar(
        path,
        {
            "kind": "scale_function",
            "dtype": int(code),
            "l_min": sf.l_min,
            "l_max": sf.l_max,
            **_grid_meta(sf.grid),
        },
    )


def load_scale_function(path):
    from .tent import ScaleFunction

    with open(path, "rb") as fh:
        magic, version, code, ndim, l_min, l_max = struct.unpack("<4sBBBii", fh.read(15))
        if magic != b"AVXS" or version != 1:
            raise ValueError("not an AVXS v1 file")
        res, lower, upper = [], [], []
        for _ in range(ndim):
            r, l, u = struct.unpack("<Idd", fh.read(20))
            res.append(r)
            lower.append(l)
            upper.append(u)
        grid = Grid(tuple(lower), tuple(upper), tuple(res))
        nscales = l_max - l_min + 1
        values = np.frombuffer(fh.read(), dtype=_DTYPES[code]).reshape([nscales] + res).copy()
    return ScaleFunction(grid, l_min, l_max, values)


def save_atomic_rep(rep, path_prefix):
    """Manifest plus one AVXG block per atom of a finite atomic sum.

    The manifest records each ball, weight, and the atom's validation
    residuals (support, size ratio, worst moment)."""
    manifest = {"kind": "finite_atomic_rep", "entries": []}
    for i, (weight, atom) in enumerate(rep.terms):
        blob = f"{path_prefix}.atom{i:04d}.avxg"
        save_grid_function(atom.values, blob)
        manifest["entries"].append(
            {
                "weight": weight,
                "ball_center": list(atom.ball.center),
                "ball_scale": atom.ball.scale,
                "r_exponent": atom.r_exponent,
                "s": atom.s,
                "validation": {
                    "support_exact": atom.validation.support_exact,
                    "size_ratio": atom.validation.size_ratio,
                    "max_moment_residual": atom.validation.max_moment_residual,
                },
                "values": blob,
            }
        )
    with open(f"{path_prefix}.manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_atomic_rep(path_prefix, d, p):
    """Rebuild a finite atomic sum from a manifest; atoms are revalidated."""
    from .hardy import Atom, FiniteAtomicRep, validate_atom

    with open(f"{path_prefix}.manifest.json") as fh:
        manifest = json.load(fh)
    if manifest.get("kind") != "finite_atomic_rep":
        raise ValueError("not a finite_atomic_rep manifest")
    terms = []
    for entry in manifest["entries"]:
        values = load_grid_function(entry["values"])
        ball = d.ball(entry["ball_center"], int(entry["ball_scale"]))
        atom = Atom(
            ball=ball,
            values=values,
            r_exponent=float(entry["r_exponent"]),
            s=int(entry["s"]),
            validation=None,
        )
        atom.validation = validate_atom(atom, d, p)
        terms.append((float(entry["weight"]), atom))
    return FiniteAtomicRep(terms)


def save_tent_atoms(atom_set, path_prefix):
    """Manifest JSON plus one AVXS block per atom under a shared prefix."""
    manifest = {
        "kind": "tent_atom_set",
        "leakage_ratio": atom_set.leakage_ratio,
        "entries": [],
    }
    for i, entry in enumerate(atom_set.entries):
        blob = f"{path_prefix}.atom{i:04d}.avxs"
        save_scale_function(entry.atom, blob)
        manifest["entries"].append(
            {
                "weight": entry.weight,
                "ball_center": list(entry.ball.center),
                "ball_scale": entry.ball.scale,
                "level": entry.level,
                "cover_index": entry.cover_index,
                "values": blob,
            }
        )
    with open(f"{path_prefix}.manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
