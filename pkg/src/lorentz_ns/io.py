"""Field, trajectory and table files.

Field binary (``.bin``), little-endian throughout::

    bytes 0-3    magic b"LNSF"
    uint32       format version (1)
    uint32       n, N, rank
    float64      L
    float64[...] samples, C order, shape (n,)*rank + (N,)*n

Field CSV (``.csv``): a header line ``# n=2 N=64 L=6.283185307179586 rank=1``,
then one row per grid point in row-major order with one column per component
(``%.17g``, so values round-trip exactly).

Trajectory (``.npz``): arrays ``times``, ``states``, ``grid`` = ``[n, N, L]``
and ``dealias``.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .grid import Field, Grid, field_of_rank
from .mild import Trajectory

MAGIC = b"LNSF"
VERSION = 1
_HEADER = struct.Struct("<4sIIIId")


def write_field(path, field: Field) -> Path:
    path = Path(path)
    g = field.grid
    if path.suffix == ".bin":
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(MAGIC, VERSION, g.n, g.N, field.rank, g.L))
            fh.write(np.ascontiguousarray(field.values, dtype="<f8").tobytes())
    elif path.suffix == ".csv":
        comps = field.values.reshape((-1,) + g.shape).reshape(-1, g.N**g.n).T
        with open(path, "w") as fh:
            fh.write(f"# n={g.n} N={g.N} L={g.L!r} rank={field.rank}\n")
            np.savetxt(fh, comps, fmt="%.17g", delimiter=",")
    else:
        raise ValueError(f"field files must end in .bin or .csv, got {path.name}")
    return path


def read_field(path) -> Field:
    path = Path(path)
    if path.suffix == ".bin":
        data = path.read_bytes()
        if len(data) < _HEADER.size:
            raise ValueError(f"{path}: file too short for a field header")
        magic, version, n, N, rank, L = _HEADER.unpack_from(data)
        if magic != MAGIC:
            raise ValueError(f"{path}: not a field file (bad magic)")
        if version != VERSION:
            raise ValueError(f"{path}: unsupported field format version {version}")
        grid = Grid(n, N, L)
        shape = (n,) * rank + grid.shape
        count = int(np.prod(shape))
        body = np.frombuffer(data, dtype="<f8", offset=_HEADER.size)
        if body.size != count:
            raise ValueError(f"{path}: expected {count} samples, found {body.size}")
        return field_of_rank(grid, body.reshape(shape).astype(float), rank)
    if path.suffix == ".csv":
        with open(path) as fh:
            header = fh.readline()
            if not header.startswith("#"):
                raise ValueError(f"{path}: missing '# n= N= L= rank=' header line")
            meta = dict(item.split("=", 1) for item in header[1:].split())
            try:
                n, N, rank, L = int(meta["n"]), int(meta["N"]), int(meta["rank"]), float(meta["L"])
            except KeyError as exc:
                raise ValueError(f"{path}: header lacks {exc.args[0]}") from None
            grid = Grid(n, N, L)
            body = np.loadtxt(fh, delimiter=",", ndmin=2)
        comps = n**rank
        if body.shape != (N**n, comps):
            raise ValueError(f"{path}: expected {N**n} rows of {comps} columns, found {body.shape}")
        return field_of_rank(grid, body.T.reshape((n,) * rank + grid.shape), rank)
    raise ValueError(f"field files must end in .bin or .csv, got {path.name}")


def write_trajectory(path, traj: Trajectory) -> Path:
    path = Path(path)
    g = traj.grid
    with open(path, "wb") as fh:
        np.savez(
            fh,
            times=traj.times,
            states=traj.states,
            grid=np.array([g.n, g.N, g.L], dtype=float),
            dealias=np.array(traj.dealias),
        )
    return path


def read_trajectory(path) -> Trajectory:
    with np.load(Path(path)) as data:
        missing = {"times", "states", "grid"} - set(data.files)
        if missing:
            raise ValueError(f"{path}: trajectory file lacks {sorted(missing)}")
        n, N, L = data["grid"]
        grid = Grid(int(n), int(N), float(L))
        dealias = bool(data["dealias"]) if "dealias" in data.files else True
        return Trajectory(grid, data["times"], data["states"], dealias)


def write_table(path, header: list[str], rows) -> Path:
    """CSV with a header row; floats as ``%.17g``, booleans as 0/1."""
    path = Path(path)

    def fmt(v):
        if isinstance(v, (bool, np.bool_)):
            return str(int(v))
        if isinstance(v, (int, np.integer)):
            return str(int(v))
        if isinstance(v, (float, np.floating)):
            return "%.17g" % float(v)
        return str(v)

    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")
    return path
