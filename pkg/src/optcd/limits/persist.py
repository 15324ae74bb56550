"""Text persistence for limit grids and equivalent thresholds.

Layout::

    # optcd-limits
    # format_version: 1
    # c: 2.2335
    # N: 60
    # model: IIDNormalShift(mu0=0.0, ...)
    # pair: M6
    # grid: ny=512, y_min=1e-06, ...
    table,n,i,j,y,x,value
    grid,0,0,0,0.0,,11.93...
    equivalent,1,,0,,,11.95...

``i``/``j`` index the y/x knots.  Floats are written with ``repr``, so
reading back reproduces every value bit for bit.
"""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .equivalent import EquivalentLimitTable
from .grid import GridSpec, ValueGrid

FORMAT_VERSION = 1
MAGIC = "# optcd-limits"


class LimitFileError(ValueError):
    pass


@dataclass
class LimitFile:
    c: float
    N: int
    model_id: str
    pair_id: str
    grid: Optional[ValueGrid]
    table: Optional[EquivalentLimitTable]
    extra: dict


def _r(v) -> str:
    return repr(float(v))


def _spec_text(spec: GridSpec) -> str:
    return ", ".join(f"{k}={v!r}" for k, v in asdict(spec).items())


def _parse_spec(text: str) -> GridSpec:
    kw = {}
    types = {f.name: f.type for f in fields(GridSpec)}
    for part in text.split(","):
        if not part.strip():
            continue
        key, _, val = part.partition("=")
        key, val = key.strip(), val.strip()
        if key not in types:
            raise LimitFileError(f"unknown grid field {key!r}")
        kw[key] = None if val == "None" else (int(val) if key in ("ny", "nx", "n_quad") else float(val))
    return GridSpec(**kw)


def save_limits(path, grid: Optional[ValueGrid] = None, table: Optional[EquivalentLimitTable] = None,
                extra: Optional[dict] = None) -> None:
    if grid is None and table is None:
        raise ValueError("nothing to save")
    ref = grid if grid is not None else table
    if grid is not None and table is not None and (grid.c != table.c or grid.N != table.N):
        raise ValueError("grid and table disagree on c or N")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"{MAGIC}\n# format_version: {FORMAT_VERSION}\n# c: {_r(ref.c)}\n# N: {ref.N}\n")
        if grid is not None:
            fh.write(f"# model: {grid.model_id}\n# pair: {grid.pair_id}\n# grid: {_spec_text(grid.spec)}\n")
        for key, val in (extra or {}).items():
            fh.write(f"# {key}: {val}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["table", "n", "i", "j", "y", "x", "value"])
        if grid is not None:
            yk = [_r(v) for v in grid.y_knots]
            xk = [""] if grid.x_knots is None else [_r(v) for v in grid.x_knots]
            vals = grid.values
            for n in range(vals.shape[0]):
                layer = vals[n]
                for i in range(layer.shape[0]):
                    w.writerows(["grid", n, i, j, yk[i], xk[j], _r(layer[i, j])] for j in range(layer.shape[1]))
        if table is not None:
            xk = [""] if table.x_knots is None else [_r(v) for v in table.x_knots]
            for n in range(1, table.N + 2):
                for j in range(table.thresholds.shape[1]):
                    w.writerow(["equivalent", n, "", j, "", xk[j], _r(table.thresholds[n, j])])


def load_limits(path) -> LimitFile:
    """Read a limit file; malformed content raises :class:`LimitFileError`."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"limit file {path} not found")
    try:
        return _load(path)
    except LimitFileError:
        raise
    except (ValueError, IndexError, KeyError) as exc:
        raise LimitFileError(f"{path}: malformed limit file ({type(exc).__name__}: {exc})") from None


def _load(path: Path) -> LimitFile:
    header = {}
    with open(path, encoding="utf-8", newline="") as fh:
        first = fh.readline().rstrip("\n")
        if first != MAGIC:
            raise LimitFileError(f"{path}: not a limit file (first line {first!r})")
        line = fh.readline()
        while line.startswith("#"):
            key, _, val = line[1:].partition(":")
            header[key.strip()] = val.strip()
            line = fh.readline()
        if line.strip() != "table,n,i,j,y,x,value":
            raise LimitFileError(f"{path}: missing column header")
        if int(header.get("format_version", -1)) != FORMAT_VERSION:
            raise LimitFileError(f"{path}: unsupported format version {header.get('format_version')}")
        c = float(header["c"])
        N = int(header["N"])
        grid_rows, eq_rows = [], []
        for row in csv.reader(fh):
            if row[0] == "grid":
                grid_rows.append(row)
            elif row[0] == "equivalent":
                eq_rows.append(row)
            else:
                raise LimitFileError(f"{path}: unknown table {row[0]!r}")

    grid = None
    if grid_rows:
        ny1 = max(int(r[2]) for r in grid_rows) + 1
        nx = max(int(r[3]) for r in grid_rows) + 1
        yk = np.empty(ny1)
        has_x = grid_rows[0][5] != ""
        xk = np.empty(nx) if has_x else None
        values = np.full((N + 2, ny1, nx), np.nan)
        for _, n, i, j, y, x, v in grid_rows:
            n, i, j = int(n), int(i), int(j)
            yk[i] = float(y)
            if has_x:
                xk[j] = float(x)
            values[n, i, j] = float(v)
        if np.isnan(values).any():
            raise LimitFileError(f"{path}: incomplete grid records")
        grid = ValueGrid(c=c, N=N, spec=_parse_spec(header.get("grid", "")), y_knots=yk, x_knots=xk,
                         values=values, model_id=header.get("model", ""), pair_id=header.get("pair", ""))
    table = None
    if eq_rows:
        nx = max(int(r[3]) for r in eq_rows) + 1
        has_x = eq_rows[0][5] != ""
        xk = np.empty(nx) if has_x else None
        thr = np.zeros((N + 2, nx))
        thr[0] = np.nan
        for _, n, _i, j, _y, x, v in eq_rows:
            j = int(j)
            if has_x:
                xk[j] = float(x)
            thr[int(n), j] = float(v)
        table = EquivalentLimitTable(c=c, N=N, x_knots=xk, thresholds=thr)
    known = {"format_version", "c", "N", "model", "pair", "grid"}
    return LimitFile(c=c, N=N, model_id=header.get("model", ""), pair_id=header.get("pair", ""),
                     grid=grid, table=table, extra={k: v for k, v in header.items() if k not in known})
