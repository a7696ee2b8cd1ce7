"""On-disk formats: SCLF1 grid fields, FBI tables, key-value sidecars, run configs and sweep tables."""

import csv
import logging
from pathlib import Path
from typing import Dict, List, NamedTuple, Sequence, Tuple, Union

import numpy as np

from .exceptions import ConfigurationError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
FIELD_MAGIC = "SCLF1"
COMPLEX_LE = np.dtype("<c16")


def _split_header(raw: bytes, path: PathLike) -> tuple:
    newline = raw.find(b"\n")
    if newline < 0:
        raise ConfigurationError(f"{path}: missing header line")
    return raw[:newline].decode("ascii", errors="replace").split(), raw[newline + 1:]


def write_field(field, path: PathLike) -> Path:
    """Header ``SCLF1 d L N`` then row-major little-endian complex pairs."""
    path = Path(path)
    grid = field.grid
    with open(path, "wb") as handle:
        handle.write(f"{FIELD_MAGIC} {grid.dim} {grid.length!r} {grid.points}\n".encode("ascii"))
        handle.write(np.ascontiguousarray(field.values, dtype=COMPLEX_LE).tobytes())
    return path


def read_field(path: PathLike):
    from ..models.grid import Grid, GridField

    header, body = _split_header(Path(path).read_bytes(), path)
    if len(header) != 4 or header[0] != FIELD_MAGIC:
        raise ConfigurationError(f"{path}: not an {FIELD_MAGIC} field file")
    try:
        grid = Grid(int(header[1]), float(header[2]), int(header[3]))
    except ValueError as exc:
        raise ConfigurationError(f"{path}: malformed header {' '.join(header)}") from exc
    values = np.frombuffer(body, dtype=COMPLEX_LE)
    if values.size != grid.points ** grid.dim:
        raise ConfigurationError(f"{path}: expected {grid.points ** grid.dim} values, found {values.size}")
    return GridField(grid, values.reshape(grid.shape).astype(complex))


def write_fbi_table(table, path: PathLike) -> Path:
    """Header ``d h nx nxi dx dxi`` then row-major little-endian complex pairs."""
    path = Path(path)
    header = (
        f"{table.dim} {table.h!r} {len(table.x_axis)} {len(table.xi_axis)} "
        f"{table.dx!r} {table.dxi!r}\n"
    )
    with open(path, "wb") as handle:
        handle.write(header.encode("ascii"))
        handle.write(np.ascontiguousarray(table.values, dtype=COMPLEX_LE).tobytes())
    return path


def read_fbi_table(path: PathLike):
    """Load an FBI table; positions start at -nx dx / 2 and covectors are centred on zero."""
    from ..models.phase import FBITable

    header, body = _split_header(Path(path).read_bytes(), path)
    if len(header) != 6:
        raise ConfigurationError(f"{path}: FBI header needs 6 fields, found {len(header)}")
    try:
        d, h, nx, nxi = int(header[0]), float(header[1]), int(header[2]), int(header[3])
        dx, dxi = float(header[4]), float(header[5])
    except ValueError as exc:
        raise ConfigurationError(f"{path}: malformed FBI header") from exc
    if d not in (1, 2) or h <= 0 or nx < 1 or nxi < 1 or dx <= 0 or dxi <= 0:
        raise ConfigurationError(f"{path}: invalid FBI header {' '.join(header)}")
    values = np.frombuffer(body, dtype=COMPLEX_LE)
    shape = (nx,) * d + (nxi,) * d
    if values.size != int(np.prod(shape)):
        raise ConfigurationError(f"{path}: expected {int(np.prod(shape))} values, found {values.size}")
    length = nx * dx
    return FBITable(
        dim=d, h=h,
        x_axis=-0.5 * length + dx * np.arange(nx),
        xi_axis=dxi * (np.arange(nxi) - 0.5 * (nxi - 1)),
        values=values.reshape(shape).astype(complex),
        stride=1, grid_points=nx, grid_length=length,
    )


def parse_key_values(text: str, source: str = "<config>") -> Dict[str, str]:
    """``key = value`` lines with ``#`` comments; duplicate or malformed lines are errors."""
    result: Dict[str, str] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{source}:{number}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigurationError(f"{source}:{number}: empty key")
        if key in result:
            raise ConfigurationError(f"{source}:{number}: duplicate key {key!r}")
        result[key] = value
    return result


def read_key_values(path: PathLike) -> Dict[str, str]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read {path}: {exc}") from exc
    return parse_key_values(text, str(path))


def _format_value(value) -> str:
    if isinstance(value, float):
        return format(value, ".17g")
    if isinstance(value, (list, tuple)):
        return ", ".join(_format_value(v) for v in value)
    return str(value)


def write_sidecar(path: PathLike, values: Dict[str, object]) -> Path:
    """Plain-text key-value metadata, one ``key = value`` per line."""
    path = Path(path)
    path.write_text("".join(f"{key} = {_format_value(value)}\n" for key, value in values.items()))
    return path


def read_sidecar(path: PathLike) -> Dict[str, str]:
    return read_key_values(path)


# Sweep tables and plot scripts


def write_table(path: PathLike, columns: Sequence[str], rows: Sequence[Sequence[object]]) -> Path:
    """CSV with a header row; floats written with 17 significant digits."""
    path = Path(path)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            if len(row) != len(columns):
                raise ConfigurationError(f"{path.name}: row has {len(row)} cells, header {len(columns)}")
            writer.writerow([_format_value(float(v)) if isinstance(v, np.floating) else _format_value(v)
                             for v in row])
    logger.debug("wrote %d rows to %s", len(rows), path)
    return path


def read_table(path: PathLike) -> Tuple[List[str], List[List[str]]]:
    with Path(path).open(newline="") as handle:
        reader = csv.reader(handle)
        try:
            columns = next(reader)
        except StopIteration as exc:
            raise ConfigurationError(f"{path}: empty table") from exc
        return columns, [row for row in reader]


class PlotSpec(NamedTuple):
    """One gnuplot panel: y against x from a CSV written by write_table."""

    table: str
    x: str
    y: str
    title: str = ""
    logscale: bool = True


def write_gnuplot(path: PathLike, plots: Sequence[PlotSpec], columns: Dict[str, Sequence[str]]) -> Path:
    """Gnuplot script rendering each panel to a PNG next to its CSV."""
    lines = [
        "# generated by sclens; run with: gnuplot " + Path(path).name,
        "set datafile separator ','",
        "set terminal pngcairo size 800,600",
        "set key top right",
    ]
    for spec in plots:
        header = list(columns[spec.table])
        xi, yi = header.index(spec.x) + 1, header.index(spec.y) + 1
        stem = Path(spec.table).stem
        lines.extend([
            "",
            f"set output '{stem}_{spec.y}.png'",
            f"set title '{spec.title or stem}'",
            f"set xlabel '{spec.x}'",
            f"set ylabel '{spec.y}'",
            "set logscale xy" if spec.logscale else "unset logscale",
            f"plot '{spec.table}' using {xi}:{yi} skip 1 with linespoints title '{spec.y}'",
        ])
    path = Path(path)
    path.write_text("\n".join(lines) + "\n")
    return path
