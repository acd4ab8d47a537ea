"""CSV ingestion and export.

Input rows are ``ra,dec,imageID,starNo`` (an optional header line is
detected and skipped).  The catalog is written as ``catalog_id,ra,dec`` and
the assignment file as ``catalog_id,image_id,star_no``; neither has a header.

Observations are held column-wise in numpy arrays: a list of record objects
costs ~10x more memory at survey sizes.
"""

from __future__ import annotations

import csv
import io
import math
import os
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np

from .errors import InputError, InvalidCoordinate, MalformedRow

COORD_DECIMALS = 10

_OBS_DTYPE = np.dtype([("ra", "f8"), ("dec", "f8"), ("image_id", "i8"), ("star_no", "i8")])


class ObservationRecord(NamedTuple):
    ra_deg: float
    dec_deg: float
    image_id: int
    star_no: int


class CatalogRecord(NamedTuple):
    catalog_id: int
    ra_deg: float
    dec_deg: float


class AssignmentRecord(NamedTuple):
    catalog_id: int
    image_id: int
    star_no: int


@dataclass
class ObservationTable:
    ra: np.ndarray
    dec: np.ndarray
    image_id: np.ndarray
    star_no: np.ndarray

    def __len__(self):
        return len(self.ra)

    def __getitem__(self, i) -> ObservationRecord:
        return ObservationRecord(float(self.ra[i]), float(self.dec[i]), int(self.image_id[i]), int(self.star_no[i]))

    def records(self) -> list[ObservationRecord]:
        return [
            ObservationRecord(*row)
            for row in zip(self.ra.tolist(), self.dec.tolist(), self.image_id.tolist(), self.star_no.tolist())
        ]

    @classmethod
    def empty(cls) -> ObservationTable:
        return cls(np.empty(0), np.empty(0), np.empty(0, np.int64), np.empty(0, np.int64))

    @classmethod
    def from_records(cls, records: Iterable) -> ObservationTable:
        rows = list(records)
        if not rows:
            return cls.empty()
        ra, dec, img, star = zip(*rows)
        return cls(
            np.array(ra, dtype=np.float64),
            np.array(dec, dtype=np.float64),
            np.array(img, dtype=np.int64),
            np.array(star, dtype=np.int64),
        )

    @classmethod
    def from_arrays(cls, ra, dec, image_id=None, star_no=None) -> ObservationTable:
        ra = np.asarray(ra, dtype=np.float64)
        n = len(ra)
        image_id = np.zeros(n, np.int64) if image_id is None else np.asarray(image_id, dtype=np.int64)
        star_no = np.arange(n, dtype=np.int64) if star_no is None else np.asarray(star_no, dtype=np.int64)
        return cls(ra, np.asarray(dec, dtype=np.float64), image_id, star_no)


@dataclass
class CatalogTable:
    catalog_id: np.ndarray
    ra: np.ndarray
    dec: np.ndarray

    def __len__(self):
        return len(self.catalog_id)

    def records(self) -> list[CatalogRecord]:
        return [CatalogRecord(*r) for r in zip(self.catalog_id.tolist(), self.ra.tolist(), self.dec.tolist())]

    @classmethod
    def from_records(cls, records: Iterable) -> CatalogTable:
        rows = list(records)
        if not rows:
            return cls(np.empty(0, np.int64), np.empty(0), np.empty(0))
        cid, ra, dec = zip(*rows)
        return cls(np.array(cid, dtype=np.int64), np.array(ra, dtype=np.float64), np.array(dec, dtype=np.float64))


@dataclass
class AssignmentTable:
    catalog_id: np.ndarray
    image_id: np.ndarray
    star_no: np.ndarray

    def __len__(self):
        return len(self.catalog_id)

    def records(self) -> list[AssignmentRecord]:
        return [
            AssignmentRecord(*r) for r in zip(self.catalog_id.tolist(), self.image_id.tolist(), self.star_no.tolist())
        ]

    @classmethod
    def from_records(cls, records: Iterable) -> AssignmentTable:
        rows = list(records)
        if not rows:
            return cls(np.empty(0, np.int64), np.empty(0, np.int64), np.empty(0, np.int64))
        return cls(*(np.array(col, dtype=np.int64) for col in zip(*rows)))


# -------------------------------------------------------------------------
# reading


def _open_text(source):
    if isinstance(source, (str, os.PathLike)):
        return open(source, "r", encoding="utf-8", newline=""), True
    if isinstance(source, (bytes, bytearray)):
        return io.StringIO(bytes(source).decode("utf-8")), True
    if isinstance(source, io.TextIOBase):
        return source, False
    return io.TextIOWrapper(source, encoding="utf-8", newline=""), False


def _is_header(line: str) -> bool:
    fields = line.strip().split(",")
    try:
        for f in fields:
            float(f)
    except ValueError:
        return True
    return False


def _parse_row(fields, line_no):
    if len(fields) != 4:
        raise MalformedRow(line_no, f"expected 4 columns, got {len(fields)}")
    try:
        ra, dec = float(fields[0]), float(fields[1])
        img, star = int(fields[2]), int(fields[3])
    except ValueError as exc:
        raise MalformedRow(line_no, str(exc)) from None
    if not (math.isfinite(ra) and math.isfinite(dec)) or not -90.0 <= dec <= 90.0:
        raise InvalidCoordinate(line_no, f"coordinate out of range: ra={fields[0]} dec={fields[1]}")
    if not (-(2**63) <= img < 2**63 and -(2**63) <= star < 2**63):
        raise MalformedRow(line_no, "identifier does not fit in 64 bits")
    return ra, dec, img, star


def _slow_scan(lines, first_line_no):
    """Row-by-row parse; used to pinpoint the failing line."""
    rows = []
    for offset, fields in enumerate(csv.reader(lines)):
        line_no = first_line_no + offset
        if not fields or (len(fields) == 1 and not fields[0].strip()):
            continue
        rows.append(_parse_row([f.strip() for f in fields], line_no))
    return rows


def read_observations(source) -> ObservationTable:
    """Read observation rows from a path, bytes, or a text/binary stream.

    Raises :class:`MalformedRow` or :class:`InvalidCoordinate` carrying the
    1-based line number of the first bad row.
    """
    if isinstance(source, (str, os.PathLike)):
        with open(source, "r", encoding="utf-8", newline="") as fh:
            return _read_stream(fh)
    fh, _ = _open_text(source)
    return _read_stream(io.StringIO(fh.read()))


def _read_stream(fh) -> ObservationTable:
    first = fh.readline()
    if not first:
        return ObservationTable.empty()
    header = _is_header(first)
    first_line_no = 2 if header else 1

    def rescan():
        fh.seek(0)
        lines = fh.read().splitlines()
        _slow_scan(lines[1:] if header else lines, first_line_no)

    if not header:
        fh.seek(0)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            arr = np.loadtxt(fh, delimiter=",", dtype=_OBS_DTYPE, ndmin=1)
    except (ValueError, OverflowError):
        rescan()
        raise MalformedRow(first_line_no, "unparseable input") from None

    ra, dec = arr["ra"], arr["dec"]
    bad = ~(np.isfinite(ra) & np.isfinite(dec) & (dec >= -90.0) & (dec <= 90.0))
    if bad.any():
        rescan()
        raise InvalidCoordinate(first_line_no + int(np.argmax(bad)), "coordinate out of range")

    ra = np.mod(ra, 360.0)
    ra[ra >= 360.0] = 0.0
    table = ObservationTable(ra, np.ascontiguousarray(dec), arr["image_id"].copy(), arr["star_no"].copy())
    del arr
    _check_unique_keys(table, first_line_no)
    return table


def _check_unique_keys(table: ObservationTable, first_line_no: int):
    n = len(table)
    if n < 2:
        return
    order = np.lexsort((table.star_no, table.image_id))
    img, star = table.image_id[order], table.star_no[order]
    dup = (img[1:] == img[:-1]) & (star[1:] == star[:-1])
    if dup.any():
        j = int(np.argmax(dup))
        i = int(max(order[j], order[j + 1]))
        raise InputError(first_line_no + i, f"duplicate observation key ({img[j]}, {star[j]})")


# -------------------------------------------------------------------------
# writing


def _fmt_coords(ra, dec):
    ra = np.mod(np.round(np.asarray(ra, dtype=np.float64), COORD_DECIMALS), 360.0)
    dec = np.round(np.asarray(dec, dtype=np.float64), COORD_DECIMALS)
    # avoid "-0.0000000000"
    ra = ra + 0.0
    dec = np.where(dec == 0.0, 0.0, dec)
    return ra.tolist(), dec.tolist()


_WRITE_BLOCK = 1 << 16


def _catalog_chunks(table: CatalogTable):
    order = np.argsort(table.catalog_id, kind="stable")
    for start in range(0, len(order), _WRITE_BLOCK):
        sel = order[start : start + _WRITE_BLOCK]
        ra, dec = _fmt_coords(table.ra[sel], table.dec[sel])
        ids = table.catalog_id[sel].tolist()
        yield "".join(f"{i},{r:.10f},{d:.10f}\n" for i, r, d in zip(ids, ra, dec))


def _assignment_chunks(table: AssignmentTable):
    order = np.lexsort((table.star_no, table.image_id, table.catalog_id))
    for start in range(0, len(order), _WRITE_BLOCK):
        sel = order[start : start + _WRITE_BLOCK]
        cols = (table.catalog_id[sel].tolist(), table.image_id[sel].tolist(), table.star_no[sel].tolist())
        yield "".join(f"{c},{i},{s}\n" for c, i, s in zip(*cols))


def _observation_chunks(table: ObservationTable, header: bool):
    if header:
        yield "ra,dec,imageID,starNo\n"
    for start in range(0, len(table), _WRITE_BLOCK):
        sl = slice(start, start + _WRITE_BLOCK)
        rows = zip(table.ra[sl].tolist(), table.dec[sl].tolist(), table.image_id[sl].tolist(), table.star_no[sl].tolist())
        yield "".join(f"{r!r},{d!r},{i},{s}\n" for r, d, i, s in rows)


def format_catalog(table: CatalogTable) -> str:
    return "".join(_catalog_chunks(table))


def format_assignments(table: AssignmentTable) -> str:
    return "".join(_assignment_chunks(table))


def _write(chunks, dest):
    """Write text (a string or an iterable of strings) to a path or stream.

    Paths are written through a temporary file and renamed into place, so a
    failed run never leaves a partial output file.
    """
    if isinstance(chunks, str):
        chunks = (chunks,)
    if isinstance(dest, (str, os.PathLike)):
        dest = Path(dest)
        tmp = dest.with_name(dest.name + ".part")
        try:
            with open(tmp, "w", encoding="utf-8", newline="") as fh:
                for text in chunks:
                    fh.write(text)
        except BaseException:
            tmp.unlink(missing_ok=True)
            raise
        os.replace(tmp, dest)
    elif isinstance(dest, io.TextIOBase):
        for text in chunks:
            dest.write(text)
    else:
        for text in chunks:
            dest.write(text.encode("utf-8"))


def write_catalog(table: CatalogTable, dest) -> None:
    """Write ``catalog_id,ra,dec`` rows sorted by id, coordinates to 10 decimals."""
    if not isinstance(table, CatalogTable):
        table = CatalogTable.from_records(table)
    _write(_catalog_chunks(table), dest)


def write_assignments(table: AssignmentTable, dest) -> None:
    """Write ``catalog_id,image_id,star_no`` rows in sorted order."""
    if not isinstance(table, AssignmentTable):
        table = AssignmentTable.from_records(table)
    _write(_assignment_chunks(table), dest)


def write_observations(table: ObservationTable, dest, header: bool = False) -> None:
    """Write observations in the input format (17 significant digits)."""
    _write(_observation_chunks(table, header), dest)


def read_catalog(source) -> CatalogTable:
    fh, close = _open_text(source)
    try:
        text = fh.read()
    finally:
        if close:
            fh.close()
    rows = []
    for line_no, fields in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not fields:
            continue
        if line_no == 1 and _is_header(",".join(fields)):
            continue
        if len(fields) != 3:
            raise MalformedRow(line_no, f"expected 3 columns, got {len(fields)}")
        try:
            rows.append((int(fields[0]), float(fields[1]), float(fields[2])))
        except ValueError as exc:
            raise MalformedRow(line_no, str(exc)) from None
    return CatalogTable.from_records(rows)


def read_assignments(source) -> AssignmentTable:
    fh, close = _open_text(source)
    try:
        text = fh.read()
    finally:
        if close:
            fh.close()
    rows = []
    for line_no, fields in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not fields:
            continue
        if line_no == 1 and _is_header(",".join(fields)):
            continue
        if len(fields) != 3:
            raise MalformedRow(line_no, f"expected 3 columns, got {len(fields)}")
        try:
            rows.append(tuple(int(f) for f in fields))
        except ValueError as exc:
            raise MalformedRow(line_no, str(exc)) from None
    return AssignmentTable.from_records(rows)
