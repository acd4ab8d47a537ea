import io

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from skycat import io as sio
from skycat.errors import InputError, InvalidCoordinate, MalformedRow


def read(text: str) -> sio.ObservationTable:
    return sio.read_observations(text.encode())


def test_single_row():
    assert read("10.5,-72.1,42,7\n").records() == [(10.5, -72.1, 42, 7)]


def test_header_is_skipped():
    t = read("ra,dec,imageID,starNo\n0,0,1,1\n")
    assert t.records() == [(0.0, 0.0, 1, 1)]


def test_empty_input():
    assert len(read("")) == 0
    assert len(read("ra,dec,imageID,starNo\n")) == 0


def test_ra_is_normalized():
    assert read("-10,0,1,1\n370,0,1,2\n").ra.tolist() == [350.0, 10.0]


@pytest.mark.parametrize(
    "text, exc, line",
    [
        ("10.5,-95.0,1,1\n", InvalidCoordinate, 1),
        ("0,0,1,1\n1,91,1,2\n", InvalidCoordinate, 2),
        ("ra,dec,imageID,starNo\n0,0,1,1\n0,nan,1,2\n", InvalidCoordinate, 3),
        ("0,0,1,1\n0,0,1\n", MalformedRow, 2),
        ("0,0,1,1\n0,0,x,2\n", MalformedRow, 2),
        ("0,0,1,1\n1,1,1,1\n", InputError, 2),
    ],
)
def test_errors_carry_line_number(text, exc, line):
    with pytest.raises(exc) as info:
        read(text)
    assert info.value.line_no == line


def test_reads_path_and_streams(tmp_path):
    p = tmp_path / "obs.csv"
    p.write_text("1,2,3,4\n5,6,7,8\n")
    want = [(1.0, 2.0, 3, 4), (5.0, 6.0, 7, 8)]
    assert sio.read_observations(p).records() == want
    assert sio.read_observations(str(p)).records() == want
    assert sio.read_observations(io.BytesIO(p.read_bytes())).records() == want
    assert sio.read_observations(io.StringIO(p.read_text())).records() == want


def test_catalog_format():
    out = io.StringIO()
    sio.write_catalog([sio.CatalogRecord(99, 10.0, -70.0)], out)
    assert out.getvalue() == "99,10.0000000000,-70.0000000000\n"


def test_catalog_sorted_and_no_negative_zero():
    t = sio.CatalogTable(np.array([5, 2]), np.array([1.0, 359.99999999999]), np.array([-1e-13, 3.0]))
    assert sio.format_catalog(t) == "2,0.0000000000,3.0000000000\n5,1.0000000000,0.0000000000\n"


def test_empty_outputs(tmp_path):
    sio.write_catalog([], tmp_path / "c.csv")
    sio.write_assignments([], tmp_path / "a.csv")
    assert (tmp_path / "c.csv").read_bytes() == b""
    assert (tmp_path / "a.csv").read_bytes() == b""


def test_assignments_ordered():
    rows = [sio.AssignmentRecord(7, 3, 1), sio.AssignmentRecord(7, 1, 9), sio.AssignmentRecord(2, 5, 5)]
    out = io.StringIO()
    sio.write_assignments(rows, out)
    assert out.getvalue() == "2,5,5\n7,1,9\n7,3,1\n"


def test_write_to_binary_stream():
    out = io.BytesIO()
    sio.write_assignments([sio.AssignmentRecord(1, 2, 3)], out)
    assert out.getvalue() == b"1,2,3\n"


def test_failed_write_leaves_no_file(tmp_path):
    dest = tmp_path / "out.csv"

    def chunks():
        yield "1,2,3\n"
        raise RuntimeError("boom")

    with pytest.raises(RuntimeError):
        sio._write(chunks(), dest)
    assert list(tmp_path.iterdir()) == []


def test_catalog_and_assignment_readers_roundtrip():
    cat = sio.CatalogTable(np.array([3, 1]), np.array([10.25, 0.5]), np.array([-5.0, 89.0]))
    back = sio.read_catalog(sio.format_catalog(cat).encode())
    assert back.catalog_id.tolist() == [1, 3]
    assert back.ra.tolist() == [0.5, 10.25]
    asg = sio.AssignmentTable(np.array([4, 4]), np.array([2, 1]), np.array([0, 0]))
    assert sio.read_assignments(sio.format_assignments(asg).encode()).records() == [(4, 1, 0), (4, 2, 0)]


record = st.tuples(
    st.floats(0, 360, exclude_max=True, allow_subnormal=False),
    st.floats(-90, 90, allow_subnormal=False),
    st.integers(-(2**63), 2**63 - 1),
    st.integers(-(2**63), 2**63 - 1),
)


@given(st.lists(record, max_size=50, unique_by=lambda r: (r[2], r[3])), st.booleans())
def test_observation_roundtrip(rows, header):
    t = sio.ObservationTable.from_records(rows)
    buf = io.StringIO()
    sio.write_observations(t, buf, header=header)
    back = sio.read_observations(buf.getvalue().encode())
    assert back.records() == [(r % 360.0 + 0.0 if r % 360.0 != 360.0 else 0.0, d, i, s) for r, d, i, s in rows]


def test_roundtrip_10k_random(rng):
    n = 10_000
    t = sio.ObservationTable(
        rng.uniform(0, 360, n), rng.uniform(-90, 90, n), rng.permutation(n).astype(np.int64), rng.integers(0, 2**62, n)
    )
    buf = io.StringIO()
    sio.write_observations(t, buf)
    back = sio.read_observations(buf.getvalue().encode())
    for col in ("ra", "dec", "image_id", "star_no"):
        np.testing.assert_array_equal(getattr(back, col), getattr(t, col))
    again = io.StringIO()
    sio.write_observations(back, again)
    assert again.getvalue() == buf.getvalue()


def test_writers_deterministic(rng):
    cat = sio.CatalogTable(rng.permutation(1000).astype(np.int64), rng.uniform(0, 360, 1000), rng.uniform(-90, 90, 1000))
    assert sio.format_catalog(cat) == sio.format_catalog(cat)
    a = io.StringIO()
    b = io.StringIO()
    sio.write_catalog(cat, a)
    sio.write_catalog(sio.CatalogTable(cat.catalog_id[::-1], cat.ra[::-1], cat.dec[::-1]), b)
    assert a.getvalue() == b.getvalue()
