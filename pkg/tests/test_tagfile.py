import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from emitterlab.csvio import InputError, read_columns, read_matrix
from emitterlab.photon_stream import TimeTagStream
from emitterlab.tagfile import MAGIC, RECORD, TagFileError, meta_path, read_meta, read_tags, write_tags


def _stream(t, ch, pol=None):
    t = np.asarray(t, np.int64)
    return TimeTagStream(t, np.asarray(ch, np.uint8), np.zeros(t.size, np.uint8), pol, duration_ps=10**9)


@settings(max_examples=30)
@given(st.lists(st.tuples(st.integers(0, 10**12), st.integers(0, 1)), max_size=200))
def test_round_trip(tmp_path_factory, recs):
    recs = sorted(recs)
    t = [r[0] for r in recs]
    ch = [r[1] for r in recs]
    p = tmp_path_factory.mktemp("tags") / "x.wttag"
    write_tags(_stream(t, ch), p, extra={"seed": 7})
    back = read_tags(p)
    np.testing.assert_array_equal(back.t, t)
    np.testing.assert_array_equal(back.channel, ch)
    assert back.pol_angle is None
    assert back.duration_ps == 10**9
    assert read_meta(p)["seed"] == "7"


def test_polarization_round_trip(tmp_path):
    p = tmp_path / "p.wttag"
    write_tags(_stream([1, 2, 3], [0, 1, 0], np.array([0.0, 45.25, 359.99])), p)
    np.testing.assert_allclose(read_tags(p).pol_angle, [0.0, 45.25, 359.99])


def test_record_layout():
    assert RECORD.itemsize == 12
    assert len(MAGIC) == 8


def test_bad_magic_offset_zero(tmp_path):
    p = tmp_path / "bad.wttag"
    p.write_bytes(b"NOTATAG!" + bytes(12))
    with pytest.raises(TagFileError) as e:
        read_tags(p)
    assert e.value.offset == 0


def test_truncated_record_offset(tmp_path):
    p = tmp_path / "t.wttag"
    write_tags(_stream([1, 2], [0, 1]), p)
    meta_path(p).unlink()
    p.write_bytes(p.read_bytes()[:-5])
    with pytest.raises(TagFileError) as e:
        read_tags(p)
    assert e.value.offset == 20


def test_unsorted_and_bad_channel(tmp_path):
    p = tmp_path / "u.wttag"
    rec = np.zeros(3, RECORD)
    rec["t"] = [5, 3, 9]
    p.write_bytes(MAGIC + rec.tobytes())
    with pytest.raises(TagFileError) as e:
        read_tags(p)
    assert e.value.offset == 8 + 12
    rec["t"] = [1, 2, 3]
    rec["channel"] = [0, 7, 0]
    p.write_bytes(MAGIC + rec.tobytes())
    with pytest.raises(TagFileError) as e:
        read_tags(p)
    assert e.value.offset == 8 + 12 + 8


def test_sidecar_count_mismatch(tmp_path):
    p = tmp_path / "m.wttag"
    write_tags(_stream([1, 2, 3], [0, 1, 0]), p)
    meta_path(p).write_text("n_records=4\n")
    with pytest.raises(TagFileError):
        read_tags(p)


def test_empty_file_is_valid(tmp_path):
    p = tmp_path / "e.wttag"
    p.write_bytes(MAGIC)
    assert len(read_tags(p)) == 0


def test_csv_errors_report_offsets(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text("x,y\n1,2\n3,oops\n")
    with pytest.raises(InputError) as e:
        read_columns(p, ("x", "y"))
    assert e.value.offset == 8
    p.write_text("x\n1\n")
    with pytest.raises(InputError):
        read_columns(p, ("x", "y"))
    p.write_text("1,2\n3\n")
    with pytest.raises(InputError) as e:
        read_matrix(p)
    assert e.value.offset == 4
