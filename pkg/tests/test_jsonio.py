import numpy as np
import pytest

from probeguide import jsonio
from probeguide.jsonio import SchemaError


def test_array_round_trip_float32_resolution():
    a = np.array([[0.125, -3.5], [1.0, 2.0]])
    back = jsonio.decode_array(jsonio.encode_array(a))
    # values exactly representable in float32 survive unchanged
    assert np.array_equal(back, a)
    assert back.dtype == np.float64


def test_array_round_trip_int():
    a = np.array([[1, 2, 3], [4, 5, 6]])
    back = jsonio.decode_array(jsonio.encode_array(a, dtype="<i4"), expect_dtype="<i4")
    assert np.array_equal(back, a)
    assert back.dtype == np.int64


def test_decode_rejects_wrong_payload_size():
    d = jsonio.encode_array(np.zeros(4))
    d["shape"] = [5]
    with pytest.raises(SchemaError):
        jsonio.decode_array(d)


def test_decode_rejects_bad_base64():
    d = jsonio.encode_array(np.zeros(2))
    d["data"] = "!!not base64!!"
    with pytest.raises(SchemaError):
        jsonio.decode_array(d)


def test_decode_rejects_dtype_mismatch():
    d = jsonio.encode_array(np.zeros(2))
    with pytest.raises(SchemaError):
        jsonio.decode_array(d, expect_dtype="<i4")


def test_check_keys_missing_and_unknown():
    with pytest.raises(SchemaError, match="missing required"):
        jsonio.check_keys({"a": 1}, ["a", "b"])
    with pytest.raises(SchemaError, match="unknown fields"):
        jsonio.check_keys({"a": 1, "zz": 2}, ["a"])
    jsonio.check_keys({"a": 1, "opt": 2}, ["a"], optional=["opt"])


def test_schema_version_gate():
    jsonio.check_schema_version({"schema_version": jsonio.SCHEMA_VERSION})
    with pytest.raises(SchemaError, match="schema_version"):
        jsonio.check_schema_version({"schema_version": 99})
    with pytest.raises(SchemaError):
        jsonio.check_schema_version({})


def test_canonical_dump_is_sorted_and_stable():
    s1 = jsonio.dumps_canonical({"b": 1, "a": [1, 2]})
    s2 = jsonio.dumps_canonical({"a": [1, 2], "b": 1})
    assert s1 == s2
    assert s1.index('"a"') < s1.index('"b"')
    assert s1.endswith("\n")


def test_write_read_round_trip(tmp_path):
    path = tmp_path / "doc.json"
    doc = {"schema_version": 1, "x": [1.5, 2.5], "name": "n"}
    jsonio.write_json(path, doc)
    assert jsonio.read_json(path) == doc


def test_read_rejects_invalid_json(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    with pytest.raises(SchemaError):
        jsonio.read_json(path)


def test_read_rejects_non_object_top_level(tmp_path):
    path = tmp_path / "list.json"
    path.write_text("[1, 2]")
    with pytest.raises(SchemaError):
        jsonio.read_json(path)


def test_file_sha256_matches_hashlib(tmp_path):
    import hashlib
    path = tmp_path / "blob.bin"
    payload = b"abc" * 40000
    path.write_bytes(payload)
    assert jsonio.file_sha256(path) == hashlib.sha256(payload).hexdigest()
