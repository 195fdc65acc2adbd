import pytest

from nvmquant.configio import (
    coerce_float,
    coerce_float_list,
    coerce_int,
    parse_kv_file,
    parse_kv_text,
)
from nvmquant.errors import ConfigError, IoError


def test_parse_basic():
    text = "a = 1\nb=hello world\n\n# comment\nc = 2.5  # trailing\n"
    assert parse_kv_text(text) == {"a": "1", "b": "hello world", "c": "2.5"}


def test_parse_duplicate_key():
    with pytest.raises(ConfigError, match="duplicate"):
        parse_kv_text("a = 1\na = 2\n")


def test_parse_missing_equals():
    with pytest.raises(ConfigError, match="key = value"):
        parse_kv_text("just a line\n")


def test_parse_empty_key():
    with pytest.raises(ConfigError, match="empty key"):
        parse_kv_text("= 5\n")


def test_parse_file_missing(tmp_path):
    with pytest.raises(IoError):
        parse_kv_file(tmp_path / "nope.cfg")


def test_parse_file_roundtrip(tmp_path):
    p = tmp_path / "x.cfg"
    p.write_text("k = v\n")
    assert parse_kv_file(p) == {"k": "v"}


def test_coerce_float():
    fields = {"x": "2.5", "bad": "zzz"}
    assert coerce_float(fields, "x") == 2.5
    assert coerce_float(fields, "absent", default=7.0) == 7.0
    with pytest.raises(ConfigError, match="missing required"):
        coerce_float(fields, "absent")
    with pytest.raises(ConfigError, match="not a number"):
        coerce_float(fields, "bad")


def test_coerce_int():
    fields = {"n": "12", "f": "1.5"}
    assert coerce_int(fields, "n") == 12
    assert coerce_int(fields, "absent", default=3) == 3
    with pytest.raises(ConfigError):
        coerce_int(fields, "f")


def test_coerce_float_list():
    fields = {"row": "0.1, 0.2 0.7", "bad": "a b"}
    assert coerce_float_list(fields, "row") == [0.1, 0.2, 0.7]
    with pytest.raises(ConfigError):
        coerce_float_list(fields, "bad")
