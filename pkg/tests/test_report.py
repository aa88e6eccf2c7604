from scaleseg.report import format_records, format_table, format_value


def test_format_value():
    assert format_value(True) == "1"
    assert format_value(False) == "0"
    assert format_value(3) == "3"
    assert format_value(0.1234567) == "0.123457"
    assert format_value("x") == "x"


def test_format_records():
    lines = format_records([{"scale": 1, "ms": 1.5}, {"scale": 2, "ms": 2.0}])
    assert lines == ["scale=1 ms=1.5", "scale=2 ms=2"]


def test_format_table_alignment():
    lines = format_table(["A", "Blong"], [[1, 2.0], [333, 4]])
    assert lines[0] == "A    Blong"
    assert lines[1] == "---  -----"
    assert lines[2] == "1    2"
    assert lines[3] == "333  4"


def test_format_table_empty_rows():
    lines = format_table(["X"], [])
    assert lines == ["X", "-"]
