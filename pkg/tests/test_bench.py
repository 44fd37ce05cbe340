import pytest

from midframe.bench import format_table, parse_table, run_bench


@pytest.fixture(scope="module")
def rows():
    return run_bench(sizes=(32, 96), radii=(1, 3), repeats=3)


def test_table_round_trip(rows):
    parsed = parse_table(format_table(rows))
    assert [(r.kernel, r.backend, r.size, r.d) for r in parsed] == [(r.kernel, r.backend, r.size, r.d) for r in rows]
    assert all(r.median_s > 0 for r in parsed)


def _time(rows, **key):
    (row,) = [r for r in rows if all(getattr(r, k) == v for k, v in key.items())]
    return row.median_s


@pytest.mark.parametrize("kernel", ["compute_bcv", "apply_dynamic_filters"])
def test_more_pixels_cost_more(rows, kernel):
    for backend in {r.backend for r in rows}:
        assert _time(rows, kernel=kernel, backend=backend, size=96, d=3) > \
            _time(rows, kernel=kernel, backend=backend, size=32, d=3)


def test_wider_search_costs_more(rows):
    for backend in {r.backend for r in rows}:
        assert _time(rows, kernel="compute_bcv", backend=backend, size=96, d=3) > \
            _time(rows, kernel="compute_bcv", backend=backend, size=96, d=1)


def test_parse_rejects_other_text():
    with pytest.raises(ValueError):
        parse_table("hello\n")
