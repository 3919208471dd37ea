import time

import pytest

from kdde.rates import DIMENSIONS, R_ORDERS, SAMPLE_SIZES, format_rate_table, rate_table

# rows: (r, n) ; columns: d = 2..5, each CV then PI/SCV
EXPECTED_RATES = {
    (0, 10**3): "1.000 0.562 0.720 0.681 0.562 0.794 0.464 0.901",
    (0, 10**4): "0.681 0.316 0.439 0.408 0.316 0.501 0.245 0.593",
    (0, 10**5): "0.464 0.178 0.268 0.245 0.178 0.316 0.129 0.390",
    (1, 10**3): "1.334 0.794 1.000 0.901 0.794 1.000 0.658 1.093",
    (1, 10**4): "1.000 0.501 0.681 0.593 0.501 0.681 0.390 0.767",
    (1, 10**5): "0.750 0.316 0.464 0.390 0.316 0.464 0.231 0.538",
    (2, 10**3): "1.585 1.000 1.233 1.093 1.000 1.179 0.838 1.259",
    (2, 10**4): "1.259 0.681 0.901 0.767 0.681 0.848 0.538 0.926",
    (2, 10**5): "1.000 0.464 0.658 0.538 0.464 0.611 0.346 0.681",
}


def expected_entries():
    out = {}
    for (r, n), row in EXPECTED_RATES.items():
        vals = row.split()
        for k, d in enumerate(DIMENSIONS):
            out[(r, n, d, "CV")] = vals[2 * k]
            out[(r, n, d, "PI/SCV")] = vals[2 * k + 1]
    return out


def test_all_72_entries():
    t0 = time.perf_counter()
    rows = rate_table()
    assert time.perf_counter() - t0 < 1.0
    assert len(rows) == 72 == len(R_ORDERS) * len(SAMPLE_SIZES) * len(DIMENSIONS) * 2
    got = {(e["r"], e["n"], e["d"], e["method"]): str(e["value"]) for e in rows}
    assert got == expected_entries()


@pytest.mark.parametrize(
    "key,val",
    [((0, 1000, 2, "CV"), "1.000"), ((0, 1000, 2, "PI/SCV"), "0.562"), ((2, 10**5, 5, "PI/SCV"), "0.681"),
     ((2, 10**5, 5, "CV"), "0.346")],
)
def test_named_entries(key, val):
    got = {(e["r"], e["n"], e["d"], e["method"]): str(e["value"]) for e in rate_table()}
    assert got[key] == val


def test_entries_coincide_where_exponents_match():
    # CV at d = 4 and PI/SCV at d = 2 both have exponent -1/(r+4)
    got = {(e["r"], e["n"], e["d"], e["method"]): e["value"] for e in rate_table()}
    for r in R_ORDERS:
        for n in SAMPLE_SIZES:
            assert got[(r, n, 4, "CV")] == got[(r, n, 2, "PI/SCV")]


def test_formatted_table_has_nine_rows():
    assert len(format_rate_table().splitlines()) == 10
