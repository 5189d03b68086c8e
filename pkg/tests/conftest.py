from datetime import date, timedelta

import numpy as np

from rangecast.windows import OhlcvRecord, RawSeries


def geometric_walk(n, seed, drift=0.0015, vol=0.04, start=1000.0):
    """Daily close and volume columns following a geometric random walk."""
    rng = np.random.default_rng(seed)
    close = start * np.exp(np.cumsum(rng.normal(drift, vol, n)))
    volume = 1e8 * np.exp(np.cumsum(rng.normal(0.0, 0.1, n)))
    return np.column_stack([close, volume])


def to_series(values, asset="SYN"):
    day = date(2015, 1, 1)
    recs = []
    for i, (c, v) in enumerate(np.asarray(values, dtype=np.float64).tolist()):
        recs.append(OhlcvRecord(day + timedelta(days=i), c, c, c, c, v, None))
    return RawSeries(asset, tuple(recs))


def write_csv(path, values):
    day = date(2015, 1, 1)
    lines = ["Date,Open,High,Low,Close,Volume,Market Cap"]
    for i, (c, v) in enumerate(np.asarray(values, dtype=np.float64).tolist()):
        lines.append(f"{day + timedelta(days=i)},{c!r},{c * 1.01!r},{c * 0.99!r},{c!r},{v!r},{c * 1e7!r}")
    path.write_text("\n".join(lines) + "\n")
    return path


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
