#!/usr/bin/env python3
"""Generate frozen two-sided p-values for the Pearson t-test grid.

Reference: p = I_{v/(v+t^2)}(v/2, 1/2) with t = r*sqrt((n-2)/(1-r^2)),
v = n-2, evaluated at 50 decimal digits with mpmath and emitted with 17
significant digits.  Run from the repo root:

    python3 tests/fixtures/gen/gen_pvalue_fixture.py > tests/fixtures/pvalue_grid.json
"""
import json

import mpmath as mp

mp.mp.dps = 50


def p_two_sided(r, n):
    v = mp.mpf(n - 2)
    r = mp.mpf(r)
    if r == 0:
        return mp.mpf(1)
    t = r * mp.sqrt(v / (1 - r * r))
    x = v / (v + t * t)
    return mp.betainc(v / 2, mp.mpf("0.5"), 0, x, regularized=True)


def main():
    cases = []
    for ri in range(1, 10):
        r = ri / 10.0
        for n in (5, 10, 20, 50):
            p = p_two_sided(r, n)
            cases.append({"r": r, "n": n, "p": float(mp.nstr(p, 17))})
            cases.append({"r": -r, "n": n, "p": float(mp.nstr(p, 17))})
    # A few spot values used directly in unit tests.
    extras = [
        (0.5, 20),
        (0.8, 4),
        (0.3162277660168379, 40),  # r = sqrt(0.1)
    ]
    for r, n in extras:
        cases.append({"r": r, "n": n, "p": float(mp.nstr(p_two_sided(r, n), 17))})
    print(json.dumps({"cases": cases}, indent=1))


if __name__ == "__main__":
    main()
