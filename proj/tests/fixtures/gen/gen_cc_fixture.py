#!/usr/bin/env python3
"""Freeze McCabe cyclomatic complexity for the interpreter-snippet fixture.

Reference implementation walks the official Python AST and applies the
classic McCabe rules (one decision per branch point):

    if / elif          ast.If            +1 each
    ternary            ast.IfExp         +1
    for (incl. async)  ast.For           +1
    while              ast.While         +1
    except clause      ast.ExceptHandler +1
    and / or           ast.BoolOp        +(len(values) - 1)
    assert             ast.Assert        +1
    comprehension      each `for` clause +1, each `if` filter +1
    match arm          ast.match_case    +1 (+1 more for a guard)

CC = 1 + sum of decisions over the whole snippet.  The AST path is an
independent oracle for the token-lexer implementation: both must agree on
every snippet.  LOC is the count of non-blank lines.  Run from the repo root:

    python3 tests/fixtures/gen/gen_cc_fixture.py > tests/fixtures/cc_snippets.json
"""
import ast
import json

SNIPPETS = [
    # 1: straight-line computer algebra, keyword-bearing comment
    """\
import sympy as sp

x = sp.symbols('x')
# solve the quartic; no branching needed even if roots repeat
roots = sp.solve(x**4 - 5*x**2 + 4, x)
print(sorted(roots))
""",
    # 2: plain accumulation loop
    """\
total = 0
for k in range(1, 101):
    total += k * k
print(total)
""",
    # 3: loop with a filter branch
    """\
count = 0
for n in range(2, 1000):
    if n % 7 == 3:
        count += 1
print(count)
""",
    # 4: loop, branch, boolean connective
    """\
hits = []
for a in range(1, 50):
    if a % 3 == 0 and a % 5 == 2:
        hits.append(a)
print(len(hits), hits[:5])
""",
    # 5: while with early exit
    """\
n = 1
while True:
    n += 1
    if n * (n + 1) // 2 > 10**6:
        break
print(n)
""",
    # 6: parse failures tolerated inside a loop
    """\
values = []
for tok in data.split(','):
    try:
        values.append(int(tok))
    except ValueError:
        values.append(0)
print(sum(values))
""",
    # 7: filtered comprehension
    """\
squares = [n * n for n in range(100) if n % 4 == 1]
print(len(squares), squares[-1])
""",
    # 8: nested comprehension with one filter
    """\
pairs = [(a, b) for a in range(10) for b in range(10) if a < b]
print(len(pairs))
""",
    # 9: ternary
    """\
m = 17
parity = 'odd' if m % 2 else 'even'
print(parity)
""",
    # 10: branch with mixed connectives
    """\
a, b, c = 6, 10, 15
if a % 2 == 0 and b % 2 == 0 or c % 2 == 0:
    print('composite parity condition holds')
""",
    # 11: invariant check via assert
    """\
from math import gcd

g = gcd(252, 105)
assert g == 21
print(252 // g, 105 // g)
""",
    # 12: decision keywords inside string literals only
    """\
msg = "if and or while for except assert"
tokens = msg.split()
print(len(tokens), 'words in', repr(msg))
""",
    # 13: decision keywords inside comments only
    """\
# if the sum overflows, switch to Fraction
# for large n this stays exact; no while loop required
from fractions import Fraction
s = Fraction(355, 113)
print(float(s))
""",
    # 14: docstring noise plus one real branch
    '''\
def describe(n):
    """Return a label. Uses `if` wording: while positive, report sign."""
    if n > 0:
        return 'positive'
    return 'non-positive'

print(describe(-3))
''',
    # 15: f-string formatting in a loop
    """\
total = 0
for term in (1, 3, 5, 7, 9):
    total += term ** 2
print(f"sum of odd squares: {total}")
""",
    # 16: brute-force double loop
    """\
best = None
for p in range(2, 60):
    for q in range(p, 60):
        if p * q == 221 and p + q > 0:
            best = (p, q)
print(best)
""",
    # 17: Euclid with tuple swap
    """\
a, b = 1071, 462
while b:
    a, b = b, a % b
print(a)
""",
    # 18: generator expression with filter feeding a ternary
    """\
s = sum(d for d in range(1, 220) if 220 % d == 0)
kind = 'abundant' if s > 2 * 220 else 'not abundant'
print(s, kind)
""",
    # 19: structural match with one guard
    """\
def classify(point):
    match point:
        case (0, 0):
            return 'origin'
        case (x, 0) if x > 0:
            return 'positive x-axis'
        case (0, _):
            return 'y-axis'
    return 'interior'

print(classify((3, 0)))
""",
    # 20: mixed control flow
    """\
results = []
for raw in ['12', 'x', '7', '30']:
    try:
        v = int(raw)
    except ValueError:
        continue
    if v % 2 == 0 and v > 10:
        results.append(v)
    elif v % 3 == 0 or v % 5 == 0:
        results.append(-v)
    else:
        results.append(0)
assert len(results) <= 4
print(results)
""",
]


class McCabeVisitor(ast.NodeVisitor):
    def __init__(self):
        self.decisions = 0

    def visit_If(self, node):
        self.decisions += 1
        self.generic_visit(node)

    def visit_IfExp(self, node):
        self.decisions += 1
        self.generic_visit(node)

    def visit_For(self, node):
        self.decisions += 1
        self.generic_visit(node)

    visit_AsyncFor = visit_For

    def visit_While(self, node):
        self.decisions += 1
        self.generic_visit(node)

    def visit_ExceptHandler(self, node):
        self.decisions += 1
        self.generic_visit(node)

    def visit_BoolOp(self, node):
        self.decisions += len(node.values) - 1
        self.generic_visit(node)

    def visit_Assert(self, node):
        self.decisions += 1
        self.generic_visit(node)

    def visit_comprehension(self, node):
        self.decisions += 1 + len(node.ifs)
        self.generic_visit(node)

    def visit_match_case(self, node):
        self.decisions += 1
        if node.guard is not None:
            self.decisions += 1
        self.generic_visit(node)


def cyclomatic(code):
    v = McCabeVisitor()
    v.visit(ast.parse(code))
    return 1 + v.decisions


def loc(code):
    return sum(1 for line in code.splitlines() if line.strip())


def main():
    out = []
    for code in SNIPPETS:
        out.append({"code": code, "cc": cyclomatic(code), "loc": loc(code)})
    print(json.dumps({"snippets": out}, indent=1))


if __name__ == "__main__":
    main()
