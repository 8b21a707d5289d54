"""Derived statistics over result tables: expected layer, last/first ratio
curves, paired t-tests, pairwise pooling comparison, macro averages, and the
machine-checked claims over the shipped result fixtures.

The Student-t tail probability is computed from the regularized incomplete
beta function (continued fraction), so no statistics dependency is needed.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from importlib import resources

from .pool import POOLING_METHODS

MODELS = ("mbert", "xlmr")


class AllZeroProfileError(ValueError):
    pass


# ---------------------------------------------------------------- expected layer

def expected_layer(accuracies):
    """Accuracy-weighted mean layer index of a per-layer accuracy profile."""
    accs = [float(a) for a in accuracies]
    total = sum(accs)
    if total <= 0.0:
        raise AllZeroProfileError("expected layer undefined for an all-zero profile")
    return sum(i * a for i, a in enumerate(accs)) / total


@dataclass
class RatioPoint:
    layer: object  # int or "sum"
    ratio: float | None  # None when the denominator is zero (flagged)

    @property
    def flagged(self):
        return self.ratio is None


def last_first_ratio(last_accs, first_accs, layers=None):
    """Per-layer acc_last / acc_first; zero denominators are flagged, not fatal."""
    if len(last_accs) != len(first_accs):
        raise ValueError("curves must have the same length")
    if layers is None:
        layers = list(range(len(last_accs)))
    points = []
    for layer, la, fa in zip(layers, last_accs, first_accs):
        points.append(RatioPoint(layer, None if fa == 0 else la / fa))
    return points


# ---------------------------------------------------------------- paired t-test

def _betacf(a, b, x):
    """Continued fraction for the incomplete beta function (Lentz's method)."""
    max_iter = 300
    eps = 3e-16
    fpmin = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < fpmin:
        d = fpmin
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < fpmin:
            d = fpmin
        c = 1.0 + aa / c
        if abs(c) < fpmin:
            c = fpmin
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < fpmin:
            d = fpmin
        c = 1.0 + aa / c
        if abs(c) < fpmin:
            c = fpmin
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            return h
    raise RuntimeError("incomplete beta continued fraction did not converge")


def incomplete_beta(a, b, x):
    """Regularized incomplete beta I_x(a, b)."""
    if x < 0.0 or x > 1.0:
        raise ValueError("x must be in [0, 1]")
    if x == 0.0 or x == 1.0:
        return x
    ln_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_two_sided_p(t, df):
    """P(|T| >= |t|) for Student's t with df degrees of freedom."""
    if math.isinf(t):
        return 0.0
    return incomplete_beta(df / 2.0, 0.5, df / (df + t * t))


@dataclass
class TTestResult:
    t: float
    p: float
    significant: bool
    df: int


def paired_t_test(a, b, alpha=0.05):
    """Two-sided paired t-test. Zero-variance zero-mean differences give
    t=0, p=1 by convention; zero-variance nonzero-mean gives p=0."""
    if len(a) != len(b):
        raise ValueError("paired samples must have equal length")
    n = len(a)
    if n < 2:
        raise ValueError("need at least 2 pairs")
    diffs = [float(x) - float(y) for x, y in zip(a, b)]
    mean = sum(diffs) / n
    var = sum((d - mean) ** 2 for d in diffs) / (n - 1)
    df = n - 1
    if var == 0.0:
        if mean == 0.0:
            return TTestResult(0.0, 1.0, False, df)
        t = math.inf if mean > 0 else -math.inf
        return TTestResult(t, 0.0, True, df)
    t = mean / math.sqrt(var / n)
    p = student_t_two_sided_p(t, df)
    return TTestResult(t, p, p < alpha, df)


# ---------------------------------------------------------------- result tables

@dataclass
class ResultTable:
    """(task, model) -> pooling -> accuracy in percent."""

    rows: dict

    def tasks(self, model=None):
        return sorted({t for (t, m) in self.rows if model is None or m == model})

    def models(self):
        return sorted({m for (_, m) in self.rows})

    def get(self, task, model, method):
        return self.rows[(task, model)][method]

    def cells(self, model=None, tasks=None, methods=None):
        out = []
        for (t, m), vals in sorted(self.rows.items()):
            if model is not None and m != model:
                continue
            if tasks is not None and t not in tasks:
                continue
            # default to whatever methods the row actually holds, so partial
            # grids (e.g. a two-pooling run) still aggregate
            row_methods = methods if methods is not None else sorted(vals)
            out.extend(vals[meth] for meth in row_methods)
        return out

    @classmethod
    def from_csv_text(cls, text):
        rows = {}
        for rec in csv.DictReader(io.StringIO(text)):
            if "tag" in rec:
                task = f"{rec['language']}/{rec['tag']}/{rec['pos']}"
            else:
                task = rec["language"]
            rows[(task, rec["model"])] = {m: float(rec[m]) for m in POOLING_METHODS}
        return cls(rows)

    @classmethod
    def from_csv(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_csv_text(fh.read())


def load_fixture_table(name):
    """name: morph | pos | ner."""
    fname = {"morph": "morph_results.csv", "pos": "pos_results.csv", "ner": "ner_results.csv"}[name]
    text = resources.files("subpool.fixtures").joinpath(fname).read_text("utf-8")
    return ResultTable.from_csv_text(text)


@dataclass
class PairwiseCell:
    mean_ratio: float
    p: float
    significant: bool


def pairwise_matrix(table, model, methods=None, tasks=None, alpha=0.05):
    """Mean over tasks of the per-task accuracy ratio row/column; a cell is
    starred when the paired t-test over the tasks has p < alpha."""
    methods = list(methods or POOLING_METHODS)
    tasks = list(tasks or table.tasks(model))
    series = {
        m: [table.get(t, model, m) for t in tasks] for m in methods
    }
    matrix = {}
    for r in methods:
        for c in methods:
            ratios = [a / b for a, b in zip(series[r], series[c])]
            mean_ratio = sum(ratios) / len(ratios)
            if r == c:
                matrix[(r, c)] = PairwiseCell(mean_ratio, 1.0, False)
            else:
                tt = paired_t_test(series[r], series[c], alpha)
                matrix[(r, c)] = PairwiseCell(mean_ratio, tt.p, tt.significant)
    return matrix


def macro_average(table, model=None, tasks=None, methods=None):
    """Unweighted mean over the selected cells."""
    cells = table.cells(model=model, tasks=tasks, methods=methods)
    if not cells:
        raise ValueError("empty group")
    return sum(cells) / len(cells)


# ---------------------------------------------------------------- fixture claims

@dataclass
class ClaimResult:
    name: str
    passed: bool
    details: str


def verify_fixture_claims(morph=None, pos=None, ner=None):
    """Machine-check the shipped result tables against the headline claims."""
    morph = morph or load_fixture_table("morph")
    pos = pos or load_fixture_table("pos")
    ner = ner or load_fixture_table("ner")
    claims = []

    # (a) NER: mBERT >= XLM-R for every language under every pooling
    bad = [
        (t, m)
        for t in ner.tasks()
        for m in POOLING_METHODS
        if ner.get(t, "mbert", m) < ner.get(t, "xlmr", m)
    ]
    claims.append(
        ClaimResult(
            "ner_mbert_dominates",
            not bad,
            "mBERT >= XLM-R everywhere" if not bad else f"violations: {bad}",
        )
    )

    # (b) morphology: last > first for all tasks except <Arabic, Case, NOUN>
    exceptions = sorted(
        (t, m)
        for (t, m) in morph.rows
        if not morph.get(t, m, "last") > morph.get(t, m, "first")
    )
    expected = [("Arabic/Case/NOUN", "mbert"), ("Arabic/Case/NOUN", "xlmr")]
    claims.append(
        ClaimResult(
            "morph_last_beats_first",
            exceptions == expected,
            f"exception list: {exceptions}",
        )
    )

    # (c) POS: first is the row minimum for Korean under both models
    ok = all(
        min(pos.rows[("Korean", m)], key=lambda k: pos.rows[("Korean", m)][k]) == "first"
        for m in MODELS
    )
    claims.append(ClaimResult("pos_korean_first_worst", ok, "first is the Korean row minimum"))

    # Finnish Case mBERT last/first ratio at the presented layer
    ratio = morph.get("Finnish/Case/NOUN", "mbert", "last") / morph.get(
        "Finnish/Case/NOUN", "mbert", "first"
    )
    claims.append(
        ClaimResult(
            "finnish_case_ratio",
            abs(ratio - 2.748) <= 0.001,
            f"last/first = {ratio:.4f}",
        )
    )

    # (d) mBERT morphology: attn mean pairwise ratio >= 1 against every pooling
    matrix = pairwise_matrix(morph, "mbert")
    bad = [c for c in POOLING_METHODS if matrix[("attn", c)].mean_ratio < 1.0]
    claims.append(
        ClaimResult(
            "morph_attn_dominates_mbert",
            not bad,
            "attn row ratios all >= 1" if not bad else f"ratio < 1 against: {bad}",
        )
    )
    return claims
