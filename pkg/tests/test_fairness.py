"""Fairness metric tests.

The core check compares the module against a direct counting oracle on 50
random datasets, exactly.  The small fixed-rate cases pin down threshold
semantics and the published-table arithmetic the renderers must reproduce.
"""

from __future__ import annotations

import random

import pytest

from credloop.corpus import reference_taxonomy, ValidationError
from credloop.fairness import (
    CspEntry,
    CspReport,
    annotation_outcomes,
    compute_csp,
    csp_diff,
    flag,
    flag_rate,
    render_csp,
    render_diff,
    render_flags,
)
from oracles import brute_csp, random_small_dataset


def _report(pairs, attribute="race", level=2, source="annotations"):
    """pairs: {credential: {group: (awarded, eligible)}}"""
    entries = tuple(
        CspEntry(credential=c, group=g, awarded=a, eligible=e)
        for c, groups in pairs.items()
        for g, (a, e) in sorted(groups.items())
    )
    return CspReport(attribute=attribute, level=level, min_submissions=5,
                     source=source, entries=entries)


# ---------------------------------------------------------------------------
# Fixed-rate arithmetic


def test_flagging_at_published_rates():
    report = _report({
        "L2_01": {"white": (1049, 10000), "black or African American": (368, 10000)},
        "L2_02": {"white": (1049, 10000), "black or African American": (743, 10000)},
    })
    fs = flag(report, threshold=0.05)
    assert len(fs.flags) == 1
    f = fs.flags[0]
    assert f.credential == "L2_01"
    assert f.group_low == "black or African American"
    assert f.group_high == "white"
    assert round(f.rate_high, 4) == 0.1049
    assert round(f.rate_low, 4) == 0.0368
    assert round(f.gap, 4) == 0.0681
    # the 0.0306 gap stays under the threshold
    assert "L2_02" not in {x.credential for x in fs.flags}
    assert round(report.rate("L2_02", "white") - report.rate("L2_02", "black or African American"), 4) == 0.0306


def test_threshold_is_inclusive():
    report = _report({"C": {"a": (1, 20), "b": (2, 20)}})
    assert len(flag(report, threshold=0.05).flags) == 1  # gap exactly 0.05
    report = _report({"C": {"a": (1, 20), "b": (1, 20)}})
    assert not flag(report, threshold=0.05).flags


def test_flag_ordering_and_orientation():
    report = _report({
        "B": {"a": (10, 100), "b": (30, 100)},   # gap 0.20
        "A": {"a": (50, 100), "b": (30, 100)},   # gap 0.20, credential tie -> A first
        "C": {"a": (10, 100), "b": (40, 100)},   # gap 0.30, largest
    })
    fs = flag(report, threshold=0.05)
    assert [f.credential for f in fs.flags] == ["C", "A", "B"]
    for f in fs.flags:
        assert f.rate_low <= f.rate_high
        assert f.gap == pytest.approx(f.rate_high - f.rate_low)
    assert fs.flags[1].group_high == "a"  # A: group a has the higher rate


def test_undisclosed_excluded_from_pairing_by_default():
    report = _report({
        "C": {"alpha": (30, 100), "beta": (28, 100), "undisclosed": (0, 100)},
    })
    assert not flag(report, threshold=0.05).flags
    fs = flag(report, threshold=0.05, include_undisclosed=True)
    assert len(fs.flags) == 2
    assert {f.group_low for f in fs.flags} == {"undisclosed"}
    assert fs.flags[0].gap == pytest.approx(0.30)


def test_flag_validation():
    report = _report({"C": {"a": (1, 10)}})
    with pytest.raises(ValidationError, match="> 0"):
        flag(report, threshold=0.0)
    empty = CspReport(attribute="race", level=2, min_submissions=5,
                      source="annotations", entries=())
    with pytest.raises(ValidationError, match="empty"):
        flag(empty)


def test_entry_validation():
    with pytest.raises(ValidationError, match="eligible"):
        CspEntry("C", "g", awarded=0, eligible=0)
    with pytest.raises(ValidationError, match="awarded"):
        CspEntry("C", "g", awarded=5, eligible=4)


def test_flag_rate_fraction_and_favored_share():
    tax = reference_taxonomy()
    l2 = tax.ids(2)
    pairs = {}
    for i, c in enumerate(l2):
        if i < 3:       # A favored
            pairs[c] = {"A": (30, 100), "B": (10, 100)}
        elif i < 5:     # B favored
            pairs[c] = {"A": (10, 100), "B": (30, 100)}
        else:           # no gap
            pairs[c] = {"A": (20, 100), "B": (20, 100)}
    fs = flag(_report(pairs), threshold=0.05)
    summary = flag_rate(fs, tax)
    assert summary.flagged == 5
    assert summary.total == 39
    assert abs(summary.rate - 0.1282) <= 1e-4
    assert summary.favored_share("A") == 0.6
    assert summary.favored_share("B") == pytest.approx(0.4)
    assert summary.favored_share("C") == 0.0
    d = summary.to_dict()
    assert d["flagged"] == 5 and d["total"] == 39


# ---------------------------------------------------------------------------
# Counting oracle


def test_csp_matches_brute_force_on_50_random_datasets():
    rng = random.Random(20260814)
    for trial in range(50):
        ds, outcomes, attr = random_small_dataset(rng)
        level = rng.choice([1, 2, 3])
        min_sub = rng.randint(1, 6)
        report = compute_csp(ds, outcomes, attr, level=level, min_submissions=min_sub)
        oracle = brute_csp(ds, outcomes, attr, level=level, min_submissions=min_sub)
        got = {(e.credential, e.group): (e.awarded, e.eligible) for e in report.entries}
        for key, counts in oracle.items():
            assert got[key] == counts, f"trial {trial}: {key}"
        # credentials absent from the oracle have no leaves; they may appear
        # in the report but must show zero awards
        for (cred, group), (awarded, _) in got.items():
            if (cred, group) not in oracle:
                assert awarded == 0


def test_csp_on_hand_counted_corpus(tiny_dataset):
    report = compute_csp(tiny_dataset, annotation_outcomes(tiny_dataset), "race",
                         level=2, min_submissions=5)
    assert report.groups() == ("alpha", "beta")  # u3 has 1 submission: ineligible
    expect = {
        ("M1", "alpha"): (2, 5), ("M1", "beta"): (2, 5),
        ("M2", "alpha"): (2, 5), ("M2", "beta"): (1, 5),
        ("M3", "alpha"): (1, 5), ("M3", "beta"): (2, 5),
    }
    got = {(e.credential, e.group): (e.awarded, e.eligible) for e in report.entries}
    assert got == expect

    fs = flag(report, threshold=0.2)
    assert [(f.credential, f.group_low, f.group_high) for f in fs.flags] == [
        ("M2", "beta", "alpha"),
        ("M3", "alpha", "beta"),
    ]


def test_min_submissions_boundary(tiny_dataset):
    # at min_submissions=1 the one-essay user becomes eligible
    report = compute_csp(tiny_dataset, annotation_outcomes(tiny_dataset), "race",
                         level=2, min_submissions=1)
    assert "undisclosed" in report.groups()
    assert report.by_credential("M1")["undisclosed"].eligible == 1


def test_compute_csp_validation(tiny_dataset):
    outcomes = annotation_outcomes(tiny_dataset)
    empty = tiny_dataset.with_experiences([])
    with pytest.raises(ValidationError, match="empty"):
        compute_csp(empty, {}, "race")
    with pytest.raises(ValidationError, match="min_submissions"):
        compute_csp(tiny_dataset, outcomes, "race", min_submissions=0)
    with pytest.raises(ValidationError, match="source"):
        compute_csp(tiny_dataset, outcomes, "race", source="guesses")
    with pytest.raises(ValidationError, match="appears in no experience"):
        compute_csp(tiny_dataset, outcomes, "shoe_size")
    with pytest.raises(ValidationError, match="unknown experience"):
        compute_csp(tiny_dataset, dict(outcomes, ghost=frozenset()), "race")
    short = dict(outcomes)
    short.pop("e1")
    with pytest.raises(ValidationError, match="no outcome"):
        compute_csp(tiny_dataset, short, "race")


def test_report_lookup_errors():
    report = _report({"C": {"a": (1, 10)}})
    with pytest.raises(ValidationError, match="no CSP entries"):
        report.by_credential("missing")
    with pytest.raises(ValidationError, match="no eligible"):
        report.rate("C", "zeta")


def test_report_round_trip():
    report = _report({"C": {"a": (1, 10), "b": (3, 10)}})
    clone = CspReport.from_dict(report.to_dict())
    assert clone == report


# ---------------------------------------------------------------------------
# Diffs and rendering


def test_csp_diff_rows_and_gaps():
    before = _report({"C": {"white": (1049, 10000), "other": (368, 10000)}})
    after = _report({"C": {"white": (1049, 10000), "other": (743, 10000)}})
    diff = csp_diff(before, after, "C")
    assert diff.gap_before == pytest.approx(0.0681)
    assert diff.gap_after == pytest.approx(0.0306)
    by_group = {r.group: r for r in diff.rows}
    assert by_group["white"].before == by_group["white"].after  # untouched group
    assert by_group["other"].before == pytest.approx(0.0368)
    assert by_group["other"].after == pytest.approx(0.0743)


def test_csp_diff_mismatch_errors():
    a = _report({"C": {"g": (1, 10)}}, attribute="race")
    b = _report({"C": {"g": (1, 10)}}, attribute="gender")
    with pytest.raises(ValidationError, match="different attributes"):
        csp_diff(a, b, "C")
    c = _report({"C": {"g": (1, 10)}}, level=3)
    with pytest.raises(ValidationError, match="different attributes or levels"):
        csp_diff(a, c, "C")


def test_csp_diff_handles_group_appearing_after():
    before = _report({"C": {"a": (1, 10)}})
    after = _report({"C": {"a": (1, 10), "b": (2, 10)}})
    diff = csp_diff(before, after, "C")
    row = {r.group: r for r in diff.rows}["b"]
    assert row.before is None and row.after == pytest.approx(0.2)
    assert "-" in render_diff(diff)


def test_renderers_use_four_decimals():
    report = _report({"C": {"white": (1049, 10000), "other": (368, 10000)}})
    out = render_csp(report)
    assert "0.1049" in out and "0.0368" in out
    fs = flag(report, threshold=0.05)
    out = render_flags(fs)
    assert "0.0681" in out
    empty = flag(report, threshold=0.9)
    assert "no flags" in render_flags(empty)
    diff = csp_diff(report, report, "C")
    out = render_diff(diff)
    assert "+0.0000" in out and "0.1049" in out


def test_annotation_outcomes(tiny_dataset):
    outcomes = annotation_outcomes(tiny_dataset)
    assert set(outcomes) == {e.id for e in tiny_dataset.experiences}
    assert outcomes["e7"] == frozenset({"C1", "C3"})
