"""Acceptance suite: one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -v`` or ``python3 tests/test_acceptance.py``.
"""

import json
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

import oracles  # noqa: E402
from fairlend.cli import run  # noqa: E402
from fairlend.data import ScenarioConfig, generate_scenario, load_csv, split  # noqa: E402
from fairlend.exceptions import EmptyGroupError  # noqa: E402
from fairlend.impossibility import default_instance_family, feasibility_table  # noqa: E402
from fairlend.learners import (fit_logistic, fit_tree, logistic_gradient,  # noqa: E402
                               logistic_loss, threshold_decisions)
from fairlend.lda import (CandidateModel, evaluate_candidate, pareto_frontier,  # noqa: E402
                          search_alternatives)
from fairlend.metrics import (balance_negative, balance_positive,  # noqa: E402
                              calibration_within_groups, confusion, fairness_report,
                              statistical_parity)
from fairlend.mitigate import (AdversarialConfig, RegularizationConfig,  # noqa: E402
                               adversary_leakage, evaluate_split, fit_adversarial, fit_fair_tree)

FIXTURES = Path(__file__).parent / "fixtures"
SEEDS = range(5)


@pytest.fixture
def report(capsys):
    """Print the verdict line past pytest's capture, then assert it."""
    def emit(number, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
        with capsys.disabled():
            print(f"\n{line}")
        assert ok, line
    return emit


def _scenario_split(seed, **overrides):
    ds, g = generate_scenario(ScenarioConfig(seed=seed, **overrides))
    return split(ds, g, 0.7, seed)


def test_criterion_1_worked_tradeoff(report):
    start = time.perf_counter()
    ds, g = load_csv(FIXTURES / "cutoff_tradeoff_100.csv", group_column="group")
    a600 = evaluate_split(ds, g, "credit_score", 600)
    a700 = evaluate_split(ds, g, "credit_score", 700)
    picks = [fit_fair_tree(ds, g, RegularizationConfig(lam), {"max_depth": 1}).root_split[1]
             for lam in (0.0, 1.0)]
    elapsed = time.perf_counter() - start
    ok = (abs(a600.accuracy - 0.75) <= 0.005 and abs(a600.air - 0.65) <= 0.01
          and abs(a700.accuracy - 0.73) <= 0.005 and abs(a700.air - 0.79) <= 0.01
          and picks == [600.0, 700.0] and elapsed < 1.0)
    report(1, ok, f"600 -> ({a600.accuracy:.4f}, {a600.air:.4f}), 700 -> ({a700.accuracy:.4f}, "
                  f"{a700.air:.4f}), picks at lambda 0/1 = {picks}, {elapsed:.3f} s")


def test_criterion_2_impossibility_family(report):
    start = time.perf_counter()
    family = default_instance_family()
    rows = feasibility_table(family, 20, 1e-9)
    elapsed = time.perf_counter() - start
    mismatches = [r["instance"] for r in rows
                  if r["witness_found"] != (r["equal_base_rates"] or r["perfect_prediction"])]
    combos = {(r["base_rate_protected"], r["base_rate_control"]) for r in rows}
    sizes_ok = all(sum(i.is_protected) <= 8 and len(i.outcomes) - sum(i.is_protected) <= 8
                   for i in family)
    witnesses = sum(r["witness_found"] for r in rows)
    ok = not mismatches and len(combos) >= 25 and sizes_ok and elapsed < 60
    report(2, ok, f"{len(rows)} instances, {len(combos)} base-rate pairs, {witnesses} witnesses, "
                  f"{len(mismatches)} mismatches, {elapsed:.1f} s")


def _random_instance(rng):
    n = int(rng.integers(2, 51))
    prot = rng.random(n) < 0.5
    prot[0], prot[1] = True, False
    y = rng.integers(0, 2, n)
    scores = np.where(rng.random(n) < 0.5, rng.integers(0, 21, n) / 20, rng.random(n))
    return scores, y, prot


def test_criterion_3_metric_oracles(report):
    rng = np.random.default_rng(20240601)
    worst, failures = 0.0, 0
    for _ in range(200):
        scores, y, prot = _random_instance(rng)
        threshold = float(rng.choice([0.25, 0.5, 0.75]))
        n_bins = int(rng.integers(1, 13))
        s, yl, pl = scores.tolist(), y.tolist(), prot.tolist()
        fav = [1 if v < threshold else 0 for v in s]
        fr = fairness_report(scores, y, prot, threshold, n_bins)
        rp, rc = oracles.favorable_rates(fav, pl)
        errs = [abs(statistical_parity(threshold_decisions(scores, threshold), prot) - (rp - rc))]
        if rc > 0:
            errs.append(abs(fr.air - rp / rc))
        elif fr.air is not None:
            failures += 1
        got = {k: c._asdict() for k, c in confusion(fav, y, prot).items()}
        failures += got != oracles.confusion(fav, yl, pl)
        for fn, cls in ((balance_negative, 0), (balance_positive, 1)):
            want = oracles.class_balance(s, yl, pl, cls)
            try:
                errs.append(abs(fn(scores, y, prot) - want))
            except EmptyGroupError:
                failures += want is not None
        table = calibration_within_groups(scores, y, prot, n_bins)
        rows, gap = oracles.calibration(s, yl, pl, n_bins)
        for b, (n_p, n_c, r_p, r_c) in zip(table.bins, rows):
            failures += (b.n_protected, b.n_control) != (n_p, n_c)
            for mine, theirs in ((b.rate_protected, r_p), (b.rate_control, r_c)):
                if (mine is None) != (theirs is None):
                    failures += 1
                elif mine is not None:
                    errs.append(abs(mine - theirs))
        if (table.max_gap is None) != (gap is None):
            failures += 1
        elif gap is not None:
            errs.append(abs(table.max_gap - gap))
        worst = max(worst, max(errs))
    report(3, failures == 0 and worst <= 1e-12,
           f"200 instances, max abs error {worst:.2e}, {failures} structural mismatches")


def test_criterion_4_reductions(report):
    train, _ = _scenario_split(0)
    plain = fit_tree(train.dataset).to_dict()["parameters"]
    fair = fit_fair_tree(train.dataset, train.groups, RegularizationConfig(0.0)).to_dict()
    identical = json.dumps(plain, sort_keys=True) == json.dumps(fair["parameters"],
                                                                sort_keys=True)
    logit = fit_logistic(train.dataset)
    adv = fit_adversarial(train.dataset, train.groups, AdversarialConfig(alpha=0.0))
    diff = max(float(np.max(np.abs(logit.coef_ - adv.coef_))),
               abs(logit.intercept_ - adv.intercept_))
    report(4, identical and diff <= 1e-9,
           f"lambda=0 tree parameters byte-identical: {identical}; "
           f"alpha=0 max weight difference {diff:.2e}")


def test_criterion_5_adversarial_efficacy(report):
    start = time.perf_counter()
    base_air, adv_air, base_acc, adv_acc, leak_drop = [], [], [], [], 0
    for seed in SEEDS:
        train, test = _scenario_split(seed)
        y = test.dataset.outcome
        base = fit_logistic(train.dataset, {"seed": seed})
        a0 = fit_adversarial(train.dataset, train.groups, AdversarialConfig(alpha=0.0, seed=seed))
        a2 = fit_adversarial(train.dataset, train.groups, AdversarialConfig(alpha=2.0, seed=seed))
        rb = fairness_report(base.risk_scores(test.dataset), y, test.groups, 0.5)
        r2 = fairness_report(a2.risk_scores(test.dataset), y, test.groups, 0.5)
        base_air.append(rb.air)
        adv_air.append(r2.air)
        base_acc.append(rb.accuracy)
        adv_acc.append(r2.accuracy)
        leak_drop += (adversary_leakage(a2, test.dataset, test.groups)
                      < adversary_leakage(a0, test.dataset, test.groups))
    elapsed = time.perf_counter() - start
    gain = float(np.median(adv_air) - np.median(base_air))
    loss = float(np.median(base_acc) - np.median(adv_acc))
    ok = gain >= 0.05 and loss <= 0.05 and leak_drop >= 4 and elapsed < 120
    report(5, ok, f"median AIR {np.median(base_air):.3f} -> {np.median(adv_air):.3f} "
                  f"(+{gain:.3f}), median accuracy loss {loss:.4f}, leakage lower in "
                  f"{leak_drop}/5 seeds, {elapsed:.1f} s")


def test_criterion_6_lda_search(report):
    hits = []
    for seed in SEEDS:
        train, test = _scenario_split(seed)
        model = fit_logistic(train.dataset, {"seed": seed})
        baseline = evaluate_candidate(model, "baseline", test, 0.5)
        drops = search_alternatives(baseline, train, test, ["drop"], 100)
        best = max(drops, key=lambda c: c.air)
        hits.append(best.strategy == "drop:proxy" and best.air > baseline.air)
    rng = np.random.default_rng(6)
    frontier_ok = 0
    for _ in range(100):
        n = int(rng.integers(1, 60))
        points = [(int(rng.integers(0, 12)) / 11, int(rng.integers(0, 12)) / 9) for _ in range(n)]
        cands = [CandidateModel(str(i), None, p, a, order=i) for i, (p, a) in enumerate(points)]
        got = sorted(int(c.strategy) for c in pareto_frontier(cands))
        frontier_ok += got == sorted(oracles.nondominated(points))
    ok = sum(hits) >= 4 and frontier_ok == 100
    report(6, ok, f"proxy is the best drop in {sum(hits)}/5 seeds {hits}; frontier matches "
                  f"brute force on {frontier_ok}/100 sets")


def test_criterion_7_gradient(report):
    rng = np.random.default_rng(7)
    X = rng.normal(size=(20, 3))
    y = (X[:, 0] + 0.5 * rng.normal(size=20) > 0).astype(int)
    h, worst = 1e-5, 0.0
    for _ in range(10):
        w, b = rng.normal(size=3), float(rng.normal())
        gw, gb = logistic_gradient(w, b, X, y, 0.1)
        numeric = []
        for j in range(4):
            e = np.zeros(4)
            e[j] = h
            plus = logistic_loss(w + e[:3], b + e[3], X, y, 0.1)
            minus = logistic_loss(w - e[:3], b - e[3], X, y, 0.1)
            numeric.append((plus - minus) / (2 * h))
        analytic = np.append(gw, gb)
        worst = max(worst, float(np.linalg.norm(analytic - numeric) / np.linalg.norm(analytic)))
    report(7, worst <= 1e-6, f"max relative error {worst:.2e} over 10 weight vectors")


def test_criterion_8_end_to_end(tmp_path, report):
    wide = ["--base-rate-protected", "0.45"]
    runs = {
        "no_impact": ["--base-rate-protected", "0.15", "--proxy-correlation", "0"],
        "lda_a": wide, "lda_b": wide,
        "no_lda": wide + ["--min-air-gain", "0.9"],
    }
    codes = {name: run(["search", "--out", str(tmp_path / name), *args])
             for name, args in runs.items()}
    same = ((tmp_path / "lda_a" / "report.json").read_bytes()
            == (tmp_path / "lda_b" / "report.json").read_bytes())
    want = {"no_impact": 0, "lda_a": 2, "lda_b": 2, "no_lda": 3}
    report(8, same and codes == want,
           f"report.json byte-identical across runs: {same}; exit codes {codes}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
