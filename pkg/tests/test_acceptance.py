"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run on its own with ``pytest tests/test_acceptance.py -v``.
"""

import math

import numpy as np

from entseg.chance import analytic_chance, corpus_density, monte_carlo_chance
from entseg.core import BoundarySet, MeasureTrack, Posteriorgram
from entseg.detect import (combined_decision, detect, detect_baseline, pick_peak_per_region,
                           regions_above, star_decision)
from entseg.evaluation import criterion, dp_match, evaluate_corpus
from entseg.measures import compute_measures, entropy, moving_average, second_derivative
from entseg.optimize import best_row, grid_search_combined, threshold_sweep, value_range
from entseg.synth import SynthSpec, synth_corpus
from entseg.tdnn import (TdnnConfig, TrainConfig, fit_normalization, loss_and_grads,
                         make_dataset, mse, nn_stats, tdnn_init, tdnn_train, with_nn)

from conftest import STANDARD_DENSITY
from test_evaluation import brute_force_matching

# settings used where an imperfect recogniser is wanted
REALISTIC = dict(confusion=0.8, misalignment=0.3, noise_level=1.5)


def report(capsys, number, title, checks):
    """Print one line per criterion and fail with the names of broken checks."""
    failed = [name for name, ok in checks.items() if not ok]
    status = "PASS" if not failed else "FAIL"
    detail = "all checks hold" if not failed else "failed: " + ", ".join(failed)
    with capsys.disabled():
        print(f"\ncriterion {number} [{status}] {title}: {detail}")
    assert not failed, failed


def matched_chance_criterion(refs, n_detected, tol=1, reps=50, seed=0):
    ratio = n_detected / sum(len(r) for r in refs)
    res = monte_carlo_chance(refs, ratio, reps, tol, seed)
    return criterion(res.precision, res.recall), res


# -- 1 ------------------------------------------------------------------------

# reference (precision, recall, criterion) triples at 10 ms and at 20 ms
REFERENCE_ROWS = {
    "level of chance": ((34.8, 100, 65.2), (55.0, 100, 45.0)),
    "baseline": ((56.5, 105, 43.8), (74.3, 138, 46.0)),
    "e": ((67.0, 43.3, 65.7), (81.0, 52.3, 51.3)),
    "d2": ((60.1, 78.1, 45.5), (79.8, 85.5, 24.9)),
    "ma": ((68.1, 65.5, 47.0), (78.5, 86.6, 25.3)),
    "e+d2": ((62.3, 75.9, 44.8), (77.6, 94.6, 23.0)),
    "e+ma": ((68.3, 65.5, 46.9), (79.1, 86.3, 25.0)),
    "nn": ((75.0, 64.5, 43.4), (86.4, 76.2, 27.4)),
    "forced alignment": ((86.8, 90.8, 16.1), (93.9, 98.3, 6.28)),
}


def test_criterion_1_criterion_arithmetic(capsys):
    checks = {}
    for name, rows in REFERENCE_ROWS.items():
        for tol, (p, r, crit) in zip((10, 20), rows):
            checks[f"{name}@{tol}ms"] = abs(criterion(p, r) - crit) <= 0.2
    report(capsys, 1, "criterion recomputed from reference P/R within 0.2", checks)


# -- 2 ------------------------------------------------------------------------

def test_criterion_2_chance_level(capsys, standard_corpus):
    refs = [u.reference for u in standard_corpus]
    density = corpus_density(refs)
    analytic = analytic_chance(density, 1.0, 1)
    at_one = monte_carlo_chance(refs, 1.0, 50, 1, seed=0)
    sweep = [monte_carlo_chance(refs, r, 50, 1, seed=0) for r in value_range(0.05, 2.5, 0.05)]
    precisions = [s.precision for s in sweep]
    converged = monte_carlo_chance(refs, 1.0, 500, 1, seed=0)
    checks = {
        "corpus B/M within 0.005 of target": abs(density - STANDARD_DENSITY) <= 0.005,
        "analytic 34.2% at 10 ms": math.isclose(analytic_chance(0.114, 1.0, 1), 34.2),
        "analytic 57.0% at 20 ms": math.isclose(analytic_chance(0.114, 1.0, 2), 57.0),
        "MC at ratio 1 within 1.5 of analytic": abs(at_one.precision - analytic) <= 1.5,
        "precision spread over ratios <= 3": max(precisions) - min(precisions) <= 3.0,
        "recall at ratio 0.05 near 1% (<= 3%)": 0 < sweep[0].recall <= 3.0,
        "recall at ratio 2.5 above 85%": sweep[-1].recall > 85.0,
        "MC at 500 reps within 1.0 of analytic": abs(converged.precision - analytic) <= 1.0,
    }
    with capsys.disabled():
        print(f"\n  B/M={density:.4f} analytic={analytic:.2f} MC50={at_one.precision:.2f} "
              f"MC500={converged.precision:.2f} P range=[{min(precisions):.2f}, "
              f"{max(precisions):.2f}] R: {sweep[0].recall:.2f} -> {sweep[-1].recall:.2f}")
    report(capsys, 2, "chance level analytic and Monte Carlo", checks)


# -- 3 ------------------------------------------------------------------------

def test_criterion_3_measure_identities(capsys):
    rng = np.random.default_rng(3)
    checks = {}

    worst = 0.0
    for _ in range(200):
        v = rng.normal(0, 2, int(rng.integers(4, 80)))
        t = MeasureTrack(v, 0, len(v) - 1, "entropy")
        d2 = second_derivative(t).values
        ma = moving_average(t).values
        n = np.arange(1, len(v) - 2)
        worst = max(worst, float(np.max(np.abs(ma[n] - (d2[n] + d2[n + 1])))))
    checks["ma equals sum of adjacent second differences"] = worst <= 1e-12

    worst = 0.0
    for _ in range(200):
        a, b = rng.normal(0, 5, 2)
        t = MeasureTrack(a * np.arange(int(rng.integers(3, 60))) + b, 0, 0, "entropy")
        worst = max(worst, float(np.max(np.abs(second_derivative(t).valid_values))))
    checks["second difference of affine tracks is zero"] = worst <= 1e-9

    ok = True
    total = 0
    for n_classes, alpha in [(2, 1.0), (7, 0.1), (50, 1.0), (50, 0.01), (50, 100.0)]:
        p = rng.dirichlet(np.full(n_classes, alpha), 20000)
        p[::97] = np.eye(n_classes)[rng.integers(n_classes, size=len(p[::97]))]
        e = entropy(Posteriorgram(p, tuple(map(str, range(n_classes))))).values
        ok &= bool(np.all(e >= 0) and np.all(e <= np.log2(n_classes)))
        total += len(p)
    checks[f"entropy bounds on {total} simplex rows"] = ok and total >= 100000

    uniform = Posteriorgram(np.full((1, 50), 1 / 50), tuple(map(str, range(50))))
    checks["uniform 50-class entropy 5.64 bits"] = abs(entropy(uniform).values[0] - 5.64) <= 0.005
    report(capsys, 3, "measure identities", checks)


# -- 4 ------------------------------------------------------------------------

def random_track(rng, kind="entropy"):
    T = int(rng.integers(4, 60))
    v = np.round(rng.normal(0, 1, T), 1)  # rounding creates plateaus
    lo, hi = {"entropy": (0, T - 1), "d2": (1, T - 2), "ma": (1, T - 3)}[kind]
    return MeasureTrack(v, lo, hi, kind)


def test_criterion_4_decision_semantics(capsys):
    rng = np.random.default_rng(4)
    one_per_region = monotone = limit_equal = True
    for _ in range(200):
        t = random_track(rng)
        th = float(rng.normal(0, 1))
        regions = regions_above(t, th)
        peaks = pick_peak_per_region(t, regions)
        one_per_region &= len(peaks) == len(regions) and all(
            r.start <= n <= r.end and t.values[n] == t.values[r.start:r.end + 1].max()
            for n, r in zip(peaks, regions))
        one_per_region &= len(star_decision(t, th)) <= len(regions)
        covered = {n for r in regions for n in range(r.start, r.end + 1)}
        higher = regions_above(t, th + abs(float(rng.normal(0, 1))))
        monotone &= all(n in covered for r in higher for n in range(r.start, r.end + 1))
        for second in ("d2", "ma"):
            s = random_track(rng, second)
            e = MeasureTrack(np.abs(rng.normal(0, 1, len(s))), 0, len(s) - 1, "entropy")
            gate = float(e.values.min()) - 1.0
            aligned = second == "ma"
            limit_equal &= (combined_decision(e, s, gate, th, aligned)
                            == star_decision(s, th, aligned))
    # two close boundaries whose entropy bumps merge into one region: one candidate survives
    merged = MeasureTrack(np.array([0, 0.5, 3, 2, 2.5, 0.5, 0]), 0, 6, "entropy")
    checks = {
        "one candidate per region, at its maximum": one_per_region,
        "regions shrink as th rises": monotone,
        "open entropy gate equals single measure (200 tracks)": limit_equal,
        "merged double peak yields one candidate": (len(regions_above(merged, 1.0)) == 1
                                                    and len(star_decision(merged, 1.0)) == 1),
    }
    report(capsys, 4, "decision semantics", checks)


# -- 5 ------------------------------------------------------------------------

def test_criterion_5_tdnn(capsys):
    rng = np.random.default_rng(5)
    m = tdnn_init(TdnnConfig(4, 3, 1), seed=5)
    for p in m.params():
        p += 0.3 * rng.standard_normal(p.shape)
    data = [(rng.standard_normal((3, 4)), rng.random(3)) for _ in range(2)]
    _, grads = loss_and_grads(m, data)
    worst = 0.0
    h = 1e-5
    for p, g in zip(m.params(), grads):
        for i in np.ndindex(p.shape):
            old = p[i]
            p[i] = old + h
            up = loss_and_grads(m, data)[0]
            p[i] = old - h
            down = loss_and_grads(m, data)[0]
            p[i] = old
            num = (up - down) / (2 * h)
            worst = max(worst, abs(num - g[i]) / max(abs(num) + abs(g[i]), 1e-8))

    spec = SynthSpec(**REALISTIC)
    train = synth_corpus(spec, 200, seed=50, target_density=STANDARD_DENSITY)
    test = synth_corpus(spec, 50, seed=51, target_density=STANDARD_DENSITY)
    mtr = [compute_measures(u.posteriorgram) for u in train]
    mte = [compute_measures(u.posteriorgram) for u in test]
    model = fit_normalization(tdnn_init(seed=0), mtr)
    model, _ = tdnn_train(model, make_dataset(train, mtr),
                          TrainConfig(epochs=40, rate=0.05, batch_utterances=1))
    held = make_dataset(test, mte)
    held_mse = mse(model, held)
    target_var = float(np.concatenate([t for _, t in held]).var())

    # threshold chosen on the training corpus, scored on the held-out one
    stats = {"nn": nn_stats(model, mtr)}
    train_corpus = list(zip([with_nn(model, ms) for ms in mtr], [u.reference for u in train]))
    th = best_row(threshold_sweep("nn", train_corpus, stats)).th
    refs = [u.reference for u in test]
    dets = [detect("nn", with_nn(model, ms), stats, th=th) for ms in mte]
    rep = evaluate_corpus(zip(dets, refs), 1)
    chance_crit, chance = matched_chance_criterion(refs, rep.n_detected)
    with capsys.disabled():
        print(f"\n  grad rel err={worst:.2e} held-out MSE={held_mse:.4f} "
              f"target var={target_var:.4f} nn P={rep.precision:.1f} R={rep.recall:.1f} "
              f"crit={rep.criterion:.1f} chance crit={chance_crit:.1f}")
    checks = {
        "gradients match finite differences (1e-4)": worst < 1e-4,
        "held-out MSE below target variance": held_mse < target_var,
        "nn criterion beats matched-count chance": rep.criterion < chance_crit,
    }
    report(capsys, 5, "TDNN correctness and usefulness", checks)


# -- 6 ------------------------------------------------------------------------

def test_criterion_6_end_to_end_ordering(capsys, standard_corpus, standard_measures):
    ms, stats = standard_measures
    refs = [u.reference for u in standard_corpus]
    corpus = list(zip(ms, refs))

    train = synth_corpus(SynthSpec(seed=1), 60, seed=61, target_density=STANDARD_DENSITY)
    mtr = [compute_measures(u.posteriorgram) for u in train]
    model = fit_normalization(tdnn_init(seed=0), mtr)
    model, _ = tdnn_train(model, make_dataset(train, mtr),
                          TrainConfig(epochs=30, rate=0.05, batch_utterances=1))
    nn_corpus = list(zip([with_nn(model, x) for x in ms], refs))
    nn_stat = {"nn": nn_stats(model, ms)}

    results = {}
    for m in ("e", "d2", "ma"):
        results[m] = best_row(threshold_sweep(m, corpus, stats)).report
    results["nn"] = best_row(threshold_sweep("nn", nn_corpus, nn_stat)).report
    for second in ("d2", "ma"):
        grid = grid_search_combined(second, corpus, stats)
        results[f"e+{second}"] = grid.best.report

    checks = {}
    chance_100 = monte_carlo_chance(refs, 1.0, 50, 1, 0).precision
    lines = []
    for m, rep in results.items():
        crit_chance, _ = matched_chance_criterion(refs, rep.n_detected)
        checks[f"{m} beats matched-count chance"] = rep.criterion < crit_chance
        # chance scored the conventional way, with its recall taken as 100%
        checks[f"{m} beats chance at 100% recall"] = rep.criterion < 100.0 - chance_100
        lines.append(f"{m}: P={rep.precision:.1f} R={rep.recall:.1f} crit={rep.criterion:.1f} "
                     f"(chance {crit_chance:.1f})")

    cold = synth_corpus(SynthSpec(temperature=0.01, noise_level=0.0), 20, seed=62)
    cold_rep = evaluate_corpus(((detect_baseline(u.posteriorgram), u.reference) for u in cold), 1)
    checks["baseline recall >= 95% when cold and noise-free"] = cold_rep.recall >= 95.0

    noisy = synth_corpus(SynthSpec(**REALISTIC), 30, seed=63, target_density=STANDARD_DENSITY)
    pairs = [(detect_baseline(u.posteriorgram), u.reference) for u in noisy]
    dense = evaluate_corpus(pairs, 1)
    strict = evaluate_corpus(pairs, 1, matching="dp")
    checks["dense detector reaches recall > 100% and is flagged"] = (
        dense.recall > 100.0 and dense.recall_inflated)
    checks["one-to-one matching removes the inflation"] = strict.recall <= 100.0
    with capsys.disabled():
        print("\n  " + "\n  ".join(lines))
        print(f"  cold baseline R={cold_rep.recall:.1f}; noisy baseline R={dense.recall:.1f} "
              f"(one-to-one {strict.recall:.1f})")
    report(capsys, 6, "end-to-end ordering on synthetic data", checks)


# -- 7 ------------------------------------------------------------------------

def test_criterion_7_dp_matcher_oracle(capsys):
    rng = np.random.default_rng(7)
    agree = 0
    n = 3000
    for _ in range(n):
        T = int(rng.integers(2, 25))
        nd, nr = (int(x) for x in rng.integers(0, min(6, T - 1) + 1, 2))
        det = sorted(rng.choice(T - 1, nd, replace=False).tolist())
        ref = sorted(rng.choice(T - 1, nr, replace=False).tolist())
        tol = int(rng.integers(0, 4))
        m = dp_match(BoundarySet(tuple(det), T), BoundarySet(tuple(ref), T), tol)
        agree += m.n_matched == brute_force_matching(det, ref, tol)
    report(capsys, 7, "DP matcher equals brute-force maximum matching",
           {f"{agree}/{n} random instances agree": agree == n})
