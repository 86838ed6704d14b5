"""Command line front end: ``entseg <subcommand> [options]``.

Subcommands: synth, measure, detect, evaluate, chance, optimize, train-nn,
pipeline. Plot-ready outputs are written as CSV.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import chance as chance_mod
from .core import GlobalStats
from .detect import COMBINED_METHODS, METHODS, detect
from .evaluation import criterion, evaluate_corpus
from .io import (list_files, load_boundaries, load_corpus, load_labels, round_half_up,
                 write_boundaries, write_report)
from .measures import compute_measures, corpus_stats
from .optimize import PackedCorpus, best_row, grid_search_combined, threshold_sweep, value_range
from .synth import MANIFEST_NAME, SynthSpec, generate_corpus
from .tdnn import (TdnnConfig, TrainConfig, fit_normalization, load_model, make_dataset, mse,
                   save_model, tdnn_init, tdnn_train, with_nn)


class CliError(Exception):
    pass


# -- helpers ----------------------------------------------------------------

def _pmap(fn, items, jobs: int) -> list:
    """Ordered map, optionally over a process pool."""
    items = list(items)
    if jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(jobs) as ex:
            return list(ex.map(fn, items))
    return [fn(x) for x in items]


def _measures_of(utt):
    return compute_measures(utt.posteriorgram)


def tolerance_frames(text: str, frame_shift_ms: float) -> int:
    """Parse '10ms', '20ms' or a bare frame count."""
    text = str(text).strip()
    if text.endswith("ms"):
        ms = float(text[:-2])
        frames = round_half_up(ms / frame_shift_ms)
        if frames < 0 or abs(frames * frame_shift_ms - ms) > 1e-9:
            raise CliError(f"tolerance {text} is not a whole number of frames")
        return frames
    return int(text)


def _stats_to_json(stats: dict) -> dict:
    return {k: {"mean": v.mean, "std": v.std} for k, v in stats.items()}


def _stats_from_json(obj: dict) -> dict:
    return {k: GlobalStats(float(v["mean"]), float(v["std"])) for k, v in obj.items()}


def _load_corpus(path):
    if os.path.isdir(path):
        path = os.path.join(path, MANIFEST_NAME)
    return load_corpus(path)


def _fmt(x, nd=1) -> str:
    return "-" if x is None else f"{x:.{nd}f}"


def _report_row(rep) -> list:
    return [rep.n_correct, rep.n_detected, rep.n_reference, rep.precision, rep.recall,
            rep.criterion]


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow(["none" if v is None else v for v in row])


# -- subcommands ------------------------------------------------------------

def cmd_synth(args) -> int:
    spec = SynthSpec(
        num_classes=args.num_classes, min_segments=args.min_segments,
        max_segments=args.max_segments, min_duration=args.min_duration,
        max_duration=args.max_duration, transition_width=args.transition_width,
        temperature=args.temperature, temperature_jitter=args.temperature_jitter,
        noise_level=args.noise_level, logit_gap=args.logit_gap,
        confusion=args.confusion, misalignment=args.misalignment,
        frame_shift_ms=args.frame_shift, seed=args.seed)
    manifest = generate_corpus(spec, args.num_utterances, args.out, args.seed,
                               args.target_density)
    print(f"wrote {len(manifest['utterances'])} utterances to {args.out} "
          f"(B/M = {_fmt(manifest['boundary_density'], 4)})")
    return 0


def cmd_measure(args) -> int:
    utts = _load_corpus(args.corpus)
    measures = _pmap(_measures_of, utts, args.jobs)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        for utt, ms in zip(utts, measures):
            rows = zip(range(utt.posteriorgram.num_frames), ms["entropy"].values,
                       ms["d1"].values, ms["d2"].values, ms["ma"].values)
            _write_csv(os.path.join(args.out, utt.utt_id + ".measures.csv"),
                       ["frame", "entropy", "d1", "d2", "ma"], rows)
    if args.stats_out:
        if args.per_utterance_stats:
            obj = {u.utt_id: _stats_to_json(corpus_stats([ms])) for u, ms in zip(utts, measures)}
        else:
            obj = _stats_to_json(corpus_stats(measures))
        with open(args.stats_out, "w", encoding="utf-8") as fh:
            json.dump(obj, fh, indent=1, sort_keys=True)
            fh.write("\n")
    return 0


def cmd_detect(args) -> int:
    utts = _load_corpus(args.corpus)
    measures = _pmap(_measures_of, utts, args.jobs)
    if args.method == "nn":
        if not args.model:
            raise CliError("--method nn needs --model")
        model = load_model(args.model)
        measures = [with_nn(model, ms) for ms in measures]
    methods = ("e", "d2", "ma", "nn") if args.method == "nn" else ("e", "d2", "ma")
    if args.stats:
        with open(args.stats, encoding="utf-8") as fh:
            stats = _stats_from_json(json.load(fh))
    else:
        stats = corpus_stats(measures, methods)
    th = args.th2 if args.method in COMBINED_METHODS and args.th2 is not None else args.th
    os.makedirs(args.out, exist_ok=True)
    for utt, ms in zip(utts, measures):
        st = corpus_stats([ms], methods) if args.per_utterance_stats else stats
        bs = detect(args.method, ms, st, th=th, th1=args.th1,
                    frame_shift_ms=utt.posteriorgram.frame_shift_ms,
                    posteriorgram=utt.posteriorgram)
        write_boundaries(bs, os.path.join(args.out, utt.utt_id + ".bnd"))
    print(f"wrote {len(utts)} boundary files to {args.out}")
    return 0


def _stem(path: str) -> str:
    return os.path.basename(path).split(".")[0]


def cmd_evaluate(args) -> int:
    tol = tolerance_frames(args.tol, args.frame_shift)
    if args.corpus:
        refs = {u.utt_id: u.reference for u in _load_corpus(args.corpus)}
    elif args.reference:
        refs = {_stem(p): load_labels(p, args.frame_shift) for p in list_files(args.reference, ".lab")}
    else:
        raise CliError("need --reference or --corpus")
    dets = {_stem(p): p for p in list_files(args.detected, ".bnd")}
    missing = sorted(set(refs) - set(dets))
    if missing:
        raise CliError(f"no detections for {len(missing)} utterance(s), e.g. {missing[0]}")
    pairs = []
    for uid in sorted(refs):
        ref = refs[uid]
        pairs.append((load_boundaries(dets[uid], ref.num_frames, ref.frame_shift_ms), ref))
    rep = evaluate_corpus(pairs, tol, args.matching)
    if args.out:
        write_report(rep, args.out)
    flag = "  (recall > 100%: several detections near one reference)" if rep.recall_inflated else ""
    print(f"C={rep.n_correct} D={rep.n_detected} T={rep.n_reference} "
          f"P={_fmt(rep.precision, 2)} R={_fmt(rep.recall, 2)} crit={_fmt(rep.criterion, 2)}{flag}")
    return 0


def cmd_chance(args) -> int:
    tol = tolerance_frames(args.tol, args.frame_shift)
    if args.corpus:
        refs = [u.reference for u in _load_corpus(args.corpus)]
    elif args.reference:
        refs = [load_labels(p, args.frame_shift) for p in list_files(args.reference, ".lab")]
    else:
        raise CliError("need --reference or --corpus")
    density = chance_mod.corpus_density(refs)
    analytic = chance_mod.analytic_chance(density, 1.0, tol)
    rows = []
    for r in args.ratio:
        res = chance_mod.monte_carlo_chance(refs, r, args.reps, tol, args.seed)
        crit = None if res.precision is None else criterion(res.precision, res.recall)
        rows.append([r, res.precision, res.recall, crit])
    header = ["ratio", "precision", "recall", "criterion"]
    if args.out:
        _write_csv(args.out, header, rows)
    print(f"# B/M = {density:.4f}  analytic chance = {analytic:.2f}%  "
          f"rng = {chance_mod.RNG_ALGORITHM} seed = {args.seed}")
    print(",".join(header))
    for row in rows:
        print(",".join(_fmt(v, 3) for v in row))
    return 0


def cmd_optimize(args) -> int:
    tol = tolerance_frames(args.tol, args.frame_shift)
    utts = _load_corpus(args.corpus)
    measures = _pmap(_measures_of, utts, args.jobs)
    second = args.method.split("+")[1]
    stats = corpus_stats(measures, ("e", second))
    corpus = list(zip(measures, [u.reference for u in utts]))
    res = grid_search_combined(
        second, corpus, stats,
        value_range(args.th1_range[0], args.th1_range[1], args.step),
        value_range(args.th2_range[0], args.th2_range[1], args.step), tol, jobs=args.jobs)
    header = ["th1", "th2", "C", "D", "T", "precision", "recall", "criterion"]
    _write_csv(args.out, header, ([c.th1, c.th2] + _report_row(c.report) for c in res.cells))
    if args.curve_out:
        _write_csv(args.curve_out, header,
                   ([c.th1, c.th2] + _report_row(c.report) for c in res.best_th1_per_th2))
    if res.best is None:
        print("no cell produced detections")
        return 0
    b = res.best
    print(f"best th1={b.th1:+.2f} th2={b.th2:+.2f} P={b.report.precision:.2f} "
          f"R={b.report.recall:.2f} crit={b.report.criterion:.2f}")
    return 0


def _train_config(args) -> TrainConfig:
    return TrainConfig(epochs=args.epochs, rate=args.rate, momentum=args.momentum,
                       batch_utterances=args.batch_utterances or None, seed=args.seed)


def cmd_train_nn(args) -> int:
    train = _load_corpus(args.train_list)
    mtr = _pmap(_measures_of, train, args.jobs)
    model = fit_normalization(tdnn_init(TdnnConfig(n_hidden=args.hidden), args.seed), mtr)
    model, losses = tdnn_train(model, make_dataset(train, mtr), _train_config(args))
    save_model(model, args.model_out)
    msg = f"final training MSE {losses[-1]:.5f}"
    if args.val_list:
        val = _load_corpus(args.val_list)
        dval = make_dataset(val, _pmap(_measures_of, val, args.jobs))
        tv = np.concatenate([t for _, t in dval])
        msg += f"; validation MSE {mse(model, dval):.5f} (target variance {tv.var():.5f})"
    if args.loss_out:
        _write_csv(args.loss_out, ["epoch", "mse"], enumerate(losses))
    print(msg)
    return 0


# -- pipeline ---------------------------------------------------------------

def run_pipeline(out_dir, seed: int = 0, num_utterances: int = 80, train_utterances: int = 120,
                 target_density: float = 0.114, epochs: int = 60, rate: float = 0.05,
                 noise_level: float = 1.5, frame_shift_ms: float = 10.0, jobs: int = 1,
                 chance_reps: int = 50, confusion: float = 0.8,
                 misalignment: float = 0.3) -> list:
    """Synthesise, measure, detect with every method, evaluate and summarise.

    Thresholds are tuned on the evaluation corpus at 10 ms and the same
    configuration is re-scored at 20 ms. Returns the summary rows.
    """
    os.makedirs(out_dir, exist_ok=True)
    spec = SynthSpec(noise_level=noise_level, confusion=confusion, misalignment=misalignment,
                     frame_shift_ms=frame_shift_ms, seed=seed)
    generate_corpus(spec, train_utterances, os.path.join(out_dir, "train"), seed * 2 + 1,
                    target_density)
    generate_corpus(spec, num_utterances, os.path.join(out_dir, "test"), seed * 2,
                    target_density)
    train = _load_corpus(os.path.join(out_dir, "train"))
    test = _load_corpus(os.path.join(out_dir, "test"))
    mtr = _pmap(_measures_of, train, jobs)
    mte = _pmap(_measures_of, test, jobs)
    refs = [u.reference for u in test]

    model = fit_normalization(tdnn_init(seed=seed), mtr)
    model, losses = tdnn_train(model, make_dataset(train, mtr),
                               TrainConfig(epochs=epochs, rate=rate, batch_utterances=1, seed=seed))
    save_model(model, os.path.join(out_dir, "tdnn.model"))
    _write_csv(os.path.join(out_dir, "tdnn_loss.csv"), ["epoch", "mse"], enumerate(losses))
    mte = [with_nn(model, ms) for ms in mte]
    stats = corpus_stats(mte, ("e", "d2", "ma", "nn"))
    with open(os.path.join(out_dir, "stats.json"), "w", encoding="utf-8") as fh:
        json.dump(_stats_to_json(stats), fh, indent=1, sort_keys=True)
        fh.write("\n")

    corpus = list(zip(mte, refs))
    packed = PackedCorpus(corpus, ("e", "d2", "ma", "nn"))
    header = ["th", "C", "D", "T", "precision", "recall", "criterion"]
    chosen = {}
    for m in ("e", "d2", "ma", "nn"):
        rows = threshold_sweep(m, corpus, stats, packed=packed)
        _write_csv(os.path.join(out_dir, f"sweep_{m}.csv"), header,
                   ([r.th] + _report_row(r.report) for r in rows))
        b = best_row(rows)
        chosen[m] = (None, b.th if b else None)
    gheader = ["th1", "th2", "C", "D", "T", "precision", "recall", "criterion"]
    for m in COMBINED_METHODS:
        second = m.split("+")[1]
        res = grid_search_combined(second, corpus, stats, jobs=jobs)
        _write_csv(os.path.join(out_dir, f"surface_{second}.csv"), gheader,
                   ([c.th1, c.th2] + _report_row(c.report) for c in res.cells))
        _write_csv(os.path.join(out_dir, f"best_th1_{second}.csv"), gheader,
                   ([c.th1, c.th2] + _report_row(c.report) for c in res.best_th1_per_th2))
        chosen[m] = (res.best.th1, res.best.th2) if res.best else (None, None)

    ratios = value_range(0.05, 2.5, 0.05)
    cres = chance_mod.chance_sweep(refs, ratios, chance_reps, 1, seed)
    _write_csv(os.path.join(out_dir, "chance.csv"), ["ratio", "precision", "recall"],
               ([c.ratio, c.precision, c.recall] for c in cres))

    summary = []
    at_one = [chance_mod.monte_carlo_chance(refs, 1.0, chance_reps, tol, seed) for tol in (1, 2)]
    summary.append(["chance (D=T)", None, None] + [
        v for c in at_one for v in (c.precision, c.recall, criterion(c.precision, c.recall))])
    det_dir = os.path.join(out_dir, "detections")
    for m in METHODS:
        th1, th = chosen.get(m, (None, None))
        if m != "baseline" and th is None:
            summary.append([m, th1, th] + [None] * 6)
            continue
        dets = [detect(m, ms, stats, th=th, th1=th1, frame_shift_ms=frame_shift_ms,
                       posteriorgram=u.posteriorgram) for u, ms in zip(test, mte)]
        os.makedirs(os.path.join(det_dir, m), exist_ok=True)
        for u, bs in zip(test, dets):
            write_boundaries(bs, os.path.join(det_dir, m, u.utt_id + ".bnd"))
        reps = [evaluate_corpus(zip(dets, refs), tol) for tol in (1, 2)]
        summary.append([m, th1, th] + [v for r in reps for v in (r.precision, r.recall, r.criterion)])
    _write_csv(os.path.join(out_dir, "summary.csv"),
               ["condition", "th1", "th", "P10", "R10", "crit10", "P20", "R20", "crit20"], summary)
    return summary


def format_summary(rows) -> str:
    lines = [f"{'condition':<16}{'th1':>6}{'th':>6}   {'precision %':>13}{'recall %':>15}"
             f"{'criterion':>15}"]
    for name, th1, th, p1, r1, c1, p2, r2, c2 in rows:
        flag = "**" if (r1 is not None and r1 > 100) or (r2 is not None and r2 > 100) else ""
        lines.append(
            f"{name:<16}{_fmt(th1):>6}{_fmt(th):>6}   "
            f"{_fmt(p1):>6} ({_fmt(p2):>5}){_fmt(r1):>8} ({_fmt(r2):>5}){flag:<2}"
            f"{_fmt(c1):>6} ({_fmt(c2):>5})")
    return "\n".join(lines)


def cmd_pipeline(args) -> int:
    rows = run_pipeline(args.out, args.seed, args.num_utterances, args.train_utterances,
                        args.target_density, args.epochs, args.rate, args.noise_level,
                        args.frame_shift, args.jobs, args.reps, args.confusion,
                        args.misalignment)
    text = format_summary(rows)
    with open(os.path.join(args.out, "summary.txt"), "w", encoding="utf-8") as fh:
        fh.write(text + "\n")
    print(text)
    return 0


# -- argument parsing -------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="entseg", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, corpus=True):
        sp.add_argument("--frame-shift", type=float, default=10.0, help="frame shift in ms")
        sp.add_argument("--jobs", type=int, default=1)
        if corpus:
            sp.add_argument("--corpus", required=True,
                            help="corpus manifest (or directory containing manifest.json)")

    d = SynthSpec()
    sp = sub.add_parser("synth", help="generate a synthetic corpus")
    common(sp, corpus=False)
    sp.add_argument("--out", required=True)
    sp.add_argument("--num-utterances", type=int, default=100)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--target-density", type=float, default=None,
                    help="requested boundaries per gap, e.g. 0.114")
    sp.add_argument("--num-classes", type=int, default=d.num_classes)
    sp.add_argument("--min-segments", type=int, default=d.min_segments)
    sp.add_argument("--max-segments", type=int, default=d.max_segments)
    sp.add_argument("--min-duration", type=int, default=d.min_duration)
    sp.add_argument("--max-duration", type=int, default=d.max_duration)
    sp.add_argument("--transition-width", type=int, default=d.transition_width)
    sp.add_argument("--temperature", type=float, default=d.temperature)
    sp.add_argument("--temperature-jitter", type=float, default=d.temperature_jitter)
    sp.add_argument("--noise-level", type=float, default=d.noise_level)
    sp.add_argument("--logit-gap", type=float, default=d.logit_gap)
    sp.add_argument("--confusion", type=float, default=d.confusion,
                    help="strength of a competing class per segment, 0..1")
    sp.add_argument("--misalignment", type=float, default=d.misalignment,
                    help="probability a transition is displaced by one frame")
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("measure", help="dump measure tracks and corpus statistics")
    common(sp)
    sp.add_argument("--out", help="directory for per-utterance measure CSVs")
    sp.add_argument("--stats-out", help="JSON file for global statistics")
    sp.add_argument("--per-utterance-stats", action="store_true")
    sp.set_defaults(func=cmd_measure)

    sp = sub.add_parser("detect", help="detect boundaries")
    common(sp)
    sp.add_argument("--method", choices=METHODS, required=True)
    sp.add_argument("--th", type=float, default=0.0, help="relative threshold")
    sp.add_argument("--th1", type=float, default=0.0, help="relative entropy gate (combined)")
    sp.add_argument("--th2", type=float, default=None, help="relative threshold on second measure")
    sp.add_argument("--stats", help="statistics JSON from 'measure --stats-out'")
    sp.add_argument("--per-utterance-stats", action="store_true")
    sp.add_argument("--model", help="TDNN model file for --method nn")
    sp.add_argument("--out", required=True, help="output directory for .bnd files")
    sp.set_defaults(func=cmd_detect)

    sp = sub.add_parser("evaluate", help="score detections")
    common(sp, corpus=False)
    sp.add_argument("--detected", required=True, help="directory or list of .bnd files")
    sp.add_argument("--reference", help="directory or list of .lab files")
    sp.add_argument("--corpus", help="corpus manifest providing the references")
    sp.add_argument("--tol", default="10ms", help="10ms, 20ms or a frame count")
    sp.add_argument("--matching", choices=("window", "dp"), default="window")
    sp.add_argument("--out", help="report file")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("chance", help="Monte Carlo level of chance")
    common(sp, corpus=False)
    sp.add_argument("--reference", help="directory or list of .lab files")
    sp.add_argument("--corpus", help="corpus manifest providing the references")
    sp.add_argument("--ratio", type=float, nargs="+", default=[1.0])
    sp.add_argument("--reps", type=int, default=50)
    sp.add_argument("--tol", default="10ms")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", help="CSV output")
    sp.set_defaults(func=cmd_chance)

    sp = sub.add_parser("optimize", help="grid search th1/th2 for a combined method")
    common(sp)
    sp.add_argument("--method", choices=COMBINED_METHODS, required=True)
    sp.add_argument("--th1-range", type=float, nargs=2, default=(-2.0, 2.0))
    sp.add_argument("--th2-range", type=float, nargs=2, default=(-2.0, 2.0))
    sp.add_argument("--step", type=float, default=0.1)
    sp.add_argument("--tol", default="10ms")
    sp.add_argument("--out", required=True, help="surface CSV")
    sp.add_argument("--curve-out", help="best-th1-per-th2 CSV")
    sp.set_defaults(func=cmd_optimize)

    t = TrainConfig()
    sp = sub.add_parser("train-nn", help="train the proximity TDNN")
    common(sp, corpus=False)
    sp.add_argument("--train-list", required=True, help="training corpus manifest")
    sp.add_argument("--val-list", help="validation corpus manifest")
    sp.add_argument("--epochs", type=int, default=t.epochs)
    sp.add_argument("--rate", type=float, default=t.rate)
    sp.add_argument("--momentum", type=float, default=t.momentum)
    sp.add_argument("--batch-utterances", type=int, default=t.batch_utterances,
                    help="utterances per update (default: all)")
    sp.add_argument("--hidden", type=int, default=TdnnConfig().n_hidden)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--model-out", required=True)
    sp.add_argument("--loss-out", help="per-epoch loss CSV")
    sp.set_defaults(func=cmd_train_nn)

    sp = sub.add_parser("pipeline", help="synthetic end-to-end run with a summary table")
    common(sp, corpus=False)
    sp.add_argument("--out", required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--num-utterances", type=int, default=80)
    sp.add_argument("--train-utterances", type=int, default=120)
    sp.add_argument("--target-density", type=float, default=0.114)
    sp.add_argument("--epochs", type=int, default=60)
    sp.add_argument("--rate", type=float, default=0.05)
    sp.add_argument("--noise-level", type=float, default=1.5)
    sp.add_argument("--confusion", type=float, default=0.8)
    sp.add_argument("--misalignment", type=float, default=0.3)
    sp.add_argument("--reps", type=int, default=50)
    sp.set_defaults(func=cmd_pipeline)
    return p


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CliError, ValueError, OSError, RuntimeError) as exc:
        print(f"entseg {args.command}: error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
