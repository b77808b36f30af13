"""Command-line surface.

Subcommands:

- ``sweep``: run the Monte Carlo experiment from a config file; writes the
  per-trial CSV, a JSON summary, and report figures.
- ``calibrate``: compute thresholds per method per alpha from a score
  dataset (plus optional classifier / embedding files).
- ``diagnose``: multiaccuracy and multicalibration of a table classifier
  against a labeled sample.
- ``theorem1``: reproduce the adversarial imperfect-classifier coverage
  degradation.

Exit code 0 iff no error; errors go to stderr, data to stdout.
"""

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from shiftcal import datafiles
from shiftcal.classifiers import (
    TableClassifier,
    multiaccuracy_error,
    multicalibration_error,
)
from shiftcal.config import ConfigError, load_config
from shiftcal.conformal import (
    FlatCalibrationSet,
    algorithm3_thresholds_batch,
    risk_control_threshold,
    similarity_risk_thresholds_batch,
)
from shiftcal.quantile import (
    GroupedCalibrationSet,
    group_weighted_threshold,
    max_threshold,
    standard_cp_threshold,
)
from shiftcal.simulation import (
    COVERAGE_METHODS,
    RISK_METHODS,
    aggregate,
    run_experiment,
    theorem1_scenario,
)


class CliError(Exception):
    pass


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, float) and math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".6g") if isinstance(x, float) else str(x)


def cmd_sweep(args):
    config = load_config(args.config)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    results = run_experiment(config)
    csv_path = out_dir / "results.csv"
    datafiles.write_results_csv(csv_path, results)
    report = aggregate(results)
    payload = {
        "std_convention": "population (divide by number of environments)",
        "summaries": [
            {
                "method": s.method,
                "alpha": s.alpha,
                "metric": s.metric,
                "mean": s.mean,
                "std": s.std,
                "n_environments": s.n_environments,
                "n_splits": s.n_splits,
            }
            for s in report.summaries
        ],
    }
    datafiles.write_json_report(out_dir / "summary.json", payload)
    print(f"wrote {len(results)} trial rows to {csv_path}")
    for s in report.summaries:
        print(
            f"{s.method:>14} alpha={s.alpha:g} {s.metric}: "
            f"{s.mean:.4f} +/- {s.std:.4f} "
            f"({s.n_environments} environments x {s.n_splits} splits)"
        )
    if not args.no_figures:
        from shiftcal import report as figures

        for p in figures.render_figures(results, out_dir):
            print(f"wrote figure {p}")
    return 0


def _load_classifier(path):
    if str(path).endswith(".json"):
        return TableClassifier.from_json(path)
    return TableClassifier.from_csv(path)


def _oriented(threshold, flip):
    # Thresholds are computed on negated scores when lower = less conforming;
    # mapping back flips the sign and the membership inequality.
    return -threshold if flip else threshold


def cmd_calibrate(args):
    config = load_config(args.config)
    ids, scores, domains = datafiles.load_scores_csv(args.scores)
    flip = config.score_direction == "lower"
    work = -scores if flip else scores
    classifier = _load_classifier(args.classifier) if args.classifier else None

    grouped = None
    if domains is not None:
        n_domains = int(domains.max()) + 1
        grouped = GroupedCalibrationSet(
            [work[domains == k] for k in range(n_domains)]
        )

    flat = None
    if args.embeddings:
        emb_ids, emb = datafiles.load_embeddings_csv(args.embeddings)
        lookup = dict(zip(emb_ids, emb))
        missing = [i for i in ids if i not in lookup]
        if missing:
            raise CliError(f"embeddings file is missing id {missing[0]!r}")
        flat = FlatCalibrationSet(work, np.array([lookup[i] for i in ids]))

    test_emb = None
    if args.test_embeddings:
        test_ids, test_emb_arr = datafiles.load_embeddings_csv(args.test_embeddings)
        test_emb = (test_ids, test_emb_arr)

    thresholds = {}
    for method in config.methods:
        if method in COVERAGE_METHODS:
            per_alpha = {}
            for alpha in config.alphas:
                per_alpha[f"{alpha:g}"] = _calibrate_one(
                    method, config, work, grouped, flat, test_emb, classifier, alpha, flip
                )
            thresholds[method] = per_alpha
        elif method in RISK_METHODS:
            per_r = {}
            for r in config.target_recalls:
                if method == "risk_uniform":
                    q = risk_control_threshold(work, r)
                    per_r[f"{r:g}"] = _oriented(q, flip)
                else:
                    if flat is None or test_emb is None:
                        raise CliError(
                            "method 'risk_weighted' needs --embeddings and "
                            "--test-embeddings"
                        )
                    qs = similarity_risk_thresholds_batch(
                        flat, test_emb[1], r, beta=config.beta,
                        sigma=config.sigma, similarity=config.similarity,
                    )
                    per_r[f"{r:g}"] = {
                        i: _oriented(float(q), flip) for i, q in zip(test_emb[0], qs)
                    }
            thresholds[method] = per_r

    for method, per_level in thresholds.items():
        label = "r" if method in RISK_METHODS else "alpha"
        for level, value in per_level.items():
            if isinstance(value, dict):
                shown = f"[{len(value)} per-id thresholds]"
            else:
                shown = _fmt(value)
            print(f"{method:>14} {label}={level} q_hat={shown}")

    payload = {
        "score_direction": config.score_direction,
        "n_calibration": len(ids),
        "thresholds": _jsonable(thresholds),
    }
    datafiles.write_json_report(args.out, payload)
    print(f"wrote report {args.out}")
    return 0


def _calibrate_one(method, config, work, grouped, flat, test_emb, classifier,
                   alpha, flip):
    if method == "unweighted":
        return _oriented(standard_cp_threshold(work, alpha).threshold, flip)
    if method in ("max", "a1", "a2") and grouped is None:
        raise CliError(f"method {method!r} needs a 'domain' column in the scores file")
    if method == "max":
        return _oriented(max_threshold(grouped, alpha).threshold, flip)
    if method in ("a1", "a2"):
        if classifier is None:
            raise CliError(f"method {method!r} needs --classifier")
        if classifier.n_domains != grouped.n_domains:
            raise CliError(
                f"classifier has {classifier.n_domains} domains, scores have "
                f"{grouped.n_domains}"
            )
        if method == "a2":
            lam = np.mean(list(classifier.table.values()), axis=0)
            q = group_weighted_threshold(grouped, lam / lam.sum(), alpha).threshold
            return _oriented(q, flip)
        return {
            row_id: _oriented(
                group_weighted_threshold(grouped, lam, alpha).threshold, flip
            )
            for row_id, lam in classifier.table.items()
        }
    if method == "a3":
        if flat is None or test_emb is None:
            raise CliError("method 'a3' needs --embeddings and --test-embeddings")
        qs = algorithm3_thresholds_batch(
            flat, test_emb[1], alpha, beta=config.beta, sigma=config.sigma,
            similarity=config.similarity,
        )
        return {i: _oriented(float(q), flip) for i, q in zip(test_emb[0], qs)}
    raise CliError(f"unknown method {method!r}")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, float):
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
        return obj
    return obj


def cmd_diagnose(args):
    classifier = _load_classifier(args.classifier)
    ids, domains, envs = datafiles.load_sample_csv(args.sample)
    missing = [i for i in ids if i not in classifier.table]
    if missing:
        raise CliError(f"sample id {missing[0]!r} not found in classifier file")
    by_env = {}
    for i, d, e in zip(ids, domains, envs):
        by_env.setdefault(e, ([], []))
        by_env[e][0].append(i)
        by_env[e][1].append(d)
    for env in sorted(by_env):
        env_ids, env_doms = by_env[env]
        env_doms = np.array(env_doms)
        ma = multiaccuracy_error(classifier, env_ids, env_doms, classifier.n_domains)
        mc = multicalibration_error(
            classifier, env_ids, env_doms, classifier.n_domains, bins=args.bins
        )
        print(f"environment {env}: multiaccuracy={ma:.6f} "
              f"multicalibration(bins={args.bins})={mc:.6f} n={len(env_ids)}")
    return 0


def cmd_theorem1(args):
    res = theorem1_scenario(
        args.gamma, args.alpha, n_cal_per_domain=args.n_cal,
        n_test=args.n_test, seed=args.seed,
    )
    print(f"gamma={res.gamma:g} alpha={res.alpha:g}")
    print(f"classifier accuracy: domain1={res.domain1_accuracy:.4f} "
          f"domain2={res.domain2_accuracy:.4f}")
    print(f"coverage: overall={res.coverage:.4f} domain1={res.domain1_coverage:.4f} "
          f"domain2={res.domain2_coverage:.4f}")
    print(f"domain-2 conditional coverage bound max(0, gamma - alpha) = "
          f"{res.coverage_bound:.4f}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="shiftcal",
        description="Conformal prediction under unknown subpopulation shifts",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sweep", help="run a Monte Carlo coverage sweep")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default="sweep_out")
    p.add_argument("--no-figures", action="store_true",
                   help="skip rendering report figures")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("calibrate", help="compute thresholds from score files")
    p.add_argument("--config", required=True)
    p.add_argument("--scores", required=True)
    p.add_argument("--classifier")
    p.add_argument("--embeddings", help="calibration embeddings (id,e_1..e_d)")
    p.add_argument("--test-embeddings", help="test-point embeddings for a3 / risk_weighted")
    p.add_argument("--out", default="calibration_report.json")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("diagnose", help="classifier multiaccuracy/multicalibration")
    p.add_argument("--classifier", required=True)
    p.add_argument("--sample", required=True)
    p.add_argument("--bins", type=int, default=10)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("theorem1", help="adversarial-classifier coverage reproduction")
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--n-cal", type=int, default=20000)
    p.add_argument("--n-test", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_theorem1)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CliError, ConfigError, datafiles.DataFormatError, ValueError,
            KeyError, OSError) as exc:
        msg = exc.args[0] if exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
