"""Command-line entry point: ``fixmarkov <subcommand> ...``.

Every figure-bearing command writes plot-ready CSV plus a JSON summary that
echoes the effective configuration. Settings resolve as command-line flag,
then ``--config`` JSON file, then built-in default.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import render
from .classify import classify_at, rank_images, roc
from .clustering import ClusterConfig, Linkage, Metric
from .data import ColourScheme, DataError, Dataset, IngestConfig, group_sequences, parse_records, write_records
from .density import BandwidthError, density_grid, fit_kde1d_sj, normal_reference_bandwidth, Kde1D
from .markov import BayesFactorReport, ScoreConfig, ScoringError, fit_model, score_image
from .simulate import SimSpec, simulate, write_states
from .stats import (SCHEME_PAIRS, StatsError, duration_density_pairs, duration_density_correlation,
                    fixation_counts, kruskal_wallis, ks_two_sample, mann_whitney, normalize_per_subject,
                    paired_t, pair_label, saccade_sets)

log = logging.getLogger("fixmarkov")


class CliError(Exception):
    pass


@dataclass
class RunConfig:
    cluster_method: str = "kmeans"
    metric: str = "l2"
    linkage: str = "ward"
    knn: int | None = None
    restarts: int = 10
    k_max: int = 10
    mc_samples: int = 10_000
    combine: str = "geometric"
    seed: int = 0
    threshold: float = 0.2
    delimiter: str = ","
    header: bool = False

    def validate(self) -> "RunConfig":
        if self.k_max < 2:
            raise CliError("--k-max must be at least 2")
        if self.restarts < 1:
            raise CliError("--restarts must be at least 1")
        if self.mc_samples < 1:
            raise CliError("--mc-samples must be at least 1")
        if self.knn is not None and self.knn < 1:
            raise CliError("--knn must be at least 1")
        return self

    @property
    def cluster(self) -> ClusterConfig:
        return ClusterConfig(method=self.cluster_method, metric=Metric(self.metric),
                             linkage=Linkage(self.linkage), neighbour_count=self.knn,
                             restarts=self.restarts)

    @property
    def scoring(self) -> ScoreConfig:
        return ScoreConfig(samples=self.mc_samples, combine=self.combine, seed=self.seed)

    @property
    def ingest(self) -> IngestConfig:
        return IngestConfig(delimiter=None if self.delimiter == "whitespace" else self.delimiter,
                            header=self.header)


def resolve_config(args: argparse.Namespace) -> RunConfig:
    values = {}
    if getattr(args, "config", None):
        with open(args.config) as fh:
            values.update(json.load(fh))
    names = {f.name for f in fields(RunConfig)}
    unknown = set(values) - names
    if unknown:
        raise CliError(f"unknown config keys: {', '.join(sorted(unknown))}")
    for name in names:
        flag = getattr(args, name, None)
        if flag is not None:
            values[name] = flag
    return RunConfig(**values).validate()


# -- output helpers ---------------------------------------------------------------------

def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")


def write_json(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, default=_json_default)
        fh.write("\n")


def write_csv(path: Path, header, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(header)
        for row in rows:
            out.writerow([repr(v) if isinstance(v, float) else v for v in row])


def load_dataset(path) -> Dataset:
    path = Path(path)
    if not path.exists():
        raise CliError(f"input not found: {path}")
    return Dataset.load(path)


def load_reports(path) -> list[BayesFactorReport]:
    path = Path(path)
    if not path.exists():
        raise CliError(f"input not found: {path}")
    files = sorted(path.glob("report_*.json")) if path.is_dir() else [path]
    if not files:
        raise CliError(f"no report_*.json files in {path}")
    reports = []
    for f in files:
        with open(f) as fh:
            reports.append(BayesFactorReport.from_json(json.load(fh)))
    return reports


# -- subcommands ----------------------------------------------------------------------

def cmd_ingest(args, cfg: RunConfig) -> int:
    src = Path(args.input)
    if not src.exists():
        raise CliError(f"input not found: {src}")
    with open(src) as fh:
        try:
            records = parse_records(fh, cfg.ingest)
        except DataError as exc:
            raise CliError(f"{src}: {exc}") from exc
    dataset = group_sequences(records)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dataset.save(out / "dataset.json")
    if not records:
        log.warning("%s contains no fixation rows", src)
    summary = {
        "records": len(records),
        "sequences": len(dataset),
        "subjects": len({s.subject_id for s in dataset}),
        "images": len(dataset.images),
        "schemes": [s.value for s in dataset.schemes],
        "config": asdict(cfg),
    }
    write_json(out / "ingest_summary.json", summary)
    print(f"{summary['records']} fixations, {summary['sequences']} sequences, "
          f"{summary['subjects']} subjects, {summary['images']} images; "
          f"schemes: {', '.join(summary['schemes']) or 'none'}")
    return 0


def cmd_fit(args, cfg: RunConfig) -> int:
    dataset = load_dataset(args.input)
    scheme = ColourScheme.parse(args.scheme)
    train = dataset.select(args.image, scheme)
    if not train:
        raise CliError(f"no sequences for image {args.image} ({scheme.value})")
    try:
        model = fit_model(train, args.k, cfg.cluster, seed=[cfg.seed, args.k])
    except ValueError as exc:
        raise CliError(f"image {args.image} ({scheme.value}), k={args.k}: {exc}") from exc
    out = Path(args.out_dir)
    stem = f"model_{args.image}_{scheme.value}_k{args.k}"
    payload = {"image_id": args.image, "scheme": scheme.value, "subjects": [s.subject_id for s in train],
               **model.to_json(), "config": asdict(cfg)}
    write_json(out / f"{stem}.json", payload)
    if args.grid:
        width, height = args.grid
        pts = np.concatenate([s.points for s in train])
        pad = 3 * model.null_density.bandwidth
        xr = (pts[:, 0].min() - pad[0], pts[:, 0].max() + pad[0])
        yr = (pts[:, 1].min() - pad[1], pts[:, 1].max() + pad[1])
        xs, ys, null = density_grid(model.null_density, xr, yr, width, height)
        layers = [density_grid(d, xr, yr, width, height)[2] for d in model.densities]
        rows = []
        for iy, y in enumerate(ys):
            for ix, x in enumerate(xs):
                rows.append([float(x), float(y), float(null[iy, ix])] + [float(l[iy, ix]) for l in layers])
        write_csv(out / f"{stem}_grid.csv", ["x", "y", "null"] + [f"cluster_{j}" for j in range(args.k)], rows)
    pi = payload["posterior_mean"]["pi"]
    print(render.transition_block(pi, payload["posterior_mean"]["p"]))
    return 0


def _paired_comparisons(reports: list[BayesFactorReport]) -> dict:
    by_scheme = {}
    for r in reports:
        by_scheme.setdefault(r.scheme, {})[r.image_id] = r.strongest_log2_bf
    rows = {}
    for a, b in SCHEME_PAIRS:
        if a not in by_scheme or b not in by_scheme:
            continue
        images = sorted(set(by_scheme[a]) & set(by_scheme[b]))
        label = pair_label(a, b)
        try:
            res = paired_t([by_scheme[a][i] for i in images], [by_scheme[b][i] for i in images])
        except StatsError as exc:
            rows[label] = {"error": str(exc), "images": len(images)}
            continue
        rows[label] = {**res.to_json(), "images": len(images)}
    return rows


def cmd_score(args, cfg: RunConfig) -> int:
    dataset = load_dataset(args.input)
    out = Path(args.out_dir)
    reports, failures = [], []
    for image, scheme in dataset.groups():
        try:
            report = score_image(dataset, image, scheme, range(1, cfg.k_max + 1), cfg.cluster, cfg.scoring)
        except (ScoringError, DataError, ValueError) as exc:
            failures.append({"image_id": image, "scheme": scheme.value, "error": str(exc)})
            log.error("image %s (%s): %s", image, scheme.value, exc)
            continue
        report.config = {**report.config, "run": asdict(cfg)}
        reports.append(report)
        write_json(out / "reports" / f"report_{image}_{scheme.value}.json", report.to_json())
        print(f"image {image} ({scheme.value}): k = {report.selected_k}, BF = {render.fmt_bf(report.strongest_bf)}")
    write_csv(out / "log2_bf.csv", ["image_id", "scheme", "selected_k", "strongest_bf", "log2_bf"],
              [[r.image_id, r.scheme.value, r.selected_k, r.strongest_bf, r.strongest_log2_bf] for r in reports])
    comparisons = _paired_comparisons(reports)
    listing = render.interval_listing({k: v for k, v in comparisons.items() if "ci" in v})
    write_json(out / "score_summary.json", {
        "images_scored": len(reports), "failures": failures,
        "paired_t_log2_bf": comparisons, "config": asdict(cfg)})
    if listing:
        print(listing)
    return 1 if failures else 0


def cmd_roc(args, cfg: RunConfig) -> int:
    reports = load_reports(args.input)
    coloured = [r.strongest_bf for r in reports if r.scheme is not ColourScheme.GRAYSCALE]
    gray = [r.strongest_bf for r in reports if r.scheme is ColourScheme.GRAYSCALE]
    if not coloured or not gray:
        raise CliError("ROC needs reports for both coloured and grayscale images")
    curve = roc(coloured, gray)
    out = Path(args.out_dir)
    write_csv(out / "roc.csv", ["threshold", "tpr", "fpr"],
              [[float(t), float(a), float(b)] for t, a, b in curve.points])
    best_t, best_tpr, best_fpr = curve.best_threshold()
    tpr, fpr = curve.rates_at(cfg.threshold)
    verdicts = {f"{r.image_id}_{r.scheme.value}": classify_at(r.strongest_bf, cfg.threshold).value
                for r in reports}
    payload = {"auc": curve.auc, "n_coloured": len(coloured), "n_grayscale": len(gray),
               "best_threshold": {"threshold": best_t, "tpr": best_tpr, "fpr": best_fpr},
               "at_threshold": {"threshold": cfg.threshold, "tpr": tpr, "fpr": fpr},
               "verdicts": verdicts, "config": asdict(cfg)}
    write_json(out / "roc.json", payload)
    print(f"AUC = {curve.auc:.3f}; best threshold {render.fmt_bf(best_t)} "
          f"(TPR {best_tpr:.2f}, FPR {best_fpr:.2f})")
    return 0


def _count_tests(dataset: Dataset) -> dict:
    counts = fixation_counts(dataset)
    result: dict = {}
    if len(counts) >= 2:
        try:
            result["kruskal_wallis"] = kruskal_wallis(list(counts.values())).to_json()
        except StatsError as exc:
            result["kruskal_wallis"] = {"error": str(exc)}
    result["mann_whitney"] = {pair_label(a, b): mann_whitney(counts[a], counts[b]).to_json()
                              for a, b in SCHEME_PAIRS if a in counts and b in counts}
    return result


def cmd_saccades(args, cfg: RunConfig) -> int:
    dataset = load_dataset(args.input)
    sets = saccade_sets(dataset)
    raw = {}
    for s in sets:
        raw.setdefault(s.scheme, []).append(s.lengths)
    raw = {k: np.concatenate(v) for k, v in raw.items()}
    try:
        normed_sets = normalize_per_subject(sets)
    except StatsError as exc:
        raise CliError(str(exc)) from exc
    normed = {}
    for s in normed_sets:
        normed.setdefault(s.scheme, []).append(s.lengths)
    normed = {k: np.concatenate(v) for k, v in normed.items()}

    def battery(samples):
        return {pair_label(a, b): ks_two_sample(samples[a], samples[b]).to_json()
                for a, b in SCHEME_PAIRS if a in samples and b in samples}

    out = Path(args.out_dir)
    ks_raw, ks_norm = battery(raw), battery(normed)
    kde_rows, bandwidths = [], {}
    for scheme, lengths in raw.items():
        try:
            kde = fit_kde1d_sj(lengths)
            rule = "sheather-jones"
        except BandwidthError:
            kde = Kde1D(lengths, normal_reference_bandwidth(lengths))
            rule = "normal-reference"
        bandwidths[scheme.value] = {"bandwidth": kde.bandwidth, "rule": rule}
        grid = np.linspace(0.0, lengths.max() + 3 * kde.bandwidth, 256)
        kde_rows += [[scheme.value, float(x), float(y)] for x, y in zip(grid, kde(grid))]
    write_csv(out / "saccade_kde.csv", ["scheme", "length", "density"], kde_rows)
    write_csv(out / "fixation_counts.csv", ["scheme", "subject_id", "image_id", "count"],
              [[s.colour_scheme.value, s.subject_id, s.image_id, len(s)] for s in dataset])
    write_json(out / "saccades.json", {"ks_raw": ks_raw, "ks_normalized": ks_norm,
                                       "kde_bandwidth": bandwidths, "fixation_counts": _count_tests(dataset),
                                       "config": asdict(cfg)})
    print("KS on saccade lengths:\n" + render.p_listing(ks_raw))
    print("KS on per-subject normalised saccade lengths:\n" + render.p_listing(ks_norm))
    return 0


def cmd_duration(args, cfg: RunConfig) -> int:
    dataset = load_dataset(args.input)
    out = Path(args.out_dir)
    results, rows, failures = {}, [], []
    for scheme in dataset.schemes:
        try:
            res = duration_density_correlation(dataset, args.image, scheme)
        except StatsError as exc:
            failures.append({"scheme": scheme.value, "error": str(exc)})
            continue
        results[scheme.value] = res.to_json()
        images = [args.image] if args.image is not None else dataset.images
        for image in images:
            if len(dataset.select(image, scheme)) >= 2:
                dens, durs = duration_density_pairs(dataset, image, scheme)
                rows += [[scheme.value, image, float(d), float(t)] for d, t in zip(dens, durs)]
    write_csv(out / "duration_pairs.csv", ["scheme", "image_id", "density", "duration_ms"], rows)
    write_json(out / "duration.json", {"correlation": results, "failures": failures,
                                       "fixation_counts": _count_tests(dataset), "config": asdict(cfg)})
    for scheme, res in results.items():
        lo, hi = res["ci"]
        print(f"{scheme}: r = {res['statistic']:.4f}, 95% CI [{lo:.4f}, {hi:.4f}]")
    return 1 if failures else 0


def cmd_simulate(args, cfg: RunConfig) -> int:
    if not args.spec or not Path(args.spec).exists():
        raise CliError(f"spec file not found: {args.spec}")
    with open(args.spec) as fh:
        payload = json.load(fh)
    specs = [SimSpec.from_json(p) for p in (payload if isinstance(payload, list) else [payload])]
    dataset, states = Dataset(), {}
    for spec in specs:
        sim = simulate(spec)
        dataset = dataset.merge(sim.dataset)
        states.update(sim.states)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w") as fh:
        write_records(dataset.records(), fh, cfg.ingest)
    states_path = Path(args.states) if args.states else out.with_name(out.stem + ".states.csv")
    write_states(states, states_path)
    print(f"wrote {sum(len(s) for s in dataset)} fixations for {len(dataset)} sequences to {out}")
    return 0


def cmd_report(args, cfg: RunConfig) -> int:
    reports = load_reports(args.input)
    out = Path(args.out_dir)
    text, ranking = [], {}
    for scheme in ColourScheme:
        group = [r for r in reports if r.scheme is scheme]
        if not group:
            continue
        ranked = rank_images(group)
        ranking[scheme.value] = [{"image_id": i, "strongest_bf": bf} for i, bf in ranked]
        text.append(render.ranking_table(ranked, scheme.value, n=args.top))
    text.append("")
    text += [render.report_summary(r) for r in reports]
    comparisons = _paired_comparisons(reports)
    with_ci = {k: v for k, v in comparisons.items() if "ci" in v}
    if with_ci:
        text += ["", "paired t-tests on log2 Bayes factors:", render.interval_listing(with_ci)]
    rendered = "\n".join(text) + "\n"
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.txt").write_text(rendered)
    write_json(out / "ranking.json", {"ranking": ranking, "paired_t_log2_bf": comparisons, "config": asdict(cfg)})
    print(rendered, end="")
    return 0


# -- parser ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--input")
    common.add_argument("--out-dir", default="out")
    common.add_argument("--config", help="JSON file of run settings")
    common.add_argument("--cluster-method", choices=["kmeans", "hier"])
    common.add_argument("--metric", choices=[m.value for m in Metric])
    common.add_argument("--linkage", choices=[l.value for l in Linkage])
    common.add_argument("--knn", type=int, help="assign test fixations by N nearest neighbours")
    common.add_argument("--restarts", type=int)
    common.add_argument("--k-max", type=int)
    common.add_argument("--mc-samples", type=int)
    common.add_argument("--combine", choices=["geometric", "arithmetic"])
    common.add_argument("--seed", type=int)
    common.add_argument("--threshold", type=float)
    common.add_argument("--delimiter", help='field delimiter, or "whitespace"')
    common.add_argument("--header", action="store_true", default=None)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="fixmarkov", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("ingest", parents=[common], help="parse a fixation table into dataset JSON")
    fit = sub.add_parser("fit", parents=[common], help="fit one k-state model on all subjects of an image")
    fit.add_argument("--image", type=int, required=True)
    fit.add_argument("--scheme", required=True)
    fit.add_argument("--k", type=int, required=True)
    fit.add_argument("--grid", type=int, nargs=2, metavar=("W", "H"), help="also emit a W x H density grid CSV")
    sub.add_parser("score", parents=[common], help="leave-one-subject-out Bayes factors for every image")
    sub.add_parser("roc", parents=[common], help="ROC of thresholding stored Bayes factors")
    sub.add_parser("saccades", parents=[common], help="saccade-length KS tests and KDE curves")
    dur = sub.add_parser("duration", parents=[common], help="duration vs density correlation and count tests")
    dur.add_argument("--image", type=int, help="restrict to one image (default: pool all)")
    simp = sub.add_parser("simulate", parents=[common], help="generate synthetic fixation data")
    simp.add_argument("--spec")
    simp.add_argument("--out", required=True)
    simp.add_argument("--states", help="sidecar file for true states")
    rep = sub.add_parser("report", parents=[common], help="rank images and render stored reports")
    rep.add_argument("--top", type=int, default=4)
    return parser


COMMANDS = {"ingest": cmd_ingest, "fit": cmd_fit, "score": cmd_score, "roc": cmd_roc,
            "saccades": cmd_saccades, "duration": cmd_duration, "simulate": cmd_simulate,
            "report": cmd_report}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    if args.command not in ("simulate",) and not args.input:
        print(f"error: {args.command} needs --input", file=sys.stderr)
        return 2
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](args, cfg)
    except (CliError, DataError, StatsError, ScoringError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
