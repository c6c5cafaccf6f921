"""Command-line entry point: ``polyprotect <command> [flags]``.

Exit codes: 0 success, 1 runtime failure, 2 usage/configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from ._random import substream
from .attack import LABEL_FMR, THRESHOLD_LABELS, AttackConfig, Target, run_campaign
from .core import (
    PolyParams,
    ProtectedTemplate,
    ScoreRange,
    compare,
    generate_params_naive,
    protect,
)
from .data import (
    SyntheticConfig,
    estimate_element_distributions,
    generate_synthetic_corpus,
    load_corpus,
    save_corpus,
    split_reference_query,
)
from .errors import ConfigError, PolyProtectError, UsageError
from .linkability import linkability_curve, mated_protocol
from .solver import SolverConfig
from .verification import accuracy_report, run_scenario, threshold_at_fmr

log = logging.getLogger("polyprotect")

# substream tags, one per independent random task
_DEV_CORPUS, _EVAL_CORPUS, _ACC_DEV, _ACC_EVAL, _TARGET_PARAMS, _ARM_PARAMS, _GUESSES, _LINK, _PROTECT = range(9)


@dataclass(frozen=True)
class ExperimentConfig:
    dev_path: Path | None
    eval_path: Path | None
    synthetic: SyntheticConfig
    overlaps: tuple[int, ...]
    m: int
    coeff_range: tuple[int, int]
    n_reference: int
    seed: int
    out_dir: Path
    workers: int

    def validate(self):
        for path in (self.dev_path, self.eval_path):
            if path is not None and not path.exists():
                raise ConfigError(f"corpus file not found: {path}")
        bad = [o for o in self.overlaps if not 0 <= o <= self.m - 1]
        if bad:
            raise ConfigError(f"overlaps {bad} outside [0, {self.m - 1}]")
        if self.workers < 1:
            raise ConfigError("--workers must be >= 1")


# --- helpers -----------------------------------------------------------------


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _derived_seed(seed: int, tag: int) -> int:
    return int(np.random.SeedSequence([seed, tag]).generate_state(1, np.uint64)[0])


def _write_json(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, allow_nan=False) + "\n", encoding="utf-8")


def _experiment_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig(
        dev_path=Path(args.dev) if args.dev else None,
        eval_path=Path(args.eval) if args.eval else None,
        synthetic=SyntheticConfig(
            n_subjects=args.subjects,
            samples_per_subject=args.samples,
            dim=args.dim,
            between_class_std=args.between_std,
            within_class_std=args.within_std,
            unit_normalize=not args.no_normalize,
            seed=0,
        ),
        overlaps=tuple(args.overlaps),
        m=args.m,
        coeff_range=(args.coeff_low, args.coeff_high),
        n_reference=args.n_ref,
        seed=args.seed,
        out_dir=Path(args.out_dir),
        workers=args.workers,
    )
    cfg.validate()
    return cfg


def _corpora(cfg: ExperimentConfig):
    """Development and evaluation corpora, from files or synthetic."""
    out = []
    for path, split, tag in ((cfg.dev_path, "development", _DEV_CORPUS), (cfg.eval_path, "evaluation", _EVAL_CORPUS)):
        if path is not None:
            corpus = load_corpus(path, split=split)
        else:
            synth = replace(cfg.synthetic, seed=_derived_seed(cfg.seed, tag))
            corpus = generate_synthetic_corpus(synth, split=split)
        out.append(corpus)
    dev, ev = out
    if dev.dim != ev.dim:
        raise ConfigError(f"development dim {dev.dim} != evaluation dim {ev.dim}")
    return dev, ev


def _baseline_thresholds(dev, n_reference) -> dict[str, float]:
    ref, query = split_reference_query(dev, n_reference)
    impostor = run_scenario(ref, query, scenario="baseline", n_trials=1).impostor
    return {label: threshold_at_fmr(impostor, LABEL_FMR[label]) for label in THRESHOLD_LABELS}


def _print_table(header, rows):
    widths = [max(len(str(x)) for x in col) for col in zip(header, *rows)]
    for row in (header, *rows):
        print("  ".join(str(x).rjust(w) for x, w in zip(row, widths)))


# --- commands ----------------------------------------------------------------


def cmd_gen_corpus(args) -> int:
    cfg = SyntheticConfig(
        n_subjects=args.subjects,
        samples_per_subject=args.samples,
        dim=args.dim,
        between_class_std=args.between_std,
        within_class_std=args.within_std,
        unit_normalize=not args.no_normalize,
        seed=args.seed,
    )
    corpus = generate_synthetic_corpus(cfg)
    save_corpus(corpus, args.out)
    print(f"wrote {len(corpus)} embeddings (dim {cfg.dim}) to {args.out}")
    return 0


def cmd_gen_params(args) -> int:
    params = generate_params_naive(args.m, args.overlap, (args.coeff_low, args.coeff_high), args.owner, args.seed)
    _write_json(Path(args.out), params.to_dict())
    print(json.dumps(params.to_dict()))
    return 0


def _load_params(path: Path) -> list[PolyParams]:
    data = json.loads(path.read_text(encoding="utf-8"))
    records = data if isinstance(data, list) else [data]
    return [PolyParams.from_dict(d) for d in records]


def cmd_protect(args) -> int:
    corpus = load_corpus(args.input)
    coeff_range = (args.coeff_low, args.coeff_high)
    if args.params:
        loaded = _load_params(Path(args.params))
        for p in loaded:
            if p.overlap != args.overlap:
                raise ConfigError(f"params for {p.owner_id!r} use overlap {p.overlap}, --overlap is {args.overlap}")
        by_owner = {p.owner_id: p for p in loaded}
        shared = loaded[0] if len(loaded) == 1 else None
        params = {}
        for s in corpus.subjects():
            if s in by_owner:
                params[s] = by_owner[s]
            elif shared is not None:
                params[s] = shared
            else:
                raise ConfigError(f"no parameters for subject {s!r} in {args.params}")
        params_out = None
    else:
        if not 0 <= args.overlap <= args.m - 1:
            raise ConfigError(f"--overlap must lie in [0, {args.m - 1}]")
        params = {
            s: generate_params_naive(args.m, args.overlap, coeff_range, s, substream(args.seed, _PROTECT, i))
            for i, s in enumerate(corpus.subjects())
        }
        params_out = Path(args.params_out) if args.params_out else Path(args.out).with_suffix(".params.json")
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        for e in corpus.sorted():
            record = protect(e, params[e.subject_id]).to_dict()
            record["sample_id"] = e.sample_id
            fh.write(json.dumps(record, allow_nan=False) + "\n")
    if params_out is not None:
        _write_json(params_out, [params[s].to_dict() for s in sorted(params)])
        print(f"wrote parameters to {params_out}")
    print(f"wrote {len(corpus)} templates to {out}")
    return 0


def _read_template(path: str, line: int) -> ProtectedTemplate:
    lines = [x for x in Path(path).read_text(encoding="utf-8").splitlines() if x.strip()]
    if not 0 <= line < len(lines):
        raise ConfigError(f"{path} has {len(lines)} templates; line {line} requested")
    return ProtectedTemplate.from_dict(json.loads(lines[line]))


def cmd_compare(args) -> int:
    a = _read_template(args.a, args.line_a)
    b = _read_template(args.b, args.line_b)
    if a.values.size != b.values.size:
        raise ConfigError(f"templates differ in size: {a.values.size} vs {b.values.size}")
    print(repr(compare(a, b)))
    return 0


def cmd_eval_accuracy(args) -> int:
    cfg = _experiment_config(args)
    dev, ev = _corpora(cfg)
    dev_ref, dev_q = split_reference_query(dev, cfg.n_reference)
    ev_ref, ev_q = split_reference_query(ev, cfg.n_reference)
    cells = [None] if args.scenario == "baseline" else list(cfg.overlaps)
    rows = []
    for overlap in cells:
        kwargs = dict(
            overlap=overlap or 0, scenario=args.scenario, n_trials=args.trials, m=cfg.m, coeff_range=cfg.coeff_range
        )
        # same parameter draws for every overlap cell
        dev_scores = run_scenario(dev_ref, dev_q, rng=substream(cfg.seed, _ACC_DEV), **kwargs)
        ev_scores = run_scenario(ev_ref, ev_q, rng=substream(cfg.seed, _ACC_EVAL), **kwargs)
        report = accuracy_report(dev_scores, ev_scores, args.scenario, overlap, args.trials, n_points=args.roc_points)
        name = "accuracy_baseline.json" if overlap is None else f"accuracy_{args.scenario}_overlap{overlap}.json"
        _write_json(cfg.out_dir / name, report.to_dict())
        rows.append(["-" if overlap is None else overlap] + [f"{v:.4f}" for v in report.tmr_at_fmr.values()])
    _print_table(["overlap"] + [f"TMR@{f:g}" for f in report.tmr_at_fmr], rows)
    return 0


def _attack_setup(cfg: ExperimentConfig, args):
    dev, ev = _corpora(cfg)
    dev_ref, _ = split_reference_query(dev, cfg.n_reference)
    ev_ref, _ = split_reference_query(ev, cfg.n_reference)
    if args.targets > len(ev_ref):
        raise ConfigError(f"--targets {args.targets} exceeds the {len(ev_ref)} evaluation references")
    attack_cfg = AttackConfig(
        guess_source=estimate_element_distributions(dev_ref, bins=args.bins),
        thresholds=_baseline_thresholds(dev, cfg.n_reference),
        n_guesses=args.guesses,
        solver=SolverConfig(max_iterations=args.max_iterations),
        seed=_derived_seed(cfg.seed, _GUESSES),
    )
    return list(ev_ref)[: args.targets], attack_cfg


def _targets(embeddings, overlap, n_params, cfg: ExperimentConfig, tag):
    targets = []
    for i, e in enumerate(embeddings):
        rng = substream(cfg.seed, tag, i)  # identical C, E across overlaps
        params = [generate_params_naive(cfg.m, overlap, cfg.coeff_range, e.subject_id, rng) for _ in range(n_params)]
        targets.append(Target(e.values, tuple(protect(e, p) for p in params), tuple(params)))
    return targets


def _report_row(report):
    return [report.overlap, report.p, f"{report.solution_rate:.3f}"] + [
        f"{report.inversion_success_rate[label]:.3f}" for label in THRESHOLD_LABELS
    ]


_ATTACK_HEADER = ["overlap", "p", "solution"] + [f"success@{label}" for label in THRESHOLD_LABELS]


def cmd_attack_invert(args) -> int:
    if args.guesses < 1:
        raise ConfigError("--guesses must be >= 1")
    cfg = _experiment_config(args)
    embeddings, attack_cfg = _attack_setup(cfg, args)
    rows = []
    for overlap in cfg.overlaps:
        report = run_campaign(_targets(embeddings, overlap, 1, cfg, _TARGET_PARAMS), attack_cfg, 1, cfg.workers)
        _write_json(cfg.out_dir / f"attack_invert_overlap{overlap}.json", report.to_dict())
        rows.append(_report_row(report))
    _print_table(_ATTACK_HEADER, rows)
    return 0


def cmd_attack_arm(args) -> int:
    if args.guesses < 1:
        raise ConfigError("--guesses must be >= 1")
    p_values = sorted(set(args.p_values))
    if not p_values or p_values[0] < 1:
        raise ConfigError("--p-values must be positive integers")
    cfg = _experiment_config(args)
    embeddings, attack_cfg = _attack_setup(cfg, args)
    rows = []
    for overlap in cfg.overlaps:
        targets = _targets(embeddings, overlap, p_values[-1], cfg, _ARM_PARAMS)
        for p in p_values:
            report = run_campaign(targets, attack_cfg, p, cfg.workers)
            _write_json(cfg.out_dir / f"attack_arm_overlap{overlap}_p{p}.json", report.to_dict())
            rows.append(_report_row(report))
    _print_table(_ATTACK_HEADER, rows)
    return 0


def _link_kwargs(args, cfg):
    return dict(
        templates_per_subject=args.templates_per_subject,
        n_trials=args.trials,
        m=cfg.m,
        coeff_range=cfg.coeff_range,
    )


def _range_path(directory: Path, overlap: int) -> Path:
    return directory / f"range_overlap{overlap}.json"


def cmd_derive_range(args) -> int:
    cfg = _experiment_config(args)
    dev, _ = _corpora(cfg)
    rows = []
    for overlap in cfg.overlaps:
        scores = mated_protocol(dev, overlap, param_mode="naive", rng=substream(cfg.seed, _LINK, 0, overlap), **_link_kwargs(args, cfg))
        report = linkability_curve(scores, bins=args.bins, overlap=overlap)
        _write_json(cfg.out_dir / f"linkability_dev_naive_overlap{overlap}.json", report.to_dict())
        _write_json(_range_path(cfg.out_dir, overlap), {"overlap": overlap, "unlink_range": report.unlink_range.to_list()})
        rows.append([overlap, f"{report.d_sys:.4f}", f"{report.unlink_range.low:.4f}", f"{report.unlink_range.high:.4f}"])
    _print_table(["overlap", "D_sys(dev)", "range_low", "range_high"], rows)
    return 0


def cmd_eval_unlink(args) -> int:
    cfg = _experiment_config(args)
    range_dir = Path(args.range_dir) if args.range_dir else cfg.out_dir
    ranges = {}
    if args.mode == "strict":
        for overlap in cfg.overlaps:
            path = _range_path(range_dir, overlap)
            if not path.exists():
                raise ConfigError(f"missing {path}; run `polyprotect derive-range` first")
            low, high = json.loads(path.read_text(encoding="utf-8"))["unlink_range"]
            ranges[overlap] = ScoreRange(low, high)
    _, ev = _corpora(cfg)
    cells = [None] if args.mode == "baseline" else list(cfg.overlaps)
    rows = []
    for overlap in cells:
        scores = mated_protocol(
            ev,
            overlap or 0,
            param_mode=args.mode,
            strict_range=ranges.get(overlap),
            rng=substream(cfg.seed, _LINK, 1, 99 if overlap is None else overlap),
            **_link_kwargs(args, cfg),
        )
        report = linkability_curve(scores, bins=args.bins, overlap=overlap)
        name = "linkability_baseline.json" if overlap is None else f"linkability_{args.mode}_overlap{overlap}.json"
        _write_json(cfg.out_dir / name, report.to_dict())
        rows.append(["-" if overlap is None else overlap, f"{report.d_sys:.4f}"])
    _print_table(["overlap", f"D_sys({args.mode})"], rows)
    return 0


# --- parser ------------------------------------------------------------------


def _add_synthetic(p, out_required=False):
    p.add_argument("--subjects", type=int, default=20)
    p.add_argument("--samples", type=int, default=12, help="samples per subject")
    p.add_argument("--dim", type=int, default=128)
    p.add_argument("--between-std", type=float, default=1.0)
    p.add_argument("--within-std", type=float, default=0.1)
    p.add_argument("--no-normalize", action="store_true", help="skip unit-norm scaling")


def _add_params(p):
    p.add_argument("--m", type=int, default=5)
    p.add_argument("--coeff-low", type=int, default=-50)
    p.add_argument("--coeff-high", type=int, default=50)


def _add_experiment(p):
    p.add_argument("--dev", help="development corpus CSV (default: synthetic)")
    p.add_argument("--eval", help="evaluation corpus CSV (default: synthetic)")
    _add_synthetic(p)
    _add_params(p)
    p.add_argument("--overlaps", type=_int_list, default=(0, 1, 2, 3, 4))
    p.add_argument("--n-ref", type=int, default=5, help="reference samples per subject")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default="reports")
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="polyprotect", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-corpus", help="write a synthetic embedding corpus")
    _add_synthetic(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_corpus)

    p = sub.add_parser("gen-params", help="draw one random parameter set")
    _add_params(p)
    p.add_argument("--overlap", type=int, default=0)
    p.add_argument("--owner", default="")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_params)

    p = sub.add_parser("protect", help="protect every embedding of a corpus")
    p.add_argument("--in", dest="input", required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--params", help="params JSON (one object, or a list keyed by owner_id)")
    group.add_argument("--gen-params", action="store_true", help="draw fresh per-subject parameters")
    p.add_argument("--params-out", help="where generated params go (default: <out>.params.json)")
    p.add_argument("--overlap", type=int, required=True)
    _add_params(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_protect)

    p = sub.add_parser("compare", help="score two templates")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--line-a", type=int, default=0)
    p.add_argument("--line-b", type=int, default=0)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("eval-accuracy", help="verification accuracy (normal / sce / baseline)")
    _add_experiment(p)
    p.add_argument("--scenario", choices=("normal", "sce", "baseline"), default="normal")
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--roc-points", type=int, default=200)
    p.set_defaults(func=cmd_eval_accuracy)

    for name, func, helptext in (
        ("attack-invert", cmd_attack_invert, "single-template inversion campaign"),
        ("attack-arm", cmd_attack_arm, "record multiplicity attack campaign"),
    ):
        p = sub.add_parser(name, help=helptext)
        _add_experiment(p)
        p.add_argument("--guesses", type=int, default=100)
        p.add_argument("--targets", type=int, default=50)
        p.add_argument("--bins", type=int, default=100, help="histogram bins of the guess distributions")
        p.add_argument("--max-iterations", type=int, default=200)
        if name == "attack-arm":
            p.add_argument("--p-values", type=_int_list, default=tuple(range(1, 11)))
        p.set_defaults(func=func)

    for name, func, helptext in (
        ("derive-range", cmd_derive_range, "unlinkable score range on the development corpus"),
        ("eval-unlink", cmd_eval_unlink, "linkability on the evaluation corpus"),
    ):
        p = sub.add_parser(name, help=helptext)
        _add_experiment(p)
        p.add_argument("--templates-per-subject", type=int, default=10)
        p.add_argument("--trials", type=int, default=10)
        p.add_argument("--bins", type=int, default=100)
        if name == "eval-unlink":
            p.add_argument("--mode", choices=("naive", "strict", "baseline"), default="naive")
            p.add_argument("--range-dir", help="directory holding range_overlap*.json (default: --out-dir)")
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"polyprotect {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (PolyProtectError, OSError) as exc:
        print(f"polyprotect {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
