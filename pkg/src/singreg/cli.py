"""Command-line interface.

Subcommands
-----------
generate   draw a dataset and write it as CSV + JSON sidecar
sample     run one posterior and dump draws with diagnostics
estimate   one full replication: dataset, posterior, error report
sweep      run every replication of a config and write artifacts
rlct       invariant estimates: charts (exact), volume fit, error inversion
report     summarize a sweep directory; --check exits 3 on failed checks

Exit codes: 0 success, 1 user error (arguments, config, schema),
2 internal error, 3 failed checks.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import traceback
from dataclasses import asdict
from pathlib import Path

from . import __version__, seeds
from .birational import Chart, ChartSet, rlct_from_charts, rlct_volume_fit, volume_profile
from .datagen import generate, save_dataset
from .errors import ConfigError, SingregError
from .estimators import REPORT_COLUMNS, compute_error_report, report_to_row
from .harness import (
    evaluate_checks,
    experiment_xq,
    load_config,
    load_summary,
    plot_rows,
    report_text,
    run_replication,
    run_sweep,
)
from .models import make_model, make_truth
from .posterior import GibbsTarget, dump_draws_csv, grid_posterior, sample_posterior


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad usage; remap to the user-error code
    def error(self, message: str):  # noqa: D102
        raise ConfigError(message)


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="singreg", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"singreg {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="draw a dataset and write CSV + sidecar")
    p.add_argument("--model", required=True)
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("sample", help="run one posterior and dump draws")
    p.add_argument("--config", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--replication", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("estimate", help="run one replication and print the error report")
    p.add_argument("--config", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--replication", type=int, default=0)
    p.add_argument("--json", action="store_true", help="print the report as JSON")

    p = sub.add_parser("sweep", help="run all replications of a config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--no-resume", action="store_true", help="recompute even if raw.csv exists")

    p = sub.add_parser("rlct", help="invariant estimates")
    p.add_argument("--charts", help="JSON file with {'charts': [{'k': [...], 'h': [...]}, ...]}")
    p.add_argument("--config", help="experiment config for --volume / --from-sweep")
    p.add_argument("--volume", action="store_true", help="prior volume profile + log-log fit")
    p.add_argument("--from-sweep", help="sweep directory; invert scaled errors at the largest n")
    p.add_argument("--out", help="where to write volume.json (with --volume)")

    p = sub.add_parser("report", help="summarize a sweep directory")
    p.add_argument("--dir", required=True)
    p.add_argument("--check", action="store_true", help="exit 3 if any consistency check fails")
    p.add_argument("--plots", help="write long-form plot CSV here")
    return parser


# --------------------------------------------------------------------------
# subcommands


def _cmd_generate(args) -> int:
    truth = make_truth(args.model, args.sigma)
    dataset = generate(truth, args.n, args.seed)
    save_dataset(dataset, args.out, model_id=args.model, sigma=args.sigma)
    print(f"wrote {args.out} (n={dataset.n}) and sidecar")
    return 0


def _replication_pieces(args):
    config = load_config(args.config)
    model = make_model(config.model, config.prior, config.prior_scale)
    truth = make_truth(config.model, config.sigma)
    return config, model, truth


def _cmd_sample(args) -> int:
    config, model, truth = _replication_pieces(args)
    n_index = config.n.index(args.n) if args.n in config.n else None
    beta_index = config.beta.index(args.beta) if args.beta in config.beta else None
    if n_index is None or beta_index is None:
        raise ConfigError(f"(n={args.n}, beta={args.beta}) is not a cell of the config grid")
    data_seed = seeds.mix(config.master_seed, seeds.PURPOSE_DATA, n_index, beta_index, args.replication)
    dataset = generate(truth, args.n, data_seed)
    target = GibbsTarget(model=model, dataset=dataset, beta=args.beta)
    if config.backend == "mcmc":
        mcmc_seed = seeds.mix(config.master_seed, seeds.PURPOSE_MCMC, n_index, beta_index, args.replication)
        samples = sample_posterior(target, config.mcmc, mcmc_seed)
    else:
        samples = grid_posterior(target, config.grid)
    dump_draws_csv(samples, args.out)
    diag = samples.diagnostics
    print(f"wrote {samples.size} draws to {args.out}")
    print(f"method={diag.method} converged={diag.converged} max_rhat={diag.max_rhat:.4f}")
    if diag.acceptance_rate:
        print("acceptance per chain: " + ", ".join(f"{a:.3f}" for a in diag.acceptance_rate))
    if not diag.converged:
        print("warning: chains failed the split-rhat limit; draws are flagged, not discarded")
    return 0


def _cmd_estimate(args) -> int:
    config = load_config(args.config)
    report = run_replication(config, args.n, args.beta, args.replication)
    if args.json:
        print(json.dumps(asdict(report), indent=2, sort_keys=True))
    else:
        for column, value in zip(REPORT_COLUMNS, report_to_row(report)):
            print(f"{column:>12} {value}")
    return 0


def _cmd_sweep(args) -> int:
    config = load_config(args.config)
    result = run_sweep(config, args.out, resume=not args.no_resume)
    print(f"sweep complete: {result.n_rows} replications in {result.out_dir}")
    print(report_text(config, result.cells))
    return 0


def _cmd_rlct(args) -> int:
    modes = [bool(args.charts), bool(args.volume), bool(args.from_sweep)]
    if sum(modes) != 1:
        raise ConfigError("pick exactly one of --charts, --volume, --from-sweep")
    if args.charts:
        with Path(args.charts).open() as fh:
            data = json.load(fh)
        charts = ChartSet(charts=tuple(Chart(k=tuple(c["k"]), h=tuple(c["h"])) for c in data["charts"]))
        lam, mult = rlct_from_charts(charts)
        print(f"lam = {lam} = {float(lam):.6f}, multiplicity = {mult} (exact, {len(charts.charts)} charts)")
        return 0
    if not args.config:
        raise ConfigError("--volume and --from-sweep need --config")
    config = load_config(args.config)
    if args.volume:
        model = make_model(config.model, config.prior, config.prior_scale)
        truth = make_truth(config.model, config.sigma)
        xq = experiment_xq(config)
        pv = config.prior_volume
        if pv is None:
            raise ConfigError("config has no prior_volume block")
        seed = seeds.mix(config.master_seed, seeds.PURPOSE_PRIOR_VOLUME, 0, 0, 0)
        profile = volume_profile(
            model,
            truth,
            xq,
            seed,
            n_samples=pv.n_samples,
            grid_points=pv.n_points,
            grid_lo=pv.lo_factor,
            grid_hi=pv.hi_factor,
        )
        estimate = rlct_volume_fit(profile, model.d)
        print(
            f"volume fit: lam = {estimate.lam:.4f} +- {estimate.lam_se:.4f}, "
            f"multiplicity = {estimate.multiplicity}, flags = {list(estimate.flags)}"
        )
        if args.out:
            out = Path(args.out)
            out.mkdir(parents=True, exist_ok=True)
            payload = {
                "lam": estimate.lam,
                "lam_se": estimate.lam_se,
                "multiplicity": estimate.multiplicity,
                "flags": list(estimate.flags),
                "method": estimate.method,
                "n_samples": profile.n_samples,
                "seed": profile.seed,
                "profile": [
                    {"t": float(t), "fraction": float(f), "count": int(c)}
                    for t, f, c in zip(profile.ts, profile.fractions, profile.counts)
                ],
            }
            with (out / "volume.json").open("w") as fh:
                json.dump(payload, fh, indent=2, sort_keys=True)
                fh.write("\n")
            print(f"wrote {out / 'volume.json'}")
        return 0
    # --from-sweep: invert the scaled errors at the largest n, per beta
    sweep_config, cells = load_summary(args.from_sweep)
    if sweep_config != config:
        raise ConfigError("--config does not match the sweep directory's config")
    largest = max(config.n)
    printed = False
    for cell in cells:
        if cell.n == largest and cell.derived:
            print(
                f"beta={cell.beta:g} n={cell.n}: lam = {cell.derived['lam_inv']:.4f} +- {cell.derived['lam_inv_se']:.4f}, "
                f"nu = {cell.derived['nu_inv']:.4f} +- {cell.derived['nu_inv_se']:.4f}"
            )
            printed = True
    if not printed:
        raise ConfigError("sweep summary has no converged cells at the largest n")
    return 0


def _cmd_report(args) -> int:
    config, cells = load_summary(args.dir)
    print(report_text(config, cells))
    if args.plots:
        with Path(args.plots).open("w", newline="") as fh:
            csv.writer(fh).writerows(plot_rows(config, cells))
        print(f"wrote {args.plots}")
    checks = evaluate_checks(config, cells)
    failed = [c for c in checks if not c.passed]
    for check in checks:
        print(f"[{'PASS' if check.passed else 'FAIL'}] {check.name}: {check.detail}")
    if args.check and failed:
        print(f"{len(failed)} of {len(checks)} checks failed")
        return 3
    return 0


_COMMANDS = {
    "generate": _cmd_generate,
    "sample": _cmd_sample,
    "estimate": _cmd_estimate,
    "sweep": _cmd_sweep,
    "rlct": _cmd_rlct,
    "report": _cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except SingregError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception:  # pragma: no cover - defensive
        traceback.print_exc()
        return 2


if __name__ == "__main__":
    sys.exit(main())
