"""Command-line surface: deterministic runs with reproducible manifests.

Subcommands:

  generate   draw a synthetic instance and write its matrices
  sample     draw an observation set from a stored target matrix
  init       spectral initializer: observation file -> factor files
  solve      one self-contained solver run -> trace CSV + factor files
  phase      sample-complexity sweep -> success-rate CSV
  converge   convergence study -> long-format trace CSV
  check      run the built-in oracle suite

Every run resolves its full configuration (defaults filled), executes it,
and writes a manifest next to its outputs; re-running a command from its
manifest (``--manifest``) reproduces the result files byte for byte.
Exit codes: 0 success, 1 usage or input-format error, 2 numeric failure.
"""

import argparse
import dataclasses
import math
import sys

from . import __version__
from .experiments import (
    ConvergenceConfig,
    DatasetSpec,
    PhaseConfig,
    run_convergence_study,
    run_phase_transition,
)
from .fileio import (
    FileFormatError,
    file_digest,
    read_manifest,
    read_matrix,
    read_observations,
    write_manifest,
    write_matrix,
    write_observations,
    write_results,
)
from .initialization import RankDeficiencyError, initialize, initialize_with_spectrum
from .linalg import ConvergenceError
from .problem import (
    Features,
    ProblemInstance,
    bernoulli_sample,
    derived_seeds,
    fixed_sample,
    generate_instance,
    partition_observations,
)
from .selfcheck import run_checks
from .solvers import SOLVERS, DivergenceError, ProjectionError, SvrgConfig

__all__ = ["main", "cli_main"]

_SOLVER_DEFAULTS = SvrgConfig()

_DEFAULTS = {
    "d1": 200, "d2": 200, "n1": 20, "n2": 20, "rank": 5,
    "cond": 1.5, "seed": 0,
    "sample_rate": None, "samples": None,
    "subsets": None,
    "algo": "lrsvrg",
    "tau": None,
    "tau_mult": _SOLVER_DEFAULTS.tau_mult,
    "epochs": 2000,
    "inner": None,
    "epoch_output": "random",
    "projection": "off",
    "mu0": _SOLVER_DEFAULTS.mu0,
    "tol": 1e-3,
    "pass_budget": None,
    "trials": 10,
    "init_full_omega": False,
    "datasets": "200,20,5;200,40,3;500,50,3;500,25,4",
    "multiples": "1,2,3,4,5,7,10",
    "rates": "0.2,0.3,0.4",
    "algos": "lrsvrg,gd,am",
    "dataset": "200,20,5",
    "grid_step": 1,
    "instance": None,
    "obs": None,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse with usage failures mapped to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add(parser, *names, **kwargs):
    kwargs.setdefault("default", None)
    parser.add_argument(*names, **kwargs)


def _instance_flags(parser):
    _add(parser, "--d1", type=int, help="target rows")
    _add(parser, "--d2", type=int, help="target columns")
    _add(parser, "--n1", type=int, help="left feature dimension")
    _add(parser, "--n2", type=int, help="right feature dimension")
    _add(parser, "--rank", type=int, help="core rank r")
    _add(parser, "--cond", type=float, help="condition number of the core spectrum")


def _solver_flags(parser):
    _add(parser, "--subsets", type=int, help="finite-sum subset count B (default max(n1, n2))")
    _add(parser, "--tau", type=float, help="absolute step size (overrides --tau-mult)")
    _add(parser, "--tau-mult", dest="tau_mult", type=float,
         help="multiplier on the derived conservative step size")
    _add(parser, "--epochs", type=int, help="outer epoch cap")
    _add(parser, "--inner", type=int, help="inner steps m per epoch (default max(B, 10 r))")
    _add(parser, "--algo", choices=sorted(SOLVERS), help="solver to run")
    _add(parser, "--epoch-output", dest="epoch_output", choices=["random", "last"],
         help="epoch iterate: uniformly random inner iterate or the last one")
    _add(parser, "--projection", choices=["off", "rescale"],
         help="constraint handling: monitor only, or rescale violating rows")
    _add(parser, "--mu0", type=float, help="constraint radius parameter")
    _add(parser, "--tol", type=float, help="relative-error stopping threshold")
    _add(parser, "--pass-budget", dest="pass_budget", type=float,
         help="effective-pass budget (default unlimited)")
    _add(parser, "--init-full-omega", dest="init_full_omega", action="store_true",
         help="initializer uses every observation instead of half the subsets")


def _build_parser():
    parser = _Parser(prog="svrg-imc", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="draw a synthetic instance, write matrix files")
    _instance_flags(p)
    _add(p, "--seed", type=int)
    p.add_argument("--out", required=False, help="output path prefix")
    _add(p, "--manifest", help="re-run from a stored manifest")

    p = sub.add_parser("sample", help="draw an observation set from a target matrix file")
    _add(p, "--instance", help="prefix of the generated matrix files")
    _add(p, "--sample-rate", dest="sample_rate", type=float, help="Bernoulli rate in (0, 1]")
    _add(p, "--samples", type=int, help="exact sample count (instead of --sample-rate)")
    _add(p, "--seed", type=int)
    p.add_argument("--out", required=False)
    _add(p, "--manifest")

    p = sub.add_parser("init", help="spectral initializer: observations -> factor files")
    _add(p, "--instance", help="prefix of the generated matrix files")
    _add(p, "--obs", help="observation file")
    _add(p, "--rank", type=int)
    _add(p, "--subsets", type=int)
    _add(p, "--seed", type=int)
    _add(p, "--init-full-omega", dest="init_full_omega", action="store_true")
    p.add_argument("--out", required=False)
    _add(p, "--manifest")

    p = sub.add_parser("solve", help="one self-contained solver run")
    _instance_flags(p)
    _add(p, "--seed", type=int)
    _add(p, "--sample-rate", dest="sample_rate", type=float)
    _add(p, "--samples", type=int)
    _solver_flags(p)
    p.add_argument("--out", required=False)
    _add(p, "--manifest")

    p = sub.add_parser("phase", help="sample-complexity sweep")
    _add(p, "--datasets", help="semicolon-separated d,n,r triples")
    _add(p, "--multiples", help="comma-separated multiples of n r ln n")
    _add(p, "--trials", type=int)
    _add(p, "--cond", type=float)
    _add(p, "--seed", type=int)
    _solver_flags(p)
    p.add_argument("--out", required=False, help="output CSV path")
    _add(p, "--manifest")

    p = sub.add_parser("converge", help="convergence study at fixed sample rates")
    _add(p, "--dataset", help="one d,n,r triple")
    _add(p, "--rates", help="comma-separated Bernoulli rates")
    _add(p, "--algos", help="comma-separated solver names")
    _add(p, "--trials", type=int)
    _add(p, "--cond", type=float)
    _add(p, "--seed", type=int)
    _add(p, "--grid-step", dest="grid_step", type=int, help="pass-grid spacing")
    _solver_flags(p)
    p.add_argument("--out", required=False)
    _add(p, "--manifest")

    p = sub.add_parser("check", help="run the built-in oracle suite")
    _add(p, "--seed", type=int)

    return parser


def _resolve(args, keys):
    """Fill unset flags with defaults; reject stray flags next to --manifest."""
    supplied = {k: getattr(args, k) for k in keys if getattr(args, k, None) is not None}
    if getattr(args, "manifest", None):
        if supplied:
            raise UsageError(
                f"--manifest replaces configuration flags; remove {sorted(supplied)}"
            )
        manifest = read_manifest(args.manifest)
        if manifest.get("command") != args.command:
            raise UsageError(
                f"manifest was written by {manifest.get('command')!r}, not {args.command!r}"
            )
        return dict(manifest["config"])
    config = {k: _DEFAULTS[k] for k in keys}
    config.update(supplied)
    return config


def _require_out(args):
    if not args.out:
        raise UsageError("--out is required")
    return args.out


def _svrg_config(config, seed):
    return SvrgConfig(
        tau=config["tau"],
        tau_mult=config["tau_mult"],
        outer_epochs=config["epochs"],
        inner_steps=config["inner"],
        subsets=config["subsets"],
        epoch_output=config["epoch_output"],
        projection=config["projection"],
        mu0=config["mu0"],
        seed=seed,
        stop_tol=config["tol"],
        max_effective_passes=(
            math.inf if config["pass_budget"] is None else config["pass_budget"]
        ),
    )


def _parse_dataset(text):
    parts = text.split(",")
    if len(parts) != 3:
        raise UsageError(f"dataset must be d,n,r; got {text!r}")
    return DatasetSpec(int(parts[0]), int(parts[1]), int(parts[2]))


def _parse_datasets(text):
    return tuple(_parse_dataset(chunk) for chunk in text.split(";") if chunk)


def _sampler_from(config):
    rate, count = config["sample_rate"], config["samples"]
    if rate is not None and count is not None:
        raise UsageError("give either --sample-rate or --samples, not both")
    if rate is None and count is None:
        rate = 0.3
    if count is not None:
        return lambda truth, seed: fixed_sample(truth, count, seed)
    return lambda truth, seed: bernoulli_sample(truth, rate, seed)


def _cmd_generate(args):
    config = _resolve(args, ["d1", "d2", "n1", "n2", "rank", "cond", "seed"])
    out = _require_out(args)
    truth = generate_instance(
        config["d1"], config["d2"], config["n1"], config["n2"],
        config["rank"], config["cond"], config["seed"],
    )
    write_matrix(truth.x_left, f"{out}.x_left.txt")
    write_matrix(truth.x_right, f"{out}.x_right.txt")
    write_matrix(truth.m_star, f"{out}.m_star.txt")
    write_matrix(truth.l_star, f"{out}.l_star.txt")
    _emit_manifest(args.command, config, out)
    return 0


def _cmd_sample(args):
    config = _resolve(args, ["instance", "sample_rate", "samples", "seed"])
    out = _require_out(args)
    if not config["instance"]:
        raise UsageError("--instance is required")
    target_path = f"{config['instance']}.l_star.txt"
    l_star = read_matrix(target_path)
    sampler = _sampler_from(config)
    omega = sampler(l_star, config["seed"])
    write_observations(omega, f"{out}.obs.txt")
    _emit_manifest(args.command, config, out, inputs=[target_path])
    return 0


def _cmd_init(args):
    config = _resolve(args, ["instance", "obs", "rank", "subsets", "seed", "init_full_omega"])
    out = _require_out(args)
    if not config["instance"] or not config["obs"]:
        raise UsageError("--instance and --obs are required")
    x_left = read_matrix(f"{config['instance']}.x_left.txt")
    x_right = read_matrix(f"{config['instance']}.x_right.txt")
    omega = read_observations(config["obs"])
    rank = config["rank"] if config["rank"] is not None else _DEFAULTS["rank"]
    subsets = config["subsets"] or max(x_left.shape[1], x_right.shape[1])
    part_seed, init_seed = derived_seeds(config["seed"], count=2)
    part = partition_observations(omega, min(subsets, omega.size), part_seed)
    f = initialize(
        omega, part, Features(x_left, x_right), rank, init_seed,
        use_full_omega=config["init_full_omega"],
    )
    write_matrix(f.u, f"{out}.u.txt")
    write_matrix(f.v, f"{out}.v.txt")
    _emit_manifest(
        args.command, config, out,
        inputs=[f"{config['instance']}.x_left.txt",
                f"{config['instance']}.x_right.txt", config["obs"]],
    )
    return 0


_SOLVE_KEYS = [
    "d1", "d2", "n1", "n2", "rank", "cond", "seed", "sample_rate", "samples",
    "subsets", "algo", "tau", "tau_mult", "epochs", "inner", "epoch_output",
    "projection", "mu0", "tol", "pass_budget", "init_full_omega",
]


def _cmd_solve(args):
    config = _resolve(args, _SOLVE_KEYS)
    out = _require_out(args)
    seeds = derived_seeds(config["seed"], count=5)
    truth = generate_instance(
        config["d1"], config["d2"], config["n1"], config["n2"],
        config["rank"], config["cond"], seeds[0],
    )
    omega = _sampler_from(config)(truth, seeds[1])
    subsets = config["subsets"] or max(config["n1"], config["n2"])
    part = partition_observations(omega, min(subsets, omega.size), seeds[2])
    instance = ProblemInstance(truth=truth, observations=omega, partition=part)
    init, sigma0 = initialize_with_spectrum(
        instance.observations, instance.partition, instance.truth.features,
        config["rank"], seeds[3], use_full_omega=config["init_full_omega"],
    )
    solver_cfg = _svrg_config(config, seeds[4])
    solver_cfg = dataclasses.replace(
        solver_cfg,
        sigma1_estimate=float(sigma0[0]),
        sigma_r_estimate=float(sigma0[-1]),
    )
    report = SOLVERS[config["algo"]](instance, init, solver_cfg)
    rows = [rec._asdict() for rec in report.records]
    write_results(rows, f"{out}.trace.csv", "solve")
    write_matrix(report.final.u, f"{out}.u.txt")
    write_matrix(report.final.v, f"{out}.v.txt")
    _emit_manifest(args.command, config, out)
    print(
        f"{config['algo']}: epochs={report.records[-1].epoch} "
        f"passes={report.records[-1].passes:.1f} "
        f"rel_err={report.final_rel_err:.3e} converged={report.converged}"
    )
    return 0


_PHASE_KEYS = [
    "datasets", "multiples", "trials", "cond", "seed", "subsets", "tau",
    "tau_mult", "epochs", "inner", "epoch_output", "projection", "mu0",
    "tol", "pass_budget", "init_full_omega",
]


def _cmd_phase(args):
    config = _resolve(args, _PHASE_KEYS)
    out = _require_out(args)
    cfg = PhaseConfig(
        datasets=_parse_datasets(config["datasets"]),
        multiples=tuple(float(x) for x in config["multiples"].split(",")),
        trials=config["trials"],
        success_threshold=config["tol"],
        epoch_cap=config["epochs"],
        base_seed=config["seed"],
        condition_target=config["cond"],
        init_full_omega=config["init_full_omega"],
        solver=_svrg_config(config, 0),
    )
    rows = run_phase_transition(cfg)
    write_results(rows, out, "phase")
    _emit_manifest(args.command, config, out)
    return 0


_CONVERGE_KEYS = [
    "dataset", "rates", "algos", "trials", "cond", "seed", "grid_step",
    "subsets", "tau", "tau_mult", "epochs", "inner", "epoch_output",
    "projection", "mu0", "tol", "pass_budget", "init_full_omega",
]


def _cmd_converge(args):
    config = _resolve(args, _CONVERGE_KEYS)
    out = _require_out(args)
    cfg = ConvergenceConfig(
        dataset=_parse_dataset(config["dataset"]),
        rates=tuple(float(x) for x in config["rates"].split(",")),
        algorithms=tuple(config["algos"].split(",")),
        pass_budget=(
            math.inf if config["pass_budget"] is None else config["pass_budget"]
        ),
        trials=config["trials"],
        base_seed=config["seed"],
        condition_target=config["cond"],
        stop_tol=config["tol"],
        epoch_cap=config["epochs"],
        grid_step=config["grid_step"],
        init_full_omega=config["init_full_omega"],
        solver=_svrg_config(config, 0),
    )
    if not math.isfinite(cfg.pass_budget):
        raise UsageError("converge requires --pass-budget")
    rows = run_convergence_study(cfg)
    write_results(rows, out, "converge")
    _emit_manifest(args.command, config, out)
    return 0


def _cmd_check(args):
    seed = args.seed if args.seed is not None else 0
    results = run_checks(seed)
    for res in results:
        print(f"{res.name}: {'ok' if res.ok else 'FAIL'} ({res.detail})")
    return 0 if all(res.ok for res in results) else 2


def _emit_manifest(command, config, out, inputs=None):
    manifest = {
        "command": command,
        "version": __version__,
        "config": config,
        "inputs": {path: file_digest(path) for path in (inputs or [])},
    }
    write_manifest(manifest, f"{out}.manifest.json")


_HANDLERS = {
    "generate": _cmd_generate,
    "sample": _cmd_sample,
    "init": _cmd_init,
    "solve": _cmd_solve,
    "phase": _cmd_phase,
    "converge": _cmd_converge,
    "check": _cmd_check,
}


def cli_main(argv=None):
    """Entry point; returns the process exit code."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    try:
        return _HANDLERS[args.command](args)
    except UsageError as exc:
        print(f"svrg-imc {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except (FileFormatError, ValueError, OSError) as exc:
        print(f"svrg-imc {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except (DivergenceError, ConvergenceError, RankDeficiencyError, ProjectionError) as exc:
        print(f"svrg-imc {args.command}: numeric failure: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
