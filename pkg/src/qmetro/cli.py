"""Command-line front end: ``qmetro {list,scenario,study,sweep}``.

Every emitted file starts with ``# key=value`` metadata lines recording the
full configuration. Passing such a file back with ``--config`` reruns the
same computation and reproduces the file.
"""
from __future__ import annotations

import argparse
import io
import json
import math
import sys
from typing import Sequence

import numpy as np

from . import __version__
from .estimation import DEFAULT_SUPPORT, bayes_from_counts, derive_seed
from .models import draw_outcomes
from .scenarios import INTEGER_PARAMS, SCENARIOS, mzi_probabilities, run_estimation_demo, run_scenario

EXIT_OK, EXIT_TOLERANCE, EXIT_USAGE = 0, 1, 2
FORMATS = ("table", "csv", "json")
STUDY_DEFAULTS = {"phi": math.pi / 2, "M_list": (10, 30, 100, 300, 1000, 3000), "R": 100,
                  "estimator": "bayes"}
DEFAULT_SEED = 1
IGNORED_CONFIG_KEYS = {"toolkit", "version", "fisher"}


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- formatting


def fmt_number(x) -> str:
    """15 significant digits; ``inf``/``nan`` spelled out; integers kept integral."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".15g")


def fmt_meta(value) -> str:
    """Configuration values use the shortest exact (round-trip) representation."""
    if isinstance(value, (list, tuple)):
        return ",".join(fmt_meta(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def json_number(x):
    s = fmt_number(x)
    if s in ("inf", "-inf", "nan"):
        return s
    return json.loads(s)


def render(meta: dict, columns: Sequence[str], rows: Sequence[Sequence], fmt: str) -> str:
    if fmt == "json":
        results = [{c: (json_number(v) if not isinstance(v, str) else v) for c, v in zip(columns, row)}
                   for row in rows]
        return json.dumps({"meta": {k: fmt_meta(v) for k, v in meta.items()}, "results": results},
                          indent=2) + "\n"
    cells = [[v if isinstance(v, str) else fmt_number(v) for v in row] for row in rows]
    buf = io.StringIO()
    for k, v in meta.items():
        buf.write(f"# {k}={fmt_meta(v)}\n")
    if fmt == "csv":
        buf.write(",".join(columns) + "\n")
        for row in cells:
            buf.write(",".join(row) + "\n")
        return buf.getvalue()
    widths = [max(len(c), *(len(r[i]) for r in cells)) if cells else len(c) for i, c in enumerate(columns)]
    buf.write("  ".join(c.ljust(w) for c, w in zip(columns, widths)).rstrip() + "\n")
    for row in cells:
        buf.write("  ".join(v.ljust(w) for v, w in zip(row, widths)).rstrip() + "\n")
    return buf.getvalue()


# ---------------------------------------------------------------- configuration


def read_config(path: str) -> dict[str, str]:
    """Flat ``key=value`` lines; a leading ``#`` is allowed so emitted headers can be reused."""
    out: dict[str, str] = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    for line in lines:
        text = line.strip()
        had_hash = text.startswith("#")
        text = text.lstrip("#").strip()
        if not text or "=" not in text:
            if had_hash or not text:
                continue
            break  # first data row of an emitted file
        key, value = text.split("=", 1)
        key = key.strip()
        if key not in IGNORED_CONFIG_KEYS:
            out[key] = value.strip()
    return out


def parse_assignments(items: Sequence[str]) -> dict[str, str]:
    out = {}
    for item in items:
        if "=" not in item:
            raise UsageError(f"expected name=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _to_float(name: str, value) -> float:
    try:
        return float(value)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"parameter {name} needs a number, got {value!r}") from exc


def _to_int(name: str, value) -> int:
    f = _to_float(name, value)
    if f != int(f):
        raise UsageError(f"parameter {name} needs an integer, got {value!r}")
    return int(f)


def _common(args, config: dict) -> tuple[str, int | None, int, str]:
    scenario = args.scenario or config.pop("scenario", None)
    config.pop("scenario", None)
    if scenario is None:
        raise UsageError("a scenario name is required")
    if scenario not in SCENARIOS:
        raise UsageError(f"unknown scenario {scenario!r}; try 'list'")
    n_max = args.nmax if args.nmax is not None else config.pop("n_max", None)
    config.pop("n_max", None)
    seed = args.seed if args.seed is not None else config.pop("seed", DEFAULT_SEED)
    config.pop("seed", None)
    fmt = args.format or config.pop("format", "table")
    config.pop("format", None)
    if fmt not in FORMATS:
        raise UsageError(f"unknown format {fmt!r}")
    return scenario, (None if n_max in (None, "None") else _to_int("n_max", n_max)), _to_int("seed", seed), fmt


def _scenario_params(scenario: str, raw: dict) -> dict[str, float]:
    known = SCENARIOS[scenario].params
    unknown = set(raw) - set(known)
    if unknown:
        raise UsageError(f"unknown parameters for {scenario}: {', '.join(sorted(unknown))}")
    return {k: (_to_int(k, v) if k in INTEGER_PARAMS else _to_float(k, v)) for k, v in raw.items()}


def _load(args) -> dict:
    config = read_config(args.config) if args.config else {}
    command = config.pop("command", None)
    if command is not None and command != args.command:
        raise UsageError(f"config was written by '{command}', not '{args.command}'")
    return config


# ---------------------------------------------------------------- commands


def _meta(command: str, scenario: str, seed: int, n_max, fmt: str, extra: dict) -> dict:
    meta = {"toolkit": "qmetro", "version": __version__, "command": command, "scenario": scenario,
            "seed": seed}
    if n_max is not None:
        meta["n_max"] = n_max
    meta.update(extra)
    meta["format"] = fmt
    return meta


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_list(args) -> int:
    rows = [(name, " ".join(f"{k}={fmt_number(v)}" for k, v in spec.params.items()),
             "yes" if spec.discrete else "no")
            for name, spec in SCENARIOS.items()]
    _emit(render({}, ("scenario", "defaults", "study"), rows, args.format or "table"), args.out)
    return EXIT_OK


def cmd_scenario(args) -> int:
    config = _load(args)
    scenario, n_max, seed, fmt = _common(args, config)
    params = _scenario_params(scenario, {**config, **parse_assignments(args.params)})
    report = run_scenario(scenario, params, n_max=n_max, seed=seed)
    full = {**SCENARIOS[scenario].params, **params}
    meta = _meta("scenario", scenario, seed, n_max, fmt, full)
    rows = []
    for key, value in report.computed.items():
        t = report.targets.get(key)
        if t is None:
            rows.append((key, value, "", "", "", "", "exploratory"))
        else:
            rows.append((key, value, t.value, t.tol, t.relation, t.delta(value),
                         "pass" if t.holds(value) else "FAIL"))
    _emit(render(meta, ("quantity", "computed", "target", "tolerance", "relation", "delta", "status"),
                 rows, fmt), args.out)
    for key, note in report.notes.items():
        if isinstance(note, str):
            print(f"note: {key}: {note}", file=sys.stderr)
    return EXIT_OK if report.passed else EXIT_TOLERANCE


def _study_config(config: dict, assignments: dict) -> dict:
    merged = {**config, **assignments}
    unknown = set(merged) - set(STUDY_DEFAULTS) - {"posterior"}
    if unknown:
        raise UsageError(f"unknown study settings: {', '.join(sorted(unknown))}")
    out = dict(STUDY_DEFAULTS)
    if "phi" in merged:
        out["phi"] = _to_float("phi", merged["phi"])
    if "M_list" in merged:
        ms = merged["M_list"]
        out["M_list"] = tuple(_to_int("M_list", m) for m in (ms.split(",") if isinstance(ms, str) else ms))
        if not out["M_list"] or min(out["M_list"]) < 1:
            raise UsageError("M_list needs positive sample sizes")
    if "R" in merged:
        out["R"] = _to_int("R", merged["R"])
        if out["R"] < 50:
            raise UsageError("R must be at least 50")
    if "estimator" in merged:
        if merged["estimator"] not in ("bayes", "mle"):
            raise UsageError("estimator must be 'bayes' or 'mle'")
        out["estimator"] = merged["estimator"]
    if merged.get("posterior") not in (None, "", "None"):
        out["posterior"] = _to_int("posterior", merged["posterior"])
    return out


def cmd_study(args) -> int:
    config = _load(args)
    scenario, n_max, seed, fmt = _common(args, config)
    if not SCENARIOS[scenario].discrete:
        raise UsageError(f"scenario {scenario!r} has no discrete outcome model")
    assignments = parse_assignments(args.params)
    if args.posterior is not None:
        assignments["posterior"] = str(args.posterior)
    settings = _study_config(config, assignments)
    meta = _meta("study", scenario, seed, n_max, fmt, settings)
    if "posterior" in settings:
        m = settings["posterior"]
        model = mzi_probabilities()
        x = draw_outcomes(model.probabilities([settings["phi"]]), m, derive_seed(seed, m, 0))
        res = bayes_from_counts(np.bincount(x, minlength=2), model, DEFAULT_SUPPORT)
        rows = list(zip(res.posterior.grid, res.posterior.density))
        _emit(render(meta, ("phi", "density"), rows, fmt), args.out)
        return EXIT_OK
    study = run_estimation_demo(scenario, phi=settings["phi"], M_list=settings["M_list"],
                                R=settings["R"], seed=seed, estimator=settings["estimator"])
    meta["fisher"] = fmt_number(study.fisher)
    rows = [(r.M, r.mean, r.variance, r.crb, r.ratio, r.p_value) for r in study.rows]
    _emit(render(meta, ("M", "mean", "variance", "crb", "ratio", "p_value"), rows, fmt), args.out)
    return EXIT_OK


def cmd_sweep(args) -> int:
    config = _load(args)
    scenario, n_max, seed, fmt = _common(args, config)
    name = args.sweep or config.pop("sweep", None)
    config.pop("sweep", None)
    lo = args.range[0] if args.range else config.pop("lo", None)
    hi = args.range[1] if args.range else config.pop("hi", None)
    steps = args.steps if args.steps is not None else config.pop("steps", None)
    for k in ("lo", "hi", "steps"):
        config.pop(k, None)
    if name is None or lo is None or hi is None or steps is None:
        raise UsageError("sweep needs --sweep NAME --range LO HI --steps N")
    lo, hi, steps = _to_float("lo", lo), _to_float("hi", hi), _to_int("steps", steps)
    if steps < 2 or not hi > lo:
        raise UsageError("sweep range must have hi > lo and at least two steps")
    if name not in SCENARIOS[scenario].params:
        raise UsageError(f"{scenario} has no parameter {name!r}")
    params = _scenario_params(scenario, {**config, **parse_assignments(args.params)})
    if name in params:
        raise UsageError(f"{name} is swept and cannot also be fixed")
    grid = np.linspace(lo, hi, steps)
    fixed = {**SCENARIOS[scenario].params, **params}
    fixed.pop(name)
    meta = _meta("sweep", scenario, seed, n_max, fmt, {**fixed, "sweep": name, "lo": lo, "hi": hi,
                                                      "steps": steps})
    columns, rows, all_ok = None, [], True
    for value in grid:
        report = run_scenario(scenario, {**params, name: float(value)}, n_max=n_max, seed=seed)
        all_ok &= report.passed
        if columns is None:
            columns = [name, *report.computed, "passed"]
        rows.append([float(value), *report.computed.values(), report.passed])
    _emit(render(meta, columns, rows, fmt), args.out)
    return EXIT_OK if all_ok else EXIT_TOLERANCE


# ---------------------------------------------------------------- entry point


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help=f"RNG seed (default {DEFAULT_SEED})")
    common.add_argument("--nmax", type=int, help="photon-number cutoff per mode")
    common.add_argument("--format", choices=FORMATS, help="output format (default table)")
    common.add_argument("--out", help="write output to this path instead of stdout")
    common.add_argument("--config", help="key=value file, e.g. the header of an earlier output")

    parser = _Parser(prog="qmetro", description="Fisher information, quantum Cramer-Rao bounds "
                     "and estimator studies for interferometric phase estimation.")
    parser.add_argument("--version", action="version", version=f"qmetro {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    sub.add_parser("list", parents=[common], help="list scenarios and their parameters")

    p = sub.add_parser("scenario", parents=[common], help="evaluate one scenario against its targets")
    p.add_argument("scenario", nargs="?")
    p.add_argument("params", nargs="*", metavar="name=value")

    p = sub.add_parser("study", parents=[common], help="Monte-Carlo estimator variance versus the CRB")
    p.add_argument("scenario", nargs="?")
    p.add_argument("params", nargs="*", metavar="name=value",
                   help="phi, M_list (comma separated), R, estimator (bayes or mle)")
    p.add_argument("--posterior", type=int, metavar="M",
                   help="emit the posterior density of one size-M sample instead of the table")

    p = sub.add_parser("sweep", parents=[common], help="evaluate a scenario along one parameter")
    p.add_argument("scenario", nargs="?")
    p.add_argument("params", nargs="*", metavar="name=value")
    p.add_argument("--sweep", metavar="NAME", help="parameter to sweep")
    p.add_argument("--range", nargs=2, type=float, metavar=("LO", "HI"))
    p.add_argument("--steps", type=int)
    return parser


COMMANDS = {"list": cmd_list, "scenario": cmd_scenario, "study": cmd_study, "sweep": cmd_sweep}


def _split_positionals(args) -> None:
    """``scenario`` is optional when a config supplies it; a leading ``k=v`` is a parameter."""
    if getattr(args, "scenario", None) and "=" in args.scenario:
        args.params = [args.scenario, *args.params]
        args.scenario = None


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        _split_positionals(args)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"qmetro: error: {exc}", file=sys.stderr)
        build_parser().print_usage(sys.stderr)
        return EXIT_USAGE
    except (KeyError, ValueError) as exc:
        print(f"qmetro: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BrokenPipeError:
        sys.stderr.close()
        return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
