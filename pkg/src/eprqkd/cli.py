"""Configuration-driven command line: simulate sessions, sweep parameters,
and print eavesdropper bounds.

Scenario files are TOML with [session], [attack], optional [sweep], and
optional [output] tables; unknown keys are rejected.  Example::

    [session]
    n_slots = 100000
    squeeze_r = 1.0
    message_length = 10000
    subensemble_fraction = 0.5
    seed = 7
    amplification_A = 2.0

    [attack]
    variant = "beamsplitter_tap"
    transmissivity = 0.5
    channel = "bob"

    [sweep]
    parameter = "attack.transmissivity"
    values = [0.1, 0.3, 0.5, 0.7, 0.9]

    [output]
    directory = "runs"
    formats = ["json", "csv"]

Exit codes: 0 success, 2 scenario validation error, 3 runtime failure.
All randomness flows from the scenario seed; sweep point k runs with the
64-bit seed derived from SeedSequence([seed, k]), so points reproduce
independently.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .attacks import AttackSpec
from .criteria import write_record_csv
from .protocol import STATUS_OK, SessionConfig, SessionTranscript, run_session
from .security import bounds_report

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3

_SESSION_KEYS = {
    "n_slots": int,
    "squeeze_r": float,
    "message_length": int,
    "subensemble_fraction": float,
    "seed": int,
    "amplification_A": float,
    "alphabet_half_width": int,
    "bin_width": float,
    "min_bin_count": int,
    "bootstrap_resamples": int,
}
_SWEEP_PARAMETERS = {
    "attack.transmissivity",
    "attack.kappa_t",
    "session.squeeze_r",
    "session.n_slots",
    "session.amplification_A",
}


class ScenarioError(ValueError):
    """Scenario validation failure, anchored to the offending key path."""


@dataclasses.dataclass(frozen=True)
class Sweep:
    parameter: str
    values: List[float]


@dataclasses.dataclass(frozen=True)
class OutputSpec:
    directory: Path
    formats: List[str]


@dataclasses.dataclass(frozen=True)
class Scenario:
    name: str
    config: SessionConfig
    sweep: Optional[Sweep]
    output: OutputSpec


def _require_table(data: dict, key: str, path: str) -> dict:
    value = data.get(key)
    if not isinstance(value, dict):
        raise ScenarioError(f"[{path}]: missing or not a table")
    return value


def _session_config(table: dict, attack: AttackSpec) -> SessionConfig:
    unknown = sorted(set(table) - set(_SESSION_KEYS))
    if unknown:
        raise ScenarioError(f"[session]: unknown keys {unknown}")
    for key in ("n_slots", "squeeze_r", "message_length"):
        if key not in table:
            raise ScenarioError(f"[session].{key}: required")
    kwargs = {}
    for key, caster in _SESSION_KEYS.items():
        if key in table:
            try:
                kwargs[key] = caster(table[key])
            except (TypeError, ValueError) as exc:
                raise ScenarioError(f"[session].{key}: {exc}") from exc
    try:
        return SessionConfig(attack=attack, **kwargs)
    except ValueError as exc:
        raise ScenarioError(f"[session]: {exc}") from exc


def load_scenario(path: Path) -> Scenario:
    """Parse and schema-validate a scenario file."""
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ScenarioError(f"{path}: {exc.strerror}") from exc
    except tomllib.TOMLDecodeError as exc:
        # The decoder message carries line/column anchors.
        raise ScenarioError(f"{path}: {exc}") from exc

    unknown = sorted(set(data) - {"session", "attack", "sweep", "output"})
    if unknown:
        raise ScenarioError(f"unknown top-level tables {unknown}")

    try:
        attack = AttackSpec.from_dict(_require_table(data, "attack", "attack"))
    except ValueError as exc:
        raise ScenarioError(f"[attack]: {exc}") from exc
    config = _session_config(_require_table(data, "session", "session"), attack)

    sweep = None
    if "sweep" in data:
        table = data["sweep"]
        unknown = sorted(set(table) - {"parameter", "values"})
        if unknown:
            raise ScenarioError(f"[sweep]: unknown keys {unknown}")
        parameter = table.get("parameter")
        if parameter not in _SWEEP_PARAMETERS:
            raise ScenarioError(
                f"[sweep].parameter: must be one of {sorted(_SWEEP_PARAMETERS)}, got {parameter!r}"
            )
        values = table.get("values")
        if not isinstance(values, list) or not values:
            raise ScenarioError("[sweep].values: need a non-empty list")
        sweep = Sweep(parameter, [float(v) for v in values])

    out_table = data.get("output", {})
    unknown = sorted(set(out_table) - {"directory", "formats"})
    if unknown:
        raise ScenarioError(f"[output]: unknown keys {unknown}")
    formats = out_table.get("formats", ["json", "csv"])
    if not isinstance(formats, list) or not set(formats) <= {"json", "csv"} or not formats:
        raise ScenarioError("[output].formats: must be a non-empty subset of ['json', 'csv']")
    output = OutputSpec(Path(out_table.get("directory", ".")), list(formats))
    return Scenario(name=path.stem, config=config, sweep=sweep, output=output)


def _override_parameter(config: SessionConfig, parameter: str, value: float) -> SessionConfig:
    section, key = parameter.split(".", 1)
    if section == "session":
        caster = _SESSION_KEYS[key]
        return dataclasses.replace(config, **{key: caster(value)})
    attack = config.attack
    if key == "transmissivity":
        if attack.variant != "beamsplitter_tap":
            raise ScenarioError("[sweep].parameter: transmissivity needs a beamsplitter_tap attack")
        new_attack = AttackSpec.beamsplitter_tap(float(value), attack.channel)
    else:
        if attack.variant != "parametric_tap":
            raise ScenarioError("[sweep].parameter: kappa_t needs a parametric_tap attack")
        new_attack = AttackSpec.parametric_tap(float(value), attack.channel)
    return dataclasses.replace(config, attack=new_attack)


def _json_dump(data: dict, path: Path) -> None:
    path.write_text(json.dumps(data, sort_keys=True, indent=2) + "\n")


def _summarize(transcript: SessionTranscript) -> str:
    cfg = transcript.config
    lines = [
        f"slots={cfg.n_slots} r={cfg.squeeze_r} attack={cfg.attack.variant} seed={cfg.seed}"
    ]
    if transcript.status != STATUS_OK:
        lines.append(f"status: failed ({transcript.failure_reason})")
        return "\n".join(lines)
    crit = transcript.criterion
    ci = f" (95% CI {crit.ci_low:.4f}..{crit.ci_high:.4f})" if crit.ci_low is not None else ""
    lines.append(
        f"epr product = {crit.product:.4f}{ci}  criterion: "
        + ("satisfied" if crit.satisfied else "not satisfied")
    )
    sec = transcript.security
    lines.append(f"verdict: {sec.verdict}  (hypothesis: {sec.hypothesis}, regime: {sec.regime})")

    def fmt_bound(bound) -> str:
        return f"{bound:.4f}" if isinstance(bound, float) else repr(bound)

    lines.append(
        f"eve inference std bounds: x >= {fmt_bound(sec.eve_bound_x)}, "
        f"p >= {fmt_bound(sec.eve_bound_p)}"
    )
    err = transcript.encryption_results
    eve_rate = "n/a" if err.eve_error_rate is None else f"{err.eve_error_rate:.4f}"
    lines.append(f"bob error rate = {err.bob_error_rate:.4f}  eve error rate = {eve_rate}")
    return "\n".join(lines)


def _write_outputs(transcript: SessionTranscript, output: OutputSpec, stem: str) -> None:
    output.directory.mkdir(parents=True, exist_ok=True)
    if "json" in output.formats:
        _json_dump(transcript.to_json_dict(), output.directory / f"{stem}_transcript.json")
        if transcript.security is not None:
            _json_dump(transcript.security.to_json_dict(), output.directory / f"{stem}_security.json")
    if "csv" in output.formats and transcript.record is not None:
        write_record_csv(transcript.record, output.directory / f"{stem}_record.csv")


def _sweep_seed(base_seed: int, index: int) -> int:
    return int(np.random.SeedSequence([base_seed, index]).generate_state(1, np.uint64)[0])


def cmd_simulate(args: argparse.Namespace) -> int:
    scenario = load_scenario(Path(args.scenario))
    config = scenario.config
    if args.seed is not None:
        config = dataclasses.replace(config, seed=args.seed)
    if args.slots is not None:
        config = dataclasses.replace(config, n_slots=args.slots)
    output = scenario.output
    if args.out is not None:
        output = dataclasses.replace(output, directory=Path(args.out))
    if args.format is not None:
        output = dataclasses.replace(output, formats=[args.format])
    transcript = run_session(config)
    _write_outputs(transcript, output, scenario.name)
    print(_summarize(transcript))
    return EXIT_OK if transcript.status == STATUS_OK else EXIT_RUNTIME


_SWEEP_COLUMNS = [
    "parameter",
    "value",
    "status",
    "delta_inf_x",
    "delta_inf_p",
    "product",
    "eve_bound_x",
    "eve_bound_p",
    "eve_measured_x",
    "eve_measured_p",
    "bob_error_rate",
    "eve_error_rate",
]


def _sweep_row(parameter: str, value: float, transcript: SessionTranscript) -> List[str]:
    def fmt(v) -> str:
        return "" if v is None or isinstance(v, str) and not v else repr(v) if isinstance(v, float) else str(v)

    if transcript.status != STATUS_OK:
        return [parameter, repr(value), transcript.status] + [""] * (len(_SWEEP_COLUMNS) - 3)
    stats = transcript.epr_stats
    sec = transcript.security
    eve_m = transcript.eve_measured or {}
    err = transcript.encryption_results
    bound_x = sec.eve_bound_x if isinstance(sec.eve_bound_x, float) else ""
    bound_p = sec.eve_bound_p if isinstance(sec.eve_bound_p, float) else ""
    return [
        parameter,
        repr(float(value)),
        transcript.status,
        repr(stats.delta_inf_x),
        repr(stats.delta_inf_p),
        repr(stats.product),
        fmt(bound_x),
        fmt(bound_p),
        fmt(eve_m.get("x")),
        fmt(eve_m.get("p")),
        repr(err.bob_error_rate),
        fmt(err.eve_error_rate),
    ]


def cmd_sweep(args: argparse.Namespace) -> int:
    scenario = load_scenario(Path(args.scenario))
    if scenario.sweep is None:
        raise ScenarioError("[sweep]: section required for the sweep command")
    output = scenario.output
    if args.out is not None:
        output = dataclasses.replace(output, directory=Path(args.out))
    if getattr(args, "format", None) is not None:
        output = dataclasses.replace(output, formats=[args.format])
    base_seed = scenario.config.seed if args.seed is None else args.seed
    rows = []
    for index, value in enumerate(scenario.sweep.values):
        config = _override_parameter(scenario.config, scenario.sweep.parameter, value)
        config = dataclasses.replace(config, seed=_sweep_seed(base_seed, index))
        if args.slots is not None:
            config = dataclasses.replace(config, n_slots=args.slots)
        transcript = run_session(config)
        stem = f"{scenario.name}_p{index:03d}"
        if "json" in output.formats:
            output.directory.mkdir(parents=True, exist_ok=True)
            _json_dump(transcript.to_json_dict(), output.directory / f"{stem}_transcript.json")
        rows.append(_sweep_row(scenario.sweep.parameter, value, transcript))
        print(f"[{index}] {scenario.sweep.parameter}={value}: " + _summarize(transcript).splitlines()[1])
    output.directory.mkdir(parents=True, exist_ok=True)
    sweep_path = output.directory / f"{scenario.name}_sweep.csv"
    lines = [",".join(_SWEEP_COLUMNS)] + [",".join(row) for row in rows]
    sweep_path.write_text("\n".join(lines) + "\n")
    print(f"sweep table written to {sweep_path}")
    return EXIT_OK


def cmd_bounds(args: argparse.Namespace) -> int:
    report = bounds_report(sigma=args.sigma, delta=args.delta, dinf=args.dinf)
    if args.json:
        print(json.dumps(report, sort_keys=True, indent=2))
        return EXIT_OK
    if report["selector"] == "delta":
        flag = "" if report["demonstrative"] else "  [not demonstrative: delta >= 1]"
        print(f"eve conditional std >= {report['eve_min_std']:.6g}{flag}")
        return EXIT_OK
    if report["selector"] == "dinf":
        print(f"eve inference std >= {report['eve_min_std']:.6g}")
        return EXIT_OK
    print(f"sigma = {report['sigma']:.6g}  regime: {report['regime']}")
    print(f"hypothesis: {report['hypothesis']}")
    print(
        f"eve std floor = {report['eve_std_floor']:.6g}"
        f"  (conservative: {report['eve_std_floor_conservative']:.6g})"
    )
    print(
        f"gaussian eve error rate >= {report['eve_rate_gaussian']:.4f}"
        f"  (exact-bound value {report['eve_rate_gaussian_exact']:.4f})"
    )
    print(f"gaussian bob error rate = {report['bob_rate_gaussian']:.4f}")
    if report["gaussian_assumption_only"]:
        print("note: error floor relies on Gaussian eavesdropper conditionals")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="eprqkd",
        description="Continuous-variable QKD simulator and security analyzer",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run one session from a scenario file")
    sim.add_argument("scenario", help="path to the scenario TOML file")
    sim.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    sim.add_argument("--slots", type=int, default=None, help="override the slot count")
    sim.add_argument("--out", default=None, help="output directory")
    sim.add_argument("--format", choices=["json", "csv"], default=None, help="restrict output format")
    sim.set_defaults(func=cmd_simulate)

    swp = sub.add_parser("sweep", help="run the scenario's parameter sweep")
    swp.add_argument("scenario", help="path to the scenario TOML file")
    swp.add_argument("--seed", type=int, default=None, help="override the base seed")
    swp.add_argument("--slots", type=int, default=None, help="override the slot count")
    swp.add_argument("--out", default=None, help="output directory")
    swp.add_argument(
        "--format", choices=["json", "csv"], default=None,
        help="restrict per-point artifacts (the aggregate sweep CSV is always written)",
    )
    swp.set_defaults(func=cmd_sweep)

    bnd = sub.add_parser("bounds", help="print eavesdropper bounds for one selector")
    group = bnd.add_mutually_exclusive_group(required=True)
    group.add_argument("--sigma", type=float, help="measured conditional standard deviation")
    group.add_argument("--delta", type=float, help="measured narrowness half-width")
    group.add_argument("--dinf", type=float, help="measured inference standard deviation")
    bnd.add_argument("--json", action="store_true", help="machine-readable output")
    bnd.set_defaults(func=cmd_bounds)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
