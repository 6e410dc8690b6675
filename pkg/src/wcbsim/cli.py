"""Command-line entry point.

Subcommands:
  run           execute a scenario (preset name or .ini file) for one or
                more seeds and write summary / trajectory / trace CSVs
  design        print the state-feedback gain, closed-loop eigenvalues,
                and decay rate as CSV
  energy-model  emit the analytic duty-cycle sweeps (event-epoch frequency
                and epoch-duration tables)
  validate      structural checks on trigger parameters and slot plans

Exit codes: 0 success, 2 scenario/configuration error, 3 numeric
divergence, 4 controller synthesis failure.
"""

from __future__ import annotations

import argparse
import configparser
import io
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import control, harness, protocol, triggers
from .harness import PRESET_NAMES, Scenario, ScenarioError, scenario_preset
from .plant import NonFiniteState
from .pools import DEFAULT_POOLS
from .profiles import EPOCH_SWEEP_EVENTS, TESTBEDS, make_epoch_config
from .protocol import WCB_E, WCB_P

EXIT_OK = 0
EXIT_SCENARIO = 2
EXIT_DIVERGED = 3
EXIT_DESIGN = 4

_VARIANT_NAMES = {"etc": WCB_E, "periodic": WCB_P}
_VARIANT_LABELS = {v: k for k, v in _VARIANT_NAMES.items()}

# (section, key) -> (scenario field, parse, serialize)
_BOOL = {"true": True, "false": False, "1": True, "0": False, "yes": True, "no": False}


def _parse_disturbances(text: str):
    out = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        t, pool, flow = item.split(":")
        out.append((float(t), int(pool) - 1, float(flow)))
    return tuple(out)


def _fmt_disturbances(steps):
    return ", ".join(f"{t:g}:{pool + 1}:{flow:g}" for t, pool, flow in steps)


_SCHEMA = {
    ("run", "testbed"): ("testbed", str, str),
    ("run", "variant"): ("variant", lambda s: _VARIANT_NAMES[s], lambda v: _VARIANT_LABELS[v]),
    ("run", "duration_epochs"): ("duration_epochs", int, str),
    ("run", "t_epoch_s"): ("t_epoch_s", float, lambda v: f"{v:g}"),
    ("run", "seed"): ("seed", int, str),
    ("run", "traj_every"): ("traj_every", int, str),
    ("plant", "dt_min"): ("dt_min", float, lambda v: f"{v:g}"),
    ("plant", "initial_level_m"): ("initial_level_m", float, lambda v: f"{v:g}"),
    ("plant", "delay_approx"): ("delay_approx", str, str),
    ("plant", "disturbances"): ("disturbances", _parse_disturbances, _fmt_disturbances),
    ("noise", "level_std_m"): ("level_std_m", float, lambda v: f"{v:g}"),
    ("noise", "flow_std"): ("flow_std", float, lambda v: f"{v:g}"),
    ("noise", "flow_noise_mode"): ("flow_noise_mode", str, str),
    ("noise", "x3_mode"): ("x3_mode", str, str),
    ("trigger", "scale"): ("trigger_scale",
                           lambda s: tuple(float(v) for v in s.split(",")),
                           lambda v: ", ".join(f"{x:g}" for x in v)),
    ("network", "n_event_slots"): ("n_event_slots", int, str),
    ("network", "max_recovery_pairs"): ("max_recovery_pairs", int, str),
    ("network", "n_ctrl_slots"): ("n_ctrl_slots", int, str),
    ("network", "fp_rate"): ("fp_rate", float, lambda v: f"{v:g}"),
    ("network", "force_trigger"): ("force_trigger", lambda s: _BOOL[s.lower()],
                                   lambda v: "true" if v else "false"),
}
_EXTRA_KEYS = {("trigger", "params_file")}


def scenario_to_ini(scenario: Scenario) -> str:
    cp = configparser.ConfigParser()
    for (section, key), (field_name, _, fmt) in _SCHEMA.items():
        if not cp.has_section(section):
            cp.add_section(section)
        cp.set(section, key, fmt(getattr(scenario, field_name)))
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def scenario_from_ini(text: str) -> Scenario:
    cp = configparser.ConfigParser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ScenarioError(f"cannot parse scenario file: {exc}")
    fields = {}
    for section in cp.sections():
        for key, value in cp.items(section):
            if (section, key) in _EXTRA_KEYS:
                continue
            if (section, key) not in _SCHEMA:
                raise ScenarioError(f"unknown scenario key [{section}] {key}")
            field_name, parse, _ = _SCHEMA[(section, key)]
            try:
                fields[field_name] = parse(value)
            except (ValueError, KeyError) as exc:
                raise ScenarioError(f"bad value for [{section}] {key}: {value!r} ({exc})")
    if cp.has_option("trigger", "params_file"):
        fields["trigger_params"] = triggers.load_params(cp.get("trigger", "params_file"))
    scenario = Scenario(**fields)
    scenario.validate()
    return scenario


def load_scenario(spec: str, overrides: list[str]) -> Scenario:
    path = Path(spec)
    if path.is_file():
        scenario = scenario_from_ini(path.read_text())
    elif spec in PRESET_NAMES:
        scenario = scenario_preset(spec)
    else:
        raise ScenarioError(
            f"{spec!r} is neither a scenario file nor one of the presets "
            f"({', '.join(PRESET_NAMES)})")
    if overrides:
        cp = configparser.ConfigParser()
        cp.read_string(scenario_to_ini(scenario))
        for item in overrides:
            try:
                key, value = item.split("=", 1)
                section, option = key.split(".", 1)
            except ValueError:
                raise ScenarioError(f"override must look like section.key=value: {item!r}")
            if (section, option) not in _SCHEMA and (section, option) not in _EXTRA_KEYS:
                raise ScenarioError(f"unknown override key {key!r}")
            if not cp.has_section(section):
                cp.add_section(section)
            cp.set(section, option, value)
        buf = io.StringIO()
        cp.write(buf)
        scenario = scenario_from_ini(buf.getvalue())
    scenario.validate()
    return scenario


def parse_seeds(spec: str) -> list[int]:
    seeds = []
    for token in spec.split(","):
        token = token.strip()
        if ".." in token:
            lo, hi = token.split("..")
            seeds.extend(range(int(lo), int(hi) + 1))
        elif token:
            seeds.append(int(token))
    if not seeds:
        raise ScenarioError(f"no seeds in {spec!r}")
    return seeds


def cmd_run(args) -> int:
    try:
        scenario = load_scenario(args.scenario, args.override)
        if args.profile:
            scenario = replace(scenario, testbed=args.profile)
            scenario.validate()
        seeds = parse_seeds(args.seeds)
    except ScenarioError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return EXIT_SCENARIO

    reports = []
    try:
        for seed in seeds:
            reports.append(harness.run_experiment(replace(scenario, seed=seed)))
    except NonFiniteState as exc:
        print(f"numeric divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except ScenarioError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return EXIT_SCENARIO

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "summary.csv", "w") as fh:
        harness.write_summary_csv(reports, fh)
    for rep in reports:
        tag = f"{rep.scenario.testbed}_{_VARIANT_LABELS[rep.scenario.variant]}_seed{rep.scenario.seed}"
        with open(out / f"trajectory_{tag}.csv", "w") as fh:
            harness.write_trajectory_csv(rep, fh)
        with open(out / f"trace_{tag}.csv", "w") as fh:
            harness.write_trace_csv(rep, fh)
    for rep in reports:
        row = rep.summary_row()
        print(",".join(str(row[c]) for c in harness.SUMMARY_COLUMNS))
    return EXIT_OK


def cmd_design(args) -> int:
    try:
        model = control.build_state_space(DEFAULT_POOLS, args.delay_approx)
        weights = control.DEFAULT_WEIGHTS
        gain = control.lqr_gain(model, weights)
    except control.NoStabilizingSolution as exc:
        print(f"controller synthesis failed: {exc}", file=sys.stderr)
        return EXIT_DESIGN
    k_eff = gain.effective
    print("# gain matrix K (u = K x), one row per gate")
    for row in k_eff:
        print(",".join(repr(float(v)) for v in row))
    eigs = np.linalg.eigvals(model.A + model.B @ k_eff)
    print("# closed-loop eigenvalues (re, im)")
    for ev in sorted(eigs, key=lambda z: z.real):
        print(f"{float(ev.real)!r},{float(ev.imag)!r}")
    print("# decay rate [1/min]")
    print(repr(gain.rho))
    return EXIT_OK


def cmd_energy_model(args) -> int:
    if args.profile not in TESTBEDS:
        print(f"unknown profile {args.profile!r}", file=sys.stderr)
        return EXIT_SCENARIO
    profile = TESTBEDS[args.profile]
    if any(s.t_on_ms <= 0 for s in profile.slots.values()):
        print("profile lacks radio-on calibration", file=sys.stderr)
        return EXIT_SCENARIO
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    cfg = make_epoch_config(profile, variant=WCB_E, t_epoch_s=60.0)
    with open(out / f"dc_vs_event_rate_{args.profile}.csv", "w") as fh:
        fh.write("F_ev,DC_etc_pct,DC_periodic_pct,savings_pct\n")
        for k in range(0, 101):
            f_ev = k / 100.0
            _, _, dc_e, dc_p = protocol.analytic_ton(cfg, f_ev)
            fh.write(f"{f_ev:.2f},{dc_e!r},{dc_p!r},{(1 - dc_e / dc_p) * 100.0!r}\n")

    events = dict(EPOCH_SWEEP_EVENTS)
    if args.events:
        for item in args.events.split(","):
            dur, count = item.split("=")
            dur = int(dur)
            epochs = int(round(86400 / dur))
            events[dur] = (int(count), epochs)
    with open(out / f"dc_vs_epoch_duration_{args.profile}.csv", "w") as fh:
        fh.write("T_epoch_s,events,epochs,F_ev_pct,DC_etc_pct,DC_periodic_pct,savings_pct\n")
        for dur in sorted(events, reverse=True):
            n_ev, n_ep = events[dur]
            f_ev = n_ev / n_ep
            cfg_d = make_epoch_config(profile, variant=WCB_E, t_epoch_s=float(dur))
            _, _, dc_e, dc_p = protocol.analytic_ton(cfg_d, f_ev)
            fh.write(f"{dur},{n_ev},{n_ep},{100 * f_ev!r},{dc_e!r},{dc_p!r},"
                     f"{(1 - dc_e / dc_p) * 100.0!r}\n")
    print(f"wrote duty-cycle sweeps to {out}")
    return EXIT_OK


def cmd_validate(args) -> int:
    try:
        scenario = load_scenario(args.scenario, args.override)
    except ScenarioError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return EXIT_SCENARIO
    violations = triggers.validate_params(scenario.trigger_params)
    for variant in (WCB_E, WCB_P):
        try:
            make_epoch_config(scenario.testbed, variant=variant,
                              t_epoch_s=scenario.t_epoch_s,
                              n_event_slots=scenario.n_event_slots if variant == WCB_E else 0,
                              max_recovery_pairs=scenario.max_recovery_pairs,
                              n_ctrl_slots=scenario.n_ctrl_slots).validate()
        except protocol.ConfigError as exc:
            violations.append(f"{variant}: {exc}")
    if violations:
        for v in violations:
            print(f"violation: {v}", file=sys.stderr)
        return EXIT_SCENARIO
    print("ok")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="wcbsim", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario for one or more seeds")
    p_run.add_argument("--scenario", required=True,
                       help="preset name or scenario .ini file")
    p_run.add_argument("--out", default="out", help="output directory")
    p_run.add_argument("--seeds", default="1", help="e.g. 1..8 or 3,5,9")
    p_run.add_argument("--override", action="append", default=[],
                       metavar="SECTION.KEY=VALUE")
    p_run.add_argument("--profile", choices=sorted(TESTBEDS),
                       help="override the scenario's testbed")
    p_run.set_defaults(func=cmd_run)

    p_design = sub.add_parser("design", help="print gain, eigenvalues, decay rate")
    p_design.add_argument("--delay-approx", choices=("pade", "lag"), default="lag")
    p_design.set_defaults(func=cmd_design)

    p_energy = sub.add_parser("energy-model", help="analytic duty-cycle sweeps")
    p_energy.add_argument("--profile", default="hall")
    p_energy.add_argument("--out", default="out")
    p_energy.add_argument("--events", default="",
                          metavar="DUR=COUNT,...",
                          help="override event counts per epoch duration")
    p_energy.set_defaults(func=cmd_energy_model)

    p_val = sub.add_parser("validate", help="check triggers and slot plans")
    p_val.add_argument("--scenario", default="dept_etc_noiseless")
    p_val.add_argument("--override", action="append", default=[])
    p_val.set_defaults(func=cmd_validate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
