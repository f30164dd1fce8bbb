"""Command-line entry point: ``follower <subcommand> ...``.

Exit codes: 0 success (a collision is still a successful run; see the JSON
summary), 1 usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import math
import sys
from pathlib import Path

from follower import control, planner, vision, world

log = logging.getLogger("follower")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------- config


@dataclasses.dataclass
class RunConfig:
    sim: world.SimConfig = dataclasses.field(default_factory=world.SimConfig)
    expert: planner.ExpertConfig = dataclasses.field(default_factory=planner.ExpertConfig)
    epochs: int = 300
    batch_size: int = 32


# dotted key prefix -> path of attributes inside RunConfig
_SECTIONS = {
    "geometry": ("sim", "geometry"),
    "sensors": ("sim", "sensors"),
    "camera": ("sim", "camera"),
    "vision": ("sim", "vision"),
    "vision.hsv": ("sim", "vision", "hsv_range"),
    "sim": ("sim",),
    "expert": ("expert",),
    "train": (),
}


def _coerce(value, current):
    if isinstance(current, bool):
        if isinstance(value, str):
            return value.lower() in ("1", "true", "yes", "on")
        return bool(value)
    if isinstance(current, int) and not isinstance(current, bool):
        return int(value)
    if isinstance(current, float) or current is None:
        return float(value)
    if isinstance(current, tuple):
        if isinstance(value, str):
            value = json.loads(value)
        return tuple(value)
    return value


def _set_path(obj, path, key, value):
    if not path:
        if not hasattr(obj, key):
            raise UsageError(f"unknown config key {key!r}")
        return dataclasses.replace(obj, **{key: _coerce(value, getattr(obj, key))})
    child = getattr(obj, path[0])
    return dataclasses.replace(obj, **{path[0]: _set_path(child, path[1:], key, value)})


def apply_override(cfg: RunConfig, dotted: str, value) -> RunConfig:
    """Apply one ``section.field=value`` override.

    ``control.kp``/``control.ki`` set both PI loops; ``control.tau`` the
    plant; the ``*_deg`` sensor keys take degrees.
    """
    if "." not in dotted:
        raise UsageError(f"config key {dotted!r} must look like section.field")
    section, key = dotted.rsplit(".", 1)
    if section == "control":
        sim = cfg.sim
        if key in ("kp", "ki"):
            gv = dataclasses.replace(sim.gains_v, **{key: float(value)})
            gw = dataclasses.replace(sim.gains_w, **{key: float(value)})
            sim = dataclasses.replace(sim, gains_v=gv, gains_w=gw)
        elif key == "tau":
            sim = dataclasses.replace(sim, plant_tau=float(value))
        else:
            raise UsageError(f"unknown config key {dotted!r}")
        return dataclasses.replace(cfg, sim=sim)
    if section == "sensors" and key.endswith("_deg"):
        key, value = key[:-4], math.radians(float(value))
    if section not in _SECTIONS:
        raise UsageError(f"unknown config section {section!r}")
    if section == "train":
        if key not in ("epochs", "batch_size"):
            raise UsageError(f"unknown config key {dotted!r}")
        return dataclasses.replace(cfg, **{key: int(value)})
    try:
        return _set_path(cfg, _SECTIONS[section], key, value)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad value for {dotted}: {exc}") from exc


def load_run_config(args) -> RunConfig:
    cfg = RunConfig()
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.is_file():
            raise UsageError(f"config file not found: {path}")
        data = json.loads(path.read_text())
        if not isinstance(data, dict):
            raise UsageError("config file must hold a JSON object of dotted keys")
        for k, v in data.items():
            cfg = apply_override(cfg, k, v)
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        cfg = apply_override(cfg, k.strip(), v.strip())
    return cfg


def _require_file(path, what):
    if not Path(path).is_file():
        raise UsageError(f"{what} not found: {path}")


def _emit(obj) -> None:
    print(json.dumps(obj, sort_keys=True))


# ---------------------------------------------------------------- commands


def cmd_gen_data(args, cfg: RunConfig) -> int:
    ds = world.generate_dataset(world.builtin_environments(), args.rows, args.seed,
                                cfg.expert, cfg.sim)
    ds.to_csv(args.out)
    _emit({"rows": len(ds), "out": str(args.out), "seed": args.seed})
    return EXIT_OK


def cmd_train(args, cfg: RunConfig) -> int:
    _require_file(args.data, "dataset")
    ds = planner.DemoDataset.from_csv(args.data)
    epochs = args.epochs if args.epochs is not None else cfg.epochs
    bundle = planner.train_planner(ds, seed=args.seed, epochs=epochs, batch_size=cfg.batch_size)
    bundle.save(args.out)
    h = bundle.history
    _emit({
        "out": str(args.out),
        "epochs": epochs,
        "v_train_mae": h["v_train_mae"][-1],
        "v_val_mae": h["v_val_mae"][-1],
        "w_train_mse": h["w_train_mse"][-1],
        "w_val_mse": h["w_val_mse"][-1],
    })
    return EXIT_OK


def _resolve_env(spec):
    if spec in world.BUILTIN_NAMES:
        return world.load_builtin(spec)
    _require_file(spec, "environment file")
    return world.Environment.load(spec)


def cmd_simulate(args, cfg: RunConfig) -> int:
    env = _resolve_env(args.env)
    _require_file(args.model, "model file")
    bundle = planner.PlannerBundle.load(args.model)
    trace = world.run_planner_episode(env, bundle, cfg.sim, args.seed, args.frames)
    trace.write_csv(args.trace)
    if args.ticks:
        trace.write_ticks_csv(args.ticks)
    _emit(trace.summary())
    return EXIT_OK


def cmd_detect(args, cfg: RunConfig) -> int:
    _require_file(args.image, "image")
    try:
        frame = vision.read_ppm(args.image)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    det = vision.detect_object(frame, cfg.sim.vision)
    if args.out:
        vision.write_ppm(args.out, vision.annotate(frame, det))
        Path(str(args.out) + ".txt").write_text("none\n" if det is None else f"{det.x_angle}\n")
    _emit({"detected": False} if det is None else det.to_json())
    return EXIT_OK


def write_step_csv(path, t, y, u, setpoint) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("t", "setpoint", "output", "u"))
        for row in zip(t, y, u):
            w.writerow([repr(float(row[0])), repr(float(setpoint)),
                        repr(float(row[1])), repr(float(row[2]))])


def cmd_step_response(args, cfg: RunConfig) -> int:
    kp = args.kp if args.kp is not None else cfg.sim.gains_v.kp
    ki = args.ki if args.ki is not None else cfg.sim.gains_v.ki
    tau = args.tau if args.tau is not None else cfg.sim.plant_tau
    if args.dt > 0.005:
        raise UsageError("--dt must be <= 0.005 s")
    gains = control.PidGains(kp, ki)
    t, y, u = control.simulate_step(gains, tau, args.dt, args.duration, args.setpoint)
    if args.out:
        write_step_csv(args.out, t, y, u, args.setpoint)
    m = control.response_metrics(t, y, args.setpoint)
    _emit({"kp": kp, "ki": ki, "tau": tau, **m.to_json()})
    return EXIT_OK


def cmd_envs(args, cfg: RunConfig) -> int:
    out = []
    for env in world.builtin_environments():
        out.append({
            "name": env.name,
            "obstacles": len(env.obstacles),
            "target_path_m": round(env.target_path_length(), 4),
            "target_duration_s": env.path_end_time,
        })
    print(json.dumps(out, indent=1))
    return EXIT_OK


def cmd_repro(args, cfg: RunConfig) -> int:
    """gen-data -> train -> simulate env1..3, plus the step response."""
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ds = world.generate_dataset(world.builtin_environments(), args.rows, args.seed,
                                cfg.expert, cfg.sim)
    ds.to_csv(out / "dataset.csv")
    epochs = args.epochs if args.epochs is not None else cfg.epochs
    bundle = planner.train_planner(ds, seed=args.seed, epochs=epochs, batch_size=cfg.batch_size)
    bundle.save(out / "model.json")
    with open(out / "loss_history.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        keys = list(bundle.history)
        w.writerow(["epoch", *keys])
        for i, vals in enumerate(zip(*(bundle.history[k] for k in keys))):
            w.writerow([i + 1, *(repr(float(v)) for v in vals)])

    summaries = []
    for i, env in enumerate(world.builtin_environments()):
        trace = world.run_planner_episode(env, bundle, cfg.sim, args.seed + i)
        trace.write_csv(out / f"{env.name}_trace.csv")
        trace.write_ticks_csv(out / f"{env.name}_ticks.csv")
        summaries.append(trace.summary())

    gains = cfg.sim.gains_v
    t, y, u = control.simulate_step(gains, cfg.sim.plant_tau, 0.001, 2.0)
    write_step_csv(out / "step_response.csv", t, y, u, 1.0)
    m = control.response_metrics(t, y)
    summary = {"seed": args.seed, "episodes": summaries, "step_response": m.to_json()}
    (out / "summary.json").write_text(json.dumps(summary, indent=1, sort_keys=True))
    _emit(summary)
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="follower", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    def common(sp, seed_required=False):
        sp.add_argument("--config", help="JSON object of dotted config overrides")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override one setting, e.g. control.kp=1.5 (repeatable)")
        if seed_required:
            sp.add_argument("--seed", type=int, required=True, help="random seed")

    sp = sub.add_parser("gen-data", help="record expert demonstrations to CSV")
    sp.add_argument("--rows", type=int, default=5000, help="rows to collect (default 5000)")
    sp.add_argument("--out", required=True, help="output CSV path")
    common(sp, seed_required=True)
    sp.set_defaults(func=cmd_gen_data)

    sp = sub.add_parser("train", help="train the v and omega networks")
    sp.add_argument("--data", required=True, help="dataset CSV from gen-data")
    sp.add_argument("--out", required=True, help="output model JSON path")
    sp.add_argument("--epochs", type=int, help="training epochs (default 300)")
    common(sp, seed_required=True)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("simulate", help="run one closed-loop episode")
    sp.add_argument("--env", required=True, help="env1|env2|env3 or an environment JSON file")
    sp.add_argument("--model", required=True, help="model JSON from train")
    sp.add_argument("--trace", required=True, help="output trace CSV (one row per control tick)")
    sp.add_argument("--ticks", help="optional per-planner-tick CSV with the desired path")
    sp.add_argument("--frames", help="directory for annotated PPM frames")
    common(sp, seed_required=True)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("detect", help="detect the target in a PPM image")
    sp.add_argument("--image", required=True, help="input binary PPM (P6), 320x240")
    sp.add_argument("--out", help="annotated PPM output (x_angle goes to OUT.txt)")
    common(sp)
    sp.set_defaults(func=cmd_detect)

    sp = sub.add_parser("step-response", help="closed-loop PI step response")
    sp.add_argument("--kp", type=float, help="proportional gain (default: shipped gains)")
    sp.add_argument("--ki", type=float, help="integral gain, 1/s")
    sp.add_argument("--tau", type=float, help="plant time constant, s (default 0.15)")
    sp.add_argument("--dt", type=float, default=0.001, help="simulation step, s (<= 0.005)")
    sp.add_argument("--duration", type=float, default=2.0, help="simulated time, s")
    sp.add_argument("--setpoint", type=float, default=1.0, help="step height")
    sp.add_argument("--out", help="output CSV t,setpoint,output,u")
    common(sp)
    sp.set_defaults(func=cmd_step_response)

    sp = sub.add_parser("envs", help="list the built-in environments")
    sp.set_defaults(func=cmd_envs)

    sp = sub.add_parser("repro", help="gen-data, train and simulate all three environments")
    sp.add_argument("--out", required=True, help="output directory")
    sp.add_argument("--rows", type=int, default=5000, help="dataset rows (default 5000)")
    sp.add_argument("--epochs", type=int, help="training epochs (default 300)")
    common(sp, seed_required=True)
    sp.set_defaults(func=cmd_repro)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_run_config(args)
        return args.func(args, cfg)
    except UsageError as exc:
        print(f"follower {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (planner.TrainingDiverged, RuntimeError, ValueError, OSError) as exc:
        print(f"follower {args.command}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
