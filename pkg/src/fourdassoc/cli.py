"""Command-line entry point: ``solve``, ``synth``, ``eval``, ``oracle`` and ``bench``.

Settings come from an optional YAML run configuration (``--config``),
then ``--set section.key=value`` overrides, then the dedicated flags of
each subcommand. Exit codes: 0 success, 2 usage, 3 configuration error,
4 unreadable or inconsistent input, 5 runtime failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import platform
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import yaml

from . import __version__
from .detections import (
    DetectionFormatError,
    SkeletonTopology,
    TopologyError,
    chain_topology,
    default_topology,
    load_frames,
    read_header,
    save_frames,
)
from .eval import EvaluationError, InstanceTooLarge, PoseFrame, brute_force_solve, evaluate, gt_frames
from .geometry import GeometryError, load_calibration, save_calibration
from .graph import EdgeTable, GraphConfig, build_graph, objective
from .pipeline import MODES, SequenceReconstructor, prior_from_skeletons
from .skelfit import FitConfig, frame_line, read_skeletons, skeleton_header
from .solver import Diagnostics, SolverConfig, selection_from_assembly, solve_graph, write_bundles
from .synth import (
    NoiseConfig,
    SceneConfig,
    SceneConfigError,
    load_ground_truth,
    make_sequence,
    oracle_instance,
    oracle_noise,
    save_ground_truth,
)

CONFIG_VERSION = 1

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_INPUT = 4
EXIT_RUNTIME = 5

log = logging.getLogger("fourdassoc")


class ConfigError(Exception):
    pass


class InputError(Exception):
    pass


# ---------------------------------------------------------------------------
# run configuration


@dataclass
class Paths:
    calibration: str | None = None
    detections: str | None = None
    output: str | None = None
    ground_truth: str | None = None
    diagnostics: str | None = None


@dataclass
class RunConfig:
    """Everything a run needs; serialised as versioned YAML."""

    paths: Paths = field(default_factory=Paths)
    mode: str = "full"
    seed: int = 0
    threads: int = 1
    link_gate: float | None = None  # per-frame modes only: link ids between frames within this many metres
    graph: GraphConfig = field(default_factory=GraphConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    fit: FitConfig = field(default_factory=FitConfig)
    scene: SceneConfig = field(default_factory=SceneConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {', '.join(MODES)}, got {self.mode!r}")
        if not isinstance(self.threads, int) or self.threads < 1:
            raise ConfigError("threads must be a positive integer")
        self.solver = dataclasses.replace(self.solver, threads=self.threads)

    def to_dict(self) -> dict:
        d = {"config_version": CONFIG_VERSION, "paths": dataclasses.asdict(self.paths), "mode": self.mode,
             "seed": self.seed, "threads": self.threads, "link_gate": self.link_gate}
        for name in _SECTIONS:
            d[name] = _plain(dataclasses.asdict(getattr(self, name)))
        d["solver"].pop("threads")
        return d

    @classmethod
    def from_dict(cls, d: dict | None) -> "RunConfig":
        d = dict(d or {})
        version = d.pop("config_version", CONFIG_VERSION)
        if version != CONFIG_VERSION:
            raise ConfigError(f"unsupported config_version {version!r} (expected {CONFIG_VERSION})")
        known = {"paths", "mode", "seed", "threads", "link_gate", *_SECTIONS}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
        kwargs: dict[str, Any] = {}
        try:
            kwargs["paths"] = _build(Paths, d.get("paths"), "paths")
            for name, typ in _SECTIONS.items():
                kwargs[name] = _build(typ, d.get(name), name)
            for key in ("mode", "seed", "threads", "link_gate"):
                if key in d:
                    kwargs[key] = d[key]
            return cls(**kwargs)
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc


_SECTIONS = {"graph": GraphConfig, "solver": SolverConfig, "fit": FitConfig,
             "scene": SceneConfig, "noise": NoiseConfig}


def _plain(d: dict) -> dict:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


def _build(typ, values: dict | None, section: str):
    values = dict(values or {})
    names = {f.name: f for f in dataclasses.fields(typ)}
    unknown = set(values) - set(names)
    if unknown:
        raise ConfigError(f"unknown keys in section {section!r}: {sorted(unknown)}")
    for k, v in values.items():
        if isinstance(v, list):
            values[k] = tuple(v)
    return typ(**values)


def _apply_override(d: dict, item: str) -> None:
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not of the form key=value")
    key, raw = item.split("=", 1)
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise ConfigError(f"override {item!r}: {exc}") from exc
    node = d
    parts = key.strip().split(".")
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override {item!r}: {p!r} is not a section")
    node[parts[-1]] = value


def load_run_config(path: str | None, overrides: Sequence[str] = ()) -> RunConfig:
    d: dict = {}
    if path:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"configuration file {path} does not exist")
        try:
            d = yaml.safe_load(p.read_text()) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        if not isinstance(d, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
    for item in overrides:
        _apply_override(d, item)
    return RunConfig.from_dict(d)


def save_run_config(path, cfg: RunConfig) -> None:
    Path(path).write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=False))


def _with(cfg: RunConfig, **changes) -> RunConfig:
    d = cfg.to_dict()
    for key, value in changes.items():
        if value is None:
            continue
        if "." in key:
            section, name = key.split(".", 1)
            d[section][name] = value
        else:
            d[key] = value
    return RunConfig.from_dict(d)


def _require_file(path: str | None, what: str) -> Path:
    if not path:
        raise ConfigError(f"no {what} path given")
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"{what} file {path} does not exist")
    return p


def _topology_for(header: dict) -> SkeletonTopology:
    """The built-in topology with the same digest (keeps its symmetric limbs), else the file's."""
    for topo in (default_topology(), chain_topology(len(header.get("joint_names", [])) or 3)):
        if header.get("topology") == topo.digest():
            return topo
    return SkeletonTopology(tuple(header["joint_names"]), tuple(tuple(l) for l in header["limbs"]))


def _load_inputs(cfg: RunConfig):
    calib = _require_file(cfg.paths.calibration, "calibration")
    dets = _require_file(cfg.paths.detections, "detections")
    try:
        cams = load_calibration(calib)
        topo = _topology_for(read_header(dets))
        frames = load_frames(dets, topo, [c.id for c in cams])
    except (DetectionFormatError, GeometryError, TopologyError, KeyError, ValueError) as exc:
        raise InputError(str(exc)) from exc
    return cams, topo, frames


# ---------------------------------------------------------------------------
# commands


def cmd_solve(cfg: RunConfig, dump_dir: str | None = None) -> int:
    """Reconstruct a detection sequence and write one skeleton record per frame.

    The skeleton file holds no timing so that it is byte-identical for any
    thread count; per-frame wall times go to the diagnostics file and log.
    """
    if not cfg.paths.output:
        raise ConfigError("no output path given")
    cams, topo, frames = _load_inputs(cfg)
    rec = SequenceReconstructor(cams, topo, cfg.mode, cfg.graph, cfg.solver, cfg.fit, cfg.link_gate)
    dump = Path(dump_dir) if dump_dir else None
    if dump:
        dump.mkdir(parents=True, exist_ok=True)
    diag_fh = open(cfg.paths.diagnostics, "w") if cfg.paths.diagnostics else None
    times = []
    try:
        with open(cfg.paths.output, "w") as out:
            out.write(json.dumps(skeleton_header(topo, cfg.mode)) + "\n")
            for frame in frames:
                res = rec.step(frame)
                out.write(frame_line(res.frame, res.skeletons) + "\n")
                d = res.diagnostics
                times.append(d.association_ms)
                log.info("frame %d: association %.2f ms, %d persons", res.frame, d.association_ms,
                         len(res.skeletons))
                if diag_fh:
                    diag_fh.write(json.dumps({"frame": res.frame, "association_ms": round(d.association_ms, 4),
                                              **_diag_fields(d)}) + "\n")
                if dump and res.assembly is not None and res.assembly.graph is not None:
                    res.assembly.graph.edges().save(dump / f"frame_{res.frame:06d}.edges.txt")
                    write_bundles(dump / f"frame_{res.frame:06d}.bundles.txt", d.all_bundles())
    finally:
        if diag_fh:
            diag_fh.close()
    if times:
        log.warning("solved %d frames (%s mode), median association %.2f ms",
                    len(times), cfg.mode, float(np.median(times)))
    return EXIT_OK


def _diag_fields(d: Diagnostics) -> dict:
    return {"build_ms": round(d.build_ms, 4), "parse_ms": round(d.parse_ms, 4),
            "assemble_ms": round(d.assemble_ms, 4), "n_edges": d.n_edges, "n_bundles": d.n_bundles,
            "n_splits": d.n_splits, "n_persons": d.n_persons, "objective": d.objective,
            "feasible": bool(d.feasible)}


def cmd_synth(cfg: RunConfig, out_dir: str) -> int:
    """Write calibration, detections, ground truth and a ready-to-run config into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        cams, frames, gt = make_sequence(cfg.scene, cfg.noise, cfg.seed)
    except SceneConfigError as exc:
        raise ConfigError(str(exc)) from exc
    save_calibration(out / "calibration.json", cams)
    save_frames(out / "detections.jsonl", frames, gt.topology, [c.id for c in cams])
    save_ground_truth(out / "ground_truth.jsonl", gt)
    run = _with(cfg, **{"paths.calibration": "calibration.json", "paths.detections": "detections.jsonl",
                        "paths.ground_truth": "ground_truth.jsonl", "paths.output": "skeletons.jsonl"})
    save_run_config(out / "run.yaml", run)
    log.warning("wrote %d frames, %d persons, %d views to %s", len(frames), gt.n_persons, len(cams), out)
    return EXIT_OK


def load_predictions(path, n_frames: int, n_joints: int) -> list[PoseFrame]:
    """Skeleton file as pose frames 0..n_frames-1; frames must match the ground truth exactly."""
    try:
        header, seq = read_skeletons(path)
    except (OSError, ValueError, KeyError) as exc:
        raise InputError(str(exc)) from exc
    if len(header.get("joint_names", [])) != n_joints:
        raise InputError(f"{path}: {len(header.get('joint_names', []))} joints, ground truth has {n_joints}")
    got = [t for t, _ in seq]
    if got != list(range(n_frames)):
        raise InputError(f"{path}: frames {got[:3]}...({len(got)}) do not align with {n_frames} ground-truth frames")
    return [PoseFrame.from_skeletons(skels, n_joints) for _, skels in seq]


def cmd_eval(pred_path: str, gt_path: str, alpha: float = 0.5, threshold: float = 0.2, gate: float = 1.0,
             json_path: str | None = None, stream=None) -> int:
    stream = stream or sys.stdout
    _require_file(pred_path, "prediction")
    _require_file(gt_path, "ground truth")
    try:
        gt = load_ground_truth(gt_path)
    except (SceneConfigError, ValueError, KeyError) as exc:
        raise InputError(str(exc)) from exc
    pred = load_predictions(pred_path, gt.n_frames, gt.topology.n_joints)
    try:
        report = evaluate(pred, gt_frames(gt), gt.topology, alpha, threshold, gate)
    except EvaluationError as exc:
        raise InputError(str(exc)) from exc
    print(report.table(), file=stream)
    if json_path:
        Path(json_path).write_text(report.to_json() + "\n")
    return EXIT_OK


ORACLE_COLUMNS = ("instance", "n_edges", "greedy", "optimal", "ratio")


def oracle_row(name, graph, scfg: SolverConfig, cap: int) -> tuple | None:
    """(name, edges, greedy objective, optimum, ratio), or None when the instance exceeds ``cap``."""
    asm = solve_graph(graph, scfg)
    greedy = objective(selection_from_assembly(asm, graph), graph, graph.config)
    try:
        _, opt = brute_force_solve(graph, graph.config, cap)
    except InstanceTooLarge:
        return None
    ratio = greedy / opt if opt > 0 else 1.0
    return name, len(graph.edges()), greedy, opt, ratio


def cmd_oracle(cfg: RunConfig, cap: int = 10_000_000, random_instances: int = 0, noiseless: bool = False,
               miss_prob: float | None = None, edges: Sequence[str] = (), output: str | None = None,
               stream=None) -> int:
    """Greedy versus exhaustive objective, per frame of a detection file or per random small instance.

    ``edges`` instead reads graph dumps written by ``solve --dump`` and
    reports their optimum only.
    """
    stream = stream or sys.stdout
    rows = []
    skipped = 0
    if edges:
        for path in edges:
            table = EdgeTable.load(_require_file(path, "edge dump"))
            try:
                _, opt = brute_force_solve(table, cfg.graph, cap)
            except InstanceTooLarge:
                print(f"# {path}: skipped, more than {cap} search nodes", file=stream)
                skipped += 1
                continue
            rows.append((path, len(table), float("nan"), opt, float("nan")))
    elif random_instances:
        topo = chain_topology(3)
        noise = oracle_noise(not noiseless)
        if miss_prob is not None:
            noise = dataclasses.replace(noise, miss_prob=miss_prob)
        for k in range(random_instances):
            seed = cfg.seed + k
            cams, frame, _ = oracle_instance(seed, noise=noise)
            row = oracle_row(seed, build_graph(frame, None, cams, cfg.graph, topo), cfg.solver, cap)
            if row is None:
                print(f"# instance {seed}: skipped, more than {cap} search nodes", file=stream)
                skipped += 1
            else:
                rows.append(row)
    else:
        cams, topo, frames = _load_inputs(cfg)
        for frame in frames:
            row = oracle_row(frame.frame, build_graph(frame, None, cams, cfg.graph, topo), cfg.solver, cap)
            if row is None:
                print(f"# frame {frame.frame}: skipped, more than {cap} search nodes", file=stream)
                skipped += 1
            else:
                rows.append(row)
    lines = ["\t".join(ORACLE_COLUMNS)]
    for r in rows:
        lines.append(f"{r[0]}\t{r[1]}\t{r[2]:.6f}\t{r[3]:.6f}\t{r[4]:.6f}")
    text = "\n".join(lines) + "\n"
    if output:
        Path(output).write_text(text)
    else:
        stream.write(text)
    ratios = np.array([r[4] for r in rows if np.isfinite(r[4])])
    if ratios.size:
        print(f"# {ratios.size} instances, {skipped} skipped; ratio min {ratios.min():.4f}, "
              f"median {np.median(ratios):.4f}; >= 0.9: {100 * (ratios >= 0.9).mean():.1f}%, "
              f"optimal: {100 * (ratios >= 1 - 1e-9).mean():.1f}%", file=stream)
    return EXIT_OK


def bench_association(n_persons: int = 5, n_views: int = 5, n_frames: int = 50, warmup: int = 10,
                      seed: int = 0, graph_cfg: GraphConfig | None = None,
                      solver_cfg: SolverConfig | None = None) -> np.ndarray:
    """Association wall times (ms) of build_graph + parsing + assembly per frame.

    A full-mode reconstruction runs alongside so every timed frame carries
    the previous frame's skeletons as its prior; the first ``warmup``
    frames (numba compilation, caches) are not reported.
    """
    graph_cfg = graph_cfg or GraphConfig()
    solver_cfg = solver_cfg or SolverConfig()
    topo = default_topology()
    cams, frames, _ = make_sequence(SceneConfig(n_persons=n_persons, n_views=n_views,
                                                n_frames=warmup + n_frames), NoiseConfig(), seed)
    rec = SequenceReconstructor(cams, topo, "full", graph_cfg, solver_cfg)
    times = []
    for k, frame in enumerate(frames):
        prior = prior_from_skeletons(rec.prev, topo.n_joints)
        t0 = time.perf_counter()
        graph = build_graph(frame, prior, cams, graph_cfg, topo)
        solve_graph(graph, solver_cfg, rec.next_id)
        dt = 1e3 * (time.perf_counter() - t0)
        if k >= warmup:
            times.append(dt)
        rec.step(frame)
    return np.array(times)


def bench_environment() -> dict:
    import numba
    import scipy
    return {"python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__,
            "numba": numba.__version__, "cpu_count": os.cpu_count(), "machine": platform.machine(),
            "processor": platform.processor() or "unknown"}


def cmd_bench(cfg: RunConfig, persons: int = 5, views: int = 5, frames: int = 50, warmup: int = 10,
              json_path: str | None = None, stream=None) -> int:
    stream = stream or sys.stdout
    t = bench_association(persons, views, frames, warmup, cfg.seed, cfg.graph, cfg.solver)
    doc = {"persons": persons, "views": views, "frames": int(t.size), "warmup": warmup,
           "threads": cfg.threads, "median_ms": float(np.median(t)), "min_ms": float(t.min()),
           "p90_ms": float(np.percentile(t, 90)), "environment": bench_environment()}
    print(f"association ({persons} persons, {views} views, {t.size} frames after {warmup} warm-up): "
          f"median {doc['median_ms']:.2f} ms, min {doc['min_ms']:.2f} ms, p90 {doc['p90_ms']:.2f} ms",
          file=stream)
    if json_path:
        Path(json_path).write_text(json.dumps(doc, indent=1) + "\n")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fourdassoc", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a configuration entry, e.g. graph.w_parsing=2 (repeatable)")
    common.add_argument("--seed", type=int)
    common.add_argument("--threads", type=int)
    common.add_argument("-v", "--verbose", action="store_true", help="log per-frame timings")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", parents=[common], help="reconstruct skeletons from detections")
    p.add_argument("--calibration")
    p.add_argument("--detections")
    p.add_argument("--output", help="skeleton file (JSON lines)")
    p.add_argument("--diagnostics", help="per-frame diagnostics file (JSON lines)")
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--link-gate", type=float, help="per-frame modes: link ids between frames (metres)")
    p.add_argument("--dump", metavar="DIR", help="write per-frame edge lists and bundles here")

    p = sub.add_parser("synth", parents=[common], help="write a synthetic scene")
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument("--persons", type=int)
    p.add_argument("--views", type=int)
    p.add_argument("--frames", type=int)
    p.add_argument("--motion", choices=("wander", "crossing"))

    p = sub.add_parser("eval", parents=[common], help="score predicted skeletons against ground truth")
    p.add_argument("prediction")
    p.add_argument("ground_truth")
    p.add_argument("--alpha", type=float, default=0.5, help="PCP limb-length fraction")
    p.add_argument("--threshold", type=float, default=0.2, help="joint distance for precision/recall (m)")
    p.add_argument("--gate", type=float, default=1.0, help="person matching radius (m)")
    p.add_argument("--json", help="also write the report as JSON")

    p = sub.add_parser("oracle", parents=[common], help="greedy versus exhaustive objective")
    p.add_argument("--calibration")
    p.add_argument("--detections")
    p.add_argument("--random", type=int, default=0, metavar="N", help="N random 2-view 2-person arm instances")
    p.add_argument("--noiseless", action="store_true")
    p.add_argument("--miss-prob", type=float)
    p.add_argument("--edges", nargs="+", default=[], help="edge dumps from solve --dump")
    p.add_argument("--cap", type=int, default=10_000_000, help="search-node limit per instance")
    p.add_argument("--output", help="table file (default: stdout)")

    p = sub.add_parser("bench", parents=[common], help="time the association step")
    p.add_argument("--persons", type=int, default=5)
    p.add_argument("--views", type=int, default=5)
    p.add_argument("--frames", type=int, default=50)
    p.add_argument("--warmup", type=int, default=10)
    p.add_argument("--json")
    return ap


def _config_from_args(args) -> RunConfig:
    cfg = load_run_config(args.config, args.set)
    if args.config:
        # relative paths in a config file are relative to the file
        base = Path(args.config).resolve().parent
        paths = {k: (str(base / v) if v and not Path(v).is_absolute() else v)
                 for k, v in dataclasses.asdict(cfg.paths).items()}
        cfg = dataclasses.replace(cfg, paths=Paths(**paths))
    changes = {"seed": args.seed, "threads": args.threads}
    for flag in ("calibration", "detections", "output", "diagnostics"):
        if getattr(args, flag, None) is not None:
            changes[f"paths.{flag}"] = getattr(args, flag)
    if getattr(args, "mode", None):
        changes["mode"] = args.mode
    if getattr(args, "link_gate", None) is not None:
        changes["link_gate"] = args.link_gate
    if args.command == "synth":
        for flag, key in (("persons", "n_persons"), ("views", "n_views"), ("frames", "n_frames"),
                          ("motion", "motion")):
            if getattr(args, flag) is not None:
                changes[f"scene.{key}"] = getattr(args, flag)
    return _with(cfg, **changes)


def main(argv: Sequence[str] | None = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = _config_from_args(args)
        if args.command == "solve":
            return cmd_solve(cfg, args.dump)
        if args.command == "synth":
            return cmd_synth(cfg, args.out)
        if args.command == "eval":
            return cmd_eval(args.prediction, args.ground_truth, args.alpha, args.threshold, args.gate, args.json)
        if args.command == "oracle":
            return cmd_oracle(cfg, args.cap, args.random, args.noiseless, args.miss_prob, args.edges, args.output)
        if args.command == "bench":
            return cmd_bench(cfg, args.persons, args.views, args.frames, args.warmup, args.json)
    except ConfigError as exc:
        print(f"fourdassoc {args.command}: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InputError as exc:
        print(f"fourdassoc {args.command}: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001 - any other failure is a runtime error with a message
        print(f"fourdassoc {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_USAGE
