"""Experiment configs: parsing, validation, execution and output layout.

A config is a YAML mapping::

    stream:
      generator: {benchmark: rbf5, ir: 100, ir_profile: static, drift: sudden,
                  t1: 5000, affected: 1}
      # or: csv: data.csv, Z: 5, delimiter: ","
    batch_size: 50
    seeds: [0, 1, 2]
    length_cap: 15000          # instances per run
    detectors:
      - name: rbm-im
        params: {epochs: 3}
      - name: fhddm
    classifier: {learning_rate: 0.1}
    evaluation: {window: 1000, horizon: 50}
    sweep: {parameter: affected, values: [1, 2, 3, 4, 5]}   # optional
    output: results/exp2
    figures: true

Relative paths are resolved against the config file's directory.
"""

from __future__ import annotations

import dataclasses
import math
import os
import shutil
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import reporting
from .evaluation import LinearClassifier, detection_metrics, make_detector, run_prequential
from .generators import ConfigError, generator_from_config
from .stream import SchemaError, batches, read_csv

SWEEPABLE = ("affected", "ir")
DETECTOR_NAMES = ("rbm-im", "fhddm", "ddm-oci", "perfsim", "oracle", "none")
_TOP_KEYS = {"stream", "batch_size", "seeds", "length_cap", "detectors", "classifier",
             "evaluation", "sweep", "output", "figures"}


@dataclass
class DetectorSpec:
    name: str
    params: dict = field(default_factory=dict)
    label: str = ""

    def __post_init__(self):
        self.label = self.label or self.name


@dataclass
class ExperimentConfig:
    stream: dict
    detectors: list
    seeds: list = field(default_factory=lambda: [0])
    batch_size: int = 50
    length_cap: int = 100_000
    classifier: dict = field(default_factory=dict)
    window: int = 1000
    horizon: int = 50
    sweep: dict | None = None
    output: Path = Path("results")
    figures: bool = True
    base_dir: Path = Path(".")

    @property
    def is_generated(self) -> bool:
        return "generator" in self.stream

    def sweep_values(self) -> list:
        return list(self.sweep["values"]) if self.sweep else [None]


def load_config(path) -> ExperimentConfig:
    """Parse and validate; raises ConfigError listing every problem found."""
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    problems = []
    cfg = _build(raw, path.parent, problems)
    if cfg is not None:
        _check(cfg, problems)
    if problems:
        raise ConfigError("; ".join(problems))
    return cfg


def validate_config(path) -> list[str]:
    """Diagnostics for a config file; empty when it is valid."""
    try:
        load_config(path)
    except ConfigError as exc:
        return str(exc).split("; ")
    return []


def _build(raw: dict, base: Path, problems: list) -> ExperimentConfig | None:
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        problems.append(f"unknown keys: {sorted(unknown)}")
    stream = raw.get("stream")
    if not isinstance(stream, dict) or not ({"generator", "csv"} & set(stream)):
        problems.append("stream must contain 'generator' or 'csv'")
        return None
    dets = raw.get("detectors")
    if not isinstance(dets, list) or not dets:
        problems.append("at least one detector is required")
        return None
    specs = []
    for d in dets:
        if isinstance(d, str):
            d = {"name": d}
        if not isinstance(d, dict) or "name" not in d:
            problems.append(f"bad detector entry {d!r}")
            continue
        specs.append(DetectorSpec(str(d["name"]), dict(d.get("params") or {}),
                                  str(d.get("label", ""))))
    ev = raw.get("evaluation") or {}
    seeds = raw.get("seeds", [0])
    if isinstance(seeds, int):
        seeds = [seeds]
    try:
        return ExperimentConfig(
            stream=stream, detectors=specs, seeds=[int(s) for s in seeds],
            batch_size=int(raw.get("batch_size", 50)),
            length_cap=int(raw.get("length_cap", 100_000)),
            classifier=dict(raw.get("classifier") or {}),
            window=int(ev.get("window", 1000)), horizon=int(ev.get("horizon", 50)),
            sweep=raw.get("sweep"), output=(base / str(raw.get("output", "results"))).resolve(),
            figures=bool(raw.get("figures", True)), base_dir=base)
    except (TypeError, ValueError) as exc:
        problems.append(f"bad value: {exc}")
        return None


def _check(cfg: ExperimentConfig, problems: list):
    if not cfg.seeds:
        problems.append("seeds must be non-empty")
    if cfg.batch_size < 1:
        problems.append("batch_size must be >= 1")
    if cfg.length_cap < 10 * cfg.batch_size:
        problems.append("length_cap must cover at least 10 batches")
    if cfg.window < 1 or cfg.horizon < 1:
        problems.append("evaluation window and horizon must be >= 1")
    if cfg.is_generated:
        try:
            generator_from_config(cfg.stream["generator"])
        except (ConfigError, ValueError, TypeError) as exc:
            problems.append(f"generator: {exc}")
    else:
        Z = cfg.stream.get("Z")
        if not isinstance(Z, int):
            problems.append("csv streams need an integer Z")
        elif Z < 2:
            problems.append("class count must be ≥ 2")
        if not (cfg.base_dir / str(cfg.stream["csv"])).is_file():
            problems.append(f"csv file not found: {cfg.stream['csv']}")
    if cfg.sweep is not None:
        sw = cfg.sweep
        if not isinstance(sw, dict) or sw.get("parameter") not in SWEEPABLE \
                or not isinstance(sw.get("values"), list) or not sw["values"]:
            problems.append(f"sweep needs parameter in {SWEEPABLE} and a non-empty values list")
        elif not cfg.is_generated:
            problems.append("sweeps need a generated stream")
        else:
            for v in sw["values"]:
                try:
                    generator_from_config({**cfg.stream["generator"], sw["parameter"]: v})
                except (ConfigError, ValueError, TypeError) as exc:
                    problems.append(f"sweep value {v!r}: {exc}")
    labels = [d.label for d in cfg.detectors]
    if len(set(labels)) != len(labels):
        problems.append("detector labels must be unique (set 'label' to tell them apart)")
    for d in cfg.detectors:
        if d.name not in DETECTOR_NAMES:
            problems.append(f"unknown detector {d.name!r}")
            continue
        if d.name == "oracle" and not cfg.is_generated:
            problems.append("the oracle detector needs a generated stream")
        try:
            make_detector(d.name, 2, d.params)
        except (ValueError, TypeError) as exc:
            problems.append(f"detector {d.label}: {exc}")
    try:
        LinearClassifier(2, 1, **cfg.classifier)
    except (ValueError, TypeError) as exc:
        problems.append(f"classifier: {exc}")


# -- execution -----------------------------------------------------------------

@dataclass(frozen=True)
class RunSpec:
    seed: int
    detector: DetectorSpec
    value: object = None  # sweep value

    def tag(self, sweep_param: str | None) -> str:
        mid = f"_{sweep_param}{self.value}" if sweep_param else ""
        return f"{self.detector.label}{mid}_seed{self.seed}"


def plan(cfg: ExperimentConfig) -> list[RunSpec]:
    return [RunSpec(s, d, v) for v in cfg.sweep_values() for d in cfg.detectors
            for s in cfg.seeds]


def _stream(cfg: ExperimentConfig, spec: RunSpec):
    """(batches iterable, Z, drift batches, affected classes) for one run."""
    n = cfg.batch_size
    if cfg.is_generated:
        g = dict(cfg.stream["generator"])
        if cfg.sweep:
            g[cfg.sweep["parameter"]] = spec.value
        g["seed"] = spec.seed
        g["length"] = min(int(g.get("length", cfg.length_cap)), cfg.length_cap)
        gen = generator_from_config(g)
        drifts = tuple(p // n for p in gen.drift_points())
        return batches(gen, n), gen.Z, drifts, gen.affected()
    path = cfg.base_dir / str(cfg.stream["csv"])
    Z = int(cfg.stream["Z"])
    rows = read_csv(path, Z, cfg.stream.get("delimiter", ","), cfg.stream.get("header"))
    capped = (inst for i, inst in zip(range(cfg.length_cap), rows))
    return batches(capped, n), Z, (), ()


def execute(cfg: ExperimentConfig, spec: RunSpec) -> dict:
    stream, Z, drifts, affected = _stream(cfg, spec)
    det = make_detector(spec.detector.name, Z, spec.detector.params, spec.seed,
                        truth=(drifts, affected))
    det.name = spec.detector.label
    res = run_prequential(stream, det, Z, cfg.classifier, cfg.window, drifts, affected)
    dm = detection_metrics(res.log, cfg.horizon)
    auc = np.array([r["pmAUC"] for r in res.metrics], dtype=float)
    gm = np.array([r["pmGM"] for r in res.metrics], dtype=float)
    return {"metrics": res.metrics, "log": res.log.rows, "detection": dm.as_dict(),
            "mean_pmAUC": _nanmean(auc), "mean_pmGM": _nanmean(gm),
            "drift_batches": list(drifts), "affected": list(affected)}


def _nanmean(a) -> float:
    a = np.asarray(a, dtype=float)
    a = a[~np.isnan(a)]
    return float(a.mean()) if a.size else math.nan


def _execute_packed(args):
    return execute(*args)


def run_experiment(cfg: ExperimentConfig, jobs: int = 1, progress=None) -> Path:
    """Run every (sweep value, detector, seed) and write the outputs.

    Files are written into a scratch directory next to the output directory
    and moved into place only after everything succeeded.
    """
    specs = plan(cfg)
    if jobs > 1 and len(specs) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = []
            for i, r in enumerate(pool.map(_execute_packed, [(cfg, s) for s in specs])):
                results.append(r)
                if progress:
                    progress(i + 1, len(specs), specs[i])
    else:
        results = []
        for i, s in enumerate(specs):
            results.append(execute(cfg, s))
            if progress:
                progress(i + 1, len(specs), s)
    out = Path(cfg.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{out.name}-", dir=out.parent))
    try:
        _write_outputs(cfg, specs, results, tmp)
        _replace_dir(tmp, out)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return out


def _replace_dir(src: Path, dst: Path):
    if dst.exists():
        if any(dst.iterdir()) and not (dst / "summary.json").exists():
            raise FileExistsError(f"{dst} exists and does not hold earlier results; "
                                  "refusing to overwrite")
        shutil.rmtree(dst)
    os.replace(src, dst)


def _write_outputs(cfg, specs, results, out: Path):
    param = cfg.sweep["parameter"] if cfg.sweep else None
    (out / "metrics").mkdir()
    (out / "drift_logs").mkdir()
    runs = []
    for spec, res in zip(specs, results):
        tag = spec.tag(param)
        reporting.write_metrics_csv(out / "metrics" / f"{tag}.csv", res["metrics"])
        reporting.write_drift_log_csv(out / "drift_logs" / f"{tag}.csv", res["log"])
        reporting.write_drift_log_jsonl(out / "drift_logs" / f"{tag}.jsonl", res["log"])
        runs.append({"run": tag, "seed": spec.seed, "detector": spec.detector.label,
                     "sweep_value": spec.value, "detection": res["detection"],
                     "mean_pmAUC": res["mean_pmAUC"], "mean_pmGM": res["mean_pmGM"],
                     "drift_batches": res["drift_batches"], "affected": res["affected"]})
    agg = aggregate(runs)
    summary = {"config": _config_echo(cfg), "runs": runs, "aggregate": agg}
    reporting.write_json(out / "summary.json", summary)
    if param:
        rows = [{"detector": a["detector"], "parameter": param, "value": a["sweep_value"],
                 "pmAUC": a["mean_pmAUC"], "pmGM": a["mean_pmGM"], "n_runs": a["n_runs"]}
                for a in agg]
        reporting.write_rows(out / "plot_data.csv", rows,
                             ("detector", "parameter", "value", "pmAUC", "pmGM", "n_runs"))
    if cfg.figures:
        from . import plotting
        (out / "figures").mkdir()
        if param:
            for metric in ("pmAUC", "pmGM"):
                plotting.plot_sweep(out / "figures" / f"{metric}_vs_{param}.png", rows,
                                    param, metric)
        else:
            drifts = results[0]["drift_batches"] if results else []
            for metric in ("pmAUC", "pmGM"):
                plotting.plot_metric_series(out / "figures" / f"{metric}_series.png",
                                            _mean_series(specs, results, metric),
                                            drifts, metric)


def aggregate(runs: list) -> list:
    """Seed-averaged summaries per (detector, sweep value), in first-seen order."""
    groups: dict = {}
    for r in runs:
        groups.setdefault((r["detector"], r["sweep_value"]), []).append(r)
    out = []
    for (det, val), rs in groups.items():
        dets = [r["detection"] for r in rs]
        out.append({
            "detector": det, "sweep_value": val, "n_runs": len(rs),
            "mean_pmAUC": _nanmean([r["mean_pmAUC"] for r in rs]),
            "mean_pmGM": _nanmean([r["mean_pmGM"] for r in rs]),
            "mean_delay": _nanmean([d["mean_delay"] for d in dets]),
            "false_alarms_per_100": _nanmean([d["false_alarms_per_100"] for d in dets]),
            "miss_rate": _nanmean([d["miss_rate"] for d in dets]),
            "attribution_precision": _nanmean([d["attribution_precision"] for d in dets]),
            "attribution_recall": _nanmean([d["attribution_recall"] for d in dets]),
        })
    return out


def _mean_series(specs, results, metric):
    acc: dict = {}
    for spec, res in zip(specs, results):
        acc.setdefault(spec.detector.label, []).append([r[metric] for r in res["metrics"]])
    series = {}
    for name, runs in acc.items():
        n = min(len(r) for r in runs)
        m = np.nanmean(np.array([r[:n] for r in runs], dtype=float), axis=0) \
            if n else np.array([])
        series[name] = [(i, float(v)) for i, v in enumerate(m)]
    return series


def _config_echo(cfg: ExperimentConfig) -> dict:
    d = dataclasses.asdict(cfg)
    d["output"] = str(cfg.output)
    d.pop("base_dir")
    return d


def with_overrides(cfg: ExperimentConfig, seed: int | None = None,
                   length: int | None = None) -> ExperimentConfig:
    """Apply command-line ``--seed`` / ``--length`` on top of a loaded config."""
    if seed is not None:
        cfg = dataclasses.replace(cfg, seeds=[seed])
    if length is not None:
        if length < 10 * cfg.batch_size:
            raise ConfigError("length must cover at least 10 batches")
        cfg = dataclasses.replace(cfg, length_cap=length)
    return cfg


__all__ = ["ExperimentConfig", "DetectorSpec", "RunSpec", "load_config", "validate_config",
           "plan", "execute", "run_experiment", "aggregate", "with_overrides",
           "ConfigError", "SchemaError"]
