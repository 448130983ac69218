"""Batch driver: simulate topologies over traces, extract features, train and
evaluate classifiers, and emit report CSVs.

Subcommands:
  simulate       run excitation -> transducer -> circuit -> acquisition and
                 write per-signal sensing CSVs
  evaluate       run the detection pipeline and energy ledger over simulated
                 signal files, writing all report CSVs
  energy-report  energy ledger only
  end2end        simulate followed by evaluate

Exit codes: 0 ok, 1 validation error, 2 runtime error. All randomness fans
out from the global seed, so repeated runs with the same seed produce
byte-identical outputs.
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import classify, energy, pipeline
from .acquisition import (AdcConfig, ShuntConfig, SensingRecord, acquisition_power,
                          sample_accelerometer, sample_signals)
from .circuit import TOPOLOGIES, CircuitParams, simulate
from .config import ConfigError, derive_seed, load_kv_file, parse_kv_text, parse_str_list
from .excitation import MODES, _profiles_from_kv, gen_mode_trace, load_trace_csv
from .transducer import TransducerParams

KEH_SIGNAL_TOPOLOGY = {
    "OC-AC-V": "open_circuit", "OC-REC-V": "open_circuit",
    "CL-AC-V": "converterless", "CL-REC-V": "converterless",
    "CL-C": "converterless", "CB-C": "converter_based",
}
EVAL_SIGNALS = tuple(KEH_SIGNAL_TOPOLOGY) + ("ACC",)

SCHEMAS = {
    "signal": "time_s,code,value,signal_id,mode",
    "raw": "time_s,v_ac,i_ac,v_rect,i_rect,v_cap,i_load,load_on,displacement",
    "metrics": "signal_id,classifier,window_s,accuracy,ci95",
    "accuracy_vs_window": "signal_id,window_s,accuracy,ci95",
    "rfe_table": "signal_id,initial_features,selected_features,cv_score,selected_names",
    "energy_report": "mode,topology,signal_id,trial,harvested_uw,acquisition_uw,apr,classification,source",
    "apr_vs_accuracy": "mode,signal_id,apr,accuracy",
    "confusion": "truth",  # prefix; remaining columns are class names
}


@dataclass
class RunConfig:
    modes: tuple = MODES
    trials: int = 4
    duration_s: float = 60.0
    topologies: tuple = TOPOLOGIES
    windows: tuple = (1, 2, 3, 4, 5, 6, 7, 8, 9, 10)
    classifiers: tuple = classify.ALGORITHMS
    signals: tuple = EVAL_SIGNALS
    sweep_signals: tuple = ("ACC", "OC-AC-V", "CL-AC-V", "CB-C")
    rfe_signals: tuple = ("CB-C",)
    out_dir: Path = Path("out")
    seed: int = 42
    dump_raw: bool = False
    folds: int = 10
    trace_csvs: tuple = ()           # (mode, path) pairs appended as extra trials
    trace_csv_rate: float = 10000.0
    profiles: dict = field(default_factory=dict)
    tparams: TransducerParams = field(default_factory=TransducerParams)
    circuit_kv: dict = field(default_factory=dict)
    adc: AdcConfig = field(default_factory=AdcConfig)
    shunt: ShuntConfig = field(default_factory=ShuntConfig)

    def validate(self):
        if not self.modes:
            raise ConfigError("run.modes: at least one trace source required")
        bad = [m for m in self.modes if m not in MODES]
        if bad:
            raise ConfigError(f"run.modes: unknown modes {bad}; valid: {list(MODES)}")
        if not self.topologies:
            raise ConfigError("run.topologies: at least one topology required")
        bad = [t for t in self.topologies if t not in TOPOLOGIES]
        if bad:
            raise ConfigError(f"run.topologies: unknown {bad}; valid: {list(TOPOLOGIES)}")
        if self.trials < 1:
            raise ConfigError("run.trials must be >= 1")
        if self.duration_s <= 0:
            raise ConfigError("run.duration_s must be > 0")
        if not self.windows or any(not (1 <= w <= 10) for w in self.windows):
            raise ConfigError("run.windows must be a non-empty list within [1, 10] s")
        bad = [c for c in self.classifiers if c not in classify.ALGORITHMS]
        if bad:
            raise ConfigError(f"run.classifiers: unknown {bad}; valid: {list(classify.ALGORITHMS)}")
        for group in (self.signals, self.sweep_signals, self.rfe_signals):
            bad = [s for s in group if s not in EVAL_SIGNALS]
            if bad:
                raise ConfigError(f"unknown signals {bad}; valid: {list(EVAL_SIGNALS)}")
        if self.folds < 2:
            raise ConfigError("run.folds must be >= 2")

    def circuit_params(self, topology: str) -> CircuitParams:
        return CircuitParams.from_config(self.circuit_kv, topology)


def _default_kv() -> dict[str, str]:
    text = resources.files("kehsim.data").joinpath("default_profiles.cfg").read_text()
    return parse_kv_text(text, "default_profiles.cfg")


def load_run_config(config_path: str | None, out_dir: str | None, seed: int | None,
                    dump_raw: bool = False) -> RunConfig:
    kv = _default_kv()
    if config_path:
        kv.update(load_kv_file(config_path))

    cfg = RunConfig()
    if "run.modes" in kv:
        cfg.modes = tuple(parse_str_list(kv["run.modes"]))
    if "run.trials" in kv:
        cfg.trials = int(kv["run.trials"])
    if "run.duration_s" in kv:
        cfg.duration_s = float(kv["run.duration_s"])
    if "run.topologies" in kv:
        cfg.topologies = tuple(parse_str_list(kv["run.topologies"]))
    if "run.windows" in kv:
        cfg.windows = tuple(float(w) for w in parse_str_list(kv["run.windows"]))
    if "run.classifiers" in kv:
        cfg.classifiers = tuple(parse_str_list(kv["run.classifiers"]))
    if "run.signals" in kv:
        cfg.signals = tuple(parse_str_list(kv["run.signals"]))
    if "run.sweep_signals" in kv:
        cfg.sweep_signals = tuple(parse_str_list(kv["run.sweep_signals"]))
    if "run.rfe_signals" in kv:
        cfg.rfe_signals = tuple(parse_str_list(kv["run.rfe_signals"]))
    if "run.seed" in kv:
        cfg.seed = int(kv["run.seed"])
    if "run.folds" in kv:
        cfg.folds = int(kv["run.folds"])
    if "run.trace_csvs" in kv:
        pairs = []
        for tok in parse_str_list(kv["run.trace_csvs"]):
            label, _, path = tok.partition(":")
            if not path:
                raise ConfigError(f"run.trace_csvs entries must be mode:path, got {tok!r}")
            pairs.append((label.strip(), path.strip()))
        cfg.trace_csvs = tuple(pairs)
    if "run.trace_csv_rate" in kv:
        cfg.trace_csv_rate = float(kv["run.trace_csv_rate"])

    cfg.profiles = _profiles_from_kv(kv)
    cfg.tparams = TransducerParams.from_config(kv)
    cfg.circuit_kv = kv
    cfg.adc = AdcConfig(
        resolution_bits=int(kv.get("adc.resolution_bits", 12)),
        full_scale=float(kv.get("adc.full_scale", 3.0)),
        sample_rate=float(kv.get("adc.sample_rate", 100)))
    cfg.shunt = ShuntConfig(
        shunt_resistance=float(kv.get("shunt.resistance", 10.0)),
        amplifier_gain=float(kv.get("shunt.amplifier_gain", 100.0)))

    if out_dir is not None:
        cfg.out_dir = Path(out_dir)
    if seed is not None:
        cfg.seed = seed
    cfg.dump_raw = dump_raw
    cfg.validate()
    return cfg


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _write_csv(path: Path, header: str, rows: list) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")
    return path


def _validate_outputs(written: dict[Path, str]):
    """Re-open every emitted CSV and check its header against the registry."""
    for path, schema_key in written.items():
        expected = SCHEMAS[schema_key]
        with open(path) as fh:
            header = fh.readline().rstrip("\n")
        if schema_key == "confusion":
            ok = header.startswith(expected)
        else:
            ok = header == expected
        if not ok:
            raise RuntimeError(f"schema validation failed for {path}: "
                               f"header {header!r} does not match {expected!r}")


def _trace_sources(cfg: RunConfig):
    """Yield (mode, trial, trace) for all configured sources."""
    for mode in cfg.modes:
        profile = cfg.profiles.get(mode)
        for trial in range(cfg.trials):
            trace = gen_mode_trace(mode, cfg.duration_s,
                                   derive_seed(cfg.seed, "trace", mode, trial),
                                   profile=profile)
            yield mode, trial, trace
    extra = {}
    for label, path in cfg.trace_csvs:
        trial = cfg.trials + extra.get(label, 0)
        extra[label] = extra.get(label, 0) + 1
        yield label, trial, load_trace_csv(path, cfg.trace_csv_rate, label)


def _signal_path(out_dir: Path, signal_id: str, mode: str, trial: int) -> Path:
    return out_dir / "signals" / f"{signal_id}_{mode}_t{trial}.csv"


def _record_rows(rec: SensingRecord):
    times = np.arange(rec.codes.size) / rec.sample_rate
    return [(t, int(c), v, rec.signal_id, rec.mode)
            for t, c, v in zip(times, rec.codes, rec.engineering_values)]


def cmd_simulate(cfg: RunConfig) -> dict[Path, str]:
    written: dict[Path, str] = {}
    for mode, trial, trace in _trace_sources(cfg):
        for rec in sample_accelerometer(trace, cfg.adc):
            p = _write_csv(_signal_path(cfg.out_dir, rec.signal_id, mode, trial),
                           SCHEMAS["signal"], _record_rows(rec))
            written[p] = "signal"
        for topology in cfg.topologies:
            sim = simulate(trace, cfg.tparams, cfg.circuit_params(topology))
            for rec in sample_signals(sim, cfg.adc, cfg.shunt):
                p = _write_csv(_signal_path(cfg.out_dir, rec.signal_id, mode, trial),
                               SCHEMAS["signal"], _record_rows(rec))
                written[p] = "signal"
            if cfg.dump_raw:
                p = cfg.out_dir / "raw" / f"{mode}_t{trial}_{topology}.csv"
                p.parent.mkdir(parents=True, exist_ok=True)
                sim.to_csv(p)
                written[p] = "raw"
    _validate_outputs(written)
    return written


def _load_record(path: Path) -> SensingRecord:
    if not path.exists():
        raise FileNotFoundError(str(path))
    data = np.genfromtxt(path, delimiter=",", skip_header=1,
                         dtype=None, encoding="utf-8", names=SCHEMAS["signal"].split(","))
    codes = np.atleast_1d(data["code"]).astype(np.int64)
    values = np.atleast_1d(data["value"]).astype(np.float64)
    times = np.atleast_1d(data["time_s"]).astype(np.float64)
    rate = 1.0 / (times[1] - times[0]) if times.size > 1 else 1.0
    sig = str(np.atleast_1d(data["signal_id"])[0])
    mode = str(np.atleast_1d(data["mode"])[0])
    return SensingRecord(signal_id=sig, codes=codes, engineering_values=values,
                         sample_rate=round(rate, 6), mode=mode)


def _collect_record_groups(cfg: RunConfig, signal_id: str):
    """Load all (mode, trial) record groups of one evaluation signal."""
    groups = []
    missing = []
    for mode in cfg.modes:
        for trial in range(cfg.trials):
            if signal_id == "ACC":
                paths = [_signal_path(cfg.out_dir, ax, mode, trial)
                         for ax in ("ACC-X", "ACC-Y", "ACC-Z")]
            else:
                paths = [_signal_path(cfg.out_dir, signal_id, mode, trial)]
            if any(not p.exists() for p in paths):
                missing.extend(p for p in paths if not p.exists())
                continue
            groups.append([_load_record(p) for p in paths])
    if missing:
        raise FileNotFoundError(
            "missing simulated signal files (run `simulate` first):\n  "
            + "\n  ".join(str(p) for p in missing))
    return groups


class _Evaluator:
    """Holds per-run caches for the evaluate command."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self._groups: dict[str, list] = {}
        self._datasets: dict[tuple, pipeline.Dataset] = {}
        self.selected: dict[str, list[int]] = {}

    def groups(self, signal_id: str):
        if signal_id not in self._groups:
            self._groups[signal_id] = _collect_record_groups(self.cfg, signal_id)
        return self._groups[signal_id]

    def dataset(self, signal_id: str, window_s: float) -> pipeline.Dataset:
        key = (signal_id, window_s)
        if key not in self._datasets:
            ds = pipeline.dataset_from_records(self.groups(signal_id), window_s,
                                               on_error="skip")
            if signal_id in self.selected:
                ds = ds.select_features(self.selected[signal_id])
            self._datasets[key] = ds
        return self._datasets[key]

    def can_evaluate(self, ds: pipeline.Dataset) -> str | None:
        counts = ds.class_counts()
        if len(counts) < len(self.cfg.modes):
            have = sorted(counts)
            return f"only {have} present after stop removal"
        if min(counts.values()) < self.cfg.folds:
            return f"a class has fewer than {self.cfg.folds} rows"
        return None


def cmd_evaluate(cfg: RunConfig) -> dict[Path, str]:
    t_start = time.time()
    ev = _Evaluator(cfg)
    written: dict[Path, str] = {}
    reports = cfg.out_dir / "reports"
    w0 = cfg.windows[0]

    # Feature selection (Table-style RFE summary), applied downstream.
    rfe_rows = []
    for signal_id in cfg.rfe_signals:
        if signal_id not in cfg.signals:
            continue
        ds = ev.dataset(signal_id, w0)
        reason = ev.can_evaluate(ds)
        if reason:
            print(f"[evaluate] skip RFE for {signal_id}: {reason}", file=sys.stderr)
            continue
        selected, scores = pipeline.rfe(ds, folds=cfg.folds,
                                        seed=derive_seed(cfg.seed, "rfe", signal_id))
        ev.selected[signal_id] = selected
        ev._datasets.clear()
        names = ";".join(ds.feature_names[i] for i in selected)
        rfe_rows.append((signal_id, ds.n_features, len(selected),
                         scores[len(selected)], names))
        print(f"[evaluate] RFE {signal_id}: {ds.n_features} -> {len(selected)} features",
              file=sys.stderr)
    if rfe_rows:
        p = _write_csv(reports / "rfe_table.csv", SCHEMAS["rfe_table"], rfe_rows)
        written[p] = "rfe_table"

    # Classifier comparison at the smallest window.
    metrics_rows = []
    confusions: dict[str, classify.ConfusionMatrix] = {}
    sweep_rows = []
    for signal_id in cfg.signals:
        ds = ev.dataset(signal_id, w0)
        reason = ev.can_evaluate(ds)
        if reason:
            print(f"[evaluate] skip {signal_id}: {reason}", file=sys.stderr)
            continue
        for algo in cfg.classifiers:
            spec = classify.ClassifierSpec(
                algo, seed=derive_seed(cfg.seed, "clf", signal_id, algo))
            acc, ci, cm = classify.cross_validate(
                ds, spec, folds=cfg.folds,
                seed=derive_seed(cfg.seed, "cv", signal_id, algo, w0))
            metrics_rows.append((signal_id, algo, w0, acc, ci))
            if algo == "random_forest":
                confusions[signal_id] = cm
                sweep_rows.append((signal_id, w0, acc, ci))
            print(f"[evaluate] {signal_id} {algo} w={w0}s: acc={acc:.4f}",
                  file=sys.stderr)
    p = _write_csv(reports / "metrics.csv", SCHEMAS["metrics"], metrics_rows)
    written[p] = "metrics"

    for signal_id, cm in confusions.items():
        rows = [(cls,) + tuple(int(v) for v in cm.counts[i])
                for i, cls in enumerate(cm.classes)]
        p = _write_csv(reports / f"confusion_{signal_id}_random_forest_w{w0:g}.csv",
                       "truth," + ",".join(str(c) for c in cm.classes), rows)
        written[p] = "confusion"

    # Window sweep with the forest classifier.
    for signal_id in cfg.sweep_signals:
        if signal_id not in cfg.signals:
            continue
        for ws in cfg.windows:
            if ws == w0 and any(r[0] == signal_id for r in sweep_rows):
                continue
            ds = ev.dataset(signal_id, ws)
            reason = ev.can_evaluate(ds)
            if reason:
                print(f"[evaluate] skip {signal_id} w={ws}: {reason}", file=sys.stderr)
                continue
            spec = classify.ClassifierSpec(
                "random_forest", seed=derive_seed(cfg.seed, "clf", signal_id, "rf"))
            acc, ci, _ = classify.cross_validate(
                ds, spec, folds=cfg.folds,
                seed=derive_seed(cfg.seed, "cv", signal_id, "random_forest", ws))
            sweep_rows.append((signal_id, ws, acc, ci))
            print(f"[evaluate] sweep {signal_id} w={ws}s: acc={acc:.4f}", file=sys.stderr)
    sweep_rows.sort(key=lambda r: (r[0], r[1]))
    p = _write_csv(reports / "accuracy_vs_window.csv", SCHEMAS["accuracy_vs_window"],
                   sweep_rows)
    written[p] = "accuracy_vs_window"

    # Energy ledger and the APR-vs-accuracy join.
    energy_rows, apr_by = _energy_rows(cfg)
    p = _write_csv(reports / "energy_report.csv", SCHEMAS["energy_report"], energy_rows)
    written[p] = "energy_report"

    apr_acc_rows = []
    for signal_id in cfg.signals:
        cm = confusions.get(signal_id)
        if cm is None:
            continue
        for i, mode in enumerate(cm.classes):
            apr_val = apr_by.get((mode, signal_id), 0.0)
            apr_acc_rows.append((mode, signal_id, apr_val, float(cm.per_class_recall[i])))
    p = _write_csv(reports / "apr_vs_accuracy.csv", SCHEMAS["apr_vs_accuracy"],
                   apr_acc_rows)
    written[p] = "apr_vs_accuracy"

    _validate_outputs(written)
    print(f"[evaluate] done in {time.time() - t_start:.1f}s", file=sys.stderr)
    return written


def _energy_rows(cfg: RunConfig):
    """Per-run energy rows plus reference rows; returns (rows, mean APR lookup)."""
    runs = []
    for mode, trial, trace in _trace_sources(cfg):
        for topology in cfg.topologies:
            sim = simulate(trace, cfg.tparams, cfg.circuit_params(topology))
            for signal_id, topo in KEH_SIGNAL_TOPOLOGY.items():
                if topo == topology and signal_id in cfg.signals:
                    runs.append((mode, trial, topology, sim, signal_id))
        if "ACC" in cfg.signals:
            runs.append((mode, trial, "none", None, "ACC"))

    capacitance = cfg.circuit_params(cfg.topologies[0]).storage_capacitance
    rows = []
    apr_sum: dict[tuple, list] = {}
    for mode, trial, topology, sim, signal_id in runs:
        p_acq = acquisition_power(signal_id)
        if sim is None or topology == "open_circuit":
            p_har = 0.0
        else:
            p_har = energy.harvested_power_of_run(sim, capacitance,
                                                  cfg.adc.sample_rate)
        ratio = energy.apr(p_har, p_acq)
        rows.append((mode, topology, signal_id, trial, p_har, p_acq, ratio,
                     energy.classify_apr(ratio), "simulated"))
        apr_sum.setdefault((mode, signal_id), []).append(ratio)
    for ref in energy.reference_rows():
        rows.append((ref.mode, ref.topology, ref.signal_id, 0, ref.harvested_uw,
                     ref.acquisition_uw, ref.apr, ref.classification, "reference"))
    apr_mean = {key: float(np.mean(v)) for key, v in apr_sum.items()}
    return rows, apr_mean


def cmd_energy_report(cfg: RunConfig) -> dict[Path, str]:
    rows, _ = _energy_rows(cfg)
    p = _write_csv(cfg.out_dir / "reports" / "energy_report.csv",
                   SCHEMAS["energy_report"], rows)
    written = {p: "energy_report"}
    _validate_outputs(written)
    return written


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="kehsim",
        description="Kinetic-energy-harvesting sensing simulator and "
                    "transport-mode-detection evaluator")
    parser.add_argument("command",
                        choices=["simulate", "evaluate", "energy-report", "end2end"])
    parser.add_argument("--config", default=None, help="flat key-value config file")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="global seed override")
    parser.add_argument("--dump-raw", action="store_true",
                        help="also write dense per-step simulation CSVs")
    args = parser.parse_args(argv)

    try:
        cfg = load_run_config(args.config, args.out, args.seed, args.dump_raw)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    try:
        if args.command == "simulate":
            cmd_simulate(cfg)
        elif args.command == "evaluate":
            cmd_evaluate(cfg)
        elif args.command == "energy-report":
            cmd_energy_report(cfg)
        else:
            cmd_simulate(cfg)
            cmd_evaluate(cfg)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - runtime failures map to exit 2
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
