"""Command-line entry point: ``steinbridge {data,train,convlab,eval}``.

Each run reads one JSON config file (optional) plus ``--set key=value``
overrides.  Every output file carries the config hash, the seed and the
artifact version.
"""
from __future__ import annotations

import argparse
import copy
import hashlib
import json
import os
import sys
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from . import convlab as cl
from . import metrics as mt
from . import synthdata as sd
from . import trainer as tr
from .autodiff import engine as ad
from .numkit import RbfKernel, RngStream, median_heuristic

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CHECK_FAILED = 3
EXIT_NUMERICAL = 4
EXIT_DATA = 5


class ConfigError(ValueError):
    pass


@dataclass
class DataSpec:
    dataset: str = "two-circle"
    n: int = 2000
    held_out: int = 2000
    subsample: int | None = None
    n_noise: int = 0
    noise_scale: float = sd.NOISE_SCALE
    path: str | None = None  # train on an existing CSV instead of sampling


@dataclass
class MetricSpec:
    n_samples: int = 2000
    hsr_threshold: float | None = None  # None: dataset default under hsr_reading
    hsr_reading: str = "variance"  # how sigma in the default threshold is read: "variance" or "std"
    grid_resolution: int = 300
    grid_half_width: float | None = None  # None: dataset default
    auc_negatives_per_center: int = 10
    auc_radius: float | None = None
    mmd_bandwidth: float | None = None  # None: median heuristic on held-out data


@dataclass
class ConvlabSpec:
    checks: list = field(default_factory=lambda: ["prop1", "zoo", "thm4", "thm3"])
    prop1_etas: list = field(default_factory=lambda: [round(0.1 * k, 1) for k in range(1, 10)])
    prop1_steps: int = 10_000
    prop1_starts: int = 10
    prop1_order: str = "proof"
    zoo_steps: int = 10_000
    thm4_instances: int = 20
    thm4_max_rank: int = 5
    thm3_instances: int = 10
    trajectory_rows: int = 2000


SECTIONS = {"data": DataSpec, "train": tr.TrainConfig, "metrics": MetricSpec, "convlab": ConvlabSpec}
TOP_LEVEL = {"seed", "out_dir"} | set(SECTIONS)


@dataclass
class RunConfig:
    seed: int = 0
    out_dir: str = "runs/default"
    data: DataSpec = field(default_factory=DataSpec)
    train: tr.TrainConfig = field(default_factory=tr.TrainConfig)
    metrics: MetricSpec = field(default_factory=MetricSpec)
    convlab: ConvlabSpec = field(default_factory=ConvlabSpec)

    def to_dict(self) -> dict:
        return {"seed": self.seed, "out_dir": self.out_dir, **{k: asdict(getattr(self, k)) for k in SECTIONS}}

    def hash(self) -> str:
        """Content hash of everything except the seed and output location."""
        d = self.to_dict()
        d.pop("seed")
        d.pop("out_dir")
        d["train"].pop("seed")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _merge(base: dict, patch: dict, where: str) -> dict:
    out = copy.deepcopy(base)
    for k, v in patch.items():
        if k not in out:
            raise ConfigError(f"unknown key {where}{k}")
        if isinstance(out[k], dict) and isinstance(v, dict):
            out[k] = _merge(out[k], v, f"{where}{k}.")
        else:
            out[k] = v
    return out


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def build_config(doc: dict | None = None, overrides=()) -> RunConfig:
    """Defaults <- config file <- ``key.sub=value`` overrides; unknown keys raise ConfigError."""
    merged = RunConfig().to_dict()
    if doc:
        if not isinstance(doc, dict):
            raise ConfigError("config file must hold a JSON object")
        merged = _merge(merged, doc, "")
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, val = item.split("=", 1)
        parts = key.split(".")
        patch = _parse_value(val)
        for p in reversed(parts):
            patch = {p: patch}
        merged = _merge(merged, patch, "")
    try:
        sections = {}
        for name, cls in SECTIONS.items():
            sections[name] = cls(**merged[name])
        cfg = RunConfig(int(merged["seed"]), str(merged["out_dir"]), **sections)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    # the run seed drives training unless the train section sets its own
    if doc is None or "seed" not in (doc.get("train") or {}):
        if not any(o.startswith("train.seed=") for o in overrides):
            cfg.train.seed = cfg.seed
    return cfg


def load_config(path: str | None, overrides=()) -> RunConfig:
    doc = None
    if path:
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    return build_config(doc, overrides)


# --- output helpers -----------------------------------------------------------

def fmt(x) -> str:
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return f"{float(x):.17g}"


def provenance(cfg: RunConfig) -> dict:
    return {"config_hash": cfg.hash(), "seed": cfg.seed, "artifact_version": __version__}


class CsvWriter:
    """CSV with one leading ``#`` provenance line, then a header row."""

    def __init__(self, path, columns, cfg: RunConfig):
        self.fh = open(path, "w", newline="")
        p = provenance(cfg)
        self.fh.write("# " + " ".join(f"{k}={v}" for k, v in p.items()) + "\n")
        self.fh.write(",".join(columns) + "\n")
        self.columns = columns

    def row(self, values):
        self.fh.write(",".join(v if isinstance(v, str) else fmt(v) for v in values) + "\n")
        self.fh.flush()

    def close(self):
        self.fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_csv(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", comments="#", skiprows=2, ndmin=2)


def write_json(path, obj, cfg: RunConfig):
    doc = {**provenance(cfg), **obj}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


# --- data -----------------------------------------------------------------------

def make_datasets(cfg: RunConfig):
    """(train, held_out, mixture) as a pure function of the config and seed."""
    spec = cfg.data
    m = sd.get_mixture(spec.dataset)
    root = RngStream(cfg.seed).child("data")
    if spec.path:
        train = read_csv(spec.path)
    else:
        train = sd.sample(m, spec.n, root.child("train"))
        if spec.subsample is not None:
            train = sd.subsample(train, spec.subsample, root.child("subsample"))
        if spec.n_noise:
            train = sd.add_noise(train, spec.n_noise, root.child("noise"), spec.noise_scale)
    held = sd.sample(m, spec.held_out, root.child("held_out"))
    return train, held, m


def cmd_data(cfg: RunConfig) -> int:
    os.makedirs(cfg.out_dir, exist_ok=True)
    train, held, _ = make_datasets(cfg)
    for name, X in (("train.csv", train), ("held_out.csv", held)):
        with CsvWriter(os.path.join(cfg.out_dir, name), ("x", "y"), cfg) as w:
            for row in X:
                w.row(row)
    return EXIT_OK


# --- evaluation -----------------------------------------------------------------

class Evaluator:
    def __init__(self, cfg: RunConfig, held: np.ndarray, mixture: sd.GaussianMixture):
        ms = cfg.metrics
        self.cfg, self.held, self.m = cfg, held, mixture
        h = ms.mmd_bandwidth if ms.mmd_bandwidth is not None else median_heuristic(held[:mt.MEDIAN_MAX_ROWS])
        self.kernel = RbfKernel(h)
        if ms.hsr_threshold is not None:
            self.threshold = ms.hsr_threshold
        else:
            try:
                self.threshold = mt.default_hsr_threshold(cfg.data.dataset, ms.hsr_reading)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
        half = ms.grid_half_width
        if half is None:
            base = mt.DEFAULT_GRIDS.get(cfg.data.dataset)
            self.grid = mt.GridSpec(base.lo, base.hi, ms.grid_resolution)
        else:
            self.grid = mt.GridSpec.square(half, ms.grid_resolution)
        self.auc = mt.AucSpec(ms.auc_negatives_per_center, ms.auc_radius)

    def row(self, generator=None, estimator=None) -> dict:
        """Metrics for one (generator, estimator) pair; NaN for a missing model."""
        rng = RngStream(self.cfg.seed).child("eval")
        out = {"mmd": float("nan"), "hsr": float("nan"), "kld": float("nan"), "jsd": float("nan"),
               "auc": float("nan")}
        if generator is not None:
            X = generator.generate(self.cfg.metrics.n_samples, rng.child("samples"))
            out["mmd"] = mt.mmd(X, self.held, self.kernel)
            out["hsr"] = mt.hsr(X, self.m, self.threshold)
        if estimator is not None:
            out["kld"], out["jsd"] = mt.grid_divergences(self.m, estimator, self.grid)
            out["auc"] = mt.density_auc(estimator, self.m, self.auc, rng.child("auc"))
        return out


# --- train ------------------------------------------------------------------------

def cmd_train(cfg: RunConfig, resume: str | None = None) -> int:
    os.makedirs(cfg.out_dir, exist_ok=True)
    ckdir = os.path.join(cfg.out_dir, "checkpoints")
    os.makedirs(ckdir, exist_ok=True)
    train, held, m = make_datasets(cfg)
    ev = Evaluator(cfg, held, m)
    state = None
    if resume:
        state = tr.load_state(resume)
        if state.config != cfg.train:
            raise ConfigError("checkpoint was written under a different train config")
    suffix = f"_from{state.iteration}" if state is not None and state.iteration else ""
    log = CsvWriter(os.path.join(cfg.out_dir, f"train_log{suffix}.csv"), tr.LOG_COLUMNS, cfg)
    met = CsvWriter(os.path.join(cfg.out_dir, f"metrics{suffix}.csv"), mt.METRIC_COLUMNS, cfg)

    def on_log(snap, wall):
        log.row(tr.log_row(snap, wall))

    def on_snapshot(snap, st):
        r = ev.row(st.models.generator, st.models.estimator)
        met.row([snap.iteration] + [r[k] for k in mt.METRIC_COLUMNS[1:]])

    def on_checkpoint(st):
        tr.save_state(os.path.join(ckdir, f"state_{st.iteration:07d}.json"), st)

    try:
        state, _ = tr.train_loop(cfg.train, train, state, on_snapshot, on_log, on_checkpoint)
    except tr.TrainingAborted as exc:
        diag = {"error": str(exc), "stage": exc.stage}
        if exc.snapshot is not None:
            diag["iteration"] = exc.snapshot.iteration
            diag["losses"] = list(exc.snapshot.losses())
            diag["params"] = {k: p.flat().tolist() for k, p in exc.snapshot.params.items()}
        write_json(os.path.join(cfg.out_dir, "abort.json"), diag, cfg)
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    finally:
        log.close()
        met.close()
    tr.save_state(os.path.join(cfg.out_dir, "final_state.json"), state)
    return EXIT_OK


# --- convlab ------------------------------------------------------------------------

def _dump_trajectory(path, traj: cl.Trajectory, cfg: RunConfig, max_rows: int):
    cols = ("iteration",) + tuple(traj.columns) + tuple(traj.diagnostics)
    with CsvWriter(path, cols, cfg) as w:
        for i, row in enumerate(traj.rows()):
            if i > max_rows:
                break
            w.row([row[c] for c in cols])


def cmd_convlab(cfg: RunConfig) -> int:
    spec = cfg.convlab
    os.makedirs(cfg.out_dir, exist_ok=True)
    unknown = set(spec.checks) - {"prop1", "zoo", "thm4", "thm3"}
    if unknown:
        raise ConfigError(f"unknown convlab checks {sorted(unknown)}")
    summary = {}
    rows = spec.trajectory_rows
    if "prop1" in spec.checks:
        rep = cl.verify_prop1(spec.prop1_etas, spec.prop1_starts, spec.prop1_steps, cfg.seed, spec.prop1_order)
        for e in rep["etas"].values():
            e["passed"] = bool(e["rate_ok"] and e["final_distance"] < 1e-8)
        rep["passed"] = all(e["passed"] for e in rep["etas"].values())
        rep["per_step_bound_holds"] = all(e["per_step_ok"] for e in rep["etas"].values())
        summary["prop1"] = rep
        for eta in (0.1, 0.5, 0.9):
            traj = cl.run_1d(lambda s: cl.bridge_1d_step(s, spec.prop1_order), cl.Toy1DState(1.0, 0.0, 0.0, eta), rows)
            _dump_trajectory(os.path.join(cfg.out_dir, f"bridge_1d_eta{eta}.csv"), traj, cfg, rows)
    if "zoo" in spec.checks:
        rep = cl.check_zoo(spec.zoo_steps)
        rep["passed"] = all(v["passed"] for v in rep.values())
        summary["zoo"] = rep
        s0 = cl.Toy1DState(1.0, 0.0, 0.0, 0.1)
        _dump_trajectory(os.path.join(cfg.out_dir, "wgan_1d.csv"), cl.run_1d(cl.wgan_1d_step, s0, rows), cfg, rows)
        for lam in (-0.5, 0.5):
            traj = cl.run_1d(lambda s: cl.reg_1d_step(s, lam), s0, min(rows, 300) if lam > 0 else rows)
            _dump_trajectory(os.path.join(cfg.out_dir, f"reg_1d_lam{lam}.csv"), traj, cfg, rows)
        _dump_trajectory(os.path.join(cfg.out_dir, "va_1d.csv"), cl.va_anneal_1d(steps=spec.zoo_steps), cfg,
                         spec.zoo_steps)
    if "thm4" in spec.checks:
        summary["thm4"] = cl.check_thm4(spec.thm4_instances, spec.thm4_max_rank, seed=cfg.seed)
    if "thm3" in spec.checks:
        summary["thm3"] = cl.check_thm3(spec.thm3_instances, seed=cfg.seed)
    ok = all(v["passed"] for v in summary.values())
    summary["all_passed"] = ok
    write_json(os.path.join(cfg.out_dir, "convlab_summary.json"), summary, cfg)
    return EXIT_OK if ok else EXIT_CHECK_FAILED


# --- eval ------------------------------------------------------------------------------

def _models_from_checkpoint(path):
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") == tr.STATE_FORMAT:
        st = tr.state_from_dict(doc)
        return st.models.generator, st.models.estimator, st.iteration
    from .models import Generator, EnergyModel, model_from_dict
    model = model_from_dict(doc)
    if isinstance(model, Generator):
        return model, None, 0
    if isinstance(model, EnergyModel):
        return None, model, 0
    raise ConfigError("checkpoint holds neither a generator nor an energy model")


def cmd_eval(cfg: RunConfig, checkpoint: str | None, oracle: bool = False) -> int:
    os.makedirs(cfg.out_dir, exist_ok=True)
    train, held, m = make_datasets(cfg)
    ev = Evaluator(cfg, held, m)
    if oracle:
        gen, est, it = _MixtureSampler(m), m, 0
    else:
        if not checkpoint:
            raise ConfigError("eval needs --checkpoint or --oracle")
        gen, est, it = _models_from_checkpoint(checkpoint)
        for model in (gen, est):
            if model is not None and model.dim != m.dim:
                raise ValueError(f"model dimension {model.dim} does not match dataset dimension {m.dim}")
    r = ev.row(gen, est)
    with CsvWriter(os.path.join(cfg.out_dir, "eval.csv"), mt.METRIC_COLUMNS, cfg) as w:
        w.row([it] + [r[k] for k in mt.METRIC_COLUMNS[1:]])
    return EXIT_OK


class _MixtureSampler:
    def __init__(self, m):
        self.m = m
        self.dim = m.dim

    def generate(self, n, rng):
        return sd.sample(self.m, n, rng)


# --- entry point ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="steinbridge", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("data", "train", "convlab", "eval"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config entry, e.g. train.iterations=100")
        sp.add_argument("--out", help="output directory (same as --set out_dir=...)")
        if name == "train":
            sp.add_argument("--resume", help="training-state checkpoint to continue from")
        if name == "eval":
            sp.add_argument("--checkpoint", help="training state or model checkpoint")
            sp.add_argument("--oracle", action="store_true", help="evaluate the true mixture")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = list(args.set)
    if args.out:
        overrides.append(f"out_dir={json.dumps(args.out)}")
    try:
        cfg = load_config(args.config, overrides)
        if args.command == "data":
            return cmd_data(cfg)
        if args.command == "train":
            return cmd_train(cfg, args.resume)
        if args.command == "convlab":
            return cmd_convlab(cfg)
        return cmd_eval(cfg, args.checkpoint, args.oracle)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ad.NonFiniteError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
