"""Config-driven experiment runs: training modes, sweeps and artifacts.

A run is a pure function of (config, seed): datasets, network inits and
batch order are all derived from the run seed, so re-running a command
reproduces its output files byte for byte. Run directories are named by
a hash of the resolved config plus the seed.

Artifacts per run: record.json (the full RunRecord), one .ckpt JSON per
network, logits_val.csv (student validation logits plus labels), and
calibration.csv/.json for the student.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .calibration import CalibrationReport, bin_predictions, report_csv_text, report_json_dict
from .data import Dataset, gen_gaussian_blobs, gen_spirals, load_csv, split, standardize
from .models import Mlp, MlpSpec
from .objectives import DistillConfig
from .optim import SgdMomentum, StepDecaySchedule
from .training import (
    ROLE_BATCHES,
    ROLE_DATA,
    ROLE_EXTRA_NET,
    ROLE_SPLIT,
    ROLE_STUDENT,
    ROLE_TEACHER,
    RunRecord,
    cotrain_epoch,
    derive_seed,
    evaluate,
    multinet_epoch,
    offline_distill_epoch,
    scratch_epoch,
)

MODES = ("scratch", "vanilla-kd", "dml", "bd-kd", "1t2s", "2t1s")
DATASET_KINDS = ("spirals", "blobs", "csv")


# ----------------------------------------------------------------------
# configuration schema
# ----------------------------------------------------------------------


@dataclass
class DatasetConfig:
    kind: str = "spirals"
    num_classes: int = 3
    n_per_class: int = 80
    noise: float = 0.3
    spread: float = 1.0
    dim: int = 2
    path: str | None = None
    label_column: str = "label"
    val_fraction: float = 0.4
    standardize: bool = True

    def __post_init__(self):
        if self.kind not in DATASET_KINDS:
            raise ValueError(f"unknown dataset kind {self.kind!r}, expected one of {DATASET_KINDS}")
        if self.kind == "csv" and not self.path:
            raise ValueError("dataset.path is required for kind 'csv'")


@dataclass
class NetworkConfig:
    hidden_widths: tuple[int, ...] = (16,)

    def __post_init__(self):
        self.hidden_widths = tuple(int(w) for w in self.hidden_widths)


@dataclass
class LossConfig:
    alpha_t: float = 1.0
    alpha_s: float = 1.0
    beta_t: float = 1.0
    beta_s: float = 1.0
    tau: float = 2.0
    v: float = 2.0
    student_kl: str = "balanced"
    teacher_kl: str = "reverse"
    reduction: str = "mean"
    # Hard-label weight of the offline baseline; CE-dominant, so the
    # frozen teacher's near-one-hot soft labels stay a mild regularizer.
    vanilla_alpha: float = 0.9

    def distill_config(self, **overrides) -> DistillConfig:
        base = {
            "alpha_t": self.alpha_t, "alpha_s": self.alpha_s,
            "beta_t": self.beta_t, "beta_s": self.beta_s,
            "tau": self.tau, "v": self.v,
            "student_kl": self.student_kl, "teacher_kl": self.teacher_kl,
            "reduction": self.reduction,
        }
        base.update(overrides)
        return DistillConfig(**base)


@dataclass
class OptimConfig:
    epochs: int = 60
    base_lr: float = 0.05
    momentum: float = 0.9
    milestones: tuple[int, ...] = (30, 45)
    decay_factor: float = 0.1
    weight_decay: float = 0.0
    batch_size: int = 32

    def __post_init__(self):
        self.milestones = tuple(int(m) for m in self.milestones)
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass
class ExperimentConfig:
    mode: str = "bd-kd"
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    teacher: NetworkConfig = field(default_factory=lambda: NetworkConfig(hidden_widths=(64, 64)))
    student: NetworkConfig = field(default_factory=lambda: NetworkConfig(hidden_widths=(8,)))
    teacher2: NetworkConfig | None = None
    student2: NetworkConfig | None = None
    loss: LossConfig = field(default_factory=LossConfig)
    optim: OptimConfig = field(default_factory=OptimConfig)
    calibration_bins: int = 10

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}, expected one of {MODES}")
        self.seeds = tuple(int(s) for s in self.seeds)

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        return _build_dataclass(cls, raw, path="")

    def to_dict(self) -> dict:
        """Fully resolved (defaults included) plain-JSON view of the config."""
        return _as_jsonable(dataclasses.asdict(self))


_NESTED_FIELDS = {
    "dataset": DatasetConfig,
    "teacher": NetworkConfig,
    "student": NetworkConfig,
    "teacher2": NetworkConfig,
    "student2": NetworkConfig,
    "loss": LossConfig,
    "optim": OptimConfig,
}


def _build_dataclass(cls, raw: dict, path: str):
    if not isinstance(raw, dict):
        raise ValueError(f"config section {path or '<root>'} must be an object, got {type(raw).__name__}")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(raw) - known
    if unknown:
        where = f" in {path}" if path else ""
        raise ValueError(f"unknown config key(s){where}: {sorted(unknown)}")
    kwargs = {}
    for key, value in raw.items():
        sub = _NESTED_FIELDS.get(key) if cls is ExperimentConfig else None
        if sub is not None and value is not None:
            kwargs[key] = _build_dataclass(sub, value, path=key)
        elif isinstance(value, list):
            kwargs[key] = tuple(value)
        else:
            kwargs[key] = value
    return cls(**kwargs)


def _as_jsonable(obj):
    if isinstance(obj, dict):
        return {k: _as_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_as_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    return obj


def set_by_path(raw: dict, dotted: str, text: str) -> None:
    """Apply a --key.path=value override onto the raw config dict."""
    keys = dotted.split(".")
    node = raw
    for key in keys[:-1]:
        node = node.setdefault(key, {})
        if not isinstance(node, dict):
            raise ValueError(f"cannot override through non-object config node {key!r} in {dotted!r}")
    node[keys[-1]] = _parse_scalar(text)


def _parse_scalar(text: str):
    lowered = text.lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def run_id(config: ExperimentConfig, seed: int) -> str:
    canon = json.dumps({"config": config.to_dict(), "seed": seed}, sort_keys=True)
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]


# ----------------------------------------------------------------------
# dataset and network construction
# ----------------------------------------------------------------------


def build_splits(cfg: DatasetConfig, seed: int) -> tuple[Dataset, Dataset]:
    data_seed = derive_seed(seed, ROLE_DATA)
    if cfg.kind == "spirals":
        full = gen_spirals(cfg.num_classes, cfg.n_per_class, noise=cfg.noise, seed=data_seed)
    elif cfg.kind == "blobs":
        full = gen_gaussian_blobs(
            cfg.num_classes, cfg.n_per_class, dim=cfg.dim, spread=cfg.spread, seed=data_seed
        )
    else:
        full = load_csv(cfg.path, cfg.label_column)
    train, val = split(full, cfg.val_fraction, seed=derive_seed(seed, ROLE_SPLIT))
    if cfg.standardize:
        train, val = standardize(train, val)
    return train, val


def _make_net(net_cfg: NetworkConfig, train: Dataset, seed_role_pair: tuple[int, int]) -> Mlp:
    seed, role = seed_role_pair
    spec = MlpSpec(
        input_dim=train.num_features,
        hidden_widths=net_cfg.hidden_widths,
        num_classes=train.num_classes,
        seed=derive_seed(seed, role),
    )
    return Mlp(spec)


def _make_optimizer(net: Mlp, opt_cfg: OptimConfig) -> tuple[SgdMomentum, StepDecaySchedule]:
    schedule = StepDecaySchedule(opt_cfg.base_lr, opt_cfg.milestones, opt_cfg.decay_factor)
    opt = SgdMomentum(net.parameters(), lr=opt_cfg.base_lr,
                      momentum=opt_cfg.momentum, weight_decay=opt_cfg.weight_decay)
    return opt, schedule


# ----------------------------------------------------------------------
# running one configuration
# ----------------------------------------------------------------------


@dataclass
class RunResult:
    record: RunRecord
    nets: dict[str, Mlp]
    student_val_logits: np.ndarray
    val_labels: np.ndarray
    calibration: CalibrationReport

    @property
    def final_val_accuracy(self) -> dict[str, float]:
        last = self.record.epochs[-1]
        return dict(last["val_accuracy"])


def run_train(config: ExperimentConfig, seed: int) -> RunResult:
    """Execute one training run of the configured mode."""
    train, val = build_splits(config.dataset, seed)
    if config.mode in ("scratch", "dml", "bd-kd"):
        return _run_cotrain(config, seed, train, val)
    if config.mode == "vanilla-kd":
        return _run_vanilla(config, seed, train, val)
    return _run_multinet(config, seed, train, val)


def _mode_distill_config(config: ExperimentConfig) -> DistillConfig:
    loss = config.loss
    if config.mode == "scratch":
        return loss.distill_config(beta_t=0.0, beta_s=0.0)
    if config.mode == "dml":
        return loss.distill_config(
            alpha_t=1.0, alpha_s=1.0, beta_t=1.0, beta_s=1.0,
            student_kl="forward", teacher_kl="forward",
        )
    return loss.distill_config()


def _run_cotrain(config: ExperimentConfig, seed: int, train: Dataset, val: Dataset) -> RunResult:
    cfg = _mode_distill_config(config)
    teacher = _make_net(config.teacher, train, (seed, ROLE_TEACHER))
    student = _make_net(config.student, train, (seed, ROLE_STUDENT))
    opt_t, schedule = _make_optimizer(teacher, config.optim)
    opt_s, _ = _make_optimizer(student, config.optim)
    rng = np.random.default_rng(derive_seed(seed, ROLE_BATCHES))

    record = RunRecord(config=config.to_dict(), seed=seed)
    for epoch in range(config.optim.epochs):
        lr = schedule.lr_at(epoch)
        opt_t.lr = lr
        opt_s.lr = lr
        stats = cotrain_epoch(teacher, student, train, cfg, opt_t, opt_s, config.optim.batch_size, rng)
        record.epochs.append(_epoch_entry(
            epoch, lr, stats, {"teacher": teacher, "student": student}, val, config.calibration_bins,
        ))
    return _finish(record, {"teacher": teacher, "student": student}, val, config.calibration_bins)


def _run_vanilla(config: ExperimentConfig, seed: int, train: Dataset, val: Dataset) -> RunResult:
    """Two-stage offline distillation: CE-pretrain the teacher, then distill."""
    teacher = _make_net(config.teacher, train, (seed, ROLE_TEACHER))
    student = _make_net(config.student, train, (seed, ROLE_STUDENT))
    opt_t, schedule = _make_optimizer(teacher, config.optim)
    rng = np.random.default_rng(derive_seed(seed, ROLE_BATCHES))

    pretrain_epochs = []
    for epoch in range(config.optim.epochs):
        opt_t.lr = schedule.lr_at(epoch)
        stats = scratch_epoch(teacher, train, opt_t, config.optim.batch_size, rng, name="teacher")
        acc, _ = evaluate(teacher, val)
        pretrain_epochs.append({
            "epoch": epoch, "lr": opt_t.lr,
            "train": stats.losses, "val_accuracy": {"teacher": acc},
        })
    teacher.freeze()

    opt_s, schedule_s = _make_optimizer(student, config.optim)
    record = RunRecord(config=config.to_dict(), seed=seed)
    record.extra["teacher_pretrain_epochs"] = pretrain_epochs
    for epoch in range(config.optim.epochs):
        opt_s.lr = schedule_s.lr_at(epoch)
        stats = offline_distill_epoch(
            teacher, student, train, config.loss.vanilla_alpha, config.loss.tau,
            opt_s, config.optim.batch_size, rng, reduction=config.loss.reduction,
        )
        record.epochs.append(_epoch_entry(
            epoch, opt_s.lr, stats, {"teacher": teacher, "student": student}, val, config.calibration_bins,
        ))
    return _finish(record, {"teacher": teacher, "student": student}, val, config.calibration_bins)


def _run_multinet(config: ExperimentConfig, seed: int, train: Dataset, val: Dataset) -> RunResult:
    arrangement = config.mode
    cfg = config.loss.distill_config()
    nets = {
        "teacher": _make_net(config.teacher, train, (seed, ROLE_TEACHER)),
        "student": _make_net(config.student, train, (seed, ROLE_STUDENT)),
    }
    if arrangement == "1t2s":
        extra_cfg = config.student2 or config.student
        nets["student2"] = _make_net(extra_cfg, train, (seed, ROLE_EXTRA_NET))
    else:
        extra_cfg = config.teacher2 or config.teacher
        nets["teacher2"] = _make_net(extra_cfg, train, (seed, ROLE_EXTRA_NET))

    optimizers = {}
    schedule = None
    for name, net in nets.items():
        optimizers[name], schedule = _make_optimizer(net, config.optim)
    rng = np.random.default_rng(derive_seed(seed, ROLE_BATCHES))

    record = RunRecord(config=config.to_dict(), seed=seed)
    for epoch in range(config.optim.epochs):
        lr = schedule.lr_at(epoch)
        for opt in optimizers.values():
            opt.lr = lr
        stats = multinet_epoch(nets, optimizers, train, cfg, config.optim.batch_size, rng, arrangement)
        record.epochs.append(_epoch_entry(epoch, lr, stats, nets, val, config.calibration_bins))
    return _finish(record, nets, val, config.calibration_bins)


def _epoch_entry(epoch, lr, stats, nets, val, bins) -> dict:
    accuracies = {}
    student_logits = None
    for name, net in nets.items():
        acc, logits = evaluate(net, val)
        accuracies[name] = acc
        if name == "student":
            student_logits = logits
    report = bin_predictions(student_logits, val.labels, bins)
    entry = {
        "epoch": epoch,
        "lr": lr,
        "train": stats.losses,
        "val_accuracy": accuracies,
        "val_ece_student": report.ece,
    }
    if stats.delta_r_fraction is not None:
        entry["delta_r_fraction"] = stats.delta_r_fraction
    return entry


def _finish(record: RunRecord, nets, val, bins) -> RunResult:
    _, student_logits = evaluate(nets["student"], val)
    report = bin_predictions(student_logits, val.labels, bins)
    return RunResult(
        record=record,
        nets=nets,
        student_val_logits=student_logits,
        val_labels=val.labels,
        calibration=report,
    )


# ----------------------------------------------------------------------
# artifacts
# ----------------------------------------------------------------------


def atomic_write_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def logits_csv_text(logits: np.ndarray, labels: np.ndarray) -> str:
    c = logits.shape[1]
    lines = [",".join([f"logit_{j}" for j in range(c)] + ["label"])]
    for row, label in zip(logits, labels):
        lines.append(",".join(repr(float(v)) for v in row) + f",{int(label)}")
    return "\n".join(lines) + "\n"


def read_logits_csv(path) -> tuple[np.ndarray, np.ndarray]:
    """Parse a logits dump back into (logits, labels)."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        if header[-1] != "label" or not header[0].startswith("logit_"):
            raise ValueError(f"{path}: not a logits dump (header {header})")
        logits = []
        labels = []
        for line_no, line in enumerate(fh, start=2):
            parts = line.strip().split(",")
            if len(parts) != len(header):
                raise ValueError(f"{path}:{line_no}: expected {len(header)} fields, got {len(parts)}")
            logits.append([float(v) for v in parts[:-1]])
            labels.append(int(parts[-1]))
    return np.asarray(logits, dtype=np.float64), np.asarray(labels, dtype=np.int64)


def write_run_artifacts(result: RunResult, out_dir: Path, config: ExperimentConfig, seed: int) -> Path:
    run_dir = Path(out_dir) / run_id(config, seed)
    run_dir.mkdir(parents=True, exist_ok=True)
    atomic_write_text(run_dir / "record.json", result.record.to_json())
    for name, net in result.nets.items():
        atomic_write_text(run_dir / f"{name}.ckpt", json.dumps(net.state(), sort_keys=True))
    atomic_write_text(run_dir / "logits_val.csv", logits_csv_text(result.student_val_logits, result.val_labels))
    atomic_write_text(run_dir / "calibration.csv", report_csv_text(result.calibration))
    atomic_write_text(
        run_dir / "calibration.json",
        json.dumps(report_json_dict(result.calibration), indent=2, sort_keys=True) + "\n",
    )
    return run_dir


# ----------------------------------------------------------------------
# sweeps
# ----------------------------------------------------------------------


def worker_count() -> int:
    raw = os.environ.get("BDKD_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ValueError(f"BDKD_THREADS must be an integer, got {raw!r}") from None


def _map_runs(jobs: list):
    """Run zero-arg callables, optionally fanning out over BDKD_THREADS."""
    workers = worker_count()
    if workers == 1 or len(jobs) <= 1:
        return [job() for job in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(job) for job in jobs]
        return [f.result() for f in futures]


KL_GRID = ("forward", "reverse", "symmetric")


def run_ablation_grid(config: ExperimentConfig, seeds: tuple[int, ...]) -> dict:
    """3x3 student_kl x teacher_kl accuracy matrices, mean over seeds.

    The grid trains with unit weights and no per-sample balancing.
    """
    cells = {}
    for student_kl in KL_GRID:
        for teacher_kl in KL_GRID:
            cell_cfg = dataclasses.replace(
                config,
                mode="bd-kd",
                loss=dataclasses.replace(
                    config.loss,
                    alpha_t=1.0, alpha_s=1.0, beta_t=1.0, beta_s=1.0,
                    student_kl=student_kl, teacher_kl=teacher_kl,
                ),
            )
            jobs = [(lambda c=cell_cfg, s=s: run_train(c, s)) for s in seeds]
            results = _map_runs(jobs)
            cells[(student_kl, teacher_kl)] = {
                "student_accuracy": float(np.mean([r.final_val_accuracy["student"] for r in results])),
                "teacher_accuracy": float(np.mean([r.final_val_accuracy["teacher"] for r in results])),
            }
    return cells


def run_capacity_sweep(config: ExperimentConfig, widths: tuple[int, ...], seeds: tuple[int, ...]) -> list[dict]:
    """Student/teacher accuracy vs teacher width for dml and bd-kd."""
    if len(widths) < 2:
        raise ValueError(f"need at least 2 teacher widths, got {list(widths)}")
    rows = []
    for method in ("dml", "bd-kd"):
        for width in widths:
            sweep_cfg = dataclasses.replace(
                config,
                mode=method,
                teacher=NetworkConfig(hidden_widths=(int(width),)),
            )
            jobs = [(lambda c=sweep_cfg, s=s: run_train(c, s)) for s in seeds]
            results = _map_runs(jobs)
            sample = results[0].nets["teacher"]
            rows.append({
                "method": method,
                "teacher_width": int(width),
                "teacher_param_count": sample.param_count(),
                "student_accuracy": float(np.mean([r.final_val_accuracy["student"] for r in results])),
                "teacher_accuracy": float(np.mean([r.final_val_accuracy["teacher"] for r in results])),
            })
    return rows


def run_temp_sweep(config: ExperimentConfig, taus: tuple[float, ...], seeds: tuple[int, ...]) -> list[dict]:
    """Balanced-distillation accuracy per temperature."""
    if any(t <= 0 for t in taus):
        raise ValueError(f"temperatures must be positive, got {list(taus)}")
    rows = []
    for tau in taus:
        sweep_cfg = dataclasses.replace(
            config,
            mode="bd-kd",
            loss=dataclasses.replace(config.loss, tau=float(tau)),
        )
        jobs = [(lambda c=sweep_cfg, s=s: run_train(c, s)) for s in seeds]
        results = _map_runs(jobs)
        rows.append({
            "tau": float(tau),
            "student_accuracy": float(np.mean([r.final_val_accuracy["student"] for r in results])),
            "teacher_accuracy": float(np.mean([r.final_val_accuracy["teacher"] for r in results])),
        })
    return rows
