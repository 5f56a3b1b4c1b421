"""End-to-end experiment runners: hybrid-database cases, online continuous
learning, and the AP-selection / noise-type ablations.

Every run writes a directory holding ``config.json``, ``metrics.csv`` (and
``pretrain_metrics.csv`` for SSL runs), ``report.json``, ``model.ckpt`` and
``record.json``.
"""

from __future__ import annotations

import json
import logging
import os
import statistics
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import ap_select
from .ap_select import SelectionMask, apply_mask, build_mask
from .data import Dataset, Role, load_csv, split_online, split_quarters
from .evaluate import EvalReport, decode_predictions, evaal, format_table, improvement
from .mean_teacher import SslConfig, fit_supervised, pretrain, ssl_train, write_log
from .models import ModelSpec, build, from_dict, predict, sae_pretrain
from .nn import checkpoint
from .nn.params import Parameters
from .preprocess import (
    CoordScaler,
    EncodedBatch,
    NoiseConfig,
    encode_labels,
    features,
    inject_noise,
)
from .rng import derive_seed

log = logging.getLogger(__name__)

SCENARIOS = ("hybrid", "online", "ablation_ap", "ablation_noise")
TRAIN_FILE = "trainingData.csv"
TEST_FILE = "validationData.csv"


def default_data_dir() -> Path:
    return Path(os.environ.get("UJIINDOORLOC_DIR", "data"))


@dataclass
class ExperimentConfig:
    scenario: str = "hybrid"
    case: int = 4
    periods: int = 1
    model: str = "simo"
    strategy: str = "ssl"
    ap_selection: bool = True
    ssl: SslConfig | dict | None = None  # None: the scenario's preset
    noise: NoiseConfig | dict | None = None
    train_path: str = ""
    test_path: str = ""
    reference: str = ""
    output_dir: str = "runs"
    split_seed: int = 42

    def __post_init__(self):
        if not isinstance(self.ssl, SslConfig):
            preset = SslConfig.online if self.scenario == "online" else SslConfig.hybrid
            self.ssl = preset(**(self.ssl or {}))
        if not isinstance(self.noise, NoiseConfig):
            self.noise = NoiseConfig(**(self.noise or {}))
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}")
        if self.case not in (1, 2, 3, 4):
            raise ValueError("case must be 1..4")
        if self.periods < 1:
            raise ValueError("periods must be >= 1")
        if self.strategy not in ("sl", "ssl"):
            raise ValueError("strategy must be sl or ssl")
        data = default_data_dir()
        self.train_path = self.train_path or str(data / TRAIN_FILE)
        self.test_path = self.test_path or str(data / TEST_FILE)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["noise"]["kind"] = self.noise.kind.value
        d["noise"]["uniform_range"] = list(self.noise.uniform_range)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        return cls(**{"ssl": {}, "noise": {}, **d})

    def with_(self, **kw) -> "ExperimentConfig":
        return ExperimentConfig.from_dict({**self.to_dict(), **kw})


@dataclass
class RunRecord:
    config: dict
    seed: int
    wall_time: float
    report: dict
    checkpoint_path: str
    log_path: str
    labeled_hash: str
    input_width: int

    @property
    def evaal_error(self) -> float:
        return self.report["evaal_error"]

    @property
    def gamma(self) -> float:
        return self.report["gamma"]


# data preparation ------------------------------------------------------------


def load_data(cfg: ExperimentConfig) -> tuple[Dataset, Dataset]:
    return load_csv(cfg.train_path, Role.LABELED), load_csv(cfg.test_path, Role.TEST)


def hybrid_split(train: Dataset, case: int, seed: int = 42) -> tuple[Dataset, Dataset | None]:
    """Case k: k shuffled quarters labeled, the other 4 - k unlabeled."""
    parts = split_quarters(train, seed)
    labeled = Dataset.concat(parts[:case], Role.LABELED)
    unlabeled = Dataset.concat(parts[case:], Role.UNLABELED) if case < 4 else None
    return labeled, unlabeled


def full_mask(d: Dataset) -> SelectionMask:
    return SelectionMask(d.ap_ids, "none")


# the core run ------------------------------------------------------------------


@dataclass
class Prepared:
    spec: ModelSpec
    mask: SelectionMask
    labeled: EncodedBatch
    test: Dataset
    test_enc: EncodedBatch


def _prepare(model: str, labeled: Dataset, unlabeled, test: Dataset, ap_selection: bool, mask=None):
    if mask is None:
        mask = build_mask(labeled, unlabeled) if ap_selection else full_mask(labeled)
    spec = build(model, len(mask))
    lab = encode_labels(apply_mask(labeled, mask), None, spec.coord_scale)
    test_m = apply_mask(test, mask)
    return Prepared(spec, mask, lab, test_m, encode_labels(test_m, lab.coord_scaler))


def footer(spec: ModelSpec, mask: SelectionMask, scaler: CoordScaler) -> dict:
    return {
        "mask_hash": mask.source_fingerprint,
        "mask_ids": list(mask.selected_ids),
        "scaler": scaler.to_dict(),
        "model": spec.to_dict(),
    }


def load_model(path) -> tuple[ModelSpec, Parameters, SelectionMask, CoordScaler]:
    params, meta = checkpoint.load(path)
    spec = from_dict(meta["model"])
    mask = SelectionMask(tuple(meta["mask_ids"]), meta["mask_hash"])
    return spec, params, mask, CoordScaler.from_dict(meta["scaler"])


def evaluate_model(spec, params, mask, scaler, test: Dataset) -> EvalReport:
    """Evaluate on a raw (520-column) or already-projected test set."""
    if test.ap_ids != mask.selected_ids:
        test = apply_mask(test, mask)
    out = predict(spec, params, features(test))
    return evaal(decode_predictions(out, scaler), test)


def _write_run(out_dir: Path, cfg: ExperimentConfig, seed: int, t0: float, prep: Prepared,
               params: Parameters, history, labeled_hash: str, pre_history=None) -> RunRecord:
    out_dir.mkdir(parents=True, exist_ok=True)
    report = evaluate_model(prep.spec, params, prep.mask, prep.labeled.coord_scaler, prep.test)
    ckpt = out_dir / "model.ckpt"
    checkpoint.save(ckpt, params, footer(prep.spec, prep.mask, prep.labeled.coord_scaler))
    log_path = out_dir / "metrics.csv"
    write_log(history, log_path)
    if pre_history is not None:
        write_log(pre_history, out_dir / "pretrain_metrics.csv")
    (out_dir / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))
    (out_dir / "report.json").write_text(report.to_json())
    ap_select.save_mask(prep.mask, out_dir / "mask.txt")
    summary = {k: v for k, v in report.to_dict().items() if k != "per_sample_errors"}
    rec = RunRecord(cfg.to_dict(), seed, time.time() - t0, summary, str(ckpt), str(log_path),
                    labeled_hash, prep.spec.input_width)
    (out_dir / "record.json").write_text(json.dumps(asdict(rec), indent=2, sort_keys=True))
    log.info("%s: EvAAL %.3f m, gamma %.4f", out_dir, report.evaal_error, report.gamma)
    return rec


def train_and_evaluate(
    cfg: ExperimentConfig,
    labeled: Dataset,
    unlabeled: Dataset | None,
    test: Dataset,
    out_dir,
    sl_with_noised: bool = False,
) -> RunRecord:
    """Train one arm and evaluate it on ``test``.

    SL trains on ``labeled`` only (plus a noise-injected copy when
    ``sl_with_noised``). SSL pre-trains on ``labeled`` and runs Mean Teacher
    with ``unlabeled`` or, when that is None, with a noise-injected copy of
    the labeled features. The selection mask comes from labeled + unlabeled
    raw data before any noise is added.
    """
    t0 = time.time()
    seed = cfg.ssl.seed
    prep = _prepare(cfg.model, labeled, unlabeled, test, cfg.ap_selection)
    spec, lab = prep.spec, prep.labeled
    noise_seed = derive_seed(seed, "noise")
    if cfg.strategy == "sl":
        params = spec.init(derive_seed(seed, "init"))
        if cfg.ssl.sae_epochs:
            sae_pretrain(spec, params, lab.features, cfg.ssl.sae_epochs, derive_seed(seed, "sae"))
        train = lab
        if sl_with_noised:
            noised = inject_noise(lab.features, cfg.noise, noise_seed)
            train = EncodedBatch(
                np.vstack([lab.features, noised]),
                np.vstack([lab.bf_targets, lab.bf_targets]),
                np.vstack([lab.coord_targets, lab.coord_targets]),
                lab.coord_scaler,
            )
        res = fit_supervised(spec, params, train, cfg.ssl, cfg.ssl.max_epochs, prep.test_enc)
        return _write_run(Path(out_dir), cfg, seed, t0, prep, res.params, res.history,
                          labeled.content_hash())
    init = spec.init(derive_seed(seed, "init"))
    if cfg.ssl.sae_epochs:
        sae_pretrain(spec, init, lab.features, cfg.ssl.sae_epochs, derive_seed(seed, "sae"))
    pre = pretrain(spec, lab, cfg.ssl, init=init, dev=prep.test_enc)
    if unlabeled is not None and len(unlabeled):
        x_u = features(apply_mask(unlabeled, prep.mask))
    else:
        x_u = inject_noise(lab.features, cfg.noise, noise_seed)
    res = ssl_train(spec, pre.params, lab, x_u, cfg.ssl, dev=prep.test_enc)
    return _write_run(Path(out_dir), cfg, seed, t0, prep, res.params, res.history,
                      labeled.content_hash(), pre.history)


# scenarios ---------------------------------------------------------------------


def run_dir(cfg: ExperimentConfig, tag: str = "") -> Path:
    name = f"{cfg.scenario}"
    if cfg.scenario != "online":
        name += f"_case{cfg.case}"
    name += f"_{cfg.model}_{cfg.strategy}{tag}"
    return Path(cfg.output_dir) / name / f"seed{cfg.ssl.seed}"


def run_hybrid_case(cfg: ExperimentConfig, data: tuple[Dataset, Dataset] | None = None) -> RunRecord:
    train, test = data or load_data(cfg)
    labeled, unlabeled = hybrid_split(train, cfg.case, cfg.split_seed)
    # SL reads the unlabeled rows only for AP selection, so both arms share one mask
    return train_and_evaluate(cfg, labeled, unlabeled, test, run_dir(cfg))


def reference_config(cfg: ExperimentConfig) -> ExperimentConfig:
    """Case-4 SL reference with the hybrid-scenario schedule."""
    ssl = SslConfig.hybrid(**{k: v for k, v in cfg.ssl.to_dict().items()
                              if k not in ("alpha", "wc", "scheduler_patience")})
    return ExperimentConfig(
        scenario="hybrid", case=4, model=cfg.model, strategy="sl", ap_selection=cfg.ap_selection,
        ssl=ssl, noise=cfg.noise, train_path=cfg.train_path, test_path=cfg.test_path,
        output_dir=cfg.output_dir, split_seed=cfg.split_seed,
    )


def run_online(cfg: ExperimentConfig, data: tuple[Dataset, Dataset] | None = None) -> RunRecord:
    """Online continuous learning.

    The validation file is sorted by timestamp and halved into unlabeled B
    and test C. SL evaluates the frozen Case-4 reference on C. SSL continues
    from the reference with the full training set as labeled data and B,
    split into ``periods`` consecutive chunks, as unlabeled data.
    """
    t0 = time.time()
    train, test_full = data or load_data(cfg)
    if cfg.reference:
        ref_path = Path(cfg.reference)
        if not ref_path.exists():
            raise FileNotFoundError(f"reference checkpoint {ref_path} not found")
    else:
        ref_cfg = reference_config(cfg)
        ref_path = Path(run_hybrid_case(ref_cfg, (train, test_full)).checkpoint_path)
    spec, ref_params, mask, scaler = load_model(ref_path)
    b_set, c_set = split_online(test_full)
    prep = Prepared(spec, mask, encode_labels(apply_mask(train, mask), scaler),
                    apply_mask(c_set, mask), None)
    prep.test_enc = encode_labels(prep.test, scaler)
    out_dir = run_dir(cfg)
    if cfg.strategy == "sl":
        return _write_run(out_dir, cfg, cfg.ssl.seed, t0, prep, ref_params, [], train.content_hash())
    theta = ref_params
    history = []
    x_b = features(apply_mask(b_set, mask))
    for p, chunk in enumerate(np.array_split(np.arange(len(x_b)), cfg.periods)):
        if len(chunk) == 0:
            continue
        period_cfg = SslConfig(**{**cfg.ssl.to_dict(), "seed": derive_seed(cfg.ssl.seed, f"period{p}")})
        res = ssl_train(spec, theta, prep.labeled, x_b[chunk], period_cfg, dev=prep.test_enc)
        offset = history[-1].epoch if history else 0
        for rec in res.history:
            rec.epoch += offset
        history += res.history
        theta = res.params
    return _write_run(out_dir, cfg, cfg.ssl.seed, t0, prep, theta, history, train.content_hash())


def run_ablation_ap(cfg: ExperimentConfig, data=None) -> tuple[RunRecord, RunRecord]:
    """Case 4 with and without AP selection."""
    data = data or load_data(cfg)
    train, test = data
    labeled, _ = hybrid_split(train, 4, cfg.split_seed)
    out = []
    for sel in (True, False):
        c = cfg.with_(scenario="ablation_ap", case=4, ap_selection=sel)
        out.append(train_and_evaluate(c, labeled, None, test, run_dir(c, "_sel" if sel else "_nosel")))
    return out[0], out[1]


def run_ablation_noise(cfg: ExperimentConfig, data=None) -> tuple[RunRecord, RunRecord]:
    """Case 4 with AP selection: SL on original + noised data vs SSL with noised unlabeled data."""
    data = data or load_data(cfg)
    train, test = data
    labeled, _ = hybrid_split(train, 4, cfg.split_seed)
    tag = f"_{cfg.noise.kind.value}"
    sl = cfg.with_(scenario="ablation_noise", case=4, strategy="sl", ap_selection=True)
    ssl = cfg.with_(scenario="ablation_noise", case=4, strategy="ssl", ap_selection=True)
    r_sl = train_and_evaluate(sl, labeled, None, test, run_dir(sl, tag), sl_with_noised=True)
    r_ssl = train_and_evaluate(ssl, labeled, None, test, run_dir(ssl, tag))
    return r_sl, r_ssl


# replication and reporting -------------------------------------------------------


def replicate(fn, cfg: ExperimentConfig, seeds=(0, 1, 2), data=None) -> list:
    """Run ``fn`` once per seed, sharing the loaded data."""
    data = data or load_data(cfg)
    return [fn(cfg.with_(ssl={**cfg.ssl.to_dict(), "seed": s}), data) for s in seeds]


def summarize(records: list[RunRecord]) -> dict:
    errs = [r.evaal_error for r in records]
    gammas = [r.gamma for r in records]
    return {
        "evaal_error": statistics.fmean(errs),
        "evaal_error_std": statistics.stdev(errs) if len(errs) > 1 else 0.0,
        "gamma": statistics.fmean(gammas),
        "gamma_std": statistics.stdev(gammas) if len(gammas) > 1 else 0.0,
        "n": len(records),
    }


def collect_report(root) -> str:
    """Table of mean ± std over seeds for every run group under ``root``."""
    groups: dict[tuple, list] = {}
    for path in sorted(Path(root).rglob("record.json")):
        rec = json.loads(path.read_text())
        c = rec["config"]
        label = c["scenario"] + ("" if c["scenario"] == "online" else f" case {c['case']}")
        if c["scenario"] == "ablation_ap":
            label += " with-sel" if c["ap_selection"] else " no-sel"
        if c["scenario"] == "ablation_noise":
            label += f" {c['noise']['kind']}"
        groups.setdefault((label, c["strategy"], c["model"]), []).append(rec)
    rows = []
    for (label, strategy, model), recs in groups.items():
        errs = [r["report"]["evaal_error"] for r in recs]
        gammas = [r["report"]["gamma"] for r in recs]
        row = {
            "label": f"{label} (n={len(recs)})",
            "strategy": strategy.upper(),
            "model": "SIMO-DNN" if model == "simo" else "CNNLoc",
            "gamma": statistics.fmean(gammas),
            "evaal_error": statistics.fmean(errs),
        }
        if len(recs) > 1:
            row["gamma_std"] = statistics.stdev(gammas)
            row["evaal_error_std"] = statistics.stdev(errs)
        rows.append(row)
    lines = [format_table(rows)] if rows else ["no runs found"]
    by_key = {(r["label"], r["model"]): r for r in rows if r["strategy"] == "SL"}
    for r in rows:
        ref = by_key.get((r["label"], r["model"]))
        if r["strategy"] == "SSL" and ref:
            eta = improvement(ref["evaal_error"], r["evaal_error"]).eta
            lines.append(f"eta {r['label']} {r['model']}: {eta:.2f}%")
    return "\n".join(lines)
