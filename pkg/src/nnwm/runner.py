"""End-to-end experiment pipeline driven by one validated config."""

import json
import logging
import time
from pathlib import Path

import numpy as np

from .attacks import AttackConfig, apply_attack
from .config import validate_config
from .data import (Dataset, WatermarkSpec, generate_carrier_set, load_idx_dataset, make_synthetic_dataset,
                   random_bits, split_refining_set)
from .metrics import build_report, reports_to_csv
from .nn import OptimizerConfig, TrainConfig, build_network, parse_arch, save_network
from .watermark import (EmbedConfig, embed_lsb_model, train_ingrained_classifier, train_ingrainer,
                        train_param_embedded, train_pcap)

log = logging.getLogger(__name__)


class StageError(RuntimeError):
    def __init__(self, stage, cause):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


def _path(base, p):
    p = Path(p)
    return p if p.is_absolute() else Path(base) / p


def load_data(data_cfg, base_dir="."):
    """(full training set, test set), images in NHWC."""
    if data_cfg["source"] == "idx":
        k = data_cfg.get("k", 10)
        limit = data_cfg.get("limit")
        train = load_idx_dataset(_path(base_dir, data_cfg["train_images"]),
                                 _path(base_dir, data_cfg["train_labels"]), k, limit)
        test = load_idx_dataset(_path(base_dir, data_cfg["test_images"]),
                                _path(base_dir, data_cfg["test_labels"]), k)
        return train, test
    full = make_synthetic_dataset(data_cfg["seed"], data_cfg["n_per_class"], data_cfg["k"],
                                  data_cfg["feature_dim"], data_cfg.get("sigma", 0.1))
    d = full.images.shape[1]
    full = Dataset(full.images.reshape(-1, 1, d, 1), full.labels, full.k, full.provenance)
    return split_refining_set(full, data_cfg["test_fraction"], data_cfg["seed"])


def _train_cfg(block, fallback=None):
    block = dict(block)
    base = fallback.to_dict() if fallback is not None else {}
    base.update(block)
    base["optimizer"] = OptimizerConfig.from_dict({**(fallback.optimizer.to_dict() if fallback else {}),
                                                   **block.get("optimizer", {})})
    return TrainConfig.from_dict(base)


def _tag(embed):
    m = embed["method"]
    if m == "ing":
        return f"ing_l{embed.get('ingrain_lambda', 2.0):g}"
    return m


def _attack_tag(a):
    extras = {k: v for k, v in a.items() if k not in ("kind", "student_arch", "train")}
    return a["kind"] + "".join(f"_{k}{v}" for k, v in sorted(extras.items()) if np.ndim(v) == 0)


class Stage:
    """Context manager turning any exception into a stage-tagged StageError."""

    def __init__(self, name, timings):
        self.name, self.timings = name, timings

    def __enter__(self):
        log.info("stage %s", self.name)
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        self.timings[self.name] = round(time.perf_counter() - self.t0, 3)
        if exc is not None and not isinstance(exc, StageError):
            raise StageError(self.name, exc) from exc
        return False


def run_experiment(cfg, output_dir=None, base_dir="."):
    """Execute the whole pipeline; returns the list of ExperimentReports.

    Artifacts go to ``output_dir`` (or the config's ``output_dir``). On
    failure a FAILED file with the stage-tagged message is left next to
    whatever was already written, and the StageError is re-raised.
    """
    cfg = validate_config(cfg)
    out = Path(output_dir or cfg.get("output_dir") or "nnwm_run")
    out.mkdir(parents=True, exist_ok=True)
    (out / "FAILED").unlink(missing_ok=True)
    timings, reports = {}, []
    manifest = {"name": cfg.get("name", ""), "config": cfg, "seeds": _collect_seeds(cfg), "wall_times": timings,
                "artifacts": []}
    try:
        _pipeline(cfg, out, base_dir, timings, reports, manifest)
    except StageError as exc:
        (out / "FAILED").write_text(str(exc) + "\n")
        _write_outputs(out, reports, manifest, status="failed")
        raise
    _write_outputs(out, reports, manifest, status="ok")
    return reports


def _collect_seeds(cfg):
    seeds = {"split": cfg["split"]["seed"], "train": cfg["train"]["seed"], "watermark": cfg["watermark"]["seed"]}
    if cfg["data"]["source"] == "synthetic":
        seeds["data"] = cfg["data"]["seed"]
    if "ingrainer" in cfg:
        seeds["ingrainer"] = cfg["ingrainer"]["seed"]
    for i, a in enumerate(cfg.get("attacks", [])):
        if "train" in a:
            seeds[f"attack{i}:{a['kind']}"] = a["train"]["seed"]
    return seeds


def _write_outputs(out, reports, manifest, status):
    (out / "reports.csv").write_text(reports_to_csv(reports))
    (out / "reports.jsonl").write_text("".join(r.to_json() + "\n" for r in reports))
    manifest["status"] = status
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _pipeline(cfg, out, base_dir, timings, reports, manifest):
    with Stage("load", timings):
        full, test = load_data(cfg["data"], base_dir)
        train, refining = split_refining_set(full, cfg["split"]["fraction"], cfg["split"]["seed"])
        arch = parse_arch(cfg["arch"])
        train_cfg = _train_cfg(cfg["train"])
        wm = cfg["watermark"]
        kind = wm.get("carrier_kind", "random_walk")
        shape = tuple(full.images.shape[1:])
        if "n_carriers" in wm:
            spec = WatermarkSpec.for_carriers(wm["n_carriers"], wm["seed"], full.k, carrier_kind=kind,
                                              image_shape=shape)
        else:
            spec = WatermarkSpec(random_bits(wm["n_bits"], wm["seed"]), wm["seed"], kind, full.k, shape)
        needs_carriers = any(EmbedConfig(e["method"]).is_prediction for e in cfg["embeds"])
        carrier = generate_carrier_set(spec) if needs_carriers else None

    def record(net, sidecar, stage, method, attack, params, seed, carrier_=None, configs=None):
        reports.append(build_report(net, test, sidecar, stage=stage, attack=attack, attack_params=params,
                                    seed=seed, method=method, carrier=carrier_, configs=configs))

    def attack_all(net, sidecar, method, tag, embed_params):
        for a in cfg.get("attacks", []):
            atag = _attack_tag(a)
            with Stage(f"attack:{tag}:{atag}", timings):
                a_cfg = AttackConfig(**{k: v for k, v in a.items() if k != "train"})
                a_train = _train_cfg(a["train"], train_cfg) if "train" in a else train_cfg
                attacked = apply_attack(net, a_cfg, refining.images, refining.labels, a_train)
                name = f"model_{tag}__{atag}.nnwm"
                save_network(attacked, out / name)
                manifest["artifacts"].append(name)
                record(attacked, sidecar, "attack", method, a["kind"], a_cfg.params(), a_train.seed, carrier,
                       {"embed": embed_params, "attack_train": a_train.to_dict()})

    first = EmbedConfig.from_dict(cfg["embeds"][0]) if cfg["embeds"] else None
    if cfg.get("clean_baseline", True) and first is not None:
        with Stage("clean", timings):
            clean = train_pcap(train.images, train.labels, None, arch, train_cfg).network
            save_network(clean, out / "model_clean.nnwm")
            manifest["artifacts"].append("model_clean.nnwm")
            probe = EmbedConfig("cap") if needs_carriers else first
            record(clean, (spec, probe), "clean", "clean", "none", {}, train_cfg.seed, carrier,
                   {"train": train_cfg.to_dict()})
        if cfg.get("attack_clean", False):
            attack_all(clean, (spec, probe), "clean", "clean", {})

    ingrainer = None
    for e in cfg["embeds"]:
        ecfg = EmbedConfig.from_dict(e)
        tag = _tag(e)
        with Stage(f"embed:{tag}", timings):
            if ecfg.method == "ing" and ingrainer is None:
                g = cfg["ingrainer"]
                ingrainer = train_ingrainer(carrier, arch, _train_cfg(g, train_cfg))
                save_network(ingrainer, out / "model_ingrainer.nnwm")
                manifest["artifacts"].append("model_ingrainer.nnwm")
            em = _embed(ecfg, train, arch, train_cfg, spec, carrier, ingrainer)
            em.save(out / f"model_{tag}.nnwm", out / f"sidecar_{tag}.json")
            manifest["artifacts"] += [f"model_{tag}.nnwm", f"sidecar_{tag}.json"]
            record(em.network, em, "embed", tag, "none", {}, train_cfg.seed, carrier,
                   {"embed": ecfg.params(), "train": train_cfg.to_dict()})
        attack_all(em.network, em, tag, tag, ecfg.params())


def _embed(ecfg, train, arch, train_cfg, spec, carrier, ingrainer):
    if ecfg.method == "cap":
        return train_pcap(train.images, train.labels, carrier, arch, train_cfg, spec)
    if ecfg.method == "ing":
        em = train_ingrained_classifier(train.images, train.labels, carrier, ingrainer, arch, train_cfg,
                                        ecfg.ingrain_lambda, ecfg.ingrain_temperature, spec)
        em.config = ecfg
        return em
    if ecfg.method == "lsb":
        clean = train_pcap(train.images, train.labels, None, arch, train_cfg).network
        return embed_lsb_model(clean, spec, ecfg)
    net = build_network(arch, train_cfg.seed)
    return train_param_embedded(net, train.images, train.labels, train_cfg, ecfg, spec)
