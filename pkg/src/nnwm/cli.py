"""Command-line entry point: ``nnwm <subcommand> ...``."""

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .attacks import AttackConfig, apply_attack
from .config import bundled_config_path, load_config, schema_json
from .data import (WatermarkSpec, generate_carrier_set, load_idx_dataset, make_synthetic_dataset, random_bits,
                   write_idx_images, write_idx_labels)
from .exceptions import ConfigError, NNWMError
from .metrics import append_csv, build_report, extract_watermark, format_table, normalize_wm_accuracy, read_csv
from .metrics import watermark_accuracy_raw
from .nn import LayerSpec, OptimizerConfig, TrainConfig, build_network, load_network, save_network
from .runner import StageError, run_experiment
from .watermark import (EmbedConfig, EmbeddedModel, embed_lsb_model, read_sidecar, train_ingrained_classifier,
                        train_ingrainer, train_param_embedded, train_pcap)

log = logging.getLogger("nnwm")


def parse_arch_string(text):
    """``flatten,dense:784:200,relu,dropout:0.5,dense:200:10`` or a path to a JSON layer list."""
    if text.endswith(".json") or Path(text).is_file():
        return [LayerSpec.from_dict(d) for d in json.loads(Path(text).read_text())]
    specs = []
    for item in filter(None, (s.strip() for s in text.split(","))):
        kind, *args = item.split(":")
        if kind == "dropout":
            specs.append(LayerSpec("dropout", rate=float(args[0]) if args else 0.5))
        else:
            specs.append(LayerSpec(kind, tuple(int(a) for a in args)))
    if not specs:
        raise ConfigError("empty architecture")
    return specs


def _shape(text):
    dims = tuple(int(v) for v in text.split(","))
    if len(dims) != 3:
        raise argparse.ArgumentTypeError("expected H,W,C")
    return dims


# -- argument groups -------------------------------------------------------------


def _add_data(p, prefix, required=True):
    p.add_argument(f"--{prefix}-images", required=required)
    p.add_argument(f"--{prefix}-labels", required=required)


def _add_train(p, epochs=50):
    g = p.add_argument_group("training")
    g.add_argument("--epochs", type=int, default=epochs)
    g.add_argument("--batch-size", type=int, default=64)
    g.add_argument("--optimizer", choices=("sgd", "momentum", "adadelta"), default="momentum")
    g.add_argument("--lr", type=float, default=0.05)
    g.add_argument("--momentum", type=float, default=0.9)


def _train_cfg(args, seed=None, epochs=None):
    opt = OptimizerConfig(args.optimizer, args.lr, args.momentum)
    return TrainConfig(args.epochs if epochs is None else epochs, args.batch_size, opt,
                       args.seed if seed is None else seed)


def _add_embed_params(p):
    g = p.add_argument_group("embedding parameters")
    g.add_argument("--lambda-s", type=float, default=10.0)
    g.add_argument("--lambda-c", type=float, default=1.0)
    g.add_argument("--lambda-sta", type=float, default=0.01)
    g.add_argument("--sta-key-seed", type=int, default=0)
    g.add_argument("--sta-layer", type=int)
    g.add_argument("--ingrain-lambda", type=float, default=2.0)
    g.add_argument("--ingrain-temperature", type=float, default=10.0)
    g.add_argument("--lsb-bits-per-param", type=int, default=1)


def build_parser():
    ap = argparse.ArgumentParser(prog="nnwm", description="Watermark embedding, removal attacks and evaluation.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write a synthetic IDX dataset or a watermark spec + carriers")
    p.add_argument("what", choices=("synthetic", "watermark"))
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--n-per-class", type=int, default=100)
    p.add_argument("--feature-dim", type=int, default=16)
    p.add_argument("--sigma", type=float, default=0.1)
    p.add_argument("--n-carriers", type=int)
    p.add_argument("--n-bits", type=int)
    p.add_argument("--carrier-kind", default="random_walk")
    p.add_argument("--image-shape", type=_shape, default=(28, 28, 1))

    p = sub.add_parser("train", help="train a clean classifier")
    _add_data(p, "train")
    p.add_argument("--arch", required=True)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    _add_train(p)

    p = sub.add_parser("embed", help="train (or modify) a model so it carries a watermark")
    p.add_argument("--method", required=True, choices=("lsb", "sgn", "cor", "sta", "cap", "ing"))
    p.add_argument("--watermark", required=True, help="watermark JSON from gen-data")
    _add_data(p, "train", required=False)
    p.add_argument("--arch")
    p.add_argument("--model", help="clean model to modify (lsb only)")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--ingrainer-epochs", type=int, default=300)
    p.add_argument("--ingrainer-seed", type=int)
    p.add_argument("--out-model", required=True)
    p.add_argument("--out-sidecar", required=True)
    _add_embed_params(p)
    _add_train(p)

    p = sub.add_parser("attack", help="apply a removal attack to a model")
    p.add_argument("--kind", required=True, choices=("distill", "prune", "round", "finetune", "expand"))
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    _add_data(p, "refining", required=False)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--seed", type=int, help="required for distill, prune and finetune")
    p.add_argument("--temperature", type=float, default=10.0)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--student-arch")
    p.add_argument("--prune-rate", type=float, default=0.4)
    p.add_argument("--finetune-epochs", type=int, default=25)
    p.add_argument("--digits", type=int, default=2)
    p.add_argument("--rank", help="int, comma list per conv layer, or fraction like 0.5")
    _add_train(p, epochs=60)

    p = sub.add_parser("extract", help="read the watermark out of a model")
    p.add_argument("--model", required=True)
    p.add_argument("--sidecar", required=True)

    p = sub.add_parser("eval", help="score a model and emit one report row")
    p.add_argument("--model", required=True)
    p.add_argument("--sidecar", required=True)
    _add_data(p, "test")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--stage", choices=("clean", "embed", "attack"), default="embed")
    p.add_argument("--method", help="override the method label (e.g. clean)")
    p.add_argument("--attack", default="none")
    p.add_argument("--attack-params", default="{}", help="JSON object")
    p.add_argument("--seed", type=int, default=0, help="seed echoed into the report")
    p.add_argument("--csv", help="append the row to this CSV")

    p = sub.add_parser("run", help="full pipeline from one JSON config")
    p.add_argument("config", nargs="?", help="config path (default: bundled desk_mnist_ing.json)")
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("--base-dir", default=".", help="directory relative data paths are resolved against")
    p.add_argument("--validate-only", action="store_true")

    p = sub.add_parser("report", help="print reports.csv as an aligned table")
    p.add_argument("csv")

    sub.add_parser("schema", help="print the experiment config JSON schema")
    return ap


# -- commands --------------------------------------------------------------------


def cmd_gen_data(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.what == "synthetic":
        ds = make_synthetic_dataset(args.seed, args.n_per_class, args.k, args.feature_dim, args.sigma)
        pixels = np.round(ds.images * 255).reshape(len(ds), 1, -1)
        write_idx_images(out / "synthetic-images-idx3-ubyte.gz", pixels)
        write_idx_labels(out / "synthetic-labels-idx1-ubyte.gz", ds.labels)
        print(f"wrote {len(ds)} rows to {out}")
        return 0
    if (args.n_carriers is None) == (args.n_bits is None):
        raise ConfigError("give exactly one of --n-carriers / --n-bits")
    if args.n_carriers is not None:
        spec = WatermarkSpec.for_carriers(args.n_carriers, args.seed, args.k, carrier_kind=args.carrier_kind,
                                          image_shape=args.image_shape)
    else:
        spec = WatermarkSpec(random_bits(args.n_bits, args.seed), args.seed, args.carrier_kind, args.k,
                             args.image_shape)
    (out / "watermark.json").write_text(json.dumps(spec.to_dict(), indent=2, sort_keys=True) + "\n")
    carrier = generate_carrier_set(spec)
    h, w, _ = spec.image_shape
    write_idx_images(out / "carriers-images-idx3-ubyte.gz", np.round(carrier.images[..., 0] * 255).reshape(-1, h, w))
    write_idx_labels(out / "carriers-labels-idx1-ubyte.gz", carrier.labels)
    print(f"wrote watermark ({spec.n} bits, {spec.m} carriers) to {out}")
    return 0


def _load(images, labels, k, what):
    if not images or not labels:
        raise ConfigError(f"--{what}-images and --{what}-labels are required here")
    return load_idx_dataset(images, labels, k)


def cmd_train(args):
    data = _load(args.train_images, args.train_labels, args.k, "train")
    arch = parse_arch_string(args.arch)
    net = train_pcap(data.images, data.labels, None, arch, _train_cfg(args)).network
    save_network(net, args.out)
    print(f"saved {args.out} ({net.n_params} parameters)")
    return 0


def cmd_embed(args):
    spec = WatermarkSpec.from_json(Path(args.watermark).read_text())
    ecfg = EmbedConfig(args.method, args.lambda_s, args.lambda_c, args.lambda_sta, args.sta_key_seed,
                       args.sta_layer, args.ingrain_lambda, args.ingrain_temperature, args.lsb_bits_per_param)
    if args.method == "lsb":
        if not args.model:
            raise ConfigError("lsb embedding needs --model")
        em = embed_lsb_model(load_network(args.model), spec, ecfg)
    else:
        if not args.arch:
            raise ConfigError("--arch is required for trained embeddings")
        data = _load(args.train_images, args.train_labels, args.k, "train")
        arch = parse_arch_string(args.arch)
        tcfg = _train_cfg(args)
        if args.method == "cap":
            em = train_pcap(data.images, data.labels, generate_carrier_set(spec), arch, tcfg, spec)
        elif args.method == "ing":
            carrier = generate_carrier_set(spec)
            g_seed = args.seed if args.ingrainer_seed is None else args.ingrainer_seed
            g = train_ingrainer(carrier, arch, _train_cfg(args, seed=g_seed, epochs=args.ingrainer_epochs))
            em = train_ingrained_classifier(data.images, data.labels, carrier, g, arch, tcfg,
                                            ecfg.ingrain_lambda, ecfg.ingrain_temperature, spec)
            em.config = ecfg
        else:
            em = train_param_embedded(build_network(arch, args.seed), data.images, data.labels, tcfg, ecfg, spec)
    em.save(args.out_model, args.out_sidecar)
    print(f"saved {args.out_model} and {args.out_sidecar}")
    return 0


def _rank(text):
    if text is None:
        return None
    if "," in text:
        return [int(v) for v in text.split(",")]
    return float(text) if "." in text else int(text)


def cmd_attack(args):
    net = load_network(args.model)
    student = parse_arch_string(args.student_arch) if args.student_arch else ()
    cfg = AttackConfig(args.kind, args.temperature, args.alpha, tuple(student), args.prune_rate,
                       args.finetune_epochs, args.digits, _rank(args.rank))
    refining_images = refining_labels = tcfg = None
    if args.kind in ("distill", "prune", "finetune"):
        if args.seed is None:
            raise ConfigError(f"--seed is required for the {args.kind} attack")
        ref = _load(args.refining_images, args.refining_labels, args.k, "refining")
        refining_images, refining_labels, tcfg = ref.images, ref.labels, _train_cfg(args)
    out = apply_attack(net, cfg, refining_images, refining_labels, tcfg)
    save_network(out, args.out)
    print(f"saved {args.out}")
    return 0


def cmd_extract(args):
    spec, config = read_sidecar(args.sidecar)
    extracted, truth = extract_watermark(load_network(args.model), spec, config)
    raw = watermark_accuracy_raw(extracted, truth)
    c = config.chance_classes(spec.k)
    print(json.dumps({"method": config.method, "extracted": [int(v) for v in extracted], "wm_raw": raw,
                      "wm_norm": normalize_wm_accuracy(raw, c), "c": c}, sort_keys=True))
    return 0


def cmd_eval(args):
    test = _load(args.test_images, args.test_labels, args.k, "test")
    report = build_report(load_network(args.model), test, args.sidecar, stage=args.stage, attack=args.attack,
                          attack_params=json.loads(args.attack_params), seed=args.seed, method=args.method)
    if args.csv:
        append_csv(args.csv, report)
    print(report.to_json())
    return 0


def cmd_run(args):
    path = args.config or bundled_config_path()
    cfg = load_config(path)
    if args.validate_only:
        print(f"{path}: valid")
        return 0
    reports = run_experiment(cfg, args.out, args.base_dir)
    print(f"{len(reports)} report rows written to {args.out or cfg.get('output_dir', 'nnwm_run')}/reports.csv")
    return 0


def cmd_report(args):
    sys.stdout.write(format_table(read_csv(args.csv)))
    return 0


def cmd_schema(args):
    sys.stdout.write(schema_json())
    return 0


COMMANDS = {"gen-data": cmd_gen_data, "train": cmd_train, "embed": cmd_embed, "attack": cmd_attack,
            "extract": cmd_extract, "eval": cmd_eval, "run": cmd_run, "report": cmd_report, "schema": cmd_schema}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"nnwm {args.command}: config error: {exc}", file=sys.stderr)
        return 2
    except StageError as exc:
        print(f"nnwm {args.command}: failed {exc}", file=sys.stderr)
        return 1
    except (NNWMError, ValueError, OSError) as exc:
        print(f"nnwm {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
