"""Command-line entry point: ``alf <verb> [options]``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from ..autodiff import NumericAbort
from ..codec import BaseCodec, Bitstream, BitstreamError, ModelCheckpoint, train_base
from ..codec.checkpoint import CheckpointError
from ..fusion import train as ftrain
from ..fusion.sampler import FusionDecoder, decode_controlled
from ..metrics import CSVFormatError, RDCurve, bd_rate, points_from_csv
from .config import FIELD_TYPES, ConfigError, load_config
from .data import gen_dataset, load_image, save_image

log = logging.getLogger("alf")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


def _add_config_flags(p):
    p.add_argument("--config", help="TOML file; command-line flags win")
    for name in FIELD_TYPES:
        p.add_argument("--" + name.replace("_", "-"), dest=name, default=None, metavar="V")


def _config(args):
    overrides = {k: getattr(args, k) for k in FIELD_TYPES if getattr(args, k, None) is not None}
    return load_config(args.config, overrides)


def _training_images(cfg):
    from .pipeline import load_dataset
    return load_dataset(cfg)[0]


def _load_codec(path):
    codec = BaseCodec.from_checkpoint(ModelCheckpoint.load(path))
    codec.freeze()
    return codec


def cmd_gen_data(args):
    paths = gen_dataset(args.out, args.seed, args.count, args.size)
    print(f"wrote {len(paths)} images to {args.out}")


def cmd_pipeline(args):
    from .pipeline import run_pipeline
    result = run_pipeline(_config(args))
    for name, rec in sorted(result.manifest["stages"].items()):
        print(f"{name}: {'cached' if rec['cache_hit'] else 'trained'} {rec['path']}")


def cmd_train_base(args):
    cfg = _config(args)
    codec, hist = train_base(_training_images(cfg), cfg.codec_config(), cfg.base_steps, seed=cfg.seed,
                             lr=cfg.base_lr, batch_size=cfg.batch_size, log_every=args.log_every)
    codec.to_checkpoint().save(args.out)
    if len(hist):
        print(f"final loss {hist[-1, 0]:.4f} bpp {hist[-1, 1]:.4f}; saved {args.out}")


def cmd_train_aux(args):
    cfg = _config(args)
    codec = _load_codec(args.base)
    aux, hist = ftrain.train_aux_encoder(codec, _training_images(cfg), cfg.aux_steps, seed=cfg.seed,
                                         lr=cfg.aux_lr, batch_size=cfg.batch_size, log_every=args.log_every)
    ftrain.aux_checkpoint(aux, codec).save(args.out)
    print(f"saved {args.out}")


def cmd_train_fusion(args):
    cfg = _config(args)
    codec = _load_codec(args.base)
    aux_ckpt = ModelCheckpoint.load(args.aux)
    aux = ftrain.load_aux_encoder(aux_ckpt, codec)
    lam = cfg.lam
    schedule = cfg.schedule()
    model, hist = ftrain.train_fusion(codec, aux, _training_images(cfg), lam=lam, steps=cfg.fusion_steps,
                                      schedule=schedule, seed=cfg.seed, lr=cfg.fusion_lr,
                                      batch_size=cfg.batch_size, config=cfg.denoiser_config(),
                                      log_every=args.log_every)
    ftrain.denoiser_checkpoint(model, schedule, codec, lam, aux_ckpt.component_hash()).save(args.out)
    print(f"saved {args.out}")


def cmd_encode(args):
    codec = _load_codec(args.base)
    image = load_image(args.input, codec.config.image_channels)
    stream = codec.encode(image)
    stream.save(args.out)
    pixels = image.shape[-1] * image.shape[-2]
    print(f"{stream.payload_bits} payload bits, {stream.payload_bits / pixels:.4f} bpp")


def cmd_decode(args):
    codec = _load_codec(args.base)
    stream = Bitstream.load(args.input)
    if args.denoiser:
        model, schedule = ftrain.load_denoiser(ModelCheckpoint.load(args.denoiser), codec)
        image = decode_controlled(stream, args.tau, args.steps, args.seed, FusionDecoder(codec, model, schedule))
    else:
        if args.tau != 1.0:
            raise ConfigError("--tau below 1 needs --denoiser")
        image = codec.decode(stream)
    save_image(args.out, image)
    print(f"wrote {args.out}")


def cmd_sweep(args):
    from .sweep import sweep
    cfg = _config(args)
    points, _ = sweep(cfg, csv_path=args.csv)
    print(f"{len(points)} rows written to {args.csv or Path(cfg.out_dir) / 'sweep.csv'}")


def cmd_bdrate(args):
    points = points_from_csv(Path(args.csv).read_text())
    rows = [p for p in points if p.label == args.label]
    anchor = RDCurve("anchor", [p for p in rows if p.tau == args.anchor_tau])
    test = RDCurve("test", [p for p in rows if p.tau == args.test_tau])
    print(f"{bd_rate(anchor, test, args.quality):.4f}")


def cmd_report(args):
    from .report import report
    written, notice = report(args.csv, args.out)
    for path in written:
        print(path)
    if notice:
        print(notice)


def cmd_selftest(args):
    from .selftest import run_selftest
    failures = run_selftest(print)
    if failures:
        raise SystemExit(1)


def build_parser():
    parser = argparse.ArgumentParser(prog="alf", description="Adaptive latent fusion compression lab")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("gen-data", help="write a synthetic PNG dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=400)
    p.add_argument("--size", type=int, default=32)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("pipeline", help="train or load every stage for every beta")
    _add_config_flags(p)
    p.set_defaults(func=cmd_pipeline)

    for verb, func, helptext in (("train-base", cmd_train_base, "train the base codec"),
                                 ("train-aux", cmd_train_aux, "train the auxiliary encoder"),
                                 ("train-fusion", cmd_train_fusion, "train the fusion denoiser")):
        p = sub.add_parser(verb, help=helptext)
        _add_config_flags(p)
        p.add_argument("--out", required=True, help="checkpoint path")
        p.add_argument("--log-every", type=int, default=0)
        if verb != "train-base":
            p.add_argument("--base", required=True, help="base codec checkpoint")
        if verb == "train-fusion":
            p.add_argument("--aux", required=True, help="auxiliary encoder checkpoint")
            p.add_argument("--lambda", dest="lam", default=None, metavar="V", help="alias of --lam")
        p.set_defaults(func=func)

    p = sub.add_parser("encode", help="compress one image")
    p.add_argument("--base", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="decode a bitstream at a chosen tau")
    p.add_argument("--base", required=True)
    p.add_argument("--denoiser")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--steps", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("sweep", help="evaluate the tau, step and translator grids")
    _add_config_flags(p)
    p.add_argument("--csv", help="output CSV (default: <out_dir>/sweep.csv)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("bdrate", help="BD-rate between two tau curves of a sweep CSV")
    p.add_argument("--csv", required=True)
    p.add_argument("--anchor-tau", type=float, default=1.0)
    p.add_argument("--test-tau", type=float, default=0.0)
    p.add_argument("--quality", default="psnr_db", choices=["psnr_db", "pdist", "ssim"])
    p.add_argument("--label", default="fusion")
    p.set_defaults(func=cmd_bdrate)

    p = sub.add_parser("report", help="SVG plots and BD table from sweep CSVs")
    p.add_argument("csv", nargs="+")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("selftest", help="fast internal consistency checks")
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericAbort as exc:
        print(f"numeric abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, CheckpointError, BitstreamError, CSVFormatError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
