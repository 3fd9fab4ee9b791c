"""Command line entry point: ``freqstab <subcommand> ...``."""
import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .attack import AttackConfig, find_minimal_noise
from .convnet import accuracy, predict, set_frozen, sgd_train
from .harness import AUGMENT_SIGMAS, SWEEP_SIGMAS, SweepConfig, augment_dataset, run_sweep
from .io import FormatError, load_model, resolve_data, save_dataset, save_model
from .reference import train_model
from .report import (attack_row, metadata_path, write_attack_csv, write_heatmap, write_metadata, write_metrics_csv,
                     write_pointcloud_csv, write_sweep_csv, write_tensor)
from .spectrum import (DEFAULT_PAD, REFERENCE_FILTERS, coverage, export_pointcloud,
                       filter_spectrum, mean_spectrum, noise_spectrum, reference_filter)
from .tensor import Rng, derive_seed, l2_norm

log = logging.getLogger("freqstab")

FREEZE = {"fc": "fc_layers", "conv": "conv_layers", "all": "all", "none": "none"}


def _floats(text):
    return tuple(float(v) for v in text.split(",") if v.strip())


def _meta(args, **extra):
    meta = {k: v for k, v in vars(args).items() if k != "func"}
    meta.update(extra)
    meta["version"] = __version__
    meta["kernel_backend"] = kernels.BACKEND
    return meta


def _data(args, split):
    return resolve_data(args.data, split, args.data_seed, args.synth_n, args.size)


def cmd_train(args):
    if args.arch != "desk-cnn":
        raise ValueError(f"unknown architecture {args.arch!r}")
    data = _data(args, "train")
    model = train_model(data, args.loss, args.act, args.epochs, args.lr, args.batch_size, args.seed)
    save_model(args.out, model)
    acc = accuracy(model, data)
    print(f"train_accuracy={acc:.4f}")
    write_metadata(metadata_path(args.out), _meta(
        args, train_accuracy=f"{acc:.4f}",
        epoch_losses=";".join(f"{v:.6f}" for v in model.history)))


def cmd_eval(args):
    model = load_model(args.model)
    data = _data(args, args.split)
    print(f"accuracy={accuracy(model, data):.4f} images={len(data)}")


def cmd_sweep(args):
    model = load_model(args.model)
    data = _data(args, "test")
    cfg = SweepConfig(args.sigmas, args.trials, args.smooth, args.seed, args.quantize, args.max_images)
    report = run_sweep(model, data, cfg, model_id=args.model)
    write_sweep_csv(report, args.out)
    for r in report.rows:
        print(f"sigma={r.sigma:g} accuracy={r.accuracy:.4f}")
    write_metadata(metadata_path(args.out), _meta(args, **{
        f"report_{k}": v for k, v in report.metadata.items() if k not in vars(args)}))


def cmd_attack(args):
    model = load_model(args.model)
    data = _data(args, "test")
    image, label = data.images[args.index], int(data.labels[args.index])
    if predict(model, image) != label:
        raise ValueError(f"image {args.index} is misclassified on clean input; pick a correctly classified one")
    k = "auto" if args.k == "auto" else int(args.k)
    cfg = AttackConfig(lam=args.lam, beta=args.beta, k=k, step_size=args.step_size,
                       max_iters=args.steps, patience=args.patience, tol=args.tol)
    res = find_minimal_noise(model, image, label, cfg)
    write_tensor(res.noise, args.out_noise)
    mag = noise_spectrum(res.noise if res.noise.shape[0] > 1 else res.noise[0])
    grid = np.fft.fftshift(mag) if mag.ndim == 2 else np.fft.fftshift(mag).mean(axis=0)
    write_heatmap(grid, args.out_spectrum)
    ratio = l2_norm(res.noise) / l2_norm(image)
    cov = coverage(mag)
    print(f"success={res.success} iterations={res.iterations} target={res.target} "
          f"noise_norm={l2_norm(res.noise):.4f} ratio={ratio:.5f} coverage={cov:.4f}")
    if args.out_csv:
        write_attack_csv([attack_row(args.index, label, res, l2_norm(image), cov)], args.out_csv)
    write_metadata(metadata_path(args.out_noise), _meta(
        args, success=res.success, iterations=res.iterations, target=res.target,
        noise_norm=f"{l2_norm(res.noise):.6f}", ratio=f"{ratio:.6f}", spectrum_coverage=f"{cov:.6f}",
        **{f"config_{k}": v for k, v in res.config.items()}))


def cmd_augment(args):
    data = _data(args, "train")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    aug = augment_dataset(data, args.sigmas, args.copies, Rng(args.seed))
    save_dataset(aug, out / "dataset.npz")
    print(f"images={len(aug)}")
    write_metadata(out / "meta.txt", _meta(args, images=len(aug)))


def cmd_finetune(args):
    model = load_model(args.model)
    data = _data(args, "train")
    set_frozen(model, FREEZE[args.freeze])
    sgd_train(model, data, args.epochs, args.lr, args.batch_size, Rng(derive_seed(args.seed, 3)))
    save_model(args.out, model)
    print(f"train_accuracy={accuracy(model, data):.4f}")
    write_metadata(metadata_path(args.out), _meta(
        args, epoch_losses=";".join(f"{v:.6f}" for v in model.history)))


def cmd_spectrum(args):
    model = load_model(args.model)
    convs = model.conv_layer_indices()
    if not 0 <= args.layer < len(convs):
        raise ValueError(f"--layer {args.layer} out of range; model has {len(convs)} conv layers")
    weights, _ = model.layer_params(convs[args.layer])
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summaries, cloud, ids = [], [], []
    for f, kernel in enumerate(weights):
        fid = f"filter_{f:02d}"
        s = filter_spectrum(kernel, args.pad, fid)
        write_heatmap(s.grid, out / f"{fid}.ppm")
        summaries.append(s)
        rows = export_pointcloud(kernel, args.pad, args.threshold)
        cloud.extend(rows)
        ids.extend([fid] * len(rows))
    mean = mean_spectrum(list(weights), args.pad, "mean")
    write_heatmap(mean.grid, out / "mean_spectrum.ppm")
    write_metrics_csv(summaries + [mean], out / "metrics.csv")
    write_pointcloud_csv(cloud, out / "pointcloud.csv", ids)
    print(f"mean concentration={mean.concentration:.4f} entropy={mean.entropy:.4f}")
    write_metadata(out / "meta.txt", _meta(args))


def cmd_reference_filters(args):
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summaries = []
    for name in REFERENCE_FILTERS:
        s = filter_spectrum(reference_filter(name), args.pad, name)
        write_heatmap(s.grid, out / f"{name}.ppm")
        summaries.append(s)
    write_metrics_csv(summaries, out / "metrics.csv")
    write_metadata(out / "meta.txt", _meta(args))


def _add_data(p, default_n=100):
    p.add_argument("--data", required=True, help="'synth', a CIFAR-10 batch dir/file, or a dataset dir/.npz")
    p.add_argument("--data-seed", type=int, default=1, help="seed of the synthetic generator")
    p.add_argument("--synth-n", type=int, default=default_n, help="synthetic images per class")
    p.add_argument("--size", type=int, default=16, help="synthetic image size")


def build_parser():
    ap = argparse.ArgumentParser(prog="freqstab", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a desk-cnn")
    _add_data(p)
    p.add_argument("--arch", default="desk-cnn")
    p.add_argument("--loss", choices=("softmax", "hinge"), default="softmax")
    p.add_argument("--act", choices=("relu", "tanh"), default="relu")
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="clean accuracy")
    p.add_argument("--model", required=True)
    _add_data(p, 50)
    p.add_argument("--split", choices=("train", "test"), default="test")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="accuracy under Gaussian noise per sigma")
    p.add_argument("--model", required=True)
    _add_data(p, 50)
    p.add_argument("--sigmas", type=_floats, default=SWEEP_SIGMAS)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--smooth", action="store_true", help="3x3 Gaussian smoothing after degradation")
    p.add_argument("--quantize", action="store_true", help="round noisy pixels to integers")
    p.add_argument("--max-images", type=int, default=0)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("attack", help="minimal additive noise for one image")
    p.add_argument("--model", required=True)
    _add_data(p, 50)
    p.add_argument("--index", type=int, required=True)
    p.add_argument("--lambda", dest="lam", type=float, default=AttackConfig.lam)
    p.add_argument("--beta", type=float, default=AttackConfig.beta)
    p.add_argument("--k", default="auto")
    p.add_argument("--steps", type=int, default=AttackConfig.max_iters)
    p.add_argument("--step-size", type=float, default=AttackConfig.step_size)
    p.add_argument("--patience", type=int, default=AttackConfig.patience)
    p.add_argument("--tol", type=float, default=AttackConfig.tol)
    p.add_argument("--out-noise", required=True)
    p.add_argument("--out-spectrum", required=True)
    p.add_argument("--out-csv", help="optional one-row CSV summary")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("augment", help="add noisy copies of every training image")
    _add_data(p)
    p.add_argument("--out", required=True)
    p.add_argument("--sigmas", type=_floats, default=AUGMENT_SIGMAS)
    p.add_argument("--copies", type=int, default=10)
    p.add_argument("--seed", type=int, default=1)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("finetune", help="retrain with some layers frozen")
    p.add_argument("--model", required=True)
    _add_data(p)
    p.add_argument("--freeze", choices=sorted(FREEZE), default="fc")
    p.add_argument("--epochs", type=int, default=3)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("spectrum", help="per-filter and mean spectra of one conv layer")
    p.add_argument("--model", required=True)
    p.add_argument("--layer", type=int, default=0, help="index among conv layers")
    p.add_argument("--pad", type=int, default=DEFAULT_PAD)
    p.add_argument("--threshold", type=float, default=0.0, help="point-cloud magnitude cut, fraction of peak")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("reference-filters", help="Sobel/Prewitt/Gaussian spectra")
    p.add_argument("--pad", type=int, default=DEFAULT_PAD)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_reference_filters)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (ValueError, OSError, FormatError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
