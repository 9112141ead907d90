"""Command-line front end: synth, train, segment, eval, gradcheck, ablate, robustness, report.

Exit codes: 0 success, 1 failed check, 2 configuration error, 3 data error,
4 numerical error.
"""

import argparse
import csv
import json
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .clustering import SpectralConfig, spectral_clustering
from .data import load_features, load_labels, save_features, save_labels, synth_uos_sequence
from .errors import ConfigError, DataError, DimensionMismatch, KTooLarge, NonFiniteLoss, NumericError
from .metrics import accuracy, nmi
from .model import save_checkpoint
from .trainer import (
    gradcheck_instance,
    run_ablation,
    run_robustness,
    run_tma_study,
    segment,
    train,
)


def _config_epilog():
    lines = ["config keys (section.key = default):"]
    lines += [f"  {k} = {cfgmod.format_value(v)}" for k, v in cfgmod.defaults()]
    return "\n".join(lines)


def _settings(args, extra=()):
    return cfgmod.load_settings(args.config, list(args.override or []) + list(extra))


def _fresh_dir(path, force):
    path = Path(path)
    if path.exists() and any(path.iterdir()) and not force:
        raise ConfigError(f"{path} already exists and is not empty; pass --force to overwrite")
    path.mkdir(parents=True, exist_ok=True)
    return path


def _fresh_file(path, force):
    path = Path(path)
    if path.exists() and not force:
        raise ConfigError(f"{path} already exists; pass --force to overwrite")
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _input_sequence(args, settings):
    """Features from --input, or a synthetic sequence from the synth.* keys."""
    if not args.input:
        return synth_uos_sequence(settings.synth)
    seq = load_features(args.input, args.format, labels=args.csv_labels)
    if args.labels:
        seq = replace(seq, labels=load_labels(args.labels))
    return seq


def _projection_residual(seq, r):
    worst = 0.0
    for j in np.unique(seq.labels):
        block = seq.features[:, seq.labels == j]
        u = np.linalg.svd(block, full_matrices=False)[0][:, :r]
        worst = max(worst, float(np.abs(block - u @ (u.T @ block)).max()))
    return worst


def cmd_synth(args):
    extra = []
    if args.seed is not None:
        extra.append(f"synth.seed={args.seed}")
    if args.sigma is not None:
        extra.append(f"synth.noise_sigma={args.sigma}")
    s = _settings(args, extra).synth
    seq = synth_uos_sequence(s)
    out = _fresh_file(args.out, args.force)
    save_features(out, seq, args.format)
    if args.labels_out:
        save_labels(_fresh_file(args.labels_out, args.force), seq.labels)
    print(f"wrote {out}: D={seq.dim} N={seq.n} k={s.k} sigma={s.noise_sigma:g}")
    if s.noise_sigma == 0:
        res = _projection_residual(seq, s.subspace_dim)
        ok = res < 1e-10
        print(f"projection residual {res:.3e} ({'ok' if ok else 'FAIL'})")
        return 0 if ok else 1
    return 0


def cmd_train(args):
    extra = [f"trainer.seed={args.seed}"] if args.seed is not None else []
    settings = _settings(args, extra)
    cfg = settings.trainer
    seq = _input_sequence(args, settings)
    run = _fresh_dir(args.out, args.force)
    (run / "config.txt").write_text(cfgmod.format_settings(settings))

    t0 = time.perf_counter()
    with open(run / "log.jsonl", "w") as logf:

        def on_log(rec):
            logf.write(json.dumps(rec) + "\n")
            logf.flush()
            if args.verbose:
                print(f"t={rec['t']} loss={rec['total']:.6g}" +
                      (f" acc={rec['acc']:.4f}" if "acc" in rec else ""))

        def on_checkpoint(t, params):
            save_checkpoint(run / f"checkpoint_{t:06d}.bin", params)

        try:
            state = train(cfg, seq, callback=on_log, checkpoint=on_checkpoint,
                          checkpoint_every=args.checkpoint_every)
        except NonFiniteLoss as exc:
            if exc.params is not None:
                save_checkpoint(run / "checkpoint.bin", exc.params)
            logf.write(json.dumps({"event": "nonfinite_loss", "t": exc.step}) + "\n")
            raise

    res = segment(state, gt=seq.labels)
    save_labels(run / "labels.txt", res.labels)
    np.savetxt(run / "affinity.csv", res.affinity, delimiter=",", fmt="%.17g")
    save_checkpoint(run / "checkpoint.bin", state.params)
    hist = state.history
    summary = {
        "sequence": seq.name, "D": seq.dim, "N": seq.n, "k": cfg.k, "T": cfg.T, "seed": cfg.seed,
        "final_loss": {k: hist[-1][k] for k in ("rho", "se_residual", "temporal", "total")},
        "commutator_first": hist[0]["commutator"], "commutator_last": hist[-1]["commutator"],
        "acc": res.acc, "nmi": res.nmi,
        "elapsed_s": round(time.perf_counter() - t0, 3),
    }
    (run / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(f"run directory: {run}")
    if res.acc is not None:
        print(f"ACC {res.acc:.4f}  NMI {res.nmi:.4f}")
    return 0


def _load_affinity(path):
    try:
        a = np.loadtxt(path, delimiter=",", ndmin=2)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None
    if a.shape[0] != a.shape[1]:
        raise DataError(f"{path}: affinity must be square, got {a.shape}")
    return a


def cmd_segment(args):
    if bool(args.run) == bool(args.affinity):
        raise ConfigError("give exactly one of --run or --affinity")
    settings = _settings(args)
    k = args.k or settings.trainer.k
    src = Path(args.run) / "affinity.csv" if args.run else Path(args.affinity)
    a = _load_affinity(src)
    labels = spectral_clustering(a, SpectralConfig(k=k, kmeans_restarts=settings.trainer.kmeans_restarts,
                                                   seed=settings.trainer.seed))
    save_labels(_fresh_file(args.out, args.force), labels)
    print(f"wrote {args.out}: N={labels.size} k={k}")
    if args.gt:
        gt = load_labels(args.gt)
        print(f"ACC {accuracy(labels, gt):.4f}  NMI {nmi(labels, gt):.4f}")
    return 0


def cmd_eval(args):
    pred = load_labels(args.pred)
    gt = load_labels(args.gt)
    print(f"ACC {accuracy(pred, gt):.4f}")
    print(f"NMI {nmi(pred, gt, average=args.nmi_average):.4f}")
    return 0


def cmd_gradcheck(args):
    worst = 0.0
    for seed in range(args.seeds):
        err, scale = gradcheck_instance(seed, h=args.h, flip_sign=args.inject_fault == "sign-flip")
        worst = max(worst, err)
        status = "ok" if err < args.threshold else "FAIL"
        print(f"seed {seed:3d}  max|analytic - numeric| = {err:.3e}  (max|grad| {scale:.3e})  {status}")
    passed = worst < args.threshold
    print(f"{'PASS' if passed else 'FAIL'}: worst {worst:.3e}, threshold {args.threshold:.1e}, h {args.h:g}")
    return 0 if passed else 1


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _fmt(x):
    return f"{x:.6f}"


def _runs(xs):
    return ";".join(f"{x:.6f}" for x in xs)


def cmd_ablate(args):
    settings = _settings(args)
    seeds = tuple(args.seeds) if args.seeds else settings.sweep.seeds
    seq = _input_sequence(args, settings)
    out = _fresh_file(args.out, args.force)
    if args.study == "loss":
        cfg = replace(settings.trainer, eval_during_training=False)
        rows = run_ablation(cfg, seq, seeds=seeds, jobs=args.jobs)
        header = ["rho", "se", "temporal", "acc_mean", "acc_std", "nmi_mean", "nmi_std", "acc_runs"]
        body = [[int(r["rho"]), int(r["se"]), int(r["temporal"]), _fmt(r["acc_mean"]), _fmt(r["acc_std"]),
                 _fmt(r["nmi_mean"]), _fmt(r["nmi_std"]), _runs(r["acc_runs"])] for r in rows]
    else:
        rows = run_tma_study(settings.trainer, seq, seeds=seeds, jobs=args.jobs)
        header = ["variant", "acc_mean", "acc_std", "nmi_mean", "nmi_std", "tail_std_mean",
                  "acc_runs", "tail_std_runs"]
        body = [[r["variant"], _fmt(r["acc_mean"]), _fmt(r["acc_std"]), _fmt(r["nmi_mean"]),
                 _fmt(r["nmi_std"]), _fmt(r["tail_std_mean"]), _runs(r["acc_runs"]),
                 _runs(r["tail_std_runs"])] for r in rows]
    _write_csv(out, header, body)
    print("  ".join(h for h in header if not h.endswith("_runs")))
    for line in body:
        print("  ".join(str(v) for h, v in zip(header, line) if not h.endswith("_runs")))
    print(f"wrote {out}")
    return 0


def cmd_robustness(args):
    settings = _settings(args)
    seeds = tuple(args.seeds) if args.seeds else settings.sweep.seeds
    sigmas = tuple(args.sigmas) if args.sigmas else settings.sweep.sigmas
    seq = _input_sequence(args, settings)
    out = _fresh_file(args.out, args.force)
    cfg = replace(settings.trainer, eval_during_training=False)
    rows = run_robustness(cfg, seq, sigmas=sigmas, seeds=seeds, lsr_cfg=settings.lsr, jobs=args.jobs)
    methods = ("raw_lsr", "learned_lsr", "tdsc")
    header = ["sigma"] + [f"{m}_{s}" for m in methods for s in ("mean", "std")]
    body = [[f"{r['sigma']:g}"] + [_fmt(r[f"{m}_{s}"]) for m in methods for s in ("mean", "std")]
            for r in rows]
    _write_csv(out, header, body)
    print("  ".join(header))
    for line in body:
        print("  ".join(line))
    print(f"wrote {out}")
    return 0


def _read_log(path):
    records = []
    with open(path) as fh:
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                if "event" not in rec:
                    records.append(rec)
    if not records:
        raise DataError(f"{path} has no logged steps")
    return records


def cmd_report(args):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    run = Path(args.run)
    if not (run / "log.jsonl").exists():
        raise DataError(f"{run} is not a run directory (no log.jsonl)")
    recs = _read_log(run / "log.jsonl")
    out = Path(args.out) if args.out else run
    out.mkdir(parents=True, exist_ok=True)
    t = [r["t"] for r in recs]

    fig, axes = plt.subplots(1, 4, figsize=(14, 3))
    for ax, key in zip(axes, ("total", "rho", "se_residual", "temporal")):
        ax.plot(t, [r[key] for r in recs])
        ax.set_title(key)
        ax.set_xlabel("step")
    fig.tight_layout()
    fig.savefig(out / "loss_curves.png", dpi=100)
    plt.close(fig)
    written = ["loss_curves.png"]

    if any(r.get("acc") is not None for r in recs):
        fig, ax = plt.subplots(figsize=(5, 3))
        ax.plot(t, [r.get("acc") for r in recs], label="ACC")
        ax.plot(t, [r.get("nmi") for r in recs], label="NMI")
        ax.set_xlabel("step")
        ax.legend()
        fig.tight_layout()
        fig.savefig(out / "metrics_curve.png", dpi=100)
        plt.close(fig)
        written.append("metrics_curve.png")

    lines = [f"run: {run}", f"logged steps: {len(recs)} (last t={t[-1]})"]
    first, last = recs[0], recs[-1]
    for key in ("total", "rho", "se_residual", "temporal", "commutator"):
        if first.get(key) is not None:
            lines.append(f"{key:12s} {first[key]:.6g} -> {last[key]:.6g}")
    summary = run / "summary.json"
    if summary.exists():
        s = json.loads(summary.read_text())
        if s.get("acc") is not None:
            lines.append(f"final ACC {s['acc']:.4f}  NMI {s['nmi']:.4f}")
    text = "\n".join(lines) + "\n"
    (out / "report.txt").write_text(text)
    print(text, end="")
    print("plots: " + ", ".join(written))
    return 0


def _add_config_opts(p):
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--override", action="append", metavar="KEY=VALUE",
                   help="override a config key (repeatable, applied after --config)")


def _add_input_opts(p):
    p.add_argument("--input", help="feature file; omit to use the synth.* sequence")
    p.add_argument("--format", choices=("binary", "csv"), help="input format (default: by extension)")
    p.add_argument("--labels", help="ground-truth label file, one integer per line")
    p.add_argument("--csv-labels", action="store_true", help="last CSV column holds labels")


def build_parser():
    fmt = argparse.RawDescriptionHelpFormatter
    epilog = _config_epilog()
    parser = argparse.ArgumentParser(prog="tdsc", description="Temporal deep self-expressive "
                                     "subspace clustering.", epilog=epilog, formatter_class=fmt)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text, epilog=epilog,
                           formatter_class=fmt)
        p.set_defaults(func=fn)
        p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
        return p

    p = add("synth", cmd_synth, "write a synthetic union-of-subspaces sequence")
    _add_config_opts(p)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("binary", "csv"), default="binary")
    p.add_argument("--labels-out", help="also write the labels to this file")
    p.add_argument("--seed", type=int)
    p.add_argument("--sigma", type=float)
    p.add_argument("--force", action="store_true")

    p = add("train", cmd_train, "train on a sequence and write a run directory")
    _add_config_opts(p)
    _add_input_opts(p)
    p.add_argument("--out", required=True, help="run directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--checkpoint-every", type=int, default=0, metavar="K")
    p.add_argument("--force", action="store_true")

    p = add("segment", cmd_segment, "spectral-cluster a saved affinity")
    _add_config_opts(p)
    p.add_argument("--run", help="run directory (uses its affinity.csv)")
    p.add_argument("--affinity", help="affinity CSV")
    p.add_argument("--k", type=int)
    p.add_argument("--gt", help="ground-truth label file")
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")

    p = add("eval", cmd_eval, "ACC and NMI of a label file against ground truth")
    p.add_argument("pred")
    p.add_argument("gt")
    p.add_argument("--nmi-average", default="arithmetic",
                   choices=("arithmetic", "geometric", "min", "max"))

    p = add("gradcheck", cmd_gradcheck, "compare analytic and finite-difference gradients")
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--h", type=float, default=1e-5)
    p.add_argument("--threshold", type=float, default=1e-5)
    p.add_argument("--inject-fault", choices=("none", "sign-flip"), default="none",
                   help="test hook: corrupt the analytic gradient")

    for name, fn, text in (("ablate", cmd_ablate, "loss-term or TMA/masking ablation table"),
                           ("robustness", cmd_robustness, "accuracy under additive noise")):
        p = add(name, fn, text)
        _add_config_opts(p)
        _add_input_opts(p)
        p.add_argument("--out", required=True, help="CSV output")
        p.add_argument("--seeds", type=int, nargs="+")
        p.add_argument("--jobs", type=int, default=1, help="parallel training processes")
        p.add_argument("--force", action="store_true")
        if name == "ablate":
            p.add_argument("--study", choices=("loss", "tma"), default="loss")
        else:
            p.add_argument("--sigmas", type=float, nargs="+")

    p = add("report", cmd_report, "summary text and loss/metric plots for a run directory")
    p.add_argument("--run", required=True)
    p.add_argument("--out", help="output directory (default: the run directory)")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, KTooLarge) as exc:
        return _fail(2, "config error", exc)
    except (DataError, DimensionMismatch, OSError) as exc:
        return _fail(3, "data error", exc)
    except NumericError as exc:
        return _fail(4, "numerical error", exc)


def _fail(code, kind, exc):
    print(f"tdsc: {kind}: {exc}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
