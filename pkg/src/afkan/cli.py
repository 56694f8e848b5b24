"""Command line interface.

Subcommands: train, params, gradcheck, plot-basis, compare. Every report
path writes delimited text (CSV or JSONL) and, where a picture helps, a
PNG next to it. Exit codes: 0 success, 2 usage, 3 missing data,
4 numeric failure.
"""
from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import audit, figures
from .activations import ACTIVATION_TAGS
from .basis import FUNCTION_TYPES, GridSpec, sample_curves
from .data import DATASET_NAMES, DataMissingError, load_dataset
from .layers import MODES, VARIANTS, ModelSpec, init_model, save_model
from .tensor import NumericsError, Tensor, grad_check
from .train import TrainConfig, multi_run, write_metrics

GRAD_TOL = 1e-4


def _resolve_data_dir(flag_value):
    if flag_value:
        return flag_value
    return os.environ.get("AFKAN_DATA_DIR", "data")


def _parse_widths(text):
    try:
        widths = tuple(int(w) for w in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"widths must be comma-separated integers, got '{text}'")
    return widths


def _default_grid_order(variant, grid, order):
    if grid is None:
        grid = 5 if variant in ("grbf", "rswaf") else 3
    if order is None:
        order = 3
    return grid, order


def _build_spec(args, parser):
    """Fold parsed flags into a ModelSpec, rejecting knob/variant
    combinations that do not exist."""
    v = args.variant
    if v != "afkan":
        for flag, name in ((args.mode, "--mode"), (args.ftype, "--ftype"),
                           (args.pln, "--pln"), (args.l2mm, "--l2mm")):
            if flag is not None:
                parser.error(f"{name} only applies to the afkan variant")
    if v not in ("grbf", "rswaf") and args.num_centers is not None:
        parser.error("--num-centers only applies to grbf/rswaf")
    if v in ("mlp", "grbf", "rswaf"):
        if args.grid is not None or args.order is not None:
            parser.error(f"--grid/--order do not apply to {v}")
    grid, order = _default_grid_order(v, args.grid, args.order)
    return ModelSpec(
        variant=v,
        widths=args.widths,
        grid=grid,
        order=order,
        act=args.act,
        ftype=args.ftype or "quad1",
        mode=args.mode or "global_attn",
        pln=args.pln or "layer",
        l2mm=(args.l2mm or "on") == "on",
        num_centers=args.num_centers or 8,
        seed=args.seed)


def _train_config(args, spec):
    epochs = args.epochs
    if epochs is None:
        epochs = 35 if args.dataset == "fashion_mnist" else 25
    return TrainConfig(
        model=spec, epochs=epochs, batch_size=args.batch_size, lr=args.lr,
        weight_decay=args.weight_decay, gamma=args.gamma, runs=args.runs,
        seed=args.seed)


def _progress_printer(quiet):
    if quiet:
        return None

    def show(rec):
        print(f"seed {rec.run_seed} epoch {rec.epoch:2d} "
              f"lr {rec.lr:.2e} loss {rec.train_loss:.4f} "
              f"train {100 * rec.train_acc:.2f}% "
              f"test {100 * rec.test_acc:.2f}% "
              f"({rec.seconds:.0f}s)")
    return show


def cmd_train(args, parser):
    spec = _build_spec(args, parser)
    cfg = _train_config(args, spec)
    train_ds, test_ds = load_dataset(args.dataset,
                                     _resolve_data_dir(args.data_dir))
    out = Path(args.out or f"runs/{args.variant}_{args.dataset}")
    out.mkdir(parents=True, exist_ok=True)
    summary = multi_run(cfg, train_ds, test_ds,
                        progress=_progress_printer(args.quiet))
    save_model(summary.last_model, out / "model.npz")
    config = {k: v for k, v in vars(args).items() if k != "func"}
    write_metrics(out / "metrics.jsonl", summary, config=config)
    figures.save_training_figure(
        summary.histories, out / "training.png",
        title=f"{args.variant} on {args.dataset}")
    n_params = init_model(spec).num_params()
    header = "variant,dataset,params,runs,mean_acc,std_acc,mean_f1,std_f1"
    row = (f"{args.variant},{args.dataset},{n_params},{cfg.runs},"
           f"{summary.mean_acc:.4f},{summary.std_acc:.4f},"
           f"{summary.mean_f1:.4f},{summary.std_f1:.4f}")
    (out / "summary.csv").write_text(header + "\n" + row + "\n")
    print(header)
    print(row)
    return 0


def cmd_params(args, parser):
    spec = _build_spec(args, parser)
    model = init_model(spec)
    report = audit.count_params(model)
    lines = report.lines()
    if args.ops:
        lines += [""] + audit.estimate_flops(model, args.batch_size).lines()
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text)
    print(text, end="")
    return 0


def _nudge_probe(x, edges, delta):
    """Move entries of x away from basis window edges so finite
    differences never straddle a kink. Entries are shifted in place."""
    for edge in edges:
        close = np.abs(x - edge) < delta
        x[close] = edge + delta
    return x


def gradcheck_combos():
    """The sweep grid: every knob combination that exists per variant."""
    combos = []
    for mode in MODES:
        for act in ACTIVATION_TAGS:
            for ftype in FUNCTION_TYPES:
                combos.append(("afkan", mode, act, ftype))
    combos.append(("relukan", "-", "-", "-"))
    combos.append(("mlp", "-", "silu", "-"))
    combos.append(("grbf", "-", "-", "-"))
    combos.append(("rswaf", "-", "-", "-"))
    return combos


_KINK_ACTS = {"relu", "leaky_relu", "selu"}


def run_gradcheck(batch=4, d_in=12, d_out=5, grid=3, order=3, eps=1e-5,
                  seed=0, combos=None, progress=None):
    """Finite-difference check of every parameter tensor of every layer
    configuration. Returns rows of (variant, mode, act, ftype, worst).

    Window edges are jittered off their exact grid positions and probe
    inputs are pushed away from them, so piecewise activations are
    differentiable everywhere the check evaluates them.
    """
    rng = np.random.default_rng(seed)
    rows = []
    if combos is None:
        combos = gradcheck_combos()
    for variant, mode, act, ftype in combos:
        spec = ModelSpec(
            variant=variant, widths=(d_in, d_out), grid=grid, order=order,
            act=act if act != "-" else "silu",
            ftype=ftype if ftype != "-" else "quad1",
            mode=mode if mode != "-" else "global_attn",
            seed=seed)
        model = init_model(spec)
        layer = model.layers[0]
        x = rng.uniform(0.05, 0.95, size=(batch, d_in))
        if variant in ("afkan", "relukan"):
            phase = layer.phase
            for edge_t in (phase.low, phase.high):
                edge_t.data = edge_t.data + rng.uniform(
                    0.005, 0.03, size=edge_t.data.shape) * rng.choice(
                        [-1.0, 1.0], size=edge_t.data.shape)
            edges = np.unique(np.concatenate(
                [phase.low.data.ravel(), phase.high.data.ravel()]))
            if variant == "relukan" or act in _KINK_ACTS:
                _nudge_probe(x, edges, 2e-3)
        probe = Tensor(x)
        proj = Tensor(rng.standard_normal((batch, d_out)))

        def loss():
            return (model.forward(probe, training=False) * proj).sum()

        worst = 0.0
        for _, p in model.parameters():
            worst = max(worst, grad_check(loss, p, eps=eps))
        rows.append((variant, mode, act, ftype, worst))
        if progress:
            progress(rows[-1])
    return rows


def cmd_gradcheck(args, parser):
    def show(row):
        if not args.quiet:
            print(f"{row[0]},{row[1]},{row[2]},{row[3]},{row[4]:.3e}")

    if not args.quiet:
        print("variant,mode,act,ftype,worst_rel_err")
    rows = run_gradcheck(batch=args.batch, d_in=args.d_in, d_out=args.d_out,
                         grid=args.grid if args.grid is not None else 3,
                         order=args.order if args.order is not None else 3,
                         eps=args.eps, seed=args.seed, progress=show)
    worst = max(r[4] for r in rows)
    bad = [r for r in rows if r[4] > GRAD_TOL]
    print(f"checked {len(rows)} configurations, worst {worst:.3e}, "
          f"tolerance {GRAD_TOL:.0e}")
    if bad:
        print(f"{len(bad)} configurations exceed tolerance", file=sys.stderr)
        return 4
    return 0


def cmd_plot_basis(args, parser):
    grid, order = _default_grid_order(
        "afkan" if args.basis in ("afkan", "relu_kan") else "grbf",
        args.grid, args.order)
    spec = GridSpec(grid, order)
    x_lo = args.x_min
    x_hi = args.x_max
    if x_lo is None:
        x_lo = {"bspline": -1.0, "grbf": -2.5, "rswaf": -2.5}.get(
            args.basis, -0.6)
    if x_hi is None:
        x_hi = {"bspline": 1.0, "grbf": 2.5, "rswaf": 2.5}.get(
            args.basis, 1.6)
    xs, curves = sample_curves(
        args.basis, spec, act=args.act, ftype=args.ftype or "quad1",
        x_lo=x_lo, x_hi=x_hi, num=args.resolution,
        num_centers=args.num_centers or 8)
    out = Path(args.out or "plots")
    out.mkdir(parents=True, exist_ok=True)
    stem = out / f"basis_{args.basis}"
    with open(f"{stem}.csv", "w") as f:
        f.write("x,index,value\n")
        for i, xv in enumerate(xs):
            for j in range(curves.shape[1]):
                f.write(f"{xv:.6f},{j},{curves[i, j]:.8f}\n")
    figures.save_basis_figure(
        xs, curves, f"{stem}.png",
        title=f"{args.basis} basis, grid {grid} order {order}")
    print(f"wrote {stem}.csv and {stem}.png")
    return 0


def _parse_variant_token(token, parser):
    """'afkan' or 'afkan:spatial_attn' style entries for compare."""
    if ":" in token:
        variant, mode = token.split(":", 1)
        if mode not in MODES:
            parser.error(f"unknown mode '{mode}' in '{token}'")
    else:
        variant, mode = token, None
    if variant not in VARIANTS:
        parser.error(f"unknown variant '{variant}' in '{token}'")
    if mode is not None and variant != "afkan":
        parser.error(f"mode suffix only applies to afkan, got '{token}'")
    return variant, mode


def _parse_span(text, parser, what):
    try:
        lo, hi = (int(p) for p in text.split(":"))
    except ValueError:
        parser.error(f"{what} must look like LO:HI, got '{text}'")
    if lo > hi:
        parser.error(f"{what} range is empty: '{text}'")
    return list(range(lo, hi + 1))


def cmd_compare(args, parser):
    data_dir = _resolve_data_dir(args.data_dir)
    train_ds, test_ds = load_dataset(args.dataset, data_dir)
    out = Path(args.out or f"compare_{args.dataset}")
    out.mkdir(parents=True, exist_ok=True)
    epochs = args.epochs
    if epochs is None:
        epochs = 35 if args.dataset == "fashion_mnist" else 25
    show = _progress_printer(args.quiet)

    if args.grid_sweep or args.order_sweep:
        if not (args.grid_sweep and args.order_sweep):
            parser.error("--grid-sweep and --order-sweep go together")
        grids = _parse_span(args.grid_sweep, parser, "--grid-sweep")
        orders = _parse_span(args.order_sweep, parser, "--order-sweep")
        acc = [[0.0] * len(orders) for _ in grids]
        lines = ["grid,order,params,mean_acc,std_acc"]
        for gi, g in enumerate(grids):
            for oi, k in enumerate(orders):
                spec = ModelSpec(variant="afkan", widths=args.widths,
                                 grid=g, order=k, act=args.act,
                                 seed=args.seed)
                cfg = TrainConfig(model=spec, epochs=epochs,
                                  batch_size=args.batch_size, lr=args.lr,
                                  weight_decay=args.weight_decay,
                                  gamma=args.gamma, runs=args.runs,
                                  seed=args.seed)
                summary = multi_run(cfg, train_ds, test_ds, progress=show)
                acc[gi][oi] = summary.mean_acc
                n = init_model(spec).num_params()
                lines.append(f"{g},{k},{n},{summary.mean_acc:.4f},"
                             f"{summary.std_acc:.4f}")
        (out / "sweep.csv").write_text("\n".join(lines) + "\n")
        figures.save_sweep_figure(grids, orders, acc, out / "sweep.png")
        print("\n".join(lines))
        print(f"wrote {out / 'sweep.csv'} and {out / 'sweep.png'}")
        return 0

    tokens = [t for t in args.variants.split(",") if t]
    if not tokens:
        parser.error("--variants is empty")
    rows = []
    lines = ["variant,mode,params,mean_acc,std_acc,mean_f1,std_f1"]
    for token in tokens:
        variant, mode = _parse_variant_token(token, parser)
        grid, order = _default_grid_order(variant, None, None)
        spec = ModelSpec(variant=variant, widths=args.widths, grid=grid,
                         order=order, act=args.act,
                         mode=mode or "global_attn", seed=args.seed)
        cfg = TrainConfig(model=spec, epochs=epochs,
                          batch_size=args.batch_size, lr=args.lr,
                          weight_decay=args.weight_decay, gamma=args.gamma,
                          runs=args.runs, seed=args.seed)
        summary = multi_run(cfg, train_ds, test_ds, progress=show)
        n = init_model(spec).num_params()
        label = token
        rows.append((label, summary.mean_acc, summary.std_acc))
        lines.append(f"{variant},{mode or '-'},{n},{summary.mean_acc:.4f},"
                     f"{summary.std_acc:.4f},{summary.mean_f1:.4f},"
                     f"{summary.std_f1:.4f}")
    (out / "compare.csv").write_text("\n".join(lines) + "\n")
    figures.save_compare_figure(rows, out / "compare.png",
                                title=f"{args.dataset}, {epochs} epochs")
    print("\n".join(lines))
    print(f"wrote {out / 'compare.csv'} and {out / 'compare.png'}")
    return 0


def _add_model_flags(p):
    p.add_argument("--variant", choices=VARIANTS, required=True)
    p.add_argument("--widths", type=_parse_widths, default=(784, 64, 10),
                   help="comma-separated layer sizes (default 784,64,10)")
    p.add_argument("--grid", type=int, default=None,
                   help="grid cells (default 3)")
    p.add_argument("--order", type=int, default=None,
                   help="window overlap order (default 3)")
    p.add_argument("--act", choices=ACTIVATION_TAGS, default="silu")
    p.add_argument("--ftype", choices=FUNCTION_TYPES, default=None,
                   help="combination form, afkan only (default quad1)")
    p.add_argument("--mode", choices=MODES, default=None,
                   help="reduction mode, afkan only (default global_attn)")
    p.add_argument("--pln", choices=("layer", "batch", "none"), default=None,
                   help="pre-output norm, afkan only (default layer)")
    p.add_argument("--l2mm", choices=("on", "off"), default=None,
                   help="L2 min-max map of basis outputs, afkan only")
    p.add_argument("--num-centers", type=int, default=None,
                   help="radial centers, grbf/rswaf only (default 8)")
    p.add_argument("--seed", type=int, default=0)


def _add_train_flags(p):
    p.add_argument("--dataset", choices=DATASET_NAMES, default="mnist")
    p.add_argument("--data-dir", default=None,
                   help="defaults to $AFKAN_DATA_DIR, then ./data")
    p.add_argument("--epochs", type=int, default=None,
                   help="default 25 (mnist) or 35 (fashion_mnist)")
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--weight-decay", type=float, default=1e-4)
    p.add_argument("--gamma", type=float, default=0.8,
                   help="per-epoch learning rate decay factor")
    p.add_argument("--runs", type=int, default=1,
                   help="consecutive seeds starting at --seed")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--quiet", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="afkan",
        description="train and inspect Kolmogorov-Arnold style models")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model and log metrics")
    _add_model_flags(p)
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("params", help="parameter count report")
    _add_model_flags(p)
    p.add_argument("--ops", action="store_true",
                   help="include the per-layer operation estimate")
    p.add_argument("--batch-size", type=int, default=1)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_params)

    p = sub.add_parser("gradcheck",
                       help="finite-difference check of every layer config")
    p.add_argument("--batch", type=int, default=4)
    p.add_argument("--d-in", type=int, default=12)
    p.add_argument("--d-out", type=int, default=5)
    p.add_argument("--grid", type=int, default=None)
    p.add_argument("--order", type=int, default=None)
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("plot-basis",
                       help="sample basis curves to CSV and PNG")
    p.add_argument("--basis",
                   choices=("afkan", "relu_kan", "grbf", "rswaf", "bspline"),
                   required=True)
    p.add_argument("--grid", type=int, default=None)
    p.add_argument("--order", type=int, default=None)
    p.add_argument("--act", choices=ACTIVATION_TAGS, default="silu")
    p.add_argument("--ftype", choices=FUNCTION_TYPES, default=None)
    p.add_argument("--num-centers", type=int, default=None)
    p.add_argument("--x-min", type=float, default=None)
    p.add_argument("--x-max", type=float, default=None)
    p.add_argument("--resolution", type=int, default=201)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_plot_basis)

    p = sub.add_parser("compare",
                       help="train several variants, or sweep grid/order")
    p.add_argument("--variants", default="mlp,afkan,relukan",
                   help="comma list; afkan may carry :mode")
    p.add_argument("--widths", type=_parse_widths, default=(784, 64, 10))
    p.add_argument("--act", choices=ACTIVATION_TAGS, default="silu")
    p.add_argument("--grid-sweep", default=None, metavar="LO:HI")
    p.add_argument("--order-sweep", default=None, metavar="LO:HI")
    p.add_argument("--seed", type=int, default=0)
    _add_train_flags(p)
    p.set_defaults(func=cmd_compare)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, parser)
    except DataMissingError as err:
        print(f"error: {err}", file=sys.stderr)
        return 3
    except NumericsError as err:
        print(f"numeric failure: {err}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
