"""Command-line entry point.

Data goes to stdout as ``key=value`` records, logs and the resolved config go
to stderr. Any flag can be defaulted from the environment as
``EFFLIF_<FLAG>`` (``--n-pe`` reads ``EFFLIF_N_PE``).

Exit codes: 0 ok, 1 configuration/validation error, 2 data error,
3 numeric failure (divergence or a failed gradient check).
"""

from __future__ import annotations

import argparse
import contextlib
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import data as dataio
from .checkpoint import load_checkpoint, save_checkpoint
from .errors import ConfigError, DataError, EfflifError, NumericError
from .gradcheck import TOLERANCE, gradcheck
from .hwcost import HwConfig, dram_membrane_writes, dram_reduction, lif_unit_count, spike_gen_cycles
from .memmodel import MEMBRANE_BYTES, efficiency_ratios, lif_bytes
from .memsave import measure_membrane_memory
from .network import PRESETS, NetworkSpec, dense_net
from .sharing import BASELINE, Kind, SharingScheme
from .trainer import TrainConfig, evaluate, train

log = logging.getLogger("efflif")

ENV_PREFIX = "EFFLIF_"
EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
_TRUE = {"1", "true", "yes", "on"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(f"{self.prog}: {message}")


def _record(**kv) -> str:
    return " ".join(f"{k}={_fmt(v)}" for k, v in kv.items())


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, (list, tuple)):
        return ",".join(_fmt(x) for x in v)
    return str(v)


def _emit(line: str, log_file=None) -> None:
    print(line, flush=True)
    if log_file is not None:
        log_file.write(line + "\n")
        log_file.flush()


# -- shared option groups -----------------------------------------------------

def _add_scheme(p, default=None):
    p.add_argument("--scheme", default=default,
                   help="baseline, layer, channel, layer-channel (or C#4, L+C#2)")
    p.add_argument("--groups", type=int, default=None, help="channel groups n")


def _add_data(p):
    p.add_argument("--data", help="CSV, one sample per row, label last")
    p.add_argument("--header", action="store_true", help="CSV has a header row")
    p.add_argument("--manifest", help="INI manifest naming train/val/test CSVs")
    p.add_argument("--synthetic", choices=["xor"], help="generate a synthetic task instead")
    p.add_argument("--samples", type=int, default=256, help="synthetic sample count")


def _build_parser() -> argparse.ArgumentParser:
    root = _Parser(prog="efflif", description="Shared-membrane LIF networks.")
    root.add_argument("--threads", type=int, default=None, help="cap BLAS worker threads")
    root.add_argument("-v", "--verbose", action="store_true")
    sub = root.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="train a network")
    p.add_argument("--spec", help="network spec file or preset name")
    _add_scheme(p)
    _add_data(p)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--weight-decay", type=float, default=5e-4)
    p.add_argument("--backward", choices=["cached", "recompute"], default="cached")
    p.add_argument("--detach-reset", action="store_true")
    p.add_argument("--checkpoint", help="write weights here")
    p.add_argument("--log", help="append epoch records here")
    p.add_argument("--plot", help="training curves figure (png/pdf/svg)")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--spec", required=True)
    p.add_argument("--checkpoint", required=True)
    _add_data(p)
    p.add_argument("--split", choices=["train", "val", "test", "all"], default="test")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("gradcheck", help="autograd against finite differences")
    _add_scheme(p, "baseline")
    p.add_argument("--layers", type=int, default=None)
    p.add_argument("--neurons", type=int, default=None)
    p.add_argument("--timesteps", type=int, default=None)
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mode", choices=["cached", "recompute"], default="cached")
    p.add_argument("--tolerance", type=float, default=TOLERANCE)

    p = sub.add_parser("memreport", help="analytic LIF memory report")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--spec", help="network spec file")
    src.add_argument("--preset", choices=sorted(PRESETS), default=None)
    p.add_argument("--timesteps", type=int, default=None)
    _add_scheme(p)
    p.add_argument("--mode", default="auto",
                   choices=["auto", "forward", "backward_cached", "backward_recompute"])
    p.add_argument("--verify", action="store_true", help="compare with runtime counters")
    p.add_argument("--plot", help="memory figure")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("hwreport", help="LIF unit and DRAM traffic counts")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--spec")
    src.add_argument("--preset", choices=sorted(PRESETS), default=None)
    p.add_argument("--timesteps", type=int, default=None)
    _add_scheme(p)
    p.add_argument("--n-pe", type=int, default=128)
    p.add_argument("--batches", default="1,2,4,8,16,32,64",
                   help="comma-separated mini-batch sizes")
    p.add_argument("--plot", help="DRAM reduction figure")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("synth-data", help="write a synthetic dataset")
    p.add_argument("--task", choices=["xor"], default="xor")
    p.add_argument("--samples", type=int, default=256)
    p.add_argument("--seq-len", type=int, default=4)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--out", required=True, help="output CSV")
    p.add_argument("--header", action="store_true")
    p.add_argument("--manifest", help="also split and write a manifest here")
    p.add_argument("--seed", type=int, default=0)
    return root


def _apply_env(parser: argparse.ArgumentParser, env) -> None:
    """Take defaults from ``EFFLIF_*`` variables before parsing."""
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            for sp in action.choices.values():
                _apply_env(sp, env)
            continue
        if not action.option_strings or action.dest in ("help",):
            continue
        value = env.get(ENV_PREFIX + action.dest.upper())
        if value is None:
            continue
        if isinstance(action, argparse._StoreTrueAction):
            action.default = value.strip().lower() in _TRUE
        else:
            # argparse converts string defaults through ``type``
            action.default = value
            action.required = False


# -- helpers ------------------------------------------------------------------

def _scheme(args) -> SharingScheme | None:
    if getattr(args, "scheme", None) is None:
        return None
    return SharingScheme.parse(args.scheme, args.groups)


def _load_spec(args, default=None) -> NetworkSpec:
    name = getattr(args, "spec", None)
    preset = getattr(args, "preset", None)
    if name in PRESETS:
        preset, name = name, None
    scheme = _scheme(args)
    if preset:
        # presets know their own block structure, so they apply the scheme themselves
        spec = PRESETS[preset](scheme=scheme or BASELINE)
        scheme = None
    elif name:
        spec = NetworkSpec.load(name)
    elif default is not None:
        spec = default
    else:
        raise ConfigError("no network given (use --spec or --preset)")
    timesteps = getattr(args, "timesteps", None)
    if timesteps is not None:
        spec = replace(spec, timesteps=timesteps)
    if scheme is not None:
        spec = spec.with_scheme(scheme)
    spec.validate()
    return spec


def _xor_spec() -> NetworkSpec:
    return dense_net(2, [16, 16], 2, timesteps=4, encoding="sequence")


def _fit(ds: dataio.SequenceDataset, spec: NetworkSpec) -> dataio.SequenceDataset:
    n = len(ds)
    if int(np.prod(ds.feature_shape)) != int(np.prod(spec.input_shape)):
        raise ConfigError(f"data features {ds.feature_shape} do not fit network input "
                          f"{spec.input_shape}")
    return dataio.SequenceDataset(ds.x.reshape((n,) + spec.input_shape), ds.y,
                                  max(ds.n_classes, 1), ds.tag)


def _csv_schema(spec: NetworkSpec) -> dataio.Schema:
    shape = spec.input_shape
    return dataio.Schema(shape[0], int(np.prod(shape[1:], dtype=int)), spec.n_classes)


def _load_splits(args, spec: NetworkSpec) -> dict[str, dataio.SequenceDataset]:
    if args.manifest:
        splits = dataio.load_manifest(args.manifest)
    elif args.data:
        full = dataio.load_csv(args.data, _csv_schema(spec), args.header, "all")
        train_, val, test = dataio.split(full, seed=args.seed)
        train_, val, test = dataio.standardize(train_, val, test)
        splits = {"train": train_, "val": val, "test": test}
    elif args.synthetic == "xor":
        full = dataio.synth_temporal_xor(args.samples, spec.input_shape[-1], seed=args.seed,
                                         channels=spec.input_shape[0])
        train_, val, test = dataio.split(full, seed=args.seed)
        splits = {"train": train_, "val": val, "test": test}
    else:
        raise ConfigError("no data given (use --data, --manifest or --synthetic)")
    return {k: _fit(v, spec) for k, v in splits.items()}


def _echo(args) -> None:
    items = {k: v for k, v in sorted(vars(args).items()) if v is not None}
    print("config " + _record(**items), file=sys.stderr, flush=True)


# -- subcommands ----------------------------------------------------------------

def cmd_train(args) -> int:
    default = _xor_spec() if args.synthetic == "xor" and not args.spec else None
    spec = _load_spec(args, default)
    splits = _load_splits(args, spec)
    cfg = TrainConfig(lr0=args.lr, momentum=args.momentum, weight_decay=args.weight_decay,
                      epochs=args.epochs, batch=args.batch, seed=args.seed,
                      backward_mode=args.backward, detach_reset=args.detach_reset)
    val = splits.get("val")
    with contextlib.ExitStack() as stack:
        log_file = stack.enter_context(open(args.log, "a", encoding="utf-8")) if args.log else None
        _emit(_record(event="start", network=spec.name or "custom",
                      spec_hash=spec.spec_hash().hex()[:12], train=len(splits["train"]),
                      val=len(val) if val is not None else 0), log_file)
        weights, history = train(spec, splits["train"], cfg, val=val if val is not None and len(val) else None,
                                 on_epoch=lambda r: _emit(r.as_line(), log_file))
        final = evaluate(weights, spec, splits["train"])
        out = dict(event="done", train_acc=final.accuracy)
        if history.best_epoch is not None:
            out.update(best_epoch=history.best_epoch, best_val_acc=history.best_val_accuracy)
        test = splits.get("test")
        if test is not None and len(test):
            m = evaluate(weights, spec, test)
            out.update(test_acc=m.accuracy, test_loss=m.loss)
        out["spike_rate"] = final.spike_rates
        _emit(_record(**out), log_file)
    if args.checkpoint:
        save_checkpoint(args.checkpoint, weights, spec)
        log.info("wrote %s", args.checkpoint)
    if args.plot and len(history):
        from .plotting import plot_history
        plot_history(history, args.plot)
        _emit(_record(figure=args.plot))
    return EXIT_OK


def cmd_eval(args) -> int:
    spec = _load_spec(args)
    weights = load_checkpoint(args.checkpoint, spec)
    splits = _load_splits(args, spec)
    if args.split == "all":
        parts = [v for v in splits.values() if len(v)]
        ds = dataio.SequenceDataset(np.concatenate([p.x for p in parts]),
                                    np.concatenate([p.y for p in parts]),
                                    max(p.n_classes for p in parts), "all")
    elif args.split in splits:
        ds = splits[args.split]
    else:
        raise DataError(f"no {args.split!r} split in the data")
    if not len(ds):
        raise DataError(f"split {args.split!r} is empty")
    m = evaluate(weights, spec, ds)
    print(_record(split=args.split, samples=m.samples, accuracy=m.accuracy, loss=m.loss,
                  spike_rate=m.spike_rates))
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    scheme = SharingScheme.parse(args.scheme, args.groups)
    rep = gradcheck(scheme, seeds=args.seeds, seed=args.seed, layers=args.layers,
                    neurons=args.neurons, timesteps=args.timesteps, mode=args.mode)
    worst = int(np.argmax(rep.errors)) if rep.errors else -1
    ok = rep.passed(args.tolerance)
    print(_record(scheme=scheme.label(), mode=args.mode, seeds=args.seeds,
                  max_rel_error=rep.max_error, worst_seed=worst,
                  tolerance=args.tolerance, status="pass" if ok else "fail"))
    return EXIT_OK if ok else EXIT_NUMERIC


def _table(rows: list[list[str]]) -> str:
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    return "\n".join("  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in rows)


def cmd_memreport(args) -> int:
    spec = _load_spec(args, PRESETS["toy4"]())
    base = lif_bytes(spec.with_scheme(BASELINE), args.timesteps, args.mode)
    rep = lif_bytes(spec, args.timesteps, args.mode)
    reports = [base] if rep.scheme == "Baseline" else [base, rep]
    for r in reports:
        print(_record(kind="memory", **r.records()))
    for i, b in enumerate(rep.blocks):
        print(_record(kind="block", index=i, layers=list(b.layers), scheme=b.scheme,
                      buffer_floats=b.buffer_floats, unshared_floats=b.unshared_floats,
                      reduction=b.reduction))
    ratios = efficiency_ratios(base, rep)
    print(_record(kind="ratio", **ratios))
    rows = [["scheme", "T", "backward", "fwd MB", "bwd MB", "weights MB"]]
    for r in reports:
        rows.append([r.scheme, str(r.timesteps), r.backward, f"{r.mb('lif_forward'):.4g}",
                     f"{r.mb('lif_backward'):.4g}", f"{r.mb('weights'):.4g}"])
    print(_table(rows), file=sys.stderr)
    status = EXIT_OK
    if args.verify:
        if any(l.kind == "conv2d" for l in spec.layers):
            raise ConfigError("--verify needs an executable network (no conv2d layers)")
        T = rep.timesteps
        measured = measure_membrane_memory(replace(spec, timesteps=T), seed=args.seed)
        checks = {
            "forward": (measured["forward_floats"] * MEMBRANE_BYTES, rep.lif_forward),
            "backward_cached": (measured["cached_backward_floats"] * MEMBRANE_BYTES,
                                lif_bytes(spec, T, "backward_cached").lif_backward),
        }
        if "recompute_backward_floats" in measured:
            checks["backward_recompute"] = (
                measured["recompute_backward_floats"] * MEMBRANE_BYTES,
                lif_bytes(spec, T, "backward_recompute").lif_backward)
        for name, (got, want) in checks.items():
            ok = got == want
            print(_record(kind="verify", quantity=name, instrumented_bytes=got,
                          analytic_bytes=want, status="pass" if ok else "fail"))
            if not ok:
                status = EXIT_NUMERIC
    if args.plot:
        from .plotting import plot_memory
        schemes = [BASELINE] + [s for s in {b.scheme for b in spec.partition()}
                                if s.kind is not Kind.BASELINE]
        plot_memory([lif_bytes(spec.with_scheme(s), args.timesteps, args.mode) for s in schemes],
                    args.plot)
        print(_record(figure=args.plot))
    return status


def cmd_hwreport(args) -> int:
    spec = _load_spec(args, PRESETS["toy4"]())
    scheme = _scheme(args) or next(
        (b.scheme for b in spec.partition() if b.scheme.kind is not Kind.BASELINE), BASELINE)
    try:
        batches = [int(b) for b in args.batches.split(",") if b.strip()]
    except ValueError:
        raise ConfigError(f"bad --batches {args.batches!r}") from None
    ratio = scheme.n_groups if scheme.channel else 1
    hw = HwConfig(n_pe=args.n_pe, lif_share_ratio=ratio)
    T = args.timesteps
    base_writes = dram_membrane_writes(spec, T, BASELINE)
    writes = dram_membrane_writes(spec, T, scheme)
    print(_record(kind="lif", scheme=scheme.label(), n_pe=hw.n_pe,
                  lif_units=lif_unit_count(hw), spike_gen_cycles=spike_gen_cycles(hw)))
    print(_record(kind="dram_writes", scheme=scheme.label(), baseline=base_writes,
                  shared=writes, ratio=base_writes / writes))
    reductions = [dram_reduction(spec, scheme, b, T) for b in batches]
    for b, r in zip(batches, reductions):
        print(_record(kind="dram_reduction", scheme=scheme.label(), batch=b, reduction=r))
    if args.plot:
        from .plotting import plot_dram
        plot_dram(batches, {scheme.label(): reductions}, args.plot)
        print(_record(figure=args.plot))
    return EXIT_OK


def cmd_synth(args) -> int:
    ds = dataio.synth_temporal_xor(args.samples, args.seq_len, seed=args.seed, noise=args.noise)
    out = Path(args.out)
    dataio.save_csv(ds, out, args.header)
    print(_record(kind="dataset", task=args.task, path=out, samples=len(ds),
                  shape=list(ds.feature_shape), classes=ds.n_classes))
    if args.manifest:
        manifest = Path(args.manifest)
        parts = dataio.split(ds, seed=args.seed)
        names = {}
        for part in parts:
            path = manifest.parent / f"{out.stem}_{part.tag}.csv"
            dataio.save_csv(part, path, args.header)
            names[part.tag] = os.path.relpath(path, manifest.parent)
        schema = dataio.Schema(ds.feature_shape[0], ds.feature_shape[1], ds.n_classes)
        dataio.write_manifest(manifest, schema, names, args.header)
        print(_record(kind="manifest", path=manifest, **{p.tag: len(p) for p in parts}))
    return EXIT_OK


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "gradcheck": cmd_gradcheck,
            "memreport": cmd_memreport, "hwreport": cmd_hwreport, "synth-data": cmd_synth}


def run(argv=None, env=None) -> int:
    env = os.environ if env is None else env
    parser = _build_parser()
    _apply_env(parser, env)
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                            format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
        _echo(args)
        with contextlib.ExitStack() as stack:
            if args.threads is not None:
                if args.threads < 1:
                    raise ConfigError("--threads must be >= 1")
                from threadpoolctl import threadpool_limits
                stack.enter_context(threadpool_limits(limits=args.threads))
            return COMMANDS[args.command](args)
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, EfflifError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
