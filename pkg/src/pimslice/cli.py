"""Command line entry point: compile, simulate, oracle, ablate, noise-sweep, synth."""

from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from pathlib import Path

import numpy as np

from . import plotting
from .bitslice import Slicing
from .compiler import DEFAULT_ERROR_BUDGET, DEFAULT_TEST_INPUTS, compile_network
from .manifest import ManifestError, load_artifact, load_manifest, write_artifact, write_manifest
from .metrics import RunMetrics, histogram_csv, histogram_report, write_metrics_csv
from .oracle import ideal_layer
from .pipeline import TRACE_DTYPE, InputPlan, run_layer
from .studies import SETUPS, run_ablation, noise_sweep
from .tensorio import TensorFormatError, atomic_write, read_tensor, write_tensor
from .xbar import CrossbarConfig

log = logging.getLogger("pimslice")

NOISE_SWEEP_COLUMNS = ("noise_level", "layer", "slicing", "weight_slices", "error",
                       "fallback", "saturations")


class UsageError(Exception):
    pass


def _inputs(manifest, path):
    x = read_tensor(path) if path else manifest.load_inputs()
    if x.ndim == 0 or x.shape[0] == 0:
        raise UsageError("input set is empty")
    return x


def _csv(rows, columns) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def cmd_compile(args) -> int:
    manifest = load_manifest(args.manifest)
    x = _inputs(manifest, args.inputs)[: args.num_test_inputs]
    seed = manifest.seed if args.seed is None else args.seed
    config = CrossbarConfig(rows=args.rows, adc_bits=args.adc_bits, noise_level=args.noise,
                            rng_seed=seed)
    compiled = compile_network(manifest.layers, x, args.error_budget, config, jobs=args.jobs)
    write_artifact(args.output, compiled, manifest, config, int(x.shape[0]))
    for c in compiled:
        print(f"{c.name}: slicing {c.slicing} error {c.measured_error:.4g}"
              + (" (fallback)" if c.fallback else "") + (" (last layer)" if c.forced else ""))
    return 0


def _write_traces(path, traces: list[tuple[str, np.ndarray]]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("layer",) + TRACE_DTYPE.names)
    for name, rec in traces:
        for r in rec.tolist():
            w.writerow((name,) + r)
    atomic_write(path, buf.getvalue())


def cmd_simulate(args) -> int:
    compiled, manifest, art_config = load_artifact(args.artifact)
    for flag, have in (("rows", art_config.rows), ("adc_bits", art_config.adc_bits)):
        want = getattr(args, flag)
        if want is not None and want != have:
            raise UsageError(f"--{flag.replace('_', '-')} {want} does not match the artifact "
                             f"geometry ({have})")
    seed = art_config.rng_seed if args.seed is None else args.seed
    noise = art_config.noise_level if args.noise is None else args.noise
    config = CrossbarConfig(art_config.rows, art_config.adc_bits, art_config.adc_signed,
                            art_config.dac_max_bits, noise, seed)
    plan = InputPlan(Slicing.parse(args.spec_slicing).widths,
                     speculation_enabled=not args.no_speculation)
    out = Path(args.output)
    x = read_tensor(args.inputs)
    rows, traces, total = [], [], RunMetrics()
    for i, c in enumerate(compiled):
        x, m, tr = run_layer(c, x, config, plan, layer_index=i, emit_traces=args.emit_traces,
                             jobs=args.jobs)
        rows.append(m.row("simulate", c.name))
        total.merge(m)
        if args.emit_traces:
            traces.append((c.name, tr))
    rows.append(total.row("simulate", "ALL"))
    write_tensor(out / "outputs.rtsr", x)
    buf = io.StringIO()
    write_metrics_csv(rows, buf)
    atomic_write(out / "metrics.csv", buf.getvalue())
    report = histogram_report(total)
    atomic_write(out / "histogram.csv", histogram_csv(report))
    if args.emit_traces:
        _write_traces(out / "traces.csv", traces)
    if args.plot:
        plotting.plot_colsum_distributions(report, out / "colsum.png", config.adc_bits)
    print(f"converts/column {total.converts_per_column:.3f}, converts/MAC "
          f"{total.converts_per_mac:.4g}, saturations {total.saturation_counts}")
    return 0


def cmd_oracle(args) -> int:
    manifest = load_manifest(args.manifest)
    x = read_tensor(args.inputs)
    for layer in manifest.layers:
        x = ideal_layer(layer, x)[1]
    write_tensor(Path(args.output) / "outputs.rtsr", x)
    return 0


def cmd_ablate(args) -> int:
    manifest = load_manifest(args.manifest)
    x = _inputs(manifest, args.inputs)
    seed = manifest.seed if args.seed is None else args.seed
    results, ladder = run_ablation(manifest.layers, x, args.error_budget, seed,
                                   args.num_test_inputs)
    rows = []
    for r in results:
        for c, m in zip(r.layers, r.per_layer):
            rows.append(m.row(r.setup, c.name))
        rows.append(r.total.row(r.setup, "ALL"))
    out = Path(args.output)
    buf = io.StringIO()
    write_metrics_csv(rows, buf)
    atomic_write(out / "setups.csv", buf.getvalue())
    ladder_rows = [{"rung": k, "count": v["count"],
                    "saturation_rate": f"{v['saturation_rate']:.6g}",
                    "fraction_within_7b": f"{sum(c for b, c in v['histogram'].items() if b <= 7) / max(v['count'], 1):.6g}"}
                   for k, v in ladder.items()]
    atomic_write(out / "ladder.csv",
                 _csv(ladder_rows, ("rung", "count", "saturation_rate", "fraction_within_7b")))
    atomic_write(out / "ladder_histogram.csv", histogram_csv(ladder))
    if not args.no_plot:
        plotting.plot_ablation([r for r in rows if r["layer"] == "ALL"], ladder,
                               out / "ablation.png")
        plotting.plot_colsum_distributions(ladder, out / "ladder.png")
    for r in rows:
        if r["layer"] == "ALL":
            print(f"{r['setup']:>26}: converts/MAC {r['converts_per_mac']}")
    return 0


def cmd_noise_sweep(args) -> int:
    manifest = load_manifest(args.manifest)
    x = _inputs(manifest, args.inputs)
    seed = manifest.seed if args.seed is None else args.seed
    levels = [float(v) for v in args.noise_levels.split(",")]
    points = noise_sweep(manifest.layers, x, levels, args.error_budget, seed,
                         args.num_test_inputs)
    rows = [{"noise_level": f"{p.noise_level:g}", "layer": p.layer, "slicing": str(p.slicing),
             "weight_slices": len(p.slicing), "error": f"{p.error:.6g}",
             "fallback": int(p.fallback), "saturations": p.saturations} for p in points]
    out = Path(args.output)
    atomic_write(out / "noise_sweep.csv", _csv(rows, NOISE_SWEEP_COLUMNS))
    if not args.no_plot:
        plotting.plot_noise_sweep(points, out / "noise_sweep.png")
    return 0


def cmd_synth(args) -> int:
    """Write a small synthetic FC network with bell-curve weights and skewed inputs."""
    from .synthetic import fc_layer, skewed_inputs

    rng = np.random.default_rng(args.seed)
    dims = [int(v) for v in args.dims.split(",")]
    x = skewed_inputs(rng, (args.samples, dims[0]), mean=args.input_mean,
                      zero_fraction=args.zero_fraction)
    layers, act = [], x
    for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
        layer = fc_layer(rng, fan_out, fan_in, name=f"fc{i + 1}", inputs=act,
                         is_last_layer=i == len(dims) - 2)
        layers.append(layer)
        act = ideal_layer(layer, act)[1]
    write_manifest(Path(args.output) / "manifest.json", layers, (dims[0],), args.seed, x)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pimslice", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("compile", help="search weight slicings and solve centers")
    c.add_argument("manifest")
    c.add_argument("-o", "--output", required=True, help="compiled artifact (JSON)")
    c.add_argument("--inputs", help="test input tensor (defaults to the manifest's)")
    c.add_argument("--error-budget", type=float, default=DEFAULT_ERROR_BUDGET)
    c.add_argument("--rows", type=int, default=512)
    c.add_argument("--adc-bits", type=int, default=7)
    c.add_argument("--noise", type=float, default=0.0)
    c.add_argument("--seed", type=int)
    c.add_argument("--num-test-inputs", type=int, default=DEFAULT_TEST_INPUTS)
    c.add_argument("--jobs", type=int, default=1)
    c.set_defaults(func=cmd_compile)

    s = sub.add_parser("simulate", help="run a compiled network on the crossbar model")
    s.add_argument("artifact")
    s.add_argument("inputs", help="input tensor file")
    s.add_argument("-o", "--output", required=True, help="output directory")
    s.add_argument("--no-speculation", action="store_true")
    s.add_argument("--noise", type=float)
    s.add_argument("--spec-slicing", default="4,2,2")
    s.add_argument("--seed", type=int)
    s.add_argument("--rows", type=int)
    s.add_argument("--adc-bits", type=int)
    s.add_argument("--emit-traces", action="store_true")
    s.add_argument("--plot", action="store_true", help="also render colsum.png")
    s.add_argument("--jobs", type=int, default=1)
    s.set_defaults(func=cmd_simulate)

    o = sub.add_parser("oracle", help="exact integer reference outputs")
    o.add_argument("manifest")
    o.add_argument("inputs")
    o.add_argument("-o", "--output", required=True)
    o.set_defaults(func=cmd_oracle)

    for name, func, helptext in (("ablate", cmd_ablate, "run the four cumulative setups"),
                                 ("noise-sweep", cmd_noise_sweep, "error vs noise level")):
        a = sub.add_parser(name, help=helptext)
        a.add_argument("manifest")
        a.add_argument("-o", "--output", required=True)
        a.add_argument("--inputs")
        a.add_argument("--error-budget", type=float, default=DEFAULT_ERROR_BUDGET)
        a.add_argument("--seed", type=int)
        a.add_argument("--num-test-inputs", type=int, default=DEFAULT_TEST_INPUTS)
        a.add_argument("--no-plot", action="store_true")
        if name == "noise-sweep":
            a.add_argument("--noise-levels", default="0,0.04,0.08,0.12")
        a.set_defaults(func=func)

    y = sub.add_parser("synth", help="write a synthetic FC network manifest")
    y.add_argument("-o", "--output", required=True)
    y.add_argument("--dims", default="512,64,10")
    y.add_argument("--samples", type=int, default=32)
    y.add_argument("--seed", type=int, default=0)
    y.add_argument("--input-mean", type=float, default=8.0)
    y.add_argument("--zero-fraction", type=float, default=0.65)
    y.set_defaults(func=cmd_synth)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ManifestError, TensorFormatError, UsageError, ValueError, OSError) as e:
        print(f"pimslice {args.command}: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
