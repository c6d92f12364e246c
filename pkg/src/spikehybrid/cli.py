"""Command-line entry point.

Output files go to ``--out`` or, failing that, ``$SPIKEHYBRID_OUT`` (default
``./spikehybrid_out``).  ``run`` and ``compare`` exit with status 1 when an
invariant check fails, 2 on usage or input errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from fractions import Fraction
from pathlib import Path

from . import energy as en
from .pipeline import (MODE_ALIASES, BlockConfig, build_block, compare, energy_csv, write_report)
from .serialize import dumps, write_tensor

OUT_ENV = "SPIKEHYBRID_OUT"


def _out_dir(args) -> Path:
    return Path(args.out or os.environ.get(OUT_ENV, "spikehybrid_out"))


def _config(args) -> BlockConfig:
    cfg = BlockConfig.load(args.config) if args.config else BlockConfig()
    if args.seed is not None:
        cfg = BlockConfig.from_dict({**cfg.to_dict(), "seed": args.seed})
    return cfg


def _constants(args) -> en.EnergyConstants:
    return en.EnergyConstants.load(args.constants) if args.constants else en.EnergyConstants()


def cmd_build(args) -> int:
    cfg = _config(args)
    block = build_block(cfg)
    out = _out_dir(args)
    (out / "weights").mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
    for b, x in enumerate(block.x):
        write_tensor(out / f"x_{b}.txt", x)
    for name, w in block.weights.items():
        write_tensor(out / "weights" / f"{name}.txt", w)
        write_tensor(out / "weights" / f"{name}.bias.txt", block.biases[name])
        (out / "weights" / f"{name}.quant.json").write_text(dumps(block.qweights[name]) + "\n")
    print(f"block written to {out}")
    return 0


def _run_modes(args, modes) -> int:
    cfg = _config(args)
    report, _ = compare(build_block(cfg), modes, _constants(args))
    paths = write_report(report, _out_dir(args), args.format)
    for c in report.checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name}: {c.detail}")
    for method, err in sorted(report.energy_errors.items()):
        print(f"energy for {method} not priced: {err}")
    print("wrote " + ", ".join(str(p) for p in paths))
    return 0 if report.ok else 1


def cmd_run(args) -> int:
    return _run_modes(args, [args.mode])


def cmd_compare(args) -> int:
    modes = [m.strip() for m in args.modes.split(",") if m.strip()]
    bad = [m for m in modes if m not in MODE_ALIASES]
    if not modes or bad:
        raise ValueError(f"unknown modes {bad or modes}; choose from {sorted(MODE_ALIASES)}")
    return _run_modes(args, modes)


def _energy_inputs(args) -> en.EnergyInputs:
    if args.shape != "custom":
        return en.preset_inputs(args.shape, B=args.B, S=args.S)
    missing = [k for k in ("H_in", "H_out", "gamma", "beta") if getattr(args, k) is None]
    if missing:
        raise ValueError("custom shape needs " + ", ".join("--" + m.replace("_", "-") for m in missing))
    return en.EnergyInputs(B=args.B, S=args.S, H_in=args.H_in, H_out=args.H_out, gamma=args.gamma,
                           beta=Fraction(args.beta), S_r_low=Fraction(args.spike_rate))


def cmd_energy(args) -> int:
    c = _constants(args)
    i = _energy_inputs(args)
    cal = en.reference_calibration(B=args.B, S=args.S, c=c)
    cmp = en.method_comparison(i, c, overrides=en.standard_overrides(i),
                               joules_per_unit=cal.joules_per_unit)
    doc = {"inputs": {k: (float(v) if isinstance(v, Fraction) else v) for k, v in vars(i).items()},
           **cmp.to_dict(),
           "micro_joules": {m: cmp.micro_joules(m) for m in cmp.per_method},
           "calibration": {"preset": "opt-2.7b", **cal.to_dict()}}
    by_method = {}
    for r in cmp.rows():
        by_method.setdefault(r["method"], {})[r["component"]] = r
    out = _out_dir(args)
    out.mkdir(parents=True, exist_ok=True)
    (out / "energy.csv").write_text(energy_csv(by_method))
    (out / "energy.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    sys.stdout.write(energy_csv(by_method))
    red = cmp.reduction_vs["mixed_quant"]
    print(f"block energy saving of kirin vs mixed_quant: {float(red['kirin']):.1%}")
    print(f"calibrated on opt-2.7b: {cal.joules_per_unit:.4g} J/unit, kirin {cal.predicted_uJ:.2f} uJ "
          f"(reference {cal.target_uJ} uJ, {cal.relative_error:+.1%})")
    return 0


def cmd_constants(args) -> int:
    c = en.EnergyConstants.load(args.file) if args.file else en.EnergyConstants()
    print(json.dumps(c.to_dict(), indent=2, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="spikehybrid", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, block=True):
        sp.add_argument("--out", help=f"output directory (default ${OUT_ENV})")
        sp.add_argument("--constants", help="energy constants JSON file")
        if block:
            sp.add_argument("--config", help="BlockConfig JSON file")
            sp.add_argument("--seed", type=int, help="override the config seed")

    sp = sub.add_parser("build", help="write a toy block's inputs and weights")
    common(sp)
    sp.set_defaults(func=cmd_build)

    sp = sub.add_parser("run", help="run one mode and check it against the quantized reference")
    common(sp)
    sp.add_argument("--mode", required=True, choices=["fp", "quant", "snn", "kirin"])
    sp.add_argument("--format", choices=["json", "csv"], default="json")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("compare", help="run several modes side by side")
    common(sp)
    sp.add_argument("--modes", default="fp,quant,snn,kirin", help="comma-separated modes")
    sp.add_argument("--format", choices=["json", "csv"], default="json")
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("energy", help="analytical energy of a model-shaped block")
    common(sp, block=False)
    sp.add_argument("--shape", default="llama2-7b", choices=[*en.MODEL_PRESETS, "custom"])
    sp.add_argument("--B", type=int, default=1)
    sp.add_argument("--S", type=int, default=1)
    sp.add_argument("--H-in", dest="H_in", type=int)
    sp.add_argument("--H-out", dest="H_out", type=int)
    sp.add_argument("--gamma", type=int)
    sp.add_argument("--beta", type=str, help="retained integers per row (int or fraction)")
    sp.add_argument("--spike-rate", default="1/16", help="low-precision spike rate")
    sp.set_defaults(func=cmd_energy)

    sp = sub.add_parser("constants", help="validate and print an energy constants file")
    sp.add_argument("--file", help="JSON file with table entries such as mac_4_4_32")
    sp.set_defaults(func=cmd_constants)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, KeyError, OSError, json.JSONDecodeError, TypeError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
