"""``sdtp`` command-line driver.

    sdtp run SCENARIO [--seed N] [--protocol P] [--out DIR]
    sdtp sweep SCENARIO --axis NAME --values V1,V2,.. [--reps R] [--protocols P1,P2] [--jobs J] [--out DIR]
    sdtp fig {fig5,fig7,fig8} --out PATH [--seeds N] [--packets N] [--seed N] [--jobs J]

Every command writes ``manifest.json`` next to its outputs. Scenario
errors exit with status 2 and a one-line diagnostic.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path
from typing import Optional

from .. import __version__
from ..sim.network import run
from ..sim.scenario import ScenarioInvalid
from . import fig_repro as figs
from .scenario import load, scenario_hash
from .sweep import aggregate_csv, rows_csv, sweep


def _sha(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def write_manifest(out_dir: Path, command: list, outputs, scenario=None,
                   scenario_file: Optional[Path] = None, seed=None, extra=None) -> Path:
    manifest = {
        "artifact": "sdtp",
        "version": __version__,
        "command": command,
        "seed": seed,
        "outputs": {name: _sha((out_dir / name).read_bytes()) for name in sorted(outputs)},
    }
    if scenario is not None:
        manifest["scenario_sha256"] = scenario_hash(scenario)
    if scenario_file is not None:
        manifest["scenario_file"] = str(scenario_file)
        manifest["scenario_file_sha256"] = _sha(scenario_file.read_bytes())
    if extra:
        manifest.update(extra)
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def cmd_run(args) -> int:
    sc = load(args.scenario)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.protocol:
        changes["protocol"] = args.protocol
    sc = sc.with_(**changes).validate() if changes else sc
    res = run(sc)
    out = Path(args.out)
    _write(out / "trace.log", res.trace.text())
    _write(out / "metrics.csv", rows_csv([res.summary()]))
    write_manifest(out, ["run", str(args.scenario), "--seed", str(sc.seed), "--protocol", sc.protocol],
                   ["trace.log", "metrics.csv"], sc, Path(args.scenario), sc.seed,
                   {"placements": {str(k): v for k, v in res.placements.items()},
                    "completed": res.completed, "conservation_balanced": res.conservation.balanced})
    s = res.summary()
    print(f"{sc.scenario_id} {sc.protocol} seed={sc.seed} conn_delay_ms={s.conn_delay_ms} "
          f"mean_e2e_ms={s.mean_e2e_ms} jitter_ms={s.jitter_ms} retx={s.retx_count} "
          f"undelivered={s.undelivered} -> {out}")
    return 0


def cmd_sweep(args) -> int:
    sc = load(args.scenario)
    if args.seed is not None:
        sc = sc.with_(seed=args.seed)
    values = [v for v in args.values.split(",") if v.strip()]
    protocols = [p.strip() for p in args.protocols.split(",")] if args.protocols else None
    res = sweep(sc, args.axis, values, args.reps, protocols, args.jobs)
    out = Path(args.out)
    _write(out / "runs.csv", rows_csv(res.rows))
    _write(out / "aggregate.csv", aggregate_csv(res))
    write_manifest(out, ["sweep", str(args.scenario), "--axis", args.axis, "--values", args.values,
                         "--reps", str(args.reps)] + (["--protocols", args.protocols] if args.protocols else []),
                   ["runs.csv", "aggregate.csv"], sc, Path(args.scenario), sc.seed)
    print(f"{len(res.rows)} runs, {len(res.aggregate)} aggregate rows -> {out}")
    return 0


def cmd_fig(args) -> int:
    kwargs = {}
    if args.which in ("fig5", "fig7"):
        kwargs.update(seeds=args.seeds, base_seed=args.seed, jobs=args.jobs)
        if args.packets is not None:
            kwargs["packets"] = args.packets
    else:
        kwargs.update(seed=args.seed)
        if args.packets is not None:
            kwargs["packets"] = args.packets
    text = figs.fig_repro(args.which, **kwargs)
    out = Path(args.out)
    _write(out, text)
    write_manifest(out.parent, ["fig", args.which, "--out", out.name, "--seed", str(args.seed)],
                   [out.name], seed=args.seed, extra={"figure": args.which, "parameters": kwargs})
    print(f"{args.which}: {text.count(chr(10)) - 1} rows -> {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sdtp", description="SDTP versus TCP simulation driver")
    p.add_argument("--version", action="version", version=f"sdtp {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one scenario")
    r.add_argument("scenario", type=Path)
    r.add_argument("--seed", type=int)
    r.add_argument("--protocol", choices=("sdtp", "tcp"))
    r.add_argument("--out", default="out")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="sweep one scenario parameter")
    s.add_argument("scenario", type=Path)
    s.add_argument("--axis", required=True)
    s.add_argument("--values", required=True, help="comma-separated")
    s.add_argument("--reps", type=int, default=1)
    s.add_argument("--protocols", help="comma-separated, default: the scenario's protocol")
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--seed", type=int)
    s.add_argument("--out", default="out")
    s.set_defaults(func=cmd_sweep)

    f = sub.add_parser("fig", help="emit figure-ready CSV")
    f.add_argument("which", choices=sorted(figs.FIGURES))
    f.add_argument("--out", required=True)
    f.add_argument("--seeds", type=int, default=10)
    f.add_argument("--seed", type=int, default=1)
    f.add_argument("--packets", type=int)
    f.add_argument("--jobs", type=int, default=1)
    f.set_defaults(func=cmd_fig)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ScenarioInvalid as exc:
        print(f"sdtp: invalid scenario: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"sdtp: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
