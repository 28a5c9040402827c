"""Command-line entry point: ``pte {run,sweep,replay,serve,report}``.

Config precedence is ``--override`` > config file (``--config`` or
``$PTE_CONFIG``) > built-in defaults. Exit codes: 0 ok, 1 task failure,
2 usage/config/input error.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import os
import sys
from pathlib import Path

from pte.core.ensemble import ensemble_action
from pte.core.pose import FEATURE_DOF, feature_to_pose
from pte.core.chunks import ChunkBuffer
from pte.errors import EmptyColumnError, PTEError
from pte.harness import (
    load_spec,
    open_chunk_log,
    packaged_config,
    read_results,
    record_chunk_log,
    reference_table,
    results_csv,
    sweep_f,
    write_results,
)
from pte.sim import EpisodeResult, run_episode

log = logging.getLogger("pte")


class UsageError(Exception):
    pass


def _resolve_config(arg: str | None) -> Path | None:
    arg = arg or os.environ.get("PTE_CONFIG") or None
    if arg is None:
        return None
    p = Path(arg)
    if p.exists():
        return p
    if "/" not in arg and not arg.endswith(".json") and packaged_config(arg).exists():
        return packaged_config(arg)
    raise UsageError(f"config file not found: {arg}")


def _spec(args):
    return load_spec(_resolve_config(args.config), args.override or [])


def format_table(rows, reference=None) -> str:
    ref = {r["f"]: r for r in (reference or [])}
    head = f"{'f':>4}  {'mean elapsed (s)':>16}  {'success rate (%)':>16}"
    if reference is not None:
        head += f"  {'speedup':>7}  {'ref elapsed (s)':>15}  {'ref rate (%)':>12}  {'ref speedup':>11}"
    lines = [head, "-" * len(head)]
    base = next((r.mean_elapsed_seconds for r in rows if r.f == 0), math.nan)
    ref_base = ref.get(0, {}).get("mean_elapsed_s", math.nan)
    for r in rows:
        line = f"{r.f:>4}  {r.mean_elapsed_seconds:>16.3f}  {100 * r.success_rate:>16.1f}"
        if reference is not None:
            line += f"  {base / r.mean_elapsed_seconds:>7.2f}"
            if r.f in ref:
                e = ref[r.f]["mean_elapsed_s"]
                line += f"  {e:>15.3f}  {100 * ref[r.f]['success_rate']:>12.1f}  {ref_base / e:>11.2f}"
            else:
                line += f"  {'-':>15}  {'-':>12}  {'-':>11}"
        lines.append(line)
    return "\n".join(lines)


def write_trace(result: EpisodeResult, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in result.trace.steps:
            fh.write(json.dumps({"t": s.t, "command": list(s.command), "actual": list(s.actual),
                                 "sources": list(s.sources), "events": list(s.events)}) + "\n")
        for note in result.trace.notes:
            fh.write(json.dumps({"note": note}) + "\n")


def cmd_run(args) -> int:
    spec = _spec(args)
    seed = spec.base_seed if args.seed is None else args.seed
    record = bool(args.trace or args.chunk_log)
    if args.remote:
        from pte.stream import client_loop

        result = client_loop(args.remote, spec.ensemble, spec.plant, seed, spec.scenario, record_trace=record)
    else:
        result = run_episode(seed, spec.ensemble, spec.predictor, spec.plant, spec.scenario, record_trace=record)
    print(
        f"seed={seed} f={spec.ensemble.f} success={str(result.success).lower()} "
        f"cause={result.failure_cause.value} steps={result.elapsed_steps} "
        f"elapsed_s={result.elapsed_seconds:.6f}"
    )
    if result.detail:
        print(f"detail: {result.detail}")
    if args.trace and result.trace is not None:
        write_trace(result, args.trace)
        print(f"trace: {args.trace}")
    if args.chunk_log and result.trace is not None:
        record_chunk_log(result, args.chunk_log)
        print(f"chunk log: {args.chunk_log}")
    return 0 if result.success else 1


def cmd_sweep(args) -> int:
    spec = _spec(args)
    if args.seed is not None:
        spec = dataclasses.replace(spec, base_seed=args.seed)
    rows = sweep_f(spec, record_traces=bool(args.chunk_log))
    out = Path(args.out or "results.csv")
    write_results(rows, out)
    if args.chunk_log:
        d = Path(args.chunk_log)
        d.mkdir(parents=True, exist_ok=True)
        for row in rows:
            for r in row.trial_results:
                record_chunk_log(r, d / f"f{row.f:02d}_seed{r.seed}.jsonl")
    print(format_table(rows))
    print(f"results: {out}")
    return 0


def replay_commands(cursor, ensemble):
    """Yield ``(t, command)`` for every tick from the first to the last logged chunk.

    Chunks become visible at their own inference time. Ticks whose column is
    empty repeat the previous command.
    """
    pending = cursor.next_chunk()
    if pending is None:
        return
    if ensemble.f >= pending.length:
        raise PTEError(f"f={ensemble.f} must be below the logged chunk length {pending.length}")
    ensemble = dataclasses.replace(ensemble, chunk_len=pending.length)
    buffer = ChunkBuffer(pending.length, pending.dof)
    t = pending.inference_time
    last = None
    while True:
        while pending is not None and pending.inference_time <= t:
            buffer.push(pending)
            pending = cursor.next_chunk()
        try:
            last = ensemble_action(buffer, t, ensemble)
        except EmptyColumnError:
            pass
        if last is not None:
            yield t, last
        if pending is None and t >= buffer.newest_time:
            return
        t += 1


def cmd_replay(args) -> int:
    spec = _spec(args)
    path = Path(args.log)
    if not path.exists():
        raise UsageError(f"chunk log not found: {path}")
    out = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    n = 0
    try:
        with open_chunk_log(path) as cur:
            for t, cmd in replay_commands(cur, spec.ensemble):
                if cmd.shape[0] == FEATURE_DOF:
                    feature_to_pose(cmd)
                out.write(json.dumps({"t": t, "command": cmd.tolist()}) + "\n")
                n += 1
    finally:
        if out is not sys.stdout:
            out.close()
    print(f"replayed {n} commands", file=sys.stderr)
    return 0


def cmd_serve(args) -> int:
    from pte.stream import PolicyServer

    spec = _spec(args)
    server = PolicyServer(args.listen, spec.predictor, spec.ensemble.chunk_len, spec.plant.dt, args.service_delay)
    host, port = server.address
    print(f"serving on {host}:{port}", flush=True)
    try:
        server.serve()
    except KeyboardInterrupt:
        pass
    return 0


def cmd_report(args) -> int:
    path = Path(args.results)
    if not path.exists():
        raise UsageError(f"results file not found: {path}")
    rows = read_results(path)
    for r in rows:
        if r.trials and abs(r.successes / r.trials - r.success_rate) > 5e-7:
            print(f"warning: f={r.f} success_rate {r.success_rate} != {r.successes}/{r.trials}", file=sys.stderr)
            r.success_rate = r.successes / r.trials
    print(format_table(rows, reference_table()))
    print("ref columns: published real-robot measurements, shown for trend comparison only")
    if args.out:
        Path(args.out).write_text(results_csv(rows), encoding="utf-8")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="config JSON (or packaged name: default, stress); falls back to $PTE_CONFIG")
    common.add_argument("--seed", type=int, help="episode seed (run) or base seed (sweep)")
    common.add_argument("--override", action="append", metavar="KEY=VAL", help="e.g. ensemble.f=10 (repeatable)")
    common.add_argument("--out", help="output path")
    common.add_argument("--trace", help="per-step trace JSON Lines path (run)")
    common.add_argument("--chunk-log", help="chunk log path (run) or directory (sweep)")
    common.add_argument("--remote", metavar="HOST:PORT", help="source chunks from a policy server (run)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="pte", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="run one episode").set_defaults(func=cmd_run)
    sub.add_parser("sweep", parents=[common], help="sweep f and write a results CSV").set_defaults(func=cmd_sweep)
    rp = sub.add_parser("replay", parents=[common], help="drive the ensemble from a chunk log")
    rp.add_argument("log")
    rp.set_defaults(func=cmd_replay)
    sp = sub.add_parser("serve", parents=[common], help="run the policy server")
    sp.add_argument("--listen", default="127.0.0.1:8765", metavar="HOST:PORT")
    sp.add_argument("--service-delay", type=float, default=0.0, metavar="SECONDS")
    sp.set_defaults(func=cmd_serve)
    rep = sub.add_parser("report", parents=[common], help="summarize a results CSV against the reference table")
    rep.add_argument("results")
    rep.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, PTEError, OSError) as exc:
        print(f"pte {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
