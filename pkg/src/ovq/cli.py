"""Command-line interface.

Subcommands: ``gen`` writes task streams, ``run`` evaluates one mixer over
a stream file, ``bench`` sweeps a benchmark grid, ``verify`` runs the
equivalence suite. Exit codes: 0 success, 1 verification failure,
2 configuration error. Every report carries a meta block echoing the
resolved defaults.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import __version__
from .bench import (
    MixerSpec,
    RECALL_SCHEMA,
    STATE_SCHEMA,
    TASK_SCHEMA,
    recall_benchmark,
    rows_to_csv,
    rows_to_json,
    state_size_sweep,
    token_embeddings,
    token_task_eval,
    verify_all,
)
from .engine import OvqConfig, ovq_forward_chunk
from .errors import ConfigurationError, GenerationError, ParseError
from .state_io import load_state, save_state
from .tasks import GENERATORS, SpecialTokens, load_streams, save_streams

_FAULT_FLAGS = {
    "none": "none",
    "count-skip": "count_skip",
    "mask-off-by-one": "mask_off_by_one",
    "growth-over-alloc": "growth_over_alloc",
}

_MIXER_FLAGS = {
    "full-attention": "full_attention",
    "ovq": "ovq",
    "vq-fixed": "vq_fixed",
    "linear-baseline": "linear_baseline",
}


def _parse_ablation(text: str) -> tuple[str, float | None]:
    if text == "none":
        return "none", None
    if text == "rand-assign":
        return "random_assign", None
    if text == "linear-growth":
        return "linear_growth", None
    if text.startswith("const-lr="):
        try:
            return "constant_lr", float(text.split("=", 1)[1])
        except ValueError as exc:
            raise ConfigurationError(f"bad constant learning rate in {text!r}") from exc
    raise ConfigurationError(
        f"unknown ablation {text!r}; expected none, rand-assign, linear-growth, or const-lr=R"
    )


def _ovq_config(args, n_max: int | None = None) -> OvqConfig:
    ablation, rate = _parse_ablation(args.ablation)
    kwargs = dict(
        n_max=args.n_max if n_max is None else n_max,
        chunk_len=args.chunk_len,
        beta=args.beta,
        ablation=ablation,
        seed=args.seed,
    )
    if rate is not None:
        kwargs["constant_lr_rate"] = rate
    return OvqConfig(**kwargs)


def _mixer_spec(args, kind: str) -> MixerSpec:
    if kind == "ovq":
        return MixerSpec(kind="ovq", beta=args.beta, d=args.dim, ovq=_ovq_config(args))
    if kind == "vq_fixed":
        return MixerSpec(kind="vq_fixed", beta=args.beta, d=args.dim, vq_n=args.n_max)
    return MixerSpec(kind=kind, beta=args.beta, d=args.dim)


def _meta(args, extra: dict | None = None) -> dict:
    meta = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    meta["version"] = __version__
    if extra:
        meta.update(extra)
    return meta


def _emit(text: str, out_path: str | None) -> None:
    if out_path in (None, "-"):
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    else:
        with open(out_path, "w", encoding="utf-8") as f:
            f.write(text)


def _int_grid(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x]
    except ValueError as exc:
        raise ConfigurationError(f"bad integer grid {text!r}") from exc


# ---------------------------------------------------------------------------
# Subcommands


def _cmd_gen(args) -> int:
    params: dict = {"vocab_size": args.vocab_size}
    if args.task == "basic_icr":
        params.update(
            num_pairs=args.num_pairs,
            key_len=args.key_len,
            val_len=args.val_len,
            num_queries=args.num_queries,
        )
    elif args.task == "positional_icr":
        params.update(
            num_keys=args.num_keys,
            copies=args.copies,
            key_len=args.key_len,
            val_len=args.val_len,
        )
    else:
        params.update(
            num_functions=args.num_functions,
            num_examples=args.num_examples,
            io_len=args.io_len,
        )
    generator = GENERATORS[args.task]
    streams = [generator(seed=args.seed + i, **params) for i in range(args.count)]
    save_streams(streams, args.out, fmt=args.format)
    print(f"wrote {len(streams)} {args.task} stream(s) to {args.out} ({args.format})")
    return 0


def _run_with_snapshots(args, streams) -> list[dict]:
    """Stream instances sequentially through one persistent engine state,
    loaded from a snapshot when asked, and score predictions at the target
    positions. The loaded snapshot's own configuration drives the engine."""
    from .engine import OvqState

    vocabs = {s.vocab_size for s in streams}
    if len(vocabs) != 1:
        raise ConfigurationError("state snapshots need a uniform vocab across streams")
    sp = SpecialTokens(vocabs.pop())

    if args.load_state:
        state = load_state(args.load_state)
        if state.d != args.dim:
            raise ConfigurationError(f"loaded state has d={state.d}, run asked for d={args.dim}")
    else:
        state = OvqState.fresh(_ovq_config(args), args.dim)
    chunk_len = state.config.chunk_len

    qk_table, v_table = token_embeddings(sp.total_vocab, args.dim, args.embedding_seed)
    rows = []
    for stream in streams:
        toks = stream.tokens
        q = qk_table[toks]
        v = v_table[toks]
        outputs = []
        for t0 in range(0, len(toks), chunk_len):
            t1 = min(t0 + chunk_len, len(toks))
            out, _ = ovq_forward_chunk(state, q[t0:t1], q[t0:t1], v[t0:t1])
            outputs.append(out)
        out = np.concatenate(outputs, axis=0)
        positions = stream.target_positions
        decoded = np.argmax(out[positions] @ v_table.T, axis=1)
        rows.append(
            {
                "task": stream.meta.get("task", "unknown"),
                "mixer": f"ovq(n_max={state.config.n_max},L={chunk_len})",
                "T": int(len(toks)),
                "n_targets": int(len(positions)),
                "accuracy": float(np.mean(decoded == stream.targets[positions])),
                "state_scalars": int(state.scalars_stored()),
                "untrained_probe": True,
            }
        )
    if args.save_state:
        save_state(state, args.save_state)
        print(f"saved engine state to {args.save_state}", file=sys.stderr)
    return rows


def _cmd_run(args) -> int:
    streams = load_streams(args.stream, fmt=args.stream_format)
    kind = _MIXER_FLAGS[args.mixer]
    if (args.save_state or args.load_state) and kind != "ovq":
        raise ConfigurationError("--save-state/--load-state only apply to the ovq mixer")

    if kind == "ovq" and (args.save_state or args.load_state):
        rows = _run_with_snapshots(args, streams)
    else:
        mixer = _mixer_spec(args, kind)
        rows = [
            token_task_eval(mixer, stream, embedding_seed=args.embedding_seed)
            for stream in streams
        ]

    meta = _meta(args, {"schema": TASK_SCHEMA, "untrained_probe": True})
    text = (
        rows_to_csv(rows, TASK_SCHEMA, meta)
        if args.format == "csv"
        else rows_to_json(rows, TASK_SCHEMA, meta)
    )
    _emit(text, args.out)
    return 0


def _cmd_bench(args) -> int:
    t_grid = _int_grid(args.T)
    mixer_kinds = [m.strip() for m in args.mixers.split(",") if m.strip()]
    for m in mixer_kinds:
        if m not in _MIXER_FLAGS:
            raise ConfigurationError(f"unknown mixer {m!r}; choose from {sorted(_MIXER_FLAGS)}")

    mixers = []
    for m in mixer_kinds:
        kind = _MIXER_FLAGS[m]
        if kind == "ovq":
            for n_max in _int_grid(args.n_max_grid):
                mixers.append(
                    MixerSpec(
                        kind="ovq", beta=args.beta, d=args.dim, ovq=_ovq_config(args, n_max)
                    )
                )
        elif kind == "vq_fixed":
            mixers.append(
                MixerSpec(kind=kind, beta=args.beta, d=args.dim, vq_n=_int_grid(args.n_max_grid)[0])
            )
        else:
            mixers.append(MixerSpec(kind=kind, beta=args.beta, d=args.dim))

    rows = []
    if args.bench == "state-size":
        rows = state_size_sweep(mixers, t_grid)
        schema = STATE_SCHEMA
    else:
        for mixer in mixers:
            for T in t_grid:
                for s in range(args.seeds):
                    rows.append(
                        recall_benchmark(mixer, T, args.dim, min(args.probes, T), args.seed + s)
                    )
        rows.sort(key=lambda r: (r.mixer, r.T, r.seed))
        schema = RECALL_SCHEMA

    meta = _meta(args, {"schema": schema})
    text = (
        rows_to_csv(rows, schema, meta)
        if args.format == "csv"
        else rows_to_json(rows, schema, meta)
    )
    _emit(text, args.out)
    return 0


def _cmd_verify(args) -> int:
    report = verify_all(seed=args.seed, sizes=args.scale, fault=_FAULT_FLAGS[args.inject_fault])
    report["meta"].update(_meta(args))
    _emit(json.dumps(report, indent=2, sort_keys=True), args.out)
    failed = [c["name"] for c in report["checks"] if not c["passed"]]
    if failed:
        print(f"FAILED checks: {', '.join(failed)}", file=sys.stderr)
        return 1
    print(f"all {len(report['checks'])} checks passed", file=sys.stderr)
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ovq",
        description="Online vector-quantized attention benchmarks and verification.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, with_engine=True):
        p.add_argument("--seed", type=int, default=0, help="base random seed")
        if with_engine:
            p.add_argument("--chunk-len", type=int, default=128, help="engine chunk length")
            p.add_argument("--n-max", type=int, default=2048, help="dictionary capacity")
            p.add_argument("--beta", type=float, default=16.0, help="attention logit scale")
            p.add_argument("--dim", type=int, default=64, help="head / embedding dimension")
            p.add_argument(
                "--ablation",
                default="none",
                help="none, rand-assign, linear-growth, or const-lr=R",
            )
        p.add_argument(
            "--format", choices=("csv", "json"), default="csv", help="report format"
        )
        p.add_argument("--out", default="-", help="output path, '-' for stdout")

    g = sub.add_parser(
        "gen", help="generate task streams", formatter_class=argparse.ArgumentDefaultsHelpFormatter
    )
    g.add_argument("--task", choices=sorted(GENERATORS), required=True)
    g.add_argument("--count", type=int, default=1, help="number of instances")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True, help="output file")
    g.add_argument("--format", choices=("jsonl", "bin"), default="jsonl")
    g.add_argument("--vocab-size", type=int, default=10000)
    g.add_argument("--num-pairs", type=int, default=220)
    g.add_argument("--key-len", type=int, default=8)
    g.add_argument("--val-len", type=int, default=8)
    g.add_argument("--num-queries", type=int, default=6)
    g.add_argument("--num-keys", type=int, default=55)
    g.add_argument("--copies", type=int, default=4)
    g.add_argument("--num-functions", type=int, default=16)
    g.add_argument("--num-examples", type=int, default=80)
    g.add_argument("--io-len", type=int, default=12)
    g.set_defaults(func=_cmd_gen)

    r = sub.add_parser(
        "run",
        help="evaluate one mixer over a stream file",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    r.add_argument("--stream", required=True, help="stream file from gen")
    r.add_argument("--stream-format", choices=("jsonl", "bin"), default="jsonl")
    r.add_argument("--mixer", choices=sorted(_MIXER_FLAGS), default="ovq")
    r.add_argument("--embedding-seed", type=int, default=0)
    r.add_argument("--save-state", default=None, help="write final engine state here")
    r.add_argument("--load-state", default=None, help="start from this engine state")
    add_common(r)
    r.set_defaults(func=_cmd_run)

    b = sub.add_parser(
        "bench",
        help="sweep a benchmark grid",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    b.add_argument("--bench", choices=("recall", "state-size"), default="recall")
    b.add_argument("--mixers", default="full-attention,ovq,linear-baseline")
    b.add_argument("--T", default="256,1024", help="comma-separated context lengths")
    b.add_argument(
        "--n-max-grid", default="2048", help="comma-separated dictionary capacities for ovq"
    )
    b.add_argument("--probes", type=int, default=64, help="probe queries per run")
    b.add_argument("--seeds", type=int, default=1, help="seeds per grid point")
    add_common(b)
    b.set_defaults(func=_cmd_bench)

    v = sub.add_parser(
        "verify",
        help="run the equivalence and invariant suite",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--scale", choices=("small", "default", "large"), default="default")
    v.add_argument(
        "--inject-fault",
        choices=sorted(_FAULT_FLAGS),
        default="none",
        help="deliberately break one engine step to prove the suite catches it",
    )
    v.add_argument("--out", default="-", help="JSON report path, '-' for stdout")
    v.set_defaults(func=_cmd_verify)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except (ConfigurationError, GenerationError, ParseError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
