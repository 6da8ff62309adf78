"""Command-line entry point: ``nnpda {compile,run,verify,extract,gen-corpus,sweep}``.

Exit codes: 0 success, 1 contract or verification failure, 2 usage or parse error.
Files go to ``--out``; stdout carries only a short summary.
"""

from __future__ import annotations

import argparse
import shlex
import sys
from collections.abc import Sequence
from pathlib import Path

from nnpda.automata import (
    InvalidSpec,
    PdaSpec,
    decode_ideal,
    initial_ideal_state,
    one_hot,
    run_classical,
    step_ideal_vectorized,
)
from nnpda.diffstack import DEFAULT_CAPACITY, StackOverflow
from nnpda.grammars import (
    BUILTINS,
    SpecParseError,
    builtin,
    dumps_corpus,
    dumps_spec,
    gen_corpus,
    parse_spec_file,
    tokenize,
)
from nnpda.network import DEFAULT_ACCEPT_EPS, nn_classify, nn_run, nn_trace, trace_tsv
from nnpda.stability import (
    NotFound,
    adversarial_words,
    calibration_words,
    deviation_trace,
    find_min_H,
    lemma_suite,
    perturbation_step_check,
    sweep_tsv,
    weight_noise_sweep,
    worst_deviation,
)
from nnpda.tensors import (
    TensorFormatError,
    WeightTensors,
    encode_weights,
    extract_rules,
    read_tensors,
    weight_counts,
    write_tensors,
)

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
DEFAULT_RUN_H = 20.0


class UsageError(Exception):
    pass


# -- helpers --------------------------------------------------------------------------------


def _load_spec(args: argparse.Namespace) -> PdaSpec:
    if getattr(args, "builtin", None):
        return builtin(args.builtin)
    if getattr(args, "spec", None):
        return parse_spec_file(args.spec)
    raise UsageError("give --builtin NAME or --spec FILE")


def _out_dir(args: argparse.Namespace) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _invocation(argv: Sequence[str]) -> str:
    """The command line minus ``--out``, so reports replay from any directory."""
    kept, skip = [], False
    for tok in argv:
        if skip:
            skip = False
            continue
        if tok == "--out":
            skip = True
            continue
        if tok.startswith("--out="):
            continue
        kept.append(tok)
    return "nnpda " + shlex.join(kept)


def _name_header(spec: PdaSpec) -> list[str]:
    return [
        f"states: {' '.join(spec.states)}",
        f"input: {' '.join(spec.input_alphabet)}",
        f"stack: {' '.join(spec.stack_alphabet)}",
        f"start: {spec.states[spec.start_state]}",
        f"accept: {' '.join(spec.states[f] for f in sorted(spec.accept_states))}",
    ]


def _names_from_header(comments: Sequence[str], tensors: WeightTensors) -> PdaSpec:
    """Naming metadata from ``#`` lines of a tensor file, or generic names."""
    fields = {}
    for line in comments:
        key, sep, rest = line.partition(":")
        if sep and key.strip() in ("states", "input", "stack", "start", "accept"):
            fields[key.strip()] = rest.split()
    states = fields.get("states") or [f"q{i}" for i in range(tensors.n)]
    inputs = fields.get("input") or [f"a{i}" for i in range(tensors.m1)]
    stack = fields.get("stack") or [f"s{i}" for i in range(tensors.m2)]
    start = fields.get("start", [states[0]])[0]
    accept = fields.get("accept", [])
    return PdaSpec(
        states=tuple(states),
        input_alphabet=tuple(inputs),
        stack_alphabet=tuple(stack),
        start_state=states.index(start),
        accept_states=frozenset(states.index(f) for f in accept),
        transitions={},
    )


def _write(path: Path, text: str, invocation: str | None = None) -> None:
    header = f"# invocation: {invocation}\n" if invocation else ""
    path.write_text(header + text)


# -- subcommands -------------------------------------------------------------------------------


def cmd_compile(args: argparse.Namespace, invocation: str) -> int:
    spec = _load_spec(args)
    tensors = encode_weights(spec)
    budget = weight_counts(spec, args.capacity)
    out = _out_dir(args)
    write_tensors(out / "tensors.txt", tensors, [f"invocation: {invocation}", *_name_header(spec)])
    print(f"n={spec.n} m1={spec.m1} m2={spec.m2}")
    print(f"state_neurons {budget.state_neurons}")
    print(f"total_weights {budget.total_weights}")
    print(f"stack_footprint(capacity={args.capacity}) {budget.stack_footprint()}")
    print(f"wrote {out / 'tensors.txt'}")
    return EXIT_OK


def cmd_run(args: argparse.Namespace, invocation: str) -> int:
    if args.tensors:
        tensors, comments = read_tensors(args.tensors)
        names = _names_from_header(comments, tensors)
        spec = None
    else:
        spec = _load_spec(args)
        tensors, names = encode_weights(spec), spec
    try:
        word = tokenize(names, args.string)
    except ValueError as exc:
        raise UsageError(str(exc)) from None

    if args.ideal:
        if spec is None:
            raise UsageError("--ideal needs --builtin or --spec")
        state = initial_ideal_state(spec)
        for a in word:
            state = step_ideal_vectorized(tensors, state, one_hot(a, spec.m1))
        q, _ = decode_ideal(state)
        accepted = q in spec.accept_states
        assert accepted == run_classical(spec, word).accept
        print(f"{'ACCEPT' if accepted else 'REJECT'} 1.0 (idealized)")
        return EXIT_OK

    report = nn_run(
        tensors, word, args.H, names.start_state, names.accept_states,
        accept_eps=args.accept_eps, capacity=args.capacity,
    )
    verdict = "ACCEPT" if report.accept else "REJECT"
    print(f"{verdict} {report.confidence!r} (H={args.H:g}, steps={report.steps})")
    if args.trace:
        out = _out_dir(args)
        rows = nn_trace(tensors, word, args.H, names.start_state, capacity=args.capacity)
        _write(out / "trace.tsv", trace_tsv(rows), invocation)
        print(f"wrote {out / 'trace.tsv'}")
    if report.low_confidence:
        print(
            f"warning: LowConfidence: final state confidence {report.confidence:.6g} "
            f"< {1 - args.accept_eps:.6g}; the run is outside the stability regime",
            file=sys.stderr,
        )
        return EXIT_FAIL
    return EXIT_OK


def cmd_verify(args: argparse.Namespace, invocation: str) -> int:
    out = _out_dir(args)
    lines: list[str] = [f"invocation: {invocation}"]
    ok = True

    def record(name: str, passed: bool, detail: str) -> None:
        nonlocal ok
        ok &= passed
        lines.append(f"{'PASS' if passed else 'FAIL'} {name}: {detail}")
        print(lines[-1])

    lemmas = lemma_suite(samples=args.lemma_samples, seed=args.seed)
    _write(
        out / "lemmas.tsv",
        "check\tobserved\tbound\tpassed\n"
        f"blend_ratio\t{lemmas.blend_worst_ratio!r}\t7.0\t{int(lemmas.blend_ok)}\n"
        f"isometry_one_hot_gap\t{lemmas.isometry_one_hot_gap!r}\t0.0\t{int(lemmas.isometry_one_hot_gap == 0.0)}\n"
        f"isometry_zero_gap\t{lemmas.isometry_zero_gap!r}\t{2.0**-53!r}\t{int(lemmas.isometry_zero_gap <= 2.0**-53)}\n"
        f"saturation_gap\t{lemmas.sat_worst_gap!r}\t{lemmas.sat_bound!r}\t{int(lemmas.saturation_ok)}\n",
        invocation,
    )
    record("blend bound", lemmas.blend_ok, f"worst err/eps = {lemmas.blend_worst_ratio:.6g} <= 7")
    record("reading isometry", lemmas.isometry_ok,
           f"gaps one-hot={lemmas.isometry_one_hot_gap:.3g}, zero={lemmas.isometry_zero_gap:.3g}")
    record("sigmoid saturation", lemmas.saturation_ok,
           f"worst gap {lemmas.sat_worst_gap:.6g} <= {lemmas.sat_bound:.6g}")
    if args.lemmas_only:
        _write(out / "summary.txt", "\n".join(lines) + "\n")
        return EXIT_OK if ok else EXIT_FAIL

    spec = _load_spec(args)
    words = calibration_words(
        spec, max_exhaustive=args.max_exhaustive, n_random=args.calibration_random,
        max_len=args.max_len, seed=args.seed,
    )
    if args.H is None:
        try:
            cal = find_min_H(spec, words, args.eps, step_trials=args.step_trials, seed=args.seed, ceiling=args.h_ceiling)
        except NotFound as exc:
            record("calibration", False, str(exc))
            _write(out / "summary.txt", "\n".join(lines) + "\n")
            return EXIT_FAIL
        H = cal.H_star
        _write(
            out / "calibration.tsv",
            "H\tworst_deviation\n" + "".join(f"{h!r}\t{w!r}\n" for h, w in cal.history),
            invocation,
        )
        record("calibration", cal.evidence <= args.eps, f"H* = {H:g}, evidence {cal.evidence:.6g} <= {args.eps:g}")
    else:
        H = args.H
        lines.append(f"forced H = {H:g}")

    # orbit stability on calibration corpus and adversarial strings
    rows = []
    for name, word in adversarial_words(spec, args.adversarial_len, seed=args.seed).items():
        tr = deviation_trace(spec, word, H, capacity=max(args.capacity, len(word)), word_id=name)
        rows.append((name, len(word), tr.max_q, tr.max_k))
    corpus_worst = worst_deviation(spec, words, H)
    rows.append(("calibration_corpus", len(words), corpus_worst, corpus_worst))
    _write(
        out / "stability.tsv",
        "string\tlength\tmax_q_dev\tmax_k_dev\n" + "".join(f"{n}\t{l}\t{q!r}\t{k!r}\n" for n, l, q, k in rows),
        invocation,
    )
    worst = max(max(q, k) for _, _, q, k in rows)
    record("orbit stability", worst <= args.eps, f"max deviation {worst:.6g} <= {args.eps:g} at H={H:g}")

    # language equivalence
    corpus = gen_corpus(spec, count=args.random_count, max_len=args.max_len, seed=args.seed)
    entries = [(w, lab) for w in words for lab in [run_classical(spec, w).accept]] + list(corpus.entries)
    tensors = encode_weights(spec)
    reports = nn_classify(tensors, [w for w, _ in entries], H, spec.start_state, spec.accept_states,
                          capacity=args.capacity)
    mismatches = sum(rep.accept != label for rep, (_, label) in zip(reports, entries))
    low = sum(rep.low_confidence for rep in reports)
    _write(
        out / "equivalence.tsv",
        f"strings\tmismatches\tlow_confidence\n{len(entries)}\t{mismatches}\t{low}\n",
        invocation,
    )
    record("equivalence", mismatches == 0, f"{mismatches} mismatches, {low} low-confidence of {len(entries)}")

    # single-step contraction
    pert = perturbation_step_check(spec, args.eps, H, args.trials, seed=args.seed + 1)
    _write(
        out / "perturbation.tsv",
        "trials\tfailures\tworst_q\tworst_k\teps\tH\tseed\n"
        f"{pert.trials}\t{pert.failures}\t{pert.worst_q!r}\t{pert.worst_k!r}\t{pert.eps!r}\t{pert.H!r}\t{pert.seed}\n",
        invocation,
    )
    record("one-step contraction", pert.passed, f"{pert.failures}/{pert.trials} failures, worst {max(pert.worst_q, pert.worst_k):.6g}")

    _write(out / "summary.txt", "\n".join(lines) + "\n")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_extract(args: argparse.Namespace, invocation: str) -> int:
    tensors, comments = read_tensors(args.tensors)
    if args.builtin or args.spec:
        names = _load_spec(args)
    else:
        names = _names_from_header(comments, tensors)
    spec = extract_rules(tensors, names)
    out = _out_dir(args)
    (out / "extracted.pda").write_text(f"# invocation: {invocation}\n" + dumps_spec(spec))
    print(f"extracted {len(spec.transitions)} rules (n={spec.n}, m1={spec.m1}, m2={spec.m2})")
    print(f"wrote {out / 'extracted.pda'}")
    return EXIT_OK


def cmd_gen_corpus(args: argparse.Namespace, invocation: str) -> int:
    spec = _load_spec(args)
    if args.exhaustive is not None:
        corpus = gen_corpus(spec, exhaustive=args.exhaustive)
    else:
        corpus = gen_corpus(spec, count=args.count, max_len=args.max_len, seed=args.seed)
    out = _out_dir(args)
    _write(out / "corpus.txt", dumps_corpus(spec, corpus))
    print(f"{corpus.provenance}: {len(corpus)} strings, {corpus.positives} accepted")
    print(f"wrote {out / 'corpus.txt'}")
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace, invocation: str) -> int:
    spec = _load_spec(args)
    if args.exhaustive is not None:
        corpus = gen_corpus(spec, exhaustive=args.exhaustive)
    else:
        corpus = gen_corpus(spec, count=args.count, max_len=args.max_len, seed=args.seed)
    words = [w for w, _ in corpus.entries]
    rows = weight_noise_sweep(spec, args.amplitudes, words, args.H, seed=args.seed)
    out = _out_dir(args)
    _write(out / "sweep.tsv", sweep_tsv(rows), invocation)
    for r in rows:
        print(f"amplitude {r.amplitude:g}: accuracy {r.accuracy:.4f}, max deviation {r.max_deviation:.4g}, "
              f"extraction {'ok' if r.extraction_ok else 'failed'}")
    print(f"wrote {out / 'sweep.tsv'}")
    return EXIT_OK


# -- parser -----------------------------------------------------------------------------------------


def _add_spec_source(p: argparse.ArgumentParser, required: bool = True) -> None:
    g = p.add_mutually_exclusive_group(required=required)
    g.add_argument("--builtin", choices=sorted(BUILTINS), help="built-in grammar")
    g.add_argument("--spec", metavar="FILE", help="PDA spec file")


def _positive(kind):
    def parse(text: str):
        value = kind(text)
        if value <= 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return value

    return parse


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nnpda", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compile", help="encode a PDA as weight tensors and report the weight budget")
    _add_spec_source(p)
    p.add_argument("--capacity", type=_positive(int), default=DEFAULT_CAPACITY)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("run", help="classify one string with the neural PDA")
    _add_spec_source(p, required=False)
    p.add_argument("--tensors", metavar="FILE", help="tensor file from 'compile' (instead of a spec)")
    p.add_argument("string", help="symbols separated by spaces, or one character per symbol")
    p.add_argument("--H", type=_positive(float), default=DEFAULT_RUN_H)
    p.add_argument("--accept-eps", type=float, default=DEFAULT_ACCEPT_EPS)
    p.add_argument("--capacity", type=_positive(int), default=DEFAULT_CAPACITY)
    p.add_argument("--ideal", action="store_true", help="run the exact vectorized PDA instead")
    p.add_argument("--trace", action="store_true", help="write trace.tsv to --out")
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("verify", help="calibrate H and check stability, equivalence and the lemmas")
    _add_spec_source(p, required=False)
    p.add_argument("--eps", type=float, default=0.01)
    p.add_argument("--H", type=_positive(float), help="skip calibration and use this H")
    p.add_argument("--h-ceiling", type=_positive(float), default=1e4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-exhaustive", type=_positive(int), default=2048,
                   help="cap on exhaustive calibration strings")
    p.add_argument("--calibration-random", type=int, default=32)
    p.add_argument("--random-count", type=int, default=200)
    p.add_argument("--max-len", type=_positive(int), default=200)
    p.add_argument("--adversarial-len", type=_positive(int), default=2000)
    p.add_argument("--trials", type=_positive(int), default=2000)
    p.add_argument("--step-trials", type=int, default=5000)
    p.add_argument("--lemma-samples", type=_positive(int), default=20000)
    p.add_argument("--capacity", type=_positive(int), default=DEFAULT_CAPACITY)
    p.add_argument("--lemmas-only", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("extract", help="read PDA rules back out of a tensor file")
    p.add_argument("tensors", metavar="TENSORS")
    _add_spec_source(p, required=False)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_extract)

    for name, func, helptext in (
        ("gen-corpus", cmd_gen_corpus, "write a labeled corpus"),
        ("sweep", cmd_sweep, "accuracy and deviation under weight noise"),
    ):
        p = sub.add_parser(name, help=helptext)
        _add_spec_source(p)
        g = p.add_mutually_exclusive_group()
        g.add_argument("--exhaustive", type=int, metavar="L")
        g.add_argument("--count", type=_positive(int), default=1000)
        p.add_argument("--max-len", type=int, default=50)
        p.add_argument("--seed", type=int, default=0)
        if name == "sweep":
            p.add_argument("--H", type=_positive(float), default=DEFAULT_RUN_H)
            p.add_argument("--amplitudes", type=float, nargs="+", default=[0.0, 0.01, 0.05, 0.1, 0.3, 0.49])
        p.add_argument("--out", required=True)
        p.set_defaults(func=func)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        if args.command == "verify" and not args.lemmas_only and not (args.builtin or args.spec):
            raise UsageError("verify needs --builtin or --spec (or --lemmas-only)")
        if args.command == "verify" and not 0 < args.eps < 1 / 14:
            raise UsageError(f"--eps must lie in (0, 1/14), got {args.eps}")
        return args.func(args, _invocation(argv))
    except (UsageError, SpecParseError, TensorFormatError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InvalidSpec as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except (ValueError, StackOverflow) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
