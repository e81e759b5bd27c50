"""Command-line entry point: ``adjprior <command> ...``.

Exit codes: 0 success, 1 I/O failure, 2 input validation failure,
3 semantic finding (adjacency violations present).
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from adjprior import io
from adjprior.adjacency import (
    WEIGHTINGS,
    AdjCounts,
    BinaryAdj,
    PriorAdj,
    aggregate_prior,
    binarize,
    hard_adjacency,
    violation_report,
)
from adjprior.gradcheck import main_report
from adjprior.losses import LossConfig, loss_terms
from adjprior.metrics import evaluate
from adjprior.phantom import RNG_ALGORITHM, PhantomSpec, RefineConfig, generate_phantom, refine
from adjprior.postprocess import postprocess_all
from adjprior.validation import ValidationError, check_same_grid
from adjprior.volumes import GridDims, LabelMap, LogitMap, ProbMap, argmax_labels, one_hot, softmax

EXIT_OK, EXIT_IO, EXIT_INVALID, EXIT_FINDING = 0, 1, 2, 3


class CommandError(Exception):
    def __init__(self, message, code=EXIT_INVALID):
        super().__init__(message)
        self.code = code


def _load_labelmap(path) -> LabelMap:
    v = io.load_volume(path)
    if isinstance(v, LabelMap):
        return v
    if isinstance(v, ProbMap):
        return argmax_labels(v)
    return argmax_labels(softmax(v))


def _load_prior(path) -> PriorAdj:
    m = io.load_prior(path)
    if isinstance(m, PriorAdj):
        return m
    if isinstance(m, BinaryAdj):
        return PriorAdj(m.matrix, 1)
    raise CommandError(f"{path}: a counts matrix is not a prior; rebuild without --counts")


def cmd_adjacency_build(args):
    labs = []
    for path in args.inputs:
        v = io.load_volume(path)
        if not isinstance(v, LabelMap):
            raise CommandError(f"{path}: expected a label volume, got a probability/logit volume")
        if labs and v.num_classes != labs[0][1].num_classes:
            raise CommandError(
                f"class count mismatch: {args.inputs[0]} has {labs[0][1].num_classes} classes, "
                f"{path} has {v.num_classes}"
            )
        labs.append((path, v))
    counts = [hard_adjacency(v) for _, v in labs]
    prior = aggregate_prior([binarize(a) for a in counts])
    if args.counts:
        total = sum(a.matrix for a in counts)
        io.save_prior(AdjCounts(total), args.out, num_subjects=len(labs))
    else:
        io.save_prior(prior, args.out)
    allowed = int(np.count_nonzero(np.triu(prior.matrix, 1) > 0))
    print(f"num_subjects {prior.num_subjects}")
    print(f"allowed_pairs {allowed}")
    return EXIT_OK


def cmd_adjacency_check(args):
    lab = _load_labelmap(args.pred)
    prior = _load_prior(args.prior)
    found = violation_report(lab, prior, args.threshold)
    for b, c, n in found:
        print(f"violation {b} {c} {n}")
    print(f"violations {len(found)}")
    return EXIT_FINDING if found else EXIT_OK


def cmd_metrics(args):
    gt = _load_labelmap(args.gt)
    pred = _load_labelmap(args.pred)
    report = evaluate(gt, pred)
    io.save_report(report, args.out, "csv" if args.csv else "json")
    for m in report.labels:
        print(f"label {m.label} dsc {m.dsc} hd95_mm {m.hd95_mm} err_pct {m.err_pct}")
    return EXIT_OK


def cmd_loss(args):
    gt = _load_labelmap(args.gt)
    v = io.load_volume(args.pred)
    if isinstance(v, LabelMap):
        p = one_hot(v)
    elif isinstance(v, LogitMap):
        p = softmax(v)
    else:
        p = v
    check_same_grid(gt, p, spacing=False)
    prior = _load_prior(args.prior)
    if p.num_classes != gt.num_classes or prior.num_classes != gt.num_classes:
        raise CommandError("class counts of --gt, --pred and --prior differ")
    cfg = LossConfig(lam=args.lam, combine_mode=args.combine, weighting=args.weighting)
    terms = loss_terms(p.values, one_hot(gt).values, prior.penalty_weights(args.weighting), cfg)
    for key in ("total", "seg", "dice", "ce", "nonadj"):
        print(f"{key} {terms[key]!r}")
    return EXIT_OK


def cmd_postprocess(args):
    v = io.load_volume(args.input)
    if not isinstance(v, LabelMap):
        raise CommandError(f"{args.input}: postprocess needs a label volume")
    io.save_volume(postprocess_all(v), args.out)
    return EXIT_OK


def cmd_phantom(args):
    spec = PhantomSpec(
        seed=args.seed,
        dims=GridDims(*args.dims) if len(args.dims) == 3 else args.dims[0],
        num_classes=args.classes,
        noise_sigma=args.noise_sigma,
        logit_gain=args.logit_gain,
    )
    gt, logits = generate_phantom(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    io.save_volume(gt, out / "gt.avol")
    io.save_volume(logits, out / "logits.avol", rng_algorithm=RNG_ALGORITHM)
    (out / "spec.json").write_text(json.dumps(spec.to_dict(), indent=1) + "\n")
    print(f"wrote {out / 'gt.avol'}")
    print(f"wrote {out / 'logits.avol'}")
    print(f"wrote {out / 'spec.json'}")
    return EXIT_OK


def cmd_refine(args):
    z = io.load_volume(args.logits)
    if not isinstance(z, LogitMap):
        raise CommandError(f"{args.logits}: expected a logit volume")
    gt = io.load_volume(args.gt)
    if not isinstance(gt, LabelMap):
        raise CommandError(f"{args.gt}: expected a label volume")
    prior = _load_prior(args.prior)
    cfg = RefineConfig(args.phase1, args.phase2, args.lr, LossConfig(lam=args.lam, weighting=args.weighting))
    p, trace = refine(z, gt, prior, cfg)
    io.save_volume(p, args.out)
    if args.trace:
        io.save_trace(trace, args.trace)
    first, last = trace[0], trace[-1]
    print(f"steps {len(trace)}")
    print(f"initial_total {first.total!r}")
    print(f"final_total {last.total!r}")
    print(f"violations {len(violation_report(argmax_labels(p), prior, 0.0))}")
    return EXIT_OK


def cmd_gradcheck(args):
    ok = main_report(seed=args.seed, instances=args.instances)
    return EXIT_OK if ok else EXIT_INVALID


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="adjprior", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    adj = sub.add_parser("adjacency", help="build or audit adjacency priors")
    adj_sub = adj.add_subparsers(dest="adj_command", required=True)
    b = adj_sub.add_parser("build", help="aggregate a prior from ground-truth labelmaps")
    b.add_argument("--inputs", nargs="+", required=True)
    b.add_argument("--out", required=True)
    b.add_argument("--counts", action="store_true", help="write summed raw counts instead")
    b.set_defaults(func=cmd_adjacency_build)
    c = adj_sub.add_parser("check", help="list contacts the prior forbids")
    c.add_argument("--pred", required=True)
    c.add_argument("--prior", required=True)
    c.add_argument("--threshold", type=float, default=0.0)
    c.set_defaults(func=cmd_adjacency_check)

    m = sub.add_parser("metrics", help="per-label volumes, errors, DSC and HD95")
    m.add_argument("--gt", required=True)
    m.add_argument("--pred", required=True)
    m.add_argument("--out", required=True)
    m.add_argument("--csv", action="store_true")
    m.set_defaults(func=cmd_metrics)

    lo = sub.add_parser("loss", help="evaluate the regularized loss of a prediction")
    lo.add_argument("--gt", required=True)
    lo.add_argument("--pred", required=True)
    lo.add_argument("--prior", required=True)
    lo.add_argument("--lambda", dest="lam", type=float, default=0.3)
    lo.add_argument("--combine", choices=("sum", "product"), default="sum")
    lo.add_argument("--weighting", choices=WEIGHTINGS, default="support")
    lo.set_defaults(func=cmd_loss)

    pp = sub.add_parser("postprocess", help="largest component + hole filling per label")
    pp.add_argument("--in", dest="input", required=True)
    pp.add_argument("--out", required=True)
    pp.set_defaults(func=cmd_postprocess)

    ph = sub.add_parser("phantom", help="write a seeded synthetic phantom")
    ph.add_argument("--seed", type=int, default=42)
    ph.add_argument("--dims", type=int, nargs="+", default=[48])
    ph.add_argument("--classes", type=int, default=5)
    ph.add_argument("--noise-sigma", type=float, default=1.5)
    ph.add_argument("--logit-gain", type=float, default=2.0)
    ph.add_argument("--out", required=True)
    ph.set_defaults(func=cmd_phantom)

    r = sub.add_parser("refine", help="two-phase gradient descent on logits")
    r.add_argument("--logits", required=True)
    r.add_argument("--gt", required=True)
    r.add_argument("--prior", required=True)
    r.add_argument("--lambda", dest="lam", type=float, default=0.3)
    r.add_argument("--phase1", type=int, default=200)
    r.add_argument("--phase2", type=int, default=300)
    r.add_argument("--lr", type=float, default=0.05)
    r.add_argument("--out", required=True)
    r.add_argument("--trace")
    r.add_argument("--weighting", choices=WEIGHTINGS, default="support")
    r.set_defaults(func=cmd_refine)

    g = sub.add_parser("gradcheck", help="finite-difference check of every gradient")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--instances", type=int, default=20)
    g.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "dims", None) is not None and len(args.dims) not in (1, 3):
        parser.error("--dims takes one size or three")
    try:
        return args.func(args)
    except CommandError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
