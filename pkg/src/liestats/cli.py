"""Command-line interface: ``liestats mean | test | mesh-test | rerun``.

Every command writes its outputs plus ``run_config.json`` (resolved
arguments plus the library version) into ``--out``; ``liestats rerun
run_config.json`` repeats a run from that file.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bistats import (
    SampleSet, Statistic, batch_means, bi_invariant_mean, check_sample_sizes,
)
from .errors import (
    DegenerateTriangleError, FormatError, LieStatsError, MeshError, NoConvergenceError,
    NonpositiveDeterminantError, OrientationFlipError, OutOfDomainError,
    SingularCovarianceError, StatisticFailedError,
)
from .io import read_samples, write_samples
from .liegroup import group_from_name
from .meshio import read_mesh, read_mesh_arrays, write_face_csv, write_mesh, write_ply
from .shape import GL3, JacobianField, face_jacobians, per_triangle_samples, reconstruct
from .twosample import PermutationConfig, batch_test, permutation_test

log = logging.getLogger("liestats")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_PARSE = 3
EXIT_DOMAIN = 4
EXIT_CONVERGENCE = 5
EXIT_SINGULAR = 6

_STATISTICS = {"t2": Statistic.HOTELLING_T2, "bhattacharyya": Statistic.BHATTACHARYYA}


def exit_code(exc):
    """Map an exception (following ``__cause__`` chains) to an exit code."""
    seen = exc
    while isinstance(seen, StatisticFailedError) and seen.__cause__ is not None:
        seen = seen.__cause__
    if isinstance(seen, (FormatError, MeshError, FileNotFoundError)):
        return EXIT_PARSE
    if isinstance(seen, (OutOfDomainError, DegenerateTriangleError, OrientationFlipError)):
        return EXIT_DOMAIN
    if isinstance(seen, NoConvergenceError):
        return EXIT_CONVERGENCE
    if isinstance(seen, (SingularCovarianceError, NonpositiveDeterminantError)):
        return EXIT_SINGULAR
    if isinstance(seen, StatisticFailedError):
        # raised directly, e.g. for too many degenerate permutations
        return EXIT_DOMAIN
    return EXIT_ERROR


def _dump(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _write_provenance(args, out):
    config = {k: v for k, v in vars(args).items() if k != "func"}
    for key, value in config.items():
        if isinstance(value, Path):
            config[key] = str(value.resolve())
        elif isinstance(value, list) and value and isinstance(value[0], Path):
            config[key] = [str(p.resolve()) for p in value]
    config["version"] = __version__
    _dump(out / "run_config.json", config)


def _permutation_config(args):
    return PermutationConfig(
        num_permutations=args.permutations, seed=args.seed,
        statistic=_STATISTICS[args.statistic], exhaustive=args.exhaustive,
        tol=args.tol, max_iter=args.max_iter,
    )


def cmd_mean(args):
    samples = read_samples(args.samples, args.group)
    try:
        result = bi_invariant_mean(samples, args.tol, args.max_iter)
    except OutOfDomainError as exc:
        if exc.index is not None:
            raise OutOfDomainError(f"{args.samples}: row {exc.index + 1}: {exc}", exc.index) from exc
        raise
    out = args.out
    write_samples(out / "mean.csv", SampleSet(samples.group, result.mean.mat[None]))
    report = {
        "group": samples.group.name,
        "size": len(samples),
        "iterations": result.iterations,
        "residual": result.residual_norm,
    }
    _dump(out / "mean_report.json", report)
    print(json.dumps(report, sort_keys=True))


def cmd_test(args):
    a = read_samples(args.group_a, args.group)
    b = read_samples(args.group_b, args.group if args.group else a.group)
    cfg = _permutation_config(args)
    result = permutation_test(a, b, cfg, keep_null=args.figures)
    doc = {"test": cfg.statistic.value, "group": a.group.name, "m": len(a), "n": len(b),
           "exhaustive": cfg.exhaustive, **result.to_dict()}
    _dump(args.out / "test_result.json", doc)
    if args.figures:
        from .report import plot_null_distribution
        plot_null_distribution(result, args.out / "null_distribution.png", label=cfg.statistic.value)
    print(json.dumps(doc, sort_keys=True))


def read_labels(path):
    """Two columns per line: subject mesh path and class label 0 or 1."""
    path = Path(path)
    subjects, labels = [], []
    for number, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.replace(",", " ").split()
        if len(parts) != 2 or parts[1] not in ("0", "1"):
            raise FormatError(f"{path}:{number}: expected '<mesh path> <0|1>'")
        subject = Path(parts[0])
        if not subject.is_absolute():
            subject = path.parent / subject
        subjects.append(subject)
        labels.append(parts[1] == "1")
    if not subjects:
        raise FormatError(f"{path}: no subjects")
    return subjects, np.array(labels)


def cmd_mesh_test(args):
    ref = read_mesh(args.reference)
    subjects, labels = read_labels(args.labels)
    if labels.all() or not labels.any():
        raise FormatError(f"{args.labels}: both classes 0 and 1 must be present")
    cfg = _permutation_config(args)
    check_sample_sizes(cfg.statistic, GL3.dim, int((~labels).sum()), int(labels.sum()))

    subject_vertices = []
    jacobians, face_errors = [], {}
    for path in subjects:
        vertices, faces = read_mesh_arrays(path)
        if not np.array_equal(faces, ref.faces) or len(vertices) != len(ref.vertices):
            raise MeshError(f"{path}: mesh is not in correspondence with the reference")
        subject_vertices.append(vertices)
        jac, status = face_jacobians(ref.vertices, ref.faces, vertices)
        for face in np.flatnonzero(status):
            kind = "degenerate triangle" if status[face] == 1 else "orientation flip"
            face_errors.setdefault(int(face), f"{kind} in {path.name}")
        jacobians.append(jac)
    fields = [JacobianField(ref, jac) for jac in jacobians]
    samples = per_triangle_samples(fields, labels)
    good = np.array([f not in face_errors for f in range(ref.n_faces)])

    idx = np.flatnonzero(good)
    batch = batch_test([samples[i] for i in idx], cfg, args.alpha, n_jobs=args.jobs,
                       feature_ids=idx)
    nf = ref.n_faces
    raw = np.full(nf, np.nan)
    adjusted = np.full(nf, np.nan)
    rejected = np.zeros(nf, dtype=bool)
    raw[idx] = batch.raw_p
    adjusted[idx] = batch.adjusted_p
    rejected[idx] = batch.rejected
    for i, r in zip(idx, batch.per_feature):
        if r.error is not None:
            face_errors[int(i)] = r.error

    out = args.out
    write_face_csv(out / "p_raw.csv", raw, "p")
    write_face_csv(out / "p_adjusted.csv", adjusted, "p_adjusted")
    write_face_csv(out / "rejected.csv", rejected.astype(int), "rejected")
    doc = {
        "test": cfg.statistic.value,
        "faces": nf,
        "subjects": {"class0": int((~labels).sum()), "class1": int(labels.sum())},
        "alpha": args.alpha,
        "rejected_faces": [int(i) for i in np.flatnonzero(rejected)],
        "face_errors": {str(k): v for k, v in sorted(face_errors.items())},
        "features": {str(i): r.to_dict() for i, r in zip(idx, batch.per_feature)},
    }
    _dump(out / "results.json", doc)
    if args.ply:
        write_ply(out / "p_adjusted.ply", ref, adjusted, name="quality")
    if args.mean_shapes:
        _write_mean_shapes(ref, subject_vertices, np.stack(jacobians), labels, good, args)
    if args.figures:
        from .report import plot_face_pvalues, plot_pvalues
        plot_pvalues(batch, out / "pvalues.png")
        plot_face_pvalues(ref, adjusted, out / "face_pvalues.png", args.alpha)
    print(json.dumps({"faces": nf, "rejected": int(rejected.sum()),
                      "failed": len(face_errors)}, sort_keys=True))


def _write_mean_shapes(ref, subject_vertices, jacobians, labels, good, args):
    for cls in (0, 1):
        members = labels == bool(cls)
        per_face = np.swapaxes(jacobians[members], 0, 1)  # (F, subjects, 3, 3)
        r = batch_means(GL3, per_face, args.tol, args.max_iter)
        mean = np.where(((r["status"] == 0) & good)[:, None, None], r["mean"], np.eye(3))
        anchor = np.mean([v[0] for v, keep in zip(subject_vertices, members) if keep], axis=0)
        shape = reconstruct(ref, JacobianField(ref, mean), 0, anchor)
        write_mesh(args.out / f"mean_class{cls}.off", shape)


def cmd_rerun(args):
    config = json.loads(Path(args.config).read_text())
    command = config.pop("command")
    config.pop("version", None)
    if args.out is not None:
        config["out"] = str(args.out)
    parser = build_parser()
    ns = parser.parse_args([command, *_positional(command, config)])
    for key, value in config.items():
        setattr(ns, key, value)
    for key in ("out", "samples", "group_a", "group_b", "reference", "labels"):
        if getattr(ns, key, None) is not None:
            setattr(ns, key, Path(getattr(ns, key)))
    return _run(ns)


def _positional(command, config):
    names = {"mean": ["samples"], "test": ["group_a", "group_b"],
             "mesh-test": ["reference", "labels"]}[command]
    return [str(config[n]) for n in names]


def _add_common(p, permutations=True):
    p.add_argument("--tol", type=float, default=1e-12, help="mean iteration tolerance")
    p.add_argument("--max-iter", type=int, default=100, help="mean iteration budget")
    p.add_argument("--out", type=Path, default=Path("."), help="output directory")
    if permutations:
        p.add_argument("--statistic", choices=sorted(_STATISTICS), default="t2")
        p.add_argument("--permutations", type=int, default=10000)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--exhaustive", action="store_true",
                       help="enumerate all splits when there are at most 200000")
        p.add_argument("--figures", action="store_true", help="also render PNG figures")


def build_parser():
    parser = argparse.ArgumentParser(prog="liestats", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"liestats {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mean", help="bi-invariant mean of a sample file")
    p.add_argument("samples", type=Path)
    p.add_argument("--group", help="group kind, e.g. SE3, SO3, GLplus(3), Euclidean(2)")
    _add_common(p, permutations=False)
    p.set_defaults(func=cmd_mean)

    p = sub.add_parser("test", help="permutation two-sample test of two sample files")
    p.add_argument("group_a", type=Path)
    p.add_argument("group_b", type=Path)
    p.add_argument("--group")
    _add_common(p)
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("mesh-test", help="per-triangle GL+(3) tests across a mesh family")
    p.add_argument("reference", type=Path)
    p.add_argument("labels", type=Path, help="lines of '<subject mesh> <0|1>'")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--jobs", type=int, default=1, help="threads for per-face tests")
    p.add_argument("--ply", action="store_true", help="write adjusted p as per-face PLY quality")
    p.add_argument("--mean-shapes", action="store_true",
                   help="reconstruct and write the per-class mean shapes")
    _add_common(p)
    p.set_defaults(func=cmd_mesh_test)

    p = sub.add_parser("rerun", help="repeat a run from its run_config.json")
    p.add_argument("config", type=Path)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_rerun)
    return parser


def _validate(args):
    """Check option values before any input is read or computed."""
    if getattr(args, "group", None):
        try:
            group_from_name(args.group)
        except ValueError as exc:
            raise FormatError(str(exc)) from exc
    if not args.tol > 0:
        raise FormatError("--tol must be positive")
    if args.max_iter < 1:
        raise FormatError("--max-iter must be at least 1")
    if hasattr(args, "permutations"):
        try:
            _permutation_config(args)
        except ValueError as exc:
            raise FormatError(str(exc)) from exc
    if hasattr(args, "alpha") and not 0 < args.alpha < 1:
        raise FormatError("--alpha must lie in (0, 1)")
    if hasattr(args, "jobs") and args.jobs < 1:
        raise FormatError("--jobs must be at least 1")


def _run(args):
    if args.command != "rerun":
        _validate(args)
        args.out.mkdir(parents=True, exist_ok=True)
        _write_provenance(args, args.out)
    args.func(args)
    return EXIT_OK


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return _run(args)
    except (LieStatsError, FileNotFoundError, ValueError) as exc:
        code = exit_code(exc)
        print(f"liestats: error: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
