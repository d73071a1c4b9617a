"""``faceknn`` command line.

Every flag can also be set through an environment variable named
``FACEKNN_<FLAG>`` (upper case, dashes as underscores), e.g. ``FACEKNN_SEED``.
Command-line flags win over the environment.

Exit codes: 0 success, 1 validation or data error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .calibration import ThresholdTable, calibrate
from .exceptions import FaceKNNError, InvalidArgumentError
from .identity import evaluate_accuracy
from .index import FlatIndex, Variant
from .ingestion import (IdentityManifest, ManifestRecord, import_csv, load_vectors, read_embeddings,
                        read_manifest, write_embeddings, write_manifest)
from .reports import FORMATS, canonical_json, emit_report
from .robustness import collect_result_sets, evaluate_robustness, read_result_sets, write_result_sets
from .service import KnnHTTPServer, KnnRequest, KnnService, query_remote
from .synth import SynthSpec, generate_synthetic, levels_from_scales
from .vectors import normalize as normalize_vector

ENV_PREFIX = "FACEKNN_"
log = logging.getLogger("faceknn")


class UsageError(Exception):
    pass


def _env(flag, default):
    return os.environ.get(ENV_PREFIX + flag.lstrip("-").replace("-", "_").upper(), default)


def _add(parser, flag, **kwargs):
    kwargs["default"] = _env(flag, kwargs.get("default"))
    if kwargs.get("action") == "store_true":
        kwargs["default"] = str(kwargs["default"]).lower() in ("1", "true", "yes") if kwargs["default"] else False
    parser.add_argument(flag, **kwargs)


def _floats(text):
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _write(data: bytes, out):
    if out in (None, "-"):
        sys.stdout.buffer.write(data)
        sys.stdout.flush()
    else:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_bytes(data)


def _index_from_manifest(manifest: IdentityManifest, n_jobs=1) -> FlatIndex:
    vectors = load_vectors(manifest, Variant.ORIGINAL)
    identities = manifest.identities(Variant.ORIGINAL)
    ids = list(vectors)
    if not ids:
        raise InvalidArgumentError("manifest has no original-variant images to index")
    X = np.array([vectors[i] for i in ids], dtype=np.float32)
    return FlatIndex(n_jobs=n_jobs).fit(X, [identities[i] for i in ids], item_ids=ids)


def _query_vector(args):
    if args.vector is not None:
        return np.array(_floats(args.vector), dtype=np.float64)
    if args.query_id is None:
        raise UsageError("give --query-id (with --manifest) or --vector")
    if args.manifest is None:
        raise UsageError("--query-id needs --manifest")
    vectors = load_vectors(read_manifest(args.manifest), args.variant)
    if args.query_id not in vectors:
        raise InvalidArgumentError(f"{args.query_id!r} has no {args.variant} vector in the manifest")
    return vectors[args.query_id]


# -- commands -------------------------------------------------------------------

def cmd_ingest(args):
    if bool(args.csv) == bool(args.manifest):
        raise UsageError("give exactly one of --csv or --manifest")
    manifest = import_csv(args.csv).validate() if args.csv else read_manifest(args.manifest)
    for variant in manifest.variants():
        load_vectors(manifest, variant)  # rejects non-finite values with row context
    if args.out is None:
        raise UsageError("ingest needs --out for the manifest JSONL")
    out = Path(args.out)
    if args.normalize:
        renamed = {}
        for f in sorted({r.file for r in manifest.records}):
            X = read_embeddings(manifest.resolve(f))["vectors"]
            renamed[f] = Path(f).stem + ".normalized.emb1"
            write_embeddings(out.parent / renamed[f], [normalize_vector(v) for v in X])
        records = [replace(r, file=renamed[r.file]) for r in manifest.records]
    elif out.parent.resolve() != manifest.root.resolve():
        records = [replace(r, file=str(manifest.resolve(r.file).resolve())) for r in manifest.records]
    else:
        records = manifest.records
    write_manifest(out, IdentityManifest(records, root=out.parent))
    read_manifest(out)
    log.info("wrote %d records to %s", len(records), out)


def cmd_synth(args):
    if args.out is None:
        raise UsageError("synth needs --out DIR")
    spec = SynthSpec(
        seed=int(args.seed), n_identities=int(args.identities),
        images_per_identity=int(args.images_per_identity), dim=int(args.dim),
        intra_spread=float(args.intra_spread), inter_spread=float(args.inter_spread),
        perturbation_levels=levels_from_scales(_floats(args.noise) if args.noise else []),
    )
    manifest = generate_synthetic(spec, args.out)
    log.info("wrote %d records to %s", len(manifest), Path(args.out) / "manifest.jsonl")


def cmd_build_index(args):
    if args.out is None:
        raise UsageError("build-index needs --out DIR")
    manifest = read_manifest(args.manifest)
    index = _index_from_manifest(manifest)
    out = Path(args.out)
    ids = list(index.item_ids_)
    write_embeddings(out / "index.emb1", index.data_t_.T)
    records = [ManifestRecord(i, index.identity_of(i), Variant.ORIGINAL, "index.emb1", row)
               for row, i in enumerate(ids)]
    write_manifest(out / "index.jsonl", IdentityManifest(records, root=out))
    log.info("indexed %d vectors of dim %d into %s", len(index), index.dim, out)


def cmd_eval_accuracy(args):
    manifest = read_manifest(args.manifest)
    index = _index_from_manifest(manifest, int(args.jobs))
    report = evaluate_accuracy(index, manifest, label=args.label or "", k=int(args.k),
                               n_scored=int(args.k) - 1, min_identity_size=int(args.min_identity_size))
    _write(emit_report(report, args.format), args.out)


def cmd_calibrate(args):
    manifest = read_manifest(args.manifest)
    vectors = load_vectors(manifest, Variant.ORIGINAL)
    items = list(vectors)
    if args.items:
        items = [line.strip() for line in Path(args.items).read_text().splitlines() if line.strip()]
    table = calibrate(manifest, vectors, items, float(args.percentile))
    if table.skipped:
        log.warning("skipped %d items with single-image identities", len(table.skipped))
    _write(emit_report(table, args.format), args.out)


def cmd_search(args):
    if args.manifest is None:
        raise UsageError("search needs --manifest")
    manifest = read_manifest(args.manifest)
    index = _index_from_manifest(manifest)
    query = _query_vector(args)
    exclude = args.query_id if args.exclude_self else None
    hits = index.search(query, int(args.k), exclude_id=exclude)
    payload = [{"rank": h.rank, "item_id": h.item_id, "squared_distance": h.squared_distance}
               for h in hits]
    _write(canonical_json(payload), args.out)


def cmd_eval_robustness(args):
    if args.thresholds is None:
        raise UsageError("eval-robustness needs --thresholds")
    thresholds = ThresholdTable.from_dict(json.loads(Path(args.thresholds).read_text()))
    subset = None
    if args.items:
        subset = [line.strip() for line in Path(args.items).read_text().splitlines() if line.strip()]
    if args.replay:
        result_sets = read_result_sets(args.replay)
    else:
        if args.manifest is None:
            raise UsageError("eval-robustness needs --manifest (local index) or --replay DIR")
        manifest = read_manifest(args.manifest)
        index_manifest = read_manifest(args.index) if args.index else manifest
        index = _index_from_manifest(index_manifest, int(args.jobs))
        result_sets = collect_result_sets(index, manifest, subset or list(thresholds.rows),
                                          int(args.num_images))
        if args.record:
            write_result_sets(Path(args.record) / "results.jsonl", result_sets)
    report = evaluate_robustness(result_sets, thresholds, int(args.min_valid), subset)
    _write(emit_report(report, args.format), args.out)


def cmd_serve(args):
    if args.manifest is None:
        raise UsageError("serve needs --manifest")
    index = _index_from_manifest(read_manifest(args.manifest))
    service = KnnService({args.indice_name: index}, epsilon=float(args.epsilon),
                         overfetch=int(args.overfetch))
    server = KnnHTTPServer(service, args.host, int(args.port))
    log.info("serving %s (%d vectors) at %s/knn-service", args.indice_name, len(index), server.url)
    print(server.url, flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()


def cmd_query_remote(args):
    if args.endpoint is None:
        raise UsageError("query-remote needs --endpoint")
    request = KnnRequest(
        query_embedding=[float(v) for v in _query_vector(args)],
        indice_name=args.indice_name,
        num_images=int(args.num_images),
        deduplicate=not args.no_deduplicate,
        aesthetic_score=int(args.aesthetic_score),
        aesthetic_weight=float(args.aesthetic_weight),
        use_safety_model=args.use_safety_model,
        use_violence_detector=args.use_violence_detector,
    )
    response = query_remote(args.endpoint, request, timeout=float(args.timeout))
    _write(canonical_json(response.to_dict()), args.out)


# -- parser -------------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(prog="faceknn", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, fmt=True):
        _add(p, "--out", help="output path (default: stdout)")
        if fmt:
            _add(p, "--format", choices=FORMATS, default="json")

    p = sub.add_parser("ingest", help="validate a manifest (or convert a CSV) into canonical JSONL")
    _add(p, "--csv")
    _add(p, "--manifest")
    _add(p, "--normalize", action="store_true", help="rewrite embeddings with unit L2 norm")
    common(p, fmt=False)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("synth", help="generate seeded synthetic identities")
    _add(p, "--seed", type=int, default=0)
    _add(p, "--dim", type=int, default=32)
    _add(p, "--identities", type=int, default=50)
    _add(p, "--images-per-identity", type=int, default=10)
    _add(p, "--intra-spread", type=float, default=1.0)
    _add(p, "--inter-spread", type=float, default=100.0)
    _add(p, "--noise", default="", help="comma-separated noise scales for fawkes,lowkey,other")
    common(p, fmt=False)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("build-index", help="write the original-variant index as EMB1 + JSONL")
    _add(p, "--manifest", required=_env("--manifest", None) is None)
    common(p, fmt=False)
    p.set_defaults(func=cmd_build_index)

    p = sub.add_parser("eval-accuracy", help="top-1 / top-5 identification accuracy")
    _add(p, "--manifest", required=_env("--manifest", None) is None)
    _add(p, "--k", type=int, default=6, help="neighbors retrieved; k-1 are scored")
    _add(p, "--label", default="")
    _add(p, "--min-identity-size", type=int, default=1)
    _add(p, "--jobs", type=int, default=1)
    common(p)
    p.set_defaults(func=cmd_eval_accuracy)

    p = sub.add_parser("calibrate", help="per-image percentile distance thresholds")
    _add(p, "--manifest", required=_env("--manifest", None) is None)
    _add(p, "--percentile", type=float, default=95.0)
    _add(p, "--items", help="file with one image id per line (default: every original)")
    common(p)
    p.set_defaults(func=cmd_calibrate)

    def query_flags(p):
        _add(p, "--manifest")
        _add(p, "--query-id")
        _add(p, "--variant", default="original", choices=[v.value for v in Variant])
        _add(p, "--vector", help="comma-separated query embedding")

    p = sub.add_parser("search", help="k nearest neighbors of one query")
    query_flags(p)
    _add(p, "--k", type=int, default=6)
    _add(p, "--exclude-self", action="store_true")
    common(p, fmt=False)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("eval-robustness", help="valid-result robustness of perturbed variants")
    _add(p, "--manifest")
    _add(p, "--thresholds")
    _add(p, "--index", help="index manifest from build-index (default: originals of --manifest)")
    _add(p, "--replay", help="file or directory of recorded result-set JSONL")
    _add(p, "--record", help="directory to save the collected result sets")
    _add(p, "--items", help="file with one subset image id per line")
    _add(p, "--num-images", type=int, default=50)
    _add(p, "--min-valid", type=int, default=3)
    _add(p, "--jobs", type=int, default=1)
    common(p)
    p.set_defaults(func=cmd_eval_robustness)

    p = sub.add_parser("serve", help="serve the original-variant index over HTTP")
    _add(p, "--manifest")
    _add(p, "--host", default="127.0.0.1")
    _add(p, "--port", type=int, default=1234)
    _add(p, "--indice-name", default="laion5B")
    _add(p, "--epsilon", type=float, default=1e-6)
    _add(p, "--overfetch", type=int, default=4)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("query-remote", help="query a knn-service endpoint")
    query_flags(p)
    _add(p, "--endpoint")
    _add(p, "--indice-name", default="laion5B")
    _add(p, "--num-images", type=int, default=50)
    _add(p, "--no-deduplicate", action="store_true")
    _add(p, "--aesthetic-score", type=int, default=9)
    _add(p, "--aesthetic-weight", type=float, default=0.5)
    _add(p, "--use-safety-model", action="store_true")
    _add(p, "--use-violence-detector", action="store_true")
    _add(p, "--timeout", type=float, default=30.0)
    common(p, fmt=False)
    p.set_defaults(func=cmd_query_remote)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except (FaceKNNError, OSError, ValueError) as exc:
        print(f"faceknn {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
