"""Exact L2 embedding search and identity-retrieval evaluation."""

from .calibration import ThresholdCalibrator, ThresholdTable, calibrate, percentile, same_identity_distances
from .exceptions import (DataError, EmptyDistributionError, FaceKNNError, FormatError,
                         InvalidArgumentError, NotFoundError, ProtocolError, RemoteError,
                         TransportError, UnsupportedModalityError)
from .identity import (AccuracyReport, IdentificationEvaluator, QueryOutcome, classify_query,
                       evaluate_accuracy)
from .index import FlatIndex, IndexEntry, SearchHit, Variant, build, search, search_excluding
from .ingestion import (IdentityManifest, ManifestRecord, import_csv, load_vectors, read_embeddings,
                        read_manifest, write_embeddings, write_manifest)
from .reports import emit_report
from .robustness import (QueryResultSet, RobustnessReport, aggregate, collect_result_sets,
                         evaluate_robustness, filter_valid, qualify)
from .service import KnnClient, KnnHTTPServer, KnnRequest, KnnResponse, KnnService, deduplicate, query_remote, serve_query
from .synth import PerturbationLevel, SynthSpec, generate_synthetic, synthesize
from .vectors import l2, normalize, squared_l2

__version__ = "0.1.0"
