"""Metric-learning embedder plus few-shot open-set (Known/Novel) recognition."""
from .calibration import (CalibrationResult, RocCurve, ScoredSample, calibrate, export_histograms,
                          roc_curve, score_dev_set, youden_threshold)
from .config import RunConfig
from .data_io import (EmbeddingRecord, SplitManifest, SynthConfig, generate_synthetic,
                      read_embeddings, write_embeddings)
from .embedder import (EmbedderModel, TrainConfig, Triplet, forward, init_model, load_model,
                       mine_triplets, save_model, train, triplet_loss, triplet_loss_gradient)
from .evaluation import bipartition_report, classification_report, end_to_end_report
from .gallery import Gallery, QueryNeighborhood, enroll, query
from .numeric import make_rng, pairwise_distances, pnorm_distance
from .recognizer import RecognitionResult, recognize, recognize_batch

__version__ = "0.1.0"
