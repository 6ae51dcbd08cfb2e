"""Test-time graph OOD score calibration.

Boundary modeling via step-function graphon estimation, mixup, and sampling;
dual score-ordered dictionaries with frozen memory banks; and an
attention-based calibrator trained at inference against a dual
cross-entropy objective.
"""

from .analysis import (
    BoundReport,
    Motif,
    check_counting_lemma,
    check_mixup_bounds,
    cut_norm,
    homomorphism_density,
)
from .calibration import CalibratorParams, ScoreRecord, attn_forward, fuse, loss_and_grads, s_in, s_out, train
from .dictionary import BoundaryDict, DictEntry
from .encoder import EncoderWeights, embed, load_encoder, make_random_encoder, pretrain_score, save_encoder
from .evaluation import EvalReport, auc, export_scores, kl_divergence
from .graphon import Graphon, estimate_graphon, mixup, random_size, sample_graph, sample_graph_latent
from .graphs import Graph, GraphDataset, adjacency, degree_features, load_dataset, save_dataset
from .pipeline import PipelineConfig, PipelineResult, augment_subgroup, partition, run_baca
from .synthbench import BenchSpec, default_spec, make_benchmark

__version__ = "0.1.0"
