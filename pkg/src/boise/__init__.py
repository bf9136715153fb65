"""Bayes-optimal informer selection and compound ranking for new targets."""

from .dpmm import Clustering, Hyperparams, PosteriorEnsemble, choose_hyperparams, load_ensemble, sample_posterior
from .errors import BoiseError, DegenerateDataError, GuardError, ParseError, UndefinedMetricError, ZeroMassError
from .matrix import BioactivityMatrix, ContinuousMatrix, binarize_2sd, binarize_zscore, from_array, load_csv, write_csv
from .metrics import ef10, f1_best_split, frequent_hitters, mcc_best_split, nef10, rocauc
from .pel import InformerAssay, LinkDistribution, link_distribution, pel1, pel2, theta_hat, theta_tilde
from .ranker import Ranking, encode_intermediate, rank_all, top_set
from .selector import SelectionConfig, accelerated_select, entropy, entropy_score, greedy_select, select_informers

__version__ = "0.1.0"

__all__ = [
    "BioactivityMatrix",
    "BoiseError",
    "Clustering",
    "ContinuousMatrix",
    "DegenerateDataError",
    "GuardError",
    "Hyperparams",
    "InformerAssay",
    "LinkDistribution",
    "ParseError",
    "PosteriorEnsemble",
    "Ranking",
    "SelectionConfig",
    "UndefinedMetricError",
    "ZeroMassError",
    "accelerated_select",
    "binarize_2sd",
    "binarize_zscore",
    "choose_hyperparams",
    "ef10",
    "encode_intermediate",
    "entropy",
    "entropy_score",
    "f1_best_split",
    "frequent_hitters",
    "from_array",
    "greedy_select",
    "link_distribution",
    "load_csv",
    "load_ensemble",
    "mcc_best_split",
    "nef10",
    "pel1",
    "pel2",
    "rank_all",
    "rocauc",
    "sample_posterior",
    "select_informers",
    "theta_hat",
    "theta_tilde",
    "top_set",
    "write_csv",
]
