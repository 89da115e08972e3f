"""Football player salary models: a nested random-intercept mixed model and a
bagged regression-tree forest, with over/under-estimation labelling."""

__version__ = "0.1.0"

from ._kernels import BACKEND  # noqa: E402
from .achievement import AchievementRanks, total_grade  # noqa: E402
from .cart import RegressionTree, grow_tree  # noqa: E402
from .estimate import EstimationLabel, classify_by_interval, classify_by_smape  # noqa: E402
from .evaluate import r_square, rmse, smape  # noqa: E402
from .forest import ForestModel, ForestParams, fit_forest  # noqa: E402
from .ingest import Dataset, load_dataset  # noqa: E402
from .mixedmodel import MixedModelFit, MixedModelSpec, fit_reml, prediction_interval  # noqa: E402

__all__ = [
    "BACKEND", "AchievementRanks", "total_grade", "RegressionTree", "grow_tree",
    "EstimationLabel", "classify_by_interval", "classify_by_smape", "r_square", "rmse",
    "smape", "ForestModel", "ForestParams", "fit_forest", "Dataset", "load_dataset",
    "MixedModelFit", "MixedModelSpec", "fit_reml", "prediction_interval",
]
