"""actionrc: human action recognition with a ring-topology sine reservoir.

Pipeline: silhouette keyframes -> HOG -> zero-drop + PCA -> reservoir ->
Timesteps-Of-Interest ridge readout, with Bayesian hyperparameter search
and a cross-validated evaluation harness on KTH-style manifests.
"""

__version__ = "0.1.0"

from .dataset import (ACTIONS, SCENARIOS, DatasetManifest, FoldSplit, VideoRecord,
                      complete_dataset, kfold_splits, load_manifest, scenario_subset)
from .errors import (ActionRCError, CacheError, ConfigError, DataError,
                     ManifestError, NumericError, UnrecoverableGapError)
from .experiment import (ExperimentConfig, ExperimentReport, baseline_linear,
                         confusion_matrix, measure_throughput, run_experiment)
from .features import (FeatureMatrix, HogParams, PcaModel, drop_zero_features,
                       hog, pca_fit, pca_transform)
from .hyperopt import (GpModel, HyperBounds, Observation, bayes_optimize,
                       expected_improvement, gp_fit, gp_predict,
                       rescaled_diagnostics)
from .preprocess import (KeyframeSet, PreprocessParams, center_silhouette,
                         gaussian_smooth, preprocess_sequence, segment_silhouette,
                         subsample_keyframes)
from .readout import (DesignMatrix, ReadoutModel, ToiSet, classify, concat_toi,
                      toi_search, train_ridge)
from .reservoir import (ReservoirConfig, Trajectory, generate_mask, run_dataset,
                        run_sequence, step)
