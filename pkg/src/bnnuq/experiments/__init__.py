from .common import Emitter, ExperimentConfig, boxplot_stats  # noqa: F401
