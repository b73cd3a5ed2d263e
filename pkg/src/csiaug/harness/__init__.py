"""Three-scenario experiment harness (balanced / imbalanced / augmented)."""
from .experiment import check_no_leakage, load_dataset, run_all, run_scenario
from .plan import SCENARIOS, ExperimentPlan, RunManifest, load_plan
from .report import report
from .splits import apply_imbalance, augment, augmentation_counts, split_dataset

__all__ = [
    "SCENARIOS",
    "ExperimentPlan",
    "RunManifest",
    "apply_imbalance",
    "augment",
    "augmentation_counts",
    "check_no_leakage",
    "load_dataset",
    "load_plan",
    "report",
    "run_all",
    "run_scenario",
    "split_dataset",
]
