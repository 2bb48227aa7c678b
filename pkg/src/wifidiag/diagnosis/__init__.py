from .baselines import (
    DecisionTreeModel,
    KnnModel,
    LogRegModel,
    MlpModel,
    TrainingError,
    mlp_loss_and_grads,
    numeric_gradient,
    train_baseline,
)
from .metrics import CLASS_ORDER, ResultsRecord, Task, evaluate, label_for
from .benchmark import fusion_deltas, render_report, run_benchmark

__all__ = [
    "CLASS_ORDER", "DecisionTreeModel", "KnnModel", "LogRegModel", "MlpModel",
    "ResultsRecord", "Task", "TrainingError", "evaluate", "fusion_deltas",
    "label_for", "mlp_loss_and_grads", "numeric_gradient", "render_report",
    "run_benchmark", "train_baseline",
]
