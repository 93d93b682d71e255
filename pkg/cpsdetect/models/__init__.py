# In-memory domain objects: logs, trained detectors
from cpsdetect.models.log import Label, LabelKind, Log, LogEntry
from cpsdetect.models.density_net import DensityNet, ScoreTrace
from cpsdetect.models.svm import SvmModel, SvmPrediction, Window, WindowSet

__all__ = [
    "Label",
    "LabelKind",
    "Log",
    "LogEntry",
    "DensityNet",
    "ScoreTrace",
    "SvmModel",
    "SvmPrediction",
    "Window",
    "WindowSet",
]
