# Subcommand modules; each exposes register(subparsers)
from cpsdetect.commands import log
from cpsdetect.commands import dnn
from cpsdetect.commands import svm
from cpsdetect.commands import evaluate
from cpsdetect.commands import tune

__all__ = [
    "log",
    "dnn",
    "svm",
    "evaluate",
    "tune",
]
