# Service layer modules
from cpsdetect.services import log_service
from cpsdetect.services import plant_service
from cpsdetect.services import density_net_service
from cpsdetect.services import svm_service
from cpsdetect.services import eval_service
from cpsdetect.services import tune_service
from cpsdetect.services import manifest_service
from cpsdetect.services import report_service

__all__ = [
    "log_service",
    "plant_service",
    "density_net_service",
    "svm_service",
    "eval_service",
    "tune_service",
    "manifest_service",
    "report_service",
]
