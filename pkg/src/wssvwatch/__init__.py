"""wssvwatch: self-hostable WSSV shrimp disease surveillance.

Edge-style image inference on interchange-format model bundles, occlusion
saliency, imbalance-aware evaluation (stratified splits, F1/AUC/FNR),
conversion-parity and latency QA, a content-addressed dataset store, and an
HTTP reporting service.
"""

from .errors import (
    BenchmarkError,
    BoundsError,
    BusyError,
    CapabilityError,
    ConfigurationError,
    DecodeError,
    DegenerateMetricWarning,
    IntegrityError,
    LeakageError,
    ModelContractError,
    NotFoundError,
    NumericError,
    StratificationError,
    UndefinedMetricError,
    ValidationError,
    WssvWatchError,
)

__version__ = "0.1.0"
