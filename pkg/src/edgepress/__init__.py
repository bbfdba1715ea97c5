"""edgepress: compression toolkit for small audio classifiers.

Train a cough classifier, prune it by weight magnitude, quantize it to 8 or
16 bits, run its dense layers in CSR form and measure what each step costs
in accuracy, size and latency.
"""

__version__ = "0.1.0"

from .estimator import CoughNetClassifier, PrunedClassifier, QuantizedClassifier, check_inputs
from .exceptions import (
    ConfigError,
    DataError,
    EdgepressError,
    LeakageError,
    MetricError,
    NumericError,
    ParameterError,
    ParseError,
    ShapeError,
)
from .metrics import auc_roc
from .model import Model, ModelConfig, build_model, evaluate, load_config, make_optimizer, train
from .pruning import PruneReport, PruningSchedule, PruningWarning, magnitude_mask, prune_fine_tune, sparsity_at
from .quantization import QuantizedModel, QuantizedTensor, dequantize, minmax_params, quantize, quantize_model
from .serialization import compressed_size, deserialize, load_model, save_model, serialize
from .sparse import CsrMatrix, SparseModel, csr_matvec, from_csr, sparsify_model, to_csr

__all__ = [
    "__version__",
    "CoughNetClassifier", "PrunedClassifier", "QuantizedClassifier", "check_inputs",
    "ConfigError", "DataError", "EdgepressError", "LeakageError", "MetricError", "NumericError",
    "ParameterError", "ParseError", "ShapeError",
    "auc_roc",
    "Model", "ModelConfig", "build_model", "evaluate", "load_config", "make_optimizer", "train",
    "PruneReport", "PruningSchedule", "PruningWarning", "magnitude_mask", "prune_fine_tune", "sparsity_at",
    "QuantizedModel", "QuantizedTensor", "dequantize", "minmax_params", "quantize", "quantize_model",
    "compressed_size", "deserialize", "load_model", "save_model", "serialize",
    "CsrMatrix", "SparseModel", "csr_matvec", "from_csr", "sparsify_model", "to_csr",
]
