"""
This module imports and initializes EWS Signatures.
"""

# Select what is included in `from ews_signatures import *`
__all__ = [
    "OperatorPair",
    "PiecewiseLinearPath",
    "TruncatedTensor",
    "_initialize_options",
    "describe_options",
    "disable_output",
    "efm_signature",
    "enable_output",
    "ews_features",
    "get_compute",
    "ingest_csv",
    "print_time_elapsed",
    "reset_format",
    "scan_ews",
    "set_compute",
    "set_format",
    "signature",
    "start_timer",
]

# Register the .ews accessor on Pandas DataFrames
# and select functions to expose in `from ews_signatures import ...`
from .ews_engine import efm_signature, ews_features, scan_ews, signature
from .flow_ops import OperatorPair
from .options import (
    _initialize_options,
    describe_options,
    disable_output,
    enable_output,
    get_compute,
    reset_format,
    set_compute,
    set_format,
)
from .path_model import PiecewiseLinearPath, ingest_csv
from .PathAccessor import PathAccessor
from .tensor_algebra import TruncatedTensor
from .timer import print_time_elapsed, start_timer

_initialize_options()
