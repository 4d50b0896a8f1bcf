"""Scale-aware neural calibration of wide-swath altimetry, on synthetic OSSE data."""
import os

__version__ = "0.1.0"

# cap BLAS threads before numpy is first imported
_threads = os.environ.get("SWOTCAL_THREADS")
if _threads:
    for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)
