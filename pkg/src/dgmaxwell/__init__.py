"""Matrix-free DG time-domain Maxwell solver on triangles with the Dubiner basis."""
import warnings

import numba

__version__ = "0.1.0"

numba.config.THREADING_LAYER_PRIORITY = ["omp", "tbb", "workqueue"]
# an outdated system TBB only costs that backend; numba falls back by itself
warnings.filterwarnings("ignore", message="The TBB threading layer")
