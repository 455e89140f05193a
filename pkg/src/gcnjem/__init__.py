"""Energy-based training for two-layer graph convolutional classifiers.

The package couples a node classifier with the energy view of its logits:
an inner Langevin sampler synthesizes node features by ascending the
graph-normalized log-sum-exp energy, a generative loss ties synthesized
and original energies together, and node pairs close in energy gain new
edges. Analysis utilities cover adjacency/covariance spectra, closed-walk
counts, confidence histograms, and expected calibration error.
"""

from .graph import (
    SparseAdjacency,
    SpectrumReport,
    add_edge,
    add_self_loops,
    closed_path_count,
    degree_vector,
    spectrum,
    spmm,
    symmetric_normalize,
)
from .autodiff import (
    Tape,
    finite_difference_check,
    masked_cross_entropy,
    matmul,
    relu,
    row_log_sum_exp,
    softmax_rows,
)
from .model import (
    EnergyReport,
    GcnParams,
    ModelConfig,
    classification_loss,
    energy_report,
    forward,
    forward_on_tape,
    generative_loss,
    graph_energy,
    init_params,
    node_energy,
    orthogonality_penalty,
    predict,
    total_loss,
)
from .training import (
    EpochLog,
    ReplayBuffer,
    SampleSet,
    SgldConfig,
    TrainConfig,
    TrainResult,
    evaluate_accuracy,
    generate_edges,
    init_sample,
    optimizer_step,
    sgld_chain,
    train,
)
from .data import (
    Dataset,
    SbmSpec,
    generate_sbm,
    load_checkpoint,
    load_dataset,
    save_checkpoint,
    save_dataset,
)
from .metrics import (
    CalibrationReport,
    HistogramReport,
    SpectraComparison,
    accuracy,
    compare_spectra,
    confidence_histogram,
    covariance_spectrum,
    expected_calibration_error,
)

__version__ = "0.1.0"
