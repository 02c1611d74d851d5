"""Block-circulant neural network kernels, training, compression accounting,
and an analytic cost model for the FFT compute engine."""

from .circulant import (
    BlockCirculantMatrix,
    CirculantBlock,
    block_matvec,
    block_matvec_t,
    circ_matvec_dense,
    circ_matvec_fft,
    dense_expand,
    param_count,
)
from .datasets import DatasetHandle, load_mnist, synth_dataset
from .errors import (
    BadMagic,
    BlockcircError,
    ChecksumMismatch,
    CountMismatch,
    DivergedError,
    InfeasibleConfig,
    InvalidShape,
    InvalidSize,
    InvalidSpec,
    InvalidSpectrum,
    InvalidValue,
    SizeMismatch,
    TruncatedFile,
    VersionMismatch,
)
from .fftcore import (
    FftPlan,
    OpCounter,
    Spectrum,
    fft,
    get_plan,
    ifft,
    irfft,
    plan,
    real_mult_ratio,
    rfft,
    spectrum_mul,
)
from .hwmodel import (
    CostParams,
    CostReport,
    FftWork,
    HwConfig,
    MetricSpec,
    Workload,
    estimate_perf,
    estimate_power,
    load_cost_params,
    metric,
    optimize_design,
    workload_of,
)
from .layers import (
    ConvLayer,
    FcLayer,
    Flatten,
    LayerGradients,
    MaxPool,
    Relu,
    conv_backward,
    conv_forward,
    fc_backward,
    fc_forward,
    im2col,
    maxpool_backward,
    maxpool_forward,
    softmax_xent,
)
from .modelfile import load_arch, load_model, parse_arch, save_model
from .quantization import (
    CompressionReport,
    FixedPointTensor,
    compression_report,
    dequantize,
    quantize,
    quantize_network,
    quantized_inference,
)
from .training import (
    ArchSpec,
    Network,
    TrainConfig,
    TrainReport,
    evaluate,
    grad_check,
    init_network,
    train,
)

__version__ = "0.1.0"
