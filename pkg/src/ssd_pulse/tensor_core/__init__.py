"""Float32 tensor kernels, arbitrary-length real FFT and the PTNSR file format."""
from ssd_pulse.tensor_core.fft import ComplexSpectrum, irfft, irfft64, rfft, rfft64
from ssd_pulse.tensor_core.kernels import (
    DTYPE,
    as_tensor,
    batchnorm_infer,
    conv1d,
    conv2d,
    matmul,
    maxpool2d,
    relu,
)
from ssd_pulse.tensor_core.ptnsr import (
    MAGIC,
    atomic_write_bytes,
    decode_ptnsr,
    encode_ptnsr,
    read_ptnsr,
    write_ptnsr,
)

__all__ = [
    "DTYPE",
    "MAGIC",
    "ComplexSpectrum",
    "as_tensor",
    "atomic_write_bytes",
    "batchnorm_infer",
    "conv1d",
    "conv2d",
    "decode_ptnsr",
    "encode_ptnsr",
    "irfft",
    "irfft64",
    "matmul",
    "maxpool2d",
    "read_ptnsr",
    "relu",
    "rfft",
    "rfft64",
    "write_ptnsr",
]
