from .compress import compress, compression_ratio, decompress, ratio_report, shape_ratio
from .evaluate import ReconReport, composite_channels, eval_reconstruction, sample_spectra, write_recon_report
from .latent import LatentCode, decode_latent, encode_latent, read_latent, write_latent

__all__ = [
    "compress", "compression_ratio", "decompress", "ratio_report", "shape_ratio",
    "ReconReport", "composite_channels", "eval_reconstruction", "sample_spectra", "write_recon_report",
    "LatentCode", "decode_latent", "encode_latent", "read_latent", "write_latent",
]
