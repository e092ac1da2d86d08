from .buffer import SampleBuffer, sample_batch
from .cache import TileCache
from .dataset import Dataset
from .formats import decode_l2, decode_tile, encode_l2, encode_tile, read_l2, read_tile, write_l2, write_tile
from .split import SplitAssignment, fixed_validation_ids, split_files
from .synth import SpectralTemplates, generate_dataset, make_templates, synth_generate, tile_ids
from .tile import HyperspectralTile, L2Product, L2ProductSet

__all__ = [
    "SampleBuffer", "sample_batch", "TileCache", "Dataset",
    "decode_l2", "decode_tile", "encode_l2", "encode_tile", "read_l2", "read_tile", "write_l2", "write_tile",
    "SplitAssignment", "fixed_validation_ids", "split_files",
    "SpectralTemplates", "generate_dataset", "make_templates", "synth_generate", "tile_ids",
    "HyperspectralTile", "L2Product", "L2ProductSet",
]
