import sys, os
sys.path.append(os.path.dirname(os.path.dirname(__file__)))

from hsnc.cli import run
from hsnc.codec import compress, decompress
from hsnc.dataio import Dataset, generate_dataset
from hsnc.normalize import compute_radiance_stats, fit_l2_normalizer
from hsnc.pipeline import Pipeline
from hsnc.probes import evaluate_probe_suite
from hsnc.tensor import Tensor
from hsnc.train import train_vae
from hsnc.vae import encode, decode

print("OK imports")
