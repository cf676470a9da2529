"""netgeom: canonical representations and landscape geometry of small
neural networks (continuous and binary weights)."""

from .checkpoint import load_checkpoint, save_checkpoint
from .data import (HmmConfig, hmm_generate, parity_labels, randomize_labels,
                   read_idx, standardize, write_idx, zero_pixels)
from .geometry import (GeodesicSpec, HammingPath, geodesic_distance,
                       hamming_distance, midpoint, network_geodesic,
                       random_hamming_path, sphere_angle,
                       sphere_geodesic_point)
from .nets import (Dataset, LayerSpec, Network, binarize, classify, forward,
                   make_network, random_network, train_error)
from .probes import (LocalEnergyProfile, PathScan, PlaneGrid, barrier,
                     distance_study, local_energy, optimized_path, path_scan,
                     plane_scan)
from .symmetry import (PermutationPlan, UnitNorms, align, apply_plan,
                       normalize, solve_assignment, unit_norms)
from .training import (AdvConfig, ReplicaConfig, TrainConfig, TrainTrace,
                       adv_init_train, backprop, cosine_lr, rsgd_train,
                       sgd_train)
from .experiments import run_experiment

__version__ = "0.1.0"
