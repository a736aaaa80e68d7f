# tests/helpers.py
import numpy as np

from csmil.clustering.schemas import ClusterAssignment
from csmil.data.schemas import Bag, SynthConfig
from csmil.optim.schemas import TrainConfig


def make_bag(bag_id, label, rows):
    return Bag(id=bag_id, label=label, embeddings=np.asarray(rows, dtype=np.float64))


def one_cluster(n, K, k=0):
    return ClusterAssignment(cluster_of_instance=np.full(n, k), K=K)


# planted-cluster benchmark: 8 latent components, 2 informative, 200 bags
BENCHMARK = SynthConfig(K_latent=8, s_informative=2, d=16, bags_per_class=100, seed=0)
BENCHMARK_TRAIN = TrainConfig(epochs=300, lr_smooth=1e-2, lr_beta=5e-2, gamma=0.1)
