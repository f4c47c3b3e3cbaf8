"""Synthetic linear data."""
import random

from config import NUM_FEATURES, NUM_SAMPLES, SEED

TRUE_WEIGHTS = [1.5, -2.0, 0.5]
TRUE_BIAS = 0.25


def make_dataset(num_samples=NUM_SAMPLES, seed=SEED):
    rng = random.Random(seed)
    rows = []
    for _ in range(num_samples):
        x = [rng.uniform(-1.0, 1.0) for _ in range(NUM_FEATURES)]
        y = sum(w * xi for w, xi in zip(TRUE_WEIGHTS, x)) + TRUE_BIAS + rng.gauss(0.0, 0.01)
        rows.append((x, y))
    return rows


def batches(rows, batch_size):
    for start in range(0, len(rows), batch_size):
        yield rows[start:start + batch_size]
