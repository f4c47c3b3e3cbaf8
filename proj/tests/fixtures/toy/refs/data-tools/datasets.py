"""Synthetic regression datasets."""
import random


def linear_rows(n, weights, bias, noise, seed):
    rng = random.Random(seed)
    rows = []
    for _ in range(n):
        x = [rng.uniform(-1.0, 1.0) for _ in weights]
        y = sum(a * b for a, b in zip(weights, x)) + bias + rng.gauss(0.0, noise)
        rows.append((x, y))
    return rows


def chunks(rows, size):
    return [rows[i:i + size] for i in range(0, len(rows), size)]
