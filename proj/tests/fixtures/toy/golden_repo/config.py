"""Hyperparameters for momentum-averaged linear regression."""
import os

LEARNING_RATE = 0.05
MOMENTUM = 0.9
BATCH_SIZE = 16
EPOCHS = 20
SEED = 7
NUM_FEATURES = 3
NUM_SAMPLES = 256


def scaled(value, minimum=1):
    """Scales a count by REPOGEN_SCALE for quick verification runs."""
    factor = float(os.environ.get("REPOGEN_SCALE", "1"))
    return max(minimum, int(round(value * factor)))
