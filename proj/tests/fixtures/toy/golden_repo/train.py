"""Training loop."""
from config import BATCH_SIZE, EPOCHS, LEARNING_RATE, MOMENTUM, scaled
from data import batches
from model import LinearModel
from optim import MomentumSGD


def train(rows, epochs=EPOCHS, num_features=3):
    model = LinearModel(num_features)
    optimizer = MomentumSGD(model, LEARNING_RATE, MOMENTUM)
    history = []
    for _ in range(scaled(epochs)):
        for batch in batches(rows, BATCH_SIZE):
            grad_w, grad_b = model.gradients(batch)
            optimizer.step(grad_w, grad_b)
        history.append(model.loss(rows))
    return model, history
