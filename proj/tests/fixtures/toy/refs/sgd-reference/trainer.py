"""Generic epoch loop."""


def fit(model, optimizer, batches, epochs, evaluate):
    history = []
    for _ in range(epochs):
        for batch in batches():
            grads = model.grad(batch)
            optimizer.update(grads)
        history.append(evaluate(model))
    return history
