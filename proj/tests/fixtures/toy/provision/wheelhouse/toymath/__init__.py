"""Tiny vector helpers."""


def dot(a, b):
    return sum(x * y for x, y in zip(a, b))


def mean(values):
    values = list(values)
    return sum(values) / len(values)
