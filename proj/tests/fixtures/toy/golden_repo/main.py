"""Command-line entry point."""
import argparse

from config import EPOCHS, NUM_FEATURES
from data import make_dataset
from train import train


def parse_args(argv=None):
    parser = argparse.ArgumentParser(prog="main.py", description="Momentum-averaged linear regression")
    parser.add_argument("--epochs", type=int, default=EPOCHS)
    parser.add_argument("--tolerance", type=float, default=0.05)
    return parser.parse_args(argv)


def main(argv=None):
    args = parse_args(argv)
    rows = make_dataset()
    _, history = train(rows, epochs=args.epochs, num_features=NUM_FEATURES)
    final = history[-1]
    print("epochs_run=%d" % len(history))
    print("final_loss=%.6f" % final)
    if final > args.tolerance:
        raise SystemExit("loss %.6f above tolerance %.4f" % (final, args.tolerance))
    print("ok")


if __name__ == "__main__":
    main()
