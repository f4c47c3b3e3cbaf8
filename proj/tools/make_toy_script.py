#!/usr/bin/env python3
"""Writes the scripted-provider rules for the toy fixture.

Every reply is derived from the golden repository, the reference repositories
and the content index of the toy paper, so the script cannot drift from them.
"""
import argparse
import json
import os
import sys

STAGED_ORDER = [
    "requirements.txt", "config.py", "data.py", "model.py", "optim.py",
    "train.py", "main.py", "reproduce.sh", "README.md",
]

TYPO_GOOD = "            optimizer.step(grad_w, grad_b)\n"
TYPO_BAD = "            optimizer.step(grad_w, grad_bias)\n"
DEAD_LINE = "    unused_buffer = []\n"
DEAD_AFTER = "    rows = []\n"

HYPERPARAMETERS = [
    ("learning rate", "0.05"), ("momentum", "0.9"), ("batch size", "16"),
    ("epochs", "20"), ("random seed", "7"),
]


def read(path):
    with open(path) as handle:
        return handle.read()


def generated_sources(golden_dir):
    """Golden files as first generated: one name typo, one dead assignment."""
    files = {name: read(os.path.join(golden_dir, name)) for name in STAGED_ORDER}
    assert TYPO_GOOD in files["train.py"]
    files["train.py"] = files["train.py"].replace(TYPO_GOOD, TYPO_BAD)
    assert DEAD_AFTER in files["data.py"]
    files["data.py"] = files["data.py"].replace(DEAD_AFTER, DEAD_AFTER + DEAD_LINE, 1)
    return files


def line_of(text, needle):
    for number, line in enumerate(text.splitlines(True), start=1):
        if line == needle or needle in line:
            return number
    raise ValueError("line not found: %r" % needle)


def chunk_by_title(index, title):
    for number, chunk in enumerate(index["chunks"]):
        if chunk["title"] == title:
            return number
    raise ValueError("no chunk titled %r" % title)


def fence(path, text):
    lang = {".py": "python", ".sh": "sh", ".md": "markdown"}.get(os.path.splitext(path)[1], "text")
    return "```%s\n%s```\n" % (lang, text)


def rule(role, template, reply, match=None, exclude=None, times=None):
    r = {"role": role, "template": template, "reply": reply}
    if match:
        r["match"] = match
    if exclude:
        r["exclude"] = exclude
    if times is not None:
        r["times"] = times
    return r


def concept_reply(index):
    sections = [c["heading"] for c in index["chunks"] if not c["synthetic"] and c["depth"] == 2]
    return json.dumps({
        "structure_map": [{"section": s, "summary": "Section %s of the note." % s} for s in sections],
        "method_components": [
            {"name": "linear model", "responsibility": "prediction rule and squared-error objective"},
            {"name": "momentum optimizer", "responsibility": "heavy-ball velocity update"},
            {"name": "training loop", "responsibility": "epochs over consecutive batches"},
            {"name": "synthetic data", "responsibility": "linear targets with small noise"},
        ],
        "implementation_map": [
            {"claim": "prediction is w . x + b", "code_requirement": "LinearModel.predict",
             "components": ["linear model"]},
            {"claim": "velocity accumulates gradients", "code_requirement": "MomentumSGD.step",
             "components": ["momentum optimizer"]},
            {"claim": "consecutive batches without shuffling", "code_requirement": "batches()",
             "components": ["training loop", "synthetic data"]},
        ],
        "reproduction_roadmap": ["final mean squared error at most 0.05"],
    }, indent=1)


def algorithm_reply(index, paper):
    algo_chunk = chunk_by_title(index, "Algorithm")
    start = paper.index("Algorithm 1: Momentum training")
    end = paper.index("return w, b") + len("return w, b")
    return json.dumps({
        "pseudocode": [{"label": "Algorithm 1", "text": paper[start:end], "source": algo_chunk}],
        "equations": [
            {"id": "E1", "expression": "y_hat = w . x + b", "variables": ["w", "x", "b"],
             "source": chunk_by_title(index, "Model")},
            {"id": "E2", "expression": "L = mean over B of (y_hat - y)^2", "variables": ["B", "y"],
             "source": chunk_by_title(index, "Objective")},
            {"id": "E3", "expression": "v <- mu v + g", "variables": ["v", "mu", "g"],
             "source": chunk_by_title(index, "Optimizer")},
            {"id": "E4", "expression": "w <- w - eta v", "variables": ["w", "eta", "v"],
             "source": chunk_by_title(index, "Optimizer")},
        ],
        "architectures": [{"name": "linear model", "description": "single linear layer with bias",
                           "source": chunk_by_title(index, "Model")}],
        "hyperparameters": [{"name": n, "value": v, "source": chunk_by_title(index, "Training Setup")}
                            for n, v in HYPERPARAMETERS],
    }, indent=1)


def sym(kind, name, signature, description):
    return {"kind": kind, "name": name, "signature": signature, "description": description}


def blueprint_reply():
    specs = {
        "requirements.txt": {"purpose": "pinned third-party packages", "symbols": [], "links": [], "imports": []},
        "config.py": {
            "purpose": "hyperparameters and run scaling",
            "symbols": [sym("constant", "LEARNING_RATE", "LEARNING_RATE = 0.05", "step size eta"),
                        sym("function", "scaled", "scaled(value, minimum=1) -> int",
                            "scale a count by REPOGEN_SCALE")],
            "links": [], "imports": []},
        "data.py": {
            "purpose": "synthetic linear dataset and batching",
            "symbols": [sym("function", "make_dataset", "make_dataset(num_samples, seed) -> list",
                            "256 noisy linear pairs"),
                        sym("function", "batches", "batches(rows, batch_size)", "consecutive batches")],
            "links": [], "imports": ["config.py"]},
        "model.py": {
            "purpose": "linear model with squared-error objective",
            "symbols": [sym("class", "LinearModel", "LinearModel(num_features)",
                            "predict, loss and gradients")],
            "links": ["E1", "E2"], "imports": []},
        "optim.py": {
            "purpose": "heavy-ball momentum SGD",
            "symbols": [sym("class", "MomentumSGD", "MomentumSGD(model, learning_rate, momentum)",
                            "velocity update then parameter step")],
            "links": ["E3", "E4", "Algorithm 1"], "imports": []},
        "train.py": {
            "purpose": "training loop over epochs and batches",
            "symbols": [sym("function", "train", "train(rows, epochs, num_features) -> (model, history)",
                            "runs Algorithm 1 and records the loss per epoch")],
            "links": ["Algorithm 1"], "imports": ["config.py", "data.py", "model.py", "optim.py"]},
        "main.py": {
            "purpose": "command-line entry point with loss tolerance check",
            "symbols": [sym("function", "main", "main(argv=None)", "train and check the final loss")],
            "links": [], "imports": ["config.py", "data.py", "train.py"]},
        "reproduce.sh": {"purpose": "runs main.py with the documented settings", "symbols": [], "links": [],
                         "imports": []},
        "README.md": {"purpose": "usage notes", "symbols": [], "links": [], "imports": []},
    }
    descriptions = {
        "requirements.txt": "dependency manifest", "config.py": "hyperparameters",
        "data.py": "synthetic data", "model.py": "linear model", "optim.py": "momentum optimizer",
        "train.py": "training loop", "main.py": "entry point", "reproduce.sh": "reproduction script",
        "README.md": "documentation",
    }
    priorities = {"requirements.txt": 1, "config.py": 1, "data.py": 1, "model.py": 1, "optim.py": 1,
                  "train.py": 2, "main.py": 2, "reproduce.sh": 3, "README.md": 3}
    return json.dumps({
        "file_hierarchy": [{"path": p, "priority": priorities[p], "description": descriptions[p]}
                           for p in STAGED_ORDER],
        "component_specs": specs,
        "verification_protocol": {"setup": "synthetic data, 256 pairs, seed 7",
                                  "metrics": ["final mean squared error"],
                                  "success_criteria": ["final loss at most 0.05"]},
        "execution_environment": {"dependencies": [{"name": "toymath", "version": "0.1"}],
                                  "hardware": "any CPU"},
        "staged_plan": [
            {"name": "setup", "files": ["requirements.txt", "config.py"], "check": "python3 -c 'import config'"},
            {"name": "components", "files": ["data.py", "model.py", "optim.py"],
             "check": "python3 -c 'import data, model, optim'"},
            {"name": "training", "files": ["train.py", "main.py"], "check": "python3 main.py --epochs 1"},
            {"name": "reproduction", "files": ["reproduce.sh", "README.md"], "check": "sh reproduce.sh"},
        ],
    }, indent=1)


def iface(kind, name, signature, purpose):
    return {"kind": kind, "name": name, "signature": signature, "purpose": purpose}


SUMMARIES = {
    "requirements.txt": {"purpose": "pins toymath 0.1", "public_interface": [], "afferent": [],
                         "efferent_predicted": []},
    "config.py": {"purpose": "hyperparameter constants and the REPOGEN_SCALE helper",
                  "public_interface": [iface("constant", "LEARNING_RATE", "LEARNING_RATE = 0.05", "eta"),
                                       iface("constant", "MOMENTUM", "MOMENTUM = 0.9", "mu"),
                                       iface("constant", "BATCH_SIZE", "BATCH_SIZE = 16", "m"),
                                       iface("constant", "EPOCHS", "EPOCHS = 20", "T"),
                                       iface("constant", "SEED", "SEED = 7", "data seed"),
                                       iface("constant", "NUM_FEATURES", "NUM_FEATURES = 3", "d"),
                                       iface("constant", "NUM_SAMPLES", "NUM_SAMPLES = 256", "dataset size"),
                                       iface("function", "scaled", "scaled(value, minimum=1) -> int",
                                             "scales counts for quick runs")],
                  "afferent": [{"module": "os", "symbols": []}],
                  "efferent_predicted": ["data.py", "train.py", "main.py"]},
    "data.py": {"purpose": "generates the noisy linear dataset and yields consecutive batches",
                "public_interface": [iface("function", "make_dataset",
                                           "make_dataset(num_samples=NUM_SAMPLES, seed=SEED) -> list",
                                           "list of (x, y) pairs"),
                                     iface("function", "batches", "batches(rows, batch_size)",
                                           "generator of consecutive slices")],
                "afferent": [{"module": "random", "symbols": []},
                             {"module": "config", "symbols": ["NUM_FEATURES", "NUM_SAMPLES", "SEED"]}],
                "efferent_predicted": ["train.py", "main.py"]},
    "model.py": {"purpose": "linear model holding weights and bias",
                 "public_interface": [iface("class", "LinearModel", "LinearModel(num_features)",
                                            "predict(x), loss(batch), gradients(batch) -> (grad_w, grad_b)")],
                 "afferent": [{"module": "toymath", "symbols": ["dot", "mean"]}],
                 "efferent_predicted": ["train.py"]},
    "optim.py": {"purpose": "heavy-ball momentum optimizer updating a LinearModel in place",
                 "public_interface": [iface("class", "MomentumSGD",
                                            "MomentumSGD(model, learning_rate, momentum)",
                                            "step(grad_w, grad_b) applies one update")],
                 "afferent": [], "efferent_predicted": ["train.py"]},
    "train.py": {"purpose": "runs the epoch loop and records the full-data loss",
                 "public_interface": [iface("function", "train",
                                            "train(rows, epochs=EPOCHS, num_features=3) -> (model, history)",
                                            "history holds one loss per epoch")],
                 "afferent": [{"module": "config", "symbols": ["BATCH_SIZE", "EPOCHS", "LEARNING_RATE",
                                                               "MOMENTUM", "scaled"]},
                              {"module": "data", "symbols": ["batches"]},
                              {"module": "model", "symbols": ["LinearModel"]},
                              {"module": "optim", "symbols": ["MomentumSGD"]}],
                 "efferent_predicted": ["main.py"]},
    "main.py": {"purpose": "parses --epochs and --tolerance, trains, and fails above tolerance",
                "public_interface": [iface("function", "parse_args", "parse_args(argv=None)", "CLI options"),
                                     iface("function", "main", "main(argv=None)", "entry point")],
                "afferent": [{"module": "config", "symbols": ["EPOCHS", "NUM_FEATURES"]},
                             {"module": "data", "symbols": ["make_dataset"]},
                             {"module": "train", "symbols": ["train"]}],
                "efferent_predicted": ["reproduce.sh"]},
    "reproduce.sh": {"purpose": "runs main.py with 20 epochs and tolerance 0.05", "public_interface": [],
                     "afferent": [], "efferent_predicted": []},
    "README.md": {"purpose": "how to run the reproduction", "public_interface": [], "afferent": [],
                  "efferent_predicted": []},
}


def rag_rules(refs_dir):
    optimizers = read(os.path.join(refs_dir, "sgd-reference", "optimizers.py"))
    trainer = read(os.path.join(refs_dir, "sgd-reference", "trainer.py"))
    datasets = read(os.path.join(refs_dir, "data-tools", "datasets.py"))
    heavy_start = line_of(optimizers, "class HeavyBall")
    heavy_end = line_of(optimizers, "class PlainSGD") - 3
    fit_start = line_of(trainer, "def fit(")
    fit_end = len(trainer.splitlines())
    rows_start = line_of(datasets, "def linear_rows(")
    rows_end = line_of(datasets, "return rows")
    return [
        rule("rag", "rag_filter", json.dumps({"files": ["optimizers.py", "trainer.py", "schedulers.py"]}),
             match=["Reference repository sgd-reference contains"]),
        rule("rag", "rag_filter", json.dumps({"files": ["datasets.py"]}),
             match=["Reference repository data-tools contains"]),
        rule("rag", "rag_understand", json.dumps({
            "purpose": "heavy-ball and plain SGD over flat parameter lists",
            "concepts": ["momentum buffer", "learning rate"],
            "public_interface": [iface("class", "HeavyBall", "HeavyBall(params, lr=0.01, beta=0.9)",
                                       "update(grads)"),
                                 iface("class", "PlainSGD", "PlainSGD(params, lr=0.01)", "update(grads)")]}),
            match=["File: optimizers.py"]),
        rule("rag", "rag_understand", json.dumps({
            "purpose": "generic epoch loop", "concepts": ["epochs", "history"],
            "public_interface": [iface("function", "fit", "fit(model, optimizer, batches, epochs, evaluate)",
                                       "returns per-epoch history")]}),
            match=["File: trainer.py"]),
        rule("rag", "rag_understand", json.dumps({
            "purpose": "synthetic regression rows", "concepts": ["noise", "seed"],
            "public_interface": [iface("function", "linear_rows", "linear_rows(n, weights, bias, noise, seed)",
                                       "noisy linear pairs")]}),
            match=["File: datasets.py"]),
        rule("rag", "rag_map", json.dumps({"relationships": [
            {"target": "optim.py", "type": "direct-implementation", "confidence": 0.9,
             "snippets": [{"start_line": heavy_start, "end_line": heavy_end}],
             "notes": "HeavyBall.update is the velocity update followed by the parameter step."}]}),
            match=["Reference file: optimizers.py"]),
        rule("rag", "rag_map", json.dumps({"relationships": [
            {"target": "train.py", "type": "partial-pattern", "confidence": 0.6,
             "snippets": [{"start_line": fit_start, "end_line": fit_end}], "notes": "epoch loop shape"},
            {"target": "optim.py", "type": "utility", "confidence": 0.4,
             "snippets": [{"start_line": fit_start, "end_line": fit_end}], "notes": "calls update per batch"}]}),
            match=["Reference file: trainer.py"]),
        rule("rag", "rag_map", json.dumps({"relationships": [
            {"target": "data.py", "type": "partial-pattern", "confidence": 1.3,
             "snippets": [{"start_line": rows_start, "end_line": rows_end}], "notes": "same generator"},
            {"target": "utils.py", "type": "utility", "confidence": 0.2, "snippets": [], "notes": "unplanned"}]}),
            match=["Reference file: datasets.py"]),
    ]


def generation_rules(sources):
    rules = []
    for position, path in enumerate(STAGED_ORDER):
        rules.append(rule("coder", "generate_file", fence(path, sources[path]),
                          match=["Target file: %s\n" % path]))
        summary = dict(SUMMARIES[path])
        if position + 1 < len(STAGED_ORDER):
            summary["next_target"] = STAGED_ORDER[position + 1]
        rules.append(rule("summarizer", "summarize_file", json.dumps(summary), match=["File: %s\n" % path]))
    return rules


def verify_rules(sources, golden_dir):
    dead = line_of(sources["data.py"], DEAD_LINE)
    typo = line_of(sources["train.py"], TYPO_BAD)
    return [
        rule("verifier", "quality_review", json.dumps({"score": 0.7, "issues": [
            {"start_line": dead, "end_line": dead, "description": "unused_buffer is assigned but never used",
             "instruction": "remove the unused assignment"}]}), match=["File: data.py\n"]),
        rule("verifier", "quality_review", json.dumps({"score": 0.9, "issues": []})),
        rule("verifier", "quality_fix", json.dumps({"patches": [
            {"file": "data.py", "edits": [{"start_line": dead, "end_line": dead, "text": ""}],
             "rationale": "drop the dead assignment"}]}), match=["Issue Q1 in data.py"]),
        rule("verifier", "runtime_fix", json.dumps({"patches": [
            {"file": "train.py", "edits": [{"start_line": typo, "end_line": typo, "text": TYPO_GOOD}],
             "rationale": "grad_bias is a typo for grad_b"}]}), match=["grad_bias"]),
    ]


def main(argv):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--fixture", required=True, help="tests/fixtures/toy")
    parser.add_argument("--index", required=True, help="content_index.json of the toy paper")
    parser.add_argument("--out", required=True, help="script.json to write")
    args = parser.parse_args(argv)

    index = json.loads(read(args.index))
    paper = read(os.path.join(args.fixture, "paper.md"))
    sources = generated_sources(os.path.join(args.fixture, "golden_repo"))
    rules = [
        rule("concept", "concept_analysis", concept_reply(index)),
        rule("algorithm", "algorithm_analysis", algorithm_reply(index, paper)),
        rule("planner", "blueprint_synthesis", blueprint_reply()),
    ]
    rules += rag_rules(os.path.join(args.fixture, "refs"))
    rules += generation_rules(sources)
    rules += verify_rules(sources, os.path.join(args.fixture, "golden_repo"))
    with open(args.out, "w") as handle:
        json.dump({"rules": rules}, handle, indent=1)
        handle.write("\n")
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
