"""Command-line entry points: graph/data generation, training, evaluation,
gradient checking, serving, and a terminal chat REPL."""

from __future__ import annotations

import json
import os
import sys

import click
import numpy as np

from . import dialogue as D
from . import encoder as E
from . import gateway as GW
from . import graph as G
from . import reasoner as R
from . import tensor as T
from . import training as TR

CONFIG_ENV = "INTENTDIAL_CONFIG"


def _emit(payload: dict, as_json: bool):
    if as_json:
        click.echo(json.dumps(payload, sort_keys=True))
    else:
        for k, v in payload.items():
            click.echo(f"{k}: {v}")


def _load_env_config() -> dict:
    path = os.environ.get(CONFIG_ENV)
    if not path:
        return {}
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


@click.group()
def main():
    """Intent identification by learned walks over a typed intent graph."""


@main.command("gen-graph")
@click.option("--kinds", default="product,aspect,demand", show_default=True,
              help="Comma-separated key-kind names, start kind first.")
@click.option("--features-per-kind", default=4, show_default=True)
@click.option("--queries", default=20, show_default=True)
@click.option("--distractors", default=2, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path())
@click.option("--json", "as_json", is_flag=True)
def gen_graph(kinds, features_per_kind, queries, distractors, seed, out, as_json):
    """Generate a synthetic intent graph."""
    spec = G.GeneratorSpec(
        kinds=[k.strip() for k in kinds.split(",") if k.strip()],
        features_per_kind=features_per_kind,
        n_queries=queries,
        distractors_per_kind=distractors,
    )
    g = G.synthesize_graph(spec, seed)
    G.save(g, out)
    _emit({"path": out, "entities": len(g.nodes), "queries": g.n_queries}, as_json)


@main.command("gen-data")
@click.option("--graph", "graph_path", required=True, type=click.Path(exists=True))
@click.option("--count", default=2000, show_default=True)
@click.option("--min-turns", default=1, show_default=True)
@click.option("--max-turns", default=3, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path())
@click.option("--json", "as_json", is_flag=True)
def gen_data(graph_path, count, min_turns, max_turns, seed, out, as_json):
    """Generate synthetic multi-turn dialogues for a graph."""
    g = G.load(graph_path)
    samples = TR.synthesize_dialogues(g, count, (min_turns, max_turns), seed)
    TR.save_dataset(samples, out)
    _emit({"path": out, "samples": len(samples)}, as_json)


@main.command("train")
@click.option("--graph", "graph_path", required=True, type=click.Path(exists=True))
@click.option("--data", "data_path", required=True, type=click.Path(exists=True))
@click.option("--val-data", "val_path", type=click.Path(exists=True))
@click.option("--epochs", default=10, show_default=True)
@click.option("--batch-size", default=16, show_default=True)
@click.option("--lr", default=4e-3, show_default=True)
@click.option("--rollouts", default=20, show_default=True)
@click.option("--horizon", default=5, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--target-accuracy", type=float, default=None,
              help="Stop once validation final-turn accuracy reaches this.")
@click.option("--out", required=True, type=click.Path(), help="Checkpoint path; vocab saved alongside.")
@click.option("--json", "as_json", is_flag=True)
def train_cmd(graph_path, data_path, val_path, epochs, batch_size, lr, rollouts,
              horizon, seed, target_accuracy, out, as_json):
    """Train the policy and encoder with REINFORCE."""
    g = G.load(graph_path)
    samples = TR.load_dataset(data_path)
    val = TR.load_dataset(val_path) if val_path else None
    overrides = _load_env_config()
    cfg = TR.TrainConfig(
        learning_rate=lr, epochs=epochs, batch_size=batch_size, n_rollouts=rollouts,
        horizon=horizon, seed=seed, target_accuracy=target_accuracy,
        **{k: v for k, v in overrides.items() if k in TR.TrainConfig.__dataclass_fields__
           and k not in ("learning_rate", "epochs", "batch_size", "n_rollouts", "horizon", "seed")},
    )
    if epochs == 0:
        vocab = TR.build_vocabulary(samples)
        rng = np.random.default_rng(seed)
        store = TR.init_params(g, vocab, cfg, rng)
        report = TR.EvalReport()
    else:
        store, vocab, report = TR.train(
            samples, g, cfg, val_samples=val, log=None if as_json else click.echo
        )
    T.save_checkpoint(store, out, seed, cfg.hyper_dict())
    vocab.save(out + ".vocab.json")
    _emit(
        {
            "checkpoint": out,
            "vocab": out + ".vocab.json",
            "final_accuracy": report.final_accuracy,
            "intermediate_accuracy": report.intermediate_accuracy,
            "epochs_run": report.epochs_run,
            "loss_trace": report.loss_trace,
        },
        as_json,
    )


@main.command("eval")
@click.option("--graph", "graph_path", required=True, type=click.Path(exists=True))
@click.option("--data", "data_path", required=True, type=click.Path(exists=True))
@click.option("--checkpoint", required=True, type=click.Path(exists=True))
@click.option("--vocab", "vocab_path", type=click.Path(exists=True))
@click.option("--rollouts", default=20, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--json", "as_json", is_flag=True)
def eval_cmd(graph_path, data_path, checkpoint, vocab_path, rollouts, seed, as_json):
    """Evaluate a checkpoint on a dataset."""
    g = G.load(graph_path)
    samples = TR.load_dataset(data_path)
    store, _ckpt_seed, hyper = T.load_checkpoint(checkpoint)
    vocab = E.Vocabulary.load(vocab_path or checkpoint + ".vocab.json")
    cfg = TR.TrainConfig(seed=seed, **{k: v for k, v in hyper.items()
                                       if k in TR.TrainConfig.__dataclass_fields__ and k != "seed"})
    report = TR.evaluate(samples, store, vocab, g, cfg, k=rollouts, seed=seed)
    _emit(json.loads(report.to_json()), as_json)


@main.command("grad-check")
@click.option("--seed", default=0, show_default=True)
@click.option("--json", "as_json", is_flag=True)
def grad_check(seed, as_json):
    """Finite-difference check of every differentiable operation."""
    from .gradcheck import run_grad_suite

    results = run_grad_suite(seed)
    worst = max(results.values())
    _emit({"max_relative_error": worst, "checks": results, "ok": worst < 1e-4}, as_json)
    if worst >= 1e-4:
        sys.exit(1)


@main.command("serve")
@click.option("--graph", "graph_path", required=True, type=click.Path(exists=True))
@click.option("--checkpoint", required=True, type=click.Path(exists=True))
@click.option("--vocab", "vocab_path", type=click.Path(exists=True))
@click.option("--templates", "templates_path", type=click.Path(exists=True))
@click.option("--static-dir", type=click.Path(exists=True), help="Built UI bundle to serve at /.")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
@click.option("--seed", default=0, show_default=True)
def serve(graph_path, checkpoint, vocab_path, templates_path, static_dir, host, port, seed):
    """Serve the session and visualization API over HTTP."""
    import uvicorn

    snapshot = GW.load_snapshot(
        graph_path, checkpoint, vocab_path or checkpoint + ".vocab.json", templates_path
    )
    app = GW.create_app(snapshot, global_seed=seed, static_dir=static_dir)
    uvicorn.run(app, host=host, port=port)


@main.command("chat")
@click.option("--graph", "graph_path", required=True, type=click.Path(exists=True))
@click.option("--checkpoint", required=True, type=click.Path(exists=True))
@click.option("--vocab", "vocab_path", type=click.Path(exists=True))
@click.option("--templates", "templates_path", type=click.Path(exists=True))
@click.option("--seed", default=0, show_default=True)
def chat(graph_path, checkpoint, vocab_path, templates_path, seed):
    """Interactive terminal conversation."""
    snapshot = GW.load_snapshot(
        graph_path, checkpoint, vocab_path or checkpoint + ".vocab.json", templates_path
    )
    manager = D.DialogueManager(
        snapshot.graph, snapshot.store, snapshot.vocab, snapshot.enc_cfg,
        snapshot.pol_cfg, snapshot.templates, k_rollouts=snapshot.k_rollouts,
    )
    session = D.Session(session_id="local", rng=GW.session_rng(seed, "local"))
    click.echo("intentdial chat (blank line to quit)")
    while session.phase not in ("handed_off", "closed"):
        text = click.prompt("you", default="", show_default=False)
        if not text.strip():
            break
        try:
            outcome = manager.handle(session, text)
        except E.EmptyUtterance:
            click.echo("(please type something)")
            continue
        click.echo(f"bot: {outcome.response}")
        if outcome.trajectory is not None:
            path = " -> ".join(outcome.trajectory.entities)
            click.echo(f"     path: {path}")
    click.echo("bye")


def run(argv=None) -> int:
    try:
        main.main(args=argv, standalone_mode=False)
        return 0
    except click.UsageError:
        return 2
    except click.exceptions.Exit as e:
        return int(e.exit_code)
    except SystemExit as e:
        return int(e.code or 0)
    except Exception as e:  # runtime failure
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(run())
