"""Router layer for the ``train`` command."""
import argparse

import numpy as np

from app.logger import get_logger
from app.repositories.model_repository import ModelRepository
from app.repositories.training_log_repository import TrainingLogRepository
from app.routers.common import add_env_argument, load_env, new_manifest
from app.schemas.surrogate import TrainingHyperParams
from app.services.scenario_service import encode_many
from app.services.surrogate_service import TrainingSet, train
from app.services.testbed_service import schema_for

logger = get_logger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("train", help="Train the surrogate failure classifier on a training log")
    parser.add_argument("--log", required=True, help="Training log written by gen-data")
    add_env_argument(parser, required=False)
    parser.add_argument("--hidden", type=int, nargs="+", default=[64], help="Hidden layer sizes")
    parser.add_argument("--learning-rate", type=float, default=0.05)
    parser.add_argument("--epochs", type=int, default=200)
    parser.add_argument("--batch-size", type=int, default=32)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", required=True, help="Model file (JSON)")
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    hyper = TrainingHyperParams(
        hidden=args.hidden,
        learning_rate=args.learning_rate,
        epochs=args.epochs,
        batch_size=args.batch_size,
        seed=args.seed,
    )
    log_repo = TrainingLogRepository(args.log)
    env = load_env(args.env or log_repo.env_name())
    schema = schema_for(env)
    log = log_repo.load(schema)
    manifest = new_manifest("train", {"env": env.kind, "hyper": hyper.model_dump()}, args.seed, [args.log])

    data = TrainingSet(inputs=encode_many(log.configs, schema), labels=np.asarray(log.labels, dtype=np.float64))
    model, report = train(data, hyper)
    repo = ModelRepository(args.out)
    repo.save(model)
    manifest.config["report"] = report.model_dump(exclude={"loss_history"})
    repo.write_manifest(manifest.model_copy(update={"outputs": [args.out]}))
    logger.info("Surrogate trained: accuracy=%.3f final_loss=%.4f -> %s", report.accuracy, report.final_loss, args.out)
    print(f"train accuracy: {report.accuracy:.4f}")
    return 0
