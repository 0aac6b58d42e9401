import argparse
import os
import sys

import yaml

# Add current directory to python path to allow imports
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

from app.logger import setup_logging, get_logger
from app.repositories.base_repository import BaseRepository
from app.services.testbed_service import ENVIRONMENTS, make_env, schema_for

setup_logging()
logger = get_logger("seed_data")


def write_yaml(path: str, payload) -> None:
    BaseRepository(path).write_bytes(yaml.safe_dump(payload, sort_keys=False).encode("utf-8"))
    logger.info(f"Wrote {path}")


def seed_demo_files(directory: str) -> None:
    """Environment, schema, search and campaign files to start experimenting from."""
    logger.info("Writing demo inputs...")

    # 1. One environment file and one feature schema per built-in testbed
    for name in ENVIRONMENTS:
        env = make_env(name)
        write_yaml(os.path.join(directory, f"{name}.env.yaml"), {"env": env.model_dump(mode="json")})
        write_yaml(os.path.join(directory, f"{name}.schema.yaml"), schema_for(env).model_dump(mode="json", exclude_none=True))

    # 2. Search settings of the AGE-MOEA / Euclidean / knee approach
    write_yaml(
        os.path.join(directory, "search.yaml"),
        {
            "test_runs": 10,
            "generations": 50,
            "population_size": 50,
            "crossover_rate": 0.75,
            "tolerance": 5e-6,
            "n_last": 10,
            "reference_point": [1.2, 20.2],
            "algorithm": "agemoea",
            "diversity": "euclidean",
            "selection": "knee",
            "seed": 0,
        },
    )

    # 3. A campaign comparing the multi-objective approaches with the baseline
    approaches = [
        {"name": "agemoea-euclidean-knee", "algorithm": "agemoea", "diversity": "euclidean", "selection": "knee"},
        {"name": "nsga2-pca-knee", "algorithm": "nsga2", "diversity": "pca", "selection": "knee"},
        {"name": "nsga2-euclidean-max-o1", "algorithm": "nsga2", "diversity": "euclidean", "selection": "max_o1"},
        {"name": "baseline-ga", "algorithm": "ga"},
    ]
    write_yaml(
        os.path.join(directory, "campaign.yaml"),
        {
            "env": "parking",
            "approaches": approaches,
            "seeds": list(range(20)),
            "search": {"test_runs": 10, "generations": 20, "population_size": 30},
            "training_samples": 1000,
            "hyper": {"hidden": [64], "epochs": 200},
        },
    )
    logger.info("Demo inputs written.")


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description="Write demo environment, schema, search and campaign files.")
    parser.add_argument("--out", default="demo", help="Target directory")
    seed_demo_files(parser.parse_args().out)
