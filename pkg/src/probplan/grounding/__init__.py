from .oracle import (
    CachedGrounder,
    Grounder,
    NoisyGrounder,
    NoisyOracleConfig,
    OracleGrounder,
    ground_demo_goal,
    noisy_ground,
    oracle_ground,
)
from .sgn import (
    Adam,
    ModularSgn,
    SgnGrounder,
    TrainConfig,
    TrainHistory,
    atom_accuracy,
    encode_dataset,
    gradient_check,
    load_checkpoint,
    load_dataset,
    save_checkpoint,
    save_dataset,
    train_sgn,
)

__all__ = [
    "Adam",
    "CachedGrounder",
    "Grounder",
    "ModularSgn",
    "NoisyGrounder",
    "NoisyOracleConfig",
    "OracleGrounder",
    "SgnGrounder",
    "TrainConfig",
    "TrainHistory",
    "atom_accuracy",
    "encode_dataset",
    "gradient_check",
    "ground_demo_goal",
    "load_checkpoint",
    "load_dataset",
    "noisy_ground",
    "oracle_ground",
    "save_checkpoint",
    "save_dataset",
    "train_sgn",
]
