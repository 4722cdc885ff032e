"""Centralized defaults for the prioritization toolkit"""


class Config:
    # Reproducibility
    DEFAULT_SEED = 42
    DEFAULT_THREADS = 1

    # Activation graph
    DEFAULT_K = 4
    DEFAULT_CNF_LAYERS = 2
    DEFAULT_AGGREGATION = "sum"
    AGGREGATIONS = ("sum", "max", "mean")
    CHUNK_SIZE = 512  # cases per feature-extraction chunk
    EXPORT_THRESHOLD = 0.4

    # Ranking model (boosted trees)
    LEARNING_RATE = 0.1
    COLSAMPLE_BYTREE = 0.3
    MAX_DEPTH = 5
    N_ESTIMATORS = 100
    REG_LAMBDA = 1.0
    GAMMA = 0.0

    # Desk-scale protocol
    BALANCE_TARGET = 200
    TEST_NORMAL = 800
    TEST_FAULT = 200

    # Full-scale protocol
    FULL_BALANCE_TARGET = 5000
    FULL_TEST_NORMAL = 8000
    FULL_TEST_FAULT = 2000

    # Evaluation
    RAUC_CUTOFFS = (100, 500, 1000, None)  # None = ALL
    BENCHMARK_REPEATS = 5

    # Fixture trainer
    TRAIN_EPOCHS = 50
    TRAIN_LR = 0.1
    TRAIN_BATCH_SIZE = 32

    # Methods
    SUPERVISED_METHODS = ("actgraph", "act")
    UNSUPERVISED_METHODS = ("gini", "mcp", "dsa")
    METHODS = SUPERVISED_METHODS + UNSUPERVISED_METHODS
