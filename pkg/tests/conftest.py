import numpy as np
import pytest

from crtpredict.evaluation import EvaluationData
from crtpredict.ingest import SyntheticSpec, generate_synthetic_cohort
from crtpredict.models import ImageBranchConfig, ModelConfig, OptimizerConfig


@pytest.fixture(scope="session")
def small_signal_cohort():
    """40 patients, strong tabular signal in QRSd/EDV plus a TR image bump."""
    spec = SyntheticSpec(
        n_patients=40,
        responder_fraction=0.5,
        image_signal_quadrant="TR",
        image_signal_strength=0.8,
        tabular_signal_features=("QRSd", "EDV"),
        tabular_signal_strength=2.5,
        seed=11,
    )
    return generate_synthetic_cohort(spec)


@pytest.fixture(scope="session")
def small_signal_data(small_signal_cohort):
    cohort, maps = small_signal_cohort
    return EvaluationData.from_cohort(cohort, maps)


@pytest.fixture(scope="session")
def tiny_dl_config():
    return ModelConfig(
        image_branch=ImageBranchConfig(weights_source="random", trainable_blocks=0, init_seed=7),
        optimizer=OptimizerConfig(learning_rate=1e-3, batch_size=8, max_epochs=15,
                                  early_stop_patience=5),
        seed=5,
    )


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
