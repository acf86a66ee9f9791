import numpy as np
import pytest

from liftmapdetect.data import SyntheticSpec, generate
from liftmapdetect.model import EpsilonModel
from liftmapdetect.schedule import make_linear_schedule
from liftmapdetect.training import TrainConfig, train


@pytest.fixture(scope="session")
def tiny_setup():
    """A small, quickly trained model for behavioral tests: 8x8 stripes,
    T=20, narrow network."""
    images = generate(SyntheticSpec(family="stripes", side=8, count=32, seed=5)).images
    model = EpsilonModel(channels=1, widths=(8, 8), temb_dim=8, seed=5)
    schedule = make_linear_schedule(20, 5e-3, 0.3)
    config = TrainConfig(epochs=30, batch_size=8, timesteps=20,
                         beta_start=5e-3, beta_end=0.3, seed=5)
    losses = train(model, images, config, schedule)
    return {"model": model, "schedule": schedule, "images": images,
            "losses": losses}
